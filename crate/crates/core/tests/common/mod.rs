#![allow(dead_code)]

use icelut::imaging::ImageU8;
use icelut::model::{compute_gradients, kink_signature, raw_l1, Lattice3D, ModelConfig, TrainableModel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn random_image(width: usize, height: usize, seed: u64) -> ImageU8 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ImageU8::from_fn(width, height, |_, _| [rng.gen(), rng.gen(), rng.gen()])
}

/// Seeded initialization with the head and every basis lattice perturbed, so
/// all parameter groups matter to the output.
pub fn random_model(config: ModelConfig, seed: u64, head_noise: f64, basis_noise: f64) -> TrainableModel {
    let mut model = TrainableModel::new(config, seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(7919).wrapping_add(1));
    for g in &mut model.head.groups {
        g.weight.mapv_inplace(|w| w + rng.gen_range(-head_noise..head_noise));
        g.bias.mapv_inplace(|b| b + rng.gen_range(-head_noise..head_noise));
    }
    for lattice in &mut model.basis {
        for v in lattice.data_mut() {
            *v += rng.gen_range(-basis_noise..basis_noise);
        }
    }
    model
}

pub fn tiny_config(first_kernel: usize) -> ModelConfig {
    ModelConfig {
        feature_channels: 4,
        groups: 2,
        group_len: 2,
        basis_luts: 3,
        lattice_bins: 3,
        hidden_widths: vec![5, 6, 7, 6, 5],
        train_resolution: 8,
        first_kernel,
    }
}

pub struct GradCheck {
    pub params: usize,
    pub worst_relative: f64,
    pub failures: Vec<String>,
    /// Parameters checked with a one-sided stencil because a central probe crossed a kink.
    pub one_sided: usize,
    /// Parameters with no kink-free stencil at all.
    pub unverifiable: Vec<usize>,
}

/// Relative criterion applies when either gradient is at least this large.
pub const REL_FLOOR: f64 = 1e-6;
pub const REL_TOL: f64 = 1e-4;
/// Below the floor, the absolute difference must stay under this.
pub const ABS_TOL: f64 = 1e-10;
/// Large enough that round-off in the loss stays far below `ABS_TOL`.
pub const STEP: f64 = 1e-5;

/// Compare every analytic gradient with a finite difference in f64.
///
/// The loss is piecewise smooth: ReLU gates and the `|.|` of L1 have kinks.
/// The analytic gradient belongs to the piece containing the parameters, so a
/// probe whose activation pattern differs is discarded. Central differences
/// are used when both probes stay on the piece, otherwise the second-order
/// one-sided stencil `(-3f(0) + 4f(±h) - f(±2h)) / ±2h` on a clean side.
pub fn check_gradients(model: &TrainableModel, full: &ImageU8, target: &ImageU8) -> GradCheck {
    let working = model.working_image(full);
    let analytic = compute_gradients(model, full, &working, target).unwrap().values;
    let base = model.flatten();
    let reference = kink_signature(model, full, &working, target).unwrap();
    let f0 = raw_l1(model, full, &working, target).unwrap();
    let names = model.param_groups();
    let mut probe = model.clone();
    let mut out = GradCheck {
        params: base.len(),
        worst_relative: 0.0,
        failures: Vec::new(),
        one_sided: 0,
        unverifiable: Vec::new(),
    };
    for i in 0..base.len() {
        // loss at base + delta along parameter i, or None off the piece
        let mut eval = |delta: f64| {
            let mut p = base.clone();
            p[i] += delta;
            probe.unflatten(&p).unwrap();
            (kink_signature(&probe, full, &working, target).unwrap() == reference)
                .then(|| raw_l1(&probe, full, &working, target).unwrap())
        };
        let h = STEP;
        let numeric = match (eval(h), eval(-h)) {
            (Some(up), Some(down)) => Some((up - down) / (2.0 * h)),
            (up, down) => {
                out.one_sided += 1;
                let side = |first: Option<f64>, sign: f64, eval: &mut dyn FnMut(f64) -> Option<f64>| {
                    let f1 = first?;
                    let f2 = eval(2.0 * sign * h)?;
                    Some((-3.0 * f0 + 4.0 * f1 - f2) / (2.0 * sign * h))
                };
                side(up, 1.0, &mut eval).or_else(|| side(down, -1.0, &mut eval))
            }
        };
        let Some(numeric) = numeric else {
            out.unverifiable.push(i);
            continue;
        };
        let a = analytic[i];
        let scale = a.abs().max(numeric.abs());
        let diff = (a - numeric).abs();
        let ok = if scale >= REL_FLOOR {
            let rel = diff / scale;
            out.worst_relative = out.worst_relative.max(rel);
            rel <= REL_TOL
        } else {
            diff <= ABS_TOL
        };
        if !ok {
            let group = names.iter().find(|g| g.range.contains(&i)).map_or("?", |g| g.name);
            out.failures.push(format!("param {i} ({group}): analytic {a:.6e} numeric {numeric:.6e}"));
        }
    }
    out
}

pub fn identity_lattice_f64(bins: usize) -> Lattice3D<f64> {
    Lattice3D::identity(bins)
}
