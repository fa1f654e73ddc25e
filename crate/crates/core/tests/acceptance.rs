//! One PASS/FAIL line per acceptance criterion. Runs as a plain binary so the
//! summary is always printed; exits non-zero if any criterion fails.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use icelut::engine::{bench, count_ops, identity_bundle, retouch, verify_equivalence, BenchOptions};
use icelut::imaging::{bilinear_downsample, ImageU8};
use icelut::lutgen::{bake, bundle_storage, feature_to_index, naive_lut_size, quantize_feature, LutDims, QuantSpec};
use icelut::metrics::{delta_e, psnr, ssim};
use icelut::model::ablation::{train_pixel_mapper, ChannelMode};
use icelut::model::{evaluate_psnr, network_eval_count, train, trilinear_map, Lattice3D, ModelConfig, TrainConfig};
use icelut::synth::{smooth_noise, synth_pairs, synth_pairs_textured, Transform};
use num_bigint::BigUint;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn within_time(start: Instant, limit_s: f64, detail: String) -> Outcome {
    let secs = start.elapsed().as_secs_f64();
    if secs < limit_s {
        Ok(detail)
    } else {
        Err(format!("{detail}; took {secs:.1}s, limit {limit_s}s"))
    }
}

fn pairs_of(p: Vec<icelut::synth::SynthPair>) -> Vec<(ImageU8, ImageU8)> {
    p.into_iter().map(|p| (p.input, p.target)).collect()
}

fn quantization_sweep() -> Outcome {
    let start = Instant::now();
    let q = QuantSpec::new(2.0, 16.0).map_err(|e| e.to_string())?;
    let mut hit = [false; 64];
    for i in 0..=40_000i64 {
        let u = i as f64 / 1000.0 - 20.0;
        // integer oracle on the millis grid: k = floor(2u) = floor(2i/1000) - 40
        let k = ((2 * i).div_euclid(1000) - 40).clamp(-32, 31);
        let expect_q = k as f64 / 2.0;
        let expect_i = (k + 32) as usize;
        let got_q = quantize_feature(u, &q);
        let got_i = feature_to_index(got_q, &q);
        ensure(got_q == expect_q, format!("u={u}: Q {got_q}, expected {expect_q}"))?;
        ensure(got_i == expect_i, format!("u={u}: I {got_i}, expected {expect_i}"))?;
        ensure(got_i < 64, format!("index {got_i} out of range"))?;
        hit[got_i] = true;
    }
    let hits = hit.iter().filter(|&&h| h).count();
    ensure(hits == 64, format!("only {hits}/64 indices hit"))?;
    within_time(start, 1.0, "40001 samples, 64/64 indices hit".into())
}

fn storage_exactness() -> Outcome {
    let model = icelut::TrainableModel::new(ModelConfig::default(), 0).map_err(|e| e.to_string())?;
    let default = bake(&model, &QuantSpec::default()).map_err(|e| e.to_string())?;
    let wide = bake(&model, &QuantSpec::new(4.0, 32.0).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    let a = bundle_storage(&default).weight_lut_bytes;
    let b = bundle_storage(&wide).weight_lut_bytes;
    ensure(a == default.weights.values().len() as u64, "report disagrees with stored table")?;
    ensure(a == 409_600 && a / 1024 == 400, format!("default Weight LUT {a} B"))?;
    ensure(b == 6_553_600 && b / 1024 == 6_400, format!("wide Weight LUT {b} B"))?;

    let pow2 = |e: u32| BigUint::from(2u32).pow(e);
    ensure(naive_lut_size(1, 1) == BigUint::from(256u32), "1x1x1 row")?;
    ensure(naive_lut_size(1, 3) == pow2(24), "1x1x3 row (16 MiB)")?;
    ensure(naive_lut_size(2, 1) == pow2(32), "2x2x1 row (4 GiB)")?;
    let big = naive_lut_size(2, 3);
    ensure(big == pow2(96), "2x2x3 row")?;
    let tib = (&big >> 40u32).to_string().parse::<f64>().map_err(|e| e.to_string())?;
    ensure(format!("{tib:.2e}") == "7.21e16", format!("2x2x3 row is {tib:.3e} TiB"))?;
    for k in 1..=4u32 {
        for c in 1..=4u32 {
            ensure(naive_lut_size(k, c) == pow2(8 * k * k * c), format!("general row k={k} c={c}"))?;
        }
    }
    Ok(format!("Weight LUT {a} B / {b} B; 5 size rows exact"))
}

fn conversion_fidelity() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let images: Vec<ImageU8> = (0..5).map(|_| smooth_noise(64, 48, &mut rng)).collect();
    let mut worst_w = 0.0f64;
    let mut worst_px = 0u8;
    for seed in 0..10 {
        let model = common::random_model(ModelConfig::default(), seed, 1e-3, 0.05);
        let bundle = bake(&model, &QuantSpec::default()).map_err(|e| e.to_string())?;
        let report = verify_equivalence(&model, &bundle, &images, 32).map_err(|e| e.to_string())?;
        ensure(
            report.within_bounds,
            format!(
                "model {seed}: weight dev {:.3e} (bound {:.3e}), pixel dev {}",
                report.max_weight_deviation, report.weight_bound, report.max_pixel_deviation
            ),
        )?;
        worst_w = worst_w.max(report.max_weight_deviation / report.weight_bound);
        worst_px = worst_px.max(report.max_pixel_deviation);
        let before = network_eval_count();
        for img in &images {
            retouch(&bundle, img, 32).map_err(|e| e.to_string())?;
        }
        let evals = network_eval_count() - before;
        ensure(evals == 0, format!("LUT path ran {evals} network evaluations"))?;
    }
    within_time(
        start,
        60.0,
        format!("10 models x 5 images, worst weight dev {worst_w:.2} of bound, worst pixel dev {worst_px}, 0 network evals"),
    )
}

fn gradient_correctness() -> Outcome {
    let start = Instant::now();
    let model = common::random_model(common::tiny_config(1), 5, 0.3, 0.1);
    let full = common::random_image(8, 8, 1);
    let target = common::random_image(8, 8, 2);
    let check = common::check_gradients(&model, &full, &target);
    if let Some(first) = check.failures.first() {
        return Err(format!("{} of {} params off, e.g. {first}", check.failures.len(), check.params));
    }
    ensure(
        check.unverifiable.is_empty(),
        format!("no kink-free stencil for params {:?}", check.unverifiable),
    )?;
    within_time(
        start,
        120.0,
        format!(
            "{} params ({} one-sided), worst relative error {:.2e}",
            check.params, check.one_sided, check.worst_relative
        ),
    )
}

fn desk_scale_learning() -> Outcome {
    let start = Instant::now();
    let t: Transform = "gamma:0.8+channel-mix".parse().map_err(|e: icelut::synth::SynthError| e.to_string())?;
    let train_set = pairs_of(synth_pairs(50, 64, &t, 1));
    let test_set = pairs_of(synth_pairs(10, 64, &t, 2));
    let cfg = TrainConfig {
        epochs: 40,
        ..TrainConfig::default()
    };
    let out = train(&train_set, ModelConfig::default(), &cfg).map_err(|e| e.to_string())?;
    ensure(out.steps == 2000, format!("{} steps", out.steps))?;
    let net = evaluate_psnr(&out.model, &test_set, 32).map_err(|e| e.to_string())?;
    let bundle = bake(&out.model, &QuantSpec::default()).map_err(|e| e.to_string())?;
    let mut lut = 0.0;
    for (input, target) in &test_set {
        let img = retouch(&bundle, input, 32).map_err(|e| e.to_string())?;
        lut += psnr(&img, target).map_err(|e| e.to_string())?;
    }
    lut /= test_set.len() as f64;
    let drop = net - lut;
    let detail = format!("network {net:.2} dB, LUT {lut:.2} dB, bake drop {drop:.2} dB");
    ensure(net >= 35.0, format!("{detail}; needs >= 35 dB"))?;
    ensure(drop <= 0.1, format!("{detail}; drop must be <= 0.1 dB"))?;
    within_time(start, 600.0, detail)
}

fn channel_vs_spatial() -> Outcome {
    let train_set = pairs_of(synth_pairs(8, 32, &Transform::ChannelSwap, 21));
    let test_set = pairs_of(synth_pairs(4, 32, &Transform::ChannelSwap, 22));
    let cfg = TrainConfig {
        learning_rate: 1e-3,
        seed: 3,
        ..TrainConfig::default()
    };
    let hidden = [16, 16];
    let run = |mode| {
        train_pixel_mapper(&train_set, mode, &hidden, 400, &cfg)
            .map(|(m, _)| m.l1(&test_set))
            .map_err(|e| e.to_string())
    };
    let joint = run(ChannelMode::Joint)?;
    let single = run(ChannelMode::PerChannel)?;
    let detail = format!("held-out L1: 3-channel {joint:.4}, 1-channel {single:.4}");
    ensure(joint < single, detail.clone())?;
    Ok(detail)
}

fn resolution_robustness() -> Outcome {
    let train_set = pairs_of(synth_pairs_textured(16, 256, 0.08, &Transform::Exposure, 11));
    let test_set = pairs_of(synth_pairs_textured(8, 256, 0.08, &Transform::Exposure, 12));
    let cfg = TrainConfig {
        epochs: 40,
        learning_rate: 2e-3,
        ..TrainConfig::default()
    };
    let degradation = |first_kernel: usize| -> Result<(f64, f64), String> {
        let model_cfg = ModelConfig {
            hidden_widths: vec![8; 5],
            train_resolution: 256,
            first_kernel,
            ..ModelConfig::default()
        };
        let model = train(&train_set, model_cfg, &cfg).map_err(|e| e.to_string())?.model;
        let hi = evaluate_psnr(&model, &test_set, 256).map_err(|e| e.to_string())?;
        let lo = evaluate_psnr(&model, &test_set, 32).map_err(|e| e.to_string())?;
        Ok((hi, hi - lo))
    };
    let (p_hi, p_drop) = degradation(1)?;
    let (s_hi, s_drop) = degradation(3)?;
    let detail = format!(
        "pointwise {p_hi:.2} dB, 256->32 drop {p_drop:.2} dB; 3x3 {s_hi:.2} dB, drop {s_drop:.2} dB"
    );
    ensure(p_drop.abs() < 0.5, format!("{detail}; pointwise must differ by < 0.5 dB"))?;
    ensure(s_drop > p_drop, format!("{detail}; 3x3 must degrade more"))?;
    Ok(detail)
}

fn speed_ratio() -> Outcome {
    let model = common::random_model(ModelConfig::default(), 4, 1e-3, 0.05);
    let bundle = bake(&model, &QuantSpec::default()).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let images: Vec<ImageU8> = (0..4).map(|_| smooth_noise(128, 96, &mut rng)).collect();
    let opts = BenchOptions::default();
    let report = bench(&bundle, &images, &opts, Some(&model)).map_err(|e| e.to_string())?;
    let ratio = report.speedup.ok_or("no network timing")?;
    let ops = count_ops(&bundle, (32, 32), (128, 96)).map_err(|e| e.to_string())?;
    let detail = format!(
        "LUT {:.4} ms vs network {:.4} ms ({ratio:.1}x); weight-stage ops {}",
        report.weight_stage_ms.median,
        report.network_weight_stage_ms.as_ref().map_or(f64::NAN, |t| t.median),
        ops.weight_stage_ops
    );
    ensure(ratio >= 10.0, format!("{detail}; needs >= 10x"))?;
    ensure(ops.weight_stage_ops <= 30_000, format!("{detail}; needs <= 30000 ops"))?;
    Ok(detail)
}

fn trilinear_and_metric_identities() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut images = vec![common::random_image(31, 17, 3)];
    images.push(smooth_noise(40, 40, &mut rng));
    images.push(ImageU8::from_fn(256, 1, |x, _| [x as u8, 255 - x as u8, (x * 7 % 256) as u8]));
    let mut worst = 0.0f64;
    for bins in [2, 17, 33] {
        let lattice: Lattice3D<f64> = Lattice3D::identity(bins);
        for img in &images {
            for (o, &v) in trilinear_map(&lattice, img).iter().zip(img.data()) {
                worst = worst.max((o - v as f64 / 255.0).abs());
            }
        }
    }
    ensure(worst <= 1e-6, format!("identity lattice deviates by {worst:.3e}"))?;

    let dims = LutDims {
        channels: 10,
        groups: 5,
        group_len: 2,
        basis_luts: 20,
        lattice_bins: 17,
    };
    let id = identity_bundle(dims, QuantSpec::default()).map_err(|e| e.to_string())?;
    for img in &images {
        let out = retouch(&id, img, 32).map_err(|e| e.to_string())?;
        ensure(&out == img, "identity bundle changed an image")?;
    }

    for img in &images[..2] {
        let p = psnr(img, img).map_err(|e| e.to_string())?;
        let s = ssim(img, img).map_err(|e| e.to_string())?;
        let d = delta_e(img, img).map_err(|e| e.to_string())?;
        ensure(p == f64::INFINITY, format!("PSNR of equal images {p}"))?;
        ensure(s == 1.0, format!("SSIM of equal images {s}"))?;
        ensure(d == 0.0, format!("dE of equal images {d}"))?;
    }
    let black = ImageU8::filled(8, 8, [0, 0, 0]);
    let white = ImageU8::filled(8, 8, [255, 255, 255]);
    let bw = delta_e(&black, &white).map_err(|e| e.to_string())?;
    ensure(bw == 100.0, format!("dE(black, white) = {bw}"))?;
    let small = bilinear_downsample(&images[1], 32, 32);
    ensure(psnr(&small, &small).map_err(|e| e.to_string())?.is_infinite(), "PSNR at working size")?;
    Ok(format!("max identity deviation {worst:.1e}; PSNR inf, SSIM 1, dE 0, dE(black, white) 100"))
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("quantization sweep", quantization_sweep),
        ("storage exactness", storage_exactness),
        ("conversion fidelity", conversion_fidelity),
        ("gradient correctness", gradient_correctness),
        ("desk-scale learning", desk_scale_learning),
        ("channel vs spatial", channel_vs_spatial),
        ("resolution robustness", resolution_robustness),
        ("speed ratio", speed_ratio),
        ("trilinear and metric identities", trilinear_and_metric_identities),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (name, run) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            Err(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("[PASS] {name} ({secs:.1}s): {detail}"),
            Err(detail) => {
                failed += 1;
                println!("[FAIL] {name} ({secs:.1}s): {detail}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
