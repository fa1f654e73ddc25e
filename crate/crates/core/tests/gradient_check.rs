mod common;

use common::{check_gradients, random_image, random_model, tiny_config};

fn assert_clean(kernel: usize, seed: u64) {
    let model = random_model(tiny_config(kernel), seed, 0.3, 0.1);
    let full = random_image(8, 8, seed * 2 + 1);
    let target = random_image(8, 8, seed * 2 + 2);
    let check = check_gradients(&model, &full, &target);
    assert!(check.failures.is_empty(), "{} mismatches: {:#?}", check.failures.len(), check.failures);
    assert!(check.unverifiable.is_empty(), "no kink-free stencil for {:?}", check.unverifiable);
    assert!(check.worst_relative <= common::REL_TOL);
}

#[test]
fn pointwise_gradients_match_finite_differences() {
    for seed in [5, 6, 7] {
        assert_clean(1, seed);
    }
}

#[test]
fn spatial_first_layer_gradients_match_finite_differences() {
    assert_clean(3, 5);
}

#[test]
fn gradients_cover_every_parameter_group() {
    let model = random_model(tiny_config(1), 5, 0.3, 0.1);
    let full = random_image(8, 8, 11);
    let target = random_image(8, 8, 12);
    let working = model.working_image(&full);
    let g = icelut::model::compute_gradients(&model, &full, &working, &target).unwrap();
    for group in model.param_groups() {
        let mass: f64 = g.values[group.range.clone()].iter().map(|v| v.abs()).sum();
        assert!(mass > 0.0, "group {} receives no gradient", group.name);
    }
}
