mod common;

use common::{max_rel_error, problem, Objective};

fn check(objective: Objective) {
    for seed in 0..20 {
        let err = max_rel_error(&problem(objective, seed));
        assert!(err < 1e-2, "{objective:?} seed {seed}: relative error {err:.3e}");
    }
}

#[test]
fn dense_relu_softmax_layers() {
    check(Objective::Linear);
}

#[test]
fn mse_loss() {
    check(Objective::Mse);
}

#[test]
fn cross_entropy_through_softmax() {
    check(Objective::CrossEntropy);
}

#[test]
fn bce_with_logits() {
    check(Objective::Bce);
}
