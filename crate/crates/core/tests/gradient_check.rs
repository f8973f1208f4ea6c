mod common;

use common::{gradient_instance, GRAD_REL_TOL};

#[test]
fn analytic_gradients_match_finite_differences() {
    for seed in 0..100 {
        let worst = gradient_instance(seed);
        assert!(worst < GRAD_REL_TOL, "seed {seed}: relative error {worst:e}");
    }
}
