//! Independent oracles shared by the integration suites.

#![allow(dead_code)]

use edgecache::sac::agent::{actor_loss, critic_loss};
use edgecache::sac::Mlp;
use edgecache::SimRng;
use ndarray::Array2;

/// Central finite-difference step.
pub const FD_STEP: f64 = 1e-5;
/// Allowed relative error between analytic and numeric gradients.
pub const GRAD_REL_TOL: f64 = 1e-4;
/// Gradients smaller than this in both routes are compared absolutely.
pub const GRAD_FLOOR: f64 = 1e-6;

pub fn random_matrix(rows: usize, cols: usize, scale: f64, rng: &mut SimRng) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| scale * (2.0 * rng.uniform() - 1.0))
}

/// Every parameter of `net`, perturbed one at a time, compared against the
/// analytic gradient. Returns the worst relative error.
pub fn check_gradients(
    net: &Mlp,
    analytic: &Mlp,
    loss: impl Fn(&Mlp) -> f64,
) -> f64 {
    let mut worst: f64 = 0.0;
    let mut probe = net.clone();
    let analytic_tensors: Vec<Vec<f64>> = analytic.tensors().iter().map(|t| t.to_vec()).collect();
    for (ti, grads) in analytic_tensors.iter().enumerate() {
        for (pi, &g) in grads.iter().enumerate() {
            let original = probe.tensors()[ti][pi];
            probe.tensors_mut()[ti][pi] = original + FD_STEP;
            let up = loss(&probe);
            probe.tensors_mut()[ti][pi] = original - FD_STEP;
            let down = loss(&probe);
            probe.tensors_mut()[ti][pi] = original;
            let numeric = (up - down) / (2.0 * FD_STEP);
            let denom = g.abs().max(numeric.abs()).max(GRAD_FLOOR);
            worst = worst.max((g - numeric).abs() / denom);
        }
    }
    worst
}

/// One random tiny instance (2C = 4, hidden 8) checked for the actor and
/// both critics. Returns the worst relative error across the three.
pub fn gradient_instance(seed: u64) -> f64 {
    let mut rng = SimRng::new(seed);
    let (c, batch) = (2usize, 5usize);
    let sizes = [2 * c, 8, c + 1];
    let states = random_matrix(batch, 2 * c, 2.0, &mut rng);
    let actions: Vec<usize> = (0..batch).map(|_| rng.below(c as u64 + 1) as usize).collect();
    let targets: Vec<f64> = (0..batch).map(|_| 3.0 * rng.uniform()).collect();
    let q_min = random_matrix(batch, c + 1, 1.5, &mut rng);
    let alpha = 0.05 + rng.uniform();

    let mut worst: f64 = 0.0;
    for _ in 0..2 {
        let critic = Mlp::new(&sizes, false, &mut rng).unwrap();
        let (_, grads) = critic_loss(&critic, states.view(), &actions, &targets).unwrap();
        worst = worst.max(check_gradients(&critic, &grads, |n| {
            critic_loss(n, states.view(), &actions, &targets).unwrap().0
        }));
    }
    // Random (non-zero) output layer so the softmax is not uniform.
    let actor = Mlp::new(&sizes, false, &mut rng).unwrap();
    let out = actor_loss(&actor, states.view(), &q_min, alpha).unwrap();
    worst.max(check_gradients(&actor, &out.grads, |n| {
        actor_loss(n, states.view(), &q_min, alpha).unwrap().loss
    }))
}
