#![allow(dead_code)]

use dtle_net::fixtures::generate_random_problem;
use dtle_net::matcore::{frobenius_norm, Mat};
use dtle_net::problem::{local_gradients, local_objective, AgentEstimate, DtleProblem, LocalData};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Largest absolute gap between `local_gradients` and central differences
/// of `local_objective` with step `h`, over every entry of `X` and `Y`.
pub fn fd_gradient_gap(d: &LocalData, e: &AgentEstimate, h: f64) -> f64 {
    let (dx, dy) = local_gradients(d, e).unwrap();
    let n = d.n();
    let mut worst: f64 = 0.0;
    for r in 0..n {
        for c in 0..n {
            let mut plus = e.clone();
            let mut minus = e.clone();
            plus.x[(r, c)] += h;
            minus.x[(r, c)] -= h;
            let fd = (local_objective(d, &plus).unwrap() - local_objective(d, &minus).unwrap())
                / (2.0 * h);
            worst = worst.max((fd - dx[(r, c)]).abs());

            let mut plus = e.clone();
            let mut minus = e.clone();
            plus.y[(r, c)] += h;
            minus.y[(r, c)] -= h;
            let fd = (local_objective(d, &plus).unwrap() - local_objective(d, &minus).unwrap())
                / (2.0 * h);
            worst = worst.max((fd - dy[(r, c)]).abs());
        }
    }
    worst
}

pub fn random_mat(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Mat {
    Mat::from_fn(rows, cols, |_, _| rng.random_range(-scale..scale))
}

pub fn random_estimate(rng: &mut ChaCha8Rng, n: usize) -> AgentEstimate {
    AgentEstimate {
        x: random_mat(rng, n, n, 1.0),
        y: random_mat(rng, n, n, 1.0),
    }
}

/// Fixed-point iteration `X <- A X A' + Q`, valid for spectral radius < 1.
pub fn smith_solution(p: &DtleProblem, iters: usize) -> Mat {
    let at = p.a().transpose();
    let mut x = p.q().clone();
    for _ in 0..iters {
        x = &(&(p.a() * &x) * &at) + p.q();
    }
    x
}

pub fn relative_error(x: &Mat, reference: &Mat) -> f64 {
    frobenius_norm(&(x - reference)) / frobenius_norm(reference).max(f64::MIN_POSITIVE)
}

/// Seeded random instance with spectral radius 0.5.
pub fn instance(n: usize, seed: u64) -> DtleProblem {
    generate_random_problem(n, 0.5, seed).unwrap()
}
