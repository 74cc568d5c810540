//! Centralized ground truth.
//!
//! [`solve_centralized`] vectorizes the equation row-major,
//! `(kron(A, A) - I) vec(X) = -vec(Q)`, and solves it densely.
//! [`build_quadratic`] writes each agent's objective as
//! `f_i = 1/2 <z, P_i z>` in the displacement `z = vec([Y - Y*; X - X*])`.

use rand::Rng;

use crate::error::{Error, Result};
use crate::matcore::{frobenius_norm, kron, solve_linear, vec_row, Mat, Vector};
use crate::problem::{local_objective, AgentEstimate, DtleProblem, LocalData};
use crate::rng;

/// Largest `n` the dense `n^2 x n^2` system is built for.
pub const MAX_ORACLE_N: usize = 50;

#[derive(Clone, Debug, PartialEq)]
pub struct CentralizedSolution {
    pub x_star: Mat,
    pub residual: f64,
    pub unique: bool,
}

pub fn solve_centralized(p: &DtleProblem) -> Result<CentralizedSolution> {
    let n = p.n();
    if n > MAX_ORACLE_N {
        return Err(Error::Parameter(format!(
            "oracle is limited to n <= {MAX_ORACLE_N}, got {n}"
        )));
    }
    let mut system = kron(p.a(), p.a());
    for i in 0..n * n {
        system[(i, i)] -= 1.0;
    }
    let rhs = Vector::new(vec_row(p.q()).as_slice().iter().map(|v| -v).collect())?;
    let v = solve_linear(&system, &rhs).map_err(|e| match e {
        Error::Singular { .. } => {
            Error::NoUniqueSolution(format!("kron(A, A) - I is numerically singular ({e})"))
        }
        other => other,
    })?;
    let x = Mat::from_vec_row(&v, n, n)?;
    let x_star = (&x + &x.transpose()).scale(0.5);
    let residual = p.residual(&x_star);
    let bound = 1e-8 * (1.0 + frobenius_norm(p.q()));
    if residual > bound {
        return Err(Error::NoUniqueSolution(format!(
            "solution residual {residual:e} exceeds {bound:e}; system is ill-conditioned"
        )));
    }
    Ok(CentralizedSolution {
        x_star,
        residual,
        unique: true,
    })
}

/// `P_i = C1' C1 + C2' C2`, a symmetric PSD `2n^2 x 2n^2` matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadraticForm {
    pub p: Mat,
}

impl QuadraticForm {
    /// `1/2 <z, P z>`
    pub fn evaluate(&self, z: &Vector) -> f64 {
        0.5 * z.dot(&self.p.mul_vec(z).expect("displacement length matches P"))
    }
}

/// Row-major vectorization of the stacked displacement `[Y - Y*; X - X*]`.
pub fn displacement(e: &AgentEstimate, reference: &AgentEstimate) -> Vector {
    let dy = &e.y - &reference.y;
    let dx = &e.x - &reference.x;
    vec_row(&Mat::vstack(&[&dy, &dx]).expect("blocks share width"))
}

/// Permutation taking `vec_row([Y; X])` (2n x n) to `vec_row([Y X])` (n x 2n).
pub fn stack_permutation(n: usize) -> Mat {
    let size = 2 * n * n;
    let mut pi = Mat::zeros(size, size);
    for r in 0..n {
        for c in 0..n {
            // Y[r, c]
            pi[(r * 2 * n + c, r * n + c)] = 1.0;
            // X[r, c]
            pi[(r * 2 * n + n + c, (n + r) * n + c)] = 1.0;
        }
    }
    pi
}

/// Builds `P_i` from `C1 = kron([E_ri, -A_ri], I_n)` and
/// `C2 = kron(I_n, [A_ri, -E_li']) * Pi`.
pub fn build_quadratic(d: &LocalData, reference: &AgentEstimate) -> Result<QuadraticForm> {
    let n = d.n();
    if reference.x.shape() != (n, n) || reference.y.shape() != (n, n) {
        return Err(Error::Dimension("reference must be n x n".into()));
    }
    let e_r = d.e_l().transpose();
    let left = Mat::hstack(&[&e_r, &-d.a_r()])?;
    let c1 = kron(&left, &Mat::identity(n));
    let right = Mat::hstack(&[d.a_r(), &-&e_r])?;
    let c0 = kron(&Mat::identity(n), &right);
    let c2 = c0.matmul(&stack_permutation(n))?;

    // The quadratic form only represents f_i around an exact zero of f_i.
    let at_reference = local_objective(d, reference)?;
    let scale = 1.0 + frobenius_norm(&reference.x) + frobenius_norm(&reference.y);
    if at_reference.sqrt() > 1e-8 * scale {
        return Err(Error::Reference(format!(
            "local objective {at_reference:e} at the reference; expected a solution pair (X*, A X*)"
        )));
    }
    let p = &(&c1.transpose() * &c1) + &(&c2.transpose() * &c2);
    Ok(QuadraticForm { p })
}

/// Checks that `(X*, Y*)` is a solution pair: `Y* = A X*` within `1e-8`.
pub fn check_reference(problem: &DtleProblem, reference: &AgentEstimate) -> Result<()> {
    let gap = frobenius_norm(&(&reference.y - &(problem.a() * &reference.x)));
    if gap > 1e-8 * (1.0 + frobenius_norm(&reference.y)) {
        return Err(Error::Reference(format!("|Y* - A X*|_F = {gap:e}")));
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct QuadraticReport {
    pub samples: usize,
    pub max_relative_deviation: f64,
    pub passed: bool,
}

pub const QUADRATIC_TOLERANCE: f64 = 1e-8;

/// Compares `f_i(X* + dX, Y* + dY)` with `1/2 <z, P_i z>` on seeded random
/// displacements with entries in `[-1, 1]`.
pub fn check_quadratic(
    d: &LocalData,
    q: &QuadraticForm,
    reference: &AgentEstimate,
    samples: usize,
    seed: u64,
) -> Result<QuadraticReport> {
    if samples == 0 {
        return Err(Error::Parameter("at least one sample is required".into()));
    }
    let n = d.n();
    let mut rng = rng::seeded(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..samples {
        let probe = AgentEstimate {
            x: &reference.x + &Mat::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0)),
            y: &reference.y + &Mat::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0)),
        };
        let direct = local_objective(d, &probe)?;
        let quad = q.evaluate(&displacement(&probe, reference));
        worst = worst.max(relative_deviation(direct, quad));
    }
    Ok(QuadraticReport {
        samples,
        max_relative_deviation: worst,
        passed: worst <= QUADRATIC_TOLERANCE,
    })
}

pub(crate) fn relative_deviation(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matcore::sym_eigenvalues;
    use crate::problem::decompose;

    fn scalar(a: f64, q: f64) -> DtleProblem {
        DtleProblem::new(
            Mat::from_vec(1, 1, vec![a]).unwrap(),
            Mat::from_vec(1, 1, vec![q]).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn scalar_closed_form() {
        let sol = solve_centralized(&scalar(0.5, 0.75)).unwrap();
        assert!((sol.x_star[(0, 0)] - 1.0).abs() < 1e-15);
        assert!(sol.unique);
    }

    #[test]
    fn zero_a_returns_q() {
        let q = Mat::from_rows(&[vec![2.0, 1.0], vec![1.0, 3.0]]).unwrap();
        let p = DtleProblem::new(Mat::zeros(2, 2), q.clone()).unwrap();
        assert_eq!(solve_centralized(&p).unwrap().x_star, q);
    }

    #[test]
    fn unit_scalar_is_singular() {
        assert!(matches!(
            solve_centralized(&scalar(1.0, 1.0)),
            Err(Error::NoUniqueSolution(_))
        ));
    }

    #[test]
    fn scalar_quadratic_by_hand() {
        let a = 0.3;
        let p = scalar(a, 0.91);
        let d = &decompose(&p, 1, None).unwrap()[0];
        let x = solve_centralized(&p).unwrap().x_star;
        let reference = AgentEstimate::from_solution(p.a(), &x);
        let q = build_quadratic(d, &reference).unwrap();
        let expected =
            Mat::from_rows(&[vec![1.0 + a * a, -2.0 * a], vec![-2.0 * a, 1.0 + a * a]]).unwrap();
        assert!((&q.p - &expected).max_abs() < 1e-15);
        assert_eq!(q.evaluate(&displacement(&reference, &reference)), 0.0);
        let r = check_quadratic(d, &q, &reference, 10, 1).unwrap();
        assert!(r.passed, "{r:?}");
    }

    #[test]
    fn permutation_maps_stack_to_concatenation() {
        let y = Mat::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        let x = Mat::from_rows(&[vec![5.0, 6.0], vec![7.0, 8.0]]).unwrap();
        let stacked = vec_row(&Mat::vstack(&[&y, &x]).unwrap());
        let side = vec_row(&Mat::hstack(&[&y, &x]).unwrap());
        assert_eq!(stack_permutation(2).mul_vec(&stacked).unwrap(), side);
    }

    #[test]
    fn corrupted_form_fails_check() {
        let a = Mat::from_rows(&[vec![0.2, 0.1], vec![-0.3, 0.4]]).unwrap();
        let p = DtleProblem::new(a, Mat::identity(2)).unwrap();
        let x = solve_centralized(&p).unwrap().x_star;
        let reference = AgentEstimate::from_solution(p.a(), &x);
        for d in decompose(&p, 2, None).unwrap() {
            let mut q = build_quadratic(&d, &reference).unwrap();
            assert!(check_quadratic(&d, &q, &reference, 20, 9).unwrap().passed);
            let ev = sym_eigenvalues(&q.p).unwrap();
            assert!(ev[0] >= -1e-8);
            q.p[(0, 0)] += 1.0;
            assert!(!check_quadratic(&d, &q, &reference, 20, 9).unwrap().passed);
        }
    }

    #[test]
    fn non_solution_reference_rejected() {
        let p = scalar(0.5, 0.75);
        let d = &decompose(&p, 1, None).unwrap()[0];
        let bad = AgentEstimate::zeros(1);
        assert!(matches!(build_quadratic(d, &bad), Err(Error::Reference(_))));
        assert!(check_reference(
            &p,
            &AgentEstimate {
                x: Mat::identity(1),
                y: Mat::identity(1)
            }
        )
        .is_err());
    }

    #[test]
    fn oversize_rejected() {
        let p = DtleProblem::new(Mat::zeros(51, 51), Mat::identity(51)).unwrap();
        assert!(matches!(solve_centralized(&p), Err(Error::Parameter(_))));
    }
}
