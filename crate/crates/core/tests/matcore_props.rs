mod common;

use common::random_mat;
use dtle_net::matcore::{
    frobenius_inner, frobenius_norm, kron, solve_linear, sym_eigenvalues, vec_row, Mat, Vector,
};
use dtle_net::rng;
use proptest::prelude::*;

proptest! {
    #[test]
    fn row_major_kronecker_identity(
        p in 1usize..=6, q in 1usize..=6, r in 1usize..=6, s in 1usize..=6,
        seed in any::<u64>(),
    ) {
        let mut g = rng::seeded(seed);
        let a = random_mat(&mut g, p, q, 1.0);
        let m = random_mat(&mut g, q, r, 1.0);
        let c = random_mat(&mut g, r, s, 1.0);
        let lhs = vec_row(&(&(&a * &m) * &c));
        let rhs = kron(&a, &c.transpose()).mul_vec(&vec_row(&m)).unwrap();
        let gap: f64 = lhs.as_slice().iter().zip(rhs.as_slice()).map(|(u, v)| (u - v).powi(2)).sum::<f64>().sqrt();
        prop_assert!(gap <= 1e-10 * lhs.norm().max(1e-300));
    }

    #[test]
    fn norm_squared_is_self_inner(rows in 1usize..=8, cols in 1usize..=8, seed in any::<u64>()) {
        let m = random_mat(&mut rng::seeded(seed), rows, cols, 10.0);
        let n2 = frobenius_norm(&m).powi(2);
        let inner = frobenius_inner(&m, &m).unwrap();
        prop_assert!((n2 - inner).abs() <= 1e-12 * inner);
    }

    #[test]
    fn eigenvalues_preserve_trace_and_norm(n in 1usize..=8, seed in any::<u64>()) {
        let b = random_mat(&mut rng::seeded(seed), n, n, 1.0);
        let s = &b + &b.transpose();
        let ev = sym_eigenvalues(&s).unwrap();
        let sum: f64 = ev.as_slice().iter().sum();
        let sq: f64 = ev.as_slice().iter().map(|l| l * l).sum();
        let f2 = frobenius_norm(&s).powi(2);
        prop_assert!((sum - s.trace()).abs() <= 1e-8 * (1.0 + f2.sqrt()));
        prop_assert!((sq - f2).abs() <= 1e-8 * f2.max(1e-300));
        prop_assert!(ev.as_slice().windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn solve_multiplies_back(n in 1usize..=8, seed in any::<u64>()) {
        let mut g = rng::seeded(seed);
        // diagonally dominant keeps the condition number far below 1e6
        let mut m = random_mat(&mut g, n, n, 1.0);
        for i in 0..n {
            m[(i, i)] += n as f64 + 1.0;
        }
        let b = Vector::new((0..n).map(|i| (i as f64).sin() + 2.0).collect()).unwrap();
        let x = solve_linear(&m, &b).unwrap();
        let back = m.mul_vec(&x).unwrap();
        let gap: f64 = back.as_slice().iter().zip(b.as_slice()).map(|(u, v)| (u - v).powi(2)).sum::<f64>().sqrt();
        prop_assert!(gap <= 1e-8 * b.norm());
    }

    #[test]
    fn text_format_round_trips(rows in 1usize..=5, cols in 1usize..=5, seed in any::<u64>()) {
        let m = random_mat(&mut rng::seeded(seed), rows, cols, 1e3);
        prop_assert_eq!(Mat::from_text(&m.to_text()).unwrap(), m);
    }
}
