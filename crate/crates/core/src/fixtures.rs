//! Bundled problem instances and the seeded random-instance generator.

use rand::Rng;

use crate::error::{Error, Result};
use crate::matcore::{frobenius_norm, Mat};
use crate::problem::DtleProblem;
use crate::rng;

/// State matrix of the bundled 10-state controllability example.
pub const TABLE1_A: [[f64; 10]; 10] = [
    [
        0.0061, 0.1355, 0.0998, 0.1051, 0.1085, 0.0007, 0.1095, 0.0817, 0.0036, 0.0625,
    ],
    [
        0.1492, 0.1171, 0.0385, 0.0708, 0.0791, 0.0387, 0.0523, 0.0311, 0.0163, 0.1427,
    ],
    [
        0.1014, 0.1360, 0.0263, 0.0603, 0.0087, 0.0481, 0.0586, 0.0165, 0.1036, 0.0670,
    ],
    [
        0.1255, 0.0109, 0.0290, 0.1362, 0.1128, 0.0086, 0.0244, 0.1072, 0.1397, 0.0689,
    ],
    [
        0.1439, 0.1434, 0.0378, 0.0980, 0.0884, 0.0410, 0.1360, 0.1231, 0.1216, 0.0058,
    ],
    [
        0.0268, 0.1180, 0.1009, 0.0915, 0.0303, 0.1404, 0.0200, 0.1167, 0.0305, 0.1475,
    ],
    [
        0.0944, 0.1159, 0.0598, 0.1209, 0.1100, 0.0749, 0.0108, 0.1298, 0.0572, 0.0684,
    ],
    [
        0.1189, 0.0558, 0.0391, 0.1120, 0.0946, 0.0952, 0.1077, 0.0560, 0.0840, 0.0900,
    ],
    [
        0.0958, 0.0067, 0.0693, 0.0899, 0.1106, 0.0007, 0.0687, 0.0153, 0.0499, 0.0388,
    ],
    [
        0.0828, 0.0712, 0.0463, 0.1241, 0.0535, 0.1397, 0.0728, 0.1038, 0.1492, 0.0129,
    ],
];

/// Input matrix of the same example; `Q = B B'`.
pub const TABLE1_B: [[f64; 2]; 10] = [
    [1.0, 1.0],
    [1.0, 0.0],
    [0.0, 0.0],
    [0.0, 1.0],
    [1.0, 0.0],
    [0.0, 0.0],
    [1.0, 0.0],
    [1.0, 1.0],
    [0.0, 1.0],
    [0.0, 0.0],
];

pub const FIXTURES: &[(&str, &str)] = &[
    (
        "table1",
        "10x10 controllability example, Q = B B' with a 10x2 B",
    ),
    ("scalar", "a = 0.5, q = 0.75; solution x = 1"),
    (
        "random-nXX",
        "seeded random instance of size XX, spectral radius 0.5, seed 0",
    ),
];

pub fn table1() -> DtleProblem {
    let a = Mat::from_rows(&TABLE1_A.iter().map(|r| r.to_vec()).collect::<Vec<_>>())
        .expect("fixture A is well formed");
    let b = Mat::from_rows(&TABLE1_B.iter().map(|r| r.to_vec()).collect::<Vec<_>>())
        .expect("fixture B is well formed");
    DtleProblem::new(a, &b * &b.transpose()).expect("B B' is symmetric")
}

pub fn scalar() -> DtleProblem {
    DtleProblem::new(
        Mat::from_vec(1, 1, vec![0.5]).expect("finite"),
        Mat::from_vec(1, 1, vec![0.75]).expect("finite"),
    )
    .expect("1x1 is symmetric")
}

pub fn load_fixture(name: &str) -> Result<DtleProblem> {
    match name {
        "table1" => Ok(table1()),
        "scalar" => Ok(scalar()),
        _ => match name
            .strip_prefix("random-n")
            .and_then(|s| s.parse::<usize>().ok())
        {
            Some(n) if n >= 1 => generate_random_problem(n, 0.5, 0),
            _ => Err(Error::UnknownFixture {
                name: name.to_string(),
                available: FIXTURES
                    .iter()
                    .map(|(f, _)| *f)
                    .collect::<Vec<_>>()
                    .join(", "),
            }),
        },
    }
}

/// Upper estimate of the spectral radius from `|A^K|_F^(1/K)` with
/// `K = 2^20`, computed by repeated squaring with renormalization.
pub fn spectral_radius_estimate(a: &Mat) -> f64 {
    const SQUARINGS: u32 = 20;
    let norm = frobenius_norm(a);
    if norm == 0.0 {
        return 0.0;
    }
    let mut m = a.scale(1.0 / norm);
    let mut log_scale = norm.ln();
    for _ in 0..SQUARINGS {
        let sq = &m * &m;
        let s = frobenius_norm(&sq);
        if s == 0.0 {
            return 0.0;
        }
        m = sq.scale(1.0 / s);
        log_scale = 2.0 * log_scale + s.ln();
    }
    (log_scale / f64::from(1u32 << SQUARINGS)).exp()
}

/// Random `A` rescaled to spectral radius estimate `rho`, and `Q = B B'`
/// with `B` of size `n x ceil(n/4)`; all entries drawn uniform in `[-1, 1]`.
pub fn generate_random_problem(n: usize, rho: f64, seed: u64) -> Result<DtleProblem> {
    if !(rho > 0.0 && rho < 1.0) {
        return Err(Error::Parameter(format!(
            "spectral scale {rho} outside (0, 1)"
        )));
    }
    if n == 0 {
        return Err(Error::Parameter("n must be positive".into()));
    }
    let mut rng = rng::seeded(seed);
    let raw = Mat::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    let est = spectral_radius_estimate(&raw);
    let a = if est > 0.0 { raw.scale(rho / est) } else { raw };
    let b = Mat::from_fn(n, n.div_ceil(4), |_, _| rng.random_range(-1.0..1.0));
    DtleProblem::new(a, &b * &b.transpose())
}
