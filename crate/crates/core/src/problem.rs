//! The DTLE instance `A X A' - X + Q = 0`, its row/column block split
//! across agents, and each agent's local least-squares objective.
//!
//! Agent `i` owns rows `offset_i..offset_i + n_i` of `A` (`A_ri`), the
//! matching columns of `Q` (`Q_li`) and of the identity (`E_li`). It keeps
//! a full estimate pair `(X_i, Y_i)` where `Y_i` tracks `A X`. The local
//! objective is
//!
//! ```text
//! f_i = 1/2 |Y_i[rows_i] - A_ri X_i|_F^2 + 1/2 |Y_i A_ri' - X_i E_li + Q_li|_F^2
//! ```

use crate::error::{Error, Result};
use crate::matcore::{frobenius_norm, Mat};

/// Default safety factor applied to the admissible step interval.
pub const DEFAULT_SAFETY: f64 = 0.5;

#[derive(Clone, Debug, PartialEq)]
pub struct DtleProblem {
    a: Mat,
    q: Mat,
}

impl DtleProblem {
    pub fn new(a: Mat, q: Mat) -> Result<Self> {
        if !a.is_square() || a.shape() != q.shape() {
            return Err(Error::Dimension(format!(
                "A ({}x{}) and Q ({}x{}) must both be n x n",
                a.rows(),
                a.cols(),
                q.rows(),
                q.cols()
            )));
        }
        let asym = frobenius_norm(&(&q - &q.transpose()));
        let tol = 1e-10 * (1.0 + frobenius_norm(&q));
        if asym > tol {
            return Err(Error::NotSymmetric {
                asymmetry: asym,
                tolerance: tol,
            });
        }
        Ok(DtleProblem { a, q })
    }

    pub fn a(&self) -> &Mat {
        &self.a
    }

    pub fn q(&self) -> &Mat {
        &self.q
    }

    pub fn n(&self) -> usize {
        self.a.rows()
    }

    /// `|A X A' - X + Q|_F`
    pub fn residual(&self, x: &Mat) -> f64 {
        let axa = &(&self.a * x) * &self.a.transpose();
        frobenius_norm(&(&(&axa - x) + &self.q))
    }

    /// Residual level below which values are rounding noise.
    pub fn numerical_floor(&self) -> f64 {
        1e-12 * (1.0 + frobenius_norm(&self.q))
    }
}

/// Row counts per agent; `sizes` sums to `n`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Partition {
    sizes: Vec<usize>,
    offsets: Vec<usize>,
}

impl Partition {
    pub fn new(n: usize, sizes: Vec<usize>) -> Result<Self> {
        if sizes.is_empty() {
            return Err(Error::Partition("at least one agent is required".into()));
        }
        if sizes.contains(&0) {
            return Err(Error::Partition(
                "every agent needs at least one row".into(),
            ));
        }
        let total: usize = sizes.iter().sum();
        if total != n {
            return Err(Error::Partition(format!(
                "sizes {sizes:?} sum to {total}, expected {n}"
            )));
        }
        let offsets = sizes
            .iter()
            .scan(0, |acc, &s| {
                let start = *acc;
                *acc += s;
                Some(start)
            })
            .collect();
        Ok(Partition { sizes, offsets })
    }

    /// Balanced split: the first `n mod m` agents receive one extra row.
    pub fn balanced(n: usize, m: usize) -> Result<Self> {
        if m == 0 || m > n {
            return Err(Error::Partition(format!(
                "cannot split {n} rows among {m} agents"
            )));
        }
        let base = n / m;
        let extra = n % m;
        Partition::new(n, (0..m).map(|i| base + usize::from(i < extra)).collect())
    }

    pub fn m(&self) -> usize {
        self.sizes.len()
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }
}

/// One agent's private slice of the problem plus its step size.
#[derive(Clone, Debug, PartialEq)]
pub struct LocalData {
    agent_id: usize,
    offset: usize,
    a_r: Mat,
    q_l: Mat,
    e_l: Mat,
    xi: f64,
    alpha: f64,
}

impl LocalData {
    /// Zero-based agent index.
    pub fn agent_id(&self) -> usize {
        self.agent_id
    }

    pub fn offset(&self) -> usize {
        self.offset
    }

    /// Number of rows `n_i` this agent owns.
    pub fn block_size(&self) -> usize {
        self.a_r.rows()
    }

    pub fn n(&self) -> usize {
        self.a_r.cols()
    }

    pub fn a_r(&self) -> &Mat {
        &self.a_r
    }

    pub fn q_l(&self) -> &Mat {
        &self.q_l
    }

    pub fn e_l(&self) -> &Mat {
        &self.e_l
    }

    pub fn xi(&self) -> f64 {
        self.xi
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Admissible open interval upper end, `min{1, 1/xi}`.
    pub fn step_limit(&self) -> f64 {
        1f64.min(1.0 / self.xi)
    }

    /// Replaces the step size; it must lie strictly inside `(0, min{1, 1/xi})`.
    pub fn with_step(mut self, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < self.step_limit()) {
            return Err(Error::Parameter(format!(
                "step {alpha} for agent {} outside (0, {})",
                self.agent_id + 1,
                self.step_limit()
            )));
        }
        self.alpha = alpha;
        Ok(self)
    }

    /// Replaces the step size without the admissibility check. Only useful
    /// for probing what happens when the bound is violated.
    pub fn with_step_unchecked(mut self, alpha: f64) -> Self {
        self.alpha = alpha;
        self
    }
}

/// Agent `i`'s estimate pair `(X_i, Y_i)`.
#[derive(Clone, Debug, PartialEq)]
pub struct AgentEstimate {
    pub x: Mat,
    pub y: Mat,
}

impl AgentEstimate {
    pub fn zeros(n: usize) -> Self {
        AgentEstimate {
            x: Mat::zeros(n, n),
            y: Mat::zeros(n, n),
        }
    }

    /// Reference pair `(X, A X)`.
    pub fn from_solution(a: &Mat, x: &Mat) -> Self {
        AgentEstimate {
            x: x.clone(),
            y: a * x,
        }
    }

    /// Stacked `Z = [Y; X]`.
    pub fn stacked(&self) -> Mat {
        Mat::vstack(&[&self.y, &self.x]).expect("estimate blocks share column count")
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    /// `|X - X'|_F^2 + |Y - Y'|_F^2`
    pub fn squared_distance(&self, other: &AgentEstimate) -> f64 {
        let dx = frobenius_norm(&(&self.x - &other.x));
        let dy = frobenius_norm(&(&self.y - &other.y));
        dx * dx + dy * dy
    }
}

/// Splits `A` by rows and `Q` by columns across `m` agents. Each record
/// carries `xi = xi_bound` and the default step at [`DEFAULT_SAFETY`].
pub fn decompose(p: &DtleProblem, m: usize, sizes: Option<Vec<usize>>) -> Result<Vec<LocalData>> {
    let n = p.n();
    if m == 0 || m > n {
        return Err(Error::Partition(format!(
            "cannot split {n} rows among {m} agents"
        )));
    }
    let partition = match sizes {
        Some(sizes) => {
            if sizes.len() != m {
                return Err(Error::Partition(format!(
                    "{} sizes supplied for {m} agents",
                    sizes.len()
                )));
            }
            Partition::new(n, sizes)?
        }
        None => Partition::balanced(n, m)?,
    };
    let identity = Mat::identity(n);
    partition
        .sizes()
        .iter()
        .zip(partition.offsets())
        .enumerate()
        .map(|(i, (&size, &offset))| {
            let end = offset + size;
            let mut local = LocalData {
                agent_id: i,
                offset,
                a_r: p.a().row_block(offset, end),
                q_l: p.q().col_block(offset, end),
                e_l: identity.col_block(offset, end),
                xi: 0.0,
                alpha: 0.0,
            };
            local.xi = xi_bound(&local);
            local.alpha = default_step(&local, DEFAULT_SAFETY)?;
            Ok(local)
        })
        .collect()
}

fn check_shapes(d: &LocalData, e: &AgentEstimate) -> Result<()> {
    let n = d.n();
    if e.x.shape() != (n, n) || e.y.shape() != (n, n) {
        return Err(Error::Dimension(format!(
            "agent {} expects {n}x{n} estimates, got X {}x{} and Y {}x{}",
            d.agent_id + 1,
            e.x.rows(),
            e.x.cols(),
            e.y.rows(),
            e.y.cols()
        )));
    }
    Ok(())
}

/// The two residual blocks `(T1, T2)`:
/// `T1 = Y[rows_i] - A_ri X` (n_i x n) and `T2 = Y A_ri' - X E_li + Q_li` (n x n_i).
fn residual_blocks(d: &LocalData, e: &AgentEstimate) -> (Mat, Mat) {
    let y_rows = e.y.row_block(d.offset, d.offset + d.block_size());
    let t1 = &y_rows - &(&d.a_r * &e.x);
    let x_cols = e.x.col_block(d.offset, d.offset + d.block_size());
    let t2 = &(&(&e.y * &d.a_r.transpose()) - &x_cols) + &d.q_l;
    (t1, t2)
}

pub fn local_objective(d: &LocalData, e: &AgentEstimate) -> Result<f64> {
    check_shapes(d, e)?;
    let (t1, t2) = residual_blocks(d, e);
    let r1 = frobenius_norm(&t1);
    let r2 = frobenius_norm(&t2);
    Ok(0.5 * (r1 * r1 + r2 * r2))
}

/// Partial gradients `(d_X, d_Y)` of [`local_objective`]:
///
/// ```text
/// d_X = -A_ri' T1 - T2 E_li'
/// d_Y =  E_li T1 + T2 A_ri
/// ```
///
/// `E_li T1` scatters the `n_i x n` block into the rows owned by the agent,
/// and `T2 E_li'` scatters the `n x n_i` block into its columns.
pub fn local_gradients(d: &LocalData, e: &AgentEstimate) -> Result<(Mat, Mat)> {
    check_shapes(d, e)?;
    let n = d.n();
    let (t1, t2) = residual_blocks(d, e);

    let mut d_x = -&(&d.a_r.transpose() * &t1);
    for i in 0..n {
        for j in 0..d.block_size() {
            d_x[(i, d.offset + j)] -= t2[(i, j)];
        }
    }

    let mut d_y = &t2 * &d.a_r;
    for i in 0..d.block_size() {
        for j in 0..n {
            d_y[(d.offset + i, j)] += t1[(i, j)];
        }
    }
    Ok((d_x, d_y))
}

/// `xi_i = 2 (|A_ri|_F^2 + |E_li|_F^2)`, a valid constant for the bound
/// `|-A_ri' T1 - T2 E_li'|^2 + |E_li T1 + T2 A_ri|^2 <= xi (|T1|^2 + |T2|^2)`.
pub fn xi_bound(d: &LocalData) -> f64 {
    let a = frobenius_norm(&d.a_r);
    let e = frobenius_norm(&d.e_l);
    2.0 * (a * a + e * e)
}

/// `safety * min{1, 1/xi}` for `safety` in `(0, 1)`.
pub fn default_step(d: &LocalData, safety: f64) -> Result<f64> {
    if !(safety > 0.0 && safety < 1.0) {
        return Err(Error::Parameter(format!(
            "safety factor {safety} outside (0, 1)"
        )));
    }
    if d.xi.is_nan() || d.xi <= 0.0 {
        return Err(Error::Parameter(format!(
            "xi for agent {} is not set",
            d.agent_id + 1
        )));
    }
    Ok(safety * d.step_limit())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn scalar_problem() -> DtleProblem {
        DtleProblem::new(
            Mat::from_vec(1, 1, vec![0.5]).unwrap(),
            Mat::from_vec(1, 1, vec![0.75]).unwrap(),
        )
        .unwrap()
    }

    fn random_sym(rng: &mut ChaCha8Rng, n: usize) -> Mat {
        let b = Mat::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        &b + &b.transpose()
    }

    #[test]
    fn single_agent_holds_everything() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = Mat::from_fn(3, 3, |_, _| rng.random_range(-1.0..1.0));
        let p = DtleProblem::new(a.clone(), random_sym(&mut rng, 3)).unwrap();
        let locals = decompose(&p, 1, None).unwrap();
        assert_eq!(locals.len(), 1);
        assert_eq!(locals[0].a_r(), &a);
        assert_eq!(locals[0].q_l(), p.q());
        assert_eq!(locals[0].e_l(), &Mat::identity(3));
    }

    #[test]
    fn balanced_split_slices_rows() {
        let a = Mat::from_fn(4, 4, |i, j| (i * 4 + j) as f64);
        let p = DtleProblem::new(a.clone(), Mat::identity(4)).unwrap();
        let locals = decompose(&p, 2, None).unwrap();
        assert_eq!(locals[0].block_size(), 2);
        assert_eq!(locals[1].block_size(), 2);
        assert_eq!(locals[0].a_r(), &a.row_block(0, 2));

        assert_eq!(Partition::balanced(7, 3).unwrap().sizes(), &[3, 2, 2]);
    }

    #[test]
    fn restacking_reproduces_blocks() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = Mat::from_fn(6, 6, |_, _| rng.random_range(-1.0..1.0));
        let p = DtleProblem::new(a, random_sym(&mut rng, 6)).unwrap();
        for sizes in [None, Some(vec![1, 4, 1]), Some(vec![3, 2, 1])] {
            let locals = decompose(&p, 3, sizes).unwrap();
            let ar: Vec<&Mat> = locals.iter().map(|d| d.a_r()).collect();
            let ql: Vec<&Mat> = locals.iter().map(|d| d.q_l()).collect();
            let el: Vec<&Mat> = locals.iter().map(|d| d.e_l()).collect();
            assert_eq!(&Mat::vstack(&ar).unwrap(), p.a());
            assert_eq!(&Mat::hstack(&ql).unwrap(), p.q());
            assert_eq!(Mat::hstack(&el).unwrap(), Mat::identity(6));
        }
    }

    #[test]
    fn partition_errors() {
        let p = DtleProblem::new(Mat::identity(3), Mat::identity(3)).unwrap();
        assert!(matches!(decompose(&p, 4, None), Err(Error::Partition(_))));
        assert!(matches!(
            decompose(&p, 2, Some(vec![1, 1])),
            Err(Error::Partition(_))
        ));
        assert!(matches!(
            decompose(&p, 2, Some(vec![3, 0])),
            Err(Error::Partition(_))
        ));
    }

    #[test]
    fn asymmetric_q_rejected() {
        let q = Mat::from_rows(&[vec![1.0, 2.0], vec![0.0, 1.0]]).unwrap();
        assert!(DtleProblem::new(Mat::identity(2), q).is_err());
    }

    #[test]
    fn scalar_objective_and_gradients() {
        let locals = decompose(&scalar_problem(), 1, None).unwrap();
        let e = AgentEstimate::zeros(1);
        let f = local_objective(&locals[0], &e).unwrap();
        assert!((f - 0.28125).abs() < 1e-15);
        let (dx, dy) = local_gradients(&locals[0], &e).unwrap();
        assert!((dx[(0, 0)] + 0.75).abs() < 1e-15);
        assert!((dy[(0, 0)] - 0.375).abs() < 1e-15);
    }

    #[test]
    fn zero_estimate_objective_is_half_q_block() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = Mat::from_fn(5, 5, |_, _| rng.random_range(-1.0..1.0));
        let p = DtleProblem::new(a, random_sym(&mut rng, 5)).unwrap();
        for d in decompose(&p, 2, None).unwrap() {
            let f = local_objective(&d, &AgentEstimate::zeros(5)).unwrap();
            let qn = frobenius_norm(d.q_l());
            assert!((f - 0.5 * qn * qn).abs() < 1e-12);
        }
    }

    #[test]
    fn solution_pair_is_stationary() {
        // a = 0.5, q = 0.75: x = q / (1 - a^2) = 1
        let p = scalar_problem();
        let d = &decompose(&p, 1, None).unwrap()[0];
        let x = Mat::from_vec(1, 1, vec![1.0]).unwrap();
        let e = AgentEstimate::from_solution(p.a(), &x);
        assert_eq!(local_objective(d, &e).unwrap(), 0.0);
        let (dx, dy) = local_gradients(d, &e).unwrap();
        assert_eq!(dx.max_abs(), 0.0);
        assert_eq!(dy.max_abs(), 0.0);
    }

    #[test]
    fn shape_mismatch_is_dimension_error() {
        let d = &decompose(&scalar_problem(), 1, None).unwrap()[0];
        let e = AgentEstimate::zeros(2);
        assert!(matches!(local_objective(d, &e), Err(Error::Dimension(_))));
        assert!(matches!(local_gradients(d, &e), Err(Error::Dimension(_))));
    }

    #[test]
    fn xi_and_step_values() {
        let d = &decompose(&scalar_problem(), 1, None).unwrap()[0];
        assert!((d.xi() - 2.5).abs() < 1e-15);
        assert!((default_step(d, 0.5).unwrap() - 0.2).abs() < 1e-15);
        assert!((d.alpha() - 0.2).abs() < 1e-15);

        let zero_row = DtleProblem::new(Mat::zeros(2, 2), Mat::identity(2)).unwrap();
        for d in decompose(&zero_row, 2, None).unwrap() {
            assert_eq!(d.xi(), 2.0);
        }

        let mut d = d.clone();
        d.xi = 0.5;
        assert_eq!(default_step(&d, 0.5).unwrap(), 0.5);
        d.xi = 4.0;
        let a = default_step(&d, 0.999).unwrap();
        assert!((a - 0.24975).abs() < 1e-15 && a < 0.25);
        assert!(matches!(default_step(&d, 1.0), Err(Error::Parameter(_))));
        assert!(matches!(default_step(&d, 0.0), Err(Error::Parameter(_))));
    }

    #[test]
    fn with_step_enforces_interval() {
        let d = decompose(&scalar_problem(), 1, None).unwrap().remove(0);
        assert!(d.clone().with_step(0.39).is_ok());
        assert!(d.clone().with_step(0.4).is_err());
        assert!(d.clone().with_step(0.0).is_err());
        assert_eq!(d.with_step_unchecked(4.0).alpha(), 4.0);
    }

    #[test]
    fn residual_cases() {
        let p = scalar_problem();
        assert_eq!(p.residual(&Mat::from_vec(1, 1, vec![1.0]).unwrap()), 0.0);
        let q = Mat::from_rows(&[vec![2.0, 1.0], vec![1.0, 3.0]]).unwrap();
        let p = DtleProblem::new(Mat::zeros(2, 2), q.clone()).unwrap();
        let x = Mat::from_rows(&[vec![1.0, 0.0], vec![0.5, -1.0]]).unwrap();
        assert_eq!(p.residual(&x), frobenius_norm(&(&q - &x)));
    }
}
