//! Per-round communication graphs, their Metropolis adjacency and Laplacian,
//! the step-size-weighted mixing matrix, and topology schedules.
//!
//! Node labels are zero-based here; configuration files use one-based
//! labels and convert on load.

use std::collections::BTreeSet;

use petgraph::unionfind::UnionFind;
use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::matcore::{sym_eigenvalues, Mat};
use crate::rng;

/// Eigenvalue threshold separating a zero Fiedler value from a positive one.
pub const CONNECTIVITY_EPS: f64 = 1e-10;

/// Undirected graph with a symmetric doubly stochastic adjacency matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Graph {
    m: usize,
    edges: BTreeSet<(usize, usize)>,
    adjacency: Mat,
    laplacian: Mat,
}

impl Graph {
    pub fn m(&self) -> usize {
        self.m
    }

    /// Edges as `(i, j)` with `i < j`.
    pub fn edges(&self) -> &BTreeSet<(usize, usize)> {
        &self.edges
    }

    pub fn adjacency(&self) -> &Mat {
        &self.adjacency
    }

    pub fn laplacian(&self) -> &Mat {
        &self.laplacian
    }

    /// Neighbors of `i` with their weights `a_ij`.
    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        (0..self.m).filter_map(move |j| {
            let w = self.adjacency[(i, j)];
            (j != i && w > 0.0).then_some((j, w))
        })
    }

    pub fn degree(&self, i: usize) -> usize {
        self.edges
            .iter()
            .filter(|&&(a, b)| a == i || b == i)
            .count()
    }

    pub fn is_connected(&self) -> bool {
        edges_connected(self.m, self.edges.iter().copied())
    }
}

pub(crate) fn edges_connected(m: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> bool {
    let mut uf = UnionFind::<usize>::new(m);
    let mut components = m;
    for (i, j) in edges {
        if uf.union(i, j) {
            components -= 1;
        }
    }
    components <= 1
}

fn normalize_edges(m: usize, edges: &[(usize, usize)]) -> Result<BTreeSet<(usize, usize)>> {
    let mut set = BTreeSet::new();
    for &(i, j) in edges {
        if i == j {
            return Err(Error::Graph(format!("self-loop on node {}", i + 1)));
        }
        if i >= m || j >= m {
            return Err(Error::Graph(format!(
                "edge ({}, {}) references a node outside 1..={m}",
                i + 1,
                j + 1
            )));
        }
        set.insert((i.min(j), i.max(j)));
    }
    Ok(set)
}

/// Metropolis weights: `a_ij = 1 / (1 + max(deg_i, deg_j))` on edges, the
/// remainder of each row on the diagonal. The Laplacian uses the
/// off-diagonal entries only (`l_ij = -a_ij`, `l_ii = sum_j a_ij`).
pub fn metropolis_adjacency(m: usize, edges: &[(usize, usize)]) -> Result<Graph> {
    if m == 0 {
        return Err(Error::Graph("a graph needs at least one node".into()));
    }
    let edges = normalize_edges(m, edges)?;
    let mut degree = vec![0usize; m];
    for &(i, j) in &edges {
        degree[i] += 1;
        degree[j] += 1;
    }
    let mut adjacency = Mat::zeros(m, m);
    let mut laplacian = Mat::zeros(m, m);
    for &(i, j) in &edges {
        let w = 1.0 / (1.0 + degree[i].max(degree[j]) as f64);
        adjacency[(i, j)] = w;
        adjacency[(j, i)] = w;
        laplacian[(i, j)] = -w;
        laplacian[(j, i)] = -w;
    }
    for i in 0..m {
        let off: f64 = (0..m).filter(|&j| j != i).map(|j| adjacency[(i, j)]).sum();
        adjacency[(i, i)] = 1.0 - off;
        laplacian[(i, i)] = off;
    }
    Ok(Graph {
        m,
        edges,
        adjacency,
        laplacian,
    })
}

pub fn ring_edges(m: usize) -> Vec<(usize, usize)> {
    match m {
        0 | 1 => Vec::new(),
        2 => vec![(0, 1)],
        _ => (0..m).map(|i| (i, (i + 1) % m)).collect(),
    }
}

pub fn path_edges(m: usize) -> Vec<(usize, usize)> {
    (1..m).map(|i| (i - 1, i)).collect()
}

pub fn star_edges(m: usize) -> Vec<(usize, usize)> {
    (1..m).map(|i| (0, i)).collect()
}

pub fn complete_edges(m: usize) -> Vec<(usize, usize)> {
    (0..m)
        .flat_map(|i| (i + 1..m).map(move |j| (i, j)))
        .collect()
}

/// Uniformly shuffled nodes, each attached to a random earlier one.
pub fn random_spanning_tree<R: Rng>(m: usize, rng: &mut R) -> Vec<(usize, usize)> {
    let mut order: Vec<usize> = (0..m).collect();
    order.shuffle(rng);
    (1..m)
        .map(|i| {
            let parent = order[rng.random_range(0..i)];
            (order[i].min(parent), order[i].max(parent))
        })
        .collect()
}

/// Random spanning tree plus each remaining edge with probability `extra`.
pub fn random_connected_edges<R: Rng>(m: usize, extra: f64, rng: &mut R) -> Vec<(usize, usize)> {
    let tree = random_spanning_tree(m, rng);
    let in_tree: BTreeSet<_> = tree.iter().copied().collect();
    let mut edges = tree;
    for e in complete_edges(m) {
        if !in_tree.contains(&e) && rng.random_bool(extra) {
            edges.push(e);
        }
    }
    edges
}

#[derive(Clone, Debug, PartialEq)]
pub struct LaplacianReport {
    /// Ascending eigenvalues of the Laplacian.
    pub eigenvalues: Vec<f64>,
    pub lambda_min: f64,
    pub lambda_max: f64,
    /// Second-smallest eigenvalue; `None` for a single node.
    pub fiedler: Option<f64>,
    pub max_abs_row_sum: f64,
    pub connected: bool,
}

pub fn laplacian_check(g: &Graph) -> LaplacianReport {
    let eigenvalues = sym_eigenvalues(&g.laplacian)
        .expect("graph Laplacians are symmetric by construction")
        .into_inner();
    let max_abs_row_sum = (0..g.m)
        .map(|i| g.laplacian.row(i).iter().sum::<f64>().abs())
        .fold(0.0, f64::max);
    let fiedler = eigenvalues.get(1).copied();
    LaplacianReport {
        lambda_min: eigenvalues[0],
        lambda_max: *eigenvalues.last().expect("m >= 1"),
        connected: fiedler.is_none_or(|l| l > CONNECTIVITY_EPS),
        fiedler,
        max_abs_row_sum,
        eigenvalues,
    }
}

/// `W` with `w_ii = 1 - (alpha_i/2) l_ii` and `w_ij = -(alpha_i/2) l_ij`.
#[derive(Clone, Debug, PartialEq)]
pub struct MixingMatrix {
    pub w: Mat,
    /// Smallest positive entry.
    pub eta: f64,
}

pub fn weight_matrix(g: &Graph, alphas: &[f64]) -> Result<MixingMatrix> {
    if alphas.len() != g.m {
        return Err(Error::Dimension(format!(
            "{} step sizes for {} agents",
            alphas.len(),
            g.m
        )));
    }
    if let Some((i, a)) = alphas
        .iter()
        .enumerate()
        .find(|(_, &a)| !(a > 0.0 && a <= 1.0))
    {
        return Err(Error::Parameter(format!(
            "step size {a} of agent {} outside (0, 1]",
            i + 1
        )));
    }
    let l = &g.laplacian;
    let w = Mat::from_fn(g.m, g.m, |i, j| {
        let half = alphas[i] / 2.0;
        if i == j {
            1.0 - half * l[(i, i)]
        } else {
            -half * l[(i, j)]
        }
    });
    for i in 0..g.m {
        let sum: f64 = w.row(i).iter().sum();
        if (sum - 1.0).abs() > 1e-10 {
            return Err(Error::Consistency(format!(
                "mixing row {} sums to {sum}",
                i + 1
            )));
        }
        if let Some(v) = w.row(i).iter().find(|&&v| v < -1e-12) {
            return Err(Error::Consistency(format!(
                "mixing row {} has negative entry {v}",
                i + 1
            )));
        }
    }
    let eta = w
        .as_slice()
        .iter()
        .copied()
        .filter(|&v| v > 0.0)
        .fold(f64::INFINITY, f64::min);
    Ok(MixingMatrix { w, eta })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Family {
    /// Every listed graph is connected.
    FiniteConnected,
    /// Every window of `B` consecutive rounds has a connected edge union.
    UniformlyConnected,
}

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::FiniteConnected => "finite-connected",
            Family::UniformlyConnected => "uniformly-connected",
        }
    }
}

/// How round `k` picks a graph from the schedule's list.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SelectionRule {
    /// Uniform seeded draw each round.
    UniformRandom,
    /// `k mod len`.
    Cyclic,
    /// Graphs are laid out as `period` groups of `variants` graphs; round `k`
    /// uses group `k mod period` and a seeded draw among its variants.
    PeriodicJitter { period: usize, variants: usize },
}

#[derive(Clone, Debug)]
pub struct TopologySchedule {
    family: Family,
    graphs: Vec<Graph>,
    rule: SelectionRule,
    window: usize,
    seed: u64,
}

impl TopologySchedule {
    /// A schedule from explicit parts, unvalidated. Run
    /// [`verify_schedule`] to check the family's connectivity property.
    pub fn from_parts(
        family: Family,
        graphs: Vec<Graph>,
        rule: SelectionRule,
        window: usize,
        seed: u64,
    ) -> Result<Self> {
        let m = graphs
            .first()
            .map(Graph::m)
            .ok_or_else(|| Error::Schedule("no graphs supplied".into()))?;
        if graphs.iter().any(|g| g.m != m) {
            return Err(Error::Schedule("graphs disagree on agent count".into()));
        }
        if window == 0 {
            return Err(Error::Schedule("window bound B must be at least 1".into()));
        }
        if let SelectionRule::PeriodicJitter { period, variants } = rule {
            if period * variants != graphs.len() || variants == 0 {
                return Err(Error::Schedule(format!(
                    "{} graphs cannot form {period} groups of {variants}",
                    graphs.len()
                )));
            }
        }
        Ok(TopologySchedule {
            family,
            graphs,
            rule,
            window,
            seed,
        })
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn graphs(&self) -> &[Graph] {
        &self.graphs
    }

    pub fn rule(&self) -> SelectionRule {
        self.rule
    }

    /// `B`; 1 for the finite-connected family.
    pub fn window(&self) -> usize {
        self.window
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn m(&self) -> usize {
        self.graphs[0].m
    }

    pub fn graph_index(&self, k: usize) -> usize {
        let len = self.graphs.len();
        match self.rule {
            SelectionRule::Cyclic => k % len,
            SelectionRule::UniformRandom => {
                if len == 1 {
                    0
                } else {
                    rng::stream(self.seed, k as u64).random_range(0..len)
                }
            }
            SelectionRule::PeriodicJitter { period, variants } => {
                let variant = if variants == 1 {
                    0
                } else {
                    rng::stream(self.seed, k as u64).random_range(0..variants)
                };
                (k % period) * variants + variant
            }
        }
    }

    pub fn graph_at(&self, k: usize) -> &Graph {
        &self.graphs[self.graph_index(k)]
    }
}

/// Uniform random choice each round among connected graphs.
pub fn schedule_finite_connected(
    m: usize,
    specs: &[Vec<(usize, usize)>],
    seed: u64,
) -> Result<TopologySchedule> {
    let graphs = specs
        .iter()
        .map(|edges| metropolis_adjacency(m, edges))
        .collect::<Result<Vec<_>>>()?;
    if let Some(pos) = graphs.iter().position(|g| !g.is_connected()) {
        return Err(Error::Schedule(format!(
            "graph {} of the finite-connected family is disconnected",
            pos + 1
        )));
    }
    TopologySchedule::from_parts(
        Family::FiniteConnected,
        graphs,
        SelectionRule::UniformRandom,
        1,
        seed,
    )
}

/// `count` seeded random connected graphs on `m` nodes, chosen uniformly each round.
pub fn schedule_random_connected(m: usize, count: usize, seed: u64) -> Result<TopologySchedule> {
    let mut rng = rng::seeded(seed);
    let specs: Vec<_> = (0..count.max(1))
        .map(|_| random_connected_edges(m, 0.3, &mut rng))
        .collect();
    schedule_finite_connected(m, &specs, seed)
}

/// Cycles the edges of a seeded random spanning tree over `b` rounds so
/// that any `b` consecutive rounds jointly contain the whole tree. Each of
/// the `b` groups has two variants, the bare tree edges and the same edges
/// plus one random extra edge; each round draws its variant from the seed.
pub fn schedule_uniformly_connected(m: usize, b: usize, seed: u64) -> Result<TopologySchedule> {
    if b == 0 {
        return Err(Error::Schedule("window bound B must be at least 1".into()));
    }
    let mut rng = rng::seeded(seed);
    let mut tree = random_spanning_tree(m, &mut rng);
    tree.shuffle(&mut rng);
    let all = complete_edges(m);
    let mut graphs = Vec::with_capacity(2 * b);
    for group in 0..b {
        let base: Vec<_> = tree.iter().copied().skip(group).step_by(b).collect();
        graphs.push(metropolis_adjacency(m, &base)?);
        let mut jittered = base.clone();
        if !all.is_empty() {
            jittered.push(all[rng.random_range(0..all.len())]);
        }
        graphs.push(metropolis_adjacency(m, &jittered)?);
    }
    TopologySchedule::from_parts(
        Family::UniformlyConnected,
        graphs,
        SelectionRule::PeriodicJitter {
            period: b,
            variants: 2,
        },
        b,
        seed,
    )
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScheduleReport {
    pub passed: bool,
    /// Window length checked: `B`, or 1 for the finite-connected family.
    pub window: usize,
    pub horizon: usize,
    /// Start round of the first window whose edge union is disconnected.
    pub first_violation: Option<usize>,
    /// Smallest positive mixing entry over the horizon.
    pub eta: f64,
}

/// Checks rounds `0..horizon`: every window's edge union is connected and
/// every mixing matrix built with `alphas` has positive entries `>= eta > 0`.
pub fn verify_schedule(
    s: &TopologySchedule,
    horizon: usize,
    alphas: &[f64],
) -> Result<ScheduleReport> {
    let window = match s.family {
        Family::FiniteConnected => 1,
        Family::UniformlyConnected => s.window,
    };
    if horizon < window {
        return Err(Error::Parameter(format!(
            "horizon {horizon} shorter than window {window}"
        )));
    }
    let mut first_violation = None;
    for start in 0..=horizon - window {
        let union = (start..start + window).flat_map(|k| s.graph_at(k).edges.iter().copied());
        if !edges_connected(s.m(), union) {
            first_violation = Some(start);
            break;
        }
    }
    let mut eta = f64::INFINITY;
    for k in 0..horizon {
        eta = eta.min(weight_matrix(s.graph_at(k), alphas)?.eta);
    }
    Ok(ScheduleReport {
        passed: first_violation.is_none() && eta > 0.0,
        window,
        horizon,
        first_violation,
        eta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assert_close(a: &Mat, b: &Mat, tol: f64) {
        assert_eq!(a.shape(), b.shape());
        for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
            assert!((x - y).abs() <= tol, "{a:?} != {b:?}");
        }
    }

    #[test]
    fn metropolis_two_nodes() {
        let g = metropolis_adjacency(2, &[(0, 1)]).unwrap();
        let expected = Mat::from_rows(&[vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap();
        assert_eq!(g.adjacency(), &expected);
        let lap = Mat::from_rows(&[vec![0.5, -0.5], vec![-0.5, 0.5]]).unwrap();
        assert_eq!(g.laplacian(), &lap);
    }

    #[test]
    fn metropolis_complete_three() {
        let g = metropolis_adjacency(3, &complete_edges(3)).unwrap();
        assert_close(g.adjacency(), &Mat::from_fn(3, 3, |_, _| 1.0 / 3.0), 1e-15);
    }

    #[test]
    fn metropolis_empty_and_self_loop() {
        let g = metropolis_adjacency(4, &[]).unwrap();
        assert_eq!(g.adjacency(), &Mat::identity(4));
        assert_eq!(g.laplacian(), &Mat::zeros(4, 4));
        assert!(matches!(
            metropolis_adjacency(3, &[(1, 1)]),
            Err(Error::Graph(_))
        ));
        assert!(matches!(
            metropolis_adjacency(3, &[(0, 3)]),
            Err(Error::Graph(_))
        ));
    }

    #[test]
    fn star_with_three_leaves_stays_doubly_stochastic() {
        let g = metropolis_adjacency(4, &star_edges(4)).unwrap();
        for i in 0..4 {
            let row: f64 = g.adjacency().row(i).iter().sum();
            assert!((row - 1.0).abs() < 1e-15);
            assert!(g.adjacency()[(i, i)] >= 0.0);
        }
    }

    #[test]
    fn laplacian_checks() {
        let path = metropolis_adjacency(3, &path_edges(3)).unwrap();
        let r = laplacian_check(&path);
        assert!(r.lambda_max <= 2.0 && r.connected);
        assert!(r.lambda_min.abs() < 1e-12);

        let empty = metropolis_adjacency(3, &[]).unwrap();
        let r = laplacian_check(&empty);
        assert!(r.eigenvalues.iter().all(|&l| l == 0.0));
        assert!(!r.connected);

        let pair = metropolis_adjacency(2, &[(0, 1)]).unwrap();
        let r = laplacian_check(&pair);
        assert!(r.eigenvalues[0].abs() < 1e-15 && (r.eigenvalues[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn weight_matrix_two_nodes() {
        let g = metropolis_adjacency(2, &[(0, 1)]).unwrap();
        let mix = weight_matrix(&g, &[1.0, 1.0]).unwrap();
        let expected = Mat::from_rows(&[vec![0.75, 0.25], vec![0.25, 0.75]]).unwrap();
        assert_eq!(mix.w, expected);
        assert_eq!(mix.eta, 0.25);
    }

    #[test]
    fn weight_matrix_rejects_bad_steps() {
        let g = metropolis_adjacency(2, &[(0, 1)]).unwrap();
        assert!(weight_matrix(&g, &[0.0, 0.5]).is_err());
        assert!(weight_matrix(&g, &[1.5, 0.5]).is_err());
        assert!(weight_matrix(&g, &[0.5]).is_err());
    }

    #[test]
    fn weight_matrix_disconnected_is_block_diagonal() {
        let g = metropolis_adjacency(4, &[(0, 1), (2, 3)]).unwrap();
        let w = weight_matrix(&g, &[0.3, 0.4, 0.5, 0.6]).unwrap().w;
        for i in 0..2 {
            for j in 2..4 {
                assert_eq!(w[(i, j)], 0.0);
                assert_eq!(w[(j, i)], 0.0);
            }
        }
    }

    #[test]
    fn identical_steps_give_symmetric_mixing() {
        let g = metropolis_adjacency(5, &ring_edges(5)).unwrap();
        let w = weight_matrix(&g, &[0.4; 5]).unwrap().w;
        assert_close(&w, &w.transpose(), 1e-15);
        for j in 0..5 {
            let col: f64 = (0..5).map(|i| w[(i, j)]).sum();
            assert!((col - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn finite_connected_schedules() {
        let ring = schedule_finite_connected(5, &[ring_edges(5)], 3).unwrap();
        assert!((0..20).all(|k| ring.graph_index(k) == 0));

        let specs = vec![ring_edges(5), star_edges(5), path_edges(5)];
        let a = schedule_finite_connected(5, &specs, 17).unwrap();
        let b = schedule_finite_connected(5, &specs, 17).unwrap();
        let seq_a: Vec<_> = (0..100).map(|k| a.graph_index(k)).collect();
        let seq_b: Vec<_> = (0..100).map(|k| b.graph_index(k)).collect();
        assert_eq!(seq_a, seq_b);
        assert!((0..3).all(|g| seq_a.contains(&g)));

        let bad = vec![ring_edges(5), vec![(0, 1)]];
        assert!(matches!(
            schedule_finite_connected(5, &bad, 1),
            Err(Error::Schedule(_))
        ));
    }

    #[test]
    fn uniformly_connected_windows() {
        let s = schedule_uniformly_connected(5, 1, 8).unwrap();
        assert!((0..30).all(|k| s.graph_at(k).is_connected()));

        let s = schedule_uniformly_connected(5, 3, 8).unwrap();
        // exhaustive window check over a long horizon
        for start in 0..200 {
            let union = (start..start + 3).flat_map(|k| s.graph_at(k).edges().iter().copied());
            assert!(edges_connected(5, union), "window at {start}");
        }
        let report = verify_schedule(&s, 200, &[0.5; 5]).unwrap();
        assert!(report.passed, "{report:?}");
        assert!(report.eta > 0.0);
    }

    #[test]
    fn single_edge_path_cycle_is_valid() {
        let m = 5;
        let graphs = path_edges(m)
            .into_iter()
            .map(|e| metropolis_adjacency(m, &[e]).unwrap())
            .collect();
        let s = TopologySchedule::from_parts(
            Family::UniformlyConnected,
            graphs,
            SelectionRule::Cyclic,
            m - 1,
            0,
        )
        .unwrap();
        assert!(verify_schedule(&s, 40, &[0.5; 5]).unwrap().passed);
    }

    #[test]
    fn isolated_node_fails_verification() {
        let graphs = vec![
            metropolis_adjacency(4, &[(1, 2), (2, 3)]).unwrap(),
            metropolis_adjacency(4, &[(1, 3)]).unwrap(),
        ];
        let s = TopologySchedule::from_parts(
            Family::UniformlyConnected,
            graphs,
            SelectionRule::Cyclic,
            2,
            0,
        )
        .unwrap();
        let r = verify_schedule(&s, 10, &[0.5; 4]).unwrap();
        assert!(!r.passed);
        assert_eq!(r.first_violation, Some(0));
    }

    #[test]
    fn finite_connected_verification_uses_unit_window() {
        let s = schedule_random_connected(5, 3, 4).unwrap();
        let r = verify_schedule(&s, 50, &[0.2; 5]).unwrap();
        assert!(r.passed);
        assert_eq!(r.window, 1);
    }
}
