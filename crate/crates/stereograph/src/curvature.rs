//! Graph-curvature engine: co-occurrence subgraph extraction, Ollivier-Ricci
//! edge curvature via exact optimal transport, and sampled observed sectional
//! curvature from geodesic-triangle deviations.
//!
//! The ground metric on subgraphs is hop distance with unit edge length, so
//! the Ricci curvature of an edge is `1 − W(m_x, m_y)` where `m_x` places
//! mass α on `x` and `(1 − α)/deg(x)` on each neighbor.
//!
//! Per-edge computations are independent; everything here is deterministic
//! given the seed and runs offline, cached per (interval, side, seed).

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use thiserror::Error;

use crate::autodiff::Scalar;
use crate::transport::{self, TransportError};

#[derive(Debug, Error)]
pub enum CurvatureError {
    #[error("({0}, {1}) is not an edge")]
    NonEdge(u32, u32),
    #[error("mass distributions live in disconnected components")]
    DisconnectedSupports,
    #[error("graph too small for curvature observation")]
    GraphTooSmall,
    #[error("degenerate sample: zero anchor-midpoint distance")]
    DegenerateSample,
    #[error("invalid mass distribution: {0}")]
    InvalidMass(&'static str),
    #[error("invalid parameter: {0}")]
    BadParam(&'static str),
    #[error(transparent)]
    Transport(#[from] TransportError),
}

pub type Result<T> = std::result::Result<T, CurvatureError>;

/// Which bipartite side an operation refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    User,
    Item,
}

impl Side {
    pub fn name(self) -> &'static str {
        match self {
            Side::User => "user",
            Side::Item => "item",
        }
    }
}

/// Undirected simple graph with sorted neighbor lists.
#[derive(Debug, Clone, Default)]
pub struct SimpleGraph {
    adj: Vec<Vec<u32>>,
}

impl SimpleGraph {
    pub fn new(n: usize) -> Self {
        Self { adj: vec![Vec::new(); n] }
    }

    pub fn from_edges(n: usize, edges: &[(u32, u32)]) -> Self {
        let mut g = Self::new(n);
        for &(a, b) in edges {
            g.add_edge(a, b);
        }
        g
    }

    /// Inserts an undirected edge; self-loops and duplicates are ignored.
    pub fn add_edge(&mut self, a: u32, b: u32) {
        if a == b {
            return;
        }
        for (x, y) in [(a, b), (b, a)] {
            let list = &mut self.adj[x as usize];
            if let Err(pos) = list.binary_search(&y) {
                list.insert(pos, y);
            }
        }
    }

    pub fn node_count(&self) -> usize {
        self.adj.len()
    }

    pub fn degree(&self, x: u32) -> usize {
        self.adj[x as usize].len()
    }

    pub fn neighbors(&self, x: u32) -> &[u32] {
        &self.adj[x as usize]
    }

    pub fn has_edge(&self, a: u32, b: u32) -> bool {
        self.adj[a as usize].binary_search(&b).is_ok()
    }

    /// Edges as (low, high) pairs in sorted order.
    pub fn edges(&self) -> Vec<(u32, u32)> {
        let mut out = Vec::new();
        for (a, nbrs) in self.adj.iter().enumerate() {
            for &b in nbrs {
                if (a as u32) < b {
                    out.push((a as u32, b));
                }
            }
        }
        out
    }

    pub fn edge_count(&self) -> usize {
        self.adj.iter().map(|l| l.len()).sum::<usize>() / 2
    }

    /// Hop distances from `from`; `u32::MAX` marks unreachable nodes.
    pub fn bfs_distances(&self, from: u32) -> Vec<u32> {
        let mut dist = vec![u32::MAX; self.adj.len()];
        let mut queue = std::collections::VecDeque::new();
        dist[from as usize] = 0;
        queue.push_back(from);
        while let Some(v) = queue.pop_front() {
            let d = dist[v as usize];
            for &w in &self.adj[v as usize] {
                if dist[w as usize] == u32::MAX {
                    dist[w as usize] = d + 1;
                    queue.push_back(w);
                }
            }
        }
        dist
    }

    pub fn all_pairs_distances(&self) -> Vec<Vec<u32>> {
        (0..self.adj.len() as u32).map(|v| self.bfs_distances(v)).collect()
    }
}

/// Lazy-random-walk mass distribution over a node's closed neighborhood.
#[derive(Debug, Clone)]
pub struct MassDistribution {
    pub support: Vec<u32>,
    pub mass: Vec<f64>,
}

impl MassDistribution {
    pub fn new(support: Vec<u32>, mass: Vec<f64>) -> Result<Self> {
        if support.len() != mass.len() {
            return Err(CurvatureError::InvalidMass("support/mass length mismatch"));
        }
        if mass.iter().any(|&m| m < 0.0) {
            return Err(CurvatureError::InvalidMass("negative mass"));
        }
        let total: f64 = mass.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(CurvatureError::InvalidMass("masses do not sum to 1"));
        }
        Ok(Self { support, mass })
    }
}

/// `m_x^α`: mass α at `x`, `(1 − α)/deg(x)` on each neighbor. Isolated nodes
/// keep a unit point mass at themselves.
pub fn mass_distribution(g: &SimpleGraph, x: u32, alpha: f64) -> Result<MassDistribution> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(CurvatureError::BadParam("alpha must lie in [0, 1]"));
    }
    let nbrs = g.neighbors(x);
    if nbrs.is_empty() {
        return MassDistribution::new(vec![x], vec![1.0]);
    }
    let mut support = Vec::with_capacity(nbrs.len() + 1);
    let mut mass = Vec::with_capacity(nbrs.len() + 1);
    support.push(x);
    mass.push(alpha);
    let share = (1.0 - alpha) / nbrs.len() as f64;
    for &n in nbrs {
        support.push(n);
        mass.push(share);
    }
    MassDistribution::new(support, mass)
}

/// Exact 1-Wasserstein distance between two mass distributions under the
/// hop metric. Errors when supports straddle different components.
pub fn wasserstein(g: &SimpleGraph, mu: &MassDistribution, nu: &MassDistribution) -> Result<f64> {
    // Zero-mass support points carry no constraint.
    let a: Vec<(u32, f64)> = mu
        .support
        .iter()
        .zip(&mu.mass)
        .filter(|(_, &m)| m > 0.0)
        .map(|(&s, &m)| (s, m))
        .collect();
    let b: Vec<(u32, f64)> = nu
        .support
        .iter()
        .zip(&nu.mass)
        .filter(|(_, &m)| m > 0.0)
        .map(|(&s, &m)| (s, m))
        .collect();
    if a.is_empty() || b.is_empty() {
        return Err(CurvatureError::InvalidMass("empty distribution"));
    }
    let mut cost = Vec::with_capacity(a.len() * b.len());
    for &(sa, _) in &a {
        let dist = g.bfs_distances(sa);
        for &(sb, _) in &b {
            let d = dist[sb as usize];
            if d == u32::MAX {
                return Err(CurvatureError::DisconnectedSupports);
            }
            cost.push(d as f64);
        }
    }
    let supply: Vec<f64> = a.iter().map(|&(_, m)| m).collect();
    let demand: Vec<f64> = b.iter().map(|&(_, m)| m).collect();
    Ok(transport::min_cost(&supply, &demand, &cost)?)
}

/// Ollivier-Ricci curvature of an edge: `1 − W(m_x, m_y) / d(x, y)` with
/// `d(x, y) = 1` for adjacent nodes under the hop metric. Bounded above by 1.
pub fn ollivier_ricci_edge(g: &SimpleGraph, x: u32, y: u32, alpha: f64) -> Result<f64> {
    if !g.has_edge(x, y) {
        return Err(CurvatureError::NonEdge(x, y));
    }
    let mx = mass_distribution(g, x, alpha)?;
    let my = mass_distribution(g, y, alpha)?;
    Ok(1.0 - wasserstein(g, &mx, &my)?)
}

/// Ricci curvatures of sampled edges for one time interval.
#[derive(Debug, Clone, PartialEq)]
pub struct RicciVector {
    pub values: Vec<f64>,
    pub interval: u32,
}

impl RicciVector {
    /// Pads with zeros or uniformly subsamples down to `width`, the fixed
    /// input width of the neural curvature estimator.
    pub fn fitted(&self, width: usize) -> Vec<f64> {
        let mut out = vec![0.0; width];
        let n = self.values.len();
        if n == 0 {
            return out;
        }
        if n <= width {
            out[..n].copy_from_slice(&self.values);
        } else {
            for (k, slot) in out.iter_mut().enumerate() {
                *slot = self.values[k * n / width];
            }
        }
        out
    }
}

/// Curvatures of up to `max_edges` uniformly sampled edges, deterministic
/// given the seed. An edgeless graph yields an empty vector.
pub fn ricci_vector(
    g: &SimpleGraph,
    alpha: f64,
    max_edges: usize,
    seed: u64,
) -> Result<RicciVector> {
    if max_edges == 0 {
        return Err(CurvatureError::BadParam("max_edges must be at least 1"));
    }
    let mut edges = g.edges();
    if edges.len() > max_edges {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        edges.shuffle(&mut rng);
        edges.truncate(max_edges);
        edges.sort_unstable();
    }
    let values = edges
        .iter()
        .map(|&(a, b)| ollivier_ricci_edge(g, a, b, alpha))
        .collect::<Result<Vec<f64>>>()?;
    Ok(RicciVector { values, interval: 0 })
}

/// Parallelogram-law deviation of a geodesic triangle: with `m` the midpoint
/// of `bc`,
/// `γ = d(a,m)² + d(b,c)²/4 − (d(a,b)² + d(a,c)²)/2`,
/// and the normalized form divides by `2·d(a,m)`. Exactly zero in flat space.
pub fn triangle_deviation(dam: f64, dbc: f64, dab: f64, dac: f64) -> Result<(f64, f64)> {
    let gamma = dam * dam + dbc * dbc / 4.0 - (dab * dab + dac * dac) / 2.0;
    if dam <= 0.0 {
        return Err(CurvatureError::DegenerateSample);
    }
    Ok((gamma, gamma / (2.0 * dam)))
}

/// Observed sectional curvature of a graph (Algorithm mode: the sampled
/// center node stands in for the midpoint, with `b, c` drawn from its
/// neighborhood and the anchor `a` drawn from the rest of the graph).
pub fn observed_curvature_graph(g: &SimpleGraph, iterations: usize, seed: u64) -> Result<f64> {
    if iterations == 0 {
        return Err(CurvatureError::BadParam("iterations must be at least 1"));
    }
    let n = g.node_count();
    if n < 3 {
        return Err(CurvatureError::GraphTooSmall);
    }
    let centers: Vec<u32> = (0..n as u32).filter(|&m| g.degree(m) >= 2).collect();
    if centers.is_empty() {
        return Err(CurvatureError::GraphTooSmall);
    }
    let dist = g.all_pairs_distances();
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut center_means = Vec::new();
    for &m in &centers {
        let nbrs = g.neighbors(m);
        let mut acc = 0.0;
        let mut kept = 0usize;
        for _ in 0..iterations {
            let bi = rng.random_range(0..nbrs.len());
            let mut ci = rng.random_range(0..nbrs.len() - 1);
            if ci >= bi {
                ci += 1;
            }
            let (b, c) = (nbrs[bi], nbrs[ci]);
            let mut a = rng.random_range(0..n as u32 - 1);
            if a >= m {
                a += 1;
            }
            let (dam, dbc, dab, dac) = (
                dist[a as usize][m as usize],
                dist[b as usize][c as usize],
                dist[a as usize][b as usize],
                dist[a as usize][c as usize],
            );
            if [dam, dbc, dab, dac].contains(&u32::MAX) {
                continue;
            }
            match triangle_deviation(dam as f64, dbc as f64, dab as f64, dac as f64) {
                Ok((_, norm)) => {
                    acc += norm;
                    kept += 1;
                }
                Err(_) => continue,
            }
        }
        if kept > 0 {
            center_means.push(acc / kept as f64);
        }
    }
    if center_means.is_empty() {
        return Err(CurvatureError::GraphTooSmall);
    }
    Ok(center_means.iter().sum::<f64>() / center_means.len() as f64)
}

/// Observed sectional curvature of a point set with an explicit metric and
/// geodesic midpoint. `b, c` are sampled from the set, `m = midpoint(b, c)`,
/// and the anchor `a` is any third point at positive distance from `m`.
pub fn observed_curvature_points<P, D, M>(
    points: &[P],
    dist: D,
    midpoint: M,
    iterations: usize,
    seed: u64,
) -> Result<f64>
where
    D: Fn(&P, &P) -> f64,
    M: Fn(&P, &P) -> P,
{
    if iterations == 0 {
        return Err(CurvatureError::BadParam("iterations must be at least 1"));
    }
    let n = points.len();
    if n < 3 {
        return Err(CurvatureError::GraphTooSmall);
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut acc = 0.0;
    let mut kept = 0usize;
    for _ in 0..n * iterations {
        let bi = rng.random_range(0..n);
        let mut ci = rng.random_range(0..n - 1);
        if ci >= bi {
            ci += 1;
        }
        let ai = rng.random_range(0..n);
        if ai == bi || ai == ci {
            continue;
        }
        let (a, b, c) = (&points[ai], &points[bi], &points[ci]);
        let m = midpoint(b, c);
        let dam = dist(a, &m);
        match triangle_deviation(dam, dist(b, c), dist(a, b), dist(a, c)) {
            Ok((_, norm)) => {
                acc += norm;
                kept += 1;
            }
            Err(_) => continue,
        }
    }
    if kept == 0 {
        return Err(CurvatureError::GraphTooSmall);
    }
    Ok(acc / kept as f64)
}

/// Squared disagreement between the estimated and observed curvature.
pub fn curvature_loss<S: Scalar>(kappa_e: S, kappa_o: f64) -> S {
    let d = kappa_e - kappa_o;
    d * d
}

/// Events grouped as (entity-of-side, counterpart) id pairs.
///
/// Two entities of the chosen side are linked when they share at least `k`
/// counterparts. `sample_ratio` uniformly subsamples the active entities
/// before linking; node ids in the returned graph index `node_ids`.
pub struct CooccurrenceGraph {
    pub graph: SimpleGraph,
    pub node_ids: Vec<u32>,
}

pub fn build_cooccurrence_subgraph(
    pairs: &[(u32, u32)],
    k: usize,
    sample_ratio: f64,
    seed: u64,
) -> Result<CooccurrenceGraph> {
    if k == 0 {
        return Err(CurvatureError::BadParam("k must be at least 1"));
    }
    if !(sample_ratio > 0.0 && sample_ratio <= 1.0) {
        return Err(CurvatureError::BadParam("sample_ratio must lie in (0, 1]"));
    }
    let mut by_entity: std::collections::BTreeMap<u32, BTreeSet<u32>> = Default::default();
    for &(e, c) in pairs {
        by_entity.entry(e).or_default().insert(c);
    }
    let mut entities: Vec<u32> = by_entity.keys().copied().collect();
    let take = ((entities.len() as f64 * sample_ratio).ceil() as usize).min(entities.len());
    if take < entities.len() {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        entities.shuffle(&mut rng);
        entities.truncate(take);
        entities.sort_unstable();
    }
    let mut graph = SimpleGraph::new(entities.len());
    for i in 0..entities.len() {
        let si = &by_entity[&entities[i]];
        for j in i + 1..entities.len() {
            let sj = &by_entity[&entities[j]];
            let shared = si.intersection(sj).take(k).count();
            if shared >= k {
                graph.add_edge(i as u32, j as u32);
            }
        }
    }
    Ok(CooccurrenceGraph { graph, node_ids: entities })
}

/// One on-disk curvature cache record, keyed by (interval, side).
///
/// Text format, versioned:
///
/// ```text
/// stereograph-curvature-cache v1
/// side user|item
/// interval <u32>
/// kappa_o <f64>
/// ricci <count>
/// <count space-separated f64 values on one line; omitted when count is 0>
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct CurvatureCacheEntry {
    pub side: Side,
    pub interval: u32,
    pub kappa_o: f64,
    pub ricci: Vec<f64>,
}

impl CurvatureCacheEntry {
    pub fn to_text(&self) -> String {
        let mut out = format!(
            "stereograph-curvature-cache v1\nside {}\ninterval {}\nkappa_o {}\nricci {}\n",
            self.side.name(),
            self.interval,
            self.kappa_o,
            self.ricci.len()
        );
        if !self.ricci.is_empty() {
            let vals: Vec<String> = self.ricci.iter().map(|v| v.to_string()).collect();
            out.push_str(&vals.join(" "));
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let bad = |m: &'static str| CurvatureError::BadParam(m);
        let mut lines = text.lines();
        if lines.next() != Some("stereograph-curvature-cache v1") {
            return Err(bad("missing or unsupported cache header"));
        }
        let mut field = |name: &'static str| -> Result<&str> {
            let line = lines.next().ok_or(bad("truncated cache entry"))?;
            line.strip_prefix(name)
                .and_then(|r| r.strip_prefix(' '))
                .ok_or(bad("unexpected cache field"))
        };
        let side = match field("side")? {
            "user" => Side::User,
            "item" => Side::Item,
            _ => return Err(bad("side must be user or item")),
        };
        let interval: u32 = field("interval")?.parse().map_err(|_| bad("bad interval"))?;
        let kappa_o: f64 = field("kappa_o")?.parse().map_err(|_| bad("bad kappa_o"))?;
        if !kappa_o.is_finite() {
            return Err(bad("kappa_o must be finite"));
        }
        let count: usize = field("ricci")?.parse().map_err(|_| bad("bad ricci count"))?;
        let ricci = if count == 0 {
            Vec::new()
        } else {
            let line = lines.next().ok_or(bad("missing ricci values"))?;
            let vals = line
                .split_whitespace()
                .map(|v| v.parse::<f64>().map_err(|_| bad("bad ricci value")))
                .collect::<Result<Vec<f64>>>()?;
            if vals.len() != count {
                return Err(bad("ricci count mismatch"));
            }
            if vals.iter().any(|v| !v.is_finite()) {
                return Err(bad("ricci values must be finite"));
            }
            vals
        };
        if lines.next().is_some_and(|l| !l.trim().is_empty()) {
            return Err(bad("trailing content"));
        }
        Ok(Self { side, interval, kappa_o, ricci })
    }

    /// Canonical cache file name for this entry's key.
    pub fn file_name(&self) -> String {
        format!("curvature-{:05}-{}.txt", self.interval, self.side.name())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn k3() -> SimpleGraph {
        SimpleGraph::from_edges(3, &[(0, 1), (0, 2), (1, 2)])
    }

    #[test]
    fn mass_distribution_shapes() {
        let g = SimpleGraph::from_edges(3, &[(0, 1), (0, 2)]);
        let m = mass_distribution(&g, 0, 0.5).unwrap();
        assert_eq!(m.support, vec![0, 1, 2]);
        assert_eq!(m.mass, vec![0.5, 0.25, 0.25]);
        let all_centre = mass_distribution(&g, 0, 1.0).unwrap();
        assert_eq!(all_centre.mass[0], 1.0);
        let g4 = SimpleGraph::from_edges(5, &[(0, 1), (0, 2), (0, 3), (0, 4)]);
        let m4 = mass_distribution(&g4, 0, 0.5).unwrap();
        assert!(m4.mass[1..].iter().all(|&x| (x - 0.125).abs() < 1e-15));
    }

    #[test]
    fn isolated_node_keeps_unit_mass() {
        let g = SimpleGraph::new(2);
        let m = mass_distribution(&g, 1, 0.5).unwrap();
        assert_eq!(m.support, vec![1]);
        assert_eq!(m.mass, vec![1.0]);
    }

    #[test]
    fn wasserstein_identical_is_zero() {
        let g = k3();
        let m = mass_distribution(&g, 0, 0.5).unwrap();
        assert!(wasserstein(&g, &m, &m).unwrap().abs() < 1e-12);
    }

    #[test]
    fn wasserstein_point_masses() {
        let g = SimpleGraph::from_edges(3, &[(0, 1), (1, 2)]);
        let mu = MassDistribution::new(vec![0], vec![1.0]).unwrap();
        let nu = MassDistribution::new(vec![2], vec![1.0]).unwrap();
        assert!((wasserstein(&g, &mu, &nu).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn wasserstein_disconnected_errors() {
        let g = SimpleGraph::from_edges(4, &[(0, 1), (2, 3)]);
        let mu = mass_distribution(&g, 0, 0.5).unwrap();
        let nu = mass_distribution(&g, 2, 0.5).unwrap();
        assert!(matches!(
            wasserstein(&g, &mu, &nu),
            Err(CurvatureError::DisconnectedSupports)
        ));
    }

    #[test]
    fn ricci_k3_edge() {
        let g = k3();
        let r = ollivier_ricci_edge(&g, 0, 1, 0.5).unwrap();
        assert!((r - 0.75).abs() < 1e-12);
    }

    #[test]
    fn ricci_path_leaf_edge() {
        let g = SimpleGraph::from_edges(3, &[(0, 1), (1, 2)]);
        let r = ollivier_ricci_edge(&g, 0, 1, 0.5).unwrap();
        assert!((r - 0.5).abs() < 1e-12);
    }

    #[test]
    fn ricci_rejects_non_edges() {
        let g = SimpleGraph::from_edges(3, &[(0, 1), (1, 2)]);
        assert!(matches!(
            ollivier_ricci_edge(&g, 0, 2, 0.5),
            Err(CurvatureError::NonEdge(0, 2))
        ));
    }

    #[test]
    fn ricci_vector_k4_is_symmetric() {
        let g = SimpleGraph::from_edges(4, &[(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]);
        let r = ricci_vector(&g, 0.5, 8, 7).unwrap();
        assert_eq!(r.values.len(), 6);
        for v in &r.values {
            assert!((v - r.values[0]).abs() < 1e-12);
        }
        assert!(r.values.iter().all(|&v| v <= 1.0));
    }

    #[test]
    fn ricci_vector_edgeless_pads_to_zero() {
        let g = SimpleGraph::new(4);
        let r = ricci_vector(&g, 0.5, 8, 0).unwrap();
        assert!(r.values.is_empty());
        assert_eq!(r.fitted(4), vec![0.0; 4]);
    }

    #[test]
    fn fitted_pads_and_subsamples() {
        let r = RicciVector { values: vec![1.0, 2.0], interval: 0 };
        assert_eq!(r.fitted(4), vec![1.0, 2.0, 0.0, 0.0]);
        let long = RicciVector { values: (0..8).map(f64::from).collect(), interval: 0 };
        assert_eq!(long.fitted(4), vec![0.0, 2.0, 4.0, 6.0]);
    }

    #[test]
    fn triangle_deviation_euclidean_is_zero() {
        // a = (0, 2), b = (-1, 0), c = (1, 0), m = (0, 0).
        let (gamma, norm) = triangle_deviation(2.0, 2.0, 5f64.sqrt(), 5f64.sqrt()).unwrap();
        assert!(gamma.abs() < 1e-12);
        assert!(norm.abs() < 1e-12);
    }

    #[test]
    fn triangle_deviation_degenerate_skips() {
        assert!(matches!(
            triangle_deviation(0.0, 1.0, 0.5, 0.5),
            Err(CurvatureError::DegenerateSample)
        ));
    }

    #[test]
    fn observed_curvature_tree_is_negative() {
        // Complete binary tree of depth 4 under hop distances.
        let mut edges = Vec::new();
        for v in 1u32..31 {
            edges.push(((v - 1) / 2, v));
        }
        let g = SimpleGraph::from_edges(31, &edges);
        let k = observed_curvature_graph(&g, 16, 11).unwrap();
        assert!(k < 0.0, "tree curvature {k}");
    }

    #[test]
    fn observed_curvature_deterministic() {
        let g = k3();
        let a = observed_curvature_graph(&g, 8, 3).unwrap();
        let b = observed_curvature_graph(&g, 8, 3).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn observed_curvature_too_small() {
        let g = SimpleGraph::from_edges(2, &[(0, 1)]);
        assert!(matches!(
            observed_curvature_graph(&g, 4, 0),
            Err(CurvatureError::GraphTooSmall)
        ));
    }

    #[test]
    fn cooccurrence_basic_link() {
        // Two users sharing one item link at K = 1.
        let pairs = [(0, 10), (1, 10)];
        let cg = build_cooccurrence_subgraph(&pairs, 1, 1.0, 0).unwrap();
        assert_eq!(cg.node_ids, vec![0, 1]);
        assert!(cg.graph.has_edge(0, 1));
    }

    #[test]
    fn cooccurrence_disjoint_sets_are_edgeless() {
        let pairs = [(0, 10), (1, 11)];
        let cg = build_cooccurrence_subgraph(&pairs, 1, 1.0, 0).unwrap();
        assert_eq!(cg.graph.edge_count(), 0);
    }

    #[test]
    fn cooccurrence_ring_pattern() {
        // Four users sharing items pairwise in a ring: 0-1, 1-2, 2-3, 3-0.
        let pairs = [
            (0, 100),
            (1, 100),
            (1, 101),
            (2, 101),
            (2, 102),
            (3, 102),
            (3, 103),
            (0, 103),
        ];
        let cg = build_cooccurrence_subgraph(&pairs, 1, 1.0, 0).unwrap();
        assert_eq!(cg.graph.edge_count(), 4);
        for v in 0..4u32 {
            assert_eq!(cg.graph.degree(v), 2);
        }
    }

    #[test]
    fn cooccurrence_empty_interval() {
        let cg = build_cooccurrence_subgraph(&[], 1, 0.5, 9).unwrap();
        assert_eq!(cg.graph.node_count(), 0);
    }

    #[test]
    fn cooccurrence_requires_k_shared() {
        let pairs = [(0, 10), (0, 11), (1, 10), (1, 11), (2, 10)];
        let cg = build_cooccurrence_subgraph(&pairs, 2, 1.0, 0).unwrap();
        assert!(cg.graph.has_edge(0, 1));
        assert!(!cg.graph.has_edge(0, 2));
    }

    #[test]
    fn cache_entry_roundtrip() {
        let e = CurvatureCacheEntry {
            side: Side::Item,
            interval: 12,
            kappa_o: -0.087_654_321,
            ricci: vec![0.75, 0.5, 0.0, -0.125],
        };
        let text = e.to_text();
        assert_eq!(CurvatureCacheEntry::parse(&text).unwrap(), e);
        // Byte-identical re-serialization.
        assert_eq!(CurvatureCacheEntry::parse(&text).unwrap().to_text(), text);
    }

    #[test]
    fn cache_entry_rejects_garbage() {
        assert!(CurvatureCacheEntry::parse("").is_err());
        assert!(CurvatureCacheEntry::parse("stereograph-curvature-cache v1\nside cat\n").is_err());
        let e = CurvatureCacheEntry { side: Side::User, interval: 0, kappa_o: 0.0, ricci: vec![] };
        let mut text = e.to_text();
        text.push_str("extra\n");
        assert!(CurvatureCacheEntry::parse(&text).is_err());
    }
}
