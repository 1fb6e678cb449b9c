//! The co-evolving GNN: harmonic time encoding, interaction integration,
//! cross-space gyrovector aggregation in the user and item manifolds, the
//! neural curvature estimator, and between-interval embedding transport.
//!
//! Per interval, an entity's update is the left-to-right gyro-sum
//!
//! ```text
//! M_h ⊗ h  ⊕  M_e ⊗ exp_o(e')  ⊕  M_x ⊗ map(midpoint of counterparts)
//! ```
//!
//! where `h` is the entity's embedding carried from the previous interval
//! (after transport onto the current manifold), `e'` aggregates the
//! interval's interaction embeddings in the shared tangent space, and the
//! third term pulls the gyro-midpoint of interacted counterparts across from
//! the other manifold. Möbius addition is non-associative; evaluation order
//! is fixed left-to-right. Entities without events carry their embedding
//! unchanged.

use std::collections::BTreeMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Normal};

use crate::autodiff::Scalar;
use crate::curvature::RicciVector;
use crate::data::InteractionEvent;
use crate::geometry::{
    self, Curvature, GeometryError, ManifoldPoint,
};
use crate::linalg::{self, Matrix};

pub type Result<T> = std::result::Result<T, GeometryError>;

/// Time-encoder flavor. `Cosine` is the harmonic encoder
/// `φ(t) = √(1/d) [cos(ω_i t + θ_i)]`; `Fourier` emits √(2/d)-scaled
/// paired (cos, sin) features from d/2 frequencies, whose inner-product
/// kernel is exactly translation invariant.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EncoderMode {
    Cosine,
    Fourier,
}

/// Interaction-aggregation order: MLP-then-pool or pool-then-MLP.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fusion {
    Early,
    Late,
}

/// Per-interval curvature pair of the two spaces.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvaturePair {
    pub kappa_u: f64,
    pub kappa_i: f64,
    pub interval: u32,
}

/// Shape-defining dimensions of the trainable tensors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelDims {
    pub dim: usize,
    pub feature_dim: usize,
    /// Input and hidden width of the curvature estimator.
    pub curv_width: usize,
}

/// Two-layer perceptron with a bilinear readout: `κ_e = z(r)ᵀ W₈ z(r)` where
/// `z(r) = W₂ tanh(W₁ r + b₁) + b₂`. The sign of the output is unconstrained.
#[derive(Debug, Clone)]
pub struct CurvNet<S> {
    pub hidden: Matrix<S>,
    pub hidden_bias: Vec<S>,
    pub output: Matrix<S>,
    pub output_bias: Vec<S>,
    pub bilinear: Matrix<S>,
}

impl<S: Scalar> CurvNet<S> {
    pub fn mlp(&self, r: &[S]) -> Vec<S> {
        let h: Vec<S> = self
            .hidden
            .matvec(r)
            .into_iter()
            .zip(&self.hidden_bias)
            .map(|(v, &b)| (v + b).tanh())
            .collect();
        self.output
            .matvec(&h)
            .into_iter()
            .zip(&self.output_bias)
            .map(|(v, &b)| v + b)
            .collect()
    }

    pub fn estimate(&self, r: &[S]) -> S {
        bilinear_form(&self.mlp(r), &self.bilinear)
    }
}

/// `zᵀ W z`; with an identity MLP and `W = I` this is `‖z‖²`.
pub fn bilinear_form<S: Scalar>(z: &[S], w: &Matrix<S>) -> S {
    linalg::dot(z, &w.matvec(z))
}

/// Estimates the interval curvature from a fitted Ricci vector.
pub fn estimate_curvature<S: Scalar>(net: &CurvNet<S>, ricci: &RicciVector) -> S {
    let anchor = net.bilinear.data[0];
    let r: Vec<S> = ricci
        .fitted(net.hidden.cols)
        .into_iter()
        .map(|v| anchor.lift(v))
        .collect();
    net.estimate(&r)
}

/// All trainable tensors.
#[derive(Debug, Clone)]
pub struct ParameterSet<S> {
    pub user_hidden: Matrix<S>,      // M1
    pub user_interaction: Matrix<S>, // M2
    pub user_from_items: Matrix<S>,  // M3
    pub item_hidden: Matrix<S>,      // M4
    pub item_interaction: Matrix<S>, // M5
    pub item_from_users: Matrix<S>,  // M6
    pub integration: Matrix<S>,      // W7, dim x (feature_dim + dim)
    pub omega: Vec<S>,
    pub theta: Vec<S>,
    pub curv_user: CurvNet<S>,
    pub curv_item: CurvNet<S>,
}

/// Offsets of each named tensor inside the flat parameter vector.
#[derive(Debug, Clone)]
pub struct ParamLayout {
    pub dims: ModelDims,
    entries: Vec<(String, usize, usize)>, // name, offset, len
    total: usize,
}

impl ParamLayout {
    pub fn new(dims: ModelDims) -> Self {
        let d = dims.dim;
        let r = dims.curv_width;
        let mut entries = Vec::new();
        let mut off = 0usize;
        let push = |name: &str, len: usize, off: &mut usize, entries: &mut Vec<_>| {
            entries.push((name.to_string(), *off, len));
            *off += len;
        };
        for name in ["m1", "m2", "m3", "m4", "m5", "m6"] {
            push(name, d * d, &mut off, &mut entries);
        }
        push("w7", d * (dims.feature_dim + d), &mut off, &mut entries);
        push("omega", d, &mut off, &mut entries);
        push("theta", d, &mut off, &mut entries);
        for side in ["user", "item"] {
            push(&format!("curv_{side}_w1"), r * r, &mut off, &mut entries);
            push(&format!("curv_{side}_b1"), r, &mut off, &mut entries);
            push(&format!("curv_{side}_w2"), r * r, &mut off, &mut entries);
            push(&format!("curv_{side}_b2"), r, &mut off, &mut entries);
            push(&format!("curv_{side}_w8"), r * r, &mut off, &mut entries);
        }
        Self { dims, entries, total: off }
    }

    pub fn total(&self) -> usize {
        self.total
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(n, _, _)| n.as_str())
    }

    pub fn slice_of<'a, T>(&self, flat: &'a [T], name: &str) -> &'a [T] {
        let (_, off, len) = self
            .entries
            .iter()
            .find(|(n, _, _)| n == name)
            .unwrap_or_else(|| panic!("unknown parameter {name}"));
        &flat[*off..off + len]
    }

    pub fn slice_of_mut<'a, T>(&self, flat: &'a mut [T], name: &str) -> &'a mut [T] {
        let (_, off, len) = self
            .entries
            .iter()
            .find(|(n, _, _)| n == name)
            .unwrap_or_else(|| panic!("unknown parameter {name}"));
        &mut flat[*off..off + len]
    }

    /// Views a flat scalar vector as the structured parameter set.
    pub fn build<S: Scalar>(&self, flat: &[S]) -> ParameterSet<S> {
        assert_eq!(flat.len(), self.total);
        let d = self.dims.dim;
        let r = self.dims.curv_width;
        let mat = |name: &str, rows: usize, cols: usize| {
            Matrix::from_vec(rows, cols, self.slice_of(flat, name).to_vec())
        };
        let net = |side: &str| CurvNet {
            hidden: mat(&format!("curv_{side}_w1"), r, r),
            hidden_bias: self.slice_of(flat, &format!("curv_{side}_b1")).to_vec(),
            output: mat(&format!("curv_{side}_w2"), r, r),
            output_bias: self.slice_of(flat, &format!("curv_{side}_b2")).to_vec(),
            bilinear: mat(&format!("curv_{side}_w8"), r, r),
        };
        ParameterSet {
            user_hidden: mat("m1", d, d),
            user_interaction: mat("m2", d, d),
            user_from_items: mat("m3", d, d),
            item_hidden: mat("m4", d, d),
            item_interaction: mat("m5", d, d),
            item_from_users: mat("m6", d, d),
            integration: mat("w7", d, self.dims.feature_dim + d),
            omega: self.slice_of(flat, "omega").to_vec(),
            theta: self.slice_of(flat, "theta").to_vec(),
            curv_user: net("user"),
            curv_item: net("item"),
        }
    }

    /// Named gradient tensors from a flat adjoint vector; every trainable
    /// parameter appears exactly once.
    pub fn gradient_map(&self, flat_grads: &[f64]) -> BTreeMap<String, Vec<f64>> {
        assert_eq!(flat_grads.len(), self.total);
        self.entries
            .iter()
            .map(|(name, off, len)| (name.clone(), flat_grads[*off..off + len].to_vec()))
            .collect()
    }

    /// Initialization. The hidden-carry matrices start near the identity so
    /// state survives the interval recurrence, the cross-space matrices start
    /// as a scaled identity (a gentle pull toward interaction counterparts),
    /// and the interaction matrices start small. ω spans three decades around
    /// the data's time scale, θ starts at zero.
    pub fn init(&self, time_scale: f64, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let mut flat = vec![0.0f64; self.total];
        let d = self.dims.dim;
        let r = self.dims.curv_width;
        let mut fill = |flat: &mut [f64], name: &str, diag: f64, std: f64, rng: &mut ChaCha12Rng| {
            let (_, off, len) = self
                .entries
                .iter()
                .find(|(n, _, _)| n == name)
                .unwrap()
                .clone();
            let dist = Normal::new(0.0, std).unwrap();
            for v in &mut flat[off..off + len] {
                *v = dist.sample(rng);
            }
            if diag != 0.0 {
                // Square matrices only.
                let n = (len as f64).sqrt() as usize;
                debug_assert_eq!(n * n, len);
                for i in 0..n {
                    flat[off + i * n + i] += diag;
                }
            }
        };
        // The carry diagonal contracts so that, together with the cross-space
        // pull, one interval's update has net norm gain below one; long rolls
        // then settle at an interior radius instead of saturating the chart.
        for name in ["m1", "m4"] {
            fill(&mut flat, name, 0.75, 0.01, &mut rng);
        }
        for name in ["m2", "m5"] {
            fill(&mut flat, name, 0.0, 0.05 / (d as f64).sqrt(), &mut rng);
        }
        for name in ["m3", "m6"] {
            fill(&mut flat, name, 0.2, 0.01, &mut rng);
        }
        let w7_std = 1.0 / ((self.dims.feature_dim + d) as f64).sqrt();
        fill(&mut flat, "w7", 0.0, w7_std, &mut rng);
        for side in ["user", "item"] {
            let cstd = 1.0 / (r as f64).sqrt();
            fill(&mut flat, &format!("curv_{side}_w1"), 0.0, cstd, &mut rng);
            fill(&mut flat, &format!("curv_{side}_w2"), 0.0, cstd, &mut rng);
            fill(&mut flat, &format!("curv_{side}_w8"), 0.0, cstd, &mut rng);
        }
        // Log-spaced frequencies from 1/time_scale down three decades.
        let scale = time_scale.max(f64::MIN_POSITIVE);
        let omega_off = self.entries.iter().find(|(n, _, _)| n == "omega").unwrap().1;
        for i in 0..d {
            let expo = if d > 1 { 3.0 * i as f64 / (d - 1) as f64 } else { 0.0 };
            flat[omega_off + i] = 10f64.powf(-expo) / scale;
        }
        flat
    }
}

/// Harmonic time encoding.
pub fn time_encode<S: Scalar>(t: f64, omega: &[S], theta: &[S], mode: EncoderMode) -> Vec<S> {
    let d = omega.len();
    assert_eq!(theta.len(), d);
    assert!(d >= 1);
    match mode {
        EncoderMode::Cosine => {
            let c = (1.0 / d as f64).sqrt();
            (0..d)
                .map(|i| (omega[i] * t + theta[i]).cos() * c)
                .collect()
        }
        EncoderMode::Fourier => {
            assert!(d % 2 == 0, "fourier encoding requires an even dimension");
            let c = (2.0 / d as f64).sqrt();
            let mut out = Vec::with_capacity(d);
            for i in 0..d / 2 {
                let phase = omega[i] * t + theta[i];
                out.push(phase.cos() * c);
                out.push(phase.sin() * c);
            }
            out
        }
    }
}

/// Tangent-space interaction embedding `e = tanh(W₇ · [X : φ(t)])`.
/// Zero-width features degrade to a time-only input.
pub fn integrate_interaction<S: Scalar>(
    features: &[f64],
    t: f64,
    params: &ParameterSet<S>,
    mode: EncoderMode,
) -> Vec<S> {
    let anchor = params.integration.data[0];
    let mut input: Vec<S> = features.iter().map(|&f| anchor.lift(f)).collect();
    input.extend(time_encode(t, &params.omega, &params.theta, mode));
    assert_eq!(
        input.len(),
        params.integration.cols,
        "feature width does not match the integration matrix"
    );
    params
        .integration
        .matvec(&input)
        .into_iter()
        .map(|v| v.tanh())
        .collect()
}

/// Interval interaction aggregate for one entity: mean pooling composed with
/// the one-layer integration perceptron, in the order picked by `fusion`.
/// An empty event set yields the zero vector.
pub fn aggregate_interactions<S: Scalar>(
    events: &[&InteractionEvent],
    params: &ParameterSet<S>,
    fusion: Fusion,
    mode: EncoderMode,
) -> Vec<S> {
    let anchor = params.integration.data[0];
    if events.is_empty() {
        return vec![anchor.lift(0.0); params.integration.rows];
    }
    match fusion {
        Fusion::Late => {
            let each: Vec<Vec<S>> = events
                .iter()
                .map(|e| integrate_interaction(&e.features, e.t, params, mode))
                .collect();
            linalg::mean(&each)
        }
        Fusion::Early => {
            let inputs: Vec<Vec<S>> = events
                .iter()
                .map(|e| {
                    let mut input: Vec<S> =
                        e.features.iter().map(|&f| anchor.lift(f)).collect();
                    input.extend(time_encode(e.t, &params.omega, &params.theta, mode));
                    input
                })
                .collect();
            params
                .integration
                .matvec(&linalg::mean(&inputs))
                .into_iter()
                .map(|v| v.tanh())
                .collect()
        }
    }
}

/// One cross-space aggregation: hidden carry, interaction lift, and the
/// counterpart midpoint mapped across, gyro-summed left-to-right.
#[allow(clippy::too_many_arguments)]
fn aggregate_entity<S: Scalar>(
    hidden: &ManifoldPoint<S>,
    interaction: &[S],
    counterpart_mid: &ManifoldPoint<S>,
    m_hidden: &Matrix<S>,
    m_interaction: &Matrix<S>,
    m_cross: &Matrix<S>,
    kappa_self: Curvature,
) -> Result<ManifoldPoint<S>> {
    let term1 = geometry::mobius_matvec(m_hidden, hidden)?;
    let lifted = geometry::exp_map_origin(kappa_self, interaction)?;
    let term2 = geometry::mobius_matvec(m_interaction, &lifted)?;
    let crossed = geometry::map_between(counterpart_mid, kappa_self)?;
    let term3 = geometry::mobius_matvec(m_cross, &crossed)?;
    geometry::mobius_add(&geometry::mobius_add(&term1, &term2)?, &term3)
}

/// Eq.-(7)-style user update.
pub fn aggregate_user<S: Scalar>(
    hidden: &ManifoldPoint<S>,
    interaction: &[S],
    item_mid: &ManifoldPoint<S>,
    params: &ParameterSet<S>,
    kappa_u: Curvature,
) -> Result<ManifoldPoint<S>> {
    aggregate_entity(
        hidden,
        interaction,
        item_mid,
        &params.user_hidden,
        &params.user_interaction,
        &params.user_from_items,
        kappa_u,
    )
}

/// Eq.-(8)-style item update (mirror of [`aggregate_user`]).
pub fn aggregate_item<S: Scalar>(
    hidden: &ManifoldPoint<S>,
    interaction: &[S],
    user_mid: &ManifoldPoint<S>,
    params: &ParameterSet<S>,
    kappa_i: Curvature,
) -> Result<ManifoldPoint<S>> {
    aggregate_entity(
        hidden,
        interaction,
        user_mid,
        &params.item_hidden,
        &params.item_interaction,
        &params.item_from_users,
        kappa_i,
    )
}

/// Forward-pass options for one interval.
#[derive(Debug, Clone, Copy)]
pub struct ForwardOptions {
    pub fusion: Fusion,
    pub encoder: EncoderMode,
    pub layers: usize,
    /// Inverted dropout on the tangent-space interaction aggregates;
    /// `None` disables it (evaluation, gradient checks).
    pub dropout: Option<(f64, u64)>,
    /// Tangent dot-product attention for gyromidpoint weights; uniform
    /// weights when disabled (the default).
    pub attention: bool,
}

impl Default for ForwardOptions {
    fn default() -> Self {
        Self {
            fusion: Fusion::Late,
            encoder: EncoderMode::Cosine,
            layers: 1,
            dropout: None,
            attention: false,
        }
    }
}

/// Runs the cross-space aggregation for one interval, stacking `layers`
/// applications that re-feed outputs as hidden inputs. Inputs are the
/// transported previous-interval tables (the hidden states `h`); the result
/// is the interval's α view. Entities without events carry unchanged.
pub fn run_interval<S: Scalar>(
    users: &[ManifoldPoint<S>],
    items: &[ManifoldPoint<S>],
    events: &[InteractionEvent],
    params: &ParameterSet<S>,
    opts: &ForwardOptions,
) -> Result<(Vec<ManifoldPoint<S>>, Vec<ManifoldPoint<S>>)> {
    assert!(opts.layers >= 1);
    let kappa_u = users.first().map(|p| p.kappa);
    let kappa_i = items.first().map(|p| p.kappa);

    let mut by_user: BTreeMap<u32, Vec<&InteractionEvent>> = BTreeMap::new();
    let mut by_item: BTreeMap<u32, Vec<&InteractionEvent>> = BTreeMap::new();
    for e in events {
        by_user.entry(e.user).or_default().push(e);
        by_item.entry(e.item).or_default().push(e);
    }

    // Interaction aggregates are interval-level quantities, computed once and
    // shared across layers.
    let mut agg_user: BTreeMap<u32, Vec<S>> = by_user
        .iter()
        .map(|(&u, evs)| (u, aggregate_interactions(evs, params, opts.fusion, opts.encoder)))
        .collect();
    let mut agg_item: BTreeMap<u32, Vec<S>> = by_item
        .iter()
        .map(|(&i, evs)| (i, aggregate_interactions(evs, params, opts.fusion, opts.encoder)))
        .collect();
    if let Some((rate, seed)) = opts.dropout {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let keep = 1.0 - rate;
        let mut apply = |agg: &mut BTreeMap<u32, Vec<S>>| {
            for v in agg.values_mut() {
                for s in v.iter_mut() {
                    *s = if rng.random::<f64>() < keep { *s * (1.0 / keep) } else { *s * 0.0 };
                }
            }
        };
        apply(&mut agg_user);
        apply(&mut agg_item);
    }

    let mut cur_users = users.to_vec();
    let mut cur_items = items.to_vec();
    for _ in 0..opts.layers {
        let mut next_users = cur_users.clone();
        let mut next_items = cur_items.clone();
        for (&u, evs) in &by_user {
            let neighbors: Vec<ManifoldPoint<S>> = evs
                .iter()
                .map(|e| cur_items[e.item as usize].clone())
                .collect();
            let mid = midpoint_of(&neighbors, &cur_users[u as usize], opts.attention)?;
            next_users[u as usize] = aggregate_user(
                &cur_users[u as usize],
                &agg_user[&u],
                &mid,
                params,
                kappa_u.unwrap(),
            )?;
        }
        for (&i, evs) in &by_item {
            let neighbors: Vec<ManifoldPoint<S>> = evs
                .iter()
                .map(|e| cur_users[e.user as usize].clone())
                .collect();
            let mid = midpoint_of(&neighbors, &cur_items[i as usize], opts.attention)?;
            next_items[i as usize] = aggregate_item(
                &cur_items[i as usize],
                &agg_item[&i],
                &mid,
                params,
                kappa_i.unwrap(),
            )?;
        }
        cur_users = next_users;
        cur_items = next_items;
    }
    Ok((cur_users, cur_items))
}

/// Gyromidpoint of the counterpart neighborhood, uniform by default or with
/// tangent dot-product attention against the anchor's hidden state.
fn midpoint_of<S: Scalar>(
    neighbors: &[ManifoldPoint<S>],
    anchor: &ManifoldPoint<S>,
    attention: bool,
) -> Result<ManifoldPoint<S>> {
    let one = neighbors[0].coords[0].lift(1.0);
    if !attention || neighbors.len() == 1 {
        return geometry::gyromidpoint(neighbors, &vec![one; neighbors.len()]);
    }
    let query = geometry::log_map_origin(anchor);
    let scores: Vec<S> = neighbors
        .iter()
        .map(|p| linalg::dot(&query, &geometry::log_map_origin(p)))
        .collect();
    let max = scores.iter().map(|s| s.value()).fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<S> = scores.iter().map(|&s| (s - max).exp()).collect();
    let total = S::sum(&exps);
    let weights: Vec<S> = exps.iter().map(|&e| e / total).collect();
    geometry::gyromidpoint(neighbors, &weights)
}

/// Per-user and per-item manifold points plus per-entity state carried
/// across intervals. The stored points double as the hidden states `h`: at
/// interval start they are exactly the previous interval's embeddings
/// transported onto the current manifolds.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    pub users: Vec<Vec<f64>>,
    pub items: Vec<Vec<f64>>,
    pub kappa_u: f64,
    pub kappa_i: f64,
    /// Most recent interaction time per entity; 0 before any interaction.
    pub last_time_users: Vec<f64>,
    pub last_time_items: Vec<f64>,
}

impl EmbeddingTable {
    /// Embeddings start as exp-mapped entity features, or exp-mapped small
    /// normal vectors when features are absent. The random radius is
    /// dimension-normalized so initial points sit well inside the ball
    /// regardless of `dim`.
    pub fn init(
        n_users: usize,
        n_items: usize,
        dim: usize,
        user_features: &[Vec<f64>],
        item_features: &[Vec<f64>],
        kappa_u: f64,
        kappa_i: f64,
        seed: u64,
    ) -> Result<Self> {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, 0.3 / (dim as f64).sqrt()).unwrap();
        let mut init_side = |n: usize, feats: &[Vec<f64>], kappa: f64| -> Result<Vec<Vec<f64>>> {
            (0..n)
                .map(|e| {
                    let v: Vec<f64> = if let Some(f) = feats.get(e).filter(|f| f.len() == dim) {
                        f.clone()
                    } else {
                        (0..dim).map(|_| normal.sample(&mut rng)).collect()
                    };
                    Ok(geometry::exp_map_origin(Curvature::new(kappa), &v)?.coords)
                })
                .collect()
        };
        Ok(Self {
            users: init_side(n_users, user_features, kappa_u)?,
            items: init_side(n_items, item_features, kappa_i)?,
            kappa_u,
            kappa_i,
            last_time_users: vec![0.0; n_users],
            last_time_items: vec![0.0; n_items],
        })
    }

    pub fn user_point(&self, u: u32) -> ManifoldPoint<f64> {
        ManifoldPoint { coords: self.users[u as usize].clone(), kappa: Curvature::new(self.kappa_u) }
    }

    pub fn item_point(&self, i: u32) -> ManifoldPoint<f64> {
        ManifoldPoint { coords: self.items[i as usize].clone(), kappa: Curvature::new(self.kappa_i) }
    }
}

/// Transports every embedding onto the next interval's manifolds. Unchanged
/// curvature is the identity.
pub fn advance_interval(table: &EmbeddingTable, next: CurvaturePair) -> Result<EmbeddingTable> {
    let mut out = table.clone();
    let transport = |pts: &mut Vec<Vec<f64>>, from: f64, to: f64| -> Result<()> {
        if from == to {
            return Ok(());
        }
        for p in pts.iter_mut() {
            let point = ManifoldPoint { coords: std::mem::take(p), kappa: Curvature::new(from) };
            *p = geometry::map_between(&point, Curvature::new(to))?.coords;
        }
        Ok(())
    };
    transport(&mut out.users, table.kappa_u, next.kappa_u)?;
    transport(&mut out.items, table.kappa_i, next.kappa_i)?;
    out.kappa_u = next.kappa_u;
    out.kappa_i = next.kappa_i;
    Ok(out)
}

/// Scores every item for a user at query time `t`: the user embedding is
/// mapped into the item space and compared with the temporal similarity of
/// [`crate::contrast::similarity`], both time arguments at `t`. Higher is
/// more likely; ranking ties break by ascending item id downstream.
pub fn predict_scores(
    user: u32,
    table: &EmbeddingTable,
    t: f64,
    params: &ParameterSet<f64>,
    encoder: EncoderMode,
    kernel: crate::contrast::TimeKernel,
) -> Result<Vec<f64>> {
    let mapped = geometry::map_between(&table.user_point(user), Curvature::new(table.kappa_i))?;
    let enc = time_encode(t, &params.omega, &params.theta, encoder);
    let mut scores = Vec::with_capacity(table.items.len());
    for i in 0..table.items.len() as u32 {
        let item = table.item_point(i);
        let s = crate::contrast::similarity_with_kernel(&mapped, &item, &enc, &enc, t, t, kernel)?;
        scores.push(s);
    }
    Ok(scores)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Tape;

    fn dims(d: usize, f: usize, r: usize) -> ModelDims {
        ModelDims { dim: d, feature_dim: f, curv_width: r }
    }

    fn small_params(seed: u64) -> (ParamLayout, Vec<f64>) {
        let layout = ParamLayout::new(dims(4, 0, 8));
        let flat = layout.init(1.0, seed);
        (layout, flat)
    }

    #[test]
    fn layout_roundtrip_and_shapes() {
        let (layout, flat) = small_params(1);
        let p = layout.build(&flat);
        assert_eq!(p.user_hidden.rows, 4);
        assert_eq!(p.integration.cols, 4);
        assert_eq!(p.omega.len(), 4);
        assert_eq!(p.curv_user.bilinear.rows, 8);
        assert_eq!(layout.total(), flat.len());
        let gmap = layout.gradient_map(&vec![0.0; layout.total()]);
        assert_eq!(gmap.len(), layout.names().count());
    }

    #[test]
    fn time_encode_trivial_cases() {
        let omega = vec![0.0];
        let theta = vec![0.0];
        let enc = time_encode(123.4, &omega, &theta, EncoderMode::Cosine);
        assert_eq!(enc, vec![1.0]);
        // t = 0, theta = 0 -> sqrt(1/d) * ones.
        let omega = vec![0.3, 0.7, 1.1];
        let theta = vec![0.0; 3];
        let enc = time_encode(0.0, &omega, &theta, EncoderMode::Cosine);
        for v in enc {
            assert!((v - (1.0f64 / 3.0).sqrt()).abs() < 1e-15);
        }
    }

    #[test]
    fn fourier_kernel_translation_invariant() {
        let omega = vec![0.5, 0.03, 1.7, 0.0];
        let theta = vec![0.1, -0.4, 0.9, 0.2];
        let kernel = |t1: f64, t2: f64| {
            let a = time_encode(t1, &omega, &theta, EncoderMode::Fourier);
            let b = time_encode(t2, &omega, &theta, EncoderMode::Fourier);
            linalg::dot(&a, &b)
        };
        let base = kernel(1.0, 3.5);
        for delta in [10.0, -4.25, 1e3] {
            assert!((kernel(1.0 + delta, 3.5 + delta) - base).abs() < 1e-9);
        }
    }

    #[test]
    fn integrate_zero_matrix_gives_zero() {
        let (layout, mut flat) = small_params(2);
        for (name, off, len) in layout.entries.iter().filter(|(n, _, _)| n == "w7") {
            let _ = name;
            flat[*off..off + len].fill(0.0);
        }
        let p = layout.build(&flat);
        let e = integrate_interaction(&[], 2.0, &p, EncoderMode::Cosine);
        assert!(e.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn aggregate_single_event_same_under_both_fusions() {
        let (layout, flat) = small_params(3);
        let p = layout.build(&flat);
        let ev = InteractionEvent { user: 0, item: 0, t: 1.5, features: vec![] };
        let evs = [&ev];
        let late = aggregate_interactions(&evs, &p, Fusion::Late, EncoderMode::Cosine);
        let early = aggregate_interactions(&evs, &p, Fusion::Early, EncoderMode::Cosine);
        for (a, b) in late.iter().zip(&early) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn aggregate_repeated_events_equal_single() {
        let (layout, flat) = small_params(3);
        let p = layout.build(&flat);
        let ev = InteractionEvent { user: 0, item: 0, t: 1.5, features: vec![] };
        let once = aggregate_interactions(&[&ev], &p, Fusion::Late, EncoderMode::Cosine);
        let thrice = aggregate_interactions(&[&ev, &ev, &ev], &p, Fusion::Late, EncoderMode::Cosine);
        for (a, b) in once.iter().zip(&thrice) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn aggregate_empty_is_zero() {
        let (layout, flat) = small_params(3);
        let p = layout.build(&flat);
        let out = aggregate_interactions::<f64>(&[], &p, Fusion::Late, EncoderMode::Cosine);
        assert_eq!(out, vec![0.0; 4]);
    }

    #[test]
    fn curvnet_quadratic_form() {
        let z = vec![1.0, 0.0, 2.0];
        let eye = Matrix::identity(3);
        assert!((bilinear_form(&z, &eye) - 5.0).abs() < 1e-15);
        let mut neg = Matrix::identity(3);
        for i in 0..3 {
            neg.data[i * 3 + i] = -1.0;
        }
        assert!((bilinear_form(&vec![1.0, 0.0, 0.0], &neg) + 1.0).abs() < 1e-15);
    }

    #[test]
    fn curvnet_zero_bilinear_estimates_zero() {
        let (layout, mut flat) = small_params(5);
        let off = layout.entries.iter().find(|(n, _, _)| n == "curv_user_w8").unwrap().1;
        let len = layout.entries.iter().find(|(n, _, _)| n == "curv_user_w8").unwrap().2;
        flat[off..off + len].fill(0.0);
        let p = layout.build(&flat);
        let r = RicciVector { values: vec![0.5, -0.25], interval: 0 };
        assert_eq!(estimate_curvature(&p.curv_user, &r), 0.0);
    }

    #[test]
    fn flat_space_interval_matches_euclidean_oracle() {
        // kappa = 0: the update must equal M1 h + M2 e' + M3 i.
        let (layout, flat) = small_params(7);
        let p = layout.build(&flat);
        let k = Curvature::new(0.0);
        let users = vec![ManifoldPoint { coords: vec![0.1, -0.2, 0.3, 0.05], kappa: k }];
        let items = vec![ManifoldPoint { coords: vec![-0.4, 0.2, 0.0, 0.1], kappa: k }];
        let events = vec![InteractionEvent { user: 0, item: 0, t: 2.0, features: vec![] }];
        let opts = ForwardOptions::default();
        let (new_users, _) = run_interval(&users, &items, &events, &p, &opts).unwrap();

        let e_prime = aggregate_interactions(&[&events[0]], &p, Fusion::Late, EncoderMode::Cosine);
        let expect: Vec<f64> = (0..4)
            .map(|r| {
                let m1h = linalg::dot(p.user_hidden.row(r), &users[0].coords);
                let m2e = linalg::dot(p.user_interaction.row(r), &e_prime);
                let m3i = linalg::dot(p.user_from_items.row(r), &items[0].coords);
                m1h + m2e + m3i
            })
            .collect();
        for (a, b) in new_users[0].coords.iter().zip(&expect) {
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
    }

    #[test]
    fn inactive_entities_carry_unchanged() {
        let (layout, flat) = small_params(7);
        let p = layout.build(&flat);
        let k = Curvature::new(-1.0);
        let users = vec![
            ManifoldPoint { coords: vec![0.1, 0.0, 0.0, 0.0], kappa: k },
            ManifoldPoint { coords: vec![0.0, 0.2, 0.0, 0.0], kappa: k },
        ];
        let items = vec![ManifoldPoint { coords: vec![0.0, 0.0, 0.3, 0.0], kappa: k }];
        let events = vec![InteractionEvent { user: 0, item: 0, t: 1.0, features: vec![] }];
        let (new_users, _) =
            run_interval(&users, &items, &events, &p, &ForwardOptions::default()).unwrap();
        assert_eq!(new_users[1].coords, users[1].coords);
        assert_ne!(new_users[0].coords, users[0].coords);
    }

    #[test]
    fn two_layers_propagate_two_hops() {
        // Chain u1 - i1 - u2: with two layers, u2 feels u1's state.
        let (layout, flat) = small_params(9);
        let p = layout.build(&flat);
        let k = Curvature::new(0.0);
        let mk = |c: Vec<f64>| ManifoldPoint { coords: c, kappa: k };
        let users = vec![mk(vec![0.5, 0.0, 0.0, 0.0]), mk(vec![0.0, 0.5, 0.0, 0.0])];
        let items = vec![mk(vec![0.0, 0.0, 0.5, 0.0])];
        let events = vec![
            InteractionEvent { user: 0, item: 0, t: 1.0, features: vec![] },
            InteractionEvent { user: 1, item: 0, t: 2.0, features: vec![] },
        ];
        let one = ForwardOptions { layers: 1, ..Default::default() };
        let two = ForwardOptions { layers: 2, ..Default::default() };
        let (u_one, _) = run_interval(&users, &items, &events, &p, &one).unwrap();
        let (u_two, _) = run_interval(&users, &items, &events, &p, &two).unwrap();

        // Perturb u1 and rerun: with one layer u2 must not move (its update
        // reads the item's previous state), with two layers it must.
        let mut users_p = users.clone();
        users_p[0].coords[0] += 0.25;
        let (u_one_p, _) = run_interval(&users_p, &items, &events, &p, &one).unwrap();
        let (u_two_p, _) = run_interval(&users_p, &items, &events, &p, &two).unwrap();
        let moved = |a: &ManifoldPoint<f64>, b: &ManifoldPoint<f64>| {
            a.coords.iter().zip(&b.coords).any(|(x, y)| (x - y).abs() > 1e-12)
        };
        assert!(!moved(&u_one[1], &u_one_p[1]));
        assert!(moved(&u_two[1], &u_two_p[1]));
    }

    #[test]
    fn advance_interval_identity_and_oracle() {
        let table = EmbeddingTable {
            users: vec![vec![0.5, 0.0]],
            items: vec![vec![0.1, 0.1]],
            kappa_u: -1.0,
            kappa_i: -1.0,
            last_time_users: vec![0.0],
            last_time_items: vec![0.0],
        };
        let same = advance_interval(
            &table,
            CurvaturePair { kappa_u: -1.0, kappa_i: -1.0, interval: 1 },
        )
        .unwrap();
        assert_eq!(same, { let mut t = table.clone(); t.kappa_u = -1.0; t });
        let moved = advance_interval(
            &table,
            CurvaturePair { kappa_u: 0.0, kappa_i: -1.0, interval: 1 },
        )
        .unwrap();
        assert!((moved.users[0][0] - 0.5f64.atanh()).abs() < 1e-12);
        assert_eq!(moved.items[0], table.items[0]);
    }

    #[test]
    fn run_interval_records_on_tape() {
        // Forward value under Var equals the plain f64 forward bit-for-bit.
        let (layout, flat) = small_params(5);
        let k = Curvature::new(-0.5);
        let users_f = vec![ManifoldPoint { coords: vec![0.1, -0.1, 0.2, 0.0], kappa: k }];
        let items_f = vec![ManifoldPoint { coords: vec![0.2, 0.1, 0.0, -0.1], kappa: k }];
        let events = vec![InteractionEvent { user: 0, item: 0, t: 0.7, features: vec![] }];
        let p_f = layout.build(&flat);
        let (uf, _) = run_interval(&users_f, &items_f, &events, &p_f, &ForwardOptions::default()).unwrap();

        let tape = Tape::new();
        let vars: Vec<_> = flat.iter().map(|&v| tape.var(v)).collect();
        let p_v = layout.build(&vars);
        let lift = |p: &ManifoldPoint<f64>| ManifoldPoint {
            coords: p.coords.iter().map(|&c| tape.var(c)).collect(),
            kappa: p.kappa,
        };
        let users_v: Vec<_> = users_f.iter().map(lift).collect();
        let items_v: Vec<_> = items_f.iter().map(lift).collect();
        let (uv, _) = run_interval(&users_v, &items_v, &events, &p_v, &ForwardOptions::default()).unwrap();
        for (a, b) in uf[0].coords.iter().zip(&uv[0].coords) {
            assert_eq!(*a, b.value());
        }
    }
}
