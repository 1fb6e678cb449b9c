//! Temporal-view construction, Riemannian temporal similarity, the reweighed
//! co-contrastive objective, and the training loop.
//!
//! Each interval yields two views of every entity: the forward pass output
//! (α) and the previous interval's embedding transported onto the current
//! manifold (β). Anchors are contrasted against the other view in both
//! directions; positives are the anchor's own image plus cross-space images
//! of its interaction counterparts, negatives are sampled same-side
//! entities. Hard samples get softmax-like weights `exp(∓η·sim)/Z` with `Z`
//! the mean of the exponentials, so weights always sum to the sample count
//! and η = 0 recovers plain InfoNCE exactly.

use std::collections::BTreeMap;
use std::time::Instant;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use thiserror::Error;

use crate::autodiff::{Scalar, Tape, Var};
use crate::checkpoint::Checkpoint;
use crate::config::{CurvatureMode, RunConfig};
use crate::curvature::{
    self, CurvatureError, RicciVector, Side,
};
use crate::data::{Dataset, DataError, InteractionEvent, IntervalBatch};
use crate::geometry::{self, Curvature, GeometryError, ManifoldPoint};
use crate::model::{
    self, CurvaturePair, EmbeddingTable, EncoderMode, ForwardOptions, ModelDims, ParamLayout,
    ParameterSet,
};

/// Dropout rate applied to the tangent-space interaction aggregates during
/// training.
pub const DROPOUT_RATE: f64 = 0.3;
/// Per-center sampling iterations of the curvature observation.
const OBSERVED_CURVATURE_ITERATIONS: usize = 10;
/// Both spaces start hyperbolic before the first estimate.
const INITIAL_KAPPA: f64 = -1.0;
/// Working range for curvatures that drive geometry: estimates are clamped
/// to `KAPPA_MIN <= |kappa| <= KAPPA_LIMIT` (sign preserved) so every chart
/// stays radially bounded and transports between intervals keep the two
/// spaces at commensurate coordinate scales. The raw estimate still feeds
/// the curvature loss; the zero-curvature mode bypasses the clamp entirely.
const KAPPA_LIMIT: f64 = 10.0;
const KAPPA_MIN: f64 = 0.25;
/// Decoupled weight decay on the six aggregation matrices; contains the
/// spectral growth the contrast's uniformity pressure otherwise induces in
/// the interval recurrence.
const MATRIX_WEIGHT_DECAY: f64 = 1.0;

/// Sign-preserving clamp of an estimated curvature into the working range.
fn working_kappa(estimate: f64) -> f64 {
    let magnitude = estimate.abs().clamp(KAPPA_MIN, KAPPA_LIMIT);
    if estimate < 0.0 {
        -magnitude
    } else {
        magnitude
    }
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Curvature(#[from] CurvatureError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Config(#[from] crate::config::ConfigError),
    #[error("loss diverged at epoch {epoch}, interval {interval}: {loss}")]
    Diverged { epoch: usize, interval: usize, loss: f64 },
}

pub type Result<T> = std::result::Result<T, TrainError>;

/// Time factor of the similarity: the learned inner-product kernel, or the
/// exponential-decay replacement used by the kernel ablation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TimeKernel {
    InnerProduct,
    ExpDecay { tau: f64 },
}

/// Temporal similarity on Riemannian manifolds:
/// `sim(x, y) = (t_xᵀ t_y) · sigmoid(−d(x, y))`.
pub fn similarity<S: Scalar>(
    x: &ManifoldPoint<S>,
    y: &ManifoldPoint<S>,
    tx: &[S],
    ty: &[S],
) -> std::result::Result<S, GeometryError> {
    let d = geometry::distance(x, y)?;
    Ok(S::dot(tx, ty) * (-d).sigmoid())
}

/// [`similarity`] with a selectable time factor; `ExpDecay` replaces the
/// learned kernel with `exp(−|t₁ − t₂|/τ)`.
#[allow(clippy::too_many_arguments)]
pub fn similarity_with_kernel<S: Scalar>(
    x: &ManifoldPoint<S>,
    y: &ManifoldPoint<S>,
    tx: &[S],
    ty: &[S],
    t1: f64,
    t2: f64,
    kernel: TimeKernel,
) -> std::result::Result<S, GeometryError> {
    let d = geometry::distance(x, y)?;
    let gate = (-d).sigmoid();
    Ok(match kernel {
        TimeKernel::InnerProduct => S::dot(tx, ty) * gate,
        TimeKernel::ExpDecay { tau } => gate * (-(t1 - t2).abs() / tau).exp(),
    })
}

/// Whether a sample set plays the positive or negative role.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleSign {
    Positive,
    Negative,
}

/// Softmax-like hardness weights `exp(∓η·sim)/Z`, `Z` the mean of the
/// exponentials: hard positives (low similarity) and hard negatives (high
/// similarity) are up-weighted. Weights sum to the sample count; η = 0
/// yields exactly uniform weights.
pub fn reweigh<S: Scalar>(similarities: &[S], eta: f64, sign: SampleSign) -> Vec<S> {
    assert!(!similarities.is_empty());
    assert!(eta >= 0.0);
    let sgn = match sign {
        SampleSign::Positive => -eta,
        SampleSign::Negative => eta,
    };
    let exps: Vec<S> = similarities.iter().map(|&s| (s * sgn).exp()).collect();
    let z = S::sum(&exps) / exps.len() as f64;
    exps.into_iter().map(|e| e / z).collect()
}

/// Numerically stable `ln(sigmoid(s))`.
fn log_sigmoid<S: Scalar>(s: S) -> S {
    // ln σ(s) = −softplus(−s)
    let z = -s;
    if z.value() > 30.0 {
        -z
    } else {
        -(z.exp() + 1.0).ln()
    }
}

/// The two temporal views of one interval, both living at the interval's
/// curvature pair, with per-entity last-interaction timestamps.
#[derive(Debug, Clone)]
pub struct ViewPair<S> {
    pub interval: u32,
    pub alpha_users: Vec<ManifoldPoint<S>>,
    pub alpha_items: Vec<ManifoldPoint<S>>,
    pub beta_users: Vec<ManifoldPoint<S>>,
    pub beta_items: Vec<ManifoldPoint<S>>,
    pub times_users: Vec<f64>,
    pub times_items: Vec<f64>,
}

/// Builds the (α, β) view pair: α is the current forward output, β the
/// previous interval's table transported onto the current manifolds. The
/// first interval has no history and degenerates to β := α.
pub fn make_views<S: Scalar>(
    table_prev: Option<&EmbeddingTable>,
    alpha_users: Vec<ManifoldPoint<S>>,
    alpha_items: Vec<ManifoldPoint<S>>,
    times_users: Vec<f64>,
    times_items: Vec<f64>,
    interval: u32,
) -> std::result::Result<ViewPair<S>, GeometryError> {
    let (beta_users, beta_items) = match table_prev {
        None => (alpha_users.clone(), alpha_items.clone()),
        Some(prev) => {
            let anchor = alpha_users[0].coords[0];
            let kappa_u = alpha_users[0].kappa;
            let kappa_i = alpha_items[0].kappa;
            let transport = |coords: &[Vec<f64>], from: f64, to: Curvature| {
                coords
                    .iter()
                    .map(|c| {
                        let p = ManifoldPoint { coords: c.clone(), kappa: Curvature::new(from) };
                        let moved = geometry::map_between(&p, to)?;
                        Ok(ManifoldPoint {
                            coords: moved.coords.iter().map(|&v| anchor.lift(v)).collect(),
                            kappa: to,
                        })
                    })
                    .collect::<std::result::Result<Vec<_>, GeometryError>>()
            };
            (
                transport(&prev.users, prev.kappa_u, kappa_u)?,
                transport(&prev.items, prev.kappa_i, kappa_i)?,
            )
        }
    };
    Ok(ViewPair {
        interval,
        alpha_users,
        alpha_items,
        beta_users,
        beta_items,
        times_users,
        times_items,
    })
}

/// Contrast samples for one anchor: the anchor's own image in the other view
/// is always a positive; `counterparts` adds cross-space images of linked
/// entities; `negatives` are same-side draws excluding the anchor.
#[derive(Debug, Clone, PartialEq)]
pub struct AnchorPlan {
    pub entity: u32,
    pub counterparts: Vec<u32>,
    pub negatives: Vec<u32>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SamplePlan {
    pub anchors: Vec<AnchorPlan>,
}

/// Anchors are the entities active in the interval; negatives are uniform
/// same-side draws (with replacement) excluding the anchor. Deterministic
/// given the seed.
pub fn build_sample_plan(
    events: &[InteractionEvent],
    side: Side,
    n_same_side: usize,
    negatives: usize,
    include_counterparts: bool,
    seed: u64,
) -> SamplePlan {
    let mut linked: BTreeMap<u32, std::collections::BTreeSet<u32>> = BTreeMap::new();
    for e in events {
        let (entity, counterpart) = match side {
            Side::User => (e.user, e.item),
            Side::Item => (e.item, e.user),
        };
        linked.entry(entity).or_default().insert(counterpart);
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let anchors = linked
        .into_iter()
        .map(|(entity, counterparts)| {
            let negs = if n_same_side > 1 {
                (0..negatives)
                    .map(|_| {
                        let mut j = rng.random_range(0..n_same_side as u32 - 1);
                        if j >= entity {
                            j += 1;
                        }
                        j
                    })
                    .collect()
            } else {
                Vec::new()
            };
            AnchorPlan {
                entity,
                counterparts: if include_counterparts {
                    counterparts.into_iter().collect()
                } else {
                    Vec::new()
                },
                negatives: negs,
            }
        })
        .collect();
    SamplePlan { anchors }
}

/// Which view supplies the anchors; samples come from the other view.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    AlphaBeta,
    BetaAlpha,
}

/// Knobs of the contrastive objective.
#[derive(Debug, Clone, Copy)]
pub struct ContrastOptions {
    pub eta: f64,
    pub encoder: EncoderMode,
    pub kernel: TimeKernel,
}

/// Reweighed co-contrast loss for one side and one direction:
/// `−(1/N) Σ_anchors [ Σ_k w⁺_k ln σ(sim(a, pos_k)) + Σ_j w⁻_j ln σ(−sim(a, neg_j)) ]`.
pub fn co_contrast_loss<S: Scalar>(
    view: &ViewPair<S>,
    plan: &SamplePlan,
    side: Side,
    direction: Direction,
    params: &ParameterSet<S>,
    opts: &ContrastOptions,
) -> std::result::Result<S, GeometryError> {
    let (anchor_pool, same_pool, cross_pool) = match (side, direction) {
        (Side::User, Direction::AlphaBeta) => (&view.alpha_users, &view.beta_users, &view.beta_items),
        (Side::User, Direction::BetaAlpha) => (&view.beta_users, &view.alpha_users, &view.alpha_items),
        (Side::Item, Direction::AlphaBeta) => (&view.alpha_items, &view.beta_items, &view.beta_users),
        (Side::Item, Direction::BetaAlpha) => (&view.beta_items, &view.alpha_items, &view.alpha_users),
    };
    let (times_same, times_cross) = match side {
        Side::User => (&view.times_users, &view.times_items),
        Side::Item => (&view.times_items, &view.times_users),
    };
    let anchor_scalar = anchor_pool[0].coords[0];
    let zero = anchor_scalar.lift(0.0);
    if plan.anchors.is_empty() {
        return Ok(zero);
    }
    let kappa_self = anchor_pool[0].kappa;

    // Memoized time encodings per entity.
    let mut enc_same: BTreeMap<u32, Vec<S>> = BTreeMap::new();
    let mut enc_cross: BTreeMap<u32, Vec<S>> = BTreeMap::new();
    let encode = |map: &mut BTreeMap<u32, Vec<S>>, id: u32, t: f64| -> Vec<S> {
        map.entry(id)
            .or_insert_with(|| model::time_encode(t, &params.omega, &params.theta, opts.encoder))
            .clone()
    };

    let mut total = zero;
    for anchor in &plan.anchors {
        let a = anchor.entity as usize;
        let a_pt = &anchor_pool[a];
        let a_t = times_same[a];
        let a_enc = encode(&mut enc_same, anchor.entity, a_t);

        // Positives: self image, then cross-space images of counterparts.
        let mut pos_sims: Vec<S> = Vec::with_capacity(1 + anchor.counterparts.len());
        let self_enc = a_enc.clone();
        pos_sims.push(similarity_with_kernel(
            a_pt,
            &same_pool[a],
            &a_enc,
            &self_enc,
            a_t,
            times_same[a],
            opts.kernel,
        )?);
        for &c in &anchor.counterparts {
            let image = geometry::map_between(&cross_pool[c as usize], kappa_self)?;
            let c_enc = encode(&mut enc_cross, c, times_cross[c as usize]);
            pos_sims.push(similarity_with_kernel(
                a_pt,
                &image,
                &a_enc,
                &c_enc,
                a_t,
                times_cross[c as usize],
                opts.kernel,
            )?);
        }
        let pos_w = reweigh(&pos_sims, opts.eta, SampleSign::Positive);
        let mut contrib = zero;
        for (s, w) in pos_sims.iter().zip(&pos_w) {
            contrib = contrib + *w * log_sigmoid(*s);
        }

        if !anchor.negatives.is_empty() {
            let neg_sims: Vec<S> = anchor
                .negatives
                .iter()
                .map(|&j| {
                    let j_enc = encode(&mut enc_same, j, times_same[j as usize]);
                    similarity_with_kernel(
                        a_pt,
                        &same_pool[j as usize],
                        &a_enc,
                        &j_enc,
                        a_t,
                        times_same[j as usize],
                        opts.kernel,
                    )
                })
                .collect::<std::result::Result<_, _>>()?;
            let neg_w = reweigh(&neg_sims, opts.eta, SampleSign::Negative);
            for (s, w) in neg_sims.iter().zip(&neg_w) {
                contrib = contrib + *w * log_sigmoid(-*s);
            }
        }
        total = total + contrib;
    }
    Ok(-total / plan.anchors.len() as f64)
}

/// Loss components of one interval.
#[derive(Debug, Clone, Copy)]
pub struct LossBreakdown<S> {
    pub user: S,
    pub item: S,
    pub curv: S,
    pub total: S,
}

/// Overall objective
/// `(𝒥ᵁ_{αβ} + 𝒥ᵁ_{βα}) + w₁ (𝒥ᴵ_{αβ} + 𝒥ᴵ_{βα}) + w₂ 𝒥_c`,
/// where `𝒥_c` sums the user- and item-side curvature losses when curvature
/// estimates are being trained.
#[allow(clippy::too_many_arguments)]
pub fn overall_loss<S: Scalar>(
    view: &ViewPair<S>,
    plan_user: &SamplePlan,
    plan_item: &SamplePlan,
    params: &ParameterSet<S>,
    opts: &ContrastOptions,
    curvature_terms: Option<(S, f64, S, f64)>,
    w1: f64,
    w2: f64,
) -> std::result::Result<LossBreakdown<S>, GeometryError> {
    let u_ab = co_contrast_loss(view, plan_user, Side::User, Direction::AlphaBeta, params, opts)?;
    let u_ba = co_contrast_loss(view, plan_user, Side::User, Direction::BetaAlpha, params, opts)?;
    let i_ab = co_contrast_loss(view, plan_item, Side::Item, Direction::AlphaBeta, params, opts)?;
    let i_ba = co_contrast_loss(view, plan_item, Side::Item, Direction::BetaAlpha, params, opts)?;
    let user = u_ab + u_ba;
    let item = i_ab + i_ba;
    let curv = match curvature_terms {
        Some((ke_u, ko_u, ke_i, ko_i)) => {
            curvature::curvature_loss(ke_u, ko_u) + curvature::curvature_loss(ke_i, ko_i)
        }
        None => user.lift(0.0),
    };
    let total = user + item * w1 + curv * w2;
    Ok(LossBreakdown { user, item, curv, total })
}

/// First-order adaptive-moment optimizer over the flat parameter vector.
#[derive(Debug, Clone)]
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
    decay: Vec<f64>,
}

impl Adam {
    pub fn new(lr: f64, n: usize) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
            decay: vec![0.0; n],
        }
    }

    /// Decoupled per-parameter weight decay, applied alongside the adaptive
    /// step. The trainer uses it on the aggregation matrices only, keeping
    /// the interval recurrence spectrally contained.
    pub fn with_decay(mut self, decay: Vec<f64>) -> Self {
        assert_eq!(decay.len(), self.m.len());
        self.decay = decay;
        self
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        assert_eq!(params.len(), grads.len());
        self.t += 1;
        let b1t = 1.0 - self.beta1.powi(self.t as i32);
        let b2t = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grads[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grads[i] * grads[i];
            let mhat = self.m[i] / b1t;
            let vhat = self.v[i] / b2t;
            params[i] -= self.lr * (mhat / (vhat.sqrt() + self.eps) + self.decay[i] * params[i]);
        }
    }
}

/// One training-log line: loss components, the interval's curvature pair and
/// wall time.
#[derive(Debug, Clone, PartialEq)]
pub struct IntervalRecord {
    pub epoch: usize,
    pub interval: usize,
    pub loss_user: f64,
    pub loss_item: f64,
    pub loss_curv: f64,
    pub loss_total: f64,
    pub kappa_u: f64,
    pub kappa_i: f64,
    pub wall_ms: f64,
}

impl IntervalRecord {
    pub const CSV_HEADER: &'static str =
        "epoch,interval,loss_user,loss_item,loss_curv,loss_total,kappa_u,kappa_i,wall_ms";

    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.epoch,
            self.interval,
            self.loss_user,
            self.loss_item,
            self.loss_curv,
            self.loss_total,
            self.kappa_u,
            self.kappa_i,
            self.wall_ms
        )
    }
}

/// Training result: the checkpoint plus the per-(epoch, interval) log.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub log: Vec<IntervalRecord>,
}

/// Offline per-interval curvature observations, cached before training.
#[derive(Debug, Clone)]
pub struct IntervalCurvature {
    pub ricci_user: RicciVector,
    pub ricci_item: RicciVector,
    pub kappa_o_user: f64,
    pub kappa_o_item: f64,
}

/// Deterministic stream splitting for the run's RNG seeds.
pub(crate) fn mix_seed(seed: u64, parts: &[u64]) -> u64 {
    let mut x = seed ^ 0x9e37_79b9_7f4a_7c15;
    for &p in parts {
        x ^= p.wrapping_add(0x9e37_79b9_7f4a_7c15).wrapping_add(x << 6).wrapping_add(x >> 2);
        // splitmix64 finalizer
        x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        x ^= x >> 31;
    }
    x
}

const STREAM_PARAMS: u64 = 1;
const STREAM_EMBED: u64 = 2;
const STREAM_PLAN: u64 = 3;
const STREAM_DROPOUT: u64 = 4;
const STREAM_CURV: u64 = 5;

/// Computes and caches the per-interval curvature observations (the offline
/// pre-pass; [`train`] runs it implicitly, the curvature CLI surfaces it).
pub fn curvature_prepass(
    ds: &Dataset,
    intervals: &[IntervalBatch],
    cfg: &RunConfig,
) -> Result<Vec<IntervalCurvature>> {
    let dims = model_dims(cfg, ds);
    intervals
        .iter()
        .map(|batch| interval_curvature(batch.events(ds), batch.index, cfg, dims.curv_width))
        .collect()
}

fn interval_curvature(
    events: &[InteractionEvent],
    interval: usize,
    cfg: &RunConfig,
    width: usize,
) -> Result<IntervalCurvature> {
    let side_obs = |side: Side| -> Result<(RicciVector, f64)> {
        let pairs: Vec<(u32, u32)> = events
            .iter()
            .map(|e| match side {
                Side::User => (e.user, e.item),
                Side::Item => (e.item, e.user),
            })
            .collect();
        let side_tag = side as u64;
        let cg = curvature::build_cooccurrence_subgraph(
            &pairs,
            cfg.k,
            cfg.sample_ratio,
            mix_seed(cfg.seed, &[STREAM_CURV, interval as u64, side_tag, 0]),
        )?;
        let mut ricci = curvature::ricci_vector(
            &cg.graph,
            cfg.alpha,
            width,
            mix_seed(cfg.seed, &[STREAM_CURV, interval as u64, side_tag, 1]),
        )?;
        ricci.interval = interval as u32;
        let kappa_o = match curvature::observed_curvature_graph(
            &cg.graph,
            OBSERVED_CURVATURE_ITERATIONS,
            mix_seed(cfg.seed, &[STREAM_CURV, interval as u64, side_tag, 2]),
        ) {
            Ok(k) => k,
            // Sparse intervals with no observable triangle default to flat.
            Err(CurvatureError::GraphTooSmall) => 0.0,
            Err(e) => return Err(e.into()),
        };
        Ok((ricci, kappa_o))
    };
    let (ricci_user, kappa_o_user) = side_obs(Side::User)?;
    let (ricci_item, kappa_o_item) = side_obs(Side::Item)?;
    Ok(IntervalCurvature { ricci_user, ricci_item, kappa_o_user, kappa_o_item })
}

fn model_dims(cfg: &RunConfig, ds: &Dataset) -> ModelDims {
    ModelDims { dim: cfg.dim, feature_dim: ds.feature_dim, curv_width: cfg.dim.max(8) }
}

/// Mean inter-event gap, the dataset's characteristic time scale.
fn mean_gap(ds: &Dataset) -> f64 {
    let n = ds.events.len();
    if n < 2 {
        return 1.0;
    }
    let span = ds.events[n - 1].t - ds.events[0].t;
    (span / (n - 1) as f64).max(1e-9)
}

/// Total timeline span; the slowest scale the time encoder should resolve.
fn time_span(ds: &Dataset) -> f64 {
    match ds.events.as_slice() {
        [] | [_] => 1.0,
        events => (events[events.len() - 1].t - events[0].t).max(1e-9),
    }
}

/// Static-mode curvature: one observed estimate per side over the whole
/// training log.
fn static_kappas(ds: &Dataset, cfg: &RunConfig) -> Result<(f64, f64)> {
    let all = interval_curvature(&ds.events, u32::MAX as usize, cfg, cfg.dim.max(8))?;
    Ok((all.kappa_o_user, all.kappa_o_item))
}

struct TrainState {
    layout: ParamLayout,
    params: Vec<f64>,
    adam: Adam,
    init_table: EmbeddingTable,
    tau: f64,
}

fn setup(ds: &Dataset, cfg: &RunConfig) -> Result<(TrainState, Vec<IntervalBatch>, Vec<IntervalCurvature>, (f64, f64))> {
    cfg.validate()?;
    let intervals = crate::data::interval_partition(ds, cfg.intervals)?;
    let curv_cache = match cfg.curvature {
        CurvatureMode::Evolve => curvature_prepass(ds, &intervals, cfg)?,
        _ => Vec::new(),
    };
    let initial = match cfg.curvature {
        CurvatureMode::Evolve => (INITIAL_KAPPA, INITIAL_KAPPA),
        CurvatureMode::Zero => (0.0, 0.0),
        CurvatureMode::Static => {
            let (ku, ki) = static_kappas(ds, cfg)?;
            (working_kappa(ku), working_kappa(ki))
        }
    };
    let dims = model_dims(cfg, ds);
    let layout = ParamLayout::new(dims);
    let tau = mean_gap(ds);
    let params = layout.init(time_span(ds), mix_seed(cfg.seed, &[STREAM_PARAMS]));
    let mut decay = vec![0.0; layout.total()];
    for name in ["m1", "m2", "m3", "m4", "m5", "m6"] {
        for v in layout.slice_of_mut(&mut decay, name) {
            *v = MATRIX_WEIGHT_DECAY;
        }
    }
    let adam = Adam::new(cfg.lr, layout.total()).with_decay(decay);
    let init_table = EmbeddingTable::init(
        ds.n_users,
        ds.n_items,
        cfg.dim,
        &ds.user_features,
        &ds.item_features,
        initial.0,
        initial.1,
        mix_seed(cfg.seed, &[STREAM_EMBED]),
    )?;
    Ok((TrainState { layout, params, adam, init_table, tau }, intervals, curv_cache, initial))
}

/// Trains on the given (training-split) dataset per the self-supervised
/// interval loop: per epoch the timeline replays from the initial table; per
/// interval the forward pass produces the α view, the transported history
/// produces the β view, the reweighed co-contrast and curvature losses are
/// backpropagated, and the table advances onto the next estimated manifolds.
pub fn train(ds: &Dataset, cfg: &RunConfig) -> Result<TrainOutcome> {
    let (mut st, intervals, curv_cache, initial_kappas) = setup(ds, cfg)?;
    let contrast_opts = ContrastOptions {
        eta: if cfg.no_reweigh { 0.0 } else { cfg.eta },
        encoder: cfg.encoder.into(),
        kernel: if cfg.no_kernel {
            TimeKernel::ExpDecay { tau: st.tau }
        } else {
            TimeKernel::InnerProduct
        },
    };

    let tape = Tape::new();
    let mut log = Vec::with_capacity(cfg.epochs * intervals.len());
    let mut final_table = st.init_table.clone();
    let mut history: Vec<CurvaturePair> = Vec::new();

    for epoch in 0..cfg.epochs {
        let mut table = st.init_table.clone();
        let mut prev_raw: Option<EmbeddingTable> = None;
        if epoch + 1 == cfg.epochs {
            history.clear();
        }
        for batch in &intervals {
            let start = Instant::now();
            let events = batch.events(ds);
            tape.clear();

            let param_vars: Vec<Var> = st.params.iter().map(|&p| tape.var(p)).collect();
            let pset = st.layout.build(&param_vars);
            let lift_side = |coords: &[Vec<f64>], kappa: f64| -> Vec<ManifoldPoint<Var>> {
                coords
                    .iter()
                    .map(|c| ManifoldPoint {
                        coords: c.iter().map(|&v| tape.var(v)).collect(),
                        kappa: Curvature::new(kappa),
                    })
                    .collect()
            };
            let users_h = lift_side(&table.users, table.kappa_u);
            let items_h = lift_side(&table.items, table.kappa_i);

            let fwd = ForwardOptions {
                fusion: cfg.fusion.into(),
                encoder: cfg.encoder.into(),
                layers: cfg.layers,
                dropout: Some((
                    DROPOUT_RATE,
                    mix_seed(cfg.seed, &[STREAM_DROPOUT, epoch as u64, batch.index as u64]),
                )),
                attention: false,
            };
            let (alpha_users, alpha_items) = model::run_interval(&users_h, &items_h, events, &pset, &fwd)?;

            let mut times_users = table.last_time_users.clone();
            let mut times_items = table.last_time_items.clone();
            for e in events {
                times_users[e.user as usize] = times_users[e.user as usize].max(e.t);
                times_items[e.item as usize] = times_items[e.item as usize].max(e.t);
            }

            let view = make_views(
                prev_raw.as_ref(),
                alpha_users,
                alpha_items,
                times_users.clone(),
                times_items.clone(),
                batch.index as u32,
            )?;

            let plan_seed = mix_seed(cfg.seed, &[STREAM_PLAN, epoch as u64, batch.index as u64]);
            let plan_user = build_sample_plan(
                events,
                Side::User,
                ds.n_users,
                cfg.negatives,
                !cfg.no_cocon,
                mix_seed(plan_seed, &[0]),
            );
            let plan_item = build_sample_plan(
                events,
                Side::Item,
                ds.n_items,
                cfg.negatives,
                !cfg.no_cocon,
                mix_seed(plan_seed, &[1]),
            );

            let curv_terms = match cfg.curvature {
                CurvatureMode::Evolve => {
                    let obs = &curv_cache[batch.index];
                    let ke_u = model::estimate_curvature(&pset.curv_user, &obs.ricci_user);
                    let ke_i = model::estimate_curvature(&pset.curv_item, &obs.ricci_item);
                    Some((ke_u, obs.kappa_o_user, ke_i, obs.kappa_o_item))
                }
                _ => None,
            };
            let next_pair = match cfg.curvature {
                CurvatureMode::Evolve => {
                    let (ke_u, _, ke_i, _) = curv_terms.as_ref().unwrap();
                    CurvaturePair {
                        kappa_u: working_kappa(ke_u.value()),
                        kappa_i: working_kappa(ke_i.value()),
                        interval: batch.index as u32 + 1,
                    }
                }
                _ => CurvaturePair {
                    kappa_u: initial_kappas.0,
                    kappa_i: initial_kappas.1,
                    interval: batch.index as u32 + 1,
                },
            };

            let loss = overall_loss(
                &view,
                &plan_user,
                &plan_item,
                &pset,
                &contrast_opts,
                curv_terms,
                cfg.w1,
                cfg.w2,
            )?;
            if !loss.total.value().is_finite() {
                return Err(TrainError::Diverged {
                    epoch,
                    interval: batch.index,
                    loss: loss.total.value(),
                });
            }

            let grads = tape.backward(loss.total);
            let flat_grads = grads.wrt_slice(&param_vars);
            st.adam.step(&mut st.params, &flat_grads);

            if epoch + 1 == cfg.epochs {
                history.push(CurvaturePair {
                    kappa_u: table.kappa_u,
                    kappa_i: table.kappa_i,
                    interval: batch.index as u32,
                });
            }
            log.push(IntervalRecord {
                epoch,
                interval: batch.index,
                loss_user: loss.user.value(),
                loss_item: loss.item.value(),
                loss_curv: loss.curv.value(),
                loss_total: loss.total.value(),
                kappa_u: table.kappa_u,
                kappa_i: table.kappa_i,
                wall_ms: start.elapsed().as_secs_f64() * 1e3,
            });

            // Detach the alpha view and advance onto the next manifolds.
            let post = EmbeddingTable {
                users: view.alpha_users.iter().map(|p| crate::linalg::values(&p.coords)).collect(),
                items: view.alpha_items.iter().map(|p| crate::linalg::values(&p.coords)).collect(),
                kappa_u: table.kappa_u,
                kappa_i: table.kappa_i,
                last_time_users: times_users,
                last_time_items: times_items,
            };
            prev_raw = Some(post.clone());
            table = model::advance_interval(&post, next_pair)?;
        }
        final_table = table;
    }

    let checkpoint = Checkpoint {
        config: cfg.clone(),
        n_users: ds.n_users,
        n_items: ds.n_items,
        feature_dim: ds.feature_dim,
        params: st.params,
        table: final_table,
        history,
    };
    Ok(TrainOutcome { checkpoint, log })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data;

    fn flat_point(coords: &[f64]) -> ManifoldPoint<f64> {
        ManifoldPoint { coords: coords.to_vec(), kappa: Curvature::new(0.0) }
    }

    #[test]
    fn similarity_zero_distance_halves_kernel() {
        let x = flat_point(&[0.1, 0.2]);
        let tx = vec![0.6, 0.8];
        let s = similarity(&x, &x, &tx, &tx).unwrap();
        assert!((s - 0.5 * (0.36 + 0.64)).abs() < 1e-12);
    }

    #[test]
    fn similarity_orthogonal_encodings_vanish() {
        let x = flat_point(&[0.0, 0.0]);
        let y = flat_point(&[5.0, 5.0]);
        let s = similarity(&x, &y, &[1.0, 0.0], &[0.0, 1.0]).unwrap();
        assert_eq!(s, 0.0);
    }

    #[test]
    fn similarity_decreases_with_distance() {
        let x = flat_point(&[0.0, 0.0]);
        let near = flat_point(&[0.1, 0.0]);
        let far = flat_point(&[2.0, 0.0]);
        let t = vec![1.0, 0.0];
        let s_near = similarity(&x, &near, &t, &t).unwrap();
        let s_far = similarity(&x, &far, &t, &t).unwrap();
        assert!(s_near > s_far);
    }

    #[test]
    fn reweigh_eta_zero_is_exactly_uniform() {
        let sims = vec![0.4, -0.2, 0.05];
        let w = reweigh(&sims, 0.0, SampleSign::Positive);
        assert_eq!(w, vec![1.0, 1.0, 1.0]);
    }

    #[test]
    fn reweigh_prefers_hard_samples() {
        let w_pos = reweigh(&[0.9, 0.1], 2.0, SampleSign::Positive);
        assert!(w_pos[1] > w_pos[0], "hard positive (low sim) must weigh more");
        let w_neg = reweigh(&[0.9, 0.1], 2.0, SampleSign::Negative);
        assert!(w_neg[0] > w_neg[1], "hard negative (high sim) must weigh more");
    }

    #[test]
    fn reweigh_sums_to_count() {
        let sims = vec![0.3, -0.4, 0.25, 0.0, 1.2];
        for sign in [SampleSign::Positive, SampleSign::Negative] {
            let w = reweigh(&sims, 2.0, sign);
            let total: f64 = w.iter().sum();
            assert!((total - 5.0).abs() < 1e-12);
        }
    }

    #[test]
    fn log_sigmoid_matches_naive_in_range() {
        for s in [-5.0, -0.5, 0.0, 0.5, 5.0] {
            let naive = (1.0 / (1.0 + (-s as f64).exp())).ln();
            assert!((log_sigmoid(s) - naive).abs() < 1e-12);
        }
        // Stable far outside the naive range.
        assert!((log_sigmoid(-1000.0) + 1000.0).abs() < 1e-9);
    }

    #[test]
    fn per_anchor_loss_at_zero_sims_is_two_log_two() {
        // One positive and one negative, both at similarity 0.
        let k = Curvature::new(0.0);
        let o = ManifoldPoint { coords: vec![0.0, 0.0], kappa: k };
        let dims = ModelDims { dim: 2, feature_dim: 0, curv_width: 8 };
        let layout = ParamLayout::new(dims);
        let mut flat = layout.init(1.0, 0);
        // omega = 0, theta = pi/2 makes phi(t) the zero vector, so every
        // similarity is exactly 0 and each term contributes ln 2.
        layout.slice_of_mut(&mut flat, "omega").fill(0.0);
        layout.slice_of_mut(&mut flat, "theta").fill(std::f64::consts::FRAC_PI_2);
        let params = layout.build(&flat);

        let view = ViewPair {
            interval: 0,
            alpha_users: vec![o.clone(), o.clone()],
            alpha_items: vec![o.clone()],
            beta_users: vec![o.clone(), o.clone()],
            beta_items: vec![o.clone()],
            times_users: vec![1.0, 2.0],
            times_items: vec![1.0],
        };
        let plan = SamplePlan {
            anchors: vec![AnchorPlan { entity: 0, counterparts: vec![], negatives: vec![1] }],
        };
        let opts = ContrastOptions {
            eta: 0.0,
            encoder: EncoderMode::Cosine,
            kernel: TimeKernel::InnerProduct,
        };
        let loss =
            co_contrast_loss(&view, &plan, Side::User, Direction::AlphaBeta, &params, &opts)
                .unwrap();
        assert!((loss - 2.0 * 2f64.ln()).abs() < 1e-12, "loss {loss}");
    }

    #[test]
    fn make_views_interval_zero_degenerates() {
        let k = Curvature::new(-1.0);
        let a = vec![ManifoldPoint { coords: vec![0.1, 0.2], kappa: k }];
        let b = vec![ManifoldPoint { coords: vec![0.3, 0.0], kappa: k }];
        let v = make_views(None, a.clone(), b.clone(), vec![0.0], vec![0.0], 0).unwrap();
        assert_eq!(v.beta_users[0].coords, a[0].coords);
        assert_eq!(v.beta_items[0].coords, b[0].coords);
    }

    #[test]
    fn make_views_transports_history() {
        let prev = EmbeddingTable {
            users: vec![vec![0.5, 0.0]],
            items: vec![vec![0.2, 0.0]],
            kappa_u: -1.0,
            kappa_i: -1.0,
            last_time_users: vec![0.0],
            last_time_items: vec![0.0],
        };
        let k0 = Curvature::new(0.0);
        let a = vec![ManifoldPoint { coords: vec![0.0, 0.0], kappa: k0 }];
        let b = vec![ManifoldPoint { coords: vec![0.0, 0.0], kappa: k0 }];
        let v = make_views(Some(&prev), a, b, vec![0.0], vec![0.0], 1).unwrap();
        assert!((v.beta_users[0].coords[0] - 0.5f64.atanh()).abs() < 1e-12);
    }

    #[test]
    fn sample_plan_excludes_anchor_and_is_deterministic() {
        let events = vec![
            InteractionEvent { user: 0, item: 5, t: 1.0, features: vec![] },
            InteractionEvent { user: 2, item: 5, t: 2.0, features: vec![] },
        ];
        let a = build_sample_plan(&events, Side::User, 10, 16, true, 42);
        let b = build_sample_plan(&events, Side::User, 10, 16, true, 42);
        assert_eq!(a, b);
        assert_eq!(a.anchors.len(), 2);
        for anchor in &a.anchors {
            assert!(anchor.negatives.iter().all(|&j| j != anchor.entity));
            assert_eq!(anchor.counterparts, vec![5]);
        }
        let no_cocon = build_sample_plan(&events, Side::User, 10, 16, false, 42);
        assert!(no_cocon.anchors.iter().all(|p| p.counterparts.is_empty()));
    }

    #[test]
    fn train_zero_epochs_returns_initialization() {
        let ds = data::synth_generate(6, 6, 2, 60, 0.2, 5).unwrap();
        let mut cfg = RunConfig::default();
        cfg.dim = 4;
        cfg.intervals = 5;
        cfg.epochs = 0;
        cfg.curvature = CurvatureMode::Zero;
        let out = train(&ds, &cfg).unwrap();
        assert!(out.log.is_empty());
        let layout = ParamLayout::new(ModelDims { dim: 4, feature_dim: 0, curv_width: 8 });
        let fresh = layout.init(mean_gap(&ds), mix_seed(cfg.seed, &[STREAM_PARAMS]));
        assert_eq!(out.checkpoint.params, fresh);
    }

    #[test]
    fn train_short_run_is_deterministic_and_finite() {
        let ds = data::synth_generate(8, 8, 2, 80, 0.2, 6).unwrap();
        let mut cfg = RunConfig::default();
        cfg.dim = 4;
        cfg.intervals = 4;
        cfg.epochs = 2;
        let a = train(&ds, &cfg).unwrap();
        let b = train(&ds, &cfg).unwrap();
        assert_eq!(a.checkpoint.params, b.checkpoint.params);
        assert_eq!(a.log.len(), 8);
        for (ra, rb) in a.log.iter().zip(&b.log) {
            assert_eq!(ra.loss_total, rb.loss_total);
            assert!(ra.loss_total.is_finite());
            assert!(ra.loss_user >= 0.0);
        }
    }
}
