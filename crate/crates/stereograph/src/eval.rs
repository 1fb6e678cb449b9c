//! Ranking metrics and the future-interaction-prediction protocol.
//!
//! Evaluation rolls the trained model forward through held-out events in
//! timestamp order with parameters frozen: each scored event ranks the true
//! item among all items at the event's timestamp *before* the interaction
//! updates any state, so an event can never see itself.

use thiserror::Error;

use crate::checkpoint::Checkpoint;
use crate::contrast::TimeKernel;
use crate::data::InteractionEvent;
use crate::geometry::GeometryError;
use crate::model::{self, EmbeddingTable, ForwardOptions};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("empty input")]
    Empty,
    #[error("k must be at least 1")]
    BadK,
    #[error("checkpoint/data mismatch: {0}")]
    Mismatch(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

pub type Result<T> = std::result::Result<T, EvalError>;

/// Per-event ranks of the ground-truth item plus the aggregate metrics.
/// Ranks lie in `[1, n_items]`; ties break by ascending item id.
#[derive(Debug, Clone, PartialEq)]
pub struct RankReport {
    pub ranks: Vec<usize>,
    /// Scored events referencing unknown entities, skipped.
    pub skipped: usize,
    pub mrr: f64,
    pub recalls: Vec<(usize, f64)>,
}

impl RankReport {
    /// Delimited summary: one `metric,value` line per aggregate.
    pub fn summary_csv(&self) -> String {
        let mut out = String::from("metric,value\n");
        out.push_str(&format!("events,{}\n", self.ranks.len()));
        out.push_str(&format!("skipped,{}\n", self.skipped));
        out.push_str(&format!("mrr,{}\n", self.mrr));
        for (k, r) in &self.recalls {
            out.push_str(&format!("recall@{k},{r}\n"));
        }
        out
    }

    /// Optional per-event dump: `index,rank` lines.
    pub fn ranks_csv(&self) -> String {
        let mut out = String::from("event,rank\n");
        for (i, r) in self.ranks.iter().enumerate() {
            out.push_str(&format!("{i},{r}\n"));
        }
        out
    }
}

/// Mean reciprocal rank, in `(0, 1]` for non-empty rank lists.
pub fn mrr(ranks: &[usize]) -> Result<f64> {
    if ranks.is_empty() {
        return Err(EvalError::Empty);
    }
    assert!(ranks.iter().all(|&r| r >= 1), "ranks are 1-based");
    Ok(ranks.iter().map(|&r| 1.0 / r as f64).sum::<f64>() / ranks.len() as f64)
}

/// Fraction of ranks within the top `k`.
pub fn recall_at_k(ranks: &[usize], k: usize) -> Result<f64> {
    if ranks.is_empty() {
        return Err(EvalError::Empty);
    }
    if k == 0 {
        return Err(EvalError::BadK);
    }
    Ok(ranks.iter().filter(|&&r| r <= k).count() as f64 / ranks.len() as f64)
}

/// Rank of `item` under descending score with ascending-id tie-break.
pub fn rank_of(scores: &[f64], item: u32) -> usize {
    let target = scores[item as usize];
    let mut rank = 1usize;
    for (j, &s) in scores.iter().enumerate() {
        if s > target || (s == target && (j as u32) < item) {
            rank += 1;
        }
    }
    rank
}

/// Rolls the checkpoint forward: `warmup` events only update state (the
/// validation span between training and test), `scored` events are ranked
/// and then applied. Scoring strictly precedes the state update.
pub fn evaluate(
    ckpt: &Checkpoint,
    warmup: &[InteractionEvent],
    scored: &[InteractionEvent],
    ks: &[usize],
) -> Result<RankReport> {
    if scored.is_empty() {
        return Err(EvalError::Empty);
    }
    if ks.iter().any(|&k| k == 0) {
        return Err(EvalError::BadK);
    }
    if ckpt.table.users.len() != ckpt.n_users || ckpt.table.items.len() != ckpt.n_items {
        return Err(EvalError::Mismatch(format!(
            "table holds {}x{} entities, checkpoint declares {}x{}",
            ckpt.table.users.len(),
            ckpt.table.items.len(),
            ckpt.n_users,
            ckpt.n_items
        )));
    }
    let params = ckpt.parameter_set();
    let encoder = ckpt.config.encoder.into();
    let kernel = if ckpt.config.no_kernel {
        // The factor is constant across items at a fixed query time; the
        // scale is irrelevant for ranking.
        TimeKernel::ExpDecay { tau: 1.0 }
    } else {
        TimeKernel::InnerProduct
    };
    let fwd = ForwardOptions {
        fusion: ckpt.config.fusion.into(),
        encoder,
        layers: ckpt.config.layers,
        dropout: None,
        attention: false,
    };

    let mut table = ckpt.table.clone();
    let mut skipped = 0usize;
    let mut ranks = Vec::with_capacity(scored.len());
    let known = |e: &InteractionEvent, t: &EmbeddingTable| {
        (e.user as usize) < t.users.len() && (e.item as usize) < t.items.len()
    };
    for e in warmup {
        if known(e, &table) {
            apply_event(&mut table, e, &params, &fwd)?;
        }
    }
    for e in scored {
        if !known(e, &table) {
            skipped += 1;
            continue;
        }
        let scores = model::predict_scores(e.user, &table, e.t, &params, encoder, kernel)?;
        ranks.push(rank_of(&scores, e.item));
        apply_event(&mut table, e, &params, &fwd)?;
    }
    if ranks.is_empty() {
        return Err(EvalError::Empty);
    }
    let mrr = mrr(&ranks)?;
    let recalls = ks
        .iter()
        .map(|&k| recall_at_k(&ranks, k).map(|r| (k, r)))
        .collect::<Result<Vec<_>>>()?;
    Ok(RankReport { ranks, skipped, mrr, recalls })
}

/// Applies one interaction as a single-event interval with the trained
/// parameters; embeddings and timestamps evolve, parameters stay frozen.
fn apply_event(
    table: &mut EmbeddingTable,
    e: &InteractionEvent,
    params: &model::ParameterSet<f64>,
    fwd: &ForwardOptions,
) -> Result<()> {
    let users: Vec<_> = (0..table.users.len() as u32).map(|u| table.user_point(u)).collect();
    let items: Vec<_> = (0..table.items.len() as u32).map(|i| table.item_point(i)).collect();
    let (new_users, new_items) =
        model::run_interval(&users, &items, std::slice::from_ref(e), params, fwd)?;
    table.users[e.user as usize] = new_users[e.user as usize].coords.clone();
    table.items[e.item as usize] = new_items[e.item as usize].coords.clone();
    table.last_time_users[e.user as usize] = table.last_time_users[e.user as usize].max(e.t);
    table.last_time_items[e.item as usize] = table.last_time_items[e.item as usize].max(e.t);
    Ok(())
}
