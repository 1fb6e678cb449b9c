//! Self-supervised representation learning for sequential interaction
//! networks on a pair of co-evolving constant-curvature spaces.
//!
//! Users and items live in two κ-stereographic manifolds whose curvatures are
//! re-estimated every time interval from graph Ricci curvature; embeddings are
//! updated by cross-space gyrovector aggregation and trained with a reweighed
//! co-contrastive objective between temporal views.
//!
//! Module map:
//! - [`geometry`] — κ-stereographic gyrovector calculus (Möbius ops, exp/log
//!   maps, distance, gyromidpoints).
//! - [`autodiff`] — reverse-mode tape covering every primitive above.
//! - [`curvature`] — co-occurrence subgraphs, Ollivier-Ricci via exact optimal
//!   transport, sampled observed sectional curvature.
//! - [`data`] — event-log ingestion, chronological splits, interval batching,
//!   synthetic generator.
//! - [`model`] — time encoding, interaction integration, cross-space
//!   aggregation, neural curvature estimator, interval transport.
//! - [`contrast`] — temporal views, Riemannian temporal similarity, reweighed
//!   co-contrast loss, training loop.
//! - [`eval`] — MRR / Recall@k and the rolling future-interaction protocol.
//! - [`config`] / [`checkpoint`] — run configuration and the versioned
//!   checkpoint container.

pub mod autodiff;
pub mod checkpoint;
pub mod config;
pub mod contrast;
pub mod curvature;
pub mod data;
pub mod eval;
pub mod geometry;
pub mod linalg;
pub mod model;
pub mod transport;
