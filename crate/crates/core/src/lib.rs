//! Deterministic federated-learning simulator with fairness-regularized
//! dynamic client re-weighting.
//!
//! The crate provides:
//! - shared domain types (parameters, datasets, clients, group ledgers),
//! - analytically tractable local objectives (quadratic, logistic, small MLP),
//! - the fairness math: group losses, ordering coefficients, the lambda
//!   bound, and the two equivalent forms of the penalized global objective,
//! - three training loops (federated averaging plus the fairness-weighted
//!   global and personalized variants),
//! - synthetic population generators with a heterogeneity knob, and
//! - fairness/convergence metrics with closed-form or numeric oracles.
//!
//! Everything is a pure function of its inputs plus explicit RNG streams, so
//! runs are bit-reproducible, including under the rayon-backed `parallel`
//! feature (enabled by default).

pub mod algorithms;
pub mod client;
pub mod data;
pub mod datagen;
pub mod error;
pub mod fairness;
pub mod metrics;
pub mod objectives;
pub mod opt;
pub mod par;
pub mod param;
pub mod rng;

pub use client::{compute_pk, ClientState, GroupLedger, GroupStructure};
pub use data::{split_dataset, ClientDataset, LabeledExample, Split};
pub use error::{Error, Result};
pub use param::ParamVector;
