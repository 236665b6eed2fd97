//! Node-aware bi-smoothing: certified robustness of graph node classifiers and
//! graph-based recommenders against node injection attacks.
//!
//! The crate is organised bottom-up:
//!
//! * [`graph`] holds the sparse graph and rating-matrix data model, loaders and
//!   the planted-partition generator used as a desk-scale fixture.
//! * [`smoothing`] samples the joint node/edge deletion distribution.
//! * [`cert`] contains every closed-form certificate, the generic worst-case
//!   region solver that cross-checks them, and the statistical bounds.
//! * [`models`] provides base classifiers whose predictions do not depend on
//!   isolated nodes, plus noise-augmented training.
//! * [`pipeline`] runs Monte-Carlo voting for evasion and poisoning, builds
//!   certified accuracy curves and writes reports.
//! * [`recsys`] certifies an item-similarity recommender.
//! * [`attack`] is a heuristic injector used for empirical soundness checks.

pub mod attack;
pub mod cert;
pub mod error;
pub mod graph;
pub mod models;
pub mod numfmt;
pub mod pipeline;
pub mod recsys;
pub mod smoothing;

pub use error::{Error, Result};
