//! Mixed-membership stochastic block-model for transactional networks.
//!
//! A transaction is one sender plus a non-empty set of recipients. Each node
//! carries a probability vector over `K` latent groups; a node in group `k`
//! receives a message from a sender in group `l` with probability `B[l, k]`.
//! The crate simulates such networks, fits them by variational EM, selects
//! `K` by BIC and scores fits against ground truth or held-out messages.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data;
pub mod error;
pub mod inference;
pub mod metrics;
pub mod model;
pub mod scaling;
pub mod simulate;
pub mod special;

pub use error::{Result, TmmsbError};
pub use inference::{
    fit, fit_with_memberships, FitConfig, FittedModel, InitStrategy, ModelDocument,
};
pub use model::{
    receive_matrix, receive_probability, MembershipMatrix, ModelParams, Transaction, TransactionLog,
};
pub use simulate::{simulate, Preset, SimulatedNetwork, SimulationConfig, TransactionCount};
