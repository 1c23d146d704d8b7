//! Variational EM for the transactional mixed-membership block-model.

pub mod align;
pub mod elbo;
pub mod fit;
pub mod state;
pub mod updates;

pub use align::align_labels;
pub use elbo::elbo;
pub use fit::{fit, fit_with_memberships, FitConfig, FittedModel, InitStrategy, ModelDocument};
pub use state::{Phi, VariationalState};
pub use updates::{estimate_b, expected_log_pi, update_gamma, update_phi, BEstimate};
