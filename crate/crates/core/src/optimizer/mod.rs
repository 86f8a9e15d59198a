//! Retention planning: choose the budget split and per-item retention
//! probabilities that maximize expected utility under the certificate.

mod certificate;
mod expected;
mod search;

use thiserror::Error;

use crate::mechanisms::MechanismError;
use crate::utility::UtilityError;

pub use certificate::{retention_bound, Certificate};
pub use expected::UtilityModel;
pub use search::{
    grid_search_oracle, maximize_retention, plan_for_rho, OracleGrid, PlanItem, RetentionPlan, RhoSearch,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OptimizerError {
    #[error("log is empty")]
    EmptyLog,
    #[error("expected {items} items, got {p} retention and {q} survival probabilities")]
    DimensionMismatch { items: usize, p: usize, q: usize },
    #[error("probabilities must lie in [0, 1]")]
    Probability,
    #[error("oracle guard: {found} {what}, at most {limit} allowed")]
    Guard { what: &'static str, found: usize, limit: usize },
    #[error("invalid search setting: {0}")]
    Search(String),
    #[error(transparent)]
    Utility(#[from] UtilityError),
    #[error(transparent)]
    Mechanism(#[from] MechanismError),
}
