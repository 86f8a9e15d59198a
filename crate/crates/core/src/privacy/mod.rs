//! Privacy parameters, noise primitives and the exact-enumeration auditor.

mod audit;
mod noise;
mod params;
pub mod reference;

pub use audit::{
    audit_probabilistic_dp, audit_pure_dp, AuditError, AuditReport, ExactMechanism, OutputDistribution, OUTCOME_GUARD,
    PROBABILISTIC_DP_DEFINITION, RATIO_TOLERANCE,
};
pub use noise::{
    geometric_noise_pmf, geometric_tail, laplace_inverse_cdf, laplace_tail, user_level_sensitivity, Laplace,
};
pub use params::{PrivacyError, PrivacyParams};
