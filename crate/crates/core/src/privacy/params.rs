use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PrivacyError {
    #[error("epsilon must be a finite positive number, got {0}")]
    Epsilon(f64),
    #[error("delta must lie in [0, 1], got {0}")]
    Delta(f64),
    #[error("per-user cap must be at least 1")]
    Cap,
    #[error("uniform argument must lie in (0, 1), got {0}")]
    Unit(f64),
    #[error("noise scale must be a finite positive number, got {0}")]
    Scale(f64),
}

/// Privacy budget and the per-user record cap that bounds sensitivity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrivacyParams {
    pub epsilon: f64,
    pub delta: f64,
    pub cap_m: usize,
}

impl PrivacyParams {
    pub fn new(epsilon: f64, delta: f64, cap_m: usize) -> Result<Self, PrivacyError> {
        let p = PrivacyParams { epsilon, delta, cap_m };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), PrivacyError> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(PrivacyError::Epsilon(self.epsilon));
        }
        if !(0.0..=1.0).contains(&self.delta) {
            return Err(PrivacyError::Delta(self.delta));
        }
        if self.cap_m == 0 {
            return Err(PrivacyError::Cap);
        }
        Ok(())
    }

    pub fn with_epsilon(self, epsilon: f64) -> Result<Self, PrivacyError> {
        Self::new(epsilon, self.delta, self.cap_m)
    }
}
