use serde::{Deserialize, Serialize};

use crate::comm::TrainerKind;
use crate::error::{Error, Result};
use crate::privacy::PrivacyConfig;

/// Every hyperparameter of a training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Latent dimension.
    pub d: usize,
    /// Step size `α`.
    pub alpha: f64,
    /// Consensus penalty `λ`.
    pub lambda: f64,
    /// User-vector ridge `λ_u`.
    pub lambda_u: f64,
    /// Item ridge `λ_v`; only the alternating baseline uses it.
    pub lambda_v: f64,
    /// Probability of an aggregation step in the fast trainer.
    pub p: f64,
    /// Iteration budget `K`.
    pub max_iters: usize,
    /// Optional cap on communication rounds.
    pub max_rounds: Option<usize>,
    /// Stop once `‖V̄_new − V̄_old‖ / ‖V̄_old‖ ≤ stop_eps` at an aggregation;
    /// zero disables the check.
    pub stop_eps: f64,
    pub seed: u64,
    /// Probability that a client misses a given aggregation cycle.
    pub dropout_rate: f64,
    pub privacy: Option<PrivacyConfig>,
    /// Clamp predictions to the rating range when reporting metrics.
    pub clip_predictions: bool,
    /// Standard deviation of the Gaussian initialization.
    pub init_std: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            d: 20,
            alpha: 0.05,
            lambda: 10.0,
            lambda_u: 0.1,
            lambda_v: 0.1,
            p: 0.5,
            max_iters: 100,
            max_rounds: None,
            stop_eps: 1e-4,
            seed: 0,
            dropout_rate: 0.0,
            privacy: None,
            clip_predictions: true,
            init_std: 0.01,
        }
    }
}

impl TrainConfig {
    /// Defaults with the per-trainer step size (0.05, or 0.025 for the fast
    /// trainer).
    pub fn for_kind(kind: TrainerKind) -> Self {
        let mut cfg = Self::default();
        if kind == TrainerKind::Rfrecf {
            cfg.alpha = 0.025;
        }
        cfg
    }

    pub fn validate(&self, kind: TrainerKind) -> Result<()> {
        let positive = |name: &str, x: f64| {
            if x > 0.0 && x.is_finite() {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must be positive, got {x}")))
            }
        };
        let non_negative = |name: &str, x: f64| {
            if x >= 0.0 && x.is_finite() {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must be non-negative, got {x}")))
            }
        };
        if self.d == 0 {
            return Err(Error::Config("d must be positive".into()));
        }
        positive("alpha", self.alpha)?;
        positive("lambda", self.lambda)?;
        non_negative("lambda_u", self.lambda_u)?;
        non_negative("lambda_v", self.lambda_v)?;
        non_negative("stop_eps", self.stop_eps)?;
        non_negative("init_std", self.init_std)?;
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::Config(format!(
                "dropout_rate must lie in [0, 1), got {}",
                self.dropout_rate
            )));
        }
        if kind == TrainerKind::Rfrecf && !(self.p > 0.0 && self.p < 1.0) {
            return Err(Error::InvalidProbability(self.p));
        }
        if let Some(privacy) = &self.privacy {
            privacy.validate()?;
        }
        Ok(())
    }
}
