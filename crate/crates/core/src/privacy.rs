//! Clip-and-Laplace perturbation of uploaded item matrices.
//!
//! Each entry is clamped to `[−δ, δ]` and then receives independent
//! `Laplace(0, s)` noise. Clamping bounds the per-entry sensitivity by `2δ`,
//! so one perturbed entry is `ε`-differentially private with `ε = 2δ/s`.
//! The budget is reported per entry and per upload; no composition across
//! entries or rounds is tracked.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::ItemMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrivacyConfig {
    /// Clip threshold `δ`.
    pub delta: f64,
    /// Laplace scale `s`.
    pub scale: f64,
    /// When false, uploads are clipped but no noise is drawn.
    #[serde(default = "default_true")]
    pub add_noise: bool,
}

fn default_true() -> bool {
    true
}

impl PrivacyConfig {
    pub fn new(delta: f64, scale: f64) -> Result<Self> {
        let cfg = Self {
            delta,
            scale,
            add_noise: true,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Clip only; the noise stage is switched off.
    pub fn without_noise(mut self) -> Self {
        self.add_noise = false;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return Err(Error::Config(format!("clip threshold must be positive, got {}", self.delta)));
        }
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return Err(Error::Config(format!("noise scale must be positive, got {}", self.scale)));
        }
        Ok(())
    }

    /// `ε = 2δ/s`.
    pub fn budget(&self) -> f64 {
        budget(self)
    }
}

/// `ε = 2δ/s`.
pub fn budget(cfg: &PrivacyConfig) -> f64 {
    2.0 * cfg.delta / cfg.scale
}

/// One draw from `Laplace(0, scale)` by inverting the CDF.
pub fn sample_laplace<R: Rng + ?Sized>(rng: &mut R, scale: f64) -> f64 {
    loop {
        let u: f64 = rng.gen::<f64>() - 0.5;
        let tail = 1.0 - 2.0 * u.abs();
        if tail > 0.0 {
            return -scale * u.signum() * tail.ln();
        }
    }
}

/// Entrywise clamp to `[−δ, δ]`.
pub fn clip(item_mat: &ItemMatrix, delta: f64) -> ItemMatrix {
    let mut out = item_mat.clone();
    for x in out.as_mut_slice() {
        *x = x.clamp(-delta, delta);
    }
    out
}

/// `Clip(V, δ) + Laplace(0, s)`, entrywise.
pub fn perturb<R: Rng + ?Sized>(item_mat: &ItemMatrix, cfg: &PrivacyConfig, rng: &mut R) -> Result<ItemMatrix> {
    cfg.validate()?;
    if !item_mat.is_finite() {
        return Err(Error::NonFiniteInput);
    }
    let mut out = clip(item_mat, cfg.delta);
    if cfg.add_noise {
        for x in out.as_mut_slice() {
            *x += sample_laplace(rng, cfg.scale);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn budget_values() {
        assert_eq!(PrivacyConfig::new(0.2, 0.04).unwrap().budget(), 10.0);
        let e = PrivacyConfig::new(0.2, 0.06).unwrap().budget();
        assert!((e - 20.0 / 3.0).abs() < 1e-12);
        assert_eq!(PrivacyConfig::new(0.3, 0.3).unwrap().budget(), 2.0);
    }

    #[test]
    fn budget_monotone() {
        let base = PrivacyConfig::new(0.2, 0.05).unwrap();
        assert!(PrivacyConfig::new(0.3, 0.05).unwrap().budget() > base.budget());
        assert!(PrivacyConfig::new(0.2, 0.08).unwrap().budget() < base.budget());
    }

    #[test]
    fn invalid_configs() {
        assert!(PrivacyConfig::new(0.0, 1.0).is_err());
        assert!(PrivacyConfig::new(1.0, -1.0).is_err());
        assert!(PrivacyConfig::new(f64::NAN, 1.0).is_err());
    }

    #[test]
    fn noise_off_within_bounds_is_identity() {
        let m = ItemMatrix::from_rows(&[vec![0.1, -0.15], vec![0.0, 0.2]]).unwrap();
        let cfg = PrivacyConfig::new(0.2, 0.04).unwrap().without_noise();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(perturb(&m, &cfg, &mut rng).unwrap(), m);
    }

    #[test]
    fn clip_before_noise() {
        let m = ItemMatrix::from_rows(&[vec![0.9, -3.0]]).unwrap();
        let cfg = PrivacyConfig::new(0.2, 1.0).unwrap().without_noise();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(perturb(&m, &cfg, &mut rng).unwrap().as_slice(), &[0.2, -0.2]);
    }

    #[test]
    fn rejects_non_finite() {
        let m = ItemMatrix::from_rows(&[vec![f64::NAN]]).unwrap();
        let cfg = PrivacyConfig::new(0.2, 0.04).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(matches!(perturb(&m, &cfg, &mut rng), Err(Error::NonFiniteInput)));
    }

    #[test]
    fn deterministic_under_seed() {
        let m = ItemMatrix::from_rows(&[vec![0.1, 0.5, -0.3]]).unwrap();
        let cfg = PrivacyConfig::new(0.2, 0.04).unwrap();
        let a = perturb(&m, &cfg, &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
        let b = perturb(&m, &cfg, &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
        assert_eq!(a, b);
    }
}
