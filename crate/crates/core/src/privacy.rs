//! Differentially private release of client label counts.
//!
//! Each client perturbs its count vector once, before the first
//! communication round, by adding independent Laplace noise of scale `1/eps`
//! to every component (sensitivity 1: neighboring vectors differ by one
//! count). Clamping at zero and the all-ones fallback are post-processing
//! and do not weaken the guarantee.

use crate::error::{Error, Result};
use crate::labelstats::LabelCounts;
use rand::Rng;

/// Privacy budget for the Laplace mechanism; the per-component noise scale
/// is `1 / epsilon`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrivacyBudget {
    epsilon: f64,
}

impl PrivacyBudget {
    pub fn new(epsilon: f64) -> Result<Self> {
        if epsilon <= 0.0 || !epsilon.is_finite() {
            return Err(Error::Domain(format!("epsilon must be > 0, got {epsilon}")));
        }
        Ok(Self { epsilon })
    }

    pub fn epsilon(self) -> f64 {
        self.epsilon
    }

    pub fn noise_scale(self) -> f64 {
        1.0 / self.epsilon
    }
}

/// One draw from the zero-mean Laplace distribution with the given scale.
///
/// Inverse-CDF sampling on u uniform in (-0.5, 0.5):
/// `-scale * sign(u) * ln(1 - 2|u|)`.
pub fn laplace_sample<R: Rng + ?Sized>(scale: f64, rng: &mut R) -> Result<f64> {
    if scale <= 0.0 || !scale.is_finite() {
        return Err(Error::Domain(format!(
            "laplace scale must be > 0, got {scale}"
        )));
    }
    let mut u = rng.random::<f64>() - 0.5;
    while u == -0.5 {
        // random::<f64>() covers [0, 1); reject the single point mapping to -inf.
        u = rng.random::<f64>() - 0.5;
    }
    Ok(-scale * u.signum() * (1.0 - 2.0 * u.abs()).ln() + 0.0)
}

/// Add one independent Lap(1/eps) draw to every component, without clamping.
///
/// This is the raw mechanism output; [`privatize_counts`] post-processes it.
/// Exactly `C` draws are consumed from `rng`, in component order.
pub fn add_label_noise<R: Rng + ?Sized>(
    counts: &LabelCounts,
    budget: PrivacyBudget,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let scale = budget.noise_scale();
    counts
        .as_slice()
        .iter()
        .map(|c| Ok(c + laplace_sample(scale, rng)?))
        .collect()
}

/// DP release of a client's label counts.
///
/// Noises every component, clamps negatives to zero, and falls back to the
/// all-ones vector if no mass survives the clamp, so downstream
/// normalization stays defined.
pub fn privatize_counts<R: Rng + ?Sized>(
    counts: &LabelCounts,
    budget: PrivacyBudget,
    rng: &mut R,
) -> Result<LabelCounts> {
    let noised = add_label_noise(counts, budget, rng)?;
    let clamped: Vec<f64> = noised.iter().map(|v| v.max(0.0)).collect();
    if clamped.iter().sum::<f64>() <= 0.0 {
        return LabelCounts::new(vec![1.0; counts.num_classes()]);
    }
    LabelCounts::new(clamped)
}
