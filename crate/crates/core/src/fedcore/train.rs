//! Local SGD with momentum and dataset-size-weighted parameter aggregation.

use crate::error::{Error, Result};
use crate::fedcore::dataset::Dataset;
use crate::fedcore::model::{forward_loss_grad, ModelParams, ModelSpec};
use rand::seq::SliceRandom;
use rand::Rng;

/// Optimizer and round-loop hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub local_epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub lr_decay_per_round: f64,
    pub rounds: usize,
    pub cohort_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            local_epochs: 5,
            batch_size: 64,
            lr: 0.01,
            momentum: 0.9,
            weight_decay: 5e-4,
            lr_decay_per_round: 0.98,
            rounds: 100,
            cohort_size: 10,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.local_epochs == 0
            || self.batch_size == 0
            || self.rounds == 0
            || self.cohort_size == 0
        {
            return Err(Error::Domain(
                "epochs, batch size, rounds and cohort size must be positive".into(),
            ));
        }
        if self.lr <= 0.0 || !self.lr.is_finite() {
            return Err(Error::Domain(format!(
                "learning rate must be > 0, got {}",
                self.lr
            )));
        }
        if self.momentum.is_nan() || self.momentum < 0.0 || self.momentum >= 1.0 {
            return Err(Error::Domain(format!(
                "momentum must be in [0, 1), got {}",
                self.momentum
            )));
        }
        if self.weight_decay < 0.0 || !self.weight_decay.is_finite() {
            return Err(Error::Domain(format!(
                "weight decay must be >= 0, got {}",
                self.weight_decay
            )));
        }
        if !(self.lr_decay_per_round > 0.0 && self.lr_decay_per_round <= 1.0) {
            return Err(Error::Domain(format!(
                "lr decay must be in (0, 1], got {}",
                self.lr_decay_per_round
            )));
        }
        Ok(())
    }

    /// Step size used in round `t` (0-based): `lr * decay^t`.
    pub fn effective_lr(&self, round: usize) -> f64 {
        self.lr * self.lr_decay_per_round.powi(round as i32)
    }
}

/// Run local mini-batch SGD with momentum and L2 weight decay.
///
/// Trains for `local_epochs` passes over `samples` (indices into `data`),
/// shuffled per epoch from `rng`, in batches of `batch_size` with the last
/// partial batch kept. Momentum starts at zero: clients are stateless
/// between rounds. Weight decay enters the update as `grad + wd * theta`;
/// it is not part of the reported loss.
pub fn local_train<R: Rng + ?Sized>(
    spec: &ModelSpec,
    global_params: &ModelParams,
    data: &Dataset,
    samples: &[usize],
    cfg: &TrainConfig,
    round_lr: f64,
    rng: &mut R,
) -> Result<ModelParams> {
    cfg.validate()?;
    if samples.is_empty() {
        return Err(Error::Domain("local dataset must be non-empty".into()));
    }
    if round_lr < 0.0 || !round_lr.is_finite() {
        return Err(Error::Domain(format!(
            "round lr must be >= 0, got {round_lr}"
        )));
    }

    let mut params = global_params.clone();
    let mut velocity = vec![0.0; params.len()];
    let mut order: Vec<usize> = samples.to_vec();

    for epoch in 0..cfg.local_epochs {
        order.shuffle(rng);
        for (batch_ix, batch) in order.chunks(cfg.batch_size).enumerate() {
            let (_, grad) = forward_loss_grad(spec, &params, data, batch)
                .map_err(|e| Error::Numerical(format!("epoch {epoch}, batch {batch_ix}: {e}")))?;
            let values = params.values_mut();
            for ix in 0..grad.len() {
                let g = grad[ix] + cfg.weight_decay * values[ix];
                velocity[ix] = cfg.momentum * velocity[ix] + g;
                values[ix] -= round_lr * velocity[ix];
            }
            if !params.is_finite() {
                return Err(Error::Numerical(format!(
                    "parameters diverged in epoch {epoch}, batch {batch_ix}"
                )));
            }
        }
    }
    Ok(params)
}

/// Dataset-size-weighted average of client updates.
///
/// Weights are `n_s / sum(n)`; summation runs in the order given, so callers
/// wanting bitwise reproducibility must fix that order (the round loop sorts
/// by ascending client id).
pub fn aggregate_params(updates: &[(ModelParams, f64)]) -> Result<ModelParams> {
    let (first, _) = updates
        .first()
        .ok_or_else(|| Error::Domain("cannot aggregate zero updates".into()))?;
    let len = first.len();
    let mut total_weight = 0.0;
    for (params, weight) in updates {
        if params.len() != len {
            return Err(Error::Dimension {
                expected: len,
                got: params.len(),
            });
        }
        if *weight <= 0.0 || !weight.is_finite() {
            return Err(Error::Domain(format!(
                "aggregation weight must be > 0, got {weight}"
            )));
        }
        total_weight += weight;
    }

    let mut result = first.clone();
    result.values_mut().fill(0.0);
    for (params, weight) in updates {
        let w = weight / total_weight;
        for (out, v) in result.values_mut().iter_mut().zip(params.values()) {
            *out += w * v;
        }
    }
    Ok(result)
}
