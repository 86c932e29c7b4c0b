use serde::{Deserialize, Serialize};

use super::TrainError;
use crate::models::{Family, PAGAN_LEVEL_CAP};

/// Hyper-parameters of one training run. Rates, betas and batch size are
/// conventional choices; the eval cadence and epoch count follow the
/// reference protocol (100 epochs, FID/KID every 5 on 200 images).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr_generator: f64,
    pub lr_discriminator: f64,
    pub adam_betas: (f64, f64),
    /// Discriminator target for real images (label smoothing).
    pub real_label: f64,
    pub gp_lambda: f64,
    /// Discriminator updates per generator update; `None` picks 5 for
    /// WGAN-GP and 1 otherwise.
    pub critic_steps: Option<usize>,
    pub eval_every_epochs: usize,
    pub metric_batch: usize,
    pub pagan_stall_window: usize,
    pub pagan_stall_epsilon: f64,
    pub pagan_max_level: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch_size: 64,
            lr_generator: 5e-4,
            lr_discriminator: 2e-4,
            adam_betas: (0.5, 0.999),
            real_label: 0.9,
            gp_lambda: 10.0,
            critic_steps: None,
            eval_every_epochs: 5,
            metric_batch: 200,
            pagan_stall_window: 3,
            pagan_stall_epsilon: 0.02,
            pagan_max_level: PAGAN_LEVEL_CAP,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |msg: String| Err(TrainError::InvalidConfig(msg));
        if self.epochs == 0 {
            return bad("epochs must be positive".into());
        }
        if self.batch_size < 2 {
            return bad("batch_size must be at least 2 (batch statistics)".into());
        }
        if !(self.real_label > 0.5 && self.real_label <= 1.0) {
            return bad(format!("real_label {} must lie in (0.5, 1]", self.real_label));
        }
        if !(self.gp_lambda >= 0.0) {
            return bad(format!("gp_lambda {} must be non-negative", self.gp_lambda));
        }
        if self.pagan_max_level > PAGAN_LEVEL_CAP {
            return bad(format!(
                "pagan_max_level {} exceeds {PAGAN_LEVEL_CAP}",
                self.pagan_max_level
            ));
        }
        for (name, lr) in [("lr_generator", self.lr_generator), ("lr_discriminator", self.lr_discriminator)] {
            if !(lr > 0.0 && lr.is_finite()) {
                return bad(format!("{name} must be a positive finite number"));
            }
        }
        let (b1, b2) = self.adam_betas;
        if !((0.0..1.0).contains(&b1) && (0.0..1.0).contains(&b2)) {
            return bad(format!("adam_betas {:?} must lie in [0, 1)", self.adam_betas));
        }
        if self.critic_steps == Some(0) {
            return bad("critic_steps must be positive".into());
        }
        if self.eval_every_epochs == 0 {
            return bad("eval_every_epochs must be positive".into());
        }
        if self.metric_batch < 2 {
            return bad("metric_batch must be at least 2".into());
        }
        if self.pagan_stall_window == 0 {
            return bad("pagan_stall_window must be positive".into());
        }
        Ok(())
    }

    /// PAGAN runs train without label smoothing.
    pub fn effective_real_label(&self, family: Family) -> f64 {
        if family == Family::Pagan {
            1.0
        } else {
            self.real_label
        }
    }

    pub fn effective_critic_steps(&self, family: Family) -> usize {
        self.critic_steps
            .unwrap_or(if family.is_critic() { 5 } else { 1 })
    }

    /// Number of evaluation points a full run produces.
    pub fn evaluation_count(&self) -> usize {
        self.epochs / self.eval_every_epochs
    }

    /// Equal up to the epoch budget, which may grow on resume.
    pub(crate) fn resumable_from(&self, saved: &TrainConfig) -> bool {
        let mut a = self.clone();
        a.epochs = saved.epochs;
        &a == saved
    }
}
