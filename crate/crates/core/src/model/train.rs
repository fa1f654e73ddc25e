use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{adam_step, compute_gradients, forward, AdamState, Gradients, ModelConfig, ModelError, TrainableModel};
use crate::imaging::ImageU8;
use crate::metrics;

/// Optimization settings. Defaults: 400 epochs, learning rate 1e-4,
/// batch size 1, Adam moments 0.9 / 0.999, epsilon 1e-8.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 400,
            learning_rate: 1e-4,
            batch_size: 1,
            seed: 0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.epochs == 0 {
            return Err(ModelError::InvalidConfig("epochs must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(ModelError::InvalidConfig("learning rate must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(ModelError::InvalidConfig("batch size must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(ModelError::InvalidConfig("Adam betas must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: TrainableModel,
    /// Mean training objective per epoch.
    pub loss_history: Vec<f64>,
    pub steps: u64,
}

/// Train a freshly initialized model (seeded from `train_cfg.seed`).
pub fn train(
    dataset: &[(ImageU8, ImageU8)],
    model_cfg: ModelConfig,
    train_cfg: &TrainConfig,
) -> Result<TrainOutcome, ModelError> {
    let model = TrainableModel::new(model_cfg, train_cfg.seed)?;
    train_model(model, dataset, train_cfg)
}

/// Continue training `model` on `(input, target)` pairs.
pub fn train_model(
    mut model: TrainableModel,
    dataset: &[(ImageU8, ImageU8)],
    cfg: &TrainConfig,
) -> Result<TrainOutcome, ModelError> {
    cfg.validate()?;
    if dataset.is_empty() {
        return Err(ModelError::EmptyDataset);
    }
    for (i, (input, target)) in dataset.iter().enumerate() {
        if !input.same_dimensions(target) {
            return Err(ModelError::DimensionMismatch(format!(
                "pair {i}: input {}x{} vs target {}x{}",
                input.width(),
                input.height(),
                target.width(),
                target.height()
            )));
        }
    }
    let working: Vec<ImageU8> = dataset.iter().map(|(x, _)| model.working_image(x)).collect();

    let mut params = model.flatten();
    let mut adam = AdamState::new(params.len());
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x005e_ed0f_0dde_b175);
    let mut loss_history = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let mut total = Gradients::zeros(params.len());
            for &i in batch {
                let (input, target) = &dataset[i];
                total.accumulate(&compute_gradients(&model, input, &working[i], target)?);
            }
            epoch_loss += total.loss;
            total.scale(1.0 / batch.len() as f64);
            adam_step(&mut params, &total.values, &mut adam, cfg)?;
            model.unflatten(&params)?;
        }
        let mean = epoch_loss / dataset.len() as f64;
        if !mean.is_finite() {
            return Err(ModelError::NonFinite(format!("training loss at epoch {epoch}")));
        }
        log::debug!("epoch {epoch}: l1 {mean:.6}");
        loss_history.push(mean);
    }
    Ok(TrainOutcome {
        model,
        loss_history,
        steps: adam.steps(),
    })
}

/// Mean per-image PSNR of the network path (outputs rounded to bytes), using
/// working images of side `working_size`.
pub fn evaluate_psnr(
    model: &TrainableModel,
    pairs: &[(ImageU8, ImageU8)],
    working_size: usize,
) -> Result<f64, ModelError> {
    if pairs.is_empty() {
        return Err(ModelError::EmptyDataset);
    }
    let mut total = 0.0;
    for (input, target) in pairs {
        let working = crate::imaging::bilinear_downsample(input, working_size, working_size);
        let (out, _) = forward(model, input, &working)?;
        total += metrics::psnr(&out.to_u8(), target)
            .map_err(|e| ModelError::DimensionMismatch(e.to_string()))?;
    }
    Ok(total / pairs.len() as f64)
}
