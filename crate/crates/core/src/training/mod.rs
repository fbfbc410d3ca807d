//! Mini-batch Adam training with early stopping, loss evaluation and
//! checkpoints.

mod checkpoint;

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use checkpoint::{load_checkpoint, load_checkpoint_as, save_checkpoint, CHECKPOINT_VERSION};

use crate::dataset::io::create;
use crate::dataset::{DataSplit, QMatrix, ResponseLog};
use crate::diffcore::{bce_term, AdamConfig, Graph};
use crate::error::{CdmError, Result};
use crate::models::{Dims, FitContext, Model, ModelConfig, ModelKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    pub model: ModelKind,
    pub model_config: ModelConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let adam = AdamConfig::default();
        Self {
            lr: adam.lr,
            beta1: adam.beta1,
            beta2: adam.beta2,
            eps: adam.eps,
            batch_size: 256,
            max_epochs: 50,
            patience: 5,
            seed: 0,
            model: ModelKind::IdCdm,
            model_config: ModelConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn for_kind(model: ModelKind) -> Self {
        Self {
            model,
            model_config: ModelConfig::for_kind(model),
            ..Self::default()
        }
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(CdmError::Config("batch_size must be at least 1".into()));
        }
        if self.patience == 0 {
            return Err(CdmError::Config("patience must be at least 1".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(CdmError::Config(format!("lr must be positive, got {}", self.lr)));
        }
        Ok(())
    }

    /// Fresh model of the configured kind, initialised from `seed`.
    pub fn build_model(&self, dims: Dims) -> Result<Model> {
        let mut cfg = self.model_config.clone();
        self.model.apply_to(&mut cfg);
        Model::new(self.model, cfg, dims, self.seed)
    }
}

/// Which loss drives early stopping.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Monitor {
    Validation,
    /// Used when the validation part is empty.
    Fit,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean per-log loss over the epoch's batches.
    pub fit_loss: f64,
    pub val_loss: Option<f64>,
    pub val_acc: Option<f64>,
    /// Wall-clock of the optimisation pass; kept out of serialised reports
    /// so they stay reproducible.
    #[serde(skip)]
    pub seconds: f64,
}

impl PartialEq for EpochRecord {
    fn eq(&self, other: &Self) -> bool {
        self.epoch == other.epoch
            && self.fit_loss.to_bits() == other.fit_loss.to_bits()
            && self.val_loss.map(f64::to_bits) == other.val_loss.map(f64::to_bits)
            && self.val_acc.map(f64::to_bits) == other.val_acc.map(f64::to_bits)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub model: ModelKind,
    pub monitor: Monitor,
    pub epochs: Vec<EpochRecord>,
    /// 1-based epoch whose parameters were kept.
    pub best_epoch: usize,
    pub best_loss: f64,
    pub stopped_early: bool,
    pub fit_logs: usize,
    pub batches_per_epoch: usize,
}

impl TrainReport {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| CdmError::Validation(e.to_string()))
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        let mut w = create(path)?;
        writeln!(w, "{}", self.to_json()?).map_err(|e| CdmError::io(path, e))
    }

    /// `epoch,fit_loss,val_loss,val_acc`, empty cells for a missing validation part.
    pub fn write_epochs_csv(&self, path: &Path) -> Result<()> {
        let mut w = create(path)?;
        let opt = |v: Option<f64>| v.map_or(String::new(), |v| v.to_string());
        let mut body = String::from("epoch,fit_loss,val_loss,val_acc\n");
        for e in &self.epochs {
            body.push_str(&format!(
                "{},{},{},{}\n",
                e.epoch,
                e.fit_loss,
                opt(e.val_loss),
                opt(e.val_acc)
            ));
        }
        w.write_all(body.as_bytes()).map_err(|e| CdmError::io(path, e))
    }

    /// `epoch,batches,seconds`
    pub fn write_timing_csv(&self, path: &Path) -> Result<()> {
        let mut w = create(path)?;
        let mut body = String::from("epoch,batches,seconds\n");
        for e in &self.epochs {
            body.push_str(&format!("{},{},{:.6}\n", e.epoch, self.batches_per_epoch, e.seconds));
        }
        w.write_all(body.as_bytes()).map_err(|e| CdmError::io(path, e))
    }

    pub fn mean_epoch_seconds(&self) -> f64 {
        if self.epochs.is_empty() {
            return 0.0;
        }
        self.epochs.iter().map(|e| e.seconds).sum::<f64>() / self.epochs.len() as f64
    }
}

/// Mean binary cross-entropy of the model's predictions on `logs`.
pub fn evaluate_loss(model: &Model, ctx: &FitContext, logs: &[ResponseLog]) -> Result<f64> {
    Ok(evaluate(model, ctx, logs)?.0)
}

/// Mean loss and accuracy at threshold 0.5.
fn evaluate(model: &Model, ctx: &FitContext, logs: &[ResponseLog]) -> Result<(f64, f64)> {
    if logs.is_empty() {
        return Err(CdmError::Empty("logs"));
    }
    let ys = model.predict_logs(ctx, logs)?;
    let mut loss = 0.0;
    let mut hits = 0usize;
    for (y, log) in ys.iter().zip(logs) {
        loss += bce_term(*y, log.target());
        hits += usize::from((*y >= 0.5) == (log.score == 1));
    }
    let n = logs.len() as f64;
    Ok((loss / n, hits as f64 / n))
}

/// One pass of shuffled mini-batch Adam over `fit`. Returns the mean
/// per-log loss.
pub fn train_epoch(
    model: &mut Model,
    ctx: &FitContext,
    fit: &[ResponseLog],
    cfg: &TrainConfig,
    rng: &mut ChaCha8Rng,
    epoch: usize,
) -> Result<f64> {
    let adam = cfg.adam();
    let mut order: Vec<usize> = (0..fit.len()).collect();
    order.shuffle(rng);
    let mut total = 0.0;
    let mut batch = Vec::with_capacity(cfg.batch_size);
    for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
        batch.clear();
        batch.extend(chunk.iter().map(|&i| fit[i]));
        let grads = {
            let mut g = Graph::new(model.params());
            let loss = model.loss(&mut g, &batch, ctx)?;
            let value = g.value(loss).data()[0];
            if !value.is_finite() {
                return Err(CdmError::NonFinite {
                    what: "loss",
                    detail: format!("epoch {epoch}, batch {b}: {value}"),
                });
            }
            total += value;
            g.backward(loss)?
        };
        model.params_mut().apply_adam(&grads, &adam).map_err(|e| match e {
            CdmError::NonFinite { what, detail } => CdmError::NonFinite {
                what,
                detail: format!("epoch {epoch}, batch {b}: {detail}"),
            },
            other => other,
        })?;
    }
    Ok(total / fit.len() as f64)
}

/// Trains `model` on `split.fit`, stopping once the monitored loss has not
/// improved for `patience` epochs, and restores the best parameters.
pub fn train(model: &mut Model, split: &DataSplit, q: &QMatrix, cfg: &TrainConfig) -> Result<TrainReport> {
    cfg.validate()?;
    if split.fit.is_empty() {
        return Err(CdmError::Empty("fit set"));
    }
    let ctx = FitContext::new(model.dims(), &split.fit, q)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    let monitor = if split.validation.is_empty() {
        Monitor::Fit
    } else {
        Monitor::Validation
    };

    let mut epochs = Vec::new();
    let mut best: Option<(usize, f64, Vec<_>)> = None;
    let mut since_best = 0;
    let mut stopped_early = false;
    for epoch in 1..=cfg.max_epochs {
        let start = Instant::now();
        let fit_loss = train_epoch(model, &ctx, &split.fit, cfg, &mut rng, epoch)?;
        let seconds = start.elapsed().as_secs_f64();
        let (val_loss, val_acc) = match monitor {
            Monitor::Validation => {
                let (l, a) = evaluate(model, &ctx, &split.validation)?;
                (Some(l), Some(a))
            }
            Monitor::Fit => (None, None),
        };
        log::debug!(
            "{} epoch {epoch}: fit {fit_loss:.5} val {val_loss:?} ({seconds:.2}s)",
            model.kind()
        );
        epochs.push(EpochRecord {
            epoch,
            fit_loss,
            val_loss,
            val_acc,
            seconds,
        });
        let watched = val_loss.unwrap_or(fit_loss);
        if best.as_ref().is_none_or(|(_, l, _)| watched < *l) {
            best = Some((epoch, watched, model.params().snapshot()));
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.patience {
                stopped_early = true;
                break;
            }
        }
    }
    let (best_epoch, best_loss) = match best {
        Some((e, l, snapshot)) => {
            model.params_mut().restore(snapshot);
            (e, l)
        }
        None => (0, f64::NAN),
    };
    Ok(TrainReport {
        model: model.kind(),
        monitor,
        epochs,
        best_epoch,
        best_loss,
        stopped_early,
        fit_logs: split.fit.len(),
        batches_per_epoch: split.fit.len().div_ceil(cfg.batch_size),
    })
}

#[cfg(test)]
mod tests;
