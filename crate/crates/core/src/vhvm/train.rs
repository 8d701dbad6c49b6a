use serde::{Deserialize, Serialize};

use super::model::{Net, VhvmModel};
use super::seq::{elbo_terms, evaluate_sequence, Noise};
use super::VhvmError;
use crate::autodiff::{Adam, Tape};
use crate::panel::ReturnsPanel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub seed: u64,
    pub tbptt_window: usize,
    pub kl_weight: f64,
    /// Reset the model's input scale to the per-asset RMS of the training data.
    pub standardize: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            lr: 3e-3,
            seed: 0,
            tbptt_window: 64,
            kl_weight: 1.0,
            standardize: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), VhvmError> {
        if self.epochs == 0 {
            return Err(VhvmError::Config("epochs must be >= 1".into()));
        }
        if self.tbptt_window == 0 {
            return Err(VhvmError::Config("tbptt_window must be >= 1".into()));
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(VhvmError::Config(format!("lr must be > 0, got {}", self.lr)));
        }
        if !(self.kl_weight.is_finite() && self.kl_weight >= 0.0) {
            return Err(VhvmError::Config(format!("kl_weight must be >= 0, got {}", self.kl_weight)));
        }
        Ok(())
    }
}

/// One line of the training log. Epoch 0 is the untrained model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_elbo: f64,
    pub valid_ll: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub epochs: Vec<EpochRecord>,
    /// Epoch whose parameters were kept.
    pub best_epoch: usize,
}

impl TrainLog {
    pub fn initial(&self) -> Option<&EpochRecord> {
        self.epochs.first()
    }

    pub fn last(&self) -> Option<&EpochRecord> {
        self.epochs.last()
    }

    /// One JSON object per line.
    pub fn to_jsonl(&self) -> String {
        self.epochs
            .iter()
            .map(|e| serde_json::to_string(e).expect("plain struct serializes") + "\n")
            .collect()
    }
}

/// One truncated-BPTT pass over `data`; returns the raw-scale ELBO summed
/// over all windows. With an optimizer, each window is followed by one
/// update.
fn sweep(
    model: &mut VhvmModel,
    data: &ReturnsPanel,
    cfg: &TrainConfig,
    stream: u64,
    mut opt: Option<&mut Adam>,
) -> Result<f64, VhvmError> {
    let mut noise = Noise::Seeded(cfg.seed).source(stream);
    let mut h = vec![0.0; model.config().hidden];
    let mut elbo = 0.0;
    let rows: Vec<&[f64]> = data.rows().collect();
    for (w, chunk) in rows.chunks(cfg.tbptt_window).enumerate() {
        let t0 = w * cfg.tbptt_window;
        let grads = {
            let mut tape = Tape::new();
            let bound = model.params.bind(&mut tape);
            let net = Net::bind(model, &bound)?;
            let h0 = tape.constant_vec(h.clone());
            let (total, h_end) = elbo_terms(
                model,
                &mut tape,
                &net,
                chunk.iter().copied(),
                h0,
                &mut noise,
                cfg.kl_weight,
                t0,
            )?;
            let total = total.expect("non-empty window");
            elbo += tape.scalar(total);
            h = tape.value(h_end).to_vec();
            if opt.is_some() {
                let loss = tape.neg(total);
                tape.backward(loss)?;
                Some(bound.collect_grads(&tape))
            } else {
                None
            }
        };
        if let (Some(grads), Some(adam)) = (grads, opt.as_deref_mut()) {
            model.params.accumulate(&grads)?;
            adam.step(&mut model.params);
        }
    }
    Ok(elbo - data.len() as f64 * model.log_scale_sum())
}

/// Fits the model by maximizing the ELBO on `train`; after every epoch the
/// one-step-ahead log likelihood on `valid` (warmed through `train`) is
/// recorded, and the parameters of the best such epoch are kept.
pub fn train(
    model: &mut VhvmModel,
    train: &ReturnsPanel,
    valid: &ReturnsPanel,
    cfg: &TrainConfig,
) -> Result<TrainLog, VhvmError> {
    cfg.validate()?;
    model.check_width("train width", train.n())?;
    model.check_width("valid width", valid.n())?;
    if train.len() < 2 || valid.is_empty() {
        return Err(VhvmError::Config(format!(
            "need >= 2 train and >= 1 valid rows, got {} and {}",
            train.len(),
            valid.len()
        )));
    }
    if cfg.standardize {
        let scale = train.rms().into_iter().map(|s| if s > 0.0 { s } else { 1.0 }).collect();
        model.set_scale(scale)?;
    }

    let mut log = TrainLog::default();
    let mut adam = Adam::with_lr(cfg.lr);
    let mut best: Option<(f64, crate::autodiff::ParamStore)> = None;
    for epoch in 0..=cfg.epochs {
        let opt = (epoch > 0).then_some(&mut adam);
        let swept = sweep(model, train, cfg, epoch as u64, opt);
        let scored = swept.and_then(|elbo| Ok((elbo, evaluate_sequence(model, valid, train, false)?.total)));
        let (train_elbo, valid_ll) = match scored {
            Ok((e, v)) if e.is_finite() && v.is_finite() => (e, v),
            Ok(_) | Err(VhvmError::NonFinite { .. }) | Err(VhvmError::Cov(_)) => {
                log::error!("vhvm: training diverged at epoch {epoch}");
                return Err(VhvmError::Diverged { epoch, log });
            }
            Err(e) => return Err(e),
        };
        log::debug!("vhvm epoch {epoch}: train_elbo {train_elbo:.4} valid_ll {valid_ll:.4}");
        log.epochs.push(EpochRecord {
            epoch,
            train_elbo,
            valid_ll,
        });
        if best.as_ref().map_or(true, |(b, _)| valid_ll > *b) {
            best = Some((valid_ll, model.params.clone()));
            log.best_epoch = epoch;
        }
    }
    if let Some((_, params)) = best {
        model.params = params;
    }
    Ok(log)
}
