//! Mini-batch training with the step learning-rate schedule, per-epoch
//! validation, best-checkpoint tracking, and deterministic shuffling.
//!
//! Determinism contract: with a fixed seed, parameter init, per-epoch
//! shuffles, and every numeric step are reproducible bit-for-bit. The
//! shuffle RNG runs on its own stream, decoupled from the init RNG.

mod drivers;
mod optim;

pub use drivers::{
    ablate, ablation_configs, account, dim_sweep, write_ablation_csv, write_sweep_csv,
    AblationRecord, SpaceReport, SweepRecord, ABLATION_FLAG_SETS,
};
pub use optim::OptimizerKind;

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{AlignedSample, DatasetSplits};
use crate::error::{Error, Result};
use crate::layers::{init_params, model_backward, model_forward, predict, CubeMLPConfig, ParamStore, Tape};
use crate::objectives::{ccc_loss, evaluate as evaluate_batch, mae_loss, MetricReport, PredictionBatch};
use crate::scalar::Scalar;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    Mae,
    Ccc,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr0: f64,
    pub lr_decay: f64,
    pub decay_every: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub loss: LossKind,
    pub optimizer: OptimizerKind,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr0: 0.004,
            lr_decay: 0.1,
            decay_every: 50,
            epochs: 100,
            batch_size: 32,
            loss: LossKind::Mae,
            optimizer: OptimizerKind::Adam,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lr0 <= 0.0 {
            return Err(Error::config("lr0 must be > 0"));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return Err(Error::config("lr_decay must be in (0, 1]"));
        }
        if self.decay_every == 0 {
            return Err(Error::config("decay_every must be >= 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size must be >= 1"));
        }
        if self.loss == LossKind::Ccc && self.batch_size < 2 {
            return Err(Error::config("concordance loss needs batch_size >= 2"));
        }
        Ok(())
    }
}

/// Step schedule: `lr0 * lr_decay^floor(epoch / decay_every)`.
pub fn lr_at(epoch: usize, cfg: &TrainConfig) -> f64 {
    let k = (epoch / cfg.decay_every) as i32;
    // Dividing by the inverse decay keeps the decade values exact: 1/0.1 is
    // exactly 10, and powers of 10 carry no rounding, unlike 0.1^k.
    cfg.lr0 / (1.0 / cfg.lr_decay).powi(k)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub val: MetricReport,
}

/// Everything a run produced, minus the parameters themselves.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunRecord {
    pub seed: u64,
    pub model_config: CubeMLPConfig,
    pub train_config: TrainConfig,
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: Option<usize>,
    pub final_test: MetricReport,
    pub wall_clock_secs: f64,
}

impl RunRecord {
    pub const EPOCHS_CSV_HEADER: &'static str =
        "epoch,lr,train_loss,val_mae,val_corr,val_ccc,val_acc2,val_f1,val_acc7";

    /// Renders `epochs.csv`; numeric formatting is the shortest round-trip
    /// form, so identical runs produce identical bytes.
    pub fn epochs_csv(&self) -> String {
        let mut out = String::from(Self::EPOCHS_CSV_HEADER);
        out.push('\n');
        for e in &self.epochs {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                e.epoch,
                e.lr,
                e.train_loss,
                e.val.mae,
                e.val.pearson_r,
                e.val.ccc,
                e.val.acc2,
                e.val.f1,
                e.val.acc7
            ));
        }
        out
    }
}

/// A finished run: record plus final and best parameter sets.
pub struct TrainOutput<T> {
    pub record: RunRecord,
    pub final_params: ParamStore<T>,
    pub best_params: ParamStore<T>,
}

/// Scores a validation report for best-checkpoint selection; lower is
/// better. MAE-trained runs compare validation MAE, concordance-trained runs
/// compare negated validation CCC.
fn selection_score(loss: LossKind, report: &MetricReport) -> f64 {
    match loss {
        LossKind::Mae => report.mae,
        LossKind::Ccc => -report.ccc,
    }
}

/// Evaluates `params` over `samples`, parallelizing the forward passes when
/// the `parallel` feature is on. Prediction order always follows sample
/// order, so the metrics are identical either way.
pub fn evaluate<T: Scalar>(
    cfg: &CubeMLPConfig,
    params: &ParamStore<T>,
    samples: &[AlignedSample<T>],
) -> Result<MetricReport> {
    let preds = predictions(cfg, params, samples, true)?;
    let labels: Vec<T> = samples.iter().map(|s| s.label).collect();
    evaluate_batch(&PredictionBatch::new(preds, labels)?)
}

/// Sequential twin of [`evaluate`], kept for the benchmark suite.
pub fn evaluate_sequential<T: Scalar>(
    cfg: &CubeMLPConfig,
    params: &ParamStore<T>,
    samples: &[AlignedSample<T>],
) -> Result<MetricReport> {
    let preds = predictions(cfg, params, samples, false)?;
    let labels: Vec<T> = samples.iter().map(|s| s.label).collect();
    evaluate_batch(&PredictionBatch::new(preds, labels)?)
}

fn predictions<T: Scalar>(
    cfg: &CubeMLPConfig,
    params: &ParamStore<T>,
    samples: &[AlignedSample<T>],
    use_parallel: bool,
) -> Result<Vec<T>> {
    #[cfg(feature = "parallel")]
    {
        if use_parallel {
            return samples
                .par_iter()
                .map(|s| predict(&s.cube, cfg, params))
                .collect();
        }
    }
    let _ = use_parallel;
    samples.iter().map(|s| predict(&s.cube, cfg, params)).collect()
}

/// Runs mini-batch descent and returns the run record together with the
/// final and best-validation parameter sets.
///
/// Batches re-shuffle every epoch from a dedicated RNG stream. The training
/// step itself is single-threaded over one model; only the tensor kernels
/// parallelize internally (bit-identically). A non-finite loss or update
/// aborts with the offending epoch and batch.
pub fn train<T: Scalar>(
    model_cfg: &CubeMLPConfig,
    train_cfg: &TrainConfig,
    data: &DatasetSplits<T>,
) -> Result<TrainOutput<T>> {
    model_cfg.validate()?;
    train_cfg.validate()?;
    if data.train.is_empty() {
        return Err(Error::data(None, "training split is empty"));
    }
    let data_shape = data.shape().expect("non-empty dataset");
    if data_shape != model_cfg.input {
        return Err(Error::shape(
            "train",
            format!(
                "dataset cubes are {data_shape:?} but the model expects {:?}",
                model_cfg.input
            ),
        ));
    }

    let started = Instant::now();
    let mut params = init_params::<T>(model_cfg, train_cfg.seed);
    let mut optimizer = optim::Optimizer::new(train_cfg.optimizer, &params);
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(train_cfg.seed);
    shuffle_rng.set_stream(1);

    let n_train = data.train.len();
    let mut indices: Vec<usize> = (0..n_train).collect();
    let mut epochs = Vec::with_capacity(train_cfg.epochs);
    let mut best: Option<(f64, usize, ParamStore<T>)> = None;

    for epoch in 0..train_cfg.epochs {
        let lr = lr_at(epoch, train_cfg);
        indices.shuffle(&mut shuffle_rng);

        let mut loss_weighted_sum = 0.0;
        let mut counted = 0usize;
        for (batch_idx, chunk) in indices.chunks(train_cfg.batch_size).enumerate() {
            if train_cfg.loss == LossKind::Ccc && chunk.len() < 2 {
                // A trailing singleton has no defined concordance; skip it.
                continue;
            }
            let numeric = |e: Error| match e {
                Error::NonFinite { op } => Error::NumericAbort {
                    epoch,
                    batch: Some(batch_idx),
                    detail: format!("{op} produced non-finite values"),
                },
                other => other,
            };

            let mut tapes = Vec::with_capacity(chunk.len());
            let mut preds = Vec::with_capacity(chunk.len());
            let mut labels = Vec::with_capacity(chunk.len());
            for &i in chunk {
                let sample = &data.train[i];
                let mut tape = Tape::new();
                let y_hat =
                    model_forward(&sample.cube, model_cfg, &params, &mut tape).map_err(numeric)?;
                tapes.push(tape);
                preds.push(y_hat);
                labels.push(sample.label);
            }
            let batch = PredictionBatch::new(preds, labels).map_err(numeric)?;
            let (loss, grads) = match train_cfg.loss {
                LossKind::Mae => mae_loss(&batch),
                LossKind::Ccc => ccc_loss(&batch).map_err(numeric)?,
            };
            if !loss.to_f64().is_finite() {
                return Err(Error::NumericAbort {
                    epoch,
                    batch: Some(batch_idx),
                    detail: "loss is not finite".into(),
                });
            }

            params.zero_grads();
            for (tape, &g) in tapes.iter_mut().zip(&grads) {
                model_backward(g, tape, &mut params).map_err(numeric)?;
            }
            optimizer.step(&mut params, lr);

            loss_weighted_sum += loss.to_f64() * chunk.len() as f64;
            counted += chunk.len();
        }
        let train_loss = if counted > 0 {
            loss_weighted_sum / counted as f64
        } else {
            f64::NAN
        };

        // A model whose updates went non-finite usually surfaces here first.
        let val = evaluate(model_cfg, &params, &data.val).map_err(|e| match e {
            Error::NonFinite { op } => Error::NumericAbort {
                epoch,
                batch: None,
                detail: format!("{op} produced non-finite values during validation"),
            },
            other => other,
        })?;
        let score = selection_score(train_cfg.loss, &val);
        if best.as_ref().map_or(true, |(s, _, _)| score < *s) {
            best = Some((score, epoch, params.clone()));
        }
        epochs.push(EpochRecord {
            epoch,
            lr,
            train_loss,
            val,
        });
    }

    let (best_epoch, best_params) = match best {
        Some((_, epoch, p)) => (Some(epoch), p),
        None => (None, params.clone()),
    };
    let final_test = evaluate(model_cfg, &best_params, &data.test)?;
    let record = RunRecord {
        seed: train_cfg.seed,
        model_config: model_cfg.clone(),
        train_config: *train_cfg,
        epochs,
        best_epoch,
        final_test,
        wall_clock_secs: started.elapsed().as_secs_f64(),
    };
    Ok(TrainOutput {
        record,
        final_params: params,
        best_params,
    })
}
