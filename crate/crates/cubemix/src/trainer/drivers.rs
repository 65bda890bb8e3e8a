//! Experiment drivers: unit-ablation table, output-dimension sweep, and
//! space accounting.

use std::path::Path;

use crate::data::DatasetSplits;
use crate::error::{Error, Result};
use crate::layers::{activation_footprint, param_count, CubeMLPConfig};
use crate::objectives::MetricReport;
use crate::scalar::Scalar;
use crate::tensor3::Axis;

use super::{evaluate, train, RunRecord, TrainConfig};

/// Unit-enable combinations in table order: the three single units, the
/// three pairs, then all units.
pub const ABLATION_FLAG_SETS: [(bool, bool, bool); 7] = [
    (true, false, false),
    (false, true, false),
    (false, false, true),
    (true, true, false),
    (true, false, true),
    (false, true, true),
    (true, true, true),
];

#[derive(Clone, Debug)]
pub struct AblationRecord {
    /// 1-based model index in table order.
    pub model_index: usize,
    /// (sequence, modality, channel) unit flags.
    pub flags: (bool, bool, bool),
    pub param_count: usize,
    /// Metrics of the final parameters on the training split.
    pub train_report: MetricReport,
    /// Metrics of the best-validation parameters on the test split.
    pub test_report: MetricReport,
    pub run: RunRecord,
}

/// The seven model configs derived from `base` by re-flagging every block's
/// units; a disabled unit keeps its axis extent.
pub fn ablation_configs(base: &CubeMLPConfig) -> Result<Vec<CubeMLPConfig>> {
    ABLATION_FLAG_SETS
        .iter()
        .map(|&flags| base.with_unit_flags(flags))
        .collect()
}

/// Trains the seven ablation variants with identical seed and data.
/// `jobs` bounds driver-level parallelism (None = rayon default).
pub fn ablate<T: Scalar>(
    base: &CubeMLPConfig,
    train_cfg: &TrainConfig,
    data: &DatasetSplits<T>,
    jobs: Option<usize>,
) -> Result<Vec<AblationRecord>> {
    let configs = ablation_configs(base)?;
    let runs = run_indexed(configs.len(), jobs, |i| {
        let cfg = &configs[i];
        let out = train(cfg, train_cfg, data)?;
        let train_report = evaluate(cfg, &out.final_params, &data.train)?;
        Ok(AblationRecord {
            model_index: i + 1,
            flags: ABLATION_FLAG_SETS[i],
            param_count: param_count(cfg),
            train_report,
            test_report: out.record.final_test,
            run: out.record,
        })
    })?;
    Ok(runs)
}

/// Renders `ablation.csv` in table layout: model, unit flags, test metrics.
pub fn write_ablation_csv(path: &Path, records: &[AblationRecord]) -> Result<()> {
    let mut out = String::from("model,mlp_l,mlp_m,mlp_d,mae,corr,acc2,f1,acc7\n");
    for r in records {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            r.model_index,
            r.flags.0 as u8,
            r.flags.1 as u8,
            r.flags.2 as u8,
            r.test_report.mae,
            r.test_report.pearson_r,
            r.test_report.acc2,
            r.test_report.f1,
            r.test_report.acc7
        ));
    }
    std::fs::write(path, out).map_err(Error::io(path))
}

#[derive(Clone, Debug)]
pub struct SweepRecord {
    pub value: usize,
    pub train_report: MetricReport,
    pub test_report: MetricReport,
    pub run: RunRecord,
}

/// Trains one model per value, setting the final block's output extent on
/// `axis`; seeds and data are shared across runs.
pub fn dim_sweep<T: Scalar>(
    base: &CubeMLPConfig,
    train_cfg: &TrainConfig,
    data: &DatasetSplits<T>,
    axis: Axis,
    values: &[usize],
    jobs: Option<usize>,
) -> Result<Vec<SweepRecord>> {
    if values.is_empty() {
        return Err(Error::config("sweep needs at least one value"));
    }
    let configs = values
        .iter()
        .map(|&v| base.with_final_axis_dim(axis, v))
        .collect::<Result<Vec<_>>>()?;
    run_indexed(values.len(), jobs, |i| {
        let cfg = &configs[i];
        let out = train(cfg, train_cfg, data)?;
        let train_report = evaluate(cfg, &out.final_params, &data.train)?;
        Ok(SweepRecord {
            value: values[i],
            train_report,
            test_report: out.record.final_test,
            run: out.record,
        })
    })
}

/// Renders `sweep_<axis>.csv`: one row per value with test metrics.
pub fn write_sweep_csv(path: &Path, records: &[SweepRecord]) -> Result<()> {
    let mut out = String::from("value,mae,corr,acc2,f1,acc7\n");
    for r in records {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.value,
            r.test_report.mae,
            r.test_report.pearson_r,
            r.test_report.acc2,
            r.test_report.f1,
            r.test_report.acc7
        ));
    }
    std::fs::write(path, out).map_err(Error::io(path))
}

/// Space accounting at 32-bit precision for a batch of one.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SpaceReport {
    pub params: usize,
    pub activation_elements: usize,
    /// Bytes for parameters plus peak live activations, four bytes each.
    pub peak_bytes_f32: usize,
}

pub fn account(cfg: &CubeMLPConfig) -> SpaceReport {
    let params = param_count(cfg);
    let activation_elements = activation_footprint(cfg, 1);
    SpaceReport {
        params,
        activation_elements,
        peak_bytes_f32: 4 * (params + activation_elements),
    }
}

/// Runs `f` over `0..n` with results in index order, optionally on a bounded
/// rayon pool. Each job owns its model, so runs are independent.
fn run_indexed<R, F>(n: usize, jobs: Option<usize>, f: F) -> Result<Vec<R>>
where
    R: Send,
    F: Fn(usize) -> Result<R> + Sync,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        if jobs != Some(1) {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(jobs.unwrap_or(0))
                .build()
                .map_err(|e| Error::config(format!("thread pool: {e}")))?;
            return pool.install(|| (0..n).into_par_iter().map(&f).collect());
        }
    }
    let _ = jobs;
    (0..n).map(f).collect()
}
