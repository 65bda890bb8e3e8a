//! Command-line front end.
//!
//! Subcommands: `synth`, `train`, `eval`, `ablate`, `sweep`, `gradcheck`,
//! `export-features`. Exit codes: 0 success, 2 invalid config, 3 dataset or
//! artifact I/O problems, 4 numeric failures. Every failure prints one
//! machine-readable line: `error[<class>]: <message>`.

mod pgm;
mod spec;

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use cubemix::data::{load_dataset, synth_raw, write_dataset, AlignedSample, DatasetSplits, SynthSpec};
use cubemix::gradcheck::{GradCheckConfig, PARAM_KINDS};
use cubemix::layers::{checkpoint, forward_block_outputs};
use cubemix::tensor3::{Axis, Shape3};
use cubemix::trainer::{
    ablate, dim_sweep, evaluate, train, write_ablation_csv, write_sweep_csv, TrainOutput,
};
use cubemix::{Error, ErrorClass, Result};

use spec::{resolve_seed, RunSpec};

#[derive(Parser)]
#[command(name = "cubemix", version, about = "Axis-mixing multimodal fusion workbench")]
struct Cli {
    /// Bound on driver-level parallelism for ablations and sweeps.
    #[arg(long, global = true)]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic multimodal dataset tree.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Sample count.
        #[arg(long, default_value_t = 64)]
        n: usize,
        /// Sequence length.
        #[arg(long, default_value_t = 16)]
        l: usize,
        /// Modality count.
        #[arg(long, default_value_t = 3)]
        m: usize,
        /// Channel width.
        #[arg(long, default_value_t = 8)]
        d: usize,
        /// Label noise standard deviation.
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
    },
    /// Train a model from a JSON config; writes run.json, epochs.csv and the
    /// best-validation checkpoint.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides the config's dataset path.
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
    /// Evaluate a checkpoint on one dataset split.
    Eval {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value = "test")]
        split: String,
        /// Where to write metrics.json / metrics.csv (defaults to stdout only).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train the seven unit-ablation variants and write ablation.csv.
    Ablate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Sweep the final block's output extent on one axis.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Axis to sweep: l, m, or d.
        #[arg(long)]
        axis: String,
        /// Comma-separated extents, e.g. 1,2,3.
        #[arg(long)]
        values: String,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Verify reverse-mode gradients against central finite differences.
    Gradcheck {
        #[arg(long, default_value_t = 50)]
        trials: usize,
        #[arg(long)]
        seed: Option<u64>,
        /// Test hook: perturb one gradient to prove the detector fires.
        #[arg(long, hide = true, default_value_t = 0.0)]
        inject_error: f64,
    },
    /// Export per-block, per-modality feature images for one sample.
    ExportFeatures {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        sample_id: String,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error[{}]: {e}", e.class().as_str());
        let code = match e.class() {
            ErrorClass::Config => 2,
            ErrorClass::Data => 3,
            ErrorClass::Numeric => 4,
        };
        std::process::exit(code);
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth {
            out,
            seed,
            n,
            l,
            m,
            d,
            noise,
        } => cmd_synth(&out, seed, n, (l, m, d), noise),
        Command::Train {
            config,
            out,
            seed,
            dataset,
        } => cmd_train(&config, &out, seed, dataset.as_deref()),
        Command::Eval {
            config,
            checkpoint,
            split,
            out,
        } => cmd_eval(&config, &checkpoint, &split, out.as_deref()),
        Command::Ablate { config, out, seed } => cmd_ablate(&config, &out, seed, cli.jobs),
        Command::Sweep {
            config,
            out,
            axis,
            values,
            seed,
        } => cmd_sweep(&config, &out, &axis, &values, seed, cli.jobs),
        Command::Gradcheck {
            trials,
            seed,
            inject_error,
        } => cmd_gradcheck(trials, seed, inject_error),
        Command::ExportFeatures {
            checkpoint,
            dataset,
            sample_id,
            out,
        } => cmd_export_features(&checkpoint, &dataset, &sample_id, &out),
    }
}

fn ensure_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(Error::io(path))
}

fn cmd_synth(
    out: &Path,
    seed: Option<u64>,
    n: usize,
    (l, m, d): (usize, usize, usize),
    noise: f64,
) -> Result<()> {
    let seed = resolve_seed(seed, None)?;
    let shape = Shape3::new(l, m, d).map_err(|e| Error::config(e.to_string()))?;
    if n == 0 {
        return Err(Error::config("need at least one sample"));
    }
    let spec = SynthSpec {
        n_samples: n,
        shape,
        noise_sigma: noise,
    };
    let (manifest, samples) = synth_raw(seed, &spec);
    write_dataset(out, &manifest, &samples)?;
    println!(
        "wrote {} samples ({l}x{m}x{d}, seed {seed}) to {}",
        samples.len(),
        out.display()
    );
    Ok(())
}

fn load_run_data(spec: &RunSpec, dataset_override: Option<&Path>) -> Result<DatasetSplits<f32>> {
    let path = match dataset_override {
        Some(p) => p,
        None => spec.dataset_path()?,
    };
    let (_, splits) = load_dataset::<f32>(path)?;
    Ok(splits)
}

fn write_run_artifacts(out: &Path, output: &TrainOutput<f32>) -> Result<()> {
    ensure_dir(out)?;
    let run_json = serde_json::to_string_pretty(&output.record)
        .map_err(|e| Error::config(format!("run.json: {e}")))?;
    let path = out.join("run.json");
    std::fs::write(&path, run_json).map_err(Error::io(&path))?;
    let path = out.join("epochs.csv");
    std::fs::write(&path, output.record.epochs_csv()).map_err(Error::io(&path))?;
    checkpoint::save(
        &out.join("checkpoint.bin"),
        &output.record.model_config,
        &output.best_params,
    )
}

fn cmd_train(
    config: &Path,
    out: &Path,
    seed: Option<u64>,
    dataset_override: Option<&Path>,
) -> Result<()> {
    let spec = RunSpec::load(config)?;
    let model_cfg = spec.model_config()?;
    let train_cfg = spec.train_config(seed)?;
    let data = load_run_data(&spec, dataset_override)?;
    let output = train(&model_cfg, &train_cfg, &data)?;
    write_run_artifacts(out, &output)?;
    println!(
        "trained {} epochs (seed {}); test: {}",
        output.record.epochs.len(),
        train_cfg.seed,
        output.record.final_test.to_json()
    );
    Ok(())
}

fn cmd_eval(config: &Path, ckpt: &Path, split: &str, out: Option<&Path>) -> Result<()> {
    let spec = RunSpec::load(config)?;
    let (model_cfg, params) = checkpoint::load::<f32>(ckpt)?;
    let data = load_run_data(&spec, None)?;
    let samples: &[AlignedSample<f32>] = match split {
        "train" => &data.train,
        "val" => &data.val,
        "test" => &data.test,
        other => {
            return Err(Error::config(format!(
                "unknown split {other:?} (expected train, val, or test)"
            )))
        }
    };
    if samples.is_empty() {
        return Err(Error::data(None, format!("split {split} is empty")));
    }
    let report = evaluate(&model_cfg, &params, samples)?;
    if let Some(dir) = out {
        ensure_dir(dir)?;
        let path = dir.join("metrics.json");
        std::fs::write(&path, report.to_json()).map_err(Error::io(&path))?;
        let path = dir.join("metrics.csv");
        let csv = format!(
            "{}\n{}\n",
            cubemix::objectives::MetricReport::CSV_HEADER,
            report.csv_row()
        );
        std::fs::write(&path, csv).map_err(Error::io(&path))?;
    }
    println!("{}", report.to_json());
    Ok(())
}

fn cmd_ablate(config: &Path, out: &Path, seed: Option<u64>, jobs: Option<usize>) -> Result<()> {
    let spec = RunSpec::load(config)?;
    let base = spec.model_config()?;
    if base
        .blocks
        .iter()
        .any(|b| b.units.iter().any(|u| !u.enabled))
    {
        return Err(Error::config(
            "ablation needs a base config with all three units enabled",
        ));
    }
    let train_cfg = spec.train_config(seed)?;
    let data = load_run_data(&spec, None)?;
    let records = ablate(&base, &train_cfg, &data, jobs)?;
    ensure_dir(out)?;
    write_ablation_csv(&out.join("ablation.csv"), &records)?;
    for r in &records {
        println!(
            "model {} (L={} M={} D={}, {} params): test {}",
            r.model_index,
            r.flags.0 as u8,
            r.flags.1 as u8,
            r.flags.2 as u8,
            r.param_count,
            r.test_report.to_json()
        );
    }
    Ok(())
}

fn parse_axis(s: &str) -> Result<Axis> {
    match s.to_ascii_lowercase().as_str() {
        "l" | "sequence" => Ok(Axis::Sequence),
        "m" | "modality" => Ok(Axis::Modality),
        "d" | "channel" => Ok(Axis::Channel),
        other => Err(Error::config(format!(
            "unknown axis {other:?} (expected l, m, or d)"
        ))),
    }
}

fn cmd_sweep(
    config: &Path,
    out: &Path,
    axis: &str,
    values: &str,
    seed: Option<u64>,
    jobs: Option<usize>,
) -> Result<()> {
    let spec = RunSpec::load(config)?;
    let base = spec.model_config()?;
    let train_cfg = spec.train_config(seed)?;
    let axis = parse_axis(axis)?;
    let values: Vec<usize> = values
        .split(',')
        .map(|v| {
            v.trim()
                .parse()
                .map_err(|_| Error::config(format!("bad sweep value {v:?}")))
        })
        .collect::<Result<_>>()?;
    let data = load_run_data(&spec, None)?;
    let records = dim_sweep(&base, &train_cfg, &data, axis, &values, jobs)?;
    ensure_dir(out)?;
    let file = out.join(format!(
        "sweep_{}.csv",
        axis.letter().to_ascii_lowercase()
    ));
    write_sweep_csv(&file, &records)?;
    for r in &records {
        println!("{}'={}: test {}", axis.letter(), r.value, r.test_report.to_json());
    }
    Ok(())
}

fn cmd_gradcheck(trials: usize, seed: Option<u64>, inject_error: f64) -> Result<()> {
    if trials == 0 {
        return Err(Error::config("gradcheck needs at least one trial"));
    }
    let seed = resolve_seed(seed, None)?;
    let cfg = GradCheckConfig {
        trials,
        seed,
        inject_error,
        ..GradCheckConfig::default()
    };
    let report = cubemix::gradcheck::run_suite(&cfg)?;
    println!("gradcheck: trials={} seed={seed}", report.trials);
    for kind in &report.kinds {
        println!(
            "  {:<16} checks={:<7} max_rel_err={:.3e}",
            kind.kind, kind.checks, kind.max_rel_err
        );
    }
    debug_assert_eq!(report.kinds.len(), PARAM_KINDS.len());
    let verdict = if report.passed() { "PASS" } else { "FAIL" };
    println!(
        "overall max_rel_err={:.3e} threshold={:.0e} -> {verdict}",
        report.max_rel_err, report.tolerance
    );
    if !report.passed() {
        return Err(Error::Degenerate(format!(
            "gradient check failed: max relative error {:.3e} exceeds {:.0e}",
            report.max_rel_err, report.tolerance
        )));
    }
    Ok(())
}

fn cmd_export_features(ckpt: &Path, dataset: &Path, sample_id: &str, out: &Path) -> Result<()> {
    let (model_cfg, params) = checkpoint::load::<f32>(ckpt)?;
    let (_, splits) = load_dataset::<f32>(dataset)?;
    let sample = splits
        .train
        .iter()
        .chain(&splits.val)
        .chain(&splits.test)
        .find(|s| s.id == sample_id)
        .ok_or_else(|| Error::data(Some(sample_id), "sample id not found in any split"))?;

    let (blocks, y_hat) = forward_block_outputs(&sample.cube, &model_cfg, &params)?;
    ensure_dir(out)?;
    let mut images = 0usize;
    for (b, cube) in blocks.iter().enumerate() {
        let shape = cube.shape();
        for mi in 0..shape.m {
            // One L' x D' slice per modality.
            let mut values = Vec::with_capacity(shape.l * shape.d);
            for li in 0..shape.l {
                for di in 0..shape.d {
                    values.push(cube.get(li, mi, di) as f64);
                }
            }
            let stem = format!("block{}_mod{}", b + 1, mi + 1);
            let pixels = pgm::normalize_to_u8(&values);
            pgm::write_pgm(&out.join(format!("{stem}.pgm")), shape.d, shape.l, &pixels)?;

            let mut csv = String::new();
            for li in 0..shape.l {
                let row: Vec<String> = (0..shape.d)
                    .map(|di| values[li * shape.d + di].to_string())
                    .collect();
                csv.push_str(&row.join(","));
                csv.push('\n');
            }
            let path = out.join(format!("{stem}.csv"));
            std::fs::write(&path, csv).map_err(Error::io(&path))?;
            images += 1;
        }
    }
    println!(
        "exported {images} feature images for {sample_id} (prediction {y_hat}) to {}",
        out.display()
    );
    Ok(())
}
