//! Finite-difference verification of the hand-written backward pass.
//!
//! The oracle side only ever runs forward passes: every parameter (and the
//! first sample's input entries) is perturbed by +/- h and the loss
//! re-evaluated, and the central difference is compared against the
//! reverse-mode gradient. Runs in `f64`; random trials draw small shapes and
//! smooth activations, cycling through the three loss reductions
//! (mean prediction, mean absolute error, concordance).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::layers::{
    init_params, model_backward, model_forward, Activation, BlockSpec, CubeMLPConfig, HeadConfig,
    ParamStore, Tape,
};
use crate::objectives::{ccc_loss, mae_loss, PredictionBatch};
use crate::tensor3::{Shape3, Tensor3};

/// Central-difference step.
pub const FD_STEP: f64 = 1e-5;

/// Default pass threshold on the relative error.
pub const DEFAULT_TOLERANCE: f64 = 1e-4;

/// Denominator floor. Below this gradient magnitude the comparison is
/// effectively absolute, which keeps finite-difference noise (about 1e-9 at
/// h = 1e-5) from registering as relative error on near-zero gradients.
const REL_DENOM_FLOOR: f64 = 1e-4;

#[derive(Clone, Copy, Debug)]
pub struct GradCheckConfig {
    pub trials: usize,
    pub seed: u64,
    pub tolerance: f64,
    /// Test hook: offset added to one computed gradient, to prove the
    /// detector notices a wrong backward pass.
    pub inject_error: f64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig {
            trials: 50,
            seed: 0,
            tolerance: DEFAULT_TOLERANCE,
            inject_error: 0.0,
        }
    }
}

/// Loss reductions exercised by the suite.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CheckLoss {
    MeanPrediction,
    Mae,
    Ccc,
}

impl CheckLoss {
    pub const ALL: [CheckLoss; 3] = [CheckLoss::MeanPrediction, CheckLoss::Mae, CheckLoss::Ccc];
}

/// Layer types reported by the suite, in print order.
pub const PARAM_KINDS: [&str; 11] = [
    "affine1_weight",
    "affine1_bias",
    "affine2_weight",
    "affine2_bias",
    "adapter_weight",
    "adapter_bias",
    "layer_norm_gain",
    "layer_norm_bias",
    "head_weight",
    "head_bias",
    "input",
];

fn kind_of(name: &str) -> &'static str {
    if name.starts_with("head.") {
        if name.contains(".w") {
            return "head_weight";
        }
        return "head_bias";
    }
    match name.rsplit('.').next().unwrap_or("") {
        "w1" => "affine1_weight",
        "b1" => "affine1_bias",
        "w2" => "affine2_weight",
        "b2" => "affine2_bias",
        "wr" => "adapter_weight",
        "br" => "adapter_bias",
        "ln_g" => "layer_norm_gain",
        "ln_b" => "layer_norm_bias",
        other => panic!("unclassifiable parameter leaf {other}"),
    }
}

#[derive(Clone, Copy, Debug)]
pub struct KindReport {
    pub kind: &'static str,
    pub checks: usize,
    pub max_rel_err: f64,
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub trials: usize,
    pub tolerance: f64,
    pub kinds: Vec<KindReport>,
    pub max_rel_err: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_err < self.tolerance
    }
}

fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(REL_DENOM_FLOOR)
}

fn loss_value(
    cfg: &CubeMLPConfig,
    params: &ParamStore<f64>,
    inputs: &[Tensor3<f64>],
    labels: &[f64],
    loss: CheckLoss,
) -> Result<f64> {
    let mut preds = Vec::with_capacity(inputs.len());
    for x in inputs {
        let mut tape = Tape::new();
        preds.push(model_forward(x, cfg, params, &mut tape)?);
    }
    Ok(match loss {
        CheckLoss::MeanPrediction => preds.iter().sum::<f64>() / preds.len() as f64,
        CheckLoss::Mae => mae_loss(&PredictionBatch::new(preds, labels.to_vec())?).0,
        CheckLoss::Ccc => ccc_loss(&PredictionBatch::new(preds, labels.to_vec())?)?.0,
    })
}

struct TrialOutcome {
    /// (kind, analytic, numeric) per checked element.
    checks: Vec<(&'static str, f64, f64)>,
}

/// Variance floor for layer-norm fibers at the evaluation point. Below
/// this, the normalization sits so close to its eps kink that the h = 1e-5
/// truncation term dominates the finite differences; such points are
/// resampled, which cannot hide a wrong formula (a formula bug shows at
/// well-conditioned points too).
const LN_VARIANCE_FLOOR: f64 = 1e-3;

fn run_trial(
    cfg: &CubeMLPConfig,
    seed: u64,
    loss: CheckLoss,
    batch: usize,
    rng: &mut ChaCha8Rng,
    inject_error: f64,
) -> Result<Option<TrialOutcome>> {
    let mut params = init_params::<f64>(cfg, seed);
    let inputs: Vec<Tensor3<f64>> = (0..batch)
        .map(|_| {
            Tensor3::from_fn(cfg.input, |_, _, _| rng.random_range(-1.5..1.5))
                .expect("finite random input")
        })
        .collect();
    let labels: Vec<f64> = (0..batch).map(|_| rng.random_range(-2.0..2.0)).collect();

    // Reverse-mode side: per-sample tapes seeded with the loss gradient.
    let mut tapes = Vec::with_capacity(batch);
    let mut preds = Vec::with_capacity(batch);
    for x in &inputs {
        let mut tape = Tape::new();
        preds.push(model_forward(x, cfg, &params, &mut tape)?);
        tapes.push(tape);
    }
    let conditioned = tapes
        .iter()
        .all(|t| t.min_layer_norm_variance(crate::layers::LN_EPS)
            .map_or(true, |v| v >= LN_VARIANCE_FLOOR));
    if !conditioned {
        return Ok(None);
    }
    let pred_grads: Vec<f64> = match loss {
        CheckLoss::MeanPrediction => vec![1.0 / batch as f64; batch],
        CheckLoss::Mae => mae_loss(&PredictionBatch::new(preds.clone(), labels.clone())?).1,
        CheckLoss::Ccc => ccc_loss(&PredictionBatch::new(preds.clone(), labels.clone())?)?.1,
    };
    params.zero_grads();
    let mut input_grad: Option<Tensor3<f64>> = None;
    for (i, (tape, &g)) in tapes.iter_mut().zip(&pred_grads).enumerate() {
        let dx = model_backward(g, tape, &mut params)?;
        if i == 0 {
            input_grad = Some(dx);
        }
    }
    let input_grad = input_grad.expect("batch >= 1");

    let mut analytic: Vec<(usize, usize, &'static str, f64)> = Vec::new();
    for (pidx, p) in params.iter().enumerate() {
        let kind = kind_of(&p.name);
        for (e, &g) in p.grad.iter().enumerate() {
            analytic.push((pidx, e, kind, g));
        }
    }
    if inject_error != 0.0 {
        if let Some(first) = analytic.first_mut() {
            first.3 += inject_error;
        }
    }

    // Finite-difference side: forward passes only.
    let mut checks = Vec::with_capacity(analytic.len() + cfg.input.len());
    let names: Vec<String> = params.iter().map(|p| p.name.clone()).collect();
    for (pidx, e, kind, a) in analytic {
        let id = params.id(&names[pidx])?;
        let original = params.value(id)[e];
        params.value_mut(id)[e] = original + FD_STEP;
        let plus = loss_value(cfg, &params, &inputs, &labels, loss)?;
        params.value_mut(id)[e] = original - FD_STEP;
        let minus = loss_value(cfg, &params, &inputs, &labels, loss)?;
        params.value_mut(id)[e] = original;
        let numeric = (plus - minus) / (2.0 * FD_STEP);
        checks.push((kind, a, numeric));
    }

    // Input gradient of the first sample.
    let base = inputs[0].flatten().to_vec();
    for e in 0..base.len() {
        let mut perturbed = base.clone();
        perturbed[e] = base[e] + FD_STEP;
        let mut probe = inputs.to_vec();
        probe[0] = Tensor3::from_vec(cfg.input, perturbed.clone())?;
        let plus = loss_value(cfg, &params, &probe, &labels, loss)?;
        perturbed[e] = base[e] - FD_STEP;
        probe[0] = Tensor3::from_vec(cfg.input, perturbed)?;
        let minus = loss_value(cfg, &params, &probe, &labels, loss)?;
        let numeric = (plus - minus) / (2.0 * FD_STEP);
        checks.push(("input", input_grad.flatten()[e], numeric));
    }

    Ok(Some(TrialOutcome { checks }))
}

fn random_config(rng: &mut ChaCha8Rng, trial: usize) -> CubeMLPConfig {
    if trial == 0 {
        // Fixed config guaranteeing every layer kind appears: dimension
        // changes on all axes (adapters) and a hidden head.
        return CubeMLPConfig::build(
            Shape3::new(4, 3, 5).unwrap(),
            &[BlockSpec::dense((3, 2, 4)), BlockSpec::dense((2, 2, 3))],
            Activation::Gelu,
            HeadConfig {
                hidden_dim: 3,
                activation: Activation::Tanh,
            },
        )
        .unwrap();
    }
    // Random small shapes. Activations stay smooth, and enabled units keep
    // out_dim >= 2: a width-1 unit normalizes extent-1 fibers, which turns
    // the tensor into the constant layer-norm bias and parks every
    // downstream normalization at zero variance. The gradient there is an
    // eps-regularized kink where central differences at h = 1e-5 measure
    // curvature, not slope; that regime has its own exact test.
    let activation = if rng.random_range(0..2) == 0 {
        Activation::Gelu
    } else {
        Activation::Tanh
    };
    let input = Shape3::new(
        rng.random_range(1..=5),
        rng.random_range(1..=5),
        rng.random_range(1..=5),
    )
    .unwrap();
    let n_blocks = rng.random_range(1..=2);
    let mut specs = Vec::with_capacity(n_blocks);
    for _ in 0..n_blocks {
        specs.push(BlockSpec {
            out_dims: (
                rng.random_range(2..=5),
                rng.random_range(2..=5),
                rng.random_range(2..=5),
            ),
            enabled: (
                rng.random_range(0..10) < 8,
                rng.random_range(0..10) < 8,
                rng.random_range(0..10) < 8,
            ),
        });
    }
    let head = HeadConfig {
        hidden_dim: if rng.random_range(0..3) == 0 { 3 } else { 0 },
        activation,
    };
    CubeMLPConfig::build(input, &specs, activation, head).expect("sampled dims are valid")
}

/// Runs the full finite-difference suite and aggregates the worst relative
/// error per layer type.
pub fn run_suite(cfg: &GradCheckConfig) -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut acc: Vec<(usize, f64)> = vec![(0, 0.0); PARAM_KINDS.len()];
    for trial in 0..cfg.trials {
        let loss = CheckLoss::ALL[trial % CheckLoss::ALL.len()];
        let batch = 2 + trial % 2;
        let mut attempts = 0;
        let outcome = loop {
            let model_cfg = random_config(&mut rng, trial);
            let init_seed = rng.random_range(0..u64::MAX / 2);
            if let Some(outcome) = run_trial(
                &model_cfg,
                init_seed,
                loss,
                batch,
                &mut rng,
                cfg.inject_error,
            )? {
                break outcome;
            }
            // Ill-conditioned evaluation point; redraw the trial.
            attempts += 1;
            if attempts > 100 {
                return Err(crate::error::Error::Degenerate(
                    "could not draw a well-conditioned gradcheck trial".into(),
                ));
            }
        };
        for (kind, analytic, numeric) in outcome.checks {
            let slot = PARAM_KINDS
                .iter()
                .position(|k| *k == kind)
                .expect("registered kind");
            acc[slot].0 += 1;
            acc[slot].1 = acc[slot].1.max(rel_err(analytic, numeric));
        }
    }
    let kinds: Vec<KindReport> = PARAM_KINDS
        .iter()
        .zip(&acc)
        .map(|(kind, &(checks, max_rel_err))| KindReport {
            kind,
            checks,
            max_rel_err,
        })
        .collect();
    let max_rel_err = kinds.iter().map(|k| k.max_rel_err).fold(0.0, f64::max);
    Ok(GradCheckReport {
        trials: cfg.trials,
        tolerance: cfg.tolerance,
        kinds,
        max_rel_err,
    })
}
