//! Seeded synthetic multimodal generator for desk-scale training.
//!
//! Per-modality sequences are Gaussian processes: every channel is an AR(1)
//! stream, and channel 0 additionally carries a per-sample level offset. The
//! label is a fixed modality-weighted combination of the channel-0 means,
//! clamped to [-3, 3], which gives the trainer a learnable target with a
//! known closed form.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::Result;
use crate::scalar::Scalar;
use crate::tensor3::{Mat, Shape3};

use super::{
    align_sample, projections_for_manifest, AlignedSample, DatasetManifest, DatasetSplits,
    ModalityInfo, RawSample, SplitIds, MANIFEST_FORMAT_VERSION,
};

/// Published modality weights of the synthetic label. Modality `m` uses
/// `SYNTH_MODALITY_WEIGHTS[m % 3]`.
pub const SYNTH_MODALITY_WEIGHTS: [f64; 3] = [1.5, 1.0, 0.5];

/// Label interval; the combination and any added noise are clamped into it.
pub const SYNTH_LABEL_RANGE: (f64, f64) = (-3.0, 3.0);

const AR_COEFF: f64 = 0.9;
const LEVEL_SIGMA: f64 = 0.7;
const WOBBLE_SIGMA: f64 = 0.25;

#[derive(Clone, Copy, Debug)]
pub struct SynthSpec {
    pub n_samples: usize,
    pub shape: Shape3,
    pub noise_sigma: f64,
}

fn modality_names(m: usize) -> Vec<String> {
    if m == 3 {
        vec!["text".into(), "audio".into(), "video".into()]
    } else {
        (0..m).map(|j| format!("mod{j}")).collect()
    }
}

/// Noise-free label for a sample with the given per-modality channel-0
/// means: the weighted sum clamped to the label range.
pub fn synth_label(channel0_means: &[f64]) -> f64 {
    channel0_means
        .iter()
        .enumerate()
        .map(|(m, mean)| SYNTH_MODALITY_WEIGHTS[m % 3] * mean)
        .sum::<f64>()
        .clamp(SYNTH_LABEL_RANGE.0, SYNTH_LABEL_RANGE.1)
}

fn ar1_sequence(rng: &mut ChaCha8Rng, len: usize, sigma: f64) -> Vec<f64> {
    let unit = Normal::new(0.0, 1.0).expect("valid normal");
    let innovation = (1.0 - AR_COEFF * AR_COEFF).sqrt();
    let mut out = Vec::with_capacity(len);
    let mut state = unit.sample(rng);
    out.push(state * sigma);
    for _ in 1..len {
        state = AR_COEFF * state + innovation * unit.sample(rng);
        out.push(state * sigma);
    }
    out
}

/// Generates the manifest and raw samples for `spec`, deterministically from
/// `seed`. Splits are 70/15/15 by index.
pub fn synth_raw(seed: u64, spec: &SynthSpec) -> (DatasetManifest, Vec<RawSample>) {
    let Shape3 { l, m, d } = spec.shape;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let unit = Normal::new(0.0, 1.0).expect("valid normal");
    let names = modality_names(m);

    let mut samples = Vec::with_capacity(spec.n_samples);
    for idx in 0..spec.n_samples {
        let mut modalities = Vec::with_capacity(m);
        let mut channel0_means = Vec::with_capacity(m);
        for _ in 0..m {
            let level = unit.sample(&mut rng) * LEVEL_SIGMA;
            let wobble = ar1_sequence(&mut rng, l, WOBBLE_SIGMA);
            let mut data = vec![0.0f32; l * d];
            for t in 0..l {
                data[t * d] = (level + wobble[t]) as f32;
            }
            for ch in 1..d {
                let series = ar1_sequence(&mut rng, l, 1.0);
                for t in 0..l {
                    data[t * d + ch] = series[t] as f32;
                }
            }
            // The label must match what lands in the cube, so the channel-0
            // mean is recomputed from the stored f32 values.
            channel0_means.push((0..l).map(|t| data[t * d] as f64).sum::<f64>() / l as f64);
            modalities.push(Mat::new(l, d, data).expect("l, d >= 1"));
        }
        let mut label = synth_label(&channel0_means);
        if spec.noise_sigma > 0.0 {
            let noise = Normal::new(0.0, spec.noise_sigma).expect("sigma > 0");
            label = (label + noise.sample(&mut rng))
                .clamp(SYNTH_LABEL_RANGE.0, SYNTH_LABEL_RANGE.1);
        }
        samples.push(RawSample {
            id: format!("s{idx:04}"),
            modalities,
            label,
        });
    }

    let n = spec.n_samples;
    let n_train = n * 70 / 100;
    let n_val = n * 15 / 100;
    let ids: Vec<String> = samples.iter().map(|s| s.id.clone()).collect();
    let manifest = DatasetManifest {
        format_version: MANIFEST_FORMAT_VERSION,
        modalities: names
            .into_iter()
            .map(|name| ModalityInfo { name, width: d })
            .collect(),
        target_l: l,
        target_d: d,
        seed,
        splits: SplitIds {
            train: ids[..n_train].to_vec(),
            val: ids[n_train..n_train + n_val].to_vec(),
            test: ids[n_train + n_val..].to_vec(),
        },
        label_range: SYNTH_LABEL_RANGE,
    };
    (manifest, samples)
}

/// Generates and aligns synthetic splits in memory.
pub fn synth_dataset<T: Scalar>(seed: u64, spec: &SynthSpec) -> Result<DatasetSplits<T>> {
    let (manifest, samples) = synth_raw(seed, spec);
    let projections = projections_for_manifest::<T>(&manifest);
    let mut aligned: Vec<AlignedSample<T>> = samples
        .iter()
        .map(|raw| align_sample(raw, &manifest, &projections))
        .collect::<Result<_>>()?;
    let n_test = manifest.splits.test.len();
    let n_val = manifest.splits.val.len();
    let test = aligned.split_off(aligned.len() - n_test);
    let val = aligned.split_off(aligned.len() - n_val);
    Ok(DatasetSplits {
        train: aligned,
        val,
        test,
    })
}
