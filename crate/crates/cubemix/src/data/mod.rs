//! Dataset ingestion for precomputed per-modality features.
//!
//! On-disk layout, all paths relative to the dataset root:
//!
//! ```text
//! manifest.json                 format, modalities, target dims, splits
//! labels.csv                    header `id,label`
//! samples/<id>/meta.json        per-modality sequence lengths
//! samples/<id>/<modality>.f32   raw little-endian f32, row-major len x width
//! ```
//!
//! Loading pads or truncates every sequence to the manifest's target length,
//! projects channel widths to the common target width with a fixed affine
//! derived from the manifest seed, and stacks modalities into one cube per
//! sample.

mod synth;

pub use synth::{synth_dataset, synth_raw, SynthSpec, SYNTH_MODALITY_WEIGHTS};

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor3::{Mat, Shape3, Tensor3};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

pub const MANIFEST_FORMAT_VERSION: u32 = 1;

/// One sample as stored on disk: variable-length per-modality sequences.
#[derive(Clone, Debug)]
pub struct RawSample {
    pub id: String,
    /// One `length_m x width_m` matrix per modality, manifest order.
    pub modalities: Vec<Mat<f32>>,
    pub label: f64,
}

/// One sample after alignment to the common `(L, M, D)` shape.
#[derive(Clone, Debug)]
pub struct AlignedSample<T> {
    pub id: String,
    pub cube: Tensor3<T>,
    pub label: T,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ModalityInfo {
    pub name: String,
    pub width: usize,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct SplitIds {
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format_version: u32,
    pub modalities: Vec<ModalityInfo>,
    pub target_l: usize,
    pub target_d: usize,
    /// Seeds the fixed channel projections applied at load time.
    pub seed: u64,
    pub splits: SplitIds,
    pub label_range: (f64, f64),
}

impl DatasetManifest {
    pub fn cube_shape(&self) -> Result<Shape3> {
        Shape3::new(self.target_l, self.modalities.len(), self.target_d)
    }

    fn validate(&self) -> Result<()> {
        if self.format_version != MANIFEST_FORMAT_VERSION {
            return Err(Error::data(
                None,
                format!("unsupported manifest format version {}", self.format_version),
            ));
        }
        if self.modalities.is_empty() {
            return Err(Error::data(None, "manifest lists no modalities"));
        }
        if self.modalities.iter().any(|m| m.width == 0) || self.target_l == 0 || self.target_d == 0
        {
            return Err(Error::data(None, "manifest dims must be >= 1"));
        }
        Ok(())
    }
}

/// Aligned splits in manifest order.
#[derive(Clone, Debug)]
pub struct DatasetSplits<T> {
    pub train: Vec<AlignedSample<T>>,
    pub val: Vec<AlignedSample<T>>,
    pub test: Vec<AlignedSample<T>>,
}

impl<T: Scalar> DatasetSplits<T> {
    pub fn shape(&self) -> Option<Shape3> {
        self.train
            .first()
            .or(self.val.first())
            .or(self.test.first())
            .map(|s| s.cube.shape())
    }
}

/// Zero-pads shorter sequences at the tail and keeps the first `target_l`
/// rows of longer ones.
pub fn pad_or_truncate<T: Scalar>(seq: &Mat<T>, target_l: usize) -> Mat<T> {
    let cols = seq.cols();
    let mut data = Vec::with_capacity(target_l * cols);
    for row in 0..target_l.min(seq.rows()) {
        data.extend_from_slice(seq.row(row));
    }
    data.resize(target_l * cols, T::ZERO);
    Mat::new(target_l, cols, data).expect("target_l >= 1 and cols >= 1")
}

/// Fixed per-modality projection to the common channel width. The identity
/// when widths already match, otherwise a seeded affine with zero bias.
pub fn projection_for<T: Scalar>(seed: u64, modality_index: usize, d_m: usize, d: usize) -> Mat<T> {
    if d_m == d {
        return Mat::identity(d).expect("d >= 1");
    }
    let stream = seed ^ (0x9E37_79B9_7F4A_7C15u64.wrapping_mul(modality_index as u64 + 1));
    let mut rng = ChaCha8Rng::seed_from_u64(stream);
    let bound = (1.0 / d_m as f64).sqrt();
    let data: Vec<T> = (0..d_m * d)
        .map(|_| T::from_f64(rng.random_range(-bound..bound)))
        .collect();
    Mat::new(d_m, d, data).expect("dims >= 1")
}

/// Applies a per-row affine map (zero bias) taking `L x D_m` to `L x D`.
pub fn project_channels<T: Scalar>(seq: &Mat<T>, proj: &Mat<T>) -> Result<Mat<T>> {
    if seq.cols() != proj.rows() {
        return Err(Error::shape(
            "project_channels",
            format!("sequence width {} vs projection rows {}", seq.cols(), proj.rows()),
        ));
    }
    let (rows, d) = (seq.rows(), proj.cols());
    let mut data = vec![T::ZERO; rows * d];
    for r in 0..rows {
        let row = seq.row(r);
        for j in 0..d {
            let mut acc = T::ZERO;
            for (i, &v) in row.iter().enumerate() {
                acc += v * proj.get(i, j);
            }
            data[r * d + j] = acc;
        }
    }
    Mat::new(rows, d, data)
}

/// Pads, projects, and stacks one raw sample into a cube.
pub fn align_sample<T: Scalar>(
    raw: &RawSample,
    manifest: &DatasetManifest,
    projections: &[Mat<T>],
) -> Result<AlignedSample<T>> {
    if raw.modalities.len() != manifest.modalities.len() {
        return Err(Error::data(
            Some(&raw.id),
            format!(
                "sample has {} modalities, manifest lists {}",
                raw.modalities.len(),
                manifest.modalities.len()
            ),
        ));
    }
    let mut slices = Vec::with_capacity(raw.modalities.len());
    for (m, (seq, info)) in raw.modalities.iter().zip(&manifest.modalities).enumerate() {
        if seq.cols() != info.width {
            return Err(Error::data(
                Some(&raw.id),
                format!(
                    "modality {} width {} does not match manifest width {}",
                    info.name,
                    seq.cols(),
                    info.width
                ),
            ));
        }
        let as_t = Mat::new(
            seq.rows(),
            seq.cols(),
            seq.data().iter().map(|&v| T::from_f64(v as f64)).collect(),
        )?;
        let padded = pad_or_truncate(&as_t, manifest.target_l);
        let projected = project_channels(&padded, &projections[m])?;
        slices.push(projected);
    }
    let cube = Tensor3::from_slices(&slices).map_err(|e| match e {
        Error::NonFinite { .. } => Error::data(Some(&raw.id), "non-finite feature payload"),
        other => other,
    })?;
    let label = T::from_f64(raw.label);
    if !label.is_finite() {
        return Err(Error::data(Some(&raw.id), "non-finite label"));
    }
    Ok(AlignedSample {
        id: raw.id.clone(),
        cube,
        label,
    })
}

/// Builds the fixed projection set for a manifest.
pub fn projections_for_manifest<T: Scalar>(manifest: &DatasetManifest) -> Vec<Mat<T>> {
    manifest
        .modalities
        .iter()
        .enumerate()
        .map(|(m, info)| projection_for(manifest.seed, m, info.width, manifest.target_d))
        .collect()
}

fn read_json<D: serde::de::DeserializeOwned>(path: &Path, id: Option<&str>) -> Result<D> {
    let text = fs::read_to_string(path).map_err(Error::io(path))?;
    serde_json::from_str(&text)
        .map_err(|e| Error::data(id, format!("{}: {e}", path.display())))
}

#[derive(Serialize, Deserialize)]
struct SampleMeta {
    /// Sequence length per modality name.
    lengths: BTreeMap<String, usize>,
}

fn load_labels(root: &Path) -> Result<HashMap<String, f64>> {
    let path = root.join("labels.csv");
    let text = fs::read_to_string(&path).map_err(Error::io(&path))?;
    let mut lines = text.lines();
    match lines.next() {
        Some("id,label") => {}
        other => {
            return Err(Error::data(
                None,
                format!("labels.csv must start with 'id,label', got {other:?}"),
            ))
        }
    }
    let mut labels = HashMap::new();
    for (lineno, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let (id, value) = line.split_once(',').ok_or_else(|| {
            Error::data(None, format!("labels.csv line {}: missing comma", lineno + 2))
        })?;
        let label: f64 = value.parse().map_err(|_| {
            Error::data(Some(id), format!("labels.csv line {}: bad label", lineno + 2))
        })?;
        labels.insert(id.to_string(), label);
    }
    Ok(labels)
}

fn load_raw_sample(
    root: &Path,
    manifest: &DatasetManifest,
    labels: &HashMap<String, f64>,
    id: &str,
) -> Result<RawSample> {
    let dir = root.join("samples").join(id);
    if !dir.is_dir() {
        return Err(Error::data(Some(id), "sample directory missing"));
    }
    let meta: SampleMeta = read_json(&dir.join("meta.json"), Some(id))?;
    let mut modalities = Vec::with_capacity(manifest.modalities.len());
    for info in &manifest.modalities {
        let len = *meta.lengths.get(&info.name).ok_or_else(|| {
            Error::data(Some(id), format!("meta.json lacks length for {}", info.name))
        })?;
        if len == 0 {
            return Err(Error::data(
                Some(id),
                format!("modality {} has zero length", info.name),
            ));
        }
        let path = dir.join(format!("{}.f32", info.name));
        let bytes = fs::read(&path).map_err(Error::io(&path))?;
        let expected = len * info.width * 4;
        if bytes.len() != expected {
            return Err(Error::data(
                Some(id),
                format!(
                    "{}: payload is {} bytes, expected {expected}",
                    path.display(),
                    bytes.len()
                ),
            ));
        }
        let mut values = Vec::with_capacity(len * info.width);
        for chunk in bytes.chunks_exact(4) {
            let v = f32::from_le_bytes(chunk.try_into().expect("chunk of 4"));
            if !v.is_finite() {
                return Err(Error::data(Some(id), "non-finite feature payload"));
            }
            values.push(v);
        }
        modalities.push(Mat::new(len, info.width, values)?);
    }
    let label = *labels
        .get(id)
        .ok_or_else(|| Error::data(Some(id), "labels.csv has no entry"))?;
    Ok(RawSample {
        id: id.to_string(),
        modalities,
        label,
    })
}

fn load_split<T: Scalar>(
    root: &Path,
    manifest: &DatasetManifest,
    labels: &HashMap<String, f64>,
    projections: &[Mat<T>],
    ids: &[String],
) -> Result<Vec<AlignedSample<T>>> {
    let load_one = |id: &String| -> Result<AlignedSample<T>> {
        let raw = load_raw_sample(root, manifest, labels, id)?;
        align_sample(&raw, manifest, projections)
    };
    // Per-sample loading may run in parallel; collecting over the manifest
    // id list keeps the output in manifest order either way.
    #[cfg(feature = "parallel")]
    {
        ids.par_iter().map(load_one).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        ids.iter().map(load_one).collect()
    }
}

/// Loads and aligns every split listed in `root/manifest.json`.
pub fn load_dataset<T: Scalar>(root: &Path) -> Result<(DatasetManifest, DatasetSplits<T>)> {
    if !root.is_dir() {
        return Err(Error::data(
            None,
            format!("dataset root {} does not exist", root.display()),
        ));
    }
    let manifest: DatasetManifest = read_json(&root.join("manifest.json"), None)?;
    manifest.validate()?;
    let labels = load_labels(root)?;
    let projections = projections_for_manifest::<T>(&manifest);
    let splits = DatasetSplits {
        train: load_split(root, &manifest, &labels, &projections, &manifest.splits.train)?,
        val: load_split(root, &manifest, &labels, &projections, &manifest.splits.val)?,
        test: load_split(root, &manifest, &labels, &projections, &manifest.splits.test)?,
    };
    Ok((manifest, splits))
}

/// Writes a dataset tree in the on-disk format.
pub fn write_dataset(root: &Path, manifest: &DatasetManifest, samples: &[RawSample]) -> Result<()> {
    fs::create_dir_all(root).map_err(Error::io(root))?;
    let manifest_json = serde_json::to_string_pretty(manifest)
        .map_err(|e| Error::config(format!("manifest: {e}")))?;
    fs::write(root.join("manifest.json"), manifest_json)
        .map_err(Error::io(root.join("manifest.json")))?;

    let labels_path = root.join("labels.csv");
    let mut labels = fs::File::create(&labels_path).map_err(Error::io(&labels_path))?;
    writeln!(labels, "id,label").map_err(Error::io(&labels_path))?;
    for s in samples {
        writeln!(labels, "{},{}", s.id, s.label).map_err(Error::io(&labels_path))?;
    }

    for s in samples {
        let dir = root.join("samples").join(&s.id);
        fs::create_dir_all(&dir).map_err(Error::io(&dir))?;
        let mut lengths = BTreeMap::new();
        for (seq, info) in s.modalities.iter().zip(&manifest.modalities) {
            lengths.insert(info.name.clone(), seq.rows());
            let mut bytes = Vec::with_capacity(seq.data().len() * 4);
            for &v in seq.data() {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
            let path = dir.join(format!("{}.f32", info.name));
            fs::write(&path, bytes).map_err(Error::io(&path))?;
        }
        let meta = SampleMeta { lengths };
        let meta_path = dir.join("meta.json");
        fs::write(
            &meta_path,
            serde_json::to_string_pretty(&meta)
                .map_err(|e| Error::config(format!("meta: {e}")))?,
        )
        .map_err(Error::io(&meta_path))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mat(rows: &[Vec<f64>]) -> Mat<f64> {
        Mat::from_rows(rows).unwrap()
    }

    #[test]
    fn pad_appends_zero_rows() {
        let m = mat(&[vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]]);
        let p = pad_or_truncate(&m, 5);
        assert_eq!(p.rows(), 5);
        assert_eq!(p.row(2), &[5.0, 6.0]);
        assert_eq!(p.row(3), &[0.0, 0.0]);
        assert_eq!(p.row(4), &[0.0, 0.0]);
    }

    #[test]
    fn truncate_keeps_the_head() {
        let m = mat(&(0..7).map(|r| vec![r as f64, -(r as f64)]).collect::<Vec<_>>());
        let p = pad_or_truncate(&m, 5);
        assert_eq!(p.rows(), 5);
        for r in 0..5 {
            assert_eq!(p.row(r), &[r as f64, -(r as f64)]);
        }
    }

    #[test]
    fn pad_or_truncate_is_identity_and_idempotent_at_target() {
        let m = mat(&[vec![1.0], vec![2.0]]);
        let once = pad_or_truncate(&m, 2);
        assert_eq!(once, m);
        let padded = pad_or_truncate(&m, 4);
        assert_eq!(pad_or_truncate(&padded, 4), padded);
    }

    #[test]
    fn projection_identity_when_widths_match() {
        let proj = projection_for::<f64>(9, 0, 3, 3);
        let m = mat(&[vec![1.0, 2.0, 3.0]]);
        assert_eq!(project_channels(&m, &proj).unwrap(), m);
    }

    #[test]
    fn projection_row_sum_example() {
        let proj = Mat::new(2, 1, vec![1.0, 1.0]).unwrap();
        let m = mat(&[vec![1.0, 2.0], vec![3.0, 4.0]]);
        let out = project_channels(&m, &proj).unwrap();
        assert_eq!(out.data(), &[3.0, 7.0]);
    }

    #[test]
    fn projection_zero_in_zero_out() {
        let proj = projection_for::<f64>(4, 1, 3, 2);
        let m = Mat::zeros(4, 3).unwrap();
        let out = project_channels(&m, &proj).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn projection_rejects_width_mismatch() {
        let proj = Mat::<f64>::identity(3).unwrap();
        let m = mat(&[vec![1.0, 2.0]]);
        assert!(project_channels(&m, &proj).is_err());
    }

    #[test]
    fn projections_are_deterministic_per_seed() {
        let a = projection_for::<f64>(7, 2, 5, 3);
        let b = projection_for::<f64>(7, 2, 5, 3);
        assert_eq!(a, b);
        let c = projection_for::<f64>(8, 2, 5, 3);
        assert_ne!(a, c);
    }

    #[test]
    fn dataset_round_trip_is_bit_identical() {
        let spec = SynthSpec {
            n_samples: 12,
            shape: Shape3::new(6, 3, 4).unwrap(),
            noise_sigma: 0.1,
        };
        let (manifest, samples) = synth_raw(5, &spec);
        let dir = tempfile::tempdir().unwrap();
        write_dataset(dir.path(), &manifest, &samples).unwrap();

        let (loaded_manifest, splits) = load_dataset::<f32>(dir.path()).unwrap();
        assert_eq!(loaded_manifest.splits.train.len(), 8);
        assert_eq!(loaded_manifest.splits.val.len(), 1);
        assert_eq!(loaded_manifest.splits.test.len(), 3);

        let in_memory = synth_dataset::<f32>(5, &spec).unwrap();
        for (a, b) in splits.train.iter().zip(&in_memory.train) {
            assert_eq!(a.id, b.id);
            assert_eq!(a.cube, b.cube);
            assert_eq!(a.label, b.label);
        }

        // Loading twice yields bit-identical tensors.
        let (_, again) = load_dataset::<f32>(dir.path()).unwrap();
        for (a, b) in splits.train.iter().zip(&again.train) {
            assert_eq!(a.cube, b.cube);
        }
    }

    #[test]
    fn load_errors_name_the_missing_sample() {
        let spec = SynthSpec {
            n_samples: 4,
            shape: Shape3::new(3, 2, 2).unwrap(),
            noise_sigma: 0.0,
        };
        let (mut manifest, samples) = synth_raw(0, &spec);
        manifest.splits.train.push("ghost".to_string());
        let dir = tempfile::tempdir().unwrap();
        write_dataset(dir.path(), &manifest, &samples).unwrap();
        let err = load_dataset::<f32>(dir.path()).unwrap_err();
        assert!(err.to_string().contains("ghost"), "{err}");
    }

    #[test]
    fn load_rejects_truncated_payload() {
        let spec = SynthSpec {
            n_samples: 4,
            shape: Shape3::new(3, 2, 2).unwrap(),
            noise_sigma: 0.0,
        };
        let (manifest, samples) = synth_raw(0, &spec);
        let dir = tempfile::tempdir().unwrap();
        write_dataset(dir.path(), &manifest, &samples).unwrap();
        let first = &manifest.splits.train[0];
        let victim = dir
            .path()
            .join("samples")
            .join(first)
            .join(format!("{}.f32", manifest.modalities[0].name));
        let bytes = fs::read(&victim).unwrap();
        fs::write(&victim, &bytes[..bytes.len() - 4]).unwrap();
        let err = load_dataset::<f32>(dir.path()).unwrap_err();
        assert!(err.to_string().contains(first.as_str()), "{err}");
    }
}
