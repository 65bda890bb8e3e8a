//! Binary PGM (P5) image output for feature visualization.

use std::io::Write;
use std::path::Path;

use cubemix::{Error, Result};

/// Min-max normalizes `values` to 8-bit gray. A constant slice (degenerate
/// range) pins every pixel to 0.
pub fn normalize_to_u8(values: &[f64]) -> Vec<u8> {
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(max > min) {
        return vec![0; values.len()];
    }
    let scale = 255.0 / (max - min);
    values
        .iter()
        .map(|&v| ((v - min) * scale).round() as u8)
        .collect()
}

/// Writes `pixels` (row-major, `height` rows of `width`) as binary PGM.
pub fn write_pgm(path: &Path, width: usize, height: usize, pixels: &[u8]) -> Result<()> {
    assert_eq!(pixels.len(), width * height);
    let mut file = std::fs::File::create(path).map_err(Error::io(path))?;
    write!(file, "P5\n{width} {height}\n255\n").map_err(Error::io(path))?;
    file.write_all(pixels).map_err(Error::io(path))?;
    Ok(())
}
