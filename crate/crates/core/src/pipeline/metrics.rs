use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{shape_err, Result};
use crate::linalg::Matrix;

/// Per-node error in percent: `100 · RMS_t(x − x̂) / RMS_t(x)` over each row.
/// A row whose truth is identically zero reports `100 · RMS_t(x̂)`.
pub fn error_map(truth: &Matrix, prediction: &Matrix) -> Result<Vec<f64>> {
    if truth.shape() != prediction.shape() || truth.cols() == 0 {
        return shape_err(format!("error map: {:?} vs {:?}", truth.shape(), prediction.shape()));
    }
    Ok((0..truth.rows())
        .map(|i| {
            let (x, y) = (truth.row(i), prediction.row(i));
            let err: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
            let norm: f64 = x.iter().map(|a| a * a).sum();
            if norm > 0.0 {
                100.0 * (err / norm).sqrt()
            } else {
                100.0 * (err / x.len() as f64).sqrt()
            }
        })
        .collect())
}

/// Index and value of the largest entry (first on ties).
pub fn argmax(values: &[f64]) -> Option<(usize, f64)> {
    values
        .iter()
        .copied()
        .enumerate()
        .fold(None, |best, (i, v)| match best {
            Some((_, b)) if b >= v => best,
            _ => Some((i, v)),
        })
}

/// Leading steps whose pointwise relative error stays within `budget`.
pub fn horizon_steps(truth: &[f64], prediction: &[f64], budget: f64) -> usize {
    truth
        .iter()
        .zip(prediction)
        .take_while(|(t, p)| (*p - *t).abs() <= budget * t.abs())
        .count()
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn file_digest(path: &Path) -> Result<String> {
    if !path.exists() {
        return Err(crate::Error::MissingArtifact(path.to_path_buf()));
    }
    Ok(sha256_hex(&std::fs::read(path)?))
}
