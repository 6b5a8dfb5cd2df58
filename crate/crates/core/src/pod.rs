//! Snapshot proper orthogonal decomposition.
//!
//! The snapshot matrix holds one column per time instant. Its SVD gives the
//! spatial modes (left singular vectors) and, scaled by the singular values,
//! the temporal coefficients, so that `values ≈ modes · coefficients`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{domain_err, shape_err, Error, Result};
use crate::linalg::{self, Matrix};

/// Field values at every node (rows) and snapshot time (columns).
#[derive(Clone, Debug, PartialEq)]
pub struct SnapshotMatrix {
    pub values: Matrix,
    /// Strictly increasing, one per column.
    pub times: Vec<f64>,
    pub node_coords: Option<Vec<(f64, f64)>>,
}

impl SnapshotMatrix {
    pub fn new(values: Matrix, times: Vec<f64>, node_coords: Option<Vec<(f64, f64)>>) -> Result<Self> {
        if times.len() != values.cols() {
            return shape_err(format!("{} times for {} snapshot columns", times.len(), values.cols()));
        }
        if times.iter().any(|t| !t.is_finite()) || times.windows(2).any(|w| w[1] <= w[0]) {
            return domain_err("snapshot times must be finite and strictly increasing");
        }
        if let Some(coords) = &node_coords {
            if coords.len() != values.rows() {
                return shape_err(format!("{} node coordinates for {} nodes", coords.len(), values.rows()));
            }
        }
        Ok(Self {
            values,
            times,
            node_coords,
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.values.rows()
    }

    pub fn n_snapshots(&self) -> usize {
        self.values.cols()
    }

    /// Column `s` as a field vector.
    pub fn snapshot(&self, s: usize) -> Vec<f64> {
        self.values.column(s)
    }

    /// Columns `range` as a new snapshot matrix.
    pub fn slice_columns(&self, range: std::ops::Range<usize>) -> Result<Self> {
        if range.end > self.n_snapshots() || range.start >= range.end {
            return shape_err(format!("invalid column range {range:?}"));
        }
        let width = range.len();
        let mut data = Vec::with_capacity(self.n_nodes() * width);
        for i in 0..self.n_nodes() {
            data.extend_from_slice(&self.values.row(i)[range.clone()]);
        }
        Self::new(
            Matrix::new(self.n_nodes(), width, data)?,
            self.times[range].to_vec(),
            self.node_coords.clone(),
        )
    }

    /// CSV with a `node[,x,y],<t_0>,<t_1>,...` header; one row per node.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["node".to_string()];
        if self.node_coords.is_some() {
            header.push("x".into());
            header.push("y".into());
        }
        header.extend(self.times.iter().map(|t| t.to_string()));
        w.write_record(&header)?;
        for i in 0..self.n_nodes() {
            let mut rec = vec![i.to_string()];
            if let Some(coords) = &self.node_coords {
                rec.push(coords[i].0.to_string());
                rec.push(coords[i].1.to_string());
            }
            rec.extend(self.values.row(i).iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingArtifact(path.to_path_buf()));
        }
        let mut r = csv::Reader::from_path(path)?;
        let header = r.headers()?.clone();
        if header.get(0) != Some("node") {
            return Err(Error::Format(format!(
                "{}: first column must be 'node'",
                path.display()
            )));
        }
        let has_coords = header.get(1) == Some("x") && header.get(2) == Some("y");
        let first_time = if has_coords { 3 } else { 1 };
        let times = header
            .iter()
            .skip(first_time)
            .map(parse_f64)
            .collect::<Result<Vec<_>>>()?;
        let mut data = Vec::new();
        let mut coords = Vec::new();
        let mut rows = 0;
        for rec in r.records() {
            let rec = rec?;
            if rec.len() != header.len() {
                return Err(Error::Format(format!("row {rows}: expected {} fields", header.len())));
            }
            let node: usize = rec[0]
                .parse()
                .map_err(|_| Error::Format(format!("bad node id '{}'", &rec[0])))?;
            if node != rows {
                return Err(Error::Format(format!("node ids must be 0..n in order, got {node}")));
            }
            if has_coords {
                coords.push((parse_f64(&rec[1])?, parse_f64(&rec[2])?));
            }
            for field in rec.iter().skip(first_time) {
                data.push(parse_f64(field)?);
            }
            rows += 1;
        }
        let values = Matrix::new(rows, times.len(), data)?;
        Self::new(values, times, has_coords.then_some(coords))
    }
}

fn parse_f64(s: &str) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .map_err(|_| Error::Format(format!("not a number: '{s}'")))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PodOptions {
    pub energy_threshold: f64,
    /// Subtract the per-node temporal mean before the decomposition.
    pub center: bool,
}

impl Default for PodOptions {
    fn default() -> Self {
        Self {
            energy_threshold: 0.99,
            center: false,
        }
    }
}

/// Truncated POD basis.
#[derive(Clone, Debug, PartialEq)]
pub struct PodBasis {
    /// `n_nodes x n_kept`, orthonormal columns.
    pub modes: Matrix,
    /// Full spectrum, descending; kept for energy bookkeeping.
    pub singular_values: Vec<f64>,
    pub n_kept: usize,
    pub energy_captured: f64,
    /// `n_kept x n_snapshots`, `diag(σ) · Vᵀ` rows.
    pub temporal_coefficients: Matrix,
    /// Per-node mean when the basis was built on centred data.
    pub mean: Option<Vec<f64>>,
}

pub fn compute_pod(snapshots: &SnapshotMatrix, energy_threshold: f64) -> Result<PodBasis> {
    compute_pod_with(
        snapshots,
        PodOptions {
            energy_threshold,
            center: false,
        },
    )
}

pub fn compute_pod_with(snapshots: &SnapshotMatrix, opts: PodOptions) -> Result<PodBasis> {
    let threshold = opts.energy_threshold;
    if !(threshold > 0.0 && threshold <= 1.0) {
        return domain_err(format!("energy threshold must lie in (0, 1], got {threshold}"));
    }
    if snapshots.n_snapshots() < 2 {
        return shape_err("POD needs at least two snapshots");
    }
    let (values, mean) = if opts.center {
        let mean: Vec<f64> = (0..snapshots.n_nodes())
            .map(|i| {
                let row = snapshots.values.row(i);
                row.iter().sum::<f64>() / row.len() as f64
            })
            .collect();
        let mut centered = snapshots.values.clone();
        for (i, m) in mean.iter().enumerate() {
            centered.row_mut(i).iter_mut().for_each(|v| *v -= m);
        }
        (centered, Some(mean))
    } else {
        (snapshots.values.clone(), None)
    };
    if values.max_abs() == 0.0 {
        return domain_err("snapshot matrix is identically zero");
    }

    let svd = linalg::svd(&values)?;
    let curve = energy_curve(&svd.singular_values);
    // The cumulative curve rounds to 1 before the spectrum is exhausted, so a
    // threshold of 1 keeps every nonzero mode instead.
    let n_kept = if threshold >= 1.0 {
        svd.singular_values.iter().filter(|&&s| s > 0.0).count().max(1)
    } else {
        curve
            .iter()
            .position(|&e| e >= threshold)
            .map_or(curve.len(), |i| i + 1)
    };
    let energy_captured = curve[n_kept - 1];

    let mut modes = svd.u.leading_columns(n_kept)?;
    let mut coeffs = svd.vt.leading_rows(n_kept)?;
    for n in 0..n_kept {
        let sigma = svd.singular_values[n];
        let column = modes.column(n);
        let (arg, _) = column.iter().enumerate().fold(
            (0, 0.0_f64),
            |(bi, bv), (i, v)| if v.abs() > bv { (i, v.abs()) } else { (bi, bv) },
        );
        let sign = if column[arg] < 0.0 { -1.0 } else { 1.0 };
        if sign < 0.0 {
            for i in 0..modes.rows() {
                let v = modes.get(i, n);
                modes.set(i, n, -v);
            }
        }
        coeffs.row_mut(n).iter_mut().for_each(|v| *v *= sign * sigma);
    }

    Ok(PodBasis {
        modes,
        singular_values: svd.singular_values,
        n_kept,
        energy_captured,
        temporal_coefficients: coeffs,
        mean,
    })
}

/// Cumulative squared-singular-value fractions; the last entry is 1.
fn energy_curve(singular_values: &[f64]) -> Vec<f64> {
    let total: f64 = singular_values.iter().map(|s| s * s).sum();
    let mut acc = 0.0;
    let mut curve: Vec<f64> = singular_values
        .iter()
        .map(|s| {
            acc += s * s;
            acc / total
        })
        .collect();
    if let Some(last) = curve.last_mut() {
        *last = 1.0;
    }
    curve
}

/// Cumulative modal energy over the full singular spectrum.
pub fn cumulative_energy_curve(basis: &PodBasis) -> Vec<f64> {
    energy_curve(&basis.singular_values)
}

/// `modesᵀ · (field − mean)`.
pub fn project(basis: &PodBasis, field: &[f64]) -> Result<Vec<f64>> {
    if field.len() != basis.modes.rows() {
        return shape_err(format!(
            "field of length {} for a {}-node basis",
            field.len(),
            basis.modes.rows()
        ));
    }
    match &basis.mean {
        Some(mean) => {
            let centered: Vec<f64> = field.iter().zip(mean).map(|(v, m)| v - m).collect();
            basis.modes.t_matvec(&centered)
        }
        None => basis.modes.t_matvec(field),
    }
}

/// `modes · coefficients (+ mean)`.
pub fn reconstruct(basis: &PodBasis, coefficients: &[f64]) -> Result<Vec<f64>> {
    if coefficients.len() != basis.n_kept {
        return shape_err(format!(
            "{} coefficients for {} retained modes",
            coefficients.len(),
            basis.n_kept
        ));
    }
    let mut field = basis.modes.matvec(coefficients)?;
    if let Some(mean) = &basis.mean {
        field.iter_mut().zip(mean).for_each(|(v, m)| *v += m);
    }
    Ok(field)
}

/// Reconstructs every column of an `n_kept x T` coefficient matrix.
pub fn reconstruct_all(basis: &PodBasis, coefficients: &Matrix) -> Result<Matrix> {
    if coefficients.rows() != basis.n_kept {
        return shape_err(format!(
            "{} coefficient rows for {} retained modes",
            coefficients.rows(),
            basis.n_kept
        ));
    }
    let mut out = basis.modes.matmul(coefficients)?;
    if let Some(mean) = &basis.mean {
        for (i, m) in mean.iter().enumerate() {
            out.row_mut(i).iter_mut().for_each(|v| *v += m);
        }
    }
    Ok(out)
}

#[derive(Serialize, Deserialize)]
struct BasisHeader {
    n_nodes: usize,
    n_snapshots: usize,
    n_kept: usize,
    energy_captured: f64,
    singular_values: Vec<f64>,
    mean: Option<Vec<f64>>,
    modes_file: String,
    coefficients_file: String,
}

/// File names written next to a basis header `<stem>.json`.
pub fn basis_paths(header: &Path) -> (PathBuf, PathBuf) {
    let stem = header.file_stem().and_then(|s| s.to_str()).unwrap_or("pod_basis");
    let dir = header.parent().unwrap_or(Path::new(""));
    (
        dir.join(format!("{stem}_modes.csv")),
        dir.join(format!("{stem}_coefficients.csv")),
    )
}

impl PodBasis {
    /// JSON header plus `<stem>_modes.csv` and `<stem>_coefficients.csv`.
    pub fn save(&self, header: &Path) -> Result<()> {
        let (modes_path, coeff_path) = basis_paths(header);
        write_matrix_csv(&self.modes, "mode", &modes_path)?;
        write_matrix_csv(&self.temporal_coefficients, "snapshot", &coeff_path)?;
        let h = BasisHeader {
            n_nodes: self.modes.rows(),
            n_snapshots: self.temporal_coefficients.cols(),
            n_kept: self.n_kept,
            energy_captured: self.energy_captured,
            singular_values: self.singular_values.clone(),
            mean: self.mean.clone(),
            modes_file: file_name(&modes_path),
            coefficients_file: file_name(&coeff_path),
        };
        fs::write(header, serde_json::to_string_pretty(&h)?)?;
        Ok(())
    }

    pub fn load(header: &Path) -> Result<Self> {
        if !header.exists() {
            return Err(Error::MissingArtifact(header.to_path_buf()));
        }
        let h: BasisHeader = serde_json::from_str(&fs::read_to_string(header)?)?;
        let dir = header.parent().unwrap_or(Path::new(""));
        let modes = read_matrix_csv(&dir.join(&h.modes_file))?;
        let temporal_coefficients = read_matrix_csv(&dir.join(&h.coefficients_file))?;
        if modes.shape() != (h.n_nodes, h.n_kept) || temporal_coefficients.shape() != (h.n_kept, h.n_snapshots) {
            return Err(Error::Format("basis matrices disagree with header".into()));
        }
        Ok(Self {
            modes,
            singular_values: h.singular_values,
            n_kept: h.n_kept,
            energy_captured: h.energy_captured,
            temporal_coefficients,
            mean: h.mean,
        })
    }
}

fn file_name(p: &Path) -> String {
    p.file_name().and_then(|s| s.to_str()).unwrap_or_default().to_string()
}

/// Plain matrix CSV: header `row,<label>_0,...`, then one line per row.
pub fn write_matrix_csv(m: &Matrix, label: &str, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["row".to_string()];
    header.extend((0..m.cols()).map(|j| format!("{label}_{j}")));
    w.write_record(&header)?;
    for i in 0..m.rows() {
        let mut rec = vec![i.to_string()];
        rec.extend(m.row(i).iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_matrix_csv(path: &Path) -> Result<Matrix> {
    if !path.exists() {
        return Err(Error::MissingArtifact(path.to_path_buf()));
    }
    let mut r = csv::Reader::from_path(path)?;
    let cols = r.headers()?.len().saturating_sub(1);
    let mut data = Vec::new();
    let mut rows = 0;
    for rec in r.records() {
        let rec = rec?;
        if rec.len() != cols + 1 {
            return Err(Error::Format(format!("{}: ragged row {rows}", path.display())));
        }
        for f in rec.iter().skip(1) {
            data.push(parse_f64(f)?);
        }
        rows += 1;
    }
    Matrix::new(rows, cols, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn snapshots(values: Matrix) -> SnapshotMatrix {
        let times = (0..values.cols()).map(|s| s as f64 * 0.1).collect();
        SnapshotMatrix::new(values, times, None).unwrap()
    }

    fn random_snapshots(rows: usize, cols: usize, seed: u64) -> SnapshotMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        snapshots(Matrix::new(rows, cols, (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap())
    }

    #[test]
    fn rank_one_keeps_one_mode() {
        let u = [1.0, 2.0, -3.0, 0.5];
        let v = [0.3, -1.0, 2.0, 1.0, 0.1];
        let data = u.iter().flat_map(|a| v.iter().map(move |b| a * b)).collect();
        let basis = compute_pod(&snapshots(Matrix::new(4, 5, data).unwrap()), 0.99).unwrap();
        assert_eq!(basis.n_kept, 1);
        assert!((basis.energy_captured - 1.0).abs() < 1e-15);
    }

    #[test]
    fn full_threshold_is_lossless() {
        let snaps = random_snapshots(12, 30, 1);
        let basis = compute_pod(&snaps, 1.0).unwrap();
        let rec = reconstruct_all(&basis, &basis.temporal_coefficients).unwrap();
        assert!(linalg::frobenius_relative_error(&snaps.values, &rec).unwrap() < 1e-8);
    }

    #[test]
    fn full_threshold_keeps_tiny_modes() {
        // Singular values 1 and 1e-9: the cumulative curve rounds to 1 after
        // the first mode, yet the second still matters at the 1e-8 level.
        let a = [1.0, 0.0, 0.0, 0.0];
        let b = [0.0, 1e-9, 0.0, 0.0];
        let data: Vec<f64> = (0..3)
            .flat_map(|i| {
                if i == 0 {
                    a
                } else if i == 1 {
                    b
                } else {
                    [0.0; 4]
                }
            })
            .collect();
        let snaps = snapshots(Matrix::new(3, 4, data).unwrap());
        let basis = compute_pod(&snaps, 1.0).unwrap();
        assert_eq!(basis.n_kept, 2);
        let rec = reconstruct_all(&basis, &basis.temporal_coefficients).unwrap();
        assert!(linalg::frobenius_relative_error(&snaps.values, &rec).unwrap() < 1e-15);
        assert_eq!(compute_pod(&snaps, 0.999999).unwrap().n_kept, 1);
    }

    #[test]
    fn truncation_error_matches_discarded_energy() {
        let snaps = random_snapshots(20, 15, 2);
        for thr in [0.3, 0.6, 0.9, 0.99] {
            let basis = compute_pod(&snaps, thr).unwrap();
            assert!(basis.energy_captured >= thr);
            let rec = reconstruct_all(&basis, &basis.temporal_coefficients).unwrap();
            let err2 = linalg::frobenius_relative_error(&snaps.values, &rec).unwrap().powi(2);
            assert!((err2 - (1.0 - basis.energy_captured)).abs() < 1e-8);
            assert!(
                basis
                    .modes
                    .t_matmul(&basis.modes)
                    .unwrap()
                    .sub(&Matrix::identity(basis.n_kept))
                    .unwrap()
                    .max_abs()
                    < 1e-10
            );
        }
    }

    #[test]
    fn threshold_monotone() {
        let snaps = random_snapshots(10, 25, 3);
        let mut last = 0;
        for i in 1..=20 {
            let n = compute_pod(&snaps, i as f64 / 20.0).unwrap().n_kept;
            assert!(n >= last);
            last = n;
        }
    }

    #[test]
    fn sign_convention() {
        let basis = compute_pod(&random_snapshots(9, 14, 4), 1.0).unwrap();
        for n in 0..basis.n_kept {
            let col = basis.modes.column(n);
            let max = col
                .iter()
                .cloned()
                .fold(0.0_f64, |m, v| if v.abs() > m.abs() { v } else { m });
            assert!(max > 0.0);
        }
    }

    #[test]
    fn project_mode_gives_unit_vector() {
        let basis = compute_pod(&random_snapshots(8, 10, 5), 1.0).unwrap();
        let a = project(&basis, &basis.modes.column(1)).unwrap();
        for (i, v) in a.iter().enumerate() {
            let expect = if i == 1 { 1.0 } else { 0.0 };
            assert!((v - expect).abs() < 1e-12);
        }
        assert!(project(&basis, &[0.0; 8]).unwrap().iter().all(|v| v.abs() == 0.0));
        assert!(project(&basis, &[0.0; 7]).is_err());
    }

    #[test]
    fn reconstruct_cases() {
        let snaps = random_snapshots(8, 10, 6);
        let basis = compute_pod(&snaps, 0.95).unwrap();
        let n = basis.n_kept;
        assert!(reconstruct(&basis, &vec![0.0; n]).unwrap().iter().all(|v| *v == 0.0));
        let mut e = vec![0.0; n];
        e[0] = 1.0;
        assert_eq!(reconstruct(&basis, &e).unwrap(), basis.modes.column(0));
        assert!(reconstruct(&basis, &vec![0.0; n + 1]).is_err());
        // Stored coefficients recover each snapshot up to the truncation error.
        let bound = (1.0 - basis.energy_captured).sqrt() * snaps.values.frobenius_norm();
        for s in 0..snaps.n_snapshots() {
            let rec = reconstruct(&basis, &basis.temporal_coefficients.column(s)).unwrap();
            let diff: f64 = rec
                .iter()
                .zip(snaps.snapshot(s))
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                .sqrt();
            assert!(diff <= bound + 1e-10);
        }
    }

    #[test]
    fn energy_curve_examples() {
        assert_eq!(energy_curve(&[1.0, 0.0, 0.0]), vec![1.0, 1.0, 1.0]);
        let c = energy_curve(&[4.0, 3.0]);
        assert!((c[0] - 16.0 / 25.0).abs() < 1e-15 && c[1] == 1.0);
        let c = energy_curve(&[3.0, 4.0]);
        assert!((c[0] - 9.0 / 25.0).abs() < 1e-15 && c[1] == 1.0);
    }

    #[test]
    fn steep_spectrum_keeps_few_modes() {
        // Squared-energy fractions of about 0.88 and 0.04 for the first two modes.
        let sv: Vec<f64> = [0.88_f64, 0.04, 0.03, 0.02, 0.015, 0.01, 0.005]
            .iter()
            .map(|e| e.sqrt())
            .collect();
        let c = energy_curve(&sv);
        assert!((c[0] - 0.88).abs() < 1e-12);
        assert!((c[1] - c[0] - 0.04).abs() < 1e-12);
        assert!(c.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn errors() {
        let zero = snapshots(Matrix::zeros(3, 4));
        assert!(matches!(compute_pod(&zero, 0.9), Err(Error::Domain(_))));
        let snaps = random_snapshots(3, 4, 7);
        assert!(compute_pod(&snaps, 0.0).is_err());
        assert!(compute_pod(&snaps, 1.5).is_err());
        assert!(compute_pod(&random_snapshots(3, 1, 8), 0.9).is_err());
        assert!(SnapshotMatrix::new(Matrix::zeros(2, 2), vec![1.0, 1.0], None).is_err());
    }

    #[test]
    fn centered_pod_round_trip() {
        let snaps = random_snapshots(6, 12, 9);
        let basis = compute_pod_with(
            &snaps,
            PodOptions {
                energy_threshold: 1.0,
                center: true,
            },
        )
        .unwrap();
        let rec = reconstruct_all(&basis, &basis.temporal_coefficients).unwrap();
        assert!(linalg::frobenius_relative_error(&snaps.values, &rec).unwrap() < 1e-10);
        let field = snaps.snapshot(3);
        let back = reconstruct(&basis, &project(&basis, &field).unwrap()).unwrap();
        assert!(linalg::relative_l2(&field, &back).unwrap() < 1e-10);
    }

    #[test]
    fn csv_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let mut snaps = random_snapshots(5, 7, 10);
        snaps.node_coords = Some((0..5).map(|i| (i as f64 * 0.37, -1.0 / 3.0)).collect());
        let path = dir.path().join("snap.csv");
        snaps.write_csv(&path).unwrap();
        assert_eq!(SnapshotMatrix::read_csv(&path).unwrap(), snaps);

        let basis = compute_pod(&snaps, 0.9).unwrap();
        let header = dir.path().join("basis.json");
        basis.save(&header).unwrap();
        assert_eq!(PodBasis::load(&header).unwrap(), basis);
        assert!(matches!(
            PodBasis::load(&dir.path().join("nope.json")),
            Err(Error::MissingArtifact(_))
        ));
    }

    proptest! {
        #[test]
        fn project_inverts_reconstruct(coeffs in proptest::collection::vec(-50.0f64..50.0, 6)) {
            let basis = compute_pod(&random_snapshots(10, 6, 11), 1.0).unwrap();
            prop_assert_eq!(basis.n_kept, 6);
            let back = project(&basis, &reconstruct(&basis, &coeffs).unwrap()).unwrap();
            for (x, y) in coeffs.iter().zip(&back) {
                prop_assert!((x - y).abs() < 1e-10);
            }
        }
    }
}
