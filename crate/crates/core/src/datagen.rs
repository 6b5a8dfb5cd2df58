//! Synthetic full-order data: pulsed inlet-velocity laws, an analytic local
//! Nusselt field on the impingement surface, and the L25 case planner.

use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{domain_err, shape_err, Error, Result};
use crate::linalg::Matrix;
use crate::pod::SnapshotMatrix;

/// Relative pulsation amplitude of every inlet component.
pub const PULSATION: f64 = 0.75;

pub const H_OVER_D_RANGE: (f64, f64) = (2.0, 6.0);
pub const FREQUENCY_RANGE: (f64, f64) = (5.0, 100.0);
pub const U_JET_RANGE: (f64, f64) = (8.0, 16.0);

/// Velocity levels of the multi-frequency inlet (m/s).
pub const MULTI_VELOCITIES: [f64; 5] = [8.0, 10.0, 12.0, 14.0, 16.0];
/// Frequency levels of the multi-frequency inlet (Hz).
pub const MULTI_FREQUENCIES: [f64; 5] = [5.0, 25.0, 50.0, 75.0, 100.0];

/// One harmonic-jet design point.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaseSpec {
    pub h_over_d: f64,
    pub frequency: f64,
    pub u_jet: f64,
}

impl CaseSpec {
    pub fn validate(&self) -> Result<()> {
        let check = |name: &str, v: f64, (lo, hi): (f64, f64)| {
            if v.is_finite() && v >= lo && v <= hi {
                Ok(())
            } else {
                domain_err(format!("{name} = {v} outside [{lo}, {hi}]"))
            }
        };
        check("H/d", self.h_over_d, H_OVER_D_RANGE)?;
        check("frequency", self.frequency, FREQUENCY_RANGE)?;
        check("U_jet", self.u_jet, U_JET_RANGE)
    }

    pub fn features(&self) -> [f64; 3] {
        [self.h_over_d, self.frequency, self.u_jet]
    }

    pub fn inlet(&self) -> InletLaw {
        InletLaw::harmonic(self.u_jet, self.frequency)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CasePlan {
    pub cases: Vec<CaseSpec>,
    pub train_indices: Vec<usize>,
    pub test_indices: Vec<usize>,
}

/// Number of held-out rows at the end of an L25 plan.
pub const TEST_CASES: usize = 4;

/// Level arrays for the three factors `(H/d, f, U_jet)`.
pub type FactorLevels = [[f64; 5]; 3];

pub const DEFAULT_LEVELS: FactorLevels = [
    [2.0, 3.0, 4.0, 5.0, 6.0],
    [5.0, 25.0, 50.0, 75.0, 100.0],
    [8.0, 10.0, 12.0, 14.0, 16.0],
];

/// Level indices of row `i` of the modular L25 construction.
pub fn l25_row(i: usize) -> [usize; 3] {
    let (a, b) = (i / 5, i % 5);
    [a, b, (a + b) % 5]
}

/// Strength-2 orthogonal array over three 5-level factors. Row `i` uses level
/// indices `(⌊i/5⌋, i mod 5, (⌊i/5⌋ + i mod 5) mod 5)`; the last four rows are
/// held out for testing.
pub fn taguchi_l25(levels: &FactorLevels) -> Result<CasePlan> {
    for (f, lv) in levels.iter().enumerate() {
        if lv.iter().any(|v| !v.is_finite()) {
            return domain_err(format!("factor {f} has non-finite levels"));
        }
        for i in 0..5 {
            for j in i + 1..5 {
                if lv[i] == lv[j] {
                    return domain_err(format!("factor {f} has duplicate level {}", lv[i]));
                }
            }
        }
    }
    let cases = (0..25)
        .map(|i| {
            let [a, b, c] = l25_row(i);
            CaseSpec {
                h_over_d: levels[0][a],
                frequency: levels[1][b],
                u_jet: levels[2][c],
            }
        })
        .collect();
    CasePlan::from_cases(cases)
}

impl CasePlan {
    /// CSV with header `Case,H/d,Fr,V`, cases numbered from 1.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["Case", "H/d", "Fr", "V"])?;
        for (i, c) in self.cases.iter().enumerate() {
            w.write_record([
                (i + 1).to_string(),
                c.h_over_d.to_string(),
                c.frequency.to_string(),
                c.u_jet.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a plan written by [`write_csv`](Self::write_csv); the last
    /// [`TEST_CASES`] rows become the test split.
    pub fn read_csv(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingArtifact(path.to_path_buf()));
        }
        let mut r = csv::Reader::from_path(path)?;
        if r.headers()?.iter().collect::<Vec<_>>() != ["Case", "H/d", "Fr", "V"] {
            return Err(Error::Format("case plan header must be Case,H/d,Fr,V".into()));
        }
        let mut cases = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let num = |k: usize| -> Result<f64> {
                rec.get(k)
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| Error::Format(format!("bad plan row {}", cases.len() + 1)))
            };
            cases.push(CaseSpec {
                h_over_d: num(1)?,
                frequency: num(2)?,
                u_jet: num(3)?,
            });
        }
        if cases.len() <= TEST_CASES {
            return Err(Error::Format(format!("plan needs more than {TEST_CASES} rows")));
        }
        Self::from_cases(cases)
    }

    /// Wraps an ordered case list; the last [`TEST_CASES`] cases are held out.
    pub fn from_cases(cases: Vec<CaseSpec>) -> Result<Self> {
        if cases.len() <= TEST_CASES {
            return domain_err(format!("a plan needs more than {TEST_CASES} cases"));
        }
        let n = cases.len();
        Ok(Self {
            cases,
            train_indices: (0..n - TEST_CASES).collect(),
            test_indices: (n - TEST_CASES..n).collect(),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InletKind {
    Harmonic,
    RandomMulti,
}

/// `V(t) = Σ_i [U_i + 0.75·U_i·sin(2π f_i t)]`; a single term for the harmonic jet.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InletLaw {
    pub kind: InletKind,
    /// `(U_i, f_i)` pairs.
    pub components: Vec<(f64, f64)>,
}

impl InletLaw {
    pub fn harmonic(u_jet: f64, frequency: f64) -> Self {
        Self {
            kind: InletKind::Harmonic,
            components: vec![(u_jet, frequency)],
        }
    }

    /// The five velocity and frequency levels zipped in order.
    pub fn default_multi() -> Self {
        Self::random_multi(
            MULTI_VELOCITIES
                .iter()
                .copied()
                .zip(MULTI_FREQUENCIES.iter().copied())
                .collect(),
        )
    }

    pub fn random_multi(components: Vec<(f64, f64)>) -> Self {
        Self {
            kind: InletKind::RandomMulti,
            components,
        }
    }

    #[inline]
    pub fn value(&self, t: f64) -> f64 {
        self.components
            .iter()
            .map(|&(u, f)| u + PULSATION * u * (2.0 * PI * f * t).sin())
            .sum()
    }

    /// Time-mean velocity `Σ U_i`.
    pub fn mean_velocity(&self) -> f64 {
        self.components.iter().map(|c| c.0).sum()
    }

    /// Lowest component frequency; one "cycle" of sampling refers to it.
    pub fn base_frequency(&self) -> f64 {
        self.components.iter().map(|c| c.1).fold(f64::INFINITY, f64::min)
    }

    pub fn validate(&self) -> Result<()> {
        if self.components.is_empty() {
            return domain_err("inlet law needs at least one component");
        }
        if self.kind == InletKind::Harmonic && self.components.len() != 1 {
            return domain_err("harmonic inlet has exactly one component");
        }
        for &(u, f) in &self.components {
            if !(u > 0.0 && u.is_finite() && f > 0.0 && f.is_finite()) {
                return domain_err(format!("invalid inlet component (U={u}, f={f})"));
            }
        }
        Ok(())
    }
}

/// Sampled inlet velocity.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InletSignal {
    pub law: InletLaw,
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

pub fn inlet_velocity(law: &InletLaw, times: &[f64]) -> Result<InletSignal> {
    law.validate()?;
    check_times(times)?;
    Ok(InletSignal {
        law: law.clone(),
        times: times.to_vec(),
        values: times.iter().map(|&t| law.value(t)).collect(),
    })
}

fn check_times(times: &[f64]) -> Result<()> {
    if times.is_empty() {
        return shape_err("empty time grid");
    }
    if times.iter().any(|t| !t.is_finite()) || times.windows(2).any(|w| w[1] <= w[0]) {
        return domain_err("times must be finite and strictly increasing");
    }
    Ok(())
}

/// `samples_per_cycle · cycles` instants spaced `1/(samples_per_cycle·f)` from 0.
pub fn sample_times(base_frequency: f64, samples_per_cycle: usize, cycles: usize) -> Vec<f64> {
    let dt = 1.0 / (samples_per_cycle as f64 * base_frequency);
    (0..samples_per_cycle * cycles).map(|j| j as f64 * dt).collect()
}

/// Constants of the analytic local-Nusselt model
/// `Nu(s,t) = peak · (V(t − lag·|s|)/V_ref)^exponent · exp(−s²/(2w²)) + baseline`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticFieldModel {
    pub n_nodes: usize,
    /// Nodes span `[-arc_half_length, arc_half_length]` in S/d.
    pub arc_half_length: f64,
    pub stagnation_peak: f64,
    pub decay_width: f64,
    pub velocity_exponent: f64,
    /// Convective delay in seconds per unit S/d.
    pub lag_per_unit_s: f64,
    pub baseline: f64,
}

impl Default for SyntheticFieldModel {
    fn default() -> Self {
        Self {
            n_nodes: 200,
            arc_half_length: 6.0,
            stagnation_peak: 60.0,
            decay_width: 2.0,
            velocity_exponent: 0.8,
            lag_per_unit_s: 0.002,
            baseline: 10.0,
        }
    }
}

impl SyntheticFieldModel {
    pub fn validate(&self) -> Result<()> {
        if self.n_nodes < 2 {
            return domain_err("synthetic model needs at least two nodes");
        }
        if !(self.stagnation_peak > 0.0) || !(self.decay_width > 0.0) {
            return domain_err("stagnation peak and decay width must be positive");
        }
        if !(self.arc_half_length > 0.0) || !(self.lag_per_unit_s >= 0.0) {
            return domain_err("arc half-length must be positive and lag non-negative");
        }
        let all = [
            self.arc_half_length,
            self.stagnation_peak,
            self.decay_width,
            self.velocity_exponent,
            self.lag_per_unit_s,
            self.baseline,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return domain_err("synthetic model constants must be finite");
        }
        Ok(())
    }

    /// Node positions along the surface, uniform in S/d.
    pub fn node_positions(&self) -> Vec<f64> {
        let n = self.n_nodes;
        (0..n)
            .map(|i| -self.arc_half_length + 2.0 * self.arc_half_length * i as f64 / (n - 1) as f64)
            .collect()
    }

    /// Indices of the nodes closest to the stagnation point `s = 0`.
    pub fn stagnation_nodes(&self) -> Vec<usize> {
        let s = self.node_positions();
        let best = s.iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
        (0..s.len()).filter(|&i| s[i].abs() <= best + 1e-12).collect()
    }
}

pub fn synthesize_nu_field(model: &SyntheticFieldModel, law: &InletLaw, times: &[f64]) -> Result<SnapshotMatrix> {
    model.validate()?;
    law.validate()?;
    check_times(times)?;
    let v_ref = law.mean_velocity();
    let positions = model.node_positions();
    let mut data = Vec::with_capacity(positions.len() * times.len());
    for &s in &positions {
        let envelope = (-s * s / (2.0 * model.decay_width * model.decay_width)).exp();
        let lag = model.lag_per_unit_s * s.abs();
        for &t in times {
            let ratio = law.value(t - lag) / v_ref;
            data.push(model.stagnation_peak * ratio.powf(model.velocity_exponent) * envelope + model.baseline);
        }
    }
    let values = Matrix::new(positions.len(), times.len(), data)?;
    let coords = positions.iter().map(|&s| (s, 0.0)).collect();
    SnapshotMatrix::new(values, times.to_vec(), Some(coords))
}

/// Arithmetic mean over nodes, per snapshot.
pub fn average_nu(field: &SnapshotMatrix) -> Vec<f64> {
    let n = field.n_nodes() as f64;
    let mut acc = vec![0.0; field.n_snapshots()];
    for i in 0..field.n_nodes() {
        for (a, v) in acc.iter_mut().zip(field.values.row(i)) {
            *a += v;
        }
    }
    acc.iter().map(|a| a / n).collect()
}
