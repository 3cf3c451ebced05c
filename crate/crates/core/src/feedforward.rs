//! Correlation feed-forward: per-sample phase estimates of a reference mode
//! steer rotations of the remaining modes, exposing correlations that the
//! random reference phase otherwise averages away.

use std::collections::BTreeMap;
use std::f64::consts::{PI, TAU};
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::measurement::{QuadratureId, QuadratureRecord};
use crate::scalar::Real;
use crate::stats::{Estimate, MomentTensor, DEFAULT_BATCHES};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    ThreeMode,
    TwoMode,
}

impl Protocol {
    pub fn required_modes(self) -> usize {
        match self {
            Protocol::ThreeMode => 3,
            Protocol::TwoMode => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Protocol::ThreeMode => "three_mode",
            Protocol::TwoMode => "two_mode",
        }
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Protocol {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "3m" | "three_mode" | "three-mode" => Ok(Protocol::ThreeMode),
            "2m" | "two_mode" | "two-mode" => Ok(Protocol::TwoMode),
            _ => Err(Error::Parse(format!(
                "unknown protocol {s:?} (expected 3m or 2m)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseEstimate<T> {
    /// Radians in `[−π, π)`.
    pub phases: Vec<T>,
    /// Samples with `I = Q = 0`, assigned phase 0.
    pub flagged: Vec<usize>,
}

fn wrap(phi: f64) -> f64 {
    if phi >= PI {
        phi - TAU
    } else {
        phi
    }
}

/// Four-quadrant `atan2(Q, I)` of the reference mode per sample.
pub fn estimate_phase<T: Real>(
    record: &QuadratureRecord<T>,
    reference_mode: usize,
) -> Result<PhaseEstimate<T>> {
    let i = record.column(QuadratureId::i(reference_mode))?;
    let q = record.column(QuadratureId::q(reference_mode))?;
    let mut flagged = Vec::new();
    let phases = i
        .iter()
        .zip(&q)
        .enumerate()
        .map(|(k, (i, q))| {
            let (i, q) = (i.as_f64(), q.as_f64());
            if i.abs() + q.abs() == 0.0 {
                flagged.push(k);
                T::zero()
            } else {
                T::lit(wrap(q.atan2(i)))
            }
        })
        .collect();
    Ok(PhaseEstimate { phases, flagged })
}

/// Circular moving average of phases over a centred window.
fn smooth(phases: &[f64], window: usize) -> Vec<f64> {
    if window <= 1 {
        return phases.to_vec();
    }
    let n = phases.len();
    let mut cs = vec![0.0; n + 1];
    let mut sn = vec![0.0; n + 1];
    for (k, p) in phases.iter().enumerate() {
        cs[k + 1] = cs[k] + p.cos();
        sn[k + 1] = sn[k] + p.sin();
    }
    let half = window / 2;
    (0..n)
        .map(|k| {
            let lo = k.saturating_sub(half);
            let hi = (lo + window).min(n);
            let lo = hi.saturating_sub(window);
            let (s, c) = (sn[hi] - sn[lo], cs[hi] - cs[lo]);
            if s == 0.0 && c == 0.0 {
                0.0
            } else {
                wrap(s.atan2(c))
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FeedForwardOptions {
    /// Moving-average window (samples) for the phase estimate; `None` uses
    /// the raw per-sample phase.
    pub smoothing_window: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeedForwardResult<T> {
    pub protocol: Protocol,
    pub reference_mode: usize,
    /// Modes that were rotated.
    pub corrected_modes: Vec<usize>,
    pub corrected_record: QuadratureRecord<T>,
    pub correlation_table: BTreeMap<String, Estimate<f64>>,
    /// Two-mode protocol: `var(x)/var(p)` of the corrected mode.
    pub variance_ratio: Option<Estimate<f64>>,
    /// Singular values of the 2×2 cross-covariance block between the two
    /// corrected modes (three-mode protocol). Independent of the branch
    /// convention and of a constant reference phase offset.
    pub cross_singular_values: Option<[f64; 2]>,
    pub flagged: Vec<usize>,
}

/// Pearson correlations `IaIb, QaQb, IaQb, QaIb` between two modes.
pub fn correlation_table<T: Real>(
    record: &QuadratureRecord<T>,
    a: usize,
    b: usize,
) -> Result<BTreeMap<String, Estimate<f64>>> {
    let sel = [
        QuadratureId::i(a),
        QuadratureId::q(a),
        QuadratureId::i(b),
        QuadratureId::q(b),
    ];
    let t = MomentTensor::from_record(record, &sel, DEFAULT_BATCHES)?;
    let mut out = BTreeMap::new();
    for (i, j) in [(0, 2), (1, 3), (0, 3), (1, 2)] {
        out.insert(format!("{}{}", sel[i], sel[j]), t.correlation::<f64>(i, j)?);
    }
    Ok(out)
}

/// `var(I)/var(Q)` of one mode with a batch-means standard error.
pub fn variance_ratio<T: Real>(record: &QuadratureRecord<T>, mode: usize) -> Result<Estimate<f64>> {
    let x = record.calibrated(QuadratureId::i(mode))?;
    let p = record.calibrated(QuadratureId::q(mode))?;
    let n = x.len();
    let var = |v: &[T]| {
        let m = v.iter().map(|a| a.as_f64()).sum::<f64>() / v.len() as f64;
        v.iter().map(|a| (a.as_f64() - m).powi(2)).sum::<f64>() / v.len() as f64
    };
    let vp = var(&p);
    if !(vp > 0.0) {
        return Err(Error::DegenerateVariance);
    }
    let value = var(&x) / vp;
    let nb = DEFAULT_BATCHES.min(n / 10);
    let std_error = if nb >= 2 {
        let r: Vec<f64> = (0..nb)
            .map(|b| {
                let (s, e) = (b * n / nb, (b + 1) * n / nb);
                var(&x[s..e]) / var(&p[s..e])
            })
            .collect();
        let m = r.iter().sum::<f64>() / nb as f64;
        (r.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (nb as f64 - 1.0) / nb as f64).sqrt()
    } else {
        value * (4.0 / n as f64).sqrt()
    };
    Ok(Estimate { value, std_error })
}

fn cross_singular_values<T: Real>(
    record: &QuadratureRecord<T>,
    a: usize,
    b: usize,
) -> Result<[f64; 2]> {
    let sel = [
        QuadratureId::i(a),
        QuadratureId::q(a),
        QuadratureId::i(b),
        QuadratureId::q(b),
    ];
    let t = MomentTensor::from_record(record, &sel, 1)?;
    let c = [
        [t.covariance(0, 2), t.covariance(0, 3)],
        [t.covariance(1, 2), t.covariance(1, 3)],
    ];
    // singular values of a 2×2 matrix from its Frobenius norm and determinant
    let f2 = c[0][0].powi(2) + c[0][1].powi(2) + c[1][0].powi(2) + c[1][1].powi(2);
    let det = (c[0][0] * c[1][1] - c[0][1] * c[1][0]).abs();
    let disc = (f2 * f2 - 4.0 * det * det).max(0.0).sqrt();
    Ok([
        ((f2 + disc) / 2.0).sqrt(),
        ((f2 - disc) / 2.0).max(0.0).sqrt(),
    ])
}

/// Rotates every mode other than `reference_mode` by `+φ_ref/2` per sample.
/// Three-mode: returns the correlation table of the two corrected modes.
/// Two-mode: returns the corrected mode's variance ratio.
pub fn apply_feedforward<T: Real>(
    record: &QuadratureRecord<T>,
    reference_mode: usize,
    protocol: Protocol,
    options: FeedForwardOptions,
) -> Result<FeedForwardResult<T>> {
    let required = protocol.required_modes();
    if record.n_modes != required {
        return Err(Error::ProtocolMismatch {
            protocol: protocol.name(),
            required,
            found: record.n_modes,
        });
    }
    if reference_mode >= record.n_modes {
        return Err(Error::ModeOutOfRange {
            mode: reference_mode,
            n_modes: record.n_modes,
        });
    }
    let est = estimate_phase(record, reference_mode)?;
    let mut phases: Vec<f64> = est.phases.iter().map(|p| p.as_f64()).collect();
    if let Some(w) = options.smoothing_window {
        phases = smooth(&phases, w);
    }
    let corrected_modes: Vec<usize> = (0..record.n_modes)
        .filter(|m| *m != reference_mode)
        .collect();
    let mut corrected = record.clone();
    let width = 2 * record.n_modes;
    corrected
        .samples
        .par_chunks_mut(width)
        .zip(phases.par_iter())
        .for_each(|(row, phi)| {
            let (s, c) = (phi / 2.0).sin_cos();
            for &m in &corrected_modes {
                let (i, q) = (row[2 * m].as_f64(), row[2 * m + 1].as_f64());
                row[2 * m] = T::lit(i * c - q * s);
                row[2 * m + 1] = T::lit(i * s + q * c);
            }
        });
    let note = format!(
        "feed-forward {protocol} on reference mode {}",
        reference_mode + 1
    );
    corrected.calibration_note = if record.calibration_note.is_empty() {
        note
    } else {
        format!("{}; {note}", record.calibration_note)
    };

    let (correlation_table, variance_ratio, cross) = match protocol {
        Protocol::ThreeMode => {
            let (a, b) = (corrected_modes[0], corrected_modes[1]);
            (
                correlation_table(&corrected, a, b)?,
                None,
                Some(cross_singular_values(&corrected, a, b)?),
            )
        }
        Protocol::TwoMode => {
            let m = corrected_modes[0];
            let table = correlation_table(&corrected, m, reference_mode)?;
            (table, Some(variance_ratio(&corrected, m)?), None)
        }
    };
    Ok(FeedForwardResult {
        protocol,
        reference_mode,
        corrected_modes,
        corrected_record: corrected,
        correlation_table,
        variance_ratio,
        cross_singular_values: cross,
        flagged: est.flagged,
    })
}
