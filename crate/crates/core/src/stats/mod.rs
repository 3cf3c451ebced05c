//! Second- and third-order statistics of quadrature records.
//!
//! Everything is built on [`MomentTensor`]: one pass over the samples
//! accumulates centred sums up to third order per batch, after which any
//! directional skewness, coskewness or correlation is a cheap contraction.
//! Standard errors come from non-overlapping batch means.

mod fingerprint;
mod histogram;
mod sweep;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::measurement::{QuadratureId, QuadratureRecord};
use crate::scalar::Real;

pub use fingerprint::{
    polar_scan, spherical_direction, spherical_scan, theory_fingerprint, theory_polar_scan,
    threefold_fit, FingerprintKind, FingerprintMap, ScanGrid, ThreefoldFit,
};
pub use histogram::{histogram2d, BinGrid, Histogram2d};
pub use sweep::{
    fit_sinusoid, pump_phase_sweep, PhaseSweep, SinusoidFit, SweepRow, MIN_SWEEP_PHASES,
};

pub const DEFAULT_BATCHES: usize = 100;

/// Minimum batch length; shorter inputs fall back to asymptotic errors.
const MIN_BATCH_LEN: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate<T> {
    pub value: T,
    pub std_error: T,
}

impl<T: Real> Estimate<T> {
    /// Distance from zero in standard errors.
    pub fn z(&self) -> T {
        self.value.abs() / self.std_error
    }
}

/// Centred power sums of one batch (or of all samples).
#[derive(Debug, Clone)]
struct Sums {
    n: f64,
    s1: Vec<f64>,
    s2: Vec<f64>,
    s3: Vec<f64>,
}

impl Sums {
    fn zeros(d: usize) -> Self {
        Self {
            n: 0.0,
            s1: vec![0.0; d],
            s2: vec![0.0; d * d],
            s3: vec![0.0; d * d * d],
        }
    }

    fn add(&mut self, o: &Sums) {
        self.n += o.n;
        for (a, b) in self.s1.iter_mut().zip(&o.s1) {
            *a += b;
        }
        for (a, b) in self.s2.iter_mut().zip(&o.s2) {
            *a += b;
        }
        for (a, b) in self.s3.iter_mut().zip(&o.s3) {
            *a += b;
        }
    }

    /// `(mean, second, third)` raw moments along `u` relative to the shift.
    fn directional(&self, u: &[f64]) -> (f64, f64, f64) {
        let d = u.len();
        let m1: f64 = u.iter().zip(&self.s1).map(|(a, b)| a * b).sum::<f64>() / self.n;
        let mut m2 = 0.0;
        for i in 0..d {
            for j in 0..d {
                m2 += u[i] * u[j] * self.s2[i * d + j];
            }
        }
        let mut m3 = 0.0;
        for i in 0..d {
            for j in 0..d {
                let uij = u[i] * u[j];
                for k in 0..d {
                    m3 += uij * u[k] * self.s3[(i * d + j) * d + k];
                }
            }
        }
        (m1, m2 / self.n, m3 / self.n)
    }

    fn skewness(&self, u: &[f64]) -> f64 {
        let (m1, m2, m3) = self.directional(u);
        let var = m2 - m1 * m1;
        let c3 = m3 - 3.0 * m1 * m2 + 2.0 * m1 * m1 * m1;
        c3 / var.powf(1.5)
    }

    fn mean(&self, i: usize) -> f64 {
        self.s1[i] / self.n
    }

    fn covariance(&self, i: usize, j: usize) -> f64 {
        let d = self.s1.len();
        self.s2[i * d + j] / self.n - self.mean(i) * self.mean(j)
    }

    fn central_third(&self, i: usize, j: usize, k: usize) -> f64 {
        let d = self.s1.len();
        let e2 = |a: usize, b: usize| self.s2[a * d + b] / self.n;
        let (mi, mj, mk) = (self.mean(i), self.mean(j), self.mean(k));
        self.s3[(i * d + j) * d + k] / self.n - mi * e2(j, k) - mj * e2(i, k) - mk * e2(i, j)
            + 2.0 * mi * mj * mk
    }

    fn correlation(&self, i: usize, j: usize) -> f64 {
        self.covariance(i, j) / (self.covariance(i, i) * self.covariance(j, j)).sqrt()
    }

    fn coskewness(&self, i: usize, j: usize, k: usize) -> f64 {
        let s = (self.covariance(i, i) * self.covariance(j, j) * self.covariance(k, k)).sqrt();
        self.central_third(i, j, k) / s
    }
}

/// Batched raw-moment tensor of `d` sample streams up to third order.
#[derive(Debug, Clone)]
pub struct MomentTensor {
    dim: usize,
    count: usize,
    shift: Vec<f64>,
    total: Sums,
    batches: Vec<Sums>,
}

fn sorted_triples(d: usize) -> Vec<(usize, usize, usize)> {
    let mut out = Vec::new();
    for i in 0..d {
        for j in i..d {
            for k in j..d {
                out.push((i, j, k));
            }
        }
    }
    out
}

impl MomentTensor {
    /// Accumulates moments of the given equally long streams in
    /// `n_batches` contiguous batches.
    pub fn from_columns<T: Real>(columns: &[&[T]], n_batches: usize) -> Result<Self> {
        let d = columns.len();
        if d == 0 {
            return Err(Error::InvalidParams("no sample streams".into()));
        }
        let n = columns[0].len();
        if columns.iter().any(|c| c.len() != n) {
            return Err(Error::LengthMismatch(
                columns.iter().map(|c| c.len()).collect(),
            ));
        }
        if n < 2 {
            return Err(Error::InvalidParams(
                "at least two samples are needed".into(),
            ));
        }
        let n_batches = n_batches.min(n / MIN_BATCH_LEN);
        let n_batches = if n_batches >= 2 { n_batches } else { 1 };
        let bounds: Vec<(usize, usize)> = (0..n_batches)
            .map(|b| (b * n / n_batches, (b + 1) * n / n_batches))
            .collect();
        let shift: Vec<f64> = columns
            .iter()
            .map(|c| {
                let partial: Vec<f64> = bounds
                    .par_iter()
                    .map(|&(s, e)| c[s..e].iter().map(|v| v.as_f64()).sum())
                    .collect();
                partial.iter().sum::<f64>() / n as f64
            })
            .collect();
        let pairs: Vec<(usize, usize)> = (0..d).flat_map(|i| (i..d).map(move |j| (i, j))).collect();
        let triples = sorted_triples(d);
        let batches: Vec<Sums> = bounds
            .par_iter()
            .map(|&(s, e)| {
                let mut acc = Sums::zeros(d);
                let mut s2 = vec![0.0; pairs.len()];
                let mut s3 = vec![0.0; triples.len()];
                let mut y = vec![0.0; d];
                for t in s..e {
                    for (i, yi) in y.iter_mut().enumerate() {
                        *yi = columns[i][t].as_f64() - shift[i];
                        acc.s1[i] += *yi;
                    }
                    for (slot, &(i, j)) in s2.iter_mut().zip(&pairs) {
                        *slot += y[i] * y[j];
                    }
                    for (slot, &(i, j, k)) in s3.iter_mut().zip(&triples) {
                        *slot += y[i] * y[j] * y[k];
                    }
                }
                acc.n = (e - s) as f64;
                for (v, &(i, j)) in s2.iter().zip(&pairs) {
                    acc.s2[i * d + j] = *v;
                    acc.s2[j * d + i] = *v;
                }
                for (v, &(i, j, k)) in s3.iter().zip(&triples) {
                    for (a, b, c) in [
                        (i, j, k),
                        (i, k, j),
                        (j, i, k),
                        (j, k, i),
                        (k, i, j),
                        (k, j, i),
                    ] {
                        acc.s3[(a * d + b) * d + c] = *v;
                    }
                }
                acc
            })
            .collect();
        let mut total = Sums::zeros(d);
        for b in &batches {
            total.add(b);
        }
        let batches = if n_batches >= 2 { batches } else { Vec::new() };
        Ok(Self {
            dim: d,
            count: n,
            shift,
            total,
            batches,
        })
    }

    /// Tensor over the calibrated quadratures `selection` of a record.
    pub fn from_record<T: Real>(
        record: &QuadratureRecord<T>,
        selection: &[QuadratureId],
        n_batches: usize,
    ) -> Result<Self> {
        let cols = selection
            .iter()
            .map(|q| record.calibrated(*q))
            .collect::<Result<Vec<_>>>()?;
        let refs: Vec<&[T]> = cols.iter().map(|c| c.as_slice()).collect();
        Self::from_columns(&refs, n_batches)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn n_batches(&self) -> usize {
        self.batches.len()
    }

    fn batch_error(&self, f: impl Fn(&Sums) -> f64) -> Option<f64> {
        if self.batches.len() < 2 {
            return None;
        }
        let vals: Vec<f64> = self.batches.iter().map(f).collect();
        let b = vals.len() as f64;
        let mean = vals.iter().sum::<f64>() / b;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (b - 1.0);
        Some((var / b).sqrt())
    }

    fn estimate<T: Real>(&self, f: impl Fn(&Sums) -> f64, fallback: f64) -> Result<Estimate<T>> {
        let value = f(&self.total);
        if !value.is_finite() {
            return Err(Error::DegenerateVariance);
        }
        let se = self
            .batch_error(&f)
            .filter(|e| e.is_finite())
            .unwrap_or(fallback);
        Ok(Estimate {
            value: T::lit(value),
            std_error: T::lit(se),
        })
    }

    fn check_direction(&self, u: &[f64]) -> Result<()> {
        if u.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: u.len(),
            });
        }
        Ok(())
    }

    pub fn mean(&self, i: usize) -> f64 {
        self.shift[i] + self.total.mean(i)
    }

    pub fn covariance(&self, i: usize, j: usize) -> f64 {
        self.total.covariance(i, j)
    }

    /// Third central moment (not standardized).
    pub fn central_third(&self, i: usize, j: usize, k: usize) -> f64 {
        self.total.central_third(i, j, k)
    }

    pub fn mean_estimate<T: Real>(&self, i: usize) -> Result<Estimate<T>> {
        let sd = (self.covariance(i, i) / self.count as f64).sqrt();
        let est = self.estimate::<f64>(|s| s.mean(i), sd)?;
        Ok(Estimate {
            value: T::lit(est.value + self.shift[i]),
            std_error: T::lit(est.std_error),
        })
    }

    pub fn covariance_estimate<T: Real>(&self, i: usize, j: usize) -> Result<Estimate<T>> {
        let fallback = (self.covariance(i, i) * self.covariance(j, j) / self.count as f64).sqrt();
        self.estimate(|s| s.covariance(i, j), fallback)
    }

    pub fn central_third_estimate<T: Real>(
        &self,
        i: usize,
        j: usize,
        k: usize,
    ) -> Result<Estimate<T>> {
        let fallback = [i, j, k]
            .iter()
            .map(|&a| self.covariance(a, a).sqrt())
            .product::<f64>()
            * (15.0 / self.count as f64).sqrt();
        self.estimate(|s| s.central_third(i, j, k), fallback)
    }

    /// Skewness of the projection `Σ u_i y_i`.
    pub fn directional_skewness<T: Real>(&self, u: &[f64]) -> Result<Estimate<T>> {
        self.check_direction(u)?;
        let (m1, m2, _) = self.total.directional(u);
        if !(m2 - m1 * m1 > 0.0) {
            return Err(Error::DegenerateVariance);
        }
        self.estimate(|s| s.skewness(u), (6.0 / self.count as f64).sqrt())
    }

    /// Skewness value only, for dense scans.
    pub fn directional_skewness_value(&self, u: &[f64]) -> f64 {
        self.total.skewness(u)
    }

    /// Per-batch standard error of the directional skewness (NaN when the
    /// tensor has a single batch).
    pub fn directional_skewness_error(&self, u: &[f64]) -> f64 {
        self.batch_error(|s| s.skewness(u))
            .unwrap_or((6.0 / self.count as f64).sqrt())
    }

    pub fn correlation<T: Real>(&self, i: usize, j: usize) -> Result<Estimate<T>> {
        if !(self.covariance(i, i) > 0.0 && self.covariance(j, j) > 0.0) {
            return Err(Error::DegenerateVariance);
        }
        let r = self.total.correlation(i, j);
        self.estimate(
            |s| s.correlation(i, j),
            (1.0 - r * r) / (self.count as f64).sqrt(),
        )
    }

    pub fn coskewness<T: Real>(&self, i: usize, j: usize, k: usize) -> Result<Estimate<T>> {
        if [i, j, k].iter().any(|&a| !(self.covariance(a, a) > 0.0)) {
            return Err(Error::DegenerateVariance);
        }
        self.estimate(|s| s.coskewness(i, j, k), (1.0 / self.count as f64).sqrt())
    }
}

/// Sample skewness `mean((y − ȳ)³)/σ³` with a batch-means standard error.
pub fn skewness<T: Real>(samples: &[T]) -> Result<Estimate<T>> {
    MomentTensor::from_columns(&[samples], DEFAULT_BATCHES)?.directional_skewness(&[1.0])
}

fn sorted3(mut v: [f64; 3]) -> [f64; 3] {
    v.sort_by(|a, b| a.total_cmp(b));
    v
}

/// Standardized mixed third moment `mean(ABC)/(σ_A σ_B σ_C)` of
/// mean-subtracted streams. Every product is formed from the sorted triple
/// and the σ product from sorted factors, so the result is bit-identical
/// under any permutation of the arguments.
pub fn coskewness<T: Real>(a: &[T], b: &[T], c: &[T]) -> Result<Estimate<T>> {
    let n = a.len();
    if b.len() != n || c.len() != n {
        return Err(Error::LengthMismatch(vec![a.len(), b.len(), c.len()]));
    }
    if n < 2 {
        return Err(Error::InvalidParams(
            "at least two samples are needed".into(),
        ));
    }
    let center = |v: &[T]| -> (Vec<f64>, f64) {
        let m = v.iter().map(|x| x.as_f64()).sum::<f64>() / n as f64;
        let y: Vec<f64> = v.iter().map(|x| x.as_f64() - m).collect();
        let var = y.iter().map(|x| x * x).sum::<f64>() / n as f64;
        (y, var)
    };
    let (ya, va) = center(a);
    let (yb, vb) = center(b);
    let (yc, vc) = center(c);
    let [s0, s1, s2] = sorted3([va, vb, vc]);
    let sigma = (s0 * s1 * s2).sqrt();
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::DegenerateVariance);
    }
    let n_batches = DEFAULT_BATCHES.min(n / MIN_BATCH_LEN);
    let n_batches = n_batches.max(1);
    let sums: Vec<(f64, usize)> = (0..n_batches)
        .into_par_iter()
        .map(|bi| {
            let (s, e) = (bi * n / n_batches, (bi + 1) * n / n_batches);
            let sum = (s..e)
                .map(|t| {
                    let [p, q, r] = sorted3([ya[t], yb[t], yc[t]]);
                    p * q * r
                })
                .sum::<f64>();
            (sum, e - s)
        })
        .collect();
    let total: f64 = sums.iter().map(|s| s.0).sum();
    let value = total / n as f64 / sigma;
    let std_error = if n_batches >= 2 {
        let vals: Vec<f64> = sums.iter().map(|(s, m)| s / *m as f64 / sigma).collect();
        let mean = vals.iter().sum::<f64>() / n_batches as f64;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n_batches as f64 - 1.0);
        (var / n_batches as f64).sqrt()
    } else {
        (1.0 / n as f64).sqrt()
    };
    Ok(Estimate {
        value: T::lit(value),
        std_error: T::lit(std_error),
    })
}

/// Pearson correlation coefficient with batch-means standard error.
pub fn correlation<T: Real>(a: &[T], b: &[T]) -> Result<Estimate<T>> {
    MomentTensor::from_columns(&[a, b], DEFAULT_BATCHES)?.correlation(0, 1)
}

/// `x cos φ − p sin φ` on the calibrated quadratures of `mode`.
pub fn generalized_quadrature<T: Real>(
    record: &QuadratureRecord<T>,
    mode: usize,
    phi: T,
) -> Result<Vec<T>> {
    let x = record.calibrated(QuadratureId::i(mode))?;
    let p = record.calibrated(QuadratureId::q(mode))?;
    let (s, c) = phi.sin_cos();
    Ok(x.iter().zip(&p).map(|(x, p)| *x * c - *p * s).collect())
}

/// Means, covariance and standardized coskewness tensor of selected
/// quadratures, with batch standard errors.
#[derive(Debug, Clone, Serialize)]
pub struct CumulantSummary {
    pub quadratures: Vec<String>,
    pub samples: usize,
    pub means: Vec<f64>,
    pub covariance: Vec<Vec<f64>>,
    pub correlation: Vec<Vec<Estimate<f64>>>,
    /// Entries `(i, j, k)` with `i ≤ j ≤ k`.
    pub coskewness: Vec<CoskewnessEntry>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CoskewnessEntry {
    pub label: String,
    pub indices: [usize; 3],
    pub value: f64,
    pub std_error: f64,
}

impl CumulantSummary {
    pub fn from_record<T: Real>(
        record: &QuadratureRecord<T>,
        selection: &[QuadratureId],
    ) -> Result<Self> {
        let t = MomentTensor::from_record(record, selection, DEFAULT_BATCHES)?;
        let d = selection.len();
        let names: Vec<String> = selection.iter().map(|q| q.to_string()).collect();
        let covariance = (0..d)
            .map(|i| (0..d).map(|j| t.covariance(i, j)).collect())
            .collect();
        let correlation = (0..d)
            .map(|i| {
                (0..d)
                    .map(|j| t.correlation::<f64>(i, j))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        let coskewness = sorted_triples(d)
            .into_iter()
            .map(|(i, j, k)| {
                let e = t.coskewness::<f64>(i, j, k)?;
                Ok(CoskewnessEntry {
                    label: format!("{}{}{}", names[i], names[j], names[k]),
                    indices: [i, j, k],
                    value: e.value,
                    std_error: e.std_error,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            quadratures: names,
            samples: t.count(),
            means: (0..d).map(|i| t.mean(i)).collect(),
            covariance,
            correlation,
            coskewness,
        })
    }
}
