//! Synthetic heterodyne records: Husimi-Q sampling, amplifier noise, gain,
//! photon-flux estimates and record persistence.

mod io;

use std::fmt;
use std::str::FromStr;

use num_complex::Complex;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fock::{stream_rng, FockState};
use crate::scalar::Real;

pub use io::{
    read_csv, read_record, record_from_bytes, record_to_bytes, write_csv, write_record,
    RECORD_MAGIC, RECORD_VERSION,
};

/// 1 µs integration time.
pub const DEFAULT_SAMPLE_RATE_HZ: f64 = 1e6;

/// Samples drawn per RNG stream.
pub const SAMPLE_BLOCK: usize = 1 << 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Component {
    I,
    Q,
}

/// One named column of a record, e.g. `I1` or `Q3` (modes are 1-based in
/// names, 0-based in `mode`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct QuadratureId {
    pub mode: usize,
    pub component: Component,
}

impl QuadratureId {
    pub fn i(mode: usize) -> Self {
        Self {
            mode,
            component: Component::I,
        }
    }

    pub fn q(mode: usize) -> Self {
        Self {
            mode,
            component: Component::Q,
        }
    }

    /// Column index in the interleaved `I1,Q1,I2,Q2,…` layout.
    pub fn column(self) -> usize {
        2 * self.mode + usize::from(self.component == Component::Q)
    }
}

impl fmt::Display for QuadratureId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let c = match self.component {
            Component::I => 'I',
            Component::Q => 'Q',
        };
        write!(f, "{c}{}", self.mode + 1)
    }
}

impl FromStr for QuadratureId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let component = match s.chars().next() {
            Some('I') | Some('i') => Component::I,
            Some('Q') | Some('q') => Component::Q,
            _ => return Err(Error::Parse(format!("bad quadrature name {s:?}"))),
        };
        let mode: usize = s[1..]
            .parse()
            .map_err(|_| Error::Parse(format!("bad quadrature name {s:?}")))?;
        if mode == 0 {
            return Err(Error::Parse(format!("quadrature modes are 1-based: {s:?}")));
        }
        Ok(Self {
            mode: mode - 1,
            component,
        })
    }
}

/// Time series of raw quadratures `I = √G x`, `Q = √G p` for every mode,
/// stored row-major as `I1,Q1,I2,Q2,…` per time step.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRecord<T> {
    pub n_modes: usize,
    pub samples: Vec<T>,
    pub sample_rate: T,
    pub gain: T,
    pub noise_photons: Vec<T>,
    pub pump_phase: T,
    pub pump_on: bool,
    pub calibration_note: String,
}

impl<T: Real> QuadratureRecord<T> {
    /// Record with default metadata (1 MHz, pump on, phase 0).
    pub fn new(n_modes: usize, samples: Vec<T>, gain: T, noise_photons: Vec<T>) -> Result<Self> {
        let rec = Self {
            n_modes,
            samples,
            sample_rate: T::lit(DEFAULT_SAMPLE_RATE_HZ),
            gain,
            noise_photons,
            pump_phase: T::zero(),
            pump_on: true,
            calibration_note: String::new(),
        };
        rec.validate()?;
        Ok(rec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=3).contains(&self.n_modes) {
            return Err(Error::InvalidParams(format!(
                "records hold 1 to 3 modes, got {}",
                self.n_modes
            )));
        }
        if self.samples.is_empty() || !self.samples.len().is_multiple_of(2 * self.n_modes) {
            return Err(Error::InvalidParams(format!(
                "{} sample values do not fill whole {}-mode time steps",
                self.samples.len(),
                self.n_modes
            )));
        }
        if !(self.gain > T::zero()) || !self.gain.is_finite() {
            return Err(Error::InvalidParams("gain must be positive".into()));
        }
        if self.noise_photons.len() != self.n_modes
            || self.noise_photons.iter().any(|n| !(*n >= T::zero()))
        {
            return Err(Error::InvalidParams(
                "need one non-negative noise_photons value per mode".into(),
            ));
        }
        if !(self.sample_rate > T::zero()) {
            return Err(Error::InvalidParams("sample_rate must be positive".into()));
        }
        Ok(())
    }

    /// Number of time steps.
    pub fn len(&self) -> usize {
        self.samples.len() / (2 * self.n_modes)
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    fn check(&self, id: QuadratureId) -> Result<()> {
        if id.mode >= self.n_modes {
            return Err(Error::ModeOutOfRange {
                mode: id.mode,
                n_modes: self.n_modes,
            });
        }
        Ok(())
    }

    /// Raw column.
    pub fn column(&self, id: QuadratureId) -> Result<Vec<T>> {
        self.check(id)?;
        let w = 2 * self.n_modes;
        Ok(self
            .samples
            .iter()
            .skip(id.column())
            .step_by(w)
            .copied()
            .collect())
    }

    /// Calibrated column `I/√G` or `Q/√G`.
    pub fn calibrated(&self, id: QuadratureId) -> Result<Vec<T>> {
        let s = self.gain.sqrt().recip();
        Ok(self.column(id)?.into_iter().map(|v| v * s).collect())
    }

    pub fn quadrature_names(&self) -> Vec<QuadratureId> {
        (0..self.n_modes)
            .flat_map(|m| [QuadratureId::i(m), QuadratureId::q(m)])
            .collect()
    }
}

/// Draws heterodyne outcomes `α` from the multimode Husimi distribution
/// `Q(α) = |⟨α|ψ⟩|²/π^m` by rejection against a mixture of Fock-state Q
/// functions. Cauchy–Schwarz gives `|Σ ψ_n f_n|² ≤ L1 Σ |ψ_n| |f_n|²` with
/// `L1 = Σ|ψ_n|`, so the mixture with weights `|ψ_n|/L1` scaled by `L1²` is a
/// strict envelope and the acceptance rate is `1/L1²`.
struct QSampler {
    n_modes: usize,
    occupations: Vec<Vec<usize>>,
    amplitudes: Vec<Complex<f64>>,
    weights: Vec<f64>,
    cumulative: Vec<f64>,
    l1: f64,
    max_n: Vec<usize>,
}

impl QSampler {
    fn new<T: Real>(state: &FockState<T>) -> Result<Self> {
        let psi = state.normalized();
        let peak = psi
            .amplitudes()
            .iter()
            .map(|a| a.norm().as_f64())
            .fold(0.0, f64::max);
        if !(peak > 0.0) {
            return Err(Error::InvalidParams("state has zero norm".into()));
        }
        let mut occupations = Vec::new();
        let mut amplitudes = Vec::new();
        for (i, a) in psi.amplitudes().iter().enumerate() {
            let a = Complex::new(a.re.as_f64(), a.im.as_f64());
            if a.norm() > peak * 1e-15 {
                occupations.push(psi.space().occupation(i));
                amplitudes.push(a);
            }
        }
        let weights: Vec<f64> = amplitudes.iter().map(|a| a.norm()).collect();
        let l1: f64 = weights.iter().sum();
        let mut acc = 0.0;
        let cumulative = weights
            .iter()
            .map(|w| {
                acc += w / l1;
                acc
            })
            .collect();
        let n_modes = psi.space().n_modes();
        let max_n = (0..n_modes)
            .map(|m| occupations.iter().map(|o| o[m]).max().unwrap_or(0))
            .collect();
        Ok(Self {
            n_modes,
            occupations,
            amplitudes,
            weights,
            cumulative,
            l1,
            max_n,
        })
    }

    fn draw<R: Rng>(
        &self,
        rng: &mut R,
        alpha: &mut [Complex<f64>],
        tables: &mut [Vec<Complex<f64>>],
    ) -> Result<()> {
        loop {
            let u: f64 = rng.gen();
            let k = self
                .cumulative
                .partition_point(|c| *c <= u)
                .min(self.cumulative.len() - 1);
            for (m, a) in alpha.iter_mut().enumerate() {
                // |α|² ~ Gamma(n+1, 1) for the Fock state |n⟩
                let n = self.occupations[k][m];
                let mut r2 = 0.0;
                for _ in 0..=n {
                    r2 -= (1.0 - rng.gen::<f64>()).ln();
                }
                let theta = std::f64::consts::TAU * rng.gen::<f64>();
                *a = Complex::from_polar(r2.sqrt(), theta);
            }
            for m in 0..self.n_modes {
                // α*^k / √k!
                let t = &mut tables[m];
                t[0] = Complex::new(1.0, 0.0);
                let c = alpha[m].conj();
                for j in 1..=self.max_n[m] {
                    t[j] = t[j - 1] * c / (j as f64).sqrt();
                }
            }
            let mut overlap = Complex::new(0.0, 0.0);
            let mut envelope = 0.0;
            for ((occ, amp), w) in self
                .occupations
                .iter()
                .zip(&self.amplitudes)
                .zip(&self.weights)
            {
                let mut f = Complex::new(1.0, 0.0);
                for (m, &n) in occ.iter().enumerate() {
                    f *= tables[m][n];
                }
                overlap += amp * f;
                envelope += w * f.norm_sqr();
            }
            let ratio = overlap.norm_sqr() / (self.l1 * envelope);
            if ratio > 1.0 + 1e-9 {
                return Err(Error::QBoundFailure {
                    ratio,
                    region: format!("alpha = {alpha:?}"),
                });
            }
            if rng.gen::<f64>() < ratio {
                return Ok(());
            }
        }
    }
}

/// Simulated heterodyne record of `state`. Outcomes `α` are drawn from the
/// Husimi Q distribution and mapped to `x = √2 Re α`, `p = √2 Im α` (vacuum
/// variance 1 per quadrature); independent Gaussian noise of variance
/// `noise_photons[m]` is added per quadrature, then everything is scaled by
/// `√gain`. Blocks of [`SAMPLE_BLOCK`] samples use independent RNG streams,
/// so the output is independent of the thread count.
pub fn sample_heterodyne<T: Real>(
    state: &FockState<T>,
    n_samples: usize,
    gain: T,
    noise_photons: &[T],
    seed: u64,
) -> Result<QuadratureRecord<T>> {
    let n_modes = state.space().n_modes();
    if n_samples == 0 {
        return Err(Error::InvalidParams("n_samples must be at least 1".into()));
    }
    if noise_photons.len() != n_modes {
        return Err(Error::DimensionMismatch {
            expected: n_modes,
            found: noise_photons.len(),
        });
    }
    let sampler = QSampler::new(state)?;
    let sigmas: Vec<f64> = noise_photons
        .iter()
        .map(|n| n.as_f64().max(0.0).sqrt())
        .collect();
    let scale = gain.as_f64().sqrt();
    let n_blocks = n_samples.div_ceil(SAMPLE_BLOCK);
    let blocks: Vec<Result<Vec<T>>> = (0..n_blocks)
        .into_par_iter()
        .map(|b| {
            let count = SAMPLE_BLOCK.min(n_samples - b * SAMPLE_BLOCK);
            let mut rng = stream_rng(seed, b as u64);
            let mut alpha = vec![Complex::new(0.0, 0.0); n_modes];
            let mut tables: Vec<Vec<Complex<f64>>> = sampler
                .max_n
                .iter()
                .map(|&n| vec![Complex::new(0.0, 0.0); n + 1])
                .collect();
            let std = Normal::new(0.0, 1.0).unwrap();
            let mut out = Vec::with_capacity(count * 2 * n_modes);
            for _ in 0..count {
                sampler.draw(&mut rng, &mut alpha, &mut tables)?;
                for (a, s) in alpha.iter().zip(&sigmas) {
                    let x = std::f64::consts::SQRT_2 * a.re + s * std.sample(&mut rng);
                    let p = std::f64::consts::SQRT_2 * a.im + s * std.sample(&mut rng);
                    out.push(T::lit(x * scale));
                    out.push(T::lit(p * scale));
                }
            }
            Ok(out)
        })
        .collect();
    let mut samples = Vec::with_capacity(n_samples * 2 * n_modes);
    for b in blocks {
        samples.extend(b?);
    }
    QuadratureRecord::new(n_modes, samples, gain, noise_photons.to_vec())
}

/// Noise level reproducing a signal-to-noise ratio of 66 signal photons
/// against 35 noise photons for a state emitting `signal_photons`.
pub fn reference_noise_photons<T: Real>(signal_photons: T) -> T {
    signal_photons * T::lit(35.0 / 66.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FluxDensityEstimate<T> {
    /// Photons per second per hertz.
    pub value: T,
    pub std_error: T,
    /// Hz.
    pub bandwidth: T,
    /// Excess photon number per mode before the flux conversion.
    pub photons: T,
    /// Raw estimate was negative and has been clamped to zero.
    pub clamped: bool,
}

const FLUX_BATCHES: usize = 100;

/// Excess photon number `n = (var x + var p)/2 − 1 − noise` of one mode
/// converted to a flux density `F = κ n / B`. With the default bandwidth
/// `B = κ` (one cavity linewidth) `F` equals `n`.
pub fn flux_density<T: Real>(
    record: &QuadratureRecord<T>,
    mode: usize,
    kappa: T,
    bandwidth: Option<T>,
) -> Result<FluxDensityEstimate<T>> {
    let x = record.calibrated(QuadratureId::i(mode))?;
    let p = record.calibrated(QuadratureId::q(mode))?;
    if !(kappa > T::zero()) {
        return Err(Error::InvalidParams("kappa must be positive".into()));
    }
    let bandwidth = bandwidth.unwrap_or(kappa);
    let noise = record.noise_photons[mode];
    let excess = |xs: &[T], ps: &[T]| -> T {
        let n = T::from_usize_lossy(xs.len());
        let var = |v: &[T]| {
            let m = v.iter().copied().sum::<T>() / n;
            v.iter().map(|a| (*a - m).powi(2)).sum::<T>() / n
        };
        (var(xs) + var(ps)) / T::lit(2.0) - T::one() - noise
    };
    let photons = excess(&x, &p);
    let n = x.len();
    let std_error = if n >= 2 * FLUX_BATCHES {
        let size = n / FLUX_BATCHES;
        let vals: Vec<T> = (0..FLUX_BATCHES)
            .map(|b| excess(&x[b * size..(b + 1) * size], &p[b * size..(b + 1) * size]))
            .collect();
        let mean = vals.iter().copied().sum::<T>() / T::from_usize_lossy(FLUX_BATCHES);
        let var = vals.iter().map(|v| (*v - mean).powi(2)).sum::<T>()
            / T::from_usize_lossy(FLUX_BATCHES - 1);
        (var / T::from_usize_lossy(FLUX_BATCHES)).sqrt()
    } else {
        // Gaussian approximation for short records
        (T::one() + noise + photons.max(T::zero())) / T::from_usize_lossy(n).sqrt()
    };
    let raw = kappa * photons / bandwidth;
    let clamped = raw < T::zero();
    if clamped {
        log::warn!(
            "negative flux estimate {:e} clamped to zero; check noise calibration",
            raw.as_f64()
        );
    }
    Ok(FluxDensityEstimate {
        value: raw.max(T::zero()),
        std_error: kappa * std_error / bandwidth,
        bandwidth,
        photons,
        clamped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::{build_hamiltonian, evolve, q_function_moments, EvolveMethod, FockSpace};
    use crate::rwa::Process;

    const FREQS: [f64; 3] = [4.2, 6.1, 7.5];

    fn var(v: &[f64]) -> f64 {
        let m = v.iter().sum::<f64>() / v.len() as f64;
        v.iter().map(|a| (a - m).powi(2)).sum::<f64>() / v.len() as f64
    }

    #[test]
    fn quadrature_names_roundtrip() {
        for s in ["I1", "Q1", "I3", "Q2"] {
            assert_eq!(s.parse::<QuadratureId>().unwrap().to_string(), s);
        }
        assert!("X1".parse::<QuadratureId>().is_err());
        assert!("I0".parse::<QuadratureId>().is_err());
        assert_eq!("Q2".parse::<QuadratureId>().unwrap().column(), 3);
    }

    #[test]
    fn vacuum_variance_is_one() {
        let space = FockSpace::new(&[3]).unwrap();
        let rec =
            sample_heterodyne(&FockState::<f64>::vacuum(&space), 200_000, 1.0, &[0.0], 3).unwrap();
        let x = rec.calibrated(QuadratureId::i(0)).unwrap();
        // var of the sample variance for a unit Gaussian is 2/N
        assert!((var(&x) - 1.0).abs() < 5.0 * (2.0 / x.len() as f64).sqrt());
    }

    #[test]
    fn gain_scales_moments() {
        let space = FockSpace::new(&[10]).unwrap();
        let h =
            build_hamiltonian(&space, &Process::SingleMode.canonical(&FREQS, 1.0, -1.0)).unwrap();
        let st = evolve(&FockState::vacuum(&space), &h, 0.05, EvolveMethod::Stepper)
            .unwrap()
            .state;
        let a = sample_heterodyne(&st, 5000, 1.0, &[0.3], 9).unwrap();
        let b = sample_heterodyne(&st, 5000, 4.0, &[0.3], 9).unwrap();
        for (x, y) in a.samples.iter().zip(&b.samples) {
            assert!((2.0 * x - y).abs() < 1e-12 * (1.0 + y.abs()));
        }
        assert_eq!(
            a.calibrated(QuadratureId::q(0)).unwrap(),
            b.calibrated(QuadratureId::q(0)).unwrap()
        );
    }

    #[test]
    fn fock_state_moments_match_q_function() {
        // |2⟩ has a ring-shaped Q function with E|α|² = 3
        let space = FockSpace::new(&[4]).unwrap();
        let st = FockState::<f64>::basis(&space, &[2]).unwrap();
        let rec = sample_heterodyne(&st, 100_000, 1.0, &[0.0], 1).unwrap();
        let q = q_function_moments(&st).unwrap();
        let x = rec.calibrated(QuadratureId::i(0)).unwrap();
        let m2 = x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64;
        assert!((q.second[0] - 3.0).abs() < 1e-12);
        assert!((m2 - 3.0).abs() < 0.05);
    }

    #[test]
    fn sampling_is_thread_count_independent() {
        let space = FockSpace::new(&[6, 6]).unwrap();
        let h = build_hamiltonian(&space, &Process::TwoMode.canonical(&FREQS, 1.0, 0.0)).unwrap();
        let st = evolve(&FockState::vacuum(&space), &h, 0.2, EvolveMethod::Stepper)
            .unwrap()
            .state;
        let n = SAMPLE_BLOCK + 17;
        let one = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap();
        let a = one.install(|| sample_heterodyne(&st, n, 2.0, &[0.1, 0.2], 4).unwrap());
        let b = sample_heterodyne(&st, n, 2.0, &[0.1, 0.2], 4).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), n);
    }

    #[test]
    fn thermal_injection_recovers_occupation() {
        // thermal n̄ heterodyne: Gaussian with variance n̄ + 1 per quadrature
        let nbar: f64 = 0.8;
        let noise = 0.5;
        let dist = Normal::new(0.0, (nbar + 1.0 + noise).sqrt()).unwrap();
        let mut rng = stream_rng(5, 0);
        let samples: Vec<f64> = (0..400_000).map(|_| dist.sample(&mut rng)).collect();
        let rec = QuadratureRecord::new(1, samples, 1.0, vec![noise]).unwrap();
        let f = flux_density(&rec, 0, 2.0, None).unwrap();
        assert!(
            (f.value - nbar).abs() < 5.0 * f.std_error,
            "{} ± {}",
            f.value,
            f.std_error
        );
        let narrow = flux_density(&rec, 0, 2.0, Some(1.0)).unwrap();
        assert!((narrow.value - 2.0 * f.value).abs() < 1e-12);
    }

    #[test]
    fn vacuum_flux_is_zero_within_error() {
        let space = FockSpace::new(&[2]).unwrap();
        let rec =
            sample_heterodyne(&FockState::<f64>::vacuum(&space), 100_000, 3.0, &[1.5], 8).unwrap();
        let f = flux_density(&rec, 0, 1.0, None).unwrap();
        assert!(f.photons.abs() < 5.0 * f.std_error);
    }

    #[test]
    fn invalid_records_are_rejected() {
        assert!(QuadratureRecord::new(1, vec![1.0, 2.0, 3.0], 1.0, vec![0.0]).is_err());
        assert!(QuadratureRecord::new(1, vec![1.0, 2.0], 0.0, vec![0.0]).is_err());
        assert!(QuadratureRecord::new(2, vec![1.0; 4], 1.0, vec![0.0]).is_err());
        assert!(QuadratureRecord::<f64>::new(1, vec![], 1.0, vec![0.0]).is_err());
    }
}
