//! Skewness fingerprints: single-mode polar scans, three-quadrature
//! spherical scans and their correlator-based theory counterparts.

use std::f64::consts::{FRAC_PI_2, PI, TAU};
use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fock::{default_cutoff, evolve_vacuum, q_function_moments};
use crate::measurement::{QuadratureId, QuadratureRecord};
use crate::rwa::EffectiveHamiltonian;
use crate::scalar::Real;
use crate::stats::{MomentTensor, DEFAULT_BATCHES};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FingerprintKind {
    Polar1Mode,
    Spherical3Quad,
}

/// Spherical scan resolution: `n_theta` points on `[0, π]`, `n_phi` on
/// `[0, 2π)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScanGrid {
    pub n_theta: usize,
    pub n_phi: usize,
}

impl Default for ScanGrid {
    fn default() -> Self {
        Self {
            n_theta: 181,
            n_phi: 360,
        }
    }
}

impl ScanGrid {
    fn validate(&self) -> Result<()> {
        if self.n_theta < 2 || self.n_phi < 3 {
            return Err(Error::InvalidParams(
                "scan grid needs n_theta ≥ 2 and n_phi ≥ 3".into(),
            ));
        }
        Ok(())
    }

    fn thetas(&self) -> Vec<f64> {
        (0..self.n_theta)
            .map(|i| PI * i as f64 / (self.n_theta - 1) as f64)
            .collect()
    }
}

fn phi_grid(n: usize) -> Vec<f64> {
    (0..n).map(|i| TAU * i as f64 / n as f64).collect()
}

/// Skewness sampled over scan angles. Spherical values are stored θ-major:
/// `values[i_theta * n_phi + i_phi]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FingerprintMap<T> {
    pub kind: FingerprintKind,
    pub quadratures: Vec<String>,
    pub thetas: Vec<T>,
    pub phis: Vec<T>,
    pub values: Vec<T>,
    /// Empty for theory maps.
    pub std_errors: Vec<T>,
    /// Polar: `min|γ| / max|γ|`. Spherical: largest `|γ|` on the three
    /// coordinate planes over the global maximum.
    pub node_antinode_ratio: T,
}

impl<T: Real> FingerprintMap<T> {
    pub fn max_abs(&self) -> T {
        self.values.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }

    /// Values and errors scaled so that `max |γ| = 1`.
    pub fn normalized(&self) -> Self {
        let m = self.max_abs();
        let mut out = self.clone();
        if m > T::zero() {
            out.values.iter_mut().for_each(|v| *v /= m);
            out.std_errors.iter_mut().for_each(|v| *v /= m);
        }
        out
    }

    fn same_grid(&self, other: &Self) -> bool {
        let close = |a: &[T], b: &[T]| {
            a.len() == b.len()
                && a.iter()
                    .zip(b)
                    .all(|(x, y)| (*x - *y).abs() <= T::lit(1e-9))
        };
        self.kind == other.kind
            && close(&self.thetas, &other.thetas)
            && close(&self.phis, &other.phis)
    }

    /// Cosine similarity of the two value vectors over a common grid.
    pub fn cosine_similarity(&self, other: &Self) -> Result<T> {
        if !self.same_grid(other) {
            return Err(Error::GridMismatch);
        }
        let (mut ab, mut aa, mut bb) = (0.0, 0.0, 0.0);
        for (a, b) in self.values.iter().zip(&other.values) {
            let (a, b) = (a.as_f64(), b.as_f64());
            ab += a * b;
            aa += a * a;
            bb += b * b;
        }
        if aa == 0.0 || bb == 0.0 {
            return Ok(T::zero());
        }
        Ok(T::lit(ab / (aa * bb).sqrt()))
    }

    /// Linear interpolation of a polar map at angle `phi`.
    pub fn polar_value_at(&self, phi: T) -> T {
        let n = self.phis.len();
        let pos = phi.as_f64().rem_euclid(TAU) / TAU * n as f64;
        let i = (pos.floor() as usize) % n;
        let f = pos - pos.floor();
        let j = (i + 1) % n;
        T::lit(self.values[i].as_f64() * (1.0 - f) + self.values[j].as_f64() * f)
    }

    pub fn polar_error_at(&self, phi: T) -> T {
        let n = self.phis.len();
        if self.std_errors.is_empty() {
            return T::zero();
        }
        let pos = phi.as_f64().rem_euclid(TAU) / TAU * n as f64;
        let i = (pos.floor() as usize) % n;
        self.std_errors[i].max(self.std_errors[(i + 1) % n])
    }

    /// CSV with one row per grid point.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let has_err = !self.std_errors.is_empty();
        match self.kind {
            FingerprintKind::Polar1Mode => {
                writeln!(w, "phi,gamma{}", if has_err { ",std_error" } else { "" })?;
                for (i, phi) in self.phis.iter().enumerate() {
                    write!(w, "{:?},{:?}", phi.as_f64(), self.values[i].as_f64())?;
                    if has_err {
                        write!(w, ",{:?}", self.std_errors[i].as_f64())?;
                    }
                    writeln!(w)?;
                }
            }
            FingerprintKind::Spherical3Quad => {
                writeln!(
                    w,
                    "theta,phi,gamma{}",
                    if has_err { ",std_error" } else { "" }
                )?;
                let np = self.phis.len();
                for (it, theta) in self.thetas.iter().enumerate() {
                    for (ip, phi) in self.phis.iter().enumerate() {
                        let k = it * np + ip;
                        write!(
                            w,
                            "{:?},{:?},{:?}",
                            theta.as_f64(),
                            phi.as_f64(),
                            self.values[k].as_f64()
                        )?;
                        if has_err {
                            write!(w, ",{:?}", self.std_errors[k].as_f64())?;
                        }
                        writeln!(w)?;
                    }
                }
            }
        }
        Ok(())
    }
}

/// Direction of `A_φθ = cos φ cos θ A − sin φ B + cos φ sin θ C`.
pub fn spherical_direction(theta: f64, phi: f64) -> [f64; 3] {
    let (st, ct) = theta.sin_cos();
    let (sp, cp) = phi.sin_cos();
    [cp * ct, -sp, cp * st]
}

const PLANE_POINTS: usize = 720;

/// Unit directions on the AB (`C = 0`), BC (`A = 0`) and CA (`B = 0`)
/// coordinate planes.
fn plane_directions() -> Vec<[f64; 3]> {
    let mut out = Vec::with_capacity(3 * PLANE_POINTS);
    for k in 0..PLANE_POINTS {
        let t = PI * k as f64 / PLANE_POINTS as f64;
        out.push(spherical_direction(0.0, t));
        out.push(spherical_direction(FRAC_PI_2, t));
        out.push(spherical_direction(t, 0.0));
    }
    out
}

fn plane_ratio(global: f64, skew: impl Fn(&[f64]) -> f64) -> f64 {
    let plane = plane_directions()
        .iter()
        .map(|u| skew(u).abs())
        .fold(0.0, f64::max);
    let global = global.max(plane);
    if global > 0.0 {
        plane / global
    } else {
        0.0
    }
}

/// Skewness of `x_φ = x cos φ − p sin φ` for `n_angles` uniformly spaced
/// `φ ∈ [0, 2π)`, without any noise subtraction.
pub fn polar_scan<T: Real>(
    record: &QuadratureRecord<T>,
    mode: usize,
    n_angles: usize,
) -> Result<FingerprintMap<T>> {
    if n_angles < 3 {
        return Err(Error::InvalidParams(
            "polar scan needs at least 3 angles".into(),
        ));
    }
    let t = MomentTensor::from_record(
        record,
        &[QuadratureId::i(mode), QuadratureId::q(mode)],
        DEFAULT_BATCHES,
    )?;
    if !(t.covariance(0, 0) > 0.0 && t.covariance(1, 1) > 0.0) {
        return Err(Error::DegenerateVariance);
    }
    let phis = phi_grid(n_angles);
    let dir = |phi: f64| [phi.cos(), -phi.sin()];
    let values: Vec<f64> = phis
        .iter()
        .map(|p| t.directional_skewness_value(&dir(*p)))
        .collect();
    let std_errors: Vec<f64> = phis
        .iter()
        .map(|p| t.directional_skewness_error(&dir(*p)))
        .collect();
    Ok(polar_map(
        vec![
            QuadratureId::i(mode).to_string(),
            QuadratureId::q(mode).to_string(),
        ],
        phis,
        values,
        std_errors,
    ))
}

fn polar_map<T: Real>(
    labels: Vec<String>,
    phis: Vec<f64>,
    values: Vec<f64>,
    std_errors: Vec<f64>,
) -> FingerprintMap<T> {
    let max = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let min = values.iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
    FingerprintMap {
        kind: FingerprintKind::Polar1Mode,
        quadratures: labels,
        thetas: Vec::new(),
        phis: phis.into_iter().map(T::lit).collect(),
        values: values.into_iter().map(T::lit).collect(),
        std_errors: std_errors.into_iter().map(T::lit).collect(),
        node_antinode_ratio: T::lit(if max > 0.0 { min / max } else { 0.0 }),
    }
}

fn distinct(selection: &[QuadratureId; 3]) -> Result<()> {
    if selection[0] == selection[1] || selection[1] == selection[2] || selection[0] == selection[2]
    {
        return Err(Error::InvalidParams(
            "spherical scan needs three distinct quadratures".into(),
        ));
    }
    Ok(())
}

/// Skewness of `A_φθ` over the grid, contracted from one moment tensor.
pub fn spherical_scan<T: Real>(
    record: &QuadratureRecord<T>,
    selection: [QuadratureId; 3],
    grid: ScanGrid,
) -> Result<FingerprintMap<T>> {
    grid.validate()?;
    distinct(&selection)?;
    let t = MomentTensor::from_record(record, &selection, DEFAULT_BATCHES)?;
    if (0..3).any(|i| !(t.covariance(i, i) > 0.0)) {
        return Err(Error::DegenerateVariance);
    }
    let thetas = grid.thetas();
    let phis = phi_grid(grid.n_phi);
    let rows: Vec<(Vec<f64>, Vec<f64>)> = thetas
        .par_iter()
        .map(|&th| {
            phis.iter()
                .map(|&ph| {
                    let u = spherical_direction(th, ph);
                    (
                        t.directional_skewness_value(&u),
                        t.directional_skewness_error(&u),
                    )
                })
                .unzip()
        })
        .collect();
    let (values, std_errors): (Vec<f64>, Vec<f64>) =
        rows.into_iter()
            .fold((Vec::new(), Vec::new()), |(mut v, mut e), (rv, re)| {
                v.extend(rv);
                e.extend(re);
                (v, e)
            });
    let global = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let ratio = plane_ratio(global, |u| t.directional_skewness_value(u));
    Ok(FingerprintMap {
        kind: FingerprintKind::Spherical3Quad,
        quadratures: selection.iter().map(|q| q.to_string()).collect(),
        thetas: thetas.into_iter().map(T::lit).collect(),
        phis: phis.into_iter().map(T::lit).collect(),
        values: values.into_iter().map(T::lit).collect(),
        std_errors: std_errors.into_iter().map(T::lit).collect(),
        node_antinode_ratio: T::lit(ratio),
    })
}

/// Covariance and third central moments of selected heterodyne variables
/// of the vacuum evolved under `eff` for `duration`.
struct TheoryMoments {
    cov: Vec<f64>,
    third: Vec<f64>,
    d: usize,
}

impl TheoryMoments {
    fn new<T: Real>(
        eff: &EffectiveHamiltonian<T>,
        vars: &[QuadratureId],
        duration: T,
    ) -> Result<Self> {
        if eff.identify().is_none() {
            return Err(Error::UnsupportedHamiltonian(
                "theory fingerprints need one of the single-, two- or three-mode cubic Hamiltonians".into(),
            ));
        }
        for q in vars {
            if q.mode >= eff.n_modes {
                return Err(Error::ModeOutOfRange {
                    mode: q.mode,
                    n_modes: eff.n_modes,
                });
            }
        }
        let evolved = evolve_vacuum(eff, duration, default_cutoff(eff.n_modes))?;
        let q = q_function_moments(&evolved.state)?;
        let idx: Vec<usize> = vars.iter().map(|v| v.column()).collect();
        let d = idx.len();
        let mut cov = vec![0.0; d * d];
        let mut third = vec![0.0; d * d * d];
        for (a, &i) in idx.iter().enumerate() {
            for (b, &j) in idx.iter().enumerate() {
                cov[a * d + b] = q.covariance(i, j).as_f64();
                for (c, &k) in idx.iter().enumerate() {
                    third[(a * d + b) * d + c] = q.central_third(i, j, k).as_f64();
                }
            }
        }
        Ok(Self { cov, third, d })
    }

    fn skewness(&self, u: &[f64]) -> f64 {
        let d = self.d;
        let mut m2 = 0.0;
        let mut m3 = 0.0;
        for i in 0..d {
            for j in 0..d {
                m2 += u[i] * u[j] * self.cov[i * d + j];
                for k in 0..d {
                    m3 += u[i] * u[j] * u[k] * self.third[(i * d + j) * d + k];
                }
            }
        }
        m3 / m2.powf(1.5)
    }
}

/// Predicted spherical fingerprint of `eff`: the vacuum is evolved for
/// `duration` (in units of `1/|coefficient|`), the heterodyne covariance and
/// third-moment tensors are taken from its Husimi function, and the scan
/// direction is contracted analytically. Normalized to `max |γ| = 1`.
pub fn theory_fingerprint<T: Real>(
    eff: &EffectiveHamiltonian<T>,
    selection: [QuadratureId; 3],
    grid: ScanGrid,
    duration: T,
) -> Result<FingerprintMap<T>> {
    grid.validate()?;
    distinct(&selection)?;
    let tm = TheoryMoments::new(eff, &selection, duration)?;
    let thetas = grid.thetas();
    let phis = phi_grid(grid.n_phi);
    let values: Vec<f64> = thetas
        .iter()
        .flat_map(|&th| phis.iter().map(move |&ph| (th, ph)))
        .map(|(th, ph)| tm.skewness(&spherical_direction(th, ph)))
        .collect();
    let global = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let ratio = plane_ratio(global, |u| tm.skewness(u));
    let map = FingerprintMap {
        kind: FingerprintKind::Spherical3Quad,
        quadratures: selection.iter().map(|q| q.to_string()).collect(),
        thetas: thetas.into_iter().map(T::lit).collect(),
        phis: phis.into_iter().map(T::lit).collect(),
        values: values.into_iter().map(T::lit).collect(),
        std_errors: Vec::new(),
        node_antinode_ratio: T::lit(ratio),
    };
    Ok(map.normalized())
}

/// Predicted polar scan of one mode, normalized to `max |γ| = 1`.
pub fn theory_polar_scan<T: Real>(
    eff: &EffectiveHamiltonian<T>,
    mode: usize,
    n_angles: usize,
    duration: T,
) -> Result<FingerprintMap<T>> {
    if n_angles < 3 {
        return Err(Error::InvalidParams(
            "polar scan needs at least 3 angles".into(),
        ));
    }
    let tm = TheoryMoments::new(
        eff,
        &[QuadratureId::i(mode), QuadratureId::q(mode)],
        duration,
    )?;
    let phis = phi_grid(n_angles);
    let values = phis
        .iter()
        .map(|p| tm.skewness(&[p.cos(), -p.sin()]))
        .collect();
    let labels = vec![
        QuadratureId::i(mode).to_string(),
        QuadratureId::q(mode).to_string(),
    ];
    Ok(polar_map::<T>(labels, phis, values, Vec::new()).normalized())
}

/// Least-squares fit `γ(φ) ≈ A cos(3(φ − φ₀))` of a polar map.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ThreefoldFit {
    pub amplitude: f64,
    /// Antinode angle in `[0, 2π/3)`.
    pub phi0: f64,
    /// Rotation that carries the nodes onto `(2π/3)(n + 1/2)`.
    pub global_phase: f64,
    /// RMS of the residual relative to `A`.
    pub relative_residual: f64,
}

impl ThreefoldFit {
    /// Nodes at `(2π/3)(n + 1/2) + global_phase`, `n = 0, 1, 2`.
    pub fn nodes(&self) -> [f64; 3] {
        [0.5, 1.5, 2.5].map(|k| (TAU / 3.0 * k + self.global_phase).rem_euclid(TAU))
    }
}

pub fn threefold_fit<T: Real>(map: &FingerprintMap<T>) -> Result<ThreefoldFit> {
    if map.kind != FingerprintKind::Polar1Mode {
        return Err(Error::InvalidParams(
            "three-fold fit needs a polar map".into(),
        ));
    }
    let n = map.phis.len() as f64;
    let (mut a, mut b) = (0.0, 0.0);
    for (p, v) in map.phis.iter().zip(&map.values) {
        let (p, v) = (p.as_f64(), v.as_f64());
        a += v * (3.0 * p).cos();
        b += v * (3.0 * p).sin();
    }
    a *= 2.0 / n;
    b *= 2.0 / n;
    let amplitude = a.hypot(b);
    let phi0 = (b.atan2(a) / 3.0).rem_euclid(TAU / 3.0);
    let resid = map
        .phis
        .iter()
        .zip(&map.values)
        .map(|(p, v)| (v.as_f64() - amplitude * (3.0 * (p.as_f64() - phi0)).cos()).powi(2))
        .sum::<f64>();
    // antinode at φ₀ puts nodes at φ₀ + π/6 + kπ/3; the reference set starts at π/3
    let global_phase = (phi0 + PI / 6.0 - PI / 3.0).rem_euclid(TAU / 3.0);
    Ok(ThreefoldFit {
        amplitude,
        phi0,
        global_phase,
        relative_residual: if amplitude > 0.0 {
            (resid / n).sqrt() / amplitude
        } else {
            f64::INFINITY
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::stream_rng;
    use crate::rwa::Process;
    use rand_distr::{Distribution, Normal};

    const FREQS: [f64; 3] = [4.2, 6.1, 7.5];

    fn noise_record(n_modes: usize, n: usize, seed: u64) -> QuadratureRecord<f64> {
        let mut rng = stream_rng(seed, 0);
        let d = Normal::new(0.0, 1.0).unwrap();
        let s = (0..n * 2 * n_modes).map(|_| d.sample(&mut rng)).collect();
        QuadratureRecord::new(n_modes, s, 1.0, vec![0.0; n_modes]).unwrap()
    }

    #[test]
    fn gaussian_polar_scan_is_flat() {
        let rec = noise_record(1, 200_000, 2);
        let map = polar_scan(&rec, 0, 72).unwrap();
        for (v, e) in map.values.iter().zip(&map.std_errors) {
            assert!(v.abs() < 5.0 * e);
        }
    }

    #[test]
    fn polar_scan_is_odd_under_half_turn() {
        let mut rec = noise_record(1, 20_000, 3);
        rec.samples.iter_mut().for_each(|v| *v = v.exp());
        let map = polar_scan(&rec, 0, 36).unwrap();
        for i in 0..18 {
            assert!((map.values[i] + map.values[i + 18]).abs() < 1e-9);
        }
    }

    #[test]
    fn spherical_origin_is_first_quadrature() {
        let mut rec = noise_record(3, 20_000, 4);
        rec.samples.iter_mut().step_by(6).for_each(|v| *v = v.exp());
        let sel = [QuadratureId::i(0), QuadratureId::i(1), QuadratureId::i(2)];
        let map = spherical_scan(
            &rec,
            sel,
            ScanGrid {
                n_theta: 5,
                n_phi: 8,
            },
        )
        .unwrap();
        let direct = crate::stats::skewness(&rec.calibrated(sel[0]).unwrap()).unwrap();
        assert!((map.values[0] - direct.value).abs() < 1e-9);
    }

    #[test]
    fn grid_mismatch_is_reported() {
        let eff = Process::ThreeMode.canonical(&FREQS, 1.0, 0.0);
        let sel = [QuadratureId::i(0), QuadratureId::i(1), QuadratureId::i(2)];
        let a = theory_fingerprint(
            &eff,
            sel,
            ScanGrid {
                n_theta: 5,
                n_phi: 8,
            },
            0.1,
        )
        .unwrap();
        let b = theory_fingerprint(
            &eff,
            sel,
            ScanGrid {
                n_theta: 7,
                n_phi: 8,
            },
            0.1,
        )
        .unwrap();
        assert!(matches!(a.cosine_similarity(&b), Err(Error::GridMismatch)));
        assert!((a.cosine_similarity(&a).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn three_mode_theory_vanishes_on_planes() {
        let eff = Process::ThreeMode.canonical(&FREQS, 1.0, -FRAC_PI_2);
        let sel = [QuadratureId::i(0), QuadratureId::i(1), QuadratureId::i(2)];
        let map = theory_fingerprint(
            &eff,
            sel,
            ScanGrid {
                n_theta: 19,
                n_phi: 36,
            },
            0.2,
        )
        .unwrap();
        assert!(map.node_antinode_ratio < 1e-10);
        assert!((map.max_abs() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn two_mode_theory_nodes_in_ca_plane() {
        let eff = Process::TwoMode.canonical(&FREQS, 1.0, -FRAC_PI_2);
        let sel = [QuadratureId::i(0), QuadratureId::q(0), QuadratureId::i(1)];
        let grid = ScanGrid {
            n_theta: 181,
            n_phi: 8,
        };
        let map = theory_fingerprint(&eff, sel, grid, 0.2).unwrap();
        // φ = 0 column is the CA plane: cos θ I1 + sin θ I2
        let ca: Vec<f64> = (0..181).map(|i| map.values[i * 8]).collect();
        assert!(ca[0].abs() < 1e-10 && ca[90].abs() < 1e-10);
        let peak = ca
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
            .unwrap()
            .0;
        let near = |deg: i64| (peak as i64 - deg).abs() <= 12;
        assert!(near(45) || near(135), "peak at {peak} deg");
    }

    #[test]
    fn single_mode_theory_is_threefold() {
        let eff = Process::SingleMode.canonical(&FREQS, 1.0, -FRAC_PI_2);
        let map = theory_polar_scan(&eff, 0, 360, 0.05).unwrap();
        let fit = threefold_fit(&map).unwrap();
        assert!(fit.relative_residual < 1e-6, "{fit:?}");
        for k in 0..240 {
            assert!((map.values[k] - map.values[k + 120]).abs() < 1e-12);
        }
        for node in fit.nodes() {
            assert!(map.polar_value_at(node).abs() < 2e-3);
        }
    }

    #[test]
    fn unsupported_hamiltonian() {
        let mut eff = Process::ThreeMode.canonical(&FREQS, 1.0, 0.0);
        eff.terms.clear();
        let sel = [QuadratureId::i(0), QuadratureId::i(1), QuadratureId::i(2)];
        assert!(matches!(
            theory_fingerprint(&eff, sel, ScanGrid::default(), 0.1),
            Err(Error::UnsupportedHamiltonian(_))
        ));
    }
}
