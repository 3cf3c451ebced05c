//! Asymmetric-SQUID device model: flux-dependent Josephson energy, the
//! effective cavity flux offset, the Taylor expansion of the SQUID potential
//! in cavity phase, and the per-order coupling constants derived from it.
//!
//! Flux is measured in units of the flux quantum. The cavity phase is
//! `theta = 2π Φ_cav / Φ0 = Σ_i φ_i (a_i + a_i†)` where `φ_i` is the
//! zero-point phase amplitude of mode `i`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Static device description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(
    deny_unknown_fields,
    default,
    bound(deserialize = "T: Real + Deserialize<'de>")
)]
pub struct DeviceParams<T> {
    /// Josephson energy of junction 1 (frequency units).
    pub ej1: T,
    /// Josephson energy of junction 2 (frequency units).
    pub ej2: T,
    /// Junction area ratio A2/A1. Only used as a consistency check against
    /// `ej2 / ej1`.
    pub area_ratio: T,
    /// DC flux bias in flux quanta, interpreted modulo 1.
    pub flux_bias: T,
    /// |β_p|, classical pump amplitude (parametric approximation).
    pub pump_amplitude: T,
    /// arg β_p in radians.
    pub pump_phase: T,
    /// Mode frequencies in GHz, strictly increasing.
    pub mode_freqs: Vec<T>,
    /// Loaded quality factor per mode.
    pub quality_factors: Vec<T>,
    /// Line impedance in ohms (metadata).
    pub impedance: T,
    /// Zero-point phase amplitude per mode.
    pub zero_point_amplitudes: Vec<T>,
}

impl<T: Real> Default for DeviceParams<T> {
    /// Junction energies in the 1:1.7 area ratio, quarter-flux bias and the
    /// three cavity modes at 4.2, 6.1 and 7.5 GHz with Q = 7000.
    fn default() -> Self {
        Self {
            ej1: T::one(),
            ej2: T::lit(1.7),
            area_ratio: T::lit(1.7),
            flux_bias: T::lit(0.25),
            pump_amplitude: T::one(),
            pump_phase: T::zero(),
            mode_freqs: vec![T::lit(4.2), T::lit(6.1), T::lit(7.5)],
            quality_factors: vec![T::lit(7000.0); 3],
            impedance: T::lit(50.0),
            zero_point_amplitudes: vec![T::lit(0.1); 3],
        }
    }
}

impl<T: Real> DeviceParams<T> {
    /// Symmetric SQUID with both junctions at `ej`.
    pub fn symmetric(ej: T) -> Self {
        Self {
            ej1: ej,
            ej2: ej,
            area_ratio: T::one(),
            ..Self::default()
        }
    }

    pub fn n_modes(&self) -> usize {
        self.mode_freqs.len()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParams(msg));
        let scalars = [
            ("ej1", self.ej1),
            ("ej2", self.ej2),
            ("area_ratio", self.area_ratio),
            ("flux_bias", self.flux_bias),
            ("pump_amplitude", self.pump_amplitude),
            ("pump_phase", self.pump_phase),
            ("impedance", self.impedance),
        ];
        if let Some((name, _)) = scalars.iter().find(|(_, v)| !v.is_finite()) {
            return bad(format!("{name} must be finite"));
        }
        if self.ej1 <= T::zero() || self.ej2 <= T::zero() {
            return bad("junction energies must be positive".into());
        }
        if self.pump_amplitude < T::zero() {
            return bad("pump_amplitude must be non-negative".into());
        }
        let n = self.n_modes();
        if !(1..=3).contains(&n) {
            return bad(format!("1 to 3 modes supported, got {n}"));
        }
        if self.quality_factors.len() != n || self.zero_point_amplitudes.len() != n {
            return bad(format!(
                "mode_freqs, quality_factors and zero_point_amplitudes need {n} entries each"
            ));
        }
        if self
            .mode_freqs
            .iter()
            .any(|f| !f.is_finite() || *f <= T::zero())
        {
            return bad("mode frequencies must be positive".into());
        }
        if self.mode_freqs.windows(2).any(|w| w[1] <= w[0]) {
            return bad("mode frequencies must be strictly increasing".into());
        }
        if self
            .quality_factors
            .iter()
            .any(|q| !q.is_finite() || *q <= T::zero())
        {
            return bad("quality factors must be positive".into());
        }
        if self
            .zero_point_amplitudes
            .iter()
            .any(|z| !z.is_finite() || *z < T::zero())
        {
            return bad("zero-point amplitudes must be non-negative".into());
        }
        Ok(())
    }

    /// Energy decay rate per mode, κ_i = 2π f_i / Q_i (angular, in 1/ns for GHz input).
    pub fn kappas(&self) -> Vec<T> {
        self.mode_freqs
            .iter()
            .zip(&self.quality_factors)
            .map(|(&f, &q)| T::TAU() * f / q)
            .collect()
    }

    /// Relative disagreement between `ej2 / ej1` and the design area ratio.
    pub fn area_ratio_mismatch(&self) -> T {
        ((self.ej2 / self.ej1) - self.area_ratio).abs() / self.area_ratio.abs()
    }
}

/// Reduce a flux (in flux quanta) into `[-1/2, 1/2)`.
pub fn reduce_flux<T: Real>(flux: T) -> T {
    let half = T::lit(0.5);
    let r = flux - (flux + half).floor();
    if r >= half {
        r - T::one()
    } else {
        r
    }
}

/// `E_J(Φ) = sqrt(E1² + E2² + 2 E1 E2 cos(2π Φ))`.
pub fn effective_josephson_energy<T: Real>(params: &DeviceParams<T>, ext_flux: T) -> T {
    let (e1, e2) = (params.ej1, params.ej2);
    let cross = T::lit(2.0) * e1 * e2 * (T::TAU() * ext_flux).cos();
    // cos rounding can push the radicand a hair below zero at full frustration
    (e1 * e1 + e2 * e2 + cross).max(T::zero()).sqrt()
}

/// Effective cavity flux offset together with a flag marking the tangent
/// singularity at half-integer flux.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FluxOffset<T> {
    pub alpha: T,
    pub degenerate: bool,
}

/// `α = arctan[tan(π Φ) (E1 − E2)/(E1 + E2)]`, principal branch.
///
/// At `Φ = n + 1/2` the left limit `sign(E1 − E2)·π/2` is returned with
/// `degenerate` set.
pub fn effective_offset_alpha<T: Real>(params: &DeviceParams<T>, ext_flux: T) -> FluxOffset<T> {
    let asym = (params.ej1 - params.ej2) / (params.ej1 + params.ej2);
    if asym == T::zero() {
        return FluxOffset {
            alpha: T::zero(),
            degenerate: false,
        };
    }
    let x = reduce_flux(ext_flux);
    let arg = T::PI() * x;
    if arg.cos().abs() <= T::epsilon() * T::lit(16.0) {
        return FluxOffset {
            alpha: asym.signum() * T::FRAC_PI_2(),
            degenerate: true,
        };
    }
    FluxOffset {
        alpha: (arg.tan() * asym).atan(),
        degenerate: false,
    }
}

/// α along a flux sweep, unwrapped so consecutive values never jump by more
/// than π/2. The first point keeps its principal value.
pub fn unwrap_alpha_sweep<T: Real>(params: &DeviceParams<T>, fluxes: &[T]) -> Vec<T> {
    let mut out: Vec<T> = Vec::with_capacity(fluxes.len());
    let mut shift = T::zero();
    for &f in fluxes {
        let raw = effective_offset_alpha(params, f).alpha;
        if let Some(&prev) = out.last() {
            let mut candidate = raw + shift;
            while candidate - prev > T::FRAC_PI_2() {
                shift -= T::PI();
                candidate = raw + shift;
            }
            while prev - candidate > T::FRAC_PI_2() {
                shift += T::PI();
                candidate = raw + shift;
            }
        }
        out.push(raw + shift);
    }
    out
}

/// Taylor coefficients of `E_J cos(θ − α)` around `θ = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct PotentialExpansion<T> {
    /// `c_k` for `k = 0..=k_max`.
    pub coefficients: Vec<T>,
    pub alpha: T,
    pub josephson_energy: T,
}

impl<T: Real> PotentialExpansion<T> {
    pub fn order(&self) -> usize {
        self.coefficients.len() - 1
    }
}

/// Expand the SQUID potential at the device's DC bias up to `k_max`.
///
/// The bias is first reduced into `[-1/2, 1/2)`, the gauge in which the
/// principal-branch α and a non-negative `E_J` describe the junction pair
/// exactly.
pub fn expand_potential<T: Real>(
    params: &DeviceParams<T>,
    k_max: usize,
) -> Result<PotentialExpansion<T>> {
    if k_max < 3 {
        return Err(Error::InvalidParams(format!(
            "k_max must be at least 3, got {k_max}"
        )));
    }
    let bias = reduce_flux(params.flux_bias);
    let ej = effective_josephson_energy(params, bias);
    let alpha = effective_offset_alpha(params, bias).alpha;
    let (s, c) = alpha.sin_cos();
    let mut coefficients = Vec::with_capacity(k_max + 1);
    let mut factorial = T::one();
    for k in 0..=k_max {
        if k > 0 {
            factorial *= T::from_usize_lossy(k);
        }
        // k-th derivative of cos(θ − α) at θ = 0
        let derivative = match k % 4 {
            0 => c,
            1 => s,
            2 => -c,
            _ => -s,
        };
        coefficients.push(ej * derivative / factorial);
    }
    Ok(PotentialExpansion {
        coefficients,
        alpha,
        josephson_energy: ej,
    })
}

/// Coupling constants per expansion order.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingConstants<T> {
    /// `g_k = c_k · φ̄^k` with `φ̄` the geometric mean of the zero-point
    /// amplitudes. For three modes `g_3` is exactly the prefactor of
    /// `a1 a2 a3`-type monomials before the multinomial count.
    pub by_order: Vec<T>,
    pub expansion_coefficients: Vec<T>,
    pub zero_point_amplitudes: Vec<T>,
    pub convention: &'static str,
}

impl<T: Real> CouplingConstants<T> {
    /// Prefactor `c_k Π φ_i^{n_i}` of a monomial with `n_i` ladder operators
    /// on mode `i` (`k = Σ n_i`), excluding the multinomial count.
    pub fn monomial(&self, per_mode_degree: &[u32]) -> T {
        let k: u32 = per_mode_degree.iter().sum();
        let Some(&ck) = self.expansion_coefficients.get(k as usize) else {
            return T::zero();
        };
        per_mode_degree
            .iter()
            .zip(&self.zero_point_amplitudes)
            .fold(ck, |acc, (&n, &phi)| acc * phi.powi(n as i32))
    }
}

pub fn coupling_constants<T: Real>(
    expansion: &PotentialExpansion<T>,
    zero_point_amplitudes: &[T],
) -> Result<CouplingConstants<T>> {
    if zero_point_amplitudes.is_empty() {
        return Err(Error::InvalidParams(
            "need at least one zero-point amplitude".into(),
        ));
    }
    if zero_point_amplitudes
        .iter()
        .any(|z| !z.is_finite() || *z < T::zero())
    {
        return Err(Error::InvalidParams(
            "zero-point amplitudes must be non-negative".into(),
        ));
    }
    let m = T::from_usize_lossy(zero_point_amplitudes.len());
    let mean = if zero_point_amplitudes.iter().any(|z| *z == T::zero()) {
        T::zero()
    } else {
        (zero_point_amplitudes.iter().map(|z| z.ln()).sum::<T>() / m).exp()
    };
    let by_order = expansion
        .coefficients
        .iter()
        .enumerate()
        .map(|(k, &c)| c * mean.powi(k as i32))
        .collect();
    Ok(CouplingConstants {
        by_order,
        expansion_coefficients: expansion.coefficients.clone(),
        zero_point_amplitudes: zero_point_amplitudes.to_vec(),
        convention: "g_k = c_k * (geometric mean of zero-point amplitudes)^k; theta = sum_i phi_i (a_i + a_i^dag)",
    })
}
