use num_complex::Complex;
use num_traits::Zero;

use crate::error::{Error, Result};
use crate::fock::dense::tridiagonal_eigen;
use crate::fock::{FockState, ModeOperator};
use crate::scalar::{tol, Real};

/// Top-level population above which a run is reported as leaking out of
/// the truncated space.
pub const LEAK_THRESHOLD: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvolveMethod {
    /// Dense `exp(−iHt)` by scaling and squaring. Reference only.
    ExpmOracle,
    /// Adaptive-step Lanczos propagator.
    Stepper,
}

#[derive(Debug, Clone)]
pub struct Evolved<T> {
    pub state: FockState<T>,
    pub top_level_population: T,
    /// Number of Lanczos steps taken (0 for the oracle).
    pub steps: usize,
}

impl<T: Real> Evolved<T> {
    pub fn leaked(&self) -> bool {
        self.top_level_population > T::lit(LEAK_THRESHOLD)
    }
}

pub(crate) fn check_inputs<T: Real>(
    state: &FockState<T>,
    h: &ModeOperator<T>,
    duration: T,
) -> Result<()> {
    if state.space() != &h.space {
        return Err(Error::DimensionMismatch {
            expected: h.space.dim(),
            found: state.space().dim(),
        });
    }
    if !(duration >= T::zero()) || !duration.is_finite() {
        return Err(Error::InvalidParams(
            "duration must be finite and non-negative".into(),
        ));
    }
    Ok(())
}

/// Unitary evolution `exp(−iHt)|ψ⟩` (ħ = 1).
pub fn evolve<T: Real>(
    state: &FockState<T>,
    hamiltonian: &ModeOperator<T>,
    duration: T,
    method: EvolveMethod,
) -> Result<Evolved<T>> {
    check_inputs(state, hamiltonian, duration)?;
    let defect = hamiltonian.matrix.hermiticity_defect();
    if defect > tol::<T>(1e-12) * (T::one() + hamiltonian.matrix.max_abs()) {
        return Err(Error::NotHermitian {
            deviation: defect.as_f64(),
        });
    }
    let (amplitudes, steps) = if duration == T::zero() {
        (state.amplitudes().to_vec(), 0)
    } else {
        match method {
            EvolveMethod::ExpmOracle => {
                let gen = hamiltonian
                    .matrix
                    .to_dense()
                    .scaled(Complex::new(T::zero(), -duration));
                (gen.expm().matvec(state.amplitudes()), 0)
            }
            EvolveMethod::Stepper => {
                lanczos_propagate(hamiltonian, state.amplitudes(), duration, tol::<T>(1e-13))
            }
        }
    };
    let state = FockState::from_amplitudes(state.space(), amplitudes)?;
    let top = state.top_level_population();
    let out = Evolved {
        state,
        top_level_population: top,
        steps,
    };
    if out.leaked() {
        log::debug!("truncation leak: top-level population {:e}", top.as_f64());
    }
    Ok(out)
}

const KRYLOV_DIM: usize = 30;

fn dot<T: Real>(a: &[Complex<T>], b: &[Complex<T>]) -> Complex<T> {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn norm<T: Real>(a: &[Complex<T>]) -> T {
    a.iter().map(|x| x.norm_sqr()).sum::<T>().sqrt()
}

/// Propagate under Hermitian `h` with Krylov steps of adaptive length.
///
/// Each step builds an orthonormal Lanczos basis (full reorthogonalisation),
/// diagonalises the projected tridiagonal matrix and accepts the largest
/// step whose residual estimate `β_m |[e^{−iτT}]_{m−1,0}|` stays below
/// `tolerance · τ / t`.
fn lanczos_propagate<T: Real>(
    h: &ModeOperator<T>,
    psi0: &[Complex<T>],
    duration: T,
    tolerance: T,
) -> (Vec<Complex<T>>, usize) {
    let dim = psi0.len();
    let mut psi = psi0.to_vec();
    let mut t = T::zero();
    let mut tau = duration;
    let mut steps = 0;
    let mut w = vec![Complex::zero(); dim];
    while t < duration {
        let beta0 = norm(&psi);
        if beta0 == T::zero() {
            break;
        }
        let m_max = KRYLOV_DIM.min(dim);
        let mut basis: Vec<Vec<Complex<T>>> = vec![psi.iter().map(|x| x / beta0).collect()];
        let mut alphas: Vec<T> = Vec::new();
        let mut betas: Vec<T> = Vec::new();
        let mut residual_beta = T::zero();
        for j in 0..m_max {
            h.matrix.matvec_into(&basis[j], &mut w);
            alphas.push(dot(&basis[j], &w).re);
            for _pass in 0..2 {
                for v in &basis {
                    let c = dot(v, &w);
                    for (wi, vi) in w.iter_mut().zip(v) {
                        *wi -= c * vi;
                    }
                }
            }
            let b = norm(&w);
            if j + 1 == m_max {
                residual_beta = b;
                break;
            }
            if b <= T::epsilon() * T::lit(1e3) * (T::one() + alphas[j].abs()) {
                // invariant subspace: the projection is exact
                residual_beta = T::zero();
                break;
            }
            betas.push(b);
            basis.push(w.iter().map(|x| x / b).collect());
        }
        let m = alphas.len();
        let (evals, evecs) = tridiagonal_eigen(&alphas, &betas);
        // coefficients of exp(−iτT) e_1 in the Lanczos basis
        let propagate = |tau: T| -> Vec<Complex<T>> {
            let weights: Vec<Complex<T>> = (0..m)
                .map(|k| Complex::from_polar(evecs[k], -tau * evals[k]))
                .collect();
            (0..m)
                .map(|i| (0..m).map(|k| weights[k] * evecs[i * m + k]).sum())
                .collect()
        };
        let remaining = duration - t;
        tau = tau.min(remaining);
        let coeffs = loop {
            let coeffs = propagate(tau);
            let err = residual_beta * coeffs[m - 1].norm() * beta0;
            // floor at roundoff so tiny steps are never demanded
            let budget = (tolerance * tau / duration).max(T::epsilon() * T::lit(64.0) * beta0);
            let at_roundoff = coeffs[m - 1].norm() <= T::epsilon() * T::from_usize_lossy(16 * m);
            if err <= budget || at_roundoff || tau <= remaining * T::epsilon() {
                break coeffs;
            }
            let shrink = (budget / err).powf(T::one() / T::from_usize_lossy(m)) * T::lit(0.9);
            tau *= shrink.min(T::lit(0.5)).max(T::lit(0.05));
        };
        let mut next = vec![Complex::zero(); dim];
        for (c, v) in coeffs.iter().zip(&basis) {
            for (n, vi) in next.iter_mut().zip(v) {
                *n += c * vi * beta0;
            }
        }
        psi = next;
        t += tau;
        steps += 1;
        // allow the step to grow again after an easy step
        tau *= T::lit(1.5);
    }
    (psi, steps)
}
