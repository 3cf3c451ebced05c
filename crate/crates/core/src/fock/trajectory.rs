//! Quantum-jump unravelling of single-photon loss.

use num_complex::Complex;
use num_traits::Zero;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fock::evolve::check_inputs;
use crate::fock::sparse::CsrMatrix;
use crate::fock::{annihilation, evolve, number, EvolveMethod, FockState, ModeOperator};
use crate::scalar::Real;

/// Integrator settings for the non-Hermitian propagation between jumps.
#[derive(Debug, Clone, Copy)]
pub struct LossyOptions {
    pub rtol: f64,
    pub atol: f64,
}

impl Default for LossyOptions {
    fn default() -> Self {
        Self {
            rtol: 1e-9,
            atol: 1e-11,
        }
    }
}

/// Independent RNG stream for trajectory `index` of a run seeded with `seed`.
pub(crate) fn stream_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Ensemble of `n_trajectories` normalised final states under
/// `H − (i/2) Σ κ_i a_i† a_i` with jumps `√κ_i a_i`.
///
/// Trajectory `k` draws from its own ChaCha stream, so results do not depend
/// on how trajectories are scheduled across threads.
pub fn evolve_lossy<T: Real>(
    state: &FockState<T>,
    hamiltonian: &ModeOperator<T>,
    kappas: &[T],
    duration: T,
    n_trajectories: usize,
    seed: u64,
) -> Result<Vec<FockState<T>>> {
    check_inputs(state, hamiltonian, duration)?;
    let space = state.space();
    if kappas.len() != space.n_modes() {
        return Err(Error::DimensionMismatch {
            expected: space.n_modes(),
            found: kappas.len(),
        });
    }
    if kappas.iter().any(|k| !(*k >= T::zero())) {
        return Err(Error::InvalidParams(
            "loss rates must be non-negative".into(),
        ));
    }
    if kappas.iter().all(|k| *k == T::zero()) {
        let out = evolve(state, hamiltonian, duration, EvolveMethod::Stepper)?.state;
        return Ok(vec![out; n_trajectories]);
    }
    let jumps: Vec<(T, CsrMatrix<T>)> = kappas
        .iter()
        .enumerate()
        .filter(|(_, k)| **k > T::zero())
        .map(|(i, k)| Ok((*k, annihilation::<T>(space, i)?.matrix)))
        .collect::<Result<_>>()?;
    let mut h_eff = hamiltonian.matrix.clone();
    for (i, k) in kappas.iter().enumerate() {
        if *k > T::zero() {
            let n = number::<T>(space, i)?.matrix;
            h_eff = h_eff.add(&n.scale(Complex::new(T::zero(), -*k / T::lit(2.0))));
        }
    }
    let psi0 = state.normalized();
    let runs: Vec<Vec<Complex<T>>> = (0..n_trajectories as u64)
        .into_par_iter()
        .map(|k| {
            run_trajectory(
                &h_eff,
                &jumps,
                psi0.amplitudes(),
                duration,
                &mut stream_rng(seed, k),
                LossyOptions::default(),
            )
        })
        .collect();
    runs.into_iter()
        .map(|a| FockState::from_amplitudes(space, a))
        .collect()
}

fn norm_sqr<T: Real>(v: &[Complex<T>]) -> T {
    v.iter().map(|x| x.norm_sqr()).sum()
}

fn run_trajectory<T: Real>(
    h_eff: &CsrMatrix<T>,
    jumps: &[(T, CsrMatrix<T>)],
    psi0: &[Complex<T>],
    duration: T,
    rng: &mut ChaCha8Rng,
    opts: LossyOptions,
) -> Vec<Complex<T>> {
    let mut psi = psi0.to_vec();
    let mut t = T::zero();
    let mut threshold = T::lit(rng.gen::<f64>());
    let mut h = (duration / T::lit(100.0)).max(T::epsilon());
    let mut stepper = Dopri::new(h_eff, psi.len());
    while t < duration {
        let step = h.min(duration - t);
        let (next, err) = stepper.step(&psi, step, opts);
        if err > T::one() {
            h = step * (T::lit(0.9) * err.powf(T::lit(-0.2))).max(T::lit(0.2));
            continue;
        }
        if norm_sqr(&next) >= threshold {
            psi = next;
            t += step;
            h = step * (T::lit(0.9) * err.max(T::lit(1e-10)).powf(T::lit(-0.2))).min(T::lit(5.0));
            continue;
        }
        // jump happens inside this step: bisect on the sub-step length
        let (mut lo, mut hi) = (T::zero(), step);
        let mut at_jump = psi.clone();
        for _ in 0..60 {
            let mid = (lo + hi) / T::lit(2.0);
            let (trial, _) = stepper.step(&psi, mid, opts);
            if norm_sqr(&trial) >= threshold {
                lo = mid;
            } else {
                hi = mid;
                at_jump = trial;
            }
            if hi - lo <= step * T::lit(1e-12) {
                break;
            }
        }
        t += hi;
        psi = apply_jump(jumps, &at_jump, rng);
        threshold = T::lit(rng.gen::<f64>());
    }
    let n = norm_sqr(&psi).sqrt();
    psi.iter().map(|x| x / n).collect()
}

fn apply_jump<T: Real>(
    jumps: &[(T, CsrMatrix<T>)],
    psi: &[Complex<T>],
    rng: &mut ChaCha8Rng,
) -> Vec<Complex<T>> {
    let candidates: Vec<(T, Vec<Complex<T>>)> = jumps
        .iter()
        .map(|(k, a)| {
            let v = a.matvec(psi);
            (*k * norm_sqr(&v), v)
        })
        .collect();
    let total: T = candidates.iter().map(|(w, _)| *w).sum();
    let pick = T::lit(rng.gen::<f64>()) * total;
    let mut acc = T::zero();
    let mut chosen = candidates.len() - 1;
    for (i, (w, _)) in candidates.iter().enumerate() {
        acc += *w;
        if pick < acc {
            chosen = i;
            break;
        }
    }
    let v = &candidates[chosen].1;
    let n = norm_sqr(v).sqrt();
    if n == T::zero() {
        return psi.to_vec();
    }
    v.iter().map(|x| x / n).collect()
}

/// Dormand–Prince 5(4) step for `ψ' = −i H ψ`.
struct Dopri<'a, T> {
    h: &'a CsrMatrix<T>,
    k: Vec<Vec<Complex<T>>>,
    tmp: Vec<Complex<T>>,
}

const A: [[f64; 6]; 6] = [
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
const B5: [f64; 7] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
    0.0,
];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

impl<'a, T: Real> Dopri<'a, T> {
    fn new(h: &'a CsrMatrix<T>, dim: usize) -> Self {
        Self {
            h,
            k: vec![vec![Complex::zero(); dim]; 7],
            tmp: vec![Complex::zero(); dim],
        }
    }

    fn rhs(h: &CsrMatrix<T>, x: &[Complex<T>], out: &mut [Complex<T>]) {
        h.matvec_into(x, out);
        let mi = Complex::new(T::zero(), -T::one());
        for o in out.iter_mut() {
            *o *= mi;
        }
    }

    /// Returns the 5th-order solution and the scaled error norm.
    fn step(&mut self, psi: &[Complex<T>], dt: T, opts: LossyOptions) -> (Vec<Complex<T>>, T) {
        let dim = psi.len();
        Self::rhs(self.h, psi, &mut self.k[0]);
        for stage in 1..7 {
            for i in 0..dim {
                let mut acc = psi[i];
                for (j, &a) in A[stage - 1].iter().enumerate().take(stage) {
                    if a != 0.0 {
                        acc += self.k[j][i] * (dt * T::lit(a));
                    }
                }
                self.tmp[i] = acc;
            }
            let (head, tail) = self.k.split_at_mut(stage);
            let _ = head;
            Self::rhs(self.h, &self.tmp, &mut tail[0]);
        }
        let mut next = vec![Complex::zero(); dim];
        let mut err = T::zero();
        let (atol, rtol) = (T::lit(opts.atol), T::lit(opts.rtol));
        for i in 0..dim {
            let mut hi = psi[i];
            let mut e: Complex<T> = Complex::zero();
            for s in 0..7 {
                hi += self.k[s][i] * (dt * T::lit(B5[s]));
                e += self.k[s][i] * (dt * T::lit(B5[s] - B4[s]));
            }
            let scale = atol + rtol * psi[i].norm().max(hi.norm());
            err = err.max(e.norm() / scale);
            next[i] = hi;
        }
        (next, err)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::{build_hamiltonian, FockSpace};
    use crate::rwa::Process;

    const FREQS: [f64; 3] = [4.2, 6.1, 7.5];

    #[test]
    fn lossless_single_trajectory_equals_evolve() {
        let space = FockSpace::new(&[8]).unwrap();
        let h =
            build_hamiltonian(&space, &Process::SingleMode.canonical(&FREQS, 1.0, 0.0)).unwrap();
        let psi = FockState::vacuum(&space);
        let ens = evolve_lossy(&psi, &h, &[0.0], 0.2, 1, 5).unwrap();
        let direct = evolve(&psi, &h, 0.2, EvolveMethod::Stepper).unwrap().state;
        assert_eq!(ens[0], direct);
    }

    #[test]
    fn vacuum_is_dark_without_pump() {
        let space = FockSpace::new(&[4, 4]).unwrap();
        let h = build_hamiltonian(&space, &Process::TwoMode.canonical(&FREQS, 0.0, 0.0)).unwrap();
        let psi = FockState::vacuum(&space);
        for st in evolve_lossy(&psi, &h, &[0.5, 1.5], 3.0, 8, 1).unwrap() {
            assert!((st.population(&[0, 0]) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn fock_state_decays_exponentially() {
        // |1⟩ under pure loss: survival probability e^{−κt}
        let space = FockSpace::new(&[3]).unwrap();
        let h =
            build_hamiltonian(&space, &Process::SingleMode.canonical(&FREQS, 0.0, 0.0)).unwrap();
        let psi = FockState::basis(&space, &[1]).unwrap();
        let n = 4000;
        let ens = evolve_lossy(&psi, &h, &[1.0], 0.7, n, 11).unwrap();
        let survived = ens.iter().filter(|s| s.population(&[1]) > 0.5).count() as f64 / n as f64;
        let p = (-0.7f64).exp();
        let se = (p * (1.0 - p) / n as f64).sqrt();
        assert!((survived - p).abs() < 4.0 * se, "{survived} vs {p}");
    }

    #[test]
    fn seeded_runs_are_reproducible() {
        let space = FockSpace::new(&[6]).unwrap();
        let h =
            build_hamiltonian(&space, &Process::SingleMode.canonical(&FREQS, 1.0, 0.0)).unwrap();
        let psi = FockState::vacuum(&space);
        let a = evolve_lossy(&psi, &h, &[2.0], 0.5, 16, 99).unwrap();
        let b = evolve_lossy(&psi, &h, &[2.0], 0.5, 16, 99).unwrap();
        assert_eq!(a, b);
    }
}
