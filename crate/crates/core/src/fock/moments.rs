use num_complex::Complex;
use num_traits::Zero;

use crate::error::{Error, Result};
use crate::fock::{creation, FockSpace, FockState, ModeOperator};
use crate::scalar::Real;

/// `⟨ψ|O|ψ⟩ / ⟨ψ|ψ⟩`.
pub fn expectation<T: Real>(state: &FockState<T>, op: &ModeOperator<T>) -> Result<Complex<T>> {
    if state.space() != &op.space {
        return Err(Error::DimensionMismatch {
            expected: op.space.dim(),
            found: state.space().dim(),
        });
    }
    let v = op.matrix.matvec(state.amplitudes());
    let num: Complex<T> = state
        .amplitudes()
        .iter()
        .zip(&v)
        .map(|(a, b)| a.conj() * b)
        .sum();
    Ok(num / state.norm().powi(2))
}

/// Expectation of an operator expected to be Hermitian; fails when the
/// imaginary part exceeds `1e-10` relative to `1 + |re|`.
pub fn expectation_real<T: Real>(state: &FockState<T>, op: &ModeOperator<T>) -> Result<T> {
    let e = expectation(state, op)?;
    if e.im.abs() > T::lit(1e-10).max(T::epsilon() * T::lit(64.0)) * (T::one() + e.re.abs()) {
        return Err(Error::NonRealExpectation {
            imag: e.im.as_f64(),
        });
    }
    Ok(e.re)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnsembleMean<T> {
    pub mean: Complex<T>,
    /// Standard error of the real part across members.
    pub std_error: T,
}

/// Mean of `⟨O⟩` over an ensemble of pure states (e.g. jump trajectories).
pub fn ensemble_expectation<T: Real>(
    states: &[FockState<T>],
    op: &ModeOperator<T>,
) -> Result<EnsembleMean<T>> {
    if states.is_empty() {
        return Err(Error::InvalidParams("empty ensemble".into()));
    }
    let vals = states
        .iter()
        .map(|s| expectation(s, op))
        .collect::<Result<Vec<_>>>()?;
    let n = T::from_usize_lossy(vals.len());
    let mean = vals.iter().fold(Complex::zero(), |a: Complex<T>, b| a + b) / n;
    let std_error = if vals.len() > 1 {
        let var = vals.iter().map(|v| (v.re - mean.re).powi(2)).sum::<T>() / (n - T::one());
        (var / n).sqrt()
    } else {
        T::zero()
    };
    Ok(EnsembleMean { mean, std_error })
}

/// Vectors `Π_i a_i†^{k_i} |ψ⟩` for every power vector with total ≤ `order`,
/// computed on a space extended by `order` so truncation does not bite.
struct CreationPowers<T> {
    n_modes: usize,
    order: usize,
    vectors: Vec<(Vec<u32>, Vec<Complex<T>>)>,
}

impl<T: Real> CreationPowers<T> {
    fn new(state: &FockState<T>, order: usize) -> Result<Self> {
        let big: FockSpace = state.space().extended(order);
        let psi = state.normalized().embed(&big)?;
        let n_modes = big.n_modes();
        let ops = (0..n_modes)
            .map(|m| creation::<T>(&big, m))
            .collect::<Result<Vec<_>>>()?;
        let mut vectors = vec![(vec![0u32; n_modes], psi.amplitudes().to_vec())];
        let mut frontier = 0;
        for _ in 0..order {
            let end = vectors.len();
            for idx in frontier..end {
                let (powers, v) = vectors[idx].clone();
                // extend only at or after the last nonzero mode to avoid duplicates
                let start = powers.iter().rposition(|&p| p > 0).unwrap_or(0);
                for (m, op) in ops.iter().enumerate().skip(start) {
                    let mut p = powers.clone();
                    p[m] += 1;
                    vectors.push((p, op.matrix.matvec(&v)));
                }
            }
            frontier = end;
        }
        Ok(Self {
            n_modes,
            order,
            vectors,
        })
    }

    fn get(&self, powers: &[u32]) -> Option<&[Complex<T>]> {
        self.vectors
            .iter()
            .find(|(p, _)| p == powers)
            .map(|(_, v)| v.as_slice())
    }

    /// `⟨Π a^{j} Π a†^{k}⟩ = ⟨a†^j ψ | a†^k ψ⟩`.
    fn moment(&self, annihilation: &[u32], creation: &[u32]) -> Complex<T> {
        let (l, r) = (self.get(annihilation).unwrap(), self.get(creation).unwrap());
        l.iter().zip(r).map(|(a, b)| a.conj() * b).sum()
    }
}

/// Anti-normally ordered moment `⟨Π_i a_i^{j_i} Π_i a_i†^{k_i}⟩`, equal to
/// the Husimi-Q average of `Π α_i^{j_i} α_i*^{k_i}`.
pub fn anti_normal_moment<T: Real>(
    state: &FockState<T>,
    annihilation: &[u32],
    creation: &[u32],
) -> Result<Complex<T>> {
    let n = state.space().n_modes();
    if annihilation.len() != n || creation.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: annihilation.len().min(creation.len()),
        });
    }
    let order = annihilation
        .iter()
        .sum::<u32>()
        .max(creation.iter().sum::<u32>()) as usize;
    let powers = CreationPowers::new(state, order)?;
    Ok(powers.moment(annihilation, creation))
}

/// Husimi-Q moments of the heterodyne variables `(x_1, p_1, x_2, p_2, …)`
/// with `x = √2 Re α`, `p = √2 Im α`, up to third order.
#[derive(Debug, Clone, PartialEq)]
pub struct QMoments<T> {
    pub n_vars: usize,
    pub mean: Vec<T>,
    /// Raw `E[q_i q_j]`, row-major `n_vars²`.
    pub second: Vec<T>,
    /// Raw `E[q_i q_j q_k]`, row-major `n_vars³`.
    pub third: Vec<T>,
}

impl<T: Real> QMoments<T> {
    pub fn covariance(&self, i: usize, j: usize) -> T {
        self.second[i * self.n_vars + j] - self.mean[i] * self.mean[j]
    }

    /// Third central moment `E[(q_i−μ_i)(q_j−μ_j)(q_k−μ_k)]`.
    pub fn central_third(&self, i: usize, j: usize, k: usize) -> T {
        let d = self.n_vars;
        let m = &self.mean;
        self.third[(i * d + j) * d + k]
            - m[i] * self.second[j * d + k]
            - m[j] * self.second[i * d + k]
            - m[k] * self.second[i * d + j]
            + T::lit(2.0) * m[i] * m[j] * m[k]
    }
}

/// Expand `Π q_{vars}` into anti-normal monomials and evaluate.
fn q_product<T: Real>(powers: &CreationPowers<T>, vars: &[usize]) -> T {
    let s = T::FRAC_1_SQRT_2();
    let mut total = Complex::zero();
    for choice in 0..(1u32 << vars.len()) {
        let mut coeff = Complex::new(T::one(), T::zero());
        let mut ann = vec![0u32; powers.n_modes];
        let mut cre = vec![0u32; powers.n_modes];
        for (bit, &v) in vars.iter().enumerate() {
            let mode = v / 2;
            let is_p = v % 2 == 1;
            let conj = choice >> bit & 1 == 1;
            // x = (α + α*)/√2, p = (α − α*)/(i√2)
            let c = match (is_p, conj) {
                (false, _) => Complex::new(s, T::zero()),
                (true, false) => Complex::new(T::zero(), -s),
                (true, true) => Complex::new(T::zero(), s),
            };
            coeff *= c;
            if conj {
                cre[mode] += 1;
            } else {
                ann[mode] += 1;
            }
        }
        total += coeff * powers.moment(&ann, &cre);
    }
    total.re
}

pub fn q_function_moments<T: Real>(state: &FockState<T>) -> Result<QMoments<T>> {
    let powers = CreationPowers::new(state, 3)?;
    debug_assert_eq!(powers.order, 3);
    let d = 2 * powers.n_modes;
    let mean = (0..d).map(|i| q_product(&powers, &[i])).collect();
    let mut second = vec![T::zero(); d * d];
    for i in 0..d {
        for j in i..d {
            let v = q_product(&powers, &[i, j]);
            second[i * d + j] = v;
            second[j * d + i] = v;
        }
    }
    let mut third = vec![T::zero(); d * d * d];
    for i in 0..d {
        for j in i..d {
            for k in j..d {
                let v = q_product(&powers, &[i, j, k]);
                for (a, b, c) in [
                    (i, j, k),
                    (i, k, j),
                    (j, i, k),
                    (j, k, i),
                    (k, i, j),
                    (k, j, i),
                ] {
                    third[(a * d + b) * d + c] = v;
                }
            }
        }
    }
    Ok(QMoments {
        n_vars: d,
        mean,
        second,
        third,
    })
}
