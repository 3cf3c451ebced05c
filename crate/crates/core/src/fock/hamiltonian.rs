use num_complex::Complex;

use crate::error::{Error, Result};
use crate::fock::sparse::CsrMatrix;
use crate::fock::FockSpace;
use crate::rwa::EffectiveHamiltonian;
use crate::scalar::Real;

/// Operator on a truncated Fock space.
///
/// Ladder operators are exact adjoints of each other; `[a, a†]` equals the
/// identity everywhere except on the top level of the truncated mode, where
/// it is `−cutoff`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeOperator<T> {
    pub space: FockSpace,
    pub matrix: CsrMatrix<T>,
}

impl<T: Real> ModeOperator<T> {
    pub fn identity(space: &FockSpace) -> Self {
        Self {
            space: space.clone(),
            matrix: CsrMatrix::identity(space.dim()),
        }
    }

    pub fn adjoint(&self) -> Self {
        Self {
            space: self.space.clone(),
            matrix: self.matrix.adjoint(),
        }
    }

    pub fn mul(&self, other: &Self) -> Self {
        Self {
            space: self.space.clone(),
            matrix: self.matrix.matmul(&other.matrix),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        Self {
            space: self.space.clone(),
            matrix: self.matrix.add(&other.matrix),
        }
    }

    pub fn scale(&self, s: Complex<T>) -> Self {
        Self {
            space: self.space.clone(),
            matrix: self.matrix.scale(s),
        }
    }

    pub fn is_hermitian(&self, tol: T) -> bool {
        self.matrix.hermiticity_defect() <= tol * (T::one() + self.matrix.max_abs())
    }

    pub fn element(&self, row: &[usize], col: &[usize]) -> Complex<T> {
        match (self.space.index(row), self.space.index(col)) {
            (Some(r), Some(c)) => self.matrix.get(r, c),
            _ => Complex::new(T::zero(), T::zero()),
        }
    }
}

fn check_mode(space: &FockSpace, mode: usize) -> Result<()> {
    if mode >= space.n_modes() {
        return Err(Error::ModeOutOfRange {
            mode,
            n_modes: space.n_modes(),
        });
    }
    Ok(())
}

pub fn annihilation<T: Real>(space: &FockSpace, mode: usize) -> Result<ModeOperator<T>> {
    check_mode(space, mode)?;
    let mut triplets = Vec::new();
    for i in 0..space.dim() {
        let mut occ = space.occupation(i);
        let n = occ[mode];
        if n > 0 {
            occ[mode] = n - 1;
            let j = space.index(&occ).unwrap();
            triplets.push((j, i, Complex::new(T::from_usize_lossy(n).sqrt(), T::zero())));
        }
    }
    Ok(ModeOperator {
        space: space.clone(),
        matrix: CsrMatrix::from_triplets(space.dim(), triplets),
    })
}

pub fn creation<T: Real>(space: &FockSpace, mode: usize) -> Result<ModeOperator<T>> {
    Ok(annihilation(space, mode)?.adjoint())
}

pub fn number<T: Real>(space: &FockSpace, mode: usize) -> Result<ModeOperator<T>> {
    let a = annihilation::<T>(space, mode)?;
    Ok(a.adjoint().mul(&a))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QuadratureKind {
    /// `x = a + a†`
    X,
    /// `p = −i (a − a†)`
    P,
}

/// `x_φ = x cos φ − p sin φ = a e^{iφ} + a† e^{−iφ}`; `P` kind gives the
/// quadrature at `φ + π/2` rotated back, i.e. plain `p` for `φ = 0`.
pub fn quadrature<T: Real>(
    space: &FockSpace,
    mode: usize,
    kind: QuadratureKind,
    phi: T,
) -> Result<ModeOperator<T>> {
    let a = annihilation::<T>(space, mode)?;
    let phase = match kind {
        QuadratureKind::X => Complex::from_polar(T::one(), phi),
        QuadratureKind::P => {
            Complex::from_polar(T::one(), phi) * Complex::new(T::zero(), -T::one())
        }
    };
    Ok(a.scale(phase).add(&a.adjoint().scale(phase.conj())))
}

fn falling_sqrt<T: Real>(n: usize, k: usize) -> T {
    // sqrt(n! / (n − k)!)
    (0..k)
        .map(|j| T::from_usize_lossy(n - j))
        .fold(T::one(), |a, b| a * b)
        .sqrt()
}

/// Matrix of an effective Hamiltonian. Each normal-ordered monomial
/// `Π a_i†^{c_i} a_i^{n_i}` is built exactly on the truncated basis.
pub fn build_hamiltonian<T: Real>(
    space: &FockSpace,
    eff: &EffectiveHamiltonian<T>,
) -> Result<ModeOperator<T>> {
    if eff.n_modes != space.n_modes() {
        return Err(Error::DimensionMismatch {
            expected: space.n_modes(),
            found: eff.n_modes,
        });
    }
    let mut triplets = Vec::new();
    for term in &eff.terms {
        for (mode, (&c, &a)) in term.creation.iter().zip(&term.annihilation).enumerate() {
            let need = c.max(a) as usize;
            if space.cutoffs()[mode] < need {
                return Err(Error::CutoffTooSmall {
                    mode,
                    cutoff: space.cutoffs()[mode],
                    required: need,
                });
            }
        }
        'basis: for i in 0..space.dim() {
            let occ = space.occupation(i);
            let mut target = occ.clone();
            let mut factor = T::one();
            for mode in 0..space.n_modes() {
                let (c, a) = (
                    term.creation[mode] as usize,
                    term.annihilation[mode] as usize,
                );
                let n = occ[mode];
                if n < a || n - a + c > space.cutoffs()[mode] {
                    continue 'basis;
                }
                factor *= falling_sqrt::<T>(n, a) * falling_sqrt::<T>(n - a + c, c);
                target[mode] = n - a + c;
            }
            let j = space.index(&target).unwrap();
            triplets.push((j, i, term.coefficient * factor));
        }
    }
    let op = ModeOperator {
        space: space.clone(),
        matrix: CsrMatrix::from_triplets(space.dim(), triplets),
    };
    let defect = op.matrix.hermiticity_defect();
    if defect > T::epsilon() * T::lit(64.0) * (T::one() + op.matrix.max_abs()) {
        return Err(Error::NotHermitian {
            deviation: defect.as_f64(),
        });
    }
    Ok(op)
}
