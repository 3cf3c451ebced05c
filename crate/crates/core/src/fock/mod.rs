//! Truncated multimode Fock space: states, ladder operators, cubic
//! Hamiltonians and their unitary or lossy evolution.

pub mod dense;
mod evolve;
mod hamiltonian;
mod moments;
pub mod sparse;
mod trajectory;

use std::io::{BufRead, Write};

use num_complex::Complex;
use num_traits::Zero;

use crate::error::{Error, Result};
use crate::rwa::EffectiveHamiltonian;
use crate::scalar::Real;

pub use evolve::{evolve, EvolveMethod, Evolved, LEAK_THRESHOLD};
pub use hamiltonian::{
    annihilation, build_hamiltonian, creation, number, quadrature, ModeOperator, QuadratureKind,
};
pub use moments::{
    anti_normal_moment, ensemble_expectation, expectation, expectation_real, q_function_moments,
    EnsembleMean, QMoments,
};
pub(crate) use trajectory::stream_rng;
pub use trajectory::{evolve_lossy, LossyOptions};

/// Product basis `|n_1 … n_m⟩` with `0 ≤ n_i ≤ cutoffs[i]`; the last mode
/// varies fastest.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct FockSpace {
    cutoffs: Vec<usize>,
    strides: Vec<usize>,
    dim: usize,
}

impl FockSpace {
    pub fn new(cutoffs: &[usize]) -> Result<Self> {
        if !(1..=3).contains(&cutoffs.len()) {
            return Err(Error::InvalidParams(format!(
                "1 to 3 modes supported, got {}",
                cutoffs.len()
            )));
        }
        if cutoffs.contains(&0) {
            return Err(Error::InvalidParams(
                "every cutoff must be at least 1".into(),
            ));
        }
        let mut strides = vec![1; cutoffs.len()];
        for i in (0..cutoffs.len() - 1).rev() {
            strides[i] = strides[i + 1] * (cutoffs[i + 1] + 1);
        }
        let dim = cutoffs.iter().map(|c| c + 1).product();
        Ok(Self {
            cutoffs: cutoffs.to_vec(),
            strides,
            dim,
        })
    }

    pub fn n_modes(&self) -> usize {
        self.cutoffs.len()
    }

    pub fn cutoffs(&self) -> &[usize] {
        &self.cutoffs
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn index(&self, occupation: &[usize]) -> Option<usize> {
        if occupation.len() != self.n_modes()
            || occupation.iter().zip(&self.cutoffs).any(|(n, c)| n > c)
        {
            return None;
        }
        Some(
            occupation
                .iter()
                .zip(&self.strides)
                .map(|(n, s)| n * s)
                .sum(),
        )
    }

    pub fn occupation(&self, index: usize) -> Vec<usize> {
        self.cutoffs
            .iter()
            .zip(&self.strides)
            .map(|(&c, &s)| (index / s) % (c + 1))
            .collect()
    }

    pub fn occupations(&self) -> impl Iterator<Item = Vec<usize>> + '_ {
        (0..self.dim).map(|i| self.occupation(i))
    }

    /// Same modes with every cutoff raised by `extra`.
    pub fn extended(&self, extra: usize) -> Self {
        let c: Vec<usize> = self.cutoffs.iter().map(|c| c + extra).collect();
        Self::new(&c).expect("extending a valid space stays valid")
    }
}

/// Pure state on a truncated Fock space.
#[derive(Debug, Clone, PartialEq)]
pub struct FockState<T> {
    space: FockSpace,
    amplitudes: Vec<Complex<T>>,
}

impl<T: Real> FockState<T> {
    pub fn vacuum(space: &FockSpace) -> Self {
        let mut amplitudes = vec![Complex::zero(); space.dim()];
        amplitudes[0] = Complex::new(T::one(), T::zero());
        Self {
            space: space.clone(),
            amplitudes,
        }
    }

    pub fn basis(space: &FockSpace, occupation: &[usize]) -> Result<Self> {
        let idx = space.index(occupation).ok_or_else(|| {
            Error::InvalidParams(format!("occupation {occupation:?} outside the space"))
        })?;
        let mut amplitudes = vec![Complex::zero(); space.dim()];
        amplitudes[idx] = Complex::new(T::one(), T::zero());
        Ok(Self {
            space: space.clone(),
            amplitudes,
        })
    }

    pub fn from_amplitudes(space: &FockSpace, amplitudes: Vec<Complex<T>>) -> Result<Self> {
        if amplitudes.len() != space.dim() {
            return Err(Error::DimensionMismatch {
                expected: space.dim(),
                found: amplitudes.len(),
            });
        }
        Ok(Self {
            space: space.clone(),
            amplitudes,
        })
    }

    pub fn space(&self) -> &FockSpace {
        &self.space
    }

    pub fn amplitudes(&self) -> &[Complex<T>] {
        &self.amplitudes
    }

    pub fn amplitude(&self, occupation: &[usize]) -> Complex<T> {
        self.space
            .index(occupation)
            .map(|i| self.amplitudes[i])
            .unwrap_or_else(Complex::zero)
    }

    pub fn population(&self, occupation: &[usize]) -> T {
        self.amplitude(occupation).norm_sqr()
    }

    pub fn norm(&self) -> T {
        self.amplitudes
            .iter()
            .map(|a| a.norm_sqr())
            .sum::<T>()
            .sqrt()
    }

    pub fn normalized(&self) -> Self {
        let n = self.norm();
        Self {
            space: self.space.clone(),
            amplitudes: self.amplitudes.iter().map(|a| a / n).collect(),
        }
    }

    pub fn inner(&self, other: &Self) -> Complex<T> {
        self.amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    /// `‖self − other‖`.
    pub fn distance(&self, other: &Self) -> T {
        self.amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<T>()
            .sqrt()
    }

    /// Population on basis states with at least one mode within
    /// [`EDGE_LEVELS`] of its cutoff. Cubic terms move quanta in steps of up
    /// to three, so the very top level alone can stay empty by parity.
    pub fn top_level_population(&self) -> T {
        self.amplitudes
            .iter()
            .enumerate()
            .filter(|(i, _)| {
                self.space
                    .occupation(*i)
                    .iter()
                    .zip(self.space.cutoffs())
                    .any(|(n, c)| n + EDGE_LEVELS > *c)
            })
            .map(|(_, a)| a.norm_sqr())
            .sum()
    }

    /// Mean photon number per mode.
    pub fn mean_occupations(&self) -> Vec<T> {
        let mut out = vec![T::zero(); self.space.n_modes()];
        for (i, a) in self.amplitudes.iter().enumerate() {
            let p = a.norm_sqr();
            for (o, n) in out.iter_mut().zip(self.space.occupation(i)) {
                *o += p * T::from_usize_lossy(n);
            }
        }
        out
    }

    /// Copy into a space with the same number of modes and cutoffs at least
    /// as large.
    pub fn embed(&self, target: &FockSpace) -> Result<Self> {
        if target.n_modes() != self.space.n_modes()
            || target
                .cutoffs()
                .iter()
                .zip(self.space.cutoffs())
                .any(|(t, s)| t < s)
        {
            return Err(Error::InvalidParams(
                "target space does not contain the state's space".into(),
            ));
        }
        let mut amplitudes = vec![Complex::zero(); target.dim()];
        for (i, a) in self.amplitudes.iter().enumerate() {
            let j = target.index(&self.space.occupation(i)).unwrap();
            amplitudes[j] = *a;
        }
        Ok(Self {
            space: target.clone(),
            amplitudes,
        })
    }

    /// Text export: a header line with the cutoffs, then one `re im` pair per
    /// basis state in index order.
    pub fn write_text<W: Write>(&self, mut w: W) -> Result<()> {
        let cut: Vec<String> = self.space.cutoffs().iter().map(|c| c.to_string()).collect();
        writeln!(w, "fockstate v1 cutoffs {}", cut.join(" "))?;
        for a in &self.amplitudes {
            writeln!(w, "{:?} {:?}", a.re.as_f64(), a.im.as_f64())?;
        }
        Ok(())
    }

    pub fn read_text<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("empty state file".into()))??;
        let rest = header
            .strip_prefix("fockstate v1 cutoffs ")
            .ok_or_else(|| Error::Parse(format!("unrecognised state header {header:?}")))?;
        let cutoffs = rest
            .split_whitespace()
            .map(|t| t.parse::<usize>().map_err(|e| Error::Parse(e.to_string())))
            .collect::<Result<Vec<_>>>()?;
        let space = FockSpace::new(&cutoffs)?;
        let mut amplitudes = Vec::with_capacity(space.dim());
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let mut it = line.split_whitespace().map(|t| t.parse::<f64>());
            match (it.next(), it.next()) {
                (Some(Ok(re)), Some(Ok(im))) => {
                    amplitudes.push(Complex::new(T::lit(re), T::lit(im)))
                }
                _ => return Err(Error::Parse(format!("bad amplitude line {line:?}"))),
            }
        }
        Self::from_amplitudes(&space, amplitudes)
    }
}

/// Default truncation per mode: 24 for single-mode star states, 7 for two-
/// and three-mode runs.
pub const EDGE_LEVELS: usize = 3;

pub fn default_cutoff(n_modes: usize) -> usize {
    if n_modes == 1 {
        24
    } else {
        7
    }
}

fn max_cutoff(n_modes: usize) -> usize {
    match n_modes {
        1 => 80,
        2 => 48,
        _ => 22,
    }
}

/// Evolves the vacuum under `eff` for `duration`, starting from cutoff
/// `min_cutoff` on every mode and enlarging the space until the top-level
/// population drops below [`LEAK_THRESHOLD`] (or a size limit is reached).
pub fn evolve_vacuum<T: Real>(
    eff: &EffectiveHamiltonian<T>,
    duration: T,
    min_cutoff: usize,
) -> Result<Evolved<T>> {
    let n = eff.n_modes;
    let needed = eff
        .terms
        .iter()
        .flat_map(|t| t.creation.iter().chain(&t.annihilation))
        .copied()
        .max()
        .unwrap_or(0) as usize;
    let mut cutoff = min_cutoff.max(needed).max(1);
    loop {
        let space = FockSpace::new(&vec![cutoff; n])?;
        let h = build_hamiltonian(&space, eff)?;
        let out = evolve(
            &FockState::vacuum(&space),
            &h,
            duration,
            EvolveMethod::Stepper,
        )?;
        if !out.leaked() || cutoff >= max_cutoff(n) {
            return Ok(out);
        }
        cutoff += if n == 1 { 4 } else { 1 };
    }
}
