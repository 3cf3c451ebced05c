use std::f64::consts::TAU;
use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::measurement::{QuadratureId, QuadratureRecord};
use crate::scalar::Real;

/// Square binning of the calibrated `(x, p)` plane, identical on both axes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BinGrid {
    pub n_bins: usize,
    pub min: f64,
    pub max: f64,
}

impl BinGrid {
    pub fn new(n_bins: usize, min: f64, max: f64) -> Result<Self> {
        if n_bins == 0 || !(max > min) || !min.is_finite() || !max.is_finite() {
            return Err(Error::InvalidParams(format!(
                "bad bin grid: {n_bins} bins on [{min}, {max}]"
            )));
        }
        Ok(Self { n_bins, min, max })
    }

    /// Symmetric grid covering `±half_width`.
    pub fn symmetric(n_bins: usize, half_width: f64) -> Result<Self> {
        Self::new(n_bins, -half_width, half_width)
    }

    pub fn width(&self) -> f64 {
        (self.max - self.min) / self.n_bins as f64
    }

    pub fn center(&self, i: usize) -> f64 {
        self.min + (i as f64 + 0.5) * self.width()
    }

    fn bin(&self, v: f64) -> Option<usize> {
        if !(v >= self.min && v < self.max) {
            return None;
        }
        Some((((v - self.min) / self.width()) as usize).min(self.n_bins - 1))
    }
}

/// Count density over `(x, p)`: `density[ix * n + ip]` integrates to the
/// fraction of samples inside the grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Histogram2d {
    pub grid: BinGrid,
    pub density: Vec<f64>,
    pub samples: usize,
    pub outside: usize,
}

impl Histogram2d {
    pub fn at(&self, ix: usize, ip: usize) -> f64 {
        self.density[ix * self.grid.n_bins + ip]
    }

    pub fn subtract(&self, other: &Self) -> Result<Self> {
        if self.grid != other.grid {
            return Err(Error::BinMismatch);
        }
        let density = self
            .density
            .iter()
            .zip(&other.density)
            .map(|(a, b)| a - b)
            .collect();
        Ok(Self {
            grid: self.grid,
            density,
            samples: self.samples,
            outside: self.outside,
        })
    }

    /// Complex angular Fourier component `Σ ρ e^{-ikφ} dA` about the origin.
    /// Three-fold shapes show up in `k = 3`, isotropic blobs in none.
    pub fn harmonic(&self, k: i32) -> (f64, f64) {
        let n = self.grid.n_bins;
        let area = self.grid.width().powi(2);
        let (mut re, mut im) = (0.0, 0.0);
        for ix in 0..n {
            for ip in 0..n {
                let (x, p) = (self.grid.center(ix), self.grid.center(ip));
                if x == 0.0 && p == 0.0 {
                    continue;
                }
                let phi = p.atan2(x);
                let w = self.at(ix, ip) * area;
                re += w * (k as f64 * phi).cos();
                im -= w * (k as f64 * phi).sin();
            }
        }
        (re, im)
    }

    /// Magnitude of `harmonic(k)`.
    pub fn harmonic_strength(&self, k: i32) -> f64 {
        let (re, im) = self.harmonic(k);
        re.hypot(im)
    }

    /// Angle of the dominant `k`-fold lobe in `[0, 2π/k)`.
    pub fn lobe_angle(&self, k: i32) -> f64 {
        let (re, im) = self.harmonic(k);
        ((-im).atan2(re) / k as f64).rem_euclid(TAU / k as f64)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "x,p,density")?;
        let n = self.grid.n_bins;
        for ix in 0..n {
            for ip in 0..n {
                writeln!(
                    w,
                    "{:?},{:?},{:?}",
                    self.grid.center(ix),
                    self.grid.center(ip),
                    self.at(ix, ip)
                )?;
            }
        }
        Ok(())
    }
}

fn fill<T: Real>(record: &QuadratureRecord<T>, mode: usize, grid: BinGrid) -> Result<Histogram2d> {
    let x = record.calibrated(QuadratureId::i(mode))?;
    let p = record.calibrated(QuadratureId::q(mode))?;
    let n = grid.n_bins;
    let mut counts = vec![0u64; n * n];
    let mut outside = 0;
    for (x, p) in x.iter().zip(&p) {
        match (grid.bin(x.as_f64()), grid.bin(p.as_f64())) {
            (Some(i), Some(j)) => counts[i * n + j] += 1,
            _ => outside += 1,
        }
    }
    let norm = (x.len() as f64) * grid.width().powi(2);
    Ok(Histogram2d {
        grid,
        density: counts.iter().map(|c| *c as f64 / norm).collect(),
        samples: x.len(),
        outside,
    })
}

/// Density of the calibrated `(I, Q)` pairs of `mode`, optionally with the
/// density of a reference record (same grid) subtracted bin by bin.
pub fn histogram2d<T: Real>(
    record: &QuadratureRecord<T>,
    mode: usize,
    grid: BinGrid,
    subtract: Option<&QuadratureRecord<T>>,
) -> Result<Histogram2d> {
    let h = fill(record, mode, grid)?;
    match subtract {
        Some(r) => h.subtract(&fill(r, mode, grid)?),
        None => Ok(h),
    }
}
