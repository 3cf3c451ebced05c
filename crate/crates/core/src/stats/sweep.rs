use serde::Serialize;

use crate::error::{Error, Result};
use crate::measurement::{QuadratureId, QuadratureRecord};
use crate::scalar::Real;
use crate::stats::{Estimate, MomentTensor, DEFAULT_BATCHES};

pub const MIN_SWEEP_PHASES: usize = 8;

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub phase: f64,
    pub coskewness: Estimate<f64>,
    /// Pairwise correlations in `PhaseSweep::pair_labels` order.
    pub correlations: Vec<Estimate<f64>>,
}

/// `y ≈ a sin φ + b cos φ + c`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct SinusoidFit {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub r_squared: f64,
    pub rms_residual: f64,
}

impl SinusoidFit {
    pub fn amplitude(&self) -> f64 {
        self.a.hypot(self.b)
    }

    pub fn eval(&self, phi: f64) -> f64 {
        self.a * phi.sin() + self.b * phi.cos() + self.c
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PhaseSweep {
    pub key: String,
    pub pair_labels: Vec<String>,
    pub rows: Vec<SweepRow>,
    pub fit: SinusoidFit,
}

impl PhaseSweep {
    /// Largest `|r|/σ_r` over all rows and pairs.
    pub fn max_correlation_z(&self) -> f64 {
        self.rows
            .iter()
            .flat_map(|r| r.correlations.iter().map(|e| e.z()))
            .fold(0.0, f64::max)
    }

    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        write!(w, "phase,{0},{0}_err", self.key)?;
        for l in &self.pair_labels {
            write!(w, ",r_{l},r_{l}_err")?;
        }
        writeln!(w, ",fit")?;
        for r in &self.rows {
            write!(
                w,
                "{:?},{:?},{:?}",
                r.phase, r.coskewness.value, r.coskewness.std_error
            )?;
            for c in &r.correlations {
                write!(w, ",{:?},{:?}", c.value, c.std_error)?;
            }
            writeln!(w, ",{:?}", self.fit.eval(r.phase))?;
        }
        Ok(())
    }
}

fn solve3(m: [[f64; 3]; 3], v: [f64; 3]) -> Option<[f64; 3]> {
    let det = |m: [[f64; 3]; 3]| {
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    };
    let d = det(m);
    if d.abs() < 1e-12 {
        return None;
    }
    let mut out = [0.0; 3];
    for (c, o) in out.iter_mut().enumerate() {
        let mut mc = m;
        for r in 0..3 {
            mc[r][c] = v[r];
        }
        *o = det(mc) / d;
    }
    Some(out)
}

/// Ordinary least squares of `y` on `(sin φ, cos φ, 1)`.
pub fn fit_sinusoid(phases: &[f64], values: &[f64]) -> Result<SinusoidFit> {
    if phases.len() != values.len() {
        return Err(Error::LengthMismatch(vec![phases.len(), values.len()]));
    }
    if phases.len() < 3 {
        return Err(Error::InvalidParams(
            "sinusoid fit needs at least 3 points".into(),
        ));
    }
    let mut ata = [[0.0; 3]; 3];
    let mut aty = [0.0; 3];
    for (p, y) in phases.iter().zip(values) {
        let row = [p.sin(), p.cos(), 1.0];
        for i in 0..3 {
            aty[i] += row[i] * y;
            for j in 0..3 {
                ata[i][j] += row[i] * row[j];
            }
        }
    }
    let [a, b, c] = solve3(ata, aty)
        .ok_or_else(|| Error::InvalidParams("phases do not determine a sinusoid".into()))?;
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let ss_tot: f64 = values.iter().map(|y| (y - mean).powi(2)).sum();
    let ss_res: f64 = phases
        .iter()
        .zip(values)
        .map(|(p, y)| (y - a * p.sin() - b * p.cos() - c).powi(2))
        .sum();
    Ok(SinusoidFit {
        a,
        b,
        c,
        r_squared: if ss_tot > 0.0 {
            1.0 - ss_res / ss_tot
        } else {
            0.0
        },
        rms_residual: (ss_res / n).sqrt(),
    })
}

/// Key coskewness and every pairwise correlation of `key` per pump phase.
/// `source` produces the record for one phase.
pub fn pump_phase_sweep<T, F>(
    phases: &[f64],
    key: [QuadratureId; 3],
    mut source: F,
) -> Result<PhaseSweep>
where
    T: Real,
    F: FnMut(f64) -> Result<QuadratureRecord<T>>,
{
    if phases.len() < MIN_SWEEP_PHASES {
        return Err(Error::TooFewPhases {
            required: MIN_SWEEP_PHASES,
            found: phases.len(),
        });
    }
    let pairs = [(0, 1), (0, 2), (1, 2)];
    let mut rows = Vec::with_capacity(phases.len());
    for &phase in phases {
        let rec = source(phase)?;
        let t = MomentTensor::from_record(&rec, &key, DEFAULT_BATCHES)?;
        let correlations = pairs
            .iter()
            .map(|&(i, j)| t.correlation::<f64>(i, j))
            .collect::<Result<Vec<_>>>()?;
        rows.push(SweepRow {
            phase,
            coskewness: t.coskewness::<f64>(0, 1, 2)?,
            correlations,
        });
    }
    let values: Vec<f64> = rows.iter().map(|r| r.coskewness.value).collect();
    let fit = fit_sinusoid(phases, &values)?;
    Ok(PhaseSweep {
        key: format!("{}{}{}", key[0], key[1], key[2]),
        pair_labels: pairs
            .iter()
            .map(|&(i, j)| format!("{}{}", key[i], key[j]))
            .collect(),
        rows,
        fit,
    })
}
