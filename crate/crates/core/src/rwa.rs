//! Expansion of the pumped interaction `β_p g_k (Σ_i a_i + a_i†)^k` into
//! normal-ordered monomials, rotating-frame bookkeeping and resonant term
//! selection.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Normal-ordered monomial `coefficient · Π a_i†^{c_i} Π a_i^{n_i}`.
#[derive(Debug, Clone, PartialEq)]
pub struct HamiltonianTerm<T> {
    pub creation: Vec<u32>,
    pub annihilation: Vec<u32>,
    pub coefficient: Complex<T>,
    /// `Σ c_i f_i − Σ n_i f_i` in GHz.
    pub rotating_freq: T,
}

impl<T: Real> HamiltonianTerm<T> {
    pub fn n_modes(&self) -> usize {
        self.creation.len()
    }

    pub fn degree(&self) -> u32 {
        self.creation.iter().chain(&self.annihilation).sum()
    }

    pub fn frequency_from_powers(&self, mode_freqs: &[T]) -> T {
        self.creation
            .iter()
            .zip(&self.annihilation)
            .zip(mode_freqs)
            .map(|((&c, &a), &f)| (T::from_u32(c).unwrap() - T::from_u32(a).unwrap()) * f)
            .sum()
    }

    /// Hermitian conjugate: swaps creation and annihilation counts.
    pub fn conjugate(&self) -> Self {
        Self {
            creation: self.annihilation.clone(),
            annihilation: self.creation.clone(),
            coefficient: self.coefficient.conj(),
            rotating_freq: -self.rotating_freq,
        }
    }

    /// Key identifying the process independently of which member of the
    /// conjugate pair is looked at: the powers of the member with negative
    /// (or, for zero frequency, lexicographically smaller) rotating frequency.
    fn process_key(&self) -> (Vec<u32>, Vec<u32>) {
        let own = (self.creation.clone(), self.annihilation.clone());
        let conj = (self.annihilation.clone(), self.creation.clone());
        if self.rotating_freq < T::zero() || (self.rotating_freq == T::zero() && own <= conj) {
            own
        } else {
            conj
        }
    }

    /// `a1dag^2 a2dag a3^2` style label, creation part first.
    pub fn label(&self) -> String {
        let mut parts = Vec::new();
        for (i, &c) in self.creation.iter().enumerate() {
            match c {
                0 => {}
                1 => parts.push(format!("a{}dag", i + 1)),
                _ => parts.push(format!("a{}dag^{c}", i + 1)),
            }
        }
        for (i, &a) in self.annihilation.iter().enumerate() {
            match a {
                0 => {}
                1 => parts.push(format!("a{}", i + 1)),
                _ => parts.push(format!("a{}^{a}", i + 1)),
            }
        }
        if parts.is_empty() {
            "1".into()
        } else {
            parts.join(" ")
        }
    }
}

fn factorial(n: u32) -> u64 {
    (1..=n as u64).product()
}

/// All normal-ordered monomials of total degree `order` in `{a_i, a_i†}`,
/// each carrying its multinomial count times `coupling`.
///
/// The merged coefficients add up to `(2 m)^order · coupling` for `m` modes.
pub fn enumerate_terms<T: Real>(
    mode_freqs: &[T],
    order: u32,
    coupling: T,
) -> Result<Vec<HamiltonianTerm<T>>> {
    let m = mode_freqs.len();
    if !(1..=3).contains(&m) {
        return Err(Error::InvalidParams(format!(
            "1 to 3 modes supported, got {m}"
        )));
    }
    if order == 0 {
        return Err(Error::InvalidParams("order must be at least 1".into()));
    }
    let slots = 2 * m;
    let mut counts = vec![0u32; slots];
    let mut out = Vec::new();
    compositions(order, 0, &mut counts, &mut |c| {
        let denom: u64 = c.iter().map(|&k| factorial(k)).product();
        let multinomial = factorial(order) / denom;
        let creation: Vec<u32> = (0..m).map(|i| c[2 * i]).collect();
        let annihilation: Vec<u32> = (0..m).map(|i| c[2 * i + 1]).collect();
        let mut term = HamiltonianTerm {
            creation,
            annihilation,
            coefficient: Complex::new(T::from_u64(multinomial).unwrap() * coupling, T::zero()),
            rotating_freq: T::zero(),
        };
        term.rotating_freq = term.frequency_from_powers(mode_freqs);
        out.push(term);
    });
    Ok(out)
}

fn compositions(remaining: u32, slot: usize, counts: &mut [u32], visit: &mut impl FnMut(&[u32])) {
    if slot + 1 == counts.len() {
        counts[slot] = remaining;
        visit(counts);
        return;
    }
    for k in (0..=remaining).rev() {
        counts[slot] = k;
        compositions(remaining - k, slot + 1, counts, visit);
    }
    counts[slot] = 0;
}

/// Pump-selected Hamiltonian in the rotating frame.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectiveHamiltonian<T> {
    pub n_modes: usize,
    pub terms: Vec<HamiltonianTerm<T>>,
    pub pump_freq: T,
    pub pump_phase: T,
    pub detuning_tolerance: T,
}

/// The three cubic down-conversion processes.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize, serde::Deserialize,
)]
#[serde(rename_all = "snake_case")]
pub enum Process {
    SingleMode,
    TwoMode,
    ThreeMode,
}

impl Process {
    pub const ALL: [Process; 3] = [Process::SingleMode, Process::TwoMode, Process::ThreeMode];

    pub fn n_modes(self) -> usize {
        match self {
            Process::SingleMode => 1,
            Process::TwoMode => 2,
            Process::ThreeMode => 3,
        }
    }

    /// Annihilation counts of the down-conversion monomial.
    pub fn powers(self) -> &'static [u32] {
        match self {
            Process::SingleMode => &[3],
            Process::TwoMode => &[2, 1],
            Process::ThreeMode => &[1, 1, 1],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Process::SingleMode => "H_1M",
            Process::TwoMode => "H_2M",
            Process::ThreeMode => "H_3M",
        }
    }

    pub fn short(self) -> &'static str {
        match self {
            Process::SingleMode => "1m",
            Process::TwoMode => "2m",
            Process::ThreeMode => "3m",
        }
    }

    /// Accepts `1m`/`single_mode`, `2m`/`two_mode`, `3m`/`three_mode`.
    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "1m" | "single_mode" | "h_1m" => Some(Process::SingleMode),
            "2m" | "two_mode" | "h_2m" => Some(Process::TwoMode),
            "3m" | "three_mode" | "h_3m" => Some(Process::ThreeMode),
            _ => None,
        }
    }

    /// Pump frequency that makes this process resonant.
    pub fn pump_freq<T: Real>(self, mode_freqs: &[T]) -> T {
        self.powers()
            .iter()
            .zip(mode_freqs)
            .map(|(&n, &f)| T::from_u32(n).unwrap() * f)
            .sum()
    }

    /// `g (e^{iθ} A + e^{−iθ} A†)` with `A` the down-conversion monomial,
    /// unit multinomial weight.
    pub fn canonical<T: Real>(
        self,
        mode_freqs: &[T],
        g: T,
        pump_phase: T,
    ) -> EffectiveHamiltonian<T> {
        let m = self.n_modes();
        let freqs = &mode_freqs[..m];
        let annihilation = self.powers().to_vec();
        let mut term = HamiltonianTerm {
            creation: vec![0; m],
            annihilation,
            coefficient: Complex::from_polar(g, pump_phase),
            rotating_freq: T::zero(),
        };
        term.rotating_freq = term.frequency_from_powers(freqs);
        let conj = term.conjugate();
        EffectiveHamiltonian {
            n_modes: m,
            terms: vec![term, conj],
            pump_freq: self.pump_freq(freqs),
            pump_phase,
            detuning_tolerance: T::lit(DEFAULT_TOLERANCE_GHZ),
        }
    }
}

impl std::fmt::Display for Process {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// 1 MHz.
pub const DEFAULT_TOLERANCE_GHZ: f64 = 1e-3;

/// Keep the terms oscillating at `±pump_freq` and attach the pump amplitude
/// `beta`: terms at `−pump_freq` (net annihilation of energy) take `beta`,
/// their conjugates `conj(beta)`.
pub fn select_resonant<T: Real>(
    terms: &[HamiltonianTerm<T>],
    pump_freq: T,
    tolerance: T,
    beta: Complex<T>,
) -> Result<EffectiveHamiltonian<T>> {
    let n_modes = terms.first().map(|t| t.n_modes()).unwrap_or(0);
    if !(pump_freq > T::zero()) {
        return Err(Error::InvalidParams(
            "pump frequency must be positive".into(),
        ));
    }
    let min_spacing = minimal_spacing(terms);
    if !(tolerance > T::zero()) || tolerance >= min_spacing {
        return Err(Error::InvalidTolerance {
            tolerance: tolerance.as_f64(),
            min_spacing: min_spacing.as_f64(),
        });
    }
    let mut processes: BTreeMap<(Vec<u32>, Vec<u32>), Vec<HamiltonianTerm<T>>> = BTreeMap::new();
    for t in terms {
        let coefficient = if (t.rotating_freq + pump_freq).abs() <= tolerance {
            t.coefficient * beta
        } else if (t.rotating_freq - pump_freq).abs() <= tolerance {
            t.coefficient * beta.conj()
        } else {
            continue;
        };
        processes
            .entry(t.process_key())
            .or_default()
            .push(HamiltonianTerm {
                coefficient,
                ..t.clone()
            });
    }
    match processes.len() {
        0 => Err(Error::EmptySelection {
            pump_ghz: pump_freq.as_f64(),
        }),
        1 => {
            let mut terms = processes.into_values().next().unwrap();
            sort_terms(&mut terms);
            Ok(EffectiveHamiltonian {
                n_modes,
                terms,
                pump_freq,
                pump_phase: beta.arg(),
                detuning_tolerance: tolerance,
            })
        }
        _ => Err(Error::AmbiguousSelection {
            pump_ghz: pump_freq.as_f64(),
            processes: processes
                .into_values()
                .map(|ts| ts.iter().map(|t| t.label()).collect::<Vec<_>>().join(" + "))
                .collect(),
        }),
    }
}

/// Smallest gap between distinct `|rotating_freq|` values (infinite if
/// there is only one).
pub fn minimal_spacing<T: Real>(terms: &[HamiltonianTerm<T>]) -> T {
    let mut freqs: Vec<T> = terms.iter().map(|t| t.rotating_freq.abs()).collect();
    freqs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let same = T::lit(1e-9);
    freqs
        .windows(2)
        .map(|w| w[1] - w[0])
        .filter(|d| *d > same)
        .fold(T::infinity(), T::min)
}

fn sort_terms<T: Real>(terms: &mut [HamiltonianTerm<T>]) {
    terms.sort_by(|a, b| {
        a.rotating_freq
            .partial_cmp(&b.rotating_freq)
            .unwrap()
            .then_with(|| (&a.creation, &a.annihilation).cmp(&(&b.creation, &b.annihilation)))
    });
}

impl<T: Real> EffectiveHamiltonian<T> {
    pub fn is_hermitian(&self) -> bool {
        let eps = T::epsilon() * T::lit(64.0);
        self.terms.iter().all(|t| {
            let c = t.conjugate();
            self.terms.iter().any(|u| {
                u.creation == c.creation
                    && u.annihilation == c.annihilation
                    && (u.coefficient - c.coefficient).norm()
                        <= eps * (T::one() + c.coefficient.norm())
            })
        })
    }

    /// Which cubic down-conversion process this is, if any. Modes not
    /// touched by any term are ignored; the result also returns the active
    /// modes in order.
    pub fn identify(&self) -> Option<(Process, Vec<usize>)> {
        if self.terms.len() != 2 {
            return None;
        }
        let down = self
            .terms
            .iter()
            .find(|t| t.creation.iter().all(|&c| c == 0))?;
        let active: Vec<usize> = (0..self.n_modes)
            .filter(|&i| down.annihilation[i] > 0)
            .collect();
        let mut powers: Vec<u32> = active.iter().map(|&i| down.annihilation[i]).collect();
        if powers.iter().sum::<u32>() != 3 {
            return None;
        }
        let process = match powers.len() {
            1 => Process::SingleMode,
            2 => {
                // keep the doubly populated mode first
                if powers[0] < powers[1] {
                    powers.swap(0, 1);
                }
                Process::TwoMode
            }
            _ => Process::ThreeMode,
        };
        let mut modes = active;
        if process == Process::TwoMode && down.annihilation[modes[0]] < down.annihilation[modes[1]]
        {
            modes.swap(0, 1);
        }
        Some((process, modes))
    }

    /// Copy acting only on the modes touched by the process (as ordered by
    /// [`identify`](Self::identify)) with every coefficient rescaled so the
    /// down-conversion term has modulus `g`. Returns `None` for
    /// non-cubic Hamiltonians or a vanishing coefficient.
    pub fn normalized_process(&self, g: T) -> Option<(Self, Process)> {
        let (process, modes) = self.identify()?;
        let down = self
            .terms
            .iter()
            .find(|t| t.creation.iter().all(|&c| c == 0))?;
        let norm = down.coefficient.norm();
        if !(norm > T::zero()) {
            return None;
        }
        let pick = |v: &[u32]| modes.iter().map(|&m| v[m]).collect::<Vec<u32>>();
        let terms = self
            .terms
            .iter()
            .map(|t| HamiltonianTerm {
                creation: pick(&t.creation),
                annihilation: pick(&t.annihilation),
                coefficient: t.coefficient * (g / norm),
                rotating_freq: t.rotating_freq,
            })
            .collect();
        Some((
            Self {
                n_modes: modes.len(),
                terms,
                pump_freq: self.pump_freq,
                pump_phase: down.coefficient.arg(),
                detuning_tolerance: self.detuning_tolerance,
            },
            process,
        ))
    }

    /// Stable text rendering: terms sorted by rotating frequency, coefficient
    /// phases referred to the pump phase so the down-conversion term reads
    /// real and positive.
    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "pump_ghz {:.6}", self.pump_freq.as_f64());
        let _ = writeln!(
            s,
            "tolerance_mhz {:.3}",
            self.detuning_tolerance.as_f64() * 1e3
        );
        let _ = writeln!(s, "pump_phase_rad {:.6}", self.pump_phase.as_f64());
        let process = self.identify().map(|(p, _)| p.name()).unwrap_or("other");
        let _ = writeln!(s, "process {process}");
        let _ = writeln!(s, "terms {}", self.terms.len());
        let reference = Complex::from_polar(T::one(), -self.pump_phase);
        let mut terms = self.terms.clone();
        sort_terms(&mut terms);
        for t in &terms {
            // conjugate-side terms carry the opposite phase
            let c = if t.rotating_freq < T::zero() {
                t.coefficient * reference
            } else {
                t.coefficient * reference.conj()
            };
            let re = clean(c.re.as_f64());
            let im = clean(c.im.as_f64());
            let _ = writeln!(
                s,
                "  {:<24} freq_ghz {:+.6}  coeff {:+.6e} {:+.6e}i",
                t.label(),
                t.rotating_freq.as_f64(),
                re,
                im
            );
        }
        s
    }
}

fn clean(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        0.0
    } else {
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const FREQS: [f64; 3] = [4.2, 6.1, 7.5];

    fn find<'a>(
        terms: &'a [HamiltonianTerm<f64>],
        c: &[u32],
        a: &[u32],
    ) -> &'a HamiltonianTerm<f64> {
        terms
            .iter()
            .find(|t| t.creation == c && t.annihilation == a)
            .unwrap()
    }

    #[test]
    fn single_mode_cubic_has_four_monomials() {
        let terms = enumerate_terms(&[4.2], 3, 1.0).unwrap();
        assert_eq!(terms.len(), 4);
        let a3 = find(&terms, &[0], &[3]);
        assert!((a3.rotating_freq + 12.6).abs() < 1e-12);
        assert_eq!(a3.coefficient.re, 1.0);
        assert_eq!(find(&terms, &[1], &[2]).coefficient.re, 3.0);
    }

    #[test]
    fn three_mode_rotating_frequency() {
        let terms = enumerate_terms(&FREQS, 3, 1.0).unwrap();
        let t = find(&terms, &[0, 0, 0], &[1, 1, 1]);
        assert!((t.rotating_freq + 17.8).abs() < 1e-12);
        assert_eq!(t.coefficient.re, 6.0);
    }

    #[test]
    fn multinomial_completeness() {
        for order in 1..=4 {
            let terms = enumerate_terms(&FREQS, order, 0.5).unwrap();
            let total: f64 = terms.iter().map(|t| t.coefficient.re).sum();
            assert_eq!(total, 6f64.powi(order as i32) * 0.5);
            for t in &terms {
                assert!((t.rotating_freq - t.frequency_from_powers(&FREQS)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn conjugation_is_a_bijection() {
        let terms = enumerate_terms(&FREQS, 4, 1.0).unwrap();
        for t in &terms {
            let c = t.conjugate();
            let matches = terms
                .iter()
                .filter(|u| u.creation == c.creation && u.annihilation == c.annihilation)
                .count();
            assert_eq!(matches, 1);
            assert!(
                (find(&terms, &c.creation, &c.annihilation).rotating_freq - c.rotating_freq).abs()
                    < 1e-12
            );
        }
    }

    #[test]
    fn table_rows_are_selected_exactly() {
        let terms = enumerate_terms(&FREQS, 3, 1.0).unwrap();
        let beta = Complex::new(1.0, 0.0);
        for (pump, process) in [
            (12.6, Process::SingleMode),
            (14.5, Process::TwoMode),
            (17.8, Process::ThreeMode),
        ] {
            let eff = select_resonant(&terms, pump, DEFAULT_TOLERANCE_GHZ, beta).unwrap();
            assert_eq!(eff.terms.len(), 2);
            assert!(eff.is_hermitian());
            let (p, _) = eff.identify().unwrap();
            assert_eq!(p, process);
        }
    }

    #[test]
    fn pump_phase_lands_on_annihilation_term() {
        let terms = enumerate_terms(&[4.2], 3, 1.0).unwrap();
        let eff = select_resonant(&terms, 12.6, 1e-3, Complex::from_polar(2.0, 0.3)).unwrap();
        let down = find(&eff.terms, &[0], &[3]);
        assert!((down.coefficient - Complex::from_polar(2.0, 0.3)).norm() < 1e-12);
        let up = find(&eff.terms, &[3], &[0]);
        assert!((up.coefficient - Complex::from_polar(2.0, -0.3)).norm() < 1e-12);
    }

    #[test]
    fn beamsplitter_type_term_is_found() {
        let terms = enumerate_terms(&FREQS, 3, 1.0).unwrap();
        let eff = select_resonant(&terms, 9.4, 1e-3, Complex::new(1.0, 0.0)).unwrap();
        assert_eq!(eff.terms.len(), 2);
        assert!(eff.is_hermitian());
        find(&eff.terms, &[1, 0, 0], &[0, 1, 1]);
        find(&eff.terms, &[0, 1, 1], &[1, 0, 0]);
    }

    #[test]
    fn off_resonant_pump_is_empty() {
        let terms = enumerate_terms(&FREQS, 3, 1.0).unwrap();
        let err = select_resonant(&terms, 9.0, 1e-6, Complex::new(1.0, 0.0)).unwrap_err();
        assert!(matches!(err, Error::EmptySelection { .. }));
    }

    #[test]
    fn degenerate_pump_is_ambiguous() {
        // 4.2 GHz matches a1dag a1^2 and a1 a2dag a2-type terms alike
        let terms = enumerate_terms(&FREQS, 3, 1.0).unwrap();
        let err = select_resonant(&terms, 4.2, 1e-3, Complex::new(1.0, 0.0)).unwrap_err();
        assert!(matches!(err, Error::AmbiguousSelection { .. }));
    }

    #[test]
    fn oversized_tolerance_is_rejected() {
        let terms = enumerate_terms(&FREQS, 3, 1.0).unwrap();
        let err = select_resonant(&terms, 12.6, 5.0, Complex::new(1.0, 0.0)).unwrap_err();
        assert!(matches!(err, Error::InvalidTolerance { .. }));
    }

    #[test]
    fn canonical_matches_selected_up_to_multinomial() {
        let terms = enumerate_terms(&FREQS, 3, 1.0).unwrap();
        let eff = select_resonant(&terms, 14.5, 1e-3, Complex::new(1.0, 0.0)).unwrap();
        let canon = Process::TwoMode.canonical(&FREQS, 3.0, 0.0);
        assert_eq!(canon.identify().unwrap().0, Process::TwoMode);
        for t in &canon.terms {
            let u = find(&eff.terms, &padded(&t.creation), &padded(&t.annihilation));
            assert!((u.coefficient - t.coefficient).norm() < 1e-12);
        }
    }

    #[test]
    fn normalized_process_drops_idle_modes() {
        let terms = enumerate_terms(&FREQS, 3, -0.2).unwrap();
        let eff = select_resonant(&terms, 14.5, 1e-3, Complex::from_polar(0.5, 0.4)).unwrap();
        let (red, p) = eff.normalized_process(1.0).unwrap();
        assert_eq!(p, Process::TwoMode);
        assert_eq!(red.n_modes, 2);
        let down = find(&red.terms, &[0, 0], &[2, 1]);
        assert!((down.coefficient.norm() - 1.0).abs() < 1e-12);
        assert!((down.coefficient.arg() - (0.4 - std::f64::consts::PI)).abs() < 1e-12);
        assert_eq!(red.identify().unwrap(), (Process::TwoMode, vec![0, 1]));
        assert!(red.is_hermitian());
    }

    fn padded(v: &[u32]) -> Vec<u32> {
        let mut out = v.to_vec();
        out.resize(3, 0);
        out
    }

    #[test]
    fn render_is_stable() {
        let terms = enumerate_terms(&FREQS, 3, 1.0).unwrap();
        let eff = select_resonant(&terms, 17.8, 1e-3, Complex::from_polar(1.0, 1.1)).unwrap();
        let text = eff.render();
        assert_eq!(text, eff.clone().render());
        assert!(text.contains("process H_3M"));
        assert!(text.contains("a1 a2 a3"));
        assert!(text.contains("a1dag a2dag a3dag"));
        assert!(text.contains("coeff +6.000000e0 +0.000000e0i"));
    }
}
