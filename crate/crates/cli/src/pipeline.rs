use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};
use std::path::Path;

use serde_json::{json, Value};
use trispdc::feedforward::{correlation_table, variance_ratio};
use trispdc::fock::{default_cutoff, FockSpace};
use trispdc::measurement::{flux_density, reference_noise_photons};
use trispdc::stats::{
    histogram2d, polar_scan, pump_phase_sweep, spherical_scan, theory_fingerprint,
    theory_polar_scan, threefold_fit, BinGrid, CumulantSummary, FingerprintMap, ScanGrid,
};
use trispdc::{
    apply_feedforward, evolve_vacuum, sample_heterodyne, EffectiveHamiltonian64,
    FeedForwardOptions, FockState64, Process, Protocol, QuadratureId, QuadratureRecord64,
};

use crate::artifacts::ArtifactDir;
use crate::config::{device_hamiltonian, RunConfig};
use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
#[value(rename_all = "snake_case")]
pub enum Pipeline {
    Fig2,
    Fig3,
    Fig4,
    Fig5,
    Fig6Table2,
    Fig7,
}

impl Pipeline {
    pub fn name(self) -> &'static str {
        match self {
            Pipeline::Fig2 => "fig2",
            Pipeline::Fig3 => "fig3",
            Pipeline::Fig4 => "fig4",
            Pipeline::Fig5 => "fig5",
            Pipeline::Fig6Table2 => "fig6_table2",
            Pipeline::Fig7 => "fig7",
        }
    }
}

/// Pump phase putting the two-mode third moment on the real axis.
pub const ALIGNED_PHASE: f64 = -FRAC_PI_2;
/// Three-mode phase at which all four feed-forward correlations are nonzero.
pub const FEEDFORWARD_3M_PHASE: f64 = -FRAC_PI_4;

/// Independent seed for the `k`-th record of a run (splitmix64).
pub fn derive_seed(seed: u64, k: u64) -> u64 {
    let mut z = seed.wrapping_add(0x9E37_79B9_7F4A_7C15u64.wrapping_mul(k + 1));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub struct Simulated {
    pub record: QuadratureRecord64,
    pub state: FockState64,
    pub cutoff: usize,
    pub leaked: bool,
}

pub struct Prepared<'a> {
    pub eff: Option<&'a EffectiveHamiltonian64>,
    pub state: FockState64,
    pub leaked: bool,
}

/// Evolves the vacuum under `eff` for `g·t = gt`; the bare vacuum when `eff`
/// is `None` or `gt = 0`.
pub fn prepare_state(
    eff: Option<&EffectiveHamiltonian64>,
    n_modes: usize,
    gt: f64,
    cutoff: Option<usize>,
) -> CliResult<Prepared<'_>> {
    match eff {
        Some(e) if gt > 0.0 => {
            let out = evolve_vacuum(e, gt, cutoff.unwrap_or_else(|| default_cutoff(n_modes)))?;
            if out.leaked() {
                log::warn!(
                    "Fock cutoff {} still holds {:.2e} population in its top levels at g*t = {gt}",
                    out.state.space().cutoffs()[0],
                    out.top_level_population
                );
            }
            let leaked = out.leaked();
            Ok(Prepared {
                eff,
                state: out.state,
                leaked,
            })
        }
        _ => Ok(Prepared {
            eff: None,
            state: FockState64::vacuum(&FockSpace::new(&vec![1; n_modes])?),
            leaked: false,
        }),
    }
}

impl Prepared<'_> {
    pub fn sample(
        &self,
        samples: usize,
        noise: &[f64],
        gain: f64,
        seed: u64,
    ) -> CliResult<Simulated> {
        let mut record = sample_heterodyne(&self.state, samples, gain, noise, seed)?;
        record.pump_on = self.eff.is_some();
        record.pump_phase = self.eff.map(|e| e.pump_phase).unwrap_or(0.0);
        Ok(Simulated {
            record,
            state: self.state.clone(),
            cutoff: self.state.space().cutoffs()[0],
            leaked: self.leaked,
        })
    }
}

/// [`prepare_state`] followed by one heterodyne record, with drive, sample
/// count, gain and cutoff taken from `cfg`.
pub fn simulate_record(
    cfg: &RunConfig,
    eff: Option<&EffectiveHamiltonian64>,
    process: Process,
    noise: &[f64],
    seed: u64,
) -> CliResult<Simulated> {
    prepare_state(eff, process.n_modes(), cfg.drive(process), cfg.cutoff)?.sample(
        cfg.samples,
        noise,
        cfg.gain,
        seed,
    )
}

struct Ctx<'a> {
    cfg: &'a RunConfig,
    out: ArtifactDir,
}

impl Ctx<'_> {
    fn hamiltonian(
        &self,
        process: Process,
        default_phase: f64,
    ) -> CliResult<Option<EffectiveHamiltonian64>> {
        if self.cfg.drive(process) == 0.0 {
            return Ok(None);
        }
        device_hamiltonian(
            self.cfg,
            process,
            None,
            Some(self.cfg.hamiltonian_phase.unwrap_or(default_phase)),
        )
    }

    fn simulate(
        &self,
        eff: Option<&EffectiveHamiltonian64>,
        process: Process,
        noise: &[f64],
        k: u64,
    ) -> CliResult<Simulated> {
        simulate_record(self.cfg, eff, process, noise, derive_seed(self.cfg.seed, k))
    }
}

fn map_summary(map: &FingerprintMap<f64>) -> Value {
    json!({
        "node_antinode_ratio": map.node_antinode_ratio,
        "max_abs_gamma": map.max_abs(),
        "points": map.values.len(),
    })
}

/// Runs one figure pipeline into `out`, writing data files, `summary.json`,
/// `manifest.json` and `runtimes.json`. Returns the summary.
pub fn run_pipeline(cfg: &RunConfig, pipeline: Pipeline, out: &Path) -> CliResult<Value> {
    cfg.validate()?;
    let mut ctx = Ctx {
        cfg,
        out: ArtifactDir::create(out)?,
    };
    let summary = match pipeline {
        Pipeline::Fig2 => fig2(&mut ctx)?,
        Pipeline::Fig3 => fig3(&mut ctx)?,
        Pipeline::Fig4 => fig4(&mut ctx)?,
        Pipeline::Fig5 => fig5(&mut ctx)?,
        Pipeline::Fig6Table2 => fig6_table2(&mut ctx)?,
        Pipeline::Fig7 => fig7(&mut ctx)?,
    };
    let summary = json!({ "pipeline": pipeline.name(), "seed": cfg.seed, "results": summary });
    ctx.out.write_json("summary.json", &summary)?;
    let config_toml = cfg.to_toml();
    ctx.out.write("config.toml", config_toml.as_bytes())?;
    ctx.out.finish(json!({
        "pipeline": pipeline.name(),
        "seed": cfg.seed,
        "config_sha256": cfg.content_hash(),
    }))?;
    Ok(summary)
}

fn fig2(ctx: &mut Ctx) -> CliResult<Value> {
    let p = Process::SingleMode;
    let eff = ctx.hamiltonian(p, ALIGNED_PHASE)?;
    let prepared = prepare_state(eff.as_ref(), 1, ctx.cfg.drive(p), ctx.cfg.cutoff)?;
    let photons = prepared.state.mean_occupations()[0];
    let noise = if ctx.cfg.noise_photons.is_empty() {
        vec![reference_noise_photons(photons)]
    } else {
        ctx.cfg.noise_for(1)
    };
    let signal = prepared.sample(
        ctx.cfg.samples,
        &noise,
        ctx.cfg.gain,
        derive_seed(ctx.cfg.seed, 1),
    )?;
    let reference = ctx.simulate(None, p, &noise, 2)?;
    ctx.out.stage("simulate");

    let half_width = 4.5 * (1.0 + noise[0] + 2.0 * photons).sqrt();
    let grid = BinGrid::symmetric(61, half_width)?;
    let h_sig = histogram2d(&signal.record, 0, grid, None)?;
    let h_ref = histogram2d(&reference.record, 0, grid, None)?;
    let h_sub = h_sig.subtract(&h_ref)?;
    ctx.out
        .write_with("hist_signal.csv", |w| h_sig.write_csv(w))?;
    ctx.out
        .write_with("hist_reference.csv", |w| h_ref.write_csv(w))?;
    ctx.out
        .write_with("hist_subtracted.csv", |w| h_sub.write_csv(w))?;

    let polar = polar_scan(&signal.record, 0, 360)?;
    ctx.out.write_with("polar.csv", |w| polar.write_csv(w))?;
    let fit = threefold_fit(&polar)?;
    let mut periodicity = 0.0f64;
    for k in 0..360 {
        let j = (k + 120) % 360;
        let d = (polar.values[k] - polar.values[j]).abs();
        periodicity = periodicity.max(d / polar.std_errors[k].hypot(polar.std_errors[j]));
    }
    let node_z: Vec<f64> = fit
        .nodes()
        .iter()
        .map(|&n| polar.polar_value_at(n).abs() / polar.polar_error_at(n))
        .collect();
    let theory = match &eff {
        Some(e) => {
            let t = theory_polar_scan(e, 0, 360, ctx.cfg.drive(p))?;
            ctx.out.write_with("theory_polar.csv", |w| t.write_csv(w))?;
            Some(polar.normalized().cosine_similarity(&t)?)
        }
        None => None,
    };
    let kappa = ctx.cfg.device.kappas()[0];
    let flux = flux_density(&signal.record, 0, kappa, None)?;
    ctx.out.stage("analyze");
    Ok(json!({
        "process": p.name(),
        "drive_strength": ctx.cfg.drive(p),
        "pump_on": signal.record.pump_on,
        "fock_cutoff": signal.cutoff,
        "fock_leak_flag": signal.leaked,
        "state_photons": photons,
        "noise_photons": noise[0],
        "flux_estimate": { "photons": flux.photons, "value": flux.value, "std_error": flux.std_error, "clamped": flux.clamped },
        "polar": map_summary(&polar),
        "max_periodicity_deviation_sigma": periodicity,
        "threefold_fit": fit,
        "fitted_nodes": fit.nodes(),
        "node_gamma_over_error": node_z,
        "theory_cosine_similarity": theory,
        "histogram_harmonics": (1..=6).map(|k| h_sub.harmonic_strength(k)).collect::<Vec<_>>(),
        "lobe_angle": h_sub.lobe_angle(3),
    }))
}

fn fig3(ctx: &mut Ctx) -> CliResult<Value> {
    let p = Process::ThreeMode;
    let phases: Vec<f64> = (0..17).map(|k| -2.0 * PI + PI * k as f64 / 4.0).collect();
    let key = [QuadratureId::i(0), QuadratureId::i(1), QuadratureId::i(2)];
    let noise = ctx.cfg.noise_for(3);
    let gt = ctx.cfg.drive(p);
    let mut k = 0;
    let cfg = ctx.cfg;
    let sweep = pump_phase_sweep(&phases, key, |phase| {
        k += 1;
        let eff = if gt > 0.0 {
            device_hamiltonian(cfg, p, Some(phase), None).map_err(to_core)?
        } else {
            None
        };
        simulate_record(cfg, eff.as_ref(), p, &noise, derive_seed(cfg.seed, k))
            .map(|s| s.record)
            .map_err(to_core)
    })?;
    ctx.out.stage("sweep");
    ctx.out.write_with("sweep.csv", |w| sweep.write_csv(w))?;
    let max_cosk_z = sweep
        .rows
        .iter()
        .map(|r| r.coskewness.z())
        .fold(0.0, f64::max);
    Ok(json!({
        "process": p.name(),
        "drive_strength": gt,
        "key": sweep.key,
        "fit": sweep.fit,
        "fit_amplitude": sweep.fit.amplitude(),
        "max_coskewness_sigma": max_cosk_z,
        "max_correlation_sigma": sweep.max_correlation_z(),
    }))
}

fn to_core(e: CliError) -> trispdc::Error {
    if e.usage {
        trispdc::Error::Config(e.message)
    } else {
        trispdc::Error::InvalidParams(e.message)
    }
}

fn fig4(ctx: &mut Ctx) -> CliResult<Value> {
    let p = Process::TwoMode;
    let eff = ctx.hamiltonian(p, ALIGNED_PHASE)?;
    let sim = ctx.simulate(eff.as_ref(), p, &ctx.cfg.noise_for(2), 0)?;
    ctx.out.stage("simulate");
    let sel = [
        QuadratureId::i(0),
        QuadratureId::q(0),
        QuadratureId::i(1),
        QuadratureId::q(1),
    ];
    let summary = CumulantSummary::from_record(&sim.record, &sel)?;
    let csv = {
        let mut s = String::from("triple,coskewness,std_error,sigma\n");
        for e in &summary.coskewness {
            s += &format!(
                "{},{:?},{:?},{:?}\n",
                e.label,
                e.value,
                e.std_error,
                e.value.abs() / e.std_error
            );
        }
        s
    };
    ctx.out.write("coskewness.csv", csv.as_bytes())?;
    ctx.out.write_json("cumulants.json", &summary)?;
    let pick = |label: &str| {
        summary
            .coskewness
            .iter()
            .find(|e| e.label == label)
            .map(|e| json!(e))
    };
    ctx.out.stage("analyze");
    Ok(json!({
        "process": p.name(),
        "drive_strength": ctx.cfg.drive(p),
        "pump_phase": sim.record.pump_phase,
        "I1I1I2": pick("I1I1I2"),
        "Q1Q1I2": pick("Q1Q1I2"),
        "I1Q1I2": pick("I1Q1I2"),
    }))
}

fn fig5(ctx: &mut Ctx) -> CliResult<Value> {
    let p = ctx.cfg.process;
    let gt = ctx.cfg.drive(p);
    let eff = ctx.hamiltonian(p, ALIGNED_PHASE)?;
    let Some(eff) = eff else {
        return Err(CliError::usage(
            "fig5 needs the pump on and a positive drive_strength",
        ));
    };
    let sim = ctx.simulate(Some(&eff), p, &ctx.cfg.noise_for(p.n_modes()), 0)?;
    ctx.out.stage("simulate");
    let (data, theory, selection) = match p {
        Process::SingleMode => (
            polar_scan(&sim.record, 0, 360)?,
            theory_polar_scan(&eff, 0, 360, gt)?,
            vec!["I1".to_string(), "Q1".into()],
        ),
        _ => {
            let sel = if p == Process::ThreeMode {
                [QuadratureId::i(0), QuadratureId::i(1), QuadratureId::i(2)]
            } else {
                [QuadratureId::i(0), QuadratureId::q(0), QuadratureId::i(1)]
            };
            let grid = ScanGrid::default();
            (
                spherical_scan(&sim.record, sel, grid)?,
                theory_fingerprint(&eff, sel, grid, gt)?,
                sel.iter().map(|q| q.to_string()).collect(),
            )
        }
    };
    let similarity = data.normalized().cosine_similarity(&theory)?;
    ctx.out
        .write_with("fingerprint_data.csv", |w| data.write_csv(w))?;
    ctx.out
        .write_with("fingerprint_theory.csv", |w| theory.write_csv(w))?;
    ctx.out.stage("analyze");
    Ok(json!({
        "process": p.name(),
        "drive_strength": gt,
        "quadratures": selection,
        "fock_cutoff": sim.cutoff,
        "data": map_summary(&data),
        "theory": map_summary(&theory),
        "cosine_similarity": similarity,
    }))
}

fn table_json(t: &std::collections::BTreeMap<String, trispdc::stats::Estimate<f64>>) -> Value {
    json!(t)
}

fn fig6_table2(ctx: &mut Ctx) -> CliResult<Value> {
    let p = Process::ThreeMode;
    let eff = ctx.hamiltonian(p, FEEDFORWARD_3M_PHASE)?;
    let noise = ctx.cfg.noise_for(3);
    let on = ctx.simulate(eff.as_ref(), p, &noise, 0)?;
    let off = ctx.simulate(None, p, &noise, 1)?;
    ctx.out.stage("simulate");
    let mut rows = String::from("pump,feedforward,pair,coefficient,std_error\n");
    let mut summary = serde_json::Map::new();
    for (pump, rec) in [("on", &on.record), ("off", &off.record)] {
        let ff = apply_feedforward(rec, 0, Protocol::ThreeMode, FeedForwardOptions::default())?;
        let raw = correlation_table(rec, 1, 2)?;
        for (flag, table) in [("yes", &ff.correlation_table), ("no", &raw)] {
            for (pair, e) in table {
                rows += &format!("{pump},{flag},{pair},{:?},{:?}\n", e.value, e.std_error);
            }
            summary.insert(format!("pump_{pump}_feedforward_{flag}"), table_json(table));
        }
        summary.insert(
            format!("pump_{pump}_cross_singular_values"),
            json!(ff.cross_singular_values),
        );
    }
    ctx.out.write("table2.csv", rows.as_bytes())?;
    ctx.out.stage("analyze");
    summary.insert("process".into(), json!(p.name()));
    summary.insert("drive_strength".into(), json!(ctx.cfg.drive(p)));
    summary.insert("pump_phase".into(), json!(on.record.pump_phase));
    Ok(Value::Object(summary))
}

fn fig7(ctx: &mut Ctx) -> CliResult<Value> {
    let p = Process::TwoMode;
    let eff = ctx.hamiltonian(p, ALIGNED_PHASE)?;
    let noise = ctx.cfg.noise_for(2);
    let on = ctx.simulate(eff.as_ref(), p, &noise, 0)?;
    let off = ctx.simulate(None, p, &noise, 1)?;
    ctx.out.stage("simulate");
    let ff_on = apply_feedforward(
        &on.record,
        1,
        Protocol::TwoMode,
        FeedForwardOptions::default(),
    )?;
    let ff_off = apply_feedforward(
        &off.record,
        1,
        Protocol::TwoMode,
        FeedForwardOptions::default(),
    )?;
    let without = variance_ratio(&on.record, 0)?;
    let spread = (1.0 + noise[0] + 2.0 * on.state.mean_occupations()[0]).sqrt();
    let grid = BinGrid::symmetric(61, 4.5 * spread)?;
    let h = histogram2d(
        &ff_on.corrected_record,
        0,
        grid,
        Some(&ff_off.corrected_record),
    )?;
    ctx.out
        .write_with("hist_corrected_subtracted.csv", |w| h.write_csv(w))?;
    let h_raw = histogram2d(&on.record, 0, grid, Some(&off.record))?;
    ctx.out
        .write_with("hist_raw_subtracted.csv", |w| h_raw.write_csv(w))?;
    ctx.out.stage("analyze");
    Ok(json!({
        "process": p.name(),
        "drive_strength": ctx.cfg.drive(p),
        "pump_phase": on.record.pump_phase,
        "variance_ratio_feedforward": ff_on.variance_ratio,
        "variance_ratio_without": without,
        "variance_ratio_pump_off_feedforward": ff_off.variance_ratio,
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(drive: Option<f64>) -> RunConfig {
        RunConfig {
            samples: 20_000,
            drive_strength: drive,
            ..Default::default()
        }
    }

    #[test]
    fn derived_seeds_differ() {
        let s: std::collections::HashSet<u64> = (0..100).map(|k| derive_seed(7, k)).collect();
        assert_eq!(s.len(), 100);
    }

    #[test]
    fn fig2_without_drive_is_featureless() {
        let dir = tempfile::tempdir().unwrap();
        let s = run_pipeline(&small(Some(0.0)), Pipeline::Fig2, dir.path()).unwrap();
        let r = &s["results"];
        assert_eq!(r["pump_on"], json!(false));
        assert!(r["theory_cosine_similarity"].is_null());
        let polar = std::fs::read_to_string(dir.path().join("polar.csv")).unwrap();
        for line in polar.lines().skip(1) {
            let v: Vec<f64> = line.split(',').map(|x| x.parse().unwrap()).collect();
            assert!(v[1].abs() < 5.0 * v[2]);
        }
    }

    #[test]
    fn fig5_is_byte_identical_across_runs() {
        let cfg = RunConfig {
            process: Process::TwoMode,
            ..small(None)
        };
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        run_pipeline(&cfg, Pipeline::Fig5, a.path()).unwrap();
        run_pipeline(&cfg, Pipeline::Fig5, b.path()).unwrap();
        for f in [
            "fingerprint_data.csv",
            "fingerprint_theory.csv",
            "summary.json",
            "manifest.json",
        ] {
            assert_eq!(
                std::fs::read(a.path().join(f)).unwrap(),
                std::fs::read(b.path().join(f)).unwrap(),
                "{f}"
            );
        }
    }
}
