//! End-to-end acceptance checks. Runs as a plain binary (`harness = false`)
//! so that every criterion prints exactly one PASS/FAIL line.

use std::f64::consts::{FRAC_PI_2, PI};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use trispdc::device::{
    coupling_constants, effective_josephson_energy, effective_offset_alpha, expand_potential,
};
use trispdc::fock::{build_hamiltonian, default_cutoff, q_function_moments};
use trispdc::measurement::{
    read_csv, read_record, record_from_bytes, record_to_bytes, reference_noise_photons, write_csv,
    write_record,
};
use trispdc::rwa::{enumerate_terms, select_resonant, HamiltonianTerm, DEFAULT_TOLERANCE_GHZ};
use trispdc::stats::{
    polar_scan, pump_phase_sweep, spherical_scan, theory_fingerprint, threefold_fit, ScanGrid,
    DEFAULT_BATCHES,
};
use trispdc::{
    apply_feedforward, evolve, evolve_vacuum, sample_heterodyne, DeviceParams64,
    EffectiveHamiltonian64, EvolveMethod, FeedForwardOptions, FockSpace, FockState, FockState64,
    MomentTensor, Process, Protocol, QuadratureId, QuadratureRecord, QuadratureRecord64,
};

const FREQS: [f64; 3] = [4.2, 6.1, 7.5];
const TABLE_PUMPS: [(f64, Process); 3] = [
    (12.6, Process::SingleMode),
    (14.5, Process::TwoMode),
    (17.8, Process::ThreeMode),
];
const Z_NULL: f64 = 5.0;
const Z_SIGNAL: f64 = 10.0;
const ORACLE_DISTANCE: f64 = 1e-8;
const SELECTION_LEAK: f64 = 1e-10;
const COSINE_MIN: f64 = 0.99;
const NODE_RATIO_MAX: f64 = 1e-2;
const R2_MIN: f64 = 0.99;
const VARIANCE_RATIO_MIN: f64 = 1.05;
const MILLION: usize = 1_000_000;

type Check = Result<String, String>;

fn ensure(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn canonical(p: Process, phase: f64) -> EffectiveHamiltonian64 {
    p.canonical(&FREQS, 1.0, phase)
}

fn state(p: Process, gt: f64, phase: f64) -> Result<FockState64, String> {
    let out = evolve_vacuum(&canonical(p, phase), gt, default_cutoff(p.n_modes())).map_err(err)?;
    Ok(out.state)
}

fn record(s: &FockState64, n: usize, noise: f64, seed: u64) -> Result<QuadratureRecord64, String> {
    let modes = s.space().n_modes();
    sample_heterodyne(s, n, 1.0, &vec![noise; modes], seed).map_err(err)
}

fn all_quads(n_modes: usize) -> Vec<QuadratureId> {
    (0..n_modes)
        .flat_map(|m| [QuadratureId::i(m), QuadratureId::q(m)])
        .collect()
}

fn triples(d: usize) -> Vec<(usize, usize, usize)> {
    let mut out = Vec::new();
    for i in 0..d {
        for j in i..d {
            for k in j..d {
                out.push((i, j, k));
            }
        }
    }
    out
}

fn table_i() -> Check {
    let device = DeviceParams64::default();
    let exp = expand_potential(&device, 3).map_err(err)?;
    let g3 = coupling_constants(&exp, &device.zero_point_amplitudes)
        .map_err(err)?
        .by_order[3];
    let terms = enumerate_terms(&FREQS, 3, g3).map_err(err)?;
    for (pump, want) in TABLE_PUMPS {
        let eff = select_resonant(&terms, pump, DEFAULT_TOLERANCE_GHZ, Complex::new(1.0, 0.0))
            .map_err(err)?;
        ensure(
            eff.terms.len() == 2,
            format!("{pump} GHz: {} terms", eff.terms.len()),
        )?;
        let (got, modes) = eff.identify().ok_or(format!("{pump} GHz: unrecognised"))?;
        ensure(got == want, format!("{pump} GHz selects {got}"))?;
        let mut powers = vec![0u32; 3];
        for (slot, m) in want.powers().iter().zip(&modes) {
            powers[*m] = *slot;
        }
        let down = eff
            .terms
            .iter()
            .find(|t| t.creation.iter().all(|&c| c == 0))
            .ok_or("no down-conversion term")?;
        let up = eff
            .terms
            .iter()
            .find(|t| t.annihilation.iter().all(|&c| c == 0))
            .ok_or("no conjugate term")?;
        ensure(
            down.annihilation == powers && up.creation == powers,
            format!("{pump} GHz: wrong monomials"),
        )?;
        ensure(
            (down.coefficient - up.coefficient.conj()).norm() < 1e-15 * down.coefficient.norm(),
            "terms are not conjugate",
        )?;
    }
    Ok("H_1M, H_2M, H_3M at 12.6/14.5/17.8 GHz, two terms each".into())
}

fn random_cubic(rng: &mut ChaCha8Rng, n_modes: usize) -> EffectiveHamiltonian64 {
    let mut terms = Vec::new();
    for _ in 0..rng.gen_range(1..=4) {
        let mut creation = vec![0u32; n_modes];
        let mut annihilation = vec![0u32; n_modes];
        for _ in 0..3 {
            let m = rng.gen_range(0..n_modes);
            if rng.gen_bool(0.5) {
                creation[m] += 1;
            } else {
                annihilation[m] += 1;
            }
        }
        let t = HamiltonianTerm {
            creation,
            annihilation,
            coefficient: Complex::from_polar(rng.gen_range(0.2..1.0), rng.gen_range(-PI..PI)),
            rotating_freq: 0.0,
        };
        let c = t.conjugate();
        if c.creation == t.creation {
            let mut t = t;
            t.coefficient = Complex::new(t.coefficient.norm(), 0.0);
            terms.push(t);
        } else {
            terms.push(t);
            terms.push(c);
        }
    }
    EffectiveHamiltonian64 {
        n_modes,
        terms,
        pump_freq: 1.0,
        pump_phase: 0.0,
        detuning_tolerance: DEFAULT_TOLERANCE_GHZ,
    }
}

fn oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst = 0.0f64;
    let mut largest = 0;
    for case in 0..20 {
        let n_modes = 1 + case % 3;
        let cutoff = match n_modes {
            1 => rng.gen_range(12..=199),
            2 => rng.gen_range(5..=13),
            _ => rng.gen_range(3..=4),
        };
        let space = FockSpace::new(&vec![cutoff; n_modes]).map_err(err)?;
        largest = largest.max(space.dim());
        let eff = random_cubic(&mut rng, n_modes);
        let h = build_hamiltonian(&space, &eff).map_err(err)?;
        let amps = (0..space.dim())
            .map(|i| {
                let w = (-(i as f64) / 8.0).exp();
                Complex::new(rng.gen_range(-1.0..1.0) * w, rng.gen_range(-1.0..1.0) * w)
            })
            .collect();
        let psi = FockState::from_amplitudes(&space, amps)
            .map_err(err)?
            .normalized();
        let t = rng.gen_range(0.05..1.0) / (cutoff as f64).sqrt();
        let a = evolve(&psi, &h, t, EvolveMethod::Stepper).map_err(err)?;
        let b = evolve(&psi, &h, t, EvolveMethod::ExpmOracle).map_err(err)?;
        let d = a.state.distance(&b.state);
        ensure(
            d <= ORACLE_DISTANCE,
            format!("case {case}: distance {d:.2e}"),
        )?;
        worst = worst.max(d);
    }
    Ok(format!(
        "20 cases, dim <= {largest}, max distance {worst:.2e}"
    ))
}

fn selection_rules() -> Check {
    let cases: [(Process, usize, fn(&[usize]) -> bool); 2] = [
        (Process::ThreeMode, 10, |n| n[0] == n[1] && n[1] == n[2]),
        (Process::TwoMode, 24, |n| n[0] == 2 * n[1]),
    ];
    let mut report = Vec::new();
    for (p, cutoff, allowed) in cases {
        let space = FockSpace::new(&vec![cutoff; p.n_modes()]).map_err(err)?;
        let h = build_hamiltonian(&space, &canonical(p, 0.3)).map_err(err)?;
        let out =
            evolve(&FockState::vacuum(&space), &h, 0.6, EvolveMethod::Stepper).map_err(err)?;
        let total = out.state.norm().powi(2);
        let mut forbidden = 0.0;
        let mut allowed_excited = 0.0;
        for occ in space.occupations() {
            let pop = out.state.population(&occ);
            if allowed(&occ) {
                if occ.iter().any(|&n| n > 0) {
                    allowed_excited += pop;
                }
            } else {
                forbidden += pop;
            }
        }
        let rel = forbidden / total;
        ensure(
            rel < SELECTION_LEAK,
            format!("{p}: forbidden population {rel:.2e}"),
        )?;
        ensure(allowed_excited > 0.05, format!("{p}: nothing generated"))?;
        report.push(format!("{p} forbidden {rel:.1e}"));
    }
    Ok(report.join(", "))
}

fn star_symmetry() -> Check {
    let p = Process::SingleMode;
    let gt = 0.1;
    let evolved = evolve_vacuum(&canonical(p, -FRAC_PI_2), gt, default_cutoff(1)).map_err(err)?;
    let photons = evolved.state.mean_occupations()[0];
    let noise = reference_noise_photons(photons);
    let rec = record(&evolved.state, 2 * MILLION, noise, 41)?;
    let map = polar_scan(&rec, 0, 360).map_err(err)?;
    let mut worst = 0.0f64;
    for k in 0..360 {
        let j = (k + 120) % 360;
        let se = map.std_errors[k].hypot(map.std_errors[j]);
        worst = worst.max((map.values[k] - map.values[j]).abs() / se);
    }
    ensure(
        worst < Z_NULL,
        format!("periodicity deviation {worst:.2} sigma"),
    )?;
    let fit = threefold_fit(&map).map_err(err)?;
    let peak_z = map.max_abs() / map.std_errors.iter().cloned().fold(0.0, f64::max);
    ensure(peak_z > Z_SIGNAL, format!("lobes only {peak_z:.1} sigma"))?;
    ensure(
        fit.relative_residual < 0.1,
        format!("three-fold residual {:.3}", fit.relative_residual),
    )?;
    let mut node_z = 0.0f64;
    for n in fit.nodes() {
        let spacing = (n - fit.global_phase).rem_euclid(2.0 * PI / 3.0);
        ensure(
            (spacing - PI / 3.0).abs() < 1e-9,
            "nodes off the (2π/3)(n+1/2) lattice",
        )?;
        node_z = node_z.max(map.polar_value_at(n).abs() / map.polar_error_at(n));
    }
    ensure(node_z < Z_NULL, format!("node gamma {node_z:.2} sigma"))?;
    Ok(format!(
        "photons {photons:.3}, noise {noise:.3}, periodicity {worst:.2}σ, nodes {node_z:.2}σ, global phase {:.4} rad",
        fit.global_phase
    ))
}

fn noise_immunity() -> Check {
    let mut worst = 0.0f64;
    for (p, gt) in [
        (Process::SingleMode, 0.1),
        (Process::TwoMode, 0.2),
        (Process::ThreeMode, 0.3),
    ] {
        let s = state(p, gt, -FRAC_PI_2)?;
        let quads = all_quads(p.n_modes());
        let clean =
            MomentTensor::from_record(&record(&s, MILLION, 0.0, 51)?, &quads, DEFAULT_BATCHES)
                .map_err(err)?;
        let noisy =
            MomentTensor::from_record(&record(&s, MILLION, 2.0, 52)?, &quads, DEFAULT_BATCHES)
                .map_err(err)?;
        ensure(
            noisy.covariance(0, 0) > clean.covariance(0, 0) + 1.5,
            "noise did not reach the record",
        )?;
        for (i, j, k) in triples(quads.len()) {
            let a = clean.central_third_estimate::<f64>(i, j, k).map_err(err)?;
            let b = noisy.central_third_estimate::<f64>(i, j, k).map_err(err)?;
            let z = (a.value - b.value).abs() / a.std_error.hypot(b.std_error);
            ensure(
                z < Z_NULL,
                format!("{p} κ3({i},{j},{k}) differs by {z:.2}σ"),
            )?;
            worst = worst.max(z);
        }
    }
    Ok(format!("all third cumulants agree, max {worst:.2}σ"))
}

fn covariance_null() -> Check {
    let p = Process::ThreeMode;
    let gt = 0.3;
    let rec = record(&state(p, gt, -FRAC_PI_2)?, MILLION, 0.0, 61)?;
    let quads = all_quads(3);
    let t = MomentTensor::from_record(&rec, &quads, DEFAULT_BATCHES).map_err(err)?;
    let mut worst_r = 0.0f64;
    for i in 0..6 {
        for j in i + 1..6 {
            worst_r = worst_r.max(t.correlation::<f64>(i, j).map_err(err)?.z());
        }
    }
    ensure(
        worst_r < Z_NULL,
        format!("a covariance is {worst_r:.2}σ from zero"),
    )?;
    let g = t.coskewness::<f64>(0, 2, 4).map_err(err)?;
    ensure(g.z() > Z_SIGNAL, format!("γ(I1,I2,I3) only {:.1}σ", g.z()))?;

    let phases: Vec<f64> = (0..16)
        .map(|k| -2.0 * PI + 4.0 * PI * k as f64 / 15.0)
        .collect();
    let key = [QuadratureId::i(0), QuadratureId::i(1), QuadratureId::i(2)];
    let mut seed = 600;
    let sweep = pump_phase_sweep(&phases, key, |phase| {
        seed += 1;
        let s = evolve_vacuum(&canonical(p, phase), gt, default_cutoff(3))?.state;
        sample_heterodyne(&s, 200_000, 1.0, &[0.0; 3], seed)
    })
    .map_err(err)?;
    ensure(
        sweep.fit.r_squared > R2_MIN,
        format!("sweep R² {:.4}", sweep.fit.r_squared),
    )?;
    let flat = sweep.max_correlation_z();
    ensure(
        flat < Z_NULL,
        format!("sweep covariance reaches {flat:.2}σ"),
    )?;
    Ok(format!(
        "max |r| {worst_r:.2}σ, γ(I1,I2,I3) = {:.3} ({:.0}σ), sweep R² {:.5}, sweep max |r| {flat:.2}σ",
        g.value,
        g.z(),
        sweep.fit.r_squared
    ))
}

fn fingerprints() -> Check {
    let grid = ScanGrid::default();
    let mut report = Vec::new();
    for (p, gt, sel) in [
        (
            Process::TwoMode,
            0.2,
            [QuadratureId::i(0), QuadratureId::q(0), QuadratureId::i(1)],
        ),
        (
            Process::ThreeMode,
            0.3,
            [QuadratureId::i(0), QuadratureId::i(1), QuadratureId::i(2)],
        ),
    ] {
        let eff = canonical(p, -FRAC_PI_2);
        let rec = record(&state(p, gt, -FRAC_PI_2)?, MILLION, 0.0, 71)?;
        let data = spherical_scan(&rec, sel, grid).map_err(err)?;
        let theory = theory_fingerprint(&eff, sel, grid, gt).map_err(err)?;
        let cos = data.normalized().cosine_similarity(&theory).map_err(err)?;
        ensure(cos > COSINE_MIN, format!("{p} cosine similarity {cos:.4}"))?;
        report.push(format!("{p} cosine {cos:.4}"));
    }
    let p = Process::ThreeMode;
    let sel = [QuadratureId::i(0), QuadratureId::i(1), QuadratureId::i(2)];
    let rec = record(&state(p, 0.35, -FRAC_PI_2)?, 10 * MILLION, 0.0, 72)?;
    let map = spherical_scan(&rec, sel, grid).map_err(err)?;
    drop(rec);
    let ratio = map.node_antinode_ratio;
    report.push(format!("H_3M node/antinode {ratio:.2e} at 1e7"));
    ensure(ratio <= NODE_RATIO_MAX, report.join(", "))?;
    Ok(report.join(", "))
}

fn feedforward() -> Check {
    let p = Process::ThreeMode;
    let on = record(&state(p, 0.3, -PI / 4.0)?, MILLION, 0.0, 81)?;
    let vacuum = FockState::vacuum(&FockSpace::new(&[1, 1, 1]).map_err(err)?);
    let mut off = record(&vacuum, MILLION, 0.0, 82)?;
    off.pump_on = false;
    let opts = FeedForwardOptions::default();
    let ff_on = apply_feedforward(&on, 0, Protocol::ThreeMode, opts).map_err(err)?;
    let ff_off = apply_feedforward(&off, 0, Protocol::ThreeMode, opts).map_err(err)?;
    let raw = trispdc::feedforward::correlation_table(&on, 1, 2).map_err(err)?;
    let t = &ff_on.correlation_table;
    let min_on = t.values().map(|e| e.z()).fold(f64::INFINITY, f64::min);
    ensure(
        min_on > Z_SIGNAL,
        format!("pump-on correlation only {min_on:.1}σ"),
    )?;
    let sym = |a: &str, b: &str| {
        let (x, y) = (t[a], t[b]);
        (x.value.abs() - y.value.abs()).abs() / x.std_error.hypot(y.std_error)
    };
    let (s1, s2) = (sym("I2I3", "Q2Q3"), sym("I2Q3", "Q2I3"));
    ensure(
        s1 < Z_NULL && s2 < Z_NULL,
        format!("symmetry broken: {s1:.2}σ, {s2:.2}σ"),
    )?;
    let max_off = ff_off
        .correlation_table
        .values()
        .map(|e| e.z())
        .fold(0.0, f64::max);
    let max_raw = raw.values().map(|e| e.z()).fold(0.0, f64::max);
    ensure(
        max_off < Z_NULL,
        format!("pump-off feed-forward {max_off:.2}σ"),
    )?;
    ensure(max_raw < Z_NULL, format!("no feed-forward {max_raw:.2}σ"))?;

    let p = Process::TwoMode;
    let rec = record(&state(p, 0.2, -FRAC_PI_2)?, MILLION, 0.0, 83)?;
    let ff = apply_feedforward(&rec, 1, Protocol::TwoMode, opts).map_err(err)?;
    let with = ff.variance_ratio.ok_or("no variance ratio")?;
    let without = trispdc::feedforward::variance_ratio(&rec, 0).map_err(err)?;
    ensure(
        with.value > VARIANCE_RATIO_MIN,
        format!("variance ratio {:.3}", with.value),
    )?;
    let dev = (without.value - 1.0).abs() / without.std_error;
    ensure(
        dev < Z_NULL,
        format!(
            "ratio without feed-forward {:.4} ({dev:.1}σ from 1)",
            without.value
        ),
    )?;
    Ok(format!(
        "3M min {min_on:.0}σ, |II|-|QQ| {s1:.2}σ, |IQ|-|QI| {s2:.2}σ, off {max_off:.2}σ, raw {max_raw:.2}σ; 2M ratio {:.3} vs {:.4}±{:.4}",
        with.value, without.value, without.std_error
    ))
}

fn device_model() -> Check {
    let sym = DeviceParams64::symmetric(1.0);
    let g3 = |d: &DeviceParams64| -> Result<f64, String> {
        let exp = expand_potential(d, 3).map_err(err)?;
        Ok(coupling_constants(&exp, &d.zero_point_amplitudes)
            .map_err(err)?
            .by_order[3])
    };
    let g_sym = g3(&sym)?;
    ensure(g_sym == 0.0, format!("symmetric g3 = {g_sym:e}"))?;
    let asym = DeviceParams64::default();
    ensure(
        (asym.ej2 / asym.ej1 - 1.7).abs() < 1e-12,
        "default device is not 1:1.7",
    )?;
    let g_asym = g3(&asym)?;
    ensure(g_asym != 0.0, "asymmetric g3 vanished")?;

    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for draw in 0..1000 {
        let d = DeviceParams64 {
            ej1: rng.gen_range(0.1..5.0),
            ej2: rng.gen_range(0.1..5.0),
            ..Default::default()
        };
        let phi: f64 = rng.gen_range(-3.0..3.0);
        let shift = rng.gen_range(-4i32..=4) as f64;
        let ej = effective_josephson_energy(&d, phi);
        let tol = 1e-9 * (d.ej1 + d.ej2);
        ensure(
            (ej - effective_josephson_energy(&d, -phi)).abs() < tol,
            format!("draw {draw}: E_J not even"),
        )?;
        ensure(
            (ej - effective_josephson_energy(&d, phi + shift)).abs() < tol,
            format!("draw {draw}: E_J not periodic"),
        )?;
        ensure(
            ej >= (d.ej1 - d.ej2).abs() - tol && ej <= d.ej1 + d.ej2 + tol,
            format!("draw {draw}: E_J out of range"),
        )?;
        let a = effective_offset_alpha(&d, phi);
        if a.degenerate {
            continue;
        }
        let am = effective_offset_alpha(&d, -phi).alpha;
        let ap = effective_offset_alpha(&d, phi + shift).alpha;
        ensure(
            (a.alpha + am).abs() < 1e-9,
            format!("draw {draw}: α not odd"),
        )?;
        ensure(
            (a.alpha - ap).abs() < 1e-9,
            format!("draw {draw}: α not periodic"),
        )?;
        ensure(
            a.alpha.abs() <= FRAC_PI_2,
            format!("draw {draw}: |α| > π/2"),
        )?;
    }
    Ok(format!(
        "symmetric g3 = 0, asymmetric g3 = {g_asym:.3e}, 1000 draws of E_J/α parity and periodicity"
    ))
}

fn measurement_fidelity() -> Check {
    let mut worst = 0.0f64;
    let mut checked = 0;
    for (p, gt) in [
        (Process::SingleMode, 0.1),
        (Process::TwoMode, 0.2),
        (Process::ThreeMode, 0.3),
    ] {
        let s = state(p, gt, 0.7)?;
        let q = q_function_moments(&s).map_err(err)?;
        let quads = all_quads(p.n_modes());
        let d = quads.len();
        let rec = record(&s, MILLION, 0.0, 91)?;
        let t = MomentTensor::from_record(&rec, &quads, DEFAULT_BATCHES).map_err(err)?;
        let mut check = |what: String, est: trispdc::stats::Estimate<f64>, exact: f64| {
            let z = (est.value - exact).abs() / est.std_error;
            worst = worst.max(z);
            checked += 1;
            ensure(
                z < Z_NULL,
                format!("{p} {what}: {:.5} vs {exact:.5} ({z:.2}σ)", est.value),
            )
        };
        for i in 0..d {
            check(
                format!("mean {i}"),
                t.mean_estimate(i).map_err(err)?,
                q.mean[i],
            )?;
            for j in i..d {
                check(
                    format!("cov {i}{j}"),
                    t.covariance_estimate(i, j).map_err(err)?,
                    q.covariance(i, j),
                )?;
            }
        }
        for (i, j, k) in triples(d) {
            check(
                format!("third {i}{j}{k}"),
                t.central_third_estimate(i, j, k).map_err(err)?,
                q.central_third(i, j, k),
            )?;
        }
    }
    Ok(format!("{checked} moments of orders 1-3, max {worst:.2}σ"))
}

fn random_record<T: trispdc::Real>(
    rng: &mut ChaCha8Rng,
    n_modes: usize,
    n: usize,
    pump_on: bool,
) -> QuadratureRecord<T> {
    let samples = (0..n * 2 * n_modes)
        .map(|k| match k % 7 {
            0 => T::lit(0.0),
            1 => T::lit(-0.0),
            2 => T::lit(rng.gen_range(-1e-300..1e-300)),
            3 => T::lit(rng.gen_range(-1e6..1e6)),
            _ => T::lit(rng.gen_range(-5.0..5.0)),
        })
        .collect();
    let noise = (0..n_modes)
        .map(|_| T::lit(rng.gen_range(0.0..40.0)))
        .collect();
    let mut rec =
        QuadratureRecord::new(n_modes, samples, T::lit(rng.gen_range(0.5..1e4)), noise).unwrap();
    rec.pump_on = pump_on;
    rec.pump_phase = T::lit(rng.gen_range(-7.0..7.0));
    rec.sample_rate = T::lit(rng.gen_range(1e3..1e9));
    rec.calibration_note = if rng.gen_bool(0.5) {
        String::new()
    } else {
        "gain fit, run 7, ünïcode".into()
    };
    rec
}

fn round_trip_one<T: trispdc::Real>(
    rec: &QuadratureRecord<T>,
    dir: &std::path::Path,
    k: usize,
) -> Result<(), String> {
    let bytes = record_to_bytes(rec).map_err(err)?;
    let back: QuadratureRecord<T> = record_from_bytes(&bytes).map_err(err)?;
    ensure(
        back.samples
            .iter()
            .zip(&rec.samples)
            .all(|(a, b)| a.as_f64().to_bits() == b.as_f64().to_bits())
            && back.n_modes == rec.n_modes
            && back.pump_on == rec.pump_on
            && back.calibration_note == rec.calibration_note,
        format!("record {k}: fields differ"),
    )?;
    ensure(
        record_to_bytes(&back).map_err(err)? == bytes,
        format!("record {k}: bytes differ"),
    )?;
    let path = dir.join(format!("r{k}.bin"));
    write_record(&path, rec).map_err(err)?;
    ensure(
        std::fs::read(&path).map_err(err)? == bytes,
        format!("record {k}: file differs"),
    )?;
    let from_file: QuadratureRecord<T> = read_record(&path).map_err(err)?;
    ensure(
        record_to_bytes(&from_file).map_err(err)? == bytes,
        format!("record {k}: file round trip"),
    )?;
    let mut csv = Vec::new();
    write_csv(rec, &mut csv).map_err(err)?;
    let again: QuadratureRecord<T> = read_csv(csv.as_slice()).map_err(err)?;
    let mut csv2 = Vec::new();
    write_csv(&again, &mut csv2).map_err(err)?;
    ensure(csv == csv2, format!("record {k}: CSV differs"))?;
    Ok(())
}

fn record_round_trip() -> Check {
    let dir = tempfile::tempdir().map_err(err)?;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut count = 0;
    for k in 0..60 {
        let n_modes = 1 + k % 3;
        let n = match k % 5 {
            0 => 1,
            1 => 2,
            _ => rng.gen_range(1..5000),
        };
        let pump_on = k % 4 != 0;
        if k % 2 == 0 {
            round_trip_one(
                &random_record::<f64>(&mut rng, n_modes, n, pump_on),
                dir.path(),
                k,
            )?;
        } else {
            round_trip_one(
                &random_record::<f32>(&mut rng, n_modes, n, pump_on),
                dir.path(),
                k,
            )?;
        }
        count += 1;
    }
    Ok(format!(
        "{count} randomized f64/f32 records incl. N=1, single mode, pump off"
    ))
}

struct Criterion {
    id: u32,
    name: &'static str,
    budget: Option<Duration>,
    run: fn() -> Check,
}

fn main() {
    let criteria = [
        Criterion {
            id: 1,
            name: "Table I process selection",
            budget: Some(Duration::from_secs(1)),
            run: table_i,
        },
        Criterion {
            id: 2,
            name: "stepper vs dense oracle",
            budget: Some(Duration::from_secs(60)),
            run: oracle,
        },
        Criterion {
            id: 3,
            name: "selection rules",
            budget: Some(Duration::from_secs(10)),
            run: selection_rules,
        },
        Criterion {
            id: 4,
            name: "star-state symmetry",
            budget: Some(Duration::from_secs(300)),
            run: star_symmetry,
        },
        Criterion {
            id: 5,
            name: "noise immunity",
            budget: None,
            run: noise_immunity,
        },
        Criterion {
            id: 6,
            name: "covariance null, coskewness signal",
            budget: None,
            run: covariance_null,
        },
        Criterion {
            id: 7,
            name: "fingerprint agreement",
            budget: None,
            run: fingerprints,
        },
        Criterion {
            id: 8,
            name: "feed-forward",
            budget: None,
            run: feedforward,
        },
        Criterion {
            id: 9,
            name: "device model",
            budget: None,
            run: device_model,
        },
        Criterion {
            id: 10,
            name: "measurement fidelity",
            budget: None,
            run: measurement_fidelity,
        },
        Criterion {
            id: 11,
            name: "record round trip",
            budget: None,
            run: record_round_trip,
        },
    ];
    let filter: Vec<u32> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .collect();
    let mut failed = 0;
    for c in criteria
        .iter()
        .filter(|c| filter.is_empty() || filter.contains(&c.id))
    {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(c.run)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into()))
        });
        let elapsed = start.elapsed();
        let outcome = match (outcome, c.budget) {
            (Ok(msg), Some(b)) if elapsed > b => {
                Err(format!("{msg}; over the {:.0} s budget", b.as_secs_f64()))
            }
            (o, _) => o,
        };
        let (tag, msg) = match outcome {
            Ok(m) => ("PASS", m),
            Err(m) => {
                failed += 1;
                ("FAIL", m)
            }
        };
        println!(
            "criterion {:>2} {tag} {} ({:.1} s): {msg}",
            c.id,
            c.name,
            elapsed.as_secs_f64()
        );
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
