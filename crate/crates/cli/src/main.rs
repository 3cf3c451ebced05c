mod artifacts;
mod config;
mod error;
mod pipeline;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;
use trispdc::device::{coupling_constants, expand_potential};
use trispdc::feedforward::correlation_table;
use trispdc::measurement::{read_csv, read_record, record_to_bytes, write_csv};
use trispdc::rwa::{enumerate_terms, select_resonant};
use trispdc::stats::{
    histogram2d, polar_scan, pump_phase_sweep, spherical_scan, threefold_fit, BinGrid,
    CumulantSummary, ScanGrid,
};
use trispdc::{
    apply_feedforward, FeedForwardOptions, Process, Protocol, QuadratureId, QuadratureRecord64,
};

use artifacts::ArtifactDir;
use config::{device_hamiltonian, RunConfig};
use error::{CliError, CliResult};
use pipeline::{run_pipeline, simulate_record, Pipeline};

const THREADS_ENV: &str = "TRISPDC_THREADS";

/// Simulate and analyse three-photon down-conversion in a pumped SQUID cavity.
#[derive(Parser, Debug)]
#[command(name = "trispdc", version)]
struct Cli {
    /// Master RNG seed (overrides the config file).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (overrides `output_dir`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// TOML run config.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Print the pump-resonant cubic Hamiltonian for each pump frequency.
    Processes {
        /// Pump frequency in GHz; repeatable. Defaults to the three process pumps.
        #[arg(long)]
        pump: Vec<f64>,
    },
    /// Evolve the vacuum and write a heterodyne record.
    Simulate(SimulateArgs),
    /// Analyse one or more records.
    Analyze(AnalyzeArgs),
    /// Apply reference-phase feed-forward to a record.
    Feedforward(FeedforwardArgs),
    /// Run a complete figure pipeline.
    Pipeline {
        #[arg(value_enum)]
        name: Pipeline,
    },
    /// Print the annotated sample config.
    SampleConfig,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    /// 1m, 2m or 3m.
    #[arg(long, value_parser = parse_process)]
    process: Option<Process>,
    /// Drive strength g·t.
    #[arg(long)]
    gt: Option<f64>,
    #[arg(long)]
    samples: Option<usize>,
    /// Added noise photons, comma separated (one value broadcasts).
    #[arg(long, value_delimiter = ',')]
    noise: Option<Vec<f64>>,
    #[arg(long)]
    gain: Option<f64>,
    /// Device pump phase in rad.
    #[arg(long, allow_hyphen_values = true)]
    pump_phase: Option<f64>,
    /// Phase of the down-conversion coefficient in rad.
    #[arg(long, allow_hyphen_values = true)]
    hamiltonian_phase: Option<f64>,
    #[arg(long)]
    pump_off: bool,
    #[arg(long)]
    cutoff: Option<usize>,
    /// Also write the record as CSV.
    #[arg(long)]
    csv: bool,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum AnalyzeMode {
    Polar,
    Spherical,
    Hist,
    Cumulants,
    Sweep,
}

#[derive(Args, Debug)]
struct AnalyzeArgs {
    /// Record files (binary, or CSV by extension); repeat for `sweep`.
    #[arg(long = "in", required = true)]
    inputs: Vec<PathBuf>,
    #[arg(long, value_enum, default_value = "polar")]
    mode: AnalyzeMode,
    /// 1-based mode for `polar` and `hist`.
    #[arg(long, default_value_t = 1)]
    mode_index: usize,
    /// Three quadratures for `spherical`/`sweep`, e.g. I1,I2,I3.
    #[arg(long, value_delimiter = ',')]
    quads: Option<Vec<QuadratureId>>,
    #[arg(long, default_value_t = 360)]
    angles: usize,
    /// Spherical grid as THETAxPHI.
    #[arg(long, default_value = "181x360")]
    grid: String,
    /// Noise-only record subtracted from `hist`.
    #[arg(long)]
    subtract: Option<PathBuf>,
    #[arg(long, default_value_t = 61)]
    bins: usize,
    /// Histogram half-width in raw quadrature units.
    #[arg(long)]
    range: Option<f64>,
}

#[derive(Args, Debug)]
struct FeedforwardArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, value_parser = parse_protocol)]
    protocol: Protocol,
    /// 1-based reference mode.
    #[arg(long = "ref")]
    reference: usize,
    /// Moving-average window over the phase estimate (samples).
    #[arg(long)]
    window: Option<usize>,
}

/// Prints to stdout, tolerating a closed pipe.
fn emit(text: &str) {
    use std::io::Write;
    let _ = writeln!(std::io::stdout().lock(), "{text}");
}

fn parse_process(s: &str) -> Result<Process, String> {
    Process::parse(s).ok_or_else(|| format!("unknown process `{s}` (1m, 2m, 3m)"))
}

fn parse_protocol(s: &str) -> Result<Protocol, String> {
    s.parse().map_err(|e: trispdc::Error| e.to_string())
}

fn init_threads() -> CliResult<()> {
    let Ok(v) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .map_err(|_| CliError::usage(format!("{THREADS_ENV} must be an integer, got `{v}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::runtime(e.to_string()))
}

fn load_config(cli: &Cli) -> CliResult<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.output_dir = o.clone();
    }
    Ok(cfg)
}

fn load_record(path: &Path) -> CliResult<QuadratureRecord64> {
    if !path.is_file() {
        return Err(CliError::usage(format!(
            "no such record file: {}",
            path.display()
        )));
    }
    let is_csv = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    let rec = if is_csv {
        let f = std::fs::File::open(path)?;
        read_csv(std::io::BufReader::new(f))
    } else {
        read_record(path)
    };
    rec.map_err(|e| CliError {
        usage: e.is_usage(),
        message: format!("{}: {e}", path.display()),
    })
}

fn processes(cfg: &RunConfig, pumps: &[f64]) -> CliResult<()> {
    let device = &cfg.device;
    let expansion = expand_potential(device, 3)?;
    let couplings = coupling_constants(&expansion, &device.zero_point_amplitudes)?;
    let terms = enumerate_terms(&device.mode_freqs, 3, couplings.by_order[3])?;
    let pumps: Vec<f64> = if pumps.is_empty() {
        Process::ALL
            .iter()
            .map(|p| p.pump_freq(&device.mode_freqs))
            .collect()
    } else {
        pumps.to_vec()
    };
    let beta = num_complex::Complex::from_polar(device.pump_amplitude, device.pump_phase);
    for pump in pumps {
        let eff = select_resonant(&terms, pump, cfg.tolerance_ghz, beta)?;
        emit(&eff.render());
    }
    Ok(())
}

fn simulate(cfg: &RunConfig, args: &SimulateArgs) -> CliResult<()> {
    let process = args.process.unwrap_or(cfg.process);
    let mut cfg = cfg.clone();
    if args.pump_off {
        cfg.device.pump_amplitude = 0.0;
    }
    cfg.drive_strength = args.gt.or(cfg.drive_strength);
    cfg.samples = args.samples.unwrap_or(cfg.samples);
    cfg.gain = args.gain.unwrap_or(cfg.gain);
    cfg.cutoff = args.cutoff.or(cfg.cutoff);
    if let Some(n) = &args.noise {
        cfg.noise_photons = n.clone();
    }
    cfg.validate()?;
    let gt = cfg.drive(process);
    let eff = device_hamiltonian(
        &cfg,
        process,
        args.pump_phase,
        args.hamiltonian_phase.or(cfg.hamiltonian_phase),
    )?;
    let noise = cfg.noise_for(process.n_modes());
    let sim = simulate_record(&cfg, eff.as_ref(), process, &noise, cfg.seed)?;
    let mut out = ArtifactDir::create(&cfg.output_dir)?;
    out.stage("simulate");
    out.write("record.bin", &record_to_bytes(&sim.record)?)?;
    if args.csv {
        out.write_with("record.csv", |w| write_csv(&sim.record, w))?;
    }
    let summary = json!({
        "process": process.name(),
        "drive_strength": gt,
        "pump_on": sim.record.pump_on,
        "pump_phase": sim.record.pump_phase,
        "samples": sim.record.len(),
        "fock_cutoff": sim.cutoff,
        "fock_leak_flag": sim.leaked,
        "mean_photons": sim.state.mean_occupations(),
    });
    out.write_json("summary.json", &summary)?;
    out.finish(
        json!({ "command": "simulate", "seed": cfg.seed, "config_sha256": cfg.content_hash() }),
    )?;
    emit(&serde_json::to_string_pretty(&summary)?);
    Ok(())
}

fn parse_grid(s: &str) -> CliResult<ScanGrid> {
    let bad = || CliError::usage(format!("--grid expects THETAxPHI, got `{s}`"));
    let (a, b) = s.split_once(['x', 'X']).ok_or_else(bad)?;
    Ok(ScanGrid {
        n_theta: a.trim().parse().map_err(|_| bad())?,
        n_phi: b.trim().parse().map_err(|_| bad())?,
    })
}

fn three_quads(
    q: &Option<Vec<QuadratureId>>,
    default: [QuadratureId; 3],
) -> CliResult<[QuadratureId; 3]> {
    match q {
        None => Ok(default),
        Some(v) => v
            .as_slice()
            .try_into()
            .map_err(|_| CliError::usage("--quads needs exactly three quadratures")),
    }
}

fn mode_index(i: usize) -> CliResult<usize> {
    i.checked_sub(1)
        .ok_or_else(|| CliError::usage("mode indices are 1-based"))
}

fn analyze(cfg: &RunConfig, args: &AnalyzeArgs) -> CliResult<()> {
    if args.mode != AnalyzeMode::Sweep && args.inputs.len() != 1 {
        return Err(CliError::usage(
            "only `--mode sweep` takes more than one --in",
        ));
    }
    let mut out = ArtifactDir::create(&cfg.output_dir)?;
    let default_quads = [QuadratureId::i(0), QuadratureId::i(1), QuadratureId::i(2)];
    let summary = match args.mode {
        AnalyzeMode::Sweep => {
            let records = args
                .inputs
                .iter()
                .map(|p| load_record(p))
                .collect::<CliResult<Vec<_>>>()?;
            let phases: Vec<f64> = records.iter().map(|r| r.pump_phase).collect();
            let mut it = records.into_iter();
            let sweep =
                pump_phase_sweep(&phases, three_quads(&args.quads, default_quads)?, |_| {
                    Ok(it.next().expect("one record per phase"))
                })?;
            out.write_with("sweep.csv", |w| sweep.write_csv(w))?;
            json!({ "fit": sweep.fit, "fit_amplitude": sweep.fit.amplitude(), "max_correlation_sigma": sweep.max_correlation_z() })
        }
        mode => {
            let rec = load_record(&args.inputs[0])?;
            let m = mode_index(args.mode_index)?;
            match mode {
                AnalyzeMode::Polar => {
                    let map = polar_scan(&rec, m, args.angles)?;
                    out.write_with("polar.csv", |w| map.write_csv(w))?;
                    let fit = threefold_fit(&map)?;
                    json!({ "node_antinode_ratio": map.node_antinode_ratio, "threefold_fit": fit, "fitted_nodes": fit.nodes() })
                }
                AnalyzeMode::Spherical => {
                    let quads = three_quads(&args.quads, default_quads)?;
                    let map = spherical_scan(&rec, quads, parse_grid(&args.grid)?)?;
                    out.write_with("spherical.csv", |w| map.write_csv(w))?;
                    json!({ "node_antinode_ratio": map.node_antinode_ratio, "max_abs_gamma": map.max_abs() })
                }
                AnalyzeMode::Hist => {
                    let reference = args.subtract.as_deref().map(load_record).transpose()?;
                    let half = match args.range {
                        Some(r) => r,
                        None => {
                            let x = rec.column(QuadratureId::i(m))?;
                            let var = x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64;
                            4.5 * var.sqrt()
                        }
                    };
                    let h = histogram2d(
                        &rec,
                        m,
                        BinGrid::symmetric(args.bins, half)?,
                        reference.as_ref(),
                    )?;
                    out.write_with("histogram.csv", |w| h.write_csv(w))?;
                    json!({
                        "half_width": half,
                        "outside_fraction": h.outside as f64 / h.samples.max(1) as f64,
                        "harmonic_strengths": (1..=6).map(|k| h.harmonic_strength(k)).collect::<Vec<_>>(),
                        "lobe_angle": h.lobe_angle(3),
                    })
                }
                AnalyzeMode::Cumulants => {
                    let sel = rec.quadrature_names();
                    let s = CumulantSummary::from_record(&rec, &sel)?;
                    out.write_json("cumulants.json", &s)?;
                    json!(s)
                }
                AnalyzeMode::Sweep => unreachable!(),
            }
        }
    };
    out.stage("analyze");
    out.write_json("summary.json", &summary)?;
    let inputs: Vec<String> = args
        .inputs
        .iter()
        .map(|p| p.display().to_string())
        .collect();
    out.finish(json!({ "command": "analyze", "mode": format!("{:?}", args.mode).to_lowercase(), "inputs": inputs }))?;
    emit(&serde_json::to_string_pretty(&summary)?);
    Ok(())
}

fn feedforward(cfg: &RunConfig, args: &FeedforwardArgs) -> CliResult<()> {
    let rec = load_record(&args.input)?;
    let reference = mode_index(args.reference)?;
    let options = FeedForwardOptions {
        smoothing_window: args.window,
    };
    let ff = apply_feedforward(&rec, reference, args.protocol, options)?;
    let mut out = ArtifactDir::create(&cfg.output_dir)?;
    out.stage("feedforward");
    let mut rows = String::from("pair,stage,coefficient,std_error\n");
    let raw = match args.protocol {
        Protocol::ThreeMode => {
            correlation_table(&rec, ff.corrected_modes[0], ff.corrected_modes[1])?
        }
        Protocol::TwoMode => correlation_table(&rec, ff.corrected_modes[0], reference)?,
    };
    for (stage, table) in [("raw", &raw), ("corrected", &ff.correlation_table)] {
        for (pair, e) in table {
            rows += &format!("{pair},{stage},{:?},{:?}\n", e.value, e.std_error);
        }
    }
    out.write("correlations.csv", rows.as_bytes())?;
    out.write("corrected.bin", &record_to_bytes(&ff.corrected_record)?)?;
    let summary = json!({
        "protocol": ff.protocol.name(),
        "reference_mode": reference + 1,
        "corrected_modes": ff.corrected_modes.iter().map(|m| m + 1).collect::<Vec<_>>(),
        "correlations": ff.correlation_table,
        "correlations_raw": raw,
        "variance_ratio": ff.variance_ratio,
        "cross_singular_values": ff.cross_singular_values,
        "flagged_samples": ff.flagged,
    });
    out.write_json("summary.json", &summary)?;
    out.finish(json!({ "command": "feedforward", "input": args.input.display().to_string() }))?;
    emit(&serde_json::to_string_pretty(&summary)?);
    Ok(())
}

fn run(cli: Cli) -> CliResult<()> {
    init_threads()?;
    let cfg = load_config(&cli)?;
    match &cli.command {
        Command::Processes { pump } => processes(&cfg, pump),
        Command::Simulate(a) => simulate(&cfg, a),
        Command::Analyze(a) => analyze(&cfg, a),
        Command::Feedforward(a) => feedforward(&cfg, a),
        Command::Pipeline { name } => {
            let summary = run_pipeline(&cfg, *name, &cfg.output_dir)?;
            emit(&serde_json::to_string_pretty(&summary)?);
            Ok(())
        }
        Command::SampleConfig => {
            emit(config::SAMPLE_CONFIG.trim_end());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
