//! `mpqkd` command-line tool.
//!
//! Exit codes: 0 success, 1 bad config or input data, 2 file I/O,
//! 3 numeric failure (infeasible LP, domain error), 4 reproduction check failed.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use mpqkd::decoy::{phase_error_bound, DecoyOptions, KCut};
use mpqkd::freq::{estimate_trajectory, prediction_error_rate, read_reference_csv, reference_csv, GroupEstimate, OmegaTrajectory, PredictionStats};
use mpqkd::io::{write_atomic, write_json, RunManifest};
use mpqkd::keyrate::{key_length, key_rates, KeyLength, KeyRates};
use mpqkd::pairing::pair_dump_csv;
use mpqkd::pipeline::{postprocess, report_table, simulate_counts};
use mpqkd::reproduce::{check_report, check_table, CheckRow, Scenario};
use mpqkd::sim::{round_dump_header, round_dump_line, simulate_reference_blocks};
use mpqkd::{CountTable, Error, ProtocolConfig, Result};

#[derive(Parser)]
#[command(name = "mpqkd", version, about = "Mode-pairing QKD simulation and post-processing")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate rounds, pair them and write count tables.
    Simulate(SimulateArgs),
    /// Turn a count table into a key-rate report.
    Postprocess(PostprocessArgs),
    /// Estimate the laser frequency difference from reference-region clicks.
    EstimateFreq(FreqArgs),
    /// Evaluate the key length for given single-photon bounds.
    Keyrate(KeyrateArgs),
    /// Run the bundled field-test fixtures and compare against published results.
    ReproducePaper(ReproduceArgs),
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    rounds: u64,
    #[arg(long)]
    out: PathBuf,
    /// Also simulate this many cycles of reference-region clicks.
    #[arg(long, default_value_t = 0)]
    reference_cycles: u64,
    /// Skip the per-round and per-pair dumps.
    #[arg(long)]
    no_dump: bool,
}

#[derive(Args)]
struct PostprocessArgs {
    /// Count table CSV.
    counts: PathBuf,
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Fixed photon-number cutoff instead of the automatic choice.
    #[arg(long)]
    k_cut: Option<usize>,
    /// Use counts as expectations, without finite-size widening.
    #[arg(long)]
    no_widen: bool,
}

#[derive(Args)]
struct FreqArgs {
    /// Reference click CSV (time_s,detector).
    clicks: PathBuf,
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct KeyrateArgs {
    counts: PathBuf,
    #[arg(long)]
    config: PathBuf,
    /// Lower bound on Z single-photon pairs.
    #[arg(long)]
    m11_z: f64,
    /// Upper bound on the phase error rate; derived from --m11-x and --e11-x if omitted.
    #[arg(long)]
    e_ph: Option<f64>,
    #[arg(long)]
    m11_x: Option<f64>,
    #[arg(long)]
    e11_x: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReproduceArgs {
    #[arg(long, default_value = "all")]
    which: String,
    /// Read fixtures from this directory instead of the bundled copies.
    #[arg(long)]
    fixtures_dir: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Serialize)]
struct SimulationSummary<'a> {
    manifest: RunManifest,
    rounds: u64,
    clicked_rounds: u64,
    double_click_rounds: u64,
    pairs: usize,
    reference_clicks: usize,
    counts_file: &'a str,
}

#[derive(Serialize)]
struct FreqReport {
    manifest: RunManifest,
    clicks: usize,
    groups: Vec<GroupEstimate>,
    trajectory: OmegaTrajectory,
    prediction: PredictionStats,
}

#[derive(Serialize)]
struct KeyrateReport {
    manifest: RunManifest,
    #[serde(rename = "M11_Z_L")]
    m11_z_l: f64,
    #[serde(rename = "e_ph_U")]
    e_ph_u: f64,
    #[serde(rename = "K")]
    k: f64,
    key: KeyLength,
    rates: KeyRates,
}

#[derive(Serialize)]
struct ReproduceReport {
    manifest: RunManifest,
    rows: Vec<CheckRow>,
    pass: bool,
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn simulate(a: SimulateArgs) -> Result<ExitCode> {
    let cfg = ProtocolConfig::load(&a.config)?;
    ensure_dir(&a.out)?;
    let mut manifest = RunManifest::start("simulate");
    manifest.config_path = Some(a.config.clone());
    manifest.seed = Some(a.seed);
    manifest.output_dir = Some(a.out.clone());

    let sim = simulate_counts(&cfg, a.seed, a.rounds)?;
    write_atomic(&a.out.join("counts.csv"), sim.counts.to_csv_string().as_bytes())?;
    if !a.no_dump {
        let mut dump = String::from(round_dump_header());
        for r in &sim.records {
            dump.push_str(&round_dump_line(r));
        }
        write_atomic(&a.out.join("rounds.csv"), dump.as_bytes())?;
        write_atomic(&a.out.join("pairs.csv"), pair_dump_csv(&sim.pairs).as_bytes())?;
    }
    let mut reference_clicks = 0;
    if a.reference_cycles > 0 {
        let clicks = simulate_reference_blocks(&cfg, a.seed, a.reference_cycles)?;
        reference_clicks = clicks.len();
        write_atomic(&a.out.join("refclicks.csv"), reference_csv(&clicks).as_bytes())?;
    }
    let summary = SimulationSummary {
        manifest: manifest.finish(),
        rounds: sim.rounds,
        clicked_rounds: sim.clicked,
        double_click_rounds: sim.double_clicks,
        pairs: sim.pairs.len(),
        reference_clicks,
        counts_file: "counts.csv",
    };
    write_json(&a.out.join("simulation.json"), &summary)?;
    println!("rounds {}  clicked {}  pairs {}", sim.rounds, sim.clicked, sim.pairs.len());
    print!("{}", sim.counts.to_csv_string());
    Ok(ExitCode::SUCCESS)
}

fn postprocess_cmd(a: PostprocessArgs) -> Result<ExitCode> {
    let cfg = ProtocolConfig::load(&a.config)?;
    let counts = CountTable::load(&a.counts)?;
    let mut opts = DecoyOptions::from_config(&cfg);
    if let Some(k) = a.k_cut {
        opts.k_cut = KCut::Fixed(k);
    }
    opts.widen = !a.no_widen;
    let mut manifest = RunManifest::start("postprocess");
    manifest.config_path = Some(a.config.clone());
    manifest.input_paths = vec![a.counts.clone()];
    manifest.output_dir = a.out.clone();
    let mut report = postprocess(&counts, &cfg, &opts)?;
    report.manifest = Some(manifest.finish());
    let table = report_table(&report);
    if let Some(out) = &a.out {
        ensure_dir(out)?;
        write_json(&out.join("report.json"), &report)?;
        write_atomic(&out.join("report.txt"), table.as_bytes())?;
    }
    print!("{table}");
    Ok(ExitCode::SUCCESS)
}

fn estimate_freq(a: FreqArgs) -> Result<ExitCode> {
    let cfg = ProtocolConfig::load(&a.config)?;
    let clicks = read_reference_csv(&read_text(&a.clicks)?)?;
    if clicks.windows(2).any(|w| w[1].time_s < w[0].time_s) {
        return Err(Error::Data("reference clicks are not time-ordered".into()));
    }
    let mut manifest = RunManifest::start("estimate-freq");
    manifest.config_path = Some(a.config.clone());
    manifest.input_paths = vec![a.clicks.clone()];
    manifest.output_dir = a.out.clone();
    let (trajectory, groups) = estimate_trajectory(&clicks, &cfg.freq, cfg.timing.tau())?;
    let prediction = prediction_error_rate(&trajectory, &clicks)?;
    println!("groups {}  windows {}", groups.len(), trajectory.windows.len());
    for w in &trajectory.windows {
        println!("[{:.6e}, {:.6e}] s  coefficients {:?}", w.window_start_s, w.window_end_s, w.coefficients);
    }
    println!("prediction error rate {:.4} ({} of {} pairs)", prediction.rate, prediction.mistakes, prediction.pairs);
    let report = FreqReport { manifest: manifest.finish(), clicks: clicks.len(), groups, trajectory, prediction };
    if let Some(out) = &a.out {
        ensure_dir(out)?;
        write_json(&out.join("trajectory.json"), &report)?;
    }
    Ok(ExitCode::SUCCESS)
}

fn keyrate(a: KeyrateArgs) -> Result<ExitCode> {
    let cfg = ProtocolConfig::load(&a.config)?;
    let counts = CountTable::load(&a.counts)?;
    let e_ph = match (a.e_ph, a.m11_x, a.e11_x) {
        (Some(e), _, _) => e,
        (None, Some(m), Some(e)) => phase_error_bound(m, e).0,
        _ => return Err(Error::Config(vec!["give --e-ph, or both --m11-x and --e11-x".into()])),
    };
    let est = mpqkd::decoy::DecoyEstimates {
        m11_z_l: a.m11_z,
        m11_x_l: a.m11_x.unwrap_or(f64::NAN),
        e11_x_u: a.e11_x.unwrap_or(f64::NAN),
        e_ph_u: e_ph,
        e_ph_guard: false,
        k_cut_z: 0,
        k_cut_x: 0,
        per_setting: Vec::new(),
        bounds: Vec::new(),
        lp_iterations: 0,
    };
    let key = key_length(&est, &counts, cfg.f_ec)?;
    let rates = key_rates(key.bits, &counts, &cfg)?;
    let mut manifest = RunManifest::start("keyrate");
    manifest.config_path = Some(a.config.clone());
    manifest.input_paths = vec![a.counts.clone()];
    manifest.output_dir = a.out.clone();
    println!("K {:.0} bits{}", key.bits, if key.clamped { " (clamped)" } else { "" });
    println!("R per pair {:.4e}  R per second {:.2}", rates.r_per_pair, rates.r_per_second);
    let report = KeyrateReport { manifest: manifest.finish(), m11_z_l: a.m11_z, e_ph_u: e_ph, k: key.bits, key, rates };
    if let Some(out) = &a.out {
        ensure_dir(out)?;
        write_json(&out.join("keyrate.json"), &report)?;
    }
    Ok(ExitCode::SUCCESS)
}

fn reproduce(a: ReproduceArgs) -> Result<ExitCode> {
    let scenarios = Scenario::parse(&a.which)?;
    let mut manifest = RunManifest::start("reproduce-paper");
    manifest.output_dir = a.out.clone();
    let mut rows = Vec::new();
    for s in scenarios {
        let (cfg, counts) = match &a.fixtures_dir {
            Some(dir) => {
                manifest.input_paths.push(dir.join(s.config_file()));
                manifest.input_paths.push(dir.join(s.counts_file()));
                s.load_from(dir)?
            }
            None => (s.bundled_config(), s.bundled_counts()),
        };
        let report = postprocess(&counts, &cfg, &DecoyOptions::from_config(&cfg))?;
        rows.extend(check_report(s, &report));
    }
    print!("{}", check_table(&rows));
    let pass = rows.iter().all(|r| r.pass);
    if !pass {
        eprintln!("failing rows:");
        for r in rows.iter().filter(|r| !r.pass) {
            eprintln!("  {} {}: computed {:.6e}, target {:.6e} {}", r.scenario.name(), r.quantity, r.computed, r.target, r.tolerance.describe());
        }
    }
    if let Some(out) = &a.out {
        ensure_dir(out)?;
        write_json(&out.join("reproduce.json"), &ReproduceReport { manifest: manifest.finish(), rows, pass })?;
    }
    Ok(if pass { ExitCode::SUCCESS } else { ExitCode::from(4) })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Postprocess(a) => postprocess_cmd(a),
        Command::EstimateFreq(a) => estimate_freq(a),
        Command::Keyrate(a) => keyrate(a),
        Command::ReproducePaper(a) => reproduce(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
