//! `tvbo`: benchmark driver for the time-varying Bayesian optimization
//! toolkit. Experiments are described by a TOML config (or a built-in
//! preset), run deterministically, and written out as CSV.
//!
//! Exit codes: 0 on success, 1 when the configuration or input data is
//! wrong, 2 when a run fails underneath a valid config (numerics, I/O).

use std::fs;
use std::io::{BufWriter, Write as _};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use tvbo_core::bench::{
    evaluate_bound, fmt_sig9, ingest_arms_csv, preset_names, preset_toml, run_experiment,
    stopping_times, write_bound_csv, write_bound_meta_csv, write_covariance_csv,
    write_stopping_csv, write_stopping_stats_csv, write_summary_csv, write_trace_csv,
    ExperimentConfig, PolicyKind, Seeds,
};
use tvbo_core::Error;

/// Time-varying Bayesian optimization benchmarks.
#[derive(Parser)]
#[command(name = "tvbo", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run an experiment; writes trace.csv, summary.csv and the effective
    /// config.toml into the output directory.
    Run(SharedArgs),
    /// Estimate the distribution of the first trigger activation by
    /// Monte-Carlo; writes stopping.csv and stopping_stats.csv.
    StoppingTimes {
        #[command(flatten)]
        shared: SharedArgs,
        /// Number of Monte-Carlo runs (seeds 0..RUNS).
        #[arg(long, default_value_t = 1000)]
        runs: u64,
        /// Failure probability for the quantile check.
        #[arg(long, default_value_t = 0.2)]
        delta: f64,
    },
    /// Run an experiment and evaluate the regret-bound diagnostic on one
    /// (policy, seed) episode; writes bound.csv and bound_meta.csv next to
    /// the run outputs. Needs a [bound] section in the config.
    Bound {
        #[command(flatten)]
        shared: SharedArgs,
        /// Policy label to evaluate (default: the first event-triggered
        /// policy in the config).
        #[arg(long)]
        policy: Option<String>,
        /// Seed whose episode is evaluated (default: the first configured
        /// seed).
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Validate an arms CSV (header arm_id,time_index,value) and write the
    /// empirical covariance of its z-scored training split, reusable as an
    /// empirical kernel matrix.
    IngestCheck {
        /// Input data CSV.
        #[arg(long)]
        csv: PathBuf,
        /// Inclusive raw time_index range of the training split, as A..B.
        #[arg(long)]
        train_range: String,
        /// Inclusive raw time_index range of the test split, as A..B.
        #[arg(long)]
        test_range: String,
        /// Output directory (default ./out).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// List the built-in experiment names, or print one config as TOML.
    ListPresets {
        /// Preset to print.
        name: Option<String>,
    },
}

/// Flags shared by every subcommand that executes an experiment config.
#[derive(Args)]
struct SharedArgs {
    /// Built-in experiment name (see list-presets). Exactly one of
    /// --preset and --config must be given.
    #[arg(long, conflicts_with = "config")]
    preset: Option<String>,
    /// Path to an experiment config TOML.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Replace the seed set: an inclusive range A..B or a comma list.
    #[arg(long)]
    seeds: Option<String>,
    /// Override one config value by dotted path, e.g. --set horizon=100
    /// or --set policies.3.delta_b=0.05. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Worker threads; 0 uses every core.
    #[arg(long, default_value_t = 0)]
    jobs: usize,
    /// Output directory (default: the config's `out`, else ./out).
    #[arg(long)]
    out: Option<PathBuf>,
}

struct Failure {
    code: u8,
    msg: String,
}

impl Failure {
    fn config(msg: impl Into<String>) -> Self {
        Failure { code: 1, msg: msg.into() }
    }

    fn runtime(msg: impl Into<String>) -> Self {
        Failure { code: 2, msg: msg.into() }
    }
}

/// Config-shaped mistakes exit 1; failures underneath a valid config
/// (numerics, output I/O) exit 2.
fn classify(e: Error) -> Failure {
    let code = match e {
        Error::Config(_) | Error::InvalidParameter(_) | Error::Ingest(_) => 1,
        _ => 2,
    };
    Failure { code, msg: e.to_string() }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match dispatch(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.msg);
            ExitCode::from(f.code)
        }
    }
}

fn dispatch(cmd: Cmd) -> Result<(), Failure> {
    match cmd {
        Cmd::Run(shared) => cmd_run(&shared),
        Cmd::StoppingTimes { shared, runs, delta } => cmd_stopping(&shared, runs, delta),
        Cmd::Bound { shared, policy, seed } => cmd_bound(&shared, policy, seed),
        Cmd::IngestCheck { csv, train_range, test_range, out } => {
            cmd_ingest_check(&csv, &train_range, &test_range, out)
        }
        Cmd::ListPresets { name } => cmd_list_presets(name.as_deref()),
    }
}

/// Loads, overrides and validates the experiment config named by the flags.
fn load_config(shared: &SharedArgs) -> Result<ExperimentConfig, Failure> {
    let text = match (&shared.preset, &shared.config) {
        (Some(name), None) => preset_toml(name).map_err(classify)?,
        (None, Some(path)) => fs::read_to_string(path)
            .map_err(|e| Failure::config(format!("cannot read config {}: {e}", path.display())))?,
        _ => return Err(Failure::config("exactly one of --preset or --config is required")),
    };
    let overrides = parse_overrides(&shared.set)?;
    let mut cfg =
        ExperimentConfig::from_toml_str_with_overrides(&text, &overrides).map_err(classify)?;
    if let Some(raw) = &shared.seeds {
        cfg.seeds = parse_seeds(raw)?;
    }
    cfg.validate().map_err(classify)?;
    Ok(cfg)
}

fn parse_overrides(set: &[String]) -> Result<Vec<(String, String)>, Failure> {
    set.iter()
        .map(|entry| {
            entry
                .split_once('=')
                .map(|(k, v)| (k.trim().to_string(), v.to_string()))
                .ok_or_else(|| Failure::config(format!("--set needs KEY=VALUE, got {entry:?}")))
        })
        .collect()
}

fn parse_seeds(raw: &str) -> Result<Seeds, Failure> {
    if raw.contains("..") {
        return Ok(Seeds::Range(raw.to_string()));
    }
    let list = raw
        .split(',')
        .map(|part| {
            part.trim()
                .parse::<u64>()
                .map_err(|_| Failure::config(format!("bad seed {part:?} in --seeds {raw:?}")))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Seeds::List(list))
}

fn parse_range(raw: &str, flag: &str) -> Result<[i64; 2], Failure> {
    let err = || Failure::config(format!("{flag} must look like A..B, got {raw:?}"));
    let (lo, hi) = raw.split_once("..").ok_or_else(err)?;
    let lo = lo.trim().parse::<i64>().map_err(|_| err())?;
    let hi = hi.trim().parse::<i64>().map_err(|_| err())?;
    Ok([lo, hi])
}

fn ensure_out_dir(flag: Option<&Path>, cfg_out: Option<&Path>) -> Result<PathBuf, Failure> {
    let dir = flag.or(cfg_out).map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from("out"));
    fs::create_dir_all(&dir)
        .map_err(|e| Failure::runtime(format!("cannot create {}: {e}", dir.display())))?;
    Ok(dir)
}

/// Echoes the effective config (after --set and --seeds) next to the
/// results so a run can be reproduced from its output directory alone.
fn echo_config(dir: &Path, cfg: &ExperimentConfig) -> Result<(), Failure> {
    let text = cfg.to_toml_string().map_err(classify)?;
    let path = dir.join("config.toml");
    fs::write(&path, text)
        .map_err(|e| Failure::runtime(format!("cannot write {}: {e}", path.display())))
}

fn write_file<F>(dir: &Path, name: &str, write: F) -> Result<(), Failure>
where
    F: FnOnce(&mut BufWriter<fs::File>) -> tvbo_core::Result<()>,
{
    let path = dir.join(name);
    let file = fs::File::create(&path)
        .map_err(|e| Failure::runtime(format!("cannot write {}: {e}", path.display())))?;
    let mut w = BufWriter::new(file);
    write(&mut w).map_err(classify)?;
    w.flush()
        .map_err(|e| Failure::runtime(format!("cannot write {}: {e}", path.display())))
}

fn cmd_run(shared: &SharedArgs) -> Result<(), Failure> {
    let cfg = load_config(shared)?;
    let dir = ensure_out_dir(shared.out.as_deref(), cfg.out.as_deref())?;
    let output = run_experiment(&cfg, shared.jobs).map_err(classify)?;
    echo_config(&dir, &cfg)?;
    write_file(&dir, "trace.csv", |w| write_trace_csv(w, &output.trace))?;
    write_file(&dir, "summary.csv", |w| write_summary_csv(w, &output.summary))?;
    for row in &output.summary {
        println!(
            "{}: mean_RT={} std_RT={} mean_resets={}",
            row.policy,
            fmt_sig9(row.mean_rt),
            fmt_sig9(row.std_rt),
            fmt_sig9(row.mean_resets)
        );
    }
    println!("wrote {}", dir.display());
    Ok(())
}

fn cmd_stopping(shared: &SharedArgs, runs: u64, delta: f64) -> Result<(), Failure> {
    let cfg = load_config(shared)?;
    let dir = ensure_out_dir(shared.out.as_deref(), cfg.out.as_deref())?;
    let (samples, report) = stopping_times(&cfg, runs, shared.jobs, delta).map_err(classify)?;
    echo_config(&dir, &cfg)?;
    write_file(&dir, "stopping.csv", |w| write_stopping_csv(w, &samples))?;
    write_file(&dir, "stopping_stats.csv", |w| write_stopping_stats_csv(w, &report))?;
    match (report.mean_tau, report.median_tau) {
        (Some(mean), Some(median)) => println!(
            "{} of {} runs reset; mean tau {} median {} quantile_ok {}",
            report.n_reset,
            report.n_runs,
            fmt_sig9(mean),
            median,
            report.quantile_ok
        ),
        _ => println!("0 of {} runs reset before the horizon", report.n_runs),
    }
    println!("wrote {}", dir.display());
    Ok(())
}

fn cmd_bound(shared: &SharedArgs, policy: Option<String>, seed: Option<u64>) -> Result<(), Failure> {
    let cfg = load_config(shared)?;
    let dir = ensure_out_dir(shared.out.as_deref(), cfg.out.as_deref())?;
    let policy = match policy {
        Some(p) => p,
        None => default_bound_policy(&cfg)?,
    };
    let seed = match seed {
        Some(s) => s,
        None => cfg.seeds.resolve().map_err(classify)?[0],
    };
    let output = run_experiment(&cfg, shared.jobs).map_err(classify)?;
    let report =
        evaluate_bound(&cfg, &output.trace, &policy, seed, shared.jobs).map_err(classify)?;
    echo_config(&dir, &cfg)?;
    write_file(&dir, "trace.csv", |w| write_trace_csv(w, &output.trace))?;
    write_file(&dir, "summary.csv", |w| write_summary_csv(w, &output.summary))?;
    write_file(&dir, "bound.csv", |w| write_bound_csv(w, &report))?;
    write_file(&dir, "bound_meta.csv", |w| write_bound_meta_csv(w, &report))?;
    println!(
        "policy {} seed {}: gamma={} over block of {}, tau_bar={} ({}), c1={}",
        report.policy,
        report.seed,
        fmt_sig9(report.gamma),
        report.block_len,
        fmt_sig9(report.tau_bar),
        report.tau_bar_source,
        fmt_sig9(report.c1)
    );
    println!("wrote {}", dir.display());
    Ok(())
}

/// Picks the episode to diagnose when --policy is absent: the first
/// event-triggered entry, else the first policy.
fn default_bound_policy(cfg: &ExperimentConfig) -> Result<String, Failure> {
    let pick = cfg
        .policies
        .iter()
        .find(|p| matches!(p.kind, PolicyKind::EtGpUcb))
        .or_else(|| cfg.policies.first())
        .ok_or_else(|| Failure::config("config has no policies"))?;
    Ok(pick.effective_label())
}

fn cmd_ingest_check(
    csv: &Path,
    train: &str,
    test: &str,
    out: Option<PathBuf>,
) -> Result<(), Failure> {
    let train_range = parse_range(train, "--train-range")?;
    let test_range = parse_range(test, "--test-range")?;
    let ds = ingest_arms_csv(csv, train_range, test_range).map_err(classify)?;
    let dir = ensure_out_dir(out.as_deref(), None)?;
    write_file(&dir, "covariance.csv", |w| write_covariance_csv(w, &ds.covariance))?;
    println!(
        "{} arms, {} training rows, {} test rows",
        ds.n_arms(),
        ds.train_rows.len(),
        ds.test_rows.len()
    );
    println!("wrote {}", dir.join("covariance.csv").display());
    Ok(())
}

fn cmd_list_presets(name: Option<&str>) -> Result<(), Failure> {
    match name {
        None => {
            for name in preset_names() {
                println!("{name}");
            }
            Ok(())
        }
        Some(name) => {
            let text = preset_toml(name).map_err(classify)?;
            print!("{text}");
            if !text.ends_with('\n') {
                println!();
            }
            Ok(())
        }
    }
}
