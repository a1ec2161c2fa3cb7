//! CSV emission with a fixed 9-significant-digit float format. Parsing an
//! emitted number back into f64 and re-formatting it reproduces the same
//! bytes, which is what makes re-run and round-trip comparisons exact.

use std::io::Write;

use super::bound::BoundReport;
use super::run::{StoppingReport, StoppingRun};
use crate::Result;

pub const TRACE_HEADER: &[&str] = &[
    "policy", "seed", "t", "x_index", "y", "f_xt", "f_star", "r_t", "R_t", "reset", "psi", "kappa",
];

pub const SUMMARY_HEADER: &[&str] = &["policy", "mean_RT", "std_RT", "mean_resets"];

pub const STOPPING_HEADER: &[&str] = &["seed", "tau", "censored"];

pub const STOPPING_STATS_HEADER: &[&str] = &[
    "n_runs", "n_reset", "mean_tau", "median_tau", "delta", "tau_bar", "frac_below_tau_bar",
    "quantile_ok",
];

pub const BOUND_HEADER: &[&str] = &["t", "beta_t", "phi_t", "bound_rhs"];

pub const BOUND_META_HEADER: &[&str] = &[
    "policy", "seed", "epsilon", "delta", "sigma_n_sq", "tau_bar", "tau_bar_source", "gamma",
    "gamma_kind", "block_len", "c1",
];

/// One emitted step of one (policy, seed) run. `r_t` is stored already
/// rounded to the emission precision and `cum_regret` is the running sum of
/// those rounded values, so the written columns satisfy R_t = Σ r_t exactly.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceRow {
    pub policy: String,
    pub seed: u64,
    pub t: u64,
    pub x_index: usize,
    pub y: f64,
    pub f_xt: f64,
    pub f_star: f64,
    pub r_t: f64,
    pub cum_regret: f64,
    pub reset: bool,
    pub psi: Option<f64>,
    pub kappa: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SummaryRow {
    pub policy: String,
    pub mean_rt: f64,
    pub std_rt: f64,
    pub mean_resets: f64,
}

/// Formats with 9 significant digits: plain decimal while the exponent lies
/// in [-4, 9), scientific otherwise, trailing zeros trimmed.
pub fn fmt_sig9(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let s = format!("{:.8e}", x);
    let (mant, exp) = s.split_once('e').expect("exponential format");
    let exp: i32 = exp.parse().expect("exponent");
    let neg = mant.starts_with('-');
    let digits: Vec<u8> = mant.bytes().filter(|b| b.is_ascii_digit()).collect();
    debug_assert_eq!(digits.len(), 9);
    let sign = if neg { "-" } else { "" };
    let mut out = String::new();
    if (-4..9).contains(&exp) {
        if exp >= 0 {
            let split = exp as usize + 1;
            out.push_str(std::str::from_utf8(&digits[..split]).unwrap());
            let frac = trim_zeros(&digits[split..]);
            if !frac.is_empty() {
                out.push('.');
                out.push_str(frac);
            }
        } else {
            out.push_str("0.");
            for _ in 0..(-exp - 1) {
                out.push('0');
            }
            out.push_str(trim_zeros(&digits));
        }
        format!("{sign}{out}")
    } else {
        out.push(digits[0] as char);
        let frac = trim_zeros(&digits[1..]);
        if !frac.is_empty() {
            out.push('.');
            out.push_str(frac);
        }
        format!("{sign}{out}e{exp}")
    }
}

fn trim_zeros(digits: &[u8]) -> &str {
    let end = digits.iter().rposition(|&b| b != b'0').map_or(0, |p| p + 1);
    std::str::from_utf8(&digits[..end]).unwrap()
}

/// Nearest f64 to the 9-significant-digit decimal rendering of x. Applying
/// fmt_sig9 to the result reproduces the same string (9 < 15 digits, so the
/// decimal → binary → decimal trip is the identity).
pub fn round_sig9(x: f64) -> f64 {
    fmt_sig9(x).parse().expect("own format parses")
}

fn opt(x: Option<f64>) -> String {
    x.map(fmt_sig9).unwrap_or_default()
}

pub fn write_trace_csv<W: Write>(w: W, rows: &[TraceRow]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(TRACE_HEADER)?;
    for r in rows {
        wtr.write_record(&[
            r.policy.clone(),
            r.seed.to_string(),
            r.t.to_string(),
            r.x_index.to_string(),
            fmt_sig9(r.y),
            fmt_sig9(r.f_xt),
            fmt_sig9(r.f_star),
            fmt_sig9(r.r_t),
            fmt_sig9(r.cum_regret),
            if r.reset { "1" } else { "0" }.to_string(),
            opt(r.psi),
            opt(r.kappa),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_summary_csv<W: Write>(w: W, rows: &[SummaryRow]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(SUMMARY_HEADER)?;
    for r in rows {
        wtr.write_record(&[
            r.policy.clone(),
            fmt_sig9(r.mean_rt),
            fmt_sig9(r.std_rt),
            fmt_sig9(r.mean_resets),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_stopping_csv<W: Write>(w: W, runs: &[StoppingRun]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(STOPPING_HEADER)?;
    for r in runs {
        wtr.write_record(&[
            r.seed.to_string(),
            r.tau.map(|t| t.to_string()).unwrap_or_default(),
            if r.tau.is_none() { "1" } else { "0" }.to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_stopping_stats_csv<W: Write>(w: W, report: &StoppingReport) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(STOPPING_STATS_HEADER)?;
    wtr.write_record(&[
        report.n_runs.to_string(),
        report.n_reset.to_string(),
        opt(report.mean_tau),
        report.median_tau.map(|t| t.to_string()).unwrap_or_default(),
        fmt_sig9(report.delta),
        opt(report.tau_bar),
        opt(report.frac_below_tau_bar),
        if report.quantile_ok { "1" } else { "0" }.to_string(),
    ])?;
    wtr.flush()?;
    Ok(())
}

pub fn write_bound_csv<W: Write>(w: W, report: &BoundReport) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(BOUND_HEADER)?;
    for r in &report.rows {
        wtr.write_record(&[
            r.t.to_string(),
            fmt_sig9(r.beta),
            fmt_sig9(r.phi),
            fmt_sig9(r.rhs),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_bound_meta_csv<W: Write>(w: W, report: &BoundReport) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(BOUND_META_HEADER)?;
    wtr.write_record(&[
        report.policy.clone(),
        report.seed.to_string(),
        fmt_sig9(report.epsilon),
        fmt_sig9(report.delta),
        fmt_sig9(report.sigma_n_sq),
        fmt_sig9(report.tau_bar),
        report.tau_bar_source.clone(),
        fmt_sig9(report.gamma),
        "surrogate (lower)".to_string(),
        report.block_len.to_string(),
        fmt_sig9(report.c1),
    ])?;
    wtr.flush()?;
    Ok(())
}
