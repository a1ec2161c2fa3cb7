//! Built-in experiment configurations. Each preset is a complete TOML
//! config, so `list-presets NAME` doubles as a copyable config example.
//!
//! The drifting-grid family uses a 2-D unit square, lengthscale 0.2, noise
//! variance 0.02, the approximate confidence schedule (c1 = 0.4, c2 = 4),
//! horizon 400 and 50 seeds. Scheduled-reset block lengths are derived
//! from the drift rate. Monte-Carlo presets shrink the grid to keep the
//! per-run cost small, since stopping-time statistics need ~10³ runs.

use crate::{Error, Result};

use super::config::ExperimentConfig;

const PRESET_NAMES: [&str; 11] = [
    "within-model-eps0.01",
    "within-model-eps0.03",
    "within-model-eps0.05",
    "misspecified",
    "sensitivity-eps0.01",
    "sensitivity-eps0.03",
    "sensitivity-eps0.05",
    "mc-eps0.03",
    "mc-eps0.1",
    "static-eps0",
    "sudden-change",
];

pub fn preset_names() -> &'static [&'static str] {
    &PRESET_NAMES
}

pub fn preset(name: &str) -> Result<ExperimentConfig> {
    let cfg = ExperimentConfig::from_toml_str(&preset_toml(name)?)?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn preset_toml(name: &str) -> Result<String> {
    let text = match name {
        "within-model-eps0.01" => within_model(name, 0.01),
        "within-model-eps0.03" => within_model(name, 0.03),
        "within-model-eps0.05" => within_model(name, 0.05),
        "misspecified" => misspecified(),
        "sensitivity-eps0.01" => sensitivity(name, 0.01),
        "sensitivity-eps0.03" => sensitivity(name, 0.03),
        "sensitivity-eps0.05" => sensitivity(name, 0.05),
        "mc-eps0.03" => monte_carlo(name, 0.03),
        "mc-eps0.1" => monte_carlo(name, 0.1),
        "static-eps0" => monte_carlo(name, 0.0),
        "sudden-change" => sudden_change(),
        _ => {
            return Err(Error::Config(format!(
                "unknown preset {name:?} (available: {})",
                PRESET_NAMES.join(", ")
            )))
        }
    };
    Ok(text)
}

fn drifting_grid_header(name: &str, horizon: u64, seeds: &str, resolution: usize) -> String {
    format!(
        r#"name = "{name}"
horizon = {horizon}
seeds = "{seeds}"

[domain.grid]
bounds = [[0.0, 1.0], [0.0, 1.0]]
resolution = {resolution}

[kernel.squared_exponential]
lengthscale = 0.2
signal_variance = 1.0

[noise]
sigma_n_sq = 0.02

[beta.approximate]
c1 = 0.4
c2 = 4.0
"#
    )
}

fn bound_section() -> &'static str {
    r#"
[bound]
delta = 0.1
a0 = 1.0
b0 = 1.0
a1 = 1.0
b1 = 1.0
mc_runs = 200
"#
}

fn within_model(name: &str, epsilon: f64) -> String {
    format!(
        r#"{header}
[objective.markov]
epsilon = {epsilon}
{bound}
[[policies]]
kind = "gp_ucb"

[[policies]]
kind = "tv_gp_ucb"
epsilon = {epsilon}

[[policies]]
kind = "r_gp_ucb"
epsilon = {epsilon}

[[policies]]
kind = "et_gp_ucb"
delta_b = 0.1
"#,
        header = drifting_grid_header(name, 400, "0..49", 50),
        bound = bound_section(),
    )
}

/// The forgetting baselines assume a drift rate of 0.001 while the
/// objective actually moves at 0.05; the event trigger needs no rate.
fn misspecified() -> String {
    format!(
        r#"{header}
[objective.markov]
epsilon = 0.05
{bound}
[[policies]]
kind = "gp_ucb"

[[policies]]
kind = "tv_gp_ucb"
epsilon = 0.001

[[policies]]
kind = "r_gp_ucb"
epsilon = 0.001

[[policies]]
kind = "et_gp_ucb"
delta_b = 0.1
"#,
        header = drifting_grid_header("misspecified", 400, "0..49", 50),
        bound = bound_section(),
    )
}

fn sensitivity(name: &str, epsilon: f64) -> String {
    let mut text = format!(
        r#"{header}
[objective.markov]
epsilon = {epsilon}
"#,
        header = drifting_grid_header(name, 400, "0..49", 50),
    );
    for delta_b in [0.005, 0.01, 0.05, 0.1, 0.5] {
        text.push_str(&format!(
            r#"
[[policies]]
kind = "et_gp_ucb"
delta_b = {delta_b}
label = "et_gp_ucb_db{delta_b}"
"#
        ));
    }
    text
}

fn monte_carlo(name: &str, epsilon: f64) -> String {
    format!(
        r#"{header}
[objective.markov]
epsilon = {epsilon}

[[policies]]
kind = "et_gp_ucb"
delta_b = 0.1
"#,
        header = drifting_grid_header(name, 200, "0..9", 25),
    )
}

fn sudden_change() -> String {
    format!(
        r#"{header}
[objective.sudden_change]
change_step = 150

[[policies]]
kind = "gp_ucb"

[[policies]]
kind = "tv_gp_ucb"
epsilon = 0.03

[[policies]]
kind = "r_gp_ucb"
n_const = 29

[[policies]]
kind = "et_gp_ucb"
delta_b = 0.1
"#,
        header = drifting_grid_header("sudden-change", 300, "0..49", 50),
    )
}
