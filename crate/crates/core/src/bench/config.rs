//! Experiment configuration: a TOML schema mirroring the runner's inputs,
//! with strict unknown-key rejection and dotted-path overrides. The
//! effective config can be serialized back out for provenance.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::algorithms::{r_gp_ucb_block_length, BetaSchedule, Domain, Policy};
use crate::posterior::NoiseModel;
use crate::synthetic::EpsilonSchedule;
use crate::trigger::TriggerConfig;
use crate::{Error, Result};

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub horizon: u64,
    pub seeds: Seeds,
    pub domain: DomainConfig,
    pub kernel: KernelConfig,
    pub noise: NoiseConfig,
    pub objective: ObjectiveConfig,
    pub beta: BetaConfig,
    pub policies: Vec<PolicyConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bound: Option<BoundConfig>,
    /// Default output directory; a CLI flag takes precedence.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

/// Seed set: an explicit list or an inclusive range string "A..B".
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Seeds {
    List(Vec<u64>),
    Range(String),
}

impl Seeds {
    pub fn resolve(&self) -> Result<Vec<u64>> {
        let seeds = match self {
            Seeds::List(v) => v.clone(),
            Seeds::Range(s) => {
                let (a, b) = s
                    .split_once("..")
                    .ok_or_else(|| Error::Config(format!("seed range must be \"A..B\", got {s:?}")))?;
                let a: u64 = a
                    .trim()
                    .parse()
                    .map_err(|_| Error::Config(format!("bad seed range start in {s:?}")))?;
                let b: u64 = b
                    .trim()
                    .parse()
                    .map_err(|_| Error::Config(format!("bad seed range end in {s:?}")))?;
                if a > b {
                    return Err(Error::Config(format!("empty seed range {s:?}")));
                }
                (a..=b).collect()
            }
        };
        if seeds.is_empty() {
            return Err(Error::Config("seed set is empty".into()));
        }
        let mut sorted = seeds.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Config("seed set contains duplicates".into()));
        }
        Ok(seeds)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DomainConfig {
    Grid { bounds: Vec<[f64; 2]>, resolution: usize },
    Arms { count: usize },
}

impl DomainConfig {
    pub fn to_domain(&self) -> Result<Domain<f64>> {
        let d = match self {
            DomainConfig::Grid { bounds, resolution } => Domain::Grid {
                bounds: bounds.iter().map(|b| (b[0], b[1])).collect(),
                resolution: *resolution,
            },
            DomainConfig::Arms { count } => Domain::Arms { count: *count },
        };
        d.validate()?;
        Ok(d)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelConfig {
    SquaredExponential {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        lengthscale: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        lengthscales: Option<Vec<f64>>,
        #[serde(default = "default_signal_variance")]
        signal_variance: f64,
    },
    Empirical {
        /// Square covariance matrix CSV; omitted when the covariance comes
        /// from an ingested training split.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        csv: Option<PathBuf>,
    },
}

fn default_signal_variance() -> f64 {
    1.0
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    pub sigma_n_sq: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ObjectiveConfig {
    Markov {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        epsilon: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        schedule: Option<Vec<SchedulePoint>>,
    },
    SuddenChange {
        change_step: u64,
    },
    ArmsReplay {
        csv: PathBuf,
        train_range: [i64; 2],
        test_range: [i64; 2],
    },
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchedulePoint {
    pub from: u64,
    pub epsilon: f64,
}

impl ObjectiveConfig {
    /// Forgetting-rate schedule for Markov objectives.
    pub fn epsilon_schedule(&self) -> Result<EpsilonSchedule<f64>> {
        let ObjectiveConfig::Markov { epsilon, schedule } = self else {
            return Err(Error::Config("objective has no forgetting-rate schedule".into()));
        };
        let sched = match (epsilon, schedule) {
            (Some(e), None) => EpsilonSchedule::Constant(*e),
            (None, Some(points)) => {
                EpsilonSchedule::Piecewise(points.iter().map(|p| (p.from, p.epsilon)).collect())
            }
            _ => {
                return Err(Error::Config(
                    "markov objective needs exactly one of `epsilon` or `schedule`".into(),
                ))
            }
        };
        sched.validate()?;
        Ok(sched)
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum BetaConfig {
    Approximate { c1: f64, c2: f64 },
    Exact { delta: f64, d: u32, r: f64, a1: f64, b1: f64 },
}

impl BetaConfig {
    pub fn to_schedule(&self) -> Result<BetaSchedule<f64>> {
        let s = match *self {
            BetaConfig::Approximate { c1, c2 } => BetaSchedule::Approximate { c1, c2 },
            BetaConfig::Exact { delta, d, r, a1, b1 } => {
                BetaSchedule::Exact { delta, d, r, a1, b1 }
            }
        };
        s.validate()?;
        Ok(s)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    GpUcb,
    TvGpUcb,
    RGpUcb,
    EtGpUcb,
}

impl PolicyKind {
    pub fn label(&self) -> &'static str {
        match self {
            PolicyKind::GpUcb => "gp_ucb",
            PolicyKind::TvGpUcb => "tv_gp_ucb",
            PolicyKind::RGpUcb => "r_gp_ucb",
            PolicyKind::EtGpUcb => "et_gp_ucb",
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyConfig {
    pub kind: PolicyKind,
    /// Forgetting rate: required for tv_gp_ucb; for r_gp_ucb an alternative
    /// to `n_const` (the block length is then derived from the horizon).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_const: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta_b: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

impl PolicyConfig {
    pub fn effective_label(&self) -> String {
        self.label.clone().unwrap_or_else(|| self.kind.label().to_string())
    }

    pub fn to_policy(&self, horizon: u64, sigma_n_sq: f64) -> Result<Policy<f64>> {
        let forbid = |field: Option<()>, name: &str| -> Result<()> {
            if field.is_some() {
                return Err(Error::Config(format!(
                    "policy {} does not take `{name}`",
                    self.kind.label()
                )));
            }
            Ok(())
        };
        let policy = match self.kind {
            PolicyKind::GpUcb => {
                forbid(self.epsilon.map(|_| ()), "epsilon")?;
                forbid(self.n_const.map(|_| ()), "n_const")?;
                forbid(self.delta_b.map(|_| ()), "delta_b")?;
                Policy::GpUcb
            }
            PolicyKind::TvGpUcb => {
                forbid(self.n_const.map(|_| ()), "n_const")?;
                forbid(self.delta_b.map(|_| ()), "delta_b")?;
                let epsilon = self.epsilon.ok_or_else(|| {
                    Error::Config("policy tv_gp_ucb needs `epsilon`".into())
                })?;
                Policy::TvGpUcb { epsilon }
            }
            PolicyKind::RGpUcb => {
                forbid(self.delta_b.map(|_| ()), "delta_b")?;
                let n_const = match (self.n_const, self.epsilon) {
                    (Some(n), None) => n,
                    (None, Some(eps)) => r_gp_ucb_block_length(eps, horizon)?,
                    _ => {
                        return Err(Error::Config(
                            "policy r_gp_ucb needs exactly one of `n_const` or `epsilon`".into(),
                        ))
                    }
                };
                Policy::RGpUcb { n_const }
            }
            PolicyKind::EtGpUcb => {
                forbid(self.epsilon.map(|_| ()), "epsilon")?;
                forbid(self.n_const.map(|_| ()), "n_const")?;
                let delta_b = self.delta_b.ok_or_else(|| {
                    Error::Config("policy et_gp_ucb needs `delta_b`".into())
                })?;
                Policy::EtGpUcb { trigger: TriggerConfig::new(delta_b, sigma_n_sq)? }
            }
        };
        policy.validate()?;
        Ok(policy)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundConfig {
    pub delta: f64,
    pub a0: f64,
    pub b0: f64,
    pub a1: f64,
    pub b1: f64,
    #[serde(default = "default_one")]
    pub l: f64,
    #[serde(default = "default_one")]
    pub l_f: f64,
    /// Mean stopping time over confidence; estimated by Monte-Carlo when
    /// absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau_bar: Option<f64>,
    /// Rate of change used in the mismatch term; defaults to the objective's
    /// constant rate.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(default = "default_mc_runs")]
    pub mc_runs: u64,
}

fn default_one() -> f64 {
    1.0
}

fn default_mc_runs() -> u64 {
    200
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::Config(format!("config parse error: {e}")))?;
        Ok(cfg)
    }

    /// Parse with `--set key=value` style overrides applied before
    /// deserialization, so every override is type-checked by the schema.
    pub fn from_toml_str_with_overrides(text: &str, overrides: &[(String, String)]) -> Result<Self> {
        let mut value: toml::Value =
            toml::from_str(text).map_err(|e| Error::Config(format!("config parse error: {e}")))?;
        for (key, raw) in overrides {
            apply_override(&mut value, key, raw)?;
        }
        let cfg: ExperimentConfig = value
            .try_into()
            .map_err(|e| Error::Config(format!("config invalid after overrides: {e}")))?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(format!("config serialize: {e}")))
    }

    pub fn beta_schedule(&self) -> Result<BetaSchedule<f64>> {
        self.beta.to_schedule()
    }

    pub fn noise_model(&self) -> Result<NoiseModel<f64>> {
        NoiseModel::new(self.noise.sigma_n_sq)
    }

    /// (label, policy) pairs in config order.
    pub fn policy_pairs(&self) -> Result<Vec<(String, Policy<f64>)>> {
        let mut pairs = Vec::with_capacity(self.policies.len());
        for p in &self.policies {
            pairs.push((p.effective_label(), p.to_policy(self.horizon, self.noise.sigma_n_sq)?));
        }
        Ok(pairs)
    }

    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty() {
            return Err(Error::Config("experiment name is empty".into()));
        }
        if self.horizon < 1 {
            return Err(Error::Config("horizon must be at least 1".into()));
        }
        self.seeds.resolve()?;
        let domain = self.domain.to_domain()?;
        match (&self.kernel, &domain) {
            (
                KernelConfig::SquaredExponential { lengthscale, lengthscales, signal_variance },
                Domain::Grid { bounds, .. },
            ) => {
                if !(*signal_variance > 0.0) {
                    return Err(Error::Config("signal variance must be positive".into()));
                }
                match (lengthscale, lengthscales) {
                    (Some(l), None) => {
                        if !(*l > 0.0) {
                            return Err(Error::Config("lengthscale must be positive".into()));
                        }
                    }
                    (None, Some(ls)) => {
                        if ls.len() != bounds.len() {
                            return Err(Error::Config(format!(
                                "{} lengthscales for a {}-dimensional grid",
                                ls.len(),
                                bounds.len()
                            )));
                        }
                        if ls.iter().any(|l| !(*l > 0.0)) {
                            return Err(Error::Config("lengthscales must be positive".into()));
                        }
                    }
                    _ => {
                        return Err(Error::Config(
                            "kernel needs exactly one of `lengthscale` or `lengthscales`".into(),
                        ))
                    }
                }
            }
            (KernelConfig::Empirical { .. }, Domain::Arms { .. }) => {}
            (KernelConfig::SquaredExponential { .. }, Domain::Arms { .. }) => {
                return Err(Error::Config(
                    "squared-exponential kernel needs a grid domain".into(),
                ))
            }
            (KernelConfig::Empirical { .. }, Domain::Grid { .. }) => {
                return Err(Error::Config("empirical kernel needs an arms domain".into()))
            }
        }
        match &self.objective {
            ObjectiveConfig::Markov { .. } => {
                self.objective.epsilon_schedule()?;
            }
            ObjectiveConfig::SuddenChange { change_step } => {
                if *change_step < 1 {
                    return Err(Error::Config("change step must be at least 1".into()));
                }
            }
            ObjectiveConfig::ArmsReplay { train_range, test_range, .. } => {
                if !matches!(domain, Domain::Arms { .. }) {
                    return Err(Error::Config("arms replay needs an arms domain".into()));
                }
                match &self.kernel {
                    KernelConfig::Empirical { csv: None } => {}
                    KernelConfig::Empirical { csv: Some(_) } => {
                        return Err(Error::Config(
                            "arms replay derives the empirical kernel from the training split; \
                             remove the kernel `csv`"
                                .into(),
                        ))
                    }
                    _ => unreachable!("kernel/domain pairing checked above"),
                }
                for (name, r) in [("train_range", train_range), ("test_range", test_range)] {
                    if r[0] > r[1] {
                        return Err(Error::Config(format!("{name} is empty: {r:?}")));
                    }
                }
            }
        }
        if !(self.noise.sigma_n_sq > 0.0) || !self.noise.sigma_n_sq.is_finite() {
            return Err(Error::Config("noise variance must be positive and finite".into()));
        }
        self.beta_schedule()?;
        if self.policies.is_empty() {
            return Err(Error::Config("no policies configured".into()));
        }
        let pairs = self.policy_pairs()?;
        for i in 0..pairs.len() {
            for j in (i + 1)..pairs.len() {
                if pairs[i].0 == pairs[j].0 {
                    return Err(Error::Config(format!(
                        "duplicate policy label {:?}; set `label` to disambiguate",
                        pairs[i].0
                    )));
                }
            }
        }
        if let Some(b) = &self.bound {
            if !(b.delta > 0.0 && b.delta < 1.0) {
                return Err(Error::Config("bound delta must lie in (0, 1)".into()));
            }
            for (name, v) in [("a0", b.a0), ("b0", b.b0), ("a1", b.a1), ("b1", b.b1), ("l", b.l), ("l_f", b.l_f)]
            {
                if !(v > 0.0) || !v.is_finite() {
                    return Err(Error::Config(format!(
                        "bound constant {name} must be positive and finite"
                    )));
                }
            }
            if let Some(tb) = b.tau_bar {
                if !(tb >= 1.0) || !tb.is_finite() {
                    return Err(Error::Config("bound tau_bar must be at least 1".into()));
                }
            }
            if let Some(e) = b.epsilon {
                if !(0.0..=1.0).contains(&e) {
                    return Err(Error::Config("bound epsilon must lie in [0, 1]".into()));
                }
            }
            if b.mc_runs < 1 {
                return Err(Error::Config("bound mc_runs must be at least 1".into()));
            }
        }
        Ok(())
    }
}

/// Replace the value at a dotted path (table keys and array indices) with a
/// TOML literal parsed from `raw`; `raw` falls back to a string when it is
/// not valid TOML. Intermediate path segments must already exist; the final
/// segment may create a key, so optional fields are settable. Typos still
/// fail: the overridden config is re-checked against the schema, which
/// rejects unknown keys.
pub fn apply_override(root: &mut toml::Value, key: &str, raw: &str) -> Result<()> {
    let parts: Vec<&str> = key.split('.').collect();
    let (last, walk) = parts.split_last().expect("split never yields an empty list");
    let mut cur = root;
    for part in walk {
        cur = match cur {
            toml::Value::Table(map) => map.get_mut(*part).ok_or_else(|| {
                Error::Config(format!("override key {key:?} not found (missing {part:?})"))
            })?,
            toml::Value::Array(arr) => {
                let idx: usize = part.parse().map_err(|_| {
                    Error::Config(format!("override key {key:?}: {part:?} is not an array index"))
                })?;
                arr.get_mut(idx).ok_or_else(|| {
                    Error::Config(format!("override key {key:?}: index {idx} out of range"))
                })?
            }
            _ => {
                return Err(Error::Config(format!(
                    "override key {key:?} descends into a scalar at {part:?}"
                )))
            }
        };
    }
    match cur {
        toml::Value::Table(map) => {
            map.insert(last.to_string(), parse_override_value(raw));
        }
        toml::Value::Array(arr) => {
            let idx: usize = last.parse().map_err(|_| {
                Error::Config(format!("override key {key:?}: {last:?} is not an array index"))
            })?;
            let slot = arr.get_mut(idx).ok_or_else(|| {
                Error::Config(format!("override key {key:?}: index {idx} out of range"))
            })?;
            *slot = parse_override_value(raw);
        }
        _ => {
            return Err(Error::Config(format!(
                "override key {key:?} descends into a scalar at {last:?}"
            )))
        }
    }
    Ok(())
}

fn parse_override_value(raw: &str) -> toml::Value {
    if let Ok(toml::Value::Table(t)) = toml::from_str::<toml::Value>(&format!("v = {raw}")) {
        if let Some(v) = t.get("v") {
            return v.clone();
        }
    }
    toml::Value::String(raw.to_string())
}
