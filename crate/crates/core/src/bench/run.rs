//! Experiment orchestration: seeded (policy × seed) episodes over drifting
//! objectives, regret accounting at emitted precision, and deterministic
//! parallel execution.
//!
//! RNG layout per seed: stream 0 of the seeded generator drives the
//! objective realization, streams 1-4 drive observation noise keyed by
//! policy kind (gp_ucb = 1, tv_gp_ucb = 2, r_gp_ucb = 3, et_gp_ucb = 4).
//! Keying by kind rather than by list position makes every row independent
//! of which other policies run alongside, so a filtered rerun reproduces
//! the full run's rows bitwise; policies of the same kind deliberately
//! share a stream, turning parameter sweeps into paired comparisons.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::algorithms::{BetaSchedule, Domain, Policy, PolicyState};
use crate::kernels::{EmpiricalKernel, Kernel, SquaredExponentialKernel};
use crate::posterior::{GridSampler, NoiseModel};
use crate::synthetic::{
    argmax_lowest_index, EpsilonSchedule, MarkovChainObjective, SuddenChangeObjective,
};
use crate::{Error, Result};

use super::config::{ExperimentConfig, KernelConfig, ObjectiveConfig, PolicyKind};
use super::ingest::{ingest_arms_csv, ArmsReplayDataset};
use super::output::{round_sig9, SummaryRow, TraceRow};

/// Observation-noise stream id for a policy kind; see the module docs.
pub fn noise_stream(kind: PolicyKind) -> u64 {
    match kind {
        PolicyKind::GpUcb => 1,
        PolicyKind::TvGpUcb => 2,
        PolicyKind::RGpUcb => 3,
        PolicyKind::EtGpUcb => 4,
    }
}

/// Candidate space instantiated from a config: the kernel together with the
/// points it acts on, plus the replay dataset when one backs the objective.
pub enum Space {
    Grid { kernel: SquaredExponentialKernel<f64>, points: Vec<Vec<f64>> },
    Arms { kernel: EmpiricalKernel<f64>, points: Vec<usize>, replay: Option<ArmsReplayDataset> },
}

pub fn build_space(cfg: &ExperimentConfig) -> Result<Space> {
    let domain = cfg.domain.to_domain()?;
    match (&cfg.kernel, &domain) {
        (
            KernelConfig::SquaredExponential { lengthscale, lengthscales, signal_variance },
            Domain::Grid { bounds, .. },
        ) => {
            let ls = match (lengthscale, lengthscales) {
                (Some(l), None) => vec![*l; bounds.len()],
                (None, Some(v)) => v.clone(),
                _ => {
                    return Err(Error::Config(
                        "kernel needs exactly one of `lengthscale` or `lengthscales`".into(),
                    ))
                }
            };
            let kernel = SquaredExponentialKernel::new(ls, *signal_variance)?;
            let points = domain.grid_points()?;
            Ok(Space::Grid { kernel, points })
        }
        (KernelConfig::Empirical { csv }, Domain::Arms { count }) => {
            let (kernel, replay) = match &cfg.objective {
                ObjectiveConfig::ArmsReplay { csv: data_csv, train_range, test_range } => {
                    let ds = ingest_arms_csv(data_csv, *train_range, *test_range)?;
                    if ds.n_arms() != *count {
                        return Err(Error::Config(format!(
                            "domain has {count} arms but the dataset has {}",
                            ds.n_arms()
                        )));
                    }
                    (EmpiricalKernel::new(ds.covariance.clone())?, Some(ds))
                }
                _ => {
                    let path = csv.as_ref().ok_or_else(|| {
                        Error::Config(
                            "empirical kernel needs `csv` unless the objective is arms_replay"
                                .into(),
                        )
                    })?;
                    let kernel = EmpiricalKernel::from_csv_path(path)?;
                    if kernel.n_arms() != *count {
                        return Err(Error::Config(format!(
                            "domain has {count} arms but the kernel matrix has {}",
                            kernel.n_arms()
                        )));
                    }
                    (kernel, None)
                }
            };
            Ok(Space::Arms { kernel, points: (0..*count).collect(), replay })
        }
        _ => Err(Error::Config("kernel and domain kinds do not match".into())),
    }
}

/// Everything `run_experiment` produces: the full per-step trace sorted by
/// (policy, seed, t) and one summary row per policy in config order.
#[derive(Clone, Debug)]
pub struct RunOutput {
    pub trace: Vec<TraceRow>,
    pub summary: Vec<SummaryRow>,
}

pub fn run_experiment(cfg: &ExperimentConfig, jobs: usize) -> Result<RunOutput> {
    cfg.validate()?;
    let space = build_space(cfg)?;
    let seeds = cfg.seeds.resolve()?;
    let schedule = cfg.beta_schedule()?;
    let noise = cfg.noise_model()?;
    let pairs = policy_triples(cfg)?;
    let horizon = cfg.horizon;
    let sampler = objective_sampler(cfg, &space)?;

    let per_seed = |seed: u64| -> Result<Vec<TraceRow>> {
        let (rows, noisy) =
            materialize_objective(cfg, &space, sampler.as_ref(), seed, horizon)?;
        let f_stars: Vec<f64> = rows.iter().map(|r| argmax_lowest_index(r).1).collect();
        match &space {
            Space::Grid { kernel, points } => run_policies_for_seed(
                kernel, points, &pairs, &schedule, noise, &rows, &f_stars, noisy, seed,
            ),
            Space::Arms { kernel, points, .. } => run_policies_for_seed(
                kernel, points, &pairs, &schedule, noise, &rows, &f_stars, noisy, seed,
            ),
        }
    };

    let per_seed_rows: Vec<Vec<TraceRow>> = in_pool(jobs, || {
        seeds.par_iter().map(|&seed| per_seed(seed)).collect()
    })?;

    let mut trace: Vec<TraceRow> = per_seed_rows.into_iter().flatten().collect();
    trace.sort_by(|a, b| {
        (a.policy.as_str(), a.seed, a.t).cmp(&(b.policy.as_str(), b.seed, b.t))
    });
    let summary = summarize(&trace, &pairs, horizon);
    Ok(RunOutput { trace, summary })
}

/// First activation of the event trigger per run. `tau` is the step of the
/// first reset, `None` when none fires within the horizon (censored).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StoppingRun {
    pub seed: u64,
    pub tau: Option<u64>,
}

/// Monte-Carlo summary of first-reset times. Censored runs enter the mean
/// (and median) at the horizon, an underestimate of their true stopping
/// time, and count as NOT below τ̄ in the quantile check; both conventions
/// push the check toward failure rather than vacuous success.
#[derive(Clone, Copy, Debug)]
pub struct StoppingReport {
    pub n_runs: u64,
    pub n_reset: u64,
    pub mean_tau: Option<f64>,
    /// Lower median of the censored-at-horizon stopping times.
    pub median_tau: Option<u64>,
    pub delta: f64,
    /// mean(τ) / δ: the Markov-inequality quantile candidate.
    pub tau_bar: Option<f64>,
    pub frac_below_tau_bar: Option<f64>,
    /// Whether P{τ < τ̄} ≥ 1 − δ − 0.03 held empirically.
    pub quantile_ok: bool,
}

/// Runs the first event-triggered policy in the config over `n_runs` fresh
/// seeds (0..n_runs), recording when its trigger first fires. Needs a
/// Markov objective with a constant forgetting rate.
pub fn stopping_times(
    cfg: &ExperimentConfig,
    n_runs: u64,
    jobs: usize,
    delta: f64,
) -> Result<(Vec<StoppingRun>, StoppingReport)> {
    cfg.validate()?;
    if n_runs < 1 {
        return Err(Error::Config("stopping-time analysis needs at least one run".into()));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::Config("stopping-time delta must lie in (0, 1)".into()));
    }
    let eps_schedule = match &cfg.objective {
        ObjectiveConfig::Markov { .. } => match cfg.objective.epsilon_schedule()? {
            s @ EpsilonSchedule::Constant(_) => s,
            EpsilonSchedule::Piecewise(_) => {
                return Err(Error::Config(
                    "stopping-time analysis needs a constant forgetting rate".into(),
                ))
            }
        },
        _ => {
            return Err(Error::Config(
                "stopping-time analysis needs a markov objective".into(),
            ))
        }
    };
    let pcfg = cfg
        .policies
        .iter()
        .find(|p| p.kind == PolicyKind::EtGpUcb)
        .ok_or_else(|| Error::Config("no event-triggered policy in config".into()))?;
    let policy = pcfg.to_policy(cfg.horizon, cfg.noise.sigma_n_sq)?;
    let space = build_space(cfg)?;
    let sampler = objective_sampler(cfg, &space)?
        .ok_or_else(|| Error::Config("stopping-time analysis needs a sampled objective".into()))?;
    let schedule = cfg.beta_schedule()?;
    let noise = cfg.noise_model()?;
    let horizon = cfg.horizon;

    let one = |seed: u64| -> Result<StoppingRun> {
        let tau = match &space {
            Space::Grid { kernel, points } => first_reset(
                kernel, points, &policy, &schedule, noise, &sampler, &eps_schedule, seed,
                horizon,
            )?,
            Space::Arms { kernel, points, .. } => first_reset(
                kernel, points, &policy, &schedule, noise, &sampler, &eps_schedule, seed,
                horizon,
            )?,
        };
        Ok(StoppingRun { seed, tau })
    };
    let runs: Vec<StoppingRun> =
        in_pool(jobs, || (0..n_runs).into_par_iter().map(one).collect())?;

    let censored_at_horizon: Vec<u64> = runs.iter().map(|r| r.tau.unwrap_or(horizon)).collect();
    let n_reset = runs.iter().filter(|r| r.tau.is_some()).count() as u64;
    let mean_tau =
        censored_at_horizon.iter().sum::<u64>() as f64 / n_runs as f64;
    let mut sorted = censored_at_horizon.clone();
    sorted.sort_unstable();
    let median_tau = sorted[(sorted.len() - 1) / 2];
    let tau_bar = mean_tau / delta;
    let below = runs
        .iter()
        .filter(|r| matches!(r.tau, Some(t) if (t as f64) < tau_bar))
        .count();
    let frac = below as f64 / n_runs as f64;
    let report = StoppingReport {
        n_runs,
        n_reset,
        mean_tau: Some(mean_tau),
        median_tau: Some(median_tau),
        delta,
        tau_bar: Some(tau_bar),
        frac_below_tau_bar: Some(frac),
        quantile_ok: frac >= 1.0 - delta - 0.03,
    };
    Ok((runs, report))
}

/// Runs `op` on a bounded worker pool; `jobs = 0` sizes it automatically.
fn in_pool<T: Send>(jobs: usize, op: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    pool.install(op)
}

fn policy_triples(cfg: &ExperimentConfig) -> Result<Vec<(String, Policy<f64>, PolicyKind)>> {
    cfg.policies
        .iter()
        .map(|p| {
            Ok((
                p.effective_label(),
                p.to_policy(cfg.horizon, cfg.noise.sigma_n_sq)?,
                p.kind,
            ))
        })
        .collect()
}

/// Joint sampler over the candidate set for objectives that draw GP
/// realizations; `None` for replayed data.
fn objective_sampler(
    cfg: &ExperimentConfig,
    space: &Space,
) -> Result<Option<GridSampler<f64>>> {
    if matches!(cfg.objective, ObjectiveConfig::ArmsReplay { .. }) {
        return Ok(None);
    }
    let sampler = match space {
        Space::Grid { kernel, points } => GridSampler::new(kernel, points)?,
        Space::Arms { kernel, points, .. } => GridSampler::new(kernel, points)?,
    };
    Ok(Some(sampler))
}

/// True objective values for one seed, one row per step, plus whether
/// observations add noise (replayed readings already contain theirs).
fn materialize_objective(
    cfg: &ExperimentConfig,
    space: &Space,
    sampler: Option<&GridSampler<f64>>,
    seed: u64,
    horizon: u64,
) -> Result<(Vec<Vec<f64>>, bool)> {
    match &cfg.objective {
        ObjectiveConfig::Markov { .. } => {
            let eps = cfg.objective.epsilon_schedule()?;
            let sampler = sampler.expect("markov objective always has a sampler");
            let mut obj = MarkovChainObjective::new(sampler.clone(), eps, seed)?;
            let mut rows = Vec::with_capacity(horizon as usize);
            for t in 1..=horizon {
                rows.push(obj.values().to_vec());
                if t < horizon {
                    obj.advance();
                }
            }
            Ok((rows, true))
        }
        ObjectiveConfig::SuddenChange { change_step } => {
            let sampler = sampler.expect("sudden-change objective always has a sampler");
            let mut obj = SuddenChangeObjective::new(sampler, *change_step, seed)?;
            let mut rows = Vec::with_capacity(horizon as usize);
            for t in 1..=horizon {
                rows.push(obj.values().to_vec());
                if t < horizon {
                    obj.advance();
                }
            }
            Ok((rows, true))
        }
        ObjectiveConfig::ArmsReplay { .. } => {
            let Space::Arms { replay: Some(ds), .. } = space else {
                return Err(Error::Config("replay dataset missing from space".into()));
            };
            if (ds.test_rows.len() as u64) < horizon {
                return Err(Error::Config(format!(
                    "horizon {horizon} exceeds replay length {}",
                    ds.test_rows.len()
                )));
            }
            Ok((ds.test_rows[..horizon as usize].to_vec(), false))
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn run_policies_for_seed<K: Kernel<f64>>(
    kernel: &K,
    candidates: &[K::Point],
    pairs: &[(String, Policy<f64>, PolicyKind)],
    schedule: &BetaSchedule<f64>,
    noise: NoiseModel<f64>,
    rows: &[Vec<f64>],
    f_stars: &[f64],
    noisy: bool,
    seed: u64,
) -> Result<Vec<TraceRow>> {
    let horizon = rows.len() as u64;
    let sigma_n = noise.sigma_n();
    let mut out = Vec::with_capacity(pairs.len() * rows.len());
    for (label, policy, kind) in pairs {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(noise_stream(*kind));
        let mut state = PolicyState::new(*policy, kernel, candidates, noise)?;
        let mut cum = 0.0f64;
        for t in 1..=horizon {
            let sel = state.select(schedule.beta(t))?;
            let f_xt = rows[(t - 1) as usize][sel.x_index];
            let f_star = f_stars[(t - 1) as usize];
            // The draw is consumed even when unused, keeping the stream
            // aligned across objective kinds.
            let z: f64 = rng.sample(StandardNormal);
            let y = if noisy { f_xt + sigma_n * z } else { f_xt };
            let step = state.update(y)?;
            let r_t = round_sig9(f_star - f_xt);
            cum += r_t;
            out.push(TraceRow {
                policy: label.clone(),
                seed,
                t,
                x_index: sel.x_index,
                y,
                f_xt,
                f_star,
                r_t,
                cum_regret: cum,
                reset: step.reset,
                psi: step.trigger.map(|tr| tr.psi),
                kappa: step.trigger.map(|tr| tr.kappa),
            });
        }
    }
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
fn first_reset<K: Kernel<f64>>(
    kernel: &K,
    candidates: &[K::Point],
    policy: &Policy<f64>,
    schedule: &BetaSchedule<f64>,
    noise: NoiseModel<f64>,
    sampler: &GridSampler<f64>,
    eps_schedule: &EpsilonSchedule<f64>,
    seed: u64,
    horizon: u64,
) -> Result<Option<u64>> {
    let mut obj = MarkovChainObjective::new(sampler.clone(), eps_schedule.clone(), seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(noise_stream(PolicyKind::EtGpUcb));
    let sigma_n = noise.sigma_n();
    let mut state = PolicyState::new(*policy, kernel, candidates, noise)?;
    for t in 1..=horizon {
        let sel = state.select(schedule.beta(t))?;
        let f_xt = obj.values()[sel.x_index];
        let z: f64 = rng.sample(StandardNormal);
        let y = f_xt + sigma_n * z;
        let step = state.update(y)?;
        if step.reset {
            return Ok(Some(t));
        }
        if t < horizon {
            obj.advance();
        }
    }
    Ok(None)
}

fn summarize(
    trace: &[TraceRow],
    pairs: &[(String, Policy<f64>, PolicyKind)],
    horizon: u64,
) -> Vec<SummaryRow> {
    pairs
        .iter()
        .map(|(label, _, _)| {
            let finals: Vec<f64> = trace
                .iter()
                .filter(|r| &r.policy == label && r.t == horizon)
                .map(|r| r.cum_regret)
                .collect();
            let n = finals.len() as f64;
            let mean = finals.iter().sum::<f64>() / n;
            let var = finals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            let resets =
                trace.iter().filter(|r| &r.policy == label && r.reset).count() as f64 / n;
            SummaryRow {
                policy: label.clone(),
                mean_rt: mean,
                std_rt: var.sqrt(),
                mean_resets: resets,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::super::bound::{bound_rhs, evaluate_bound, info_gain_largest_block, phi};
    use super::super::output::{fmt_sig9, write_trace_csv};
    use super::*;

    fn small_toml(policies: &str) -> String {
        format!(
            r#"
name = "small"
horizon = 12
seeds = [0, 1, 2]

[domain.grid]
bounds = [[0.0, 1.0], [0.0, 1.0]]
resolution = 3

[kernel.squared_exponential]
lengthscale = 0.2

[noise]
sigma_n_sq = 0.02

[objective.markov]
epsilon = 0.03

[beta.approximate]
c1 = 0.4
c2 = 4.0

{policies}
"#
        )
    }

    const ALL_POLICIES: &str = r#"
[[policies]]
kind = "gp_ucb"

[[policies]]
kind = "tv_gp_ucb"
epsilon = 0.03

[[policies]]
kind = "r_gp_ucb"
n_const = 4

[[policies]]
kind = "et_gp_ucb"
delta_b = 0.1
"#;

    fn small_config(policies: &str) -> ExperimentConfig {
        ExperimentConfig::from_toml_str(&small_toml(policies)).unwrap()
    }

    #[test]
    fn single_candidate_episodes_have_zero_regret() {
        let toml = r#"
name = "one-arm"
horizon = 3
seeds = [0, 7]

[domain.grid]
bounds = [[0.0, 1.0]]
resolution = 1

[kernel.squared_exponential]
lengthscale = 0.2

[noise]
sigma_n_sq = 0.02

[objective.markov]
epsilon = 0.1

[beta.approximate]
c1 = 0.4
c2 = 4.0

[[policies]]
kind = "et_gp_ucb"
delta_b = 0.1
"#;
        let cfg = ExperimentConfig::from_toml_str(toml).unwrap();
        let out = run_experiment(&cfg, 1).unwrap();
        assert_eq!(out.trace.len(), 6);
        for row in &out.trace {
            assert_eq!(row.x_index, 0);
            assert_eq!(row.r_t, 0.0);
            assert_eq!(row.cum_regret, 0.0);
            assert_eq!(row.f_xt, row.f_star);
        }
    }

    #[test]
    fn reruns_and_parallelism_do_not_change_output_bytes() {
        let cfg = small_config(ALL_POLICIES);
        let a = run_experiment(&cfg, 1).unwrap();
        let b = run_experiment(&cfg, 1).unwrap();
        let c = run_experiment(&cfg, 3).unwrap();
        assert_eq!(a.trace, b.trace);
        assert_eq!(a.trace, c.trace);
        assert_eq!(a.summary, c.summary);
        let mut buf_a = Vec::new();
        let mut buf_c = Vec::new();
        write_trace_csv(&mut buf_a, &a.trace).unwrap();
        write_trace_csv(&mut buf_c, &c.trace).unwrap();
        assert_eq!(buf_a, buf_c);
    }

    #[test]
    fn policy_subset_reproduces_the_full_runs_rows() {
        let full = run_experiment(&small_config(ALL_POLICIES), 2).unwrap();
        let only_et = run_experiment(
            &small_config("[[policies]]\nkind = \"et_gp_ucb\"\ndelta_b = 0.1\n"),
            2,
        )
        .unwrap();
        let et_rows: Vec<_> =
            full.trace.iter().filter(|r| r.policy == "et_gp_ucb").cloned().collect();
        assert_eq!(et_rows, only_et.trace);
    }

    #[test]
    fn trace_is_sorted_and_regret_accumulates_the_rounded_column() {
        let out = run_experiment(&small_config(ALL_POLICIES), 2).unwrap();
        let mut prev: Option<&TraceRow> = None;
        let mut cum = 0.0f64;
        for row in &out.trace {
            if let Some(p) = prev {
                let before = (p.policy.as_str(), p.seed, p.t);
                let after = (row.policy.as_str(), row.seed, row.t);
                assert!(before < after, "rows out of order: {before:?} vs {after:?}");
            }
            if prev.map(|p| (p.policy.as_str(), p.seed)) != Some((row.policy.as_str(), row.seed))
            {
                cum = 0.0;
            }
            assert_eq!(row.r_t, round_sig9(row.f_star - row.f_xt));
            assert_eq!(fmt_sig9(row.r_t), fmt_sig9(round_sig9(row.r_t)));
            assert!(row.f_star >= row.f_xt);
            cum += row.r_t;
            assert_eq!(row.cum_regret, cum);
            prev = Some(row);
        }
    }

    #[test]
    fn trigger_columns_belong_to_the_event_policy_and_resets_to_schedules() {
        let out = run_experiment(&small_config(ALL_POLICIES), 2).unwrap();
        for row in &out.trace {
            if row.policy == "et_gp_ucb" {
                assert!(row.psi.is_some() && row.kappa.is_some());
            } else {
                assert!(row.psi.is_none() && row.kappa.is_none());
                if row.policy == "r_gp_ucb" {
                    assert_eq!(row.reset, row.t % 4 == 0, "t = {}", row.t);
                } else {
                    assert!(!row.reset);
                }
            }
        }
    }

    #[test]
    fn summary_rows_aggregate_the_trace_in_config_order() {
        let cfg = small_config(ALL_POLICIES);
        let out = run_experiment(&cfg, 2).unwrap();
        let labels: Vec<&str> = out.summary.iter().map(|s| s.policy.as_str()).collect();
        assert_eq!(labels, ["gp_ucb", "tv_gp_ucb", "r_gp_ucb", "et_gp_ucb"]);
        for s in &out.summary {
            let finals: Vec<f64> = out
                .trace
                .iter()
                .filter(|r| r.policy == s.policy && r.t == 12)
                .map(|r| r.cum_regret)
                .collect();
            assert_eq!(finals.len(), 3);
            let mean = finals.iter().sum::<f64>() / 3.0;
            let var = finals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / 3.0;
            assert_eq!(s.mean_rt, mean);
            assert_eq!(s.std_rt, var.sqrt());
            let resets =
                out.trace.iter().filter(|r| r.policy == s.policy && r.reset).count() as f64
                    / 3.0;
            assert_eq!(s.mean_resets, resets);
        }
        assert_eq!(out.summary[2].mean_resets, 3.0);
    }

    #[test]
    fn replayed_observations_carry_no_added_noise() {
        let dir = tempfile::tempdir().unwrap();
        let data = dir.path().join("arms.csv");
        let mut text = String::from("arm_id,time_index,value\n");
        let mut v = 0.3f64;
        for t in 0..10i64 {
            for a in 0..3i64 {
                v = (v * 31.7 + 0.11 * a as f64).sin();
                text.push_str(&format!("{a},{t},{v}\n"));
            }
        }
        std::fs::write(&data, text).unwrap();
        let toml = format!(
            r#"
name = "replay"
horizon = 4
seeds = [0, 1]

[domain.arms]
count = 3

[kernel.empirical]

[noise]
sigma_n_sq = 0.01

[objective.arms_replay]
csv = "{}"
train_range = [0, 5]
test_range = [6, 9]

[beta.approximate]
c1 = 0.8
c2 = 0.4

[[policies]]
kind = "gp_ucb"

[[policies]]
kind = "et_gp_ucb"
delta_b = 0.1
"#,
            data.display()
        );
        let cfg = ExperimentConfig::from_toml_str(&toml).unwrap();
        let out = run_experiment(&cfg, 1).unwrap();
        assert_eq!(out.trace.len(), 2 * 2 * 4);
        for row in &out.trace {
            assert_eq!(row.y, row.f_xt, "replay must observe the recorded reading");
        }
        // Both seeds replay the same data, so all seed-dependence is gone.
        let s0: Vec<_> = out.trace.iter().filter(|r| r.seed == 0).collect();
        let s1: Vec<_> = out.trace.iter().filter(|r| r.seed == 1).collect();
        for (a, b) in s0.iter().zip(&s1) {
            assert_eq!(a.x_index, b.x_index);
            assert_eq!(a.y, b.y);
        }
        // Horizon cannot exceed the replayed split.
        let too_long = ExperimentConfig::from_toml_str(&toml.replace(
            "horizon = 4",
            "horizon = 5",
        ))
        .unwrap();
        assert!(run_experiment(&too_long, 1).is_err());
    }

    #[test]
    fn stopping_report_is_internally_consistent() {
        let cfg = small_config("[[policies]]\nkind = \"et_gp_ucb\"\ndelta_b = 0.5\n");
        let (runs, report) = stopping_times(&cfg, 24, 2, 0.2).unwrap();
        assert_eq!(runs.len(), 24);
        assert_eq!(report.n_runs, 24);
        assert_eq!(
            report.n_reset,
            runs.iter().filter(|r| r.tau.is_some()).count() as u64
        );
        for r in &runs {
            if let Some(t) = r.tau {
                assert!((1..=12).contains(&t));
            }
        }
        let mean = runs.iter().map(|r| r.tau.unwrap_or(12)).sum::<u64>() as f64 / 24.0;
        assert_eq!(report.mean_tau, Some(mean));
        assert_eq!(report.tau_bar, Some(mean / 0.2));
        let frac = report.frac_below_tau_bar.unwrap();
        assert!((0.0..=1.0).contains(&frac));
        assert_eq!(report.quantile_ok, frac >= 1.0 - 0.2 - 0.03);
        // Reruns are deterministic.
        let (runs2, _) = stopping_times(&cfg, 24, 1, 0.2).unwrap();
        assert_eq!(runs, runs2);
    }

    #[test]
    fn stopping_runs_match_the_event_rows_of_a_full_run() {
        let cfg = small_config(ALL_POLICIES);
        let out = run_experiment(&cfg, 2).unwrap();
        let (runs, _) = stopping_times(&cfg, 3, 2, 0.2).unwrap();
        for run in &runs {
            let first_reset_in_trace = out
                .trace
                .iter()
                .filter(|r| r.policy == "et_gp_ucb" && r.seed == run.seed && r.reset)
                .map(|r| r.t)
                .min();
            assert_eq!(run.tau, first_reset_in_trace, "seed {}", run.seed);
        }
    }

    #[test]
    fn stopping_preconditions_are_enforced() {
        let no_et = small_config("[[policies]]\nkind = \"gp_ucb\"\n");
        assert!(stopping_times(&no_et, 4, 1, 0.2).is_err());
        let sudden = small_toml("[[policies]]\nkind = \"et_gp_ucb\"\ndelta_b = 0.1\n")
            .replace("[objective.markov]\nepsilon = 0.03", "[objective.sudden_change]\nchange_step = 6");
        let cfg = ExperimentConfig::from_toml_str(&sudden).unwrap();
        assert!(stopping_times(&cfg, 4, 1, 0.2).is_err());
        let cfg = small_config(ALL_POLICIES);
        assert!(stopping_times(&cfg, 0, 1, 0.2).is_err());
        assert!(stopping_times(&cfg, 4, 1, 0.0).is_err());
    }

    #[test]
    fn bound_evaluation_composes_the_pieces_over_a_real_trace() {
        let toml = small_toml(ALL_POLICIES)
            + r#"
[bound]
delta = 0.1
a0 = 1.0
b0 = 1.0
a1 = 1.0
b1 = 1.0
tau_bar = 5.0
"#;
        let cfg = ExperimentConfig::from_toml_str(&toml).unwrap();
        let out = run_experiment(&cfg, 2).unwrap();
        let report = evaluate_bound(&cfg, &out.trace, "et_gp_ucb", 1, 1).unwrap();
        assert_eq!(report.rows.len(), 12);
        assert_eq!(report.policy, "et_gp_ucb");
        assert_eq!(report.seed, 1);
        assert_eq!(report.epsilon, 0.03);
        assert_eq!(report.tau_bar, 5.0);
        assert_eq!(report.tau_bar_source, "config");
        assert!(report.gamma > 0.0);
        assert!(report.block_len >= 1 && report.block_len <= 12);

        let schedule = cfg.beta_schedule().unwrap();
        let rows: Vec<_> = out
            .trace
            .iter()
            .filter(|r| r.policy == "et_gp_ucb" && r.seed == 1)
            .collect();
        let x: Vec<usize> = rows.iter().map(|r| r.x_index).collect();
        let resets: Vec<bool> = rows.iter().map(|r| r.reset).collect();
        let Space::Grid { kernel, points } = build_space(&cfg).unwrap() else {
            panic!("grid config")
        };
        let (gamma, _) =
            info_gain_largest_block(&kernel, &points, &x, &resets, true, 0.02).unwrap();
        assert_eq!(report.gamma, gamma);
        for row in &report.rows {
            let beta = schedule.beta(row.t);
            assert_eq!(row.beta, beta);
            assert_eq!(row.phi, phi(row.t, 0.03, 0.02, 5.0, 0.1, 1.0, 1.0, beta));
            assert_eq!(row.rhs, bound_rhs(row.t, beta, gamma, 5.0, 0.02, row.phi));
        }

        // Monte-Carlo fallback kicks in when tau_bar is not pinned.
        let mc_toml = toml.replace("tau_bar = 5.0", "mc_runs = 8");
        let mc_cfg = ExperimentConfig::from_toml_str(&mc_toml).unwrap();
        let mc_report = evaluate_bound(&mc_cfg, &out.trace, "et_gp_ucb", 1, 1).unwrap();
        assert_eq!(mc_report.tau_bar_source, "monte_carlo");
        let (_, stopping) = stopping_times(&mc_cfg, 8, 1, 0.1).unwrap();
        assert_eq!(Some(mc_report.tau_bar), stopping.tau_bar);

        // Unknown policies and missing sections fail loudly.
        assert!(evaluate_bound(&cfg, &out.trace, "nope", 1, 1).is_err());
        assert!(evaluate_bound(&cfg, &out.trace, "et_gp_ucb", 99, 1).is_err());
        let bare = small_config(ALL_POLICIES);
        assert!(evaluate_bound(&bare, &out.trace, "et_gp_ucb", 1, 1).is_err());
    }
}
