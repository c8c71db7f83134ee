//! Independent trials on a worker pool, and the statistics built from them.

use rayon::prelude::*;
use serde::Serialize;

use super::{run_trial, Scenario, ScenarioConfig, TrialResult};
use crate::error::{Error, Result};
use crate::numeric::{mean_std, quantile_sorted};
use crate::rng;

/// Delay statistics over all finite rounds of all trials.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DelayStats {
    pub mean_t_total_s: f64,
    pub std_t_total_s: f64,
    pub p5: f64,
    pub p50: f64,
    pub p95: f64,
    /// Fraction of rounds that were outages.
    pub outage_rate: f64,
    pub rounds: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CurvePoint {
    pub round: usize,
    pub mean_test_metric: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonteCarloResult {
    pub trials: Vec<TrialResult>,
    pub delay: DelayStats,
    pub accuracy: Vec<CurvePoint>,
}

impl MonteCarloResult {
    pub fn failed_trials(&self) -> Vec<usize> {
        self.trials.iter().filter(|t| t.failed()).map(|t| t.trial).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub param_value: String,
    pub stats: DelayStats,
}

/// Seed of trial `t`; independent of how many trials run.
pub fn trial_seed(master_seed: u64, trial: usize) -> u64 {
    rng::derive_seed(master_seed, &[rng::TRIAL, trial as u64])
}

/// Runs trials `0..count` on `workers` threads (all cores when `None`).
/// Results are ordered by trial index whatever the scheduling.
pub fn run_trials(scenario: &Scenario, count: usize, workers: Option<usize>) -> Result<Vec<TrialResult>> {
    let master = scenario.config.master_seed;
    let job = || {
        (0..count)
            .into_par_iter()
            .map(|t| run_trial(scenario, t, trial_seed(master, t)))
            .collect::<Result<Vec<_>>>()
    };
    match workers {
        Some(0) => Err(Error::Argument("workers must be >= 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Argument(format!("cannot start worker pool: {e}")))?
            .install(job),
        None => job(),
    }
}

pub fn delay_stats(trials: &[TrialResult]) -> DelayStats {
    let all: Vec<_> = trials.iter().flat_map(|t| &t.rounds).collect();
    let mut finite: Vec<f64> = all
        .iter()
        .map(|r| r.delay.t_total_s)
        .filter(|v| v.is_finite())
        .collect();
    finite.sort_by(f64::total_cmp);
    let (mean, std) = mean_std(&finite);
    let q = |p| {
        if finite.is_empty() {
            f64::NAN
        } else {
            quantile_sorted(&finite, p)
        }
    };
    let outages = all.iter().filter(|r| r.is_outage()).count();
    DelayStats {
        mean_t_total_s: mean,
        std_t_total_s: std,
        p5: q(0.05),
        p50: q(0.5),
        p95: q(0.95),
        outage_rate: if all.is_empty() { f64::NAN } else { outages as f64 / all.len() as f64 },
        rounds: all.len(),
    }
}

/// Mean and standard deviation of the test metric per round, over the trials
/// that reached that round.
pub fn accuracy_curve(trials: &[TrialResult]) -> Vec<CurvePoint> {
    let max_rounds = trials.iter().map(|t| t.rounds.len()).max().unwrap_or(0);
    (0..max_rounds)
        .map(|i| {
            let values: Vec<f64> = trials
                .iter()
                .filter_map(|t| t.rounds.get(i).map(|r| r.test_metric))
                .collect();
            let (mean, std) = mean_std(&values);
            CurvePoint {
                round: i + 1,
                mean_test_metric: mean,
                std,
            }
        })
        .collect()
}

pub fn run_monte_carlo(scenario: &Scenario, workers: Option<usize>) -> Result<MonteCarloResult> {
    let trials = run_trials(scenario, scenario.config.monte_carlo_trials, workers)?;
    Ok(MonteCarloResult {
        delay: delay_stats(&trials),
        accuracy: accuracy_curve(&trials),
        trials,
    })
}

/// Re-runs the Monte Carlo experiment with `path` set to each value. The
/// master seed is shared, so every point sees the same devices, data and
/// fading draws wherever the parameter leaves them unchanged.
pub fn sweep(
    config: &ScenarioConfig,
    path: &str,
    values: &[String],
    workers: Option<usize>,
) -> Result<Vec<SweepRow>> {
    values
        .iter()
        .map(|v| {
            let cfg = config.with_override(path, v)?;
            let scenario = Scenario::build(&cfg)?;
            let mc = run_monte_carlo(&scenario, workers)?;
            if let Some(&t) = mc.failed_trials().first() {
                return Err(Error::Numeric(format!(
                    "{path}={v}: trial {t} failed: {}",
                    mc.trials[t].failure.as_deref().unwrap_or("")
                )));
            }
            Ok(SweepRow {
                param_value: v.clone(),
                stats: mc.delay,
            })
        })
        .collect()
}
