//! One trial: `rounds` communication rounds with fresh fading each round.

use std::time::{Duration, Instant};

use serde::Serialize;

use super::{resolve_deltas, Scenario};
use crate::channel::ChannelRealization;
use crate::energy::{Battery, BatteryAction, EnergyLedger};
use crate::error::{Error, Result};
use crate::fl::{self, ModelVector};
use crate::numeric::compensated_sum;
use crate::rng;
use crate::timing::{self, RoundDelay};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoundMetrics {
    /// 1-based round index.
    pub round: usize,
    pub delay: RoundDelay,
    pub realization: ChannelRealization,
    pub deltas: Vec<f64>,
    pub ledgers: Vec<EnergyLedger>,
    /// Devices whose round consumption is covered by the round's harvest.
    pub feasible_devices: usize,
    pub e_total_j_sum: f64,
    pub e_harvest_j_sum: f64,
    /// Battery levels after the round (battery mode only).
    pub battery_j: Option<Vec<f64>>,
    /// Devices that sat the round out for lack of charge (battery mode only).
    pub skipped: Vec<usize>,
    /// Global loss of the aggregated model over all training data.
    pub train_loss: f64,
    pub val_metric: f64,
    pub test_metric: f64,
}

impl RoundMetrics {
    /// Unbounded delay or at least one energy-infeasible device.
    pub fn is_outage(&self) -> bool {
        !self.delay.is_finite() || self.feasible_devices < self.ledgers.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialResult {
    pub trial: usize,
    pub seed: u64,
    pub rounds: Vec<RoundMetrics>,
    pub outage_count: usize,
    #[serde(skip)]
    pub runtime: Duration,
    /// Diagnostics when training diverged; `rounds` then holds the rounds
    /// completed before the failure.
    pub failure: Option<String>,
}

impl TrialResult {
    pub fn failed(&self) -> bool {
        self.failure.is_some()
    }
}

/// Runs one trial. Numeric failures in training end the trial and are
/// reported in [`TrialResult::failure`]; configuration errors are returned.
pub fn run_trial(scenario: &Scenario, trial: usize, seed: u64) -> Result<TrialResult> {
    let start = Instant::now();
    let cfg = &scenario.config;
    let system = &scenario.system;
    let policy = scenario.delta_policy();
    let mut batteries = if cfg.battery.enabled {
        Some(vec![Battery::new(cfg.battery.initial_j)?; cfg.device_count])
    } else {
        None
    };
    let mut global = scenario.init.clone();
    let mut rounds = Vec::with_capacity(cfg.rounds);
    let mut failure = None;

    for round in 1..=cfg.rounds {
        let realization = scenario.realization(seed, round)?;
        let deltas = resolve_deltas(system, &realization, policy)?;
        let physics = system.evaluate(&realization, &deltas)?;

        let mut skipped = Vec::new();
        let mut battery_j = None;
        let mut delay = physics.delay;
        if let Some(bats) = batteries.as_mut() {
            for (i, (b, l)) in bats.iter_mut().zip(&physics.ledgers).enumerate() {
                if b.apply(l) == BatteryAction::Skipped {
                    skipped.push(i);
                }
            }
            battery_j = Some(bats.iter().map(Battery::level_j).collect());
            if !skipped.is_empty() {
                // Skipped devices neither train nor upload.
                let mut t_local = delay.t_local_s.clone();
                let mut t_up = delay.t_uplink_s.clone();
                for &i in &skipped {
                    t_local[i] = 0.0;
                    t_up[i] = 0.0;
                }
                delay = timing::round_total(t_local, t_up, delay.t_downlink_s, delay.t_uav_s)?;
            }
        }
        let mask: Option<Vec<bool>> = batteries
            .as_ref()
            .map(|_| (0..cfg.device_count).map(|i| !skipped.contains(&i)).collect());

        let mut train_rng = rng::stream(seed, &[rng::TRAINING, round as u64]);
        let outcome = fl::run_round_masked(
            &global,
            &scenario.data.devices,
            &cfg.trainer,
            &mut train_rng,
            mask.as_deref(),
        );
        let metrics = outcome.and_then(|o| {
            let m = evaluate_model(scenario, &o.global)?;
            Ok((o.global, m))
        });
        let (next, (train_loss, val_metric, test_metric)) = match metrics {
            Ok(v) => v,
            Err(Error::Numeric(msg)) => {
                failure = Some(format!("round {round}: {msg}"));
                break;
            }
            Err(e) => return Err(e),
        };
        global = next;

        let ledgers = physics.ledgers;
        rounds.push(RoundMetrics {
            round,
            delay,
            realization,
            feasible_devices: ledgers.iter().filter(|l| l.feasible).count(),
            e_total_j_sum: compensated_sum(ledgers.iter().map(|l| l.e_total_j)),
            e_harvest_j_sum: compensated_sum(ledgers.iter().map(|l| l.e_harvest_j)),
            deltas,
            ledgers,
            battery_j,
            skipped,
            train_loss,
            val_metric,
            test_metric,
        });
    }

    let outage_count = rounds.iter().filter(|r| r.is_outage()).count();
    Ok(TrialResult {
        trial,
        seed,
        rounds,
        outage_count,
        runtime: start.elapsed(),
        failure,
    })
}

fn evaluate_model(scenario: &Scenario, w: &ModelVector) -> Result<(f64, f64, f64)> {
    let task = scenario.config.trainer.task;
    let train = fl::global_loss(w, &scenario.data.devices, task)?;
    if !train.is_finite() {
        return Err(Error::Numeric(format!("training loss is not finite: {train}")));
    }
    Ok((
        train,
        task.metric(w, &scenario.data.validation)?,
        task.metric(w, &scenario.data.test)?,
    ))
}
