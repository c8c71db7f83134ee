use std::fs;

use serde::Serialize;
use serde_json::{json, Map, Value};

use super::output::{write_csv, write_json, RunManifest};
use super::{CommonArgs, EXIT_NUMERIC, EXIT_OK};
use crate::error::{Error, Result};
use crate::geometry::Position;
use crate::optimizer::{self, PlacementMode, SolveMethod};
use crate::scenario::{
    expected_delay_at, run_monte_carlo, sweep, trial_seed, MonteCarloResult, Scenario,
    ScenarioConfig,
};
use crate::{channel, rng};

/// Collects outputs of one invocation and writes the manifest last.
struct Session {
    command: &'static str,
    command_args: Map<String, Value>,
    config: ScenarioConfig,
    out: std::path::PathBuf,
    started_at: String,
    outputs: Vec<String>,
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

impl Session {
    fn start(command: &'static str, args: &CommonArgs) -> Result<Self> {
        let config = args.resolve_config()?;
        fs::create_dir_all(&args.out)
            .map_err(|e| Error::Io(format!("{}: {e}", args.out.display())))?;
        log::info!("{command}: seed {}, output {}", config.master_seed, args.out.display());
        Ok(Self {
            command,
            command_args: Map::new(),
            config,
            out: args.out.clone(),
            started_at: now(),
            outputs: Vec::new(),
        })
    }

    fn arg(&mut self, key: &str, value: Value) {
        self.command_args.insert(key.into(), value);
    }

    fn csv<T: Serialize>(&mut self, name: &str, rows: &[T]) -> Result<()> {
        write_csv(&self.out.join(name), rows)?;
        self.outputs.push(name.into());
        Ok(())
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        write_json(&self.out.join(name), value)?;
        self.outputs.push(name.into());
        Ok(())
    }

    fn finish(self) -> Result<()> {
        let manifest = RunManifest {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: self.command.into(),
            command_args: self.command_args,
            master_seed: self.config.master_seed,
            config: self.config,
            started_at: self.started_at,
            finished_at: now(),
            outputs: self.outputs,
        };
        manifest.write(&self.out)?;
        Ok(())
    }
}

fn report_failures(mc: &MonteCarloResult) -> i32 {
    let failed = mc.failed_trials();
    for &t in &failed {
        eprintln!(
            "trial {t} failed: {}",
            mc.trials[t].failure.as_deref().unwrap_or("unknown")
        );
    }
    if failed.is_empty() {
        EXIT_OK
    } else {
        EXIT_NUMERIC
    }
}

#[derive(Serialize)]
struct RoundRow {
    trial: usize,
    round: usize,
    t_total_s: f64,
    t_uplink_max_s: f64,
    t_local_max_s: f64,
    t_downlink_max_s: f64,
    t_uav_s: f64,
    e_total_j_sum: f64,
    e_harvest_j_sum: f64,
    feasible_devices: usize,
    train_loss: f64,
    val_metric: f64,
    test_metric: f64,
}

fn round_rows(mc: &MonteCarloResult) -> Vec<RoundRow> {
    mc.trials
        .iter()
        .flat_map(|t| {
            t.rounds.iter().map(move |r| RoundRow {
                trial: t.trial,
                round: r.round,
                t_total_s: r.delay.t_total_s,
                t_uplink_max_s: r.delay.uplink_max_s(),
                t_local_max_s: r.delay.local_max_s(),
                t_downlink_max_s: r.delay.downlink_max_s(),
                t_uav_s: r.delay.t_uav_s,
                e_total_j_sum: r.e_total_j_sum,
                e_harvest_j_sum: r.e_harvest_j_sum,
                feasible_devices: r.feasible_devices,
                train_loss: r.train_loss,
                val_metric: r.val_metric,
                test_metric: r.test_metric,
            })
        })
        .collect()
}

/// Monte Carlo run: `rounds.csv`, `summary.json`, `manifest.json`.
pub fn cmd_run(args: &CommonArgs) -> Result<i32> {
    let mut session = Session::start("run", args)?;
    let scenario = Scenario::build(&session.config)?;
    let mc = run_monte_carlo(&scenario, args.workers)?;
    session.csv("rounds.csv", &round_rows(&mc))?;
    let summary = json!({
        "trials": mc.trials.len(),
        "rounds_per_trial": scenario.config.rounds,
        "metric": scenario.config.trainer.task.metric_name(),
        "delay": mc.delay,
        "outage_rounds": mc.trials.iter().map(|t| t.outage_count).sum::<usize>(),
        "failed_trials": mc.failed_trials(),
        "final_mean_test_metric": mc.accuracy.last().map(|p| p.mean_test_metric),
        "uav": scenario.uav,
    });
    session.json("summary.json", &summary)?;
    session.finish()?;
    println!(
        "{} trials: mean round delay {:.6e} s, outage rate {:.3}",
        mc.trials.len(),
        mc.delay.mean_t_total_s,
        mc.delay.outage_rate
    );
    Ok(report_failures(&mc))
}

#[derive(Serialize)]
struct SweepCsvRow<'a> {
    param_value: &'a str,
    mean_t_total_s: f64,
    std_t_total_s: f64,
    p5: f64,
    p95: f64,
    outage_rate: f64,
}

pub fn cmd_sweep(args: &CommonArgs, param: &str, values: &[String]) -> Result<i32> {
    if values.is_empty() {
        return Err(Error::Argument("--values needs at least one value".into()));
    }
    let mut session = Session::start("sweep", args)?;
    session.arg("param", json!(param));
    session.arg("values", json!(values));
    let rows = match sweep(&session.config, param, values, args.workers) {
        Ok(rows) => rows,
        Err(e @ Error::Numeric(_)) => {
            eprintln!("error: {e}");
            return Ok(EXIT_NUMERIC);
        }
        Err(e) => return Err(e),
    };
    let table: Vec<SweepCsvRow> = rows
        .iter()
        .map(|r| SweepCsvRow {
            param_value: &r.param_value,
            mean_t_total_s: r.stats.mean_t_total_s,
            std_t_total_s: r.stats.std_t_total_s,
            p5: r.stats.p5,
            p95: r.stats.p95,
            outage_rate: r.stats.outage_rate,
        })
        .collect();
    session.csv("sweep.csv", &table)?;
    session.finish()?;
    for r in &rows {
        println!("{param}={}: mean round delay {:.6e} s", r.param_value, r.stats.mean_t_total_s);
    }
    Ok(EXIT_OK)
}

pub fn cmd_accuracy_curve(args: &CommonArgs) -> Result<i32> {
    let mut session = Session::start("accuracy-curve", args)?;
    let scenario = Scenario::build(&session.config)?;
    let mc = run_monte_carlo(&scenario, args.workers)?;
    session.csv("accuracy.csv", &mc.accuracy)?;
    session.finish()?;
    if let (Some(first), Some(last)) = (mc.accuracy.first(), mc.accuracy.last()) {
        println!(
            "mean test {}: round {} {:.4}, round {} {:.4}",
            scenario.config.trainer.task.metric_name(),
            first.round,
            first.mean_test_metric,
            last.round,
            last.mean_test_metric
        );
    }
    Ok(report_failures(&mc))
}

pub fn cmd_select_rounds(args: &CommonArgs, candidates: Option<&[usize]>) -> Result<i32> {
    let mut session = Session::start("select-rounds", args)?;
    let candidates = candidates
        .map(<[usize]>::to_vec)
        .unwrap_or_else(|| session.config.round_candidates.clone());
    session.arg("candidates", json!(candidates));
    let scenario = Scenario::build(&session.config)?;
    let selection = scenario.select_rounds(&candidates)?;
    session.csv("select_rounds.csv", &selection.table)?;
    session.json("select_rounds.json", &selection)?;
    session.finish()?;
    println!("{}", selection.chosen);
    Ok(EXIT_OK)
}

#[derive(Serialize)]
struct DeltaRow {
    realization: usize,
    device: usize,
    delta: f64,
    feasible: bool,
    method: SolveMethod,
    t_downlink_s: f64,
    e_total_j: f64,
    e_harvest_j: f64,
}

pub fn cmd_optimize_delta(args: &CommonArgs, realizations: Option<usize>) -> Result<i32> {
    let mut session = Session::start("optimize-delta", args)?;
    let count = realizations.unwrap_or(session.config.monte_carlo_trials);
    if count == 0 {
        return Err(Error::Argument("--realizations must be >= 1".into()));
    }
    session.arg("realizations", json!(count));
    let scenario = Scenario::build(&session.config)?;
    let master = scenario.config.master_seed;
    let mut rows = Vec::new();
    let mut delays = Vec::with_capacity(count);
    for k in 0..count {
        // Same draw as round 1 of trial k in `run`.
        let realization = scenario.realization(trial_seed(master, k), 1)?;
        let sol = optimizer::optimize_delta_all(&scenario.system, &realization)?;
        let physics = scenario.system.evaluate(&realization, &sol.deltas)?;
        for i in 0..sol.deltas.len() {
            rows.push(DeltaRow {
                realization: k,
                device: i,
                delta: sol.deltas[i],
                feasible: sol.feasible[i],
                method: sol.methods[i],
                t_downlink_s: physics.downlink[i].tx_time_s,
                e_total_j: physics.ledgers[i].e_total_j,
                e_harvest_j: physics.ledgers[i].e_harvest_j,
            });
        }
        delays.push(sol.round_delay_s);
    }
    let feasible = rows.iter().filter(|r| r.feasible).count();
    let (mean_delay, _) = crate::numeric::mean_std(&delays);
    session.csv("deltas.csv", &rows)?;
    session.json(
        "optimize_delta.json",
        &json!({
            "realizations": count,
            "mean_round_delay_s": mean_delay,
            "feasible_fraction": feasible as f64 / rows.len() as f64,
            "grid_fallbacks": rows.iter().filter(|r| r.method == SolveMethod::Grid).count(),
            "delta_bounds": [channel::DELTA_MIN, channel::DELTA_MAX],
        }),
    )?;
    session.finish()?;
    println!(
        "{count} draws: mean round delay {mean_delay:.6e} s, {feasible}/{} device-draws feasible",
        rows.len()
    );
    Ok(EXIT_OK)
}

pub fn cmd_place_uav(args: &CommonArgs) -> Result<i32> {
    let mut session = Session::start("place-uav", args)?;
    let scenario = Scenario::build(&session.config)?;
    let cfg = &scenario.config;
    let (cx, cy) = cfg.area.center();
    let centroid = Position::new(cx, cy, cfg.placement.altitude_m);
    let centroid_objective = if cfg.placement.mode == PlacementMode::Centroid {
        scenario.uav.objective_s
    } else {
        expected_delay_at(
            &scenario.system,
            &scenario.devices,
            &centroid,
            scenario.delta_policy(),
            cfg.placement.eval_samples,
            rng::derive_seed(cfg.master_seed, &[rng::PLACEMENT_EVAL]),
        )?
    };
    let result = json!({
        "mode": cfg.placement.mode,
        "position": scenario.uav.position,
        "objective_s": scenario.uav.objective_s,
        "centroid": centroid,
        "centroid_objective_s": centroid_objective,
        "eval_samples": cfg.placement.eval_samples,
        "devices": scenario.devices,
        "distances_m": scenario.distances_m,
    });
    session.json("placement.json", &result)?;
    session.finish()?;
    let p = scenario.uav.position;
    println!(
        "uav at ({:.3}, {:.3}, {:.3}) m, expected round delay {:.6e} s",
        p.x, p.y, p.z, scenario.uav.objective_s
    );
    Ok(EXIT_OK)
}
