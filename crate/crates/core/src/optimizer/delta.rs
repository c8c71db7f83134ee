use serde::{Deserialize, Serialize};

use crate::channel::{self, ChannelRealization, LinkBudget, DELTA_MAX, DELTA_MIN};
use crate::energy::{self, ComputeProfile, EnergyLedger, HarvestModel, TxPowers};
use crate::error::Result;
use crate::system::SystemModel;
use crate::timing::RoundDelay;

/// Bisection stops once the bracket is this narrow.
pub const BISECTION_TOL: f64 = 1e-6;
pub const BISECTION_MAX_ITERS: usize = 60;
/// Step of the fallback scan used when feasibility is not monotone.
pub const GRID_STEP: f64 = 1e-3;
/// Probe step of the monotonicity check for non-monotone harvest curves.
const PROBE_STEP: f64 = 1e-2;

/// Inputs of one device's ratio choice at one fading realization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeviceContext {
    pub compute: ComputeProfile,
    pub harvest: HarvestModel,
    /// Uplink budget; independent of the ratio.
    pub uplink: LinkBudget,
    /// Full received downlink power before splitting.
    pub downlink_prx_w: f64,
    pub downlink_interference_w: f64,
    pub noise_dl_w: f64,
    pub bandwidth_hz: f64,
    pub payload_dl_bits: f64,
    pub powers: TxPowers,
    pub device_pays_downlink: bool,
}

impl DeviceContext {
    pub fn downlink(&self, delta: f64) -> LinkBudget {
        channel::split_downlink(
            self.downlink_prx_w,
            self.downlink_interference_w,
            self.noise_dl_w,
            self.bandwidth_hz,
            delta,
            self.payload_dl_bits,
        )
    }

    pub fn ledger(&self, delta: f64) -> EnergyLedger {
        energy::ledger(
            &self.compute,
            &self.harvest,
            &self.uplink,
            &self.downlink(delta),
            delta,
            self.powers,
            self.device_pays_downlink,
        )
    }

    pub fn is_feasible(&self, delta: f64) -> bool {
        self.ledger(delta).feasible
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveMethod {
    Bisection,
    Grid,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeltaChoice {
    pub delta: f64,
    pub feasible: bool,
    pub method: SolveMethod,
}

/// How a round's ratios are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum DeltaPolicy {
    Fixed(f64),
    Optimized,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeltaSolution {
    pub deltas: Vec<f64>,
    pub feasible: Vec<bool>,
    pub methods: Vec<SolveMethod>,
    pub round_delay_s: f64,
    pub delay: RoundDelay,
}

impl DeltaSolution {
    /// `Grid` when any device needed the fallback scan.
    pub fn method(&self) -> SolveMethod {
        if self.methods.contains(&SolveMethod::Grid) {
            SolveMethod::Grid
        } else {
            SolveMethod::Bisection
        }
    }
}

/// Feasibility as a function of the ratio is a prefix of the interval when
/// the harvest curve is nondecreasing; otherwise it is probed on a coarse grid.
fn feasibility_is_monotone(ctx: &DeviceContext) -> bool {
    if ctx.harvest.is_monotone() {
        return true;
    }
    let steps = ((DELTA_MAX - DELTA_MIN) / PROBE_STEP).round() as usize;
    let mut seen_infeasible = false;
    for k in 0..=steps {
        let delta = (DELTA_MIN + k as f64 * PROBE_STEP).min(DELTA_MAX);
        let ok = ctx.is_feasible(delta);
        if ok && seen_infeasible {
            return false;
        }
        seen_infeasible |= !ok;
    }
    true
}

fn bisect(ctx: &DeviceContext) -> DeltaChoice {
    let choice = |delta, feasible| DeltaChoice {
        delta,
        feasible,
        method: SolveMethod::Bisection,
    };
    if ctx.is_feasible(DELTA_MAX) {
        return choice(DELTA_MAX, true);
    }
    if !ctx.is_feasible(DELTA_MIN) {
        return choice(DELTA_MIN, false);
    }
    let (mut lo, mut hi) = (DELTA_MIN, DELTA_MAX);
    for _ in 0..BISECTION_MAX_ITERS {
        if hi - lo <= BISECTION_TOL {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if ctx.is_feasible(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    choice(lo, true)
}

fn grid_scan(ctx: &DeviceContext) -> DeltaChoice {
    let steps = ((DELTA_MAX - DELTA_MIN) / GRID_STEP).round() as usize;
    let mut best: Option<(f64, f64)> = None;
    for k in 0..=steps {
        let delta = (DELTA_MIN + k as f64 * GRID_STEP).min(DELTA_MAX);
        if !ctx.is_feasible(delta) {
            continue;
        }
        let t = ctx.downlink(delta).tx_time_s;
        if best.is_none_or(|(_, bt)| t <= bt) {
            best = Some((delta, t));
        }
    }
    match best {
        Some((delta, _)) => DeltaChoice {
            delta,
            feasible: true,
            method: SolveMethod::Grid,
        },
        None => DeltaChoice {
            delta: DELTA_MIN,
            feasible: false,
            method: SolveMethod::Grid,
        },
    }
}

/// Largest energy-feasible ratio for one device, or `(DELTA_MIN, false)` when
/// no ratio is feasible (the maximum-harvest fallback).
pub fn optimize_delta_device(ctx: &DeviceContext) -> DeltaChoice {
    if feasibility_is_monotone(ctx) {
        bisect(ctx)
    } else {
        grid_scan(ctx)
    }
}

/// Solves every device independently and assembles the round delay.
pub fn optimize_delta_all(
    system: &SystemModel,
    realization: &ChannelRealization,
) -> Result<DeltaSolution> {
    let choices = (0..system.device_count())
        .map(|i| system.device_context(realization, i).map(|ctx| optimize_delta_device(&ctx)))
        .collect::<Result<Vec<_>>>()?;
    let deltas: Vec<f64> = choices.iter().map(|c| c.delta).collect();
    let physics = system.evaluate(realization, &deltas)?;
    Ok(DeltaSolution {
        deltas,
        feasible: choices.iter().map(|c| c.feasible).collect(),
        methods: choices.iter().map(|c| c.method).collect(),
        round_delay_s: physics.delay.t_total_s,
        delay: physics.delay,
    })
}
