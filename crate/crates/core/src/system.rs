//! One communication round's physics for a fixed geometry: link budgets,
//! energy ledgers and the round delay for given power-splitting ratios.

use serde::{Deserialize, Serialize};

use crate::channel::{self, ChannelRealization, LinkBudget, LinkParams};
use crate::energy::{ComputeProfile, EnergyLedger, HarvestModel, TxPowers};
use crate::error::{Error, Result};
use crate::optimizer::DeviceContext;
use crate::timing::{self, RoundDelay};

/// Aggregation compute of the UAV edge server.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UavCompute {
    pub cycles_per_bit: f64,
    pub cpu_hz: f64,
}

impl Default for UavCompute {
    fn default() -> Self {
        Self {
            cycles_per_bit: 10.0,
            cpu_hz: 1e10,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SystemModel {
    pub link: LinkParams,
    pub compute: Vec<ComputeProfile>,
    pub harvest: HarvestModel,
    /// Model payload per transfer (uplink and downlink).
    pub payload_bits: f64,
    pub uav: UavCompute,
    /// Payload the UAV processes when aggregating.
    pub uav_payload_bits: f64,
    pub device_pays_downlink: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundPhysics {
    pub deltas: Vec<f64>,
    pub uplink: Vec<LinkBudget>,
    pub downlink: Vec<LinkBudget>,
    pub ledgers: Vec<EnergyLedger>,
    pub delay: RoundDelay,
}

impl SystemModel {
    pub fn validate(&self) -> Result<()> {
        self.link.validate()?;
        self.harvest.validate()?;
        if self.compute.is_empty() {
            return Err(Error::Config("at least one device is required".into()));
        }
        for c in &self.compute {
            c.validate()?;
        }
        for (name, v) in [
            ("payload_bits", self.payload_bits),
            ("uav_payload_bits", self.uav_payload_bits),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Config(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        if !(self.uav.cycles_per_bit > 0.0 && self.uav.cpu_hz > 0.0) {
            return Err(Error::Config(format!(
                "uav compute constants must be > 0, got {:?}",
                self.uav
            )));
        }
        Ok(())
    }

    pub fn device_count(&self) -> usize {
        self.compute.len()
    }

    pub fn powers(&self) -> TxPowers {
        TxPowers {
            ul_w: self.link.ptx_ul_w,
            dl_w: self.link.ptx_dl_w,
        }
    }

    pub fn uav_time_s(&self) -> f64 {
        timing::uav_aggregation_time(self.uav.cycles_per_bit, self.uav_payload_bits, self.uav.cpu_hz)
    }

    pub fn local_times_s(&self) -> Vec<f64> {
        self.compute.iter().map(timing::local_train_time).collect()
    }

    fn check_realization(&self, realization: &ChannelRealization) -> Result<()> {
        if realization.device_count() != self.device_count() {
            return Err(Error::Argument(format!(
                "realization covers {} devices, system has {}",
                realization.device_count(),
                self.device_count()
            )));
        }
        Ok(())
    }

    /// Everything the per-device power-splitting solver needs.
    pub fn device_context(
        &self,
        realization: &ChannelRealization,
        device: usize,
    ) -> Result<DeviceContext> {
        self.check_realization(realization)?;
        let uplink = channel::uplink_budget(&self.link, realization, device, self.payload_bits)?;
        let downlink_prx_w = channel::received_power(
            self.link.ptx_dl_w,
            realization.distances_m[device],
            self.link.pathloss_exponent,
            realization.gains_sq[device],
        )?;
        let downlink_interference_w = channel::interference_power(
            self.link.ptx_dl_w,
            realization,
            self.link.pathloss_exponent,
            device,
        )?;
        Ok(DeviceContext {
            compute: self.compute[device],
            harvest: self.harvest,
            uplink,
            downlink_prx_w,
            downlink_interference_w,
            noise_dl_w: self.link.noise_power_dl_w,
            bandwidth_hz: self.link.bandwidth_hz,
            payload_dl_bits: self.payload_bits,
            powers: self.powers(),
            device_pays_downlink: self.device_pays_downlink,
        })
    }

    /// Evaluates a round at the given per-device ratios.
    pub fn evaluate(&self, realization: &ChannelRealization, deltas: &[f64]) -> Result<RoundPhysics> {
        self.check_realization(realization)?;
        if deltas.len() != self.device_count() {
            return Err(Error::Argument(format!(
                "{} power-splitting ratios for {} devices",
                deltas.len(),
                self.device_count()
            )));
        }
        let m = self.device_count();
        let mut uplink = Vec::with_capacity(m);
        let mut downlink = Vec::with_capacity(m);
        let mut ledgers = Vec::with_capacity(m);
        for (device, &delta) in deltas.iter().enumerate() {
            channel::check_delta(delta)?;
            let ctx = self.device_context(realization, device)?;
            let down = ctx.downlink(delta);
            ledgers.push(ctx.ledger(delta));
            uplink.push(ctx.uplink);
            downlink.push(down);
        }
        let delay = timing::round_total(
            self.local_times_s(),
            uplink.iter().map(|b| b.tx_time_s).collect(),
            downlink.iter().map(|b| b.tx_time_s).collect(),
            self.uav_time_s(),
        )?;
        Ok(RoundPhysics {
            deltas: deltas.to_vec(),
            uplink,
            downlink,
            ledgers,
            delay,
        })
    }
}
