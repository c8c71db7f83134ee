//! Uplink and downlink link-budget math.
//!
//! Every device and the UAV see a scalar block-fading channel: the squared
//! gain `|g_i|^2` is drawn once per communication round and reused by the
//! uplink and the downlink of that round. All quantities are linear SI units
//! (watts, meters, hertz, bits, seconds).

use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest power-splitting ratio used in place of the open interval's endpoint.
pub const DELTA_MIN: f64 = 1e-3;
/// Largest power-splitting ratio.
pub const DELTA_MAX: f64 = 1.0 - DELTA_MIN;

/// Radio constants shared by every link of a scenario.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkParams {
    pub pathloss_exponent: f64,
    pub bandwidth_hz: f64,
    pub noise_power_ul_w: f64,
    pub noise_power_dl_w: f64,
    pub ptx_ul_w: f64,
    pub ptx_dl_w: f64,
}

impl LinkParams {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("pathloss_exponent", self.pathloss_exponent),
            ("bandwidth_hz", self.bandwidth_hz),
            ("noise_power_ul_w", self.noise_power_ul_w),
            ("noise_power_dl_w", self.noise_power_dl_w),
            ("ptx_ul_w", self.ptx_ul_w),
            ("ptx_dl_w", self.ptx_dl_w),
        ];
        for (name, value) in fields {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::Config(format!(
                    "link.{name} must be finite and > 0, got {value}"
                )));
            }
        }
        if !(2.0..=6.0).contains(&self.pathloss_exponent) {
            log::warn!(
                "path-loss exponent {} is outside the usual [2, 6] range",
                self.pathloss_exponent
            );
        }
        Ok(())
    }
}

/// Per-round fading gains and device-to-UAV distances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelRealization {
    pub gains_sq: Vec<f64>,
    pub distances_m: Vec<f64>,
}

impl ChannelRealization {
    pub fn new(gains_sq: Vec<f64>, distances_m: Vec<f64>) -> Result<Self> {
        if gains_sq.len() != distances_m.len() {
            return Err(Error::Argument(format!(
                "gains ({}) and distances ({}) differ in length",
                gains_sq.len(),
                distances_m.len()
            )));
        }
        if gains_sq.is_empty() {
            return Err(Error::Argument("realization needs at least one device".into()));
        }
        if let Some(g) = gains_sq.iter().find(|g| !(g.is_finite() && **g >= 0.0)) {
            return Err(Error::Domain(format!("squared gain must be finite and >= 0, got {g}")));
        }
        if let Some(d) = distances_m.iter().find(|d| !(d.is_finite() && **d > 0.0)) {
            return Err(Error::Domain(format!("distance must be finite and > 0, got {d}")));
        }
        Ok(Self {
            gains_sq,
            distances_m,
        })
    }

    /// Draws i.i.d. Rayleigh block fading (`|g|^2 ~ Exp(1)`) for the given distances.
    pub fn rayleigh<R: Rng + ?Sized>(distances_m: &[f64], rng: &mut R) -> Result<Self> {
        let gains = distances_m
            .iter()
            .map(|_| Exp1.sample(&mut *rng))
            .collect();
        Self::new(gains, distances_m.to_vec())
    }

    pub fn device_count(&self) -> usize {
        self.gains_sq.len()
    }
}

/// Link quantities for one device in one direction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkBudget {
    pub prx_w: f64,
    pub interference_w: f64,
    pub sinr: f64,
    pub rate_bps: f64,
    pub tx_time_s: f64,
}

/// Received power `ptx * d^-alpha * |g|^2`.
pub fn received_power(ptx_w: f64, distance_m: f64, alpha: f64, gain_sq: f64) -> Result<f64> {
    if distance_m.is_nan() || distance_m <= 0.0 {
        return Err(Error::Domain(format!(
            "distance must be > 0 (degenerate geometry), got {distance_m}"
        )));
    }
    Ok(ptx_w * distance_m.powf(-alpha) * gain_sq)
}

/// Sum of the received powers of every device except `excluded_device`.
///
/// The same expression serves both directions: for the downlink the other
/// devices' UAV links are scaled by the UAV transmit power.
pub fn interference_power(
    ptx_w: f64,
    realization: &ChannelRealization,
    alpha: f64,
    excluded_device: usize,
) -> Result<f64> {
    let m = realization.device_count();
    if excluded_device >= m {
        return Err(Error::Argument(format!(
            "device index {excluded_device} out of range for {m} devices"
        )));
    }
    let mut total = 0.0;
    for j in (0..m).filter(|&j| j != excluded_device) {
        total += received_power(
            ptx_w,
            realization.distances_m[j],
            alpha,
            realization.gains_sq[j],
        )?;
    }
    Ok(total)
}

pub fn sinr(prx_decode_w: f64, interference_w: f64, noise_w: f64) -> Result<f64> {
    if noise_w.is_nan() || noise_w <= 0.0 {
        return Err(Error::Domain(format!("noise power must be > 0, got {noise_w}")));
    }
    Ok(prx_decode_w / (interference_w + noise_w))
}

/// Shannon rate `B log2(1 + sinr)`.
pub fn achievable_rate(bandwidth_hz: f64, sinr: f64) -> f64 {
    bandwidth_hz * (1.0 + sinr).log2()
}

/// Transmission time; unbounded when nothing can be sent.
pub fn tx_time(payload_bits: f64, rate_bps: f64) -> f64 {
    if payload_bits == 0.0 {
        0.0
    } else if rate_bps == 0.0 {
        f64::INFINITY
    } else {
        payload_bits / rate_bps
    }
}

pub fn uplink_budget(
    params: &LinkParams,
    realization: &ChannelRealization,
    device: usize,
    payload_bits: f64,
) -> Result<LinkBudget> {
    let interference_w = interference_power(
        params.ptx_ul_w,
        realization,
        params.pathloss_exponent,
        device,
    )?;
    let prx_w = received_power(
        params.ptx_ul_w,
        realization.distances_m[device],
        params.pathloss_exponent,
        realization.gains_sq[device],
    )?;
    let sinr = sinr(prx_w, interference_w, params.noise_power_ul_w)?;
    let rate_bps = achievable_rate(params.bandwidth_hz, sinr);
    Ok(LinkBudget {
        prx_w,
        interference_w,
        sinr,
        rate_bps,
        tx_time_s: tx_time(payload_bits, rate_bps),
    })
}

/// Downlink budget for power-splitting ratio `delta`.
///
/// `prx_w` is the full received power; only `delta * prx_w` reaches the
/// decoder, the remainder feeds the harvester.
pub fn downlink_budget(
    params: &LinkParams,
    realization: &ChannelRealization,
    device: usize,
    delta: f64,
    payload_bits: f64,
) -> Result<LinkBudget> {
    check_delta(delta)?;
    let interference_w = interference_power(
        params.ptx_dl_w,
        realization,
        params.pathloss_exponent,
        device,
    )?;
    let prx_w = received_power(
        params.ptx_dl_w,
        realization.distances_m[device],
        params.pathloss_exponent,
        realization.gains_sq[device],
    )?;
    Ok(split_downlink(
        prx_w,
        interference_w,
        params.noise_power_dl_w,
        params.bandwidth_hz,
        delta,
        payload_bits,
    ))
}

/// Downlink budget from already computed received and interference powers.
/// Callers guarantee `noise_w > 0`.
pub(crate) fn split_downlink(
    prx_w: f64,
    interference_w: f64,
    noise_w: f64,
    bandwidth_hz: f64,
    delta: f64,
    payload_bits: f64,
) -> LinkBudget {
    let sinr = delta * prx_w / (interference_w + noise_w);
    let rate_bps = achievable_rate(bandwidth_hz, sinr);
    LinkBudget {
        prx_w,
        interference_w,
        sinr,
        rate_bps,
        tx_time_s: tx_time(payload_bits, rate_bps),
    }
}

pub fn check_delta(delta: f64) -> Result<()> {
    if !(DELTA_MIN..=DELTA_MAX).contains(&delta) {
        return Err(Error::Domain(format!(
            "power-splitting ratio must lie in [{DELTA_MIN}, {DELTA_MAX}], got {delta}"
        )));
    }
    Ok(())
}
