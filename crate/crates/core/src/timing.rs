//! Round delay: local training, uplink, UAV aggregation and downlink.

use serde::{Deserialize, Serialize};

use crate::energy::ComputeProfile;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundDelay {
    pub t_local_s: Vec<f64>,
    pub t_uplink_s: Vec<f64>,
    pub t_downlink_s: Vec<f64>,
    pub t_uav_s: f64,
    pub t_total_s: f64,
}

impl RoundDelay {
    /// Slowest device's upload-plus-training time.
    pub fn uplink_local_max_s(&self) -> f64 {
        self.t_uplink_s
            .iter()
            .zip(&self.t_local_s)
            .map(|(u, l)| u + l)
            .fold(0.0, f64::max)
    }

    pub fn uplink_max_s(&self) -> f64 {
        self.t_uplink_s.iter().copied().fold(0.0, f64::max)
    }

    pub fn local_max_s(&self) -> f64 {
        self.t_local_s.iter().copied().fold(0.0, f64::max)
    }

    pub fn downlink_max_s(&self) -> f64 {
        self.t_downlink_s.iter().copied().fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.t_total_s.is_finite()
    }
}

pub fn local_train_time(profile: &ComputeProfile) -> f64 {
    profile.cycles_per_bit * profile.data_bits * f64::from(profile.local_iters) / profile.cpu_hz
}

pub fn uav_aggregation_time(cycles_per_bit_uav: f64, payload_bits: f64, cpu_hz_uav: f64) -> f64 {
    cycles_per_bit_uav * payload_bits / cpu_hz_uav
}

/// Composes the per-device components into the round delay
/// `max_i(T_u + T_L) + max_i(T_d) + T_uav`. Infinite components propagate.
pub fn round_total(
    t_local_s: Vec<f64>,
    t_uplink_s: Vec<f64>,
    t_downlink_s: Vec<f64>,
    t_uav_s: f64,
) -> Result<RoundDelay> {
    let m = t_local_s.len();
    if m == 0 {
        return Err(Error::Argument("round delay needs at least one device".into()));
    }
    if t_uplink_s.len() != m || t_downlink_s.len() != m {
        return Err(Error::Argument(format!(
            "delay vectors differ in length: local {m}, uplink {}, downlink {}",
            t_uplink_s.len(),
            t_downlink_s.len()
        )));
    }
    let all = t_local_s
        .iter()
        .chain(&t_uplink_s)
        .chain(&t_downlink_s)
        .chain(std::iter::once(&t_uav_s));
    for &t in all {
        if t.is_nan() || t < 0.0 {
            return Err(Error::Domain(format!("delay components must be >= 0, got {t}")));
        }
    }
    let mut delay = RoundDelay {
        t_local_s,
        t_uplink_s,
        t_downlink_s,
        t_uav_s,
        t_total_s: 0.0,
    };
    delay.t_total_s = delay.uplink_local_max_s() + delay.downlink_max_s() + t_uav_s;
    Ok(delay)
}
