//! Per-device, per-round energy accounting.
//!
//! A device spends energy on local computation, on uploading its weights and
//! (following the accounting the model is built on) on the UAV's downlink
//! transmission to it. It harvests energy from the `(1 - delta)` share of the
//! downlink signal through a quadratic nonlinear harvester. A round is feasible
//! for a device when consumption does not exceed what it harvests in that round.

use serde::{Deserialize, Serialize};

use crate::channel::LinkBudget;
use crate::error::{Error, Result};
use crate::numeric::energy_product;

/// Local-training compute constants of one device.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComputeProfile {
    /// Effective switched capacitance.
    pub kappa: f64,
    pub cycles_per_bit: f64,
    /// Size of the local dataset in bits.
    pub data_bits: f64,
    /// Local iterations per round.
    pub local_iters: u32,
    pub cpu_hz: f64,
}

impl ComputeProfile {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("kappa", self.kappa),
            ("cycles_per_bit", self.cycles_per_bit),
            ("data_bits", self.data_bits),
            ("cpu_hz", self.cpu_hz),
        ];
        for (name, value) in fields {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::Config(format!(
                    "compute.{name} must be finite and > 0, got {value}"
                )));
            }
        }
        Ok(())
    }
}

/// Quadratic harvester `P_H = a1 x^2 + a2 x + a3`, clamped at zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HarvestModel {
    pub a1: f64,
    pub a2: f64,
    pub a3: f64,
}

impl HarvestModel {
    pub fn validate(&self) -> Result<()> {
        if ![self.a1, self.a2, self.a3].iter().all(|v| v.is_finite()) {
            return Err(Error::Config(format!(
                "harvest coefficients must be finite, got {self:?}"
            )));
        }
        Ok(())
    }

    /// True when the curve is nondecreasing in its input over `x >= 0`.
    pub fn is_monotone(&self) -> bool {
        self.a1 >= 0.0 && self.a2 >= 0.0
    }
}

/// Placeholder coefficients; no calibrated values are shipped.
impl Default for HarvestModel {
    fn default() -> Self {
        Self {
            a1: 0.1,
            a2: 0.5,
            a3: 0.0,
        }
    }
}

/// Uplink and downlink transmit powers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TxPowers {
    pub ul_w: f64,
    pub dl_w: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyLedger {
    pub e_compute_j: f64,
    pub e_uplink_j: f64,
    pub e_downlink_j: f64,
    pub e_total_j: f64,
    pub p_harvest_w: f64,
    pub e_harvest_j: f64,
    pub feasible: bool,
}

pub fn compute_energy(profile: &ComputeProfile) -> f64 {
    profile.kappa
        * profile.cycles_per_bit
        * profile.data_bits
        * f64::from(profile.local_iters)
        * profile.cpu_hz
        * profile.cpu_hz
}

pub fn uplink_energy(tx_time_s: f64, ptx_ul_w: f64) -> f64 {
    energy_product(tx_time_s, ptx_ul_w)
}

pub fn downlink_energy(tx_time_s: f64, ptx_dl_w: f64) -> f64 {
    energy_product(tx_time_s, ptx_dl_w)
}

pub fn harvest_power(model: &HarvestModel, harvest_input_w: f64) -> f64 {
    let x = harvest_input_w;
    (model.a1 * x * x + model.a2 * x + model.a3).max(0.0)
}

/// Fills the energy ledger of one device for one round.
///
/// `downlink.prx_w` must be the full received downlink power; the harvester
/// sees `(1 - delta)` of it. When `device_pays_downlink` is false the UAV's
/// transmit energy is left out of the device's consumption.
pub fn ledger(
    profile: &ComputeProfile,
    model: &HarvestModel,
    uplink: &LinkBudget,
    downlink: &LinkBudget,
    delta: f64,
    powers: TxPowers,
    device_pays_downlink: bool,
) -> EnergyLedger {
    let e_compute_j = compute_energy(profile);
    let e_uplink_j = uplink_energy(uplink.tx_time_s, powers.ul_w);
    let e_downlink_j = if device_pays_downlink {
        downlink_energy(downlink.tx_time_s, powers.dl_w)
    } else {
        0.0
    };
    let e_total_j = e_compute_j + e_uplink_j + e_downlink_j;
    let p_harvest_w = harvest_power(model, (1.0 - delta) * downlink.prx_w);
    let e_harvest_j = energy_product(downlink.tx_time_s, p_harvest_w);
    EnergyLedger {
        e_compute_j,
        e_uplink_j,
        e_downlink_j,
        e_total_j,
        p_harvest_w,
        e_harvest_j,
        feasible: e_total_j <= e_harvest_j,
    }
}

/// Carry-over battery used when per-round feasibility is replaced by a
/// cumulative budget.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Battery {
    level_j: f64,
}

/// What a device did with its battery in one round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BatteryAction {
    /// Trained and transmitted; consumption and harvest were both applied.
    Trained,
    /// Could not afford the round; only harvested.
    Skipped,
}

impl Battery {
    pub fn new(initial_j: f64) -> Result<Self> {
        if !(initial_j.is_finite() && initial_j >= 0.0) {
            return Err(Error::Config(format!(
                "initial battery charge must be finite and >= 0, got {initial_j}"
            )));
        }
        Ok(Self { level_j: initial_j })
    }

    pub fn level_j(&self) -> f64 {
        self.level_j
    }

    /// Applies one round. A device that would go negative skips training and
    /// only banks the harvest. An unbounded harvest (downlink never completes)
    /// is not usable energy and counts as zero.
    pub fn apply(&mut self, round: &EnergyLedger) -> BatteryAction {
        let harvest = if round.e_harvest_j.is_finite() {
            round.e_harvest_j
        } else {
            0.0
        };
        let after = self.level_j - round.e_total_j + harvest;
        if after.is_finite() && after >= 0.0 {
            self.level_j = after;
            BatteryAction::Trained
        } else {
            self.level_j += harvest;
            BatteryAction::Skipped
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn profile(iters: u32, f: f64) -> ComputeProfile {
        ComputeProfile {
            kappa: 1e-28,
            cycles_per_bit: 1e3,
            data_bits: 1e4,
            local_iters: iters,
            cpu_hz: f,
        }
    }

    fn budget(prx_w: f64, tx_time_s: f64) -> LinkBudget {
        LinkBudget {
            prx_w,
            interference_w: 0.0,
            sinr: 1.0,
            rate_bps: 1.0,
            tx_time_s,
        }
    }

    #[test]
    fn compute_energy_examples() {
        assert_eq!(compute_energy(&profile(0, 1e9)), 0.0);
        assert!((compute_energy(&profile(5, 1e9)) - 5e-3).abs() < 1e-15);
        let base = compute_energy(&profile(5, 1e9));
        let doubled = compute_energy(&profile(5, 2e9));
        assert!((doubled - 4.0 * base).abs() < 1e-15);
    }

    #[test]
    fn transmit_energy_examples() {
        assert_eq!(uplink_energy(1.0, 0.5), 0.5);
        assert_eq!(uplink_energy(0.0, 2.0), 0.0);
        assert_eq!(uplink_energy(2.0, 1.0), 2.0);
        assert_eq!(downlink_energy(1.0, 0.5), 0.5);
        assert_eq!(downlink_energy(0.0, 2.0), 0.0);
        assert_eq!(downlink_energy(2.0, 1.0), 2.0);
    }

    #[test]
    fn harvest_examples() {
        let m = HarvestModel::default();
        assert!((harvest_power(&m, 0.2) - 0.104).abs() < 1e-15);
        assert_eq!(harvest_power(&m, 0.0), 0.0);
        let offset = HarvestModel {
            a1: 0.0,
            a2: 0.0,
            a3: -0.01,
        };
        assert_eq!(harvest_power(&offset, 0.0), 0.0);
    }

    #[test]
    fn ledger_sums_and_flags() {
        let p = profile(5, 1e9);
        let model = HarvestModel {
            a1: 0.0,
            a2: 10.0,
            a3: 0.0,
        };
        let up = budget(1.0, 0.5);
        let down = budget(4.0, 2.0);
        let powers = TxPowers { ul_w: 0.2, dl_w: 1.0 };
        let l = ledger(&p, &model, &up, &down, 0.5, powers, true);
        assert_eq!(l.e_total_j, l.e_compute_j + l.e_uplink_j + l.e_downlink_j);
        assert_eq!(l.e_uplink_j, 0.1);
        assert_eq!(l.e_downlink_j, 2.0);
        assert_eq!(l.p_harvest_w, 20.0);
        assert_eq!(l.e_harvest_j, 40.0);
        assert!(l.feasible);

        let l = ledger(&p, &HarvestModel { a1: 0.0, a2: 0.0, a3: 0.0 }, &up, &down, 0.5, powers, true);
        assert!(!l.feasible);
        assert_eq!(l.e_harvest_j, 0.0);
    }

    #[test]
    fn downlink_energy_toggle() {
        let p = profile(1, 1e9);
        let m = HarvestModel::default();
        let up = budget(1.0, 1.0);
        let down = budget(1.0, 3.0);
        let powers = TxPowers { ul_w: 1.0, dl_w: 2.0 };
        let paid = ledger(&p, &m, &up, &down, 0.5, powers, true);
        let free = ledger(&p, &m, &up, &down, 0.5, powers, false);
        assert_eq!(paid.e_downlink_j, 6.0);
        assert_eq!(free.e_downlink_j, 0.0);
        assert_eq!(paid.e_total_j - free.e_total_j, 6.0);
    }

    #[test]
    fn unreachable_device_harvests_nothing_at_zero_power() {
        let l = ledger(
            &profile(1, 1e9),
            &HarvestModel::default(),
            &budget(0.0, f64::INFINITY),
            &budget(0.0, f64::INFINITY),
            0.5,
            TxPowers { ul_w: 1.0, dl_w: 1.0 },
            true,
        );
        assert_eq!(l.e_harvest_j, 0.0);
        assert!(l.e_total_j.is_infinite());
        assert!(!l.feasible);
    }

    #[test]
    fn battery_never_goes_negative() {
        let mut b = Battery::new(1.0).unwrap();
        let expensive = EnergyLedger {
            e_compute_j: 3.0,
            e_uplink_j: 0.0,
            e_downlink_j: 0.0,
            e_total_j: 3.0,
            p_harvest_w: 0.0,
            e_harvest_j: 0.5,
            feasible: false,
        };
        assert_eq!(b.apply(&expensive), BatteryAction::Skipped);
        assert_eq!(b.level_j(), 1.5);
        let cheap = EnergyLedger {
            e_total_j: 1.0,
            e_compute_j: 1.0,
            ..expensive
        };
        assert_eq!(b.apply(&cheap), BatteryAction::Trained);
        assert_eq!(b.level_j(), 1.0);
        assert!(Battery::new(-1.0).is_err());
    }

    proptest! {
        #[test]
        fn harvest_monotone_for_nonnegative_curvature(
            a1 in 0.0f64..10.0, a2 in 0.0f64..10.0, a3 in -1.0f64..1.0,
            x in 0.0f64..10.0, dx in 0.0f64..10.0,
        ) {
            let m = HarvestModel { a1, a2, a3 };
            prop_assert!(harvest_power(&m, x + dx) >= harvest_power(&m, x));
            prop_assert!(harvest_power(&m, x) >= 0.0);
        }

        #[test]
        fn ledger_identity(
            t_up in 0.0f64..10.0, t_down in 0.0f64..10.0, prx in 0.0f64..1.0,
            delta in 1e-3f64..0.999, iters in 0u32..20,
        ) {
            let l = ledger(
                &profile(iters, 1e9),
                &HarvestModel::default(),
                &budget(1.0, t_up),
                &budget(prx, t_down),
                delta,
                TxPowers { ul_w: 0.1, dl_w: 1.0 },
                true,
            );
            prop_assert_eq!(l.e_total_j, l.e_compute_j + l.e_uplink_j + l.e_downlink_j);
            prop_assert_eq!(l.feasible, l.e_total_j <= l.e_harvest_j);
            prop_assert!(l.e_harvest_j >= 0.0);
        }
    }
}
