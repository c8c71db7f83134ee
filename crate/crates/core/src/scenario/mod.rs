//! Scenario assembly, per-trial round pipeline and Monte Carlo aggregation.
//!
//! A scenario is built once from its configuration and master seed: device
//! positions, datasets, the initial global model and the UAV position are
//! fixed for every trial. Trials differ only in their fading draws and the
//! minibatch order of local training.

mod config;
mod monte_carlo;
mod trial;

pub use config::{
    dbm_to_w, parse_power, set_path, BatteryConfig, ComputeTemplate, DeltaConfig, DeltaMode,
    LinkConfig, Options, ScenarioConfig,
};
pub use monte_carlo::{
    accuracy_curve, delay_stats, run_monte_carlo, run_trials, sweep, trial_seed, CurvePoint,
    DelayStats, MonteCarloResult, SweepRow,
};
pub use trial::{run_trial, RoundMetrics, TrialResult};

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::channel::ChannelRealization;
use crate::error::{Error, Result};
use crate::fl::{self, FederatedData, ModelVector, RoundSelection, TrainerConfig};
use crate::geometry::Position;
use crate::numeric::CompensatedSum;
use crate::optimizer::{self, DeltaPolicy, PlacementSolution};
use crate::rng;
use crate::system::SystemModel;

#[derive(Debug, Clone)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub system: SystemModel,
    /// Ground positions of the devices.
    pub devices: Vec<Position>,
    pub uav: PlacementSolution,
    /// Device-to-UAV distances.
    pub distances_m: Vec<f64>,
    pub data: FederatedData,
    pub init: ModelVector,
}

/// Per-device ratios for one realization under `policy`.
pub fn resolve_deltas(
    system: &SystemModel,
    realization: &ChannelRealization,
    policy: DeltaPolicy,
) -> Result<Vec<f64>> {
    match policy {
        DeltaPolicy::Fixed(d) => Ok(vec![d; system.device_count()]),
        DeltaPolicy::Optimized => Ok(optimizer::optimize_delta_all(system, realization)?.deltas),
    }
}

pub fn system_model(config: &ScenarioConfig) -> Result<SystemModel> {
    let system = SystemModel {
        link: config.link_params(),
        compute: config.compute_profiles(),
        harvest: config.harvest,
        payload_bits: config.payload_bits(),
        uav: config.uav,
        uav_payload_bits: config.uav_payload_bits(),
        device_pays_downlink: config.options.device_pays_downlink,
    };
    system.validate()?;
    Ok(system)
}

/// Device positions drawn uniformly over the area.
pub fn place_devices<R: Rng + ?Sized>(config: &ScenarioConfig, rng: &mut R) -> Vec<Position> {
    let a = &config.area;
    (0..config.device_count)
        .map(|_| {
            let x = if a.x_max > a.x_min { rng.random_range(a.x_min..a.x_max) } else { a.x_min };
            let y = if a.y_max > a.y_min { rng.random_range(a.y_min..a.y_max) } else { a.y_min };
            Position::ground(x, y)
        })
        .collect()
}

/// Monte Carlo estimate of the mean round delay with the UAV at `uav`.
///
/// Every candidate position sees the same fading draws (sample `k` always
/// comes from the same stream), so differences between candidates are not
/// sampling noise.
pub fn expected_delay_at(
    system: &SystemModel,
    devices: &[Position],
    uav: &Position,
    policy: DeltaPolicy,
    samples: usize,
    eval_seed: u64,
) -> Result<f64> {
    let distances: Vec<f64> = devices.iter().map(|d| d.distance(uav)).collect();
    let mut total = CompensatedSum::new();
    for k in 0..samples {
        let realization =
            ChannelRealization::rayleigh(&distances, &mut rng::stream(eval_seed, &[k as u64]))?;
        let deltas = resolve_deltas(system, &realization, policy)?;
        total.add(system.evaluate(&realization, &deltas)?.delay.t_total_s);
    }
    Ok(total.total() / samples as f64)
}

fn initial_model(config: &ScenarioConfig) -> Result<ModelVector> {
    let mut init_rng = rng::stream(config.master_seed, &[rng::INIT]);
    let dim = config.data.dim;
    if config.init_std == 0.0 {
        return ModelVector::zeros(dim);
    }
    let normal = Normal::new(0.0, config.init_std).map_err(|e| Error::Config(e.to_string()))?;
    ModelVector::new((0..dim).map(|_| normal.sample(&mut init_rng)).collect())
}

impl Scenario {
    pub fn build(config: &ScenarioConfig) -> Result<Self> {
        config.validate()?;
        let system = system_model(config)?;
        let devices = place_devices(config, &mut rng::stream(config.master_seed, &[rng::PLACEMENT]));
        let data = fl::generate(
            &config.data,
            config.trainer.task,
            config.device_count,
            &mut rng::stream(config.master_seed, &[rng::DATA]),
        )?;
        let init = initial_model(config)?;

        let eval_seed = rng::derive_seed(config.master_seed, &[rng::PLACEMENT_EVAL]);
        let policy = config.delta_policy();
        let samples = config.placement.eval_samples;
        // The evaluator cannot return errors; inputs were validated above, so a
        // failure here only comes from a degenerate geometry and scores as +inf.
        let uav = optimizer::place_uav(&config.area, &config.placement, |p| {
            expected_delay_at(&system, &devices, p, policy, samples, eval_seed)
                .unwrap_or(f64::INFINITY)
        })?;
        let distances_m = devices.iter().map(|d| d.distance(&uav.position)).collect();
        Ok(Self {
            config: config.clone(),
            system,
            devices,
            uav,
            distances_m,
            data,
            init,
        })
    }

    pub fn trainer(&self) -> &TrainerConfig {
        &self.config.trainer
    }

    pub fn delta_policy(&self) -> DeltaPolicy {
        self.config.delta_policy()
    }

    /// Fading draw of round `round` (1-based) in the trial seeded by `trial_seed`.
    pub fn realization(&self, trial_seed: u64, round: usize) -> Result<ChannelRealization> {
        ChannelRealization::rayleigh(
            &self.distances_m,
            &mut rng::stream(trial_seed, &[rng::FADING, round as u64]),
        )
    }

    /// Cross-validates the number of rounds over `candidates`.
    pub fn select_rounds(&self, candidates: &[usize]) -> Result<RoundSelection> {
        fl::select_rounds(
            candidates,
            &self.init,
            &self.data.devices,
            &self.data.validation,
            &self.data.test,
            &self.config.trainer,
            &mut rng::stream(self.config.master_seed, &[rng::SELECTION]),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optimizer::PlacementMode;

    fn small() -> ScenarioConfig {
        let mut c = ScenarioConfig {
            device_count: 4,
            rounds: 3,
            monte_carlo_trials: 3,
            ..ScenarioConfig::default()
        };
        c.data.samples_per_device = 20;
        c.data.validation_samples = 50;
        c.data.test_samples = 50;
        c.placement.eval_samples = 10;
        c
    }

    #[test]
    fn build_is_deterministic() {
        let a = Scenario::build(&small()).unwrap();
        let b = Scenario::build(&small()).unwrap();
        assert_eq!(a.devices, b.devices);
        assert_eq!(a.init, b.init);
        assert_eq!(a.data, b.data);
        assert_eq!(a.uav, b.uav);
    }

    #[test]
    fn devices_inside_area_on_ground() {
        let s = Scenario::build(&small()).unwrap();
        assert_eq!(s.devices.len(), 4);
        assert!(s.devices.iter().all(|p| s.config.area.contains(p) && p.z == 0.0));
        assert!(s.distances_m.iter().all(|&d| d >= s.config.placement.altitude_m));
    }

    #[test]
    fn grid_placement_not_worse_than_centroid() {
        let mut c = small();
        c.placement.mode = PlacementMode::GridSearch;
        c.placement.grid_n = 5;
        let grid = Scenario::build(&c).unwrap();
        c.placement.mode = PlacementMode::Centroid;
        let centroid = Scenario::build(&c).unwrap();
        assert!(grid.uav.objective_s <= centroid.uav.objective_s);
    }

    #[test]
    fn zero_init_std_gives_zero_model() {
        let mut c = small();
        c.init_std = 0.0;
        let s = Scenario::build(&c).unwrap();
        assert!(s.init.as_slice().iter().all(|&v| v == 0.0));
    }
}
