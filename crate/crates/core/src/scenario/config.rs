//! Scenario configuration (TOML) and dotted-path overrides.
//!
//! Every section is optional and falls back to the shipped defaults. Power
//! fields accept plain watts or strings with a unit suffix (`"-90dBm"`,
//! `"100mW"`, `"0.5W"`); they are stored and re-emitted in watts.

use serde::{Deserialize, Deserializer, Serialize};

use crate::channel::{self, LinkParams};
use crate::energy::{ComputeProfile, HarvestModel};
use crate::error::{Error, Result};
use crate::fl::{DataConfig, TrainerConfig};
use crate::geometry::AreaBounds;
use crate::optimizer::{DeltaPolicy, PlacementSearch};
use crate::system::UavCompute;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub master_seed: u64,
    pub device_count: usize,
    /// Communication rounds per trial.
    pub rounds: usize,
    /// Round budgets compared by cross-validation.
    pub round_candidates: Vec<usize>,
    pub monte_carlo_trials: usize,
    /// Standard deviation of the random initial global weights.
    pub init_std: f64,
    pub area: AreaBounds,
    pub placement: PlacementSearch,
    pub link: LinkConfig,
    pub compute: ComputeTemplate,
    /// Optional per-device compute constants; overrides `compute` when present.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub devices: Option<Vec<ComputeTemplate>>,
    pub uav: UavCompute,
    pub harvest: HarvestModel,
    pub trainer: TrainerConfig,
    pub data: DataConfig,
    pub delta: DeltaConfig,
    pub options: Options,
    pub battery: BatteryConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinkConfig {
    pub pathloss_exponent: f64,
    pub bandwidth_hz: f64,
    #[serde(deserialize_with = "power_w")]
    pub noise_power_ul_w: f64,
    #[serde(deserialize_with = "power_w")]
    pub noise_power_dl_w: f64,
    #[serde(deserialize_with = "power_w")]
    pub ptx_ul_w: f64,
    #[serde(deserialize_with = "power_w")]
    pub ptx_dl_w: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ComputeTemplate {
    pub kappa: f64,
    pub cycles_per_bit: f64,
    pub cpu_hz: f64,
    /// Local data size in bits; defaults to the generated dataset stored as 32-bit words.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub data_bits: Option<f64>,
    /// Must match `trainer.local_iters` when given.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub local_iters: Option<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeltaMode {
    Fixed,
    Optimized,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DeltaConfig {
    pub mode: DeltaMode,
    /// Ratio used by every device in `fixed` mode.
    pub value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Options {
    /// Count the UAV's downlink transmit energy against the device.
    pub device_pays_downlink: bool,
    /// UAV aggregation processes `M` payloads instead of one.
    pub uav_payload_scales_with_m: bool,
    /// Model payload per transfer; defaults to 32 bits per parameter.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub payload_bits: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BatteryConfig {
    pub enabled: bool,
    pub initial_j: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            master_seed: 2024,
            device_count: 10,
            rounds: 30,
            round_candidates: vec![5, 10, 15, 20, 25, 30],
            monte_carlo_trials: 200,
            init_std: 1.0,
            area: AreaBounds::default(),
            placement: PlacementSearch::default(),
            link: LinkConfig::default(),
            compute: ComputeTemplate::default(),
            devices: None,
            uav: UavCompute::default(),
            harvest: HarvestModel::default(),
            trainer: TrainerConfig::default(),
            data: DataConfig::default(),
            delta: DeltaConfig::default(),
            options: Options::default(),
            battery: BatteryConfig::default(),
        }
    }
}

impl Default for LinkConfig {
    fn default() -> Self {
        Self {
            pathloss_exponent: 3.5,
            bandwidth_hz: 1e6,
            noise_power_ul_w: dbm_to_w(-90.0),
            noise_power_dl_w: dbm_to_w(-90.0),
            ptx_ul_w: 0.1,
            ptx_dl_w: 1.0,
        }
    }
}

impl Default for ComputeTemplate {
    fn default() -> Self {
        Self {
            kappa: 1e-28,
            cycles_per_bit: 20.0,
            cpu_hz: 1e9,
            data_bits: None,
            local_iters: None,
        }
    }
}

impl Default for DeltaConfig {
    fn default() -> Self {
        Self {
            mode: DeltaMode::Fixed,
            value: 0.5,
        }
    }
}

impl Default for Options {
    fn default() -> Self {
        Self {
            device_pays_downlink: true,
            uav_payload_scales_with_m: false,
            payload_bits: None,
        }
    }
}

impl Default for BatteryConfig {
    fn default() -> Self {
        Self {
            enabled: false,
            initial_j: 0.01,
        }
    }
}

impl From<LinkConfig> for LinkParams {
    fn from(c: LinkConfig) -> Self {
        LinkParams {
            pathloss_exponent: c.pathloss_exponent,
            bandwidth_hz: c.bandwidth_hz,
            noise_power_ul_w: c.noise_power_ul_w,
            noise_power_dl_w: c.noise_power_dl_w,
            ptx_ul_w: c.ptx_ul_w,
            ptx_dl_w: c.ptx_dl_w,
        }
    }
}

impl ScenarioConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ScenarioConfig =
            toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml_value(&self) -> Result<toml::Value> {
        toml::Value::try_from(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_toml_value(value: toml::Value) -> Result<Self> {
        let cfg: ScenarioConfig = value
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Returns a copy with `path` (dotted, e.g. `link.ptx_dl_w`) set to `raw`.
    pub fn with_override(&self, path: &str, raw: &str) -> Result<Self> {
        let mut value = self.to_toml_value()?;
        set_path(&mut value, path, raw)?;
        Self::from_toml_value(value)
    }

    /// Applies `key=value` overrides in order.
    pub fn with_overrides<S: AsRef<str>>(&self, overrides: &[S]) -> Result<Self> {
        let mut value = self.to_toml_value()?;
        for o in overrides {
            let (path, raw) = o.as_ref().split_once('=').ok_or_else(|| {
                Error::Config(format!("override must look like path=value, got `{}`", o.as_ref()))
            })?;
            set_path(&mut value, path.trim(), raw.trim())?;
        }
        Self::from_toml_value(value)
    }

    pub fn link_params(&self) -> LinkParams {
        self.link.into()
    }

    pub fn delta_policy(&self) -> DeltaPolicy {
        match self.delta.mode {
            DeltaMode::Fixed => DeltaPolicy::Fixed(self.delta.value),
            DeltaMode::Optimized => DeltaPolicy::Optimized,
        }
    }

    /// Model payload per transfer.
    pub fn payload_bits(&self) -> f64 {
        self.options
            .payload_bits
            .unwrap_or((self.data.dim * 32) as f64)
    }

    pub fn uav_payload_bits(&self) -> f64 {
        if self.options.uav_payload_scales_with_m {
            self.payload_bits() * self.device_count as f64
        } else {
            self.payload_bits()
        }
    }

    /// Resolved per-device compute profiles.
    pub fn compute_profiles(&self) -> Vec<ComputeProfile> {
        let resolve = |t: &ComputeTemplate| ComputeProfile {
            kappa: t.kappa,
            cycles_per_bit: t.cycles_per_bit,
            data_bits: t.data_bits.unwrap_or_else(|| self.data.device_data_bits()),
            local_iters: self.trainer.local_iters,
            cpu_hz: t.cpu_hz,
        };
        match &self.devices {
            Some(list) => list.iter().map(resolve).collect(),
            None => vec![resolve(&self.compute); self.device_count],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.device_count == 0 {
            return Err(Error::Config("device_count must be >= 1".into()));
        }
        if self.monte_carlo_trials == 0 {
            return Err(Error::Config("monte_carlo_trials must be >= 1".into()));
        }
        if self.rounds == 0 {
            return Err(Error::Config("rounds must be >= 1".into()));
        }
        if self.master_seed > i64::MAX as u64 {
            return Err(Error::Config(format!(
                "master_seed must be <= {} (TOML integer range)",
                i64::MAX
            )));
        }
        if !(self.init_std.is_finite() && self.init_std >= 0.0) {
            return Err(Error::Config(format!("init_std must be >= 0, got {}", self.init_std)));
        }
        self.area.validate()?;
        self.placement.validate()?;
        self.link_params().validate()?;
        self.harvest.validate()?;
        self.trainer.validate()?;
        self.data.validate()?;
        if let Some(list) = &self.devices {
            if list.len() != self.device_count {
                return Err(Error::Config(format!(
                    "{} per-device compute entries for {} devices",
                    list.len(),
                    self.device_count
                )));
            }
        }
        let templates = self.devices.iter().flatten().chain(std::iter::once(&self.compute));
        for t in templates {
            if let Some(iters) = t.local_iters {
                if iters != self.trainer.local_iters {
                    return Err(Error::Config(format!(
                        "compute local_iters {iters} disagrees with trainer.local_iters {}",
                        self.trainer.local_iters
                    )));
                }
            }
        }
        for p in self.compute_profiles() {
            p.validate()?;
        }
        if self.delta.mode == DeltaMode::Fixed {
            channel::check_delta(self.delta.value).map_err(|e| Error::Config(e.to_string()))?;
        }
        if let Some(bits) = self.options.payload_bits {
            if !(bits.is_finite() && bits >= 0.0) {
                return Err(Error::Config(format!("options.payload_bits must be >= 0, got {bits}")));
            }
        }
        if self.battery.enabled && !(self.battery.initial_j.is_finite() && self.battery.initial_j >= 0.0) {
            return Err(Error::Config(format!(
                "battery.initial_j must be >= 0, got {}",
                self.battery.initial_j
            )));
        }
        if self.round_candidates.windows(2).any(|w| w[0] >= w[1])
            || self.round_candidates.first() == Some(&0)
        {
            return Err(Error::Config(format!(
                "round_candidates must be positive and strictly ascending, got {:?}",
                self.round_candidates
            )));
        }
        Ok(())
    }
}

pub fn dbm_to_w(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

/// Parses a power with an optional `dBm`, `mW` or `W` suffix into watts.
pub fn parse_power(text: &str) -> Result<f64> {
    let t = text.trim();
    let bad = || Error::Config(format!("cannot parse power `{text}`"));
    let number = |s: &str| s.trim().parse::<f64>().map_err(|_| bad());
    let lower = t.to_ascii_lowercase();
    if let Some(v) = lower.strip_suffix("dbm") {
        Ok(dbm_to_w(number(v)?))
    } else if let Some(v) = lower.strip_suffix("mw") {
        Ok(number(v)? * 1e-3)
    } else if let Some(v) = lower.strip_suffix('w') {
        number(v)
    } else {
        number(t)
    }
}

fn power_w<'de, D: Deserializer<'de>>(deserializer: D) -> std::result::Result<f64, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Number(f64),
        Text(String),
    }
    match Raw::deserialize(deserializer)? {
        Raw::Number(v) => Ok(v),
        Raw::Text(s) => parse_power(&s).map_err(serde::de::Error::custom),
    }
}

/// Parses an override value as a TOML literal, falling back to a bare string.
fn parse_literal(raw: &str) -> toml::Value {
    #[derive(Deserialize)]
    struct Holder {
        v: toml::Value,
    }
    match toml::from_str::<Holder>(&format!("v = {raw}")) {
        Ok(h) => h.v,
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

/// Sets a dotted path inside a TOML document. Intermediate tables must exist;
/// the leaf may be new (unknown keys are rejected when the document is
/// deserialized).
pub fn set_path(root: &mut toml::Value, path: &str, raw: &str) -> Result<()> {
    let keys: Vec<&str> = path.split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(Error::Config(format!("invalid override path `{path}`")));
    }
    let (leaf, parents) = keys.split_last().expect("split yields at least one key");
    let mut node = root;
    for key in parents {
        node = node
            .as_table_mut()
            .and_then(|t| t.get_mut(*key))
            .ok_or_else(|| Error::Config(format!("unknown config section `{key}` in `{path}`")))?;
    }
    let table = node
        .as_table_mut()
        .ok_or_else(|| Error::Config(format!("`{path}` does not name a table entry")))?;
    let mut value = parse_literal(raw);
    // integers written for float fields stay floats in the snapshot
    if let (Some(toml::Value::Float(_)), toml::Value::Integer(i)) = (table.get(*leaf), &value) {
        value = toml::Value::Float(*i as f64);
    }
    table.insert((*leaf).to_string(), value);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fl::BatchMode;

    #[test]
    fn defaults_validate_and_round_trip() {
        let cfg = ScenarioConfig::default();
        cfg.validate().unwrap();
        let text = cfg.to_toml_string().unwrap();
        assert_eq!(ScenarioConfig::from_toml_str(&text).unwrap(), cfg);
    }

    #[test]
    fn empty_file_means_defaults() {
        assert_eq!(ScenarioConfig::from_toml_str("").unwrap(), ScenarioConfig::default());
    }

    #[test]
    fn power_suffixes() {
        assert_eq!(parse_power("30dBm").unwrap(), 1.0);
        assert!((parse_power("-90 dBm").unwrap() - 1e-12).abs() < 1e-24);
        assert_eq!(parse_power("250mW").unwrap(), 0.25);
        assert_eq!(parse_power("2W").unwrap(), 2.0);
        assert_eq!(parse_power("0.5").unwrap(), 0.5);
        assert!(parse_power("loud").is_err());
    }

    #[test]
    fn dbm_strings_in_file() {
        let cfg = ScenarioConfig::from_toml_str("[link]\nptx_dl_w = \"40dBm\"\n").unwrap();
        assert!((cfg.link.ptx_dl_w - 10.0).abs() < 1e-12);
    }

    #[test]
    fn override_changes_one_field() {
        let base = ScenarioConfig::default();
        let cfg = base.with_override("link.ptx_dl_w", "5.0").unwrap();
        assert_eq!(cfg.link.ptx_dl_w, 5.0);
        assert_eq!(ScenarioConfig { link: base.link, ..cfg.clone() }, base);
        let cfg = base.with_override("link.ptx_dl_w", "30dBm").unwrap();
        assert_eq!(cfg.link.ptx_dl_w, 1.0);
        let cfg = base.with_override("link.ptx_dl_w", "3").unwrap();
        assert_eq!(cfg.link.ptx_dl_w, 3.0);
    }

    #[test]
    fn override_enums_and_optionals() {
        let base = ScenarioConfig::default();
        let cfg = base
            .with_overrides(&["delta.mode=optimized", "options.payload_bits=640", "trainer.batch.mode=full_batch"])
            .unwrap();
        assert_eq!(cfg.delta.mode, DeltaMode::Optimized);
        assert_eq!(cfg.payload_bits(), 640.0);
        assert_eq!(cfg.trainer.batch, BatchMode::FullBatch);
    }

    #[test]
    fn bad_overrides_are_config_errors() {
        let base = ScenarioConfig::default();
        assert!(matches!(base.with_override("link.nope", "1"), Err(Error::Config(_))));
        assert!(matches!(base.with_override("nosuch.key", "1"), Err(Error::Config(_))));
        assert!(base.with_overrides(&["link.ptx_dl_w"]).is_err());
        assert!(base.with_override("delta.value", "1.0").is_err());
        assert!(base.with_override("device_count", "0").is_err());
    }

    #[test]
    fn unknown_top_level_key_rejected() {
        assert!(ScenarioConfig::from_toml_str("devcie_count = 3\n").is_err());
    }

    #[test]
    fn local_iters_must_agree() {
        assert!(ScenarioConfig::from_toml_str("[compute]\nlocal_iters = 2\n").is_err());
        assert!(ScenarioConfig::from_toml_str("[compute]\nlocal_iters = 5\n").is_ok());
    }

    #[test]
    fn per_device_profiles() {
        let text = "device_count = 2\n[[devices]]\ncpu_hz = 2e9\n[[devices]]\ncpu_hz = 5e8\n";
        let cfg = ScenarioConfig::from_toml_str(text).unwrap();
        let p = cfg.compute_profiles();
        assert_eq!(p.len(), 2);
        assert_eq!(p[0].cpu_hz, 2e9);
        assert_eq!(p[1].cpu_hz, 5e8);
        assert_eq!(p[0].local_iters, cfg.trainer.local_iters);
        assert!(ScenarioConfig::from_toml_str("device_count = 3\n[[devices]]\ncpu_hz = 2e9\n").is_err());
    }

    #[test]
    fn payload_defaults() {
        let mut cfg = ScenarioConfig::default();
        assert_eq!(cfg.payload_bits(), 320.0);
        cfg.options.uav_payload_scales_with_m = true;
        assert_eq!(cfg.uav_payload_bits(), 3200.0);
    }
}
