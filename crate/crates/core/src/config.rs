//! TOML configuration: schema, strict parsing and cross-reference validation.
//!
//! See `docs/config.md` for the full schema. Unknown keys are rejected.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::choice::ChoicePolicy;
use crate::dist::RealDist;
use crate::error::{Result, SimError};
use crate::network::{
    validate_habit_weights, Carrier, CarrierId, CarrierKind, Client, ClientProfile, Network, PreferenceProfile, Zone,
    NO_HABIT,
};
use crate::orders::{GenerationParams, ZoneSampling};
use crate::scenario::Scenario;
use crate::tariff::{RateBook, RateCard};

pub const DEFAULT_MAX_WEIGHT_KG: f64 = 65.0;
pub const DEFAULT_SEED: u64 = 1;
/// Weight cap of worldwide carriers that do not set one.
pub const DEFAULT_WORLDWIDE_CAP_KG: f64 = 60.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerationSpec {
    #[serde(default = "default_weight")]
    pub weight: RealDist,
    #[serde(default = "default_basket")]
    pub basket_value: RealDist,
    #[serde(default = "default_threshold")]
    pub deviation_threshold_pct: f64,
    #[serde(default)]
    pub zone_sampling: ZoneSampling,
}

fn default_weight() -> RealDist {
    RealDist::Uniform { min: 1.0, max: 60.0 }
}

fn default_basket() -> RealDist {
    RealDist::LogNormal { mu: 5.0, sigma: 0.8 }
}

fn default_threshold() -> f64 {
    10.0
}

impl Default for GenerationSpec {
    fn default() -> Self {
        GenerationSpec {
            weight: default_weight(),
            basket_value: default_basket(),
            deviation_threshold_pct: default_threshold(),
            zone_sampling: ZoneSampling::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationSpec {
    /// Target mean quoted price per carrier.
    #[serde(default)]
    pub targets: BTreeMap<CarrierId, f64>,
    #[serde(default = "default_sample_size")]
    pub sample_size: usize,
    /// Zone of the calibration sample.
    #[serde(default = "default_calibration_zone")]
    pub zone: Zone,
    /// Seed of the calibration sample; the config seed when absent.
    #[serde(default)]
    pub seed: Option<u64>,
}

fn default_sample_size() -> usize {
    5_000
}

fn default_calibration_zone() -> Zone {
    Zone::FarRural
}

impl Default for CalibrationSpec {
    fn default() -> Self {
        CalibrationSpec {
            targets: BTreeMap::new(),
            sample_size: default_sample_size(),
            zone: default_calibration_zone(),
            seed: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoverageSpec {
    /// Upper edges of weight bands in kg, strictly increasing. Empty means one band.
    #[serde(default)]
    pub weight_bands: Vec<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    #[serde(default)]
    seed: Option<u64>,
    #[serde(default)]
    max_weight_kg: Option<f64>,
    #[serde(default)]
    generation: GenerationSpec,
    clients: ClientProfile,
    #[serde(default)]
    preferences: Option<PathBuf>,
    carriers: Vec<Carrier>,
    rate_cards: Vec<RateCard>,
    networks: Vec<Network>,
    #[serde(default)]
    calibration: CalibrationSpec,
    #[serde(default)]
    choice: ChoicePolicy,
    #[serde(default)]
    scenarios: Vec<Scenario>,
    #[serde(default)]
    coverage: CoverageSpec,
}

/// A validated configuration with every cross-reference resolved.
#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub seed: u64,
    pub max_weight_kg: f64,
    pub generation: GenerationSpec,
    pub clients: ClientProfile,
    /// Imported preference rows keyed by client id.
    pub preferences: BTreeMap<String, PreferenceProfile>,
    pub carriers: Vec<Carrier>,
    pub rate_cards: RateBook,
    pub networks: Vec<Network>,
    pub calibration: CalibrationSpec,
    pub choice: ChoicePolicy,
    pub scenarios: Vec<Scenario>,
    pub coverage: CoverageSpec,
}

pub fn load_config(path: &Path) -> Result<Config> {
    let text = std::fs::read_to_string(path).map_err(|e| SimError::io(path, e))?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    Config::from_toml(&text, base).map_err(|e| match e {
        SimError::Parse { message, .. } => SimError::Parse {
            path: path.to_path_buf(),
            message,
        },
        other => other,
    })
}

impl Config {
    /// Parses and validates TOML text; relative paths resolve against `base_dir`.
    pub fn from_toml(text: &str, base_dir: &Path) -> Result<Config> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| SimError::Parse {
            path: PathBuf::from("<config>"),
            message: e.to_string(),
        })?;
        let preferences = match &raw.preferences {
            Some(p) => {
                let path = base_dir.join(p);
                crate::network::read_preferences(&path)?
                    .into_iter()
                    .map(|p| (p.client_id.clone(), p))
                    .collect()
            }
            None => BTreeMap::new(),
        };
        let mut rate_cards = RateBook::new();
        for card in raw.rate_cards {
            if rate_cards.contains_key(&card.carrier_id) {
                return Err(SimError::invalid(format!("duplicate rate card for {}", card.carrier_id)));
            }
            rate_cards.insert(card.carrier_id.clone(), card);
        }
        let mut carriers = raw.carriers;
        for c in &mut carriers {
            if c.kind == CarrierKind::Worldwide && c.max_weight_kg.is_none() {
                c.max_weight_kg = Some(DEFAULT_WORLDWIDE_CAP_KG);
            }
        }
        let cfg = Config {
            seed: raw.seed.unwrap_or(DEFAULT_SEED),
            max_weight_kg: raw.max_weight_kg.unwrap_or(DEFAULT_MAX_WEIGHT_KG),
            generation: raw.generation,
            clients: raw.clients,
            preferences,
            carriers,
            rate_cards,
            networks: raw.networks,
            calibration: raw.calibration,
            choice: raw.choice,
            scenarios: raw.scenarios,
            coverage: raw.coverage,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn carrier(&self, id: &str) -> Option<&Carrier> {
        self.carriers.iter().find(|c| c.id == id)
    }

    pub fn network(&self, id: &str) -> Option<&Network> {
        self.networks.iter().find(|n| n.id == id)
    }

    pub fn scenario(&self, id: &str) -> Option<&Scenario> {
        self.scenarios.iter().find(|s| s.id == id)
    }

    /// Generation parameters with the given per-network order counts.
    pub fn generation_params(&self, order_counts: BTreeMap<String, u64>) -> GenerationParams {
        GenerationParams {
            order_counts,
            weight: self.generation.weight.clone(),
            basket_value: self.generation.basket_value.clone(),
            max_weight_kg: self.max_weight_kg,
            deviation_threshold_pct: self.generation.deviation_threshold_pct,
            zone_sampling: self.generation.zone_sampling,
            week: 0,
        }
    }

    /// Weekly order counts from the network table.
    pub fn weekly_counts(&self) -> BTreeMap<String, u64> {
        self.networks.iter().map(|n| (n.id.clone(), n.weekly_orders)).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(SimError::invalid(m));

        if !(self.max_weight_kg.is_finite() && self.max_weight_kg > 0.0) {
            return bad(format!("max_weight_kg {} must be > 0", self.max_weight_kg));
        }

        // carriers
        let mut carrier_ids = BTreeSet::new();
        for c in &self.carriers {
            if c.id.is_empty() || c.id == NO_HABIT {
                return bad(format!("carrier id {:?} is reserved or empty", c.id));
            }
            if !carrier_ids.insert(c.id.as_str()) {
                return bad(format!("duplicate carrier id {}", c.id));
            }
            if let Some(w) = c.max_weight_kg {
                if !(w.is_finite() && w > 0.0) {
                    return bad(format!("carrier {}: max_weight_kg must be > 0", c.id));
                }
            }
            if let Some(nets) = &c.networks {
                if let Some(n) = nets.iter().find(|n| self.network(n).is_none()) {
                    return bad(format!("carrier {}: unknown network {n}", c.id));
                }
            }
        }
        if self.carriers.is_empty() {
            return bad("no carriers configured".into());
        }

        // rate cards
        for c in &self.carriers {
            let card = self
                .rate_cards
                .get(&c.id)
                .ok_or_else(|| SimError::invalid(format!("carrier {} has no rate card", c.id)))?;
            card.check_kind(c.kind)?;
        }
        if let Some(id) = self.rate_cards.keys().find(|k| !carrier_ids.contains(k.as_str())) {
            return bad(format!("rate card for unknown carrier {id}"));
        }

        // networks
        let mut network_ids = BTreeSet::new();
        for n in &self.networks {
            if !network_ids.insert(n.id.as_str()) {
                return bad(format!("duplicate network id {}", n.id));
            }
        }
        for n in &self.networks {
            for s in &n.supplies {
                if s == &n.id {
                    return bad(format!("network {} supplies itself", n.id));
                }
                if !network_ids.contains(s.as_str()) {
                    return bad(format!("network {} supplies unknown network {s}", n.id));
                }
            }
            if !(n.far_rural_pct.is_finite() && (0.0..=100.0).contains(&n.far_rural_pct)) {
                return bad(format!("network {}: far_rural_pct {} outside [0, 100]", n.id, n.far_rural_pct));
            }
            if n.weekly_orders > 0 && n.total_clients() == 0 {
                return bad(format!("network {}: weekly_orders > 0 but no clients", n.id));
            }
            if n.far_rural_pct > 0.0 && n.rural_clients == 0 && n.total_clients() > 0 {
                return bad(format!("network {}: far_rural_pct > 0 but no rural clients", n.id));
            }
            if let Some(w) = &n.habit_weights {
                validate_habit_weights(w, &self.carriers, &format!("network {} habit_weights", n.id))?;
            }
        }

        self.clients.validate(&self.carriers)?;
        self.generation_params(BTreeMap::new()).validate()?;
        self.choice.validate()?;

        // preferences
        let client_ids: BTreeSet<String> = if self.preferences.is_empty() {
            BTreeSet::new()
        } else {
            self.networks
                .iter()
                .flat_map(|n| (0..n.total_clients()).map(|i| Client::id_for(&n.id, i)))
                .collect()
        };
        for p in self.preferences.values() {
            if !client_ids.contains(&p.client_id) {
                return bad(format!("preference for unknown client {}", p.client_id));
            }
            if let Some(h) = &p.habitual_carrier {
                if !carrier_ids.contains(h.as_str()) {
                    return bad(format!("preference for {}: unknown carrier {h}", p.client_id));
                }
            }
        }

        // calibration
        for (id, t) in &self.calibration.targets {
            if !carrier_ids.contains(id.as_str()) {
                return bad(format!("calibration target for unknown carrier {id}"));
            }
            if !(t.is_finite() && *t > 0.0) {
                return bad(format!("calibration target for {id} must be > 0"));
            }
        }
        if self.calibration.sample_size == 0 {
            return bad("calibration.sample_size must be > 0".into());
        }

        // coverage
        let bands = &self.coverage.weight_bands;
        if bands.iter().any(|b| !(b.is_finite() && *b > 0.0)) || bands.windows(2).any(|w| w[0] >= w[1]) {
            return bad("coverage.weight_bands must be positive and strictly increasing".into());
        }

        // scenarios
        let mut scenario_ids = BTreeSet::new();
        for s in &self.scenarios {
            if !scenario_ids.insert(s.id.as_str()) {
                return bad(format!("duplicate scenario id {}", s.id));
            }
            s.validate(self)?;
        }
        Ok(())
    }
}
