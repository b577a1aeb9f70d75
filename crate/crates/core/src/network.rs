//! Network topology, carriers and the synthetic client population.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dist::{DaysDist, RealDist};
use crate::error::{Result, SimError};

pub type CarrierId = String;
pub type NetworkId = String;

/// Reserved habit-weight key for clients without a habitual carrier.
pub const NO_HABIT: &str = "none";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Zone {
    Urban,
    Rural,
    FarRural,
}

impl Zone {
    pub const ALL: [Zone; 3] = [Zone::Urban, Zone::Rural, Zone::FarRural];

    pub fn as_str(self) -> &'static str {
        match self {
            Zone::Urban => "urban",
            Zone::Rural => "rural",
            Zone::FarRural => "far_rural",
        }
    }

    pub fn class(self) -> ZoneClass {
        match self {
            Zone::FarRural => ZoneClass::FarRural,
            Zone::Urban | Zone::Rural => ZoneClass::Domestic,
        }
    }
}

impl fmt::Display for Zone {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Coarse zone grouping used by coverage validation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ZoneClass {
    FarRural,
    Domestic,
}

impl ZoneClass {
    pub const ALL: [ZoneClass; 2] = [ZoneClass::FarRural, ZoneClass::Domestic];

    pub fn as_str(self) -> &'static str {
        match self {
            ZoneClass::FarRural => "far_rural",
            ZoneClass::Domestic => "domestic",
        }
    }
}

impl fmt::Display for ZoneClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CarrierKind {
    Worldwide,
    VendorTruck,
    SupplierTruck,
    PickupPoint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Carrier {
    pub id: CarrierId,
    pub kind: CarrierKind,
    #[serde(default)]
    pub max_weight_kg: Option<f64>,
    pub base_transit_days: u32,
    /// Home delivery guaranteed, as opposed to pickup with overdue risk.
    pub guaranteed: bool,
    /// Zones the carrier can deliver to; all zones when absent.
    #[serde(default)]
    pub zones: Option<Vec<Zone>>,
    /// Networks the carrier serves; all networks when absent.
    #[serde(default)]
    pub networks: Option<Vec<NetworkId>>,
}

impl Carrier {
    pub fn serves(&self, network: &str, zone: Zone) -> bool {
        self.zones.as_ref().is_none_or(|z| z.contains(&zone))
            && self
                .networks
                .as_ref()
                .is_none_or(|n| n.iter().any(|id| id == network))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NetworkRole {
    Supplier,
    Reseller,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Network {
    pub id: NetworkId,
    pub role: NetworkRole,
    /// Drop-ship edges: networks this one supplies.
    #[serde(default)]
    pub supplies: Vec<NetworkId>,
    pub urban_clients: u32,
    pub rural_clients: u32,
    pub weekly_orders: u64,
    pub far_rural_pct: f64,
    /// Per-network override of the habitual carrier weights.
    #[serde(default)]
    pub habit_weights: Option<BTreeMap<String, f64>>,
}

impl Network {
    pub fn total_clients(&self) -> u32 {
        self.urban_clients + self.rural_clients
    }
}

/// Price limit and delay tolerance of one synthetic customer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Client {
    pub id: String,
    pub network_id: NetworkId,
    pub zone: Zone,
    pub habitual_carrier: Option<CarrierId>,
    pub price_limit_usd: f64,
    pub delay_tolerance_days: u32,
}

impl Client {
    pub fn id_for(network: &str, index: u32) -> String {
        format!("{network}-C{index:05}")
    }
}

/// Distributions used when synthesizing clients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClientProfile {
    /// Carrier id (or `"none"`) to relative weight.
    pub habit_weights: BTreeMap<String, f64>,
    pub price_limit: RealDist,
    pub delay_tolerance: DaysDist,
    /// Share of rural clients flagged far-rural; defaults to `far_rural_pct / 100`.
    #[serde(default)]
    pub far_rural_client_fraction: Option<f64>,
}

impl ClientProfile {
    pub fn validate(&self, carriers: &[Carrier]) -> Result<()> {
        validate_habit_weights(&self.habit_weights, carriers, "clients.habit_weights")?;
        self.price_limit.validate("clients.price_limit", f64::MAX)?;
        self.delay_tolerance.validate("clients.delay_tolerance")?;
        if let Some(f) = self.far_rural_client_fraction {
            if !(0.0..=1.0).contains(&f) {
                return Err(SimError::invalid(format!(
                    "clients.far_rural_client_fraction {f} outside [0, 1]"
                )));
            }
        }
        Ok(())
    }
}

pub(crate) fn validate_habit_weights(
    weights: &BTreeMap<String, f64>,
    carriers: &[Carrier],
    what: &str,
) -> Result<()> {
    for (k, w) in weights {
        if k != NO_HABIT && !carriers.iter().any(|c| &c.id == k) {
            return Err(SimError::invalid(format!("{what}: unknown carrier {k}")));
        }
        if !w.is_finite() || *w < 0.0 {
            return Err(SimError::invalid(format!("{what}: weight for {k} must be >= 0")));
        }
    }
    if weights.values().sum::<f64>() <= 0.0 {
        return Err(SimError::invalid(format!("{what}: weights must have a positive sum")));
    }
    Ok(())
}

/// Number of rural clients flagged far-rural for `network`.
pub fn far_rural_client_count(network: &Network, profile: &ClientProfile) -> u32 {
    let rural = network.rural_clients;
    if rural == 0 || network.far_rural_pct <= 0.0 {
        return 0;
    }
    let fraction = profile
        .far_rural_client_fraction
        .unwrap_or(network.far_rural_pct / 100.0);
    let mut k = (f64::from(rural) * fraction).round() as u32;
    // a positive far-rural target needs at least one far-rural client, and a
    // target below 100% needs at least one other client
    k = k.max(1);
    if network.far_rural_pct < 100.0 && network.urban_clients == 0 {
        k = k.min(rural - 1);
    }
    k.min(rural)
}

/// Builds the client population of one network.
///
/// Urban clients come first, followed by the rural clients; a seeded subset of
/// the rural clients is flagged far-rural. Habitual carriers are drawn only
/// among carriers that serve the client's network and zone.
pub fn synthesize_clients(
    network: &Network,
    profile: &ClientProfile,
    carriers: &[Carrier],
    seed: u64,
) -> Vec<Client> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let urban = network.urban_clients as usize;
    let rural = network.rural_clients as usize;

    let far_count = far_rural_client_count(network, profile) as usize;
    let mut far = vec![false; rural];
    for i in index::sample(&mut rng, rural, far_count) {
        far[i] = true;
    }

    let habit_weights = network
        .habit_weights
        .as_ref()
        .unwrap_or(&profile.habit_weights);
    let habits_by_zone: BTreeMap<Zone, Option<(Vec<Option<CarrierId>>, WeightedIndex<f64>)>> =
        Zone::ALL
            .iter()
            .map(|&z| (z, habit_table(habit_weights, carriers, &network.id, z)))
            .collect();

    (0..urban + rural)
        .map(|i| {
            let zone = if i < urban {
                Zone::Urban
            } else if far[i - urban] {
                Zone::FarRural
            } else {
                Zone::Rural
            };
            let habitual_carrier = habits_by_zone[&zone]
                .as_ref()
                .and_then(|(ids, w)| ids[w.sample(&mut rng)].clone());
            let price_limit_usd = profile.price_limit.sample_truncated(&mut rng, f64::MAX);
            let delay_tolerance_days = profile.delay_tolerance.sample(&mut rng);
            Client {
                id: Client::id_for(&network.id, i as u32),
                network_id: network.id.clone(),
                zone,
                habitual_carrier,
                price_limit_usd,
                delay_tolerance_days,
            }
        })
        .collect()
}

fn habit_table(
    weights: &BTreeMap<String, f64>,
    carriers: &[Carrier],
    network: &str,
    zone: Zone,
) -> Option<(Vec<Option<CarrierId>>, WeightedIndex<f64>)> {
    let mut ids = Vec::new();
    let mut ws = Vec::new();
    for (k, &w) in weights {
        if k == NO_HABIT {
            ids.push(None);
            ws.push(w);
        } else if carriers.iter().any(|c| &c.id == k && c.serves(network, zone)) {
            ids.push(Some(k.clone()));
            ws.push(w);
        }
    }
    WeightedIndex::new(&ws).ok().map(|w| (ids, w))
}

/// One row of an imported preference profile export.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreferenceProfile {
    pub client_id: String,
    #[serde(deserialize_with = "empty_as_none")]
    pub habitual_carrier: Option<CarrierId>,
    pub price_limit_usd: f64,
    pub delay_tolerance_days: u32,
}

fn empty_as_none<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Option<String>, D::Error> {
    let s = String::deserialize(d)?;
    let s = s.trim();
    Ok(if s.is_empty() { None } else { Some(s.to_string()) })
}

/// Reads `client_id,habitual_carrier,price_limit_usd,delay_tolerance_days` rows.
pub fn read_preferences(path: &Path) -> Result<Vec<PreferenceProfile>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| SimError::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
    let mut out = Vec::new();
    for row in rdr.deserialize() {
        let p: PreferenceProfile = row.map_err(|e| SimError::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        if !(p.price_limit_usd.is_finite() && p.price_limit_usd > 0.0) {
            return Err(SimError::invalid(format!(
                "preference for {}: price_limit_usd must be > 0",
                p.client_id
            )));
        }
        out.push(p);
    }
    Ok(out)
}

/// Overwrites the traits of clients named in `prefs`; returns how many were updated.
pub fn apply_preferences(clients: &mut [Client], prefs: &BTreeMap<String, PreferenceProfile>) -> usize {
    let mut applied = 0;
    for c in clients.iter_mut() {
        if let Some(p) = prefs.get(&c.id) {
            c.habitual_carrier = p.habitual_carrier.clone();
            c.price_limit_usd = p.price_limit_usd;
            c.delay_tolerance_days = p.delay_tolerance_days;
            applied += 1;
        }
    }
    applied
}

#[cfg(test)]
mod tests {
    use super::*;

    fn carriers() -> Vec<Carrier> {
        let c = |id: &str, kind, networks: Option<Vec<&str>>| Carrier {
            id: id.into(),
            kind,
            max_weight_kg: None,
            base_transit_days: 2,
            guaranteed: true,
            zones: None,
            networks: networks.map(|n| n.into_iter().map(String::from).collect()),
        };
        vec![
            c("fedex", CarrierKind::Worldwide, Some(vec!["S1"])),
            c("vendor", CarrierKind::VendorTruck, None),
        ]
    }

    fn profile() -> ClientProfile {
        ClientProfile {
            habit_weights: [("fedex".to_string(), 1.0), ("vendor".to_string(), 1.0), ("none".to_string(), 1.0)]
                .into_iter()
                .collect(),
            price_limit: RealDist::Uniform { min: 50.0, max: 150.0 },
            delay_tolerance: DaysDist::Categorical { weights: vec![1.0, 1.0] },
            far_rural_client_fraction: None,
        }
    }

    fn s1() -> Network {
        Network {
            id: "S1".into(),
            role: NetworkRole::Supplier,
            supplies: vec!["R2".into()],
            urban_clients: 210,
            rural_clients: 380,
            weekly_orders: 1200,
            far_rural_pct: 30.0,
            habit_weights: None,
        }
    }

    #[test]
    fn zone_counts_match_config() {
        let clients = synthesize_clients(&s1(), &profile(), &carriers(), 11);
        assert_eq!(clients.len(), 590);
        assert_eq!(clients.iter().filter(|c| c.zone == Zone::Urban).count(), 210);
        let far = clients.iter().filter(|c| c.zone == Zone::FarRural).count();
        assert_eq!(far, 114);
        assert_eq!(clients.iter().filter(|c| c.zone == Zone::Rural).count(), 380 - 114);
        assert!(clients.iter().all(|c| c.price_limit_usd > 0.0));
    }

    #[test]
    fn empty_network_yields_no_clients() {
        let mut n = s1();
        n.urban_clients = 0;
        n.rural_clients = 0;
        n.weekly_orders = 0;
        assert!(synthesize_clients(&n, &profile(), &carriers(), 1).is_empty());
    }

    #[test]
    fn synthesis_is_deterministic() {
        let a = synthesize_clients(&s1(), &profile(), &carriers(), 99);
        let b = synthesize_clients(&s1(), &profile(), &carriers(), 99);
        assert_eq!(a, b);
        let c = synthesize_clients(&s1(), &profile(), &carriers(), 100);
        assert_ne!(a, c);
    }

    #[test]
    fn habits_respect_carrier_service_area() {
        let mut n = s1();
        n.id = "R2".into();
        let clients = synthesize_clients(&n, &profile(), &carriers(), 5);
        assert!(clients.iter().all(|c| c.habitual_carrier.as_deref() != Some("fedex")));
        assert!(clients.iter().any(|c| c.habitual_carrier.as_deref() == Some("vendor")));
        let s1_clients = synthesize_clients(&s1(), &profile(), &carriers(), 5);
        assert!(s1_clients.iter().any(|c| c.habitual_carrier.as_deref() == Some("fedex")));
    }

    #[test]
    fn far_rural_count_edges() {
        let p = profile();
        let mut n = s1();
        n.urban_clients = 0;
        n.rural_clients = 3;
        n.far_rural_pct = 1.0;
        assert_eq!(far_rural_client_count(&n, &p), 1);
        n.far_rural_pct = 99.0;
        assert_eq!(far_rural_client_count(&n, &p), 2);
        n.far_rural_pct = 0.0;
        assert_eq!(far_rural_client_count(&n, &p), 0);
    }

    #[test]
    fn preferences_override_traits() {
        let mut clients = synthesize_clients(&s1(), &profile(), &carriers(), 3);
        let p = PreferenceProfile {
            client_id: "S1-C00004".into(),
            habitual_carrier: None,
            price_limit_usd: 42.0,
            delay_tolerance_days: 3,
        };
        let prefs = [(p.client_id.clone(), p)].into_iter().collect();
        assert_eq!(apply_preferences(&mut clients, &prefs), 1);
        assert_eq!(clients[4].price_limit_usd, 42.0);
        assert_eq!(clients[4].habitual_carrier, None);
        assert_eq!(clients[4].delay_tolerance_days, 3);
    }

    #[test]
    fn reads_preference_csv() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("prefs.csv");
        std::fs::write(
            &path,
            "client_id,habitual_carrier,price_limit_usd,delay_tolerance_days\nS1-C00000,fedex,100,1\nS1-C00001,,80.5,0\n",
        )
        .unwrap();
        let prefs = read_preferences(&path).unwrap();
        assert_eq!(prefs.len(), 2);
        assert_eq!(prefs[0].habitual_carrier.as_deref(), Some("fedex"));
        assert_eq!(prefs[1].habitual_carrier, None);
        std::fs::write(&path, "client_id,habitual_carrier,price_limit_usd,delay_tolerance_days\nx,,0,0\n").unwrap();
        assert!(read_preferences(&path).is_err());
    }
}
