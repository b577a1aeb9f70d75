//! Scenario execution: replications, tallies and cross-replication deviation.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::choice::{choose, fastest_transit, ChoiceContext, ChoicePolicy, Decision, DropReason};
use crate::config::Config;
use crate::coverage::{weight_band, SelectionCount};
use crate::error::{Result, SimError};
use crate::network::{
    apply_preferences, synthesize_clients, validate_habit_weights, Carrier, CarrierId, Client, NetworkId, Zone,
};
use crate::orders::{check_deviation, generate_orders, DeviationReport, Order};
use crate::rng::{domain, substream, substream_seed};
use crate::tariff::{availability_for, calibrate, rate_shop, weight_cap, CalibrationRow, RateBook};

fn default_replications() -> u32 {
    2
}

/// One simulated configuration of the delivery market.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub id: String,
    #[serde(default)]
    pub label: String,
    pub available_carriers: Vec<CarrierId>,
    /// Carrier to new average price target, re-calibrated for this scenario.
    #[serde(default)]
    pub price_overrides: BTreeMap<CarrierId, f64>,
    /// Extra transit days per carrier.
    #[serde(default)]
    pub delay_additions: BTreeMap<CarrierId, u32>,
    /// Orders per network; the networks' weekly counts when empty.
    #[serde(default)]
    pub order_totals: BTreeMap<NetworkId, u64>,
    #[serde(default = "default_replications")]
    pub replications: u32,
    /// Falls back to the configuration seed.
    #[serde(default)]
    pub master_seed: Option<u64>,
    /// Replaces every network's habitual carrier weights.
    #[serde(default)]
    pub habit_weights: Option<BTreeMap<String, f64>>,
    #[serde(default)]
    pub choice: Option<ChoicePolicy>,
    /// Run every replication on the same substream (diagnostic).
    #[serde(default)]
    pub fixed_substream: bool,
}

impl Scenario {
    pub fn validate(&self, cfg: &Config) -> Result<()> {
        let bad = |m: String| Err(SimError::invalid(format!("scenario {}: {m}", self.id)));
        if self.available_carriers.is_empty() {
            return bad("available_carriers is empty".into());
        }
        let mut seen = BTreeSet::new();
        for c in &self.available_carriers {
            if cfg.carrier(c).is_none() {
                return bad(format!("unknown carrier {c}"));
            }
            if !seen.insert(c) {
                return bad(format!("carrier {c} listed twice"));
            }
        }
        if self.replications < 2 {
            return bad("replications must be >= 2".into());
        }
        for (c, price) in &self.price_overrides {
            if cfg.carrier(c).is_none() {
                return bad(format!("price override for unknown carrier {c}"));
            }
            if !(price.is_finite() && *price > 0.0) {
                return bad(format!("price override for {c} must be > 0"));
            }
        }
        if let Some(c) = self.delay_additions.keys().find(|c| cfg.carrier(c).is_none()) {
            return bad(format!("delay addition for unknown carrier {c}"));
        }
        for (n, count) in &self.order_totals {
            let Some(net) = cfg.network(n) else {
                return bad(format!("order total for unknown network {n}"));
            };
            if *count > 0 && net.total_clients() == 0 {
                return bad(format!("network {n} has orders but no clients"));
            }
        }
        if let Some(w) = &self.habit_weights {
            validate_habit_weights(w, &cfg.carriers, &format!("scenario {} habit_weights", self.id))?;
        }
        if let Some(p) = &self.choice {
            p.validate()?;
        }
        Ok(())
    }

    pub fn seed(&self, default: u64) -> u64 {
        self.master_seed.unwrap_or(default)
    }

    /// Per-network order counts for this scenario.
    pub fn order_counts(&self, cfg: &Config) -> BTreeMap<NetworkId, u64> {
        if self.order_totals.is_empty() {
            cfg.weekly_counts()
        } else {
            self.order_totals.clone()
        }
    }
}

/// `100 * (max - min) / mean` over replication counts; zero when the mean is zero.
pub fn deviation_pct(counts: &[f64]) -> f64 {
    if counts.len() < 2 {
        return 0.0;
    }
    let max = counts.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = counts.iter().copied().fold(f64::INFINITY, f64::min);
    let mean = counts.iter().sum::<f64>() / counts.len() as f64;
    if mean == 0.0 {
        0.0
    } else {
        100.0 * (max - min) / mean
    }
}

/// A configuration with calibrated rate cards, ready to run scenarios.
#[derive(Debug, Clone)]
pub struct Simulation {
    pub config: Config,
    pub rate_cards: RateBook,
    pub calibration: Vec<CalibrationRow>,
    pub calibration_sample: Vec<Order>,
}

impl Simulation {
    /// Calibrates the configured rate cards against a sampled order set.
    pub fn prepare(config: Config) -> Result<Self> {
        let sample = calibration_sample(&config, config.calibration.sample_size);
        let (rate_cards, calibration) = if config.calibration.targets.is_empty() {
            (config.rate_cards.clone(), Vec::new())
        } else {
            calibrate(&config.rate_cards, &config.carriers, &config.calibration.targets, &sample)?
        };
        Ok(Simulation {
            config,
            rate_cards,
            calibration,
            calibration_sample: sample,
        })
    }
}

/// Orders in the calibration zone, with weights from the generation distribution.
pub fn calibration_sample(cfg: &Config, n: usize) -> Vec<Order> {
    let seed = cfg.calibration.seed.unwrap_or(cfg.seed);
    sample_zone_orders(cfg, cfg.calibration.zone, n, seed)
}

/// Client-free orders in one zone; used for calibration and price checks.
pub fn sample_zone_orders(cfg: &Config, zone: Zone, n: usize, seed: u64) -> Vec<Order> {
    let mut rng = substream(seed, &[domain::CALIBRATION]);
    (0..n)
        .map(|i| Order {
            id: format!("CAL-{i:06}"),
            client_id: String::new(),
            network_id: String::new(),
            zone,
            weight_kg: cfg.generation.weight.sample_truncated(&mut rng, cfg.max_weight_kg),
            basket_value_usd: cfg.generation.basket_value.sample_truncated(&mut rng, f64::MAX),
            week: 0,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellStats {
    pub network: NetworkId,
    pub carrier: CarrierId,
    /// Selections per replication.
    pub counts: Vec<u64>,
    pub mean: f64,
    pub deviation_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DropStats {
    pub network: NetworkId,
    pub counts: Vec<u64>,
    pub mean: f64,
    /// Totals over all replications.
    pub by_reason: BTreeMap<DropReason, u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CarrierSummary {
    pub carrier: CarrierId,
    /// Mean quoted price over orders in the calibration zone.
    pub avg_quote_usd: Option<f64>,
    /// Mean price of accepted quotes.
    pub avg_selected_usd: Option<f64>,
    /// Mean of the carrier's per-network deviations, over networks it served.
    pub deviation_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioResult {
    pub scenario_id: String,
    pub label: String,
    pub master_seed: u64,
    pub replications: u32,
    pub networks: Vec<NetworkId>,
    pub carriers: Vec<CarrierId>,
    /// Generated orders per network per replication.
    pub generated: BTreeMap<NetworkId, Vec<u64>>,
    pub cells: Vec<CellStats>,
    pub dropped: Vec<DropStats>,
    pub summaries: Vec<CarrierSummary>,
    pub calibration: Vec<CalibrationRow>,
    pub deviation_reports: Vec<Vec<DeviationReport>>,
    pub gate_failed: bool,
    /// Mean selections per replication, keyed for coverage comparison.
    pub selections: Vec<SelectionCount>,
}

impl ScenarioResult {
    pub fn cell(&self, network: &str, carrier: &str) -> Option<&CellStats> {
        self.cells.iter().find(|c| c.network == network && c.carrier == carrier)
    }

    pub fn drops(&self, network: &str) -> Option<&DropStats> {
        self.dropped.iter().find(|d| d.network == network)
    }

    pub fn total_dropped(&self) -> u64 {
        self.dropped.iter().flat_map(|d| d.counts.iter()).sum()
    }

    /// Networks and replications where selections plus drops differ from the generated count.
    pub fn conservation_violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        for net in &self.networks {
            for r in 0..self.replications as usize {
                let generated = self.generated.get(net).map_or(0, |g| g[r]);
                let selected: u64 = self.cells.iter().filter(|c| &c.network == net).map(|c| c.counts[r]).sum();
                let dropped = self.drops(net).map_or(0, |d| d.counts[r]);
                if selected + dropped != generated {
                    out.push(format!(
                        "{} {net} replication {r}: {selected} selected + {dropped} dropped != {generated} generated",
                        self.scenario_id
                    ));
                }
            }
        }
        out
    }
}

#[derive(Default)]
struct Tally {
    generated: BTreeMap<NetworkId, u64>,
    selected: BTreeMap<(NetworkId, CarrierId), u64>,
    dropped: BTreeMap<(NetworkId, DropReason), u64>,
    quote_sum: BTreeMap<CarrierId, (f64, u64)>,
    selected_sum: BTreeMap<CarrierId, (f64, u64)>,
    selections: BTreeMap<(NetworkId, crate::network::ZoneClass, CarrierId, String), u64>,
    deviation: Vec<DeviationReport>,
}

/// Runs every replication of `scenario` and aggregates the tallies.
pub fn run_scenario(scenario: &Scenario, sim: &Simulation) -> Result<ScenarioResult> {
    let cfg = &sim.config;
    scenario.validate(cfg)?;
    let master_seed = scenario.seed(cfg.seed);

    let (rate_cards, calibration) = if scenario.price_overrides.is_empty() {
        (sim.rate_cards.clone(), Vec::new())
    } else {
        calibrate(&sim.rate_cards, &cfg.carriers, &scenario.price_overrides, &sim.calibration_sample)?
    };
    let carriers: Vec<Carrier> = cfg
        .carriers
        .iter()
        .map(|c| {
            let mut c = c.clone();
            c.base_transit_days += scenario.delay_additions.get(&c.id).copied().unwrap_or(0);
            c
        })
        .collect();
    let offered: BTreeSet<CarrierId> = scenario.available_carriers.iter().cloned().collect();
    let policy = scenario.choice.clone().unwrap_or_else(|| cfg.choice.clone());
    let counts = scenario.order_counts(cfg);

    let ctx = RunContext {
        cfg,
        carriers: &carriers,
        rate_cards: &rate_cards,
        offered: &offered,
        policy: &policy,
        scenario,
        counts: &counts,
        master_seed,
    };
    let tallies: Vec<Tally> = (0..scenario.replications)
        .into_par_iter()
        .map(|r| ctx.replicate(if scenario.fixed_substream { 0 } else { r }))
        .collect::<Result<_>>()?;

    Ok(aggregate(scenario, cfg, master_seed, calibration, tallies))
}

struct RunContext<'a> {
    cfg: &'a Config,
    carriers: &'a [Carrier],
    rate_cards: &'a RateBook,
    offered: &'a BTreeSet<CarrierId>,
    policy: &'a ChoicePolicy,
    scenario: &'a Scenario,
    counts: &'a BTreeMap<NetworkId, u64>,
    master_seed: u64,
}

impl RunContext<'_> {
    fn replicate(&self, rep: u32) -> Result<Tally> {
        let cfg = self.cfg;
        let rep_seed = substream_seed(self.master_seed, &[u64::from(rep)]);

        let mut clients: Vec<Client> = Vec::new();
        for (i, net) in cfg.networks.iter().enumerate() {
            let mut net = net.clone();
            if let Some(w) = &self.scenario.habit_weights {
                net.habit_weights = Some(w.clone());
            }
            let seed = substream_seed(rep_seed, &[domain::CLIENTS, i as u64]);
            clients.extend(synthesize_clients(&net, &cfg.clients, &cfg.carriers, seed));
        }
        apply_preferences(&mut clients, &cfg.preferences);
        let by_id: BTreeMap<&str, &Client> = clients.iter().map(|c| (c.id.as_str(), c)).collect();

        let params = cfg.generation_params(self.counts.clone());
        let orders = generate_orders(&cfg.networks, &clients, &params, rep_seed)?;

        let mut t = Tally {
            deviation: check_deviation(&orders, &params, &cfg.networks),
            ..Default::default()
        };
        for (i, order) in orders.iter().enumerate() {
            let client = by_id[order.client_id.as_str()];
            *t.generated.entry(order.network_id.clone()).or_default() += 1;

            let available = availability_for(order, self.carriers, self.offered);
            let quotes = rate_shop(order, self.carriers, self.rate_cards, &available);
            if order.zone == cfg.calibration.zone {
                for q in &quotes {
                    let e = t.quote_sum.entry(q.carrier_id.clone()).or_default();
                    e.0 += q.price_usd;
                    e.1 += 1;
                }
            }
            let expected = self
                .baseline_transit(order)
                .or_else(|| fastest_transit(&quotes))
                .unwrap_or(0);
            let choice_ctx = ChoiceContext {
                available: &available,
                carriers: self.carriers,
                expected_transit_days: expected,
            };
            let mut rng = substream(rep_seed, &[domain::CHOICE, i as u64]);
            let outcome = choose(order, &quotes, &choice_ctx, client, self.policy, &mut rng);
            match outcome.result {
                Decision::Selected {
                    carrier_id, price_usd, ..
                } => {
                    let e = t.selected_sum.entry(carrier_id.clone()).or_default();
                    e.0 += price_usd;
                    e.1 += 1;
                    let band = weight_band(order.weight_kg, &cfg.coverage.weight_bands);
                    *t.selections
                        .entry((order.network_id.clone(), order.zone.class(), carrier_id.clone(), band))
                        .or_default() += 1;
                    *t.selected.entry((order.network_id.clone(), carrier_id)).or_default() += 1;
                }
                Decision::Dropped(reason) => {
                    *t.dropped.entry((order.network_id.clone(), reason)).or_default() += 1;
                }
            }
        }
        Ok(t)
    }

    /// The delivery time a client regards as normal: fastest base transit among
    /// all carriers serving the order, ignoring scenario restrictions and delays.
    fn baseline_transit(&self, order: &Order) -> Option<u32> {
        self.cfg
            .carriers
            .iter()
            .filter(|c| c.serves(&order.network_id, order.zone))
            .filter(|c| {
                self.cfg
                    .rate_cards
                    .get(&c.id)
                    .is_some_and(|card| weight_cap(c, card).is_none_or(|cap| order.weight_kg <= cap))
            })
            .map(|c| c.base_transit_days)
            .min()
    }
}

fn aggregate(
    scenario: &Scenario,
    cfg: &Config,
    master_seed: u64,
    calibration: Vec<CalibrationRow>,
    tallies: Vec<Tally>,
) -> ScenarioResult {
    let reps = tallies.len();
    let networks: Vec<NetworkId> = cfg.networks.iter().map(|n| n.id.clone()).collect();
    // carriers in configuration order
    let carriers: Vec<CarrierId> = cfg
        .carriers
        .iter()
        .filter(|c| scenario.available_carriers.contains(&c.id))
        .map(|c| c.id.clone())
        .collect();

    let generated = networks
        .iter()
        .map(|n| (n.clone(), tallies.iter().map(|t| t.generated.get(n).copied().unwrap_or(0)).collect()))
        .collect();

    let mut cells = Vec::new();
    for n in &networks {
        for c in &carriers {
            let key = (n.clone(), c.clone());
            let counts: Vec<u64> = tallies.iter().map(|t| t.selected.get(&key).copied().unwrap_or(0)).collect();
            let as_f: Vec<f64> = counts.iter().map(|&x| x as f64).collect();
            cells.push(CellStats {
                network: n.clone(),
                carrier: c.clone(),
                mean: as_f.iter().sum::<f64>() / reps as f64,
                deviation_pct: deviation_pct(&as_f),
                counts,
            });
        }
    }

    let dropped = networks
        .iter()
        .map(|n| {
            let counts: Vec<u64> = tallies
                .iter()
                .map(|t| DropReason::ALL.iter().map(|r| t.dropped.get(&(n.clone(), *r)).copied().unwrap_or(0)).sum())
                .collect();
            let by_reason = DropReason::ALL
                .iter()
                .map(|r| (*r, tallies.iter().map(|t| t.dropped.get(&(n.clone(), *r)).copied().unwrap_or(0)).sum()))
                .filter(|(_, v): &(DropReason, u64)| *v > 0)
                .collect();
            DropStats {
                network: n.clone(),
                mean: counts.iter().sum::<u64>() as f64 / reps as f64,
                counts,
                by_reason,
            }
        })
        .collect();

    let mean_of = |pick: &dyn Fn(&Tally) -> Option<(f64, u64)>| -> Option<f64> {
        let (s, n) = tallies
            .iter()
            .filter_map(pick)
            .fold((0.0, 0u64), |(s, n), (a, b)| (s + a, n + b));
        (n > 0).then(|| s / n as f64)
    };
    let summaries = carriers
        .iter()
        .map(|c| {
            let devs: Vec<f64> = cells
                .iter()
                .filter(|cell| &cell.carrier == c && cell.mean > 0.0)
                .map(|cell| cell.deviation_pct)
                .collect();
            CarrierSummary {
                carrier: c.clone(),
                avg_quote_usd: mean_of(&|t: &Tally| t.quote_sum.get(c).copied()),
                avg_selected_usd: mean_of(&|t: &Tally| t.selected_sum.get(c).copied()),
                deviation_pct: if devs.is_empty() { 0.0 } else { devs.iter().sum::<f64>() / devs.len() as f64 },
            }
        })
        .collect();

    let mut selection_totals: BTreeMap<_, u64> = BTreeMap::new();
    for t in &tallies {
        for (k, v) in &t.selections {
            *selection_totals.entry(k.clone()).or_default() += v;
        }
    }
    let selections = selection_totals
        .into_iter()
        .map(|((network, zone_class, carrier, weight_band), total)| SelectionCount {
            network,
            zone_class,
            carrier,
            weight_band,
            count: total as f64 / reps as f64,
        })
        .collect();

    let deviation_reports: Vec<Vec<DeviationReport>> = tallies.into_iter().map(|t| t.deviation).collect();
    let gate_failed = deviation_reports.iter().flatten().any(|r| !r.pass);

    ScenarioResult {
        scenario_id: scenario.id.clone(),
        label: scenario.label.clone(),
        master_seed,
        replications: reps as u32,
        networks,
        carriers,
        generated,
        cells,
        dropped,
        summaries,
        calibration,
        deviation_reports,
        gate_failed,
        selections,
    }
}

/// Runs scenarios in parallel; results keep the input order and errors stay per scenario.
pub fn run_suite(scenarios: &[Scenario], sim: &Simulation) -> Vec<Result<ScenarioResult>> {
    scenarios.par_iter().map(|s| run_scenario(s, sim)).collect()
}
