//! Monte Carlo order streams and the far-rural deviation gate.

use std::collections::BTreeMap;
use std::io;

use rand::seq::index;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dist::RealDist;
use crate::error::{Result, SimError};
use crate::network::{Client, Network, NetworkId, Zone};
use crate::rng::{domain, substream};

/// One generated shipment request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Order {
    pub id: String,
    #[serde(rename = "client")]
    pub client_id: String,
    #[serde(rename = "network")]
    pub network_id: NetworkId,
    pub zone: Zone,
    pub weight_kg: f64,
    pub basket_value_usd: f64,
    pub week: u32,
}

/// How orders are spread over the far-rural and remaining clients.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ZoneSampling {
    /// The far-rural order count is `n * p` rounded up or down at random so
    /// its expectation is exactly `n * p`; positions are shuffled.
    #[default]
    Stratified,
    /// Each order is far-rural independently with probability `p`.
    Bernoulli,
    /// Orders pick clients uniformly, so zone shares follow the population.
    Population,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerationParams {
    /// Orders to generate per network; networks not listed get none.
    pub order_counts: BTreeMap<NetworkId, u64>,
    pub weight: RealDist,
    pub basket_value: RealDist,
    pub max_weight_kg: f64,
    pub deviation_threshold_pct: f64,
    pub zone_sampling: ZoneSampling,
    pub week: u32,
}

impl GenerationParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.max_weight_kg.is_finite() && self.max_weight_kg > 0.0) {
            return Err(SimError::invalid("max_weight_kg must be > 0"));
        }
        if !(self.deviation_threshold_pct.is_finite() && self.deviation_threshold_pct > 0.0) {
            return Err(SimError::invalid("deviation_threshold_pct must be > 0"));
        }
        self.weight.validate("generation.weight", self.max_weight_kg)?;
        self.basket_value.validate("generation.basket_value", f64::MAX)?;
        Ok(())
    }
}

/// Generates each network's orders from its own substream of `seed`.
///
/// Networks run in parallel; the output is grouped by network in the order of
/// `networks` and does not depend on scheduling.
pub fn generate_orders(
    networks: &[Network],
    clients: &[Client],
    params: &GenerationParams,
    seed: u64,
) -> Result<Vec<Order>> {
    let per_network: Vec<Result<Vec<Order>>> = networks
        .par_iter()
        .enumerate()
        .map(|(i, net)| {
            let n = params.order_counts.get(&net.id).copied().unwrap_or(0);
            let own: Vec<&Client> = clients.iter().filter(|c| c.network_id == net.id).collect();
            generate_for_network(net, &own, n, params, seed, i as u64)
        })
        .collect();
    let mut out = Vec::new();
    for orders in per_network {
        out.extend(orders?);
    }
    Ok(out)
}

fn generate_for_network(
    net: &Network,
    clients: &[&Client],
    n: u64,
    params: &GenerationParams,
    seed: u64,
    net_index: u64,
) -> Result<Vec<Order>> {
    if n == 0 {
        return Ok(Vec::new());
    }
    if clients.is_empty() {
        return Err(SimError::NoClients {
            network: net.id.clone(),
            orders: n,
        });
    }
    let mut rng = substream(seed, &[domain::ORDERS, net_index]);
    let (far, other): (Vec<&Client>, Vec<&Client>) =
        clients.iter().partition(|c| c.zone == Zone::FarRural);
    let p = (net.far_rural_pct / 100.0).clamp(0.0, 1.0);

    let far_flags: Option<Vec<bool>> = match params.zone_sampling {
        ZoneSampling::Stratified => {
            let exact = n as f64 * p;
            let mut k = exact.floor() as u64;
            if rng.random::<f64>() < exact - exact.floor() {
                k += 1;
            }
            let mut flags = vec![false; n as usize];
            for i in index::sample(&mut rng, n as usize, k as usize) {
                flags[i] = true;
            }
            Some(flags)
        }
        ZoneSampling::Bernoulli => Some((0..n).map(|_| rng.random::<f64>() < p).collect()),
        ZoneSampling::Population => None,
    };
    if let Some(flags) = &far_flags {
        let need_far = flags.iter().any(|&f| f);
        let need_other = flags.iter().any(|&f| !f);
        if (need_far && far.is_empty()) || (need_other && other.is_empty()) {
            return Err(SimError::invalid(format!(
                "network {}: client zones cannot realise far_rural_pct {}",
                net.id, net.far_rural_pct
            )));
        }
    }

    let orders = (0..n as usize)
        .map(|i| {
            let client = match &far_flags {
                Some(flags) => {
                    let group = if flags[i] { &far } else { &other };
                    group[rng.random_range(0..group.len())]
                }
                None => clients[rng.random_range(0..clients.len())],
            };
            let weight_kg = params.weight.sample_truncated(&mut rng, params.max_weight_kg);
            let basket_value_usd = params.basket_value.sample_truncated(&mut rng, f64::MAX);
            Order {
                id: format!("{}-W{}-{:06}", net.id, params.week, i),
                client_id: client.id.clone(),
                network_id: net.id.clone(),
                zone: client.zone,
                weight_kg,
                basket_value_usd,
                week: params.week,
            }
        })
        .collect();
    Ok(orders)
}

/// Far-rural share check for one network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviationReport {
    pub network: NetworkId,
    pub orders: u64,
    pub target_pct: f64,
    pub observed_pct: f64,
    /// `None` when the target is zero but far-rural orders were observed.
    pub rel_deviation_pct: Option<f64>,
    pub pass: bool,
    pub reason: Option<String>,
}

/// Relative deviation of the observed far-rural share from each network's target.
///
/// Networks without orders are not reported.
pub fn check_deviation(orders: &[Order], params: &GenerationParams, networks: &[Network]) -> Vec<DeviationReport> {
    networks
        .iter()
        .filter_map(|net| {
            let (total, far) = orders
                .iter()
                .filter(|o| o.network_id == net.id)
                .fold((0u64, 0u64), |(t, f), o| (t + 1, f + u64::from(o.zone == Zone::FarRural)));
            if total == 0 {
                return None;
            }
            let target = net.far_rural_pct;
            let observed = 100.0 * far as f64 / total as f64;
            let (rel, pass, reason) = if target == 0.0 {
                if far == 0 {
                    (Some(0.0), true, None)
                } else {
                    (None, false, Some("undefined target: far_rural_pct is 0 but far-rural orders were generated".to_string()))
                }
            } else {
                let rel = 100.0 * (observed - target).abs() / target;
                let pass = rel <= params.deviation_threshold_pct;
                let reason = (!pass).then(|| {
                    format!("relative deviation {rel:.2}% exceeds {}%", params.deviation_threshold_pct)
                });
                (Some(rel), pass, reason)
            };
            Some(DeviationReport {
                network: net.id.clone(),
                orders: total,
                target_pct: target,
                observed_pct: observed,
                rel_deviation_pct: rel,
                pass,
                reason,
            })
        })
        .collect()
}

/// Writes orders as `id,network,client,zone,weight_kg,basket_value_usd,week`.
pub fn write_orders_csv<W: io::Write>(w: W, orders: &[Order]) -> Result<()> {
    let mut wtr = csv::WriterBuilder::new().from_writer(w);
    for o in orders {
        wtr.serialize(CsvOrder::from(o))?;
    }
    wtr.flush().map_err(|e| SimError::io("<orders csv>", e))?;
    Ok(())
}

pub fn read_orders_csv<R: io::Read>(r: R) -> Result<Vec<Order>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
    let mut out = Vec::new();
    for row in rdr.deserialize() {
        let o: CsvOrder = row?;
        out.push(o.into());
    }
    Ok(out)
}

#[derive(Serialize, Deserialize)]
struct CsvOrder {
    id: String,
    network: String,
    client: String,
    zone: Zone,
    weight_kg: f64,
    basket_value_usd: f64,
    week: u32,
}

impl From<&Order> for CsvOrder {
    fn from(o: &Order) -> Self {
        CsvOrder {
            id: o.id.clone(),
            network: o.network_id.clone(),
            client: o.client_id.clone(),
            zone: o.zone,
            weight_kg: o.weight_kg,
            basket_value_usd: o.basket_value_usd,
            week: o.week,
        }
    }
}

impl From<CsvOrder> for Order {
    fn from(o: CsvOrder) -> Self {
        Order {
            id: o.id,
            client_id: o.client,
            network_id: o.network,
            zone: o.zone,
            weight_kg: o.weight_kg,
            basket_value_usd: o.basket_value_usd,
            week: o.week,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::NetworkRole;

    fn net(id: &str, far_pct: f64) -> Network {
        Network {
            id: id.into(),
            role: NetworkRole::Reseller,
            supplies: vec![],
            urban_clients: 0,
            rural_clients: 0,
            weekly_orders: 0,
            far_rural_pct: far_pct,
            habit_weights: None,
        }
    }

    fn params(target: f64) -> GenerationParams {
        GenerationParams {
            order_counts: BTreeMap::new(),
            weight: RealDist::Uniform { min: 1.0, max: 60.0 },
            basket_value: RealDist::Uniform { min: 10.0, max: 500.0 },
            max_weight_kg: 65.0,
            deviation_threshold_pct: target,
            zone_sampling: ZoneSampling::Stratified,
            week: 0,
        }
    }

    fn orders_with_share(network: &str, far: usize, total: usize) -> Vec<Order> {
        (0..total)
            .map(|i| Order {
                id: format!("{i}"),
                client_id: "c".into(),
                network_id: network.into(),
                zone: if i < far { Zone::FarRural } else { Zone::Urban },
                weight_kg: 1.0,
                basket_value_usd: 1.0,
                week: 0,
            })
            .collect()
    }

    #[test]
    fn deviation_exact_target_passes() {
        let r = check_deviation(&orders_with_share("A", 30, 100), &params(10.0), &[net("A", 30.0)]);
        assert_eq!(r[0].rel_deviation_pct, Some(0.0));
        assert!(r[0].pass);
    }

    #[test]
    fn deviation_twenty_percent_fails() {
        let r = check_deviation(&orders_with_share("A", 36, 100), &params(10.0), &[net("A", 30.0)]);
        assert!((r[0].rel_deviation_pct.unwrap() - 20.0).abs() < 1e-9);
        assert!(!r[0].pass);
    }

    #[test]
    fn deviation_four_percent_passes() {
        let r = check_deviation(&orders_with_share("A", 26, 100), &params(10.0), &[net("A", 25.0)]);
        assert!((r[0].rel_deviation_pct.unwrap() - 4.0).abs() < 1e-9);
        assert!(r[0].pass);
    }

    #[test]
    fn zero_target_with_far_orders_is_undefined() {
        let r = check_deviation(&orders_with_share("A", 1, 100), &params(10.0), &[net("A", 0.0)]);
        assert_eq!(r[0].rel_deviation_pct, None);
        assert!(!r[0].pass);
        assert!(r[0].reason.as_deref().unwrap().contains("undefined target"));
        let r = check_deviation(&orders_with_share("A", 0, 100), &params(10.0), &[net("A", 0.0)]);
        assert!(r[0].pass);
    }

    #[test]
    fn orders_without_clients_is_an_error() {
        let mut p = params(10.0);
        p.order_counts.insert("A".into(), 5);
        let err = generate_orders(&[net("A", 30.0)], &[], &p, 1).unwrap_err();
        assert!(matches!(err, SimError::NoClients { .. }));
        p.order_counts.insert("A".into(), 0);
        assert!(generate_orders(&[net("A", 30.0)], &[], &p, 1).unwrap().is_empty());
    }

    #[test]
    fn csv_roundtrip() {
        let orders = orders_with_share("A", 2, 4);
        let mut buf = Vec::new();
        write_orders_csv(&mut buf, &orders).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("id,network,client,zone,weight_kg,basket_value_usd,week\n"));
        assert_eq!(read_orders_csv(&buf[..]).unwrap(), orders);
    }
}
