//! Rate cards, rate shopping and base-fee calibration.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::network::{Carrier, CarrierId, CarrierKind, Zone};
use crate::orders::Order;

/// Rate cards keyed by carrier id.
pub type RateBook = BTreeMap<CarrierId, RateCard>;

/// Linear tariff: `(base_fee + per_kg * weight) * zone_multiplier`, then the
/// drop-ship discount.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearRate {
    pub base_fee_usd: f64,
    pub per_kg_usd: f64,
    pub zone_multiplier: BTreeMap<Zone, f64>,
    pub dropship_discount_pct: f64,
}

impl LinearRate {
    pub fn multiplier(&self, zone: Zone) -> f64 {
        self.zone_multiplier.get(&zone).copied().unwrap_or(1.0)
    }

    pub fn list_price(&self, weight_kg: f64, zone: Zone) -> f64 {
        (self.base_fee_usd + self.per_kg_usd * weight_kg) * self.multiplier(zone)
    }

    pub fn discount_factor(&self) -> f64 {
        1.0 - self.dropship_discount_pct / 100.0
    }

    pub fn price(&self, weight_kg: f64, zone: Zone) -> f64 {
        self.list_price(weight_kg, zone) * self.discount_factor()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Pricing {
    Linear(LinearRate),
    /// Pickup pricing, independent of weight and zone.
    Flat { flat_fee_usd: f64, overdue_fee_usd: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RateCardSpec", into = "RateCardSpec")]
pub struct RateCard {
    pub carrier_id: CarrierId,
    pub pricing: Pricing,
    pub max_weight_kg: Option<f64>,
}

/// Serialized form of a [`RateCard`]; exactly one pricing mode may be set.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RateCardSpec {
    pub carrier: CarrierId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base_fee_usd: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_kg_usd: Option<f64>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub zone_multiplier: BTreeMap<Zone, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_weight_kg: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dropship_discount_pct: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flat_fee_usd: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub overdue_fee_usd: Option<f64>,
}

fn non_negative(what: &str, carrier: &str, x: f64) -> std::result::Result<f64, String> {
    if x.is_finite() && x >= 0.0 {
        Ok(x)
    } else {
        Err(format!("rate card {carrier}: {what} must be a non-negative number, got {x}"))
    }
}

impl TryFrom<RateCardSpec> for RateCard {
    type Error = String;

    fn try_from(s: RateCardSpec) -> std::result::Result<Self, String> {
        let id = s.carrier.as_str();
        let linear_set = s.base_fee_usd.is_some()
            || s.per_kg_usd.is_some()
            || !s.zone_multiplier.is_empty()
            || s.dropship_discount_pct.is_some();
        let flat_set = s.flat_fee_usd.is_some() || s.overdue_fee_usd.is_some();
        let pricing = match (linear_set, flat_set) {
            (true, true) => {
                return Err(format!("rate card {id}: both linear and flat pricing fields set"))
            }
            (false, false) => return Err(format!("rate card {id}: no pricing mode set")),
            (true, false) => {
                let base = non_negative("base_fee_usd", id, s.base_fee_usd.unwrap_or(0.0))?;
                let per_kg = non_negative("per_kg_usd", id, s.per_kg_usd.unwrap_or(0.0))?;
                if base == 0.0 && per_kg == 0.0 {
                    return Err(format!("rate card {id}: base_fee_usd and per_kg_usd are both zero"));
                }
                for (z, m) in &s.zone_multiplier {
                    if !(m.is_finite() && *m > 0.0) {
                        return Err(format!("rate card {id}: zone multiplier for {z} must be > 0"));
                    }
                }
                let d = s.dropship_discount_pct.unwrap_or(0.0);
                if !(d.is_finite() && (0.0..100.0).contains(&d)) {
                    return Err(format!("rate card {id}: dropship_discount_pct {d} outside [0, 100)"));
                }
                Pricing::Linear(LinearRate {
                    base_fee_usd: base,
                    per_kg_usd: per_kg,
                    zone_multiplier: s.zone_multiplier,
                    dropship_discount_pct: d,
                })
            }
            (false, true) => {
                let flat = non_negative("flat_fee_usd", id, s.flat_fee_usd.unwrap_or(0.0))?;
                let overdue = non_negative("overdue_fee_usd", id, s.overdue_fee_usd.unwrap_or(0.0))?;
                if flat + overdue <= 0.0 {
                    return Err(format!("rate card {id}: flat price must be positive"));
                }
                Pricing::Flat {
                    flat_fee_usd: flat,
                    overdue_fee_usd: overdue,
                }
            }
        };
        if let Some(cap) = s.max_weight_kg {
            if !(cap.is_finite() && cap > 0.0) {
                return Err(format!("rate card {id}: max_weight_kg must be > 0"));
            }
        }
        Ok(RateCard {
            carrier_id: s.carrier,
            pricing,
            max_weight_kg: s.max_weight_kg,
        })
    }
}

impl From<RateCard> for RateCardSpec {
    fn from(c: RateCard) -> Self {
        let mut s = RateCardSpec {
            carrier: c.carrier_id,
            base_fee_usd: None,
            per_kg_usd: None,
            zone_multiplier: BTreeMap::new(),
            max_weight_kg: c.max_weight_kg,
            dropship_discount_pct: None,
            flat_fee_usd: None,
            overdue_fee_usd: None,
        };
        match c.pricing {
            Pricing::Linear(l) => {
                s.base_fee_usd = Some(l.base_fee_usd);
                s.per_kg_usd = Some(l.per_kg_usd);
                s.zone_multiplier = l.zone_multiplier;
                if l.dropship_discount_pct != 0.0 {
                    s.dropship_discount_pct = Some(l.dropship_discount_pct);
                }
            }
            Pricing::Flat {
                flat_fee_usd,
                overdue_fee_usd,
            } => {
                s.flat_fee_usd = Some(flat_fee_usd);
                s.overdue_fee_usd = Some(overdue_fee_usd);
            }
        }
        s
    }
}

impl RateCard {
    pub fn price(&self, weight_kg: f64, zone: Zone) -> f64 {
        match &self.pricing {
            Pricing::Linear(l) => l.price(weight_kg, zone),
            Pricing::Flat {
                flat_fee_usd,
                overdue_fee_usd,
            } => flat_fee_usd + overdue_fee_usd,
        }
    }

    /// Checks the card against the kind of carrier it prices.
    pub fn check_kind(&self, kind: CarrierKind) -> Result<()> {
        let id = &self.carrier_id;
        match (&self.pricing, kind) {
            (Pricing::Flat { .. }, CarrierKind::PickupPoint) => Ok(()),
            (Pricing::Flat { .. }, _) => Err(SimError::invalid(format!(
                "rate card {id}: flat pricing is only valid for pickup_point carriers"
            ))),
            (Pricing::Linear(_), CarrierKind::PickupPoint) => Err(SimError::invalid(format!(
                "rate card {id}: pickup_point carriers use flat pricing"
            ))),
            (Pricing::Linear(l), k) if l.dropship_discount_pct != 0.0 && k != CarrierKind::SupplierTruck => {
                Err(SimError::invalid(format!(
                    "rate card {id}: dropship_discount_pct is only valid for supplier_truck carriers"
                )))
            }
            _ => Ok(()),
        }
    }
}

/// A priced delivery option for one order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Quote {
    pub carrier_id: CarrierId,
    pub price_usd: f64,
    pub transit_days: u32,
    pub guaranteed: bool,
}

/// Tightest of the carrier and rate-card weight caps.
pub fn weight_cap(carrier: &Carrier, card: &RateCard) -> Option<f64> {
    match (carrier.max_weight_kg, card.max_weight_kg) {
        (Some(a), Some(b)) => Some(a.min(b)),
        (a, b) => a.or(b),
    }
}

/// Carriers from `offered` that can serve the order's network and zone.
pub fn availability_for(order: &Order, carriers: &[Carrier], offered: &BTreeSet<CarrierId>) -> BTreeSet<CarrierId> {
    carriers
        .iter()
        .filter(|c| offered.contains(&c.id) && c.serves(&order.network_id, order.zone))
        .map(|c| c.id.clone())
        .collect()
}

/// Quotes every available carrier whose weight cap admits the order.
///
/// Results are sorted by ascending price, ties broken by carrier id.
pub fn rate_shop(
    order: &Order,
    carriers: &[Carrier],
    rate_cards: &RateBook,
    availability: &BTreeSet<CarrierId>,
) -> Vec<Quote> {
    let mut quotes: Vec<Quote> = carriers
        .iter()
        .filter(|c| availability.contains(&c.id))
        .filter_map(|c| {
            let card = rate_cards.get(&c.id)?;
            if weight_cap(c, card).is_some_and(|cap| order.weight_kg > cap) {
                return None;
            }
            Some(Quote {
                carrier_id: c.id.clone(),
                price_usd: card.price(order.weight_kg, order.zone),
                transit_days: c.base_transit_days,
                guaranteed: c.guaranteed,
            })
        })
        .collect();
    quotes.sort_by(|a, b| {
        a.price_usd
            .total_cmp(&b.price_usd)
            .then_with(|| a.carrier_id.cmp(&b.carrier_id))
    });
    quotes
}

/// Outcome of calibrating one carrier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationRow {
    pub carrier: CarrierId,
    pub target_usd: f64,
    pub achieved_usd: f64,
    /// Calibrated base fee, or the flat fee for pickup cards.
    pub base_fee_usd: f64,
    pub quoted_orders: usize,
}

/// Sets each targeted carrier's base fee (flat fee for pickup cards) so that
/// its mean quote over `sample` equals the target.
///
/// Per-kg rates, zone multipliers and discounts are held fixed, which makes
/// the mean price affine in the base fee and the solution closed-form. Orders
/// above a carrier's weight cap do not count towards its mean.
pub fn calibrate(
    rate_cards: &RateBook,
    carriers: &[Carrier],
    targets: &BTreeMap<CarrierId, f64>,
    sample: &[Order],
) -> Result<(RateBook, Vec<CalibrationRow>)> {
    if sample.is_empty() {
        return Err(SimError::Calibration("order sample is empty".into()));
    }
    let mut out = rate_cards.clone();
    let mut report = Vec::with_capacity(targets.len());
    for (carrier_id, &target) in targets {
        if !(target.is_finite() && target > 0.0) {
            return Err(SimError::Calibration(format!("target for {carrier_id} must be > 0")));
        }
        let carrier = carriers
            .iter()
            .find(|c| &c.id == carrier_id)
            .ok_or_else(|| SimError::Calibration(format!("unknown carrier {carrier_id}")))?;
        let card = out
            .get_mut(carrier_id)
            .ok_or_else(|| SimError::Calibration(format!("no rate card for {carrier_id}")))?;
        let cap = weight_cap(carrier, card);
        let admitted: Vec<&Order> = sample
            .iter()
            .filter(|o| cap.is_none_or(|c| o.weight_kg <= c))
            .collect();
        if admitted.is_empty() {
            return Err(SimError::InfeasibleCalibration {
                carrier: carrier_id.clone(),
                reason: "every sampled order exceeds the weight cap".into(),
            });
        }
        let n = admitted.len() as f64;
        let fee = match &mut card.pricing {
            Pricing::Linear(l) => {
                let mean_mult = admitted.iter().map(|o| l.multiplier(o.zone)).sum::<f64>() / n;
                let mean_kg_part =
                    admitted.iter().map(|o| l.per_kg_usd * o.weight_kg * l.multiplier(o.zone)).sum::<f64>() / n;
                let list_target = target / l.discount_factor();
                let base = (list_target - mean_kg_part) / mean_mult;
                if base < 0.0 {
                    return Err(SimError::InfeasibleCalibration {
                        carrier: carrier_id.clone(),
                        reason: format!(
                            "target {target} is below the per-kg component mean {:.4}",
                            mean_kg_part * l.discount_factor()
                        ),
                    });
                }
                if base == 0.0 && l.per_kg_usd == 0.0 {
                    return Err(SimError::InfeasibleCalibration {
                        carrier: carrier_id.clone(),
                        reason: "calibrated price would be zero".into(),
                    });
                }
                l.base_fee_usd = base;
                base
            }
            Pricing::Flat {
                flat_fee_usd,
                overdue_fee_usd,
            } => {
                let flat = target - *overdue_fee_usd;
                if flat < 0.0 {
                    return Err(SimError::InfeasibleCalibration {
                        carrier: carrier_id.clone(),
                        reason: format!("target {target} is below the overdue fee {overdue_fee_usd}"),
                    });
                }
                *flat_fee_usd = flat;
                flat
            }
        };
        let achieved = admitted.iter().map(|o| card.price(o.weight_kg, o.zone)).sum::<f64>() / n;
        report.push(CalibrationRow {
            carrier: carrier_id.clone(),
            target_usd: target,
            achieved_usd: achieved,
            base_fee_usd: fee,
            quoted_orders: admitted.len(),
        });
    }
    Ok((out, report))
}
