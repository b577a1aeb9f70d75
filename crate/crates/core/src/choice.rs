//! Per-order customer decision: accept one quote or abandon the basket.

use std::cmp::Ordering;
use std::collections::BTreeSet;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::network::{Carrier, CarrierId, Client};
use crate::orders::Order;
use crate::tariff::Quote;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChoicePolicy {
    /// Probability that a client takes a feasible habitual carrier outright.
    pub habit_stickiness: f64,
    /// Prefer guaranteed home delivery among equally priced quotes.
    #[serde(default = "default_true")]
    pub guaranteed_preference: bool,
    /// Multiplier applied to every client's price limit.
    #[serde(default = "default_one")]
    pub price_tolerance: f64,
    /// Probability of abandoning when a guaranteed habitual carrier is not offered.
    #[serde(default)]
    pub abandon_if_habit_missing_prob: f64,
}

fn default_true() -> bool {
    true
}

fn default_one() -> f64 {
    1.0
}

impl Default for ChoicePolicy {
    fn default() -> Self {
        ChoicePolicy {
            habit_stickiness: 0.0,
            guaranteed_preference: true,
            price_tolerance: 1.0,
            abandon_if_habit_missing_prob: 0.0,
        }
    }
}

impl ChoicePolicy {
    pub fn validate(&self) -> Result<()> {
        let prob = |x: f64| x.is_finite() && (0.0..=1.0).contains(&x);
        if !prob(self.habit_stickiness) {
            return Err(SimError::invalid("choice.habit_stickiness must be in [0, 1]"));
        }
        if !prob(self.abandon_if_habit_missing_prob) {
            return Err(SimError::invalid("choice.abandon_if_habit_missing_prob must be in [0, 1]"));
        }
        if !(self.price_tolerance > 0.0) {
            return Err(SimError::invalid("choice.price_tolerance must be > 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropReason {
    OverPriceLimit,
    HabitualAbsent,
    NoQuotes,
    DelayExceeded,
}

impl DropReason {
    pub const ALL: [DropReason; 4] = [
        DropReason::OverPriceLimit,
        DropReason::HabitualAbsent,
        DropReason::NoQuotes,
        DropReason::DelayExceeded,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            DropReason::OverPriceLimit => "over_price_limit",
            DropReason::HabitualAbsent => "habitual_absent",
            DropReason::NoQuotes => "no_quotes",
            DropReason::DelayExceeded => "delay_exceeded",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Decision {
    Selected {
        carrier_id: CarrierId,
        price_usd: f64,
        transit_days: u32,
    },
    Dropped(DropReason),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChoiceOutcome {
    pub order_id: String,
    pub result: Decision,
}

/// What the client knows beyond the quotes themselves.
#[derive(Debug, Clone, Copy)]
pub struct ChoiceContext<'a> {
    /// Carriers offered for this order before weight caps.
    pub available: &'a BTreeSet<CarrierId>,
    pub carriers: &'a [Carrier],
    /// Transit time the client considers normal; tolerance is added on top.
    pub expected_transit_days: u32,
}

/// Fastest transit among `quotes`, the default delivery expectation.
pub fn fastest_transit(quotes: &[Quote]) -> Option<u32> {
    quotes.iter().map(|q| q.transit_days).min()
}

/// Total order used by the cheapest-feasible rule.
pub fn cheaper(a: &Quote, b: &Quote, guaranteed_preference: bool) -> Ordering {
    a.price_usd
        .total_cmp(&b.price_usd)
        .then_with(|| {
            if guaranteed_preference {
                b.guaranteed.cmp(&a.guaranteed)
            } else {
                Ordering::Equal
            }
        })
        .then_with(|| a.transit_days.cmp(&b.transit_days))
        .then_with(|| a.carrier_id.cmp(&b.carrier_id))
}

/// Applies the rule cascade: no quotes, feasibility, habit, missing habit, cheapest.
///
/// Exactly two uniforms are drawn from `rng` per call, whatever the branch,
/// so outcomes of an order never shift the stream of later decisions.
pub fn choose<R: Rng + ?Sized>(
    order: &Order,
    quotes: &[Quote],
    ctx: &ChoiceContext<'_>,
    client: &Client,
    policy: &ChoicePolicy,
    rng: &mut R,
) -> ChoiceOutcome {
    let u_habit: f64 = rng.random();
    let u_abandon: f64 = rng.random();
    let result = decide(quotes, ctx, client, policy, u_habit, u_abandon);
    ChoiceOutcome {
        order_id: order.id.clone(),
        result,
    }
}

fn selected(q: &Quote) -> Decision {
    Decision::Selected {
        carrier_id: q.carrier_id.clone(),
        price_usd: q.price_usd,
        transit_days: q.transit_days,
    }
}

fn decide(
    quotes: &[Quote],
    ctx: &ChoiceContext<'_>,
    client: &Client,
    policy: &ChoicePolicy,
    u_habit: f64,
    u_abandon: f64,
) -> Decision {
    if quotes.is_empty() {
        return Decision::Dropped(DropReason::NoQuotes);
    }

    let limit = client.price_limit_usd * policy.price_tolerance;
    let max_transit = ctx
        .expected_transit_days
        .saturating_add(client.delay_tolerance_days);
    let feasible: Vec<&Quote> = quotes
        .iter()
        .filter(|q| q.price_usd <= limit && q.transit_days <= max_transit)
        .collect();
    if feasible.is_empty() {
        let min_price = quotes.iter().map(|q| q.price_usd).fold(f64::INFINITY, f64::min);
        return Decision::Dropped(if min_price > limit {
            DropReason::OverPriceLimit
        } else {
            DropReason::DelayExceeded
        });
    }

    if let Some(habit) = &client.habitual_carrier {
        if let Some(q) = feasible.iter().find(|q| &q.carrier_id == habit) {
            if u_habit < policy.habit_stickiness {
                return selected(q);
            }
        } else if !ctx.available.contains(habit) {
            let guaranteed = ctx.carriers.iter().any(|c| &c.id == habit && c.guaranteed);
            if guaranteed && u_abandon < policy.abandon_if_habit_missing_prob {
                return Decision::Dropped(DropReason::HabitualAbsent);
            }
        }
    }

    let best = feasible
        .into_iter()
        .min_by(|a, b| cheaper(a, b, policy.guaranteed_preference))
        .expect("feasible set is non-empty");
    selected(best)
}
