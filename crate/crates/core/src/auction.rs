//! Share-auction mechanics for the relay's power.
//!
//! The relay splits its budget in proportion to the bids plus a reserve bid
//! `β`. Because a user's allocated power ranges over `[0, P)` no matter what
//! the others bid, each user's best response reduces to a target power (or
//! target SNR) that is independent of the others. That makes every best
//! response linear in `b_{-i} + β`, with a factor `f = p*/(P - p*)`.
//!
//! In the SNR auction the factor has a closed form; in the power auction it
//! comes from a one-dimensional maximization of the exact payoff.

use std::f64::consts::LN_2;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::channel::{LinkModel, SystemParams, UserLink};
use crate::error::{invalid, Error, Result};
use crate::numeric::bisect_root;
use crate::scenario::NetworkScenario;

/// Relative bracket width used when locating critical prices.
const PRICE_RTOL: f64 = 1e-13;
/// Relative bracket width used when locating an interior power demand.
const POWER_RTOL: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AuctionKind {
    /// Users pay `π · ΔSNR`.
    Snr,
    /// Users pay `π · P_rd`.
    Power,
}

impl AuctionKind {
    pub fn name(self) -> &'static str {
        match self {
            AuctionKind::Snr => "snr",
            AuctionKind::Power => "power",
        }
    }
}

impl fmt::Display for AuctionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for AuctionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "snr" => Ok(AuctionKind::Snr),
            "power" => Ok(AuctionKind::Power),
            other => Err(invalid("auction", format!("expected `snr` or `power`, got `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AuctionParams {
    pub kind: AuctionKind,
    /// Price `π` per unit of SNR or power.
    pub price: f64,
    /// Reserve bid `β` held by the relay.
    pub reserve: f64,
}

impl AuctionParams {
    pub fn new(kind: AuctionKind, price: f64, reserve: f64) -> Result<Self> {
        let p = Self { kind, price, reserve };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.price.is_finite() && self.price > 0.0) {
            return Err(invalid("price", format!("must be finite and > 0, got {}", self.price)));
        }
        if !(self.reserve.is_finite() && self.reserve > 0.0) {
            return Err(invalid("reserve", format!("must be finite and > 0, got {}", self.reserve)));
        }
        Ok(())
    }
}

/// Non-negative, finite bids, one per user.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct BidProfile(Vec<f64>);

impl BidProfile {
    pub fn new(bids: Vec<f64>) -> Result<Self> {
        if let Some(b) = bids.iter().find(|b| !(b.is_finite() && **b >= 0.0)) {
            return Err(invalid("bids", format!("every bid must be finite and >= 0, got {b}")));
        }
        Ok(Self(bids))
    }

    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.0.iter().sum()
    }

    /// Sum of all bids except user `i`'s.
    pub fn others(&self, i: usize) -> f64 {
        self.0
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != i)
            .map(|(_, b)| b)
            .sum()
    }

    pub fn scaled(&self, k: f64) -> Self {
        Self(self.0.iter().map(|b| b * k).collect())
    }
}

impl TryFrom<Vec<f64>> for BidProfile {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<BidProfile> for Vec<f64> {
    fn from(b: BidProfile) -> Self {
        b.0
    }
}

/// Relay power per user, in watts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Allocation {
    pub powers: Vec<f64>,
}

impl Allocation {
    pub fn total(&self) -> f64 {
        self.powers.iter().sum()
    }
}

/// A best response expressed either as a factor on `b_{-i} + β` or as a bid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum BestResponse {
    Zero,
    Finite(f64),
    /// The demanded SNR or power cannot be reached even with the whole budget.
    Infinite,
}

impl BestResponse {
    pub fn value(self) -> Option<f64> {
        match self {
            BestResponse::Zero => Some(0.0),
            BestResponse::Finite(v) => Some(v),
            BestResponse::Infinite => None,
        }
    }

    pub fn is_infinite(self) -> bool {
        matches!(self, BestResponse::Infinite)
    }

    fn from_factor(f: f64) -> Self {
        if f > 0.0 {
            BestResponse::Finite(f)
        } else {
            BestResponse::Zero
        }
    }
}

/// The two prices that split a user's best response into its branches.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriticalPrices {
    /// At or below this price the user's demand cannot be met.
    pub lower: f64,
    /// At or above this price the user prefers direct transmission.
    pub hat: f64,
}

impl CriticalPrices {
    pub fn is_regular(&self) -> bool {
        self.hat > self.lower
    }
}

/// Proportional share rule: `P_i = b_i / (Σ b + β) · P`.
pub fn allocate(bids: &BidProfile, reserve: f64, budget: f64) -> Allocation {
    let denom = bids.total() + reserve;
    Allocation {
        powers: bids.as_slice().iter().map(|b| b / denom * budget).collect(),
    }
}

pub fn payment(
    kind: AuctionKind,
    price: f64,
    link: &UserLink,
    relay_power: f64,
    sys: &SystemParams,
) -> Result<f64> {
    if relay_power < 0.0 || relay_power.is_nan() {
        return Err(Error::NegativePower(relay_power));
    }
    Ok(payment_for(kind, price, &link.model(sys), relay_power))
}

pub(crate) fn payment_for(kind: AuctionKind, price: f64, model: &LinkModel, relay_power: f64) -> f64 {
    match kind {
        AuctionKind::Snr => price * model.relayed_snr(relay_power),
        AuctionKind::Power => price * relay_power,
    }
}

/// Payoff `ΔR_i − C_i` when user `i` bids `bid` against opponents bidding `others` in total.
pub fn payoff(
    link: &UserLink,
    bid: f64,
    others: f64,
    params: &AuctionParams,
    budget: f64,
    sys: &SystemParams,
) -> f64 {
    payoff_for(&link.model(sys), bid, others, params, budget)
}

pub(crate) fn payoff_for(model: &LinkModel, bid: f64, others: f64, params: &AuctionParams, budget: f64) -> f64 {
    if bid <= 0.0 {
        return 0.0;
    }
    let p = bid / (bid + others + params.reserve) * budget;
    power_payoff(model, params.kind, params.price, p)
}

/// Payoff as a function of the allocated power rather than the bid.
pub fn power_payoff(model: &LinkModel, kind: AuctionKind, price: f64, relay_power: f64) -> f64 {
    model.rate_increase(relay_power) - payment_for(kind, price, model, relay_power)
}

/// `g(π) = π(1+Γ) − W/2 (log2(2π ln2 (1+Γ)² / W) + 1/ln2)`.
///
/// Equals the SNR-auction payoff at the unconstrained optimum `1+Γ+ΔSNR = W/(2π ln2)`.
pub fn g_snr(link: &UserLink, price: f64, sys: &SystemParams) -> f64 {
    g_snr_for(&link.model(sys), price)
}

pub(crate) fn g_snr_for(model: &LinkModel, price: f64) -> f64 {
    let w = model.bandwidth;
    let k = 1.0 + model.direct;
    price * k - 0.5 * w * ((2.0 * price * LN_2 * k * k / w).log2() + 1.0 / LN_2)
}

/// Price at which `g` is stationary: `W / (2 ln2 (1+Γ))`.
pub(crate) fn g_snr_stationary(model: &LinkModel) -> f64 {
    model.bandwidth / (2.0 * LN_2 * (1.0 + model.direct))
}

pub fn snr_critical_prices(link: &UserLink, budget: f64, sys: &SystemParams) -> Result<CriticalPrices> {
    snr_critical_prices_for(&link.model(sys), budget)
}

pub(crate) fn snr_critical_prices_for(model: &LinkModel, budget: f64) -> Result<CriticalPrices> {
    let max_snr = model.relayed_snr(budget);
    let lower = model.bandwidth / (2.0 * LN_2 * (1.0 + model.direct + max_snr));
    // g → +∞ as π → 0⁺ and g(π*) = −W/2·log2(1+Γ) ≤ 0, so the smallest root is in (0, π*].
    let stationary = g_snr_stationary(model);
    let g = |p: f64| g_snr_for(model, p);
    let mut lo = 1e-12 * stationary;
    let mut tries = 0;
    while g(lo) <= 0.0 {
        lo *= 1e-3;
        tries += 1;
        if tries > 20 {
            return Err(Error::RootFinding("g has no positive value near zero".into()));
        }
    }
    let hat = bisect_root(g, lo, stationary, PRICE_RTOL)?;
    Ok(CriticalPrices { lower, hat })
}

/// SNR-auction best-response factor from precomputed critical prices.
pub fn snr_factor(model: &LinkModel, critical: &CriticalPrices, price: f64, budget: f64) -> BestResponse {
    let CriticalPrices { lower, hat } = *critical;
    if !critical.is_regular() {
        return if price < hat {
            BestResponse::Infinite
        } else {
            BestResponse::Zero
        };
    }
    if price <= lower {
        return BestResponse::Infinite;
    }
    if price >= hat {
        return BestResponse::Zero;
    }
    let wanted = model.bandwidth / (2.0 * price * LN_2) - 1.0 - model.direct;
    let a = model.source_relay;
    let full = budget * model.relay_dest;
    let den = full * a / wanted - full - a - 1.0;
    if !(den > 0.0) {
        return BestResponse::Infinite;
    }
    BestResponse::from_factor((a + 1.0) / den)
}

pub fn snr_best_response_factor(
    link: &UserLink,
    price: f64,
    budget: f64,
    sys: &SystemParams,
) -> Result<BestResponse> {
    let model = link.model(sys);
    let critical = snr_critical_prices_for(&model, budget)?;
    Ok(snr_factor(&model, &critical, price, budget))
}

/// Power a user would buy at `price` if the power auction let it pick directly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PowerDemand {
    None,
    Interior(f64),
    /// Payoff still rising at the full budget.
    Saturated,
}

/// Exact-payoff demand in the power auction.
///
/// The rate increase is zero up to the breakeven power and concave after it,
/// so the payoff `ΔR(p) − πp` is maximized either at zero, at the budget, or
/// where the marginal rate equals the price.
pub fn power_demand(model: &LinkModel, price: f64, budget: f64) -> PowerDemand {
    let Some(start) = model.breakeven_power().filter(|&p| p < budget) else {
        return PowerDemand::None;
    };
    let at_budget = model.marginal_rate(budget);
    if at_budget >= price {
        return if power_payoff(model, AuctionKind::Power, price, budget) > 0.0 {
            PowerDemand::Saturated
        } else {
            PowerDemand::None
        };
    }
    // Marginal just past the kink, from the smooth branch.
    let marginal = |p: f64| model.marginal_per_snr(model.relayed_snr(p)) * model.relayed_snr_slope(p);
    if marginal(start) <= price {
        return PowerDemand::None;
    }
    let p = match bisect_root(|p| marginal(p) - price, start, budget, POWER_RTOL) {
        Ok(p) => p,
        Err(_) => return PowerDemand::None,
    };
    if power_payoff(model, AuctionKind::Power, price, p) > 0.0 {
        PowerDemand::Interior(p)
    } else {
        PowerDemand::None
    }
}

pub fn power_factor(model: &LinkModel, price: f64, budget: f64) -> BestResponse {
    match power_demand(model, price, budget) {
        PowerDemand::None => BestResponse::Zero,
        PowerDemand::Saturated => BestResponse::Infinite,
        PowerDemand::Interior(p) if p >= budget => BestResponse::Infinite,
        PowerDemand::Interior(p) => BestResponse::from_factor(p / (budget - p)),
    }
}

pub fn power_best_response_factor(link: &UserLink, price: f64, budget: f64, sys: &SystemParams) -> BestResponse {
    power_factor(&link.model(sys), price, budget)
}

/// Best payoff over all allocations `p ∈ [breakeven, P]` at `price`, not clamped at zero.
fn best_cooperative_payoff(model: &LinkModel, price: f64, budget: f64, start: f64) -> f64 {
    let marginal = |p: f64| model.marginal_per_snr(model.relayed_snr(p)) * model.relayed_snr_slope(p);
    let p = if marginal(budget) >= price {
        budget
    } else if marginal(start) <= price {
        start
    } else {
        bisect_root(|p| marginal(p) - price, start, budget, POWER_RTOL).unwrap_or(start)
    };
    power_payoff(model, AuctionKind::Power, price, p)
}

pub fn power_critical_prices(link: &UserLink, budget: f64, sys: &SystemParams) -> Result<CriticalPrices> {
    power_critical_prices_for(&link.model(sys), budget)
}

pub(crate) fn power_critical_prices_for(model: &LinkModel, budget: f64) -> Result<CriticalPrices> {
    let Some(start) = model.breakeven_power().filter(|&p| p < budget) else {
        return Ok(CriticalPrices { lower: 0.0, hat: 0.0 });
    };
    let lower = model.marginal_rate(budget);
    // The best payoff is decreasing in π: positive near zero, non-positive at
    // the marginal just past the kink.
    let top = model.marginal_per_snr(model.breakeven_snr()) * model.relayed_snr_slope(start);
    let h = |pi: f64| best_cooperative_payoff(model, pi, budget, start);
    let bottom = 1e-12 * top;
    if h(bottom) <= 0.0 {
        return Ok(CriticalPrices { lower, hat: 0.0 });
    }
    let hat = bisect_root(h, bottom, top, PRICE_RTOL)?;
    Ok(CriticalPrices { lower, hat })
}

/// A user's demand profile in one auction, with critical prices cached.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bidder {
    pub model: LinkModel,
    pub kind: AuctionKind,
    pub budget: f64,
    pub critical: CriticalPrices,
}

impl Bidder {
    pub fn new(link: &UserLink, kind: AuctionKind, budget: f64, sys: &SystemParams) -> Result<Self> {
        let model = link.model(sys);
        let critical = match kind {
            AuctionKind::Snr => snr_critical_prices_for(&model, budget)?,
            AuctionKind::Power => power_critical_prices_for(&model, budget)?,
        };
        Ok(Self { model, kind, budget, critical })
    }

    pub fn for_scenario(scenario: &NetworkScenario, kind: AuctionKind) -> Result<Vec<Self>> {
        scenario
            .users
            .iter()
            .map(|u| Self::new(u, kind, scenario.relay_budget, &scenario.system))
            .collect()
    }

    pub fn factor(&self, price: f64) -> BestResponse {
        match self.kind {
            AuctionKind::Snr => snr_factor(&self.model, &self.critical, price, self.budget),
            AuctionKind::Power => power_factor(&self.model, price, self.budget),
        }
    }

    /// Best-response bid against opponents bidding `others` in total.
    pub fn respond(&self, price: f64, others: f64, reserve: f64) -> BestResponse {
        scale_factor(self.factor(price), others, reserve)
    }
}

/// Turns a best-response factor into a bid: `f · (b_{-i} + β)`.
pub fn scale_factor(factor: BestResponse, others: f64, reserve: f64) -> BestResponse {
    match factor {
        BestResponse::Finite(f) => BestResponse::Finite(f * (others + reserve)),
        other => other,
    }
}

/// Best-response bid `f(π)·(b_{-i} + β)`; `others` is `Σ_{j≠i} b_j`.
pub fn best_response(
    link: &UserLink,
    others: f64,
    params: &AuctionParams,
    budget: f64,
    sys: &SystemParams,
) -> Result<BestResponse> {
    params.validate()?;
    let bidder = Bidder::new(link, params.kind, budget, sys)?;
    Ok(bidder.respond(params.price, others, params.reserve))
}

pub fn is_snr_regular(scenario: &NetworkScenario) -> Result<bool> {
    is_regular(scenario, AuctionKind::Snr)
}

pub fn is_power_regular(scenario: &NetworkScenario) -> Result<bool> {
    is_regular(scenario, AuctionKind::Power)
}

pub fn is_regular(scenario: &NetworkScenario, kind: AuctionKind) -> Result<bool> {
    Ok(Bidder::for_scenario(scenario, kind)?
        .iter()
        .any(|b| b.critical.is_regular()))
}
