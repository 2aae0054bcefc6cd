//! Equilibria of the share auctions and the best-response dynamics that reach them.
//!
//! Every best response is `b_i = f_i(π)(Σ_{j≠i} b_j + β)`, so synchronous
//! updates are the affine map `b(t) = F b(t−1) + fβ` with `F_ij = f_i` for
//! `j ≠ i` and a zero diagonal. Its fixed point has the closed form used by
//! [`solve_ne`]: with `S = Σ f_i/(1+f_i) < 1` the total bid is `βS/(1−S)` and
//! each user receives `f_i/(1+f_i)` of the budget.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::auction::{
    allocate, payment_for, AuctionKind, AuctionParams, Allocation, BestResponse, BidProfile, Bidder,
};
use crate::error::{invalid, Error, Result};
use crate::numeric::{bisect_predicate_log, bisect_root};
use crate::scenario::NetworkScenario;

/// Stopping rules for best-response iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationOptions {
    /// Residual threshold relative to `max(max_i b_i, β)`.
    pub tol: f64,
    pub max_iter: usize,
    /// Bids above `cap · β` count as divergence.
    pub cap: f64,
}

impl Default for IterationOptions {
    fn default() -> Self {
        Self { tol: 1e-10, max_iter: 100_000, cap: 1e12 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationTrace {
    /// `profiles[0]` is the starting profile.
    pub profiles: Vec<Vec<f64>>,
    /// Max-norm change between consecutive profiles; `residuals[t-1]` belongs to step `t`.
    pub residuals: Vec<f64>,
    pub converged: bool,
    pub diverged: bool,
}

impl IterationTrace {
    pub fn steps(&self) -> usize {
        self.residuals.len()
    }

    pub fn last(&self) -> &[f64] {
        self.profiles.last().map(Vec::as_slice).unwrap_or(&[])
    }
}

/// Why a price admits no equilibrium.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum NoEquilibrium {
    /// This user's demand cannot be met at the price.
    InfiniteDemand { user: usize },
    /// Shares `Σ f/(1+f)` reach or exceed the whole budget.
    Oversubscribed { share: f64 },
    /// Iteration left every bound.
    Diverged,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumResult {
    pub kind: AuctionKind,
    pub price: f64,
    pub reserve: f64,
    pub bids: BidProfile,
    pub allocation: Allocation,
    /// Best-response factors `f_i(π)`.
    pub factors: Vec<f64>,
    /// Per-user rate increase, bits/s.
    pub rate_increase: Vec<f64>,
    pub snr_increase: Vec<f64>,
    pub payments: Vec<f64>,
    pub payoffs: Vec<f64>,
    /// `Σ powers / P`.
    pub utilization: f64,
    /// Best-response rounds used; zero for the closed form.
    pub iterations: usize,
    /// Spectral radius of the best-response update matrix at this price.
    pub convergence_ratio: f64,
}

impl EquilibriumResult {
    pub fn total_rate_increase(&self) -> f64 {
        self.rate_increase.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum NeOutcome {
    Unique(Box<EquilibriumResult>),
    None(NoEquilibrium),
}

impl NeOutcome {
    pub fn equilibrium(&self) -> Option<&EquilibriumResult> {
        match self {
            NeOutcome::Unique(r) => Some(r),
            NeOutcome::None(_) => None,
        }
    }

    pub fn into_equilibrium(self) -> Option<EquilibriumResult> {
        match self {
            NeOutcome::Unique(r) => Some(*r),
            NeOutcome::None(_) => None,
        }
    }

    pub fn exists(&self) -> bool {
        matches!(self, NeOutcome::Unique(_))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceSearchResult {
    pub price: f64,
    pub utilization: f64,
    /// False when no price reaches the target; `utilization` is then the best achieved.
    pub feasible: bool,
    pub equilibrium: EquilibriumResult,
}

/// One auction kind run on one scenario, with each user's demand precomputed.
#[derive(Debug, Clone)]
pub struct Market<'a> {
    pub scenario: &'a NetworkScenario,
    pub kind: AuctionKind,
    pub bidders: Vec<Bidder>,
}

impl<'a> Market<'a> {
    pub fn new(scenario: &'a NetworkScenario, kind: AuctionKind) -> Result<Self> {
        scenario.validate()?;
        let bidders = Bidder::for_scenario(scenario, kind)?;
        Ok(Self { scenario, kind, bidders })
    }

    pub fn is_regular(&self) -> bool {
        self.bidders.iter().any(|b| b.critical.is_regular())
    }

    pub fn factors(&self, price: f64) -> std::result::Result<Vec<f64>, NoEquilibrium> {
        self.bidders
            .iter()
            .enumerate()
            .map(|(user, b)| match b.factor(price) {
                BestResponse::Infinite => Err(NoEquilibrium::InfiniteDemand { user }),
                r => Ok(r.value().unwrap_or(0.0)),
            })
            .collect()
    }

    /// Closed-form fixed point of the best responses at `price`.
    pub fn solve(&self, price: f64, reserve: f64) -> NeOutcome {
        let factors = match self.factors(price) {
            Ok(f) => f,
            Err(e) => return NeOutcome::None(e),
        };
        let share: f64 = factors.iter().map(|f| f / (1.0 + f)).sum();
        if share >= 1.0 {
            return NeOutcome::None(NoEquilibrium::Oversubscribed { share });
        }
        let total = reserve * share / (1.0 - share);
        let bids = factors.iter().map(|f| f / (1.0 + f) * (total + reserve)).collect();
        let bids = BidProfile::new(bids).expect("closed-form bids are finite and non-negative");
        let params = AuctionParams { kind: self.kind, price, reserve };
        NeOutcome::Unique(Box::new(self.evaluate(&params, bids, factors, 0)))
    }

    /// Equilibrium utilization at `price`, or `None` without an equilibrium.
    pub fn utilization(&self, price: f64) -> Option<f64> {
        let factors = self.factors(price).ok()?;
        let share: f64 = factors.iter().map(|f| f / (1.0 + f)).sum();
        (share < 1.0).then_some(share)
    }

    pub fn has_equilibrium(&self, price: f64) -> bool {
        self.utilization(price).is_some()
    }

    /// A price above which every user bids zero.
    fn price_ceiling(&self) -> f64 {
        let top = self
            .bidders
            .iter()
            .map(|b| b.critical.hat.max(b.critical.lower))
            .fold(0.0, f64::max);
        if top > 0.0 {
            4.0 * top
        } else {
            1.0
        }
    }

    /// Smallest price (to relative width `1e-10`) at which an equilibrium exists.
    pub fn existence_threshold(&self) -> f64 {
        let hi = self.price_ceiling();
        debug_assert!(self.has_equilibrium(hi));
        let lo = hi * 1e-15;
        if self.has_equilibrium(lo) {
            return lo;
        }
        bisect_predicate_log(|p| self.has_equilibrium(p), lo, hi, 1e-10).1
    }

    pub fn evaluate(&self, params: &AuctionParams, bids: BidProfile, factors: Vec<f64>, iterations: usize) -> EquilibriumResult {
        let budget = self.scenario.relay_budget;
        let allocation = allocate(&bids, params.reserve, budget);
        let n = self.bidders.len();
        let (mut dr, mut dsnr, mut pay, mut util) = (
            Vec::with_capacity(n),
            Vec::with_capacity(n),
            Vec::with_capacity(n),
            Vec::with_capacity(n),
        );
        for (b, &p) in self.bidders.iter().zip(&allocation.powers) {
            let r = b.model.rate_increase(p);
            let c = payment_for(params.kind, params.price, &b.model, p);
            dr.push(r);
            dsnr.push(b.model.relayed_snr(p));
            pay.push(c);
            util.push(r - c);
        }
        let utilization = allocation.total() / budget;
        let convergence_ratio = update_matrix_radius(&factors);
        EquilibriumResult {
            kind: params.kind,
            price: params.price,
            reserve: params.reserve,
            bids,
            allocation,
            factors,
            rate_increase: dr,
            snr_increase: dsnr,
            payments: pay,
            payoffs: util,
            utilization,
            iterations,
            convergence_ratio,
        }
    }

    /// Synchronous best-response rounds starting from `start`.
    pub fn iterate(&self, price: f64, reserve: f64, start: &BidProfile, opts: &IterationOptions) -> Result<IterationTrace> {
        if start.len() != self.bidders.len() {
            return Err(invalid(
                "b0",
                format!("{} bids for {} users", start.len(), self.bidders.len()),
            ));
        }
        let cap = opts.cap * reserve;
        let mut current = start.as_slice().to_vec();
        let mut trace = IterationTrace {
            profiles: vec![current.clone()],
            residuals: Vec::new(),
            converged: false,
            diverged: false,
        };
        for _ in 0..opts.max_iter {
            let total: f64 = current.iter().sum();
            let mut next = Vec::with_capacity(current.len());
            for (i, b) in self.bidders.iter().enumerate() {
                match b.respond(price, total - current[i], reserve) {
                    BestResponse::Infinite => {
                        trace.diverged = true;
                        return Ok(trace);
                    }
                    r => next.push(r.value().unwrap_or(0.0)),
                }
            }
            let residual = next
                .iter()
                .zip(&current)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            let scale = next.iter().copied().fold(reserve, f64::max);
            trace.residuals.push(residual);
            trace.profiles.push(next.clone());
            current = next;
            if current.iter().any(|&b| b > cap) {
                trace.diverged = true;
                return Ok(trace);
            }
            if residual <= opts.tol * scale {
                trace.converged = true;
                return Ok(trace);
            }
        }
        Ok(trace)
    }
}

/// Spectral radius of the zero-diagonal update matrix `F_ij = f_i (j ≠ i)`.
///
/// The Perron root `λ` solves `Σ f_i/(λ + f_i) = 1`; it is zero when fewer than
/// two users bid.
pub fn update_matrix_radius(factors: &[f64]) -> f64 {
    let active: Vec<f64> = factors.iter().copied().filter(|&f| f > 0.0).collect();
    if active.len() < 2 {
        return 0.0;
    }
    let secular = |lambda: f64| active.iter().map(|f| f / (lambda + f)).sum::<f64>() - 1.0;
    // secular(0) = n − 1 > 0 and secular(Σ f) < 0.
    let hi: f64 = active.iter().sum();
    bisect_root(secular, 0.0, hi, 1e-15).unwrap_or(f64::NAN)
}

pub fn iterate_best_response(
    scenario: &NetworkScenario,
    params: &AuctionParams,
    start: &BidProfile,
    opts: &IterationOptions,
) -> Result<IterationTrace> {
    params.validate()?;
    if opts.tol <= 0.0 {
        return Err(invalid("tol", "must be > 0"));
    }
    Market::new(scenario, params.kind)?.iterate(params.price, params.reserve, start, opts)
}

/// Unique equilibrium at the given price, from the closed-form fixed point.
pub fn solve_ne(scenario: &NetworkScenario, params: &AuctionParams) -> Result<NeOutcome> {
    params.validate()?;
    Ok(Market::new(scenario, params.kind)?.solve(params.price, params.reserve))
}

/// Equilibrium found by iterating from `starts` seeded positive profiles.
///
/// Returns [`NoEquilibrium::Diverged`] if any run diverges or fails to settle,
/// or if two runs settle more than `1e-6` apart.
pub fn solve_ne_by_iteration(
    scenario: &NetworkScenario,
    params: &AuctionParams,
    starts: usize,
    opts: &IterationOptions,
) -> Result<NeOutcome> {
    params.validate()?;
    let market = Market::new(scenario, params.kind)?;
    let mut found: Option<(Vec<f64>, usize)> = None;
    for seed in 0..starts.max(1) as u64 {
        let start = random_positive_profile(scenario.len(), params.reserve, seed);
        let trace = market.iterate(params.price, params.reserve, &start, opts)?;
        if !trace.converged {
            return Ok(NeOutcome::None(NoEquilibrium::Diverged));
        }
        let end = trace.last().to_vec();
        match &found {
            None => found = Some((end, trace.steps())),
            Some((first, _)) => {
                let gap = first.iter().zip(&end).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                if gap > 1e-6 * first.iter().copied().fold(params.reserve, f64::max) {
                    return Ok(NeOutcome::None(NoEquilibrium::Diverged));
                }
            }
        }
    }
    let (bids, steps) = found.expect("at least one start");
    let factors = match market.factors(params.price) {
        Ok(f) => f,
        Err(e) => return Ok(NeOutcome::None(e)),
    };
    let bids = BidProfile::new(bids)?;
    Ok(NeOutcome::Unique(Box::new(market.evaluate(params, bids, factors, steps))))
}

/// Deterministic positive starting profile in `[0.1β, 10β]`.
pub fn random_positive_profile(n: usize, reserve: f64, seed: u64) -> BidProfile {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bids = (0..n).map(|_| reserve * 10f64.powf(rng.gen_range(-1.0..1.0))).collect();
    BidProfile::new(bids).expect("positive bids")
}

/// Smallest price above which the auction has a unique equilibrium.
pub fn threshold_price(scenario: &NetworkScenario, kind: AuctionKind) -> Result<f64> {
    let market = Market::new(scenario, kind)?;
    if !market.is_regular() {
        return Err(Error::NotRegular { kind: kind.name() });
    }
    Ok(market.existence_threshold())
}

/// Largest price whose equilibrium uses at least `target` of the relay budget.
///
/// Equilibrium utilization does not increase with the price, so the prices
/// meeting the target form an interval starting at the existence threshold.
/// Picking its upper end wastes the least budget beyond the target.
pub fn calibrate_price(scenario: &NetworkScenario, kind: AuctionKind, target: f64, reserve: f64) -> Result<PriceSearchResult> {
    if !(target > 0.0 && target < 1.0) {
        return Err(invalid("target", format!("must lie in (0, 1), got {target}")));
    }
    if !(reserve > 0.0 && reserve.is_finite()) {
        return Err(invalid("reserve", format!("must be > 0, got {reserve}")));
    }
    let market = Market::new(scenario, kind)?;
    Ok(market.calibrate(target, reserve))
}

impl Market<'_> {
    pub fn calibrate(&self, target: f64, reserve: f64) -> PriceSearchResult {
        let floor = self.existence_threshold();
        let best = self.utilization(floor).unwrap_or(0.0);
        let price = if best < target {
            floor
        } else {
            let ceiling = self.price_ceiling();
            let (meets, _) = bisect_predicate_log(
                |p| self.utilization(p).map_or(true, |u| u < target),
                floor,
                ceiling,
                1e-12,
            );
            meets
        };
        let equilibrium = self
            .solve(price, reserve)
            .into_equilibrium()
            .expect("price lies in the equilibrium region");
        PriceSearchResult {
            price,
            utilization: equilibrium.utilization,
            feasible: equilibrium.utilization >= target,
            equilibrium,
        }
    }
}

/// Per-step contraction ratio fitted to the tail of a converged trace.
///
/// Least-squares slope of `ln(residual)` over the second half of the steps
/// whose residual is still above round-off.
pub fn estimate_geometric_rate(trace: &IterationTrace) -> Result<f64> {
    const MIN_STEPS: usize = 5;
    let scale = trace
        .profiles
        .iter()
        .flat_map(|p| p.iter().copied())
        .fold(0.0, f64::max)
        .max(f64::MIN_POSITIVE);
    let usable: Vec<(f64, f64)> = trace
        .residuals
        .iter()
        .enumerate()
        .filter(|&(_, &r)| r > 1e-13 * scale)
        .map(|(t, &r)| (t as f64, r.ln()))
        .collect();
    if trace.steps() < MIN_STEPS || usable.len() < MIN_STEPS {
        return Err(Error::TooFewSteps { got: usable.len().min(trace.steps()), need: MIN_STEPS });
    }
    let tail = &usable[usable.len() - (usable.len() / 2).max(MIN_STEPS)..];
    let n = tail.len() as f64;
    let mean_t = tail.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_y = tail.iter().map(|p| p.1).sum::<f64>() / n;
    let (num, den) = tail.iter().fold((0.0, 0.0), |(num, den), (t, y)| {
        (num + (t - mean_t) * (y - mean_y), den + (t - mean_t) * (t - mean_t))
    });
    Ok((num / den).exp())
}

/// Largest relative payoff gain any user finds by scanning `points` unilateral
/// bids on `[0, 10·b_i* + β]`. Gains are measured against `max(|U_i*|, 1)`.
pub fn max_deviation_gain(scenario: &NetworkScenario, eq: &EquilibriumResult, points: usize) -> Result<f64> {
    let market = Market::new(scenario, eq.kind)?;
    let params = AuctionParams { kind: eq.kind, price: eq.price, reserve: eq.reserve };
    let bids = eq.bids.as_slice();
    let mut worst = 0.0f64;
    for (i, b) in market.bidders.iter().enumerate() {
        let others = eq.bids.others(i);
        let here = crate::auction::payoff_for(&b.model, bids[i], others, &params, scenario.relay_budget);
        let top = 10.0 * bids[i] + eq.reserve;
        for k in 0..points {
            let bid = top * k as f64 / (points - 1).max(1) as f64;
            let there = crate::auction::payoff_for(&b.model, bid, others, &params, scenario.relay_budget);
            worst = worst.max((there - here) / here.abs().max(1.0));
        }
    }
    Ok(worst)
}
