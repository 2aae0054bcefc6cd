//! Centralized benchmarks: efficient, fair and VCG allocations of the relay budget.
//!
//! All three work on the reduced budget `P(1 − δ)`. The rate increase is zero
//! up to each user's breakeven power and concave after it, so the welfare
//! problem is non-convex; it is solved by exhaustive grids for up to three
//! users and by multistart pairwise refinement beyond that.

use std::f64::consts::LN_2;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::channel::LinkModel;
use crate::error::{invalid, Result};
use crate::numeric::{bisect_root, golden_section_max};
use crate::scenario::NetworkScenario;

/// Default slack `δ` on the relay budget.
pub const DEFAULT_DELTA: f64 = 0.01;
/// Default grid points per dimension.
pub const DEFAULT_GRID: usize = 4096;
const MULTISTARTS: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleAllocation {
    pub powers: Vec<f64>,
    /// Per-user rate increase, bits/s.
    pub rate_increase: Vec<f64>,
    pub total: f64,
    /// dΔR/dΔSNR for users with a positive rate increase.
    pub marginal: Vec<Option<f64>>,
}

impl OracleAllocation {
    fn from_powers(models: &[LinkModel], powers: Vec<f64>) -> Self {
        // Users the relay cannot help do not use it.
        let powers: Vec<f64> = models
            .iter()
            .zip(powers)
            .map(|(m, p)| if m.rate_increase(p) > 0.0 { p } else { 0.0 })
            .collect();
        let rate_increase: Vec<f64> = models.iter().zip(&powers).map(|(m, &p)| m.rate_increase(p)).collect();
        let marginal = models
            .iter()
            .zip(&powers)
            .zip(&rate_increase)
            .map(|((m, &p), &r)| (r > 0.0).then(|| m.marginal_per_snr(m.relayed_snr(p))))
            .collect();
        Self {
            total: rate_increase.iter().sum(),
            powers,
            rate_increase,
            marginal,
        }
    }

    pub fn used_power(&self) -> f64 {
        self.powers.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VcgResult {
    pub allocation: OracleAllocation,
    pub payments: Vec<f64>,
    /// Welfare maximizations run: one with everyone, one per removed user.
    pub optimizations: usize,
}

fn reduced_budget(scenario: &NetworkScenario, delta: f64) -> Result<f64> {
    scenario.validate()?;
    if !(0.0..1.0).contains(&delta) {
        return Err(invalid("delta", format!("must lie in [0, 1), got {delta}")));
    }
    Ok(scenario.relay_budget * (1.0 - delta))
}

fn welfare(models: &[LinkModel], powers: &[f64]) -> f64 {
    models.iter().zip(powers).map(|(m, &p)| m.rate_increase(p)).sum()
}

/// Allocation maximizing total rate increase on `P(1 − δ)`.
pub fn efficient_allocation(scenario: &NetworkScenario, delta: f64, grid_n: usize) -> Result<OracleAllocation> {
    let budget = reduced_budget(scenario, delta)?;
    if grid_n < 16 {
        return Err(invalid("grid_n", format!("must be at least 16, got {grid_n}")));
    }
    let models = scenario.models();
    let powers = maximize_welfare(&models, budget, grid_n);
    Ok(OracleAllocation::from_powers(&models, powers))
}

fn maximize_welfare(models: &[LinkModel], budget: f64, grid_n: usize) -> Vec<f64> {
    match models.len() {
        0 => Vec::new(),
        // Rate increase never decreases with power.
        1 => vec![budget],
        2 => two_user_grid(models, budget, grid_n),
        3 => {
            let start = three_user_grid(models, budget, grid_n);
            pairwise_refine(models, start)
        }
        _ => multistart(models, budget),
    }
}

fn two_user_grid(models: &[LinkModel], budget: f64, grid_n: usize) -> Vec<f64> {
    let split = |p: f64| models[0].rate_increase(p) + models[1].rate_increase(budget - p);
    let step = budget / (grid_n - 1) as f64;
    let (best_k, _) = (0..grid_n)
        .map(|k| (k, split(k as f64 * step)))
        .fold((0, f64::NEG_INFINITY), |acc, (k, v)| if v > acc.1 { (k, v) } else { acc });
    let lo = (best_k as f64 - 1.0).max(0.0) * step;
    let hi = ((best_k + 1) as f64 * step).min(budget);
    let grid_best = best_k as f64 * step;
    let (p, v) = golden_section_max(split, lo, hi, 1e-12);
    let p = if v > split(grid_best) { p } else { grid_best };
    vec![p, budget - p]
}

fn three_user_grid(models: &[LinkModel], budget: f64, grid_n: usize) -> Vec<f64> {
    let step = budget / (grid_n - 1) as f64;
    let mut best = (f64::NEG_INFINITY, vec![0.0; 3]);
    for i in 0..grid_n {
        let p0 = i as f64 * step;
        let r0 = models[0].rate_increase(p0);
        for j in 0..grid_n - i {
            let p1 = j as f64 * step;
            let p2 = (budget - p0 - p1).max(0.0);
            let v = r0 + models[1].rate_increase(p1) + models[2].rate_increase(p2);
            if v > best.0 {
                best = (v, vec![p0, p1, p2]);
            }
        }
    }
    best.1
}

/// Repeatedly re-splits the power of every pair of users until no split helps.
fn pairwise_refine(models: &[LinkModel], mut powers: Vec<f64>) -> Vec<f64> {
    const SPLIT_GRID: usize = 64;
    let n = models.len();
    for _ in 0..100 {
        let mut improved = false;
        for i in 0..n {
            for j in i + 1..n {
                let pool = powers[i] + powers[j];
                if pool <= 0.0 {
                    continue;
                }
                let split = |s: f64| models[i].rate_increase(s) + models[j].rate_increase(pool - s);
                let current = split(powers[i]);
                let step = pool / SPLIT_GRID as f64;
                let (k, _) = (0..=SPLIT_GRID)
                    .map(|k| (k, split(k as f64 * step)))
                    .fold((0, f64::NEG_INFINITY), |acc, (k, v)| if v > acc.1 { (k, v) } else { acc });
                let lo = (k as f64 - 1.0).max(0.0) * step;
                let hi = ((k + 1) as f64 * step).min(pool);
                let (mut s, mut v) = golden_section_max(split, lo, hi, 1e-12);
                let grid_v = split(k as f64 * step);
                if grid_v > v {
                    s = k as f64 * step;
                    v = grid_v;
                }
                if v > current * (1.0 + 1e-12) + 1e-9 {
                    powers[i] = s;
                    powers[j] = pool - s;
                    improved = true;
                }
            }
        }
        if !improved {
            break;
        }
    }
    powers
}

fn multistart(models: &[LinkModel], budget: f64) -> Vec<f64> {
    let n = models.len();
    let mut starts: Vec<Vec<f64>> = Vec::with_capacity(MULTISTARTS);
    // Whole budget to each of the users that gain most from it.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        models[b]
            .rate_increase(budget)
            .total_cmp(&models[a].rate_increase(budget))
    });
    for &i in order.iter().take(MULTISTARTS / 2) {
        let mut p = vec![0.0; n];
        p[i] = budget;
        starts.push(p);
    }
    starts.push(vec![budget / n as f64; n]);
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    while starts.len() < MULTISTARTS {
        let w: Vec<f64> = (0..n).map(|_| -rng.gen_range(f64::EPSILON..1.0).ln()).collect();
        let sum: f64 = w.iter().sum();
        starts.push(w.iter().map(|x| x / sum * budget).collect());
    }
    starts
        .into_iter()
        .map(|s| pairwise_refine(models, s))
        .map(|p| (welfare(models, &p), p))
        .fold((f64::NEG_INFINITY, Vec::new()), |acc, (v, p)| if v > acc.0 { (v, p) } else { acc })
        .1
}

/// Equal-marginal allocation on `P(1 − δ)`.
///
/// Participants share one value of `K = 1 + Γ_i + ΔSNR_i`, which equalizes
/// dΔR/dΔSNR at `c = W/(2 ln2 K)`. `K` is pushed as high as the budget allows.
/// A user takes part only while its surplus `ΔR_i − c·ΔSNR_i` stays positive;
/// users are ranked by the largest marginal at which that holds, and the
/// participants are the longest prefix of that ranking that remains valid.
pub fn fair_allocation(scenario: &NetworkScenario, delta: f64) -> Result<OracleAllocation> {
    let budget = reduced_budget(scenario, delta)?;
    let models = scenario.models();
    let mut ranked: Vec<(usize, f64)> = (0..models.len())
        .filter(|&i| models[i].breakeven_power().is_some_and(|p| p < budget))
        .map(|i| Ok((i, break_even_marginal(&models[i])?)))
        .collect::<Result<_>>()?;
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    for k in (1..=ranked.len()).rev() {
        let members: Vec<usize> = ranked[..k].iter().map(|r| r.0).collect();
        let level = equal_marginal_level(&models, &members, budget)?;
        let c = models[0].bandwidth / (2.0 * LN_2 * level);
        let valid = members
            .iter()
            .all(|&i| fair_surplus(&models[i], level - 1.0 - models[i].direct, c) > 0.0);
        if valid {
            let mut powers = vec![0.0; models.len()];
            for &i in &members {
                powers[i] = models[i]
                    .power_for_snr(level - 1.0 - models[i].direct)
                    .expect("level below every ceiling");
            }
            return Ok(OracleAllocation::from_powers(&models, powers));
        }
    }
    Ok(OracleAllocation::from_powers(&models, vec![0.0; models.len()]))
}

fn fair_surplus(model: &LinkModel, snr: f64, marginal: f64) -> f64 {
    model.rate_increase_at_snr(snr) - marginal * snr
}

/// Largest common marginal at which the user's surplus is still positive,
/// ignoring the relay's power limit.
pub fn break_even_marginal(model: &LinkModel) -> Result<f64> {
    let w = model.bandwidth;
    // Surplus with ΔSNR chosen so that dΔR/dΔSNR = c.
    let surplus = |c: f64| {
        let k = w / (2.0 * LN_2 * c);
        0.5 * w * k.log2() - w * (1.0 + model.direct).log2() - c * (k - 1.0 - model.direct)
    };
    let top = w / (2.0 * LN_2 * (1.0 + model.direct));
    let mut lo = 1e-6 * top;
    while surplus(lo) <= 0.0 {
        lo *= 1e-3;
    }
    bisect_root(surplus, lo, top, 1e-14)
}

/// Largest common `K` whose power demand fits `budget`.
pub fn equal_marginal_level(models: &[LinkModel], members: &[usize], budget: f64) -> Result<f64> {
    let floor = members.iter().map(|&i| 1.0 + models[i].direct).fold(f64::INFINITY, f64::min);
    let ceiling = members
        .iter()
        .map(|&i| 1.0 + models[i].direct + models[i].source_relay)
        .fold(f64::INFINITY, f64::min);
    let demand = |k: f64| -> f64 {
        members
            .iter()
            .map(|&i| models[i].power_for_snr(k - 1.0 - models[i].direct).unwrap_or(f64::INFINITY))
            .sum::<f64>()
            - budget
    };
    // Demand is zero at the floor and unbounded at the ceiling.
    let top = ceiling * (1.0 - 1e-15);
    if demand(top) <= 0.0 {
        return Ok(top);
    }
    bisect_root(demand, floor, top, 1e-15)
}

/// VCG auction: efficient allocation plus Clarke pivot payments.
pub fn vcg_auction(scenario: &NetworkScenario, delta: f64, grid_n: usize) -> Result<VcgResult> {
    let budget = reduced_budget(scenario, delta)?;
    if grid_n < 16 {
        return Err(invalid("grid_n", format!("must be at least 16, got {grid_n}")));
    }
    let models = scenario.models();
    let n = models.len();
    let mut full = maximize_welfare(&models, budget, grid_n);
    let mut without: Vec<(f64, Vec<f64>)> = (0..n)
        .map(|i| {
            let rest: Vec<LinkModel> = models.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, m)| *m).collect();
            let p = maximize_welfare(&rest, budget, grid_n);
            (welfare(&rest, &p), p)
        })
        .collect();
    let optimizations = n + 1;

    // A removed-user optimum is also feasible for the full problem.
    for (i, (value, p)) in without.iter().enumerate() {
        if *value > welfare(&models, &full) {
            let mut lifted = p.clone();
            lifted.insert(i, 0.0);
            full = lifted;
        }
    }
    let allocation = OracleAllocation::from_powers(&models, full);
    let payments = (0..n)
        .map(|i| {
            let others_here = allocation.total - allocation.rate_increase[i];
            // The efficient allocation restricted to the others is feasible without user i.
            let best_without = without[i].0.max(others_here);
            without[i].0 = best_without;
            best_without - others_here
        })
        .collect();
    Ok(VcgResult { allocation, payments, optimizations })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{Position, SystemParams};

    fn two_user(relay_y: f64) -> NetworkScenario {
        let sys = SystemParams { bandwidth: 1e6, noise: 1e-11, pathloss_exponent: 4.0 };
        NetworkScenario::from_geometry(
            sys,
            0.1,
            Position::new(80.0, relay_y),
            &[
                (Position::new(200.0, -25.0), Position::new(0.0, -25.0)),
                (Position::new(0.0, 25.0), Position::new(200.0, 25.0)),
            ],
            &[0.01, 0.01],
        )
        .unwrap()
    }

    #[test]
    fn far_relay_helps_nobody() {
        let s = two_user(1000.0);
        let e = efficient_allocation(&s, 0.01, 256).unwrap();
        assert_eq!(e.total, 0.0);
        assert_eq!(e.powers, vec![0.0, 0.0]);
        let f = fair_allocation(&s, 0.01).unwrap();
        assert_eq!(f.total, 0.0);
        assert_eq!(f.used_power(), 0.0);
        let v = vcg_auction(&s, 0.01, 256).unwrap();
        assert_eq!(v.payments, vec![0.0, 0.0]);
    }

    #[test]
    fn single_user_takes_everything() {
        let s = two_user(25.0).subset(&[1]);
        let e = efficient_allocation(&s, 0.01, 64).unwrap();
        assert!((e.powers[0] - 0.099).abs() < 1e-15);
        let v = vcg_auction(&s, 0.01, 64).unwrap();
        assert_eq!(v.payments, vec![0.0]);
        assert_eq!(v.optimizations, 2);
    }

    #[test]
    fn two_resolutions_agree() {
        let s = two_user(25.0);
        let fine = efficient_allocation(&s, 0.01, 4096).unwrap();
        let coarse = efficient_allocation(&s, 0.01, 64).unwrap();
        assert!((fine.total - coarse.total).abs() <= 1e-3 * fine.total);
        assert!(fine.used_power() <= 0.099 * (1.0 + 1e-12));
    }

    #[test]
    fn fair_equalizes_snr_for_equal_direct_links() {
        let s = two_user(-20.0);
        let f = fair_allocation(&s, 0.01).unwrap();
        let m = s.models();
        let d0 = m[0].relayed_snr(f.powers[0]);
        let d1 = m[1].relayed_snr(f.powers[1]);
        assert!(d0 > 0.0 && (d0 - d1).abs() < 1e-6 * d0);
        let (c0, c1) = (f.marginal[0].unwrap(), f.marginal[1].unwrap());
        assert!((c0 - c1).abs() < 1e-8 * c0);
        assert!((f.used_power() - 0.099).abs() < 1e-9);
    }

    #[test]
    fn rejects_bad_inputs() {
        let s = two_user(0.0);
        assert!(efficient_allocation(&s, 1.0, 64).is_err());
        assert!(efficient_allocation(&s, 0.01, 8).is_err());
        assert!(fair_allocation(&s, -0.1).is_err());
    }

    #[test]
    fn vcg_runs_i_plus_one_optimizations() {
        let s = two_user(0.0);
        let v = vcg_auction(&s, 0.01, 512).unwrap();
        assert_eq!(v.optimizations, 3);
        for (p, r) in v.payments.iter().zip(&v.allocation.rate_increase) {
            assert!(*p >= 0.0 && p <= r);
        }
    }
}
