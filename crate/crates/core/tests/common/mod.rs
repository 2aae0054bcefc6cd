#![allow(dead_code)]

use nalgebra::DMatrix;
use proptest::test_runner::{Config, RngSeed};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use relay_auction::channel::LinkModel;
use relay_auction::{AuctionKind, NetworkScenario, Position, SystemParams};

pub fn default_system() -> SystemParams {
    SystemParams { bandwidth: 1e6, noise: 1e-11, pathloss_exponent: 4.0 }
}

pub fn fixed_config(cases: u32, seed: u64) -> Config {
    Config {
        cases,
        rng_seed: RngSeed::Fixed(seed),
        failure_persistence: None,
        ..Config::default()
    }
}

/// Users placed uniformly on `[-150, 150]²` around a relay at the origin.
pub fn random_scenario(seed: u64, users: usize, budget: f64) -> NetworkScenario {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pt = || Position::new(rng.gen_range(-150.0..150.0), rng.gen_range(-150.0..150.0));
    let nodes: Vec<_> = (0..users).map(|_| (pt(), pt())).collect();
    NetworkScenario::from_geometry(default_system(), budget, Position::new(0.0, 0.0), &nodes, &vec![0.01; users])
        .unwrap()
}

/// Scenarios in which every user can profit from the relay in `kind`.
pub fn regular_scenarios(count: usize, seed: u64, kind: AuctionKind) -> Vec<NetworkScenario> {
    let mut out = Vec::new();
    let mut s = seed;
    while out.len() < count {
        let users = 2 + (s % 4) as usize;
        let sc = random_scenario(s, users, [0.04, 0.1, 0.3][(s % 3) as usize]);
        s += 1;
        let fully = relay_auction::auction::Bidder::for_scenario(&sc, kind)
            .unwrap()
            .iter()
            .all(|b| b.critical.is_regular());
        if fully {
            out.push(sc);
        }
    }
    out
}

/// Dense scan of `f` on `[lo, hi]` followed by golden-section refinement
/// around the best grid point.
pub fn argmax(f: impl Fn(f64) -> f64, lo: f64, hi: f64, grid: usize) -> (f64, f64) {
    let step = (hi - lo) / grid as f64;
    let mut best = (lo, f(lo));
    for k in 1..=grid {
        let x = lo + k as f64 * step;
        let v = f(x);
        if v > best.1 {
            best = (x, v);
        }
    }
    let (mut a, mut b) = ((best.0 - step).max(lo), (best.0 + step).min(hi));
    let r = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..200 {
        let x1 = b - r * (b - a);
        let x2 = a + r * (b - a);
        if f(x1) >= f(x2) {
            b = x2;
        } else {
            a = x1;
        }
    }
    let x = 0.5 * (a + b);
    if f(x) >= best.1 {
        (x, f(x))
    } else {
        best
    }
}

/// Marginal rate from a central difference of the rate increase.
pub fn numeric_marginal(m: &LinkModel, p: f64) -> f64 {
    let h = 1e-7 * p.max(1e-9);
    (m.rate_increase(p + h) - m.rate_increase(p - h)) / (2.0 * h)
}

/// Exact two-user welfare maximum on `budget`: the best of the two corners
/// and every interior point where the marginal rates agree.
pub fn two_user_welfare_optimum(m: &[LinkModel], budget: f64) -> f64 {
    let value = |p: f64| m[0].rate_increase(p) + m[1].rate_increase(budget - p);
    let mut best = value(0.0).max(value(budget));
    let lo = m[0].breakeven_power().unwrap_or(f64::INFINITY);
    let hi = budget - m[1].breakeven_power().unwrap_or(f64::INFINITY);
    if lo < hi {
        // Marginal of user 0 falls and that of user 1 rises along the segment.
        let diff = |p: f64| m[0].marginal_rate(p) - m[1].marginal_rate(budget - p);
        let (mut a, mut b) = (lo * (1.0 + 1e-12) + 1e-300, hi * (1.0 - 1e-12));
        if diff(a) > 0.0 && diff(b) < 0.0 {
            for _ in 0..300 {
                let mid = 0.5 * (a + b);
                if diff(mid) > 0.0 {
                    a = mid;
                } else {
                    b = mid;
                }
            }
            best = best.max(value(0.5 * (a + b)));
        } else {
            best = best.max(value(a)).max(value(b));
        }
    }
    best
}

/// Spectral radius of the zero-diagonal best-response matrix via a dense eigensolve.
pub fn eigen_radius(factors: &[f64]) -> f64 {
    let n = factors.len();
    let f = DMatrix::from_fn(n, n, |i, j| if i == j { 0.0 } else { factors[i] });
    f.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max)
}
