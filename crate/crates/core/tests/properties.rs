mod common;

use common::*;
use proptest::prelude::*;
use relay_auction::auction::{allocate, best_response, power_payoff, Bidder};
use relay_auction::dynamics::{
    calibrate_price, max_deviation_gain, threshold_price, update_matrix_radius, Market,
};
use relay_auction::oracles::{efficient_allocation, fair_allocation, vcg_auction};
use relay_auction::{AuctionKind, AuctionParams, BestResponse, BidProfile};

fn kind_of(flag: bool) -> AuctionKind {
    if flag {
        AuctionKind::Power
    } else {
        AuctionKind::Snr
    }
}

/// A price strictly inside the band where some user bids a positive amount.
fn interior_price(market: &Market<'_>, u: f64) -> Option<f64> {
    let th = market.existence_threshold();
    let top = market.bidders.iter().map(|b| b.critical.hat).fold(0.0, f64::max);
    (top > th * 1.0001).then(|| th * (top / th).powf(u))
}

proptest! {
    #![proptest_config(fixed_config(64, 0xa110c))]

    #[test]
    fn allocation_is_scale_invariant(
        bids in prop::collection::vec(0.0f64..100.0, 1..8),
        reserve in 0.01f64..10.0,
        k in 0.01f64..1000.0,
    ) {
        let b = BidProfile::new(bids.clone()).unwrap();
        let a = allocate(&b, reserve, 0.1);
        let s = allocate(&b.scaled(k), k * reserve, 0.1);
        for (x, y) in a.powers.iter().zip(&s.powers) {
            prop_assert!((x - y).abs() <= 4.0 * f64::EPSILON * x.abs().max(1e-300));
        }
        prop_assert!(a.total() < 0.1);
    }

    #[test]
    fn relayed_snr_is_monotone_and_bounded(seed in 0u64..10_000, n in 1usize..6) {
        let s = random_scenario(seed, n, 1.0);
        for m in s.models() {
            let mut prev = 0.0;
            for k in 0..=200 {
                let p = k as f64 / 200.0;
                let d = m.relayed_snr(p);
                prop_assert!(d >= prev && d < m.source_relay);
                prop_assert!(m.rate_increase(p) >= 0.0);
                prev = d;
            }
        }
    }

    #[test]
    fn best_response_matches_numeric_argmax(
        seed in 0u64..10_000,
        power in any::<bool>(),
        u in 0.02f64..0.98,
        others in 0.0f64..20.0,
    ) {
        let kind = kind_of(power);
        let s = random_scenario(seed, 1, 0.1);
        let b = Bidder::new(&s.users[0], kind, 0.1, &s.system).unwrap();
        prop_assume!(b.critical.is_regular());
        let price = b.critical.lower * (b.critical.hat / b.critical.lower).powf(u);
        let params = AuctionParams::new(kind, price, 1.0).unwrap();
        let r = best_response(&s.users[0], others, &params, 0.1, &s.system).unwrap();
        let p_closed = match r {
            BestResponse::Zero => 0.0,
            BestResponse::Finite(bid) => bid / (bid + others + 1.0) * 0.1,
            BestResponse::Infinite => 0.1,
        };
        let m = s.models()[0];
        let (p_num, best) = argmax(|p| power_payoff(&m, kind, price, p), 0.0, 0.1, 20_000);
        let closed_value = power_payoff(&m, kind, price, p_closed);
        prop_assert!((p_closed - p_num).abs() <= 1e-6 * 0.1,
            "closed {p_closed} numeric {p_num} values {closed_value} {best}");
    }

    #[test]
    fn equilibrium_admits_no_profitable_deviation(
        seed in 0u64..10_000,
        n in 2usize..5,
        power in any::<bool>(),
        u in 0.05f64..0.95,
    ) {
        let kind = kind_of(power);
        let s = random_scenario(seed, n, 0.1);
        let market = Market::new(&s, kind).unwrap();
        prop_assume!(market.is_regular());
        let Some(price) = interior_price(&market, u) else { return Ok(()); };
        let eq = market.solve(price, 1.0).into_equilibrium().unwrap();
        prop_assert!(eq.allocation.total() < s.relay_budget);
        let gain = max_deviation_gain(&s, &eq, 2001).unwrap();
        prop_assert!(gain <= 1e-6, "deviation gain {gain}");
    }

    #[test]
    fn vcg_payments_are_nonnegative_and_rational(seed in 0u64..10_000, n in 1usize..4) {
        let s = random_scenario(seed, n, 0.1);
        let v = vcg_auction(&s, 0.01, 256).unwrap();
        for (pay, r) in v.payments.iter().zip(&v.allocation.rate_increase) {
            prop_assert!(*pay >= 0.0);
            prop_assert!(r - pay >= -1e-9 * r.max(1.0));
        }
        prop_assert!(v.allocation.used_power() <= 0.099 * (1.0 + 1e-12));
    }

    #[test]
    fn two_user_efficient_allocation_is_optimal(seed in 0u64..10_000) {
        let s = random_scenario(seed, 2, 0.1);
        let e = efficient_allocation(&s, 0.01, 4096).unwrap();
        let exact = two_user_welfare_optimum(&s.models(), 0.099);
        prop_assert!(e.total >= exact * (1.0 - 1e-9) - 1e-6);
        prop_assert!(e.total <= exact * (1.0 + 1e-9) + 1e-6);
    }

    #[test]
    fn radius_matches_eigensolve(factors in prop::collection::vec(0.0f64..5.0, 2..7)) {
        let r = update_matrix_radius(&factors);
        let e = eigen_radius(&factors);
        prop_assert!((r - e).abs() <= 1e-9 * e.max(1e-12), "secular {r} eigen {e}");
    }

    #[test]
    fn utilization_falls_with_price(seed in 0u64..10_000, n in 1usize..6, power in any::<bool>()) {
        let s = random_scenario(seed, n, 0.3);
        let market = Market::new(&s, kind_of(power)).unwrap();
        let th = market.existence_threshold();
        let mut prev = f64::INFINITY;
        for k in 0..60 {
            let price = th * 1.1f64.powi(k);
            let u = market.utilization(price).unwrap();
            prop_assert!(u <= prev + 1e-12 && u < 1.0);
            prev = u;
        }
    }

    #[test]
    fn calibration_flag_is_honest(seed in 0u64..10_000, n in 1usize..6, power in any::<bool>()) {
        let s = random_scenario(seed, n, 0.1);
        let r = calibrate_price(&s, kind_of(power), 0.99, 1.0).unwrap();
        prop_assert_eq!(r.feasible, r.utilization >= 0.99);
        prop_assert_eq!(r.utilization, r.equilibrium.utilization);
    }

    #[test]
    fn fair_allocation_equalizes_marginals(seed in 0u64..10_000, n in 1usize..6) {
        let s = random_scenario(seed, n, 0.1);
        let f = fair_allocation(&s, 0.01).unwrap();
        let marginals: Vec<f64> = f.marginal.iter().flatten().copied().collect();
        for m in &marginals {
            prop_assert!((m - marginals[0]).abs() <= 1e-8 * marginals[0]);
        }
        for (p, r) in f.powers.iter().zip(&f.rate_increase) {
            prop_assert_eq!(*p > 0.0, *r > 0.0);
        }
        prop_assert!(f.used_power() <= 0.099 * (1.0 + 1e-9));
    }
}

#[test]
fn threshold_brackets_existence() {
    for s in regular_scenarios(10, 500, AuctionKind::Snr) {
        let th = threshold_price(&s, AuctionKind::Snr).unwrap();
        let m = Market::new(&s, AuctionKind::Snr).unwrap();
        assert!(!m.has_equilibrium(th * (1.0 - 1e-8)));
        assert!(m.has_equilibrium(th));
    }
}

#[test]
fn numeric_marginal_agrees_with_analytic() {
    let s = random_scenario(7, 4, 1.0);
    for m in s.models() {
        if let Some(pb) = m.breakeven_power() {
            for p in [pb * 1.5, pb * 3.0, pb + 0.5] {
                let a = m.marginal_rate(p);
                assert!((a - numeric_marginal(&m, p)).abs() <= 1e-5 * a);
            }
        }
    }
}
