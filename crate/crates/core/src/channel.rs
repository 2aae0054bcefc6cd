//! Amplify-and-forward link model: geometry, SNRs and rates.
//!
//! All SNRs are linear (not dB). Rates are in bits/s.

use std::f64::consts::LN_2;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// A node location in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Position {
    pub x: f64,
    pub y: f64,
}

impl Position {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Position) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Radio constants shared by every link.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    /// Signal bandwidth `W` in Hz.
    pub bandwidth: f64,
    /// Noise power `σ²` in watts, identical on every link.
    pub noise: f64,
    pub pathloss_exponent: f64,
}

impl SystemParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("bandwidth", self.bandwidth),
            ("noise", self.noise),
            ("pathloss_exponent", self.pathloss_exponent),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(invalid(name, format!("must be finite and > 0, got {v}")));
            }
        }
        Ok(())
    }
}

/// One source-destination pair as seen by the relay.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UserLink {
    pub id: usize,
    /// Source transmit power `P_s` in watts.
    pub source_power: f64,
    pub gain_sd: f64,
    pub gain_sr: f64,
    pub gain_rd: f64,
}

impl UserLink {
    pub fn validate(&self) -> Result<()> {
        if !(self.source_power.is_finite() && self.source_power > 0.0) {
            return Err(invalid(
                "source_power",
                format!("user {}: must be > 0, got {}", self.id, self.source_power),
            ));
        }
        for (name, g) in [
            ("gain_sd", self.gain_sd),
            ("gain_sr", self.gain_sr),
            ("gain_rd", self.gain_rd),
        ] {
            if !(g.is_finite() && g > 0.0) {
                return Err(invalid(name, format!("user {}: must be > 0, got {g}", self.id)));
            }
        }
        Ok(())
    }

    /// Noise-normalized view of the link used by all per-user math.
    pub fn model(&self, sys: &SystemParams) -> LinkModel {
        LinkModel {
            direct: self.source_power * self.gain_sd / sys.noise,
            source_relay: self.source_power * self.gain_sr / sys.noise,
            relay_dest: self.gain_rd / sys.noise,
            bandwidth: sys.bandwidth,
        }
    }
}

/// Link quantities normalized by the noise power.
///
/// With `x = P_rd · relay_dest` the relayed SNR is `x·a / (x + a + 1)` where
/// `a = source_relay`, a Möbius function of the relay power.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkModel {
    /// Direct SNR `Γ_sd`.
    pub direct: f64,
    /// Source-to-relay SNR `P_s G_sr / σ²`; the relayed SNR never reaches it.
    pub source_relay: f64,
    /// `G_rd / σ²` in 1/W.
    pub relay_dest: f64,
    pub bandwidth: f64,
}

impl LinkModel {
    pub fn relayed_snr(&self, relay_power: f64) -> f64 {
        debug_assert!(relay_power >= 0.0);
        let x = relay_power * self.relay_dest;
        let a = self.source_relay;
        x * a / (x + a + 1.0)
    }

    /// d(relayed SNR)/d(relay power).
    pub fn relayed_snr_slope(&self, relay_power: f64) -> f64 {
        let x = relay_power * self.relay_dest;
        let a = self.source_relay;
        let den = x + a + 1.0;
        self.relay_dest * a * (a + 1.0) / (den * den)
    }

    /// Relay power that yields relayed SNR `snr`, or `None` at or above the ceiling.
    pub fn power_for_snr(&self, snr: f64) -> Option<f64> {
        let a = self.source_relay;
        if snr <= 0.0 {
            return Some(0.0);
        }
        if snr >= a {
            return None;
        }
        Some(snr * (a + 1.0) / (a - snr) / self.relay_dest)
    }

    pub fn direct_rate(&self) -> f64 {
        self.bandwidth * (1.0 + self.direct).log2()
    }

    pub fn coop_rate(&self, relay_power: f64) -> f64 {
        0.5 * self.bandwidth * (1.0 + self.direct + self.relayed_snr(relay_power)).log2()
    }

    /// Relayed SNR needed before cooperation stops losing rate: `Γ² + Γ`.
    pub fn breakeven_snr(&self) -> f64 {
        self.direct * self.direct + self.direct
    }

    /// Rate increase as a function of the relayed SNR.
    ///
    /// Written as `W/2 · log2(1 + (Δ - Γ - Γ²)/(1 + Γ)²)` so the sign flips
    /// exactly at the breakeven SNR.
    pub fn rate_increase_at_snr(&self, snr: f64) -> f64 {
        let one_plus = 1.0 + self.direct;
        let excess = (snr - self.breakeven_snr()) / (one_plus * one_plus);
        if excess <= 0.0 {
            return 0.0;
        }
        0.5 * self.bandwidth * excess.ln_1p() / LN_2
    }

    pub fn rate_increase(&self, relay_power: f64) -> f64 {
        self.rate_increase_at_snr(self.relayed_snr(relay_power))
    }

    /// dΔR/dΔSNR on the cooperating branch: `W / (2 ln2 (1 + Γ + Δ))`.
    pub fn marginal_per_snr(&self, snr: f64) -> f64 {
        self.bandwidth / (2.0 * LN_2 * (1.0 + self.direct + snr))
    }

    /// dΔR/dP_rd; zero where the rate increase is clamped at zero.
    pub fn marginal_rate(&self, relay_power: f64) -> f64 {
        let snr = self.relayed_snr(relay_power);
        if snr <= self.breakeven_snr() {
            return 0.0;
        }
        self.marginal_per_snr(snr) * self.relayed_snr_slope(relay_power)
    }

    /// Smallest relay power at which cooperation matches the direct rate.
    pub fn breakeven_power(&self) -> Option<f64> {
        self.power_for_snr(self.breakeven_snr())
    }
}

/// Power-law gain `d^(-exponent)` between two nodes.
pub fn path_gain(a: &Position, b: &Position, exponent: f64) -> Result<f64> {
    if !(exponent.is_finite() && exponent > 0.0) {
        return Err(invalid("exponent", format!("must be > 0, got {exponent}")));
    }
    let d = a.distance(b);
    if !(d > 0.0) || !d.is_finite() {
        return Err(Error::DegenerateGeometry(format!(
            "nodes at ({}, {}) and ({}, {}) have distance {d}",
            a.x, a.y, b.x, b.y
        )));
    }
    Ok(d.powf(-exponent))
}

pub fn direct_snr(link: &UserLink, sys: &SystemParams) -> f64 {
    link.model(sys).direct
}

pub fn relayed_snr(link: &UserLink, relay_power: f64, sys: &SystemParams) -> Result<f64> {
    check_power(relay_power)?;
    Ok(link.model(sys).relayed_snr(relay_power))
}

pub fn direct_rate(link: &UserLink, sys: &SystemParams) -> f64 {
    link.model(sys).direct_rate()
}

pub fn coop_rate(link: &UserLink, relay_power: f64, sys: &SystemParams) -> Result<f64> {
    check_power(relay_power)?;
    Ok(link.model(sys).coop_rate(relay_power))
}

pub fn rate_increase(link: &UserLink, relay_power: f64, sys: &SystemParams) -> Result<f64> {
    check_power(relay_power)?;
    Ok(link.model(sys).rate_increase(relay_power))
}

pub fn breakeven_power(link: &UserLink, sys: &SystemParams) -> Option<f64> {
    link.model(sys).breakeven_power()
}

fn check_power(p: f64) -> Result<()> {
    if p < 0.0 || p.is_nan() {
        Err(Error::NegativePower(p))
    } else {
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sys() -> SystemParams {
        SystemParams {
            bandwidth: 1e6,
            noise: 1e-11,
            pathloss_exponent: 4.0,
        }
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
    }

    /// User 2 of the two-user layout with the relay at (80, 25).
    fn user2_at_25() -> UserLink {
        let r = Position::new(80.0, 25.0);
        let s = Position::new(0.0, 25.0);
        let d = Position::new(200.0, 25.0);
        UserLink {
            id: 1,
            source_power: 0.01,
            gain_sd: path_gain(&s, &d, 4.0).unwrap(),
            gain_sr: path_gain(&s, &r, 4.0).unwrap(),
            gain_rd: path_gain(&r, &d, 4.0).unwrap(),
        }
    }

    #[test]
    fn path_gain_values() {
        let o = Position::new(0.0, 0.0);
        assert_eq!(path_gain(&o, &Position::new(1.0, 0.0), 4.0).unwrap(), 1.0);
        let g = path_gain(&o, &Position::new(200.0, 0.0), 4.0).unwrap();
        assert!(rel(g, 6.25e-10) < 1e-14);
        let g = path_gain(&Position::new(200.0, -25.0), &Position::new(80.0, 0.0), 4.0).unwrap();
        assert!(rel(g, 1.0 / (15025.0f64 * 15025.0)) < 1e-14);
        assert!(rel(g, 4.43e-9) < 1e-3);
    }

    #[test]
    fn path_gain_rejects_coincident_nodes() {
        let p = Position::new(3.0, 4.0);
        assert!(matches!(path_gain(&p, &p, 4.0), Err(Error::DegenerateGeometry(_))));
        assert!(path_gain(&p, &Position::new(0.0, 0.0), 0.0).is_err());
    }

    #[test]
    fn direct_snr_values() {
        let mut link = user2_at_25();
        assert!(rel(direct_snr(&link, &sys()), 0.625) < 1e-12);
        let base = direct_snr(&link, &sys());
        link.source_power *= 2.0;
        assert!(rel(direct_snr(&link, &sys()), 2.0 * base) < 1e-15);
    }

    #[test]
    fn relayed_snr_user2_reference() {
        let link = user2_at_25();
        let m = link.model(&sys());
        assert!(rel(m.source_relay, 24.4140625) < 1e-12);
        assert!(rel(0.1 * m.relay_dest, 48.225308641975) < 1e-10);
        let g = relayed_snr(&link, 0.1, &sys()).unwrap();
        assert!((g - 16.0).abs() < 0.1, "got {g}");
        assert_eq!(relayed_snr(&link, 0.0, &sys()).unwrap(), 0.0);
        assert!(matches!(relayed_snr(&link, -1e-3, &sys()), Err(Error::NegativePower(_))));
        let far = relayed_snr(&link, 1e9, &sys()).unwrap();
        assert!(far < m.source_relay && rel(far, m.source_relay) < 1e-6);
    }

    #[test]
    fn rates() {
        let m = LinkModel { direct: 1.0, source_relay: 1.0, relay_dest: 1.0, bandwidth: 1.0 };
        assert_eq!(m.direct_rate(), 1.0);
        let zero = LinkModel { direct: 0.0, ..m };
        assert_eq!(zero.direct_rate(), 0.0);
        let link = user2_at_25();
        assert!(rel(direct_rate(&link, &sys()), 1e6 * 1.625f64.log2()) < 1e-12);
        assert!(rel(direct_rate(&link, &sys()), 7.00e5) < 2e-3);
        let coop = coop_rate(&link, 0.1, &sys()).unwrap();
        assert!(rel(coop, 2.07e6) < 5e-3, "{coop}");
    }

    #[test]
    fn coop_rate_at_zero_is_half_direct() {
        let link = user2_at_25();
        let c = coop_rate(&link, 0.0, &sys()).unwrap();
        assert_eq!(c, direct_rate(&link, &sys()) / 2.0);
    }

    #[test]
    fn rate_increase_user2_full_power() {
        let link = user2_at_25();
        assert_eq!(rate_increase(&link, 0.0, &sys()).unwrap(), 0.0);
        let dr = rate_increase(&link, 0.1, &sys()).unwrap();
        // Full power bounds the equilibrium value from above.
        assert!((dr / 1e6 - 1.37).abs() < 0.01, "{dr}");
    }

    #[test]
    fn rate_increase_zero_below_breakeven_snr() {
        let link = user2_at_25();
        let m = link.model(&sys());
        let t = m.breakeven_snr();
        for k in 0..=100 {
            let snr = t * k as f64 / 100.0;
            assert_eq!(m.rate_increase_at_snr(snr), 0.0);
        }
        assert!(m.rate_increase_at_snr(t * 1.001) > 0.0);
    }

    #[test]
    fn breakeven_edge_cases() {
        let m = LinkModel { direct: 0.0, source_relay: 2.0, relay_dest: 1e10, bandwidth: 1e6 };
        assert_eq!(m.breakeven_power(), Some(0.0));
        let m = LinkModel { direct: 1.0, source_relay: 1.5, relay_dest: 1e10, bandwidth: 1e6 };
        assert_eq!(m.breakeven_power(), None);
    }

    #[test]
    fn breakeven_user1_matches_scan() {
        let r = Position::new(80.0, -25.0);
        let s = Position::new(200.0, -25.0);
        let d = Position::new(0.0, -25.0);
        let link = UserLink {
            id: 0,
            source_power: 0.01,
            gain_sd: path_gain(&s, &d, 4.0).unwrap(),
            gain_sr: path_gain(&s, &r, 4.0).unwrap(),
            gain_rd: path_gain(&r, &d, 4.0).unwrap(),
        };
        let m = link.model(&sys());
        assert!(rel(m.breakeven_snr(), 0.625 * 0.625 + 0.625) < 1e-12);
        let pb = m.breakeven_power().unwrap();
        // Dense scan: first grid point with a positive increase.
        let n = 1_000_000;
        let step = 0.1 / n as f64;
        let first = (0..=n).map(|k| k as f64 * step).find(|&p| m.rate_increase(p) > 0.0).unwrap();
        assert!(first >= pb && first - pb <= step * 1.0001, "scan {first} vs closed form {pb}");
    }
}
