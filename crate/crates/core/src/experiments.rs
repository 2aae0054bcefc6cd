//! The two-user relay-placement sweep, the random multi-user study, and report output.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::auction::AuctionKind;
use crate::channel::{Position, SystemParams};
use crate::dynamics::{calibrate_price, PriceSearchResult};
use crate::error::{invalid, Error, Result};
use crate::oracles::vcg_auction;
use crate::scenario::NetworkScenario;

/// Identifier of the generator behind random topologies.
pub const RNG_ID: &str = "rand_chacha::ChaCha8Rng(seed_from_u64)";

fn default_system() -> SystemParams {
    SystemParams { bandwidth: 1e6, noise: 1e-11, pathloss_exponent: 4.0 }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TwoUserSweepSpec {
    pub system: SystemParams,
    /// `(source, destination)` per user.
    pub nodes: Vec<(Position, Position)>,
    pub source_power: f64,
    pub relay_budget: f64,
    pub relay_x: f64,
    pub y_min: f64,
    pub y_max: f64,
    pub step: f64,
    pub reserve: f64,
    pub target: f64,
    pub delta: f64,
    pub grid: usize,
}

impl Default for TwoUserSweepSpec {
    fn default() -> Self {
        Self {
            system: default_system(),
            nodes: vec![
                (Position::new(200.0, -25.0), Position::new(0.0, -25.0)),
                (Position::new(0.0, 25.0), Position::new(200.0, 25.0)),
            ],
            source_power: 0.01,
            relay_budget: 0.1,
            relay_x: 80.0,
            y_min: -200.0,
            y_max: 200.0,
            step: 5.0,
            reserve: 1.0,
            target: 0.99,
            delta: 0.01,
            grid: 4096,
        }
    }
}

impl TwoUserSweepSpec {
    pub fn validate(&self) -> Result<()> {
        self.system.validate()?;
        if !(self.step > 0.0 && self.step.is_finite()) {
            return Err(invalid("step", format!("must be > 0, got {}", self.step)));
        }
        if !(self.y_max >= self.y_min) {
            return Err(invalid("y_max", "must not be below y_min"));
        }
        if self.nodes.is_empty() {
            return Err(invalid("nodes", "at least one user is required"));
        }
        Ok(())
    }

    /// Relay ordinates visited by the sweep, in increasing order.
    pub fn positions(&self) -> Vec<f64> {
        let count = ((self.y_max - self.y_min) / self.step + 1e-9).floor() as usize + 1;
        (0..count).map(|k| self.y_min + k as f64 * self.step).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MultiUserSpec {
    pub system: SystemParams,
    pub users: usize,
    /// Sources and destinations are uniform on `[-half_width, half_width]²`.
    pub half_width: f64,
    pub relay: Position,
    pub source_power: f64,
    pub budgets: Vec<f64>,
    pub topologies: usize,
    pub seed: u64,
    pub reserve: f64,
    pub target: f64,
    /// Adds the VCG benchmark; `None` turns it on for at most three users.
    pub vcg: Option<bool>,
    pub delta: f64,
    pub grid: usize,
}

impl Default for MultiUserSpec {
    fn default() -> Self {
        Self {
            system: default_system(),
            users: 20,
            half_width: 150.0,
            relay: Position::new(0.0, 0.0),
            source_power: 0.01,
            budgets: vec![0.04, 0.1, 0.3, 1.0],
            topologies: 100,
            seed: 1,
            reserve: 1.0,
            target: 0.99,
            vcg: None,
            delta: 0.01,
            grid: 512,
        }
    }
}

impl MultiUserSpec {
    pub fn validate(&self) -> Result<()> {
        self.system.validate()?;
        if self.users == 0 || self.topologies == 0 || self.budgets.is_empty() {
            return Err(invalid("spec", "users, topologies and budgets must be non-empty"));
        }
        if !(self.half_width > 0.0) {
            return Err(invalid("half_width", format!("must be > 0, got {}", self.half_width)));
        }
        Ok(())
    }

    fn vcg_enabled(&self) -> bool {
        self.vcg.unwrap_or(self.users <= 3)
    }
}

/// One mechanism's outcome at a sweep point. Rates are in bits/s/Hz.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MechanismSummary {
    pub total: f64,
    pub per_user: Vec<f64>,
    /// Fraction of the relay budget allocated.
    pub utilization: f64,
    /// Price charged; zero for VCG.
    pub price: f64,
    /// Variance of the strictly positive per-user rate increases.
    pub variance: f64,
    /// Share of the averaged runs whose price met the utilization target.
    pub feasible: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    /// Relay ordinate (m) or relay budget (W).
    pub coordinate: f64,
    pub vcg: Option<MechanismSummary>,
    pub power: MechanismSummary,
    pub snr: MechanismSummary,
}

/// Population variance over the strictly positive entries.
pub fn positive_increase_variance(values: &[f64]) -> f64 {
    let positive: Vec<f64> = values.iter().copied().filter(|&v| v > 0.0).collect();
    if positive.len() < 2 {
        return 0.0;
    }
    let n = positive.len() as f64;
    let mean = positive.iter().sum::<f64>() / n;
    positive.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n
}

pub fn build_two_user_scenario(spec: &TwoUserSweepSpec, relay_y: f64) -> Result<NetworkScenario> {
    if relay_y < spec.y_min || relay_y > spec.y_max {
        return Err(invalid(
            "relay_y",
            format!("{relay_y} outside [{}, {}]", spec.y_min, spec.y_max),
        ));
    }
    NetworkScenario::from_geometry(
        spec.system,
        spec.relay_budget,
        Position::new(spec.relay_x, relay_y),
        &spec.nodes,
        &vec![spec.source_power; spec.nodes.len()],
    )
}

fn auction_summary(run: &PriceSearchResult, bandwidth: f64) -> MechanismSummary {
    let per_user: Vec<f64> = run.equilibrium.rate_increase.iter().map(|r| r / bandwidth).collect();
    MechanismSummary {
        total: per_user.iter().sum(),
        variance: positive_increase_variance(&per_user),
        utilization: run.utilization,
        price: run.price,
        feasible: if run.feasible { 1.0 } else { 0.0 },
        per_user,
    }
}

fn vcg_summary(scenario: &NetworkScenario, delta: f64, grid: usize) -> Result<MechanismSummary> {
    let w = scenario.system.bandwidth;
    let v = vcg_auction(scenario, delta, grid)?;
    let per_user: Vec<f64> = v.allocation.rate_increase.iter().map(|r| r / w).collect();
    Ok(MechanismSummary {
        total: per_user.iter().sum(),
        variance: positive_increase_variance(&per_user),
        utilization: v.allocation.used_power() / scenario.relay_budget,
        price: 0.0,
        feasible: 1.0,
        per_user,
    })
}

/// Both auctions at their calibrated prices, plus VCG, at every relay ordinate.
pub fn run_two_user_sweep(spec: &TwoUserSweepSpec) -> Result<Vec<ReportRow>> {
    spec.validate()?;
    spec.positions()
        .into_par_iter()
        .map(|y| {
            let scenario = build_two_user_scenario(spec, y)?;
            let w = spec.system.bandwidth;
            let power = calibrate_price(&scenario, AuctionKind::Power, spec.target, spec.reserve)?;
            let snr = calibrate_price(&scenario, AuctionKind::Snr, spec.target, spec.reserve)?;
            Ok(ReportRow {
                coordinate: y,
                vcg: Some(vcg_summary(&scenario, spec.delta, spec.grid)?),
                power: auction_summary(&power, w),
                snr: auction_summary(&snr, w),
            })
        })
        .collect()
}

/// Topologies drawn in order from one generator seeded with `spec.seed`.
///
/// Each user takes source `x, y` then destination `x, y`; a destination that
/// lands exactly on its source is drawn again.
pub fn random_topologies(spec: &MultiUserSpec) -> Vec<Vec<(Position, Position)>> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let h = spec.half_width;
    let point = |rng: &mut ChaCha8Rng| Position::new(rng.gen_range(-h..=h), rng.gen_range(-h..=h));
    (0..spec.topologies)
        .map(|_| {
            (0..spec.users)
                .map(|_| {
                    let s = point(&mut rng);
                    let mut d = point(&mut rng);
                    while d == s || d == spec.relay || s == spec.relay {
                        d = point(&mut rng);
                    }
                    (s, d)
                })
                .collect()
        })
        .collect()
}

struct TopologyOutcome {
    power: MechanismSummary,
    snr: MechanismSummary,
    vcg: Option<MechanismSummary>,
}

fn mean_summary(items: &[&MechanismSummary]) -> MechanismSummary {
    let n = items.len() as f64;
    let mean = |f: fn(&MechanismSummary) -> f64| items.iter().map(|s| f(s)).sum::<f64>() / n;
    MechanismSummary {
        total: mean(|s| s.total),
        per_user: Vec::new(),
        utilization: mean(|s| s.utilization),
        price: mean(|s| s.price),
        variance: mean(|s| s.variance),
        feasible: mean(|s| s.feasible),
    }
}

/// Per relay budget: means over topologies of the totals and of the
/// per-topology positive-increase variance.
pub fn run_multi_user(spec: &MultiUserSpec) -> Result<Vec<ReportRow>> {
    spec.validate()?;
    let topologies = random_topologies(spec);
    let powers = vec![spec.source_power; spec.users];
    let w = spec.system.bandwidth;
    let jobs: Vec<(usize, usize)> = (0..spec.budgets.len())
        .flat_map(|b| (0..topologies.len()).map(move |t| (b, t)))
        .collect();
    let outcomes: Vec<TopologyOutcome> = jobs
        .into_par_iter()
        .map(|(b, t)| {
            let scenario =
                NetworkScenario::from_geometry(spec.system, spec.budgets[b], spec.relay, &topologies[t], &powers)?;
            let power = calibrate_price(&scenario, AuctionKind::Power, spec.target, spec.reserve)?;
            let snr = calibrate_price(&scenario, AuctionKind::Snr, spec.target, spec.reserve)?;
            let vcg = if spec.vcg_enabled() {
                Some(vcg_summary(&scenario, spec.delta, spec.grid)?)
            } else {
                None
            };
            Ok(TopologyOutcome { power: auction_summary(&power, w), snr: auction_summary(&snr, w), vcg })
        })
        .collect::<Result<_>>()?;
    Ok(spec
        .budgets
        .iter()
        .zip(outcomes.chunks(topologies.len()))
        .map(|(&budget, chunk)| ReportRow {
            coordinate: budget,
            power: mean_summary(&chunk.iter().map(|o| &o.power).collect::<Vec<_>>()),
            snr: mean_summary(&chunk.iter().map(|o| &o.snr).collect::<Vec<_>>()),
            vcg: spec
                .vcg_enabled()
                .then(|| mean_summary(&chunk.iter().filter_map(|o| o.vcg.as_ref()).collect::<Vec<_>>())),
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Csv,
    Json,
}

impl fmt::Display for ReportFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ReportFormat::Csv => "csv",
            ReportFormat::Json => "json",
        })
    }
}

impl FromStr for ReportFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            other => Err(invalid("format", format!("expected csv or json, got {other}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMeta {
    pub experiment: String,
    /// Name of the swept quantity.
    pub coordinate: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rng: Option<String>,
    pub spec: serde_json::Value,
}

impl ReportMeta {
    pub fn two_user(spec: &TwoUserSweepSpec) -> Result<Self> {
        Ok(Self {
            experiment: "two-user-sweep".into(),
            coordinate: "relay_y_m".into(),
            seed: None,
            rng: None,
            spec: serde_json::to_value(spec)?,
        })
    }

    pub fn multi_user(spec: &MultiUserSpec) -> Result<Self> {
        Ok(Self {
            experiment: "multi-user".into(),
            coordinate: "relay_budget_w".into(),
            seed: Some(spec.seed),
            rng: Some(RNG_ID.into()),
            spec: serde_json::to_value(spec)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub meta: ReportMeta,
    pub rows: Vec<ReportRow>,
}

/// Rounds to 12 significant digits and prints the shortest exact form.
fn sig12(x: f64) -> String {
    let rounded: f64 = format!("{x:.11e}").parse().unwrap_or(x);
    format!("{rounded}")
}

fn csv_header(report: &Report) -> Vec<String> {
    let users = report.rows.iter().map(|r| r.power.per_user.len()).max().unwrap_or(0);
    let has_vcg = report.rows.iter().any(|r| r.vcg.is_some());
    let mut header = vec![report.meta.coordinate.clone()];
    let mut mech = |name: &str, with_price: bool| {
        header.push(format!("{name}_total"));
        header.extend((1..=users).map(|i| format!("{name}_user{i}")));
        header.push(format!("{name}_utilization"));
        if with_price {
            header.push(format!("{name}_price"));
            header.push(format!("{name}_feasible"));
        }
        header.push(format!("{name}_variance"));
    };
    if has_vcg {
        mech("vcg", false);
    }
    mech("power", true);
    mech("snr", true);
    header
}

fn csv_record(row: &ReportRow, users: usize, has_vcg: bool) -> Vec<String> {
    let mut out = vec![sig12(row.coordinate)];
    let mut mech = |m: Option<&MechanismSummary>, with_price: bool| {
        let get = |f: fn(&MechanismSummary) -> f64| m.map(|m| sig12(f(m))).unwrap_or_default();
        out.push(get(|m| m.total));
        for i in 0..users {
            out.push(m.and_then(|m| m.per_user.get(i)).map(|&v| sig12(v)).unwrap_or_default());
        }
        out.push(get(|m| m.utilization));
        if with_price {
            out.push(get(|m| m.price));
            out.push(get(|m| m.feasible));
        }
        out.push(get(|m| m.variance));
    };
    if has_vcg {
        mech(row.vcg.as_ref(), false);
    }
    mech(Some(&row.power), true);
    mech(Some(&row.snr), true);
    out
}

/// Writes `<dir>/<stem>.json` and, for CSV, `<dir>/<stem>.csv` as well.
/// Returns the paths written, the requested format first.
pub fn emit_report(report: &Report, dir: &Path, stem: &str, format: ReportFormat) -> Result<Vec<PathBuf>> {
    if report.rows.is_empty() {
        return Err(Error::EmptyReport);
    }
    std::fs::create_dir_all(dir)?;
    let json_path = dir.join(format!("{stem}.json"));
    let mut json = serde_json::to_string_pretty(report)?;
    json.push('\n');
    let mut written = Vec::new();
    if format == ReportFormat::Csv {
        let csv_path = dir.join(format!("{stem}.csv"));
        std::fs::write(&csv_path, report_csv(report)?)?;
        written.push(csv_path);
    }
    std::fs::write(&json_path, json)?;
    written.push(json_path);
    Ok(written)
}

pub fn report_csv(report: &Report) -> Result<String> {
    let header = csv_header(report);
    let users = report.rows.iter().map(|r| r.power.per_user.len()).max().unwrap_or(0);
    let has_vcg = report.rows.iter().any(|r| r.vcg.is_some());
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(&header)?;
    for row in &report.rows {
        w.write_record(csv_record(row, users, has_vcg))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn load_report(path: impl AsRef<Path>) -> Result<Report> {
    Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
}
