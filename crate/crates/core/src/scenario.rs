//! The immutable world description and its JSON file format.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::channel::{path_gain, LinkModel, Position, SystemParams, UserLink};
use crate::error::{invalid, Result};

/// Node placement from which link gains were derived.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Geometry {
    pub relay: Position,
    pub sources: Vec<Position>,
    pub destinations: Vec<Position>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkScenario {
    pub users: Vec<UserLink>,
    /// Total relay power `P` in watts.
    pub relay_budget: f64,
    pub system: SystemParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub geometry: Option<Geometry>,
}

impl NetworkScenario {
    /// Builds a scenario whose gains follow the power-law path loss of `system`.
    pub fn from_geometry(
        system: SystemParams,
        relay_budget: f64,
        relay: Position,
        nodes: &[(Position, Position)],
        source_power: &[f64],
    ) -> Result<Self> {
        if nodes.len() != source_power.len() {
            return Err(invalid(
                "source_power",
                format!("{} users but {} source powers", nodes.len(), source_power.len()),
            ));
        }
        let alpha = system.pathloss_exponent;
        let users = nodes
            .iter()
            .zip(source_power)
            .enumerate()
            .map(|(id, ((s, d), &ps))| {
                Ok(UserLink {
                    id,
                    source_power: ps,
                    gain_sd: path_gain(s, d, alpha)?,
                    gain_sr: path_gain(s, &relay, alpha)?,
                    gain_rd: path_gain(&relay, d, alpha)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let scenario = Self {
            users,
            relay_budget,
            system,
            geometry: Some(Geometry {
                relay,
                sources: nodes.iter().map(|n| n.0).collect(),
                destinations: nodes.iter().map(|n| n.1).collect(),
            }),
        };
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn validate(&self) -> Result<()> {
        self.system.validate()?;
        if !(self.relay_budget.is_finite() && self.relay_budget > 0.0) {
            return Err(invalid("relay_budget", format!("must be > 0, got {}", self.relay_budget)));
        }
        if self.users.is_empty() {
            return Err(invalid("users", "at least one user is required"));
        }
        for u in &self.users {
            u.validate()?;
        }
        if let Some(geo) = &self.geometry {
            if geo.sources.len() != self.users.len() || geo.destinations.len() != self.users.len() {
                return Err(invalid("geometry", "node count does not match user count"));
            }
            let alpha = self.system.pathloss_exponent;
            for (i, u) in self.users.iter().enumerate() {
                let (s, d) = (&geo.sources[i], &geo.destinations[i]);
                for (name, stored, derived) in [
                    ("gain_sd", u.gain_sd, path_gain(s, d, alpha)?),
                    ("gain_sr", u.gain_sr, path_gain(s, &geo.relay, alpha)?),
                    ("gain_rd", u.gain_rd, path_gain(&geo.relay, d, alpha)?),
                ] {
                    if (stored - derived).abs() > 1e-12 * derived {
                        return Err(invalid(
                            name,
                            format!("user {i}: stored {stored:e} disagrees with geometry {derived:e}"),
                        ));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.users.len()
    }

    pub fn is_empty(&self) -> bool {
        self.users.is_empty()
    }

    pub fn models(&self) -> Vec<LinkModel> {
        self.users.iter().map(|u| u.model(&self.system)).collect()
    }

    /// Copy of the scenario with a different relay budget.
    pub fn with_budget(&self, relay_budget: f64) -> Self {
        Self {
            relay_budget,
            ..self.clone()
        }
    }

    /// Copy restricted to the users at `keep` (ids are preserved).
    pub fn subset(&self, keep: &[usize]) -> Self {
        let users = keep.iter().map(|&i| self.users[i]).collect();
        let geometry = self.geometry.as_ref().map(|g| Geometry {
            relay: g.relay,
            sources: keep.iter().map(|&i| g.sources[i]).collect(),
            destinations: keep.iter().map(|&i| g.destinations[i]).collect(),
        });
        Self {
            users,
            relay_budget: self.relay_budget,
            system: self.system,
            geometry,
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ScenarioFile = serde_json::from_str(text)?;
        file.into_scenario()
    }
}

/// On-disk scenario: per-user gains, or node coordinates plus a relay position.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioFile {
    pub system: SystemParams,
    pub relay_budget: f64,
    #[serde(default)]
    pub relay: Option<Position>,
    pub users: Vec<UserEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum UserEntry {
    Placed {
        source_power: f64,
        source: Position,
        destination: Position,
    },
    Gains {
        source_power: f64,
        gain_sd: f64,
        gain_sr: f64,
        gain_rd: f64,
    },
}

impl ScenarioFile {
    pub fn into_scenario(self) -> Result<NetworkScenario> {
        let placed = self
            .users
            .iter()
            .filter(|u| matches!(u, UserEntry::Placed { .. }))
            .count();
        if placed == self.users.len() && placed > 0 {
            let relay = self
                .relay
                .ok_or_else(|| invalid("relay", "coordinates given for users but not for the relay"))?;
            let (nodes, powers): (Vec<_>, Vec<_>) = self
                .users
                .iter()
                .map(|u| match *u {
                    UserEntry::Placed { source_power, source, destination } => {
                        ((source, destination), source_power)
                    }
                    UserEntry::Gains { .. } => unreachable!(),
                })
                .unzip();
            return NetworkScenario::from_geometry(self.system, self.relay_budget, relay, &nodes, &powers);
        }
        if placed > 0 {
            return Err(invalid("users", "mixing coordinates and explicit gains is not supported"));
        }
        let users = self
            .users
            .iter()
            .enumerate()
            .map(|(id, u)| match *u {
                UserEntry::Gains { source_power, gain_sd, gain_sr, gain_rd } => UserLink {
                    id,
                    source_power,
                    gain_sd,
                    gain_sr,
                    gain_rd,
                },
                UserEntry::Placed { .. } => unreachable!(),
            })
            .collect();
        let scenario = NetworkScenario {
            users,
            relay_budget: self.relay_budget,
            system: self.system,
            geometry: None,
        };
        scenario.validate()?;
        Ok(scenario)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const PLACED: &str = r#"{
        "system": {"bandwidth": 1e6, "noise": 1e-11, "pathloss_exponent": 4},
        "relay_budget": 0.1,
        "relay": {"x": 80, "y": 0},
        "users": [
            {"source_power": 0.01, "source": {"x": 200, "y": -25}, "destination": {"x": 0, "y": -25}},
            {"source_power": 0.01, "source": {"x": 0, "y": 25}, "destination": {"x": 200, "y": 25}}
        ]
    }"#;

    #[test]
    fn parses_coordinates() {
        let s = NetworkScenario::from_json(PLACED).unwrap();
        assert_eq!(s.len(), 2);
        assert!((s.users[0].gain_sd - 6.25e-10).abs() < 1e-22);
        assert!(s.geometry.is_some());
    }

    #[test]
    fn parses_gains() {
        let text = r#"{
            "system": {"bandwidth": 1e6, "noise": 1e-11, "pathloss_exponent": 4},
            "relay_budget": 0.1,
            "users": [{"source_power": 0.01, "gain_sd": 1e-9, "gain_sr": 1e-8, "gain_rd": 1e-8}]
        }"#;
        let s = NetworkScenario::from_json(text).unwrap();
        assert_eq!(s.users[0].gain_sr, 1e-8);
        assert!(s.geometry.is_none());
    }

    #[test]
    fn rejects_missing_relay_and_bad_budget() {
        let no_relay = PLACED.replace(r#""relay": {"x": 80, "y": 0},"#, "");
        assert!(NetworkScenario::from_json(&no_relay).is_err());
        let bad = PLACED.replace("0.1,", "-0.1,");
        assert!(NetworkScenario::from_json(&bad).is_err());
    }

    #[test]
    fn geometry_consistency_is_checked() {
        let mut s = NetworkScenario::from_json(PLACED).unwrap();
        s.validate().unwrap();
        s.users[1].gain_rd *= 1.0 + 1e-9;
        assert!(s.validate().is_err());
    }

    #[test]
    fn serialized_scenario_round_trips() {
        let s = NetworkScenario::from_json(PLACED).unwrap();
        let text = serde_json::to_string(&s).unwrap();
        let back: NetworkScenario = serde_json::from_str(&text).unwrap();
        assert_eq!(s, back);
        back.validate().unwrap();
    }
}
