//! Declarative run description and the three highway scenario builders.
//!
//! Every field has a default, so `{}` is a complete single-hop configuration.
//! Built-in scenarios derive their nodes and traffic from the `geometry`
//! block and `speed_kmh`; `custom` takes both from the config verbatim.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use crate::aodv::{AodvError, AodvParams};
use crate::apps::{AppError, FtpParams, VoiceParams};
use crate::engine::SimTime;
use crate::mac::{MacError, MacParams};
use crate::mobility::{Direction, MobilityError, MobilityProfile};
use crate::node::NodeId;
use crate::phy::{in_range, PhyError, PhyParams};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error(transparent)]
    Phy(#[from] PhyError),
    #[error(transparent)]
    Mac(#[from] MacError),
    #[error(transparent)]
    Aodv(#[from] AodvError),
    #[error(transparent)]
    App(#[from] AppError),
    #[error("{key}: {source}")]
    Mobility { key: String, source: MobilityError },
    #[error("{key}: {reason}")]
    Invalid { key: String, reason: String },
}

fn invalid(key: impl Into<String>, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        key: key.into(),
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum ScenarioKind {
    #[default]
    SingleHop,
    MultiHop,
    NodeToNode,
    Custom,
}

impl ScenarioKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ScenarioKind::SingleHop => "single_hop",
            ScenarioKind::MultiHop => "multi_hop",
            ScenarioKind::NodeToNode => "node_to_node",
            ScenarioKind::Custom => "custom",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Role {
    #[default]
    Mobile,
    Server,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct NodeSpec {
    pub id: NodeId,
    #[cfg_attr(feature = "serde", serde(default))]
    pub role: Role,
    pub position_m: f64,
    #[cfg_attr(feature = "serde", serde(default))]
    pub speed_kmh: f64,
    #[cfg_attr(feature = "serde", serde(default))]
    pub direction: Direction,
    #[cfg_attr(feature = "serde", serde(default))]
    pub start_s: f64,
}

impl NodeSpec {
    pub fn profile(&self) -> MobilityProfile {
        MobilityProfile {
            initial_position_m: self.position_m,
            speed_kmh: self.speed_kmh,
            direction: self.direction,
            start_time: SimTime::from_secs_f64(self.start_s),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct CallSpec {
    pub caller: NodeId,
    pub callee: NodeId,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct FtpSpec {
    pub client: NodeId,
    pub server: NodeId,
}

/// Traffic for `custom` scenarios. Built-in scenarios generate their own.
#[derive(Debug, Clone, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct TrafficSpec {
    pub voice_calls: Vec<CallSpec>,
    pub ftp_sessions: Vec<FtpSpec>,
}

/// Positions used by the built-in scenarios.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct GeometryParams {
    pub single_hop_mobile_start_m: f64,
    pub single_hop_server_m: f64,
    pub multi_hop_mobile_start_m: f64,
    pub multi_hop_near_server_m: f64,
    pub multi_hop_far_server_m: f64,
    pub node_to_node_lead_speed_kmh: f64,
    /// How far behind the lead vehicle the second one starts.
    pub node_to_node_gap_m: f64,
}

impl Default for GeometryParams {
    fn default() -> Self {
        GeometryParams {
            single_hop_mobile_start_m: -1000.0,
            single_hop_server_m: 0.0,
            multi_hop_mobile_start_m: -1000.0,
            multi_hop_near_server_m: 0.0,
            multi_hop_far_server_m: 900.0,
            node_to_node_lead_speed_kmh: 32.0,
            node_to_node_gap_m: 200.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct WbssParams {
    /// The first server sends one WBSS beacon at t = 0 and every node that
    /// hears it joins. Off means pure WAVE mode.
    pub enabled: bool,
    pub service: String,
}

impl Default for WbssParams {
    fn default() -> Self {
        WbssParams {
            enabled: false,
            service: "wave-sim".to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct ScenarioConfig {
    pub scenario: ScenarioKind,
    pub speed_kmh: f64,
    pub seed: u64,
    pub duration_s: f64,
    pub output_dir: String,
    pub phy: PhyParams,
    pub mac: MacParams,
    pub aodv: AodvParams,
    pub voice: VoiceParams,
    pub ftp: FtpParams,
    pub wbss: WbssParams,
    pub geometry: GeometryParams,
    pub nodes: Vec<NodeSpec>,
    pub traffic: TrafficSpec,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            scenario: ScenarioKind::SingleHop,
            speed_kmh: 32.0,
            seed: 1,
            duration_s: 120.0,
            output_dir: "out".to_string(),
            phy: PhyParams::default(),
            mac: MacParams::default(),
            aodv: AodvParams::default(),
            voice: VoiceParams::default(),
            ftp: FtpParams::default(),
            wbss: WbssParams::default(),
            geometry: GeometryParams::default(),
            nodes: Vec::new(),
            traffic: TrafficSpec::default(),
        }
    }
}

impl ScenarioConfig {
    pub fn new(scenario: ScenarioKind, speed_kmh: f64, seed: u64) -> Self {
        ScenarioConfig {
            scenario,
            speed_kmh,
            seed,
            ..ScenarioConfig::default()
        }
    }

    pub fn duration(&self) -> SimTime {
        SimTime::from_secs_f64(self.duration_s)
    }

    /// Checks every parameter block and the scenario geometry.
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.phy.validate()?;
        self.mac.validate()?;
        self.aodv.validate()?;
        self.voice.validate()?;
        self.ftp.validate()?;
        if !(self.duration_s.is_finite() && self.duration_s > 0.0) {
            return Err(invalid("duration_s", format!("must be > 0, got {}", self.duration_s)));
        }
        if !(self.speed_kmh.is_finite() && self.speed_kmh >= 0.0) {
            return Err(invalid("speed_kmh", format!("must be >= 0, got {}", self.speed_kmh)));
        }
        if self.output_dir.is_empty() {
            return Err(invalid("output_dir", "must not be empty"));
        }
        if self.scenario != ScenarioKind::Custom && (!self.nodes.is_empty() || self.traffic != TrafficSpec::default()) {
            return Err(invalid(
                "nodes",
                format!("node and traffic lists are only read by custom scenarios, not {}", self.scenario.as_str()),
            ));
        }
        build_scenario(self).map(|_| ())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeDef {
    pub id: NodeId,
    pub role: Role,
    pub profile: MobilityProfile,
}

/// Topology and traffic of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub kind: ScenarioKind,
    pub nodes: Vec<NodeDef>,
    pub calls: Vec<CallSpec>,
    pub ftp: Vec<FtpSpec>,
}

impl Scenario {
    pub fn node(&self, id: NodeId) -> Option<&NodeDef> {
        self.nodes.iter().find(|n| n.id == id)
    }
}

fn mobile(id: u16, x: f64, kmh: f64) -> NodeDef {
    NodeDef {
        id: NodeId(id),
        role: Role::Mobile,
        profile: MobilityProfile::moving(x, kmh, Direction::Forward),
    }
}

fn server(id: u16, x: f64) -> NodeDef {
    NodeDef {
        id: NodeId(id),
        role: Role::Server,
        profile: MobilityProfile::fixed(x),
    }
}

/// Lays out nodes and traffic for the configured scenario.
///
/// * `single_hop`: node0 drives towards server node1 and calls it.
/// * `multi_hop`: node0 calls the far server node2, which it can only reach
///   through the near server node1 at the start of the run.
/// * `node_to_node`: node0 leads at the lead speed and downloads from node1,
///   which follows `node_to_node_gap_m` behind at `speed_kmh`.
pub fn build_scenario(config: &ScenarioConfig) -> Result<Scenario, ConfigError> {
    let g = &config.geometry;
    let v = config.speed_kmh;
    let scenario = match config.scenario {
        ScenarioKind::SingleHop => Scenario {
            kind: ScenarioKind::SingleHop,
            nodes: vec![mobile(0, g.single_hop_mobile_start_m, v), server(1, g.single_hop_server_m)],
            calls: vec![CallSpec {
                caller: NodeId(0),
                callee: NodeId(1),
            }],
            ftp: Vec::new(),
        },
        ScenarioKind::MultiHop => {
            let phy = &config.phy;
            let (start, near, far) = (g.multi_hop_mobile_start_m, g.multi_hop_near_server_m, g.multi_hop_far_server_m);
            if !in_range(near, far, phy) {
                return Err(invalid(
                    "geometry.multi_hop_far_server_m",
                    format!(
                        "servers {} m apart cannot relay with comm_range {} m",
                        (far - near).abs(),
                        phy.comm_range_m
                    ),
                ));
            }
            if in_range(start, far, phy) {
                return Err(invalid(
                    "geometry.multi_hop_far_server_m",
                    format!("far server must start out of the mobile's {} m range", phy.comm_range_m),
                ));
            }
            if !in_range(start, near, phy) {
                return Err(invalid(
                    "geometry.multi_hop_near_server_m",
                    format!("near server must start within the mobile's {} m range", phy.comm_range_m),
                ));
            }
            Scenario {
                kind: ScenarioKind::MultiHop,
                nodes: vec![mobile(0, start, v), server(1, near), server(2, far)],
                calls: vec![CallSpec {
                    caller: NodeId(0),
                    callee: NodeId(2),
                }],
                ftp: Vec::new(),
            }
        }
        ScenarioKind::NodeToNode => {
            if !(g.node_to_node_gap_m.is_finite() && g.node_to_node_gap_m >= 0.0) {
                return Err(invalid("geometry.node_to_node_gap_m", "must be >= 0"));
            }
            Scenario {
                kind: ScenarioKind::NodeToNode,
                nodes: vec![
                    mobile(0, 0.0, g.node_to_node_lead_speed_kmh),
                    mobile(1, -g.node_to_node_gap_m, v),
                ],
                calls: Vec::new(),
                ftp: vec![FtpSpec {
                    client: NodeId(0),
                    server: NodeId(1),
                }],
            }
        }
        ScenarioKind::Custom => Scenario {
            kind: ScenarioKind::Custom,
            nodes: config
                .nodes
                .iter()
                .map(|n| NodeDef {
                    id: n.id,
                    role: n.role,
                    profile: n.profile(),
                })
                .collect(),
            calls: config.traffic.voice_calls.clone(),
            ftp: config.traffic.ftp_sessions.clone(),
        },
    };
    check_scenario(&scenario)?;
    Ok(scenario)
}

fn check_scenario(s: &Scenario) -> Result<(), ConfigError> {
    if s.nodes.len() < 2 {
        return Err(invalid("nodes", format!("need at least 2 nodes, got {}", s.nodes.len())));
    }
    let mut ids = BTreeSet::new();
    for (i, n) in s.nodes.iter().enumerate() {
        let key = format!("nodes[{i}]");
        if !ids.insert(n.id) {
            return Err(invalid(format!("{key}.id"), format!("duplicate id {}", n.id.0)));
        }
        n.profile.validate().map_err(|source| ConfigError::Mobility { key: key.clone(), source })?;
        if n.role == Role::Server && !n.profile.is_fixed() {
            return Err(invalid(format!("{key}.speed_kmh"), "servers must not move"));
        }
    }
    let known = |id: NodeId| ids.contains(&id);
    for (i, c) in s.calls.iter().enumerate() {
        for (field, id) in [("caller", c.caller), ("callee", c.callee)] {
            if !known(id) {
                return Err(invalid(format!("traffic.voice_calls[{i}].{field}"), format!("no node {}", id.0)));
            }
        }
        if c.caller == c.callee {
            return Err(invalid(format!("traffic.voice_calls[{i}]"), "caller and callee must differ"));
        }
    }
    for (i, f) in s.ftp.iter().enumerate() {
        for (field, id) in [("client", f.client), ("server", f.server)] {
            if !known(id) {
                return Err(invalid(format!("traffic.ftp_sessions[{i}].{field}"), format!("no node {}", id.0)));
            }
        }
        if f.client == f.server {
            return Err(invalid(format!("traffic.ftp_sessions[{i}]"), "client and server must differ"));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        ScenarioConfig::default().validate().unwrap();
        for kind in [ScenarioKind::SingleHop, ScenarioKind::MultiHop, ScenarioKind::NodeToNode] {
            for v in [32.0, 65.0, 97.0] {
                ScenarioConfig::new(kind, v, 1).validate().unwrap();
            }
        }
    }

    #[test]
    fn single_hop_layout() {
        let s = build_scenario(&ScenarioConfig::new(ScenarioKind::SingleHop, 32.0, 1)).unwrap();
        assert_eq!(s.nodes.len(), 2);
        assert_eq!(s.calls.len(), 1);
        assert!(s.ftp.is_empty());
    }

    #[test]
    fn multi_hop_forces_relay() {
        let c = ScenarioConfig::new(ScenarioKind::MultiHop, 32.0, 1);
        let s = build_scenario(&c).unwrap();
        assert_eq!(s.calls[0].callee, NodeId(2));
        let mut far = c.clone();
        far.geometry.multi_hop_far_server_m = 2100.0;
        let err = build_scenario(&far).unwrap_err();
        assert!(err.to_string().starts_with("geometry.multi_hop_far_server_m"), "{err}");
        let mut near = c;
        near.geometry.multi_hop_far_server_m = -50.0;
        assert!(build_scenario(&near).is_err());
    }

    #[test]
    fn node_to_node_layout() {
        let s = build_scenario(&ScenarioConfig::new(ScenarioKind::NodeToNode, 97.0, 1)).unwrap();
        assert_eq!(s.nodes[0].profile.speed_kmh, 32.0);
        assert_eq!(s.nodes[1].profile.speed_kmh, 97.0);
        assert_eq!(s.ftp.len(), 1);
    }

    #[test]
    fn custom_needs_two_nodes_and_known_refs() {
        let mut c = ScenarioConfig {
            scenario: ScenarioKind::Custom,
            ..ScenarioConfig::default()
        };
        assert!(c.validate().is_err());
        c.nodes = vec![
            NodeSpec {
                id: NodeId(0),
                role: Role::Mobile,
                position_m: 0.0,
                speed_kmh: 10.0,
                direction: Direction::Forward,
                start_s: 0.0,
            },
            NodeSpec {
                id: NodeId(5),
                role: Role::Server,
                position_m: 100.0,
                speed_kmh: 0.0,
                direction: Direction::Forward,
                start_s: 0.0,
            },
        ];
        c.validate().unwrap();
        c.traffic.voice_calls.push(CallSpec {
            caller: NodeId(0),
            callee: NodeId(9),
        });
        let err = c.validate().unwrap_err();
        assert_eq!(err.to_string(), "traffic.voice_calls[0].callee: no node 9");
    }

    #[test]
    fn bad_power_names_ceiling() {
        let mut c = ScenarioConfig::default();
        c.phy.tx_power_dbm = 50.0;
        let err = c.validate().unwrap_err().to_string();
        assert!(err.contains("44.8"), "{err}");
    }

    #[test]
    fn builtin_rejects_node_list() {
        let mut c = ScenarioConfig::default();
        c.nodes.push(NodeSpec {
            id: NodeId(0),
            role: Role::Mobile,
            position_m: 0.0,
            speed_kmh: 0.0,
            direction: Direction::Forward,
            start_s: 0.0,
        });
        assert!(c.validate().is_err());
    }
}
