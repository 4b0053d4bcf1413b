//! Static network description: nodes, fiber links, switch ports, and the
//! scenario that drives a run.

mod format;
mod preset;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::kms::ConsumerSpec;
use crate::orchestration::SwitchPolicy;

pub use format::{parse_duration, parse_scenario, serialize_scenario, FORMAT_VERSION};
pub use preset::{preset_by_name, venqci_preset, PRESET_NAMES};

/// Default sifted block size in bytes.
pub const DEFAULT_BLOCK_SIZE: u64 = 500_000;
pub const DEFAULT_RECONFIG_DELAY_S: f64 = 5.0;
pub const DEFAULT_ALIGNMENT_MEAN_S: f64 = 120.0;
pub const DEFAULT_ALIGNMENT_STD_S: f64 = 30.0;
pub const DEFAULT_LOSS_DB_PER_KM: f64 = 0.2;
pub const DEFAULT_QBER_MEAN_X: f64 = 0.015;
pub const DEFAULT_QBER_MEAN_Z: f64 = 0.010;
pub const DEFAULT_QBER_RHO: f64 = 0.9;
pub const DEFAULT_QBER_NOISE_STD: f64 = 0.002;
pub const DEFAULT_RATE_JITTER_SHAPE: f64 = 100.0;

/// Reference point for [`suggested_sifted_rate`]: a 5 km link at 0.2 dB/km
/// producing a 500 kB block in roughly six minutes.
pub const REFERENCE_SIFTED_RATE: f64 = 1389.0;
pub const REFERENCE_LOSS_DB: f64 = 1.0;

macro_rules! string_id {
    ($name:ident) => {
        #[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub String);

        impl $name {
            pub fn new(s: impl Into<String>) -> Self {
                Self(s.into())
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                Self(s.to_owned())
            }
        }
    };
}

string_id!(NodeId);
string_id!(LinkId);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NodeRole {
    Endpoint,
    Intermediate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeSpec {
    pub id: NodeId,
    pub role: NodeRole,
    pub device_count: u32,
    /// Outbound optical-switch ports per device; 0 when the node has no switch.
    pub switch_ports: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinkSpec {
    pub id: LinkId,
    pub endpoints: [NodeId; 2],
    pub fiber_length_km: f64,
    pub loss_db_per_km: f64,
    /// Sifted-key production rate while the link is active, bytes/s.
    pub nominal_sifted_rate: f64,
    pub qber_mean_x: f64,
    pub qber_mean_z: f64,
    /// AR(1) coefficient of the per-block QBER process.
    pub qber_rho: f64,
    /// Standard deviation of the AR(1) innovation.
    pub qber_noise_std: f64,
    /// Gamma shape of the per-block multiplicative rate jitter (mean 1).
    /// Zero disables the jitter.
    pub rate_jitter_shape: f64,
}

impl LinkSpec {
    pub fn total_loss_db(&self) -> f64 {
        self.fiber_length_km * self.loss_db_per_km
    }

    pub fn other_end(&self, node: &NodeId) -> Option<&NodeId> {
        match &self.endpoints {
            [a, b] if a == node => Some(b),
            [a, b] if b == node => Some(a),
            _ => None,
        }
    }
}

/// Default sifted rate for a link given only its fiber plant: the rate halves
/// for every 3 dB of total loss above the reference link.
pub fn suggested_sifted_rate(fiber_length_km: f64, loss_db_per_km: f64) -> f64 {
    let excess_db = fiber_length_km * loss_db_per_km - REFERENCE_LOSS_DB;
    REFERENCE_SIFTED_RATE * 2f64.powf(-excess_db / 3.0)
}

/// Where a link terminates inside a node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PortAssignment {
    pub device: u32,
    /// Switch port on that device, `None` for a direct fiber.
    pub port: Option<u32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkTopology {
    pub nodes: Vec<NodeSpec>,
    pub links: Vec<LinkSpec>,
}

impl NetworkTopology {
    pub fn node(&self, id: &NodeId) -> Option<&NodeSpec> {
        self.nodes.iter().find(|n| &n.id == id)
    }

    pub fn link(&self, id: &LinkId) -> Option<&LinkSpec> {
        self.links.iter().find(|l| &l.id == id)
    }

    pub fn link_index(&self, id: &LinkId) -> Option<usize> {
        self.links.iter().position(|l| &l.id == id)
    }

    /// Links touching `node`, in declaration order.
    pub fn incident_links(&self, node: &NodeId) -> Vec<&LinkSpec> {
        self.links
            .iter()
            .filter(|l| l.endpoints.contains(node))
            .collect()
    }

    /// Number of links a node can terminate.
    ///
    /// Intermediate nodes multiplex `switch_ports` links per device; endpoint
    /// nodes terminate one link per device.
    pub fn link_capacity(node: &NodeSpec) -> u32 {
        match node.role {
            NodeRole::Intermediate => node.device_count * node.switch_ports,
            NodeRole::Endpoint => node.device_count,
        }
    }

    /// Maps every (node, link) termination to a device and switch port.
    ///
    /// Incident links are assigned in declaration order: intermediate nodes
    /// fill the ports of device 0 first, endpoint nodes give each link its own
    /// device. The mapping is injective per node when capacity is respected,
    /// which `validate` enforces.
    pub fn port_map(&self) -> BTreeMap<(NodeId, LinkId), PortAssignment> {
        let mut map = BTreeMap::new();
        for node in &self.nodes {
            for (i, link) in self.incident_links(&node.id).into_iter().enumerate() {
                let i = i as u32;
                let assignment = match node.role {
                    NodeRole::Intermediate if node.switch_ports > 0 => PortAssignment {
                        device: i / node.switch_ports,
                        port: Some(i % node.switch_ports),
                    },
                    _ => PortAssignment {
                        device: i,
                        port: None,
                    },
                };
                map.insert((node.id.clone(), link.id.clone()), assignment);
            }
        }
        map
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlignmentOverhead {
    pub mean: f64,
    pub std: f64,
}

impl Default for AlignmentOverhead {
    fn default() -> Self {
        Self {
            mean: DEFAULT_ALIGNMENT_MEAN_S,
            std: DEFAULT_ALIGNMENT_STD_S,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaintenanceWindow {
    pub link: LinkId,
    pub start: f64,
    pub end: f64,
}

impl MaintenanceWindow {
    pub fn covers(&self, t: f64) -> bool {
        self.start <= t && t < self.end
    }
}

/// Per-node switching configuration pushed by the controller at start-up.
#[derive(Debug, Clone, PartialEq)]
pub struct NodePolicy {
    /// Order in which the node's agent cycles through its links.
    pub schedule: Vec<LinkId>,
    pub policy: SwitchPolicy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ControlVerb {
    SetPolicy,
    ForceSwitch,
    GetStatus,
}

/// A scripted controller command, in the spirit of a GS 015 style
/// set-policy / force-switch / get-status verb set.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlCommand {
    pub at: f64,
    pub verb: ControlVerb,
    pub node: NodeId,
    /// Target of `force-switch`.
    pub link: Option<LinkId>,
    /// New parameters for `set-policy`.
    pub policy: Option<SwitchPolicy>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub topology: NetworkTopology,
    /// One entry per intermediate node, filled with defaults when absent.
    pub policy: BTreeMap<NodeId, NodePolicy>,
    pub block_size: u64,
    pub alignment: AlignmentOverhead,
    pub switch_reconfig_delay: f64,
    pub maintenance: Vec<MaintenanceWindow>,
    pub controller_fault_time: Option<f64>,
    pub control: Vec<ControlCommand>,
    pub consumers: Vec<ConsumerSpec>,
    /// Simulated seconds.
    pub duration: f64,
    pub seed: u64,
}

impl Scenario {
    pub fn maintenance_for<'a>(&'a self, link: &'a LinkId) -> impl Iterator<Item = &'a MaintenanceWindow> + 'a {
        self.maintenance.iter().filter(move |w| &w.link == link)
    }
}
