//! Central SDN controller.
//!
//! The controller pushes policy parameters to the agents and relays operator
//! commands. Agents keep running their last pushed policy on their own, so a
//! controller fault only stops further pushes and commands.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{AgentPhase, AgentState, SwitchPolicy};
use crate::simcore::SimTime;
use crate::topology::{ControlVerb, LinkId, NodeId};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ControllerLogKind {
    Push { epoch: u64, nodes: Vec<NodeId> },
    /// A push or command that arrived after the fault.
    Rejected { verb: String, node: Option<NodeId>, reason: String },
    Fault,
    ForceSwitch { node: NodeId, link: LinkId },
    Status { node: NodeId },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControllerLogEntry {
    pub time: SimTime,
    #[serde(flatten)]
    pub kind: ControllerLogKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentStatus {
    pub device: u32,
    pub active_link: Option<LinkId>,
    pub phase: AgentPhase,
    pub last_config_epoch: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatusReport {
    pub time: SimTime,
    pub node: NodeId,
    pub agents: Vec<AgentStatus>,
}

#[derive(Debug, Clone, Default)]
pub struct Controller {
    epoch: u64,
    faulted: bool,
    log: Vec<ControllerLogEntry>,
}

impl Controller {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn epoch(&self) -> u64 {
        self.epoch
    }

    pub fn is_faulted(&self) -> bool {
        self.faulted
    }

    pub fn log(&self) -> &[ControllerLogEntry] {
        &self.log
    }

    pub fn into_log(self) -> Vec<ControllerLogEntry> {
        self.log
    }

    fn record(&mut self, time: SimTime, kind: ControllerLogKind) {
        self.log.push(ControllerLogEntry { time, kind });
    }

    /// Pushes new policy parameters. Agents on nodes in `config` adopt them;
    /// every agent's epoch advances. After a fault this is a logged no-op.
    pub fn controller_push(&mut self, config: &BTreeMap<NodeId, SwitchPolicy>, agents: &mut [AgentState], now: SimTime) -> bool {
        if self.faulted {
            self.reject(now, "push", None, "controller faulted");
            return false;
        }
        self.epoch += 1;
        for a in agents.iter_mut() {
            if let Some(p) = config.get(&a.node_id) {
                a.policy = p.clone();
            }
            a.last_config_epoch = self.epoch;
        }
        let nodes = config.keys().cloned().collect();
        self.record(now, ControllerLogKind::Push { epoch: self.epoch, nodes });
        true
    }

    pub fn controller_fault(&mut self, now: SimTime) {
        if !self.faulted {
            self.faulted = true;
            self.record(now, ControllerLogKind::Fault);
        }
    }

    pub fn reject(&mut self, now: SimTime, verb: &str, node: Option<&NodeId>, reason: &str) {
        self.record(
            now,
            ControllerLogKind::Rejected {
                verb: verb.to_string(),
                node: node.cloned(),
                reason: reason.to_string(),
            },
        );
    }

    /// Logs an accepted force-switch; the engine carries it out.
    pub fn force_switch(&mut self, now: SimTime, node: &NodeId, link: &LinkId) -> bool {
        if self.faulted {
            self.reject(now, verb_name(ControlVerb::ForceSwitch), Some(node), "controller faulted");
            return false;
        }
        self.record(
            now,
            ControllerLogKind::ForceSwitch {
                node: node.clone(),
                link: link.clone(),
            },
        );
        true
    }

    pub fn get_status(&mut self, now: SimTime, node: &NodeId, agents: &[AgentState]) -> Option<StatusReport> {
        if self.faulted {
            self.reject(now, verb_name(ControlVerb::GetStatus), Some(node), "controller faulted");
            return None;
        }
        self.record(now, ControllerLogKind::Status { node: node.clone() });
        Some(StatusReport {
            time: now,
            node: node.clone(),
            agents: agents
                .iter()
                .filter(|a| &a.node_id == node)
                .map(|a| AgentStatus {
                    device: a.device,
                    active_link: a.active_link.clone(),
                    phase: a.phase,
                    last_config_epoch: a.last_config_epoch,
                })
                .collect(),
        })
    }
}

pub fn verb_name(verb: ControlVerb) -> &'static str {
    match verb {
        ControlVerb::SetPolicy => "set-policy",
        ControlVerb::ForceSwitch => "force-switch",
        ControlVerb::GetStatus => "get-status",
    }
}
