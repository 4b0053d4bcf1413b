//! Node agents driving optical switches.
//!
//! Each QKD device is represented by an [`AgentState`]. Agents on
//! intermediate nodes decide when to leave their active link (per their
//! [`SwitchPolicy`]) and negotiate the next link with the agent at its far
//! end. Endpoint agents never initiate policy switches and accept every
//! proposal. After the controller's initial push the agents need nothing from
//! it; see [`controller`].

pub mod controller;
mod negotiation;

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::simcore::SimTime;
use crate::topology::{LinkId, NodeId};

pub use controller::{AgentStatus, Controller, ControllerLogEntry, ControllerLogKind, StatusReport};
pub use negotiation::{commit_switch, handle_maintenance, negotiate_switch, reprobe_target, Negotiation, PendingReason};

pub const DEFAULT_N_BLOCKS: u32 = 2;
pub const DEFAULT_SKIP_TIMEOUT_S: f64 = 60.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PolicyVariant {
    /// Keep per-link buffered key in proportion to configured ratios.
    KeyBalancing,
    /// Rotate through the schedule every `n_blocks` blocks.
    CoordinatedSwitching,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SwitchPolicy {
    pub variant: PolicyVariant,
    /// Target share of buffered key per link; used by key balancing only.
    pub ratios: BTreeMap<LinkId, f64>,
    /// Blocks per activation; used by coordinated switching only.
    pub n_blocks: u32,
    /// Seconds without peer response before a link is skipped.
    pub skip_timeout: f64,
}

impl SwitchPolicy {
    pub fn coordinated(n_blocks: u32) -> Self {
        Self {
            variant: PolicyVariant::CoordinatedSwitching,
            ratios: BTreeMap::new(),
            n_blocks,
            skip_timeout: DEFAULT_SKIP_TIMEOUT_S,
        }
    }

    pub fn key_balancing(ratios: impl IntoIterator<Item = (LinkId, f64)>) -> Self {
        Self {
            variant: PolicyVariant::KeyBalancing,
            ratios: ratios.into_iter().collect(),
            n_blocks: DEFAULT_N_BLOCKS,
            skip_timeout: DEFAULT_SKIP_TIMEOUT_S,
        }
    }

    pub fn ratio(&self, link: &LinkId) -> f64 {
        self.ratios.get(link).copied().unwrap_or(1.0)
    }

    pub fn skip_timeout_time(&self) -> SimTime {
        SimTime::from_secs_f64(self.skip_timeout)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AgentPhase {
    Idle,
    Aligning,
    Producing,
    Negotiating,
    WaitingPeer,
}

/// Identifies one device's agent.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct AgentRef {
    pub node: NodeId,
    pub device: u32,
}

impl fmt::Display for AgentRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}#{}", self.node, self.device)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentState {
    pub node_id: NodeId,
    pub device: u32,
    pub active_link: Option<LinkId>,
    pub phase: AgentPhase,
    /// This device's switchable links, in rotation order.
    pub schedule: Vec<LinkId>,
    pub policy: SwitchPolicy,
    pub last_config_epoch: u64,
    /// Whether this agent decides switches (intermediate nodes, and one side
    /// of a link between two endpoints).
    pub initiates: bool,
    /// Link being negotiated, waited on, or probed.
    pub target: Option<LinkId>,
    /// Most recent link this agent left; anchors round-robin when idle.
    pub previous_link: Option<LinkId>,
    pub blocks_since_switch: u32,
}

impl AgentState {
    pub fn new(node_id: NodeId, device: u32, schedule: Vec<LinkId>, policy: SwitchPolicy, initiates: bool) -> Self {
        Self {
            node_id,
            device,
            active_link: None,
            phase: AgentPhase::Idle,
            schedule,
            policy,
            last_config_epoch: 0,
            initiates,
            target: None,
            previous_link: None,
            blocks_since_switch: 0,
        }
    }

    pub fn agent_ref(&self) -> AgentRef {
        AgentRef {
            node: self.node_id.clone(),
            device: self.device,
        }
    }

    /// Link the agent last produced on, or is producing on now.
    pub fn anchor(&self) -> Option<&LinkId> {
        self.active_link.as_ref().or(self.previous_link.as_ref())
    }

    /// Drops the active link, remembering it as the rotation anchor.
    pub fn leave(&mut self) -> Option<LinkId> {
        let left = self.active_link.take();
        if left.is_some() {
            self.previous_link = left.clone();
        }
        self.blocks_since_switch = 0;
        left
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SwitchCause {
    Policy,
    MaintenanceSkip,
    Startup,
    /// Operator `force-switch` through the controller.
    Forced,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwitchEvent {
    pub time: SimTime,
    pub node_id: NodeId,
    pub device: u32,
    pub from_link: Option<LinkId>,
    pub to_link: LinkId,
    pub cause: SwitchCause,
    /// Index of the trace entry that produced this switch.
    pub trace_index: u64,
}

/// Read access to per-link buffered secret bytes.
pub trait BufferView {
    fn buffered(&self, link: &LinkId) -> u64;
}

impl BufferView for BTreeMap<LinkId, u64> {
    fn buffered(&self, link: &LinkId) -> u64 {
        self.get(link).copied().unwrap_or(0)
    }
}

impl BufferView for HashMap<LinkId, u64> {
    fn buffered(&self, link: &LinkId) -> u64 {
        self.get(link).copied().unwrap_or(0)
    }
}

impl<F: Fn(&LinkId) -> u64> BufferView for F {
    fn buffered(&self, link: &LinkId) -> u64 {
        self(link)
    }
}

/// The link the agent should produce on next, among those `allowed`.
///
/// Key balancing picks the argmin of `buffered / ratio`; coordinated
/// switching picks the first allowed link after the anchor in schedule order,
/// wrapping around. Ties go to schedule order.
pub fn select_among(agent: &AgentState, buffers: &dyn BufferView, allowed: &dyn Fn(&LinkId) -> bool) -> Option<LinkId> {
    match agent.policy.variant {
        PolicyVariant::KeyBalancing => {
            let mut best: Option<(&LinkId, f64)> = None;
            for link in agent.schedule.iter().filter(|l| allowed(l)) {
                let q = buffers.buffered(link) as f64 / agent.policy.ratio(link);
                if best.is_none_or(|(_, b)| q < b) {
                    best = Some((link, q));
                }
            }
            best.map(|(l, _)| l.clone())
        }
        PolicyVariant::CoordinatedSwitching => {
            let n = agent.schedule.len();
            let start = agent
                .anchor()
                .and_then(|a| agent.schedule.iter().position(|l| l == a))
                .map_or(0, |i| i + 1);
            (0..n)
                .map(|k| &agent.schedule[(start + k) % n])
                .find(|l| allowed(l))
                .cloned()
        }
    }
}

/// Next link under the agent's policy, over the whole schedule.
///
/// # Panics
/// If the schedule is empty.
pub fn select_next_link(agent: &AgentState, buffers: &dyn BufferView) -> LinkId {
    select_among(agent, buffers, &|_| true).expect("agent schedule is non-empty")
}

/// Whether a producing agent should leave its active link after the block
/// that just completed.
pub fn should_switch(agent: &AgentState, blocks_since_switch: u32, buffers: &dyn BufferView) -> bool {
    if agent.schedule.len() < 2 {
        return false;
    }
    match agent.policy.variant {
        PolicyVariant::CoordinatedSwitching => blocks_since_switch >= agent.policy.n_blocks,
        PolicyVariant::KeyBalancing => Some(select_next_link(agent, buffers)) != agent.active_link,
    }
}
