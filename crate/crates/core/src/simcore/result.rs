use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::SimTime;
use crate::kms::{KeySource, RekeyEvent};
use crate::linkmodel::BlockRecord;
use crate::orchestration::{AgentRef, ControllerLogEntry, PendingReason, StatusReport, SwitchCause, SwitchEvent};
use crate::topology::{LinkId, NodeId, NodeRole, Scenario};

/// Version of the serialized [`RunResult`] layout.
pub const RESULT_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "kebab-case")]
pub enum ProposeOutcome {
    Ack { commit_at: SimTime },
    NoResponse,
    PeerBusy,
}

impl From<PendingReason> for ProposeOutcome {
    fn from(r: PendingReason) -> Self {
        match r {
            PendingReason::NoResponse => ProposeOutcome::NoResponse,
            PendingReason::PeerBusy => ProposeOutcome::PeerBusy,
        }
    }
}

/// What happened at one trace entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TraceKind {
    Startup,
    BlockComplete {
        link: LinkId,
        seq: u64,
    },
    /// A block cut short by a maintenance window or a forced switch.
    BlockAborted {
        link: LinkId,
        seq: u64,
    },
    SwitchPropose {
        from: AgentRef,
        to: AgentRef,
        link: LinkId,
        cause: SwitchCause,
        #[serde(flatten)]
        outcome: ProposeOutcome,
    },
    SwitchCommit {
        link: LinkId,
        agents: [AgentRef; 2],
        cause: SwitchCause,
    },
    MaintenanceStart {
        link: LinkId,
        window: usize,
    },
    MaintenanceEnd {
        link: LinkId,
        window: usize,
    },
    ConsumerTick {
        consumer: String,
        source: KeySource,
    },
    ProbeRetry {
        agent: AgentRef,
        link: Option<LinkId>,
        armed_at: SimTime,
    },
}

/// One entry of the network event trace.
///
/// `queue_seq` is the queue sequence number of the event being executed; entries
/// emitted while handling a controller command carry `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub index: u64,
    pub time: SimTime,
    pub queue_seq: Option<u64>,
    #[serde(flatten)]
    pub kind: TraceKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeSummary {
    pub id: NodeId,
    pub role: NodeRole,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkSummary {
    pub id: LinkId,
    pub endpoints: [NodeId; 2],
}

/// Everything a run produced. The trace covers network events only;
/// controller activity is in `controller_log`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub format_version: u32,
    pub seed: u64,
    pub duration: SimTime,
    pub nodes: Vec<NodeSummary>,
    pub links: Vec<LinkSummary>,
    pub events: Vec<TraceEvent>,
    pub blocks: Vec<BlockRecord>,
    pub switches: Vec<SwitchEvent>,
    pub rekeys: Vec<RekeyEvent>,
    pub final_buffers: BTreeMap<LinkId, u64>,
    pub controller_log: Vec<ControllerLogEntry>,
    pub status_reports: Vec<StatusReport>,
}

impl RunResult {
    pub fn empty(scenario: &Scenario) -> Self {
        Self {
            format_version: RESULT_FORMAT_VERSION,
            seed: scenario.seed,
            duration: SimTime::from_secs_f64(scenario.duration),
            nodes: scenario
                .topology
                .nodes
                .iter()
                .map(|n| NodeSummary {
                    id: n.id.clone(),
                    role: n.role,
                })
                .collect(),
            links: scenario
                .topology
                .links
                .iter()
                .map(|l| LinkSummary {
                    id: l.id.clone(),
                    endpoints: l.endpoints.clone(),
                })
                .collect(),
            events: Vec::new(),
            blocks: Vec::new(),
            switches: Vec::new(),
            rekeys: Vec::new(),
            final_buffers: BTreeMap::new(),
            controller_log: Vec::new(),
            status_reports: Vec::new(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("run results always serialize")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn blocks_on<'a>(&'a self, link: &'a LinkId) -> impl Iterator<Item = &'a BlockRecord> + 'a {
        self.blocks.iter().filter(move |b| &b.link_id == link)
    }

    pub fn intermediate_nodes(&self) -> impl Iterator<Item = &NodeId> {
        self.nodes
            .iter()
            .filter(|n| n.role == NodeRole::Intermediate)
            .map(|n| &n.id)
    }

    /// Trace entry for a block, found through its `BlockComplete` event.
    pub fn block_event(&self, block: &BlockRecord) -> Option<&TraceEvent> {
        self.events.iter().find(|e| {
            matches!(&e.kind, TraceKind::BlockComplete { link, seq } if link == &block.link_id && *seq == block.seq)
        })
    }
}
