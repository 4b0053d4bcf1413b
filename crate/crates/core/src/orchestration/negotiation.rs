//! Propose/ack handshake between the two agents of a link, and the
//! maintenance timeout-skip.
//!
//! Handshake: the initiator sends `PROPOSE(link)`; the peer answers `ACK` if
//! it is willing, or nothing if the link is dark. Willing means any of: the
//! peer does not initiate switches, it is idle, or it is itself waiting to
//! bring up the same link. On `ACK` both sides commit together after the
//! switch reconfiguration delay. Without an answer the initiator waits and
//! retries after `skip_timeout`.

use serde::{Deserialize, Serialize};

use super::{select_among, AgentPhase, AgentState, BufferView, SwitchCause, SwitchEvent};
use crate::simcore::SimTime;
use crate::topology::LinkId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PendingReason {
    /// Link is dark; the proposal got no answer.
    NoResponse,
    /// Peer is producing on or negotiating another link.
    PeerBusy,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Negotiation {
    /// Both sides switch at `at`. An event is `None` when that agent is
    /// already on `to_link`.
    Committed {
        at: SimTime,
        initiator: Option<SwitchEvent>,
        peer: Option<SwitchEvent>,
    },
    Pending { reason: PendingReason, retry_at: SimTime },
}

fn peer_willing(peer: &AgentState, to_link: &LinkId) -> bool {
    !peer.initiates
        || peer.phase == AgentPhase::Idle
        || (peer.phase == AgentPhase::WaitingPeer && peer.target.as_ref() == Some(to_link))
}

fn event_for(agent: &AgentState, to_link: &LinkId, at: SimTime, cause: SwitchCause) -> Option<SwitchEvent> {
    let from = agent.anchor().cloned();
    (from.as_ref() != Some(to_link)).then(|| SwitchEvent {
        time: at,
        node_id: agent.node_id.clone(),
        device: agent.device,
        from_link: from,
        to_link: to_link.clone(),
        cause,
        trace_index: 0,
    })
}

/// Runs the handshake for `to_link` between `initiator` and the agent at its
/// far end.
///
/// On commit both agents move to `NEGOTIATING` until the switch takes effect
/// (see [`commit_switch`]). On pending the initiator waits in `WAITING_PEER`.
pub fn negotiate_switch(
    initiator: &mut AgentState,
    peer: &mut AgentState,
    to_link: &LinkId,
    now: SimTime,
    reconfig_delay: SimTime,
    link_dark: bool,
    cause: SwitchCause,
) -> Negotiation {
    let pending = |initiator: &mut AgentState, reason| {
        initiator.phase = AgentPhase::WaitingPeer;
        initiator.target = Some(to_link.clone());
        Negotiation::Pending {
            reason,
            retry_at: now + initiator.policy.skip_timeout_time(),
        }
    };
    if link_dark {
        return pending(initiator, PendingReason::NoResponse);
    }
    if !peer_willing(peer, to_link) {
        return pending(initiator, PendingReason::PeerBusy);
    }
    let at = now + reconfig_delay;
    let ev_i = event_for(initiator, to_link, at, cause);
    let ev_p = event_for(peer, to_link, at, cause);
    for a in [&mut *initiator, &mut *peer] {
        a.phase = AgentPhase::Negotiating;
        a.target = Some(to_link.clone());
    }
    Negotiation::Committed {
        at,
        initiator: ev_i,
        peer: ev_p,
    }
}

/// Applies a committed switch to one agent: it is now on `link` and aligning.
pub fn commit_switch(agent: &mut AgentState, link: &LinkId) {
    if agent.active_link.as_ref() != Some(link) {
        agent.leave();
    }
    agent.active_link = Some(link.clone());
    agent.phase = AgentPhase::Aligning;
    agent.target = None;
    agent.blocks_since_switch = 0;
}

/// Timeout-skip for an agent whose start attempt on `blocked` went
/// unanswered for `skip_timeout`. Call at attempt time + `skip_timeout`.
///
/// Picks the next schedule entry after `blocked` that is not dark. Returns
/// the skip event, or `None` when every link is dark; the agent is then
/// `IDLE` and should re-probe after another `skip_timeout`.
pub fn handle_maintenance(
    agent: &mut AgentState,
    blocked: &LinkId,
    now: SimTime,
    is_dark: &dyn Fn(&LinkId) -> bool,
) -> Option<SwitchEvent> {
    let n = agent.schedule.len();
    let start = agent.schedule.iter().position(|l| l == blocked).map_or(0, |i| i + 1);
    let next = (0..n)
        .map(|k| &agent.schedule[(start + k) % n])
        .find(|l| *l != blocked && !is_dark(l))
        .cloned();
    agent.leave();
    agent.previous_link = Some(blocked.clone());
    match next {
        Some(to) => {
            agent.phase = AgentPhase::Negotiating;
            agent.target = Some(to.clone());
            Some(SwitchEvent {
                time: now,
                node_id: agent.node_id.clone(),
                device: agent.device,
                from_link: Some(blocked.clone()),
                to_link: to,
                cause: SwitchCause::MaintenanceSkip,
                trace_index: 0,
            })
        }
        None => {
            agent.phase = AgentPhase::Idle;
            agent.target = None;
            None
        }
    }
}

/// Link an idle agent should try when re-probing, skipping dark links.
pub fn reprobe_target(agent: &AgentState, buffers: &dyn BufferView, is_dark: &dyn Fn(&LinkId) -> bool) -> Option<LinkId> {
    select_among(agent, buffers, &|l| !is_dark(l))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::orchestration::SwitchPolicy;
    use crate::topology::NodeId;

    fn l(s: &str) -> LinkId {
        LinkId::from(s)
    }

    fn pair() -> (AgentState, AgentState) {
        let s = AgentState::new(NodeId::from("S"), 0, vec![l("L1"), l("L2")], SwitchPolicy::coordinated(2), true);
        let e = AgentState::new(NodeId::from("E"), 0, vec![l("L2")], SwitchPolicy::coordinated(2), false);
        (s, e)
    }

    #[test]
    fn idle_pair_commits_after_reconfig_delay() {
        let (mut s, mut e) = pair();
        let now = SimTime::from_secs(100);
        let out = negotiate_switch(&mut s, &mut e, &l("L2"), now, SimTime::from_secs(5), false, SwitchCause::Startup);
        let Negotiation::Committed { at, initiator, peer } = out else {
            panic!("expected commit, got {out:?}");
        };
        assert_eq!(at, SimTime::from_secs(105));
        assert_eq!(initiator.unwrap().time, at);
        assert_eq!(peer.unwrap().time, at);
        assert_eq!(s.phase, AgentPhase::Negotiating);
        commit_switch(&mut s, &l("L2"));
        commit_switch(&mut e, &l("L2"));
        assert_eq!(s.active_link, e.active_link);
        assert_eq!(s.phase, AgentPhase::Aligning);
    }

    #[test]
    fn zero_delay_commits_now() {
        let (mut s, mut e) = pair();
        let now = SimTime::from_secs(7);
        match negotiate_switch(&mut s, &mut e, &l("L2"), now, SimTime::ZERO, false, SwitchCause::Policy) {
            Negotiation::Committed { at, .. } => assert_eq!(at, now),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn dark_link_is_pending_until_skip_timeout() {
        let (mut s, mut e) = pair();
        let now = SimTime::from_secs(1000);
        let out = negotiate_switch(&mut s, &mut e, &l("L2"), now, SimTime::from_secs(5), true, SwitchCause::Policy);
        assert_eq!(
            out,
            Negotiation::Pending {
                reason: PendingReason::NoResponse,
                retry_at: SimTime::from_secs(1060)
            }
        );
        assert_eq!(s.phase, AgentPhase::WaitingPeer);
        assert_eq!(e.phase, AgentPhase::Idle);
    }

    #[test]
    fn busy_initiator_peer_defers() {
        let (mut s, _) = pair();
        let mut t = AgentState::new(NodeId::from("T"), 0, vec![l("L2"), l("L3")], SwitchPolicy::coordinated(2), true);
        t.active_link = Some(l("L3"));
        t.phase = AgentPhase::Producing;
        let out = negotiate_switch(&mut s, &mut t, &l("L2"), SimTime::ZERO, SimTime::ZERO, false, SwitchCause::Policy);
        assert!(matches!(out, Negotiation::Pending { reason: PendingReason::PeerBusy, .. }));
        // once t is waiting on the same link it acks
        t.phase = AgentPhase::WaitingPeer;
        t.target = Some(l("L2"));
        let out = negotiate_switch(&mut t, &mut s, &l("L2"), SimTime::ZERO, SimTime::ZERO, false, SwitchCause::Policy);
        assert!(matches!(out, Negotiation::Committed { .. }));
    }

    #[test]
    fn no_event_when_already_on_link() {
        let (mut s, mut e) = pair();
        e.previous_link = Some(l("L2"));
        match negotiate_switch(&mut s, &mut e, &l("L2"), SimTime::ZERO, SimTime::ZERO, false, SwitchCause::Policy) {
            Negotiation::Committed { initiator, peer, .. } => {
                assert!(initiator.is_some());
                assert!(peer.is_none());
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn maintenance_skips_to_next_live_link() {
        let (mut s, _) = pair();
        let attempt = SimTime::from_secs(500);
        let timeout = s.policy.skip_timeout_time();
        let ev = handle_maintenance(&mut s, &l("L1"), attempt + timeout, &|x| x == &l("L1")).unwrap();
        assert_eq!(ev.to_link, l("L2"));
        assert_eq!(ev.from_link, Some(l("L1")));
        assert_eq!(ev.cause, SwitchCause::MaintenanceSkip);
        assert_eq!(ev.time, SimTime::from_secs(560));
        assert_eq!(s.target, Some(l("L2")));
    }

    #[test]
    fn total_outage_idles() {
        let (mut s, _) = pair();
        assert_eq!(handle_maintenance(&mut s, &l("L1"), SimTime::from_secs(60), &|_| true), None);
        assert_eq!(s.phase, AgentPhase::Idle);
        assert_eq!(reprobe_target(&s, &|_: &LinkId| 0, &|_| true), None);
        // first live link after the one it left
        assert_eq!(reprobe_target(&s, &|_: &LinkId| 0, &|_| false), Some(l("L2")));
    }
}
