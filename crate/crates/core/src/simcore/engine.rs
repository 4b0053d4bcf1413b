use std::collections::{BTreeMap, HashMap};

use super::queue::{EventKey, EventQueue, Lane};
use super::result::{ProposeOutcome, RunResult, TraceEvent, TraceKind};
use super::SimTime;
use crate::kms::{consumer_tick, deposit_block, KeyMaterial, KeyStore};
use crate::linkmodel::{next_block_with, BlockParams, BlockRecord, EntropyBound, LinkState, SecretFraction};
use crate::orchestration::{
    commit_switch, handle_maintenance, negotiate_switch, reprobe_target, select_among, select_next_link, should_switch,
    AgentPhase, AgentState, Controller, Negotiation, PolicyVariant, SwitchCause, SwitchEvent, SwitchPolicy,
};
use crate::topology::{ControlVerb, LinkId, NodeRole, Scenario};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunOptions {
    /// Keep the hex of every delivered key in the rekey log.
    pub record_key_material: bool,
    /// Check agent, link and store invariants after every event.
    pub check_invariants: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            record_key_material: false,
            check_invariants: cfg!(debug_assertions),
        }
    }
}

/// Runs a validated scenario to completion.
pub fn run(scenario: &Scenario) -> RunResult {
    run_with(scenario, &RunOptions::default())
}

pub fn run_with(scenario: &Scenario, opts: &RunOptions) -> RunResult {
    run_with_model(scenario, opts, &EntropyBound)
}

pub fn run_with_model(scenario: &Scenario, opts: &RunOptions, model: &dyn SecretFraction) -> RunResult {
    let mut engine = Engine::new(scenario, opts, model);
    engine.inject_fault_schedule();
    engine.schedule_start();
    engine.run_to_end();
    engine.finish()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Probe {
    /// Start attempt on a dark link went unanswered.
    Blocked { link: usize, cause: SwitchCause },
    PeerBusy { link: usize, cause: SwitchCause },
    /// Nothing to do; look again.
    Idle { cause: SwitchCause },
}

#[derive(Debug, Clone)]
enum Ev {
    Startup,
    BlockComplete { link: usize },
    SwitchCommit { link: usize, agents: [usize; 2], cause: SwitchCause, events: Vec<SwitchEvent> },
    MaintenanceStart { window: usize },
    MaintenanceEnd { window: usize },
    ConsumerTick { consumer: usize, k: u64 },
    ProbeRetry { agent: usize, probe: Probe, armed_at: SimTime },
    ControllerFault,
    Control { index: usize },
}

struct LinkRt {
    state: LinkState,
    agents: [usize; 2],
    stores: [usize; 2],
    dark: u32,
    in_flight: Option<(EventKey, BlockRecord)>,
}

#[derive(Default)]
struct AgentRt {
    probe: Option<EventKey>,
    /// Link already announced by a skip event, so the later commit is not
    /// reported twice.
    announced: Option<LinkId>,
    node: usize,
}

struct Engine<'a> {
    sc: &'a Scenario,
    opts: RunOptions,
    model: &'a dyn SecretFraction,
    params: BlockParams,
    reconfig: SimTime,
    end: SimTime,
    queue: EventQueue<Ev>,
    now: SimTime,
    current_seq: Option<u64>,
    links: Vec<LinkRt>,
    agents: Vec<AgentState>,
    agent_rt: Vec<AgentRt>,
    stores: Vec<KeyStore>,
    controller: Controller,
    out: RunResult,
}

fn two_mut<T>(v: &mut [T], a: usize, b: usize) -> (&mut T, &mut T) {
    assert_ne!(a, b);
    if a < b {
        let (l, r) = v.split_at_mut(b);
        (&mut l[a], &mut r[0])
    } else {
        let (l, r) = v.split_at_mut(a);
        (&mut r[0], &mut l[b])
    }
}

impl<'a> Engine<'a> {
    fn new(sc: &'a Scenario, opts: &RunOptions, model: &'a dyn SecretFraction) -> Self {
        let topo = &sc.topology;
        let material = KeyMaterial::new(sc.seed);
        let node_index: HashMap<_, _> = topo.nodes.iter().enumerate().map(|(i, n)| (n.id.clone(), i)).collect();
        let stores = topo
            .nodes
            .iter()
            .map(|n| {
                let links = topo
                    .incident_links(&n.id)
                    .into_iter()
                    .map(|l| (l.id.clone(), topo.link_index(&l.id).expect("incident link exists") as u32));
                KeyStore::new(n.id.clone(), material, links)
            })
            .collect();

        // one agent per (node, device) that terminates at least one link
        let ports = topo.port_map();
        let mut agents = Vec::new();
        let mut agent_rt = Vec::new();
        let mut agent_of = HashMap::new();
        for (ni, node) in topo.nodes.iter().enumerate() {
            let incident = topo.incident_links(&node.id);
            let node_policy = sc.policy.get(&node.id);
            for device in 0..node.device_count {
                let mine: Vec<&LinkId> = incident
                    .iter()
                    .map(|l| &l.id)
                    .filter(|l| ports[&(node.id.clone(), (*l).clone())].device == device)
                    .collect();
                if mine.is_empty() {
                    continue;
                }
                let mut schedule: Vec<LinkId> = match node_policy {
                    Some(p) => p.schedule.iter().filter(|l| mine.contains(l)).cloned().collect(),
                    None => Vec::new(),
                };
                for l in &mine {
                    if !schedule.contains(l) {
                        schedule.push((*l).clone());
                    }
                }
                let policy = node_policy.map_or_else(|| SwitchPolicy::coordinated(1), |p| p.policy.clone());
                let initiates = match node.role {
                    NodeRole::Intermediate => true,
                    // an endpoint only drives a link whose far end is another endpoint
                    NodeRole::Endpoint => mine.iter().any(|l| {
                        let spec = topo.link(l).expect("link exists");
                        let far = &spec.endpoints[1];
                        spec.endpoints[0] == node.id
                            && topo.node(far).is_some_and(|n| n.role == NodeRole::Endpoint)
                    }),
                };
                for l in &mine {
                    agent_of.insert(((*l).clone(), ni), agents.len());
                }
                agents.push(AgentState::new(node.id.clone(), device, schedule, policy, initiates));
                agent_rt.push(AgentRt {
                    node: ni,
                    ..AgentRt::default()
                });
            }
        }

        let links = topo
            .links
            .iter()
            .map(|l| {
                let s = l.endpoints.clone().map(|n| node_index[&n]);
                LinkRt {
                    state: LinkState::new(l, sc.seed),
                    agents: s.map(|ni| agent_of[&(l.id.clone(), ni)]),
                    stores: s,
                    dark: 0,
                    in_flight: None,
                }
            })
            .collect();

        let mut engine = Self {
            sc,
            opts: *opts,
            model,
            params: BlockParams::from(sc),
            reconfig: SimTime::from_secs_f64(sc.switch_reconfig_delay),
            end: SimTime::from_secs_f64(sc.duration),
            queue: EventQueue::new(),
            now: SimTime::ZERO,
            current_seq: None,
            links,
            agents,
            agent_rt,
            stores,
            controller: Controller::new(),
            out: RunResult::empty(sc),
        };
        // initial configuration push; agents already hold their policies
        engine.controller.controller_push(&BTreeMap::new(), &mut engine.agents, SimTime::ZERO);
        engine
    }

    /// Enqueues maintenance windows, the controller fault and scripted
    /// controller commands.
    fn inject_fault_schedule(&mut self) {
        for (w, win) in self.sc.maintenance.iter().enumerate() {
            self.queue
                .schedule(SimTime::from_secs_f64(win.start), Lane::Network, Ev::MaintenanceStart { window: w });
            self.queue
                .schedule(SimTime::from_secs_f64(win.end), Lane::Network, Ev::MaintenanceEnd { window: w });
        }
        if let Some(t) = self.sc.controller_fault_time {
            self.queue.schedule(SimTime::from_secs_f64(t), Lane::Controller, Ev::ControllerFault);
        }
        for (i, c) in self.sc.control.iter().enumerate() {
            self.queue
                .schedule(SimTime::from_secs_f64(c.at), Lane::Controller, Ev::Control { index: i });
        }
    }

    fn schedule_start(&mut self) {
        self.queue.schedule(SimTime::ZERO, Lane::Network, Ev::Startup);
        for c in 0..self.sc.consumers.len() {
            self.queue
                .schedule(SimTime::ZERO, Lane::Network, Ev::ConsumerTick { consumer: c, k: 0 });
        }
    }

    fn run_to_end(&mut self) {
        while let Some(key) = self.queue.peek_key() {
            if key.time >= self.end {
                break;
            }
            let (key, ev) = self.queue.pop().expect("peeked");
            debug_assert!(key.time >= self.now, "time went backwards");
            self.now = key.time;
            self.current_seq = (key.lane == Lane::Network).then_some(key.seq);
            self.dispatch(ev);
            if self.opts.check_invariants {
                self.check_invariants();
            }
        }
    }

    fn finish(mut self) -> RunResult {
        if self.opts.check_invariants {
            for s in &self.stores {
                if let Err(e) = s.check_conservation() {
                    panic!("key conservation violated at {}: {e}", s.node());
                }
            }
        }
        for (li, spec) in self.sc.topology.links.iter().enumerate() {
            let [a, b] = self.links[li].stores;
            let level = self.stores[a].buffered_bytes(&spec.id);
            assert_eq!(level, self.stores[b].buffered_bytes(&spec.id), "stores of {} diverged", spec.id);
            self.out.final_buffers.insert(spec.id.clone(), level);
        }
        self.out.controller_log = self.controller.into_log();
        self.out
    }

    fn trace(&mut self, kind: TraceKind) -> u64 {
        let index = self.out.events.len() as u64;
        self.out.events.push(TraceEvent {
            index,
            time: self.now,
            queue_seq: self.current_seq,
            kind,
        });
        index
    }

    fn link_id(&self, li: usize) -> &'a LinkId {
        &self.sc.topology.links[li].id
    }

    fn link_idx(&self, id: &LinkId) -> usize {
        self.sc.topology.link_index(id).expect("link ids are validated")
    }

    fn other_end(&self, li: usize, agent: usize) -> usize {
        let [a, b] = self.links[li].agents;
        if a == agent {
            b
        } else {
            a
        }
    }

    fn dark_map(&self) -> Vec<bool> {
        self.links.iter().map(|l| l.dark > 0).collect()
    }

    fn buffers_of(&self, agent: usize) -> BTreeMap<LinkId, u64> {
        let store = &self.stores[self.agent_rt[agent].node];
        self.agents[agent]
            .schedule
            .iter()
            .map(|l| (l.clone(), store.buffered_bytes(l)))
            .collect()
    }

    fn arm_probe(&mut self, agent: usize, probe: Probe) {
        self.cancel_probe(agent);
        let at = self.now + self.agents[agent].policy.skip_timeout_time();
        let key = self.queue.schedule(
            at,
            Lane::Network,
            Ev::ProbeRetry {
                agent,
                probe,
                armed_at: self.now,
            },
        );
        self.agent_rt[agent].probe = Some(key);
    }

    fn cancel_probe(&mut self, agent: usize) {
        if let Some(k) = self.agent_rt[agent].probe.take() {
            self.queue.cancel(k);
        }
    }

    fn dispatch(&mut self, ev: Ev) {
        match ev {
            Ev::Startup => self.on_startup(),
            Ev::BlockComplete { link } => self.on_block_complete(link),
            Ev::SwitchCommit { link, agents, cause, events } => self.on_commit(link, agents, cause, events),
            Ev::MaintenanceStart { window } => self.on_maintenance_start(window),
            Ev::MaintenanceEnd { window } => self.on_maintenance_end(window),
            Ev::ConsumerTick { consumer, k } => self.on_consumer_tick(consumer, k),
            Ev::ProbeRetry { agent, probe, armed_at } => self.on_probe(agent, probe, armed_at),
            Ev::ControllerFault => self.controller.controller_fault(self.now),
            Ev::Control { index } => self.on_control(index),
        }
    }

    fn on_startup(&mut self) {
        self.trace(TraceKind::Startup);
        for a in 0..self.agents.len() {
            let ag = &self.agents[a];
            if !ag.initiates || ag.phase != AgentPhase::Idle {
                continue;
            }
            let to = select_next_link(ag, &self.buffers_of(a));
            self.propose(a, self.link_idx(&to), SwitchCause::Startup);
        }
    }

    fn start_block(&mut self, li: usize, first: bool) {
        let spec = &self.sc.topology.links[li];
        let rec = next_block_with(&mut self.links[li].state, spec, &self.params, first, self.now, self.model);
        let key = self.queue.schedule(rec.end_time, Lane::Network, Ev::BlockComplete { link: li });
        self.links[li].in_flight = Some((key, rec));
        for a in self.links[li].agents {
            self.agents[a].phase = if first { AgentPhase::Aligning } else { AgentPhase::Producing };
        }
    }

    fn abort_block(&mut self, li: usize) {
        if let Some((key, rec)) = self.links[li].in_flight.take() {
            self.queue.cancel(key);
            self.trace(TraceKind::BlockAborted {
                link: rec.link_id,
                seq: rec.seq,
            });
        }
    }

    fn on_block_complete(&mut self, li: usize) {
        let (_, rec) = self.links[li].in_flight.take().expect("completed block was in flight");
        self.trace(TraceKind::BlockComplete {
            link: rec.link_id.clone(),
            seq: rec.seq,
        });
        let [sa, sb] = self.links[li].stores;
        let (store_a, store_b) = two_mut(&mut self.stores, sa, sb);
        deposit_block(store_a, store_b, &rec);
        self.out.blocks.push(rec);

        let ends = self.links[li].agents;
        let mut plans = Vec::with_capacity(2);
        for a in ends {
            let ag = &mut self.agents[a];
            ag.blocks_since_switch += 1;
            ag.phase = AgentPhase::Producing;
            let ag = &self.agents[a];
            if ag.initiates {
                let buffers = self.buffers_of(a);
                let next = should_switch(ag, ag.blocks_since_switch, &buffers).then(|| select_next_link(ag, &buffers));
                plans.push((a, next));
            }
        }
        if plans.iter().all(|(_, next)| next.is_none()) {
            self.start_block(li, false);
            return;
        }
        for a in ends {
            self.agents[a].leave();
            self.agents[a].phase = AgentPhase::Idle;
        }
        let here = self.link_id(li);
        for (a, next) in plans {
            match next {
                Some(to) => self.propose(a, self.link_idx(&to), SwitchCause::Policy),
                // peer walked away; this side picks something else
                None => self.reselect(a, Some(here), SwitchCause::Policy),
            }
        }
    }

    /// Initiator `a` tries to bring up link `li`.
    fn propose(&mut self, a: usize, li: usize, cause: SwitchCause) {
        self.cancel_probe(a);
        let p = self.other_end(li, a);
        let to = self.link_id(li);
        let dark = self.links[li].dark > 0;
        let (ia, pa) = two_mut(&mut self.agents, a, p);
        let out = negotiate_switch(ia, pa, to, self.now, self.reconfig, dark, cause);
        let (from_ref, to_ref) = (self.agents[a].agent_ref(), self.agents[p].agent_ref());
        let outcome = match &out {
            Negotiation::Committed { at, .. } => ProposeOutcome::Ack { commit_at: *at },
            Negotiation::Pending { reason, .. } => (*reason).into(),
        };
        self.trace(TraceKind::SwitchPropose {
            from: from_ref,
            to: to_ref,
            link: to.clone(),
            cause,
            outcome,
        });
        match out {
            Negotiation::Committed { at, initiator, peer } => {
                self.cancel_probe(p);
                let mut events = Vec::with_capacity(2);
                if self.agent_rt[a].announced.as_ref() != Some(to) {
                    events.extend(initiator);
                }
                events.extend(peer);
                self.queue.schedule(
                    at,
                    Lane::Network,
                    Ev::SwitchCommit {
                        link: li,
                        agents: [a, p],
                        cause,
                        events,
                    },
                );
            }
            Negotiation::Pending { reason, .. } => {
                let probe = match reason {
                    crate::orchestration::PendingReason::NoResponse => Probe::Blocked { link: li, cause },
                    crate::orchestration::PendingReason::PeerBusy => Probe::PeerBusy { link: li, cause },
                };
                self.arm_probe(a, probe);
            }
        }
    }

    /// Picks a new link for an initiator that lost its current one.
    fn reselect(&mut self, a: usize, exclude: Option<&LinkId>, cause: SwitchCause) {
        let buffers = self.buffers_of(a);
        match select_among(&self.agents[a], &buffers, &|l| Some(l) != exclude) {
            Some(to) => self.propose(a, self.link_idx(&to), cause),
            None => {
                self.agents[a].phase = AgentPhase::Idle;
                self.agents[a].target = None;
                self.arm_probe(a, Probe::Idle { cause });
            }
        }
    }

    /// The far end of `li` from `a` loses its partner.
    fn release_peer(&mut self, a: usize, li: usize, cause: SwitchCause) {
        let b = self.other_end(li, a);
        let link = self.link_id(li);
        if self.agents[b].active_link.as_ref() != Some(link) || self.agents[b].phase == AgentPhase::Negotiating {
            return;
        }
        self.cancel_probe(b);
        self.agents[b].leave();
        if self.agents[b].initiates {
            self.reselect(b, Some(link), cause);
        } else {
            self.agents[b].phase = AgentPhase::Idle;
            self.agents[b].target = None;
        }
    }

    fn on_commit(&mut self, li: usize, pair: [usize; 2], cause: SwitchCause, events: Vec<SwitchEvent>) {
        let link = self.link_id(li);
        let idx = self.trace(TraceKind::SwitchCommit {
            link: link.clone(),
            agents: pair.map(|a| self.agents[a].agent_ref()),
            cause,
        });
        for mut ev in events {
            ev.trace_index = idx;
            self.out.switches.push(ev);
        }
        for a in pair {
            commit_switch(&mut self.agents[a], link);
            self.agent_rt[a].announced = None;
        }
        if self.links[li].dark > 0 {
            self.link_went_dark(li, cause);
        } else {
            self.start_block(li, true);
        }
    }

    /// Both agents sit on a dark link; initiators start their skip timers.
    fn link_went_dark(&mut self, li: usize, cause: SwitchCause) {
        let link = self.link_id(li);
        for a in self.links[li].agents {
            if self.agents[a].active_link.as_ref() != Some(link) {
                continue;
            }
            if self.agents[a].initiates {
                self.agents[a].phase = AgentPhase::WaitingPeer;
                self.agents[a].target = Some(link.clone());
                self.arm_probe(a, Probe::Blocked { link: li, cause });
            } else {
                self.agents[a].phase = AgentPhase::Idle;
            }
        }
    }

    fn on_maintenance_start(&mut self, w: usize) {
        let li = self.link_idx(&self.sc.maintenance[w].link);
        self.trace(TraceKind::MaintenanceStart {
            link: self.link_id(li).clone(),
            window: w,
        });
        self.links[li].dark += 1;
        if self.links[li].dark == 1 && self.links[li].in_flight.is_some() {
            self.abort_block(li);
            self.link_went_dark(li, SwitchCause::Policy);
        }
    }

    fn on_maintenance_end(&mut self, w: usize) {
        let li = self.link_idx(&self.sc.maintenance[w].link);
        self.trace(TraceKind::MaintenanceEnd {
            link: self.link_id(li).clone(),
            window: w,
        });
        self.links[li].dark -= 1;
    }

    fn on_probe(&mut self, a: usize, probe: Probe, armed_at: SimTime) {
        self.agent_rt[a].probe = None;
        let link = match probe {
            Probe::Blocked { link, .. } | Probe::PeerBusy { link, .. } => Some(self.link_id(link).clone()),
            Probe::Idle { .. } => None,
        };
        let idx = self.trace(TraceKind::ProbeRetry {
            agent: self.agents[a].agent_ref(),
            link,
            armed_at,
        });
        match probe {
            Probe::Blocked { link: li, cause } => {
                let link = self.link_id(li);
                if self.links[li].dark == 0 {
                    let b = self.other_end(li, a);
                    let both_on = self.agents[a].active_link.as_ref() == Some(link)
                        && self.agents[b].active_link.as_ref() == Some(link);
                    if both_on {
                        // window closed while we waited; resume in place
                        self.start_block(li, true);
                    } else {
                        self.propose(a, li, cause);
                    }
                    return;
                }
                let dark = self.dark_map();
                let sched_dark = |l: &LinkId| dark[self.sc.topology.link_index(l).expect("known link")];
                let was_on = self.agents[a].active_link.as_ref() == Some(link);
                let skip = handle_maintenance(&mut self.agents[a], link, self.now, &sched_dark);
                if was_on {
                    self.release_peer(a, li, SwitchCause::MaintenanceSkip);
                }
                match skip {
                    Some(mut ev) => {
                        ev.trace_index = idx;
                        let to = self.link_idx(&ev.to_link);
                        self.agent_rt[a].announced = Some(ev.to_link.clone());
                        self.out.switches.push(ev);
                        self.propose(a, to, SwitchCause::MaintenanceSkip);
                    }
                    None => self.arm_probe(
                        a,
                        Probe::Idle {
                            cause: SwitchCause::MaintenanceSkip,
                        },
                    ),
                }
            }
            Probe::PeerBusy { link: li, cause } => {
                let to = match self.agents[a].policy.variant {
                    PolicyVariant::KeyBalancing => self.link_idx(&select_next_link(&self.agents[a], &self.buffers_of(a))),
                    PolicyVariant::CoordinatedSwitching => li,
                };
                self.propose(a, to, cause);
            }
            Probe::Idle { cause } => {
                let dark = self.dark_map();
                let buffers = self.buffers_of(a);
                let target = reprobe_target(&self.agents[a], &buffers, &|l: &LinkId| {
                    dark[self.sc.topology.link_index(l).expect("known link")]
                });
                match target {
                    Some(to) => self.propose(a, self.link_idx(&to), cause),
                    None => self.arm_probe(a, Probe::Idle { cause }),
                }
            }
        }
    }

    fn on_consumer_tick(&mut self, c: usize, k: u64) {
        let consumer = &self.sc.consumers[c];
        let li = self.link_idx(&consumer.link);
        let [near, far] = self.links[li].stores;
        let (near, far) = two_mut(&mut self.stores, near, far);
        let mut ev = consumer_tick(consumer, near, far, self.now, self.opts.record_key_material);
        ev.trace_index = self.trace(TraceKind::ConsumerTick {
            consumer: consumer.id.clone(),
            source: ev.source,
        });
        self.out.rekeys.push(ev);
        let next = SimTime::from_secs_f64((k + 1) as f64 * consumer.rekey_interval);
        if next < self.end {
            self.queue
                .schedule(next, Lane::Network, Ev::ConsumerTick { consumer: c, k: k + 1 });
        }
    }

    fn on_control(&mut self, index: usize) {
        let cmd = &self.sc.control[index];
        let now = self.now;
        match cmd.verb {
            ControlVerb::SetPolicy => {
                let policy = cmd.policy.clone().expect("set-policy carries a policy");
                let cfg = [(cmd.node.clone(), policy)].into_iter().collect();
                self.controller.controller_push(&cfg, &mut self.agents, now);
            }
            ControlVerb::GetStatus => {
                if let Some(r) = self.controller.get_status(now, &cmd.node, &self.agents) {
                    self.out.status_reports.push(r);
                }
            }
            ControlVerb::ForceSwitch => {
                let link = cmd.link.as_ref().expect("force-switch names a link");
                if !self.controller.force_switch(now, &cmd.node, link) {
                    return;
                }
                let li = self.link_idx(link);
                let a = self.links[li]
                    .agents
                    .into_iter()
                    .find(|&a| self.agents[a].node_id == cmd.node)
                    .expect("force-switch node terminates the link");
                let ag = &self.agents[a];
                if ag.phase == AgentPhase::Negotiating || ag.active_link.as_ref() == Some(link) {
                    self.controller.reject(now, "force-switch", Some(&cmd.node), "agent busy or already on link");
                    return;
                }
                if let Some(old) = ag.active_link.clone() {
                    let old = self.link_idx(&old);
                    self.abort_block(old);
                    self.agents[a].leave();
                    self.release_peer(a, old, SwitchCause::Forced);
                }
                self.propose(a, li, SwitchCause::Forced);
            }
        }
    }

    fn check_invariants(&self) {
        for (li, l) in self.links.iter().enumerate() {
            let id = self.link_id(li);
            if l.in_flight.is_some() {
                assert_eq!(l.dark, 0, "{id} producing while dark at {}", self.now);
                for a in l.agents {
                    assert_eq!(self.agents[a].active_link.as_ref(), Some(id), "{id} producing without agent at {}", self.now);
                }
            }
            let [a, b] = l.agents.map(|a| &self.agents[a]);
            if a.phase != AgentPhase::Negotiating && b.phase != AgentPhase::Negotiating {
                let on = |x: &AgentState| x.active_link.as_ref() == Some(id);
                assert_eq!(on(a), on(b), "agents disagree on {id} at {}", self.now);
            }
        }
        for a in &self.agents {
            if let Some(l) = &a.active_link {
                assert!(a.schedule.contains(l), "{} active on unscheduled {l}", a.agent_ref());
            }
        }
        for s in &self.stores {
            if let Err(e) = s.check_counters() {
                panic!("store counters broken at {} ({}): {e}", s.node(), self.now);
            }
        }
    }
}
