use qkdsim_core::orchestration::ControllerLogKind;
use qkdsim_core::simcore::{run_with, RunOptions, RunResult, SimTime, TraceKind};
use qkdsim_core::topology::{parse_scenario, venqci_preset, LinkId, MaintenanceWindow, NodeId, Scenario};
use qkdsim_core::{run, SwitchCause};

fn preset_days(days: f64) -> Scenario {
    let mut s = venqci_preset();
    s.duration = days * 86_400.0;
    s
}

fn window(link: &str, start: f64, end: f64) -> MaintenanceWindow {
    MaintenanceWindow {
        link: LinkId::from(link),
        start,
        end,
    }
}

fn overlapping(r: &RunResult, link: &str, start: f64, end: f64) -> usize {
    let (a, b) = (SimTime::from_secs_f64(start), SimTime::from_secs_f64(end));
    r.blocks_on(&LinkId::from(link))
        .filter(|blk| blk.start_time < b && blk.end_time > a)
        .count()
}

#[test]
fn zero_duration_is_empty() {
    let r = run(&preset_days(0.0));
    assert!(r.events.is_empty());
    assert!(r.blocks.is_empty() && r.switches.is_empty() && r.rekeys.is_empty());
}

#[test]
fn runs_are_reproducible() {
    let s = preset_days(3.0);
    assert_eq!(run(&s).to_json(), run(&s).to_json());
    let mut other = s.clone();
    other.seed = 43;
    assert_ne!(run(&s).blocks, run(&other).blocks);
}

#[test]
fn result_json_round_trips() {
    let r = run(&preset_days(0.5));
    let back = RunResult::from_json(&r.to_json()).unwrap();
    assert!(back.blocks == r.blocks, "block floats must survive");
    assert!(back == r);
}

#[test]
fn trace_is_ordered_and_cross_referenced() {
    let r = run(&preset_days(2.0));
    assert!(r.events.windows(2).all(|w| (w[0].time, w[0].index) < (w[1].time, w[1].index)));
    for b in &r.blocks {
        let e = r.block_event(b).expect("every block has a trace entry");
        assert_eq!(e.time, b.end_time);
    }
    for s in &r.switches {
        assert_eq!(r.events[s.trace_index as usize].time, s.time);
        assert_ne!(s.from_link.as_ref(), Some(&s.to_link));
    }
    for k in &r.rekeys {
        assert!(matches!(r.events[k.trace_index as usize].kind, TraceKind::ConsumerTick { .. }));
    }
}

#[test]
fn block_count_matches_active_time() {
    let r = run(&preset_days(10.0));
    for l in &r.links {
        let blocks: Vec<_> = r.blocks_on(&l.id).collect();
        let active: f64 = blocks.iter().map(|b| b.producing_secs()).sum();
        let expected = active / 360.0;
        let n = blocks.len() as f64;
        assert!((n - expected).abs() <= 0.1 * expected, "{}: {n} blocks vs {expected:.0}", l.id);
    }
}

#[test]
fn no_production_on_a_dark_link() {
    let mut s = preset_days(0.5);
    s.maintenance.push(window("CavPD-CavVE", 1000.0, 2000.0));
    let r = run(&s);
    let (a, b) = (SimTime::from_secs(1000), SimTime::from_secs(2000));
    assert!(!r
        .blocks_on(&LinkId::from("CavPD-CavVE"))
        .any(|blk| blk.start_time >= a && blk.start_time < b));
    assert_eq!(overlapping(&r, "CavPD-CavVE", 1000.0, 2000.0), 0);
}

#[test]
fn controller_fault_leaves_trace_unchanged() {
    let s = preset_days(1.0);
    let mut faulted = s.clone();
    faulted.controller_fault_time = Some(100.0);
    let (a, b) = (run(&s), run(&faulted));
    assert_eq!(a.events, b.events);
    assert!(b.controller_log.iter().any(|e| e.kind == ControllerLogKind::Fault));
}

#[test]
fn node_idles_through_overlapping_windows_and_resumes() {
    let mut s = preset_days(0.5);
    s.maintenance.push(window("VSIX-CavPD", 3600.0, 9000.0));
    s.maintenance.push(window("CavPD-CavVE", 5000.0, 10_800.0));
    let r = run(&s);
    assert_eq!(overlapping(&r, "VSIX-CavPD", 3600.0, 9000.0), 0);
    assert_eq!(overlapping(&r, "CavPD-CavVE", 5000.0, 10_800.0), 0);
    // CavPD sits idle and keeps probing while both its links are dark
    let idle_probes = r
        .events
        .iter()
        .filter(|e| e.time.as_secs_f64() > 5000.0 && e.time.as_secs_f64() < 9000.0)
        .filter(|e| matches!(&e.kind, TraceKind::ProbeRetry { agent, link: None, .. } if agent.node == NodeId::from("CavPD")))
        .count();
    assert!(idle_probes >= 50, "{idle_probes} idle probes");
    for l in ["VSIX-CavPD", "CavPD-CavVE"] {
        assert!(r
            .blocks_on(&LinkId::from(l))
            .any(|b| b.start_time.as_secs_f64() >= 10_800.0));
    }
}

const PAIR: &str = r#"
format_version = 1
seed = 5
duration = "2h"
[[nodes]]
id = "A"
role = "endpoint"
[[nodes]]
id = "B"
role = "endpoint"
[[links]]
id = "A-B"
endpoints = ["A", "B"]
fiber_length_km = 5
nominal_sifted_rate = 1389
[[maintenance]]
link = "A-B"
start = 1000
end = 1030
"#;

#[test]
fn link_resumes_at_the_probe_after_a_short_window() {
    let r = run(&parse_scenario(PAIR).unwrap());
    let after: Vec<_> = r.blocks.iter().filter(|b| b.start_time >= SimTime::from_secs(1000)).collect();
    assert!(matches!(
        r.events.iter().find(|e| e.time == SimTime::from_secs(1000)).map(|e| &e.kind),
        Some(TraceKind::MaintenanceStart { .. }) | Some(TraceKind::BlockAborted { .. })
    ));
    assert_eq!(after[0].start_time, SimTime::from_secs(1060));
    assert!(after[0].first_after_switch);
}

const CONTROLLED: &str = r#"
format_version = 1
seed = 11
duration = "6h"
[[nodes]]
id = "A"
role = "endpoint"
[[nodes]]
id = "S"
role = "intermediate"
switch_ports = 2
[[nodes]]
id = "B"
role = "endpoint"
[[links]]
id = "A-S"
endpoints = ["A", "S"]
fiber_length_km = 5
nominal_sifted_rate = 1389
[[links]]
id = "S-B"
endpoints = ["S", "B"]
fiber_length_km = 5
nominal_sifted_rate = 1389
[policy.S]
variant = "coordinated-switching"
n_blocks = 2
[controller]
fault_time = "4h"
[[control]]
at = 100
verb = "force-switch"
node = "S"
link = "S-B"
[[control]]
at = "1h"
verb = "set-policy"
node = "S"
policy = { variant = "coordinated-switching", n_blocks = 3 }
[[control]]
at = "2h"
verb = "get-status"
node = "S"
[[control]]
at = "5h"
verb = "set-policy"
node = "S"
policy = { variant = "coordinated-switching", n_blocks = 1 }
"#;

#[test]
fn controller_verbs_act_until_the_fault() {
    let r = run(&parse_scenario(CONTROLLED).unwrap());
    let forced = r.switches.iter().find(|s| s.cause == SwitchCause::Forced).expect("forced switch");
    assert_eq!(forced.time, SimTime::from_secs(105));
    assert_eq!(forced.to_link, LinkId::from("S-B"));

    let status = &r.status_reports[0];
    assert_eq!(status.agents[0].last_config_epoch, 2);

    assert!(r.controller_log.iter().any(|e| matches!(e.kind, ControllerLogKind::Rejected { .. })));

    // runs of three blocks once the new policy is in, and they stay that way after the fault
    let s = NodeId::from("S");
    let policy: Vec<_> = r
        .switches
        .iter()
        .filter(|e| e.node_id == s && e.cause == SwitchCause::Policy && e.time.as_secs_f64() > 7200.0)
        .collect();
    assert!(policy.len() > 4);
    for w in policy.windows(2) {
        let n = r
            .blocks_on(&w[0].to_link)
            .filter(|b| b.start_time >= w[0].time && b.end_time <= w[1].time)
            .count();
        assert_eq!(n, 3, "run starting at {}", w[0].time);
    }
}

#[test]
fn invariant_checks_hold_on_long_runs() {
    let opts = RunOptions {
        record_key_material: true,
        check_invariants: true,
    };
    let r = run_with(&preset_days(5.0), &opts);
    assert!(r.rekeys.iter().all(|k| k.key_hex.as_ref().is_some_and(|h| h.len() == 64)));
}
