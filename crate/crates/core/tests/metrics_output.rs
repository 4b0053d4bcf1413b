use qkdsim_core::metrics::{
    aggregate, block_time_modes, export_csv, export_json, import_csv, import_json, write_key_events, write_table,
    Aggregates, Table, TraceRowKind,
};
use qkdsim_core::topology::{venqci_preset, NodeId};
use qkdsim_core::{run, RunResult};

fn preset_run(days: f64) -> RunResult {
    let mut s = venqci_preset();
    s.duration = days * 86_400.0;
    run(&s)
}

fn rel_close(a: f64, b: f64) -> bool {
    a == b || (a - b).abs() <= 1e-9 * a.abs().max(b.abs())
}

#[test]
fn aggregation_is_pure() {
    let r = preset_run(3.0);
    let bytes = |agg: &Aggregates| {
        Table::ALL
            .iter()
            .map(|&t| {
                let mut buf = Vec::new();
                write_table(agg, t, &mut buf).unwrap();
                buf
            })
            .collect::<Vec<_>>()
    };
    assert_eq!(bytes(&aggregate(&r)), bytes(&aggregate(&r)));
}

#[test]
fn export_writes_five_files_and_reads_back() {
    let r = preset_run(4.0);
    let agg = aggregate(&r);
    let dir = tempfile::tempdir().unwrap();
    let files = export_csv(&agg, dir.path()).unwrap();
    let names: Vec<String> = files
        .iter()
        .map(|p| p.file_name().unwrap().to_string_lossy().into_owned())
        .collect();
    assert_eq!(
        names,
        ["blocktimes.csv", "rates_daily.csv", "qber.csv", "hourly_box.csv", "switch_trace.csv"]
    );
    let back = import_csv(dir.path()).unwrap();
    assert_eq!(back.qber.len(), agg.qber.len());
    for (a, b) in back.qber.iter().zip(&agg.qber) {
        assert!(rel_close(a.avg3d_x, b.avg3d_x) && rel_close(a.qber_z, b.qber_z));
    }
    for (a, b) in back.hourly_box.iter().zip(&agg.hourly_box) {
        assert!(rel_close(a.median, b.median) && rel_close(a.q25, b.q25) && rel_close(a.q75, b.q75));
    }
    assert_eq!(back, agg);

    export_json(&agg, dir.path()).unwrap();
    assert_eq!(import_json(dir.path()).unwrap(), agg);
}

#[test]
fn histogram_totals_match_block_counts() {
    let r = preset_run(5.0);
    let agg = aggregate(&r);
    for l in &r.links {
        let first = r.blocks_on(&l.id).filter(|b| b.first_after_switch).count() as u64;
        let other = r.blocks_on(&l.id).filter(|b| !b.first_after_switch).count() as u64;
        let bins: Vec<_> = agg.histogram(&l.id).collect();
        assert_eq!(bins.iter().map(|b| b.count_first).sum::<u64>(), first);
        assert_eq!(bins.iter().map(|b| b.count_other).sum::<u64>(), other);
        assert!(bins.windows(2).all(|w| w[0].bin_hi_s == w[1].bin_lo_s));
    }
}

#[test]
fn first_block_mode_sits_later() {
    let r = preset_run(10.0);
    for l in &r.links {
        let (first, other) = block_time_modes(&r, &l.id);
        let sep = first.unwrap() - other.unwrap();
        assert!(sep > 60.0 && sep < 180.0, "{}: {sep}", l.id);
    }
}

#[test]
fn switch_trace_alternates_in_runs_of_two() {
    let agg = aggregate(&preset_run(5.0));
    let node = NodeId::from("CavPD");
    let blocks: Vec<_> = agg
        .switch_trace_at(&node)
        .filter(|r| r.kind == TraceRowKind::Block)
        .map(|r| r.link_id.clone())
        .collect();
    assert!(blocks.len() > 100);
    let mut runs = Vec::new();
    for id in &blocks {
        match runs.last_mut() {
            Some((last, n)) if last == id => *n += 1,
            _ => runs.push((id.clone(), 1)),
        }
    }
    // the final run may be cut by the end of the run
    assert!(runs[..runs.len() - 1].iter().all(|(_, n)| *n == 2), "{runs:?}");
    assert!(runs.windows(2).all(|w| w[0].0 != w[1].0));
}

#[test]
fn daily_secret_totals_add_up() {
    let r = preset_run(3.0);
    let agg = aggregate(&r);
    for l in &r.links {
        let from_days: u64 = agg.rates_daily.iter().filter(|d| d.link_id == l.id).map(|d| d.secret_bytes).sum();
        let from_blocks: u64 = r.blocks_on(&l.id).map(|b| b.secret_bytes).sum();
        assert_eq!(from_days, from_blocks);
    }
    assert_eq!(agg.rates_daily.len(), 3 * r.links.len());
}

#[test]
fn key_log_has_one_row_per_rekey() {
    let r = preset_run(0.1);
    let mut buf = Vec::new();
    write_key_events(&r, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(text.lines().count(), r.rekeys.len() + 1);
    assert!(text.starts_with("time_s,consumer_id,link_id,source,key_id,key_hex\n"));
}
