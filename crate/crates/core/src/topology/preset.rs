use std::collections::BTreeMap;

use super::*;
use crate::kms::{ConsumerSpec, DEFAULT_KEY_SIZE, DEFAULT_REKEY_INTERVAL_S};
use crate::orchestration::{PolicyVariant, SwitchPolicy, DEFAULT_N_BLOCKS, DEFAULT_SKIP_TIMEOUT_S};

pub const PRESET_NAMES: &[&str] = &["venqci"];

/// Sifted rate giving a 500 kB block in about 360 s.
const VENQCI_SIFTED_RATE: f64 = 1389.0;

pub fn preset_by_name(name: &str) -> Option<Scenario> {
    match name {
        "venqci" => Some(venqci_preset()),
        _ => None,
    }
}

fn link(id: &str, a: &str, b: &str, km: f64, qber_x: f64, qber_z: f64) -> LinkSpec {
    LinkSpec {
        id: LinkId::from(id),
        endpoints: [NodeId::from(a), NodeId::from(b)],
        fiber_length_km: km,
        loss_db_per_km: DEFAULT_LOSS_DB_PER_KM,
        nominal_sifted_rate: VENQCI_SIFTED_RATE,
        qber_mean_x: qber_x,
        qber_mean_z: qber_z,
        qber_rho: DEFAULT_QBER_RHO,
        qber_noise_std: DEFAULT_QBER_NOISE_STD,
        rate_jitter_shape: DEFAULT_RATE_JITTER_SHAPE,
    }
}

fn coordinated(schedule: &[&str]) -> NodePolicy {
    let schedule: Vec<LinkId> = schedule.iter().map(|s| LinkId::from(*s)).collect();
    NodePolicy {
        policy: SwitchPolicy {
            variant: PolicyVariant::CoordinatedSwitching,
            ratios: schedule.iter().map(|l| (l.clone(), 1.0)).collect(),
            n_blocks: DEFAULT_N_BLOCKS,
            skip_timeout: DEFAULT_SKIP_TIMEOUT_S,
        },
        schedule,
    }
}

/// The four-node metropolitan chain VSIX - CavPD - CavVE - VEGA.
///
/// The two toll-booth nodes each host one device behind a two-port optical
/// switch and run coordinated switching with two blocks per activation. Both
/// start on the shared 20 km span, so while it is idle the two 5 km spurs run
/// in parallel. One 32 B/min rekeying consumer sits on every link.
pub fn venqci_preset() -> Scenario {
    let endpoint = |id: &str| NodeSpec {
        id: NodeId::from(id),
        role: NodeRole::Endpoint,
        device_count: 1,
        switch_ports: 0,
    };
    let intermediate = |id: &str| NodeSpec {
        id: NodeId::from(id),
        role: NodeRole::Intermediate,
        device_count: 1,
        switch_ports: 2,
    };
    let links = vec![
        link("VSIX-CavPD", "VSIX", "CavPD", 5.0, 0.014, 0.010),
        link("CavPD-CavVE", "CavPD", "CavVE", 20.0, 0.016, 0.011),
        link("CavVE-VEGA", "CavVE", "VEGA", 5.0, 0.015, 0.010),
    ];
    let consumers = links
        .iter()
        .map(|l| ConsumerSpec {
            id: format!("macsec-{}", l.id),
            link: l.id.clone(),
            rekey_interval: DEFAULT_REKEY_INTERVAL_S,
            key_size: DEFAULT_KEY_SIZE,
            psk: vec![0u8; DEFAULT_KEY_SIZE as usize],
        })
        .collect();
    let mut policy = BTreeMap::new();
    policy.insert(NodeId::from("CavPD"), coordinated(&["CavPD-CavVE", "VSIX-CavPD"]));
    policy.insert(NodeId::from("CavVE"), coordinated(&["CavPD-CavVE", "CavVE-VEGA"]));

    Scenario {
        topology: NetworkTopology {
            nodes: vec![
                endpoint("VSIX"),
                intermediate("CavPD"),
                intermediate("CavVE"),
                endpoint("VEGA"),
            ],
            links,
        },
        policy,
        block_size: DEFAULT_BLOCK_SIZE,
        alignment: AlignmentOverhead::default(),
        switch_reconfig_delay: DEFAULT_RECONFIG_DELAY_S,
        maintenance: Vec::new(),
        controller_fault_time: None,
        control: Vec::new(),
        consumers,
        duration: 60.0 * 86_400.0,
        seed: 42,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn venqci_link_lengths() {
        let s = venqci_preset();
        let lengths: Vec<f64> = s.topology.links.iter().map(|l| l.fiber_length_km).collect();
        assert_eq!(lengths, vec![5.0, 20.0, 5.0]);
        assert_eq!(s.topology.nodes.len(), 4);
        let intermediates: Vec<&str> = s
            .topology
            .nodes
            .iter()
            .filter(|n| n.role == NodeRole::Intermediate)
            .map(|n| n.id.as_str())
            .collect();
        assert_eq!(intermediates, vec!["CavPD", "CavVE"]);
    }

    #[test]
    fn venqci_block_cadence_is_six_minutes() {
        let s = venqci_preset();
        for l in &s.topology.links {
            let secs = s.block_size as f64 / l.nominal_sifted_rate;
            assert!((secs - 360.0).abs() < 0.5, "{}: {secs}", l.id);
        }
    }

    #[test]
    fn venqci_round_trips_through_the_file_format() {
        let s = venqci_preset();
        let text = serialize_scenario(&s);
        assert_eq!(parse_scenario(&text).unwrap(), s);
    }

    #[test]
    fn port_map_is_total_and_injective() {
        let s = venqci_preset();
        let map = s.topology.port_map();
        for l in &s.topology.links {
            for e in &l.endpoints {
                assert!(map.contains_key(&(e.clone(), l.id.clone())));
            }
        }
        for n in &s.topology.nodes {
            let mut seen: Vec<PortAssignment> = map
                .iter()
                .filter(|((node, _), _)| node == &n.id)
                .map(|(_, a)| *a)
                .collect();
            let before = seen.len();
            seen.sort_by_key(|a| (a.device, a.port));
            seen.dedup();
            assert_eq!(seen.len(), before, "{}", n.id);
        }
        assert_eq!(
            map[&(NodeId::from("CavPD"), LinkId::from("CavPD-CavVE"))],
            PortAssignment { device: 0, port: Some(1) }
        );
    }

    #[test]
    fn suggested_rate_halves_per_three_db() {
        assert_eq!(suggested_sifted_rate(5.0, 0.2), REFERENCE_SIFTED_RATE);
        let r = suggested_sifted_rate(20.0, 0.2);
        assert!((r - REFERENCE_SIFTED_RATE / 2.0).abs() < 1e-9);
    }
}
