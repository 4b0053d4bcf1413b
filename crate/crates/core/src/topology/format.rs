//! Scenario file format.
//!
//! Scenarios are TOML documents. The grammar (all times in seconds unless a
//! string with an `s`/`m`/`h`/`d` suffix is given):
//!
//! ```toml
//! format_version = 1
//! seed = 42                      # integer, or a decimal string above 2^63-1
//! duration = "60d"
//! block_size = 500000            # bytes, default 500000
//! switch_reconfig_delay = 5      # default 5
//!
//! [alignment]                    # first-block overhead, truncated normal
//! mean = 120                     # default 120
//! std = 30                       # default 30
//!
//! [[nodes]]
//! id = "CavPD"
//! role = "intermediate"          # or "endpoint"
//! device_count = 1               # default 1
//! switch_ports = 2               # default 0
//!
//! [[links]]
//! id = "CavPD-CavVE"
//! endpoints = ["CavPD", "CavVE"]
//! fiber_length_km = 20
//! loss_db_per_km = 0.2           # default 0.2
//! nominal_sifted_rate = 1389     # bytes/s, default derived from total loss
//! qber_mean_x = 0.015            # default 0.015
//! qber_mean_z = 0.010            # default 0.010
//! qber_rho = 0.9                 # default 0.9
//! qber_noise_std = 0.002         # default 0.002
//! rate_jitter_shape = 100        # default 100, 0 disables
//!
//! [policy.CavPD]                 # one table per intermediate node, optional
//! variant = "coordinated-switching"   # or "key-balancing"
//! n_blocks = 2                   # default 2
//! skip_timeout = 60              # default 60
//! schedule = ["CavPD-CavVE", "VSIX-CavPD"]  # default: incident links in order
//! ratios = { "VSIX-CavPD" = 2 }  # key-balancing weights, default 1 per link
//!
//! [[maintenance]]
//! link = "CavPD-CavVE"
//! start = "10h"
//! end = "12h"
//!
//! [controller]
//! fault_time = "1h"              # optional
//!
//! [[control]]                    # scripted controller verbs
//! at = "2h"
//! verb = "set-policy"            # or "force-switch" (needs link), "get-status"
//! node = "CavPD"
//! policy = { variant = "key-balancing", ratios = { "VSIX-CavPD" = 2 } }
//!
//! [[consumers]]
//! id = "macsec-1"
//! link = "VSIX-CavPD"
//! rekey_interval = 60            # default 60
//! key_size = 32                  # bytes, default 32
//! psk = "00ff..."                # hex, default derived from the id
//! ```
//!
//! Serialization writes every field explicitly, so `parse(serialize(s)) == s`.

use std::collections::BTreeMap;

use serde::de::{self, Deserializer};
use serde::{Deserialize, Serialize, Serializer};
use sha2::{Digest, Sha256};

use super::*;
use crate::error::ScenarioError;
use crate::kms::{ConsumerSpec, DEFAULT_KEY_SIZE, DEFAULT_REKEY_INTERVAL_S};
use crate::orchestration::{PolicyVariant, SwitchPolicy, DEFAULT_N_BLOCKS, DEFAULT_SKIP_TIMEOUT_S};

pub const FORMAT_VERSION: u32 = 1;

/// Parses `"90"`, `"90s"`, `"6m"`, `"2h"`, `"60d"` (fractions allowed) into seconds.
pub fn parse_duration(text: &str) -> Result<f64, String> {
    let t = text.trim();
    let (num, mult) = match t.char_indices().last() {
        Some((i, 's')) => (&t[..i], 1.0),
        Some((i, 'm')) => (&t[..i], 60.0),
        Some((i, 'h')) => (&t[..i], 3600.0),
        Some((i, 'd')) => (&t[..i], 86_400.0),
        Some(_) => (t, 1.0),
        None => return Err("empty duration".into()),
    };
    let value: f64 = num
        .trim()
        .parse()
        .map_err(|_| format!("invalid duration {text:?}"))?;
    if !value.is_finite() || value < 0.0 {
        return Err(format!("invalid duration {text:?}"));
    }
    Ok(value * mult)
}

#[derive(Deserialize)]
#[serde(untagged)]
enum SecondsRepr {
    Int(i64),
    Float(f64),
    Text(String),
}

fn de_secs<'de, D: Deserializer<'de>>(d: D) -> Result<Option<f64>, D::Error> {
    let repr = Option::<SecondsRepr>::deserialize(d)?;
    match repr {
        None => Ok(None),
        Some(SecondsRepr::Int(i)) => Ok(Some(i as f64)),
        Some(SecondsRepr::Float(f)) => Ok(Some(f)),
        Some(SecondsRepr::Text(s)) => parse_duration(&s).map(Some).map_err(de::Error::custom),
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum SeedRepr {
    Int(i64),
    Text(String),
}

fn de_seed<'de, D: Deserializer<'de>>(d: D) -> Result<Option<u64>, D::Error> {
    match Option::<SeedRepr>::deserialize(d)? {
        None => Ok(None),
        Some(SeedRepr::Int(i)) => u64::try_from(i)
            .map(Some)
            .map_err(|_| de::Error::custom("seed must be non-negative")),
        Some(SeedRepr::Text(s)) => s
            .trim()
            .parse::<u64>()
            .map(Some)
            .map_err(|_| de::Error::custom(format!("invalid seed {s:?}"))),
    }
}

fn ser_seed<S: Serializer>(seed: &Option<u64>, s: S) -> Result<S::Ok, S::Error> {
    match seed {
        Some(v) if *v <= i64::MAX as u64 => s.serialize_i64(*v as i64),
        Some(v) => s.serialize_str(&v.to_string()),
        None => s.serialize_none(),
    }
}

#[derive(Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct ScenarioDoc {
    format_version: Option<u32>,
    #[serde(default, deserialize_with = "de_seed", serialize_with = "ser_seed")]
    seed: Option<u64>,
    #[serde(default, deserialize_with = "de_secs")]
    duration: Option<f64>,
    block_size: Option<u64>,
    #[serde(default, deserialize_with = "de_secs")]
    switch_reconfig_delay: Option<f64>,
    #[serde(default)]
    alignment: AlignmentDoc,
    #[serde(default)]
    nodes: Vec<NodeDoc>,
    #[serde(default)]
    links: Vec<LinkDoc>,
    #[serde(default)]
    policy: BTreeMap<String, PolicyDoc>,
    #[serde(default)]
    maintenance: Vec<WindowDoc>,
    #[serde(default)]
    controller: ControllerDoc,
    #[serde(default)]
    control: Vec<ControlDoc>,
    #[serde(default)]
    consumers: Vec<ConsumerDoc>,
}

#[derive(Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct AlignmentDoc {
    #[serde(default, deserialize_with = "de_secs")]
    mean: Option<f64>,
    #[serde(default, deserialize_with = "de_secs")]
    std: Option<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NodeDoc {
    id: String,
    role: NodeRole,
    device_count: Option<u32>,
    switch_ports: Option<u32>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LinkDoc {
    id: String,
    endpoints: Vec<String>,
    fiber_length_km: f64,
    loss_db_per_km: Option<f64>,
    nominal_sifted_rate: Option<f64>,
    qber_mean_x: Option<f64>,
    qber_mean_z: Option<f64>,
    qber_rho: Option<f64>,
    qber_noise_std: Option<f64>,
    rate_jitter_shape: Option<f64>,
}

#[derive(Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct PolicyDoc {
    variant: Option<PolicyVariant>,
    n_blocks: Option<u32>,
    #[serde(default, deserialize_with = "de_secs")]
    skip_timeout: Option<f64>,
    schedule: Option<Vec<String>>,
    ratios: Option<BTreeMap<String, f64>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WindowDoc {
    link: String,
    #[serde(deserialize_with = "de_secs")]
    start: Option<f64>,
    #[serde(deserialize_with = "de_secs")]
    end: Option<f64>,
}

#[derive(Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct ControllerDoc {
    #[serde(default, deserialize_with = "de_secs")]
    fault_time: Option<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ControlDoc {
    #[serde(deserialize_with = "de_secs")]
    at: Option<f64>,
    verb: ControlVerb,
    node: String,
    link: Option<String>,
    policy: Option<PolicyDoc>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConsumerDoc {
    id: String,
    link: String,
    #[serde(default, deserialize_with = "de_secs")]
    rekey_interval: Option<f64>,
    key_size: Option<u32>,
    psk: Option<String>,
}

fn semantic(field: impl Into<String>, message: impl Into<String>) -> ScenarioError {
    ScenarioError::Semantic {
        field: field.into(),
        message: message.into(),
    }
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rfind('\n').map_or(before.len(), |nl| before.len() - nl - 1) + 1;
    (line, column)
}

/// Parses and validates a scenario document, filling every default.
pub fn parse_scenario(text: &str) -> Result<Scenario, ScenarioError> {
    let doc: ScenarioDoc = toml::from_str(text).map_err(|e| {
        let (line, column) = e.span().map_or((0, 0), |s| line_col(text, s.start));
        ScenarioError::Syntax {
            line,
            column,
            message: e.message().to_owned(),
        }
    })?;
    build(doc)
}

/// Writes a scenario with every field explicit.
pub fn serialize_scenario(s: &Scenario) -> String {
    toml::to_string(&to_doc(s)).expect("scenario documents contain only TOML-representable values")
}

fn finite_at_least(field: &str, v: f64, min: f64, inclusive: bool) -> Result<f64, ScenarioError> {
    let ok = v.is_finite() && if inclusive { v >= min } else { v > min };
    if ok {
        Ok(v)
    } else {
        let op = if inclusive { ">=" } else { ">" };
        Err(semantic(field, format!("must be finite and {op} {min}, got {v}")))
    }
}

fn qber_in_range(field: &str, v: f64) -> Result<f64, ScenarioError> {
    if (0.0..=0.5).contains(&v) {
        Ok(v)
    } else {
        Err(semantic(field, format!("must lie in [0, 0.5], got {v}")))
    }
}

fn default_psk(consumer_id: &str) -> Vec<u8> {
    let mut h = Sha256::new();
    h.update(b"qkdsim-psk-v1:");
    h.update(consumer_id.as_bytes());
    h.finalize().to_vec()
}

fn build(doc: ScenarioDoc) -> Result<Scenario, ScenarioError> {
    let version = doc.format_version.unwrap_or(FORMAT_VERSION);
    if version != FORMAT_VERSION {
        return Err(semantic(
            "format_version",
            format!("unsupported version {version}, expected {FORMAT_VERSION}"),
        ));
    }

    let mut nodes = Vec::with_capacity(doc.nodes.len());
    for (i, n) in doc.nodes.into_iter().enumerate() {
        let field = format!("nodes[{i}] ({:?})", n.id);
        if nodes.iter().any(|x: &NodeSpec| x.id.0 == n.id) {
            return Err(semantic(field, "duplicate node id"));
        }
        let node = NodeSpec {
            id: NodeId(n.id),
            role: n.role,
            device_count: n.device_count.unwrap_or(1),
            switch_ports: n.switch_ports.unwrap_or(0),
        };
        if node.role == NodeRole::Intermediate && node.switch_ports < 2 {
            return Err(semantic(
                format!("{field}.switch_ports"),
                "intermediate nodes need at least 2 switch ports",
            ));
        }
        nodes.push(node);
    }

    let mut links: Vec<LinkSpec> = Vec::with_capacity(doc.links.len());
    for (i, l) in doc.links.into_iter().enumerate() {
        let field = format!("links[{i}] ({:?})", l.id);
        if links.iter().any(|x| x.id.0 == l.id) {
            return Err(semantic(field, "duplicate link id"));
        }
        let [a, b]: [String; 2] = l
            .endpoints
            .try_into()
            .map_err(|_| semantic(format!("{field}.endpoints"), "need exactly two node ids"))?;
        if a == b {
            return Err(semantic(format!("{field}.endpoints"), "endpoints must be distinct"));
        }
        for end in [&a, &b] {
            if !nodes.iter().any(|n| &n.id.0 == end) {
                return Err(semantic(format!("{field}.endpoints"), format!("unknown node {end:?}")));
            }
        }
        let fiber_length_km = finite_at_least(&format!("{field}.fiber_length_km"), l.fiber_length_km, 0.0, false)?;
        let loss_db_per_km = finite_at_least(
            &format!("{field}.loss_db_per_km"),
            l.loss_db_per_km.unwrap_or(DEFAULT_LOSS_DB_PER_KM),
            0.0,
            true,
        )?;
        let nominal_sifted_rate = finite_at_least(
            &format!("{field}.nominal_sifted_rate"),
            l.nominal_sifted_rate
                .unwrap_or_else(|| suggested_sifted_rate(fiber_length_km, loss_db_per_km)),
            0.0,
            false,
        )?;
        let qber_rho = l.qber_rho.unwrap_or(DEFAULT_QBER_RHO);
        if !(0.0..1.0).contains(&qber_rho) {
            return Err(semantic(format!("{field}.qber_rho"), format!("must lie in [0, 1), got {qber_rho}")));
        }
        links.push(LinkSpec {
            id: LinkId(l.id),
            endpoints: [NodeId(a), NodeId(b)],
            fiber_length_km,
            loss_db_per_km,
            nominal_sifted_rate,
            qber_mean_x: qber_in_range(&format!("{field}.qber_mean_x"), l.qber_mean_x.unwrap_or(DEFAULT_QBER_MEAN_X))?,
            qber_mean_z: qber_in_range(&format!("{field}.qber_mean_z"), l.qber_mean_z.unwrap_or(DEFAULT_QBER_MEAN_Z))?,
            qber_rho,
            qber_noise_std: finite_at_least(
                &format!("{field}.qber_noise_std"),
                l.qber_noise_std.unwrap_or(DEFAULT_QBER_NOISE_STD),
                0.0,
                true,
            )?,
            rate_jitter_shape: finite_at_least(
                &format!("{field}.rate_jitter_shape"),
                l.rate_jitter_shape.unwrap_or(DEFAULT_RATE_JITTER_SHAPE),
                0.0,
                true,
            )?,
        });
    }
    let topology = NetworkTopology { nodes, links };

    for (i, node) in topology.nodes.iter().enumerate() {
        let incident = topology.incident_links(&node.id).len() as u32;
        if incident > 0 && node.device_count == 0 {
            return Err(semantic(
                format!("nodes[{i}] ({:?}).device_count", node.id.0),
                "nodes terminating links need at least one device",
            ));
        }
        let capacity = NetworkTopology::link_capacity(node);
        if incident > capacity {
            return Err(semantic(
                format!("nodes[{i}] ({:?})", node.id.0),
                format!("terminates {incident} links but has capacity for {capacity}"),
            ));
        }
    }

    let link_ref = |field: &str, id: &str| -> Result<LinkId, ScenarioError> {
        topology
            .link(&LinkId::from(id))
            .map(|l| l.id.clone())
            .ok_or_else(|| semantic(field, format!("unknown link {id:?}")))
    };

    let mut policy = BTreeMap::new();
    for name in doc.policy.keys() {
        let field = format!("policy.{name}");
        let node = topology
            .node(&NodeId::from(name.as_str()))
            .ok_or_else(|| semantic(&field, "unknown node"))?;
        if node.role != NodeRole::Intermediate {
            return Err(semantic(&field, "policies apply to intermediate nodes only"));
        }
    }
    for node in topology.nodes.iter().filter(|n| n.role == NodeRole::Intermediate) {
        let field = format!("policy.{}", node.id);
        let doc_policy = doc.policy.get(node.id.as_str());
        let incident: Vec<LinkId> = topology.incident_links(&node.id).iter().map(|l| l.id.clone()).collect();
        let schedule = match doc_policy.and_then(|p| p.schedule.as_ref()) {
            None => incident.clone(),
            Some(names) => {
                let mut sched = Vec::with_capacity(names.len());
                for name in names {
                    let id = link_ref(&format!("{field}.schedule"), name)?;
                    if !incident.contains(&id) {
                        return Err(semantic(format!("{field}.schedule"), format!("link {name:?} does not touch {}", node.id)));
                    }
                    if sched.contains(&id) {
                        return Err(semantic(format!("{field}.schedule"), format!("link {name:?} listed twice")));
                    }
                    sched.push(id);
                }
                if sched.len() != incident.len() {
                    return Err(semantic(format!("{field}.schedule"), "must list every link of the node"));
                }
                sched
            }
        };
        let switch_policy = build_policy(&field, doc_policy, &schedule, &link_ref)?;
        policy.insert(
            node.id.clone(),
            NodePolicy {
                schedule,
                policy: switch_policy,
            },
        );
    }

    let mut maintenance = Vec::with_capacity(doc.maintenance.len());
    for (i, w) in doc.maintenance.iter().enumerate() {
        let field = format!("maintenance[{i}] (link {:?})", w.link);
        let link = link_ref(&format!("{field}.link"), &w.link)?;
        let start = w.start.ok_or_else(|| semantic(&field, "missing start"))?;
        let end = w.end.ok_or_else(|| semantic(&field, "missing end"))?;
        if !(start >= 0.0 && start < end && end.is_finite()) {
            return Err(semantic(&field, format!("window start {start} must be >= 0 and before end {end}")));
        }
        maintenance.push(MaintenanceWindow { link, start, end });
    }

    let controller_fault_time = match doc.controller.fault_time {
        Some(t) => Some(finite_at_least("controller.fault_time", t, 0.0, true)?),
        None => None,
    };

    let mut control = Vec::with_capacity(doc.control.len());
    for (i, c) in doc.control.iter().enumerate() {
        let field = format!("control[{i}]");
        let at = finite_at_least(&format!("{field}.at"), c.at.ok_or_else(|| semantic(&field, "missing at"))?, 0.0, true)?;
        let node = topology
            .node(&NodeId::from(c.node.as_str()))
            .ok_or_else(|| semantic(format!("{field}.node"), format!("unknown node {:?}", c.node)))?
            .id
            .clone();
        let link = match (&c.verb, &c.link) {
            (ControlVerb::ForceSwitch, None) => return Err(semantic(format!("{field}.link"), "force-switch needs a link")),
            (_, Some(name)) => {
                let id = link_ref(&format!("{field}.link"), name)?;
                if !topology.link(&id).is_some_and(|l| l.endpoints.contains(&node)) {
                    return Err(semantic(format!("{field}.link"), format!("link {name:?} does not touch {node}")));
                }
                Some(id)
            }
            (_, None) => None,
        };
        let policy = match (&c.verb, &c.policy) {
            (ControlVerb::SetPolicy, None) => return Err(semantic(format!("{field}.policy"), "set-policy needs a policy")),
            (_, Some(p)) => {
                let schedule = policy
                    .get(&node)
                    .map(|np: &NodePolicy| np.schedule.clone())
                    .ok_or_else(|| semantic(format!("{field}.node"), "set-policy targets intermediate nodes only"))?;
                Some(build_policy(&format!("{field}.policy"), Some(p), &schedule, &link_ref)?)
            }
            (_, None) => None,
        };
        control.push(ControlCommand {
            at,
            verb: c.verb,
            node,
            link,
            policy,
        });
    }

    let mut consumers: Vec<ConsumerSpec> = Vec::with_capacity(doc.consumers.len());
    for (i, c) in doc.consumers.iter().enumerate() {
        let field = format!("consumers[{i}] ({:?})", c.id);
        if consumers.iter().any(|x| x.id == c.id) {
            return Err(semantic(field, "duplicate consumer id"));
        }
        let link = link_ref(&format!("{field}.link"), &c.link)?;
        let rekey_interval = finite_at_least(
            &format!("{field}.rekey_interval"),
            c.rekey_interval.unwrap_or(DEFAULT_REKEY_INTERVAL_S),
            0.0,
            false,
        )?;
        let key_size = c.key_size.unwrap_or(DEFAULT_KEY_SIZE);
        if key_size == 0 {
            return Err(semantic(format!("{field}.key_size"), "must be > 0"));
        }
        let psk = match &c.psk {
            Some(h) => hex::decode(h).map_err(|e| semantic(format!("{field}.psk"), format!("invalid hex: {e}")))?,
            None => default_psk(&c.id),
        };
        consumers.push(ConsumerSpec {
            id: c.id.clone(),
            link,
            rekey_interval,
            key_size,
            psk,
        });
    }

    let block_size = doc.block_size.unwrap_or(DEFAULT_BLOCK_SIZE);
    if block_size == 0 {
        return Err(semantic("block_size", "must be > 0"));
    }
    let duration = finite_at_least("duration", doc.duration.ok_or_else(|| semantic("duration", "missing"))?, 0.0, false)?;
    let alignment = AlignmentOverhead {
        mean: finite_at_least("alignment.mean", doc.alignment.mean.unwrap_or(DEFAULT_ALIGNMENT_MEAN_S), 0.0, true)?,
        std: finite_at_least("alignment.std", doc.alignment.std.unwrap_or(DEFAULT_ALIGNMENT_STD_S), 0.0, true)?,
    };
    let switch_reconfig_delay = finite_at_least(
        "switch_reconfig_delay",
        doc.switch_reconfig_delay.unwrap_or(DEFAULT_RECONFIG_DELAY_S),
        0.0,
        true,
    )?;

    Ok(Scenario {
        topology,
        policy,
        block_size,
        alignment,
        switch_reconfig_delay,
        maintenance,
        controller_fault_time,
        control,
        consumers,
        duration,
        seed: doc.seed.unwrap_or(0),
    })
}

fn build_policy(
    field: &str,
    doc: Option<&PolicyDoc>,
    schedule: &[LinkId],
    link_ref: &dyn Fn(&str, &str) -> Result<LinkId, ScenarioError>,
) -> Result<SwitchPolicy, ScenarioError> {
    let empty = PolicyDoc::default();
    let doc = doc.unwrap_or(&empty);
    let n_blocks = doc.n_blocks.unwrap_or(DEFAULT_N_BLOCKS);
    if n_blocks == 0 {
        return Err(semantic(format!("{field}.n_blocks"), "must be >= 1"));
    }
    let skip_timeout = finite_at_least(
        &format!("{field}.skip_timeout"),
        doc.skip_timeout.unwrap_or(DEFAULT_SKIP_TIMEOUT_S),
        0.0,
        false,
    )?;
    let mut ratios: BTreeMap<LinkId, f64> = schedule.iter().map(|l| (l.clone(), 1.0)).collect();
    for (name, &w) in doc.ratios.iter().flatten() {
        let id = link_ref(&format!("{field}.ratios"), name)?;
        if !schedule.contains(&id) {
            return Err(semantic(format!("{field}.ratios"), format!("link {name:?} is not in the schedule")));
        }
        if !(w.is_finite() && w > 0.0) {
            return Err(semantic(format!("{field}.ratios.{name}"), format!("weight must be > 0, got {w}")));
        }
        ratios.insert(id, w);
    }
    Ok(SwitchPolicy {
        variant: doc.variant.unwrap_or(PolicyVariant::CoordinatedSwitching),
        ratios,
        n_blocks,
        skip_timeout,
    })
}

fn policy_doc(p: &SwitchPolicy, schedule: Option<&[LinkId]>) -> PolicyDoc {
    PolicyDoc {
        variant: Some(p.variant),
        n_blocks: Some(p.n_blocks),
        skip_timeout: Some(p.skip_timeout),
        schedule: schedule.map(|s| s.iter().map(|l| l.0.clone()).collect()),
        ratios: Some(p.ratios.iter().map(|(k, v)| (k.0.clone(), *v)).collect()),
    }
}

fn to_doc(s: &Scenario) -> ScenarioDoc {
    ScenarioDoc {
        format_version: Some(FORMAT_VERSION),
        seed: Some(s.seed),
        duration: Some(s.duration),
        block_size: Some(s.block_size),
        switch_reconfig_delay: Some(s.switch_reconfig_delay),
        alignment: AlignmentDoc {
            mean: Some(s.alignment.mean),
            std: Some(s.alignment.std),
        },
        nodes: s
            .topology
            .nodes
            .iter()
            .map(|n| NodeDoc {
                id: n.id.0.clone(),
                role: n.role,
                device_count: Some(n.device_count),
                switch_ports: Some(n.switch_ports),
            })
            .collect(),
        links: s
            .topology
            .links
            .iter()
            .map(|l| LinkDoc {
                id: l.id.0.clone(),
                endpoints: l.endpoints.iter().map(|e| e.0.clone()).collect(),
                fiber_length_km: l.fiber_length_km,
                loss_db_per_km: Some(l.loss_db_per_km),
                nominal_sifted_rate: Some(l.nominal_sifted_rate),
                qber_mean_x: Some(l.qber_mean_x),
                qber_mean_z: Some(l.qber_mean_z),
                qber_rho: Some(l.qber_rho),
                qber_noise_std: Some(l.qber_noise_std),
                rate_jitter_shape: Some(l.rate_jitter_shape),
            })
            .collect(),
        policy: s
            .policy
            .iter()
            .map(|(node, np)| (node.0.clone(), policy_doc(&np.policy, Some(&np.schedule))))
            .collect(),
        maintenance: s
            .maintenance
            .iter()
            .map(|w| WindowDoc {
                link: w.link.0.clone(),
                start: Some(w.start),
                end: Some(w.end),
            })
            .collect(),
        controller: ControllerDoc {
            fault_time: s.controller_fault_time,
        },
        control: s
            .control
            .iter()
            .map(|c| ControlDoc {
                at: Some(c.at),
                verb: c.verb,
                node: c.node.0.clone(),
                link: c.link.as_ref().map(|l| l.0.clone()),
                policy: c.policy.as_ref().map(|p| policy_doc(p, None)),
            })
            .collect(),
        consumers: s
            .consumers
            .iter()
            .map(|c| ConsumerDoc {
                id: c.id.clone(),
                link: c.link.0.clone(),
                rekey_interval: Some(c.rekey_interval),
                key_size: Some(c.key_size),
                psk: Some(hex::encode(&c.psk)),
            })
            .collect(),
    }
}
