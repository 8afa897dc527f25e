//! Synthetic campus generation.
//!
//! A generated campus echoes the fixture's shape: a core router fans out
//! to per-subnet chains of (optional) firewall, (optional) load balancer,
//! and a subnet switch; the first host of a subnet may sit behind an
//! in-line IPS. Density draws decide which boxes exist. Policies cover
//! all intra-subnet pairs plus a configurable number of cross-subnet
//! flows; waypoints and scopes are read off the simulated paths and the
//! boxes and the core ACL are then hardened so exactly the policied
//! traffic passes. Generation is deterministic in the seed and
//! post-checked: a pair that does not check clean is retried with a fresh
//! derived seed, a bounded number of times.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::checker::check_all;
use crate::netmodel::{
    AclEntry, Address, Flexibility, ForwardingState, FunctionClass, HeaderPattern, MbRule,
    MiddleboxSpec, Node, NodeKind, NodeRef, RouteEntry, RuleAction, Site, SiteId, SiteKind,
    Topology,
};
use crate::policy::{
    OccurrenceConstraint, PacketClass, Policy, PolicyId, PolicySet, Relation, WaypointSpec,
};
use crate::traversal::{policy_probe, simulate, DEFAULT_HOP_LIMIT};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub subnets: usize,
    pub hosts_per_subnet: usize,
    /// Probability that each of a subnet's firewall, load balancer, and
    /// IPS exists.
    pub middlebox_density: f64,
    /// Cross-subnet policies per subnet (intra-subnet pairs are always
    /// covered).
    pub policies_per_subnet: usize,
    /// Fraction of hosts to migrate, rounded up, at least one.
    pub migrate_fraction: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            seed: 1,
            subnets: 3,
            hosts_per_subnet: 2,
            middlebox_density: 0.5,
            policies_per_subnet: 2,
            migrate_fraction: 0.5,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.subnets < 1 {
            return Err("subnets must be >= 1".to_string());
        }
        if self.hosts_per_subnet < 1 {
            return Err("hosts_per_subnet must be >= 1".to_string());
        }
        if self.policies_per_subnet < 1 {
            return Err("policies_per_subnet must be >= 1".to_string());
        }
        if !(0.0..=1.0).contains(&self.middlebox_density) {
            return Err("middlebox_density must lie in [0, 1]".to_string());
        }
        if !(self.migrate_fraction > 0.0 && self.migrate_fraction <= 1.0) {
            return Err("migrate_fraction must lie in (0, 1]".to_string());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GenError {
    #[error("invalid scenario config: {0}")]
    Invalid(String),
    #[error("generation did not reach conformance in {attempts} attempts; last report had {last_total} violations")]
    NotConformant { attempts: usize, last_total: usize },
}

const GEN_ATTEMPTS: usize = 8;

/// Derives complete forwarding state from the graph: for every address,
/// every node gets a next hop along the shortest path toward the owner
/// (smallest-id tie-break). Switches get FIB entries with flooding off,
/// routers exact routes, middleboxes FIB entries, hosts their single
/// uplink as gateway.
pub fn derive_forwarding(t: &mut Topology) {
    let addresses: Vec<(Address, NodeRef)> = t
        .nodes
        .values()
        .flat_map(|n| n.addresses.iter().map(|a| (a.clone(), n.id.clone())))
        .collect();

    let mut next_hop: BTreeMap<(NodeRef, Address), NodeRef> = BTreeMap::new();
    for (addr, owner) in &addresses {
        // BFS from the owner; dist[n] is the hop count back to the owner.
        let mut dist: BTreeMap<NodeRef, usize> = BTreeMap::new();
        dist.insert(owner.clone(), 0);
        let mut queue = std::collections::VecDeque::from([owner.clone()]);
        while let Some(n) = queue.pop_front() {
            let d = dist[&n];
            for nb in t.neighbors(&n) {
                if !dist.contains_key(&nb) {
                    dist.insert(nb.clone(), d + 1);
                    queue.push_back(nb);
                }
            }
        }
        for (n, d) in &dist {
            if n == owner {
                continue;
            }
            let hop = t
                .neighbors(n)
                .into_iter()
                .find(|nb| dist.get(nb) == Some(&(d - 1)));
            if let Some(hop) = hop {
                next_hop.insert((n.clone(), addr.clone()), hop);
            }
        }
    }

    let ids: Vec<NodeRef> = t.nodes.keys().cloned().collect();
    for id in ids {
        let kind = t.nodes[&id].kind.clone();
        match kind {
            NodeKind::Switch => {
                let fib: BTreeMap<Address, NodeRef> = addresses
                    .iter()
                    .filter_map(|(a, _)| {
                        next_hop.get(&(id.clone(), a.clone())).map(|n| (a.clone(), n.clone()))
                    })
                    .collect();
                t.forwarding.insert(
                    id.clone(),
                    ForwardingState::Switch {
                        fib,
                        flood_on_miss: false,
                    },
                );
            }
            NodeKind::Router => {
                let routes: Vec<RouteEntry> = addresses
                    .iter()
                    .filter_map(|(a, _)| {
                        next_hop.get(&(id.clone(), a.clone())).map(|n| RouteEntry {
                            prefix: a.0.clone(),
                            next: n.clone(),
                        })
                    })
                    .collect();
                t.forwarding.insert(
                    id.clone(),
                    ForwardingState::Router {
                        routes,
                        acl: Vec::new(),
                    },
                );
            }
            NodeKind::Middlebox(_) => {
                let fib: BTreeMap<Address, NodeRef> = addresses
                    .iter()
                    .filter_map(|(a, _)| {
                        next_hop.get(&(id.clone(), a.clone())).map(|n| (a.clone(), n.clone()))
                    })
                    .collect();
                t.forwarding
                    .insert(id.clone(), ForwardingState::Middlebox { fib });
            }
            NodeKind::Host => {
                let nbs = t.neighbors(&id);
                t.forwarding.insert(
                    id.clone(),
                    ForwardingState::Host {
                        gateway: nbs.first().cloned(),
                    },
                );
            }
            NodeKind::TunnelEndpoint => {}
        }
    }
}

fn allow_all() -> Vec<MbRule> {
    vec![MbRule {
        pattern: HeaderPattern::any(),
        action: RuleAction::Allow,
    }]
}

fn build_attempt(cfg: &ScenarioConfig, attempt: usize) -> (Topology, PolicySet) {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(0x5DEECE66D * attempt as u64));
    let site = SiteId::from("campus");
    let mut t = Topology::empty();
    t.sites.insert(
        site.clone(),
        Site {
            id: site.clone(),
            kind: SiteKind::Enterprise,
            flexibility: Flexibility::Full,
        },
    );

    let add = |t: &mut Topology, id: &str, kind: NodeKind, addr: Option<&str>| {
        t.nodes.insert(
            NodeRef::from(id),
            Node {
                id: NodeRef::from(id),
                kind,
                site: site.clone(),
                addresses: addr.map(Address::from).into_iter().collect(),
            },
        );
    };

    add(&mut t, "core", NodeKind::Router, None);

    let mut hosts: Vec<NodeRef> = Vec::new();
    for i in 0..cfg.subnets {
        let sw = format!("sw{i}");
        add(&mut t, &sw, NodeKind::Switch, None);
        // Chain from the core: optional firewall, optional load balancer.
        let mut upstream = NodeRef::from("core");
        if rng.gen_bool(cfg.middlebox_density) {
            let fw = format!("fw{i}");
            add(
                &mut t,
                &fw,
                NodeKind::Middlebox(MiddleboxSpec {
                    class: FunctionClass::Firewall,
                    rules: allow_all(),
                }),
                None,
            );
            t.add_link(upstream.clone(), NodeRef::from(fw.as_str()));
            upstream = NodeRef::from(fw.as_str());
        }
        if rng.gen_bool(cfg.middlebox_density) {
            let lb = format!("lb{i}");
            add(
                &mut t,
                &lb,
                NodeKind::Middlebox(MiddleboxSpec {
                    class: FunctionClass::LoadBalancer,
                    rules: allow_all(),
                }),
                None,
            );
            t.add_link(upstream.clone(), NodeRef::from(lb.as_str()));
            upstream = NodeRef::from(lb.as_str());
        }
        t.add_link(upstream, NodeRef::from(sw.as_str()));

        let with_ips = rng.gen_bool(cfg.middlebox_density);
        for j in 0..cfg.hosts_per_subnet {
            let h = format!("h{i}_{j}");
            add(&mut t, &h, NodeKind::Host, Some(&h));
            hosts.push(NodeRef::from(h.as_str()));
            if j == 0 && with_ips {
                let ips = format!("ips{i}");
                add(
                    &mut t,
                    &ips,
                    NodeKind::Middlebox(MiddleboxSpec {
                        class: FunctionClass::Ips,
                        rules: allow_all(),
                    }),
                    None,
                );
                t.add_link(NodeRef::from(sw.as_str()), NodeRef::from(ips.as_str()));
                t.add_link(NodeRef::from(ips.as_str()), NodeRef::from(h.as_str()));
            } else {
                t.add_link(NodeRef::from(sw.as_str()), NodeRef::from(h.as_str()));
            }
        }
    }

    derive_forwarding(&mut t);

    // Policy endpoint pairs: every ordered intra-subnet pair, plus
    // cross-subnet flows toward the (possibly IPS-fronted) first host of
    // another subnet.
    let mut pairs: Vec<(NodeRef, NodeRef)> = Vec::new();
    let mut seen: BTreeSet<(NodeRef, NodeRef)> = BTreeSet::new();
    for i in 0..cfg.subnets {
        for a in 0..cfg.hosts_per_subnet {
            for b in 0..cfg.hosts_per_subnet {
                if a != b {
                    let pair = (
                        NodeRef::new(format!("h{i}_{a}")),
                        NodeRef::new(format!("h{i}_{b}")),
                    );
                    if seen.insert(pair.clone()) {
                        pairs.push(pair);
                    }
                }
            }
        }
    }
    if cfg.subnets > 1 {
        for i in 0..cfg.subnets {
            for k in 0..cfg.policies_per_subnet {
                let src = NodeRef::new(format!("h{i}_{}", k % cfg.hosts_per_subnet));
                let jump = 1 + (k % (cfg.subnets - 1).max(1));
                let dst = NodeRef::new(format!("h{}_0", (i + jump) % cfg.subnets));
                let pair = (src, dst);
                if pair.0 != pair.1 && seen.insert(pair.clone()) {
                    pairs.push(pair);
                }
            }
        }
    }

    // Read waypoints and scopes off the simulated paths (boxes still
    // allow-all at this point).
    let mut policies = Vec::new();
    for (idx, (src, dst)) in pairs.iter().enumerate() {
        let src_addr = t.nodes[src].addresses.iter().next().expect("host addressed").clone();
        let dst_addr = t.nodes[dst].addresses.iter().next().expect("host addressed").clone();
        let header = crate::policy::PacketHeader {
            src: src_addr.clone(),
            dst: dst_addr.clone(),
            sport: crate::traversal::PROBE_EPHEMERAL_PORT,
            dport: crate::traversal::PROBE_LOW_PORT,
            proto: "TCP".to_string(),
        };
        let tr = simulate(&t, src, &header, DEFAULT_HOP_LIMIT).expect("generated hosts exist");
        if !tr.outcome.is_delivered() {
            continue;
        }
        let boxes: Vec<NodeRef> = tr
            .sigma
            .iter()
            .filter(|n| t.nodes[*n].is_middlebox())
            .cloned()
            .collect();
        let mut spec = WaypointSpec {
            waypoints: boxes.clone(),
            precedence: boxes.windows(2).map(|w| (w[0].clone(), w[1].clone())).collect(),
            occurrence: Vec::new(),
        };
        // Mixed constraint shapes: exact count on the first box, at-least
        // on the second, membership only (implicit visit) beyond.
        for (bi, b) in boxes.iter().enumerate() {
            match bi {
                0 => spec.occurrence.push(OccurrenceConstraint {
                    node: b.clone(),
                    relation: Relation::Eq,
                    count: 1,
                }),
                1 => spec.occurrence.push(OccurrenceConstraint {
                    node: b.clone(),
                    relation: Relation::Ge,
                    count: 1,
                }),
                _ => {}
            }
        }
        policies.push(Policy {
            id: PolicyId(format!("G{idx}")),
            class: PacketClass {
                pattern: HeaderPattern {
                    src: Some(src_addr),
                    dst: Some(dst_addr.clone()),
                    sport: None,
                    dport: None,
                    proto: Some("TCP".to_string()),
                },
                origin: None,
            },
            destination: dst_addr,
            waypoints: spec,
            scope: tr.reach_set.clone(),
        });
    }
    let ps = PolicySet::new(policies);

    // Harden: each firewall/IPS passes exactly the policied classes whose
    // paths cross it; the core ACL does the same for routed traffic.
    let mut crossing: BTreeMap<NodeRef, Vec<HeaderPattern>> = BTreeMap::new();
    let mut core_permits: Vec<HeaderPattern> = Vec::new();
    for p in &ps.policies {
        let probe = policy_probe(p, &t).expect("generated probes build");
        let tr = simulate(&t, &probe.inject_at, &probe.header, DEFAULT_HOP_LIMIT)
            .expect("generated probes run");
        for n in &tr.sigma {
            match &t.nodes[n].kind {
                NodeKind::Middlebox(spec) if spec.class != FunctionClass::LoadBalancer => {
                    crossing.entry(n.clone()).or_default().push(p.class.pattern.clone());
                }
                NodeKind::Router => core_permits.push(p.class.pattern.clone()),
                _ => {}
            }
        }
    }
    for (node, patterns) in crossing {
        if let Some(n) = t.nodes.get_mut(&node) {
            if let NodeKind::Middlebox(spec) = &mut n.kind {
                let mut rules: Vec<MbRule> = patterns
                    .into_iter()
                    .map(|pattern| MbRule {
                        pattern,
                        action: RuleAction::Allow,
                    })
                    .collect();
                rules.push(MbRule {
                    pattern: HeaderPattern::any(),
                    action: RuleAction::Deny,
                });
                spec.rules = rules;
            }
        }
    }
    if let Some(ForwardingState::Router { acl, .. }) = t.forwarding.get_mut(&NodeRef::from("core"))
    {
        *acl = core_permits
            .into_iter()
            .map(|pattern| AclEntry {
                pattern,
                permit: true,
            })
            .collect();
        acl.push(AclEntry {
            pattern: HeaderPattern::any(),
            permit: false,
        });
    }

    (t, ps)
}

/// Generates a deterministic campus scenario that checks clean, retrying
/// with derived seeds up to a bound.
pub fn gen_campus(cfg: &ScenarioConfig) -> Result<(Topology, PolicySet), GenError> {
    cfg.validate().map_err(GenError::Invalid)?;
    let mut last_total = 0;
    for attempt in 0..GEN_ATTEMPTS {
        let (t, ps) = build_attempt(cfg, attempt);
        let report = check_all(&t, &ps, DEFAULT_HOP_LIMIT);
        if report.is_clean() {
            return Ok((t, ps));
        }
        last_total = report.total;
    }
    Err(GenError::NotConformant {
        attempts: GEN_ATTEMPTS,
        last_total,
    })
}

/// Deterministic choice of which hosts migrate: `migrate_fraction` of the
/// host population (rounded up), drawn with a seed-derived shuffle.
pub fn migration_set(t: &Topology, cfg: &ScenarioConfig) -> BTreeSet<NodeRef> {
    let mut hosts: Vec<NodeRef> = t.hosts().map(|h| h.id.clone()).collect();
    hosts.sort();
    if hosts.is_empty() {
        return BTreeSet::new();
    }
    let count = ((hosts.len() as f64 * cfg.migrate_fraction).ceil() as usize)
        .clamp(1, hosts.len());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x9E37_79B9_7F4A_7C15);
    // Fisher-Yates prefix.
    for i in 0..count.min(hosts.len() - 1) {
        let j = rng.gen_range(i..hosts.len());
        hosts.swap(i, j);
    }
    hosts.into_iter().take(count).collect()
}
