//! Acceptance suite: end-to-end criteria for the whole artifact, one test
//! per criterion, each printing a PASS line (visible with
//! `cargo test --test acceptance -- --nocapture`).
//!
//! 1. The built-in fixture checks clean across all six policies, fast.
//! 2. Simulated reach for the first two policies stays inside the
//!    published scope sets, exactly.
//! 3. Flat relocation of u_1 breaks policies (including the tier-1 IPS
//!    occurrence); the planner produces a verified zero-violation plan.
//! 4. The waypoint evaluator agrees with an exhaustive brute-force
//!    scanner on every sequence up to length 6 over a 5-node alphabet,
//!    for 50 random specifications.
//! 5. Simulated reach equals an independent naive closure on 200 random
//!    topologies without rewrites.
//! 6. A 50-seed campus sweep: every naive run whose migrated-host policy
//!    paths cross a middlebox breaks; every planner run is clean or
//!    explicitly infeasible.
//! 7. Two consecutive full-pipeline runs are byte-identical.

use std::collections::{BTreeMap, BTreeSet};
use std::time::{Duration, Instant};

use netext_core::checker::{check_all, Category};
use netext_core::extend::{
    apply_plan, map_policy_set, plan_extension, relocate_naive, verify_homomorphism, CostModel,
};
use netext_core::netmodel::{
    Address, Flexibility, ForwardingState, FunctionClass, HeaderPattern, MbRule, MiddleboxSpec,
    Node, NodeKind, NodeRef, RouteEntry, RuleAction, Site, SiteId, SiteKind, Topology,
};
use netext_core::policy::{
    check_waypoints, OccurrenceConstraint, PacketHeader, PolicyId, Relation, WaypointSpec,
};
use netext_core::scenario::ScenarioConfig;
use netext_core::traversal::{policy_probe, probe_headers, simulate, DEFAULT_HOP_LIMIT};
use netext_core::{eval, fixture_motivating_example};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn n(s: &str) -> NodeRef {
    NodeRef::from(s)
}

fn refs(names: &[&str]) -> BTreeSet<NodeRef> {
    names.iter().map(|s| NodeRef::from(*s)).collect()
}

fn assert_under(elapsed: Duration, budget: Duration, what: &str) {
    assert!(
        elapsed < budget,
        "{what} took {elapsed:?}, budget {budget:?}"
    );
}

#[test]
fn criterion_1_fixture_conformance() {
    let start = Instant::now();
    let (t, ps) = fixture_motivating_example();
    let report = check_all(&t, &ps, DEFAULT_HOP_LIMIT);
    assert_eq!(ps.len(), 6);
    assert_eq!(
        report.total,
        0,
        "fixture must check clean:\n{}",
        report.render_text()
    );
    assert!(report.config_errors.is_empty());
    let elapsed = start.elapsed();
    assert_under(elapsed, Duration::from_secs(1), "fixture check");
    println!("ACCEPTANCE fixture-conformance: PASS ({elapsed:?}, 0 violations across 6 policies)");
}

#[test]
fn criterion_2_scope_fidelity() {
    let (t, ps) = fixture_motivating_example();
    let scope1 = refs(&["LB_1", "F_1", "CE", "S_1", "u_e"]);
    let scope2 = refs(&["LB_1", "IPS_1", "S_3", "u_1"]);

    // Policy_1's probe: the pre-rewrite generation must stay inside
    // Scope_1, the post-rewrite generation inside Scope_2, and the whole
    // reach inside their union.
    let p1 = ps.get(&PolicyId::from("Policy_1")).unwrap();
    let probe1 = policy_probe(p1, &t).unwrap();
    let tr1 = simulate(&t, &probe1.inject_at, &probe1.header, DEFAULT_HOP_LIMIT).unwrap();
    assert!(tr1.outcome.is_delivered());
    let epoch0 = tr1.reach_by_epoch.get(&0).unwrap();
    assert!(
        epoch0.is_subset(&scope1),
        "Policy_1 reach {epoch0:?} escapes {scope1:?}"
    );
    let epoch1 = tr1.reach_by_epoch.get(&1).unwrap();
    assert!(
        epoch1.is_subset(&scope2),
        "Policy_2 segment reach {epoch1:?} escapes {scope2:?}"
    );
    let union: BTreeSet<NodeRef> = scope1.union(&scope2).cloned().collect();
    assert!(tr1.reach_set.is_subset(&union));

    // Policy_2's own probe.
    let p2 = ps.get(&PolicyId::from("Policy_2")).unwrap();
    let probe2 = policy_probe(p2, &t).unwrap();
    let tr2 = simulate(&t, &probe2.inject_at, &probe2.header, DEFAULT_HOP_LIMIT).unwrap();
    assert!(tr2.outcome.is_delivered());
    assert!(
        tr2.reach_set.is_subset(&scope2),
        "Policy_2 reach {:?} escapes {scope2:?}",
        tr2.reach_set
    );
    println!("ACCEPTANCE scope-fidelity: PASS (reach within published Scope_1/Scope_2 exactly)");
}

#[test]
fn criterion_3_naive_breaks_planner_preserves() {
    let start = Instant::now();
    let (t, ps) = fixture_motivating_example();
    let site = SiteId::from("dc");
    let t = t.with_remote_site(site.clone(), Flexibility::Full);
    let hosts: BTreeSet<NodeRef> = [n("u_1")].into_iter().collect();

    let t_naive = relocate_naive(&t, &hosts, &site).unwrap();
    let naive_report = check_all(&t_naive, &ps, DEFAULT_HOP_LIMIT);
    assert!(naive_report.total >= 1, "naive relocation must violate");
    assert!(
        naive_report.violations.iter().any(|v| {
            v.policy == Some(PolicyId::from("Policy_2"))
                && v.category == Category::OccurrenceViolation
                && format!("{}", v.detail).contains("IPS_1")
        }),
        "expected a Policy_2 occurrence failure on IPS_1:\n{}",
        naive_report.render_text()
    );

    let plan = plan_extension(&t, &ps, &hosts, &site, &CostModel::default(), DEFAULT_HOP_LIMIT)
        .expect("planner finds a policy-preserving extension");
    let extended = apply_plan(&t, &plan).unwrap();
    let verdict = verify_homomorphism(&t, &extended, &ps, &plan, DEFAULT_HOP_LIMIT);
    assert!(verdict.holds, "{}", verdict.render_text());
    let mapped = map_policy_set(&ps, &plan, &extended, DEFAULT_HOP_LIMIT);
    let post = check_all(&extended, &mapped, DEFAULT_HOP_LIMIT);
    assert_eq!(post.total, 0, "{}", post.render_text());
    assert!(post.config_errors.is_empty());

    let elapsed = start.elapsed();
    assert_under(elapsed, Duration::from_secs(5), "naive vs planned");
    println!(
        "ACCEPTANCE naive-breaks-planner-preserves: PASS ({elapsed:?}, naive total {}, planned total 0)",
        naive_report.total
    );
}

// --- criterion 4: exhaustive waypoint-evaluator oracle ---

/// Independent scanner: judges every constraint by walking σ afresh.
fn oracle_violation_tags(spec: &WaypointSpec, sigma: &[NodeRef]) -> BTreeSet<String> {
    let scan_count = |v: &NodeRef| sigma.iter().filter(|x| *x == v).count();
    let scan_first = |v: &NodeRef| sigma.iter().position(|x| x == v);
    let absence_ok = |v: &NodeRef| {
        let cs: Vec<_> = spec.occurrence.iter().filter(|c| &c.node == v).collect();
        !cs.is_empty()
            && cs.iter().all(|c| match c.relation {
                Relation::Eq | Relation::Ge => c.count == 0,
                Relation::Le => true,
            })
    };
    let mut tags = BTreeSet::new();
    for w in &spec.waypoints {
        if !spec.occurrence.iter().any(|c| &c.node == w) && scan_count(w) == 0 {
            tags.insert(format!("missed:{w}"));
        }
    }
    for c in &spec.occurrence {
        let got = scan_count(&c.node);
        let ok = match c.relation {
            Relation::Eq => got == c.count,
            Relation::Ge => got >= c.count,
            Relation::Le => got <= c.count,
        };
        if !ok {
            tags.insert(format!("occ:{}:{}:{}", c.node, c.relation.symbol(), c.count));
        }
    }
    for (a, b) in &spec.precedence {
        let ok = match (scan_first(a), scan_first(b)) {
            (Some(fa), Some(fb)) => fa < fb,
            (None, _) => absence_ok(a),
            (_, None) => absence_ok(b),
        };
        if !ok {
            tags.insert(format!("order:{a}:{b}"));
        }
    }
    tags
}

fn implementation_violation_tags(spec: &WaypointSpec, sigma: &[NodeRef]) -> BTreeSet<String> {
    use netext_core::policy::{WaypointVerdict, WaypointViolation};
    match check_waypoints(spec, sigma) {
        WaypointVerdict::Satisfied => BTreeSet::new(),
        WaypointVerdict::Violated(vs) => vs
            .into_iter()
            .map(|v| match v {
                WaypointViolation::Missed { node } => format!("missed:{node}"),
                WaypointViolation::Occurrence {
                    node,
                    relation,
                    required,
                    ..
                } => format!("occ:{node}:{}:{required}", relation.symbol()),
                WaypointViolation::Order { before, after } => format!("order:{before}:{after}"),
            })
            .collect(),
    }
}

fn random_spec(rng: &mut ChaCha8Rng, alphabet: &[NodeRef]) -> WaypointSpec {
    loop {
        let member_count = rng.gen_range(0..=alphabet.len());
        let mut members: Vec<NodeRef> = alphabet.to_vec();
        for i in 0..member_count.min(alphabet.len() - 1) {
            let j = rng.gen_range(i..alphabet.len());
            members.swap(i, j);
        }
        members.truncate(member_count);

        let mut precedence = BTreeSet::new();
        for _ in 0..rng.gen_range(0..3) {
            if members.len() >= 2 {
                let i = rng.gen_range(0..members.len() - 1);
                let j = rng.gen_range(i + 1..members.len());
                precedence.insert((members[i].clone(), members[j].clone()));
            }
        }
        let mut occurrence = Vec::new();
        for w in &members {
            if rng.gen_bool(0.6) {
                let relation = match rng.gen_range(0..3) {
                    0 => Relation::Eq,
                    1 => Relation::Ge,
                    _ => Relation::Le,
                };
                let count = rng.gen_range(0..=3);
                let count = if relation == Relation::Ge && count == 0 {
                    1
                } else {
                    count
                };
                occurrence.push(OccurrenceConstraint {
                    node: w.clone(),
                    relation,
                    count,
                });
            }
        }
        let spec = WaypointSpec {
            waypoints: members,
            precedence,
            occurrence,
        };
        if spec.validate().is_ok() {
            return spec;
        }
    }
}

#[test]
fn criterion_4_waypoint_oracle_exhaustive() {
    let start = Instant::now();
    let alphabet: Vec<NodeRef> = ["a", "b", "c", "d", "e"].iter().map(|s| n(s)).collect();

    // Every sequence of length 0..=6 over the 5-node alphabet: 19,531.
    let mut sequences: Vec<Vec<NodeRef>> = vec![Vec::new()];
    let mut frontier: Vec<Vec<NodeRef>> = vec![Vec::new()];
    for _ in 0..6 {
        let mut next = Vec::new();
        for seq in &frontier {
            for sym in &alphabet {
                let mut s = seq.clone();
                s.push(sym.clone());
                next.push(s);
            }
        }
        sequences.extend(next.iter().cloned());
        frontier = next;
    }
    assert_eq!(sequences.len(), 19_531);

    let mut rng = ChaCha8Rng::seed_from_u64(0xACCE97);
    let mut checked = 0u64;
    for _ in 0..50 {
        let spec = random_spec(&mut rng, &alphabet);
        for sigma in &sequences {
            let got = implementation_violation_tags(&spec, sigma);
            let want = oracle_violation_tags(&spec, sigma);
            assert_eq!(
                got, want,
                "verdict mismatch for spec {spec:?} on {sigma:?}"
            );
            checked += 1;
        }
    }
    let elapsed = start.elapsed();
    assert_under(elapsed, Duration::from_secs(60), "waypoint oracle sweep");
    println!(
        "ACCEPTANCE waypoint-oracle-equivalence: PASS ({elapsed:?}, {checked} comparisons, 0 mismatches)"
    );
}

// --- criterion 5: simulator reach vs naive closure ---

/// Independent reachability expander over (ingress, node) states with its
/// own reading of the forwarding behaviors. No copies, no hop limits.
fn closure_reach(t: &Topology, inject: &NodeRef, pkt: &PacketHeader) -> BTreeSet<NodeRef> {
    fn pattern_matches(p: &HeaderPattern, pkt: &PacketHeader) -> bool {
        p.src.as_ref().is_none_or(|v| *v == pkt.src)
            && p.dst.as_ref().is_none_or(|v| *v == pkt.dst)
            && p.sport.is_none_or(|v| v == pkt.sport)
            && p.dport.is_none_or(|v| v == pkt.dport)
            && p.proto.as_ref().is_none_or(|v| *v == pkt.proto)
    }
    fn step(t: &Topology, at: &NodeRef, ing: Option<&NodeRef>, pkt: &PacketHeader) -> Vec<NodeRef> {
        let Some(node) = t.node(at) else { return vec![] };
        match (&node.kind, t.forwarding_of(at)) {
            (NodeKind::Host, ForwardingState::Host { gateway }) => {
                if node.addresses.contains(&pkt.dst) || ing.is_some() {
                    vec![]
                } else {
                    gateway
                        .or_else(|| {
                            let nbs = t.neighbors(at);
                            (nbs.len() == 1).then(|| nbs[0].clone())
                        })
                        .into_iter()
                        .collect()
                }
            }
            (NodeKind::Switch, ForwardingState::Switch { fib, flood_on_miss }) => {
                if let Some(next) = fib.get(&pkt.dst) {
                    vec![next.clone()]
                } else if flood_on_miss {
                    t.neighbors(at).into_iter().filter(|x| Some(x) != ing).collect()
                } else {
                    vec![]
                }
            }
            (NodeKind::Router, ForwardingState::Router { routes, acl }) => {
                for e in &acl {
                    if pattern_matches(&e.pattern, pkt) {
                        if !e.permit {
                            return vec![];
                        }
                        break;
                    }
                }
                if node.addresses.contains(&pkt.dst) {
                    return vec![];
                }
                let mut best: Option<&RouteEntry> = None;
                for r in &routes {
                    if pkt.dst.as_str().starts_with(&r.prefix)
                        && best.is_none_or(|b| r.prefix.len() > b.prefix.len())
                    {
                        best = Some(r);
                    }
                }
                best.map(|r| r.next.clone()).into_iter().collect()
            }
            (NodeKind::Middlebox(spec), ForwardingState::Middlebox { fib }) => {
                for rule in &spec.rules {
                    if pattern_matches(&rule.pattern, pkt) {
                        match rule.action {
                            RuleAction::Deny => return vec![],
                            _ => break,
                        }
                    }
                }
                if node.addresses.contains(&pkt.dst) {
                    return vec![];
                }
                if let Some(next) = fib.get(&pkt.dst) {
                    return vec![next.clone()];
                }
                let out: Vec<NodeRef> =
                    t.neighbors(at).into_iter().filter(|x| Some(x) != ing).collect();
                if out.len() == 1 {
                    out
                } else {
                    vec![]
                }
            }
            _ => vec![],
        }
    }

    let mut reach: BTreeSet<NodeRef> = [inject.clone()].into_iter().collect();
    let mut states: BTreeSet<(Option<NodeRef>, NodeRef)> =
        [(None, inject.clone())].into_iter().collect();
    let mut work: Vec<(Option<NodeRef>, NodeRef)> = states.iter().cloned().collect();
    while let Some((ing, at)) = work.pop() {
        for nx in step(t, &at, ing.as_ref(), pkt) {
            reach.insert(nx.clone());
            let st = (Some(at.clone()), nx);
            if states.insert(st.clone()) {
                work.push(st);
            }
        }
    }
    reach
}

fn random_topology_no_rewrites(seed: u64) -> (Topology, NodeRef, PacketHeader) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let count = rng.gen_range(2..=8usize);
    let mut t = Topology::empty();
    t.sites.insert(
        SiteId::from("campus"),
        Site {
            id: SiteId::from("campus"),
            kind: SiteKind::Enterprise,
            flexibility: Flexibility::Full,
        },
    );
    let ids: Vec<NodeRef> = (0..count).map(|i| NodeRef::new(format!("n{i}"))).collect();
    for (i, id) in ids.iter().enumerate() {
        let kind = match rng.gen_range(0..4) {
            0 => NodeKind::Host,
            1 => NodeKind::Switch,
            2 => NodeKind::Router,
            _ => NodeKind::Middlebox(MiddleboxSpec {
                class: FunctionClass::Ips,
                rules: (0..rng.gen_range(0..3))
                    .map(|_| MbRule {
                        pattern: HeaderPattern {
                            dst: rng
                                .gen_bool(0.5)
                                .then(|| Address::new(format!("n{}", rng.gen_range(0..count)))),
                            ..HeaderPattern::any()
                        },
                        action: if rng.gen_bool(0.5) {
                            RuleAction::Allow
                        } else {
                            RuleAction::Deny
                        },
                    })
                    .collect(),
            }),
        };
        let addresses: BTreeSet<Address> = if matches!(kind, NodeKind::Host) {
            [Address::new(format!("n{i}"))].into_iter().collect()
        } else {
            BTreeSet::new()
        };
        t.nodes.insert(
            id.clone(),
            Node {
                id: id.clone(),
                kind,
                site: SiteId::from("campus"),
                addresses,
            },
        );
    }
    for i in 1..count {
        let j = rng.gen_range(0..i);
        t.add_link(ids[i].clone(), ids[j].clone());
    }
    for _ in 0..rng.gen_range(0..count) {
        let a = rng.gen_range(0..count);
        let b = rng.gen_range(0..count);
        if a != b {
            t.add_link(ids[a].clone(), ids[b].clone());
        }
    }
    for id in &ids {
        let nbs = t.neighbors(id);
        if nbs.is_empty() {
            continue;
        }
        let pick = |rng: &mut ChaCha8Rng| nbs[rng.gen_range(0..nbs.len())].clone();
        match t.nodes[id].kind.clone() {
            NodeKind::Switch => {
                let mut fib = BTreeMap::new();
                for k in 0..count {
                    if rng.gen_bool(0.5) {
                        fib.insert(Address::new(format!("n{k}")), pick(&mut rng));
                    }
                }
                t.forwarding.insert(
                    id.clone(),
                    ForwardingState::Switch {
                        fib,
                        flood_on_miss: rng.gen_bool(0.7),
                    },
                );
            }
            NodeKind::Router => {
                let mut routes = Vec::new();
                for k in 0..count {
                    if rng.gen_bool(0.6) {
                        routes.push(RouteEntry {
                            prefix: format!("n{k}"),
                            next: pick(&mut rng),
                        });
                    }
                }
                let acl = if rng.gen_bool(0.4) {
                    vec![netext_core::netmodel::AclEntry {
                        pattern: HeaderPattern {
                            dst: Some(Address::new(format!("n{}", rng.gen_range(0..count)))),
                            ..HeaderPattern::any()
                        },
                        permit: rng.gen_bool(0.5),
                    }]
                } else {
                    vec![]
                };
                t.forwarding
                    .insert(id.clone(), ForwardingState::Router { routes, acl });
            }
            NodeKind::Middlebox(_) => {
                let mut fib = BTreeMap::new();
                for k in 0..count {
                    if rng.gen_bool(0.3) {
                        fib.insert(Address::new(format!("n{k}")), pick(&mut rng));
                    }
                }
                t.forwarding
                    .insert(id.clone(), ForwardingState::Middlebox { fib });
            }
            NodeKind::Host => {
                let gw = pick(&mut rng);
                t.forwarding
                    .insert(id.clone(), ForwardingState::Host { gateway: Some(gw) });
            }
            NodeKind::TunnelEndpoint => {}
        }
    }
    let inject = ids[rng.gen_range(0..count)].clone();
    let pkt = PacketHeader {
        src: Address::new(format!("n{}", rng.gen_range(0..count))),
        dst: Address::new(format!("n{}", rng.gen_range(0..count))),
        sport: 1024,
        dport: 80,
        proto: "TCP".to_string(),
    };
    (t, inject, pkt)
}

#[test]
fn criterion_5_simulator_oracle() {
    let start = Instant::now();
    for seed in 0..200u64 {
        let (t, inject, pkt) = random_topology_no_rewrites(seed);
        let tr = simulate(&t, &inject, &pkt, 4096).unwrap();
        let expected = closure_reach(&t, &inject, &pkt);
        assert_eq!(
            tr.reach_set, expected,
            "reach mismatch on seed {seed} (inject {inject}, pkt {pkt})"
        );
    }
    let elapsed = start.elapsed();
    println!("ACCEPTANCE simulator-oracle-equivalence: PASS ({elapsed:?}, 200 topologies exact)");
}

#[test]
fn criterion_6_campus_sweep() {
    let start = Instant::now();
    let base = ScenarioConfig {
        seed: 1,
        subnets: 3,
        hosts_per_subnet: 2,
        middlebox_density: 0.5,
        policies_per_subnet: 2,
        migrate_fraction: 0.5,
    };
    let result = eval::run_eval(&base, 50, DEFAULT_HOP_LIMIT);
    assert_eq!(result.rows.len(), 50);

    let with_mb: Vec<_> = result
        .rows
        .iter()
        .filter(|r| r.migrated_path_has_middlebox)
        .collect();
    assert!(
        !with_mb.is_empty(),
        "density 0.5 must yield middlebox-on-path scenarios"
    );
    for row in &with_mb {
        assert!(
            row.naive_violations >= 1,
            "scenario {} has middleboxes on migrated paths but naive total 0",
            row.scenario
        );
    }
    for row in &result.rows {
        assert!(
            row.infeasible || row.planned_violations == 0,
            "scenario {}: planner produced violations",
            row.scenario
        );
    }
    let elapsed = start.elapsed();
    assert_under(elapsed, Duration::from_secs(120), "campus sweep");
    println!(
        "ACCEPTANCE campus-sweep: PASS ({elapsed:?}, {}/{} middlebox scenarios broke under naive, {} infeasible)",
        with_mb.len(),
        result.rows.len(),
        result.aggregates.infeasible_count
    );
}

#[test]
fn criterion_7_determinism() {
    let run_once = || {
        let (t, ps) = fixture_motivating_example();
        let report_json = check_all(&t, &ps, DEFAULT_HOP_LIMIT).to_json();
        let site = SiteId::from("dc");
        let t = t.with_remote_site(site.clone(), Flexibility::Full);
        let hosts: BTreeSet<NodeRef> = [n("u_1")].into_iter().collect();
        let plan =
            plan_extension(&t, &ps, &hosts, &site, &CostModel::default(), DEFAULT_HOP_LIMIT)
                .unwrap();
        let sweep = eval::run_eval(
            &ScenarioConfig {
                seed: 7,
                ..ScenarioConfig::default()
            },
            5,
            DEFAULT_HOP_LIMIT,
        );
        let probes = probe_headers(&ps, &fixture_motivating_example().0);
        (
            report_json,
            plan.to_json(),
            sweep.to_csv(),
            sweep.render_table(),
            serde_json::to_string(&probes.probes).unwrap(),
        )
    };
    let first = run_once();
    let second = run_once();
    assert_eq!(first, second, "full pipeline must be byte-identical");
    println!("ACCEPTANCE determinism: PASS (reports, plans, CSV, and probes byte-identical)");
}
