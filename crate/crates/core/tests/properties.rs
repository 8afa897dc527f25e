//! Property tests over the model's stated invariants: round-trips,
//! multiset behavior of occurrence counting, scope monotonicity, match
//! totality, and simulation conservation laws.

use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;

use netext_core::netmodel::{
    Address, Flexibility, ForwardingState, FunctionClass, HeaderPattern, MbRule, MiddleboxSpec,
    Node, NodeKind, NodeRef, RouteEntry, RuleAction, Site, SiteId, SiteKind, Topology,
};
use netext_core::policy::{
    check_scope, check_waypoints, match_packet, occur, parse_policy_set, render_policy_set,
    MatchOutcome, OccurrenceConstraint, PacketClass, PacketHeader, Policy, PolicyId, PolicySet,
    Relation, ScopeVerdict, WaypointSpec,
};
use netext_core::{node_equiv, render_topology, simulate};

const TOKENS: [&str; 6] = ["alpha", "beta", "gamma", "delta", "eps", "zeta"];

fn node_ref_strategy() -> impl Strategy<Value = NodeRef> {
    proptest::sample::select(TOKENS.to_vec()).prop_map(NodeRef::from)
}

fn relation_strategy() -> impl Strategy<Value = Relation> {
    prop_oneof![
        Just(Relation::Eq),
        Just(Relation::Ge),
        Just(Relation::Le),
    ]
}

fn waypoint_spec_strategy() -> impl Strategy<Value = WaypointSpec> {
    (
        proptest::sample::subsequence(TOKENS.to_vec(), 0..=4),
        proptest::collection::vec((0usize..4, 0usize..4), 0..3),
        proptest::collection::vec((0usize..4, relation_strategy(), 0usize..3), 0..3),
    )
        .prop_map(|(members, pair_idx, occ)| {
            let members: Vec<NodeRef> = members.into_iter().map(NodeRef::from).collect();
            let mut precedence = BTreeSet::new();
            for (i, j) in pair_idx {
                // Ordered by member position: guaranteed acyclic.
                if i < j && j < members.len() {
                    precedence.insert((members[i].clone(), members[j].clone()));
                }
            }
            let mut occurrence = Vec::new();
            for (i, relation, count) in occ {
                if i < members.len() {
                    let count = if relation == Relation::Ge && count == 0 {
                        1
                    } else {
                        count
                    };
                    if occurrence
                        .iter()
                        .all(|c: &OccurrenceConstraint| c.node != members[i])
                    {
                        occurrence.push(OccurrenceConstraint {
                            node: members[i].clone(),
                            relation,
                            count,
                        });
                    }
                }
            }
            WaypointSpec {
                waypoints: members,
                precedence,
                occurrence,
            }
        })
}

fn policy_strategy(id: usize) -> impl Strategy<Value = Policy> {
    (
        proptest::sample::select(TOKENS.to_vec()),
        proptest::sample::select(TOKENS.to_vec()),
        proptest::option::of(0u16..1000),
        proptest::option::of(0u16..1000),
        proptest::option::of(proptest::sample::select(vec!["TCP", "UDP"])),
        proptest::option::of(node_ref_strategy()),
        waypoint_spec_strategy(),
        proptest::sample::subsequence(TOKENS.to_vec(), 0..=6),
    )
        .prop_map(move |(src, dst, sport, dport, proto, origin, waypoints, scope)| {
            let mut scope: BTreeSet<NodeRef> = scope.into_iter().map(NodeRef::from).collect();
            // Parser-enforced invariant: waypoints live inside the scope.
            scope.extend(waypoints.waypoints.iter().cloned());
            scope.insert(NodeRef::from(dst));
            Policy {
                id: PolicyId(format!("P{id}")),
                class: PacketClass {
                    pattern: HeaderPattern {
                        src: Some(Address::from(src)),
                        dst: Some(Address::from(dst)),
                        sport,
                        dport,
                        proto: proto.map(str::to_string),
                    },
                    origin,
                },
                destination: Address::from(dst),
                waypoints,
                scope,
            }
        })
}

fn policy_set_strategy() -> impl Strategy<Value = PolicySet> {
    proptest::collection::vec(Just(()), 0..4).prop_flat_map(|slots| {
        let policies: Vec<_> = slots
            .iter()
            .enumerate()
            .map(|(i, _)| policy_strategy(i))
            .collect();
        policies.prop_map(PolicySet::new)
    })
}

fn header_strategy() -> impl Strategy<Value = PacketHeader> {
    (
        proptest::sample::select(TOKENS.to_vec()),
        proptest::sample::select(TOKENS.to_vec()),
        0u16..1000,
        0u16..1000,
        proptest::sample::select(vec!["TCP", "UDP"]),
    )
        .prop_map(|(src, dst, sport, dport, proto)| PacketHeader {
            src: Address::from(src),
            dst: Address::from(dst),
            sport,
            dport,
            proto: proto.to_string(),
        })
}

proptest! {
    /// Rendering a policy set and parsing it back is the identity.
    #[test]
    fn dsl_round_trip(ps in policy_set_strategy()) {
        let text = render_policy_set(&ps);
        let reparsed = parse_policy_set(&text)
            .unwrap_or_else(|e| panic!("rendered text must parse: {e:?}\n{text}"));
        prop_assert_eq!(ps, reparsed);
    }

    /// Occurrence counts form a multiset decomposition of the sequence and
    /// do not depend on order.
    #[test]
    fn occur_is_a_permutation_invariant_multiset(
        sigma in proptest::collection::vec(node_ref_strategy(), 0..24),
        shuffle_seed in 0u64..1000,
    ) {
        let alphabet: BTreeSet<&NodeRef> = sigma.iter().collect();
        let total: usize = alphabet.iter().map(|v| occur(&sigma, v)).sum();
        prop_assert_eq!(total, sigma.len());

        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let mut shuffled = sigma.clone();
        shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(shuffle_seed));
        for v in &alphabet {
            prop_assert_eq!(occur(&sigma, v), occur(&shuffled, v));
        }
    }

    /// Growing the scope never turns a contained reach into a leak.
    #[test]
    fn scope_check_is_monotone(
        scope in proptest::collection::btree_set(node_ref_strategy(), 0..5),
        reach in proptest::collection::btree_set(node_ref_strategy(), 0..5),
        extra in proptest::collection::btree_set(node_ref_strategy(), 0..3),
    ) {
        let verdict = check_scope(&scope, &reach);
        if verdict.is_contained() {
            let mut bigger = scope.clone();
            bigger.extend(extra.iter().cloned());
            prop_assert!(check_scope(&bigger, &reach).is_contained());
        } else if let ScopeVerdict::Leak(leak) = verdict {
            prop_assert!(leak.iter().all(|n| reach.contains(n) && !scope.contains(n)));
        }
    }

    /// Every concrete header resolves to exactly one of: a single policy,
    /// default deny, or a reported ambiguity — and a returned policy
    /// really matches.
    #[test]
    fn match_packet_is_total(
        ps in policy_set_strategy(),
        pkt in header_strategy(),
        origin in node_ref_strategy(),
    ) {
        match match_packet(&ps, &pkt, &origin) {
            Ok(MatchOutcome::Policy(p)) => {
                prop_assert!(p.class.matches(&pkt, &origin));
                // Nothing strictly more specific also matches.
                let spec = p.class.specificity();
                for q in &ps.policies {
                    if q.class.matches(&pkt, &origin) {
                        prop_assert!(q.class.specificity() <= spec);
                    }
                }
            }
            Ok(MatchOutcome::DefaultDeny) => {
                prop_assert!(ps.policies.iter().all(|p| !p.class.matches(&pkt, &origin)));
            }
            Err(amb) => {
                prop_assert_ne!(amb.a, amb.b);
            }
        }
    }

    /// check_waypoints agrees with an independent direct scan.
    #[test]
    fn waypoints_agree_with_direct_scan(
        spec in waypoint_spec_strategy(),
        sigma in proptest::collection::vec(node_ref_strategy(), 0..8),
    ) {
        prop_assume!(spec.validate().is_ok());
        let verdict = check_waypoints(&spec, &sigma);
        prop_assert_eq!(verdict.is_satisfied(), direct_scan_satisfied(&spec, &sigma));
    }
}

/// Brute-force re-reading of the waypoint semantics, structured nothing
/// like the implementation: every constraint is judged by scanning σ from
/// scratch.
fn direct_scan_satisfied(spec: &WaypointSpec, sigma: &[NodeRef]) -> bool {
    let scan_count = |v: &NodeRef| sigma.iter().filter(|n| *n == v).count();
    let scan_first = |v: &NodeRef| sigma.iter().position(|n| n == v);
    let absence_ok = |v: &NodeRef| {
        let cs: Vec<_> = spec.occurrence.iter().filter(|c| &c.node == v).collect();
        if cs.is_empty() {
            false
        } else {
            cs.iter().all(|c| match c.relation {
                Relation::Eq => c.count == 0,
                Relation::Ge => c.count == 0,
                Relation::Le => true,
            })
        }
    };

    for w in &spec.waypoints {
        let constrained = spec.occurrence.iter().any(|c| &c.node == w);
        if !constrained && scan_count(w) == 0 {
            return false;
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
            return false;
        }
    }
    for (a, b) in &spec.precedence {
        let ok = match (scan_first(a), scan_first(b)) {
            (Some(fa), Some(fb)) => fa < fb,
            (None, _) => absence_ok(a),
            (_, None) => absence_ok(b),
        };
        if !ok {
            return false;
        }
    }
    true
}

// --- topology round-trip and simulation conservation over random nets ---

fn random_topology(seed: u64) -> (Topology, NodeRef, PacketHeader) {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(2..=8usize);
    let mut t = Topology::empty();
    t.sites.insert(
        SiteId::from("campus"),
        Site {
            id: SiteId::from("campus"),
            kind: SiteKind::Enterprise,
            flexibility: Flexibility::Full,
        },
    );
    let ids: Vec<NodeRef> = (0..n).map(|i| NodeRef::new(format!("n{i}"))).collect();
    for (i, id) in ids.iter().enumerate() {
        let kind = match rng.gen_range(0..4) {
            0 => NodeKind::Host,
            1 => NodeKind::Switch,
            2 => NodeKind::Router,
            _ => NodeKind::Middlebox(MiddleboxSpec {
                class: FunctionClass::Firewall,
                rules: if rng.gen_bool(0.5) {
                    vec![MbRule {
                        pattern: HeaderPattern::any(),
                        action: if rng.gen_bool(0.7) {
                            RuleAction::Allow
                        } else {
                            RuleAction::Deny
                        },
                    }]
                } else {
                    vec![]
                },
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
    for i in 1..n {
        let j = rng.gen_range(0..i);
        t.add_link(ids[i].clone(), ids[j].clone());
    }
    for _ in 0..rng.gen_range(0..n) {
        let a = rng.gen_range(0..n);
        let b = rng.gen_range(0..n);
        if a != b {
            t.add_link(ids[a].clone(), ids[b].clone());
        }
    }
    for id in &ids {
        let nbs = t.neighbors(id);
        if nbs.is_empty() {
            continue;
        }
        match t.nodes[id].kind.clone() {
            NodeKind::Switch => {
                let mut fib = BTreeMap::new();
                for k in 0..n {
                    if rng.gen_bool(0.5) {
                        fib.insert(
                            Address::new(format!("n{k}")),
                            nbs[rng.gen_range(0..nbs.len())].clone(),
                        );
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
                for k in 0..n {
                    if rng.gen_bool(0.6) {
                        routes.push(RouteEntry {
                            prefix: format!("n{k}"),
                            next: nbs[rng.gen_range(0..nbs.len())].clone(),
                        });
                    }
                }
                t.forwarding.insert(
                    id.clone(),
                    ForwardingState::Router {
                        routes,
                        acl: vec![],
                    },
                );
            }
            NodeKind::Middlebox(_) => {
                let mut fib = BTreeMap::new();
                for k in 0..n {
                    if rng.gen_bool(0.3) {
                        fib.insert(
                            Address::new(format!("n{k}")),
                            nbs[rng.gen_range(0..nbs.len())].clone(),
                        );
                    }
                }
                t.forwarding
                    .insert(id.clone(), ForwardingState::Middlebox { fib });
            }
            NodeKind::Host => {
                t.forwarding.insert(
                    id.clone(),
                    ForwardingState::Host {
                        gateway: Some(nbs[rng.gen_range(0..nbs.len())].clone()),
                    },
                );
            }
            NodeKind::TunnelEndpoint => {}
        }
    }
    let inject = ids[rng.gen_range(0..n)].clone();
    let pkt = PacketHeader {
        src: Address::new(format!("n{}", rng.gen_range(0..n))),
        dst: Address::new(format!("n{}", rng.gen_range(0..n))),
        sport: 1024,
        dport: 80,
        proto: "TCP".to_string(),
    };
    (t, inject, pkt)
}

proptest! {
    /// build_topology(render_topology(t)) reproduces t structurally.
    #[test]
    fn topology_document_round_trip(seed in 0u64..500) {
        let (t, _, _) = random_topology(seed);
        let doc = render_topology(&t);
        let rebuilt = netext_core::build_topology(&doc)
            .unwrap_or_else(|e| panic!("rendered document must build: {e:?}"));
        prop_assert_eq!(t, rebuilt);
    }

    /// σ is a walk inside the reach-set, rewrites happen on σ, delivery
    /// ends σ, and the simulation is reproducible.
    #[test]
    fn simulation_conservation(seed in 0u64..500) {
        let (t, inject, pkt) = random_topology(seed);
        let tr = simulate(&t, &inject, &pkt, 256).unwrap();
        for n in &tr.sigma {
            prop_assert!(tr.reach_set.contains(n));
        }
        for w in tr.sigma.windows(2) {
            prop_assert!(t.has_link(&w[0], &w[1]), "σ must walk along links");
        }
        for rw in &tr.rewrites {
            prop_assert_eq!(&tr.sigma[rw.index], &rw.at);
        }
        if let netext_core::traversal::Outcome::Delivered(d) = &tr.outcome {
            prop_assert_eq!(tr.sigma.last(), Some(d));
        } else {
            prop_assert!(tr.sigma.is_empty());
        }
        let again = simulate(&t, &inject, &pkt, 256).unwrap();
        prop_assert_eq!(tr, again);
    }

    /// Middlebox equivalence is reflexive and symmetric on random specs
    /// (transitivity follows from equality but is asserted on triples).
    #[test]
    fn node_equiv_is_an_equivalence(
        classes in proptest::collection::vec(0usize..3, 3),
        rule_counts in proptest::collection::vec(0usize..2, 3),
    ) {
        let mk = |i: usize, class: usize, rules: usize| Node {
            id: NodeRef::new(format!("mb{i}")),
            kind: NodeKind::Middlebox(MiddleboxSpec {
                class: match class {
                    0 => FunctionClass::Firewall,
                    1 => FunctionClass::Ips,
                    _ => FunctionClass::LoadBalancer,
                },
                rules: (0..rules)
                    .map(|_| MbRule {
                        pattern: HeaderPattern::any(),
                        action: RuleAction::Deny,
                    })
                    .collect(),
            }),
            site: SiteId::from("campus"),
            addresses: BTreeSet::new(),
        };
        let nodes: Vec<Node> = (0..3).map(|i| mk(i, classes[i], rule_counts[i])).collect();
        for x in &nodes {
            prop_assert!(node_equiv(x, x).unwrap());
            for y in &nodes {
                prop_assert_eq!(node_equiv(x, y).unwrap(), node_equiv(y, x).unwrap());
                for z in &nodes {
                    if node_equiv(x, y).unwrap() && node_equiv(y, z).unwrap() {
                        prop_assert!(node_equiv(x, z).unwrap());
                    }
                }
            }
        }
    }
}
