//! Built-in two-tier enterprise fixture.
//!
//! An Internet client `u_e` reaches a tier-1 web application through the
//! customer-edge router `CE`, edge switch `S_1`, tier-1 firewall `F_1`
//! (HTTP only), and the tier-1 load balancer `LB_1`, which owns the
//! application's public address `L_1` and rewrites it to the real server
//! `u_1`. The tier-1 subnet switch `S_3` serves `u_1` (fronted in-line by
//! `IPS_1`) and `v_1`. A second tier hangs behind `S_2`: firewall `F_2`
//! (more permissive, different configuration from `F_1`), load balancer
//! `LB_2`, switch `S_4`, and `IPS_2` in front of the tier-2 server `u_2`.
//! `INET` is the upstream attachment stub on `CE`.
//!
//! Six policies cover the traffic this network is meant to carry; the
//! checker reports zero violations on the pair. Everything else is
//! filtered: `F_1` only passes HTTP to and from `L_1`, `F_2` only passes
//! tier-1 server traffic, and the two IPS boxes only pass what their
//! servers are supposed to see.

use std::collections::BTreeMap;

use crate::netmodel::{
    Address, Flexibility, ForwardingState, FunctionClass, HeaderPattern, MbRule, MiddleboxSpec,
    Node, NodeKind, NodeRef, RewriteField, RouteEntry, RuleAction, Site, SiteId, SiteKind,
    Topology,
};
use crate::policy::{parse_policy_set, PolicySet};

const SITE: &str = "campus";

fn node(t: &mut Topology, id: &str, kind: NodeKind, addresses: &[&str]) {
    t.nodes.insert(
        NodeRef::from(id),
        Node {
            id: NodeRef::from(id),
            kind,
            site: SiteId::from(SITE),
            addresses: addresses.iter().map(|a| Address::from(*a)).collect(),
        },
    );
}

fn rule(pattern: HeaderPattern, action: RuleAction) -> MbRule {
    MbRule { pattern, action }
}

fn pat(src: Option<&str>, dst: Option<&str>, sport: Option<u16>, dport: Option<u16>) -> HeaderPattern {
    HeaderPattern {
        src: src.map(Address::from),
        dst: dst.map(Address::from),
        sport,
        dport,
        proto: Some("TCP".to_string()),
    }
}

fn switch_fib(t: &mut Topology, id: &str, entries: &[(&str, &str)]) {
    let fib: BTreeMap<Address, NodeRef> = entries
        .iter()
        .map(|(a, n)| (Address::from(*a), NodeRef::from(*n)))
        .collect();
    t.forwarding.insert(
        NodeRef::from(id),
        ForwardingState::Switch {
            fib,
            flood_on_miss: true,
        },
    );
}

fn middlebox_fib(t: &mut Topology, id: &str, entries: &[(&str, &str)]) {
    let fib: BTreeMap<Address, NodeRef> = entries
        .iter()
        .map(|(a, n)| (Address::from(*a), NodeRef::from(*n)))
        .collect();
    t.forwarding
        .insert(NodeRef::from(id), ForwardingState::Middlebox { fib });
}

fn host_gw(t: &mut Topology, id: &str, gw: &str) {
    t.forwarding.insert(
        NodeRef::from(id),
        ForwardingState::Host {
            gateway: Some(NodeRef::from(gw)),
        },
    );
}

/// The motivating-example network and its six policies. The checker
/// reports zero violations on the returned pair.
pub fn fixture_motivating_example() -> (Topology, PolicySet) {
    let mut t = Topology::empty();
    t.sites.insert(
        SiteId::from(SITE),
        Site {
            id: SiteId::from(SITE),
            kind: SiteKind::Enterprise,
            flexibility: Flexibility::Full,
        },
    );

    node(&mut t, "u_e", NodeKind::Host, &["u_e"]);
    node(&mut t, "INET", NodeKind::Switch, &[]);
    node(&mut t, "CE", NodeKind::Router, &[]);
    node(&mut t, "S_1", NodeKind::Switch, &[]);
    // Tier-1 firewall: first line of defense, HTTP to and from the public
    // address only.
    node(
        &mut t,
        "F_1",
        NodeKind::Middlebox(MiddleboxSpec {
            class: FunctionClass::Firewall,
            rules: vec![
                rule(pat(None, Some("L_1"), None, Some(80)), RuleAction::Allow),
                rule(pat(Some("L_1"), None, Some(80), None), RuleAction::Allow),
                rule(HeaderPattern::any(), RuleAction::Deny),
            ],
        }),
        &[],
    );
    // Tier-1 load balancer: owns the public address, maps it to u_1 and
    // rewrites reply sources back to it.
    node(
        &mut t,
        "LB_1",
        NodeKind::Middlebox(MiddleboxSpec {
            class: FunctionClass::LoadBalancer,
            rules: vec![
                rule(
                    pat(None, Some("L_1"), None, Some(80)),
                    RuleAction::Rewrite {
                        field: RewriteField::Dst,
                        to: Address::from("u_1"),
                    },
                ),
                rule(
                    pat(Some("u_1"), Some("u_e"), Some(80), None),
                    RuleAction::Rewrite {
                        field: RewriteField::Src,
                        to: Address::from("L_1"),
                    },
                ),
            ],
        }),
        &["L_1"],
    );
    node(&mut t, "S_3", NodeKind::Switch, &[]);
    // Tier-1 IPS sits in line in front of u_1.
    node(
        &mut t,
        "IPS_1",
        NodeKind::Middlebox(MiddleboxSpec {
            class: FunctionClass::Ips,
            rules: vec![
                rule(pat(Some("u_e"), Some("u_1"), None, Some(80)), RuleAction::Allow),
                rule(pat(Some("u_1"), None, None, None), RuleAction::Allow),
                rule(HeaderPattern::any(), RuleAction::Deny),
            ],
        }),
        &[],
    );
    node(&mut t, "u_1", NodeKind::Host, &["u_1"]);
    node(&mut t, "v_1", NodeKind::Host, &["v_1"]);
    node(&mut t, "S_2", NodeKind::Switch, &[]);
    // Tier-2 firewall: same function class as F_1, different configuration
    // (it trusts tier-1 server traffic of any TCP port).
    node(
        &mut t,
        "F_2",
        NodeKind::Middlebox(MiddleboxSpec {
            class: FunctionClass::Firewall,
            rules: vec![
                rule(pat(Some("u_1"), None, None, None), RuleAction::Allow),
                rule(HeaderPattern::any(), RuleAction::Deny),
            ],
        }),
        &[],
    );
    node(
        &mut t,
        "LB_2",
        NodeKind::Middlebox(MiddleboxSpec {
            class: FunctionClass::LoadBalancer,
            rules: vec![rule(HeaderPattern::any(), RuleAction::Allow)],
        }),
        &[],
    );
    node(&mut t, "S_4", NodeKind::Switch, &[]);
    node(
        &mut t,
        "IPS_2",
        NodeKind::Middlebox(MiddleboxSpec {
            class: FunctionClass::Ips,
            rules: vec![
                rule(pat(Some("u_1"), Some("u_2"), None, None), RuleAction::Allow),
                rule(HeaderPattern::any(), RuleAction::Deny),
            ],
        }),
        &[],
    );
    node(&mut t, "u_2", NodeKind::Host, &["u_2"]);

    for (a, b) in [
        ("u_e", "CE"),
        ("INET", "CE"),
        ("CE", "S_1"),
        ("S_1", "F_1"),
        ("F_1", "LB_1"),
        ("LB_1", "S_3"),
        ("S_3", "IPS_1"),
        ("IPS_1", "u_1"),
        ("S_3", "v_1"),
        ("S_3", "S_2"),
        ("S_2", "F_2"),
        ("F_2", "LB_2"),
        ("LB_2", "S_4"),
        ("S_4", "IPS_2"),
        ("IPS_2", "u_2"),
    ] {
        t.add_link(NodeRef::from(a), NodeRef::from(b));
    }

    host_gw(&mut t, "u_e", "CE");
    host_gw(&mut t, "u_1", "IPS_1");
    host_gw(&mut t, "v_1", "S_3");
    host_gw(&mut t, "u_2", "IPS_2");

    t.forwarding.insert(
        NodeRef::from("CE"),
        ForwardingState::Router {
            routes: [
                ("L_1", "S_1"),
                ("u_1", "S_1"),
                ("v_1", "S_1"),
                ("u_2", "S_1"),
                ("u_e", "u_e"),
            ]
            .iter()
            .map(|(p, n)| RouteEntry {
                prefix: (*p).to_string(),
                next: NodeRef::from(*n),
            })
            .collect(),
            acl: Vec::new(),
        },
    );

    switch_fib(
        &mut t,
        "S_1",
        &[
            ("L_1", "F_1"),
            ("u_1", "F_1"),
            ("v_1", "F_1"),
            ("u_2", "F_1"),
            ("u_e", "CE"),
        ],
    );
    switch_fib(
        &mut t,
        "S_3",
        &[
            ("u_1", "IPS_1"),
            ("v_1", "v_1"),
            ("u_2", "S_2"),
            ("u_e", "LB_1"),
            ("L_1", "LB_1"),
        ],
    );
    switch_fib(
        &mut t,
        "S_2",
        &[
            ("u_2", "F_2"),
            ("u_1", "S_3"),
            ("v_1", "S_3"),
            ("u_e", "S_3"),
            ("L_1", "S_3"),
        ],
    );
    switch_fib(
        &mut t,
        "S_4",
        &[
            ("u_2", "IPS_2"),
            ("u_1", "LB_2"),
            ("v_1", "LB_2"),
            ("u_e", "LB_2"),
            ("L_1", "LB_2"),
        ],
    );
    switch_fib(&mut t, "INET", &[]);

    middlebox_fib(
        &mut t,
        "F_1",
        &[
            ("L_1", "LB_1"),
            ("u_1", "LB_1"),
            ("v_1", "LB_1"),
            ("u_2", "LB_1"),
            ("u_e", "S_1"),
        ],
    );
    middlebox_fib(
        &mut t,
        "LB_1",
        &[
            ("u_1", "S_3"),
            ("v_1", "S_3"),
            ("u_2", "S_3"),
            ("u_e", "F_1"),
        ],
    );
    middlebox_fib(
        &mut t,
        "IPS_1",
        &[
            ("u_1", "u_1"),
            ("u_e", "S_3"),
            ("v_1", "S_3"),
            ("u_2", "S_3"),
            ("L_1", "S_3"),
        ],
    );
    middlebox_fib(
        &mut t,
        "F_2",
        &[
            ("u_2", "LB_2"),
            ("u_1", "S_2"),
            ("v_1", "S_2"),
            ("u_e", "S_2"),
            ("L_1", "S_2"),
        ],
    );
    middlebox_fib(
        &mut t,
        "LB_2",
        &[
            ("u_2", "S_4"),
            ("u_1", "F_2"),
            ("v_1", "F_2"),
            ("u_e", "F_2"),
            ("L_1", "F_2"),
        ],
    );
    middlebox_fib(
        &mut t,
        "IPS_2",
        &[
            ("u_2", "u_2"),
            ("u_1", "S_4"),
            ("v_1", "S_4"),
            ("u_e", "S_4"),
            ("L_1", "S_4"),
        ],
    );

    let ps = parse_policy_set(FIXTURE_POLICIES).expect("fixture policy text parses");
    (t, ps)
}

/// The six fixture policies in DSL form.
pub const FIXTURE_POLICIES: &str = "\
# 1. Internet client u_e to the tier-1 application (public address L_1 at LB_1)
policy Policy_1: [u_e, L_1, *, 80, TCP] scope {CE, F_1, LB_1, S_1, u_e} \
waypoints [F_1 -> LB_1] occur {F_1 == 1, LB_1 == 1}
# ... which LB_1 rewrites toward the tier-1 server u_1
policy Policy_2: [u_e, u_1, *, 80, TCP] from LB_1 scope {IPS_1, LB_1, S_3, u_1} \
waypoints [IPS_1] occur {IPS_1 > 0}

# 2. Tier-1 server reply back to the Internet client: first leg ends at the
#    load balancer, which rewrites the source to L_1
policy Policy_3: [u_1, u_e, 80, *, TCP] from u_1 to L_1 scope {IPS_1, LB_1, S_3, u_1} \
waypoints [LB_1, IPS_1] occur {LB_1 == 1, IPS_1 > 0}
policy Policy_4: [L_1, u_e, 80, *, TCP] from LB_1 scope {CE, F_1, LB_1, S_1, u_e}

# 3. Tier-1 server to tier-2 server
policy Policy_5: [u_1, u_2, *, *, TCP] \
scope {F_2, IPS_1, IPS_2, LB_1, LB_2, S_1, S_2, S_3, S_4, u_1, u_2} \
waypoints [F_2 -> LB_2 -> IPS_2] occur {F_2 == 1, LB_2 == 1, IPS_2 > 0}

# 4. Cross-traffic between tier-1 servers in different subnets
policy Policy_6: [u_1, v_1, *, *, TCP] scope {IPS_1, S_3, u_1, v_1} \
waypoints [IPS_1] occur {IPS_1 > 0}
";
