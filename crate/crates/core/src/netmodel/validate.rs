//! Whole-topology validation. Produces a list of issues; an empty list
//! means every structural invariant holds and addresses are unique per
//! site. Disconnected components and address collisions are warnings, not
//! errors, since a network can operate (badly) with either.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::Serialize;

use super::{ForwardingState, NodeKind, NodeRef, SiteKind, Topology};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Issue {
    pub severity: Severity,
    pub message: String,
}

impl Issue {
    fn error(message: impl Into<String>) -> Self {
        Issue {
            severity: Severity::Error,
            message: message.into(),
        }
    }

    fn warning(message: impl Into<String>) -> Self {
        Issue {
            severity: Severity::Warning,
            message: message.into(),
        }
    }
}

/// Checks topology invariants. Errors: bad site census, dangling
/// references, forwarding next-hops that are not link-adjacent, tunnel
/// endpoints without a peered tunnel link. Warnings: per-site address
/// collisions and unreachable components.
pub fn validate_topology(t: &Topology) -> Vec<Issue> {
    let mut issues = Vec::new();

    let enterprise_count = t
        .sites
        .values()
        .filter(|s| s.kind == SiteKind::Enterprise)
        .count();
    if enterprise_count != 1 {
        issues.push(Issue::error(format!(
            "expected exactly one enterprise site, found {enterprise_count}"
        )));
    }

    for node in t.nodes.values() {
        if !t.sites.contains_key(&node.site) {
            issues.push(Issue::error(format!(
                "node `{}` references unknown site `{}`",
                node.id, node.site
            )));
        }
        match node.kind {
            NodeKind::Host if node.addresses.is_empty() => {
                issues.push(Issue::error(format!("host `{}` has no address", node.id)));
            }
            NodeKind::Switch if !node.addresses.is_empty() => {
                issues.push(Issue::error(format!(
                    "switch `{}` must not carry addresses",
                    node.id
                )));
            }
            _ => {}
        }
    }

    // Address uniqueness per site.
    let mut seen: BTreeMap<(&super::SiteId, &super::Address), &NodeRef> = BTreeMap::new();
    for node in t.nodes.values() {
        for addr in &node.addresses {
            if let Some(prev) = seen.insert((&node.site, addr), &node.id) {
                issues.push(Issue::warning(format!(
                    "address collision in site `{}`: `{}` on both `{}` and `{}`",
                    node.site, addr, prev, node.id
                )));
            }
        }
    }

    // Forwarding references resolve and point at adjacent nodes.
    for (id, state) in &t.forwarding {
        if !t.nodes.contains_key(id) {
            issues.push(Issue::error(format!(
                "forwarding state for unknown node `{id}`"
            )));
            continue;
        }
        let mut check_next = |what: &str, next: &NodeRef| {
            if !t.nodes.contains_key(next) {
                issues.push(Issue::error(format!(
                    "`{id}` {what} points at unknown node `{next}`"
                )));
            } else if !t.has_link(id, next) {
                issues.push(Issue::error(format!(
                    "`{id}` {what} points at `{next}` which is not link-adjacent"
                )));
            }
        };
        match state {
            ForwardingState::Switch { fib, .. } | ForwardingState::Middlebox { fib } => {
                for (addr, next) in fib {
                    check_next(&format!("fib entry for `{addr}`"), next);
                }
            }
            ForwardingState::Router { routes, .. } => {
                for route in routes {
                    check_next(&format!("route `{}`", route.prefix), &route.next);
                }
            }
            ForwardingState::Host { gateway } => {
                if let Some(gw) = gateway {
                    check_next("gateway", gw);
                }
            }
            ForwardingState::Tunnel { peer, .. } => {
                check_next("tunnel peer", peer);
                match t.nodes.get(peer) {
                    Some(p) if p.kind == NodeKind::TunnelEndpoint => {}
                    Some(p) => issues.push(Issue::error(format!(
                        "`{id}` tunnel peer `{}` is a {}, not a tunnel endpoint",
                        peer,
                        p.kind.label()
                    ))),
                    None => {}
                }
            }
        }
    }

    // Tunnel endpoints need explicit state.
    for node in t.nodes.values() {
        if node.kind == NodeKind::TunnelEndpoint
            && !matches!(
                t.forwarding.get(&node.id),
                Some(ForwardingState::Tunnel { .. })
            )
        {
            issues.push(Issue::error(format!(
                "tunnel endpoint `{}` has no tunnel forwarding state",
                node.id
            )));
        }
    }

    // Connectivity (warning only).
    if let Some(first) = t.nodes.keys().next() {
        let mut visited: BTreeSet<&NodeRef> = BTreeSet::new();
        let mut queue = VecDeque::from([first]);
        visited.insert(first);
        while let Some(n) = queue.pop_front() {
            for (a, b) in &t.links {
                let other = if a == n {
                    Some(b)
                } else if b == n {
                    Some(a)
                } else {
                    None
                };
                if let Some(o) = other {
                    if visited.insert(o) {
                        queue.push_back(o);
                    }
                }
            }
        }
        if visited.len() < t.nodes.len() {
            let stranded: Vec<String> = t
                .nodes
                .keys()
                .filter(|n| !visited.contains(n))
                .map(|n| n.0.clone())
                .collect();
            issues.push(Issue::warning(format!(
                "unreachable component: {}",
                stranded.join(", ")
            )));
        }
    }

    issues
}
