//! Deterministic packet-walk simulation.
//!
//! [`simulate`] expands a packet breadth-first through a topology's
//! forwarding state using only conventional device behaviors: switches
//! forward out their FIB and flood on a miss, routers apply ACLs then
//! longest-prefix routes, middleboxes apply their rule lists (possibly
//! rewriting the header, which "rebirths" the packet), tunnel endpoints
//! carry frames to their peer. Flooding forks copies; the traversal records
//! the walk σ of the copy that reaches the destination, the union
//! reach-set over all copies, and every rewrite along the delivered walk.
//!
//! Loops terminate two ways: a per-copy hop limit, and suppression of a
//! revisited (node, ingress, header) state within one copy's lineage. The
//! ingress is part of the key so a packet may legitimately hairpin through
//! a node when it arrives from a different side or with a rewritten
//! header.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::Serialize;

use crate::netmodel::{
    Address, ForwardingState, NodeKind, NodeRef, RuleAction, RewriteField, Topology,
};
use crate::policy::{match_packet, MatchOutcome, PacketHeader, PolicyId, PolicySet};

/// Default per-copy hop budget.
pub const DEFAULT_HOP_LIMIT: u32 = 64;

/// Source port used when a policy class leaves sport wild, and for
/// default-deny probes: the first canonical ephemeral port.
pub const PROBE_EPHEMERAL_PORT: u16 = 49152;

/// Destination port used when a policy class leaves dport wild: the lowest
/// non-reserved port.
pub const PROBE_LOW_PORT: u16 = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DropReason {
    /// Router ACL denied the packet.
    Acl,
    /// Middlebox rule denied the packet.
    MiddleboxDeny,
    /// Router had no matching route.
    NoRoute,
    /// Switch FIB miss with flooding disabled.
    FibMiss,
    /// Host received a packet addressed to someone else.
    NotForHost,
    /// Host has no gateway to send through.
    NoGateway,
    /// No usable out-interface (dead end).
    DeadEnd,
}

impl DropReason {
    pub fn label(self) -> &'static str {
        match self {
            DropReason::Acl => "acl",
            DropReason::MiddleboxDeny => "middlebox_deny",
            DropReason::NoRoute => "no_route",
            DropReason::FibMiss => "fib_miss",
            DropReason::NotForHost => "not_for_host",
            DropReason::NoGateway => "no_gateway",
            DropReason::DeadEnd => "dead_end",
        }
    }
}

/// One forwarding decision.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ForwardAction {
    Deliver,
    Forward(NodeRef),
    Flood(Vec<NodeRef>),
    Drop(DropReason),
    Rewrite { new: PacketHeader, next: NodeRef },
}

/// A forwarding decision plus any mirror copies a middlebox rule spawned.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ForwardStep {
    pub copies: Vec<NodeRef>,
    pub action: ForwardAction,
}

impl ForwardStep {
    fn plain(action: ForwardAction) -> Self {
        ForwardStep {
            copies: Vec::new(),
            action,
        }
    }
}

/// Rewrite event on the delivered walk. `index` is the position of `at`
/// within σ.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RewriteEvent {
    pub at: NodeRef,
    pub index: usize,
    pub old: PacketHeader,
    pub new: PacketHeader,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Delivered(NodeRef),
    Dropped { at: NodeRef, reason: DropReason },
    HopLimitExceeded,
}

impl Outcome {
    pub fn is_delivered(&self) -> bool {
        matches!(self, Outcome::Delivered(_))
    }
}

/// Result of simulating one packet.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Traversal {
    pub injected_at: NodeRef,
    pub initial_header: PacketHeader,
    /// Walk of the delivered copy; empty when nothing was delivered.
    pub sigma: Vec<NodeRef>,
    /// Every node any copy touched.
    pub reach_set: BTreeSet<NodeRef>,
    /// Reach split by rewrite generation (0 = before any rewrite).
    pub reach_by_epoch: BTreeMap<u32, BTreeSet<NodeRef>>,
    /// Rewrites along the delivered walk, in order.
    pub rewrites: Vec<RewriteEvent>,
    pub outcome: Outcome,
}

/// One policy-governed slice of a delivered walk.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segment {
    pub epoch: u32,
    pub header: PacketHeader,
    /// Where this packet came into being: the injection point for the
    /// first segment, the rewriting node afterwards.
    pub origin: NodeRef,
    pub sigma: Vec<NodeRef>,
}

impl Traversal {
    /// Splits the delivered walk at rewrite boundaries. The rewriting node
    /// ends one segment and starts the next. Empty when nothing was
    /// delivered.
    pub fn segments(&self) -> Vec<Segment> {
        if self.sigma.is_empty() {
            return Vec::new();
        }
        let mut out = Vec::new();
        let mut start = 0usize;
        let mut header = self.initial_header.clone();
        let mut origin = self.injected_at.clone();
        for (epoch, rw) in self.rewrites.iter().enumerate() {
            out.push(Segment {
                epoch: epoch as u32,
                header: header.clone(),
                origin: origin.clone(),
                sigma: self.sigma[start..=rw.index].to_vec(),
            });
            start = rw.index;
            header = rw.new.clone();
            origin = rw.at.clone();
        }
        out.push(Segment {
            epoch: self.rewrites.len() as u32,
            header,
            origin,
            sigma: self.sigma[start..].to_vec(),
        });
        out
    }
}

fn pattern_matches(p: &crate::netmodel::HeaderPattern, pkt: &PacketHeader) -> bool {
    p.src.as_ref().is_none_or(|v| *v == pkt.src)
        && p.dst.as_ref().is_none_or(|v| *v == pkt.dst)
        && p.sport.is_none_or(|v| v == pkt.sport)
        && p.dport.is_none_or(|v| v == pkt.dport)
        && p.proto.as_ref().is_none_or(|v| *v == pkt.proto)
}

fn neighbors_except(t: &Topology, at: &NodeRef, except: Option<&NodeRef>) -> Vec<NodeRef> {
    t.neighbors(at)
        .into_iter()
        .filter(|n| Some(n) != except)
        .collect()
}

/// Single forwarding decision at `at` for a packet that arrived over
/// `ingress` (`None` for locally injected packets). Pure: depends only on
/// the node's kind, its forwarding state, the ingress, and the header.
pub fn forward_step(
    t: &Topology,
    at: &NodeRef,
    ingress: Option<&NodeRef>,
    pkt: &PacketHeader,
) -> ForwardStep {
    let Some(node) = t.node(at) else {
        return ForwardStep::plain(ForwardAction::Drop(DropReason::DeadEnd));
    };
    let state = t.forwarding_of(at);

    match (&node.kind, state) {
        (NodeKind::Host, ForwardingState::Host { gateway }) => {
            if node.addresses.contains(&pkt.dst) {
                return ForwardStep::plain(ForwardAction::Deliver);
            }
            if ingress.is_some() {
                // A host discards traffic that is not addressed to it.
                return ForwardStep::plain(ForwardAction::Drop(DropReason::NotForHost));
            }
            let gw = gateway.or_else(|| {
                let nbs = t.neighbors(at);
                if nbs.len() == 1 {
                    Some(nbs[0].clone())
                } else {
                    None
                }
            });
            match gw {
                Some(g) => ForwardStep::plain(ForwardAction::Forward(g)),
                None => ForwardStep::plain(ForwardAction::Drop(DropReason::NoGateway)),
            }
        }
        (NodeKind::Switch, ForwardingState::Switch { fib, flood_on_miss }) => {
            if let Some(next) = fib.get(&pkt.dst) {
                return ForwardStep::plain(ForwardAction::Forward(next.clone()));
            }
            if flood_on_miss {
                let out = neighbors_except(t, at, ingress);
                if out.is_empty() {
                    ForwardStep::plain(ForwardAction::Drop(DropReason::DeadEnd))
                } else {
                    ForwardStep::plain(ForwardAction::Flood(out))
                }
            } else {
                ForwardStep::plain(ForwardAction::Drop(DropReason::FibMiss))
            }
        }
        (NodeKind::Router, ForwardingState::Router { routes, acl }) => {
            for entry in &acl {
                if pattern_matches(&entry.pattern, pkt) {
                    if entry.permit {
                        break;
                    }
                    return ForwardStep::plain(ForwardAction::Drop(DropReason::Acl));
                }
            }
            if node.addresses.contains(&pkt.dst) {
                return ForwardStep::plain(ForwardAction::Deliver);
            }
            // Longest prefix over the opaque address string; first entry
            // wins among equal lengths.
            let mut best: Option<&crate::netmodel::RouteEntry> = None;
            for r in &routes {
                if pkt.dst.as_str().starts_with(&r.prefix)
                    && best.is_none_or(|b| r.prefix.len() > b.prefix.len())
                {
                    best = Some(r);
                }
            }
            match best {
                Some(r) => ForwardStep::plain(ForwardAction::Forward(r.next.clone())),
                None => ForwardStep::plain(ForwardAction::Drop(DropReason::NoRoute)),
            }
        }
        (NodeKind::Middlebox(spec), ForwardingState::Middlebox { fib }) => {
            let mut copies = Vec::new();
            let mut header = pkt.clone();
            let mut rewritten = false;
            for rule in &spec.rules {
                if !pattern_matches(&rule.pattern, &header) {
                    continue;
                }
                match &rule.action {
                    RuleAction::CopyTo(target) => {
                        // Mirror port: spawn a copy, keep evaluating.
                        if t.has_link(at, target) {
                            copies.push(target.clone());
                        }
                    }
                    RuleAction::Deny => {
                        return ForwardStep {
                            copies,
                            action: ForwardAction::Drop(DropReason::MiddleboxDeny),
                        };
                    }
                    RuleAction::Allow => break,
                    RuleAction::Rewrite { field, to } => {
                        match field {
                            RewriteField::Src => header.src = to.clone(),
                            RewriteField::Dst => header.dst = to.clone(),
                        }
                        rewritten = true;
                        break;
                    }
                }
            }
            // No matching terminal rule: pass through.
            if node.addresses.contains(&header.dst) {
                // Addressed to the box itself (rewrite-to-self included).
                return ForwardStep {
                    copies,
                    action: ForwardAction::Deliver,
                };
            }
            let next = fib.get(&header.dst).cloned().or_else(|| {
                let out = neighbors_except(t, at, ingress);
                if out.len() == 1 {
                    Some(out[0].clone())
                } else {
                    None
                }
            });
            let action = match next {
                Some(next) if rewritten => ForwardAction::Rewrite { new: header, next },
                Some(next) => ForwardAction::Forward(next),
                None => ForwardAction::Drop(DropReason::NoRoute),
            };
            ForwardStep { copies, action }
        }
        (NodeKind::TunnelEndpoint, ForwardingState::Tunnel { peer, .. }) => {
            if ingress == Some(&peer) {
                // Came over the tunnel: exit to the local attachment.
                let out = neighbors_except(t, at, Some(&peer));
                match out.into_iter().next() {
                    Some(n) => ForwardStep::plain(ForwardAction::Forward(n)),
                    None => ForwardStep::plain(ForwardAction::Drop(DropReason::DeadEnd)),
                }
            } else {
                ForwardStep::plain(ForwardAction::Forward(peer))
            }
        }
        // Forwarding state inconsistent with the node kind (the validator
        // flags this): drop rather than guess.
        _ => ForwardStep::plain(ForwardAction::Drop(DropReason::DeadEnd)),
    }
}

struct Copy {
    id: u32,
    at: NodeRef,
    ingress: Option<NodeRef>,
    header: PacketHeader,
    epoch: u32,
    hops: u32,
    path: Vec<NodeRef>,
    rewrites: Vec<RewriteEvent>,
    visited: BTreeSet<(NodeRef, Option<NodeRef>, PacketHeader)>,
}

/// Simulates a packet injected at `inject_at`. Pure and deterministic:
/// identical inputs produce identical traversals.
pub fn simulate(
    t: &Topology,
    inject_at: &NodeRef,
    pkt: &PacketHeader,
    hop_limit: u32,
) -> Result<Traversal, UnknownInjectionPoint> {
    simulate_inner(t, inject_at, pkt, hop_limit, None).map(|(tr, _)| tr)
}

/// Like [`simulate`], also returning one trace line per step:
/// `<copy-id> <node> <action> <header>` with a stable field order.
pub fn simulate_with_trace(
    t: &Topology,
    inject_at: &NodeRef,
    pkt: &PacketHeader,
    hop_limit: u32,
) -> Result<(Traversal, Vec<String>), UnknownInjectionPoint> {
    let mut trace = Vec::new();
    let (tr, _) = simulate_inner(t, inject_at, pkt, hop_limit, Some(&mut trace))?;
    Ok((tr, trace))
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("injection point `{0}` does not exist")]
pub struct UnknownInjectionPoint(pub NodeRef);

fn simulate_inner(
    t: &Topology,
    inject_at: &NodeRef,
    pkt: &PacketHeader,
    hop_limit: u32,
    mut trace: Option<&mut Vec<String>>,
) -> Result<(Traversal, u32), UnknownInjectionPoint> {
    if !t.nodes.contains_key(inject_at) {
        return Err(UnknownInjectionPoint(inject_at.clone()));
    }
    let hop_limit = hop_limit.max(1);

    let mut reach_set = BTreeSet::new();
    let mut reach_by_epoch: BTreeMap<u32, BTreeSet<NodeRef>> = BTreeMap::new();
    let mut delivered: Option<(NodeRef, Vec<NodeRef>, Vec<RewriteEvent>)> = None;
    let mut first_drop: Option<(NodeRef, DropReason)> = None;
    let mut exhausted = false;
    let mut next_id: u32 = 1;

    let mut queue = VecDeque::new();
    queue.push_back(Copy {
        id: 0,
        at: inject_at.clone(),
        ingress: None,
        header: pkt.clone(),
        epoch: 0,
        hops: 0,
        path: Vec::new(),
        rewrites: Vec::new(),
        visited: BTreeSet::new(),
    });

    while let Some(mut copy) = queue.pop_front() {
        let state = (copy.at.clone(), copy.ingress.clone(), copy.header.clone());
        if copy.visited.contains(&state) {
            exhausted = true;
            if let Some(tr) = trace.as_deref_mut() {
                tr.push(format!("{} {} suppressed {}", copy.id, copy.at, copy.header));
            }
            continue;
        }
        copy.visited.insert(state);
        copy.hops += 1;
        copy.path.push(copy.at.clone());
        reach_set.insert(copy.at.clone());
        reach_by_epoch
            .entry(copy.epoch)
            .or_default()
            .insert(copy.at.clone());
        if copy.hops > hop_limit {
            exhausted = true;
            if let Some(tr) = trace.as_deref_mut() {
                tr.push(format!("{} {} hop_limit {}", copy.id, copy.at, copy.header));
            }
            continue;
        }

        let step = forward_step(t, &copy.at, copy.ingress.as_ref(), &copy.header);

        for target in &step.copies {
            if let Some(tr) = trace.as_deref_mut() {
                tr.push(format!("{} {} copy:{} {}", copy.id, copy.at, target, copy.header));
            }
            queue.push_back(Copy {
                id: next_id,
                at: target.clone(),
                ingress: Some(copy.at.clone()),
                header: copy.header.clone(),
                epoch: copy.epoch,
                hops: copy.hops,
                path: copy.path.clone(),
                rewrites: copy.rewrites.clone(),
                visited: copy.visited.clone(),
            });
            next_id += 1;
        }

        match step.action {
            ForwardAction::Deliver => {
                if let Some(tr) = trace.as_deref_mut() {
                    tr.push(format!("{} {} deliver {}", copy.id, copy.at, copy.header));
                }
                if delivered.is_none() {
                    delivered = Some((copy.at.clone(), copy.path.clone(), copy.rewrites.clone()));
                }
            }
            ForwardAction::Forward(next) => {
                if let Some(tr) = trace.as_deref_mut() {
                    tr.push(format!(
                        "{} {} forward:{} {}",
                        copy.id, copy.at, next, copy.header
                    ));
                }
                copy.ingress = Some(copy.at.clone());
                copy.at = next;
                queue.push_back(copy);
            }
            ForwardAction::Flood(nexts) => {
                if let Some(tr) = trace.as_deref_mut() {
                    let dests: Vec<&str> = nexts.iter().map(|n| n.as_str()).collect();
                    tr.push(format!(
                        "{} {} flood:{} {}",
                        copy.id,
                        copy.at,
                        dests.join("|"),
                        copy.header
                    ));
                }
                for next in nexts {
                    queue.push_back(Copy {
                        id: next_id,
                        at: next,
                        ingress: Some(copy.at.clone()),
                        header: copy.header.clone(),
                        epoch: copy.epoch,
                        hops: copy.hops,
                        path: copy.path.clone(),
                        rewrites: copy.rewrites.clone(),
                        visited: copy.visited.clone(),
                    });
                    next_id += 1;
                }
            }
            ForwardAction::Drop(reason) => {
                if let Some(tr) = trace.as_deref_mut() {
                    tr.push(format!(
                        "{} {} drop:{} {}",
                        copy.id,
                        copy.at,
                        reason.label(),
                        copy.header
                    ));
                }
                if first_drop.is_none() {
                    first_drop = Some((copy.at.clone(), reason));
                }
            }
            ForwardAction::Rewrite { new, next } => {
                if let Some(tr) = trace.as_deref_mut() {
                    tr.push(format!(
                        "{} {} rewrite:{} {}",
                        copy.id, copy.at, next, new
                    ));
                }
                copy.rewrites.push(RewriteEvent {
                    at: copy.at.clone(),
                    index: copy.path.len() - 1,
                    old: copy.header.clone(),
                    new: new.clone(),
                });
                copy.epoch += 1;
                reach_by_epoch
                    .entry(copy.epoch)
                    .or_default()
                    .insert(copy.at.clone());
                copy.header = new;
                copy.ingress = Some(copy.at.clone());
                copy.at = next;
                queue.push_back(copy);
            }
        }
    }

    let (sigma, rewrites, outcome) = match delivered {
        Some((at, path, rewrites)) => (path, rewrites, Outcome::Delivered(at)),
        None => match first_drop {
            Some((at, reason)) => (Vec::new(), Vec::new(), Outcome::Dropped { at, reason }),
            None => {
                debug_assert!(exhausted, "copies can only end by delivery, drop, or loop");
                (Vec::new(), Vec::new(), Outcome::HopLimitExceeded)
            }
        },
    };

    Ok((
        Traversal {
            injected_at: inject_at.clone(),
            initial_header: pkt.clone(),
            sigma,
            reach_set,
            reach_by_epoch,
            rewrites,
            outcome,
        },
        next_id,
    ))
}

/// A packet to simulate: representative of one policy's class, or a
/// default-deny probe (`policy` is `None`).
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Probe {
    pub policy: Option<PolicyId>,
    pub inject_at: NodeRef,
    pub header: PacketHeader,
}

/// Probe construction output. `problems` lists classes that could not be
/// instantiated (unresolvable source, ambiguous deny probe).
#[derive(Debug, Clone, Default)]
pub struct ProbeSet {
    pub probes: Vec<Probe>,
    pub problems: Vec<String>,
}

/// Builds the representative probe for one policy: wildcard sport becomes
/// the canonical ephemeral port 49152, wildcard dport the lowest port
/// 1024, wildcard proto TCP. The probe is injected at the class origin
/// when one is pinned, otherwise at the node owning the source address.
pub fn policy_probe(p: &crate::policy::Policy, t: &Topology) -> Result<Probe, String> {
    let src = match (&p.class.pattern.src, &p.class.origin) {
        (Some(src), _) => Some(src.clone()),
        (None, Some(origin)) => t
            .nodes
            .get(origin)
            .and_then(|node| node.addresses.iter().next().cloned()),
        (None, None) => None,
    };
    let Some(src) = src else {
        return Err(format!(
            "{}: cannot instantiate a probe (no concrete source)",
            p.id
        ));
    };
    let inject_at = match &p.class.origin {
        Some(origin) => Some(origin.clone()),
        None => t.owner_of(&src).map(|n| n.id.clone()),
    };
    let Some(inject_at) = inject_at else {
        return Err(format!(
            "{}: probe source `{src}` does not resolve to a unique node",
            p.id
        ));
    };
    // The header destination is the class's dst position; the policy's
    // delivery target can differ (hand-off policies).
    let dst = p
        .class
        .pattern
        .dst
        .clone()
        .unwrap_or_else(|| p.destination.clone());
    Ok(Probe {
        policy: Some(p.id.clone()),
        inject_at,
        header: PacketHeader {
            src,
            dst,
            sport: p.class.pattern.sport.unwrap_or(PROBE_EPHEMERAL_PORT),
            dport: p.class.pattern.dport.unwrap_or(PROBE_LOW_PORT),
            proto: p.class.pattern.proto.clone().unwrap_or_else(|| "TCP".to_string()),
        },
    })
}

/// Builds the probe list: one representative probe per policy (see
/// [`policy_probe`]), then one TCP:80 probe per ordered host pair that no
/// policy matches — those must be filtered, and the checker flags any that
/// deliver.
pub fn probe_headers(ps: &PolicySet, t: &Topology) -> ProbeSet {
    let mut out = ProbeSet::default();

    for p in &ps.policies {
        match policy_probe(p, t) {
            Ok(probe) => out.probes.push(probe),
            Err(problem) => out.problems.push(problem),
        }
    }

    let hosts: Vec<(&NodeRef, &Address)> = t
        .hosts()
        .filter_map(|h| h.addresses.iter().next().map(|a| (&h.id, a)))
        .collect();
    for (src_node, src_addr) in &hosts {
        for (dst_node, dst_addr) in &hosts {
            if src_node == dst_node {
                continue;
            }
            let header = PacketHeader {
                src: (*src_addr).clone(),
                dst: (*dst_addr).clone(),
                sport: PROBE_EPHEMERAL_PORT,
                dport: 80,
                proto: "TCP".to_string(),
            };
            match match_packet(ps, &header, src_node) {
                Ok(MatchOutcome::DefaultDeny) => out.probes.push(Probe {
                    policy: None,
                    inject_at: (*src_node).clone(),
                    header,
                }),
                Ok(MatchOutcome::Policy(_)) => {}
                Err(e) => out.problems.push(e.to_string()),
            }
        }
    }

    out
}
