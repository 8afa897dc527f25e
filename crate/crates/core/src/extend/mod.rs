//! Network extension: the proxy and mirror primitives, plan application,
//! and the naive relocation baseline.
//!
//! An [`ExtensionPlan`] is an ordered action list over a topology:
//! relocate hosts into a remote site, mirror middleboxes there, stand up
//! proxies and tunnels, and patch forwarding. Applying a plan is pure —
//! the original topology is never touched — and a serialized plan replays
//! to the identical extended topology.
//!
//! Tunnels are pairs of tunnel-endpoint nodes. An encrypted tunnel carries
//! frames between sites; in-site (unencrypted) tunnel pairs serve as patch
//! cables when a mirrored middlebox chain has to be spliced into the data
//! path, since plans manipulate links only through their primitives.

pub mod planner;

pub use planner::{map_policy_set, plan_extension, verify_homomorphism, HomVerdict, PlanError};

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::netmodel::{
    Address, Flexibility, ForwardingState, Node, NodeKind, NodeRef, SiteId, SiteKind, Topology,
};
use crate::policy::PolicyId;

/// One forwarding patch at a node.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoutePatch {
    /// Point traffic for `addr` at a neighbor (switch FIB entry, exact
    /// router route, or middlebox FIB entry, by node kind).
    Set { addr: Address, next: NodeRef },
    /// Remove the entry for `addr`.
    Remove { addr: Address },
    /// Set a host's gateway.
    SetGateway { next: NodeRef },
}

/// One extension step.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtensionAction {
    /// Detach a host and re-attach it to the target site's fabric switch.
    Relocate { host: NodeRef, to_site: SiteId },
    /// Clone a middlebox (same function class and configuration) onto the
    /// target site's fabric. The clone is `new_ref`.
    Mirror {
        middlebox: NodeRef,
        to_site: SiteId,
        new_ref: NodeRef,
    },
    /// Stand in for a relocated host at its original attachment: a tunnel
    /// endpoint pair `enterprise_end`/`remote_end` hairpins traffic through
    /// the original enterprise path, then tunnels to the host.
    Proxy {
        host: NodeRef,
        original_attachment: NodeRef,
        enterprise_end: NodeRef,
        remote_end: NodeRef,
    },
    /// Create a tunnel-endpoint pair: `a` attached at `attach_a`, `b` at
    /// `attach_b`, linked to each other.
    Tunnel {
        a: NodeRef,
        attach_a: NodeRef,
        b: NodeRef,
        attach_b: NodeRef,
        encrypted: bool,
    },
    /// Apply forwarding patches at a node.
    RouteFix {
        node: NodeRef,
        patches: Vec<RoutePatch>,
    },
}

/// Plan cost components.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cost {
    pub mirrored_boxes: usize,
    /// Site-crossing tunnel hops summed over every policy probe's walk.
    pub wan_crossings_per_policy_probe: usize,
    pub proxies: usize,
}

impl Cost {
    pub fn total(&self, cm: &CostModel) -> f64 {
        cm.weight_mirror * self.mirrored_boxes as f64
            + cm.weight_wan_crossing * self.wan_crossings_per_policy_probe as f64
            + cm.weight_proxy * self.proxies as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostModel {
    pub weight_mirror: f64,
    pub weight_wan_crossing: f64,
    pub weight_proxy: f64,
}

impl Default for CostModel {
    fn default() -> Self {
        CostModel {
            weight_mirror: 1.0,
            weight_wan_crossing: 1.0,
            weight_proxy: 1.0,
        }
    }
}

impl CostModel {
    pub fn validate(&self) -> Result<(), String> {
        let ws = [self.weight_mirror, self.weight_wan_crossing, self.weight_proxy];
        if ws.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err("cost weights must be finite and non-negative".to_string());
        }
        if ws.iter().all(|w| *w == 0.0) {
            return Err("at least one cost weight must be positive".to_string());
        }
        Ok(())
    }
}

/// An ordered extension plan plus its bookkeeping: `node_map` records
/// which extended node(s) stand for each original (relocated hosts map to
/// themselves, mirrored boxes to their clones), and `scope_additions`
/// lists the tunnel endpoints each policy's scope gains.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ExtensionPlan {
    pub actions: Vec<ExtensionAction>,
    pub node_map: BTreeMap<NodeRef, BTreeSet<NodeRef>>,
    pub scope_additions: BTreeMap<PolicyId, BTreeSet<NodeRef>>,
    pub cost: Cost,
}

impl ExtensionPlan {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plan serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, String> {
        serde_json::from_str(s).map_err(|e| e.to_string())
    }

    pub fn mirrors(&self) -> impl Iterator<Item = &ExtensionAction> {
        self.actions
            .iter()
            .filter(|a| matches!(a, ExtensionAction::Mirror { .. }))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ApplyError {
    #[error("`{0}` does not exist")]
    UnknownNode(NodeRef),
    #[error("site `{0}` does not exist")]
    UnknownSite(SiteId),
    #[error("`{node}` is a {kind}, expected {expected}")]
    WrongKind {
        node: NodeRef,
        kind: String,
        expected: String,
    },
    #[error("site `{0}` is not a remote data center")]
    NotRemote(SiteId),
    #[error("site `{0}` is restricted and rejects middlebox placement")]
    RestrictedSite(SiteId),
    #[error("node id `{0}` already taken")]
    NameTaken(NodeRef),
    #[error("`{node}` has no forwarding entry shape for patch")]
    BadPatch { node: NodeRef },
    #[error("host `{0}` is not in a remote site (relocate it first)")]
    NotRelocated(NodeRef),
    #[error("address conflict at `{at}`: a proxy for `{host}` already answers there")]
    ProxyConflict { at: NodeRef, host: NodeRef },
}

/// Name of a site's fabric switch.
pub fn fabric_switch_id(site: &SiteId) -> NodeRef {
    NodeRef::new(format!("RS_{}", site.0))
}

fn ensure_fabric(t: &mut Topology, site: &SiteId) -> Result<NodeRef, ApplyError> {
    match t.sites.get(site) {
        None => return Err(ApplyError::UnknownSite(site.clone())),
        Some(s) if s.kind != SiteKind::RemoteDc => {
            return Err(ApplyError::NotRemote(site.clone()))
        }
        Some(_) => {}
    }
    let id = fabric_switch_id(site);
    if !t.nodes.contains_key(&id) {
        t.nodes.insert(
            id.clone(),
            Node {
                id: id.clone(),
                kind: NodeKind::Switch,
                site: site.clone(),
                addresses: BTreeSet::new(),
            },
        );
        // Explicit entries only: a data-center fabric must not spray
        // unknown frames around.
        t.forwarding.insert(
            id.clone(),
            ForwardingState::Switch {
                fib: BTreeMap::new(),
                flood_on_miss: false,
            },
        );
    }
    Ok(id)
}

fn fresh_name(t: &Topology, base: &str) -> NodeRef {
    for k in 1.. {
        let candidate = NodeRef::new(format!("{base}{k}"));
        if !t.nodes.contains_key(&candidate) {
            return candidate;
        }
    }
    unreachable!("name space exhausted")
}

fn add_tunnel_endpoint(
    t: &mut Topology,
    id: &NodeRef,
    site: &SiteId,
    attach: &NodeRef,
    peer: &NodeRef,
    encrypted: bool,
) -> Result<(), ApplyError> {
    if t.nodes.contains_key(id) {
        return Err(ApplyError::NameTaken(id.clone()));
    }
    t.nodes.insert(
        id.clone(),
        Node {
            id: id.clone(),
            kind: NodeKind::TunnelEndpoint,
            site: site.clone(),
            addresses: BTreeSet::new(),
        },
    );
    t.add_link(id.clone(), attach.clone());
    t.forwarding.insert(
        id.clone(),
        ForwardingState::Tunnel {
            peer: peer.clone(),
            encrypted,
        },
    );
    Ok(())
}

/// Removes forwarding entries that point at `gone` from `node`'s state.
fn scrub_entries_to(t: &mut Topology, node: &NodeRef, gone: &NodeRef) {
    if let Some(state) = t.forwarding.get_mut(node) {
        match state {
            ForwardingState::Switch { fib, .. } | ForwardingState::Middlebox { fib } => {
                fib.retain(|_, next| next != gone);
            }
            ForwardingState::Router { routes, .. } => {
                routes.retain(|r| &r.next != gone);
            }
            ForwardingState::Host { gateway } => {
                if gateway.as_ref() == Some(gone) {
                    *gateway = None;
                }
            }
            ForwardingState::Tunnel { .. } => {}
        }
    }
}

fn apply_patch(t: &mut Topology, node: &NodeRef, patch: &RoutePatch) -> Result<(), ApplyError> {
    let state = t
        .forwarding
        .entry(node.clone())
        .or_insert_with(|| match t.nodes.get(node) {
            Some(n) => ForwardingState::default_for(&n.kind),
            None => ForwardingState::Host { gateway: None },
        });
    match (state, patch) {
        (ForwardingState::Switch { fib, .. }, RoutePatch::Set { addr, next })
        | (ForwardingState::Middlebox { fib }, RoutePatch::Set { addr, next }) => {
            fib.insert(addr.clone(), next.clone());
            Ok(())
        }
        (ForwardingState::Switch { fib, .. }, RoutePatch::Remove { addr })
        | (ForwardingState::Middlebox { fib }, RoutePatch::Remove { addr }) => {
            fib.remove(addr);
            Ok(())
        }
        (ForwardingState::Router { routes, .. }, RoutePatch::Set { addr, next }) => {
            routes.retain(|r| r.prefix != addr.0);
            routes.push(crate::netmodel::RouteEntry {
                prefix: addr.0.clone(),
                next: next.clone(),
            });
            Ok(())
        }
        (ForwardingState::Router { routes, .. }, RoutePatch::Remove { addr }) => {
            routes.retain(|r| r.prefix != addr.0);
            Ok(())
        }
        (ForwardingState::Host { gateway }, RoutePatch::SetGateway { next }) => {
            *gateway = Some(next.clone());
            Ok(())
        }
        _ => Err(ApplyError::BadPatch { node: node.clone() }),
    }
}

/// Applies one action to a topology in place.
pub fn apply_action(t: &mut Topology, action: &ExtensionAction) -> Result<(), ApplyError> {
    match action {
        ExtensionAction::Relocate { host, to_site } => {
            let node = t
                .nodes
                .get(host)
                .ok_or_else(|| ApplyError::UnknownNode(host.clone()))?;
            if !node.is_host() {
                return Err(ApplyError::WrongKind {
                    node: host.clone(),
                    kind: node.kind.label().to_string(),
                    expected: "host".to_string(),
                });
            }
            let fabric = ensure_fabric(t, to_site)?;
            let old_neighbors = t.neighbors(host);
            for nb in &old_neighbors {
                t.remove_link(host, nb);
                scrub_entries_to(t, nb, host);
            }
            t.add_link(host.clone(), fabric.clone());
            let addresses = t.nodes[host].addresses.clone();
            t.nodes.get_mut(host).expect("checked").site = to_site.clone();
            t.forwarding.insert(
                host.clone(),
                ForwardingState::Host {
                    gateway: Some(fabric.clone()),
                },
            );
            for addr in addresses {
                apply_patch(
                    t,
                    &fabric,
                    &RoutePatch::Set {
                        addr,
                        next: host.clone(),
                    },
                )?;
            }
            Ok(())
        }
        ExtensionAction::Mirror {
            middlebox,
            to_site,
            new_ref,
        } => {
            let node = t
                .nodes
                .get(middlebox)
                .ok_or_else(|| ApplyError::UnknownNode(middlebox.clone()))?;
            let spec = match &node.kind {
                NodeKind::Middlebox(spec) => spec.clone(),
                other => {
                    return Err(ApplyError::WrongKind {
                        node: middlebox.clone(),
                        kind: other.label().to_string(),
                        expected: "middlebox".to_string(),
                    })
                }
            };
            match t.sites.get(to_site) {
                None => return Err(ApplyError::UnknownSite(to_site.clone())),
                Some(s) if s.kind != SiteKind::RemoteDc => {
                    return Err(ApplyError::NotRemote(to_site.clone()))
                }
                Some(s) if s.flexibility == Flexibility::Restricted => {
                    return Err(ApplyError::RestrictedSite(to_site.clone()))
                }
                Some(_) => {}
            }
            if t.nodes.contains_key(new_ref) {
                return Err(ApplyError::NameTaken(new_ref.clone()));
            }
            let fabric = ensure_fabric(t, to_site)?;
            // Full configuration copy; addresses stay with the original.
            t.nodes.insert(
                new_ref.clone(),
                Node {
                    id: new_ref.clone(),
                    kind: NodeKind::Middlebox(spec),
                    site: to_site.clone(),
                    addresses: BTreeSet::new(),
                },
            );
            t.add_link(new_ref.clone(), fabric);
            t.forwarding.insert(
                new_ref.clone(),
                ForwardingState::Middlebox {
                    fib: BTreeMap::new(),
                },
            );
            Ok(())
        }
        ExtensionAction::Proxy {
            host,
            original_attachment,
            enterprise_end,
            remote_end,
        } => {
            let node = t
                .nodes
                .get(host)
                .ok_or_else(|| ApplyError::UnknownNode(host.clone()))?;
            if !node.is_host() {
                return Err(ApplyError::WrongKind {
                    node: host.clone(),
                    kind: node.kind.label().to_string(),
                    expected: "host".to_string(),
                });
            }
            let host_site = node.site.clone();
            let addresses = node.addresses.clone();
            match t.sites.get(&host_site) {
                Some(s) if s.kind == SiteKind::RemoteDc => {}
                _ => return Err(ApplyError::NotRelocated(host.clone())),
            }
            let attach_node = t
                .nodes
                .get(original_attachment)
                .ok_or_else(|| ApplyError::UnknownNode(original_attachment.clone()))?;
            let attach_site = attach_node.site.clone();
            if t.nodes.contains_key(enterprise_end) || t.nodes.contains_key(remote_end) {
                return Err(ApplyError::ProxyConflict {
                    at: original_attachment.clone(),
                    host: host.clone(),
                });
            }
            add_tunnel_endpoint(
                t,
                enterprise_end,
                &attach_site,
                original_attachment,
                remote_end,
                true,
            )?;
            add_tunnel_endpoint(t, remote_end, &host_site, host, enterprise_end, true)?;
            t.add_link(enterprise_end.clone(), remote_end.clone());
            // Enterprise side answers for the host's addresses; the host
            // sends everything back through the tunnel.
            let patches: Vec<RoutePatch> = addresses
                .iter()
                .map(|addr| RoutePatch::Set {
                    addr: addr.clone(),
                    next: enterprise_end.clone(),
                })
                .collect();
            for patch in &patches {
                apply_patch(t, original_attachment, patch)?;
            }
            apply_patch(
                t,
                host,
                &RoutePatch::SetGateway {
                    next: remote_end.clone(),
                },
            )?;
            Ok(())
        }
        ExtensionAction::Tunnel {
            a,
            attach_a,
            b,
            attach_b,
            encrypted,
        } => {
            let site_a = t
                .nodes
                .get(attach_a)
                .ok_or_else(|| ApplyError::UnknownNode(attach_a.clone()))?
                .site
                .clone();
            let site_b = t
                .nodes
                .get(attach_b)
                .ok_or_else(|| ApplyError::UnknownNode(attach_b.clone()))?
                .site
                .clone();
            add_tunnel_endpoint(t, a, &site_a, attach_a, b, *encrypted)?;
            add_tunnel_endpoint(t, b, &site_b, attach_b, a, *encrypted)?;
            t.add_link(a.clone(), b.clone());
            Ok(())
        }
        ExtensionAction::RouteFix { node, patches } => {
            if !t.nodes.contains_key(node) {
                return Err(ApplyError::UnknownNode(node.clone()));
            }
            for patch in patches {
                apply_patch(t, node, patch)?;
            }
            Ok(())
        }
    }
}

/// Applies a whole plan to a copy of the topology.
pub fn apply_plan(t: &Topology, plan: &ExtensionPlan) -> Result<Topology, ApplyError> {
    let mut out = t.clone();
    for action in &plan.actions {
        apply_action(&mut out, action)?;
    }
    Ok(out)
}

/// Nearest switch to a host along links (breadth-first, smallest id on
/// ties): where a flat layer-2 relocation splices its tunnel.
pub fn anchor_switch(t: &Topology, host: &NodeRef) -> Option<NodeRef> {
    let mut visited: BTreeSet<NodeRef> = [host.clone()].into_iter().collect();
    let mut queue: std::collections::VecDeque<NodeRef> = t.neighbors(host).into();
    while let Some(n) = queue.pop_front() {
        if !visited.insert(n.clone()) {
            continue;
        }
        match t.nodes.get(&n).map(|node| &node.kind) {
            Some(NodeKind::Switch) => return Some(n),
            Some(_) => queue.extend(t.neighbors(&n)),
            None => {}
        }
    }
    None
}

/// Everything strictly between the anchor switch and the host on the
/// unique anchor→host path: the in-line stack a flat relocation bypasses.
pub fn inline_stack(t: &Topology, host: &NodeRef, anchor: &NodeRef) -> Vec<NodeRef> {
    // Walk back from the host toward the anchor; the fixture-style chains
    // this handles are simple paths.
    let mut stack = Vec::new();
    let mut prev = host.clone();
    let mut at = match t.neighbors(host).first() {
        Some(n) => n.clone(),
        None => return stack,
    };
    while &at != anchor {
        stack.push(at.clone());
        let next = t
            .neighbors(&at)
            .into_iter()
            .find(|n| n != &prev && (n == anchor || t.nodes.get(n).is_some_and(|x| !x.is_host())));
        match next {
            Some(n) => {
                prev = at;
                at = n;
            }
            None => break,
        }
    }
    stack.reverse();
    stack
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum NaiveError {
    #[error("`{0}` is not a host")]
    NotAHost(NodeRef),
    #[error("`{0}` does not exist")]
    UnknownNode(NodeRef),
    #[error("host `{0}` has no anchor switch")]
    NoAnchor(NodeRef),
    #[error("apply failed: {0}")]
    Apply(#[from] ApplyError),
}

/// Builds the naive relocation plan: move the hosts behind the remote
/// fabric switch and bridge it to each host's original subnet switch with
/// one flat encrypted layer-2 tunnel per switch. No policy awareness: no
/// mirrors, no proxies, no declared scope additions.
pub fn naive_plan(
    t: &Topology,
    hosts: &BTreeSet<NodeRef>,
    site: &SiteId,
) -> Result<ExtensionPlan, NaiveError> {
    let mut plan = ExtensionPlan::default();
    if hosts.is_empty() {
        return Ok(plan);
    }
    let fabric = fabric_switch_id(site);

    // host -> (anchor switch, old neighbor chain)
    let mut anchors: BTreeMap<NodeRef, NodeRef> = BTreeMap::new();
    for host in hosts {
        let node = t.nodes.get(host).ok_or_else(|| NaiveError::UnknownNode(host.clone()))?;
        if !node.is_host() {
            return Err(NaiveError::NotAHost(host.clone()));
        }
        let anchor = anchor_switch(t, host).ok_or_else(|| NaiveError::NoAnchor(host.clone()))?;
        anchors.insert(host.clone(), anchor);
        plan.actions.push(ExtensionAction::Relocate {
            host: host.clone(),
            to_site: site.clone(),
        });
        plan.node_map
            .entry(host.clone())
            .or_default()
            .insert(host.clone());
    }

    let distinct_anchors: BTreeSet<NodeRef> = anchors.values().cloned().collect();
    let all_addresses = t.all_addresses();
    let mut first_tunnel_remote: Option<NodeRef> = None;
    for anchor in &distinct_anchors {
        let a = NodeRef::new(format!("te_{}", anchor.0));
        let b = NodeRef::new(format!("te_{}_r", anchor.0));
        plan.actions.push(ExtensionAction::Tunnel {
            a: a.clone(),
            attach_a: anchor.clone(),
            b: b.clone(),
            attach_b: fabric.clone(),
            encrypted: true,
        });
        if first_tunnel_remote.is_none() {
            first_tunnel_remote = Some(b.clone());
        }
        // Anchor-side: moved addresses now live across the tunnel.
        let patches: Vec<RoutePatch> = hosts
            .iter()
            .filter(|h| anchors.get(*h) == Some(anchor))
            .flat_map(|h| t.nodes[h].addresses.iter().cloned())
            .map(|addr| RoutePatch::Set {
                addr,
                next: a.clone(),
            })
            .collect();
        plan.actions.push(ExtensionAction::RouteFix {
            node: anchor.clone(),
            patches,
        });
    }

    // Remote fabric: everything that did not move goes back out the first
    // tunnel — the flat bridge has no better knowledge.
    let moved: BTreeSet<Address> = hosts
        .iter()
        .flat_map(|h| t.nodes[h].addresses.iter().cloned())
        .collect();
    let back = first_tunnel_remote.expect("at least one tunnel");
    let patches: Vec<RoutePatch> = all_addresses
        .iter()
        .filter(|a| !moved.contains(a))
        .map(|addr| RoutePatch::Set {
            addr: addr.clone(),
            next: back.clone(),
        })
        .collect();
    plan.actions.push(ExtensionAction::RouteFix {
        node: fabric.clone(),
        patches,
    });

    Ok(plan)
}

/// Applies the naive relocation directly, returning the extended topology.
pub fn relocate_naive(
    t: &Topology,
    hosts: &BTreeSet<NodeRef>,
    site: &SiteId,
) -> Result<Topology, NaiveError> {
    let plan = naive_plan(t, hosts, site)?;
    Ok(apply_plan(t, &plan)?)
}

/// Mirrors a middlebox into a remote site: a new equivalent node attached
/// to the site's fabric switch. Returns the extended topology and the
/// clone's id.
pub fn apply_mirror(
    t: &Topology,
    middlebox: &NodeRef,
    site: &SiteId,
) -> Result<(Topology, NodeRef), ApplyError> {
    let new_ref = fresh_name(t, &format!("{}_m", middlebox.0));
    let mut out = t.clone();
    apply_action(
        &mut out,
        &ExtensionAction::Mirror {
            middlebox: middlebox.clone(),
            to_site: site.clone(),
            new_ref: new_ref.clone(),
        },
    )?;
    Ok((out, new_ref))
}

/// Stands up a proxy for an already-relocated host at its original
/// attachment point.
pub fn apply_proxy(
    t: &Topology,
    relocated: &NodeRef,
    original_attachment: &NodeRef,
) -> Result<Topology, ApplyError> {
    let mut out = t.clone();
    apply_action(
        &mut out,
        &ExtensionAction::Proxy {
            host: relocated.clone(),
            original_attachment: original_attachment.clone(),
            enterprise_end: NodeRef::new(format!("{}_pxe", relocated.0)),
            remote_end: NodeRef::new(format!("{}_pxr", relocated.0)),
        },
    )?;
    Ok(out)
}

/// Counts site-crossing tunnel hops along a walk: adjacent σ entries that
/// are peered tunnel endpoints in different sites.
pub fn wan_crossings(t: &Topology, sigma: &[NodeRef]) -> usize {
    sigma
        .windows(2)
        .filter(|w| {
            let (a, b) = (&w[0], &w[1]);
            let (Some(na), Some(nb)) = (t.nodes.get(a), t.nodes.get(b)) else {
                return false;
            };
            na.kind == NodeKind::TunnelEndpoint
                && nb.kind == NodeKind::TunnelEndpoint
                && na.site != nb.site
                && matches!(
                    t.forwarding.get(a),
                    Some(ForwardingState::Tunnel { peer, .. }) if peer == b
                )
        })
        .count()
}
