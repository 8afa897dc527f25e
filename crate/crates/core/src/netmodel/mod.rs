//! Network model: nodes, links, sites, middlebox identity, and per-node
//! forwarding state.
//!
//! A [`Topology`] is an undirected graph of named nodes. Hosts own layer-3
//! addresses, switches forward frames out of a FIB (flooding on a miss when
//! configured to), routers route on address prefixes guarded by ACLs, and
//! middleboxes apply an ordered rule list that can allow, deny, rewrite, or
//! copy packets. Middlebox identity is the pair (function class,
//! configuration state): two boxes are interchangeable exactly when both
//! components are equal.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

pub mod document;
pub mod validate;

pub use document::{build_topology, render_topology, BuildError};
pub use validate::{validate_topology, Issue, Severity};

/// Opaque node identifier, unique within a topology.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeRef(pub String);

impl NodeRef {
    pub fn new(id: impl Into<String>) -> Self {
        NodeRef(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for NodeRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for NodeRef {
    fn from(s: &str) -> Self {
        NodeRef(s.to_string())
    }
}

/// Layer-3 address token. Addresses are opaque: routers match them by
/// longest string prefix, everything else matches them exactly.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Address(pub String);

impl Address {
    pub fn new(a: impl Into<String>) -> Self {
        Address(a.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for Address {
    fn from(s: &str) -> Self {
        Address(s.to_string())
    }
}

/// Site identifier.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SiteId(pub String);

impl SiteId {
    pub fn new(id: impl Into<String>) -> Self {
        SiteId(id.into())
    }
}

impl fmt::Display for SiteId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for SiteId {
    fn from(s: &str) -> Self {
        SiteId(s.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SiteKind {
    Enterprise,
    RemoteDc,
}

/// How much freedom the operator has inside a site. A restricted remote
/// data center rejects middlebox placement (mirrors).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Flexibility {
    Full,
    Restricted,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Site {
    pub id: SiteId,
    pub kind: SiteKind,
    pub flexibility: Flexibility,
}

/// Middlebox role. Two middleboxes can only be equivalent within one class.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FunctionClass {
    Firewall,
    LoadBalancer,
    Ips,
    Sniffer,
    Other(String),
}

impl fmt::Display for FunctionClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FunctionClass::Firewall => f.write_str("firewall"),
            FunctionClass::LoadBalancer => f.write_str("load_balancer"),
            FunctionClass::Ips => f.write_str("ips"),
            FunctionClass::Sniffer => f.write_str("sniffer"),
            FunctionClass::Other(name) => write!(f, "other:{name}"),
        }
    }
}

/// Five-position header pattern; `None` is a wildcard.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct HeaderPattern {
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub src: Option<Address>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub dst: Option<Address>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub sport: Option<u16>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub dport: Option<u16>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub proto: Option<String>,
}

impl HeaderPattern {
    pub fn any() -> Self {
        HeaderPattern::default()
    }

    /// Number of concrete (non-wildcard) positions, 0..=5.
    pub fn specificity(&self) -> usize {
        usize::from(self.src.is_some())
            + usize::from(self.dst.is_some())
            + usize::from(self.sport.is_some())
            + usize::from(self.dport.is_some())
            + usize::from(self.proto.is_some())
    }
}

/// Which header field a rewrite replaces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewriteField {
    Src,
    Dst,
}

/// Action taken by a middlebox rule on a matching packet.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleAction {
    Allow,
    Deny,
    Rewrite { field: RewriteField, to: Address },
    CopyTo(NodeRef),
}

/// One entry of a middlebox configuration: first match wins.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MbRule {
    #[serde(rename = "match")]
    pub pattern: HeaderPattern,
    pub action: RuleAction,
}

/// Middlebox identity: function class plus an ordered, canonical rule list.
/// Equality of the two components is the equivalence the extension planner
/// relies on when substituting a mirrored box for an original waypoint.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MiddleboxSpec {
    pub class: FunctionClass,
    pub rules: Vec<MbRule>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    Host,
    Switch,
    Router,
    Middlebox(MiddleboxSpec),
    TunnelEndpoint,
}

impl NodeKind {
    pub fn label(&self) -> &'static str {
        match self {
            NodeKind::Host => "host",
            NodeKind::Switch => "switch",
            NodeKind::Router => "router",
            NodeKind::Middlebox(_) => "middlebox",
            NodeKind::TunnelEndpoint => "tunnel_endpoint",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Node {
    pub id: NodeRef,
    pub kind: NodeKind,
    pub site: SiteId,
    pub addresses: BTreeSet<Address>,
}

impl Node {
    pub fn is_host(&self) -> bool {
        matches!(self.kind, NodeKind::Host)
    }

    pub fn is_middlebox(&self) -> bool {
        matches!(self.kind, NodeKind::Middlebox(_))
    }

    pub fn middlebox(&self) -> Option<&MiddleboxSpec> {
        match &self.kind {
            NodeKind::Middlebox(spec) => Some(spec),
            _ => None,
        }
    }
}

/// Router route entry: longest matching `prefix` (plain string prefix over
/// the opaque address space) wins; the empty prefix is a default route.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RouteEntry {
    pub prefix: String,
    pub next: NodeRef,
}

/// Router ACL entry, evaluated first-match on ingress. There is no implicit
/// terminal deny: a router forwards anything its ACL does not reject.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AclEntry {
    #[serde(rename = "match")]
    pub pattern: HeaderPattern,
    pub permit: bool,
}

fn default_true() -> bool {
    true
}

/// Per-node forwarding state. Variants must agree with the node kind.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ForwardingState {
    Switch {
        #[serde(default)]
        fib: BTreeMap<Address, NodeRef>,
        #[serde(default = "default_true")]
        flood_on_miss: bool,
    },
    Router {
        #[serde(default)]
        routes: Vec<RouteEntry>,
        #[serde(default)]
        acl: Vec<AclEntry>,
    },
    /// Optional next-hop map for middleboxes with more than two interfaces
    /// or for locally originated packets; two-interface boxes fall back to
    /// bump-in-the-wire forwarding (out the interface the packet did not
    /// arrive on).
    Middlebox {
        #[serde(default)]
        fib: BTreeMap<Address, NodeRef>,
    },
    Host {
        #[serde(skip_serializing_if = "Option::is_none", default)]
        gateway: Option<NodeRef>,
    },
    Tunnel {
        peer: NodeRef,
        #[serde(default)]
        encrypted: bool,
    },
}

impl ForwardingState {
    /// Kind-appropriate empty state for nodes the document leaves silent.
    pub fn default_for(kind: &NodeKind) -> Self {
        match kind {
            NodeKind::Switch => ForwardingState::Switch {
                fib: BTreeMap::new(),
                flood_on_miss: true,
            },
            NodeKind::Router => ForwardingState::Router {
                routes: Vec::new(),
                acl: Vec::new(),
            },
            NodeKind::Middlebox(_) => ForwardingState::Middlebox {
                fib: BTreeMap::new(),
            },
            NodeKind::Host => ForwardingState::Host { gateway: None },
            // Tunnel endpoints have no sensible default; validation rejects
            // one without an explicit peer.
            NodeKind::TunnelEndpoint => ForwardingState::Host { gateway: None },
        }
    }
}

/// The network graph: nodes, undirected links, sites, and forwarding state.
/// Immutable in normal use; the extension module clones and edits copies.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Topology {
    pub sites: BTreeMap<SiteId, Site>,
    pub nodes: BTreeMap<NodeRef, Node>,
    /// Normalized unordered pairs: `links` holds `(a, b)` with `a < b`.
    pub links: BTreeSet<(NodeRef, NodeRef)>,
    pub forwarding: BTreeMap<NodeRef, ForwardingState>,
}

impl Topology {
    pub fn empty() -> Self {
        Topology {
            sites: BTreeMap::new(),
            nodes: BTreeMap::new(),
            links: BTreeSet::new(),
            forwarding: BTreeMap::new(),
        }
    }

    pub fn node(&self, id: &NodeRef) -> Option<&Node> {
        self.nodes.get(id)
    }

    pub fn has_link(&self, a: &NodeRef, b: &NodeRef) -> bool {
        self.links.contains(&Self::norm_pair(a.clone(), b.clone()))
    }

    pub fn norm_pair(a: NodeRef, b: NodeRef) -> (NodeRef, NodeRef) {
        if a <= b {
            (a, b)
        } else {
            (b, a)
        }
    }

    pub fn add_link(&mut self, a: NodeRef, b: NodeRef) {
        if a != b {
            self.links.insert(Self::norm_pair(a, b));
        }
    }

    pub fn remove_link(&mut self, a: &NodeRef, b: &NodeRef) {
        self.links
            .remove(&Self::norm_pair(a.clone(), b.clone()));
    }

    /// Sorted neighbor list of `n`.
    pub fn neighbors(&self, n: &NodeRef) -> Vec<NodeRef> {
        let mut out = Vec::new();
        for (a, b) in &self.links {
            if a == n {
                out.push(b.clone());
            } else if b == n {
                out.push(a.clone());
            }
        }
        out.sort();
        out
    }

    /// Node owning `addr`, if exactly one does. Ambiguous ownership (the
    /// same address on several nodes) yields `None`.
    pub fn owner_of(&self, addr: &Address) -> Option<&Node> {
        let mut found = None;
        for node in self.nodes.values() {
            if node.addresses.contains(addr) {
                if found.is_some() {
                    return None;
                }
                found = Some(node);
            }
        }
        found
    }

    /// All addresses declared anywhere in the topology.
    pub fn all_addresses(&self) -> BTreeSet<Address> {
        self.nodes
            .values()
            .flat_map(|n| n.addresses.iter().cloned())
            .collect()
    }

    pub fn hosts(&self) -> impl Iterator<Item = &Node> {
        self.nodes.values().filter(|n| n.is_host())
    }

    /// Forwarding state of `n`, falling back to the kind default.
    pub fn forwarding_of(&self, n: &NodeRef) -> ForwardingState {
        match self.forwarding.get(n) {
            Some(state) => state.clone(),
            None => {
                let kind = self.nodes.get(n).map(|node| &node.kind);
                match kind {
                    Some(k) => ForwardingState::default_for(k),
                    None => ForwardingState::Host { gateway: None },
                }
            }
        }
    }

    /// The single enterprise site, when the invariant holds.
    pub fn enterprise_site(&self) -> Option<&Site> {
        self.sites
            .values()
            .find(|s| s.kind == SiteKind::Enterprise)
    }

    /// Adds a remote data-center site (no-op if already declared).
    pub fn with_remote_site(mut self, id: SiteId, flexibility: Flexibility) -> Self {
        self.sites.entry(id.clone()).or_insert(Site {
            id,
            kind: SiteKind::RemoteDc,
            flexibility,
        });
        self
    }
}

/// Error for contract violations in [`node_equiv`].
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("node_equiv requires middlebox nodes, got {kind} `{node}`")]
pub struct NotAMiddlebox {
    pub node: NodeRef,
    pub kind: String,
}

/// Middlebox equivalence: same function class and element-wise equal rule
/// lists. Both arguments must be middleboxes.
pub fn node_equiv(a: &Node, b: &Node) -> Result<bool, NotAMiddlebox> {
    let sa = a.middlebox().ok_or_else(|| NotAMiddlebox {
        node: a.id.clone(),
        kind: a.kind.label().to_string(),
    })?;
    let sb = b.middlebox().ok_or_else(|| NotAMiddlebox {
        node: b.id.clone(),
        kind: b.kind.label().to_string(),
    })?;
    Ok(sa.class == sb.class && sa.rules == sb.rules)
}
