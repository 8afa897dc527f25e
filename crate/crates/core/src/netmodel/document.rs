//! Topology document: the on-disk JSON form of a [`Topology`].
//!
//! Top-level keys are `sites`, `nodes`, `links`, `forwarding`. A node entry
//! is `{id, kind, site, addresses, middlebox?}` where `middlebox` carries
//! the function class and rule list. `docs/topology.schema.json` holds the
//! JSON Schema for the format.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{
    Address, Flexibility, ForwardingState, FunctionClass, MiddleboxSpec, Node, NodeKind, NodeRef,
    Site, SiteId, SiteKind, Topology,
};

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SiteDoc {
    id: String,
    kind: String,
    #[serde(default)]
    flexibility: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct MiddleboxDoc {
    class: FunctionClass,
    #[serde(default)]
    rules: Vec<super::MbRule>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct NodeDoc {
    id: String,
    kind: String,
    site: String,
    #[serde(default)]
    addresses: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    middlebox: Option<MiddleboxDoc>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TopologyDoc {
    #[serde(default)]
    sites: Vec<SiteDoc>,
    #[serde(default)]
    nodes: Vec<NodeDoc>,
    #[serde(default)]
    links: Vec<(String, String)>,
    #[serde(default)]
    forwarding: BTreeMap<String, ForwardingState>,
}

/// Structural errors found while building a topology from a document. The
/// builder reports every error it can find rather than stopping at the
/// first one.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BuildError {
    #[error("document is not valid JSON: {0}")]
    Json(String),
    #[error("document declares no nodes")]
    NoNodes,
    #[error("duplicate node id `{0}`")]
    DuplicateNode(String),
    #[error("duplicate site id `{0}`")]
    DuplicateSite(String),
    #[error("node `{node}` references unknown site `{site}`")]
    UnknownSite { node: String, site: String },
    #[error("unknown site kind `{0}` (expected `enterprise` or `remote_dc`)")]
    BadSiteKind(String),
    #[error("unknown node kind `{0}`")]
    BadNodeKind(String),
    #[error("node `{0}` has kind `middlebox` but no middlebox spec")]
    MissingMiddleboxSpec(String),
    #[error("node `{0}` has a middlebox spec but kind `{1}`")]
    UnexpectedMiddleboxSpec(String, String),
    #[error("link ({0}, {1}) has dangling endpoint `{2}`")]
    DanglingEndpoint(String, String, String),
    #[error("self-link on `{0}`")]
    SelfLink(String),
    #[error("host `{0}` has no address")]
    HostWithoutAddress(String),
    #[error("switch `{0}` must not carry addresses")]
    SwitchWithAddress(String),
    #[error("forwarding entry for unknown node `{0}`")]
    ForwardingForUnknownNode(String),
    #[error("forwarding for `{node}` does not match its kind `{kind}`")]
    ForwardingKindMismatch { node: String, kind: String },
}

fn parse_site_kind(s: &str) -> Option<SiteKind> {
    match s {
        "enterprise" => Some(SiteKind::Enterprise),
        "remote_dc" => Some(SiteKind::RemoteDc),
        _ => None,
    }
}

fn site_kind_str(k: SiteKind) -> &'static str {
    match k {
        SiteKind::Enterprise => "enterprise",
        SiteKind::RemoteDc => "remote_dc",
    }
}

fn parse_flexibility(s: Option<&str>) -> Flexibility {
    match s {
        Some("restricted") => Flexibility::Restricted,
        _ => Flexibility::Full,
    }
}

fn forwarding_matches_kind(state: &ForwardingState, kind: &NodeKind) -> bool {
    matches!(
        (state, kind),
        (ForwardingState::Switch { .. }, NodeKind::Switch)
            | (ForwardingState::Router { .. }, NodeKind::Router)
            | (ForwardingState::Middlebox { .. }, NodeKind::Middlebox(_))
            | (ForwardingState::Host { .. }, NodeKind::Host)
            | (ForwardingState::Tunnel { .. }, NodeKind::TunnelEndpoint)
    )
}

/// Parses and validates a topology document. Returns either a fully valid
/// [`Topology`] or the complete list of structural errors; never a partial
/// result.
pub fn build_topology(doc: &str) -> Result<Topology, Vec<BuildError>> {
    let parsed: TopologyDoc = match serde_json::from_str(doc) {
        Ok(d) => d,
        Err(e) => return Err(vec![BuildError::Json(e.to_string())]),
    };
    build_from_doc(parsed)
}

fn build_from_doc(doc: TopologyDoc) -> Result<Topology, Vec<BuildError>> {
    let mut errors = Vec::new();
    let mut t = Topology::empty();

    if doc.nodes.is_empty() {
        return Err(vec![BuildError::NoNodes]);
    }

    for site in &doc.sites {
        let id = SiteId::new(site.id.clone());
        if t.sites.contains_key(&id) {
            errors.push(BuildError::DuplicateSite(site.id.clone()));
            continue;
        }
        match parse_site_kind(&site.kind) {
            Some(kind) => {
                t.sites.insert(
                    id.clone(),
                    Site {
                        id,
                        kind,
                        flexibility: parse_flexibility(site.flexibility.as_deref()),
                    },
                );
            }
            None => errors.push(BuildError::BadSiteKind(site.kind.clone())),
        }
    }

    for nd in &doc.nodes {
        let id = NodeRef::new(nd.id.clone());
        if t.nodes.contains_key(&id) {
            errors.push(BuildError::DuplicateNode(nd.id.clone()));
            continue;
        }
        let kind = match nd.kind.as_str() {
            "host" => NodeKind::Host,
            "switch" => NodeKind::Switch,
            "router" => NodeKind::Router,
            "tunnel_endpoint" => NodeKind::TunnelEndpoint,
            "middlebox" => match &nd.middlebox {
                Some(spec) => NodeKind::Middlebox(MiddleboxSpec {
                    class: spec.class.clone(),
                    rules: spec.rules.clone(),
                }),
                None => {
                    errors.push(BuildError::MissingMiddleboxSpec(nd.id.clone()));
                    continue;
                }
            },
            other => {
                errors.push(BuildError::BadNodeKind(other.to_string()));
                continue;
            }
        };
        if nd.middlebox.is_some() && nd.kind != "middlebox" {
            errors.push(BuildError::UnexpectedMiddleboxSpec(
                nd.id.clone(),
                nd.kind.clone(),
            ));
        }
        let site = SiteId::new(nd.site.clone());
        if !t.sites.contains_key(&site) {
            errors.push(BuildError::UnknownSite {
                node: nd.id.clone(),
                site: nd.site.clone(),
            });
        }
        let addresses: BTreeSet<Address> =
            nd.addresses.iter().map(|a| Address::new(a.clone())).collect();
        match kind {
            NodeKind::Host if addresses.is_empty() => {
                errors.push(BuildError::HostWithoutAddress(nd.id.clone()));
            }
            NodeKind::Switch if !addresses.is_empty() => {
                errors.push(BuildError::SwitchWithAddress(nd.id.clone()));
            }
            _ => {}
        }
        t.nodes.insert(
            id.clone(),
            Node {
                id,
                kind,
                site,
                addresses,
            },
        );
    }

    for (a, b) in &doc.links {
        if a == b {
            errors.push(BuildError::SelfLink(a.clone()));
            continue;
        }
        let ra = NodeRef::new(a.clone());
        let rb = NodeRef::new(b.clone());
        let mut ok = true;
        if !t.nodes.contains_key(&ra) {
            errors.push(BuildError::DanglingEndpoint(a.clone(), b.clone(), a.clone()));
            ok = false;
        }
        if !t.nodes.contains_key(&rb) {
            errors.push(BuildError::DanglingEndpoint(a.clone(), b.clone(), b.clone()));
            ok = false;
        }
        if ok {
            t.add_link(ra, rb);
        }
    }

    for (id, state) in doc.forwarding {
        let nref = NodeRef::new(id.clone());
        match t.nodes.get(&nref) {
            None => errors.push(BuildError::ForwardingForUnknownNode(id)),
            Some(node) => {
                if forwarding_matches_kind(&state, &node.kind) {
                    t.forwarding.insert(nref, state);
                } else {
                    errors.push(BuildError::ForwardingKindMismatch {
                        node: id,
                        kind: node.kind.label().to_string(),
                    });
                }
            }
        }
    }

    if errors.is_empty() {
        Ok(t)
    } else {
        Err(errors)
    }
}

/// Renders a topology back to its JSON document form. Deterministic: nodes,
/// sites, and links are emitted in sorted order, so equal topologies render
/// to byte-identical documents.
pub fn render_topology(t: &Topology) -> String {
    let doc = TopologyDoc {
        sites: t
            .sites
            .values()
            .map(|s| SiteDoc {
                id: s.id.0.clone(),
                kind: site_kind_str(s.kind).to_string(),
                flexibility: Some(
                    match s.flexibility {
                        Flexibility::Full => "full",
                        Flexibility::Restricted => "restricted",
                    }
                    .to_string(),
                ),
            })
            .collect(),
        nodes: t
            .nodes
            .values()
            .map(|n| {
                let (kind, middlebox) = match &n.kind {
                    NodeKind::Host => ("host", None),
                    NodeKind::Switch => ("switch", None),
                    NodeKind::Router => ("router", None),
                    NodeKind::TunnelEndpoint => ("tunnel_endpoint", None),
                    NodeKind::Middlebox(spec) => (
                        "middlebox",
                        Some(MiddleboxDoc {
                            class: spec.class.clone(),
                            rules: spec.rules.clone(),
                        }),
                    ),
                };
                NodeDoc {
                    id: n.id.0.clone(),
                    kind: kind.to_string(),
                    site: n.site.0.clone(),
                    addresses: n.addresses.iter().map(|a| a.0.clone()).collect(),
                    middlebox,
                }
            })
            .collect(),
        links: t
            .links
            .iter()
            .map(|(a, b)| (a.0.clone(), b.0.clone()))
            .collect(),
        forwarding: t
            .forwarding
            .iter()
            .map(|(k, v)| (k.0.clone(), v.clone()))
            .collect(),
    };
    serde_json::to_string_pretty(&doc).expect("topology document serializes")
}
