//! Packet policies: packet classes, waypoint ordering and occurrence
//! constraints, scopes, and the default-deny rule for unmatched traffic.
//!
//! A policy governs a class of packets. Beyond the destination it states
//! two things: which nodes the packet *must* visit (waypoints, with
//! ordering and occurrence constraints on the traversal sequence) and
//! which nodes it *may* reach at most (the scope, its security zone).
//! Packets matching no policy are unwanted and have to be filtered before
//! delivery.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::netmodel::{Address, HeaderPattern, NodeRef, Topology};

pub mod dsl;

pub use dsl::{parse_policy_set, render_policy_set, ParseError};

/// Concrete packet header as seen on the wire. No wildcards.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PacketHeader {
    pub src: Address,
    pub dst: Address,
    pub sport: u16,
    pub dport: u16,
    pub proto: String,
}

impl fmt::Display for PacketHeader {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "[{}, {}, {}, {}, {}]",
            self.src, self.dst, self.sport, self.dport, self.proto
        )
    }
}

/// Packet class: a five-position header pattern plus an optional origin
/// qualifier. The origin pins where the packet was injected or reborn by a
/// rewrite, which distinguishes otherwise identical headers (a reply
/// leaving a server versus the same reply after the load balancer rewrote
/// its source).
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PacketClass {
    pub pattern: HeaderPattern,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub origin: Option<NodeRef>,
}

impl PacketClass {
    pub fn matches(&self, pkt: &PacketHeader, origin: &NodeRef) -> bool {
        let p = &self.pattern;
        p.src.as_ref().is_none_or(|v| *v == pkt.src)
            && p.dst.as_ref().is_none_or(|v| *v == pkt.dst)
            && p.sport.is_none_or(|v| v == pkt.sport)
            && p.dport.is_none_or(|v| v == pkt.dport)
            && p.proto.as_ref().is_none_or(|v| *v == pkt.proto)
            && self.origin.as_ref().is_none_or(|v| v == origin)
    }

    /// (non-wildcard count, has-origin) — the match-resolution key.
    pub fn specificity(&self) -> (usize, bool) {
        (self.pattern.specificity(), self.origin.is_some())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    Eq,
    Ge,
    Le,
}

impl Relation {
    pub fn holds(self, got: usize, count: usize) -> bool {
        match self {
            Relation::Eq => got == count,
            Relation::Ge => got >= count,
            Relation::Le => got <= count,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Relation::Eq => "==",
            Relation::Ge => ">=",
            Relation::Le => "<=",
        }
    }
}

/// Constraint on how many times a node may appear in a traversal sequence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OccurrenceConstraint {
    pub node: NodeRef,
    pub relation: Relation,
    pub count: usize,
}

impl OccurrenceConstraint {
    /// `Ge 0` holds for every sequence and is rejected as vacuous.
    pub fn is_vacuous(&self) -> bool {
        self.relation == Relation::Ge && self.count == 0
    }

    /// Whether a sequence that never visits the node can satisfy this.
    pub fn permits_absence(&self) -> bool {
        self.relation.holds(0, self.count)
    }
}

/// Waypoint specification: member nodes, precedence pairs (a before b), and
/// occurrence constraints. Members without an explicit occurrence
/// constraint carry an implicit visit-at-least-once requirement.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct WaypointSpec {
    /// Members in first-mention order.
    pub waypoints: Vec<NodeRef>,
    pub precedence: BTreeSet<(NodeRef, NodeRef)>,
    pub occurrence: Vec<OccurrenceConstraint>,
}

impl WaypointSpec {
    pub fn is_empty(&self) -> bool {
        self.waypoints.is_empty() && self.precedence.is_empty() && self.occurrence.is_empty()
    }

    /// True when the constraints allow `node` to be absent from the
    /// traversal: either an explicit constraint satisfied by zero visits,
    /// or — absent any constraint — never (membership implies a visit).
    pub fn permits_absence(&self, node: &NodeRef) -> bool {
        let mut constrained = false;
        for c in self.occurrence.iter().filter(|c| &c.node == node) {
            constrained = true;
            if !c.permits_absence() {
                return false;
            }
        }
        constrained
    }

    /// Structural validity: constraints only on members, acyclic
    /// precedence, no vacuous occurrence constraints.
    pub fn validate(&self) -> Result<(), String> {
        let members: BTreeSet<&NodeRef> = self.waypoints.iter().collect();
        for (a, b) in &self.precedence {
            if !members.contains(a) || !members.contains(b) {
                return Err(format!(
                    "precedence pair ({a}, {b}) references a non-waypoint node"
                ));
            }
        }
        for c in &self.occurrence {
            if !members.contains(&c.node) {
                return Err(format!(
                    "occurrence constraint on non-waypoint node `{}`",
                    c.node
                ));
            }
            if c.is_vacuous() {
                return Err(format!(
                    "vacuous constraint `{} >= 0` (always true)",
                    c.node
                ));
            }
        }
        if self.has_precedence_cycle() {
            return Err("precedence relation has a cycle".to_string());
        }
        Ok(())
    }

    fn has_precedence_cycle(&self) -> bool {
        // Kahn's algorithm over the precedence edges.
        let mut indeg: BTreeMap<&NodeRef, usize> = BTreeMap::new();
        for (a, b) in &self.precedence {
            indeg.entry(a).or_insert(0);
            *indeg.entry(b).or_insert(0) += 1;
        }
        let mut ready: Vec<&NodeRef> = indeg
            .iter()
            .filter(|(_, d)| **d == 0)
            .map(|(n, _)| *n)
            .collect();
        let mut seen = 0usize;
        while let Some(n) = ready.pop() {
            seen += 1;
            for (a, b) in &self.precedence {
                if a == n {
                    let d = indeg.get_mut(b).expect("indexed above");
                    *d -= 1;
                    if *d == 0 {
                        ready.push(b);
                    }
                }
            }
        }
        seen < indeg.len()
    }
}

/// Policy identifier.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PolicyId(pub String);

impl fmt::Display for PolicyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for PolicyId {
    fn from(s: &str) -> Self {
        PolicyId(s.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Policy {
    pub id: PolicyId,
    pub class: PacketClass,
    /// Where this policy's packet must be delivered. Usually the class's
    /// `dst` position; for a leg that ends at a rewriting middlebox (a
    /// reply handed to the load balancer, say) it is the hand-off address
    /// instead, and a chained policy governs the reborn packet onward.
    pub destination: Address,
    pub waypoints: WaypointSpec,
    pub scope: BTreeSet<NodeRef>,
}

/// A set of policies over one topology. The default for unmatched packets
/// is always deny; it is part of the model, not configuration.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicySet {
    pub policies: Vec<Policy>,
}

impl PolicySet {
    pub fn new(policies: Vec<Policy>) -> Self {
        PolicySet { policies }
    }

    pub fn get(&self, id: &PolicyId) -> Option<&Policy> {
        self.policies.iter().find(|p| &p.id == id)
    }

    pub fn len(&self) -> usize {
        self.policies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.policies.is_empty()
    }

    /// Cross-checks the set against a topology: node tokens must resolve,
    /// the destination must be owned by a node in scope, waypoints must lie
    /// in scope. Returns human-readable problems.
    pub fn validate_against(&self, t: &Topology) -> Vec<String> {
        let mut problems = Vec::new();
        for p in &self.policies {
            for n in p.scope.iter().chain(p.waypoints.waypoints.iter()) {
                if !t.nodes.contains_key(n) {
                    problems.push(format!("{}: unknown node token `{n}`", p.id));
                }
            }
            if let Some(origin) = &p.class.origin {
                if !t.nodes.contains_key(origin) {
                    problems.push(format!("{}: unknown origin node `{origin}`", p.id));
                }
            }
            if p.scope.is_empty() {
                problems.push(format!("{}: empty scope", p.id));
            }
            match t.owner_of(&p.destination) {
                None => problems.push(format!(
                    "{}: destination `{}` does not resolve to a unique node",
                    p.id, p.destination
                )),
                Some(owner) => {
                    if !p.scope.contains(&owner.id) {
                        problems.push(format!(
                            "{}: destination node `{}` is outside the scope",
                            p.id, owner.id
                        ));
                    }
                }
            }
            for w in &p.waypoints.waypoints {
                if !p.scope.contains(w) {
                    problems.push(format!("{}: waypoint `{w}` is outside the scope", p.id));
                }
            }
        }
        problems
    }
}

/// Result of matching a packet against a policy set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MatchOutcome<'a> {
    Policy(&'a Policy),
    DefaultDeny,
}

/// Ambiguity: two policies match with equal specificity.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("ambiguous match for {header} from {origin}: policies `{a}` and `{b}` tie")]
pub struct AmbiguousMatch {
    pub header: PacketHeader,
    pub origin: NodeRef,
    pub a: PolicyId,
    pub b: PolicyId,
}

/// Finds the policy governing a concrete packet injected or reborn at
/// `origin`. Most specific class wins (most non-wildcard positions, origin
/// qualifier as tiebreaker); an unresolvable tie is a configuration error.
#[allow(clippy::result_large_err)]
pub fn match_packet<'a>(
    ps: &'a PolicySet,
    pkt: &PacketHeader,
    origin: &NodeRef,
) -> Result<MatchOutcome<'a>, AmbiguousMatch> {
    let mut best: Option<(&Policy, (usize, bool))> = None;
    let mut tied: Option<&Policy> = None;
    for p in &ps.policies {
        if !p.class.matches(pkt, origin) {
            continue;
        }
        let spec = p.class.specificity();
        match &best {
            Some((_, best_spec)) if spec < *best_spec => {}
            Some((_, best_spec)) if spec == *best_spec => tied = Some(p),
            _ => {
                best = Some((p, spec));
                tied = None;
            }
        }
    }
    match (best, tied) {
        (Some((a, _)), Some(b)) => Err(AmbiguousMatch {
            header: pkt.clone(),
            origin: origin.clone(),
            a: a.id.clone(),
            b: b.id.clone(),
        }),
        (Some((p, _)), None) => Ok(MatchOutcome::Policy(p)),
        (None, _) => Ok(MatchOutcome::DefaultDeny),
    }
}

/// Number of times `v` appears in the traversal sequence.
pub fn occur(sigma: &[NodeRef], v: &NodeRef) -> usize {
    sigma.iter().filter(|n| *n == v).count()
}

/// One failed waypoint constraint.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum WaypointViolation {
    /// A member with no explicit occurrence constraint was never visited.
    Missed { node: NodeRef },
    Occurrence {
        node: NodeRef,
        relation: Relation,
        required: usize,
        got: usize,
    },
    Order { before: NodeRef, after: NodeRef },
}

impl fmt::Display for WaypointViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WaypointViolation::Missed { node } => write!(f, "waypoint `{node}` never visited"),
            WaypointViolation::Occurrence {
                node,
                relation,
                required,
                got,
            } => write!(
                f,
                "occurrence `{node} {} {required}` failed (got {got})",
                relation.symbol()
            ),
            WaypointViolation::Order { before, after } => {
                write!(f, "order violated: `{before}` must precede `{after}`")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum WaypointVerdict {
    Satisfied,
    Violated(Vec<WaypointViolation>),
}

impl WaypointVerdict {
    pub fn is_satisfied(&self) -> bool {
        matches!(self, WaypointVerdict::Satisfied)
    }
}

/// Evaluates a waypoint specification against a traversal sequence.
///
/// Occurrence constraints are checked on visit counts. A member without
/// any explicit constraint must be visited at least once. A precedence
/// pair (a, b) requires the first occurrence of `a` before the first
/// occurrence of `b`; it holds vacuously when a side is absent and the
/// occurrence constraints permit that absence.
pub fn check_waypoints(spec: &WaypointSpec, sigma: &[NodeRef]) -> WaypointVerdict {
    let mut counts: BTreeMap<&NodeRef, usize> = BTreeMap::new();
    let mut first: BTreeMap<&NodeRef, usize> = BTreeMap::new();
    for (i, n) in sigma.iter().enumerate() {
        *counts.entry(n).or_insert(0) += 1;
        first.entry(n).or_insert(i);
    }
    let count_of = |n: &NodeRef| counts.get(n).copied().unwrap_or(0);

    let mut violations = Vec::new();

    let constrained: BTreeSet<&NodeRef> = spec.occurrence.iter().map(|c| &c.node).collect();
    for w in &spec.waypoints {
        if !constrained.contains(w) && count_of(w) == 0 {
            violations.push(WaypointViolation::Missed { node: w.clone() });
        }
    }

    for c in &spec.occurrence {
        let got = count_of(&c.node);
        if !c.relation.holds(got, c.count) {
            violations.push(WaypointViolation::Occurrence {
                node: c.node.clone(),
                relation: c.relation,
                required: c.count,
                got,
            });
        }
    }

    for (a, b) in &spec.precedence {
        let ok = match (first.get(a), first.get(b)) {
            (Some(fa), Some(fb)) => fa < fb,
            (None, _) => spec.permits_absence(a),
            (_, None) => spec.permits_absence(b),
        };
        if !ok {
            violations.push(WaypointViolation::Order {
                before: a.clone(),
                after: b.clone(),
            });
        }
    }

    if violations.is_empty() {
        WaypointVerdict::Satisfied
    } else {
        WaypointVerdict::Violated(violations)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ScopeVerdict {
    Contained,
    Leak(BTreeSet<NodeRef>),
}

impl ScopeVerdict {
    pub fn is_contained(&self) -> bool {
        matches!(self, ScopeVerdict::Contained)
    }
}

/// Scope containment: every reached node must lie in the scope. Returns
/// the leaking nodes otherwise.
pub fn check_scope(scope: &BTreeSet<NodeRef>, reach: &BTreeSet<NodeRef>) -> ScopeVerdict {
    let leak: BTreeSet<NodeRef> = reach.difference(scope).cloned().collect();
    if leak.is_empty() {
        ScopeVerdict::Contained
    } else {
        ScopeVerdict::Leak(leak)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn n(s: &str) -> NodeRef {
        NodeRef::from(s)
    }

    fn seq(names: &[&str]) -> Vec<NodeRef> {
        names.iter().map(|s| n(s)).collect()
    }

    fn policy1_spec() -> WaypointSpec {
        WaypointSpec {
            waypoints: vec![n("F_1"), n("LB_1")],
            precedence: [(n("F_1"), n("LB_1"))].into_iter().collect(),
            occurrence: vec![
                OccurrenceConstraint {
                    node: n("F_1"),
                    relation: Relation::Eq,
                    count: 1,
                },
                OccurrenceConstraint {
                    node: n("LB_1"),
                    relation: Relation::Eq,
                    count: 1,
                },
            ],
        }
    }

    #[test]
    fn occur_counts_directly() {
        assert_eq!(occur(&seq(&["CE", "S1", "F1", "LB1"]), &n("F1")), 1);
        assert_eq!(occur(&[], &n("v")), 0);
        assert_eq!(occur(&seq(&["IPS1", "S3", "IPS1"]), &n("IPS1")), 2);
    }

    #[test]
    fn occur_sums_to_length_and_is_permutation_invariant() {
        let sigma = seq(&["a", "b", "a", "c", "b", "a"]);
        let alphabet: BTreeSet<&NodeRef> = sigma.iter().collect();
        let total: usize = alphabet.iter().map(|v| occur(&sigma, v)).sum();
        assert_eq!(total, sigma.len());
        let mut rev = sigma.clone();
        rev.reverse();
        for v in &alphabet {
            assert_eq!(occur(&sigma, v), occur(&rev, v));
        }
    }

    #[test]
    fn policy1_sequence_satisfies_spec() {
        let verdict = check_waypoints(&policy1_spec(), &seq(&["CE", "S1", "F_1", "LB_1"]));
        assert!(verdict.is_satisfied());
    }

    #[test]
    fn missing_firewall_fails_occurrence() {
        let verdict = check_waypoints(&policy1_spec(), &seq(&["CE", "S1", "LB_1"]));
        match verdict {
            WaypointVerdict::Violated(vs) => {
                assert!(vs.iter().any(|v| matches!(
                    v,
                    WaypointViolation::Occurrence { node, required: 1, got: 0, .. } if node == &n("F_1")
                )));
            }
            WaypointVerdict::Satisfied => panic!("expected a violation"),
        }
    }

    #[test]
    fn empty_spec_is_always_satisfied() {
        let spec = WaypointSpec::default();
        assert!(check_waypoints(&spec, &seq(&["x", "y", "z"])).is_satisfied());
        assert!(check_waypoints(&spec, &[]).is_satisfied());
    }

    #[test]
    fn precedence_vacuous_only_when_absence_permitted() {
        let mut spec = WaypointSpec {
            waypoints: vec![n("a"), n("b")],
            precedence: [(n("a"), n("b"))].into_iter().collect(),
            occurrence: vec![OccurrenceConstraint {
                node: n("a"),
                relation: Relation::Le,
                count: 1,
            }],
        };
        // `a` absent but permitted absent, `b` unconstrained and present.
        assert!(check_waypoints(&spec, &seq(&["b"])).is_satisfied());
        // Make absence of `a` forbidden.
        spec.occurrence[0].relation = Relation::Eq;
        let verdict = check_waypoints(&spec, &seq(&["b"]));
        match verdict {
            WaypointVerdict::Violated(vs) => {
                assert!(vs.iter().any(|v| matches!(v, WaypointViolation::Order { .. })));
                assert!(vs
                    .iter()
                    .any(|v| matches!(v, WaypointViolation::Occurrence { .. })));
            }
            _ => panic!("expected violations"),
        }
    }

    #[test]
    fn unconstrained_member_must_be_visited() {
        let spec = WaypointSpec {
            waypoints: vec![n("w")],
            precedence: BTreeSet::new(),
            occurrence: vec![],
        };
        assert!(check_waypoints(&spec, &seq(&["w", "x"])).is_satisfied());
        assert_eq!(
            check_waypoints(&spec, &seq(&["x"])),
            WaypointVerdict::Violated(vec![WaypointViolation::Missed { node: n("w") }])
        );
    }

    #[test]
    fn scope_containment_and_leak() {
        let scope: BTreeSet<NodeRef> = seq(&["LB_1", "F_1", "CE", "S_1", "u_e"]).into_iter().collect();
        let reach: BTreeSet<NodeRef> = seq(&["LB_1", "F_1", "CE", "S_1", "u_e"]).into_iter().collect();
        assert!(check_scope(&scope, &reach).is_contained());

        let mut leaky = reach.clone();
        leaky.insert(n("S_2"));
        assert_eq!(
            check_scope(&scope, &leaky),
            ScopeVerdict::Leak([n("S_2")].into_iter().collect())
        );

        assert!(check_scope(&scope, &BTreeSet::new()).is_contained());
    }

    #[test]
    fn scope_is_monotone_in_the_scope_set() {
        let scope: BTreeSet<NodeRef> = seq(&["a", "b"]).into_iter().collect();
        let reach: BTreeSet<NodeRef> = seq(&["a"]).into_iter().collect();
        assert!(check_scope(&scope, &reach).is_contained());
        let mut bigger = scope.clone();
        bigger.insert(n("extra"));
        assert!(check_scope(&bigger, &reach).is_contained());
    }

    #[test]
    fn vacuous_ge_zero_rejected() {
        let spec = WaypointSpec {
            waypoints: vec![n("a")],
            precedence: BTreeSet::new(),
            occurrence: vec![OccurrenceConstraint {
                node: n("a"),
                relation: Relation::Ge,
                count: 0,
            }],
        };
        assert!(spec.validate().unwrap_err().contains("vacuous"));
    }

    #[test]
    fn precedence_cycle_rejected() {
        let spec = WaypointSpec {
            waypoints: vec![n("a"), n("b")],
            precedence: [(n("a"), n("b")), (n("b"), n("a"))].into_iter().collect(),
            occurrence: vec![],
        };
        assert!(spec.validate().unwrap_err().contains("cycle"));
    }

    fn header(src: &str, dst: &str, sport: u16, dport: u16) -> PacketHeader {
        PacketHeader {
            src: Address::from(src),
            dst: Address::from(dst),
            sport,
            dport,
            proto: "TCP".to_string(),
        }
    }

    fn simple_policy(id: &str, pattern: HeaderPattern, origin: Option<&str>) -> Policy {
        let destination = pattern.dst.clone().unwrap_or_else(|| Address::from("d"));
        Policy {
            id: PolicyId::from(id),
            class: PacketClass {
                pattern,
                origin: origin.map(NodeRef::from),
            },
            destination,
            waypoints: WaypointSpec::default(),
            scope: [n("d")].into_iter().collect(),
        }
    }

    #[test]
    fn match_picks_most_specific_and_reports_ties() {
        let broad = simple_policy(
            "broad",
            HeaderPattern {
                src: Some(Address::from("s")),
                dst: Some(Address::from("d")),
                ..HeaderPattern::any()
            },
            None,
        );
        let narrow = simple_policy(
            "narrow",
            HeaderPattern {
                src: Some(Address::from("s")),
                dst: Some(Address::from("d")),
                dport: Some(80),
                ..HeaderPattern::any()
            },
            None,
        );
        let ps = PolicySet::new(vec![broad.clone(), narrow.clone()]);
        let got = match_packet(&ps, &header("s", "d", 1, 80), &n("s")).unwrap();
        assert_eq!(got, MatchOutcome::Policy(&ps.policies[1]));

        // No match at all: default deny.
        let miss = match_packet(&ps, &header("x", "y", 1, 80), &n("x")).unwrap();
        assert_eq!(miss, MatchOutcome::DefaultDeny);

        // Equal specificity without distinguishing origin: ambiguous.
        let twin = simple_policy(
            "twin",
            HeaderPattern {
                src: Some(Address::from("s")),
                dst: Some(Address::from("d")),
                sport: Some(1),
                ..HeaderPattern::any()
            },
            None,
        );
        let ps2 = PolicySet::new(vec![narrow, twin]);
        let err = match_packet(&ps2, &header("s", "d", 1, 80), &n("s")).unwrap_err();
        assert_eq!(err.a, PolicyId::from("narrow"));
        assert_eq!(err.b, PolicyId::from("twin"));
    }

    #[test]
    fn origin_acts_as_tiebreaker() {
        let plain = simple_policy(
            "plain",
            HeaderPattern {
                src: Some(Address::from("s")),
                dst: Some(Address::from("d")),
                ..HeaderPattern::any()
            },
            None,
        );
        let pinned = simple_policy(
            "pinned",
            HeaderPattern {
                src: Some(Address::from("s")),
                dst: Some(Address::from("d")),
                ..HeaderPattern::any()
            },
            Some("lb"),
        );
        let ps = PolicySet::new(vec![plain, pinned]);
        let got = match_packet(&ps, &header("s", "d", 9, 9), &n("lb")).unwrap();
        match got {
            MatchOutcome::Policy(p) => assert_eq!(p.id, PolicyId::from("pinned")),
            _ => panic!("expected pinned policy"),
        }
        let got = match_packet(&ps, &header("s", "d", 9, 9), &n("elsewhere")).unwrap();
        match got {
            MatchOutcome::Policy(p) => assert_eq!(p.id, PolicyId::from("plain")),
            _ => panic!("expected plain policy"),
        }
    }
}
