//! Policy conformance checking.
//!
//! [`check_all`] simulates one representative probe per policy plus a
//! default-deny probe per unmatched host pair, and turns every broken
//! constraint into a categorized [`Violation`]. A rewrite splits a probe's
//! walk into segments; each segment is judged by the policy matching its
//! header and origin, so a chain like request → load-balancer rewrite →
//! server is checked under both policies involved.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::Serialize;

use crate::netmodel::{Address, NodeRef, Topology};
use crate::policy::{
    check_scope, check_waypoints, match_packet, MatchOutcome, Policy, PolicyId, PolicySet,
    ScopeVerdict, WaypointVerdict, WaypointViolation,
};
use crate::traversal::{
    policy_probe, probe_headers, simulate, Outcome, Probe, Traversal,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    MissedWaypoint,
    OrderViolation,
    OccurrenceViolation,
    ScopeLeak,
    DefaultDenyBreach,
    DeliveryFailure,
}

impl Category {
    pub fn label(self) -> &'static str {
        match self {
            Category::MissedWaypoint => "missed_waypoint",
            Category::OrderViolation => "order_violation",
            Category::OccurrenceViolation => "occurrence_violation",
            Category::ScopeLeak => "scope_leak",
            Category::DefaultDenyBreach => "default_deny_breach",
            Category::DeliveryFailure => "delivery_failure",
        }
    }

    pub fn all() -> [Category; 6] {
        [
            Category::MissedWaypoint,
            Category::OrderViolation,
            Category::OccurrenceViolation,
            Category::ScopeLeak,
            Category::DefaultDenyBreach,
            Category::DeliveryFailure,
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ViolationDetail {
    Waypoint(WaypointViolation),
    ScopeLeak { nodes: BTreeSet<NodeRef> },
    DefaultDenyBreach { delivered_at: NodeRef },
    DeliveryFailure { expected: Address, got: String },
}

impl fmt::Display for ViolationDetail {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ViolationDetail::Waypoint(w) => w.fmt(f),
            ViolationDetail::ScopeLeak { nodes } => {
                let names: Vec<&str> = nodes.iter().map(|n| n.as_str()).collect();
                write!(f, "reach leaks outside scope: {{{}}}", names.join(", "))
            }
            ViolationDetail::DefaultDenyBreach { delivered_at } => {
                write!(f, "unmatched packet delivered at `{delivered_at}`")
            }
            ViolationDetail::DeliveryFailure { expected, got } => {
                write!(f, "not delivered to `{expected}`: {got}")
            }
        }
    }
}

/// One conformance failure. `policy` is `None` for default-deny breaches.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub policy: Option<PolicyId>,
    pub category: Category,
    pub detail: ViolationDetail,
    pub witness: Traversal,
}

impl Violation {
    pub fn policy_label(&self) -> &str {
        self.policy.as_ref().map(|p| p.0.as_str()).unwrap_or("default-deny")
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ViolationReport {
    pub violations: Vec<Violation>,
    pub per_policy_counts: BTreeMap<String, usize>,
    pub total: usize,
    /// Configuration problems (ambiguous matches, unbuildable probes) —
    /// not violations, listed separately.
    pub config_errors: Vec<String>,
}

impl ViolationReport {
    pub fn is_clean(&self) -> bool {
        self.total == 0 && self.config_errors.is_empty()
    }

    pub fn count_in(&self, category: Category) -> usize {
        self.violations.iter().filter(|v| v.category == category).count()
    }

    /// Human-readable table, one line per violation.
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        if self.violations.is_empty() {
            out.push_str("no policy violations\n");
        } else {
            out.push_str(&format!("{} violation(s)\n", self.total));
            for v in &self.violations {
                out.push_str(&format!(
                    "  {:<12} {:<22} {}\n",
                    v.policy_label(),
                    v.category.label(),
                    v.detail
                ));
            }
            out.push_str("per-policy counts:\n");
            for (policy, count) in &self.per_policy_counts {
                out.push_str(&format!("  {policy:<12} {count}\n"));
            }
        }
        for e in &self.config_errors {
            out.push_str(&format!("config error: {e}\n"));
        }
        out
    }

    /// Machine-readable JSON with stable key order.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    fn finish(mut violations: Vec<Violation>, config_errors: Vec<String>) -> Self {
        // Deterministic order: policy id (default-deny last), category,
        // then detail. The same (policy, category, detail) can surface
        // both from a policy's own probe and from another probe's chained
        // segment; keep one.
        violations.sort_by(|a, b| {
            sort_key(a).cmp(&sort_key(b))
        });
        let mut seen = BTreeSet::new();
        violations.retain(|v| {
            seen.insert((
                v.policy.clone(),
                v.category,
                serde_json::to_string(&v.detail).expect("detail serializes"),
            ))
        });
        let mut per_policy_counts: BTreeMap<String, usize> = BTreeMap::new();
        for v in &violations {
            *per_policy_counts.entry(v.policy_label().to_string()).or_insert(0) += 1;
        }
        let total = violations.len();
        ViolationReport {
            violations,
            per_policy_counts,
            total,
            config_errors,
        }
    }
}

fn sort_key(v: &Violation) -> (bool, String, Category, String) {
    (
        v.policy.is_none(),
        v.policy.as_ref().map(|p| p.0.clone()).unwrap_or_default(),
        v.category,
        serde_json::to_string(&v.detail).expect("detail serializes"),
    )
}

/// Configuration problems that prevent checking a policy at all.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CheckError {
    #[error("{0}")]
    Probe(String),
    #[error("probe for `{policy}` matched `{matched}` instead; classes overlap")]
    ProbeMismatch { policy: PolicyId, matched: String },
    #[error("{0}")]
    Ambiguous(String),
}

fn owner_id(t: &Topology, addr: &Address) -> Option<NodeRef> {
    t.owner_of(addr).map(|n| n.id.clone())
}

/// Checks one policy by simulating its representative probe. Violations in
/// chained segments are attributed to the policy governing each segment.
pub fn check_policy(
    t: &Topology,
    ps: &PolicySet,
    p: &Policy,
    hop_limit: u32,
) -> Result<Vec<Violation>, CheckError> {
    let probe = policy_probe(p, t).map_err(CheckError::Probe)?;
    match match_packet(ps, &probe.header, &probe.inject_at) {
        Ok(MatchOutcome::Policy(matched)) if matched.id == p.id => {}
        Ok(MatchOutcome::Policy(matched)) => {
            return Err(CheckError::ProbeMismatch {
                policy: p.id.clone(),
                matched: matched.id.0.clone(),
            })
        }
        Ok(MatchOutcome::DefaultDeny) => {
            return Err(CheckError::ProbeMismatch {
                policy: p.id.clone(),
                matched: "default-deny".to_string(),
            })
        }
        Err(e) => return Err(CheckError::Ambiguous(e.to_string())),
    }

    let traversal = simulate(t, &probe.inject_at, &probe.header, hop_limit)
        .map_err(|e| CheckError::Probe(e.to_string()))?;

    let mut violations = Vec::new();

    if !traversal.outcome.is_delivered() {
        violations.push(Violation {
            policy: Some(p.id.clone()),
            category: Category::DeliveryFailure,
            detail: ViolationDetail::DeliveryFailure {
                expected: p.destination.clone(),
                got: outcome_text(&traversal.outcome),
            },
            witness: traversal.clone(),
        });
        // The packet still reached somewhere; scope judgment applies to
        // the pre-rewrite generation it was injected under.
        if let Some(reach) = traversal.reach_by_epoch.get(&0) {
            if let ScopeVerdict::Leak(nodes) = check_scope(&p.scope, reach) {
                violations.push(Violation {
                    policy: Some(p.id.clone()),
                    category: Category::ScopeLeak,
                    detail: ViolationDetail::ScopeLeak { nodes },
                    witness: traversal.clone(),
                });
            }
        }
        return Ok(violations);
    }

    let segments = traversal.segments();
    let last = segments.len() - 1;
    for (i, seg) in segments.iter().enumerate() {
        // The first segment is governed by `p` (verified above); later
        // segments by whatever policy matches the reborn packet.
        let governing: &Policy = if i == 0 {
            p
        } else {
            match match_packet(ps, &seg.header, &seg.origin) {
                Ok(MatchOutcome::Policy(q)) => q,
                Ok(MatchOutcome::DefaultDeny) => {
                    // A rewrite produced a packet no policy owns; its
                    // delivery is a default-deny breach.
                    violations.push(Violation {
                        policy: None,
                        category: Category::DefaultDenyBreach,
                        detail: ViolationDetail::DefaultDenyBreach {
                            delivered_at: seg.sigma.last().expect("segment non-empty").clone(),
                        },
                        witness: traversal.clone(),
                    });
                    continue;
                }
                Err(e) => return Err(CheckError::Ambiguous(e.to_string())),
            }
        };

        if let WaypointVerdict::Violated(ws) = check_waypoints(&governing.waypoints, &seg.sigma) {
            for w in ws {
                let category = match &w {
                    WaypointViolation::Missed { .. } => Category::MissedWaypoint,
                    WaypointViolation::Occurrence { .. } => Category::OccurrenceViolation,
                    WaypointViolation::Order { .. } => Category::OrderViolation,
                };
                violations.push(Violation {
                    policy: Some(governing.id.clone()),
                    category,
                    detail: ViolationDetail::Waypoint(w),
                    witness: traversal.clone(),
                });
            }
        }

        let empty = BTreeSet::new();
        let reach = traversal.reach_by_epoch.get(&seg.epoch).unwrap_or(&empty);
        if let ScopeVerdict::Leak(nodes) = check_scope(&governing.scope, reach) {
            violations.push(Violation {
                policy: Some(governing.id.clone()),
                category: Category::ScopeLeak,
                detail: ViolationDetail::ScopeLeak { nodes },
                witness: traversal.clone(),
            });
        }

        // Delivery: a non-final segment must end with the rewrite at the
        // node owning this policy's destination (the hand-off point); the
        // final segment must end with actual delivery there.
        let delivered_ok = if i < last {
            let boundary = &traversal.rewrites[i];
            owner_id(t, &governing.destination).is_some_and(|owner| owner == boundary.at)
        } else {
            match &traversal.outcome {
                Outcome::Delivered(at) => {
                    owner_id(t, &governing.destination).is_some_and(|owner| owner == *at)
                }
                _ => false,
            }
        };
        if !delivered_ok {
            let got = if i < last {
                format!("handed off at `{}`", traversal.rewrites[i].at)
            } else {
                outcome_text(&traversal.outcome)
            };
            violations.push(Violation {
                policy: Some(governing.id.clone()),
                category: Category::DeliveryFailure,
                detail: ViolationDetail::DeliveryFailure {
                    expected: governing.destination.clone(),
                    got,
                },
                witness: traversal.clone(),
            });
        }
    }

    Ok(violations)
}

fn outcome_text(outcome: &Outcome) -> String {
    match outcome {
        Outcome::Delivered(at) => format!("delivered at `{at}`"),
        Outcome::Dropped { at, reason } => format!("dropped at `{at}` ({})", reason.label()),
        Outcome::HopLimitExceeded => "hop limit exceeded".to_string(),
    }
}

/// Checks every policy plus the default-deny probe sweep. Violations are
/// deterministically ordered (policy id, category, detail) and deduplicated
/// across probe chains; configuration errors are listed separately.
pub fn check_all(t: &Topology, ps: &PolicySet, hop_limit: u32) -> ViolationReport {
    let mut violations = Vec::new();
    let mut config_errors = Vec::new();

    for p in &ps.policies {
        match check_policy(t, ps, p, hop_limit) {
            Ok(vs) => violations.extend(vs),
            Err(e) => config_errors.push(e.to_string()),
        }
    }

    let probes = probe_headers(ps, t);
    config_errors.extend(probes.problems.iter().cloned());
    for probe in probes.probes.iter().filter(|pr| pr.policy.is_none()) {
        match simulate(t, &probe.inject_at, &probe.header, hop_limit) {
            Ok(tr) => {
                if let Outcome::Delivered(at) = &tr.outcome {
                    violations.push(Violation {
                        policy: None,
                        category: Category::DefaultDenyBreach,
                        detail: ViolationDetail::DefaultDenyBreach {
                            delivered_at: at.clone(),
                        },
                        witness: tr,
                    });
                }
            }
            Err(e) => config_errors.push(e.to_string()),
        }
    }

    ViolationReport::finish(violations, config_errors)
}

/// Re-exported probe list for callers that need the same sweep the checker
/// runs (the evaluation harness counts WAN crossings over it).
pub fn checker_probes(t: &Topology, ps: &PolicySet) -> Vec<Probe> {
    probe_headers(ps, t).probes
}

/// Side-by-side category counts of two reports with signed deltas
/// (second minus first).
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ReportComparison {
    pub rows: Vec<ComparisonRow>,
    pub total_a: usize,
    pub total_b: usize,
    pub delta: i64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ComparisonRow {
    pub category: Category,
    pub a: usize,
    pub b: usize,
    pub delta: i64,
}

pub fn compare_reports(a: &ViolationReport, b: &ViolationReport) -> ReportComparison {
    let rows = Category::all()
        .into_iter()
        .map(|category| {
            let ca = a.count_in(category);
            let cb = b.count_in(category);
            ComparisonRow {
                category,
                a: ca,
                b: cb,
                delta: cb as i64 - ca as i64,
            }
        })
        .collect();
    ReportComparison {
        rows,
        total_a: a.total,
        total_b: b.total,
        delta: b.total as i64 - a.total as i64,
    }
}

impl fmt::Display for ReportComparison {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<22} {:>8} {:>8} {:>8}", "category", "a", "b", "delta")?;
        for row in &self.rows {
            writeln!(
                f,
                "{:<22} {:>8} {:>8} {:>+8}",
                row.category.label(),
                row.a,
                row.b,
                row.delta
            )?;
        }
        writeln!(
            f,
            "{:<22} {:>8} {:>8} {:>+8}",
            "total", self.total_a, self.total_b, self.delta
        )
    }
}
