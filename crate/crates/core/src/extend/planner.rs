//! Extension planning and policy-preservation verification.
//!
//! [`plan_extension`] starts from a conformant network and a set of hosts
//! to migrate, and assembles a plan from two per-host repair shapes:
//!
//! - **proxy hairpin** — the host keeps its exact topological slot via a
//!   proxy at its original attachment; traffic walks the untouched
//!   enterprise path, then crosses one encrypted tunnel to the host.
//! - **mirror chain** — the in-line middleboxes between the host's subnet
//!   switch and the host are cloned into the data center and spliced, in
//!   original order, between the landing tunnel and the host.
//!
//! Candidates are costed by simulating every policy probe on the extended
//! topology; the cheaper valid repair wins (ties: fewer actions, then
//! lexicographic action order; restricted sites admit only proxies). A
//! returned plan is never trusted: [`verify_homomorphism`] must hold and
//! the checker must report zero violations on the mapped policy set, or
//! the planner falls back and ultimately reports infeasibility with the
//! blocking policies.

use std::collections::{BTreeMap, BTreeSet};

use crate::checker::check_all;
use crate::netmodel::{node_equiv, NodeKind, NodeRef, SiteId, SiteKind, Topology};
use crate::policy::{occur, Policy, PolicyId, PolicySet, WaypointSpec};
use crate::traversal::{policy_probe, simulate, Outcome, Traversal};

use super::{
    anchor_switch, apply_plan, inline_stack, wan_crossings, Cost, CostModel,
    ExtensionAction, ExtensionPlan, RoutePatch,
};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PlanError {
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("the starting network violates its own policies ({0} violations); fix it first")]
    NotConformant(usize),
    #[error("no policy-preserving extension found; blocking policies: {}", blocking.iter().map(|p| p.0.as_str()).collect::<Vec<_>>().join(", "))]
    Infeasible { blocking: Vec<PolicyId> },
}

/// One policy's preservation failure.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize)]
pub struct HomFailure {
    pub policy: PolicyId,
    pub reason: String,
}

/// Outcome of the policy-preservation check.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize)]
pub struct HomVerdict {
    pub holds: bool,
    pub failures: Vec<HomFailure>,
}

impl HomVerdict {
    pub fn render_text(&self) -> String {
        if self.holds {
            "policy preservation holds\n".to_string()
        } else {
            let mut out = String::from("policy preservation FAILS\n");
            for f in &self.failures {
                out.push_str(&format!("  {}: {}\n", f.policy, f.reason));
            }
            out
        }
    }
}

fn expand(plan: &ExtensionPlan, w: &NodeRef) -> Vec<NodeRef> {
    let mut out = vec![w.clone()];
    if let Some(images) = plan.node_map.get(w) {
        out.extend(images.iter().cloned());
    }
    out.sort();
    out.dedup();
    out
}

/// Occurrences of a waypoint counted over its equivalence class.
fn class_occur(plan: &ExtensionPlan, sigma: &[NodeRef], w: &NodeRef) -> usize {
    expand(plan, w).iter().map(|c| occur(sigma, c)).sum()
}

fn class_first(plan: &ExtensionPlan, sigma: &[NodeRef], w: &NodeRef) -> Option<usize> {
    expand(plan, w)
        .iter()
        .filter_map(|c| sigma.iter().position(|n| n == c))
        .min()
}

/// Waypoint evaluation where a waypoint may be satisfied by itself or any
/// plan-created equivalent. Returns human-readable failures.
fn check_waypoints_up_to_equiv(
    plan: &ExtensionPlan,
    spec: &WaypointSpec,
    sigma: &[NodeRef],
) -> Vec<String> {
    let mut failures = Vec::new();
    let constrained: BTreeSet<&NodeRef> = spec.occurrence.iter().map(|c| &c.node).collect();
    for w in &spec.waypoints {
        if !constrained.contains(w) && class_occur(plan, sigma, w) == 0 {
            failures.push(format!("waypoint `{w}` (or an equivalent) never visited"));
        }
    }
    for c in &spec.occurrence {
        let got = class_occur(plan, sigma, &c.node);
        if !c.relation.holds(got, c.count) {
            failures.push(format!(
                "occurrence `{} {} {}` failed up to equivalence (got {got})",
                c.node,
                c.relation.symbol(),
                c.count
            ));
        }
    }
    for (a, b) in &spec.precedence {
        let ok = match (class_first(plan, sigma, a), class_first(plan, sigma, b)) {
            (Some(fa), Some(fb)) => fa < fb,
            (None, _) => spec.permits_absence(a),
            (_, None) => spec.permits_absence(b),
        };
        if !ok {
            failures.push(format!("order violated: `{a}` must precede `{b}`"));
        }
    }
    failures
}

fn mapped_scope(plan: &ExtensionPlan, p: &Policy) -> BTreeSet<NodeRef> {
    let mut scope = p.scope.clone();
    for member in &p.scope {
        if let Some(images) = plan.node_map.get(member) {
            scope.extend(images.iter().cloned());
        }
    }
    if let Some(additions) = plan.scope_additions.get(&p.id) {
        scope.extend(additions.iter().cloned());
    }
    scope
}

fn simulate_policy_probe(
    t: &Topology,
    p: &Policy,
    hop_limit: u32,
) -> Result<Traversal, String> {
    let probe = policy_probe(p, t)?;
    simulate(t, &probe.inject_at, &probe.header, hop_limit).map_err(|e| e.to_string())
}

/// Verifies that a plan preserves every policy: (a) each probe still
/// delivers in the extended topology, (b) waypoint constraints hold where
/// a waypoint may be satisfied by any plan-created equivalent node, and
/// (c) each policy's reach stays within its scope mapped through the plan
/// (original members, their images, and the declared tunnel-endpoint
/// additions).
pub fn verify_homomorphism(
    t: &Topology,
    t_ext: &Topology,
    ps: &PolicySet,
    plan: &ExtensionPlan,
    hop_limit: u32,
) -> HomVerdict {
    let mut failures = Vec::new();

    // Plan-created images must actually be equivalent to their originals.
    for (orig, images) in &plan.node_map {
        for image in images {
            if image == orig {
                continue;
            }
            if let (Some(a), Some(b)) = (t.nodes.get(orig), t_ext.nodes.get(image)) {
                if a.is_middlebox() && !node_equiv(a, b).unwrap_or(false) {
                    failures.push(HomFailure {
                        policy: PolicyId("*".to_string()),
                        reason: format!("image `{image}` is not equivalent to `{orig}`"),
                    });
                }
            }
        }
    }

    for p in &ps.policies {
        let traversal = match simulate_policy_probe(t_ext, p, hop_limit) {
            Ok(tr) => tr,
            Err(e) => {
                failures.push(HomFailure {
                    policy: p.id.clone(),
                    reason: format!("probe failed: {e}"),
                });
                continue;
            }
        };
        if !traversal.outcome.is_delivered() {
            failures.push(HomFailure {
                policy: p.id.clone(),
                reason: format!("probe no longer delivers: {:?}", traversal.outcome),
            });
            continue;
        }

        let scope = mapped_scope(plan, p);
        let dest_owner = t_ext.owner_of(&p.destination).map(|n| n.id.clone());
        let segments = traversal.segments();
        let last = segments.len() - 1;
        for (i, seg) in segments.iter().enumerate() {
            // Only the segments this policy governs: the first one for its
            // own probe; chained policies get verified by their own probes.
            if i > 0 {
                break;
            }
            for reason in check_waypoints_up_to_equiv(plan, &p.waypoints, &seg.sigma) {
                failures.push(HomFailure {
                    policy: p.id.clone(),
                    reason,
                });
            }
            let empty = BTreeSet::new();
            let reach = traversal.reach_by_epoch.get(&seg.epoch).unwrap_or(&empty);
            let leak: Vec<String> = reach
                .difference(&scope)
                .map(|n| n.0.clone())
                .collect();
            if !leak.is_empty() {
                failures.push(HomFailure {
                    policy: p.id.clone(),
                    reason: format!("reach leaks outside mapped scope: {{{}}}", leak.join(", ")),
                });
            }
            let delivered_ok = if i < last {
                dest_owner
                    .as_ref()
                    .is_some_and(|owner| *owner == traversal.rewrites[i].at)
            } else {
                matches!(&traversal.outcome, Outcome::Delivered(at)
                    if dest_owner.as_ref() == Some(at))
            };
            if !delivered_ok {
                failures.push(HomFailure {
                    policy: p.id.clone(),
                    reason: format!("not delivered to `{}`", p.destination),
                });
            }
        }
    }

    HomVerdict {
        holds: failures.is_empty(),
        failures,
    }
}

/// Rewrites a policy set for the extended topology: scopes grow by the
/// node-map images of their members and the declared tunnel-endpoint
/// additions; a mirrored waypoint is substituted by its clone when the
/// policy's probe path uses the clone instead of the original.
pub fn map_policy_set(
    ps: &PolicySet,
    plan: &ExtensionPlan,
    t_ext: &Topology,
    hop_limit: u32,
) -> PolicySet {
    let mut out = ps.clone();
    for p in &mut out.policies {
        p.scope = mapped_scope(plan, p);
        let sigma = simulate_policy_probe(t_ext, p, hop_limit)
            .map(|tr| tr.sigma)
            .unwrap_or_default();
        let substitute = |w: &NodeRef| -> NodeRef {
            if occur(&sigma, w) > 0 {
                return w.clone();
            }
            plan.node_map
                .get(w)
                .and_then(|images| images.iter().find(|i| occur(&sigma, i) > 0))
                .cloned()
                .unwrap_or_else(|| w.clone())
        };
        let spec = &mut p.waypoints;
        spec.waypoints = spec.waypoints.iter().map(&substitute).collect();
        spec.precedence = spec
            .precedence
            .iter()
            .map(|(a, b)| (substitute(a), substitute(b)))
            .collect();
        for c in &mut spec.occurrence {
            c.node = substitute(&c.node);
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Repair {
    Proxy,
    MirrorChain,
}

struct HostPlanInfo {
    original_attachment: NodeRef,
    anchor: NodeRef,
    stack: Vec<NodeRef>,
}

fn assemble(
    t: &Topology,
    hosts: &BTreeMap<NodeRef, HostPlanInfo>,
    site: &SiteId,
    choices: &BTreeMap<NodeRef, Repair>,
) -> ExtensionPlan {
    let mut plan = ExtensionPlan::default();
    let mut taken: BTreeSet<NodeRef> = t.nodes.keys().cloned().collect();
    let fresh = |base: String, taken: &mut BTreeSet<NodeRef>| -> NodeRef {
        for k in 1.. {
            let candidate = NodeRef::new(format!("{base}{k}"));
            if taken.insert(candidate.clone()) {
                return candidate;
            }
        }
        unreachable!()
    };

    for host in hosts.keys() {
        plan.actions.push(ExtensionAction::Relocate {
            host: host.clone(),
            to_site: site.clone(),
        });
        plan.node_map
            .entry(host.clone())
            .or_default()
            .insert(host.clone());
    }

    let all_addresses = t.all_addresses();
    for (host, info) in hosts {
        let host_addrs: Vec<_> = t.nodes[host].addresses.iter().cloned().collect();
        match choices[host] {
            Repair::Proxy => {
                plan.actions.push(ExtensionAction::Proxy {
                    host: host.clone(),
                    original_attachment: info.original_attachment.clone(),
                    enterprise_end: NodeRef::new(format!("{}_pxe", host.0)),
                    remote_end: NodeRef::new(format!("{}_pxr", host.0)),
                });
            }
            Repair::MirrorChain => {
                // Clone the bypassed in-line boxes and splice them, in
                // path order, between the landing tunnel and the host.
                let mut clones = Vec::new();
                for mb in &info.stack {
                    let new_ref = fresh(format!("{}_m", mb.0), &mut taken);
                    plan.actions.push(ExtensionAction::Mirror {
                        middlebox: mb.clone(),
                        to_site: site.clone(),
                        new_ref: new_ref.clone(),
                    });
                    plan.node_map
                        .entry(mb.clone())
                        .or_default()
                        .insert(new_ref.clone());
                    clones.push(new_ref);
                }
                let wan_a = NodeRef::new(format!("te_{}", host.0));
                let wan_b = NodeRef::new(format!("te_{}_r", host.0));
                let landing = clones.first().cloned().unwrap_or_else(|| host.clone());
                plan.actions.push(ExtensionAction::Tunnel {
                    a: wan_a.clone(),
                    attach_a: info.anchor.clone(),
                    b: wan_b.clone(),
                    attach_b: landing,
                    encrypted: true,
                });
                // Patch cables between consecutive clones and to the host.
                let mut tails: Vec<(NodeRef, NodeRef)> = Vec::new(); // (toward-host TE, toward-wan ingress)
                for (i, clone) in clones.iter().enumerate() {
                    let pa = NodeRef::new(format!("pt_{}", clone.0));
                    let pb = NodeRef::new(format!("pt_{}_r", clone.0));
                    let next_attach = clones
                        .get(i + 1)
                        .cloned()
                        .unwrap_or_else(|| host.clone());
                    plan.actions.push(ExtensionAction::Tunnel {
                        a: pa.clone(),
                        attach_a: clone.clone(),
                        b: pb.clone(),
                        attach_b: next_attach,
                        encrypted: false,
                    });
                    tails.push((pa, pb));
                }
                plan.actions.push(ExtensionAction::RouteFix {
                    node: info.anchor.clone(),
                    patches: host_addrs
                        .iter()
                        .map(|addr| RoutePatch::Set {
                            addr: addr.clone(),
                            next: wan_a.clone(),
                        })
                        .collect(),
                });
                // Each clone: host addresses toward the host, everything
                // else back toward the enterprise.
                for (i, clone) in clones.iter().enumerate() {
                    let toward_host = tails[i].0.clone();
                    let toward_wan = if i == 0 {
                        wan_b.clone()
                    } else {
                        tails[i - 1].1.clone()
                    };
                    let mut patches: Vec<RoutePatch> = host_addrs
                        .iter()
                        .map(|addr| RoutePatch::Set {
                            addr: addr.clone(),
                            next: toward_host.clone(),
                        })
                        .collect();
                    patches.extend(
                        all_addresses
                            .iter()
                            .filter(|a| !host_addrs.contains(a))
                            .map(|addr| RoutePatch::Set {
                                addr: addr.clone(),
                                next: toward_wan.clone(),
                            }),
                    );
                    plan.actions.push(ExtensionAction::RouteFix {
                        node: clone.clone(),
                        patches,
                    });
                }
                // Host sends back through the chain (or straight over the
                // tunnel when there is no chain).
                let gw = tails
                    .last()
                    .map(|(_, pb)| pb.clone())
                    .unwrap_or_else(|| wan_b.clone());
                plan.actions.push(ExtensionAction::RouteFix {
                    node: host.clone(),
                    patches: vec![RoutePatch::SetGateway { next: gw }],
                });
            }
        }
    }
    plan
}

struct Evaluated {
    plan: ExtensionPlan,
    extended: Topology,
    verdict: HomVerdict,
    checker_clean: bool,
    total_cost: f64,
}

fn evaluate(
    t: &Topology,
    ps: &PolicySet,
    cm: &CostModel,
    mut plan: ExtensionPlan,
    hop_limit: u32,
) -> Result<Evaluated, String> {
    let extended = apply_plan(t, &plan).map_err(|e| e.to_string())?;

    let mut cost = Cost {
        mirrored_boxes: plan.mirrors().count(),
        proxies: plan
            .actions
            .iter()
            .filter(|a| matches!(a, ExtensionAction::Proxy { .. }))
            .count(),
        wan_crossings_per_policy_probe: 0,
    };

    // Scope additions: tunnel endpoints each policy's probe now touches,
    // attributed per governed segment; WAN cost from the delivered walks.
    let mut additions: BTreeMap<PolicyId, BTreeSet<NodeRef>> = BTreeMap::new();
    for p in &ps.policies {
        let tr = simulate_policy_probe(&extended, p, hop_limit)?;
        cost.wan_crossings_per_policy_probe += wan_crossings(&extended, &tr.sigma);
        let segments = tr.segments();
        for (i, seg) in segments.iter().enumerate() {
            let governing = if i == 0 {
                Some(p.id.clone())
            } else {
                match crate::policy::match_packet(ps, &seg.header, &seg.origin) {
                    Ok(crate::policy::MatchOutcome::Policy(q)) => Some(q.id.clone()),
                    _ => None,
                }
            };
            let Some(gov) = governing else { continue };
            let empty = BTreeSet::new();
            let reach = tr.reach_by_epoch.get(&seg.epoch).unwrap_or(&empty);
            let tes: BTreeSet<NodeRef> = reach
                .iter()
                .filter(|n| {
                    extended
                        .nodes
                        .get(*n)
                        .is_some_and(|x| x.kind == NodeKind::TunnelEndpoint)
                })
                .cloned()
                .collect();
            if !tes.is_empty() {
                additions.entry(gov).or_default().extend(tes);
            }
        }
    }
    plan.scope_additions = additions;
    plan.cost = cost;

    let verdict = verify_homomorphism(t, &extended, ps, &plan, hop_limit);
    let mapped = map_policy_set(ps, &plan, &extended, hop_limit);
    let report = check_all(&extended, &mapped, hop_limit);
    let total_cost = plan.cost.total(cm);
    Ok(Evaluated {
        plan,
        extended,
        verdict,
        checker_clean: report.is_clean(),
        total_cost,
    })
}

fn candidate_rank(e: &Evaluated) -> (f64, usize, Vec<String>) {
    (
        e.total_cost,
        e.plan.actions.len(),
        e.plan
            .actions
            .iter()
            .map(|a| serde_json::to_string(a).expect("action serializes"))
            .collect(),
    )
}

fn better(a: &Evaluated, b: &Evaluated) -> bool {
    let (ca, na, sa) = candidate_rank(a);
    let (cb, nb, sb) = candidate_rank(b);
    (ca, na, sa) < (cb, nb, sb)
}

/// Plans a policy-preserving extension of `hosts` into `site`.
///
/// The starting pair must check clean. The returned plan has been applied,
/// verified with [`verify_homomorphism`], and re-checked with the mapped
/// policy set; when no candidate passes, the result is
/// [`PlanError::Infeasible`] naming the blocking policies.
pub fn plan_extension(
    t: &Topology,
    ps: &PolicySet,
    hosts: &BTreeSet<NodeRef>,
    site: &SiteId,
    cm: &CostModel,
    hop_limit: u32,
) -> Result<ExtensionPlan, PlanError> {
    cm.validate().map_err(PlanError::Invalid)?;
    let restricted = match t.sites.get(site) {
        None => return Err(PlanError::Invalid(format!("site `{site}` is not declared"))),
        Some(s) if s.kind != SiteKind::RemoteDc => {
            return Err(PlanError::Invalid(format!(
                "site `{site}` is not a remote data center"
            )))
        }
        Some(s) => s.flexibility == crate::netmodel::Flexibility::Restricted,
    };
    for h in hosts {
        match t.nodes.get(h) {
            None => return Err(PlanError::Invalid(format!("`{h}` does not exist"))),
            Some(n) if !n.is_host() => {
                return Err(PlanError::Invalid(format!(
                    "`{h}` is a {}, not a host",
                    n.kind.label()
                )))
            }
            Some(n) => match t.sites.get(&n.site) {
                Some(s) if s.kind == SiteKind::Enterprise => {}
                _ => {
                    return Err(PlanError::Invalid(format!(
                        "`{h}` is not in the enterprise site"
                    )))
                }
            },
        }
    }

    let baseline = check_all(t, ps, hop_limit);
    if !baseline.is_clean() {
        return Err(PlanError::NotConformant(baseline.total));
    }

    if hosts.is_empty() {
        return Ok(ExtensionPlan::default());
    }

    let policies_touching = |h: &NodeRef| -> Vec<PolicyId> {
        ps.policies
            .iter()
            .filter(|p| {
                p.scope.contains(h)
                    || p.class.origin.as_ref() == Some(h)
                    || t.nodes[h].addresses.iter().any(|a| {
                        p.class.pattern.src.as_ref() == Some(a)
                            || p.class.pattern.dst.as_ref() == Some(a)
                            || p.destination == *a
                    })
            })
            .map(|p| p.id.clone())
            .collect()
    };

    let mut infos: BTreeMap<NodeRef, HostPlanInfo> = BTreeMap::new();
    for h in hosts {
        let neighbors = t.neighbors(h);
        if neighbors.len() != 1 {
            // A multi-homed host has no single hairpin point and no unique
            // in-line stack to mirror.
            return Err(PlanError::Infeasible {
                blocking: policies_touching(h),
            });
        }
        let Some(anchor) = anchor_switch(t, h) else {
            return Err(PlanError::Infeasible {
                blocking: policies_touching(h),
            });
        };
        let stack = inline_stack(t, h, &anchor);
        if stack.iter().any(|n| !t.nodes[n].is_middlebox()) {
            return Err(PlanError::Infeasible {
                blocking: policies_touching(h),
            });
        }
        infos.insert(
            h.clone(),
            HostPlanInfo {
                original_attachment: neighbors[0].clone(),
                anchor,
                stack,
            },
        );
    }

    // Greedy per-host choice: try each repair with undecided hosts held at
    // proxy (the path-preserving default), keep the cheaper valid one.
    let mut choices: BTreeMap<NodeRef, Repair> = BTreeMap::new();
    let mut last_failure: Option<HomVerdict> = None;
    for host in infos.keys() {
        let options: &[Repair] = if restricted {
            &[Repair::Proxy]
        } else {
            &[Repair::Proxy, Repair::MirrorChain]
        };
        let mut best: Option<(Repair, Evaluated)> = None;
        for &option in options {
            let mut trial: BTreeMap<NodeRef, Repair> =
                infos.keys().map(|h| (h.clone(), Repair::Proxy)).collect();
            for (h, c) in &choices {
                trial.insert(h.clone(), *c);
            }
            trial.insert(host.clone(), option);
            let plan = assemble(t, &infos, site, &trial);
            match evaluate(t, ps, cm, plan, hop_limit) {
                Ok(e) if e.verdict.holds && e.checker_clean => {
                    if best.as_ref().is_none_or(|(_, b)| better(&e, b)) {
                        best = Some((option, e));
                    }
                }
                Ok(e) => last_failure = Some(e.verdict),
                Err(_) => {}
            }
        }
        match best {
            Some((option, _)) => {
                choices.insert(host.clone(), option);
            }
            None => {
                let blocking = match last_failure {
                    Some(v) if !v.failures.is_empty() => {
                        let mut ids: Vec<PolicyId> =
                            v.failures.into_iter().map(|f| f.policy).collect();
                        ids.sort();
                        ids.dedup();
                        ids
                    }
                    _ => policies_touching(host),
                };
                return Err(PlanError::Infeasible { blocking });
            }
        }
    }

    let final_plan = assemble(t, &infos, site, &choices);
    match evaluate(t, ps, cm, final_plan, hop_limit) {
        Ok(e) if e.verdict.holds && e.checker_clean => {
            debug_assert!(
                verify_homomorphism(t, &e.extended, ps, &e.plan, hop_limit).holds,
                "planner contract: returned plans verify"
            );
            Ok(e.plan)
        }
        Ok(e) => Err(PlanError::Infeasible {
            blocking: {
                let mut ids: Vec<PolicyId> =
                    e.verdict.failures.into_iter().map(|f| f.policy).collect();
                ids.sort();
                ids.dedup();
                ids
            },
        }),
        Err(msg) => Err(PlanError::Invalid(msg)),
    }
}
