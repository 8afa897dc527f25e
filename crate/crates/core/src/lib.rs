//! Enterprise network modeling with middlebox traversal policies, packet
//! simulation, conformance checking, and policy-preserving extension into
//! remote data centers.
//!
//! The pieces, bottom up:
//!
//! - [`netmodel`]: the network graph — hosts, switches, routers,
//!   middleboxes (function class + configuration), sites, links, and
//!   per-node forwarding state, with a JSON document form.
//! - [`policy`]: packet classes, waypoint ordering/occurrence constraints,
//!   scopes, default-deny, and a textual DSL.
//! - [`traversal`]: deterministic packet-walk simulation producing the
//!   traversal sequence σ, the reach-set, and rewrite events.
//! - [`checker`]: evaluates a policy set against a topology and reports
//!   categorized violations.
//! - [`extend`]: proxy and mirror primitives, the naive relocation
//!   baseline, the extension planner, and the policy-preservation
//!   verifier.
//! - [`scenario`] / [`eval`]: synthetic campus generation and the
//!   naive-versus-planned comparison harness.
//! - [`fixture`]: the built-in two-tier example network and its six
//!   policies.

pub mod checker;
pub mod eval;
pub mod extend;
pub mod fixture;
pub mod netmodel;
pub mod policy;
pub mod scenario;
pub mod traversal;

pub use checker::{check_all, check_policy, compare_reports, Violation, ViolationReport};
pub use extend::{
    apply_mirror, apply_plan, apply_proxy, naive_plan, plan_extension, relocate_naive,
    verify_homomorphism, Cost, CostModel, ExtensionAction, ExtensionPlan,
};
pub use fixture::fixture_motivating_example;
pub use netmodel::{
    build_topology, node_equiv, render_topology, validate_topology, Address, Node, NodeKind,
    NodeRef, Site, SiteId, Topology,
};
pub use policy::{
    check_scope, check_waypoints, match_packet, occur, parse_policy_set, render_policy_set,
    PacketHeader, Policy, PolicyId, PolicySet,
};
pub use scenario::{gen_campus, ScenarioConfig};
pub use traversal::{
    forward_step, probe_headers, simulate, simulate_with_trace, Traversal, DEFAULT_HOP_LIMIT,
};
