//! `netext` — check network policies, plan policy-preserving extensions,
//! and run the naive-versus-planned evaluation sweep.
//!
//! Exit codes: 0 success / no violations; 1 violations found; 2 input or
//! configuration errors; 3 extension infeasible.

use std::collections::BTreeSet;
use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use netext_core::checker::check_all;
use netext_core::extend::{
    apply_plan, map_policy_set, plan_extension, verify_homomorphism, CostModel, PlanError,
};
use netext_core::netmodel::{
    build_topology, render_topology, validate_topology, Flexibility, NodeRef, Severity, SiteId,
    Topology,
};
use netext_core::policy::{parse_policy_set, render_policy_set, PolicySet};
use netext_core::scenario::ScenarioConfig;
use netext_core::{eval, fixture_motivating_example};

#[derive(Parser)]
#[command(
    name = "netext",
    version,
    about = "Network policy checking and policy-preserving extension planning"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct InputArgs {
    /// Topology document (JSON).
    #[arg(long)]
    topology: PathBuf,
    /// Policy set (DSL text).
    #[arg(long)]
    policies: PathBuf,
    /// Per-copy hop budget for simulation.
    #[arg(long, default_value_t = netext_core::DEFAULT_HOP_LIMIT)]
    hop_limit: u32,
}

#[derive(Subcommand)]
enum Command {
    /// Check a policy set against a topology and report violations.
    Check {
        #[command(flatten)]
        input: InputArgs,
        /// Emit the report as JSON instead of text.
        #[arg(long)]
        json: bool,
    },
    /// Plan a policy-preserving extension of hosts into a remote site.
    Extend {
        #[command(flatten)]
        input: InputArgs,
        /// Hosts to migrate (comma-separated node ids).
        #[arg(long, value_delimiter = ',', required = true)]
        hosts: Vec<String>,
        /// Remote data-center site id (declared on demand).
        #[arg(long)]
        site: String,
        /// Declare the remote site as restricted (no middlebox placement).
        #[arg(long)]
        restricted: bool,
        /// Where to write the plan JSON.
        #[arg(long, default_value = "plan.json")]
        plan: PathBuf,
        /// Emit verdict and report as JSON.
        #[arg(long)]
        json: bool,
        /// Cost weight per mirrored middlebox.
        #[arg(long, default_value_t = 1.0)]
        weight_mirror: f64,
        /// Cost weight per WAN crossing on a policy probe.
        #[arg(long, default_value_t = 1.0)]
        weight_wan: f64,
        /// Cost weight per proxy.
        #[arg(long, default_value_t = 1.0)]
        weight_proxy: f64,
    },
    /// Sweep generated campus scenarios: naive relocation vs the planner.
    Eval {
        /// First scenario seed.
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Number of scenarios (seeds seed..seed+trials).
        #[arg(long, default_value_t = 10)]
        trials: u64,
        #[arg(long, default_value_t = 3)]
        subnets: usize,
        #[arg(long, default_value_t = 2)]
        hosts_per_subnet: usize,
        /// Middlebox density in [0, 1].
        #[arg(long, default_value_t = 0.5)]
        density: f64,
        #[arg(long, default_value_t = 2)]
        policies_per_subnet: usize,
        /// Fraction of hosts to migrate, in (0, 1].
        #[arg(long, default_value_t = 0.5)]
        migrate: f64,
        /// Also write the rows as CSV to this path.
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Emit the result as JSON instead of a table.
        #[arg(long)]
        json: bool,
        #[arg(long, default_value_t = netext_core::DEFAULT_HOP_LIMIT)]
        hop_limit: u32,
    },
    /// Dump the built-in motivating example (topology and policies).
    Fixture {
        /// Write the topology document here (stdout when omitted).
        #[arg(long)]
        topology: Option<PathBuf>,
        /// Write the policy text here (stdout when omitted).
        #[arg(long)]
        policies: Option<PathBuf>,
    },
}

fn fail(msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {msg}");
    ExitCode::from(2)
}

fn load_inputs(input: &InputArgs) -> Result<(Topology, PolicySet), String> {
    let tdoc = fs::read_to_string(&input.topology)
        .map_err(|e| format!("cannot read {}: {e}", input.topology.display()))?;
    let topology = build_topology(&tdoc).map_err(|errs| {
        let msgs: Vec<String> = errs.iter().map(|e| e.to_string()).collect();
        format!("invalid topology:\n  {}", msgs.join("\n  "))
    })?;
    let pdoc = fs::read_to_string(&input.policies)
        .map_err(|e| format!("cannot read {}: {e}", input.policies.display()))?;
    let policies = parse_policy_set(&pdoc).map_err(|errs| {
        let msgs: Vec<String> = errs.iter().map(|e| e.to_string()).collect();
        format!("invalid policy set:\n  {}", msgs.join("\n  "))
    })?;

    let issues = validate_topology(&topology);
    let mut errors = Vec::new();
    for issue in &issues {
        match issue.severity {
            Severity::Error => errors.push(issue.message.clone()),
            Severity::Warning => eprintln!("warning: {}", issue.message),
        }
    }
    if !errors.is_empty() {
        return Err(format!(
            "topology invariants violated:\n  {}",
            errors.join("\n  ")
        ));
    }
    let problems = policies.validate_against(&topology);
    if !problems.is_empty() {
        return Err(format!(
            "policies do not fit the topology:\n  {}",
            problems.join("\n  ")
        ));
    }
    Ok((topology, policies))
}

fn cmd_check(input: InputArgs, json: bool) -> ExitCode {
    let (topology, policies) = match load_inputs(&input) {
        Ok(pair) => pair,
        Err(e) => return fail(e),
    };
    let report = check_all(&topology, &policies, input.hop_limit);
    if json {
        println!("{}", report.to_json());
    } else {
        print!("{}", report.render_text());
    }
    if !report.config_errors.is_empty() {
        ExitCode::from(2)
    } else if report.total > 0 {
        ExitCode::from(1)
    } else {
        ExitCode::SUCCESS
    }
}

fn cmd_extend(
    input: InputArgs,
    hosts: Vec<String>,
    site: String,
    restricted: bool,
    plan_path: PathBuf,
    json: bool,
    cm: CostModel,
) -> ExitCode {
    let (topology, policies) = match load_inputs(&input) {
        Ok(pair) => pair,
        Err(e) => return fail(e),
    };
    let site = SiteId::new(site);
    let flexibility = if restricted {
        Flexibility::Restricted
    } else {
        Flexibility::Full
    };
    let topology = topology.with_remote_site(site.clone(), flexibility);
    let hosts: BTreeSet<NodeRef> = hosts.into_iter().map(NodeRef::new).collect();

    let plan = match plan_extension(&topology, &policies, &hosts, &site, &cm, input.hop_limit) {
        Ok(plan) => plan,
        Err(e @ PlanError::Infeasible { .. }) => {
            eprintln!("error: {e}");
            return ExitCode::from(3);
        }
        Err(e) => return fail(e),
    };

    if let Err(e) = fs::write(&plan_path, plan.to_json()) {
        return fail(format!("cannot write {}: {e}", plan_path.display()));
    }

    let extended = match apply_plan(&topology, &plan) {
        Ok(t) => t,
        Err(e) => return fail(e),
    };
    let verdict = verify_homomorphism(&topology, &extended, &policies, &plan, input.hop_limit);
    let mapped = map_policy_set(&policies, &plan, &extended, input.hop_limit);
    let report = check_all(&extended, &mapped, input.hop_limit);

    if json {
        let out = serde_json::json!({
            "plan_file": plan_path.display().to_string(),
            "actions": plan.actions.len(),
            "cost": plan.cost,
            "verdict": verdict,
            "post_check": report,
        });
        println!("{}", serde_json::to_string_pretty(&out).expect("serializes"));
    } else {
        println!(
            "plan written to {} ({} action(s), {} mirror(s), {} prox(ies), {} WAN crossing(s))",
            plan_path.display(),
            plan.actions.len(),
            plan.cost.mirrored_boxes,
            plan.cost.proxies,
            plan.cost.wan_crossings_per_policy_probe
        );
        print!("{}", verdict.render_text());
        print!("post-check: {}", report.render_text());
    }
    if verdict.holds && report.is_clean() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}

fn cmd_eval(
    base: ScenarioConfig,
    trials: u64,
    csv: Option<PathBuf>,
    json: bool,
    hop_limit: u32,
) -> ExitCode {
    if let Err(e) = base.validate() {
        return fail(e);
    }
    let result = eval::run_eval(&base, trials, hop_limit);
    if json {
        println!(
            "{}",
            serde_json::to_string_pretty(&result).expect("result serializes")
        );
    } else {
        print!("{}", result.render_table());
    }
    if let Some(path) = csv {
        if let Err(e) = fs::write(&path, result.to_csv()) {
            return fail(format!("cannot write {}: {e}", path.display()));
        }
    }
    ExitCode::SUCCESS
}

fn cmd_fixture(topology: Option<PathBuf>, policies: Option<PathBuf>) -> ExitCode {
    let (t, ps) = fixture_motivating_example();
    let tdoc = render_topology(&t);
    let pdoc = render_policy_set(&ps);
    match topology {
        Some(path) => {
            if let Err(e) = fs::write(&path, tdoc) {
                return fail(format!("cannot write {}: {e}", path.display()));
            }
        }
        None => println!("{tdoc}"),
    }
    match policies {
        Some(path) => {
            if let Err(e) = fs::write(&path, pdoc) {
                return fail(format!("cannot write {}: {e}", path.display()));
            }
        }
        None => println!("{pdoc}"),
    }
    ExitCode::SUCCESS
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Check { input, json } => cmd_check(input, json),
        Command::Extend {
            input,
            hosts,
            site,
            restricted,
            plan,
            json,
            weight_mirror,
            weight_wan,
            weight_proxy,
        } => cmd_extend(
            input,
            hosts,
            site,
            restricted,
            plan,
            json,
            CostModel {
                weight_mirror,
                weight_wan_crossing: weight_wan,
                weight_proxy,
            },
        ),
        Command::Eval {
            seed,
            trials,
            subnets,
            hosts_per_subnet,
            density,
            policies_per_subnet,
            migrate,
            csv,
            json,
            hop_limit,
        } => cmd_eval(
            ScenarioConfig {
                seed,
                subnets,
                hosts_per_subnet,
                middlebox_density: density,
                policies_per_subnet,
                migrate_fraction: migrate,
            },
            trials,
            csv,
            json,
            hop_limit,
        ),
        Command::Fixture { topology, policies } => cmd_fixture(topology, policies),
    }
}
