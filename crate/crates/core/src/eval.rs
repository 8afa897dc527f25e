//! Naive-versus-planned evaluation sweep.
//!
//! For each scenario seed: generate a campus, pick the migration set, run
//! the flat layer-2 relocation and count its violations, then run the
//! planner and count violations on the extended topology under the mapped
//! policy set. Rows come out sorted by scenario id; identical inputs give
//! byte-identical tables and CSV.

use serde::Serialize;

use crate::checker::check_all;
use crate::extend::{apply_plan, map_policy_set, plan_extension, relocate_naive, CostModel, PlanError};
use crate::netmodel::{Flexibility, NodeKind, SiteId};
use crate::scenario::{gen_campus, migration_set, ScenarioConfig};
use crate::traversal::{policy_probe, simulate};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalRow {
    pub scenario: u64,
    pub naive_violations: usize,
    pub planned_violations: usize,
    pub plan_cost: f64,
    pub infeasible: bool,
    /// Whether any migrated host's policy path crosses a middlebox in the
    /// original network — the cases where flat relocation must break
    /// something.
    pub migrated_path_has_middlebox: bool,
    /// Present when the scenario could not be generated or planned.
    pub note: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct EvalAggregates {
    pub scenarios: usize,
    pub mean_naive_violations: f64,
    pub mean_planned_violations: f64,
    pub infeasible_count: usize,
    pub scenarios_with_middlebox_paths: usize,
    pub naive_broken_with_middlebox_paths: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct EvalResult {
    pub rows: Vec<EvalRow>,
    pub aggregates: EvalAggregates,
}

/// Runs one scenario end to end.
pub fn run_scenario(cfg: &ScenarioConfig, hop_limit: u32) -> EvalRow {
    let (t, ps) = match gen_campus(cfg) {
        Ok(pair) => pair,
        Err(e) => {
            return EvalRow {
                scenario: cfg.seed,
                naive_violations: 0,
                planned_violations: 0,
                plan_cost: 0.0,
                infeasible: true,
                migrated_path_has_middlebox: false,
                note: Some(e.to_string()),
            }
        }
    };
    let hosts = migration_set(&t, cfg);
    let site = SiteId::from("dc");
    let t = t.with_remote_site(site.clone(), Flexibility::Full);

    let migrated_path_has_middlebox = ps.policies.iter().any(|p| {
        let touches = hosts.iter().any(|h| {
            let node = &t.nodes[h];
            p.scope.contains(h)
                || node.addresses.iter().any(|a| {
                    p.class.pattern.src.as_ref() == Some(a) || p.destination == *a
                })
        });
        if !touches {
            return false;
        }
        policy_probe(p, &t)
            .ok()
            .and_then(|probe| simulate(&t, &probe.inject_at, &probe.header, hop_limit).ok())
            .is_some_and(|tr| {
                tr.sigma
                    .iter()
                    .any(|n| matches!(t.nodes[n].kind, NodeKind::Middlebox(_)))
            })
    });

    let naive_violations = match relocate_naive(&t, &hosts, &site) {
        Ok(t_naive) => check_all(&t_naive, &ps, hop_limit).total,
        Err(_) => 0,
    };

    match plan_extension(&t, &ps, &hosts, &site, &CostModel::default(), hop_limit) {
        Ok(plan) => {
            let extended = apply_plan(&t, &plan).expect("returned plans apply");
            let mapped = map_policy_set(&ps, &plan, &extended, hop_limit);
            let planned_violations = check_all(&extended, &mapped, hop_limit).total;
            EvalRow {
                scenario: cfg.seed,
                naive_violations,
                planned_violations,
                plan_cost: plan.cost.total(&CostModel::default()),
                infeasible: false,
                migrated_path_has_middlebox,
                note: None,
            }
        }
        Err(e @ PlanError::Infeasible { .. }) => EvalRow {
            scenario: cfg.seed,
            naive_violations,
            planned_violations: 0,
            plan_cost: 0.0,
            infeasible: true,
            migrated_path_has_middlebox,
            note: Some(e.to_string()),
        },
        Err(e) => EvalRow {
            scenario: cfg.seed,
            naive_violations,
            planned_violations: 0,
            plan_cost: 0.0,
            infeasible: true,
            migrated_path_has_middlebox,
            note: Some(e.to_string()),
        },
    }
}

/// Runs `trials` scenarios with seeds `base.seed, base.seed+1, ...` and
/// aggregates the rows.
pub fn run_eval(base: &ScenarioConfig, trials: u64, hop_limit: u32) -> EvalResult {
    let mut rows = Vec::new();
    for k in 0..trials {
        let cfg = ScenarioConfig {
            seed: base.seed + k,
            ..*base
        };
        rows.push(run_scenario(&cfg, hop_limit));
    }
    rows.sort_by_key(|r| r.scenario);

    let scenarios = rows.len();
    let mean = |f: &dyn Fn(&EvalRow) -> usize| -> f64 {
        if rows.is_empty() {
            0.0
        } else {
            rows.iter().map(|r| f(r) as f64).sum::<f64>() / rows.len() as f64
        }
    };
    let with_mb = rows.iter().filter(|r| r.migrated_path_has_middlebox).count();
    let broken_with_mb = rows
        .iter()
        .filter(|r| r.migrated_path_has_middlebox && r.naive_violations >= 1)
        .count();
    let aggregates = EvalAggregates {
        scenarios,
        mean_naive_violations: mean(&|r| r.naive_violations),
        mean_planned_violations: mean(&|r| r.planned_violations),
        infeasible_count: rows.iter().filter(|r| r.infeasible).count(),
        scenarios_with_middlebox_paths: with_mb,
        naive_broken_with_middlebox_paths: broken_with_mb,
    };
    EvalResult { rows, aggregates }
}

impl EvalResult {
    /// CSV with a fixed header, one row per scenario.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "scenario,naive_violations,planned_violations,plan_cost,infeasible,migrated_path_has_middlebox\n",
        );
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{:.3},{},{}\n",
                r.scenario,
                r.naive_violations,
                r.planned_violations,
                r.plan_cost,
                r.infeasible,
                r.migrated_path_has_middlebox
            ));
        }
        out
    }

    pub fn render_table(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "{:>9} {:>6} {:>8} {:>10} {:>11} {:>9}\n",
            "scenario", "naive", "planned", "plan_cost", "infeasible", "mb_paths"
        ));
        for r in &self.rows {
            out.push_str(&format!(
                "{:>9} {:>6} {:>8} {:>10.3} {:>11} {:>9}\n",
                r.scenario,
                r.naive_violations,
                r.planned_violations,
                r.plan_cost,
                r.infeasible,
                r.migrated_path_has_middlebox
            ));
        }
        let a = &self.aggregates;
        out.push_str(&format!(
            "\n{} scenario(s): naive mean {:.2} violations, planned mean {:.2}, {} infeasible\n",
            a.scenarios, a.mean_naive_violations, a.mean_planned_violations, a.infeasible_count
        ));
        out.push_str(&format!(
            "middlebox-on-path scenarios: {} of {} broke under naive relocation\n",
            a.naive_broken_with_middlebox_paths, a.scenarios_with_middlebox_paths
        ));
        out
    }
}
