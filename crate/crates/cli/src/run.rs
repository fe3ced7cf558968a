use std::time::Instant;

use layerscat::bloch::build_alpha_quadrature;
use layerscat::cell_solver::Discretization;
use layerscat::checks::{self, manufactured_solve, CriterionReport, CutoffPath, PATH_OFFSETS};
use layerscat::linalg::GmresOptions;
use layerscat::media::{validate_assumptions, Severity};
use layerscat::oracles::{manufactured_case, sqrt_fit_oracle};
use layerscat::strip_solver::{StripOptions, StripSolution, StripSolver};
use num_complex::Complex64 as C64;
use serde_json::{json, Value};

use crate::error::CliError;
use crate::output::{Cell, OutputDir, Table};
use crate::scenario::Scenario;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CheckLevel {
    Quick,
    Full,
}

pub struct RunPlan {
    pub scenario: Scenario,
    pub check: Option<CheckLevel>,
    pub sweeps: Vec<String>,
    pub solve: bool,
}

pub struct RunOutcome {
    pub manifest: Value,
    pub failed_checks: Vec<String>,
}

fn norm(values: &[C64]) -> f64 {
    values.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
}

pub fn run(plan: &RunPlan, out: &OutputDir) -> Result<RunOutcome, CliError> {
    let start = Instant::now();
    let scenario = &plan.scenario;
    let threads = scenario.solver.threads;
    let mut manifest = json!({
        "versions": { "layerscat": layerscat::VERSION, "cli": env!("CARGO_PKG_VERSION") },
        "scenario": serde_json::to_value(scenario).expect("scenario serializes"),
        "tolerances": {
            "cutoff_tol": scenario.quadrature.cutoff_tol,
            "gmres_tol": scenario.solver.gmres_tol,
        },
        "threads": threads,
        "tables": [],
    });
    let mut tables: Vec<String> = Vec::new();
    let mut timings = serde_json::Map::new();
    let mut failed_checks = Vec::new();

    if let Some(level) = plan.check {
        let t = Instant::now();
        let reports = match level {
            CheckLevel::Quick => checks::quick_suite(),
            CheckLevel::Full => checks::full_suite(threads),
        };
        for r in &reports {
            eprintln!("{r}");
        }
        failed_checks = reports.iter().filter(|r| !r.passed).map(|r| r.id.to_string()).collect();
        tables.push(write_checks(out, &reports)?);
        manifest["checks"] = serde_json::to_value(&reports).expect("reports serialize");
        timings.insert("checks".into(), json!(t.elapsed().as_secs_f64()));
    }

    if plan.solve {
        let t = Instant::now();
        let (summary, written) = solve(scenario, out)?;
        manifest["solution"] = summary;
        tables.extend(written);
        timings.insert("solve".into(), json!(t.elapsed().as_secs_f64()));
    }

    let mut sweeps = serde_json::Map::new();
    for name in &plan.sweeps {
        let t = Instant::now();
        let (summary, written) = match name.as_str() {
            "alpha-path" => alpha_path_sweep(scenario, out)?,
            "depth-convergence" => depth_convergence_sweep(scenario, out)?,
            other => {
                return Err(CliError::Config {
                    message: format!("unknown sweep `{other}`"),
                    field: Some("sweep".into()),
                    line: None,
                    column: None,
                })
            }
        };
        sweeps.insert(name.clone(), summary);
        tables.push(written);
        timings.insert(format!("sweep:{name}"), json!(t.elapsed().as_secs_f64()));
    }
    if !sweeps.is_empty() {
        manifest["sweeps"] = Value::Object(sweeps);
    }
    timings.insert("total".into(), json!(start.elapsed().as_secs_f64()));
    manifest["timings_s"] = Value::Object(timings);
    manifest["tables"] = json!(tables);
    let path = out.root.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    out.write_bytes(&path, text.as_bytes())?;
    Ok(RunOutcome { manifest, failed_checks })
}

fn write_checks(out: &OutputDir, reports: &[CriterionReport]) -> Result<String, CliError> {
    // runtimes stay in the manifest so the table is reproducible
    let mut table = Table::new(&["id", "title", "passed", "measured", "bound", "time_limit_s"]);
    for r in reports {
        table.push(vec![
            r.id.into(),
            r.title.into(),
            (if r.passed { "true" } else { "false" }).into(),
            r.measured.into(),
            r.bound.into(),
            r.time_limit_s.into(),
        ]);
    }
    out.write_table("checks", &table)?;
    Ok("tables/checks.csv".into())
}

fn build_solver(scenario: &Scenario) -> Result<StripSolver, CliError> {
    let d = &scenario.discretization;
    let q = &scenario.quadrature;
    let mut disc = Discretization::new(d.modes, d.depth_elems, scenario.geometry.height)?;
    if let Some(p) = d.gauss_points {
        disc = disc.with_gauss_points(p)?;
    }
    if let Some(n) = d.grid {
        disc = disc.with_grid(n)?;
    }
    let medium = scenario.build_medium().map_err(config_from_core("medium"))?;
    let quad = build_alpha_quadrature(scenario.wave.k, d.modes, q.n_base, q.grading, q.cutoff_tol)?;
    let s = &scenario.solver;
    let options = StripOptions {
        threads: s.threads,
        cache_limit_bytes: s.cache_limit_mib.saturating_mul(1 << 20),
        gmres: GmresOptions { tol: s.gmres_tol, restart: s.restart, max_iter: s.max_iter },
    };
    Ok(StripSolver::new(&disc, &medium, scenario.wave.k, quad, q.cutoff_tol, options)?)
}

fn config_from_core(field: &'static str) -> impl Fn(layerscat::Error) -> CliError {
    move |e| CliError::Config { message: e.to_string(), field: Some(field.into()), line: None, column: None }
}

fn solve(scenario: &Scenario, out: &OutputDir) -> Result<(Value, Vec<String>), CliError> {
    let medium = scenario.build_medium().map_err(config_from_core("medium"))?;
    let defect = scenario.build_defect();
    let validation = validate_assumptions(&medium, &defect, None, 12);
    if let Some(item) = validation.items.iter().find(|i| i.severity == Severity::Error) {
        return Err(CliError::Config {
            message: format!("{}: {}", item.name, item.detail),
            field: Some(if item.name.starts_with("defect") { "defect" } else { "medium" }.into()),
            line: None,
            column: None,
        });
    }
    let solver = build_solver(scenario)?;
    let sol = solver.solve_perturbed(&scenario.build_source(), &defect)?;
    let mut written = Vec::new();

    let n = sol.grid.n;
    let dims = [n, n, sol.depth_points.len(), 3];
    let mut cells = Vec::new();
    for &cell in &scenario.outputs.cells {
        let values = sol.cell_samples(cell);
        out.write_field(cell, dims, &sol.depth_points, &values)?;
        cells.push(json!({ "cell": cell, "l2_sample_norm": norm(&values) }));
    }

    for (i, &z) in scenario.outputs.planes.iter().enumerate() {
        written.push(write_plane(out, &sol, i, z, scenario.outputs.plane_resolution)?);
    }

    let (nodes, worst_balance, worst_residual) = alpha_diagnostics(&solver, &sol)?;
    out.write_table("alpha_nodes", &nodes)?;
    written.push("tables/alpha_nodes.csv".into());

    let summary = json!({
        "validation": validation,
        "quadrature": {
            "nodes": sol.quad.len(),
            "weight_sum": sol.quad.weight_sum(),
            "nudged": sol.quad.nudged,
            "cutoff_arcs": sol.quad.arcs.len(),
        },
        "grid": n,
        "depth_points": sol.depth_points.len(),
        "cached_factorizations": solver.is_cached(),
        "source_norm": sol.source_norm,
        "weighted_norm": sol.weighted_norm(),
        "bound_ratio": sol.bound_ratio(),
        "defect": sol.defect,
        "max_cell_residual": worst_residual,
        "max_energy_balance_error": worst_balance,
        "cells": cells,
    });
    Ok((summary, written))
}

fn alpha_diagnostics(solver: &StripSolver, sol: &StripSolution) -> Result<(Table, f64, f64), CliError> {
    let mut table = Table::new(&[
        "node", "alpha1", "alpha2", "weight", "path", "singular_modes", "residual", "coeff_norm", "flux", "absorption",
        "balance_error",
    ]);
    let (mut worst_balance, mut worst_residual) = (0.0f64, 0.0f64);
    for (q, member) in sol.family.iter().enumerate() {
        let e = solver.energy_report(q, member, &sol.loads[q])?;
        let balance = if e.load == C64::new(0.0, 0.0) { None } else { Some(e.balance_error) };
        worst_balance = worst_balance.max(balance.unwrap_or(0.0));
        worst_residual = worst_residual.max(member.residual);
        let a = sol.quad.nodes[q];
        table.push(vec![
            q.into(),
            a[0].into(),
            a[1].into(),
            sol.quad.weights[q].into(),
            format!("{:?}", member.path).as_str().into(),
            member.singular.len().into(),
            member.residual.into(),
            member.coeff_norm().into(),
            e.flux.into(),
            e.absorption.into(),
            balance.into(),
        ]);
    }
    Ok((table, worst_balance, worst_residual))
}

fn write_plane(out: &OutputDir, sol: &StripSolution, index: usize, z: f64, resolution: usize) -> Result<String, CliError> {
    let mut table = Table::new(&["x1", "x2", "x3", "e1_re", "e1_im", "e2_re", "e2_im", "e3_re", "e3_im"]);
    let step = 2.0 * std::f64::consts::PI / resolution as f64;
    for i in 0..resolution {
        for j in 0..resolution {
            let x = [-std::f64::consts::PI + (i as f64 + 0.5) * step, -std::f64::consts::PI + (j as f64 + 0.5) * step, z];
            let e = sol.extend_field(x)?;
            let mut row: Vec<Cell> = vec![x[0].into(), x[1].into(), z.into()];
            row.extend(e.iter().flat_map(|c| [Cell::from(c.re), Cell::from(c.im)]));
            table.push(row);
        }
    }
    let name = format!("plane_{index}");
    out.write_table(&name, &table)?;
    Ok(format!("tables/{name}.csv"))
}

/// Radial path into the (1,1) cutoff circle with the Fourier truncation of the scenario.
fn alpha_path_sweep(scenario: &Scenario, out: &OutputDir) -> Result<(Value, String), CliError> {
    let path = CutoffPath { truncation: scenario.discretization.modes.max(1), ..CutoffPath::default() };
    let samples = path.sweep(&PATH_OFFSETS)?;
    // fit over the five offsets closest to the cutoff
    let tail = &samples[samples.len() - 5..];
    let betas: Vec<f64> = tail.iter().map(|s| s.beta).collect();
    let values: Vec<Vec<C64>> = tail.iter().map(|s| s.coeffs.clone()).collect();
    let fit = sqrt_fit_oracle(&betas, &values)?;
    let mut table = Table::new(&[
        "offset", "sqrt_offset", "alpha1", "alpha2", "beta", "singular_modes", "solution_norm",
        "rank_update_condition", "direct_condition", "fit_norm", "fit_relative_deviation",
    ]);
    for s in &samples {
        let model: Vec<C64> = fit.constant.iter().zip(&fit.slope).map(|(a, b)| a + b * s.beta).collect();
        let deviation: Vec<C64> = s.coeffs.iter().zip(&model).map(|(u, m)| u - m).collect();
        table.push(vec![
            s.offset.into(),
            s.offset.sqrt().into(),
            s.alpha[0].into(),
            s.alpha[1].into(),
            s.beta.into(),
            s.singular_modes.into(),
            s.solution_norm.into(),
            s.rank_update_condition.into(),
            s.direct_condition.into(),
            norm(&model).into(),
            (norm(&deviation) / norm(&s.coeffs)).into(),
        ]);
    }
    out.write_table("alpha_path", &table)?;
    let summary = json!({
        "k": path.k,
        "mode": path.mode,
        "angle": path.angle,
        "truncation": path.truncation,
        "depth_elems": path.depth_elems,
        "cutoff_tol": path.cutoff_tol,
        "fit_offsets": tail.iter().map(|s| s.offset).collect::<Vec<_>>(),
        "fit_residual": fit.residual,
        "fit_constant_norm": norm(&fit.constant),
        "fit_slope_norm": norm(&fit.slope),
    });
    Ok((summary, "tables/alpha_path.csv".into()))
}

/// Manufactured cases at depth_elems / 4, / 2 and depth_elems.
fn depth_convergence_sweep(scenario: &Scenario, out: &OutputDir) -> Result<(Value, String), CliError> {
    let finest = scenario.discretization.depth_elems.max(8);
    let levels = [finest / 4, finest / 2, finest];
    let mut table = Table::new(&["case", "depth_elems", "l2_error", "divergence_residual", "observed_order"]);
    let mut summary = serde_json::Map::new();
    for name in ["outgoing_mode", "two_mode_superposition", "gradient_null_test"] {
        let case = manufactured_case(name)?;
        let results: Vec<(f64, f64)> = levels.iter().map(|&n| manufactured_solve(&case, n)).collect::<Result<_, _>>()?;
        let mut orders = Vec::new();
        for (i, (&n, &(err, div))) in levels.iter().zip(&results).enumerate() {
            let order = (i > 0).then(|| (results[i - 1].0 / err).log2());
            orders.extend(order);
            table.push(vec![name.into(), n.into(), err.into(), div.into(), order.into()]);
        }
        summary.insert(name.into(), json!({ "errors": results.iter().map(|r| r.0).collect::<Vec<_>>(), "orders": orders }));
    }
    out.write_table("depth_convergence", &table)?;
    Ok((json!({ "depth_elems": levels, "cases": summary }), "tables/depth_convergence.csv".into()))
}
