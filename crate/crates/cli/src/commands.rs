use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use fracobstacle::discretization::{build_operator, DiscreteOperator, Grid};
use fracobstacle::energy::{default_rescaling, dyadic_energies, energy_report_for, normalized_level_field, ut_space_time_energy};
use fracobstacle::field::SpaceTimeField;
use fracobstacle::kernel::{
    calibrate_envelope_constant, fundamental_solution_eval, kernel_bounds_check, FundamentalSolutionSpec, KernelSpec,
    KernelVariant,
};
use fracobstacle::oracle::{complementarity_residual_with, solve_vi_with};
use fracobstacle::penalty::{choose_n, continuation_against, solve_penalized_with};
use fracobstacle::problem::ProblemSpec;
use fracobstacle::regularity::{
    best_density_point, coincidence_mask, derived_field, negative_part_modulus, positive_part_modulus, regularity_report,
    SpaceTimeNode,
};
use fracobstacle::runlog::RunLog;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use crate::config::{Config, FieldSource};
use crate::error::CliError;
use crate::output::{float, opt_float, OutDir};

/// Options shared by every subcommand after the config has been read.
pub struct Context {
    pub config: Config,
    pub workers: usize,
    pub seed: u64,
}

fn write_log(out: &OutDir, log: &RunLog) -> Result<(), CliError> {
    log.write_jsonl(out.writer("run_log.jsonl")?)?;
    Ok(())
}

fn write_field(out: &mut OutDir, field: &SpaceTimeField, stem: &str, description: &str, all_slices: bool) -> Result<(), CliError> {
    field.save(out.path(), stem, description)?;
    field.write_slice_csv(field.n_slices() - 1, out.writer(&format!("{stem}_final.csv"))?)?;
    if all_slices {
        std::fs::create_dir_all(out.file("slices"))?;
        for k in 0..field.n_slices() {
            field.write_slice_csv(k, out.writer(&format!("slices/{stem}_{k:04}.csv"))?)?;
        }
    }
    out.mark_csv()
}

fn operator(problem: &ProblemSpec) -> Result<DiscreteOperator, CliError> {
    Ok(build_operator(&problem.grid, &problem.kernel)?)
}

fn warn_all(log: &mut RunLog, warnings: &[String]) {
    for w in warnings {
        log::warn!("{w}");
        log.record("warning", json!({"message": w}));
    }
}

pub fn solve(ctx: &Context, out: &mut OutDir) -> Result<Value, CliError> {
    let cfg = &ctx.config;
    let problem = cfg.problem();
    let mut log = RunLog::new();
    warn_all(&mut log, &cfg.validate()?);
    let op = operator(&problem)?;
    if cfg.penalty.levels > 1 {
        let cont = continuation_against(&problem, cfg.penalty.epsilon, cfg.penalty.levels, cfg.penalty.shape, &cfg.stepper.newton, None)?;
        log.extend(cont.log);
        write_field(out, &cont.field, "u", "penalized solution at the finest continuation level", cfg.output.all_slices)?;
        out.csv(
            "convergence.csv",
            &["level", "epsilon", "N", "newton_iterations", "diff_to_previous", "diff_to_oracle"],
            cont.table.iter().map(|r| {
                vec![
                    r.level.to_string(),
                    float(r.epsilon),
                    float(r.n),
                    r.newton_iterations.to_string(),
                    opt_float(r.diff_to_previous),
                    String::new(),
                ]
            }),
        )?;
        write_log(out, &log)?;
        return Ok(json!({"levels": cont.table}));
    }
    let height = choose_n(&problem, &op)?;
    log.record("choose_n", json!({"N": height.n, "forcing_sup": height.forcing_sup, "rationale": height.rationale}));
    let penalty = cfg.penalty_spec(cfg.penalty.epsilon, height.n)?;
    let run = solve_penalized_with(&problem, &op, &penalty, &cfg.stepper.newton, None)?;
    log.extend(run.log);
    write_field(out, &run.field, "u", &format!("penalized solution, epsilon = {}", penalty.epsilon), cfg.output.all_slices)?;
    out.csv(
        "newton_steps.csv",
        &["k", "t", "newton_iterations"],
        run.newton_iterations
            .iter()
            .enumerate()
            .map(|(i, n)| vec![(i + 1).to_string(), float(problem.time(i + 1)), n.to_string()]),
    )?;
    let psi = problem.obstacle_field()?;
    let min_gap = run
        .field
        .values()
        .iter()
        .zip(psi.values())
        .map(|(u, p)| u - p)
        .fold(f64::INFINITY, f64::min);
    let summary = json!({
        "penalty": penalty,
        "chosen_N": height,
        "newton_iterations": run.newton_iterations.iter().sum::<usize>(),
        "halved_steps": run.halved_steps,
        "min_gap_to_obstacle": min_gap,
        "complementarity": complementarity_residual_with(&run.field, &problem, &op)?,
    });
    out.json("summary.json", &summary)?;
    write_log(out, &log)?;
    Ok(summary)
}

pub fn oracle(ctx: &Context, out: &mut OutDir) -> Result<Value, CliError> {
    let cfg = &ctx.config;
    let problem = cfg.problem();
    let mut log = RunLog::new();
    warn_all(&mut log, &cfg.validate()?);
    let op = operator(&problem)?;
    let run = solve_vi_with(&problem, &op, &cfg.stepper.psor)?;
    log.extend(run.log);
    write_field(out, &run.field, "u", "complementarity solution", cfg.output.all_slices)?;
    out.csv(
        "psor_steps.csv",
        &["k", "t", "sweeps"],
        run.sweeps
            .iter()
            .enumerate()
            .map(|(i, s)| vec![(i + 1).to_string(), float(problem.time(i + 1)), s.to_string()]),
    )?;
    let report = complementarity_residual_with(&run.field, &problem, &op)?;
    out.json("complementarity.json", &report)?;
    write_log(out, &log)?;
    Ok(json!({"complementarity": report, "sweeps": run.sweeps.iter().sum::<usize>()}))
}

pub fn compare(ctx: &Context, out: &mut OutDir) -> Result<Value, CliError> {
    let cfg = &ctx.config;
    let problem = cfg.problem();
    let mut log = RunLog::new();
    warn_all(&mut log, &cfg.validate()?);
    let op = operator(&problem)?;
    let reference = solve_vi_with(&problem, &op, &cfg.stepper.psor)?;
    log.extend(reference.log);
    let cont = continuation_against(
        &problem,
        cfg.penalty.epsilon,
        cfg.penalty.levels,
        cfg.penalty.shape,
        &cfg.stepper.newton,
        Some(&reference.field),
    )?;
    log.extend(cont.log);
    write_field(out, &reference.field, "u_oracle", "complementarity solution", false)?;
    write_field(out, &cont.field, "u", "penalized solution at the finest level", cfg.output.all_slices)?;
    out.csv(
        "convergence.csv",
        &["level", "epsilon", "N", "newton_iterations", "diff_to_previous", "diff_to_oracle"],
        cont.table.iter().map(|r| {
            vec![
                r.level.to_string(),
                float(r.epsilon),
                float(r.n),
                r.newton_iterations.to_string(),
                opt_float(r.diff_to_previous),
                opt_float(r.diff_to_reference),
            ]
        }),
    )?;
    let ratios: Vec<Option<f64>> = cont
        .table
        .windows(2)
        .map(|w| Some(w[0].diff_to_reference? / w[1].diff_to_reference?))
        .collect();
    let summary = json!({"levels": cont.table, "oracle_distance_ratios": ratios});
    out.json("summary.json", &summary)?;
    write_log(out, &log)?;
    Ok(summary)
}

/// The field analysed by `regularity` and `energy`, with the penalty width
/// it was computed at (0 for the complementarity solution).
fn analysed_field(ctx: &Context, field: Option<&Path>) -> Result<(SpaceTimeField, f64), CliError> {
    let cfg = &ctx.config;
    let problem = cfg.problem();
    cfg.validate()?;
    let epsilon = match cfg.analysis.source {
        FieldSource::Oracle => 0.0,
        FieldSource::Penalized => cfg.penalty.epsilon,
    };
    if let Some(path) = field {
        let u = SpaceTimeField::load(path).map_err(|e| CliError::Validation {
            message: format!("cannot load field {}: {e}", path.display()),
            key: None,
        })?;
        if u.grid() != &problem.grid || u.n_slices() != problem.n_steps + 1 {
            return Err(CliError::Validation {
                message: format!("field {} does not match the configured grid and step count", path.display()),
                key: Some("grid".into()),
            });
        }
        return Ok((u, epsilon));
    }
    let op = operator(&problem)?;
    let u = match cfg.analysis.source {
        FieldSource::Oracle => solve_vi_with(&problem, &op, &cfg.stepper.psor)?.field,
        FieldSource::Penalized => {
            let height = choose_n(&problem, &op)?;
            let penalty = cfg.penalty_spec(epsilon, height.n)?;
            solve_penalized_with(&problem, &op, &penalty, &cfg.stepper.newton, None)?.field
        }
    };
    Ok((u, epsilon))
}

#[derive(serde::Deserialize)]
#[serde(untagged)]
enum PointSpec {
    Node { node: usize, slice: usize },
    Coordinates { x: Vec<f64>, t: f64 },
}

fn read_points(path: &Path, grid: &Grid, dt: f64, n_slices: usize) -> Result<Vec<SpaceTimeNode>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Validation {
        message: format!("cannot read points file {}: {e}", path.display()),
        key: None,
    })?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    let specs: Vec<PointSpec> = serde_path_to_error::deserialize(de).map_err(|e| CliError::Validation {
        message: e.inner().to_string(),
        key: Some(format!("points{}", e.path())),
    })?;
    specs
        .into_iter()
        .map(|p| match p {
            PointSpec::Node { node, slice } => Ok(SpaceTimeNode { node, slice }),
            PointSpec::Coordinates { x, t } => {
                let node = grid.nearest_node(&x).ok_or_else(|| CliError::Validation {
                    message: format!("point {x:?} lies outside the grid"),
                    key: Some("points".into()),
                })?;
                let slice = (t / dt).round();
                if !(slice >= 0.0 && (slice as usize) < n_slices) {
                    return Err(CliError::Validation {
                        message: format!("time {t} lies outside the run"),
                        key: Some("points".into()),
                    });
                }
                Ok(SpaceTimeNode { node, slice: slice as usize })
            }
        })
        .collect()
}

pub fn regularity(ctx: &Context, out: &mut OutDir, field: Option<&Path>, points: Option<&Path>) -> Result<Value, CliError> {
    let cfg = &ctx.config;
    let problem = cfg.problem();
    let alpha = problem.kernel.alpha();
    let (u, epsilon) = analysed_field(ctx, field)?;
    let psi = problem.obstacle_field()?;
    let v = derived_field(&u, &psi)?;
    let mask = coincidence_mask(&u, &psi, epsilon)?;
    let opts = &cfg.analysis.regularity;
    let chosen = match points {
        Some(path) => read_points(path, &problem.grid, problem.dt(), u.n_slices())?,
        None => vec![best_density_point(&mask, alpha, opts)?.0],
    };
    let mut reports = Vec::with_capacity(chosen.len());
    for p in &chosen {
        reports.push(regularity_report(&v, &mask, *p, &problem.kernel, opts)?);
    }
    // Base points for the modulus tables: the chosen points plus a seeded
    // sample of free-boundary nodes.
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed);
    let mut candidates = mask.free_boundary_nodes();
    candidates.retain(|p| !chosen.contains(p));
    let sampled: Vec<SpaceTimeNode> = candidates
        .choose_multiple(&mut rng, cfg.analysis.modulus_points)
        .copied()
        .collect();
    let mut base: Vec<SpaceTimeNode> = chosen.iter().copied().filter(|p| p.slice > 0 && p.slice + 1 < u.n_slices()).collect();
    base.extend(sampled);
    let rho = &cfg.analysis.modulus_rho;
    let plus = positive_part_modulus(&v, &base, rho, alpha)?;
    let minus = negative_part_modulus(&v, &base, rho, alpha)?;
    out.csv(
        "modulus.csv",
        &["rho", "omega_plus", "omega_minus"],
        plus.rows
            .iter()
            .zip(&minus.rows)
            .map(|(a, b)| vec![float(a.rho), opt_float(a.omega), opt_float(b.omega)]),
    )?;
    out.csv(
        "density.csv",
        &["point", "r", "density"],
        reports
            .iter()
            .enumerate()
            .flat_map(|(i, r)| r.densities.iter().map(move |(radius, d)| vec![i.to_string(), float(*radius), float(*d)])),
    )?;
    out.csv(
        "local_energy.csv",
        &["point", "rho", "omega"],
        reports
            .iter()
            .enumerate()
            .flat_map(|(i, r)| r.modulus.iter().map(move |(rho, w)| vec![i.to_string(), float(*rho), float(*w)])),
    )?;
    out.json("mask.json", &mask.to_rle())?;
    let summary = json!({
        "reports": reports,
        "modulus_plus": plus,
        "modulus_minus": minus,
        "base_points": base,
        "seed": ctx.seed,
        "mask_tolerance": mask.tolerance,
    });
    out.json("regularity.json", &summary)?;
    Ok(summary)
}

pub fn energy(ctx: &Context, out: &mut OutDir, field: Option<&Path>) -> Result<Value, CliError> {
    let cfg = &ctx.config;
    let problem = cfg.problem();
    let alpha = problem.kernel.alpha();
    let (u, _) = analysed_field(ctx, field)?;
    let psi = problem.obstacle_field()?;
    let v = derived_field(&u, &psi)?;
    let report = energy_report_for(&v, alpha, problem.horizon)?;
    let frame = default_rescaling(&problem.grid, problem.horizon, alpha);
    let w = normalized_level_field(&v, &frame, alpha);
    let dyadic = dyadic_energies(&w, alpha, cfg.analysis.energy.max_level, &frame)?;
    dyadic.write_csv(out.writer("dyadic.csv")?)?;
    out.mark_csv()?;
    let ut = ut_space_time_energy(&v, alpha, &cfg.analysis.energy.subdomain)?;
    let summary = json!({
        "energy_inequality": report,
        "ut_space_time_energy": ut,
        "dyadic": dyadic,
    });
    out.json("energy_report.json", &summary)?;
    Ok(summary)
}

pub fn kernelcheck(ctx: &Context, out: &mut OutDir) -> Result<Value, CliError> {
    let cfg = &ctx.config;
    let kc = &cfg.analysis.kernelcheck;
    let kernel = &cfg.kernel;
    let grid = &cfg.grid;
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed);
    let point = |rng: &mut ChaCha8Rng| -> Vec<f64> {
        (0..grid.dim())
            .map(|d| rng.gen_range(grid.lower()[d] - 1.0..grid.upper()[d] + 1.0))
            .collect()
    };
    let mut pairs = Vec::with_capacity(kc.pairs);
    while pairs.len() < kc.pairs {
        let (x, y) = (point(&mut rng), point(&mut rng));
        if x != y {
            pairs.push((x, y));
        }
    }
    let bounds = kernel_bounds_check(kernel, &pairs)?;
    let mut summary = json!({
        "kernel": kernel,
        "bounds": {"checked": bounds.checked, "violations": bounds.violations.len(), "first_violations": &bounds.violations[..bounds.violations.len().min(10)]},
    });
    let mut all_passed = bounds.is_ok();
    if matches!(kernel.variant(), KernelVariant::PureFractional) {
        let (scaling, envelope) = heat_kernel_checks(kernel, kc)?;
        let scaling_ok = scaling <= kc.scaling_tolerance;
        let envelope_ok = envelope <= kc.max_envelope_constant;
        all_passed &= scaling_ok && envelope_ok;
        summary["scaling_max_relative_error"] = json!(scaling);
        summary["scaling_passed"] = json!(scaling_ok);
        summary["envelope_constant"] = json!(envelope);
        summary["envelope_passed"] = json!(envelope_ok);
    } else {
        summary["heat_kernel"] = json!("not available for this kernel variant");
    }
    summary["all_passed"] = json!(all_passed);
    if !all_passed {
        log::warn!("kernel checks failed: {summary}");
    }
    out.json("kernelcheck.json", &summary)?;
    Ok(summary)
}

/// Largest relative error of the self-similar scaling on a 20 x 20 sample,
/// and the calibrated envelope constant.
fn heat_kernel_checks(kernel: &KernelSpec, kc: &crate::config::KernelCheckSection) -> Result<(f64, f64), CliError> {
    let alpha = kernel.alpha();
    let dim = kernel.dim();
    let spec = FundamentalSolutionSpec::for_kernel(kernel, kc.quadrature_resolution, 1.0)?;
    let mut worst: f64 = 0.0;
    for i in 0..20 {
        let mut x = vec![0.0; dim];
        x[0] = 5.0 * i as f64 / 19.0;
        for j in 0..20 {
            let t = 0.05 * 100f64.powf(j as f64 / 19.0);
            let direct = fundamental_solution_eval(&spec, &x, t)?;
            let scale = t.powf(-1.0 / alpha);
            let y: Vec<f64> = x.iter().map(|c| c * scale).collect();
            let rescaled = scale.powi(dim as i32) * fundamental_solution_eval(&spec, &y, 1.0)?;
            worst = worst.max((direct - rescaled).abs() / direct);
        }
    }
    let envelope = calibrate_envelope_constant(alpha, dim, kc.quadrature_resolution, &kc.radii, &kc.times)?;
    Ok((worst, envelope))
}

struct SweepCell {
    alpha: f64,
    epsilon: f64,
    cells: usize,
    n_steps: usize,
}

struct SweepRow {
    n: Option<f64>,
    newton_iterations: Option<usize>,
    diff_to_oracle: Option<f64>,
    complementarity: Option<f64>,
    status: String,
}

fn sweep_cell_config(base: &Config, cell: &SweepCell) -> Result<Config, CliError> {
    let mut cfg = base.clone();
    cfg.kernel = KernelSpec::new(cell.alpha, base.kernel.lambda(), base.kernel.dim(), base.kernel.variant().clone())?;
    let width = base.grid.upper()[0] - base.grid.lower()[0];
    cfg.grid = Grid::new(base.grid.lower(), base.grid.upper(), width / cell.cells as f64)?.with_halo(base.grid.halo())?;
    cfg.problem.n_steps = cell.n_steps;
    cfg.penalty.epsilon = cell.epsilon;
    cfg.penalty.levels = 1;
    Ok(cfg)
}

fn run_sweep_cell(cfg: &Config, out: &mut OutDir) -> Result<SweepRow, CliError> {
    let problem = cfg.problem();
    cfg.validate()?;
    let op = operator(&problem)?;
    let height = choose_n(&problem, &op)?;
    let penalty = cfg.penalty_spec(cfg.penalty.epsilon, height.n)?;
    let run = solve_penalized_with(&problem, &op, &penalty, &cfg.stepper.newton, None)?;
    let reference = solve_vi_with(&problem, &op, &cfg.stepper.psor)?;
    let diff = run.field.sup_distance(&reference.field)?;
    let comp = complementarity_residual_with(&reference.field, &problem, &op)?;
    run.field.save(out.path(), "u", "penalized solution")?;
    reference.field.save(out.path(), "u_oracle", "complementarity solution")?;
    let mut log = run.log;
    log.extend(reference.log);
    write_log(out, &log)?;
    let row = SweepRow {
        n: Some(penalty.n),
        newton_iterations: Some(run.newton_iterations.iter().sum()),
        diff_to_oracle: Some(diff),
        complementarity: Some(comp.max_term()),
        status: "ok".into(),
    };
    out.json("summary.json", &json!({"N": penalty.n, "diff_to_oracle": diff, "complementarity": comp}))?;
    Ok(row)
}

pub fn sweep(ctx: &Context, out: &mut OutDir) -> Result<Value, CliError> {
    let cfg = &ctx.config;
    cfg.validate()?;
    let s = &cfg.analysis.sweep;
    let or = |v: &Vec<f64>, d: f64| if v.is_empty() { vec![d] } else { v.clone() };
    let base_cells = ((cfg.grid.upper()[0] - cfg.grid.lower()[0]) / cfg.grid.h()).round() as usize;
    let cells_list = if s.cells.is_empty() { vec![base_cells] } else { s.cells.clone() };
    let steps_list = if s.n_steps.is_empty() { vec![cfg.problem.n_steps] } else { s.n_steps.clone() };
    let mut cells = Vec::new();
    for &alpha in &or(&s.alpha, cfg.kernel.alpha()) {
        for &epsilon in &or(&s.epsilon, cfg.penalty.epsilon) {
            for &c in &cells_list {
                for &n_steps in &steps_list {
                    cells.push(SweepCell {
                        alpha,
                        epsilon,
                        cells: c,
                        n_steps,
                    });
                }
            }
        }
    }
    let next = AtomicUsize::new(0);
    let rows: Mutex<Vec<Option<(SweepRow, Option<CliError>)>>> = Mutex::new((0..cells.len()).map(|_| None).collect());
    let workers = ctx.workers.clamp(1, cells.len().max(1));
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= cells.len() {
                    break;
                }
                let result = (|| -> Result<SweepRow, CliError> {
                    let mut dir = OutDir::create(&out.file(&format!("cell_{i:03}")))?;
                    let cell_cfg = sweep_cell_config(cfg, &cells[i])?;
                    let mut resolved = cell_cfg.clone();
                    resolved.output.dir = dir.path().to_path_buf();
                    dir.json("resolved_config.json", &resolved)?;
                    run_sweep_cell(&cell_cfg, &mut dir).inspect_err(|e| {
                        let _ = dir.json("error.json", &e.diagnostic());
                    })
                })();
                log::info!("sweep cell {i} finished: {}", result.as_ref().map_or("error", |_| "ok"));
                let entry = match result {
                    Ok(row) => (row, None),
                    Err(e) => (
                        SweepRow {
                            n: None,
                            newton_iterations: None,
                            diff_to_oracle: None,
                            complementarity: None,
                            status: e.kind().into(),
                        },
                        Some(e),
                    ),
                };
                rows.lock().expect("sweep results lock")[i] = Some(entry);
            });
        }
    });
    let rows: Vec<(SweepRow, Option<CliError>)> = rows
        .into_inner()
        .expect("sweep results lock")
        .into_iter()
        .map(|r| r.expect("every cell ran"))
        .collect();
    out.csv(
        "sweep.csv",
        &["cell", "alpha", "epsilon", "cells", "n_steps", "N", "newton_iterations", "diff_to_oracle", "complementarity", "status"],
        rows.iter().zip(&cells).enumerate().map(|(i, ((row, _), cell))| {
            vec![
                i.to_string(),
                float(cell.alpha),
                float(cell.epsilon),
                cell.cells.to_string(),
                cell.n_steps.to_string(),
                opt_float(row.n),
                row.newton_iterations.map(|n| n.to_string()).unwrap_or_default(),
                opt_float(row.diff_to_oracle),
                opt_float(row.complementarity),
                row.status.clone(),
            ]
        }),
    )?;
    let failed = rows.iter().filter(|r| r.1.is_some()).count();
    if let Some(err) = rows.into_iter().find_map(|r| r.1) {
        log::error!("{failed} sweep cells failed");
        return Err(err);
    }
    Ok(json!({"cells": cells.len(), "failed": failed}))
}
