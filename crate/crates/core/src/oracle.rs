//! Reference solver: one linear complementarity problem per implicit step,
//! solved by projected successive over-relaxation (PSOR).

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::discretization::{build_operator, DiscreteOperator};
use crate::error::{Error, Result};
use crate::field::SpaceTimeField;
use crate::problem::ProblemSpec;
use crate::runlog::RunLog;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PsorOptions {
    pub omega: f64,
    /// Stop when `|min(u - psi, r)|_inf <= tol`.
    pub tol: f64,
    pub max_sweeps: usize,
    /// Sweeps between residual evaluations.
    pub check_every: usize,
}

impl Default for PsorOptions {
    fn default() -> Self {
        Self {
            omega: 1.5,
            tol: 1e-8,
            max_sweeps: 100_000,
            check_every: 4,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LcpStep {
    pub u: Vec<f64>,
    pub sweeps: usize,
    pub residual: f64,
    /// Natural residual at every check, starting with the initial iterate.
    pub history: Vec<f64>,
}

/// Natural residual `max_i |min(u_i - psi_i, r_i)|` with
/// `r = u - dt L_h u - prev`.
pub fn natural_residual(op: &DiscreteOperator, u: &[f64], prev: &[f64], psi: &[f64], dt: f64) -> f64 {
    let diag = 1.0 - dt * op.center_coefficient();
    (0..u.len())
        .map(|i| {
            let r = diag * u[i] - dt * op.neighbor_sum(i, u) - prev[i];
            (u[i] - psi[i]).min(r).abs()
        })
        .fold(0.0, f64::max)
}

/// Solves `u >= psi`, `r >= 0`, `(u - psi) r = 0` with `r = u - dt L_h u - prev`.
///
/// Sweeps run in lexicographic node order starting from `max(prev, psi)`;
/// every update is clamped at the obstacle, so `u >= psi` holds exactly.
/// Errors report time index 0; callers substitute the real index.
pub fn step_lcp(
    op: &DiscreteOperator,
    prev: &[f64],
    psi: &[f64],
    dt: f64,
    opts: &PsorOptions,
) -> Result<LcpStep> {
    if !(dt > 0.0) {
        return Err(Error::Domain(format!("time step must be positive, got {dt}")));
    }
    let n = op.grid().len();
    for len in [prev.len(), psi.len()] {
        if len != n {
            return Err(Error::Shape { expected: n, got: len });
        }
    }
    let diag = 1.0 - dt * op.center_coefficient();
    let mut u: Vec<f64> = prev.iter().zip(psi).map(|(p, q)| p.max(*q)).collect();
    let check_every = opts.check_every.max(1);
    let mut residual = natural_residual(op, &u, prev, psi, dt);
    let mut history = vec![residual];
    let mut sweeps = 0;
    while residual > opts.tol {
        if sweeps >= opts.max_sweeps {
            return Err(Error::Oracle {
                time_index: 0,
                sweeps,
                residual,
            });
        }
        for _ in 0..check_every {
            for i in 0..n {
                let gs = (prev[i] + dt * op.neighbor_sum(i, &u)) / diag;
                u[i] = (u[i] + opts.omega * (gs - u[i])).max(psi[i]);
            }
            sweeps += 1;
        }
        residual = natural_residual(op, &u, prev, psi, dt);
        history.push(residual);
    }
    Ok(LcpStep {
        u,
        sweeps,
        residual,
        history,
    })
}

#[derive(Clone, Debug)]
pub struct OracleRun {
    pub field: SpaceTimeField,
    pub sweeps: Vec<usize>,
    pub log: RunLog,
}

/// Marches the obstacle problem from `phi` with [`step_lcp`].
pub fn solve_vi(problem: &ProblemSpec, opts: &PsorOptions) -> Result<OracleRun> {
    let op = build_operator(&problem.grid, &problem.kernel)?;
    solve_vi_with(problem, &op, opts)
}

pub fn solve_vi_with(problem: &ProblemSpec, op: &DiscreteOperator, opts: &PsorOptions) -> Result<OracleRun> {
    problem.validate()?;
    if op.grid() != &problem.grid {
        return Err(Error::InvalidGrid("operator was built for a different grid".into()));
    }
    let dt = problem.dt();
    let mut log = RunLog::new();
    log.record(
        "oracle_start",
        json!({"omega": opts.omega, "tol": opts.tol, "n_steps": problem.n_steps, "h": problem.grid.h(), "dt": dt}),
    );
    let mut slices = Vec::with_capacity(problem.n_steps + 1);
    slices.push(problem.initial_slice());
    let mut sweeps = Vec::with_capacity(problem.n_steps);
    for k in 1..=problem.n_steps {
        let psi = problem.obstacle_at(problem.time(k));
        let step = step_lcp(op, slices.last().expect("initial slice"), &psi, dt, opts).map_err(|e| match e {
            Error::Oracle { sweeps, residual, .. } => Error::Oracle {
                time_index: k,
                sweeps,
                residual,
            },
            other => other,
        })?;
        log.record("step", json!({"k": k, "sweeps": step.sweeps, "residual": step.residual}));
        sweeps.push(step.sweeps);
        slices.push(step.u);
    }
    Ok(OracleRun {
        field: SpaceTimeField::from_slices(&problem.grid, dt, slices)?,
        sweeps,
        log,
    })
}

/// Complementarity diagnostics of a field against a problem.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComplementarityReport {
    /// `max (psi - u)^+` over all slices.
    pub max_violation_u: f64,
    /// `max (-r)^+` over slices `1..`.
    pub max_violation_r: f64,
    /// `max |(u - psi) r|` over slices `1..`.
    pub max_product: f64,
    /// `max(1, sup|u|, sup|psi|)`, the scale the three numbers compare against.
    pub scale: f64,
}

impl ComplementarityReport {
    pub fn max_term(&self) -> f64 {
        self.max_violation_u.max(self.max_violation_r).max(self.max_product)
    }
}

/// Evaluates the discrete complementarity conditions with the step residual
/// `r_k = u_k - dt L_h u_k - u_{k-1}`.
pub fn complementarity_residual(field: &SpaceTimeField, problem: &ProblemSpec) -> Result<ComplementarityReport> {
    let op = build_operator(&problem.grid, &problem.kernel)?;
    complementarity_residual_with(field, problem, &op)
}

pub fn complementarity_residual_with(
    field: &SpaceTimeField,
    problem: &ProblemSpec,
    op: &DiscreteOperator,
) -> Result<ComplementarityReport> {
    if field.grid() != &problem.grid || field.n_slices() != problem.n_steps + 1 {
        return Err(Error::Shape {
            expected: problem.grid.len() * (problem.n_steps + 1),
            got: field.values().len(),
        });
    }
    let dt = field.dt();
    let mut report = ComplementarityReport {
        max_violation_u: 0.0,
        max_violation_r: 0.0,
        max_product: 0.0,
        scale: 1.0f64.max(field.sup_norm()),
    };
    let mut lu = vec![0.0; field.nodes()];
    for k in 0..field.n_slices() {
        let psi = problem.obstacle_at(problem.time(k));
        let u = field.slice(k);
        for (a, b) in u.iter().zip(&psi) {
            report.max_violation_u = report.max_violation_u.max(b - a);
            report.scale = report.scale.max(b.abs());
        }
        if k == 0 {
            continue;
        }
        let prev = field.slice(k - 1);
        op.apply_into(u, &mut lu)?;
        for i in 0..u.len() {
            let r = u[i] - dt * lu[i] - prev[i];
            report.max_violation_r = report.max_violation_r.max(-r);
            report.max_product = report.max_product.max(((u[i] - psi[i]) * r).abs());
        }
    }
    Ok(report)
}
