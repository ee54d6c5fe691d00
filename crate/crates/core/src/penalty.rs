//! Penalized obstacle problem: implicit Euler in time, damped Newton per step.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::discretization::{build_operator, DiscreteOperator};
use crate::error::{Error, Result};
use crate::field::SpaceTimeField;
use crate::problem::ProblemSpec;
use crate::runlog::RunLog;

/// Shape of the penalty term.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PenaltyShape {
    /// `-N exp(s - eps)` for `s <= eps`, decreasing in `s`.
    Exponential,
    /// `-N (1 - exp((s - eps) / eps))` for `s <= eps`, nondecreasing in `s`.
    #[default]
    MonotoneBounded,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PenaltySpec {
    pub epsilon: f64,
    #[serde(rename = "N")]
    pub n: f64,
    #[serde(default)]
    pub shape: PenaltyShape,
}

impl PenaltySpec {
    pub fn new(epsilon: f64, n: f64, shape: PenaltyShape) -> Result<Self> {
        if !(epsilon > 0.0) || !epsilon.is_finite() {
            return Err(Error::InvalidSpec(format!("epsilon must be positive, got {epsilon}")));
        }
        if !(n > 0.0) || !n.is_finite() {
            return Err(Error::InvalidSpec(format!("N must be positive, got {n}")));
        }
        Ok(Self { epsilon, n, shape })
    }
}

/// The penalty `beta_eps(s)`, with values in `[-N, 0]`.
pub fn beta(s: f64, spec: &PenaltySpec) -> f64 {
    let eps = spec.epsilon;
    if s > eps {
        return 0.0;
    }
    match spec.shape {
        PenaltyShape::Exponential => -spec.n * (s - eps).exp(),
        PenaltyShape::MonotoneBounded => -spec.n * (-((s - eps) / eps).exp_m1()),
    }
}

/// Derivative of [`beta`] (one-sided from below at `s = eps`).
pub fn beta_prime(s: f64, spec: &PenaltySpec) -> f64 {
    let eps = spec.epsilon;
    if s > eps {
        return 0.0;
    }
    match spec.shape {
        PenaltyShape::Exponential => -spec.n * (s - eps).exp(),
        PenaltyShape::MonotoneBounded => spec.n / eps * ((s - eps) / eps).exp(),
    }
}

/// Newton controls for [`step_implicit`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NewtonOptions {
    /// Converged when `|F|_inf <= tol_factor * max(1, |prev|_inf)`, or when
    /// `|F|_inf` is down to the rounding level of its own evaluation.
    pub tol_factor: f64,
    pub max_iter: usize,
    /// Retry a failed step once as two half steps.
    pub retry_half_step: bool,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self {
            tol_factor: 1e-10,
            max_iter: 50,
            retry_half_step: true,
        }
    }
}

impl NewtonOptions {
    pub fn tolerance(&self, prev: &[f64]) -> f64 {
        self.tol_factor * prev.iter().fold(1.0f64, |m, v| m.max(v.abs()))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepOutcome {
    pub u: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
}

/// `A = I - dt L_h` as a dense matrix.
pub fn implicit_matrix(op: &DiscreteOperator, dt: f64) -> DMatrix<f64> {
    let n = op.grid().len();
    let l = op.to_dense();
    DMatrix::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.0 } - dt * l[i * n + j])
}

fn residual(a: &DMatrix<f64>, u: &DVector<f64>, psi: &[f64], prev: &[f64], dt: f64, spec: &PenaltySpec) -> DVector<f64> {
    let mut f = a * u;
    for i in 0..f.len() {
        f[i] += dt * beta(u[i] - psi[i], spec) - prev[i];
    }
    f
}

/// Size of the rounding error in evaluating the residual at `u`: a few ulps
/// of the largest term, with the penalty contributing `dt beta' |u|`.
///
/// For tiny `eps` the penalty slope `N / eps` makes this exceed the absolute
/// tolerance, and no iterate can do better.
fn rounding_floor(a: &DMatrix<f64>, u: &DVector<f64>, psi: &[f64], prev: &[f64], dt: f64, spec: &PenaltySpec) -> f64 {
    let mut floor: f64 = 0.0;
    for i in 0..u.len() {
        let slope = beta_prime(u[i] - psi[i], spec).abs();
        let term = (a[(i, i)] + dt * slope) * u[i].abs().max(psi[i].abs()) + prev[i].abs();
        floor = floor.max(term);
    }
    8.0 * f64::EPSILON * floor
}

fn sup(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// Solves `u - dt L_h u + dt beta(u - psi) = prev` by damped Newton,
/// starting from `guess` (or `prev`).
///
/// `a` is the matrix from [`implicit_matrix`] for the same `dt`. Errors
/// report time index 0; callers substitute the real index.
pub fn step_with_matrix(
    a: &DMatrix<f64>,
    prev: &[f64],
    psi: &[f64],
    guess: Option<&[f64]>,
    penalty: &PenaltySpec,
    dt: f64,
    opts: &NewtonOptions,
) -> Result<StepOutcome> {
    let n = prev.len();
    if a.nrows() != n || psi.len() != n {
        return Err(Error::Shape {
            expected: a.nrows(),
            got: n,
        });
    }
    let tol = opts.tolerance(prev);
    let eps = penalty.epsilon;
    let mut u = DVector::from_column_slice(guess.unwrap_or(prev));
    let mut f = residual(a, &u, psi, prev, dt, penalty);
    let mut res = sup(&f);
    let mut pinned = vec![false; n];
    let mut iterations = 0;
    while res > tol.max(rounding_floor(a, &u, psi, prev, dt, penalty)) {
        if iterations == opts.max_iter {
            return Err(Error::Step {
                time_index: 0,
                iterations,
                residual: res,
            });
        }
        iterations += 1;
        let mut jac = a.clone();
        for i in 0..n {
            // At the kink the one-sided slope is picked by the residual sign:
            // a positive residual means the root lies inside the penalty zone.
            let slope = if pinned[i] {
                if f[i] > 0.0 {
                    beta_prime(eps, penalty)
                } else {
                    0.0
                }
            } else {
                beta_prime(u[i] - psi[i], penalty)
            };
            jac[(i, i)] += dt * slope;
        }
        let delta = jac.lu().solve(&(-&f)).ok_or(Error::Step {
            time_index: 0,
            iterations,
            residual: res,
        })?;
        let mut lambda = 1.0;
        loop {
            let mut trial = &u + lambda * &delta;
            let trial_pinned = pin_kink_crossings(&mut trial, &u, &pinned, psi, eps);
            let f_trial = residual(a, &trial, psi, prev, dt, penalty);
            let r_trial = sup(&f_trial);
            if r_trial <= (1.0 - 1e-4 * lambda) * res || lambda < 1e-3 {
                u = trial;
                f = f_trial;
                res = r_trial;
                pinned = trial_pinned;
                break;
            }
            lambda *= 0.5;
        }
    }
    Ok(StepOutcome {
        u: u.as_slice().to_vec(),
        iterations,
        residual: res,
    })
}

/// Stops nodes whose update crosses `u - psi = eps` at the crossing and
/// returns which nodes were stopped.
///
/// Below `eps` the penalty is convex and Newton approaches its root
/// monotonically from the right; above it the equation is linear. A full
/// step across the kink can bounce between the two pieces indefinitely.
fn pin_kink_crossings(trial: &mut DVector<f64>, current: &DVector<f64>, pinned: &[bool], psi: &[f64], eps: f64) -> Vec<bool> {
    let mut out = vec![false; trial.len()];
    for i in 0..trial.len() {
        if pinned[i] {
            continue;
        }
        let before = current[i] - psi[i];
        let after = trial[i] - psi[i];
        if (before > eps && after < eps) || (before < eps && after > eps) {
            trial[i] = psi[i] + eps;
            out[i] = true;
        }
    }
    out
}

/// One implicit step on the operator `op`; see [`step_with_matrix`].
///
/// `psi_prev` seeds the Newton guess: nodes that were within `eps` of the
/// old obstacle follow its increment.
pub fn step_implicit(
    op: &DiscreteOperator,
    prev: &[f64],
    psi: &[f64],
    psi_prev: &[f64],
    penalty: &PenaltySpec,
    dt: f64,
    opts: &NewtonOptions,
) -> Result<StepOutcome> {
    if !(dt > 0.0) {
        return Err(Error::Domain(format!("time step must be positive, got {dt}")));
    }
    let n = op.grid().len();
    for len in [prev.len(), psi.len(), psi_prev.len()] {
        if len != n {
            return Err(Error::Shape { expected: n, got: len });
        }
    }
    let guess = seeded_guess(prev, psi, psi_prev, penalty.epsilon);
    step_with_matrix(&implicit_matrix(op, dt), prev, psi, Some(&guess), penalty, dt, opts)
}

fn seeded_guess(prev: &[f64], psi: &[f64], psi_prev: &[f64], eps: f64) -> Vec<f64> {
    (0..prev.len())
        .map(|i| {
            if prev[i] - psi_prev[i] <= eps {
                prev[i] + (psi[i] - psi_prev[i])
            } else {
                prev[i]
            }
        })
        .collect()
}

/// Penalty height chosen from the obstacle forcing.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PenaltyHeight {
    /// `sup |L_h psi - d_t psi|` over nodes and time levels.
    pub forcing_sup: f64,
    /// `2 max(1, forcing_sup)`.
    pub n: f64,
    pub rationale: String,
}

/// Obstacle forcing `f = -(L_h psi - d_t psi)` at every time level, with
/// `d_t psi` a central difference of width `2 dt`, and its backward time
/// difference `f_t` (slice 0 copies slice 1).
pub fn obstacle_forcing(problem: &ProblemSpec, op: &DiscreteOperator) -> Result<(SpaceTimeField, SpaceTimeField)> {
    let dt = problem.dt();
    let mut f_slices = Vec::with_capacity(problem.n_steps + 1);
    for k in 0..=problem.n_steps {
        let t = problem.time(k);
        let psi = problem.obstacle_at(t);
        let plus = problem.obstacle_at(t + dt);
        let minus = problem.obstacle_at(t - dt);
        let lpsi = op.apply(&psi)?;
        f_slices.push(
            (0..psi.len())
                .map(|i| -(lpsi[i] - (plus[i] - minus[i]) / (2.0 * dt)))
                .collect::<Vec<f64>>(),
        );
    }
    let mut ft_slices: Vec<Vec<f64>> = f_slices
        .windows(2)
        .map(|w| w[1].iter().zip(&w[0]).map(|(a, b)| (a - b) / dt).collect())
        .collect();
    ft_slices.insert(0, ft_slices[0].clone());
    Ok((
        SpaceTimeField::from_slices(&problem.grid, dt, f_slices)?,
        SpaceTimeField::from_slices(&problem.grid, dt, ft_slices)?,
    ))
}

/// `N = 2 max(1, sup |L_h psi - d_t psi|)` with a central difference in time.
pub fn choose_n(problem: &ProblemSpec, op: &DiscreteOperator) -> Result<PenaltyHeight> {
    let (forcing, _) = obstacle_forcing(problem, op)?;
    let forcing_sup = forcing.sup_norm();
    let n = 2.0 * forcing_sup.max(1.0);
    Ok(PenaltyHeight {
        forcing_sup,
        n,
        rationale: format!(
            "N = 2 * max(1, sup|L_h psi - psi_t|) = 2 * max(1, {forcing_sup:.6e}); the factor 2 leaves margin so beta can absorb the obstacle forcing"
        ),
    })
}

/// Result of a penalized solve.
#[derive(Clone, Debug)]
pub struct PenalizedRun {
    pub field: SpaceTimeField,
    /// Newton iterations per step (the sum over both halves for retried steps).
    pub newton_iterations: Vec<usize>,
    /// Steps that were retried as two half steps.
    pub halved_steps: Vec<usize>,
    pub penalty: PenaltySpec,
    pub log: RunLog,
}

/// Marches the penalized problem from `phi + eps`.
pub fn solve_penalized(problem: &ProblemSpec, penalty: &PenaltySpec, opts: &NewtonOptions) -> Result<PenalizedRun> {
    let op = build_operator(&problem.grid, &problem.kernel)?;
    solve_penalized_with(problem, &op, penalty, opts, None)
}

/// As [`solve_penalized`] with a prebuilt operator and an optional field whose
/// slices seed the Newton iterations.
pub fn solve_penalized_with(
    problem: &ProblemSpec,
    op: &DiscreteOperator,
    penalty: &PenaltySpec,
    opts: &NewtonOptions,
    warm: Option<&SpaceTimeField>,
) -> Result<PenalizedRun> {
    problem.validate()?;
    if op.grid() != &problem.grid {
        return Err(Error::InvalidGrid("operator was built for a different grid".into()));
    }
    let dt = problem.dt();
    let a = implicit_matrix(op, dt);
    let mut a_half: Option<DMatrix<f64>> = None;
    let mut log = RunLog::new();
    log.record(
        "penalized_start",
        json!({"epsilon": penalty.epsilon, "N": penalty.n, "shape": penalty.shape, "n_steps": problem.n_steps, "h": problem.grid.h(), "dt": dt}),
    );
    let mut slices = Vec::with_capacity(problem.n_steps + 1);
    slices.push(problem.initial_slice().iter().map(|v| v + penalty.epsilon).collect::<Vec<f64>>());
    let mut psi_prev = problem.obstacle_at(0.0);
    let mut newton_iterations = Vec::with_capacity(problem.n_steps);
    let mut halved_steps = Vec::new();
    for k in 1..=problem.n_steps {
        let psi = problem.obstacle_at(problem.time(k));
        let prev = slices.last().expect("initial slice");
        let guess = match warm {
            Some(w) if w.n_slices() > k && w.nodes() == prev.len() => w.slice(k).to_vec(),
            _ => seeded_guess(prev, &psi, &psi_prev, penalty.epsilon),
        };
        let outcome = match step_with_matrix(&a, prev, &psi, Some(&guess), penalty, dt, opts) {
            Ok(o) => o,
            Err(Error::Step { iterations, residual, .. }) if opts.retry_half_step => {
                log.record("step_retry", json!({"k": k, "iterations": iterations, "residual": residual}));
                let half = dt / 2.0;
                let ah = a_half.get_or_insert_with(|| implicit_matrix(op, half));
                let psi_mid = problem.obstacle_at(problem.time(k) - half);
                let first = step_with_matrix(ah, prev, &psi_mid, None, penalty, half, opts)
                    .map_err(|e| with_time_index(e, k))?;
                let second = step_with_matrix(ah, &first.u, &psi, None, penalty, half, opts)
                    .map_err(|e| with_time_index(e, k))?;
                halved_steps.push(k);
                StepOutcome {
                    iterations: first.iterations + second.iterations,
                    ..second
                }
            }
            Err(e) => return Err(with_time_index(e, k)),
        };
        log.record("step", json!({"k": k, "newton_iterations": outcome.iterations, "residual": outcome.residual}));
        newton_iterations.push(outcome.iterations);
        slices.push(outcome.u);
        psi_prev = psi;
    }
    let field = SpaceTimeField::from_slices(&problem.grid, dt, slices)?;
    Ok(PenalizedRun {
        field,
        newton_iterations,
        halved_steps,
        penalty: *penalty,
        log,
    })
}

fn with_time_index(e: Error, k: usize) -> Error {
    match e {
        Error::Step { iterations, residual, .. } => Error::Step {
            time_index: k,
            iterations,
            residual,
        },
        other => other,
    }
}

/// One level of an epsilon continuation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContinuationRow {
    pub level: usize,
    pub epsilon: f64,
    #[serde(rename = "N")]
    pub n: f64,
    pub newton_iterations: usize,
    /// `|u^{eps_{k-1}} - u^{eps_k}|_inf`, absent on the first level.
    pub diff_to_previous: Option<f64>,
    /// `|u^{eps_k} - reference|_inf` when a reference field was supplied.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diff_to_reference: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct Continuation {
    pub field: SpaceTimeField,
    pub table: Vec<ContinuationRow>,
    pub log: RunLog,
}

/// Solves at `eps_k = eps0 2^{-k}`, `k = 0..n_levels`, warm-starting each
/// level from the previous one.
pub fn continuation_solve(
    problem: &ProblemSpec,
    eps0: f64,
    n_levels: usize,
    shape: PenaltyShape,
    opts: &NewtonOptions,
) -> Result<Continuation> {
    continuation_against(problem, eps0, n_levels, shape, opts, None)
}

/// [`continuation_solve`] that also records every level's sup distance to
/// `reference` (typically the complementarity solution on the same grid).
pub fn continuation_against(
    problem: &ProblemSpec,
    eps0: f64,
    n_levels: usize,
    shape: PenaltyShape,
    opts: &NewtonOptions,
    reference: Option<&SpaceTimeField>,
) -> Result<Continuation> {
    if !(eps0 > 0.0) || n_levels == 0 {
        return Err(Error::InvalidSpec("continuation needs eps0 > 0 and at least one level".into()));
    }
    let op = build_operator(&problem.grid, &problem.kernel)?;
    let mut log = RunLog::new();
    let mut table = Vec::with_capacity(n_levels);
    let mut previous: Option<SpaceTimeField> = None;
    for level in 0..n_levels {
        let epsilon = eps0 * 0.5f64.powi(level as i32);
        let height = choose_n(problem, &op)?;
        log.record("choose_n", json!({"level": level, "N": height.n, "rationale": height.rationale}));
        let penalty = PenaltySpec::new(epsilon, height.n, shape)?;
        let run = solve_penalized_with(problem, &op, &penalty, opts, previous.as_ref())?;
        let diff_to_previous = match &previous {
            Some(p) => Some(p.sup_distance(&run.field)?),
            None => None,
        };
        let diff_to_reference = reference.map(|r| r.sup_distance(&run.field)).transpose()?;
        table.push(ContinuationRow {
            level,
            epsilon,
            n: height.n,
            newton_iterations: run.newton_iterations.iter().sum(),
            diff_to_previous,
            diff_to_reference,
        });
        log.extend(run.log);
        previous = Some(run.field);
    }
    Ok(Continuation {
        field: previous.expect("at least one level"),
        table,
        log,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(shape: PenaltyShape) -> PenaltySpec {
        PenaltySpec::new(0.01, 5.0, shape).unwrap()
    }

    #[test]
    fn exponential_shape_at_threshold() {
        let s = spec(PenaltyShape::Exponential);
        assert_eq!(beta(0.01, &s), -5.0);
        assert_eq!(beta(0.02, &s), 0.0);
    }

    #[test]
    fn monotone_shape_limits_and_slope() {
        let s = spec(PenaltyShape::MonotoneBounded);
        assert_eq!(beta(0.02, &s), 0.0);
        assert_eq!(beta(0.01, &s), 0.0);
        assert!((beta(-1e3, &s) + 5.0).abs() < 1e-12);
        let h = 1e-7;
        let slope = (beta(0.005 + h, &s) - beta(0.005 - h, &s)) / (2.0 * h);
        assert!(slope > 0.0);
        assert!((slope - beta_prime(0.005, &s)).abs() < 1e-5 * slope);
    }

    #[test]
    fn invalid_penalty_is_rejected() {
        assert!(PenaltySpec::new(0.0, 1.0, PenaltyShape::MonotoneBounded).is_err());
        assert!(PenaltySpec::new(0.1, -1.0, PenaltyShape::MonotoneBounded).is_err());
    }

    #[test]
    fn json_uses_capital_n() {
        let s: PenaltySpec = serde_json::from_str(r#"{"epsilon":0.001,"N":4}"#).unwrap();
        assert_eq!(s.shape, PenaltyShape::MonotoneBounded);
        assert_eq!(s.n, 4.0);
    }
}
