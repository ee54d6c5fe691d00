use serde::{Deserialize, Serialize};

use super::grid::Grid;
use super::operator::{build_operator, radial_tail};
use crate::error::{Error, Result};
use crate::kernel::KernelSpec;
use crate::quad::{adaptive, GaussLegendre};

/// Smooth test functions for operator consistency checks.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestProfile {
    /// `exp(-|x|^2)`.
    Gaussian,
    /// `1` inside the box, `0` outside.
    Constant,
}

impl TestProfile {
    pub fn eval(self, x: &[f64]) -> f64 {
        match self {
            TestProfile::Gaussian => (-x.iter().map(|v| v * v).sum::<f64>()).exp(),
            TestProfile::Constant => 1.0,
        }
    }
}

/// One row of a consistency table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyRow {
    pub h: f64,
    pub sup_error: f64,
    pub sup_reference: f64,
    /// `log2(e_prev / e) / log2(h_prev / h)`, absent on the first row.
    pub order: Option<f64>,
}

/// `(L u)(x)` by adaptive quadrature, with `u = profile` in the box and zero
/// outside it.
pub fn reference_apply(kernel: &KernelSpec, grid: &Grid, profile: TestProfile, x: &[f64]) -> f64 {
    let u = |y: &[f64]| {
        let inside = y
            .iter()
            .enumerate()
            .all(|(d, &v)| v > grid.lower()[d] && v < grid.upper()[d]);
        if inside {
            profile.eval(y)
        } else {
            0.0
        }
    };
    let ux = u(x);
    let tol = 1e-11;
    match x.len() {
        1 => {
            let (lo, hi) = (grid.lower()[0], grid.upper()[0]);
            let pair = |s: f64| u(&[x[0] + s]) + u(&[x[0] - s]) - 2.0 * ux;
            let reach = (hi - x[0]).max(x[0] - lo);
            radial_integral(kernel, &[x[0] - lo, hi - x[0]], reach, tol, pair) - 2.0 * ux * radial_tail(kernel, reach)
        }
        _ => {
            // symmetric pairs of rays over a half circle
            let gl = GaussLegendre::new(24);
            let reach = grid
                .lower()
                .iter()
                .zip(grid.upper())
                .map(|(a, b)| (b - a) * (b - a))
                .sum::<f64>()
                .sqrt();
            let angular = |theta: f64| {
                let (c, s) = (theta.cos(), theta.sin());
                let mut breaks = Vec::new();
                for (d, dir) in [c, s].into_iter().enumerate() {
                    if dir.abs() > 1e-14 {
                        breaks.push(((grid.upper()[d] - x[d]) / dir).abs());
                        breaks.push(((grid.lower()[d] - x[d]) / dir).abs());
                    }
                }
                let pair = |r: f64| {
                    let p = [x[0] + r * c, x[1] + r * s];
                    let m = [x[0] - r * c, x[1] - r * s];
                    u(&p) + u(&m) - 2.0 * ux
                };
                radial_integral(kernel, &breaks, reach, tol, pair) - 2.0 * ux * radial_tail(kernel, reach)
            };
            gl.composite(0.0, std::f64::consts::PI, 16, angular)
        }
    }
}

/// Integrates `pair(r) K(r) r^{n-1}` over `(0, reach)`, splitting at
/// `breaks`, where `pair(r)` is the symmetric second difference of `u` at
/// distance `r`.
///
/// Below a small cutoff the second difference is replaced by its quadratic
/// model, since the direct difference drowns in rounding there.
fn radial_integral<P: Fn(f64) -> f64>(kernel: &KernelSpec, breaks: &[f64], reach: f64, tol: f64, pair: P) -> f64 {
    let n = kernel.dim() as i32;
    let mut points: Vec<f64> = breaks.iter().copied().filter(|&b| b > 0.0 && b < reach).collect();
    if let Some(r) = kernel.support_radius() {
        if r < reach {
            points.push(r);
        }
    }
    points.push(reach);
    points.sort_by(f64::total_cmp);
    points.dedup();
    let first = points[0];
    let cutoff = 1e-3 * first.min(1.0);
    let curvature = pair(cutoff) / (cutoff * cutoff);
    let gl = GaussLegendre::new(20);
    let f = |r: f64| pair(r) * kernel.radial(r) * r.powi(n - 1);
    let mut total = gl.graded_from_zero(cutoff, 80, |r| curvature * r.powi(n + 1) * kernel.radial(r));
    total += adaptive(cutoff, first, tol, 400, &f).0;
    for w in points.windows(2) {
        total += adaptive(w[0], w[1], tol, 400, &f).0;
    }
    total
}

/// Sup-norm error of the discrete operator against [`reference_apply`] on a
/// sequence of grids `(-half_width, half_width)^n` with spacings `h_list`.
///
/// The sup is taken over nodes in the inner half of the box: a profile that
/// does not vanish on the boundary meets the zero exterior in a jump, and the
/// error at the first node layer scales like `u|_{boundary} h^{-alpha}`. In
/// two dimensions only a coarse sub-lattice is compared to bound the
/// reference cost.
pub fn consistency_study(
    kernel: &KernelSpec,
    profile: TestProfile,
    half_width: f64,
    h_list: &[f64],
) -> Result<Vec<ConsistencyRow>> {
    if h_list.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::Domain("h_list must be strictly decreasing".into()));
    }
    let dim = kernel.dim();
    let mut rows: Vec<ConsistencyRow> = Vec::new();
    for &h in h_list {
        let lower = vec![-half_width; dim];
        let upper = vec![half_width; dim];
        let grid = Grid::new(&lower, &upper, h)?;
        let op = build_operator(&grid, kernel)?;
        let field: Vec<f64> = grid.all_coords().iter().map(|x| profile.eval(x)).collect();
        let lu = op.apply(&field)?;
        let stride = if dim == 1 { 1 } else { (grid.shape2()[0] / 8).max(1) };
        let mut sup_error: f64 = 0.0;
        let mut sup_reference: f64 = 0.0;
        for i in 0..grid.len() {
            let idx = grid.multi_index(i);
            if idx.iter().take(dim).any(|k| (k + 1) % stride != 0) {
                continue;
            }
            let x = grid.coords(i);
            if x.iter().any(|v| v.abs() > 0.5 * half_width + 1e-12) {
                continue;
            }
            let r = reference_apply(kernel, &grid, profile, &x);
            sup_error = sup_error.max((lu[i] - r).abs());
            sup_reference = sup_reference.max(r.abs());
        }
        let order = rows
            .last()
            .map(|prev| (prev.sup_error / sup_error).log2() / (prev.h / h).log2());
        rows.push(ConsistencyRow {
            h,
            sup_error,
            sup_reference,
            order,
        });
    }
    Ok(rows)
}
