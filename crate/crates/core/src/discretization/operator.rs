use std::f64::consts::FRAC_PI_2;
use std::io::Write;

use serde::Serialize;

use super::grid::Grid;
use crate::error::{Error, Result};
use crate::kernel::{KernelSpec, KernelVariant};
use crate::quad::GaussLegendre;

const CELL_ORDER: usize = 8;
const GRADING_LEVELS: usize = 60;

/// Translation-invariant stencil of the nonlocal operator on a [`Grid`].
///
/// Offsets cover the box `|j_d| <= extent[d]`. The ring `|j|_inf = 1` is
/// stored in second-difference form: only the axis neighbours carry weight.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DiscreteOperator {
    grid: Grid,
    extent: [usize; 2],
    weights: Vec<f64>,
    diagonal: f64,
    far_field_correction: f64,
}

impl DiscreteOperator {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// Stencil half-widths per axis (`[J, 0]` in 1D).
    pub fn extent(&self) -> [usize; 2] {
        self.extent
    }

    /// `d = sum_j w_j`.
    pub fn diagonal(&self) -> f64 {
        self.diagonal
    }

    /// Kernel mass outside the stored stencil.
    pub fn far_field_correction(&self) -> f64 {
        self.far_field_correction
    }

    /// Coefficient of `u_i` in `(L_h u)_i`, i.e. `-(d + far_field_correction)`.
    pub fn center_coefficient(&self) -> f64 {
        -(self.diagonal + self.far_field_correction)
    }

    fn row_len(&self) -> usize {
        2 * self.extent[1] + 1
    }

    /// Weight at `offset`; zero outside the stencil and at the origin.
    pub fn weight(&self, offset: [i64; 2]) -> f64 {
        let [e0, e1] = [self.extent[0] as i64, self.extent[1] as i64];
        if offset[0].abs() > e0 || offset[1].abs() > e1 || offset == [0, 0] {
            return 0.0;
        }
        self.weights[((offset[0] + e0) as usize) * self.row_len() + (offset[1] + e1) as usize]
    }

    /// Non-zero `(offset, weight)` pairs in lexicographic offset order.
    pub fn entries(&self) -> Vec<([i64; 2], f64)> {
        let [e0, e1] = [self.extent[0] as i64, self.extent[1] as i64];
        let mut out = Vec::new();
        for a in -e0..=e0 {
            for b in -e1..=e1 {
                let w = self.weight([a, b]);
                if w != 0.0 {
                    out.push(([a, b], w));
                }
            }
        }
        out
    }

    /// Applies `L_h` with zero exterior data.
    pub fn apply(&self, field: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; field.len()];
        self.apply_into(field, &mut out)?;
        Ok(out)
    }

    pub fn apply_into(&self, field: &[f64], out: &mut [f64]) -> Result<()> {
        let n = self.grid.len();
        if field.len() != n {
            return Err(Error::Shape {
                expected: n,
                got: field.len(),
            });
        }
        if out.len() != n {
            return Err(Error::Shape {
                expected: n,
                got: out.len(),
            });
        }
        let center = self.center_coefficient();
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.neighbor_sum(i, field) + center * field[i];
        }
        Ok(())
    }

    /// `sum_{j != 0} w_j u_{i+j}` over interior neighbours of node `flat`.
    pub fn neighbor_sum(&self, flat: usize, field: &[f64]) -> f64 {
        let [n0, n1] = self.grid.shape2();
        let [e0, e1] = [self.extent[0] as i64, self.extent[1] as i64];
        let row = self.row_len();
        let i0 = (flat / n1) as i64;
        let i1 = (flat % n1) as i64;
        let a_lo = (-i0).max(-e0);
        let a_hi = (n0 as i64 - 1 - i0).min(e0);
        let b_lo = (-i1).max(-e1);
        let b_hi = (n1 as i64 - 1 - i1).min(e1);
        let len = (b_hi - b_lo + 1) as usize;
        let mut acc = 0.0;
        for a in a_lo..=a_hi {
            let w_start = ((a + e0) as usize) * row + (b_lo + e1) as usize;
            let u_start = ((i0 + a) as usize) * n1 + (i1 + b_lo) as usize;
            acc += self.weights[w_start..w_start + len]
                .iter()
                .zip(&field[u_start..u_start + len])
                .map(|(w, u)| w * u)
                .sum::<f64>();
        }
        acc
    }

    /// Dense matrix of `L_h` in row-major order.
    pub fn to_dense(&self) -> Vec<f64> {
        let n = self.grid.len();
        let mut m = vec![0.0; n * n];
        let [n0, n1] = self.grid.shape2();
        let [e0, e1] = [self.extent[0] as i64, self.extent[1] as i64];
        for i in 0..n {
            let [i0, i1] = self.grid.multi_index(i);
            for a in -e0..=e0 {
                let k0 = i0 as i64 + a;
                if k0 < 0 || k0 >= n0 as i64 {
                    continue;
                }
                for b in -e1..=e1 {
                    let k1 = i1 as i64 + b;
                    if k1 < 0 || k1 >= n1 as i64 {
                        continue;
                    }
                    let k = k0 as usize * n1 + k1 as usize;
                    m[i * n + k] += self.weight([a, b]);
                }
            }
            m[i * n + i] += self.center_coefficient();
        }
        m
    }

    /// Writes `offset,weight` rows (one offset column per axis).
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let dim = self.grid.dim();
        if dim == 1 {
            w.write_record(["offset", "weight"])?;
        } else {
            w.write_record(["offset_0", "offset_1", "weight"])?;
        }
        for (off, weight) in self.entries() {
            let mut rec: Vec<String> = off[..dim].iter().map(|o| o.to_string()).collect();
            rec.push(format!("{weight:.16e}"));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// `int_rho^inf K(r) r^{n-1} dr`, the radial tail mass per unit solid angle.
pub(crate) fn radial_tail(kernel: &KernelSpec, rho: f64) -> f64 {
    let alpha = kernel.alpha();
    match kernel.variant() {
        KernelVariant::PureFractional => rho.powf(-alpha) / alpha,
        KernelVariant::Truncated { radius } => {
            if rho >= *radius {
                0.0
            } else {
                (rho.powf(-alpha) - radius.powf(-alpha)) / alpha
            }
        }
        KernelVariant::Tabulated(profile) => {
            let n = kernel.dim() as f64;
            let (radii, values) = (&profile.radii, &profile.values);
            let mut total = 0.0;
            if rho < radii[0] {
                total += values[0] * radii[0].powf(kernel.exponent()) * (rho.powf(-alpha) - radii[0].powf(-alpha)) / alpha;
            }
            for k in 0..radii.len() - 1 {
                let a = rho.max(radii[k]);
                let b = radii[k + 1];
                if a >= b {
                    continue;
                }
                // log-log linear segment: K = v_k (r / r_k)^s
                let s = (values[k + 1] / values[k]).ln() / (radii[k + 1] / radii[k]).ln();
                let q = s + n - 1.0;
                let c = values[k] * radii[k].powf(-s);
                total += if (q + 1.0).abs() < 1e-12 {
                    c * (b / a).ln()
                } else {
                    c * (b.powf(q + 1.0) - a.powf(q + 1.0)) / (q + 1.0)
                };
            }
            total
        }
    }
}

/// `int K` over the complement of the box `[-a, a] x [-b, b]` (or `[-a, a]`).
pub(crate) fn mass_outside_box(kernel: &KernelSpec, half_widths: &[f64]) -> f64 {
    match half_widths {
        [a] => 2.0 * radial_tail(kernel, *a),
        [a, b] => {
            let gl = GaussLegendre::new(32);
            let corner = (b / a).atan();
            let first = gl.composite(0.0, corner, 4, |t| radial_tail(kernel, a / t.cos()));
            let second = gl.composite(corner, FRAC_PI_2, 4, |t| radial_tail(kernel, b / t.sin()));
            4.0 * (first + second)
        }
        _ => unreachable!("validated dimension"),
    }
}

/// `int_S z_1^2 K(z) dz` over the centred cube `S` of half-width `a`.
fn near_second_moment(kernel: &KernelSpec, a: f64) -> f64 {
    let gl = GaussLegendre::new(16);
    match kernel.dim() {
        1 => 2.0 * gl.graded_from_zero(a, GRADING_LEVELS, |z| z * z * kernel.radial(z)),
        _ => {
            // half of int_S |z|^2 K over eight congruent triangles
            let radial = |rmax: f64| gl.graded_from_zero(rmax, GRADING_LEVELS, |r| r.powi(3) * kernel.radial(r));
            0.5 * 8.0 * gl.composite(0.0, std::f64::consts::FRAC_PI_4, 2, |t| radial(a / t.cos()))
        }
    }
}

/// Cell integrals `(int K, int (z_0^2 - c_0^2) K, int (z_1^2 - c_1^2) K)`
/// over the cell centred at `c` with side `h`.
fn cell_integrals(kernel: &KernelSpec, gl: &GaussLegendre, c: [f64; 2], h: f64, dim: usize) -> [f64; 3] {
    let half = 0.5 * h;
    let near_support = kernel.support_radius().is_some_and(|r| {
        let dist = (c[0] * c[0] + c[1] * c[1]).sqrt();
        (dist - r).abs() <= h
    });
    let sub = if near_support { 8 } else { 1 };
    let sh = h / sub as f64;
    let mut acc = [0.0; 3];
    match dim {
        1 => {
            for p in 0..sub {
                let lo = -half + p as f64 * sh;
                let mid = lo + 0.5 * sh;
                for (&x, &w) in gl.nodes.iter().zip(&gl.weights) {
                    let s = mid + 0.5 * sh * x;
                    let k = kernel.radial((c[0] + s).abs()) * w * 0.5 * sh;
                    acc[0] += k;
                    acc[1] += (2.0 * c[0] * s + s * s) * k;
                }
            }
        }
        _ => {
            for p in 0..sub {
                let mid0 = -half + (p as f64 + 0.5) * sh;
                for q in 0..sub {
                    let mid1 = -half + (q as f64 + 0.5) * sh;
                    for (&x, &wx) in gl.nodes.iter().zip(&gl.weights) {
                        let s0 = mid0 + 0.5 * sh * x;
                        for (&y, &wy) in gl.nodes.iter().zip(&gl.weights) {
                            let s1 = mid1 + 0.5 * sh * y;
                            let z0 = c[0] + s0;
                            let z1 = c[1] + s1;
                            let k = kernel.radial((z0 * z0 + z1 * z1).sqrt()) * wx * wy * 0.25 * sh * sh;
                            acc[0] += k;
                            acc[1] += (2.0 * c[0] * s0 + s0 * s0) * k;
                            acc[2] += (2.0 * c[1] * s1 + s1 * s1) * k;
                        }
                    }
                }
            }
        }
    }
    acc
}

/// Builds the stencil of `L_h` for `kernel` on `grid`.
///
/// Cells with `|j|_inf >= 2` get `w_j = int_cell K`. The central cube of
/// half-width `3h/2` is replaced by a centred second difference along each
/// axis, carrying the second moment of `K` over the cube plus the
/// second-moment defect of the far cells, so that the stencil reproduces
/// `L` exactly on quadratics near the evaluation point.
pub fn build_operator(grid: &Grid, kernel: &KernelSpec) -> Result<DiscreteOperator> {
    let dim = grid.dim();
    if kernel.dim() != dim {
        return Err(Error::InvalidGrid(format!(
            "kernel dimension {} does not match grid dimension {dim}",
            kernel.dim()
        )));
    }
    let h = grid.h();
    if let Some(r) = kernel.support_radius() {
        if r < 2.0 * h {
            return Err(Error::InvalidGrid(format!(
                "kernel support radius {r} is below two grid spacings ({})",
                2.0 * h
            )));
        }
    }
    let reach_halo = (grid.halo() / h).ceil() as usize;
    let reach_support = kernel
        .support_radius()
        .map(|r| (r / h + 0.5).ceil() as usize)
        .unwrap_or(usize::MAX);
    let mut extent = [0usize; 2];
    for d in 0..dim {
        extent[d] = (grid.cells()[d] - 2).min(reach_halo).min(reach_support).max(1);
    }
    let [e0, e1] = [extent[0] as i64, extent[1] as i64];
    let row = 2 * extent[1] + 1;
    let mut weights = vec![0.0; (2 * extent[0] + 1) * row];
    let gl = GaussLegendre::new(CELL_ORDER);
    let mut defect = [0.0f64; 2];
    // one quadrant suffices by reflection symmetry
    for a in 0..=e0 {
        for b in 0..=e1 {
            if a.max(b) < 2 {
                continue;
            }
            let c = [a as f64 * h, b as f64 * h];
            let [m, g0, g1] = cell_integrals(kernel, &gl, c, h, dim);
            let copies = if dim == 1 {
                2.0
            } else {
                (if a > 0 { 2.0 } else { 1.0 }) * (if b > 0 { 2.0 } else { 1.0 })
            };
            defect[0] += copies * g0;
            defect[1] += copies * g1;
            for sa in [-1i64, 1] {
                for sb in [-1i64, 1] {
                    let idx = ((sa * a + e0) as usize) * row + (sb * b + e1) as usize;
                    weights[idx] = m;
                }
            }
        }
    }
    let moment = near_second_moment(kernel, 1.5 * h);
    for d in 0..dim {
        let w = (moment + defect[d]) / (2.0 * h * h);
        if !(w >= 0.0) {
            return Err(Error::InvalidGrid(format!(
                "near-field weight along axis {d} is negative ({w:e})"
            )));
        }
        for s in [-1i64, 1] {
            let off = if d == 0 { [s, 0] } else { [0, s] };
            weights[((off[0] + e0) as usize) * row + (off[1] + e1) as usize] = w;
        }
    }
    let diagonal = weights.iter().sum();
    let half_widths: Vec<f64> = (0..dim).map(|d| (extent[d] as f64 + 0.5) * h).collect();
    let far_field_correction = mass_outside_box(kernel, &half_widths);
    Ok(DiscreteOperator {
        grid: grid.clone(),
        extent,
        weights,
        diagonal,
        far_field_correction,
    })
}

/// Applies `op` to `field`; see [`DiscreteOperator::apply`].
pub fn apply_operator(op: &DiscreteOperator, field: &[f64]) -> Result<Vec<f64>> {
    op.apply(field)
}
