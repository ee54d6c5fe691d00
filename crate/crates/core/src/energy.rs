//! Fractional Sobolev energies and the level-set machinery of the De Giorgi
//! iteration, evaluated on grid fields.

use serde::{Deserialize, Serialize};

use crate::discretization::Grid;
use crate::error::{Error, Result};
use crate::field::SpaceTimeField;
use crate::regularity::linear_regression;

/// Set of nodes a seminorm is summed over.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Subdomain {
    #[default]
    Whole,
    Ball {
        center: Vec<f64>,
        radius: f64,
    },
    Box {
        lower: Vec<f64>,
        upper: Vec<f64>,
    },
}

impl Subdomain {
    /// Indices of the grid nodes inside the subdomain; errors if the
    /// subdomain is not contained in the closed box.
    pub fn nodes(&self, grid: &Grid) -> Result<Vec<usize>> {
        let slack = 1e-9;
        let coords = grid.all_coords();
        let check = |lo: &[f64], hi: &[f64]| -> Result<()> {
            let ok = lo.len() == grid.dim()
                && hi.len() == grid.dim()
                && (0..grid.dim()).all(|d| lo[d] >= grid.lower()[d] - slack && hi[d] <= grid.upper()[d] + slack && lo[d] <= hi[d]);
            if ok {
                Ok(())
            } else {
                Err(Error::Domain(format!("subdomain {self:?} is not inside the grid box")))
            }
        };
        Ok(match self {
            Subdomain::Whole => (0..coords.len()).collect(),
            Subdomain::Ball { center, radius } => {
                let lo: Vec<f64> = center.iter().map(|c| c - radius).collect();
                let hi: Vec<f64> = center.iter().map(|c| c + radius).collect();
                check(&lo, &hi)?;
                (0..coords.len())
                    .filter(|&i| {
                        let d2: f64 = coords[i].iter().zip(center).map(|(a, b)| (a - b) * (a - b)).sum();
                        d2.sqrt() <= radius * (1.0 + 1e-12)
                    })
                    .collect()
            }
            Subdomain::Box { lower, upper } => {
                check(lower, upper)?;
                (0..coords.len())
                    .filter(|&i| coords[i].iter().enumerate().all(|(d, x)| *x >= lower[d] - slack && *x <= upper[d] + slack))
                    .collect()
            }
        })
    }
}

/// `(2 - alpha) sum_{x != y} (v(x) - v(y))^2 / |x - y|^{n + alpha} h^{2n}`
/// over node pairs of the subdomain.
pub fn sobolev_seminorm(slice: &[f64], grid: &Grid, alpha: f64, subdomain: &Subdomain) -> Result<f64> {
    if slice.len() != grid.len() {
        return Err(Error::Shape {
            expected: grid.len(),
            got: slice.len(),
        });
    }
    let nodes = subdomain.nodes(grid)?;
    Ok(seminorm_on(slice, grid, alpha, &nodes))
}

fn seminorm_on(slice: &[f64], grid: &Grid, alpha: f64, nodes: &[usize]) -> f64 {
    let exponent = grid.dim() as f64 + alpha;
    let idx: Vec<[usize; 2]> = nodes.iter().map(|&i| grid.multi_index(i)).collect();
    let h = grid.h();
    let mut total = 0.0;
    for (a, &i) in nodes.iter().enumerate() {
        let mut row = 0.0;
        for (b, &j) in nodes.iter().enumerate() {
            if a == b {
                continue;
            }
            let diff = slice[i] - slice[j];
            if diff == 0.0 {
                continue;
            }
            let d0 = idx[a][0] as f64 - idx[b][0] as f64;
            let d1 = idx[a][1] as f64 - idx[b][1] as f64;
            let dist = h * (d0 * d0 + d1 * d1).sqrt();
            row += diff * diff / dist.powf(exponent);
        }
        total += row;
    }
    let vol = grid.cell_volume();
    (2.0 - alpha) * total * vol * vol
}

/// Both sides of the local energy inequality for the truncation `(w - k)^+`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    /// `max_t sum_x (zeta (w - k)^+)^2 h^n`.
    pub lhs_max_term: f64,
    /// `dt sum_t` of the seminorm of `zeta (w - k)^+`.
    pub lhs_seminorm_term: f64,
    /// `dt sum_t sum_x h^n [((w-k)^+)^2 + (w-k)^+)(|d_t zeta| + 1) + 1_{w > k}]`, with constant 1.
    pub rhs_value: f64,
    /// `(lhs_max_term + lhs_seminorm_term) / rhs_value`; absent when the RHS vanishes.
    pub ratio: Option<f64>,
    pub level: f64,
    pub alpha: f64,
    pub constant: f64,
}

/// Evaluates the energy inequality terms; time sums run over slices
/// `1..n` with backward differences for `d_t zeta`.
pub fn energy_inequality_terms(w: &SpaceTimeField, zeta: &SpaceTimeField, level: f64, alpha: f64) -> Result<EnergyReport> {
    w.check_compatible(zeta)?;
    if !(level >= 0.0) {
        return Err(Error::Domain(format!("level must be nonnegative, got {level}")));
    }
    if w.n_slices() < 2 {
        return Err(Error::InsufficientData("energy terms need at least one time step".into()));
    }
    let grid = w.grid();
    let dt = w.dt();
    let vol = grid.cell_volume();
    let all: Vec<usize> = (0..grid.len()).collect();
    let mut lhs_max_term: f64 = 0.0;
    let mut lhs_seminorm_term = 0.0;
    let mut rhs_value = 0.0;
    for k in 0..w.n_slices() {
        let g: Vec<f64> = (0..grid.len())
            .map(|i| zeta.at(k, i) * (w.at(k, i) - level).max(0.0))
            .collect();
        lhs_max_term = lhs_max_term.max(g.iter().map(|x| x * x).sum::<f64>() * vol);
        if k == 0 {
            continue;
        }
        lhs_seminorm_term += dt * seminorm_on(&g, grid, alpha, &all);
        let mut slice_rhs = 0.0;
        for i in 0..grid.len() {
            let excess = (w.at(k, i) - level).max(0.0);
            let zeta_t = (zeta.at(k, i) - zeta.at(k - 1, i)) / dt;
            let indicator = if w.at(k, i) > level { 1.0 } else { 0.0 };
            slice_rhs += (excess * excess + excess) * (zeta_t.abs() + 1.0) + indicator;
        }
        rhs_value += dt * vol * slice_rhs;
    }
    let ratio = (rhs_value > 0.0).then(|| (lhs_max_term + lhs_seminorm_term) / rhs_value);
    Ok(EnergyReport {
        lhs_max_term,
        lhs_seminorm_term,
        rhs_value,
        ratio,
        level,
        alpha,
        constant: 1.0,
    })
}

/// Affine change of variables `y = (x - center) / R`, `s = (t - t0) / R^alpha`
/// taking `Q_R(center, t0)` onto the unit cylinder `B_1 x (-1, 0]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rescaling {
    pub center: Vec<f64>,
    pub t0: f64,
    pub radius: f64,
}

impl Rescaling {
    pub fn space(&self, x: &[f64]) -> f64 {
        x.iter().zip(&self.center).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt() / self.radius
    }

    pub fn time(&self, t: f64, alpha: f64) -> f64 {
        (t - self.t0) / self.radius.powf(alpha)
    }

    fn check_inside(&self, w: &SpaceTimeField, alpha: f64) -> Result<()> {
        let grid = w.grid();
        let slack = 1e-9;
        let t_max = (w.n_slices() - 1) as f64 * w.dt();
        let fits = self.radius > 0.0
            && self.center.len() == grid.dim()
            && (0..grid.dim()).all(|d| {
                self.center[d] - self.radius >= grid.lower()[d] - slack && self.center[d] + self.radius <= grid.upper()[d] + slack
            })
            && self.t0 - self.radius.powf(alpha) >= -slack
            && self.t0 <= t_max + slack;
        if fits {
            Ok(())
        } else {
            Err(Error::Domain(format!("rescaled unit cylinder {self:?} leaves the field's box")))
        }
    }
}

/// `k_m = (1 - 2^{-m}) / 2`.
pub fn dyadic_level(m: usize) -> f64 {
    0.5 * (1.0 - 0.5f64.powi(m as i32))
}

/// `R_m = (1 + 2^{-m}) / 2`.
pub fn dyadic_radius(m: usize) -> f64 {
    0.5 * (1.0 + 0.5f64.powi(m as i32))
}

/// Cutoff between `Q_{m+1}` and `Q_m` in rescaled coordinates: the product
/// of a linear ramp in `|y|` from `R_{m+1}` to `R_m` and one in `s` from
/// `-R_m^alpha` to `-R_{m+1}^alpha`.
pub fn dyadic_cutoff(m: usize, alpha: f64, y: f64, s: f64) -> f64 {
    if s > 0.0 {
        return 0.0;
    }
    let (outer, inner) = (dyadic_radius(m), dyadic_radius(m + 1));
    let space = ((outer - y) / (outer - inner)).clamp(0.0, 1.0);
    let (t_outer, t_inner) = (outer.powf(alpha), inner.powf(alpha));
    let time = ((s + t_outer) / (t_outer - t_inner)).clamp(0.0, 1.0);
    space * time
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DyadicLevel {
    pub m: usize,
    pub k_m: f64,
    pub r_m: f64,
    /// `I_m = sum (zeta_m (w - k_m)^+)^2 h^n dt` in physical units.
    pub energy: f64,
}

/// Fitted `I_m <= C A^{m-1} I_{m-1}^{1+delta}` with `delta = alpha / (n + alpha)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecursionFit {
    pub c: f64,
    pub a: f64,
    pub delta: f64,
    /// `C^{-1/delta} A^{-1/delta^2}`: below this `I_0` the recursion forces `I_m -> 0`.
    pub sigma: f64,
    pub points: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DyadicSequence {
    pub alpha: f64,
    pub rescaling: Rescaling,
    pub levels: Vec<DyadicLevel>,
    /// Set when the sequence stopped early because a cutoff ramp became
    /// narrower than one grid cell.
    pub truncated: bool,
    pub fit: Option<RecursionFit>,
}

impl DyadicSequence {
    pub fn energies(&self) -> Vec<f64> {
        self.levels.iter().map(|l| l.energy).collect()
    }

    /// CSV with columns `m,k_m,R_m,I_m`.
    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(writer);
        out.write_record(["m", "k_m", "R_m", "I_m"])?;
        for l in &self.levels {
            out.write_record([
                l.m.to_string(),
                format!("{:.16e}", l.k_m),
                format!("{:.16e}", l.r_m),
                format!("{:.16e}", l.energy),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Computes `I_0..I_M` for `w` on the cylinder described by `rescaling`.
pub fn dyadic_energies(w: &SpaceTimeField, alpha: f64, max_level: usize, rescaling: &Rescaling) -> Result<DyadicSequence> {
    rescaling.check_inside(w, alpha)?;
    let grid = w.grid();
    let coords = grid.all_coords();
    let ys: Vec<f64> = coords.iter().map(|x| rescaling.space(x)).collect();
    let weight = grid.cell_volume() * w.dt();
    let mut levels = Vec::new();
    let mut truncated = false;
    for m in 0..=max_level {
        let ramp = (dyadic_radius(m) - dyadic_radius(m + 1)) * rescaling.radius;
        if ramp < grid.h() {
            truncated = true;
            break;
        }
        let k_m = dyadic_level(m);
        let mut energy = 0.0;
        for k in 0..w.n_slices() {
            let s = rescaling.time(k as f64 * w.dt(), alpha);
            if s > 0.0 || s <= -1.0 {
                continue;
            }
            for (i, &y) in ys.iter().enumerate() {
                let z = dyadic_cutoff(m, alpha, y, s);
                if z > 0.0 {
                    let e = z * (w.at(k, i) - k_m).max(0.0);
                    energy += e * e;
                }
            }
        }
        levels.push(DyadicLevel {
            m,
            k_m,
            r_m: dyadic_radius(m),
            energy: energy * weight,
        });
    }
    let delta = alpha / (grid.dim() as f64 + alpha);
    let fit = fit_recursion(&levels, delta);
    Ok(DyadicSequence {
        alpha,
        rescaling: rescaling.clone(),
        levels,
        truncated,
        fit,
    })
}

/// Regresses `ln I_m - (1 + delta) ln I_{m-1}` on `m - 1`.
fn fit_recursion(levels: &[DyadicLevel], delta: f64) -> Option<RecursionFit> {
    let points: Vec<(f64, f64)> = levels
        .windows(2)
        .filter(|p| p[0].energy > 0.0 && p[1].energy > 0.0)
        .map(|p| ((p[1].m - 1) as f64, p[1].energy.ln() - (1.0 + delta) * p[0].energy.ln()))
        .collect();
    let (slope, intercept, _) = linear_regression(&points).ok()?;
    let (c, a) = (intercept.exp(), slope.exp());
    Some(RecursionFit {
        c,
        a,
        delta,
        sigma: c.powf(-1.0 / delta) * a.powf(-1.0 / (delta * delta)),
        points: points.len(),
    })
}

/// `dt sum_{k >= 1}` of the seminorm of `v_k` over the subdomain.
pub fn ut_space_time_energy(v: &SpaceTimeField, alpha: f64, subdomain: &Subdomain) -> Result<f64> {
    let nodes = subdomain.nodes(v.grid())?;
    Ok((1..v.n_slices())
        .map(|k| v.dt() * seminorm_on(v.slice(k), v.grid(), alpha, &nodes))
        .sum())
}

/// Frame used by the energy pipeline: centred at the box centre and the
/// final time, radius `0.99 min(half-width / 2, T^{1/alpha})`.
pub fn default_rescaling(grid: &Grid, horizon: f64, alpha: f64) -> Rescaling {
    let center: Vec<f64> = (0..grid.dim()).map(|d| 0.5 * (grid.lower()[d] + grid.upper()[d])).collect();
    let half_width = (0..grid.dim())
        .map(|d| 0.5 * (grid.upper()[d] - grid.lower()[d]))
        .fold(f64::INFINITY, f64::min);
    Rescaling {
        center,
        t0: horizon,
        radius: 0.99 * (0.5 * half_width).min(horizon.powf(1.0 / alpha)),
    }
}

/// `w = 1 - v / M` with `M = max |v|` over the rescaled unit cylinder (1 if
/// `v` vanishes there), so that `w` lies in `[0, 2]` on the cylinder.
pub fn normalized_level_field(v: &SpaceTimeField, rescaling: &Rescaling, alpha: f64) -> SpaceTimeField {
    let coords = v.grid().all_coords();
    let mut scale: f64 = 0.0;
    for k in 0..v.n_slices() {
        let s = rescaling.time(k as f64 * v.dt(), alpha);
        if s > 0.0 || s <= -1.0 {
            continue;
        }
        for (i, x) in coords.iter().enumerate() {
            if rescaling.space(x) <= 1.0 {
                scale = scale.max(v.at(k, i).abs());
            }
        }
    }
    let scale = if scale > 0.0 { scale } else { 1.0 };
    v.map(|x| 1.0 - x / scale)
}

/// `zeta_m` sampled on the field's nodes.
pub fn cutoff_field(like: &SpaceTimeField, m: usize, alpha: f64, rescaling: &Rescaling) -> Result<SpaceTimeField> {
    SpaceTimeField::sample(like.grid(), like.dt(), like.n_slices(), |x, t| {
        dyadic_cutoff(m, alpha, rescaling.space(x), rescaling.time(t, alpha))
    })
}

/// Energy inequality terms for a derived field in the default frame, with
/// `zeta = zeta_0` and level `k_1`.
pub fn energy_report_for(v: &SpaceTimeField, alpha: f64, horizon: f64) -> Result<EnergyReport> {
    let frame = default_rescaling(v.grid(), horizon, alpha);
    frame.check_inside(v, alpha)?;
    let w = normalized_level_field(v, &frame, alpha);
    let zeta = cutoff_field(&w, 0, alpha, &frame)?;
    energy_inequality_terms(&w, &zeta, dyadic_level(1), alpha)
}
