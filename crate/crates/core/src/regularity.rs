//! Regularity diagnostics on computed solutions: the time derivative of the
//! gap `u - psi`, coincidence masks, parabolic densities, moduli of
//! continuity and the local energy functional.

use std::collections::HashMap;
use std::ops::RangeInclusive;

use serde::{Deserialize, Serialize};

use crate::discretization::Grid;
use crate::error::{Error, Result};
use crate::field::SpaceTimeField;
use crate::kernel::{fundamental_solution_eval, FundamentalSolutionSpec, KernelSpec};

/// Reading of the coincidence set carried by masks and reports.
pub const INTERPRETATION: &str = "coincidence set taken as {u = psi}";

/// Mask threshold multiplier: a node is in contact when `u - psi <= 2 max(eps, 1e-10 scale)`.
pub const MASK_KAPPA: f64 = 2.0;

/// Panels for heat kernel evaluations inside [`local_energy`].
pub const LOCAL_ENERGY_RESOLUTION: usize = 256;

/// `v_k = ((u - psi)_k - (u - psi)_{k-1}) / dt`; slice 0 copies slice 1.
pub fn derived_field(u: &SpaceTimeField, psi: &SpaceTimeField) -> Result<SpaceTimeField> {
    u.check_compatible(psi)?;
    if u.n_slices() < 2 {
        return Err(Error::InsufficientData("the derived field needs at least one time step".into()));
    }
    let dt = u.dt();
    let mut slices = Vec::with_capacity(u.n_slices());
    for k in 1..u.n_slices() {
        let v: Vec<f64> = (0..u.nodes())
            .map(|i| ((u.at(k, i) - psi.at(k, i)) - (u.at(k - 1, i) - psi.at(k - 1, i))) / dt)
            .collect();
        if k == 1 {
            slices.push(v.clone());
        }
        slices.push(v);
    }
    SpaceTimeField::from_slices(u.grid(), dt, slices)
}

/// `v^+ = max(v, 0)`.
pub fn positive_part(v: &SpaceTimeField) -> SpaceTimeField {
    v.map(|x| x.max(0.0))
}

/// `v^- = max(-v, 0)`, so that `v = v^+ - v^-`.
pub fn negative_part(v: &SpaceTimeField) -> SpaceTimeField {
    v.map(|x| (-x).max(0.0))
}

/// A node of a space-time grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SpaceTimeNode {
    pub node: usize,
    pub slice: usize,
}

/// Boolean space-time array of the set where `u` sits on the obstacle.
#[derive(Clone, Debug, PartialEq)]
pub struct CoincidenceMask {
    grid: Grid,
    dt: f64,
    n_slices: usize,
    data: Vec<bool>,
    /// Threshold on `u - psi`.
    pub tolerance: f64,
    /// The penalty parameter of the source solution (0 for the oracle).
    pub source_epsilon: f64,
}

/// Run-length encoded form of a [`CoincidenceMask`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaskRle {
    pub grid: Grid,
    pub dt: f64,
    pub n_slices: usize,
    pub tolerance: f64,
    pub source_epsilon: f64,
    pub interpretation: String,
    /// Value of the first run; runs alternate from there.
    pub first: bool,
    /// Run lengths over the slice-major flat array.
    pub runs: Vec<usize>,
}

/// `u - psi <= 2 max(eps, 1e-10 scale)` with `scale = max(1, sup|u|, sup|psi|)`.
pub fn coincidence_mask(u: &SpaceTimeField, psi: &SpaceTimeField, epsilon: f64) -> Result<CoincidenceMask> {
    if !(epsilon >= 0.0) {
        return Err(Error::Domain(format!("epsilon must be nonnegative, got {epsilon}")));
    }
    u.check_compatible(psi)?;
    let scale = 1.0f64.max(u.sup_norm()).max(psi.sup_norm());
    let tolerance = MASK_KAPPA * epsilon.max(1e-10 * scale);
    Ok(CoincidenceMask {
        grid: u.grid().clone(),
        dt: u.dt(),
        n_slices: u.n_slices(),
        data: u.values().iter().zip(psi.values()).map(|(a, b)| a - b <= tolerance).collect(),
        tolerance,
        source_epsilon: epsilon,
    })
}

impl CoincidenceMask {
    /// Builds a mask from a predicate on `(x, t)`, for synthetic tests.
    pub fn from_fn(grid: &Grid, dt: f64, n_slices: usize, f: impl Fn(&[f64], f64) -> bool) -> Self {
        let coords = grid.all_coords();
        let mut data = Vec::with_capacity(n_slices * coords.len());
        for k in 0..n_slices {
            data.extend(coords.iter().map(|x| f(x, k as f64 * dt)));
        }
        Self {
            grid: grid.clone(),
            dt,
            n_slices,
            data,
            tolerance: 0.0,
            source_epsilon: 0.0,
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn n_slices(&self) -> usize {
        self.n_slices
    }

    pub fn at(&self, slice: usize, node: usize) -> bool {
        self.data[slice * self.grid.len() + node]
    }

    pub fn slice(&self, k: usize) -> &[bool] {
        let n = self.grid.len();
        &self.data[k * n..(k + 1) * n]
    }

    pub fn count(&self, k: usize) -> usize {
        self.slice(k).iter().filter(|&&b| b).count()
    }

    /// Index of the first slice with a node in contact.
    pub fn first_contact_slice(&self) -> Option<usize> {
        (0..self.n_slices).find(|&k| self.count(k) > 0)
    }

    /// `true` when `self` implies `other` at every node.
    pub fn is_subset_of(&self, other: &Self) -> bool {
        self.data.len() == other.data.len() && self.data.iter().zip(&other.data).all(|(a, b)| !a || *b)
    }

    pub fn to_rle(&self) -> MaskRle {
        let mut runs = Vec::new();
        let first = self.data.first().copied().unwrap_or(false);
        let mut current = first;
        let mut len = 0;
        for &b in &self.data {
            if b == current {
                len += 1;
            } else {
                runs.push(len);
                current = b;
                len = 1;
            }
        }
        runs.push(len);
        MaskRle {
            grid: self.grid.clone(),
            dt: self.dt,
            n_slices: self.n_slices,
            tolerance: self.tolerance,
            source_epsilon: self.source_epsilon,
            interpretation: INTERPRETATION.into(),
            first,
            runs,
        }
    }

    pub fn from_rle(rle: &MaskRle) -> Result<Self> {
        let mut data = Vec::with_capacity(rle.n_slices * rle.grid.len());
        let mut value = rle.first;
        for &len in &rle.runs {
            data.extend(std::iter::repeat(value).take(len));
            value = !value;
        }
        if data.len() != rle.n_slices * rle.grid.len() {
            return Err(Error::Shape {
                expected: rle.n_slices * rle.grid.len(),
                got: data.len(),
            });
        }
        Ok(Self {
            grid: rle.grid.clone(),
            dt: rle.dt,
            n_slices: rle.n_slices,
            data,
            tolerance: rle.tolerance,
            source_epsilon: rle.source_epsilon,
        })
    }

    /// Contact nodes with a non-contact neighbour in space or time, away
    /// from the first and last slices.
    pub fn free_boundary_nodes(&self) -> Vec<SpaceTimeNode> {
        let [n0, n1] = self.grid.shape2();
        let mut out = Vec::new();
        for k in 1..self.n_slices.saturating_sub(1) {
            for node in 0..self.grid.len() {
                if !self.at(k, node) {
                    continue;
                }
                let [i0, i1] = self.grid.multi_index(node);
                let mut neighbours = vec![self.at(k - 1, node), self.at(k + 1, node)];
                if i0 > 0 {
                    neighbours.push(self.at(k, self.grid.flat_index([i0 - 1, i1])));
                }
                if i0 + 1 < n0 {
                    neighbours.push(self.at(k, self.grid.flat_index([i0 + 1, i1])));
                }
                if i1 > 0 {
                    neighbours.push(self.at(k, self.grid.flat_index([i0, i1 - 1])));
                }
                if i1 + 1 < n1 {
                    neighbours.push(self.at(k, self.grid.flat_index([i0, i1 + 1])));
                }
                if neighbours.iter().any(|b| !b) {
                    out.push(SpaceTimeNode { node, slice: k });
                }
            }
        }
        out
    }
}

/// `Q_r(x0, t0) = B_r(x0) x (t0 - r^alpha, t0]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParabolicCylinder {
    pub center: Vec<f64>,
    pub t0: f64,
    pub radius: f64,
    pub alpha: f64,
}

impl ParabolicCylinder {
    pub fn new(center: Vec<f64>, t0: f64, radius: f64, alpha: f64) -> Result<Self> {
        if !(radius > 0.0) || !(alpha > 0.0 && alpha < 2.0) {
            return Err(Error::Domain(format!("cylinder needs r > 0 and alpha in (0, 2), got r = {radius}, alpha = {alpha}")));
        }
        Ok(Self {
            center,
            t0,
            radius,
            alpha,
        })
    }

    pub fn depth(&self) -> f64 {
        self.radius.powf(self.alpha)
    }

    /// Node membership with a relative slack of `1e-9` on both boundaries.
    pub fn contains(&self, x: &[f64], t: f64) -> bool {
        let slack = 1e-9 * (1.0 + self.radius);
        let d2: f64 = x.iter().zip(&self.center).map(|(a, b)| (a - b) * (a - b)).sum();
        d2.sqrt() <= self.radius + slack && t <= self.t0 + slack && t > self.t0 - self.depth() + slack
    }

    /// Errors unless the cylinder lies in `closure(box) x [0, t_max]`.
    fn check_inside(&self, grid: &Grid, t_max: f64) -> Result<()> {
        let slack = 1e-9;
        let in_space = self
            .center
            .iter()
            .enumerate()
            .all(|(d, c)| c - self.radius >= grid.lower()[d] - slack && c + self.radius <= grid.upper()[d] + slack);
        if self.center.len() != grid.dim() || !in_space || self.t0 - self.depth() < -slack || self.t0 > t_max + slack {
            return Err(Error::Domain(format!(
                "cylinder of radius {} at ({:?}, {}) leaves the space-time box",
                self.radius, self.center, self.t0
            )));
        }
        Ok(())
    }
}

/// Fraction of the grid nodes of `cyl` at which the mask is set.
pub fn parabolic_density(mask: &CoincidenceMask, cyl: &ParabolicCylinder) -> Result<f64> {
    let t_max = (mask.n_slices - 1) as f64 * mask.dt;
    cyl.check_inside(&mask.grid, t_max)?;
    let coords = mask.grid.all_coords();
    let (mut total, mut hits) = (0usize, 0usize);
    for k in 0..mask.n_slices {
        let t = k as f64 * mask.dt;
        if t > cyl.t0 + 1e-9 || t <= cyl.t0 - cyl.depth() {
            continue;
        }
        for (node, x) in coords.iter().enumerate() {
            if cyl.contains(x, t) {
                total += 1;
                hits += usize::from(mask.at(k, node));
            }
        }
    }
    if total == 0 {
        return Err(Error::Domain(format!("cylinder of radius {} contains no grid node", cyl.radius)));
    }
    Ok(hits as f64 / total as f64)
}

/// Parabolic density at one point over a list of radii.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensityProfile {
    /// `(r, density)` in the order given.
    pub densities: Vec<(f64, f64)>,
    /// Minimum density over the radii.
    pub c_estimate: f64,
    /// Largest radius `r` such that every listed radius `<= r` has density
    /// at least `c_min`; `None` when the smallest radius already fails.
    pub r0_estimate: Option<f64>,
    pub c_min: f64,
    /// `c_estimate >= c_min`.
    pub positive_density: bool,
}

pub fn density_profile(
    mask: &CoincidenceMask,
    center: &[f64],
    t0: f64,
    r_list: &[f64],
    alpha: f64,
    c_min: f64,
) -> Result<DensityProfile> {
    if r_list.is_empty() || r_list.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::Domain("radii must be nonempty and strictly decreasing".into()));
    }
    let mut densities = Vec::with_capacity(r_list.len());
    for &r in r_list {
        let cyl = ParabolicCylinder::new(center.to_vec(), t0, r, alpha)?;
        densities.push((r, parabolic_density(mask, &cyl)?));
    }
    let c_estimate = densities.iter().map(|d| d.1).fold(f64::INFINITY, f64::min);
    let mut r0_estimate = None;
    for &(r, d) in densities.iter().rev() {
        if d < c_min {
            break;
        }
        r0_estimate = Some(r);
    }
    Ok(DensityProfile {
        densities,
        c_estimate,
        r0_estimate,
        c_min,
        positive_density: c_estimate >= c_min,
    })
}

/// One row of a modulus table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModulusRow {
    pub rho: f64,
    /// `None` when every gauge ball held only its centre.
    pub omega: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModulusTable {
    pub rows: Vec<ModulusRow>,
    /// Radii skipped because their gauge balls are sub-grid.
    pub skipped: Vec<f64>,
}

/// `max` over base points of the oscillation of `field` over the gauge ball
/// `|x - x0|^alpha + |t - t0| <= rho`.
///
/// Base points on the first or last slice are rejected.
pub fn modulus(field: &SpaceTimeField, base_points: &[SpaceTimeNode], rho_list: &[f64], alpha: f64) -> Result<ModulusTable> {
    let last = field.n_slices() - 1;
    for p in base_points {
        if p.slice == 0 || p.slice >= last || p.node >= field.nodes() {
            return Err(Error::Domain(format!(
                "base point {p:?} must be an interior node on slices 1..{}",
                last.saturating_sub(1)
            )));
        }
    }
    let coords = field.grid().all_coords();
    let dt = field.dt();
    let mut rows = Vec::with_capacity(rho_list.len());
    let mut skipped = Vec::new();
    for &rho in rho_list {
        let mut omega: Option<f64> = None;
        for p in base_points {
            let x0 = &coords[p.node];
            let t0 = p.slice as f64 * dt;
            let (mut lo, mut hi, mut count) = (f64::INFINITY, f64::NEG_INFINITY, 0usize);
            let reach = (rho / dt).floor() as usize + 1;
            let k_lo = p.slice.saturating_sub(reach);
            let k_hi = (p.slice + reach).min(last);
            for k in k_lo..=k_hi {
                let time_part = (k as f64 * dt - t0).abs();
                if time_part > rho * (1.0 + 1e-12) {
                    continue;
                }
                for (node, x) in coords.iter().enumerate() {
                    let dist: f64 = x.iter().zip(x0).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
                    if dist.powf(alpha) + time_part <= rho * (1.0 + 1e-12) {
                        let value = field.at(k, node);
                        lo = lo.min(value);
                        hi = hi.max(value);
                        count += 1;
                    }
                }
            }
            if count > 1 {
                omega = Some(omega.unwrap_or(0.0).max(hi - lo));
            }
        }
        if omega.is_none() {
            skipped.push(rho);
        }
        rows.push(ModulusRow { rho, omega });
    }
    Ok(ModulusTable { rows, skipped })
}

/// [`modulus`] applied to `v^+`.
pub fn positive_part_modulus(v: &SpaceTimeField, base_points: &[SpaceTimeNode], rho_list: &[f64], alpha: f64) -> Result<ModulusTable> {
    modulus(&positive_part(v), base_points, rho_list, alpha)
}

/// [`modulus`] applied to `v^-`.
pub fn negative_part_modulus(v: &SpaceTimeField, base_points: &[SpaceTimeNode], rho_list: &[f64], alpha: f64) -> Result<ModulusTable> {
    modulus(&negative_part(v), base_points, rho_list, alpha)
}

/// Largest difference between grid neighbours (one step along an axis or in
/// time) over the given slices.
pub fn neighbor_jump(field: &SpaceTimeField, slices: RangeInclusive<usize>) -> Result<f64> {
    let (start, end) = (*slices.start(), *slices.end());
    if start > end || end >= field.n_slices() {
        return Err(Error::Domain(format!(
            "slice range {start}..={end} is outside 0..{}",
            field.n_slices()
        )));
    }
    let grid = field.grid();
    let [n0, n1] = grid.shape2();
    let mut jump: f64 = 0.0;
    for k in start..=end {
        for node in 0..field.nodes() {
            let value = field.at(k, node);
            let [i0, i1] = grid.multi_index(node);
            if i0 + 1 < n0 {
                jump = jump.max((field.at(k, grid.flat_index([i0 + 1, i1])) - value).abs());
            }
            if i1 + 1 < n1 {
                jump = jump.max((field.at(k, grid.flat_index([i0, i1 + 1])) - value).abs());
            }
            if k > start {
                jump = jump.max((field.at(k - 1, node) - value).abs());
            }
        }
    }
    Ok(jump)
}

/// Discrete `sup_{Q_rho} (v^+)^2` plus the heat-kernel weighted seminorm of
/// `v^+` over the cylinder ending at `point`.
///
/// Slice `t_k` is weighted by `G(x - x0, t0 - t_k + dt/2)`: the half-step
/// shift is the midpoint of the time cell and keeps the kernel finite on the
/// top slice.
pub fn local_energy(v_plus: &SpaceTimeField, point: SpaceTimeNode, rho: f64, kernel: &KernelSpec) -> Result<f64> {
    let fsol = FundamentalSolutionSpec::for_kernel(kernel, LOCAL_ENERGY_RESOLUTION, 10.0)?;
    let mut cache = HeatKernelCache::new(fsol);
    local_energy_cached(v_plus, point, rho, &mut cache)
}

/// Memoized heat kernel values keyed by `(node offset, slice offset)`.
pub struct HeatKernelCache {
    fsol: FundamentalSolutionSpec,
    values: HashMap<(Vec<i64>, usize), f64>,
}

impl HeatKernelCache {
    pub fn new(fsol: FundamentalSolutionSpec) -> Self {
        Self {
            fsol,
            values: HashMap::new(),
        }
    }

    fn get(&mut self, offset: Vec<i64>, lag: usize, h: f64, dt: f64) -> Result<f64> {
        if let Some(&g) = self.values.get(&(offset.clone(), lag)) {
            return Ok(g);
        }
        let x: Vec<f64> = offset.iter().map(|&j| j as f64 * h).collect();
        let g = fundamental_solution_eval(&self.fsol, &x, (lag as f64 + 0.5) * dt)?;
        self.values.insert((offset, lag), g);
        Ok(g)
    }
}

pub fn local_energy_cached(v_plus: &SpaceTimeField, point: SpaceTimeNode, rho: f64, cache: &mut HeatKernelCache) -> Result<f64> {
    let grid = v_plus.grid();
    let dt = v_plus.dt();
    let alpha = cache.fsol.alpha;
    if cache.fsol.dim != grid.dim() {
        return Err(Error::Domain("heat kernel dimension differs from the field".into()));
    }
    let coords = grid.all_coords();
    let x0 = coords
        .get(point.node)
        .ok_or_else(|| Error::Domain(format!("node {} is outside the grid", point.node)))?
        .clone();
    let t0 = point.slice as f64 * dt;
    let cyl = ParabolicCylinder::new(x0.clone(), t0, rho, alpha)?;
    cyl.check_inside(grid, (v_plus.n_slices() - 1) as f64 * dt)?;
    let ball: Vec<usize> = (0..coords.len())
        .filter(|&i| {
            let d2: f64 = coords[i].iter().zip(&x0).map(|(a, b)| (a - b) * (a - b)).sum();
            d2.sqrt() <= rho * (1.0 + 1e-9)
        })
        .collect();
    let center_idx = grid.multi_index(point.node);
    let h = grid.h();
    let vol = grid.cell_volume();
    let exponent = grid.dim() as f64 + alpha;
    let mut sup: f64 = 0.0;
    let mut sum = 0.0;
    for k in (0..=point.slice).rev() {
        let t = k as f64 * dt;
        if !(t > t0 - cyl.depth() + 1e-9 * (1.0 + rho)) {
            break;
        }
        let lag = point.slice - k;
        let slice = v_plus.slice(k);
        for &i in &ball {
            sup = sup.max(slice[i] * slice[i]);
        }
        for &i in &ball {
            let idx = grid.multi_index(i);
            let offset: Vec<i64> = (0..grid.dim()).map(|d| idx[d] as i64 - center_idx[d] as i64).collect();
            let mut inner = 0.0;
            for &j in &ball {
                if i == j {
                    continue;
                }
                let d2: f64 = coords[i].iter().zip(&coords[j]).map(|(a, b)| (a - b) * (a - b)).sum();
                let diff = slice[i] - slice[j];
                inner += diff * diff / d2.sqrt().powf(exponent);
            }
            if inner != 0.0 {
                sum += cache.get(offset, lag, h, dt)? * inner;
            }
        }
    }
    Ok(sup + sum * vol * vol * dt)
}

/// Least-squares power law `omega = C rho^gamma`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HolderFit {
    pub gamma: f64,
    pub constant: f64,
    pub r2: f64,
    /// Samples dropped for `omega <= 0`.
    pub dropped: usize,
}

/// Fits `log omega` against `log rho`. When all `log omega` agree the fit is
/// exact and `r2 = 1`.
pub fn holder_fit(samples: &[(f64, f64)]) -> Result<HolderFit> {
    let kept: Vec<(f64, f64)> = samples
        .iter()
        .filter(|(r, w)| *r > 0.0 && *w > 0.0 && w.is_finite())
        .map(|(r, w)| (r.ln(), w.ln()))
        .collect();
    if kept.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "Hölder fit needs at least 3 positive samples, got {} of {}",
            kept.len(),
            samples.len()
        )));
    }
    let (slope, intercept, r2) = linear_regression(&kept)?;
    Ok(HolderFit {
        gamma: slope,
        constant: intercept.exp(),
        r2,
        dropped: samples.len() - kept.len(),
    })
}

/// Ordinary least squares `y = a x + b`; returns `(a, b, r2)`.
pub(crate) fn linear_regression(points: &[(f64, f64)]) -> Result<(f64, f64, f64)> {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if !(sxx > 0.0) {
        return Err(Error::InsufficientData("regression abscissae are all equal".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_tot: f64 = points.iter().map(|p| (p.1 - my).powi(2)).sum();
    let ss_res: f64 = points.iter().map(|p| (p.1 - slope * p.0 - intercept).powi(2)).sum();
    let r2 = if ss_tot > 0.0 { (1.0 - ss_res / ss_tot).clamp(0.0, 1.0) } else { 1.0 };
    Ok((slope, intercept, r2))
}

/// `omega_{j+1} ~ lambda omega_j + M` over consecutive values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LambdaFit {
    pub lambda: f64,
    pub offset: f64,
    /// Set when the free fit gave `M < 0` and the line was refitted through the origin.
    pub through_origin: bool,
}

pub fn lambda_fit(omegas: &[f64]) -> Result<LambdaFit> {
    if omegas.len() < 2 {
        return Err(Error::InsufficientData("lambda fit needs at least two values".into()));
    }
    let pairs: Vec<(f64, f64)> = omegas.windows(2).map(|w| (w[0], w[1])).collect();
    let through_origin = |pairs: &[(f64, f64)]| -> Result<LambdaFit> {
        let sxx: f64 = pairs.iter().map(|p| p.0 * p.0).sum();
        if !(sxx > 0.0) {
            return Err(Error::InsufficientData("all omega values vanish".into()));
        }
        Ok(LambdaFit {
            lambda: pairs.iter().map(|p| p.0 * p.1).sum::<f64>() / sxx,
            offset: 0.0,
            through_origin: true,
        })
    };
    if pairs.len() < 2 {
        return through_origin(&pairs);
    }
    match linear_regression(&pairs) {
        Ok((lambda, offset, _)) if offset >= 0.0 => Ok(LambdaFit {
            lambda,
            offset,
            through_origin: false,
        }),
        _ => through_origin(&pairs),
    }
}

/// Options for [`regularity_report`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RegularityOptions {
    /// Radii for the density profile, strictly decreasing.
    pub r_list: Vec<f64>,
    pub c_min: f64,
    /// Radii `r0 / 5^j` for `j < holder_levels`.
    pub holder_levels: usize,
}

impl Default for RegularityOptions {
    fn default() -> Self {
        Self {
            r_list: vec![0.25, 0.125, 0.0625],
            c_min: 0.05,
            holder_levels: 4,
        }
    }
}

/// Measured density, local energies and the power-law fit at one point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegularityReport {
    pub point: SpaceTimeNode,
    pub x: Vec<f64>,
    pub t: f64,
    pub density_constant: f64,
    pub density_radius: Option<f64>,
    pub densities: Vec<(f64, f64)>,
    /// `(rho, omega(rho))` from [`local_energy`].
    pub modulus: Vec<(f64, f64)>,
    pub holder_gamma: Option<f64>,
    pub holder_constant: Option<f64>,
    pub fit_r2: Option<f64>,
    pub lambda: Option<LambdaFit>,
    pub interpretation: String,
    pub notes: Vec<String>,
}

/// Picks the free-boundary node with the largest density estimate.
///
/// Nodes whose cylinders leave the box are ignored. Ties go to the earliest
/// node in slice-major order.
pub fn best_density_point(mask: &CoincidenceMask, alpha: f64, opts: &RegularityOptions) -> Result<(SpaceTimeNode, DensityProfile)> {
    let coords = mask.grid().all_coords();
    let mut best: Option<(SpaceTimeNode, DensityProfile)> = None;
    for p in mask.free_boundary_nodes() {
        let t0 = p.slice as f64 * mask.dt();
        let profile = match density_profile(mask, &coords[p.node], t0, &opts.r_list, alpha, opts.c_min) {
            Ok(profile) => profile,
            Err(Error::Domain(_)) => continue,
            Err(e) => return Err(e),
        };
        if best.as_ref().map_or(true, |(_, b)| profile.c_estimate > b.c_estimate) {
            best = Some((p, profile));
        }
    }
    best.ok_or_else(|| Error::InsufficientData("no free-boundary node admits the requested cylinders".into()))
}

/// Runs density, local energy, the power-law fit and the contraction fit at
/// `point`.
///
/// Fit failures are recorded in `notes` rather than returned as errors.
pub fn regularity_report(
    v: &SpaceTimeField,
    mask: &CoincidenceMask,
    point: SpaceTimeNode,
    kernel: &KernelSpec,
    opts: &RegularityOptions,
) -> Result<RegularityReport> {
    let alpha = kernel.alpha();
    let x = v.grid().coords(point.node);
    let t = point.slice as f64 * v.dt();
    let profile = density_profile(mask, &x, t, &opts.r_list, alpha, opts.c_min)?;
    let mut notes = Vec::new();
    if !profile.positive_density {
        notes.push(format!(
            "density estimate {:.3} is below c_min = {}",
            profile.c_estimate, opts.c_min
        ));
    }
    let v_plus = positive_part(v);
    let mut modulus = Vec::new();
    let mut fit = None;
    let mut lambda = None;
    if let Some(r0) = profile.r0_estimate {
        let fsol = FundamentalSolutionSpec::for_kernel(kernel, LOCAL_ENERGY_RESOLUTION, 10.0)?;
        let mut cache = HeatKernelCache::new(fsol);
        for j in 0..opts.holder_levels {
            let rho = r0 / 5f64.powi(j as i32);
            modulus.push((rho, local_energy_cached(&v_plus, point, rho, &mut cache)?));
        }
        match holder_fit(&modulus) {
            Ok(f) => {
                if f.dropped > 0 {
                    notes.push(format!("{} zero samples dropped from the power-law fit", f.dropped));
                }
                fit = Some(f);
            }
            Err(e) => notes.push(format!("power-law fit unavailable: {e}")),
        }
        // Radii shrink by 5 along the list, so consecutive pairs are (omega(rho), omega(rho/5)).
        let omegas: Vec<f64> = modulus.iter().map(|m| m.1).collect();
        match lambda_fit(&omegas) {
            Ok(l) => lambda = Some(l),
            Err(e) => notes.push(format!("contraction fit unavailable: {e}")),
        }
    } else {
        notes.push("no radius with density above c_min; local energies skipped".into());
    }
    Ok(RegularityReport {
        point,
        x,
        t,
        density_constant: profile.c_estimate,
        density_radius: profile.r0_estimate,
        densities: profile.densities,
        modulus,
        holder_gamma: fit.as_ref().map(|f| f.gamma),
        holder_constant: fit.as_ref().map(|f| f.constant),
        fit_r2: fit.as_ref().map(|f| f.r2),
        lambda,
        interpretation: INTERPRETATION.into(),
        notes,
    })
}
