use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GridRaw {
    dim: usize,
    #[serde(rename = "box")]
    bounds: Vec<[f64; 2]>,
    h: f64,
    #[serde(default)]
    halo: Option<f64>,
}

/// Uniform grid on an axis-aligned box with nodes on every multiple of `h`.
///
/// Unknowns live on the interior nodes; the boundary and everything outside
/// the box carry the zero exterior datum.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GridRaw", into = "GridRaw")]
pub struct Grid {
    lower: Vec<f64>,
    upper: Vec<f64>,
    h: f64,
    cells: Vec<usize>,
    halo: f64,
}

impl TryFrom<GridRaw> for Grid {
    type Error = Error;

    fn try_from(raw: GridRaw) -> Result<Self> {
        if raw.bounds.len() != raw.dim {
            return Err(Error::InvalidGrid(format!(
                "box has {} axes but dim = {}",
                raw.bounds.len(),
                raw.dim
            )));
        }
        let (lower, upper): (Vec<f64>, Vec<f64>) = raw.bounds.iter().map(|b| (b[0], b[1])).unzip();
        let mut grid = Grid::new(&lower, &upper, raw.h)?;
        if let Some(halo) = raw.halo {
            grid = grid.with_halo(halo)?;
        }
        Ok(grid)
    }
}

impl From<Grid> for GridRaw {
    fn from(g: Grid) -> Self {
        GridRaw {
            dim: g.dim(),
            bounds: g.lower.iter().zip(&g.upper).map(|(&a, &b)| [a, b]).collect(),
            h: g.h,
            halo: Some(g.halo),
        }
    }
}

impl Grid {
    pub fn new(lower: &[f64], upper: &[f64], h: f64) -> Result<Self> {
        let dim = lower.len();
        if !(dim == 1 || dim == 2) || upper.len() != dim {
            return Err(Error::InvalidGrid("grids are one- or two-dimensional".into()));
        }
        if !(h > 0.0) || !h.is_finite() {
            return Err(Error::InvalidGrid(format!("spacing must be positive, got {h}")));
        }
        let mut cells = Vec::with_capacity(dim);
        for (a, b) in lower.iter().zip(upper) {
            let len = b - a;
            let n = (len / h).round();
            if !(len > 0.0) || (n * h - len).abs() > 1e-9 * len.max(1.0) {
                return Err(Error::InvalidGrid(format!(
                    "edge [{a}, {b}] is not an integer multiple of h = {h}"
                )));
            }
            if n < 2.0 {
                return Err(Error::InvalidGrid("every axis needs at least one interior node".into()));
            }
            cells.push(n as usize);
        }
        let diameter = lower
            .iter()
            .zip(upper)
            .map(|(a, b)| (b - a) * (b - a))
            .sum::<f64>()
            .sqrt();
        Ok(Self {
            lower: lower.to_vec(),
            upper: upper.to_vec(),
            h,
            cells,
            halo: diameter,
        })
    }

    /// One-dimensional grid on `(a, b)` with `cells` equal cells.
    pub fn interval(a: f64, b: f64, cells: usize) -> Result<Self> {
        Self::new(&[a], &[b], (b - a) / cells as f64)
    }

    /// Sets the exterior band in which data such as the obstacle is sampled.
    pub fn with_halo(mut self, halo: f64) -> Result<Self> {
        if !(halo >= self.h) {
            return Err(Error::InvalidGrid(format!("halo {halo} must be at least h")));
        }
        self.halo = halo;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn halo(&self) -> f64 {
        self.halo
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    /// Number of cells per axis.
    pub fn cells(&self) -> &[usize] {
        &self.cells
    }

    /// Interior nodes per axis, padded to two axes (`[n, 1]` in 1D).
    pub fn shape2(&self) -> [usize; 2] {
        match self.cells.as_slice() {
            [a] => [a - 1, 1],
            [a, b] => [a - 1, b - 1],
            _ => unreachable!("validated dimension"),
        }
    }

    /// Interior nodes per axis.
    pub fn interior_shape(&self) -> Vec<usize> {
        self.cells.iter().map(|c| c - 1).collect()
    }

    pub fn len(&self) -> usize {
        self.cells.iter().map(|c| c - 1).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Cell volume `h^n`.
    pub fn cell_volume(&self) -> f64 {
        self.h.powi(self.dim() as i32)
    }

    /// Multi-index (0-based over interior nodes) of a flat index.
    pub fn multi_index(&self, flat: usize) -> [usize; 2] {
        let [_, n1] = self.shape2();
        [flat / n1, flat % n1]
    }

    pub fn flat_index(&self, idx: [usize; 2]) -> usize {
        idx[0] * self.shape2()[1] + idx[1]
    }

    /// Coordinates of interior node `flat`.
    pub fn coords(&self, flat: usize) -> Vec<f64> {
        let idx = self.multi_index(flat);
        (0..self.dim())
            .map(|d| self.lower[d] + (idx[d] + 1) as f64 * self.h)
            .collect()
    }

    /// Coordinates of every interior node, in flat order.
    pub fn all_coords(&self) -> Vec<Vec<f64>> {
        (0..self.len()).map(|i| self.coords(i)).collect()
    }

    /// Lattice points outside the open box within `halo` of it.
    pub fn halo_nodes(&self) -> Vec<Vec<f64>> {
        let reach = (self.halo / self.h).ceil() as i64;
        let mut out = Vec::new();
        match self.dim() {
            1 => {
                let n = self.cells[0] as i64;
                for k in -reach..=n + reach {
                    if k <= 0 || k >= n {
                        out.push(vec![self.lower[0] + k as f64 * self.h]);
                    }
                }
            }
            _ => {
                let (n0, n1) = (self.cells[0] as i64, self.cells[1] as i64);
                for a in -reach..=n0 + reach {
                    for b in -reach..=n1 + reach {
                        if a <= 0 || a >= n0 || b <= 0 || b >= n1 {
                            out.push(vec![
                                self.lower[0] + a as f64 * self.h,
                                self.lower[1] + b as f64 * self.h,
                            ]);
                        }
                    }
                }
            }
        }
        out
    }

    /// Whether the closed ball `B_r(center)` stays inside the closed box.
    pub fn contains_ball(&self, center: &[f64], r: f64) -> bool {
        center
            .iter()
            .enumerate()
            .all(|(d, &c)| c - r >= self.lower[d] - 1e-12 && c + r <= self.upper[d] + 1e-12)
    }

    /// Flat index of the interior node nearest to `point`, if the point lies
    /// within half a cell of the interior lattice.
    pub fn nearest_node(&self, point: &[f64]) -> Option<usize> {
        let shape = self.shape2();
        let mut idx = [0usize; 2];
        for d in 0..self.dim() {
            let k = ((point[d] - self.lower[d]) / self.h).round() as i64 - 1;
            if k < 0 || k as usize >= shape[d] {
                return None;
            }
            idx[d] = k as usize;
        }
        Some(self.flat_index(idx))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interval_layout() {
        let g = Grid::interval(-1.0, 1.0, 8).unwrap();
        assert_eq!(g.len(), 7);
        assert_eq!(g.h(), 0.25);
        assert_eq!(g.coords(0), vec![-0.75]);
        assert_eq!(g.coords(6), vec![0.75]);
        assert_eq!(g.nearest_node(&[0.0]), Some(3));
        assert_eq!(g.nearest_node(&[1.0]), None);
    }

    #[test]
    fn rejects_incommensurate_spacing() {
        assert!(matches!(Grid::new(&[0.0], &[1.0], 0.3), Err(Error::InvalidGrid(_))));
        assert!(matches!(Grid::new(&[0.0], &[1.0], -0.1), Err(Error::InvalidGrid(_))));
    }

    #[test]
    fn two_dimensional_indexing() {
        let g = Grid::new(&[0.0, 0.0], &[1.0, 2.0], 0.25).unwrap();
        assert_eq!(g.shape2(), [3, 7]);
        let flat = g.flat_index([1, 4]);
        assert_eq!(g.multi_index(flat), [1, 4]);
        assert_eq!(g.coords(flat), vec![0.5, 1.25]);
    }

    #[test]
    fn json_schema() {
        let g: Grid = serde_json::from_str(r#"{"dim":1,"box":[[-1,1]],"h":0.125,"halo":0.5}"#).unwrap();
        assert_eq!(g.len(), 15);
        assert_eq!(g.halo(), 0.5);
        let err = serde_json::from_str::<Grid>(r#"{"dim":2,"box":[[-1,1]],"h":0.125}"#);
        assert!(err.is_err());
    }

    #[test]
    fn halo_nodes_are_exterior() {
        let g = Grid::interval(-1.0, 1.0, 4).unwrap().with_halo(1.0).unwrap();
        let nodes = g.halo_nodes();
        assert!(nodes.iter().all(|x| x[0] <= -1.0 || x[0] >= 1.0));
        assert_eq!(nodes.len(), 6);
    }
}
