use serde::{Deserialize, Serialize};

use crate::discretization::Grid;
use crate::error::{Error, Result};
use crate::field::SpaceTimeField;
use crate::kernel::KernelSpec;
use crate::profiles::{InitialProfile, ObstacleProfile};

/// An obstacle problem on a grid: kernel, horizon, obstacle and initial data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSpec {
    pub kernel: KernelSpec,
    pub grid: Grid,
    pub horizon: f64,
    pub n_steps: usize,
    pub obstacle: ObstacleProfile,
    pub initial: InitialProfile,
}

impl ProblemSpec {
    pub fn dt(&self) -> f64 {
        self.horizon / self.n_steps as f64
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.dt()
    }

    /// Obstacle on the interior nodes at time `t`.
    pub fn obstacle_at(&self, t: f64) -> Vec<f64> {
        self.grid.all_coords().iter().map(|x| self.obstacle.eval(x, t)).collect()
    }

    /// Obstacle on the interior nodes at every time level.
    pub fn obstacle_slices(&self) -> Vec<Vec<f64>> {
        (0..=self.n_steps).map(|k| self.obstacle_at(self.time(k))).collect()
    }

    /// The obstacle sampled at every node and time level.
    pub fn obstacle_field(&self) -> Result<SpaceTimeField> {
        SpaceTimeField::sample(&self.grid, self.dt(), self.n_steps + 1, |x, t| self.obstacle.eval(x, t))
    }

    /// Initial datum on the interior nodes.
    pub fn initial_slice(&self) -> Vec<f64> {
        self.grid
            .all_coords()
            .iter()
            .map(|x| self.initial.eval(x, &self.obstacle))
            .collect()
    }

    /// Checks the structural assumptions and returns warnings for the soft ones.
    ///
    /// Hard failures: non-positive horizon or step count, kernel/grid
    /// dimension mismatch, `psi >= 0` at an exterior halo node at some time
    /// level, or `phi < psi(., 0)` at an interior node. A non-positive
    /// `max psi(., 0)` only yields a warning.
    pub fn validate(&self) -> Result<Vec<String>> {
        if !(self.horizon > 0.0) || !self.horizon.is_finite() {
            return Err(Error::InvalidSpec(format!("horizon must be positive, got {}", self.horizon)));
        }
        if self.n_steps == 0 {
            return Err(Error::InvalidSpec("n_steps must be at least 1".into()));
        }
        if self.kernel.dim() != self.grid.dim() {
            return Err(Error::InvalidSpec(format!(
                "kernel dimension {} differs from grid dimension {}",
                self.kernel.dim(),
                self.grid.dim()
            )));
        }
        let halo = self.grid.halo_nodes();
        for k in 0..=self.n_steps {
            let t = self.time(k);
            if let Some(x) = halo.iter().find(|x| !(self.obstacle.eval(x, t) < 0.0)) {
                return Err(Error::InvalidSpec(format!(
                    "obstacle must be negative outside the domain; psi({x:?}, {t}) = {}",
                    self.obstacle.eval(x, t)
                )));
            }
        }
        let psi0 = self.obstacle_at(0.0);
        let phi = self.initial_slice();
        if let Some(i) = (0..phi.len()).find(|&i| phi[i] < psi0[i]) {
            return Err(Error::InvalidSpec(format!(
                "initial datum lies below the obstacle at {:?}: phi = {}, psi = {}",
                self.grid.coords(i),
                phi[i],
                psi0[i]
            )));
        }
        let mut warnings = Vec::new();
        let max_psi = psi0.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !(max_psi > 0.0) {
            warnings.push(format!(
                "max psi(x, 0) = {max_psi} is not positive; the obstacle starts inactive"
            ));
        }
        Ok(warnings)
    }

    /// The same problem with the obstacle's time dependence removed.
    pub fn with_frozen_obstacle(&self) -> Self {
        Self {
            obstacle: self.obstacle.frozen(),
            ..self.clone()
        }
    }

    /// The same problem on a grid with `factor` times as many cells per axis
    /// and `factor` times as many steps.
    pub fn refined(&self, factor: usize) -> Result<Self> {
        let grid = Grid::new(self.grid.lower(), self.grid.upper(), self.grid.h() / factor as f64)?
            .with_halo(self.grid.halo())?;
        Ok(Self {
            grid,
            n_steps: self.n_steps * factor,
            ..self.clone()
        })
    }
}
