//! Fixed benchmark problems used by the tests, the book and the CLI presets.

use crate::discretization::Grid;
use crate::kernel::KernelSpec;
use crate::problem::ProblemSpec;
use crate::profiles::{InitialProfile, ObstacleProfile};

/// Number of cells on `(-1, 1)` for the benchmark grids.
pub const CELLS: usize = 128;

/// Decaying cap above a slowly sinking parabolic obstacle.
///
/// `alpha = 1.5`, `psi = 0.5 - 2 x^2 - 0.1 t`,
/// `phi = max(psi(x, 0), 0) + 0.1 (1 - x^2)`, `T = 0.25`, 64 steps.
pub fn b1() -> ProblemSpec {
    ProblemSpec {
        kernel: KernelSpec::pure(1.5, 1).expect("valid kernel"),
        grid: Grid::interval(-1.0, 1.0, CELLS).expect("valid grid"),
        horizon: 0.25,
        n_steps: 64,
        obstacle: ObstacleProfile::ParabolaCap {
            height: 0.5,
            curvature: 2.0,
            rate: -0.1,
        },
        initial: InitialProfile::ObstacleLift { amplitude: 0.1 },
    }
}

/// First-contact problem: an obstacle rising into a small decaying bump.
///
/// `psi = -0.4 + 0.8 t - 2 x^2`, `phi = 0.05 (1 - x^2)`. Contact starts at
/// the origin near `t = 0.53`, so the horizon is `T = 0.75` with the same
/// step size as [`b1`] (192 steps).
pub fn b2() -> ProblemSpec {
    ProblemSpec {
        kernel: KernelSpec::pure(1.5, 1).expect("valid kernel"),
        grid: Grid::interval(-1.0, 1.0, CELLS).expect("valid grid"),
        horizon: 0.75,
        n_steps: 192,
        obstacle: ObstacleProfile::RisingCap {
            base: -0.4,
            speed: 0.8,
            curvature: 2.0,
        },
        initial: InitialProfile::Bump { amplitude: 0.05 },
    }
}

/// [`b1`] with shifted obstacle parameters, for calibration transfer checks.
pub fn b1_perturbations() -> Vec<ProblemSpec> {
    let shifts = [(0.45, 2.0, -0.1), (0.55, 2.0, -0.1), (0.5, 1.8, -0.1), (0.5, 2.2, -0.15)];
    shifts
        .iter()
        .map(|&(height, curvature, rate)| ProblemSpec {
            obstacle: ObstacleProfile::ParabolaCap { height, curvature, rate },
            ..b1()
        })
        .collect()
}
