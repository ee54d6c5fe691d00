//! Registry of named, parameterized obstacle and initial-data profiles.

use serde::{Deserialize, Serialize};

fn norm2(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

/// Obstacle `psi(x, t)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ObstacleProfile {
    /// `height + rate * t - curvature * |x|^2`.
    ParabolaCap {
        height: f64,
        curvature: f64,
        #[serde(default)]
        rate: f64,
    },
    /// `base + speed * t - curvature * |x|^2`, an obstacle pushed upward.
    RisingCap { base: f64, speed: f64, curvature: f64 },
    /// `value` everywhere.
    Constant { value: f64 },
}

impl ObstacleProfile {
    pub fn eval(&self, x: &[f64], t: f64) -> f64 {
        match *self {
            ObstacleProfile::ParabolaCap {
                height,
                curvature,
                rate,
            } => height + rate * t - curvature * norm2(x),
            ObstacleProfile::RisingCap { base, speed, curvature } => base + speed * t - curvature * norm2(x),
            ObstacleProfile::Constant { value } => value,
        }
    }

    /// Whether `psi` does not depend on time.
    pub fn is_time_independent(&self) -> bool {
        match *self {
            ObstacleProfile::ParabolaCap { rate, .. } => rate == 0.0,
            ObstacleProfile::RisingCap { speed, .. } => speed == 0.0,
            ObstacleProfile::Constant { .. } => true,
        }
    }

    /// The same profile with its time dependence removed.
    pub fn frozen(&self) -> Self {
        match self.clone() {
            ObstacleProfile::ParabolaCap { height, curvature, .. } => ObstacleProfile::ParabolaCap {
                height,
                curvature,
                rate: 0.0,
            },
            ObstacleProfile::RisingCap { base, curvature, .. } => ObstacleProfile::RisingCap {
                base,
                speed: 0.0,
                curvature,
            },
            c @ ObstacleProfile::Constant { .. } => c,
        }
    }

    /// The profile multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        match *self {
            ObstacleProfile::ParabolaCap {
                height,
                curvature,
                rate,
            } => ObstacleProfile::ParabolaCap {
                height: factor * height,
                curvature: factor * curvature,
                rate: factor * rate,
            },
            ObstacleProfile::RisingCap { base, speed, curvature } => ObstacleProfile::RisingCap {
                base: factor * base,
                speed: factor * speed,
                curvature: factor * curvature,
            },
            ObstacleProfile::Constant { value } => ObstacleProfile::Constant { value: factor * value },
        }
    }
}

/// Initial datum `phi(x)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialProfile {
    Constant { value: f64 },
    /// `amplitude * (1 - |x|^2)_+`.
    Bump { amplitude: f64 },
    /// `max(psi(x, 0), 0) + amplitude * (1 - |x|^2)_+`.
    ObstacleLift { amplitude: f64 },
    /// `amplitude * exp(-|x|^2 / width^2)`.
    Gaussian { amplitude: f64, width: f64 },
}

impl InitialProfile {
    pub fn eval(&self, x: &[f64], obstacle: &ObstacleProfile) -> f64 {
        let bump = (1.0 - norm2(x)).max(0.0);
        match *self {
            InitialProfile::Constant { value } => value,
            InitialProfile::Bump { amplitude } => amplitude * bump,
            InitialProfile::ObstacleLift { amplitude } => obstacle.eval(x, 0.0).max(0.0) + amplitude * bump,
            InitialProfile::Gaussian { amplitude, width } => amplitude * (-norm2(x) / (width * width)).exp(),
        }
    }
}
