//! Jump kernels comparable to `|x - y|^{-n-alpha}` and the heat kernel of the
//! pure fractional operator.
//!
//! Every kernel here is radial, so symmetry `K(x, y) = K(y, x)` holds by
//! construction. The two-sided bound
//!
//! ```text
//! 1{|z| <= 2} |z|^{-n-alpha} / lambda  <=  K(z)  <=  lambda |z|^{-n-alpha}
//! ```
//!
//! is checked at construction where it can be (truncation radius) and on
//! demand with [`kernel_bounds_check`].

mod fundamental;

pub use fundamental::{
    calibrate_envelope_constant, envelope_profile, fundamental_solution_eval, fundamental_solution_envelope,
    FundamentalSolutionSpec,
};

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Radius inside which the lower kernel bound is enforced.
pub const LOWER_BOUND_RADIUS: f64 = 2.0;

/// Radial profile given by samples `(radius, value)`.
///
/// Values are interpolated linearly in log-log coordinates. Below the first
/// radius the profile continues as a pure power `r^{-n-alpha}` matched to the
/// first sample; beyond the last radius it is zero.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RadialProfile {
    pub radii: Vec<f64>,
    pub values: Vec<f64>,
}

impl RadialProfile {
    pub fn new(radii: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if radii.len() != values.len() || radii.len() < 2 {
            return Err(Error::InvalidSpec(
                "tabulated profile needs at least two (radius, value) rows".into(),
            ));
        }
        if radii[0] <= 0.0 || radii.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidSpec(
                "tabulated radii must be positive and strictly increasing".into(),
            ));
        }
        if values.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::InvalidSpec("tabulated values must be positive and finite".into()));
        }
        Ok(Self { radii, values })
    }

    /// Reads a headerless or headed CSV with two columns `radius,value`.
    pub fn from_csv_path(path: impl AsRef<Path>) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::from_csv_reader(file)
    }

    pub fn from_csv_reader<R: std::io::Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .comment(Some(b'#'))
            .from_reader(reader);
        let mut radii = Vec::new();
        let mut values = Vec::new();
        for (row, record) in rdr.records().enumerate() {
            let record = record?;
            if record.len() != 2 {
                return Err(Error::Format(format!("row {row}: expected 2 columns, got {}", record.len())));
            }
            let r = record[0].parse::<f64>();
            let v = record[1].parse::<f64>();
            match (r, v) {
                (Ok(r), Ok(v)) => {
                    radii.push(r);
                    values.push(v);
                }
                // tolerate a single header line
                _ if row == 0 => continue,
                _ => return Err(Error::Format(format!("row {row}: unparsable number"))),
            }
        }
        Self::new(radii, values)
    }

    fn eval(&self, r: f64, exponent: f64) -> f64 {
        let n = self.radii.len();
        if r < self.radii[0] {
            return self.values[0] * (self.radii[0] / r).powf(exponent);
        }
        if r > self.radii[n - 1] {
            return 0.0;
        }
        let k = match self.radii.partition_point(|&x| x <= r) {
            0 => 0,
            p if p >= n => n - 2,
            p => p - 1,
        };
        let (r0, r1) = (self.radii[k], self.radii[k + 1]);
        let (v0, v1) = (self.values[k].ln(), self.values[k + 1].ln());
        let s = (r.ln() - r0.ln()) / (r1.ln() - r0.ln());
        (v0 + s * (v1 - v0)).exp()
    }

    pub fn max_radius(&self) -> f64 {
        *self.radii.last().expect("validated non-empty")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum KernelVariant {
    /// `|z|^{-n-alpha}` on all of space.
    PureFractional,
    /// `|z|^{-n-alpha}` cut off beyond `radius`.
    Truncated { radius: f64 },
    /// A sampled radial profile.
    Tabulated(RadialProfile),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct KernelSpecRaw {
    alpha: f64,
    lambda: f64,
    dim: usize,
    variant: KernelVariant,
}

/// A validated jump kernel.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "KernelSpecRaw", into = "KernelSpecRaw")]
pub struct KernelSpec {
    alpha: f64,
    lambda: f64,
    dim: usize,
    variant: KernelVariant,
}

impl TryFrom<KernelSpecRaw> for KernelSpec {
    type Error = Error;

    fn try_from(raw: KernelSpecRaw) -> Result<Self> {
        KernelSpec::new(raw.alpha, raw.lambda, raw.dim, raw.variant)
    }
}

impl From<KernelSpec> for KernelSpecRaw {
    fn from(k: KernelSpec) -> Self {
        KernelSpecRaw {
            alpha: k.alpha,
            lambda: k.lambda,
            dim: k.dim,
            variant: k.variant,
        }
    }
}

impl KernelSpec {
    pub fn new(alpha: f64, lambda: f64, dim: usize, variant: KernelVariant) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 2.0) {
            return Err(Error::InvalidSpec(format!("alpha must lie in (0, 2), got {alpha}")));
        }
        if !(lambda >= 1.0) || !lambda.is_finite() {
            return Err(Error::InvalidSpec(format!("lambda must be >= 1, got {lambda}")));
        }
        if dim == 0 {
            return Err(Error::InvalidSpec("dimension must be positive".into()));
        }
        match &variant {
            KernelVariant::Truncated { radius } if !(*radius >= LOWER_BOUND_RADIUS) => {
                return Err(Error::InvalidSpec(format!(
                    "truncation radius {radius} < {LOWER_BOUND_RADIUS} violates the lower kernel bound"
                )));
            }
            KernelVariant::Tabulated(p) => {
                // re-run profile validation for deserialized input
                RadialProfile::new(p.radii.clone(), p.values.clone())?;
            }
            _ => {}
        }
        Ok(Self {
            alpha,
            lambda,
            dim,
            variant,
        })
    }

    pub fn pure(alpha: f64, dim: usize) -> Result<Self> {
        Self::new(alpha, 1.0, dim, KernelVariant::PureFractional)
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn variant(&self) -> &KernelVariant {
        &self.variant
    }

    /// Exponent `n + alpha` of the reference power.
    pub fn exponent(&self) -> f64 {
        self.dim as f64 + self.alpha
    }

    /// `K` as a function of the distance `r > 0`.
    pub fn radial(&self, r: f64) -> f64 {
        let p = self.exponent();
        match &self.variant {
            KernelVariant::PureFractional => r.powf(-p),
            KernelVariant::Truncated { radius } => {
                if r <= *radius {
                    r.powf(-p)
                } else {
                    0.0
                }
            }
            KernelVariant::Tabulated(profile) => profile.eval(r, p),
        }
    }

    /// Distance beyond which the kernel vanishes, if any.
    pub fn support_radius(&self) -> Option<f64> {
        match &self.variant {
            KernelVariant::PureFractional => None,
            KernelVariant::Truncated { radius } => Some(*radius),
            KernelVariant::Tabulated(p) => Some(p.max_radius()),
        }
    }

    /// Lower and upper envelopes at distance `r`.
    pub fn envelopes(&self, r: f64) -> (f64, f64) {
        let power = r.powf(-self.exponent());
        let lower = if r <= LOWER_BOUND_RADIUS { power / self.lambda } else { 0.0 };
        (lower, self.lambda * power)
    }
}

fn distance(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
}

/// Evaluates `K(x, y)`.
pub fn kernel_eval(spec: &KernelSpec, x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != spec.dim || y.len() != spec.dim {
        return Err(Error::Domain(format!(
            "points must have {} coordinates (got {} and {})",
            spec.dim,
            x.len(),
            y.len()
        )));
    }
    let r = distance(x, y);
    if r == 0.0 {
        return Err(Error::Domain("kernel is singular at coincident points".into()));
    }
    Ok(spec.radial(r))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundViolation {
    pub index: usize,
    pub distance: f64,
    pub value: f64,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BoundsReport {
    pub checked: usize,
    pub violations: Vec<BoundViolation>,
}

impl BoundsReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks the two-sided kernel bound at every pair.
pub fn kernel_bounds_check(spec: &KernelSpec, pairs: &[(Vec<f64>, Vec<f64>)]) -> Result<BoundsReport> {
    // relative slack for the equality case lambda = 1
    const SLACK: f64 = 1e-12;
    let mut report = BoundsReport {
        checked: pairs.len(),
        violations: Vec::new(),
    };
    for (index, (x, y)) in pairs.iter().enumerate() {
        let value = kernel_eval(spec, x, y)?;
        let r = distance(x, y);
        let (lower, upper) = spec.envelopes(r);
        if value < lower * (1.0 - SLACK) || value > upper * (1.0 + SLACK) {
            report.violations.push(BoundViolation {
                index,
                distance: r,
                value,
                lower,
                upper,
            });
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pure_fractional_unit_distance() {
        let k = KernelSpec::pure(1.0, 1).unwrap();
        assert_eq!(kernel_eval(&k, &[0.0], &[1.0]).unwrap(), 1.0);
    }

    #[test]
    fn truncated_vanishes_beyond_radius() {
        let k = KernelSpec::new(0.5, 1.0, 1, KernelVariant::Truncated { radius: 2.0 }).unwrap();
        assert_eq!(kernel_eval(&k, &[0.0], &[3.0]).unwrap(), 0.0);
        assert!(kernel_eval(&k, &[0.0], &[1.5]).unwrap() > 0.0);
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(matches!(KernelSpec::pure(2.0, 1), Err(Error::InvalidSpec(_))));
        assert!(matches!(KernelSpec::pure(0.0, 1), Err(Error::InvalidSpec(_))));
        assert!(matches!(
            KernelSpec::new(1.0, 0.5, 1, KernelVariant::PureFractional),
            Err(Error::InvalidSpec(_))
        ));
        assert!(matches!(
            KernelSpec::new(1.0, 1.0, 1, KernelVariant::Truncated { radius: 1.5 }),
            Err(Error::InvalidSpec(_))
        ));
    }

    #[test]
    fn coincident_points_are_a_domain_error() {
        let k = KernelSpec::pure(1.0, 2).unwrap();
        assert!(matches!(kernel_eval(&k, &[0.5, 0.5], &[0.5, 0.5]), Err(Error::Domain(_))));
    }

    #[test]
    fn tabulated_violation_is_reported_once() {
        // follows r^{-1.5} except one radius that is 3x too large
        let radii: Vec<f64> = (1..=40).map(|i| 0.1 * i as f64).collect();
        let mut values: Vec<f64> = radii.iter().map(|r: &f64| r.powf(-1.5)).collect();
        values[9] *= 3.0; // r = 1.0
        let k = KernelSpec::new(
            0.5,
            2.0,
            1,
            KernelVariant::Tabulated(RadialProfile::new(radii.clone(), values).unwrap()),
        )
        .unwrap();
        let pairs: Vec<_> = radii.iter().map(|&r| (vec![0.0], vec![r])).collect();
        let report = kernel_bounds_check(&k, &pairs).unwrap();
        assert_eq!(report.violations.len(), 1);
        assert_eq!(report.violations[0].index, 9);
    }

    #[test]
    fn truncated_pairs_inside_radius_satisfy_bounds() {
        let k = KernelSpec::new(1.2, 1.0, 1, KernelVariant::Truncated { radius: 2.0 }).unwrap();
        let pairs: Vec<_> = (1..=200)
            .map(|i| (vec![0.3], vec![0.3 + 0.01 * i as f64]))
            .collect();
        assert!(kernel_bounds_check(&k, &pairs).unwrap().is_ok());
    }

    #[test]
    fn profile_csv_roundtrip() {
        let csv = "radius,value\n0.5,2.0\n1.0,1.0\n2.5,0.1\n";
        let p = RadialProfile::from_csv_reader(csv.as_bytes()).unwrap();
        assert_eq!(p.radii, vec![0.5, 1.0, 2.5]);
        let bad = "0.5,2.0\n0.4,1.0\n";
        assert!(RadialProfile::from_csv_reader(bad.as_bytes()).is_err());
    }

    #[test]
    fn spec_json_round_trips_and_validates() {
        let json = r#"{"alpha":1.5,"lambda":1.0,"dim":1,"variant":{"kind":"truncated","radius":3.0}}"#;
        let k: KernelSpec = serde_json::from_str(json).unwrap();
        assert_eq!(k.support_radius(), Some(3.0));
        let back = serde_json::to_string(&k).unwrap();
        assert_eq!(serde_json::from_str::<KernelSpec>(&back).unwrap(), k);
        let bad = r#"{"alpha":2.5,"lambda":1.0,"dim":1,"variant":{"kind":"pure_fractional"}}"#;
        assert!(serde_json::from_str::<KernelSpec>(bad).is_err());
    }
}
