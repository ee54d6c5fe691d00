//! Heat kernel `G(x, t)` of the pure fractional operator, i.e. the inverse
//! Fourier transform of `exp(-t |xi|^alpha)`.
//!
//! In one dimension `G(x, t) = (1/pi) Re int_0^inf exp(i |x| xi - t xi^alpha) d xi`.
//! The integrand is analytic in the sector `0 <= arg xi <= theta` as long as
//! `alpha * theta < pi/2`, so the path is rotated onto the ray
//! `xi = r e^{i theta}`. On that ray both factors decay exponentially and the
//! number of oscillations stays bounded for every `(x, t)`, which keeps a fixed
//! panel rule accurate from `x = 0` out to the far tail.
//!
//! Two dimensions reuse the one-dimensional kernel through the inverse Abel
//! transform `G_2(rho) = -(1/pi) int_0^inf dG_1/dx(rho cosh u) du`.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{KernelSpec, KernelVariant};
use crate::error::{Error, Result};
use crate::quad::GaussLegendre;

/// Decay exponent at which the ray integrals are truncated (`e^{-46}` ~ 1e-20).
const TRUNCATION_EXPONENT: f64 = 46.0;
/// Relative tolerance on the resolution-halving error estimate.
const ACCURACY_TOLERANCE: f64 = 1e-9;
const GL_ORDER: usize = 16;
const GRADING_LEVELS: usize = 40;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FundamentalSolutionSpec {
    pub alpha: f64,
    pub dim: usize,
    /// Number of uniform panels on the truncated ray.
    pub quadrature_resolution: usize,
    /// Constant of the two-sided envelope; obtained from
    /// [`calibrate_envelope_constant`].
    pub envelope_constant: f64,
}

impl FundamentalSolutionSpec {
    pub fn new(alpha: f64, dim: usize, quadrature_resolution: usize, envelope_constant: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 2.0) {
            return Err(Error::InvalidSpec(format!("alpha must lie in (0, 2), got {alpha}")));
        }
        if !(dim == 1 || dim == 2) {
            return Err(Error::Unsupported(format!("heat kernel is implemented for n = 1, 2 (got {dim})")));
        }
        if quadrature_resolution < 2 {
            return Err(Error::InvalidSpec("quadrature resolution must be at least 2".into()));
        }
        if !(envelope_constant >= 1.0) {
            return Err(Error::InvalidSpec("envelope constant must be >= 1".into()));
        }
        Ok(Self {
            alpha,
            dim,
            quadrature_resolution,
            envelope_constant,
        })
    }

    /// Heat kernel matching a translation-invariant jump kernel.
    pub fn for_kernel(kernel: &KernelSpec, quadrature_resolution: usize, envelope_constant: f64) -> Result<Self> {
        if !matches!(kernel.variant(), KernelVariant::PureFractional) {
            return Err(Error::Unsupported(
                "the heat kernel is only available for the pure fractional kernel".into(),
            ));
        }
        Self::new(kernel.alpha(), kernel.dim(), quadrature_resolution, envelope_constant)
    }
}

/// Rotation angle of the integration ray.
fn ray_angle(alpha: f64) -> f64 {
    if alpha <= 1.0 {
        PI / 4.0
    } else {
        PI / (4.0 * alpha)
    }
}

struct RayRule {
    alpha: f64,
    panels: usize,
    rule: GaussLegendre,
}

impl RayRule {
    fn new(alpha: f64, panels: usize) -> Self {
        Self {
            alpha,
            panels,
            rule: GaussLegendre::new(GL_ORDER),
        }
    }

    /// `int_0^inf (xi)^power exp(i z xi - t xi^alpha) d xi` along the rotated ray.
    fn integral(&self, z: f64, t: f64, power: i32) -> Complex64 {
        let theta = ray_angle(self.alpha);
        let dir = Complex64::from_polar(1.0, theta);
        let rot_alpha = Complex64::from_polar(1.0, self.alpha * theta);
        let decay_z = z * theta.sin();
        let decay_t = t * (self.alpha * theta).cos();
        let r_max = truncation_radius(decay_z, decay_t, self.alpha, TRUNCATION_EXPONENT + power.max(0) as f64 * 4.0);
        let f = |r: f64| -> Complex64 {
            let xi = dir * r;
            let expo = Complex64::i() * z * xi - rot_alpha * (t * r.powf(self.alpha));
            let mut val = expo.exp() * dir;
            for _ in 0..power {
                val *= xi;
            }
            val
        };
        let width = r_max / self.panels as f64;
        let mut total = Complex64::new(0.0, 0.0);
        for p in 1..self.panels {
            let lo = p as f64 * width;
            total += integrate_complex(&self.rule, lo, lo + width, &f);
        }
        // first panel graded toward the r^alpha endpoint singularity
        let mut hi = width;
        for _ in 0..GRADING_LEVELS {
            let lo = 0.5 * hi;
            total += integrate_complex(&self.rule, lo, hi, &f);
            hi = lo;
        }
        total + integrate_complex(&self.rule, 0.0, hi, &f)
    }
}

fn integrate_complex<F: Fn(f64) -> Complex64>(rule: &GaussLegendre, a: f64, b: f64, f: &F) -> Complex64 {
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let mut acc = Complex64::new(0.0, 0.0);
    for (&x, &w) in rule.nodes.iter().zip(&rule.weights) {
        acc += f(mid + half * x) * w;
    }
    acc * half
}

/// Smallest `r` with `a r + b r^alpha >= target`.
fn truncation_radius(a: f64, b: f64, alpha: f64, target: f64) -> f64 {
    let g = |r: f64| a * r + b * r.powf(alpha) - target;
    let mut hi = 1.0;
    while g(hi) < 0.0 {
        hi *= 2.0;
    }
    let mut lo = hi;
    while g(lo) > 0.0 && lo > 1e-300 {
        lo *= 0.5;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    hi
}

fn g1(rule: &RayRule, x: f64, t: f64) -> f64 {
    rule.integral(x.abs(), t, 0).re / PI
}

fn dg1_dx(rule: &RayRule, x: f64, t: f64) -> f64 {
    (Complex64::i() * rule.integral(x, t, 1)).re / PI
}

fn g2(rule: &RayRule, inner: &RayRule, rho: f64, t: f64) -> f64 {
    let alpha = rule.alpha;
    if rho == 0.0 {
        // (1/2pi) int_0^inf exp(-t s^alpha) s ds on the real axis
        let s_max = (TRUNCATION_EXPONENT / t).powf(1.0 / alpha) * 1.5;
        let gl = &rule.rule;
        let width = s_max / rule.panels as f64;
        let f = |s: f64| (-t * s.powf(alpha)).exp() * s;
        let mut total = gl.composite(width, s_max, rule.panels - 1, f);
        total += gl.graded_from_zero(width, GRADING_LEVELS, f);
        return total / (2.0 * PI);
    }
    let scale = rho.max(t.powf(1.0 / alpha));
    let u_max = (1e6 * scale / rho).acosh();
    let f = |u: f64| dg1_dx(inner, rho * u.cosh(), t);
    let total = rule.rule.composite(0.0, u_max, rule.panels, f);
    // far tail decays like exp(-(2 + alpha) u)
    let tail = f(u_max) / (2.0 + alpha);
    -(total + tail) / PI
}

fn evaluate(spec: &FundamentalSolutionSpec, radius: f64, t: f64, panels: usize) -> f64 {
    let rule = RayRule::new(spec.alpha, panels);
    match spec.dim {
        1 => g1(&rule, radius, t),
        _ => {
            let inner = RayRule::new(spec.alpha, (panels / 2).max(2));
            g2(&rule, &inner, radius, t)
        }
    }
}

/// Evaluates `G(x, t)` for `t > 0`.
///
/// The result is cross-checked against a run at half the resolution; a
/// discrepancy above the tolerance is reported as [`Error::Accuracy`].
pub fn fundamental_solution_eval(spec: &FundamentalSolutionSpec, x: &[f64], t: f64) -> Result<f64> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::Domain(format!("heat kernel needs t > 0, got {t}")));
    }
    if x.len() != spec.dim {
        return Err(Error::Domain(format!("point must have {} coordinates", spec.dim)));
    }
    let radius = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    let fine = evaluate(spec, radius, t, spec.quadrature_resolution);
    let coarse = evaluate(spec, radius, t, (spec.quadrature_resolution / 2).max(1));
    let estimate = (fine - coarse).abs();
    let tolerance = ACCURACY_TOLERANCE * fine.abs();
    if !(estimate <= tolerance) || !(fine > 0.0) {
        return Err(Error::Accuracy { estimate, tolerance });
    }
    Ok(fine)
}

/// Reference profile `min(t^{-n/alpha}, t / |x|^{n+alpha})`.
pub fn envelope_profile(alpha: f64, dim: usize, x: &[f64], t: f64) -> f64 {
    let n = dim as f64;
    let radius = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    let near = t.powf(-n / alpha);
    if radius == 0.0 {
        return near;
    }
    near.min(t / radius.powf(n + alpha))
}

/// Two-sided envelope `(m / C, C m)`.
pub fn fundamental_solution_envelope(spec: &FundamentalSolutionSpec, x: &[f64], t: f64) -> Result<(f64, f64)> {
    if !(t > 0.0) {
        return Err(Error::Domain(format!("heat kernel needs t > 0, got {t}")));
    }
    let m = envelope_profile(spec.alpha, spec.dim, x, t);
    Ok((m / spec.envelope_constant, m * spec.envelope_constant))
}

/// Smallest `C` such that `m / C <= G <= C m` at every sampled `(|x|, t)`.
pub fn calibrate_envelope_constant(
    alpha: f64,
    dim: usize,
    quadrature_resolution: usize,
    radii: &[f64],
    times: &[f64],
) -> Result<f64> {
    let spec = FundamentalSolutionSpec::new(alpha, dim, quadrature_resolution, 1.0)?;
    let mut c: f64 = 1.0;
    for &r in radii {
        let mut x = vec![0.0; dim];
        x[0] = r;
        for &t in times {
            let g = fundamental_solution_eval(&spec, &x, t)?;
            let m = envelope_profile(alpha, dim, &x, t);
            c = c.max(g / m).max(m / g);
        }
    }
    Ok(c)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(alpha: f64, dim: usize) -> FundamentalSolutionSpec {
        FundamentalSolutionSpec::new(alpha, dim, 64, 10.0).unwrap()
    }

    #[test]
    fn cauchy_kernel_closed_form() {
        let s = spec(1.0, 1);
        for &(x, t) in &[(0.0, 1.0), (0.3, 0.2), (4.0, 1.0), (25.0, 0.01), (0.001, 3.0)] {
            let g = fundamental_solution_eval(&s, &[x], t).unwrap();
            let exact = t / (PI * (t * t + x * x));
            assert!((g - exact).abs() <= 1e-11 * exact, "x={x} t={t}: {g} vs {exact}");
        }
    }

    #[test]
    fn two_dimensional_cauchy_closed_form() {
        let s = FundamentalSolutionSpec::new(1.0, 2, 32, 10.0).unwrap();
        for &(r, t) in &[(0.0, 1.0), (0.5, 1.0), (3.0, 0.5)] {
            let g = fundamental_solution_eval(&s, &[r, 0.0], t).unwrap();
            let exact = t / (2.0 * PI * (t * t + r * r).powf(1.5));
            assert!((g - exact).abs() <= 1e-8 * exact, "r={r} t={t}: {g} vs {exact}");
        }
    }

    #[test]
    fn symmetric_in_x() {
        let s = spec(0.7, 1);
        let a = fundamental_solution_eval(&s, &[0.37], 0.5).unwrap();
        let b = fundamental_solution_eval(&s, &[-0.37], 0.5).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn non_positive_time_is_rejected() {
        let s = spec(1.5, 1);
        assert!(matches!(fundamental_solution_eval(&s, &[0.0], 0.0), Err(Error::Domain(_))));
        assert!(matches!(fundamental_solution_envelope(&s, &[0.0], -1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn too_coarse_resolution_reports_accuracy_error() {
        let s = FundamentalSolutionSpec::new(0.1, 1, 2, 10.0).unwrap();
        let err = fundamental_solution_eval(&s, &[0.0], 1.0).unwrap_err();
        assert!(matches!(err, Error::Accuracy { .. }), "{err:?}");
    }

    #[test]
    fn envelope_arithmetic() {
        assert_eq!(envelope_profile(1.0, 1, &[0.0], 0.25), 4.0);
        assert!((envelope_profile(1.0, 1, &[10.0], 1.0) - 0.01).abs() < 1e-15);
        let s = spec(1.0, 1);
        let (lo, hi) = fundamental_solution_envelope(&s, &[10.0], 1.0).unwrap();
        assert!((lo - 0.001).abs() < 1e-15 && (hi - 0.1).abs() < 1e-14);
    }

    #[test]
    fn non_pure_kernel_has_no_heat_kernel() {
        let k = KernelSpec::new(1.0, 1.0, 1, KernelVariant::Truncated { radius: 2.0 }).unwrap();
        assert!(matches!(
            FundamentalSolutionSpec::for_kernel(&k, 64, 10.0),
            Err(Error::Unsupported(_))
        ));
    }
}
