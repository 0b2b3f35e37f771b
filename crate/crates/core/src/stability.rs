//! Linear stability: the polynomial `Φ(z)` of an explicit scheme, the
//! two-rate Lawson amplification `e^{z₂}Φ(z₁)`, and boundaries of the regions
//! where that amplification has modulus at most one.

use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;
// libm-backed float methods when built without std
#[allow(unused_imports)]
use num_traits::Float;

use crate::rational::Rational;
use crate::tableau::Tableau;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum StabilityError {
    #[error("need at least {min} angular samples, got {got}")]
    TooFewSamples { min: usize, got: usize },
    #[error("constant stability polynomial has no bounded region")]
    Unbounded,
}

pub const MIN_ANGULAR_SAMPLES: usize = 16;

/// Radial samples per ray before bisection refines a crossing.
const RAY_SAMPLES: usize = 4000;

/// `coeffs[k]` multiplies `z^k`; trailing zeros are trimmed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StabilityPolynomial {
    coeffs: Vec<Rational>,
}

impl StabilityPolynomial {
    pub fn new(mut coeffs: Vec<Rational>) -> Self {
        while coeffs.len() > 1 && coeffs.last().is_some_and(Rational::is_zero) {
            coeffs.pop();
        }
        if coeffs.is_empty() {
            coeffs.push(Rational::zero());
        }
        StabilityPolynomial { coeffs }
    }

    pub fn coeffs(&self) -> &[Rational] {
        &self.coeffs
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn float_coeffs(&self) -> Vec<f64> {
        self.coeffs.iter().map(Rational::to_f64).collect()
    }

    /// Horner evaluation in double precision.
    pub fn eval(&self, z: Complex64) -> Complex64 {
        self.coeffs
            .iter()
            .rev()
            .fold(Complex64::new(0.0, 0.0), |acc, c| acc * z + c.to_f64())
    }

    pub fn eval_exact(&self, z: &Rational) -> Rational {
        self.coeffs
            .iter()
            .rev()
            .fold(Rational::zero(), |acc, c| acc * z + c)
    }

    fn evaluator(&self) -> Horner {
        Horner(self.float_coeffs())
    }

    /// A radius beyond which `|e^{z₂}Φ(z)| > 1` everywhere.
    fn escape_radius(&self, z2_re: f64) -> Result<f64, StabilityError> {
        let c = self.float_coeffs();
        let d = self.degree();
        if d == 0 {
            return Err(StabilityError::Unbounded);
        }
        let target = (-z2_re).exp();
        let lower = |r: f64| {
            c[d].abs() * r.powi(d as i32)
                - (0..d).map(|k| c[k].abs() * r.powi(k as i32)).sum::<f64>()
        };
        let mut r = 1.0;
        while lower(r) <= target {
            r *= 2.0;
        }
        Ok(r)
    }
}

struct Horner(Vec<f64>);

impl Horner {
    fn eval(&self, z: Complex64) -> Complex64 {
        self.0
            .iter()
            .rev()
            .fold(Complex64::new(0.0, 0.0), |acc, &c| acc * z + c)
    }
}

/// `coeffs[k] = bᵀ A^{k−1} 𝟙` for `k ≥ 1`, `coeffs[0] = 1`, exact.
pub fn stability_polynomial(tab: &Tableau) -> StabilityPolynomial {
    let s = tab.stages();
    let mut coeffs = Vec::with_capacity(s + 1);
    coeffs.push(Rational::one());
    let mut v = vec![Rational::one(); s];
    for _ in 1..=s {
        coeffs.push(tab.b().iter().zip(&v).map(|(b, x)| b * x).sum());
        v = (0..s)
            .map(|i| (0..i).map(|j| &tab.a()[i][j] * &v[j]).sum())
            .collect();
    }
    StabilityPolynomial::new(coeffs)
}

/// `e^{z₂}·Φ(z₁)`: one Lawson step on `ẋ = λ₁x + λ₂x` with `z = hλ`.
pub fn slrk_amplification(phi: &StabilityPolynomial, z1: Complex64, z2: Complex64) -> Complex64 {
    z2.exp() * phi.eval(z1)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegionBoundary {
    /// Outermost unit-modulus crossing on each ray that has one, by angle.
    pub points: Vec<Complex64>,
    /// Angle of each entry in `points`.
    pub angles: Vec<f64>,
    /// Rays along which nothing but the origin is stable.
    pub missing_angles: Vec<f64>,
    pub z2: Complex64,
}

impl RegionBoundary {
    /// Largest `||e^{z₂}Φ(z)| − 1|` over the stored points.
    pub fn max_residual(&self, phi: &StabilityPolynomial) -> f64 {
        self.points
            .iter()
            .map(|&z| (slrk_amplification(phi, z, self.z2).norm() - 1.0).abs())
            .fold(0.0, f64::max)
    }
}

/// Traces the region `|e^{z₂}Φ(z)| ≤ 1` by bisecting the outermost crossing
/// along `angular_samples` equally spaced rays from the origin.
pub fn region_boundary(
    phi: &StabilityPolynomial,
    z2: Complex64,
    angular_samples: usize,
) -> Result<RegionBoundary, StabilityError> {
    if angular_samples < MIN_ANGULAR_SAMPLES {
        return Err(StabilityError::TooFewSamples {
            min: MIN_ANGULAR_SAMPLES,
            got: angular_samples,
        });
    }
    let r_max = phi.escape_radius(z2.re)?;
    let horner = phi.evaluator();
    // |e^{z₂}| = e^{Re z₂}; the phase never matters
    let scale = z2.re.exp();
    let modulus = |z: Complex64| scale * horner.eval(z).norm();

    let mut out = RegionBoundary {
        points: Vec::with_capacity(angular_samples),
        angles: Vec::with_capacity(angular_samples),
        missing_angles: Vec::new(),
        z2,
    };
    for k in 0..angular_samples {
        let theta = core::f64::consts::PI * (1.0 - 2.0 * k as f64 / angular_samples as f64);
        let dir = Complex64::from_polar(1.0, theta);
        let dr = r_max / RAY_SAMPLES as f64;
        // Walk inward from the escape radius to the first stable sample.
        let hit = (1..=RAY_SAMPLES)
            .rev()
            .find(|&i| modulus(dir * (i as f64 * dr)) <= 1.0);
        match hit {
            Some(i) => {
                let mut lo = i as f64 * dr;
                let mut hi = lo + dr;
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if mid <= lo || mid >= hi {
                        break;
                    }
                    if modulus(dir * mid) <= 1.0 {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                out.points.push(dir * lo);
                out.angles.push(theta);
            }
            None => out.missing_angles.push(theta),
        }
    }
    Ok(out)
}

/// The most negative real `z₁` such that `|e^{z₂}Φ(x)| ≤ 1` on all of
/// `[z₁, 0]`, to within 1e−12.
pub fn real_axis_boundary(phi: &StabilityPolynomial, z2: f64) -> f64 {
    debug_assert!(z2 <= 0.0);
    let r_max = match phi.escape_radius(z2) {
        Ok(r) => r,
        Err(_) => return f64::NEG_INFINITY,
    };
    let horner = phi.evaluator();
    let scale = z2.exp();
    let modulus = |x: f64| scale * horner.eval(Complex64::new(x, 0.0)).norm();
    let steps = 20 * RAY_SAMPLES;
    let dx = r_max / steps as f64;
    let first_bad = (1..=steps + 1)
        .find(|&i| modulus(-(i as f64) * dx) > 1.0)
        .expect("unstable beyond the escape radius");
    let mut inside = -((first_bad - 1) as f64) * dx;
    let mut outside = -(first_bad as f64) * dx;
    while inside - outside > 1e-12 {
        let mid = 0.5 * (inside + outside);
        if mid >= inside || mid <= outside {
            break;
        }
        if modulus(mid) <= 1.0 {
            inside = mid;
        } else {
            outside = mid;
        }
    }
    inside
}
