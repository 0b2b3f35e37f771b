//! The stiff linear operator `A` and the propagator `exp(τA)`.
//!
//! Diagonal operators (spectral discretizations) exponentiate elementwise in
//! extended precision.
//! Dense operators go through scaling and squaring with the degree-13
//! diagonal Padé approximant, scaled so that `‖τA/2^s‖₁ ≤ 1/2`.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use dashu_float::round::mode::HalfEven;
use dashu_float::FBig;
use num_complex::Complex64;
// libm-backed float methods when built without std
#[allow(unused_imports)]
use num_traits::Float;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LinopError {
    #[error("dimension mismatch: operator is {expected}, vector is {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("non-finite operator entry at {0}")]
    NonFinite(usize),
    #[error("dense matrix data has {got} entries, expected {n}x{n}")]
    BadShape { n: usize, got: usize },
    #[error("singular Padé denominator")]
    Singular,
}

/// Square complex matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    n: usize,
    data: Vec<Complex64>,
}

impl DenseMatrix {
    pub fn new(n: usize, data: Vec<Complex64>) -> Result<Self, LinopError> {
        if data.len() != n * n {
            return Err(LinopError::BadShape { n, got: data.len() });
        }
        Ok(DenseMatrix { n, data })
    }

    pub fn from_real(n: usize, data: &[f64]) -> Result<Self, LinopError> {
        Self::new(n, data.iter().map(|&x| Complex64::new(x, 0.0)).collect())
    }

    pub fn identity(n: usize) -> Self {
        let mut data = vec![Complex64::new(0.0, 0.0); n * n];
        for i in 0..n {
            data[i * n + i] = Complex64::new(1.0, 0.0);
        }
        DenseMatrix { n, data }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.data[i * self.n + j]
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    /// Maximum absolute column sum.
    pub fn norm1(&self) -> f64 {
        (0..self.n)
            .map(|j| (0..self.n).map(|i| self.get(i, j).norm()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn scaled(&self, k: Complex64) -> Self {
        DenseMatrix {
            n: self.n,
            data: self.data.iter().map(|&x| x * k).collect(),
        }
    }

    pub fn matmul(&self, rhs: &DenseMatrix) -> DenseMatrix {
        let n = self.n;
        let mut out = vec![Complex64::new(0.0, 0.0); n * n];
        for i in 0..n {
            for k in 0..n {
                let aik = self.data[i * n + k];
                if aik == Complex64::new(0.0, 0.0) {
                    continue;
                }
                for j in 0..n {
                    out[i * n + j] += aik * rhs.data[k * n + j];
                }
            }
        }
        DenseMatrix { n, data: out }
    }

    /// `Σ coeff_k · M_k`, plus `diag` on the diagonal.
    fn combine(n: usize, terms: &[(f64, &DenseMatrix)], diag: f64) -> DenseMatrix {
        let mut out = DenseMatrix::identity(n).scaled(Complex64::new(diag, 0.0));
        for &(c, m) in terms {
            for (o, &x) in out.data.iter_mut().zip(&m.data) {
                *o += x * c;
            }
        }
        out
    }

    pub fn mul_vec(&self, v: &[Complex64], out: &mut [Complex64]) {
        let n = self.n;
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.data[i * n..(i + 1) * n]
                .iter()
                .zip(v)
                .map(|(a, x)| a * x)
                .sum();
        }
    }

    /// Solves `self · X = rhs` by LU with partial pivoting.
    fn solve(&self, rhs: &DenseMatrix) -> Result<DenseMatrix, LinopError> {
        let n = self.n;
        let mut lu = self.data.clone();
        let mut x = rhs.data.clone();
        for col in 0..n {
            let pivot = (col..n)
                .max_by(|&a, &b| lu[a * n + col].norm().total_cmp(&lu[b * n + col].norm()))
                .expect("non-empty pivot range");
            if lu[pivot * n + col].norm() == 0.0 {
                return Err(LinopError::Singular);
            }
            if pivot != col {
                for j in 0..n {
                    lu.swap(col * n + j, pivot * n + j);
                    x.swap(col * n + j, pivot * n + j);
                }
            }
            let d = lu[col * n + col];
            for row in col + 1..n {
                let f = lu[row * n + col] / d;
                if f == Complex64::new(0.0, 0.0) {
                    continue;
                }
                for j in col..n {
                    let t = lu[col * n + j];
                    lu[row * n + j] -= f * t;
                }
                for j in 0..n {
                    let t = x[col * n + j];
                    x[row * n + j] -= f * t;
                }
            }
        }
        for col in (0..n).rev() {
            let d = lu[col * n + col];
            for j in 0..n {
                let mut acc = x[col * n + j];
                for k in col + 1..n {
                    acc -= lu[col * n + k] * x[k * n + j];
                }
                x[col * n + j] = acc / d;
            }
        }
        Ok(DenseMatrix { n, data: x })
    }
}

/// Numerator coefficients of the [13/13] Padé approximant to `e^x`, scaled
/// so the leading one is 1.
pub const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];

/// Largest `‖·‖₁` the Padé approximant is applied to after scaling.
pub const PADE_NORM_TARGET: f64 = 0.5;

/// Matrix exponential by scaling and squaring.
pub fn expm(m: &DenseMatrix) -> Result<DenseMatrix, LinopError> {
    let n = m.dim();
    let norm = m.norm1();
    let squarings = if norm > PADE_NORM_TARGET {
        (norm / PADE_NORM_TARGET).log2().ceil() as i32
    } else {
        0
    };
    let b = m.scaled(Complex64::new(0.5f64.powi(squarings), 0.0));
    let c = &PADE13;
    let b2 = b.matmul(&b);
    let b4 = b2.matmul(&b2);
    let b6 = b4.matmul(&b2);

    let u_inner = DenseMatrix::combine(n, &[(c[13], &b6), (c[11], &b4), (c[9], &b2)], 0.0);
    let u_outer = DenseMatrix::combine(n, &[(c[7], &b6), (c[5], &b4), (c[3], &b2)], c[1]);
    let mut u = b6.matmul(&u_inner);
    for (x, y) in u.data.iter_mut().zip(&u_outer.data) {
        *x += y;
    }
    let u = b.matmul(&u);

    let v_inner = DenseMatrix::combine(n, &[(c[12], &b6), (c[10], &b4), (c[8], &b2)], 0.0);
    let v_outer = DenseMatrix::combine(n, &[(c[6], &b6), (c[4], &b4), (c[2], &b2)], c[0]);
    let mut v = b6.matmul(&v_inner);
    for (x, y) in v.data.iter_mut().zip(&v_outer.data) {
        *x += y;
    }

    let mut num = v.clone();
    let mut den = v;
    for ((p, q), &x) in num.data.iter_mut().zip(den.data.iter_mut()).zip(&u.data) {
        *p += x;
        *q -= x;
    }
    let mut r = den.solve(&num)?;
    for _ in 0..squarings {
        r = r.matmul(&r);
    }
    Ok(r)
}

/// The stiff operator `A`.
#[derive(Debug, Clone, PartialEq)]
pub enum LinearOperator {
    /// Eigenvalues of an operator that is diagonal in the state's basis.
    Diagonal(Vec<Complex64>),
    Dense(DenseMatrix),
}

impl LinearOperator {
    pub fn diagonal(spectrum: Vec<Complex64>) -> Result<Self, LinopError> {
        if let Some(i) = spectrum.iter().position(|z| !z.is_finite()) {
            return Err(LinopError::NonFinite(i));
        }
        Ok(LinearOperator::Diagonal(spectrum))
    }

    pub fn diagonal_real(spectrum: &[f64]) -> Result<Self, LinopError> {
        Self::diagonal(spectrum.iter().map(|&x| Complex64::new(x, 0.0)).collect())
    }

    pub fn dense(m: DenseMatrix) -> Result<Self, LinopError> {
        if let Some(i) = m.data().iter().position(|z| !z.is_finite()) {
            return Err(LinopError::NonFinite(i));
        }
        Ok(LinearOperator::Dense(m))
    }

    pub fn zero(n: usize) -> Self {
        LinearOperator::Diagonal(vec![Complex64::new(0.0, 0.0); n])
    }

    pub fn dim(&self) -> usize {
        match self {
            LinearOperator::Diagonal(d) => d.len(),
            LinearOperator::Dense(m) => m.dim(),
        }
    }

    pub fn as_diagonal(&self) -> Option<&[Complex64]> {
        match self {
            LinearOperator::Diagonal(d) => Some(d),
            LinearOperator::Dense(_) => None,
        }
    }
}

/// Precomputed action of `exp(τA)`.
///
/// Diagonal factors are stored unevaluated as `head + tail`, together
/// accurate to far beyond double precision, and multiplied in with a
/// compensated product. Repeated application then costs about one rounding
/// per product instead of accumulating the error of the factor itself.
#[derive(Debug, Clone, PartialEq)]
pub enum Propagator {
    Diagonal {
        factors: Vec<Complex64>,
        tails: Vec<Complex64>,
        tau: f64,
    },
    Dense {
        matrix: DenseMatrix,
        tau: f64,
    },
}

type Big = FBig<HalfEven>;

/// Working precision in bits for the diagonal exponentials.
const EXP_PRECISION: usize = 160;

fn big(x: f64) -> Big {
    // every finite f64 converts exactly
    Big::try_from(x)
        .expect("finite")
        .with_precision(EXP_PRECISION)
        .value()
}

/// Nearest double and the rounded remainder.
fn split(v: &Big) -> (f64, f64) {
    let head = v.to_f64().value();
    if !head.is_finite() {
        return (head, 0.0);
    }
    (head, (v - big(head)).to_f64().value())
}

/// `exp(τλ)` as a head and tail. `tau` is exact to working precision.
fn exp_split(lambda: Complex64, tau: &Big) -> (Complex64, Complex64) {
    if lambda.re == 0.0 && lambda.im == 0.0 {
        return (Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0));
    }
    let modulus = (big(lambda.re) * tau).exp();
    if lambda.im == 0.0 {
        let (h, t) = split(&modulus);
        return (Complex64::new(h, 0.0), Complex64::new(t, 0.0));
    }
    let (sin, cos) = (big(lambda.im) * tau).sin_cos();
    let (rh, rt) = split(&(&modulus * &cos));
    let (ih, it) = split(&(&modulus * &sin));
    (Complex64::new(rh, ih), Complex64::new(rt, it))
}

/// `u·(head + tail)` rounded once per component, up to a tiny tail error.
fn mul_compensated(u: Complex64, head: Complex64, tail: Complex64) -> Complex64 {
    let two_prod = |a: f64, b: f64| {
        let p = a * b;
        (p, a.mul_add(b, -p))
    };
    let two_sum = |a: f64, b: f64| {
        let s = a + b;
        let bb = s - a;
        (s, (a - (s - bb)) + (b - bb))
    };
    let (p1, e1) = two_prod(u.re, head.re);
    let (p2, e2) = two_prod(u.im, head.im);
    let (sr, er) = two_sum(p1, -p2);
    let re = sr + (e1 - e2 + er + u.re * tail.re - u.im * tail.im);
    let (q1, f1) = two_prod(u.re, head.im);
    let (q2, f2) = two_prod(u.im, head.re);
    let (si, ei) = two_sum(q1, q2);
    let im = si + (f1 + f2 + ei + u.re * tail.im + u.im * tail.re);
    Complex64::new(re, im)
}

pub fn make_propagator(op: &LinearOperator, tau: f64) -> Result<Propagator, LinopError> {
    make_propagator_scaled(op, tau, 1, 1)
}

/// Propagator for `τ = h·num/den`, with the product formed exactly for
/// diagonal operators rather than rounded to a double first.
pub fn make_propagator_scaled(
    op: &LinearOperator,
    h: f64,
    num: u32,
    den: u32,
) -> Result<Propagator, LinopError> {
    let tau = h * f64::from(num) / f64::from(den);
    Ok(match op {
        LinearOperator::Diagonal(d) => {
            let tau_big = big(h) * big(f64::from(num)) / big(f64::from(den));
            // spectral operators repeat eigenvalues heavily
            let mut cache: BTreeMap<(u64, u64), (Complex64, Complex64)> = BTreeMap::new();
            let mut factors = Vec::with_capacity(d.len());
            let mut tails = Vec::with_capacity(d.len());
            for &l in d {
                let key = (l.re.to_bits(), l.im.to_bits());
                let (f, t) = *cache.entry(key).or_insert_with(|| exp_split(l, &tau_big));
                factors.push(f);
                tails.push(t);
            }
            Propagator::Diagonal { factors, tails, tau }
        }
        LinearOperator::Dense(m) => Propagator::Dense {
            matrix: expm(&m.scaled(Complex64::new(tau, 0.0)))?,
            tau,
        },
    })
}

impl Propagator {
    pub fn tau(&self) -> f64 {
        match self {
            Propagator::Diagonal { tau, .. } | Propagator::Dense { tau, .. } => *tau,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Propagator::Diagonal { factors, .. } => factors.len(),
            Propagator::Dense { matrix, .. } => matrix.dim(),
        }
    }

    fn check(&self, len: usize) -> Result<(), LinopError> {
        if len != self.dim() {
            return Err(LinopError::DimensionMismatch {
                expected: self.dim(),
                got: len,
            });
        }
        Ok(())
    }

    /// `exp(τA)·v`.
    pub fn apply(&self, v: &[Complex64]) -> Result<Vec<Complex64>, LinopError> {
        let mut out = v.to_vec();
        let mut scratch = Vec::new();
        self.apply_in_place(&mut out, &mut scratch)?;
        Ok(out)
    }

    /// In-place form; `scratch` is only touched by dense propagators.
    pub fn apply_in_place(
        &self,
        v: &mut [Complex64],
        scratch: &mut Vec<Complex64>,
    ) -> Result<(), LinopError> {
        self.check(v.len())?;
        match self {
            Propagator::Diagonal { factors, tails, .. } => {
                for ((x, f), t) in v.iter_mut().zip(factors).zip(tails) {
                    *x = mul_compensated(*x, *f, *t);
                }
            }
            Propagator::Dense { matrix, .. } => {
                scratch.clear();
                scratch.extend_from_slice(v);
                matrix.mul_vec(scratch, v);
            }
        }
        Ok(())
    }
}
