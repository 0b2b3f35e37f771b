//! Fixed-step integrators for `u̇ = g(u) + A u`.
//!
//! * [`rk_step`]: plain explicit Runge-Kutta, no linear part.
//! * [`lawson_step_general`]: the generalized Runge-Kutta process written out
//!   term by term, with a separate exponential for every pair of abscissae.
//!   Only diagonal operators are accepted; it exists as a reference.
//! * [`slrk_step`]: the simple Lawson step. Because the abscissae are ordered
//!   and equally spaced, the state and all earlier slopes are advanced by one
//!   precomputed propagator `exp(Δc·h·A)` each time `c` steps up, and no other
//!   exponential is ever formed.

use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;

use num_traits::ToPrimitive;

use crate::linop::{make_propagator, make_propagator_scaled, LinearOperator, LinopError, Propagator};
use crate::tableau::{Increment, Tableau};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum IntegrateError {
    #[error("non-finite value at stage {stage}")]
    NonFinite { stage: usize },
    #[error("tableau `{0}` does not have ordered, equally spaced abscissae reaching c = 1")]
    NonConforming(alloc::string::String),
    #[error("plan carries a linear operator; use slrk_step")]
    LinearPartPresent,
    #[error("general Lawson stepping needs a diagonal operator")]
    NotDiagonal,
    #[error("state has length {got}, problem has dimension {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("need at least one step")]
    NoSteps,
    #[error(transparent)]
    Linop(#[from] LinopError),
}

/// The nonlinear part `g`. Any `FnMut(&[Complex64], &mut [Complex64])`
/// qualifies; stateful implementors can keep scratch buffers.
pub trait Nonlinearity {
    fn eval(&mut self, u: &[Complex64], out: &mut [Complex64]);
}

impl<F: FnMut(&[Complex64], &mut [Complex64])> Nonlinearity for F {
    fn eval(&mut self, u: &[Complex64], out: &mut [Complex64]) {
        self(u, out)
    }
}

/// `u̇ = g(u) + A u` with an optional stiff operator.
pub struct OdeProblem<G> {
    pub g: G,
    pub linear: Option<LinearOperator>,
    pub dim: usize,
}

impl<G: Nonlinearity> OdeProblem<G> {
    pub fn new(g: G, dim: usize) -> Self {
        OdeProblem {
            g,
            linear: None,
            dim,
        }
    }

    pub fn with_linear(g: G, linear: LinearOperator) -> Self {
        OdeProblem {
            dim: linear.dim(),
            g,
            linear: Some(linear),
        }
    }

    /// Plan for this problem: Lawson if it has a linear part, plain RK if not.
    pub fn plan(&self, tab: &Tableau, h: f64) -> Result<StepPlan, IntegrateError> {
        match &self.linear {
            Some(op) => StepPlan::lawson(tab, h, op),
            None => Ok(StepPlan::explicit(tab, h)),
        }
    }
}

/// Everything that stays fixed across steps.
#[derive(Debug, Clone)]
pub struct StepPlan {
    a: Vec<Vec<f64>>,
    b: Vec<f64>,
    h: f64,
    /// `advance[j]`: apply the propagator before evaluating stage `j`.
    advance: Vec<bool>,
    /// Propagator applications after the last stage to reach `c = 1`.
    closing: usize,
    propagator: Option<Propagator>,
}

/// Counters for one step.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StepStats {
    pub g_evals: usize,
    /// Times the state `u` was advanced by the propagator.
    pub propagator_blocks: usize,
    /// Vector products with the propagator, state and slopes together.
    pub vector_applications: usize,
}

impl StepPlan {
    pub fn explicit(tab: &Tableau, h: f64) -> Self {
        let ft = tab.to_float();
        StepPlan {
            a: ft.a,
            b: ft.b,
            h,
            advance: vec![false; tab.stages()],
            closing: 0,
            propagator: None,
        }
    }

    /// Lawson plan. Builds exactly one propagator, for `Δc·h`.
    pub fn lawson(tab: &Tableau, h: f64, op: &LinearOperator) -> Result<Self, IntegrateError> {
        let report = tab.spacing();
        let (step, closing) = report
            .lawson_schedule()
            .ok_or_else(|| IntegrateError::NonConforming(tab.name().into()))?;
        let mut advance = vec![false; tab.stages()];
        for (j, inc) in report.increments.iter().enumerate() {
            advance[j + 1] = *inc == Increment::Step;
        }
        let propagator = match (step.numer().to_u32(), step.denom().to_u32()) {
            (Some(num), Some(den)) => make_propagator_scaled(op, h, num, den)?,
            _ => make_propagator(op, step.to_f64() * h)?,
        };
        let ft = tab.to_float();
        Ok(StepPlan {
            a: ft.a,
            b: ft.b,
            h,
            advance,
            closing,
            propagator: Some(propagator),
        })
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn stages(&self) -> usize {
        self.b.len()
    }

    pub fn propagator(&self) -> Option<&Propagator> {
        self.propagator.as_ref()
    }

    fn check_dim(&self, n: usize) -> Result<(), IntegrateError> {
        match &self.propagator {
            Some(p) if p.dim() != n => Err(IntegrateError::DimensionMismatch {
                expected: p.dim(),
                got: n,
            }),
            _ => Ok(()),
        }
    }
}

fn all_finite(v: &[Complex64]) -> bool {
    v.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

/// `out = h·g(arg)` with finiteness checks on both sides.
fn eval_slope<G: Nonlinearity>(
    g: &mut G,
    h: f64,
    arg: &[Complex64],
    out: &mut [Complex64],
    stage: usize,
) -> Result<(), IntegrateError> {
    if !all_finite(arg) {
        return Err(IntegrateError::NonFinite { stage });
    }
    g.eval(arg, out);
    for x in out.iter_mut() {
        *x *= h;
    }
    if !all_finite(out) {
        return Err(IntegrateError::NonFinite { stage });
    }
    Ok(())
}

fn stage_argument(u: &[Complex64], row: &[f64], k: &[Vec<Complex64>], out: &mut [Complex64]) {
    out.copy_from_slice(u);
    for (a, kj) in row.iter().zip(k) {
        if *a == 0.0 {
            continue;
        }
        for (o, x) in out.iter_mut().zip(kj) {
            *o += x * *a;
        }
    }
}

/// One classical explicit step: `k_i = h g(u + Σ a_ij k_j)`, `u⁺ = u + Σ b_i k_i`.
pub fn rk_step<G: Nonlinearity>(
    plan: &StepPlan,
    g: &mut G,
    u: &[Complex64],
) -> Result<Vec<Complex64>, IntegrateError> {
    if plan.propagator.is_some() {
        return Err(IntegrateError::LinearPartPresent);
    }
    let n = u.len();
    let s = plan.stages();
    let mut k = vec![vec![Complex64::new(0.0, 0.0); n]; s];
    let mut arg = vec![Complex64::new(0.0, 0.0); n];
    for j in 0..s {
        stage_argument(u, &plan.a[j][..j], &k[..j], &mut arg);
        eval_slope(g, plan.h, &arg, &mut k[j], j)?;
    }
    let mut out = u.to_vec();
    for (bi, ki) in plan.b.iter().zip(&k) {
        for (o, x) in out.iter_mut().zip(ki) {
            *o += x * *bi;
        }
    }
    Ok(out)
}

/// One simple Lawson step. Without a linear part this is [`rk_step`].
pub fn slrk_step<G: Nonlinearity>(
    plan: &StepPlan,
    g: &mut G,
    u0: &[Complex64],
) -> Result<(Vec<Complex64>, StepStats), IntegrateError> {
    let n = u0.len();
    plan.check_dim(n)?;
    let s = plan.stages();
    let mut stats = StepStats::default();
    let mut u = u0.to_vec();
    let mut k = vec![vec![Complex64::new(0.0, 0.0); n]; s];
    let mut arg = vec![Complex64::new(0.0, 0.0); n];
    let mut scratch = Vec::new();

    let mut advance = |u: &mut [Complex64],
                       k: &mut [Vec<Complex64>],
                       stats: &mut StepStats|
     -> Result<(), IntegrateError> {
        if let Some(e) = &plan.propagator {
            e.apply_in_place(u, &mut scratch)?;
            for km in k.iter_mut() {
                e.apply_in_place(km, &mut scratch)?;
            }
            stats.propagator_blocks += 1;
            stats.vector_applications += 1 + k.len();
        }
        Ok(())
    };

    eval_slope(g, plan.h, &u, &mut k[0], 0)?;
    stats.g_evals += 1;
    for j in 1..s {
        if plan.advance[j] {
            advance(&mut u, &mut k[..j], &mut stats)?;
        }
        stage_argument(&u, &plan.a[j][..j], &k[..j], &mut arg);
        eval_slope(g, plan.h, &arg, &mut k[j], j)?;
        stats.g_evals += 1;
    }
    for _ in 0..plan.closing {
        advance(&mut u, &mut k[..], &mut stats)?;
    }
    for (bi, ki) in plan.b.iter().zip(&k) {
        if *bi == 0.0 {
            continue;
        }
        for (o, x) in u.iter_mut().zip(ki) {
            *o += x * *bi;
        }
    }
    Ok((u, stats))
}

/// The generalized Runge-Kutta process, one exponential per coefficient:
///
/// `U_i = e^{c_i hA} u₀ + Σ_j a_ij e^{(c_i − c_j)hA} k_j`, `k_i = h g(U_i)`,
/// `u⁺ = e^{hA} u₀ + Σ_i b_i e^{(1 − c_i)hA} k_i`.
pub fn lawson_step_general<G: Nonlinearity>(
    tab: &Tableau,
    g: &mut G,
    op: &LinearOperator,
    u0: &[Complex64],
    h: f64,
) -> Result<Vec<Complex64>, IntegrateError> {
    let lambda = op.as_diagonal().ok_or(IntegrateError::NotDiagonal)?;
    if lambda.len() != u0.len() {
        return Err(IntegrateError::DimensionMismatch {
            expected: lambda.len(),
            got: u0.len(),
        });
    }
    let ft = tab.to_float();
    let s = ft.stages();
    let n = u0.len();
    let flow = |tau: f64, l: Complex64| (l * (tau * h)).exp();
    let mut k: Vec<Vec<Complex64>> = Vec::with_capacity(s);
    let mut stage = vec![Complex64::new(0.0, 0.0); n];
    for i in 0..s {
        let ci = ft.c[i];
        for m in 0..n {
            let mut acc = flow(ci, lambda[m]) * u0[m];
            for (j, kj) in k.iter().enumerate() {
                if ft.a[i][j] != 0.0 {
                    acc += flow(ci - ft.c[j], lambda[m]) * kj[m] * ft.a[i][j];
                }
            }
            stage[m] = acc;
        }
        let mut ki = vec![Complex64::new(0.0, 0.0); n];
        eval_slope(g, h, &stage, &mut ki, i)?;
        k.push(ki);
    }
    Ok((0..n)
        .map(|m| {
            let mut acc = flow(1.0, lambda[m]) * u0[m];
            for (i, ki) in k.iter().enumerate() {
                if ft.b[i] != 0.0 {
                    acc += flow(1.0 - ft.c[i], lambda[m]) * ki[m] * ft.b[i];
                }
            }
            acc
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Integration {
    pub state: Vec<Complex64>,
    /// Every state including the initial one, when requested.
    pub trajectory: Option<Vec<Vec<Complex64>>>,
    pub g_evals: usize,
}

/// `n_steps` repeated steps of `plan`.
pub fn integrate<G: Nonlinearity>(
    plan: &StepPlan,
    g: &mut G,
    u0: &[Complex64],
    n_steps: usize,
    record: bool,
) -> Result<Integration, IntegrateError> {
    if n_steps == 0 {
        return Err(IntegrateError::NoSteps);
    }
    let mut trajectory = record.then(|| {
        let mut t = Vec::with_capacity(n_steps + 1);
        t.push(u0.to_vec());
        t
    });
    let mut u = u0.to_vec();
    let mut g_evals = 0;
    for _ in 0..n_steps {
        let (next, stats) = slrk_step(plan, g, &u)?;
        g_evals += stats.g_evals;
        u = next;
        if let Some(t) = trajectory.as_mut() {
            t.push(u.clone());
        }
    }
    Ok(Integration {
        state: u,
        trajectory,
        g_evals,
    })
}
