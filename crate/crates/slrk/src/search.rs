//! Damped Newton-Raphson search for explicit tableaux that satisfy the order
//! conditions and sit on a prescribed grid of abscissae.
//!
//! The unknowns are `x = b ⊕ a`, with `a` the strictly-lower entries in
//! row-major order. The residual stacks `Φ(t) − 1/γ(t)` for every rooted tree
//! up to the target order, then `Σ_j a_ij − c_i` for stages `1..s`.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::Serialize;

use slrk_core::order_conditions::{order_residuals, ConditionSet, OrderError, RootedTree};
use slrk_core::tableau::{FloatTableau, TableauError};
use slrk_core::{Rational, Tableau};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SearchError {
    #[error("invalid abscissa pattern: {0}")]
    Pattern(String),
    #[error("damping must lie in (0, 1], got {0}")]
    Damping(f64),
    #[error(transparent)]
    Order(#[from] OrderError),
    #[error("expected {expected} unknowns, got {got}")]
    Dimension { expected: usize, got: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchConfig {
    pub stages: usize,
    pub target_order: usize,
    pub delta_c: Rational,
    pub c_pattern: Vec<Rational>,
    pub damping: f64,
    /// Take full steps once `‖F‖∞` drops below this.
    pub full_step_below: f64,
    pub max_iters: usize,
    pub residual_tol: f64,
    /// Give up once `‖x‖∞` exceeds this.
    pub divergence_bound: f64,
    pub rng_seed: u64,
    /// Standard deviation of the Gaussian initial guess.
    pub init_scale: f64,
}

impl SearchConfig {
    pub fn new(
        stages: usize,
        target_order: usize,
        delta_c: Rational,
        c_pattern: Vec<Rational>,
    ) -> Result<Self, SearchError> {
        let cfg = SearchConfig {
            stages,
            target_order,
            delta_c,
            c_pattern,
            damping: 0.5,
            full_step_below: 1e-3,
            max_iters: 500,
            residual_tol: 1e-12,
            divergence_bound: 1e6,
            rng_seed: 0,
            init_scale: 0.5,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Uses [`default_pattern`].
    pub fn on_grid(stages: usize, target_order: usize, delta_c: Rational) -> Result<Self, SearchError> {
        let pattern = default_pattern(stages, &delta_c)?;
        SearchConfig::new(stages, target_order, delta_c, pattern)
    }

    pub fn validate(&self) -> Result<(), SearchError> {
        if self.stages == 0 {
            return Err(SearchError::Pattern("no stages".into()));
        }
        if self.c_pattern.len() != self.stages {
            return Err(SearchError::Pattern(format!(
                "{} abscissae for {} stages",
                self.c_pattern.len(),
                self.stages
            )));
        }
        if !self.c_pattern[0].is_zero() {
            return Err(SearchError::Pattern("c[0] must be 0".into()));
        }
        if self.delta_c.is_zero() || self.delta_c.is_negative() {
            return Err(SearchError::Pattern("delta_c must be positive".into()));
        }
        for (i, w) in self.c_pattern.windows(2).enumerate() {
            let d = &w[1] - &w[0];
            if !d.is_zero() && d != self.delta_c {
                return Err(SearchError::Pattern(format!(
                    "c[{}] − c[{}] = {d} is neither 0 nor {}",
                    i + 1,
                    i,
                    self.delta_c
                )));
            }
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(SearchError::Damping(self.damping));
        }
        Ok(())
    }

    pub fn unknowns(&self) -> usize {
        self.stages + self.stages * (self.stages - 1) / 2
    }
}

/// `c = [0, Δc, Δc, …, Δc, 2Δc, …, 1]`: the first increment followed by as
/// many repeats as the stage count leaves over, then one step per stage.
pub fn default_pattern(stages: usize, delta_c: &Rational) -> Result<Vec<Rational>, SearchError> {
    let steps = Rational::one()
        .checked_div(delta_c)
        .map_err(|_| SearchError::Pattern("delta_c is zero".into()))?;
    if !steps.is_integer() || steps.is_negative() {
        return Err(SearchError::Pattern(format!("1/Δc = {steps} is not a whole number")));
    }
    let steps = steps
        .numer()
        .to_usize()
        .ok_or_else(|| SearchError::Pattern("Δc too small".into()))?;
    if stages == 0 || (stages > 1 && stages - 1 < steps) {
        return Err(SearchError::Pattern(format!(
            "{stages} stages cannot reach c = 1 in steps of {delta_c}"
        )));
    }
    let repeats = stages - 1 - steps.min(stages - 1);
    let mut c = vec![Rational::zero()];
    let mut level = 0usize;
    for i in 1..stages {
        if i == 1 || i > 1 + repeats {
            level += 1;
        }
        c.push(delta_c * &Rational::from_integer(level as i64));
    }
    Ok(c)
}

/// Allocation-free residual evaluation in `f64`.
#[derive(Debug, Clone)]
pub struct ResidualModel {
    stages: usize,
    pattern: Vec<f64>,
    /// Child indices per tree; children always precede their parent.
    children: Vec<Vec<usize>>,
    inv_density: Vec<f64>,
}

impl ResidualModel {
    pub fn new(cfg: &SearchConfig) -> Result<Self, SearchError> {
        cfg.validate()?;
        let set = ConditionSet::up_to_order(cfg.target_order)?;
        let index: BTreeMap<&RootedTree, usize> =
            set.trees().iter().enumerate().map(|(i, t)| (t, i)).collect();
        let children = set
            .trees()
            .iter()
            .map(|t| t.children().iter().map(|c| index[c]).collect())
            .collect();
        Ok(ResidualModel {
            stages: cfg.stages,
            pattern: cfg.c_pattern.iter().map(Rational::to_f64).collect(),
            children,
            inv_density: set.densities().iter().map(|&g| 1.0 / g as f64).collect(),
        })
    }

    pub fn unknowns(&self) -> usize {
        self.stages + self.stages * (self.stages - 1) / 2
    }

    pub fn equations(&self) -> usize {
        self.children.len() + self.stages - 1
    }

    fn a_index(i: usize, j: usize) -> usize {
        i * (i - 1) / 2 + j
    }

    /// Writes `F(x)` into `out`; `work` is resized as needed.
    pub fn eval_into(&self, x: &[f64], out: &mut [f64], work: &mut Vec<f64>) {
        let s = self.stages;
        let (b, a) = x.split_at(s);
        let n = self.children.len();
        work.clear();
        work.resize(n * s + s, 0.0);
        let (aphi, tmp) = work.split_at_mut(n * s);
        for (t, kids) in self.children.iter().enumerate() {
            tmp.fill(1.0);
            for &k in kids {
                for i in 0..s {
                    tmp[i] *= aphi[k * s + i];
                }
            }
            let mut w = 0.0;
            for i in 0..s {
                w += b[i] * tmp[i];
                let mut acc = 0.0;
                for j in 0..i {
                    acc += a[Self::a_index(i, j)] * tmp[j];
                }
                aphi[t * s + i] = acc;
            }
            out[t] = w - self.inv_density[t];
        }
        for i in 1..s {
            let row: f64 = (0..i).map(|j| a[Self::a_index(i, j)]).sum();
            out[n + i - 1] = row - self.pattern[i];
        }
    }

    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.equations()];
        self.eval_into(x, &mut out, &mut Vec::new());
        out
    }

    /// Central differences, step `1e−6·max(1, |x_m|)`.
    pub fn jacobian(&self, x: &[f64]) -> DMatrix<f64> {
        let (rows, cols) = (self.equations(), self.unknowns());
        let mut j = DMatrix::zeros(rows, cols);
        let mut xp = x.to_vec();
        let (mut fp, mut fm) = (vec![0.0; rows], vec![0.0; rows]);
        let mut work = Vec::new();
        for m in 0..cols {
            let h = 1e-6 * x[m].abs().max(1.0);
            xp[m] = x[m] + h;
            self.eval_into(&xp, &mut fp, &mut work);
            xp[m] = x[m] - h;
            self.eval_into(&xp, &mut fm, &mut work);
            xp[m] = x[m];
            let width = 2.0 * h;
            for k in 0..rows {
                j[(k, m)] = (fp[k] - fm[k]) / width;
            }
        }
        j
    }
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| if x.is_nan() { f64::NAN } else { m.max(x.abs()) })
}

pub fn residual_vector(x: &[f64], cfg: &SearchConfig) -> Result<Vec<f64>, SearchError> {
    let model = ResidualModel::new(cfg)?;
    check_len(&model, x)?;
    Ok(model.eval(x))
}

pub fn jacobian(x: &[f64], cfg: &SearchConfig) -> Result<DMatrix<f64>, SearchError> {
    let model = ResidualModel::new(cfg)?;
    check_len(&model, x)?;
    Ok(model.jacobian(x))
}

fn check_len(model: &ResidualModel, x: &[f64]) -> Result<(), SearchError> {
    if x.len() != model.unknowns() {
        return Err(SearchError::Dimension {
            expected: model.unknowns(),
            got: x.len(),
        });
    }
    Ok(())
}

/// `b ⊕ a` from a tableau, in the search's unknown order.
pub fn flatten(t: &FloatTableau) -> Vec<f64> {
    let s = t.stages();
    let mut x = t.b.clone();
    for i in 1..s {
        x.extend_from_slice(&t.a[i][..i]);
    }
    x
}

pub fn unflatten(x: &[f64], stages: usize, name: &str) -> FloatTableau {
    let s = stages;
    let mut a = vec![vec![0.0; s]; s];
    let mut k = s;
    for (i, row) in a.iter_mut().enumerate().skip(1) {
        row[..i].copy_from_slice(&x[k..k + i]);
        k += i;
    }
    FloatTableau::new(name, a, x[..s].to_vec())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchState {
    pub x: Vec<f64>,
    pub residual_norm: f64,
    pub iters: usize,
}

impl SearchState {
    pub fn new(x: Vec<f64>, model: &ResidualModel) -> Self {
        let residual_norm = inf_norm(&model.eval(&x));
        SearchState {
            x,
            residual_norm,
            iters: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum StepFailure {
    #[error("singular value decomposition did not converge")]
    Svd,
    #[error("non-finite residual or Jacobian")]
    NonFinite,
}

/// `x − γ·J⁺F`, with `J⁺` the SVD pseudoinverse cut at `σ_max·1e−10`.
pub fn newton_step_with(
    state: &SearchState,
    model: &ResidualModel,
    gamma: f64,
) -> Result<SearchState, StepFailure> {
    let f = model.eval(&state.x);
    let j = model.jacobian(&state.x);
    if !f.iter().all(|v| v.is_finite()) || !j.iter().all(|v| v.is_finite()) {
        return Err(StepFailure::NonFinite);
    }
    let svd = nalgebra::linalg::SVD::try_new(j, true, true, f64::EPSILON, 1000).ok_or(StepFailure::Svd)?;
    let cutoff = svd.singular_values.max() * 1e-10;
    let dx = svd
        .solve(&DVector::from_vec(f), cutoff)
        .map_err(|_| StepFailure::Svd)?;
    let x: Vec<f64> = state.x.iter().zip(dx.iter()).map(|(x, d)| x - gamma * d).collect();
    let residual_norm = inf_norm(&model.eval(&x));
    Ok(SearchState {
        x,
        residual_norm,
        iters: state.iters + 1,
    })
}

/// One step with the configured damping, or a full step near a root.
pub fn newton_step(
    state: &SearchState,
    model: &ResidualModel,
    cfg: &SearchConfig,
) -> Result<SearchState, StepFailure> {
    let gamma = if state.residual_norm < cfg.full_step_below {
        1.0
    } else {
        cfg.damping
    };
    newton_step_with(state, model, gamma)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SearchStatus {
    Converged,
    Stalled,
    Diverged,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchResult {
    pub status: SearchStatus,
    /// The final iterate as a tableau, when converged.
    pub tableau: Option<FloatTableau>,
    /// `‖F‖∞` before the first step and after each one.
    pub history: Vec<f64>,
    pub x: Vec<f64>,
    pub stream: u64,
}

impl SearchResult {
    pub fn residual_norm(&self) -> f64 {
        *self.history.last().expect("history starts with the initial residual")
    }
}

/// Gaussian initial guess from stream `stream` of the configured seed.
pub fn initial_guess(cfg: &SearchConfig, stream: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    rng.set_stream(stream);
    let normal = Normal::new(0.0, cfg.init_scale).expect("positive scale");
    (0..cfg.unknowns()).map(|_| normal.sample(&mut rng)).collect()
}

pub fn search_from(x0: Vec<f64>, model: &ResidualModel, cfg: &SearchConfig, stream: u64) -> SearchResult {
    let mut state = SearchState::new(x0, model);
    let mut history = vec![state.residual_norm];
    let finish = |status, state: SearchState, history| SearchResult {
        tableau: (status == SearchStatus::Converged)
            .then(|| unflatten(&state.x, cfg.stages, &format!("search-{}-{stream}", cfg.rng_seed))),
        status,
        history,
        x: state.x,
        stream,
    };
    loop {
        if state.residual_norm <= cfg.residual_tol {
            return finish(SearchStatus::Converged, state, history);
        }
        if state.iters >= cfg.max_iters {
            return finish(SearchStatus::Stalled, state, history);
        }
        match newton_step(&state, model, cfg) {
            Ok(next) => {
                history.push(next.residual_norm);
                let escaped = next.x.iter().any(|v| !v.is_finite() || v.abs() > cfg.divergence_bound);
                state = next;
                if escaped || !state.residual_norm.is_finite() {
                    return finish(SearchStatus::Diverged, state, history);
                }
            }
            Err(_) => return finish(SearchStatus::Stalled, state, history),
        }
    }
}

pub fn search(cfg: &SearchConfig) -> Result<SearchResult, SearchError> {
    let model = ResidualModel::new(cfg)?;
    Ok(search_from(initial_guess(cfg, 0), &model, cfg, 0))
}

/// Independent searches from streams `0..n_seeds`, in stream order.
pub fn multi_start_search(cfg: &SearchConfig, n_seeds: usize) -> Result<Vec<SearchResult>, SearchError> {
    let model = ResidualModel::new(cfg)?;
    Ok((0..n_seeds as u64)
        .into_par_iter()
        .map(|i| search_from(initial_guess(cfg, i), &model, cfg, i))
        .collect())
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RationalizeError {
    #[error("coefficient {0} has no rational approximation within the bound")]
    NoApproximation(f64),
    #[error("rationalized tableau fails {failing} order conditions")]
    NotARoot { failing: usize },
    #[error(transparent)]
    Tableau(#[from] TableauError),
    #[error(transparent)]
    Order(#[from] OrderError),
}

/// Last continued-fraction convergent of `x` with denominator at most
/// `max_denominator`, expanded from the exact binary value of `x`.
pub fn best_rational(x: f64, max_denominator: u64) -> Option<Rational> {
    let mut r = BigRational::from_float(x)?;
    let bound = BigInt::from(max_denominator);
    let (mut h0, mut h1) = (BigInt::zero(), BigInt::one());
    let (mut k0, mut k1) = (BigInt::one(), BigInt::zero());
    let mut best = None;
    loop {
        let a = r.floor().to_integer();
        let h2 = &a * &h1 + &h0;
        let k2 = &a * &k1 + &k0;
        if k2 > bound {
            break;
        }
        best = Some(Rational::from(BigRational::new(h2.clone(), k2.clone())));
        let frac = &r - BigRational::from_integer(a);
        if frac.is_zero() {
            break;
        }
        r = frac.recip();
        (h0, h1, k0, k1) = (h1, h2, k1, k2);
    }
    best
}

/// Snaps every coefficient to a small-denominator rational and keeps the
/// result only if it satisfies every order condition up to `order` exactly.
pub fn rationalize(
    t: &FloatTableau,
    max_denominator: u64,
    order: usize,
) -> Result<Tableau, RationalizeError> {
    let snap = |v: f64| best_rational(v, max_denominator).ok_or(RationalizeError::NoApproximation(v));
    let s = t.stages();
    let b = t.b.iter().map(|&v| snap(v)).collect::<Result<Vec<_>, _>>()?;
    let rows = (0..s)
        .map(|i| t.a[i][..i].iter().map(|&v| snap(v)).collect())
        .collect::<Result<Vec<Vec<_>>, _>>()?;
    let exact = Tableau::from_lower_rows(t.name.clone(), rows, b)?;
    let failing = order_residuals(&exact, order)?
        .iter()
        .filter(|c| !c.satisfied())
        .count();
    if failing > 0 {
        return Err(RationalizeError::NotARoot { failing });
    }
    Ok(exact)
}
