//! Two-dimensional incompressible Navier-Stokes in vorticity form on the
//! periodic square `[0, 2π)²`, discretized pseudo-spectrally:
//!
//! `∂ω/∂t = −u·∇ω + ν∇²ω + f_ω`, with `∇²ψ = −ω` and `u = (∂ψ/∂y, −∂ψ/∂x)`.
//!
//! Spectral arrays are `n × n`, row-major with the `y` wavenumber as the row.
//! The forward transform is unnormalized and the inverse carries `1/n²`.
//! The viscous term is the diagonal linear part; everything else is `g`.

use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use serde::Serialize;

use slrk_core::integrator::{integrate, IntegrateError, StepPlan};
use slrk_core::linop::LinearOperator;
use slrk_core::Tableau;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum NsError {
    #[error("grid size {0} must be a power of two and at least {MIN_GRID}")]
    GridSize(usize),
    #[error("the benchmark needs n ≥ {MIN_RUN_GRID}, got {0}")]
    RunGridSize(usize),
    #[error("viscosity must be positive, got {0}")]
    Viscosity(f64),
    #[error("step counts must be strictly increasing and below the reference count")]
    StepCounts,
    #[error(transparent)]
    Integrate(#[from] IntegrateError),
}

pub const MIN_GRID: usize = 4;

/// Smallest grid the benchmark runs on.
pub const MIN_RUN_GRID: usize = 16;

/// Signed wavenumber of FFT index `i` on `n` points, in `(−n/2, n/2]`.
pub fn wavenumber(i: usize, n: usize) -> i64 {
    if i <= n / 2 {
        i as i64
    } else {
        i as i64 - n as i64
    }
}

#[derive(Clone)]
pub struct SpectralGrid {
    n: usize,
    k: Vec<i64>,
    /// Two-thirds rule; the Nyquist row and column are always excluded.
    mask: Vec<bool>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for SpectralGrid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SpectralGrid").field("n", &self.n).finish()
    }
}

impl SpectralGrid {
    pub fn new(n: usize) -> Result<Self, NsError> {
        if n < MIN_GRID || !n.is_power_of_two() {
            return Err(NsError::GridSize(n));
        }
        let k: Vec<i64> = (0..n).map(|i| wavenumber(i, n)).collect();
        let keep = |kk: i64| 3 * kk.unsigned_abs() as usize <= n && kk != n as i64 / 2;
        let mut mask = vec![false; n * n];
        for (iy, &ky) in k.iter().enumerate() {
            for (ix, &kx) in k.iter().enumerate() {
                mask[iy * n + ix] = keep(kx) && keep(ky);
            }
        }
        let mut planner = FftPlanner::new();
        Ok(SpectralGrid {
            n,
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
            k,
            mask,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.n * self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// `(k_x, k_y)` of flat index `idx`.
    pub fn wavevector(&self, idx: usize) -> (i64, i64) {
        (self.k[idx % self.n], self.k[idx / self.n])
    }

    /// Flat index of `(k_x, k_y)`.
    pub fn index(&self, kx: i64, ky: i64) -> usize {
        let n = self.n as i64;
        (ky.rem_euclid(n) * n + kx.rem_euclid(n)) as usize
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn apply_mask(&self, v: &mut [Complex64]) {
        for (x, &keep) in v.iter_mut().zip(&self.mask) {
            if !keep {
                *x = Complex64::new(0.0, 0.0);
            }
        }
    }

    fn transform_2d(&self, data: &mut [Complex64], fft: &Arc<dyn Fft<f64>>, scratch: &mut Vec<Complex64>) {
        let n = self.n;
        fft.process(data);
        scratch.resize(n * n, Complex64::new(0.0, 0.0));
        transpose(data, scratch, n);
        fft.process(scratch);
        transpose(scratch, data, n);
    }

    /// Unnormalized forward transform of a real field.
    pub fn forward(&self, field: &[f64]) -> Vec<Complex64> {
        let mut data: Vec<Complex64> = field.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        self.transform_2d(&mut data, &self.forward, &mut Vec::new());
        data
    }

    /// Inverse transform with the `1/n²` factor; imaginary parts are dropped.
    pub fn inverse(&self, coeffs: &[Complex64]) -> Vec<f64> {
        let mut data = coeffs.to_vec();
        self.inverse_in_place(&mut data, &mut Vec::new());
        data.iter().map(|z| z.re).collect()
    }

    fn inverse_in_place(&self, data: &mut [Complex64], scratch: &mut Vec<Complex64>) {
        self.transform_2d(data, &self.inverse, scratch);
        let scale = 1.0 / (self.n * self.n) as f64;
        for x in data.iter_mut() {
            *x *= scale;
        }
    }

    /// Grid point coordinate `2πj/n`.
    pub fn coordinate(&self, j: usize) -> f64 {
        2.0 * std::f64::consts::PI * j as f64 / self.n as f64
    }
}

fn transpose(src: &[Complex64], dst: &mut [Complex64], n: usize) {
    for r in 0..n {
        for c in 0..n {
            dst[c * n + r] = src[r * n + c];
        }
    }
}

/// Replaces `v(k)` by the average of `v(k)` and `conj(v(−k))`, and clears the
/// mean mode.
pub fn symmetrize(grid: &SpectralGrid, v: &mut [Complex64]) {
    let n = grid.n;
    for iy in 0..n {
        for ix in 0..n {
            let i = iy * n + ix;
            let j = ((n - iy) % n) * n + (n - ix) % n;
            if i < j {
                let avg = 0.5 * (v[i] + v[j].conj());
                v[i] = avg;
                v[j] = avg.conj();
            } else if i == j {
                v[i] = Complex64::new(v[i].re, 0.0);
            }
        }
    }
    v[0] = Complex64::new(0.0, 0.0);
}

/// Largest `|v(k) − conj(v(−k))|`.
pub fn hermitian_defect(grid: &SpectralGrid, v: &[Complex64]) -> f64 {
    let n = grid.n;
    (0..n * n)
        .map(|i| {
            let (iy, ix) = (i / n, i % n);
            let j = ((n - iy) % n) * n + (n - ix) % n;
            (v[i] - v[j].conj()).norm()
        })
        .fold(0.0, f64::max)
}

/// Adds `amplitude·sin(k_x x + k_y y + phase)` in coefficient space.
fn add_sine(grid: &SpectralGrid, v: &mut [Complex64], kx: i64, ky: i64, amplitude: f64, phase: f64) {
    let n2 = grid.len() as f64;
    // sin θ = (e^{iθ} − e^{−iθ}) / 2i
    let c = Complex64::new(0.0, -0.5 * amplitude * n2) * Complex64::from_polar(1.0, phase);
    v[grid.index(kx, ky)] += c;
    v[grid.index(-kx, -ky)] += c.conj();
}

fn add_cosine(grid: &SpectralGrid, v: &mut [Complex64], kx: i64, ky: i64, amplitude: f64, phase: f64) {
    let n2 = grid.len() as f64;
    let c = Complex64::from_polar(0.5 * amplitude * n2, phase);
    v[grid.index(kx, ky)] += c;
    v[grid.index(-kx, -ky)] += c.conj();
}

/// `ω₀ = 4 sin(2x) + 3 cos(x + 3y + 0.13) + 2 sin(4x + 2y + 0.31) + sin(5x + 6y + 1.23)`,
/// restricted to the dealiased modes. Below `n = 32` the last wave falls
/// outside the mask and is dropped.
pub fn initial_condition(grid: &SpectralGrid) -> Vec<Complex64> {
    let mut w = vec![Complex64::new(0.0, 0.0); grid.len()];
    add_sine(grid, &mut w, 2, 0, 4.0, 0.0);
    add_cosine(grid, &mut w, 1, 3, 3.0, 0.13);
    add_sine(grid, &mut w, 4, 2, 2.0, 0.31);
    add_sine(grid, &mut w, 5, 6, 1.0, 1.23);
    grid.apply_mask(&mut w);
    w
}

/// `λ(k) = −ν|k|²`.
pub fn linear_operator(grid: &SpectralGrid, nu: f64) -> Result<LinearOperator, NsError> {
    if !(nu > 0.0 && nu.is_finite()) {
        return Err(NsError::Viscosity(nu));
    }
    let d = (0..grid.len())
        .map(|i| {
            let (kx, ky) = grid.wavevector(i);
            Complex64::new(-nu * (kx * kx + ky * ky) as f64, 0.0)
        })
        .collect();
    Ok(LinearOperator::diagonal(d).expect("finite spectrum"))
}

/// Coefficients of the vorticity forcing `−4 cos(4y)`, the curl of `sin(4y) x̂`.
pub fn forcing(grid: &SpectralGrid) -> Vec<Complex64> {
    let mut f = vec![Complex64::new(0.0, 0.0); grid.len()];
    add_cosine(grid, &mut f, 0, 4, -4.0, 0.0);
    grid.apply_mask(&mut f);
    f
}

/// Physical-space fields derived from a vorticity spectrum.
#[derive(Debug, Clone, PartialEq)]
pub struct Velocity {
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

/// `ψ̂ = ω̂/|k|²`, `û = i k_y ψ̂`, `v̂ = −i k_x ψ̂`, transformed back.
pub fn velocity(grid: &SpectralGrid, omega: &[Complex64]) -> Velocity {
    let (uh, vh) = velocity_spectra(grid, omega);
    Velocity {
        u: grid.inverse(&uh),
        v: grid.inverse(&vh),
    }
}

fn velocity_spectra(grid: &SpectralGrid, omega: &[Complex64]) -> (Vec<Complex64>, Vec<Complex64>) {
    let mut uh = vec![Complex64::new(0.0, 0.0); grid.len()];
    let mut vh = uh.clone();
    for i in 1..grid.len() {
        let (kx, ky) = grid.wavevector(i);
        let k2 = (kx * kx + ky * ky) as f64;
        let psi = omega[i] / k2;
        uh[i] = Complex64::new(0.0, ky as f64) * psi;
        vh[i] = Complex64::new(0.0, -(kx as f64)) * psi;
    }
    (uh, vh)
}

/// The nonlinear right-hand side `g(ω̂) = −F[u·∇ω] + f̂_ω`, reusable across
/// evaluations.
#[derive(Clone)]
pub struct NonlinearRhs {
    grid: SpectralGrid,
    forcing: Option<Vec<Complex64>>,
    work: [Vec<Complex64>; 4],
    scratch: Vec<Complex64>,
    /// Number of evaluations so far.
    pub evals: usize,
}

impl NonlinearRhs {
    pub fn new(grid: &SpectralGrid, with_forcing: bool) -> Self {
        let zero = vec![Complex64::new(0.0, 0.0); grid.len()];
        NonlinearRhs {
            grid: grid.clone(),
            forcing: with_forcing.then(|| forcing(grid)),
            work: [zero.clone(), zero.clone(), zero.clone(), zero],
            scratch: Vec::new(),
            evals: 0,
        }
    }

    pub fn eval(&mut self, omega: &[Complex64], out: &mut [Complex64]) {
        let grid = &self.grid;
        let [u, v, wx, wy] = &mut self.work;
        for i in 0..grid.len() {
            let (kx, ky) = grid.wavevector(i);
            let (kx, ky) = (kx as f64, ky as f64);
            let w = if grid.mask[i] { omega[i] } else { Complex64::new(0.0, 0.0) };
            let k2 = kx * kx + ky * ky;
            let psi = if i == 0 { Complex64::new(0.0, 0.0) } else { w / k2 };
            u[i] = Complex64::new(0.0, ky) * psi;
            v[i] = Complex64::new(0.0, -kx) * psi;
            wx[i] = Complex64::new(0.0, kx) * w;
            wy[i] = Complex64::new(0.0, ky) * w;
        }
        for f in [&mut *u, &mut *v, &mut *wx, &mut *wy] {
            grid.inverse_in_place(f, &mut self.scratch);
        }
        for i in 0..grid.len() {
            out[i] = Complex64::new(u[i].re * wx[i].re + v[i].re * wy[i].re, 0.0);
        }
        grid.transform_2d(out, &grid.forward, &mut self.scratch);
        for (i, o) in out.iter_mut().enumerate() {
            *o = if grid.mask[i] { -*o } else { Complex64::new(0.0, 0.0) };
        }
        if let Some(f) = &self.forcing {
            for (o, fi) in out.iter_mut().zip(f) {
                *o += fi;
            }
        }
        symmetrize(grid, out);
        debug_assert!(hermitian_defect(grid, out) == 0.0);
        self.evals += 1;
    }
}

/// Shorthand for one evaluation with a fresh workspace.
pub fn nonlinear_rhs(grid: &SpectralGrid, omega: &[Complex64], with_forcing: bool) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); grid.len()];
    NonlinearRhs::new(grid, with_forcing).eval(omega, &mut out);
    out
}

/// `Σ|ω̂|²/n⁴`, the mean-square vorticity.
pub fn enstrophy(grid: &SpectralGrid, omega: &[Complex64]) -> f64 {
    omega.iter().map(|z| z.norm_sqr()).sum::<f64>() / (grid.len() as f64).powi(2)
}

#[derive(Debug, Clone)]
pub struct NsRun {
    pub grid: SpectralGrid,
    pub nu: f64,
    pub t_final: f64,
    pub forcing: bool,
}

impl NsRun {
    pub fn new(n: usize, nu: f64, t_final: f64) -> Result<Self, NsError> {
        if !(nu > 0.0) {
            return Err(NsError::Viscosity(nu));
        }
        if n < MIN_RUN_GRID {
            return Err(NsError::RunGridSize(n));
        }
        Ok(NsRun {
            grid: SpectralGrid::new(n)?,
            nu,
            t_final,
            forcing: true,
        })
    }

    /// Integrates `ω₀` to `t_final` in `steps` Lawson steps.
    pub fn solve(&self, tab: &Tableau, steps: usize) -> Result<Vec<Complex64>, NsError> {
        let op = linear_operator(&self.grid, self.nu)?;
        let plan = StepPlan::lawson(tab, self.t_final / steps as f64, &op)?;
        let mut rhs = NonlinearRhs::new(&self.grid, self.forcing);
        let mut g = |w: &[Complex64], out: &mut [Complex64]| rhs.eval(w, out);
        let run = integrate(&plan, &mut g, &initial_condition(&self.grid), steps, false)?;
        Ok(run.state)
    }

    pub fn solve_physical(&self, tab: &Tableau, steps: usize) -> Result<Vec<f64>, NsError> {
        Ok(self.grid.inverse(&self.solve(tab, steps)?))
    }

    /// Physical vorticity at `t = 0` and after every `every` steps, as
    /// `(time, field)` pairs. `steps` must be a multiple of `every`.
    pub fn snapshots(&self, tab: &Tableau, steps: usize, every: usize) -> Result<Vec<(f64, Vec<f64>)>, NsError> {
        if every == 0 || steps % every != 0 {
            return Err(NsError::StepCounts);
        }
        let h = self.t_final / steps as f64;
        let op = linear_operator(&self.grid, self.nu)?;
        let plan = StepPlan::lawson(tab, h, &op)?;
        let mut rhs = NonlinearRhs::new(&self.grid, self.forcing);
        let mut g = |w: &[Complex64], out: &mut [Complex64]| rhs.eval(w, out);
        let mut w = initial_condition(&self.grid);
        let mut out = vec![(0.0, self.grid.inverse(&w))];
        for k in 1..=steps / every {
            w = integrate(&plan, &mut g, &w, every, false)?.state;
            out.push(((k * every) as f64 * h, self.grid.inverse(&w)));
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceCell {
    pub scheme: String,
    pub steps: usize,
    /// Max-norm error against the reference; `None` when the run blew up.
    pub linf_error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlopeFit {
    pub scheme: String,
    /// Fitted `d log(error) / d log(m)`; negated so that order 4 reads as 4.
    pub slope: f64,
    pub intercept: f64,
    pub points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceStudy {
    pub n: usize,
    pub nu: f64,
    pub t_final: f64,
    pub reference_steps: usize,
    pub cells: Vec<ConvergenceCell>,
    /// Smallest error over all stable cells.
    pub floor: f64,
    pub fits: Vec<SlopeFit>,
}

/// Least-squares line through `(log m, log e)`; returns `(−slope, intercept)`.
pub fn fit_slope(points: &[(usize, f64)]) -> Option<(f64, f64)> {
    if points.len() < 2 {
        return None;
    }
    let xs: Vec<f64> = points.iter().map(|&(m, _)| (m as f64).ln()).collect();
    let ys: Vec<f64> = points.iter().map(|&(_, e)| e.ln()).collect();
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    Some((-slope, my - slope * mx))
}

/// Error table against a reference run of the last scheme in `schemes`
/// (normally the sixth-order one) at `reference_steps`.
///
/// Slopes are fitted per scheme over the cells whose error exceeds ten times
/// the floor and is below `pre_asymptotic_cap`.
pub fn convergence_study(
    run: &NsRun,
    steps: &[usize],
    schemes: &[Tableau],
    reference: &Tableau,
    reference_steps: usize,
    pre_asymptotic_cap: f64,
) -> Result<ConvergenceStudy, NsError> {
    if steps.windows(2).any(|w| w[0] >= w[1]) || steps.last().is_some_and(|&m| 4 * m > reference_steps) {
        return Err(NsError::StepCounts);
    }
    let exact = run.solve_physical(reference, reference_steps)?;
    let jobs: Vec<(&Tableau, usize)> = schemes
        .iter()
        .flat_map(|t| steps.iter().map(move |&m| (t, m)))
        .collect();
    let cells: Vec<ConvergenceCell> = jobs
        .par_iter()
        .map(|&(tab, m)| {
            let linf_error = run.solve_physical(tab, m).ok().and_then(|w| {
                let e = w.iter().zip(&exact).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                (e.is_finite() && w.iter().all(|x| x.is_finite())).then_some(e)
            });
            ConvergenceCell {
                scheme: tab.name().to_string(),
                steps: m,
                linf_error,
            }
        })
        .collect();
    let floor = cells
        .iter()
        .filter_map(|c| c.linf_error)
        .fold(f64::INFINITY, f64::min);
    let fits = schemes
        .iter()
        .filter_map(|t| {
            let pts: Vec<(usize, f64)> = cells
                .iter()
                .filter(|c| c.scheme == t.name())
                .filter_map(|c| c.linf_error.map(|e| (c.steps, e)))
                .filter(|&(_, e)| e > 10.0 * floor && e < pre_asymptotic_cap)
                .collect();
            fit_slope(&pts).map(|(slope, intercept)| SlopeFit {
                scheme: t.name().to_string(),
                slope,
                intercept,
                points: pts.len(),
            })
        })
        .collect();
    Ok(ConvergenceStudy {
        n: run.grid.n(),
        nu: run.nu,
        t_final: run.t_final,
        reference_steps,
        cells,
        floor,
        fits,
    })
}
