use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use slrk::navier_stokes::*;
use slrk_core::integrator::{lawson_step_general, slrk_step, StepPlan};
use slrk_core::linop::make_propagator;
use slrk_core::tableau::{rk4_tableau, rk6_tableau};

fn zero(n: usize) -> Vec<Complex64> {
    vec![Complex64::new(0.0, 0.0); n]
}

fn max_abs(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Direct `O(n⁴)` sum `F(k) = Σ_x f(x) e^{−i k·x}`.
fn dft(grid: &SpectralGrid, f: &[f64]) -> Vec<Complex64> {
    let n = grid.n();
    (0..n * n)
        .map(|idx| {
            let (kx, ky) = grid.wavevector(idx);
            let mut acc = Complex64::new(0.0, 0.0);
            for iy in 0..n {
                for ix in 0..n {
                    let phase = -(kx as f64 * grid.coordinate(ix) + ky as f64 * grid.coordinate(iy));
                    acc += f[iy * n + ix] * Complex64::from_polar(1.0, phase);
                }
            }
            acc
        })
        .collect()
}

fn field(grid: &SpectralGrid, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    let n = grid.n();
    (0..n * n)
        .map(|i| f(grid.coordinate(i % n), grid.coordinate(i / n)))
        .collect()
}

#[test]
fn transform_matches_direct_sum_at_n8() {
    let grid = SpectralGrid::new(8).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let f: Vec<f64> = (0..64).map(|_| rng.random_range(-1.0..1.0)).collect();
    let fast = grid.forward(&f);
    let slow = dft(&grid, &f);
    for (a, b) in fast.iter().zip(&slow) {
        assert!((a - b).norm() < 1e-12, "{a} vs {b}");
    }
    let back = grid.inverse(&fast);
    for (a, b) in back.iter().zip(&f) {
        assert!((a - b).abs() < 1e-14);
    }
}

#[test]
fn sine_coefficient_convention() {
    let grid = SpectralGrid::new(16).unwrap();
    let f = field(&grid, |x, _| 4.0 * (2.0 * x).sin());
    let w = grid.forward(&f);
    let n2 = 256.0;
    assert!((w[grid.index(2, 0)] - Complex64::new(0.0, -2.0 * n2)).norm() < 1e-10);
    assert!((w[grid.index(-2, 0)] - Complex64::new(0.0, 2.0 * n2)).norm() < 1e-10);
}

#[test]
fn initial_condition_modes() {
    let grid = SpectralGrid::new(64).unwrap();
    let w = initial_condition(&grid);
    let n2 = 64.0 * 64.0;
    assert_eq!(w.iter().filter(|z| z.norm() > 0.0).count(), 8);
    assert_eq!(w[grid.index(2, 0)], Complex64::new(0.0, -2.0 * n2));
    assert_eq!(w[0], Complex64::new(0.0, 0.0));
    assert_eq!(hermitian_defect(&grid, &w), 0.0);

    let expect = field(&grid, |x, y| {
        4.0 * (2.0 * x).sin()
            + 3.0 * (x + 3.0 * y + 0.13).cos()
            + 2.0 * (4.0 * x + 2.0 * y + 0.31).sin()
            + (5.0 * x + 6.0 * y + 1.23).sin()
    });
    let got = grid.inverse(&w);
    for (a, b) in got.iter().zip(&expect) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn small_grid_drops_the_outer_wave() {
    let grid = SpectralGrid::new(16).unwrap();
    let w = initial_condition(&grid);
    assert_eq!(w.iter().filter(|z| z.norm() > 0.0).count(), 6);
}

#[test]
fn viscous_eigenvalues() {
    let grid = SpectralGrid::new(64).unwrap();
    let op = linear_operator(&grid, 1e-2).unwrap();
    let d = op.as_diagonal().unwrap();
    assert!((d[grid.index(4, 4)].re + 0.32).abs() < 1e-15);
    assert_eq!(d[0], Complex64::new(0.0, 0.0));
    let most_negative = (0..grid.len())
        .filter(|&i| grid.mask()[i])
        .map(|i| d[i].re)
        .fold(0.0, f64::min);
    assert!((most_negative + 8.82).abs() < 1e-12);
}

#[test]
fn curl_of_velocity_is_vorticity() {
    let grid = SpectralGrid::new(32).unwrap();
    let w = initial_condition(&grid);
    let vel = velocity(&grid, &w);
    let (uh, vh) = (grid.forward(&vel.u), grid.forward(&vel.v));
    for i in 0..grid.len() {
        let (kx, ky) = grid.wavevector(i);
        let curl = Complex64::new(0.0, kx as f64) * vh[i] - Complex64::new(0.0, ky as f64) * uh[i];
        assert!((curl - w[i]).norm() < 1e-9, "mode ({kx}, {ky})");
    }
}

#[test]
fn velocity_sign_convention() {
    // ω = sin 2x ⇒ ψ = sin(2x)/4 ⇒ u = 0, v = −cos(2x)/2
    let grid = SpectralGrid::new(16).unwrap();
    let w = grid.forward(&field(&grid, |x, _| (2.0 * x).sin()));
    let vel = velocity(&grid, &w);
    let v_expect = field(&grid, |x, _| -0.5 * (2.0 * x).cos());
    for i in 0..grid.len() {
        assert!(vel.u[i].abs() < 1e-14);
        assert!((vel.v[i] - v_expect[i]).abs() < 1e-14);
    }
}

#[test]
fn forcing_lives_on_two_modes() {
    let grid = SpectralGrid::new(32).unwrap();
    let f = forcing(&grid);
    let n2 = 1024.0;
    for (i, z) in f.iter().enumerate() {
        let (kx, ky) = grid.wavevector(i);
        if kx == 0 && ky.abs() == 4 {
            assert_eq!(*z, Complex64::new(-2.0 * n2, 0.0));
        } else {
            assert_eq!(*z, Complex64::new(0.0, 0.0));
        }
    }
    let physical = grid.inverse(&f);
    let expect = field(&grid, |_, y| -4.0 * (4.0 * y).cos());
    for (a, b) in physical.iter().zip(&expect) {
        assert!((a - b).abs() < 1e-13);
    }
}

#[test]
fn plane_wave_does_not_advect_itself() {
    let grid = SpectralGrid::new(32).unwrap();
    let w = grid.forward(&field(&grid, |x, y| 3.0 * (3.0 * x + 2.0 * y + 0.4).sin()));
    let scale = max_abs(&w);
    let g = nonlinear_rhs(&grid, &w, false);
    assert!(max_abs(&g) < 1e-12 * scale);
    let gf = nonlinear_rhs(&grid, &w, true);
    let f = forcing(&grid);
    for (a, b) in gf.iter().zip(&f) {
        assert!((a - b).norm() < 1e-12 * scale);
    }
}

#[test]
fn rhs_is_hermitian_and_mean_free() {
    let grid = SpectralGrid::new(32).unwrap();
    let w = initial_condition(&grid);
    for forced in [false, true] {
        let g = nonlinear_rhs(&grid, &w, forced);
        assert_eq!(hermitian_defect(&grid, &g), 0.0);
        assert_eq!(g[0], Complex64::new(0.0, 0.0));
        for (z, &keep) in g.iter().zip(grid.mask()) {
            if !keep {
                assert_eq!(*z, Complex64::new(0.0, 0.0));
            }
        }
    }
}

#[test]
fn one_step_from_rest_only_touches_forced_modes() {
    let grid = SpectralGrid::new(32).unwrap();
    let op = linear_operator(&grid, 1e-2).unwrap();
    let plan = StepPlan::lawson(&rk4_tableau(), 0.1, &op).unwrap();
    let mut rhs = NonlinearRhs::new(&grid, true);
    let mut g = |w: &[Complex64], out: &mut [Complex64]| rhs.eval(w, out);
    let (w, _) = slrk_step(&plan, &mut g, &zero(grid.len())).unwrap();
    for (i, z) in w.iter().enumerate() {
        let (kx, ky) = grid.wavevector(i);
        if kx == 0 && ky.abs() == 4 {
            assert!(z.norm() > 0.0);
        } else {
            assert_eq!(*z, Complex64::new(0.0, 0.0), "mode ({kx}, {ky})");
        }
    }
}

#[test]
fn unforced_enstrophy_never_grows() {
    let grid = SpectralGrid::new(32).unwrap();
    let op = linear_operator(&grid, 1e-2).unwrap();
    let plan = StepPlan::lawson(&rk6_tableau(), 1e-3, &op).unwrap();
    let mut rhs = NonlinearRhs::new(&grid, false);
    let mut g = |w: &[Complex64], out: &mut [Complex64]| rhs.eval(w, out);
    let mut w = initial_condition(&grid);
    let mut e = enstrophy(&grid, &w);
    for _ in 0..50 {
        w = slrk_step(&plan, &mut g, &w).unwrap().0;
        let next = enstrophy(&grid, &w);
        assert!(next <= e * (1.0 + 1e-12), "{next} > {e}");
        e = next;
    }
}

#[test]
fn propagator_commutes_with_the_mask() {
    let grid = SpectralGrid::new(32).unwrap();
    let op = linear_operator(&grid, 1e-2).unwrap();
    let e = make_propagator(&op, 0.37).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let v: Vec<Complex64> = (0..grid.len())
        .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
        .collect();
    let mut masked_first = v.clone();
    grid.apply_mask(&mut masked_first);
    let masked_first = e.apply(&masked_first).unwrap();
    let mut masked_last = e.apply(&v).unwrap();
    grid.apply_mask(&mut masked_last);
    assert_eq!(masked_first, masked_last);
}

#[test]
fn simple_step_matches_general_lawson_at_benchmark_scale() {
    let grid = SpectralGrid::new(64).unwrap();
    let op = linear_operator(&grid, 1e-2).unwrap();
    let w0 = initial_condition(&grid);
    for tab in [rk4_tableau(), rk6_tableau()] {
        let h = 5.0 / 256.0;
        let plan = StepPlan::lawson(&tab, h, &op).unwrap();
        let mut rhs = NonlinearRhs::new(&grid, true);
        let mut g = |w: &[Complex64], out: &mut [Complex64]| rhs.eval(w, out);
        let (fast, _) = slrk_step(&plan, &mut g, &w0).unwrap();
        let oracle = lawson_step_general(&tab, &mut g, &op, &w0, h).unwrap();
        let diff: Vec<Complex64> = fast.iter().zip(&oracle).map(|(a, b)| a - b).collect();
        assert!(max_abs(&diff) <= 1e-12 * max_abs(&oracle), "{}", tab.name());
    }
}

#[test]
fn study_rejects_bad_step_lists() {
    let run = NsRun::new(16, 1e-2, 0.1).unwrap();
    let schemes = [rk4_tableau()];
    for (steps, reference) in [(&[8, 4][..], 64), (&[4, 8][..], 16)] {
        assert_eq!(
            convergence_study(&run, steps, &schemes, &rk6_tableau(), reference, f64::INFINITY).unwrap_err(),
            NsError::StepCounts
        );
    }
}

#[test]
fn tiny_study_converges_and_orders_schemes() {
    let run = NsRun::new(16, 1e-2, 0.5).unwrap();
    let study = convergence_study(&run, &[4, 8, 16], &[rk4_tableau(), rk6_tableau()], &rk6_tableau(), 256, f64::INFINITY)
        .unwrap();
    assert_eq!(study.cells.len(), 6);
    for m in [4, 8, 16] {
        let e = |name: &str| {
            study
                .cells
                .iter()
                .find(|c| c.scheme == name && c.steps == m)
                .and_then(|c| c.linf_error)
                .unwrap()
        };
        assert!(e("rk6") < e("rk4"));
    }
    let rk4 = study.fits.iter().find(|f| f.scheme == "rk4").unwrap();
    assert!((rk4.slope - 4.0).abs() < 0.5, "{rk4:?}");
}

#[test]
fn blown_up_cells_are_marked_unstable() {
    let run = NsRun::new(64, 1e-2, 5.0).unwrap();
    let study = convergence_study(&run, &[32], &[rk4_tableau()], &rk6_tableau(), 128, f64::INFINITY).unwrap();
    assert_eq!(study.cells[0].linf_error, None);
    assert!(study.fits.is_empty());
    assert_eq!(study.floor, f64::INFINITY);
}

#[test]
fn snapshots_cover_the_run() {
    let run = NsRun::new(16, 1e-2, 0.2).unwrap();
    let snaps = run.snapshots(&rk4_tableau(), 8, 4).unwrap();
    assert_eq!(snaps.len(), 3);
    assert!((snaps[2].0 - 0.2).abs() < 1e-15);
    assert_eq!(snaps[2].1, run.solve_physical(&rk4_tableau(), 8).unwrap());
    assert!(run.snapshots(&rk4_tableau(), 8, 3).is_err());
}

#[test]
fn coordinates_span_the_period() {
    let grid = SpectralGrid::new(16).unwrap();
    assert_eq!(grid.coordinate(0), 0.0);
    assert!((grid.coordinate(8) - PI).abs() < 1e-15);
}
