use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use slrk::search::*;
use slrk_core::order_conditions::{order_residuals, ConditionSet};
use slrk_core::tableau::{rk4_tableau, rk6_tableau, FloatTableau};
use slrk_core::{Rational, Tableau};

fn r(p: i64, q: i64) -> Rational {
    Rational::ratio(p, q)
}

fn rk6_cfg() -> SearchConfig {
    SearchConfig::new(8, 6, r(1, 6), rk6_tableau().c().to_vec()).unwrap()
}

fn rk4_cfg() -> SearchConfig {
    SearchConfig::new(4, 4, r(1, 2), vec![r(0, 1), r(1, 2), r(1, 2), r(1, 1)]).unwrap()
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn random_x(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

#[test]
fn rk6_is_a_floating_root() {
    let x = flatten(&rk6_tableau().to_float());
    assert!(inf_norm(&residual_vector(&x, &rk6_cfg()).unwrap()) <= 1e-14);
}

#[test]
fn residual_shape_and_empty_tableau() {
    let cfg = rk6_cfg();
    let f = residual_vector(&vec![0.0; 36], &cfg).unwrap();
    assert_eq!(f.len(), 44);
    assert_eq!(f[0], -1.0);
    assert!(residual_vector(&[0.0; 35], &cfg).is_err());
}

#[test]
fn jacobian_matches_forward_differences() {
    let cfg = rk6_cfg();
    let x = random_x(36, 11);
    let j = jacobian(&x, &cfg).unwrap();
    let f0 = residual_vector(&x, &cfg).unwrap();
    let step = 1e-5;
    let mut num = 0.0;
    let mut den = 0.0;
    for m in 0..x.len() {
        let mut xp = x.clone();
        xp[m] += step;
        let fp = residual_vector(&xp, &cfg).unwrap();
        for k in 0..f0.len() {
            let fd = (fp[k] - f0[k]) / step;
            num += (j[(k, m)] - fd).powi(2);
            den += fd * fd;
        }
    }
    assert!((num / den).sqrt() < 1e-4, "relative difference {}", (num / den).sqrt());
}

#[test]
fn linear_rows_of_the_jacobian() {
    let cfg = rk6_cfg();
    let j = jacobian(&random_x(36, 5), &cfg).unwrap();
    let s = 8;
    let trees = 37;
    for m in 0..36 {
        let expect = if m < s { 1.0 } else { 0.0 };
        assert!((j[(0, m)] - expect).abs() < 1e-8, "Σb row, column {m}");
    }
    for i in 1..s {
        let row = trees + i - 1;
        for m in 0..36 {
            let in_row_i = m >= s && {
                let k = m - s;
                let start = i * (i - 1) / 2;
                (start..start + i).contains(&k)
            };
            let expect = if in_row_i { 1.0 } else { 0.0 };
            assert!((j[(row, m)] - expect).abs() < 1e-8, "abscissa row {i}, column {m}");
        }
    }
}

#[test]
fn damping_scales_the_step() {
    let cfg = rk6_cfg();
    let model = ResidualModel::new(&cfg).unwrap();
    let state = SearchState::new(initial_guess(&cfg, 4), &model);
    let half = newton_step_with(&state, &model, 0.5).unwrap();
    let full = newton_step_with(&state, &model, 1.0).unwrap();
    for ((x, h), f) in state.x.iter().zip(&half.x).zip(&full.x) {
        let (dh, df) = (x - h, x - f);
        assert!((dh - 0.5 * df).abs() <= 4.0 * f64::EPSILON * (x.abs() + df.abs()));
    }
    assert_eq!(half.iters, 1);
}

#[test]
fn rk6_is_a_fixed_point() {
    let cfg = rk6_cfg();
    let model = ResidualModel::new(&cfg).unwrap();
    let state = SearchState::new(flatten(&rk6_tableau().to_float()), &model);
    let next = newton_step(&state, &model, &cfg).unwrap();
    assert!(next.residual_norm <= 1e-12);
}

fn first_step_improvements(cfg: &SearchConfig, gamma: f64) -> usize {
    let model = ResidualModel::new(cfg).unwrap();
    (0..100)
        .filter(|&i| {
            let state = SearchState::new(initial_guess(cfg, i), &model);
            let next = newton_step_with(&state, &model, gamma).unwrap();
            next.residual_norm <= state.residual_norm
        })
        .count()
}

#[test]
fn newton_direction_is_a_descent_direction() {
    assert!(first_step_improvements(&rk6_cfg(), 1e-5) >= 95);
}

/// Regression statistic for the first damped step from Gaussian guesses.
/// Far from a root the full half step usually overshoots.
#[test]
fn first_damped_step_statistic() {
    let helped = first_step_improvements(&rk6_cfg(), 0.5);
    assert!((5..=25).contains(&helped), "{helped}/100");
}

#[test]
fn searches_are_deterministic() {
    let mut cfg = rk6_cfg();
    cfg.max_iters = 40;
    cfg.rng_seed = 17;
    let a = multi_start_search(&cfg, 6).unwrap();
    let b = multi_start_search(&cfg, 6).unwrap();
    assert_eq!(a, b);
    let model = ResidualModel::new(&cfg).unwrap();
    let serial = search_from(initial_guess(&cfg, 3), &model, &cfg, 3);
    assert_eq!(serial, a[3]);
    for (i, res) in a.iter().enumerate() {
        assert_eq!(res.stream, i as u64);
        assert!(res.history.len() <= 41);
    }
    cfg.rng_seed = 18;
    assert_ne!(multi_start_search(&cfg, 1).unwrap()[0].history, a[0].history);
}

#[test]
fn converged_results_respect_the_tolerance() {
    let cfg = rk4_cfg();
    for res in multi_start_search(&cfg, 20).unwrap() {
        match res.status {
            SearchStatus::Converged => {
                assert!(res.residual_norm() <= cfg.residual_tol);
                assert!(res.tableau.is_some());
            }
            _ => assert!(res.tableau.is_none()),
        }
    }
}

/// With `c = [0, ½, ½, 1]` the order-4 schemes form the family
/// `b = (1/6, 2/3 − w, w, 1/6)`, `a₃₂ = 1/(6w)`, `a₄₂ = 1 − 3w`, `a₄₃ = 3w`.
fn rk4_family(w: &Rational) -> Tableau {
    let one = Rational::one();
    let six_w = &Rational::from_integer(6) * w;
    let a32 = six_w.recip().unwrap();
    let a31 = &r(1, 2) - &a32;
    let three_w = &Rational::from_integer(3) * w;
    Tableau::from_lower_rows(
        "rk4-family",
        vec![
            vec![],
            vec![r(1, 2)],
            vec![a31, a32],
            vec![Rational::zero(), &one - &three_w, three_w],
        ],
        vec![r(1, 6), &r(2, 3) - w, w.clone(), r(1, 6)],
    )
    .unwrap()
}

#[test]
fn four_stage_search_lands_on_the_rk4_family() {
    let cfg = rk4_cfg();
    let results = multi_start_search(&cfg, 20).unwrap();
    let found: Vec<&FloatTableau> = results.iter().filter_map(|r| r.tableau.as_ref()).collect();
    assert!(!found.is_empty());
    for t in found {
        // The exact value of every float coefficient misses each condition by
        // rounding only.
        let dyadic = Tableau::from_lower_rows(
            "dyadic",
            (0..4)
                .map(|i| t.a[i][..i].iter().map(|&v| Rational::from_f64(v).unwrap()).collect())
                .collect(),
            t.b.iter().map(|&v| Rational::from_f64(v).unwrap()).collect(),
        )
        .unwrap();
        for c in order_residuals(&dyadic, 4).unwrap() {
            assert!(c.residual.to_f64().abs() <= 1e-12);
        }
        // Whatever member was found, a rational member next to it is exactly of order 4.
        let w = best_rational(t.b[2], 1_000_000).unwrap();
        let exact = rk4_family(&w);
        assert!(order_residuals(&exact, 4).unwrap().iter().all(|c| c.satisfied()));
        let near = flatten(&exact.to_float());
        let got = flatten(t);
        assert!(near.iter().zip(&got).all(|(a, b)| (a - b).abs() < 1e-6 * a.abs().max(1.0)), "{got:?}");
        if let Ok(rat) = rationalize(t, 1000, 4) {
            assert!(order_residuals(&rat, 4).unwrap().iter().all(|c| c.satisfied()));
        }
    }
}

#[test]
fn rk4_itself_is_in_the_family() {
    assert_eq!(rk4_family(&r(1, 3)).b(), rk4_tableau().b());
    assert_eq!(rk4_family(&r(1, 3)).a(), rk4_tableau().a());
}

#[test]
fn rk6_round_trips_through_floats() {
    let t = rationalize(&rk6_tableau().to_float(), 1000, 6).unwrap();
    assert_eq!(t.a(), rk6_tableau().a());
    assert_eq!(t.b(), rk6_tableau().b());
    assert!(order_residuals(&t, 6).unwrap().iter().all(|c| c.satisfied()));
    let x = flatten(&t.to_float());
    assert!(inf_norm(&residual_vector(&x, &rk6_cfg()).unwrap()) <= 1e-14);
}

#[test]
fn irrational_looking_roots_are_rejected() {
    let mut t = rk6_tableau().to_float();
    t.b[1] += std::f64::consts::PI * 1e-2;
    assert!(matches!(rationalize(&t, 1000, 6), Err(RationalizeError::NotARoot { .. })));
    let mut t = rk4_tableau().to_float();
    t.a[3][2] = std::f64::consts::SQRT_2;
    assert!(rationalize(&t, 1000, 4).is_err());
}

#[test]
fn short_convergent() {
    assert_eq!(best_rational(0.333333333333, 10), Some(r(1, 3)));
    assert_eq!(best_rational(-2.5, 1), Some(r(-3, 1)));
}

#[test]
fn seven_stage_default_grid() {
    let c = default_pattern(7, &r(1, 6)).unwrap();
    let expect: Vec<Rational> = (0..7).map(|i| r(i, 6)).collect();
    assert_eq!(c, expect);
    let cfg = SearchConfig::on_grid(7, 6, r(1, 6)).unwrap();
    assert_eq!(ResidualModel::new(&cfg).unwrap().equations(), 43);
}

#[test]
fn config_validation() {
    assert!(SearchConfig::new(3, 3, r(1, 2), vec![r(1, 2), r(1, 2), r(1, 1)]).is_err());
    assert!(SearchConfig::new(3, 3, r(1, 2), vec![r(0, 1), r(1, 3), r(1, 1)]).is_err());
    assert!(SearchConfig::new(3, 3, r(1, 2), vec![r(0, 1), r(1, 2)]).is_err());
    let mut cfg = rk4_cfg();
    cfg.damping = 0.0;
    assert!(cfg.validate().is_err());
    cfg.damping = 1.5;
    assert!(cfg.validate().is_err());
}

proptest! {
    #[test]
    fn float_and_exact_residuals_agree(seed in 0u64..1000) {
        // Small dyadic coefficients are exact in f64, so both sweeps see the same tableau.
        let x: Vec<f64> = random_x(36, seed).iter().map(|v| (v * 64.0).round() / 64.0).collect();
        let cfg = rk6_cfg();
        let f = residual_vector(&x, &cfg).unwrap();
        let t = unflatten(&x, 8, "p");
        let exact = Tableau::from_lower_rows(
            "p",
            (0..8).map(|i| t.a[i][..i].iter().map(|&v| Rational::from_f64(v).unwrap()).collect()).collect(),
            t.b.iter().map(|&v| Rational::from_f64(v).unwrap()).collect(),
        ).unwrap();
        let set = ConditionSet::up_to_order(6).unwrap();
        let res = set.residuals(exact.a(), exact.b());
        for (k, e) in res.iter().enumerate() {
            prop_assert!((f[k] - e.to_f64()).abs() <= 1e-9 * (1.0 + e.to_f64().abs()));
        }
    }

    #[test]
    fn flatten_round_trips(seed in 0u64..1000, s in 1usize..9) {
        let x = random_x(s + s * (s - 1) / 2, seed);
        prop_assert_eq!(flatten(&unflatten(&x, s, "t")), x);
    }

    #[test]
    fn convergents_respect_the_bound(x in -100.0f64..100.0, bound in 1u64..5000) {
        let q = best_rational(x, bound).unwrap();
        prop_assert!(q.denom() <= &num_bigint::BigInt::from(bound));
        prop_assert!((q.to_f64() - x).abs() <= 1.0 / bound as f64);
    }
}
