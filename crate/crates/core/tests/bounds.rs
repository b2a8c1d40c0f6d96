mod common;

use bns::bounds::{
    asymptotic_coefficients, gn_bound, remainder_bound, search_region, sup_derivative_bound,
    sup_derivative_search, BoundError, BoundMethod,
};
use bns::bsm::{eval_partial, DerivKey};
use bns::{CumulantModel, ModelParams, OptionSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn unit(p: ModelParams) -> ModelParams {
    ModelParams { s0: 1.0, ..p }
}

fn opt(k: f64) -> OptionSpec {
    OptionSpec::new(k, 1.0).unwrap()
}

#[test]
fn sup_is_finite_up_to_order_seven() {
    let p = unit(common::ig_atm(1.0));
    for order in 3..=7u32 {
        for px in 0..=order {
            let m = sup_derivative_bound(DerivKey::new(px, order - px), &p, &opt(1.0)).unwrap();
            assert!(m.is_finite() && m > 0.0, "({px},{}) {m}", order - px);
        }
    }
}

#[test]
fn sup_dominates_random_points() {
    let p = unit(common::ig_atm(1.0));
    let o = opt(1.0);
    let region = search_region(&p, &o).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for key in [
        DerivKey::new(3, 0),
        DerivKey::new(1, 2),
        DerivKey::new(0, 3),
        DerivKey::new(2, 3),
    ] {
        let m = sup_derivative_bound(key, &p, &o).unwrap();
        for _ in 0..10_000 {
            let x = rng.gen_range(region.ln_x.0..=region.ln_x.1).exp();
            let y = rng.gen_range(region.ln_y.0..=region.ln_y.1).exp();
            let v = eval_partial(key, x, y, o.strike, p.r).unwrap().abs();
            assert!(v <= m, "{key} at ({x},{y}): {v} > {m}");
        }
    }
}

#[test]
fn x_derivative_sups_scale_like_strike_power() {
    // d^p_x d^q_y BS(x, y; K) = K^{1-p} g(x/K, y), and for rho < 0 the scan window
    // follows K, so the sup scales exactly.
    let p = unit(common::ig_atm(5.0));
    for key in [
        DerivKey::new(3, 0),
        DerivKey::new(2, 1),
        DerivKey::new(4, 3),
    ] {
        let at_one = sup_derivative_bound(key, &p, &opt(1.0)).unwrap();
        for k in [1e-4, 1e-2, 1e2] {
            let m = sup_derivative_bound(key, &p, &opt(k)).unwrap();
            let want = at_one * k.powi(1 - key.xi_x as i32);
            assert!(
                (m - want).abs() <= 1e-6 * want,
                "{key} K={k}: {m} vs {want}"
            );
        }
    }
}

#[test]
fn y_derivative_sups_are_linear_for_small_strikes() {
    let p = unit(common::ig_atm(5.0));
    for key in [DerivKey::new(0, 3), DerivKey::new(0, 5)] {
        let m2 = sup_derivative_bound(key, &p, &opt(1e-2)).unwrap();
        let m4 = sup_derivative_bound(key, &p, &opt(1e-4)).unwrap();
        assert!((m4 / m2 - 1e-2).abs() <= 1e-8, "{key}: {}", m4 / m2);
    }
}

#[test]
fn rho_zero_bound_shrinks_toward_strike_extremes() {
    let p = ModelParams {
        rho: 0.0,
        ..unit(common::ig_atm(5.0))
    };
    for n in 2..=4 {
        let b = |k: f64| {
            remainder_bound(n, &p, &opt(k), BoundMethod::RhoZero)
                .unwrap()
                .total
        };
        let (lo2, lo1, mid, hi1, hi2) = (b(1e-4), b(1e-2), b(1.0), b(1e2), b(1e4));
        assert!(lo2 < lo1 && lo1 < mid, "N={n}: {lo2} {lo1} {mid}");
        assert!(hi2 < hi1 && hi1 < mid, "N={n}: {mid} {hi1} {hi2}");
    }
}

#[test]
fn bound_decreases_in_b() {
    for rho in [-0.3, 0.0] {
        for n in [2, 3] {
            let mut last = f64::INFINITY;
            for b in [10.0, 20.0, 40.0, 80.0] {
                let p = ModelParams {
                    rho,
                    cumulant: CumulantModel::InverseGaussian { a: 1.0, b },
                    ..unit(common::ig_atm(5.0))
                };
                let total = remainder_bound(n, &p, &opt(1.0), BoundMethod::auto(rho))
                    .unwrap()
                    .total;
                assert!(
                    total >= 0.0 && total <= last,
                    "rho={rho} N={n} b={b}: {total} > {last}"
                );
                last = total;
            }
        }
    }
}

#[test]
fn x_derivative_sups_sit_on_the_truncation_edge() {
    let p = unit(common::ig_atm(5.0));
    let s = sup_derivative_search(DerivKey::new(3, 0), &p, &opt(1.0)).unwrap();
    let region = search_region(&p, &opt(1.0)).unwrap();
    assert!(!s.truncation_ok);
    assert!((s.argmax.1.ln() - region.ln_y.1).abs() < 1e-9);
    // y-only derivatives keep their maximum inside the window
    assert!(
        sup_derivative_search(DerivKey::new(0, 3), &p, &opt(1.0))
            .unwrap()
            .truncation_ok
    );
}

#[test]
fn method_preconditions() {
    let p = unit(common::ig_atm(1.0));
    assert!(matches!(
        remainder_bound(2, &p, &opt(1.0), BoundMethod::RhoZero),
        Err(BoundError::Method { .. })
    ));
    let pos = ModelParams { rho: 0.2, ..p };
    assert!(matches!(
        remainder_bound(2, &pos, &opt(1.0), BoundMethod::CauchySchwarz),
        Err(BoundError::Method { .. })
    ));
    assert!(remainder_bound(2, &pos, &opt(1.0), BoundMethod::RawTheorem).is_ok());
    assert!(matches!(
        gn_bound(2, &pos, 1.0),
        Err(BoundError::PositiveRho(_))
    ));
    assert!(asymptotic_coefficients(2, &pos, 1.0).is_err());
    assert!(matches!(
        sup_derivative_bound(DerivKey::new(1, 1), &p, &opt(1.0)),
        Err(BoundError::LowOrder(_))
    ));
}

#[test]
fn asymptotic_orders() {
    let ig = ModelParams {
        rho: 0.0,
        ..unit(common::ig_atm(1.0))
    };
    let gamma = ModelParams {
        cumulant: CumulantModel::Gamma { a: 1.0, b: 10.0 },
        ..ig
    };
    for n in 2..=5 {
        let c = asymptotic_coefficients(n, &gamma, 1.0).unwrap();
        assert_eq!((c.order_rho0, c.order_general), (n + 1, n + 1));
        let c = asymptotic_coefficients(n, &ig, 1.0).unwrap();
        assert_eq!((c.order_rho0, c.order_general), (n + 2, n + 1));
    }
}

/// Fails: with rho < 0 the x-derivative sups are set by the y truncation, and
/// M_{(N+1,0)} gains a factor 1/x at x ~ 1e-9 with every order, so the bound grows
/// with N at every grid point.
#[test]
#[ignore = "unattainable: x-derivative sups grow with order, see the decisions ledger"]
fn bound_nonincreasing_in_order_on_grid() {
    let grid = common::bound_grid();
    let (mut ok, mut total) = (0, 0);
    for g in grid.iter().filter(|g| g.order < 4) {
        let a = remainder_bound(g.order, &g.params, &g.option, BoundMethod::CauchySchwarz)
            .unwrap()
            .total;
        let b = remainder_bound(
            g.order + 1,
            &g.params,
            &g.option,
            BoundMethod::CauchySchwarz,
        )
        .unwrap()
        .total;
        ok += (b <= a) as usize;
        total += 1;
    }
    assert!(ok as f64 >= 0.9 * total as f64, "{ok}/{total}");
}

/// Fails: M scales as K^{1-p} in the strike, so x-derivative sups grow as K -> 0 and
/// y-derivative sups fall only linearly.
#[test]
#[ignore = "unattainable: sups scale as K^(1-p), see the decisions ledger"]
fn sup_at_strike_extremes_below_1e8_of_atm() {
    let p = unit(common::ig_atm(1.0));
    for order in 3..=7u32 {
        for px in 0..=order {
            let key = DerivKey::new(px, order - px);
            let atm = sup_derivative_bound(key, &p, &opt(1.0)).unwrap();
            for k in [1e-4, 1e4] {
                let m = sup_derivative_bound(key, &p, &opt(k)).unwrap();
                assert!(m <= 1e-8 * atm, "{key} K={k}: {m} vs {atm}");
            }
        }
    }
}
