use bns::bsm::{bs_partial, eval_partial, partial_along, DerivKey, DerivTerm};
mod common;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn key(p: u32, q: u32) -> DerivKey {
    DerivKey::new(p, q)
}

fn canon(p: u32, q: u32) -> DerivTerm {
    bs_partial(key(p, q)).unwrap().canonical()
}

#[test]
fn third_order_closed_forms() {
    // -phi/(x^2 y) (d+ + sqrt y)
    let xxx = DerivTerm::from_parts(-1, 1, 2, 2, &[(1, (1, 0, 0)), (1, (0, 0, 1))]);
    assert_eq!(canon(3, 0), xxx.canonical());

    // x phi/(8 y^{5/2}) (d+^2 d-^2 - 4 d+ d- + 3 - d+^2 - d-^2)
    let yyy = DerivTerm::from_parts(
        1,
        8,
        -1,
        5,
        &[
            (1, (2, 2, 0)),
            (-4, (1, 1, 0)),
            (3, (0, 0, 0)),
            (-1, (2, 0, 0)),
            (-1, (0, 2, 0)),
        ],
    );
    assert_eq!(canon(0, 3), yyy.canonical());

    // phi/(2 x y^{3/2}) (d+ d- - 1)
    let xxy = DerivTerm::from_parts(1, 2, 1, 3, &[(1, (1, 1, 0)), (-1, (0, 0, 0))]);
    assert_eq!(canon(2, 1), xxy.canonical());
}

#[test]
fn xyy_has_squared_d_minus() {
    // d/dy of -phi d-/(2y) is -phi/(4 y^2) (d+ d-^2 - d+ - 2 d-)
    let good = DerivTerm::from_parts(
        -1,
        4,
        0,
        4,
        &[(1, (1, 2, 0)), (-1, (1, 0, 0)), (-2, (0, 1, 0))],
    );
    assert_eq!(canon(1, 2), good.canonical());
    // with d+ d- in the leading monomial the term is not the derivative
    let misprint = DerivTerm::from_parts(
        -1,
        4,
        0,
        4,
        &[(1, (1, 1, 0)), (-1, (1, 0, 0)), (-2, (0, 1, 0))],
    );
    assert_ne!(canon(1, 2), misprint.canonical());
}

/// Every arrangement of p x-steps and q y-steps.
fn paths(p: usize, q: usize) -> Vec<String> {
    if p == 0 {
        return vec!["y".repeat(q)];
    }
    if q == 0 {
        return vec!["x".repeat(p)];
    }
    let mut out: Vec<String> = paths(p - 1, q)
        .into_iter()
        .map(|s| format!("x{s}"))
        .collect();
    out.extend(paths(p, q - 1).into_iter().map(|s| format!("y{s}")));
    out
}

#[test]
fn order_of_differentiation_is_immaterial() {
    for order in 2..=8u32 {
        for q in 1..=order {
            let p = order - q;
            let want = canon(p, q);
            for path in paths(p as usize, q as usize) {
                let got = partial_along(&path).unwrap().canonical();
                assert_eq!(got, want, "path {path}");
            }
        }
    }
}

#[test]
fn every_term_depends_on_d() {
    // the gamma seed phi/(x sqrt y) is the one term without d+ or d-
    assert!(!bs_partial(key(2, 0)).unwrap().has_d_dependence());
    for order in 2..=8u32 {
        for p in (0..=order).filter(|&p| (p, order) != (2, 2)) {
            assert!(
                bs_partial(key(p, order - p)).unwrap().has_d_dependence(),
                "({p},{})",
                order - p
            );
        }
    }
}

#[test]
fn matches_high_precision_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let strike = 1.0;
    for _ in 0..20 {
        let x = rng.gen_range(0.6..1.6);
        let y = rng.gen_range(0.05..0.8);
        let r_t = rng.gen_range(0.0..0.1);
        for order in 3..=7u32 {
            for p in 0..=order {
                let q = order - p;
                let rich = common::richardson_partial(p, q, x, y, strike, r_t);
                let got = eval_partial(key(p, q), x, y, strike, r_t).unwrap();
                let rel = (got - rich).abs() / rich.abs().max(1e-300);
                assert!(
                    rel <= 1e-5,
                    "({p},{q}) at x={x} y={y} rT={r_t}: {got} vs {rich}"
                );
            }
        }
    }
}

#[test]
fn vanishes_at_the_edges() {
    for order in 2..=7u32 {
        for p in 0..=order {
            let k = key(p, order - p);
            for (x, y) in [(1e-8, 0.5), (1e8, 0.5), (1.0, 1e6)] {
                let v = eval_partial(k, x, y, 1.0, 0.02).unwrap();
                assert!(v.abs() < 1e-12, "{k} at ({x},{y}): {v}");
            }
        }
    }
}
