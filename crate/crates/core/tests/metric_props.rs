//! Property checks of the weighted geometry against independent oracles.

mod common;

use common::prox_oracle;
use proptest::prelude::*;
use ristep::DiagonalMetric;

fn weights(n: usize) -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (
        proptest::collection::vec(0.05f64..20.0, n),
        proptest::collection::vec(0.0f64..5.0, n),
    )
}

fn states(n: usize) -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(-10.0f64..10.0, n)
}

proptest! {
    #[test]
    fn dissipation_is_positively_homogeneous(
        (v, rho) in weights(4),
        x in states(4),
        lambda in 1e-3f64..1e3,
    ) {
        let m = DiagonalMetric::new(v, rho);
        let scaled: Vec<f64> = x.iter().map(|&xi| lambda * xi).collect();
        let lhs = m.dissipation(&scaled);
        let rhs = lambda * m.dissipation(&x);
        prop_assert!((lhs - rhs).abs() <= 1e-12 * rhs.abs().max(1e-300));
    }

    #[test]
    fn distance_vanishes_exactly_on_the_box(
        (v, rho) in weights(4),
        raw in proptest::collection::vec(-1.5f64..1.5, 4),
    ) {
        let m = DiagonalMetric::new(v.clone(), rho.clone());
        // scale raw coordinates onto multiples of the box half-widths
        let eta: Vec<f64> = raw.iter().zip(&rho).map(|(&r, &ri)| r * ri).collect();
        let inside = eta.iter().zip(&rho).all(|(&e, &ri)| e.abs() <= ri);
        let dist = m.dist_subdiff(&eta);
        if inside {
            prop_assert_eq!(dist, 0.0);
        } else {
            prop_assert!(dist > 0.0);
        }
    }

    #[test]
    fn distance_is_nonexpansive_in_the_dual_norm(
        (v, rho) in weights(3),
        eta1 in states(3),
        eta2 in states(3),
    ) {
        let m = DiagonalMetric::new(v, rho);
        let diff: Vec<f64> = eta1.iter().zip(&eta2).map(|(&a, &b)| a - b).collect();
        let lhs = (m.dist_subdiff(&eta1) - m.dist_subdiff(&eta2)).abs();
        prop_assert!(lhs <= m.norm_vinv(&diff) * (1.0 + 1e-12) + 1e-14);
    }

    #[test]
    fn prox_is_nonexpansive_in_the_state_norm(
        (v, rho) in weights(3),
        d1 in states(3),
        d2 in states(3),
        tau in 0.1f64..5.0,
    ) {
        let m = DiagonalMetric::new(v, rho);
        let p1 = m.prox_r_ball(&d1, tau);
        let p2 = m.prox_r_ball(&d2, tau);
        let dp: Vec<f64> = p1.iter().zip(&p2).map(|(&a, &b)| a - b).collect();
        let dd: Vec<f64> = d1.iter().zip(&d2).map(|(&a, &b)| a - b).collect();
        prop_assert!(m.norm_v(&dp) <= m.norm_v(&dd) * (1.0 + 1e-12) + 1e-14);
    }

    #[test]
    fn prox_matches_enumeration_oracle(
        (v, rho) in weights(4),
        d in states(4),
        tau in 0.05f64..4.0,
    ) {
        let m = DiagonalMetric::new(v.clone(), rho.clone());
        let fast = m.prox_r_ball(&d, tau);
        let exact = prox_oracle(&v, &rho, &d, tau);
        for (a, b) in fast.iter().zip(&exact) {
            prop_assert!((a - b).abs() <= 1e-6, "prox {a} vs oracle {b}");
        }
    }
}

#[test]
fn distance_lipschitz_touches_equality_for_collinear_shifts() {
    // sanity anchor for the nonexpansiveness property: a pure outward shift
    // changes the distance exactly by the dual norm of the shift
    let m = DiagonalMetric::new(vec![2.0], vec![1.0]);
    let d1 = m.dist_subdiff(&[3.0]);
    let d2 = m.dist_subdiff(&[5.0]);
    let shift = m.norm_vinv(&[2.0]);
    assert!((d2 - d1 - shift).abs() < 1e-14);
}
