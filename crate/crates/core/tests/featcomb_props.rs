//! Algebraic properties of the combination layer.

use proptest::prelude::*;
use tcn_core::featcomb::{
    combine, combine_backward, enumerate_subsets, global_interaction, transform_dataset, Approach,
    DEFAULT_MAX_COMBINED,
};
use tcn_core::layers::Activation;
use tcn_core::{CombinationSpec, Matrix2D};

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-12)
}

fn sorted(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    v
}

fn approaches() -> impl Strategy<Value = Approach> {
    prop_oneof![Just(Approach::Multiplicative), Just(Approach::PairwiseSum)]
}

/// Vector of length 3..=8 together with a valid m.
fn vec_and_m() -> impl Strategy<Value = (Vec<f64>, usize)> {
    (3usize..=8).prop_flat_map(|n| (prop::collection::vec(-3.0f64..3.0, n), 2..=n.min(4)))
}

proptest! {
    #[test]
    fn permutation_is_multiset_invariant(
        (x, m) in vec_and_m(),
        approach in approaches(),
        perm_seed in any::<u64>(),
    ) {
        let n = x.len();
        let mut order: Vec<usize> = (0..n).collect();
        let mut rng = tcn_core::Rng::new(perm_seed);
        rng.shuffle(&mut order);
        let permuted: Vec<f64> = order.iter().map(|&i| x[i]).collect();
        let subsets = enumerate_subsets(n, m, DEFAULT_MAX_COMBINED).unwrap();
        let a = sorted(combine(&x, &subsets, approach).unwrap());
        let b = sorted(combine(&permuted, &subsets, approach).unwrap());
        for (p, q) in a.iter().zip(&b) {
            prop_assert!((p - q).abs() <= 1e-12 * p.abs().max(1.0), "{p} vs {q}");
        }
    }

    #[test]
    fn approaches_coincide_at_m2(x in prop::collection::vec(-5.0f64..5.0, 2..12)) {
        let subsets = enumerate_subsets(x.len(), 2, DEFAULT_MAX_COMBINED).unwrap();
        let a = combine(&x, &subsets, Approach::Multiplicative).unwrap();
        let b = combine(&x, &subsets, Approach::PairwiseSum).unwrap();
        for (p, q) in a.iter().zip(&b) {
            prop_assert!((p - q).abs() <= 1e-12);
        }
    }

    #[test]
    fn full_set_pairwise_identity(x in prop::collection::vec(-5.0f64..5.0, 2..12)) {
        let n = x.len();
        let subsets = enumerate_subsets(n, n, DEFAULT_MAX_COMBINED).unwrap();
        let got = combine(&x, &subsets, Approach::PairwiseSum).unwrap()[0];
        let s: f64 = x.iter().sum();
        let sq: f64 = x.iter().map(|v| v * v).sum();
        let want = (s * s - sq) / 2.0;
        prop_assert!(rel(got, want) < 1e-9 || (got - want).abs() < 1e-9, "{got} vs {want}");
        let global = global_interaction(&x, Activation::Identity).unwrap();
        prop_assert!(rel(global, want) < 1e-9 || (global - want).abs() < 1e-9);
    }

    #[test]
    fn scaling((x, m) in vec_and_m(), c in -3.0f64..3.0) {
        let subsets = enumerate_subsets(x.len(), m, DEFAULT_MAX_COMBINED).unwrap();
        let scaled: Vec<f64> = x.iter().map(|v| c * v).collect();
        let mult = combine(&x, &subsets, Approach::Multiplicative).unwrap();
        let mult_c = combine(&scaled, &subsets, Approach::Multiplicative).unwrap();
        for (a, b) in mult.iter().zip(&mult_c) {
            let want = c.powi(m as i32) * a;
            prop_assert!(rel(*b, want) < 1e-9 || (b - want).abs() < 1e-12);
        }
        let pair = combine(&x, &subsets, Approach::PairwiseSum).unwrap();
        let pair_c = combine(&scaled, &subsets, Approach::PairwiseSum).unwrap();
        for (a, b) in pair.iter().zip(&pair_c) {
            let want = c * c * a;
            prop_assert!(rel(*b, want) < 1e-9 || (b - want).abs() < 1e-12);
        }
    }

    #[test]
    fn backward_matches_finite_differences(
        (x, m) in vec_and_m(),
        approach in approaches(),
        seed in any::<u64>(),
    ) {
        let subsets = enumerate_subsets(x.len(), m, DEFAULT_MAX_COMBINED).unwrap();
        let up = tcn_core::Rng::new(seed).normal(subsets.len(), 0.0, 1.0).unwrap();
        let analytic = combine_backward(&x, &subsets, approach, &up).unwrap();
        let h = 1e-5;
        for i in 0..x.len() {
            let mut xp = x.clone();
            xp[i] += h;
            let mut xm = x.clone();
            xm[i] -= h;
            let f = |v: &[f64]| -> f64 {
                combine(v, &subsets, approach).unwrap().iter().zip(&up).map(|(a, b)| a * b).sum()
            };
            let numeric = (f(&xp) - f(&xm)) / (2.0 * h);
            let err = (analytic[i] - numeric).abs() / analytic[i].abs().max(numeric.abs()).max(1e-8);
            prop_assert!(err < 1e-6 || (analytic[i] - numeric).abs() < 1e-8, "i={i}: {} vs {numeric}", analytic[i]);
        }
    }

    #[test]
    fn multiplicative_gradient_is_zero_safe(n in 3usize..7, zero_at in 0usize..3) {
        // a zero member must not poison the other members' partials
        let mut x: Vec<f64> = (0..n).map(|i| i as f64 + 1.5).collect();
        x[zero_at] = 0.0;
        let subsets = enumerate_subsets(n, n, DEFAULT_MAX_COMBINED).unwrap();
        let g = combine_backward(&x, &subsets, Approach::Multiplicative, &[1.0]).unwrap();
        let others: f64 = x.iter().enumerate().filter(|(i, _)| *i != zero_at).map(|(_, v)| v).product();
        prop_assert!(g.iter().all(|v| v.is_finite()));
        prop_assert_eq!(g[zero_at], others);
        for (i, v) in g.iter().enumerate() {
            if i != zero_at {
                prop_assert_eq!(*v, 0.0);
            }
        }
    }
}

#[test]
fn twenty_choose_three_width() {
    // C(20,3) by Pascal's triangle
    let mut row = vec![1u64];
    for _ in 0..20 {
        let mut next = vec![1u64; row.len() + 1];
        for k in 1..row.len() {
            next[k] = row[k - 1] + row[k];
        }
        row = next;
    }
    assert_eq!(row[3], 1140);
    let x = Matrix2D::new(1, 20, (0..20).map(|v| v as f64 / 10.0).collect()).unwrap();
    let spec = CombinationSpec::new(3, Approach::Multiplicative);
    assert_eq!(
        transform_dataset(&x, &spec).unwrap().values.shape(),
        (1, row[3] as usize)
    );
}

#[test]
fn capacity_refused_before_allocation() {
    let x = Matrix2D::zeros(1, 60);
    let mut spec = CombinationSpec::new(5, Approach::Multiplicative);
    spec.max_combined = 1000;
    let err = transform_dataset(&x, &spec).unwrap_err();
    assert!(matches!(err, tcn_core::Error::Capacity { .. }), "{err}");
}
