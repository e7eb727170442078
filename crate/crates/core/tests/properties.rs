use proptest::prelude::*;

use streamrl::approximator::{Activation, NetworkSpec, ParamVector};
use streamrl::evalstats::{iqm, normalize_scores, probability_of_improvement, Baselines, ScoreMatrix};
use streamrl::objectives::{c51_project, smooth_l1, softmax, CategoricalDistribution, Support};
use streamrl::optim::{adam_step, AdamConfig, AdamState};

fn finite(max: f64) -> impl Strategy<Value = f64> {
    -max..max
}

fn matrix(envs: usize) -> impl Strategy<Value = ScoreMatrix> {
    prop::collection::vec(prop::collection::vec(0u8..6, 1..5), envs).prop_map(|strata| {
        let mut m = ScoreMatrix::new();
        for (e, s) in strata.iter().enumerate() {
            for v in s {
                m.push(format!("e{e}"), f64::from(*v));
            }
        }
        m
    })
}

proptest! {
    #[test]
    fn iqm_ignores_order(mut xs in prop::collection::vec(finite(1e6), 1..40), seed in any::<u64>()) {
        let before = iqm(&xs);
        let n = xs.len();
        for i in 0..n {
            xs.swap(i, (seed as usize).wrapping_mul(i + 7) % n);
        }
        prop_assert_eq!(before, iqm(&xs));
    }

    #[test]
    fn iqm_is_monotone(xs in prop::collection::vec(finite(1e6), 1..40), i in any::<prop::sample::Index>(), bump in 0.0..1e3f64) {
        let mut raised = xs.clone();
        raised[i.index(xs.len())] += bump;
        prop_assert!(iqm(&raised) >= iqm(&xs) - 1e-9 * iqm(&xs).abs().max(1.0));
    }

    #[test]
    fn poi_is_antisymmetric((x, y) in (1usize..4).prop_flat_map(|e| (matrix(e), matrix(e)))) {
        let p = probability_of_improvement(&x, &y).unwrap();
        let q = probability_of_improvement(&y, &x).unwrap();
        prop_assert_eq!(p + q, 1.0);
        prop_assert!((0.0..=1.0).contains(&p));
    }

    #[test]
    fn normalization_is_affine(raw in finite(1e3), a in 0.1..10.0f64, b in finite(10.0)) {
        let mut base = Baselines::default();
        base.insert("e", 0.5, 4.0).unwrap();
        let one = |s: f64| -> f64 {
            let m: ScoreMatrix = [("e".to_string(), s)].into_iter().collect();
            normalize_scores(&m, &base).unwrap().pooled()[0]
        };
        // n(a*x + b) is affine in x with slope a/(ref - random)
        let lhs = one(a * raw + b) - one(b);
        let rhs = a * (one(raw) - one(0.0));
        prop_assert!((lhs - rhs).abs() <= 1e-9 * (1.0 + lhs.abs()));
    }

    #[test]
    fn projection_conserves_mass(
        logits in prop::collection::vec(finite(5.0), 11),
        reward in finite(30.0),
        gamma in 0.0..=1.0f64,
        terminal in any::<bool>(),
    ) {
        let support = Support::new(-10.0, 10.0, 11).unwrap();
        let src = CategoricalDistribution::new(support, softmax(&logits)).unwrap();
        let proj = c51_project(&src, reward, gamma, terminal).unwrap();
        prop_assert!((proj.probs.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        prop_assert!(proj.probs.iter().all(|p| *p >= 0.0));
    }

    #[test]
    fn smooth_l1_gradient_bounded(p in finite(1e12), t in finite(1e12)) {
        let g = smooth_l1(p, t, 1.0).unwrap().grad[0];
        prop_assert!(g.abs() <= 1.0);
    }

    #[test]
    fn adam_step_is_bounded_by_first_moment(
        g in prop::collection::vec(finite(1e6), 1..6),
        eps in 1e-8..1.0f64,
        eta in 1e-6..1.0f64,
    ) {
        let config = AdamConfig { epsilon: eps, ..Default::default() };
        let mut state = AdamState::new(g.len(), config).unwrap();
        let mut w = ParamVector::zeros(g.len());
        adam_step(&mut state, &mut w, &ParamVector::from_vec(g.clone()), eta).unwrap();
        for i in 0..g.len() {
            prop_assert!(w[i].abs() <= eta * state.m[i].abs() / eps);
        }
    }

    // tanh keeps the function smooth, so the stencil never straddles a kink
    #[test]
    fn backward_matches_finite_differences(seed in 0u64..1000, obs in prop::collection::vec(finite(2.0), 3)) {
        let spec = NetworkSpec::new(3, vec![4], 2, 1).with_sparsity(0.0).with_activation(Activation::Tanh);
        let params = spec.init_sparse(seed).unwrap();
        let u = [0.7, -1.3];
        let (_, cache) = spec.forward(&params, &obs).unwrap();
        let grad = spec.backward(&params, &cache, &u).unwrap();
        let f = |p: &ParamVector| {
            let out = spec.evaluate(p, &obs).unwrap();
            out[0] * u[0] + out[1] * u[1]
        };
        let h = 1e-3;
        for k in 0..params.len() {
            let at = |d: f64| {
                let mut p = params.clone();
                p[k] += d;
                f(&p)
            };
            let numeric = (at(-2.0 * h) - 8.0 * at(-h) + 8.0 * at(h) - at(2.0 * h)) / (12.0 * h);
            let rel = (grad[k] - numeric).abs() / grad[k].abs().max(numeric.abs()).max(1e-6);
            prop_assert!(rel < 1e-4, "param {} analytic {} numeric {}", k, grad[k], numeric);
        }
    }
}
