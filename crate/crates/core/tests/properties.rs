use std::sync::Arc;

use bmo_lab::carleson::{carleson_alpha_norm, from_martingale, random_measure, CarlesonMeasure};
use bmo_lab::norms::{
    bmo_alpha_norm, bmo_alpha_p_norm, direct_sum, layer_cake, lp_norm, weak_lq_norm, Weights,
};
use bmo_lab::operators::square_function;
use bmo_lab::process::{conditional_expectation, differences, random_adapted, random_martingale};
use bmo_lab::stopping::random_stopping_time;
use bmo_lab::{build_random, AdaptedProcess, Alpha, FiltrationTree, Mode, RandomVariable, StoppingTime};
use proptest::prelude::*;

fn tree(seed: u64, depth: usize, branch: usize) -> Arc<FiltrationTree> {
    Arc::new(build_random(seed, depth, branch).unwrap())
}

fn bits(v: &[f64]) -> Vec<u64> {
    v.iter().map(|x| x.to_bits()).collect()
}

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn tower_property(seed in any::<u64>(), depth in 1usize..5, branch in 1usize..4, dim in 1usize..3) {
        let t = tree(seed, depth, branch);
        let f = random_martingale(&t, seed ^ 1, dim).unwrap();
        let x = f.final_value();
        for m in 0..=depth {
            let xm = conditional_expectation(&x, m).unwrap();
            let lifted = RandomVariable::new(t.clone(), dim, f.lift(m).unwrap().values().to_vec()).unwrap();
            for n in 0..=m {
                let direct = conditional_expectation(&x, n).unwrap();
                let twice = conditional_expectation(&lifted, n).unwrap();
                for (a, b) in direct.iter().zip(&twice) {
                    prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()));
                }
            }
            for (a, b) in xm.iter().zip(f.level(m)) {
                prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()));
            }
        }
    }

    #[test]
    fn pythagoras(seed in any::<u64>(), depth in 1usize..5, branch in 1usize..4, dim in 1usize..4) {
        let t = tree(seed, depth, branch);
        let f = random_martingale(&t, seed ^ 2, dim).unwrap();
        let d = differences(&f);
        let total: f64 = (0..=depth)
            .map(|k| {
                t.level(k)
                    .iter()
                    .enumerate()
                    .map(|(i, a)| a.mass * d.value(k, i).iter().map(|v| v * v).sum::<f64>())
                    .sum::<f64>()
            })
            .sum();
        let fin = lp_norm(&f.final_value(), 2.0).unwrap().powi(2);
        prop_assert!(close(total, fin, 1e-10));
        if dim == 1 {
            let s = lp_norm(&square_function(&f).final_value(), 2.0).unwrap().powi(2);
            prop_assert!(close(s, fin, 1e-10));
        }
    }

    #[test]
    fn norm_grows_with_alpha(seed in any::<u64>(), depth in 1usize..5, a in 0.0f64..1.0, b in 0.0f64..1.0) {
        let t = tree(seed, depth, 3);
        let f = random_martingale(&t, seed ^ 3, 1).unwrap();
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let x = bmo_alpha_norm(&f, Alpha::new(lo).unwrap(), Mode::AtomFast).unwrap().value;
        let y = bmo_alpha_norm(&f, Alpha::new(hi).unwrap(), Mode::AtomFast).unwrap().value;
        prop_assert!(x <= y * (1.0 + 1e-12));
    }

    #[test]
    fn p_variant_grows_with_p(seed in any::<u64>(), depth in 1usize..5, p in 1.0f64..6.0, q in 1.0f64..6.0, a in 0.0f64..1.0) {
        let t = tree(seed, depth, 3);
        let f = random_martingale(&t, seed ^ 4, 1).unwrap();
        let al = Alpha::new(a).unwrap();
        let (lo, hi) = if p <= q { (p, q) } else { (q, p) };
        let x = bmo_alpha_p_norm(&f, al, lo).unwrap();
        let y = bmo_alpha_p_norm(&f, al, hi).unwrap();
        prop_assert!(x <= y * (1.0 + 1e-12));
    }

    #[test]
    fn weak_below_strong(seed in any::<u64>(), depth in 1usize..5, q in 0.2f64..8.0) {
        let t = tree(seed, depth, 3);
        let g = random_adapted(&t, seed ^ 5, 2).unwrap().final_value();
        let weak = weak_lq_norm(&g, q).unwrap();
        let strong = lp_norm(&g, q).unwrap();
        prop_assert!(weak <= strong * (1.0 + 1e-12));
    }

    #[test]
    fn layer_cake_equals_direct(seed in any::<u64>(), depth in 1usize..5, p in 0.2f64..6.0) {
        let t = tree(seed, depth, 3);
        let g = random_adapted(&t, seed ^ 6, 1).unwrap().final_value();
        let mu = random_measure(&t, seed ^ 7, 2.0);
        let density = mu.density(depth.min(1));
        let lc = layer_cake(&g, p, Weights::Density(density)).unwrap();
        let points: Vec<(f64, f64)> = g
            .values()
            .iter()
            .enumerate()
            .map(|(i, v)| (*v, density[i] * t.leaf_mass(i)))
            .collect();
        prop_assert!(close(lc, direct_sum(&points, p), 1e-10));
        let lc = layer_cake(&g, p, Weights::Probability).unwrap();
        prop_assert!(close(lc, lp_norm(&g, p).unwrap().powf(p), 1e-10));
    }

    #[test]
    fn characterization_identity(seed in any::<u64>(), depth in 1usize..5, dim in 1usize..4, a in 0.0f64..0.99) {
        let t = tree(seed, depth, 3);
        let f = random_martingale(&t, seed ^ 8, dim).unwrap();
        let al = Alpha::new(a).unwrap();
        let b = bmo_alpha_norm(&f, al, Mode::AtomFast).unwrap().value;
        let c = carleson_alpha_norm(&from_martingale(&f), al, Mode::NodeFast).unwrap().value;
        prop_assert!(close(c.sqrt(), b, 1e-9));
    }

    #[test]
    fn json_round_trips_are_bit_exact(seed in any::<u64>(), depth in 1usize..5, branch in 1usize..4, dim in 1usize..3) {
        let t = tree(seed, depth, branch);
        let back = FiltrationTree::from_json(&t.to_json()).unwrap();
        prop_assert_eq!(&back, &*t);
        for n in 0..=depth {
            let m1: Vec<f64> = t.level(n).iter().map(|a| a.mass).collect();
            let m2: Vec<f64> = back.level(n).iter().map(|a| a.mass).collect();
            prop_assert_eq!(bits(&m1), bits(&m2));
        }

        let g = random_adapted(&t, seed ^ 9, dim).unwrap();
        let g2 = AdaptedProcess::from_json(&g.to_json()).unwrap();
        for n in 0..=depth {
            prop_assert_eq!(bits(g.level(n)), bits(g2.level(n)));
        }
        let x = g.final_value();
        let x2 = RandomVariable::from_json(&x.to_json()).unwrap();
        prop_assert_eq!(bits(x.values()), bits(x2.values()));

        let mu = random_measure(&t, seed ^ 10, 3.0);
        let mu2 = CarlesonMeasure::from_json(&mu.to_json(), None).unwrap();
        for k in 0..=depth {
            prop_assert_eq!(bits(mu.density(k)), bits(mu2.density(k)));
        }

        let tau = random_stopping_time(&t, seed ^ 11, 0.4);
        let tau2 = StoppingTime::from_json(t.clone(), &tau.to_json()).unwrap();
        prop_assert_eq!(tau.stops(), tau2.stops());
    }
}
