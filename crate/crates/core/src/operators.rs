//! Martingale transform, the `l^2`-valued lift, square function and maximal
//! function.

use crate::error::{Error, Result};
use crate::process::{
    differences, norm, norm_sq, same_tree, AdaptedProcess, Martingale, PredictableSequence,
    RandomVariable,
};

/// `(Tf)_n = sum_{k=0}^n v_k d_k f`.
pub fn transform(f: &Martingale, v: &PredictableSequence) -> Result<Martingale> {
    same_tree(f.tree(), v.tree())?;
    let d = differences(f);
    let tree = f.tree().clone();
    let dim = f.dim();
    let mut levels: Vec<Vec<f64>> = Vec::with_capacity(tree.depth() + 1);
    for n in 0..=tree.depth() {
        let mut level = vec![0.0; tree.num_atoms(n) * dim];
        for (i, atom) in tree.level(n).iter().enumerate() {
            let vk = v.at(n, i);
            for c in 0..dim {
                let before = atom.parent.map_or(0.0, |p| levels[n - 1][p * dim + c]);
                level[i * dim + c] = before + vk * d.value(n, i)[c];
            }
        }
        levels.push(level);
    }
    Martingale::new(AdaptedProcess::new(tree, dim, levels)?)
}

/// The `l^2`-valued transform with `v_k = e_k`: coordinate `k` of the lift at
/// time `n` is `d_k f` for `k <= n` and 0 otherwise. Values live in
/// `R^{N+1}`.
pub fn l2_lift(f: &Martingale) -> Result<Martingale> {
    if f.dim() != 1 {
        return Err(Error::Argument(format!(
            "l2_lift takes a scalar martingale, got dim {}",
            f.dim()
        )));
    }
    let d = differences(f);
    let tree = f.tree().clone();
    let dim = tree.depth() + 1;
    let mut levels: Vec<Vec<f64>> = Vec::with_capacity(dim);
    for n in 0..=tree.depth() {
        let mut level = vec![0.0; tree.num_atoms(n) * dim];
        for (i, atom) in tree.level(n).iter().enumerate() {
            if let Some(p) = atom.parent {
                level[i * dim..i * dim + n].copy_from_slice(&levels[n - 1][p * dim..p * dim + n]);
            }
            level[i * dim + n] = d.value(n, i)[0];
        }
        levels.push(level);
    }
    Martingale::new(AdaptedProcess::new(tree, dim, levels)?)
}

/// `S_n(f) = (sum_{k<=n} |d_k f|^2)^{1/2}`.
pub fn square_function(f: &Martingale) -> AdaptedProcess {
    let d = differences(f);
    let tree = f.tree().clone();
    let mut sums: Vec<Vec<f64>> = Vec::with_capacity(tree.depth() + 1);
    for n in 0..=tree.depth() {
        let level = tree
            .level(n)
            .iter()
            .enumerate()
            .map(|(i, atom)| atom.parent.map_or(0.0, |p| sums[n - 1][p]) + norm_sq(d.value(n, i)))
            .collect();
        sums.push(level);
    }
    let levels = sums
        .into_iter()
        .map(|l| l.into_iter().map(f64::sqrt).collect())
        .collect();
    AdaptedProcess::new(tree, 1, levels).expect("square function is well formed")
}

/// `M_n g = max_{k<=n} |g_k|`; returns the final value `Mg = M_N g` and the
/// running maxima.
pub fn maximal(g: &AdaptedProcess) -> (RandomVariable, AdaptedProcess) {
    let tree = g.tree().clone();
    let mut levels: Vec<Vec<f64>> = Vec::with_capacity(tree.depth() + 1);
    for n in 0..=tree.depth() {
        let level = tree
            .level(n)
            .iter()
            .enumerate()
            .map(|(i, atom)| {
                let before = atom.parent.map_or(0.0, |p| levels[n - 1][p]);
                before.max(norm(g.value(n, i)))
            })
            .collect();
        levels.push(level);
    }
    let running = AdaptedProcess::new(tree, 1, levels).expect("running maximum is well formed");
    (running.final_value(), running)
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::filtration::{build_dyadic, build_random, AtomRef, FiltrationTree};
    use crate::norms::{bmo_alpha_norm, lp_norm, Alpha, Mode};
    use crate::process::{martingale_from_final, random_martingale};
    use crate::stopping::{indicator_process, tau_a, StoppingTime};
    use crate::tolerance::rel_eq;

    fn dyadic(depth: usize) -> Arc<FiltrationTree> {
        Arc::new(build_dyadic(depth).unwrap())
    }

    fn r1() -> Martingale {
        martingale_from_final(&RandomVariable::scalar(dyadic(1), vec![1.0, -1.0]).unwrap())
    }

    #[test]
    fn transform_examples() {
        let t = Arc::new(build_random(1, 3, 3).unwrap());
        let f = random_martingale(&t, 2, 1).unwrap();
        let id = transform(&f, &PredictableSequence::constant(t.clone(), 1.0).unwrap()).unwrap();
        for n in 0..=3 {
            for (a, b) in id.level(n).iter().zip(f.level(n)) {
                assert!((a - b).abs() < 1e-12);
            }
        }
        let z = transform(&f, &PredictableSequence::constant(t.clone(), 0.0).unwrap()).unwrap();
        assert!(z.levels().iter().flatten().all(|&v| v == 0.0));

        let r = r1();
        let v = PredictableSequence::new(r.tree().clone(), vec![vec![1.0], vec![-1.0]]).unwrap();
        let tf = transform(&r, &v).unwrap();
        assert_eq!(tf.level(1), &[-1.0, 1.0]);
        let alpha = Alpha::new(0.3).unwrap();
        assert_eq!(
            bmo_alpha_norm(&tf, alpha, Mode::AtomFast).unwrap().value,
            bmo_alpha_norm(&r, alpha, Mode::AtomFast).unwrap().value
        );

        let other = PredictableSequence::constant(dyadic(2), 1.0).unwrap();
        assert!(matches!(transform(&r, &other), Err(Error::TreeMismatch)));
    }

    #[test]
    fn lift_examples() {
        let t = dyadic(3);
        let z = l2_lift(&Martingale::zero(t, 1)).unwrap();
        assert_eq!(z.dim(), 4);
        assert!(z.levels().iter().flatten().all(|&v| v == 0.0));

        let u = l2_lift(&r1()).unwrap();
        assert_eq!(u.final_value().values(), &[0.0, 1.0, 0.0, -1.0]);
        assert!(u.final_value().abs().iter().all(|&x| x == 1.0));

        let vector = random_martingale(&dyadic(2), 1, 2).unwrap();
        assert!(l2_lift(&vector).is_err());
    }

    #[test]
    fn lift_norm_matches_square_function() {
        let t = Arc::new(build_random(4, 4, 3).unwrap());
        let f = random_martingale(&t, 5, 1).unwrap();
        let u = l2_lift(&f).unwrap();
        let s = square_function(&f);
        for n in 0..=4 {
            for i in 0..t.num_atoms(n) {
                assert!((norm(u.value(n, i)) - s.value(n, i)[0]).abs() < 1e-12);
            }
        }
        let alpha = Alpha::new(0.45).unwrap();
        let a = bmo_alpha_norm(&u, alpha, Mode::AtomFast).unwrap().value;
        let b = bmo_alpha_norm(&f, alpha, Mode::AtomFast).unwrap().value;
        assert!(rel_eq(a, b, 1e-9));
    }

    #[test]
    fn square_function_examples() {
        let t = dyadic(2);
        let s = square_function(&Martingale::zero(t, 1));
        assert!(s.levels().iter().flatten().all(|&v| v == 0.0));

        let s = square_function(&r1());
        assert_eq!(s.level(0), &[0.0]);
        assert_eq!(s.level(1), &[1.0, 1.0]);

        let t = Arc::new(build_random(9, 4, 3).unwrap());
        let f = random_martingale(&t, 3, 1).unwrap();
        let s = square_function(&f);
        let a = lp_norm(&s.final_value(), 2.0).unwrap();
        let b = lp_norm(&f.final_value(), 2.0).unwrap();
        assert!(rel_eq(a, b, 1e-10));
        for n in 1..=4 {
            for (i, atom) in t.level(n).iter().enumerate() {
                assert!(s.value(n, i)[0] >= s.value(n - 1, atom.parent.unwrap())[0]);
            }
        }
    }

    #[test]
    fn maximal_examples() {
        let t = dyadic(2);
        let c = AdaptedProcess::from_fn(t.clone(), 1, |_, _, o| o[0] = -1.5).unwrap();
        assert!(maximal(&c).0.values().iter().all(|&v| v == 1.5));

        assert_eq!(maximal(&r1()).0.values(), &[1.0, 1.0]);

        let tau = tau_a(&t, 1, &[AtomRef::new(1, 0)]).unwrap();
        assert_eq!(maximal(&indicator_process(&tau)).0.values(), &[1.0, 1.0, 0.0, 0.0]);
        let never = StoppingTime::never(t);
        assert!(maximal(&indicator_process(&never)).0.values().iter().all(|&v| v == 0.0));
    }
}
