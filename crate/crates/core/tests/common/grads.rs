//! Finite-difference checks shared by the model tests and the acceptance run.

use std::rc::Rc;

use cardarena::model::gradcheck::{check_gradients, GradCheck};
use cardarena::model::*;
use rand::Rng;

use super::{random_window, rng, toy_config};

pub const GRAD_TOL: f64 = 1e-4;

pub fn random_tensor(rows: usize, cols: usize, r: &mut impl Rng) -> Tensor {
    Tensor::from_vec(rows, cols, (0..rows * cols).map(|_| r.random_range(-1.0..1.0)).collect())
}

pub fn params_with(shapes: &[(&str, usize, usize)], seed: u64) -> Params {
    let mut r = rng(seed);
    let mut p = Params::new();
    for &(n, rows, cols) in shapes {
        p.add(n, random_tensor(rows, cols, &mut r));
    }
    p
}

/// Reduces any tensor to a scalar through a fixed random projection so that
/// every output element carries a distinct gradient.
pub fn project(g: &mut Graph, x: Var, seed: u64) -> Var {
    let t = g.value(x).clone();
    let w = random_tensor(t.rows, t.cols, &mut rng(seed));
    let w = g.constant(w);
    let y = g.mul(x, w);
    g.sum(&[y])
}

fn check(p: &Params, f: impl Fn(&mut Graph) -> Var) -> GradCheck {
    check_gradients(p, f, 1e-5, 24, 7)
}

/// One check per graph primitive, attention in every mask and mode included.
pub fn primitive_checks() -> Vec<(String, GradCheck)> {
    let p = params_with(&[("a", 3, 4), ("b", 4, 5), ("c", 3, 4), ("r", 1, 4), ("g", 1, 4), ("h", 1, 4)], 1);
    let v = |g: &mut Graph, n: &str| g.param_named(n);
    let mut out = vec![
        ("matmul".to_string(), check(&p, |g| { let (a, b) = (v(g, "a"), v(g, "b")); let y = g.matmul(a, b); project(g, y, 1) })),
        ("add".into(), check(&p, |g| { let (a, c) = (v(g, "a"), v(g, "c")); let y = g.add(a, c); project(g, y, 2) })),
        ("add_broadcast".into(), check(&p, |g| { let (a, r) = (v(g, "a"), v(g, "r")); let y = g.add_broadcast(a, r); project(g, y, 3) })),
        ("mul".into(), check(&p, |g| { let (a, c) = (v(g, "a"), v(g, "c")); let y = g.mul(a, c); project(g, y, 4) })),
        ("scale".into(), check(&p, |g| { let a = v(g, "a"); let y = g.scale(a, -1.7); project(g, y, 5) })),
        ("gelu".into(), check(&p, |g| { let a = v(g, "a"); let y = g.gelu(a); project(g, y, 6) })),
        ("layer_norm".into(), check(&p, |g| { let (a, ga, be) = (v(g, "a"), v(g, "g"), v(g, "h")); let y = g.layer_norm(a, ga, be); project(g, y, 7) })),
        ("concat_rows".into(), check(&p, |g| { let (a, c) = (v(g, "a"), v(g, "c")); let y = g.concat_rows(&[a, c, a]); project(g, y, 8) })),
        ("gather_rows".into(), check(&p, |g| { let a = v(g, "a"); let y = g.gather_rows(a, vec![2, 0, 2, 1]); project(g, y, 9) })),
        ("group_mean".into(), check(&p, |g| { let (a, c) = (v(g, "a"), v(g, "c")); let y = g.concat_rows(&[a, c]); let m = g.group_mean(y, 2); project(g, m, 10) })),
        ("cross_entropy".into(), check(&p, |g| { let a = v(g, "a"); g.cross_entropy(a, vec![Some(1), None, Some(3)], vec![0.5, 1.0, 2.0]) })),
    ];

    let p = params_with(&[("q", 10, 6), ("k", 10, 6), ("v", 10, 4)], 2);
    let masks: Vec<Option<Rc<MaskMatrix>>> = vec![None, Some(Rc::new(MaskMatrix::causal(5))), Some(Rc::new(local_mask(2, 3).with_padding(&[true, false, false, false, false, false])))];
    for mode in [MaskMode::NegInf, MaskMode::Literal] {
        for (mi, m) in masks.iter().enumerate() {
            let (groups, heads) = if m.as_ref().is_some_and(|m| m.n == 6) { (1, 2) } else { (2, 2) };
            let rows = if groups == 1 { 6 } else { 10 };
            let f = |g: &mut Graph| {
                let q = g.param_named("q");
                let k = g.param_named("k");
                let v = g.param_named("v");
                let idx: Vec<usize> = (0..rows).collect();
                let (q, k, v) = (g.gather_rows(q, idx.clone()), g.gather_rows(k, idx.clone()), g.gather_rows(v, idx));
                let z = g.attention(q, k, v, groups, heads, m.clone(), mode);
                project(g, z, 12)
            };
            out.push((format!("attention {mode:?} mask {mi}"), check(&p, f)));
        }
    }
    out
}

pub fn arch_loss_fn(model: &DecisionModel, w: cardarena::trajectory::TrajectoryWindow) -> impl Fn(&mut Graph) -> Var + '_ {
    move |g: &mut Graph| {
        let p = model.forward(g, &w);
        let t = step_targets(&w, model.cfg.discrete_action);
        window_loss(g, &p, &t, 1.0)
    }
}

/// Full forward plus loss of every architecture at toy size, one padded step included.
pub fn architecture_checks() -> Vec<(Arch, GradCheck)> {
    Arch::all()
        .into_iter()
        .map(|arch| {
            let cfg = ModelConfig { l: 3, d_model: 8, ..toy_config(arch, 3) };
            let model = DecisionModel::new(cfg).unwrap();
            let w = random_window(3, 1, &mut rng(8));
            (arch, check_gradients(&model.params, arch_loss_fn(&model, w), 1e-5, 24, 9))
        })
        .collect()
}
