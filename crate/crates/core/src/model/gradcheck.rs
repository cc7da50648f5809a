//! Central-difference gradient checks against [`Graph::backward`].

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::graph::Graph;
use super::params::{ParamId, Params};
use super::Var;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    /// Largest `|a - n| / max(|a|, |n|, floor)` over the checked elements.
    pub max_rel_error: f64,
    pub worst: Option<(String, usize)>,
    pub checked: usize,
}

/// Compares analytic and numeric gradients of `f` on up to `per_tensor`
/// randomly chosen elements of every parameter.
pub fn check_gradients<F>(params: &Params, f: F, eps: f64, per_tensor: usize, seed: u64) -> GradCheck
where
    F: Fn(&mut Graph) -> Var,
{
    let eval = |p: &Params| {
        let mut g = Graph::new(p);
        let l = f(&mut g);
        g.value(l).item()
    };
    let grads = {
        let mut g = Graph::new(params);
        let l = f(&mut g);
        g.backward(l)
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut work = params.clone();
    let mut out = GradCheck { max_rel_error: 0.0, worst: None, checked: 0 };
    for i in 0..params.len() {
        let id = ParamId(i);
        let n = params.get(id).len();
        for j in sample(&mut rng, n, per_tensor.min(n)) {
            let orig = params.get(id).data[j];
            work.get_mut(id).data[j] = orig + eps;
            let up = eval(&work);
            work.get_mut(id).data[j] = orig - eps;
            let down = eval(&work);
            work.get_mut(id).data[j] = orig;
            let numeric = (up - down) / (2.0 * eps);
            let analytic = grads.get(id).map_or(0.0, |g| g.data[j]);
            let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6);
            out.checked += 1;
            if rel > out.max_rel_error {
                out.max_rel_error = rel;
                out.worst = Some((params.name(id).to_string(), j));
            }
        }
    }
    out
}
