//! Central-difference gradient checking.

use rand::SeedableRng;

use super::graph::{Graph, Var};
use super::layers::{Ctx, Mode};
use super::params::ParamStore;
use super::tensor::Tensor;
use super::{NnError, Rng};

/// `|a − n| / max(1e-8, |a| + |n|)`
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-8)
}

/// Compares the graph gradient of the scalar built by `f` against central
/// differences with step `h`, over every element of every input. Returns
/// the maximum relative error.
pub fn grad_check<Fun>(f: Fun, inputs: &[Tensor<f64>], h: f64) -> Result<f64, NnError>
where
    Fun: Fn(&mut Graph<f64>, &[Var]) -> Result<Var, NnError>,
{
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.leaf(t.clone())).collect();
    let loss = f(&mut g, &vars)?;
    g.backward(loss)?;
    let analytic: Vec<Vec<f64>> = vars
        .iter()
        .zip(inputs)
        .map(|(&v, t)| g.grad(v).map_or_else(|| vec![0.0; t.len()], <[f64]>::to_vec))
        .collect();
    let value = |xs: &[Tensor<f64>]| -> f64 {
        let mut g = Graph::new();
        let vars: Vec<Var> = xs.iter().map(|t| g.constant(t.clone())).collect();
        match f(&mut g, &vars) {
            Ok(l) => g.value(l).item(),
            Err(_) => f64::NAN,
        }
    };
    Ok(grad_check_fn(value, &analytic, inputs, h))
}

/// Central differences of an arbitrary scalar function against supplied
/// analytic gradients.
pub fn grad_check_fn<Fun>(f: Fun, analytic: &[Vec<f64>], inputs: &[Tensor<f64>], h: f64) -> f64
where
    Fun: Fn(&[Tensor<f64>]) -> f64,
{
    let mut xs = inputs.to_vec();
    let mut worst = 0.0f64;
    for i in 0..xs.len() {
        for j in 0..xs[i].len() {
            let orig = xs[i].data()[j];
            xs[i].data_mut()[j] = orig + h;
            let up = f(&xs);
            xs[i].data_mut()[j] = orig - h;
            let down = f(&xs);
            xs[i].data_mut()[j] = orig;
            let numeric = (up - down) / (2.0 * h);
            let err = relative_error(analytic[i][j], numeric);
            worst = if err.is_nan() { f64::INFINITY } else { worst.max(err) };
        }
    }
    worst
}

/// Gradient check over the trainable parameters of a store. `loss` builds
/// the scalar from a fresh context; in train mode every evaluation uses an
/// rng seeded with `seed`, so dropout masks repeat. At most `max_per_param`
/// evenly spaced elements of each parameter are probed.
pub fn grad_check_store<Fun>(
    store: &mut ParamStore<f64>,
    mode: Mode,
    seed: u64,
    h: f64,
    max_per_param: usize,
    loss: Fun,
) -> Result<f64, NnError>
where
    Fun: Fn(&mut Ctx<'_, f64>) -> Result<Var, NnError>,
{
    let eval = |store: &ParamStore<f64>, backward: bool| -> Result<(f64, Vec<(usize, Vec<f64>)>), NnError> {
        let mut rng = Rng::seed_from_u64(seed);
        let mut ctx = match mode {
            Mode::Train => Ctx::train(store, &mut rng),
            Mode::Eval => Ctx::eval(store),
        };
        let l = loss(&mut ctx)?;
        let value = ctx.graph.value(l).item();
        let mut grads = Vec::new();
        if backward {
            ctx.graph.backward(l)?;
            grads = ctx.graph.param_grads().map(|(id, g)| (id.index(), g.to_vec())).collect();
        }
        Ok((value, grads))
    };
    let (_, grads) = eval(store, true)?;
    let ids: Vec<_> = store.iter().filter(|(_, p)| p.trainable()).map(|(id, p)| (id, p.value.len())).collect();
    let mut worst = 0.0f64;
    for (id, n) in ids {
        let analytic = grads
            .iter()
            .find(|(i, _)| *i == id.index())
            .map_or_else(|| vec![0.0; n], |(_, g)| g.clone());
        let stride = n.div_ceil(max_per_param.max(1)).max(1);
        for j in (0..n).step_by(stride) {
            let orig = store.get(id).value.data()[j];
            store.get_mut(id).value.data_mut()[j] = orig + h;
            let up = eval(store, false)?.0;
            store.get_mut(id).value.data_mut()[j] = orig - h;
            let down = eval(store, false)?.0;
            store.get_mut(id).value.data_mut()[j] = orig;
            let err = relative_error(analytic[j], (up - down) / (2.0 * h));
            worst = if err.is_nan() { f64::INFINITY } else { worst.max(err) };
        }
    }
    Ok(worst)
}
