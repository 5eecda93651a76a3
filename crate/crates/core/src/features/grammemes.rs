use crate::corpus::GrammemeLexicon;
use crate::nn::{Activation, Ctx, Dense, NnError, ParamStore, Rng, Scalar, Var};

/// Probability of each (category, value) slot for `form`: the summed
/// frequency of its analyses carrying that value over the total frequency
/// of all its analyses. Forms missing from the lexicon, or with zero total
/// frequency, get the zero vector.
pub fn grammeme_probabilities(form: &str, lexicon: &GrammemeLexicon) -> Vec<f64> {
    let mut out = vec![0.0; lexicon.dim()];
    let Some(analyses) = lexicon.analyses(form) else {
        return out;
    };
    let total: f64 = analyses.iter().map(|a| a.frequency).sum();
    if total <= 0.0 {
        return out;
    }
    for a in analyses {
        for &s in a.slots() {
            out[s] += a.frequency;
        }
    }
    out.iter_mut().for_each(|v| *v /= total);
    out
}

/// Dense layer with ReLU over the grammeme probability vector.
#[derive(Clone, Copy, Debug)]
pub struct GrammemeEmbed {
    pub dense: Dense,
}

impl GrammemeEmbed {
    pub fn new<F: Scalar>(
        store: &mut ParamStore<F>,
        name: &str,
        slots: usize,
        dim: usize,
        rng: &mut Rng,
    ) -> Result<Self, NnError> {
        if slots == 0 {
            return Err(NnError::Invalid("grammeme features need a lexicon with at least one category".into()));
        }
        Ok(GrammemeEmbed { dense: Dense::new(store, name, slots, dim, Activation::Relu, rng)? })
    }

    pub fn bind<F: Scalar>(store: &ParamStore<F>, name: &str) -> Result<Self, NnError> {
        Ok(GrammemeEmbed { dense: Dense::bind(store, name, Activation::Relu)? })
    }

    /// `probs: [words × slots]` row-major.
    pub fn forward<F: Scalar>(&self, ctx: &mut Ctx<'_, F>, probs: &[f32]) -> Result<Var, NnError> {
        let slots = self.dense.in_dim;
        if !probs.len().is_multiple_of(slots) {
            return Err(NnError::Shape(format!("{} grammeme values for {slots} slots", probs.len())));
        }
        let data = probs.iter().map(|&p| F::from_f64_lossy(p as f64)).collect();
        let x = ctx.graph.constant(crate::nn::Tensor::new(vec![probs.len() / slots, slots], data));
        self.dense.forward(ctx, x)
    }
}
