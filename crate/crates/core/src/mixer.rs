//! Supervised contextual embeddings: per-source projections combined by a
//! learned, softmax-normalised convex combination and a global scale.
//!
//! For source representations `h_n^k` (width `d_k`) the mixer computes
//!
//! ```text
//! g_n^k = h_n^k W_k            (W_k is d_k x D, no bias)
//! s     = softmax(a)
//! O_n   = gamma * sum_k s_k g_n^k
//! ```
//!
//! so the output width is `D` whatever the number of sources. Sums over
//! sources are accumulated in ascending value order, which makes the result
//! independent of the order in which sources are listed, bit for bit.

use ndarray::{Array1, Array2, ArrayView2, Axis};

use crate::encoders::SourceStack;
use crate::error::{Error, Result};
use crate::params::{slice1, slice1_mut, slice2, slice2_mut, ParamFile, Parameters};
use crate::rng::{self, SeededRng};

/// Default shared projection width.
pub const DEFAULT_MIX_DIM: usize = 300;

fn ordered_sum(terms: &mut [f64]) -> f64 {
    terms.sort_unstable_by(|a, b| a.total_cmp(b));
    terms.iter().sum()
}

/// `s_k = exp(a_k - max a) / sum_j exp(a_j - max a)`.
pub fn softmax_weights(logits: &[f64]) -> Vec<f64> {
    assert!(!logits.is_empty(), "softmax over zero logits");
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|a| (a - max).exp()).collect();
    let total = ordered_sum(&mut exps.clone());
    exps.iter().map(|e| e / total).collect()
}

/// Trainable scalars added by the mixture: one logit per source plus `gamma`.
pub fn mixture_param_count(sources: usize) -> usize {
    sources + 1
}

/// Parameters in the projection matrices, reported separately from
/// [`mixture_param_count`].
pub fn projection_param_count(source_dims: &[usize], mix_dim: usize) -> usize {
    source_dims.iter().map(|d| d * mix_dim).sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct MixParams {
    pub projections: Vec<Array2<f64>>,
    pub logits: Array1<f64>,
    pub gamma: f64,
}

impl MixParams {
    /// Equal logits, `gamma = 1`, and Glorot-uniform projections.
    pub fn init(source_dims: &[usize], mix_dim: usize, r: &mut SeededRng) -> Self {
        assert!(!source_dims.is_empty(), "mixer needs at least one source");
        let projections = source_dims
            .iter()
            .map(|&d| {
                let limit = (6.0 / (d + mix_dim) as f64).sqrt();
                Array2::from_shape_fn((d, mix_dim), |_| rng::symmetric(r, limit))
            })
            .collect();
        MixParams {
            projections,
            logits: Array1::zeros(source_dims.len()),
            gamma: 1.0,
        }
    }

    pub fn sources(&self) -> usize {
        self.projections.len()
    }

    pub fn mix_dim(&self) -> usize {
        self.projections[0].ncols()
    }

    pub fn source_dims(&self) -> Vec<usize> {
        self.projections.iter().map(|w| w.nrows()).collect()
    }

    pub fn weights(&self) -> Vec<f64> {
        softmax_weights(self.logits.as_slice().expect("standard layout"))
    }

    fn check(&self, stack: &SourceStack) -> Result<()> {
        if stack.len() != self.sources() {
            return Err(Error::dimension("source count", self.sources(), stack.len()));
        }
        for (k, ((name, h), w)) in stack.entries().iter().zip(&self.projections).enumerate() {
            if h.ncols() != w.nrows() {
                return Err(Error::dimension(
                    format!("source {k} (`{name}`) width"),
                    w.nrows(),
                    h.ncols(),
                ));
            }
        }
        Ok(())
    }

    fn projected(&self, stack: &SourceStack) -> Vec<Array2<f64>> {
        stack
            .entries()
            .iter()
            .zip(&self.projections)
            .map(|((_, h), w)| h.dot(w))
            .collect()
    }

    /// `sum_k s_k g^k`, before scaling by gamma.
    fn combine(projected: &[Array2<f64>], weights: &[f64]) -> Array2<f64> {
        let (rows, cols) = projected[0].dim();
        let mut out = Array2::zeros((rows, cols));
        let mut terms = vec![0.0; projected.len()];
        for n in 0..rows {
            for d in 0..cols {
                for (k, g) in projected.iter().enumerate() {
                    terms[k] = weights[k] * g[[n, d]];
                }
                out[[n, d]] = ordered_sum(&mut terms);
            }
        }
        out
    }

    pub fn forward(&self, stack: &SourceStack) -> Result<Array2<f64>> {
        self.check(stack)?;
        let projected = self.projected(stack);
        let mut out = Self::combine(&projected, &self.weights());
        out *= self.gamma;
        Ok(out)
    }

    /// Gradients of `sum(upstream * forward(stack))` with respect to every
    /// projection, the logits and gamma.
    pub fn backward(&self, stack: &SourceStack, upstream: ArrayView2<f64>) -> Result<MixParams> {
        self.check(stack)?;
        let projected = self.projected(stack);
        if upstream.dim() != projected[0].dim() {
            return Err(Error::dimension("upstream gradient rows", projected[0].nrows(), upstream.nrows()));
        }
        let weights = self.weights();
        let mixed = Self::combine(&projected, &weights);

        let d_gamma = (&mixed * &upstream).sum();
        let d_weights: Vec<f64> = projected
            .iter()
            .map(|g| self.gamma * (g * &upstream).sum())
            .collect();
        let expected: f64 = weights.iter().zip(&d_weights).map(|(s, d)| s * d).sum();
        let d_logits = Array1::from_iter(
            weights
                .iter()
                .zip(&d_weights)
                .map(|(s, d)| s * (d - expected)),
        );
        let projections = stack
            .entries()
            .iter()
            .zip(&weights)
            .map(|((_, h), s)| {
                let mut g = h.t().dot(&upstream);
                g *= self.gamma * s;
                g
            })
            .collect();
        Ok(MixParams {
            projections,
            logits: d_logits,
            gamma: d_gamma,
        })
    }

    pub(crate) fn store(&self, file: &mut ParamFile, prefix: &str) {
        file.set_meta(&format!("{prefix}.sources"), self.sources());
        for (k, w) in self.projections.iter().enumerate() {
            file.set_matrix(&format!("{prefix}.W{k}"), w);
        }
        file.set_vector(&format!("{prefix}.logits"), &self.logits);
        file.set_scalar(&format!("{prefix}.gamma"), self.gamma);
    }

    pub(crate) fn load(file: &ParamFile, prefix: &str) -> Result<Self> {
        let k: usize = file.meta_parse(&format!("{prefix}.sources"))?;
        if k == 0 {
            return Err(Error::format("mixer with zero sources"));
        }
        let projections = (0..k)
            .map(|i| file.matrix(&format!("{prefix}.W{i}")))
            .collect::<Result<Vec<_>>>()?;
        let dim = projections[0].ncols();
        if projections.iter().any(|w| w.ncols() != dim) {
            return Err(Error::format("projections disagree on the shared width"));
        }
        Ok(MixParams {
            projections,
            logits: file.vector(&format!("{prefix}.logits"), k)?,
            gamma: file.scalar(&format!("{prefix}.gamma"))?,
        })
    }

    pub fn to_param_file(&self) -> ParamFile {
        let mut f = ParamFile::new("mixer");
        self.store(&mut f, "mix");
        f
    }

    pub fn from_param_file(file: &ParamFile) -> Result<Self> {
        if file.kind != "mixer" {
            return Err(Error::format(format!("expected a mixer file, found `{}`", file.kind)));
        }
        Self::load(file, "mix")
    }
}

impl Parameters for MixParams {
    fn visit(&self, f: &mut dyn FnMut(&str, &[f64])) {
        for (k, w) in self.projections.iter().enumerate() {
            f(&format!("mix.W{k}"), slice2(w));
        }
        f("mix.logits", slice1(&self.logits));
        f("mix.gamma", std::slice::from_ref(&self.gamma));
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut [f64])) {
        for (k, w) in self.projections.iter_mut().enumerate() {
            f(&format!("mix.W{k}"), slice2_mut(w));
        }
        f("mix.logits", slice1_mut(&mut self.logits));
        f("mix.gamma", std::slice::from_mut(&mut self.gamma));
    }
}

/// Row-wise `[mixed | base]`.
pub fn concat_with_base(mixed: ArrayView2<f64>, base: ArrayView2<f64>) -> Result<Array2<f64>> {
    if mixed.nrows() != base.nrows() {
        return Err(Error::dimension("concatenated rows", mixed.nrows(), base.nrows()));
    }
    Ok(ndarray::concatenate(Axis(1), &[mixed, base]).expect("row counts checked"))
}
