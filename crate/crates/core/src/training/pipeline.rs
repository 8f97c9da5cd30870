//! The target model: frozen inputs, the trainable mixer and tagger, and the
//! per-sentence forward/backward pass through all of them.

use std::sync::Arc;

use ndarray::{s, Array2};

use crate::corpus::TaggedSentence;
use crate::embeddings::EmbeddingTable;
use crate::encoders::{extract_stack, Encoder, SourceStack};
use crate::error::{Error, Result};
use crate::mixer::{concat_with_base, MixParams};
use crate::params::Parameters;
use crate::tagger::TaggerParams;

/// Everything the target model reads but never updates.
#[derive(Clone)]
pub struct FrozenInputs {
    pub static_table: Arc<EmbeddingTable>,
    /// Empty for the static-only baseline.
    pub encoders: Vec<Encoder>,
}

impl FrozenInputs {
    pub fn new(static_table: Arc<EmbeddingTable>, encoders: Vec<Encoder>) -> Self {
        FrozenInputs { static_table, encoders }
    }

    pub fn features(&self, tokens: &[String]) -> Result<Features> {
        let base = self.static_table.embed(tokens);
        let stack = if self.encoders.is_empty() {
            None
        } else {
            Some(extract_stack(&self.encoders, tokens)?)
        };
        Ok(Features { base, stack })
    }

    pub fn source_names(&self) -> Vec<String> {
        self.encoders.iter().map(|e| e.name().to_owned()).collect()
    }

    pub fn source_dims(&self) -> Vec<usize> {
        self.encoders.iter().map(|e| e.dim()).collect()
    }
}

/// Frozen per-sentence inputs: static vectors and the source stack.
#[derive(Debug, Clone, PartialEq)]
pub struct Features {
    pub base: Array2<f64>,
    pub stack: Option<SourceStack>,
}

/// The trainable parameter groups.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetParams {
    pub mixer: Option<MixParams>,
    pub tagger: TaggerParams,
}

impl TargetParams {
    /// `[O_n | static_n]` rows fed to the tagger (or just the static rows).
    pub fn embed(&self, features: &Features) -> Result<Array2<f64>> {
        let input = match (&self.mixer, &features.stack) {
            (Some(m), Some(stack)) => concat_with_base(m.forward(stack)?.view(), features.base.view())?,
            (None, None) => features.base.clone(),
            (Some(_), None) => return Err(Error::format("model expects source representations")),
            (None, Some(_)) => return Err(Error::format("model has no mixer for source representations")),
        };
        self.tagger.check_input(input.view())?;
        Ok(input)
    }

    pub fn predict(&self, features: &Features) -> Result<Vec<usize>> {
        Ok(self.tagger.predict(self.embed(features)?.view()))
    }

    pub fn loss(&self, features: &Features, gold: &[usize]) -> Result<f64> {
        let input = self.embed(features)?;
        let (em, _) = self.tagger.forward(input.view());
        Ok(self.tagger.nll(em.view(), gold))
    }

    /// Adds this sentence's gradients into `grads` and returns its loss.
    pub fn accumulate(&self, features: &Features, gold: &[usize], grads: &mut TargetParams) -> Result<f64> {
        let input = self.embed(features)?;
        let (loss, d_input) = self.tagger.loss_and_grad(input.view(), gold, &mut grads.tagger);
        if let (Some(m), Some(stack), Some(gm)) = (&self.mixer, &features.stack, grads.mixer.as_mut()) {
            let d_mixed = d_input.slice(s![.., ..m.mix_dim()]);
            gm.add_scaled(&m.backward(stack, d_mixed)?, 1.0);
        }
        Ok(loss)
    }
}

impl Parameters for TargetParams {
    fn visit(&self, f: &mut dyn FnMut(&str, &[f64])) {
        if let Some(m) = &self.mixer {
            m.visit(f);
        }
        self.tagger.visit(f);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut [f64])) {
        if let Some(m) = &mut self.mixer {
            m.visit_mut(f);
        }
        self.tagger.visit_mut(f);
    }
}

/// Trainable parameters plus the label and source bookkeeping needed to use
/// them.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetModel {
    pub labels: Vec<String>,
    pub source_names: Vec<String>,
    pub params: TargetParams,
}

impl TargetModel {
    pub fn label_index(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn gold_indices(&self, sentence: &TaggedSentence) -> Result<Vec<usize>> {
        sentence
            .labels()
            .iter()
            .map(|l| {
                self.label_index(l)
                    .ok_or_else(|| Error::format(format!("label `{l}` is not in the model's label set")))
            })
            .collect()
    }

    pub fn tag(&self, features: &Features) -> Result<Vec<String>> {
        Ok(self
            .params
            .predict(features)?
            .into_iter()
            .map(|i| self.labels[i].clone())
            .collect())
    }

    /// Source names with their current mixture weights.
    pub fn mixture_weights(&self) -> Option<Vec<(String, f64)>> {
        let m = self.params.mixer.as_ref()?;
        Some(self.source_names.iter().cloned().zip(m.weights()).collect())
    }
}
