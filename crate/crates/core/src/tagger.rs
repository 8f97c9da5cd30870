//! The target sequence tagger: stacked bidirectional recurrent encoder, a
//! linear emission map and either a linear-chain CRF or a per-token softmax.

use ndarray::{Array1, Array2, ArrayView2, Axis};

use crate::crf::{self, CrfScores};
use crate::error::{Error, Result};
use crate::params::{slice1, slice1_mut, slice2, slice2_mut, ParamFile, Parameters};
use crate::recurrent::{BiGru, BiGruTrace};
use crate::rng::{self, SeededRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecoderKind {
    Crf,
    Softmax,
}

impl DecoderKind {
    pub fn name(&self) -> &'static str {
        match self {
            DecoderKind::Crf => "crf",
            DecoderKind::Softmax => "softmax",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "crf" => Some(DecoderKind::Crf),
            "softmax" => Some(DecoderKind::Softmax),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrfParams {
    pub transitions: Array2<f64>,
    pub start: Array1<f64>,
    pub stop: Array1<f64>,
}

impl CrfParams {
    pub fn zeros(labels: usize) -> Self {
        CrfParams {
            transitions: Array2::zeros((labels, labels)),
            start: Array1::zeros(labels),
            stop: Array1::zeros(labels),
        }
    }

    pub fn scores(&self) -> CrfScores<'_> {
        CrfScores {
            transitions: self.transitions.view(),
            start: self.start.view(),
            stop: self.stop.view(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaggerParams {
    pub encoder: BiGru,
    pub emission: Array2<f64>,
    pub emission_bias: Array1<f64>,
    /// Present exactly when the decoder is a CRF.
    pub crf: Option<CrfParams>,
}

/// Forward activations needed by [`TaggerParams::backward`].
pub struct TaggerTrace {
    states: Array2<f64>,
    encoder: BiGruTrace,
}

impl TaggerParams {
    pub fn init(input: usize, hidden: usize, depth: usize, labels: usize, decoder: DecoderKind, r: &mut SeededRng) -> Self {
        assert!(labels >= 1 && depth >= 1 && hidden >= 1);
        let encoder = BiGru::init(input, hidden, depth, r);
        let limit = (6.0 / (2 * hidden + labels) as f64).sqrt();
        TaggerParams {
            encoder,
            emission: Array2::from_shape_fn((2 * hidden, labels), |_| rng::symmetric(r, limit)),
            emission_bias: Array1::zeros(labels),
            crf: (decoder == DecoderKind::Crf).then(|| CrfParams::zeros(labels)),
        }
    }

    pub fn decoder(&self) -> DecoderKind {
        if self.crf.is_some() {
            DecoderKind::Crf
        } else {
            DecoderKind::Softmax
        }
    }

    pub fn labels(&self) -> usize {
        self.emission.ncols()
    }

    pub fn input_dim(&self) -> usize {
        self.encoder.input_dim()
    }

    /// Contextual states, `N x 2H`.
    pub fn encode(&self, embedded: ArrayView2<f64>) -> Array2<f64> {
        self.encoder.forward(embedded).0
    }

    pub fn emissions(&self, states: ArrayView2<f64>) -> Array2<f64> {
        let mut e = states.dot(&self.emission);
        e += &self.emission_bias;
        e
    }

    pub fn forward(&self, embedded: ArrayView2<f64>) -> (Array2<f64>, TaggerTrace) {
        let (states, encoder) = self.encoder.forward(embedded);
        let em = self.emissions(states.view());
        (em, TaggerTrace { states, encoder })
    }

    pub fn check_input(&self, embedded: ArrayView2<f64>) -> Result<()> {
        if embedded.ncols() != self.input_dim() {
            return Err(Error::dimension("tagger input width", self.input_dim(), embedded.ncols()));
        }
        if embedded.nrows() == 0 {
            return Err(Error::format("empty sentence"));
        }
        Ok(())
    }

    /// Decoder negative log-likelihood of `gold` given emissions.
    pub fn nll(&self, emissions: ArrayView2<f64>, gold: &[usize]) -> f64 {
        match &self.crf {
            Some(c) => crf::crf_nll(emissions, c.scores(), gold),
            None => crf::softmax_nll(emissions, gold),
        }
    }

    pub fn decode(&self, emissions: ArrayView2<f64>) -> Vec<usize> {
        match &self.crf {
            Some(c) => crf::viterbi(emissions, c.scores()),
            None => crf::softmax_decode(emissions),
        }
    }

    pub fn predict(&self, embedded: ArrayView2<f64>) -> Vec<usize> {
        let (em, _) = self.forward(embedded);
        self.decode(em.view())
    }

    /// Loss for one sentence; accumulates parameter gradients into `grads` and
    /// returns the gradient with respect to `embedded`.
    pub fn loss_and_grad(&self, embedded: ArrayView2<f64>, gold: &[usize], grads: &mut TaggerParams) -> (f64, Array2<f64>) {
        let (em, trace) = self.forward(embedded);
        let (loss, d_em) = match &self.crf {
            Some(c) => {
                let (loss, g) = crf::crf_nll_grad(em.view(), c.scores(), gold);
                let gc = grads.crf.as_mut().expect("gradient shape matches parameters");
                gc.transitions += &g.transitions;
                gc.start += &g.start;
                gc.stop += &g.stop;
                (loss, g.emissions)
            }
            None => crf::softmax_nll_grad(em.view(), gold),
        };
        let dx = self.backward(&trace, d_em.view(), grads);
        (loss, dx)
    }

    fn backward(&self, trace: &TaggerTrace, d_em: ArrayView2<f64>, grads: &mut TaggerParams) -> Array2<f64> {
        grads.emission += &trace.states.t().dot(&d_em);
        grads.emission_bias += &d_em.sum_axis(Axis(0));
        let d_states = d_em.dot(&self.emission.t());
        self.encoder.backward(&trace.encoder, d_states.view(), &mut grads.encoder)
    }

    pub(crate) fn store(&self, file: &mut ParamFile, prefix: &str) {
        file.set_meta(&format!("{prefix}.decoder"), self.decoder().name());
        file.set_meta(&format!("{prefix}.labels"), self.labels());
        self.encoder.store(file, &format!("{prefix}.gru"));
        file.set_matrix(&format!("{prefix}.emission"), &self.emission);
        file.set_vector(&format!("{prefix}.emission_bias"), &self.emission_bias);
        if let Some(c) = &self.crf {
            file.set_matrix(&format!("{prefix}.crf.transitions"), &c.transitions);
            file.set_vector(&format!("{prefix}.crf.start"), &c.start);
            file.set_vector(&format!("{prefix}.crf.stop"), &c.stop);
        }
    }

    pub(crate) fn load(file: &ParamFile, prefix: &str) -> Result<Self> {
        let decoder_name = file.meta(&format!("{prefix}.decoder"))?;
        let decoder = DecoderKind::from_name(decoder_name)
            .ok_or_else(|| Error::format(format!("unknown decoder `{decoder_name}`")))?;
        let labels: usize = file.meta_parse(&format!("{prefix}.labels"))?;
        let encoder = BiGru::load(file, &format!("{prefix}.gru"))?;
        let crf = match decoder {
            DecoderKind::Crf => Some(CrfParams {
                transitions: file.matrix_shaped(&format!("{prefix}.crf.transitions"), labels, labels)?,
                start: file.vector(&format!("{prefix}.crf.start"), labels)?,
                stop: file.vector(&format!("{prefix}.crf.stop"), labels)?,
            }),
            DecoderKind::Softmax => None,
        };
        Ok(TaggerParams {
            emission: file.matrix_shaped(&format!("{prefix}.emission"), encoder.output_dim(), labels)?,
            emission_bias: file.vector(&format!("{prefix}.emission_bias"), labels)?,
            encoder,
            crf,
        })
    }
}

impl Parameters for TaggerParams {
    fn visit(&self, f: &mut dyn FnMut(&str, &[f64])) {
        self.encoder.visit_named("tagger.gru", f);
        f("tagger.emission", slice2(&self.emission));
        f("tagger.emission_bias", slice1(&self.emission_bias));
        if let Some(c) = &self.crf {
            f("tagger.crf.transitions", slice2(&c.transitions));
            f("tagger.crf.start", slice1(&c.start));
            f("tagger.crf.stop", slice1(&c.stop));
        }
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut [f64])) {
        self.encoder.visit_named_mut("tagger.gru", f);
        f("tagger.emission", slice2_mut(&mut self.emission));
        f("tagger.emission_bias", slice1_mut(&mut self.emission_bias));
        if let Some(c) = &mut self.crf {
            f("tagger.crf.transitions", slice2_mut(&mut c.transitions));
            f("tagger.crf.start", slice1_mut(&mut c.start));
            f("tagger.crf.stop", slice1_mut(&mut c.stop));
        }
    }
}
