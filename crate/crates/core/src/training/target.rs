use std::fmt::Write as _;

use crate::config::KeyValues;
use crate::corpus::Dataset;
use crate::error::{Error, Result};
use crate::evaluation::{span_f1, Prf};
use crate::mixer::{MixParams, DEFAULT_MIX_DIM};
use crate::params::Parameters;
use crate::rng;
use crate::tagger::{DecoderKind, TaggerParams};

use super::pipeline::{Features, FrozenInputs, TargetModel, TargetParams};
use super::AdamState;

/// Epochs for CRF (NER-style) targets.
pub const CRF_EPOCHS: usize = 75;
/// Epochs for softmax (SRL-style) targets.
pub const SOFTMAX_EPOCHS: usize = 50;
pub const DEFAULT_LR: f64 = 0.001;

/// 8 sentences per batch up to `small_data_limit` training sentences, 16 above.
pub fn default_batch_size(train_len: usize, small_data_limit: usize) -> usize {
    if train_len <= small_data_limit {
        8
    } else {
        16
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    /// `None` picks [`default_batch_size`].
    pub batch_size: Option<usize>,
    pub small_data_limit: usize,
    pub seed: u64,
    pub lr: f64,
    pub hidden: usize,
    pub layers: usize,
    pub decoder: DecoderKind,
    pub mix_dim: usize,
    pub train_mixer: bool,
    pub train_tagger: bool,
}

impl TrainConfig {
    pub const KEYS: &'static [&'static str] = &[
        "epochs",
        "batch_size",
        "small_data_limit",
        "seed",
        "lr",
        "hidden",
        "layers",
        "decoder",
        "mix_dim",
        "train_mixer",
        "train_tagger",
    ];

    pub fn new(decoder: DecoderKind) -> Self {
        let (epochs, layers) = match decoder {
            DecoderKind::Crf => (CRF_EPOCHS, 1),
            DecoderKind::Softmax => (SOFTMAX_EPOCHS, 2),
        };
        TrainConfig {
            epochs,
            batch_size: None,
            small_data_limit: 1000,
            seed: 1,
            lr: DEFAULT_LR,
            hidden: 50,
            layers,
            decoder,
            mix_dim: DEFAULT_MIX_DIM,
            train_mixer: true,
            train_tagger: true,
        }
    }

    pub fn from_key_values(kv: &KeyValues) -> Result<Self> {
        kv.reject_unknown(Self::KEYS)?;
        let decoder = match kv.raw("decoder") {
            None => DecoderKind::Crf,
            Some(d) => DecoderKind::from_name(d).ok_or_else(|| Error::config(format!("unknown decoder `{d}`")))?,
        };
        let d = TrainConfig::new(decoder);
        let cfg = TrainConfig {
            epochs: kv.get_or("epochs", d.epochs)?,
            batch_size: kv.get("batch_size")?,
            small_data_limit: kv.get_or("small_data_limit", d.small_data_limit)?,
            seed: kv.get_or("seed", d.seed)?,
            lr: kv.get_or("lr", d.lr)?,
            hidden: kv.get_or("hidden", d.hidden)?,
            layers: kv.get_or("layers", d.layers)?,
            decoder,
            mix_dim: kv.get_or("mix_dim", d.mix_dim)?,
            train_mixer: kv.get_or("train_mixer", d.train_mixer)?,
            train_tagger: kv.get_or("train_tagger", d.train_tagger)?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::config("epochs must be at least 1"));
        }
        if self.batch_size == Some(0) {
            return Err(Error::config("batch_size must be at least 1"));
        }
        if self.hidden == 0 || self.layers == 0 || self.mix_dim == 0 {
            return Err(Error::config("hidden, layers and mix_dim must be positive"));
        }
        if !(self.lr.is_finite() && self.lr >= 0.0) {
            return Err(Error::config("lr must be a finite non-negative number"));
        }
        Ok(())
    }

    pub fn batch_size_for(&self, train_len: usize) -> usize {
        self.batch_size
            .unwrap_or_else(|| default_batch_size(train_len, self.small_data_limit))
    }

    /// Fresh parameters: a mixer over every registered source (if any) and a
    /// tagger over `[mixed | static]` inputs.
    pub fn init_model(&self, labels: Vec<String>, frozen: &FrozenInputs) -> TargetModel {
        let mixer = (!frozen.encoders.is_empty()).then(|| {
            let mut r = rng::substream(self.seed, "mixer-init");
            MixParams::init(&frozen.source_dims(), self.mix_dim, &mut r)
        });
        let input = mixer.as_ref().map_or(0, |m| m.mix_dim()) + frozen.static_table.dim();
        let mut r = rng::substream(self.seed, "tagger-init");
        let tagger = TaggerParams::init(input, self.hidden, self.layers, labels.len(), self.decoder, &mut r);
        TargetModel {
            labels,
            source_names: frozen.source_names(),
            params: TargetParams { mixer, tagger },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f64,
    pub dev: Prf,
}

/// `epoch, train_loss, dev_p, dev_r, dev_f1` with a header row.
pub fn metrics_tsv(trace: &[EpochMetrics]) -> String {
    let mut out = String::from("epoch\ttrain_loss\tdev_p\tdev_r\tdev_f1\n");
    for m in trace {
        let _ = writeln!(out, "{}\t{:.6}\t{}", m.epoch, m.train_loss, m.dev.tsv());
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    /// Parameters from the best dev epoch.
    pub model: TargetModel,
    pub trace: Vec<EpochMetrics>,
    pub best_epoch: usize,
}

fn features_for(frozen: &FrozenInputs, data: &Dataset) -> Result<Vec<Features>> {
    data.sentences().iter().map(|s| frozen.features(s.tokens())).collect()
}

/// Tags every sentence of `data`.
pub fn predict_dataset(model: &TargetModel, frozen: &FrozenInputs, data: &Dataset) -> Result<Vec<Vec<String>>> {
    data.sentences()
        .iter()
        .map(|s| model.tag(&frozen.features(s.tokens())?))
        .collect()
}

fn evaluate_features(model: &TargetModel, features: &[Features], data: &Dataset) -> Result<Prf> {
    let pred = features
        .iter()
        .map(|f| model.tag(f))
        .collect::<Result<Vec<_>>>()?;
    let gold: Vec<&[String]> = data.sentences().iter().map(|s| s.labels()).collect();
    let gold: Vec<Vec<&String>> = gold.iter().map(|l| l.iter().collect()).collect();
    span_f1(&gold, &pred)
}

/// Trains the mixer and tagger of `model` on `train`, selecting the epoch with
/// the best dev span F1 (earliest on ties). Sources and static vectors are
/// only read.
///
/// Each epoch visits the training sentences in a seeded permutation, cut into
/// batches; the batch loss is the mean of per-sentence decoder NLLs and one
/// Adam step is taken per batch for each trainable group.
pub fn train_target(
    cfg: &TrainConfig,
    train: &Dataset,
    dev: &Dataset,
    frozen: &FrozenInputs,
    model: TargetModel,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train.is_empty() || dev.is_empty() {
        return Err(Error::format("training and dev data must be nonempty"));
    }
    let train_features = features_for(frozen, train)?;
    let dev_features = features_for(frozen, dev)?;
    let gold: Vec<Vec<usize>> = train
        .sentences()
        .iter()
        .map(|s| model.gold_indices(s))
        .collect::<Result<_>>()?;

    let batch_size = cfg.batch_size_for(train.len());
    let mut model = model;
    let mut mixer_adam = AdamState::new(cfg.lr);
    let mut tagger_adam = AdamState::new(cfg.lr);
    let mut shuffle = rng::substream(cfg.seed, "epoch-shuffle");

    let mut best: Option<(f64, usize, TargetParams)> = None;
    let mut trace = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        let order = rng::permutation(train.len(), &mut shuffle);
        let mut epoch_loss = 0.0;
        let mut batches = 0;
        for (b, batch) in order.chunks(batch_size).enumerate() {
            let params = &mut model.params;
            let mut grads = params.zeros_like();
            let mut loss = 0.0;
            for &i in batch {
                loss += params.accumulate(&train_features[i], &gold[i], &mut grads)?;
            }
            let scale = 1.0 / batch.len() as f64;
            loss *= scale;
            if !loss.is_finite() {
                return Err(Error::NonFinite(format!("training loss at epoch {epoch}, batch {}", b + 1)));
            }
            grads.visit_mut(&mut |_, g| g.iter_mut().for_each(|x| *x *= scale));
            if cfg.train_mixer {
                if let (Some(m), Some(gm)) = (params.mixer.as_mut(), grads.mixer.as_ref()) {
                    mixer_adam.step(m, gm)?;
                }
            }
            if cfg.train_tagger {
                tagger_adam.step(&mut params.tagger, &grads.tagger)?;
            }
            epoch_loss += loss;
            batches += 1;
        }

        let dev_prf = evaluate_features(&model, &dev_features, dev)?;
        trace.push(EpochMetrics {
            epoch,
            train_loss: epoch_loss / batches as f64,
            dev: dev_prf,
        });
        if best.as_ref().is_none_or(|(f1, _, _)| dev_prf.f1 > *f1) {
            best = Some((dev_prf.f1, epoch, model.params.clone()));
        }
    }

    let (_, best_epoch, params) = best.expect("at least one epoch");
    model.params = params;
    Ok(TrainOutcome { model, trace, best_epoch })
}
