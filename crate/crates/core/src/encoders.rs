//! Frozen source encoders: the extractor contract, a trainable toy reference
//! encoder, a JSON-lines cache-backed extractor and source-stack assembly.

use std::collections::HashMap;
use std::fs::{self, OpenOptions};
use std::io::Write as _;
use std::path::Path;
use std::sync::Arc;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::config::KeyValues;
use crate::corpus::Dataset;
use crate::crf;
use crate::embeddings::EmbeddingTable;
use crate::error::{Error, Result};
use crate::params::{slice1, slice1_mut, slice2, slice2_mut, ParamFile, Parameters};
use crate::recurrent::BiGru;
use crate::rng;
use crate::training::AdamState;

/// A pre-existing model used only as a per-token feature extractor.
///
/// Implementations must be deterministic, return one row per token and exactly
/// [`dim`](SourceEncoder::dim) columns, and never change after registration.
pub trait SourceEncoder: Send + Sync {
    fn name(&self) -> &str;
    fn dim(&self) -> usize;
    fn extract(&self, tokens: &[String]) -> Result<Array2<f64>>;
}

pub type Encoder = Arc<dyn SourceEncoder>;

/// Per-source representations of one sentence, in registration order.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceStack {
    entries: Vec<(String, Array2<f64>)>,
}

impl SourceStack {
    pub fn new(entries: Vec<(String, Array2<f64>)>) -> Result<Self> {
        let Some((_, first)) = entries.first() else {
            return Err(Error::format("a source stack needs at least one entry"));
        };
        let rows = first.nrows();
        for (name, m) in &entries {
            if m.nrows() != rows {
                return Err(Error::dimension(format!("rows of source `{name}`"), rows, m.nrows()));
            }
        }
        Ok(SourceStack { entries })
    }

    pub fn entries(&self) -> &[(String, Array2<f64>)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn rows(&self) -> usize {
        self.entries[0].1.nrows()
    }
}

/// Runs every encoder over `tokens` and checks the extractor contract.
pub fn extract_stack(encoders: &[Encoder], tokens: &[String]) -> Result<SourceStack> {
    if encoders.is_empty() {
        return Err(Error::format("no source encoders registered"));
    }
    if tokens.is_empty() {
        return Err(Error::format("cannot encode an empty sentence"));
    }
    let mut entries = Vec::with_capacity(encoders.len());
    for enc in encoders {
        let m = enc.extract(tokens)?;
        if m.nrows() != tokens.len() || m.ncols() != enc.dim() {
            return Err(Error::Contract {
                encoder: enc.name().to_owned(),
                message: format!(
                    "returned {}x{} for {} tokens of declared width {}",
                    m.nrows(),
                    m.ncols(),
                    tokens.len(),
                    enc.dim()
                ),
            });
        }
        entries.push((enc.name().to_owned(), m));
    }
    SourceStack::new(entries)
}

/// Hyperparameters for training a toy source encoder on its own task.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceTrainConfig {
    pub emb_dim: usize,
    pub hidden: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for SourceTrainConfig {
    fn default() -> Self {
        SourceTrainConfig {
            emb_dim: 16,
            hidden: 16,
            epochs: 3,
            batch_size: 16,
            lr: 0.01,
            seed: 1,
        }
    }
}

impl SourceTrainConfig {
    pub const KEYS: &'static [&'static str] = &["emb_dim", "hidden", "epochs", "batch_size", "lr", "seed"];

    pub fn from_key_values(kv: &KeyValues) -> Result<Self> {
        kv.reject_unknown(Self::KEYS)?;
        let d = SourceTrainConfig::default();
        let cfg = SourceTrainConfig {
            emb_dim: kv.get_or("emb_dim", d.emb_dim)?,
            hidden: kv.get_or("hidden", d.hidden)?,
            epochs: kv.get_or("epochs", d.epochs)?,
            batch_size: kv.get_or("batch_size", d.batch_size)?,
            lr: kv.get_or("lr", d.lr)?,
            seed: kv.get_or("seed", d.seed)?,
        };
        if cfg.epochs == 0 || cfg.batch_size == 0 || cfg.hidden == 0 || cfg.emb_dim == 0 {
            return Err(Error::config("epochs, batch_size, hidden and emb_dim must be positive"));
        }
        Ok(cfg)
    }
}

/// Parameters of the reference source model: token table, one bidirectional
/// recurrent layer and a classifier head that is used only in source training.
///
/// Table row 0 is the unknown-token row. When `train_table` is false the table
/// holds frozen external vectors (e.g. aligned bilingual embeddings).
#[derive(Debug, Clone, PartialEq)]
pub struct ToyEncoderParams {
    pub vocab: Vec<String>,
    pub labels: Vec<String>,
    pub train_table: bool,
    pub table: Array2<f64>,
    pub gru: BiGru,
    pub classifier: Array2<f64>,
    pub classifier_bias: Array1<f64>,
    index: HashMap<String, usize>,
}

impl ToyEncoderParams {
    pub fn new(
        vocab: Vec<String>,
        labels: Vec<String>,
        train_table: bool,
        table: Array2<f64>,
        gru: BiGru,
        classifier: Array2<f64>,
        classifier_bias: Array1<f64>,
    ) -> Result<Self> {
        if table.nrows() != vocab.len() + 1 {
            return Err(Error::dimension("token table rows", vocab.len() + 1, table.nrows()));
        }
        if gru.input_dim() != table.ncols() {
            return Err(Error::dimension("recurrent input width", table.ncols(), gru.input_dim()));
        }
        if classifier.dim() != (gru.output_dim(), labels.len()) || classifier_bias.len() != labels.len() {
            return Err(Error::dimension("classifier columns", labels.len(), classifier.ncols()));
        }
        let index = vocab.iter().enumerate().map(|(i, t)| (t.clone(), i + 1)).collect();
        Ok(ToyEncoderParams {
            vocab,
            labels,
            train_table,
            table,
            gru,
            classifier,
            classifier_bias,
            index,
        })
    }

    /// Random initialisation. With `frozen_input` the table copies those
    /// vectors for every vocabulary entry they cover.
    pub fn init(
        vocab: Vec<String>,
        labels: Vec<String>,
        cfg: &SourceTrainConfig,
        frozen_input: Option<&EmbeddingTable>,
    ) -> Result<Self> {
        let mut r = rng::substream(cfg.seed, "toy-encoder-init");
        let (table, train_table) = match frozen_input {
            Some(t) => {
                let mut m = Array2::zeros((vocab.len() + 1, t.dim()));
                for (i, tok) in vocab.iter().enumerate() {
                    m.row_mut(i + 1).assign(&t.lookup(tok));
                }
                (m, false)
            }
            None => {
                let mut m = Array2::from_shape_fn((vocab.len() + 1, cfg.emb_dim), |_| rng::symmetric(&mut r, 0.5));
                m.row_mut(0).fill(0.0);
                (m, true)
            }
        };
        let gru = BiGru::init(table.ncols(), cfg.hidden, 1, &mut r);
        let limit = (6.0 / (2 * cfg.hidden + labels.len()) as f64).sqrt();
        let classifier = Array2::from_shape_fn((2 * cfg.hidden, labels.len()), |_| rng::symmetric(&mut r, limit));
        let bias = Array1::zeros(labels.len());
        Self::new(vocab, labels, train_table, table, gru, classifier, bias)
    }

    pub fn dim(&self) -> usize {
        self.gru.output_dim()
    }

    pub fn hidden(&self) -> usize {
        self.gru.hidden()
    }

    /// Exact, then lowercased, then the unknown row 0.
    pub fn token_index(&self, token: &str) -> usize {
        self.index
            .get(token)
            .or_else(|| self.index.get(&token.to_lowercase()))
            .copied()
            .unwrap_or(0)
    }

    fn embed(&self, tokens: &[String]) -> (Vec<usize>, Array2<f64>) {
        let ids: Vec<usize> = tokens.iter().map(|t| self.token_index(t)).collect();
        let x = self.table.select(Axis(0), &ids);
        (ids, x)
    }

    /// Concatenated forward/backward top-layer states, `N x 2H`.
    pub fn toy_extract(&self, tokens: &[String]) -> Array2<f64> {
        let (_, x) = self.embed(tokens);
        self.gru.forward(x.view()).0
    }

    /// Source-task label scores, `N x L_src`.
    pub fn classify(&self, tokens: &[String]) -> Array2<f64> {
        let states = self.toy_extract(tokens);
        let mut scores = states.dot(&self.classifier);
        scores += &self.classifier_bias;
        scores
    }

    /// Per-token softmax cross-entropy on the source task and its gradient.
    pub fn loss_and_grad(&self, tokens: &[String], labels: &[usize], grads: &mut ToyEncoderParams) -> f64 {
        let (ids, x) = self.embed(tokens);
        let (states, trace) = self.gru.forward(x.view());
        let mut scores = states.dot(&self.classifier);
        scores += &self.classifier_bias;
        let (loss, d_scores) = crf::softmax_nll_grad(scores.view(), labels);
        grads.classifier += &states.t().dot(&d_scores);
        grads.classifier_bias += &d_scores.sum_axis(Axis(0));
        let d_states = d_scores.dot(&self.classifier.t());
        let dx = self.gru.backward(&trace, d_states.view(), &mut grads.gru);
        if self.train_table {
            for (row, &id) in ids.iter().enumerate() {
                let mut g = grads.table.row_mut(id);
                g += &dx.row(row);
            }
        }
        loss
    }

    pub fn to_param_file(&self, name: &str) -> ParamFile {
        let mut f = ParamFile::new("toy_encoder");
        f.set_meta("name", name);
        f.set_meta("train_table", self.train_table);
        f.set_strings("vocab", self.vocab.clone());
        f.set_strings("labels", self.labels.clone());
        f.set_matrix("table", &self.table);
        self.gru.store(&mut f, "gru");
        f.set_matrix("classifier", &self.classifier);
        f.set_vector("classifier_bias", &self.classifier_bias);
        f
    }

    pub fn from_param_file(f: &ParamFile) -> Result<(String, Self)> {
        if f.kind != "toy_encoder" {
            return Err(Error::format(format!("expected a toy_encoder file, found `{}`", f.kind)));
        }
        let name = f.meta("name")?.to_owned();
        let labels = f.strings("labels")?.to_vec();
        let gru = BiGru::load(f, "gru")?;
        let params = Self::new(
            f.strings("vocab")?.to_vec(),
            labels.clone(),
            f.meta_parse("train_table")?,
            f.matrix("table")?,
            gru.clone(),
            f.matrix_shaped("classifier", gru.output_dim(), labels.len())?,
            f.vector("classifier_bias", labels.len())?,
        )?;
        Ok((name, params))
    }
}

impl Parameters for ToyEncoderParams {
    fn visit(&self, f: &mut dyn FnMut(&str, &[f64])) {
        if self.train_table {
            f("table", slice2(&self.table));
        }
        self.gru.visit_named("gru", f);
        f("classifier", slice2(&self.classifier));
        f("classifier_bias", slice1(&self.classifier_bias));
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut [f64])) {
        if self.train_table {
            f("table", slice2_mut(&mut self.table));
        }
        self.gru.visit_named_mut("gru", f);
        f("classifier", slice2_mut(&mut self.classifier));
        f("classifier_bias", slice1_mut(&mut self.classifier_bias));
    }
}

/// A trained toy model registered as a frozen extractor.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyEncoder {
    name: String,
    params: ToyEncoderParams,
}

impl ToyEncoder {
    pub fn new(name: impl Into<String>, params: ToyEncoderParams) -> Self {
        ToyEncoder {
            name: name.into(),
            params,
        }
    }

    pub fn params(&self) -> &ToyEncoderParams {
        &self.params
    }

    pub fn to_text(&self) -> String {
        self.params.to_param_file(&self.name).to_text()
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let (name, params) = ToyEncoderParams::from_param_file(&ParamFile::parse(text)?)?;
        Ok(ToyEncoder { name, params })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_text(&fs::read_to_string(path)?)
    }
}

impl SourceEncoder for ToyEncoder {
    fn name(&self) -> &str {
        &self.name
    }

    fn dim(&self) -> usize {
        self.params.dim()
    }

    fn extract(&self, tokens: &[String]) -> Result<Array2<f64>> {
        Ok(self.params.toy_extract(tokens))
    }
}

/// Trains a toy encoder on a source dataset with Adam and per-token softmax
/// cross-entropy (mean over the sentences of each batch).
pub fn train_source(
    data: &Dataset,
    cfg: &SourceTrainConfig,
    frozen_input: Option<&EmbeddingTable>,
) -> Result<ToyEncoderParams> {
    if data.is_empty() {
        return Err(Error::format("source training data is empty"));
    }
    let vocab: Vec<String> = data.token_vocab().iter().cloned().collect();
    let labels: Vec<String> = data.label_vocab().iter().cloned().collect();
    let mut params = ToyEncoderParams::init(vocab, labels, cfg, frozen_input)?;
    let gold: Vec<Vec<usize>> = data
        .sentences()
        .iter()
        .map(|s| s.labels().iter().map(|l| data.label_vocab().get_index_of(l).expect("label in vocab")).collect())
        .collect();

    let mut adam = AdamState::new(cfg.lr);
    let mut shuffle = rng::substream(cfg.seed, "source-shuffle");
    for epoch in 0..cfg.epochs {
        let order = rng::permutation(data.len(), &mut shuffle);
        for (b, batch) in order.chunks(cfg.batch_size).enumerate() {
            let mut grads = params.zeros_like();
            let mut loss = 0.0;
            for &i in batch {
                loss += params.loss_and_grad(data.sentences()[i].tokens(), &gold[i], &mut grads);
            }
            if !loss.is_finite() {
                return Err(Error::NonFinite(format!("source loss at epoch {epoch}, batch {b}")));
            }
            let scale = 1.0 / batch.len() as f64;
            grads.visit_mut(&mut |_, g| g.iter_mut().for_each(|x| *x *= scale));
            adam.step(&mut params, &grads)?;
        }
    }
    Ok(params)
}

/// Token accuracy of the source classifier head.
pub fn source_accuracy(params: &ToyEncoderParams, data: &Dataset) -> f64 {
    let mut right = 0usize;
    let mut total = 0usize;
    for s in data.sentences() {
        let pred = crf::softmax_decode(params.classify(s.tokens()).view());
        for (p, gold) in pred.iter().zip(s.labels()) {
            total += 1;
            if params.labels.get(*p) == Some(gold) {
                right += 1;
            }
        }
    }
    if total == 0 {
        0.0
    } else {
        right as f64 / total as f64
    }
}

/// One cached sentence: `{"tokens": [...], "dim": d, "vectors": [[...], ...]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheRecord {
    pub tokens: Vec<String>,
    pub dim: usize,
    pub vectors: Vec<Vec<f64>>,
}

impl CacheRecord {
    pub fn new(tokens: &[String], matrix: ArrayView2<f64>) -> Result<Self> {
        if matrix.nrows() != tokens.len() {
            return Err(Error::dimension("cached rows", tokens.len(), matrix.nrows()));
        }
        if matrix.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("cached vectors".into()));
        }
        Ok(CacheRecord {
            tokens: tokens.to_vec(),
            dim: matrix.ncols(),
            vectors: matrix.rows().into_iter().map(|r| r.to_vec()).collect(),
        })
    }

    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("cache records always serialise")
    }

    pub fn parse_line(line: &str, lineno: usize) -> Result<Self> {
        let rec: CacheRecord = serde_json::from_str(line)
            .map_err(|e| Error::format(format!("cache line {lineno}: {e}")))?;
        if rec.vectors.len() != rec.tokens.len() || rec.vectors.iter().any(|v| v.len() != rec.dim) {
            return Err(Error::format(format!("cache line {lineno}: vectors disagree with tokens/dim")));
        }
        Ok(rec)
    }

    pub fn matrix(&self) -> Array2<f64> {
        let flat: Vec<f64> = self.vectors.iter().flatten().copied().collect();
        Array2::from_shape_vec((self.tokens.len(), self.dim), flat).expect("validated shape")
    }
}

/// Appends one record to the cache file at `path`, creating it if needed.
pub fn cache_store(path: &Path, tokens: &[String], matrix: ArrayView2<f64>) -> Result<()> {
    let rec = CacheRecord::new(tokens, matrix)?;
    let mut f = OpenOptions::new().create(true).append(true).open(path)?;
    writeln!(f, "{}", rec.to_line())?;
    Ok(())
}

/// Looks up the exact token sequence in the cache file at `path`.
pub fn cache_fetch(path: &Path, tokens: &[String]) -> Result<Array2<f64>> {
    let text = fs::read_to_string(path)?;
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec = CacheRecord::parse_line(line, i + 1)?;
        if rec.tokens == tokens {
            return Ok(rec.matrix());
        }
    }
    Err(Error::CacheMiss(tokens.join(" ")))
}

/// An extractor answering from precomputed vectors. All records must share one
/// width; later records for the same sentence replace earlier ones.
#[derive(Debug, Clone, PartialEq)]
pub struct CachedEncoder {
    name: String,
    dim: usize,
    records: HashMap<Vec<String>, Array2<f64>>,
}

impl CachedEncoder {
    pub fn from_text(name: impl Into<String>, text: &str) -> Result<Self> {
        let mut dim = None;
        let mut records = HashMap::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let rec = CacheRecord::parse_line(line, i + 1)?;
            match dim {
                None => dim = Some(rec.dim),
                Some(d) if d != rec.dim => {
                    return Err(Error::format(format!("cache line {}: width {} differs from {d}", i + 1, rec.dim)))
                }
                _ => {}
            }
            let m = rec.matrix();
            records.insert(rec.tokens, m);
        }
        let dim = dim.ok_or_else(|| Error::format("empty cache file"))?;
        Ok(CachedEncoder {
            name: name.into(),
            dim,
            records,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "cache".into());
        Self::from_text(name, &fs::read_to_string(path)?)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

impl SourceEncoder for CachedEncoder {
    fn name(&self) -> &str {
        &self.name
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn extract(&self, tokens: &[String]) -> Result<Array2<f64>> {
        self.records
            .get(tokens)
            .cloned()
            .ok_or_else(|| Error::CacheMiss(tokens.join(" ")))
    }
}

/// Loads a source from disk: `.jsonl` files are caches, anything else a toy
/// encoder parameter file.
pub fn load_encoder(path: &Path) -> Result<Encoder> {
    if path.extension().is_some_and(|e| e == "jsonl") {
        Ok(Arc::new(CachedEncoder::load(path)?))
    } else {
        Ok(Arc::new(ToyEncoder::load(path)?))
    }
}
