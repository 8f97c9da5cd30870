use std::fmt::{self, Write as _};

use crate::config::{KeyValueFile, KeyValues};
use crate::corpus::{Setting, SynthSpec};
use crate::encoders::SourceTrainConfig;
use crate::error::{Error, Result};
use crate::tagger::DecoderKind;
use crate::training::TrainConfig;

/// Input representation of the target tagger.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Condition {
    StaticOnly,
    StaticPlusMix,
}

impl Condition {
    pub fn name(&self) -> &'static str {
        match self {
            Condition::StaticOnly => "static_only",
            Condition::StaticPlusMix => "static_plus_mix",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "static_only" => Some(Condition::StaticOnly),
            "static_plus_mix" => Some(Condition::StaticPlusMix),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SubsetSize {
    Count(usize),
    All,
}

impl fmt::Display for SubsetSize {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SubsetSize::Count(n) => write!(f, "{n}"),
            SubsetSize::All => f.write_str("all"),
        }
    }
}

impl std::str::FromStr for SubsetSize {
    type Err = ();

    fn from_str(s: &str) -> std::result::Result<Self, ()> {
        if s == "all" {
            Ok(SubsetSize::All)
        } else {
            s.parse().map(SubsetSize::Count).map_err(|_| ())
        }
    }
}

/// A desk-scale transfer experiment over synthetic corpora.
///
/// `world.n_sentences` is the size of the target training pool; dev and test
/// sentences are generated alongside it. Source `k` is named
/// `source_names[k]`; source 0 is the informative one.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub world: SynthSpec,
    pub dev_size: usize,
    pub test_size: usize,
    pub source_names: Vec<String>,
    pub subset_sizes: Vec<SubsetSize>,
    pub conditions: Vec<Condition>,
    /// Seeds subsampling and target training.
    pub seed: u64,
    pub static_dim: usize,
    pub source_train: SourceTrainConfig,
    pub target_train: TrainConfig,
}

const TOP_KEYS: &[&str] = &[
    "setting",
    "seed",
    "synth_seed",
    "subset_sizes",
    "conditions",
    "vocab_size",
    "n_classes",
    "len_min",
    "len_max",
    "target_pool",
    "dev_size",
    "test_size",
    "noise_rate",
    "source_sentences",
    "static_dim",
    "source_emb_dim",
    "source_hidden",
    "source_epochs",
    "source_batch_size",
    "source_lr",
    "epochs",
    "batch_size",
    "small_data_limit",
    "lr",
    "hidden",
    "layers",
    "decoder",
    "mix_dim",
];

impl ExperimentSpec {
    /// One informative and two uninformative sources, 100 target training
    /// sentences, static-only versus static-plus-mix.
    pub fn default_for(setting: Setting) -> Self {
        let mut target_train = TrainConfig::new(DecoderKind::Crf);
        target_train.small_data_limit = 100;
        ExperimentSpec {
            world: SynthSpec {
                vocab_size: 400,
                n_classes: 4,
                n_sentences: 500,
                len_range: (4, 12),
                seed: 7,
                noise_rate: 0.0,
                n_sources: 3,
                n_source_sentences: 3000,
                setting,
            },
            dev_size: 200,
            test_size: 200,
            source_names: vec!["informative".into(), "noise1".into(), "noise2".into()],
            subset_sizes: vec![SubsetSize::Count(100)],
            conditions: vec![Condition::StaticOnly, Condition::StaticPlusMix],
            seed: 1,
            static_dim: 50,
            source_train: SourceTrainConfig::default(),
            target_train,
        }
    }

    pub fn cross_task() -> Self {
        Self::default_for(Setting::CrossTask)
    }

    pub fn validate(&self) -> Result<()> {
        self.world.validate().map_err(Error::Config)?;
        if self.source_names.is_empty() {
            return Err(Error::config("at least one [source] is required"));
        }
        if self.source_names.len() != self.world.n_sources {
            return Err(Error::config("source count mismatch"));
        }
        if self.subset_sizes.is_empty() || self.subset_sizes.contains(&SubsetSize::Count(0)) {
            return Err(Error::config("subset sizes must be positive"));
        }
        if !self.subset_sizes.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::config("subset sizes must be strictly ascending"));
        }
        if self.conditions.is_empty() {
            return Err(Error::config("at least one condition is required"));
        }
        if self.world.n_sentences == 0 || self.dev_size == 0 || self.test_size == 0 {
            return Err(Error::config("target_pool, dev_size and test_size must be positive"));
        }
        if self.static_dim == 0 {
            return Err(Error::config("static_dim must be positive"));
        }
        self.target_train.validate()
    }

    pub fn parse(text: &str) -> Result<Self> {
        let file = KeyValueFile::parse(text)?;
        let kv = &file.top;
        kv.reject_unknown(TOP_KEYS)?;
        let setting = match kv.raw("setting") {
            None => Setting::CrossTask,
            Some(s) => Setting::from_name(s).ok_or_else(|| Error::config(format!("unknown setting `{s}`")))?,
        };
        let d = Self::default_for(setting);

        let mut source_names = Vec::new();
        for section in &file.sections {
            if section.name != "source" {
                return Err(Error::config(format!("unknown section [{}]", section.name)));
            }
            section.reject_unknown(&["name"])?;
            let name = section
                .raw("name")
                .ok_or_else(|| Error::config("[source] needs a name"))?;
            if name.is_empty() || name.contains(char::is_whitespace) || source_names.iter().any(|n| n == name) {
                return Err(Error::config(format!("bad or duplicate source name `{name}`")));
            }
            source_names.push(name.to_owned());
        }
        if source_names.is_empty() {
            source_names = d.source_names.clone();
        }

        let target_keys: Vec<(&str, &str)> = [
            "epochs",
            "batch_size",
            "small_data_limit",
            "lr",
            "hidden",
            "layers",
            "decoder",
            "mix_dim",
        ]
        .iter()
        .filter_map(|k| kv.raw(k).map(|v| (*k, v)))
        .collect();
        let mut target_train = TrainConfig::from_key_values(&KeyValues::from_pairs(target_keys))?;
        if kv.raw("small_data_limit").is_none() {
            target_train.small_data_limit = d.target_train.small_data_limit;
        }
        let seed = kv.get_or("seed", d.seed)?;
        target_train.seed = seed;

        let ds = &d.source_train;
        let source_train = SourceTrainConfig {
            emb_dim: kv.get_or("source_emb_dim", ds.emb_dim)?,
            hidden: kv.get_or("source_hidden", ds.hidden)?,
            epochs: kv.get_or("source_epochs", ds.epochs)?,
            batch_size: kv.get_or("source_batch_size", ds.batch_size)?,
            lr: kv.get_or("source_lr", ds.lr)?,
            seed: ds.seed,
        };

        let conditions = match kv.get_list::<String>("conditions")? {
            None => d.conditions.clone(),
            Some(list) => list
                .iter()
                .map(|c| Condition::from_name(c).ok_or_else(|| Error::config(format!("unknown condition `{c}`"))))
                .collect::<Result<_>>()?,
        };

        let w = &d.world;
        let spec = ExperimentSpec {
            world: SynthSpec {
                vocab_size: kv.get_or("vocab_size", w.vocab_size)?,
                n_classes: kv.get_or("n_classes", w.n_classes)?,
                n_sentences: kv.get_or("target_pool", w.n_sentences)?,
                len_range: (kv.get_or("len_min", w.len_range.0)?, kv.get_or("len_max", w.len_range.1)?),
                seed: kv.get_or("synth_seed", w.seed)?,
                noise_rate: kv.get_or("noise_rate", w.noise_rate)?,
                n_sources: source_names.len(),
                n_source_sentences: kv.get_or("source_sentences", w.n_source_sentences)?,
                setting,
            },
            dev_size: kv.get_or("dev_size", d.dev_size)?,
            test_size: kv.get_or("test_size", d.test_size)?,
            source_names,
            subset_sizes: kv.get_list("subset_sizes")?.unwrap_or(d.subset_sizes),
            conditions,
            seed,
            static_dim: kv.get_or("static_dim", d.static_dim)?,
            source_train,
            target_train,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Canonical spec text; [`parse`](Self::parse) reads it back unchanged.
    pub fn to_text(&self) -> String {
        let w = &self.world;
        let t = &self.target_train;
        let s = &self.source_train;
        let mut out = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        kv("setting", w.setting.name().into());
        kv("seed", self.seed.to_string());
        kv("synth_seed", w.seed.to_string());
        kv(
            "subset_sizes",
            self.subset_sizes.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(","),
        );
        kv(
            "conditions",
            self.conditions.iter().map(|c| c.name()).collect::<Vec<_>>().join(","),
        );
        kv("vocab_size", w.vocab_size.to_string());
        kv("n_classes", w.n_classes.to_string());
        kv("len_min", w.len_range.0.to_string());
        kv("len_max", w.len_range.1.to_string());
        kv("target_pool", w.n_sentences.to_string());
        kv("dev_size", self.dev_size.to_string());
        kv("test_size", self.test_size.to_string());
        kv("noise_rate", w.noise_rate.to_string());
        kv("source_sentences", w.n_source_sentences.to_string());
        kv("static_dim", self.static_dim.to_string());
        kv("source_emb_dim", s.emb_dim.to_string());
        kv("source_hidden", s.hidden.to_string());
        kv("source_epochs", s.epochs.to_string());
        kv("source_batch_size", s.batch_size.to_string());
        kv("source_lr", s.lr.to_string());
        kv("epochs", t.epochs.to_string());
        if let Some(b) = t.batch_size {
            kv("batch_size", b.to_string());
        }
        kv("small_data_limit", t.small_data_limit.to_string());
        kv("lr", t.lr.to_string());
        kv("hidden", t.hidden.to_string());
        kv("layers", t.layers.to_string());
        kv("decoder", t.decoder.name().into());
        kv("mix_dim", t.mix_dim.to_string());
        for name in &self.source_names {
            let _ = write!(out, "\n[source]\nname = {name}\n");
        }
        out
    }
}
