//! The `supmix` command line.

use std::collections::HashSet;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Parser, Subcommand};

use crate::config::KeyValueFile;
use crate::corpus::{read_conll, write_tagged, Dataset};
use crate::embeddings::{load_text_embeddings, EmbeddingTable};
use crate::encoders::{load_encoder, source_accuracy, train_source, CacheRecord, SourceTrainConfig, ToyEncoder};
use crate::error::Error;
use crate::evaluation::span_f1;
use crate::experiments::{inspect_mix, run_experiment, write_report, ExperimentSpec};
use crate::model::{load_model, model_to_text, ModelRefs};
use crate::training::{metrics_tsv, predict_dataset, train_target, FrozenInputs, TrainConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

/// Default for every `--seed` flag.
pub const DEFAULT_SEED: u64 = 1;

#[derive(Debug, Parser)]
#[command(name = "supmix", version, about = "Taggers over a learned mixture of frozen source encoders")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a source encoder on a tagged corpus.
    TrainSource {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// key = value file: emb_dim, hidden, epochs, batch_size, lr, seed.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Source name recorded in the model; defaults to the file stem of --out.
        #[arg(long)]
        name: Option<String>,
        /// Use these vectors as a frozen input table instead of learning one.
        #[arg(long)]
        static_emb: Option<PathBuf>,
        /// Overrides the config seed [default: 1].
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Write a source's features for every sentence of a corpus to a JSON-lines cache.
    CacheExtract {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a target tagger; without --sources it uses static vectors only.
    TrainTarget {
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        dev: PathBuf,
        /// Comma-separated source models or `.jsonl` caches.
        #[arg(long, value_delimiter = ',')]
        sources: Vec<PathBuf>,
        #[arg(long)]
        static_emb: PathBuf,
        /// key = value file: epochs, batch_size, small_data_limit, seed, lr,
        /// hidden, layers, decoder, mix_dim, train_mixer, train_tagger.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Per-epoch training loss and dev scores as TSV.
        #[arg(long)]
        metrics_out: Option<PathBuf>,
        /// Overrides the config seed [default: 1].
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Tag a corpus with a target model and print span precision, recall and F1.
    Evaluate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        pred_out: Option<PathBuf>,
    },
    /// Print a target model's mixture weights.
    InspectMix {
        #[arg(long)]
        model: PathBuf,
    },
    /// Run a synthetic transfer experiment and write its report.
    RunExperiment {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the spec seed [default: 1].
        #[arg(long)]
        seed: Option<u64>,
    },
}

#[derive(Debug)]
enum Failure {
    MissingFile(PathBuf, io::Error),
    Input(PathBuf, Error),
    Run(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Run(e)
    }
}

impl Failure {
    fn exit_code(&self) -> i32 {
        match self {
            Failure::Run(e) | Failure::Input(_, e) if e.is_numeric() => EXIT_NUMERIC,
            _ => EXIT_DATA,
        }
    }

    fn message(&self) -> String {
        match self {
            Failure::MissingFile(p, e) => format!("missing file: {}: {e}", p.display()),
            Failure::Input(p, e) => format!("{e} (in {})", p.display()),
            Failure::Run(e) => e.to_string(),
        }
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

fn read(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| Failure::MissingFile(path.to_owned(), e))
}

fn parse_file<T>(path: &Path, f: impl FnOnce(&str) -> crate::Result<T>) -> CliResult<T> {
    let text = read(path)?;
    f(&text).map_err(|e| Failure::Input(path.to_owned(), e))
}

fn write(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|e| Failure::Run(e.into()))
}

fn absolute(path: &Path) -> CliResult<PathBuf> {
    path.canonicalize().map_err(|e| Failure::MissingFile(path.to_owned(), e))
}

fn load_table(path: &Path) -> CliResult<EmbeddingTable> {
    parse_file(path, |t| load_text_embeddings(t, None))
}

fn read_data(path: &Path) -> CliResult<Dataset> {
    parse_file(path, read_conll)
}

/// Runs the command line `args` (program name first) and returns the exit code.
pub fn run<I, T>(args: I, out: &mut dyn io::Write, err: &mut dyn io::Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{e}");
                    EXIT_OK
                }
                _ => {
                    let text = e.render().to_string();
                    let _ = write!(err, "usage error: {}", text.strip_prefix("error: ").unwrap_or(&text));
                    EXIT_USAGE
                }
            };
        }
    };
    match execute(cli.command, out) {
        Ok(()) => EXIT_OK,
        Err(f) => {
            let _ = writeln!(err, "{}", f.message());
            f.exit_code()
        }
    }
}

fn execute(command: Command, out: &mut dyn io::Write) -> CliResult<()> {
    let mut report = String::new();
    match command {
        Command::TrainSource {
            data,
            out: dest,
            config,
            name,
            static_emb,
            seed,
        } => {
            let mut cfg = match &config {
                Some(p) => parse_file(p, |t| SourceTrainConfig::from_key_values(&KeyValueFile::parse_flat(t)?))?,
                None => SourceTrainConfig::default(),
            };
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let data = read_data(&data)?;
            let table = static_emb.as_deref().map(load_table).transpose()?;
            let name = name.unwrap_or_else(|| {
                dest.file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_else(|| "source".into())
            });
            let params = train_source(&data, &cfg, table.as_ref())?;
            let acc = source_accuracy(&params, &data);
            let encoder = ToyEncoder::new(name.clone(), params);
            write(&dest, &encoder.to_text())?;
            let _ = writeln!(report, "source {name}: training token accuracy {:.2}", 100.0 * acc);
        }
        Command::CacheExtract { model, data, out: dest } => {
            let encoder = load_encoder(&model).map_err(|e| match e {
                Error::Io(io) => Failure::MissingFile(model.clone(), io),
                e => Failure::Input(model.clone(), e),
            })?;
            let data = read_data(&data)?;
            let mut seen = HashSet::new();
            let mut text = String::new();
            for s in data.sentences() {
                if seen.insert(s.tokens().to_vec()) {
                    let m = encoder.extract(s.tokens())?;
                    text.push_str(&CacheRecord::new(s.tokens(), m.view())?.to_line());
                    text.push('\n');
                }
            }
            write(&dest, &text)?;
            let _ = writeln!(report, "cached {} sentences of width {}", seen.len(), encoder.dim());
        }
        Command::TrainTarget {
            train,
            dev,
            sources,
            static_emb,
            config,
            out: dest,
            metrics_out,
            seed,
        } => {
            let mut cfg = match &config {
                Some(p) => parse_file(p, |t| TrainConfig::from_key_values(&KeyValueFile::parse_flat(t)?))?,
                None => TrainConfig::new(crate::tagger::DecoderKind::Crf),
            };
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let train = read_data(&train)?;
            let dev = read_data(&dev)?;
            let static_path = absolute(&static_emb)?;
            let table = load_table(&static_path)?;
            let source_paths = sources.iter().map(|p| absolute(p)).collect::<CliResult<Vec<_>>>()?;
            let encoders = source_paths
                .iter()
                .map(|p| load_encoder(p).map_err(|e| Failure::Input(p.clone(), e)))
                .collect::<CliResult<Vec<_>>>()?;
            let frozen = FrozenInputs::new(Arc::new(table), encoders);

            let mut labels: Vec<String> = train.label_vocab().iter().cloned().collect();
            for l in dev.label_vocab() {
                if !labels.contains(l) {
                    labels.push(l.clone());
                }
            }
            let model = cfg.init_model(labels, &frozen);
            let outcome = train_target(&cfg, &train, &dev, &frozen, model)?;
            let refs = ModelRefs {
                static_emb: static_path,
                sources: source_paths,
            };
            write(&dest, &model_to_text(&outcome.model, &refs))?;
            if let Some(p) = metrics_out {
                write(&p, &metrics_tsv(&outcome.trace))?;
            }
            let best = &outcome.trace[outcome.best_epoch - 1];
            let _ = writeln!(report, "best dev epoch {}: {}", outcome.best_epoch, best.dev);
        }
        Command::Evaluate { model, data, pred_out } => {
            let (tm, refs) = parse_file(&model, crate::model::model_from_text)?;
            let frozen = refs.load().map_err(|e| Failure::Input(model.clone(), e))?;
            let data = read_data(&data)?;
            let pred = predict_dataset(&tm, &frozen, &data)?;
            let gold: Vec<Vec<String>> = data.sentences().iter().map(|s| s.labels().to_vec()).collect();
            let prf = span_f1(&gold, &pred)?;
            if let Some(p) = pred_out {
                write(&p, &write_tagged(&data, &pred)?)?;
            }
            let _ = writeln!(
                report,
                "precision {:.2}\nrecall {:.2}\nF1 {:.2}",
                100.0 * prf.precision,
                100.0 * prf.recall,
                100.0 * prf.f1
            );
        }
        Command::InspectMix { model } => {
            let (tm, _) = load_model(&model).map_err(|e| match e {
                Error::Io(io) => Failure::MissingFile(model.clone(), io),
                e => Failure::Input(model.clone(), e),
            })?;
            let mixer = tm.params.mixer.as_ref().ok_or_else(|| {
                Failure::Input(model.clone(), Error::Format("model has no source mixture".into()))
            })?;
            report.push_str(&inspect_mix(mixer, &tm.source_names)?);
        }
        Command::RunExperiment { spec, out: dest, seed } => {
            let mut spec = parse_file(&spec, ExperimentSpec::parse)?;
            if let Some(s) = seed {
                spec.seed = s;
                spec.target_train.seed = s;
            }
            let result = run_experiment(&spec)?;
            write_report(&result, &dest)?;
            report.push_str(&crate::experiments::emit_table(&result));
            let _ = writeln!(report, "wrote {}", dest.display());
        }
    }
    let _ = out.write_all(report.as_bytes());
    Ok(())
}
