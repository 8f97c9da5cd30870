//! On-disk target model: trained parameters plus references to the frozen
//! static-vector file and source files they were trained against.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use crate::embeddings::load_text_embeddings;
use crate::encoders::load_encoder;
use crate::error::{Error, Result};
use crate::mixer::MixParams;
use crate::params::ParamFile;
use crate::tagger::TaggerParams;
use crate::training::{FrozenInputs, TargetModel, TargetParams};

const KIND: &str = "target_model";

#[derive(Debug, Clone, PartialEq)]
pub struct ModelRefs {
    pub static_emb: PathBuf,
    pub sources: Vec<PathBuf>,
}

impl ModelRefs {
    /// Loads the referenced static table and source encoders.
    pub fn load(&self) -> Result<FrozenInputs> {
        let table = load_text_embeddings(&fs::read_to_string(&self.static_emb)?, None)?;
        let encoders = self.sources.iter().map(|p| load_encoder(p)).collect::<Result<Vec<_>>>()?;
        Ok(FrozenInputs::new(Arc::new(table), encoders))
    }
}

fn path_string(p: &Path) -> String {
    p.to_string_lossy().into_owned()
}

pub fn model_to_text(model: &TargetModel, refs: &ModelRefs) -> String {
    let mut f = ParamFile::new(KIND);
    f.set_meta("has_mixer", model.params.mixer.is_some());
    f.set_strings("labels", model.labels.clone());
    f.set_strings("source_names", model.source_names.clone());
    f.set_strings("static_emb", vec![path_string(&refs.static_emb)]);
    f.set_strings("source_paths", refs.sources.iter().map(|p| path_string(p)).collect());
    if let Some(m) = &model.params.mixer {
        m.store(&mut f, "mixer");
    }
    model.params.tagger.store(&mut f, "tagger");
    f.to_text()
}

pub fn model_from_text(text: &str) -> Result<(TargetModel, ModelRefs)> {
    let f = ParamFile::parse(text)?;
    if f.kind != KIND {
        return Err(Error::format(format!("expected a {KIND} file, found `{}`", f.kind)));
    }
    let has_mixer: bool = f.meta_parse("has_mixer")?;
    let mixer = if has_mixer { Some(MixParams::load(&f, "mixer")?) } else { None };
    let tagger = TaggerParams::load(&f, "tagger")?;
    let labels = f.strings("labels")?.to_vec();
    if labels.len() != tagger.labels() {
        return Err(Error::format("label list disagrees with the tagger"));
    }
    let source_names = f.strings("source_names")?.to_vec();
    let sources: Vec<PathBuf> = f.strings("source_paths")?.iter().map(PathBuf::from).collect();
    if source_names.len() != sources.len() || mixer.as_ref().map_or(0, |m| m.sources()) != sources.len() {
        return Err(Error::format("source list disagrees with the mixer"));
    }
    let static_emb = f
        .strings("static_emb")?
        .first()
        .map(PathBuf::from)
        .ok_or_else(|| Error::format("missing static embedding path"))?;
    Ok((
        TargetModel {
            labels,
            source_names,
            params: TargetParams { mixer, tagger },
        },
        ModelRefs { static_emb, sources },
    ))
}

pub fn load_model(path: &Path) -> Result<(TargetModel, ModelRefs)> {
    model_from_text(&fs::read_to_string(path)?)
}
