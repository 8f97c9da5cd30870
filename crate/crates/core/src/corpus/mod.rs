//! Tagged corpora: CoNLL-style reading and writing, BIO validation, seeded
//! subsampling and synthetic multi-task generation.

mod synth;

use std::fmt::Write as _;

use indexmap::IndexSet;

use crate::error::{Error, Result};
use crate::rng;

pub use synth::{gen_synthetic, synth_static_table, Setting, SynthSpec, SyntheticCorpora};

/// A parsed BIO tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Bio<'a> {
    Outside,
    Begin(&'a str),
    Inside(&'a str),
}

impl<'a> Bio<'a> {
    pub fn parse(tag: &'a str) -> Option<Bio<'a>> {
        if tag == "O" {
            return Some(Bio::Outside);
        }
        let (prefix, ty) = tag.split_once('-')?;
        if ty.is_empty() {
            return None;
        }
        match prefix {
            "B" => Some(Bio::Begin(ty)),
            "I" => Some(Bio::Inside(ty)),
            _ => None,
        }
    }

    pub fn entity_type(&self) -> Option<&'a str> {
        match *self {
            Bio::Outside => None,
            Bio::Begin(t) | Bio::Inside(t) => Some(t),
        }
    }
}

/// Checks that `labels` is a well-formed BIO sequence. An `I-X` must follow a
/// `B-X` or `I-X`; in particular it may not open a sentence.
pub fn check_bio<S: AsRef<str>>(labels: &[S]) -> std::result::Result<(), String> {
    let mut prev: Option<&str> = None;
    for (i, label) in labels.iter().enumerate() {
        let label = label.as_ref();
        let bio = Bio::parse(label).ok_or_else(|| format!("malformed tag `{label}` at token {i}"))?;
        if let Bio::Inside(ty) = bio {
            if prev != Some(ty) {
                return Err(format!("`{label}` at token {i} does not continue a {ty} span"));
            }
        }
        prev = bio.entity_type();
    }
    Ok(())
}

/// Rewrites every `I-X` that does not continue an `X` span into `B-X`.
/// Labels that do not parse as BIO tags are left untouched.
pub fn repair_bio(labels: &mut [String]) {
    let mut prev: Option<String> = None;
    for label in labels.iter_mut() {
        let fixed = match Bio::parse(label) {
            Some(Bio::Inside(ty)) if prev.as_deref() != Some(ty) => Some(format!("B-{ty}")),
            _ => None,
        };
        if let Some(f) = fixed {
            *label = f;
        }
        prev = Bio::parse(label).and_then(|b| b.entity_type()).map(str::to_owned);
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaggedSentence {
    tokens: Vec<String>,
    labels: Vec<String>,
}

impl TaggedSentence {
    pub fn new(tokens: Vec<String>, labels: Vec<String>) -> std::result::Result<Self, String> {
        if tokens.is_empty() {
            return Err("empty sentence".into());
        }
        if tokens.len() != labels.len() {
            return Err(format!("{} tokens but {} labels", tokens.len(), labels.len()));
        }
        check_bio(&labels)?;
        Ok(TaggedSentence { tokens, labels })
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Same tokens with a different labelling.
    pub fn relabel(&self, labels: Vec<String>) -> std::result::Result<Self, String> {
        TaggedSentence::new(self.tokens.clone(), labels)
    }
}

/// An ordered collection of sentences with first-occurrence vocabularies.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Dataset {
    sentences: Vec<TaggedSentence>,
    label_vocab: IndexSet<String>,
    token_vocab: IndexSet<String>,
}

impl Dataset {
    pub fn new(sentences: Vec<TaggedSentence>) -> Self {
        let mut label_vocab = IndexSet::new();
        let mut token_vocab = IndexSet::new();
        for s in &sentences {
            for (t, l) in s.tokens.iter().zip(&s.labels) {
                if !token_vocab.contains(t) {
                    token_vocab.insert(t.clone());
                }
                if !label_vocab.contains(l) {
                    label_vocab.insert(l.clone());
                }
            }
        }
        Dataset {
            sentences,
            label_vocab,
            token_vocab,
        }
    }

    pub fn sentences(&self) -> &[TaggedSentence] {
        &self.sentences
    }

    pub fn label_vocab(&self) -> &IndexSet<String> {
        &self.label_vocab
    }

    pub fn token_vocab(&self) -> &IndexSet<String> {
        &self.token_vocab
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    /// Sentences `range` as a new dataset with rebuilt vocabularies.
    pub fn slice(&self, range: std::ops::Range<usize>) -> Dataset {
        Dataset::new(self.sentences[range].to_vec())
    }
}

/// Tab-separated `token<TAB>tag` sentences without BIO validation, as
/// `(tokens, tags)` pairs. Blank lines separate sentences.
pub fn read_columns(text: &str) -> Result<Vec<(Vec<String>, Vec<String>)>> {
    let mut sentences = Vec::new();
    let mut tokens = Vec::new();
    let mut labels = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        if line.trim().is_empty() {
            if !tokens.is_empty() {
                sentences.push((std::mem::take(&mut tokens), std::mem::take(&mut labels)));
            }
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 2 {
            return Err(Error::parse(
                i + 1,
                format!("expected 2 tab-separated fields, found {}", fields.len()),
            ));
        }
        if fields[0].is_empty() || fields[1].is_empty() {
            return Err(Error::parse(i + 1, "empty token or tag"));
        }
        tokens.push(fields[0].to_owned());
        labels.push(fields[1].to_owned());
    }
    if !tokens.is_empty() {
        sentences.push((tokens, labels));
    }
    Ok(sentences)
}

/// Parses tab-separated `token<TAB>tag` lines; blank lines separate sentences.
pub fn read_conll(text: &str) -> Result<Dataset> {
    let sentences = read_columns(text)?
        .into_iter()
        .enumerate()
        .map(|(index, (tokens, labels))| {
            TaggedSentence::new(tokens, labels).map_err(|message| Error::Validation { sentence: index, message })
        })
        .collect::<Result<_>>()?;
    Ok(Dataset::new(sentences))
}

/// The tokens of `data` with `tags` in place of the gold labels, in the same
/// layout as [`write_conll`]. Tags are written as given, valid BIO or not.
pub fn write_tagged(data: &Dataset, tags: &[Vec<String>]) -> Result<String> {
    if tags.len() != data.len() {
        return Err(Error::dimension("tagged sentences", data.len(), tags.len()));
    }
    let mut out = String::new();
    for (i, (s, t)) in data.sentences.iter().zip(tags).enumerate() {
        if t.len() != s.len() {
            return Err(Error::Validation {
                sentence: i,
                message: format!("{} tags for {} tokens", t.len(), s.len()),
            });
        }
        if i > 0 {
            out.push('\n');
        }
        for (tok, tag) in s.tokens.iter().zip(t) {
            let _ = writeln!(out, "{tok}\t{tag}");
        }
    }
    Ok(out)
}

/// Canonical CoNLL text: one blank line between sentences, `\n` endings.
pub fn write_conll(dataset: &Dataset) -> String {
    let mut out = String::new();
    for (i, s) in dataset.sentences.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        for (t, l) in s.tokens.iter().zip(&s.labels) {
            let _ = writeln!(out, "{t}\t{l}");
        }
    }
    out
}

/// Seeded uniform `n`-subset of sentences, original order preserved.
///
/// Indices are drawn with [`rng::sample_indices`] on the stream
/// `rng::seeded(seed)`; when `n >= dataset.len()` the dataset is returned as is.
pub fn subsample(dataset: &Dataset, n: usize, seed: u64) -> Dataset {
    if n >= dataset.len() {
        return dataset.clone();
    }
    let mut r = rng::seeded(seed);
    let picked = rng::sample_indices(dataset.len(), n, &mut r);
    Dataset::new(picked.into_iter().map(|i| dataset.sentences[i].clone()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sent(pairs: &[(&str, &str)]) -> TaggedSentence {
        TaggedSentence::new(
            pairs.iter().map(|p| p.0.to_string()).collect(),
            pairs.iter().map(|p| p.1.to_string()).collect(),
        )
        .unwrap()
    }

    #[test]
    fn empty_input_gives_empty_dataset() {
        let d = read_conll("").unwrap();
        assert!(d.is_empty());
        assert_eq!(write_conll(&d), "");
    }

    #[test]
    fn reads_two_sentences() {
        let d = read_conll("EU\tB-ORG\nrejects\tO\n\nPeter\tB-PER\n").unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(d.sentences()[0].len(), 2);
        assert_eq!(d.sentences()[1].len(), 1);
        let labels: Vec<_> = d.label_vocab().iter().cloned().collect();
        assert_eq!(labels, ["B-ORG", "O", "B-PER"]);
    }

    #[test]
    fn writes_single_sentence() {
        let d = Dataset::new(vec![sent(&[("a", "O")])]);
        assert_eq!(write_conll(&d), "a\tO\n");
    }

    #[test]
    fn canonicalises_blank_lines() {
        let t = "\n\na\tO\n\n\n\nb\tB-X\nc\tI-X\n\n\n";
        let d = read_conll(t).unwrap();
        assert_eq!(write_conll(&d), "a\tO\n\nb\tB-X\nc\tI-X\n");
    }

    #[test]
    fn wrong_field_count_reports_line() {
        let err = read_conll("a\tO\nb O\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
        let err = read_conll("a\tO\textra\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
    }

    #[test]
    fn invalid_bio_reports_sentence() {
        let err = read_conll("a\tO\n\nb\tO\nc\tI-PER\n").unwrap_err();
        assert!(matches!(err, Error::Validation { sentence: 1, .. }), "{err}");
        let err = read_conll("a\tB-LOC\nb\tI-PER\n").unwrap_err();
        assert!(matches!(err, Error::Validation { sentence: 0, .. }));
        assert!(read_conll("a\tB-\n").is_err());
        assert!(read_conll("a\tX-PER\n").is_err());
    }

    #[test]
    fn bio_checks() {
        assert!(check_bio(&["B-A", "I-A", "O", "B-B"]).is_ok());
        assert!(check_bio(&["I-A"]).is_err());
        assert!(check_bio(&["B-A", "I-B"]).is_err());
        let mut l: Vec<String> = ["O", "I-A", "I-A", "B-B", "I-C"].iter().map(|s| s.to_string()).collect();
        repair_bio(&mut l);
        assert_eq!(l, ["O", "B-A", "I-A", "B-B", "B-C"]);
    }

    #[test]
    fn subsample_larger_than_dataset_is_identity() {
        let d = Dataset::new(vec![sent(&[("a", "O")]), sent(&[("b", "B-X")])]);
        assert_eq!(subsample(&d, 7, 123), d);
    }

    #[test]
    fn subsample_is_deterministic_and_ordered() {
        let sents: Vec<_> = (0..50)
            .map(|i| {
                let t = format!("t{i}");
                sent(&[(t.as_str(), "O")])
            })
            .collect();
        let d = Dataset::new(sents);
        let a = subsample(&d, 10, 4);
        let b = subsample(&d, 10, 4);
        assert_eq!(a, b);
        assert_eq!(a.len(), 10);
        let pos: Vec<usize> = a
            .sentences()
            .iter()
            .map(|s| d.sentences().iter().position(|x| x == s).unwrap())
            .collect();
        assert!(pos.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(a.token_vocab().len(), 10);
        assert_eq!(subsample(&a, 10, 4), a);
    }
}
