//! Exact-match span scoring over BIO sequences (CoNLL convention).

use std::collections::HashSet;
use std::fmt;

use crate::corpus::Bio;
use crate::error::{Error, Result};

/// Tokens `start..end` labelled `kind`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Span {
    pub start: usize,
    pub end: usize,
    pub kind: String,
}

/// Maximal runs of one type opened by `B-X`. A dangling `I-X` (after `O`, at
/// the start, or after another type) opens a new span as if it were `B-X`.
/// Unparseable tags count as `O`.
pub fn extract_spans<S: AsRef<str>>(labels: &[S]) -> Vec<Span> {
    let mut spans = Vec::new();
    let mut open: Option<(usize, &str)> = None;
    for (i, label) in labels.iter().enumerate() {
        let bio = Bio::parse(label.as_ref()).unwrap_or(Bio::Outside);
        match bio {
            Bio::Inside(ty) if open.is_some_and(|(_, t)| t == ty) => {}
            _ => {
                if let Some((start, ty)) = open.take() {
                    spans.push(Span { start, end: i, kind: ty.to_owned() });
                }
                if let Some(ty) = bio.entity_type() {
                    open = Some((i, ty));
                }
            }
        }
    }
    if let Some((start, ty)) = open {
        spans.push(Span { start, end: labels.len(), kind: ty.to_owned() });
    }
    spans
}

/// Writes non-overlapping spans back as a BIO sequence of length `len`.
pub fn spans_to_bio(spans: &[Span], len: usize) -> Vec<String> {
    let mut out = vec!["O".to_string(); len];
    for s in spans {
        out[s.start] = format!("B-{}", s.kind);
        for slot in out.iter_mut().take(s.end).skip(s.start + 1) {
            *slot = format!("I-{}", s.kind);
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub gold_spans: usize,
    pub pred_spans: usize,
    pub matched: usize,
}

impl Prf {
    pub fn from_counts(matched: usize, gold_spans: usize, pred_spans: usize) -> Self {
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let precision = ratio(matched, pred_spans);
        let recall = ratio(matched, gold_spans);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Prf { precision, recall, f1, gold_spans, pred_spans, matched }
    }

    /// `precision<TAB>recall<TAB>f1` as percentages.
    pub fn tsv(&self) -> String {
        format!("{:.2}\t{:.2}\t{:.2}", 100.0 * self.precision, 100.0 * self.recall, 100.0 * self.f1)
    }
}

impl fmt::Display for Prf {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "precision {:.2}  recall {:.2}  F1 {:.2}  (gold {}, predicted {}, correct {})",
            100.0 * self.precision,
            100.0 * self.recall,
            100.0 * self.f1,
            self.gold_spans,
            self.pred_spans,
            self.matched
        )
    }
}

/// Micro-averaged span precision, recall and F1 over a corpus.
pub fn span_f1<S: AsRef<str>, T: AsRef<str>>(gold: &[Vec<S>], pred: &[Vec<T>]) -> Result<Prf> {
    if gold.len() != pred.len() {
        return Err(Error::Validation {
            sentence: gold.len().min(pred.len()),
            message: format!("{} gold sentences but {} predicted", gold.len(), pred.len()),
        });
    }
    let (mut matched, mut n_gold, mut n_pred) = (0, 0, 0);
    for (i, (g, p)) in gold.iter().zip(pred).enumerate() {
        if g.len() != p.len() {
            return Err(Error::Validation {
                sentence: i,
                message: format!("{} gold labels but {} predicted", g.len(), p.len()),
            });
        }
        let gs: HashSet<Span> = extract_spans(g).into_iter().collect();
        let ps: HashSet<Span> = extract_spans(p).into_iter().collect();
        matched += gs.intersection(&ps).count();
        n_gold += gs.len();
        n_pred += ps.len();
    }
    Ok(Prf::from_counts(matched, n_gold, n_pred))
}

/// Fraction of tokens whose predicted tag equals the gold tag.
pub fn token_accuracy<S: AsRef<str>, T: AsRef<str>>(gold: &[Vec<S>], pred: &[Vec<T>]) -> f64 {
    let mut right = 0;
    let mut total = 0;
    for (g, p) in gold.iter().zip(pred) {
        for (a, b) in g.iter().zip(p) {
            total += 1;
            if a.as_ref() == b.as_ref() {
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

#[cfg(test)]
mod tests {
    use super::*;

    fn v(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_owned).collect()
    }

    fn span(start: usize, end: usize, kind: &str) -> Span {
        Span { start, end, kind: kind.into() }
    }

    #[test]
    fn span_examples() {
        assert!(extract_spans(&v("O O O")).is_empty());
        assert_eq!(
            extract_spans(&v("B-PER I-PER O B-LOC")),
            vec![span(0, 2, "PER"), span(3, 4, "LOC")]
        );
        assert_eq!(extract_spans(&v("O I-PER I-PER")), vec![span(1, 3, "PER")]);
        assert_eq!(
            extract_spans(&v("B-A I-B B-A B-A")),
            vec![span(0, 1, "A"), span(1, 2, "B"), span(2, 3, "A"), span(3, 4, "A")]
        );
    }

    #[test]
    fn write_back_round_trip() {
        let l = v("B-A I-A O B-B B-B I-B O");
        assert_eq!(spans_to_bio(&extract_spans(&l), l.len()), l);
    }

    #[test]
    fn identical_corpora_score_one() {
        let g = vec![v("B-PER I-PER O"), v("B-LOC")];
        let p = span_f1(&g, &g).unwrap();
        assert_eq!((p.precision, p.recall, p.f1), (1.0, 1.0, 1.0));
    }

    #[test]
    fn disjoint_spans_score_zero() {
        let p = span_f1(&[v("B-A O")], &[v("O B-A")]).unwrap();
        assert_eq!((p.precision, p.recall, p.f1), (0.0, 0.0, 0.0));
        let p = span_f1(&[v("O O")], &[v("O O")]).unwrap();
        assert_eq!(p.f1, 0.0);
    }

    #[test]
    fn half_match() {
        // gold {(0,1,A), (2,4,B)}, pred {(0,1,A), (2,3,B)}: one exact match.
        let p = span_f1(&[v("B-A O B-B I-B")], &[v("B-A O B-B O")]).unwrap();
        assert_eq!((p.precision, p.recall, p.f1), (0.5, 0.5, 0.5));
    }

    #[test]
    fn mismatches_name_sentence() {
        let err = span_f1(&[v("O"), v("O O")], &[v("O"), v("O")]).unwrap_err();
        assert!(matches!(err, Error::Validation { sentence: 1, .. }));
        assert!(span_f1(&[v("O")], &Vec::<Vec<String>>::new()).is_err());
    }

    #[test]
    fn accuracy() {
        assert_eq!(token_accuracy(&[v("O B-A")], &[v("O O")]), 0.5);
    }
}
