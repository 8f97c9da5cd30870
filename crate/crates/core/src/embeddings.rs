//! Frozen static word vectors in the GloVe text layout.

use std::collections::HashMap;
use std::fmt::Write as _;

use ndarray::{Array1, Array2, ArrayView1};

use crate::error::{Error, Result};

/// Pretrained vectors with a zero out-of-vocabulary row.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    tokens: Vec<String>,
    index: HashMap<String, usize>,
    matrix: Array2<f64>,
    unk: Array1<f64>,
}

impl EmbeddingTable {
    pub fn empty(dim: usize) -> Self {
        EmbeddingTable {
            dim,
            tokens: Vec::new(),
            index: HashMap::new(),
            matrix: Array2::zeros((0, dim)),
            unk: Array1::zeros(dim),
        }
    }

    /// Builds a table from parallel rows. Duplicate tokens are rejected.
    pub fn from_parts(tokens: Vec<String>, matrix: Array2<f64>) -> Result<Self> {
        if tokens.len() != matrix.nrows() {
            return Err(Error::dimension("embedding rows", tokens.len(), matrix.nrows()));
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i).is_some() {
                return Err(Error::format(format!("duplicate token `{t}`")));
            }
        }
        let dim = matrix.ncols();
        Ok(EmbeddingTable {
            dim,
            tokens,
            index,
            matrix,
            unk: Array1::zeros(dim),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn index_of(&self, token: &str) -> Option<usize> {
        self.index
            .get(token)
            .or_else(|| self.index.get(&token.to_lowercase()))
            .copied()
    }

    /// Exact match, then lowercased match, then the zero UNK row.
    pub fn lookup(&self, token: &str) -> ArrayView1<'_, f64> {
        match self.index_of(token) {
            Some(i) => self.matrix.row(i),
            None => self.unk.view(),
        }
    }

    /// Stacks [`lookup`](Self::lookup) over a sentence into an `N x dim` matrix.
    pub fn embed<S: AsRef<str>>(&self, tokens: &[S]) -> Array2<f64> {
        let mut out = Array2::zeros((tokens.len(), self.dim));
        for (i, t) in tokens.iter().enumerate() {
            out.row_mut(i).assign(&self.lookup(t.as_ref()));
        }
        out
    }

    /// Serialises without a header line, one `token v1 .. vd` line per row.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (t, row) in self.tokens.iter().zip(self.matrix.rows()) {
            out.push_str(t);
            for x in row {
                let _ = write!(out, " {x:e}");
            }
            out.push('\n');
        }
        out
    }
}

fn is_header(line: &str) -> bool {
    let fields: Vec<&str> = line.split_whitespace().collect();
    fields.len() == 2 && fields.iter().all(|f| f.parse::<u64>().is_ok())
}

/// Parses `token v1 v2 ... vd` lines. A first line made of exactly two
/// integers is a `count dim` header and is skipped. Later duplicates of a token
/// are ignored.
pub fn load_text_embeddings(text: &str, expected_dim: Option<usize>) -> Result<EmbeddingTable> {
    let mut dim = expected_dim;
    let mut tokens = Vec::new();
    let mut index = HashMap::new();
    let mut values = Vec::new();

    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        if i == 0 && is_header(line) {
            continue;
        }
        let mut fields = line.split(' ').filter(|f| !f.is_empty());
        let token = fields.next().expect("nonblank line has a field");
        let row = fields
            .map(|f| {
                f.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::parse(lineno, format!("non-numeric field `{f}`")))
            })
            .collect::<Result<Vec<f64>>>()?;
        match dim {
            None => dim = Some(row.len()),
            Some(d) if d != row.len() => {
                return Err(Error::parse(
                    lineno,
                    format!("expected {d} values, found {}", row.len()),
                ))
            }
            _ => {}
        }
        if index.contains_key(token) {
            continue;
        }
        index.insert(token.to_owned(), tokens.len());
        tokens.push(token.to_owned());
        values.extend(row);
    }

    let dim = dim.unwrap_or(0);
    let matrix = Array2::from_shape_vec((tokens.len(), dim), values)
        .map_err(|e| Error::format(e.to_string()))?;
    Ok(EmbeddingTable {
        dim,
        tokens,
        index,
        matrix,
        unk: Array1::zeros(dim),
    })
}
