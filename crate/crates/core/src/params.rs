//! Parameter groups and the shared decimal-text parameter format.
//!
//! ```text
//! supmix-params 1
//! kind toy_encoder
//! meta hidden 16
//! strings vocab 2
//! w0
//! w1
//! tensor gru.fwd.w_in 2 3
//! 1e-1 2.5e0 -3e-2
//! 0e0 1e0 2e0
//! end
//! ```
//!
//! Values are written with `{:e}`, which prints the shortest decimal string
//! that parses back to the same `f64`. Vectors are stored as `1 x n` tensors.

use std::fmt::Write as _;

use indexmap::IndexMap;
use ndarray::{Array1, Array2};

use crate::error::{Error, Result};

const MAGIC: &str = "supmix-params";
const VERSION: u32 = 1;

/// A set of named real-valued tensors visited in a fixed order.
pub trait Parameters {
    fn visit(&self, f: &mut dyn FnMut(&str, &[f64]));
    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut [f64]));

    fn param_count(&self) -> usize {
        let mut n = 0;
        self.visit(&mut |_, t| n += t.len());
        n
    }

    fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        self.visit(&mut |_, t| out.extend_from_slice(t));
        out
    }

    fn assign_flat(&mut self, values: &[f64]) {
        let mut at = 0;
        self.visit_mut(&mut |_, t| {
            t.copy_from_slice(&values[at..at + t.len()]);
            at += t.len();
        });
        assert_eq!(at, values.len(), "flat parameter length mismatch");
    }

    fn fill(&mut self, value: f64) {
        self.visit_mut(&mut |_, t| t.fill(value));
    }

    /// Same shapes, all zeros. Used as a gradient accumulator.
    fn zeros_like(&self) -> Self
    where
        Self: Clone + Sized,
    {
        let mut z = self.clone();
        z.fill(0.0);
        z
    }

    /// `self += scale * other`, tensor by tensor.
    fn add_scaled(&mut self, other: &Self, scale: f64)
    where
        Self: Sized,
    {
        let flat = other.flatten();
        let mut at = 0;
        self.visit_mut(&mut |_, t| {
            for x in t.iter_mut() {
                *x += scale * flat[at];
                at += 1;
            }
        });
    }

    fn all_finite(&self) -> bool {
        let mut ok = true;
        self.visit(&mut |_, t| ok &= t.iter().all(|x| x.is_finite()));
        ok
    }
}

pub(crate) fn slice1(a: &Array1<f64>) -> &[f64] {
    a.as_slice().expect("standard layout")
}

pub(crate) fn slice1_mut(a: &mut Array1<f64>) -> &mut [f64] {
    a.as_slice_mut().expect("standard layout")
}

pub(crate) fn slice2(a: &Array2<f64>) -> &[f64] {
    a.as_slice().expect("standard layout")
}

pub(crate) fn slice2_mut(a: &mut Array2<f64>) -> &mut [f64] {
    a.as_slice_mut().expect("standard layout")
}

/// In-memory form of a parameter file.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamFile {
    pub kind: String,
    pub meta: IndexMap<String, String>,
    pub strings: IndexMap<String, Vec<String>>,
    pub tensors: IndexMap<String, Array2<f64>>,
}

impl ParamFile {
    pub fn new(kind: &str) -> Self {
        ParamFile {
            kind: kind.to_owned(),
            ..ParamFile::default()
        }
    }

    pub fn set_meta(&mut self, key: &str, value: impl ToString) {
        self.meta.insert(key.to_owned(), value.to_string());
    }

    pub fn meta(&self, key: &str) -> Result<&str> {
        self.meta
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| Error::format(format!("missing meta `{key}`")))
    }

    pub fn meta_parse<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        let raw = self.meta(key)?;
        raw.parse()
            .map_err(|_| Error::format(format!("bad value `{raw}` for meta `{key}`")))
    }

    pub fn set_strings(&mut self, name: &str, values: Vec<String>) {
        self.strings.insert(name.to_owned(), values);
    }

    pub fn strings(&self, name: &str) -> Result<&[String]> {
        self.strings
            .get(name)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::format(format!("missing string list `{name}`")))
    }

    pub fn set_matrix(&mut self, name: &str, m: &Array2<f64>) {
        self.tensors.insert(name.to_owned(), m.as_standard_layout().into_owned());
    }

    pub fn set_vector(&mut self, name: &str, v: &Array1<f64>) {
        let m = Array2::from_shape_vec((1, v.len()), v.to_vec()).expect("row vector");
        self.tensors.insert(name.to_owned(), m);
    }

    pub fn set_scalar(&mut self, name: &str, x: f64) {
        self.tensors.insert(name.to_owned(), Array2::from_elem((1, 1), x));
    }

    pub fn matrix(&self, name: &str) -> Result<Array2<f64>> {
        self.tensors
            .get(name)
            .cloned()
            .ok_or_else(|| Error::format(format!("missing tensor `{name}`")))
    }

    pub fn matrix_shaped(&self, name: &str, rows: usize, cols: usize) -> Result<Array2<f64>> {
        let m = self.matrix(name)?;
        if m.dim() != (rows, cols) {
            return Err(Error::format(format!(
                "tensor `{name}` is {}x{}, expected {rows}x{cols}",
                m.nrows(),
                m.ncols()
            )));
        }
        Ok(m)
    }

    pub fn vector(&self, name: &str, len: usize) -> Result<Array1<f64>> {
        let m = self.matrix_shaped(name, 1, len)?;
        Ok(m.row(0).to_owned())
    }

    pub fn scalar(&self, name: &str) -> Result<f64> {
        Ok(self.matrix_shaped(name, 1, 1)?[[0, 0]])
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{MAGIC} {VERSION}");
        let _ = writeln!(out, "kind {}", self.kind);
        for (k, v) in &self.meta {
            let _ = writeln!(out, "meta {k} {v}");
        }
        for (name, values) in &self.strings {
            let _ = writeln!(out, "strings {name} {}", values.len());
            for v in values {
                let _ = writeln!(out, "{v}");
            }
        }
        for (name, m) in &self.tensors {
            let _ = writeln!(out, "tensor {name} {} {}", m.nrows(), m.ncols());
            for row in m.rows() {
                let mut first = true;
                for x in row {
                    if !first {
                        out.push(' ');
                    }
                    first = false;
                    let _ = write!(out, "{x:e}");
                }
                out.push('\n');
            }
        }
        out.push_str("end\n");
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        let mut next = |what: &str| {
            lines
                .next()
                .ok_or_else(|| Error::format(format!("unexpected end of file, expected {what}")))
        };

        let (n, header) = next("header")?;
        let mut h = header.split(' ');
        if h.next() != Some(MAGIC) {
            return Err(Error::parse(n, "not a supmix parameter file"));
        }
        let version: u32 = h
            .next()
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| Error::parse(n, "missing version"))?;
        if version != VERSION {
            return Err(Error::parse(n, format!("unsupported version {version}")));
        }
        let (n, kind_line) = next("kind")?;
        let kind = kind_line
            .strip_prefix("kind ")
            .ok_or_else(|| Error::parse(n, "expected `kind`"))?;
        let mut file = ParamFile::new(kind);

        loop {
            let (n, line) = next("`end`")?;
            let mut parts = line.splitn(2, ' ');
            let head = parts.next().unwrap_or_default();
            let rest = parts.next().unwrap_or_default();
            match head {
                "end" => break,
                "meta" => {
                    let (k, v) = rest
                        .split_once(' ')
                        .ok_or_else(|| Error::parse(n, "meta needs key and value"))?;
                    file.meta.insert(k.to_owned(), v.to_owned());
                }
                "strings" => {
                    let (name, count) = rest
                        .rsplit_once(' ')
                        .ok_or_else(|| Error::parse(n, "strings needs name and count"))?;
                    let count: usize = count
                        .parse()
                        .map_err(|_| Error::parse(n, "bad string count"))?;
                    let mut values = Vec::with_capacity(count);
                    for _ in 0..count {
                        values.push(next("string entry")?.1.to_owned());
                    }
                    file.strings.insert(name.to_owned(), values);
                }
                "tensor" => {
                    let f: Vec<&str> = rest.split(' ').collect();
                    if f.len() != 3 {
                        return Err(Error::parse(n, "tensor needs name, rows, cols"));
                    }
                    let rows: usize = f[1].parse().map_err(|_| Error::parse(n, "bad row count"))?;
                    let cols: usize = f[2].parse().map_err(|_| Error::parse(n, "bad column count"))?;
                    let mut data = Vec::with_capacity(rows * cols);
                    for _ in 0..rows {
                        let (rn, row) = next("tensor row")?;
                        let before = data.len();
                        for v in row.split(' ').filter(|s| !s.is_empty()) {
                            data.push(
                                v.parse::<f64>()
                                    .map_err(|_| Error::parse(rn, format!("bad number `{v}`")))?,
                            );
                        }
                        if data.len() - before != cols {
                            return Err(Error::parse(rn, format!("expected {cols} values")));
                        }
                    }
                    let m = Array2::from_shape_vec((rows, cols), data)
                        .map_err(|e| Error::format(e.to_string()))?;
                    file.tensors.insert(f[0].to_owned(), m);
                }
                other => return Err(Error::parse(n, format!("unknown section `{other}`"))),
            }
        }
        Ok(file)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rejects_foreign_files() {
        assert!(ParamFile::parse("hello\n").is_err());
        assert!(ParamFile::parse("supmix-params 2\nkind x\nend\n").is_err());
        assert!(ParamFile::parse("supmix-params 1\nkind x\n").is_err());
        assert!(ParamFile::parse("supmix-params 1\nkind x\ntensor a 1 2\n1 2 3\nend\n").is_err());
    }

    proptest! {
        #[test]
        fn text_round_trip_is_exact(
            values in proptest::collection::vec(proptest::num::f64::NORMAL | proptest::num::f64::SUBNORMAL | proptest::num::f64::ZERO, 6),
            words in proptest::collection::vec("[a-zA-Z0-9 _-]{1,8}", 0..4),
        ) {
            let mut f = ParamFile::new("test");
            f.set_meta("hidden", 3);
            f.set_strings("vocab", words);
            f.set_matrix("m", &Array2::from_shape_vec((2, 3), values.clone()).unwrap());
            f.set_scalar("gamma", values[0]);
            let back = ParamFile::parse(&f.to_text()).unwrap();
            let a: Vec<u64> = back.matrix("m").unwrap().iter().map(|x| x.to_bits()).collect();
            let b: Vec<u64> = values.iter().map(|x| x.to_bits()).collect();
            prop_assert_eq!(a, b);
            prop_assert_eq!(back, f);
        }
    }
}
