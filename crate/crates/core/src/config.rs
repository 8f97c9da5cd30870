//! Flat `key = value` text files, optionally split into `[section]` blocks.
//! `#` starts a comment line.

use std::str::FromStr;

use indexmap::IndexMap;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Default)]
pub struct KeyValues {
    pub name: String,
    entries: IndexMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct KeyValueFile {
    pub top: KeyValues,
    pub sections: Vec<KeyValues>,
}

impl KeyValueFile {
    pub fn parse(text: &str) -> Result<Self> {
        let mut file = KeyValueFile::default();
        let mut current: Option<KeyValues> = None;
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                if let Some(done) = current.take() {
                    file.sections.push(done);
                }
                current = Some(KeyValues {
                    name: name.trim().to_owned(),
                    entries: IndexMap::new(),
                });
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::config(format!("line {}: expected `key = value`", i + 1)))?;
            let (k, v) = (k.trim(), v.trim());
            if k.is_empty() {
                return Err(Error::config(format!("line {}: empty key", i + 1)));
            }
            let target = current.as_mut().unwrap_or(&mut file.top);
            if target.entries.insert(k.to_owned(), v.to_owned()).is_some() {
                return Err(Error::config(format!("line {}: duplicate key `{k}`", i + 1)));
            }
        }
        if let Some(done) = current {
            file.sections.push(done);
        }
        Ok(file)
    }

    /// A file that must not contain sections.
    pub fn parse_flat(text: &str) -> Result<KeyValues> {
        let file = Self::parse(text)?;
        if let Some(s) = file.sections.first() {
            return Err(Error::config(format!("unexpected section [{}]", s.name)));
        }
        Ok(file.top)
    }
}

impl KeyValues {
    pub fn from_pairs<'a>(pairs: impl IntoIterator<Item = (&'a str, &'a str)>) -> Self {
        KeyValues {
            name: String::new(),
            entries: pairs.into_iter().map(|(k, v)| (k.to_owned(), v.to_owned())).collect(),
        }
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.entries.get(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| Error::config(format!("bad value `{v}` for `{key}`"))),
        }
    }

    pub fn get_or<T: FromStr>(&self, key: &str, default: T) -> Result<T> {
        Ok(self.get(key)?.unwrap_or(default))
    }

    pub fn get_list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>> {
        match self.entries.get(key) {
            None => Ok(None),
            Some(v) => v
                .split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(|s| {
                    s.parse()
                        .map_err(|_| Error::config(format!("bad list item `{s}` for `{key}`")))
                })
                .collect::<Result<Vec<T>>>()
                .map(Some),
        }
    }

    pub fn reject_unknown(&self, allowed: &[&str]) -> Result<()> {
        for k in self.entries.keys() {
            if !allowed.contains(&k.as_str()) {
                return Err(Error::config(format!("unknown key `{k}`")));
            }
        }
        Ok(())
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }
}
