//! The sensitive-API catalog.
//!
//! One catalog serves both consumers: every listed API counts as sensitive for
//! sandbox mining, and the class additionally tells the taint engine whether
//! the API reads protected data (source), may transmit it (sink), both, or
//! neither.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ir::ApiId;

/// Catalog shipped with the crate; covers the APIs used by the bundled fixtures.
pub const DEFAULT_CATALOG: &str = include_str!("../data/catalog.txt");

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SensitivityClass {
    SourceOnly,
    SinkOnly,
    SourceAndSink,
    SensitiveNeither,
}

impl SensitivityClass {
    pub fn is_source(self) -> bool {
        matches!(self, SensitivityClass::SourceOnly | SensitivityClass::SourceAndSink)
    }

    pub fn is_sink(self) -> bool {
        matches!(self, SensitivityClass::SinkOnly | SensitivityClass::SourceAndSink)
    }

    pub fn keyword(self) -> &'static str {
        match self {
            SensitivityClass::SourceOnly => "source",
            SensitivityClass::SinkOnly => "sink",
            SensitivityClass::SourceAndSink => "both",
            SensitivityClass::SensitiveNeither => "sensitive",
        }
    }
}

impl fmt::Display for SensitivityClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.keyword())
    }
}

impl FromStr for SensitivityClass {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        Ok(match s {
            "source" => SensitivityClass::SourceOnly,
            "sink" => SensitivityClass::SinkOnly,
            "both" => SensitivityClass::SourceAndSink,
            "sensitive" => SensitivityClass::SensitiveNeither,
            _ => return Err(()),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CatalogError {
    #[error("line {line}: expected `<api> <source|sink|both|sensitive>`")]
    Syntax { line: usize },
    #[error("line {line}: unknown sensitivity class `{keyword}`")]
    UnknownClass { line: usize, keyword: String },
    #[error("line {line}: duplicate api `{api}`")]
    Duplicate { line: usize, api: String },
    #[error("catalog has no entries")]
    Empty,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SensitiveCatalog {
    entries: BTreeMap<ApiId, SensitivityClass>,
}

impl SensitiveCatalog {
    /// Parse catalog text: one `<api> <class>` per line, `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self, CatalogError> {
        let mut entries = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let mut fields = content.split_whitespace();
            let (Some(api), Some(class), None) = (fields.next(), fields.next(), fields.next()) else {
                return Err(CatalogError::Syntax { line });
            };
            let class = class
                .parse::<SensitivityClass>()
                .map_err(|()| CatalogError::UnknownClass { line, keyword: class.to_owned() })?;
            if entries.insert(ApiId::new(api), class).is_some() {
                return Err(CatalogError::Duplicate { line, api: api.to_owned() });
            }
        }
        Self::from_entries(entries)
    }

    pub fn from_entries(entries: BTreeMap<ApiId, SensitivityClass>) -> Result<Self, CatalogError> {
        if entries.is_empty() {
            return Err(CatalogError::Empty);
        }
        Ok(SensitiveCatalog { entries })
    }

    pub fn default_catalog() -> Self {
        Self::parse(DEFAULT_CATALOG).expect("bundled catalog is valid")
    }

    /// True iff `api` is listed, whatever its class.
    pub fn is_sensitive(&self, api: &str) -> bool {
        self.entries.contains_key(api)
    }

    pub fn contains(&self, api: &str) -> bool {
        self.is_sensitive(api)
    }

    pub fn class(&self, api: &str) -> Option<SensitivityClass> {
        self.entries.get(api).copied()
    }

    pub fn is_source(&self, api: &str) -> bool {
        self.class(api).is_some_and(SensitivityClass::is_source)
    }

    pub fn is_sink(&self, api: &str) -> bool {
        self.class(api).is_some_and(SensitivityClass::is_sink)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&ApiId, SensitivityClass)> {
        self.entries.iter().map(|(k, v)| (k, *v))
    }

    pub fn apis(&self) -> impl Iterator<Item = &ApiId> {
        self.entries.keys()
    }

    pub fn to_text(&self) -> String {
        self.entries.iter().map(|(k, v)| format!("{k} {v}\n")).collect()
    }
}
