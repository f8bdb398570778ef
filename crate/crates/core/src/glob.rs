//! Literal-or-single-`*` patterns shared by capture and compliance rules.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A pattern that is either a literal or contains exactly one `*` matching
/// any (possibly empty) substring.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Glob {
    source: String,
    star: Option<usize>,
}

impl Glob {
    pub fn new(pattern: &str) -> Result<Self> {
        let mut stars = pattern.match_indices('*').map(|(i, _)| i);
        let star = stars.next();
        if stars.next().is_some() {
            return Err(Error::MalformedPattern(pattern.to_owned()));
        }
        Ok(Self { source: pattern.to_owned(), star })
    }

    pub fn any() -> Self {
        Self { source: "*".into(), star: Some(0) }
    }

    pub fn as_str(&self) -> &str {
        &self.source
    }

    pub fn matches(&self, text: &str) -> bool {
        match self.star {
            None => self.source == text,
            Some(i) => {
                let (prefix, suffix) = (&self.source[..i], &self.source[i + 1..]);
                text.len() >= prefix.len() + suffix.len() && text.starts_with(prefix) && text.ends_with(suffix)
            }
        }
    }
}

/// Matches `text` against a pattern string without keeping it compiled.
pub fn glob_match(pattern: &str, text: &str) -> Result<bool> {
    let mut parts = pattern.splitn(3, '*');
    let prefix = parts.next().unwrap_or_default();
    match (parts.next(), parts.next()) {
        (None, _) => Ok(pattern == text),
        (Some(suffix), None) => {
            Ok(text.len() >= prefix.len() + suffix.len() && text.starts_with(prefix) && text.ends_with(suffix))
        }
        (Some(_), Some(_)) => Err(Error::MalformedPattern(pattern.to_owned())),
    }
}

impl TryFrom<String> for Glob {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        Glob::new(&s)
    }
}

impl From<Glob> for String {
    fn from(g: Glob) -> String {
        g.source
    }
}

impl fmt::Display for Glob {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.source)
    }
}
