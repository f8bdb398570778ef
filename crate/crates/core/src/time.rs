//! UTC instants at millisecond resolution and closed time windows.

use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, SecondsFormat, Utc};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// A UTC instant, stored as milliseconds since the Unix epoch.
///
/// Renders as RFC 3339 with exactly three fractional digits and a `Z`
/// suffix, which is also the form used in canonical serialization.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Timestamp(i64);

impl Timestamp {
    pub const fn from_millis(millis: i64) -> Self {
        Self(millis)
    }

    pub const fn millis(self) -> i64 {
        self.0
    }

    pub fn parse(s: &str) -> Result<Self> {
        let dt =
            DateTime::parse_from_rfc3339(s).map_err(|e| Error::InvalidPayload(format!("bad timestamp {s:?}: {e}")))?;
        Ok(Self(dt.with_timezone(&Utc).timestamp_millis()))
    }

    pub fn plus_secs(self, secs: i64) -> Self {
        Self(self.0 + secs * 1000)
    }

    pub fn plus_millis(self, millis: i64) -> Self {
        Self(self.0 + millis)
    }

    /// Signed distance `self - earlier` in milliseconds.
    pub fn since(self, earlier: Timestamp) -> i64 {
        self.0 - earlier.0
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match DateTime::<Utc>::from_timestamp_millis(self.0) {
            Some(dt) => f.write_str(&dt.to_rfc3339_opts(SecondsFormat::Millis, true)),
            None => write!(f, "@{}ms", self.0),
        }
    }
}

impl FromStr for Timestamp {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::parse(s)
    }
}

impl Serialize for Timestamp {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Timestamp {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        Timestamp::parse(&s).map_err(serde::de::Error::custom)
    }
}

/// Closed interval `[start, end]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Window {
    pub start: Timestamp,
    pub end: Timestamp,
}

impl Window {
    pub fn new(start: Timestamp, end: Timestamp) -> Result<Self> {
        if start > end {
            return Err(Error::BadWindow { start, end });
        }
        Ok(Self { start, end })
    }

    pub fn contains(&self, t: Timestamp) -> bool {
        self.start <= t && t <= self.end
    }
}

impl FromStr for Window {
    type Err = Error;

    /// Parses `start..end`.
    fn from_str(s: &str) -> Result<Self> {
        let (a, b) =
            s.split_once("..").ok_or_else(|| Error::InvalidPayload(format!("window {s:?} is not start..end")))?;
        Window::new(Timestamp::parse(a)?, Timestamp::parse(b)?)
    }
}
