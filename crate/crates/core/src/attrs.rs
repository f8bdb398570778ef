//! Scalar attribute values carried by provenance nodes.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::Number;

/// A string, number or boolean attribute value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AttrValue {
    Bool(bool),
    Number(Number),
    Text(String),
}

/// Attribute map. Keys are sorted, which keeps serialization canonical.
pub type Attrs = BTreeMap<String, AttrValue>;

impl AttrValue {
    pub fn as_str(&self) -> Option<&str> {
        match self {
            AttrValue::Text(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_bool(&self) -> Option<bool> {
        match self {
            AttrValue::Bool(b) => Some(*b),
            _ => None,
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            AttrValue::Number(n) => n.as_f64(),
            _ => None,
        }
    }

    pub fn as_u64(&self) -> Option<u64> {
        match self {
            AttrValue::Number(n) => n.as_u64(),
            _ => None,
        }
    }
}

/// Renders the value the way patterns see it: text verbatim, numbers and
/// booleans in their JSON form.
impl fmt::Display for AttrValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AttrValue::Bool(b) => write!(f, "{b}"),
            AttrValue::Number(n) => write!(f, "{n}"),
            AttrValue::Text(s) => f.write_str(s),
        }
    }
}

impl From<&str> for AttrValue {
    fn from(s: &str) -> Self {
        AttrValue::Text(s.to_owned())
    }
}

impl From<String> for AttrValue {
    fn from(s: String) -> Self {
        AttrValue::Text(s)
    }
}

impl From<bool> for AttrValue {
    fn from(b: bool) -> Self {
        AttrValue::Bool(b)
    }
}

impl From<i64> for AttrValue {
    fn from(n: i64) -> Self {
        AttrValue::Number(n.into())
    }
}

impl From<u64> for AttrValue {
    fn from(n: u64) -> Self {
        AttrValue::Number(n.into())
    }
}

impl From<u32> for AttrValue {
    fn from(n: u32) -> Self {
        AttrValue::Number(n.into())
    }
}

/// Non-finite floats have no JSON representation and are stored as text.
impl From<f64> for AttrValue {
    fn from(x: f64) -> Self {
        match Number::from_f64(x) {
            Some(n) => AttrValue::Number(n),
            None => AttrValue::Text(x.to_string()),
        }
    }
}

/// Builds an [`Attrs`] map from key/value pairs.
pub fn attrs<K, V, I>(pairs: I) -> Attrs
where
    K: Into<String>,
    V: Into<AttrValue>,
    I: IntoIterator<Item = (K, V)>,
{
    pairs.into_iter().map(|(k, v)| (k.into(), v.into())).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn integers_and_floats_keep_their_json_form() {
        let a = attrs([("n", AttrValue::from(4i64)), ("x", AttrValue::from(0.12))]);
        let json = serde_json::to_string(&a).unwrap();
        assert_eq!(json, r#"{"n":4,"x":0.12}"#);
        let back: Attrs = serde_json::from_str(&json).unwrap();
        assert_eq!(back, a);
    }

    #[test]
    fn rejects_non_scalar_values() {
        assert!(serde_json::from_str::<Attrs>(r#"{"k":[1]}"#).is_err());
        assert!(serde_json::from_str::<Attrs>(r#"{"k":null}"#).is_err());
    }
}
