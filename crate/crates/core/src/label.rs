//! The binary screening decision.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Include/exclude decision. `Include` is the positive class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ScreeningLabel {
    Exclude,
    Include,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid label token {0:?} (expected 0, 1, exclude or include)")]
pub struct LabelError(pub String);

impl ScreeningLabel {
    pub const ALL: [ScreeningLabel; 2] = [ScreeningLabel::Exclude, ScreeningLabel::Include];

    pub fn as_digit(self) -> u8 {
        match self {
            ScreeningLabel::Exclude => 0,
            ScreeningLabel::Include => 1,
        }
    }

    pub fn as_char(self) -> char {
        match self {
            ScreeningLabel::Exclude => '0',
            ScreeningLabel::Include => '1',
        }
    }

    pub fn from_digit(d: u8) -> Result<Self, LabelError> {
        match d {
            0 => Ok(ScreeningLabel::Exclude),
            1 => Ok(ScreeningLabel::Include),
            other => Err(LabelError(other.to_string())),
        }
    }

    pub fn flip(self) -> Self {
        match self {
            ScreeningLabel::Exclude => ScreeningLabel::Include,
            ScreeningLabel::Include => ScreeningLabel::Exclude,
        }
    }

    pub fn is_include(self) -> bool {
        self == ScreeningLabel::Include
    }
}

impl fmt::Display for ScreeningLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_digit())
    }
}

/// Accepts `0`/`1` and case-insensitive `exclude`/`include`, ignoring surrounding whitespace.
impl FromStr for ScreeningLabel {
    type Err = LabelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim();
        match t {
            "0" => Ok(ScreeningLabel::Exclude),
            "1" => Ok(ScreeningLabel::Include),
            _ if t.eq_ignore_ascii_case("exclude") => Ok(ScreeningLabel::Exclude),
            _ if t.eq_ignore_ascii_case("include") => Ok(ScreeningLabel::Include),
            _ => Err(LabelError(s.to_string())),
        }
    }
}

impl Serialize for ScreeningLabel {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_u8(self.as_digit())
    }
}

impl<'de> Deserialize<'de> for ScreeningLabel {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(u64),
            Text(String),
        }
        match Raw::deserialize(deserializer)? {
            Raw::Num(n) => u8::try_from(n)
                .map_err(|_| LabelError(n.to_string()))
                .and_then(ScreeningLabel::from_digit)
                .map_err(serde::de::Error::custom),
            Raw::Text(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}
