//! Decision extraction from raw model output.

use serde::{Deserialize, Serialize};

use crate::label::ScreeningLabel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParseRoute {
    Digit,
    Keyword,
    Fallback,
}

impl std::fmt::Display for ParseRoute {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ParseRoute::Digit => "digit",
            ParseRoute::Keyword => "keyword",
            ParseRoute::Fallback => "fallback",
        })
    }
}

/// Keyword lists used when the output contains no `0`/`1` digit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecisionKeywords {
    pub include: Vec<String>,
    pub exclude: Vec<String>,
}

impl Default for DecisionKeywords {
    fn default() -> Self {
        Self {
            include: vec!["include".into()],
            exclude: vec!["exclude".into()],
        }
    }
}

/// Digit, then keyword, then majority class.
///
/// 1. The first `0` or `1` character anywhere in the text decides.
/// 2. Otherwise the earliest case-insensitive substring match of any keyword decides.
///    On an exact position tie the longer keyword wins, then include.
/// 3. Otherwise `majority_class`.
pub fn parse_decision_with(
    raw_text: &str,
    majority_class: ScreeningLabel,
    keywords: &DecisionKeywords,
) -> (ScreeningLabel, ParseRoute) {
    for c in raw_text.chars() {
        match c {
            '0' => return (ScreeningLabel::Exclude, ParseRoute::Digit),
            '1' => return (ScreeningLabel::Include, ParseRoute::Digit),
            _ => {}
        }
    }

    let lowered = raw_text.to_lowercase();
    let candidates = keywords
        .include
        .iter()
        .map(|k| (k, ScreeningLabel::Include))
        .chain(keywords.exclude.iter().map(|k| (k, ScreeningLabel::Exclude)));
    let best = candidates
        .filter(|(kw, _)| !kw.is_empty())
        .filter_map(|(kw, label)| {
            let kw = kw.to_lowercase();
            let pos = lowered.find(&kw)?;
            Some((
                (pos, std::cmp::Reverse(kw.len()), label != ScreeningLabel::Include),
                label,
            ))
        })
        .min_by_key(|(key, _)| *key)
        .map(|(_, label)| label);
    match best {
        Some(label) => (label, ParseRoute::Keyword),
        None => (majority_class, ParseRoute::Fallback),
    }
}

/// [`parse_decision_with`] using the default `include`/`exclude` keywords.
pub fn parse_decision(raw_text: &str, majority_class: ScreeningLabel) -> (ScreeningLabel, ParseRoute) {
    parse_decision_with(raw_text, majority_class, &DecisionKeywords::default())
}
