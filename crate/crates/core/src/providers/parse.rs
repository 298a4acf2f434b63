//! Extraction of structured lists from free-form completions.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::types::ContrastivePair;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ParseError {
    #[error("no wrong/corrected answer pairs found in completion")]
    NoPairs,
    #[error("no numbered answers found in completion")]
    NoAnswers,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParseWarning {
    pub expected: usize,
    pub got: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedPairs {
    pub pairs: Vec<ContrastivePair>,
    pub warning: Option<ParseWarning>,
}

fn marker_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(
            r"(?xi)
            (?:
                \b(?P<num>\d+)\s*[.)]\s*\**\s*(?P<neg>non[-\ ]?)?wrong\s+answer\s*\**\s*:
              | \b(?P<ord>\d+)\s*-?\s*(?:th|st|nd|rd)\s+(?P<negf>non[-\ ]?)?fake\s+answer\s+is\s*:
            )",
        )
        .expect("marker regex compiles")
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Style {
    Numbered,
    Ordinal,
}

struct Marker {
    start: usize,
    end: usize,
    index: usize,
    corrected: bool,
    style: Style,
}

fn clean(segment: &str) -> String {
    segment.trim().trim_start_matches(['.', '*']).trim_end_matches('*').trim().to_string()
}

/// Pulls numbered wrong / corrected answer pairs out of a completion.
///
/// Understands `N. Wrong Answer:` / `N. Non-Wrong Answer:` in inline or
/// line-per-item layout, and the `N-th fake answer is:` / `N-th non-fake
/// answer is:` variant (0-based, shifted to 1-based). Each answer runs until
/// the next marker. Pairs missing either side are dropped; if fewer than
/// `k_expected` survive a warning is attached, and extras beyond it are cut.
pub fn parse_contrastive(raw: &str, k_expected: usize) -> Result<ParsedPairs, ParseError> {
    let re = marker_regex();
    let markers: Vec<Marker> = re
        .captures_iter(raw)
        .filter_map(|c| {
            let whole = c.get(0)?;
            let (num, neg, style) = match c.name("num") {
                Some(n) => (n, c.name("neg"), Style::Numbered),
                None => (c.name("ord")?, c.name("negf"), Style::Ordinal),
            };
            Some(Marker { start: whole.start(), end: whole.end(), index: num.as_str().parse().ok()?, corrected: neg.is_some(), style })
        })
        .collect();

    let zero_based = |style: Style| markers.iter().any(|m| m.style == style && m.index == 0);
    let offsets = [(Style::Numbered, usize::from(zero_based(Style::Numbered))), (Style::Ordinal, usize::from(zero_based(Style::Ordinal)))];

    let mut slots: BTreeMap<usize, (Option<String>, Option<String>)> = BTreeMap::new();
    for (i, m) in markers.iter().enumerate() {
        let stop = markers.get(i + 1).map_or(raw.len(), |next| next.start);
        let text = clean(&raw[m.end..stop]);
        let offset = offsets.iter().find(|(s, _)| *s == m.style).map_or(0, |(_, o)| *o);
        let slot = slots.entry(m.index + offset).or_default();
        let side = if m.corrected { &mut slot.1 } else { &mut slot.0 };
        if side.is_none() {
            *side = Some(text);
        }
    }

    let mut pairs: Vec<ContrastivePair> = slots.into_iter().filter_map(|(index, (iw, co))| ContrastivePair::new(iw?, co?, index)).collect();
    if pairs.is_empty() {
        return Err(ParseError::NoPairs);
    }
    pairs.truncate(k_expected.max(1));
    let warning = (pairs.len() < k_expected).then_some(ParseWarning { expected: k_expected, got: pairs.len() });
    Ok(ParsedPairs { pairs, warning })
}

fn numbered_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"(?mi)^[ \t]*\**[ \t]*(\d+)[ \t]*[.)][ \t]*\**[ \t]*(?:answer[ \t]*\**[ \t]*:)?").expect("numbered regex compiles")
    })
}

/// Numbered answers (`1. Answer: ...` or `1. ...`) in ascending order, at most `n`.
pub fn parse_numbered_answers(raw: &str, n: usize) -> Result<Vec<String>, ParseError> {
    let re = numbered_regex();
    let found: Vec<(usize, usize, usize)> = re
        .captures_iter(raw)
        .filter_map(|c| {
            let whole = c.get(0)?;
            Some((c[1].parse().ok()?, whole.start(), whole.end()))
        })
        .collect();
    let mut by_index: BTreeMap<usize, String> = BTreeMap::new();
    for (i, (index, _, end)) in found.iter().enumerate() {
        let stop = found.get(i + 1).map_or(raw.len(), |next| next.1);
        let text = clean(&raw[*end..stop]);
        if !text.is_empty() {
            by_index.entry(*index).or_insert(text);
        }
    }
    let answers: Vec<String> = by_index.into_values().take(n).collect();
    if answers.is_empty() {
        return Err(ParseError::NoAnswers);
    }
    Ok(answers)
}
