//! Records shared across the scoring pipeline.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::divergence::DivergenceKind;

/// A benchmark question. Gold-standard answers are never attached to it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Question {
    pub id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub topic_hint: Option<String>,
}

/// Hallucination label carried by labeled corpora.
///
/// Truthful-QA style `best` / `good` / `bad` tags are folded into the same
/// three classes when parsed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    NonHallu,
    HalfHallu,
    Hallu,
    #[default]
    Unknown,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::NonHallu => "non_hallu",
            Label::HalfHallu => "half_hallu",
            Label::Hallu => "hallu",
            Label::Unknown => "unknown",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown answer label {0:?}")]
pub struct UnknownLabel(pub String);

impl FromStr for Label {
    type Err = UnknownLabel;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "non_hallu" | "nonhallu" | "best" => Ok(Label::NonHallu),
            "half_hallu" | "halfhallu" | "good" => Ok(Label::HalfHallu),
            "hallu" | "bad" => Ok(Label::Hallu),
            "unknown" | "" => Ok(Label::Unknown),
            _ => Err(UnknownLabel(s.to_string())),
        }
    }
}

/// An answer under evaluation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Answer {
    pub id: String,
    pub question_id: String,
    pub text: String,
    #[serde(default)]
    pub label: Label,
    pub source: String,
}

/// A validated evaluation corpus. Construct through [`crate::dataset::validate_dataset`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QADataset {
    pub questions: Vec<Question>,
    pub answers: BTreeMap<String, Vec<Answer>>,
    #[serde(default)]
    pub metadata: BTreeMap<String, String>,
}

impl QADataset {
    pub fn question(&self, id: &str) -> Option<&Question> {
        self.questions.iter().find(|q| q.id == id)
    }

    pub fn answers_for(&self, question_id: &str) -> &[Answer] {
        self.answers.get(question_id).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn answer_count(&self) -> usize {
        self.answers.values().map(Vec::len).sum()
    }

    /// First answer carrying `label` for the question, in dataset order.
    pub fn first_labeled(&self, question_id: &str, label: Label) -> Option<&Answer> {
        self.answers_for(question_id).iter().find(|a| a.label == label)
    }
}

/// One intentionally wrong answer and its corrected counterpart.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContrastivePair {
    pub iw_text: String,
    pub co_text: String,
    /// 1-based position in the generator's list.
    pub index: usize,
}

impl ContrastivePair {
    pub fn new(iw_text: impl Into<String>, co_text: impl Into<String>, index: usize) -> Option<Self> {
        let iw_text = iw_text.into();
        let co_text = co_text.into();
        if iw_text.trim().is_empty() || co_text.trim().is_empty() || index == 0 {
            return None;
        }
        Some(Self { iw_text, co_text, index })
    }
}

/// Per-question expertise of every reference: raw contrastive scores and
/// their softmax normalization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpertiseWeights {
    pub raw: Vec<f64>,
    pub lambda: Vec<f64>,
    pub temperature: f64,
}

/// Contribution of one reference to a score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceTerm {
    pub reference_id: String,
    pub similarity: f64,
    pub lambda: f64,
    pub weighted_truthfulness_term: f64,
    pub penalty_mean: f64,
    pub penalty_term: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FewlScore {
    pub value: f64,
    pub per_reference: Vec<ReferenceTerm>,
    pub divergence: DivergenceKind,
    pub config_digest: String,
    /// Set when some reference had no neighbor answers to penalize against.
    #[serde(default)]
    pub empty_penalty_warning: bool,
}

impl FewlScore {
    /// Mean over references of truthfulness minus penalty.
    pub fn recompute(per_reference: &[ReferenceTerm]) -> f64 {
        if per_reference.is_empty() {
            return 0.0;
        }
        let sum: f64 = per_reference.iter().map(|t| t.weighted_truthfulness_term - t.penalty_term).sum();
        sum / per_reference.len() as f64
    }

    pub fn is_consistent(&self) -> bool {
        (Self::recompute(&self.per_reference) - self.value).abs() <= 1e-9
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn truthful_qa_tags_fold_into_labels() {
        assert_eq!("best".parse::<Label>().unwrap(), Label::NonHallu);
        assert_eq!("good".parse::<Label>().unwrap(), Label::HalfHallu);
        assert_eq!("bad".parse::<Label>().unwrap(), Label::Hallu);
        assert_eq!("half_hallu".parse::<Label>().unwrap(), Label::HalfHallu);
        assert!("maybe".parse::<Label>().is_err());
    }

    #[test]
    fn contrastive_pair_rejects_blank_text() {
        assert!(ContrastivePair::new("a", " ", 1).is_none());
        assert!(ContrastivePair::new("a", "b", 0).is_none());
        assert!(ContrastivePair::new("a", "b", 3).is_some());
    }

    #[test]
    fn recompute_matches_mean_of_terms() {
        let term = |t: f64, p: f64| ReferenceTerm {
            reference_id: "r".into(),
            similarity: 0.0,
            lambda: 0.5,
            weighted_truthfulness_term: t,
            penalty_mean: 0.0,
            penalty_term: p,
        };
        let terms = vec![term(0.4, 0.1), term(0.2, 0.3)];
        assert!((FewlScore::recompute(&terms) - 0.1).abs() < 1e-15);
    }
}
