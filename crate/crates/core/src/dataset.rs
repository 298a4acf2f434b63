//! JSONL ingestion and validation of evaluation corpora.
//!
//! One object per line:
//!
//! ```text
//! {"id": "q-1", "question": "...", "answers": [{"id": "a-1", "text": "...", "label": "non_hallu", "source": "dataset"}]}
//! ```
//!
//! `label` may be `null` or absent (read as [`Label::Unknown`]).

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::io::BufRead;
use std::path::Path;

use serde::{Deserialize, Deserializer, Serialize};

use crate::types::{Answer, Label, QADataset, Question};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DatasetIssue {
    #[error("duplicate question id {0:?}")]
    DuplicateQuestionId(String),
    #[error("answer {0:?} references a question that does not exist")]
    DanglingAnswer(String),
    #[error("record {0:?} has empty text")]
    EmptyText(String),
}

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("dataset has {} problem(s): {}", .0.len(), IssueList(.0))]
    Invalid(Vec<DatasetIssue>),
    #[error("line {line}: {source}")]
    Parse {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("reading dataset: {0}")]
    Io(#[from] std::io::Error),
}

struct IssueList<'a>(&'a [DatasetIssue]);

impl fmt::Display for IssueList<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, issue) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str("; ")?;
            }
            write!(f, "{issue}")?;
        }
        Ok(())
    }
}

/// Unvalidated records, flattened so answers can point at any question.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RawDataset {
    pub questions: Vec<Question>,
    pub answers: Vec<Answer>,
    pub metadata: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct JsonlAnswer {
    id: String,
    text: String,
    #[serde(default, deserialize_with = "label_or_null")]
    label: Label,
    #[serde(default = "default_source")]
    source: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct JsonlRecord {
    id: String,
    question: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    topic: Option<String>,
    #[serde(default)]
    answers: Vec<JsonlAnswer>,
}

fn default_source() -> String {
    "dataset".to_string()
}

fn label_or_null<'de, D: Deserializer<'de>>(d: D) -> Result<Label, D::Error> {
    let raw: Option<String> = Option::deserialize(d)?;
    match raw {
        None => Ok(Label::Unknown),
        Some(s) => s.parse().map_err(serde::de::Error::custom),
    }
}

/// Parses JSONL text into raw records. Blank lines are skipped.
pub fn parse_jsonl<R: BufRead>(reader: R) -> Result<RawDataset, DatasetError> {
    let mut raw = RawDataset::default();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: JsonlRecord = serde_json::from_str(&line).map_err(|source| DatasetError::Parse { line: i + 1, source })?;
        for a in record.answers {
            raw.answers.push(Answer { id: a.id, question_id: record.id.clone(), text: a.text, label: a.label, source: a.source });
        }
        raw.questions.push(Question { id: record.id, text: record.question, topic_hint: record.topic });
    }
    Ok(raw)
}

/// Checks every invariant and reports all violations at once.
pub fn validate_dataset(raw: RawDataset) -> Result<QADataset, DatasetError> {
    let mut issues = Vec::new();
    let mut seen = HashSet::new();
    for q in &raw.questions {
        if !seen.insert(q.id.as_str()) {
            issues.push(DatasetIssue::DuplicateQuestionId(q.id.clone()));
        }
        if q.text.trim().is_empty() {
            issues.push(DatasetIssue::EmptyText(q.id.clone()));
        }
    }
    let mut answers: BTreeMap<String, Vec<Answer>> = BTreeMap::new();
    for a in &raw.answers {
        if !seen.contains(a.question_id.as_str()) {
            issues.push(DatasetIssue::DanglingAnswer(a.id.clone()));
            continue;
        }
        if a.text.trim().is_empty() {
            issues.push(DatasetIssue::EmptyText(a.id.clone()));
        }
        answers.entry(a.question_id.clone()).or_default().push(a.clone());
    }
    if !issues.is_empty() {
        return Err(DatasetError::Invalid(issues));
    }
    Ok(QADataset { questions: raw.questions, answers, metadata: raw.metadata })
}

pub fn load_jsonl(path: &Path) -> Result<QADataset, DatasetError> {
    let file = std::fs::File::open(path)?;
    validate_dataset(parse_jsonl(std::io::BufReader::new(file))?)
}

/// Serializes a dataset back to JSONL, one question per line.
pub fn to_jsonl(dataset: &QADataset) -> String {
    let mut out = String::new();
    for q in &dataset.questions {
        let record = JsonlRecord {
            id: q.id.clone(),
            question: q.text.clone(),
            topic: q.topic_hint.clone(),
            answers: dataset
                .answers_for(&q.id)
                .iter()
                .map(|a| JsonlAnswer { id: a.id.clone(), text: a.text.clone(), label: a.label, source: a.source.clone() })
                .collect(),
        };
        out.push_str(&serde_json::to_string(&record).expect("dataset records serialize"));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn question(id: &str, text: &str) -> Question {
        Question { id: id.into(), text: text.into(), topic_hint: None }
    }

    fn answer(id: &str, qid: &str, text: &str) -> Answer {
        Answer { id: id.into(), question_id: qid.into(), text: text.into(), label: Label::Unknown, source: "test".into() }
    }

    #[test]
    fn well_formed_records_pass_through() {
        let mut raw = RawDataset::default();
        for q in ["q-1", "q-2"] {
            raw.questions.push(question(q, "some question?"));
            for i in 0..3 {
                raw.answers.push(answer(&format!("{q}-a{i}"), q, "text"));
            }
        }
        let ds = validate_dataset(raw).unwrap();
        assert_eq!(ds.questions.len(), 2);
        assert_eq!(ds.answer_count(), 6);
        assert_eq!(ds.answers_for("q-2").len(), 3);
    }

    #[test]
    fn dangling_answer_is_named() {
        let raw = RawDataset {
            questions: vec![question("q-1", "why?")],
            answers: vec![answer("a-7", "q-404", "because")],
            metadata: BTreeMap::new(),
        };
        match validate_dataset(raw) {
            Err(DatasetError::Invalid(issues)) => {
                assert_eq!(issues, vec![DatasetIssue::DanglingAnswer("a-7".into())])
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn every_violation_is_reported() {
        let raw = RawDataset {
            questions: vec![question("q-1", "ok?"), question("q-3", "  "), question("q-1", "again?")],
            answers: vec![answer("a-1", "q-1", ""), answer("a-7", "q-9", "x")],
            metadata: BTreeMap::new(),
        };
        let Err(DatasetError::Invalid(issues)) = validate_dataset(raw) else {
            panic!("expected invalid");
        };
        assert!(issues.contains(&DatasetIssue::EmptyText("q-3".into())));
        assert!(issues.contains(&DatasetIssue::DuplicateQuestionId("q-1".into())));
        assert!(issues.contains(&DatasetIssue::EmptyText("a-1".into())));
        assert!(issues.contains(&DatasetIssue::DanglingAnswer("a-7".into())));
        assert_eq!(issues.len(), 4);
    }

    #[test]
    fn jsonl_labels_and_nulls() {
        let text = r#"{"id":"q1","question":"Capital of France?","answers":[{"id":"a1","text":"Paris","label":"non_hallu","source":"gold"},{"id":"a2","text":"Lyon","label":null,"source":"m"},{"id":"a3","text":"Rome","label":"bad","source":"m"}]}

{"id":"q2","question":"2+2?","answers":[]}
"#;
        let ds = validate_dataset(parse_jsonl(text.as_bytes()).unwrap()).unwrap();
        let labels: Vec<_> = ds.answers_for("q1").iter().map(|a| a.label).collect();
        assert_eq!(labels, vec![Label::NonHallu, Label::Unknown, Label::Hallu]);
        assert!(ds.answers_for("q2").is_empty());
        let again = validate_dataset(parse_jsonl(to_jsonl(&ds).as_bytes()).unwrap()).unwrap();
        assert_eq!(again, ds);
    }

    #[test]
    fn parse_error_carries_line_number() {
        let text = "{\"id\":\"q1\",\"question\":\"x\"}\nnot json\n";
        match parse_jsonl(text.as_bytes()) {
            Err(DatasetError::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }
}
