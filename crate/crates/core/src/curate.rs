//! Label-free data curation from score tables: few-shot example selection,
//! fine-tuning exports and pairwise judging prompts.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::providers::prompt::{icl_prompt, judge_prompt};
use crate::ranking::ScoreTable;
use crate::similarity::{EmbeddingVector, QuestionIndex, SimilarityError};
use crate::types::QADataset;

pub const DEFAULT_ICL_EXAMPLES: usize = 5;
pub const DEFAULT_TRAIN_FRACTION: f64 = 0.8;

#[derive(Debug, thiserror::Error)]
pub enum CurateError {
    #[error("question {question_id} has no {column:?} scores")]
    CoverageGap { question_id: String, column: String },
    #[error("answer {0} is not in the dataset")]
    UnknownAnswer(String),
    #[error("train fraction must lie in [0, 1], got {0}")]
    InvalidFraction(f64),
    #[error("question {0} has no embedding")]
    MissingEmbedding(String),
    #[error(transparent)]
    Similarity(#[from] SimilarityError),
}

/// One score column of one table.
#[derive(Debug, Clone, Copy)]
pub struct ScoreColumn<'a> {
    pub table: &'a ScoreTable,
    pub column: &'a str,
}

impl<'a> ScoreColumn<'a> {
    pub fn new(table: &'a ScoreTable, column: &'a str) -> Self {
        Self { table, column }
    }

    /// Top answer id per dataset question; every question must be covered.
    pub fn top_answers(&self, dataset: &QADataset) -> Result<BTreeMap<String, String>, CurateError> {
        let best = self.table.argmax_answers(self.column);
        for q in &dataset.questions {
            if !best.contains_key(&q.id) {
                return Err(CurateError::CoverageGap { question_id: q.id.clone(), column: self.column.to_string() });
            }
        }
        Ok(best)
    }
}

fn answer_text<'d>(dataset: &'d QADataset, question_id: &str, answer_id: &str) -> Result<&'d str, CurateError> {
    dataset
        .answers_for(question_id)
        .iter()
        .find(|a| a.id == answer_id)
        .map(|a| a.text.as_str())
        .ok_or_else(|| CurateError::UnknownAnswer(answer_id.to_string()))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IclCandidate {
    pub question_id: String,
    pub fewl_answer_id: String,
    pub baseline_answer_id: String,
}

/// Questions whose top answer differs between the two columns, in dataset order.
pub fn icl_pool(dataset: &QADataset, fewl: ScoreColumn<'_>, baseline: ScoreColumn<'_>) -> Result<Vec<IclCandidate>, CurateError> {
    let (f, b) = (fewl.top_answers(dataset)?, baseline.top_answers(dataset)?);
    Ok(dataset
        .questions
        .iter()
        .filter(|q| f[&q.id] != b[&q.id])
        .map(|q| IclCandidate { question_id: q.id.clone(), fewl_answer_id: f[&q.id].clone(), baseline_answer_id: b[&q.id].clone() })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IclPrompt {
    pub question_id: String,
    /// Pool questions used as examples, nearest first.
    pub example_ids: Vec<String>,
    pub prompt: String,
}

/// For each dataset question, a few-shot prompt built from its `n_examples`
/// most similar pool questions (excluding itself) and their top-FEWL answers.
pub fn icl_prompts(
    dataset: &QADataset,
    pool: &[IclCandidate],
    embeddings: &BTreeMap<String, EmbeddingVector>,
    n_examples: usize,
) -> Result<Vec<IclPrompt>, CurateError> {
    let embedding = |id: &str| embeddings.get(id).ok_or_else(|| CurateError::MissingEmbedding(id.to_string()));
    let indexed =
        pool.iter().map(|c| Ok((c.question_id.clone(), embedding(&c.question_id)?.clone()))).collect::<Result<Vec<_>, CurateError>>()?;
    let index = QuestionIndex::build(indexed)?;
    let chosen: BTreeMap<&str, &str> = pool.iter().map(|c| (c.question_id.as_str(), c.fewl_answer_id.as_str())).collect();
    let mut out = Vec::with_capacity(dataset.questions.len());
    for q in &dataset.questions {
        let example_ids: Vec<String> = if n_examples == 0 || index.is_empty() {
            Vec::new()
        } else {
            index.neighbors_of(embedding(&q.id)?, &q.id, Some(&q.id), n_examples, -1.0, 1.0)?.ids().map(str::to_string).collect()
        };
        let examples = example_ids
            .iter()
            .map(|id| {
                let question = dataset.question(id).map(|x| x.text.clone()).unwrap_or_default();
                Ok((question, answer_text(dataset, id, chosen[id.as_str()])?.to_string()))
            })
            .collect::<Result<Vec<_>, CurateError>>()?;
        out.push(IclPrompt { question_id: q.id.clone(), example_ids, prompt: icl_prompt(&examples, &q.text) });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SftRecord {
    pub prompt: String,
    pub completion: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SftSplit {
    pub train: Vec<SftRecord>,
    pub test: Vec<SftRecord>,
}

fn to_jsonl(records: &[SftRecord]) -> String {
    records.iter().map(|r| serde_json::to_string(r).expect("serializable") + "\n").collect()
}

impl SftSplit {
    pub fn train_jsonl(&self) -> String {
        to_jsonl(&self.train)
    }

    pub fn test_jsonl(&self) -> String {
        to_jsonl(&self.test)
    }
}

/// Question → top-FEWL answer pairs, shuffled with `seed` and split so the
/// train side holds `round(train_fraction · n)` records.
pub fn sft_split(dataset: &QADataset, fewl: ScoreColumn<'_>, train_fraction: f64, seed: u64) -> Result<SftSplit, CurateError> {
    if !(0.0..=1.0).contains(&train_fraction) {
        return Err(CurateError::InvalidFraction(train_fraction));
    }
    let top = fewl.top_answers(dataset)?;
    let mut records = dataset
        .questions
        .iter()
        .map(|q| Ok(SftRecord { prompt: q.text.clone(), completion: answer_text(dataset, &q.id, &top[&q.id])?.to_string() }))
        .collect::<Result<Vec<_>, CurateError>>()?;
    records.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = (train_fraction * records.len() as f64).round() as usize;
    let test = records.split_off(n_train);
    Ok(SftSplit { train: records, test })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JudgePrompt {
    pub question_id: String,
    /// Option A: the top-FEWL answer.
    pub answer_a_id: String,
    /// Option B: the top-baseline answer.
    pub answer_b_id: String,
    pub prompt: String,
}

/// Judging prompts for every pool question.
pub fn judge_prompts(dataset: &QADataset, pool: &[IclCandidate]) -> Result<Vec<JudgePrompt>, CurateError> {
    pool.iter()
        .map(|c| {
            let question = dataset.question(&c.question_id).map(|q| q.text.as_str()).unwrap_or_default();
            let a = answer_text(dataset, &c.question_id, &c.fewl_answer_id)?;
            let b = answer_text(dataset, &c.question_id, &c.baseline_answer_id)?;
            Ok(JudgePrompt {
                question_id: c.question_id.clone(),
                answer_a_id: c.fewl_answer_id.clone(),
                answer_b_id: c.baseline_answer_id.clone(),
                prompt: judge_prompt(question, a, b),
            })
        })
        .collect()
}
