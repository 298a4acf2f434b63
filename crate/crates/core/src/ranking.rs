//! Score tables over a dataset and the reports built from them.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::pipeline::{ReferenceBank, SkipRecord};
use crate::scoring::{baseline_score, ScoringConfig};
use crate::similarity::{cosine, EmbeddingVector, SimilarityError};
use crate::types::{FewlScore, Label, QADataset};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RankingError {
    #[error("no question has a non-hallucinated answer next to a half-hallucinated or hallucinated one")]
    NoLabeledPairs,
    #[error("score tables were produced under different configs ({0} vs {1})")]
    ConfigMismatch(String, String),
    #[error("score tables cover different question sets")]
    QuestionSetMismatch,
    #[error("reference answer set is empty")]
    EmptyReferenceSet,
    #[error("every oracle comparison is a tie")]
    DenominatorZero,
    #[error(transparent)]
    Similarity(#[from] SimilarityError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub question_id: String,
    pub answer_id: String,
    pub label: Label,
    pub score: FewlScore,
    /// Ablation column -> value; `None` when that cell could not be computed.
    pub baseline_scores: BTreeMap<String, Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreTable {
    pub config_digest: String,
    /// Ablation columns, in output order.
    pub columns: Vec<String>,
    pub rows: Vec<ScoreRow>,
    #[serde(default)]
    pub skips: Vec<SkipRecord>,
}

impl ScoreTable {
    pub fn question_ids(&self) -> BTreeSet<&str> {
        self.rows.iter().map(|r| r.question_id.as_str()).collect()
    }

    pub fn mean_fewl(&self) -> f64 {
        if self.rows.is_empty() {
            return 0.0;
        }
        self.rows.iter().map(|r| r.score.value).sum::<f64>() / self.rows.len() as f64
    }

    /// Value of `column` ("fewl" or an ablation) for a row.
    pub fn value(row: &ScoreRow, column: &str) -> Option<f64> {
        if column == "fewl" {
            Some(row.score.value)
        } else {
            row.baseline_scores.get(column).copied().flatten()
        }
    }

    /// Highest-scoring answer per question under `column`; ties go to the earlier answer.
    pub fn argmax_answers(&self, column: &str) -> BTreeMap<String, String> {
        let mut best: BTreeMap<String, (String, f64)> = BTreeMap::new();
        for row in &self.rows {
            let Some(v) = Self::value(row, column) else { continue };
            match best.get(&row.question_id) {
                Some((_, b)) if *b >= v => {}
                _ => {
                    best.insert(row.question_id.clone(), (row.answer_id.clone(), v));
                }
            }
        }
        best.into_iter().map(|(q, (a, _))| (q, a)).collect()
    }

    pub fn to_csv(&self, manifest_digest: Option<&str>) -> String {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        let mut header = vec!["question_id", "answer_id", "label", "fewl"];
        header.extend(self.columns.iter().map(String::as_str));
        if manifest_digest.is_some() {
            header.push("manifest_digest");
        }
        w.write_record(&header).expect("in-memory write");
        for row in &self.rows {
            let mut record =
                vec![row.question_id.clone(), row.answer_id.clone(), row.label.as_str().to_string(), row.score.value.to_string()];
            for c in &self.columns {
                record.push(Self::value(row, c).map(|v| v.to_string()).unwrap_or_default());
            }
            if let Some(d) = manifest_digest {
                record.push(d.to_string());
            }
            w.write_record(&record).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv is utf-8")
    }
}

/// Scores every answer of every acquired question under `config` and its ablations.
pub fn score_dataset(dataset: &QADataset, bank: &ReferenceBank, config: &ScoringConfig) -> ScoreTable {
    let cells: Vec<(String, ScoringConfig)> = config.ablations.iter().map(|a| (a.as_str().to_string(), a.apply(config))).collect();
    let per_question: Vec<Result<Vec<ScoreRow>, SkipRecord>> = dataset
        .questions
        .par_iter()
        .filter(|q| bank.contains(&q.id))
        .map(|q| {
            let skip = |reason: String| SkipRecord { question_id: q.id.clone(), stage: "scoring".into(), reason };
            let evidence = bank.evidence(&q.id).ok_or_else(|| skip("no evidence".into()))?;
            dataset
                .answers_for(&q.id)
                .iter()
                .map(|a| {
                    let y = bank.answer_embedding(&q.id, &a.id).ok_or_else(|| skip(format!("answer {} was not embedded", a.id)))?;
                    let score = baseline_score(y, &evidence, config).map_err(|e| skip(e.to_string()))?;
                    let baseline_scores =
                        cells.iter().map(|(name, cell)| (name.clone(), baseline_score(y, &evidence, cell).ok().map(|s| s.value))).collect();
                    Ok(ScoreRow { question_id: q.id.clone(), answer_id: a.id.clone(), label: a.label, score, baseline_scores })
                })
                .collect()
        })
        .collect();
    let mut rows = Vec::new();
    let mut skips = bank.skips().to_vec();
    for result in per_question {
        match result {
            Ok(r) => rows.extend(r),
            Err(s) => skips.push(s),
        }
    }
    ScoreTable { config_digest: config.digest(), columns: cells.into_iter().map(|(n, _)| n).collect(), rows, skips }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairFractions {
    pub nonhallu_beats_halfhallu: Option<f64>,
    pub nonhallu_beats_hallu: Option<f64>,
    /// Questions contributing to each fraction.
    pub n_halfhallu: usize,
    pub n_hallu: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeFractions {
    pub mode: String,
    #[serde(flatten)]
    pub fractions: PairFractions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    /// Under the main configuration.
    pub pair_counts: PairFractions,
    /// The main configuration first, then each ablation column.
    pub per_mode: Vec<ModeFractions>,
    pub n_questions: usize,
}

/// First NonHallu, HalfHallu and Hallu row of one question.
type LabeledRows<'a> = (Option<&'a ScoreRow>, Option<&'a ScoreRow>, Option<&'a ScoreRow>);

fn fractions(labeled: &[LabeledRows<'_>], column: &str) -> PairFractions {
    let rate = |hallu: bool| {
        let mut wins = 0usize;
        let mut total = 0usize;
        for entry in labeled {
            let other = if hallu { entry.2 } else { entry.1 };
            let (Some(good), Some(other)) = (entry.0, other) else { continue };
            let (Some(g), Some(o)) = (ScoreTable::value(good, column), ScoreTable::value(other, column)) else { continue };
            total += 1;
            if g > o {
                wins += 1;
            }
        }
        ((total > 0).then(|| wins as f64 / total as f64), total)
    };
    let (half, n_halfhallu) = rate(false);
    let (hallu, n_hallu) = rate(true);
    PairFractions { nonhallu_beats_halfhallu: half, nonhallu_beats_hallu: hallu, n_halfhallu, n_hallu }
}

/// Share of questions whose non-hallucinated answer strictly outscores the
/// half-hallucinated and the hallucinated one (first answer of each label).
pub fn compare_labeled(table: &ScoreTable) -> Result<ComparisonReport, RankingError> {
    let mut by_question: BTreeMap<&str, LabeledRows<'_>> = BTreeMap::new();
    for row in &table.rows {
        let slot = by_question.entry(&row.question_id).or_default();
        match row.label {
            Label::NonHallu if slot.0.is_none() => slot.0 = Some(row),
            Label::HalfHallu if slot.1.is_none() => slot.1 = Some(row),
            Label::Hallu if slot.2.is_none() => slot.2 = Some(row),
            _ => {}
        }
    }
    let labeled: Vec<_> = by_question.into_values().filter(|e| e.0.is_some() && (e.1.is_some() || e.2.is_some())).collect();
    if labeled.is_empty() {
        return Err(RankingError::NoLabeledPairs);
    }
    let per_mode: Vec<ModeFractions> = std::iter::once("fewl")
        .chain(table.columns.iter().map(String::as_str))
        .map(|mode| ModeFractions { mode: mode.to_string(), fractions: fractions(&labeled, mode) })
        .collect();
    Ok(ComparisonReport { pair_counts: per_mode[0].fractions.clone(), per_mode, n_questions: labeled.len() })
}

/// Human-readable row name for a score column.
pub fn mode_display_name(mode: &str) -> String {
    match mode {
        "fewl" => "FEWL".into(),
        "single_no_penalty" => "single + no penalty".into(),
        "single_penalty" => "single + penalty".into(),
        "multi_no_penalty" => "multi + no penalty".into(),
        "single_best_no_penalty" => "single-best + no penalty".into(),
        "fewl_no_penalty" => "FEWL w/o penalty".into(),
        "fewl_uniform" => "FEWL (uniform λ)".into(),
        "fewl_ideal" => "FEWL (ideal λ)".into(),
        other => other.into(),
    }
}

fn percent(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".into(), |v| format!("{:.2}", 100.0 * v))
}

impl ComparisonReport {
    /// Baselines first and FEWL last, one row per scoring cell.
    pub fn to_markdown(&self) -> String {
        let mut out = String::from("| Answer type | Non-hallu vs Half-hallu (%) | Non-hallu vs Hallu (%) |\n|---|---|---|\n");
        let ordered = self.per_mode.iter().skip(1).chain(self.per_mode.first());
        for m in ordered {
            let _ = writeln!(
                out,
                "| {} | {} | {} |",
                mode_display_name(&m.mode),
                percent(m.fractions.nonhallu_beats_halfhallu),
                percent(m.fractions.nonhallu_beats_hallu)
            );
        }
        out
    }

    pub fn mode(&self, mode: &str) -> Option<&PairFractions> {
        self.per_mode.iter().find(|m| m.mode == mode).map(|m| &m.fractions)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelRank {
    pub model: String,
    pub score: f64,
}

/// Models by mean FEWL, best first; equal means fall back to model id.
pub fn rank_models(tables: &BTreeMap<String, ScoreTable>) -> Result<Vec<ModelRank>, RankingError> {
    let mut iter = tables.values();
    if let Some(first) = iter.next() {
        let questions = first.question_ids();
        for t in iter {
            if t.config_digest != first.config_digest {
                return Err(RankingError::ConfigMismatch(first.config_digest.clone(), t.config_digest.clone()));
            }
            if t.question_ids() != questions {
                return Err(RankingError::QuestionSetMismatch);
            }
        }
    }
    let mut ranks: Vec<ModelRank> = tables.iter().map(|(model, t)| ModelRank { model: model.clone(), score: t.mean_fewl() }).collect();
    ranks.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.model.cmp(&b.model)));
    Ok(ranks)
}

pub fn ranking_markdown(ranks: &[ModelRank]) -> String {
    let mut out = String::from("| Model | FEWL |\n|---|---|\n");
    for r in ranks {
        let _ = writeln!(out, "| {} | {:.4} |", r.model, r.score);
    }
    out
}

fn max_sim(a: &EmbeddingVector, set: &[EmbeddingVector]) -> Result<f64, RankingError> {
    if set.is_empty() {
        return Err(RankingError::EmptyReferenceSet);
    }
    set.iter().try_fold(f64::NEG_INFINITY, |m, e| Ok(m.max(cosine(a, e)?)))
}

/// Best cosine to a known-correct answer minus best cosine to a known-incorrect one.
pub fn tqa_metric(answer: &EmbeddingVector, correct: &[EmbeddingVector], incorrect: &[EmbeddingVector]) -> Result<f64, RankingError> {
    Ok(max_sim(answer, correct)? - max_sim(answer, incorrect)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Winner {
    First,
    Second,
    Tie,
}

impl Winner {
    pub fn of(first: f64, second: f64) -> Self {
        if first > second {
            Winner::First
        } else if second > first {
            Winner::Second
        } else {
            Winner::Tie
        }
    }
}

/// Per-question winner between two single-answer-per-question tables.
pub fn pairwise_winners(first: &ScoreTable, second: &ScoreTable) -> Result<BTreeMap<String, Winner>, RankingError> {
    let means = |t: &ScoreTable| {
        let mut acc: BTreeMap<String, (f64, usize)> = BTreeMap::new();
        for r in &t.rows {
            let e = acc.entry(r.question_id.clone()).or_default();
            e.0 += r.score.value;
            e.1 += 1;
        }
        acc.into_iter().map(|(q, (s, n))| (q, s / n as f64)).collect::<BTreeMap<_, _>>()
    };
    let (a, b) = (means(first), means(second));
    if !a.keys().eq(b.keys()) {
        return Err(RankingError::QuestionSetMismatch);
    }
    Ok(a.into_iter()
        .map(|(q, s)| {
            let w = Winner::of(s, b[&q]);
            (q, w)
        })
        .collect())
}

/// Share of non-tied oracle comparisons the metric gets right.
pub fn pairwise_agreement(metric: &BTreeMap<String, Winner>, oracle: &BTreeMap<String, Winner>) -> Result<f64, RankingError> {
    if !metric.keys().eq(oracle.keys()) {
        return Err(RankingError::QuestionSetMismatch);
    }
    let decided: Vec<_> = oracle.iter().filter(|(_, w)| **w != Winner::Tie).collect();
    if decided.is_empty() {
        return Err(RankingError::DenominatorZero);
    }
    let agree = decided.iter().filter(|(q, w)| metric[*q] == **w).count();
    Ok(agree as f64 / decided.len() as f64)
}
