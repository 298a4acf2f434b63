//! Acquisition: reference answers, contrastive pairs, embeddings and
//! neighbor sets for every question, gathered once and shared by all
//! scoring cells.

use std::collections::BTreeMap;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::digest::derive_seed;
use crate::providers::{ParseWarning, ProviderClient};
use crate::scoring::{ideal_raw_expertise, raw_expertise, PenaltySource, QuestionEvidence, ReferenceEvidence, ScoringConfig};
use crate::similarity::{Embedder, EmbeddingVector, NeighborSet, QuestionIndex};
use crate::types::{Label, QADataset, Question};

/// A question dropped from a run, with the step that failed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkipRecord {
    pub question_id: String,
    pub stage: String,
    pub reason: String,
}

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("{0}")]
    Config(String),
    #[error("worker pool: {0}")]
    Pool(String),
    #[error("neighbor search: {0}")]
    Index(#[from] crate::similarity::SimilarityError),
}

/// The models a run talks to.
pub struct Providers {
    pub embedder: Arc<dyn Embedder>,
    pub generator: ProviderClient,
    pub references: Vec<ProviderClient>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AcquireOptions {
    pub max_concurrency: usize,
    pub seed: u64,
}

impl Default for AcquireOptions {
    fn default() -> Self {
        Self { max_concurrency: 8, seed: 1 }
    }
}

#[derive(Debug, Clone)]
struct Acquired {
    question: EmbeddingVector,
    reference_answers: Vec<(String, EmbeddingVector)>,
    samples: Vec<(String, EmbeddingVector)>,
    raw: Vec<f64>,
    ideal: Vec<Option<f64>>,
    answers: BTreeMap<String, EmbeddingVector>,
    pair_warning: Option<ParseWarning>,
}

/// Everything scoring needs, keyed by question id.
#[derive(Debug, Clone)]
pub struct ReferenceBank {
    reference_ids: Vec<String>,
    sample_reference: Option<String>,
    acquired: BTreeMap<String, Acquired>,
    neighbors: BTreeMap<String, NeighborSet>,
    skips: Vec<SkipRecord>,
}

struct Failure {
    stage: String,
    reason: String,
}

fn fail(stage: impl Into<String>) -> impl FnOnce(String) -> Failure {
    let stage = stage.into();
    move |reason| Failure { stage, reason }
}

struct Job<'a> {
    providers: &'a Providers,
    config: &'a ScoringConfig,
    sampler: Option<(usize, usize)>,
}

impl Job<'_> {
    fn embed(&self, text: &str) -> Result<EmbeddingVector, Failure> {
        self.providers.embedder.embed(text).map_err(|e| fail("embedding")(e.to_string()))
    }

    fn run(&self, dataset: &QADataset, q: &Question) -> Result<Acquired, Failure> {
        let question = self.embed(&q.text)?;
        let mut reference_answers = Vec::with_capacity(self.providers.references.len());
        for client in &self.providers.references {
            let text = client.answer(q).map_err(|e| fail(format!("answer:{}", client.id()))(e.to_string()))?;
            let emb = self.embed(&text)?;
            reference_answers.push((text, emb));
        }
        let mut samples = Vec::new();
        if let Some((i, n)) = self.sampler {
            let client = &self.providers.references[i];
            for text in client.sample_answers(q, n).map_err(|e| fail(format!("samples:{}", client.id()))(e.to_string()))? {
                let emb = self.embed(&text)?;
                samples.push((text, emb));
            }
        }
        let parsed =
            self.providers.generator.generate_contrastive(q, self.config.n_contrastive).map_err(|e| fail("contrastive")(e.to_string()))?;
        let iw = parsed.pairs.iter().map(|p| self.embed(&p.iw_text)).collect::<Result<Vec<_>, _>>()?;
        let co = parsed.pairs.iter().map(|p| self.embed(&p.co_text)).collect::<Result<Vec<_>, _>>()?;
        let raw = reference_answers
            .iter()
            .map(|(_, emb)| raw_expertise(emb, &iw, &co).map_err(|e| fail("expertise")(e.to_string())))
            .collect::<Result<Vec<_>, _>>()?;

        let mut answers = BTreeMap::new();
        for a in dataset.answers_for(&q.id) {
            answers.insert(a.id.clone(), self.embed(&a.text)?);
        }
        let labeled = |label: Label| -> Vec<EmbeddingVector> {
            dataset.answers_for(&q.id).iter().filter(|a| a.label == label).map(|a| answers[&a.id].clone()).collect()
        };
        let ideal = if self.config.needs_labels() {
            let (good, bad) = (labeled(Label::NonHallu), labeled(Label::Hallu));
            reference_answers.iter().map(|(_, emb)| ideal_raw_expertise(emb, &good, &bad).ok()).collect()
        } else {
            vec![None; reference_answers.len()]
        };
        Ok(Acquired { question, reference_answers, samples, raw, ideal, answers, pair_warning: parsed.warning })
    }
}

impl ReferenceBank {
    /// Queries every provider for every question. Per-question failures are
    /// recorded as skips; only configuration problems abort.
    pub fn acquire(
        dataset: &QADataset,
        providers: &Providers,
        config: &ScoringConfig,
        options: AcquireOptions,
    ) -> Result<Self, PipelineError> {
        if providers.references.is_empty() {
            return Err(PipelineError::Config("at least one reference model is required".into()));
        }
        let reference_ids: Vec<String> = providers.references.iter().map(|r| r.id().to_string()).collect();
        let single = match &config.single_reference {
            Some(id) => reference_ids
                .iter()
                .position(|r| r == id)
                .ok_or_else(|| PipelineError::Config(format!("unknown single_reference {id:?}")))?,
            None => 0,
        };
        let sampler = if config.needs_samples() {
            let n = providers.references[single].config().sample_count().ok_or_else(|| {
                PipelineError::Config(format!("multi-sample scoring needs `samples` > 1 on reference {:?}", reference_ids[single]))
            })?;
            Some((single, n))
        } else {
            None
        };

        let job = Job { providers, config, sampler };
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(options.max_concurrency.max(1))
            .build()
            .map_err(|e| PipelineError::Pool(e.to_string()))?;
        let results: Vec<Result<Acquired, Failure>> = pool.install(|| dataset.questions.par_iter().map(|q| job.run(dataset, q)).collect());

        let mut acquired = BTreeMap::new();
        let mut order = Vec::new();
        let mut skips = Vec::new();
        for (q, result) in dataset.questions.iter().zip(results) {
            match result {
                Ok(a) => {
                    order.push((q.id.clone(), a.question.clone()));
                    acquired.insert(q.id.clone(), a);
                }
                Err(f) => skips.push(SkipRecord { question_id: q.id.clone(), stage: f.stage, reason: f.reason }),
            }
        }

        let index = QuestionIndex::build(order.clone())?;
        let mut neighbors = BTreeMap::new();
        for (position, (id, _)) in order.iter().enumerate() {
            let set = match config.penalty_source {
                PenaltySource::Knn => index.neighbors(id, config.n_neighbors, config.neighbor_bounds.lo, config.neighbor_bounds.hi)?,
                PenaltySource::RandomPool => {
                    index.random_pool(id, config.random_pool_count, config.random_pool_hi, derive_seed(options.seed, position as u64))?
                }
            };
            neighbors.insert(id.clone(), set);
        }

        Ok(Self { sample_reference: sampler.map(|(i, _)| reference_ids[i].clone()), reference_ids, acquired, neighbors, skips })
    }

    pub fn reference_ids(&self) -> &[String] {
        &self.reference_ids
    }

    pub fn skips(&self) -> &[SkipRecord] {
        &self.skips
    }

    pub fn contains(&self, question_id: &str) -> bool {
        self.acquired.contains_key(question_id)
    }

    pub fn neighbors(&self, question_id: &str) -> Option<&NeighborSet> {
        self.neighbors.get(question_id)
    }

    pub fn answer_embedding(&self, question_id: &str, answer_id: &str) -> Option<&EmbeddingVector> {
        self.acquired.get(question_id)?.answers.get(answer_id)
    }

    pub fn question_embedding(&self, question_id: &str) -> Option<&EmbeddingVector> {
        self.acquired.get(question_id).map(|a| &a.question)
    }

    /// Reference `i`'s answer text for a question.
    pub fn reference_answer(&self, question_id: &str, i: usize) -> Option<&str> {
        self.acquired.get(question_id)?.reference_answers.get(i).map(|(t, _)| t.as_str())
    }

    pub fn raw_expertise(&self, question_id: &str) -> Option<&[f64]> {
        self.acquired.get(question_id).map(|a| a.raw.as_slice())
    }

    pub fn parse_warning(&self, question_id: &str) -> Option<ParseWarning> {
        self.acquired.get(question_id)?.pair_warning
    }

    /// Scoring inputs for one question, with neighbor answers drawn from the
    /// same reference (or the same sample slot).
    pub fn evidence(&self, question_id: &str) -> Option<QuestionEvidence> {
        let a = self.acquired.get(question_id)?;
        let neighbor_ids: Vec<&str> = self.neighbors.get(question_id).map(|n| n.ids().collect()).unwrap_or_default();
        let neighbors: Vec<&Acquired> = neighbor_ids.iter().filter_map(|id| self.acquired.get(*id)).collect();
        let references = a
            .reference_answers
            .iter()
            .enumerate()
            .map(|(i, (_, emb))| ReferenceEvidence {
                reference_id: self.reference_ids[i].clone(),
                answer: emb.clone(),
                raw_expertise: a.raw[i],
                ideal_expertise: a.ideal[i],
                neighbor_answers: neighbors.iter().map(|n| n.reference_answers[i].1.clone()).collect(),
            })
            .collect();
        let base = self.sample_reference.as_deref().unwrap_or_default();
        let samples = a
            .samples
            .iter()
            .enumerate()
            .map(|(j, (_, emb))| ReferenceEvidence {
                reference_id: format!("{base}#{}", j + 1),
                answer: emb.clone(),
                raw_expertise: 0.0,
                ideal_expertise: None,
                neighbor_answers: neighbors.iter().filter_map(|n| n.samples.get(j).map(|s| s.1.clone())).collect(),
            })
            .collect();
        Some(QuestionEvidence { references, samples })
    }
}
