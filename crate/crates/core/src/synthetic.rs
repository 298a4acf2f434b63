//! Seeded synthetic corpora with known structure, for end-to-end checks
//! without live models.
//!
//! Every topic has a generic misconception shared by its questions. Each
//! question has a specific fact. Labeled answers are built from those pieces:
//! the non-hallucinated answer states the fact, the hallucinated one repeats
//! the topic misconception plus a question-specific wrong detail. On "lazy"
//! questions the reference models answer with the misconception instead of
//! the fact, which is what the laziness penalty exists to catch.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::pipeline::Providers;
use crate::providers::prompt::{render_contrastive_reply, render_sampled_reply};
use crate::providers::{MockResponses, ProviderClient};
use crate::similarity::MockEmbedder;
use crate::types::{Answer, ContrastivePair, Label, QADataset, Question};

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub topics: usize,
    pub per_topic: usize,
    /// Questions per topic on which the references give the generic answer.
    pub lazy_per_topic: usize,
    pub references: usize,
    /// Append a reference that echoes each question's wrong detail.
    pub degraded_reference: bool,
    pub contrastive_pairs: usize,
    /// Sampled answers per question for the first reference (0 disables).
    pub samples: usize,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            topics: 10,
            per_topic: 5,
            lazy_per_topic: 2,
            references: 3,
            degraded_reference: false,
            contrastive_pairs: 5,
            samples: 3,
            seed: 2024,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub dataset: QADataset,
    pub generator: MockResponses,
    /// `(reference id, canned responses)` in reference order.
    pub references: Vec<(String, MockResponses)>,
    pub lazy: BTreeSet<String>,
    /// Per question: the first corrected and first wrong pair texts.
    pub first_pairs: BTreeMap<String, ContrastivePair>,
}

const CONSONANTS: &[u8] = b"bcdfghjklmnprstvwxz";
const VOWELS: &[u8] = b"aeiou";

fn word(rng: &mut impl Rng) -> String {
    let len = rng.random_range(5..=8);
    (0..len)
        .map(|i| {
            let set = if i % 2 == 0 { CONSONANTS } else { VOWELS };
            set[rng.random_range(0..set.len())] as char
        })
        .collect()
}

fn words(rng: &mut impl Rng, n: usize) -> Vec<String> {
    (0..n).map(|_| word(rng)).collect()
}

fn sentence(parts: &[&[String]]) -> String {
    let joined: Vec<&str> = parts.iter().flat_map(|p| p.iter().map(String::as_str)).collect();
    let mut s = joined.join(" ");
    s.push('.');
    s
}

impl SyntheticSpec {
    pub fn reference_ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = (1..=self.references).map(|i| format!("ref{i}")).collect();
        if self.degraded_reference {
            ids.push("degraded".into());
        }
        ids
    }

    pub fn build(&self) -> SyntheticCorpus {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let ids = self.reference_ids();
        let mut questions = Vec::new();
        let mut answers = BTreeMap::new();
        let mut generator = MockResponses::default();
        let mut references: Vec<(String, MockResponses)> = ids.iter().map(|id| (id.clone(), MockResponses::default())).collect();
        let mut lazy = BTreeSet::new();
        let mut first_pairs = BTreeMap::new();

        for t in 0..self.topics {
            let topic = words(&mut rng, 2);
            let misconception = words(&mut rng, 7);
            for j in 0..self.per_topic {
                let qid = format!("t{t:02}q{j}");
                let fact = words(&mut rng, 7);
                let detail = words(&mut rng, 3);
                let text = format!("{} {}?", topic.join(" "), words(&mut rng, 3).join(" "));
                questions.push(Question { id: qid.clone(), text, topic_hint: Some(format!("topic{t:02}")) });

                let good = sentence(&[&fact]);
                let bad = sentence(&[&misconception, &detail]);
                let half = sentence(&[&fact[..3], &misconception[..3]]);
                let mk = |suffix: &str, text: String, label: Label| Answer {
                    id: format!("{qid}-{suffix}"),
                    question_id: qid.clone(),
                    text,
                    label,
                    source: "synthetic".into(),
                };
                answers
                    .insert(qid.clone(), vec![mk("a", good, Label::NonHallu), mk("b", half, Label::HalfHallu), mk("c", bad, Label::Hallu)]);

                let mut pairs = vec![ContrastivePair::new(
                    sentence(&[&misconception, &detail, &words(&mut rng, 1)]),
                    sentence(&[&fact, &words(&mut rng, 1)]),
                    1,
                )
                .expect("non-empty")];
                for k in 2..=self.contrastive_pairs {
                    pairs.push(
                        ContrastivePair::new(sentence(&[&words(&mut rng, 5)]), sentence(&[&words(&mut rng, 5)]), k).expect("non-empty"),
                    );
                }
                first_pairs.insert(qid.clone(), pairs[0].clone());
                generator.contrastive.insert(qid.clone(), render_contrastive_reply(&pairs));

                let is_lazy = j >= self.per_topic - self.lazy_per_topic.min(self.per_topic);
                if is_lazy {
                    lazy.insert(qid.clone());
                }
                for (i, (id, responses)) in references.iter_mut().enumerate() {
                    let own = words(&mut rng, 1);
                    let reply = if id == "degraded" {
                        sentence(&[&detail, &own])
                    } else if is_lazy {
                        sentence(&[&misconception, &fact[..4], &own])
                    } else {
                        sentence(&[&fact, &own])
                    };
                    if i == 0 && self.samples > 1 {
                        let sampled: Vec<String> = (0..self.samples)
                            .map(|_| {
                                let extra = words(&mut rng, 1);
                                if is_lazy {
                                    sentence(&[&misconception, &fact[..4], &extra])
                                } else {
                                    sentence(&[&fact, &extra])
                                }
                            })
                            .collect();
                        responses.samples.insert(qid.clone(), render_sampled_reply(&sampled));
                    }
                    responses.answers.insert(qid.clone(), reply);
                }
            }
        }
        let dataset = QADataset { questions, answers, metadata: BTreeMap::from([("source".into(), "synthetic".into())]) };
        SyntheticCorpus { dataset, generator, references, lazy, first_pairs }
    }
}

impl SyntheticCorpus {
    /// In-memory mock providers over this corpus.
    pub fn providers(&self, dim: usize, embed_seed: u64, samples: usize) -> Providers {
        let references = self
            .references
            .iter()
            .map(|(id, r)| {
                let mut client = ProviderClient::mock(id.clone(), format!("mock-{id}"), r.clone());
                if samples > 1 && !r.samples.is_empty() {
                    client = client.with_samples(samples);
                }
                client
            })
            .collect();
        Providers {
            embedder: Arc::new(MockEmbedder { dim, seed: embed_seed }),
            generator: ProviderClient::mock("generator", "mock-generator", self.generator.clone()),
            references,
        }
    }

    /// Writes `dataset.jsonl` and one mock-response JSON per provider into `dir`.
    pub fn write_files(&self, dir: &Path) -> std::io::Result<()> {
        std::fs::create_dir_all(dir.join("mock"))?;
        std::fs::write(dir.join("dataset.jsonl"), crate::dataset::to_jsonl(&self.dataset))?;
        let dump = |r: &MockResponses| serde_json::to_string_pretty(r).expect("serializable") + "\n";
        std::fs::write(dir.join("mock").join("generator.json"), dump(&self.generator))?;
        for (id, r) in &self.references {
            std::fs::write(dir.join("mock").join(format!("{id}.json")), dump(r))?;
        }
        Ok(())
    }
}

/// Character 3-grams of lowercased text.
pub fn trigrams(text: &str) -> BTreeSet<String> {
    let chars: Vec<char> = text.to_lowercase().chars().collect();
    chars.windows(3).map(|w| w.iter().collect()).collect()
}

/// Share of `a`'s 3-grams that also occur in `b`.
pub fn trigram_overlap(a: &str, b: &str) -> f64 {
    let (ta, tb) = (trigrams(a), trigrams(b));
    if ta.is_empty() {
        return 0.0;
    }
    ta.intersection(&tb).count() as f64 / ta.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_and_determinism() {
        let spec = SyntheticSpec::default();
        let a = spec.build();
        assert_eq!(a.dataset.questions.len(), 50);
        assert_eq!(a.dataset.answer_count(), 150);
        assert_eq!(a.lazy.len(), 20);
        assert_eq!(a.references.len(), 3);
        assert_eq!(crate::dataset::to_jsonl(&a.dataset), crate::dataset::to_jsonl(&spec.build().dataset));
        let degraded = SyntheticSpec { degraded_reference: true, ..spec }.build();
        assert_eq!(degraded.references.last().unwrap().0, "degraded");
    }

    #[test]
    fn overlap_measure() {
        assert_eq!(trigram_overlap("abcd", "abcd"), 1.0);
        assert_eq!(trigram_overlap("abcd", "xyz"), 0.0);
        assert_eq!(trigram_overlap("abcd", "bcdx"), 0.5);
    }
}
