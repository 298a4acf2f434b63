use std::cmp::{Ordering, Reverse};
use std::collections::{BinaryHeap, HashMap};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{cosine, EmbeddingVector, SimilarityError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeighborEntry {
    pub question_id: String,
    pub similarity: f64,
}

/// Similarity window of a neighbor query: `[lo, hi)`, or `[lo, hi]` when
/// `hi_inclusive` is set (random pools use "no more than").
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NeighborBounds {
    pub lo: f64,
    pub hi: f64,
    #[serde(default)]
    pub hi_inclusive: bool,
}

impl NeighborBounds {
    pub fn half_open(lo: f64, hi: f64) -> Self {
        Self { lo, hi, hi_inclusive: false }
    }

    pub fn contains(&self, s: f64) -> bool {
        s >= self.lo && (s < self.hi || (self.hi_inclusive && s == self.hi))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeighborSet {
    pub query_id: String,
    pub entries: Vec<NeighborEntry>,
    pub bounds: NeighborBounds,
}

impl NeighborSet {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.question_id.as_str())
    }
}

/// Immutable exact index over question embeddings.
#[derive(Debug, Clone, Default)]
pub struct QuestionIndex {
    ids: Vec<String>,
    vectors: Vec<EmbeddingVector>,
    positions: HashMap<String, usize>,
}

/// Candidate ordered so that `a > b` means `a` ranks ahead of `b`:
/// higher similarity first, then lexicographically smaller id.
struct Ranked<'a> {
    similarity: f64,
    id: &'a str,
}

impl Ord for Ranked<'_> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.similarity.total_cmp(&other.similarity).then_with(|| other.id.cmp(self.id))
    }
}

impl PartialOrd for Ranked<'_> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl PartialEq for Ranked<'_> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Ranked<'_> {}

fn sort_entries(entries: &mut [NeighborEntry]) {
    entries.sort_by(|a, b| b.similarity.total_cmp(&a.similarity).then_with(|| a.question_id.cmp(&b.question_id)));
}

impl QuestionIndex {
    pub fn build(questions: Vec<(String, EmbeddingVector)>) -> Result<Self, SimilarityError> {
        let mut index = QuestionIndex::default();
        for (id, v) in questions {
            if let Some(first) = index.vectors.first() {
                if first.dim() != v.dim() {
                    return Err(SimilarityError::DimensionMismatch(first.dim(), v.dim()));
                }
            }
            if index.positions.insert(id.clone(), index.ids.len()).is_some() {
                return Err(SimilarityError::DuplicateId(id));
            }
            index.ids.push(id);
            index.vectors.push(v);
        }
        Ok(index)
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn contains(&self, id: &str) -> bool {
        self.positions.contains_key(id)
    }

    pub fn embedding(&self, id: &str) -> Option<&EmbeddingVector> {
        self.positions.get(id).map(|&i| &self.vectors[i])
    }

    fn similarities<'a>(
        &'a self,
        query: &'a EmbeddingVector,
        exclude: Option<&'a str>,
    ) -> impl Iterator<Item = Result<(usize, f64), SimilarityError>> + 'a {
        self.vectors
            .iter()
            .enumerate()
            .filter(move |(i, _)| Some(self.ids[*i].as_str()) != exclude)
            .map(move |(i, v)| cosine(query, v).map(|s| (i, s)))
    }

    fn query_vector(&self, query_id: &str) -> Result<&EmbeddingVector, SimilarityError> {
        self.embedding(query_id).ok_or_else(|| SimilarityError::UnknownQuery(query_id.to_string()))
    }

    /// Top-`k` indexed questions with similarity inside `[lo, hi)`, excluding the query.
    pub fn neighbors(&self, query_id: &str, k: usize, lo: f64, hi: f64) -> Result<NeighborSet, SimilarityError> {
        let query = self.query_vector(query_id)?;
        self.neighbors_of(query, query_id, Some(query_id), k, lo, hi)
    }

    /// Neighbor search for an arbitrary vector; `exclude` drops one indexed id.
    pub fn neighbors_of(
        &self,
        query: &EmbeddingVector,
        query_id: &str,
        exclude: Option<&str>,
        k: usize,
        lo: f64,
        hi: f64,
    ) -> Result<NeighborSet, SimilarityError> {
        if k == 0 {
            return Err(SimilarityError::InvalidQuery("k must be positive".into()));
        }
        if !(-1.0..=1.0).contains(&lo) || !(-1.0..=1.0).contains(&hi) || lo >= hi {
            return Err(SimilarityError::InvalidQuery(format!("bounds must satisfy -1 <= lo < hi <= 1, got [{lo}, {hi})")));
        }
        let bounds = NeighborBounds::half_open(lo, hi);
        // Min-heap of the best k seen so far; its top is the weakest kept candidate.
        let mut heap: BinaryHeap<Reverse<Ranked<'_>>> = BinaryHeap::with_capacity(k + 1);
        for item in self.similarities(query, exclude) {
            let (i, s) = item?;
            if !bounds.contains(s) {
                continue;
            }
            let cand = Ranked { similarity: s, id: &self.ids[i] };
            if heap.len() < k {
                heap.push(Reverse(cand));
            } else if heap.peek().is_some_and(|Reverse(worst)| cand > *worst) {
                heap.pop();
                heap.push(Reverse(cand));
            }
        }
        let mut entries: Vec<NeighborEntry> =
            heap.into_iter().map(|Reverse(r)| NeighborEntry { question_id: r.id.to_string(), similarity: r.similarity }).collect();
        sort_entries(&mut entries);
        Ok(NeighborSet { query_id: query_id.to_string(), entries, bounds })
    }

    /// Seeded uniform sample (without replacement) of up to `count` questions
    /// whose similarity to the query is at most `hi`.
    pub fn random_pool(&self, query_id: &str, count: usize, hi: f64, seed: u64) -> Result<NeighborSet, SimilarityError> {
        if !(-1.0..=1.0).contains(&hi) {
            return Err(SimilarityError::InvalidQuery(format!("hi must lie in [-1, 1], got {hi}")));
        }
        let query = self.query_vector(query_id)?;
        let bounds = NeighborBounds { lo: -1.0, hi, hi_inclusive: true };
        let mut eligible = Vec::new();
        for item in self.similarities(query, Some(query_id)) {
            let (i, s) = item?;
            if bounds.contains(s) {
                eligible.push(NeighborEntry { question_id: self.ids[i].clone(), similarity: s });
            }
        }
        let take = count.min(eligible.len());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let picked = rand::seq::index::sample(&mut rng, eligible.len(), take);
        let mut entries: Vec<NeighborEntry> = picked.into_iter().map(|i| eligible[i].clone()).collect();
        sort_entries(&mut entries);
        Ok(NeighborSet { query_id: query_id.to_string(), entries, bounds })
    }
}
