//! The FEWL combination: expertise estimation, softmax weights, laziness
//! penalty and the aggregated score, plus the ablation cells.

use serde::{Deserialize, Serialize};

use crate::digest::json_digest;
use crate::divergence::{f_star, g_star, DivergenceError, DivergenceKind};
use crate::similarity::{cosine, EmbeddingVector, SimilarityError};
use crate::types::{ExpertiseWeights, FewlScore, ReferenceTerm};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ScoringError {
    #[error("contrastive set is empty")]
    EmptyContrastiveSet,
    #[error("ideal weights need labeled non-hallucinated and hallucinated answers")]
    MissingLabels,
    #[error("no reference answers available")]
    NoReferences,
    #[error("reference {0:?} has no sampled answers")]
    MissingSamples(String),
    #[error("unknown reference {0:?}")]
    UnknownReference(String),
    #[error(transparent)]
    Divergence(#[from] DivergenceError),
    #[error(transparent)]
    Similarity(#[from] SimilarityError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PenaltySource {
    Knn,
    RandomPool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LambdaMode {
    Estimated,
    Uniform,
    Ideal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceMode {
    MultiModel,
    SingleModel,
    SingleBest,
    MultiSample,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bounds {
    pub lo: f64,
    pub hi: f64,
}

/// An extra scoring cell computed next to the main configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ablation {
    SingleNoPenalty,
    SinglePenalty,
    MultiNoPenalty,
    SingleBestNoPenalty,
    FewlNoPenalty,
    FewlUniform,
    FewlIdeal,
}

impl Ablation {
    pub const ALL: [Ablation; 7] = [
        Ablation::SingleNoPenalty,
        Ablation::SinglePenalty,
        Ablation::MultiNoPenalty,
        Ablation::SingleBestNoPenalty,
        Ablation::FewlNoPenalty,
        Ablation::FewlUniform,
        Ablation::FewlIdeal,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Ablation::SingleNoPenalty => "single_no_penalty",
            Ablation::SinglePenalty => "single_penalty",
            Ablation::MultiNoPenalty => "multi_no_penalty",
            Ablation::SingleBestNoPenalty => "single_best_no_penalty",
            Ablation::FewlNoPenalty => "fewl_no_penalty",
            Ablation::FewlUniform => "fewl_uniform",
            Ablation::FewlIdeal => "fewl_ideal",
        }
    }

    /// The base configuration with this cell's axes overridden.
    pub fn apply(self, base: &ScoringConfig) -> ScoringConfig {
        let mut c = base.clone();
        c.ablations.clear();
        let (reference_mode, lambda_mode, penalty) = match self {
            Ablation::SingleNoPenalty => (ReferenceMode::SingleModel, base.lambda_mode, false),
            Ablation::SinglePenalty => (ReferenceMode::SingleModel, base.lambda_mode, true),
            Ablation::MultiNoPenalty => (ReferenceMode::MultiSample, LambdaMode::Uniform, false),
            Ablation::SingleBestNoPenalty => (ReferenceMode::SingleBest, base.lambda_mode, false),
            Ablation::FewlNoPenalty => (ReferenceMode::MultiModel, base.lambda_mode, false),
            Ablation::FewlUniform => (ReferenceMode::MultiModel, LambdaMode::Uniform, base.penalty_enabled),
            Ablation::FewlIdeal => (ReferenceMode::MultiModel, LambdaMode::Ideal, base.penalty_enabled),
        };
        c.reference_mode = reference_mode;
        c.lambda_mode = lambda_mode;
        c.penalty_enabled = penalty;
        c
    }
}

impl std::fmt::Display for Ablation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Every key is required in the `[scoring]` table; [`Default`] carries the
/// recommended values for programmatic use.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoringConfig {
    pub divergence: DivergenceKind,
    pub n_contrastive: usize,
    pub n_neighbors: usize,
    pub neighbor_bounds: Bounds,
    pub penalty_source: PenaltySource,
    pub random_pool_count: usize,
    pub random_pool_hi: f64,
    pub temperature_tau: f64,
    pub lambda_mode: LambdaMode,
    pub reference_mode: ReferenceMode,
    pub penalty_enabled: bool,
    /// Reference used by single-model cells; the first configured one when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub single_reference: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub ablations: Vec<Ablation>,
}

impl Default for ScoringConfig {
    fn default() -> Self {
        Self {
            divergence: DivergenceKind::Tv,
            n_contrastive: 25,
            n_neighbors: 10,
            neighbor_bounds: Bounds { lo: 0.2, hi: 0.8 },
            penalty_source: PenaltySource::Knn,
            random_pool_count: 25,
            random_pool_hi: 0.8,
            temperature_tau: 1.0,
            lambda_mode: LambdaMode::Estimated,
            reference_mode: ReferenceMode::MultiModel,
            penalty_enabled: true,
            single_reference: None,
            ablations: Vec::new(),
        }
    }
}

impl ScoringConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.n_contrastive == 0 {
            return Err("scoring.n_contrastive must be positive".into());
        }
        if self.n_neighbors == 0 {
            return Err("scoring.n_neighbors must be positive".into());
        }
        let Bounds { lo, hi } = self.neighbor_bounds;
        if !(-1.0..=1.0).contains(&lo) || !(-1.0..=1.0).contains(&hi) || lo >= hi {
            return Err(format!("scoring.neighbor_bounds must satisfy -1 <= lo < hi <= 1, got [{lo}, {hi})"));
        }
        if !self.random_pool_hi.is_finite() {
            return Err("scoring.random_pool_hi must be finite".into());
        }
        if !(self.temperature_tau > 0.0 && self.temperature_tau.is_finite()) {
            return Err("scoring.temperature_tau must be positive".into());
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form.
    pub fn digest(&self) -> String {
        json_digest(self)
    }

    pub fn needs_labels(&self) -> bool {
        self.lambda_mode == LambdaMode::Ideal || self.ablations.contains(&Ablation::FewlIdeal)
    }

    pub fn needs_samples(&self) -> bool {
        self.reference_mode == ReferenceMode::MultiSample || self.ablations.contains(&Ablation::MultiNoPenalty)
    }
}

fn max_cosine(anchor: &EmbeddingVector, set: &[EmbeddingVector]) -> Result<f64, SimilarityError> {
    set.iter().try_fold(f64::NEG_INFINITY, |best, e| Ok(best.max(cosine(anchor, e)?)))
}

/// r_i(x): best cosine to a corrected answer minus best cosine to a wrong one.
pub fn raw_expertise(ref_answer: &EmbeddingVector, iw: &[EmbeddingVector], co: &[EmbeddingVector]) -> Result<f64, ScoringError> {
    if iw.is_empty() || co.is_empty() {
        return Err(ScoringError::EmptyContrastiveSet);
    }
    Ok(max_cosine(ref_answer, co)? - max_cosine(ref_answer, iw)?)
}

/// Same contrast as [`raw_expertise`] but against labeled answers.
pub fn ideal_raw_expertise(
    ref_answer: &EmbeddingVector,
    nonhallu: &[EmbeddingVector],
    hallu: &[EmbeddingVector],
) -> Result<f64, ScoringError> {
    if nonhallu.is_empty() || hallu.is_empty() {
        return Err(ScoringError::MissingLabels);
    }
    Ok(max_cosine(ref_answer, nonhallu)? - max_cosine(ref_answer, hallu)?)
}

/// Temperature softmax with max-subtraction.
pub fn lambda_weights(raw: &[f64], tau: f64) -> ExpertiseWeights {
    assert!(tau > 0.0, "temperature must be positive");
    let lambda = if raw.len() == 1 {
        vec![1.0]
    } else {
        let top = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = raw.iter().map(|r| ((r - top) / tau).exp()).collect();
        let total: f64 = exps.iter().sum();
        exps.into_iter().map(|e| e / total).collect()
    };
    ExpertiseWeights { raw: raw.to_vec(), lambda, temperature: tau }
}

pub fn uniform_weights(n: usize, tau: f64) -> ExpertiseWeights {
    ExpertiseWeights { raw: vec![0.0; n], lambda: vec![1.0 / n as f64; n], temperature: tau }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PenaltyMean {
    pub value: f64,
    /// No neighbor answers were available; the penalty degenerates to 0.
    pub empty: bool,
}

pub fn laziness_penalty_mean(y: &EmbeddingVector, neighbor_answers: &[EmbeddingVector]) -> Result<PenaltyMean, SimilarityError> {
    let sims = neighbor_answers.iter().map(|e| cosine(y, e)).collect::<Result<Vec<_>, _>>()?;
    Ok(penalty_mean_of(&sims))
}

pub fn penalty_mean_of(sims: &[f64]) -> PenaltyMean {
    if sims.is_empty() {
        return PenaltyMean { value: 0.0, empty: true };
    }
    PenaltyMean { value: sims.iter().sum::<f64>() / sims.len() as f64, empty: false }
}

/// One reference's contribution from precomputed similarities.
pub fn reference_term(
    reference_id: &str,
    lambda: f64,
    similarity: f64,
    penalty: Option<PenaltyMean>,
    kind: DivergenceKind,
) -> Result<ReferenceTerm, DivergenceError> {
    let weighted_truthfulness_term = g_star(kind, lambda * similarity);
    let (penalty_mean, penalty_term) = match penalty {
        Some(p) => (p.value, f_star(kind, g_star(kind, p.value))?),
        None => (0.0, 0.0),
    };
    Ok(ReferenceTerm { reference_id: reference_id.to_string(), similarity, lambda, weighted_truthfulness_term, penalty_mean, penalty_term })
}

/// One reference answer h_i(x) with its weight and the answers the same
/// reference gave to neighboring questions.
#[derive(Debug, Clone)]
pub struct ReferenceContext {
    pub reference_id: String,
    pub answer: EmbeddingVector,
    pub lambda: f64,
    pub neighbor_answers: Vec<EmbeddingVector>,
}

/// Scores the answer embedding `y` against weighted references.
pub fn fewl_score(y: &EmbeddingVector, refs: &[ReferenceContext], config: &ScoringConfig) -> Result<FewlScore, ScoringError> {
    if refs.is_empty() {
        return Err(ScoringError::NoReferences);
    }
    let kind = config.divergence;
    let mut empty_penalty_warning = false;
    let per_reference = refs
        .iter()
        .map(|r| {
            let similarity = cosine(y, &r.answer)?;
            let penalty = if config.penalty_enabled {
                let p = laziness_penalty_mean(y, &r.neighbor_answers)?;
                empty_penalty_warning |= p.empty;
                Some(p)
            } else {
                None
            };
            Ok(reference_term(&r.reference_id, r.lambda, similarity, penalty, kind)?)
        })
        .collect::<Result<Vec<_>, ScoringError>>()?;
    let score = FewlScore {
        value: FewlScore::recompute(&per_reference),
        per_reference,
        divergence: kind,
        config_digest: config.digest(),
        empty_penalty_warning,
    };
    assert!(score.is_consistent(), "score decomposition drifted");
    Ok(score)
}

/// Everything gathered about one reference for one question.
#[derive(Debug, Clone)]
pub struct ReferenceEvidence {
    pub reference_id: String,
    pub answer: EmbeddingVector,
    /// r_i(x) from the contrastive pairs.
    pub raw_expertise: f64,
    /// Labeled-answer contrast, when the question carries labels.
    pub ideal_expertise: Option<f64>,
    pub neighbor_answers: Vec<EmbeddingVector>,
}

/// Per-question inputs for every scoring cell.
#[derive(Debug, Clone, Default)]
pub struct QuestionEvidence {
    pub references: Vec<ReferenceEvidence>,
    /// Pseudo-references sampled from the single reference model.
    pub samples: Vec<ReferenceEvidence>,
}

impl QuestionEvidence {
    fn single_index(&self, config: &ScoringConfig) -> Result<usize, ScoringError> {
        match &config.single_reference {
            Some(id) => {
                self.references.iter().position(|r| &r.reference_id == id).ok_or_else(|| ScoringError::UnknownReference(id.clone()))
            }
            None => Ok(0),
        }
    }

    /// The weighted reference set selected by the config's reference and lambda modes.
    pub fn contexts(&self, config: &ScoringConfig) -> Result<(Vec<ReferenceContext>, ExpertiseWeights), ScoringError> {
        if self.references.is_empty() {
            return Err(ScoringError::NoReferences);
        }
        let tau = config.temperature_tau;
        let (chosen, weights): (Vec<&ReferenceEvidence>, ExpertiseWeights) = match config.reference_mode {
            ReferenceMode::MultiModel => {
                let weights = match config.lambda_mode {
                    LambdaMode::Estimated => lambda_weights(&self.references.iter().map(|r| r.raw_expertise).collect::<Vec<_>>(), tau),
                    LambdaMode::Uniform => uniform_weights(self.references.len(), tau),
                    LambdaMode::Ideal => {
                        let raw = self
                            .references
                            .iter()
                            .map(|r| r.ideal_expertise.ok_or(ScoringError::MissingLabels))
                            .collect::<Result<Vec<_>, _>>()?;
                        lambda_weights(&raw, tau)
                    }
                };
                (self.references.iter().collect(), weights)
            }
            ReferenceMode::SingleModel => {
                let i = self.single_index(config)?;
                (vec![&self.references[i]], lambda_weights(&[self.references[i].raw_expertise], tau))
            }
            ReferenceMode::SingleBest => {
                let best = self.references.iter().enumerate().fold(0, |best, (i, r)| {
                    if r.raw_expertise > self.references[best].raw_expertise {
                        i
                    } else {
                        best
                    }
                });
                (vec![&self.references[best]], lambda_weights(&[self.references[best].raw_expertise], tau))
            }
            ReferenceMode::MultiSample => {
                if self.samples.is_empty() {
                    let i = self.single_index(config)?;
                    return Err(ScoringError::MissingSamples(self.references[i].reference_id.clone()));
                }
                (self.samples.iter().collect(), uniform_weights(self.samples.len(), tau))
            }
        };
        let contexts = chosen
            .into_iter()
            .zip(&weights.lambda)
            .map(|(r, &lambda)| ReferenceContext {
                reference_id: r.reference_id.clone(),
                answer: r.answer.clone(),
                lambda,
                neighbor_answers: r.neighbor_answers.clone(),
            })
            .collect();
        Ok((contexts, weights))
    }
}

/// Score under whatever cell `config` selects (main score or an ablation).
pub fn baseline_score(y: &EmbeddingVector, evidence: &QuestionEvidence, config: &ScoringConfig) -> Result<FewlScore, ScoringError> {
    let (contexts, _) = evidence.contexts(config)?;
    fewl_score(y, &contexts, config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    // High-precision references computed independently (mpmath, 30 digits).
    const TV_EXAMPLE: f64 = 0.283_706_418_287_853_2;
    const KL_EXAMPLE: f64 = 0.472_585_068_051_273_3;
    const JS_EXAMPLE: f64 = 0.274_183_438_598_270_7;
    const TV_SINGLE: f64 = 0.358_148_935_099_512_2;

    fn unit(values: &[f64]) -> EmbeddingVector {
        EmbeddingVector::new(values.to_vec()).unwrap()
    }

    /// A unit vector with cosine `s` against e1.
    fn at(s: f64) -> EmbeddingVector {
        unit(&[s, (1.0 - s * s).max(0.0).sqrt()])
    }

    fn cfg(kind: DivergenceKind, penalty: bool) -> ScoringConfig {
        ScoringConfig { divergence: kind, penalty_enabled: penalty, ..ScoringConfig::default() }
    }

    #[test]
    fn raw_expertise_max_arithmetic() {
        let r = at(1.0);
        let co = [at(0.8), at(0.6)];
        let iw = [at(0.3), at(0.5)];
        assert!((raw_expertise(&r, &iw, &co).unwrap() - 0.3).abs() < 1e-12);
        assert_eq!(raw_expertise(&r, &co, &co).unwrap(), 0.0);
        assert_eq!(raw_expertise(&r, &[], &co), Err(ScoringError::EmptyContrastiveSet));
    }

    #[test]
    fn raw_expertise_with_mock_embedder() {
        use crate::similarity::mock_embed;
        let e = |t: &str| mock_embed(t, 256, 3).unwrap();
        let co = "the seeds pass through the digestive system harmlessly";
        let r = raw_expertise(&e(co), &[e("quantum tax ledger of marmalade")], &[e(co)]).unwrap();
        assert!(r > 0.0, "{r}");
    }

    #[test]
    fn ideal_expertise() {
        let r = at(1.0);
        assert!((ideal_raw_expertise(&r, &[at(0.9)], &[at(0.2)]).unwrap() - 0.7).abs() < 1e-12);
        assert_eq!(ideal_raw_expertise(&r, &[], &[at(0.2)]), Err(ScoringError::MissingLabels));
        assert_eq!(ideal_raw_expertise(&r, &[at(0.4)], &[at(0.4)]).unwrap(), 0.0);
    }

    #[test]
    fn softmax_pins() {
        assert_eq!(lambda_weights(&[0.0, 0.0], 1.0).lambda, vec![0.5, 0.5]);
        let l = lambda_weights(&[1.0, 0.0], 1.0).lambda;
        assert!((l[0] - 0.731_058_578_630_004_9).abs() < 1e-12);
        assert!((l[1] - 0.268_941_421_369_995_1).abs() < 1e-12);
        let l = lambda_weights(&[0.3, 0.1, -0.2], 1.0).lambda;
        for (got, want) in l.iter().zip([0.412_326_685_579_578_3, 0.337_584_537_798_716_4, 0.250_088_776_621_705_2]) {
            assert!((got - want).abs() < 1e-12, "{got} vs {want}");
        }
        assert_eq!(lambda_weights(&[-1.7], 0.1).lambda, vec![1.0]);
    }

    #[test]
    fn penalty_mean_cases() {
        let y = at(1.0);
        let p = laziness_penalty_mean(&y, &[at(0.1), at(0.2)]).unwrap();
        assert!((p.value - 0.15).abs() < 1e-12 && !p.empty);
        assert_eq!(laziness_penalty_mean(&y, &[]).unwrap(), PenaltyMean { value: 0.0, empty: true });
        assert!(laziness_penalty_mean(&y, &[at(-0.5), at(0.5)]).unwrap().value.abs() < 1e-12);
    }

    fn single_ref(sim: f64, neighbors: &[f64]) -> Vec<ReferenceContext> {
        vec![ReferenceContext {
            reference_id: "r".into(),
            answer: at(sim),
            lambda: 1.0,
            neighbor_answers: neighbors.iter().map(|&s| at(s)).collect(),
        }]
    }

    #[test]
    fn worked_examples() {
        let y = at(1.0);
        let tv = fewl_score(&y, &single_ref(0.9, &[0.1, 0.2]), &cfg(DivergenceKind::Tv, true)).unwrap();
        assert!((tv.value - TV_EXAMPLE).abs() < 1e-12, "{}", tv.value);
        let kl = fewl_score(&y, &single_ref(0.9, &[0.1, 0.2]), &cfg(DivergenceKind::Kl, true)).unwrap();
        assert!((kl.value - KL_EXAMPLE).abs() < 1e-12, "{}", kl.value);
        let js = fewl_score(&y, &single_ref(0.9, &[0.1, 0.2]), &cfg(DivergenceKind::Js, true)).unwrap();
        assert!((js.value - JS_EXAMPLE).abs() < 1e-12, "{}", js.value);
        let zero = fewl_score(&y, &single_ref(0.0, &[0.0]), &cfg(DivergenceKind::Tv, true)).unwrap();
        assert!(zero.value.abs() < 1e-15);
        let single = fewl_score(&y, &single_ref(0.9, &[0.1, 0.2]), &cfg(DivergenceKind::Tv, false)).unwrap();
        assert!((single.value - TV_SINGLE).abs() < 1e-12);
        assert_eq!(single.per_reference[0].penalty_term, 0.0);
    }

    #[test]
    fn empty_neighbors_warn() {
        let s = fewl_score(&at(1.0), &single_ref(0.9, &[]), &cfg(DivergenceKind::Tv, true)).unwrap();
        assert!(s.empty_penalty_warning);
        assert!((s.value - TV_SINGLE).abs() < 1e-12);
    }

    fn evidence(raws: &[f64], sims: &[f64]) -> QuestionEvidence {
        QuestionEvidence {
            references: raws
                .iter()
                .zip(sims)
                .enumerate()
                .map(|(i, (&raw, &s))| ReferenceEvidence {
                    reference_id: format!("r{i}"),
                    answer: at(s),
                    raw_expertise: raw,
                    ideal_expertise: None,
                    neighbor_answers: vec![at(0.3)],
                })
                .collect(),
            samples: Vec::new(),
        }
    }

    #[test]
    fn single_best_picks_argmax_then_lowest_index() {
        let ev = evidence(&[0.3, 0.1], &[0.5, 0.9]);
        let config = ScoringConfig { reference_mode: ReferenceMode::SingleBest, ..ScoringConfig::default() };
        let (ctx, _) = ev.contexts(&config).unwrap();
        assert_eq!(ctx.len(), 1);
        assert_eq!(ctx[0].reference_id, "r0");
        let tie = evidence(&[0.2, 0.2, 0.2], &[0.1, 0.2, 0.3]);
        assert_eq!(tie.contexts(&config).unwrap().0[0].reference_id, "r0");
    }

    #[test]
    fn single_model_uses_named_reference() {
        let ev = evidence(&[0.3, 0.1], &[0.5, 0.9]);
        let mut config = ScoringConfig { reference_mode: ReferenceMode::SingleModel, ..ScoringConfig::default() };
        config.single_reference = Some("r1".into());
        let (ctx, w) = ev.contexts(&config).unwrap();
        assert_eq!((ctx[0].reference_id.as_str(), w.lambda.as_slice()), ("r1", &[1.0][..]));
        config.single_reference = Some("nope".into());
        assert_eq!(ev.contexts(&config).unwrap_err(), ScoringError::UnknownReference("nope".into()));
    }

    #[test]
    fn multi_sample_is_uniform_mean() {
        let sims = [0.9, 0.7, 0.5, 0.3, 0.1];
        let mut ev = evidence(&[0.0], &[0.5]);
        let config = Ablation::MultiNoPenalty.apply(&ScoringConfig::default());
        assert_eq!(ev.contexts(&config).unwrap_err(), ScoringError::MissingSamples("r0".into()));
        ev.samples = evidence(&[0.0; 5], &sims).references;
        let score = baseline_score(&at(1.0), &ev, &config).unwrap();
        let want = sims.iter().map(|s| (0.2 * s).tanh() / 2.0).sum::<f64>() / 5.0;
        assert!((score.value - want).abs() < 1e-12);
        assert!(score.per_reference.iter().all(|t| t.lambda == 0.2));
    }

    #[test]
    fn ideal_requires_labels() {
        let ev = evidence(&[0.3, 0.1], &[0.5, 0.9]);
        let config = Ablation::FewlIdeal.apply(&ScoringConfig::default());
        assert_eq!(ev.contexts(&config).unwrap_err(), ScoringError::MissingLabels);
    }

    #[test]
    fn digest_tracks_every_field() {
        let a = ScoringConfig::default();
        let b = ScoringConfig { temperature_tau: 2.0, ..a.clone() };
        assert_eq!(a.digest().len(), 64);
        assert_ne!(a.digest(), b.digest());
        assert_eq!(a.digest(), ScoringConfig::default().digest());
    }

    #[test]
    fn config_toml_requires_every_key() {
        let full = r#"
            divergence = "tv"
            n_contrastive = 25
            n_neighbors = 10
            neighbor_bounds = { lo = 0.2, hi = 0.8 }
            penalty_source = "knn"
            random_pool_count = 25
            random_pool_hi = 0.8
            temperature_tau = 1.0
            lambda_mode = "estimated"
            reference_mode = "multi_model"
            penalty_enabled = true
        "#;
        let parsed: ScoringConfig = toml::from_str(full).unwrap();
        assert_eq!(parsed, ScoringConfig::default());
        let missing = full.replace("divergence = \"tv\"", "");
        let err = toml::from_str::<ScoringConfig>(&missing).unwrap_err().to_string();
        assert!(err.contains("divergence"), "{err}");
    }

    fn kinds() -> impl Strategy<Value = DivergenceKind> {
        prop::sample::select(DivergenceKind::ALL.to_vec())
    }

    proptest! {
        #[test]
        fn simplex_and_argmax(raw in prop::collection::vec(-2.0f64..2.0, 1..=8), tau in prop::sample::select(vec![0.1, 1.0, 10.0])) {
            let w = lambda_weights(&raw, tau);
            prop_assert!((w.lambda.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            prop_assert!(w.lambda.iter().all(|&l| l > 0.0 && l <= 1.0));
            let top = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let ltop = w.lambda.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            for (r, l) in raw.iter().zip(&w.lambda) {
                prop_assert_eq!(*r == top, *l == ltop);
            }
            for i in 0..raw.len() {
                for j in 0..raw.len() {
                    if raw[i] > raw[j] {
                        prop_assert!(w.lambda[i] > w.lambda[j]);
                    }
                }
            }
        }

        #[test]
        fn uniform_reduction(n in 1usize..=16) {
            let w = uniform_weights(n, 1.0);
            prop_assert!(w.lambda.iter().all(|&l| l == 1.0 / n as f64));
        }

        #[test]
        fn penalty_strictly_decreasing(
            sim in -1.0f64..1.0,
            neighbors in prop::collection::vec(-0.9f64..0.9, 1..6),
            which in any::<prop::sample::Index>(),
            bump in 0.01f64..0.1,
        ) {
            let y = at(1.0);
            let config = cfg(DivergenceKind::Tv, true);
            let base = fewl_score(&y, &single_ref(sim, &neighbors), &config).unwrap().value;
            let mut raised = neighbors.clone();
            let i = which.index(raised.len());
            raised[i] += bump;
            let after = fewl_score(&y, &single_ref(sim, &raised), &config).unwrap().value;
            prop_assert!(after < base, "{after} !< {base}");
        }

        #[test]
        fn truthfulness_strictly_increasing(
            kind in kinds(),
            lambda in 0.05f64..1.0,
            sim in -0.95f64..0.9,
            bump in 0.01f64..0.05,
            pen in -0.5f64..0.5,
        ) {
            let p = Some(PenaltyMean { value: pen, empty: false });
            let lo = reference_term("r", lambda, sim, p, kind).unwrap();
            let hi = reference_term("r", lambda, sim + bump, p, kind).unwrap();
            let v = |t: &ReferenceTerm| FewlScore::recompute(std::slice::from_ref(t));
            prop_assert!(v(&hi) > v(&lo));
        }

        #[test]
        fn no_penalty_ignores_neighbors(
            kind in kinds(),
            sim in -1.0f64..1.0,
            neighbors in prop::collection::vec(-1.0f64..1.0, 0..6),
            seed in any::<u64>(),
        ) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let y = at(1.0);
            let config = cfg(kind, false);
            let a = fewl_score(&y, &single_ref(sim, &neighbors), &config).unwrap();
            let mut shuffled = neighbors.clone();
            shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            shuffled.push(0.77);
            let b = fewl_score(&y, &single_ref(sim, &shuffled), &config).unwrap();
            prop_assert_eq!(a.value.to_bits(), b.value.to_bits());
        }

        #[test]
        fn decomposition_consistent(
            kind in kinds(),
            raws in prop::collection::vec(-2.0f64..2.0, 1..5),
            sims in prop::collection::vec(-1.0f64..1.0, 5),
        ) {
            let ev = evidence(&raws, &sims[..raws.len()]);
            let s = baseline_score(&at(0.6), &ev, &cfg(kind, true)).unwrap();
            prop_assert!(s.is_consistent());
            prop_assert_eq!(s.per_reference.len(), raws.len());
        }
    }
}
