//! Exact f-divergence checks on small discrete instances: the variational
//! lower bound, its optimal witnesses, and data processing along a
//! `h -> A* -> A` Markov chain.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::digest::derive_seed;
use crate::divergence::{f_star, DivergenceError, DivergenceKind};

/// Largest alphabet (and joint side) accepted anywhere in the lab.
pub const MAX_ALPHABET: usize = 16;
/// Largest alphabet accepted by [`random_chain`].
pub const MAX_CHAIN_SIZE: usize = 6;
const MASS_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TheoryError {
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
    #[error("invalid channel: {0}")]
    InvalidChannel(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("cell {0} has mass under P but none under Q")]
    SupportViolation(usize),
    #[error("alphabet sizes must lie in [2, {MAX_CHAIN_SIZE}], got {0:?}")]
    InvalidSize((usize, usize, usize)),
    #[error(transparent)]
    Domain(#[from] DivergenceError),
}

fn check_mass(probs: &[f64]) -> Result<(), TheoryError> {
    if let Some(bad) = probs.iter().find(|p| !(p.is_finite() && **p >= 0.0)) {
        return Err(TheoryError::InvalidDistribution(format!("entry {bad} is not a probability")));
    }
    let total: f64 = probs.iter().sum();
    if (total - 1.0).abs() > MASS_TOL {
        return Err(TheoryError::InvalidDistribution(format!("mass sums to {total}")));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteDistribution {
    probs: Vec<f64>,
}

impl DiscreteDistribution {
    pub fn new(probs: Vec<f64>) -> Result<Self, TheoryError> {
        if probs.is_empty() || probs.len() > MAX_ALPHABET {
            return Err(TheoryError::InvalidDistribution(format!("alphabet size {} outside [1, {MAX_ALPHABET}]", probs.len())));
        }
        check_mass(&probs)?;
        Ok(Self { probs })
    }

    pub fn uniform(m: usize) -> Result<Self, TheoryError> {
        Self::new(vec![1.0 / m as f64; m])
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }
}

/// Joint law over `(a, h)`; `rows` index `a`, `cols` index `h`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointDistribution {
    rows: usize,
    cols: usize,
    probs: Vec<f64>,
}

impl JointDistribution {
    pub fn new(rows: usize, cols: usize, probs: Vec<f64>) -> Result<Self, TheoryError> {
        if rows == 0 || cols == 0 || rows > MAX_ALPHABET || cols > MAX_ALPHABET {
            return Err(TheoryError::InvalidDistribution(format!("shape {rows}x{cols} outside 1..={MAX_ALPHABET}")));
        }
        if probs.len() != rows * cols {
            return Err(TheoryError::ShapeMismatch(format!("{} cells for a {rows}x{cols} joint", probs.len())));
        }
        check_mass(&probs)?;
        Ok(Self { rows, cols, probs })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, TheoryError> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(TheoryError::ShapeMismatch("ragged rows".into()));
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Row-major cell masses.
    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn get(&self, a: usize, h: usize) -> f64 {
        self.probs[a * self.cols + h]
    }

    pub fn row_marginal(&self) -> Vec<f64> {
        self.probs.chunks(self.cols).map(|r| r.iter().sum()).collect()
    }

    pub fn col_marginal(&self) -> Vec<f64> {
        (0..self.cols).map(|h| (0..self.rows).map(|a| self.get(a, h)).sum()).collect()
    }

    pub fn max_abs_diff(&self, other: &JointDistribution) -> f64 {
        self.probs.iter().zip(&other.probs).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
    }
}

/// Row-stochastic transition matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Channel {
    m_in: usize,
    m_out: usize,
    matrix: Vec<f64>,
}

impl Channel {
    pub fn new(m_in: usize, m_out: usize, matrix: Vec<f64>) -> Result<Self, TheoryError> {
        if m_in == 0 || m_out == 0 || matrix.len() != m_in * m_out {
            return Err(TheoryError::InvalidChannel(format!("{} entries for {m_in}x{m_out}", matrix.len())));
        }
        for (i, row) in matrix.chunks(m_out).enumerate() {
            check_mass(row).map_err(|e| TheoryError::InvalidChannel(format!("row {i}: {e}")))?;
        }
        Ok(Self { m_in, m_out, matrix })
    }

    pub fn identity(m: usize) -> Self {
        let matrix = (0..m * m).map(|i| if i / m == i % m { 1.0 } else { 0.0 }).collect();
        Self { m_in: m, m_out: m, matrix }
    }

    pub fn uniform(m_in: usize, m_out: usize) -> Self {
        Self { m_in, m_out, matrix: vec![1.0 / m_out as f64; m_in * m_out] }
    }

    pub fn m_in(&self) -> usize {
        self.m_in
    }

    pub fn m_out(&self) -> usize {
        self.m_out
    }

    /// Probability of output `j` given input `i`.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.matrix[i * self.m_out + j]
    }
}

/// Test function over the cells of a joint, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub values: Vec<f64>,
}

impl Witness {
    pub fn validate(&self, kind: DivergenceKind) -> Result<(), TheoryError> {
        match self.values.iter().find(|&&u| !kind.in_domain(u)) {
            Some(&u) => Err(DivergenceError::Domain { kind, u }.into()),
            None => Ok(()),
        }
    }
}

pub fn product_of_marginals(joint: &JointDistribution) -> JointDistribution {
    let (pa, ph) = (joint.row_marginal(), joint.col_marginal());
    let probs = pa.iter().flat_map(|a| ph.iter().map(move |h| a * h)).collect();
    JointDistribution { rows: joint.rows, cols: joint.cols, probs }
}

fn same_len(p: &[f64], q: &[f64]) -> Result<(), TheoryError> {
    if p.len() == q.len() {
        Ok(())
    } else {
        Err(TheoryError::ShapeMismatch(format!("{} vs {} cells", p.len(), q.len())))
    }
}

/// `sum p ln(p/q)` with `0 ln 0 = 0`.
fn kl_sum(p: &[f64], q: &[f64]) -> Result<f64, TheoryError> {
    let mut total = 0.0;
    for (i, (&pi, &qi)) in p.iter().zip(q).enumerate() {
        if pi > 0.0 {
            if qi <= 0.0 {
                return Err(TheoryError::SupportViolation(i));
            }
            total += pi * (pi / qi).ln();
        }
    }
    Ok(total)
}

/// Exact `D_f(P || Q)` over raw cell masses.
///
/// JS is reported in the scale its `(g*, f*)` pair attains, which is
/// `KL(P||M) + KL(Q||M)` with `M = (P+Q)/2`.
pub fn exact_divergence(p: &[f64], q: &[f64], kind: DivergenceKind) -> Result<f64, TheoryError> {
    same_len(p, q)?;
    match kind {
        DivergenceKind::Tv => Ok(0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()),
        DivergenceKind::Kl => kl_sum(p, q),
        DivergenceKind::Js => {
            let m: Vec<f64> = p.iter().zip(q).map(|(a, b)| 0.5 * (a + b)).collect();
            Ok(kl_sum(p, &m)? + kl_sum(q, &m)?)
        }
    }
}

pub fn exact_f_divergence(p: &DiscreteDistribution, q: &DiscreteDistribution, kind: DivergenceKind) -> Result<f64, TheoryError> {
    exact_divergence(p.probs(), q.probs(), kind)
}

/// f-mutual information `D_f(P_{A,h} || P_A x P_h)`.
pub fn f_mutual_information(joint: &JointDistribution, kind: DivergenceKind) -> Result<f64, TheoryError> {
    exact_divergence(joint.probs(), product_of_marginals(joint).probs(), kind)
}

/// `E_P[g] - E_Q[f*(g)]` over raw cell masses; cells without mass contribute nothing.
pub fn variational_value_cells(p: &[f64], q: &[f64], witness: &Witness, kind: DivergenceKind) -> Result<f64, TheoryError> {
    same_len(p, q)?;
    same_len(p, &witness.values)?;
    witness.validate(kind)?;
    let mut total = 0.0;
    for ((&pi, &qi), &g) in p.iter().zip(q).zip(&witness.values) {
        if pi > 0.0 {
            total += pi * g;
        }
        if qi > 0.0 {
            total -= qi * f_star(kind, g)?;
        }
    }
    Ok(total)
}

pub fn variational_value(
    p: &JointDistribution,
    q: &JointDistribution,
    witness: &Witness,
    kind: DivergenceKind,
) -> Result<f64, TheoryError> {
    variational_value_cells(p.probs(), q.probs(), witness, kind)
}

/// The witness attaining the supremum of the variational form.
pub fn optimal_witness_cells(p: &[f64], q: &[f64], kind: DivergenceKind) -> Result<Witness, TheoryError> {
    same_len(p, q)?;
    let values = p
        .iter()
        .zip(q)
        .enumerate()
        .map(|(i, (&pi, &qi))| {
            if pi == 0.0 && qi == 0.0 {
                return Ok(0.0);
            }
            match kind {
                DivergenceKind::Tv => Ok(0.5
                    * if pi > qi {
                        1.0
                    } else if pi < qi {
                        -1.0
                    } else {
                        0.0
                    }),
                _ if qi == 0.0 => Err(TheoryError::SupportViolation(i)),
                DivergenceKind::Kl => Ok(1.0 + (pi / qi).ln()),
                DivergenceKind::Js => Ok((2.0 * pi / (pi + qi)).ln()),
            }
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Witness { values })
}

pub fn optimal_witness(p: &JointDistribution, q: &JointDistribution, kind: DivergenceKind) -> Result<Witness, TheoryError> {
    optimal_witness_cells(p.probs(), q.probs(), kind)
}

fn dirichlet_row(rng: &mut impl Rng, m: usize) -> Vec<f64> {
    let draws: Vec<f64> = (0..m).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
    let total: f64 = draws.iter().sum();
    let mut row: Vec<f64> = draws.iter().map(|d| d / total).collect();
    // Push the rounding residue into the largest entry so rows sum to 1 exactly enough.
    let residue = 1.0 - row.iter().sum::<f64>();
    let top = row.iter().enumerate().fold(0, |b, (i, v)| if *v > row[b] { i } else { b });
    row[top] += residue;
    row
}

/// A random probability vector drawn uniformly from the simplex.
pub fn random_distribution(m: usize, seed: u64) -> DiscreteDistribution {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DiscreteDistribution { probs: dirichlet_row(&mut rng, m) }
}

fn random_channel(rng: &mut impl Rng, m_in: usize, m_out: usize) -> Channel {
    let matrix = (0..m_in).flat_map(|_| dirichlet_row(rng, m_out)).collect();
    Channel { m_in, m_out, matrix }
}

/// `h -> A* -> A`: a law on `h` and two channels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Chain {
    pub h: DiscreteDistribution,
    pub t1: Channel,
    pub t2: Channel,
}

impl Chain {
    pub fn new(h: DiscreteDistribution, t1: Channel, t2: Channel) -> Result<Self, TheoryError> {
        if t1.m_in != h.len() || t2.m_in != t1.m_out {
            return Err(TheoryError::ShapeMismatch("channels do not compose with the source".into()));
        }
        Ok(Self { h, t1, t2 })
    }

    /// `p(a*, h) = p(h) t1(a*|h)`.
    pub fn joint_astar_h(&self) -> JointDistribution {
        let (m_h, m_s) = (self.h.len(), self.t1.m_out);
        let probs = (0..m_s).flat_map(|s| (0..m_h).map(move |h| (s, h))).map(|(s, h)| self.h.probs[h] * self.t1.get(h, s)).collect();
        JointDistribution { rows: m_s, cols: m_h, probs }
    }

    /// `p(a, h) = sum_{a*} p(h) t1(a*|h) t2(a|a*)`.
    pub fn joint_a_h(&self) -> JointDistribution {
        let (m_h, m_s, m_a) = (self.h.len(), self.t1.m_out, self.t2.m_out);
        let probs = (0..m_a)
            .flat_map(|a| (0..m_h).map(move |h| (a, h)))
            .map(|(a, h)| (0..m_s).map(|s| self.h.probs[h] * self.t1.get(h, s) * self.t2.get(s, a)).sum())
            .collect();
        JointDistribution { rows: m_a, cols: m_h, probs }
    }

    /// `p(a, h, a*)` indexed `[a][h][a*]`.
    pub fn joint_triple(&self) -> Vec<Vec<Vec<f64>>> {
        let (m_h, m_s, m_a) = (self.h.len(), self.t1.m_out, self.t2.m_out);
        (0..m_a)
            .map(|a| (0..m_h).map(|h| (0..m_s).map(|s| self.h.probs[h] * self.t1.get(h, s) * self.t2.get(s, a)).collect()).collect())
            .collect()
    }

    /// Largest cell-wise deviation from `p(a,h|a*) = p(a|a*) p(h|a*)`.
    #[allow(clippy::needless_range_loop)]
    pub fn conditional_independence_error(&self) -> f64 {
        let t = self.joint_triple();
        let (m_a, m_h, m_s) = (t.len(), t[0].len(), t[0][0].len());
        let mut worst: f64 = 0.0;
        for s in 0..m_s {
            let ps: f64 = (0..m_a).flat_map(|a| (0..m_h).map(move |h| (a, h))).map(|(a, h)| t[a][h][s]).sum();
            if ps == 0.0 {
                continue;
            }
            for a in 0..m_a {
                let pa = (0..m_h).map(|h| t[a][h][s]).sum::<f64>() / ps;
                for h in 0..m_h {
                    let ph = (0..m_a).map(|b| t[b][h][s]).sum::<f64>() / ps;
                    worst = worst.max((t[a][h][s] / ps - pa * ph).abs());
                }
            }
        }
        worst
    }
}

/// Seeded random chain with uniform-Dirichlet source and channel rows.
pub fn random_chain(m_h: usize, m_astar: usize, m_a: usize, seed: u64) -> Result<Chain, TheoryError> {
    let ok = |m: usize| (2..=MAX_CHAIN_SIZE).contains(&m);
    if !(ok(m_h) && ok(m_astar) && ok(m_a)) {
        return Err(TheoryError::InvalidSize((m_h, m_astar, m_a)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = DiscreteDistribution { probs: dirichlet_row(&mut rng, m_h) };
    let t1 = random_channel(&mut rng, m_h, m_astar);
    let t2 = random_channel(&mut rng, m_astar, m_a);
    Ok(Chain { h, t1, t2 })
}

/// Optimal-witness variational value of a joint against its product of marginals.
pub fn optimal_dependence(joint: &JointDistribution, kind: DivergenceKind) -> Result<f64, TheoryError> {
    let q = product_of_marginals(joint);
    let w = optimal_witness(joint, &q, kind)?;
    variational_value(joint, &q, &w, kind)
}

/// `V* - V_A` for one chain.
pub fn chain_gap(chain: &Chain, kind: DivergenceKind) -> Result<f64, TheoryError> {
    Ok(optimal_dependence(&chain.joint_astar_h(), kind)? - optimal_dependence(&chain.joint_a_h(), kind)?)
}

/// Slack allowed on `V* >= V_A`.
pub const GAP_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataProcessingReport {
    pub kind: DivergenceKind,
    pub trials: usize,
    pub fraction_satisfied: f64,
    pub min_gap: f64,
    pub seed: u64,
}

pub fn verify_data_processing(
    trials: usize,
    sizes: (usize, usize, usize),
    kind: DivergenceKind,
    seed: u64,
) -> Result<DataProcessingReport, TheoryError> {
    let trials = trials.max(1);
    let gaps = (0..trials)
        .into_par_iter()
        .map(|i| {
            let chain = random_chain(sizes.0, sizes.1, sizes.2, derive_seed(seed, i as u64))?;
            chain_gap(&chain, kind)
        })
        .collect::<Result<Vec<f64>, _>>()?;
    let satisfied = gaps.iter().filter(|&&g| g >= -GAP_TOL).count();
    Ok(DataProcessingReport {
        kind,
        trials,
        fraction_satisfied: satisfied as f64 / trials as f64,
        min_gap: gaps.iter().copied().fold(f64::INFINITY, f64::min),
        seed,
    })
}

/// Random witness inside `dom(f*)`.
fn random_witness(rng: &mut impl Rng, cells: usize, kind: DivergenceKind) -> Witness {
    let values = (0..cells)
        .map(|_| {
            let v: f64 = rng.random_range(-4.0..4.0);
            match kind {
                DivergenceKind::Tv => v.clamp(-0.5, 0.5),
                DivergenceKind::Js => v.min(std::f64::consts::LN_2 - 1e-9),
                DivergenceKind::Kl => v,
            }
        })
        .collect();
    Witness { values }
}

/// A `(P, Q)` pair of size 2..=8; `Q` has full support, `P` may not.
fn random_pair(rng: &mut impl Rng, full_support: bool) -> (Vec<f64>, Vec<f64>) {
    let m = rng.random_range(2..=8);
    let q = dirichlet_row(rng, m);
    let mut p = dirichlet_row(rng, m);
    if !full_support && rng.random_bool(0.5) {
        let zero = rng.random_range(0..m);
        let spill = p[zero];
        p[zero] = 0.0;
        let keep = (zero + 1) % m;
        p[keep] += spill;
    }
    (p, q)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub checks: usize,
    pub violations: usize,
    /// Largest `value - exact` seen.
    pub max_excess: f64,
}

/// Random clipped witnesses never beat the exact divergence.
pub fn bound_suite(pairs: usize, witnesses: usize, seed: u64) -> Result<BoundReport, TheoryError> {
    let per_pair = (0..pairs)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, i as u64));
            let (p, q) = random_pair(&mut rng, false);
            let mut excesses = Vec::with_capacity(witnesses * 3);
            for kind in DivergenceKind::ALL {
                let exact = exact_divergence(&p, &q, kind)?;
                for _ in 0..witnesses {
                    let w = random_witness(&mut rng, p.len(), kind);
                    excesses.push(variational_value_cells(&p, &q, &w, kind)? - exact);
                }
            }
            Ok(excesses)
        })
        .collect::<Result<Vec<_>, TheoryError>>()?;
    let all: Vec<f64> = per_pair.into_iter().flatten().collect();
    Ok(BoundReport {
        checks: all.len(),
        violations: all.iter().filter(|&&e| e > GAP_TOL).count(),
        max_excess: all.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TightnessReport {
    pub checks: usize,
    pub max_error: f64,
}

/// Optimal witnesses attain the exact divergence on full-support pairs.
pub fn tightness_suite(pairs: usize, seed: u64) -> Result<TightnessReport, TheoryError> {
    let errors = (0..pairs)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, i as u64));
            let (p, q) = random_pair(&mut rng, true);
            DivergenceKind::ALL
                .iter()
                .map(|&kind| {
                    let w = optimal_witness_cells(&p, &q, kind)?;
                    Ok((variational_value_cells(&p, &q, &w, kind)? - exact_divergence(&p, &q, kind)?).abs())
                })
                .collect::<Result<Vec<f64>, TheoryError>>()
        })
        .collect::<Result<Vec<_>, _>>()?;
    let all: Vec<f64> = errors.into_iter().flatten().collect();
    Ok(TightnessReport { checks: all.len(), max_error: all.iter().copied().fold(0.0, f64::max) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use DivergenceKind::{Js, Kl, Tv};

    fn dist(p: &[f64]) -> DiscreteDistribution {
        DiscreteDistribution::new(p.to_vec()).unwrap()
    }

    fn joint(rows: &[&[f64]]) -> JointDistribution {
        JointDistribution::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn validation() {
        assert!(DiscreteDistribution::new(vec![0.5, 0.4]).is_err());
        assert!(DiscreteDistribution::new(vec![1.2, -0.2]).is_err());
        assert!(DiscreteDistribution::new(vec![0.1; 17]).is_err());
        assert!(Channel::new(2, 2, vec![0.5, 0.5, 0.9, 0.2]).is_err());
        assert!(JointDistribution::new(2, 2, vec![0.25; 3]).is_err());
    }

    #[test]
    fn product_of_marginals_cases() {
        let q = product_of_marginals(&joint(&[&[0.4, 0.1], &[0.1, 0.4]]));
        assert!(q.probs().iter().all(|v| (v - 0.25).abs() < 1e-15));
        let ind = product_of_marginals(&q);
        assert!(ind.max_abs_diff(&q) < 1e-15);
        let point = joint(&[&[0.0, 0.0], &[1.0, 0.0]]);
        assert_eq!(product_of_marginals(&point), point);
    }

    #[test]
    fn exact_divergence_pins() {
        for kind in DivergenceKind::ALL {
            assert_eq!(exact_f_divergence(&dist(&[0.3, 0.7]), &dist(&[0.3, 0.7]), kind).unwrap(), 0.0);
        }
        let tv = exact_f_divergence(&dist(&[0.5, 0.5]), &dist(&[0.75, 0.25]), Tv).unwrap();
        assert!((tv - 0.25).abs() < 1e-15);
        // 0.5 ln 2 + 0.5 ln(2/3), via mpmath
        let kl = exact_f_divergence(&dist(&[0.5, 0.5]), &dist(&[0.25, 0.75]), Kl).unwrap();
        assert!((kl - 0.143_841_036_225_890_2).abs() < 1e-12, "{kl}");
        assert_eq!(exact_f_divergence(&dist(&[0.5, 0.5]), &dist(&[1.0, 0.0]), Kl), Err(TheoryError::SupportViolation(1)));
        // disjoint supports reach the JS ceiling 2 ln 2
        let js = exact_f_divergence(&dist(&[1.0, 0.0]), &dist(&[0.0, 1.0]), Js).unwrap();
        assert!((js - 2.0 * std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn constant_witnesses() {
        let p = joint(&[&[0.4, 0.1], &[0.1, 0.4]]);
        let q = product_of_marginals(&p);
        let zero = Witness { values: vec![0.0; 4] };
        assert_eq!(variational_value(&p, &q, &zero, Tv).unwrap(), 0.0);
        for (kind, c) in [(Tv, 0.3), (Js, -0.4), (Kl, 0.5), (Kl, 1.0)] {
            let w = Witness { values: vec![c; 4] };
            let v = variational_value(&p, &q, &w, kind).unwrap();
            assert!((v - (c - f_star(kind, c).unwrap())).abs() < 1e-15);
            assert!(v <= 1e-15);
        }
        let bad = Witness { values: vec![0.9; 4] };
        assert!(matches!(variational_value(&p, &q, &bad, Tv), Err(TheoryError::Domain(_))));
    }

    #[test]
    fn tv_witness_on_two_by_two() {
        let p = joint(&[&[0.4, 0.1], &[0.1, 0.4]]);
        let q = product_of_marginals(&p);
        let w = optimal_witness(&p, &q, Tv).unwrap();
        assert_eq!(w.values, vec![0.5, -0.5, -0.5, 0.5]);
        let v = variational_value(&p, &q, &w, Tv).unwrap();
        assert!((v - exact_divergence(p.probs(), q.probs(), Tv).unwrap()).abs() < 1e-15);
        assert!((v - 0.3).abs() < 1e-15);
        let same = optimal_witness(&q, &q, Tv).unwrap();
        assert!(same.values.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn zero_mass_cells() {
        let p = [0.0, 0.6, 0.4];
        let q = [0.2, 0.3, 0.5];
        for kind in DivergenceKind::ALL {
            let w = optimal_witness_cells(&p, &q, kind).unwrap();
            let v = variational_value_cells(&p, &q, &w, kind).unwrap();
            assert!((v - exact_divergence(&p, &q, kind).unwrap()).abs() < 1e-12, "{kind}");
        }
        assert_eq!(optimal_witness_cells(&[0.5, 0.5], &[1.0, 0.0], Js), Err(TheoryError::SupportViolation(1)));
    }

    #[test]
    fn chain_determinism_and_sizes() {
        assert_eq!(random_chain(3, 3, 3, 42).unwrap(), random_chain(3, 3, 3, 42).unwrap());
        assert_ne!(random_chain(3, 3, 3, 42).unwrap(), random_chain(3, 3, 3, 43).unwrap());
        assert!(matches!(random_chain(7, 7, 7, 1), Err(TheoryError::InvalidSize(_))));
        assert!(matches!(random_chain(1, 3, 3, 1), Err(TheoryError::InvalidSize(_))));
    }

    #[test]
    fn degenerate_second_channel() {
        let mut chain = random_chain(4, 4, 4, 9).unwrap();
        chain.t2 = Channel::identity(4);
        assert!(chain.joint_a_h().max_abs_diff(&chain.joint_astar_h()) == 0.0);
        for kind in DivergenceKind::ALL {
            assert!(chain_gap(&chain, kind).unwrap().abs() < 1e-9);
        }
        chain.t2 = Channel::uniform(4, 3);
        for kind in DivergenceKind::ALL {
            assert!(f_mutual_information(&chain.joint_a_h(), kind).unwrap().abs() < 1e-12);
            let gap = chain_gap(&chain, kind).unwrap();
            assert!(gap >= 0.0);
            assert!((gap - optimal_dependence(&chain.joint_astar_h(), kind).unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn data_processing_all_kinds() {
        for kind in DivergenceKind::ALL {
            let r = verify_data_processing(500, (4, 4, 4), kind, 7).unwrap();
            assert_eq!(r.fraction_satisfied, 1.0, "{kind}: {r:?}");
            assert!(r.min_gap >= -GAP_TOL);
            assert_eq!(r, verify_data_processing(500, (4, 4, 4), kind, 7).unwrap());
        }
    }

    #[test]
    fn report_json_shape() {
        let r = verify_data_processing(3, (2, 2, 2), Tv, 1).unwrap();
        let v = serde_json::to_value(&r).unwrap();
        let keys: Vec<_> = v.as_object().unwrap().keys().cloned().collect();
        assert_eq!(keys.len(), 5);
        assert_eq!(v["kind"], "tv");
        assert_eq!(v["trials"], 3);
    }

    #[test]
    fn suites_pass() {
        let b = bound_suite(50, 100, 11).unwrap();
        assert_eq!(b.checks, 15_000);
        assert_eq!(b.violations, 0, "{b:?}");
        let t = tightness_suite(50, 12).unwrap();
        assert!(t.max_error < 1e-9, "{t:?}");
    }

    proptest! {
        #[test]
        fn nonnegative_and_zero_iff_equal(seed in any::<u64>(), m in 2usize..8) {
            let p = random_distribution(m, seed);
            let q = random_distribution(m, seed ^ 1);
            for kind in DivergenceKind::ALL {
                prop_assert!(exact_f_divergence(&p, &q, kind).unwrap() > 0.0);
                prop_assert!(exact_f_divergence(&p, &p, kind).unwrap().abs() < 1e-12);
            }
        }

        #[test]
        fn conditional_independence_holds(seed in any::<u64>(), a in 2usize..=6, b in 2usize..=6, c in 2usize..=6) {
            let chain = random_chain(a, b, c, seed).unwrap();
            prop_assert!(chain.conditional_independence_error() < 1e-12);
            let total: f64 = chain.joint_a_h().probs().iter().sum();
            prop_assert!((total - 1.0).abs() < 1e-12);
        }

        #[test]
        fn tightness_random_joints(seed in any::<u64>(), rows in 2usize..=4, cols in 2usize..=4) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let p = JointDistribution::new(rows, cols, dirichlet_row(&mut rng, rows * cols)).unwrap();
            let q = product_of_marginals(&p);
            for kind in DivergenceKind::ALL {
                let w = optimal_witness(&p, &q, kind).unwrap();
                let v = variational_value(&p, &q, &w, kind).unwrap();
                prop_assert!((v - f_mutual_information(&p, kind).unwrap()).abs() < 1e-9);
            }
        }
    }
}
