//! Aggregator pairs `(g*, f*)` of the variational f-divergence form.
//!
//! Each [`DivergenceKind`] fixes an output activation `g*` and the Fenchel
//! conjugate `f*` of its generator. `g*` always maps into `dom(f*)`, so a
//! [`DivergenceError::Domain`] from [`f_star`] means a value was wired in
//! without passing through `g*` first.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum DivergenceKind {
    /// Total variation: `g*(v) = tanh(v)/2`, `f*(u) = u` on `|u| <= 1/2`.
    #[default]
    Tv,
    /// Jensen-Shannon: `g*(v) = ln(2/(1+e^-v))`, `f*(u) = -ln(2-e^u)` on `u < ln 2`.
    Js,
    /// Kullback-Leibler: `g*(v) = v`, `f*(u) = e^(u-1)`.
    Kl,
}

impl DivergenceKind {
    pub const ALL: [DivergenceKind; 3] = [DivergenceKind::Tv, DivergenceKind::Js, DivergenceKind::Kl];

    pub fn as_str(self) -> &'static str {
        match self {
            DivergenceKind::Tv => "tv",
            DivergenceKind::Js => "js",
            DivergenceKind::Kl => "kl",
        }
    }

    /// Whether `u` lies in the domain of this kind's `f*`.
    ///
    /// `-inf` is accepted for JS and KL, where `f*` has a finite limit; it is
    /// the optimal witness value on cells that carry no mass under `P`.
    pub fn in_domain(self, u: f64) -> bool {
        if u.is_nan() {
            return false;
        }
        match self {
            DivergenceKind::Tv => u.abs() <= 0.5,
            DivergenceKind::Js => u < std::f64::consts::LN_2,
            DivergenceKind::Kl => u < f64::INFINITY,
        }
    }
}

impl fmt::Display for DivergenceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DivergenceKind {
    type Err = DivergenceError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "tv" | "total_variation" => Ok(DivergenceKind::Tv),
            "js" | "jensen_shannon" => Ok(DivergenceKind::Js),
            "kl" | "kullback_leibler" => Ok(DivergenceKind::Kl),
            other => Err(DivergenceError::UnknownKind(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DivergenceError {
    #[error("{u} is outside dom(f*) for {kind}")]
    Domain { kind: DivergenceKind, u: f64 },
    #[error("unknown divergence kind {0:?} (expected tv, js or kl)")]
    UnknownKind(String),
}

/// `ln(1 + e^x)` without overflow.
fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Output activation of the variational form. Strictly increasing for every kind.
pub fn g_star(kind: DivergenceKind, v: f64) -> f64 {
    match kind {
        DivergenceKind::Tv => 0.5 * v.tanh(),
        DivergenceKind::Js => std::f64::consts::LN_2 - softplus(-v),
        DivergenceKind::Kl => v,
    }
}

/// Fenchel conjugate of the divergence generator.
pub fn f_star(kind: DivergenceKind, u: f64) -> Result<f64, DivergenceError> {
    if !kind.in_domain(u) {
        return Err(DivergenceError::Domain { kind, u });
    }
    Ok(match kind {
        DivergenceKind::Tv => u,
        DivergenceKind::Js => -(2.0 - u.exp()).ln(),
        DivergenceKind::Kl => (u - 1.0).exp(),
    })
}
