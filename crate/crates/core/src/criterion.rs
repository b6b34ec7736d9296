//! Criterion functions: one saliency score per filter from a layer's `D×H`
//! filter matrix, higher meaning more valuable.
//!
//! Built-in scorers are column-local and accumulate in `f64`. Normalization
//! is applied per layer after scoring.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

fn nonempty(col: &[f32]) -> Result<()> {
    if col.is_empty() {
        return Err(Error::Domain("empty weight column".into()));
    }
    Ok(())
}

/// Population standard deviation (Welford).
pub fn score_std(col: &[f32]) -> Result<f64> {
    nonempty(col)?;
    let mut mean = 0.0f64;
    let mut m2 = 0.0f64;
    for (i, &w) in col.iter().enumerate() {
        let w = w as f64;
        let delta = w - mean;
        mean += delta / (i + 1) as f64;
        m2 += delta * (w - mean);
    }
    Ok((m2 / col.len() as f64).max(0.0).sqrt())
}

/// Signed `max - min`.
pub fn score_range(col: &[f32]) -> Result<f64> {
    nonempty(col)?;
    let (lo, hi) = col
        .iter()
        .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &w| {
            (lo.min(w), hi.max(w))
        });
    Ok(hi as f64 - lo as f64)
}

pub fn score_mean_abs(col: &[f32]) -> Result<f64> {
    nonempty(col)?;
    Ok(col.iter().map(|w| w.abs() as f64).sum::<f64>() / col.len() as f64)
}

pub fn score_max_abs(col: &[f32]) -> Result<f64> {
    nonempty(col)?;
    Ok(col.iter().fold(0.0f32, |m, w| m.max(w.abs())) as f64)
}

/// `max |w| - min |w|`.
pub fn score_abs_range(col: &[f32]) -> Result<f64> {
    nonempty(col)?;
    let (lo, hi) = col.iter().fold((f32::INFINITY, 0.0f32), |(lo, hi), &w| {
        (lo.min(w.abs()), hi.max(w.abs()))
    });
    Ok(hi as f64 - lo as f64)
}

/// Scores a whole `D×H` filter matrix; must return exactly `H` values.
pub type CustomScorer = Arc<dyn Fn(&Tensor) -> Result<Vec<f64>> + Send + Sync>;

#[derive(Clone)]
pub enum Scorer {
    Std,
    Range,
    MeanAbs,
    MaxAbs,
    AbsRange,
    Custom { name: String, f: CustomScorer },
}

impl Scorer {
    pub const BUILTIN: [Scorer; 5] = [
        Scorer::Std,
        Scorer::Range,
        Scorer::MeanAbs,
        Scorer::MaxAbs,
        Scorer::AbsRange,
    ];

    pub fn name(&self) -> &str {
        match self {
            Scorer::Std => "std",
            Scorer::Range => "range",
            Scorer::MeanAbs => "mean_abs",
            Scorer::MaxAbs => "max_abs",
            Scorer::AbsRange => "abs_range",
            Scorer::Custom { name, .. } => name,
        }
    }

    /// Raw scores of every column of `matrix`.
    pub fn score(&self, matrix: &Tensor) -> Result<Vec<f64>> {
        let column: fn(&[f32]) -> Result<f64> = match self {
            Scorer::Std => score_std,
            Scorer::Range => score_range,
            Scorer::MeanAbs => score_mean_abs,
            Scorer::MaxAbs => score_max_abs,
            Scorer::AbsRange => score_abs_range,
            Scorer::Custom { name, f } => {
                let (_, h) = matrix.matrix_dims()?;
                let scores = f(matrix)?;
                if scores.len() != h {
                    return Err(Error::Domain(format!(
                        "criterion {name} returned {} scores for {h} filters",
                        scores.len()
                    )));
                }
                if let Some(bad) = scores.iter().find(|s| s.is_nan()) {
                    return Err(Error::Domain(format!("criterion {name} returned {bad}")));
                }
                return Ok(scores);
            }
        };
        matrix.reduce_over_rows(column)?.into_iter().collect()
    }
}

impl fmt::Debug for Scorer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl PartialEq for Scorer {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (Scorer::Custom { f: a, .. }, Scorer::Custom { f: b, .. }) => Arc::ptr_eq(a, b),
            (a, b) => std::mem::discriminant(a) == std::mem::discriminant(b),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    #[default]
    Raw,
    MinMax,
    Rank,
}

impl Normalization {
    pub fn name(self) -> &'static str {
        match self {
            Normalization::Raw => "raw",
            Normalization::MinMax => "minmax",
            Normalization::Rank => "rank",
        }
    }

    /// Per-layer normalization of raw scores.
    pub fn apply(self, raw: &[f64]) -> Vec<f64> {
        let h = raw.len();
        match self {
            Normalization::Raw => raw.to_vec(),
            Normalization::MinMax => {
                let lo = raw.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                if hi > lo {
                    raw.iter().map(|s| (s - lo) / (hi - lo)).collect()
                } else {
                    vec![1.0; h]
                }
            }
            Normalization::Rank => {
                if h == 1 {
                    return vec![1.0];
                }
                let mut order: Vec<usize> = (0..h).collect();
                // stable: equal scores keep index order
                order.sort_by(|&a, &b| raw[a].total_cmp(&raw[b]));
                let mut out = vec![0.0; h];
                for (rank, &i) in order.iter().enumerate() {
                    out[i] = rank as f64 / (h - 1) as f64;
                }
                out
            }
        }
    }
}

/// When scores are computed relative to surgery on upstream layers.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ApplicationMode {
    /// Every layer scored once on the unpruned model.
    #[default]
    Static,
    /// Each layer scored after upstream layers were pruned.
    Progressive,
}

impl FromStr for ApplicationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "static" => Ok(ApplicationMode::Static),
            "progressive" => Ok(ApplicationMode::Progressive),
            other => Err(Error::Config(format!("unknown application mode {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Criterion {
    pub scorer: Scorer,
    pub normalization: Normalization,
}

impl Criterion {
    pub fn new(scorer: Scorer, normalization: Normalization) -> Self {
        Criterion {
            scorer,
            normalization,
        }
    }

    pub fn custom(
        name: impl Into<String>,
        normalization: Normalization,
        f: impl Fn(&Tensor) -> Result<Vec<f64>> + Send + Sync + 'static,
    ) -> Self {
        Criterion::new(
            Scorer::Custom {
                name: name.into(),
                f: Arc::new(f),
            },
            normalization,
        )
    }

    /// `scorer:normalization`, e.g. `std:rank`.
    pub fn name(&self) -> String {
        format!("{}:{}", self.scorer.name(), self.normalization.name())
    }

    /// Normalized scores for a filter matrix.
    pub fn apply(&self, matrix: &Tensor) -> Result<Vec<f64>> {
        Ok(self.normalization.apply(&self.scorer.score(matrix)?))
    }
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl FromStr for Criterion {
    type Err = Error;

    /// `name[:raw|:minmax|:rank]` over the built-in scorer names.
    fn from_str(s: &str) -> Result<Self> {
        let (name, norm) = s.split_once(':').unwrap_or((s, "raw"));
        let scorer = Scorer::BUILTIN
            .into_iter()
            .find(|c| c.name() == name)
            .ok_or_else(|| Error::Config(format!("unknown criterion {name:?}")))?;
        let normalization = match norm {
            "raw" => Normalization::Raw,
            "minmax" => Normalization::MinMax,
            "rank" => Normalization::Rank,
            other => return Err(Error::Config(format!("unknown normalization {other:?}"))),
        };
        Ok(Criterion::new(scorer, normalization))
    }
}
