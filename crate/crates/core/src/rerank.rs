//! Second stage: explicit include/exclude re-ranking of first-stage
//! candidates.
//!
//! Each candidate image `v` is scored as
//!
//! ```text
//! final = s_m + s_lambda + delta
//! s_m   = cos(modification text, v)
//! s_in  = cos(include caption, v)
//! s_ex  = cos(exclude caption, v)
//! delta = relu(s_lambda - s_ex) - relu(s_lambda - s_in)      (default)
//! ```
//!
//! where `s_lambda` is the candidate's normalized first-stage score. The
//! alternative [`DeltaVariant`]s and the `use_s_m` / `use_s_lambda` toggles
//! exist for ablations.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gmix::{minmax_normalize, CandidateSet};
use crate::store::EmbeddingStore;
use crate::vector::{cosine, UnitVector};

/// All embeddings one composed query needs.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryInstance {
    pub query_id: String,
    /// Id of the reference image in the image store, when it is stored there.
    pub reference_id: Option<String>,
    pub ref_embedding: UnitVector,
    pub mod_text_embedding: UnitVector,
    pub target_desc_embedding: UnitVector,
    pub include_embedding: UnitVector,
    pub exclude_embedding: UnitVector,
}

impl QueryInstance {
    /// Checks that all five embeddings share one dimension.
    pub fn validate(&self) -> Result<()> {
        let dim = self.ref_embedding.dim();
        for v in [
            &self.mod_text_embedding,
            &self.target_desc_embedding,
            &self.include_embedding,
            &self.exclude_embedding,
        ] {
            if v.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: v.dim(),
                });
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.ref_embedding.dim()
    }
}

/// Which reward/penalty form of `delta` to apply.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeltaVariant {
    /// `relu(s_lambda - s_ex) - relu(s_lambda - s_in)`
    #[default]
    Default,
    /// `relu(s_lambda - s_ex) + relu(s_in - s_lambda)`
    In,
    /// `-relu(s_ex - s_lambda) - relu(s_lambda - s_in)`
    Ex,
    /// Always zero.
    Off,
}

impl DeltaVariant {
    pub const ALL: [DeltaVariant; 4] = [
        DeltaVariant::Default,
        DeltaVariant::In,
        DeltaVariant::Ex,
        DeltaVariant::Off,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            DeltaVariant::Default => "default",
            DeltaVariant::In => "in",
            DeltaVariant::Ex => "ex",
            DeltaVariant::Off => "off",
        }
    }
}

impl fmt::Display for DeltaVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DeltaVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "default" => Ok(DeltaVariant::Default),
            "in" => Ok(DeltaVariant::In),
            "ex" => Ok(DeltaVariant::Ex),
            "off" => Ok(DeltaVariant::Off),
            other => Err(Error::InvalidConfig(format!(
                "unknown delta variant {other:?} (expected default, in, ex or off)"
            ))),
        }
    }
}

#[inline]
fn relu(x: f64) -> f64 {
    x.max(0.0)
}

/// Include/exclude adjustment for one candidate.
pub fn delta(s_lambda: f64, s_in: f64, s_ex: f64, variant: DeltaVariant) -> Result<f64> {
    if !(s_lambda.is_finite() && s_in.is_finite() && s_ex.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "delta inputs must be finite (s_lambda={s_lambda}, s_in={s_in}, s_ex={s_ex})"
        )));
    }
    Ok(match variant {
        DeltaVariant::Default => relu(s_lambda - s_ex) - relu(s_lambda - s_in),
        DeltaVariant::In => relu(s_lambda - s_ex) + relu(s_in - s_lambda),
        DeltaVariant::Ex => -relu(s_ex - s_lambda) - relu(s_lambda - s_in),
        DeltaVariant::Off => 0.0,
    })
}

/// Scoring switches for the second stage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RerankOptions {
    pub variant: DeltaVariant,
    pub use_s_m: bool,
    pub use_s_lambda: bool,
    /// Min-max normalize `s_m` over the candidate set before summing.
    pub normalize_s_m: bool,
}

impl Default for RerankOptions {
    fn default() -> Self {
        Self {
            variant: DeltaVariant::Default,
            use_s_m: true,
            use_s_lambda: true,
            normalize_s_m: false,
        }
    }
}

/// A re-ranked candidate with every score term that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedResult {
    pub id: String,
    pub position: usize,
    pub final_score: f64,
    /// Modification-text similarity (normalized when `normalize_s_m` is set).
    pub s_m: f64,
    pub s_lambda: f64,
    pub s_in: f64,
    pub s_ex: f64,
    pub delta: f64,
}

/// Sum of the enabled terms, in a fixed order so that it can be recomputed
/// bit-exactly from a [`RankedResult`].
pub fn combine(s_m: f64, s_lambda: f64, delta: f64, options: &RerankOptions) -> f64 {
    let s_m = if options.use_s_m { s_m } else { 0.0 };
    let s_lambda = if options.use_s_lambda { s_lambda } else { 0.0 };
    s_m + s_lambda + delta
}

/// Re-scores every candidate and sorts by descending final score, ties by
/// bundle position. The output holds exactly the input candidates.
pub fn rerank(
    candidates: &CandidateSet,
    query: &QueryInstance,
    store: &EmbeddingStore,
    options: &RerankOptions,
) -> Result<Vec<RankedResult>> {
    query.validate()?;
    let mut rows = Vec::with_capacity(candidates.len());
    for hit in &candidates.hits {
        let v = store
            .get(&hit.id)
            .ok_or_else(|| Error::UnknownId(hit.id.clone()))?;
        let s_m = cosine(&query.mod_text_embedding, v)?;
        let s_in = cosine(&query.include_embedding, v)?;
        let s_ex = cosine(&query.exclude_embedding, v)?;
        rows.push((hit, s_m, s_in, s_ex));
    }

    let s_m_values: Vec<f64> = if options.normalize_s_m && !rows.is_empty() {
        minmax_normalize(&rows.iter().map(|r| r.1).collect::<Vec<_>>())?
    } else {
        rows.iter().map(|r| r.1).collect()
    };

    let mut ranked = rows
        .into_iter()
        .zip(s_m_values)
        .map(|((hit, _, s_in, s_ex), s_m)| {
            let d = delta(hit.s_lambda, s_in, s_ex, options.variant)?;
            Ok(RankedResult {
                id: hit.id.clone(),
                position: hit.position,
                final_score: combine(s_m, hit.s_lambda, d, options),
                s_m,
                s_lambda: hit.s_lambda,
                s_in,
                s_ex,
                delta: d,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    ranked.sort_by(|a, b| {
        b.final_score
            .partial_cmp(&a.final_score)
            .unwrap_or(Ordering::Equal)
            .then(a.position.cmp(&b.position))
    });
    Ok(ranked)
}
