//! Both stages for one query.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::gmix::{expand_for_reference, CandidateSet, RetrievalConfig};
use crate::rerank::{rerank, QueryInstance, RankedResult, RerankOptions};
use crate::store::EmbeddingStore;

/// Which text embedding is mixed with the reference image in the first stage.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TextArm {
    /// The generated target description.
    #[default]
    TargetDesc,
    /// The raw modification text.
    ModText,
}

impl std::str::FromStr for TextArm {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "target_desc" => Ok(TextArm::TargetDesc),
            "mod_text" => Ok(TextArm::ModText),
            other => Err(crate::Error::InvalidConfig(format!(
                "unknown text arm {other:?} (expected target_desc or mod_text)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub retrieval: RetrievalConfig,
    pub rerank: RerankOptions,
    /// When false the first-stage order is the final order.
    pub rerank_enabled: bool,
    pub text_arm: TextArm,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            retrieval: RetrievalConfig::default(),
            rerank: RerankOptions::default(),
            rerank_enabled: true,
            text_arm: TextArm::TargetDesc,
        }
    }
}

/// Everything produced for one query.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryResult {
    pub candidates: CandidateSet,
    /// `None` when re-ranking is disabled.
    pub reranked: Option<Vec<RankedResult>>,
}

impl QueryResult {
    /// Final ranked ids with the score that ordered them.
    pub fn ranking(&self) -> (Vec<String>, Vec<f64>) {
        match &self.reranked {
            Some(rows) => rows.iter().map(|r| (r.id.clone(), r.final_score)).unzip(),
            None => self
                .candidates
                .hits
                .iter()
                .map(|h| (h.id.clone(), h.s_lambda))
                .unzip(),
        }
    }

    pub fn ranked_ids(&self) -> Vec<String> {
        self.ranking().0
    }
}

/// Expands the query over the ratio grid, then re-ranks the candidates.
pub fn run_query(
    query: &QueryInstance,
    store: &EmbeddingStore,
    config: &PipelineConfig,
) -> Result<QueryResult> {
    query.validate()?;
    let text = match config.text_arm {
        TextArm::TargetDesc => &query.target_desc_embedding,
        TextArm::ModText => &query.mod_text_embedding,
    };
    let candidates = expand_for_reference(
        text,
        &query.ref_embedding,
        store,
        &config.retrieval,
        query.reference_id.as_deref(),
    )?;
    let reranked = if config.rerank_enabled {
        Some(rerank(&candidates, query, store, &config.rerank)?)
    } else {
        None
    };
    Ok(QueryResult {
        candidates,
        reranked,
    })
}
