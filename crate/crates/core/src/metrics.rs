//! Retrieval metrics: hit-based Recall@K, mAP@K and subset Recall@K.
//!
//! * Recall@K is 1 when any target appears in the first `K` positions.
//! * AP@K sums precision@i over target hits at ranks `i <= K` and divides
//!   by `min(|targets|, K)`.
//! * Subset Recall@K drops ids outside the query's gallery subset, keeping
//!   order, then applies Recall@K.
//!
//! Dataset values are means over ground-truth queries. A query with no
//! ranking scores zero and produces a warning.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relevant ids for one query.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroundTruth {
    pub query_id: String,
    pub targets: BTreeSet<String>,
    /// Restricted gallery for subset recall.
    pub subset: Option<BTreeSet<String>>,
}

impl GroundTruth {
    pub fn new<I, S>(query_id: impl Into<String>, targets: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let query_id = query_id.into();
        let targets: BTreeSet<String> = targets.into_iter().map(Into::into).collect();
        if targets.is_empty() {
            return Err(Error::InvalidInput(format!(
                "query {query_id:?} has no targets"
            )));
        }
        Ok(Self {
            query_id,
            targets,
            subset: None,
        })
    }

    pub fn with_subset<I, S>(mut self, subset: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.subset = Some(subset.into_iter().map(Into::into).collect());
        self
    }
}

fn check_ranking<S: AsRef<str>>(ranking: &[S], k: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::InvalidInput("k must be at least 1".into()));
    }
    let mut seen = HashSet::with_capacity(ranking.len());
    for id in ranking {
        if !seen.insert(id.as_ref()) {
            return Err(Error::InvalidInput(format!(
                "ranking lists {:?} more than once",
                id.as_ref()
            )));
        }
    }
    Ok(())
}

/// 1.0 if any target is within the first `k` ranks, else 0.0.
pub fn recall_at_k<S: AsRef<str>>(ranking: &[S], gt: &GroundTruth, k: usize) -> Result<f64> {
    check_ranking(ranking, k)?;
    let hit = ranking
        .iter()
        .take(k)
        .any(|id| gt.targets.contains(id.as_ref()));
    Ok(if hit { 1.0 } else { 0.0 })
}

/// Average precision at `k` with denominator `min(|targets|, k)`.
pub fn map_at_k<S: AsRef<str>>(ranking: &[S], gt: &GroundTruth, k: usize) -> Result<f64> {
    check_ranking(ranking, k)?;
    let mut hits = 0usize;
    let mut precision_sum = 0.0;
    for (i, id) in ranking.iter().take(k).enumerate() {
        if gt.targets.contains(id.as_ref()) {
            hits += 1;
            precision_sum += hits as f64 / (i + 1) as f64;
        }
    }
    Ok(precision_sum / gt.targets.len().min(k) as f64)
}

/// Recall@k after restricting the ranking to the query's subset.
pub fn subset_recall_at_k<S: AsRef<str>>(ranking: &[S], gt: &GroundTruth, k: usize) -> Result<f64> {
    let subset = gt
        .subset
        .as_ref()
        .ok_or_else(|| Error::InvalidInput(format!("query {:?} has no subset", gt.query_id)))?;
    let filtered: Vec<&str> = ranking
        .iter()
        .map(AsRef::as_ref)
        .filter(|id| subset.contains(*id))
        .collect();
    recall_at_k(&filtered, gt, k)
}

/// Cutoffs to report.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct MetricSpec {
    pub recall_ks: Vec<usize>,
    pub map_ks: Vec<usize>,
    pub subset_recall_ks: Vec<usize>,
}

impl Default for MetricSpec {
    fn default() -> Self {
        Self {
            recall_ks: vec![1, 5, 10, 50],
            map_ks: vec![5, 10, 25, 50],
            subset_recall_ks: vec![1, 2, 3],
        }
    }
}

/// Dataset-level metric table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// metric name -> cutoff -> mean value.
    pub per_k: BTreeMap<String, BTreeMap<usize, f64>>,
    pub n_queries: usize,
    /// Queries contributing to subset recall.
    pub n_subset_queries: usize,
    pub warnings: Vec<String>,
    pub config_echo: serde_json::Value,
}

impl EvalReport {
    pub fn get(&self, metric: &str, k: usize) -> Option<f64> {
        self.per_k.get(metric)?.get(&k).copied()
    }
}

/// Scores `rankings` (query id -> ranked ids) against every ground-truth
/// query.
pub fn evaluate<S: AsRef<str>>(
    rankings: &BTreeMap<String, Vec<S>>,
    ground_truth: &[GroundTruth],
    spec: &MetricSpec,
    config_echo: serde_json::Value,
) -> Result<EvalReport> {
    let mut values: BTreeMap<&str, BTreeMap<usize, Vec<f64>>> = BTreeMap::new();
    let mut warnings = Vec::new();
    let mut n_subset = 0usize;
    let empty: Vec<S> = Vec::new();

    for gt in ground_truth {
        let ranking = match rankings.get(&gt.query_id) {
            Some(r) => r.as_slice(),
            None => {
                warnings.push(format!(
                    "query {:?} has no ranking; counted as zero",
                    gt.query_id
                ));
                empty.as_slice()
            }
        };
        for &k in &spec.recall_ks {
            values
                .entry("recall")
                .or_default()
                .entry(k)
                .or_default()
                .push(recall_at_k(ranking, gt, k)?);
        }
        for &k in &spec.map_ks {
            values
                .entry("map")
                .or_default()
                .entry(k)
                .or_default()
                .push(map_at_k(ranking, gt, k)?);
        }
        if gt.subset.is_some() {
            n_subset += 1;
            for &k in &spec.subset_recall_ks {
                values
                    .entry("subset_recall")
                    .or_default()
                    .entry(k)
                    .or_default()
                    .push(subset_recall_at_k(ranking, gt, k)?);
            }
        }
    }

    let n = ground_truth.len();
    if n_subset > 0 && n_subset < n {
        warnings.push(format!(
            "{} of {n} queries have no subset; subset recall averages over {n_subset}",
            n - n_subset
        ));
    }
    // Summing in sorted order makes the means independent of query order.
    let per_k = values
        .into_iter()
        .map(|(name, by_k)| {
            let denom = if name == "subset_recall" { n_subset } else { n };
            let means = by_k
                .into_iter()
                .map(|(k, mut vs)| {
                    vs.sort_by(f64::total_cmp);
                    let sum: f64 = vs.iter().sum();
                    (k, if denom == 0 { 0.0 } else { sum / denom as f64 })
                })
                .collect();
            (name.to_owned(), means)
        })
        .collect();

    Ok(EvalReport {
        per_k,
        n_queries: n,
        n_subset_queries: n_subset,
        warnings,
        config_echo,
    })
}

#[derive(Debug, Serialize, Deserialize)]
struct GroundTruthRecord {
    targets: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    subset: Option<Vec<String>>,
}

/// Parses a ground-truth JSON object `{query_id: {"targets": [...], "subset": [...]}}`.
pub fn parse_ground_truth(json: &str) -> Result<Vec<GroundTruth>, serde_json::Error> {
    let records: BTreeMap<String, GroundTruthRecord> = serde_json::from_str(json)?;
    records
        .into_iter()
        .map(|(query_id, rec)| {
            let gt = GroundTruth::new(query_id, rec.targets)
                .map_err(|e| serde::de::Error::custom(e.to_string()))?;
            Ok(match rec.subset {
                Some(subset) => gt.with_subset(subset),
                None => gt,
            })
        })
        .collect()
}

pub fn load_ground_truth(path: impl AsRef<Path>) -> Result<Vec<GroundTruth>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_ground_truth(&text).map_err(|e| Error::json(path, e))
}

pub fn ground_truth_to_json(ground_truth: &[GroundTruth]) -> String {
    let records: BTreeMap<&str, GroundTruthRecord> = ground_truth
        .iter()
        .map(|gt| {
            (
                gt.query_id.as_str(),
                GroundTruthRecord {
                    targets: gt.targets.iter().cloned().collect(),
                    subset: gt.subset.as_ref().map(|s| s.iter().cloned().collect()),
                },
            )
        })
        .collect();
    serde_json::to_string_pretty(&records).expect("ground truth serializes")
}
