//! First stage: geodesic query expansion over a grid of mix ratios.
//!
//! For every ratio on the grid the text and image features are mixed with
//! [`slerp`], the store is searched for the top `K` images, and that ratio's
//! `K` scores are min-max normalized. The per-ratio results are unioned; a
//! candidate seen at several ratios keeps its largest normalized score.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::store::{EmbeddingStore, ScoredId};
use crate::vector::{slerp, MixRatio, UnitVector};

fn round6(x: f64) -> f64 {
    (x * 1e6).round() / 1e6
}

/// Ascending ratios `start, start + step, ...` capped at `end`, which is
/// always included. Values are rounded to 6 decimals.
pub fn build_grid(start: MixRatio, end: MixRatio, step: f64) -> Result<Vec<MixRatio>> {
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::InvalidConfig(format!(
            "grid step must be positive, got {step}"
        )));
    }
    if start > end {
        return Err(Error::InvalidConfig(format!(
            "grid start {start} exceeds end {end}"
        )));
    }
    let end_value = round6(end.value());
    let mut ratios = Vec::new();
    for i in 0u32.. {
        let value = round6(start.value() + f64::from(i) * step);
        if value >= end_value {
            break;
        }
        ratios.push(MixRatio::new(value)?);
    }
    ratios.push(MixRatio::new(end_value)?);
    Ok(ratios)
}

/// A closed ratio range sampled at a fixed step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LambdaGrid {
    pub start: MixRatio,
    pub end: MixRatio,
    pub step: f64,
}

impl LambdaGrid {
    pub fn new(start: f64, end: f64, step: f64) -> Result<Self> {
        let grid = Self {
            start: MixRatio::new(start)?,
            end: MixRatio::new(end)?,
            step,
        };
        grid.ratios()?;
        Ok(grid)
    }

    /// A grid holding the single ratio `lambda`.
    pub fn fixed(lambda: f64) -> Result<Self> {
        Self::new(lambda, lambda, 1.0)
    }

    pub fn ratios(&self) -> Result<Vec<MixRatio>> {
        build_grid(self.start, self.end, self.step)
    }
}

impl Default for LambdaGrid {
    fn default() -> Self {
        Self {
            start: MixRatio::new(0.7).expect("valid ratio"),
            end: MixRatio::TEXT,
            step: 0.05,
        }
    }
}

/// Parses `start:end:step`, e.g. `0.7:1.0:0.05`.
impl FromStr for LambdaGrid {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        let [start, end, step] = parts.as_slice() else {
            return Err(Error::InvalidConfig(format!(
                "grid {s:?} is not of the form start:end:step"
            )));
        };
        let parse = |field: &str, name: &str| {
            field
                .trim()
                .parse::<f64>()
                .map_err(|_| Error::InvalidConfig(format!("grid {name} {field:?} is not a number")))
        };
        Self::new(
            parse(start, "start")?,
            parse(end, "end")?,
            parse(step, "step")?,
        )
    }
}

impl fmt::Display for LambdaGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.start, self.end, self.step)
    }
}

/// First-stage settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetrievalConfig {
    pub grid: LambdaGrid,
    /// Images retrieved per ratio (`K`).
    pub k_per_lambda: usize,
    /// Drop the query's own reference image from every per-ratio search.
    pub exclude_reference: bool,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        Self {
            grid: LambdaGrid::default(),
            k_per_lambda: 100,
            exclude_reference: false,
        }
    }
}

impl RetrievalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k_per_lambda == 0 {
            return Err(Error::InvalidConfig(
                "k_per_lambda must be at least 1".into(),
            ));
        }
        self.grid.ratios().map(drop)
    }
}

/// Maps each score to `(x - min) / (max - min)`. A constant list maps to
/// all ones.
pub fn minmax_normalize(scores: &[f64]) -> Result<Vec<f64>> {
    let (min, max) = scores
        .iter()
        .fold(None, |acc: Option<(f64, f64)>, &x| match acc {
            None => Some((x, x)),
            Some((lo, hi)) => Some((lo.min(x), hi.max(x))),
        })
        .ok_or_else(|| Error::InvalidInput("cannot normalize an empty score list".into()))?;
    if scores.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidInput("scores must be finite".into()));
    }
    let range = max - min;
    if range == 0.0 {
        return Ok(vec![1.0; scores.len()]);
    }
    Ok(scores.iter().map(|x| (x - min) / range).collect())
}

/// The top-`K` result at one mix ratio.
#[derive(Debug, Clone, PartialEq)]
pub struct LambdaRetrieval {
    pub lambda: MixRatio,
    pub hits: Vec<ScoredId>,
}

/// A first-stage candidate after union and max-aggregation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateHit {
    pub id: String,
    /// Bundle position, the tie-break key.
    pub position: usize,
    /// Largest per-ratio normalized score, in `[0, 1]`.
    pub s_lambda: f64,
    /// Raw cosine at every ratio that retrieved this candidate, in grid order.
    pub raw_by_lambda: Vec<(MixRatio, f64)>,
    /// Ratio attaining `s_lambda`; ties go to the smaller ratio.
    pub best_lambda: MixRatio,
}

/// Union of per-ratio retrievals, sorted by descending `s_lambda`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateSet {
    pub hits: Vec<CandidateHit>,
    pub config: RetrievalConfig,
}

impl CandidateSet {
    pub fn len(&self) -> usize {
        self.hits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hits.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.hits.iter().map(|h| h.id.as_str())
    }

    pub fn contains(&self, id: &str) -> bool {
        self.hits.iter().any(|h| h.id == id)
    }
}

/// Runs the per-ratio searches without merging them.
///
/// `reference_id` is skipped in every search when
/// `config.exclude_reference` is set.
pub fn retrieve_per_lambda(
    f_t: &UnitVector,
    f_i: &UnitVector,
    store: &EmbeddingStore,
    config: &RetrievalConfig,
    reference_id: Option<&str>,
) -> Result<Vec<LambdaRetrieval>> {
    config.validate()?;
    if store.is_empty() {
        return Err(Error::InvalidInput("candidate store is empty".into()));
    }
    let skip = reference_id
        .filter(|_| config.exclude_reference)
        .and_then(|id| store.position(id));

    config
        .grid
        .ratios()?
        .into_iter()
        .map(|lambda| {
            let query = slerp(f_t, f_i, lambda)?;
            let hits =
                store.top_k_filtered(&query, config.k_per_lambda, |pos| Some(pos) != skip)?;
            Ok(LambdaRetrieval { lambda, hits })
        })
        .collect()
}

/// Normalizes each retrieval over its own scores, unions them and keeps the
/// maximum normalized score per candidate.
pub fn union_normalized(
    retrievals: &[LambdaRetrieval],
    config: &RetrievalConfig,
) -> Result<CandidateSet> {
    let mut by_position: HashMap<usize, CandidateHit> = HashMap::new();
    for retrieval in retrievals {
        if retrieval.hits.is_empty() {
            continue;
        }
        let raw: Vec<f64> = retrieval.hits.iter().map(|h| h.score).collect();
        let normalized = minmax_normalize(&raw)?;
        for (hit, norm) in retrieval.hits.iter().zip(normalized) {
            let entry = by_position
                .entry(hit.position)
                .or_insert_with(|| CandidateHit {
                    id: hit.id.clone(),
                    position: hit.position,
                    s_lambda: norm,
                    raw_by_lambda: Vec::new(),
                    best_lambda: retrieval.lambda,
                });
            entry.raw_by_lambda.push((retrieval.lambda, hit.score));
            let better = norm > entry.s_lambda
                || (norm == entry.s_lambda && retrieval.lambda < entry.best_lambda);
            if better {
                entry.s_lambda = norm;
                entry.best_lambda = retrieval.lambda;
            }
        }
    }

    let mut hits: Vec<CandidateHit> = by_position.into_values().collect();
    for hit in &mut hits {
        hit.raw_by_lambda
            .sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(Ordering::Equal));
    }
    hits.sort_by(|a, b| {
        b.s_lambda
            .partial_cmp(&a.s_lambda)
            .unwrap_or(Ordering::Equal)
            .then(a.position.cmp(&b.position))
    });
    Ok(CandidateSet {
        hits,
        config: config.clone(),
    })
}

/// Full first stage: mix, search every ratio, normalize, union.
pub fn expand(
    f_t: &UnitVector,
    f_i: &UnitVector,
    store: &EmbeddingStore,
    config: &RetrievalConfig,
) -> Result<CandidateSet> {
    expand_for_reference(f_t, f_i, store, config, None)
}

/// [`expand`] with the query's reference image id, so that
/// `exclude_reference` can take effect.
pub fn expand_for_reference(
    f_t: &UnitVector,
    f_i: &UnitVector,
    store: &EmbeddingStore,
    config: &RetrievalConfig,
    reference_id: Option<&str>,
) -> Result<CandidateSet> {
    let retrievals = retrieve_per_lambda(f_t, f_i, store, config, reference_id)?;
    union_normalized(&retrievals, config)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ratio(x: f64) -> MixRatio {
        MixRatio::new(x).unwrap()
    }

    fn values(grid: &[MixRatio]) -> Vec<f64> {
        grid.iter().map(|r| r.value()).collect()
    }

    #[test]
    fn grid_with_default_step() {
        let grid = build_grid(ratio(0.7), ratio(1.0), 0.05).unwrap();
        assert_eq!(values(&grid), [0.70, 0.75, 0.80, 0.85, 0.90, 0.95, 1.00]);
    }

    #[test]
    fn grid_of_four_ratios() {
        let grid = build_grid(ratio(0.7), ratio(1.0), 0.1).unwrap();
        assert_eq!(values(&grid), [0.7, 0.8, 0.9, 1.0]);
    }

    #[test]
    fn grid_single_point_and_uneven_end() {
        assert_eq!(
            values(&build_grid(ratio(0.5), ratio(0.5), 0.1).unwrap()),
            [0.5]
        );
        assert_eq!(
            values(&build_grid(ratio(0.0), ratio(0.25), 0.1).unwrap()),
            [0.0, 0.1, 0.2, 0.25]
        );
    }

    #[test]
    fn grid_rejects_bad_config() {
        assert!(build_grid(ratio(0.7), ratio(1.0), 0.0).is_err());
        assert!(build_grid(ratio(0.7), ratio(1.0), -0.1).is_err());
        assert!(build_grid(ratio(0.9), ratio(0.7), 0.1).is_err());
    }

    #[test]
    fn grid_parses_colon_syntax() {
        let grid: LambdaGrid = "0.7:1.0:0.05".parse().unwrap();
        assert_eq!(grid, LambdaGrid::default());
        assert!("0.7:1.0".parse::<LambdaGrid>().is_err());
        assert!("0.7:x:0.1".parse::<LambdaGrid>().is_err());
        assert!("0.7:1.2:0.1".parse::<LambdaGrid>().is_err());
    }

    #[test]
    fn minmax_examples() {
        let close = |got: Vec<f64>, want: &[f64]| {
            assert_eq!(got.len(), want.len());
            for (g, w) in got.iter().zip(want) {
                assert!((g - w).abs() < 1e-12, "{got:?} vs {want:?}");
            }
        };
        close(
            minmax_normalize(&[0.2, 0.5, 0.8]).unwrap(),
            &[0.0, 0.5, 1.0],
        );
        assert_eq!(minmax_normalize(&[0.4, 0.4]).unwrap(), [1.0, 1.0]);
        close(
            minmax_normalize(&[-0.1, 0.0, 0.3]).unwrap(),
            &[0.0, 0.25, 1.0],
        );
        assert!(minmax_normalize(&[]).is_err());
    }

    #[test]
    fn single_ratio_expansion_equals_top_k() {
        let store = EmbeddingStore::from_entries(
            2,
            (0..12).map(|i| {
                let a = f64::from(i) * 0.5;
                (
                    format!("img{i}"),
                    UnitVector::normalize(vec![a.cos(), a.sin()]).unwrap(),
                )
            }),
        )
        .unwrap();
        let f_t = UnitVector::normalize(vec![1.0, 0.2]).unwrap();
        let f_i = UnitVector::normalize(vec![-0.3, 1.0]).unwrap();
        let config = RetrievalConfig {
            grid: LambdaGrid::fixed(1.0).unwrap(),
            k_per_lambda: 5,
            exclude_reference: false,
        };
        let set = expand(&f_t, &f_i, &store, &config).unwrap();
        let direct = store.top_k(&f_t, 5).unwrap();
        let raw: Vec<f64> = direct.iter().map(|h| h.score).collect();
        let norm = minmax_normalize(&raw).unwrap();
        assert_eq!(set.len(), 5);
        for ((hit, expected), n) in set.hits.iter().zip(&direct).zip(norm) {
            assert_eq!(hit.id, expected.id);
            assert_eq!(hit.s_lambda, n);
            assert_eq!(hit.raw_by_lambda, [(MixRatio::TEXT, expected.score)]);
        }
    }

    #[test]
    fn exclude_reference_removes_it_from_every_search() {
        let store = EmbeddingStore::from_entries(
            2,
            [
                ("ref", UnitVector::normalize(vec![0.0, 1.0]).unwrap()),
                ("a", UnitVector::normalize(vec![0.2, 1.0]).unwrap()),
                ("b", UnitVector::normalize(vec![1.0, 0.1]).unwrap()),
            ],
        )
        .unwrap();
        let f_t = UnitVector::normalize(vec![1.0, 0.0]).unwrap();
        let f_i = store.get("ref").unwrap().clone();
        let mut config = RetrievalConfig {
            grid: LambdaGrid::new(0.0, 1.0, 0.5).unwrap(),
            k_per_lambda: 3,
            exclude_reference: false,
        };
        let kept = expand_for_reference(&f_t, &f_i, &store, &config, Some("ref")).unwrap();
        assert!(kept.contains("ref"));
        config.exclude_reference = true;
        let dropped = expand_for_reference(&f_t, &f_i, &store, &config, Some("ref")).unwrap();
        assert!(!dropped.contains("ref"));
        assert_eq!(dropped.len(), 2);
    }

    #[test]
    fn best_lambda_prefers_smaller_ratio_on_ties() {
        let id = |s: &str, position| ScoredId {
            id: s.into(),
            score: 0.0,
            position,
        };
        let mk = |l: f64, scores: [f64; 2]| LambdaRetrieval {
            lambda: ratio(l),
            hits: vec![
                ScoredId {
                    score: scores[0],
                    ..id("x", 0)
                },
                ScoredId {
                    score: scores[1],
                    ..id("y", 1)
                },
            ],
        };
        let config = RetrievalConfig::default();
        let set = union_normalized(&[mk(0.8, [0.9, 0.1]), mk(0.9, [0.95, 0.2])], &config).unwrap();
        let x = set.hits.iter().find(|h| h.id == "x").unwrap();
        assert_eq!(x.s_lambda, 1.0);
        assert_eq!(x.best_lambda, ratio(0.8));
        assert_eq!(x.raw_by_lambda, [(ratio(0.8), 0.9), (ratio(0.9), 0.95)]);
        let y = set.hits.iter().find(|h| h.id == "y").unwrap();
        assert_eq!(y.s_lambda, 0.0);
        assert_eq!(y.best_lambda, ratio(0.8));
    }

    #[test]
    fn empty_store_is_an_error() {
        let v = UnitVector::basis(2, 0).unwrap();
        let store = EmbeddingStore::empty(2);
        assert!(expand(&v, &v, &store, &RetrievalConfig::default()).is_err());
    }
}
