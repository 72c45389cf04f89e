//! Command implementations behind the `gmixer` binary.
//!
//! Exit codes: 0 success, 1 validation failure, 2 runtime failure.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::captions::{CaptionBundle, CaptionProvider, CaptionRequest, ImageRef};
use crate::error::{Error, Result};
use crate::gmix::LambdaGrid;
use crate::manifest::{
    read_json_lines, to_json_lines, Dataset, QueryRecord, RunManifest, TextRole,
};
use crate::metrics::{evaluate, load_ground_truth};
use crate::pipeline::{run_query, TextArm};
use crate::rerank::DeltaVariant;
use crate::store::{write_file, EmbeddingStore};
use crate::synth::{generate, SynthSpec};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

pub const RANKINGS_FILE: &str = "rankings.jsonl";
pub const REPORT_FILE: &str = "report.json";

/// A command failure with its exit code.
#[derive(Debug, thiserror::Error)]
pub enum CommandError {
    #[error("validation failed with {} issue(s)", .0.issues.len())]
    Validation(ValidationReport),
    #[error(transparent)]
    Runtime(#[from] Error),
}

impl CommandError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CommandError::Validation(_) => EXIT_VALIDATION,
            CommandError::Runtime(_) => EXIT_RUNTIME,
        }
    }
}

/// One problem found by [`cmd_validate`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Issue {
    /// Stable class name, e.g. `bad_magic` or `unresolved_reference`.
    pub kind: String,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub query_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub role: Option<String>,
}

impl Issue {
    fn new(kind: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            kind: kind.into(),
            message: message.into(),
            query_id: None,
            role: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub issues: Vec<Issue>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.issues.is_empty()
    }

    pub fn exit_code(&self) -> i32 {
        if self.is_clean() {
            EXIT_OK
        } else {
            EXIT_VALIDATION
        }
    }

    pub fn kinds(&self) -> Vec<&str> {
        self.issues.iter().map(|i| i.kind.as_str()).collect()
    }
}

fn load_issue(path: &Path, err: Error) -> Issue {
    let kind = match &err {
        Error::Bundle(b) => b.class().to_owned(),
        Error::Io { .. } => "io".to_owned(),
        _ => "load".to_owned(),
    };
    Issue::new(kind, format!("{}: {err}", path.display()))
}

/// Checks bundles, their dimensions, query references and ground truth.
pub fn validate_manifest(manifest: &RunManifest) -> ValidationReport {
    let mut issues = Vec::new();

    if let Err(e) = manifest.retrieval.validate() {
        issues.push(Issue::new("config", e.to_string()));
    }
    if manifest.workers == 0 {
        issues.push(Issue::new("config", "workers must be at least 1"));
    }

    let mut load = |label: &str, path: &Path| -> Option<EmbeddingStore> {
        let resolved = manifest.resolve(path);
        match EmbeddingStore::load_bundle(&resolved) {
            Ok(store) => Some(store),
            Err(e) => {
                let mut issue = load_issue(&resolved, e);
                issue.role = Some(label.to_owned());
                issues.push(issue);
                None
            }
        }
    };
    let images = load("image", &manifest.image_bundle);
    let texts: Vec<(TextRole, Option<EmbeddingStore>)> = TextRole::ALL
        .iter()
        .map(|&role| (role, load(role.as_str(), manifest.text_bundles.path(role))))
        .collect();

    if let Some(images) = &images {
        for (role, store) in &texts {
            if let Some(store) = store {
                if store.dim() != images.dim() {
                    issues.push(Issue {
                        role: Some(role.to_string()),
                        ..Issue::new(
                            "dimension_mismatch",
                            format!(
                                "{role} bundle has dimension {}, image bundle has {}",
                                store.dim(),
                                images.dim()
                            ),
                        )
                    });
                }
            }
        }
    }

    let queries_path = manifest.resolve(&manifest.queries);
    match read_json_lines::<QueryRecord>(&queries_path) {
        Err(e) => issues.push(Issue::new("queries", e.to_string())),
        Ok(queries) => {
            let mut seen = HashSet::new();
            for q in &queries {
                if !seen.insert(q.query_id.as_str()) {
                    issues.push(Issue {
                        query_id: Some(q.query_id.clone()),
                        ..Issue::new("duplicate_query", format!("query {:?} repeats", q.query_id))
                    });
                }
                let unresolved = |role: &str, id: &str| Issue {
                    query_id: Some(q.query_id.clone()),
                    role: Some(role.to_owned()),
                    ..Issue::new(
                        "unresolved_reference",
                        format!("query {:?}: {role} id {id:?} not found", q.query_id),
                    )
                };
                if let Some(images) = &images {
                    if images.get(&q.reference_id).is_none() {
                        issues.push(unresolved("reference", &q.reference_id));
                    }
                }
                for (role, store) in &texts {
                    if let Some(store) = store {
                        let id = q.text_id(*role);
                        if store.get(id).is_none() {
                            issues.push(unresolved(role.as_str(), id));
                        }
                    }
                }
            }
        }
    }

    if let Some(gt_path) = &manifest.ground_truth {
        let gt_path = manifest.resolve(gt_path);
        match load_ground_truth(&gt_path) {
            Err(e) => issues.push(Issue::new("ground_truth", e.to_string())),
            Ok(gts) => {
                if let Some(images) = &images {
                    for gt in &gts {
                        for t in gt.targets.iter().filter(|t| images.get(t).is_none()) {
                            issues.push(Issue {
                                query_id: Some(gt.query_id.clone()),
                                ..Issue::new(
                                    "unknown_target",
                                    format!("target {t:?} is not in the image bundle"),
                                )
                            });
                        }
                    }
                }
            }
        }
    }

    ValidationReport { issues }
}

/// Loads and validates the manifest at `path`.
pub fn cmd_validate(path: impl AsRef<Path>) -> ValidationReport {
    match RunManifest::load(path.as_ref()) {
        Ok(manifest) => validate_manifest(&manifest),
        Err(e) => ValidationReport {
            issues: vec![Issue::new("manifest", e.to_string())],
        },
    }
}

/// Command-line overrides applied on top of a manifest.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunOverrides {
    pub grid: Option<LambdaGrid>,
    pub topk: Option<usize>,
    pub delta: Option<DeltaVariant>,
    pub no_sm: bool,
    pub no_slambda: bool,
    pub no_rerank: bool,
    pub exclude_reference: bool,
    pub normalize_s_m: bool,
    pub text_arm: Option<TextArm>,
    pub workers: Option<usize>,
    pub output: Option<PathBuf>,
    /// Skip evaluation even if the manifest names ground truth.
    pub no_eval: bool,
}

impl RunOverrides {
    pub fn apply(&self, manifest: &mut RunManifest) {
        if let Some(grid) = self.grid {
            manifest.retrieval.grid = grid;
        }
        if let Some(k) = self.topk {
            manifest.retrieval.k_per_lambda = k;
        }
        if let Some(d) = self.delta {
            manifest.delta_variant = d;
        }
        manifest.toggles.use_s_m &= !self.no_sm;
        manifest.toggles.use_s_lambda &= !self.no_slambda;
        manifest.toggles.rerank_enabled &= !self.no_rerank;
        manifest.retrieval.exclude_reference |= self.exclude_reference;
        manifest.normalize_s_m |= self.normalize_s_m;
        if let Some(arm) = self.text_arm {
            manifest.text_arm = arm;
        }
        if let Some(w) = self.workers {
            manifest.workers = w;
        }
        if let Some(out) = &self.output {
            manifest.output = out.clone();
        }
        if self.no_eval {
            manifest.ground_truth = None;
        }
    }
}

/// One line of `rankings.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingLine {
    pub query_id: String,
    pub ranking: Vec<String>,
    pub scores: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub rankings_path: PathBuf,
    pub report_path: Option<PathBuf>,
    pub n_queries: usize,
    /// `(query_id, error)` for queries that could not be processed.
    pub failed: Vec<(String, String)>,
}

/// Runs both stages for every query of a validated manifest.
pub fn run_manifest(manifest: &RunManifest) -> Result<RunSummary, CommandError> {
    let report = validate_manifest(manifest);
    if !report.is_clean() {
        return Err(CommandError::Validation(report));
    }
    let dataset = Dataset::load(manifest)?;
    let config = manifest.pipeline_config();

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(manifest.workers)
        .build()
        .map_err(|e| Error::InvalidConfig(format!("worker pool: {e}")))?;
    let lines: Vec<RankingLine> = pool.install(|| {
        dataset
            .queries
            .par_iter()
            .map(|record| {
                let outcome = dataset
                    .instance(record)
                    .and_then(|q| run_query(&q, &dataset.images, &config));
                match outcome {
                    Ok(result) => {
                        let (ranking, scores) = result.ranking();
                        RankingLine {
                            query_id: record.query_id.clone(),
                            ranking,
                            scores,
                            error: None,
                        }
                    }
                    Err(e) => RankingLine {
                        query_id: record.query_id.clone(),
                        ranking: Vec::new(),
                        scores: Vec::new(),
                        error: Some(e.to_string()),
                    },
                }
            })
            .collect()
    });

    let out_dir = manifest.resolve(&manifest.output);
    fs::create_dir_all(&out_dir).map_err(|e| Error::io(&out_dir, e))?;
    let rankings_path = out_dir.join(RANKINGS_FILE);
    write_file(&rankings_path, to_json_lines(&lines).as_bytes())?;

    let failed: Vec<(String, String)> = lines
        .iter()
        .filter_map(|l| l.error.clone().map(|e| (l.query_id.clone(), e)))
        .collect();

    let report_path = match &manifest.ground_truth {
        None => None,
        Some(gt_path) => {
            let gts = load_ground_truth(manifest.resolve(gt_path))?;
            let rankings: BTreeMap<String, Vec<String>> = lines
                .iter()
                .filter(|l| l.error.is_none())
                .map(|l| (l.query_id.clone(), l.ranking.clone()))
                .collect();
            let echo = serde_json::json!({
                "pipeline": config,
                "grid": config.retrieval.grid.ratios()?,
                "recall": "hit within top k",
                "map_denominator": "min(|targets|, k)",
                "failed_queries": failed.len(),
            });
            let report = evaluate(&rankings, &gts, &manifest.metrics, echo)?;
            let path = out_dir.join(REPORT_FILE);
            let text = serde_json::to_string_pretty(&report).expect("report serializes") + "\n";
            write_file(&path, text.as_bytes())?;
            Some(path)
        }
    };

    Ok(RunSummary {
        rankings_path,
        report_path,
        n_queries: lines.len(),
        failed,
    })
}

/// Loads `path`, applies `overrides` and runs it.
pub fn cmd_run(
    path: impl AsRef<Path>,
    overrides: &RunOverrides,
) -> Result<RunSummary, CommandError> {
    let mut manifest = match RunManifest::load(path.as_ref()) {
        Ok(m) => m,
        Err(e) => {
            return Err(CommandError::Validation(ValidationReport {
                issues: vec![Issue::new("manifest", e.to_string())],
            }))
        }
    };
    overrides.apply(&mut manifest);
    run_manifest(&manifest)
}

/// One line of a caption queries file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaptionQuery {
    pub query_id: String,
    pub modification_text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_id: Option<String>,
    /// Image file, relative to the queries file; sent as base64.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_path: Option<PathBuf>,
}

/// One line of a captions output file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaptionLine {
    pub query_id: String,
    #[serde(flatten)]
    pub captions: CaptionBundle,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaptionFailure {
    pub query_id: String,
    pub error: String,
    pub retriable: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CaptionsSummary {
    pub written: usize,
    pub failures: Vec<CaptionFailure>,
    pub failures_path: Option<PathBuf>,
}

/// Path of the failure sidecar for a captions output file.
pub fn failures_path(out: &Path) -> PathBuf {
    let mut name = out.file_name().unwrap_or_default().to_os_string();
    name.push(".failures.jsonl");
    out.with_file_name(name)
}

/// Generates captions for every query, writing successes to `out` in input
/// order and failures to a `.failures.jsonl` sidecar.
pub fn cmd_captions(
    queries_path: impl AsRef<Path>,
    provider: &dyn CaptionProvider,
    out: impl AsRef<Path>,
) -> Result<CaptionsSummary> {
    let queries_path = queries_path.as_ref();
    let out = out.as_ref();
    let queries: Vec<CaptionQuery> = read_json_lines(queries_path)?;
    let base = queries_path.parent().unwrap_or(Path::new(""));

    let results: Vec<std::result::Result<CaptionLine, CaptionFailure>> = queries
        .par_iter()
        .map(|q| {
            let fail = |error: String, retriable| CaptionFailure {
                query_id: q.query_id.clone(),
                error,
                retriable,
            };
            let image = match (&q.image_path, &q.image_id) {
                (Some(p), _) => {
                    let p = base.join(p);
                    ImageRef::Bytes(
                        fs::read(&p).map_err(|e| fail(format!("{}: {e}", p.display()), false))?,
                    )
                }
                (None, Some(id)) => ImageRef::Id(id.clone()),
                (None, None) => {
                    return Err(fail(
                        "query has neither image_id nor image_path".into(),
                        false,
                    ))
                }
            };
            let request = CaptionRequest {
                query_id: q.query_id.clone(),
                image,
                modification_text: q.modification_text.clone(),
            };
            provider
                .generate_captions(&request)
                .map(|captions| CaptionLine {
                    query_id: q.query_id.clone(),
                    captions,
                })
                .map_err(|e| fail(e.message, e.retriable))
        })
        .collect();

    let (ok, failures): (Vec<_>, Vec<_>) = results.into_iter().partition(|r| r.is_ok());
    let ok: Vec<CaptionLine> = ok.into_iter().map(|r| r.expect("partitioned")).collect();
    let failures: Vec<CaptionFailure> = failures
        .into_iter()
        .map(|r| r.expect_err("partitioned"))
        .collect();

    write_file(out, to_json_lines(&ok).as_bytes())?;
    let sidecar = failures_path(out);
    let failures_path = if failures.is_empty() {
        if sidecar.exists() {
            fs::remove_file(&sidecar).map_err(|e| Error::io(&sidecar, e))?;
        }
        None
    } else {
        write_file(&sidecar, to_json_lines(&failures).as_bytes())?;
        Some(sidecar)
    };
    Ok(CaptionsSummary {
        written: ok.len(),
        failures,
        failures_path,
    })
}

/// Generates a synthetic corpus from a JSON spec file into `out_dir`.
/// Returns the path of the generated manifest.
pub fn cmd_synth(spec_path: impl AsRef<Path>, out_dir: impl AsRef<Path>) -> Result<PathBuf> {
    let spec_path = spec_path.as_ref();
    let text = fs::read_to_string(spec_path).map_err(|e| Error::io(spec_path, e))?;
    let spec: SynthSpec = serde_json::from_str(&text).map_err(|e| Error::json(spec_path, e))?;
    generate(&spec)?.write(out_dir)
}
