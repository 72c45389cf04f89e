//! Run manifests, query files and the loaded bundle set they describe.
//!
//! Relative paths in a manifest resolve against the manifest's directory.

use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gmix::RetrievalConfig;
use crate::metrics::MetricSpec;
use crate::pipeline::{PipelineConfig, TextArm};
use crate::rerank::{DeltaVariant, QueryInstance, RerankOptions};
use crate::store::EmbeddingStore;

/// Bundle paths for the four text roles.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TextBundles {
    pub mod_text: PathBuf,
    pub target_desc: PathBuf,
    pub include: PathBuf,
    pub exclude: PathBuf,
}

/// The text embedding roles a query references.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TextRole {
    ModText,
    TargetDesc,
    Include,
    Exclude,
}

impl TextRole {
    pub const ALL: [TextRole; 4] = [
        TextRole::ModText,
        TextRole::TargetDesc,
        TextRole::Include,
        TextRole::Exclude,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TextRole::ModText => "mod_text",
            TextRole::TargetDesc => "target_desc",
            TextRole::Include => "include",
            TextRole::Exclude => "exclude",
        }
    }
}

impl fmt::Display for TextRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl TextBundles {
    pub fn path(&self, role: TextRole) -> &Path {
        match role {
            TextRole::ModText => &self.mod_text,
            TextRole::TargetDesc => &self.target_desc,
            TextRole::Include => &self.include,
            TextRole::Exclude => &self.exclude,
        }
    }
}

/// Ablation switches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Toggles {
    pub use_s_m: bool,
    pub use_s_lambda: bool,
    pub rerank_enabled: bool,
}

impl Default for Toggles {
    fn default() -> Self {
        Self {
            use_s_m: true,
            use_s_lambda: true,
            rerank_enabled: true,
        }
    }
}

fn default_workers() -> usize {
    4
}

/// Inputs and settings of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub image_bundle: PathBuf,
    pub text_bundles: TextBundles,
    pub queries: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ground_truth: Option<PathBuf>,
    #[serde(default)]
    pub retrieval: RetrievalConfig,
    #[serde(default)]
    pub delta_variant: DeltaVariant,
    #[serde(default)]
    pub toggles: Toggles,
    #[serde(default)]
    pub normalize_s_m: bool,
    #[serde(default)]
    pub text_arm: TextArm,
    #[serde(default)]
    pub metrics: MetricSpec,
    #[serde(default = "default_workers")]
    pub workers: usize,
    /// Output directory for `rankings.jsonl` and `report.json`.
    pub output: PathBuf,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl Default for RunManifest {
    fn default() -> Self {
        Self {
            image_bundle: PathBuf::new(),
            text_bundles: TextBundles::default(),
            queries: PathBuf::new(),
            ground_truth: None,
            retrieval: RetrievalConfig::default(),
            delta_variant: DeltaVariant::Default,
            toggles: Toggles::default(),
            normalize_s_m: false,
            text_arm: TextArm::TargetDesc,
            metrics: MetricSpec::default(),
            workers: default_workers(),
            output: PathBuf::from("out"),
            base_dir: PathBuf::new(),
        }
    }
}

impl RunManifest {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut manifest: RunManifest =
            serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
        manifest.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(manifest)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self).expect("manifest serializes") + "\n";
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    /// `path` joined onto the manifest directory unless absolute.
    pub fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base_dir.join(path)
        }
    }

    pub fn pipeline_config(&self) -> PipelineConfig {
        PipelineConfig {
            retrieval: self.retrieval.clone(),
            rerank: RerankOptions {
                variant: self.delta_variant,
                use_s_m: self.toggles.use_s_m,
                use_s_lambda: self.toggles.use_s_lambda,
                normalize_s_m: self.normalize_s_m,
            },
            rerank_enabled: self.toggles.rerank_enabled,
            text_arm: self.text_arm,
        }
    }
}

/// One line of a queries file. Ids key into the image and text bundles.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryRecord {
    pub query_id: String,
    pub reference_id: String,
    pub mod_text_id: String,
    pub target_desc_id: String,
    pub include_id: String,
    pub exclude_id: String,
}

impl QueryRecord {
    pub fn text_id(&self, role: TextRole) -> &str {
        match role {
            TextRole::ModText => &self.mod_text_id,
            TextRole::TargetDesc => &self.target_desc_id,
            TextRole::Include => &self.include_id,
            TextRole::Exclude => &self.exclude_id,
        }
    }
}

/// Reads JSON lines, skipping blank lines. Errors name the line number.
pub fn read_json_lines<T: serde::de::DeserializeOwned>(path: impl AsRef<Path>) -> Result<Vec<T>> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let value = serde_json::from_str(&line)
            .map_err(|e| Error::InvalidInput(format!("{}:{}: {e}", path.display(), n + 1)))?;
        out.push(value);
    }
    Ok(out)
}

pub fn load_queries(path: impl AsRef<Path>) -> Result<Vec<QueryRecord>> {
    read_json_lines(path)
}

pub(crate) fn to_json_lines<T: Serialize>(items: &[T]) -> String {
    let mut out = String::new();
    for item in items {
        out.push_str(&serde_json::to_string(item).expect("record serializes"));
        out.push('\n');
    }
    out
}

pub fn write_queries(path: impl AsRef<Path>, queries: &[QueryRecord]) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, to_json_lines(queries)).map_err(|e| Error::io(path, e))
}

/// All bundles of a manifest, loaded.
#[derive(Debug)]
pub struct Dataset {
    pub images: EmbeddingStore,
    pub mod_text: EmbeddingStore,
    pub target_desc: EmbeddingStore,
    pub include: EmbeddingStore,
    pub exclude: EmbeddingStore,
    pub queries: Vec<QueryRecord>,
}

impl Dataset {
    pub fn load(manifest: &RunManifest) -> Result<Self> {
        let load = |p: &Path| EmbeddingStore::load_bundle(manifest.resolve(p));
        let tb = &manifest.text_bundles;
        Ok(Self {
            images: load(&manifest.image_bundle)?,
            mod_text: load(&tb.mod_text)?,
            target_desc: load(&tb.target_desc)?,
            include: load(&tb.include)?,
            exclude: load(&tb.exclude)?,
            queries: load_queries(manifest.resolve(&manifest.queries))?,
        })
    }

    pub fn text_store(&self, role: TextRole) -> &EmbeddingStore {
        match role {
            TextRole::ModText => &self.mod_text,
            TextRole::TargetDesc => &self.target_desc,
            TextRole::Include => &self.include,
            TextRole::Exclude => &self.exclude,
        }
    }

    /// Resolves a query's ids to embeddings.
    pub fn instance(&self, record: &QueryRecord) -> Result<QueryInstance> {
        let text = |role: TextRole| {
            let id = record.text_id(role);
            self.text_store(role).get(id).cloned().ok_or_else(|| {
                Error::UnknownId(format!("{id} ({role} of query {})", record.query_id))
            })
        };
        let reference = self
            .images
            .get(&record.reference_id)
            .cloned()
            .ok_or_else(|| {
                Error::UnknownId(format!(
                    "{} (reference of query {})",
                    record.reference_id, record.query_id
                ))
            })?;
        let instance = QueryInstance {
            query_id: record.query_id.clone(),
            reference_id: Some(record.reference_id.clone()),
            ref_embedding: reference,
            mod_text_embedding: text(TextRole::ModText)?,
            target_desc_embedding: text(TextRole::TargetDesc)?,
            include_embedding: text(TextRole::Include)?,
            exclude_embedding: text(TextRole::Exclude)?,
        };
        instance.validate()?;
        Ok(instance)
    }
}
