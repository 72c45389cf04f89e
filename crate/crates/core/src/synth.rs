//! Seeded synthetic corpora with targets planted on geodesic paths.
//!
//! Each query mixes a text concept vector `f_t` with a reference image `f_i`
//! at a hidden ratio `lambda*`; its target is that geodesic point plus
//! isotropic Gaussian noise, renormalized. Queries share a small pool of text
//! concepts, so a text-only search sees every target of the same concept as
//! an equally plausible answer and only the reference image separates them.
//! Include captions are correlated with the target; exclude captions with a
//! designated hard negative (the closest same-concept target).

use std::collections::BTreeSet;
use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::manifest::{Dataset, QueryRecord, RunManifest, TextBundles};
use crate::metrics::{ground_truth_to_json, GroundTruth};
use crate::store::{write_bundle, EmbeddingStore};
use crate::vector::{angle_between, dot, slerp, MixRatio, UnitVector, THETA_MIN};

const MAX_RESAMPLES: usize = 100;

/// Distribution of the planted mix ratio.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LambdaDist {
    Fixed(f64),
    Uniform { low: f64, high: f64 },
    Choice(Vec<f64>),
}

impl LambdaDist {
    fn validate(&self) -> Result<()> {
        let values: Vec<f64> = match self {
            LambdaDist::Fixed(x) => vec![*x],
            LambdaDist::Uniform { low, high } => {
                if low > high {
                    return Err(Error::InvalidConfig(format!(
                        "uniform lambda range [{low}, {high}] is empty"
                    )));
                }
                vec![*low, *high]
            }
            LambdaDist::Choice(xs) if xs.is_empty() => {
                return Err(Error::InvalidConfig("lambda choice list is empty".into()))
            }
            LambdaDist::Choice(xs) => xs.clone(),
        };
        values
            .into_iter()
            .try_for_each(|x| MixRatio::new(x).map(drop))
    }

    fn sample(&self, rng: &mut impl Rng) -> MixRatio {
        let x = match self {
            LambdaDist::Fixed(x) => *x,
            LambdaDist::Uniform { low, high } => low + (high - low) * rng.random::<f64>(),
            LambdaDist::Choice(xs) => xs[rng.random_range(0..xs.len())],
        };
        MixRatio::new(x).expect("validated distribution")
    }
}

fn default_text_concepts() -> usize {
    10
}

fn default_caption_cos() -> f64 {
    0.7
}

/// Corpus parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub dim: usize,
    /// Total images, planted targets included.
    pub n_images: usize,
    pub n_queries: usize,
    /// Per-coordinate noise added to the planted point before renormalizing.
    pub noise_sigma: f64,
    pub planted_lambda_dist: LambdaDist,
    pub seed: u64,
    /// Size of the text-concept pool shared by the queries.
    #[serde(default = "default_text_concepts")]
    pub text_concepts: usize,
    /// Cosine between the include caption and the target.
    #[serde(default = "default_caption_cos")]
    pub include_cos: f64,
    /// Cosine between the exclude caption and the hard negative.
    #[serde(default = "default_caption_cos")]
    pub exclude_cos: f64,
    /// When non-zero, each query gets a gallery subset of this many images
    /// (its target plus random others).
    #[serde(default)]
    pub subset_size: usize,
}

impl SynthSpec {
    /// A spec with the default concept pool and caption geometry.
    pub fn new(
        dim: usize,
        n_images: usize,
        n_queries: usize,
        noise_sigma: f64,
        planted_lambda_dist: LambdaDist,
        seed: u64,
    ) -> Self {
        Self {
            dim,
            n_images,
            n_queries,
            noise_sigma,
            planted_lambda_dist,
            seed,
            text_concepts: default_text_concepts(),
            include_cos: default_caption_cos(),
            exclude_cos: default_caption_cos(),
            subset_size: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.dim < 2 {
            return bad(format!("dim must be at least 2, got {}", self.dim));
        }
        if self.n_queries == 0 {
            return bad("n_queries must be at least 1".into());
        }
        if self.n_images <= self.n_queries {
            return bad(format!(
                "n_images ({}) must exceed n_queries ({}) so references can be drawn",
                self.n_images, self.n_queries
            ));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return bad(format!(
                "noise_sigma must be >= 0, got {}",
                self.noise_sigma
            ));
        }
        if self.text_concepts == 0 {
            return bad("text_concepts must be at least 1".into());
        }
        for (name, c) in [
            ("include_cos", self.include_cos),
            ("exclude_cos", self.exclude_cos),
        ] {
            if !(-1.0..=1.0).contains(&c) {
                return bad(format!("{name} must lie in [-1, 1], got {c}"));
            }
        }
        if self.subset_size > self.n_images {
            return bad("subset_size exceeds n_images".into());
        }
        self.planted_lambda_dist.validate()
    }
}

/// Everything emitted for one spec, in memory.
#[derive(Debug, Clone)]
pub struct SynthCorpus {
    pub dim: usize,
    /// Image bundle entries in file order.
    pub images: Vec<(String, UnitVector)>,
    pub mod_text: Vec<(String, UnitVector)>,
    pub target_desc: Vec<(String, UnitVector)>,
    pub include: Vec<(String, UnitVector)>,
    pub exclude: Vec<(String, UnitVector)>,
    pub queries: Vec<QueryRecord>,
    pub ground_truth: Vec<GroundTruth>,
    /// Planted ratio per query.
    pub planted_lambda: Vec<MixRatio>,
    /// Designated hard negative per query.
    pub hard_negatives: Vec<String>,
}

fn random_unit(rng: &mut impl Rng, dim: usize) -> UnitVector {
    loop {
        let values: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        if let Ok(v) = UnitVector::normalize(values) {
            return v;
        }
    }
}

fn perturb(rng: &mut impl Rng, v: &UnitVector, sigma: f64) -> Result<UnitVector> {
    if sigma == 0.0 {
        return Ok(v.clone());
    }
    for _ in 0..MAX_RESAMPLES {
        let values: Vec<f64> = v
            .as_slice()
            .iter()
            .map(|x| x + sigma * rng.sample::<f64, _>(StandardNormal))
            .collect();
        if let Ok(u) = UnitVector::normalize(values) {
            return Ok(u);
        }
    }
    Err(Error::InvalidConfig(
        "noise repeatedly cancelled the vector".into(),
    ))
}

/// A unit vector at exactly cosine `cos` from `anchor`, in a random direction.
fn at_cosine(rng: &mut impl Rng, anchor: &UnitVector, cos: f64) -> Result<UnitVector> {
    let a = anchor.as_slice();
    for _ in 0..MAX_RESAMPLES {
        let r = random_unit(rng, anchor.dim());
        let proj = dot(r.as_slice(), a);
        let perp: Vec<f64> = r
            .as_slice()
            .iter()
            .zip(a)
            .map(|(x, y)| x - proj * y)
            .collect();
        let Ok(perp) = UnitVector::normalize(perp) else {
            continue;
        };
        let sin = (1.0 - cos * cos).max(0.0).sqrt();
        let values = a
            .iter()
            .zip(perp.as_slice())
            .map(|(x, p)| cos * x + sin * p)
            .collect();
        return UnitVector::normalize(values);
    }
    Err(Error::InvalidConfig(
        "could not sample an orthogonal direction".into(),
    ))
}

/// Builds the corpus for `spec`. Identical specs give identical corpora.
pub fn generate(spec: &SynthSpec) -> Result<SynthCorpus> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let dim = spec.dim;
    let n_distractors = spec.n_images - spec.n_queries;
    let n_concepts = spec.text_concepts.min(spec.n_queries);

    let concepts: Vec<UnitVector> = (0..n_concepts)
        .map(|_| random_unit(&mut rng, dim))
        .collect();
    let distractors: Vec<UnitVector> = (0..n_distractors)
        .map(|_| random_unit(&mut rng, dim))
        .collect();

    // Image slots: distractors first, then targets; ids are assigned after a
    // shuffle so bundle position says nothing about the role.
    let mut slot_ids: Vec<usize> = (0..spec.n_images).collect();
    slot_ids.shuffle(&mut rng);
    let image_id = |slot: usize| format!("img_{:05}", slot_ids[slot]);

    let mut references = Vec::with_capacity(spec.n_queries);
    let mut targets = Vec::with_capacity(spec.n_queries);
    let mut planted = Vec::with_capacity(spec.n_queries);
    let mut mod_text = Vec::with_capacity(spec.n_queries);
    for q in 0..spec.n_queries {
        let f_t = &concepts[q % n_concepts];
        let mut reference = None;
        for _ in 0..MAX_RESAMPLES {
            let r = rng.random_range(0..n_distractors);
            let theta = angle_between(f_t, &distractors[r])?;
            if (THETA_MIN..=PI - THETA_MIN).contains(&theta) {
                reference = Some(r);
                break;
            }
        }
        let reference = reference.ok_or_else(|| {
            Error::InvalidConfig(format!(
                "query {q}: no valid reference after {MAX_RESAMPLES} attempts"
            ))
        })?;
        let lambda = spec.planted_lambda_dist.sample(&mut rng);
        let point = slerp(f_t, &distractors[reference], lambda)?;
        targets.push(perturb(&mut rng, &point, spec.noise_sigma)?);
        mod_text.push(perturb(&mut rng, f_t, spec.noise_sigma)?);
        references.push(reference);
        planted.push(lambda);
    }

    let target_slot = |q: usize| n_distractors + q;
    let mut hard_negative_slots = Vec::with_capacity(spec.n_queries);
    for q in 0..spec.n_queries {
        let f_t = concepts[q % n_concepts].as_slice();
        let mut pool: Vec<(usize, f64)> = (0..spec.n_queries)
            .filter(|&o| o != q && o % n_concepts == q % n_concepts)
            .map(|o| (target_slot(o), dot(f_t, targets[o].as_slice())))
            .collect();
        if pool.is_empty() {
            pool = (0..n_distractors)
                .map(|d| (d, dot(f_t, distractors[d].as_slice())))
                .collect();
        }
        // first maximum wins
        let best = pool
            .into_iter()
            .reduce(|best, next| if next.1 > best.1 { next } else { best })
            .expect("at least one distractor exists");
        hard_negative_slots.push(best.0);
    }

    let slot_vector = |slot: usize| -> &UnitVector {
        if slot < n_distractors {
            &distractors[slot]
        } else {
            &targets[slot - n_distractors]
        }
    };

    let mut include = Vec::with_capacity(spec.n_queries);
    let mut exclude = Vec::with_capacity(spec.n_queries);
    for q in 0..spec.n_queries {
        include.push(at_cosine(&mut rng, &targets[q], spec.include_cos)?);
        exclude.push(at_cosine(
            &mut rng,
            slot_vector(hard_negative_slots[q]),
            spec.exclude_cos,
        )?);
    }

    let mut images: Vec<(String, UnitVector)> = (0..spec.n_images)
        .map(|slot| (image_id(slot), slot_vector(slot).clone()))
        .collect();
    images.sort_by(|a, b| a.0.cmp(&b.0));

    let query_id = |q: usize| format!("q{q:05}");
    let per_query = |vs: Vec<UnitVector>| -> Vec<(String, UnitVector)> {
        vs.into_iter()
            .enumerate()
            .map(|(q, v)| (query_id(q), v))
            .collect()
    };

    let queries = (0..spec.n_queries)
        .map(|q| {
            let id = query_id(q);
            QueryRecord {
                query_id: id.clone(),
                reference_id: image_id(references[q]),
                mod_text_id: id.clone(),
                target_desc_id: id.clone(),
                include_id: id.clone(),
                exclude_id: id,
            }
        })
        .collect();

    let mut ground_truth = Vec::with_capacity(spec.n_queries);
    for q in 0..spec.n_queries {
        let target = image_id(target_slot(q));
        let mut gt = GroundTruth::new(query_id(q), [target.clone()])?;
        if spec.subset_size > 0 {
            let mut subset: BTreeSet<String> = [target].into();
            let mut pool: Vec<usize> = (0..spec.n_images)
                .filter(|&s| s != target_slot(q))
                .collect();
            pool.shuffle(&mut rng);
            subset.extend(pool.into_iter().take(spec.subset_size - 1).map(image_id));
            gt = gt.with_subset(subset);
        }
        ground_truth.push(gt);
    }

    let target_desc = (0..spec.n_queries)
        .map(|q| concepts[q % n_concepts].clone())
        .collect();

    Ok(SynthCorpus {
        dim,
        images,
        mod_text: per_query(mod_text),
        target_desc: per_query(target_desc),
        include: per_query(include),
        exclude: per_query(exclude),
        queries,
        ground_truth,
        planted_lambda: planted,
        hard_negatives: hard_negative_slots.into_iter().map(image_id).collect(),
    })
}

/// File names written by [`SynthCorpus::write`].
pub mod files {
    pub const IMAGES: &str = "images.gmxb";
    pub const MOD_TEXT: &str = "mod_text.gmxb";
    pub const TARGET_DESC: &str = "target_desc.gmxb";
    pub const INCLUDE: &str = "include.gmxb";
    pub const EXCLUDE: &str = "exclude.gmxb";
    pub const QUERIES: &str = "queries.jsonl";
    pub const GROUND_TRUTH: &str = "ground_truth.json";
    pub const MANIFEST: &str = "manifest.json";
}

impl SynthCorpus {
    /// The corpus as loaded stores, without touching the filesystem.
    pub fn dataset(&self) -> Result<Dataset> {
        let store = |entries: &[(String, UnitVector)]| {
            EmbeddingStore::from_entries(self.dim, entries.iter().cloned())
        };
        Ok(Dataset {
            images: store(&self.images)?,
            mod_text: store(&self.mod_text)?,
            target_desc: store(&self.target_desc)?,
            include: store(&self.include)?,
            exclude: store(&self.exclude)?,
            queries: self.queries.clone(),
        })
    }

    /// Writes bundles, queries, ground truth and a default run manifest into
    /// `dir`. Returns the manifest path.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<PathBuf> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let bundle = |name: &str, entries: &[(String, UnitVector)]| {
            write_bundle(
                dir.join(name),
                self.dim,
                entries.iter().map(|(id, v)| (id.as_str(), v)),
            )
        };
        bundle(files::IMAGES, &self.images)?;
        bundle(files::MOD_TEXT, &self.mod_text)?;
        bundle(files::TARGET_DESC, &self.target_desc)?;
        bundle(files::INCLUDE, &self.include)?;
        bundle(files::EXCLUDE, &self.exclude)?;

        crate::manifest::write_queries(dir.join(files::QUERIES), &self.queries)?;
        let gt_path = dir.join(files::GROUND_TRUTH);
        fs::write(&gt_path, ground_truth_to_json(&self.ground_truth) + "\n")
            .map_err(|e| Error::io(&gt_path, e))?;

        let manifest = RunManifest {
            image_bundle: files::IMAGES.into(),
            text_bundles: TextBundles {
                mod_text: files::MOD_TEXT.into(),
                target_desc: files::TARGET_DESC.into(),
                include: files::INCLUDE.into(),
                exclude: files::EXCLUDE.into(),
            },
            queries: files::QUERIES.into(),
            ground_truth: Some(files::GROUND_TRUTH.into()),
            output: "out".into(),
            ..RunManifest::default()
        };
        let manifest_path = dir.join(files::MANIFEST);
        manifest.save(&manifest_path)?;
        Ok(manifest_path)
    }
}
