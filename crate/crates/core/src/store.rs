//! Read-only candidate database and the GMXB bundle format.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! 0..4    b"GMXB"
//! 4..8    version: u32 = 1
//! 8..12   dim: u32
//! 12..20  count: u64
//! then `count` records:
//!         id_len: u16, id: [u8; id_len] (UTF-8), vector: [f32; dim]
//! ```
//!
//! Vectors are renormalized on load. A norm further than
//! [`LOAD_NORM_TOLERANCE`] from 1 marks the record as corrupt.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::fs;
use std::io::{self, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{BundleError, Error, Result};
use crate::vector::{clamped_dot, UnitVector};

pub const MAGIC: [u8; 4] = *b"GMXB";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 20;

/// Stored norms may drift this far from 1 before a record is rejected.
pub const LOAD_NORM_TOLERANCE: f64 = 0.01;

/// Header fields of a bundle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BundleHeader {
    pub dim: usize,
    pub count: u64,
}

/// One search result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredId {
    pub id: String,
    pub score: f64,
    /// Position of the entry in bundle order; the tie-break key.
    pub position: usize,
}

/// Identifier to unit-vector map with exact cosine search.
#[derive(Debug, Clone)]
pub struct EmbeddingStore {
    dim: usize,
    ids: Vec<String>,
    vectors: Vec<UnitVector>,
    index: HashMap<String, usize>,
}

impl EmbeddingStore {
    /// An empty store of the given dimension.
    pub fn empty(dim: usize) -> Self {
        Self {
            dim,
            ids: Vec::new(),
            vectors: Vec::new(),
            index: HashMap::new(),
        }
    }

    /// Builds a store from entries in the order given.
    pub fn from_entries<I, S>(dim: usize, entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, UnitVector)>,
        S: Into<String>,
    {
        let mut store = Self::empty(dim);
        for (id, vector) in entries {
            store.push(id.into(), vector)?;
        }
        Ok(store)
    }

    fn push(&mut self, id: String, vector: UnitVector) -> Result<()> {
        if id.is_empty() {
            return Err(Error::InvalidInput("store ids must be non-empty".into()));
        }
        if vector.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: vector.dim(),
            });
        }
        if self.index.contains_key(&id) {
            return Err(BundleError::DuplicateId { id }.into());
        }
        self.index.insert(id.clone(), self.ids.len());
        self.ids.push(id);
        self.vectors.push(vector);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn get(&self, id: &str) -> Option<&UnitVector> {
        self.position(id).map(|i| &self.vectors[i])
    }

    pub fn id_at(&self, position: usize) -> &str {
        &self.ids[position]
    }

    pub fn vector_at(&self, position: usize) -> &UnitVector {
        &self.vectors[position]
    }

    /// Entries in bundle order.
    pub fn iter(&self) -> impl ExactSizeIterator<Item = (&str, &UnitVector)> {
        self.ids.iter().map(String::as_str).zip(&self.vectors)
    }

    /// Exact top-`k` by cosine similarity.
    ///
    /// Returns `min(k, len)` hits by descending score; equal scores keep
    /// bundle order.
    pub fn top_k(&self, query: &UnitVector, k: usize) -> Result<Vec<ScoredId>> {
        self.top_k_filtered(query, k, |_| true)
    }

    /// Like [`top_k`](Self::top_k) but only over positions accepted by `keep`.
    pub fn top_k_filtered<F>(&self, query: &UnitVector, k: usize, keep: F) -> Result<Vec<ScoredId>>
    where
        F: Fn(usize) -> bool,
    {
        if k == 0 {
            return Err(Error::InvalidInput("k must be at least 1".into()));
        }
        if query.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: query.dim(),
            });
        }
        let q = query.as_slice();
        let mut scored: Vec<(usize, f64)> = self
            .vectors
            .iter()
            .enumerate()
            .filter(|(i, _)| keep(*i))
            .map(|(i, v)| (i, clamped_dot(q, v.as_slice())))
            .collect();

        if k < scored.len() {
            scored.select_nth_unstable_by(k - 1, rank_order);
            scored.truncate(k);
        }
        scored.sort_unstable_by(rank_order);

        Ok(scored
            .into_iter()
            .map(|(position, score)| ScoredId {
                id: self.ids[position].clone(),
                score,
                position,
            })
            .collect())
    }

    /// Loads and validates a GMXB bundle file.
    pub fn load_bundle(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Ok(Self::from_bundle_bytes(&bytes)?)
    }

    /// Decodes a bundle held in memory.
    pub fn from_bundle_bytes(bytes: &[u8]) -> Result<Self, BundleError> {
        let header = parse_header(bytes)?;
        let mut cursor = Cursor {
            bytes,
            offset: HEADER_LEN,
        };
        let mut store = Self::empty(header.dim);
        let mut raw = vec![0f32; header.dim];

        for _ in 0..header.count {
            let record_offset = cursor.offset as u64;
            let id_len = u16::from_le_bytes(cursor.take::<2>("record id length")?) as usize;
            if id_len == 0 {
                return Err(BundleError::EmptyId {
                    offset: record_offset,
                });
            }
            let id_bytes = cursor.take_slice(id_len, "record id")?;
            let id = std::str::from_utf8(id_bytes)
                .map_err(|_| BundleError::InvalidId {
                    offset: record_offset,
                })?
                .to_owned();
            for x in raw.iter_mut() {
                *x = f32::from_le_bytes(cursor.take::<4>("vector payload")?);
            }
            let vector = checked_unit(&id, &raw)?;
            if store.index.contains_key(&id) {
                return Err(BundleError::DuplicateId { id });
            }
            store.index.insert(id.clone(), store.ids.len());
            store.ids.push(id);
            store.vectors.push(vector);
        }

        let extra = (bytes.len() - cursor.offset) as u64;
        if extra != 0 {
            return Err(BundleError::TrailingBytes {
                offset: cursor.offset as u64,
                extra,
            });
        }
        Ok(store)
    }
}

fn rank_order(a: &(usize, f64), b: &(usize, f64)) -> Ordering {
    b.1.partial_cmp(&a.1)
        .unwrap_or(Ordering::Equal)
        .then(a.0.cmp(&b.0))
}

fn checked_unit(id: &str, raw: &[f32]) -> Result<UnitVector, BundleError> {
    if raw.iter().any(|x| !x.is_finite()) {
        return Err(BundleError::NonFinite { id: id.to_owned() });
    }
    let values: Vec<f64> = raw.iter().map(|&x| f64::from(x)).collect();
    let norm = crate::vector::norm(&values);
    if norm == 0.0 {
        return Err(BundleError::ZeroVector { id: id.to_owned() });
    }
    if (norm - 1.0).abs() > LOAD_NORM_TOLERANCE {
        return Err(BundleError::NormOutOfTolerance {
            id: id.to_owned(),
            norm,
        });
    }
    Ok(UnitVector::normalize(values).expect("finite, non-zero values normalize"))
}

struct Cursor<'a> {
    bytes: &'a [u8],
    offset: usize,
}

impl<'a> Cursor<'a> {
    fn take_slice(&mut self, len: usize, what: &'static str) -> Result<&'a [u8], BundleError> {
        let end = self
            .offset
            .checked_add(len)
            .filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let slice = &self.bytes[self.offset..end];
                self.offset = end;
                Ok(slice)
            }
            None => Err(BundleError::Truncated {
                offset: self.offset as u64,
                what,
            }),
        }
    }

    fn take<const N: usize>(&mut self, what: &'static str) -> Result<[u8; N], BundleError> {
        let slice = self.take_slice(N, what)?;
        Ok(slice.try_into().expect("slice has length N"))
    }
}

fn parse_header(bytes: &[u8]) -> Result<BundleHeader, BundleError> {
    let mut cursor = Cursor { bytes, offset: 0 };
    let magic = cursor.take::<4>("magic")?;
    if magic != MAGIC {
        return Err(BundleError::BadMagic { found: magic });
    }
    let version = u32::from_le_bytes(cursor.take::<4>("version")?);
    if version != VERSION {
        return Err(BundleError::UnsupportedVersion { version });
    }
    let dim = u32::from_le_bytes(cursor.take::<4>("dimension")?) as usize;
    if dim == 0 {
        return Err(BundleError::ZeroDimension);
    }
    let count = u64::from_le_bytes(cursor.take::<8>("record count")?);
    Ok(BundleHeader { dim, count })
}

/// Reads only the 20-byte header of a bundle file.
pub fn read_bundle_header(path: impl AsRef<Path>) -> Result<BundleHeader> {
    use std::io::Read;
    let path = path.as_ref();
    let mut buf = Vec::with_capacity(HEADER_LEN);
    fs::File::open(path)
        .and_then(|f| f.take(HEADER_LEN as u64).read_to_end(&mut buf))
        .map_err(|e| Error::io(path, e))?;
    Ok(parse_header(&buf)?)
}

/// Serializes `(id, vector)` records as a GMXB bundle.
///
/// Vectors are written as given; callers are expected to pass unit vectors.
pub fn encode_bundle<'a, I>(dim: usize, records: I) -> Result<Vec<u8>>
where
    I: IntoIterator<Item = (&'a str, &'a [f32])>,
{
    let dim_u32 = u32::try_from(dim)
        .ok()
        .filter(|&d| d > 0)
        .ok_or_else(|| Error::InvalidInput(format!("unsupported bundle dimension {dim}")))?;
    let mut out = Vec::new();
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&dim_u32.to_le_bytes());
    out.extend_from_slice(&0u64.to_le_bytes());

    let mut count = 0u64;
    for (id, vector) in records {
        let id_len = u16::try_from(id.len())
            .map_err(|_| Error::InvalidInput(format!("id {id:?} is longer than 65535 bytes")))?;
        if vector.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: vector.len(),
            });
        }
        out.extend_from_slice(&id_len.to_le_bytes());
        out.extend_from_slice(id.as_bytes());
        for x in vector {
            out.extend_from_slice(&x.to_le_bytes());
        }
        count += 1;
    }
    out[12..20].copy_from_slice(&count.to_le_bytes());
    Ok(out)
}

/// Writes a bundle of unit vectors to `path`.
pub fn write_bundle<'a, I>(path: impl AsRef<Path>, dim: usize, records: I) -> Result<()>
where
    I: IntoIterator<Item = (&'a str, &'a UnitVector)>,
{
    let path = path.as_ref();
    let narrowed: Vec<(&str, Vec<f32>)> = records
        .into_iter()
        .map(|(id, v)| (id, v.to_f32()))
        .collect();
    let bytes = encode_bundle(dim, narrowed.iter().map(|(id, v)| (*id, v.as_slice())))?;
    write_file(path, &bytes)
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    let write = || -> io::Result<()> {
        let mut file = fs::File::create(path)?;
        file.write_all(bytes)?;
        file.flush()
    };
    write().map_err(|e| Error::io(path, e))
}
