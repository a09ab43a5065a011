//! Pairwise user similarity: linear overlap (LS), compression distance (CS),
//! and compressed-length proximity (KS). All three return 0 for users with no
//! commonly rated item.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use thiserror::Error;

use crate::graph::{ItemId, RatingGraph, UserId};

#[derive(Debug, Error)]
pub enum SimilarityError {
    #[error("unknown similarity measure {0:?} (expected ls, cs, or ks)")]
    UnknownMeasure(String),
    #[error("theta must be at least 1")]
    BadTheta,
    #[error("compressor failed: {0}")]
    Compressor(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SimilarityMeasure {
    #[default]
    Ls,
    Cs,
    Ks,
}

impl FromStr for SimilarityMeasure {
    type Err = SimilarityError;

    fn from_str(s: &str) -> Result<Self, SimilarityError> {
        match s {
            "ls" => Ok(Self::Ls),
            "cs" => Ok(Self::Cs),
            "ks" => Ok(Self::Ks),
            other => Err(SimilarityError::UnknownMeasure(other.to_owned())),
        }
    }
}

impl fmt::Display for SimilarityMeasure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Ls => "ls",
            Self::Cs => "cs",
            Self::Ks => "ks",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SimilarityParams {
    /// Overlap size at or below which LS is discounted to 1/theta.
    pub theta: usize,
}

impl Default for SimilarityParams {
    fn default() -> Self {
        Self { theta: 3 }
    }
}

impl SimilarityParams {
    pub fn validate(&self) -> Result<(), SimilarityError> {
        if self.theta < 1 {
            return Err(SimilarityError::BadTheta);
        }
        Ok(())
    }
}

/// Items rated by both users, by ascending item index.
pub fn common_items(g: &RatingGraph, u: UserId, v: UserId) -> Vec<ItemId> {
    let (a, b) = (g.ratings_of(u), g.ratings_of(v));
    let mut out = Vec::new();
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].item.cmp(&b[j].item) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                out.push(a[i].item);
                i += 1;
                j += 1;
            }
        }
    }
    out
}

/// Mean normalized rating agreement over common items, discounted for thin
/// overlap: l(n) * [1 - (1/n) * sum |R_ui - R_vi| / delta] with l(n) = 1/theta
/// for n <= theta and 1 above.
pub fn linear_similarity(
    g: &RatingGraph,
    u: UserId,
    v: UserId,
    params: &SimilarityParams,
) -> f64 {
    let delta = g.scale().delta();
    let (a, b) = (g.ratings_of(u), g.ratings_of(v));
    let mut diff_sum = 0.0;
    let mut n = 0usize;
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].item.cmp(&b[j].item) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                diff_sum += (a[i].value - b[j].value).abs() / delta;
                n += 1;
                i += 1;
                j += 1;
            }
        }
    }
    if n == 0 {
        return 0.0;
    }
    let credit = if n <= params.theta {
        1.0 / params.theta as f64
    } else {
        1.0
    };
    credit * (1.0 - diff_sum / n as f64)
}

/// Canonical byte serialization of one user's ratings: "item:raw;" pairs
/// sorted by item name, raw-scale integers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UserEncoding {
    bytes: Vec<u8>,
}

impl UserEncoding {
    pub fn from_bytes(bytes: Vec<u8>) -> Self {
        Self { bytes }
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.bytes
    }
}

pub fn encode_user(g: &RatingGraph, u: UserId) -> UserEncoding {
    let scale = g.scale();
    let mut pairs: Vec<(&str, u32)> = g
        .ratings_of(u)
        .iter()
        .map(|r| (g.item_name(r.item), scale.to_raw(r.value)))
        .collect();
    pairs.sort();
    let mut bytes = Vec::new();
    for (name, raw) in pairs {
        write!(bytes, "{name}:{raw};").expect("write to Vec cannot fail");
    }
    UserEncoding { bytes }
}

/// Deterministic lossless compressor used for the distance-based measures.
/// Only compressed sizes matter, never the compressed bytes.
pub trait Compressor {
    fn compressed_len(&self, data: &[u8]) -> std::io::Result<usize>;
}

/// Raw deflate at a fixed level.
#[derive(Debug, Clone, Copy)]
pub struct Deflate {
    level: u32,
}

impl Default for Deflate {
    fn default() -> Self {
        Self { level: 6 }
    }
}

impl Compressor for Deflate {
    fn compressed_len(&self, data: &[u8]) -> std::io::Result<usize> {
        let mut enc = flate2::write::DeflateEncoder::new(
            Vec::new(),
            flate2::Compression::new(self.level),
        );
        enc.write_all(data)?;
        Ok(enc.finish()?.len())
    }
}

/// Normalized compression distance flipped into a similarity. The one-sided
/// form 1 - [C(uv) - min(C(u), C(v))] / max(C(u), C(v)) depends on the
/// concatenation order with real compressors, so both orders are averaged;
/// the result is clamped into [0, 1].
pub fn compression_similarity(
    u_enc: &UserEncoding,
    v_enc: &UserEncoding,
    common_nonempty: bool,
    compressor: &dyn Compressor,
) -> Result<f64, SimilarityError> {
    if !common_nonempty {
        return Ok(0.0);
    }
    let c_u = compressor.compressed_len(u_enc.as_bytes())?;
    let c_v = compressor.compressed_len(v_enc.as_bytes())?;
    let mut joined = Vec::with_capacity(u_enc.as_bytes().len() + v_enc.as_bytes().len());
    joined.extend_from_slice(u_enc.as_bytes());
    joined.extend_from_slice(v_enc.as_bytes());
    let c_uv = compressor.compressed_len(&joined)?;
    joined.clear();
    joined.extend_from_slice(v_enc.as_bytes());
    joined.extend_from_slice(u_enc.as_bytes());
    let c_vu = compressor.compressed_len(&joined)?;
    Ok(cs_value(c_u, c_v, c_uv, c_vu))
}

pub(crate) fn cs_value(c_u: usize, c_v: usize, c_uv: usize, c_vu: usize) -> f64 {
    let lo = c_u.min(c_v) as f64;
    let hi = c_u.max(c_v) as f64;
    let one_sided = |joint: usize| 1.0 - (joint as f64 - lo) / hi;
    (0.5 * (one_sided(c_uv) + one_sided(c_vu))).clamp(0.0, 1.0)
}

/// Proximity of compressed profile sizes: 1 / (1 + |C(u) - C(v)|).
pub fn kolmogorov_similarity(
    u_enc: &UserEncoding,
    v_enc: &UserEncoding,
    common_nonempty: bool,
    compressor: &dyn Compressor,
) -> Result<f64, SimilarityError> {
    if !common_nonempty {
        return Ok(0.0);
    }
    let c_u = compressor.compressed_len(u_enc.as_bytes())?;
    let c_v = compressor.compressed_len(v_enc.as_bytes())?;
    Ok(ks_value(c_u, c_v))
}

pub(crate) fn ks_value(c_u: usize, c_v: usize) -> f64 {
    1.0 / (1.0 + c_u.abs_diff(c_v) as f64)
}
