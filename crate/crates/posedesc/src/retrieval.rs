//! Template descriptor database, exhaustive nearest-neighbor search and the
//! evaluation metrics built on it.
//!
//! Database file layout (little-endian), magic "PDDB", version 1:
//! similarity tag u8 (0 = Euclidean ascending, 1 = dot complement), digest
//! string (u32 length + UTF-8) of the checkpoint that produced the rows,
//! camera distance f64, descriptor dim u32, row count u32, then per row:
//! classId u32, azimuth f64, elevation f64, kind u8, manifestRow u32 and the
//! descriptor as dim f32 values.

use std::fs;
use std::io::{Read as _, Write as _};
use std::path::Path;

use crate::error::{Error, Result};
use crate::net::{network_forward, NetworkSpec, Parameters};
use crate::scene::dataset::{LoadedSample, SampleKind};
use crate::scene::{pose_angle, Pose, SymmetryClass};

/// How a query is compared against rows. `Dot` stores unit-normalized
/// descriptors and ranks by the complement 1 - a.b, so both variants sort
/// ascending by a non-negative dissimilarity.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Similarity {
    Euclidean,
    Dot,
}

impl Similarity {
    fn tag(&self) -> u8 {
        match self {
            Similarity::Euclidean => 0,
            Similarity::Dot => 1,
        }
    }

    fn from_tag(t: u8) -> Option<Self> {
        match t {
            0 => Some(Similarity::Euclidean),
            1 => Some(Similarity::Dot),
            _ => None,
        }
    }

    /// Dissimilarity between two equal-length vectors; plain norms, no
    ///
    /// stabilizer (that is a training-time device only).
    pub fn distance(&self, a: &[f32], b: &[f32]) -> f64 {
        match self {
            Similarity::Euclidean => a
                .iter()
                .zip(b)
                .map(|(&x, &y)| {
                    let d = x as f64 - y as f64;
                    d * d
                })
                .sum::<f64>()
                .sqrt(),
            Similarity::Dot => {
                1.0 - a.iter().zip(b).map(|(&x, &y)| x as f64 * y as f64).sum::<f64>()
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DbRow {
    pub class_id: usize,
    pub azimuth_deg: f64,
    pub elevation_deg: f64,
    pub kind: SampleKind,
    pub manifest_row: u32,
    pub descriptor: Vec<f32>,
}

#[derive(Clone, Debug)]
pub struct DescriptorDb {
    pub similarity: Similarity,
    /// Digest of the checkpoint (or baseline tag) that produced the rows.
    pub network_digest: String,
    pub distance_m: f64,
    pub dim: usize,
    pub rows: Vec<DbRow>,
}

impl DescriptorDb {
    pub fn pose_of(&self, row: &DbRow) -> Pose {
        Pose {
            azimuth_deg: row.azimuth_deg,
            elevation_deg: row.elevation_deg,
            distance_m: self.distance_m,
        }
    }

    pub fn n_classes(&self) -> usize {
        self.rows.iter().map(|r| r.class_id + 1).max().unwrap_or(0)
    }
}

/// Embeds samples with the network, one row per sample in input order.
pub fn embed_all(
    spec: &NetworkSpec,
    params: &Parameters<f32>,
    samples: &[LoadedSample],
    network_digest: &str,
    distance_m: f64,
) -> Result<DescriptorDb> {
    let mut rows = Vec::with_capacity(samples.len());
    for s in samples {
        let (descriptor, _) = network_forward(spec, params, &s.image)?;
        rows.push(DbRow {
            class_id: s.class_id,
            azimuth_deg: s.pose.azimuth_deg,
            elevation_deg: s.pose.elevation_deg,
            kind: s.kind,
            manifest_row: s.manifest_row as u32,
            descriptor,
        });
    }
    Ok(DescriptorDb {
        similarity: Similarity::Euclidean,
        network_digest: network_digest.to_string(),
        distance_m,
        dim: spec.descriptor_dim(),
        rows,
    })
}

const DB_MAGIC: &[u8; 4] = b"PDDB";
const DB_VERSION: u32 = 1;

fn kind_tag(k: SampleKind) -> u8 {
    match k {
        SampleKind::Template => 0,
        SampleKind::Training => 1,
        SampleKind::Test => 2,
    }
}

fn kind_from_tag(t: u8) -> Option<SampleKind> {
    match t {
        0 => Some(SampleKind::Template),
        1 => Some(SampleKind::Training),
        2 => Some(SampleKind::Test),
        _ => None,
    }
}

pub fn write_db(path: &Path, db: &DescriptorDb) -> Result<()> {
    let mut buf: Vec<u8> = Vec::new();
    buf.extend_from_slice(DB_MAGIC);
    buf.extend_from_slice(&DB_VERSION.to_le_bytes());
    buf.push(db.similarity.tag());
    let digest = db.network_digest.as_bytes();
    buf.extend_from_slice(&(digest.len() as u32).to_le_bytes());
    buf.extend_from_slice(digest);
    buf.extend_from_slice(&db.distance_m.to_le_bytes());
    buf.extend_from_slice(&(db.dim as u32).to_le_bytes());
    buf.extend_from_slice(&(db.rows.len() as u32).to_le_bytes());
    for row in &db.rows {
        if row.descriptor.len() != db.dim {
            return Err(Error::ShapeMismatch(format!(
                "descriptor length {} does not match database dim {}",
                row.descriptor.len(),
                db.dim
            )));
        }
        buf.extend_from_slice(&(row.class_id as u32).to_le_bytes());
        buf.extend_from_slice(&row.azimuth_deg.to_le_bytes());
        buf.extend_from_slice(&row.elevation_deg.to_le_bytes());
        buf.push(kind_tag(row.kind));
        buf.extend_from_slice(&row.manifest_row.to_le_bytes());
        for v in &row.descriptor {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&buf).map_err(|e| Error::io(path, e))
}

pub fn read_db(path: &Path) -> Result<DescriptorDb> {
    let mut bytes = Vec::new();
    fs::File::open(path)
        .map_err(|e| Error::io(path, e))?
        .read_to_end(&mut bytes)
        .map_err(|e| Error::io(path, e))?;
    let mut off = 0usize;
    let take = |off: &mut usize, n: usize| -> Result<&[u8]> {
        if *off + n > bytes.len() {
            return Err(Error::format(path, "unexpected end of file"));
        }
        let s = &bytes[*off..*off + n];
        *off += n;
        Ok(s)
    };
    let u32_at = |off: &mut usize| -> Result<u32> {
        Ok(u32::from_le_bytes(take(off, 4)?.try_into().unwrap()))
    };
    let f64_at = |off: &mut usize| -> Result<f64> {
        Ok(f64::from_le_bytes(take(off, 8)?.try_into().unwrap()))
    };

    if take(&mut off, 4)? != DB_MAGIC {
        return Err(Error::format(path, "bad magic, not a descriptor database"));
    }
    let version = u32_at(&mut off)?;
    if version != DB_VERSION {
        return Err(Error::format(path, format!("unsupported version {}", version)));
    }
    let similarity = Similarity::from_tag(take(&mut off, 1)?[0])
        .ok_or_else(|| Error::format(path, "unknown similarity tag"))?;
    let digest_len = u32_at(&mut off)? as usize;
    let network_digest = String::from_utf8(take(&mut off, digest_len)?.to_vec())
        .map_err(|_| Error::format(path, "digest is not UTF-8"))?;
    let distance_m = f64_at(&mut off)?;
    let dim = u32_at(&mut off)? as usize;
    let n_rows = u32_at(&mut off)? as usize;
    let mut rows = Vec::with_capacity(n_rows);
    for _ in 0..n_rows {
        let class_id = u32_at(&mut off)? as usize;
        let azimuth_deg = f64_at(&mut off)?;
        let elevation_deg = f64_at(&mut off)?;
        let kind = kind_from_tag(take(&mut off, 1)?[0])
            .ok_or_else(|| Error::format(path, "unknown sample kind tag"))?;
        let manifest_row = u32_at(&mut off)?;
        let mut descriptor = Vec::with_capacity(dim);
        for _ in 0..dim {
            descriptor.push(f32::from_le_bytes(take(&mut off, 4)?.try_into().unwrap()));
        }
        rows.push(DbRow {
            class_id,
            azimuth_deg,
            elevation_deg,
            kind,
            manifest_row,
            descriptor,
        });
    }
    if off != bytes.len() {
        return Err(Error::format(path, "trailing bytes after last row"));
    }
    Ok(DescriptorDb {
        similarity,
        network_digest,
        distance_m,
        dim,
        rows,
    })
}

#[derive(Clone, Debug)]
pub struct Match {
    pub row: usize,
    pub distance: f64,
    pub class_id: usize,
    pub pose: Pose,
}

/// Exact exhaustive k-nearest rows, ascending by dissimilarity, ties broken
/// by lower row index.
pub fn knn(db: &DescriptorDb, query: &[f32], k: usize) -> Result<Vec<Match>> {
    if query.len() != db.dim {
        return Err(Error::ShapeMismatch(format!(
            "query length {} does not match database dim {}",
            query.len(),
            db.dim
        )));
    }
    if k > db.rows.len() {
        return Err(Error::InvalidArgument(format!(
            "k {} exceeds database size {}",
            k,
            db.rows.len()
        )));
    }
    let mut scored: Vec<(f64, usize)> = db
        .rows
        .iter()
        .enumerate()
        .map(|(i, r)| (db.similarity.distance(query, &r.descriptor), i))
        .collect();
    scored.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    Ok(scored
        .into_iter()
        .take(k)
        .map(|(distance, row)| Match {
            row,
            distance,
            class_id: db.rows[row].class_id,
            pose: db.pose_of(&db.rows[row]),
        })
        .collect())
}

/// Result of pose lookup through retrieval: either the best angle among
/// true-class neighbors in the k-set, or a marker that the k-set contained
/// no template of the true object.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum BestAngle {
    Degrees(f64),
    WrongObject,
}

/// A test view with ground truth, queried against the database.
#[derive(Clone, Debug)]
pub struct QuerySample {
    pub descriptor: Vec<f32>,
    pub class_id: usize,
    pub pose: Pose,
}

/// Among the k nearest templates, the smallest symmetry-aware pose angle to
/// a template of the true class; ground truth is consulted only after the
/// k-set is fixed.
pub fn best_angle_error_at_k(
    db: &DescriptorDb,
    query: &QuerySample,
    symmetry: SymmetryClass,
    k: usize,
) -> Result<BestAngle> {
    let matches = knn(db, &query.descriptor, k)?;
    let best = matches
        .iter()
        .filter(|m| m.class_id == query.class_id)
        .map(|m| pose_angle(&query.pose, &m.pose, symmetry))
        .min_by(f64::total_cmp);
    Ok(match best {
        Some(a) => BestAngle::Degrees(a),
        None => BestAngle::WrongObject,
    })
}

/// Fraction of queries whose best angle error is strictly below each
/// threshold; wrong-object retrievals count as failures at every threshold.
pub fn accuracy_curve(
    db: &DescriptorDb,
    queries: &[QuerySample],
    symmetries: &[SymmetryClass],
    k: usize,
    thresholds: &[f64],
) -> Result<Vec<f64>> {
    if queries.is_empty() {
        return Err(Error::InvalidArgument("empty test set".into()));
    }
    let mut hits = vec![0usize; thresholds.len()];
    for q in queries {
        let sym = *symmetries
            .get(q.class_id)
            .ok_or_else(|| Error::InvalidArgument(format!("no symmetry for class {}", q.class_id)))?;
        match best_angle_error_at_k(db, q, sym, k)? {
            BestAngle::Degrees(a) => {
                for (h, &t) in hits.iter_mut().zip(thresholds) {
                    if a < t {
                        *h += 1;
                    }
                }
            }
            BestAngle::WrongObject => {}
        }
    }
    Ok(hits.iter().map(|&h| h as f64 / queries.len() as f64).collect())
}

/// Per query: distance to the nearest template of any other class divided by
/// distance to the nearest template of the true class. Above 1 means the
/// correct object is closer. Unclipped; +inf when the correct distance is 0.
pub fn class_separation_ratios(db: &DescriptorDb, queries: &[QuerySample]) -> Result<Vec<f64>> {
    if db.n_classes() < 2 {
        return Err(Error::InvalidArgument(
            "separation ratios need at least two classes".into(),
        ));
    }
    queries
        .iter()
        .map(|q| {
            let mut d_correct: Option<f64> = None;
            let mut d_other: Option<f64> = None;
            for row in &db.rows {
                let d = db.similarity.distance(&q.descriptor, &row.descriptor);
                let slot = if row.class_id == q.class_id {
                    &mut d_correct
                } else {
                    &mut d_other
                };
                if slot.map_or(true, |cur| d < cur) {
                    *slot = Some(d);
                }
            }
            let dc = d_correct.ok_or_else(|| {
                Error::InvalidArgument(format!("no templates for class {}", q.class_id))
            })?;
            let dx = d_other.ok_or_else(|| {
                Error::InvalidArgument("no templates outside the query class".into())
            })?;
            Ok(if dc == 0.0 { f64::INFINITY } else { dx / dc })
        })
        .collect()
}

/// Clipping applied for the histogram view of the ratios.
pub const RATIO_CLIP: f64 = 4.0;

pub fn clip_ratio(r: f64) -> f64 {
    r.min(RATIO_CLIP)
}

/// 2D histogram over (pose angle, descriptor distance) for every
/// test x template pair of one class.
#[derive(Clone, Debug)]
pub struct Histogram2D {
    pub angle_edges: Vec<f64>,
    pub dist_edges: Vec<f64>,
    /// Row-major counts, angle bins as rows.
    pub counts: Vec<u64>,
}

impl Histogram2D {
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

pub fn angle_distance_histogram(
    db: &DescriptorDb,
    queries: &[QuerySample],
    class_id: usize,
    symmetry: SymmetryClass,
    angle_bins: usize,
    dist_bins: usize,
) -> Result<Histogram2D> {
    if angle_bins == 0 || dist_bins == 0 {
        return Err(Error::InvalidArgument("histogram needs at least one bin".into()));
    }
    if queries.iter().any(|q| q.class_id != class_id) {
        return Err(Error::InvalidArgument(
            "histogram mixes classes; one object per histogram".into(),
        ));
    }
    let class_rows: Vec<&DbRow> = db.rows.iter().filter(|r| r.class_id == class_id).collect();
    if class_rows.is_empty() {
        return Err(Error::InvalidArgument(format!("no templates for class {}", class_id)));
    }
    let mut pairs: Vec<(f64, f64)> = Vec::with_capacity(queries.len() * class_rows.len());
    for q in queries {
        for row in &class_rows {
            let a = pose_angle(
                &q.pose,
                &Pose {
                    azimuth_deg: row.azimuth_deg,
                    elevation_deg: row.elevation_deg,
                    distance_m: db.distance_m,
                },
                symmetry,
            );
            let d = db.similarity.distance(&q.descriptor, &row.descriptor);
            pairs.push((a, d));
        }
    }
    let max_dist = pairs
        .iter()
        .map(|&(_, d)| d)
        .fold(0.0f64, f64::max)
        .max(f64::MIN_POSITIVE);
    let angle_edges: Vec<f64> = (0..=angle_bins)
        .map(|i| 180.0 * i as f64 / angle_bins as f64)
        .collect();
    let dist_edges: Vec<f64> = (0..=dist_bins)
        .map(|i| max_dist * i as f64 / dist_bins as f64)
        .collect();
    let mut counts = vec![0u64; angle_bins * dist_bins];
    for (a, d) in pairs {
        let ai = (((a / 180.0) * angle_bins as f64) as usize).min(angle_bins - 1);
        let di = (((d / max_dist) * dist_bins as f64) as usize).min(dist_bins - 1);
        counts[ai * dist_bins + di] += 1;
    }
    Ok(Histogram2D {
        angle_edges,
        dist_edges,
        counts,
    })
}
