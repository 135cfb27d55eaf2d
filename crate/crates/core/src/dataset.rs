//! Labeled pose datasets and their on-disk format.
//!
//! Binary layout (little endian):
//!
//! ```text
//! magic "PNDF" | u32 version | u32 K | u32 record count
//! records: K x 4 f64 (w,x,y,z per joint) | f64 distance | u8 tier
//! u32 CRC32 over all preceding bytes
//! ```
//!
//! A JSON sidecar at `<path>.json` carries the skeleton, the generating
//! seed, the manifold-spec hash, and per-tier counts.

use crate::error::{Error, FormatError, Result};
use crate::manifold::KnnLabeler;
use crate::so3::{Pose, SkeletonTopology, UnitQuaternion};
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;

pub const DATASET_MAGIC: [u8; 4] = *b"PNDF";
pub const DATASET_VERSION: u32 = 1;

/// Which noise bucket a sample came from. `Manifold` means distance zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tier {
    Manifold,
    Far,
    Mid,
    Near,
}

impl Tier {
    pub const ALL: [Tier; 4] = [Tier::Manifold, Tier::Far, Tier::Mid, Tier::Near];

    pub fn index(self) -> usize {
        match self {
            Tier::Manifold => 0,
            Tier::Far => 1,
            Tier::Mid => 2,
            Tier::Near => 3,
        }
    }

    fn from_byte(b: u8) -> Result<Self> {
        match b {
            0 => Ok(Tier::Manifold),
            1 => Ok(Tier::Far),
            2 => Ok(Tier::Mid),
            3 => Ok(Tier::Near),
            other => Err(FormatError::InvalidField(format!("unknown tier byte {other}")).into()),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Tier::Manifold => "manifold",
            Tier::Far => "far",
            Tier::Mid => "mid",
            Tier::Near => "near",
        }
    }
}

/// A training pair: pose, target distance, and provenance tier.
///
/// Invariant: `tier == Manifold` exactly when `distance == 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledPose {
    pub pose: Pose,
    pub distance: f64,
    pub tier: Tier,
}

impl LabeledPose {
    pub fn new(pose: Pose, distance: f64, tier: Tier) -> Result<Self> {
        if !distance.is_finite() || distance < 0.0 {
            return Err(Error::Numerical(format!("label distance must be finite >= 0, got {distance}")));
        }
        if (tier == Tier::Manifold) != (distance == 0.0) {
            return Err(Error::Config(format!(
                "tier {:?} inconsistent with distance {distance}: manifold <=> zero",
                tier
            )));
        }
        Ok(LabeledPose { pose, distance, tier })
    }

    /// Labels an off-manifold pose, folding exact-zero labels back into the
    /// manifold tier so the invariant holds for duplicated poses.
    pub fn labeled(pose: Pose, distance: f64, tier: Tier) -> Result<Self> {
        let tier = if distance == 0.0 { Tier::Manifold } else { tier };
        LabeledPose::new(pose, distance, tier)
    }
}

/// Per-tier record counts, stored in the sidecar.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TierCounts {
    pub manifold: usize,
    pub far: usize,
    pub mid: usize,
    pub near: usize,
}

impl TierCounts {
    pub fn of(records: &[LabeledPose]) -> Self {
        let mut c = [0usize; 4];
        for r in records {
            c[r.tier.index()] += 1;
        }
        TierCounts { manifold: c[0], far: c[1], mid: c[2], near: c[3] }
    }

    pub fn get(&self, tier: Tier) -> usize {
        match tier {
            Tier::Manifold => self.manifold,
            Tier::Far => self.far,
            Tier::Mid => self.mid,
            Tier::Near => self.near,
        }
    }

    pub fn total(&self) -> usize {
        self.manifold + self.far + self.mid + self.near
    }
}

/// Provenance metadata carried in the JSON sidecar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub seed: u64,
    pub spec_hash: String,
    pub counts: TierCounts,
}

/// A labeled dataset bound to one skeleton.
#[derive(Debug, Clone, PartialEq)]
pub struct PoseDataset {
    pub skeleton: SkeletonTopology,
    pub records: Vec<LabeledPose>,
    pub meta: DatasetMeta,
}

#[derive(Serialize, Deserialize)]
struct Sidecar {
    schema_version: u32,
    skeleton: SkeletonTopology,
    seed: u64,
    spec_hash: String,
    counts: TierCounts,
}

impl PoseDataset {
    pub fn new(
        skeleton: SkeletonTopology,
        records: Vec<LabeledPose>,
        seed: u64,
        spec_hash: String,
    ) -> Result<Self> {
        for (i, r) in records.iter().enumerate() {
            if r.pose.len() != skeleton.len() {
                return Err(Error::DimensionMismatch {
                    expected: skeleton.len(),
                    got: r.pose.len(),
                });
            }
            let _ = i;
        }
        let counts = TierCounts::of(&records);
        Ok(PoseDataset {
            skeleton,
            records,
            meta: DatasetMeta { seed, spec_hash, counts },
        })
    }

    /// Wraps bare poses (distance 0, manifold tier); used for pose-list files.
    pub fn from_poses(skeleton: SkeletonTopology, poses: Vec<Pose>, seed: u64) -> Result<Self> {
        let records = poses
            .into_iter()
            .map(|p| LabeledPose::new(p, 0.0, Tier::Manifold))
            .collect::<Result<Vec<_>>>()?;
        PoseDataset::new(skeleton, records, seed, String::new())
    }

    /// Assembles a labeled dataset: manifold poses get distance zero by
    /// construction; negatives are labeled through the two-stage kNN scheme.
    pub fn assemble(
        skeleton: SkeletonTopology,
        manifold: Vec<Pose>,
        negatives: Vec<(Pose, Tier)>,
        kprime: usize,
        k: usize,
        seed: u64,
        spec_hash: String,
    ) -> Result<Self> {
        let mut records = Vec::with_capacity(manifold.len() + negatives.len());
        for p in &manifold {
            records.push(LabeledPose::new(p.clone(), 0.0, Tier::Manifold)?);
        }
        if !negatives.is_empty() {
            let labeler = KnnLabeler::new(&manifold, kprime, k)?;
            let labels: Vec<Result<f64>> = {
                use rayon::prelude::*;
                negatives
                    .par_iter()
                    .map(|(p, _)| labeler.label(p, &skeleton))
                    .collect()
            };
            for ((pose, tier), label) in negatives.into_iter().zip(labels) {
                records.push(LabeledPose::labeled(pose, label?, tier)?);
            }
        }
        PoseDataset::new(skeleton, records, seed, spec_hash)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Record indices grouped by tier, in dataset order.
    pub fn indices_by_tier(&self) -> [Vec<usize>; 4] {
        let mut by_tier: [Vec<usize>; 4] = Default::default();
        for (i, r) in self.records.iter().enumerate() {
            by_tier[r.tier.index()].push(i);
        }
        by_tier
    }

    pub fn poses(&self) -> Vec<Pose> {
        self.records.iter().map(|r| r.pose.clone()).collect()
    }
}

fn sidecar_path(path: &Path) -> std::path::PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    std::path::PathBuf::from(s)
}

/// Writes the binary dataset plus its JSON sidecar.
pub fn save_dataset(ds: &PoseDataset, path: &Path) -> Result<()> {
    let k = ds.skeleton.len();
    let mut buf = Vec::with_capacity(16 + ds.records.len() * (k * 32 + 9) + 4);
    buf.extend_from_slice(&DATASET_MAGIC);
    buf.extend_from_slice(&DATASET_VERSION.to_le_bytes());
    buf.extend_from_slice(&(k as u32).to_le_bytes());
    buf.extend_from_slice(&(ds.records.len() as u32).to_le_bytes());
    for r in &ds.records {
        for q in r.pose.joints() {
            for c in q.components() {
                buf.extend_from_slice(&c.to_le_bytes());
            }
        }
        buf.extend_from_slice(&r.distance.to_le_bytes());
        buf.push(r.tier.index() as u8);
    }
    let crc = crc32fast::hash(&buf);
    buf.extend_from_slice(&crc.to_le_bytes());
    let mut f = std::fs::File::create(path)?;
    f.write_all(&buf)?;

    let sidecar = Sidecar {
        schema_version: DATASET_VERSION,
        skeleton: ds.skeleton.clone(),
        seed: ds.meta.seed,
        spec_hash: ds.meta.spec_hash.clone(),
        counts: ds.meta.counts,
    };
    let json = serde_json::to_string_pretty(&sidecar)?;
    std::fs::write(sidecar_path(path), json)?;
    Ok(())
}

struct Reader<'a> {
    buf: &'a [u8],
    off: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> std::result::Result<&'a [u8], FormatError> {
        if self.off + n > self.buf.len() {
            return Err(FormatError::Truncated {
                offset: self.off,
                needed: self.off + n - self.buf.len(),
            });
        }
        let s = &self.buf[self.off..self.off + n];
        self.off += n;
        Ok(s)
    }

    fn u32(&mut self) -> std::result::Result<u32, FormatError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> std::result::Result<f64, FormatError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

/// Loads a dataset written by [`save_dataset`], verifying magic bytes,
/// version, length, checksum, and sidecar consistency.
pub fn load_dataset(path: &Path) -> Result<PoseDataset> {
    let bytes = std::fs::read(path)?;
    if bytes.len() < 20 {
        return Err(FormatError::Truncated { offset: bytes.len(), needed: 20 - bytes.len() }.into());
    }
    let (body, crc_bytes) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(crc_bytes.try_into().unwrap());
    let computed = crc32fast::hash(body);
    if stored != computed {
        return Err(FormatError::ChecksumMismatch { stored, computed }.into());
    }

    let mut r = Reader { buf: body, off: 0 };
    let magic: [u8; 4] = r.take(4)?.try_into().unwrap();
    if magic != DATASET_MAGIC {
        return Err(FormatError::BadMagic { expected: DATASET_MAGIC, found: magic }.into());
    }
    let version = r.u32()?;
    if version != DATASET_VERSION {
        return Err(
            FormatError::UnsupportedVersion { found: version, supported: DATASET_VERSION }.into()
        );
    }
    let k = r.u32()? as usize;
    let count = r.u32()? as usize;

    let mut records = Vec::with_capacity(count);
    for _ in 0..count {
        let mut joints = Vec::with_capacity(k);
        for _ in 0..k {
            let w = r.f64()?;
            let x = r.f64()?;
            let y = r.f64()?;
            let z = r.f64()?;
            joints.push(UnitQuaternion { w, x, y, z });
        }
        let distance = r.f64()?;
        let tier = Tier::from_byte(r.take(1)?[0])?;
        records.push(LabeledPose::new(Pose::new(joints), distance, tier).map_err(|e| {
            match e {
                Error::Config(msg) | Error::Numerical(msg) => FormatError::InvalidField(msg).into(),
                other => other,
            }
        })?);
    }
    if r.off != body.len() {
        return Err(FormatError::InvalidField(format!(
            "{} trailing bytes after {count} records",
            body.len() - r.off
        ))
        .into());
    }

    let sidecar: Sidecar = serde_json::from_str(&std::fs::read_to_string(sidecar_path(path))?)?;
    if sidecar.skeleton.len() != k {
        return Err(Error::ShapeMismatch(format!(
            "sidecar skeleton has {} joints, binary payload has {k}",
            sidecar.skeleton.len()
        )));
    }
    let counts = TierCounts::of(&records);
    if counts != sidecar.counts {
        return Err(FormatError::InvalidField(format!(
            "sidecar tier counts {:?} disagree with records {:?}",
            sidecar.counts, counts
        ))
        .into());
    }
    PoseDataset::new(sidecar.skeleton, records, sidecar.seed, sidecar.spec_hash)
}
