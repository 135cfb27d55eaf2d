//! Binary checkpoint format for [`FieldModel`].
//!
//! Layout (little endian):
//!
//! ```text
//! magic "PNMD" | u32 version | u32 K | u32 feature_dim | u32 enc_hidden
//! | u32 head_width | u32 head_layers | f64 beta | f64 out_beta
//! | u32 skeleton_json_len | skeleton JSON bytes
//! | u32 param_count | param_count x f64
//! | u32 CRC32 over all preceding bytes
//! ```
//!
//! Parameters are stored in canonical layer order: for each joint in index
//! order its encoder layer 1 then layer 2, then the head layers front to
//! back; within a layer the row-major weight matrix precedes the bias
//! vector. Round trips are bit-exact.

use super::{FieldModel, ModelConfig};
use crate::error::{Error, FormatError, Result};
use crate::so3::SkeletonTopology;
use std::io::Write;
use std::path::Path;

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"PNMD";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn save_model(model: &FieldModel, path: &Path) -> Result<()> {
    let cfg = model.config();
    let skel_json = serde_json::to_vec(model.skeleton())?;
    let mut buf =
        Vec::with_capacity(44 + skel_json.len() + model.params().len() * 8 + 4);
    buf.extend_from_slice(&CHECKPOINT_MAGIC);
    buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(model.joint_count() as u32).to_le_bytes());
    buf.extend_from_slice(&(cfg.feature_dim as u32).to_le_bytes());
    buf.extend_from_slice(&(cfg.enc_hidden as u32).to_le_bytes());
    buf.extend_from_slice(&(cfg.head_width as u32).to_le_bytes());
    buf.extend_from_slice(&(cfg.head_layers as u32).to_le_bytes());
    buf.extend_from_slice(&cfg.beta.to_le_bytes());
    buf.extend_from_slice(&cfg.out_beta.to_le_bytes());
    buf.extend_from_slice(&(skel_json.len() as u32).to_le_bytes());
    buf.extend_from_slice(&skel_json);
    buf.extend_from_slice(&(model.params().len() as u32).to_le_bytes());
    for p in model.params() {
        buf.extend_from_slice(&p.to_le_bytes());
    }
    let crc = crc32fast::hash(&buf);
    buf.extend_from_slice(&crc.to_le_bytes());
    let mut f = std::fs::File::create(path)?;
    f.write_all(&buf)?;
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

/// Loads a self-contained checkpoint (the skeleton travels with the model).
pub fn load_model(path: &Path) -> Result<FieldModel> {
    let bytes = std::fs::read(path)?;
    if bytes.len() < 8 {
        return Err(FormatError::Truncated { offset: bytes.len(), needed: 8 - bytes.len() }.into());
    }
    let (body, crc_bytes) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(crc_bytes.try_into().unwrap());
    let computed = crc32fast::hash(body);
    if stored != computed {
        return Err(FormatError::ChecksumMismatch { stored, computed }.into());
    }

    let mut r = Reader { buf: body, off: 0 };
    let magic: [u8; 4] = r.take(4)?.try_into().unwrap();
    if magic != CHECKPOINT_MAGIC {
        return Err(FormatError::BadMagic { expected: CHECKPOINT_MAGIC, found: magic }.into());
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(FormatError::UnsupportedVersion {
            found: version,
            supported: CHECKPOINT_VERSION,
        }
        .into());
    }
    let k = r.u32()? as usize;
    let cfg = ModelConfig {
        feature_dim: r.u32()? as usize,
        enc_hidden: r.u32()? as usize,
        head_width: r.u32()? as usize,
        head_layers: r.u32()? as usize,
        beta: r.f64()?,
        out_beta: r.f64()?,
    };
    let skel_len = r.u32()? as usize;
    let skel: SkeletonTopology = serde_json::from_slice(r.take(skel_len)?)?;
    if skel.len() != k {
        return Err(Error::ShapeMismatch(format!(
            "header joint count {k} disagrees with embedded skeleton ({})",
            skel.len()
        )));
    }
    let param_count = r.u32()? as usize;
    let mut params = Vec::with_capacity(param_count);
    for _ in 0..param_count {
        params.push(r.f64()?);
    }
    if r.off != body.len() {
        return Err(FormatError::InvalidField(format!(
            "{} trailing bytes after parameters",
            body.len() - r.off
        ))
        .into());
    }
    FieldModel::from_parts(skel, cfg, params)
}

/// Loads a checkpoint and checks it against an expected skeleton.
pub fn load_model_for(path: &Path, skel: &SkeletonTopology) -> Result<FieldModel> {
    let model = load_model(path)?;
    if model.joint_count() != skel.len() {
        return Err(Error::ShapeMismatch(format!(
            "checkpoint is for {} joints but the skeleton has {}",
            model.joint_count(),
            skel.len()
        )));
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::so3::random_pose;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use tempfile::tempdir;

    fn model(k: usize) -> FieldModel {
        let skel = SkeletonTopology::binary_tree(k).unwrap();
        let cfg = ModelConfig {
            feature_dim: 3,
            enc_hidden: 8,
            head_width: 16,
            head_layers: 3,
            beta: 100.0,
            out_beta: 1000.0,
        };
        FieldModel::init(&skel, cfg, 9).unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("m.pnm");
        let m = model(6);
        save_model(&m, &path).unwrap();
        let back = load_model(&path).unwrap();
        assert_eq!(m.params(), back.params());
        assert_eq!(m.config(), back.config());
        assert_eq!(m.skeleton(), back.skeleton());
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let p = random_pose(6, &mut rng);
            assert_eq!(m.value(&p).unwrap().to_bits(), back.value(&p).unwrap().to_bits());
        }
    }

    #[test]
    fn wrong_skeleton_k_is_shape_mismatch() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("m.pnm");
        save_model(&model(6), &path).unwrap();
        let other = SkeletonTopology::binary_tree(4).unwrap();
        assert!(matches!(load_model_for(&path, &other), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn truncated_checkpoint_is_format_error() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("m.pnm");
        save_model(&model(4), &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() / 2]).unwrap();
        match load_model(&path) {
            Err(Error::Format(
                FormatError::Truncated { .. } | FormatError::ChecksumMismatch { .. },
            )) => {}
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn corrupted_parameter_fails_checksum() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("m.pnm");
        save_model(&model(4), &path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        let mid = bytes.len() - 20;
        bytes[mid] ^= 0x80;
        std::fs::write(&path, bytes).unwrap();
        assert!(matches!(
            load_model(&path),
            Err(Error::Format(FormatError::ChecksumMismatch { .. }))
        ));
    }
}
