//! Binary checkpoint container.
//!
//! Layout: magic `BLNDCKPT`, `u32` format version, `u64` metadata length,
//! UTF-8 JSON metadata, `u64` tensor count, then each tensor as `u32` rows,
//! `u32` cols and row-major little-endian `f64` values. All floating-point
//! state lives in the tensor section so it round-trips bit-exactly.

use std::io::{Read, Write};
use std::path::Path;

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autograd::Tensor;
use crate::bvh::Skeleton;
use crate::error::{Error, Result};
use crate::motion::{ChannelStats, LevelSpec, STAGES};
use crate::pyramid::{ModelConfig, PyramidModel};

pub const MAGIC: &[u8; 8] = b"BLNDCKPT";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub format_version: u32,
    pub skeleton: Skeleton,
    pub identities: Vec<String>,
    pub levels: LevelSpec,
    pub model: ModelConfig,
    pub contacts: usize,
    pub fps: f64,
    pub trained_stages: usize,
    pub config_hash: String,
}

impl CheckpointMeta {
    pub fn of(model: &PyramidModel) -> Self {
        CheckpointMeta {
            format_version: FORMAT_VERSION,
            skeleton: model.skeleton.clone(),
            identities: model.identities.clone(),
            levels: model.levels.clone(),
            model: model.config.clone(),
            contacts: model.contacts,
            fps: model.fps,
            trained_stages: model.trained_stages,
            config_hash: model.config_hash.clone(),
        }
    }
}

fn row(values: &[f64]) -> Tensor {
    Array2::from_shape_vec((1, values.len()), values.to_vec()).expect("row shape")
}

fn tensors(model: &PyramidModel) -> Vec<Tensor> {
    let mut out = vec![
        row(&model.stats.mean),
        row(&model.stats.std),
        row(&model.amplitudes),
        Array2::from_shape_fn((model.identity_count(), 2), |(b, k)| model.initial_root_xz[b][k]),
    ];
    out.extend(model.reconstruction_noise.iter().cloned());
    for stage in &model.stages {
        out.extend(stage.generator.params().into_iter().cloned());
        out.extend(stage.critic.params().into_iter().cloned());
    }
    out
}

fn write_tensor<W: Write>(w: &mut W, t: &Tensor) -> std::io::Result<()> {
    w.write_all(&(t.nrows() as u32).to_le_bytes())?;
    w.write_all(&(t.ncols() as u32).to_le_bytes())?;
    for v in t.iter() {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

/// Serialized weights of one stage (generator then critic).
pub fn stage_bytes(model: &PyramidModel, stage: usize) -> Vec<u8> {
    let mut out = Vec::new();
    let s = &model.stages[stage];
    for t in s.generator.params().into_iter().chain(s.critic.params()) {
        write_tensor(&mut out, t).expect("writing to memory");
    }
    out
}

pub fn write_checkpoint<W: Write>(model: &PyramidModel, mut w: W) -> Result<()> {
    let meta = serde_json::to_vec(&CheckpointMeta::of(model))
        .map_err(|e| Error::Checkpoint(format!("metadata: {e}")))?;
    let tensors = tensors(model);
    let io = |e: std::io::Error| Error::Checkpoint(e.to_string());
    w.write_all(MAGIC).map_err(io)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes()).map_err(io)?;
    w.write_all(&(meta.len() as u64).to_le_bytes()).map_err(io)?;
    w.write_all(&meta).map_err(io)?;
    w.write_all(&(tensors.len() as u64).to_le_bytes()).map_err(io)?;
    for t in &tensors {
        write_tensor(&mut w, t).map_err(io)?;
    }
    Ok(())
}

pub fn checkpoint_bytes(model: &PyramidModel) -> Vec<u8> {
    let mut out = Vec::new();
    write_checkpoint(model, &mut out).expect("writing to memory");
    out
}

struct Reader<R: Read> {
    inner: R,
}

impl<R: Read> Reader<R> {
    fn bytes<const N: usize>(&mut self) -> Result<[u8; N]> {
        let mut buf = [0u8; N];
        self.inner
            .read_exact(&mut buf)
            .map_err(|e| Error::Checkpoint(format!("truncated checkpoint: {e}")))?;
        Ok(buf)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.bytes()?))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.bytes()?))
    }

    fn tensor(&mut self) -> Result<Tensor> {
        let rows = self.u32()? as usize;
        let cols = self.u32()? as usize;
        let mut values = Vec::with_capacity(rows * cols);
        for _ in 0..rows * cols {
            values.push(f64::from_le_bytes(self.bytes()?));
        }
        Ok(Array2::from_shape_vec((rows, cols), values).expect("shape matches count"))
    }
}

/// Reads only the metadata block.
pub fn read_meta<R: Read>(r: R) -> Result<CheckpointMeta> {
    let mut reader = Reader { inner: r };
    read_header(&mut reader)
}

fn read_header<R: Read>(reader: &mut Reader<R>) -> Result<CheckpointMeta> {
    let magic: [u8; 8] = reader.bytes()?;
    if &magic != MAGIC {
        return Err(Error::Checkpoint("not a checkpoint file (bad magic)".into()));
    }
    let version = reader.u32()?;
    if version != FORMAT_VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported checkpoint version {version} (expected {FORMAT_VERSION})"
        )));
    }
    let len = reader.u64()? as usize;
    if len > 1 << 30 {
        return Err(Error::Checkpoint(format!("metadata length {len} is implausible")));
    }
    let mut meta = vec![0u8; len];
    reader
        .inner
        .read_exact(&mut meta)
        .map_err(|e| Error::Checkpoint(format!("truncated metadata: {e}")))?;
    serde_json::from_slice(&meta).map_err(|e| Error::Checkpoint(format!("metadata: {e}")))
}

pub fn read_checkpoint<R: Read>(r: R) -> Result<PyramidModel> {
    let mut reader = Reader { inner: r };
    let meta = read_header(&mut reader)?;
    let count = reader.u64()? as usize;
    let dim = crate::motion::feature_dim(meta.skeleton.joint_count(), meta.contacts);
    let placeholder = ChannelStats {
        mean: vec![0.0; dim],
        std: vec![1.0; dim],
    };
    // Weights are overwritten below; the RNG only fixes the structure.
    let mut model = PyramidModel::new(
        meta.skeleton,
        meta.identities,
        meta.levels,
        placeholder,
        meta.fps,
        meta.model,
        &mut ChaCha8Rng::seed_from_u64(0),
    )?;
    let expected = tensors(&model);
    if count != expected.len() {
        return Err(Error::Checkpoint(format!(
            "checkpoint holds {count} tensors, model structure needs {}",
            expected.len()
        )));
    }
    let mut loaded = Vec::with_capacity(count);
    for (i, e) in expected.iter().enumerate() {
        let t = reader.tensor()?;
        if t.dim() != e.dim() {
            return Err(Error::Checkpoint(format!(
                "tensor {i} has shape {:?}, expected {:?}",
                t.dim(),
                e.dim()
            )));
        }
        loaded.push(t);
    }
    let mut it = loaded.into_iter();
    let mut next = || it.next().expect("counted");
    model.stats.mean = next().row(0).to_vec();
    model.stats.std = next().row(0).to_vec();
    let amps = next();
    for (s, a) in model.amplitudes.iter_mut().enumerate() {
        *a = amps[[0, s]];
    }
    let roots = next();
    model.initial_root_xz = roots.rows().into_iter().map(|r| [r[0], r[1]]).collect();
    for noise in model.reconstruction_noise.iter_mut() {
        *noise = next();
    }
    for stage in model.stages.iter_mut() {
        for p in stage.generator.params_mut() {
            *p = next();
        }
        for p in stage.critic.params_mut() {
            *p = next();
        }
    }
    if meta.trained_stages > STAGES {
        return Err(Error::Checkpoint(format!("trained stage count {} exceeds {STAGES}", meta.trained_stages)));
    }
    model.trained_stages = meta.trained_stages;
    model.config_hash = meta.config_hash;
    Ok(model)
}

pub fn save_checkpoint(model: &PyramidModel, path: &Path) -> Result<()> {
    std::fs::write(path, checkpoint_bytes(model)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<PyramidModel> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_checkpoint(std::io::BufReader::new(file))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::ModulationKind;
    use crate::pyramid::tests::toy_model;
    use crate::pyramid::GenerationMode;
    use crate::nn::SkeletonIdMap;

    #[test]
    fn round_trip_is_bit_exact() {
        let mut m = toy_model(ModulationKind::Spade, 32);
        m.amplitudes = [1.0, 0.0, 0.31, 0.02, 0.1, 0.0, 1.0 / 3.0];
        m.initial_root_xz = vec![[0.1, -2.5], [3.0, 1e-9]];
        m.config_hash = "abc".into();
        m.stats.mean[3] = std::f64::consts::PI;
        let bytes = checkpoint_bytes(&m);
        let back = read_checkpoint(bytes.as_slice()).unwrap();
        assert_eq!(checkpoint_bytes(&back), bytes);
        assert_eq!(back.amplitudes, m.amplitudes);
        let ids = SkeletonIdMap::constant(1, 32, 2).unwrap();
        assert_eq!(
            back.generate_full(&ids, 4, GenerationMode::Random).unwrap().output,
            m.generate_full(&ids, 4, GenerationMode::Random).unwrap().output
        );
    }

    #[test]
    fn rejects_corrupt_input() {
        let m = toy_model(ModulationKind::Film, 32);
        let bytes = checkpoint_bytes(&m);
        assert!(read_checkpoint(&bytes[..bytes.len() - 3]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(read_checkpoint(bad.as_slice()).is_err());
        let mut version = bytes.clone();
        version[8] = 9;
        assert!(read_checkpoint(version.as_slice()).is_err());
        assert_eq!(read_meta(bytes.as_slice()).unwrap().identities, vec!["a", "b"]);
    }
}
