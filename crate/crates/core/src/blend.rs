//! Blend schedules and single-pass blended generation.

use std::path::Path;

use crate::bvh::RawMotion;
use crate::error::{Error, Result};
use crate::motion::{decode_motion, LevelSpec, MotionTensor};
use crate::nn::SkeletonIdMap;
use crate::pyramid::{GenerationMode, GenerationTrace, PyramidModel};

/// Ordered `(identity, frames)` segments.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlendSchedule {
    pub segments: Vec<(String, usize)>,
}

impl BlendSchedule {
    pub fn new(segments: Vec<(String, usize)>) -> Result<Self> {
        if segments.is_empty() {
            return Err(Error::Config("blend schedule has no segments".into()));
        }
        if let Some((name, _)) = segments.iter().find(|(_, n)| *n == 0) {
            return Err(Error::Config(format!("segment `{name}` has zero frames")));
        }
        Ok(BlendSchedule { segments })
    }

    pub fn single(identity: &str, frames: usize) -> Result<Self> {
        BlendSchedule::new(vec![(identity.to_string(), frames)])
    }

    /// `frames` split as evenly as possible across `identities`, in order.
    pub fn even(identities: &[String], frames: usize) -> Result<Self> {
        let n = identities.len().max(1);
        BlendSchedule::new(
            identities
                .iter()
                .enumerate()
                .map(|(i, id)| (id.clone(), frames * (i + 1) / n - frames * i / n))
                .collect(),
        )
    }

    /// One `identity=frames` entry per line; blank lines and `#` comments
    /// are skipped.
    pub fn parse(text: &str) -> Result<Self> {
        let mut segments = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (name, frames) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("schedule line {}: expected `identity=frames`", i + 1)))?;
            let frames: usize = frames
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("schedule line {}: `{}` is not a frame count", i + 1, frames.trim())))?;
            segments.push((name.trim().to_string(), frames));
        }
        BlendSchedule::new(segments)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        BlendSchedule::parse(&text)
    }

    pub fn to_text(&self) -> String {
        self.segments.iter().map(|(n, f)| format!("{n}={f}\n")).collect()
    }

    pub fn frames(&self) -> usize {
        self.segments.iter().map(|(_, n)| n).sum()
    }

    /// Frame indices where the identity changes.
    pub fn boundaries(&self) -> Vec<usize> {
        let mut acc = 0;
        let mut out = Vec::new();
        for (_, n) in &self.segments[..self.segments.len() - 1] {
            acc += n;
            out.push(acc);
        }
        out
    }
}

pub fn make_id_map(schedule: &BlendSchedule, model: &PyramidModel) -> Result<SkeletonIdMap> {
    let mut ids = Vec::with_capacity(schedule.frames());
    for (name, frames) in &schedule.segments {
        let b = model.identity_index(name)?;
        ids.extend(std::iter::repeat_n(b, *frames));
    }
    SkeletonIdMap::new(ids, model.identity_count())
}

/// Model view generating `frames` frames with proportionally scaled level
/// lengths. Reconstruction noise only exists at the training length.
pub fn resized_model(model: &PyramidModel, frames: usize) -> Result<PyramidModel> {
    if frames == model.frames() {
        return Ok(model.clone());
    }
    let mut resized = model.clone();
    resized.levels = LevelSpec::for_length(frames)?;
    resized.reconstruction_noise.clear();
    Ok(resized)
}

#[derive(Debug, Clone)]
pub struct BlendOutput {
    pub tensor: MotionTensor,
    pub motion: RawMotion,
    pub trace: GenerationTrace,
}

/// Single generation pass driven by `schedule`, decoded to channel data.
/// The root starts at the first segment's training start position.
pub fn blend_with_mode(
    model: &PyramidModel,
    schedule: &BlendSchedule,
    seed: u64,
    mode: GenerationMode,
) -> Result<BlendOutput> {
    let frames = schedule.frames();
    if frames != model.frames() && matches!(mode, GenerationMode::Reconstruction(_)) {
        return Err(Error::Config(format!(
            "reconstruction needs the training length {}, schedule has {frames} frames",
            model.frames()
        )));
    }
    let view = resized_model(model, frames)?;
    let ids = make_id_map(schedule, &view)?;
    let trace = view.generate_full(&ids, seed, mode)?;
    let first = model.identity_index(&schedule.segments[0].0)?;
    let motion = decode_motion(&trace.output, &model.skeleton, model.initial_root_xz[first])?;
    Ok(BlendOutput {
        tensor: trace.output.clone(),
        motion,
        trace,
    })
}

pub fn blend(model: &PyramidModel, schedule: &BlendSchedule, seed: u64) -> Result<BlendOutput> {
    blend_with_mode(model, schedule, seed, GenerationMode::Random)
}
