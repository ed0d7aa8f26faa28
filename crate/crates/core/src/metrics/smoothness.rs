use nalgebra::Vector3;

use crate::bvh::Skeleton;
use crate::error::{Error, Result};
use crate::motion::{tensor_positions, MotionTensor};

/// Default probe joints (pelvis, both wrists, both feet), each with its
/// accepted names.
pub const DEFAULT_PROBE_ALIASES: [&[&str]; 5] = [
    &["pelvis", "Hips"],
    &["left_wrist", "LeftHand"],
    &["right_wrist", "RightHand"],
    &["left_foot", "LeftFoot"],
    &["right_foot", "RightFoot"],
];

/// Frames within `half_width` of any boundary.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransitionWindow {
    pub boundaries: Vec<usize>,
    pub half_width: usize,
}

impl TransitionWindow {
    pub fn contains(&self, frame: usize) -> bool {
        self.boundaries.iter().any(|&b| frame.abs_diff(b) <= self.half_width)
    }
}

/// Per-joint speed change and its change, as absolute values.
///
/// `velocity_change[j][t]` compares the speeds over frames `t..t+1` and
/// `t+1..t+2`, so it is attributed to frame `t + 1`; `acceleration_change[j][t]`
/// is attributed to frame `t + 2`.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothnessSeries {
    pub joints: Vec<String>,
    pub frames: usize,
    pub velocity_change: Vec<Vec<f64>>,
    pub acceleration_change: Vec<Vec<f64>>,
    pub transition: Option<TransitionWindow>,
}

impl SmoothnessSeries {
    pub fn velocity_frame(t: usize) -> usize {
        t + 1
    }

    pub fn acceleration_frame(t: usize) -> usize {
        t + 2
    }

    /// Median of all velocity changes inside and outside the transition window.
    pub fn velocity_medians(&self) -> Result<(f64, f64)> {
        let window = self
            .transition
            .as_ref()
            .ok_or_else(|| Error::Metric("no transition window declared".into()))?;
        let (mut inside, mut outside) = (Vec::new(), Vec::new());
        for series in &self.velocity_change {
            for (t, &v) in series.iter().enumerate() {
                if window.contains(Self::velocity_frame(t)) {
                    inside.push(v);
                } else {
                    outside.push(v);
                }
            }
        }
        if inside.is_empty() || outside.is_empty() {
            return Err(Error::Metric("transition window covers none or all of the clip".into()));
        }
        Ok((super::median(&inside), super::median(&outside)))
    }
}

fn abs_diff(series: &[f64]) -> Vec<f64> {
    series.windows(2).map(|w| (w[1] - w[0]).abs()).collect()
}

/// Smoothness series from world positions indexed `[frame][probe]`.
pub fn smoothness_from_positions(
    positions: &[Vec<Vector3<f64>>],
    joints: Vec<String>,
    fps: f64,
    transition: Option<TransitionWindow>,
) -> Result<SmoothnessSeries> {
    let frames = positions.len();
    if frames < 4 {
        return Err(Error::Metric(format!("smoothness needs at least 4 frames, got {frames}")));
    }
    if positions.iter().any(|p| p.len() != joints.len()) {
        return Err(Error::Metric("position rows do not match the probe list".into()));
    }
    let mut velocity_change = Vec::with_capacity(joints.len());
    let mut acceleration_change = Vec::with_capacity(joints.len());
    for j in 0..joints.len() {
        let speed: Vec<f64> = positions
            .windows(2)
            .map(|w| (w[1][j] - w[0][j]).norm() * fps)
            .collect();
        let dv = abs_diff(&speed);
        acceleration_change.push(abs_diff(&dv));
        velocity_change.push(dv);
    }
    Ok(SmoothnessSeries {
        joints,
        frames,
        velocity_change,
        acceleration_change,
        transition,
    })
}

fn resolve_probe(skeleton: &Skeleton, aliases: &[&str]) -> Result<usize> {
    aliases
        .iter()
        .find_map(|a| skeleton.find_joint(a))
        .ok_or_else(|| Error::UnknownJoint(aliases.join(" / ")))
}

/// Smoothness of the probe joints of a decoded clip. With `probes` empty the
/// default five probe joints are used.
pub fn smoothness(
    motion: &MotionTensor,
    skeleton: &Skeleton,
    probes: &[String],
    transition: Option<TransitionWindow>,
) -> Result<SmoothnessSeries> {
    let indices: Vec<usize> = if probes.is_empty() {
        DEFAULT_PROBE_ALIASES
            .iter()
            .map(|a| resolve_probe(skeleton, a))
            .collect::<Result<_>>()?
    } else {
        probes.iter().map(|p| skeleton.require_joint(p)).collect::<Result<_>>()?
    };
    let all = tensor_positions(motion, skeleton, [0.0, 0.0])?;
    let positions: Vec<Vec<Vector3<f64>>> = all
        .iter()
        .map(|frame| indices.iter().map(|&j| frame[j]).collect())
        .collect();
    let names = indices.iter().map(|&j| skeleton.joints[j].name.clone()).collect();
    smoothness_from_positions(&positions, names, motion.fps, transition)
}
