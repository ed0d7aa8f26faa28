//! The T x D training matrix: per-joint 6D rotations, foot-contact labels
//! and root features (height plus world-frame planar velocity).

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{Matrix3, Vector3};
use ndarray::{s, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::bvh::{RawMotion, Skeleton};
use crate::error::{Error, Result};
use crate::kinematics::forward_kinematics;
use crate::rotation::{rotation_from_6d, rotation_to_6d};

/// Channels per joint rotation.
pub const Q: usize = 6;
/// Root height, planar velocity x, planar velocity z.
pub const ROOT_CHANNELS: usize = 3;
/// Number of temporal resolution levels.
pub const LEVELS: usize = 4;
/// Number of generator/discriminator stages.
pub const STAGES: usize = 7;
/// Level (0-based) of each stage (0-based): 2, 2, 2, 1 stages per level.
pub const STAGE_LEVELS: [usize; STAGES] = [0, 0, 1, 1, 2, 2, 3];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotionTensor {
    /// T x D.
    pub data: Array2<f64>,
    pub joints: usize,
    pub contacts: usize,
    pub fps: f64,
}

impl MotionTensor {
    pub fn new(data: Array2<f64>, joints: usize, contacts: usize, fps: f64) -> Result<Self> {
        let expected = feature_dim(joints, contacts);
        if data.ncols() != expected {
            return Err(Error::Shape(format!(
                "feature dimension {} does not equal J*Q + C + 3 = {expected}",
                data.ncols()
            )));
        }
        if !(fps > 0.0) {
            return Err(Error::Motion(format!("fps must be positive, got {fps}")));
        }
        Ok(MotionTensor {
            data,
            joints,
            contacts,
            fps,
        })
    }

    pub fn frames(&self) -> usize {
        self.data.nrows()
    }

    pub fn dim(&self) -> usize {
        self.data.ncols()
    }

    pub fn contact_range(&self) -> std::ops::Range<usize> {
        self.joints * Q..self.joints * Q + self.contacts
    }

    pub fn root_range(&self) -> std::ops::Range<usize> {
        let start = self.joints * Q + self.contacts;
        start..start + ROOT_CHANNELS
    }

    /// Rotation and root channel indices (everything except contacts).
    pub fn pose_channels(&self) -> Vec<usize> {
        (0..self.joints * Q).chain(self.root_range()).collect()
    }

    pub fn contacts(&self) -> ArrayView2<'_, f64> {
        self.data.slice(s![.., self.contact_range()])
    }

    pub fn with_data(&self, data: Array2<f64>) -> Result<Self> {
        MotionTensor::new(data, self.joints, self.contacts, self.fps)
    }

    /// Write the flat fixture format: little-endian header
    /// `b"MTEN", version u32, T u32, J u32, Q u32, C u32, fps f64` followed by
    /// row-major f32 values.
    pub fn write_dump<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        w.write_all(b"MTEN")?;
        for v in [1u32, self.frames() as u32, self.joints as u32, Q as u32, self.contacts as u32] {
            w.write_all(&v.to_le_bytes())?;
        }
        w.write_all(&self.fps.to_le_bytes())?;
        for v in self.data.iter() {
            w.write_all(&(*v as f32).to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_dump<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        let io = |e: std::io::Error| Error::Shape(format!("motion dump: {e}"));
        r.read_exact(&mut magic).map_err(io)?;
        if &magic != b"MTEN" {
            return Err(Error::Shape("motion dump: bad magic".into()));
        }
        let mut header = [0u32; 5];
        for h in header.iter_mut() {
            let mut b = [0u8; 4];
            r.read_exact(&mut b).map_err(io)?;
            *h = u32::from_le_bytes(b);
        }
        let [version, t, j, q, c] = header;
        if version != 1 || q as usize != Q {
            return Err(Error::Shape(format!("motion dump: unsupported version {version} / Q {q}")));
        }
        let mut b = [0u8; 8];
        r.read_exact(&mut b).map_err(io)?;
        let fps = f64::from_le_bytes(b);
        let (t, j, c) = (t as usize, j as usize, c as usize);
        let d = feature_dim(j, c);
        let mut data = Array2::zeros((t, d));
        for v in data.iter_mut() {
            let mut b = [0u8; 4];
            r.read_exact(&mut b).map_err(io)?;
            *v = f32::from_le_bytes(b) as f64;
        }
        MotionTensor::new(data, j, c, fps)
    }

    pub fn save_dump(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_dump(std::io::BufWriter::new(file))
            .map_err(|e| Error::io(path, e))
    }

    pub fn load_dump(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        MotionTensor::read_dump(std::io::BufReader::new(file))
    }
}

pub fn feature_dim(joints: usize, contacts: usize) -> usize {
    joints * Q + contacts + ROOT_CHANNELS
}

/// Frame counts of the four temporal levels and the stage-to-level map.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LevelSpec {
    pub level_lengths: [usize; LEVELS],
}

impl LevelSpec {
    /// `T_i = round(T * i / 4)`.
    pub fn for_length(frames: usize) -> Result<Self> {
        let level_lengths = [1usize, 2, 3, 4].map(|i| ((frames * i) as f64 / 4.0).round() as usize);
        let spec = LevelSpec { level_lengths };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let l = &self.level_lengths;
        if l[0] < 4 || !l.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::Config(format!(
                "level lengths {l:?} must be strictly increasing with at least 4 frames at the coarsest level"
            )));
        }
        Ok(())
    }

    pub fn frames(&self) -> usize {
        self.level_lengths[LEVELS - 1]
    }

    pub fn level_of(stage: usize) -> usize {
        STAGE_LEVELS[stage]
    }

    pub fn stage_length(&self, stage: usize) -> usize {
        self.level_lengths[STAGE_LEVELS[stage]]
    }

    /// Stages (0-based) belonging to a level (0-based).
    pub fn stages_of(level: usize) -> Vec<usize> {
        (0..STAGES).filter(|&s| STAGE_LEVELS[s] == level).collect()
    }
}

/// Foot-contact labelling thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ContactConfig {
    /// Speed threshold in length units per second.
    pub velocity_threshold: f64,
    /// Height threshold as a multiple of the mean foot-joint offset length.
    pub height_factor: f64,
}

impl Default for ContactConfig {
    fn default() -> Self {
        ContactConfig {
            velocity_threshold: 0.18,
            height_factor: 2.5,
        }
    }
}

impl ContactConfig {
    pub fn height_threshold(&self, skeleton: &Skeleton) -> f64 {
        self.height_factor * skeleton.mean_foot_offset()
    }
}

/// Binary contact labels from foot-joint world positions (`[frame][foot]`).
/// A foot is in contact when its forward-difference speed is below
/// `velocity_threshold` and its height below `height_threshold`; the last
/// frame repeats the penultimate label.
pub fn extract_contacts(
    positions: &[Vec<Vector3<f64>>],
    fps: f64,
    velocity_threshold: f64,
    height_threshold: f64,
) -> Result<Array2<f64>> {
    let t_len = positions.len();
    if t_len < 2 {
        return Err(Error::Motion("contact extraction needs at least 2 frames".into()));
    }
    let feet = positions[0].len();
    if feet == 0 {
        return Err(Error::Skeleton("empty foot-joint set".into()));
    }
    let mut labels = Array2::zeros((t_len, feet));
    for t in 0..t_len - 1 {
        for f in 0..feet {
            let speed = (positions[t + 1][f] - positions[t][f]).norm() * fps;
            let grounded = positions[t][f].y < height_threshold;
            labels[[t, f]] = if speed < velocity_threshold && grounded { 1.0 } else { 0.0 };
        }
    }
    let last = labels.row(t_len - 2).to_owned();
    labels.row_mut(t_len - 1).assign(&last);
    Ok(labels)
}

pub fn encode_motion(skeleton: &Skeleton, motion: &RawMotion) -> Result<MotionTensor> {
    encode_motion_with(skeleton, motion, &ContactConfig::default())
}

pub fn encode_motion_with(
    skeleton: &Skeleton,
    motion: &RawMotion,
    contact: &ContactConfig,
) -> Result<MotionTensor> {
    motion.check_layout(skeleton)?;
    let j_count = skeleton.joint_count();
    let c_count = skeleton.foot_joints.len();
    let t_len = motion.frame_count();
    let fps = motion.fps();
    let rotations = motion.local_rotations(skeleton);
    let roots = motion.root_positions(skeleton);
    let mut data = Array2::zeros((t_len, feature_dim(j_count, c_count)));

    for t in 0..t_len {
        for j in 0..j_count {
            let six = rotation_to_6d(&rotations[t][j]);
            for (q, v) in six.iter().enumerate() {
                data[[t, j * Q + q]] = *v;
            }
        }
    }
    if c_count > 0 {
        let feet: Vec<Vec<Vector3<f64>>> = (0..t_len)
            .map(|t| {
                forward_kinematics(skeleton, &rotations[t], &roots[t])
                    .map(|p| skeleton.foot_joints.iter().map(|&f| p[f]).collect())
            })
            .collect::<Result<_>>()?;
        let labels = extract_contacts(
            &feet,
            fps,
            contact.velocity_threshold,
            contact.height_threshold(skeleton),
        )?;
        data.slice_mut(s![.., j_count * Q..j_count * Q + c_count]).assign(&labels);
    }
    let base = j_count * Q + c_count;
    for t in 0..t_len {
        let next = if t + 1 < t_len { t + 1 } else { t };
        let prev = if t + 1 < t_len { t } else { t - 1 };
        data[[t, base]] = roots[t].y;
        data[[t, base + 1]] = (roots[next].x - roots[prev].x) * fps;
        data[[t, base + 2]] = (roots[next].z - roots[prev].z) * fps;
    }
    MotionTensor::new(data, j_count, c_count, fps)
}

/// Per-frame local rotations decoded from the 6D blocks, `[frame][joint]`.
pub fn decode_rotations(tensor: &MotionTensor) -> Result<Vec<Vec<Matrix3<f64>>>> {
    (0..tensor.frames())
        .map(|t| {
            (0..tensor.joints)
                .map(|j| {
                    let mut six = [0.0; 6];
                    for (q, v) in six.iter_mut().enumerate() {
                        *v = tensor.data[[t, j * Q + q]];
                    }
                    rotation_from_6d(&six)
                })
                .collect()
        })
        .collect()
}

/// Root trajectory: height from the root block, x/z integrated from the
/// planar velocity starting at `initial_root_xz`.
pub fn decode_root(tensor: &MotionTensor, initial_root_xz: [f64; 2]) -> Vec<Vector3<f64>> {
    let base = tensor.root_range().start;
    let mut x = initial_root_xz[0];
    let mut z = initial_root_xz[1];
    (0..tensor.frames())
        .map(|t| {
            let p = Vector3::new(x, tensor.data[[t, base]], z);
            x += tensor.data[[t, base + 1]] / tensor.fps;
            z += tensor.data[[t, base + 2]] / tensor.fps;
            p
        })
        .collect()
}

/// Inverse of [`encode_motion`]; contact channels are ignored.
pub fn decode_motion(
    tensor: &MotionTensor,
    skeleton: &Skeleton,
    initial_root_xz: [f64; 2],
) -> Result<RawMotion> {
    if tensor.joints != skeleton.joint_count() {
        return Err(Error::Shape(format!(
            "tensor encodes {} joints, skeleton has {}",
            tensor.joints,
            skeleton.joint_count()
        )));
    }
    let rotations = decode_rotations(tensor)?;
    let roots = decode_root(tensor, initial_root_xz);
    RawMotion::from_rotations(skeleton, 1.0 / tensor.fps, &roots, &rotations)
}

/// World joint positions of an encoded clip, `[frame][joint]`.
pub fn tensor_positions(
    tensor: &MotionTensor,
    skeleton: &Skeleton,
    initial_root_xz: [f64; 2],
) -> Result<Vec<Vec<Vector3<f64>>>> {
    let rotations = decode_rotations(tensor)?;
    let roots = decode_root(tensor, initial_root_xz);
    rotations
        .iter()
        .zip(&roots)
        .map(|(r, p)| forward_kinematics(skeleton, r, p))
        .collect()
}

/// Linear interpolation weights mapping `t_in` frames onto `t_out` frames
/// with aligned endpoints, as a `t_in x t_out` matrix (so `X(D x t_in) * M`).
pub fn interpolation_matrix(t_in: usize, t_out: usize) -> Array2<f64> {
    let mut m = Array2::zeros((t_in, t_out));
    if t_in == 1 || t_out == 1 {
        m.row_mut(0).fill(1.0);
        return m;
    }
    for t in 0..t_out {
        let pos = (t * (t_in - 1)) as f64 / (t_out - 1) as f64;
        let i0 = (pos.floor() as usize).min(t_in - 1);
        let frac = pos - i0 as f64;
        if frac == 0.0 || i0 + 1 >= t_in {
            m[[i0, t]] = 1.0;
        } else {
            m[[i0, t]] = 1.0 - frac;
            m[[i0 + 1, t]] = frac;
        }
    }
    m
}

/// Resample time-major data (`T x D`) to `target` frames.
pub fn resample_frames(data: &Array2<f64>, target: usize) -> Array2<f64> {
    if data.nrows() == target {
        return data.clone();
    }
    interpolation_matrix(data.nrows(), target).t().dot(data)
}

/// Resample channel-major data (`D x T`) to `target` frames.
pub fn resample_channels(data: &Array2<f64>, target: usize) -> Array2<f64> {
    if data.ncols() == target {
        return data.clone();
    }
    data.dot(&interpolation_matrix(data.ncols(), target))
}

pub fn temporal_resample(tensor: &MotionTensor, target_frames: usize) -> Result<MotionTensor> {
    if target_frames < 2 {
        return Err(Error::Motion(format!(
            "cannot resample to {target_frames} frames (minimum 2)"
        )));
    }
    tensor.with_data(resample_frames(&tensor.data, target_frames))
}

/// Smallest deviation used for 6D rotation channels, about 3 degrees.
pub const ROTATION_STD_FLOOR: f64 = 0.05;

/// Per-channel mean and standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl ChannelStats {
    /// Fit over all frames of all clips. Channels whose deviation is below
    /// 1e-4 get unit scale.
    pub fn fit<'a, I>(clips: I) -> Result<Self>
    where
        I: IntoIterator<Item = ArrayView2<'a, f64>>,
    {
        let views: Vec<ArrayView2<'a, f64>> = clips.into_iter().collect();
        let first = views
            .first()
            .ok_or_else(|| Error::Motion("no clips to fit statistics on".into()))?;
        let d = first.ncols();
        let mut stacked = Array2::zeros((0, d));
        for v in &views {
            if v.ncols() != d {
                return Err(Error::Shape("clips have different feature dimensions".into()));
            }
            stacked.append(Axis(0), v.view()).map_err(|e| Error::Shape(e.to_string()))?;
        }
        let mean = stacked.mean_axis(Axis(0)).expect("non-empty").to_vec();
        let std = stacked
            .std_axis(Axis(0), 0.0)
            .iter()
            .map(|&s| if s < 1e-4 { 1.0 } else { s })
            .collect();
        Ok(ChannelStats { mean, std })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Raise the deviation of `channels` to at least `floor`, so nearly
    /// constant channels are not magnified into unit-variance noise.
    pub fn with_std_floor(mut self, channels: std::ops::Range<usize>, floor: f64) -> Self {
        for s in &mut self.std[channels] {
            *s = s.max(floor);
        }
        self
    }

    /// Standardize time-major data.
    pub fn normalize(&self, data: &Array2<f64>) -> Array2<f64> {
        let mut out = data.clone();
        for mut row in out.rows_mut() {
            for (c, v) in row.iter_mut().enumerate() {
                *v = (*v - self.mean[c]) / self.std[c];
            }
        }
        out
    }

    pub fn denormalize(&self, data: &Array2<f64>) -> Array2<f64> {
        let mut out = data.clone();
        for mut row in out.rows_mut() {
            for (c, v) in row.iter_mut().enumerate() {
                *v = *v * self.std[c] + self.mean[c];
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bvh::{parse_bvh, Channel, Joint};
    use crate::kinematics::motion_positions;
    use crate::rotation::Axis;
    use approx::assert_relative_eq;

    fn two_link() -> Skeleton {
        let rot = vec![
            Channel::Rotation(Axis::Z),
            Channel::Rotation(Axis::X),
            Channel::Rotation(Axis::Y),
        ];
        let mut root_ch = vec![
            Channel::Position(Axis::X),
            Channel::Position(Axis::Y),
            Channel::Position(Axis::Z),
        ];
        root_ch.extend(rot.clone());
        let joints = vec![
            Joint { name: "hips".into(), parent: None, offset: Vector3::zeros(), channels: root_ch, end_site: None },
            Joint { name: "left_foot".into(), parent: Some(0), offset: Vector3::new(0.1, -0.9, 0.0), channels: rot.clone(), end_site: None },
            Joint { name: "right_foot".into(), parent: Some(0), offset: Vector3::new(-0.1, -0.9, 0.0), channels: rot, end_site: None },
        ];
        Skeleton::new(joints).unwrap().with_foot_joints(&["left_foot", "right_foot"]).unwrap()
    }

    #[test]
    fn d_formula() {
        assert_eq!(feature_dim(24, 4), 151);
        assert!(MotionTensor::new(Array2::zeros((3, 150)), 24, 4, 30.0).is_err());
    }

    #[test]
    fn level_spec_defaults() {
        let spec = LevelSpec::for_length(120).unwrap();
        assert_eq!(spec.level_lengths, [30, 60, 90, 120]);
        assert_eq!(LevelSpec::stages_of(0), vec![0, 1]);
        assert_eq!(LevelSpec::stages_of(3), vec![6]);
        assert!(LevelSpec::for_length(8).is_err());
    }

    #[test]
    fn stationary_feet_on_ground_are_in_contact() {
        let pos = vec![vec![Vector3::new(0.0, 0.0, 0.0), Vector3::new(1.0, 0.01, 0.0)]; 10];
        let c = extract_contacts(&pos, 30.0, 0.18, 0.5).unwrap();
        assert!(c.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn fast_feet_are_not_in_contact() {
        let pos: Vec<Vec<Vector3<f64>>> = (0..10)
            .map(|t| vec![Vector3::new(t as f64 * 1.8 / 30.0, 0.0, 0.0)])
            .collect();
        let c = extract_contacts(&pos, 30.0, 0.18, 0.5).unwrap();
        assert!(c.iter().all(|&v| v == 0.0));
        assert!(extract_contacts(&vec![vec![]; 4], 30.0, 0.18, 0.5).is_err());
    }

    #[test]
    fn gait_schedule_contacts() {
        // Foot planted for frames [0,10), swinging for [10,20), planted for [20,30).
        let mut x = 0.0;
        let mut pos = Vec::new();
        for t in 0..30 {
            let swing = (10..20).contains(&t);
            let y = if swing { 0.2 } else { 0.0 };
            pos.push(vec![Vector3::new(x, y, 0.0)]);
            if swing || t == 9 {
                x += 0.05;
            }
        }
        let c = extract_contacts(&pos, 30.0, 0.18, 0.1).unwrap();
        for t in 0..30 {
            // moving between t and t+1 for t in 9..20; raised for 10..20
            let expected = if (9..20).contains(&t) { 0.0 } else { 1.0 };
            let expected = if t == 29 { c[[28, 0]] } else { expected };
            assert_eq!(c[[t, 0]], expected, "frame {t}");
        }
    }

    fn random_clip(sk: &Skeleton, frames: usize, seed: u64) -> RawMotion {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let data = Array2::from_shape_fn((frames, sk.channel_count()), |(t, c)| {
            if c < 3 {
                t as f64 * 0.03 + c as f64 + rng.random_range(-0.01..0.01)
            } else {
                rng.random_range(-80.0..80.0)
            }
        });
        RawMotion::new(1.0 / 30.0, data).unwrap()
    }

    #[test]
    fn encode_decode_positions_round_trip() {
        let sk = two_link();
        let m = random_clip(&sk, 20, 5);
        let enc = encode_motion(&sk, &m).unwrap();
        assert_eq!(enc.dim(), 3 * 6 + 2 + 3);
        assert!(enc.contacts().iter().all(|v| (0.0..=1.0).contains(v)));
        let r0 = m.root_position(&sk, 0);
        let dec = decode_motion(&enc, &sk, [r0.x, r0.z]).unwrap();
        let a = motion_positions(&sk, &m).unwrap();
        let b = motion_positions(&sk, &dec).unwrap();
        for (fa, fb) in a.iter().zip(&b) {
            for (pa, pb) in fa.iter().zip(fb) {
                assert!((pa - pb).norm() < 1e-3);
            }
        }
    }

    #[test]
    fn static_clip_has_zero_velocity() {
        let sk = two_link();
        let mut m = random_clip(&sk, 5, 1);
        let row = m.frames.row(0).to_owned();
        for mut r in m.frames.rows_mut() {
            r.assign(&row);
        }
        let enc = encode_motion(&sk, &m).unwrap();
        let root = enc.root_range();
        for t in 0..5 {
            assert_eq!(enc.data[[t, root.start + 1]], 0.0);
            assert_eq!(enc.data[[t, root.start + 2]], 0.0);
        }
    }

    #[test]
    fn decode_velocity_integration() {
        let mut data = Array2::zeros((4, feature_dim(1, 0)));
        for t in 0..4 {
            data[[t, 0]] = 1.0;
            data[[t, 4]] = 1.0;
        }
        data[[0, 7]] = 3.0; // vx at frame 0
        let tensor = MotionTensor::new(data.clone(), 1, 0, 30.0).unwrap();
        let roots = decode_root(&tensor, [1.0, 2.0]);
        assert_eq!(roots[0].x, 1.0);
        assert_relative_eq!(roots[1].x, 1.1, epsilon = 1e-12);
        assert_relative_eq!(roots[3].x, 1.1, epsilon = 1e-12);
        assert!(roots.iter().all(|r| r.z == 2.0));
        let mut zero = data;
        zero[[0, 7]] = 0.0;
        let still = decode_root(&MotionTensor::new(zero, 1, 0, 30.0).unwrap(), [0.5, 0.5]);
        assert!(still.iter().all(|r| r.x == 0.5 && r.z == 0.5));
    }

    #[test]
    fn decode_rejects_degenerate_block() {
        let tensor = MotionTensor::new(Array2::zeros((3, feature_dim(1, 0))), 1, 0, 30.0).unwrap();
        let (sk, _) = parse_bvh("HIERARCHY\nROOT a\n{\nOFFSET 0 0 0\nCHANNELS 3 Zrotation Xrotation Yrotation\n}\nMOTION\nFrames: 2\nFrame Time: 0.1\n0 0 0\n0 0 0\n").unwrap();
        assert!(matches!(decode_motion(&tensor, &sk, [0.0, 0.0]), Err(Error::DegenerateRotation)));
    }

    #[test]
    fn resample_identity_constant_and_ramp() {
        let data = Array2::from_shape_fn((100, 3), |(t, c)| match c {
            0 => 2.5,
            1 => t as f64 * 0.1 - 3.0,
            _ => ((t * 7) % 11) as f64 / 11.0,
        });
        let tensor = MotionTensor::new(data, 0, 0, 30.0).unwrap();
        assert_eq!(temporal_resample(&tensor, 100).unwrap(), tensor);
        let down = temporal_resample(&tensor, 50).unwrap();
        assert!(down.data.column(0).iter().all(|&v| (v - 2.5).abs() < 1e-12));
        for t in 0..50 {
            let expected = (t as f64 * 99.0 / 49.0) * 0.1 - 3.0;
            assert_relative_eq!(down.data[[t, 1]], expected, epsilon = 1e-9);
        }
        let up = temporal_resample(&down, 100).unwrap();
        for t in 0..100 {
            assert_relative_eq!(up.data[[t, 1]], t as f64 * 0.1 - 3.0, epsilon = 1e-6);
        }
        // convex combination keeps the [0, 1] bounds of the third channel
        assert!(up.data.column(2).iter().all(|v| (0.0..=1.0).contains(v)));
        assert!(temporal_resample(&tensor, 1).is_err());
    }

    #[test]
    fn dump_round_trip() {
        let data = Array2::from_shape_fn((5, feature_dim(2, 1)), |(t, c)| (t * 31 + c) as f64 * 0.25);
        let tensor = MotionTensor::new(data, 2, 1, 30.0).unwrap();
        let mut buf = Vec::new();
        tensor.write_dump(&mut buf).unwrap();
        assert_eq!(buf.len(), 4 + 20 + 8 + 5 * 16 * 4);
        let back = MotionTensor::read_dump(&buf[..]).unwrap();
        assert_eq!(back, tensor);
    }
}
