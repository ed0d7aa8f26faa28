//! Procedural clips on a small humanoid skeleton, for tests, benchmarks and
//! smoke runs without capture data.

use std::f64::consts::TAU;

use nalgebra::Vector3;
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bvh::{Channel, Joint, RawMotion, Skeleton};
use crate::error::{Error, Result};
use crate::rotation::Axis;

/// `(name, parent, offset in meters)` of the 18-joint humanoid.
const JOINTS: [(&str, Option<usize>, [f64; 3]); 18] = [
    ("pelvis", None, [0.0, 0.0, 0.0]),
    ("spine", Some(0), [0.0, 0.12, 0.0]),
    ("neck", Some(1), [0.0, 0.38, 0.0]),
    ("head", Some(2), [0.0, 0.12, 0.02]),
    ("left_shoulder", Some(1), [0.18, 0.34, 0.0]),
    ("left_elbow", Some(4), [0.28, 0.0, 0.0]),
    ("left_wrist", Some(5), [0.25, 0.0, 0.0]),
    ("right_shoulder", Some(1), [-0.18, 0.34, 0.0]),
    ("right_elbow", Some(7), [-0.28, 0.0, 0.0]),
    ("right_wrist", Some(8), [-0.25, 0.0, 0.0]),
    ("left_hip", Some(0), [0.1, -0.05, 0.0]),
    ("left_knee", Some(10), [0.0, -0.42, 0.0]),
    ("left_foot", Some(11), [0.0, -0.42, 0.0]),
    ("left_toe", Some(12), [0.0, -0.05, 0.12]),
    ("right_hip", Some(0), [-0.1, -0.05, 0.0]),
    ("right_knee", Some(14), [0.0, -0.42, 0.0]),
    ("right_foot", Some(15), [0.0, -0.42, 0.0]),
    ("right_toe", Some(16), [0.0, -0.05, 0.12]),
];

const STANDING_HEIGHT: f64 = 0.95;

/// Humanoid with BVH channels (root: position + ZXY rotation, others: ZXY
/// rotation) and the four default foot joints.
pub fn synthetic_skeleton() -> Skeleton {
    let rotation = [Channel::Rotation(Axis::Z), Channel::Rotation(Axis::X), Channel::Rotation(Axis::Y)];
    let joints = JOINTS
        .iter()
        .map(|&(name, parent, o)| {
            let mut channels = Vec::new();
            if parent.is_none() {
                channels.extend([
                    Channel::Position(Axis::X),
                    Channel::Position(Axis::Y),
                    Channel::Position(Axis::Z),
                ]);
            }
            channels.extend(rotation);
            let leaf = !JOINTS.iter().any(|j| j.1 == JOINTS.iter().position(|k| k.0 == name));
            Joint {
                name: name.to_string(),
                parent,
                offset: Vector3::new(o[0], o[1], o[2]),
                channels,
                end_site: leaf.then(|| Vector3::new(0.0, 0.05, 0.0)),
            }
        })
        .collect();
    Skeleton::new(joints)
        .and_then(Skeleton::with_default_feet)
        .expect("built-in skeleton is valid")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SynthStyle {
    /// Forward walk with alternating legs and counter-swinging arms.
    Walk,
    /// In-place dance: hip sway, torso twist, raised circling arms, knee bounce.
    Dance,
    /// Standing wave with one arm while shifting weight.
    Wave,
}

impl SynthStyle {
    pub const ALL: [SynthStyle; 3] = [SynthStyle::Walk, SynthStyle::Dance, SynthStyle::Wave];

    pub fn name(self) -> &'static str {
        match self {
            SynthStyle::Walk => "walk",
            SynthStyle::Dance => "dance",
            SynthStyle::Wave => "wave",
        }
    }
}

impl std::str::FromStr for SynthStyle {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        SynthStyle::ALL
            .into_iter()
            .find(|st| st.name() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::Config(format!("unknown synthetic style `{s}` (walk, dance, wave)")))
    }
}

/// Per-channel smooth jitter: two low-frequency sinusoids with seeded
/// frequencies and phases.
struct Jitter {
    terms: Vec<[(f64, f64, f64); 2]>,
}

impl Jitter {
    fn new(channels: usize, amplitude: f64, rng: &mut ChaCha8Rng) -> Self {
        let terms = (0..channels)
            .map(|_| {
                std::array::from_fn(|_| {
                    let freq = rng.random_range(0.15..0.8);
                    let phase = rng.random_range(0.0..TAU);
                    let amp = amplitude * rng.random_range(0.3..1.0);
                    (amp, freq, phase)
                })
            })
            .collect();
        Jitter { terms }
    }

    fn at(&self, channel: usize, seconds: f64) -> f64 {
        self.terms[channel]
            .iter()
            .map(|&(a, f, p)| a * (TAU * f * seconds + p).sin())
            .sum()
    }
}

/// Degrees of one joint as (z, x, y).
type Pose = [[f64; 3]; 18];

fn walk_pose(s: f64) -> (Pose, [f64; 3]) {
    let w = TAU * 1.0 * s;
    let mut p = [[0.0; 3]; 18];
    let swing = 28.0 * w.sin();
    p[10] = [0.0, -swing, 0.0];
    p[14] = [0.0, swing, 0.0];
    p[11] = [0.0, 30.0 * (1.0 - (w + 0.6).cos()).max(0.0) * 0.5 + 5.0, 0.0];
    p[15] = [0.0, 30.0 * (1.0 + (w + 0.6).cos()).max(0.0) * 0.5 + 5.0, 0.0];
    p[12] = [0.0, -8.0 * w.cos(), 0.0];
    p[16] = [0.0, 8.0 * w.cos(), 0.0];
    p[4] = [-75.0, swing * 0.8, 0.0];
    p[7] = [75.0, -swing * 0.8, 0.0];
    p[5] = [0.0, 0.0, -15.0];
    p[8] = [0.0, 0.0, 15.0];
    p[1] = [0.0, 4.0, 6.0 * w.sin()];
    p[0] = [2.0 * w.sin(), 0.0, 0.0];
    let root = [0.0, STANDING_HEIGHT - 0.02 + 0.025 * (2.0 * w).cos(), 1.1 * s];
    (p, root)
}

fn dance_pose(s: f64) -> (Pose, [f64; 3]) {
    let w = TAU * 0.75 * s;
    let mut p = [[0.0; 3]; 18];
    p[0] = [10.0 * w.sin(), 0.0, 25.0 * (0.5 * w).sin()];
    p[1] = [-8.0 * w.sin(), 0.0, -30.0 * (0.5 * w).sin()];
    p[2] = [5.0 * (2.0 * w).sin(), 0.0, 0.0];
    p[4] = [20.0 + 25.0 * (2.0 * w).sin(), 30.0 * (2.0 * w).cos(), 0.0];
    p[7] = [-20.0 + 25.0 * (2.0 * w).sin(), -30.0 * (2.0 * w).cos(), 0.0];
    p[5] = [0.0, 0.0, -60.0 - 30.0 * w.cos()];
    p[8] = [0.0, 0.0, 60.0 + 30.0 * w.cos()];
    let bounce = 12.0 * (1.0 - (2.0 * w).cos());
    p[10] = [-8.0, -bounce, 0.0];
    p[14] = [8.0, -bounce, 0.0];
    p[11] = [0.0, 2.0 * bounce, 0.0];
    p[15] = [0.0, 2.0 * bounce, 0.0];
    p[12] = [0.0, -bounce, 0.0];
    p[16] = [0.0, -bounce, 0.0];
    let drop = 0.84 * (1.0 - (bounce.to_radians()).cos());
    let root = [0.15 * w.sin(), STANDING_HEIGHT - drop, 0.0];
    (p, root)
}

fn wave_pose(s: f64) -> (Pose, [f64; 3]) {
    let w = TAU * 1.4 * s;
    let shift = (TAU * 0.35 * s).sin();
    let mut p = [[0.0; 3]; 18];
    p[4] = [150.0, 0.0, 0.0];
    p[5] = [0.0, 0.0, 35.0 * w.sin() - 20.0];
    p[6] = [0.0, 0.0, 20.0 * (w + 0.8).sin()];
    p[7] = [70.0, 0.0, 0.0];
    p[0] = [4.0 * shift, 0.0, 0.0];
    p[1] = [-6.0 * shift, 0.0, 0.0];
    p[10] = [-4.0 * shift, 0.0, 0.0];
    p[14] = [-4.0 * shift, 0.0, 0.0];
    p[3] = [0.0, 8.0 * (0.5 * w).sin(), 15.0 * shift];
    let root = [0.06 * shift, STANDING_HEIGHT - 0.01, 0.0];
    (p, root)
}

/// `frames` frames of `style` at `fps`, with seeded smooth jitter of about
/// two degrees per rotation channel and a centimeter on the root.
pub fn synthetic_clip(style: SynthStyle, frames: usize, fps: f64, seed: u64) -> Result<RawMotion> {
    if frames < 2 || !(fps > 0.0) {
        return Err(Error::Motion(format!("need at least 2 frames at positive fps, got {frames} at {fps}")));
    }
    let skeleton = synthetic_skeleton();
    let channels = skeleton.channel_count();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (style as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
    let jitter = Jitter::new(channels, 1.0, &mut rng);
    let mut data = Array2::zeros((frames, channels));
    for t in 0..frames {
        let s = t as f64 / fps;
        let (pose, root) = match style {
            SynthStyle::Walk => walk_pose(s),
            SynthStyle::Dance => dance_pose(s),
            SynthStyle::Wave => wave_pose(s),
        };
        for k in 0..3 {
            data[[t, k]] = root[k] + 0.01 * jitter.at(k, s);
        }
        for (j, angles) in pose.iter().enumerate() {
            let base = 3 + 3 * j;
            for k in 0..3 {
                data[[t, base + k]] = angles[k] + 2.0 * jitter.at(base + k, s);
            }
        }
    }
    RawMotion::new(1.0 / fps, data)
}
