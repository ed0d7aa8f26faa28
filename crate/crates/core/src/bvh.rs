//! BVH (BioVision hierarchy) ingestion and export, plus the clip-level edits
//! applied before encoding: joint subsetting, frame-rate decimation and
//! trimming.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{Matrix3, Vector3};
use ndarray::{s, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{BvhError, Error, Result};
use crate::rotation::{matrix_to_euler, Axis};

/// Default 24-joint Mixamo keep-list.
pub const MIXAMO_KEEP_24: &str = include_str!("../configs/mixamo24.txt");
/// Default Mixamo foot joints (contact channel order).
pub const MIXAMO_FEET: &str = include_str!("../configs/mixamo_feet.txt");

/// Aliases tried, in order, for each default foot joint when no explicit
/// foot list is configured.
pub const DEFAULT_FOOT_ALIASES: [&[&str]; 4] = [
    &["left_foot", "LeftFoot"],
    &["left_toe", "LeftToeBase", "LeftToe"],
    &["right_foot", "RightFoot"],
    &["right_toe", "RightToeBase", "RightToe"],
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Channel {
    Position(Axis),
    Rotation(Axis),
}

impl Channel {
    fn parse(token: &str) -> Option<Channel> {
        let axis = match token.as_bytes().first()?.to_ascii_uppercase() {
            b'X' => Axis::X,
            b'Y' => Axis::Y,
            b'Z' => Axis::Z,
            _ => return None,
        };
        match &token[1..].to_ascii_lowercase()[..] {
            "position" => Some(Channel::Position(axis)),
            "rotation" => Some(Channel::Rotation(axis)),
            _ => None,
        }
    }

    fn name(self) -> String {
        match self {
            Channel::Position(a) => format!("{}position", a.letter()),
            Channel::Rotation(a) => format!("{}rotation", a.letter()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Joint {
    pub name: String,
    pub parent: Option<usize>,
    pub offset: Vector3<f64>,
    pub channels: Vec<Channel>,
    pub end_site: Option<Vector3<f64>>,
}

impl Joint {
    /// Euler order of this joint's rotation channels, if it has three.
    pub fn rotation_order(&self) -> Option<[Axis; 3]> {
        let axes: Vec<Axis> = self
            .channels
            .iter()
            .filter_map(|c| match c {
                Channel::Rotation(a) => Some(*a),
                Channel::Position(_) => None,
            })
            .collect();
        (axes.len() == 3).then(|| [axes[0], axes[1], axes[2]])
    }
}

/// Kinematic tree in topological order (parents before children).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Skeleton {
    pub joints: Vec<Joint>,
    /// Joint indices whose contacts are labelled, in contact-channel order.
    pub foot_joints: Vec<usize>,
}

impl Skeleton {
    pub fn new(joints: Vec<Joint>) -> Result<Self> {
        let skeleton = Skeleton {
            joints,
            foot_joints: Vec::new(),
        };
        skeleton.validate()?;
        Ok(skeleton)
    }

    pub fn validate(&self) -> Result<()> {
        if self.joints.is_empty() {
            return Err(Error::Skeleton("no joints".into()));
        }
        let roots = self.joints.iter().filter(|j| j.parent.is_none()).count();
        if roots != 1 || self.joints[0].parent.is_some() {
            return Err(Error::Skeleton(format!(
                "expected exactly one root at index 0, found {roots} parentless joints"
            )));
        }
        for (i, j) in self.joints.iter().enumerate() {
            if let Some(p) = j.parent {
                if p >= i {
                    return Err(Error::Skeleton(format!(
                        "joint `{}` (index {i}) has parent {p}, which is not earlier in order",
                        j.name
                    )));
                }
            }
        }
        for &f in &self.foot_joints {
            if f >= self.joints.len() {
                return Err(Error::Skeleton(format!("foot joint index {f} out of range")));
            }
        }
        Ok(())
    }

    pub fn joint_count(&self) -> usize {
        self.joints.len()
    }

    pub fn channel_count(&self) -> usize {
        self.joints.iter().map(|j| j.channels.len()).sum()
    }

    /// First channel column of each joint within a frame row.
    pub fn channel_starts(&self) -> Vec<usize> {
        let mut acc = 0;
        self.joints
            .iter()
            .map(|j| {
                let start = acc;
                acc += j.channels.len();
                start
            })
            .collect()
    }

    pub fn parents(&self) -> Vec<Option<usize>> {
        self.joints.iter().map(|j| j.parent).collect()
    }

    /// Look a joint up by exact name, falling back to the name with any
    /// `namespace:` prefix stripped (Mixamo exports `mixamorig:Hips`).
    pub fn find_joint(&self, name: &str) -> Option<usize> {
        self.joints
            .iter()
            .position(|j| j.name == name)
            .or_else(|| {
                self.joints
                    .iter()
                    .position(|j| strip_namespace(&j.name) == strip_namespace(name))
            })
    }

    pub fn require_joint(&self, name: &str) -> Result<usize> {
        self.find_joint(name)
            .ok_or_else(|| Error::UnknownJoint(name.to_string()))
    }

    /// Set the foot-joint set from a list of names.
    pub fn with_foot_joints<S: AsRef<str>>(mut self, names: &[S]) -> Result<Self> {
        self.foot_joints = names
            .iter()
            .map(|n| self.require_joint(n.as_ref()))
            .collect::<Result<_>>()?;
        Ok(self)
    }

    /// Resolve the four default heel/toe joints through [`DEFAULT_FOOT_ALIASES`].
    pub fn with_default_feet(mut self) -> Result<Self> {
        let mut feet = Vec::with_capacity(4);
        for aliases in DEFAULT_FOOT_ALIASES {
            let idx = aliases
                .iter()
                .find_map(|a| self.find_joint(a))
                .ok_or_else(|| Error::UnknownJoint(aliases.join("|")))?;
            feet.push(idx);
        }
        self.foot_joints = feet;
        Ok(self)
    }

    /// Mean length of the offsets of the foot joints.
    pub fn mean_foot_offset(&self) -> f64 {
        if self.foot_joints.is_empty() {
            return 0.0;
        }
        self.foot_joints
            .iter()
            .map(|&f| self.joints[f].offset.norm())
            .sum::<f64>()
            / self.foot_joints.len() as f64
    }
}

fn strip_namespace(name: &str) -> &str {
    name.rsplit(':').next().unwrap_or(name)
}

/// Parse a plain-text name list: one name per line, `#` comments.
pub fn parse_name_list(text: &str) -> Vec<String> {
    text.lines()
        .map(|l| l.split('#').next().unwrap_or("").trim())
        .filter(|l| !l.is_empty())
        .map(str::to_string)
        .collect()
}

pub fn read_name_list(path: &Path) -> Result<Vec<String>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(parse_name_list(&text))
}

/// Per-frame channel values exactly as stored in the MOTION section.
#[derive(Debug, Clone, PartialEq)]
pub struct RawMotion {
    pub frame_time: f64,
    /// T x channel_count, in the skeleton's channel order.
    pub frames: Array2<f64>,
}

impl RawMotion {
    pub fn new(frame_time: f64, frames: Array2<f64>) -> Result<Self> {
        if !(frame_time > 0.0) {
            return Err(Error::Motion(format!("frame time must be positive, got {frame_time}")));
        }
        if frames.nrows() < 2 {
            return Err(Error::Motion(format!(
                "at least 2 frames required, got {}",
                frames.nrows()
            )));
        }
        Ok(RawMotion { frame_time, frames })
    }

    pub fn frame_count(&self) -> usize {
        self.frames.nrows()
    }

    pub fn fps(&self) -> f64 {
        1.0 / self.frame_time
    }

    pub fn check_layout(&self, skeleton: &Skeleton) -> Result<()> {
        if self.frames.ncols() != skeleton.channel_count() {
            return Err(Error::Shape(format!(
                "motion has {} channels per frame, skeleton declares {}",
                self.frames.ncols(),
                skeleton.channel_count()
            )));
        }
        Ok(())
    }

    /// Root translation from the root's position channels (missing axes are 0).
    pub fn root_position(&self, skeleton: &Skeleton, t: usize) -> Vector3<f64> {
        let mut p = Vector3::zeros();
        for (k, ch) in skeleton.joints[0].channels.iter().enumerate() {
            if let Channel::Position(a) = ch {
                p[a.index()] = self.frames[[t, k]];
            }
        }
        p
    }

    /// Local rotation of joint `j` at frame `t`, composed in channel order.
    pub fn local_rotation(&self, skeleton: &Skeleton, starts: &[usize], t: usize, j: usize) -> Matrix3<f64> {
        let joint = &skeleton.joints[j];
        let mut r = Matrix3::identity();
        for (k, ch) in joint.channels.iter().enumerate() {
            if let Channel::Rotation(a) = ch {
                r *= crate::rotation::axis_rotation(*a, self.frames[[t, starts[j] + k]].to_radians());
            }
        }
        r
    }

    /// All local rotations as `[frame][joint]`.
    pub fn local_rotations(&self, skeleton: &Skeleton) -> Vec<Vec<Matrix3<f64>>> {
        let starts = skeleton.channel_starts();
        (0..self.frame_count())
            .map(|t| {
                (0..skeleton.joint_count())
                    .map(|j| self.local_rotation(skeleton, &starts, t, j))
                    .collect()
            })
            .collect()
    }

    pub fn root_positions(&self, skeleton: &Skeleton) -> Vec<Vector3<f64>> {
        (0..self.frame_count())
            .map(|t| self.root_position(skeleton, t))
            .collect()
    }

    /// Build channel rows from rotation matrices and root translations.
    /// Joints without three rotation channels must carry identity rotations.
    pub fn from_rotations(
        skeleton: &Skeleton,
        frame_time: f64,
        root_positions: &[Vector3<f64>],
        rotations: &[Vec<Matrix3<f64>>],
    ) -> Result<Self> {
        let t_len = rotations.len();
        if root_positions.len() != t_len {
            return Err(Error::Shape("root position and rotation frame counts differ".into()));
        }
        let mut frames = Array2::zeros((t_len, skeleton.channel_count()));
        let starts = skeleton.channel_starts();
        for t in 0..t_len {
            if rotations[t].len() != skeleton.joint_count() {
                return Err(Error::Shape(format!(
                    "frame {t} has {} rotations, skeleton has {} joints",
                    rotations[t].len(),
                    skeleton.joint_count()
                )));
            }
            for (j, joint) in skeleton.joints.iter().enumerate() {
                let euler = joint
                    .rotation_order()
                    .map(|order| matrix_to_euler(order, &rotations[t][j]));
                let mut rot_k = 0;
                for (k, ch) in joint.channels.iter().enumerate() {
                    frames[[t, starts[j] + k]] = match ch {
                        Channel::Position(a) if j == 0 => root_positions[t][a.index()],
                        Channel::Position(a) => joint.offset[a.index()],
                        Channel::Rotation(_) => {
                            let v = euler.map(|e| e[rot_k]).unwrap_or(0.0);
                            rot_k += 1;
                            v
                        }
                    };
                }
            }
        }
        RawMotion::new(frame_time, frames)
    }
}

struct Tokens<'a> {
    items: Vec<(usize, &'a str)>,
    pos: usize,
}

impl<'a> Tokens<'a> {
    fn next(&mut self, what: &str) -> std::result::Result<(usize, &'a str), BvhError> {
        let tok = self
            .items
            .get(self.pos)
            .copied()
            .ok_or_else(|| BvhError::UnexpectedEof(format!("expected {what}")))?;
        self.pos += 1;
        Ok(tok)
    }

    fn peek(&self) -> Option<(usize, &'a str)> {
        self.items.get(self.pos).copied()
    }

    fn expect(&mut self, word: &str) -> std::result::Result<usize, BvhError> {
        let (line, tok) = self.next(word)?;
        if tok.eq_ignore_ascii_case(word) {
            Ok(line)
        } else {
            Err(BvhError::Syntax {
                line,
                message: format!("expected `{word}`, found `{tok}`"),
            })
        }
    }

    fn number(&mut self) -> std::result::Result<f64, BvhError> {
        let (line, tok) = self.next("a number")?;
        parse_number(line, tok)
    }

    fn vector(&mut self) -> std::result::Result<Vector3<f64>, BvhError> {
        Ok(Vector3::new(self.number()?, self.number()?, self.number()?))
    }
}

fn parse_number(line: usize, tok: &str) -> std::result::Result<f64, BvhError> {
    tok.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| BvhError::NotANumber {
            line,
            token: tok.to_string(),
        })
}

/// Parse a BVH document into its skeleton and raw per-frame channels.
/// The skeleton's foot-joint set is left empty.
pub fn parse_bvh(text: &str) -> Result<(Skeleton, RawMotion)> {
    let lines: Vec<&str> = text.lines().collect();
    let motion_line = lines
        .iter()
        .position(|l| l.trim().eq_ignore_ascii_case("MOTION"))
        .ok_or_else(|| BvhError::UnexpectedEof("missing MOTION section".into()))?;

    let mut tokens = Tokens {
        items: lines[..motion_line]
            .iter()
            .enumerate()
            .flat_map(|(i, l)| l.split_whitespace().map(move |t| (i + 1, t)))
            .collect(),
        pos: 0,
    };
    tokens.expect("HIERARCHY")?;
    let mut joints = Vec::new();
    let (line, tok) = tokens.next("ROOT")?;
    if !tok.eq_ignore_ascii_case("ROOT") {
        return Err(BvhError::Syntax {
            line,
            message: format!("expected `ROOT`, found `{tok}`"),
        }
        .into());
    }
    parse_joint(&mut tokens, None, &mut joints)?;
    if let Some((line, tok)) = tokens.peek() {
        return Err(BvhError::Syntax {
            line,
            message: format!("unexpected `{tok}` after root joint (multiple roots are not supported)"),
        }
        .into());
    }
    let skeleton = Skeleton::new(joints)?;
    let channels = skeleton.channel_count();

    let mut body = lines[motion_line + 1..]
        .iter()
        .enumerate()
        .map(|(i, l)| (motion_line + 2 + i, l.trim()))
        .filter(|(_, l)| !l.is_empty());
    let (frames_line, frames_text) = body
        .next()
        .ok_or_else(|| BvhError::UnexpectedEof("missing `Frames:`".into()))?;
    let declared = frames_text
        .strip_prefix("Frames:")
        .map(str::trim)
        .and_then(|v| v.parse::<usize>().ok())
        .ok_or_else(|| BvhError::Syntax {
            line: frames_line,
            message: format!("expected `Frames: <count>`, found `{frames_text}`"),
        })?;
    let (ft_line, ft_text) = body
        .next()
        .ok_or_else(|| BvhError::UnexpectedEof("missing `Frame Time:`".into()))?;
    let frame_time = ft_text
        .strip_prefix("Frame Time:")
        .map(str::trim)
        .ok_or_else(|| BvhError::Syntax {
            line: ft_line,
            message: format!("expected `Frame Time: <seconds>`, found `{ft_text}`"),
        })
        .and_then(|v| parse_number(ft_line, v))?;
    if !(frame_time > 0.0) {
        return Err(BvhError::Syntax {
            line: ft_line,
            message: format!("frame time must be positive, got {frame_time}"),
        }
        .into());
    }

    let mut data = Vec::with_capacity(declared * channels);
    let mut found = 0usize;
    let mut last_line = ft_line;
    for (line, text) in body {
        let before = data.len();
        for tok in text.split_whitespace() {
            data.push(parse_number(line, tok)?);
        }
        let count = data.len() - before;
        if count != channels {
            return Err(BvhError::ChannelCount {
                line,
                frame: found,
                found: count,
                expected: channels,
            }
            .into());
        }
        found += 1;
        last_line = line;
    }
    if found != declared {
        return Err(BvhError::FrameCount {
            line: last_line,
            declared,
            found,
        }
        .into());
    }
    let frames = Array2::from_shape_vec((found, channels), data)
        .map_err(|e| Error::Shape(e.to_string()))?;
    let motion = RawMotion::new(frame_time, frames)?;
    Ok((skeleton, motion))
}

fn parse_joint(
    tokens: &mut Tokens<'_>,
    parent: Option<usize>,
    joints: &mut Vec<Joint>,
) -> std::result::Result<(), BvhError> {
    let (_, name) = tokens.next("joint name")?;
    tokens.expect("{")?;
    tokens.expect("OFFSET")?;
    let offset = tokens.vector()?;
    let mut channels = Vec::new();
    if tokens.peek().map(|(_, t)| t.eq_ignore_ascii_case("CHANNELS")) == Some(true) {
        tokens.next("CHANNELS")?;
        let (line, n_tok) = tokens.next("channel count")?;
        let n: usize = n_tok.parse().map_err(|_| BvhError::Syntax {
            line,
            message: format!("invalid channel count `{n_tok}`"),
        })?;
        for _ in 0..n {
            let (line, c) = tokens.next("channel name")?;
            channels.push(Channel::parse(c).ok_or_else(|| BvhError::Syntax {
                line,
                message: format!("unknown channel `{c}`"),
            })?);
        }
    }
    let index = joints.len();
    joints.push(Joint {
        name: name.to_string(),
        parent,
        offset,
        channels,
        end_site: None,
    });
    loop {
        let (line, tok) = tokens.next("`}`")?;
        if tok == "}" {
            return Ok(());
        } else if tok.eq_ignore_ascii_case("JOINT") {
            parse_joint(tokens, Some(index), joints)?;
        } else if tok.eq_ignore_ascii_case("End") {
            tokens.expect("Site")?;
            tokens.expect("{")?;
            tokens.expect("OFFSET")?;
            joints[index].end_site = Some(tokens.vector()?);
            tokens.expect("}")?;
        } else {
            return Err(BvhError::Syntax {
                line,
                message: format!("unexpected `{tok}` in joint `{name}`"),
            });
        }
    }
}

/// Serialize to BVH text. Numbers use shortest round-trip formatting, so a
/// re-parse reproduces every value exactly.
pub fn write_bvh(skeleton: &Skeleton, motion: &RawMotion) -> Result<String> {
    motion.check_layout(skeleton)?;
    if motion.frame_count() < 2 {
        return Err(Error::Motion("at least 2 frames required".into()));
    }
    let mut out = String::from("HIERARCHY\n");
    let children = children_of(skeleton);
    write_joint(&mut out, skeleton, &children, 0, 0);
    let _ = writeln!(out, "MOTION");
    let _ = writeln!(out, "Frames: {}", motion.frame_count());
    let _ = writeln!(out, "Frame Time: {}", motion.frame_time);
    for row in motion.frames.rows() {
        let line: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    Ok(out)
}

fn children_of(skeleton: &Skeleton) -> Vec<Vec<usize>> {
    let mut children = vec![Vec::new(); skeleton.joint_count()];
    for (i, j) in skeleton.joints.iter().enumerate() {
        if let Some(p) = j.parent {
            children[p].push(i);
        }
    }
    children
}

fn write_joint(out: &mut String, skeleton: &Skeleton, children: &[Vec<usize>], j: usize, depth: usize) {
    let pad = "\t".repeat(depth);
    let joint = &skeleton.joints[j];
    let kind = if joint.parent.is_none() { "ROOT" } else { "JOINT" };
    let o = joint.offset;
    let _ = writeln!(out, "{pad}{kind} {}", joint.name);
    let _ = writeln!(out, "{pad}{{");
    let _ = writeln!(out, "{pad}\tOFFSET {} {} {}", o.x, o.y, o.z);
    if !joint.channels.is_empty() {
        let names: Vec<String> = joint.channels.iter().map(|c| c.name()).collect();
        let _ = writeln!(out, "{pad}\tCHANNELS {} {}", joint.channels.len(), names.join(" "));
    }
    for &c in &children[j] {
        write_joint(out, skeleton, children, c, depth + 1);
    }
    if let Some(e) = joint.end_site {
        let _ = writeln!(out, "{pad}\tEnd Site");
        let _ = writeln!(out, "{pad}\t{{");
        let _ = writeln!(out, "{pad}\t\tOFFSET {} {} {}", e.x, e.y, e.z);
        let _ = writeln!(out, "{pad}\t}}");
    }
    let _ = writeln!(out, "{pad}}}");
}

pub fn read_bvh(path: &Path) -> Result<(Skeleton, RawMotion)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_bvh(&text)
}

pub fn save_bvh(path: &Path, skeleton: &Skeleton, motion: &RawMotion) -> Result<()> {
    let text = write_bvh(skeleton, motion)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Keep a subset of joints. Each kept joint is re-parented to its nearest
/// kept ancestor; its offset becomes the accumulated offset along the removed
/// chain and its local rotation the product of the removed local rotations
/// followed by its own, so world orientations of kept joints are unchanged.
pub fn select_joints<S: AsRef<str>>(
    skeleton: &Skeleton,
    motion: &RawMotion,
    keep: &[S],
) -> Result<(Skeleton, RawMotion)> {
    motion.check_layout(skeleton)?;
    let mut kept = HashSet::new();
    for name in keep {
        kept.insert(skeleton.require_joint(name.as_ref())?);
    }
    if !kept.contains(&0) {
        return Err(Error::Skeleton(format!(
            "keep-list must include the root joint `{}`",
            skeleton.joints[0].name
        )));
    }
    let order: Vec<usize> = (0..skeleton.joint_count()).filter(|j| kept.contains(j)).collect();
    let mut new_index = vec![usize::MAX; skeleton.joint_count()];
    for (n, &j) in order.iter().enumerate() {
        new_index[j] = n;
    }

    // Removed ancestors between each kept joint and its kept parent, outermost first.
    let mut chains: Vec<Vec<usize>> = Vec::with_capacity(order.len());
    let mut joints = Vec::with_capacity(order.len());
    for &j in &order {
        let src = &skeleton.joints[j];
        let mut chain = Vec::new();
        let mut offset = src.offset;
        let mut parent = src.parent;
        while let Some(p) = parent {
            if kept.contains(&p) {
                break;
            }
            chain.push(p);
            offset += skeleton.joints[p].offset;
            parent = skeleton.joints[p].parent;
        }
        chain.reverse();
        let mut channels = src.channels.clone();
        if !chain.is_empty() && src.rotation_order().is_none() {
            channels.retain(|c| matches!(c, Channel::Position(_)));
            channels.extend([
                Channel::Rotation(Axis::Z),
                Channel::Rotation(Axis::X),
                Channel::Rotation(Axis::Y),
            ]);
        }
        joints.push(Joint {
            name: src.name.clone(),
            parent: parent.map(|p| new_index[p]),
            offset,
            channels,
            end_site: src.end_site,
        });
        chains.push(chain);
    }
    let mut new_skeleton = Skeleton {
        joints,
        foot_joints: skeleton
            .foot_joints
            .iter()
            .filter(|f| kept.contains(f))
            .map(|&f| new_index[f])
            .collect(),
    };
    new_skeleton.validate()?;

    let rotations = motion.local_rotations(skeleton);
    let new_rotations: Vec<Vec<Matrix3<f64>>> = rotations
        .iter()
        .map(|frame| {
            order
                .iter()
                .zip(&chains)
                .map(|(&j, chain)| {
                    chain
                        .iter()
                        .fold(Matrix3::<f64>::identity(), |acc, &r| acc * frame[r])
                        * frame[j]
                })
                .collect()
        })
        .collect();
    let roots = motion.root_positions(skeleton);
    let mut new_motion = RawMotion::from_rotations(&new_skeleton, motion.frame_time, &roots, &new_rotations)?;
    // Non-root position channels and untouched rotation channels are copied verbatim.
    let src_starts = skeleton.channel_starts();
    let dst_starts = new_skeleton.channel_starts();
    for (n, &j) in order.iter().enumerate() {
        if chains[n].is_empty() && skeleton.joints[j].channels == new_skeleton.joints[n].channels {
            let len = skeleton.joints[j].channels.len();
            let src = motion.frames.slice(s![.., src_starts[j]..src_starts[j] + len]);
            new_motion
                .frames
                .slice_mut(s![.., dst_starts[n]..dst_starts[n] + len])
                .assign(&src);
        }
    }
    new_skeleton.foot_joints.dedup();
    Ok((new_skeleton, new_motion))
}

/// Nearest-frame decimation to `target_fps`. Output frame `k` is source
/// frame `round(k * source_fps / target_fps)`.
pub fn resample(motion: &RawMotion, target_fps: f64) -> Result<RawMotion> {
    let source_fps = motion.fps();
    if !(target_fps > 0.0) {
        return Err(Error::Motion(format!("target fps must be positive, got {target_fps}")));
    }
    if target_fps > source_fps * (1.0 + 1e-4) {
        return Err(Error::Motion(format!(
            "upsampling from {source_fps:.4} to {target_fps} fps is not supported"
        )));
    }
    let ratio = if (target_fps - source_fps).abs() <= source_fps * 1e-4 {
        1.0
    } else {
        source_fps / target_fps
    };
    let t_len = motion.frame_count();
    let indices: Vec<usize> = (0..)
        .map(|k: usize| (k as f64 * ratio).round() as usize)
        .take_while(|&i| i < t_len)
        .collect();
    let frames = motion.frames.select(ndarray::Axis(0), &indices);
    let frame_time = if ratio == 1.0 {
        motion.frame_time
    } else {
        1.0 / target_fps
    };
    RawMotion::new(frame_time, frames)
}

/// Keep frames `start..end`.
pub fn trim(motion: &RawMotion, start: usize, end: usize) -> Result<RawMotion> {
    if start >= end || end > motion.frame_count() {
        return Err(Error::Motion(format!(
            "invalid trim range {start}..{end} for {} frames",
            motion.frame_count()
        )));
    }
    RawMotion::new(motion.frame_time, motion.frames.slice(s![start..end, ..]).to_owned())
}
