//! Window-based quality metrics for generated motion.
//!
//! Every window metric works on the rotation and root channels of a clip,
//! standardized with statistics fitted on the real clips. Two windows are
//! compared by the mean over their frames of the per-frame Euclidean distance.

mod eval;
mod fid;
mod report;
mod smoothness;

pub use eval::{evaluate, EvalOptions, Evaluation};
pub use fid::{fid, fid_descriptors, frechet_distance, Gaussian, FID_PCA_DIMS, FID_RIDGE};
pub use report::{emit_report, render_svg, MetricReport, ReportFiles, REPORT_KEYS};
pub use smoothness::{
    smoothness, smoothness_from_positions, SmoothnessSeries, TransitionWindow, DEFAULT_PROBE_ALIASES,
};

use ndarray::{Array2, ArrayView2, ShapeBuilder};

use crate::error::{Error, Result};
use crate::motion::{ChannelStats, MotionTensor, Q, ROTATION_STD_FLOOR};

pub const DEFAULT_WINDOW: usize = 30;
pub const DEFAULT_LOCAL_WINDOW: usize = 8;
pub const DEFAULT_SAMPLES: usize = 50;
/// Percentile of real-to-real nearest distances used as the coverage threshold.
pub const COVERAGE_PERCENTILE: f64 = 95.0;

/// Pose channels and their standardization, fitted on real clips.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSpace {
    pub channels: Vec<usize>,
    pub stats: ChannelStats,
}

impl FeatureSpace {
    pub fn fit(real: &[MotionTensor]) -> Result<Self> {
        let first = real
            .first()
            .ok_or_else(|| Error::Metric("no real clips".into()))?;
        let channels = first.pose_channels();
        let selected: Vec<Array2<f64>> = real.iter().map(|m| m.data.select(ndarray::Axis(1), &channels)).collect();
        let stats = ChannelStats::fit(selected.iter().map(|a| a.view()))?
            .with_std_floor(0..first.joints * Q, ROTATION_STD_FLOOR);
        Ok(FeatureSpace { channels, stats })
    }

    /// `T x P` standardized pose frames.
    pub fn standardize(&self, motion: &MotionTensor) -> Result<Array2<f64>> {
        if motion.pose_channels() != self.channels {
            return Err(Error::Metric("clip layout differs from the real clips".into()));
        }
        Ok(self.stats.normalize(&motion.data.select(ndarray::Axis(1), &self.channels)))
    }

    pub fn windows(&self, clips: &[MotionTensor], window: usize) -> Result<WindowFeatureSet> {
        let frames = clips.iter().map(|c| self.standardize(c)).collect::<Result<Vec<_>>>()?;
        WindowFeatureSet::new(frames, window)
    }
}

/// Sliding windows (stride 1) over standardized clips.
#[derive(Debug, Clone)]
pub struct WindowFeatureSet {
    pub window: usize,
    /// Standardized `T x P` frames per clip, in standard layout.
    pub clips: Vec<Array2<f64>>,
}

impl WindowFeatureSet {
    pub fn new(clips: Vec<Array2<f64>>, window: usize) -> Result<Self> {
        if window == 0 {
            return Err(Error::Metric("window length must be positive".into()));
        }
        let width = clips.first().map(|c| c.ncols());
        if clips.iter().any(|c| Some(c.ncols()) != width) {
            return Err(Error::Metric("clips have different feature widths".into()));
        }
        let clips = clips
            .into_iter()
            .map(|c| if c.is_standard_layout() { c } else { c.as_standard_layout().into_owned() })
            .collect();
        Ok(WindowFeatureSet { window, clips })
    }

    pub fn width(&self) -> usize {
        self.clips.first().map_or(0, |c| c.ncols())
    }

    pub fn descriptor_dim(&self) -> usize {
        self.window * self.width()
    }

    pub fn windows_in(&self, clip: usize) -> usize {
        (self.clips[clip].nrows() + 1).saturating_sub(self.window)
    }

    pub fn len(&self) -> usize {
        (0..self.clips.len()).map(|c| self.windows_in(c)).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Flattened descriptors of one clip as an overlapping `n x (W*P)` view.
    pub fn descriptors(&self, clip: usize) -> ArrayView2<'_, f64> {
        let c = &self.clips[clip];
        let n = self.windows_in(clip);
        let p = c.ncols();
        let slice = c.as_slice().expect("standard layout");
        ArrayView2::from_shape((n, self.window * p).strides((p, 1)), slice).expect("window view within clip")
    }
}

/// Per-frame Euclidean distances, `a.nrows() x b.nrows()`.
pub fn frame_distances(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>) -> Array2<f64> {
    Array2::from_shape_fn((a.nrows(), b.nrows()), |(i, j)| {
        a.row(i)
            .iter()
            .zip(b.row(j))
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt()
    })
}

/// Window distances between every window of `a` and every window of `b`.
pub fn window_distances(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>, window: usize) -> Array2<f64> {
    let frames = frame_distances(a, b);
    let na = (a.nrows() + 1).saturating_sub(window);
    let nb = (b.nrows() + 1).saturating_sub(window);
    Array2::from_shape_fn((na, nb), |(i, j)| {
        (0..window).map(|k| frames[[i + k, j + k]]).sum::<f64>() / window as f64
    })
}

/// For each window of `query`, the distance to its nearest window in `reference`.
fn nearest_distances(query: &WindowFeatureSet, reference: &WindowFeatureSet) -> Vec<f64> {
    let w = query.window;
    let mut out = Vec::with_capacity(query.len());
    for q in &query.clips {
        let mut best = vec![f64::INFINITY; (q.nrows() + 1).saturating_sub(w)];
        for r in &reference.clips {
            let d = window_distances(q.view(), r.view(), w);
            for (b, row) in best.iter_mut().zip(d.rows()) {
                *b = row.iter().copied().fold(*b, f64::min);
            }
        }
        out.extend(best);
    }
    out
}

/// Linear-interpolated percentile (0..=100) of unsorted values.
pub fn percentile(values: &[f64], pct: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = (pct / 100.0).clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}

pub fn median(values: &[f64]) -> f64 {
    percentile(values, 50.0)
}

/// Nearest distances between windows of the real set that do not overlap
/// (start frames at least one window apart within a clip; any pair across
/// clips).
pub fn real_nearest_distances(real: &WindowFeatureSet) -> Vec<f64> {
    let w = real.window;
    let mut out = Vec::new();
    for (ci, a) in real.clips.iter().enumerate() {
        let mut best = vec![f64::INFINITY; real.windows_in(ci)];
        for (cj, b) in real.clips.iter().enumerate() {
            let d = window_distances(a.view(), b.view(), w);
            for ((i, j), &v) in d.indexed_iter() {
                if ci != cj || i.abs_diff(j) >= w {
                    best[i] = best[i].min(v);
                }
            }
        }
        out.extend(best.into_iter().filter(|v| v.is_finite()));
    }
    out
}

/// Default coverage threshold for `real`.
pub fn coverage_threshold(real: &WindowFeatureSet) -> Result<f64> {
    let d = real_nearest_distances(real);
    if d.is_empty() {
        return Err(Error::Metric(format!(
            "no pair of non-overlapping {}-frame real windows to calibrate the coverage threshold",
            real.window
        )));
    }
    Ok(percentile(&d, COVERAGE_PERCENTILE))
}

/// Fraction of real windows whose nearest generated window lies within `tau`.
pub fn coverage_windows(real: &WindowFeatureSet, generated: &WindowFeatureSet, tau: f64) -> Result<f64> {
    if real.is_empty() || generated.is_empty() {
        return Err(Error::Metric(format!("no {}-frame windows to compare", real.window)));
    }
    let near = nearest_distances(real, generated);
    Ok(near.iter().filter(|&&d| d <= tau).count() as f64 / near.len() as f64)
}

/// Coverage of the real clips by the generated ones. Standardization is
/// fitted on `real`; `tau` defaults to [`coverage_threshold`].
pub fn coverage(real: &[MotionTensor], generated: &[MotionTensor], window: usize, tau: Option<f64>) -> Result<f64> {
    let space = FeatureSpace::fit(real)?;
    let real_w = space.windows(real, window)?;
    let gen_w = space.windows(generated, window)?;
    let tau = match tau {
        Some(t) => t,
        None => coverage_threshold(&real_w)?,
    };
    coverage_windows(&real_w, &gen_w, tau)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DiversityKind {
    Global,
    Local,
    Inter,
    Intra,
}

/// Mean nearest-real distance of the generated windows.
pub fn nearest_real_diversity(real: &WindowFeatureSet, generated: &WindowFeatureSet) -> Result<f64> {
    if real.is_empty() || generated.is_empty() {
        return Err(Error::Metric(format!("no {}-frame windows to compare", real.window)));
    }
    let near = nearest_distances(generated, real);
    Ok(near.iter().sum::<f64>() / near.len() as f64)
}

/// Mean over pairs of distinct samples of their aligned-window distance.
pub fn inter_diversity(generated: &WindowFeatureSet) -> Result<f64> {
    let n = generated.clips.len();
    if n < 2 {
        return Err(Error::Metric("inter diversity needs at least 2 samples".into()));
    }
    let w = generated.window;
    let mut total = 0.0;
    let mut pairs = 0usize;
    for i in 0..n {
        for j in i + 1..n {
            let frames = generated.clips[i].nrows().min(generated.clips[j].nrows());
            if frames < w {
                return Err(Error::Metric(format!("sample shorter than the {w}-frame window")));
            }
            let a = generated.clips[i].slice(ndarray::s![..frames, ..]);
            let b = generated.clips[j].slice(ndarray::s![..frames, ..]);
            let d: f64 = a
                .rows()
                .into_iter()
                .zip(b.rows())
                .map(|(x, y)| x.iter().zip(y).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt())
                .collect::<Vec<_>>()
                .windows(w)
                .map(|win| win.iter().sum::<f64>() / w as f64)
                .sum::<f64>()
                / (frames - w + 1) as f64;
            total += d;
            pairs += 1;
        }
    }
    Ok(total / pairs as f64)
}

/// Mean over samples of the mean pairwise distance between the disjoint
/// windows tiling that sample. Lower means more internally uniform.
pub fn intra_diversity(generated: &WindowFeatureSet) -> Result<f64> {
    if generated.clips.len() < 2 {
        return Err(Error::Metric("intra diversity needs at least 2 samples".into()));
    }
    let w = generated.window;
    let mut per_sample = Vec::with_capacity(generated.clips.len());
    for clip in &generated.clips {
        let tiles = clip.nrows() / w;
        if tiles < 2 {
            return Err(Error::Metric(format!(
                "intra diversity needs two disjoint {w}-frame windows per sample"
            )));
        }
        let d = window_distances(clip.view(), clip.view(), w);
        let mut sum = 0.0;
        let mut count = 0usize;
        for a in 0..tiles {
            for b in a + 1..tiles {
                sum += d[[a * w, b * w]];
                count += 1;
            }
        }
        per_sample.push(sum / count as f64);
    }
    Ok(per_sample.iter().sum::<f64>() / per_sample.len() as f64)
}

/// Diversity of `generated` against `real`. `window` is the window length
/// for the chosen kind (the local kind expects a short window).
pub fn diversity(real: &[MotionTensor], generated: &[MotionTensor], kind: DiversityKind, window: usize) -> Result<f64> {
    let space = FeatureSpace::fit(real)?;
    let gen_w = space.windows(generated, window)?;
    match kind {
        DiversityKind::Global | DiversityKind::Local => nearest_real_diversity(&space.windows(real, window)?, &gen_w),
        DiversityKind::Inter => inter_diversity(&gen_w),
        DiversityKind::Intra => intra_diversity(&gen_w),
    }
}

/// Symmetric mean nearest-window distance between two clip sets, measured in
/// the feature space of `space`.
pub fn set_distance(space: &FeatureSpace, a: &[MotionTensor], b: &[MotionTensor], window: usize) -> Result<f64> {
    let aw = space.windows(a, window)?;
    let bw = space.windows(b, window)?;
    Ok(0.5 * (nearest_real_diversity(&aw, &bw)? + nearest_real_diversity(&bw, &aw)?))
}

#[cfg(test)]
mod tests;
