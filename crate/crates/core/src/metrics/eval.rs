use super::{
    coverage_threshold, coverage_windows, fid, intra_diversity, inter_diversity, nearest_real_diversity, smoothness,
    FeatureSpace, MetricReport, SmoothnessSeries, TransitionWindow, DEFAULT_LOCAL_WINDOW, DEFAULT_SAMPLES,
    DEFAULT_WINDOW,
};
use crate::blend::{blend, BlendSchedule};
use crate::error::{Error, Result};
use crate::motion::MotionTensor;
use crate::pyramid::PyramidModel;

#[derive(Debug, Clone, PartialEq)]
pub struct EvalOptions {
    pub samples: usize,
    pub window: usize,
    pub local_window: usize,
    /// Sample `k` is generated with seed `seed + k`.
    pub seed: u64,
    /// Half width in frames of the window plotted around each boundary.
    pub transition_half_width: usize,
    /// Probe joint names; empty selects the default five.
    pub probes: Vec<String>,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            samples: DEFAULT_SAMPLES,
            window: DEFAULT_WINDOW,
            local_window: DEFAULT_LOCAL_WINDOW,
            seed: 0,
            transition_half_width: 15,
            probes: Vec::new(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Evaluation {
    pub report: MetricReport,
    /// Smoothness of the first sample.
    pub smoothness: SmoothnessSeries,
    pub samples: Vec<MotionTensor>,
}

/// Generate `options.samples` random blends following `schedule` and score
/// them against the real clips.
pub fn evaluate(
    model: &PyramidModel,
    real: &[MotionTensor],
    schedule: &BlendSchedule,
    options: &EvalOptions,
) -> Result<Evaluation> {
    if options.samples == 0 {
        return Err(Error::Metric("evaluation needs at least one sample".into()));
    }
    if options.local_window >= options.window {
        return Err(Error::Metric(format!(
            "local window ({}) must be shorter than the window ({})",
            options.local_window, options.window
        )));
    }
    let samples = (0..options.samples as u64)
        .map(|k| blend(model, schedule, options.seed.wrapping_add(k)).map(|b| b.tensor))
        .collect::<Result<Vec<_>>>()?;

    let space = FeatureSpace::fit(real)?;
    let real_w = space.windows(real, options.window)?;
    let gen_w = space.windows(&samples, options.window)?;
    let real_local = space.windows(real, options.local_window)?;
    let gen_local = space.windows(&samples, options.local_window)?;
    let multi = samples.len() >= 2;
    let report = MetricReport {
        fid: Some(fid(&real_w, &gen_w)?),
        cov: Some(coverage_windows(&real_w, &gen_w, coverage_threshold(&real_w)?)?),
        gdiv: Some(nearest_real_diversity(&real_w, &gen_w)?),
        ldiv: Some(nearest_real_diversity(&real_local, &gen_local)?),
        inter_div: if multi { Some(inter_diversity(&gen_w)?) } else { None },
        intra_div: if multi { Some(intra_diversity(&gen_w)?) } else { None },
    };
    let transition = TransitionWindow {
        boundaries: schedule.boundaries(),
        half_width: options.transition_half_width,
    };
    let smoothness = smoothness(
        &samples[0],
        &model.skeleton,
        &options.probes,
        (!transition.boundaries.is_empty()).then_some(transition),
    )?;
    Ok(Evaluation {
        report,
        smoothness,
        samples,
    })
}
