use approx::assert_abs_diff_eq;
use nalgebra::{DMatrix, DVector, Vector3};
use ndarray::{s, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::*;
use crate::motion::encode_motion;
use crate::synth::{synthetic_clip, synthetic_skeleton, SynthStyle};

fn clip(style: SynthStyle, frames: usize, seed: u64) -> MotionTensor {
    encode_motion(&synthetic_skeleton(), &synthetic_clip(style, frames, 30.0, seed).unwrap()).unwrap()
}

fn gaussian_rows(n: usize, dim: usize, mean: f64, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array2::from_shape_fn((n, dim), |_| { let z: f64 = StandardNormal.sample(&mut rng); mean + z })
}

#[test]
fn window_views_match_flattened_frames() {
    let m = clip(SynthStyle::Walk, 50, 1);
    let space = FeatureSpace::fit(std::slice::from_ref(&m)).unwrap();
    let set = space.windows(std::slice::from_ref(&m), 10).unwrap();
    assert_eq!(set.len(), 50 - 10 + 1);
    assert_eq!(set.width(), 18 * 6 + 3);
    let d = set.descriptors(0);
    assert_eq!(d.dim(), (41, 10 * 111));
    let frames = &set.clips[0];
    let manual: Vec<f64> = frames.slice(s![7..17, ..]).iter().copied().collect();
    assert_eq!(d.row(7).to_vec(), manual);
}

#[test]
fn fid_of_identical_sets_is_zero() {
    let m = vec![clip(SynthStyle::Walk, 90, 1), clip(SynthStyle::Dance, 90, 2)];
    let space = FeatureSpace::fit(&m).unwrap();
    let w = space.windows(&m, DEFAULT_WINDOW).unwrap();
    assert_abs_diff_eq!(fid(&w, &w).unwrap(), 0.0, epsilon = 1e-6);
    let other = space.windows(&[clip(SynthStyle::Wave, 90, 3)], DEFAULT_WINDOW).unwrap();
    assert!(fid(&w, &other).unwrap() > 1.0);
}

#[test]
fn fid_of_shifted_unit_gaussians_approaches_squared_shift() {
    for m in [0.5, 1.0, 2.0] {
        let a = gaussian_rows(10_000, 1, 0.0, 11);
        let b = gaussian_rows(10_000, 1, m, 12);
        let d = fid_descriptors(a.view(), b.view()).unwrap();
        assert!((d - m * m).abs() <= 0.1 * m * m, "m = {m}: fid {d}");
    }
}

#[test]
fn frechet_closed_form_for_diagonal_gaussians() {
    let a = Gaussian {
        mean: DVector::from_vec(vec![0.0, 1.0]),
        cov: DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 4.0])),
    };
    let b = Gaussian {
        mean: DVector::from_vec(vec![3.0, 1.0]),
        cov: DMatrix::from_diagonal(&DVector::from_vec(vec![9.0, 1.0])),
    };
    // 9 + (1 - 3)^2 + (2 - 1)^2
    assert_abs_diff_eq!(frechet_distance(&a, &b).unwrap(), 14.0, epsilon = 1e-9);
    assert_abs_diff_eq!(frechet_distance(&b, &a).unwrap(), 14.0, epsilon = 1e-9);
}

#[test]
fn coverage_of_real_by_itself_is_one() {
    let real = vec![clip(SynthStyle::Walk, 120, 1)];
    assert_eq!(coverage(&real, &real, DEFAULT_WINDOW, None).unwrap(), 1.0);
}

#[test]
fn coverage_of_a_distant_constant_pose_is_zero() {
    let real = vec![clip(SynthStyle::Walk, 120, 1)];
    let mut far = real[0].clone();
    let row = far.data.row(0).to_owned();
    for mut r in far.data.rows_mut() {
        r.assign(&row);
    }
    far.data.slice_mut(s![.., 0..6]).mapv_inplace(|v| v + 5.0);
    assert_eq!(coverage(&real, &[far], DEFAULT_WINDOW, None).unwrap(), 0.0);
}

#[test]
fn coverage_threshold_needs_non_overlapping_windows() {
    let real = vec![clip(SynthStyle::Walk, 40, 1)];
    assert!(matches!(coverage(&real, &real, 30, None), Err(Error::Metric(_))));
    assert!(coverage(&real, &real, 30, Some(0.5)).is_ok());
}

#[test]
fn percentile_interpolates() {
    let v = [4.0, 1.0, 3.0, 2.0, 5.0];
    assert_eq!(percentile(&v, 0.0), 1.0);
    assert_eq!(percentile(&v, 100.0), 5.0);
    assert_eq!(median(&v), 3.0);
    assert_abs_diff_eq!(percentile(&v, 95.0), 4.8, epsilon = 1e-12);
}

#[test]
fn diversity_cases() {
    let real = vec![clip(SynthStyle::Walk, 120, 1)];
    assert_abs_diff_eq!(diversity(&real, &real, DiversityKind::Global, 30).unwrap(), 0.0);
    assert_abs_diff_eq!(diversity(&real, &real, DiversityKind::Local, 8).unwrap(), 0.0);
    let twins = vec![real[0].clone(), real[0].clone()];
    assert_abs_diff_eq!(diversity(&real, &twins, DiversityKind::Inter, 30).unwrap(), 0.0);
    assert!(diversity(&real, &real, DiversityKind::Inter, 30).is_err());
    assert!(diversity(&real, &real, DiversityKind::Intra, 30).is_err());
    let intra = diversity(&real, &twins, DiversityKind::Intra, 30).unwrap();
    assert!(intra > 0.0);
    let mixed = vec![real[0].clone(), clip(SynthStyle::Dance, 120, 2)];
    assert!(diversity(&real, &mixed, DiversityKind::Inter, 30).unwrap() > 0.5);
    assert!(diversity(&real, &mixed, DiversityKind::Global, 30).unwrap() > 0.1);
}

fn line_positions(steps: &[f64]) -> Vec<Vec<Vector3<f64>>> {
    let mut x = 0.0;
    let mut out = vec![vec![Vector3::new(0.0, 1.0, 0.0)]];
    for s in steps {
        x += s;
        out.push(vec![Vector3::new(x, 1.0, 0.0)]);
    }
    out
}

#[test]
fn constant_velocity_is_perfectly_smooth() {
    let fps = 30.0;
    let p = line_positions(&[0.04; 20]);
    let s = smoothness_from_positions(&p, vec!["j".into()], fps, None).unwrap();
    assert_eq!(s.velocity_change[0].len(), 21 - 2);
    assert_eq!(s.acceleration_change[0].len(), 21 - 3);
    assert!(s.velocity_change[0].iter().all(|v| v.abs() < 1e-9));
    assert!(s.acceleration_change[0].iter().all(|v| v.abs() < 1e-9));
}

#[test]
fn uniform_acceleration_gives_constant_velocity_change() {
    let (fps, a) = (30.0, 2.5);
    // speed over frame t..t+1 is a * t / fps
    let steps: Vec<f64> = (0..20).map(|t| a * t as f64 / (fps * fps)).collect();
    let s = smoothness_from_positions(&line_positions(&steps), vec!["j".into()], fps, None).unwrap();
    for v in &s.velocity_change[0] {
        assert_abs_diff_eq!(*v, a / fps, epsilon = 1e-9);
    }
    assert!(s.acceleration_change[0].iter().all(|v| v.abs() < 1e-9));
}

#[test]
fn velocity_step_gives_a_single_spike() {
    let (fps, step, t0) = (30.0, 0.9, 12);
    let steps: Vec<f64> = (0..24).map(|t| if t < t0 { 0.02 } else { 0.02 + step / fps }).collect();
    let s = smoothness_from_positions(&line_positions(&steps), vec!["j".into()], fps, None).unwrap();
    for (t, v) in s.velocity_change[0].iter().enumerate() {
        let expected = if SmoothnessSeries::velocity_frame(t) == t0 { step } else { 0.0 };
        assert_abs_diff_eq!(*v, expected, epsilon = 1e-6);
    }
}

#[test]
fn smoothness_uses_default_probes_and_is_translation_invariant() {
    let sk = synthetic_skeleton();
    let m = clip(SynthStyle::Dance, 40, 5);
    let base = smoothness(&m, &sk, &[], None).unwrap();
    assert_eq!(base.joints, ["pelvis", "left_wrist", "right_wrist", "left_foot", "right_foot"]);
    let mut lifted = m.clone();
    let h = m.root_range().start;
    lifted.data.column_mut(h).mapv_inplace(|v| v + 3.0);
    let moved = smoothness(&lifted, &sk, &[], None).unwrap();
    for (a, b) in base.velocity_change.iter().flatten().zip(moved.velocity_change.iter().flatten()) {
        assert_abs_diff_eq!(a, b, epsilon = 1e-9);
    }
    assert!(matches!(
        smoothness(&m, &sk, &["tail".to_string()], None),
        Err(Error::UnknownJoint(_))
    ));
}

#[test]
fn transition_medians_split_by_window() {
    let p = line_positions(&(0..40).map(|t| if (16..24).contains(&t) && t % 2 == 0 { 0.5 } else { 0.02 }).collect::<Vec<_>>());
    let window = TransitionWindow {
        boundaries: vec![20],
        half_width: 3,
    };
    let s = smoothness_from_positions(&p, vec!["j".into()], 30.0, Some(window)).unwrap();
    let (inside, outside) = s.velocity_medians().unwrap();
    assert!(inside > 1.0);
    assert_abs_diff_eq!(outside, 0.0, epsilon = 1e-9);
}

#[test]
fn report_has_exactly_the_metric_keys() {
    let report = MetricReport {
        fid: Some(0.19),
        cov: Some(0.97),
        gdiv: Some(1.56),
        ldiv: Some(1.44),
        inter_div: None,
        intra_div: None,
    };
    let text = report.to_text();
    let keys: Vec<&str> = text.lines().map(|l| l.split('=').next().unwrap()).collect();
    assert_eq!(keys, REPORT_KEYS);
    assert!(text.contains("inter_div=unavailable\n"));
    assert_eq!(MetricReport::parse(&text).unwrap(), report);
}

#[test]
fn empty_report_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("eval");
    assert!(emit_report(&out, &MetricReport::default(), None).is_err());
    assert!(!out.exists());
}

#[test]
fn plots_span_the_series_and_mark_the_window() {
    let dir = tempfile::tempdir().unwrap();
    let frames = 30;
    let p = line_positions(&vec![0.02; frames - 1]);
    let window = TransitionWindow {
        boundaries: vec![15],
        half_width: 5,
    };
    let s = smoothness_from_positions(&p, vec!["j".into()], 30.0, Some(window)).unwrap();
    let files = emit_report(dir.path(), &MetricReport { cov: Some(1.0), ..Default::default() }, Some(&s)).unwrap();
    assert_eq!(files.plots.len(), 2);
    let svg = std::fs::read_to_string(&files.plots[0]).unwrap();
    let polyline = svg.lines().find(|l| l.starts_with("<polyline")).unwrap();
    let points = polyline.split("points=\"").nth(1).unwrap().trim_end_matches("\"/>");
    assert_eq!(points.split(' ').count(), frames - 2);
    assert_eq!(svg.matches("stroke-dasharray").count(), 2);
}
