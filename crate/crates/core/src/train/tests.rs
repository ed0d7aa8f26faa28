use super::*;
use crate::checkpoint::stage_bytes;
use crate::motion::encode_motion;
use crate::nn::ModulationKind;
use crate::synth::{synthetic_clip, synthetic_skeleton, SynthStyle};
use approx::assert_relative_eq;

fn small_config(iterations: usize) -> TrainConfig {
    TrainConfig {
        iterations_per_level: iterations,
        seed: 3,
        model: ModelConfig {
            hidden_width: 19,
            modulation_width: 19,
            kernel: 3,
            neighbor_distance: 1,
            modulation: ModulationKind::Spade,
            conditioning_levels: vec![1],
        },
        ..TrainConfig::default()
    }
}

fn motions(frames: usize) -> (Skeleton, Vec<TrainingMotion>) {
    let sk = synthetic_skeleton();
    let list = [SynthStyle::Walk, SynthStyle::Dance]
        .into_iter()
        .map(|style| {
            let raw = synthetic_clip(style, frames, 30.0, 7).unwrap();
            let root = raw.root_position(&sk, 0);
            TrainingMotion {
                name: style.name().to_string(),
                tensor: encode_motion(&sk, &raw).unwrap(),
                initial_root_xz: [root.x, root.z],
            }
        })
        .collect();
    (sk, list)
}

#[test]
fn iteration_split_and_hash() {
    let mut c = small_config(5);
    assert_eq!(c.stage_iterations(), [3, 2, 3, 2, 3, 2, 5]);
    c.iterations_per_level = 4;
    assert_eq!(c.stage_iterations().iter().sum::<usize>(), 16);
    let h = c.hash();
    assert_eq!(h.len(), 64);
    c.seed += 1;
    assert_ne!(c.hash(), h);
}

#[test]
fn amplitudes_and_cropping() {
    let (sk, mut list) = motions(48);
    let raw = synthetic_clip(SynthStyle::Dance, 52, 30.0, 7).unwrap();
    list[1].tensor = encode_motion(&sk, &raw).unwrap();
    let trainer = Trainer::new(small_config(1), sk, list).unwrap();
    assert_eq!(trainer.model.frames(), 48);
    let a = trainer.model.amplitudes;
    assert_eq!(a[0], 1.0);
    assert_eq!(a[1], 0.0);
    assert_eq!(a[3], 0.0);
    assert_eq!(a[5], 0.0);
    assert!(a[2] > 0.0 && a[4] > 0.0 && a[6] > 0.0);
}

#[test]
fn rejects_inconsistent_batches() {
    let (sk, mut list) = motions(40);
    list[1].name = list[0].name.clone();
    assert!(Trainer::new(small_config(1), sk.clone(), list).is_err());
    let (_, mut list) = motions(40);
    list[1].tensor.fps = 25.0;
    assert!(Trainer::new(small_config(1), sk.clone(), list).is_err());
    let (_, list) = motions(40);
    let mut other = sk.clone();
    other.foot_joints.pop();
    assert!(Trainer::new(small_config(1), other, list).is_err());
    assert!(Trainer::new(small_config(0), sk, motions(40).1).is_err());
}

#[test]
fn loss_composition_and_zero_penalty_weight() {
    let (sk, list) = motions(40);
    let mut trainer = Trainer::new(small_config(1), sk, list).unwrap();
    for stage in 0..STAGES - 1 {
        trainer.train_stage(stage, |_| Ok(())).unwrap();
    }
    let stage = STAGES - 1;
    let rec = trainer.reconstruction_inputs(stage).unwrap();
    let batch = trainer.sample_batch(stage, &rec).unwrap();
    let w = LossWeights {
        adversarial: 0.7,
        reconstruction: 3.0,
        contact: 2.5,
        gradient_penalty: 0.0,
    };
    let g = Graph::new();
    let mut b = Binder::new(&g);
    let obj = generator_objective(&trainer.model, &batch, &w, ContactSigmoid::default(), &g, &mut b);
    let contact = obj.contact.expect("final stage has a contact term").item();
    let expected = 0.7 * obj.adversarial.item() + 3.0 * obj.reconstruction.item() + 2.5 * contact;
    assert_relative_eq!(obj.total.item(), expected, epsilon = 1e-6);

    let fakes = generate_fakes(&trainer.model, &batch);
    let c = critic_objective(&trainer.model, &batch, &fakes, &w, &g, &mut b);
    assert_relative_eq!(c.total.item(), -c.wasserstein.item(), epsilon = 1e-12);
    assert!(c.penalty.item() > 0.0);

    // earlier stages carry no contact term
    let batch0 = trainer.sample_batch(0, &[None, None]).unwrap();
    let obj0 = generator_objective(&trainer.model, &batch0, &w, ContactSigmoid::default(), &g, &mut b);
    assert!(obj0.contact.is_none());
}

#[test]
fn untrained_critic_estimate_is_small() {
    let (sk, list) = motions(40);
    let mut trainer = Trainer::new(small_config(1), sk, list).unwrap();
    let batch = trainer.sample_batch(0, &[None, None]).unwrap();
    let fakes = generate_fakes(&trainer.model, &batch);
    let g = Graph::new();
    let mut b = Binder::new(&g);
    let c = critic_objective(&trainer.model, &batch, &fakes, &LossWeights::default(), &g, &mut b);
    assert!(c.wasserstein.item().abs() < 1.0, "{}", c.wasserstein.item());
}

#[test]
fn generator_gradient_matches_finite_differences() {
    let (sk, list) = motions(40);
    let mut trainer = Trainer::new(small_config(1), sk, list).unwrap();
    trainer.train_stage(0, |_| Ok(())).unwrap();
    trainer.train_stage(1, |_| Ok(())).unwrap();
    let stage = 2;
    let rec = trainer.reconstruction_inputs(stage).unwrap();
    let batch = trainer.sample_batch(stage, &rec).unwrap();
    let weights = LossWeights::default();
    let sigmoid = ContactSigmoid::default();
    let loss = |model: &PyramidModel| {
        let g = Graph::new();
        let mut b = Binder::new(&g);
        generator_objective(model, &batch, &weights, sigmoid, &g, &mut b).total.item()
    };
    let g = Graph::new();
    let mut b = Binder::new(&g);
    let obj = generator_objective(&trainer.model, &batch, &weights, sigmoid, &g, &mut b);
    let grads = b.gradients(obj.total);
    let analytic: Vec<Tensor> = trainer.model.stages[stage]
        .generator
        .params()
        .into_iter()
        .map(|p| grads.get(p).unwrap().clone())
        .collect();
    let mut model = trainer.model.clone();
    let h = 1e-6;
    let mut checked = 0;
    let picks: Vec<(usize, usize, usize)> = (0..analytic.len())
        .filter_map(|pi| {
            let a = &analytic[pi];
            let start = (37 * pi) % a.len();
            (0..a.len())
                .map(|k| (start + k) % a.len())
                .find(|&i| a.iter().nth(i).is_some_and(|v| v.abs() > 1e-6))
                .map(|i| (pi, i / a.ncols(), i % a.ncols()))
        })
        .collect();
    for (pi, r, c) in picks {
        let a = analytic[pi][[r, c]];
        let orig = model.stages[stage].generator.params()[pi][[r, c]];
        model.stages[stage].generator.params_mut()[pi][[r, c]] = orig + h;
        let up = loss(&model);
        model.stages[stage].generator.params_mut()[pi][[r, c]] = orig - h;
        let down = loss(&model);
        model.stages[stage].generator.params_mut()[pi][[r, c]] = orig;
        let numeric = (up - down) / (2.0 * h);
        let rel = (numeric - a).abs() / a.abs().max(numeric.abs());
        assert!(rel < 1e-3, "param {pi} entry ({r},{c}): analytic {a}, numeric {numeric}");
        checked += 1;
    }
    assert!(checked >= 8, "only {checked} weights checked");
}

#[test]
fn stage_training_isolates_other_stages_and_is_deterministic() {
    let (sk, list) = motions(40);
    let run = || {
        let mut trainer = Trainer::new(small_config(2), sk.clone(), list.clone()).unwrap();
        let before: Vec<Vec<u8>> = (0..STAGES).map(|s| stage_bytes(&trainer.model, s)).collect();
        let mut rows = Vec::new();
        trainer
            .train_stage(0, |r| {
                rows.push(r.clone());
                Ok(())
            })
            .unwrap();
        let after_first: Vec<Vec<u8>> = (0..STAGES).map(|s| stage_bytes(&trainer.model, s)).collect();
        assert_ne!(before[0], after_first[0]);
        assert_eq!(before[1..], after_first[1..]);
        trainer.train_stage(1, |r| {
            rows.push(r.clone());
            Ok(())
        })
        .unwrap();
        assert_eq!(stage_bytes(&trainer.model, 0), after_first[0]);
        assert!(trainer.train_stage(3, |_| Ok(())).is_err());
        (crate::checkpoint::checkpoint_bytes(&trainer.model), rows)
    };
    let (a, rows) = run();
    let (b, rows_b) = run();
    assert_eq!(a, b);
    assert_eq!(rows, rows_b);
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[1].stage, 2);
    assert_eq!(rows[1].level, 1);
}

#[test]
fn divergence_aborts_with_diagnostics() {
    let (sk, list) = motions(40);
    let mut config = small_config(3);
    config.divergence_limit = 1e-9;
    let mut trainer = Trainer::new(config, sk, list).unwrap();
    match trainer.train_stage(0, |_| Ok(())) {
        Err(Error::Diverged { stage, iteration, detail }) => {
            assert_eq!((stage, iteration), (1, 1));
            assert!(detail.contains("generator_loss"));
        }
        other => panic!("expected divergence, got {other:?}"),
    }
}

#[test]
fn telemetry_csv_round_trip() {
    let row = TelemetryRow {
        iteration: 3,
        level: 2,
        stage: 4,
        critic_loss: -0.5,
        wasserstein: 0.25,
        gradient_penalty: 0.125,
        adversarial: 1.5,
        reconstruction: 0.3,
        contact: 0.0,
        generator_loss: 16.5,
        reconstruction_full: 0.4,
    };
    let mut buf = Vec::new();
    {
        let mut w = TelemetryWriter::new(&mut buf);
        w.write(&row).unwrap();
        w.write(&row).unwrap();
    }
    let text = String::from_utf8(buf.clone()).unwrap();
    assert!(text.starts_with("iteration,level,stage,critic_loss"));
    assert_eq!(read_telemetry(buf.as_slice()).unwrap(), vec![row.clone(), row]);
}

#[test]
fn toy_critic_separates_real_from_noise() {
    // Two joints, sixteen frames, stage one only.
    use crate::bvh::Joint;
    use nalgebra::Vector3;
    let joints = vec![
        Joint {
            name: "root".into(),
            parent: None,
            offset: Vector3::zeros(),
            channels: vec![],
            end_site: None,
        },
        Joint {
            name: "foot".into(),
            parent: Some(0),
            offset: Vector3::new(0.0, -0.5, 0.0),
            channels: vec![],
            end_site: None,
        },
    ];
    let sk = Skeleton::new(joints).unwrap().with_foot_joints(&["foot"]).unwrap();
    let dim = crate::motion::feature_dim(2, 1);
    let clip = |phase: f64| {
        let data = ndarray::Array2::from_shape_fn((16, dim), |(t, c)| {
            (0.4 * t as f64 + phase + c as f64 * 0.7).sin()
        });
        MotionTensor::new(data, 2, 1, 30.0).unwrap()
    };
    let list = vec![
        TrainingMotion {
            name: "a".into(),
            tensor: clip(0.0),
            initial_root_xz: [0.0, 0.0],
        },
        TrainingMotion {
            name: "b".into(),
            tensor: clip(1.3),
            initial_root_xz: [0.0, 0.0],
        },
    ];
    let mut config = small_config(120);
    config.optimizer.learning_rate = 1e-3;
    let mut trainer = Trainer::new(config, sk, list).unwrap();
    let mut rows = Vec::new();
    trainer
        .train_stage(0, |r| {
            rows.push(r.clone());
            Ok(())
        })
        .unwrap();
    // Compare critic scores on real clips against pure noise inputs.
    let batch = trainer.sample_batch(0, &[None, None]).unwrap();
    let critic = &trainer.model.stages[0].critic;
    let real: f64 = batch.real.iter().map(|r| critic.scores(r).mean().unwrap()).sum::<f64>() / 2.0;
    let noise: f64 = batch.noise.iter().map(|n| critic.scores(n).mean().unwrap()).sum::<f64>() / 2.0;
    assert!(real - noise > 0.0, "margin {}", real - noise);
}
