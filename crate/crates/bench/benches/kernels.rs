use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use blendanim::blend::{blend, BlendSchedule};
use blendanim::metrics::{coverage, fid, FeatureSpace};
use blendanim::motion::{encode_motion, MotionTensor};
use blendanim::motion::STAGES;
use blendanim::synth::{synthetic_clip, synthetic_skeleton, SynthStyle};
use blendanim::train::{TrainConfig, Trainer, TrainingMotion};

const FRAMES: usize = 120;

fn motions() -> Vec<TrainingMotion> {
    let skeleton = synthetic_skeleton();
    [SynthStyle::Walk, SynthStyle::Dance]
        .into_iter()
        .map(|style| TrainingMotion {
            name: style.name().to_string(),
            tensor: encode_motion(&skeleton, &synthetic_clip(style, FRAMES, 30.0, 7).unwrap()).unwrap(),
            initial_root_xz: [0.0, 0.0],
        })
        .collect()
}

fn config(hidden_width: usize) -> TrainConfig {
    let mut c = TrainConfig {
        iterations_per_level: 1,
        ..TrainConfig::default()
    };
    c.model.hidden_width = hidden_width;
    c
}

fn encoding(c: &mut Criterion) {
    let skeleton = synthetic_skeleton();
    let raw = synthetic_clip(SynthStyle::Walk, FRAMES, 30.0, 1).unwrap();
    c.bench_function("encode_motion/120f", |b| b.iter(|| encode_motion(&skeleton, &raw).unwrap()));
}

fn training(c: &mut Criterion) {
    let mut group = c.benchmark_group("train_iteration");
    group.sample_size(10);
    for width in [48, 96] {
        // one iteration at the finest stage, after the coarser stages ran once
        group.bench_function(format!("final_stage/width{width}"), |b| {
            b.iter_batched(
                || {
                    let mut t = Trainer::new(config(width), synthetic_skeleton(), motions()).unwrap();
                    for s in 0..STAGES - 1 {
                        t.train_stage(s, |_| Ok(())).unwrap();
                    }
                    t
                },
                |mut t| t.train_stage(STAGES - 1, |_| Ok(())).unwrap(),
                BatchSize::LargeInput,
            )
        });
    }
    group.finish();
}

fn generation(c: &mut Criterion) {
    let mut trainer = Trainer::new(config(48), synthetic_skeleton(), motions()).unwrap();
    trainer.train_all(|_| Ok(())).unwrap();
    let model = trainer.into_model();
    let schedule = BlendSchedule::parse("walk=60\ndance=60").unwrap();
    c.bench_function("blend/120f", |b| b.iter(|| blend(&model, &schedule, 0).unwrap()));
}

fn metrics(c: &mut Criterion) {
    let real: Vec<MotionTensor> = motions().into_iter().map(|m| m.tensor).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let generated: Vec<MotionTensor> = (0..10)
        .map(|_| {
            let noise = Array2::from_shape_fn(real[0].data.raw_dim(), |_| rng.random_range(-0.05..0.05));
            real[0].with_data(&real[0].data + &noise).unwrap()
        })
        .collect();
    let space = FeatureSpace::fit(&real).unwrap();
    let real_w = space.windows(&real, 30).unwrap();
    let gen_w = space.windows(&generated, 30).unwrap();
    let mut group = c.benchmark_group("metrics");
    group.sample_size(20);
    group.bench_function("fid/10x120f", |b| b.iter(|| fid(&real_w, &gen_w).unwrap()));
    group.bench_function("coverage/10x120f", |b| b.iter(|| coverage(&real, &generated, 30, None).unwrap()));
    group.finish();
}

criterion_group!(benches, encoding, training, generation, metrics);
criterion_main!(benches);
