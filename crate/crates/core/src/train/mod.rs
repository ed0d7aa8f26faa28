//! Progressive adversarial training of the pyramid, one stage at a time.

mod adam;
mod losses;

pub use adam::{Adam, AdamConfig};
pub use losses::{contact_loss, foot_positions_graph, gradient_penalty, reconstruction_loss, ContactSigmoid};

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::autograd::{Binder, Graph, Tensor, Var};
use crate::bvh::Skeleton;
use crate::error::{Error, Result};
use crate::motion::{
    resample_channels, ChannelStats, LevelSpec, MotionTensor, Q, ROTATION_STD_FLOOR, STAGES, STAGE_LEVELS,
};
use crate::nn::SkeletonIdMap;
use crate::pyramid::{ModelConfig, NoiseSource, PyramidModel};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossWeights {
    pub adversarial: f64,
    pub reconstruction: f64,
    /// Applied at the final stage only.
    pub contact: f64,
    pub gradient_penalty: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            adversarial: 1.0,
            reconstruction: 50.0,
            contact: 5.0,
            gradient_penalty: 1.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [self.adversarial, self.reconstruction, self.contact, self.gradient_penalty];
        if all.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::Config(format!("loss weights must be finite and non-negative: {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Optimizer steps per temporal level, shared by the level's stages.
    pub iterations_per_level: usize,
    pub critic_steps: usize,
    pub seed: u64,
    pub optimizer: AdamConfig,
    pub weights: LossWeights,
    pub contact_sigmoid: ContactSigmoid,
    /// Any loss magnitude above this aborts training.
    pub divergence_limit: f64,
    pub model: ModelConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            iterations_per_level: 15_000,
            critic_steps: 1,
            seed: 0,
            optimizer: AdamConfig::default(),
            weights: LossWeights::default(),
            contact_sigmoid: ContactSigmoid::default(),
            divergence_limit: 1e6,
            model: ModelConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations_per_level == 0 {
            return Err(Error::Config("iterations_per_level must be at least 1".into()));
        }
        if self.critic_steps == 0 {
            return Err(Error::Config("critic_steps must be at least 1".into()));
        }
        self.weights.validate()?;
        self.model.validate()
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(&json).iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Iterations of each stage: a level's budget is split across its
    /// stages, earlier stages taking the remainder.
    pub fn stage_iterations(&self) -> [usize; STAGES] {
        let mut out = [0; STAGES];
        for (s, slot) in out.iter_mut().enumerate() {
            let stages = LevelSpec::stages_of(STAGE_LEVELS[s]);
            let pos = stages.iter().position(|&x| x == s).expect("stage in its level");
            let n = stages.len();
            *slot = self.iterations_per_level / n + usize::from(pos < self.iterations_per_level % n);
        }
        out
    }
}

/// One training clip with its name and starting root position.
#[derive(Debug, Clone)]
pub struct TrainingMotion {
    pub name: String,
    pub tensor: MotionTensor,
    pub initial_root_xz: [f64; 2],
}

/// One telemetry line per optimizer iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TelemetryRow {
    pub iteration: usize,
    pub level: usize,
    pub stage: usize,
    pub critic_loss: f64,
    pub wasserstein: f64,
    pub gradient_penalty: f64,
    pub adversarial: f64,
    pub reconstruction: f64,
    pub contact: f64,
    pub generator_loss: f64,
    /// Reconstruction of the current stage, upsampled to full length, against
    /// the full-resolution real motions (mean absolute error).
    pub reconstruction_full: f64,
}

/// CSV sink for telemetry rows.
pub struct TelemetryWriter<W: Write> {
    inner: csv::Writer<W>,
}

impl<W: Write> TelemetryWriter<W> {
    pub fn new(w: W) -> Self {
        TelemetryWriter {
            inner: csv::Writer::from_writer(w),
        }
    }

    pub fn write(&mut self, row: &TelemetryRow) -> Result<()> {
        self.inner
            .serialize(row)
            .and_then(|_| self.inner.flush().map_err(csv::Error::from))
            .map_err(|e| Error::Config(format!("writing telemetry: {e}")))
    }
}

pub fn read_telemetry<R: std::io::Read>(r: R) -> Result<Vec<TelemetryRow>> {
    csv::Reader::from_reader(r)
        .deserialize()
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::Config(format!("reading telemetry: {e}")))
}

/// Everything one optimizer iteration of a stage consumes, in normalized
/// channel-major space.
#[derive(Debug, Clone)]
pub struct StageBatch {
    pub stage: usize,
    pub real: Vec<Tensor>,
    /// Previous-stage output from random noise, already at this stage's length.
    pub prev: Vec<Option<Tensor>>,
    pub noise: Vec<Tensor>,
    /// Previous-stage reconstruction, at this stage's length.
    pub prev_reconstruction: Vec<Option<Tensor>>,
    pub reconstruction_noise: Vec<Tensor>,
    pub ids: Vec<Option<SkeletonIdMap>>,
    pub alphas: Vec<f64>,
}

impl StageBatch {
    pub fn len(&self) -> usize {
        self.real.len()
    }

    pub fn is_empty(&self) -> bool {
        self.real.is_empty()
    }
}

pub struct CriticObjective<'g> {
    /// Mean real score minus mean fake score.
    pub wasserstein: Var<'g>,
    pub penalty: Var<'g>,
    pub total: Var<'g>,
}

pub struct GeneratorObjective<'g> {
    pub adversarial: Var<'g>,
    pub reconstruction: Var<'g>,
    pub contact: Option<Var<'g>>,
    pub total: Var<'g>,
    /// Reconstruction outputs, one per batch element.
    pub reconstructions: Vec<Var<'g>>,
}

fn mean_of<'g>(vars: Vec<Var<'g>>) -> Var<'g> {
    let n = vars.len() as f64;
    vars.into_iter().reduce(|a, b| a + b).expect("non-empty batch").scale(1.0 / n)
}

/// Random-noise generator outputs for a batch, values only.
pub fn generate_fakes(model: &PyramidModel, batch: &StageBatch) -> Vec<Tensor> {
    let g = Graph::new();
    let mut b = Binder::new(&g);
    let generator = &model.stages[batch.stage].generator;
    (0..batch.len())
        .map(|i| {
            let prev = batch.prev[i].as_ref().map(|p| g.leaf(p.clone()));
            let noise = g.leaf(batch.noise[i].clone());
            generator
                .forward(&mut b, prev, noise, batch.ids[i].as_ref())
                .value()
                .as_ref()
                .clone()
        })
        .collect()
}

/// Critic loss `E[D(fake)] - E[D(real)] + w_gp * GP`; critic parameters are
/// bound through `binder`.
pub fn critic_objective<'g>(
    model: &PyramidModel,
    batch: &StageBatch,
    fakes: &[Tensor],
    weights: &LossWeights,
    graph: &'g Graph,
    binder: &mut Binder<'g>,
) -> CriticObjective<'g> {
    let critic = &model.stages[batch.stage].critic;
    let real_scores: Vec<Var<'g>> = batch
        .real
        .iter()
        .map(|r| critic.forward(binder, graph.leaf(r.clone())).mean())
        .collect();
    let fake_scores: Vec<Var<'g>> = fakes
        .iter()
        .map(|f| critic.forward(binder, graph.leaf(f.clone())).mean())
        .collect();
    let wasserstein = mean_of(real_scores) - mean_of(fake_scores);
    let penalty = gradient_penalty(graph, |x| critic.forward(binder, x), &batch.real, fakes, &batch.alphas);
    let total = -wasserstein + penalty.scale(weights.gradient_penalty);
    CriticObjective {
        wasserstein,
        penalty,
        total,
    }
}

/// Generator loss `w_adv * L_adv + w_rec * L_rec (+ w_con * L_con at the last
/// stage)`. Generator parameters are bound through `binder`; the critic is
/// bound separately so its gradients are never requested.
#[allow(clippy::too_many_arguments)]
pub fn generator_objective<'g>(
    model: &PyramidModel,
    batch: &StageBatch,
    weights: &LossWeights,
    sigmoid: ContactSigmoid,
    graph: &'g Graph,
    binder: &mut Binder<'g>,
) -> GeneratorObjective<'g> {
    let stage = batch.stage;
    let generator = &model.stages[stage].generator;
    let critic = &model.stages[stage].critic;
    let mut critic_binder = Binder::new(graph);
    let mut fake_scores = Vec::new();
    let mut contacts = Vec::new();
    let mut recs = Vec::new();
    let mut rec_losses = Vec::new();
    let final_stage = stage == STAGES - 1 && weights.contact > 0.0 && model.contacts > 0;
    for i in 0..batch.len() {
        let prev = batch.prev[i].as_ref().map(|p| graph.leaf(p.clone()));
        let noise = graph.leaf(batch.noise[i].clone());
        let fake = generator.forward(binder, prev, noise, batch.ids[i].as_ref());
        fake_scores.push(critic.forward(&mut critic_binder, fake).mean());
        if final_stage {
            contacts.push(contact_loss(graph, fake, &model.stats, &model.skeleton, model.fps, sigmoid));
        }
        let prev_rec = batch.prev_reconstruction[i].as_ref().map(|p| graph.leaf(p.clone()));
        let rec_noise = graph.leaf(batch.reconstruction_noise[i].clone());
        let rec = generator.forward(binder, prev_rec, rec_noise, batch.ids[i].as_ref());
        rec_losses.push(reconstruction_loss(rec, graph.leaf(batch.real[i].clone())));
        recs.push(rec);
    }
    let adversarial = -mean_of(fake_scores);
    let reconstruction = mean_of(rec_losses);
    let contact = final_stage.then(|| mean_of(contacts));
    let mut total = adversarial.scale(weights.adversarial) + reconstruction.scale(weights.reconstruction);
    if let Some(c) = contact {
        total = total + c.scale(weights.contact);
    }
    GeneratorObjective {
        adversarial,
        reconstruction,
        contact,
        total,
        reconstructions: recs,
    }
}

/// Owns the model during training.
pub struct Trainer {
    pub config: TrainConfig,
    pub model: PyramidModel,
    /// Normalized channel-major real motions at each stage's length.
    reals: Vec<Vec<Tensor>>,
    full_reals: Vec<Tensor>,
    rng: ChaCha8Rng,
    iteration: usize,
}

fn check_finite(stage: usize, iteration: usize, limit: f64, values: &[(&str, f64)]) -> Result<()> {
    if let Some((name, v)) = values.iter().find(|(_, v)| !v.is_finite() || v.abs() > limit) {
        let detail = values
            .iter()
            .map(|(n, v)| format!("{n}={v:.6e}"))
            .collect::<Vec<_>>()
            .join(", ");
        return Err(Error::Diverged {
            stage: stage + 1,
            iteration,
            detail: format!("{name} = {v} exceeds the divergence limit {limit:e} ({detail})"),
        });
    }
    Ok(())
}

impl Trainer {
    /// Validates the batch, fits normalization statistics, builds the model
    /// and computes per-stage noise amplitudes. Clips of different lengths are
    /// cropped to the shortest.
    pub fn new(config: TrainConfig, skeleton: Skeleton, motions: Vec<TrainingMotion>) -> Result<Self> {
        config.validate()?;
        if motions.is_empty() {
            return Err(Error::Config("training needs at least one motion".into()));
        }
        let joints = skeleton.joint_count();
        let contacts = skeleton.foot_joints.len();
        let fps = motions[0].tensor.fps;
        let mut names: Vec<&str> = Vec::new();
        for m in &motions {
            if m.tensor.joints != joints || m.tensor.contacts != contacts {
                return Err(Error::Skeleton(format!(
                    "motion `{}` encodes {} joints and {} contacts, skeleton has {joints} and {contacts}",
                    m.name, m.tensor.joints, m.tensor.contacts
                )));
            }
            if (m.tensor.fps - fps).abs() > 1e-6 {
                return Err(Error::Motion(format!(
                    "motion `{}` runs at {} fps, expected {fps}",
                    m.name, m.tensor.fps
                )));
            }
            if names.contains(&m.name.as_str()) {
                return Err(Error::Config(format!("duplicate motion identity `{}`", m.name)));
            }
            names.push(&m.name);
        }
        let frames = motions.iter().map(|m| m.tensor.frames()).min().expect("non-empty");
        let cropped: Vec<ndarray::Array2<f64>> = motions
            .iter()
            .map(|m| m.tensor.data.slice(ndarray::s![..frames, ..]).to_owned())
            .collect();
        let stats = ChannelStats::fit(cropped.iter().map(|d| d.view()))?
            .with_std_floor(0..skeleton.joint_count() * Q, ROTATION_STD_FLOOR);
        let levels = LevelSpec::for_length(frames)?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut model = PyramidModel::new(
            skeleton,
            motions.iter().map(|m| m.name.clone()).collect(),
            levels,
            stats,
            fps,
            config.model.clone(),
            &mut rng,
        )?;
        model.initial_root_xz = motions.iter().map(|m| m.initial_root_xz).collect();
        model.config_hash = config.hash();
        let full_reals: Vec<Tensor> = cropped.iter().map(|d| model.stats.normalize(d).t().to_owned()).collect();
        let reals: Vec<Vec<Tensor>> = (0..STAGES)
            .map(|s| {
                let len = model.levels.stage_length(s);
                full_reals.iter().map(|r| resample_channels(r, len)).collect()
            })
            .collect();
        for s in 1..STAGES {
            model.amplitudes[s] = if STAGE_LEVELS[s] == STAGE_LEVELS[s - 1] {
                0.0
            } else {
                let mut sum = 0.0;
                let mut count = 0usize;
                for (cur, prev) in reals[s].iter().zip(&reals[s - 1]) {
                    let diff = cur - &model.upsample_into(s, prev);
                    sum += diff.iter().map(|v| v * v).sum::<f64>();
                    count += diff.len();
                }
                (sum / count as f64).sqrt()
            };
        }
        Ok(Trainer {
            config,
            model,
            reals,
            full_reals,
            rng,
            iteration: 0,
        })
    }

    pub fn batch_size(&self) -> usize {
        self.full_reals.len()
    }

    fn identity_map(&self, b: usize) -> SkeletonIdMap {
        SkeletonIdMap::constant(b, self.model.frames(), self.batch_size()).expect("valid identity")
    }

    /// Reconstruction-mode outputs of stages before `stage`, upsampled.
    pub fn reconstruction_inputs(&self, stage: usize) -> Result<Vec<Option<Tensor>>> {
        (0..self.batch_size())
            .map(|b| {
                if stage == 0 {
                    return Ok(None);
                }
                let outs = self
                    .model
                    .generate_stages(stage, &self.identity_map(b), &mut NoiseSource::Reconstruction(b))?;
                Ok(Some(self.model.upsample_into(stage, outs.last().expect("stage > 0"))))
            })
            .collect()
    }

    /// Draws fresh noise and frozen-stage inputs for one iteration.
    pub fn sample_batch(&mut self, stage: usize, prev_reconstruction: &[Option<Tensor>]) -> Result<StageBatch> {
        let batch = self.batch_size();
        let mut prev = Vec::with_capacity(batch);
        let mut noise = Vec::with_capacity(batch);
        let mut ids = Vec::with_capacity(batch);
        let mut reconstruction_noise = Vec::with_capacity(batch);
        for b in 0..batch {
            let full_ids = self.identity_map(b);
            let mut source = NoiseSource::Random(&mut self.rng);
            let p = if stage == 0 {
                None
            } else {
                let outs = self.model.generate_stages(stage, &full_ids, &mut source)?;
                Some(self.model.upsample_into(stage, outs.last().expect("stage > 0")))
            };
            prev.push(p);
            noise.push(self.model.stage_noise(stage, &mut source));
            ids.push(self.model.stage_ids(stage, &full_ids));
            reconstruction_noise.push(self.model.stage_noise(stage, &mut NoiseSource::Reconstruction(b)));
        }
        let alphas = (0..batch).map(|_| self.rng.random::<f64>()).collect();
        Ok(StageBatch {
            stage,
            real: self.reals[stage].clone(),
            prev,
            noise,
            prev_reconstruction: prev_reconstruction.to_vec(),
            reconstruction_noise,
            ids,
            alphas,
        })
    }

    /// Trains one stage, leaving every other stage untouched.
    pub fn train_stage<F>(&mut self, stage: usize, mut sink: F) -> Result<()>
    where
        F: FnMut(&TelemetryRow) -> Result<()>,
    {
        if stage != self.model.trained_stages {
            return Err(Error::Config(format!(
                "stage {} cannot be trained after {} trained stages",
                stage + 1,
                self.model.trained_stages
            )));
        }
        let iterations = self.config.stage_iterations()[stage];
        let prev_reconstruction = self.reconstruction_inputs(stage)?;
        let mut critic_opt = Adam::new(self.config.optimizer);
        let mut generator_opt = Adam::new(self.config.optimizer);
        let weights = self.config.weights;
        let limit = self.config.divergence_limit;
        let frames = self.model.frames();
        for _ in 0..iterations {
            self.iteration += 1;
            let batch = self.sample_batch(stage, &prev_reconstruction)?;
            let fakes = generate_fakes(&self.model, &batch);

            let mut critic_values = (0.0, 0.0, 0.0);
            for _ in 0..self.config.critic_steps {
                let g = Graph::new();
                let mut binder = Binder::new(&g);
                let obj = critic_objective(&self.model, &batch, &fakes, &weights, &g, &mut binder);
                critic_values = (obj.total.item(), obj.wasserstein.item(), obj.penalty.item());
                let grads = binder.gradients(obj.total);
                let critic = &mut self.model.stages[stage].critic;
                let grads: Vec<Tensor> = critic
                    .params()
                    .into_iter()
                    .map(|p| grads.get(p).cloned().unwrap_or_else(|| Tensor::zeros(p.raw_dim())))
                    .collect();
                critic_opt.update(critic.params_mut(), &grads);
            }

            let g = Graph::new();
            let mut binder = Binder::new(&g);
            let obj = generator_objective(&self.model, &batch, &weights, self.config.contact_sigmoid, &g, &mut binder);
            let reconstruction_full = {
                let mut sum = 0.0;
                for (rec, real) in obj.reconstructions.iter().zip(&self.full_reals) {
                    let up = resample_channels(&rec.value(), frames);
                    sum += (&up - real).mapv(f64::abs).mean().expect("non-empty");
                }
                sum / self.batch_size() as f64
            };
            let row = TelemetryRow {
                iteration: self.iteration,
                level: STAGE_LEVELS[stage] + 1,
                stage: stage + 1,
                critic_loss: critic_values.0,
                wasserstein: critic_values.1,
                gradient_penalty: critic_values.2,
                adversarial: obj.adversarial.item(),
                reconstruction: obj.reconstruction.item(),
                contact: obj.contact.map_or(0.0, |c| c.item()),
                generator_loss: obj.total.item(),
                reconstruction_full,
            };
            check_finite(
                stage,
                self.iteration,
                limit,
                &[
                    ("critic_loss", row.critic_loss),
                    ("generator_loss", row.generator_loss),
                    ("gradient_penalty", row.gradient_penalty),
                ],
            )?;
            let grads = binder.gradients(obj.total);
            let generator = &mut self.model.stages[stage].generator;
            let grads: Vec<Tensor> = generator
                .params()
                .into_iter()
                .map(|p| grads.get(p).cloned().unwrap_or_else(|| Tensor::zeros(p.raw_dim())))
                .collect();
            generator_opt.update(generator.params_mut(), &grads);
            sink(&row)?;
        }
        self.model.trained_stages = stage + 1;
        log::info!("stage {} trained ({} iterations)", stage + 1, iterations);
        Ok(())
    }

    pub fn train_all<F>(&mut self, mut sink: F) -> Result<()>
    where
        F: FnMut(&TelemetryRow) -> Result<()>,
    {
        for stage in self.model.trained_stages..STAGES {
            self.train_stage(stage, &mut sink)?;
        }
        Ok(())
    }

    pub fn into_model(self) -> PyramidModel {
        self.model
    }
}

/// Trains every stage in order and returns the finished model.
pub fn train<F>(config: TrainConfig, skeleton: Skeleton, motions: Vec<TrainingMotion>, sink: F) -> Result<PyramidModel>
where
    F: FnMut(&TelemetryRow) -> Result<()>,
{
    let mut trainer = Trainer::new(config, skeleton, motions)?;
    trainer.train_all(sink)?;
    Ok(trainer.into_model())
}

#[cfg(test)]
mod tests;
