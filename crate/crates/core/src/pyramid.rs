//! Coarse-to-fine generator/critic pyramid over the four temporal levels.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::autograd::{Binder, Graph, Tensor, Var};
use crate::bvh::Skeleton;
use crate::error::{Error, Result};
use crate::motion::{
    feature_dim, interpolation_matrix, ChannelStats, LevelSpec, MotionTensor, LEVELS, STAGES, STAGE_LEVELS,
};
use crate::nn::{
    build_neighborhoods, motion_group_sizes, Conv1d, ModulationBlock, ModulationKind, SkeletonIdMap,
    SkeletonNeighborhoods, LEAKY_SLOPE,
};

/// Architecture hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Hidden channels per layer, split evenly (rounded up) over channel groups.
    pub hidden_width: usize,
    /// Embedding channels of the modulation block, split like `hidden_width`.
    pub modulation_width: usize,
    pub kernel: usize,
    pub neighbor_distance: usize,
    pub modulation: ModulationKind,
    /// 1-based levels whose generators carry a modulation block.
    pub conditioning_levels: Vec<usize>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            hidden_width: 96,
            modulation_width: 32,
            kernel: 5,
            neighbor_distance: 2,
            modulation: ModulationKind::Spade,
            conditioning_levels: vec![1],
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.kernel == 0 || self.kernel % 2 == 0 {
            return Err(Error::Config(format!("kernel must be odd, got {}", self.kernel)));
        }
        if self.hidden_width == 0 || self.modulation_width == 0 {
            return Err(Error::Config("layer widths must be positive".into()));
        }
        if let Some(l) = self.conditioning_levels.iter().find(|&&l| l == 0 || l > LEVELS) {
            return Err(Error::Config(format!("conditioning level {l} outside 1..={LEVELS}")));
        }
        Ok(())
    }

    pub fn conditions_level(&self, level: usize) -> bool {
        self.modulation != ModulationKind::None && self.conditioning_levels.contains(&(level + 1))
    }

    fn modulation_kernel(&self) -> usize {
        match self.modulation {
            ModulationKind::Film => 1,
            _ => self.kernel,
        }
    }
}

fn per_group(width: usize, groups: usize) -> usize {
    width.div_ceil(groups)
}

#[derive(Debug, Clone)]
pub struct Generator {
    /// Input layer, two hidden layers, output layer.
    pub layers: Vec<Conv1d>,
    pub modulation: Option<ModulationBlock>,
    /// Later stages refine their upsampled input.
    pub residual: bool,
}

impl Generator {
    fn new<R: Rng>(
        neighborhoods: &SkeletonNeighborhoods,
        motion_sizes: &[usize],
        config: &ModelConfig,
        identities: usize,
        conditioned: bool,
        residual: bool,
        rng: &mut R,
    ) -> Self {
        let groups = neighborhoods.group_count();
        let hidden = vec![per_group(config.hidden_width, groups); groups];
        let k = config.kernel;
        let mut layers = vec![
            Conv1d::skeleton(motion_sizes, &hidden, neighborhoods, k, rng),
            Conv1d::skeleton(&hidden, &hidden, neighborhoods, k, rng),
            Conv1d::skeleton(&hidden, &hidden, neighborhoods, k, rng),
            Conv1d::skeleton(&hidden, motion_sizes, neighborhoods, k, rng),
        ];
        if residual {
            layers[3].init_weights(rng, 0.1);
        }
        let modulation = conditioned.then(|| {
            ModulationBlock::new(
                neighborhoods,
                identities,
                per_group(config.modulation_width, groups),
                &hidden,
                config.modulation_kernel(),
                rng,
            )
        });
        Generator {
            layers,
            modulation,
            residual,
        }
    }

    pub fn params(&self) -> Vec<&Tensor> {
        let mut p: Vec<&Tensor> = self.layers.iter().flat_map(Conv1d::params).collect();
        if let Some(m) = &self.modulation {
            p.extend(m.params());
        }
        p
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut p: Vec<&mut Tensor> = self.layers.iter_mut().flat_map(Conv1d::params_mut).collect();
        if let Some(m) = &mut self.modulation {
            p.extend(m.params_mut());
        }
        p
    }

    /// Zero the output layer, making a residual stage an exact pass-through.
    pub fn zero_output(&mut self) {
        let last = self.layers.last_mut().expect("generator has layers");
        last.weight.fill(0.0);
        last.bias.fill(0.0);
    }

    /// `prev` is the previous stage output already at this stage's length.
    pub fn forward<'g>(
        &self,
        binder: &mut Binder<'g>,
        prev: Option<Var<'g>>,
        noise: Var<'g>,
        ids: Option<&SkeletonIdMap>,
    ) -> Var<'g> {
        let input = match prev {
            Some(p) => p + noise,
            None => noise,
        };
        let mut h = self.layers[0].forward(binder, input);
        if let Some(m) = &self.modulation {
            let ids = ids.expect("conditioned generator needs an id map");
            h = m.forward(binder, h, ids);
        }
        for layer in &self.layers[1..] {
            h = layer.forward(binder, h.leaky_relu(LEAKY_SLOPE));
        }
        match (self.residual, prev) {
            (true, Some(p)) => p + h,
            _ => h,
        }
    }
}

/// Patch critic: two skeleton-aware layers and a dense head producing one
/// score per frame.
#[derive(Debug, Clone)]
pub struct Discriminator {
    pub layers: Vec<Conv1d>,
}

impl Discriminator {
    fn new<R: Rng>(
        neighborhoods: &SkeletonNeighborhoods,
        motion_sizes: &[usize],
        config: &ModelConfig,
        rng: &mut R,
    ) -> Self {
        let groups = neighborhoods.group_count();
        let hidden = vec![per_group(config.hidden_width, groups); groups];
        let k = config.kernel;
        let layers = vec![
            Conv1d::skeleton(motion_sizes, &hidden, neighborhoods, k, rng),
            Conv1d::skeleton(&hidden, &hidden, neighborhoods, k, rng),
            Conv1d::dense(hidden.iter().sum(), 1, k, rng),
        ];
        Discriminator { layers }
    }

    pub fn params(&self) -> Vec<&Tensor> {
        self.layers.iter().flat_map(Conv1d::params).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        self.layers.iter_mut().flat_map(Conv1d::params_mut).collect()
    }

    /// `1 x T` score map.
    pub fn forward<'g>(&self, binder: &mut Binder<'g>, x: Var<'g>) -> Var<'g> {
        let h = self.layers[0].forward(binder, x).leaky_relu(LEAKY_SLOPE);
        let h = self.layers[1].forward(binder, h).leaky_relu(LEAKY_SLOPE);
        self.layers[2].forward(binder, h)
    }

    pub fn scores(&self, x: &Tensor) -> Tensor {
        let g = Graph::new();
        let mut b = Binder::new(&g);
        let xv = g.leaf(x.clone());
        self.forward(&mut b, xv).value().as_ref().clone()
    }
}

#[derive(Debug, Clone)]
pub struct Stage {
    pub generator: Generator,
    pub critic: Discriminator,
}

/// Source of per-stage noise during generation.
pub enum NoiseSource<'a> {
    /// Fresh Gaussian noise scaled by each stage's amplitude.
    Random(&'a mut ChaCha8Rng),
    /// The fixed reconstruction embeddings of one training motion.
    Reconstruction(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GenerationMode {
    Random,
    Reconstruction(usize),
}

/// Every stage output of one generation pass.
#[derive(Debug, Clone)]
pub struct GenerationTrace {
    pub stages: Vec<MotionTensor>,
    pub output: MotionTensor,
}

/// The trained model plus everything needed to generate and decode.
#[derive(Debug, Clone)]
pub struct PyramidModel {
    pub skeleton: Skeleton,
    pub identities: Vec<String>,
    pub levels: LevelSpec,
    pub config: ModelConfig,
    pub contacts: usize,
    pub fps: f64,
    pub stats: ChannelStats,
    pub neighborhoods: SkeletonNeighborhoods,
    pub stages: Vec<Stage>,
    /// Stage-1 reconstruction noise per identity, `D x T_1`; later stages use zero.
    pub reconstruction_noise: Vec<Tensor>,
    pub amplitudes: [f64; STAGES],
    /// Starting root x/z of each training motion.
    pub initial_root_xz: Vec<[f64; 2]>,
    pub trained_stages: usize,
    pub config_hash: String,
}

impl PyramidModel {
    /// Untrained model with freshly initialized weights and reconstruction
    /// noise drawn from `rng`. Amplitudes start at 1.
    pub fn new<R: Rng>(
        skeleton: Skeleton,
        identities: Vec<String>,
        levels: LevelSpec,
        stats: ChannelStats,
        fps: f64,
        config: ModelConfig,
        rng: &mut R,
    ) -> Result<Self> {
        config.validate()?;
        levels.validate()?;
        if identities.is_empty() {
            return Err(Error::Config("model needs at least one identity".into()));
        }
        let contacts = skeleton.foot_joints.len();
        let dim = feature_dim(skeleton.joint_count(), contacts);
        if stats.dim() != dim {
            return Err(Error::Shape(format!(
                "channel statistics have {} channels, model expects {dim}",
                stats.dim()
            )));
        }
        let neighborhoods = build_neighborhoods(&skeleton, config.neighbor_distance);
        let mut model = PyramidModel {
            initial_root_xz: vec![[0.0, 0.0]; identities.len()],
            skeleton,
            identities,
            levels,
            contacts,
            fps,
            stats,
            neighborhoods,
            stages: Vec::new(),
            reconstruction_noise: Vec::new(),
            amplitudes: [1.0; STAGES],
            trained_stages: 0,
            config_hash: String::new(),
            config,
        };
        model.stages = model.build_stages(rng);
        let t1 = model.levels.level_lengths[0];
        model.reconstruction_noise = (0..model.identities.len())
            .map(|_| Array2::from_shape_simple_fn((dim, t1), || rng.sample(StandardNormal)))
            .collect();
        Ok(model)
    }

    pub(crate) fn build_stages<R: Rng>(&self, rng: &mut R) -> Vec<Stage> {
        let sizes = self.motion_group_sizes();
        (0..STAGES)
            .map(|s| Stage {
                generator: Generator::new(
                    &self.neighborhoods,
                    &sizes,
                    &self.config,
                    self.identities.len(),
                    self.stage_is_conditioned(s),
                    s > 0,
                    rng,
                ),
                critic: Discriminator::new(&self.neighborhoods, &sizes, &self.config, rng),
            })
            .collect()
    }

    pub fn motion_group_sizes(&self) -> Vec<usize> {
        motion_group_sizes(self.skeleton.joint_count(), self.contacts)
    }

    pub fn dim(&self) -> usize {
        feature_dim(self.skeleton.joint_count(), self.contacts)
    }

    pub fn identity_count(&self) -> usize {
        self.identities.len()
    }

    pub fn frames(&self) -> usize {
        self.levels.frames()
    }

    pub fn stage_is_conditioned(&self, stage: usize) -> bool {
        self.config.conditions_level(STAGE_LEVELS[stage])
    }

    pub fn identity_index(&self, name: &str) -> Result<usize> {
        self.identities
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::UnknownIdentity {
                name: name.to_string(),
                available: self.identities.join(", "),
            })
    }

    /// Previous stage output (channel-major) resampled to `stage`'s length.
    pub fn upsample_into(&self, stage: usize, prev: &Tensor) -> Tensor {
        let target = self.levels.stage_length(stage);
        if prev.ncols() == target {
            prev.clone()
        } else {
            prev.dot(&interpolation_matrix(prev.ncols(), target))
        }
    }

    /// Noise for `stage`. Random draws happen for every stage, including
    /// zero-amplitude ones, so the stream position depends only on the stage.
    pub fn stage_noise(&self, stage: usize, source: &mut NoiseSource<'_>) -> Tensor {
        let shape = (self.dim(), self.levels.stage_length(stage));
        match source {
            NoiseSource::Random(rng) => {
                let amp = self.amplitudes[stage];
                Array2::from_shape_simple_fn(shape, || amp * rng.sample::<f64, _>(StandardNormal))
            }
            NoiseSource::Reconstruction(b) => {
                if stage == 0 {
                    self.reconstruction_noise[*b].clone()
                } else {
                    Array2::zeros(shape)
                }
            }
        }
    }

    /// Id map at `stage`'s resolution, or `None` for unconditioned stages.
    pub fn stage_ids(&self, stage: usize, ids: &SkeletonIdMap) -> Option<SkeletonIdMap> {
        self.stage_is_conditioned(stage)
            .then(|| ids.resample_nearest(self.levels.stage_length(stage)))
    }

    /// One inference step of `stage` in normalized channel-major space.
    pub fn run_stage(
        &self,
        stage: usize,
        prev: Option<&Tensor>,
        noise: &Tensor,
        ids: Option<&SkeletonIdMap>,
    ) -> Result<Tensor> {
        let len = self.levels.stage_length(stage);
        if noise.dim() != (self.dim(), len) {
            return Err(Error::Shape(format!(
                "stage {} expects noise of shape {:?}, got {:?}",
                stage + 1,
                (self.dim(), len),
                noise.dim()
            )));
        }
        if self.stage_is_conditioned(stage) && ids.is_none() {
            return Err(Error::Config(format!("stage {} is conditioned and needs an id map", stage + 1)));
        }
        if let Some(ids) = ids {
            if ids.frames() != len {
                return Err(Error::Shape(format!(
                    "id map has {} frames, stage {} runs at {len}",
                    ids.frames(),
                    stage + 1
                )));
            }
        }
        let g = Graph::new();
        let mut b = Binder::new(&g);
        let prev = match (stage, prev) {
            (0, _) => None,
            (_, Some(p)) => Some(g.leaf(self.upsample_into(stage, p))),
            (_, None) => {
                return Err(Error::Config(format!("stage {} needs the previous stage output", stage + 1)))
            }
        };
        let noise = g.leaf(noise.clone());
        let out = self.stages[stage].generator.forward(&mut b, prev, noise, ids);
        Ok(out.value().as_ref().clone())
    }

    /// Outputs of stages `0..count` in normalized channel-major space.
    pub fn generate_stages(
        &self,
        count: usize,
        ids: &SkeletonIdMap,
        source: &mut NoiseSource<'_>,
    ) -> Result<Vec<Tensor>> {
        if ids.frames() != self.frames() {
            return Err(Error::Shape(format!(
                "id map has {} frames, model generates {}",
                ids.frames(),
                self.frames()
            )));
        }
        if ids.identities != self.identity_count() {
            return Err(Error::Config(format!(
                "id map encodes {} identities, model was trained on {}",
                ids.identities,
                self.identity_count()
            )));
        }
        let mut outputs: Vec<Tensor> = Vec::with_capacity(count);
        for stage in 0..count {
            let noise = self.stage_noise(stage, source);
            let stage_ids = self.stage_ids(stage, ids);
            let out = self.run_stage(stage, outputs.last(), &noise, stage_ids.as_ref())?;
            outputs.push(out);
        }
        Ok(outputs)
    }

    /// Full pass through all stages.
    pub fn generate_full(&self, ids: &SkeletonIdMap, seed: u64, mode: GenerationMode) -> Result<GenerationTrace> {
        if self.trained_stages < STAGES {
            return Err(Error::Untrained {
                trained: self.trained_stages,
                total: STAGES,
            });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut source = match mode {
            GenerationMode::Random => NoiseSource::Random(&mut rng),
            GenerationMode::Reconstruction(b) => {
                if b >= self.identity_count() {
                    return Err(Error::Config(format!(
                        "reconstruction index {b} out of range for {} identities",
                        self.identity_count()
                    )));
                }
                NoiseSource::Reconstruction(b)
            }
        };
        let outputs = self.generate_stages(STAGES, ids, &mut source)?;
        let stages = outputs
            .iter()
            .map(|o| self.to_motion(o))
            .collect::<Result<Vec<_>>>()?;
        let output = stages.last().expect("seven stages").clone();
        Ok(GenerationTrace { stages, output })
    }

    /// Normalized channel-major data to a motion tensor in data units.
    pub fn to_motion(&self, normalized: &Tensor) -> Result<MotionTensor> {
        let data = self.stats.denormalize(&normalized.t().to_owned());
        MotionTensor::new(data, self.skeleton.joint_count(), self.contacts, self.fps)
    }

    /// Motion tensor to normalized channel-major data.
    pub fn to_normalized(&self, motion: &MotionTensor) -> Result<Tensor> {
        if motion.dim() != self.dim() {
            return Err(Error::Shape(format!(
                "motion has {} channels, model expects {}",
                motion.dim(),
                self.dim()
            )));
        }
        Ok(self.stats.normalize(&motion.data).t().to_owned())
    }

    /// Critic score map of `stage` for a motion at that stage's length.
    pub fn critic_scores(&self, stage: usize, motion: &MotionTensor) -> Result<Tensor> {
        let len = self.levels.stage_length(stage);
        if motion.frames() != len {
            return Err(Error::Shape(format!(
                "stage {} critic expects {len} frames, got {}",
                stage + 1,
                motion.frames()
            )));
        }
        Ok(self.stages[stage].critic.scores(&self.to_normalized(motion)?))
    }
}
