//! Identity-conditioned feature modulation: `out = gamma * x + beta`, with
//! gamma and beta predicted per frame and channel from the skeleton id map.
//! Features are not normalized before modulation.

use std::rc::Rc;

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autograd::{Binder, Graph, Tensor, Var};
use crate::error::{Error, Result};
use crate::nn::conv::{Conv1d, LEAKY_SLOPE};
use crate::nn::skeleton::SkeletonNeighborhoods;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModulationKind {
    /// Skeleton-aware convolutional embedding and heads.
    Spade,
    /// Skeleton-aware per-frame linear layers (temporal extent 1).
    Film,
    /// No conditioning (unconditional baseline).
    None,
}

impl std::str::FromStr for ModulationKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "spade" => Ok(ModulationKind::Spade),
            "film" => Ok(ModulationKind::Film),
            "none" => Ok(ModulationKind::None),
            other => Err(Error::Config(format!("unknown modulation kind `{other}`"))),
        }
    }
}

/// Per-frame motion identity. Stored as indices; the one-hot expansion
/// happens at the input of the modulation embedding.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkeletonIdMap {
    pub ids: Vec<usize>,
    pub identities: usize,
}

impl SkeletonIdMap {
    pub fn new(ids: Vec<usize>, identities: usize) -> Result<Self> {
        if ids.is_empty() {
            return Err(Error::Config("id map has no frames".into()));
        }
        if identities == 0 {
            return Err(Error::Config("id map needs at least one identity".into()));
        }
        if let Some(bad) = ids.iter().find(|&&i| i >= identities) {
            return Err(Error::Config(format!(
                "identity {bad} out of range for {identities} identities"
            )));
        }
        Ok(SkeletonIdMap { ids, identities })
    }

    pub fn constant(id: usize, frames: usize, identities: usize) -> Result<Self> {
        SkeletonIdMap::new(vec![id; frames], identities)
    }

    pub fn frames(&self) -> usize {
        self.ids.len()
    }

    /// Nearest-frame resampling: output frame `t` takes source frame
    /// `floor((t + 0.5) * T_in / T_out)`. Keeps every frame a valid identity.
    pub fn resample_nearest(&self, target: usize) -> SkeletonIdMap {
        let t_in = self.frames();
        let ids = (0..target)
            .map(|t| {
                let s = ((t as f64 + 0.5) * t_in as f64 / target as f64).floor() as usize;
                self.ids[s.min(t_in - 1)]
            })
            .collect();
        SkeletonIdMap {
            ids,
            identities: self.identities,
        }
    }

    /// Constant runs as `(identity, length)`.
    pub fn segments(&self) -> Vec<(usize, usize)> {
        let mut out: Vec<(usize, usize)> = Vec::new();
        for &id in &self.ids {
            match out.last_mut() {
                Some((last, len)) if *last == id => *len += 1,
                _ => out.push((id, 1)),
            }
        }
        out
    }

    /// Dense `T x channels` view: every channel of frame `t` carries
    /// `id / (B - 1)` (0 when there is a single identity).
    pub fn as_tensor(&self, channels: usize) -> Array2<f64> {
        let denom = (self.identities.max(2) - 1) as f64;
        Array2::from_shape_fn((self.frames(), channels), |(t, _)| self.ids[t] as f64 / denom)
    }

    /// One-hot planes, replicated for each channel group: `(groups * B) x T`.
    pub fn one_hot(&self, groups: usize) -> Tensor {
        let b = self.identities;
        let mut out = Tensor::zeros((groups * b, self.frames()));
        for (t, &id) in self.ids.iter().enumerate() {
            for g in 0..groups {
                out[[g * b + id, t]] = 1.0;
            }
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct ModulationBlock {
    pub embed: Conv1d,
    pub gamma: Conv1d,
    pub beta: Conv1d,
    pub identities: usize,
    pub groups: usize,
}

impl ModulationBlock {
    /// `feature_sizes` is the grouped layout of the modulated features.
    /// Heads start with zero weights, gamma bias 1 and beta bias 0, so a new
    /// block is an exact identity.
    pub fn new<R: Rng>(
        neighborhoods: &SkeletonNeighborhoods,
        identities: usize,
        embed_per_group: usize,
        feature_sizes: &[usize],
        kernel: usize,
        rng: &mut R,
    ) -> Self {
        let groups = neighborhoods.group_count();
        let id_sizes = vec![identities; groups];
        let embed_sizes = vec![embed_per_group; groups];
        let embed = Conv1d::skeleton(&id_sizes, &embed_sizes, neighborhoods, kernel, rng);
        let mut gamma = Conv1d::skeleton(&embed_sizes, feature_sizes, neighborhoods, kernel, rng);
        let mut beta = Conv1d::skeleton(&embed_sizes, feature_sizes, neighborhoods, kernel, rng);
        gamma.weight.fill(0.0);
        gamma.bias.fill(1.0);
        beta.weight.fill(0.0);
        beta.bias.fill(0.0);
        ModulationBlock {
            embed,
            gamma,
            beta,
            identities,
            groups,
        }
    }

    pub fn kernel(&self) -> usize {
        self.embed.kernel
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut p = self.embed.params_mut();
        p.extend(self.gamma.params_mut());
        p.extend(self.beta.params_mut());
        p
    }

    pub fn params(&self) -> Vec<&Tensor> {
        let mut p = self.embed.params();
        p.extend(self.gamma.params());
        p.extend(self.beta.params());
        p
    }

    /// Gamma and beta on the graph for an id map at the feature resolution.
    pub fn parameters<'g>(&self, binder: &mut Binder<'g>, id_map: &SkeletonIdMap) -> (Var<'g>, Var<'g>) {
        assert_eq!(id_map.identities, self.identities, "id map identity count");
        let onehot = binder.graph().leaf_rc(Rc::new(id_map.one_hot(self.groups)));
        let hidden = self.embed.forward(binder, onehot).leaky_relu(LEAKY_SLOPE);
        (self.gamma.forward(binder, hidden), self.beta.forward(binder, hidden))
    }

    pub fn forward<'g>(&self, binder: &mut Binder<'g>, features: Var<'g>, id_map: &SkeletonIdMap) -> Var<'g> {
        let (channels, frames) = features.shape();
        assert_eq!(frames, id_map.frames(), "id map must match the feature resolution");
        assert_eq!(channels, self.gamma.out_channels(), "modulated channel count");
        let (gamma, beta) = self.parameters(binder, id_map);
        features * gamma + beta
    }

    /// Gamma and beta values, `channels x T` each.
    pub fn modulation(&self, id_map: &SkeletonIdMap) -> (Tensor, Tensor) {
        let g = Graph::new();
        let mut b = Binder::new(&g);
        let (gamma, beta) = self.parameters(&mut b, id_map);
        (gamma.value().as_ref().clone(), beta.value().as_ref().clone())
    }

    /// Modulate a feature map directly (`channels x T`).
    pub fn apply(&self, features: &Tensor, id_map: &SkeletonIdMap) -> Result<Tensor> {
        if features.ncols() != id_map.frames() || features.nrows() != self.gamma.out_channels() {
            return Err(Error::Shape(format!(
                "features {:?} vs id map of {} frames and {} modulated channels",
                features.dim(),
                id_map.frames(),
                self.gamma.out_channels()
            )));
        }
        let g = Graph::new();
        let mut b = Binder::new(&g);
        let x = g.leaf(features.clone());
        Ok(self.forward(&mut b, x, id_map).value().as_ref().clone())
    }
}
