use std::rc::Rc;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::autograd::{Binder, Tensor, Var};
use crate::nn::skeleton::SkeletonNeighborhoods;

pub const LEAKY_SLOPE: f64 = 0.2;

/// Temporal convolution over `in_channels x T` maps with reflection padding.
/// A skeleton-aware convolution is a convolution whose weight is restricted
/// by a constant group mask: output group `g` only reads input groups in the
/// neighborhood of `g`.
#[derive(Debug, Clone)]
pub struct Conv1d {
    /// `out x (kernel * in)`, tap-major columns (`k * in + c`).
    pub weight: Tensor,
    /// `out x 1`.
    pub bias: Tensor,
    pub mask: Option<Rc<Tensor>>,
    pub kernel: usize,
}

/// Reflection-padded column index for every tap: entry `k * frames + t` is
/// the source frame of tap `k` at output frame `t`.
pub fn tap_index(frames: usize, kernel: usize) -> Rc<[usize]> {
    let half = (kernel / 2) as isize;
    let last = frames as isize - 1;
    (0..kernel)
        .flat_map(|k| {
            (0..frames).map(move |t| {
                let mut i = t as isize + k as isize - half;
                if i < 0 {
                    i = -i;
                }
                if i > last {
                    i = 2 * last - i;
                }
                i.clamp(0, last) as usize
            })
        })
        .collect()
}

/// 0/1 mask of shape `out x (kernel * in)` for grouped channel layouts.
pub fn group_mask(
    in_sizes: &[usize],
    out_sizes: &[usize],
    neighborhoods: &SkeletonNeighborhoods,
    kernel: usize,
) -> Tensor {
    assert_eq!(in_sizes.len(), neighborhoods.group_count());
    assert_eq!(out_sizes.len(), neighborhoods.group_count());
    let in_total: usize = in_sizes.iter().sum();
    let out_total: usize = out_sizes.iter().sum();
    let in_start: Vec<usize> = offsets(in_sizes);
    let out_start: Vec<usize> = offsets(out_sizes);
    let mut mask = Tensor::zeros((out_total, kernel * in_total));
    for (g, members) in neighborhoods.groups.iter().enumerate() {
        for o in out_start[g]..out_start[g] + out_sizes[g] {
            for &m in members {
                for k in 0..kernel {
                    for c in in_start[m]..in_start[m] + in_sizes[m] {
                        mask[[o, k * in_total + c]] = 1.0;
                    }
                }
            }
        }
    }
    mask
}

pub(crate) fn offsets(sizes: &[usize]) -> Vec<usize> {
    let mut acc = 0;
    sizes
        .iter()
        .map(|s| {
            let o = acc;
            acc += s;
            o
        })
        .collect()
}

impl Conv1d {
    pub fn zeros(in_channels: usize, out_channels: usize, kernel: usize) -> Self {
        Conv1d {
            weight: Tensor::zeros((out_channels, kernel * in_channels)),
            bias: Tensor::zeros((out_channels, 1)),
            mask: None,
            kernel,
        }
    }

    /// Dense convolution, He-initialized for leaky-ReLU inputs.
    pub fn dense<R: Rng>(in_channels: usize, out_channels: usize, kernel: usize, rng: &mut R) -> Self {
        let mut conv = Conv1d::zeros(in_channels, out_channels, kernel);
        conv.init_weights(rng, 1.0);
        conv
    }

    /// Skeleton-aware convolution between grouped layouts.
    pub fn skeleton<R: Rng>(
        in_sizes: &[usize],
        out_sizes: &[usize],
        neighborhoods: &SkeletonNeighborhoods,
        kernel: usize,
        rng: &mut R,
    ) -> Self {
        let mask = group_mask(in_sizes, out_sizes, neighborhoods, kernel);
        let mut conv = Conv1d::zeros(in_sizes.iter().sum(), out_sizes.iter().sum(), kernel);
        conv.mask = Some(Rc::new(mask));
        conv.init_weights(rng, 1.0);
        conv
    }

    pub fn in_channels(&self) -> usize {
        self.weight.ncols() / self.kernel
    }

    pub fn out_channels(&self) -> usize {
        self.weight.nrows()
    }

    /// Redraw weights with standard deviation `gain * sqrt(2 / (1 + a^2) / fan_in)`,
    /// where fan-in counts the unmasked inputs of each output channel.
    pub fn init_weights<R: Rng>(&mut self, rng: &mut R, gain: f64) {
        let leaky = 2.0 / (1.0 + LEAKY_SLOPE * LEAKY_SLOPE);
        for (o, mut row) in self.weight.rows_mut().into_iter().enumerate() {
            let fan_in = match &self.mask {
                Some(m) => m.row(o).sum(),
                None => row.len() as f64,
            };
            let std = gain * (leaky / fan_in.max(1.0)).sqrt();
            let normal = Normal::new(0.0, std).expect("finite std");
            for (c, w) in row.iter_mut().enumerate() {
                let allowed = self.mask.as_ref().map_or(true, |m| m[[o, c]] != 0.0);
                *w = if allowed { normal.sample(rng) } else { 0.0 };
            }
        }
        self.bias.fill(0.0);
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        vec![&mut self.weight, &mut self.bias]
    }

    pub fn params(&self) -> Vec<&Tensor> {
        vec![&self.weight, &self.bias]
    }

    pub fn forward<'g>(&self, binder: &mut Binder<'g>, x: Var<'g>) -> Var<'g> {
        let (channels, frames) = x.shape();
        assert_eq!(
            channels,
            self.in_channels(),
            "conv input has {channels} channels, layer expects {}",
            self.in_channels()
        );
        let columns = x.unfold(tap_index(frames, self.kernel), self.kernel);
        let mut weight = binder.bind(&self.weight);
        if let Some(mask) = &self.mask {
            weight = weight * binder.graph().leaf_rc(Rc::clone(mask));
        }
        let bias = binder.bind(&self.bias);
        weight.matmul(columns).add_bias(bias)
    }
}
