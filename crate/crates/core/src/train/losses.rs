use std::rc::Rc;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::autograd::{Graph, Tensor, Var};
use crate::bvh::Skeleton;
use crate::motion::{ChannelStats, Q};

/// Mean over the batch of `(||grad_x critic(x)|| - 1)^2` at the interpolates
/// `x = alpha * fake + (1 - alpha) * real`. The gradient is taken of the
/// summed score map and its norm runs over the whole sample. The result stays
/// differentiable with respect to the critic's parameters.
pub fn gradient_penalty<'g, F>(
    graph: &'g Graph,
    mut critic: F,
    real: &[Tensor],
    fake: &[Tensor],
    alphas: &[f64],
) -> Var<'g>
where
    F: FnMut(Var<'g>) -> Var<'g>,
{
    assert_eq!(real.len(), fake.len(), "real and fake batches differ in size");
    assert_eq!(real.len(), alphas.len(), "one alpha per sample");
    assert!(!real.is_empty(), "empty batch");
    let mut total: Option<Var<'g>> = None;
    for ((r, f), &a) in real.iter().zip(fake).zip(alphas) {
        assert_eq!(r.dim(), f.dim(), "real and fake samples differ in shape");
        let mixed = graph.leaf(f * a + r * (1.0 - a));
        let score = critic(mixed).sum();
        let grad = graph.grad(score, &[mixed])[0];
        let norm = grad.square().sum().offset(1e-12).sqrt();
        let term = norm.offset(-1.0).square();
        total = Some(match total {
            Some(t) => t + term,
            None => term,
        });
    }
    total.expect("non-empty batch").scale(1.0 / real.len() as f64)
}

/// Mean absolute difference over all elements.
pub fn reconstruction_loss<'g>(output: Var<'g>, target: Var<'g>) -> Var<'g> {
    (output - target).abs().mean()
}

/// Skewed logistic mapping contact channels to contact probabilities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ContactSigmoid {
    pub steepness: f64,
    pub midpoint: f64,
}

impl Default for ContactSigmoid {
    fn default() -> Self {
        ContactSigmoid {
            steepness: 12.0,
            midpoint: 0.5,
        }
    }
}

impl ContactSigmoid {
    pub fn eval(&self, x: f64) -> f64 {
        1.0 / (1.0 + (-self.steepness * (x - self.midpoint)).exp())
    }
}

type Rows<'g> = [Var<'g>; 3];
type Rot<'g> = [[Var<'g>; 3]; 3];

fn dot3<'g>(a: &Rows<'g>, b: &Rows<'g>) -> Var<'g> {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn normalize3<'g>(a: Rows<'g>) -> Rows<'g> {
    let inv = dot3(&a, &a).sqrt().recip();
    [a[0] * inv, a[1] * inv, a[2] * inv]
}

/// Gram-Schmidt on per-frame rows; returns the matrix as `[row][col]`.
fn rotation_rows<'g>(six: [Var<'g>; 6]) -> Rot<'g> {
    let c1 = normalize3([six[0], six[1], six[2]]);
    let b = [six[3], six[4], six[5]];
    let proj = dot3(&c1, &b);
    let c2 = normalize3([b[0] - c1[0] * proj, b[1] - c1[1] * proj, b[2] - c1[2] * proj]);
    let c3 = [
        c1[1] * c2[2] - c1[2] * c2[1],
        c1[2] * c2[0] - c1[0] * c2[2],
        c1[0] * c2[1] - c1[1] * c2[0],
    ];
    [[c1[0], c2[0], c3[0]], [c1[1], c2[1], c3[1]], [c1[2], c2[2], c3[2]]]
}

fn matmul3<'g>(a: &Rot<'g>, b: &Rot<'g>) -> Rot<'g> {
    std::array::from_fn(|r| std::array::from_fn(|c| a[r][0] * b[0][c] + a[r][1] * b[1][c] + a[r][2] * b[2][c]))
}

/// World positions of the foot joints as `1 x T` rows, computed on the graph
/// from normalized channel-major features.
pub fn foot_positions_graph<'g>(
    graph: &'g Graph,
    normalized: Var<'g>,
    stats: &ChannelStats,
    skeleton: &Skeleton,
    fps: f64,
) -> Vec<Rows<'g>> {
    let (channels, frames) = normalized.shape();
    assert_eq!(channels, stats.dim(), "feature and statistics widths differ");
    let scale = Array2::from_shape_fn((channels, frames), |(c, _)| stats.std[c]);
    let shift = Array2::from_shape_fn((channels, frames), |(c, _)| stats.mean[c]);
    let data = normalized * graph.leaf_rc(Rc::new(scale)) + graph.leaf_rc(Rc::new(shift));

    let joints = skeleton.joint_count();
    let contacts = skeleton.foot_joints.len();
    let root = joints * Q + contacts;
    // Position at frame t is the sum of planar velocities of frames before t.
    let prefix = Array2::from_shape_fn((frames, frames), |(s, t)| if s < t { 1.0 / fps } else { 0.0 });
    let prefix = graph.leaf_rc(Rc::new(prefix));
    let root_pos: Rows<'g> = [
        data.row(root + 1).matmul(prefix),
        data.row(root),
        data.row(root + 2).matmul(prefix),
    ];

    let mut needed = vec![false; joints];
    for &f in &skeleton.foot_joints {
        let mut j = Some(f);
        while let Some(k) = j {
            needed[k] = true;
            j = skeleton.joints[k].parent;
        }
    }
    let mut world: Vec<Option<(Rot<'g>, Rows<'g>)>> = vec![None; joints];
    for j in 0..joints {
        if !needed[j] {
            continue;
        }
        let six: [Var<'g>; 6] = std::array::from_fn(|q| data.row(j * Q + q));
        let local = rotation_rows(six);
        world[j] = Some(match skeleton.joints[j].parent {
            None => (local, root_pos),
            Some(p) => {
                let (prot, ppos) = world[p].expect("parents precede children");
                let o = skeleton.joints[j].offset;
                let offset = [o.x, o.y, o.z];
                let pos: Rows<'g> = std::array::from_fn(|r| {
                    ppos[r] + prot[r][0].scale(offset[0]) + prot[r][1].scale(offset[1]) + prot[r][2].scale(offset[2])
                });
                (matmul3(&prot, &local), pos)
            }
        });
    }
    skeleton
        .foot_joints
        .iter()
        .map(|&f| world[f].expect("foot chain computed").1)
        .collect()
}

/// Foot-skating penalty: squared foot speed (per second) weighted by the
/// contact probability of the generated contact channels, summed over
/// frames `0..T-1` and foot joints and divided by `T * |F|`.
pub fn contact_loss<'g>(
    graph: &'g Graph,
    normalized: Var<'g>,
    stats: &ChannelStats,
    skeleton: &Skeleton,
    fps: f64,
    sigmoid: ContactSigmoid,
) -> Var<'g> {
    let (_, frames) = normalized.shape();
    let feet = skeleton.foot_joints.len();
    assert!(feet > 0 && frames >= 2, "contact loss needs feet and two frames");
    let positions = foot_positions_graph(graph, normalized, stats, skeleton, fps);
    let heads: Rc<[usize]> = (1..frames).collect();
    let tails: Rc<[usize]> = (0..frames - 1).collect();
    let contact_base = skeleton.joint_count() * Q;
    let mut total: Option<Var<'g>> = None;
    for (i, pos) in positions.iter().enumerate() {
        let speed_sq = pos
            .iter()
            .map(|row| {
                let v = (row.gather_cols(Rc::clone(&heads)) - row.gather_cols(Rc::clone(&tails))).scale(fps);
                v.square()
            })
            .reduce(|a, b| a + b)
            .expect("three axes");
        let c = stats.std[contact_base + i];
        let m = stats.mean[contact_base + i];
        let logits = normalized
            .row(contact_base + i)
            .gather_cols(Rc::clone(&tails))
            .scale(c * sigmoid.steepness)
            .offset((m - sigmoid.midpoint) * sigmoid.steepness);
        let term = (speed_sq * logits.sigmoid()).sum();
        total = Some(match total {
            Some(t) => t + term,
            None => term,
        });
    }
    total.expect("at least one foot").scale(1.0 / (frames * feet) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bvh::Joint;
    use crate::motion::{encode_motion, feature_dim, tensor_positions};
    use crate::bvh::RawMotion;
    use approx::assert_relative_eq;
    use nalgebra::Vector3;
    use ndarray::array;

    #[test]
    fn linear_critic_penalty_is_closed_form() {
        let w = array![[0.3, -1.2, 0.5], [0.8, 0.1, -0.4]];
        let norm = w.iter().map(|v| v * v).sum::<f64>().sqrt();
        let real = vec![array![[1.0, 2.0, 3.0], [0.0, -1.0, 4.0]]; 2];
        let fake = vec![array![[0.5, 0.0, 1.0], [2.0, 2.0, 2.0]]; 2];
        for alphas in [[0.0, 1.0], [0.25, 0.9]] {
            let g = Graph::new();
            let wv = g.leaf(w.clone());
            let p = gradient_penalty(&g, |x| (x * wv).sum(), &real, &fake, &alphas);
            assert_relative_eq!(p.item(), (norm - 1.0).powi(2), epsilon = 1e-9);
            // derivative w.r.t. the critic weights: 2 (|w| - 1) w / |w|
            let dw = g.grad(p, &[wv])[0].value();
            let expected = &w * (2.0 * (norm - 1.0) / norm);
            assert_relative_eq!(*dw, expected, epsilon = 1e-9);
        }
    }

    #[test]
    fn unit_and_zero_critics() {
        let unit = array![[0.6, 0.8]];
        let real = vec![array![[1.0, 2.0]]];
        let fake = vec![array![[3.0, -1.0]]];
        let g = Graph::new();
        let w = g.leaf(unit);
        assert!(gradient_penalty(&g, |x| (x * w).sum(), &real, &fake, &[0.4]).item().abs() < 1e-12);
        let z = g.leaf(array![[0.0, 0.0]]);
        assert_relative_eq!(
            gradient_penalty(&g, |x| (x * z).sum(), &real, &fake, &[0.4]).item(),
            1.0,
            epsilon = 1e-5
        );
    }

    #[test]
    fn reconstruction_loss_cases() {
        let g = Graph::new();
        let t = array![[1.0, -2.0], [0.5, 3.0]];
        let target = g.leaf(t.clone());
        assert_eq!(reconstruction_loss(g.leaf(t.clone()), target).item(), 0.0);
        assert_relative_eq!(reconstruction_loss(g.leaf(&t + 0.25), target).item(), 0.25, epsilon = 1e-15);
        let o = array![[0.0, 0.0], [1.0, 1.0]];
        let naive = (0..2).flat_map(|r| (0..2).map(move |c| (r, c))).map(|(r, c)| (o[[r, c]] - t[[r, c]]).abs()).sum::<f64>() / 4.0;
        assert_relative_eq!(reconstruction_loss(g.leaf(o), target).item(), naive, epsilon = 1e-15);
    }

    fn chain() -> Skeleton {
        let offsets = [Vector3::zeros(), Vector3::new(0.2, -0.4, 0.0), Vector3::new(0.0, -0.5, 0.1)];
        let joints = offsets
            .iter()
            .enumerate()
            .map(|(i, o)| Joint {
                name: format!("j{i}"),
                parent: i.checked_sub(1),
                offset: *o,
                channels: vec![],
                end_site: None,
            })
            .collect();
        Skeleton::new(joints).unwrap().with_foot_joints(&["j2"]).unwrap()
    }

    fn unit_stats(dim: usize) -> ChannelStats {
        ChannelStats {
            mean: vec![0.0; dim],
            std: vec![1.0; dim],
        }
    }

    #[test]
    fn graph_fk_matches_decoder() {
        use crate::bvh::{Channel, Skeleton as S};
        use crate::rotation::Axis;
        let mut sk: S = chain();
        sk.joints[0].channels = vec![
            Channel::Position(Axis::X),
            Channel::Position(Axis::Y),
            Channel::Position(Axis::Z),
            Channel::Rotation(Axis::Z),
            Channel::Rotation(Axis::X),
            Channel::Rotation(Axis::Y),
        ];
        for j in 1..3 {
            sk.joints[j].channels = vec![Channel::Rotation(Axis::Z), Channel::Rotation(Axis::X), Channel::Rotation(Axis::Y)];
        }
        let frames = Array2::from_shape_fn((6, 12), |(t, c)| ((t * 13 + c * 7) % 23) as f64 * 3.0 - 30.0 + if c == 1 { 40.0 } else { 0.0 });
        let motion = RawMotion::new(1.0 / 30.0, frames).unwrap();
        let tensor = encode_motion(&sk, &motion).unwrap();
        let stats = ChannelStats::fit([tensor.data.view()]).unwrap();
        let g = Graph::new();
        let x = g.leaf(stats.normalize(&tensor.data).t().to_owned());
        let feet = foot_positions_graph(&g, x, &stats, &sk, 30.0);
        let reference = tensor_positions(&tensor, &sk, [0.0, 0.0]).unwrap();
        for t in 0..6 {
            for r in 0..3 {
                assert_relative_eq!(feet[0][r].value()[[0, t]], reference[t][2][r], epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn contact_loss_closed_form() {
        let sk = chain();
        let dim = feature_dim(3, 1);
        // identity rotations, root moving with planar velocity (1.5, 0, -2) per second
        let mut data = Array2::zeros((dim, 2));
        for j in 0..3 {
            data[[j * Q, 0]] = 1.0;
            data[[j * Q, 1]] = 1.0;
            data[[j * Q + 4, 0]] = 1.0;
            data[[j * Q + 4, 1]] = 1.0;
        }
        data[[18, 0]] = 1.0;
        data[[18, 1]] = 1.0;
        data[[19, 0]] = 0.9;
        data[[19, 1]] = 0.9;
        data[[20, 0]] = 1.5;
        data[[21, 0]] = -2.0;
        let g = Graph::new();
        let sigmoid = ContactSigmoid::default();
        let loss = contact_loss(&g, g.leaf(data.clone()), &unit_stats(dim), &sk, 30.0, sigmoid).item();
        let speed_sq = 1.5f64.powi(2) + 2.0f64.powi(2);
        assert_relative_eq!(loss, speed_sq * sigmoid.eval(1.0) / 2.0, epsilon = 1e-12);

        // far-below-threshold contacts silence the loss
        data[[18, 0]] = -5.0;
        let quiet = contact_loss(&g, g.leaf(data.clone()), &unit_stats(dim), &sk, 30.0, sigmoid).item();
        assert!(quiet < 1e-20 * speed_sq + 1e-24);

        // stationary feet
        data[[18, 0]] = 1.0;
        data[[20, 0]] = 0.0;
        data[[21, 0]] = 0.0;
        assert_eq!(contact_loss(&g, g.leaf(data), &unit_stats(dim), &sk, 30.0, sigmoid).item(), 0.0);
    }
}
