use nalgebra::{Matrix3, Vector3};

use crate::bvh::{RawMotion, Skeleton};
use crate::error::{Error, Result};

/// World position of every joint for one pose. Joint `j` sits at its
/// parent's world position plus the parent's world rotation applied to the
/// joint offset; the root sits at `root_position`.
pub fn forward_kinematics(
    skeleton: &Skeleton,
    local_rotations: &[Matrix3<f64>],
    root_position: &Vector3<f64>,
) -> Result<Vec<Vector3<f64>>> {
    Ok(forward_kinematics_full(skeleton, local_rotations, root_position)?.0)
}

/// Positions and world rotations.
pub fn forward_kinematics_full(
    skeleton: &Skeleton,
    local_rotations: &[Matrix3<f64>],
    root_position: &Vector3<f64>,
) -> Result<(Vec<Vector3<f64>>, Vec<Matrix3<f64>>)> {
    let n = skeleton.joint_count();
    if local_rotations.len() != n {
        return Err(Error::Shape(format!(
            "{} rotations for a {n}-joint skeleton",
            local_rotations.len()
        )));
    }
    let mut positions = Vec::with_capacity(n);
    let mut world = Vec::with_capacity(n);
    for (j, joint) in skeleton.joints.iter().enumerate() {
        match joint.parent {
            None => {
                positions.push(*root_position);
                world.push(local_rotations[j]);
            }
            Some(p) => {
                positions.push(positions[p] + world[p] * joint.offset);
                world.push(world[p] * local_rotations[j]);
            }
        }
    }
    Ok((positions, world))
}

/// World positions for every frame of a clip, as `[frame][joint]`.
pub fn motion_positions(skeleton: &Skeleton, motion: &RawMotion) -> Result<Vec<Vec<Vector3<f64>>>> {
    motion.check_layout(skeleton)?;
    let rotations = motion.local_rotations(skeleton);
    rotations
        .iter()
        .enumerate()
        .map(|(t, r)| forward_kinematics(skeleton, r, &motion.root_position(skeleton, t)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bvh::{Channel, Joint};
    use crate::rotation::{axis_rotation, Axis};
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn chain(n: usize) -> Skeleton {
        let joints = (0..n)
            .map(|i| Joint {
                name: format!("j{i}"),
                parent: i.checked_sub(1),
                offset: Vector3::new(1.0 + i as f64 * 0.1, 0.5, -0.25 * i as f64),
                channels: vec![
                    Channel::Rotation(Axis::Z),
                    Channel::Rotation(Axis::X),
                    Channel::Rotation(Axis::Y),
                ],
                end_site: None,
            })
            .collect();
        Skeleton::new(joints).unwrap()
    }

    #[test]
    fn identity_pose_accumulates_offsets() {
        let sk = chain(4);
        let root = Vector3::new(3.0, 2.0, 1.0);
        let p = forward_kinematics(&sk, &vec![Matrix3::identity(); 4], &root).unwrap();
        let mut acc = root;
        for j in 1..4 {
            acc += sk.joints[j].offset;
            assert_relative_eq!(p[j], acc, epsilon = 1e-12);
        }
    }

    #[test]
    fn rotated_root_moves_child() {
        let mut sk = chain(2);
        sk.joints[1].offset = Vector3::new(1.0, 0.0, 0.0);
        let root = Vector3::new(0.5, 0.0, 0.0);
        let rot = [axis_rotation(Axis::Z, std::f64::consts::FRAC_PI_2), Matrix3::identity()];
        let p = forward_kinematics(&sk, &rot, &root).unwrap();
        assert_relative_eq!(p[1], root + Vector3::new(0.0, 1.0, 0.0), epsilon = 1e-6);
    }

    #[test]
    fn matches_homogeneous_matrix_chain() {
        let sk = chain(6);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let rots: Vec<Matrix3<f64>> = (0..6)
                .map(|_| {
                    axis_rotation(Axis::Z, rng.random_range(-3.0..3.0))
                        * axis_rotation(Axis::X, rng.random_range(-3.0..3.0))
                        * axis_rotation(Axis::Y, rng.random_range(-3.0..3.0))
                })
                .collect();
            let root = Vector3::new(rng.random(), rng.random(), rng.random());
            let p = forward_kinematics(&sk, &rots, &root).unwrap();
            // 4x4 homogeneous chain: T_j = T_parent * [R_j | offset_j]
            for target in 0..6 {
                let mut m = nalgebra::Matrix4::<f64>::identity();
                for j in 0..=target {
                    let mut local = nalgebra::Matrix4::<f64>::identity();
                    local.fixed_view_mut::<3, 3>(0, 0).copy_from(&rots[j]);
                    let t = if j == 0 { root } else { sk.joints[j].offset };
                    local.fixed_view_mut::<3, 1>(0, 3).copy_from(&t);
                    m *= local;
                }
                let expected = Vector3::new(m[(0, 3)], m[(1, 3)], m[(2, 3)]);
                assert_relative_eq!(p[target], expected, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn shape_mismatch() {
        let sk = chain(3);
        assert!(forward_kinematics(&sk, &[Matrix3::identity()], &Vector3::zeros()).is_err());
    }
}
