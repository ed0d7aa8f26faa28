use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::bvh::Skeleton;
use crate::motion::{Q, ROOT_CHANNELS};

/// Channel groups of a skeleton-aware layer and which groups each group
/// reads from. Groups `0..joints` are joints; the last group holds the
/// contact and root channels and is attached to the root joint.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkeletonNeighborhoods {
    pub joints: usize,
    pub distance: usize,
    /// Sorted member groups for each of the `joints + 1` groups.
    pub groups: Vec<Vec<usize>>,
}

impl SkeletonNeighborhoods {
    pub fn group_count(&self) -> usize {
        self.groups.len()
    }

    /// Index of the contact/root group.
    pub fn global_group(&self) -> usize {
        self.joints
    }

    pub fn contains(&self, group: usize, member: usize) -> bool {
        self.groups[group].binary_search(&member).is_ok()
    }
}

/// Joints within tree distance `distance` of each joint (breadth-first over
/// the undirected kinematic tree), plus the contact/root group, which shares
/// the root joint's neighborhood.
pub fn build_neighborhoods(skeleton: &Skeleton, distance: usize) -> SkeletonNeighborhoods {
    let n = skeleton.joint_count();
    let mut adjacency = vec![Vec::new(); n];
    for (j, joint) in skeleton.joints.iter().enumerate() {
        if let Some(p) = joint.parent {
            adjacency[j].push(p);
            adjacency[p].push(j);
        }
    }
    let mut groups: Vec<Vec<usize>> = (0..n)
        .map(|start| {
            let mut depth = vec![usize::MAX; n];
            depth[start] = 0;
            let mut queue = VecDeque::from([start]);
            while let Some(j) = queue.pop_front() {
                if depth[j] == distance {
                    continue;
                }
                for &k in &adjacency[j] {
                    if depth[k] == usize::MAX {
                        depth[k] = depth[j] + 1;
                        queue.push_back(k);
                    }
                }
            }
            (0..n).filter(|&k| depth[k] != usize::MAX).collect()
        })
        .collect();
    let global = n;
    let mut global_members = groups[0].clone();
    for &j in &global_members {
        groups[j].push(global);
    }
    global_members.push(global);
    groups.push(global_members);
    SkeletonNeighborhoods {
        joints: n,
        distance,
        groups,
    }
}

/// Channel counts per group for the motion features: 6 per joint, then the
/// contact and root channels in the last group.
pub fn motion_group_sizes(joints: usize, contacts: usize) -> Vec<usize> {
    let mut sizes = vec![Q; joints];
    sizes.push(contacts + ROOT_CHANNELS);
    sizes
}
