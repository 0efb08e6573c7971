//! Joint hierarchies, poses and forward kinematics.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

use super::quat::Quat;

/// Largest deviation from unit norm accepted for input rotations.
pub const UNIT_TOLERANCE: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Channel {
    Xposition,
    Yposition,
    Zposition,
    Xrotation,
    Yrotation,
    Zrotation,
}

impl Channel {
    pub fn is_rotation(self) -> bool {
        matches!(self, Channel::Xrotation | Channel::Yrotation | Channel::Zrotation)
    }

    fn axis(self) -> usize {
        match self {
            Channel::Xposition | Channel::Xrotation => 0,
            Channel::Yposition | Channel::Yrotation => 1,
            Channel::Zposition | Channel::Zrotation => 2,
        }
    }
}

impl FromStr for Channel {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Ok(match s {
            "Xposition" => Channel::Xposition,
            "Yposition" => Channel::Yposition,
            "Zposition" => Channel::Zposition,
            "Xrotation" => Channel::Xrotation,
            "Yrotation" => Channel::Yrotation,
            "Zrotation" => Channel::Zrotation,
            other => return Err(format!("unknown channel `{other}`")),
        })
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Joint {
    pub name: String,
    pub parent: Option<usize>,
    /// Offset from the parent joint, in the file's length unit (centimeters for
    /// the common mocap corpora).
    pub offset: [f64; 3],
    pub channels: Vec<Channel>,
    /// `End Site` offset, kept so files round-trip.
    pub end_site: Option<[f64; 3]>,
}

/// Joints in topological order; joint 0 is the root.
#[derive(Clone, Debug, PartialEq)]
pub struct Skeleton {
    joints: Vec<Joint>,
}

/// Local rotations for every joint plus the root translation.
#[derive(Clone, Debug, PartialEq)]
pub struct Pose {
    pub root_translation: [f64; 3],
    pub rotations: Vec<Quat>,
}

/// Global joint positions and unit rotations with nonnegative scalar part.
#[derive(Clone, Debug, PartialEq)]
pub struct GlobalPose {
    pub positions: Vec<[f64; 3]>,
    pub rotations: Vec<Quat>,
}

impl Pose {
    pub fn identity(joints: usize) -> Self {
        Self { root_translation: [0.0; 3], rotations: vec![Quat::IDENTITY; joints] }
    }

    /// Feature vector in the joint-quaternion layout: the root translation
    /// at `[0, 3)`, then joint `j` as `(w, x, y, z)` at `[3 + 4j, 7 + 4j)`.
    pub fn to_features(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(3 + 4 * self.rotations.len());
        out.extend_from_slice(&self.root_translation);
        for q in &self.rotations {
            out.extend_from_slice(&q.to_array());
        }
        out
    }

    pub fn from_features(features: &[f64]) -> Result<Self> {
        if features.len() < 3 || !(features.len() - 3).is_multiple_of(4) {
            return Err(Error::invalid(format!(
                "{} features do not match the joint-quaternion layout (3 + 4·joints)",
                features.len()
            )));
        }
        let rotations = features[3..]
            .chunks_exact(4)
            .map(|c| Quat::new(c[0], c[1], c[2], c[3]))
            .collect();
        Ok(Self { root_translation: [features[0], features[1], features[2]], rotations })
    }
}

fn euler_to_quat(channels: &[Channel], values: &[f64]) -> Quat {
    const AXES: [[f64; 3]; 3] = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
    channels
        .iter()
        .zip(values)
        .filter(|(c, _)| c.is_rotation())
        .fold(Quat::IDENTITY, |acc, (c, v)| acc * Quat::from_axis_angle(AXES[c.axis()], v.to_radians()))
}

impl Skeleton {
    pub fn new(joints: Vec<Joint>) -> Result<Self> {
        if joints.is_empty() {
            return Err(Error::invalid("skeleton has no joints"));
        }
        if joints[0].parent.is_some() {
            return Err(Error::invalid("the root joint must not have a parent"));
        }
        for (i, j) in joints.iter().enumerate().skip(1) {
            match j.parent {
                Some(p) if p < i => {}
                _ => return Err(Error::invalid(format!("joint `{}` must follow its parent", j.name))),
            }
        }
        for j in &joints {
            let finite = j.offset.iter().chain(j.end_site.iter().flatten()).all(|v| v.is_finite());
            if !finite {
                return Err(Error::invalid(format!("joint `{}` has a non-finite offset", j.name)));
            }
        }
        Ok(Self { joints })
    }

    pub fn joints(&self) -> &[Joint] {
        &self.joints
    }

    pub fn len(&self) -> usize {
        self.joints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.joints.is_empty()
    }

    pub fn root(&self) -> usize {
        0
    }

    pub fn channel_count(&self) -> usize {
        self.joints.iter().map(|j| j.channels.len()).sum()
    }

    /// Indices into a channel vector that hold rotation angles.
    pub fn rotation_channel_indices(&self) -> Vec<usize> {
        self.joints
            .iter()
            .flat_map(|j| j.channels.iter())
            .enumerate()
            .filter(|(_, c)| c.is_rotation())
            .map(|(i, _)| i)
            .collect()
    }

    /// Interprets one row of BVH channel values (degrees for rotations).
    ///
    /// Rotation channels compose in listed order; root position channels
    /// become the root translation. Position channels on other joints are
    /// ignored because exporters store the static offset there.
    pub fn pose_from_channels(&self, values: &[f64]) -> Result<Pose> {
        if values.len() != self.channel_count() {
            return Err(Error::invalid(format!(
                "expected {} channel values, got {}",
                self.channel_count(),
                values.len()
            )));
        }
        let mut cursor = 0;
        let mut pose = Pose::identity(self.len());
        for (j, joint) in self.joints.iter().enumerate() {
            let vals = &values[cursor..cursor + joint.channels.len()];
            cursor += joint.channels.len();
            if j == 0 {
                for (c, v) in joint.channels.iter().zip(vals) {
                    if !c.is_rotation() {
                        pose.root_translation[c.axis()] = *v;
                    }
                }
            }
            pose.rotations[j] = euler_to_quat(&joint.channels, vals);
        }
        Ok(pose)
    }

    /// Global positions and rotations. The root's global pose is its offset
    /// plus translation with its local rotation; every child sits at its
    /// parent's position plus the parent's global rotation applied to the
    /// child offset.
    pub fn forward_kinematics(&self, pose: &Pose) -> Result<GlobalPose> {
        if pose.rotations.len() != self.len() {
            return Err(Error::invalid(format!(
                "pose has {} rotations for {} joints",
                pose.rotations.len(),
                self.len()
            )));
        }
        for (j, q) in pose.rotations.iter().enumerate() {
            let n = q.norm();
            if !n.is_finite() || (n - 1.0).abs() > UNIT_TOLERANCE {
                return Err(Error::invalid(format!(
                    "rotation of joint `{}` is not unit (norm {n})",
                    self.joints[j].name
                )));
            }
        }
        let mut positions = Vec::with_capacity(self.len());
        let mut rotations: Vec<Quat> = Vec::with_capacity(self.len());
        for (j, joint) in self.joints.iter().enumerate() {
            let local = pose.rotations[j].normalized();
            match joint.parent {
                None => {
                    let t = pose.root_translation;
                    positions.push([joint.offset[0] + t[0], joint.offset[1] + t[1], joint.offset[2] + t[2]]);
                    rotations.push(local);
                }
                Some(p) => {
                    let parent_rot = rotations[p];
                    let d = parent_rot.rotate(joint.offset);
                    let pp = positions[p];
                    positions.push([pp[0] + d[0], pp[1] + d[1], pp[2] + d[2]]);
                    rotations.push((parent_rot * local).normalized());
                }
            }
        }
        let rotations = rotations.into_iter().map(Quat::hemisphere_fixed).collect();
        Ok(GlobalPose { positions, rotations })
    }
}
