//! Global joint position and rotation errors.

use crate::error::{Error, Result};
use crate::motion::{GlobalPose, Pose, Skeleton};

/// Mean global position error and mean global quaternion error per joint
/// per frame, as `(l2p, l2q)`.
///
/// Both pose lists go through forward kinematics. Each predicted quaternion
/// is sign-flipped to the truth's hemisphere before measuring.
pub fn l2p_l2q(skeleton: &Skeleton, pred: &[Pose], truth: &[Pose]) -> Result<(f64, f64)> {
    if pred.len() != truth.len() {
        return Err(Error::invalid(format!(
            "pose sequences differ in length: {} vs {}",
            pred.len(),
            truth.len()
        )));
    }
    if truth.is_empty() {
        return Err(Error::invalid("no poses to compare"));
    }
    let (mut pos, mut rot) = (0.0, 0.0);
    for (p, t) in pred.iter().zip(truth) {
        let gp = skeleton.forward_kinematics(p)?;
        let gt = skeleton.forward_kinematics(t)?;
        let (dp, dq) = frame_errors(&gp, &gt);
        pos += dp;
        rot += dq;
    }
    let n = (truth.len() * skeleton.len()) as f64;
    Ok((pos / n, rot / n))
}

pub fn l2p(skeleton: &Skeleton, pred: &[Pose], truth: &[Pose]) -> Result<f64> {
    Ok(l2p_l2q(skeleton, pred, truth)?.0)
}

pub fn l2q(skeleton: &Skeleton, pred: &[Pose], truth: &[Pose]) -> Result<f64> {
    Ok(l2p_l2q(skeleton, pred, truth)?.1)
}

fn frame_errors(pred: &GlobalPose, truth: &GlobalPose) -> (f64, f64) {
    let mut pos = 0.0;
    for (a, b) in pred.positions.iter().zip(&truth.positions) {
        pos += ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt();
    }
    let mut rot = 0.0;
    for (&a, &b) in pred.rotations.iter().zip(&truth.rotations) {
        let a = if a.dot(b) < 0.0 { -a } else { a };
        let (a, b) = (a.to_array(), b.to_array());
        rot += a.iter().zip(&b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    }
    (pos, rot)
}
