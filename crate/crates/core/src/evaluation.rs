//! Pose error metrics and benchmark reports.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use nalgebra::{Quaternion, Unit, UnitQuaternion};
use serde::{Deserialize, Serialize};

use crate::geometry::{CameraModel, RigidTransform, SymmetryGroup, TriangleMesh};
use crate::render::{render_depth, DepthImage};

pub const SUCCESS_TRANS_CM: f64 = 5.0;
pub const SUCCESS_ROT_DEG: f64 = 15.0;
pub const VSD_TAU: f64 = 0.02;
pub const VSD_THETA: f64 = 0.3;
/// Rendered depth may exceed the observation by this much and still count as visible.
pub const OCCLUSION_TOLERANCE: f64 = 0.015;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoseError {
    /// Mean absolute roll/pitch/yaw of the residual rotation, degrees.
    pub rot: f64,
    /// Distance between centers, centimeters.
    pub trans: f64,
}

impl PoseError {
    pub fn is_success(&self) -> bool {
        self.trans < SUCCESS_TRANS_CM && self.rot < SUCCESS_ROT_DEG
    }
}

/// Mean |roll|, |pitch|, |yaw| (intrinsic z-y-x) of a rotation, degrees.
pub fn mean_abs_rpy(q: &UnitQuaternion<f64>) -> f64 {
    let (roll, pitch, yaw) = q.euler_angles();
    (roll.abs() + pitch.abs() + yaw.abs()).to_degrees() / 3.0
}

/// `a⁻¹ b`, written so that identical inputs give an exactly zero vector part.
fn relative(a: &UnitQuaternion<f64>, b: &UnitQuaternion<f64>) -> UnitQuaternion<f64> {
    let (wa, va) = (a.w, a.vector().into_owned());
    let (wb, vb) = (b.w, b.vector().into_owned());
    let w = wa * wb + va.dot(&vb);
    let v = vb * wa - va * wb - va.cross(&vb);
    UnitQuaternion::new_unchecked(Quaternion::from_parts(w, v))
}

/// Rotation error minimized over the symmetry group, translation error in cm.
///
/// For a revolution axis the spin is the one closest to `pred` in geodesic
/// angle; the reported value is that residual's mean absolute rpy.
pub fn pose_error(pred: &RigidTransform, gt: &RigidTransform, g: &SymmetryGroup) -> PoseError {
    let trans = (pred.translation() - gt.translation()).norm() * 100.0;
    if g.fully_symmetric() {
        return PoseError { rot: 0.0, trans };
    }
    let mut rot = f64::INFINITY;
    for s in g.discrete() {
        let target = *RigidTransform::from_rotation(gt.rotation() * s).rotation();
        let mut rel = relative(&target, pred.rotation());
        if let Some(axis) = g.continuous_axes().first() {
            let q = rel.quaternion();
            let half = axis.dot(&q.vector()).atan2(q.w);
            let spin = UnitQuaternion::from_axis_angle(&Unit::new_normalize(*axis), 2.0 * half);
            rel = spin.inverse() * rel;
        }
        rot = rot.min(mean_abs_rpy(&rel));
    }
    PoseError { rot, trans }
}

/// Fraction of results under 5 cm and 15°. Empty input gives 0.
pub fn success_rate(results: &[PoseError]) -> f64 {
    if results.is_empty() {
        return 0.0;
    }
    results.iter().filter(|r| r.is_success()).count() as f64 / results.len() as f64
}

fn visible(rendered: &DepthImage, observed: &DepthImage, i: usize) -> bool {
    let s = rendered.data[i];
    s > 0.0 && s <= observed.data[i] + OCCLUSION_TOLERANCE
}

/// Visible surface discrepancy over the union of the two visibility masks.
/// An empty union counts as a complete miss (1).
pub fn vsd_error(
    observed: &DepthImage,
    mesh: &TriangleMesh,
    pred: &RigidTransform,
    gt: &RigidTransform,
    camera: &CameraModel,
    tau: f64,
) -> f64 {
    let s = render_depth(&[(mesh, *pred)], camera);
    let s_gt = render_depth(&[(mesh, *gt)], camera);
    let mut union = 0usize;
    let mut bad = 0usize;
    for i in 0..s.data.len() {
        let (v, v_gt) = (visible(&s, observed, i), visible(&s_gt, observed, i));
        if !(v || v_gt) {
            continue;
        }
        union += 1;
        if !(v && v_gt && (s.data[i] - s_gt.data[i]).abs() < tau) {
            bad += 1;
        }
    }
    if union == 0 {
        1.0
    } else {
        bad as f64 / union as f64
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalItem {
    pub scene: String,
    pub object: String,
    pub rot_deg: f64,
    pub trans_cm: f64,
    pub vsd: f64,
}

impl EvalItem {
    pub fn error(&self) -> PoseError {
        PoseError {
            rot: self.rot_deg,
            trans: self.trans_cm,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectSummary {
    pub object: String,
    pub count: usize,
    pub mean_rot_deg: f64,
    pub mean_trans_cm: f64,
    pub success_rate: f64,
    pub vsd_recall: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub items: Vec<EvalItem>,
    pub per_object: Vec<ObjectSummary>,
    pub mean_rot_deg: f64,
    pub mean_trans_cm: f64,
    pub success_rate: f64,
    /// Fraction of items with VSD below the correctness threshold.
    pub vsd_recall: f64,
}

fn summarize(items: &[&EvalItem]) -> (f64, f64, f64, f64) {
    if items.is_empty() {
        return (0.0, 0.0, 0.0, 0.0);
    }
    let n = items.len() as f64;
    let errors: Vec<PoseError> = items.iter().map(|i| i.error()).collect();
    (
        items.iter().map(|i| i.rot_deg).sum::<f64>() / n,
        items.iter().map(|i| i.trans_cm).sum::<f64>() / n,
        success_rate(&errors),
        items.iter().filter(|i| i.vsd < VSD_THETA).count() as f64 / n,
    )
}

impl Report {
    pub fn new(items: Vec<EvalItem>) -> Self {
        let mut groups: BTreeMap<&str, Vec<&EvalItem>> = BTreeMap::new();
        for item in &items {
            groups.entry(item.object.as_str()).or_default().push(item);
        }
        let per_object = groups
            .iter()
            .map(|(name, list)| {
                let (rot, trans, success, vsd) = summarize(list);
                ObjectSummary {
                    object: name.to_string(),
                    count: list.len(),
                    mean_rot_deg: rot,
                    mean_trans_cm: trans,
                    success_rate: success,
                    vsd_recall: vsd,
                }
            })
            .collect();
        let all: Vec<&EvalItem> = items.iter().collect();
        let (mean_rot_deg, mean_trans_cm, success_rate, vsd_recall) = summarize(&all);
        Self {
            items,
            per_object,
            mean_rot_deg,
            mean_trans_cm,
            success_rate,
            vsd_recall,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Per-object table followed by an `all` row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("object,count,mean_rot_deg,mean_trans_cm,success_rate,vsd_recall\n");
        for o in &self.per_object {
            let _ = writeln!(
                out,
                "{},{},{:.4},{:.4},{:.4},{:.4}",
                o.object, o.count, o.mean_rot_deg, o.mean_trans_cm, o.success_rate, o.vsd_recall
            );
        }
        let _ = writeln!(
            out,
            "all,{},{:.4},{:.4},{:.4},{:.4}",
            self.items.len(),
            self.mean_rot_deg,
            self.mean_trans_cm,
            self.success_rate,
            self.vsd_recall
        );
        out
    }
}
