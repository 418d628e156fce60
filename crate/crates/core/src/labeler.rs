//! Multi-view labelling: pool confident detections, clean the cloud, fit the
//! model once and project its box back into every view.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{CameraModel, Frame, PointCloud, RigidTransform, TriangleMesh, Vec3};
use crate::physics::RestingSurface;
use crate::pipeline::EstimatedPose;
use crate::registration::{congruent_set_matching, MatchConfig};
use crate::render::{backproject_segment, project_bbox, BBox2D, DepthImage};
use crate::scene::SceneBundle;
use crate::search::per_object_pose;
use crate::spatial::KdTree;

const ICP_ITERATIONS: usize = 30;

/// One view's detection of an object.
#[derive(Clone, Copy, Debug)]
pub struct ViewDetection<'a> {
    pub bbox: BBox2D,
    pub confidence: f64,
    pub depth: &'a DepthImage,
    pub camera: &'a CameraModel,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LabelConfig {
    /// Views need a confidence strictly above this.
    pub threshold: f64,
    /// Neighbour rank used by the outlier filter.
    pub k: usize,
    /// A point is an outlier when its k-th neighbour is farther than this.
    pub radius: f64,
    /// Voxel edge of the downsampling grid.
    pub grid: f64,
    /// Points closer than this to the resting plane count as the table.
    pub plane_margin: f64,
    pub matching: MatchConfig,
}

impl Default for LabelConfig {
    fn default() -> Self {
        Self {
            threshold: 0.7,
            k: 4,
            radius: 0.01,
            grid: 0.004,
            plane_margin: 0.01,
            matching: MatchConfig {
                time_budget: 0.0,
                ..Default::default()
            },
        }
    }
}

/// World-frame union of the box backprojections of every confident view.
pub fn aggregate_multiview(detections: &[ViewDetection], threshold: f64) -> Result<PointCloud> {
    let confident: Vec<&ViewDetection> = detections.iter().filter(|d| d.confidence > threshold).collect();
    if confident.is_empty() {
        return Err(Error::NoConfidentView);
    }
    let mut points = Vec::new();
    for d in confident {
        // a confident box over missing depth simply adds nothing
        if let Ok(cloud) = backproject_segment(d.depth, &d.bbox, d.camera) {
            points.extend(cloud.points.iter().map(|p| d.camera.camera_to_world(p)));
        }
    }
    if points.is_empty() {
        return Err(Error::EmptySegment);
    }
    Ok(PointCloud::new(points, Frame::World))
}

/// Drops points off the surface or within `plane_margin` of it, then
/// isolated points, then keeps one centroid per `grid` voxel.
pub fn clean_cloud(cloud: &PointCloud, rs: &RestingSurface, k: usize, radius: f64, grid: f64, plane_margin: f64) -> Result<PointCloud> {
    if k == 0 {
        return Err(Error::parse("clean_cloud", "k must be at least 1"));
    }
    if !(grid > 0.0) {
        return Err(Error::parse("clean_cloud", "grid must be positive"));
    }
    let on_surface: Vec<Vec3> = cloud
        .points
        .iter()
        .copied()
        .filter(|p| rs.contains_xy(p) && rs.signed_distance(p) > plane_margin)
        .collect();
    let tree = KdTree::new(&on_surface);
    let r2 = radius * radius;
    let kept: Vec<Vec3> = on_surface
        .iter()
        .copied()
        .filter(|p| {
            // the query point itself comes back first
            let near = tree.k_nearest(p, k + 1);
            near.len() == k + 1 && near[k].1 <= r2
        })
        .collect();
    let mut cells: BTreeMap<[i64; 3], (Vec3, usize)> = BTreeMap::new();
    for p in &kept {
        let key = [(p.x / grid).floor() as i64, (p.y / grid).floor() as i64, (p.z / grid).floor() as i64];
        let e = cells.entry(key).or_insert((Vec3::zeros(), 0));
        e.0 += p;
        e.1 += 1;
    }
    if cells.is_empty() {
        return Err(Error::EmptyAfterFilter);
    }
    Ok(PointCloud::new(cells.into_values().map(|(s, n)| s / n as f64).collect(), cloud.frame))
}

/// Best-LCP pose of `mesh` in `cloud`, refined with trimmed ICP, and its box
/// in each camera. Cameras that cannot see the object get `None`.
pub fn estimate_and_label(cloud: &PointCloud, mesh: &TriangleMesh, cameras: &[CameraModel], cfg: &MatchConfig) -> Result<(RigidTransform, Vec<Option<BBox2D>>)> {
    if cloud.is_empty() {
        return Err(Error::EmptySegment);
    }
    let candidates = congruent_set_matching(mesh, cloud, cfg)?;
    let best = candidates.first().ok_or(Error::NoCongruentSets)?;
    let pose = per_object_pose(mesh, cloud, best, ICP_ITERATIONS);
    let labels = cameras.iter().map(|c| project_bbox(mesh, &pose, c).ok()).collect();
    Ok((pose, labels))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelSource {
    Projected,
}

/// One exported label.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Label {
    pub object: String,
    pub bbox: BBox2D,
    pub source: LabelSource,
}

/// Result of labelling a whole bundle.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LabelSet {
    pub poses: Vec<EstimatedPose>,
    /// Labels per view, in camera order.
    pub views: Vec<Vec<Label>>,
    /// Objects that could not be labelled, with the reason.
    pub skipped: Vec<(String, String)>,
}

/// The detections of `object` across all views of a bundle.
pub fn detections_of(bundle: &SceneBundle, object: usize) -> Vec<ViewDetection<'_>> {
    (0..bundle.cameras.len())
        .filter_map(|v| {
            let seg = bundle.segment_of(v, object)?;
            Some(ViewDetection {
                bbox: seg.bbox,
                confidence: seg.confidence,
                depth: &bundle.depth[v],
                camera: &bundle.cameras[v],
            })
        })
        .collect()
}

/// Aggregate, clean and fit one object from the given detections.
pub fn label_from(detections: &[ViewDetection], bundle: &SceneBundle, object: usize, cfg: &LabelConfig) -> Result<(RigidTransform, Vec<Option<BBox2D>>)> {
    let raw = aggregate_multiview(detections, cfg.threshold)?;
    let cloud = clean_cloud(&raw, &bundle.surface, cfg.k, cfg.radius, cfg.grid, cfg.plane_margin)?;
    estimate_and_label(&cloud, &bundle.objects[object].mesh, &bundle.cameras, &cfg.matching)
}

pub fn label_bundle(bundle: &SceneBundle, cfg: &LabelConfig) -> LabelSet {
    let mut out = LabelSet {
        views: vec![Vec::new(); bundle.cameras.len()],
        ..Default::default()
    };
    for (i, model) in bundle.objects.iter().enumerate() {
        match label_from(&detections_of(bundle, i), bundle, i, cfg) {
            Ok((pose, boxes)) => {
                out.poses.push(EstimatedPose {
                    index: i,
                    object: model.name.clone(),
                    pose,
                });
                for (view, bbox) in boxes.into_iter().enumerate() {
                    if let Some(bbox) = bbox {
                        out.views[view].push(Label {
                            object: model.name.clone(),
                            bbox,
                            source: LabelSource::Projected,
                        });
                    }
                }
            }
            Err(e) => out.skipped.push((model.name.clone(), e.to_string())),
        }
    }
    out
}
