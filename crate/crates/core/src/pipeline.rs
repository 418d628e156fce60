//! Estimation on a scene bundle: detections → hypotheses → scene search.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::clustering::{cluster_scored, ClusterConfig};
use crate::error::{Error, Result};
use crate::evaluation::{pose_error, vsd_error, EvalItem, VSD_TAU};
use crate::geometry::{PointCloud, RigidTransform};
use crate::graph::{build_dependency_graph, DependencyGraph};
use crate::registration::{congruent_set_matching, MatchConfig, ScoredPose};
use crate::scene::SceneBundle;
use crate::search::{heuristic_estimate, mcts_estimate, per_object_pose, SearchConfig, SearchObject, SearchOutcome, SearchProblem};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    /// Reference view used for matching and scoring.
    pub view: usize,
    /// Points within this distance of the resting plane are dropped from segments.
    pub plane_margin: f64,
    pub matching: MatchConfig,
    pub clustering: ClusterConfig,
    pub search: SearchConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            view: 0,
            plane_margin: 0.01,
            // no wall-clock cap: hypotheses must not depend on machine load
            matching: MatchConfig {
                time_budget: 0.0,
                ..Default::default()
            },
            clustering: ClusterConfig::default(),
            search: SearchConfig::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Mcts,
    Heuristic,
    PerObject,
}

/// Hypotheses of one detected object.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectHypotheses {
    /// Index into the bundle's objects.
    pub index: usize,
    pub object: String,
    /// Every matching candidate, best LCP first.
    pub all: Vec<ScoredPose>,
    /// Cluster representatives, best LCP first.
    pub clustered: Vec<ScoredPose>,
}

impl ObjectHypotheses {
    /// Search candidates: the representatives, led by the overall best-LCP
    /// pose when clustering did not keep it.
    pub fn candidates(&self) -> Vec<ScoredPose> {
        let mut out = Vec::with_capacity(self.clustered.len() + 1);
        if let Some(top) = self.all.first() {
            if !self.clustered.contains(top) {
                out.push(top.clone());
            }
        }
        out.extend(self.clustered.iter().cloned());
        out
    }
}

/// World-frame points of the detection of `object` in the reference view.
pub fn detection_cloud(bundle: &SceneBundle, object: usize, cfg: &PipelineConfig) -> Result<PointCloud> {
    let seg = bundle.segment_of(cfg.view, object).ok_or(Error::EmptySegment)?;
    bundle.segment_cloud(cfg.view, seg, cfg.plane_margin)
}

pub fn hypothesize_object(bundle: &SceneBundle, object: usize, cfg: &PipelineConfig) -> Result<ObjectHypotheses> {
    let cloud = detection_cloud(bundle, object, cfg)?;
    let model = &bundle.objects[object];
    let all = congruent_set_matching(&model.mesh, &cloud, &cfg.matching)?;
    let clustered = cluster_scored(&all, &cfg.clustering, bundle.symmetry(object));
    Ok(ObjectHypotheses {
        index: object,
        object: model.name.clone(),
        all,
        clustered,
    })
}

/// Hypotheses for every object detected in the reference view. Objects
/// without a usable detection are skipped.
pub fn hypothesize(bundle: &SceneBundle, cfg: &PipelineConfig) -> Vec<ObjectHypotheses> {
    (0..bundle.objects.len()).filter_map(|i| hypothesize_object(bundle, i, cfg).ok()).collect()
}

/// Search input and dependency graph; graph nodes index `hyps`.
pub fn search_problem(bundle: &SceneBundle, hyps: &[ObjectHypotheses], cfg: &PipelineConfig) -> Result<(SearchProblem, DependencyGraph)> {
    let camera = bundle.cameras.get(cfg.view).ok_or_else(|| Error::parse("pipeline", format!("no view {}", cfg.view)))?;
    let mut objects = Vec::with_capacity(hyps.len());
    let mut segments = Vec::with_capacity(hyps.len());
    for h in hyps {
        let seg = bundle.segment_of(cfg.view, h.index).ok_or(Error::EmptySegment)?;
        let cloud = bundle.segment_cloud(cfg.view, seg, cfg.plane_margin)?;
        segments.push((cloud.clone(), seg.bbox));
        objects.push(SearchObject {
            id: h.index,
            mesh: bundle.objects[h.index].mesh.clone(),
            segment: cloud,
            hypotheses: h.candidates(),
        });
    }
    let graph = build_dependency_graph(&segments, camera);
    let problem = SearchProblem {
        objects,
        surface: bundle.surface.clone(),
        observed: bundle.depth[cfg.view].clone(),
        camera: camera.clone(),
    };
    Ok((problem, graph))
}

#[derive(Clone, Debug, Default)]
pub struct Estimate {
    /// Bundle object index → pose.
    pub poses: BTreeMap<usize, RigidTransform>,
    /// Present for the tree searches.
    pub search: Option<SearchOutcome>,
}

pub fn estimate(bundle: &SceneBundle, hyps: &[ObjectHypotheses], method: Method, cfg: &PipelineConfig) -> Result<Estimate> {
    if let Some(h) = hyps.iter().find(|h| h.clustered.is_empty() || h.all.is_empty()) {
        return Err(Error::EmptyHypotheses(h.index));
    }
    let (problem, graph) = search_problem(bundle, hyps, cfg)?;
    match method {
        Method::PerObject => {
            let poses = problem
                .objects
                .iter()
                .zip(hyps)
                .map(|(o, h)| (o.id, per_object_pose(&o.mesh, &o.segment, &h.all[0], cfg.search.icp_iterations)))
                .collect();
            Ok(Estimate { poses, search: None })
        }
        Method::Mcts | Method::Heuristic => {
            let outcome = if method == Method::Mcts {
                mcts_estimate(&problem, &graph, &cfg.search)?
            } else {
                heuristic_estimate(&problem, &graph, &cfg.search)?
            };
            Ok(Estimate {
                poses: outcome.poses.clone(),
                search: Some(outcome),
            })
        }
    }
}

/// One entry of an estimate file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimatedPose {
    pub index: usize,
    pub object: String,
    #[serde(flatten)]
    pub pose: RigidTransform,
}

pub fn estimated_poses(bundle: &SceneBundle, poses: &BTreeMap<usize, RigidTransform>) -> Vec<EstimatedPose> {
    poses
        .iter()
        .map(|(&index, pose)| EstimatedPose {
            index,
            object: bundle.objects[index].name.clone(),
            pose: *pose,
        })
        .collect()
}

/// Errors of the estimated objects against ground truth in the reference view.
pub fn evaluate(bundle: &SceneBundle, scene: &str, estimates: &[EstimatedPose], view: usize) -> Result<Vec<EvalItem>> {
    let camera = bundle.cameras.get(view).ok_or_else(|| Error::parse("evaluate", format!("no view {view}")))?;
    estimates
        .iter()
        .map(|e| {
            let model = bundle
                .objects
                .get(e.index)
                .ok_or_else(|| Error::parse("evaluate", format!("no object {}", e.index)))?;
            let gt = bundle.gt_poses[e.index];
            let err = pose_error(&e.pose, &gt, &model.mesh.symmetry);
            Ok(EvalItem {
                scene: scene.to_string(),
                object: model.name.clone(),
                rot_deg: err.rot,
                trans_cm: err.trans,
                vsd: vsd_error(&bundle.depth[view], &model.mesh, &e.pose, &gt, camera, VSD_TAU),
            })
        })
        .collect()
}
