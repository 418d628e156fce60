//! Scene-level search over per-object pose hypotheses.
//!
//! Each dependency component gets its own tree. A node holds the poses of
//! the first `d` objects of the component (in dependency order); creating a
//! child places the next object from one of its hypotheses, refined with
//! trimmed ICP on the points not yet explained and then settled. Complete
//! scenes are scored by rendering them against the observed depth image.

use std::collections::{BTreeMap, HashMap, HashSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{geodesic_angle, CameraModel, PointCloud, RigidTransform, TriangleMesh, Vec3};
use crate::graph::DependencyGraph;
use crate::physics::{drop_body, settle_body, Body, RestingSurface, Shape};
use crate::registration::{trim_for_overlap, trimmed_icp_with_tree, ScoredPose, MODEL_SAMPLE_SEED};
use crate::render::{DepthImage, Rasterizer};
use crate::spatial::KdTree;

const ICP_SAMPLES: usize = 500;
const EXPLAIN_SAMPLES: usize = 1500;
const EXPLAIN_SAMPLE_SEED: u64 = 0x5eed_0002;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchConfig {
    /// Exploration constant of the UCB rule (scores are raw pixel counts).
    pub alpha: f64,
    /// Tree nodes created per component.
    pub max_expansions: usize,
    /// Depth agreement threshold of the render score, meters.
    pub epsilon: f64,
    /// Segment points this close to a placed object are considered explained.
    pub explain_radius: f64,
    pub icp_iterations: usize,
    /// A settle that turns the refined pose by more than this (degrees) is
    /// taken as missing support from an object not yet placed; the pose is
    /// then only dropped to contact.
    pub max_settle_turn_deg: f64,
    /// Rollouts enumerate unevaluated completions in order instead of sampling.
    pub exhaustive: bool,
    pub seed: u64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            alpha: 5000.0,
            max_expansions: 250,
            epsilon: 0.005,
            explain_radius: 0.008,
            icp_iterations: 30,
            max_settle_turn_deg: 15.0,
            exhaustive: false,
            seed: 0,
        }
    }
}

/// Number of pixels with valid depth in both images that agree within `epsilon`.
pub fn scene_score(observed: &DepthImage, rendered: &DepthImage, epsilon: f64) -> Result<u64> {
    observed.same_shape(rendered)?;
    Ok(observed
        .data
        .iter()
        .zip(&rendered.data)
        .filter(|(o, r)| **o > 0.0 && **r > 0.0 && (**o - **r).abs() < epsilon)
        .count() as u64)
}

/// `h / n + α · sqrt(2 ln n_parent / n)`.
pub fn ucb_value(total: f64, visits: u64, parent_visits: u64, alpha: f64) -> f64 {
    if visits == 0 {
        return f64::INFINITY;
    }
    let n = visits as f64;
    total / n + alpha * (2.0 * (parent_visits.max(1) as f64).ln() / n).sqrt()
}

/// Points of `segment` farther than `radius` from every point of `explained`.
pub fn prune_explained(segment: &PointCloud, explained: &[Vec3], radius: f64) -> PointCloud {
    if explained.is_empty() {
        return segment.clone();
    }
    let tree = KdTree::new(explained);
    PointCloud::new(
        segment.points.iter().filter(|p| !tree.any_within(p, radius)).copied().collect(),
        segment.frame,
    )
}

/// One object to be placed: its model, its world-frame segment and its
/// (clustered) hypotheses in stored order.
#[derive(Clone, Debug)]
pub struct SearchObject {
    pub id: usize,
    pub mesh: TriangleMesh,
    pub segment: PointCloud,
    pub hypotheses: Vec<ScoredPose>,
}

#[derive(Clone, Debug)]
pub struct SearchProblem {
    pub objects: Vec<SearchObject>,
    pub surface: RestingSurface,
    pub observed: DepthImage,
    pub camera: CameraModel,
}

/// Per-object data reused by every expansion.
struct Prepared {
    shape: Shape,
    icp_sample: Vec<Vec3>,
    explain_sample: Vec<Vec3>,
}

impl Prepared {
    fn new(mesh: &TriangleMesh) -> Self {
        Self {
            shape: Shape::for_settling(mesh),
            icp_sample: mesh.sample_surface(ICP_SAMPLES, MODEL_SAMPLE_SEED, false),
            explain_sample: mesh.sample_surface(EXPLAIN_SAMPLES, EXPLAIN_SAMPLE_SEED, true),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counters {
    /// Tree nodes created.
    pub expansions: usize,
    /// Placements computed (tree and rollout), each one ICP attempt and one settle.
    pub placements: usize,
    pub icp_calls: usize,
    /// Placements whose pruned segment was empty, so ICP was skipped.
    pub icp_skipped: usize,
    pub settle_calls: usize,
    pub rollouts: usize,
}

/// A node of the search tree.
#[derive(Clone, Debug)]
pub struct SceneState {
    /// `(object id, pose)` for the first `depth` objects of the component.
    pub placements: Vec<(usize, RigidTransform)>,
    /// Hypothesis index chosen at each level.
    pub path: Vec<usize>,
    pub visits: u64,
    pub total: f64,
    /// Child `k` was created from hypothesis `k`.
    pub children: Vec<usize>,
    pub parent: Option<usize>,
    /// Some placement on the way here had nothing left to register against.
    pub empty_segment: bool,
    /// No unexplored completion remains below this node.
    pub exhausted: bool,
}

impl SceneState {
    pub fn depth(&self) -> usize {
        self.placements.len()
    }

    pub fn mean(&self) -> f64 {
        if self.visits == 0 {
            0.0
        } else {
            self.total / self.visits as f64
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iter: usize,
    pub component: usize,
    pub depth_reached: usize,
    pub rollout_score: f64,
    pub best_score: f64,
}

fn position_of(problem: &SearchProblem, id: usize) -> usize {
    problem.objects.iter().position(|o| o.id == id).expect("placed object belongs to the problem")
}

/// Prunes the segment of `problem.objects[pos]` by the placed objects,
/// refines hypothesis `hyp` with trimmed ICP on what is left and settles it.
/// The flag is set when nothing was left to register against.
fn place_next(
    problem: &SearchProblem,
    prepared: &[Prepared],
    placements: &[(usize, RigidTransform)],
    pos: usize,
    hyp: usize,
    cfg: &SearchConfig,
    counters: &mut Counters,
) -> (RigidTransform, bool) {
    let obj = &problem.objects[pos];
    let hyp = &obj.hypotheses[hyp];
    let placed: Vec<(usize, RigidTransform)> = placements.iter().map(|(id, pose)| (position_of(problem, *id), *pose)).collect();
    let explained: Vec<Vec3> = placed
        .iter()
        .flat_map(|(p, pose)| prepared[*p].explain_sample.iter().map(move |x| pose.apply(x)))
        .collect();
    let pruned = prune_explained(&obj.segment, &explained, cfg.explain_radius);
    let prep = &prepared[pos];
    let mut empty = false;
    let mut pose = hyp.pose;
    counters.placements += 1;
    if pruned.len() < 3 {
        empty = true;
        counters.icp_skipped += 1;
    } else {
        let tree = KdTree::new(&pruned.points);
        pose = trimmed_icp_with_tree(&prep.icp_sample, &tree, pose, trim_for_overlap(hyp.lcp), cfg.icp_iterations).pose;
        counters.icp_calls += 1;
    }
    let bodies: Vec<Body> = placed.iter().map(|(p, pose)| Body::new(&prepared[*p].shape, pose)).collect();
    counters.settle_calls += 1;
    let settled = match settle_body(&bodies, &prep.shape, pose, &problem.surface) {
        Ok(p) => p,
        Err(Error::NoSupport { projected }) => projected,
        Err(_) => pose,
    };
    pose = if geodesic_angle(settled.rotation(), pose.rotation()).to_degrees() > cfg.max_settle_turn_deg {
        drop_body(&bodies, &prep.shape, pose, &problem.surface)
    } else {
        settled
    };
    (pose, empty)
}

/// Places `problem.objects[order[d]]` with hypothesis `path[d]` for each level
/// in turn, without caching. Returns `(object id, pose)` per level.
pub fn place_sequence(problem: &SearchProblem, order: &[usize], path: &[usize], cfg: &SearchConfig) -> Vec<(usize, RigidTransform)> {
    let prepared: Vec<Prepared> = problem.objects.iter().map(|o| Prepared::new(&o.mesh)).collect();
    let mut counters = Counters::default();
    let mut placements = Vec::new();
    for (&pos, &h) in order.iter().zip(path) {
        let (pose, _) = place_next(problem, &prepared, &placements, pos, h, cfg, &mut counters);
        placements.push((problem.objects[pos].id, pose));
    }
    placements
}

/// Search tree of one dependency component.
pub struct SearchTree<'p> {
    problem: &'p SearchProblem,
    prepared: Vec<Prepared>,
    policy: Policy,
    iter: usize,
    /// Positions in `problem.objects`, in placement order.
    order: Vec<usize>,
    pub nodes: Vec<SceneState>,
    pub counters: Counters,
    cfg: SearchConfig,
    component: usize,
    cache: HashMap<Vec<usize>, (RigidTransform, bool)>,
    evaluated: HashSet<Vec<usize>>,
    rng: ChaCha8Rng,
    best: Option<(f64, Vec<(usize, RigidTransform)>)>,
    table: TriangleMesh,
}

impl<'p> SearchTree<'p> {
    /// Tree over `problem.objects[order[0]], problem.objects[order[1]], ...`.
    pub fn new(problem: &'p SearchProblem, order: Vec<usize>, cfg: &SearchConfig, component: usize) -> Result<Self> {
        for &pos in &order {
            let obj = problem
                .objects
                .get(pos)
                .ok_or_else(|| Error::parse("search", format!("no object at position {pos}")))?;
            if obj.hypotheses.is_empty() {
                return Err(Error::EmptyHypotheses(obj.id));
            }
        }
        let root = SceneState {
            placements: Vec::new(),
            path: Vec::new(),
            visits: 0,
            total: 0.0,
            children: Vec::new(),
            parent: None,
            empty_segment: false,
            exhausted: order.is_empty(),
        };
        Ok(Self {
            problem,
            prepared: problem.objects.iter().map(|o| Prepared::new(&o.mesh)).collect(),
            policy: Policy::Ucb,
            iter: 0,
            order,
            nodes: vec![root],
            counters: Counters::default(),
            cfg: cfg.clone(),
            component,
            cache: HashMap::new(),
            evaluated: HashSet::new(),
            rng: ChaCha8Rng::seed_from_u64(cfg.seed ^ (component as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15)),
            best: None,
            table: problem.surface.mesh(),
        })
    }

    pub fn with_policy(mut self, policy: Policy) -> Self {
        self.policy = policy;
        self
    }

    pub fn levels(&self) -> usize {
        self.order.len()
    }

    fn hypothesis_count(&self, depth: usize) -> usize {
        self.problem.objects[self.order[depth]].hypotheses.len()
    }

    /// Pose of the object at level `path.len() - 1` given the placements before it.
    fn place(&mut self, placements: &[(usize, RigidTransform)], path: &[usize]) -> (RigidTransform, bool) {
        if let Some(hit) = self.cache.get(path) {
            return *hit;
        }
        let level = path.len() - 1;
        let hit = place_next(self.problem, &self.prepared, placements, self.order[level], path[level], &self.cfg, &mut self.counters);
        self.cache.insert(path.to_vec(), hit);
        hit
    }

    /// Creates the child of `parent` for hypothesis `hyp` of the next object.
    pub fn expand_state(&mut self, parent: usize, hyp: usize) -> Result<usize> {
        let depth = self.nodes[parent].depth();
        if depth >= self.levels() {
            return Err(Error::MaxDepth);
        }
        let mut path = self.nodes[parent].path.clone();
        path.push(hyp);
        let placements = self.nodes[parent].placements.clone();
        let (pose, empty) = self.place(&placements, &path);
        let mut child_placements = placements;
        child_placements.push((self.problem.objects[self.order[depth]].id, pose));
        let terminal = child_placements.len() == self.levels();
        let id = self.nodes.len();
        self.nodes.push(SceneState {
            placements: child_placements,
            path,
            visits: 0,
            total: 0.0,
            children: Vec::new(),
            parent: Some(parent),
            empty_segment: empty || self.nodes[parent].empty_segment,
            exhausted: terminal,
        });
        self.nodes[parent].children.push(id);
        self.counters.expansions += 1;
        self.refresh_exhausted(parent);
        Ok(id)
    }

    fn refresh_exhausted(&mut self, mut node: usize) {
        loop {
            let depth = self.nodes[node].depth();
            let n = &self.nodes[node];
            let done = depth < self.levels()
                && n.children.len() == self.hypothesis_count(depth)
                && n.children.iter().all(|&c| self.nodes[c].exhausted);
            if !done {
                return;
            }
            self.nodes[node].exhausted = true;
            match self.nodes[node].parent {
                Some(p) => node = p,
                None => return,
            }
        }
    }

    /// Child maximizing the UCB value among non-exhausted children; lowest index on ties.
    pub fn ucb_child(&self, node: usize) -> Option<usize> {
        let parent_visits = self.nodes[node].visits;
        let mut best: Option<(usize, f64)> = None;
        for &c in &self.nodes[node].children {
            let n = &self.nodes[c];
            if n.exhausted {
                continue;
            }
            let v = ucb_value(n.total, n.visits, parent_visits, self.cfg.alpha);
            if best.is_none_or(|(_, b)| v > b) {
                best = Some((c, v));
            }
        }
        best.map(|b| b.0)
    }

    /// Walks down by UCB, expanding the first node with an untried hypothesis.
    /// Returns the new node, or a terminal / exhausted node if nothing is left.
    pub fn select_ucb(&mut self) -> Result<usize> {
        let mut node = 0;
        loop {
            let depth = self.nodes[node].depth();
            if depth == self.levels() {
                return Ok(node);
            }
            let tried = self.nodes[node].children.len();
            if tried < self.hypothesis_count(depth) {
                return self.expand_state(node, tried);
            }
            match self.ucb_child(node) {
                Some(c) => node = c,
                None => return Ok(node),
            }
        }
    }

    /// Deepest-first selection ordered by stored hypothesis order (LCP).
    fn select_depth_first(&mut self) -> Result<usize> {
        let mut node = 0;
        loop {
            let depth = self.nodes[node].depth();
            if depth == self.levels() {
                return Ok(node);
            }
            if let Some(&c) = self.nodes[node].children.iter().find(|&&c| !self.nodes[c].exhausted) {
                node = c;
                continue;
            }
            let tried = self.nodes[node].children.len();
            if tried < self.hypothesis_count(depth) {
                node = self.expand_state(node, tried)?;
            } else {
                return Ok(node);
            }
        }
    }

    /// Completes the scene below `node` (random hypotheses, or the first
    /// unevaluated completion in exhaustive mode) and scores it.
    pub fn random_rollout(&mut self, node: usize) -> Result<(Vec<(usize, RigidTransform)>, f64)> {
        self.counters.rollouts += 1;
        let mut path = self.nodes[node].path.clone();
        let mut placements = self.nodes[node].placements.clone();
        let suffix = if self.cfg.exhaustive {
            self.first_unevaluated(&path)
        } else {
            (path.len()..self.levels())
                .map(|d| self.rng.random_range(0..self.hypothesis_count(d)))
                .collect()
        };
        for (d, h) in (path.len()..self.levels()).zip(suffix) {
            path.push(h);
            let (pose, _) = self.place(&placements, &path);
            placements.push((self.problem.objects[self.order[d]].id, pose));
        }
        self.evaluated.insert(path);
        let score = self.score(&placements)?;
        if self.best.as_ref().is_none_or(|(b, _)| score > *b) {
            self.best = Some((score, placements.clone()));
        }
        Ok((placements, score))
    }

    /// Lexicographically first completion of `prefix` not yet scored (all
    /// zeros if every completion has been scored).
    fn first_unevaluated(&self, prefix: &[usize]) -> Vec<usize> {
        let levels: Vec<usize> = (prefix.len()..self.levels()).map(|d| self.hypothesis_count(d)).collect();
        let mut suffix = vec![0; levels.len()];
        loop {
            let mut full = prefix.to_vec();
            full.extend(&suffix);
            if !self.evaluated.contains(&full) {
                return suffix;
            }
            // odometer increment
            let mut k = suffix.len();
            loop {
                if k == 0 {
                    return vec![0; levels.len()];
                }
                k -= 1;
                suffix[k] += 1;
                if suffix[k] < levels[k] {
                    break;
                }
                suffix[k] = 0;
            }
        }
    }

    fn score(&self, placements: &[(usize, RigidTransform)]) -> Result<f64> {
        let mut r = Rasterizer::new(&self.problem.camera);
        for (i, (id, pose)) in placements.iter().enumerate() {
            r.draw(&self.problem.objects[position_of(self.problem, *id)].mesh, pose, i as i32);
        }
        r.draw(&self.table, &self.problem.surface.pose, -1);
        Ok(scene_score(&self.problem.observed, &r.finish(), self.cfg.epsilon)? as f64)
    }

    /// Adds one visit and `score` to every node from `node` up to the root.
    pub fn backup_reward(&mut self, node: usize, score: f64) {
        let mut cur = Some(node);
        while let Some(n) = cur {
            self.nodes[n].visits += 1;
            self.nodes[n].total += score;
            cur = self.nodes[n].parent;
        }
    }

    pub fn best(&self) -> Option<&(f64, Vec<(usize, RigidTransform)>)> {
        self.best.as_ref()
    }

    fn completions(&self) -> usize {
        (0..self.levels()).map(|d| self.hypothesis_count(d)).product()
    }

    /// Whether the budget is spent or nothing is left to explore.
    pub fn finished(&self) -> bool {
        self.counters.expansions >= self.cfg.max_expansions
            || self.nodes[0].exhausted
            || (self.cfg.exhaustive && self.evaluated.len() >= self.completions())
    }

    /// One iteration: select (expanding one node), roll out, update the best
    /// scene and back up. `None` once [`finished`](Self::finished).
    pub fn step(&mut self) -> Result<Option<TraceRecord>> {
        if self.finished() {
            return Ok(None);
        }
        let node = match self.policy {
            Policy::Ucb => self.select_ucb()?,
            Policy::DepthFirst => self.select_depth_first()?,
        };
        let (_, score) = self.random_rollout(node)?;
        self.backup_reward(node, score);
        let record = TraceRecord {
            iter: self.iter,
            component: self.component,
            depth_reached: self.nodes[node].depth(),
            rollout_score: score,
            best_score: self.best.as_ref().map_or(0.0, |b| b.0),
        };
        self.iter += 1;
        Ok(Some(record))
    }
}

/// Selection rule of a [`SearchTree`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Policy {
    /// Upper confidence bound descent.
    Ucb,
    /// Deepest unexplored node first, hypotheses in stored (LCP) order.
    DepthFirst,
}

#[derive(Clone, Debug, Default)]
pub struct SearchOutcome {
    /// Object id → estimated pose.
    pub poses: BTreeMap<usize, RigidTransform>,
    /// Best render score per component.
    pub best_scores: Vec<f64>,
    pub counters: Vec<Counters>,
    pub trace: Vec<TraceRecord>,
}

fn check_hypotheses(problem: &SearchProblem) -> Result<()> {
    match problem.objects.iter().find(|o| o.hypotheses.is_empty()) {
        Some(o) => Err(Error::EmptyHypotheses(o.id)),
        None => Ok(()),
    }
}

fn search(problem: &SearchProblem, graph: &DependencyGraph, cfg: &SearchConfig, policy: Policy) -> Result<SearchOutcome> {
    check_hypotheses(problem)?;
    let mut out = SearchOutcome::default();
    for (c, component) in graph.components.iter().enumerate() {
        let mut tree = SearchTree::new(problem, component.clone(), cfg, c)?.with_policy(policy);
        while let Some(record) = tree.step()? {
            out.trace.push(record);
        }
        let (score, placements) = tree.best.clone().unwrap_or((0.0, Vec::new()));
        out.poses.extend(placements);
        out.best_scores.push(score);
        out.counters.push(tree.counters);
    }
    Ok(out)
}

/// Runs one UCB tree per dependency component (graph nodes index
/// `problem.objects`) and merges the best complete scene of each.
pub fn mcts_estimate(problem: &SearchProblem, graph: &DependencyGraph, cfg: &SearchConfig) -> Result<SearchOutcome> {
    search(problem, graph, cfg, Policy::Ucb)
}

/// Baseline: depth-first descent taking hypotheses in LCP order.
pub fn heuristic_estimate(problem: &SearchProblem, graph: &DependencyGraph, cfg: &SearchConfig) -> Result<SearchOutcome> {
    search(problem, graph, cfg, Policy::DepthFirst)
}

/// Baseline: the best-LCP hypothesis of each object polished by trimmed ICP
/// against its whole segment, with no scene reasoning.
pub fn per_object_pose(mesh: &TriangleMesh, segment: &PointCloud, best: &ScoredPose, icp_iterations: usize) -> RigidTransform {
    if segment.len() < 3 {
        return best.pose;
    }
    let sample = mesh.sample_surface(ICP_SAMPLES, MODEL_SAMPLE_SEED, false);
    let tree = KdTree::new(&segment.points);
    trimmed_icp_with_tree(&sample, &tree, best.pose, trim_for_overlap(best.lcp), icp_iterations).pose
}

/// Render score of an explicit set of placements (ground-truth checks, brute force).
pub fn placement_score(problem: &SearchProblem, placements: &[(usize, RigidTransform)], epsilon: f64) -> Result<u64> {
    let table = problem.surface.mesh();
    let mut r = Rasterizer::new(&problem.camera);
    for (i, (id, pose)) in placements.iter().enumerate() {
        let obj = problem
            .objects
            .iter()
            .find(|o| o.id == *id)
            .ok_or_else(|| Error::parse("search", format!("unknown object {id}")))?;
        r.draw(&obj.mesh, pose, i as i32);
    }
    r.draw(&table, &problem.surface.pose, -1);
    scene_score(&problem.observed, &r.finish(), epsilon)
}
