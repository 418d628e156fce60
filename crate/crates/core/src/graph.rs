//! Placement-order dependencies between detected objects.
//!
//! An edge `i → j` means object `i` has to be placed before object `j`:
//! either `j` sits above `i` with overlapping footprints (support), or the
//! two detections overlap in the image and `j` is farther from the camera
//! (occlusion).

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::geometry::{convex_hull_2d, convex_polygons_intersect, CameraModel, Frame, PointCloud, Vec2, Vec3};
use crate::render::BBox2D;

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DependencyGraph {
    #[serde(skip)]
    pub nodes: usize,
    pub edges: Vec<[usize; 2]>,
    /// Weakly connected components, each in topological order.
    pub components: Vec<Vec<usize>>,
}

impl DependencyGraph {
    /// Builds the graph from explicit edges; cycles must already be absent.
    pub fn from_edges(nodes: usize, mut edges: Vec<[usize; 2]>) -> Option<Self> {
        edges.sort_unstable();
        edges.dedup();
        let components = components(nodes, &edges)?;
        Some(Self { nodes, edges, components })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("graph serializes")
    }

    /// Component index containing `node`.
    pub fn component_of(&self, node: usize) -> Option<usize> {
        self.components.iter().position(|c| c.contains(&node))
    }
}

struct Candidate {
    edge: [usize; 2],
    gap: f64,
}

/// Builds the dependency graph over `segments` (one per object). Clouds may be
/// tagged camera or world; they are converted as each rule needs.
pub fn build_dependency_graph(segments: &[(PointCloud, BBox2D)], camera: &CameraModel) -> DependencyGraph {
    let n = segments.len();
    let mut world_centroid = Vec::with_capacity(n);
    let mut camera_depth = Vec::with_capacity(n);
    let mut hulls: Vec<Vec<Vec2>> = Vec::with_capacity(n);
    for (cloud, _) in segments {
        let (world, cam): (Vec<Vec3>, Vec<Vec3>) = match cloud.frame {
            Frame::World => (cloud.points.clone(), cloud.points.iter().map(|p| camera.world_to_camera(p)).collect()),
            _ => (cloud.points.iter().map(|p| camera.camera_to_world(p)).collect(), cloud.points.clone()),
        };
        world_centroid.push(PointCloud::world(world.clone()).centroid());
        camera_depth.push(PointCloud::world(cam).centroid().map(|c| c.z));
        hulls.push(convex_hull_2d(&world.iter().map(|p| Vec2::new(p.x, p.y)).collect::<Vec<_>>()));
    }
    let mut candidates: Vec<Candidate> = Vec::new();
    let mut push = |edge: [usize; 2], gap: f64| {
        if let Some(c) = candidates.iter_mut().find(|c| c.edge == edge) {
            c.gap = c.gap.max(gap);
        } else {
            candidates.push(Candidate { edge, gap });
        }
    };
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            if let (Some(ci), Some(cj)) = (world_centroid[i], world_centroid[j]) {
                if cj.z > ci.z && convex_polygons_intersect(&hulls[i], &hulls[j]) {
                    push([i, j], cj.z - ci.z);
                }
            }
            if let (Some(di), Some(dj)) = (camera_depth[i], camera_depth[j]) {
                if dj > di && segments[i].1.intersects(&segments[j].1) {
                    push([i, j], dj - di);
                }
            }
        }
    }
    break_cycles(n, &mut candidates);
    let edges = candidates.into_iter().map(|c| c.edge).collect();
    DependencyGraph::from_edges(n, edges).expect("cycles removed")
}

/// Repeatedly deletes the smallest-gap edge among all edges lying on a cycle.
/// An edge `u → v` lies on a cycle iff `u` is reachable from `v`; choosing
/// over every such edge keeps the result independent of node numbering.
fn break_cycles(n: usize, candidates: &mut Vec<Candidate>) {
    candidates.sort_by(|a, b| a.edge.cmp(&b.edge));
    loop {
        let mut adj = vec![Vec::new(); n];
        for c in candidates.iter() {
            adj[c.edge[0]].push(c.edge[1]);
        }
        let weakest = (0..candidates.len())
            .filter(|&i| reachable(&adj, candidates[i].edge[1], candidates[i].edge[0]))
            .min_by(|&a, &b| {
                candidates[a]
                    .gap
                    .total_cmp(&candidates[b].gap)
                    .then(candidates[a].edge.cmp(&candidates[b].edge))
            });
        match weakest {
            Some(i) => {
                candidates.remove(i);
            }
            None => return,
        }
    }
}

fn reachable(adj: &[Vec<usize>], from: usize, to: usize) -> bool {
    let mut seen = vec![false; adj.len()];
    let mut stack = vec![from];
    seen[from] = true;
    while let Some(v) = stack.pop() {
        if v == to {
            return true;
        }
        for &w in &adj[v] {
            if !seen[w] {
                seen[w] = true;
                stack.push(w);
            }
        }
    }
    false
}

/// Weakly connected components ordered by their smallest node, each listed in
/// topological order (smallest ready node first). `None` if cyclic.
fn components(n: usize, edges: &[[usize; 2]]) -> Option<Vec<Vec<usize>>> {
    let mut root: Vec<usize> = (0..n).collect();
    fn find(root: &mut [usize], x: usize) -> usize {
        let mut r = x;
        while root[r] != r {
            r = root[r];
        }
        let mut y = x;
        while root[y] != r {
            let next = root[y];
            root[y] = r;
            y = next;
        }
        r
    }
    for e in edges {
        let (a, b) = (find(&mut root, e[0]), find(&mut root, e[1]));
        if a != b {
            root[a.max(b)] = a.min(b);
        }
    }
    let mut indegree = vec![0usize; n];
    let mut adj = vec![Vec::new(); n];
    for e in edges {
        adj[e[0]].push(e[1]);
        indegree[e[1]] += 1;
    }
    let mut ready: BTreeSet<usize> = (0..n).filter(|&v| indegree[v] == 0).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(v) = ready.pop_first() {
        order.push(v);
        for &w in &adj[v] {
            indegree[w] -= 1;
            if indegree[w] == 0 {
                ready.insert(w);
            }
        }
    }
    if order.len() != n {
        return None;
    }
    let mut groups: Vec<(usize, Vec<usize>)> = Vec::new();
    for v in order {
        let r = find(&mut root, v);
        match groups.iter_mut().find(|g| g.0 == r) {
            Some(g) => g.1.push(v),
            None => groups.push((r, vec![v])),
        }
    }
    groups.sort_by_key(|g| g.0);
    Some(groups.into_iter().map(|g| g.1).collect())
}
