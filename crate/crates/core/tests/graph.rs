use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use scenepose_core::geometry::{CameraModel, PointCloud, RigidTransform, Vec3};
use scenepose_core::graph::{build_dependency_graph, DependencyGraph};
use scenepose_core::render::BBox2D;

fn camera() -> CameraModel {
    CameraModel::look_at(Vec3::new(0.0, -0.6, 0.6), Vec3::zeros(), Vec3::z(), (320, 240), 400.0).unwrap()
}

fn random_segments(rng: &mut ChaCha8Rng, n: usize) -> Vec<(PointCloud, BBox2D)> {
    (0..n)
        .map(|_| {
            let c = Vec3::new(rng.random_range(-0.1..0.1), rng.random_range(-0.1..0.1), rng.random_range(0.0..0.2));
            let pts = (0..30)
                .map(|_| c + Vec3::new(rng.random_range(-0.04..0.04), rng.random_range(-0.04..0.04), rng.random_range(-0.02..0.02)))
                .collect();
            let (x, y) = (rng.random_range(0..280), rng.random_range(0..200));
            let bbox = BBox2D::new(x, y, x + rng.random_range(5..40), y + rng.random_range(5..40));
            (PointCloud::world(pts), bbox)
        })
        .collect()
}

fn is_topological(g: &DependencyGraph) -> bool {
    let mut position = vec![usize::MAX; g.nodes];
    let mut seen = 0;
    for comp in &g.components {
        for (k, &v) in comp.iter().enumerate() {
            if position[v] != usize::MAX {
                return false;
            }
            position[v] = k;
            seen += 1;
        }
    }
    seen == g.nodes
        && g.edges.iter().all(|e| {
            g.component_of(e[0]) == g.component_of(e[1]) && position[e[0]] < position[e[1]]
        })
}

#[test]
fn random_sets_are_acyclic() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let cam = camera();
    for _ in 0..1000 {
        let n = rng.random_range(0..8);
        let segs = random_segments(&mut rng, n);
        let g = build_dependency_graph(&segs, &cam);
        assert_eq!(g.nodes, n);
        assert!(is_topological(&g), "{g:?}");
    }
}

#[test]
fn permutation_invariance() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let cam = camera();
    for _ in 0..200 {
        let n = rng.random_range(2..8);
        let segs = random_segments(&mut rng, n);
        let mut perm: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            perm.swap(i, rng.random_range(0..=i));
        }
        // permuted[k] = segs[perm[k]]
        let permuted: Vec<_> = perm.iter().map(|&i| segs[i].clone()).collect();
        let g = build_dependency_graph(&segs, &cam);
        let h = build_dependency_graph(&permuted, &cam);
        let mut mapped: Vec<[usize; 2]> = h.edges.iter().map(|e| [perm[e[0]], perm[e[1]]]).collect();
        mapped.sort_unstable();
        assert_eq!(mapped, g.edges);
        let partition = |g: &DependencyGraph, map: &dyn Fn(usize) -> usize| {
            let mut parts: Vec<Vec<usize>> = g
                .components
                .iter()
                .map(|c| {
                    let mut c: Vec<usize> = c.iter().map(|&v| map(v)).collect();
                    c.sort_unstable();
                    c
                })
                .collect();
            parts.sort();
            parts
        };
        assert_eq!(partition(&h, &|v| perm[v]), partition(&g, &|v| v));
    }
}

#[test]
fn no_edges_gives_singletons() {
    let g = DependencyGraph::from_edges(4, Vec::new()).unwrap();
    assert_eq!(g.components, vec![vec![0], vec![1], vec![2], vec![3]]);
    let cam = CameraModel::new(300.0, 300.0, 160.0, 120.0, 320, 240, RigidTransform::identity()).unwrap();
    assert_eq!(build_dependency_graph(&[], &cam), DependencyGraph::default());
}
