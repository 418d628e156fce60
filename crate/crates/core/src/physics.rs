//! Quasi-static settling under gravity (world −z) on a planar resting surface.
//!
//! Bodies are treated as convex solids bounded by their mesh face planes.
//! Settling an object is a fixpoint procedure: push it out of anything it
//! penetrates, drop it until first contact, then tip it about the nearest
//! edge of its support polygon until its center of mass is supported.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{convex_hull_2d, hull_signed_distance, Plane, RigidTransform, TriangleMesh, Vec2, Vec3};

/// Surface samples per mesh for penetration queries.
pub const PENETRATION_SAMPLES: usize = 2000;
const SETTLE_SAMPLES: usize = 500;
const SAMPLE_SEED: u64 = 0x5e77_1e00;
const EDGE_SPACING: f64 = 0.005;
const COLLISION_TOLERANCE: f64 = 2e-5;
const CONTACT_TOLERANCE: f64 = 5e-4;
const DROP_RESOLUTION: f64 = 1e-4;
const MARCH_STEP: f64 = 0.004;
/// Allowed distance of the gravity line outside the support polygon.
pub const STABILITY_MARGIN: f64 = 1e-3;
const TILT_STEP: f64 = std::f64::consts::PI / 180.0;
/// Rotation allowed about one pivot before giving up.
const MAX_TILT_PER_PIVOT: f64 = std::f64::consts::FRAC_PI_2;
const MAX_TILT_STEPS: usize = 400;
const SLIDE_STEP: f64 = 0.002;
const DEPENETRATION_ROUNDS: usize = 30;

/// Finite horizontal plane; `pose` maps the surface frame (surface at z = 0,
/// normal +z) into the world.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RestingSurface {
    pub pose: RigidTransform,
    /// Half side lengths along the surface x and y axes, meters.
    pub half_extents: [f64; 2],
}

impl RestingSurface {
    pub fn new(pose: RigidTransform, half_extents: [f64; 2]) -> Result<Self> {
        let rs = Self { pose, half_extents };
        let tilt = rs.normal().z.clamp(-1.0, 1.0).acos();
        if tilt > 1f64.to_radians() {
            return Err(Error::InvalidMesh(format!(
                "resting surface normal is {:.2} degrees off vertical",
                tilt.to_degrees()
            )));
        }
        if !(half_extents[0] > 0.0 && half_extents[1] > 0.0) {
            return Err(Error::InvalidMesh("resting surface extents must be positive".into()));
        }
        Ok(rs)
    }

    pub fn horizontal(height: f64, half_x: f64, half_y: f64) -> Self {
        Self {
            pose: RigidTransform::from_translation(Vec3::new(0.0, 0.0, height)),
            half_extents: [half_x, half_y],
        }
    }

    pub fn normal(&self) -> Vec3 {
        self.pose.apply_vector(&Vec3::z())
    }

    pub fn plane(&self) -> Plane {
        let normal = self.normal();
        Plane {
            normal,
            offset: normal.dot(self.pose.translation()),
        }
    }

    /// Height of `p` above the surface plane.
    pub fn signed_distance(&self, p: &Vec3) -> f64 {
        self.plane().signed_distance(p)
    }

    pub fn contains_xy(&self, p: &Vec3) -> bool {
        let local = self.pose.inverse().apply(p);
        local.x.abs() <= self.half_extents[0] && local.y.abs() <= self.half_extents[1]
    }

    /// `p` moved inside the bounds, keeping its height above the plane.
    pub fn clamp_xy(&self, p: &Vec3) -> Vec3 {
        let local = self.pose.inverse().apply(p);
        let clamped = Vec3::new(
            local.x.clamp(-self.half_extents[0], self.half_extents[0]),
            local.y.clamp(-self.half_extents[1], self.half_extents[1]),
            local.z,
        );
        self.pose.apply(&clamped)
    }

    /// Two-triangle top face, in the surface frame (render with `pose`).
    pub fn mesh(&self) -> TriangleMesh {
        let [hx, hy] = self.half_extents;
        TriangleMesh {
            vertices: vec![
                Vec3::new(-hx, -hy, 0.0),
                Vec3::new(hx, -hy, 0.0),
                Vec3::new(hx, hy, 0.0),
                Vec3::new(-hx, hy, 0.0),
            ],
            triangles: vec![[0, 1, 2], [0, 2, 3]],
            symmetry: Default::default(),
        }
    }
}

/// Model-frame collision proxy of a convex mesh.
#[derive(Clone, Debug)]
pub struct Shape {
    planes: Vec<Plane>,
    /// Vertices, edge samples, surface samples and the center of mass.
    surface: Vec<Vec3>,
    /// Surface samples pulled toward the center of mass.
    interior: Vec<Vec3>,
    com: Vec3,
    radius: f64,
}

impl Shape {
    pub fn new(mesh: &TriangleMesh) -> Self {
        Self::with_samples(mesh, PENETRATION_SAMPLES)
    }

    /// Lighter proxy used while settling.
    pub fn for_settling(mesh: &TriangleMesh) -> Self {
        Self::with_samples(mesh, SETTLE_SAMPLES)
    }

    pub fn with_samples(mesh: &TriangleMesh, count: usize) -> Self {
        let com = mesh.center_of_mass();
        let mut surface = mesh.vertices.clone();
        let mut edges: Vec<(usize, usize)> = mesh
            .triangles
            .iter()
            .flat_map(|t| [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])])
            .map(|(a, b)| (a.min(b), a.max(b)))
            .collect();
        edges.sort_unstable();
        edges.dedup();
        for (a, b) in edges {
            let (pa, pb) = (mesh.vertices[a], mesh.vertices[b]);
            let n = ((pb - pa).norm() / EDGE_SPACING).ceil() as usize;
            for k in 1..n {
                surface.push(pa + (pb - pa) * (k as f64 / n as f64));
            }
        }
        let samples = mesh.sample_surface(count, SAMPLE_SEED, false);
        let mut interior = vec![com];
        for s in [0.25, 0.5, 0.75] {
            interior.extend(samples.iter().map(|p| com + (p - com) * s));
        }
        surface.extend(samples);
        surface.push(com);
        let radius = mesh.vertices.iter().map(|v| (v - com).norm()).fold(0.0, f64::max);
        Self {
            planes: mesh.face_planes(),
            surface,
            interior,
            com,
            radius,
        }
    }
}

/// A [`Shape`] placed in the world.
#[derive(Clone, Debug)]
pub struct Body {
    planes: Vec<Plane>,
    surface: Vec<Vec3>,
    interior: Vec<Vec3>,
    com: Vec3,
    radius: f64,
}

impl Body {
    pub fn new(shape: &Shape, pose: &RigidTransform) -> Self {
        let planes = shape
            .planes
            .iter()
            .map(|p| {
                let normal = pose.apply_vector(&p.normal);
                Plane {
                    normal,
                    offset: p.offset + normal.dot(pose.translation()),
                }
            })
            .collect();
        Self {
            planes,
            surface: shape.surface.iter().map(|p| pose.apply(p)).collect(),
            interior: shape.interior.iter().map(|p| pose.apply(p)).collect(),
            com: pose.apply(&shape.com),
            radius: shape.radius,
        }
    }

    pub fn center_of_mass(&self) -> Vec3 {
        self.com
    }

    /// Depth of `p` below the nearest face (positive inside) and that face's
    /// normal; faces whose push would point down harder than `min_up` are skipped.
    fn exit(&self, p: &Vec3, min_up: f64, flip: bool) -> Option<(f64, Vec3)> {
        let mut best: Option<(f64, Vec3)> = None;
        let mut inside = true;
        for pl in &self.planes {
            let sd = pl.signed_distance(p);
            if sd >= 0.0 {
                inside = false;
                break;
            }
            let dir = if flip { -pl.normal } else { pl.normal };
            if dir.z < min_up {
                continue;
            }
            if best.is_none_or(|(d, _)| -sd < d) {
                best = Some((-sd, dir));
            }
        }
        if inside {
            best
        } else {
            None
        }
    }

    /// Depth of `p` inside the solid (positive) or an outside distance bound (negative).
    fn depth(&self, p: &Vec3) -> f64 {
        self.planes.iter().map(|pl| -pl.signed_distance(p)).fold(f64::INFINITY, f64::min)
    }

    fn near(&self, other: &Body, slack: f64) -> bool {
        (self.com - other.com).norm() <= self.radius + other.radius + slack
    }
}

fn one_way(points: &[Vec3], solid: &Body) -> f64 {
    points.iter().map(|p| solid.depth(p)).fold(0.0, f64::max)
}

/// Sampled penetration depth between two bodies; 0 when disjoint.
pub fn body_penetration(a: &Body, b: &Body) -> f64 {
    if !a.near(b, 0.0) {
        return 0.0;
    }
    let ab = one_way(&a.surface, b).max(one_way(&a.interior, b));
    let ba = one_way(&b.surface, a).max(one_way(&b.interior, a));
    ab.max(ba)
}

/// Approximate maximum penetration of two posed meshes in meters.
pub fn penetration_depth(a: (&TriangleMesh, &RigidTransform), b: (&TriangleMesh, &RigidTransform)) -> f64 {
    body_penetration(&Body::new(&Shape::new(a.0), a.1), &Body::new(&Shape::new(b.0), b.1))
}

/// Depth of the lowest vertex below the surface plane (0 if none below).
pub fn surface_penetration(mesh: &TriangleMesh, pose: &RigidTransform, rs: &RestingSurface) -> f64 {
    let plane = rs.plane();
    mesh.vertices
        .iter()
        .map(|v| -plane.signed_distance(&pose.apply(v)))
        .fold(0.0, f64::max)
}

/// Collision world: the resting surface plus already settled bodies.
struct World<'a> {
    placed: &'a [Body],
    plane: Plane,
}

impl World<'_> {
    fn plane_depth(&self, body: &Body) -> f64 {
        body.surface.iter().map(|p| -self.plane.signed_distance(p)).fold(0.0, f64::max)
    }

    fn body_depth(&self, body: &Body) -> f64 {
        self.placed
            .iter()
            .filter(|o| o.near(body, 0.0))
            .map(|o| one_way(&body.surface, o).max(one_way(&o.surface, body)))
            .fold(0.0, f64::max)
    }

    fn collides_with_bodies(&self, body: &Body) -> bool {
        self.body_depth(body) > COLLISION_TOLERANCE
    }

    fn collides(&self, body: &Body) -> bool {
        self.plane_depth(body) > COLLISION_TOLERANCE || self.collides_with_bodies(body)
    }

    /// Deepest penetration and the direction that pushes `body` out of it.
    fn deepest(&self, body: &Body, min_up: f64) -> Option<(f64, Vec3)> {
        let mut best: Option<(f64, Vec3)> = None;
        let mut consider = |c: Option<(f64, Vec3)>| {
            if let Some((d, n)) = c {
                if best.is_none_or(|(b, _)| d > b) {
                    best = Some((d, n));
                }
            }
        };
        let plane_depth = self.plane_depth(body);
        if plane_depth > 0.0 {
            consider(Some((plane_depth, self.plane.normal)));
        }
        for o in self.placed.iter().filter(|o| o.near(body, 0.0)) {
            for p in &body.surface {
                consider(o.exit(p, min_up, false));
            }
            for p in &o.surface {
                consider(body.exit(p, min_up, true));
            }
        }
        best
    }
}

fn translated(pose: &RigidTransform, by: Vec3) -> RigidTransform {
    pose.with_translation(pose.translation() + by)
}

fn depenetrate(world: &World, shape: &Shape, mut pose: RigidTransform) -> RigidTransform {
    for _ in 0..DEPENETRATION_ROUNDS {
        let body = Body::new(shape, &pose);
        if !world.collides(&body) {
            return pose;
        }
        let push = world.deepest(&body, -0.3).or_else(|| world.deepest(&body, -1.0));
        let Some((depth, dir)) = push else {
            break;
        };
        pose = translated(&pose, dir * (depth + 1e-4));
    }
    // fall back to lifting straight up until free
    for _ in 0..1000 {
        if !world.collides(&Body::new(shape, &pose)) {
            break;
        }
        pose = translated(&pose, Vec3::new(0.0, 0.0, MARCH_STEP));
    }
    pose
}

/// Lowers a non-colliding pose along −z to first contact.
fn drop(world: &World, shape: &Shape, pose: RigidTransform) -> RigidTransform {
    let body = Body::new(shape, &pose);
    let nz = world.plane.normal.z;
    let to_plane = body
        .surface
        .iter()
        .map(|p| world.plane.signed_distance(p) / nz)
        .fold(f64::INFINITY, f64::min)
        .max(0.0);
    let at = |s: f64| translated(&pose, Vec3::new(0.0, 0.0, -s));
    let hits = |s: f64| world.collides_with_bodies(&Body::new(shape, &at(s)));
    let mut free = 0.0;
    let mut blocked = None;
    let mut s = 0.0;
    while s < to_plane {
        s = (s + MARCH_STEP).min(to_plane);
        if hits(s) {
            blocked = Some(s);
            break;
        }
        free = s;
    }
    let Some(mut hi) = blocked else {
        return at(to_plane);
    };
    while hi - free > DROP_RESOLUTION {
        let mid = 0.5 * (free + hi);
        if hits(mid) {
            hi = mid;
        } else {
            free = mid;
        }
    }
    at(free)
}

fn contact_points(world: &World, body: &Body) -> Vec<Vec3> {
    let mut out: Vec<Vec3> = body
        .surface
        .iter()
        .filter(|p| world.plane.signed_distance(p) < CONTACT_TOLERANCE)
        .copied()
        .collect();
    for o in world.placed.iter().filter(|o| o.near(body, CONTACT_TOLERANCE)) {
        out.extend(body.surface.iter().filter(|p| o.depth(p) > -CONTACT_TOLERANCE));
        out.extend(o.surface.iter().filter(|p| body.depth(p) > -CONTACT_TOLERANCE));
    }
    out
}

fn xy(p: &Vec3) -> Vec2 {
    Vec2::new(p.x, p.y)
}

/// Signed distance of the gravity line through the center of mass to the
/// support polygon; positive when supported.
fn support_margin(world: &World, body: &Body) -> (f64, Vec<Vec3>) {
    let contacts = contact_points(world, body);
    let hull = convex_hull_2d(&contacts.iter().map(xy).collect::<Vec<_>>());
    (hull_signed_distance(&hull, &xy(&body.com)), contacts)
}

/// Pivot point and rotation axis that tip the body toward its unsupported side.
fn pivot(contacts: &[Vec3], com: &Vec3) -> Option<(Vec3, Vec3)> {
    let pts: Vec<Vec2> = contacts.iter().map(xy).collect();
    let hull = convex_hull_2d(&pts);
    let lift = |h: &Vec2| contacts[pts.iter().position(|p| p == h).unwrap_or(0)];
    let c = xy(com);
    let point_axis = |p: Vec3| {
        let r = Vec2::new(com.x - p.x, com.y - p.y);
        if r.norm() < 1e-12 {
            return None;
        }
        Some((p, Vec3::new(-r.y, r.x, 0.0).normalize()))
    };
    let (p, axis) = match hull.len() {
        0 => return None,
        1 => point_axis(lift(&hull[0]))?,
        n => {
            let edges = if n == 2 { 1 } else { n };
            let mut best: Option<(f64, usize, f64)> = None;
            for i in 0..edges {
                let (a, b) = (hull[i], hull[(i + 1) % n]);
                let ab = b - a;
                let t = ((c - a).dot(&ab) / ab.norm_squared()).clamp(0.0, 1.0);
                let d = (c - (a + ab * t)).norm();
                if best.is_none_or(|(bd, _, _)| d < bd) {
                    best = Some((d, i, t));
                }
            }
            let (_, i, t) = best?;
            let (a, b) = (lift(&hull[i]), lift(&hull[(i + 1) % n]));
            if t <= 1e-9 {
                point_axis(a)?
            } else if t >= 1.0 - 1e-9 {
                point_axis(b)?
            } else {
                (a, (b - a).normalize())
            }
        }
    };
    // tip so the center of mass moves down
    let axis = if axis.cross(&(com - p)).z > 0.0 { -axis } else { axis };
    Some((p, axis))
}

fn rotated_about(pose: &RigidTransform, point: &Vec3, axis: &Vec3, angle: f64) -> RigidTransform {
    RigidTransform::from_translation(*point)
        .compose(&RigidTransform::from_axis_angle(*axis, angle))
        .compose(&RigidTransform::from_translation(-point))
        .compose(pose)
}

/// Resolves penetration and lowers `shape` to first contact without tipping it.
pub fn drop_body(placed: &[Body], shape: &Shape, pose: RigidTransform, rs: &RestingSurface) -> RigidTransform {
    let world = World {
        placed,
        plane: rs.plane(),
    };
    drop(&world, shape, depenetrate(&world, shape, pose))
}

/// Settles `shape` starting at `pose` against `placed` bodies and the surface.
pub fn settle_body(placed: &[Body], shape: &Shape, pose: RigidTransform, rs: &RestingSurface) -> Result<RigidTransform> {
    let world = World {
        placed,
        plane: rs.plane(),
    };
    let mut pose = depenetrate(&world, shape, pose);
    pose = drop(&world, shape, pose);
    let mut last_pivot = None;
    let mut tilted = 0.0;
    for _ in 0..MAX_TILT_STEPS {
        let body = Body::new(shape, &pose);
        let (margin, contacts) = support_margin(&world, &body);
        if margin >= -STABILITY_MARGIN {
            break;
        }
        let Some((point, axis)) = pivot(&contacts, &body.com) else {
            break;
        };
        let same_pivot = last_pivot.is_some_and(|(p, a): (Vec3, Vec3)| (p - point).norm() < 1e-6 && (a - axis).norm() < 1e-6);
        if !same_pivot {
            tilted = 0.0;
        }
        last_pivot = Some((point, axis));
        let free = |angle: f64| !world.collides(&Body::new(shape, &rotated_about(&pose, &point, &axis, angle)));
        let angle = if tilted >= MAX_TILT_PER_PIVOT {
            0.0
        } else if free(TILT_STEP) {
            TILT_STEP
        } else {
            let (mut lo, mut hi) = (0.0, TILT_STEP);
            for _ in 0..12 {
                let mid = 0.5 * (lo + hi);
                if free(mid) {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            lo
        };
        if angle < 1e-4 {
            // tipping is blocked by a slanted support or got nowhere: slide off instead
            let away = Vec3::new(body.com.x - point.x, body.com.y - point.y, 0.0);
            if away.norm() < 1e-9 {
                break;
            }
            let moved = translated(&pose, away.normalize() * SLIDE_STEP);
            pose = drop(&world, shape, depenetrate(&world, shape, moved));
            last_pivot = None;
            continue;
        }
        tilted += angle;
        pose = drop(&world, shape, rotated_about(&pose, &point, &axis, angle));
    }
    let com = pose.apply(&shape.com);
    if !rs.contains_xy(&com) {
        let target = rs.clamp_xy(&com);
        return Err(Error::NoSupport {
            projected: translated(&pose, target - com),
        });
    }
    Ok(pose)
}

/// Signed support margin of a settled body (see [`STABILITY_MARGIN`]).
pub fn stability_margin(placed: &[Body], shape: &Shape, pose: &RigidTransform, rs: &RestingSurface) -> f64 {
    let world = World {
        placed,
        plane: rs.plane(),
    };
    support_margin(&world, &Body::new(shape, pose)).0
}

/// Settles one mesh against already placed meshes.
pub fn settle_object(
    placed: &[(&TriangleMesh, RigidTransform)],
    mesh: &TriangleMesh,
    pose: RigidTransform,
    rs: &RestingSurface,
) -> Result<RigidTransform> {
    let bodies: Vec<Body> = placed
        .iter()
        .map(|(m, p)| Body::new(&Shape::for_settling(m), p))
        .collect();
    settle_body(&bodies, &Shape::for_settling(mesh), pose, rs)
}

/// Settles all objects one by one, lowest initial center first. Poses are
/// returned in input order.
pub fn simulate_scene_settle(meshes: &[&TriangleMesh], initial: &[RigidTransform], rs: &RestingSurface) -> Result<Vec<RigidTransform>> {
    if meshes.len() != initial.len() {
        return Err(Error::parse("settle", format!("{} meshes but {} poses", meshes.len(), initial.len())));
    }
    let shapes: Vec<Shape> = meshes.iter().map(|m| Shape::for_settling(m)).collect();
    let mut order: Vec<usize> = (0..meshes.len()).collect();
    let height = |i: usize| initial[i].apply(&shapes[i].com).z;
    order.sort_by(|&a, &b| height(a).total_cmp(&height(b)).then(a.cmp(&b)));
    let mut result = initial.to_vec();
    let mut bodies = Vec::new();
    for i in order {
        let pose = settle_body(&bodies, &shapes[i], initial[i], rs)?;
        bodies.push(Body::new(&shapes[i], &pose));
        result[i] = pose;
    }
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cube(side: f64) -> TriangleMesh {
        TriangleMesh::cuboid(Vec3::repeat(side))
    }

    #[test]
    fn disjoint_and_coincident_cubes() {
        let m = cube(1.0);
        let far = RigidTransform::from_translation(Vec3::new(2.0, 0.0, 0.0));
        let id = RigidTransform::identity();
        assert_eq!(penetration_depth((&m, &id), (&m, &far)), 0.0);
        // deepest interior sample is the shared center, half a side from every face
        assert!((penetration_depth((&m, &id), (&m, &id)) - 0.5).abs() < 1e-9);
    }

    #[test]
    fn slab_overlap() {
        let m = cube(1.0);
        let shifted = RigidTransform::from_translation(Vec3::new(0.99, 0.0, 0.0));
        let d = penetration_depth((&m, &RigidTransform::identity()), (&m, &shifted));
        assert!((d - 0.01).abs() <= 0.002, "{d}");
    }

    #[test]
    fn cube_drop_rest_height() {
        let rs = RestingSurface::horizontal(0.0, 1.0, 1.0);
        let m = cube(0.1);
        let pose = settle_object(&[], &m, RigidTransform::from_translation(Vec3::new(0.0, 0.0, 0.5)), &rs).unwrap();
        assert!((pose.translation().z - 0.05).abs() <= 1e-4);
    }

    #[test]
    fn cube_pushed_out_of_plane() {
        let rs = RestingSurface::horizontal(0.0, 1.0, 1.0);
        let m = cube(0.1);
        let pose = settle_object(&[], &m, RigidTransform::from_translation(Vec3::new(0.1, 0.0, 0.02)), &rs).unwrap();
        assert!(surface_penetration(&m, &pose, &rs) <= 1e-3);
        assert!((pose.translation().z - 0.05).abs() <= 1e-4);
    }

    #[test]
    fn stacked_cubes() {
        let rs = RestingSurface::horizontal(0.0, 1.0, 1.0);
        let m = cube(0.1);
        let below = RigidTransform::from_translation(Vec3::new(0.0, 0.0, 0.05));
        let pose = settle_object(&[(&m, below)], &m, RigidTransform::from_translation(Vec3::new(0.0, 0.0, 0.5)), &rs).unwrap();
        assert!((pose.translation().z - 0.15).abs() <= 1e-3, "{}", pose.translation());
        assert!(penetration_depth((&m, &below), (&m, &pose)) <= 1e-3);
    }

    #[test]
    fn overhanging_cube_tips_off() {
        let rs = RestingSurface::horizontal(0.0, 1.0, 1.0);
        let m = cube(0.1);
        let below = RigidTransform::from_translation(Vec3::new(0.0, 0.0, 0.05));
        // center of mass beyond the supporting edge
        let start = RigidTransform::from_translation(Vec3::new(0.08, 0.0, 0.3));
        let pose = settle_object(&[(&m, below)], &m, start, &rs).unwrap();
        let shapes = [Shape::for_settling(&m)];
        let placed = [Body::new(&shapes[0], &below)];
        assert!(stability_margin(&placed, &shapes[0], &pose, &rs) >= -STABILITY_MARGIN);
        assert!(penetration_depth((&m, &below), (&m, &pose)) <= 1e-3);
        assert!(pose.translation().z < 0.14);
    }

    #[test]
    fn tilted_start_lands_flat() {
        let rs = RestingSurface::horizontal(0.0, 1.0, 1.0);
        let m = TriangleMesh::cuboid(Vec3::new(0.12, 0.08, 0.05));
        let start = RigidTransform::new(
            nalgebra::UnitQuaternion::from_euler_angles(0.3, 0.2, 1.0),
            Vec3::new(0.0, 0.0, 0.3),
        );
        let pose = settle_object(&[], &m, start, &rs).unwrap();
        let shape = Shape::for_settling(&m);
        assert!(stability_margin(&[], &shape, &pose, &rs) >= -STABILITY_MARGIN);
        assert!(surface_penetration(&m, &pose, &rs) <= 1e-3);
    }

    #[test]
    fn off_surface_is_no_support() {
        let rs = RestingSurface::horizontal(0.0, 0.2, 0.2);
        let m = cube(0.1);
        let err = settle_object(&[], &m, RigidTransform::from_translation(Vec3::new(0.5, 0.0, 0.3)), &rs).unwrap_err();
        match err {
            Error::NoSupport { projected } => assert!(rs.contains_xy(projected.translation())),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn scene_settle_coincident_pair() {
        let rs = RestingSurface::horizontal(0.0, 1.0, 1.0);
        let m = cube(0.1);
        let start = RigidTransform::from_translation(Vec3::new(0.0, 0.0, 0.2));
        let poses = simulate_scene_settle(&[&m, &m], &[start, start], &rs).unwrap();
        assert!(penetration_depth((&m, &poses[0]), (&m, &poses[1])) <= 1e-3);
        let shape = Shape::for_settling(&m);
        let first = [Body::new(&shape, &poses[0])];
        assert!(stability_margin(&[], &shape, &poses[0], &rs) >= -STABILITY_MARGIN);
        assert!(stability_margin(&first, &shape, &poses[1], &rs) >= -STABILITY_MARGIN);
    }

    #[test]
    fn side_by_side_keep_xy() {
        let rs = RestingSurface::horizontal(0.0, 1.0, 1.0);
        let m = cube(0.1);
        let a = RigidTransform::from_translation(Vec3::new(-0.2, 0.0, 0.3));
        let b = RigidTransform::from_translation(Vec3::new(0.2, 0.1, 0.4));
        let poses = simulate_scene_settle(&[&m, &m], &[a, b], &rs).unwrap();
        for (p, s) in poses.iter().zip([a, b]) {
            assert!((p.translation().xy() - s.translation().xy()).norm() < 1e-12);
            assert!((p.translation().z - 0.05).abs() <= 1e-4);
        }
    }
}
