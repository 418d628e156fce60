use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::symmetry::SymmetryGroup;
use super::transform::{RigidTransform, Vec3};
use super::PointCloud;
use crate::error::{Error, Result};

const MIN_TRIANGLE_AREA: f64 = 1e-12;

/// Closed triangle mesh in the model frame, meters.
#[derive(Clone, Debug, PartialEq)]
pub struct TriangleMesh {
    pub vertices: Vec<Vec3>,
    pub triangles: Vec<[usize; 3]>,
    pub symmetry: SymmetryGroup,
}

/// Oriented plane `normal · x = offset`, normal pointing out of the solid.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Plane {
    pub normal: Vec3,
    pub offset: f64,
}

impl Plane {
    pub fn signed_distance(&self, p: &Vec3) -> f64 {
        self.normal.dot(p) - self.offset
    }
}

impl TriangleMesh {
    pub fn new(vertices: Vec<Vec3>, triangles: Vec<[usize; 3]>, symmetry: SymmetryGroup) -> Result<Self> {
        let mesh = Self {
            vertices,
            triangles,
            symmetry,
        };
        mesh.validate()?;
        Ok(mesh)
    }

    pub fn validate(&self) -> Result<()> {
        if self.vertices.is_empty() || self.triangles.is_empty() {
            return Err(Error::InvalidMesh("mesh has no triangles".into()));
        }
        if self.vertices.iter().any(|v| !v.iter().all(|c| c.is_finite())) {
            return Err(Error::InvalidMesh("non-finite vertex".into()));
        }
        for (i, tri) in self.triangles.iter().enumerate() {
            if tri.iter().any(|&k| k >= self.vertices.len()) {
                return Err(Error::InvalidMesh(format!("triangle {i} index out of range")));
            }
            if self.triangle_area(i) <= MIN_TRIANGLE_AREA {
                return Err(Error::InvalidMesh(format!("triangle {i} is degenerate")));
            }
        }
        Ok(())
    }

    pub fn corners(&self, i: usize) -> [Vec3; 3] {
        let [a, b, c] = self.triangles[i];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    pub fn triangle_area(&self, i: usize) -> f64 {
        let [a, b, c] = self.corners(i);
        0.5 * (b - a).cross(&(c - a)).norm()
    }

    pub fn surface_area(&self) -> f64 {
        (0..self.triangles.len()).map(|i| self.triangle_area(i)).sum()
    }

    /// Axis-aligned cuboid centered at the origin with full side lengths `dims`.
    pub fn cuboid(dims: Vec3) -> Self {
        let h = dims / 2.0;
        let vertices = vec![
            Vec3::new(-h.x, -h.y, -h.z),
            Vec3::new(h.x, -h.y, -h.z),
            Vec3::new(h.x, h.y, -h.z),
            Vec3::new(-h.x, h.y, -h.z),
            Vec3::new(-h.x, -h.y, h.z),
            Vec3::new(h.x, -h.y, h.z),
            Vec3::new(h.x, h.y, h.z),
            Vec3::new(-h.x, h.y, h.z),
        ];
        let triangles = vec![
            [0, 2, 1],
            [0, 3, 2],
            [4, 5, 6],
            [4, 6, 7],
            [0, 1, 5],
            [0, 5, 4],
            [1, 2, 6],
            [1, 6, 5],
            [2, 3, 7],
            [2, 7, 6],
            [3, 0, 4],
            [3, 4, 7],
        ];
        // Equal side lengths add symmetries beyond the half-turn group; callers
        // with such boxes should replace the group.
        Self {
            vertices,
            triangles,
            symmetry: SymmetryGroup::box_symmetry(),
        }
    }

    /// Capped cylinder along model z, centered at the origin.
    pub fn cylinder(radius: f64, height: f64, segments: usize) -> Self {
        let n = segments.max(3);
        let mut vertices = Vec::with_capacity(2 * n + 2);
        for k in 0..n {
            let a = std::f64::consts::TAU * k as f64 / n as f64;
            vertices.push(Vec3::new(radius * a.cos(), radius * a.sin(), -height / 2.0));
        }
        for k in 0..n {
            let a = std::f64::consts::TAU * k as f64 / n as f64;
            vertices.push(Vec3::new(radius * a.cos(), radius * a.sin(), height / 2.0));
        }
        let bottom = vertices.len();
        vertices.push(Vec3::new(0.0, 0.0, -height / 2.0));
        let top = vertices.len();
        vertices.push(Vec3::new(0.0, 0.0, height / 2.0));
        let mut triangles = Vec::with_capacity(4 * n);
        for k in 0..n {
            let k1 = (k + 1) % n;
            triangles.push([k, k1, n + k1]);
            triangles.push([k, n + k1, n + k]);
            triangles.push([bottom, k1, k]);
            triangles.push([top, n + k, n + k1]);
        }
        Self {
            vertices,
            triangles,
            symmetry: SymmetryGroup::cylinder_symmetry(),
        }
    }

    /// Right prism over a triangle with legs `a` (x) and `b` (y), extruded along z.
    /// Centered so that its volume centroid is the origin.
    pub fn wedge(a: f64, b: f64, depth: f64) -> Self {
        let cx = a / 3.0;
        let cy = b / 3.0;
        let base = [Vec3::new(-cx, -cy, 0.0), Vec3::new(a - cx, -cy, 0.0), Vec3::new(-cx, b - cy, 0.0)];
        let mut vertices = Vec::with_capacity(6);
        for p in &base {
            vertices.push(p - Vec3::z() * depth / 2.0);
        }
        for p in &base {
            vertices.push(p + Vec3::z() * depth / 2.0);
        }
        let triangles = vec![
            [0, 2, 1],
            [3, 4, 5],
            [0, 1, 4],
            [0, 4, 3],
            [1, 2, 5],
            [1, 5, 4],
            [2, 0, 3],
            [2, 3, 5],
        ];
        Self {
            vertices,
            triangles,
            symmetry: SymmetryGroup::trivial(),
        }
    }

    /// Signed volume and volume centroid (uniform density) via the divergence theorem.
    pub fn volume_and_centroid(&self) -> (f64, Vec3) {
        let mut volume = 0.0;
        let mut moment = Vec3::zeros();
        for i in 0..self.triangles.len() {
            let [a, b, c] = self.corners(i);
            let v = a.dot(&b.cross(&c)) / 6.0;
            volume += v;
            moment += v * (a + b + c) / 4.0;
        }
        if volume.abs() < 1e-18 {
            let mean = self.vertices.iter().sum::<Vec3>() / self.vertices.len() as f64;
            return (0.0, mean);
        }
        (volume, moment / volume)
    }

    pub fn center_of_mass(&self) -> Vec3 {
        self.volume_and_centroid().1
    }

    /// Radius of the smallest origin-centered sphere enclosing the vertices.
    pub fn bounding_radius(&self) -> f64 {
        self.vertices.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub fn diameter(&self) -> f64 {
        let mut best = 0.0f64;
        for (i, a) in self.vertices.iter().enumerate() {
            for b in &self.vertices[i + 1..] {
                best = best.max((a - b).norm());
            }
        }
        best
    }

    /// Distinct outward face planes. Exact solid description for convex meshes.
    pub fn face_planes(&self) -> Vec<Plane> {
        let centroid = self.center_of_mass();
        let mut planes: Vec<Plane> = Vec::new();
        for i in 0..self.triangles.len() {
            let [a, b, c] = self.corners(i);
            let mut normal = (b - a).cross(&(c - a)).normalize();
            // orient away from the interior
            if normal.dot(&(a - centroid)) < 0.0 {
                normal = -normal;
            }
            let offset = normal.dot(&a);
            let duplicate = planes
                .iter()
                .any(|p| p.normal.dot(&normal) > 1.0 - 1e-9 && (p.offset - offset).abs() < 1e-9);
            if !duplicate {
                planes.push(Plane { normal, offset });
            }
        }
        planes
    }

    /// Area-weighted uniform surface sample, always beginning with the vertices
    /// when `include_vertices` is set.
    pub fn sample_surface(&self, count: usize, seed: u64, include_vertices: bool) -> Vec<Vec3> {
        let mut points = Vec::with_capacity(count + self.vertices.len());
        if include_vertices {
            points.extend(self.vertices.iter().copied());
        }
        points.extend(self.sample_with_normals(count, seed).into_iter().map(|(p, _)| p));
        points
    }

    /// Area-weighted surface sample paired with the unit normal of the
    /// triangle each point was drawn from.
    pub fn sample_with_normals(&self, count: usize, seed: u64) -> Vec<(Vec3, Vec3)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut cumulative = Vec::with_capacity(self.triangles.len());
        let mut total = 0.0;
        for i in 0..self.triangles.len() {
            total += self.triangle_area(i);
            cumulative.push(total);
        }
        let mut out = Vec::with_capacity(count);
        for _ in 0..count {
            let r = rng.random::<f64>() * total;
            let idx = cumulative.partition_point(|&c| c < r).min(self.triangles.len() - 1);
            let [a, b, c] = self.corners(idx);
            let (mut u, mut v): (f64, f64) = (rng.random(), rng.random());
            if u + v > 1.0 {
                u = 1.0 - u;
                v = 1.0 - v;
            }
            let normal = (b - a).cross(&(c - a)).normalize();
            out.push((a + (b - a) * u + (c - a) * v, normal));
        }
        out
    }

    pub fn sample_cloud(&self, count: usize, seed: u64) -> PointCloud {
        PointCloud::model(self.sample_surface(count, seed, false))
    }

    pub fn transformed_vertices(&self, pose: &RigidTransform) -> Vec<Vec3> {
        self.vertices.iter().map(|v| pose.apply(v)).collect()
    }

    /// Unsigned distance from `p` to the mesh surface.
    pub fn distance_to_surface(&self, p: &Vec3) -> f64 {
        (0..self.triangles.len())
            .map(|i| {
                let [a, b, c] = self.corners(i);
                point_triangle_distance(p, &a, &b, &c)
            })
            .fold(f64::INFINITY, f64::min)
    }

    /// Parses ASCII OBJ (`v` and `f` records; polygons are fan-triangulated).
    pub fn from_obj(text: &str, symmetry: SymmetryGroup) -> Result<Self> {
        let mut vertices = Vec::new();
        let mut triangles = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let mut parts = line.split_whitespace();
            match parts.next() {
                Some("v") => {
                    let coords: Vec<f64> = parts
                        .take(3)
                        .map(|s| s.parse::<f64>())
                        .collect::<std::result::Result<_, _>>()
                        .map_err(|e| Error::parse("obj", format!("line {}: {e}", lineno + 1)))?;
                    if coords.len() != 3 {
                        return Err(Error::parse("obj", format!("line {}: vertex needs 3 coordinates", lineno + 1)));
                    }
                    vertices.push(Vec3::new(coords[0], coords[1], coords[2]));
                }
                Some("f") => {
                    let mut idx = Vec::new();
                    for token in parts {
                        let first = token.split('/').next().unwrap_or("");
                        let raw: i64 = first
                            .parse()
                            .map_err(|e| Error::parse("obj", format!("line {}: {e}", lineno + 1)))?;
                        let resolved = if raw > 0 {
                            raw - 1
                        } else {
                            vertices.len() as i64 + raw
                        };
                        if resolved < 0 {
                            return Err(Error::parse("obj", format!("line {}: bad index {raw}", lineno + 1)));
                        }
                        idx.push(resolved as usize);
                    }
                    if idx.len() < 3 {
                        return Err(Error::parse("obj", format!("line {}: face needs 3 vertices", lineno + 1)));
                    }
                    for k in 1..idx.len() - 1 {
                        triangles.push([idx[0], idx[k], idx[k + 1]]);
                    }
                }
                _ => {}
            }
        }
        TriangleMesh::new(vertices, triangles, symmetry)
    }

    pub fn to_obj(&self) -> String {
        let mut out = String::new();
        for v in &self.vertices {
            let _ = writeln!(out, "v {} {} {}", v.x, v.y, v.z);
        }
        for t in &self.triangles {
            let _ = writeln!(out, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1);
        }
        out
    }
}

/// Euclidean distance from `p` to triangle `abc` (closest-feature method).
pub fn point_triangle_distance(p: &Vec3, a: &Vec3, b: &Vec3, c: &Vec3) -> f64 {
    (p - closest_point_on_triangle(p, a, b, c)).norm()
}

fn closest_point_on_triangle(p: &Vec3, a: &Vec3, b: &Vec3, c: &Vec3) -> Vec3 {
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return *a;
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return *b;
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return a + ab * v;
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return *c;
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return a + ac * w;
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return b + (c - b) * w;
    }
    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    a + ab * v + ac * w
}
