//! Rigid-body algebra and the geometric primitives shared by every stage.

mod camera;
mod mesh;
mod planar;
mod symmetry;
mod transform;

pub use camera::CameraModel;
pub use mesh::{point_triangle_distance, Plane, TriangleMesh};
pub use planar::{convex_hull_2d, convex_polygons_intersect, hull_signed_distance, Vec2};
pub use symmetry::SymmetryGroup;
pub use transform::{geodesic_angle, RigidTransform, Vec3};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Frame {
    Camera,
    World,
    Model,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PointCloud {
    pub points: Vec<Vec3>,
    pub frame: Frame,
}

impl PointCloud {
    pub fn new(points: Vec<Vec3>, frame: Frame) -> Self {
        Self { points, frame }
    }

    pub fn model(points: Vec<Vec3>) -> Self {
        Self::new(points, Frame::Model)
    }

    pub fn world(points: Vec<Vec3>) -> Self {
        Self::new(points, Frame::World)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.points.iter().all(|p| p.iter().all(|c| c.is_finite()))
    }

    pub fn centroid(&self) -> Option<Vec3> {
        if self.points.is_empty() {
            return None;
        }
        Some(self.points.iter().sum::<Vec3>() / self.points.len() as f64)
    }

    pub fn transformed(&self, pose: &RigidTransform, frame: Frame) -> PointCloud {
        PointCloud::new(self.points.iter().map(|p| pose.apply(p)).collect(), frame)
    }

    /// Largest pairwise distance (exact, quadratic; callers pass modest clouds).
    pub fn diameter(&self) -> f64 {
        let mut best = 0.0f64;
        for (i, a) in self.points.iter().enumerate() {
            for b in &self.points[i + 1..] {
                best = best.max((a - b).norm_squared());
            }
        }
        best.sqrt()
    }

    /// ASCII PLY with `x y z` float properties.
    pub fn to_ply(&self) -> String {
        let mut out = format!(
            "ply\nformat ascii 1.0\nelement vertex {}\nproperty double x\nproperty double y\nproperty double z\nend_header\n",
            self.points.len()
        );
        for p in &self.points {
            out.push_str(&format!("{} {} {}\n", p.x, p.y, p.z));
        }
        out
    }

    /// Reads the vertex positions of an ASCII PLY file; other elements and
    /// properties are skipped.
    pub fn from_ply(text: &str, frame: Frame) -> Result<Self> {
        let err = |m: String| Error::parse("ply", m);
        let mut lines = text.lines();
        if lines.next().map(str::trim) != Some("ply") {
            return Err(err("missing magic".into()));
        }
        let mut count = None;
        let mut props: Vec<String> = Vec::new();
        let mut in_vertex = false;
        let mut elements_before = 0usize;
        for line in lines.by_ref() {
            let words: Vec<&str> = line.split_whitespace().collect();
            match words.as_slice() {
                ["format", fmt, ..] if *fmt != "ascii" => return Err(err(format!("unsupported format {fmt}"))),
                ["element", "vertex", n] => {
                    count = Some(n.parse::<usize>().map_err(|e| err(e.to_string()))?);
                    in_vertex = true;
                }
                ["element", _, n] => {
                    if count.is_none() {
                        elements_before += n.parse::<usize>().map_err(|e| err(e.to_string()))?;
                    }
                    in_vertex = false;
                }
                ["property", .., name] if in_vertex => props.push(name.to_string()),
                ["end_header"] => break,
                _ => {}
            }
        }
        let count = count.ok_or_else(|| err("no vertex element".into()))?;
        let pos = |name: &str| props.iter().position(|p| p == name).ok_or_else(|| err(format!("missing property {name}")));
        let (ix, iy, iz) = (pos("x")?, pos("y")?, pos("z")?);
        let mut points = Vec::with_capacity(count);
        for line in lines.skip(elements_before).take(count) {
            let vals: Vec<f64> = line
                .split_whitespace()
                .map(|w| w.parse::<f64>().map_err(|e| err(e.to_string())))
                .collect::<Result<_>>()?;
            if vals.len() < props.len() {
                return Err(err(format!("short vertex line: {line}")));
            }
            points.push(Vec3::new(vals[ix], vals[iy], vals[iz]));
        }
        if points.len() != count {
            return Err(err(format!("expected {count} vertices, found {}", points.len())));
        }
        Ok(Self::new(points, frame))
    }
}
