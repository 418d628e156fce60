//! Software z-buffer depth rendering, box projection and back-projection.
//!
//! Triangles are rasterized without back-face culling. Pixel `(u, v)` samples
//! the continuous image point `(u, v)` (see [`CameraModel`]), edges are
//! inclusive and depth is interpolated perspective-correctly through `1/z`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{CameraModel, Frame, PointCloud, RigidTransform, TriangleMesh, Vec3};

/// Geometry closer than this to the camera (camera-frame z, meters) is clipped.
pub const NEAR_PLANE: f64 = 1e-3;

#[derive(Clone, Debug, PartialEq)]
pub struct DepthImage {
    pub width: usize,
    pub height: usize,
    /// Row-major camera-frame depth in meters; 0 = no return.
    pub data: Vec<f64>,
}

impl DepthImage {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0.0; width * height],
        }
    }

    pub fn for_camera(camera: &CameraModel) -> Self {
        Self::zeros(camera.width, camera.height)
    }

    #[inline]
    pub fn get(&self, u: usize, v: usize) -> f64 {
        self.data[v * self.width + u]
    }

    #[inline]
    pub fn set(&mut self, u: usize, v: usize, depth: f64) {
        self.data[v * self.width + u] = depth;
    }

    pub fn nonzero_count(&self) -> usize {
        self.data.iter().filter(|&&d| d != 0.0).count()
    }

    pub fn same_shape(&self, other: &DepthImage) -> Result<()> {
        if self.width != other.width || self.height != other.height {
            return Err(Error::DimensionMismatch(self.width, self.height, other.width, other.height));
        }
        Ok(())
    }

    /// 16-bit binary PGM, value = round(depth * 1000) millimeters.
    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n65535\n", self.width, self.height).into_bytes();
        out.reserve(self.data.len() * 2);
        for &d in &self.data {
            let mm = (d * 1000.0).round().clamp(0.0, 65535.0) as u16;
            out.extend_from_slice(&mm.to_be_bytes());
        }
        out
    }

    pub fn from_pgm(bytes: &[u8]) -> Result<Self> {
        let mut fields = Vec::with_capacity(4);
        let mut pos = 0;
        while fields.len() < 4 {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
                continue;
            }
            let start = pos;
            while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if start == pos {
                return Err(Error::parse("pgm", "truncated header"));
            }
            fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
        }
        pos += 1;
        if fields[0] != "P5" {
            return Err(Error::parse("pgm", format!("unsupported magic {}", fields[0])));
        }
        let parse = |s: &str| s.parse::<usize>().map_err(|e| Error::parse("pgm", e.to_string()));
        let (width, height, maxval) = (parse(&fields[1])?, parse(&fields[2])?, parse(&fields[3])?);
        if maxval < 256 {
            return Err(Error::parse("pgm", "expected a 16-bit image"));
        }
        let body = bytes.get(pos..).unwrap_or(&[]);
        if body.len() < width * height * 2 {
            return Err(Error::parse("pgm", "truncated pixel data"));
        }
        let data = body
            .chunks_exact(2)
            .take(width * height)
            .map(|c| u16::from_be_bytes([c[0], c[1]]) as f64 / 1000.0)
            .collect();
        Ok(Self { width, height, data })
    }
}

/// Inclusive pixel rectangle.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BBox2D {
    pub xmin: usize,
    pub ymin: usize,
    pub xmax: usize,
    pub ymax: usize,
}

impl BBox2D {
    pub fn new(xmin: usize, ymin: usize, xmax: usize, ymax: usize) -> Self {
        debug_assert!(xmin <= xmax && ymin <= ymax);
        Self { xmin, ymin, xmax, ymax }
    }

    pub fn full(width: usize, height: usize) -> Self {
        Self::new(0, 0, width - 1, height - 1)
    }

    pub fn width(&self) -> usize {
        self.xmax - self.xmin + 1
    }

    pub fn height(&self) -> usize {
        self.ymax - self.ymin + 1
    }

    pub fn area(&self) -> usize {
        self.width() * self.height()
    }

    pub fn contains(&self, u: usize, v: usize) -> bool {
        u >= self.xmin && u <= self.xmax && v >= self.ymin && v <= self.ymax
    }

    pub fn intersects(&self, other: &BBox2D) -> bool {
        self.xmin <= other.xmax && other.xmin <= self.xmax && self.ymin <= other.ymax && other.ymin <= self.ymax
    }

    pub fn clipped(&self, width: usize, height: usize) -> BBox2D {
        BBox2D::new(
            self.xmin.min(width - 1),
            self.ymin.min(height - 1),
            self.xmax.min(width - 1),
            self.ymax.min(height - 1),
        )
    }

    pub fn pixels(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (self.ymin..=self.ymax).flat_map(move |v| (self.xmin..=self.xmax).map(move |u| (u, v)))
    }

    /// Tight box around a set of pixels.
    pub fn around(pixels: impl IntoIterator<Item = (usize, usize)>) -> Option<BBox2D> {
        let mut it = pixels.into_iter();
        let (u0, v0) = it.next()?;
        let mut b = BBox2D::new(u0, v0, u0, v0);
        for (u, v) in it {
            b.xmin = b.xmin.min(u);
            b.xmax = b.xmax.max(u);
            b.ymin = b.ymin.min(v);
            b.ymax = b.ymax.max(v);
        }
        Some(b)
    }
}

/// Z-buffer with an optional per-pixel object id channel.
pub struct Rasterizer<'a> {
    camera: &'a CameraModel,
    depth: DepthImage,
    labels: Vec<i32>,
}

impl<'a> Rasterizer<'a> {
    pub fn new(camera: &'a CameraModel) -> Self {
        Self {
            camera,
            depth: DepthImage::for_camera(camera),
            labels: vec![-1; camera.width * camera.height],
        }
    }

    pub fn draw(&mut self, mesh: &TriangleMesh, pose: &RigidTransform, label: i32) {
        let to_camera = self.camera.extrinsic.compose(pose);
        let cam_vertices: Vec<Vec3> = mesh.vertices.iter().map(|v| to_camera.apply(v)).collect();
        for tri in &mesh.triangles {
            let corners = [cam_vertices[tri[0]], cam_vertices[tri[1]], cam_vertices[tri[2]]];
            if corners.iter().all(|c| c.z > NEAR_PLANE) {
                self.raster_triangle(&corners, label);
            } else {
                let poly = clip_near(&corners);
                for k in 1..poly.len().saturating_sub(1) {
                    self.raster_triangle(&[poly[0], poly[k], poly[k + 1]], label);
                }
            }
        }
    }

    fn raster_triangle(&mut self, c: &[Vec3; 3], label: i32) {
        let cam = self.camera;
        let p: Vec<(f64, f64)> = c.iter().map(|v| cam.project(v)).collect();
        let area = edge(p[0], p[1], p[2]);
        if area.abs() < 1e-12 {
            return;
        }
        let min_x = p.iter().map(|q| q.0).fold(f64::INFINITY, f64::min);
        let max_x = p.iter().map(|q| q.0).fold(f64::NEG_INFINITY, f64::max);
        let min_y = p.iter().map(|q| q.1).fold(f64::INFINITY, f64::min);
        let max_y = p.iter().map(|q| q.1).fold(f64::NEG_INFINITY, f64::max);
        if max_x < 0.0 || max_y < 0.0 || min_x > (cam.width - 1) as f64 || min_y > (cam.height - 1) as f64 {
            return;
        }
        let u0 = min_x.ceil().max(0.0) as usize;
        let u1 = (max_x.floor() as i64).min(cam.width as i64 - 1);
        let v0 = min_y.ceil().max(0.0) as usize;
        let v1 = (max_y.floor() as i64).min(cam.height as i64 - 1);
        if u1 < u0 as i64 || v1 < v0 as i64 {
            return;
        }
        let inv_area = 1.0 / area;
        let inv_z = [1.0 / c[0].z, 1.0 / c[1].z, 1.0 / c[2].z];
        for v in v0..=v1 as usize {
            let y = v as f64;
            for u in u0..=u1 as usize {
                let x = u as f64;
                let b0 = edge(p[1], p[2], (x, y)) * inv_area;
                let b1 = edge(p[2], p[0], (x, y)) * inv_area;
                let b2 = edge(p[0], p[1], (x, y)) * inv_area;
                if b0 < 0.0 || b1 < 0.0 || b2 < 0.0 {
                    continue;
                }
                let z = 1.0 / (b0 * inv_z[0] + b1 * inv_z[1] + b2 * inv_z[2]);
                let idx = v * cam.width + u;
                let cur = self.depth.data[idx];
                if cur == 0.0 || z < cur {
                    self.depth.data[idx] = z;
                    self.labels[idx] = label;
                }
            }
        }
    }

    pub fn finish(self) -> DepthImage {
        self.depth
    }

    pub fn finish_with_labels(self) -> (DepthImage, Vec<i32>) {
        (self.depth, self.labels)
    }
}

#[inline]
fn edge(a: (f64, f64), b: (f64, f64), p: (f64, f64)) -> f64 {
    (b.0 - a.0) * (p.1 - a.1) - (b.1 - a.1) * (p.0 - a.0)
}

/// Sutherland-Hodgman clip of a triangle against `z >= NEAR_PLANE`.
fn clip_near(c: &[Vec3; 3]) -> Vec<Vec3> {
    let mut out = Vec::with_capacity(4);
    for i in 0..3 {
        let a = c[i];
        let b = c[(i + 1) % 3];
        let a_in = a.z >= NEAR_PLANE;
        let b_in = b.z >= NEAR_PLANE;
        if a_in {
            out.push(a);
        }
        if a_in != b_in {
            let t = (NEAR_PLANE - a.z) / (b.z - a.z);
            let mut q = a + (b - a) * t;
            q.z = NEAR_PLANE;
            out.push(q);
        }
    }
    out
}

/// Nearest-surface depth image of the posed meshes.
pub fn render_depth(objects: &[(&TriangleMesh, RigidTransform)], camera: &CameraModel) -> DepthImage {
    let mut r = Rasterizer::new(camera);
    for (i, (mesh, pose)) in objects.iter().enumerate() {
        r.draw(mesh, pose, i as i32);
    }
    r.finish()
}

/// Depth image plus, per pixel, the index of the visible object (-1 for none).
pub fn render_labels(objects: &[(&TriangleMesh, RigidTransform)], camera: &CameraModel) -> (DepthImage, Vec<i32>) {
    let mut r = Rasterizer::new(camera);
    for (i, (mesh, pose)) in objects.iter().enumerate() {
        r.draw(mesh, pose, i as i32);
    }
    r.finish_with_labels()
}

#[inline]
fn to_pixel(x: f64) -> i64 {
    (x + 0.5).floor() as i64
}

/// Tight box around the projections of all vertices in front of the near plane.
pub fn project_bbox(mesh: &TriangleMesh, pose: &RigidTransform, camera: &CameraModel) -> Result<BBox2D> {
    let to_camera = camera.extrinsic.compose(pose);
    let mut bounds: Option<(i64, i64, i64, i64)> = None;
    for v in &mesh.vertices {
        let pc = to_camera.apply(v);
        if pc.z <= NEAR_PLANE {
            continue;
        }
        let (x, y) = camera.project(&pc);
        let (u, w) = (to_pixel(x), to_pixel(y));
        bounds = Some(match bounds {
            None => (u, w, u, w),
            Some((a, b, c, d)) => (a.min(u), b.min(w), c.max(u), d.max(w)),
        });
    }
    let (x0, y0, x1, y1) = bounds.ok_or(Error::AllBehindCamera)?;
    let (wmax, hmax) = (camera.width as i64 - 1, camera.height as i64 - 1);
    if x1 < 0 || y1 < 0 || x0 > wmax || y0 > hmax {
        return Err(Error::OutsideImage);
    }
    Ok(BBox2D::new(
        x0.clamp(0, wmax) as usize,
        y0.clamp(0, hmax) as usize,
        x1.clamp(0, wmax) as usize,
        y1.clamp(0, hmax) as usize,
    ))
}

/// Camera-frame points for every pixel of `bbox` with non-zero depth.
pub fn backproject_segment(depth: &DepthImage, bbox: &BBox2D, camera: &CameraModel) -> Result<PointCloud> {
    backproject_pixels(depth, bbox.pixels(), camera)
}

pub fn backproject_pixels(
    depth: &DepthImage,
    pixels: impl IntoIterator<Item = (usize, usize)>,
    camera: &CameraModel,
) -> Result<PointCloud> {
    let points: Vec<Vec3> = pixels
        .into_iter()
        .filter(|&(u, v)| u < depth.width && v < depth.height)
        .filter_map(|(u, v)| {
            let d = depth.get(u, v);
            (d > 0.0).then(|| camera.backproject(u as f64, v as f64, d))
        })
        .collect();
    if points.is_empty() {
        return Err(Error::EmptySegment);
    }
    Ok(PointCloud::new(points, Frame::Camera))
}
