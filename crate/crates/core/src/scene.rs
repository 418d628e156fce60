//! Synthetic scenes: drop objects onto a surface, settle them, render depth
//! from several cameras and derive box labels and simulated detections.

use std::fs;
use std::path::Path;

use nalgebra::{Quaternion, UnitQuaternion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{CameraModel, Frame, PointCloud, RigidTransform, SymmetryGroup, TriangleMesh, Vec3};
use crate::models::Model;
use crate::physics::{simulate_scene_settle, RestingSurface};
use crate::render::{backproject_pixels, render_labels, BBox2D, DepthImage};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlacementConfig {
    /// Initial height of every object above the surface, meters.
    pub drop_height: f64,
    /// Half-width of the square initial xy region; 0 uses the surface bounds.
    pub drop_extent: f64,
    pub max_attempts: usize,
}

impl Default for PlacementConfig {
    fn default() -> Self {
        Self {
            drop_height: 0.3,
            drop_extent: 0.0,
            max_attempts: 20,
        }
    }
}

/// Cameras on a ring around the surface center, all aimed at it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CameraRig {
    pub views: usize,
    pub width: usize,
    pub height: usize,
    pub focal: f64,
    pub distance: f64,
    pub elevation_deg: f64,
}

impl Default for CameraRig {
    fn default() -> Self {
        Self {
            views: 2,
            width: 320,
            height: 240,
            focal: 380.0,
            distance: 0.6,
            elevation_deg: 55.0,
        }
    }
}

impl CameraRig {
    /// View 0 looks along +y; further views are spread evenly in azimuth.
    pub fn cameras(&self, rs: &RestingSurface) -> Result<Vec<CameraModel>> {
        let target = *rs.pose.translation();
        let elevation = self.elevation_deg.to_radians();
        (0..self.views)
            .map(|k| {
                let azimuth = -std::f64::consts::FRAC_PI_2 + k as f64 * std::f64::consts::TAU / self.views as f64;
                let dir = Vec3::new(elevation.cos() * azimuth.cos(), elevation.cos() * azimuth.sin(), elevation.sin());
                CameraModel::look_at(target + dir * self.distance, target, Vec3::z(), (self.width, self.height), self.focal)
            })
            .collect()
    }
}

/// A simulated detection: a box, a confidence and the pixels kept from it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    /// Index into the bundle's objects.
    pub object: usize,
    pub bbox: BBox2D,
    pub confidence: f64,
    /// Row-major pixel indices (`v * width + u`) with valid depth.
    pub pixels: Vec<usize>,
}

impl Segment {
    pub fn uv(&self, width: usize) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.pixels.iter().map(move |&i| (i % width, i / width))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneMeta {
    pub seed: u64,
    pub surface: RestingSurface,
    pub placement: PlacementConfig,
    #[serde(default)]
    pub noise: Option<NoiseConfig>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseConfig {
    pub jitter_px: f64,
    pub dropout: f64,
    pub depth_sigma: f64,
    pub seed: u64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            jitter_px: 10.0,
            dropout: 0.2,
            depth_sigma: 0.003,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SceneBundle {
    pub objects: Vec<Model>,
    pub surface: RestingSurface,
    pub cameras: Vec<CameraModel>,
    pub gt_poses: Vec<RigidTransform>,
    /// Observed depth per view (millimeter resolution).
    pub depth: Vec<DepthImage>,
    /// Per view, per object: box around the visible pixels (`None` if hidden).
    pub gt_bboxes: Vec<Vec<Option<BBox2D>>>,
    /// Per view, one entry per detected object.
    pub segments: Vec<Vec<Segment>>,
    pub meta: SceneMeta,
}

fn quantize_mm(depth: &mut DepthImage) {
    for d in &mut depth.data {
        *d = (*d * 1000.0).round().clamp(0.0, 65535.0) / 1000.0;
    }
}

/// Uniformly distributed rotation (Shoemake's subgroup algorithm).
pub fn random_rotation(rng: &mut impl Rng) -> UnitQuaternion<f64> {
    let (u1, u2, u3): (f64, f64, f64) = (rng.random(), rng.random(), rng.random());
    let tau = std::f64::consts::TAU;
    let (a, b) = ((1.0 - u1).sqrt(), u1.sqrt());
    UnitQuaternion::from_quaternion(Quaternion::new(
        b * (tau * u3).cos(),
        a * (tau * u2).sin(),
        a * (tau * u2).cos(),
        b * (tau * u3).sin(),
    ))
}

/// Drops `n_objects` distinct models onto `rs`, settles them and renders every camera.
pub fn generate_scene(
    models: &[Model],
    rs: &RestingSurface,
    cameras: &[CameraModel],
    n_objects: usize,
    seed: u64,
    placement: &PlacementConfig,
) -> Result<SceneBundle> {
    if n_objects > models.len() {
        return Err(Error::parse(
            "scene",
            format!("{n_objects} objects requested but only {} models", models.len()),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let [hx, hy] = rs.half_extents;
    let (ex, ey) = if placement.drop_extent > 0.0 {
        (placement.drop_extent.min(hx), placement.drop_extent.min(hy))
    } else {
        (hx, hy)
    };
    for _ in 0..placement.max_attempts.max(1) {
        let mut pool: Vec<usize> = (0..models.len()).collect();
        let mut chosen = Vec::with_capacity(n_objects);
        for _ in 0..n_objects {
            chosen.push(pool.remove(rng.random_range(0..pool.len())));
        }
        let initial: Vec<RigidTransform> = chosen
            .iter()
            .map(|_| {
                let local = Vec3::new(rng.random_range(-ex..=ex), rng.random_range(-ey..=ey), placement.drop_height);
                RigidTransform::new(random_rotation(&mut rng), rs.pose.apply(&local))
            })
            .collect();
        let objects: Vec<Model> = chosen.iter().map(|&i| models[i].clone()).collect();
        let meshes: Vec<&TriangleMesh> = objects.iter().map(|m| &m.mesh).collect();
        let poses = match simulate_scene_settle(&meshes, &initial, rs) {
            Ok(p) => p,
            Err(Error::NoSupport { .. }) => continue,
            Err(e) => return Err(e),
        };
        return Ok(render_bundle(objects, rs.clone(), cameras.to_vec(), poses, seed, placement.clone()));
    }
    Err(Error::GenerationFailed(placement.max_attempts.max(1)))
}

fn render_bundle(
    objects: Vec<Model>,
    surface: RestingSurface,
    cameras: Vec<CameraModel>,
    gt_poses: Vec<RigidTransform>,
    seed: u64,
    placement: PlacementConfig,
) -> SceneBundle {
    let table = surface.mesh();
    let mut scene: Vec<(&TriangleMesh, RigidTransform)> = objects.iter().zip(&gt_poses).map(|(m, p)| (&m.mesh, *p)).collect();
    scene.push((&table, surface.pose));
    let mut depth = Vec::new();
    let mut gt_bboxes = Vec::new();
    let mut segments = Vec::new();
    for cam in &cameras {
        let (mut d, labels) = render_labels(&scene, cam);
        quantize_mm(&mut d);
        let boxes: Vec<Option<BBox2D>> = (0..objects.len())
            .map(|i| {
                BBox2D::around(
                    labels
                        .iter()
                        .enumerate()
                        .filter(|(idx, &l)| l == i as i32 && d.data[*idx] > 0.0)
                        .map(|(idx, _)| (idx % cam.width, idx / cam.width)),
                )
            })
            .collect();
        let segs = boxes
            .iter()
            .enumerate()
            .filter_map(|(i, b)| {
                b.map(|bbox| Segment {
                    object: i,
                    bbox,
                    confidence: 1.0,
                    pixels: valid_pixels(&d, &bbox),
                })
            })
            .collect();
        depth.push(d);
        gt_bboxes.push(boxes);
        segments.push(segs);
    }
    SceneBundle {
        objects,
        meta: SceneMeta {
            seed,
            surface: surface.clone(),
            placement,
            noise: None,
        },
        surface,
        cameras,
        gt_poses,
        depth,
        gt_bboxes,
        segments,
    }
}

fn valid_pixels(depth: &DepthImage, bbox: &BBox2D) -> Vec<usize> {
    bbox.pixels()
        .map(|(u, v)| v * depth.width + u)
        .filter(|&i| depth.data[i] > 0.0)
        .collect()
}

fn iou(a: &BBox2D, b: &BBox2D) -> f64 {
    if !a.intersects(b) {
        return 0.0;
    }
    let w = a.xmax.min(b.xmax) - a.xmin.max(b.xmin) + 1;
    let h = a.ymax.min(b.ymax) - a.ymin.max(b.ymin) + 1;
    let inter = (w * h) as f64;
    inter / ((a.area() + b.area()) as f64 - inter)
}

/// Noisy observation of a bundle: depth copies with Gaussian noise and detections
/// with jittered boxes and randomly dropped pixels.
#[derive(Clone, Debug, PartialEq)]
pub struct Perturbed {
    pub depth: Vec<DepthImage>,
    pub segments: Vec<Vec<Segment>>,
}

/// Simulated detector output. Box corners move by up to `jitter_px` (clipped to
/// the image), each pixel survives with probability `1 − dropout` and valid
/// depths get N(0, σ²) noise. Confidence is the IoU of the jittered box with
/// the true one.
pub fn perturb_segments(bundle: &SceneBundle, jitter_px: f64, dropout: f64, depth_sigma: f64, seed: u64) -> Perturbed {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, depth_sigma.max(0.0)).expect("finite sigma");
    let jitter = jitter_px.max(0.0).floor() as i64;
    let mut depth = Vec::with_capacity(bundle.depth.len());
    let mut segments = Vec::with_capacity(bundle.depth.len());
    for (view, clean) in bundle.depth.iter().enumerate() {
        let mut d = clean.clone();
        if depth_sigma > 0.0 {
            for x in d.data.iter_mut().filter(|x| **x > 0.0) {
                *x = (*x + noise.sample(&mut rng)).max(1e-3);
            }
            quantize_mm(&mut d);
        }
        let (w, h) = (d.width as i64, d.height as i64);
        let mut segs = Vec::new();
        for seg in &bundle.segments[view] {
            let mut shift = |c: usize, hi: i64| -> usize {
                let delta = if jitter > 0 { rng.random_range(-jitter..=jitter) } else { 0 };
                (c as i64 + delta).clamp(0, hi - 1) as usize
            };
            let b = seg.bbox;
            let (x0, y0, x1, y1) = (shift(b.xmin, w), shift(b.ymin, h), shift(b.xmax, w), shift(b.ymax, h));
            let bbox = BBox2D::new(x0.min(x1), y0.min(y1), x0.max(x1), y0.max(y1));
            let pixels = valid_pixels(&d, &bbox)
                .into_iter()
                .filter(|_| dropout <= 0.0 || rng.random::<f64>() >= dropout)
                .collect();
            segs.push(Segment {
                object: seg.object,
                bbox,
                confidence: iou(&bbox, &b),
                pixels,
            });
        }
        depth.push(d);
        segments.push(segs);
    }
    Perturbed { depth, segments }
}

impl SceneBundle {
    /// Replaces observations and detections with a perturbed copy.
    pub fn with_noise(mut self, noise: &NoiseConfig) -> Self {
        let p = perturb_segments(&self, noise.jitter_px, noise.dropout, noise.depth_sigma, noise.seed);
        self.depth = p.depth;
        self.segments = p.segments;
        self.meta.noise = Some(noise.clone());
        self
    }

    pub fn symmetry(&self, object: usize) -> &SymmetryGroup {
        &self.objects[object].mesh.symmetry
    }

    /// World-frame points of a detection, without the resting surface: points
    /// closer than `plane_margin` to (or below) the plane or outside its bounds
    /// are dropped.
    pub fn segment_cloud(&self, view: usize, segment: &Segment, plane_margin: f64) -> Result<PointCloud> {
        let cam = &self.cameras[view];
        let cloud = backproject_pixels(&self.depth[view], segment.uv(cam.width), cam)?;
        let points: Vec<Vec3> = cloud
            .points
            .iter()
            .map(|p| cam.camera_to_world(p))
            .filter(|p| self.surface.signed_distance(p) > plane_margin && self.surface.contains_xy(p))
            .collect();
        if points.is_empty() {
            return Err(Error::EmptySegment);
        }
        Ok(PointCloud::new(points, Frame::World))
    }

    /// The detection of `object` in `view`, if any.
    pub fn segment_of(&self, view: usize, object: usize) -> Option<&Segment> {
        self.segments.get(view)?.iter().find(|s| s.object == object)
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let mkdir = |p: &Path| fs::create_dir_all(p).map_err(|e| Error::io(p, e));
        mkdir(&dir.join("meshes"))?;
        mkdir(&dir.join("views"))?;
        let write = |p: &Path, bytes: &[u8]| fs::write(p, bytes).map_err(|e| Error::io(p, e));
        for m in &self.objects {
            write(&dir.join("meshes").join(format!("{}.obj", m.name)), m.mesh.to_obj().as_bytes())?;
            write(
                &dir.join("meshes").join(format!("{}.sym.json", m.name)),
                m.mesh.symmetry.to_json().as_bytes(),
            )?;
        }
        for (k, d) in self.depth.iter().enumerate() {
            write(&dir.join("views").join(format!("depth_{k}.pgm")), &d.to_pgm())?;
        }
        write(&dir.join("cameras.json"), pretty(&self.cameras).as_bytes())?;
        let poses: Vec<NamedPose> = self
            .objects
            .iter()
            .zip(&self.gt_poses)
            .map(|(m, p)| NamedPose {
                object: m.name.clone(),
                pose: *p,
            })
            .collect();
        write(&dir.join("gt_poses.json"), pretty(&poses).as_bytes())?;
        write(&dir.join("gt_bboxes.json"), pretty(&self.gt_bboxes).as_bytes())?;
        write(&dir.join("segments.json"), pretty(&self.segments).as_bytes())?;
        write(&dir.join("meta.json"), pretty(&self.meta).as_bytes())?;
        Ok(())
    }

    pub fn read(dir: &Path) -> Result<Self> {
        if !dir.is_dir() {
            return Err(Error::io(dir, std::io::Error::new(std::io::ErrorKind::NotFound, "scene bundle not found")));
        }
        let read_text = |p: &Path| fs::read_to_string(p).map_err(|e| Error::io(p, e));
        fn parse<T: serde::de::DeserializeOwned>(p: &Path, text: &str) -> Result<T> {
            serde_json::from_str(text).map_err(|e| Error::json(p, e))
        }
        let path = dir.join("gt_poses.json");
        let poses: Vec<NamedPose> = parse(&path, &read_text(&path)?)?;
        let mut objects = Vec::new();
        for np in &poses {
            let obj = dir.join("meshes").join(format!("{}.obj", np.object));
            let sym = dir.join("meshes").join(format!("{}.sym.json", np.object));
            let symmetry = SymmetryGroup::from_json(&read_text(&sym)?)?;
            objects.push(Model::new(np.object.clone(), TriangleMesh::from_obj(&read_text(&obj)?, symmetry)?));
        }
        let path = dir.join("cameras.json");
        let cameras: Vec<CameraModel> = parse(&path, &read_text(&path)?)?;
        for c in &cameras {
            c.validate()?;
        }
        let mut depth = Vec::new();
        for k in 0..cameras.len() {
            let p = dir.join("views").join(format!("depth_{k}.pgm"));
            let bytes = fs::read(&p).map_err(|e| Error::io(&p, e))?;
            depth.push(DepthImage::from_pgm(&bytes)?);
        }
        let path = dir.join("gt_bboxes.json");
        let gt_bboxes = parse(&path, &read_text(&path)?)?;
        let path = dir.join("segments.json");
        let segments = parse(&path, &read_text(&path)?)?;
        let path = dir.join("meta.json");
        let meta: SceneMeta = parse(&path, &read_text(&path)?)?;
        Ok(Self {
            objects,
            surface: meta.surface.clone(),
            cameras,
            gt_poses: poses.into_iter().map(|p| p.pose).collect(),
            depth,
            gt_bboxes,
            segments,
            meta,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct NamedPose {
    object: String,
    #[serde(flatten)]
    pose: RigidTransform,
}

fn pretty<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s
}
