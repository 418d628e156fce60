use nalgebra::{Quaternion, Unit, UnitQuaternion};
use serde::{Deserialize, Serialize};

use super::transform::{canonical, geodesic_angle, Vec3};
use crate::error::{Error, Result};

/// Rotational symmetries of a model, expressed in the model frame.
///
/// `discrete` always holds the identity. `continuous_axes` lists revolution
/// axes; a model with two or more non-parallel axes is treated as fully
/// rotation invariant.
#[derive(Clone, Debug, PartialEq)]
pub struct SymmetryGroup {
    discrete: Vec<UnitQuaternion<f64>>,
    continuous_axes: Vec<Vec3>,
}

impl Default for SymmetryGroup {
    fn default() -> Self {
        Self::trivial()
    }
}

impl SymmetryGroup {
    pub fn trivial() -> Self {
        Self {
            discrete: vec![UnitQuaternion::identity()],
            continuous_axes: Vec::new(),
        }
    }

    pub fn new(discrete: Vec<UnitQuaternion<f64>>, axes: Vec<Vec3>) -> Self {
        let mut elements: Vec<UnitQuaternion<f64>> = vec![UnitQuaternion::identity()];
        for q in discrete {
            let q = canonical(q);
            if elements.iter().all(|e| geodesic_angle(e, &q) > 1e-6) {
                elements.push(q);
            }
        }
        let axes = axes
            .into_iter()
            .filter(|a| a.norm() > 1e-12)
            .map(|a| a.normalize())
            .collect();
        Self {
            discrete: elements,
            continuous_axes: axes,
        }
    }

    /// `n`-fold rotational symmetry about `axis`.
    pub fn cyclic(axis: Vec3, n: usize) -> Self {
        let axis = Unit::new_normalize(axis);
        let elements = (1..n.max(1))
            .map(|k| UnitQuaternion::from_axis_angle(&axis, std::f64::consts::TAU * k as f64 / n as f64))
            .collect();
        Self::new(elements, Vec::new())
    }

    /// Half turns about each coordinate axis, the group of a box with three
    /// distinct side lengths.
    pub fn box_symmetry() -> Self {
        let pi = std::f64::consts::PI;
        Self::new(
            vec![
                UnitQuaternion::from_axis_angle(&Vec3::x_axis(), pi),
                UnitQuaternion::from_axis_angle(&Vec3::y_axis(), pi),
                UnitQuaternion::from_axis_angle(&Vec3::z_axis(), pi),
            ],
            Vec::new(),
        )
    }

    /// Solid of revolution about model z, symmetric under flipping end to end.
    pub fn cylinder_symmetry() -> Self {
        Self::new(
            vec![UnitQuaternion::from_axis_angle(&Vec3::x_axis(), std::f64::consts::PI)],
            vec![Vec3::z()],
        )
    }

    pub fn discrete(&self) -> &[UnitQuaternion<f64>] {
        &self.discrete
    }

    pub fn continuous_axes(&self) -> &[Vec3] {
        &self.continuous_axes
    }

    pub fn is_trivial(&self) -> bool {
        self.discrete.len() == 1 && self.continuous_axes.is_empty()
    }

    pub fn fully_symmetric(&self) -> bool {
        self.continuous_axes
            .iter()
            .skip(1)
            .any(|a| a.cross(&self.continuous_axes[0]).norm() > 1e-9)
    }

    /// True if the discrete part is closed under pairwise products (to `tol` rad).
    pub fn is_closed(&self, tol: f64) -> bool {
        self.discrete.iter().all(|a| {
            self.discrete.iter().all(|b| {
                let p = a * b;
                self.discrete.iter().any(|e| geodesic_angle(e, &p) <= tol)
            })
        })
    }

    /// Distance between `r1` and `r2` in SO(3) modulo this group, radians.
    ///
    /// Minimizes the geodesic angle between `r1` and `r2 · s` over group
    /// elements `s`. Spins about a revolution axis are minimized in closed
    /// form: for a relative rotation `(w, v)` the best spin about unit axis
    /// `a` leaves a scalar part of `sqrt(w² + (a·v)²)`.
    pub fn rotation_distance(&self, r1: &UnitQuaternion<f64>, r2: &UnitQuaternion<f64>) -> f64 {
        if self.fully_symmetric() {
            return 0.0;
        }
        let mut best = f64::INFINITY;
        for s in &self.discrete {
            let rel = (r2 * s).inverse() * r1;
            let d = match self.continuous_axes.first() {
                None => geodesic_angle(&rel, &UnitQuaternion::identity()),
                Some(axis) => {
                    let q = rel.quaternion();
                    let along = axis.dot(&q.vector());
                    let scalar = (q.w * q.w + along * along).sqrt();
                    let residual = (q.vector().norm_squared() - along * along).max(0.0).sqrt();
                    2.0 * residual.atan2(scalar)
                }
            };
            best = best.min(d);
        }
        best
    }

    /// The member of `{ r · s }` (discrete elements only) closest to `target`.
    pub fn closest_equivalent(
        &self,
        r: &UnitQuaternion<f64>,
        target: &UnitQuaternion<f64>,
    ) -> UnitQuaternion<f64> {
        self.discrete
            .iter()
            .map(|s| r * s)
            .min_by(|a, b| {
                geodesic_angle(a, target)
                    .partial_cmp(&geodesic_angle(b, target))
                    .unwrap_or(std::cmp::Ordering::Equal)
            })
            .unwrap_or(*r)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&SymmetryFile::from(self)).expect("symmetry serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: SymmetryFile =
            serde_json::from_str(text).map_err(|e| Error::parse("symmetry sidecar", e.to_string()))?;
        file.try_into()
    }
}

/// On-disk sidecar: `{"discrete": [[w,x,y,z], ...], "axes": [[x,y,z], ...]}`.
#[derive(Serialize, Deserialize)]
struct SymmetryFile {
    discrete: Vec<[f64; 4]>,
    #[serde(default)]
    axes: Vec<[f64; 3]>,
}

impl From<&SymmetryGroup> for SymmetryFile {
    fn from(g: &SymmetryGroup) -> Self {
        Self {
            discrete: g
                .discrete
                .iter()
                .map(|q| [q.w, q.i, q.j, q.k])
                .collect(),
            axes: g.continuous_axes.iter().map(|a| [a.x, a.y, a.z]).collect(),
        }
    }
}

impl TryFrom<SymmetryFile> for SymmetryGroup {
    type Error = Error;

    fn try_from(file: SymmetryFile) -> Result<Self> {
        let mut elements = Vec::with_capacity(file.discrete.len());
        for q in file.discrete {
            let quat = Quaternion::new(q[0], q[1], q[2], q[3]);
            if !(quat.norm() > 1e-12) {
                return Err(Error::parse("symmetry sidecar", "zero quaternion"));
            }
            elements.push(UnitQuaternion::from_quaternion(quat));
        }
        let axes = file.axes.iter().map(|a| Vec3::new(a[0], a[1], a[2])).collect();
        let group = SymmetryGroup::new(elements, axes);
        if !group.is_closed(1e-6) {
            return Err(Error::parse("symmetry sidecar", "discrete elements are not closed under products"));
        }
        Ok(group)
    }
}
