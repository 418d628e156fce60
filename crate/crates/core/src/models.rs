//! Built-in object models used by the synthetic scenes.

use crate::geometry::{TriangleMesh, Vec3};

#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub name: String,
    pub mesh: TriangleMesh,
}

impl Model {
    pub fn new(name: impl Into<String>, mesh: TriangleMesh) -> Self {
        Self { name: name.into(), mesh }
    }
}

/// Six convex household-sized objects with distinct shapes.
pub fn library() -> Vec<Model> {
    vec![
        Model::new("box_long", TriangleMesh::cuboid(Vec3::new(0.12, 0.07, 0.05))),
        Model::new("box_flat", TriangleMesh::cuboid(Vec3::new(0.15, 0.10, 0.035))),
        Model::new("can", TriangleMesh::cylinder(0.035, 0.11, 24)),
        Model::new("puck", TriangleMesh::cylinder(0.05, 0.045, 24)),
        Model::new("wedge", TriangleMesh::wedge(0.12, 0.08, 0.05)),
        Model::new("ramp", TriangleMesh::wedge(0.14, 0.06, 0.07)),
    ]
}
