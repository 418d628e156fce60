//! Scene-level 6-DoF pose estimation for cluttered rigid objects.

pub mod error;
pub mod evaluation;
pub mod clustering;
pub mod geometry;
pub mod graph;
pub mod labeler;
pub mod models;
pub mod physics;
pub mod pipeline;
pub mod registration;
pub mod render;
pub mod scene;
pub mod search;
pub mod spatial;

pub use error::{Error, Result};
