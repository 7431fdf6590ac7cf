//! Reconstruction of building models from photogrammetric point clouds.
//!
//! The pipeline selects building points with a mask, clusters them per
//! building, labels each point with a roof shape, fits planes, cylinders and
//! spheres with a multi-cue hierarchical RANSAC, and assembles watertight
//! models that can be rendered back to rasters for evaluation.

pub mod cluster;
pub mod error;
pub mod eval;
pub mod geom;
pub mod index;
pub mod io;
pub mod model;
pub mod normals;
pub mod point;
pub mod preprocess;
pub mod primitive;
pub mod ransac;
pub mod raster;
pub mod segment;
pub mod stats;
pub mod synth;

pub use error::{Error, Result};
pub use point::{Point, PointCloud, ShapeLabel};
pub use primitive::{Primitive, Shape};
pub use raster::{RasterGrid, Reducer};
