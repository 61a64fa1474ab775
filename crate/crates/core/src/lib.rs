//! Individual tree crown segmentation from airborne LiDAR.
//!
//! The pipeline reduces a classified point cloud to one surface point per
//! grid cell, normalises heights against a ground model, smooths them, and
//! cuts crowns one tree at a time from the tallest remaining apex using
//! radial height profiles. [`evaluate`] scores detections against a stem
//! map and [`synth`] builds scenes with known answers.

#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(x > 0.0)` also rejects NaN

pub mod error;
pub mod evaluate;
pub mod geometry;
pub mod io;
pub mod preprocess;
pub mod segment;
pub mod synth;
pub mod terrain;

pub use error::{Error, Result};
pub use evaluate::{
    evaluate, CrownClass, Detection, MatchReport, MatchThresholds, Metrics, StemRecord,
};
pub use geometry::{Point2, Point3, PointClass, Polygon2};
pub use preprocess::{preprocess, Lsp, LspSet, PreprocessConfig};
pub use segment::{segment_all, CrownSegment, SegmenterConfig};
pub use terrain::DemRaster;

/// Version of the CSV and grid layouts written by this crate.
pub const FORMAT_VERSION: &str = "1";
