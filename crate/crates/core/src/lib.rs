//! Sketch-and-extrude CAD models, their annotated code form (SPCC), voxel
//! geometry, evaluation metrics, and the annotation and dataset pipelines.

pub mod annotate;
pub mod cad;
pub mod codec;
pub mod fixtures;
pub mod geometry;
pub mod metrics;
pub mod segment;
pub mod synth;

pub use cad::{
    canonical_hash, BooleanOp, CadModel, Curve, Extent, Extrude, Loop, Point2, Scale, Sketch,
    SketchExtrudePair, Violation,
};
pub use codec::{parse, print_code, print_spcc, Annotations, CodecError, DocMode, SpccDocument};
pub use segment::{segment, Component};
