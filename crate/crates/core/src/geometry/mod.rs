//! Voxel realization of models, surface sampling, buildability and the
//! annotation renderers.

mod frame;
mod region;
mod render;
mod sample;
mod voxel;

use serde::Serialize;
use thiserror::Error;

pub use frame::{plane_frame, PlaneFrame, Vec3, STEP};
pub use region::{arc_geometry, point_in_sketch, sketch_bounds, sketch_has_area, ArcGeom, Vec2};
pub use render::{
    render_model, render_sketch, render_views, solid_on, RasterImage, RenderOptions, Scene,
    CUT_BLUE, DEFAULT_IMAGE_SIZE, DEFAULT_OTHERS_TRANSPARENCY,
};
pub use sample::{
    read_cloud, sample_surface_points, write_cloud, CloudFormat, PointCloud, DEFAULT_SAMPLE_COUNT,
};
pub use voxel::{
    apply_op, evaluate_in, evaluate_model, evaluate_union, extent_interval, model_bounds,
    rasterize_pair, Bounds, Prism, VoxelSolid, DEFAULT_RESOLUTION,
};

use crate::cad::{validate_static, CadModel};
use crate::codec;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GeometryError {
    #[error("empty solid")]
    EmptySolid,
    #[error("component {index} out of range ({count} components)")]
    ComponentOutOfRange { index: usize, count: usize },
}

/// Lattice used to decide whether a sketch encloses any area.
const AREA_SAMPLES: usize = 64;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Buildability {
    pub ok: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

impl Buildability {
    fn fail(reason: impl Into<String>) -> Self {
        Self {
            ok: false,
            reason: Some(reason.into()),
        }
    }
}

/// Static validity, a non-empty region for every sketch, and a non-empty
/// folded solid.
pub fn check_buildable(model: &CadModel, resolution: usize) -> Buildability {
    if let Some(v) = validate_static(model).first() {
        return Buildability::fail(v.to_string());
    }
    for (i, pair) in model.pairs.iter().enumerate() {
        if !sketch_has_area(&pair.sketch, AREA_SAMPLES) {
            return Buildability::fail(format!("sketch of pair {i} encloses no area"));
        }
    }
    if evaluate_model(model, resolution).is_empty() {
        return Buildability::fail("empty solid");
    }
    Buildability {
        ok: true,
        reason: None,
    }
}

/// [`check_buildable`] for generated text, where parse failures count too.
pub fn check_text_buildable(text: &str, resolution: usize) -> Buildability {
    match codec::parse(text) {
        Ok(doc) => check_buildable(&doc.model, resolution),
        Err(e) => Buildability::fail(format!("parse error: {e}")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cad::{Curve, Point2};
    use crate::fixtures;

    #[test]
    fn buildability_reasons() {
        assert!(check_buildable(&fixtures::unit_cube("c"), 32).ok);

        let gone = fixtures::cube_fully_cut("g");
        let b = check_buildable(&gone, 32);
        assert!(!b.ok);
        assert_eq!(b.reason.as_deref(), Some("empty solid"));

        let mut open = fixtures::unit_cube("o");
        open.pairs[0].sketch.loops[0].curves[3] = Curve::Line {
            end: Point2::new(0, 5),
        };
        let b = check_buildable(&open, 32);
        assert!(!b.ok);
        assert!(b.reason.unwrap().contains("loop 0"));
    }

    #[test]
    fn text_buildability() {
        let code = codec::print_code(&fixtures::unit_cube("c")).unwrap();
        assert!(check_text_buildable(&code, 16).ok);
        let b = check_text_buildable("sketch1 = Sketch(\n", 16);
        assert!(b.reason.unwrap().starts_with("parse error"));
    }
}
