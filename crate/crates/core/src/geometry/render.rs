//! Annotation images: shaded voxel views of a model or one component, and
//! stroked 2D sketches.

use std::io::Cursor;
use std::path::Path;

use super::frame::{dot, normalize, Vec3};
use super::region::{curve_polyline, sketch_bounds};
use super::voxel::{evaluate_in, evaluate_model, evaluate_union, VoxelSolid, DEFAULT_RESOLUTION};
use super::GeometryError;
use crate::cad::{BooleanOp, CadModel, Sketch};
use crate::segment::{segment, Component, DEFAULT_THRESHOLD};

pub const DEFAULT_IMAGE_SIZE: u32 = 448;
pub const DEFAULT_OTHERS_TRANSPARENCY: f64 = 0.85;
pub const CUT_BLUE: [u8; 3] = [0, 0, 255];
const BODY_GRAY: [u8; 3] = [190, 190, 190];
const HIGHLIGHT: [u8; 3] = [235, 140, 50];
const WHITE: [u8; 4] = [255, 255, 255, 255];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RasterImage {
    pub width: u32,
    pub height: u32,
    /// Row-major RGBA.
    pub data: Vec<u8>,
}

impl RasterImage {
    pub fn filled(width: u32, height: u32, rgba: [u8; 4]) -> Self {
        let data = rgba
            .iter()
            .copied()
            .cycle()
            .take(width as usize * height as usize * 4)
            .collect();
        Self {
            width,
            height,
            data,
        }
    }

    fn offset(&self, x: u32, y: u32) -> usize {
        (y as usize * self.width as usize + x as usize) * 4
    }

    pub fn pixel(&self, x: u32, y: u32) -> [u8; 4] {
        let o = self.offset(x, y);
        self.data[o..o + 4].try_into().unwrap()
    }

    pub fn pixels(&self) -> impl Iterator<Item = [u8; 4]> + '_ {
        self.data.chunks_exact(4).map(|c| [c[0], c[1], c[2], c[3]])
    }

    /// Composites `rgb` with the given opacity over the pixel, if in range.
    fn paint(&mut self, x: i64, y: i64, rgb: [u8; 3], opacity: f64) {
        if x < 0 || y < 0 || x >= i64::from(self.width) || y >= i64::from(self.height) {
            return;
        }
        let o = self.offset(x as u32, y as u32);
        for (c, &src) in self.data[o..o + 3].iter_mut().zip(&rgb) {
            *c = (opacity * f64::from(src) + (1.0 - opacity) * f64::from(*c)).round() as u8;
        }
        self.data[o + 3] = 255;
    }

    pub fn to_png(&self) -> Vec<u8> {
        let mut out = Vec::new();
        image::write_buffer_with_format(
            &mut Cursor::new(&mut out),
            &self.data,
            self.width,
            self.height,
            image::ExtendedColorType::Rgba8,
            image::ImageFormat::Png,
        )
        .expect("in-memory PNG encoding");
        out
    }

    pub fn save_png(&self, path: &Path) -> std::io::Result<()> {
        std::fs::write(path, self.to_png())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RenderOptions {
    pub size: u32,
    pub resolution: usize,
    /// Transparency of components other than the highlighted one.
    pub others_transparency: f64,
}

impl Default for RenderOptions {
    fn default() -> Self {
        Self {
            size: DEFAULT_IMAGE_SIZE,
            resolution: DEFAULT_RESOLUTION,
            others_transparency: DEFAULT_OTHERS_TRANSPARENCY,
        }
    }
}

/// Fixed isometric camera: looking from (1,1,1) towards the origin, +Z up.
struct Camera {
    view: Vec3,
    right: Vec3,
    up: Vec3,
    scale: f64,
    offset: [f64; 2],
    size: u32,
}

impl Camera {
    fn fit(solid: &VoxelSolid, size: u32) -> Self {
        let view = normalize([1.0, 1.0, 1.0]);
        let right = normalize([-1.0, 1.0, 0.0]);
        let up = normalize([-1.0, -1.0, 2.0]);
        let (min, max) = (solid.bounds.min, solid.bounds.max());
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for n in 0..8 {
            let c = [
                if n & 1 == 0 { min[0] } else { max[0] },
                if n & 2 == 0 { min[1] } else { max[1] },
                if n & 4 == 0 { min[2] } else { max[2] },
            ];
            let s = [dot(c, right), dot(c, up)];
            for a in 0..2 {
                lo[a] = lo[a].min(s[a]);
                hi[a] = hi[a].max(s[a]);
            }
        }
        let span = (hi[0] - lo[0]).max(hi[1] - lo[1]).max(1e-12);
        Self {
            view,
            right,
            up,
            scale: f64::from(size) * 0.9 / span,
            offset: [(lo[0] + hi[0]) / 2.0, (lo[1] + hi[1]) / 2.0],
            size,
        }
    }

    fn project(&self, p: Vec3) -> [f64; 2] {
        let half = f64::from(self.size) / 2.0;
        [
            half + (dot(p, self.right) - self.offset[0]) * self.scale,
            half - (dot(p, self.up) - self.offset[1]) * self.scale,
        ]
    }
}

struct Splat {
    depth: f64,
    center: [f64; 2],
    rgb: [u8; 3],
}

fn shade(rgb: [u8; 3], exposed: u8) -> [u8; 3] {
    // Faces facing the camera: +z (bit 4), +x (bit 0), +y (bit 2).
    let factor = if exposed & 0b1_0000 != 0 {
        1.0
    } else if exposed & 0b1 != 0 {
        0.8
    } else if exposed & 0b100 != 0 {
        0.65
    } else {
        0.5
    };
    rgb.map(|c| (f64::from(c) * factor).round() as u8)
}

fn splats(solid: &VoxelSolid, camera: &Camera, rgb: [u8; 3]) -> Vec<Splat> {
    let mut out: Vec<Splat> = solid
        .boundary_indices()
        .into_iter()
        .map(|idx| {
            let [i, j, k] = solid.coords(idx);
            let c = solid.center(i, j, k);
            Splat {
                depth: dot(c, camera.view),
                center: camera.project(c),
                rgb: shade(rgb, solid.exposed_faces(idx)),
            }
        })
        .collect();
    // Far to near; the sort is stable so ties keep grid order.
    out.sort_by(|a, b| a.depth.total_cmp(&b.depth));
    out
}

fn draw(img: &mut RasterImage, splats: &[Splat], half: i64, opacity: f64) {
    for s in splats {
        let (cx, cy) = (s.center[0].floor() as i64, s.center[1].floor() as i64);
        for y in cy - half..=cy + half {
            for x in cx - half..=cx + half {
                img.paint(x, y, s.rgb, opacity);
            }
        }
    }
}

/// A model evaluated once for all of its annotation images.
pub struct Scene<'a> {
    model: &'a CadModel,
    components: Vec<Component>,
    solid: VoxelSolid,
    camera: Camera,
    half: i64,
    opts: RenderOptions,
}

impl<'a> Scene<'a> {
    pub fn new(model: &'a CadModel, opts: RenderOptions) -> Result<Self, GeometryError> {
        Self::with_components(model, segment(model, DEFAULT_THRESHOLD), opts)
    }

    pub fn with_components(
        model: &'a CadModel,
        components: Vec<Component>,
        opts: RenderOptions,
    ) -> Result<Self, GeometryError> {
        let solid = evaluate_model(model, opts.resolution);
        if solid.is_empty() {
            return Err(GeometryError::EmptySolid);
        }
        let camera = Camera::fit(&solid, opts.size);
        let half = ((solid.voxel_size() * camera.scale * 0.75).ceil() as i64).max(1);
        Ok(Self {
            model,
            components,
            solid,
            camera,
            half,
            opts,
        })
    }

    pub fn components(&self) -> &[Component] {
        &self.components
    }

    pub fn solid(&self) -> &VoxelSolid {
        &self.solid
    }

    fn check(&self, index: usize) -> Result<&Component, GeometryError> {
        self.components
            .get(index)
            .ok_or(GeometryError::ComponentOutOfRange {
                index,
                count: self.components.len(),
            })
    }

    /// Union of the component's prisms on the model grid.
    pub fn component_solid(&self, index: usize) -> Result<VoxelSolid, GeometryError> {
        let c = self.check(index)?;
        Ok(evaluate_union(
            &self.model.pairs[c.pairs.clone()],
            self.solid.bounds,
            self.opts.resolution,
        ))
    }

    fn blank(&self) -> RasterImage {
        RasterImage::filled(self.opts.size, self.opts.size, WHITE)
    }

    /// The finished model, opaque.
    pub fn full_view(&self) -> RasterImage {
        let mut img = self.blank();
        draw(&mut img, &splats(&self.solid, &self.camera, BODY_GRAY), self.half, 1.0);
        img
    }

    /// The model with everything faded except component `index`; a cutting
    /// component is drawn in pure blue on top.
    pub fn outline_view(&self, index: usize) -> Result<RasterImage, GeometryError> {
        let c = self.check(index)?;
        let tool = self.component_solid(index)?;
        let target = if c.op() == BooleanOp::Cut {
            tool
        } else {
            // The part of the finished solid this component contributes.
            let mut own = tool;
            for (o, &s) in own.occupancy.iter_mut().zip(&self.solid.occupancy) {
                *o = *o && s;
            }
            own
        };
        let color = if c.op() == BooleanOp::Cut {
            CUT_BLUE
        } else {
            HIGHLIGHT
        };
        let mut img = self.blank();
        let opacity = 1.0 - self.opts.others_transparency;
        draw(&mut img, &splats(&self.solid, &self.camera, BODY_GRAY), self.half, opacity);
        draw(&mut img, &splats(&target, &self.camera, color), self.half, 1.0);
        Ok(img)
    }

    /// Component `index` on its own, as if it were a new body.
    pub fn component_view(&self, index: usize) -> Result<RasterImage, GeometryError> {
        let tool = self.component_solid(index)?;
        if tool.is_empty() {
            return Err(GeometryError::EmptySolid);
        }
        let mut img = self.blank();
        draw(&mut img, &splats(&tool, &self.camera, BODY_GRAY), self.half, 1.0);
        Ok(img)
    }
}

/// Full view, or the outline view of one component when `highlight` is set.
pub fn render_views(
    model: &CadModel,
    highlight: Option<usize>,
    opts: RenderOptions,
) -> Result<RasterImage, GeometryError> {
    let scene = Scene::new(model, opts)?;
    match highlight {
        None => Ok(scene.full_view()),
        Some(k) => scene.outline_view(k),
    }
}

/// Black strokes on white, fitted with a 5% margin.
pub fn render_sketch(sketch: &Sketch, size: u32) -> RasterImage {
    let mut img = RasterImage::filled(size, size, WHITE);
    let Some([x0, y0, x1, y1]) = sketch_bounds(sketch) else {
        return img;
    };
    let span = (x1 - x0).max(y1 - y0).max(1e-9);
    let scale = f64::from(size) * 0.9 / span;
    let (cx, cy) = ((x0 + x1) / 2.0, (y0 + y1) / 2.0);
    let half = f64::from(size) / 2.0;
    let to_px = |p: [f64; 2]| [half + (p[0] - cx) * scale, half - (p[1] - cy) * scale];
    let radius: f64 = 1.5;
    let mut stamp = |p: [f64; 2]| {
        let r = radius.ceil() as i64;
        let (px, py) = (p[0].floor() as i64, p[1].floor() as i64);
        for y in py - r..=py + r {
            for x in px - r..=px + r {
                let (dx, dy) = (x as f64 + 0.5 - p[0], y as f64 + 0.5 - p[1]);
                if dx * dx + dy * dy <= radius * radius {
                    img.paint(x, y, [0, 0, 0], 1.0);
                }
            }
        }
    };
    for lp in &sketch.loops {
        let mut cursor = lp.start();
        for curve in &lp.curves {
            let pts = curve_polyline(cursor, curve, 0.5 / scale);
            cursor = curve.end();
            for w in pts.windows(2) {
                let (a, b) = (to_px(w[0]), to_px(w[1]));
                let len = (b[0] - a[0]).hypot(b[1] - a[1]);
                let n = (len / 0.5).ceil().max(1.0) as usize;
                for i in 0..=n {
                    let t = i as f64 / n as f64;
                    stamp([a[0] + (b[0] - a[0]) * t, a[1] + (b[1] - a[1]) * t]);
                }
            }
        }
    }
    img
}

/// Render of the full model on a fresh grid, or `None` when it is empty.
pub fn render_model(model: &CadModel, opts: RenderOptions) -> Option<RasterImage> {
    Scene::new(model, opts).ok().map(|s| s.full_view())
}

/// Evaluates `model` on an explicit grid; used when several views must line
/// up.
pub fn solid_on(model: &CadModel, like: &VoxelSolid) -> VoxelSolid {
    evaluate_in(model, like.bounds, like.resolution)
}
