use rayon::prelude::*;

use super::frame::{plane_frame, PlaneFrame, Vec3, STEP};
use super::region::{point_in_sketch, sketch_bounds};
use crate::cad::{BooleanOp, CadModel, Extent, SketchExtrudePair};

pub const DEFAULT_RESOLUTION: usize = 64;

/// Cubic occupancy grid over an axis-aligned cube of model space. Voxel
/// `(i, j, k)` is stored at `i + r*(j + r*k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelSolid {
    pub resolution: usize,
    pub bounds: Bounds,
    pub occupancy: Vec<bool>,
}

/// A cube `[min, min + size]` per axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bounds {
    pub min: Vec3,
    pub size: f64,
}

impl Bounds {
    pub fn max(&self) -> Vec3 {
        self.min.map(|m| m + self.size)
    }

    pub fn contains(&self, p: Vec3) -> bool {
        p.iter()
            .zip(self.min)
            .all(|(&c, m)| c >= m && c <= m + self.size)
    }
}

impl VoxelSolid {
    pub fn empty(resolution: usize, bounds: Bounds) -> Self {
        Self {
            resolution,
            bounds,
            occupancy: vec![false; resolution.pow(3)],
        }
    }

    pub fn voxel_size(&self) -> f64 {
        self.bounds.size / self.resolution as f64
    }

    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.resolution * (j + self.resolution * k)
    }

    pub fn coords(&self, index: usize) -> [usize; 3] {
        let r = self.resolution;
        [index % r, (index / r) % r, index / (r * r)]
    }

    pub fn center(&self, i: usize, j: usize, k: usize) -> Vec3 {
        let h = self.voxel_size();
        let min = self.bounds.min;
        [
            min[0] + (i as f64 + 0.5) * h,
            min[1] + (j as f64 + 0.5) * h,
            min[2] + (k as f64 + 0.5) * h,
        ]
    }

    pub fn get(&self, i: usize, j: usize, k: usize) -> bool {
        self.occupancy[self.index(i, j, k)]
    }

    /// Occupancy with everything outside the grid treated as empty.
    pub fn get_signed(&self, i: isize, j: isize, k: isize) -> bool {
        let r = self.resolution as isize;
        if [i, j, k].iter().any(|&c| c < 0 || c >= r) {
            return false;
        }
        self.get(i as usize, j as usize, k as usize)
    }

    pub fn count(&self) -> usize {
        self.occupancy.iter().filter(|&&o| o).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.occupancy.contains(&true)
    }

    pub fn fill_fraction(&self) -> f64 {
        self.count() as f64 / self.occupancy.len() as f64
    }

    /// Occupied voxels with at least one empty 6-neighbour.
    pub fn boundary_indices(&self) -> Vec<usize> {
        (0..self.occupancy.len())
            .filter(|&idx| self.occupancy[idx] && self.exposed_faces(idx) != 0)
            .collect()
    }

    /// Bit mask of empty neighbours: +x, -x, +y, -y, +z, -z.
    pub fn exposed_faces(&self, idx: usize) -> u8 {
        let [i, j, k] = self.coords(idx).map(|c| c as isize);
        let neighbours = [
            (i + 1, j, k),
            (i - 1, j, k),
            (i, j + 1, k),
            (i, j - 1, k),
            (i, j, k + 1),
            (i, j, k - 1),
        ];
        neighbours
            .iter()
            .enumerate()
            .filter(|(_, &(a, b, c))| !self.get_signed(a, b, c))
            .fold(0, |mask, (bit, _)| mask | (1 << bit))
    }
}

/// Extent of an extrusion along the frame normal, in steps.
pub fn extent_interval(pair: &SketchExtrudePair) -> (f64, f64) {
    let e = &pair.extrude;
    let (d1, d2) = (f64::from(e.dist1), f64::from(e.dist2));
    match e.extent {
        Extent::OneSided => (0.0, d1),
        Extent::Symmetric => (-d1 / 2.0, d1 / 2.0),
        Extent::TwoSided => (-d2, d1),
    }
}

/// A sketch-extrude pair prepared for repeated membership queries.
pub struct Prism<'a> {
    pair: &'a SketchExtrudePair,
    frame: PlaneFrame,
    scale: f64,
    depth: (f64, f64),
    /// Sketch-plane bounds in steps, already scaled.
    sketch_box: Option<[f64; 4]>,
}

impl<'a> Prism<'a> {
    pub fn new(pair: &'a SketchExtrudePair) -> Self {
        let scale = pair.extrude.scale.value();
        Self {
            pair,
            frame: plane_frame(&pair.extrude),
            scale,
            depth: extent_interval(pair),
            sketch_box: sketch_bounds(&pair.sketch).map(|b| b.map(|c| c * scale)),
        }
    }

    pub fn contains(&self, p: Vec3) -> bool {
        if self.scale <= 0.0 {
            return false;
        }
        let Some([x0, y0, x1, y1]) = self.sketch_box else {
            return false;
        };
        let [x, y, z] = self.frame.to_local(p);
        if z < self.depth.0 || z > self.depth.1 || x < x0 || x > x1 || y < y0 || y > y1 {
            return false;
        }
        point_in_sketch(&self.pair.sketch, [x / self.scale, y / self.scale])
    }

    /// World-space corners of the bounding prism, if the sketch has extent.
    pub fn corners(&self) -> Option<[Vec3; 8]> {
        let [x0, y0, x1, y1] = self.sketch_box?;
        let (z0, z1) = self.depth;
        let mut out = [[0.0; 3]; 8];
        for (n, c) in out.iter_mut().enumerate() {
            let local = [
                if n & 1 == 0 { x0 } else { x1 },
                if n & 2 == 0 { y0 } else { y1 },
                if n & 4 == 0 { z0 } else { z1 },
            ];
            *c = self.frame.to_world(local);
        }
        Some(out)
    }
}

/// Cubic bounds enclosing every pair's bounding prism with a 5% margin on
/// each side.
pub fn model_bounds(model: &CadModel) -> Bounds {
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for pair in &model.pairs {
        let Some(corners) = Prism::new(pair).corners() else {
            continue;
        };
        for c in corners {
            for a in 0..3 {
                lo[a] = lo[a].min(c[a]);
                hi[a] = hi[a].max(c[a]);
            }
        }
    }
    if lo[0] > hi[0] || lo.iter().chain(&hi).any(|v| !v.is_finite()) {
        return Bounds {
            min: [0.0; 3],
            size: 1.0,
        };
    }
    let extent = (0..3).map(|a| hi[a] - lo[a]).fold(0.0, f64::max);
    let size = (extent * 1.1).max(4.0 * STEP);
    let min = std::array::from_fn(|a| (lo[a] + hi[a]) / 2.0 - size / 2.0);
    Bounds { min, size }
}

/// Occupancy of a single pair's prism on the given grid.
pub fn rasterize_pair(pair: &SketchExtrudePair, bounds: Bounds, resolution: usize) -> Vec<bool> {
    let grid = VoxelSolid::empty(resolution, bounds);
    let prism = Prism::new(pair);
    // Cull with the world box of the prism, widened against rounding.
    let Some(corners) = prism.corners() else {
        return grid.occupancy;
    };
    let eps = 1e-9;
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for c in corners {
        for a in 0..3 {
            lo[a] = lo[a].min(c[a] - eps);
            hi[a] = hi[a].max(c[a] + eps);
        }
    }
    let r = resolution;
    let mut occupancy = grid.occupancy.clone();
    occupancy
        .par_chunks_mut(r * r)
        .enumerate()
        .for_each(|(k, slab)| {
            for j in 0..r {
                for i in 0..r {
                    let p = grid.center(i, j, k);
                    if (0..3).all(|a| p[a] >= lo[a] && p[a] <= hi[a]) && prism.contains(p) {
                        slab[i + r * j] = true;
                    }
                }
            }
        });
    occupancy
}

/// Folds a pair's occupancy into the accumulated solid.
pub fn apply_op(acc: &mut [bool], tool: &[bool], op: BooleanOp) {
    for (a, &t) in acc.iter_mut().zip(tool) {
        *a = match op {
            BooleanOp::NewBody | BooleanOp::Join => *a || t,
            BooleanOp::Cut => *a && !t,
            BooleanOp::Intersect => *a && t,
        };
    }
}

/// Solid of `model` on its own bounds: pairs folded in sequence order, with
/// NewBody/Join as union, Cut as difference and Intersect as intersection.
pub fn evaluate_model(model: &CadModel, resolution: usize) -> VoxelSolid {
    evaluate_in(model, model_bounds(model), resolution)
}

pub fn evaluate_in(model: &CadModel, bounds: Bounds, resolution: usize) -> VoxelSolid {
    let mut solid = VoxelSolid::empty(resolution, bounds);
    let tools: Vec<Vec<bool>> = model
        .pairs
        .par_iter()
        .map(|p| rasterize_pair(p, bounds, resolution))
        .collect();
    for (pair, tool) in model.pairs.iter().zip(&tools) {
        apply_op(&mut solid.occupancy, tool, pair.extrude.op);
    }
    solid
}

/// Union of the prisms of `pairs` regardless of their boolean op.
pub fn evaluate_union(pairs: &[SketchExtrudePair], bounds: Bounds, resolution: usize) -> VoxelSolid {
    let mut solid = VoxelSolid::empty(resolution, bounds);
    for pair in pairs {
        let tool = rasterize_pair(pair, bounds, resolution);
        apply_op(&mut solid.occupancy, &tool, BooleanOp::Join);
    }
    solid
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    /// Per-voxel fold straight from the definitions.
    fn brute_force(model: &CadModel, resolution: usize) -> Vec<bool> {
        let grid = VoxelSolid::empty(resolution, model_bounds(model));
        let mut out = Vec::with_capacity(grid.occupancy.len());
        for k in 0..resolution {
            for j in 0..resolution {
                for i in 0..resolution {
                    let p = grid.center(i, j, k);
                    let mut inside = false;
                    for pair in &model.pairs {
                        let f = plane_frame(&pair.extrude);
                        let [x, y, z] = f.to_local(p);
                        let s = pair.extrude.scale.value();
                        let (lo, hi) = extent_interval(pair);
                        let member = s > 0.0
                            && z >= lo
                            && z <= hi
                            && point_in_sketch(&pair.sketch, [x / s, y / s]);
                        inside = match pair.extrude.op {
                            BooleanOp::NewBody | BooleanOp::Join => inside || member,
                            BooleanOp::Cut => inside && !member,
                            BooleanOp::Intersect => inside && member,
                        };
                    }
                    out.push(inside);
                }
            }
        }
        out
    }

    #[test]
    fn join_with_identical_cube_is_idempotent() {
        let single = fixtures::unit_cube("a");
        let mut double = single.clone();
        let mut again = single.pairs[0].clone();
        again.extrude.op = BooleanOp::Join;
        double.pairs.push(again);
        assert_eq!(
            evaluate_model(&single, 32).occupancy,
            evaluate_model(&double, 32).occupancy
        );
    }

    #[test]
    fn cut_matches_brute_force() {
        let m = fixtures::cube_minus_centered_cube("c");
        let solid = evaluate_model(&m, 24);
        let oracle = brute_force(&m, 24);
        assert_eq!(solid.occupancy, oracle);
        let full = evaluate_model(&fixtures::unit_cube("a"), 24);
        assert!(solid.count() < full.count());
        assert!(solid.count() > 0);
    }

    #[test]
    fn intersect_with_disjoint_cube_is_empty() {
        let m = fixtures::cube_intersect_disjoint("d");
        assert!(evaluate_model(&m, 32).is_empty());
    }

    #[test]
    fn cube_fills_expected_box() {
        // 32-step cube on a grid 1.1 times its size.
        let solid = evaluate_model(&fixtures::unit_cube("a"), 22);
        let per_axis = 20usize;
        assert_eq!(solid.count(), per_axis.pow(3));
        assert!(!solid.get(0, 0, 0));
    }

    #[test]
    fn boolean_monotonicity() {
        for seed in 0..20 {
            let m = fixtures::random_model_from_seed(seed, 3);
            let bounds = model_bounds(&m);
            let mut acc = VoxelSolid::empty(16, bounds).occupancy;
            for pair in &m.pairs {
                let before = acc.clone();
                let tool = rasterize_pair(pair, bounds, 16);
                apply_op(&mut acc, &tool, pair.extrude.op);
                let (b, a) = (
                    before.iter().filter(|&&x| x).count(),
                    acc.iter().filter(|&&x| x).count(),
                );
                match pair.extrude.op {
                    BooleanOp::NewBody | BooleanOp::Join => assert!(a >= b),
                    BooleanOp::Cut => assert!(a <= b),
                    BooleanOp::Intersect => {
                        for i in 0..acc.len() {
                            if acc[i] {
                                assert!(before[i] && tool[i]);
                            }
                        }
                    }
                }
            }
            assert_eq!(acc, brute_force(&m, 16), "seed {seed}");
        }
    }

    #[test]
    fn finer_grid_refines_coarse_fill() {
        for seed in 0..10 {
            let m = fixtures::random_model_from_seed(seed, 2);
            let coarse = evaluate_model(&m, 24).fill_fraction();
            let fine = evaluate_model(&m, 48).fill_fraction();
            assert!((coarse - fine).abs() <= 0.1, "seed {seed}: {coarse} vs {fine}");
        }
    }

    #[test]
    fn exposed_faces_of_lone_voxel() {
        let mut s = VoxelSolid::empty(
            3,
            Bounds {
                min: [0.0; 3],
                size: 1.0,
            },
        );
        let idx = s.index(1, 1, 1);
        s.occupancy[idx] = true;
        assert_eq!(s.exposed_faces(idx), 0b11_1111);
        assert_eq!(s.boundary_indices(), vec![idx]);
    }
}
