//! Small hand-built and seeded random models for tests, benches and demos.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cad::{
    BooleanOp, CadModel, Curve, Extent, Extrude, Loop, Point2, Scale, Sketch, SketchExtrudePair,
};
use crate::codec::{Annotations, ComponentAnnotation, GlobalAnnotation};

fn line(x: i32, y: i32) -> Curve {
    Curve::Line {
        end: Point2::new(x, y),
    }
}

fn circle(cx: i32, cy: i32, radius: i32) -> Loop {
    Loop::new(vec![Curve::Circle {
        center: Point2::new(cx, cy),
        radius,
    }])
}

fn rect_loop(w: i32, h: i32) -> Loop {
    Loop::new(vec![line(w, 0), line(w, h), line(0, h), line(0, 0)])
}

/// Axis-aligned `w` by `h` rectangle with a corner at the origin.
pub fn rect_sketch(w: i32, h: i32) -> Sketch {
    Sketch::new(vec![rect_loop(w, h)])
}

/// Circle of radius `r` centred on the origin.
pub fn circle_sketch(r: i32) -> Sketch {
    Sketch::new(vec![circle(0, 0, r)])
}

fn extrude(origin: [i32; 3], dist1: i32, op: BooleanOp) -> Extrude {
    Extrude {
        origin,
        dist1,
        op,
        ..Extrude::default()
    }
}

fn box_pair(origin: [i32; 3], side: i32, op: BooleanOp) -> SketchExtrudePair {
    SketchExtrudePair::new(rect_sketch(side, side), extrude(origin, side, op))
}

/// A 32-step cube: square sketch on the XY plane, extruded 32 steps up.
pub fn unit_cube(id: &str) -> CadModel {
    CadModel::new(id, vec![box_pair([0, 0, 0], 32, BooleanOp::NewBody)])
}

pub fn cylinder_pair(origin: [i32; 3], radius: i32, height: i32, op: BooleanOp) -> SketchExtrudePair {
    SketchExtrudePair::new(circle_sketch(radius), extrude(origin, height, op))
}

/// One pair: a 64x48 plate with a circular inner loop.
pub fn plate_with_hole(id: &str) -> CadModel {
    let sketch = Sketch::new(vec![rect_loop(64, 48), circle(32, 24, 10)]);
    CadModel::new(
        id,
        vec![SketchExtrudePair::new(
            sketch,
            extrude([0, 0, 0], 8, BooleanOp::NewBody),
        )],
    )
}

/// A plate and a cylinder cut through it.
pub fn plate_with_cut_hole(id: &str) -> CadModel {
    CadModel::new(
        id,
        vec![
            SketchExtrudePair::new(rect_sketch(64, 48), extrude([0, 0, 0], 8, BooleanOp::NewBody)),
            cylinder_pair([32, 24, 0], 10, 8, BooleanOp::Cut),
        ],
    )
}

/// Plate, a boss joined on top, and a hole cut through the plate.
pub fn three_part_model(id: &str) -> CadModel {
    CadModel::new(
        id,
        vec![
            SketchExtrudePair::new(rect_sketch(64, 48), extrude([0, 0, 0], 8, BooleanOp::NewBody)),
            cylinder_pair([20, 24, 8], 8, 16, BooleanOp::Join),
            cylinder_pair([48, 24, -1], 6, 10, BooleanOp::Cut),
        ],
    )
}

/// 32-step cube with a centred 16-step cube cut out of it.
pub fn cube_minus_centered_cube(id: &str) -> CadModel {
    CadModel::new(
        id,
        vec![
            box_pair([0, 0, 0], 32, BooleanOp::NewBody),
            box_pair([8, 8, 8], 16, BooleanOp::Cut),
        ],
    )
}

/// A cube intersected with a cube that does not touch it.
pub fn cube_intersect_disjoint(id: &str) -> CadModel {
    CadModel::new(
        id,
        vec![
            box_pair([0, 0, 0], 32, BooleanOp::NewBody),
            box_pair([60, 60, 60], 16, BooleanOp::Intersect),
        ],
    )
}

/// A cube cut by a larger cube that swallows it.
pub fn cube_fully_cut(id: &str) -> CadModel {
    CadModel::new(
        id,
        vec![
            box_pair([0, 0, 0], 32, BooleanOp::NewBody),
            box_pair([-4, -4, -4], 40, BooleanOp::Cut),
        ],
    )
}

/// Global text plus one named description per component.
pub fn annotations_for(model: &CadModel, components: usize) -> Annotations {
    Annotations {
        global: Some(GlobalAnnotation::new(
            &format!("A part built from {components} components"),
            Some(&format!(
                "The part has {} sketch-extrude pairs arranged in {components} components",
                model.pairs.len()
            )),
        )),
        components: (1..=components)
            .map(|i| {
                ComponentAnnotation::new(
                    Some(&format!("Part {i}")),
                    &format!("Component {i} is a solid extruded upwards"),
                )
            })
            .collect(),
    }
}

const ANGLE_CHOICES: [[i32; 3]; 7] = [
    [0, 0, 0],
    [0, 0, 0],
    [0, 90, 0],
    [90, 90, 0],
    [0, 0, 90],
    [0, 180, 0],
    [45, 30, -60],
];

fn random_outer_loop<R: Rng>(rng: &mut R, w: i32, h: i32) -> Loop {
    match rng.random_range(0..4) {
        0 => rect_loop(w, h),
        1 => Loop::new(vec![
            line(w, 0),
            Curve::Arc {
                end: Point2::new(w, h),
                sweep: *[60, 90, 180].choose(rng).unwrap(),
                ccw: rng.random_bool(0.5),
            },
            line(0, h),
            line(0, 0),
        ]),
        2 => Loop::new(vec![line(w, 0), line(rng.random_range(0..=w), h), line(0, 0)]),
        _ => circle(0, 0, w.min(h) / 2),
    }
}

fn random_sketch<R: Rng>(rng: &mut R) -> Sketch {
    let (w, h) = (rng.random_range(8..=48), rng.random_range(8..=48));
    let outer = random_outer_loop(rng, w, h);
    let mut loops = vec![outer];
    if !loops[0].is_circle() && rng.random_bool(0.3) {
        loops.push(circle(w / 2, h / 4, (w.min(h) / 6).max(1)));
    }
    Sketch::new(loops)
}

fn random_extrude<R: Rng>(rng: &mut R, op: BooleanOp) -> Extrude {
    let extent = *Extent::ALL.choose(rng).unwrap();
    Extrude {
        angles: *ANGLE_CHOICES.choose(rng).unwrap(),
        origin: std::array::from_fn(|_| rng.random_range(-40..=40)),
        scale: Scale::from_micros(rng.random_range(500_000..=1_500_000)),
        dist1: rng.random_range(4..=48),
        dist2: if extent == Extent::TwoSided {
            rng.random_range(4..=32)
        } else {
            0
        },
        op,
        extent,
    }
}

fn random_op<R: Rng>(rng: &mut R) -> BooleanOp {
    match rng.random_range(0..20) {
        0..=9 => BooleanOp::Join,
        10..=16 => BooleanOp::Cut,
        _ => BooleanOp::Intersect,
    }
}

/// A statically valid model with 1 to `max_pairs` pairs.
pub fn random_model<R: Rng>(rng: &mut R, max_pairs: usize) -> CadModel {
    let n = rng.random_range(1..=max_pairs.max(1));
    let pairs = (0..n)
        .map(|i| {
            let op = if i == 0 { BooleanOp::NewBody } else { random_op(rng) };
            SketchExtrudePair::new(random_sketch(rng), random_extrude(rng, op))
        })
        .collect();
    CadModel::new(format!("rand{n}"), pairs)
}

pub fn random_model_from_seed(seed: u64, max_pairs: usize) -> CadModel {
    let mut m = random_model(&mut ChaCha8Rng::seed_from_u64(seed), max_pairs);
    m.id = format!("rand-{seed}");
    m
}

/// A valid Join pair derived from `seed`.
pub fn small_pair(seed: u64) -> SketchExtrudePair {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    SketchExtrudePair::new(random_sketch(&mut rng), random_extrude(&mut rng, BooleanOp::Join))
}

/// A base pair followed by runs of pairs that differ only in their origin.
pub fn random_model_with_repeats(seed: u64) -> CadModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pairs = vec![SketchExtrudePair::new(
        random_sketch(&mut rng),
        random_extrude(&mut rng, BooleanOp::NewBody),
    )];
    for _ in 0..rng.random_range(1..=4) {
        let op = random_op(&mut rng);
        let template = SketchExtrudePair::new(random_sketch(&mut rng), random_extrude(&mut rng, op));
        for _ in 0..rng.random_range(1..=6) {
            let mut p = template.clone();
            p.extrude.origin = std::array::from_fn(|_| rng.random_range(-40..=40));
            pairs.push(p);
        }
    }
    CadModel::new(format!("repeats-{seed}"), pairs)
}

/// A buildable plate with bosses, holes, pockets and hole patterns, the
/// kind of part a realistic corpus is made of.
pub fn synthetic_part(seed: u64) -> CadModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (w, h) = (rng.random_range(48..=96), rng.random_range(36..=80));
    let t = rng.random_range(6..=16);
    let mut base = rect_sketch(w, h);
    if rng.random_bool(0.2) {
        base.loops.push(circle(w / 2, h / 2, rng.random_range(4..=h / 4)));
    }
    let mut pairs = vec![SketchExtrudePair::new(base, extrude([0, 0, 0], t, BooleanOp::NewBody))];
    let features = rng.random_range(0..=4);
    for _ in 0..features {
        match rng.random_range(0..4) {
            0 => {
                let r = rng.random_range(3..=12);
                let (x, y) = (rng.random_range(r..=w - r), rng.random_range(r..=h - r));
                pairs.push(cylinder_pair([x, y, t], r, rng.random_range(4..=30), BooleanOp::Join));
            }
            1 => {
                let r = rng.random_range(2..=8);
                let (x, y) = (rng.random_range(r..=w - r), rng.random_range(r..=h - r));
                pairs.push(cylinder_pair([x, y, -1], r, t + 2, BooleanOp::Cut));
            }
            2 => {
                let (a, b) = (rng.random_range(6..=w / 2), rng.random_range(6..=h / 2));
                let (x, y) = (rng.random_range(0..=w - a), rng.random_range(0..=h - b));
                let d = rng.random_range(2..=t - 2);
                pairs.push(SketchExtrudePair::new(
                    rect_sketch(a, b),
                    extrude([x, y, t - d], d + 1, BooleanOp::Cut),
                ));
            }
            _ => {
                let r = rng.random_range(2..=4);
                let count = rng.random_range(4..=6);
                let m = r + 2;
                for i in 0..count {
                    let x = m + (w - 2 * m) * i / (count - 1);
                    let y = if i % 2 == 0 { m } else { h - m };
                    pairs.push(cylinder_pair([x, y, -1], r, t + 2, BooleanOp::Cut));
                }
            }
        }
    }
    CadModel::new(format!("part-{seed:05}"), pairs)
}

/// `n` parts with consecutive seeds starting at `seed`.
pub fn synthetic_corpus(n: usize, seed: u64) -> Vec<CadModel> {
    (0..n as u64).map(|i| synthetic_part(seed + i)).collect()
}
