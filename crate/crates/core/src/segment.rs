//! Component partition of a model and per-component prompt metadata.

use std::ops::Range;

use serde::Serialize;

use crate::cad::{BooleanOp, CadModel, SketchExtrudePair};
use crate::geometry::plane_frame;

/// Runs of origin-equivalent pairs collapse only when strictly longer than
/// this.
pub const DEFAULT_THRESHOLD: usize = 3;
pub const DEFAULT_DIRECTION_TOLERANCE_DEG: f64 = 5.0;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Component {
    pub pairs: Range<usize>,
    pub multiplicity: usize,
    pub representative: SketchExtrudePair,
}

impl Component {
    pub fn op(&self) -> BooleanOp {
        self.representative.extrude.op
    }
}

/// Ordered partition of `model.pairs`. A maximal run of consecutive
/// origin-equivalent pairs becomes one component when its length exceeds
/// `threshold`; every other pair is its own component.
pub fn segment(model: &CadModel, threshold: usize) -> Vec<Component> {
    let threshold = threshold.max(1);
    let pairs = &model.pairs;
    let mut out = Vec::new();
    let mut start = 0;
    while start < pairs.len() {
        let head = &pairs[start];
        let run = pairs[start..]
            .iter()
            .take_while(|p| head.equivalent_mod_origin(p))
            .count();
        if run > threshold {
            out.push(Component {
                pairs: start..start + run,
                multiplicity: run,
                representative: head.clone(),
            });
        } else {
            out.extend((start..start + run).map(|i| Component {
                pairs: i..i + 1,
                multiplicity: 1,
                representative: pairs[i].clone(),
            }));
        }
        start += run;
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Up,
    Down,
    Left,
    Right,
    Front,
    Back,
}

impl Direction {
    const AXES: [(Direction, [f64; 3]); 6] = [
        (Direction::Up, [0.0, 0.0, 1.0]),
        (Direction::Down, [0.0, 0.0, -1.0]),
        (Direction::Right, [1.0, 0.0, 0.0]),
        (Direction::Left, [-1.0, 0.0, 0.0]),
        (Direction::Back, [0.0, 1.0, 0.0]),
        (Direction::Front, [0.0, -1.0, 0.0]),
    ];

    pub fn axis(self) -> [f64; 3] {
        Self::AXES.iter().find(|(d, _)| *d == self).map(|(_, a)| *a).unwrap()
    }

    /// Phrase used in annotation prompts, e.g. "extruded upwards".
    pub fn phrase(self) -> &'static str {
        match self {
            Direction::Up => "upwards",
            Direction::Down => "downwards",
            Direction::Left => "to the left",
            Direction::Right => "to the right",
            Direction::Front => "towards the front",
            Direction::Back => "towards the back",
        }
    }
}

/// The world axis the extrusion normal points along, if any lies within
/// `tolerance_deg`.
pub fn extrusion_direction_label(pair: &SketchExtrudePair, tolerance_deg: f64) -> Option<Direction> {
    let n = plane_frame(&pair.extrude).n;
    let cos_tol = tolerance_deg.to_radians().cos();
    Direction::AXES
        .iter()
        .find(|(_, a)| n[0] * a[0] + n[1] * a[1] + n[2] * a[2] >= cos_tol)
        .map(|(d, _)| *d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cad::Extrude;
    use crate::fixtures;
    use proptest::prelude::*;

    fn ring_of(n: usize) -> CadModel {
        let mut pairs = vec![fixtures::unit_cube("base").pairs[0].clone()];
        for i in 0..n {
            pairs.push(fixtures::cylinder_pair(
                [10 * i as i32, 0, 32],
                4,
                8,
                BooleanOp::Join,
            ));
        }
        CadModel::new("ring", pairs)
    }

    #[test]
    fn four_equivalent_pairs_collapse() {
        let comps = segment(&ring_of(4), 3);
        assert_eq!(comps.len(), 2);
        assert_eq!(comps[1].multiplicity, 4);
        assert_eq!(comps[1].pairs, 1..5);
    }

    #[test]
    fn three_equivalent_pairs_stay_separate() {
        let comps = segment(&ring_of(3), 3);
        assert_eq!(comps.len(), 4);
        assert!(comps.iter().all(|c| c.multiplicity == 1));
    }

    #[test]
    fn unrelated_pairs_are_singletons() {
        let m = fixtures::plate_with_cut_hole("p");
        let comps = segment(&m, 3);
        assert_eq!(comps.len(), 2);
        assert_eq!(comps[0].pairs, 0..1);
        assert_eq!(comps[1].pairs, 1..2);
    }

    #[test]
    fn scattered_duplicates_do_not_merge() {
        let mut m = ring_of(2);
        m.pairs.push(fixtures::unit_cube("x").pairs[0].clone());
        m.pairs[3].extrude.op = BooleanOp::Join;
        m.pairs.extend(ring_of(2).pairs[1..].iter().cloned());
        assert_eq!(segment(&m, 3).len(), m.pairs.len());
        assert_eq!(segment(&m, 1).len(), 4);
    }

    fn with_angles(angles: [i32; 3]) -> SketchExtrudePair {
        let mut p = fixtures::unit_cube("c").pairs[0].clone();
        p.extrude = Extrude { angles, ..p.extrude };
        p
    }

    #[test]
    fn direction_labels() {
        assert_eq!(extrusion_direction_label(&with_angles([0, 0, 0]), 5.0), Some(Direction::Up));
        assert_eq!(
            extrusion_direction_label(&with_angles([0, 180, 0]), 5.0),
            Some(Direction::Down)
        );
        assert_eq!(
            extrusion_direction_label(&with_angles([0, 90, 0]), 5.0),
            Some(Direction::Right)
        );
        assert_eq!(
            extrusion_direction_label(&with_angles([0, 0, 90]), 5.0),
            Some(Direction::Front)
        );
        assert_eq!(
            extrusion_direction_label(&with_angles([0, 3, 0]), 5.0),
            Some(Direction::Up)
        );
        // Normal (1,1,1)/√3: 54.7° from every axis.
        assert_eq!(extrusion_direction_label(&with_angles([45, 55, 0]), 5.0), None);
    }

    proptest! {
        #[test]
        fn partition_is_lossless_and_threshold_monotone(seed: u64, t in 1usize..6) {
            let m = fixtures::random_model_with_repeats(seed);
            let comps = segment(&m, t);
            let mut next = 0;
            for c in &comps {
                prop_assert_eq!(c.pairs.start, next);
                prop_assert_eq!(c.multiplicity, c.pairs.len());
                if c.multiplicity > 1 {
                    prop_assert!(c.multiplicity > t);
                    for p in &m.pairs[c.pairs.clone()] {
                        prop_assert!(c.representative.equivalent_mod_origin(p));
                    }
                }
                next = c.pairs.end;
            }
            prop_assert_eq!(next, m.pairs.len());
            prop_assert!(segment(&m, t + 1).len() >= comps.len());

            let reassembled: Vec<_> = comps
                .iter()
                .flat_map(|c| m.pairs[c.pairs.clone()].iter().cloned())
                .collect();
            let again = segment(&CadModel::new("r", reassembled), t);
            prop_assert_eq!(again, comps);
        }
    }
}
