//! Typed sketch-extrude command sequences.
//!
//! Every coordinate-like parameter is an 8-bit quantized integer. Sketch
//! coordinates and the sketch-plane origin are recentered so that level 128
//! becomes 0; lengths (radius, extrusion distances) keep the raw `0..=255`
//! range. Angles are whole degrees. The profile scale is a real number kept
//! at micro precision so that its six-decimal text form round-trips exactly.

use std::fmt;
use std::ops::RangeInclusive;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub const COORD_RANGE: RangeInclusive<i32> = -128..=127;
pub const LENGTH_RANGE: RangeInclusive<i32> = 0..=255;
pub const ANGLE_RANGE: RangeInclusive<i32> = -180..=180;
pub const SWEEP_RANGE: RangeInclusive<i32> = 0..=360;
pub const SCALE_MAX_MICROS: i64 = 2_000_000;

#[derive(Debug, Clone, PartialEq, Error)]
#[error("{param} = {value} is outside [{min}, {max}]")]
pub struct RangeError {
    pub param: String,
    pub value: f64,
    pub min: f64,
    pub max: f64,
}

/// 8-bit quantization of the unit interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QuantSpec {
    pub levels: u32,
    pub recenter_offset: i32,
}

impl Default for QuantSpec {
    fn default() -> Self {
        Self {
            levels: 256,
            recenter_offset: 128,
        }
    }
}

impl QuantSpec {
    fn top(&self) -> f64 {
        f64::from(self.levels - 1)
    }

    pub fn level_range(&self, recenter: bool) -> RangeInclusive<i32> {
        let max = self.levels as i32 - 1;
        if recenter {
            -self.recenter_offset..=max - self.recenter_offset
        } else {
            0..=max
        }
    }

    pub fn quantize(&self, param: &str, value: f64, recenter: bool) -> Result<i32, RangeError> {
        if !(0.0..=1.0).contains(&value) {
            return Err(RangeError {
                param: param.to_string(),
                value,
                min: 0.0,
                max: 1.0,
            });
        }
        let level = (value * self.top()).round() as i32;
        Ok(if recenter {
            level - self.recenter_offset
        } else {
            level
        })
    }

    pub fn dequantize(&self, param: &str, level: i32, recenter: bool) -> Result<f64, RangeError> {
        let range = self.level_range(recenter);
        if !range.contains(&level) {
            return Err(RangeError {
                param: param.to_string(),
                value: f64::from(level),
                min: f64::from(*range.start()),
                max: f64::from(*range.end()),
            });
        }
        let raw = if recenter {
            level + self.recenter_offset
        } else {
            level
        };
        Ok(f64::from(raw) / self.top())
    }

    /// Size of one quantization step in normalized units.
    pub fn step(&self) -> f64 {
        1.0 / self.top()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(from = "[i32; 2]", into = "[i32; 2]")]
pub struct Point2 {
    pub x: i32,
    pub y: i32,
}

impl Point2 {
    pub const ORIGIN: Point2 = Point2 { x: 0, y: 0 };

    pub const fn new(x: i32, y: i32) -> Self {
        Self { x, y }
    }
}

impl From<[i32; 2]> for Point2 {
    fn from([x, y]: [i32; 2]) -> Self {
        Self { x, y }
    }
}

impl From<Point2> for [i32; 2] {
    fn from(p: Point2) -> Self {
        [p.x, p.y]
    }
}

impl fmt::Display for Point2 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.x, self.y)
    }
}

/// One drawing command inside a loop. Lines and arcs start where the
/// previous curve of the loop ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "t", rename_all = "lowercase")]
pub enum Curve {
    Line {
        end: Point2,
    },
    Arc {
        end: Point2,
        sweep: i32,
        ccw: bool,
    },
    Circle {
        center: Point2,
        #[serde(rename = "r")]
        radius: i32,
    },
}

impl Curve {
    pub fn end(&self) -> Option<Point2> {
        match *self {
            Curve::Line { end } | Curve::Arc { end, .. } => Some(end),
            Curve::Circle { .. } => None,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Curve::Line { .. } => "Line",
            Curve::Arc { .. } => "Arc",
            Curve::Circle { .. } => "Circle",
        }
    }
}

/// A closed profile: a single circle, or a chain of lines and arcs whose
/// implicit start point is the end point of its last curve.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Loop {
    pub curves: Vec<Curve>,
}

impl Loop {
    pub fn new(curves: Vec<Curve>) -> Self {
        Self { curves }
    }

    pub fn is_circle(&self) -> bool {
        matches!(self.curves.as_slice(), [Curve::Circle { .. }])
    }

    /// Start point of the chain, i.e. the end point of the last curve.
    pub fn start(&self) -> Option<Point2> {
        self.curves.last().and_then(Curve::end)
    }

    /// `(start, curve)` for every chained curve, in drawing order.
    pub fn segments(&self) -> impl Iterator<Item = (Point2, &Curve)> + '_ {
        let mut cursor = self.start();
        self.curves.iter().filter_map(move |c| {
            let start = cursor?;
            cursor = c.end();
            Some((start, c))
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct Sketch {
    pub loops: Vec<Loop>,
}

impl Sketch {
    pub fn new(loops: Vec<Loop>) -> Self {
        Self { loops }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BooleanOp {
    NewBody,
    Join,
    Cut,
    Intersect,
}

impl BooleanOp {
    pub const ALL: [BooleanOp; 4] = [
        BooleanOp::NewBody,
        BooleanOp::Join,
        BooleanOp::Cut,
        BooleanOp::Intersect,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BooleanOp::NewBody => "NewBody",
            BooleanOp::Join => "Join",
            BooleanOp::Cut => "Cut",
            BooleanOp::Intersect => "Intersect",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|op| op.name() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Extent {
    OneSided,
    Symmetric,
    TwoSided,
}

impl Extent {
    pub const ALL: [Extent; 3] = [Extent::OneSided, Extent::Symmetric, Extent::TwoSided];

    pub fn name(self) -> &'static str {
        match self {
            Extent::OneSided => "OneSided",
            Extent::Symmetric => "Symmetric",
            Extent::TwoSided => "TwoSided",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|e| e.name() == s)
    }
}

/// Profile scale in `[0, 2]`, stored in millionths.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "f64", into = "f64")]
pub struct Scale {
    micros: i64,
}

impl Scale {
    pub const ONE: Scale = Scale { micros: 1_000_000 };

    pub const fn from_micros(micros: i64) -> Self {
        Self { micros }
    }

    pub fn from_f64(value: f64) -> Self {
        Self {
            micros: (value * 1e6).round() as i64,
        }
    }

    pub fn micros(self) -> i64 {
        self.micros
    }

    pub fn value(self) -> f64 {
        self.micros as f64 / 1e6
    }
}

impl From<f64> for Scale {
    fn from(v: f64) -> Self {
        Scale::from_f64(v)
    }
}

impl From<Scale> for f64 {
    fn from(s: Scale) -> Self {
        s.value()
    }
}

impl fmt::Display for Scale {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sign = if self.micros < 0 { "-" } else { "" };
        let abs = self.micros.unsigned_abs();
        write!(f, "{sign}{}.{:06}", abs / 1_000_000, abs % 1_000_000)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Extrude {
    /// Euler angles (θ, φ, γ) in degrees.
    pub angles: [i32; 3],
    /// Sketch-plane origin (p_x, p_y, p_z), recentered levels.
    pub origin: [i32; 3],
    pub scale: Scale,
    pub dist1: i32,
    pub dist2: i32,
    pub op: BooleanOp,
    pub extent: Extent,
}

impl Default for Extrude {
    fn default() -> Self {
        Self {
            angles: [0; 3],
            origin: [0; 3],
            scale: Scale::ONE,
            dist1: 0,
            dist2: 0,
            op: BooleanOp::NewBody,
            extent: Extent::OneSided,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SketchExtrudePair {
    pub sketch: Sketch,
    pub extrude: Extrude,
}

impl SketchExtrudePair {
    pub fn new(sketch: Sketch, extrude: Extrude) -> Self {
        Self { sketch, extrude }
    }

    /// Same commands and parameters everywhere except the sketch-plane
    /// origin.
    pub fn equivalent_mod_origin(&self, other: &Self) -> bool {
        let (a, b) = (&self.extrude, &other.extrude);
        self.sketch == other.sketch
            && a.angles == b.angles
            && a.scale == b.scale
            && a.dist1 == b.dist1
            && a.dist2 == b.dist2
            && a.op == b.op
            && a.extent == b.extent
    }
}

pub fn pairs_equivalent_mod_origin(a: &SketchExtrudePair, b: &SketchExtrudePair) -> bool {
    a.equivalent_mod_origin(b)
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct CadModel {
    #[serde(default)]
    pub id: String,
    pub pairs: Vec<SketchExtrudePair>,
}

impl CadModel {
    pub fn new(id: impl Into<String>, pairs: Vec<SketchExtrudePair>) -> Self {
        Self {
            id: id.into(),
            pairs,
        }
    }

    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        serde_json::from_str(text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn curve_count(&self) -> usize {
        self.pairs
            .iter()
            .flat_map(|p| &p.sketch.loops)
            .map(|l| l.curves.len())
            .sum()
    }

    pub fn loop_count(&self) -> usize {
        self.pairs.iter().map(|p| p.sketch.loops.len()).sum()
    }

    /// Length of the flattened command stream: one start marker per loop,
    /// one command per curve and one per extrusion.
    pub fn command_count(&self) -> usize {
        self.loop_count() + self.curve_count() + self.pairs.len()
    }

    pub fn validate(&self) -> Vec<Violation> {
        validate_static(self)
    }

    pub fn is_valid(&self) -> bool {
        self.validate().is_empty()
    }
}

/// Hex SHA-256 over the canonical code text of the command sequence. The
/// model id is not part of the digest.
pub fn canonical_hash(model: &CadModel) -> String {
    let digest = Sha256::digest(crate::codec::write_code(model).as_bytes());
    hex::encode(digest)
}

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    EmptyModel,
    FirstOpNotNewBody {
        found: BooleanOp,
    },
    EmptySketch {
        pair: usize,
    },
    OutOfRange {
        pair: usize,
        param: &'static str,
        value: f64,
        min: f64,
        max: f64,
    },
    EmptyLoop {
        pair: usize,
        loop_index: usize,
    },
    MixedCircle {
        pair: usize,
        loop_index: usize,
    },
    LoopTooShort {
        pair: usize,
        loop_index: usize,
    },
    Unclosed {
        pair: usize,
        loop_index: usize,
        end: Point2,
    },
    ZeroLength {
        pair: usize,
        loop_index: usize,
        curve: usize,
    },
    DegenerateArc {
        pair: usize,
        loop_index: usize,
        curve: usize,
        sweep: i32,
    },
    UnusedDist2 {
        pair: usize,
        dist2: i32,
    },
}

impl Violation {
    /// Parameter name of a range violation.
    pub fn param(&self) -> Option<&'static str> {
        match self {
            Violation::OutOfRange { param, .. } => Some(param),
            _ => None,
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::EmptyModel => write!(f, "model has no sketch-extrude pairs"),
            Violation::FirstOpNotNewBody { found } => {
                write!(f, "first op must be NewBody (found {})", found.name())
            }
            Violation::EmptySketch { pair } => write!(f, "pair {pair}: sketch has no loops"),
            Violation::OutOfRange {
                pair,
                param,
                value,
                min,
                max,
            } => write!(f, "pair {pair}: {param} = {value} is outside [{min}, {max}]"),
            Violation::EmptyLoop { pair, loop_index } => {
                write!(f, "pair {pair} loop {loop_index}: loop has no curves")
            }
            Violation::MixedCircle { pair, loop_index } => write!(
                f,
                "pair {pair} loop {loop_index}: a circle must be the only curve of its loop"
            ),
            Violation::LoopTooShort { pair, loop_index } => write!(
                f,
                "pair {pair} loop {loop_index}: needs at least two lines or arcs"
            ),
            Violation::Unclosed {
                pair,
                loop_index,
                end,
            } => write!(
                f,
                "pair {pair} loop {loop_index}: chain ends at {end} instead of the sketch origin"
            ),
            Violation::ZeroLength {
                pair,
                loop_index,
                curve,
            } => write!(f, "pair {pair} loop {loop_index} curve {curve}: zero length"),
            Violation::DegenerateArc {
                pair,
                loop_index,
                curve,
                sweep,
            } => write!(
                f,
                "pair {pair} loop {loop_index} curve {curve}: degenerate arc sweep {sweep}"
            ),
            Violation::UnusedDist2 { pair, dist2 } => write!(
                f,
                "pair {pair}: dist2 = {dist2} but extent is not TwoSided"
            ),
        }
    }
}

struct Checker {
    pair: usize,
    out: Vec<Violation>,
}

impl Checker {
    fn range(&mut self, param: &'static str, value: i32, range: &RangeInclusive<i32>) {
        if !range.contains(&value) {
            self.out.push(Violation::OutOfRange {
                pair: self.pair,
                param,
                value: f64::from(value),
                min: f64::from(*range.start()),
                max: f64::from(*range.end()),
            });
        }
    }

    fn point(&mut self, px: &'static str, py: &'static str, p: Point2) {
        self.range(px, p.x, &COORD_RANGE);
        self.range(py, p.y, &COORD_RANGE);
    }

    fn check_loop(&mut self, loop_index: usize, lp: &Loop) {
        let pair = self.pair;
        if lp.curves.is_empty() {
            self.out.push(Violation::EmptyLoop { pair, loop_index });
            return;
        }
        for c in &lp.curves {
            match *c {
                Curve::Line { end } => self.point("x", "y", end),
                Curve::Arc { end, sweep, .. } => {
                    self.point("x", "y", end);
                    self.range("sweep", sweep, &SWEEP_RANGE);
                }
                Curve::Circle { center, radius } => {
                    self.point("center_x", "center_y", center);
                    self.range("radius", radius, &LENGTH_RANGE);
                }
            }
        }
        let circles = lp
            .curves
            .iter()
            .filter(|c| matches!(c, Curve::Circle { .. }))
            .count();
        if circles > 0 {
            if lp.curves.len() > 1 {
                self.out.push(Violation::MixedCircle { pair, loop_index });
            } else if let Curve::Circle { radius: 0, .. } = lp.curves[0] {
                self.out.push(Violation::ZeroLength {
                    pair,
                    loop_index,
                    curve: 0,
                });
            }
            return;
        }
        if lp.curves.len() < 2 {
            self.out.push(Violation::LoopTooShort { pair, loop_index });
            return;
        }
        if loop_index == 0 {
            let end = lp.start().expect("non-circle loop has an end point");
            if end != Point2::ORIGIN {
                self.out.push(Violation::Unclosed {
                    pair,
                    loop_index,
                    end,
                });
            }
        }
        for (curve, (start, c)) in lp.segments().enumerate() {
            match *c {
                Curve::Arc { sweep, .. } if sweep <= 0 || sweep >= 360 => {
                    self.out.push(Violation::DegenerateArc {
                        pair,
                        loop_index,
                        curve,
                        sweep,
                    });
                }
                _ if c.end() == Some(start) => {
                    self.out.push(Violation::ZeroLength {
                        pair,
                        loop_index,
                        curve,
                    });
                }
                _ => {}
            }
        }
    }

    fn check_extrude(&mut self, e: &Extrude) {
        for (name, v) in ["theta", "phi", "gamma"].into_iter().zip(e.angles) {
            self.range(name, v, &ANGLE_RANGE);
        }
        for (name, v) in ["px", "py", "pz"].into_iter().zip(e.origin) {
            self.range(name, v, &COORD_RANGE);
        }
        if !(0..=SCALE_MAX_MICROS).contains(&e.scale.micros()) {
            self.out.push(Violation::OutOfRange {
                pair: self.pair,
                param: "scale",
                value: e.scale.value(),
                min: 0.0,
                max: 2.0,
            });
        }
        self.range("dist1", e.dist1, &LENGTH_RANGE);
        self.range("dist2", e.dist2, &LENGTH_RANGE);
        if e.extent != Extent::TwoSided && e.dist2 != 0 {
            self.out.push(Violation::UnusedDist2 {
                pair: self.pair,
                dist2: e.dist2,
            });
        }
    }
}

/// Every broken type invariant of `model`, in a stable order.
pub fn validate_static(model: &CadModel) -> Vec<Violation> {
    let mut checker = Checker {
        pair: 0,
        out: Vec::new(),
    };
    let Some(first) = model.pairs.first() else {
        return vec![Violation::EmptyModel];
    };
    if first.extrude.op != BooleanOp::NewBody {
        checker.out.push(Violation::FirstOpNotNewBody {
            found: first.extrude.op,
        });
    }
    for (i, pair) in model.pairs.iter().enumerate() {
        checker.pair = i;
        if pair.sketch.loops.is_empty() {
            checker.out.push(Violation::EmptySketch { pair: i });
        }
        for (li, lp) in pair.sketch.loops.iter().enumerate() {
            checker.check_loop(li, lp);
        }
        checker.check_extrude(&pair.extrude);
    }
    checker.out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use proptest::prelude::*;

    #[test]
    fn quantize_examples() {
        let q = QuantSpec::default();
        assert_eq!(q.quantize("x", 0.5, true).unwrap(), 0);
        assert_eq!(q.quantize("x", 0.0, false).unwrap(), 0);
        // round(255) - 128
        assert_eq!(q.quantize("x", 1.0, true).unwrap(), 127);
        let err = q.quantize("px", 1.5, true).unwrap_err();
        assert_eq!(err.param, "px");
    }

    #[test]
    fn dequantize_examples() {
        let q = QuantSpec::default();
        assert_eq!(q.dequantize("x", 0, true).unwrap(), 128.0 / 255.0);
        assert_eq!(q.dequantize("x", 255, false).unwrap(), 1.0);
        assert_eq!(q.dequantize("x", -128, true).unwrap(), 0.0);
        assert!(q.dequantize("x", 128, true).is_err());
        assert!(q.dequantize("r", -1, false).is_err());
    }

    #[test]
    fn scale_formats_with_six_decimals() {
        assert_eq!(Scale::from_f64(1.25).to_string(), "1.250000");
        assert_eq!(Scale::from_f64(0.000001).to_string(), "0.000001");
        assert_eq!(Scale::from_micros(-1_500_000).to_string(), "-1.500000");
        let s = Scale::from_f64(0.123457);
        assert_eq!(s.to_string().parse::<f64>().map(Scale::from_f64).unwrap(), s);
    }

    #[test]
    fn equivalence_ignores_origin_only() {
        let a = fixtures::cylinder_pair([0, 0, 0], 10, 20, BooleanOp::NewBody);
        assert!(a.equivalent_mod_origin(&a.clone()));
        let mut b = a.clone();
        b.extrude.origin[0] += 10;
        assert!(pairs_equivalent_mod_origin(&a, &b));
        let mut c = a.clone();
        if let Curve::Circle { radius, .. } = &mut c.sketch.loops[0].curves[0] {
            *radius += 1;
        }
        assert!(!a.equivalent_mod_origin(&c));
    }

    #[test]
    fn hash_is_stable_and_sensitive() {
        let m = fixtures::plate_with_hole("m");
        let copy = m.clone();
        assert_eq!(canonical_hash(&m), canonical_hash(&copy));
        let mut bumped = m.clone();
        if let Curve::Line { end } = &mut bumped.pairs[0].sketch.loops[0].curves[0] {
            end.x += 1;
        }
        assert_ne!(canonical_hash(&m), canonical_hash(&bumped));
        let mut renamed = m.clone();
        renamed.id = "other".into();
        assert_eq!(canonical_hash(&m), canonical_hash(&renamed));
    }

    #[test]
    fn corpus_with_duplicate_has_two_hashes() {
        let a = fixtures::unit_cube("a");
        let b = fixtures::plate_with_hole("b");
        let dup = a.clone();
        let hashes: std::collections::BTreeSet<_> =
            [&a, &b, &dup].iter().map(|m| canonical_hash(m)).collect();
        assert_eq!(hashes.len(), 2);
    }

    #[test]
    fn validate_examples() {
        assert!(validate_static(&fixtures::unit_cube("c")).is_empty());

        let mut cut_first = fixtures::unit_cube("c");
        cut_first.pairs[0].extrude.op = BooleanOp::Cut;
        let v = validate_static(&cut_first);
        assert_eq!(v.len(), 1);
        assert!(v[0].to_string().contains("first op must be NewBody"));

        let mut open = fixtures::unit_cube("c");
        open.pairs[0].sketch.loops[0].curves[3] = Curve::Line {
            end: Point2::new(0, 5),
        };
        let v = validate_static(&open);
        assert_eq!(v.len(), 1);
        assert!(matches!(v[0], Violation::Unclosed { loop_index: 0, .. }));
        assert!(v[0].to_string().contains("loop 0"));
    }

    #[test]
    fn validate_flags_ranges_and_degenerates() {
        let mut m = fixtures::unit_cube("c");
        m.pairs[0].sketch.loops[0].curves[1] = Curve::Arc {
            end: Point2::new(10, 10),
            sweep: 400,
            ccw: true,
        };
        let v = validate_static(&m);
        assert!(v.iter().any(|v| v.param() == Some("sweep")));

        let mut m = fixtures::unit_cube("c");
        m.pairs[0].sketch.loops[0].curves[1] = Curve::Arc {
            end: Point2::new(10, 10),
            sweep: 0,
            ccw: true,
        };
        assert!(matches!(
            validate_static(&m)[..],
            [Violation::DegenerateArc { sweep: 0, .. }]
        ));

        let mut m = fixtures::unit_cube("c");
        m.pairs[0].extrude.dist2 = 4;
        assert!(matches!(
            validate_static(&m)[..],
            [Violation::UnusedDist2 { .. }]
        ));

        let mut m = fixtures::unit_cube("c");
        m.pairs[0].extrude.scale = Scale::from_f64(2.5);
        assert_eq!(validate_static(&m)[0].param(), Some("scale"));

        assert_eq!(
            validate_static(&CadModel::default()),
            vec![Violation::EmptyModel]
        );
    }

    #[test]
    fn json_ingestion_shape() {
        let text = r#"{"id":"m1","pairs":[{"sketch":{"loops":[[
            {"t":"line","end":[10,0]},
            {"t":"arc","end":[10,10],"sweep":90,"ccw":true},
            {"t":"line","end":[0,0]}],
            [{"t":"circle","center":[5,5],"r":2}]]},
            "extrude":{"angles":[0,0,0],"origin":[0,0,0],"scale":1.0,
            "dist1":12,"dist2":0,"op":"NewBody","extent":"OneSided"}}]}"#;
        let m = CadModel::from_json(text).unwrap();
        assert_eq!(m.id, "m1");
        assert_eq!(m.pairs[0].sketch.loops.len(), 2);
        assert!(m.pairs[0].sketch.loops[1].is_circle());
        assert!(m.is_valid());
        let back = CadModel::from_json(&m.to_json()).unwrap();
        assert_eq!(back, m);
    }

    proptest! {
        #[test]
        fn quantize_round_trip(v in 0.0f64..=1.0, recenter: bool) {
            let q = QuantSpec::default();
            let level = q.quantize("v", v, recenter).unwrap();
            prop_assert!(q.level_range(recenter).contains(&level));
            let back = q.dequantize("v", level, recenter).unwrap();
            prop_assert!((back - v).abs() <= 1.0 / 510.0 + 1e-12);
        }

        #[test]
        fn equivalence_is_an_equivalence_relation(
            seeds in proptest::collection::vec(0u64..6, 3),
            shifts in proptest::collection::vec(-5i32..5, 3),
        ) {
            // Small seed space so that equal pairs actually occur.
            let pairs: Vec<_> = seeds
                .iter()
                .zip(&shifts)
                .map(|(&s, &dx)| {
                    let mut p = fixtures::small_pair(s);
                    p.extrude.origin[0] += dx;
                    p
                })
                .collect();
            let (a, b, c) = (&pairs[0], &pairs[1], &pairs[2]);
            prop_assert!(a.equivalent_mod_origin(a));
            prop_assert_eq!(a.equivalent_mod_origin(b), b.equivalent_mod_origin(a));
            if a.equivalent_mod_origin(b) && b.equivalent_mod_origin(c) {
                prop_assert!(a.equivalent_mod_origin(c));
            }
        }
    }
}
