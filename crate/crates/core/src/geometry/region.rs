//! Even-odd sketch regions over lines, arcs and circles.

use std::f64::consts::{FRAC_PI_2, PI};

use crate::cad::{Curve, Loop, Point2, Sketch};

pub type Vec2 = [f64; 2];

fn to_vec(p: Point2) -> Vec2 {
    [f64::from(p.x), f64::from(p.y)]
}

/// Circle carrying an arc, with the arc's start angle and signed sweep in
/// radians (positive = counterclockwise).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArcGeom {
    pub center: Vec2,
    pub radius: f64,
    pub start_angle: f64,
    pub sweep: f64,
}

impl ArcGeom {
    pub fn point_at(&self, angle: f64) -> Vec2 {
        [
            self.center[0] + self.radius * angle.cos(),
            self.center[1] + self.radius * angle.sin(),
        ]
    }

    /// Offsets `t` in `(0, |sweep|)` where the arc passes an axis-aligned
    /// extreme, i.e. its angle is a multiple of π/2 (or only odd multiples
    /// when `vertical_only`).
    fn extremes(&self, vertical_only: bool) -> Vec<f64> {
        let step = if vertical_only { PI } else { FRAC_PI_2 };
        let base = if vertical_only { FRAC_PI_2 } else { 0.0 };
        let dir = self.sweep.signum();
        let total = self.sweep.abs();
        // Smallest t > 0 with start + dir*t ≡ base (mod step).
        let rel = (dir * (base - self.start_angle)).rem_euclid(step);
        let mut t = if rel <= 1e-12 { step } else { rel };
        let mut out = Vec::new();
        while t < total - 1e-12 {
            out.push(t);
            t += step;
        }
        out
    }
}

/// Geometry of an arc from `start` to `end`; `None` for degenerate input.
pub fn arc_geometry(start: Point2, end: Point2, sweep_deg: i32, ccw: bool) -> Option<ArcGeom> {
    if start == end || sweep_deg <= 0 || sweep_deg >= 360 {
        return None;
    }
    let (s, e) = (to_vec(start), to_vec(end));
    let alpha = f64::from(sweep_deg).to_radians();
    let chord = [e[0] - s[0], e[1] - s[1]];
    let len = chord[0].hypot(chord[1]);
    let radius = len / (2.0 * (alpha / 2.0).sin());
    let offset = radius * (alpha / 2.0).cos();
    let left = [-chord[1] / len, chord[0] / len];
    let sign = if ccw { 1.0 } else { -1.0 };
    let mid = [(s[0] + e[0]) / 2.0, (s[1] + e[1]) / 2.0];
    let center = [
        mid[0] + sign * offset * left[0],
        mid[1] + sign * offset * left[1],
    ];
    Some(ArcGeom {
        center,
        radius,
        start_angle: (s[1] - center[1]).atan2(s[0] - center[0]),
        sweep: sign * alpha,
    })
}

/// Half-open crossing rule shared by segments and arc pieces.
fn line_crosses(a: Vec2, b: Vec2, p: Vec2) -> bool {
    (a[1] > p[1]) != (b[1] > p[1]) && p[0] < (b[0] - a[0]) * (p[1] - a[1]) / (b[1] - a[1]) + a[0]
}

fn arc_crossings(start: Vec2, end: Vec2, arc: &ArcGeom, p: Vec2) -> usize {
    // Split into y-monotone pieces at the top/bottom of the circle. Piece
    // ends at the split points sit exactly on the vertical through the
    // center.
    let dir = arc.sweep.signum();
    let mut knots = vec![(start, arc.start_angle)];
    for t in arc.extremes(true) {
        let angle = arc.start_angle + dir * t;
        let top = angle.sin() > 0.0;
        let y = if top {
            arc.center[1] + arc.radius
        } else {
            arc.center[1] - arc.radius
        };
        knots.push(([arc.center[0], y], angle));
    }
    knots.push((end, arc.start_angle + arc.sweep));
    let mut count = 0;
    for w in knots.windows(2) {
        let ((a, a_ang), (b, b_ang)) = (w[0], w[1]);
        if (a[1] > p[1]) == (b[1] > p[1]) {
            continue;
        }
        let mid = (a_ang + b_ang) / 2.0;
        let side = if mid.cos() >= 0.0 { 1.0 } else { -1.0 };
        let dy = p[1] - arc.center[1];
        let dx = (arc.radius * arc.radius - dy * dy).max(0.0).sqrt();
        if p[0] < arc.center[0] + side * dx {
            count += 1;
        }
    }
    count
}

fn loop_toggles(lp: &Loop, p: Vec2) -> bool {
    if let [Curve::Circle { center, radius }] = lp.curves.as_slice() {
        let c = to_vec(*center);
        let r = f64::from(*radius);
        let (dx, dy) = (p[0] - c[0], p[1] - c[1]);
        return dx * dx + dy * dy < r * r;
    }
    let mut crossings = 0;
    for (start, curve) in lp.segments() {
        let a = to_vec(start);
        match *curve {
            Curve::Line { end } => crossings += usize::from(line_crosses(a, to_vec(end), p)),
            Curve::Arc { end, sweep, ccw } => match arc_geometry(start, end, sweep, ccw) {
                Some(arc) => crossings += arc_crossings(a, to_vec(end), &arc, p),
                None => crossings += usize::from(line_crosses(a, to_vec(end), p)),
            },
            Curve::Circle { .. } => {}
        }
    }
    crossings % 2 == 1
}

/// Even-odd membership of a sketch-plane point (in quantization steps).
pub fn point_in_sketch(sketch: &Sketch, p: Vec2) -> bool {
    sketch
        .loops
        .iter()
        .fold(false, |inside, lp| inside ^ loop_toggles(lp, p))
}

/// Axis-aligned bounds `[min_x, min_y, max_x, max_y]` of all curves.
pub fn sketch_bounds(sketch: &Sketch) -> Option<[f64; 4]> {
    let mut b = [f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY];
    let mut add = |q: Vec2| {
        b[0] = b[0].min(q[0]);
        b[1] = b[1].min(q[1]);
        b[2] = b[2].max(q[0]);
        b[3] = b[3].max(q[1]);
    };
    for lp in &sketch.loops {
        if let [Curve::Circle { center, radius }] = lp.curves.as_slice() {
            let c = to_vec(*center);
            let r = f64::from(*radius);
            add([c[0] - r, c[1] - r]);
            add([c[0] + r, c[1] + r]);
            continue;
        }
        for (start, curve) in lp.segments() {
            add(to_vec(start));
            if let Some(end) = curve.end() {
                add(to_vec(end));
            }
            if let Curve::Arc { end, sweep, ccw } = *curve {
                if let Some(arc) = arc_geometry(start, end, sweep, ccw) {
                    for t in arc.extremes(false) {
                        add(arc.point_at(arc.start_angle + arc.sweep.signum() * t));
                    }
                }
            }
        }
    }
    (b[0] <= b[2] && b[1] <= b[3]).then_some(b)
}

/// Whether the even-odd region covers any sample of an `n`×`n` lattice of
/// cell centers over the sketch bounds.
pub fn sketch_has_area(sketch: &Sketch, n: usize) -> bool {
    let Some([x0, y0, x1, y1]) = sketch_bounds(sketch) else {
        return false;
    };
    let (w, h) = (x1 - x0, y1 - y0);
    if w <= 0.0 || h <= 0.0 {
        return false;
    }
    (0..n).any(|j| {
        let y = y0 + h * (j as f64 + 0.5) / n as f64;
        (0..n).any(|i| point_in_sketch(sketch, [x0 + w * (i as f64 + 0.5) / n as f64, y]))
    })
}

/// Polyline approximation of one curve, at most `max_step` apart.
pub fn curve_polyline(start: Option<Point2>, curve: &Curve, max_step: f64) -> Vec<Vec2> {
    let arc_points = |arc: ArcGeom| {
        let n = ((arc.radius * arc.sweep.abs()) / max_step).ceil().max(1.0) as usize;
        (0..=n)
            .map(|i| arc.point_at(arc.start_angle + arc.sweep * i as f64 / n as f64))
            .collect()
    };
    match (*curve, start) {
        (Curve::Circle { center, radius }, _) => arc_points(ArcGeom {
            center: to_vec(center),
            radius: f64::from(radius),
            start_angle: 0.0,
            sweep: 2.0 * PI,
        }),
        (Curve::Arc { end, sweep, ccw }, Some(s)) => match arc_geometry(s, end, sweep, ccw) {
            Some(arc) => arc_points(arc),
            None => vec![to_vec(s), to_vec(end)],
        },
        (Curve::Line { end }, Some(s)) => {
            vec![to_vec(s), to_vec(end)]
        }
        _ => Vec::new(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    fn square(side: i32) -> Sketch {
        fixtures::rect_sketch(side, side)
    }

    fn circle(r: i32) -> Loop {
        Loop::new(vec![Curve::Circle {
            center: Point2::ORIGIN,
            radius: r,
        }])
    }

    #[test]
    fn square_membership() {
        let s = square(10);
        assert!(point_in_sketch(&s, [5.0, 5.0]));
        assert!(!point_in_sketch(&s, [15.0, 5.0]));
        assert!(!point_in_sketch(&s, [-1.0, 5.0]));
        assert!(!point_in_sketch(&s, [5.0, 11.0]));
    }

    #[test]
    fn annulus_by_even_odd() {
        let s = Sketch::new(vec![circle(50), circle(20)]);
        assert!(point_in_sketch(&s, [30.0, 0.0]));
        assert!(point_in_sketch(&s, [0.0, -30.0]));
        assert!(!point_in_sketch(&s, [10.0, 0.0]));
        assert!(!point_in_sketch(&s, [60.0, 0.0]));
    }

    #[test]
    fn arc_center_and_sweep() {
        // Quarter circle from (10,0) to (0,10) counterclockwise: center at 0.
        let arc = arc_geometry(Point2::new(10, 0), Point2::new(0, 10), 90, true).unwrap();
        assert!(arc.center[0].abs() < 1e-9 && arc.center[1].abs() < 1e-9);
        assert!((arc.radius - 10.0).abs() < 1e-9);
        let cw = arc_geometry(Point2::new(10, 0), Point2::new(0, 10), 90, false).unwrap();
        assert!((cw.center[0] - 10.0).abs() < 1e-9 && (cw.center[1] - 10.0).abs() < 1e-9);
        assert!(arc_geometry(Point2::new(1, 0), Point2::new(0, 1), 0, true).is_none());
    }

    #[test]
    fn half_disc_from_line_and_arc() {
        // Diameter along x from (0,0) to (20,0), closed by a 180° arc above.
        let s = Sketch::new(vec![Loop::new(vec![
            Curve::Line {
                end: Point2::new(20, 0),
            },
            Curve::Arc {
                end: Point2::new(0, 0),
                sweep: 180,
                ccw: true,
            },
        ])]);
        assert!(point_in_sketch(&s, [10.0, 5.0]));
        assert!(point_in_sketch(&s, [10.0, 9.9]));
        assert!(!point_in_sketch(&s, [10.0, 10.1]));
        assert!(!point_in_sketch(&s, [10.0, -1.0]));
        assert!(!point_in_sketch(&s, [1.0, 9.0]));
        // Ray through the tangent point at the top of the arc.
        assert!(!point_in_sketch(&s, [-5.0, 10.0]));
        let b = sketch_bounds(&s).unwrap();
        assert!((b[3] - 10.0).abs() < 1e-9);
    }

    #[test]
    fn major_arc_bulges_the_other_way() {
        // 270° clockwise arc from (0,0) to (10,10): the region is mostly
        // below-right of the chord.
        let s = Sketch::new(vec![Loop::new(vec![
            Curve::Arc {
                end: Point2::new(10, 10),
                sweep: 270,
                ccw: false,
            },
            Curve::Line { end: Point2::ORIGIN },
        ])]);
        let b = sketch_bounds(&s).unwrap();
        let arc = arc_geometry(Point2::ORIGIN, Point2::new(10, 10), 270, false).unwrap();
        // Monte Carlo style check against the analytic circle: points in the
        // circle but on the far side of the chord are inside.
        let c = arc.center;
        let far = [c[0] + (c[0] - 5.0), c[1] + (c[1] - 5.0)];
        assert!(point_in_sketch(&s, far));
        assert!(!point_in_sketch(&s, [8.0, 3.0]));
        for (got, want) in b.iter().zip([-10.0, 0.0, 10.0, 20.0]) {
            assert!((got - want).abs() < 1e-9, "{b:?}");
        }
    }

    #[test]
    fn area_checks() {
        assert!(sketch_has_area(&square(10), 16));
        let degenerate = Sketch::new(vec![Loop::new(vec![
            Curve::Line {
                end: Point2::new(10, 0),
            },
            Curve::Line { end: Point2::ORIGIN },
        ])]);
        assert!(!sketch_has_area(&degenerate, 16));
        let cancelled = Sketch::new(vec![circle(5), circle(5)]);
        assert!(!sketch_has_area(&cancelled, 16));
    }
}
