use crate::cad::{Extrude, QuantSpec};

pub type Vec3 = [f64; 3];

pub(crate) fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub(crate) fn cross(a: Vec3, b: Vec3) -> Vec3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

pub(crate) fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub(crate) fn norm(a: Vec3) -> f64 {
    dot(a, a).sqrt()
}

pub(crate) fn normalize(a: Vec3) -> Vec3 {
    let n = norm(a);
    [a[0] / n, a[1] / n, a[2] / n]
}

/// One quantization step in normalized model units. Sketch coordinates and
/// extrusion distances are measured in steps.
pub const STEP: f64 = 1.0 / 255.0;

/// Sketch plane placed in normalized model space: `u`, `v` span the sketch
/// and `n` is the extrusion normal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlaneFrame {
    pub origin: Vec3,
    pub u: Vec3,
    pub v: Vec3,
    pub n: Vec3,
}

impl PlaneFrame {
    /// Coordinates of a world point in this frame, in quantization steps.
    pub fn to_local(&self, p: Vec3) -> Vec3 {
        let d = sub(p, self.origin);
        [
            dot(d, self.u) / STEP,
            dot(d, self.v) / STEP,
            dot(d, self.n) / STEP,
        ]
    }

    pub fn to_world(&self, local: Vec3) -> Vec3 {
        let mut out = self.origin;
        for (axis, &l) in [self.u, self.v, self.n].iter().zip(&local) {
            for (o, a) in out.iter_mut().zip(axis) {
                *o += a * l * STEP;
            }
        }
        out
    }
}

fn rotation(theta: f64, phi: f64, gamma: f64) -> [[f64; 3]; 3] {
    let (st, ct) = theta.sin_cos();
    let (sp, cp) = phi.sin_cos();
    let (sg, cg) = gamma.sin_cos();
    let rz = [[ct, -st, 0.0], [st, ct, 0.0], [0.0, 0.0, 1.0]];
    let ry = [[cp, 0.0, sp], [0.0, 1.0, 0.0], [-sp, 0.0, cp]];
    let rx = [[1.0, 0.0, 0.0], [0.0, cg, -sg], [0.0, sg, cg]];
    matmul(matmul(rz, ry), rx)
}

fn matmul(a: [[f64; 3]; 3], b: [[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let mut out = [[0.0; 3]; 3];
    for (i, row) in out.iter_mut().enumerate() {
        for (j, cell) in row.iter_mut().enumerate() {
            *cell = (0..3).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    out
}

/// Frame of an extrusion: the identity frame rotated by
/// `Rz(θ)·Ry(φ)·Rx(γ)` and moved to the dequantized plane origin.
pub fn plane_frame(extrude: &Extrude) -> PlaneFrame {
    let [theta, phi, gamma] = extrude.angles.map(|a| f64::from(a).to_radians());
    let r = rotation(theta, phi, gamma);
    let column = |j: usize| [r[0][j], r[1][j], r[2][j]];
    let q = QuantSpec::default();
    // Out-of-range levels still map affinely so invalid models stay
    // renderable for diagnostics.
    let origin = extrude
        .origin
        .map(|l| f64::from(l + q.recenter_offset) * q.step());
    let u = column(0);
    let v = column(1);
    PlaneFrame {
        origin,
        u,
        v,
        n: cross(u, v),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn frame(angles: [i32; 3]) -> PlaneFrame {
        plane_frame(&Extrude {
            angles,
            ..Extrude::default()
        })
    }

    #[test]
    fn identity_angles_give_identity_frame() {
        let f = frame([0, 0, 0]);
        assert_eq!(f.u, [1.0, 0.0, 0.0]);
        assert_eq!(f.v, [0.0, 1.0, 0.0]);
        assert_eq!(f.n, [0.0, 0.0, 1.0]);
        assert_eq!(f.origin, [128.0 / 255.0; 3]);
    }

    #[test]
    fn yaw_quarter_turn_moves_u_onto_y() {
        let f = frame([90, 0, 0]);
        for (got, want) in f.u.iter().zip([0.0, 1.0, 0.0]) {
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn local_world_round_trip() {
        let f = plane_frame(&Extrude {
            angles: [30, -45, 120],
            origin: [10, -20, 5],
            ..Extrude::default()
        });
        let p = [0.1, 0.7, 0.3];
        let back = f.to_world(f.to_local(p));
        for (a, b) in p.iter().zip(back) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn frames_are_orthonormal(t in -180i32..=180, p in -180i32..=180, g in -180i32..=180) {
            let f = frame([t, p, g]);
            for a in [f.u, f.v, f.n] {
                prop_assert!((norm(a) - 1.0).abs() < 1e-9);
            }
            prop_assert!(dot(f.u, f.v).abs() < 1e-9);
            prop_assert!(dot(f.u, f.n).abs() < 1e-9);
            prop_assert!(dot(f.v, f.n).abs() < 1e-9);
            let uv = cross(f.u, f.v);
            for (a, b) in uv.iter().zip(f.n) {
                prop_assert!((a - b).abs() < 1e-9);
            }
        }
    }
}
