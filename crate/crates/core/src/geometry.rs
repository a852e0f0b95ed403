//! Vectors, the gyro-rotation operator, and axis-alignment utilities.
//!
//! The rotation orientation is fixed once and for all by the component
//! formula used throughout: for the axis e1, rotating v by the angle tau
//! sends the e2-component to `v2 cos(tau) - v3 sin(tau)` and the
//! e3-component to `v2 sin(tau) + v3 cos(tau)`. Every flow in the crate is
//! validated against that convention, not against a hand-rule statement.

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// A 3-component real vector (position, velocity, field value).
/// Serializes as a plain 3-array.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 3]", into = "[f64; 3]")]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl From<[f64; 3]> for Vec3 {
    fn from(a: [f64; 3]) -> Vec3 {
        Vec3::new(a[0], a[1], a[2])
    }
}

impl From<Vec3> for [f64; 3] {
    fn from(v: Vec3) -> [f64; 3] {
        v.to_array()
    }
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3 {
        x: 0.0,
        y: 0.0,
        z: 0.0,
    };
    pub const X: Vec3 = Vec3 {
        x: 1.0,
        y: 0.0,
        z: 0.0,
    };
    pub const Y: Vec3 = Vec3 {
        x: 0.0,
        y: 1.0,
        z: 0.0,
    };
    pub const Z: Vec3 = Vec3 {
        x: 0.0,
        y: 0.0,
        z: 1.0,
    };

    #[inline]
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Vec3 { x, y, z }
    }

    #[inline]
    pub fn dot(self, o: Vec3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    #[inline]
    pub fn cross(self, o: Vec3) -> Vec3 {
        Vec3 {
            x: self.y * o.z - self.z * o.y,
            y: self.z * o.x - self.x * o.z,
            z: self.x * o.y - self.y * o.x,
        }
    }

    #[inline]
    pub fn norm2(self) -> f64 {
        self.dot(self)
    }

    #[inline]
    pub fn norm(self) -> f64 {
        self.norm2().sqrt()
    }

    #[inline]
    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    #[inline]
    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    #[inline]
    pub fn from_array(a: [f64; 3]) -> Self {
        Vec3::new(a[0], a[1], a[2])
    }
}

impl std::ops::Add for Vec3 {
    type Output = Vec3;
    #[inline]
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl std::ops::Sub for Vec3 {
    type Output = Vec3;
    #[inline]
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl std::ops::Neg for Vec3 {
    type Output = Vec3;
    #[inline]
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

impl std::ops::Mul<f64> for Vec3 {
    type Output = Vec3;
    #[inline]
    fn mul(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl std::ops::Mul<Vec3> for f64 {
    type Output = Vec3;
    #[inline]
    fn mul(self, v: Vec3) -> Vec3 {
        v * self
    }
}

impl std::ops::AddAssign for Vec3 {
    #[inline]
    fn add_assign(&mut self, o: Vec3) {
        *self = *self + o;
    }
}

/// A direction on the unit sphere; construction normalizes the input.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec3", into = "Vec3")]
pub struct UnitAxis(Vec3);

impl TryFrom<Vec3> for UnitAxis {
    type Error = Error;
    fn try_from(v: Vec3) -> Result<Self, Error> {
        UnitAxis::new(v)
    }
}

impl From<UnitAxis> for Vec3 {
    fn from(a: UnitAxis) -> Vec3 {
        a.0
    }
}

impl UnitAxis {
    pub fn new(v: Vec3) -> Result<Self, Error> {
        let n = v.norm();
        if !v.is_finite() || n < 1e-300 {
            return Err(Error::InvalidAxis(v.to_array()));
        }
        Ok(UnitAxis(v * (1.0 / n)))
    }

    pub const fn e1() -> Self {
        UnitAxis(Vec3::X)
    }

    pub const fn e2() -> Self {
        UnitAxis(Vec3::Y)
    }

    pub const fn e3() -> Self {
        UnitAxis(Vec3::Z)
    }

    #[inline]
    pub fn as_vec(self) -> Vec3 {
        self.0
    }

    #[inline]
    pub fn dot(self, v: Vec3) -> f64 {
        self.0.dot(v)
    }
}

/// Projection of `v` onto the axis: (v . axis) axis.
#[inline]
pub fn parallel_part(v: Vec3, axis: UnitAxis) -> Vec3 {
    axis.as_vec() * axis.dot(v)
}

/// Component of `v` orthogonal to the axis.
#[inline]
pub fn perp_part(v: Vec3, axis: UnitAxis) -> Vec3 {
    v - parallel_part(v, axis)
}

/// Rotate `v` by the angle `tau` about `axis`, keeping the parallel part
/// untouched. For axis = e1 this is exactly the component formula in the
/// module docs.
#[inline]
pub fn rotate_about_axis(v: Vec3, tau: f64, axis: UnitAxis) -> Vec3 {
    let par = parallel_part(v, axis);
    let perp = v - par;
    par + perp * tau.cos() + axis.as_vec().cross(perp) * tau.sin()
}

/// A plain 3x3 matrix, row-major.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mat3 {
    pub rows: [[f64; 3]; 3],
}

impl Mat3 {
    pub const IDENTITY: Mat3 = Mat3 {
        rows: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
    };

    pub fn mul_vec(&self, v: Vec3) -> Vec3 {
        let r = &self.rows;
        Vec3::new(
            r[0][0] * v.x + r[0][1] * v.y + r[0][2] * v.z,
            r[1][0] * v.x + r[1][1] * v.y + r[1][2] * v.z,
            r[2][0] * v.x + r[2][1] * v.y + r[2][2] * v.z,
        )
    }

    pub fn transpose(&self) -> Mat3 {
        let r = &self.rows;
        Mat3 {
            rows: [
                [r[0][0], r[1][0], r[2][0]],
                [r[0][1], r[1][1], r[2][1]],
                [r[0][2], r[1][2], r[2][2]],
            ],
        }
    }

    pub fn det(&self) -> f64 {
        let r = &self.rows;
        r[0][0] * (r[1][1] * r[2][2] - r[1][2] * r[2][1])
            - r[0][1] * (r[1][0] * r[2][2] - r[1][2] * r[2][0])
            + r[0][2] * (r[1][0] * r[2][1] - r[1][1] * r[2][0])
    }
}

/// Orthogonal matrix R with R axis = e1.
///
/// Tie-break: axis = e1 gives the identity, axis = -e1 gives the rotation
/// by pi about e3; otherwise the minimal rotation taking axis to e1
/// (Rodrigues form), which is continuous away from the antipode.
pub fn alignment_rotation(axis: UnitAxis) -> Mat3 {
    let a = axis.as_vec();
    let c = a.x; // axis . e1
    if c > 1.0 - 1e-14 {
        return Mat3::IDENTITY;
    }
    if c < -1.0 + 1e-14 {
        return Mat3 {
            rows: [[-1.0, 0.0, 0.0], [0.0, -1.0, 0.0], [0.0, 0.0, 1.0]],
        };
    }
    // R = I + [w]x + [w]x^2 / (1 + c), w = axis x e1.
    let w = a.cross(Vec3::X);
    let k = 1.0 / (1.0 + c);
    let wx = [[0.0, -w.z, w.y], [w.z, 0.0, -w.x], [-w.y, w.x, 0.0]];
    let mut rows = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            let wx2: f64 = (0..3).map(|l| wx[i][l] * wx[l][j]).sum();
            rows[i][j] = if i == j { 1.0 } else { 0.0 } + wx[i][j] + k * wx2;
        }
    }
    Mat3 { rows }
}
