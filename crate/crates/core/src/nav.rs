//! Attitude algebra and navigation error-state propagation.
//!
//! The navigation frame has x along the platform velocity, z along gravity
//! (down) and y completing a right-handed triad, so the three axes are the
//! along-track, cross-track and down directions of the radar geometry.
//!
//! For straight-and-level flight the error dynamics matrix is constant and
//! nilpotent, so its matrix exponential truncates after the quadratic term and
//! position errors grow as `dp0 + dv0*t + (nu x dtheta0) * t^2 / 2`.

use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest attitude error (rad) admitted by the linearized error model.
pub const SMALL_ANGLE_LIMIT: f64 = 0.5;

pub const DEFAULT_GRAVITY: f64 = 9.81;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 3]", into = "[f64; 3]")]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3::new(0.0, 0.0, 0.0);

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Vec3 { x, y, z }
    }

    pub fn dot(self, other: Vec3) -> f64 {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn cross(self, other: Vec3) -> Vec3 {
        Vec3::new(
            self.y * other.z - self.z * other.y,
            self.z * other.x - self.x * other.z,
            self.x * other.y - self.y * other.x,
        )
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn scale(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }

    pub fn normalized(self) -> Vec3 {
        self.scale(1.0 / self.norm())
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    /// Skew-symmetric matrix `[v x]` such that `[v x] w = v x w`.
    pub fn skew(self) -> Mat3 {
        Mat3([
            [0.0, -self.z, self.y],
            [self.z, 0.0, -self.x],
            [-self.y, self.x, 0.0],
        ])
    }
}

impl From<[f64; 3]> for Vec3 {
    fn from(a: [f64; 3]) -> Self {
        Vec3::new(a[0], a[1], a[2])
    }
}

impl From<Vec3> for [f64; 3] {
    fn from(v: Vec3) -> Self {
        v.to_array()
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl AddAssign for Vec3 {
    fn add_assign(&mut self, o: Vec3) {
        *self = *self + o;
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, s: f64) -> Vec3 {
        self.scale(s)
    }
}

/// Row-major 3x3 matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mat3(pub [[f64; 3]; 3]);

impl Mat3 {
    pub const IDENTITY: Mat3 = Mat3([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]);

    pub fn transpose(&self) -> Mat3 {
        let m = &self.0;
        Mat3([
            [m[0][0], m[1][0], m[2][0]],
            [m[0][1], m[1][1], m[2][1]],
            [m[0][2], m[1][2], m[2][2]],
        ])
    }

    pub fn mul_vec(&self, v: Vec3) -> Vec3 {
        let m = &self.0;
        Vec3::new(
            m[0][0] * v.x + m[0][1] * v.y + m[0][2] * v.z,
            m[1][0] * v.x + m[1][1] * v.y + m[1][2] * v.z,
            m[2][0] * v.x + m[2][1] * v.y + m[2][2] * v.z,
        )
    }

    pub fn mul_mat(&self, o: &Mat3) -> Mat3 {
        let mut out = [[0.0; 3]; 3];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                *cell = (0..3).map(|k| self.0[i][k] * o.0[k][j]).sum();
            }
        }
        Mat3(out)
    }

    pub fn determinant(&self) -> f64 {
        let m = &self.0;
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    }
}

/// Attitude quaternion stored as (scalar, x, y, z).
///
/// Products are Hamiltonian. Rotation constructors follow the left-handed
/// (frame rotation) interpretation: `from_axis_angle(n, a)` has vector part
/// `-sin(a/2) n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quaternion {
    pub w: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Quaternion {
    pub const IDENTITY: Quaternion = Quaternion {
        w: 1.0,
        x: 0.0,
        y: 0.0,
        z: 0.0,
    };

    pub const fn new(w: f64, x: f64, y: f64, z: f64) -> Self {
        Quaternion { w, x, y, z }
    }

    pub fn from_axis_angle(axis: Vec3, angle: f64) -> Self {
        let n = axis.normalized();
        let (s, c) = (0.5 * angle).sin_cos();
        Quaternion::new(c, -s * n.x, -s * n.y, -s * n.z)
    }

    pub fn vector(&self) -> Vec3 {
        Vec3::new(self.x, self.y, self.z)
    }

    pub fn norm(&self) -> f64 {
        (self.w * self.w + self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    pub fn normalized(&self) -> Self {
        let n = self.norm();
        Quaternion::new(self.w / n, self.x / n, self.y / n, self.z / n)
    }

    pub fn conjugate(&self) -> Self {
        Quaternion::new(self.w, -self.x, -self.y, -self.z)
    }

    /// Hamilton product `self ⊗ other`.
    pub fn product(&self, other: &Quaternion) -> Quaternion {
        let (a, b) = (self, other);
        Quaternion::new(
            a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z,
            a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y,
            a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x,
            a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w,
        )
    }

    /// Sandwich product `q ⊗ [0, v] ⊗ q*`.
    pub fn rotate(&self, v: Vec3) -> Vec3 {
        let p = Quaternion::new(0.0, v.x, v.y, v.z);
        self.product(&p).product(&self.conjugate()).vector()
    }

    /// Rotation angle in [0, pi] represented by this unit quaternion.
    pub fn angle(&self) -> f64 {
        2.0 * self.vector().norm().atan2(self.w.abs())
    }

    /// Transformation matrix consistent with [`Quaternion::rotate`], so that
    /// `dcm(a ⊗ b) = dcm(a) dcm(b)`.
    pub fn to_dcm(&self) -> Mat3 {
        let Quaternion { w, x, y, z } = *self;
        Mat3([
            [
                w * w + x * x - y * y - z * z,
                2.0 * (x * y - w * z),
                2.0 * (x * z + w * y),
            ],
            [
                2.0 * (x * y + w * z),
                w * w - x * x + y * y - z * z,
                2.0 * (y * z - w * x),
            ],
            [
                2.0 * (x * z - w * y),
                2.0 * (y * z + w * x),
                w * w - x * x - y * y + z * z,
            ],
        ])
    }
}

pub fn quat_product(a: &Quaternion, b: &Quaternion) -> Quaternion {
    a.product(b)
}

pub fn quat_to_dcm(q: &Quaternion) -> Mat3 {
    q.to_dcm()
}

/// Attitude error from `[1, -dtheta/2] = q_true ⊗ q_est*`.
///
/// The scalar part is made non-negative before extraction, which removes the
/// `q -> -q` ambiguity.
pub fn attitude_error(q_true: &Quaternion, q_est: &Quaternion) -> Result<Vec3> {
    let mut dq = q_true.product(&q_est.conjugate());
    if dq.w < 0.0 {
        dq = Quaternion::new(-dq.w, -dq.x, -dq.y, -dq.z);
    }
    let angle = dq.angle();
    if angle > SMALL_ANGLE_LIMIT {
        return Err(Error::LargeAngle {
            angle,
            limit: SMALL_ANGLE_LIMIT,
        });
    }
    Ok(dq.vector().scale(-2.0))
}

/// Initial navigation errors: truth minus estimate for position and velocity,
/// small-angle rotation vector for attitude.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ErrorState {
    #[serde(default)]
    pub dp: Vec3,
    #[serde(default)]
    pub dv: Vec3,
    #[serde(default)]
    pub dtheta: Vec3,
}

impl ErrorState {
    pub const ZERO: ErrorState = ErrorState {
        dp: Vec3::ZERO,
        dv: Vec3::ZERO,
        dtheta: Vec3::ZERO,
    };

    /// Checked constructor; rejects attitude errors beyond [`SMALL_ANGLE_LIMIT`].
    pub fn new(dp: Vec3, dv: Vec3, dtheta: Vec3) -> Result<Self> {
        let e = ErrorState { dp, dv, dtheta };
        e.validate()?;
        Ok(e)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dp.is_finite() && self.dv.is_finite() && self.dtheta.is_finite()) {
            return Err(Error::validation("error state has non-finite components"));
        }
        let angle = self.dtheta.norm();
        if angle > SMALL_ANGLE_LIMIT {
            return Err(Error::LargeAngle {
                angle,
                limit: SMALL_ANGLE_LIMIT,
            });
        }
        Ok(())
    }

    pub fn is_zero(&self) -> bool {
        *self == ErrorState::ZERO
    }

    pub fn to_array(&self) -> [f64; 9] {
        let (p, v, t) = (self.dp, self.dv, self.dtheta);
        [p.x, p.y, p.z, v.x, v.y, v.z, t.x, t.y, t.z]
    }

    pub fn from_array(a: [f64; 9]) -> Self {
        ErrorState {
            dp: Vec3::new(a[0], a[1], a[2]),
            dv: Vec3::new(a[3], a[4], a[5]),
            dtheta: Vec3::new(a[6], a[7], a[8]),
        }
    }

    pub fn scaled(&self, s: f64) -> Self {
        ErrorState {
            dp: self.dp * s,
            dv: self.dv * s,
            dtheta: self.dtheta * s,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlightParams {
    /// True (constant) platform velocity in the navigation frame, m/s.
    pub v0: Vec3,
    /// Gravity magnitude, m/s^2.
    pub g: f64,
}

impl FlightParams {
    pub fn new(v0: Vec3, g: f64) -> Result<Self> {
        let p = FlightParams { v0, g };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.v0.is_finite() || self.v0.norm() <= 0.0 {
            return Err(Error::validation(
                "flight velocity v0 must be finite and non-zero",
            ));
        }
        if !(self.g.is_finite() && self.g > 0.0) {
            return Err(Error::validation("gravity g must be positive"));
        }
        Ok(())
    }

    /// Specific force sensed in level flight, `(0, 0, -g)`.
    pub fn nu_n(&self) -> Vec3 {
        Vec3::new(0.0, 0.0, -self.g)
    }

    pub fn speed(&self) -> f64 {
        self.v0.norm()
    }
}

impl Default for FlightParams {
    fn default() -> Self {
        FlightParams {
            v0: Vec3::new(100.0, 0.0, 0.0),
            g: DEFAULT_GRAVITY,
        }
    }
}

/// Acceleration error `nu x dtheta0 = (dtheta_y g, -dtheta_x g, 0)`.
/// Yaw never contributes.
pub fn accel_error_from_attitude(dtheta0: Vec3, g: f64) -> Vec3 {
    Vec3::new(dtheta0.y * g, -dtheta0.x * g, 0.0)
}

/// State transition matrix of the constant level-flight error dynamics.
#[derive(Debug, Clone, PartialEq)]
pub struct Stm(pub [[f64; 9]; 9]);

impl Stm {
    pub fn identity() -> Self {
        let mut m = [[0.0; 9]; 9];
        for (i, row) in m.iter_mut().enumerate() {
            row[i] = 1.0;
        }
        Stm(m)
    }

    /// 3x3 block at block-row `r`, block-column `c`.
    pub fn block(&self, r: usize, c: usize) -> Mat3 {
        let mut b = [[0.0; 3]; 3];
        for (i, row) in b.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                *cell = self.0[3 * r + i][3 * c + j];
            }
        }
        Mat3(b)
    }

    fn set_block(&mut self, r: usize, c: usize, b: &Mat3) {
        for i in 0..3 {
            for j in 0..3 {
                self.0[3 * r + i][3 * c + j] = b.0[i][j];
            }
        }
    }

    pub fn mul(&self, other: &Stm) -> Stm {
        let mut out = [[0.0; 9]; 9];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                *cell = (0..9).map(|k| self.0[i][k] * other.0[k][j]).sum();
            }
        }
        Stm(out)
    }

    pub fn apply(&self, x: &[f64; 9]) -> [f64; 9] {
        let mut out = [0.0; 9];
        for (o, row) in out.iter_mut().zip(&self.0) {
            *o = row.iter().zip(x).map(|(a, b)| a * b).sum();
        }
        out
    }
}

/// `Phi(dt) = [[I, I dt, (nu x) dt^2/2], [0, I, (nu x) dt], [0, 0, I]]`.
pub fn build_stm(dt: f64, params: &FlightParams) -> Stm {
    let nu_x = params.nu_n().skew();
    let scaled = |m: &Mat3, s: f64| {
        let mut out = *m;
        out.0.iter_mut().flatten().for_each(|v| *v *= s);
        out
    };
    let mut stm = Stm::identity();
    stm.set_block(0, 1, &scaled(&Mat3::IDENTITY, dt));
    stm.set_block(0, 2, &scaled(&nu_x, 0.5 * dt * dt));
    stm.set_block(1, 2, &scaled(&nu_x, dt));
    stm
}

/// `dp0 + dv0 dt + (nu x dtheta0) dt^2 / 2`.
pub fn position_error_closed_form(e0: &ErrorState, dt: f64, params: &FlightParams) -> Vec3 {
    let accel = accel_error_from_attitude(e0.dtheta, params.g);
    e0.dp + e0.dv * dt + accel * (0.5 * dt * dt)
}

/// Homogeneous propagation `dx(dt) = Phi(dt) dx0`, evaluated blockwise.
pub fn propagate_error_state(e0: &ErrorState, dt: f64, params: &FlightParams) -> ErrorState {
    let accel = accel_error_from_attitude(e0.dtheta, params.g);
    ErrorState {
        dp: position_error_closed_form(e0, dt, params),
        dv: e0.dv + accel * dt,
        dtheta: e0.dtheta,
    }
}
