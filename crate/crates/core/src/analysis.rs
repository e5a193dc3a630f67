//! Navigation-error effects on the range history and the image.
//!
//! Prediction follows the closest-approach method: the true range curve
//! `R(eta) = |p_t - v0 eta|` and the estimated curve
//! `R_hat(eta) = |p_t - v0 eta + dp(eta)|` are each minimized over the
//! aperture, and the differences of their minima and argmins are the
//! predicted range and azimuth shifts of the data curve.
//!
//! The focused target moves the opposite way: back-projection looks for the
//! data at `R_hat`, so the pixel whose estimated curve matches the true data
//! lies `d_range` nearer and `d_along` earlier.
//! [`ShiftPrediction::image_displacement`] maps the curve shifts to grid axes.

use serde::{Deserialize, Serialize};

use crate::backprojection::{ComplexImage, ImageGrid};
use crate::error::{Error, Result};
use crate::geometry::{refined_argmin, slant_range, SlowTimeGrid};
use crate::nav::{
    accel_error_from_attitude, position_error_closed_form, ErrorState, FlightParams, Vec3,
};

/// Range from the estimated platform position at `eta` to `p_t`.
pub fn estimated_range(p_t: Vec3, params: &FlightParams, e0: &ErrorState, eta: f64) -> f64 {
    let estimate = params.v0 * eta - position_error_closed_form(e0, eta, params);
    slant_range(p_t, estimate)
}

/// Target-to-estimated-platform vector `d(eta)` and its first two derivatives.
fn range_vector(p_t: Vec3, params: &FlightParams, e0: &ErrorState, eta: f64) -> (Vec3, Vec3, Vec3) {
    let accel = accel_error_from_attitude(e0.dtheta, params.g);
    let d = p_t - params.v0 * eta + position_error_closed_form(e0, eta, params);
    let d1 = -params.v0 + e0.dv + accel * eta;
    (d, d1, accel)
}

/// Curvature numerator `Q = d'.d' + d.d''`, so that `R_hat'' = Q / R_hat` at
/// a stationary point. With only attitude errors it reduces to
/// `1.5|a|^2 eta^2 - 3 a.v0 eta + p_t.a + v0.v0` for `a = nu x dtheta0`.
pub fn curvature_q(p_t: Vec3, params: &FlightParams, e0: &ErrorState, eta: f64) -> f64 {
    let (d, d1, d2) = range_vector(p_t, params, e0, eta);
    d1.dot(d1) + d.dot(d2)
}

/// Second-order expansion of the estimated range about its minimum:
/// `R_hat(eta) ~ r0_hat + quad_coeff (eta - eta0_ref)^2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaylorExpansion {
    pub r0_hat: f64,
    pub quad_coeff: f64,
    pub eta0_ref: f64,
}

impl TaylorExpansion {
    pub fn evaluate(&self, eta: f64) -> f64 {
        let s = eta - self.eta0_ref;
        self.r0_hat + self.quad_coeff * s * s
    }
}

/// Expansion of the estimated range about its minimum over the aperture.
///
/// The minimum is located with the same sampled argmin as [`predict_shift`],
/// then polished with Newton steps on `d.d' = 0` so that the linear term of
/// the expansion vanishes to rounding. The quadratic coefficient is
/// `Q / (2 r0_hat)`.
pub fn taylor_coefficients(
    p_t: Vec3,
    params: &FlightParams,
    grid: &SlowTimeGrid,
    e0: &ErrorState,
) -> Result<TaylorExpansion> {
    e0.validate()?;
    let (_, mut eta) = refined_argmin(grid, |eta| estimated_range(p_t, params, e0, eta))?;
    for _ in 0..50 {
        let (d, d1, _) = range_vector(p_t, params, e0, eta);
        let q = curvature_q(p_t, params, e0, eta);
        if q <= 0.0 {
            break;
        }
        let step = d.dot(d1) / q;
        eta -= step;
        if step.abs() <= 1e-15 * (1.0 + eta.abs()) {
            break;
        }
    }
    let r0_hat = estimated_range(p_t, params, e0, eta);
    if r0_hat <= 0.0 {
        return Err(Error::validation("target lies on the estimated trajectory"));
    }
    Ok(TaylorExpansion {
        r0_hat,
        quad_coeff: curvature_q(p_t, params, e0, eta) / (2.0 * r0_hat),
        eta0_ref: eta,
    })
}

/// True and estimated closest-approach coordinates and their differences.
///
/// `d_range > 0` means the estimated range curve lies farther than the true
/// one; `d_along` is `|v0| d_eta`, positive along the flight direction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShiftPrediction {
    pub r0: f64,
    pub eta0: f64,
    pub r0_hat: f64,
    pub eta0_hat: f64,
    pub d_range: f64,
    pub d_eta: f64,
    pub d_along: f64,
}

impl ShiftPrediction {
    /// Predicted displacement of the focused target in the image, in metres
    /// along the grid's `(along, cross)` axes.
    ///
    /// Solves the linearized conditions that the displaced pixel's true
    /// closest-approach range and time change by `-d_range` and `-d_eta`.
    pub fn image_displacement(&self, grid: &ImageGrid, p_t: Vec3, v0: Vec3) -> Result<(f64, f64)> {
        let speed2 = v0.dot(v0);
        let eta0 = p_t.dot(v0) / speed2;
        let los = p_t - v0 * eta0;
        let u = los * (1.0 / los.norm());
        let (a, c) = (grid.axis_along, grid.axis_cross);
        let m = [
            [u.dot(a), u.dot(c)],
            [v0.dot(a) / speed2, v0.dot(c) / speed2],
        ];
        let rhs = [-self.d_range, -self.d_eta];
        let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
        if det.abs() < 1e-12 {
            return Err(Error::validation(
                "image plane cannot resolve range and azimuth shifts (degenerate geometry)",
            ));
        }
        let along = (rhs[0] * m[1][1] - m[0][1] * rhs[1]) / det;
        let cross = (m[0][0] * rhs[1] - m[1][0] * rhs[0]) / det;
        Ok((along, cross))
    }
}

/// Closest-approach shift of the estimated range curve relative to the truth.
pub fn predict_shift(
    p_t: Vec3,
    params: &FlightParams,
    grid: &SlowTimeGrid,
    e0: &ErrorState,
) -> Result<ShiftPrediction> {
    e0.validate()?;
    let (r0, eta0) = refined_argmin(grid, |eta| slant_range(p_t, params.v0 * eta))?;
    let (r0_hat, eta0_hat) = refined_argmin(grid, |eta| estimated_range(p_t, params, e0, eta))?;
    let d_eta = eta0_hat - eta0;
    Ok(ShiftPrediction {
        r0,
        eta0,
        r0_hat,
        eta0_hat,
        d_range: r0_hat - r0,
        d_eta,
        d_along: params.speed() * d_eta,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Positive,
    Negative,
    None,
}

impl Direction {
    fn of(value: f64, tol: f64) -> Self {
        if value > tol {
            Direction::Positive
        } else if value < -tol {
            Direction::Negative
        } else {
            Direction::None
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DistortionEffect {
    pub shift_range: Direction,
    pub shift_azimuth: Direction,
    pub blur_azimuth: bool,
}

impl DistortionEffect {
    pub const NONE: DistortionEffect = DistortionEffect {
        shift_range: Direction::None,
        shift_azimuth: Direction::None,
        blur_azimuth: false,
    };

    pub fn is_null(&self) -> bool {
        *self == DistortionEffect::NONE
    }
}

pub const COMPONENT_NAMES: [&str; 9] = [
    "dp_along", "dp_cross", "dp_down", "dv_along", "dv_cross", "dv_down", "roll", "pitch", "yaw",
];

/// Expected curve effects of each error component acting alone, plus the
/// combined error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistortionReport {
    pub components: Vec<(String, DistortionEffect)>,
    pub combined: DistortionEffect,
}

impl DistortionReport {
    pub fn component(&self, name: &str) -> Option<DistortionEffect> {
        self.components
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, e)| *e)
    }

    pub fn is_null(&self) -> bool {
        self.combined.is_null() && self.components.iter().all(|(_, e)| e.is_null())
    }
}

/// First-order effect of `e0` on the closest approach of `p_t`.
///
/// About the true closest approach `eta0` with unit line of sight `u`:
/// `dR0 = u.dp(eta0)`, `d eta0 = (v0.dp(eta0) - R0 u.dp'(eta0)) / |v0|^2`, and
/// the curvature numerator changes by
/// `-2 v0.(dv + a eta0) + (p_t - v0 eta0).a`, which is what blurs in azimuth.
fn first_order_effect(e0: &ErrorState, p_t: Vec3, params: &FlightParams) -> DistortionEffect {
    let v0 = params.v0;
    let speed2 = v0.dot(v0);
    let eta0 = p_t.dot(v0) / speed2;
    let los = p_t - v0 * eta0;
    let r0 = los.norm();
    let u = los * (1.0 / r0);
    let accel = accel_error_from_attitude(e0.dtheta, params.g);
    let dp = position_error_closed_form(e0, eta0, params);
    let dp_rate = e0.dv + accel * eta0;

    let d_range = u.dot(dp);
    let d_eta = (v0.dot(dp) - r0 * u.dot(dp_rate)) / speed2;
    let d_q = -2.0 * v0.dot(dp_rate) + los.dot(accel);

    // Relative tolerances absorb rounding in quantities that vanish exactly
    // in infinite precision (e.g. along-track offsets projected on the LOS).
    let size = e0.to_array().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let scale = size * (1.0 + r0 + speed2.sqrt() * (1.0 + eta0) + params.g * (1.0 + eta0 * eta0));
    let tol = 1e-12 * scale;
    DistortionEffect {
        shift_range: Direction::of(d_range, tol),
        shift_azimuth: Direction::of(d_eta * speed2.sqrt(), tol),
        blur_azimuth: d_q.abs() > 1e-9 * scale * speed2.sqrt(),
    }
}

pub fn classify_distortion(e0: &ErrorState, p_t: Vec3, params: &FlightParams) -> DistortionReport {
    let full = e0.to_array();
    let components = COMPONENT_NAMES
        .iter()
        .enumerate()
        .map(|(i, name)| {
            let mut single = [0.0; 9];
            single[i] = full[i];
            let effect = first_order_effect(&ErrorState::from_array(single), p_t, params);
            (name.to_string(), effect)
        })
        .collect();
    DistortionReport {
        components,
        combined: first_order_effect(e0, p_t, params),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    Along,
    Cross,
}

impl Axis {
    fn name(self) -> &'static str {
        match self {
            Axis::Along => "along",
            Axis::Cross => "cross",
        }
    }
}

/// Location and height of the image maximum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Peak {
    pub idx: (usize, usize),
    pub subpixel: (f64, f64),
    pub magnitude: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImageMetrics {
    pub peak_idx: (usize, usize),
    pub peak_subpixel: (f64, f64),
    pub peak_mag: f64,
    pub width3db_along: f64,
    pub width3db_cross: f64,
    pub entropy: f64,
}

/// Vertex offset of the parabola through `(-1, left), (0, centre), (1, right)`.
pub fn parabolic_offset(left: f64, centre: f64, right: f64) -> f64 {
    let denom = 2.0 * centre - left - right;
    if denom <= 0.0 {
        return 0.0;
    }
    (0.5 * (right - left) / denom).clamp(-0.5, 0.5)
}

/// Global maximum of `|values|`, refined per axis by three-point parabolas.
pub fn find_peak(img: &ComplexImage) -> Result<Peak> {
    let mags = img.magnitudes();
    let (first, rest) = mags
        .split_first()
        .ok_or_else(|| Error::DegenerateImage("image has no pixels".into()))?;
    if rest.iter().all(|m| m == first) {
        return Err(Error::DegenerateImage(
            "all pixel magnitudes are equal".into(),
        ));
    }
    let (flat, magnitude) =
        mags.iter().enumerate().fold(
            (0, f64::NEG_INFINITY),
            |b, (k, &m)| if m > b.1 { (k, m) } else { b },
        );
    let (na, nc) = (img.grid.n_along, img.grid.n_cross);
    let (i, j) = (flat / nc, flat % nc);
    let at = |i: usize, j: usize| mags[i * nc + j];
    let di = if i > 0 && i + 1 < na {
        parabolic_offset(at(i - 1, j), magnitude, at(i + 1, j))
    } else {
        0.0
    };
    let dj = if j > 0 && j + 1 < nc {
        parabolic_offset(at(i, j - 1), magnitude, at(i, j + 1))
    } else {
        0.0
    };
    Ok(Peak {
        idx: (i, j),
        subpixel: (i as f64 + di, j as f64 + dj),
        magnitude,
    })
}

fn profile(img: &ComplexImage, peak: &Peak, axis: Axis) -> (Vec<f64>, usize, f64) {
    let (i, j) = peak.idx;
    let g = &img.grid;
    match axis {
        Axis::Along => (
            (0..g.n_along).map(|k| img.at(k, j).norm()).collect(),
            i,
            g.spacing_along,
        ),
        Axis::Cross => (
            (0..g.n_cross).map(|k| img.at(i, k).norm()).collect(),
            j,
            g.spacing_cross,
        ),
    }
}

/// Half-power (3 dB) width of the magnitude profile through `peak`.
fn width_at(img: &ComplexImage, peak: &Peak, axis: Axis) -> Result<f64> {
    let (prof, centre, spacing) = profile(img, peak, axis);
    let level = peak.magnitude / std::f64::consts::SQRT_2;
    let unbounded = || Error::Unbounded { axis: axis.name() };

    let mut k = centre;
    while prof[k] >= level {
        k = k.checked_sub(1).ok_or_else(unbounded)?;
    }
    let left = k as f64 + (level - prof[k]) / (prof[k + 1] - prof[k]);

    let mut k = centre;
    while prof[k] >= level {
        k += 1;
        if k == prof.len() {
            return Err(unbounded());
        }
    }
    let right = (k - 1) as f64 + (prof[k - 1] - level) / (prof[k - 1] - prof[k]);

    Ok(((right - left) * spacing).max(spacing))
}

/// 3 dB width in metres through the image peak, floored at one pixel.
pub fn width_3db(img: &ComplexImage, axis: Axis) -> Result<f64> {
    let peak = find_peak(img)?;
    width_at(img, &peak, axis)
}

/// Shannon entropy (natural log) of the normalized pixel powers.
pub fn image_entropy(img: &ComplexImage) -> Result<f64> {
    let total: f64 = img.values.iter().map(|v| v.norm_sqr()).sum();
    if total <= 0.0 {
        return Err(Error::DegenerateImage("image is all zero".into()));
    }
    let h = img
        .values
        .iter()
        .map(|v| v.norm_sqr() / total)
        .filter(|&p| p > 0.0)
        .map(|p| -p * p.ln())
        .sum::<f64>();
    Ok(h.max(0.0))
}

pub fn image_metrics(img: &ComplexImage) -> Result<ImageMetrics> {
    let peak = find_peak(img)?;
    Ok(ImageMetrics {
        peak_idx: peak.idx,
        peak_subpixel: peak.subpixel,
        peak_mag: peak.magnitude,
        width3db_along: width_at(img, &peak, Axis::Along)?,
        width3db_cross: width_at(img, &peak, Axis::Cross)?,
        entropy: image_entropy(img)?,
    })
}

/// Sub-pixel peak displacement from `reference` to `test`, in metres along
/// the grid axes.
pub fn measure_shift(
    reference: &ImageMetrics,
    test: &ImageMetrics,
    grid: &ImageGrid,
) -> (f64, f64) {
    (
        (test.peak_subpixel.0 - reference.peak_subpixel.0) * grid.spacing_along,
        (test.peak_subpixel.1 - reference.peak_subpixel.1) * grid.spacing_cross,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;

    fn flight() -> FlightParams {
        FlightParams::default()
    }

    fn grid(n: usize) -> ImageGrid {
        ImageGrid {
            origin: Vec3::ZERO,
            axis_along: Vec3::new(1.0, 0.0, 0.0),
            axis_cross: Vec3::new(0.0, 1.0, 0.0),
            spacing_along: 0.5,
            spacing_cross: 0.25,
            n_along: n,
            n_cross: n,
        }
    }

    fn image_from(n: usize, f: impl Fn(usize, usize) -> f64) -> ComplexImage {
        let mut img = ComplexImage::zeros(grid(n));
        for i in 0..n {
            for j in 0..n {
                img.values[i * n + j] = Complex64::new(f(i, j), 0.0);
            }
        }
        img
    }

    #[test]
    fn estimated_range_examples() {
        let p_t = Vec3::new(0.0, 1000.0, 0.0);
        let dp = ErrorState {
            dp: Vec3::new(0.0, 3.0, 0.0),
            ..ErrorState::ZERO
        };
        assert!((estimated_range(p_t, &flight(), &dp, 0.0) - 1003.0).abs() < 1e-12);
        let dv = ErrorState {
            dv: Vec3::new(0.1, 0.0, 0.0),
            ..ErrorState::ZERO
        };
        let want = Vec3::new(-199.8, 1000.0, 0.0).norm();
        assert!((estimated_range(p_t, &flight(), &dv, 2.0) - want).abs() < 1e-9);
        assert!((want - 1019.7647).abs() < 1e-4);
        let q = Vec3::new(20.0, 800.0, 300.0);
        assert_eq!(
            estimated_range(q, &flight(), &ErrorState::ZERO, 0.7),
            slant_range(q, flight().v0 * 0.7)
        );
    }

    proptest::proptest! {
        #[test]
        fn estimated_range_equals_corrupted_slant_range(
            x in -200.0f64..200.0, y in 200.0f64..3000.0, z in 0.0f64..1500.0,
            e in proptest::array::uniform9(-0.05f64..0.05),
            k in 0usize..256,
        ) {
            let p = flight();
            let slow = SlowTimeGrid::new(128.0, 256).unwrap();
            let mut a = e;
            a[0] *= 60.0; a[1] *= 60.0; a[2] *= 60.0;
            let e0 = ErrorState::from_array(a);
            let traj = crate::geometry::corrupted_trajectory(&p, &slow, &e0).unwrap();
            let p_t = Vec3::new(x, y, z);
            let direct = estimated_range(p_t, &p, &e0, traj.times[k]);
            let via = slant_range(p_t, traj.positions[k]);
            proptest::prop_assert!((direct - via).abs() <= 1e-12 * via.max(1.0));
        }

        #[test]
        fn cross_track_shift_is_antisymmetric(d in 0.1f64..3.0, x in 40.0f64..80.0, y in 500.0f64..2000.0, z in 100.0f64..1000.0) {
            let slow = SlowTimeGrid::new(256.0, 384).unwrap();
            let p_t = Vec3::new(x, y, z);
            let plus = ErrorState { dp: Vec3::new(0.0, d, 0.0), ..ErrorState::ZERO };
            let a = predict_shift(p_t, &flight(), &slow, &plus).unwrap();
            let b = predict_shift(p_t, &flight(), &slow, &plus.scaled(-1.0)).unwrap();
            proptest::prop_assert!((a.d_range + b.d_range).abs() < 0.05);
        }

        #[test]
        fn equal_line_of_sight_errors_are_indistinguishable(h in 0.5f64..3.0, y in 500.0f64..2000.0, z in 200.0f64..1000.0) {
            let slow = SlowTimeGrid::new(256.0, 384).unwrap();
            let p_t = Vec3::new(60.0, y, z);
            let cross = ErrorState { dp: Vec3::new(0.0, h * z / y, 0.0), ..ErrorState::ZERO };
            let elev = ErrorState { dp: Vec3::new(0.0, 0.0, h), ..ErrorState::ZERO };
            let a = predict_shift(p_t, &flight(), &slow, &cross).unwrap().d_range;
            let b = predict_shift(p_t, &flight(), &slow, &elev).unwrap().d_range;
            proptest::prop_assert!((a - b).abs() < 0.01 * a.abs().max(b.abs()), "{} {}", a, b);
        }
    }

    #[test]
    fn q_examples() {
        let p = flight();
        // Zero error, |v0| = 100, R0 = 1000: curvature v0.v0 / (2 R0) = 5.
        let slow = SlowTimeGrid::new(100.0, 201).unwrap();
        let t = taylor_coefficients(Vec3::new(100.0, 1000.0, 0.0), &p, &slow, &ErrorState::ZERO)
            .unwrap();
        assert!((t.quad_coeff - 5.0).abs() < 1e-9);
        assert!((t.r0_hat - 1000.0).abs() < 1e-9);
        assert!(
            (curvature_q(Vec3::new(3.0, 700.0, 2.0), &p, &ErrorState::ZERO, 0.4) - 1e4).abs()
                < 1e-9
        );

        // Pure acceleration error reproduces the attitude-error Q expression.
        // dtheta_y = 0.1 / g gives an along-track acceleration error of 0.1 m/s^2.
        let e = ErrorState {
            dtheta: Vec3::new(0.0, 0.1 / p.g, 0.0),
            ..ErrorState::ZERO
        };
        let q = curvature_q(Vec3::new(0.0, 1000.0, 0.0), &p, &e, 1.0);
        assert!((q - 9970.015).abs() < 1e-9, "{q}");
    }

    #[test]
    fn predict_shift_zero_error_is_exactly_zero() {
        let slow = SlowTimeGrid::new(256.0, 257).unwrap();
        let s = predict_shift(
            Vec3::new(50.0, 1000.0, 500.0),
            &flight(),
            &slow,
            &ErrorState::ZERO,
        )
        .unwrap();
        assert_eq!(s.d_range, 0.0);
        assert_eq!(s.d_eta, 0.0);
        assert_eq!(s.d_along, 0.0);
    }

    /// Brute-force argmin on a fine grid, independent of the parabolic refinement.
    fn dense_argmin(f: impl Fn(f64) -> f64, t_max: f64, n: usize) -> (f64, f64) {
        (0..=n)
            .map(|k| {
                let eta = t_max * k as f64 / n as f64;
                (f(eta), eta)
            })
            .fold((f64::INFINITY, 0.0), |b, x| if x.0 < b.0 { x } else { b })
    }

    #[test]
    fn predict_shift_position_examples() {
        let slow = SlowTimeGrid::new(256.0, 257).unwrap();
        let p_t = Vec3::new(50.0, 1000.0, 500.0);
        let cross = ErrorState {
            dp: Vec3::new(0.0, 3.0, 0.0),
            ..ErrorState::ZERO
        };
        let s = predict_shift(p_t, &flight(), &slow, &cross).unwrap();
        let (r_true, _) = dense_argmin(|eta| slant_range(p_t, flight().v0 * eta), 1.0, 1_000_000);
        let (r_est, eta_est) = dense_argmin(
            |eta| estimated_range(p_t, &flight(), &cross, eta),
            1.0,
            1_000_000,
        );
        assert!((s.d_range - (r_est - r_true)).abs() < 1e-6);
        assert!((s.d_range - 2.683).abs() < 2e-3, "{}", s.d_range);
        assert!(s.d_eta.abs() < 2e-6 && (eta_est - 0.5).abs() < 2e-6);

        let along = ErrorState {
            dp: Vec3::new(3.0, 0.0, 0.0),
            ..ErrorState::ZERO
        };
        let s = predict_shift(p_t, &flight(), &slow, &along).unwrap();
        let (_, eta_est) = dense_argmin(
            |eta| estimated_range(p_t, &flight(), &along, eta),
            1.0,
            1_000_000,
        );
        assert!(s.d_range.abs() < 1e-6);
        assert!((s.eta0_hat - eta_est).abs() < 2e-6);
        assert!((s.d_eta - 0.03).abs() < 2e-6);
        assert!((s.d_along - 3.0).abs() < 2e-4);
    }

    #[test]
    fn image_displacement_opposes_curve_shift() {
        let p_t = Vec3::new(50.0, 1000.0, 500.0);
        let g = grid(4);
        let pred = ShiftPrediction {
            r0: 0.0,
            eta0: 0.0,
            r0_hat: 0.0,
            eta0_hat: 0.0,
            d_range: 3.0 * 1000.0 / p_t.dot(Vec3::new(0.0, 1000.0, 500.0)).sqrt(),
            d_eta: 0.03,
            d_along: 3.0,
        };
        let (a, c) = pred.image_displacement(&g, p_t, flight().v0).unwrap();
        assert!((a + 3.0).abs() < 1e-12);
        assert!((c + 3.0).abs() < 1e-12);
    }

    #[test]
    fn edge_minimum_propagates() {
        let slow = SlowTimeGrid::new(256.0, 100).unwrap();
        let p_t = Vec3::new(90.0, 1000.0, 500.0);
        assert!(matches!(
            predict_shift(p_t, &flight(), &slow, &ErrorState::ZERO),
            Err(Error::EdgeMinimum { .. })
        ));
        assert!(matches!(
            taylor_coefficients(p_t, &flight(), &slow, &ErrorState::ZERO),
            Err(Error::EdgeMinimum { .. })
        ));
    }

    #[test]
    fn distortion_rules() {
        let p = flight();
        let p_t = Vec3::new(50.0, 1000.0, 500.0);
        let only = |i: usize, v: f64| {
            let mut a = [0.0; 9];
            a[i] = v;
            ErrorState::from_array(a)
        };

        let yaw = classify_distortion(&only(8, 0.1), p_t, &p);
        assert!(yaw.is_null());

        let dv_along = classify_distortion(&only(3, 0.1), p_t, &p).combined;
        assert!(dv_along.blur_azimuth);
        assert_eq!(dv_along.shift_azimuth, Direction::Positive);

        let dp_cross = classify_distortion(&only(1, 3.0), p_t, &p).combined;
        assert_eq!(dp_cross.shift_range, Direction::Positive);
        assert_eq!(dp_cross.shift_azimuth, Direction::None);
        assert!(!dp_cross.blur_azimuth);

        let dp_along = classify_distortion(&only(0, 3.0), p_t, &p).combined;
        assert_eq!(dp_along.shift_range, Direction::None);
        assert_eq!(dp_along.shift_azimuth, Direction::Positive);
        assert!(!dp_along.blur_azimuth);

        let dp_down = classify_distortion(&only(2, -3.0), p_t, &p).combined;
        assert_eq!(dp_down.shift_range, Direction::Negative);
        assert!(!dp_down.blur_azimuth);

        for i in [4, 5] {
            let e = classify_distortion(&only(i, 0.05), p_t, &p).combined;
            assert_eq!(e.shift_range, Direction::Positive);
            assert!(!e.blur_azimuth);
        }
        assert!(
            classify_distortion(&only(6, 0.001), p_t, &p)
                .combined
                .blur_azimuth
        );
        assert!(
            classify_distortion(&only(7, 0.02), p_t, &p)
                .combined
                .blur_azimuth
        );

        let mixed = classify_distortion(
            &ErrorState::from_array([3.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.1]),
            p_t,
            &p,
        );
        assert!(mixed.component("yaw").unwrap().is_null());
        assert!(!mixed.component("dp_along").unwrap().is_null());
    }

    #[test]
    fn single_pixel_peak() {
        let img = image_from(5, |i, j| if (i, j) == (2, 3) { 4.0 } else { 0.0 });
        let p = find_peak(&img).unwrap();
        assert_eq!(p.idx, (2, 3));
        assert_eq!(p.subpixel, (2.0, 3.0));
        assert_eq!(image_entropy(&img).unwrap(), 0.0);
        let m = image_metrics(&img).unwrap();
        assert!(m.width3db_along >= img.grid.spacing_along);
        assert!(m.width3db_cross >= img.grid.spacing_cross);
    }

    #[test]
    fn parabolic_offsets() {
        assert_eq!(parabolic_offset(0.5, 1.0, 0.5), 0.0);
        assert!((parabolic_offset(0.6, 1.0, 0.8) - 1.0 / 6.0).abs() < 1e-12);
        let img = image_from(5, |i, j| match (i, j) {
            (2, 2) => 1.0,
            (1, 2) => 0.6,
            (3, 2) => 0.8,
            _ => 0.1,
        });
        let p = find_peak(&img).unwrap();
        assert!((p.subpixel.0 - (2.0 + 1.0 / 6.0)).abs() < 1e-12);
    }

    #[test]
    fn degenerate_images() {
        let zero = image_from(4, |_, _| 0.0);
        assert!(matches!(find_peak(&zero), Err(Error::DegenerateImage(_))));
        assert!(matches!(
            image_entropy(&zero),
            Err(Error::DegenerateImage(_))
        ));
        let flat = image_from(4, |_, _| 2.0);
        assert!(matches!(find_peak(&flat), Err(Error::DegenerateImage(_))));
    }

    #[test]
    fn entropy_of_uniform_patch_and_scale_invariance() {
        let img = image_from(6, |i, j| if i < 2 && j < 4 { 1.0 } else { 0.0 });
        assert!((image_entropy(&img).unwrap() - 8f64.ln()).abs() < 1e-12);
        let mut scaled = image_from(6, |i, j| ((i * 7 + j * 3) % 5) as f64);
        let h = image_entropy(&scaled).unwrap();
        let z = Complex64::new(-2.5, 1.25);
        scaled.values.iter_mut().for_each(|v| *v *= z);
        assert!((image_entropy(&scaled).unwrap() - h).abs() < 1e-12);
    }

    #[test]
    fn gaussian_width() {
        // Power profile is Gaussian with sigma (in pixels), so the amplitude is
        // exp(-x^2 / (4 sigma^2)) and the half-power width is 2.3548 sigma.
        let sigma = 4.0;
        let n = 61;
        let img = image_from(n, |i, j| {
            let x = i as f64 - 30.0;
            let y = j as f64 - 30.0;
            (-(x * x) / (4.0 * sigma * sigma)).exp() * (-(y * y) / 2.0).exp()
        });
        let w = width_3db(&img, Axis::Along).unwrap();
        let want = 2.3548 * sigma * img.grid.spacing_along;
        assert!((w - want).abs() < 0.02 * want, "{w} vs {want}");
    }

    #[test]
    fn unbounded_profile() {
        let img = image_from(5, |i, j| if j == 2 { 1.0 + 0.01 * i as f64 } else { 0.0 });
        assert!(matches!(
            width_3db(&img, Axis::Along),
            Err(Error::Unbounded { .. })
        ));
        assert!(width_3db(&img, Axis::Cross).is_ok());
    }

    #[test]
    fn measure_shift_examples() {
        let g = grid(16);
        let bump = |ci: f64, cj: f64| {
            image_from(16, move |i, j| {
                let (x, y) = (i as f64 - ci, j as f64 - cj);
                (-(x * x + y * y) / 8.0).exp()
            })
        };
        let reference = image_metrics(&bump(7.0, 7.0)).unwrap();
        assert_eq!(measure_shift(&reference, &reference, &g), (0.0, 0.0));
        let moved = image_metrics(&bump(7.0, 9.0)).unwrap();
        let (a, c) = measure_shift(&reference, &moved, &g);
        assert!(a.abs() < 1e-12);
        assert!((c - 2.0 * g.spacing_cross).abs() < 1e-12);
        let sub = image_metrics(&bump(7.3, 7.0)).unwrap();
        let (a, _) = measure_shift(&reference, &sub, &g);
        assert!((a / g.spacing_along - 0.3).abs() < 0.1);
    }
}
