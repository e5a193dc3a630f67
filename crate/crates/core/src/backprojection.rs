//! Time-domain back-projection.
//!
//! Each pixel accumulates, in ascending pulse order, the range-compressed
//! sample found at its two-way delay times the phase correction
//! `exp(+j 4 pi R / lambda)`. Pixels are independent, so the image is computed
//! in parallel over rows while each per-pixel sum stays sequential; the output
//! is bitwise independent of the thread count.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{slant_range, Trajectory};
use crate::nav::Vec3;
use crate::signal::{ChirpParams, DataKind, DataMatrix, SPEED_OF_LIGHT};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Interpolation {
    #[default]
    Linear,
    Nearest,
}

/// Planar pixel lattice: `pixel(i, j) = origin + i*da*axis_along + j*dc*axis_cross`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImageGrid {
    pub origin: Vec3,
    pub axis_along: Vec3,
    pub axis_cross: Vec3,
    pub spacing_along: f64,
    pub spacing_cross: f64,
    pub n_along: usize,
    pub n_cross: usize,
}

impl ImageGrid {
    pub fn validate(&self) -> Result<()> {
        let unit = |v: Vec3| (v.norm() - 1.0).abs() < 1e-9;
        if !(self.origin.is_finite() && unit(self.axis_along) && unit(self.axis_cross)) {
            return Err(Error::validation(
                "image grid axes must be finite unit vectors",
            ));
        }
        if self.axis_along.dot(self.axis_cross).abs() > 1e-9 {
            return Err(Error::validation("image grid axes must be orthogonal"));
        }
        if !(self.spacing_along > 0.0 && self.spacing_cross > 0.0) {
            return Err(Error::validation("image grid spacings must be positive"));
        }
        if self.n_along == 0 || self.n_cross == 0 {
            return Err(Error::validation("image grid must have at least one pixel"));
        }
        Ok(())
    }

    pub fn pixel(&self, i: usize, j: usize) -> Vec3 {
        self.pixel_at(i as f64, j as f64)
    }

    /// Position of fractional grid coordinates.
    pub fn pixel_at(&self, i: f64, j: f64) -> Vec3 {
        self.origin
            + self.axis_along * (i * self.spacing_along)
            + self.axis_cross * (j * self.spacing_cross)
    }

    /// Fractional grid coordinates of the projection of `p` onto the grid plane.
    pub fn coordinates_of(&self, p: Vec3) -> (f64, f64) {
        let d = p - self.origin;
        (
            d.dot(self.axis_along) / self.spacing_along,
            d.dot(self.axis_cross) / self.spacing_cross,
        )
    }

    pub fn len(&self) -> usize {
        self.n_along * self.n_cross
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Back-projected image, row-major with the along-track index major.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexImage {
    pub grid: ImageGrid,
    pub values: Vec<Complex64>,
    /// Fraction of pulses whose delay fell outside the data window, per pixel.
    pub skipped_fraction: Vec<f64>,
}

impl ComplexImage {
    pub fn zeros(grid: ImageGrid) -> Self {
        ComplexImage {
            grid,
            values: vec![Complex64::new(0.0, 0.0); grid.len()],
            skipped_fraction: vec![0.0; grid.len()],
        }
    }

    pub fn at(&self, i: usize, j: usize) -> Complex64 {
        self.values[i * self.grid.n_cross + j]
    }

    pub fn magnitudes(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.norm()).collect()
    }
}

fn check_inputs(rc: &DataMatrix, traj: &Trajectory) -> Result<()> {
    if rc.kind != DataKind::RangeCompressed {
        return Err(Error::validation(
            "back-projection expects range-compressed data",
        ));
    }
    rc.validate()?;
    if traj.len() != rc.n_pulses {
        return Err(Error::ShapeMismatch(format!(
            "trajectory has {} positions but data has {} pulses",
            traj.len(),
            rc.n_pulses
        )));
    }
    Ok(())
}

fn sample_at(pulse: &[Complex64], index: f64, interp: Interpolation) -> Option<Complex64> {
    let last = pulse.len() - 1;
    if !(index >= 0.0 && index <= last as f64) {
        return None;
    }
    match interp {
        Interpolation::Nearest => Some(pulse[(index.round() as usize).min(last)]),
        Interpolation::Linear => {
            let i0 = index.floor() as usize;
            if i0 >= last {
                return Some(pulse[last]);
            }
            let frac = index - i0 as f64;
            Some(pulse[i0] * (1.0 - frac) + pulse[i0 + 1] * frac)
        }
    }
}

fn pixel_sum(
    p_pix: Vec3,
    rc: &DataMatrix,
    traj: &Trajectory,
    params: &ChirpParams,
    interp: Interpolation,
) -> (Complex64, f64) {
    let wavenumber = 4.0 * PI / params.lambda();
    let mut acc = Complex64::new(0.0, 0.0);
    let mut skipped = 0usize;
    for (k, &p) in traj.positions.iter().enumerate() {
        let range = slant_range(p_pix, p);
        let t_pix = 2.0 * range / SPEED_OF_LIGHT;
        let index = (t_pix + rc.mf_delay - rc.t_start) * rc.fs;
        match sample_at(rc.pulse(k), index, interp) {
            Some(s) => acc += s * Complex64::from_polar(1.0, wavenumber * range),
            None => skipped += 1,
        }
    }
    (acc, skipped as f64 / traj.len().max(1) as f64)
}

/// Azimuth-compressed value at `p_pix` and the fraction of pulses skipped
/// because the pixel's delay fell outside the data window.
pub fn pixel_response(
    p_pix: Vec3,
    rc: &DataMatrix,
    traj: &Trajectory,
    params: &ChirpParams,
) -> Result<(Complex64, f64)> {
    pixel_response_with(p_pix, rc, traj, params, Interpolation::Linear)
}

pub fn pixel_response_with(
    p_pix: Vec3,
    rc: &DataMatrix,
    traj: &Trajectory,
    params: &ChirpParams,
    interp: Interpolation,
) -> Result<(Complex64, f64)> {
    check_inputs(rc, traj)?;
    Ok(pixel_sum(p_pix, rc, traj, params, interp))
}

pub fn backproject(
    rc: &DataMatrix,
    traj: &Trajectory,
    grid: &ImageGrid,
    params: &ChirpParams,
) -> Result<ComplexImage> {
    backproject_with(rc, traj, grid, params, Interpolation::Linear)
}

pub fn backproject_with(
    rc: &DataMatrix,
    traj: &Trajectory,
    grid: &ImageGrid,
    params: &ChirpParams,
    interp: Interpolation,
) -> Result<ComplexImage> {
    check_inputs(rc, traj)?;
    grid.validate()?;
    let mut img = ComplexImage::zeros(*grid);
    let n_cross = grid.n_cross;
    img.values
        .par_chunks_mut(n_cross)
        .zip(img.skipped_fraction.par_chunks_mut(n_cross))
        .enumerate()
        .for_each(|(i, (row, skip_row))| {
            for (j, (v, s)) in row.iter_mut().zip(skip_row.iter_mut()).enumerate() {
                let (value, skipped) = pixel_sum(grid.pixel(i, j), rc, traj, params, interp);
                *v = value;
                *s = skipped;
            }
        });
    Ok(img)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{corrupted_trajectory, truth_trajectory, SlowTimeGrid, Target};
    use crate::nav::{ErrorState, FlightParams};
    use crate::signal::{synthesize_range_compressed, RangeGate};

    struct Setup {
        params: ChirpParams,
        flight: FlightParams,
        slow: SlowTimeGrid,
        target: Target,
        gate: RangeGate,
    }

    fn setup() -> Setup {
        Setup {
            params: ChirpParams::centered(1.5e13, 1e-5, 400e6, 10e9).unwrap(),
            flight: FlightParams::default(),
            slow: SlowTimeGrid::new(256.0, 129).unwrap(),
            target: Target::new(Vec3::new(25.0, 1000.0, 500.0), 1.0).unwrap(),
            gate: RangeGate {
                near: 1110.0,
                far: 1125.0,
            },
        }
    }

    fn grid_around(p: Vec3, da: f64, dc: f64, n: usize) -> ImageGrid {
        let half = (n / 2) as f64;
        ImageGrid {
            origin: p - Vec3::new(half * da, half * dc, 0.0),
            axis_along: Vec3::new(1.0, 0.0, 0.0),
            axis_cross: Vec3::new(0.0, 1.0, 0.0),
            spacing_along: da,
            spacing_cross: dc,
            n_along: n,
            n_cross: n,
        }
    }

    #[test]
    fn all_pulses_out_of_gate() {
        let s = setup();
        let traj = truth_trajectory(&s.flight, &s.slow);
        let rc = synthesize_range_compressed(&[s.target], &traj, &s.params, &s.gate, s.slow.prf);
        let far_away = Vec3::new(25.0, 5000.0, 500.0);
        let (v, skipped) = pixel_response(far_away, &rc, &traj, &s.params).unwrap();
        assert_eq!(v, Complex64::new(0.0, 0.0));
        assert_eq!(skipped, 1.0);
    }

    #[test]
    fn focused_pixel_sums_coherently() {
        let s = setup();
        let traj = truth_trajectory(&s.flight, &s.slow);
        let rc = synthesize_range_compressed(&[s.target], &traj, &s.params, &s.gate, s.slow.prf);
        let (v, skipped) = pixel_response(s.target.position, &rc, &traj, &s.params).unwrap();
        assert_eq!(skipped, 0.0);
        let bound = 0.9 * s.slow.n_pulses as f64 * s.params.t * s.target.amplitude;
        assert!(v.norm() >= bound, "{} < {bound}", v.norm());
        let again = pixel_response(s.target.position, &rc, &traj, &s.params).unwrap();
        assert_eq!(v.re.to_bits(), again.0.re.to_bits());
        assert_eq!(v.im.to_bits(), again.0.im.to_bits());
    }

    #[test]
    fn per_pulse_phases_are_coherent_at_target() {
        let s = setup();
        let traj = truth_trajectory(&s.flight, &s.slow);
        let rc = synthesize_range_compressed(&[s.target], &traj, &s.params, &s.gate, s.slow.prf);
        let wavenumber = 4.0 * PI / s.params.lambda();
        let terms: Vec<Complex64> = traj
            .positions
            .iter()
            .enumerate()
            .map(|(k, &p)| {
                let r = slant_range(s.target.position, p);
                let idx = (2.0 * r / SPEED_OF_LIGHT + rc.mf_delay - rc.t_start) * rc.fs;
                sample_at(rc.pulse(k), idx, Interpolation::Linear).unwrap()
                    * Complex64::from_polar(1.0, wavenumber * r)
            })
            .collect();
        let mean: Complex64 = terms.iter().map(|t| t / t.norm()).sum();
        let mean_phase = mean.arg();
        for t in &terms {
            let d = (t * Complex64::from_polar(1.0, -mean_phase)).arg();
            assert!(d.abs() < 0.2, "phase deviation {d}");
        }
    }

    #[test]
    fn zero_data_gives_zero_image() {
        let s = setup();
        let traj = truth_trajectory(&s.flight, &s.slow);
        let mut rc = synthesize_range_compressed(&[], &traj, &s.params, &s.gate, s.slow.prf);
        rc.values
            .iter_mut()
            .for_each(|v| *v = Complex64::new(0.0, 0.0));
        let img = backproject(
            &rc,
            &traj,
            &grid_around(s.target.position, 0.1, 0.25, 8),
            &s.params,
        )
        .unwrap();
        assert!(img.values.iter().all(|v| v.norm() == 0.0));
    }

    #[test]
    fn image_superposes() {
        let s = setup();
        let traj = truth_trajectory(&s.flight, &s.slow);
        let b = Target::new(Vec3::new(25.3, 1001.0, 500.0), 0.6).unwrap();
        let grid = grid_around(s.target.position, 0.1, 0.25, 12);
        let img = |targets: &[Target]| {
            let rc = synthesize_range_compressed(targets, &traj, &s.params, &s.gate, s.slow.prf);
            backproject(&rc, &traj, &grid, &s.params).unwrap()
        };
        let both = img(&[s.target, b]);
        let a_only = img(&[s.target]);
        let b_only = img(&[b]);
        let peak = both.values.iter().map(|v| v.norm()).fold(0.0, f64::max);
        for ((x, y), z) in both.values.iter().zip(&a_only.values).zip(&b_only.values) {
            assert!((x - (y + z)).norm() <= 1e-9 * peak);
        }
    }

    #[test]
    fn yaw_only_error_leaves_image_unchanged() {
        let s = setup();
        let truth = truth_trajectory(&s.flight, &s.slow);
        let yaw = ErrorState {
            dtheta: Vec3::new(0.0, 0.0, 0.1),
            ..ErrorState::ZERO
        };
        let corrupted = corrupted_trajectory(&s.flight, &s.slow, &yaw).unwrap();
        let rc = synthesize_range_compressed(&[s.target], &truth, &s.params, &s.gate, s.slow.prf);
        let grid = grid_around(s.target.position, 0.1, 0.25, 6);
        let a = backproject(&rc, &truth, &grid, &s.params).unwrap();
        let b = backproject(&rc, &corrupted, &grid, &s.params).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn parallel_and_sequential_agree_bitwise() {
        let s = setup();
        let traj = truth_trajectory(&s.flight, &s.slow);
        let rc = synthesize_range_compressed(&[s.target], &traj, &s.params, &s.gate, s.slow.prf);
        let grid = grid_around(s.target.position, 0.1, 0.25, 10);
        let seq = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap();
        let par = rayon::ThreadPoolBuilder::new()
            .num_threads(6)
            .build()
            .unwrap();
        let a = seq.install(|| backproject(&rc, &traj, &grid, &s.params).unwrap());
        let b = par.install(|| backproject(&rc, &traj, &grid, &s.params).unwrap());
        let bits = |img: &ComplexImage| -> Vec<(u64, u64)> {
            img.values
                .iter()
                .map(|v| (v.re.to_bits(), v.im.to_bits()))
                .collect()
        };
        assert_eq!(bits(&a), bits(&b));
        for (i, j) in [(0, 0), (3, 7), (9, 9)] {
            let (v, _) = pixel_response(grid.pixel(i, j), &rc, &traj, &s.params).unwrap();
            assert_eq!(v, a.at(i, j));
        }
    }

    #[test]
    fn nearest_interpolation_still_focuses() {
        let s = setup();
        let traj = truth_trajectory(&s.flight, &s.slow);
        let rc = synthesize_range_compressed(&[s.target], &traj, &s.params, &s.gate, s.slow.prf);
        let (lin, _) = pixel_response(s.target.position, &rc, &traj, &s.params).unwrap();
        let (near, _) = pixel_response_with(
            s.target.position,
            &rc,
            &traj,
            &s.params,
            Interpolation::Nearest,
        )
        .unwrap();
        assert!(near.norm() > 0.8 * lin.norm());
    }

    #[test]
    fn mismatched_trajectory_is_rejected() {
        let s = setup();
        let traj = truth_trajectory(&s.flight, &s.slow);
        let rc = synthesize_range_compressed(&[s.target], &traj, &s.params, &s.gate, s.slow.prf);
        let short = truth_trajectory(&s.flight, &SlowTimeGrid::new(256.0, 10).unwrap());
        assert!(matches!(
            pixel_response(s.target.position, &rc, &short, &s.params),
            Err(Error::ShapeMismatch(_))
        ));
    }
}
