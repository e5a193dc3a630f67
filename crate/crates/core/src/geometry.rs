//! Targets, slow-time sampling, truth and corrupted trajectories, and the
//! slant-range / closest-approach geometry.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nav::{position_error_closed_form, ErrorState, FlightParams, Vec3};

/// Point scatterer. Positions use the z-down navigation frame, so a ground
/// target below a platform flying at z = 0 has z > 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Target {
    pub position: Vec3,
    #[serde(default = "unit_amplitude")]
    pub amplitude: f64,
}

fn unit_amplitude() -> f64 {
    1.0
}

impl Target {
    pub fn new(position: Vec3, amplitude: f64) -> Result<Self> {
        let t = Target {
            position,
            amplitude,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.position.is_finite() {
            return Err(Error::validation("target position must be finite"));
        }
        if !(self.amplitude.is_finite() && self.amplitude >= 0.0) {
            return Err(Error::validation(
                "target amplitude must be finite and >= 0",
            ));
        }
        Ok(())
    }
}

/// Uniform slow-time sampling `eta_k = k / prf`, with `eta = 0` at the first pulse.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlowTimeGrid {
    pub prf: f64,
    pub n_pulses: usize,
}

impl SlowTimeGrid {
    pub fn new(prf: f64, n_pulses: usize) -> Result<Self> {
        let g = SlowTimeGrid { prf, n_pulses };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.prf.is_finite() && self.prf > 0.0) {
            return Err(Error::validation("prf must be positive"));
        }
        if self.n_pulses < 2 {
            return Err(Error::validation("slow-time grid needs at least 2 pulses"));
        }
        Ok(())
    }

    pub fn eta(&self, k: usize) -> f64 {
        k as f64 / self.prf
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n_pulses).map(|k| self.eta(k))
    }

    pub fn duration(&self) -> f64 {
        self.eta(self.n_pulses - 1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrajectoryKind {
    Truth,
    Corrupted,
}

/// Per-pulse platform positions.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub kind: TrajectoryKind,
    pub positions: Vec<Vec3>,
    pub times: Vec<f64>,
    pub v0: Vec3,
    pub error: ErrorState,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
}

/// Constant-velocity truth: `p(eta) = v0 * eta`.
pub fn truth_trajectory(params: &FlightParams, grid: &SlowTimeGrid) -> Trajectory {
    let times: Vec<f64> = grid.times().collect();
    Trajectory {
        kind: TrajectoryKind::Truth,
        positions: times.iter().map(|&eta| params.v0 * eta).collect(),
        times,
        v0: params.v0,
        error: ErrorState::ZERO,
    }
}

/// Navigation estimate `p_hat(eta) = p(eta) - dp(eta)` with `dp` grown from `e0`
/// by the closed-form error propagation.
pub fn corrupted_trajectory(
    params: &FlightParams,
    grid: &SlowTimeGrid,
    e0: &ErrorState,
) -> Result<Trajectory> {
    e0.validate()?;
    let mut traj = truth_trajectory(params, grid);
    for (p, &eta) in traj.positions.iter_mut().zip(&traj.times) {
        *p = *p - position_error_closed_form(e0, eta, params);
    }
    traj.kind = TrajectoryKind::Corrupted;
    traj.error = *e0;
    Ok(traj)
}

pub fn slant_range(p_t: Vec3, p_platform: Vec3) -> f64 {
    (p_t - p_platform).norm()
}

/// Location of a minimum of a sampled function, refined by a three-point parabola.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RefinedMinimum {
    pub index: usize,
    /// Sample offset of the parabola vertex from `index`, in [-0.5, 0.5].
    pub offset: f64,
    pub value: f64,
}

/// Dense-grid argmin followed by a parabolic fit through the minimum sample and
/// its two neighbours. Fails with `EdgeMinimum` if the sampled minimum is the
/// first or last sample.
pub fn refine_minimum(samples: &[f64]) -> Result<RefinedMinimum> {
    let n = samples.len();
    if n < 3 {
        return Err(Error::validation(
            "argmin refinement needs at least 3 samples",
        ));
    }
    let (index, _) =
        samples.iter().enumerate().fold(
            (0, f64::INFINITY),
            |best, (i, &v)| if v < best.1 { (i, v) } else { best },
        );
    if index == 0 || index == n - 1 {
        return Err(Error::EdgeMinimum { index, n_pulses: n });
    }
    let (a, b, c) = (samples[index - 1], samples[index], samples[index + 1]);
    let denom = a - 2.0 * b + c;
    let offset = if denom > 0.0 {
        (0.5 * (a - c) / denom).clamp(-0.5, 0.5)
    } else {
        0.0
    };
    let value = b - 0.25 * (a - c) * offset;
    Ok(RefinedMinimum {
        index,
        offset,
        value,
    })
}

/// Argmin of `range(eta)` over a slow-time grid, with parabolic refinement.
/// Returns `(min range, eta at minimum)`.
pub fn refined_argmin(grid: &SlowTimeGrid, range: impl Fn(f64) -> f64) -> Result<(f64, f64)> {
    let samples: Vec<f64> = grid.times().map(&range).collect();
    let m = refine_minimum(&samples)?;
    let eta = (m.index as f64 + m.offset) / grid.prf;
    Ok((m.value, eta))
}

/// Range and slow time of closest approach of `p_t` to the trajectory `traj`.
pub fn closest_approach(p_t: Vec3, traj: &Trajectory) -> Result<(f64, f64)> {
    if traj.len() < 3 {
        return Err(Error::validation(
            "closest approach needs at least 3 pulses",
        ));
    }
    let samples: Vec<f64> = traj
        .positions
        .iter()
        .map(|&p| slant_range(p_t, p))
        .collect();
    let m = refine_minimum(&samples)?;
    let k = m.index;
    let dt = traj.times[k + 1] - traj.times[k];
    Ok((m.value, traj.times[k] + m.offset * dt))
}
