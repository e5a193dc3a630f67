//! Linear FM pulses, stop-and-hop echo simulation, matched-filter range
//! compression and the closed-form compressed pulse.
//!
//! Echoes are simulated at baseband: each target contributes
//! `A * s_tx(t - 2R/c) * exp(-j 4 pi R / lambda)`, where the explicit carrier
//! factor is what the back-projection phase correction later removes.
//!
//! A range-compressed [`DataMatrix`] keeps the physical fast time of its
//! samples in `t_start` and records the matched-filter delay `T` in
//! `mf_delay`, so a target at range `R` peaks at `2R/c + mf_delay`.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{slant_range, Target, Trajectory};
use crate::nav::Vec3;

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Minimum ratio of sampling rate to chirp bandwidth.
pub const OVERSAMPLING_GUARD: f64 = 1.2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChirpParams {
    /// Start frequency of the baseband sweep, Hz.
    pub f0: f64,
    /// Linear FM rate, Hz/s.
    pub k: f64,
    /// Pulse duration, s.
    pub t: f64,
    /// Fast-time sampling rate, Hz.
    pub fs: f64,
    /// RF carrier, Hz.
    pub fc: f64,
}

impl ChirpParams {
    /// Chirp centred on zero frequency (`f0 = -K T / 2`).
    pub fn centered(k: f64, t: f64, fs: f64, fc: f64) -> Result<Self> {
        let p = ChirpParams {
            f0: -0.5 * k * t,
            k,
            t,
            fs,
            fc,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let all_finite = [self.f0, self.k, self.t, self.fs, self.fc]
            .iter()
            .all(|v| v.is_finite());
        if !all_finite {
            return Err(Error::validation("chirp parameters must be finite"));
        }
        if self.t <= 0.0 {
            return Err(Error::validation("pulse duration T must be positive"));
        }
        if self.fs < OVERSAMPLING_GUARD * self.bandwidth() {
            return Err(Error::validation(format!(
                "sampling guard violated: fs = {} Hz < 1.2*|K|*T = {} Hz",
                self.fs,
                OVERSAMPLING_GUARD * self.bandwidth()
            )));
        }
        if self.fc <= self.bandwidth() {
            return Err(Error::validation(format!(
                "carrier guard violated: fc = {} Hz must exceed |K|*T = {} Hz",
                self.fc,
                self.bandwidth()
            )));
        }
        Ok(())
    }

    pub fn bandwidth(&self) -> f64 {
        (self.k * self.t).abs()
    }

    /// Carrier wavelength `c / fc`.
    pub fn lambda(&self) -> f64 {
        SPEED_OF_LIGHT / self.fc
    }

    /// Number of replica samples on `[0, T]`.
    pub fn replica_len(&self) -> usize {
        (self.t * self.fs + 1e-9).floor() as usize + 1
    }

    /// Slant-range 3 dB resolution `0.886 c / (2B)`.
    pub fn range_resolution(&self) -> f64 {
        0.886 * SPEED_OF_LIGHT / (2.0 * self.bandwidth())
    }
}

/// `exp(j(2 pi f0 t + pi K t^2))` on `[0, T]`, zero elsewhere.
pub fn gen_chirp(params: &ChirpParams, t: f64) -> Complex64 {
    if !(0.0..=params.t).contains(&t) {
        return Complex64::new(0.0, 0.0);
    }
    Complex64::from_polar(1.0, 2.0 * PI * params.f0 * t + PI * params.k * t * t)
}

fn carrier_phase(params: &ChirpParams, range: f64) -> Complex64 {
    Complex64::from_polar(1.0, -4.0 * PI * range / params.lambda())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataKind {
    Raw,
    RangeCompressed,
}

impl DataKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            DataKind::Raw => "raw",
            DataKind::RangeCompressed => "range_compressed",
        }
    }
}

/// Pulses x fast-time complex samples. Sample `n` of every pulse is at
/// fast time `t_start + n / fs`.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix {
    pub kind: DataKind,
    pub n_pulses: usize,
    pub n_fast: usize,
    pub t_start: f64,
    pub fs: f64,
    /// Delay between the echo arrival `2R/c` and its compressed peak.
    pub mf_delay: f64,
    /// Pulse repetition frequency of the slow-time axis (metadata only).
    pub prf: f64,
    /// Row-major, `n_pulses * n_fast`.
    pub values: Vec<Complex64>,
}

impl DataMatrix {
    pub fn zeros(kind: DataKind, n_pulses: usize, n_fast: usize, t_start: f64, fs: f64) -> Self {
        DataMatrix {
            kind,
            n_pulses,
            n_fast,
            t_start,
            fs,
            mf_delay: 0.0,
            prf: 0.0,
            values: vec![Complex64::new(0.0, 0.0); n_pulses * n_fast],
        }
    }

    pub fn pulse(&self, k: usize) -> &[Complex64] {
        &self.values[k * self.n_fast..(k + 1) * self.n_fast]
    }

    pub fn fast_time(&self, n: usize) -> f64 {
        self.t_start + n as f64 / self.fs
    }

    pub fn validate(&self) -> Result<()> {
        if self.values.len() != self.n_pulses * self.n_fast {
            return Err(Error::ShapeMismatch(format!(
                "data matrix holds {} samples, expected {} x {}",
                self.values.len(),
                self.n_pulses,
                self.n_fast
            )));
        }
        if !(self.t_start >= 0.0 && self.fs > 0.0) {
            return Err(Error::validation(
                "data matrix needs t_start >= 0 and fs > 0",
            ));
        }
        Ok(())
    }
}

/// Fast-time window covering two-way delays of ranges `[near, far]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RangeGate {
    pub near: f64,
    pub far: f64,
}

impl RangeGate {
    /// Number of compressed samples spanning the gate.
    pub fn compressed_len(&self, fs: f64) -> usize {
        (2.0 * (self.far - self.near) / SPEED_OF_LIGHT * fs).ceil() as usize + 1
    }

    /// `(t_start, n_fast)` of the raw window whose valid compressed output
    /// covers the gate.
    pub fn raw_window(&self, params: &ChirpParams) -> (f64, usize) {
        let t_start = 2.0 * self.near / SPEED_OF_LIGHT;
        (
            t_start,
            self.compressed_len(params.fs) + params.replica_len() - 1,
        )
    }
}

/// One simulated pulse plus the indices of targets whose echo missed the window.
#[derive(Debug, Clone, PartialEq)]
pub struct PulseEcho {
    pub samples: Vec<Complex64>,
    pub gate_misses: Vec<usize>,
}

/// Stop-and-hop echo of `targets` seen from `p_platform`.
pub fn simulate_raw_pulse(
    targets: &[Target],
    p_platform: Vec3,
    params: &ChirpParams,
    n_fast: usize,
    t_start: f64,
) -> PulseEcho {
    let mut samples = vec![Complex64::new(0.0, 0.0); n_fast];
    let mut gate_misses = Vec::new();
    let t_end = t_start + n_fast as f64 / params.fs;
    for (idx, target) in targets.iter().enumerate() {
        let range = slant_range(target.position, p_platform);
        let tau = 2.0 * range / SPEED_OF_LIGHT;
        if tau + params.t < t_start || tau > t_end {
            gate_misses.push(idx);
            continue;
        }
        let gain = carrier_phase(params, range) * target.amplitude;
        // Only samples inside the pulse support contribute.
        let first = ((tau - t_start) * params.fs).ceil().max(0.0) as usize;
        let last = (((tau + params.t - t_start) * params.fs).floor() as usize).min(n_fast - 1);
        for (n, s) in samples.iter_mut().enumerate().take(last + 1).skip(first) {
            let t = t_start + n as f64 / params.fs;
            *s += gain * gen_chirp(params, t - tau);
        }
    }
    PulseEcho {
        samples,
        gate_misses,
    }
}

/// Raw data for every pulse of `traj`, window given by `gate`.
pub fn simulate_raw(
    targets: &[Target],
    traj: &Trajectory,
    params: &ChirpParams,
    gate: &RangeGate,
    prf: f64,
) -> DataMatrix {
    let (t_start, n_fast) = gate.raw_window(params);
    let pulses: Vec<PulseEcho> = traj
        .positions
        .par_iter()
        .map(|&p| simulate_raw_pulse(targets, p, params, n_fast, t_start))
        .collect();
    let misses: usize = pulses.iter().map(|p| p.gate_misses.len()).sum();
    if misses > 0 {
        log::warn!("{misses} target echoes fell outside the receive window");
    }
    let mut out = DataMatrix::zeros(DataKind::Raw, traj.len(), n_fast, t_start, params.fs);
    out.prf = prf;
    for (row, echo) in out.values.chunks_mut(n_fast).zip(pulses) {
        row.copy_from_slice(&echo.samples);
    }
    out
}

/// Matched-filter replica `h[m] = conj(s_tx(T - m/fs))`.
fn replica(params: &ChirpParams) -> Vec<Complex64> {
    (0..params.replica_len())
        .map(|m| gen_chirp(params, params.t - m as f64 / params.fs).conj())
        .collect()
}

fn compressed_header(raw: &DataMatrix, params: &ChirpParams) -> Result<(usize, usize)> {
    if raw.kind != DataKind::Raw {
        return Err(Error::validation("range compression expects raw data"));
    }
    raw.validate()?;
    let m = params.replica_len();
    if m > raw.n_fast {
        return Err(Error::ShapeMismatch(format!(
            "replica of {m} samples longer than pulse window of {}",
            raw.n_fast
        )));
    }
    Ok((m, raw.n_fast - m + 1))
}

fn compressed_matrix(raw: &DataMatrix, params: &ChirpParams, n_out: usize) -> DataMatrix {
    let delay_samples = params.replica_len() - 1;
    let mut out = DataMatrix::zeros(
        DataKind::RangeCompressed,
        raw.n_pulses,
        n_out,
        raw.t_start + delay_samples as f64 / raw.fs,
        raw.fs,
    );
    out.mf_delay = params.t;
    out.prf = raw.prf;
    out
}

/// Matched filtering by FFT convolution with the time-reversed conjugate
/// replica, scaled by `1/fs`. Only fully overlapped output samples are kept,
/// starting at physical fast time `t_start + (M-1)/fs`.
pub fn range_compress(raw: &DataMatrix, params: &ChirpParams) -> Result<DataMatrix> {
    let (m, n_out) = compressed_header(raw, params)?;
    let h = replica(params);
    let n_fft = (raw.n_fast + m - 1).next_power_of_two();
    let mut planner = FftPlanner::<f64>::new();
    let fwd: Arc<dyn Fft<f64>> = planner.plan_fft_forward(n_fft);
    let inv: Arc<dyn Fft<f64>> = planner.plan_fft_inverse(n_fft);

    let mut h_spec = vec![Complex64::new(0.0, 0.0); n_fft];
    h_spec[..m].copy_from_slice(&h);
    fwd.process(&mut h_spec);
    let scale = 1.0 / (params.fs * n_fft as f64);

    let mut out = compressed_matrix(raw, params, n_out);
    out.values
        .par_chunks_mut(n_out)
        .zip(raw.values.par_chunks(raw.n_fast))
        .for_each(|(dst, src)| {
            let mut buf = vec![Complex64::new(0.0, 0.0); n_fft];
            buf[..src.len()].copy_from_slice(src);
            fwd.process(&mut buf);
            for (b, hs) in buf.iter_mut().zip(&h_spec) {
                *b *= hs;
            }
            inv.process(&mut buf);
            for (d, b) in dst.iter_mut().zip(&buf[m - 1..m - 1 + n_out]) {
                *d = b * scale;
            }
        });
    Ok(out)
}

/// Direct-sum counterpart of [`range_compress`].
pub fn range_compress_direct(raw: &DataMatrix, params: &ChirpParams) -> Result<DataMatrix> {
    let (m, n_out) = compressed_header(raw, params)?;
    let h = replica(params);
    let scale = 1.0 / params.fs;
    let mut out = compressed_matrix(raw, params, n_out);
    out.values
        .par_chunks_mut(n_out)
        .zip(raw.values.par_chunks(raw.n_fast))
        .for_each(|(dst, src)| {
            for (n, d) in dst.iter_mut().enumerate() {
                let j = n + m - 1;
                let acc: Complex64 = (0..m).map(|i| src[j - i] * h[i]).sum();
                *d = acc * scale;
            }
        });
    Ok(out)
}

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        let px = PI * x;
        px.sin() / px
    }
}

/// Matched-filter output for a unit echo at range `range`, evaluated at
/// physical fast time `t`:
/// `exp(-j rho (2 pi f0 + pi K T)) xi sinc(K rho xi) exp(-j 4 pi R / lambda)`
/// with local time `t' = t - 2R/c`, `rho = T - t'`, `xi = T - |t' - T|`.
pub fn analytic_range_compressed_pulse(params: &ChirpParams, range: f64, t: f64) -> Complex64 {
    let local = t - 2.0 * range / SPEED_OF_LIGHT;
    if !(0.0..=2.0 * params.t).contains(&local) {
        return Complex64::new(0.0, 0.0);
    }
    let rho = params.t - local;
    let xi = params.t - (local - params.t).abs();
    let envelope = xi * sinc(params.k * rho * xi);
    let mf_phase = Complex64::from_polar(
        1.0,
        -rho * (2.0 * PI * params.f0 + PI * params.k * params.t),
    );
    mf_phase * envelope * carrier_phase(params, range)
}

/// Range-compressed data synthesized directly from the closed form, on the
/// same fast-time axis [`range_compress`] produces for `gate`.
pub fn synthesize_range_compressed(
    targets: &[Target],
    traj: &Trajectory,
    params: &ChirpParams,
    gate: &RangeGate,
    prf: f64,
) -> DataMatrix {
    let n_fast = gate.compressed_len(params.fs);
    let delay_samples = params.replica_len() - 1;
    let t_start = 2.0 * gate.near / SPEED_OF_LIGHT + delay_samples as f64 / params.fs;
    let mut out = DataMatrix::zeros(
        DataKind::RangeCompressed,
        traj.len(),
        n_fast,
        t_start,
        params.fs,
    );
    out.mf_delay = params.t;
    out.prf = prf;
    out.values
        .par_chunks_mut(n_fast)
        .zip(traj.positions.par_iter())
        .for_each(|(row, &p)| {
            for target in targets {
                let range = slant_range(target.position, p);
                let tau = 2.0 * range / SPEED_OF_LIGHT;
                let first = ((tau - t_start) * params.fs).ceil().max(0.0) as usize;
                let last = (tau + 2.0 * params.t - t_start) * params.fs;
                if last < 0.0 {
                    continue;
                }
                let last = (last.floor() as usize).min(n_fast.saturating_sub(1));
                for (n, s) in row.iter_mut().enumerate().take(last + 1).skip(first) {
                    let t = t_start + n as f64 / params.fs;
                    *s += analytic_range_compressed_pulse(params, range, t) * target.amplitude;
                }
            }
        });
    out
}
