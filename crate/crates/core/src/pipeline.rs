//! End-to-end runs: data formation, truth and corrupted imaging, shift
//! prediction, comparison and rendering.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::analysis::{
    classify_distortion, image_metrics, measure_shift, predict_shift, DistortionReport,
    ImageMetrics, ShiftPrediction,
};
use crate::backprojection::{backproject_with, ComplexImage, ImageGrid};
use crate::container::{save_data, save_image, write_atomic};
use crate::error::{Error, Result};
use crate::geometry::{corrupted_trajectory, slant_range, truth_trajectory, Trajectory};
use crate::nav::{ErrorState, Vec3};
use crate::scenario::{DataPath, Scenario, Tolerances};
use crate::signal::{
    range_compress, simulate_raw, synthesize_range_compressed, DataMatrix, RangeGate,
};

/// Closest point of the grid rectangle to `p`.
fn nearest_on_grid(grid: &ImageGrid, p: Vec3) -> Vec3 {
    let (i, j) = grid.coordinates_of(p);
    grid.pixel_at(
        i.clamp(0.0, (grid.n_along - 1) as f64),
        j.clamp(0.0, (grid.n_cross - 1) as f64),
    )
}

/// Range gate covering every pixel and target from every platform position
/// of `trajectories`, widened by `margin` on both sides.
pub fn compute_gate(
    grid: &ImageGrid,
    targets: &[Vec3],
    trajectories: &[&Trajectory],
    margin: f64,
) -> Result<RangeGate> {
    let (ia, ic) = ((grid.n_along - 1) as f64, (grid.n_cross - 1) as f64);
    let corners = [
        grid.pixel_at(0.0, 0.0),
        grid.pixel_at(ia, 0.0),
        grid.pixel_at(0.0, ic),
        grid.pixel_at(ia, ic),
    ];
    let (mut near, mut far) = (f64::INFINITY, 0.0f64);
    for traj in trajectories {
        for &p in &traj.positions {
            near = near.min(slant_range(nearest_on_grid(grid, p), p));
            for &q in corners.iter().chain(targets) {
                let r = slant_range(q, p);
                near = near.min(r);
                far = far.max(r);
            }
        }
    }
    let near = near - margin;
    if !(near > 0.0 && far.is_finite()) {
        return Err(Error::validation(
            "scene reaches the platform track; the range gate would start at or before zero",
        ));
    }
    Ok(RangeGate {
        near,
        far: far + margin,
    })
}

/// Range-compressed data for `s` plus the raw matrix when it was simulated.
pub fn form_data(
    s: &Scenario,
    truth: &Trajectory,
    gate: &RangeGate,
) -> Result<(Option<DataMatrix>, DataMatrix)> {
    let prf = s.slow_time.prf;
    match s.data_path {
        DataPath::Synth => Ok((
            None,
            synthesize_range_compressed(&s.targets, truth, &s.chirp, gate, prf),
        )),
        DataPath::Simulate => {
            let raw = simulate_raw(&s.targets, truth, &s.chirp, gate, prf);
            let rc = range_compress(&raw, &s.chirp)?;
            Ok((Some(raw), rc))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictedShift {
    pub d_range: f64,
    pub d_eta: f64,
    pub d_along: f64,
    /// Expected displacement of the focused target along the grid axes, m.
    pub image_d_along: f64,
    pub image_d_cross: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasuredShift {
    pub d_along: f64,
    pub d_cross: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub along: bool,
    pub cross: bool,
    pub overall: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareReport {
    pub error_source: String,
    pub error: ErrorState,
    pub predicted: PredictedShift,
    pub measured: MeasuredShift,
    pub reference: ImageMetrics,
    pub test: ImageMetrics,
    pub tolerances: Tolerances,
    pub pass: Verdict,
}

impl CompareReport {
    /// Builds the report; `pass` is always derived from the shifts and tolerances.
    pub fn new(
        error_source: String,
        error: ErrorState,
        predicted: PredictedShift,
        reference: ImageMetrics,
        test: ImageMetrics,
        grid: &ImageGrid,
        tolerances: Tolerances,
    ) -> Result<CompareReport> {
        let (d_along, d_cross) = measure_shift(&reference, &test, grid);
        let along = (d_along - predicted.image_d_along).abs() <= tolerances.along;
        let cross = (d_cross - predicted.image_d_cross).abs() <= tolerances.cross;
        let report = CompareReport {
            error_source,
            error,
            predicted,
            measured: MeasuredShift { d_along, d_cross },
            reference,
            test,
            tolerances,
            pass: Verdict {
                along,
                cross,
                overall: along && cross,
            },
        };
        let nums = [
            predicted.d_range,
            predicted.d_eta,
            predicted.image_d_along,
            predicted.image_d_cross,
            d_along,
            d_cross,
            reference.entropy,
            test.entropy,
        ];
        if nums.iter().any(|v| !v.is_finite()) {
            return Err(Error::DegenerateImage(
                "comparison produced non-finite values".into(),
            ));
        }
        Ok(report)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }
}

/// Shift prediction for the first target, plus its mapping to the image grid.
pub fn predict(s: &Scenario) -> Result<(ShiftPrediction, PredictedShift, DistortionReport)> {
    let p_t = s.targets[0].position;
    let shift = predict_shift(p_t, &s.flight, &s.slow_time, &s.error)?;
    let (image_d_along, image_d_cross) = shift.image_displacement(&s.image, p_t, s.flight.v0)?;
    let predicted = PredictedShift {
        d_range: shift.d_range,
        d_eta: shift.d_eta,
        d_along: shift.d_along,
        image_d_along,
        image_d_cross,
    };
    Ok((
        shift,
        predicted,
        classify_distortion(&s.error, p_t, &s.flight),
    ))
}

/// Everything one run produces.
#[derive(Debug, Clone)]
pub struct PipelineRun {
    pub gate: RangeGate,
    pub truth: Trajectory,
    pub corrupted: Trajectory,
    pub raw: Option<DataMatrix>,
    pub rc: DataMatrix,
    pub reference: ComplexImage,
    pub test: ComplexImage,
    pub report: CompareReport,
}

pub fn trajectories(s: &Scenario) -> Result<(Trajectory, Trajectory)> {
    let truth = truth_trajectory(&s.flight, &s.slow_time);
    let corrupted = corrupted_trajectory(&s.flight, &s.slow_time, &s.error)?;
    Ok((truth, corrupted))
}

pub fn scenario_gate(
    s: &Scenario,
    truth: &Trajectory,
    corrupted: &Trajectory,
) -> Result<RangeGate> {
    let targets: Vec<Vec3> = s.targets.iter().map(|t| t.position).collect();
    compute_gate(&s.image, &targets, &[truth, corrupted], s.gate_margin)
}

pub fn run_pipeline(s: &Scenario) -> Result<PipelineRun> {
    let inner = || -> Result<PipelineRun> {
        s.validate()?;
        let (truth, corrupted) = trajectories(s)?;
        let gate = scenario_gate(s, &truth, &corrupted)?;
        let (raw, rc) = form_data(s, &truth, &gate)?;
        let reference = backproject_with(&rc, &truth, &s.image, &s.chirp, s.interpolation)?;
        let test = backproject_with(&rc, &corrupted, &s.image, &s.chirp, s.interpolation)?;
        let (_, predicted, _) = predict(s)?;
        let report = CompareReport::new(
            s.error_source.to_string(),
            s.error,
            predicted,
            image_metrics(&reference).map_err(|e| e.context("reference image"))?,
            image_metrics(&test).map_err(|e| e.context("test image"))?,
            &s.image,
            s.tolerances,
        )?;
        Ok(PipelineRun {
            gate,
            truth,
            corrupted,
            raw,
            rc,
            reference,
            test,
            report,
        })
    };
    inner().map_err(|e| e.context(format!("pipeline ({})", s.error_source)))
}

#[derive(Serialize)]
struct TrajectoryFile<'a> {
    times: &'a [f64],
    truth: &'a [Vec3],
    corrupted: &'a [Vec3],
}

/// Writes `raw.sarc` (simulated runs only), `rc.sarc`, `reference.sari`,
/// `test.sari`, `trajectory.json` and `report.json` into `dir`.
pub fn write_artifacts(run: &PipelineRun, dir: &Path) -> Result<()> {
    if let Some(raw) = &run.raw {
        save_data(&dir.join("raw.sarc"), raw)?;
    }
    save_data(&dir.join("rc.sarc"), &run.rc)?;
    save_image(&dir.join("reference.sari"), &run.reference)?;
    save_image(&dir.join("test.sari"), &run.test)?;
    let traj = TrajectoryFile {
        times: &run.truth.times,
        truth: &run.truth.positions,
        corrupted: &run.corrupted.positions,
    };
    let text = serde_json::to_string_pretty(&traj).expect("trajectory serializes") + "\n";
    write_atomic(&dir.join("trajectory.json"), text.as_bytes())?;
    write_atomic(&dir.join("report.json"), run.report.to_json().as_bytes())
}

/// 8-bit binary PGM of `20 log10(|v| / peak)` mapped linearly from
/// `[db_floor, 0]` to `[0, 255]`. Rows follow the along-track index.
pub fn render_pgm(img: &ComplexImage, db_floor: f64) -> Result<Vec<u8>> {
    if !(db_floor.is_finite() && db_floor < 0.0) {
        return Err(Error::validation("db_floor must be negative"));
    }
    let mags = img.magnitudes();
    let peak = mags.iter().cloned().fold(0.0, f64::max);
    if peak <= 0.0 {
        return Err(Error::DegenerateImage(
            "cannot render an all-zero image".into(),
        ));
    }
    let g = &img.grid;
    let mut out = format!("P5\n{} {}\n255\n", g.n_cross, g.n_along).into_bytes();
    out.extend(mags.iter().map(|&m| {
        let db = 20.0 * (m / peak).log10();
        if db <= db_floor {
            0
        } else {
            (255.0 * (1.0 - db / db_floor)).round().clamp(0.0, 255.0) as u8
        }
    }));
    Ok(out)
}

pub fn render_image(img_path: &Path, out_path: &Path, db_floor: f64) -> Result<()> {
    let img = crate::container::load_image(img_path)?;
    write_atomic(out_path, &render_pgm(&img, db_floor)?)
}
