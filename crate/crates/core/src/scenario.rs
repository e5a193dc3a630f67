//! Scenario files (TOML), error presets and the `--error` syntax.
//!
//! Every section and key is optional; missing values take the canonical desk
//! scenario below. Unknown keys are rejected.
//!
//! ```toml
//! preset = "sim-ypos"            # or an [error] table, not both
//!
//! [flight]
//! v0 = [100.0, 0.0, 0.0]         # m/s, navigation frame (x along, y cross, z down)
//! g = 9.81
//!
//! [chirp]
//! fc = 10e9                      # carrier, Hz
//! k = 1.5e13                     # FM rate, Hz/s
//! duration = 10e-6               # s
//! fs = 400e6                     # Hz
//! # f0 = -75e6                   # start frequency; defaults to -k*duration/2
//!
//! [slow_time]
//! prf = 256.0
//! n_pulses = 384
//!
//! [[targets]]
//! position = [75.0, 1000.0, 500.0]
//! amplitude = 1.0
//!
//! [image]
//! origin = [71.5, 996.0, 500.0]
//! axis_along = [1.0, 0.0, 0.0]
//! axis_cross = [0.0, 1.0, 0.0]
//! spacing_along = 0.025
//! spacing_cross = 0.125
//! n_along = 200
//! n_cross = 48
//! interpolation = "linear"      # or "nearest"
//!
//! [processing]
//! data_path = "synth"           # or "simulate" (raw echoes + range compression)
//! gate_margin = 5.0             # m added on both sides of the range gate
//!
//! [tolerances]                  # CompareReport pass/fail limits, m
//! along = 0.0125
//! cross = 0.443
//!
//! [error]                       # explicit initial error (truth minus estimate)
//! dp = [0.0, 3.0, 0.0]
//! dv = [0.0, 0.0, 0.0]
//! dtheta = [0.0, 0.0, 0.0]
//!
//! [output]
//! dir = "out"
//! ```

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::backprojection::{ImageGrid, Interpolation};
use crate::error::{Error, Result};
use crate::geometry::{SlowTimeGrid, Target};
use crate::nav::{ErrorState, FlightParams, Vec3, DEFAULT_GRAVITY};
use crate::signal::{ChirpParams, SPEED_OF_LIGHT};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataPath {
    /// Analytic range-compressed synthesis.
    #[default]
    Synth,
    /// Raw echo simulation followed by matched filtering.
    Simulate,
}

/// Where the initial error of a scenario came from.
#[derive(Debug, Clone, PartialEq)]
pub enum ErrorSource {
    Preset(String),
    Explicit,
}

impl fmt::Display for ErrorSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ErrorSource::Preset(name) => write!(f, "preset:{name}"),
            ErrorSource::Explicit => f.write_str("explicit"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub along: f64,
    pub cross: f64,
}

/// Fully resolved and validated scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub flight: FlightParams,
    pub chirp: ChirpParams,
    pub slow_time: SlowTimeGrid,
    pub targets: Vec<Target>,
    pub image: ImageGrid,
    pub interpolation: Interpolation,
    pub data_path: DataPath,
    pub gate_margin: f64,
    pub tolerances: Tolerances,
    pub error: ErrorState,
    pub error_source: ErrorSource,
    pub output_dir: Option<PathBuf>,
}

/// The nine simulated and nine real-data experiments, plus `none`.
pub const PRESETS: [(&str, [f64; 9]); 19] = [
    ("none", [0.0; 9]),
    ("sim-xpos", [3.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]),
    ("sim-ypos", [0.0, 3.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]),
    ("sim-zpos", [0.0, 0.0, 3.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]),
    ("sim-xvel", [0.0, 0.0, 0.0, 0.1, 0.0, 0.0, 0.0, 0.0, 0.0]),
    ("sim-yvel", [0.0, 0.0, 0.0, 0.0, 0.05, 0.0, 0.0, 0.0, 0.0]),
    ("sim-zvel", [0.0, 0.0, 0.0, 0.0, 0.0, 0.05, 0.0, 0.0, 0.0]),
    ("sim-roll", [0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.001, 0.0, 0.0]),
    ("sim-pitch", [0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.02, 0.0]),
    ("sim-yaw", [0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.1]),
    ("real-xpos", [3.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]),
    ("real-ypos", [0.0, 3.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]),
    ("real-zpos", [0.0, 0.0, 3.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]),
    ("real-xvel", [0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0]),
    ("real-yvel", [0.0, 0.0, 0.0, 0.0, 0.2, 0.0, 0.0, 0.0, 0.0]),
    ("real-zvel", [0.0, 0.0, 0.0, 0.0, 0.0, 0.2, 0.0, 0.0, 0.0]),
    ("real-roll", [0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.01, 0.0, 0.0]),
    ("real-pitch", [0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.5, 0.0]),
    ("real-yaw", [0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.1]),
];

pub fn preset(name: &str) -> Result<ErrorState> {
    PRESETS
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, a)| ErrorState::from_array(*a))
        .ok_or_else(|| {
            let known: Vec<_> = PRESETS.iter().map(|(n, _)| *n).collect();
            Error::validation(format!(
                "unknown error preset {name:?} (known: {})",
                known.join(", ")
            ))
        })
}

/// Parses `preset:<name>` or `dp=x,y,z dv=x,y,z dth=x,y,z` (any subset).
pub fn parse_error_arg(arg: &str) -> Result<(ErrorState, ErrorSource)> {
    let arg = arg.trim();
    if let Some(name) = arg.strip_prefix("preset:") {
        let e = preset(name.trim())?;
        return Ok((e, ErrorSource::Preset(name.trim().to_string())));
    }
    let mut e = ErrorState::ZERO;
    let mut seen = Vec::new();
    for item in arg.split_whitespace() {
        let (key, value) = item.split_once('=').ok_or_else(|| {
            Error::validation(format!("expected key=x,y,z in --error, got {item:?}"))
        })?;
        if seen.contains(&key) {
            return Err(Error::validation(format!("--error sets {key} twice")));
        }
        seen.push(key);
        let parts: Vec<f64> = value
            .split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::validation(format!("bad number in --error {key}={value}")))?;
        let v = match parts[..] {
            [x, y, z] => Vec3::new(x, y, z),
            _ => {
                return Err(Error::validation(format!(
                    "--error {key} needs three components"
                )))
            }
        };
        match key {
            "dp" => e.dp = v,
            "dv" => e.dv = v,
            "dth" | "dtheta" => e.dtheta = v,
            _ => {
                return Err(Error::validation(format!(
                    "unknown --error key {key:?} (use dp, dv, dth)"
                )))
            }
        }
    }
    if seen.is_empty() {
        return Err(Error::validation("--error is empty"));
    }
    e.validate()?;
    Ok((e, ErrorSource::Explicit))
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    preset: Option<String>,
    error: Option<ErrorState>,
    #[serde(default)]
    flight: RawFlight,
    #[serde(default)]
    chirp: RawChirp,
    #[serde(default)]
    slow_time: RawSlowTime,
    targets: Option<Vec<Target>>,
    #[serde(default)]
    image: RawImage,
    #[serde(default)]
    processing: RawProcessing,
    #[serde(default)]
    tolerances: RawTolerances,
    #[serde(default)]
    output: RawOutput,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFlight {
    v0: Option<Vec3>,
    g: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawChirp {
    fc: Option<f64>,
    k: Option<f64>,
    duration: Option<f64>,
    fs: Option<f64>,
    f0: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSlowTime {
    prf: Option<f64>,
    n_pulses: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawImage {
    origin: Option<Vec3>,
    axis_along: Option<Vec3>,
    axis_cross: Option<Vec3>,
    spacing_along: Option<f64>,
    spacing_cross: Option<f64>,
    n_along: Option<usize>,
    n_cross: Option<usize>,
    interpolation: Option<Interpolation>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawProcessing {
    data_path: Option<DataPath>,
    gate_margin: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTolerances {
    along: Option<f64>,
    cross: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    dir: Option<PathBuf>,
}

impl Scenario {
    /// Desk scenario: one unit target 1.1 km from the track, imaged on a fine
    /// grid that samples the ~0.1 m azimuth and ~0.9 m range cells.
    pub fn canonical() -> Scenario {
        Scenario::resolve(RawScenario::default()).expect("canonical scenario is valid")
    }

    fn resolve(raw: RawScenario) -> Result<Scenario> {
        let flight = FlightParams {
            v0: raw.flight.v0.unwrap_or(Vec3::new(100.0, 0.0, 0.0)),
            g: raw.flight.g.unwrap_or(DEFAULT_GRAVITY),
        };
        let k = raw.chirp.k.unwrap_or(1.5e13);
        let duration = raw.chirp.duration.unwrap_or(10e-6);
        let chirp = ChirpParams {
            f0: raw.chirp.f0.unwrap_or(-0.5 * k * duration),
            k,
            t: duration,
            fs: raw.chirp.fs.unwrap_or(400e6),
            fc: raw.chirp.fc.unwrap_or(10e9),
        };
        let slow_time = SlowTimeGrid {
            prf: raw.slow_time.prf.unwrap_or(256.0),
            n_pulses: raw.slow_time.n_pulses.unwrap_or(384),
        };
        let targets = raw.targets.unwrap_or_else(|| {
            vec![Target {
                position: Vec3::new(75.0, 1000.0, 500.0),
                amplitude: 1.0,
            }]
        });
        let im = raw.image;
        let image = ImageGrid {
            origin: im.origin.unwrap_or(Vec3::new(71.5, 996.0, 500.0)),
            axis_along: im.axis_along.unwrap_or(Vec3::new(1.0, 0.0, 0.0)),
            axis_cross: im.axis_cross.unwrap_or(Vec3::new(0.0, 1.0, 0.0)),
            spacing_along: im.spacing_along.unwrap_or(0.025),
            spacing_cross: im.spacing_cross.unwrap_or(0.125),
            n_along: im.n_along.unwrap_or(200),
            n_cross: im.n_cross.unwrap_or(48),
        };
        let range_cell = 0.886 * SPEED_OF_LIGHT / (2.0 * (chirp.k * chirp.t).abs());
        let tolerances = Tolerances {
            along: raw.tolerances.along.unwrap_or(0.5 * image.spacing_along),
            cross: raw.tolerances.cross.unwrap_or(0.5 * range_cell),
        };
        let (error, error_source) = match (raw.preset, raw.error) {
            (Some(_), Some(_)) => {
                return Err(Error::validation(
                    "scenario sets both `preset` and `[error]`; choose one",
                ))
            }
            (Some(name), None) => (preset(&name)?, ErrorSource::Preset(name)),
            (None, Some(e)) => (e, ErrorSource::Explicit),
            (None, None) => (ErrorState::ZERO, ErrorSource::Explicit),
        };
        let s = Scenario {
            flight,
            chirp,
            slow_time,
            targets,
            image,
            interpolation: im.interpolation.unwrap_or_default(),
            data_path: raw.processing.data_path.unwrap_or_default(),
            gate_margin: raw.processing.gate_margin.unwrap_or(5.0),
            tolerances,
            error,
            error_source,
            output_dir: raw.output.dir,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        self.flight.validate()?;
        self.chirp.validate()?;
        self.slow_time.validate()?;
        if self.targets.is_empty() {
            return Err(Error::validation("scenario needs at least one target"));
        }
        for t in &self.targets {
            t.validate()?;
        }
        self.image.validate()?;
        self.error.validate()?;
        if !(self.gate_margin.is_finite() && self.gate_margin >= 0.0) {
            return Err(Error::validation("gate_margin must be finite and >= 0"));
        }
        if !(self.tolerances.along > 0.0 && self.tolerances.cross > 0.0) {
            return Err(Error::validation("tolerances must be positive"));
        }
        Ok(())
    }

    /// Replaces the initial error.
    pub fn with_error(mut self, error: ErrorState, source: ErrorSource) -> Result<Scenario> {
        error.validate()?;
        self.error = error;
        self.error_source = source;
        Ok(self)
    }

    pub fn from_toml_str(text: &str, path: &Path) -> Result<Scenario> {
        let raw: RawScenario = toml::from_str(text).map_err(|e| {
            let line = e
                .span()
                .map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1);
            let message = match line {
                Some(l) => format!("line {l}: {}", e.message()),
                None => e.message().to_string(),
            };
            Error::Parse {
                path: path.to_path_buf(),
                message,
            }
        })?;
        Scenario::resolve(raw)
            .map_err(|e| e.context(format!("invalid scenario {}", path.display())))
    }
}

pub fn load_scenario(path: &Path) -> Result<Scenario> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::io(format!("reading scenario {}", path.display()), e))?;
    Scenario::from_toml_str(&text, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<Scenario> {
        Scenario::from_toml_str(text, Path::new("test.toml"))
    }

    #[test]
    fn empty_file_gives_canonical_defaults() {
        let s = parse("").unwrap();
        assert_eq!(s, Scenario::canonical());
        assert_eq!(s.flight.v0, Vec3::new(100.0, 0.0, 0.0));
        assert_eq!(s.chirp.f0, -75e6);
        assert_eq!(s.slow_time.n_pulses, 384);
        assert_eq!(s.targets.len(), 1);
        assert_eq!(s.error, ErrorState::ZERO);
        assert_eq!(s.data_path, DataPath::Synth);
        // Canonical target sits on a pixel centre.
        let (i, j) = s.image.coordinates_of(s.targets[0].position);
        assert!((i - 140.0).abs() < 1e-9 && (j - 32.0).abs() < 1e-9);
    }

    #[test]
    fn sampling_guard_is_named() {
        let err = parse("[chirp]\nfs = 100e6\n").unwrap_err();
        assert!(err.is_validation());
        assert!(err.to_string().contains("1.2"), "{err}");
    }

    #[test]
    fn presets_resolve() {
        let s = parse("preset = \"sim-roll\"\n").unwrap();
        assert_eq!(s.error.dtheta, Vec3::new(0.001, 0.0, 0.0));
        assert_eq!(s.error_source, ErrorSource::Preset("sim-roll".into()));
        for (name, _) in PRESETS {
            let s = parse(&format!("preset = \"{name}\"\n")).unwrap();
            assert!(s.error.validate().is_ok());
        }
        assert!(parse("preset = \"sim-bogus\"\n")
            .unwrap_err()
            .is_validation());
    }

    #[test]
    fn preset_and_error_are_exclusive() {
        let err = parse("preset = \"sim-yaw\"\n[error]\ndp = [1.0, 0.0, 0.0]\n").unwrap_err();
        assert!(err.is_validation());
        let s = parse("[error]\ndp = [0.0, 3.0, 0.0]\n").unwrap();
        assert_eq!(s.error.dp, Vec3::new(0.0, 3.0, 0.0));
    }

    #[test]
    fn unknown_keys_report_line() {
        let err = parse("[flight]\ng = 9.8\nspeed = 3\n").unwrap_err();
        match &err {
            Error::Parse { message, .. } => {
                assert!(message.contains("line 3"), "{message}");
                assert!(message.contains("speed"), "{message}");
            }
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(err.exit_code(), 2);
        assert!(matches!(
            parse("[chirp]\nfs = \"fast\"\n"),
            Err(Error::Parse { .. })
        ));
    }

    #[test]
    fn large_attitude_is_rejected() {
        let err = parse("[error]\ndtheta = [0.0, 0.6, 0.0]\n").unwrap_err();
        assert!(err.is_validation());
    }

    #[test]
    fn error_argument_syntax() {
        let (e, src) = parse_error_arg("preset:sim-xvel").unwrap();
        assert_eq!(e.dv, Vec3::new(0.1, 0.0, 0.0));
        assert_eq!(src.to_string(), "preset:sim-xvel");
        let (e, _) = parse_error_arg("dp=1,2,3 dth=0,0.01,0").unwrap();
        assert_eq!(e.dp, Vec3::new(1.0, 2.0, 3.0));
        assert_eq!(e.dv, Vec3::ZERO);
        assert_eq!(e.dtheta, Vec3::new(0.0, 0.01, 0.0));
        for bad in [
            "",
            "dp=1,2",
            "dq=1,2,3",
            "dp=1,2,x",
            "dp=1,2,3 dp=1,2,3",
            "preset:nope",
            "dth=0,0,1",
        ] {
            assert!(parse_error_arg(bad).unwrap_err().is_validation(), "{bad}");
        }
    }
}
