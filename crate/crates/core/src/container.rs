//! Binary containers for data matrices (`.sarc`) and images (`.sari`).
//!
//! Layout: the 8-byte magic `SARNAV1\0`, a little-endian `u32` header
//! length, a UTF-8 header of `key=value` lines, then the row-major payload as
//! little-endian `f64` pairs `(re, im)`. Floats in the header use Rust's
//! shortest round-trip formatting, so save/load is bitwise lossless.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use num_complex::Complex64;

use crate::backprojection::{ComplexImage, ImageGrid};
use crate::error::{Error, Result};
use crate::nav::Vec3;
use crate::signal::{DataKind, DataMatrix};

pub const MAGIC: &[u8; 8] = b"SARNAV1\0";
pub const VERSION: u32 = 1;

fn format_err(path: &Path, message: impl Into<String>) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

/// Writes `bytes` to a sibling temporary file, then renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;
    let name = path
        .file_name()
        .ok_or_else(|| Error::validation(format!("{} is not a file path", path.display())))?;
    let tmp = dir.join(format!(
        ".{}.tmp{}",
        name.to_string_lossy(),
        std::process::id()
    ));
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if let Err(e) = result {
        let _ = fs::remove_file(&tmp);
        return Err(Error::io(format!("writing {}", path.display()), e));
    }
    Ok(())
}

struct Header(BTreeMap<String, String>);

impl Header {
    fn new() -> Self {
        Header(BTreeMap::new())
    }

    fn set(&mut self, key: &str, value: impl ToString) {
        self.0.insert(key.to_string(), value.to_string());
    }

    fn set_f64(&mut self, key: &str, v: f64) {
        self.set(key, format!("{v:?}"));
    }

    fn set_vec(&mut self, key: &str, v: Vec3) {
        self.set(key, format!("{:?},{:?},{:?}", v.x, v.y, v.z));
    }

    fn text(&self) -> String {
        self.0.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }

    fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut map = BTreeMap::new();
        for line in text.lines().filter(|l| !l.is_empty()) {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| format_err(path, format!("malformed header line {line:?}")))?;
            map.insert(k.to_string(), v.to_string());
        }
        Ok(Header(map))
    }

    fn get(&self, key: &str, path: &Path) -> Result<&str> {
        self.0
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| format_err(path, format!("header is missing {key:?}")))
    }

    fn get_parsed<T: std::str::FromStr>(&self, key: &str, path: &Path) -> Result<T> {
        let raw = self.get(key, path)?;
        raw.parse()
            .map_err(|_| format_err(path, format!("bad value {raw:?} for {key:?}")))
    }

    fn get_vec(&self, key: &str, path: &Path) -> Result<Vec3> {
        let raw = self.get(key, path)?;
        let parts: Vec<f64> = raw
            .split(',')
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| format_err(path, format!("bad vector {raw:?} for {key:?}")))?;
        match parts[..] {
            [x, y, z] => Ok(Vec3::new(x, y, z)),
            _ => Err(format_err(path, format!("{key:?} needs three components"))),
        }
    }
}

fn encode(header: &Header, values: &[Complex64]) -> Vec<u8> {
    let text = header.text();
    let mut out = Vec::with_capacity(12 + text.len() + values.len() * 16);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(text.len() as u32).to_le_bytes());
    out.extend_from_slice(text.as_bytes());
    for v in values {
        out.extend_from_slice(&v.re.to_le_bytes());
        out.extend_from_slice(&v.im.to_le_bytes());
    }
    out
}

fn decode(bytes: &[u8], path: &Path, expect: &str) -> Result<(Header, Vec<Complex64>)> {
    if bytes.len() < 12 || &bytes[..8] != MAGIC {
        return Err(format_err(path, "not a SARNAV1 container"));
    }
    let hlen = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let body = 12usize
        .checked_add(hlen)
        .filter(|&end| end <= bytes.len())
        .ok_or_else(|| format_err(path, "header length exceeds file size"))?;
    let text = std::str::from_utf8(&bytes[12..body])
        .map_err(|_| format_err(path, "header is not UTF-8"))?;
    let header = Header::parse(text, path)?;
    let version: u32 = header.get_parsed("version", path)?;
    if version != VERSION {
        return Err(format_err(path, format!("unsupported version {version}")));
    }
    let container = header.get("container", path)?;
    if container != expect {
        return Err(format_err(
            path,
            format!("expected a {expect} container, found {container}"),
        ));
    }
    let payload = &bytes[body..];
    if !payload.len().is_multiple_of(16) {
        return Err(format_err(
            path,
            "payload is not a whole number of complex samples",
        ));
    }
    let values = payload
        .chunks_exact(16)
        .map(|c| {
            Complex64::new(
                f64::from_le_bytes(c[..8].try_into().unwrap()),
                f64::from_le_bytes(c[8..].try_into().unwrap()),
            )
        })
        .collect();
    Ok((header, values))
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))
}

pub fn data_to_bytes(data: &DataMatrix) -> Vec<u8> {
    let mut h = Header::new();
    h.set("version", VERSION);
    h.set("container", "data");
    h.set("kind", data.kind.as_str());
    h.set("n_pulses", data.n_pulses);
    h.set("n_fast", data.n_fast);
    h.set_f64("t_start", data.t_start);
    h.set_f64("fs", data.fs);
    h.set_f64("mf_delay", data.mf_delay);
    h.set_f64("prf", data.prf);
    encode(&h, &data.values)
}

pub fn data_from_bytes(bytes: &[u8], path: &Path) -> Result<DataMatrix> {
    let (h, values) = decode(bytes, path, "data")?;
    let kind = match h.get("kind", path)? {
        "raw" => DataKind::Raw,
        "range_compressed" => DataKind::RangeCompressed,
        other => return Err(format_err(path, format!("unknown data kind {other:?}"))),
    };
    let data = DataMatrix {
        kind,
        n_pulses: h.get_parsed("n_pulses", path)?,
        n_fast: h.get_parsed("n_fast", path)?,
        t_start: h.get_parsed("t_start", path)?,
        fs: h.get_parsed("fs", path)?,
        mf_delay: h.get_parsed("mf_delay", path)?,
        prf: h.get_parsed("prf", path)?,
        values,
    };
    data.validate()
        .map_err(|e| e.context(path.display().to_string()))?;
    Ok(data)
}

pub fn save_data(path: &Path, data: &DataMatrix) -> Result<()> {
    data.validate()?;
    write_atomic(path, &data_to_bytes(data))
}

pub fn load_data(path: &Path) -> Result<DataMatrix> {
    data_from_bytes(&read(path)?, path)
}

/// Only the complex samples and grid are stored; `skipped_fraction` is
/// diagnostic and is reset to zero on load.
pub fn image_to_bytes(img: &ComplexImage) -> Vec<u8> {
    let g = &img.grid;
    let mut h = Header::new();
    h.set("version", VERSION);
    h.set("container", "image");
    h.set_vec("origin", g.origin);
    h.set_vec("axis_along", g.axis_along);
    h.set_vec("axis_cross", g.axis_cross);
    h.set_f64("spacing_along", g.spacing_along);
    h.set_f64("spacing_cross", g.spacing_cross);
    h.set("n_along", g.n_along);
    h.set("n_cross", g.n_cross);
    encode(&h, &img.values)
}

pub fn image_from_bytes(bytes: &[u8], path: &Path) -> Result<ComplexImage> {
    let (h, values) = decode(bytes, path, "image")?;
    let grid = ImageGrid {
        origin: h.get_vec("origin", path)?,
        axis_along: h.get_vec("axis_along", path)?,
        axis_cross: h.get_vec("axis_cross", path)?,
        spacing_along: h.get_parsed("spacing_along", path)?,
        spacing_cross: h.get_parsed("spacing_cross", path)?,
        n_along: h.get_parsed("n_along", path)?,
        n_cross: h.get_parsed("n_cross", path)?,
    };
    grid.validate()
        .map_err(|e| e.context(path.display().to_string()))?;
    if values.len() != grid.len() {
        return Err(Error::ShapeMismatch(format!(
            "{}: {} pixels stored for a {} x {} grid",
            path.display(),
            values.len(),
            grid.n_along,
            grid.n_cross
        )));
    }
    Ok(ComplexImage {
        grid,
        skipped_fraction: vec![0.0; values.len()],
        values,
    })
}

pub fn save_image(path: &Path, img: &ComplexImage) -> Result<()> {
    write_atomic(path, &image_to_bytes(img))
}

pub fn load_image(path: &Path) -> Result<ComplexImage> {
    image_from_bytes(&read(path)?, path)
}
