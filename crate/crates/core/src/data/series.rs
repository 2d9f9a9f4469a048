//! Frame series: file input, sliding-window supervision and a synthetic
//! oscillating texture.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{param_err, Error, Result};
use crate::math::{Matrix, RandomSource};
use crate::net::{TimeStepData, Targets};

/// Default window length in frames.
pub const DEFAULT_WINDOW: usize = 36;

/// Step `t` (1-based, `t > window`) maps frames `t-window..t-1` to frames
/// `t-window+1..t`. Returns the `T - window` steps in order.
pub fn sliding_windows(series: &Matrix, window: usize) -> Result<Vec<TimeStepData>> {
    if window == 0 {
        return param_err("window must be positive");
    }
    if series.rows() <= window {
        return param_err(format!(
            "series of {} frames is too short for a window of {window}",
            series.rows()
        ));
    }
    (window + 1..=series.rows())
        .map(|t| {
            // 1-based frames t-window..t-1 are 0-based rows t-window-1..t-2.
            let inputs = series.row_range(t - window - 1, t - 1)?;
            let targets = series.row_range(t - window, t)?;
            TimeStepData::new(inputs, Targets::Values(targets))
        })
        .collect()
}

/// Sidecar describing a raw little-endian `f64` matrix file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawSidecar {
    pub rows: usize,
    pub cols: usize,
}

/// One frame per row; a non-numeric first row is treated as a header.
pub fn read_series_csv(path: &Path) -> Result<Matrix> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Data(format!("cannot read {}: {e}", path.display())))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
        let parsed: std::result::Result<Vec<f64>, _> = record.iter().map(str::parse::<f64>).collect();
        match parsed {
            Ok(row) => rows.push(row),
            Err(_) if i == 0 => continue,
            Err(e) => return Err(Error::Data(format!("{}: row {}: {e}", path.display(), i + 1))),
        }
    }
    if rows.is_empty() {
        return Err(Error::Data(format!("{} holds no frames", path.display())));
    }
    Matrix::from_rows(&rows).map_err(|e| Error::Data(format!("{}: {e}", path.display())))
}

pub fn write_series_csv(path: &Path, series: &Matrix) -> Result<()> {
    let mut writer = csv::Writer::from_path(path).map_err(|e| Error::Data(e.to_string()))?;
    for i in 0..series.rows() {
        writer
            .write_record(series.row(i).iter().map(|v| format!("{v:?}")))
            .map_err(|e| Error::Data(e.to_string()))?;
    }
    writer.flush()?;
    Ok(())
}

/// Reads `path` as raw little-endian `f64` values shaped by the JSON sidecar.
pub fn read_series_raw(path: &Path, sidecar: &Path) -> Result<Matrix> {
    let meta: RawSidecar = serde_json::from_slice(&fs::read(sidecar)?)
        .map_err(|e| Error::Data(format!("bad sidecar {}: {e}", sidecar.display())))?;
    let bytes = fs::read(path)?;
    let expected = meta.rows * meta.cols * 8;
    if bytes.len() != expected {
        return Err(Error::Data(format!(
            "{} has {} bytes, sidecar implies {expected}",
            path.display(),
            bytes.len()
        )));
    }
    let values = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Matrix::new(meta.rows, meta.cols, values)
}

pub fn write_series_raw(path: &Path, sidecar: &Path, series: &Matrix) -> Result<()> {
    let bytes: Vec<u8> = series.as_slice().iter().flat_map(|v| v.to_le_bytes()).collect();
    fs::write(path, bytes)?;
    let meta = RawSidecar {
        rows: series.rows(),
        cols: series.cols(),
    };
    fs::write(sidecar, serde_json::to_vec(&meta).map_err(|e| Error::Data(e.to_string()))?)?;
    Ok(())
}

/// Parameters of [`oscillating_texture`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TextureSpec {
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    pub waves: usize,
    /// Standard deviation of per-pixel noise, in grey levels.
    pub noise: f64,
}

impl Default for TextureSpec {
    fn default() -> Self {
        Self {
            frames: 300,
            height: 24,
            width: 24,
            waves: 4,
            noise: 2.0,
        }
    }
}

/// A flag-like grey-level texture: travelling plane waves with random
/// direction, wavelength, speed and phase around mid-grey, plus pixel noise.
/// Values lie roughly in `[0, 255]`; one frame per row.
pub fn oscillating_texture(spec: &TextureSpec, seed: u64) -> Result<Matrix> {
    if spec.frames == 0 || spec.height == 0 || spec.width == 0 || spec.waves == 0 {
        return param_err("texture dimensions and wave count must be positive");
    }
    let mut rs = RandomSource::new(seed);
    struct Wave {
        kx: f64,
        ky: f64,
        omega: f64,
        phase: f64,
        amp: f64,
    }
    let waves: Vec<Wave> = (0..spec.waves)
        .map(|_| {
            let angle = 2.0 * PI * rs.uniform();
            let wavelength = 6.0 + 10.0 * rs.uniform();
            let k = 2.0 * PI / wavelength;
            Wave {
                kx: k * angle.cos(),
                ky: k * angle.sin(),
                omega: 0.25 + 0.5 * rs.uniform(),
                phase: 2.0 * PI * rs.uniform(),
                amp: 20.0 + 20.0 * rs.uniform(),
            }
        })
        .collect();
    let d = spec.height * spec.width;
    let mut data = Vec::with_capacity(spec.frames * d);
    for t in 0..spec.frames {
        for y in 0..spec.height {
            for x in 0..spec.width {
                let mut v = 127.5;
                for w in &waves {
                    v += w.amp * (w.omega * t as f64 - w.kx * x as f64 - w.ky * y as f64 + w.phase).sin();
                }
                data.push(v + spec.noise * rs.standard_normal());
            }
        }
    }
    Matrix::new(spec.frames, d, data)
}
