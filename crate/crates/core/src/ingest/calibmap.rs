//! Text serialization of [`CalibrationMap`].
//!
//! ```text
//! evcalib v1 <width> <height>
//! <c> <b>          one line per pixel, row-major
//! ```
//!
//! Values are written with 9 fractional digits when that reads back to the
//! same `f64`, and with the shortest exact decimal otherwise, so reading a
//! written map is always bit-exact.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{CalibrationMap, Grid};

const MAGIC: &str = "evcalib v1";

pub fn format_calibration_map(map: &CalibrationMap) -> String {
    let mut out = String::with_capacity(24 * (map.c().len() + 1));
    let _ = writeln!(out, "{MAGIC} {} {}", map.width(), map.height());
    for (c, b) in map.c().as_slice().iter().zip(map.b().as_slice()) {
        let _ = writeln!(out, "{} {}", format_value(*c), format_value(*b));
    }
    out
}

fn format_value(v: f64) -> String {
    let fixed = format!("{v:.9}");
    if fixed
        .parse::<f64>()
        .is_ok_and(|p| p.to_bits() == v.to_bits())
    {
        fixed
    } else {
        format!("{v}")
    }
}

pub fn parse_calibration_map(text: &str) -> std::result::Result<CalibrationMap, String> {
    let mut lines = text.lines().enumerate();
    let header = lines
        .next()
        .map(|(_, l)| l)
        .ok_or_else(|| "empty file".to_string())?;
    let dims = header.strip_prefix(MAGIC).ok_or_else(|| {
        format!("bad magic: expected \"{MAGIC} <width> <height>\", found {header:?}")
    })?;
    let dims: Vec<&str> = dims.split_whitespace().collect();
    let (width, height) = match dims.as_slice() {
        [w, h] => (
            w.parse::<usize>().map_err(|_| format!("bad width {w:?}"))?,
            h.parse::<usize>()
                .map_err(|_| format!("bad height {h:?}"))?,
        ),
        _ => return Err(format!("bad header {header:?}")),
    };
    let n = width * height;
    let mut c = Vec::with_capacity(n);
    let mut b = Vec::with_capacity(n);
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split_whitespace();
        let (cs, bs) = match (fields.next(), fields.next(), fields.next()) {
            (Some(cs), Some(bs), None) => (cs, bs),
            _ => return Err(format!("line {}: expected \"c b\"", i + 1)),
        };
        let cv: f64 = cs
            .parse()
            .map_err(|_| format!("line {}: bad threshold {cs:?}", i + 1))?;
        let bv: f64 = bs
            .parse()
            .map_err(|_| format!("line {}: bad bias {bs:?}", i + 1))?;
        if !(cv > 0.0) || !cv.is_finite() {
            return Err(format!(
                "line {}: invariant violation, threshold c={cv} must be > 0",
                i + 1
            ));
        }
        if !(bv.abs() < cv) {
            return Err(format!(
                "line {}: invariant violation, |b|={} must be < c={cv}",
                i + 1,
                bv.abs()
            ));
        }
        c.push(cv);
        b.push(bv);
    }
    if c.len() != n {
        return Err(format!(
            "dimension mismatch: header declares {width}x{height} = {n} pixels, found {}",
            c.len()
        ));
    }
    let c = Grid::from_vec(width, height, c).map_err(|e| e.to_string())?;
    let b = Grid::from_vec(width, height, b).map_err(|e| e.to_string())?;
    CalibrationMap::new(c, b).map_err(|e| e.to_string())
}

pub fn write_calibration_map(map: &CalibrationMap, path: &Path) -> Result<()> {
    fs::write(path, format_calibration_map(map)).map_err(|e| Error::io(path, e))
}

pub fn read_calibration_map(path: &Path) -> Result<CalibrationMap> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_calibration_map(&text).map_err(|message| Error::Format {
        path: path.to_path_buf(),
        message,
    })
}
