//! Event generation from intensity video under a per-pixel biased threshold
//! model, and injection of special pixels into calibration maps.
//!
//! Each pixel keeps a reference log level, initialised from the first frame.
//! Log intensity is interpolated linearly between frames. An ON event fires
//! when `L(t) - L_ref >= c + b`, an OFF event when `L(t) - L_ref <= -c + b`;
//! the event is stamped at the crossing instant and the reference moves to
//! `L` at that instant.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::model::{
    is_valid_pair, log_intensity, CalibrationMap, Event, EventStream, IntensityFrame, PixelClass,
    Polarity,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Interpolation {
    #[default]
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    /// Minimum gap between two events of the same pixel, seconds.
    pub refractory: f64,
    pub interpolation: Interpolation,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            refractory: 0.0,
            interpolation: Interpolation::Linear,
        }
    }
}

pub fn simulate_events(
    video: &[IntensityFrame],
    map: &CalibrationMap,
    cfg: &SimConfig,
) -> Result<EventStream> {
    if video.len() < 2 {
        return Err(Error::TooFewFrames {
            required: 2,
            actual: video.len(),
        });
    }
    if !(cfg.refractory >= 0.0) || !cfg.refractory.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "refractory period must be >= 0, got {}",
            cfg.refractory
        )));
    }
    let (width, height) = (map.width(), map.height());
    crate::ingest::check_frames(video, width, height)?;
    if video[0].timestamp() < 0.0 {
        return Err(Error::BadTimestamp {
            index: 0,
            t: video[0].timestamp(),
        });
    }
    let times: Vec<f64> = video.iter().map(|f| f.timestamp()).collect();
    let logs = video
        .iter()
        .map(log_intensity)
        .collect::<Result<Vec<_>>>()?;

    let mut events = Vec::new();
    let mut trajectory = vec![0.0; video.len()];
    for y in 0..height {
        for x in 0..width {
            let i = y * width + x;
            for (slot, frame) in trajectory.iter_mut().zip(&logs) {
                *slot = frame.values.as_slice()[i];
            }
            let (c, b) = map.at(x, y);
            simulate_pixel(&times, &trajectory, c, b, cfg.refractory, |t, polarity| {
                events.push(Event::new(t, x as u32, y as u32, polarity))
            });
        }
    }
    // stable: ties keep pixel order
    events.sort_by(|a, b| a.t.total_cmp(&b.t));
    EventStream::new(width, height, events)
}

/// Slack on the trigger comparisons so that exact ties survive floating-point
/// round-off in the log conversion.
const TRIGGER_EPS: f64 = 1e-12;

/// Runs the trigger rule over one pixel's piecewise-linear log trajectory.
pub fn simulate_pixel(
    times: &[f64],
    logs: &[f64],
    c: f64,
    b: f64,
    refractory: f64,
    mut emit: impl FnMut(f64, Polarity),
) {
    debug_assert_eq!(times.len(), logs.len());
    let on_step = c + b;
    let off_step = -c + b;
    let mut reference = logs[0];
    let mut last_event = f64::NEG_INFINITY;

    for k in 1..times.len() {
        let (t0, t1) = (times[k - 1], times[k]);
        let (l0, l1) = (logs[k - 1], logs[k]);
        let dt = t1 - t0;
        let level_at = |t: f64| {
            if t <= t0 {
                l0
            } else if t >= t1 {
                l1
            } else {
                l0 + (t - t0) / dt * (l1 - l0)
            }
        };
        let mut cursor = t0;
        loop {
            // the pixel is blind until the refractory period has elapsed
            let ready = if refractory > 0.0 {
                cursor.max(last_event + refractory)
            } else {
                cursor
            };
            if ready > t1 {
                break;
            }
            let now = level_at(ready);
            if refractory > 0.0 && ready > t0 {
                if now - reference >= on_step - TRIGGER_EPS {
                    emit(ready, Polarity::On);
                    reference = now;
                    last_event = ready;
                    cursor = ready;
                    continue;
                }
                if now - reference <= off_step + TRIGGER_EPS {
                    emit(ready, Polarity::Off);
                    reference = now;
                    last_event = ready;
                    cursor = ready;
                    continue;
                }
            }
            let (target, polarity) = if l1 > now {
                (reference + on_step, Polarity::On)
            } else if l1 < now {
                (reference + off_step, Polarity::Off)
            } else {
                break;
            };
            let reached = match polarity {
                Polarity::On => l1 >= target - TRIGGER_EPS,
                Polarity::Off => l1 <= target + TRIGGER_EPS,
            };
            if !reached {
                break;
            }
            let frac = ((target - l0) / (l1 - l0)).clamp(0.0, 1.0);
            let mut t = t0 + frac * dt;
            if t <= ready {
                t = if ready < t1 {
                    ready.next_up().min(t1)
                } else {
                    t1
                };
            }
            let t = t.min(t1);
            emit(t, polarity);
            reference = target;
            last_event = t;
            cursor = t;
        }
    }
}

/// One special pixel to inject.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpecialPixel {
    pub x: usize,
    pub y: usize,
    pub class: PixelClass,
    pub magnitude: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SpecialPixelSpec {
    pub pixels: Vec<SpecialPixel>,
}

impl SpecialPixelSpec {
    pub fn new(pixels: Vec<SpecialPixel>) -> Self {
        Self { pixels }
    }
}

/// Lines of `x y class magnitude`; `#` starts a comment.
impl FromStr for SpecialPixelSpec {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        let mut pixels = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or_default().trim();
            if line.is_empty() {
                continue;
            }
            let parse_err = |message: String| Error::Parse {
                line: i + 1,
                message,
            };
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() != 4 {
                return Err(parse_err(format!(
                    "expected \"x y class magnitude\", found {} fields",
                    f.len()
                )));
            }
            let x = f[0]
                .parse()
                .map_err(|_| parse_err(format!("bad x {:?}", f[0])))?;
            let y = f[1]
                .parse()
                .map_err(|_| parse_err(format!("bad y {:?}", f[1])))?;
            let class = f[2].parse().map_err(|e: Error| parse_err(e.to_string()))?;
            let magnitude = f[3]
                .parse()
                .map_err(|_| parse_err(format!("bad magnitude {:?}", f[3])))?;
            pixels.push(SpecialPixel {
                x,
                y,
                class,
                magnitude,
            });
        }
        Ok(Self { pixels })
    }
}

impl fmt::Display for SpecialPixelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for p in &self.pixels {
            writeln!(f, "{} {} {} {}", p.x, p.y, p.class, p.magnitude)?;
        }
        Ok(())
    }
}

/// Hot/cold pixels get `c = nominal_c -/+ magnitude`; warm/cool pixels get
/// `b = -/+ magnitude`. Other pixels are untouched.
pub fn inject_special_pixels(
    map: &CalibrationMap,
    spec: &SpecialPixelSpec,
    nominal_c: f64,
) -> Result<CalibrationMap> {
    if !(nominal_c > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "nominal threshold must be > 0, got {nominal_c}"
        )));
    }
    let mut out = map.clone();
    for p in &spec.pixels {
        if p.x >= map.width() || p.y >= map.height() {
            return Err(Error::InvalidParameter(format!(
                "special pixel ({}, {}) outside {}x{} map",
                p.x,
                p.y,
                map.width(),
                map.height()
            )));
        }
        if !(p.magnitude > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "special pixel ({}, {}) needs magnitude > 0, got {}",
                p.x, p.y, p.magnitude
            )));
        }
        let (c, b) = out.at(p.x, p.y);
        let (c, b) = match p.class {
            PixelClass::Hot => (nominal_c - p.magnitude, b),
            PixelClass::Cold => (nominal_c + p.magnitude, b),
            PixelClass::Warm => (c, -p.magnitude),
            PixelClass::Cool => (c, p.magnitude),
            PixelClass::Nominal => (c, b),
        };
        if !is_valid_pair(c, b) {
            return Err(Error::InvalidCalibration {
                x: p.x,
                y: p.y,
                c,
                b,
            });
        }
        out.set(p.x, p.y, c, b)?;
    }
    Ok(out)
}
