//! Direct integration of events onto a reference frame.
//!
//! Every event at pixel `p` adds `c(p)·σ + b(p)` to that pixel's log
//! intensity. The log accumulator is never clamped; only the conversion back
//! to intensity clamps to `[0, 255]`.

use crate::error::{Error, Result};
use crate::ingest::Dataset;
use crate::metrics::MetricReport;
use crate::model::{
    check_shape, exp_intensity, log_intensity, CalibrationMap, Event, Grid, IntensityFrame,
    LogFrame,
};

/// Log-domain integration; the timestamp is that of the last event, or the
/// start frame's when there are none.
pub fn integrate_log(
    start: &IntensityFrame,
    events: &[Event],
    map: &CalibrationMap,
) -> Result<LogFrame> {
    check_shape(start.width(), start.height(), map.width(), map.height())?;
    let mut log = log_intensity(start)?;
    let width = start.width();
    let mut previous = f64::NEG_INFINITY;
    let values = log.values.as_mut_slice();
    let (c, b) = (map.c().as_slice(), map.b().as_slice());
    for (index, e) in events.iter().enumerate() {
        if e.x as usize >= width || e.y as usize >= start.height() {
            return Err(Error::EventOutOfBounds {
                index,
                x: e.x,
                y: e.y,
                width,
                height: start.height(),
            });
        }
        if e.t < previous {
            return Err(Error::UnsortedEvents { index, t: e.t });
        }
        previous = e.t;
        let p = e.y as usize * width + e.x as usize;
        values[p] += c[p] * e.polarity.signf() + b[p];
    }
    if let Some(last) = events.last() {
        log.timestamp = last.t;
    }
    Ok(log)
}

/// Intensity-domain integration. Pixels without events keep their start
/// value bit-for-bit.
pub fn integrate(
    start: &IntensityFrame,
    events: &[Event],
    map: &CalibrationMap,
) -> Result<IntensityFrame> {
    let log = integrate_log(start, events, map)?;
    let mut touched = vec![false; start.values().len()];
    for e in events {
        touched[e.y as usize * start.width() + e.x as usize] = true;
    }
    let values = exp_intensity(&log)
        .values()
        .as_slice()
        .iter()
        .zip(start.values().as_slice())
        .zip(&touched)
        .map(|((&new, &old), &hit)| if hit { new } else { old })
        .collect();
    IntensityFrame::new(
        log.timestamp,
        Grid::from_vec(start.width(), start.height(), values)?,
    )
}

/// Integration with a uniform threshold `c0` and zero bias.
pub fn integrate_uncalibrated(
    start: &IntensityFrame,
    events: &[Event],
    c0: f64,
) -> Result<IntensityFrame> {
    if !(c0 > 0.0) {
        return Err(Error::InvalidParameter(format!("c0 must be > 0, got {c0}")));
    }
    let map = CalibrationMap::uniform(start.width(), start.height(), c0, 0.0)?;
    integrate(start, events, &map)
}

/// Frame-bracketed span of events `(T[start], T[end]]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IntegrationWindow {
    pub start: usize,
    pub end: usize,
}

impl IntegrationWindow {
    pub fn new(start: usize, end: usize, frames: usize) -> Result<Self> {
        if start >= end || end >= frames {
            return Err(Error::FrameIndexOutOfRange {
                start,
                end,
                count: frames,
            });
        }
        Ok(Self { start, end })
    }
}

/// When to emit a reconstruction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cadence {
    /// At every frame `k`, integrating from frame `k - n`.
    Frames(usize),
    /// At the first frame where at least `N` events have arrived since the
    /// previous evaluation point, which then becomes the new reference.
    Events(usize),
}

impl Default for Cadence {
    fn default() -> Self {
        Cadence::Frames(1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationPoint {
    pub window: IntegrationWindow,
    pub t: f64,
    pub events: usize,
    /// Real-valued reconstruction.
    pub reconstruction: IntensityFrame,
    /// Scores of the 8-bit rounded reconstruction against frame `window.end`.
    pub metrics: MetricReport,
}

/// Reconstructs frames of a dataset by direct integration and scores them
/// against the recorded frames. Evaluation points less than `skip` seconds
/// after the first frame are not emitted.
pub fn evaluate_sequence(
    dataset: &Dataset,
    map: &CalibrationMap,
    cadence: Cadence,
    skip: f64,
) -> Result<Vec<EvaluationPoint>> {
    let frames = dataset.frames();
    check_shape(dataset.width(), dataset.height(), map.width(), map.height())?;
    if frames.len() < 2 {
        return Err(Error::TooFewFrames {
            required: 2,
            actual: frames.len(),
        });
    }
    let t0 = frames[0].timestamp();
    let stream = dataset.stream();
    let mut windows = Vec::new();
    match cadence {
        Cadence::Frames(n) => {
            if n == 0 {
                return Err(Error::InvalidParameter("frame cadence needs n >= 1".into()));
            }
            for end in n..frames.len() {
                windows.push(IntegrationWindow::new(end - n, end, frames.len())?);
            }
        }
        Cadence::Events(count) => {
            if count == 0 {
                return Err(Error::InvalidParameter("event cadence needs N >= 1".into()));
            }
            let mut start = 0;
            for end in 1..frames.len() {
                let n = stream
                    .window(frames[start].timestamp(), frames[end].timestamp())
                    .len();
                if n >= count {
                    windows.push(IntegrationWindow::new(start, end, frames.len())?);
                    start = end;
                }
            }
        }
    }

    let mut points = Vec::new();
    for window in windows {
        let reference = &frames[window.end];
        if reference.timestamp() - t0 < skip {
            continue;
        }
        let events = stream.window(frames[window.start].timestamp(), reference.timestamp());
        let reconstruction =
            integrate(&frames[window.start], events, map)?.with_timestamp(reference.timestamp());
        let metrics = MetricReport::compute(&reconstruction.quantized(), reference)?;
        points.push(EvaluationPoint {
            window,
            t: reference.timestamp(),
            events: events.len(),
            reconstruction,
            metrics,
        });
    }
    Ok(points)
}
