//! Online hybrid calibration.
//!
//! Frames and the events between them are appended to a large buffer, one
//! frame interval at a time. Once the buffer holds more than `big_capacity`
//! events the oldest interval is evicted, the remaining intervals are grouped
//! into consecutive small buffers of about `small_capacity` events each (one
//! regression row per group), every pixel is re-solved, and the estimate is
//! moved toward the new solution with an exponential low-pass filter.

use std::collections::VecDeque;

use super::{solve_pixel_ols, CalibrationReport, FlaggedPixel, OlsParams, RegressionRow};
use crate::error::{Error, Result};
use crate::ingest::Dataset;
use crate::model::{
    check_shape, log_intensity, CalibrationMap, Event, Grid, IntensityFrame, LogFrame,
};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OnEiConfig {
    pub big_capacity: usize,
    pub small_capacity: usize,
    /// Low-pass weight of each new solution, in (0, 1].
    pub filter_alpha: f64,
    pub fallback_c: f64,
    pub fallback_b: f64,
    pub min_rows: usize,
    pub min_events: u64,
}

impl Default for OnEiConfig {
    fn default() -> Self {
        Self {
            big_capacity: 1_700_000,
            small_capacity: 200_000,
            filter_alpha: 0.1,
            fallback_c: 0.1,
            fallback_b: 0.0,
            min_rows: 2,
            min_events: 10,
        }
    }
}

impl OnEiConfig {
    fn validate(&self) -> Result<()> {
        if self.small_capacity == 0 || self.small_capacity > self.big_capacity {
            return Err(Error::InvalidParameter(format!(
                "need 0 < small_capacity <= big_capacity (small={}, big={})",
                self.small_capacity, self.big_capacity
            )));
        }
        if !(self.filter_alpha > 0.0 && self.filter_alpha <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "filter_alpha must lie in (0, 1], got {}",
                self.filter_alpha
            )));
        }
        if !(self.fallback_c > 0.0) || !(self.fallback_b.abs() < self.fallback_c) {
            return Err(Error::InvalidParameter(format!(
                "fallback (c={}, b={}) must satisfy c > 0 and |b| < c",
                self.fallback_c, self.fallback_b
            )));
        }
        if self.min_rows < 2 || self.min_events < 1 {
            return Err(Error::InvalidParameter(
                "min_rows must be >= 2 and min_events >= 1".into(),
            ));
        }
        Ok(())
    }

    fn ols_params(&self) -> OlsParams {
        OlsParams {
            fallback_c: self.fallback_c,
            fallback_b: self.fallback_b,
            min_rows: self.min_rows,
            min_events: self.min_events,
        }
    }
}

/// Per-pixel event sums over one frame interval.
#[derive(Debug, Clone)]
struct IntervalSums {
    sum_sigma: Vec<i32>,
    count: Vec<u32>,
    total: usize,
}

/// Single-writer state machine; pushes must be serialized by the caller.
#[derive(Debug, Clone)]
pub struct OnlineCalibrator {
    config: OnEiConfig,
    width: usize,
    height: usize,
    /// Log frames bracketing the buffered intervals; one more than intervals
    /// once the first frame has arrived.
    boundaries: VecDeque<LogFrame>,
    intervals: VecDeque<IntervalSums>,
    buffered: usize,
    estimate: CalibrationMap,
    updates: usize,
    last_report: Option<CalibrationReport>,
}

impl OnlineCalibrator {
    /// Starts from the uniform fallback map.
    pub fn new(width: usize, height: usize, config: OnEiConfig) -> Result<Self> {
        config.validate()?;
        let estimate =
            CalibrationMap::uniform(width, height, config.fallback_c, config.fallback_b)?;
        Ok(Self {
            config,
            width,
            height,
            boundaries: VecDeque::new(),
            intervals: VecDeque::new(),
            buffered: 0,
            estimate,
            updates: 0,
            last_report: None,
        })
    }

    pub fn config(&self) -> &OnEiConfig {
        &self.config
    }

    pub fn estimate(&self) -> &CalibrationMap {
        &self.estimate
    }

    pub fn buffered_events(&self) -> usize {
        self.buffered
    }

    pub fn buffered_intervals(&self) -> usize {
        self.intervals.len()
    }

    pub fn updates(&self) -> usize {
        self.updates
    }

    /// Report of the most recent update.
    pub fn last_report(&self) -> Option<&CalibrationReport> {
        self.last_report.as_ref()
    }

    /// Appends `frame` and the events since the previous frame.
    ///
    /// Events must lie in `(previous frame time, frame time]`; events passed
    /// with the very first frame have no interval to join and are ignored.
    /// Returns the updated estimate when the buffer overflowed and an update
    /// ran.
    pub fn push_frame(
        &mut self,
        frame: &IntensityFrame,
        events: &[Event],
    ) -> Result<Option<CalibrationMap>> {
        check_shape(self.width, self.height, frame.width(), frame.height())?;
        let log = log_intensity(frame)?;
        let previous = match self.boundaries.back() {
            None => {
                self.boundaries.push_back(log);
                return Ok(None);
            }
            Some(prev) => prev.timestamp,
        };
        if !(log.timestamp > previous) {
            return Err(Error::NonMonotoneFrames {
                index: self.intervals.len() + 1,
                t: log.timestamp,
                previous,
            });
        }

        let pixels = self.width * self.height;
        let mut sums = IntervalSums {
            sum_sigma: vec![0; pixels],
            count: vec![0; pixels],
            total: events.len(),
        };
        for (index, e) in events.iter().enumerate() {
            if !(e.t > previous && e.t <= log.timestamp) {
                return Err(Error::InvalidParameter(format!(
                    "event {index} at t={} lies outside the frame interval ({previous}, {}]",
                    e.t, log.timestamp
                )));
            }
            if e.x as usize >= self.width || e.y as usize >= self.height {
                return Err(Error::EventOutOfBounds {
                    index,
                    x: e.x,
                    y: e.y,
                    width: self.width,
                    height: self.height,
                });
            }
            let p = e.y as usize * self.width + e.x as usize;
            sums.sum_sigma[p] += e.polarity.sign() as i32;
            sums.count[p] += 1;
        }
        self.boundaries.push_back(log);
        self.intervals.push_back(sums);
        self.buffered += events.len();

        if self.buffered <= self.config.big_capacity {
            return Ok(None);
        }
        // normally one interval; more only if a single frame overfilled it
        self.evict_oldest();
        while self.buffered > self.config.big_capacity && !self.intervals.is_empty() {
            self.evict_oldest();
        }
        self.update();
        Ok(Some(self.estimate.clone()))
    }

    fn evict_oldest(&mut self) {
        if let Some(old) = self.intervals.pop_front() {
            self.buffered -= old.total;
            self.boundaries.pop_front();
        }
    }

    /// Consecutive interval groups `[start, end)`, each closed as soon as its
    /// event total reaches `small_capacity`. A trailing short group is kept.
    fn groups(&self) -> Vec<(usize, usize)> {
        let mut groups = Vec::new();
        let mut start = 0;
        let mut acc = 0usize;
        for (i, interval) in self.intervals.iter().enumerate() {
            acc += interval.total;
            if acc >= self.config.small_capacity {
                groups.push((start, i + 1));
                start = i + 1;
                acc = 0;
            }
        }
        if start < self.intervals.len() {
            groups.push((start, self.intervals.len()));
        }
        groups
    }

    fn update(&mut self) {
        let groups = self.groups();
        let params = self.config.ols_params();
        let alpha = self.config.filter_alpha;
        let pixels = self.width * self.height;

        let mut c = self.estimate.c().as_slice().to_vec();
        let mut b = self.estimate.b().as_slice().to_vec();
        let mut residuals = vec![f64::NAN; pixels];
        let mut degenerate = Vec::new();
        let mut rows = Vec::with_capacity(groups.len());
        for p in 0..pixels {
            rows.clear();
            for &(start, end) in &groups {
                let (mut s, mut n) = (0i64, 0u64);
                for interval in self.intervals.range(start..end) {
                    s += interval.sum_sigma[p] as i64;
                    n += interval.count[p] as u64;
                }
                let dl = self.boundaries[end].values.as_slice()[p]
                    - self.boundaries[start].values.as_slice()[p];
                rows.push(RegressionRow::new(s, n, dl));
            }
            let sol = solve_pixel_ols(&rows, &params);
            match sol.degenerate {
                Some(reason) => degenerate.push(FlaggedPixel {
                    x: p % self.width,
                    y: p / self.width,
                    reason,
                }),
                None => {
                    c[p] = (1.0 - alpha) * c[p] + alpha * sol.c;
                    b[p] = (1.0 - alpha) * b[p] + alpha * sol.b;
                    residuals[p] = sol.residual_norm;
                }
            }
        }
        let grid = |v| Grid::from_vec(self.width, self.height, v).expect("sized from resolution");
        // a convex blend of two valid pairs is valid
        self.estimate = CalibrationMap::new(grid(c), grid(b)).expect("low-pass keeps invariants");
        self.last_report = Some(CalibrationReport {
            pixels,
            degenerate,
            residuals: grid(residuals),
        });
        self.updates += 1;
    }
}

/// One estimate emitted by [`run_online`].
#[derive(Debug, Clone, PartialEq)]
pub struct OnlineSnapshot {
    /// Timestamp of the frame that triggered the update.
    pub t: f64,
    pub frame_index: usize,
    pub map: CalibrationMap,
}

/// Streams a whole dataset through a fresh [`OnlineCalibrator`].
///
/// Returns the calibrator (holding the final estimate) and one snapshot per
/// update.
pub fn run_online(
    dataset: &Dataset,
    config: &OnEiConfig,
) -> Result<(OnlineCalibrator, Vec<OnlineSnapshot>)> {
    let mut cal = OnlineCalibrator::new(dataset.width(), dataset.height(), *config)?;
    let mut snapshots = Vec::new();
    let mut previous = f64::NEG_INFINITY;
    for (i, frame) in dataset.frames().iter().enumerate() {
        let events = if i == 0 {
            &[][..]
        } else {
            dataset.stream().window(previous, frame.timestamp())
        };
        if let Some(map) = cal.push_frame(frame, events)? {
            snapshots.push(OnlineSnapshot {
                t: frame.timestamp(),
                frame_index: i,
                map,
            });
        }
        previous = frame.timestamp();
    }
    Ok((cal, snapshots))
}
