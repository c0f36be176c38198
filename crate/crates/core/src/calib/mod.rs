//! Per-pixel calibration of contrast threshold and bias.
//!
//! Three estimators share the same per-pixel least-squares core:
//!
//! * [`calibrate_offei`]: offline, events plus intensity frames. Every
//!   `d`-frame interval gives one row `[Σσ, Σ|σ|]·[c, b] = ΔL`.
//! * [`OnlineCalibrator`]: the same rows over a sliding, event-count-sized
//!   buffer, smoothed with an exponential low-pass filter.
//! * [`calibrate_offe`]: events only. The bias comes from the drift of the
//!   cumulative polarity, the threshold from its spread relative to the other
//!   pixels.

mod offe;
mod offei;
mod ols;
mod onei;

use std::fmt;
use std::fmt::Write as _;

pub use offe::{calibrate_offe, OffEConfig, OffEEstimate, OffEReport};
pub use offei::{build_rows, calibrate_offei, OffEiConfig};
pub use ols::{solve_pixel_ols, OlsParams, OlsSolution};
pub use onei::{run_online, OnEiConfig, OnlineCalibrator, OnlineSnapshot};

use crate::model::Grid;

/// One stacked equation `sum_sigma * c + count * b = delta_log`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RegressionRow {
    /// Σσ over the interval.
    pub sum_sigma: i64,
    /// Σ|σ| over the interval.
    pub count: u64,
    /// Log intensity at the end of the interval minus at its start.
    pub delta_log: f64,
}

impl RegressionRow {
    pub fn new(sum_sigma: i64, count: u64, delta_log: f64) -> Self {
        debug_assert!(sum_sigma.unsigned_abs() <= count);
        Self {
            sum_sigma,
            count,
            delta_log,
        }
    }
}

/// Why a pixel got the fallback calibration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DegenerateReason {
    TooFewEvents,
    TooFewRows,
    IllConditioned,
    NonPositiveThreshold,
    /// The fitted `|b| >= c`, which leaves no room for one polarity.
    EmptyTriggerBand,
}

impl DegenerateReason {
    pub fn as_str(self) -> &'static str {
        match self {
            DegenerateReason::TooFewEvents => "too_few_events",
            DegenerateReason::TooFewRows => "too_few_rows",
            DegenerateReason::IllConditioned => "ill_conditioned",
            DegenerateReason::NonPositiveThreshold => "non_positive_threshold",
            DegenerateReason::EmptyTriggerBand => "empty_trigger_band",
        }
    }
}

impl fmt::Display for DegenerateReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FlaggedPixel {
    pub x: usize,
    pub y: usize,
    pub reason: DegenerateReason,
}

/// Outcome summary of one calibration run.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationReport {
    pub pixels: usize,
    pub degenerate: Vec<FlaggedPixel>,
    /// Per-pixel fit residual: `‖A x - z‖` for the hybrid methods, the RMS
    /// residual of the cumulative-polarity line for the event-only method.
    /// NaN where no fit was made.
    pub residuals: Grid<f64>,
}

impl CalibrationReport {
    pub fn degenerate_count(&self) -> usize {
        self.degenerate.len()
    }

    pub fn is_degenerate(&self, x: usize, y: usize) -> bool {
        self.degenerate.iter().any(|p| p.x == x && p.y == y)
    }

    /// `x y reason` per degenerate pixel, after `#`-prefixed counters.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# pixels {}", self.pixels);
        let _ = writeln!(out, "# degenerate {}", self.degenerate.len());
        for reason in [
            DegenerateReason::TooFewEvents,
            DegenerateReason::TooFewRows,
            DegenerateReason::IllConditioned,
            DegenerateReason::NonPositiveThreshold,
            DegenerateReason::EmptyTriggerBand,
        ] {
            let n = self
                .degenerate
                .iter()
                .filter(|p| p.reason == reason)
                .count();
            if n > 0 {
                let _ = writeln!(out, "# {reason} {n}");
            }
        }
        for p in &self.degenerate {
            let _ = writeln!(out, "{} {} {}", p.x, p.y, p.reason);
        }
        out
    }
}
