//! Per-pixel contrast threshold and bias calibration for event cameras.
//!
//! The crate models an event pixel as firing ON when its log intensity rises
//! by `c + b` and OFF when it falls by `c - b`, and provides:
//!
//! * [`model`]: events, frames, calibration maps, special-pixel classes.
//! * [`ingest`]: `t x y p` event files, graymap frame sequences, map files.
//! * [`simulate`]: event generation from intensity video under a given map.
//! * [`calib`]: offline hybrid, online hybrid and event-only calibration.
//! * [`reconstruct`]: direct integration of events onto reference frames.
//! * [`metrics`]: RMSE, PSNR and SSIM.
//! * [`cli`]: the `evcalib` command-line front end.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod calib;
pub mod cli;
pub mod error;
pub mod ingest;
pub mod metrics;
pub mod model;
pub mod reconstruct;
pub mod simulate;

pub use error::{Error, Result};
pub use model::{
    classify_pixel, exp_intensity, log_intensity, CalibrationMap, ClassifyParams, Event,
    EventStream, Grid, IntensityFrame, LogFrame, PixelClass, Polarity,
};
