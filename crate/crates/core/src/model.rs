//! Domain types shared by every stage of the pipeline.
//!
//! Pixel grids are stored row-major (`index = y * width + x`). Log intensity
//! uses the offset convention `L = ln(I + 1)` so that a black pixel maps to
//! `L = 0` instead of negative infinity.

use std::fmt;

use crate::error::{Error, Result};

/// Upper end of the 8-bit intensity range.
pub const MAX_INTENSITY: f64 = 255.0;

/// Row-major 2D grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid<T> {
    width: usize,
    height: usize,
    data: Vec<T>,
}

impl<T: Clone> Grid<T> {
    pub fn filled(width: usize, height: usize, value: T) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }
}

impl<T> Grid<T> {
    pub fn from_vec(width: usize, height: usize, data: Vec<T>) -> Result<Self> {
        let expected = width * height;
        if data.len() != expected {
            return Err(Error::GridSize {
                width,
                height,
                expected,
                actual: data.len(),
            });
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize) -> usize {
        debug_assert!(x < self.width && y < self.height);
        y * self.width + x
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> &T {
        &self.data[self.index(x, y)]
    }

    #[inline]
    pub fn get_mut(&mut self, x: usize, y: usize) -> &mut T {
        let i = self.index(x, y);
        &mut self.data[i]
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn same_shape<U>(&self, other: &Grid<U>) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub fn map<U>(&self, f: impl FnMut(&T) -> U) -> Grid<U> {
        Grid {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(f).collect(),
        }
    }

    /// Iterates `(x, y, value)` in row-major order.
    pub fn iter_xy(&self) -> impl Iterator<Item = (usize, usize, &T)> {
        let w = self.width;
        self.data
            .iter()
            .enumerate()
            .map(move |(i, v)| (i % w, i / w, v))
    }
}

pub(crate) fn check_shape(
    width: usize,
    height: usize,
    other_w: usize,
    other_h: usize,
) -> Result<()> {
    if width != other_w || height != other_h {
        return Err(Error::ResolutionMismatch {
            expected_width: width,
            expected_height: height,
            width: other_w,
            height: other_h,
        });
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Polarity {
    On,
    Off,
}

impl Polarity {
    /// +1 for ON, -1 for OFF.
    #[inline]
    pub fn sign(self) -> i64 {
        match self {
            Polarity::On => 1,
            Polarity::Off => -1,
        }
    }

    #[inline]
    pub fn signf(self) -> f64 {
        self.sign() as f64
    }

    pub fn flipped(self) -> Self {
        match self {
            Polarity::On => Polarity::Off,
            Polarity::Off => Polarity::On,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Event {
    /// Seconds.
    pub t: f64,
    pub x: u32,
    pub y: u32,
    pub polarity: Polarity,
}

impl Event {
    pub fn new(t: f64, x: u32, y: u32, polarity: Polarity) -> Self {
        Self { t, x, y, polarity }
    }
}

/// Time-ordered events from a sensor of known resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct EventStream {
    width: usize,
    height: usize,
    events: Vec<Event>,
}

impl EventStream {
    /// Validates ordering, timestamps and coordinates.
    pub fn new(width: usize, height: usize, events: Vec<Event>) -> Result<Self> {
        let mut previous = f64::NEG_INFINITY;
        for (index, e) in events.iter().enumerate() {
            if !e.t.is_finite() || e.t < 0.0 {
                return Err(Error::BadTimestamp { index, t: e.t });
            }
            if e.t < previous {
                return Err(Error::UnsortedEvents { index, t: e.t });
            }
            if e.x as usize >= width || e.y as usize >= height {
                return Err(Error::EventOutOfBounds {
                    index,
                    x: e.x,
                    y: e.y,
                    width,
                    height,
                });
            }
            previous = e.t;
        }
        Ok(Self {
            width,
            height,
            events,
        })
    }

    pub fn empty(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            events: Vec::new(),
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn into_events(self) -> Vec<Event> {
        self.events
    }

    /// Events with `start < t <= end`.
    pub fn window(&self, start: f64, end: f64) -> &[Event] {
        let lo = self.events.partition_point(|e| e.t <= start);
        let hi = self.events.partition_point(|e| e.t <= end);
        &self.events[lo..hi.max(lo)]
    }

    /// Per-pixel event counts.
    pub fn counts(&self) -> Grid<u64> {
        let mut counts = Grid::filled(self.width, self.height, 0u64);
        for e in &self.events {
            *counts.get_mut(e.x as usize, e.y as usize) += 1;
        }
        counts
    }
}

/// Timestamped log-intensity image.
#[derive(Debug, Clone, PartialEq)]
pub struct LogFrame {
    pub timestamp: f64,
    pub values: Grid<f64>,
}

impl LogFrame {
    pub fn width(&self) -> usize {
        self.values.width()
    }

    pub fn height(&self) -> usize {
        self.values.height()
    }
}

/// Timestamped 8-bit-range intensity image. Values are real so that chained
/// reconstructions do not accumulate rounding.
#[derive(Debug, Clone, PartialEq)]
pub struct IntensityFrame {
    timestamp: f64,
    values: Grid<f64>,
}

impl IntensityFrame {
    pub fn new(timestamp: f64, values: Grid<f64>) -> Result<Self> {
        for (x, y, &value) in values.iter_xy() {
            if !(0.0..=MAX_INTENSITY).contains(&value) {
                return Err(Error::IntensityOutOfRange { x, y, value });
            }
        }
        Ok(Self { timestamp, values })
    }

    pub fn from_u8(timestamp: f64, width: usize, height: usize, pixels: &[u8]) -> Result<Self> {
        let values = Grid::from_vec(width, height, pixels.iter().map(|&p| p as f64).collect())?;
        Ok(Self { timestamp, values })
    }

    pub fn uniform(timestamp: f64, width: usize, height: usize, value: f64) -> Result<Self> {
        Self::new(timestamp, Grid::filled(width, height, value))
    }

    pub fn timestamp(&self) -> f64 {
        self.timestamp
    }

    pub fn with_timestamp(mut self, timestamp: f64) -> Self {
        self.timestamp = timestamp;
        self
    }

    pub fn values(&self) -> &Grid<f64> {
        &self.values
    }

    pub fn width(&self) -> usize {
        self.values.width()
    }

    pub fn height(&self) -> usize {
        self.values.height()
    }

    /// Rounds half-to-even to 8 bits.
    pub fn to_u8(&self) -> Vec<u8> {
        self.values
            .as_slice()
            .iter()
            .map(|v| v.round_ties_even().clamp(0.0, MAX_INTENSITY) as u8)
            .collect()
    }

    /// Same frame after 8-bit rounding.
    pub fn quantized(&self) -> IntensityFrame {
        IntensityFrame {
            timestamp: self.timestamp,
            values: self
                .values
                .map(|v| v.round_ties_even().clamp(0.0, MAX_INTENSITY)),
        }
    }
}

/// Per-pixel contrast threshold `c` and bias `b`, both in natural-log units.
///
/// A pixel fires ON when its log intensity has risen by `c + b` since the
/// last event and OFF when it has fallen by `c - b`.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationMap {
    c: Grid<f64>,
    b: Grid<f64>,
}

impl CalibrationMap {
    pub fn new(c: Grid<f64>, b: Grid<f64>) -> Result<Self> {
        check_shape(c.width(), c.height(), b.width(), b.height())?;
        for ((x, y, &cv), &bv) in c.iter_xy().zip(b.as_slice()) {
            if !is_valid_pair(cv, bv) {
                return Err(Error::InvalidCalibration { x, y, c: cv, b: bv });
            }
        }
        Ok(Self { c, b })
    }

    pub fn uniform(width: usize, height: usize, c: f64, b: f64) -> Result<Self> {
        Self::new(
            Grid::filled(width, height, c),
            Grid::filled(width, height, b),
        )
    }

    pub fn width(&self) -> usize {
        self.c.width()
    }

    pub fn height(&self) -> usize {
        self.c.height()
    }

    pub fn c(&self) -> &Grid<f64> {
        &self.c
    }

    pub fn b(&self) -> &Grid<f64> {
        &self.b
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> (f64, f64) {
        (*self.c.get(x, y), *self.b.get(x, y))
    }

    /// Replaces one pixel, keeping the invariants.
    pub fn set(&mut self, x: usize, y: usize, c: f64, b: f64) -> Result<()> {
        if x >= self.width() || y >= self.height() {
            return Err(Error::InvalidParameter(format!(
                "pixel ({x}, {y}) outside {}x{} map",
                self.width(),
                self.height()
            )));
        }
        if !is_valid_pair(c, b) {
            return Err(Error::InvalidCalibration { x, y, c, b });
        }
        *self.c.get_mut(x, y) = c;
        *self.b.get_mut(x, y) = b;
        Ok(())
    }
}

/// `c > 0`, `|b| < c`, both finite.
#[inline]
pub fn is_valid_pair(c: f64, b: f64) -> bool {
    c.is_finite() && b.is_finite() && c > 0.0 && b.abs() < c
}

/// `L = ln(I + 1)` per pixel.
pub fn log_intensity(frame: &IntensityFrame) -> Result<LogFrame> {
    let values = frame.values();
    for (x, y, &value) in values.iter_xy() {
        if !(0.0..=MAX_INTENSITY).contains(&value) {
            return Err(Error::IntensityOutOfRange { x, y, value });
        }
    }
    Ok(LogFrame {
        timestamp: frame.timestamp(),
        values: values.map(|&v| v.ln_1p()),
    })
}

/// `I = clamp(exp(L) - 1, 0, 255)` per pixel.
pub fn exp_intensity(frame: &LogFrame) -> IntensityFrame {
    IntensityFrame {
        timestamp: frame.timestamp,
        values: frame.values.map(|&l| exp_value(l)),
    }
}

#[inline]
pub(crate) fn exp_value(l: f64) -> f64 {
    let v = l.exp_m1();
    if v.is_nan() {
        return 0.0;
    }
    // ln_1p/exp_m1 round trips land a few ulps off integer intensities; snap
    // them back so 8-bit frames survive log -> exp unchanged.
    let r = v.round();
    let v = if (v - r).abs() <= 1e-10 * r.max(1.0) {
        r
    } else {
        v
    };
    v.clamp(0.0, MAX_INTENSITY)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PixelClass {
    Nominal,
    Hot,
    Cold,
    Warm,
    Cool,
}

impl PixelClass {
    pub const ALL: [PixelClass; 5] = [
        PixelClass::Nominal,
        PixelClass::Hot,
        PixelClass::Cold,
        PixelClass::Warm,
        PixelClass::Cool,
    ];

    /// 0 = nominal, 1 = hot, 2 = cold, 3 = warm, 4 = cool.
    pub fn index(self) -> usize {
        match self {
            PixelClass::Nominal => 0,
            PixelClass::Hot => 1,
            PixelClass::Cold => 2,
            PixelClass::Warm => 3,
            PixelClass::Cool => 4,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            PixelClass::Nominal => "nominal",
            PixelClass::Hot => "hot",
            PixelClass::Cold => "cold",
            PixelClass::Warm => "warm",
            PixelClass::Cool => "cool",
        }
    }
}

impl fmt::Display for PixelClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for PixelClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PixelClass::ALL
            .into_iter()
            .find(|c| c.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidParameter(format!("unknown pixel class {s:?}")))
    }
}

/// Reference values for [`classify_pixel`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassifyParams {
    pub nominal_c: f64,
    pub tol_c: f64,
    pub tol_b: f64,
}

impl Default for ClassifyParams {
    fn default() -> Self {
        Self {
            nominal_c: 0.1,
            tol_c: 0.02,
            tol_b: 0.005,
        }
    }
}

/// Bias deviations win over threshold deviations.
pub fn classify_pixel(c: f64, b: f64, params: &ClassifyParams) -> Result<PixelClass> {
    let ClassifyParams {
        nominal_c,
        tol_c,
        tol_b,
    } = *params;
    if !(c > 0.0) || !(nominal_c > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "classification needs c > 0 and nominal_c > 0 (c={c}, nominal_c={nominal_c})"
        )));
    }
    if !(tol_c >= 0.0) || !(tol_b >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "tolerances must be non-negative (tol_c={tol_c}, tol_b={tol_b})"
        )));
    }
    let class = if b < -tol_b {
        PixelClass::Warm
    } else if b > tol_b {
        PixelClass::Cool
    } else if c < nominal_c - tol_c {
        PixelClass::Hot
    } else if c > nominal_c + tol_c {
        PixelClass::Cold
    } else {
        PixelClass::Nominal
    };
    Ok(class)
}

/// Classifies every pixel of a map.
pub fn classify_map(map: &CalibrationMap, params: &ClassifyParams) -> Result<Grid<PixelClass>> {
    let classes = map
        .c()
        .as_slice()
        .iter()
        .zip(map.b().as_slice())
        .map(|(&c, &b)| classify_pixel(c, b, params))
        .collect::<Result<Vec<_>>>()?;
    Grid::from_vec(map.width(), map.height(), classes)
}
