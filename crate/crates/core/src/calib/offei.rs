use super::{solve_pixel_ols, CalibrationReport, FlaggedPixel, OlsParams, RegressionRow};
use crate::error::{Error, Result};
use crate::ingest::Dataset;
use crate::model::{log_intensity, CalibrationMap, Grid};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OffEiConfig {
    /// Frames per regression interval.
    pub d: usize,
    pub fallback_c: f64,
    pub fallback_b: f64,
    pub min_rows: usize,
    pub min_events: u64,
}

impl Default for OffEiConfig {
    fn default() -> Self {
        Self {
            d: 40,
            fallback_c: 0.1,
            fallback_b: 0.0,
            min_rows: 2,
            min_events: 10,
        }
    }
}

impl OffEiConfig {
    pub fn ols_params(&self) -> OlsParams {
        OlsParams {
            fallback_c: self.fallback_c,
            fallback_b: self.fallback_b,
            min_rows: self.min_rows,
            min_events: self.min_events,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.d < 1 {
            return Err(Error::InvalidParameter("d must be >= 1".into()));
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
}

/// Rows for the `n` intervals `(T[k + j·d], T[k + (j+1)·d]]`, one sequence
/// per pixel.
///
/// An event stamped exactly on a boundary belongs to the interval that ends
/// there.
pub fn build_rows(
    dataset: &Dataset,
    k: usize,
    d: usize,
    n: usize,
) -> Result<Grid<Vec<RegressionRow>>> {
    if d < 1 || n < 1 {
        return Err(Error::InvalidParameter(format!(
            "need d >= 1 and n >= 1 (d={d}, n={n})"
        )));
    }
    let frames = dataset.frames();
    let end = k.saturating_add(n.saturating_mul(d));
    if end >= frames.len() {
        return Err(Error::FrameIndexOutOfRange {
            start: k,
            end,
            count: frames.len(),
        });
    }
    let (width, height) = (dataset.width(), dataset.height());
    let pixels = width * height;

    let boundaries: Vec<usize> = (0..=n).map(|j| k + j * d).collect();
    let times: Vec<f64> = boundaries.iter().map(|&i| frames[i].timestamp()).collect();
    let logs = boundaries
        .iter()
        .map(|&i| log_intensity(&frames[i]))
        .collect::<Result<Vec<_>>>()?;

    // interval-major accumulation, transposed into per-pixel rows at the end
    let mut sums = vec![0i64; n * pixels];
    let mut counts = vec![0u64; n * pixels];
    let mut interval = 0usize;
    for e in dataset.stream().window(times[0], times[n]) {
        while e.t > times[interval + 1] {
            interval += 1;
        }
        let p = e.y as usize * width + e.x as usize;
        sums[interval * pixels + p] += e.polarity.sign();
        counts[interval * pixels + p] += 1;
    }

    let rows = Grid::from_fn(width, height, |x, y| {
        let p = y * width + x;
        (0..n)
            .map(|j| {
                let dl = logs[j + 1].values.as_slice()[p] - logs[j].values.as_slice()[p];
                RegressionRow::new(sums[j * pixels + p], counts[j * pixels + p], dl)
            })
            .collect()
    });
    Ok(rows)
}

/// Offline hybrid calibration over the whole dataset.
pub fn calibrate_offei(
    dataset: &Dataset,
    cfg: &OffEiConfig,
) -> Result<(CalibrationMap, CalibrationReport)> {
    cfg.validate()?;
    let frames = dataset.frames().len();
    if frames < cfg.d + 1 {
        return Err(Error::TooFewFrames {
            required: cfg.d + 1,
            actual: frames,
        });
    }
    let n = (frames - 1) / cfg.d;
    let rows = build_rows(dataset, 0, cfg.d, n)?;
    Ok(solve_grid(&rows, &cfg.ols_params()))
}

pub(crate) fn solve_grid(
    rows: &Grid<Vec<RegressionRow>>,
    params: &OlsParams,
) -> (CalibrationMap, CalibrationReport) {
    let (width, height) = (rows.width(), rows.height());
    let mut c = Vec::with_capacity(rows.len());
    let mut b = Vec::with_capacity(rows.len());
    let mut residuals = Vec::with_capacity(rows.len());
    let mut degenerate = Vec::new();
    for (x, y, pixel_rows) in rows.iter_xy() {
        let sol = solve_pixel_ols(pixel_rows, params);
        if let Some(reason) = sol.degenerate {
            degenerate.push(FlaggedPixel { x, y, reason });
        }
        c.push(sol.c);
        b.push(sol.b);
        residuals.push(sol.residual_norm);
    }
    let grid = |v| Grid::from_vec(width, height, v).expect("grid sized from rows");
    let map = CalibrationMap::new(grid(c), grid(b)).expect("solver only emits valid pairs");
    let report = CalibrationReport {
        pixels: width * height,
        degenerate,
        residuals: grid(residuals),
    };
    (map, report)
}
