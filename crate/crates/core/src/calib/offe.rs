//! Event-only calibration.
//!
//! For each pixel the points `(n_j, S_j)`, with `n_j = j` the number of
//! events so far and `S_j` the running polarity sum, are fitted with a line
//! `S = m·n + d`. Assuming the scene returns to its mean brightness and
//! excites all pixels alike, `c = median(r) / r` where `r` is the RMS
//! residual about the line, and `b = -c·m`.

use super::{CalibrationReport, DegenerateReason, FlaggedPixel};
use crate::error::{Error, Result};
use crate::model::{is_valid_pair, CalibrationMap, EventStream, Grid};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OffEConfig {
    pub min_events: usize,
    pub fallback_c: f64,
    pub fallback_b: f64,
    /// Lower bound on the residual, which is a divisor.
    pub r_floor: f64,
}

impl Default for OffEConfig {
    fn default() -> Self {
        Self {
            min_events: 10,
            fallback_c: 0.1,
            fallback_b: 0.0,
            r_floor: 1e-6,
        }
    }
}

/// Raw per-pixel fit, before the map invariants are enforced.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OffEEstimate {
    pub events: usize,
    pub slope: f64,
    pub intercept: f64,
    /// RMS residual after flooring.
    pub residual: f64,
    pub floored: bool,
    pub c: f64,
    pub b: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OffEReport {
    pub summary: CalibrationReport,
    pub median_residual: f64,
    /// Pixels whose residual hit the floor.
    pub floored: Vec<(usize, usize)>,
    /// `None` for pixels with too few events.
    pub estimates: Grid<Option<OffEEstimate>>,
}

impl OffEReport {
    pub fn to_text(&self) -> String {
        let mut out = format!(
            "# median_residual {}\n# floored {}\n",
            self.median_residual,
            self.floored.len()
        );
        out.push_str(&self.summary.to_text());
        for &(x, y) in &self.floored {
            out.push_str(&format!("# floored_pixel {x} {y}\n"));
        }
        out
    }
}

/// Least-squares line through `(j, S_j)`, `j = 1..=N`; returns
/// `(slope, intercept, rms_residual)`.
pub(crate) fn fit_cumulative_polarity(signs: &[i8]) -> (f64, f64, f64) {
    let n = signs.len() as f64;
    let mean_x = (n + 1.0) / 2.0;
    let mut cum = 0i64;
    let mut sum_s = 0.0;
    for &s in signs {
        cum += s as i64;
        sum_s += cum as f64;
    }
    let mean_s = sum_s / n;
    let sxx = n * (n * n - 1.0) / 12.0;
    let mut sxy = 0.0;
    cum = 0;
    for (j, &s) in signs.iter().enumerate() {
        cum += s as i64;
        sxy += ((j + 1) as f64 - mean_x) * (cum as f64 - mean_s);
    }
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercept = mean_s - slope * mean_x;
    let mut sse = 0.0;
    cum = 0;
    for (j, &s) in signs.iter().enumerate() {
        cum += s as i64;
        let e = cum as f64 - (slope * (j + 1) as f64 + intercept);
        sse += e * e;
    }
    (slope, intercept, (sse / n).sqrt())
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

pub fn calibrate_offe(
    stream: &EventStream,
    cfg: &OffEConfig,
) -> Result<(CalibrationMap, OffEReport)> {
    if cfg.min_events < 2 {
        return Err(Error::InvalidParameter("min_events must be >= 2".into()));
    }
    if !(cfg.r_floor > 0.0) {
        return Err(Error::InvalidParameter("r_floor must be > 0".into()));
    }
    if !is_valid_pair(cfg.fallback_c, cfg.fallback_b) {
        return Err(Error::InvalidParameter(format!(
            "fallback (c={}, b={}) must satisfy c > 0 and |b| < c",
            cfg.fallback_c, cfg.fallback_b
        )));
    }
    let (width, height) = (stream.width(), stream.height());
    let mut signs: Vec<Vec<i8>> = vec![Vec::new(); width * height];
    for e in stream.events() {
        signs[e.y as usize * width + e.x as usize].push(e.polarity.sign() as i8);
    }

    let mut fits: Vec<Option<(f64, f64, f64, bool)>> = Vec::with_capacity(signs.len());
    for s in &signs {
        if s.len() < cfg.min_events {
            fits.push(None);
            continue;
        }
        let (slope, intercept, r) = fit_cumulative_polarity(s);
        let floored = !(r >= cfg.r_floor);
        fits.push(Some((slope, intercept, r.max(cfg.r_floor), floored)));
    }
    let mut residuals: Vec<f64> = fits.iter().flatten().map(|f| f.2).collect();
    if residuals.is_empty() {
        return Err(Error::AllPixelsDegenerate);
    }
    let median_residual = median(&mut residuals);

    let mut c = Vec::with_capacity(fits.len());
    let mut b = Vec::with_capacity(fits.len());
    let mut rms = Vec::with_capacity(fits.len());
    let mut estimates = Vec::with_capacity(fits.len());
    let mut degenerate = Vec::new();
    let mut floored = Vec::new();
    for (p, fit) in fits.iter().enumerate() {
        let (x, y) = (p % width, p / width);
        let Some(&(slope, intercept, residual, was_floored)) = fit.as_ref() else {
            degenerate.push(FlaggedPixel {
                x,
                y,
                reason: DegenerateReason::TooFewEvents,
            });
            c.push(cfg.fallback_c);
            b.push(cfg.fallback_b);
            rms.push(f64::NAN);
            estimates.push(None);
            continue;
        };
        let pc = median_residual / residual;
        let pb = -pc * slope;
        if was_floored {
            floored.push((x, y));
        }
        estimates.push(Some(OffEEstimate {
            events: signs[p].len(),
            slope,
            intercept,
            residual,
            floored: was_floored,
            c: pc,
            b: pb,
        }));
        rms.push(residual);
        if is_valid_pair(pc, pb) {
            c.push(pc);
            b.push(pb);
        } else {
            // single-polarity pixels have |slope| = 1, so |b| = c
            degenerate.push(FlaggedPixel {
                x,
                y,
                reason: DegenerateReason::EmptyTriggerBand,
            });
            c.push(cfg.fallback_c);
            b.push(cfg.fallback_b);
        }
    }

    let grid = |v| Grid::from_vec(width, height, v).expect("sized from stream");
    let map = CalibrationMap::new(grid(c), grid(b))?;
    let report = OffEReport {
        summary: CalibrationReport {
            pixels: width * height,
            degenerate,
            residuals: grid(rms),
        },
        median_residual,
        floored,
        estimates: Grid::from_vec(width, height, estimates).expect("sized from stream"),
    };
    Ok((map, report))
}
