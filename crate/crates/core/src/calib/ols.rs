use super::{DegenerateReason, RegressionRow};
use crate::model::is_valid_pair;

/// Normal matrices with a larger condition number are treated as singular.
pub const MAX_CONDITION: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OlsParams {
    pub fallback_c: f64,
    pub fallback_b: f64,
    pub min_rows: usize,
    pub min_events: u64,
}

impl Default for OlsParams {
    fn default() -> Self {
        Self {
            fallback_c: 0.1,
            fallback_b: 0.0,
            min_rows: 2,
            min_events: 10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OlsSolution {
    pub c: f64,
    pub b: f64,
    /// `None` when the fit was accepted.
    pub degenerate: Option<DegenerateReason>,
    /// `‖A x - z‖` of the accepted fit, NaN otherwise.
    pub residual_norm: f64,
}

impl OlsSolution {
    pub fn is_degenerate(&self) -> bool {
        self.degenerate.is_some()
    }

    fn fallback(params: &OlsParams, reason: DegenerateReason) -> Self {
        Self {
            c: params.fallback_c,
            b: params.fallback_b,
            degenerate: Some(reason),
            residual_norm: f64::NAN,
        }
    }
}

/// Least-squares `[c, b]` for `Σ (sum_sigma·c + count·b - delta_log)²`.
///
/// Solves the 2x2 normal equations. The matrix entries are sums of integer
/// products and therefore exact in `f64`. Every failure mode returns the
/// fallback pair with a reason instead of an error.
pub fn solve_pixel_ols(rows: &[RegressionRow], params: &OlsParams) -> OlsSolution {
    let mut usable = 0usize;
    let mut events = 0u64;
    let (mut saa, mut sab, mut sbb) = (0.0f64, 0.0f64, 0.0f64);
    let (mut ra, mut rb) = (0.0f64, 0.0f64);
    for row in rows {
        if row.count == 0 {
            continue;
        }
        usable += 1;
        events += row.count;
        let s = row.sum_sigma as f64;
        let n = row.count as f64;
        saa += s * s;
        sab += s * n;
        sbb += n * n;
        ra += s * row.delta_log;
        rb += n * row.delta_log;
    }
    if events < params.min_events {
        return OlsSolution::fallback(params, DegenerateReason::TooFewEvents);
    }
    if usable < params.min_rows {
        return OlsSolution::fallback(params, DegenerateReason::TooFewRows);
    }

    let det = saa * sbb - sab * sab;
    let trace = saa + sbb;
    let spread = ((saa - sbb) * (saa - sbb) + 4.0 * sab * sab).sqrt();
    let lambda_max = 0.5 * (trace + spread);
    // det / lambda_max avoids the cancellation in (trace - spread)
    let lambda_min = if lambda_max > 0.0 {
        det / lambda_max
    } else {
        0.0
    };
    if !(lambda_min > 0.0) || lambda_max / lambda_min > MAX_CONDITION {
        return OlsSolution::fallback(params, DegenerateReason::IllConditioned);
    }

    let c = (sbb * ra - sab * rb) / det;
    let b = (saa * rb - sab * ra) / det;
    if !(c > 0.0) {
        return OlsSolution::fallback(params, DegenerateReason::NonPositiveThreshold);
    }
    if !is_valid_pair(c, b) {
        return OlsSolution::fallback(params, DegenerateReason::EmptyTriggerBand);
    }
    let residual_norm = rows
        .iter()
        .map(|r| {
            let e = r.sum_sigma as f64 * c + r.count as f64 * b - r.delta_log;
            e * e
        })
        .sum::<f64>()
        .sqrt();
    OlsSolution {
        c,
        b,
        degenerate: None,
        residual_norm,
    }
}
