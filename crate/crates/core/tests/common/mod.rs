//! Synthetic scenes shared by the integration tests.
#![allow(dead_code)]

use std::f64::consts::TAU;

use evcalib::calib::RegressionRow;
use evcalib::ingest::Dataset;
use evcalib::simulate::{simulate_events, SimConfig};
use evcalib::{CalibrationMap, Grid, IntensityFrame};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FRAME_DT: f64 = 0.02;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Intensity whose log is `l`, clamped to the 8-bit range.
pub fn from_log(l: f64) -> f64 {
    l.exp_m1().clamp(0.0, 255.0)
}

/// Map with `c ~ U[0.05, 0.3]`, `b ~ U[-0.02, 0.02]`.
pub fn random_map(width: usize, height: usize, seed: u64) -> CalibrationMap {
    let mut r = rng(seed);
    let c = Grid::from_fn(width, height, |_, _| r.gen_range(0.05..0.3));
    let b = Grid::from_fn(width, height, |_, _| r.gen_range(-0.02..0.02));
    CalibrationMap::new(c, b).unwrap()
}

#[derive(Debug, Clone)]
pub struct Texture {
    /// `(amplitude, fx, fy, phase)` per component, frequencies in cycles/pixel.
    waves: Vec<(f64, f64, f64, f64)>,
}

impl Texture {
    pub fn random(components: usize, seed: u64) -> Self {
        let mut r = rng(seed);
        let mut waves: Vec<(f64, f64, f64, f64)> = (0..components)
            .map(|_| {
                let period = r.gen_range(10.0..40.0);
                let angle = r.gen_range(0.0..TAU);
                (
                    r.gen_range(0.5..1.0),
                    angle.cos() / period,
                    angle.sin() / period,
                    r.gen_range(0.0..TAU),
                )
            })
            .collect();
        let total: f64 = waves.iter().map(|w| w.0).sum();
        waves.iter_mut().for_each(|w| w.0 /= total);
        Self { waves }
    }

    /// Value in `[-1, 1]`.
    pub fn at(&self, u: f64, v: f64) -> f64 {
        self.waves
            .iter()
            .map(|&(a, fx, fy, ph)| a * (TAU * (fx * u + fy * v) + ph).sin())
            .sum()
    }
}

/// Log intensity of a texture translating at `velocity` pixels/frame:
/// `mid + amplitude * texture`.
pub fn moving_texture_log(
    width: usize,
    height: usize,
    frames: usize,
    velocity: (f64, f64),
    mid: f64,
    amplitude: f64,
    seed: u64,
) -> Vec<Grid<f64>> {
    let texture = Texture::random(6, seed);
    (0..frames)
        .map(|k| {
            let (du, dv) = (velocity.0 * k as f64, velocity.1 * k as f64);
            Grid::from_fn(width, height, |x, y| {
                mid + amplitude * texture.at(x as f64 - du, y as f64 - dv)
            })
        })
        .collect()
}

pub fn frames_from_log(logs: &[Grid<f64>]) -> Vec<IntensityFrame> {
    logs.iter()
        .enumerate()
        .map(|(k, l)| IntensityFrame::new(k as f64 * FRAME_DT, l.map(|&v| from_log(v))).unwrap())
        .collect()
}

/// Continuous moving texture with log intensity `2.8 + amplitude * texture`.
pub fn moving_texture(
    width: usize,
    height: usize,
    frames: usize,
    velocity: (f64, f64),
    amplitude: f64,
    seed: u64,
) -> Vec<IntensityFrame> {
    frames_from_log(&moving_texture_log(
        width, height, frames, velocity, 2.8, amplitude, seed,
    ))
}

/// Overshoot added to each quantized step so its last crossing fires.
pub const ALIGN_EPS: f64 = 1e-9;

/// Snaps each pixel's log track to its own threshold lattice: between
/// consecutive frames a pixel moves by a whole number of ON steps `c + b` or
/// OFF steps `c - b`, chosen to follow `logs`. Every frame then sits exactly
/// on the pixel's reference level, so per-interval event sums explain the
/// frame differences with no quantization residual.
pub fn threshold_aligned(logs: &[Grid<f64>], map: &CalibrationMap) -> Vec<Grid<f64>> {
    let Some(first) = logs.first() else {
        return Vec::new();
    };
    // Exact lattice level and direction of the last nonzero step per pixel.
    let mut level = first.clone();
    let mut side = first.map(|_| 0.0);
    let mut out = vec![first.clone()];
    for target in &logs[1..] {
        for y in 0..target.height() {
            for x in 0..target.width() {
                let (c, b) = map.at(x, y);
                let q = level.get_mut(x, y);
                let delta = *target.get(x, y) - *q;
                let step = if delta >= 0.0 {
                    (delta / (c + b)).round() * (c + b)
                } else {
                    -(-delta / (c - b)).round() * (c - b)
                };
                if step != 0.0 {
                    *q += step;
                    *side.get_mut(x, y) = step.signum();
                }
            }
        }
        out.push(Grid::from_fn(first.width(), first.height(), |x, y| {
            *level.get(x, y) + ALIGN_EPS * *side.get(x, y)
        }));
    }
    out
}

/// Threshold-aligned version of [`moving_texture`] for `map`.
pub fn aligned_texture(
    map: &CalibrationMap,
    frames: usize,
    velocity: (f64, f64),
    amplitude: f64,
    seed: u64,
) -> Vec<IntensityFrame> {
    let logs = moving_texture_log(
        map.width(),
        map.height(),
        frames,
        velocity,
        2.8,
        amplitude,
        seed,
    );
    frames_from_log(&threshold_aligned(&logs, map))
}

/// Every pixel follows the same sum of sinusoids in time, each pixel with its
/// own random phases.
pub fn equal_texture(
    width: usize,
    height: usize,
    frames: usize,
    amplitude: f64,
    seed: u64,
) -> Vec<IntensityFrame> {
    let mut r = rng(seed);
    let periods = [23.0, 37.0, 53.0, 71.0];
    let weights = [0.4, 0.3, 0.2, 0.1];
    let phases: Vec<[f64; 4]> = (0..width * height)
        .map(|_| std::array::from_fn(|_| r.gen_range(0.0..TAU)))
        .collect();
    (0..frames)
        .map(|k| {
            let t = k as f64;
            let values = Grid::from_fn(width, height, |x, y| {
                let ph = &phases[y * width + x];
                let s: f64 = (0..4)
                    .map(|j| weights[j] * (TAU * t / periods[j] + ph[j]).sin())
                    .sum();
                from_log(4.0 + amplitude * s)
            });
            IntensityFrame::new(t * FRAME_DT, values).unwrap()
        })
        .collect()
}

pub fn simulate_dataset(frames: Vec<IntensityFrame>, map: &CalibrationMap) -> Dataset {
    let stream = simulate_events(&frames, map, &SimConfig::default()).unwrap();
    Dataset::new(stream, frames).unwrap()
}

/// Log intensity of a sinusoidal grating of `wavelength` pixels along
/// `angle`, drifting by one wavelength every `period` frames.
#[allow(clippy::too_many_arguments)]
pub fn drifting_grating_log(
    width: usize,
    height: usize,
    frames: usize,
    wavelength: f64,
    angle: f64,
    period: f64,
    mid: f64,
    amplitude: f64,
) -> Vec<Grid<f64>> {
    let (ca, sa) = (angle.cos(), angle.sin());
    (0..frames)
        .map(|k| {
            let shift = k as f64 / period;
            Grid::from_fn(width, height, |x, y| {
                let s = (ca * x as f64 + sa * y as f64) / wavelength - shift;
                mid + amplitude * (TAU * s).sin()
            })
        })
        .collect()
}

/// True map shared by the round-trip scenarios.
pub fn reference_map() -> CalibrationMap {
    random_map(64, 64, 2024)
}

/// 200-frame drifting grating, threshold-aligned to `map`: the noise-free
/// scene for the offline and online round trips.
pub fn reference_scene(map: &CalibrationMap) -> Vec<IntensityFrame> {
    let logs = drifting_grating_log(map.width(), map.height(), 200, 11.0, 0.6, 7.0, 2.8, 0.35);
    frames_from_log(&threshold_aligned(&logs, map))
}

/// Spearman rank correlation (no tie correction).
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&i, &j| v[i].total_cmp(&v[j]));
        let mut r = vec![0.0; v.len()];
        for (k, &i) in idx.iter().enumerate() {
            r[i] = k as f64;
        }
        r
    }
    let (ra, rb) = (ranks(a), ranks(b));
    let m = (a.len() as f64 - 1.0) / 2.0;
    let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - m) * (y - m)).sum();
    let var: f64 = ra.iter().map(|x| (x - m) * (x - m)).sum();
    cov / var
}

/// Least squares by explicit normal equations and Gaussian elimination with
/// partial pivoting. Returns `None` for a singular system.
pub fn ols_oracle(rows: &[RegressionRow]) -> Option<(f64, f64)> {
    let mut m = [[0.0f64; 3]; 2];
    for r in rows {
        let a = [r.sum_sigma as f64, r.count as f64];
        for i in 0..2 {
            for j in 0..2 {
                m[i][j] += a[i] * a[j];
            }
            m[i][2] += a[i] * r.delta_log;
        }
    }
    if m[1][0].abs() > m[0][0].abs() {
        m.swap(0, 1);
    }
    if m[0][0] == 0.0 {
        return None;
    }
    let f = m[1][0] / m[0][0];
    let pivot = m[0];
    for (dst, src) in m[1].iter_mut().zip(pivot) {
        *dst -= f * src;
    }
    if m[1][1] == 0.0 {
        return None;
    }
    let b = m[1][2] / m[1][1];
    let c = (m[0][2] - m[0][1] * b) / m[0][0];
    Some((c, b))
}

/// SSIM by direct summation over every 11x11 window with 2D Gaussian
/// weights.
pub fn ssim_direct(a: &[f64], b: &[f64], width: usize, height: usize) -> f64 {
    let k = 11;
    let mut w = vec![0.0; k * k];
    for i in 0..k {
        for j in 0..k {
            let (di, dj) = (i as f64 - 5.0, j as f64 - 5.0);
            w[i * k + j] = (-(di * di + dj * dj) / (2.0 * 1.5 * 1.5)).exp();
        }
    }
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= total);
    let (c1, c2) = ((0.01f64 * 255.0).powi(2), (0.03f64 * 255.0).powi(2));
    let mut acc = 0.0;
    let mut n = 0usize;
    for y0 in 0..=height - k {
        for x0 in 0..=width - k {
            let (mut mx, mut my, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for i in 0..k {
                for j in 0..k {
                    let p = (y0 + i) * width + x0 + j;
                    let wt = w[i * k + j];
                    mx += wt * a[p];
                    my += wt * b[p];
                }
            }
            for i in 0..k {
                for j in 0..k {
                    let p = (y0 + i) * width + x0 + j;
                    let wt = w[i * k + j];
                    sxx += wt * (a[p] - mx) * (a[p] - mx);
                    syy += wt * (b[p] - my) * (b[p] - my);
                    sxy += wt * (a[p] - mx) * (b[p] - my);
                }
            }
            acc += ((2.0 * mx * my + c1) * (2.0 * sxy + c2))
                / ((mx * mx + my * my + c1) * (sxx + syy + c2));
            n += 1;
        }
    }
    acc / n as f64
}

/// Pairs of 8-bit images with SSIM values computed by an external reference
/// implementation: `(width, height, a, b, ssim)`.
/// `(width, height, a, b, ssim)`.
pub type SsimCase = (usize, usize, Vec<u8>, Vec<u8>, f64);

pub fn ssim_reference_pairs() -> Vec<SsimCase> {
    let text = include_str!("../data/ssim_reference.txt");
    let mut lines = text.lines().filter(|l| !l.starts_with('#'));
    let mut out = Vec::new();
    while let Some(header) = lines.next() {
        let f: Vec<&str> = header.split_whitespace().collect();
        let (w, h, s) = (
            f[1].parse().unwrap(),
            f[2].parse().unwrap(),
            f[3].parse().unwrap(),
        );
        let mut pixels = || -> Vec<u8> {
            lines
                .next()
                .unwrap()
                .split_whitespace()
                .map(|v| v.parse().unwrap())
                .collect()
        };
        let (a, b) = (pixels(), pixels());
        out.push((w, h, a, b, s));
    }
    out
}
