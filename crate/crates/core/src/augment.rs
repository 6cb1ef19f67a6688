//! Time-series augmentations on a single instance laid out `dims × length`.

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::seed::{self, Rng};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AugmentError {
    #[error("unknown augmentation kind {0:?}")]
    UnknownKind(String),
    #[error("invalid parameter for {kind}: {reason}")]
    InvalidParam { kind: &'static str, reason: String },
}

fn timesteps(x: &[f64], dims: usize) -> usize {
    assert!(dims > 0 && x.len() % dims == 0, "buffer is not dims × length");
    x.len() / dims
}

pub fn jitter(x: &[f64], dims: usize, sigma: f64, rng: &mut Rng) -> Vec<f64> {
    timesteps(x, dims);
    if sigma == 0.0 {
        return x.to_vec();
    }
    let noise = Normal::new(0.0, sigma).expect("sigma is finite and non-negative");
    x.iter().map(|v| v + noise.sample(rng)).collect()
}

/// Start offsets of `n` contiguous chunks covering `0..len`, sizes differing
/// by at most one.
fn chunk_bounds(len: usize, n: usize) -> Vec<(usize, usize)> {
    let (base, extra) = (len / n, len % n);
    let mut start = 0;
    (0..n)
        .map(|i| {
            let size = base + usize::from(i < extra);
            let b = (start, start + size);
            start += size;
            b
        })
        .collect()
}

pub fn permute_segments(x: &[f64], dims: usize, n_segments: usize, rng: &mut Rng) -> Vec<f64> {
    let len = timesteps(x, dims);
    let chunks = chunk_bounds(len, n_segments.clamp(1, len));
    let mut order: Vec<usize> = (0..chunks.len()).collect();
    order.shuffle(rng);
    let mut out = Vec::with_capacity(x.len());
    for channel in x.chunks(len) {
        for &k in &order {
            let (s, e) = chunks[k];
            out.extend_from_slice(&channel[s..e]);
        }
    }
    out
}

/// Natural cubic spline through `(xs[k], ys[k])` with strictly increasing
/// knots.
#[derive(Clone, Debug)]
pub struct CubicSpline {
    xs: Vec<f64>,
    ys: Vec<f64>,
    m: Vec<f64>,
}

impl CubicSpline {
    pub fn natural(xs: &[f64], ys: &[f64]) -> Self {
        let n = xs.len();
        assert!(n >= 2 && ys.len() == n, "spline needs at least two knots");
        let mut m = vec![0.0; n];
        if n > 2 {
            // Tridiagonal system for the interior second derivatives.
            let k = n - 2;
            let h: Vec<f64> = xs.windows(2).map(|w| w[1] - w[0]).collect();
            let mut diag = vec![0.0; k];
            let mut upper = vec![0.0; k];
            let mut rhs = vec![0.0; k];
            for i in 0..k {
                diag[i] = 2.0 * (h[i] + h[i + 1]);
                upper[i] = h[i + 1];
                rhs[i] = 6.0 * ((ys[i + 2] - ys[i + 1]) / h[i + 1] - (ys[i + 1] - ys[i]) / h[i]);
            }
            for i in 1..k {
                let w = h[i] / diag[i - 1];
                diag[i] -= w * upper[i - 1];
                rhs[i] -= w * rhs[i - 1];
            }
            m[k] = rhs[k - 1] / diag[k - 1];
            for i in (0..k - 1).rev() {
                m[i + 1] = (rhs[i] - upper[i] * m[i + 2]) / diag[i];
            }
        }
        Self {
            xs: xs.to_vec(),
            ys: ys.to_vec(),
            m,
        }
    }

    pub fn eval(&self, t: f64) -> f64 {
        let n = self.xs.len();
        let i = match self.xs.partition_point(|&k| k <= t) {
            0 => 0,
            p => (p - 1).min(n - 2),
        };
        let (x0, x1) = (self.xs[i], self.xs[i + 1]);
        let h = x1 - x0;
        let (a, b) = ((x1 - t) / h, (t - x0) / h);
        a * self.ys[i]
            + b * self.ys[i + 1]
            + ((a * a * a - a) * self.m[i] + (b * b * b - b) * self.m[i + 1]) * h * h / 6.0
    }
}

pub fn magnitude_warp(x: &[f64], dims: usize, sigma: f64, knots: usize, rng: &mut Rng) -> Vec<f64> {
    let len = timesteps(x, dims);
    if sigma == 0.0 {
        return x.to_vec();
    }
    let dist = Normal::new(1.0, sigma).expect("sigma is finite and non-negative");
    let knots = knots.max(2);
    let span = (len.max(2) - 1) as f64;
    let xs: Vec<f64> = (0..knots).map(|k| span * k as f64 / (knots - 1) as f64).collect();
    let mut out = Vec::with_capacity(x.len());
    for channel in x.chunks(len) {
        let ys: Vec<f64> = (0..knots).map(|_| dist.sample(rng)).collect();
        let spline = CubicSpline::natural(&xs, &ys);
        out.extend(channel.iter().enumerate().map(|(t, v)| v * spline.eval(t as f64)));
    }
    out
}

/// Linear resampling of `x` onto `m` equally spaced points spanning the
/// same interval.
pub fn resample_linear(x: &[f64], m: usize) -> Vec<f64> {
    let n = x.len();
    if n == 1 || m == 1 {
        return vec![x[0]; m];
    }
    if n == m {
        return x.to_vec();
    }
    (0..m)
        .map(|i| {
            let p = i as f64 * (n - 1) as f64 / (m - 1) as f64;
            let j = (p.floor() as usize).min(n - 2);
            let frac = p - j as f64;
            x[j] + (x[j + 1] - x[j]) * frac
        })
        .collect()
}

pub fn window_warp(x: &[f64], dims: usize, window_ratio: f64, scales: &[f64], rng: &mut Rng) -> Vec<f64> {
    let len = timesteps(x, dims);
    let w = ((window_ratio * len as f64).floor() as usize).clamp(1, len);
    let start = rng.random_range(0..=len - w);
    let scale = scales[rng.random_range(0..scales.len())];
    let warped_w = ((w as f64 * scale).round() as usize).max(1);
    let mut out = Vec::with_capacity(x.len());
    for channel in x.chunks(len) {
        let mut joined = Vec::with_capacity(len - w + warped_w);
        joined.extend_from_slice(&channel[..start]);
        joined.extend(resample_linear(&channel[start..start + w], warped_w));
        joined.extend_from_slice(&channel[start + w..]);
        out.extend(resample_linear(&joined, len));
    }
    out
}

pub fn crop_resize(x: &[f64], dims: usize, crop_ratio: f64, rng: &mut Rng) -> Vec<f64> {
    let len = timesteps(x, dims);
    let keep = ((crop_ratio * len as f64).floor() as usize).clamp(1, len);
    if keep == len {
        return x.to_vec();
    }
    let start = rng.random_range(0..=len - keep);
    x.chunks(len)
        .flat_map(|ch| resample_linear(&ch[start..start + keep], len))
        .collect()
}

pub fn flip(x: &[f64], dims: usize) -> Vec<f64> {
    let len = timesteps(x, dims);
    x.chunks(len).flat_map(|ch| ch.iter().rev().copied()).collect()
}

pub fn time_mask(x: &[f64], dims: usize, mask_ratio: f64, rng: &mut Rng) -> Vec<f64> {
    let len = timesteps(x, dims);
    let w = ((mask_ratio * len as f64).floor() as usize).min(len);
    let mut out = x.to_vec();
    if w == 0 {
        return out;
    }
    let start = rng.random_range(0..=len - w);
    for ch in out.chunks_mut(len) {
        ch[start..start + w].fill(0.0);
    }
    out
}

/// A validated augmentation with its parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "AugmentationConfig", into = "AugmentationConfig")]
pub enum Augmentation {
    Jitter { sigma: f64 },
    Permutation { n_segments: usize },
    MagnitudeWarp { sigma: f64, knots: usize },
    WindowWarp { window_ratio: f64, scales: Vec<f64> },
    Resize { crop_ratio: f64 },
    Flip,
    TimeMask { mask_ratio: f64 },
}

impl Augmentation {
    pub const KINDS: [&'static str; 7] = [
        "jitter",
        "permutation",
        "magnitude_warp",
        "window_warp",
        "resize",
        "flip",
        "time_mask",
    ];

    pub fn kind(&self) -> &'static str {
        match self {
            Self::Jitter { .. } => "jitter",
            Self::Permutation { .. } => "permutation",
            Self::MagnitudeWarp { .. } => "magnitude_warp",
            Self::WindowWarp { .. } => "window_warp",
            Self::Resize { .. } => "resize",
            Self::Flip => "flip",
            Self::TimeMask { .. } => "time_mask",
        }
    }

    /// Default parameters for a kind name.
    pub fn default_for(kind: &str) -> Result<Self, AugmentError> {
        AugmentationConfig {
            kind: kind.to_string(),
            ..Default::default()
        }
        .resolve()
    }

    pub fn apply(&self, x: &[f64], dims: usize, rng: &mut Rng) -> Vec<f64> {
        match self {
            Self::Jitter { sigma } => jitter(x, dims, *sigma, rng),
            Self::Permutation { n_segments } => permute_segments(x, dims, *n_segments, rng),
            Self::MagnitudeWarp { sigma, knots } => magnitude_warp(x, dims, *sigma, *knots, rng),
            Self::WindowWarp { window_ratio, scales } => window_warp(x, dims, *window_ratio, scales, rng),
            Self::Resize { crop_ratio } => crop_resize(x, dims, *crop_ratio, rng),
            Self::Flip => flip(x, dims),
            Self::TimeMask { mask_ratio } => time_mask(x, dims, *mask_ratio, rng),
        }
    }
}

/// Augmentation plus the seed of its random stream.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AugmentationSpec {
    pub augmentation: Augmentation,
    pub seed: u64,
}

impl AugmentationSpec {
    pub fn apply(&self, x: &[f64], dims: usize) -> Vec<f64> {
        self.augmentation.apply(x, dims, &mut seed::rng(self.seed))
    }
}

/// Config-file form of an augmentation: a kind tag plus optional parameters.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentationConfig {
    pub kind: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_segments: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub knots: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub window_ratio: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scales: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub crop_ratio: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mask_ratio: Option<f64>,
}

fn check(kind: &'static str, ok: bool, reason: impl FnOnce() -> String) -> Result<(), AugmentError> {
    if ok {
        Ok(())
    } else {
        Err(AugmentError::InvalidParam { kind, reason: reason() })
    }
}

impl AugmentationConfig {
    pub fn resolve(&self) -> Result<Augmentation, AugmentError> {
        let aug = match self.kind.to_ascii_lowercase().replace('-', "_").as_str() {
            "jitter" => {
                let sigma = self.sigma.unwrap_or(0.03);
                check("jitter", sigma.is_finite() && sigma >= 0.0, || format!("sigma {sigma}"))?;
                Augmentation::Jitter { sigma }
            }
            "permutation" => {
                let n_segments = self.n_segments.unwrap_or(5);
                check("permutation", n_segments >= 1, || "n_segments must be ≥ 1".into())?;
                Augmentation::Permutation { n_segments }
            }
            "magnitude_warp" => {
                let sigma = self.sigma.unwrap_or(0.2);
                let knots = self.knots.unwrap_or(4);
                check("magnitude_warp", sigma.is_finite() && sigma >= 0.0, || format!("sigma {sigma}"))?;
                check("magnitude_warp", knots >= 2, || format!("knots {knots}"))?;
                Augmentation::MagnitudeWarp { sigma, knots }
            }
            "window_warp" => {
                let window_ratio = self.window_ratio.unwrap_or(0.1);
                let scales = self.scales.clone().unwrap_or_else(|| vec![0.5, 2.0]);
                check("window_warp", window_ratio > 0.0 && window_ratio < 1.0, || {
                    format!("window_ratio {window_ratio}")
                })?;
                check("window_warp", !scales.is_empty() && scales.iter().all(|s| *s > 0.0 && s.is_finite()), || {
                    format!("scales {scales:?}")
                })?;
                Augmentation::WindowWarp { window_ratio, scales }
            }
            "resize" | "crop_resize" => {
                let crop_ratio = self.crop_ratio.unwrap_or(0.9);
                check("resize", crop_ratio > 0.0 && crop_ratio <= 1.0, || format!("crop_ratio {crop_ratio}"))?;
                Augmentation::Resize { crop_ratio }
            }
            "flip" => Augmentation::Flip,
            "time_mask" => {
                let mask_ratio = self.mask_ratio.unwrap_or(0.1);
                check("time_mask", (0.0..1.0).contains(&mask_ratio), || format!("mask_ratio {mask_ratio}"))?;
                Augmentation::TimeMask { mask_ratio }
            }
            _ => return Err(AugmentError::UnknownKind(self.kind.clone())),
        };
        Ok(aug)
    }
}

impl TryFrom<AugmentationConfig> for Augmentation {
    type Error = AugmentError;

    fn try_from(cfg: AugmentationConfig) -> Result<Self, Self::Error> {
        cfg.resolve()
    }
}

impl From<Augmentation> for AugmentationConfig {
    fn from(aug: Augmentation) -> Self {
        let mut cfg = AugmentationConfig {
            kind: aug.kind().to_string(),
            ..Default::default()
        };
        match aug {
            Augmentation::Jitter { sigma } => cfg.sigma = Some(sigma),
            Augmentation::Permutation { n_segments } => cfg.n_segments = Some(n_segments),
            Augmentation::MagnitudeWarp { sigma, knots } => {
                cfg.sigma = Some(sigma);
                cfg.knots = Some(knots);
            }
            Augmentation::WindowWarp { window_ratio, scales } => {
                cfg.window_ratio = Some(window_ratio);
                cfg.scales = Some(scales);
            }
            Augmentation::Resize { crop_ratio } => cfg.crop_ratio = Some(crop_ratio),
            Augmentation::Flip => {}
            Augmentation::TimeMask { mask_ratio } => cfg.mask_ratio = Some(mask_ratio),
        }
        cfg
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_knot_natural_spline() {
        let s = CubicSpline::natural(&[0.0, 1.0, 2.0], &[0.0, 1.0, 0.0]);
        assert!((s.eval(0.5) - 0.6875).abs() < 1e-12);
        assert!((s.eval(1.5) - 0.6875).abs() < 1e-12);
    }

    #[test]
    fn two_knot_spline_is_linear() {
        let s = CubicSpline::natural(&[0.0, 4.0], &[1.0, 3.0]);
        assert!((s.eval(1.0) - 1.5).abs() < 1e-12);
    }

    #[test]
    fn chunks_cover_range() {
        assert_eq!(chunk_bounds(7, 3), vec![(0, 3), (3, 5), (5, 7)]);
    }

    #[test]
    fn resample_identity_and_endpoints() {
        let x = [1.0, 4.0, 2.0];
        assert_eq!(resample_linear(&x, 3), x.to_vec());
        let up = resample_linear(&x, 5);
        assert_eq!(up, vec![1.0, 2.5, 4.0, 3.0, 2.0]);
    }

    #[test]
    fn config_round_trip() {
        for kind in Augmentation::KINDS {
            let aug = Augmentation::default_for(kind).unwrap();
            let json = serde_json::to_string(&aug).unwrap();
            let back: Augmentation = serde_json::from_str(&json).unwrap();
            assert_eq!(back, aug);
        }
    }

    #[test]
    fn rejects_unknown_kind_and_bad_params() {
        assert_eq!(
            Augmentation::default_for("rotate"),
            Err(AugmentError::UnknownKind("rotate".into()))
        );
        let bad = AugmentationConfig {
            kind: "time_mask".into(),
            mask_ratio: Some(1.0),
            ..Default::default()
        };
        assert!(matches!(bad.resolve(), Err(AugmentError::InvalidParam { .. })));
    }
}
