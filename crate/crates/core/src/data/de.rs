//! Differential-entropy band features.
//!
//! Band variance is read off an untapered periodogram: the sum of `|X_k|²`
//! over the one-sided bins whose frequency lies inside the band (edges
//! inclusive), doubled for the mirrored half and divided by `N²`. For a
//! Gaussian band-limited signal DE = ½·ln(2πe·σ²).

use std::f64::consts::{E, PI};

use faer::Mat;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use super::FeatureDataset;
use crate::error::{Error, Result};

/// Variance floor applied before the logarithm.
pub const DE_VARIANCE_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct Band {
    pub name: &'static str,
    pub low_hz: f64,
    pub high_hz: f64,
}

pub const DEFAULT_BANDS: [Band; 5] = [
    Band { name: "delta", low_hz: 1.0, high_hz: 3.0 },
    Band { name: "theta", low_hz: 4.0, high_hz: 7.0 },
    Band { name: "alpha", low_hz: 8.0, high_hz: 13.0 },
    Band { name: "beta", low_hz: 14.0, high_hz: 30.0 },
    Band { name: "gamma", low_hz: 31.0, high_hz: 50.0 },
];

fn band_bins(n: usize, sample_rate: f64, band: &Band) -> Result<std::ops::RangeInclusive<usize>> {
    let nyquist = sample_rate / 2.0;
    if !(band.low_hz >= 0.0 && band.low_hz <= band.high_hz) {
        return Err(Error::InvalidArgument(format!(
            "band {}: invalid edges {}..{} Hz",
            band.name, band.low_hz, band.high_hz
        )));
    }
    if band.high_hz > nyquist {
        return Err(Error::InvalidArgument(format!(
            "band {} upper edge {} Hz exceeds Nyquist {} Hz",
            band.name, band.high_hz, nyquist
        )));
    }
    let df = sample_rate / n as f64;
    let lo = (band.low_hz / df - 1e-9).ceil().max(0.0) as usize;
    let hi = ((band.high_hz / df + 1e-9).floor() as usize).min(n / 2);
    if lo > hi {
        return Err(Error::InvalidArgument(format!(
            "band {} contains no frequency bin at resolution {df} Hz; use a longer window",
            band.name
        )));
    }
    Ok(lo..=hi)
}

/// Per-band variance of one channel's time series.
pub fn band_variance(signal: &[f64], sample_rate: f64, bands: &[Band]) -> Result<Vec<f64>> {
    let n = signal.len();
    if n < 2 {
        return Err(Error::InvalidArgument("window needs at least 2 samples".into()));
    }
    let ranges = bands
        .iter()
        .map(|b| band_bins(n, sample_rate, b))
        .collect::<Result<Vec<_>>>()?;
    let mut buf: Vec<Complex<f64>> = signal.iter().map(|&v| Complex::new(v, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let n2 = (n * n) as f64;
    Ok(ranges
        .into_iter()
        .map(|r| {
            r.map(|k| {
                let p = buf[k].norm_sqr() / n2;
                // DC and (even-length) Nyquist bins have no mirror image.
                if k == 0 || (n % 2 == 0 && k == n / 2) {
                    p
                } else {
                    2.0 * p
                }
            })
            .sum()
        })
        .collect())
}

/// DE features for `windows[w][channel][t]`, ordered channel-major
/// (`channel * bands.len() + band`). Samples come back unlabeled.
pub fn extract_de_features(windows: &[Vec<Vec<f64>>], sample_rate: f64, bands: &[Band]) -> Result<FeatureDataset> {
    if windows.is_empty() {
        return Err(Error::InvalidArgument("no windows".into()));
    }
    if bands.is_empty() {
        return Err(Error::InvalidArgument("no bands".into()));
    }
    if !(sample_rate > 0.0) {
        return Err(Error::InvalidArgument("sample rate must be positive".into()));
    }
    let channels = windows[0].len();
    if channels == 0 {
        return Err(Error::InvalidArgument("windows have no channels".into()));
    }
    let d = channels * bands.len();
    let mut x = Mat::<f64>::zeros(windows.len(), d);
    for (w, window) in windows.iter().enumerate() {
        if window.len() != channels {
            return Err(Error::DimensionMismatch(format!(
                "window {w} has {} channels, expected {channels}",
                window.len()
            )));
        }
        for (ch, signal) in window.iter().enumerate() {
            let vars = band_variance(signal, sample_rate, bands)?;
            for (b, v) in vars.into_iter().enumerate() {
                x[(w, ch * bands.len() + b)] = 0.5 * (2.0 * PI * E * v.max(DE_VARIANCE_FLOOR)).ln();
            }
        }
    }
    let n = windows.len();
    let names = (0..channels)
        .flat_map(|ch| bands.iter().map(move |b| format!("ch{ch}_{}", b.name)))
        .collect();
    FeatureDataset::new(x, vec![None; n], vec![0; n], vec![0; n], 2)?.with_feature_names(names)
}
