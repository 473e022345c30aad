//! Log-spectral-amplitude MMSE enhancement and a minimum-statistics noise
//! power tracker.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::specfun::exp_integral_e1;
use crate::stft::{ComplexSpectrogram, TfGrid};

/// Lower gain limit, −30 dB.
pub const GAIN_FLOOR: f64 = 0.031_622_776_601_683_79;
/// Decision-directed smoothing of the a-priori SNR.
pub const DD_ALPHA: f64 = 0.98;
/// Lower limit of the a-priori SNR, −25 dB.
pub const XI_MIN: f64 = 0.003_162_277_660_168_379_5;
/// Absolute lower limit of the noise power estimate.
pub const PSD_FLOOR_ABS: f64 = 1e-20;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseTrackerConfig {
    /// Length of the minimum search window, seconds.
    pub window_s: f64,
    /// Multiplier applied to the tracked minimum.
    pub bias: f64,
    /// Recursive smoothing of the periodogram.
    pub smoothing: f64,
    /// The smoothed periodogram is capped by the largest raw periodogram
    /// of this many most recent seconds, so it falls quickly into pauses.
    pub peak_window_s: f64,
    /// A-posteriori SNR below which a bin counts as noise, dB.
    pub vad_snr_db: f64,
    /// Fraction of noise bins needed to call a frame noise-only.
    pub vad_fraction: f64,
    /// Noise floor relative to the mean periodogram power.
    pub relative_floor: f64,
}

impl Default for NoiseTrackerConfig {
    fn default() -> Self {
        NoiseTrackerConfig {
            window_s: 1.5,
            bias: 1.5,
            smoothing: 0.96,
            peak_window_s: 0.096,
            vad_snr_db: 3.0,
            vad_fraction: 0.8,
            relative_floor: 1e-10,
        }
    }
}

/// Per-cell noise power estimate and per-frame noise-only flags.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseTrack {
    pub psd: TfGrid<f64>,
    pub noise_only: Vec<bool>,
    pub floor: f64,
}

// Share of the window energy that falls on real (unpadded) samples.
fn frame_coverage(spec: &ComplexSpectrogram) -> Vec<f64> {
    let cfg = &spec.config;
    let w = cfg.window.coefficients(cfg.frame_len);
    let total: f64 = w.iter().map(|v| v * v).sum();
    (0..spec.frames.n_frames())
        .map(|n| {
            let start = (n * cfg.frame_inc) as i64 - cfg.frame_len as i64;
            let covered: f64 = w
                .iter()
                .enumerate()
                .filter(|(t, _)| {
                    let s = start + *t as i64;
                    s >= 0 && (s as usize) < spec.signal_len
                })
                .map(|(_, v)| v * v)
                .sum();
            covered / total
        })
        .collect()
}

pub fn track_noise(spec: &ComplexSpectrogram) -> Result<NoiseTrack> {
    track_noise_with(spec, &NoiseTrackerConfig::default())
}

/// Minimum-statistics tracking.
///
/// Each bin's periodogram, normalised by the frame's window coverage, is
/// smoothed recursively (a running mean during the first `1/(1−α)` frames)
/// and capped by the largest periodogram of the last `peak_window_s`
/// seconds. The noise power is `bias` times the minimum of the smoothed
/// values over the last `window_s` seconds. During the warm-up the running
/// mean is used directly.
pub fn track_noise_with(spec: &ComplexSpectrogram, cfg: &NoiseTrackerConfig) -> Result<NoiseTrack> {
    if !(cfg.smoothing >= 0.0 && cfg.smoothing < 1.0)
        || !(cfg.bias > 0.0)
        || !(cfg.window_s > 0.0)
        || !(cfg.peak_window_s >= 0.0)
    {
        return Err(Error::Config("invalid noise tracker settings".into()));
    }
    let (n_frames, n_bins) = spec.frames.shape();
    if n_frames == 0 {
        return Err(Error::EmptySignal);
    }
    let power = spec.frames.map(|c| c.norm_sqr());
    let mean_power = power.values().iter().sum::<f64>() / power.values().len() as f64;
    let floor = (cfg.relative_floor * mean_power).max(PSD_FLOOR_ABS);
    let coverage = frame_coverage(spec);
    let window = ((cfg.window_s * spec.config.frame_rate()).round() as usize).max(1);
    let warm = (1.0 / (1.0 - cfg.smoothing)).round() as usize;
    let peak_len = (cfg.peak_window_s * spec.config.frame_rate()).round() as usize;
    let mut recent: VecDeque<Vec<f64>> = VecDeque::with_capacity(peak_len + 1);

    let mut psd = TfGrid::filled(n_frames, n_bins, floor);
    let mut smoothed = vec![0.0; n_bins];
    let mut minima: Vec<VecDeque<(usize, f64)>> = vec![VecDeque::new(); n_bins];
    let mut used = 0usize;
    let mut first_estimate: Option<usize> = None;
    for n in 0..n_frames {
        let c = coverage[n];
        if c >= 0.5 {
            used += 1;
            let alpha = cfg.smoothing.min((used - 1) as f64 / used as f64);
            let current: Vec<f64> = power.frame(n).iter().map(|p| p / c).collect();
            if peak_len > 0 {
                if recent.len() == peak_len {
                    recent.pop_front();
                }
                recent.push_back(current.clone());
            }
            for k in 0..n_bins {
                let p = current[k];
                smoothed[k] = alpha * smoothed[k] + (1.0 - alpha) * p;
                if peak_len > 0 {
                    let peak = recent.iter().fold(0.0f64, |m, r| m.max(r[k]));
                    smoothed[k] = smoothed[k].min(peak);
                }
                if used >= warm {
                    let dq = &mut minima[k];
                    while dq.back().is_some_and(|&(_, v)| v >= smoothed[k]) {
                        dq.pop_back();
                    }
                    dq.push_back((n, smoothed[k]));
                }
            }
        }
        if used == 0 {
            continue;
        }
        first_estimate.get_or_insert(n);
        for k in 0..n_bins {
            let dq = &mut minima[k];
            while dq.front().is_some_and(|&(i, _)| i + window <= n) {
                dq.pop_front();
            }
            let est = match dq.front() {
                Some(&(_, v)) => cfg.bias * v,
                None => smoothed[k],
            };
            psd[(n, k)] = est.max(floor);
        }
    }
    if let Some(first) = first_estimate {
        let row = psd.frame(first).to_vec();
        for n in 0..first {
            psd.frame_mut(n).copy_from_slice(&row);
        }
    }

    let threshold = 10f64.powf(cfg.vad_snr_db / 10.0);
    let noise_only = (0..n_frames)
        .map(|n| {
            let quiet = (0..n_bins)
                .filter(|&k| power[(n, k)] / psd[(n, k)] < threshold)
                .count();
            quiet as f64 >= cfg.vad_fraction * n_bins as f64
        })
        .collect();
    Ok(NoiseTrack {
        psd,
        noise_only,
        floor,
    })
}

/// Log-spectral-amplitude gain `ξ/(1+ξ)·exp(½E₁(ξγ/(1+ξ)))`, limited to
/// `[GAIN_FLOOR, 1]`.
pub fn logmmse_gain(xi: f64, gamma_post: f64) -> f64 {
    if !(xi > 0.0) {
        return GAIN_FLOOR;
    }
    let r = xi / (1.0 + xi);
    let v = r * gamma_post;
    if !(v > 0.0) {
        return 1.0;
    }
    let e1 = exp_integral_e1(v).expect("v > 0");
    (r * (0.5 * e1).exp()).clamp(GAIN_FLOOR, 1.0)
}

/// Per-cell gains with a decision-directed a-priori SNR.
pub fn logmmse_gains(spec: &ComplexSpectrogram, noise: &NoiseTrack) -> Result<TfGrid<f64>> {
    if spec.frames.shape() != noise.psd.shape() {
        return Err(Error::Shape(format!(
            "spectrogram {:?} vs noise track {:?}",
            spec.frames.shape(),
            noise.psd.shape()
        )));
    }
    let (n_frames, n_bins) = spec.frames.shape();
    let mut gains = TfGrid::filled(n_frames, n_bins, 1.0);
    let mut prev_clean = vec![0.0; n_bins];
    for n in 0..n_frames {
        for k in 0..n_bins {
            let nu2 = noise.psd[(n, k)];
            let y2 = spec.frames[(n, k)].norm_sqr();
            let gamma = y2 / nu2;
            let ml = (gamma - 1.0).max(0.0);
            let xi = if n == 0 {
                DD_ALPHA + (1.0 - DD_ALPHA) * ml
            } else {
                DD_ALPHA * prev_clean[k] / nu2 + (1.0 - DD_ALPHA) * ml
            }
            .max(XI_MIN);
            let g = logmmse_gain(xi, gamma);
            gains[(n, k)] = g;
            prev_clean[k] = g * g * y2;
        }
    }
    Ok(gains)
}

/// Enhanced amplitudes `G·|Z|`.
pub fn logmmse_enhance(spec: &ComplexSpectrogram, noise: &NoiseTrack) -> Result<TfGrid<f64>> {
    let gains = logmmse_gains(spec, noise)?;
    let (n_frames, n_bins) = spec.frames.shape();
    let mut out = gains;
    for n in 0..n_frames {
        for k in 0..n_bins {
            out[(n, k)] *= spec.frames[(n, k)].norm();
        }
    }
    Ok(out)
}
