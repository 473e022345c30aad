//! Modulation-domain linear prediction of spectral-amplitude trajectories.
//!
//! Within one frequency bin the sequence of acoustic-frame amplitudes is cut
//! into short, overlapping modulation frames. Each modulation frame yields an
//! autoregressive model with the sign convention
//! `â_n = −Σ_i b_i · a_{n−i}` and a residual variance `η²`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::stft::{TfGrid, Window};

/// Relative diagonal loading added to `r[0]` before the recursion.
pub const DIAGONAL_LOADING: f64 = 1e-10;

/// Autoregressive model of one modulation frame.
#[derive(Debug, Clone, PartialEq)]
pub struct ModulationLpcModel {
    /// `b_1..b_p`; prediction is `−Σ b_i a_{n−i}`.
    pub coeffs: Vec<f64>,
    /// Prediction residual variance `η²`.
    pub residual_var: f64,
    /// Order actually reached by the recursion; lower than `coeffs.len()`
    /// when it stopped early on a non-positive-definite autocorrelation.
    pub effective_order: usize,
    /// The modulation frame had no energy at all.
    pub degenerate: bool,
}

impl ModulationLpcModel {
    /// All-zero predictor of the given order with residual variance `var`.
    pub fn white(order: usize, var: f64) -> Self {
        ModulationLpcModel {
            coeffs: vec![0.0; order],
            residual_var: var,
            effective_order: 0,
            degenerate: false,
        }
    }

    /// Predictor that repeats the previous value.
    pub fn hold(order: usize, var: f64) -> Self {
        let mut coeffs = vec![0.0; order];
        if order > 0 {
            coeffs[0] = -1.0;
        }
        ModulationLpcModel {
            coeffs,
            residual_var: var,
            effective_order: order.min(1),
            degenerate: false,
        }
    }

    pub fn order(&self) -> usize {
        self.coeffs.len()
    }

    /// One-step prediction from `history`, most recent value first.
    pub fn predict(&self, history: &[f64]) -> f64 {
        -self
            .coeffs
            .iter()
            .zip(history)
            .map(|(b, a)| b * a)
            .sum::<f64>()
    }
}

/// Modulation framing, in acoustic frames.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModFrameConfig {
    pub frame_len: usize,
    pub frame_inc: usize,
    pub window: Window,
}

impl ModFrameConfig {
    /// 64 ms modulation frames advanced by 8 ms (at an 8 ms acoustic hop).
    pub fn speech_default() -> Self {
        ModFrameConfig {
            frame_len: 8,
            frame_inc: 1,
            window: Window::Hamming,
        }
    }

    /// 64 ms modulation frames advanced by 16 ms.
    pub fn noise_default() -> Self {
        ModFrameConfig {
            frame_len: 8,
            frame_inc: 2,
            window: Window::Hamming,
        }
    }

    pub fn from_ms(frame_ms: f64, inc_ms: f64, acoustic_inc_ms: f64, window: Window) -> Result<Self> {
        let cfg = ModFrameConfig {
            frame_len: (frame_ms / acoustic_inc_ms).round() as usize,
            frame_inc: (inc_ms / acoustic_inc_ms).round() as usize,
            window,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.frame_len == 0 || self.frame_inc == 0 || self.frame_inc > self.frame_len {
            return Err(Error::Config(format!(
                "invalid modulation framing: length {} increment {}",
                self.frame_len, self.frame_inc
            )));
        }
        Ok(())
    }
}

/// Biased autocorrelation `r[ℓ] = (1/N) Σ_t x[t]·x[t+ℓ]` for `ℓ = 0..=max_lag`.
pub fn autocorrelation(seq: &[f64], max_lag: usize) -> Result<Vec<f64>> {
    if seq.len() <= max_lag {
        return Err(Error::SignalTooShort {
            len: seq.len(),
            needed: max_lag + 1,
        });
    }
    let n = seq.len() as f64;
    Ok((0..=max_lag)
        .map(|lag| seq.iter().zip(&seq[lag..]).map(|(a, b)| a * b).sum::<f64>() / n)
        .collect())
}

/// Autocorrelation of a windowed frame with each lag normalised by the
/// window's own autocorrelation at that lag, so that a constant sequence
/// `c` gives `r[ℓ] = c²` at every lag.
pub fn windowed_autocorrelation(seq: &[f64], window: &[f64], max_lag: usize) -> Result<Vec<f64>> {
    if seq.len() != window.len() {
        return Err(Error::Shape("window and sequence lengths differ".into()));
    }
    if seq.len() <= max_lag {
        return Err(Error::SignalTooShort {
            len: seq.len(),
            needed: max_lag + 1,
        });
    }
    let xw: Vec<f64> = seq.iter().zip(window).map(|(x, w)| x * w).collect();
    Ok((0..=max_lag)
        .map(|lag| {
            let num: f64 = xw.iter().zip(&xw[lag..]).map(|(a, b)| a * b).sum();
            let den: f64 = window.iter().zip(&window[lag..]).map(|(a, b)| a * b).sum();
            num / den
        })
        .collect())
}

/// Levinson-Durbin recursion.
///
/// The recursion stops early (leaving the remaining coefficients at zero)
/// if a reflection coefficient reaches unit magnitude, which only happens
/// when `r` is not a valid autocorrelation.
pub fn levinson(r: &[f64], order: usize) -> Result<ModulationLpcModel> {
    if r.len() <= order {
        return Err(Error::Shape(format!(
            "need {} autocorrelation lags for order {order}, got {}",
            order + 1,
            r.len()
        )));
    }
    if !(r[0] > 0.0) || !r[0].is_finite() {
        return Err(Error::NonPositiveEnergy(r[0]));
    }
    let mut err = r[0] * (1.0 + DIAGONAL_LOADING);
    let mut b = vec![0.0; order];
    let mut tmp = vec![0.0; order];
    let mut reached = 0;
    for i in 1..=order {
        let acc = r[i] + (1..i).map(|j| b[j - 1] * r[i - j]).sum::<f64>();
        let k = -acc / err;
        if !k.is_finite() || k.abs() >= 1.0 {
            log::debug!("levinson stopped at order {} of {order} (|k| = {})", i - 1, k.abs());
            break;
        }
        tmp[..i - 1].copy_from_slice(&b[..i - 1]);
        for j in 1..i {
            b[j - 1] = tmp[j - 1] + k * tmp[i - j - 1];
        }
        b[i - 1] = k;
        err *= 1.0 - k * k;
        reached = i;
    }
    Ok(ModulationLpcModel {
        coeffs: b,
        residual_var: err.max(0.0),
        effective_order: reached,
        degenerate: false,
    })
}

/// A model together with the acoustic frames `[first_frame, last_frame]`
/// it governs.
#[derive(Debug, Clone, PartialEq)]
pub struct TimedModel {
    pub first_frame: usize,
    pub last_frame: usize,
    pub model: ModulationLpcModel,
}

/// Sequence of modulation-frame models covering every acoustic frame of a
/// track. The model for frame `n` comes from the modulation frame ending at
/// `n`; frames before the first complete modulation frame use the first
/// model.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelTrack {
    pub models: Vec<TimedModel>,
    pub frame_inc: usize,
    pub frame_len: usize,
}

impl ModelTrack {
    fn from_models(models: Vec<ModulationLpcModel>, cfg: &ModFrameConfig, n_frames: usize) -> Self {
        let count = models.len();
        let timed = models
            .into_iter()
            .enumerate()
            .map(|(i, model)| {
                let end = i * cfg.frame_inc + cfg.frame_len - 1;
                TimedModel {
                    first_frame: if i == 0 { 0 } else { end },
                    last_frame: if i + 1 == count {
                        n_frames - 1
                    } else {
                        end + cfg.frame_inc - 1
                    },
                    model,
                }
            })
            .collect();
        ModelTrack {
            models: timed,
            frame_inc: cfg.frame_inc,
            frame_len: cfg.frame_len,
        }
    }

    pub fn model_for_frame(&self, n: usize) -> &ModulationLpcModel {
        let idx = if n + 1 < self.frame_len {
            0
        } else {
            ((n + 1 - self.frame_len) / self.frame_inc).min(self.models.len() - 1)
        };
        &self.models[idx].model
    }

    /// One-step predictions of `amps` under the track's models. History
    /// before the first frame is taken to equal the first value.
    pub fn predictions(&self, amps: &[f64]) -> Vec<f64> {
        (0..amps.len())
            .map(|n| {
                let model = self.model_for_frame(n);
                let history: Vec<f64> = (1..=model.order())
                    .map(|i| if n >= i { amps[n - i] } else { amps[0] })
                    .collect();
                model.predict(&history)
            })
            .collect()
    }
}

fn check_track_len(len: usize, cfg: &ModFrameConfig) -> Result<()> {
    cfg.validate()?;
    if len < cfg.frame_len {
        return Err(Error::SignalTooShort {
            len,
            needed: cfg.frame_len,
        });
    }
    Ok(())
}

// Mean squared one-step prediction error over the frame starting at
// `start`, with history reaching back before the frame where available.
fn frame_error_power(amps: &[f64], start: usize, len: usize, model: &ModulationLpcModel) -> f64 {
    let order = model.order();
    let mut history = vec![0.0; order];
    let total: f64 = (start..start + len)
        .map(|t| {
            for (i, h) in history.iter_mut().enumerate() {
                *h = amps[t.saturating_sub(i + 1)];
            }
            (amps[t] - model.predict(&history)).powi(2)
        })
        .sum();
    total / len as f64
}

/// Least-squares (covariance method) fit over the frame `[start, start+len)`:
/// minimises `Σ_t (a_t + Σ_i b_i a_{t−i})²`, with the history reaching back
/// before the frame (the first value repeated at the start of the track).
/// The normal equations carry the same relative diagonal loading as
/// [`levinson`], so a constant frame gives equal coefficients summing to −1.
pub fn covariance_lpc(amps: &[f64], start: usize, len: usize, order: usize) -> Result<ModulationLpcModel> {
    if start + len > amps.len() || len == 0 {
        return Err(Error::Shape(format!(
            "frame [{start}, {}) outside a track of {}",
            start + len,
            amps.len()
        )));
    }
    let lag = |t: usize, i: usize| amps[t.saturating_sub(i)];
    let mut normal = DMatrix::<f64>::zeros(order, order);
    let mut rhs = DVector::<f64>::zeros(order);
    for t in start..start + len {
        for i in 0..order {
            rhs[i] += lag(t, i + 1) * amps[t];
            for j in 0..order {
                normal[(i, j)] += lag(t, i + 1) * lag(t, j + 1);
            }
        }
    }
    let load = DIAGONAL_LOADING * normal.trace() / order.max(1) as f64;
    if order == 0 || !(load > 0.0) {
        // nothing to regress on: predict zero
        let mut model = ModulationLpcModel::white(order, 0.0);
        model.residual_var = frame_error_power(amps, start, len, &model);
        model.degenerate = order > 0;
        return Ok(model);
    }
    for i in 0..order {
        normal[(i, i)] += load;
    }
    let solved = normal
        .cholesky()
        .ok_or_else(|| Error::domain("covariance_lpc", load, "positive definite normal equations"))?
        .solve(&rhs);
    let mut model = ModulationLpcModel {
        coeffs: solved.iter().map(|c| -c).collect(),
        residual_var: 0.0,
        effective_order: order,
        degenerate: false,
    };
    model.residual_var = frame_error_power(amps, start, len, &model);
    Ok(model)
}

/// Fits one model per modulation frame of a (pre-cleaned) speech amplitude
/// track with [`covariance_lpc`]. The residual variance is the mean squared
/// prediction error of the model over the frame. A frame whose values and
/// history are all zero gives a degenerate zero model.
pub fn speech_lpc_track(amps: &[f64], cfg: &ModFrameConfig, order: usize) -> Result<ModelTrack> {
    check_track_len(amps.len(), cfg)?;
    if order >= cfg.frame_len {
        return Err(Error::Config(format!(
            "LPC order {order} needs modulation frames longer than {}",
            cfg.frame_len
        )));
    }
    let mut models = Vec::new();
    let mut start = 0;
    while start + cfg.frame_len <= amps.len() {
        models.push(covariance_lpc(amps, start, cfg.frame_len, order)?);
        start += cfg.frame_inc;
    }
    Ok(ModelTrack::from_models(models, cfg, amps.len()))
}

/// Settings of the recursively averaged noise modulation spectrum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseModelSettings {
    /// Recursive-averaging constant per modulation frame.
    pub smoothing: f64,
    /// Acoustic frames used to initialise the average.
    pub init_frames: usize,
    /// Leading frames skipped before the initialisation frames.
    pub init_skip: usize,
}

impl Default for NoiseModelSettings {
    fn default() -> Self {
        NoiseModelSettings {
            smoothing: 0.9,
            init_frames: 6,
            init_skip: 0,
        }
    }
}

/// Fits noise models from a recursively averaged modulation magnitude
/// spectrum that is only updated on modulation frames whose acoustic
/// frames are all flagged noise-only.
///
/// Before the first update the average holds its initialisation: the
/// spectrum of a windowed constant at the mean amplitude of the first
/// `init_frames` frames after `init_skip` plus a flat floor carrying their
/// variance.
pub fn noise_lpc_track(
    amps: &[f64],
    noise_only: &[bool],
    cfg: &ModFrameConfig,
    order: usize,
    settings: &NoiseModelSettings,
) -> Result<ModelTrack> {
    check_track_len(amps.len(), cfg)?;
    if noise_only.len() != amps.len() {
        return Err(Error::Shape(format!(
            "{} noise-only flags for {} frames",
            noise_only.len(),
            amps.len()
        )));
    }
    if order >= cfg.frame_len {
        return Err(Error::Config(format!(
            "LPC order {order} needs modulation frames longer than {}",
            cfg.frame_len
        )));
    }
    let len = cfg.frame_len;
    let nfft = 2 * len;
    let window = cfg.window.coefficients(len);
    let window_energy: f64 = window.iter().map(|w| w * w).sum();
    let window_acf: Vec<f64> = (0..=order)
        .map(|lag| window.iter().zip(&window[lag..]).map(|(a, b)| a * b).sum())
        .collect();

    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(nfft);
    let ifft = planner.plan_fft_inverse(nfft);
    let spectrum_of = |frame: &[f64]| -> Vec<f64> {
        let mut buf = vec![Complex64::new(0.0, 0.0); nfft];
        for (i, (x, w)) in frame.iter().zip(&window).enumerate() {
            buf[i].re = x * w;
        }
        fft.process(&mut buf);
        buf.iter().map(|c| c.norm()).collect()
    };

    let skip = settings.init_skip.min(amps.len() - 1);
    let init = &amps[skip..(skip + settings.init_frames.max(1)).min(amps.len())];
    let mean = init.iter().sum::<f64>() / init.len() as f64;
    let var = init.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / init.len() as f64;
    let mut average: Vec<f64> = spectrum_of(&vec![mean; len])
        .iter()
        .map(|m| (m * m + var * window_energy).sqrt())
        .collect();

    let model_from = |avg: &[f64]| -> Result<ModulationLpcModel> {
        let mut buf: Vec<Complex64> = avg.iter().map(|m| Complex64::new(m * m, 0.0)).collect();
        ifft.process(&mut buf);
        let r: Vec<f64> = (0..=order)
            .map(|lag| buf[lag].re / nfft as f64 / window_acf[lag])
            .collect();
        if r[0] > 0.0 {
            levinson(&r, order)
        } else {
            Ok(ModulationLpcModel {
                degenerate: true,
                ..ModulationLpcModel::white(order, 0.0)
            })
        }
    };

    let lambda = settings.smoothing;
    let mut models = Vec::new();
    let mut start = 0;
    while start + len <= amps.len() {
        if noise_only[start..start + len].iter().all(|&f| f) {
            let spec = spectrum_of(&amps[start..start + len]);
            for (avg, s) in average.iter_mut().zip(&spec) {
                *avg = lambda * *avg + (1.0 - lambda) * s;
            }
        }
        models.push(model_from(&average)?);
        start += cfg.frame_inc;
    }
    Ok(ModelTrack::from_models(models, cfg, amps.len()))
}

/// Per-bin prediction gain in dB, `10·log10(E|S|² / E(|S|−|Ŝ|)²)` with the
/// expectation over frames. A bin predicted without error reports
/// `f64::INFINITY`.
pub fn prediction_gain(clean: &TfGrid<f64>, predicted: &TfGrid<f64>) -> Result<Vec<f64>> {
    if clean.shape() != predicted.shape() {
        return Err(Error::Shape(format!(
            "clean {:?} vs predicted {:?}",
            clean.shape(),
            predicted.shape()
        )));
    }
    let (n_frames, n_bins) = clean.shape();
    if n_frames == 0 {
        return Err(Error::EmptySignal);
    }
    Ok((0..n_bins)
        .map(|k| {
            let (mut num, mut den) = (0.0, 0.0);
            for n in 0..n_frames {
                let s = clean[(n, k)];
                num += s * s;
                den += (s - predicted[(n, k)]).powi(2);
            }
            if den == 0.0 {
                f64::INFINITY
            } else {
                10.0 * (num / den).log10()
            }
        })
        .collect())
}
