//! Short-time Fourier analysis and weighted overlap-add synthesis, plus
//! 16-bit PCM WAV I/O.

use std::f64::consts::PI;
use std::path::Path;

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};

/// Tapered analysis/synthesis window. All variants are periodic so that
/// integer-hop overlap-add sums are exactly periodic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Window {
    #[default]
    Hamming,
    Hann,
    Rectangular,
}

impl Window {
    pub fn coefficients(&self, len: usize) -> Vec<f64> {
        let n = len as f64;
        (0..len)
            .map(|i| {
                let ph = 2.0 * PI * i as f64 / n;
                match self {
                    Window::Hamming => 0.54 - 0.46 * ph.cos(),
                    Window::Hann => 0.5 - 0.5 * ph.cos(),
                    Window::Rectangular => 1.0,
                }
            })
            .collect()
    }

    pub fn parse(name: &str) -> Option<Window> {
        match name.to_ascii_lowercase().as_str() {
            "hamming" => Some(Window::Hamming),
            "hann" | "hanning" => Some(Window::Hann),
            "rect" | "rectangular" => Some(Window::Rectangular),
            _ => None,
        }
    }
}

/// Acoustic framing parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameConfig {
    pub sample_rate: u32,
    pub frame_len: usize,
    pub frame_inc: usize,
    pub window: Window,
}

impl Default for FrameConfig {
    /// 16 kHz, 32 ms Hamming frames every 8 ms.
    fn default() -> Self {
        FrameConfig {
            sample_rate: 16_000,
            frame_len: 512,
            frame_inc: 128,
            window: Window::Hamming,
        }
    }
}

impl FrameConfig {
    pub fn from_ms(sample_rate: u32, frame_ms: f64, inc_ms: f64, window: Window) -> Result<Self> {
        let to_samples = |ms: f64| (ms * 1e-3 * sample_rate as f64).round() as usize;
        let cfg = FrameConfig {
            sample_rate,
            frame_len: to_samples(frame_ms),
            frame_inc: to_samples(inc_ms),
            window,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.sample_rate == 0 {
            return Err(Error::Config("sample rate must be positive".into()));
        }
        if self.frame_len == 0 || self.frame_inc == 0 {
            return Err(Error::Config("frame length and increment must be positive".into()));
        }
        if self.frame_inc > self.frame_len {
            return Err(Error::Config(format!(
                "frame increment {} exceeds frame length {}",
                self.frame_inc, self.frame_len
            )));
        }
        Ok(())
    }

    /// One-sided bin count, `frame_len/2 + 1`.
    pub fn n_bins(&self) -> usize {
        self.frame_len / 2 + 1
    }

    /// Number of frames produced for a signal of `signal_len` samples,
    /// after zero-padding by one frame at each end.
    pub fn n_frames(&self, signal_len: usize) -> usize {
        let padded = signal_len + 2 * self.frame_len;
        (padded - self.frame_len) / self.frame_inc + 1
    }

    pub fn bin_frequency(&self, k: usize) -> f64 {
        k as f64 * self.sample_rate as f64 / self.frame_len as f64
    }

    /// Frame rate in Hz (acoustic frames per second).
    pub fn frame_rate(&self) -> f64 {
        self.sample_rate as f64 / self.frame_inc as f64
    }
}

/// Dense time-frequency grid indexed by `(frame, bin)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TfGrid<T> {
    n_frames: usize,
    n_bins: usize,
    data: Vec<T>,
}

impl<T: Clone> TfGrid<T> {
    pub fn filled(n_frames: usize, n_bins: usize, value: T) -> Self {
        TfGrid {
            n_frames,
            n_bins,
            data: vec![value; n_frames * n_bins],
        }
    }

    /// Builds a grid from per-bin columns (all of equal length).
    pub fn from_bins(columns: Vec<Vec<T>>) -> Result<Self> {
        let n_bins = columns.len();
        let n_frames = columns.first().map_or(0, Vec::len);
        if columns.iter().any(|c| c.len() != n_frames) {
            return Err(Error::Shape("bin columns of unequal length".into()));
        }
        let mut data = Vec::with_capacity(n_frames * n_bins);
        for n in 0..n_frames {
            for col in &columns {
                data.push(col[n].clone());
            }
        }
        Ok(TfGrid {
            n_frames,
            n_bins,
            data,
        })
    }

    pub fn bin(&self, k: usize) -> Vec<T> {
        (0..self.n_frames).map(|n| self.data[n * self.n_bins + k].clone()).collect()
    }

    pub fn map<U, F: FnMut(&T) -> U>(&self, f: F) -> TfGrid<U> {
        TfGrid {
            n_frames: self.n_frames,
            n_bins: self.n_bins,
            data: self.data.iter().map(f).collect(),
        }
    }
}

impl<T> TfGrid<T> {
    pub fn n_frames(&self) -> usize {
        self.n_frames
    }

    pub fn n_bins(&self) -> usize {
        self.n_bins
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.n_frames, self.n_bins)
    }

    pub fn frame(&self, n: usize) -> &[T] {
        &self.data[n * self.n_bins..(n + 1) * self.n_bins]
    }

    pub fn frame_mut(&mut self, n: usize) -> &mut [T] {
        &mut self.data[n * self.n_bins..(n + 1) * self.n_bins]
    }

    pub fn values(&self) -> &[T] {
        &self.data
    }
}

impl<T> std::ops::Index<(usize, usize)> for TfGrid<T> {
    type Output = T;
    fn index(&self, (n, k): (usize, usize)) -> &T {
        &self.data[n * self.n_bins + k]
    }
}

impl<T> std::ops::IndexMut<(usize, usize)> for TfGrid<T> {
    fn index_mut(&mut self, (n, k): (usize, usize)) -> &mut T {
        &mut self.data[n * self.n_bins + k]
    }
}

/// One-sided complex STFT of a real signal together with its framing.
#[derive(Debug, Clone)]
pub struct ComplexSpectrogram {
    pub frames: TfGrid<Complex64>,
    pub config: FrameConfig,
    /// Length of the analysed signal before padding.
    pub signal_len: usize,
}

impl ComplexSpectrogram {
    pub fn n_frames(&self) -> usize {
        self.frames.n_frames()
    }

    pub fn n_bins(&self) -> usize {
        self.frames.n_bins()
    }

    pub fn amplitude(&self, n: usize, k: usize) -> f64 {
        self.frames[(n, k)].norm()
    }

    pub fn phase(&self, n: usize, k: usize) -> f64 {
        canonical_phase(self.frames[(n, k)].arg())
    }

    pub fn amplitudes(&self) -> TfGrid<f64> {
        self.frames.map(|z| z.norm())
    }

    pub fn phases(&self) -> TfGrid<f64> {
        self.frames.map(|z| canonical_phase(z.arg()))
    }
}

// atan2 returns −π for some negative-zero imaginary parts; fold onto (−π, π].
fn canonical_phase(p: f64) -> f64 {
    if p <= -PI {
        p + 2.0 * PI
    } else {
        p
    }
}

/// Forward STFT. The signal is zero-padded by one frame at each end; frame
/// `n` covers padded samples `[n·inc, n·inc + len)`.
pub fn analyze(signal: &[f64], config: &FrameConfig) -> Result<ComplexSpectrogram> {
    config.validate()?;
    if signal.is_empty() {
        return Err(Error::EmptySignal);
    }
    let len = config.frame_len;
    if signal.len() < len {
        return Err(Error::SignalTooShort {
            len: signal.len(),
            needed: len,
        });
    }
    let window = config.window.coefficients(len);
    let mut padded = vec![0.0; signal.len() + 2 * len];
    padded[len..len + signal.len()].copy_from_slice(signal);

    let n_frames = config.n_frames(signal.len());
    let n_bins = config.n_bins();
    let fft = FftPlanner::new().plan_fft_forward(len);
    let mut buf = vec![Complex64::new(0.0, 0.0); len];
    let mut frames = TfGrid::filled(n_frames, n_bins, Complex64::new(0.0, 0.0));
    for n in 0..n_frames {
        let start = n * config.frame_inc;
        for (i, b) in buf.iter_mut().enumerate() {
            *b = Complex64::new(padded[start + i] * window[i], 0.0);
        }
        fft.process(&mut buf);
        frames.frame_mut(n).copy_from_slice(&buf[..n_bins]);
    }
    Ok(ComplexSpectrogram {
        frames,
        config: *config,
        signal_len: signal.len(),
    })
}

/// Weighted overlap-add inverse of [`analyze`] from amplitude and phase
/// grids. The synthesis window equals the analysis window and the output is
/// normalised by the summed squared window at every sample, so an
/// unmodified spectrogram is reconstructed exactly.
pub fn synthesize(
    amplitudes: &TfGrid<f64>,
    phases: &TfGrid<f64>,
    config: &FrameConfig,
    signal_len: usize,
) -> Result<Vec<f64>> {
    config.validate()?;
    let expected = (config.n_frames(signal_len), config.n_bins());
    if amplitudes.shape() != expected || phases.shape() != expected {
        return Err(Error::Shape(format!(
            "expected {expected:?} grid for {signal_len} samples, got amplitudes {:?} and phases {:?}",
            amplitudes.shape(),
            phases.shape()
        )));
    }
    let len = config.frame_len;
    let (n_frames, n_bins) = expected;
    let window = config.window.coefficients(len);
    let ifft = FftPlanner::new().plan_fft_inverse(len);
    let mut out = vec![0.0; signal_len + 2 * len];
    let mut norm = vec![0.0; signal_len + 2 * len];
    let mut buf = vec![Complex64::new(0.0, 0.0); len];
    for n in 0..n_frames {
        for k in 0..n_bins {
            buf[k] = Complex64::from_polar(amplitudes[(n, k)], phases[(n, k)]);
        }
        // DC and Nyquist of a real frame are real
        buf[0].im = 0.0;
        if len % 2 == 0 {
            buf[len / 2].im = 0.0;
        }
        for k in n_bins..len {
            buf[k] = buf[len - k].conj();
        }
        ifft.process(&mut buf);
        let start = n * config.frame_inc;
        for i in 0..len {
            out[start + i] += buf[i].re / len as f64 * window[i];
            norm[start + i] += window[i] * window[i];
        }
    }
    Ok(out[len..len + signal_len]
        .iter()
        .zip(&norm[len..len + signal_len])
        .map(|(&s, &w)| if w > 0.0 { s / w } else { 0.0 })
        .collect())
}

/// Reads a 16-bit PCM mono WAV file, returning samples scaled to `[−1, 1)`
/// and the sample rate.
pub fn read_wav(path: impl AsRef<Path>, expect_rate: Option<u32>) -> Result<(Vec<f64>, u32)> {
    let path = path.as_ref();
    let wav_err = |source| Error::Wav {
        path: path.to_path_buf(),
        source,
    };
    let reader = hound::WavReader::open(path).map_err(wav_err)?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(Error::NotMono(spec.channels));
    }
    if spec.sample_format != hound::SampleFormat::Int || spec.bits_per_sample != 16 {
        return Err(Error::UnsupportedEncoding(format!(
            "{:?} {}-bit",
            spec.sample_format, spec.bits_per_sample
        )));
    }
    if let Some(rate) = expect_rate {
        if rate != spec.sample_rate {
            return Err(Error::RateMismatch {
                expected: rate,
                found: spec.sample_rate,
            });
        }
    }
    let samples = reader
        .into_samples::<i16>()
        .map(|s| s.map(|v| v as f64 / 32768.0))
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(wav_err)?;
    Ok((samples, spec.sample_rate))
}

/// Writes 16-bit PCM mono. Returns how many samples saturated.
pub fn write_wav(path: impl AsRef<Path>, samples: &[f64], sample_rate: u32) -> Result<usize> {
    let path = path.as_ref();
    let wav_err = |source| Error::Wav {
        path: path.to_path_buf(),
        source,
    };
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(wav_err)?;
    let mut clipped = 0;
    for &s in samples {
        let v = (s * 32768.0).round();
        let q = if v > i16::MAX as f64 {
            clipped += 1;
            i16::MAX
        } else if v < i16::MIN as f64 {
            clipped += 1;
            i16::MIN
        } else {
            v as i16
        };
        writer.write_sample(q).map_err(wav_err)?;
    }
    writer.finalize().map_err(wav_err)?;
    Ok(clipped)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn noise(len: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..len).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    #[test]
    fn default_matches_table_settings() {
        let cfg = FrameConfig::default();
        let from_ms = FrameConfig::from_ms(16_000, 32.0, 8.0, Window::Hamming).unwrap();
        assert_eq!(cfg, from_ms);
        assert_eq!(cfg.n_bins(), 257);
        assert!(FrameConfig::from_ms(16_000, 8.0, 32.0, Window::Hamming).is_err());
    }

    #[test]
    fn zero_signal_gives_zero_grid() {
        let spec = analyze(&vec![0.0; 4000], &FrameConfig::default()).unwrap();
        assert!(spec.frames.values().iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn sinusoid_peaks_at_expected_bin() {
        let cfg = FrameConfig::default();
        let x: Vec<f64> = (0..8000)
            .map(|t| (2.0 * PI * 1000.0 * t as f64 / 16_000.0).sin())
            .collect();
        let spec = analyze(&x, &cfg).unwrap();
        // interior frames are fully inside the signal
        for n in 4..spec.n_frames() - 4 {
            let peak = (0..spec.n_bins())
                .max_by(|&a, &b| spec.amplitude(n, a).total_cmp(&spec.amplitude(n, b)))
                .unwrap();
            assert_eq!(peak, 32, "frame {n}");
        }
    }

    #[test]
    fn parseval_per_frame() {
        let cfg = FrameConfig::default();
        let x = noise(6000, 3);
        let spec = analyze(&x, &cfg).unwrap();
        let w = cfg.window.coefficients(cfg.frame_len);
        let mut padded = vec![0.0; x.len() + 2 * cfg.frame_len];
        padded[cfg.frame_len..cfg.frame_len + x.len()].copy_from_slice(&x);
        let l = cfg.frame_len;
        for n in 0..spec.n_frames() {
            let start = n * cfg.frame_inc;
            let time: f64 = (0..l).map(|i| (padded[start + i] * w[i]).powi(2)).sum();
            let freq: f64 = (0..spec.n_bins())
                .map(|k| {
                    let m = if k == 0 || k == l / 2 { 1.0 } else { 2.0 };
                    m * spec.frames[(n, k)].norm_sqr()
                })
                .sum::<f64>()
                / l as f64;
            if time > 0.0 {
                assert!((freq - time).abs() <= 1e-9 * time, "frame {n}");
            } else {
                assert!(freq < 1e-20);
            }
        }
    }

    #[test]
    fn round_trip_and_linearity_of_synthesis() {
        let cfg = FrameConfig::default();
        let x = noise(7777, 9);
        let spec = analyze(&x, &cfg).unwrap();
        let amps = spec.amplitudes();
        let ph = spec.phases();
        let y = synthesize(&amps, &ph, &cfg, x.len()).unwrap();
        let l = cfg.frame_len;
        let err = x[l..x.len() - l]
            .iter()
            .zip(&y[l..x.len() - l])
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(err <= 1e-10, "round-trip error {err}");

        let half = amps.map(|a| 0.5 * a);
        let y2 = synthesize(&half, &ph, &cfg, x.len()).unwrap();
        let err = x[l..x.len() - l]
            .iter()
            .zip(&y2[l..x.len() - l])
            .map(|(a, b)| (0.5 * a - b).abs())
            .fold(0.0, f64::max);
        assert!(err <= 1e-10);

        let zero = amps.map(|_| 0.0);
        assert!(synthesize(&zero, &ph, &cfg, x.len())
            .unwrap()
            .iter()
            .all(|&v| v == 0.0));
    }

    #[test]
    fn synthesis_rejects_mismatched_grids() {
        let cfg = FrameConfig::default();
        let spec = analyze(&noise(3000, 1), &cfg).unwrap();
        let amps = spec.amplitudes();
        assert!(matches!(
            synthesize(&amps, &spec.phases(), &cfg, 5000),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn squared_window_overlap_is_constant() {
        let cfg = FrameConfig::default();
        let w = cfg.window.coefficients(cfg.frame_len);
        let sums: Vec<f64> = (0..cfg.frame_inc)
            .map(|t| {
                (0..cfg.frame_len / cfg.frame_inc)
                    .map(|j| w[t + j * cfg.frame_inc].powi(2))
                    .sum()
            })
            .collect();
        let max = sums.iter().cloned().fold(f64::MIN, f64::max);
        let min = sums.iter().cloned().fold(f64::MAX, f64::min);
        // periodic Hamming at 75% overlap satisfies the squared-window COLA
        assert!((max - min) / max <= 1e-10, "variation {}", (max - min) / max);
    }

    #[test]
    fn analysis_is_linear() {
        let cfg = FrameConfig::default();
        let x = noise(5000, 4);
        let y = noise(5000, 5);
        let z: Vec<f64> = x.iter().zip(&y).map(|(a, b)| 2.0 * a - 0.7 * b).collect();
        let (sx, sy, sz) = (
            analyze(&x, &cfg).unwrap(),
            analyze(&y, &cfg).unwrap(),
            analyze(&z, &cfg).unwrap(),
        );
        for ((a, b), c) in sx
            .frames
            .values()
            .iter()
            .zip(sy.frames.values())
            .zip(sz.frames.values())
        {
            assert!((2.0 * a - 0.7 * b - c).norm() <= 1e-12 * (1.0 + c.norm()));
        }
    }

    #[test]
    fn short_signal_is_rejected() {
        let cfg = FrameConfig::default();
        assert!(matches!(
            analyze(&[0.1; 100], &cfg),
            Err(Error::SignalTooShort { .. })
        ));
        assert!(matches!(analyze(&[], &cfg), Err(Error::EmptySignal)));
    }

    #[test]
    fn phases_lie_in_half_open_interval() {
        let spec = analyze(&noise(3000, 8), &FrameConfig::default()).unwrap();
        for p in spec.phases().values() {
            assert!(*p > -PI && *p <= PI);
        }
    }

    #[test]
    fn wav_round_trip_within_one_lsb() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.wav");
        let x: Vec<f64> = noise(2000, 2).iter().map(|v| 0.9 * v).collect();
        assert_eq!(write_wav(&path, &x, 16_000).unwrap(), 0);
        let (y, rate) = read_wav(&path, Some(16_000)).unwrap();
        assert_eq!(rate, 16_000);
        assert_eq!(y.len(), x.len());
        for (a, b) in x.iter().zip(&y) {
            assert!((a - b).abs() <= 1.0 / 32768.0);
        }
        assert!(matches!(
            read_wav(&path, Some(8_000)),
            Err(Error::RateMismatch { .. })
        ));
    }

    #[test]
    fn wav_clipping_is_counted() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("clip.wav");
        assert_eq!(write_wav(&path, &[0.0, 1.5, -2.0, 0.99], 16_000).unwrap(), 2);
    }

    #[test]
    fn wav_rejects_stereo_and_missing_files() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("st.wav");
        let spec = hound::WavSpec {
            channels: 2,
            sample_rate: 16_000,
            bits_per_sample: 16,
            sample_format: hound::SampleFormat::Int,
        };
        let mut w = hound::WavWriter::create(&path, spec).unwrap();
        for _ in 0..20 {
            w.write_sample(0i16).unwrap();
        }
        w.finalize().unwrap();
        let err = read_wav(&path, None).unwrap_err();
        assert!(matches!(err, Error::NotMono(2)));
        assert!(err.to_string().contains("mono required"));
        assert!(matches!(
            read_wav(dir.path().join("missing.wav"), None),
            Err(Error::Wav { .. })
        ));
    }
}
