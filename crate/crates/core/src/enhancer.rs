//! End-to-end enhancement: STFT, noise tracking, logMMSE pre-cleaning,
//! per-bin LPC model tracks, the per-bin Kalman loop, and synthesis with
//! the noisy phase.

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::gamma_update::{fit_gamma_prior, mdkm_posterior};
use crate::gaussring::{mdkr_posterior, DEFAULT_RING_CAP};
use crate::kalman::{build_transition, predict, update, KalmanState, MomentPair};
use crate::logmmse::{logmmse_enhance, track_noise_with, NoiseTrack, NoiseTrackerConfig};
use crate::lpc::{
    noise_lpc_track, prediction_gain, speech_lpc_track, ModFrameConfig, ModelTrack, NoiseModelSettings,
};
use crate::stft::{analyze, synthesize, ComplexSpectrogram, FrameConfig, TfGrid};

/// Lower limit of the LPC residual variances, relative to the noise power
/// of the cell. Keeps the prior covariance invertible on silent input.
pub const RESIDUAL_FLOOR: f64 = 1e-6;

/// Mean of a Rayleigh amplitude relative to the square root of its power.
const RAYLEIGH_MEAN: f64 = 0.886_226_925_452_758;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    Mdkm,
    Mdkr,
    Logmmse,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::Logmmse, Mode::Mdkm, Mode::Mdkr];

    pub fn name(&self) -> &'static str {
        match self {
            Mode::Mdkm => "mdkm",
            Mode::Mdkr => "mdkr",
            Mode::Logmmse => "logmmse",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mdkm" => Ok(Mode::Mdkm),
            "mdkr" => Ok(Mode::Mdkr),
            "logmmse" => Ok(Mode::Logmmse),
            other => Err(Error::Config(format!(
                "unknown mode '{other}' (expected mdkm, mdkr or logmmse)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnhancerConfig {
    pub mode: Mode,
    pub frame: FrameConfig,
    pub speech_mod: ModFrameConfig,
    pub noise_mod: ModFrameConfig,
    /// Speech LPC order.
    pub p: usize,
    /// Noise LPC order; must be 0 for MDKM.
    pub q: usize,
    pub ring_cap: usize,
    pub noise_tracker: NoiseTrackerConfig,
    pub noise_model: NoiseModelSettings,
    pub residual_floor: f64,
}

impl Default for EnhancerConfig {
    fn default() -> Self {
        EnhancerConfig {
            mode: Mode::Mdkr,
            frame: FrameConfig::default(),
            speech_mod: ModFrameConfig::speech_default(),
            noise_mod: ModFrameConfig::noise_default(),
            p: 3,
            q: 4,
            ring_cap: DEFAULT_RING_CAP,
            noise_tracker: NoiseTrackerConfig::default(),
            noise_model: NoiseModelSettings::default(),
            residual_floor: RESIDUAL_FLOOR,
        }
    }
}

impl EnhancerConfig {
    /// Defaults for `mode`, with `q = 0` for MDKM.
    pub fn for_mode(mode: Mode) -> Self {
        EnhancerConfig {
            mode,
            q: if mode == Mode::Mdkm { 0 } else { 4 },
            ..EnhancerConfig::default()
        }
    }

    /// Re-derives the acoustic and modulation framing from durations. The
    /// speech modulation frames advance by one acoustic hop, the noise
    /// modulation frames by two.
    pub fn set_timing(&mut self, frame_ms: f64, inc_ms: f64, mod_frame_ms: f64) -> Result<()> {
        let window = self.frame.window;
        self.frame = FrameConfig::from_ms(self.frame.sample_rate, frame_ms, inc_ms, window)?;
        let hop_ms = 1000.0 * self.frame.frame_inc as f64 / self.frame.sample_rate as f64;
        self.speech_mod = ModFrameConfig::from_ms(mod_frame_ms, hop_ms, hop_ms, self.speech_mod.window)?;
        self.noise_mod = ModFrameConfig::from_ms(mod_frame_ms, 2.0 * hop_ms, hop_ms, self.noise_mod.window)?;
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.frame.validate()?;
        if self.mode == Mode::Logmmse {
            return Ok(());
        }
        self.speech_mod.validate()?;
        if self.p == 0 || self.p >= self.speech_mod.frame_len {
            return Err(Error::Config(format!(
                "speech order p = {} must be in 1..{}",
                self.p, self.speech_mod.frame_len
            )));
        }
        match self.mode {
            Mode::Mdkm if self.q != 0 => {
                return Err(Error::Config(format!(
                    "MDKM assumes stationary noise and requires q = 0 (got q = {})",
                    self.q
                )))
            }
            Mode::Mdkr => {
                self.noise_mod.validate()?;
                if self.q == 0 || self.q >= self.noise_mod.frame_len {
                    return Err(Error::Config(format!(
                        "MDKR noise order q = {} must be in 1..{}",
                        self.q, self.noise_mod.frame_len
                    )));
                }
                if self.ring_cap == 0 {
                    return Err(Error::Config("ring cap must be at least 1".into()));
                }
            }
            _ => {}
        }
        if !(self.residual_floor > 0.0) {
            return Err(Error::Config("residual floor must be positive".into()));
        }
        Ok(())
    }
}

/// Event counts accumulated over all time-frequency cells.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Counters {
    pub cells: usize,
    /// Cells whose estimate fell back to the logMMSE amplitude.
    pub faults: usize,
    /// Predicted means raised to zero.
    pub prior_clamped: usize,
    /// Gamma shape fits that hit a bracket end.
    pub gamma_clamped: usize,
    /// Posterior variances raised to their floor.
    pub variance_clamped: usize,
    /// Prior covariances regularised before inversion.
    pub regularized: usize,
    /// Posterior covariances projected onto the PSD cone.
    pub projected: usize,
    /// Ring products whose weights all underflowed.
    pub degenerate_weights: usize,
    pub speech_ring_fallback: usize,
    pub noise_ring_fallback: usize,
    pub noise_only_frames: usize,
}

impl Counters {
    fn merge(&mut self, o: &Counters) {
        self.cells += o.cells;
        self.faults += o.faults;
        self.prior_clamped += o.prior_clamped;
        self.gamma_clamped += o.gamma_clamped;
        self.variance_clamped += o.variance_clamped;
        self.regularized += o.regularized;
        self.projected += o.projected;
        self.degenerate_weights += o.degenerate_weights;
        self.speech_ring_fallback += o.speech_ring_fallback;
        self.noise_ring_fallback += o.noise_ring_fallback;
    }

    /// `(name, value)` pairs in a fixed order.
    pub fn fields(&self) -> [(&'static str, usize); 11] {
        [
            ("cells", self.cells),
            ("faults", self.faults),
            ("prior_clamped", self.prior_clamped),
            ("gamma_clamped", self.gamma_clamped),
            ("variance_clamped", self.variance_clamped),
            ("regularized", self.regularized),
            ("projected", self.projected),
            ("degenerate_weights", self.degenerate_weights),
            ("speech_ring_fallback", self.speech_ring_fallback),
            ("noise_ring_fallback", self.noise_ring_fallback),
            ("noise_only_frames", self.noise_only_frames),
        ]
    }
}

impl fmt::Display for Counters {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.fields().iter().map(|(k, v)| format!("{k}={v}")).collect();
        f.write_str(&parts.join(" "))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnhanceReport {
    pub samples: Vec<f64>,
    pub counters: Counters,
}

/// Everything the pipeline computes before synthesis.
#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub spectrogram: ComplexSpectrogram,
    pub noise: NoiseTrack,
    pub precleaned: TfGrid<f64>,
    pub amplitudes: TfGrid<f64>,
    /// Ring component counts per cell (MDKR only).
    pub speech_components: Option<TfGrid<u32>>,
    pub noise_components: Option<TfGrid<u32>>,
    /// Speech model tracks per bin (Kalman modes only).
    pub speech_models: Vec<ModelTrack>,
    pub counters: Counters,
}

struct BinResult {
    amps: Vec<f64>,
    g_speech: Vec<u32>,
    g_noise: Vec<u32>,
    models: Option<ModelTrack>,
    counters: Counters,
}

fn transition(
    speech: &crate::lpc::ModulationLpcModel,
    noise: Option<&crate::lpc::ModulationLpcModel>,
    floor: f64,
) -> Result<crate::kalman::Transition> {
    let mut tr = build_transition(speech, noise)?;
    for i in 0..tr.q.nrows() {
        if !(tr.q[(i, i)] >= floor) {
            tr.q[(i, i)] = floor;
        }
    }
    Ok(tr)
}

struct Step {
    state: KalmanState,
    estimate: f64,
    counters: Counters,
    g: (u32, u32),
}

fn kalman_step(
    state: &KalmanState,
    speech: &ModelTrack,
    noise: Option<&ModelTrack>,
    n: usize,
    z: Complex64,
    nu2: f64,
    cfg: &EnhancerConfig,
) -> Result<Step> {
    let mut c = Counters::default();
    let tr = transition(
        speech.model_for_frame(n),
        noise.map(|t| t.model_for_frame(n)),
        cfg.residual_floor * nu2,
    )?;
    let pred = predict(state, &tr)?;
    c.prior_clamped += pred.clamped;
    let mut g = (0, 0);
    let posterior = match cfg.mode {
        Mode::Mdkm => {
            let fit = fit_gamma_prior(pred.prior.speech_mean(), pred.prior.speech_var())?;
            c.gamma_clamped += fit.clamped as usize;
            let post = mdkm_posterior(&fit.prior, nu2, z.norm())?;
            c.variance_clamped += post.var_clamped as usize;
            MomentPair::speech_only(post.mean, post.var)
        }
        Mode::Mdkr => {
            let post = mdkr_posterior(&pred.prior, z, cfg.ring_cap)?;
            c.degenerate_weights += post.degenerate_weights as usize;
            c.projected += post.projected as usize;
            c.speech_ring_fallback += (post.speech_components == 1) as usize;
            c.noise_ring_fallback += (post.noise_components == 1) as usize;
            g = (post.speech_components as u32, post.noise_components as u32);
            post.moments
        }
        Mode::Logmmse => unreachable!("logMMSE mode has no Kalman loop"),
    };
    let out = update(&pred.state, &pred.prior, &posterior)?;
    c.regularized += out.regularized as usize;
    c.projected += out.projected as usize;
    let estimate = posterior.speech_mean();
    let finite = estimate.is_finite()
        && out.state.a.iter().all(|v| v.is_finite())
        && out.state.cov.iter().all(|v| v.is_finite());
    if !finite {
        return Err(Error::domain("kalman_step", estimate, "finite posterior"));
    }
    Ok(Step {
        state: out.state,
        estimate,
        counters: c,
        g,
    })
}

fn initial_state(speech: f64, nu2: f64, cfg: &EnhancerConfig) -> Result<KalmanState> {
    KalmanState::initial(speech, RAYLEIGH_MEAN * nu2.sqrt(), cfg.p, cfg.q)
}

fn run_bin(
    k: usize,
    spec: &ComplexSpectrogram,
    noise: &NoiseTrack,
    pre: &TfGrid<f64>,
    cfg: &EnhancerConfig,
) -> Result<BinResult> {
    let n_frames = spec.n_frames();
    let pre_col = pre.bin(k);
    let speech = speech_lpc_track(&pre_col, &cfg.speech_mod, cfg.p)?;
    let noise_models = if cfg.mode == Mode::Mdkr {
        let amps: Vec<f64> = (0..n_frames).map(|n| spec.amplitude(n, k)).collect();
        // frames overlapping the zero padding would bias the initial level
        let settings = NoiseModelSettings {
            init_skip: cfg.frame.frame_len.div_ceil(cfg.frame.frame_inc),
            ..cfg.noise_model
        };
        Some(noise_lpc_track(&amps, &noise.noise_only, &cfg.noise_mod, cfg.q, &settings)?)
    } else {
        None
    };

    let mut counters = Counters::default();
    let mut amps = Vec::with_capacity(n_frames);
    let mut g_speech = Vec::with_capacity(n_frames);
    let mut g_noise = Vec::with_capacity(n_frames);
    let mut state = initial_state(pre_col[0], noise.psd[(0, k)], cfg)?;
    for n in 0..n_frames {
        let nu2 = noise.psd[(n, k)];
        let z = spec.frames[(n, k)];
        counters.cells += 1;
        match kalman_step(&state, &speech, noise_models.as_ref(), n, z, nu2, cfg) {
            Ok(step) => {
                counters.merge(&step.counters);
                // a zero observation has no phase to carry an amplitude
                amps.push(if z.norm_sqr() > 0.0 { step.estimate.max(0.0) } else { 0.0 });
                g_speech.push(step.g.0);
                g_noise.push(step.g.1);
                state = step.state;
            }
            Err(e) => {
                log::debug!("bin {k} frame {n}: {e}; using logMMSE amplitude");
                counters.faults += 1;
                amps.push(pre_col[n]);
                g_speech.push(0);
                g_noise.push(0);
                state = initial_state(pre_col[n], nu2, cfg)?;
            }
        }
    }
    Ok(BinResult {
        amps,
        g_speech,
        g_noise,
        models: Some(speech),
        counters,
    })
}

/// Runs the analysis and the estimator, without synthesis.
pub fn run_pipeline(samples: &[f64], rate: u32, cfg: &EnhancerConfig) -> Result<PipelineOutput> {
    cfg.validate()?;
    if rate != cfg.frame.sample_rate {
        return Err(Error::RateMismatch {
            expected: cfg.frame.sample_rate,
            found: rate,
        });
    }
    if let Some(bad) = samples.iter().find(|v| !v.is_finite()) {
        return Err(Error::domain("enhance", *bad, "finite samples"));
    }
    let spec = analyze(samples, &cfg.frame)?;
    let noise = track_noise_with(&spec, &cfg.noise_tracker)?;
    let precleaned = logmmse_enhance(&spec, &noise)?;
    let mut counters = Counters {
        noise_only_frames: noise.noise_only.iter().filter(|&&f| f).count(),
        ..Counters::default()
    };
    if cfg.mode == Mode::Logmmse {
        counters.cells = spec.n_frames() * spec.n_bins();
        return Ok(PipelineOutput {
            amplitudes: precleaned.clone(),
            spectrogram: spec,
            noise,
            precleaned,
            speech_components: None,
            noise_components: None,
            speech_models: Vec::new(),
            counters,
        });
    }

    let bins: Vec<BinResult> = (0..spec.n_bins())
        .into_par_iter()
        .map(|k| run_bin(k, &spec, &noise, &precleaned, cfg))
        .collect::<Result<_>>()?;

    let mut amps = Vec::with_capacity(bins.len());
    let mut gs = Vec::with_capacity(bins.len());
    let mut gn = Vec::with_capacity(bins.len());
    let mut models = Vec::with_capacity(bins.len());
    for b in bins {
        counters.merge(&b.counters);
        amps.push(b.amps);
        gs.push(b.g_speech);
        gn.push(b.g_noise);
        models.extend(b.models);
    }
    let rings = cfg.mode == Mode::Mdkr;
    Ok(PipelineOutput {
        amplitudes: TfGrid::from_bins(amps)?,
        speech_components: if rings { Some(TfGrid::from_bins(gs)?) } else { None },
        noise_components: if rings { Some(TfGrid::from_bins(gn)?) } else { None },
        spectrogram: spec,
        noise,
        precleaned,
        speech_models: models,
        counters,
    })
}

/// Enhances a mono signal. The output has the input's length.
pub fn enhance(samples: &[f64], rate: u32, cfg: &EnhancerConfig) -> Result<EnhanceReport> {
    let out = run_pipeline(samples, rate, cfg)?;
    let phases = out.spectrogram.phases();
    let samples = synthesize(&out.amplitudes, &phases, &cfg.frame, samples.len())?;
    if out.counters.faults > 0 {
        log::warn!("{} of {} cells fell back to logMMSE", out.counters.faults, out.counters.cells);
    }
    Ok(EnhanceReport {
        samples,
        counters: out.counters,
    })
}

/// Per-bin prediction gains, component-count maps and counters.
#[derive(Debug, Clone)]
pub struct Diagnostics {
    pub mode: Mode,
    pub report: EnhanceReport,
    /// Speech-model prediction gain per bin, dB, against the clean
    /// amplitudes when a reference was given, otherwise against the
    /// pre-cleaned amplitudes the models were fitted to.
    pub prediction_gain_db: Vec<f64>,
    pub speech_components: Option<TfGrid<u32>>,
    pub noise_components: Option<TfGrid<u32>>,
    pub noise_only: Vec<bool>,
    pub frame: FrameConfig,
}

pub fn diagnose(samples: &[f64], rate: u32, cfg: &EnhancerConfig) -> Result<Diagnostics> {
    diagnose_with_reference(samples, None, rate, cfg)
}

/// As [`diagnose`], measuring prediction gains against `clean` if given.
pub fn diagnose_with_reference(
    samples: &[f64],
    clean: Option<&[f64]>,
    rate: u32,
    cfg: &EnhancerConfig,
) -> Result<Diagnostics> {
    let out = run_pipeline(samples, rate, cfg)?;
    let phases = out.spectrogram.phases();
    let enhanced = synthesize(&out.amplitudes, &phases, &cfg.frame, samples.len())?;
    let reference = match clean {
        Some(c) => {
            if c.len() != samples.len() {
                return Err(Error::Shape(format!(
                    "clean reference has {} samples, noisy input {}",
                    c.len(),
                    samples.len()
                )));
            }
            analyze(c, &cfg.frame)?.amplitudes()
        }
        None => out.precleaned.clone(),
    };
    let prediction_gain_db = if out.speech_models.is_empty() {
        Vec::new()
    } else {
        let predicted = TfGrid::from_bins(
            out.speech_models
                .iter()
                .enumerate()
                .map(|(k, track)| track.predictions(&reference.bin(k)))
                .collect(),
        )?;
        prediction_gain(&reference, &predicted)?
    };
    Ok(Diagnostics {
        mode: cfg.mode,
        report: EnhanceReport {
            samples: enhanced,
            counters: out.counters,
        },
        prediction_gain_db,
        speech_components: out.speech_components,
        noise_components: out.noise_components,
        noise_only: out.noise.noise_only,
        frame: cfg.frame,
    })
}

fn create(path: &Path) -> Result<std::io::BufWriter<std::fs::File>> {
    let file = std::fs::File::create(path).map_err(|e| Error::Wav {
        path: path.to_path_buf(),
        source: hound::Error::IoError(e),
    })?;
    Ok(std::io::BufWriter::new(file))
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> Error + '_ {
    move |e| Error::Wav {
        path: path.to_path_buf(),
        source: hound::Error::IoError(e),
    }
}

/// Median of the non-zero entries of a component-count grid.
pub fn median_count(grid: &TfGrid<u32>) -> Option<f64> {
    let mut v: Vec<u32> = grid.values().iter().copied().filter(|&g| g > 0).collect();
    if v.is_empty() {
        return None;
    }
    v.sort_unstable();
    let mid = v.len() / 2;
    Some(if v.len() % 2 == 0 {
        0.5 * (v[mid - 1] + v[mid]) as f64
    } else {
        v[mid] as f64
    })
}

impl Diagnostics {
    /// `bin,frequency_hz,prediction_gain_db`
    pub fn write_prediction_gains(&self, path: &Path) -> Result<()> {
        let mut w = create(path)?;
        let err = io_err(path);
        writeln!(w, "bin,frequency_hz,prediction_gain_db").map_err(&err)?;
        for (k, g) in self.prediction_gain_db.iter().enumerate() {
            writeln!(w, "{k},{:.9e},{:.9e}", self.frame.bin_frequency(k), g).map_err(&err)?;
        }
        w.flush().map_err(&err)
    }

    /// `frame,bin,speech_components,noise_components`; nothing is written
    /// outside MDKR mode.
    pub fn write_component_map(&self, path: &Path) -> Result<bool> {
        let (Some(gs), Some(gn)) = (&self.speech_components, &self.noise_components) else {
            return Ok(false);
        };
        let mut w = create(path)?;
        let err = io_err(path);
        writeln!(w, "frame,bin,speech_components,noise_components").map_err(&err)?;
        for n in 0..gs.n_frames() {
            for k in 0..gs.n_bins() {
                writeln!(w, "{n},{k},{},{}", gs[(n, k)], gn[(n, k)]).map_err(&err)?;
            }
        }
        w.flush().map_err(&err)?;
        Ok(true)
    }

    /// `count,speech_cells,noise_cells` histogram of the component counts.
    pub fn write_component_histogram(&self, path: &Path) -> Result<bool> {
        let (Some(gs), Some(gn)) = (&self.speech_components, &self.noise_components) else {
            return Ok(false);
        };
        let max = gs.values().iter().chain(gn.values()).copied().max().unwrap_or(0) as usize;
        let mut hist = vec![(0usize, 0usize); max + 1];
        for &g in gs.values() {
            hist[g as usize].0 += 1;
        }
        for &g in gn.values() {
            hist[g as usize].1 += 1;
        }
        let mut w = create(path)?;
        let err = io_err(path);
        writeln!(w, "count,speech_cells,noise_cells").map_err(&err)?;
        for (g, (s, n)) in hist.iter().enumerate().skip(1) {
            writeln!(w, "{g},{s},{n}").map_err(&err)?;
        }
        w.flush().map_err(&err)?;
        Ok(true)
    }

    /// `counter,value`
    pub fn write_counters(&self, path: &Path) -> Result<()> {
        let mut w = create(path)?;
        let err = io_err(path);
        writeln!(w, "counter,value").map_err(&err)?;
        for (k, v) in self.report.counters.fields() {
            writeln!(w, "{k},{v}").map_err(&err)?;
        }
        w.flush().map_err(&err)
    }

    /// Writes every CSV of the bundle into `dir` with file names prefixed
    /// by `stem`, returning the paths written.
    pub fn write_bundle(&self, dir: &Path, stem: &str) -> Result<Vec<std::path::PathBuf>> {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
        let mut written = Vec::new();
        let path = dir.join(format!("{stem}.{}.counters.csv", self.mode));
        self.write_counters(&path)?;
        written.push(path);
        if !self.prediction_gain_db.is_empty() {
            let path = dir.join(format!("{stem}.{}.prediction_gain.csv", self.mode));
            self.write_prediction_gains(&path)?;
            written.push(path);
        }
        let path = dir.join(format!("{stem}.{}.components.csv", self.mode));
        if self.write_component_map(&path)? {
            written.push(path);
        }
        let path = dir.join(format!("{stem}.{}.component_histogram.csv", self.mode));
        if self.write_component_histogram(&path)? {
            written.push(path);
        }
        Ok(written)
    }
}
