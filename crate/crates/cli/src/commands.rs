use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use modkalm::enhancer::{diagnose_with_reference, Counters};
use modkalm::metrics::{global_snr_db, mix_at_snr};
use modkalm::stft::{read_wav, write_wav};
use modkalm::synth::{speech_like, white_noise, SpeechLikeConfig};
use modkalm::{enhance as run_enhance, seg_snr, EnhancerConfig, Mode};
use rayon::prelude::*;

use crate::settings::{Settings, SettingsError};
use crate::{BenchArgs, DiagnoseArgs, EnhanceArgs, EnhancerFlags};

/// Synthetic utterances are generated at this rate.
const SYNTH_RATE: u32 = 16_000;
/// Seeds of the synthetic noise are offset from the speech seeds.
const NOISE_SEED_OFFSET: u64 = 10_000;

#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Runtime(String),
}

impl Failure {
    pub fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Runtime(_) => 1,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Usage(m) | Failure::Runtime(m) => f.write_str(m),
        }
    }
}

impl From<SettingsError> for Failure {
    fn from(e: SettingsError) -> Self {
        Failure::Usage(e.0)
    }
}

impl From<modkalm::Error> for Failure {
    fn from(e: modkalm::Error) -> Self {
        match e {
            modkalm::Error::Config(m) => Failure::Usage(m),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    Failure::Runtime(format!("{}: {e}", path.display()))
}

/// Config file settings overlaid with the flags, checked at 16 kHz so that
/// bad settings are reported before any file is touched.
fn base_settings(flags: &EnhancerFlags, default_mode: Mode) -> Result<Settings, Failure> {
    let file = match &flags.config {
        Some(path) => Settings::load(path)?,
        None => Settings::default(),
    };
    let settings = file.overlay(&flags.settings());
    settings.resolve(default_mode, SYNTH_RATE)?;
    Ok(settings)
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "input".to_string())
}

fn create_dir(dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir).map_err(|e| io_failure(dir, e))
}

fn enhance_one(input: &Path, out_dir: &Path, settings: &Settings, expect_rate: Option<u32>) -> Result<(PathBuf, Counters, usize), Failure> {
    let (samples, rate) = read_wav(input, expect_rate)?;
    let cfg = settings.resolve(Mode::Mdkr, rate)?;
    let report = run_enhance(&samples, rate, &cfg)?;
    let out = out_dir.join(format!("{}.enhanced.wav", stem(input)));
    let clipped = write_wav(&out, &report.samples, rate)?;
    Ok((out, report.counters, clipped))
}

pub fn enhance(args: &EnhanceArgs) -> Result<(), Failure> {
    let settings = base_settings(&args.flags, Mode::Mdkr)?;
    create_dir(&args.output)?;
    let results: Vec<_> = args
        .inputs
        .par_iter()
        .map(|input| enhance_one(input, &args.output, &settings, args.flags.expect_rate))
        .collect();

    let mut first_failure = None;
    for (input, result) in args.inputs.iter().zip(results) {
        match result {
            Ok((out, counters, clipped)) => {
                println!("{} -> {}: {counters}, clipped={clipped}", input.display(), out.display());
            }
            Err(failure) => {
                eprintln!("error: {}: {failure}", input.display());
                first_failure.get_or_insert(failure);
            }
        }
    }
    first_failure.map_or(Ok(()), Err)
}

pub fn diagnose(args: &DiagnoseArgs) -> Result<(), Failure> {
    let settings = base_settings(&args.flags, Mode::Mdkr)?;
    let (samples, rate) = read_wav(&args.input, args.flags.expect_rate)?;
    let clean = match &args.clean {
        Some(path) => Some(read_wav(path, Some(rate))?.0),
        None => None,
    };
    let cfg = settings.resolve(Mode::Mdkr, rate)?;
    let diag = diagnose_with_reference(&samples, clean.as_deref(), rate, &cfg)?;
    let written = diag.write_bundle(&args.output, &stem(&args.input))?;
    println!("{}: {}", args.input.display(), diag.report.counters);
    for path in written {
        println!("wrote {}", path.display());
    }
    Ok(())
}

struct Item {
    name: String,
    clean: Vec<f64>,
    noise: Vec<f64>,
    rate: u32,
}

fn bench_items(args: &BenchArgs) -> Result<Vec<Item>, Failure> {
    let noise_file = match &args.noise {
        Some(path) => Some(read_wav(path, None)?),
        None => None,
    };
    let mut items = Vec::new();
    if args.clean.is_empty() {
        if args.trials == 0 {
            return Err(Failure::Usage("--trials must be at least 1".into()));
        }
        if !(args.duration > 0.0 && args.duration.is_finite()) {
            return Err(Failure::Usage("--duration must be positive".into()));
        }
        let synth = SpeechLikeConfig {
            sample_rate: SYNTH_RATE,
            duration_s: args.duration,
            ..SpeechLikeConfig::default()
        };
        for i in 0..args.trials as u64 {
            let seed = args.seed.wrapping_add(i);
            let clean = speech_like(&synth, seed)?;
            items.push(Item {
                name: format!("synth{i}"),
                clean,
                noise: Vec::new(),
                rate: SYNTH_RATE,
            });
        }
    } else {
        for path in &args.clean {
            let (clean, rate) = read_wav(path, args.flags.expect_rate)?;
            items.push(Item {
                name: stem(path),
                clean,
                noise: Vec::new(),
                rate,
            });
        }
    }
    for (i, item) in items.iter_mut().enumerate() {
        item.noise = match &noise_file {
            Some((noise, rate)) => {
                if *rate != item.rate {
                    return Err(Failure::Runtime(format!(
                        "noise sample rate {rate} Hz differs from {} at {} Hz",
                        item.name, item.rate
                    )));
                }
                noise.clone()
            }
            None => white_noise(
                item.clean.len(),
                1.0,
                args.seed.wrapping_add(NOISE_SEED_OFFSET + i as u64),
            ),
        };
    }
    Ok(items)
}

/// In a benchmark the noise order only applies to the modes that model
/// noise dynamics.
fn bench_config(settings: &Settings, mode: Mode, rate: u32) -> Result<EnhancerConfig, Failure> {
    let settings = Settings {
        mode: Some(mode),
        q: if mode == Mode::Mdkm { None } else { settings.q },
        ..settings.clone()
    };
    Ok(settings.resolve(mode, rate)?)
}

struct Mix {
    item: usize,
    snr_db: f64,
    noisy: Vec<f64>,
    global_snr_db: f64,
    noisy_segsnr_db: f64,
}

struct Row {
    item: String,
    snr_db: f64,
    mode: Mode,
    global_snr_db: f64,
    noisy_segsnr_db: f64,
    enhanced_segsnr_db: f64,
    faults: usize,
}

pub fn bench(args: &BenchArgs) -> Result<(), Failure> {
    if let Some(bad) = args.snr.iter().find(|s| !s.is_finite()) {
        return Err(Failure::Usage(format!("SNR {bad} is not finite")));
    }
    if args.modes.is_empty() {
        return Err(Failure::Usage("no modes requested".into()));
    }
    let settings = base_settings(&args.flags, Mode::Mdkr)?;
    for &mode in &args.modes {
        bench_config(&settings, mode, SYNTH_RATE)?;
    }
    let items = bench_items(args)?;
    create_dir(&args.output)?;
    let diag_dir = args.output.join("diagnostics");

    let mut mixes = Vec::new();
    for (i, item) in items.iter().enumerate() {
        let seg_cfg = bench_config(&settings, args.modes[0], item.rate)?.frame;
        for &snr_db in &args.snr {
            let mix = mix_at_snr(&item.clean, &item.noise, snr_db)?;
            let noisy_segsnr_db = seg_snr(&item.clean, &mix.noisy, seg_cfg.frame_len, seg_cfg.frame_inc)?.mean;
            mixes.push(Mix {
                item: i,
                snr_db,
                global_snr_db: global_snr_db(&item.clean, &mix.noise)?,
                noisy: mix.noisy,
                noisy_segsnr_db,
            });
        }
    }

    let jobs: Vec<(&Mix, Mode)> = mixes
        .iter()
        .flat_map(|m| args.modes.iter().map(move |&mode| (m, mode)))
        .collect();
    let rows = jobs
        .par_iter()
        .map(|&(mix, mode)| -> Result<Row, Failure> {
            let item = &items[mix.item];
            let cfg = bench_config(&settings, mode, item.rate)?;
            let diag = diagnose_with_reference(&mix.noisy, Some(&item.clean), item.rate, &cfg)?;
            diag.write_bundle(&diag_dir, &format!("{}.snr{}", item.name, mix.snr_db))?;
            let enhanced = seg_snr(&item.clean, &diag.report.samples, cfg.frame.frame_len, cfg.frame.frame_inc)?;
            log::info!("{} at {} dB, {mode}: {}", item.name, mix.snr_db, diag.report.counters);
            Ok(Row {
                item: item.name.clone(),
                snr_db: mix.snr_db,
                mode,
                global_snr_db: mix.global_snr_db,
                noisy_segsnr_db: mix.noisy_segsnr_db,
                enhanced_segsnr_db: enhanced.mean,
                faults: diag.report.counters.faults,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;

    let csv_path = args.output.join("bench.csv");
    write_bench_csv(&csv_path, &rows).map_err(|e| io_failure(&csv_path, e))?;
    println!("{:<12} {:>8} {:>8} {:>10} {:>10} {:>8}", "item", "snr_db", "mode", "noisy", "enhanced", "faults");
    for r in &rows {
        println!(
            "{:<12} {:>8.2} {:>8} {:>10.3} {:>10.3} {:>8}",
            r.item, r.snr_db, r.mode.name(), r.noisy_segsnr_db, r.enhanced_segsnr_db, r.faults
        );
    }
    println!("wrote {}", csv_path.display());
    Ok(())
}

fn write_bench_csv(path: &Path, rows: &[Row]) -> std::io::Result<()> {
    let mut w = std::io::BufWriter::new(fs::File::create(path)?);
    writeln!(
        w,
        "item,snr_db,mode,global_snr_db,noisy_segsnr_db,enhanced_segsnr_db,improvement_db,faults"
    )?;
    for r in rows {
        writeln!(
            w,
            "{},{:.9e},{},{:.9e},{:.9e},{:.9e},{:.9e},{}",
            r.item,
            r.snr_db,
            r.mode,
            r.global_snr_db,
            r.noisy_segsnr_db,
            r.enhanced_segsnr_db,
            r.enhanced_segsnr_db - r.noisy_segsnr_db,
            r.faults
        )?;
    }
    w.flush()
}
