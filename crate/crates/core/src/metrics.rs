//! Segmental SNR and global-SNR mixing.

use crate::error::{Error, Result};

pub const SEG_SNR_MIN_DB: f64 = -10.0;
pub const SEG_SNR_MAX_DB: f64 = 35.0;
/// Frames with less than this fraction of the mean frame energy are skipped.
pub const SILENCE_RELATIVE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct SegSnrReport {
    /// Clamped SNR of every frame that passed the silence test, dB.
    pub per_frame: Vec<f64>,
    pub mean: f64,
    pub frames_used: usize,
}

fn frame_starts(len: usize, frame_len: usize, frame_inc: usize) -> Vec<usize> {
    if len <= frame_len {
        return vec![0];
    }
    (0..=(len - frame_len) / frame_inc).map(|i| i * frame_inc).collect()
}

/// Mean over non-silent frames of `10·log10(Σ clean² / Σ (clean − test)²)`,
/// each frame clamped to `[−10, 35]` dB. A `test` of different length is
/// trimmed or zero-padded to match `clean`.
pub fn seg_snr(clean: &[f64], test: &[f64], frame_len: usize, frame_inc: usize) -> Result<SegSnrReport> {
    if frame_len == 0 || frame_inc == 0 {
        return Err(Error::Config("segSNR frame length and increment must be positive".into()));
    }
    if clean.is_empty() {
        return Err(Error::EmptySignal);
    }
    let padded;
    let test = if test.len() == clean.len() {
        test
    } else {
        log::warn!(
            "segSNR: test length {} adjusted to reference length {}",
            test.len(),
            clean.len()
        );
        padded = test
            .iter()
            .copied()
            .chain(std::iter::repeat(0.0))
            .take(clean.len())
            .collect::<Vec<_>>();
        &padded[..]
    };
    let starts = frame_starts(clean.len(), frame_len, frame_inc);
    let energies: Vec<(f64, f64)> = starts
        .iter()
        .map(|&s| {
            let end = (s + frame_len).min(clean.len());
            let sig: f64 = clean[s..end].iter().map(|x| x * x).sum();
            let err: f64 = clean[s..end]
                .iter()
                .zip(&test[s..end])
                .map(|(c, t)| (c - t).powi(2))
                .sum();
            (sig, err)
        })
        .collect();
    let mean_energy = energies.iter().map(|e| e.0).sum::<f64>() / energies.len() as f64;
    if !(mean_energy > 0.0) {
        return Err(Error::SilentReference);
    }
    let threshold = SILENCE_RELATIVE * mean_energy;
    let per_frame: Vec<f64> = energies
        .iter()
        .filter(|(sig, _)| *sig > threshold)
        .map(|&(sig, err)| {
            let db = if err > 0.0 {
                10.0 * (sig / err).log10()
            } else {
                f64::INFINITY
            };
            db.clamp(SEG_SNR_MIN_DB, SEG_SNR_MAX_DB)
        })
        .collect();
    let mean = per_frame.iter().sum::<f64>() / per_frame.len() as f64;
    Ok(SegSnrReport {
        frames_used: per_frame.len(),
        per_frame,
        mean,
    })
}

/// `10·log10(Σ clean² / Σ noise²)` over the whole signals.
pub fn global_snr_db(clean: &[f64], noise: &[f64]) -> Result<f64> {
    let ps: f64 = clean.iter().map(|x| x * x).sum();
    let pn: f64 = noise.iter().map(|x| x * x).sum();
    if !(pn > 0.0) {
        return Err(Error::NonPositiveEnergy(pn));
    }
    if !(ps > 0.0) {
        return Err(Error::SilentReference);
    }
    Ok(10.0 * (ps / pn).log10())
}

/// A clean signal mixed with noise scaled to a global SNR.
#[derive(Debug, Clone, PartialEq)]
pub struct Mixture {
    pub noisy: Vec<f64>,
    pub noise: Vec<f64>,
    /// The noise was shorter than the clean signal and was repeated.
    pub tiled: bool,
}

/// Scales `noise` so that the total-energy ratio to `clean` is `snr_db` and
/// adds it. Noise shorter than `clean` is tiled.
pub fn mix_at_snr(clean: &[f64], noise: &[f64], snr_db: f64) -> Result<Mixture> {
    if !snr_db.is_finite() {
        return Err(Error::domain("mix_at_snr", snr_db, "finite SNR"));
    }
    if noise.is_empty() || clean.is_empty() {
        return Err(Error::EmptySignal);
    }
    let tiled = noise.len() < clean.len();
    if tiled {
        log::warn!("noise ({} samples) tiled to {} samples", noise.len(), clean.len());
    }
    let fitted: Vec<f64> = noise.iter().copied().cycle().take(clean.len()).collect();
    let ps: f64 = clean.iter().map(|x| x * x).sum();
    let pn: f64 = fitted.iter().map(|x| x * x).sum();
    if !(pn > 0.0) {
        return Err(Error::NonPositiveEnergy(pn));
    }
    if !(ps > 0.0) {
        return Err(Error::SilentReference);
    }
    let gain = (ps / pn / 10f64.powf(snr_db / 10.0)).sqrt();
    let scaled: Vec<f64> = fitted.iter().map(|x| x * gain).collect();
    let noisy = clean.iter().zip(&scaled).map(|(c, n)| c + n).collect();
    Ok(Mixture {
        noisy,
        noise: scaled,
        tiled,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tone(len: usize) -> Vec<f64> {
        (0..len).map(|i| (i as f64 * 0.07).sin() + 0.3 * (i as f64 * 0.013).cos()).collect()
    }

    #[test]
    fn identical_signals_hit_upper_clamp() {
        let x = tone(4000);
        let r = seg_snr(&x, &x, 512, 128).unwrap();
        assert_eq!(r.mean, 35.0);
        assert!(r.per_frame.iter().all(|v| *v == 35.0));
    }

    #[test]
    fn zero_test_gives_zero_db() {
        let x = tone(4000);
        let r = seg_snr(&x, &vec![0.0; 4000], 512, 128).unwrap();
        assert!(r.per_frame.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn equal_power_error_is_zero_db() {
        let x = tone(4000);
        // error equal to the negated clean signal in every frame
        let test: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
        let r = seg_snr(&x, &test, 512, 128).unwrap();
        assert!(r.per_frame.iter().all(|v| v.abs() < 0.01));
    }

    #[test]
    fn silent_frames_are_skipped() {
        let mut x = tone(4096);
        x[..2048].iter_mut().for_each(|v| *v = 0.0);
        let r = seg_snr(&x, &x, 512, 512).unwrap();
        assert_eq!(r.frames_used, 4);
        assert!(matches!(seg_snr(&[0.0; 100], &[0.0; 100], 16, 8), Err(Error::SilentReference)));
    }

    #[test]
    fn length_mismatch_is_adjusted() {
        let x = tone(4000);
        let r = seg_snr(&x, &x[..3000], 512, 128).unwrap();
        assert!(r.mean < 35.0);
        let longer: Vec<f64> = x.iter().copied().chain([1.0; 50]).collect();
        assert_eq!(seg_snr(&x, &longer, 512, 128).unwrap().mean, 35.0);
    }

    #[test]
    fn mixing_hits_requested_snr() {
        let clean = tone(16000);
        let noise: Vec<f64> = (0..5000).map(|i| ((i * 7919) % 101) as f64 / 50.0 - 1.0).collect();
        for snr in [-5.0, 0.0, 5.0, 15.0] {
            let m = mix_at_snr(&clean, &noise, snr).unwrap();
            assert!(m.tiled);
            assert_eq!(m.noisy.len(), clean.len());
            let got = global_snr_db(&clean, &m.noise).unwrap();
            assert!((got - snr).abs() < 0.01);
        }
        assert!(mix_at_snr(&clean, &[0.0; 10], 0.0).is_err());
    }

    proptest! {
        #[test]
        fn scale_invariance(scale in 1e-3f64..1e3, offset in -0.5f64..0.5) {
            let x = tone(3000);
            let y: Vec<f64> = x.iter().enumerate().map(|(i, v)| v + offset * ((i as f64) * 0.5).sin()).collect();
            let a = seg_snr(&x, &y, 256, 64).unwrap();
            let xs: Vec<f64> = x.iter().map(|v| v * scale).collect();
            let ys: Vec<f64> = y.iter().map(|v| v * scale).collect();
            let b = seg_snr(&xs, &ys, 256, 64).unwrap();
            prop_assert!((a.mean - b.mean).abs() < 1e-9);
        }

        #[test]
        fn self_comparison_is_upper_clamp(seed in 0u64..1000) {
            let x: Vec<f64> = (0..2000).map(|i| ((i as u64 * 2654435761 + seed) % 1000) as f64 / 500.0 - 1.0).collect();
            prop_assert_eq!(seg_snr(&x, &x, 256, 128).unwrap().mean, 35.0);
        }
    }
}
