use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use modkalm::synth::{speech_like, white_noise, SpeechLikeConfig};
use modkalm::{enhance, EnhancerConfig, Mode};

fn one_second(c: &mut Criterion) {
    let cfg = SpeechLikeConfig {
        duration_s: 1.0,
        ..SpeechLikeConfig::default()
    };
    let clean = speech_like(&cfg, 1).unwrap();
    let noise = white_noise(clean.len(), 0.1, 2);
    let noisy: Vec<f64> = clean.iter().zip(&noise).map(|(s, n)| s + n).collect();

    let mut group = c.benchmark_group("enhance 1 s at 16 kHz");
    group.sample_size(10);
    for mode in Mode::ALL {
        let ecfg = EnhancerConfig::for_mode(mode);
        group.bench_function(mode.name(), |b| {
            b.iter(|| enhance(black_box(&noisy), cfg.sample_rate, &ecfg).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, one_second);
criterion_main!(benches);
