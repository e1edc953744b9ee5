//! Speech-like test excitation.
//!
//! Syllable-rate bursts of glottal pulse trains or noise, shaped by three
//! formant resonators and separated by pauses. Used where no recorded corpus
//! is available (tests, benchmarks, the acceptance suite).

use rand::Rng;
use rand_distr::StandardNormal;

use crate::dsp::TimeSignal;

/// Overall RMS of generated signals.
pub const SPEECH_RMS: f64 = 0.15;

struct Resonator {
    a1: f64,
    a2: f64,
    gain: f64,
    y1: f64,
    y2: f64,
}

impl Resonator {
    fn new() -> Self {
        Self {
            a1: 0.0,
            a2: 0.0,
            gain: 1.0,
            y1: 0.0,
            y2: 0.0,
        }
    }

    fn tune(&mut self, freq: f64, bandwidth: f64, fs: f64) {
        let r = (-std::f64::consts::PI * bandwidth / fs).exp();
        let theta = 2.0 * std::f64::consts::PI * freq / fs;
        self.a1 = 2.0 * r * theta.cos();
        self.a2 = -r * r;
        self.gain = 1.0 - r;
    }

    fn step(&mut self, x: f64) -> f64 {
        let y = self.gain * x + self.a1 * self.y1 + self.a2 * self.y2;
        self.y2 = self.y1;
        self.y1 = y;
        y
    }
}

/// Generates `len` samples of speech-like signal at `sample_rate`, normalized to [`SPEECH_RMS`].
pub fn speech_like<R: Rng + ?Sized>(rng: &mut R, len: usize, sample_rate: u32) -> TimeSignal {
    let fs = sample_rate as f64;
    let mut out = vec![0.0; len];
    let mut formants = [Resonator::new(), Resonator::new(), Resonator::new()];
    let mut n = (rng.random_range(0.0..0.2) * fs) as usize;
    let mut phase = 0.0;

    while n < len {
        let syllable = (rng.random_range(0.12..0.4) * fs) as usize;
        let voiced = rng.random_bool(0.75);
        let f0_start = rng.random_range(90.0..220.0);
        let f0_end = f0_start * rng.random_range(0.8..1.2);
        let level = rng.random_range(0.4..1.0);
        let bands = [
            (
                rng.random_range(300.0..900.0),
                rng.random_range(60.0..120.0),
            ),
            (
                rng.random_range(900.0..2500.0),
                rng.random_range(80.0..160.0),
            ),
            (
                rng.random_range(2500.0..3800.0),
                rng.random_range(120.0..250.0),
            ),
        ];
        for (res, (f, b)) in formants.iter_mut().zip(bands) {
            res.tune(f, b, fs);
        }
        for i in 0..syllable.min(len - n) {
            let pos = i as f64 / syllable as f64;
            let env = level * (std::f64::consts::PI * pos).sin().powi(2);
            let excitation = if voiced {
                let f0 = f0_start + (f0_end - f0_start) * pos;
                phase += f0 / fs;
                let pulse = if phase >= 1.0 {
                    phase -= 1.0;
                    1.0
                } else {
                    0.0
                };
                pulse * 8.0 + 0.05 * rng.sample::<f64, _>(StandardNormal)
            } else {
                0.5 * rng.sample::<f64, _>(StandardNormal)
            };
            let mut v = excitation;
            for res in formants.iter_mut() {
                v = res.step(v) * 4.0;
            }
            out[n + i] = env * v;
        }
        n += syllable + (rng.random_range(0.03..0.3) * fs) as usize;
    }

    let rms = (out.iter().map(|v| v * v).sum::<f64>() / len.max(1) as f64).sqrt();
    if rms > 0.0 {
        let g = SPEECH_RMS / rms;
        out.iter_mut().for_each(|v| *v *= g);
    }
    TimeSignal::new(out, sample_rate).expect("generator produces finite samples")
}
