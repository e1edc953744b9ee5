//! STFT analysis/synthesis and the time/frequency containers shared by every
//! other module.
//!
//! Analysis uses a periodic window and a one-sided spectrum with no implicit
//! padding: a signal of `len` samples yields `1 + (len - window_len) / hop`
//! frames. Synthesis is the least-squares inverse (weighted overlap-add
//! normalized by the summed squared window), which reconstructs every sample
//! covered by at least one frame.

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_SAMPLE_RATE: u32 = 16_000;

/// Mono waveform with its sample rate. Samples are finite by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSignal {
    samples: Vec<f64>,
    sample_rate: u32,
}

impl TimeSignal {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::Signal("sample rate must be positive".into()));
        }
        if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::Signal(format!("non-finite sample at index {i}")));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn zeros(len: usize, sample_rate: u32) -> Self {
        Self {
            samples: vec![0.0; len],
            sample_rate: sample_rate.max(1),
        }
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    pub fn energy(&self) -> f64 {
        self.samples.iter().map(|v| v * v).sum()
    }

    /// Truncates or zero-pads at the end to exactly `len` samples.
    pub fn fit_to_len(&self, len: usize) -> Self {
        let mut samples = self.samples.clone();
        samples.resize(len, 0.0);
        Self {
            samples,
            sample_rate: self.sample_rate,
        }
    }

    pub fn scaled(&self, gain: f64) -> Self {
        Self {
            samples: self.samples.iter().map(|v| v * gain).collect(),
            sample_rate: self.sample_rate,
        }
    }

    /// Sample-wise sum. Lengths must match.
    pub fn add(&self, other: &TimeSignal) -> Result<Self> {
        if self.len() != other.len() {
            return Err(Error::Shape(format!(
                "cannot add signals of length {} and {}",
                self.len(),
                other.len()
            )));
        }
        Ok(Self {
            samples: self
                .samples
                .iter()
                .zip(&other.samples)
                .map(|(a, b)| a + b)
                .collect(),
            sample_rate: self.sample_rate,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowKind {
    Hamming,
    Hann,
}

impl WindowKind {
    /// Periodic window of length `n`.
    pub fn coefficients(self, n: usize) -> Vec<f64> {
        let (a0, a1) = match self {
            WindowKind::Hamming => (0.54, 0.46),
            WindowKind::Hann => (0.5, 0.5),
        };
        (0..n)
            .map(|i| a0 - a1 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos())
            .collect()
    }
}

impl std::str::FromStr for WindowKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hamming" => Ok(WindowKind::Hamming),
            "hann" => Ok(WindowKind::Hann),
            other => Err(Error::Config(format!("unknown window kind `{other}`"))),
        }
    }
}

/// Framing parameters. Defaults are 20 ms Hamming windows with a 10 ms hop at 16 kHz.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StftConfig {
    pub window_len: usize,
    pub hop: usize,
    pub window: WindowKind,
}

impl Default for StftConfig {
    fn default() -> Self {
        Self {
            window_len: 320,
            hop: 160,
            window: WindowKind::Hamming,
        }
    }
}

impl StftConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window_len == 0 || !self.window_len.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "window_len must be even and positive, got {}",
                self.window_len
            )));
        }
        if self.hop == 0 || self.hop > self.window_len {
            return Err(Error::Config(format!(
                "hop must be in [1, window_len], got {}",
                self.hop
            )));
        }
        Ok(())
    }

    pub fn n_bins(&self) -> usize {
        self.window_len / 2 + 1
    }

    /// Number of analysis frames for a signal of `len` samples (zero if shorter than a window).
    pub fn n_frames(&self, len: usize) -> usize {
        if len < self.window_len {
            0
        } else {
            1 + (len - self.window_len) / self.hop
        }
    }

    /// Number of samples spanned by `n_frames` frames.
    pub fn covered_len(&self, n_frames: usize) -> usize {
        if n_frames == 0 {
            0
        } else {
            (n_frames - 1) * self.hop + self.window_len
        }
    }

    /// Smallest length `>= len` that the framing covers completely.
    pub fn padded_len(&self, len: usize) -> usize {
        if len <= self.window_len {
            return self.window_len;
        }
        let extra = len - self.window_len;
        self.window_len + extra.div_ceil(self.hop) * self.hop
    }
}

/// Complex one-sided T-F matrix stored frame-major (`[n_frames][n_bins]`).
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    data: Vec<Complex64>,
    n_frames: usize,
    n_bins: usize,
    config: StftConfig,
    sample_rate: u32,
}

impl Spectrogram {
    pub fn zeros(n_frames: usize, config: StftConfig, sample_rate: u32) -> Self {
        let n_bins = config.n_bins();
        Self {
            data: vec![Complex64::new(0.0, 0.0); n_frames * n_bins],
            n_frames,
            n_bins,
            config,
            sample_rate,
        }
    }

    pub fn from_data(
        data: Vec<Complex64>,
        n_frames: usize,
        config: StftConfig,
        sample_rate: u32,
    ) -> Result<Self> {
        let n_bins = config.n_bins();
        if data.len() != n_frames * n_bins {
            return Err(Error::Shape(format!(
                "expected {} x {} = {} units, got {}",
                n_frames,
                n_bins,
                n_frames * n_bins,
                data.len()
            )));
        }
        if data.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(Error::Signal(
                "spectrogram contains non-finite values".into(),
            ));
        }
        Ok(Self {
            data,
            n_frames,
            n_bins,
            config,
            sample_rate,
        })
    }

    /// Same shape and metadata as `self`, with new contents.
    pub fn with_data(&self, data: Vec<Complex64>) -> Result<Self> {
        Self::from_data(data, self.n_frames, self.config, self.sample_rate)
    }

    pub fn n_frames(&self) -> usize {
        self.n_frames
    }

    pub fn n_bins(&self) -> usize {
        self.n_bins
    }

    pub fn config(&self) -> &StftConfig {
        &self.config
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    pub fn get(&self, t: usize, f: usize) -> Complex64 {
        self.data[t * self.n_bins + f]
    }

    pub fn set(&mut self, t: usize, f: usize, value: Complex64) {
        self.data[t * self.n_bins + f] = value;
    }

    pub fn frame(&self, t: usize) -> &[Complex64] {
        &self.data[t * self.n_bins..(t + 1) * self.n_bins]
    }

    pub fn column(&self, f: usize) -> Vec<Complex64> {
        (0..self.n_frames).map(|t| self.get(t, f)).collect()
    }

    pub fn set_column(&mut self, f: usize, values: &[Complex64]) {
        debug_assert_eq!(values.len(), self.n_frames);
        for (t, v) in values.iter().enumerate() {
            self.set(t, f, *v);
        }
    }

    pub fn energy(&self) -> f64 {
        self.data.iter().map(|c| c.norm_sqr()).sum()
    }

    pub fn same_shape(&self, other: &Spectrogram) -> bool {
        self.n_frames == other.n_frames && self.n_bins == other.n_bins
    }

    pub fn ensure_same_shape(&self, other: &Spectrogram) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::Shape(format!(
                "spectrogram {}x{} vs {}x{}",
                self.n_frames, self.n_bins, other.n_frames, other.n_bins
            )))
        }
    }

    /// Pointwise `self - other`.
    pub fn sub(&self, other: &Spectrogram) -> Result<Self> {
        self.ensure_same_shape(other)?;
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a - b)
            .collect();
        Ok(Self {
            data,
            ..self.clone()
        })
    }
}

/// One-sided STFT of `sig` without padding.
pub fn stft_forward(sig: &TimeSignal, cfg: &StftConfig) -> Result<Spectrogram> {
    cfg.validate()?;
    let n = cfg.window_len;
    if sig.len() < n {
        return Err(Error::Length {
            len: sig.len(),
            needed: n,
        });
    }
    let n_frames = cfg.n_frames(sig.len());
    let n_bins = cfg.n_bins();
    let window = cfg.window.coefficients(n);
    let fft = FftPlanner::<f64>::new().plan_fft_forward(n);

    let mut data = Vec::with_capacity(n_frames * n_bins);
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    let samples = sig.samples();
    for t in 0..n_frames {
        let start = t * cfg.hop;
        for (i, slot) in buf.iter_mut().enumerate() {
            *slot = Complex64::new(samples[start + i] * window[i], 0.0);
        }
        fft.process_with_scratch(&mut buf, &mut scratch);
        data.extend_from_slice(&buf[..n_bins]);
    }
    Ok(Spectrogram {
        data,
        n_frames,
        n_bins,
        config: *cfg,
        sample_rate: sig.sample_rate(),
    })
}

/// Least-squares inverse STFT. Output length is `(n_frames - 1) * hop + window_len`.
pub fn stft_inverse(spec: &Spectrogram) -> Result<TimeSignal> {
    let cfg = spec.config();
    cfg.validate()?;
    if spec.n_bins() != cfg.n_bins() || spec.as_slice().len() != spec.n_frames() * spec.n_bins() {
        return Err(Error::Shape(format!(
            "{} bins inconsistent with window_len {}",
            spec.n_bins(),
            cfg.window_len
        )));
    }
    let n = cfg.window_len;
    let out_len = cfg.covered_len(spec.n_frames());
    let window = cfg.window.coefficients(n);
    let ifft = FftPlanner::<f64>::new().plan_fft_inverse(n);

    let mut out = vec![0.0; out_len];
    let mut norm = vec![0.0; out_len];
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    let mut scratch = vec![Complex64::new(0.0, 0.0); ifft.get_inplace_scratch_len()];
    let half = n / 2;
    for t in 0..spec.n_frames() {
        let frame = spec.frame(t);
        buf[0] = Complex64::new(frame[0].re, 0.0);
        buf[half] = Complex64::new(frame[half].re, 0.0);
        for k in 1..half {
            buf[k] = frame[k];
            buf[n - k] = frame[k].conj();
        }
        ifft.process_with_scratch(&mut buf, &mut scratch);
        let start = t * cfg.hop;
        for i in 0..n {
            out[start + i] += window[i] * buf[i].re / n as f64;
            norm[start + i] += window[i] * window[i];
        }
    }
    for (o, w) in out.iter_mut().zip(&norm) {
        if *w > 1e-12 {
            *o /= w;
        } else {
            *o = 0.0;
        }
    }
    TimeSignal::new(out, spec.sample_rate())
}

/// `[X(t,f), X(t-1,f), ..., X(t-K+1,f)]`, reading frames before 0 as zero.
pub fn delay_stack(spec: &Spectrogram, t: usize, f: usize, taps: usize) -> Vec<Complex64> {
    (0..taps)
        .map(|k| {
            if k <= t {
                spec.get(t - k, f)
            } else {
                Complex64::new(0.0, 0.0)
            }
        })
        .collect()
}

/// Full linear convolution (`a.len() + b.len() - 1` samples) via FFT.
pub fn fft_convolve(a: &[f64], b: &[f64]) -> Vec<f64> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let out_len = a.len() + b.len() - 1;
    if a.len().min(b.len()) <= 32 {
        let mut out = vec![0.0; out_len];
        for (i, av) in a.iter().enumerate() {
            if *av == 0.0 {
                continue;
            }
            for (j, bv) in b.iter().enumerate() {
                out[i + j] += av * bv;
            }
        }
        return out;
    }
    let n = out_len.next_power_of_two();
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    let mut fa: Vec<Complex64> = a.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fa.resize(n, Complex64::new(0.0, 0.0));
    let mut fb: Vec<Complex64> = b.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fb.resize(n, Complex64::new(0.0, 0.0));
    fwd.process(&mut fa);
    fwd.process(&mut fb);
    for (x, y) in fa.iter_mut().zip(&fb) {
        *x *= y;
    }
    inv.process(&mut fa);
    fa[..out_len].iter().map(|c| c.re / n as f64).collect()
}
