//! Shoebox-room scene synthesis for the dual-microphone setup.
//!
//! Four image-method RIRs couple two sources to two microphones:
//!
//! | RIR | source      | microphone |
//! |-----|-------------|------------|
//! | h1  | talker      | main       |
//! | h2  | loudspeaker | main       |
//! | h3  | talker      | reference  |
//! | h4  | loudspeaker | reference  |
//!
//! The main microphone records `y = v*h1 + g (x_nl*h2)` and the reference
//! microphone, sitting on a 5-20 cm shell around the loudspeaker, records
//! `r = v*h3 + g (x_nl*h4)`. The echo gain `g` sets the signal-to-echo ratio
//! and is applied to both loudspeaker paths.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dsp::{fft_convolve, TimeSignal};
use crate::error::{Error, Result};
use crate::nonlinearity::{apply_nonlinearity_with, NonlinearityKind, NonlinearityParams};

pub const WALL_MARGIN: f64 = 0.1;
pub const REF_SHELL_MIN: f64 = 0.05;
pub const REF_SHELL_MAX: f64 = 0.2;
/// Minimum distance between the talker, the loudspeaker and the main microphone.
pub const MIN_SEPARATION: f64 = 0.5;
pub const DEFAULT_SPLIT_MS: f64 = 50.0;
pub const SCENE_SECONDS: f64 = 6.0;
/// Cutoff of the DC-removal filter applied to reverberant RIRs.
pub const HIGHPASS_HZ: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn distance(&self, other: &Point) -> f64 {
        ((self.x - other.x).powi(2) + (self.y - other.y).powi(2) + (self.z - other.z).powi(2))
            .sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoomSpec {
    pub length: f64,
    pub width: f64,
    pub height: f64,
    pub t60: f64,
    pub speed_of_sound: f64,
    pub sample_rate: u32,
    /// Reflection-order cap; `None` includes every image that arrives within `rir_len`.
    pub max_order: Option<u32>,
    /// RIR length in samples; `None` uses `1.2 * t60 * fs`.
    pub rir_len: Option<usize>,
}

impl RoomSpec {
    pub fn new(length: f64, width: f64, height: f64, t60: f64) -> Self {
        Self {
            length,
            width,
            height,
            t60,
            speed_of_sound: 343.0,
            sample_rate: crate::dsp::DEFAULT_SAMPLE_RATE,
            max_order: None,
            rir_len: None,
        }
    }

    /// Random room in the dataset ranges: 4-8 x 3-7 x 3-5 m, T60 0.1-0.8 s.
    pub fn sample<R: Rng + ?Sized>(rng: &mut R) -> Self {
        Self::new(
            rng.random_range(4.0..=8.0),
            rng.random_range(3.0..=7.0),
            rng.random_range(3.0..=5.0),
            rng.random_range(0.1..=0.8),
        )
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [self.length, self.width, self.height];
        if dims
            .iter()
            .any(|d| !(*d > 2.0 * WALL_MARGIN) || !d.is_finite())
        {
            return Err(Error::Geometry(format!("invalid room dimensions {dims:?}")));
        }
        if !(self.t60 > 0.0) || !self.t60.is_finite() {
            return Err(Error::Geometry(format!(
                "t60 must be positive, got {}",
                self.t60
            )));
        }
        if !(self.speed_of_sound > 0.0) || self.sample_rate == 0 {
            return Err(Error::Geometry(
                "speed of sound and sample rate must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn volume(&self) -> f64 {
        self.length * self.width * self.height
    }

    pub fn surface_area(&self) -> f64 {
        2.0 * (self.length * self.width + self.length * self.height + self.width * self.height)
    }

    /// Uniform wall absorption from Eyring's formula `T60 = 24 ln10 V / (-c S ln(1 - alpha))`.
    pub fn absorption(&self) -> f64 {
        let k = 24.0 * std::f64::consts::LN_10 / self.speed_of_sound;
        1.0 - (-k * self.volume() / (self.surface_area() * self.t60)).exp()
    }

    /// Pressure reflection coefficient used by [`image_method_rir`].
    ///
    /// Eyring assumes a diffuse field, but in a shoebox image lattice the
    /// reflection rate depends on direction and the late decay is set by the
    /// directions that meet the fewest walls, so `sqrt(1 - alpha)` rings
    /// about 1.5x too long. Starting from the Eyring value, the per-reflection
    /// energy loss is rescaled until a direction-averaged model of the image
    /// lattice (truncated like the RIR and fitted like [`schroeder_t60`])
    /// decays in `t60`.
    pub fn reflection_coefficient(&self) -> f64 {
        (-0.5 * self.image_decay_constant()).exp()
    }

    /// Energy loss per reflection, `-ln(beta^2)`.
    fn image_decay_constant(&self) -> f64 {
        const N: usize = 24;
        const STEPS: usize = 200;
        let c = self.speed_of_sound;
        let dims = [self.length, self.width, self.height];
        // Reflections per second along each direction of one octant, with solid-angle weights.
        let mut rates = Vec::with_capacity(N * N);
        let step = std::f64::consts::FRAC_PI_2 / N as f64;
        for i in 0..N {
            let theta = (i as f64 + 0.5) * step;
            for j in 0..N {
                let phi = (j as f64 + 0.5) * step;
                let u = [
                    theta.sin() * phi.cos(),
                    theta.sin() * phi.sin(),
                    theta.cos(),
                ];
                let rate = c * (0..3).map(|a| u[a] / dims[a]).sum::<f64>();
                rates.push((rate, theta.sin()));
            }
        }
        let t_end = self.rir_len_samples() as f64 / self.sample_rate as f64;
        let model_t60 = |kappa: f64| -> Option<f64> {
            let edc = |t: f64| -> f64 {
                rates
                    .iter()
                    .map(|&(g, w)| {
                        w * ((-kappa * g * t).exp() - (-kappa * g * t_end).exp()) / (kappa * g)
                    })
                    .sum()
            };
            let e0 = edc(0.0);
            let pts: Vec<(f64, f64)> = (0..STEPS)
                .map(|k| {
                    let t = t_end * k as f64 / STEPS as f64;
                    (t, 10.0 * (edc(t) / e0).log10())
                })
                .filter(|(_, db)| (-25.0..=-5.0).contains(db))
                .collect();
            fit_decay_slope(&pts).map(|slope| -60.0 / slope)
        };
        let mut kappa = -(1.0 - self.absorption()).ln();
        for _ in 0..8 {
            match model_t60(kappa) {
                Some(t) if t.is_finite() && t > 0.0 => kappa *= t / self.t60,
                _ => break,
            }
        }
        kappa
    }

    pub fn rir_len_samples(&self) -> usize {
        self.rir_len
            .unwrap_or_else(|| (1.2 * self.t60 * self.sample_rate as f64).ceil() as usize)
            .max(1)
    }

    pub fn contains(&self, p: &Point, margin: f64) -> bool {
        p.x >= margin
            && p.x <= self.length - margin
            && p.y >= margin
            && p.y <= self.width - margin
            && p.z >= margin
            && p.z <= self.height - margin
    }
}

/// Source and microphone placement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SceneGeometry {
    pub loudspeaker: Point,
    pub talker: Point,
    pub main_mic: Point,
    pub ref_mic: Point,
}

fn uniform_point<R: Rng + ?Sized>(rng: &mut R, lo: [f64; 3], hi: [f64; 3]) -> Point {
    Point::new(
        rng.random_range(lo[0]..=hi[0]),
        rng.random_range(lo[1]..=hi[1]),
        rng.random_range(lo[2]..=hi[2]),
    )
}

impl SceneGeometry {
    /// Main-mic box: `[l/10, l - l/10] x [w/10, w - w/10] x [1, min(h - 1, 3)]`.
    pub fn main_mic_bounds(room: &RoomSpec) -> ([f64; 3], [f64; 3]) {
        (
            [room.length / 10.0, room.width / 10.0, 1.0],
            [
                room.length - room.length / 10.0,
                room.width - room.width / 10.0,
                (room.height - 1.0).min(3.0),
            ],
        )
    }

    /// Rejection-samples a placement satisfying every geometry rule.
    pub fn sample<R: Rng + ?Sized>(rng: &mut R, room: &RoomSpec) -> Result<Self> {
        room.validate()?;
        let lo = [WALL_MARGIN; 3];
        let hi = [
            room.length - WALL_MARGIN,
            room.width - WALL_MARGIN,
            room.height - WALL_MARGIN,
        ];
        let (mic_lo, mic_hi) = Self::main_mic_bounds(room);
        if (0..3).any(|i| mic_lo[i] > mic_hi[i]) {
            return Err(Error::Geometry("empty main-microphone region".into()));
        }
        for _ in 0..10_000 {
            let loudspeaker = uniform_point(rng, lo, hi);
            let main_mic = uniform_point(rng, mic_lo, mic_hi);
            let talker = uniform_point(rng, lo, hi);
            // Uniform in the shell volume.
            let (r0, r1) = (REF_SHELL_MIN.powi(3), REF_SHELL_MAX.powi(3));
            let radius = rng.random_range(r0..=r1).cbrt();
            let cos_theta: f64 = rng.random_range(-1.0..=1.0);
            let phi = rng.random_range(0.0..std::f64::consts::TAU);
            let sin_theta = (1.0 - cos_theta * cos_theta).sqrt();
            let ref_mic = Point::new(
                loudspeaker.x + radius * sin_theta * phi.cos(),
                loudspeaker.y + radius * sin_theta * phi.sin(),
                loudspeaker.z + radius * cos_theta,
            );
            let geom = Self {
                loudspeaker,
                talker,
                main_mic,
                ref_mic,
            };
            if geom.validate(room).is_ok() {
                return Ok(geom);
            }
        }
        Err(Error::Geometry("no valid placement found".into()))
    }

    pub fn validate(&self, room: &RoomSpec) -> Result<()> {
        for (name, p) in [
            ("loudspeaker", &self.loudspeaker),
            ("talker", &self.talker),
            ("main mic", &self.main_mic),
            ("reference mic", &self.ref_mic),
        ] {
            if !room.contains(p, WALL_MARGIN) {
                return Err(Error::Geometry(format!("{name} {p:?} outside room margin")));
            }
        }
        let shell = self.ref_mic.distance(&self.loudspeaker);
        if !(REF_SHELL_MIN - 1e-12..=REF_SHELL_MAX + 1e-12).contains(&shell) {
            return Err(Error::Geometry(format!(
                "reference mic {shell:.3} m from loudspeaker, need [{REF_SHELL_MIN}, {REF_SHELL_MAX}]"
            )));
        }
        let (mic_lo, mic_hi) = Self::main_mic_bounds(room);
        let m = [self.main_mic.x, self.main_mic.y, self.main_mic.z];
        if (0..3).any(|i| m[i] < mic_lo[i] || m[i] > mic_hi[i]) {
            return Err(Error::Geometry(format!(
                "main mic {m:?} outside its region"
            )));
        }
        let pairs = [
            (&self.talker, &self.loudspeaker),
            (&self.talker, &self.main_mic),
            (&self.loudspeaker, &self.main_mic),
            (&self.talker, &self.ref_mic),
        ];
        if pairs.iter().any(|(a, b)| a.distance(b) < MIN_SEPARATION) {
            return Err(Error::Geometry(format!(
                "sources and microphones must be at least {MIN_SEPARATION} m apart"
            )));
        }
        Ok(())
    }
}

/// Sample index of the direct-path arrival.
pub fn direct_path_delay(room: &RoomSpec, src: &Point, mic: &Point) -> usize {
    (src.distance(mic) * room.sample_rate as f64 / room.speed_of_sound).round() as usize
}

/// Image-method RIR with uniform wall reflection from the room's T60.
///
/// Each image contributes `beta^order / (4 pi d)` at the nearest sample to its
/// delay. Late images pile up several per sample with the same sign, which
/// builds a DC component that stretches the decay, so unless reflections are
/// disabled (`max_order = Some(0)`) the result is high-passed at
/// [`HIGHPASS_HZ`] with the Allen-Berkley filter.
pub fn image_method_rir(room: &RoomSpec, src: &Point, mic: &Point) -> Result<Vec<f64>> {
    room.validate()?;
    image_rir_with_beta(room, room.reflection_coefficient(), src, mic)
}

fn image_rir_with_beta(room: &RoomSpec, beta: f64, src: &Point, mic: &Point) -> Result<Vec<f64>> {
    if !room.contains(src, 0.0) || !room.contains(mic, 0.0) {
        return Err(Error::Geometry(
            "source and microphone must be inside the room".into(),
        ));
    }
    if src.distance(mic) < 0.01 {
        return Err(Error::Geometry(
            "source and microphone closer than 1 cm".into(),
        ));
    }
    let len = room.rir_len_samples();
    let fs = room.sample_rate as f64;
    let samples_per_metre = fs / room.speed_of_sound;
    let max_dist = (len as f64 - 0.5) / samples_per_metre;
    let max_order = room.max_order.map(|o| o as i64);
    let dims = [room.length, room.width, room.height];
    let s = [src.x, src.y, src.z];
    let m = [mic.x, mic.y, mic.z];

    // Per axis: (offset, reflection count) for every image coordinate within range.
    let axis_terms: Vec<Vec<(f64, i64)>> = (0..3)
        .map(|a| {
            let n = (max_dist / (2.0 * dims[a])).ceil() as i64 + 1;
            let mut terms = Vec::new();
            for mi in -n..=n {
                for q in 0..=1i64 {
                    let offset = (1 - 2 * q) as f64 * s[a] - m[a] + 2.0 * mi as f64 * dims[a];
                    if offset.abs() <= max_dist {
                        terms.push((offset, (2 * mi - q).abs()));
                    }
                }
            }
            terms
        })
        .collect();

    let mut rir = vec![0.0; len];
    let norm = 1.0 / (4.0 * std::f64::consts::PI);
    for &(dx, ox) in &axis_terms[0] {
        for &(dy, oy) in &axis_terms[1] {
            let dxy2 = dx * dx + dy * dy;
            if dxy2 > max_dist * max_dist {
                continue;
            }
            for &(dz, oz) in &axis_terms[2] {
                let order = ox + oy + oz;
                if max_order.is_some_and(|cap| order > cap) {
                    continue;
                }
                let dist = (dxy2 + dz * dz).sqrt();
                let idx = (dist * samples_per_metre).round() as usize;
                if idx < len {
                    rir[idx] += beta.powi(order as i32) * norm / dist;
                }
            }
        }
    }
    if max_order != Some(0) {
        highpass_in_place(&mut rir, fs, HIGHPASS_HZ);
    }
    Ok(rir)
}

/// Allen-Berkley two-pole DC-removal filter. Causal with a unit first tap,
/// so the direct-path arrival keeps its position and amplitude.
fn highpass_in_place(h: &mut [f64], fs: f64, cutoff_hz: f64) {
    let w = std::f64::consts::TAU * cutoff_hz / fs;
    let r1 = (-w).exp();
    let b1 = 2.0 * r1 * w.cos();
    let b2 = -r1 * r1;
    let a1 = -(1.0 + r1);
    let (mut x1, mut x2, mut y1, mut y2) = (0.0, 0.0, 0.0, 0.0);
    for v in h.iter_mut() {
        let x0 = *v;
        let y0 = b1 * y1 + b2 * y2 + x0 + a1 * x1 + r1 * x2;
        (x2, x1, y2, y1) = (x1, x0, y1, y0);
        *v = y0;
    }
}

/// Reverberation time from Schroeder backward integration, fitted over the
/// -5 dB to -25 dB span of the energy decay curve and extrapolated to 60 dB.
pub fn schroeder_t60(rir: &[f64], sample_rate: u32) -> Option<f64> {
    let mut edc = vec![0.0; rir.len()];
    let mut acc = 0.0;
    for i in (0..rir.len()).rev() {
        acc += rir[i] * rir[i];
        edc[i] = acc;
    }
    let total = *edc.first()?;
    if total <= 0.0 {
        return None;
    }
    let points: Vec<(f64, f64)> = edc
        .iter()
        .enumerate()
        .map(|(i, e)| (i as f64, 10.0 * (e / total).log10()))
        .filter(|(_, db)| (-25.0..=-5.0).contains(db))
        .collect();
    let slope = fit_decay_slope(&points)?;
    Some(-60.0 / slope / sample_rate as f64)
}

/// Least-squares slope of `(t, dB)` points; `None` unless it is negative.
fn fit_decay_slope(points: &[(f64, f64)]) -> Option<f64> {
    if points.len() < 2 {
        return None;
    }
    let n = points.len() as f64;
    let mean_t = points.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_db = points.iter().map(|p| p.1).sum::<f64>() / n;
    let cov: f64 = points
        .iter()
        .map(|p| (p.0 - mean_t) * (p.1 - mean_db))
        .sum();
    let var: f64 = points.iter().map(|p| (p.0 - mean_t).powi(2)).sum();
    let slope = cov / var;
    (slope < 0.0).then_some(slope)
}

fn convolve_trim(sig: &TimeSignal, h: &[f64]) -> TimeSignal {
    let mut out = fft_convolve(sig.samples(), h);
    out.truncate(sig.len());
    out.resize(sig.len(), 0.0);
    TimeSignal::new(out, sig.sample_rate()).expect("convolution of finite inputs")
}

/// Splits `v * h1` into the direct part (taps up to `split_ms` after the
/// strongest tap) and the late remainder. The two parts sum to `v * h1`.
pub fn split_direct(v: &TimeSignal, h1: &[f64], split_ms: f64) -> Result<(TimeSignal, TimeSignal)> {
    if !(split_ms >= 0.0) {
        return Err(Error::Config(format!(
            "split_ms must be >= 0, got {split_ms}"
        )));
    }
    let onset = h1
        .iter()
        .enumerate()
        .fold((0, 0.0f64), |best, (i, v)| {
            if v.abs() > best.1 {
                (i, v.abs())
            } else {
                best
            }
        })
        .0;
    let boundary =
        (onset + 1 + (split_ms * v.sample_rate() as f64 / 1000.0).round() as usize).min(h1.len());
    let early = &h1[..boundary];
    let mut late = h1.to_vec();
    late[..boundary].iter_mut().for_each(|t| *t = 0.0);
    let direct = convolve_trim(v, early);
    let reverb = if boundary < h1.len() {
        convolve_trim(v, &late)
    } else {
        TimeSignal::zeros(v.len(), v.sample_rate())
    };
    Ok((direct, reverb))
}

/// Scales `d` by `g` so that `10 log10(|s|^2 / |g d|^2) = ser_db`; returns `(s + g d, g)`.
pub fn mix_at_ser(s: &TimeSignal, d: &TimeSignal, ser_db: f64) -> Result<(TimeSignal, f64)> {
    if s.len() != d.len() {
        return Err(Error::Shape(format!(
            "near-end {} vs echo {} samples",
            s.len(),
            d.len()
        )));
    }
    let (es, ed) = (s.energy(), d.energy());
    if !(es > 0.0) || !(ed > 0.0) {
        return Err(Error::Mixing(
            "near-end and echo must both have nonzero energy".into(),
        ));
    }
    let gain = (es / (ed * 10f64.powf(ser_db / 10.0))).sqrt();
    Ok((s.add(&d.scaled(gain))?, gain))
}

/// The four room impulse responses of a scene.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneRirs {
    pub h1: Vec<f64>,
    pub h2: Vec<f64>,
    pub h3: Vec<f64>,
    pub h4: Vec<f64>,
}

impl SceneRirs {
    pub fn compute(room: &RoomSpec, geom: &SceneGeometry) -> Result<Self> {
        geom.validate(room)?;
        room.validate()?;
        let beta = room.reflection_coefficient();
        Ok(Self {
            h1: image_rir_with_beta(room, beta, &geom.talker, &geom.main_mic)?,
            h2: image_rir_with_beta(room, beta, &geom.loudspeaker, &geom.main_mic)?,
            h3: image_rir_with_beta(room, beta, &geom.talker, &geom.ref_mic)?,
            h4: image_rir_with_beta(room, beta, &geom.loudspeaker, &geom.ref_mic)?,
        })
    }
}

fn energy(h: &[f64]) -> f64 {
    h.iter().map(|v| v * v).sum()
}

impl SceneRirs {
    /// `(|h4|^2 / |h3|^2, |h2|^2 / |h1|^2)`: far-to-near coupling at the reference and main mics.
    pub fn coupling_ratios(&self) -> (f64, f64) {
        (
            energy(&self.h4) / energy(&self.h3),
            energy(&self.h2) / energy(&self.h1),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SceneOptions {
    /// Output length; inputs are trimmed or zero-padded. `None` keeps the input length.
    pub duration_secs: Option<f64>,
    pub split_ms: f64,
    pub nonlinearity: NonlinearityParams,
}

impl Default for SceneOptions {
    fn default() -> Self {
        Self {
            duration_secs: Some(SCENE_SECONDS),
            split_ms: DEFAULT_SPLIT_MS,
            nonlinearity: NonlinearityParams::default(),
        }
    }
}

/// All signals of one synthesized scene.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub x: TimeSignal,
    pub x_nl: TimeSignal,
    pub v: TimeSignal,
    pub s: TimeSignal,
    pub s_direct: TimeSignal,
    pub s_reverb: TimeSignal,
    pub d: TimeSignal,
    pub y: TimeSignal,
    pub r: TimeSignal,
    pub r_far: TimeSignal,
    pub r_near: TimeSignal,
    pub rirs: SceneRirs,
    pub room: RoomSpec,
    pub geometry: SceneGeometry,
    pub ser_db: f64,
    /// Gain applied to both loudspeaker paths; 1 when either talker is silent.
    pub echo_gain: f64,
    pub nonlinearity: NonlinearityKind,
    pub seed: u64,
}

/// Synthesizes a scene, computing the RIRs.
#[allow(clippy::too_many_arguments)]
pub fn synthesize_scene(
    room: &RoomSpec,
    geom: &SceneGeometry,
    v: &TimeSignal,
    x: &TimeSignal,
    kind: &NonlinearityKind,
    ser_db: f64,
    seed: u64,
    opts: &SceneOptions,
) -> Result<Scene> {
    let rirs = SceneRirs::compute(room, geom)?;
    synthesize_with_rirs(room, geom, rirs, v, x, kind, ser_db, seed, opts)
}

/// Synthesizes a scene from precomputed RIRs, so one geometry can be reused
/// under several nonlinearities.
#[allow(clippy::too_many_arguments)]
pub fn synthesize_with_rirs(
    room: &RoomSpec,
    geom: &SceneGeometry,
    rirs: SceneRirs,
    v: &TimeSignal,
    x: &TimeSignal,
    kind: &NonlinearityKind,
    ser_db: f64,
    seed: u64,
    opts: &SceneOptions,
) -> Result<Scene> {
    geom.validate(room)?;
    if v.sample_rate() != x.sample_rate() || v.sample_rate() != room.sample_rate {
        return Err(Error::Signal(format!(
            "sample rates differ: near {} Hz, far {} Hz, room {} Hz",
            v.sample_rate(),
            x.sample_rate(),
            room.sample_rate
        )));
    }
    let len = match opts.duration_secs {
        Some(secs) => (secs * room.sample_rate as f64).round() as usize,
        None => v.len().max(x.len()),
    };
    let v = v.fit_to_len(len);
    let x = x.fit_to_len(len);

    let x_nl = apply_nonlinearity_with(&x, kind, &opts.nonlinearity);
    let (s_direct, s_reverb) = split_direct(&v, &rirs.h1, opts.split_ms)?;
    let s = s_direct.add(&s_reverb)?;
    let d_unit = convolve_trim(&x_nl, &rirs.h2);
    let r_far_unit = convolve_trim(&x_nl, &rirs.h4);
    let r_near = convolve_trim(&v, &rirs.h3);

    let echo_gain = if s.energy() > 0.0 && d_unit.energy() > 0.0 {
        mix_at_ser(&s, &d_unit, ser_db)?.1
    } else {
        1.0
    };
    let d = d_unit.scaled(echo_gain);
    let r_far = r_far_unit.scaled(echo_gain);
    let y = s.add(&d)?;
    let r = r_near.add(&r_far)?;

    Ok(Scene {
        x,
        x_nl,
        v,
        s,
        s_direct,
        s_reverb,
        d,
        y,
        r,
        r_far,
        r_near,
        rirs,
        room: *room,
        geometry: *geom,
        ser_db,
        echo_gain,
        nonlinearity: *kind,
        seed,
    })
}

/// Random SER on the integer grid `[-10, 10]` dB.
pub fn sample_ser<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.random_range(-10..=10) as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn room() -> RoomSpec {
        RoomSpec::new(6.0, 4.5, 3.2, 0.3)
    }

    #[test]
    fn anechoic_rir_is_single_impulse() {
        let mut r = room();
        r.max_order = Some(0);
        let (src, mic) = (Point::new(1.0, 1.0, 1.5), Point::new(3.0, 2.5, 1.2));
        let h = image_method_rir(&r, &src, &mic).unwrap();
        let nonzero: Vec<usize> = (0..h.len()).filter(|&i| h[i] != 0.0).collect();
        let d = src.distance(&mic);
        assert_eq!(nonzero, vec![direct_path_delay(&r, &src, &mic)]);
        assert!((h[nonzero[0]] - 1.0 / (4.0 * std::f64::consts::PI * d)).abs() < 1e-15);
    }

    #[test]
    fn reciprocity() {
        let r = room();
        let (a, b) = (Point::new(1.0, 1.0, 1.5), Point::new(4.2, 3.1, 2.0));
        let h_ab = image_method_rir(&r, &a, &b).unwrap();
        let h_ba = image_method_rir(&r, &b, &a).unwrap();
        for (p, q) in h_ab.iter().zip(&h_ba) {
            assert!((p - q).abs() < 1e-12);
        }
    }

    #[test]
    fn schroeder_matches_target_t60() {
        let r = room();
        let h =
            image_method_rir(&r, &Point::new(1.0, 1.0, 1.5), &Point::new(4.2, 3.1, 2.0)).unwrap();
        let t60 = schroeder_t60(&h, r.sample_rate).unwrap();
        assert!((0.225..=0.375).contains(&t60), "t60 {t60}");
    }

    #[test]
    fn schroeder_on_exponential_decay() {
        // Energy decays 60 dB in 0.5 s exactly.
        let fs = 16_000;
        let h: Vec<f64> = (0..12_000)
            .map(|i| 10f64.powf(-3.0 * i as f64 / (0.5 * fs as f64)))
            .collect();
        let t60 = schroeder_t60(&h, fs).unwrap();
        assert!((t60 - 0.5).abs() < 0.01, "{t60}");
    }

    #[test]
    fn too_close_is_geometry_error() {
        let p = Point::new(1.0, 1.0, 1.0);
        let q = Point::new(1.0, 1.0, 1.005);
        assert!(matches!(
            image_method_rir(&room(), &p, &q),
            Err(Error::Geometry(_))
        ));
    }

    #[test]
    fn split_direct_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let v = crate::source::speech_like(&mut rng, 8000, 16_000);
        let mut anechoic = vec![0.0; 400];
        anechoic[37] = 0.2;
        let (sd, sr) = split_direct(&v, &anechoic, 50.0).unwrap();
        assert!(sr.samples().iter().all(|x| *x == 0.0));
        assert!(sd.energy() > 0.0);

        let h = image_method_rir(
            &room(),
            &Point::new(1.0, 1.0, 1.5),
            &Point::new(4.2, 3.1, 2.0),
        )
        .unwrap();
        let whole = convolve_trim(&v, &h);
        let (sd, sr) = split_direct(&v, &h, 50.0).unwrap();
        for i in 0..v.len() {
            assert!((sd.samples()[i] + sr.samples()[i] - whole.samples()[i]).abs() < 1e-12);
        }

        let (sd0, _) = split_direct(&v, &h, 0.0).unwrap();
        let onset = (0..h.len())
            .max_by(|&a, &b| h[a].abs().total_cmp(&h[b].abs()))
            .unwrap();
        let mut tap = vec![0.0; onset + 1];
        tap[onset] = h[onset];
        let oracle = convolve_trim(&v, &tap);
        for (a, b) in sd0.samples().iter().zip(oracle.samples()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn ser_mixing() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let s = crate::source::speech_like(&mut rng, 8000, 16_000);
        let d = crate::source::speech_like(&mut rng, 8000, 16_000).scaled(0.3);
        let (y0, g0) = mix_at_ser(&s, &d, 0.0).unwrap();
        assert!((s.energy() / d.scaled(g0).energy() - 1.0).abs() < 1e-9);
        let (_, g10) = mix_at_ser(&s, &d, 10.0).unwrap();
        assert!((s.energy() / d.scaled(g10).energy() - 10.0).abs() < 1e-8);
        let (_, gm10) = mix_at_ser(&s, &d, -10.0).unwrap();
        assert!((gm10 / g10 - 10.0).abs() < 1e-9);
        for i in 0..y0.len() {
            assert_eq!(y0.samples()[i], s.samples()[i] + g0 * d.samples()[i]);
        }
        let silent = TimeSignal::zeros(8000, 16_000);
        assert!(matches!(
            mix_at_ser(&silent, &d, 0.0),
            Err(Error::Mixing(_))
        ));
    }

    #[test]
    fn sampled_geometry_obeys_rules() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let room = RoomSpec::sample(&mut rng);
            let g = SceneGeometry::sample(&mut rng, &room).unwrap();
            g.validate(&room).unwrap();
            let shell = g.ref_mic.distance(&g.loudspeaker);
            assert!((REF_SHELL_MIN..=REF_SHELL_MAX).contains(&shell));
        }
    }

    #[test]
    fn invalid_geometry_rejected_before_synthesis() {
        let room = room();
        let mut g = SceneGeometry::sample(&mut ChaCha8Rng::seed_from_u64(4), &room).unwrap();
        g.ref_mic = Point::new(g.loudspeaker.x, g.loudspeaker.y, g.loudspeaker.z + 0.5);
        let sig = TimeSignal::zeros(1600, 16_000);
        let err = synthesize_scene(
            &room,
            &g,
            &sig,
            &sig,
            &NonlinearityKind::Identity,
            0.0,
            0,
            &SceneOptions::default(),
        );
        assert!(matches!(err, Err(Error::Geometry(_))));
    }
}
