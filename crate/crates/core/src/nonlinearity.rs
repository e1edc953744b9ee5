//! Memoryless loudspeaker distortion models.
//!
//! Three parametric families (saturating, exponential, polynomial, each with a
//! strength parameter `b` in `[2, 5]`) form the "matched" set used for training
//! data. Two composites, hard or soft clipping followed by an asymmetric
//! sigmoid, form the "mismatched" set.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dsp::TimeSignal;

pub const B_MIN: f64 = 2.0;
pub const B_MAX: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NonlinearityKind {
    Identity,
    Saturating { b: f64 },
    Exponential { b: f64 },
    Polynomial { b: f64 },
    HardClipSigmoid,
    SoftClipSigmoid,
}

impl NonlinearityKind {
    pub fn is_matched(&self) -> bool {
        matches!(
            self,
            Self::Saturating { .. } | Self::Exponential { .. } | Self::Polynomial { .. }
        )
    }

    pub fn is_mismatched(&self) -> bool {
        matches!(self, Self::HardClipSigmoid | Self::SoftClipSigmoid)
    }

    pub fn b(&self) -> Option<f64> {
        match self {
            Self::Saturating { b } | Self::Exponential { b } | Self::Polynomial { b } => Some(*b),
            _ => None,
        }
    }
}

/// Logarithm used to map `b` to the polynomial coefficient.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LogBase {
    #[default]
    Natural,
    Ten,
}

/// Fixed constants of the composite models.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NonlinearityParams {
    pub x_max: f64,
    pub rho: f64,
    pub sigmoid_gain: f64,
    pub log_base: LogBase,
}

impl Default for NonlinearityParams {
    fn default() -> Self {
        Self {
            x_max: 0.7,
            rho: 2.0,
            sigmoid_gain: 2.0,
            log_base: LogBase::Natural,
        }
    }
}

/// `a x / sqrt(a^2 + x^2)` with `a = 5 / b`.
pub fn saturating(x: f64, b: f64) -> f64 {
    let a = 5.0 / b;
    a * x / (a * a + x * x).sqrt()
}

/// `1 - exp(-a x)` with `a = b / 10`.
pub fn exponential(x: f64, b: f64) -> f64 {
    let a = b / 10.0;
    -(-a * x).exp_m1()
}

pub fn polynomial_coefficient(b: f64, base: LogBase) -> f64 {
    let ratio = b / 10.0;
    let log = match base {
        LogBase::Natural => ratio.ln(),
        LogBase::Ten => ratio.log10(),
    };
    log + 0.1
}

/// `2 a x + a x^2 + x^3`.
pub fn polynomial_with_coefficient(x: f64, a: f64) -> f64 {
    2.0 * a * x + a * x * x + x * x * x
}

/// `2 a x + a x^2 + x^3` with `a = ln(b / 10) + 0.1`.
pub fn polynomial(x: f64, b: f64) -> f64 {
    polynomial_with_coefficient(x, polynomial_coefficient(b, LogBase::Natural))
}

pub fn hard_clip(x: f64, x_max: f64) -> f64 {
    x.clamp(-x_max, x_max)
}

/// `x x_max / sqrt(|x_max|^rho + |x|^rho)`.
pub fn soft_clip(x: f64, x_max: f64, rho: f64) -> f64 {
    if x == 0.0 {
        return 0.0;
    }
    x * x_max / (x_max.abs().powf(rho) + x.abs().powf(rho)).sqrt()
}

/// Asymmetric sigmoid with gain 2: `2 (1 / (1 + exp(-nu z)) - 1/2)`.
pub fn sigmoid_stage(x: f64) -> f64 {
    sigmoid_stage_with_gain(x, NonlinearityParams::default().sigmoid_gain)
}

/// `gain (1 / (1 + exp(-nu z)) - 1/2)`, `z = 1.5 x - 0.3 x^2`, `nu = 4` for `z > 0` else `0.5`.
pub fn sigmoid_stage_with_gain(x: f64, gain: f64) -> f64 {
    let z = 1.5 * x - 0.3 * x * x;
    let nu = if z > 0.0 { 4.0 } else { 0.5 };
    // 1/(1+e^-u) - 1/2 == tanh(u/2)/2, which keeps full precision near zero.
    gain * 0.5 * (0.5 * nu * z).tanh()
}

pub fn apply_sample(x: f64, kind: &NonlinearityKind, params: &NonlinearityParams) -> f64 {
    match *kind {
        NonlinearityKind::Identity => x,
        NonlinearityKind::Saturating { b } => saturating(x, b),
        NonlinearityKind::Exponential { b } => exponential(x, b),
        NonlinearityKind::Polynomial { b } => {
            polynomial_with_coefficient(x, polynomial_coefficient(b, params.log_base))
        }
        NonlinearityKind::HardClipSigmoid => {
            sigmoid_stage_with_gain(hard_clip(x, params.x_max), params.sigmoid_gain)
        }
        NonlinearityKind::SoftClipSigmoid => {
            sigmoid_stage_with_gain(soft_clip(x, params.x_max, params.rho), params.sigmoid_gain)
        }
    }
}

pub fn apply_nonlinearity(sig: &TimeSignal, kind: &NonlinearityKind) -> TimeSignal {
    apply_nonlinearity_with(sig, kind, &NonlinearityParams::default())
}

pub fn apply_nonlinearity_with(
    sig: &TimeSignal,
    kind: &NonlinearityKind,
    params: &NonlinearityParams,
) -> TimeSignal {
    if *kind == NonlinearityKind::Identity {
        return sig.clone();
    }
    let samples = sig
        .samples()
        .iter()
        .map(|&x| apply_sample(x, kind, params))
        .collect();
    TimeSignal::new(samples, sig.sample_rate()).expect("bounded models map finite to finite")
}

/// Draws a model: one of the three parametric families (with `b ~ U[2, 5]`) when
/// `matched`, otherwise one of the two clip+sigmoid composites.
pub fn sample_kind<R: Rng + ?Sized>(rng: &mut R, matched: bool) -> NonlinearityKind {
    if matched {
        let family = rng.random_range(0..3);
        let b = rng.random_range(B_MIN..=B_MAX);
        match family {
            0 => NonlinearityKind::Saturating { b },
            1 => NonlinearityKind::Exponential { b },
            _ => NonlinearityKind::Polynomial { b },
        }
    } else if rng.random_bool(0.5) {
        NonlinearityKind::HardClipSigmoid
    } else {
        NonlinearityKind::SoftClipSigmoid
    }
}
