//! Auxiliary-reference purification.
//!
//! The reference microphone sits next to the loudspeaker, so its signal `R` is
//! dominated by the distorted far-end output but still carries some near-end
//! speech. Cancelling `R` against the far-end `X` leaves `F`, the near-end
//! estimate; `E = R - F` is the far-end estimate. The ratio mask
//! `M = |E| / (|E| + |F|)`, compressed by an exponent `m`, then scales `R`.

use serde::{Deserialize, Serialize};

use crate::dsp::Spectrogram;
use crate::error::{Error, Result};
use crate::wiener::{cancel, WienerConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaskConfig {
    /// Compression exponent in `[0, 1]`; 0 disables masking.
    pub m: f64,
    /// Taps for the reference-vs-far-end solve.
    pub ref_taps: usize,
}

impl Default for MaskConfig {
    fn default() -> Self {
        Self {
            m: 1.0 / 6.0,
            ref_taps: 1,
        }
    }
}

impl MaskConfig {
    pub fn validate(&self) -> Result<()> {
        check_exponent(self.m)?;
        if self.ref_taps == 0 {
            return Err(Error::Config("ref_taps must be >= 1".into()));
        }
        Ok(())
    }
}

fn check_exponent(m: f64) -> Result<()> {
    if (0.0..=1.0).contains(&m) {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "mask exponent must be in [0, 1], got {m}"
        )))
    }
}

/// Real-valued T-F mask with entries in `[0, 1]`, frame-major.
#[derive(Debug, Clone, PartialEq)]
pub struct RatioMask {
    values: Vec<f64>,
    n_frames: usize,
    n_bins: usize,
}

impl RatioMask {
    pub fn from_values(values: Vec<f64>, n_frames: usize, n_bins: usize) -> Result<Self> {
        if values.len() != n_frames * n_bins {
            return Err(Error::Shape(format!(
                "mask has {} values for {n_frames}x{n_bins}",
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Signal(format!("mask value {v} outside [0, 1]")));
        }
        Ok(Self {
            values,
            n_frames,
            n_bins,
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, t: usize, f: usize) -> f64 {
        self.values[t * self.n_bins + f]
    }

    pub fn n_frames(&self) -> usize {
        self.n_frames
    }

    pub fn n_bins(&self) -> usize {
        self.n_bins
    }
}

/// Ratio mask from a reference `R` and far-end `X`.
pub fn compute_mask(
    r: &Spectrogram,
    x: &Spectrogram,
    cfg: &MaskConfig,
    wiener_cfg: &WienerConfig,
) -> Result<RatioMask> {
    cfg.validate()?;
    let (near, _) = cancel(r, x, &wiener_cfg.with_taps(cfg.ref_taps))?;
    Ok(mask_from_near_estimate(r, &near))
}

/// `|R - F| / (|R - F| + |F|)`, with 0/0 defined as 0.
pub fn mask_from_near_estimate(r: &Spectrogram, near: &Spectrogram) -> RatioMask {
    let values = r
        .as_slice()
        .iter()
        .zip(near.as_slice())
        .map(|(rv, fv)| {
            let far = (rv - fv).norm();
            let denom = far + fv.norm();
            if denom > 0.0 {
                (far / denom).clamp(0.0, 1.0)
            } else {
                0.0
            }
        })
        .collect();
    RatioMask {
        values,
        n_frames: r.n_frames(),
        n_bins: r.n_bins(),
    }
}

/// `R_m = M^m * R`, with `0^0 = 1`.
pub fn apply_mask(r: &Spectrogram, mask: &RatioMask, m: f64) -> Result<Spectrogram> {
    check_exponent(m)?;
    if mask.n_frames != r.n_frames() || mask.n_bins != r.n_bins() {
        return Err(Error::Shape(format!(
            "mask {}x{} vs spectrogram {}x{}",
            mask.n_frames,
            mask.n_bins,
            r.n_frames(),
            r.n_bins()
        )));
    }
    let data = r
        .as_slice()
        .iter()
        .zip(&mask.values)
        .map(|(v, g)| v * mask_gain(*g, m))
        .collect();
    r.with_data(data)
}

#[inline]
fn mask_gain(value: f64, m: f64) -> f64 {
    if m == 0.0 {
        1.0
    } else {
        value.powf(m)
    }
}

/// Purified reference: `apply_mask(R, compute_mask(R, X), m)`.
pub fn purify_reference(
    r: &Spectrogram,
    x: &Spectrogram,
    cfg: &MaskConfig,
    wiener_cfg: &WienerConfig,
) -> Result<Spectrogram> {
    let mask = compute_mask(r, x, cfg, wiener_cfg)?;
    apply_mask(r, &mask, cfg.m)
}
