//! The linear stage: purify the reference, then cancel the mixture against
//! the far-end, the raw reference and the purified reference.

use crate::dsp::{stft_forward, stft_inverse, Spectrogram, StftConfig, TimeSignal};
use crate::error::{Error, Result};
use crate::purifier::{apply_mask, mask_from_near_estimate};
use crate::wiener::cancel;

use super::config::RunConfig;

pub const SIGNAL_COUNT: usize = 7;

/// Short names of the bundle signals, in bundle order.
pub const SIGNAL_NAMES: [&str; SIGNAL_COUNT] = ["x", "y", "r", "r_m", "f_y_x", "f_y_r", "f_y_rm"];

/// The seven aligned spectrograms handed to a downstream neural stage:
/// far-end `X`, mixture `Y`, reference `R`, purified reference `R_m`, and the
/// cancellation residuals of `Y` against `X`, `R` and `R_m`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureBundle {
    pub scene_id: String,
    pub stft: StftConfig,
    pub signals: [Spectrogram; SIGNAL_COUNT],
}

impl FeatureBundle {
    pub fn x(&self) -> &Spectrogram {
        &self.signals[0]
    }
    pub fn y(&self) -> &Spectrogram {
        &self.signals[1]
    }
    pub fn r(&self) -> &Spectrogram {
        &self.signals[2]
    }
    pub fn r_masked(&self) -> &Spectrogram {
        &self.signals[3]
    }
    pub fn f_y_x(&self) -> &Spectrogram {
        &self.signals[4]
    }
    pub fn f_y_r(&self) -> &Spectrogram {
        &self.signals[5]
    }
    pub fn f_y_rm(&self) -> &Spectrogram {
        &self.signals[6]
    }

    pub fn n_frames(&self) -> usize {
        self.signals[0].n_frames()
    }

    pub fn n_bins(&self) -> usize {
        self.signals[0].n_bins()
    }

    pub fn validate(&self) -> Result<()> {
        for s in &self.signals[1..] {
            self.signals[0].ensure_same_shape(s)?;
        }
        Ok(())
    }
}

/// Degenerate-unit counts from each solve.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct LinearStageReport {
    pub purifier_degenerate: usize,
    pub f_y_x_degenerate: usize,
    pub f_y_r_degenerate: usize,
    pub f_y_rm_degenerate: usize,
}

fn padded_stft(sig: &TimeSignal, cfg: &StftConfig) -> Result<Spectrogram> {
    stft_forward(&sig.fit_to_len(cfg.padded_len(sig.len())), cfg)
}

/// Runs the linear stage on time-domain inputs.
///
/// Inputs are zero-padded at the end to a whole number of hops, so every
/// input sample is covered by the framing.
pub fn run_linear_stage(
    scene_id: &str,
    y: &TimeSignal,
    x: &TimeSignal,
    r: &TimeSignal,
    cfg: &RunConfig,
) -> Result<(FeatureBundle, LinearStageReport)> {
    let inner = || -> Result<_> {
        cfg.validate()?;
        if y.len() != x.len() || y.len() != r.len() {
            return Err(Error::Shape(format!(
                "input lengths differ: y {}, x {}, r {}",
                y.len(),
                x.len(),
                r.len()
            )));
        }
        if y.sample_rate() != x.sample_rate() || y.sample_rate() != r.sample_rate() {
            return Err(Error::Signal("input sample rates differ".into()));
        }
        let spec_x = padded_stft(x, &cfg.stft)?;
        let spec_y = padded_stft(y, &cfg.stft)?;
        let spec_r = padded_stft(r, &cfg.stft)?;
        linear_stage_from_spectra(scene_id, spec_x, spec_y, spec_r, cfg)
    };
    inner().map_err(|e| e.in_scene(scene_id))
}

/// Runs the linear stage from the three input spectrograms.
pub fn linear_stage_from_spectra(
    scene_id: &str,
    x: Spectrogram,
    y: Spectrogram,
    r: Spectrogram,
    cfg: &RunConfig,
) -> Result<(FeatureBundle, LinearStageReport)> {
    cfg.validate()?;
    x.ensure_same_shape(&y)?;
    x.ensure_same_shape(&r)?;

    let (near, rep_ref) = cancel(&r, &x, &cfg.wiener_ref.with_taps(cfg.mask.ref_taps))?;
    let mask = mask_from_near_estimate(&r, &near);
    let r_m = apply_mask(&r, &mask, cfg.mask.m)?;
    let (f_y_x, rep_x) = cancel(&y, &x, &cfg.wiener_main)?;
    let (f_y_r, rep_r) = cancel(&y, &r, &cfg.wiener_main)?;
    let (f_y_rm, rep_rm) = cancel(&y, &r_m, &cfg.wiener_main)?;

    let report = LinearStageReport {
        purifier_degenerate: rep_ref.degenerate_count(),
        f_y_x_degenerate: rep_x.degenerate_count(),
        f_y_r_degenerate: rep_r.degenerate_count(),
        f_y_rm_degenerate: rep_rm.degenerate_count(),
    };
    let bundle = FeatureBundle {
        scene_id: scene_id.to_string(),
        stft: cfg.stft,
        signals: [x, y, r, r_m, f_y_x, f_y_r, f_y_rm],
    };
    Ok((bundle, report))
}

/// Resynthesizes one bundle signal and fits it to `len` samples.
pub fn to_waveform(spec: &Spectrogram, len: usize) -> Result<TimeSignal> {
    Ok(stft_inverse(spec)?.fit_to_len(len))
}
