//! Echo-suppression and fidelity metrics, and the training losses as plain
//! numerical measures.
//!
//! Log-ratio metrics use an absolute energy floor of `1e-12` and are clamped
//! to `[-100, 100]` dB so reports stay finite.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dsp::{stft_forward, Spectrogram, StftConfig, TimeSignal};
use crate::error::{Error, Result};
use crate::room::Scene;

pub const ENERGY_FLOOR: f64 = 1e-12;
pub const DB_CAP: f64 = 100.0;
/// Spectral compression exponent used for the RI+Mag loss in reports.
pub const DEFAULT_COMPRESSION: f64 = 0.5;
pub const DEFAULT_ALPHA: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scenario {
    #[serde(rename = "DT")]
    DoubleTalk,
    #[serde(rename = "ST_NE")]
    NearEndSingleTalk,
    #[serde(rename = "ST_FE")]
    FarEndSingleTalk,
}

impl Scenario {
    /// Infers the scenario from which talkers are active.
    pub fn from_activity(near_active: bool, far_active: bool) -> Result<Self> {
        match (near_active, far_active) {
            (true, true) => Ok(Scenario::DoubleTalk),
            (true, false) => Ok(Scenario::NearEndSingleTalk),
            (false, true) => Ok(Scenario::FarEndSingleTalk),
            (false, false) => Err(Error::Scenario("both talkers are silent".into())),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Scenario::DoubleTalk => "DT",
            Scenario::NearEndSingleTalk => "ST_NE",
            Scenario::FarEndSingleTalk => "ST_FE",
        }
    }
}

impl std::str::FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "dt" => Ok(Scenario::DoubleTalk),
            "st_ne" => Ok(Scenario::NearEndSingleTalk),
            "st_fe" => Ok(Scenario::FarEndSingleTalk),
            other => Err(Error::Config(format!("unknown scenario `{other}`"))),
        }
    }
}

/// One evaluated scene. Metrics that are undefined for the scenario are `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub scene_id: String,
    pub scenario: Scenario,
    pub erle_db: Option<f64>,
    pub sdr_db: Option<f64>,
    pub s_sisnr_db: Option<f64>,
    pub ri_mag_loss: Option<f64>,
    /// Always `"unavailable"`; PESQ is not computed.
    pub pesq: String,
}

fn log_ratio_db(num: f64, den: f64) -> f64 {
    (10.0 * ((num + ENERGY_FLOOR) / (den + ENERGY_FLOOR)).log10()).clamp(-DB_CAP, DB_CAP)
}

fn check_lengths(a: &TimeSignal, b: &TimeSignal) -> Result<()> {
    if a.len() == b.len() {
        Ok(())
    } else {
        Err(Error::Shape(format!(
            "signal lengths {} and {} differ",
            a.len(),
            b.len()
        )))
    }
}

/// Echo return loss enhancement of residual `e` relative to microphone signal `y`.
pub fn erle(y: &TimeSignal, e: &TimeSignal) -> Result<f64> {
    check_lengths(y, e)?;
    Ok(log_ratio_db(y.energy(), e.energy()))
}

/// Plain signal-to-distortion ratio, `|target|^2 / |target - estimate|^2` in dB.
pub fn sdr(target: &TimeSignal, estimate: &TimeSignal) -> Result<f64> {
    check_lengths(target, estimate)?;
    let distortion: f64 = target
        .samples()
        .iter()
        .zip(estimate.samples())
        .map(|(t, e)| (t - e).powi(2))
        .sum();
    Ok(log_ratio_db(target.energy(), distortion))
}

fn zero_mean(x: &[f64]) -> Vec<f64> {
    let mean = x.iter().sum::<f64>() / x.len().max(1) as f64;
    x.iter().map(|v| v - mean).collect()
}

/// Stretched SI-SNR: `10 log10((1 + cos b) / (1 - cos b))` with `cos b` the
/// cosine similarity of the zero-mean signals.
pub fn s_sisnr(target: &TimeSignal, estimate: &TimeSignal) -> Result<f64> {
    check_lengths(target, estimate)?;
    let t = zero_mean(target.samples());
    let e = zero_mean(estimate.samples());
    let tt: f64 = t.iter().map(|v| v * v).sum();
    let ee: f64 = e.iter().map(|v| v * v).sum();
    if !(tt > 0.0) || !(ee > 0.0) {
        return Err(Error::Signal(
            "S-SISNR needs nonzero target and estimate".into(),
        ));
    }
    let te: f64 = t.iter().zip(&e).map(|(a, b)| a * b).sum();
    let cos = (te / (tt.sqrt() * ee.sqrt())).clamp(-1.0, 1.0);
    let db = 10.0 * ((1.0 + cos) / (1.0 - cos)).log10();
    Ok(if db.is_nan() {
        0.0
    } else {
        db.clamp(-DB_CAP, DB_CAP)
    })
}

#[inline]
fn compress(v: Complex64, p: f64) -> Complex64 {
    let mag = v.norm();
    if mag == 0.0 {
        Complex64::new(0.0, 0.0)
    } else {
        v * (mag.powf(p) / mag)
    }
}

/// Power-law compressed complex (RI) plus magnitude loss, summed over all units.
pub fn ri_mag_loss(target: &Spectrogram, estimate: &Spectrogram, p: f64) -> Result<f64> {
    target.ensure_same_shape(estimate)?;
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::Config(format!(
            "compression p must be in (0, 1], got {p}"
        )));
    }
    Ok(target
        .as_slice()
        .iter()
        .zip(estimate.as_slice())
        .map(|(s, e)| {
            let ri = (compress(*s, p) - compress(*e, p)).norm_sqr();
            let mag = (s.norm().powf(p) - e.norm().powf(p)).powi(2);
            ri + mag
        })
        .sum())
}

/// `ri_mag_loss + alpha * (-s_sisnr)`.
pub fn combined_loss(
    target_spec: &Spectrogram,
    estimate_spec: &Spectrogram,
    target: &TimeSignal,
    estimate: &TimeSignal,
    alpha: f64,
) -> Result<f64> {
    let spectral = ri_mag_loss(target_spec, estimate_spec, DEFAULT_COMPRESSION)?;
    Ok(spectral - alpha * s_sisnr(target, estimate)?)
}

/// Scores `estimate` for a scene given its microphone signal and near-end target.
///
/// Far-end single talk reports ERLE (the estimate is the residual echo);
/// near-end single talk and double talk report SDR, S-SISNR and RI+Mag loss
/// against `s_direct`.
pub fn evaluate(
    scene_id: &str,
    scenario: Scenario,
    y: &TimeSignal,
    s_direct: &TimeSignal,
    estimate: &TimeSignal,
    stft: &StftConfig,
) -> Result<MetricReport> {
    let mut report = MetricReport {
        scene_id: scene_id.to_string(),
        scenario,
        erle_db: None,
        sdr_db: None,
        s_sisnr_db: None,
        ri_mag_loss: None,
        pesq: "unavailable".into(),
    };
    match scenario {
        Scenario::FarEndSingleTalk => report.erle_db = Some(erle(y, estimate)?),
        Scenario::NearEndSingleTalk | Scenario::DoubleTalk => {
            report.sdr_db = Some(sdr(s_direct, estimate)?);
            report.s_sisnr_db = s_sisnr(s_direct, estimate).ok();
            if s_direct.len() >= stft.window_len {
                let target = stft_forward(s_direct, stft)?;
                let est = stft_forward(estimate, stft)?;
                report.ri_mag_loss = Some(ri_mag_loss(&target, &est, DEFAULT_COMPRESSION)?);
            }
        }
    }
    Ok(report)
}

pub fn scene_scenario(scene: &Scene) -> Result<Scenario> {
    Scenario::from_activity(scene.v.energy() > 0.0, scene.x.energy() > 0.0)
}

/// [`evaluate`] with the scenario inferred from which of the scene's talkers are silent.
pub fn evaluate_scene(
    scene: &Scene,
    scene_id: &str,
    estimate: &TimeSignal,
) -> Result<MetricReport> {
    evaluate(
        scene_id,
        scene_scenario(scene)?,
        &scene.y,
        &scene.s_direct,
        estimate,
        &StftConfig::default(),
    )
}
