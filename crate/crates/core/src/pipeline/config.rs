//! Run configuration and its flat `key = value` text form.
//!
//! Keys are field paths such as `wiener_main.taps` or `mask.m`. Blank lines
//! and `#` comments are ignored. `wiener_ref.taps` and `mask.ref_taps` name
//! the same quantity; setting either updates both.

use serde::{Deserialize, Serialize};

use crate::dsp::StftConfig;
use crate::error::{Error, Result};
use crate::purifier::MaskConfig;
use crate::wiener::WienerConfig;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub stft: StftConfig,
    /// Solver for the three main-microphone cancellations.
    pub wiener_main: WienerConfig,
    /// Solver for the reference-vs-far-end cancellation inside the purifier.
    pub wiener_ref: WienerConfig,
    pub mask: MaskConfig,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let mask = MaskConfig::default();
        Self {
            stft: StftConfig::default(),
            wiener_main: WienerConfig::default(),
            wiener_ref: WienerConfig::default().with_taps(mask.ref_taps),
            mask,
            seed: 0,
        }
    }
}

pub const CONFIG_KEYS: &[&str] = &[
    "stft.window_len",
    "stft.hop",
    "stft.window",
    "wiener_main.taps",
    "wiener_main.window",
    "wiener_main.epsilon",
    "wiener_main.diag_load",
    "wiener_main.weighting",
    "wiener_ref.taps",
    "wiener_ref.window",
    "wiener_ref.epsilon",
    "wiener_ref.diag_load",
    "wiener_ref.weighting",
    "mask.m",
    "mask.ref_taps",
    "seed",
];

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse `{value}`")))
}

/// Accepts plain decimals and simple fractions such as `1/6`.
fn parse_real(key: &str, value: &str) -> Result<f64> {
    if let Some((n, d)) = value.split_once('/') {
        let n: f64 = parse_num(key, n.trim())?;
        let d: f64 = parse_num(key, d.trim())?;
        if d == 0.0 {
            return Err(Error::Config(format!(
                "{key}: division by zero in `{value}`"
            )));
        }
        Ok(n / d)
    } else {
        parse_num(key, value)
    }
}

fn set_wiener(cfg: &mut WienerConfig, field: &str, key: &str, value: &str) -> Result<()> {
    match field {
        "taps" => cfg.taps = parse_num(key, value)?,
        "window" => cfg.window = parse_num(key, value)?,
        "epsilon" => cfg.epsilon = parse_real(key, value)?,
        "diag_load" => cfg.diag_load = parse_real(key, value)?,
        "weighting" => cfg.weighting = value.parse()?,
        _ => return Err(Error::Config(format!("unknown key `{key}`"))),
    }
    Ok(())
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.stft.validate()?;
        self.wiener_main.validate()?;
        self.wiener_ref.validate()?;
        self.mask.validate()?;
        if self.wiener_ref.taps != self.mask.ref_taps {
            return Err(Error::Config(format!(
                "wiener_ref.taps ({}) and mask.ref_taps ({}) disagree",
                self.wiener_ref.taps, self.mask.ref_taps
            )));
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        let (section, field) = key.split_once('.').unwrap_or(("", key));
        match (section, field) {
            ("stft", "window_len") => self.stft.window_len = parse_num(key, value)?,
            ("stft", "hop") => self.stft.hop = parse_num(key, value)?,
            ("stft", "window") => self.stft.window = value.parse()?,
            ("wiener_main", f) => set_wiener(&mut self.wiener_main, f, key, value)?,
            ("wiener_ref", "taps") | ("mask", "ref_taps") => {
                let taps = parse_num(key, value)?;
                self.wiener_ref.taps = taps;
                self.mask.ref_taps = taps;
            }
            ("wiener_ref", f) => set_wiener(&mut self.wiener_ref, f, key, value)?,
            ("mask", "m") => self.mask.m = parse_real(key, value)?,
            ("", "seed") => self.seed = parse_num(key, value)?,
            _ => return Err(Error::Config(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    /// Applies `key = value` lines on top of `self`.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected `key = value`", lineno + 1))
            })?;
            self.set(key.trim(), value).map_err(|e| match e {
                Error::Config(msg) => Error::Config(format!("line {}: {msg}", lineno + 1)),
                other => other,
            })?;
        }
        Ok(())
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply_text(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_text(&self) -> String {
        let window = match self.stft.window {
            crate::dsp::WindowKind::Hamming => "hamming",
            crate::dsp::WindowKind::Hann => "hann",
        };
        let mut out = String::new();
        out.push_str(&format!("stft.window_len = {}\n", self.stft.window_len));
        out.push_str(&format!("stft.hop = {}\n", self.stft.hop));
        out.push_str(&format!("stft.window = {window}\n"));
        for (name, w) in [
            ("wiener_main", &self.wiener_main),
            ("wiener_ref", &self.wiener_ref),
        ] {
            out.push_str(&format!("{name}.taps = {}\n", w.taps));
            out.push_str(&format!("{name}.window = {}\n", w.window));
            out.push_str(&format!("{name}.epsilon = {:?}\n", w.epsilon));
            out.push_str(&format!("{name}.diag_load = {:?}\n", w.diag_load));
            out.push_str(&format!("{name}.weighting = {}\n", w.weighting));
        }
        out.push_str(&format!("mask.m = {:?}\n", self.mask.m));
        out.push_str(&format!("seed = {}\n", self.seed));
        out
    }
}
