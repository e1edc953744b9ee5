//! Binary feature-bundle file (`.ecf`).
//!
//! Little-endian throughout:
//!
//! ```text
//! offset  size  field
//! 0       4     magic "ECF1"
//! 4       4     version (u32) = 1
//! 8       4     n_frames (u32)
//! 12      4     n_bins (u32)
//! 16      4     n_signals (u32) = 7
//! 20      4     window_len (u32)
//! 24      4     hop (u32)
//! 28      ...   7 signals in bundle order, each frame-major,
//!               each unit as (re f32, im f32)
//! ```
//!
//! The window kind and sample rate are not stored; readers get a Hamming
//! window and 16 kHz.

use std::io::Write;
use std::path::Path;

use num_complex::Complex64;

use crate::dsp::{Spectrogram, StftConfig, DEFAULT_SAMPLE_RATE};
use crate::error::{Error, Result};

use super::linear::{FeatureBundle, SIGNAL_COUNT};

pub const MAGIC: &[u8; 4] = b"ECF1";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 28;

/// Header fields of a feature file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FeatureHeader {
    pub version: u32,
    pub n_frames: u32,
    pub n_bins: u32,
    pub n_signals: u32,
    pub window_len: u32,
    pub hop: u32,
}

impl FeatureHeader {
    pub fn file_len(&self) -> usize {
        HEADER_LEN + self.n_signals as usize * self.n_frames as usize * self.n_bins as usize * 8
    }
}

fn to_u32(v: usize, what: &str) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::Format(format!("{what} {v} does not fit in u32")))
}

pub fn encode(bundle: &FeatureBundle) -> Result<Vec<u8>> {
    bundle.validate()?;
    let header = FeatureHeader {
        version: VERSION,
        n_frames: to_u32(bundle.n_frames(), "n_frames")?,
        n_bins: to_u32(bundle.n_bins(), "n_bins")?,
        n_signals: SIGNAL_COUNT as u32,
        window_len: to_u32(bundle.stft.window_len, "window_len")?,
        hop: to_u32(bundle.stft.hop, "hop")?,
    };
    let mut out = Vec::with_capacity(header.file_len());
    out.extend_from_slice(MAGIC);
    for v in [
        header.version,
        header.n_frames,
        header.n_bins,
        header.n_signals,
        header.window_len,
        header.hop,
    ] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for spec in &bundle.signals {
        for c in spec.as_slice() {
            out.extend_from_slice(&(c.re as f32).to_le_bytes());
            out.extend_from_slice(&(c.im as f32).to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode_header(bytes: &[u8]) -> Result<FeatureHeader> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::Format(format!(
            "{} bytes is shorter than the header",
            bytes.len()
        )));
    }
    if &bytes[..4] != MAGIC {
        return Err(Error::Format(format!("bad magic {:?}", &bytes[..4])));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().unwrap());
    let header = FeatureHeader {
        version: word(0),
        n_frames: word(1),
        n_bins: word(2),
        n_signals: word(3),
        window_len: word(4),
        hop: word(5),
    };
    if header.version != VERSION {
        return Err(Error::Format(format!(
            "unsupported version {}",
            header.version
        )));
    }
    if header.n_signals as usize != SIGNAL_COUNT {
        return Err(Error::Format(format!(
            "expected 7 signals, found {}",
            header.n_signals
        )));
    }
    if header.n_bins as usize != header.window_len as usize / 2 + 1 {
        return Err(Error::Format(format!(
            "{} bins inconsistent with window_len {}",
            header.n_bins, header.window_len
        )));
    }
    Ok(header)
}

pub fn decode(bytes: &[u8], scene_id: &str) -> Result<FeatureBundle> {
    let header = decode_header(bytes)?;
    if bytes.len() != header.file_len() {
        return Err(Error::Format(format!(
            "expected {} bytes, found {}",
            header.file_len(),
            bytes.len()
        )));
    }
    let stft = StftConfig {
        window_len: header.window_len as usize,
        hop: header.hop as usize,
        ..StftConfig::default()
    };
    stft.validate().map_err(|e| Error::Format(e.to_string()))?;
    let units = header.n_frames as usize * header.n_bins as usize;
    let mut offset = HEADER_LEN;
    let mut read_f32 = || {
        let v = f32::from_le_bytes(bytes[offset..offset + 4].try_into().unwrap());
        offset += 4;
        v as f64
    };
    let mut signals = Vec::with_capacity(SIGNAL_COUNT);
    for _ in 0..SIGNAL_COUNT {
        let data: Vec<Complex64> = (0..units)
            .map(|_| {
                let re = read_f32();
                let im = read_f32();
                Complex64::new(re, im)
            })
            .collect();
        signals.push(
            Spectrogram::from_data(data, header.n_frames as usize, stft, DEFAULT_SAMPLE_RATE)
                .map_err(|e| Error::Format(e.to_string()))?,
        );
    }
    Ok(FeatureBundle {
        scene_id: scene_id.to_string(),
        stft,
        signals: signals.try_into().expect("seven signals"),
    })
}

pub fn export_features(bundle: &FeatureBundle, path: &Path) -> Result<()> {
    let bytes = encode(bundle)?;
    let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&bytes).map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Reads a feature file; the scene id is taken from the file stem.
pub fn import_features(path: &Path) -> Result<FeatureBundle> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    decode(&bytes, &id)
}
