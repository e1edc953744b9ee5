//! Dual-microphone linear acoustic echo cancellation.
//!
//! The crate covers an STFT front end, per-bin weighted short-time Wiener
//! solvers, reference-signal purification by a compressed ratio mask,
//! loudspeaker nonlinearity models, an image-method scene simulator, the
//! evaluation metrics, and the batch pipeline that ties them together.

// `!(v > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dsp;
pub mod error;
mod linalg;
pub mod metrics;
pub mod nonlinearity;
pub mod pipeline;
pub mod purifier;
pub mod room;
pub mod source;
pub mod wiener;

pub use dsp::{stft_forward, stft_inverse, Spectrogram, StftConfig, TimeSignal, WindowKind};
pub use error::{Error, Result};
pub use metrics::{MetricReport, Scenario};
pub use nonlinearity::{apply_nonlinearity, NonlinearityKind};
pub use pipeline::{FeatureBundle, RunConfig};
pub use purifier::{MaskConfig, RatioMask};
pub use room::{RoomSpec, Scene, SceneGeometry};
pub use wiener::{cancel, wstws_cancel, Weighting, WienerConfig};
