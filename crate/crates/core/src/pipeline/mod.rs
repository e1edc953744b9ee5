//! Orchestration and file I/O around the linear stage.

pub mod batch;
pub mod config;
pub mod dataset;
pub mod features;
pub mod linear;
pub mod wav;

pub use batch::{
    evaluate_manifest, manifest_inputs, run_batch, run_scene, write_report, RunRecord, SceneInputs,
};
pub use config::RunConfig;
pub use dataset::{synth_dataset, Corpus, Manifest, ManifestEntry, SourceSupply, SynthRequest};
pub use features::{export_features, import_features};
pub use linear::{linear_stage_from_spectra, run_linear_stage, FeatureBundle, LinearStageReport};
pub use wav::{read_wav, write_wav};
