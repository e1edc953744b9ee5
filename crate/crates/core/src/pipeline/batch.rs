//! Batch execution of the linear stage and batch evaluation over a manifest.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dsp::TimeSignal;
use crate::error::{Error, Result};
use crate::metrics::{evaluate, MetricReport};

use super::config::RunConfig;
use super::dataset::{write_jsonl, Manifest};
use super::features::export_features;
use super::linear::{run_linear_stage, to_waveform, FeatureBundle, LinearStageReport};
use super::wav::{read_wav, write_wav};

pub const CONFIG_NAME: &str = "run_config.txt";
pub const RUN_LOG_NAME: &str = "run.jsonl";

/// Bundle signals written as waveforms by [`run_scene`], with their file suffixes.
pub const WAVEFORM_OUTPUTS: [(&str, usize); 4] =
    [("r_m", 3), ("f_y_x", 4), ("f_y_r", 5), ("f_y_rm", 6)];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub scene_id: String,
    pub samples: usize,
    pub n_frames: usize,
    pub report: LinearStageReport,
}

/// One scene's inputs by path.
#[derive(Debug, Clone)]
pub struct SceneInputs {
    pub scene_id: String,
    pub y: PathBuf,
    pub x: PathBuf,
    pub r: PathBuf,
}

pub fn output_name(scene_id: &str, suffix: &str) -> String {
    format!("{scene_id}.{suffix}.wav")
}

pub fn features_name(scene_id: &str) -> String {
    format!("{scene_id}.ecf")
}

/// Runs the linear stage on in-memory signals and writes its outputs.
pub fn run_signals(
    scene_id: &str,
    y: &TimeSignal,
    x: &TimeSignal,
    r: &TimeSignal,
    cfg: &RunConfig,
    out_dir: &Path,
    export: bool,
) -> Result<(FeatureBundle, RunRecord)> {
    let (bundle, report) = run_linear_stage(scene_id, y, x, r, cfg)?;
    let write = || -> Result<()> {
        for (suffix, idx) in WAVEFORM_OUTPUTS {
            let wav = to_waveform(&bundle.signals[idx], y.len())?;
            write_wav(&out_dir.join(output_name(scene_id, suffix)), &wav)?;
        }
        if export {
            export_features(&bundle, &out_dir.join(features_name(scene_id)))?;
        }
        Ok(())
    };
    write().map_err(|e| e.in_scene(scene_id))?;
    let record = RunRecord {
        scene_id: scene_id.to_string(),
        samples: y.len(),
        n_frames: bundle.n_frames(),
        report,
    };
    Ok((bundle, record))
}

pub fn run_scene(
    inputs: &SceneInputs,
    cfg: &RunConfig,
    out_dir: &Path,
    export: bool,
) -> Result<RunRecord> {
    let load = || -> Result<_> {
        Ok((
            read_wav(&inputs.y)?,
            read_wav(&inputs.x)?,
            read_wav(&inputs.r)?,
        ))
    };
    let (y, x, r) = load().map_err(|e| e.in_scene(&inputs.scene_id))?;
    Ok(run_signals(&inputs.scene_id, &y, &x, &r, cfg, out_dir, export)?.1)
}

/// Runs every scene, then writes the effective config and a per-scene log.
pub fn run_batch(
    scenes: &[SceneInputs],
    cfg: &RunConfig,
    out_dir: &Path,
    export: bool,
) -> Result<Vec<RunRecord>> {
    cfg.validate()?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let records = scenes
        .par_iter()
        .map(|s| run_scene(s, cfg, out_dir, export))
        .collect::<Result<Vec<_>>>()?;
    let cfg_path = out_dir.join(CONFIG_NAME);
    fs::write(&cfg_path, cfg.to_text()).map_err(|e| Error::io(&cfg_path, e))?;
    write_jsonl(&out_dir.join(RUN_LOG_NAME), &records)?;
    Ok(records)
}

pub fn manifest_inputs(manifest: &Manifest) -> Vec<SceneInputs> {
    manifest
        .entries
        .iter()
        .map(|e| SceneInputs {
            scene_id: e.scene_id.clone(),
            y: manifest.resolve(&e.files.y),
            x: manifest.resolve(&e.files.x),
            r: manifest.resolve(&e.files.r),
        })
        .collect()
}

/// Scores `<estimates>/<scene_id>.<estimate_name>.wav` for every manifest scene.
pub fn evaluate_manifest(
    manifest: &Manifest,
    estimates: &Path,
    estimate_name: &str,
    cfg: &RunConfig,
) -> Result<Vec<MetricReport>> {
    manifest
        .entries
        .par_iter()
        .map(|e| {
            let score = || -> Result<MetricReport> {
                let y = read_wav(&manifest.resolve(&e.files.y))?;
                let s_direct = read_wav(&manifest.resolve(&e.files.s_direct))?;
                let est = read_wav(&estimates.join(output_name(&e.scene_id, estimate_name)))?;
                if est.len() != y.len() {
                    return Err(Error::Shape(format!(
                        "estimate has {} samples, mixture has {}",
                        est.len(),
                        y.len()
                    )));
                }
                evaluate(&e.scene_id, e.scenario, &y, &s_direct, &est, &cfg.stft)
            };
            score().map_err(|err| err.in_scene(&e.scene_id))
        })
        .collect()
}

pub fn write_report(path: &Path, rows: &[MetricReport]) -> Result<()> {
    write_jsonl(path, rows)
}
