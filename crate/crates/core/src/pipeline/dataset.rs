//! Dataset synthesis and the scene manifest.
//!
//! Each scene gets its own seed drawn from the master seed, so scenes can be
//! generated in parallel and the output is identical to a serial run.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dsp::{TimeSignal, DEFAULT_SAMPLE_RATE};
use crate::error::{Error, Result};
use crate::metrics::Scenario;
use crate::nonlinearity::{sample_kind, NonlinearityKind};
use crate::room::{
    sample_ser, synthesize_scene, RoomSpec, SceneGeometry, SceneOptions, SCENE_SECONDS,
};
use crate::source::speech_like;

use super::wav::{read_wav, write_wav};

pub const MANIFEST_NAME: &str = "manifest.jsonl";

/// A sorted list of 16 kHz mono WAV files found under a directory.
#[derive(Debug, Clone)]
pub struct Corpus {
    files: Vec<PathBuf>,
}

fn collect_wavs(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.is_dir() {
            collect_wavs(&path, out)?;
        } else if path
            .extension()
            .is_some_and(|e| e.eq_ignore_ascii_case("wav"))
        {
            out.push(path);
        }
    }
    Ok(())
}

impl Corpus {
    pub fn open(dir: &Path) -> Result<Self> {
        let mut files = Vec::new();
        collect_wavs(dir, &mut files)?;
        if files.is_empty() {
            return Err(Error::Corpus(format!("{}: no .wav files", dir.display())));
        }
        files.sort();
        Ok(Self { files })
    }

    pub fn files(&self) -> &[PathBuf] {
        &self.files
    }

    /// Picks a file and a random `len`-sample excerpt; short files are zero-padded.
    fn draw<R: Rng + ?Sized>(&self, rng: &mut R, len: usize) -> Result<(TimeSignal, SourceRef)> {
        let idx = rng.random_range(0..self.files.len());
        let path = &self.files[idx];
        let sig = read_wav(path)?;
        if sig.sample_rate() != DEFAULT_SAMPLE_RATE {
            return Err(Error::Corpus(format!(
                "{}: {} Hz, expected {DEFAULT_SAMPLE_RATE} Hz",
                path.display(),
                sig.sample_rate()
            )));
        }
        let offset = if sig.len() > len {
            rng.random_range(0..=sig.len() - len)
        } else {
            0
        };
        let end = (offset + len).min(sig.len());
        let excerpt = TimeSignal::new(sig.samples()[offset..end].to_vec(), sig.sample_rate())?
            .fit_to_len(len);
        let source = SourceRef::File {
            path: path.to_string_lossy().into_owned(),
            offset,
        };
        Ok((excerpt, source))
    }
}

/// Where a scene's talker signal came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SourceRef {
    File {
        path: String,
        offset: usize,
    },
    /// Built-in speech-like generator.
    Synthetic,
    Silent,
}

/// Talker signal supply: a corpus, or the built-in generator when none is given.
#[derive(Debug, Clone)]
pub enum SourceSupply {
    Corpus(Corpus),
    Synthetic,
}

impl SourceSupply {
    pub fn from_dir(dir: Option<&Path>) -> Result<Self> {
        Ok(match dir {
            Some(d) => SourceSupply::Corpus(Corpus::open(d)?),
            None => SourceSupply::Synthetic,
        })
    }

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R, len: usize) -> Result<(TimeSignal, SourceRef)> {
        match self {
            SourceSupply::Corpus(c) => c.draw(rng, len),
            SourceSupply::Synthetic => Ok((
                speech_like(rng, len, DEFAULT_SAMPLE_RATE),
                SourceRef::Synthetic,
            )),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SynthRequest {
    pub count: usize,
    pub matched: bool,
    pub scenario: Scenario,
    pub near: SourceSupply,
    pub far: SourceSupply,
    pub out_dir: PathBuf,
    pub seed: u64,
    pub duration_secs: f64,
}

impl SynthRequest {
    pub fn new(count: usize, matched: bool, out_dir: impl Into<PathBuf>, seed: u64) -> Self {
        Self {
            count,
            matched,
            scenario: Scenario::DoubleTalk,
            near: SourceSupply::Synthetic,
            far: SourceSupply::Synthetic,
            out_dir: out_dir.into(),
            seed,
            duration_secs: SCENE_SECONDS,
        }
    }
}

/// File names of a scene's waveforms, relative to the manifest directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneFiles {
    pub y: String,
    pub x: String,
    pub r: String,
    pub s_direct: String,
}

/// One manifest line; also written alone as `<scene_id>.meta.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub scene_id: String,
    pub seed: u64,
    pub scenario: Scenario,
    pub matched: bool,
    pub room: RoomSpec,
    pub geometry: SceneGeometry,
    pub nonlinearity: NonlinearityKind,
    pub ser_db: f64,
    pub echo_gain: f64,
    pub samples: usize,
    pub near_source: SourceRef,
    pub far_source: SourceRef,
    pub files: SceneFiles,
}

pub fn scene_id(index: usize) -> String {
    format!("scene_{index:05}")
}

/// Per-scene seeds: consecutive draws from a generator seeded with `seed`.
pub fn scene_seeds(seed: u64, count: usize) -> Vec<u64> {
    let mut master = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| master.next_u64()).collect()
}

fn synth_one(req: &SynthRequest, index: usize, seed: u64) -> Result<ManifestEntry> {
    let id = scene_id(index);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let len = (req.duration_secs * DEFAULT_SAMPLE_RATE as f64).round() as usize;

    let room = RoomSpec::sample(&mut rng);
    let geometry = SceneGeometry::sample(&mut rng, &room)?;
    let kind = sample_kind(&mut rng, req.matched);
    let ser_db = sample_ser(&mut rng);

    let (v, near_source) = match req.scenario {
        Scenario::FarEndSingleTalk => (
            TimeSignal::zeros(len, DEFAULT_SAMPLE_RATE),
            SourceRef::Silent,
        ),
        _ => req.near.draw(&mut rng, len)?,
    };
    let (x, far_source) = match req.scenario {
        Scenario::NearEndSingleTalk => (
            TimeSignal::zeros(len, DEFAULT_SAMPLE_RATE),
            SourceRef::Silent,
        ),
        _ => req.far.draw(&mut rng, len)?,
    };

    let opts = SceneOptions {
        duration_secs: Some(req.duration_secs),
        ..SceneOptions::default()
    };
    let scene = synthesize_scene(&room, &geometry, &v, &x, &kind, ser_db, seed, &opts)?;

    let files = SceneFiles {
        y: format!("{id}.y.wav"),
        x: format!("{id}.x.wav"),
        r: format!("{id}.r.wav"),
        s_direct: format!("{id}.s_direct.wav"),
    };
    for (name, sig) in [
        (&files.y, &scene.y),
        (&files.x, &scene.x),
        (&files.r, &scene.r),
        (&files.s_direct, &scene.s_direct),
    ] {
        write_wav(&req.out_dir.join(name), sig)?;
    }

    let entry = ManifestEntry {
        scene_id: id.clone(),
        seed,
        scenario: req.scenario,
        matched: req.matched,
        room,
        geometry,
        nonlinearity: kind,
        ser_db,
        echo_gain: scene.echo_gain,
        samples: scene.y.len(),
        near_source,
        far_source,
        files,
    };
    let meta_path = req.out_dir.join(format!("{id}.meta.json"));
    let json = serde_json::to_string_pretty(&entry).map_err(|e| Error::Json {
        path: meta_path.clone(),
        source: e,
    })?;
    fs::write(&meta_path, json + "\n").map_err(|e| Error::io(&meta_path, e))?;
    Ok(entry)
}

/// Synthesizes `count` scenes into `out_dir` and writes the manifest.
pub fn synth_dataset(req: &SynthRequest) -> Result<Vec<ManifestEntry>> {
    if req.count == 0 {
        return Err(Error::Config("scene count must be positive".into()));
    }
    if !(req.duration_secs > 0.0 && req.duration_secs.is_finite()) {
        return Err(Error::Config(format!("bad duration {}", req.duration_secs)));
    }
    fs::create_dir_all(&req.out_dir).map_err(|e| Error::io(&req.out_dir, e))?;
    let seeds = scene_seeds(req.seed, req.count);
    let entries = seeds
        .par_iter()
        .enumerate()
        .map(|(i, &s)| synth_one(req, i, s).map_err(|e| e.in_scene(scene_id(i))))
        .collect::<Result<Vec<_>>>()?;
    write_manifest(&req.out_dir.join(MANIFEST_NAME), &entries)?;
    Ok(entries)
}

pub fn write_manifest(path: &Path, entries: &[ManifestEntry]) -> Result<()> {
    write_jsonl(path, entries)
}

/// Writes one JSON object per line.
pub fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut out = Vec::new();
    for row in rows {
        serde_json::to_writer(&mut out, row).map_err(|e| Error::Json {
            path: path.to_path_buf(),
            source: e,
        })?;
        out.push(b'\n');
    }
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&out).map_err(|e| Error::io(path, e))
}

/// A parsed manifest; file names resolve against its directory.
#[derive(Debug, Clone)]
pub struct Manifest {
    pub dir: PathBuf,
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut entries = Vec::new();
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let entry: ManifestEntry = serde_json::from_str(line).map_err(|e| Error::Json {
                path: path.to_path_buf(),
                source: e,
            })?;
            entries.push(entry);
        }
        let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let manifest = Self { dir, entries };
        manifest.check()?;
        Ok(manifest)
    }

    pub fn resolve(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    /// Scene ids are unique and every referenced file exists.
    pub fn check(&self) -> Result<()> {
        let mut ids = std::collections::HashSet::new();
        for e in &self.entries {
            if !ids.insert(e.scene_id.as_str()) {
                return Err(Error::Corpus(format!("duplicate scene id {}", e.scene_id)));
            }
            for name in [&e.files.y, &e.files.x, &e.files.r, &e.files.s_direct] {
                let p = self.resolve(name);
                if !p.is_file() {
                    return Err(Error::Corpus(format!(
                        "scene {}: missing file {}",
                        e.scene_id,
                        p.display()
                    )));
                }
            }
        }
        Ok(())
    }
}
