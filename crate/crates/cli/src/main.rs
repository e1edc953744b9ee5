//! `refaec`: synthesize scenes, run the linear stage, evaluate, and render RIRs.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use refaec_core::pipeline::batch::{self, SceneInputs};
use refaec_core::pipeline::dataset::MANIFEST_NAME;
use refaec_core::pipeline::{self as pipe, Manifest, RunConfig, SourceSupply, SynthRequest};
use refaec_core::room::{image_method_rir, Point, RoomSpec, SCENE_SECONDS};
use refaec_core::{Scenario, TimeSignal};

#[derive(Parser)]
#[command(
    name = "refaec",
    version,
    about = "Dual-microphone linear echo cancellation toolkit"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize a dataset of simulated scenes.
    Synth(SynthArgs),
    /// Run the linear stage on a manifest or a single scene.
    Run(RunArgs),
    /// Score estimates against a manifest.
    Eval(EvalArgs),
    /// Render one image-method room impulse response.
    Rir(RirArgs),
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    count: usize,
    /// Draw matched nonlinearities (saturating, exponential, polynomial).
    #[arg(long, conflicts_with = "mismatched")]
    matched: bool,
    /// Draw mismatched nonlinearities (clip + sigmoid); the default.
    #[arg(long)]
    mismatched: bool,
    /// Directory of 16 kHz mono WAV files for the near-end talker.
    /// Without it a built-in speech-like generator is used.
    #[arg(long)]
    corpus_near: Option<PathBuf>,
    /// Same as `--corpus-near`, for the far-end talker.
    #[arg(long)]
    corpus_far: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// dt, st_ne or st_fe.
    #[arg(long, default_value = "dt")]
    scenario: Scenario,
    /// Scene length in seconds.
    #[arg(long, default_value_t = SCENE_SECONDS)]
    duration: f64,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, conflicts_with_all = ["y", "x", "r"], required_unless_present_all = ["y", "x", "r"])]
    manifest: Option<PathBuf>,
    #[arg(long, requires_all = ["x", "r"])]
    y: Option<PathBuf>,
    #[arg(long, requires_all = ["y", "r"])]
    x: Option<PathBuf>,
    #[arg(long, requires_all = ["y", "x"])]
    r: Option<PathBuf>,
    /// Scene id for single-scene runs.
    #[arg(long, default_value = "scene")]
    id: String,
    /// Flat `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one config key, e.g. `--set wiener_main.taps=10`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Also write `<id>.ecf` feature bundles.
    #[arg(long)]
    export_features: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Directory holding `<id>.<estimate-name>.wav` files.
    #[arg(long)]
    estimates: PathBuf,
    #[arg(long, default_value = "f_y_rm")]
    estimate_name: String,
    #[arg(long)]
    report: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct RirArgs {
    /// Room size `L,W,H` in metres.
    #[arg(long, value_parser = parse_triple)]
    room: [f64; 3],
    #[arg(long)]
    t60: f64,
    #[arg(long, value_parser = parse_triple)]
    src: [f64; 3],
    #[arg(long, value_parser = parse_triple)]
    mic: [f64; 3],
    #[arg(long)]
    max_order: Option<u32>,
    #[arg(long)]
    out: PathBuf,
}

fn parse_triple(s: &str) -> Result<[f64; 3], String> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("`{p}`: {e}")))
        .collect::<Result<_, _>>()?;
    parts
        .try_into()
        .map_err(|_| format!("expected three comma-separated numbers, got `{s}`"))
}

/// Missing inputs are usage errors (exit 2), not runtime failures.
struct UsageError(String);

fn require_file(path: &Path) -> Result<(), UsageError> {
    if path.is_file() {
        Ok(())
    } else {
        Err(UsageError(format!("no such file: {}", path.display())))
    }
}

fn require_dir(path: &Path) -> Result<(), UsageError> {
    if path.is_dir() {
        Ok(())
    } else {
        Err(UsageError(format!("no such directory: {}", path.display())))
    }
}

fn load_config(path: Option<&Path>, overrides: &[String]) -> anyhow::Result<RunConfig> {
    let mut cfg = RunConfig::default();
    if let Some(p) = path {
        let text =
            std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
        cfg.apply_text(&text)
            .with_context(|| format!("in {}", p.display()))?;
    }
    for item in overrides {
        let Some((k, v)) = item.split_once('=') else {
            bail!("--set expects KEY=VALUE, got `{item}`");
        };
        cfg.set(k.trim(), v)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn check_inputs(cmd: &Command) -> Result<(), UsageError> {
    match cmd {
        Command::Synth(a) => {
            for dir in [&a.corpus_near, &a.corpus_far].into_iter().flatten() {
                require_dir(dir)?;
            }
        }
        Command::Run(a) => {
            for f in [&a.manifest, &a.y, &a.x, &a.r, &a.config]
                .into_iter()
                .flatten()
            {
                require_file(f)?;
            }
        }
        Command::Eval(a) => {
            require_file(&a.manifest)?;
            require_dir(&a.estimates)?;
            if let Some(c) = &a.config {
                require_file(c)?;
            }
        }
        Command::Rir(_) => {}
    }
    Ok(())
}

fn synth(a: SynthArgs) -> anyhow::Result<()> {
    let req = SynthRequest {
        count: a.count,
        matched: a.matched,
        scenario: a.scenario,
        near: SourceSupply::from_dir(a.corpus_near.as_deref())?,
        far: SourceSupply::from_dir(a.corpus_far.as_deref())?,
        out_dir: a.out.clone(),
        seed: a.seed,
        duration_secs: a.duration,
    };
    let entries = pipe::synth_dataset(&req)?;
    eprintln!(
        "wrote {} scenes and {}",
        entries.len(),
        a.out.join(MANIFEST_NAME).display()
    );
    Ok(())
}

fn run(a: RunArgs) -> anyhow::Result<()> {
    let cfg = load_config(a.config.as_deref(), &a.overrides)?;
    let scenes = match &a.manifest {
        Some(m) => batch::manifest_inputs(&Manifest::read(m)?),
        None => vec![SceneInputs {
            scene_id: a.id.clone(),
            y: a.y.clone().expect("clap enforces --y"),
            x: a.x.clone().expect("clap enforces --x"),
            r: a.r.clone().expect("clap enforces --r"),
        }],
    };
    let records = pipe::run_batch(&scenes, &cfg, &a.out, a.export_features)?;
    let degenerate: usize = records.iter().map(|r| r.report.f_y_rm_degenerate).sum();
    eprintln!(
        "processed {} scenes into {} ({degenerate} degenerate units in F(Y,R_m))",
        records.len(),
        a.out.display()
    );
    Ok(())
}

fn eval(a: EvalArgs) -> anyhow::Result<()> {
    let cfg = load_config(a.config.as_deref(), &[])?;
    let manifest = Manifest::read(&a.manifest)?;
    let rows = pipe::evaluate_manifest(&manifest, &a.estimates, &a.estimate_name, &cfg)?;
    if let Some(parent) = a.report.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)
            .with_context(|| format!("creating {}", parent.display()))?;
    }
    pipe::write_report(&a.report, &rows)?;
    eprintln!("scored {} scenes into {}", rows.len(), a.report.display());
    Ok(())
}

fn rir(a: RirArgs) -> anyhow::Result<()> {
    let [l, w, h] = a.room;
    let mut room = RoomSpec::new(l, w, h, a.t60);
    room.max_order = a.max_order;
    let p = |v: [f64; 3]| Point::new(v[0], v[1], v[2]);
    let taps = image_method_rir(&room, &p(a.src), &p(a.mic))?;
    pipe::write_wav(&a.out, &TimeSignal::new(taps, room.sample_rate)?)?;
    eprintln!("wrote {}", a.out.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(UsageError(msg)) = check_inputs(&cli.command) {
        eprintln!("error: {msg}");
        return ExitCode::from(2);
    }
    let result = match cli.command {
        Command::Synth(a) => synth(a),
        Command::Run(a) => run(a),
        Command::Eval(a) => eval(a),
        Command::Rir(a) => rir(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
