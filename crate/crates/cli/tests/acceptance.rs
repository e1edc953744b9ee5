//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fails.

#[path = "../../core/tests/oracle/mod.rs"]
mod oracle;

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use num_complex::Complex64;
use proptest::prelude::*;
use proptest::test_runner::{Config as PropConfig, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use oracle::{dense_filter, gaussian, random_spec, rel_err, spec_from};
use refaec_core::metrics::{erle, ri_mag_loss, s_sisnr, sdr, DB_CAP};
use refaec_core::nonlinearity::{
    apply_sample, exponential, hard_clip, polynomial, sample_kind, saturating, sigmoid_stage,
    soft_clip, NonlinearityParams,
};
use refaec_core::pipeline::linear::to_waveform;
use refaec_core::purifier::{apply_mask, compute_mask, purify_reference};
use refaec_core::room::{schroeder_t60, synthesize_with_rirs, SceneOptions, SceneRirs};
use refaec_core::source::speech_like;
use refaec_core::wiener::solve_frame;
use refaec_core::{
    cancel, stft_forward, stft_inverse, MaskConfig, NonlinearityKind, RoomSpec, RunConfig,
    SceneGeometry, Spectrogram, StftConfig, TimeSignal, Weighting, WienerConfig,
};

const FS: u32 = 16_000;
const WEIGHTINGS: [Weighting; 4] = [
    Weighting::SharedFloor,
    Weighting::PerSummand,
    Weighting::Frozen,
    Weighting::Uniform,
];

struct Outcome {
    pass: bool,
    detail: String,
}

type Criterion = (&'static str, fn() -> Outcome);

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn c1_oracle_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0xC1);
    let mut worst: f64 = 0.0;
    let n = 1200;
    for _ in 0..n {
        let taps = rng.random_range(1..=8);
        let window = rng.random_range(1..=32);
        let n_bins = rng.random_range(1..=4) + 1;
        let n_frames = rng.random_range(1..=60);
        let y = random_spec(&mut rng, n_frames, n_bins);
        let x = random_spec(&mut rng, n_frames, n_bins);
        let cfg = WienerConfig {
            taps,
            window,
            weighting: WEIGHTINGS[rng.random_range(0..4)],
            ..WienerConfig::default()
        };
        let t = rng.random_range(0..n_frames);
        let f = rng.random_range(0..n_bins);
        let got = solve_frame(&y, &x, t, f, &cfg).unwrap();
        worst = worst.max(rel_err(&got.taps, &dense_filter(&y, &x, t, f, &cfg)));
    }
    outcome(
        worst <= 1e-6,
        format!("{n} instances, worst relative error {worst:.2e} (bound 1e-6)"),
    )
}

fn c2_in_model_cancellation() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0xC2);
    let (n_frames, n_bins, k) = (400, 161, 20);
    let x = random_spec(&mut rng, n_frames, n_bins);
    let gains: Vec<Vec<Complex64>> = (0..n_bins)
        .map(|_| {
            (0..k)
                .map(|j| gaussian(&mut rng) * 0.8f64.powi(j as i32))
                .collect()
        })
        .collect();
    let mut data = Vec::with_capacity(n_frames * n_bins);
    for t in 0..n_frames {
        for (f, g) in gains.iter().enumerate() {
            let mut acc = Complex64::new(0.0, 0.0);
            for (j, gj) in g.iter().enumerate().take(t + 1) {
                acc += gj * x.get(t - j, f);
            }
            data.push(acc);
        }
    }
    let y = spec_from(data, n_frames, n_bins);
    let warmup = 2 * k;
    let tail_energy = |s: &Spectrogram| -> f64 {
        (warmup..n_frames)
            .flat_map(|t| s.frame(t).iter())
            .map(|v| v.norm_sqr())
            .sum()
    };
    let mut worst = f64::NEG_INFINITY;
    for weighting in [Weighting::SharedFloor, Weighting::Uniform] {
        let cfg = WienerConfig::default().with_weighting(weighting);
        let (res, _) = cancel(&y, &x, &cfg).unwrap();
        worst = worst.max(10.0 * (tail_energy(&res) / tail_energy(&y)).log10());
    }
    outcome(
        worst <= -80.0,
        format!("K=20, W=200, residual after {warmup} frames {worst:.1} dB (bound -80 dB)"),
    )
}

struct SceneErle {
    wstws_x: f64,
    wstws_rm: f64,
    stws_rm: f64,
}

fn linear_erle(y: &TimeSignal, x: &TimeSignal, r: &TimeSignal, cfg: &RunConfig) -> SceneErle {
    let n = y.len();
    let p = cfg.stft.padded_len(n);
    let st = |s: &TimeSignal| stft_forward(&s.fit_to_len(p), &cfg.stft).unwrap();
    let (ys, xs, rs) = (st(y), st(x), st(r));
    let rm = purify_reference(&rs, &xs, &cfg.mask, &cfg.wiener_ref).unwrap();
    let score = |res: Spectrogram| erle(y, &to_waveform(&res, n).unwrap()).unwrap();
    SceneErle {
        wstws_x: score(cancel(&ys, &xs, &cfg.wiener_main).unwrap().0),
        wstws_rm: score(cancel(&ys, &rm, &cfg.wiener_main).unwrap().0),
        stws_rm: score(cancel(&ys, &rm, &WienerConfig::stws()).unwrap().0),
    }
}

/// Fraction of bootstrap resamples (over scene indices) whose mean passes `test`.
fn bootstrap(values: &[f64], rounds: usize, seed: u64, test: impl Fn(f64) -> bool) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = values.len();
    let hits = (0..rounds)
        .filter(|_| {
            let mean = (0..n).map(|_| values[rng.random_range(0..n)]).sum::<f64>() / n as f64;
            test(mean)
        })
        .count();
    hits as f64 / rounds as f64
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn c3_directional_reproduction() -> Outcome {
    const SCENES: usize = 200;
    const SECS: f64 = 3.0;
    let n = (SECS * FS as f64) as usize;
    let cfg = RunConfig::default();
    let opts = SceneOptions {
        duration_secs: Some(SECS),
        ..SceneOptions::default()
    };
    let mut master = ChaCha8Rng::seed_from_u64(0xC3);
    let seeds: Vec<u64> = (0..SCENES).map(|_| master.random()).collect();
    // Each scene index shares room, geometry and far-end speech across both conditions.
    let rows: Vec<(SceneErle, SceneErle)> = seeds
        .par_iter()
        .map(|&seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let room = RoomSpec::sample(&mut rng);
            let geom = SceneGeometry::sample(&mut rng, &room).unwrap();
            let x = speech_like(&mut rng, n, FS);
            let v = TimeSignal::zeros(n, FS);
            let rirs = SceneRirs::compute(&room, &geom).unwrap();
            let mut run = |matched: bool| {
                let kind = sample_kind(&mut rng, matched);
                let sc = synthesize_with_rirs(
                    &room,
                    &geom,
                    rirs.clone(),
                    &v,
                    &x,
                    &kind,
                    0.0,
                    seed,
                    &opts,
                )
                .unwrap();
                linear_erle(&sc.y, &sc.x, &sc.r, &cfg)
            };
            let mis = run(false);
            let mat = run(true);
            (mis, mat)
        })
        .collect();

    let gap_mis: Vec<f64> = rows.iter().map(|(m, _)| m.wstws_rm - m.wstws_x).collect();
    let gap_mat: Vec<f64> = rows.iter().map(|(_, m)| m.wstws_rm - m.wstws_x).collect();
    let gap_diff: Vec<f64> = gap_mis.iter().zip(&gap_mat).map(|(a, b)| a - b).collect();
    let stws_vs_x: Vec<f64> = rows.iter().map(|(m, _)| m.stws_rm - m.wstws_x).collect();

    let conf_a = bootstrap(&gap_mis, 2000, 1, |m| m >= 3.0);
    let conf_b = bootstrap(&gap_diff, 2000, 2, |m| m > 0.0);
    let conf_c = bootstrap(&stws_vs_x, 2000, 3, |m| m > 0.0);
    let avg = |f: fn(&(SceneErle, SceneErle)) -> f64| mean(&rows.iter().map(f).collect::<Vec<_>>());
    println!(
        "    mismatched: WSTWS(Y,X) {:.2}  WSTWS(Y,Rm) {:.2}  STWS(Y,Rm) {:.2} dB",
        avg(|r| r.0.wstws_x),
        avg(|r| r.0.wstws_rm),
        avg(|r| r.0.stws_rm)
    );
    println!(
        "    matched:    WSTWS(Y,X) {:.2}  WSTWS(Y,Rm) {:.2}  STWS(Y,Rm) {:.2} dB",
        avg(|r| r.1.wstws_x),
        avg(|r| r.1.wstws_rm),
        avg(|r| r.1.stws_rm)
    );
    let pass = conf_a >= 0.9 && conf_b >= 0.9 && conf_c >= 0.9;
    outcome(
        pass,
        format!(
            "{SCENES} scenes x 2 conditions, {SECS} s far-end only; \
             (a) gap {:.2} dB >= 3 conf {:.1}%, (b) mismatched-matched {:.2} dB > 0 conf {:.1}%, \
             (c) STWS(Y,Rm)-WSTWS(Y,X) {:.2} dB > 0 conf {:.1}%",
            mean(&gap_mis),
            100.0 * conf_a,
            mean(&gap_diff),
            100.0 * conf_b,
            mean(&stws_vs_x),
            100.0 * conf_c
        ),
    )
}

fn c4_stft_reconstruction() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0xC4);
    let cfg = StftConfig::default();
    let len = 6 * FS as usize;
    let w = cfg.window_len;
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let samples: Vec<f64> = (0..len).map(|_| rng.random_range(-1.0..1.0)).collect();
        let sig = TimeSignal::new(samples, FS).unwrap();
        let back = stft_inverse(&stft_forward(&sig, &cfg).unwrap()).unwrap();
        let (a, b) = (&sig.samples()[w..len - w], &back.samples()[w..len - w]);
        let err: f64 = a.iter().zip(b).map(|(p, q)| (p - q).powi(2)).sum();
        let norm: f64 = a.iter().map(|p| p * p).sum();
        worst = worst.max((err / norm).sqrt());
    }
    outcome(
        worst <= 1e-6,
        format!("100 signals of 6 s, worst interior error {worst:.2e} (bound 1e-6)"),
    )
}

fn c5_rir_validity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0xC5);
    let mut t60_ok = 0;
    let mut delay_ok = 0;
    let mut paths = 0;
    for _ in 0..100 {
        let room = RoomSpec::sample(&mut rng);
        let geom = SceneGeometry::sample(&mut rng, &room).unwrap();
        let rirs = SceneRirs::compute(&room, &geom).unwrap();
        if let Some(t60) = schroeder_t60(&rirs.h1, room.sample_rate) {
            if (t60 / room.t60 - 1.0).abs() <= 0.25 {
                t60_ok += 1;
            }
        }
        let pairs = [
            (&rirs.h1, geom.talker, geom.main_mic),
            (&rirs.h2, geom.loudspeaker, geom.main_mic),
            (&rirs.h3, geom.talker, geom.ref_mic),
            (&rirs.h4, geom.loudspeaker, geom.ref_mic),
        ];
        for (h, a, b) in pairs {
            let d = ((a.x - b.x).powi(2) + (a.y - b.y).powi(2) + (a.z - b.z).powi(2)).sqrt();
            let expected = (d * room.sample_rate as f64 / room.speed_of_sound).round() as i64;
            let onset = h.iter().position(|v| *v != 0.0).map(|i| i as i64);
            paths += 1;
            if onset.is_some_and(|o| (o - expected).abs() <= 1) {
                delay_ok += 1;
            }
        }
    }
    outcome(
        t60_ok >= 90 && delay_ok == paths,
        format!("T60 within 25% for {t60_ok}/100 rooms (need 90); onset within 1 sample for {delay_ok}/{paths} paths"),
    )
}

fn c6_nonlinearity_suite() -> Outcome {
    let grid: Vec<f64> = (0..100_000)
        .map(|i| -10.0 + 20.0 * i as f64 / 99_999.0)
        .collect();
    let params = NonlinearityParams::default();
    let bs = [2.0, 3.0, 4.0, 5.0];
    let mut failures = Vec::new();

    let all_five = [
        NonlinearityKind::Saturating { b: 3.0 },
        NonlinearityKind::Exponential { b: 3.0 },
        NonlinearityKind::Polynomial { b: 3.0 },
        NonlinearityKind::HardClipSigmoid,
        NonlinearityKind::SoftClipSigmoid,
    ];
    for kind in &all_five {
        if apply_sample(0.0, kind, &params) != 0.0 {
            failures.push(format!("{kind:?} at 0"));
        }
    }
    for &b in &bs {
        if saturating(0.0, b) != 0.0 || exponential(0.0, b) != 0.0 || polynomial(0.0, b) != 0.0 {
            failures.push(format!("zero map at b={b}"));
        }
        let a = 5.0 / b;
        if !grid.iter().all(|&x| saturating(x, b).abs() < a) {
            failures.push(format!("saturating bound at b={b}"));
        }
        if !grid
            .windows(2)
            .all(|w| exponential(w[1], b) > exponential(w[0], b))
        {
            failures.push(format!("exponential monotonicity at b={b}"));
        }
    }
    if !grid
        .iter()
        .all(|&x| soft_clip(x, params.x_max, params.rho).abs() < params.x_max)
    {
        failures.push("soft_clip bound".into());
    }
    if !grid.iter().all(|&x| sigmoid_stage(x).abs() < 1.0) {
        failures.push("sigmoid bound".into());
    }
    if !grid
        .iter()
        .all(|&x| hard_clip(hard_clip(x, params.x_max), params.x_max) == hard_clip(x, params.x_max))
    {
        failures.push("hard_clip idempotence".into());
    }
    outcome(
        failures.is_empty(),
        if failures.is_empty() {
            format!("1e5-point grid on [-10, 10], b in {bs:?}: all checks hold")
        } else {
            format!("violations: {}", failures.join(", "))
        },
    )
}

fn c7_mask_properties() -> Outcome {
    let mut runner = TestRunner::new(PropConfig {
        cases: 1000,
        failure_persistence: None,
        ..PropConfig::default()
    });
    let strategy = (any::<u64>(), 0.0f64..=1.0, prop::bool::weighted(0.2));
    let result = runner.run(&strategy, |(seed, m, sparse)| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut r = random_spec(&mut rng, 24, 3);
        if sparse {
            let data = r
                .as_slice()
                .iter()
                .map(|v| {
                    if rng.random_bool(0.5) {
                        Complex64::new(0.0, 0.0)
                    } else {
                        *v
                    }
                })
                .collect();
            r = r.with_data(data).unwrap();
        }
        let x = random_spec(&mut rng, 24, 3);
        let wcfg = WienerConfig {
            window: 8,
            ..WienerConfig::default()
        };
        let mcfg = MaskConfig {
            m,
            ..MaskConfig::default()
        };
        let mask = compute_mask(&r, &x, &mcfg, &wcfg).unwrap();
        prop_assert!(mask.values().iter().all(|v| (0.0..=1.0).contains(v)));
        prop_assert_eq!(&apply_mask(&r, &mask, 0.0).unwrap(), &r);
        let rm = apply_mask(&r, &mask, m).unwrap();
        for (orig, out) in r.as_slice().iter().zip(rm.as_slice()) {
            prop_assert!(out.norm() <= orig.norm() * (1.0 + 1e-15));
            if out.norm() > 0.0 {
                prop_assert!((out.arg() - orig.arg()).abs() < 1e-12);
            }
        }
        Ok(())
    });
    match result {
        Ok(()) => outcome(
            true,
            "1000 random cases: bounds, m=0 identity, attenuation, phase".into(),
        ),
        Err(e) => outcome(false, format!("{e}")),
    }
}

fn c8_metric_fixed_points() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0xC8);
    let sig = speech_like(&mut rng, FS as usize, FS);
    let noisy = sig
        .add(&speech_like(&mut rng, FS as usize, FS).scaled(0.3))
        .unwrap();
    let spec = stft_forward(&sig, &StftConfig::default()).unwrap();
    let one = spec_from(
        vec![Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)],
        1,
        2,
    );
    let zero = spec_from(vec![Complex64::new(0.0, 0.0); 2], 1, 2);

    let checks = [
        ("erle(y,y)=0", erle(&sig, &sig).unwrap() == 0.0),
        ("sdr(s,s)=cap", sdr(&sig, &sig).unwrap() == DB_CAP),
        (
            "s_sisnr scale invariance",
            s_sisnr(&sig, &noisy.scaled(4.0)).unwrap() == s_sisnr(&sig, &noisy).unwrap(),
        ),
        (
            "ri_mag_loss(S,S)=0",
            ri_mag_loss(&spec, &spec, 0.5).unwrap() == 0.0,
        ),
        (
            "single unit loss 2",
            (ri_mag_loss(&one, &zero, 0.5).unwrap() - 2.0).abs() <= 1e-12,
        ),
    ];
    let failed: Vec<&str> = checks.iter().filter(|c| !c.1).map(|c| c.0).collect();
    outcome(
        failed.is_empty(),
        if failed.is_empty() {
            checks.iter().map(|c| c.0).collect::<Vec<_>>().join("; ")
        } else {
            format!("failed: {}", failed.join(", "))
        },
    )
}

fn c9_reference_proximity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0xC9);
    let opts = SceneOptions::default();
    let n = (opts.duration_secs.unwrap() * FS as f64) as usize;
    let mut higher = 0;
    for i in 0..100 {
        let room = RoomSpec::sample(&mut rng);
        let geom = SceneGeometry::sample(&mut rng, &room).unwrap();
        let v = speech_like(&mut rng, n, FS);
        let x = speech_like(&mut rng, n, FS);
        let kind = sample_kind(&mut rng, i % 2 == 0);
        let rirs = SceneRirs::compute(&room, &geom).unwrap();
        let sc = synthesize_with_rirs(&room, &geom, rirs, &v, &x, &kind, 0.0, i, &opts).unwrap();
        let at_ref = sc.r_far.energy() / sc.r_near.energy();
        let at_main = sc.d.energy() / sc.s.energy();
        if at_ref > at_main {
            higher += 1;
        }
    }
    outcome(
        higher >= 95,
        format!("far/near ratio higher at the reference mic in {higher}/100 scenes (need 95)"),
    )
}

fn refaec(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_refaec"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!(
            "{args:?}: {}",
            String::from_utf8_lossy(&out.stderr)
        ))
    }
}

fn pipeline_once(root: &Path) -> Result<(), String> {
    let p = |s: &str| root.join(s).to_string_lossy().into_owned();
    refaec(&[
        "synth",
        "--count",
        "3",
        "--seed",
        "7",
        "--duration",
        "2",
        "--out",
        &p("data"),
    ])?;
    refaec(&[
        "run",
        "--manifest",
        &p("data/manifest.jsonl"),
        "--export-features",
        "--out",
        &p("out"),
    ])?;
    refaec(&[
        "eval",
        "--manifest",
        &p("data/manifest.jsonl"),
        "--estimates",
        &p("out"),
        "--report",
        &p("report.jsonl"),
    ])
}

fn tree(root: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path
                    .strip_prefix(root)
                    .unwrap()
                    .to_string_lossy()
                    .into_owned();
                files.push((rel, std::fs::read(&path).unwrap()));
            }
        }
    }
    files.sort();
    files
}

fn c10_end_to_end_determinism() -> Outcome {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    if let Err(e) = pipeline_once(a.path()).and_then(|_| pipeline_once(b.path())) {
        return outcome(false, e);
    }
    let (ta, tb) = (tree(a.path()), tree(b.path()));
    let differing: Vec<&str> = ta
        .iter()
        .zip(&tb)
        .filter(|(x, y)| x != y)
        .map(|(x, _)| x.0.as_str())
        .collect();
    outcome(
        ta.len() == tb.len() && differing.is_empty() && !ta.is_empty(),
        format!(
            "synth+run+eval twice: {} files, {} differ {differing:?}",
            ta.len(),
            differing.len()
        ),
    )
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("wiener oracle equivalence", c1_oracle_equivalence),
        ("in-model cancellation", c2_in_model_cancellation),
        ("directional linear-stage ERLE", c3_directional_reproduction),
        ("STFT reconstruction", c4_stft_reconstruction),
        ("RIR validity", c5_rir_validity),
        ("nonlinearity analytic suite", c6_nonlinearity_suite),
        ("mask and purifier properties", c7_mask_properties),
        ("metric fixed points", c8_metric_fixed_points),
        ("reference proximity", c9_reference_proximity),
        ("end-to-end determinism", c10_end_to_end_determinism),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let o = run();
        let status = if o.pass { "PASS" } else { "FAIL" };
        println!(
            "{status} criterion {}: {name} ({:.1} s) {}",
            i + 1,
            start.elapsed().as_secs_f64(),
            o.detail
        );
        if !o.pass {
            failed += 1;
        }
    }
    println!(
        "{} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
