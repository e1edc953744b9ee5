//! Frame-online, per-frequency K-tap echo-path estimation and cancellation.
//!
//! For every bin `f` and frame `t` the filter `h(t,f)` minimizes
//!
//! ```text
//! sum_{t' = t-W}^{t} w(t') |Y(t',f) - h^H X(t',f)|^2
//! ```
//!
//! over the current and previous `W` frames, where `X(t',f)` stacks the last
//! `K` far-end frames. The weighted solver uses
//! `w(t') = 1 / (eps * max_{[t-W, t]} |Y|^2 + |Y(t',f)|^2)`; the unweighted
//! one uses 1. The cancelled output is `Y - h^H X`.
//!
//! The floor `eps * max |Y|^2` is shared by every summand of one solve, which
//! caps the weight spread inside a window at `(1 + eps) / eps`. Taking each
//! summand's peak over its own trailing window instead (`PerSummand`) lets a
//! frame just after digital silence outweigh the rest of the window by many
//! orders of magnitude, and the filter then fits that frame alone.
//!
//! Normal equations carry a relative diagonal load `delta * trace(A) / K`.
//! Window sums are maintained with a two-stack sliding aggregator, so every
//! frame's system is an exact sum over its own window (no running subtraction).

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dsp::Spectrogram;
use crate::error::{Error, Result};
use crate::linalg::{solve_loaded, Gram};

/// Substitute for `lambda` when the whole window is silent.
pub const LAMBDA_FLOOR: f64 = 1e-12;

/// How each summand of the sliding least-squares cost is weighted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    /// Weighted solver (the default): summand `t'` divided by
    /// `eps * max_{[t-W, t]} |Y|^2 + |Y(t', f)|^2`, so every summand of the
    /// frame-`t` problem shares the floor of the solve window.
    SharedFloor,
    /// Summand `t'` divided by `lambda(t', f)`, each with the peak taken over
    /// its own trailing window. Kept for ablations.
    PerSummand,
    /// Weighted solver with `lambda` frozen at the solve frame; equivalent to
    /// `Uniform` up to rounding, kept for ablations.
    Frozen,
    /// Unweighted short-time Wiener solution.
    Uniform,
}

impl std::str::FromStr for Weighting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "wstws" | "shared_floor" => Ok(Weighting::SharedFloor),
            "per_summand" => Ok(Weighting::PerSummand),
            "frozen" => Ok(Weighting::Frozen),
            "stws" | "uniform" => Ok(Weighting::Uniform),
            other => Err(Error::Config(format!("unknown weighting `{other}`"))),
        }
    }
}

impl std::fmt::Display for Weighting {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Weighting::SharedFloor => "wstws",
            Weighting::PerSummand => "per_summand",
            Weighting::Frozen => "frozen",
            Weighting::Uniform => "stws",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WienerConfig {
    /// Filter taps `K`.
    pub taps: usize,
    /// Past frames `W` in the sliding window (the window holds `W + 1` frames).
    pub window: usize,
    /// Floor factor on the windowed peak power.
    pub epsilon: f64,
    /// Relative diagonal loading.
    pub diag_load: f64,
    pub weighting: Weighting,
}

impl Default for WienerConfig {
    fn default() -> Self {
        Self {
            taps: 20,
            window: 200,
            epsilon: 1e-3,
            diag_load: 1e-6,
            weighting: Weighting::SharedFloor,
        }
    }
}

impl WienerConfig {
    pub fn stws() -> Self {
        Self {
            weighting: Weighting::Uniform,
            ..Self::default()
        }
    }

    pub fn with_taps(self, taps: usize) -> Self {
        Self { taps, ..self }
    }

    pub fn with_weighting(self, weighting: Weighting) -> Self {
        Self { weighting, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if self.taps == 0 {
            return Err(Error::Config("taps must be >= 1".into()));
        }
        if !(self.epsilon > 0.0) || !self.epsilon.is_finite() {
            return Err(Error::Config(format!(
                "epsilon must be > 0, got {}",
                self.epsilon
            )));
        }
        if !(self.diag_load >= 0.0) || !self.diag_load.is_finite() {
            return Err(Error::Config(format!(
                "diag_load must be >= 0, got {}",
                self.diag_load
            )));
        }
        Ok(())
    }
}

/// Per-unit K-tap filters, stored `[n_frames][n_bins][K]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterBank {
    taps: Vec<Complex64>,
    n_frames: usize,
    n_bins: usize,
    k: usize,
}

impl FilterBank {
    pub fn n_frames(&self) -> usize {
        self.n_frames
    }

    pub fn n_bins(&self) -> usize {
        self.n_bins
    }

    pub fn taps_per_unit(&self) -> usize {
        self.k
    }

    pub fn get(&self, t: usize, f: usize) -> &[Complex64] {
        let start = (t * self.n_bins + f) * self.k;
        &self.taps[start..start + self.k]
    }
}

/// Units whose normal equations were singular even after loading; their filter is zero.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CancelReport {
    pub degenerate_units: Vec<(usize, usize)>,
}

impl CancelReport {
    pub fn degenerate_count(&self) -> usize {
        self.degenerate_units.len()
    }
}

#[derive(Debug, Clone)]
pub struct Cancellation {
    pub residual: Spectrogram,
    pub filters: FilterBank,
    pub report: CancelReport,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameSolution {
    pub taps: Vec<Complex64>,
    pub degenerate: bool,
}

/// `lambda(t,f) = eps * max_{t' in [t-W, t]} |Y(t',f)|^2 + |Y(t,f)|^2`, or
/// [`LAMBDA_FLOOR`] when that is zero.
pub fn lambda_weight(y: &Spectrogram, t: usize, f: usize, window: usize, epsilon: f64) -> f64 {
    floored(epsilon * window_peak(y, t, f, window) + y.get(t, f).norm_sqr())
}

/// `max_{t' in [t-W, t]} |Y(t',f)|^2`.
pub fn window_peak(y: &Spectrogram, t: usize, f: usize, window: usize) -> f64 {
    (t.saturating_sub(window)..=t)
        .map(|tp| y.get(tp, f).norm_sqr())
        .fold(0.0, f64::max)
}

#[inline]
fn floored(lambda: f64) -> f64 {
    if lambda > 0.0 {
        lambda
    } else {
        LAMBDA_FLOOR
    }
}

fn check_pair(y: &Spectrogram, x: &Spectrogram, cfg: &WienerConfig) -> Result<()> {
    cfg.validate()?;
    y.ensure_same_shape(x)
}

#[inline]
fn fill_stack(col: &[Complex64], t: usize, out: &mut [Complex64]) {
    for (k, slot) in out.iter_mut().enumerate() {
        *slot = if k <= t {
            col[t - k]
        } else {
            Complex64::new(0.0, 0.0)
        };
    }
}

/// Filter for a single unit, built directly from its window (no sliding state).
pub fn solve_frame(
    y: &Spectrogram,
    x: &Spectrogram,
    t: usize,
    f: usize,
    cfg: &WienerConfig,
) -> Result<FrameSolution> {
    check_pair(y, x, cfg)?;
    if t >= y.n_frames() || f >= y.n_bins() {
        return Err(Error::Shape(format!(
            "unit ({t}, {f}) outside {}x{}",
            y.n_frames(),
            y.n_bins()
        )));
    }
    let xcol = x.column(f);
    let mut gram = Gram::zeros(cfg.taps);
    let mut stack = vec![Complex64::new(0.0, 0.0); cfg.taps];
    let shared = cfg.epsilon * window_peak(y, t, f, cfg.window);
    for tp in t.saturating_sub(cfg.window)..=t {
        let w = match cfg.weighting {
            Weighting::PerSummand => 1.0 / lambda_weight(y, tp, f, cfg.window, cfg.epsilon),
            Weighting::SharedFloor => 1.0 / floored(shared + y.get(tp, f).norm_sqr()),
            Weighting::Frozen | Weighting::Uniform => 1.0,
        };
        fill_stack(&xcol, tp, &mut stack);
        gram.add_sample(w, &stack, y.get(tp, f));
    }
    let scale = match cfg.weighting {
        Weighting::Frozen => 1.0 / lambda_weight(y, t, f, cfg.window, cfg.epsilon),
        _ => 1.0,
    };
    let mut taps = vec![Complex64::new(0.0, 0.0); cfg.taps];
    let ok = solve_loaded(&gram, scale, cfg.diag_load, &mut Vec::new(), &mut taps);
    Ok(FrameSolution {
        taps,
        degenerate: !ok,
    })
}

/// Trailing-window peak power for one bin, using a monotone deque.
fn peak_column(power: &[f64], window: usize) -> Vec<f64> {
    let mut deque = std::collections::VecDeque::<usize>::new();
    let mut out = Vec::with_capacity(power.len());
    for t in 0..power.len() {
        while deque.back().is_some_and(|&i| power[i] <= power[t]) {
            deque.pop_back();
        }
        deque.push_back(t);
        while deque.front().is_some_and(|&i| i + window < t) {
            deque.pop_front();
        }
        out.push(power[deque[0]]);
    }
    out
}

/// Exact sliding sum of per-frame Gram contributions (two-stack queue).
struct SlidingGram {
    k: usize,
    back: Vec<(usize, f64)>,
    back_sum: Gram,
    front: Vec<Gram>,
    pool: Vec<Gram>,
    stack: Vec<Complex64>,
}

impl SlidingGram {
    fn new(k: usize, capacity: usize) -> Self {
        Self {
            k,
            back: Vec::with_capacity(capacity),
            back_sum: Gram::zeros(k),
            front: Vec::with_capacity(capacity),
            pool: Vec::new(),
            stack: vec![Complex64::new(0.0, 0.0); k],
        }
    }

    fn push(&mut self, t: usize, w: f64, xcol: &[Complex64], ycol: &[Complex64]) {
        fill_stack(xcol, t, &mut self.stack);
        self.back_sum.add_sample(w, &self.stack, ycol[t]);
        self.back.push((t, w));
    }

    fn pop_oldest(&mut self, xcol: &[Complex64], ycol: &[Complex64]) {
        if self.front.is_empty() {
            // Move back -> front; each front entry holds the sum of itself and all newer entries.
            while let Some((t, w)) = self.back.pop() {
                let mut g = self.pool.pop().unwrap_or_else(|| Gram::zeros(self.k));
                match self.front.last() {
                    Some(prev) => g.clone_from(prev),
                    None => g.clear(),
                }
                fill_stack(xcol, t, &mut self.stack);
                g.add_sample(w, &self.stack, ycol[t]);
                self.front.push(g);
            }
            self.back_sum.clear();
        }
        if let Some(g) = self.front.pop() {
            self.pool.push(g);
        }
    }

    fn clear(&mut self) {
        self.back.clear();
        self.back_sum.clear();
        self.pool.append(&mut self.front);
    }

    fn total_into(&self, out: &mut Gram) {
        match self.front.last() {
            Some(top) => out.set_sum(top, &self.back_sum),
            None => out.clone_from(&self.back_sum),
        }
    }
}

struct BinOutput {
    residual: Vec<Complex64>,
    taps: Option<Vec<Complex64>>,
    degenerate: Vec<usize>,
}

fn run_bin(
    ycol: &[Complex64],
    xcol: &[Complex64],
    cfg: &WienerConfig,
    keep_taps: bool,
) -> BinOutput {
    let n = ycol.len();
    let k = cfg.taps;
    let power: Vec<f64> = ycol.iter().map(|v| v.norm_sqr()).collect();
    let peaks = match cfg.weighting {
        Weighting::Uniform => Vec::new(),
        _ => peak_column(&power, cfg.window),
    };
    // Weight of summand `tp` given the floor of the current solve window.
    let weight = |tp: usize, shared_floor: f64| -> f64 {
        match cfg.weighting {
            Weighting::PerSummand => 1.0 / floored(cfg.epsilon * peaks[tp] + power[tp]),
            Weighting::SharedFloor => 1.0 / floored(shared_floor + power[tp]),
            Weighting::Frozen | Weighting::Uniform => 1.0,
        }
    };

    let mut sliding = SlidingGram::new(k, cfg.window + 1);
    let mut total = Gram::zeros(k);
    let mut work = Vec::new();
    let mut h = vec![Complex64::new(0.0, 0.0); k];
    let mut stack = vec![Complex64::new(0.0, 0.0); k];
    let mut residual = Vec::with_capacity(n);
    let mut taps = keep_taps.then(|| Vec::with_capacity(n * k));
    let mut degenerate = Vec::new();
    let mut floor_in_use = f64::NAN;

    for t in 0..n {
        let start = t.saturating_sub(cfg.window);
        let shared_floor = match cfg.weighting {
            Weighting::SharedFloor => cfg.epsilon * peaks[t],
            _ => 0.0,
        };
        if cfg.weighting == Weighting::SharedFloor && shared_floor != floor_in_use {
            // The window peak moved, so every stored weight changes: rebuild.
            sliding.clear();
            for tp in start..=t {
                sliding.push(tp, weight(tp, shared_floor), xcol, ycol);
            }
            floor_in_use = shared_floor;
        } else {
            sliding.push(t, weight(t, shared_floor), xcol, ycol);
            if t > cfg.window {
                sliding.pop_oldest(xcol, ycol);
            }
        }
        sliding.total_into(&mut total);
        let scale = match cfg.weighting {
            Weighting::Frozen => 1.0 / floored(cfg.epsilon * peaks[t] + power[t]),
            _ => 1.0,
        };
        if !solve_loaded(&total, scale, cfg.diag_load, &mut work, &mut h) {
            degenerate.push(t);
        }
        fill_stack(xcol, t, &mut stack);
        let estimate: Complex64 = h.iter().zip(&stack).map(|(hk, xk)| hk.conj() * xk).sum();
        residual.push(ycol[t] - estimate);
        if let Some(taps) = taps.as_mut() {
            taps.extend_from_slice(&h);
        }
    }
    BinOutput {
        residual,
        taps,
        degenerate,
    }
}

fn run_all_bins(
    y: &Spectrogram,
    x: &Spectrogram,
    cfg: &WienerConfig,
    keep_taps: bool,
) -> Result<(Spectrogram, Option<FilterBank>, CancelReport)> {
    check_pair(y, x, cfg)?;
    let n_bins = y.n_bins();
    let outputs: Vec<BinOutput> = (0..n_bins)
        .into_par_iter()
        .map(|f| run_bin(&y.column(f), &x.column(f), cfg, keep_taps))
        .collect();

    let mut residual = Spectrogram::zeros(y.n_frames(), *y.config(), y.sample_rate());
    let mut report = CancelReport::default();
    let mut filters = keep_taps.then(|| FilterBank {
        taps: vec![Complex64::new(0.0, 0.0); y.n_frames() * n_bins * cfg.taps],
        n_frames: y.n_frames(),
        n_bins,
        k: cfg.taps,
    });
    for (f, out) in outputs.into_iter().enumerate() {
        residual.set_column(f, &out.residual);
        report
            .degenerate_units
            .extend(out.degenerate.iter().map(|&t| (t, f)));
        if let (Some(bank), Some(taps)) = (filters.as_mut(), out.taps) {
            for t in 0..bank.n_frames {
                let dst = (t * n_bins + f) * bank.k;
                bank.taps[dst..dst + bank.k].copy_from_slice(&taps[t * bank.k..(t + 1) * bank.k]);
            }
        }
    }
    report.degenerate_units.sort_unstable();
    Ok((residual, filters, report))
}

/// Cancels the part of `y` predictable from `x`, returning residual, per-unit filters and report.
pub fn wstws_cancel(y: &Spectrogram, x: &Spectrogram, cfg: &WienerConfig) -> Result<Cancellation> {
    let (residual, filters, report) = run_all_bins(y, x, cfg, true)?;
    Ok(Cancellation {
        residual,
        filters: filters.expect("filters requested"),
        report,
    })
}

/// As [`wstws_cancel`] without retaining the filter bank.
pub fn cancel(
    y: &Spectrogram,
    x: &Spectrogram,
    cfg: &WienerConfig,
) -> Result<(Spectrogram, CancelReport)> {
    let (residual, _, report) = run_all_bins(y, x, cfg, false)?;
    Ok((residual, report))
}
