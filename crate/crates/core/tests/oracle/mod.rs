//! Dense reference solver for the per-unit weighted least-squares problem.
//!
//! Builds the normal equations straight from the cost with nalgebra and solves
//! them by LU, so it shares nothing with the packed Cholesky in the crate.

#![allow(dead_code)]

use nalgebra::{Complex, DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use refaec_core::{Spectrogram, StftConfig, Weighting, WienerConfig, WindowKind};

pub fn small_stft(n_bins: usize) -> StftConfig {
    StftConfig {
        window_len: 2 * (n_bins - 1),
        hop: n_bins - 1,
        window: WindowKind::Hamming,
    }
}

pub fn spec_from(data: Vec<Complex64>, n_frames: usize, n_bins: usize) -> Spectrogram {
    Spectrogram::from_data(data, n_frames, small_stft(n_bins), 16_000).unwrap()
}

pub fn gaussian<R: Rng>(rng: &mut R) -> Complex64 {
    Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
}

pub fn random_spec<R: Rng>(rng: &mut R, n_frames: usize, n_bins: usize) -> Spectrogram {
    let data = (0..n_frames * n_bins).map(|_| gaussian(rng)).collect();
    spec_from(data, n_frames, n_bins)
}

fn power(y: &Spectrogram, t: usize, f: usize) -> f64 {
    y.get(t, f).norm_sqr()
}

fn peak(y: &Spectrogram, t: usize, f: usize, w: usize) -> f64 {
    let mut m: f64 = 0.0;
    let mut tp = t as i64;
    while tp >= 0 && tp >= t as i64 - w as i64 {
        m = m.max(power(y, tp as usize, f));
        tp -= 1;
    }
    m
}

fn floor_zero(v: f64) -> f64 {
    if v > 0.0 {
        v
    } else {
        1e-12
    }
}

/// Weight of summand `tp` in the frame-`t` problem, written out per mode.
pub fn summand_weight(y: &Spectrogram, t: usize, tp: usize, f: usize, cfg: &WienerConfig) -> f64 {
    let eps = cfg.epsilon;
    match cfg.weighting {
        Weighting::Uniform => 1.0,
        Weighting::Frozen => 1.0 / floor_zero(eps * peak(y, t, f, cfg.window) + power(y, t, f)),
        Weighting::SharedFloor => {
            1.0 / floor_zero(eps * peak(y, t, f, cfg.window) + power(y, tp, f))
        }
        Weighting::PerSummand => {
            1.0 / floor_zero(eps * peak(y, tp, f, cfg.window) + power(y, tp, f))
        }
    }
}

/// `argmin_h sum w(t') |Y(t') - h^H X(t')|^2` with loading `delta * tr(A) / K`.
pub fn dense_filter(
    y: &Spectrogram,
    x: &Spectrogram,
    t: usize,
    f: usize,
    cfg: &WienerConfig,
) -> Vec<Complex64> {
    let k = cfg.taps;
    let mut a = DMatrix::<Complex<f64>>::zeros(k, k);
    let mut b = DVector::<Complex<f64>>::zeros(k);
    let start = t.saturating_sub(cfg.window);
    for tp in start..=t {
        let w = summand_weight(y, t, tp, f, cfg);
        let xs = DVector::from_iterator(
            k,
            (0..k).map(|j| {
                if j <= tp {
                    let v = x.get(tp - j, f);
                    Complex::new(v.re, v.im)
                } else {
                    Complex::new(0.0, 0.0)
                }
            }),
        );
        let yv = y.get(tp, f);
        a += xs.clone() * xs.adjoint() * Complex::new(w, 0.0);
        b += xs * Complex::new(yv.re, -yv.im) * Complex::new(w, 0.0);
    }
    let load = cfg.diag_load * a.trace().re / k as f64;
    for i in 0..k {
        a[(i, i)] += Complex::new(load, 0.0);
    }
    let h = a.lu().solve(&b).expect("oracle system is singular");
    h.iter().map(|c| Complex64::new(c.re, c.im)).collect()
}

pub fn rel_err(a: &[Complex64], b: &[Complex64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(p, q)| (p - q).norm_sqr()).sum();
    let den: f64 = b.iter().map(|q| q.norm_sqr()).sum();
    (num / den.max(1e-300)).sqrt()
}
