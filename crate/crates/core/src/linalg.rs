//! Small dense Hermitian systems stored as packed lower triangles.

use num_complex::Complex64;

#[inline]
pub(crate) fn packed_index(i: usize, j: usize) -> usize {
    debug_assert!(j <= i);
    i * (i + 1) / 2 + j
}

pub(crate) fn packed_len(k: usize) -> usize {
    k * (k + 1) / 2
}

/// Weighted normal-equation accumulator: `A = sum w x x^H` (lower triangle), `b = sum w x y*`.
#[derive(Debug, Clone)]
pub(crate) struct Gram {
    pub a: Vec<Complex64>,
    pub b: Vec<Complex64>,
}

impl Gram {
    pub fn zeros(k: usize) -> Self {
        Self {
            a: vec![Complex64::new(0.0, 0.0); packed_len(k)],
            b: vec![Complex64::new(0.0, 0.0); k],
        }
    }

    pub fn k(&self) -> usize {
        self.b.len()
    }

    pub fn clear(&mut self) {
        self.a
            .iter_mut()
            .for_each(|v| *v = Complex64::new(0.0, 0.0));
        self.b
            .iter_mut()
            .for_each(|v| *v = Complex64::new(0.0, 0.0));
    }

    pub fn add_sample(&mut self, weight: f64, x: &[Complex64], y: Complex64) {
        let yc = y.conj();
        let mut idx = 0;
        for i in 0..x.len() {
            let wx = x[i] * weight;
            if wx.re == 0.0 && wx.im == 0.0 {
                idx += i + 1;
                continue;
            }
            for xj in &x[..=i] {
                self.a[idx] += wx * xj.conj();
                idx += 1;
            }
            self.b[i] += wx * yc;
        }
    }

    pub fn set_sum(&mut self, lhs: &Gram, rhs: &Gram) {
        for ((d, l), r) in self.a.iter_mut().zip(&lhs.a).zip(&rhs.a) {
            *d = l + r;
        }
        for ((d, l), r) in self.b.iter_mut().zip(&lhs.b).zip(&rhs.b) {
            *d = l + r;
        }
    }

    pub fn trace(&self) -> f64 {
        (0..self.k()).map(|i| self.a[packed_index(i, i)].re).sum()
    }
}

/// Solves `(scale * A + mu I) h = scale * b` with `mu = load * trace(scale * A) / K`.
///
/// Returns `false` (leaving `h` zeroed) when the loaded matrix is not numerically
/// positive definite.
pub(crate) fn solve_loaded(
    gram: &Gram,
    scale: f64,
    load: f64,
    work: &mut Vec<Complex64>,
    h: &mut [Complex64],
) -> bool {
    let k = gram.k();
    h.iter_mut().for_each(|v| *v = Complex64::new(0.0, 0.0));
    let trace = gram.trace() * scale;
    if !(trace > 0.0) || !trace.is_finite() {
        return false;
    }
    let mu = load * trace / k as f64;
    let tol = 1e-13 * trace / k as f64;

    work.clear();
    work.extend(gram.a.iter().map(|v| v * scale));
    for i in 0..k {
        work[packed_index(i, i)] += mu;
    }

    // In-place Cholesky: work <- L with A = L L^H, diagonal stored real.
    for j in 0..k {
        let mut d = work[packed_index(j, j)].re;
        for p in 0..j {
            d -= work[packed_index(j, p)].norm_sqr();
        }
        if !(d > tol) {
            return false;
        }
        let ljj = d.sqrt();
        work[packed_index(j, j)] = Complex64::new(ljj, 0.0);
        for i in j + 1..k {
            let mut s = work[packed_index(i, j)];
            for p in 0..j {
                s -= work[packed_index(i, p)] * work[packed_index(j, p)].conj();
            }
            work[packed_index(i, j)] = s / ljj;
        }
    }

    // L z = b
    for i in 0..k {
        let mut s = gram.b[i] * scale;
        for p in 0..i {
            s -= work[packed_index(i, p)] * h[p];
        }
        h[i] = s / work[packed_index(i, i)].re;
    }
    // L^H h = z
    for i in (0..k).rev() {
        let mut s = h[i];
        for p in i + 1..k {
            s -= work[packed_index(p, i)].conj() * h[p];
        }
        h[i] = s / work[packed_index(i, i)].re;
    }
    if h.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
        h.iter_mut().for_each(|v| *v = Complex64::new(0.0, 0.0));
        return false;
    }
    true
}
