//! Discrete Fourier transforms over the pixel grid.
//!
//! The preconditioner only needs batched 1D complex transforms; a backend
//! provides those and [`RealFftNd`] composes them into multi-dimensional
//! real-to-complex transforms with the last axis stored as a half spectrum.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use num_complex::Complex64;

use crate::math::sin_cos;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    /// `X_k = Σ x_j e^{-2πi jk/n}`.
    Forward,
    /// `x_j = Σ X_k e^{+2πi jk/n}` (unnormalised).
    Inverse,
}

/// Unnormalised 1D complex transforms over a batch of contiguous lines.
pub trait FftBackend {
    /// Transforms each consecutive chunk of `len` values of `data` in place.
    fn transform_lines(&self, data: &mut [Complex64], len: usize, direction: Direction);
}

/// Portable mixed-radix transform with no dependencies beyond `alloc`.
#[derive(Clone, Copy, Debug, Default)]
pub struct NativeFft;

struct Plan {
    factors: Vec<usize>,
    twiddles: Vec<Complex64>,
}

impl Plan {
    fn new(n: usize, direction: Direction) -> Self {
        let sign = match direction {
            Direction::Forward => -1.0,
            Direction::Inverse => 1.0,
        };
        let twiddles = (0..n)
            .map(|k| {
                let (s, c) = sin_cos(2.0 * PI * k as f64 / n as f64);
                Complex64::new(c, sign * s)
            })
            .collect();
        Self {
            factors: factorize(n),
            twiddles,
        }
    }
}

fn factorize(mut n: usize) -> Vec<usize> {
    let mut out = Vec::new();
    for p in [4, 2, 3, 5] {
        while n % p == 0 {
            out.push(p);
            n /= p;
        }
    }
    let mut p = 7;
    while n > 1 {
        while n % p == 0 {
            out.push(p);
            n /= p;
        }
        p += 2;
        if p * p > n && n > 1 {
            out.push(n);
            n = 1;
        }
    }
    out
}

/// Decimation in time: `out[..n]` receives the transform of
/// `input[offset + i·stride]`, `i < n`.
#[allow(clippy::too_many_arguments)]
fn recurse(
    input: &[Complex64],
    offset: usize,
    stride: usize,
    n: usize,
    factors: &[usize],
    plan: &Plan,
    out: &mut [Complex64],
    scratch: &mut [Complex64],
) {
    if n == 1 {
        out[0] = input[offset];
        return;
    }
    let p = factors[0];
    let m = n / p;
    for j in 0..p {
        recurse(
            input,
            offset + j * stride,
            stride * p,
            m,
            &factors[1..],
            plan,
            &mut out[j * m..(j + 1) * m],
            scratch,
        );
    }
    let total = plan.twiddles.len();
    let tw_stride = total / n;
    let scratch = &mut scratch[..p];
    for k in 0..m {
        for (j, s) in scratch.iter_mut().enumerate() {
            *s = out[j * m + k] * plan.twiddles[(j * k * tw_stride) % total];
        }
        for q in 0..p {
            let mut acc = scratch[0];
            for (j, s) in scratch.iter().enumerate().skip(1) {
                acc += *s * plan.twiddles[(j * q * m * tw_stride) % total];
            }
            out[k + q * m] = acc;
        }
    }
}

impl FftBackend for NativeFft {
    fn transform_lines(&self, data: &mut [Complex64], len: usize, direction: Direction) {
        if len <= 1 {
            return;
        }
        let plan = Plan::new(len, direction);
        let max_factor = plan.factors.iter().copied().max().unwrap_or(1);
        let mut scratch = vec![Complex64::new(0.0, 0.0); max_factor];
        let mut line = vec![Complex64::new(0.0, 0.0); len];
        for chunk in data.chunks_exact_mut(len) {
            line.copy_from_slice(chunk);
            recurse(&line, 0, 1, len, &plan.factors, &plan, chunk, &mut scratch);
        }
    }
}

/// Multi-dimensional real transform on a row-major grid whose last axis is
/// stored as `n/2 + 1` non-redundant frequencies.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RealFftNd {
    shape: Vec<usize>,
    half_shape: Vec<usize>,
}

impl RealFftNd {
    pub fn new(shape: &[usize]) -> Self {
        let mut half_shape = shape.to_vec();
        if let Some(last) = half_shape.last_mut() {
            *last = *last / 2 + 1;
        }
        Self {
            shape: shape.to_vec(),
            half_shape,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    /// Shape of the stored spectrum.
    pub fn half_shape(&self) -> &[usize] {
        &self.half_shape
    }

    pub fn real_len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn spectrum_len(&self) -> usize {
        self.half_shape.iter().product()
    }

    /// Full-grid multi-index of stored frequency `k`.
    pub fn frequency_coords(&self, k: usize) -> Vec<usize> {
        let mut rem = k;
        let mut c = vec![0; self.shape.len()];
        for a in (0..self.shape.len()).rev() {
            c[a] = rem % self.half_shape[a];
            rem /= self.half_shape[a];
        }
        c
    }

    /// Unnormalised forward transform.
    pub fn forward(&self, backend: &dyn FftBackend, input: &[f64], out: &mut [Complex64]) {
        let d = self.shape.len();
        let n_last = self.shape[d - 1];
        let h = self.half_shape[d - 1];
        let mut lines: Vec<Complex64> = input.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        backend.transform_lines(&mut lines, n_last, Direction::Forward);
        for (dst, src) in out.chunks_exact_mut(h).zip(lines.chunks_exact(n_last)) {
            dst.copy_from_slice(&src[..h]);
        }
        for axis in 0..d - 1 {
            self.transform_axis(backend, out, axis, Direction::Forward);
        }
    }

    /// Inverse transform scaled by `1/N`; `spectrum` is consumed as scratch.
    pub fn inverse(&self, backend: &dyn FftBackend, spectrum: &mut [Complex64], out: &mut [f64]) {
        let d = self.shape.len();
        let n_last = self.shape[d - 1];
        let h = self.half_shape[d - 1];
        for axis in 0..d - 1 {
            self.transform_axis(backend, spectrum, axis, Direction::Inverse);
        }
        let rows = spectrum.len() / h;
        let mut lines = vec![Complex64::new(0.0, 0.0); rows * n_last];
        for (dst, src) in lines.chunks_exact_mut(n_last).zip(spectrum.chunks_exact(h)) {
            dst[..h].copy_from_slice(src);
            for k in h..n_last {
                dst[k] = src[n_last - k].conj();
            }
        }
        backend.transform_lines(&mut lines, n_last, Direction::Inverse);
        let scale = 1.0 / self.real_len() as f64;
        for (o, z) in out.iter_mut().zip(&lines) {
            *o = z.re * scale;
        }
    }

    fn transform_axis(&self, backend: &dyn FftBackend, data: &mut [Complex64], axis: usize, direction: Direction) {
        let n = self.half_shape[axis];
        if n <= 1 {
            return;
        }
        let inner: usize = self.half_shape[axis + 1..].iter().product();
        let outer: usize = self.half_shape[..axis].iter().product();
        let mut buf = vec![Complex64::new(0.0, 0.0); data.len()];
        let mut line = 0;
        for o in 0..outer {
            for i in 0..inner {
                let base = o * n * inner + i;
                for j in 0..n {
                    buf[line * n + j] = data[base + j * inner];
                }
                line += 1;
            }
        }
        backend.transform_lines(&mut buf, n, direction);
        line = 0;
        for o in 0..outer {
            for i in 0..inner {
                let base = o * n * inner + i;
                for j in 0..n {
                    data[base + j * inner] = buf[line * n + j];
                }
                line += 1;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(x: &[Complex64], direction: Direction) -> Vec<Complex64> {
        let n = x.len();
        let sign = if direction == Direction::Forward { -1.0 } else { 1.0 };
        (0..n)
            .map(|k| {
                x.iter()
                    .enumerate()
                    .map(|(j, &v)| {
                        let ang = 2.0 * PI * ((j * k) % n) as f64 / n as f64;
                        v * Complex64::new(libm::cos(ang), sign * libm::sin(ang))
                    })
                    .sum()
            })
            .collect()
    }

    fn signal(n: usize, seed: u64) -> Vec<f64> {
        let mut s = seed;
        (0..n)
            .map(|_| {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                ((s >> 11) as f64) / ((1u64 << 53) as f64) - 0.5
            })
            .collect()
    }

    #[test]
    fn matches_naive_dft_for_many_lengths() {
        for n in [1, 2, 3, 4, 5, 6, 7, 8, 9, 11, 12, 16, 25, 30, 49, 64, 77] {
            let re = signal(2 * n, n as u64);
            let x: Vec<Complex64> = (0..n).map(|i| Complex64::new(re[2 * i], re[2 * i + 1])).collect();
            for dir in [Direction::Forward, Direction::Inverse] {
                let mut y = x.clone();
                NativeFft.transform_lines(&mut y, n, dir);
                let want = naive(&x, dir);
                for (a, b) in y.iter().zip(&want) {
                    assert!((a - b).norm_sqr() < 1e-22 * n as f64 * n as f64, "n = {n}");
                }
            }
        }
    }

    #[test]
    fn real_nd_roundtrip_and_half_spectrum() {
        for shape in [vec![3, 4], vec![4, 5], vec![2, 3, 4], vec![3, 3, 3]] {
            let t = RealFftNd::new(&shape);
            let x = signal(t.real_len(), 11);
            let mut spec = vec![Complex64::new(0.0, 0.0); t.spectrum_len()];
            t.forward(&NativeFft, &x, &mut spec);
            // Zero frequency is the plain sum.
            let sum: f64 = x.iter().sum();
            assert!((spec[0].re - sum).abs() < 1e-12 && spec[0].im.abs() < 1e-12);
            let mut back = vec![0.0; x.len()];
            t.inverse(&NativeFft, &mut spec, &mut back);
            for (a, b) in back.iter().zip(&x) {
                assert!((a - b).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn real_nd_matches_separable_naive_transform() {
        let shape = [3, 4];
        let t = RealFftNd::new(&shape);
        let x = signal(12, 5);
        let mut spec = vec![Complex64::new(0.0, 0.0); t.spectrum_len()];
        t.forward(&NativeFft, &x, &mut spec);
        for k in 0..t.spectrum_len() {
            let c = t.frequency_coords(k);
            let mut want = Complex64::new(0.0, 0.0);
            for i in 0..3 {
                for j in 0..4 {
                    let ang = -2.0 * PI * ((c[0] * i) as f64 / 3.0 + (c[1] * j) as f64 / 4.0);
                    want += x[i * 4 + j] * Complex64::new(libm::cos(ang), libm::sin(ang));
                }
            }
            assert!((spec[k] - want).norm_sqr() < 1e-24);
        }
    }
}
