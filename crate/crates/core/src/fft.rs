//! Radix-2 complex FFT and the real convolutions built on it.
//!
//! Short inputs use the direct double loop, so small results are exact.

use alloc::vec;
use alloc::vec::Vec;

use crate::math::{sin_cos, PI};

const DIRECT_LIMIT: usize = 256;

#[derive(Debug, Clone, Copy, Default)]
struct Complex {
    re: f64,
    im: f64,
}

impl Complex {
    fn mul(self, o: Complex) -> Complex {
        Complex { re: self.re * o.re - self.im * o.im, im: self.re * o.im + self.im * o.re }
    }
}

fn fft_in_place(buf: &mut [Complex], inverse: bool) {
    let n = buf.len();
    debug_assert!(n.is_power_of_two());
    let mut j = 0;
    for i in 1..n {
        let mut bit = n >> 1;
        while j & bit != 0 {
            j ^= bit;
            bit >>= 1;
        }
        j |= bit;
        if i < j {
            buf.swap(i, j);
        }
    }
    let sign = if inverse { 1.0 } else { -1.0 };
    let mut len = 2;
    while len <= n {
        let half = len / 2;
        let twiddles: Vec<Complex> = (0..half)
            .map(|k| {
                let (s, c) = sin_cos(sign * 2.0 * PI * k as f64 / len as f64);
                Complex { re: c, im: s }
            })
            .collect();
        for start in (0..n).step_by(len) {
            for k in 0..half {
                let u = buf[start + k];
                let v = buf[start + k + half].mul(twiddles[k]);
                buf[start + k] = Complex { re: u.re + v.re, im: u.im + v.im };
                buf[start + k + half] = Complex { re: u.re - v.re, im: u.im - v.im };
            }
        }
        len <<= 1;
    }
    if inverse {
        let scale = 1.0 / n as f64;
        for c in buf.iter_mut() {
            c.re *= scale;
            c.im *= scale;
        }
    }
}

fn spectrum(x: &[f64], size: usize) -> Vec<Complex> {
    let mut buf = vec![Complex::default(); size];
    for (b, v) in buf.iter_mut().zip(x) {
        b.re = *v;
    }
    fft_in_place(&mut buf, false);
    buf
}

fn direct_convolve(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        if *x == 0.0 {
            continue;
        }
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

/// Linear convolution, length `a.len() + b.len() - 1`.
pub(crate) fn convolve(a: &[f64], b: &[f64]) -> Vec<f64> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let out_len = a.len() + b.len() - 1;
    if a.len().min(b.len()) <= DIRECT_LIMIT {
        return direct_convolve(a, b);
    }
    let size = out_len.next_power_of_two();
    let fa = spectrum(a, size);
    let mut prod = if core::ptr::eq(a, b) {
        fa.iter().map(|c| c.mul(*c)).collect::<Vec<_>>()
    } else {
        let fb = spectrum(b, size);
        fa.iter().zip(&fb).map(|(x, y)| x.mul(*y)).collect::<Vec<_>>()
    };
    fft_in_place(&mut prod, true);
    prod.truncate(out_len);
    prod.into_iter().map(|c| c.re).collect()
}

/// `out[i] = Σ_j h[i + j]·f[j]` for `i` in `0..h.len() - f.len() + 1`.
pub(crate) fn correlate(h: &[f64], f: &[f64]) -> Vec<f64> {
    let n = f.len();
    let outs = h.len() + 1 - n;
    if n <= DIRECT_LIMIT {
        return (0..outs).map(|i| f.iter().enumerate().map(|(j, fj)| h[i + j] * fj).sum()).collect();
    }
    // circular convolution with reversed f; indices n-1.. are alias free
    let size = h.len().next_power_of_two();
    let reversed: Vec<f64> = f.iter().rev().copied().collect();
    let fh = spectrum(h, size);
    let fr = spectrum(&reversed, size);
    let mut prod: Vec<Complex> = fh.iter().zip(&fr).map(|(x, y)| x.mul(*y)).collect();
    fft_in_place(&mut prod, true);
    (0..outs).map(|i| prod[i + n - 1].re).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(n: usize, salt: u64) -> Vec<f64> {
        (0..n).map(|i| ((i as u64 * 2654435761 + salt) % 1000) as f64 / 1000.0).collect()
    }

    #[test]
    fn fft_convolution_matches_direct() {
        let a = sample(700, 1);
        let b = sample(513, 7);
        let fast = convolve(&a, &b);
        let slow = direct_convolve(&a, &b);
        let scale = slow.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        for (x, y) in fast.iter().zip(&slow) {
            assert!((x - y).abs() <= 1e-12 * scale);
        }
    }

    #[test]
    fn correlation_matches_direct() {
        for n in [5, 300, 1000] {
            let f = sample(n, 3);
            let h = sample(2 * n - 1, 11);
            let fast = correlate(&h, &f);
            let scale: f64 = h.iter().sum::<f64>() * 1.0;
            for i in 0..n {
                let direct: f64 = (0..n).map(|j| h[i + j] * f[j]).sum();
                assert!((fast[i] - direct).abs() <= 1e-12 * scale, "n={n} i={i}");
            }
        }
    }
}
