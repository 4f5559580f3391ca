//! One-dimensional complex FFT: iterative radix-2 for power-of-two lengths,
//! Bluestein's chirp-z reduction for everything else.

use std::f64::consts::PI;

use num_complex::Complex64;

#[derive(Debug, Clone)]
enum Kind {
    Trivial,
    Radix2 { twiddles: Vec<Complex64>, rev: Vec<usize> },
    Bluestein { chirp: Vec<Complex64>, kernel: Vec<Complex64>, inner: Box<FftPlan> },
}

/// Precomputed forward transform of a fixed length.
#[derive(Debug, Clone)]
pub struct FftPlan {
    n: usize,
    kind: Kind,
}

impl FftPlan {
    pub fn new(n: usize) -> Self {
        assert!(n > 0, "FFT length must be positive");
        let kind = if n == 1 {
            Kind::Trivial
        } else if n.is_power_of_two() {
            let bits = n.trailing_zeros();
            let twiddles = (0..n / 2)
                .map(|k| Complex64::from_polar(1.0, -2.0 * PI * k as f64 / n as f64))
                .collect();
            let rev = (0..n)
                .map(|i| i.reverse_bits() >> (usize::BITS - bits))
                .collect();
            Kind::Radix2 { twiddles, rev }
        } else {
            let m = (2 * n - 1).next_power_of_two();
            // j^2 mod 2n keeps the chirp angle small for large j.
            let chirp: Vec<Complex64> = (0..n)
                .map(|j| {
                    let q = (j * j) % (2 * n);
                    Complex64::from_polar(1.0, -PI * q as f64 / n as f64)
                })
                .collect();
            let mut kernel = vec![Complex64::new(0.0, 0.0); m];
            kernel[0] = chirp[0].conj();
            for j in 1..n {
                kernel[j] = chirp[j].conj();
                kernel[m - j] = chirp[j].conj();
            }
            let inner = FftPlan::new(m);
            inner.forward(&mut kernel);
            Kind::Bluestein { chirp, kernel, inner: Box::new(inner) }
        };
        Self { n, kind }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// In-place unnormalized forward DFT: `X_k = sum_j x_j e^{-2 pi i jk/n}`.
    pub fn forward(&self, buf: &mut [Complex64]) {
        assert_eq!(buf.len(), self.n);
        match &self.kind {
            Kind::Trivial => {}
            Kind::Radix2 { twiddles, rev } => radix2(buf, twiddles, rev),
            Kind::Bluestein { chirp, kernel, inner } => {
                let m = kernel.len();
                let mut a = vec![Complex64::new(0.0, 0.0); m];
                for (j, (&x, &w)) in buf.iter().zip(chirp).enumerate() {
                    a[j] = x * w;
                }
                inner.forward(&mut a);
                for (v, &k) in a.iter_mut().zip(kernel) {
                    *v = (*v * k).conj();
                }
                // inverse of the inner transform via conjugation
                inner.forward(&mut a);
                let scale = 1.0 / m as f64;
                for (k, out) in buf.iter_mut().enumerate() {
                    *out = a[k].conj() * scale * chirp[k];
                }
            }
        }
    }

    /// In-place unnormalized inverse DFT (`e^{+2 pi i jk/n}`, no `1/n`).
    pub fn inverse(&self, buf: &mut [Complex64]) {
        for v in buf.iter_mut() {
            *v = v.conj();
        }
        self.forward(buf);
        for v in buf.iter_mut() {
            *v = v.conj();
        }
    }
}

fn radix2(buf: &mut [Complex64], twiddles: &[Complex64], rev: &[usize]) {
    let n = buf.len();
    for i in 0..n {
        let j = rev[i];
        if i < j {
            buf.swap(i, j);
        }
    }
    let mut len = 2;
    while len <= n {
        let half = len / 2;
        let step = n / len;
        for start in (0..n).step_by(len) {
            for j in 0..half {
                let w = twiddles[j * step];
                let u = buf[start + j];
                let t = buf[start + j + half] * w;
                buf[start + j] = u + t;
                buf[start + j + half] = u - t;
            }
        }
        len <<= 1;
    }
}
