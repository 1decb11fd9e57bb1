//! Iterative radix-2 FFT.

use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::error::invalid;
use crate::{Result, C64};

/// Precomputed plan for power-of-two transforms of one length.
#[derive(Debug, Clone)]
pub struct Fft {
    n: usize,
    twiddles: Vec<C64>,
    bitrev: Vec<usize>,
}

impl Fft {
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 || !n.is_power_of_two() {
            return invalid("FFT length must be a nonzero power of two");
        }
        let bits = n.trailing_zeros();
        let bitrev = (0..n)
            .map(|i| if bits == 0 { 0 } else { i.reverse_bits() >> (usize::BITS - bits) })
            .collect();
        let twiddles = (0..n / 2)
            .map(|k| C64::from_polar(1.0, -2.0 * PI * k as f64 / n as f64))
            .collect();
        Ok(Self { n, twiddles, bitrev })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// In-place forward transform, `X[k] = Σ x[n] e^{-j2πkn/N}`.
    pub fn forward(&self, buf: &mut [C64]) {
        self.transform(buf, false);
    }

    /// In-place inverse transform including the `1/N` factor.
    pub fn inverse(&self, buf: &mut [C64]) {
        self.transform(buf, true);
        let scale = 1.0 / self.n as f64;
        for v in buf.iter_mut() {
            *v *= scale;
        }
    }

    fn transform(&self, buf: &mut [C64], inverse: bool) {
        assert_eq!(buf.len(), self.n, "buffer length does not match FFT plan");
        for i in 0..self.n {
            let j = self.bitrev[i];
            if j > i {
                buf.swap(i, j);
            }
        }
        let mut len = 2;
        while len <= self.n {
            let half = len / 2;
            let stride = self.n / len;
            for start in (0..self.n).step_by(len) {
                for k in 0..half {
                    let mut tw = self.twiddles[k * stride];
                    if inverse {
                        tw = tw.conj();
                    }
                    let a = buf[start + k];
                    let b = buf[start + k + half] * tw;
                    buf[start + k] = a + b;
                    buf[start + k + half] = a - b;
                }
            }
            len <<= 1;
        }
    }
}
