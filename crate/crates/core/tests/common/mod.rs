#![allow(dead_code)]

use cuemwf_core::costs::BinFilters;
use cuemwf_core::linalg::{CMat, CVec};
use cuemwf_core::spatial::CoherenceSet;
use cuemwf_core::{rng, C64};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn gen(seed: u64) -> ChaCha8Rng {
    rng::stream(seed, "tests")
}

pub fn cnormal(g: &mut ChaCha8Rng) -> C64 {
    let re: f64 = StandardNormal.sample(g);
    let im: f64 = StandardNormal.sample(g);
    C64::new(re, im)
}

pub fn cvec(g: &mut ChaCha8Rng, m: usize) -> CVec {
    CVec::from_fn(m, |_, _| cnormal(g))
}

/// `A Aᴴ / m + ridge·I` with a random `m × m` factor.
pub fn psd(g: &mut ChaCha8Rng, m: usize, ridge: f64) -> CMat {
    let a = CMat::from_fn(m, m, |_, _| cnormal(g));
    let mut p = (&a * a.adjoint()).scale(1.0 / m as f64);
    for i in 0..m {
        p[(i, i)] += C64::new(ridge, 0.0);
    }
    p
}

pub fn rank_one(h: &CVec, power: f64) -> CMat {
    (h * h.adjoint()).scale(power)
}

pub fn filters(g: &mut ChaCha8Rng, m: usize) -> BinFilters {
    BinFilters {
        left: cvec(g, m),
        right: cvec(g, m),
    }
}

pub fn coherence_set(phi_xx: CMat, phi_vv: CMat, bins: usize) -> CoherenceSet {
    let phi_yy = &phi_xx + &phi_vv;
    CoherenceSet {
        phi_yy: vec![phi_yy; bins],
        phi_vv: vec![phi_vv; bins],
        phi_xx: vec![phi_xx; bins],
        speech_frames: 100,
        noise_frames: 100,
    }
}

pub fn uniform(g: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    g.random_range(lo..hi)
}

pub fn signal(g: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    (0..len).map(|_| StandardNormal.sample(g)).collect()
}

pub fn interior_rel_rms(a: &[f64], b: &[f64], margin: usize) -> f64 {
    let end = a.len().min(b.len()) - margin;
    let (mut num, mut den) = (0.0, 0.0);
    for i in margin..end {
        num += (a[i] - b[i]).powi(2);
        den += a[i] * a[i];
    }
    (num / den).sqrt()
}

/// Central differences with step `1e-6` times the parameter scale.
pub fn finite_difference<F: Fn(&[f64]) -> f64>(f: F, x: &[f64]) -> Vec<f64> {
    let scale = x.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
    let h = 1e-6 * scale;
    let mut p = x.to_vec();
    (0..x.len())
        .map(|i| {
            p[i] = x[i] + h;
            let up = f(&p);
            p[i] = x[i] - h;
            let down = f(&p);
            p[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}
