//! Phase of the ratio of two correlated circularly-symmetric complex normal
//! variables.
//!
//! With `E{x y*} = ρ σ_x σ_y` and `η = |ρ| cos(∠ρ − θ)`, the phase `θ` of
//! `x / y` has density
//!
//! ```text
//! p(θ) = (1 − |ρ|²) / (2π (1 − η²)) · [ η / sqrt(1 − η²) · arccos(−η) + 1 ]
//! ```
//!
//! which is uniform for `ρ = 0` and concentrates around `∠ρ` as `|ρ| → 1`.

use alloc::vec::Vec;
use core::f64::consts::PI;

#[allow(unused_imports)]
use num_traits::Float;
use rand_distr::{Distribution, StandardNormal};

use crate::error::invalid;
use crate::{rng, Result, C64};

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RatioPhaseParams {
    /// Complex correlation coefficient `E{x y*} / (σ_x σ_y)`.
    pub rho: C64,
    pub sigma_x: f64,
    pub sigma_y: f64,
}

impl RatioPhaseParams {
    pub fn new(rho: C64, sigma_x: f64, sigma_y: f64) -> Result<Self> {
        let p = Self { rho, sigma_x, sigma_y };
        p.validate()?;
        Ok(p)
    }

    pub fn unit(rho: C64) -> Result<Self> {
        Self::new(rho, 1.0, 1.0)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rho.norm() <= 1.0) {
            return invalid("|rho| must not exceed 1");
        }
        if !(self.sigma_x > 0.0 && self.sigma_y > 0.0) || !self.sigma_x.is_finite() || !self.sigma_y.is_finite() {
            return invalid("scales must be positive and finite");
        }
        Ok(())
    }
}

/// Density of the phase at `theta`.
pub fn phase_pdf(theta: f64, params: &RatioPhaseParams) -> Result<f64> {
    params.validate()?;
    let r = params.rho.norm();
    if r >= 1.0 {
        return invalid("density is singular for |rho| = 1");
    }
    let eta = r * (params.rho.arg() - theta).cos();
    // t = arccos(−η) turns the bracket into (1 − t cot t) / sin² t
    let t = libm::acos((-eta).clamp(-1.0, 1.0));
    let shape = if t < 1e-4 {
        1.0 / 3.0 + 2.0 * t * t / 15.0
    } else {
        let s = t.sin();
        (1.0 - t * t.cos() / s) / (s * s)
    };
    Ok((1.0 - r * r) / (2.0 * PI) * shape)
}

/// Draws `n` phases `∠(x/y)` with `y = σ_y a`, `x = σ_x (ρ a + sqrt(1−|ρ|²) b)`
/// for independent unit circular normals `a`, `b`.
pub fn sample_ratio_phase(params: &RatioPhaseParams, n: usize, seed: u64) -> Result<Vec<f64>> {
    params.validate()?;
    if n == 0 {
        return invalid("sample count must be positive");
    }
    Ok(sample_pairs(params, n, seed).map(|(x, y)| (x * y.conj()).arg()).collect())
}

/// Correlated `(x, y)` pairs as used by [`sample_ratio_phase`].
pub fn sample_pairs(params: &RatioPhaseParams, n: usize, seed: u64) -> impl Iterator<Item = (C64, C64)> {
    let mut g = rng::stream(seed, "ratio-phase");
    let rho = params.rho;
    let tail = (1.0 - rho.norm_sqr()).max(0.0).sqrt();
    let (sx, sy) = (params.sigma_x, params.sigma_y);
    let h = core::f64::consts::FRAC_1_SQRT_2;
    (0..n).map(move |_| {
        let mut draw = || {
            let re: f64 = StandardNormal.sample(&mut g);
            let im: f64 = StandardNormal.sample(&mut g);
            C64::new(h * re, h * im)
        };
        let a = draw();
        let b = draw();
        (sx * (rho * a + b * tail), sy * a)
    })
}

/// `1 − |mean(e^{jθ})|`.
pub fn circular_variance(samples: &[f64]) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    let (s, c) = samples
        .iter()
        .fold((0.0, 0.0), |(s, c), t| (s + t.sin(), c + t.cos()));
    let n = samples.len() as f64;
    1.0 - (s * s + c * c).sqrt() / n
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct VariancePoint {
    pub magnitude: f64,
    pub circular_variance: f64,
}

/// Monte-Carlo circular variance for each `|ρ|` (phase of `ρ` fixed at 0).
pub fn phase_variance_curve(magnitudes: &[f64], n: usize, seed: u64) -> Result<Vec<VariancePoint>> {
    magnitudes
        .iter()
        .enumerate()
        .map(|(i, &m)| {
            if !(0.0..1.0).contains(&m) {
                return invalid("coherence magnitudes must lie in [0, 1)");
            }
            let p = RatioPhaseParams::unit(C64::new(m, 0.0))?;
            let s = sample_ratio_phase(&p, n, rng::derive_seed(seed, &alloc::format!("curve-{i}")))?;
            Ok(VariancePoint {
                magnitude: m,
                circular_variance: circular_variance(&s),
            })
        })
        .collect()
}

/// Adaptive Simpson quadrature of `f` over `[a, b]`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson<F: Fn(f64) -> f64>(f: &F, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
        let m = 0.5 * (a + b);
        let fm = f(m);
        (m, fm, (b - a) / 6.0 * (fa + 4.0 * fm + fb))
    }
    #[allow(clippy::too_many_arguments)]
    fn recurse<F: Fn(f64) -> f64>(
        f: &F,
        a: f64,
        fa: f64,
        b: f64,
        fb: f64,
        m: f64,
        fm: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let (lm, flm, left) = simpson(f, a, fa, m, fm);
        let (rm, frm, right) = simpson(f, m, fm, b, fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        recurse(f, a, fa, m, fm, lm, flm, left, 0.5 * tol, depth - 1)
            + recurse(f, m, fm, b, fb, rm, frm, right, 0.5 * tol, depth - 1)
    }
    let (fa, fb) = (f(a), f(b));
    let (m, fm, whole) = simpson(&f, a, fa, b, fb);
    recurse(&f, a, fa, b, fb, m, fm, whole, tol, 48)
}

/// Probability mass of each of `bins` equal cells tiling `(−π, π]`.
pub fn cell_probabilities(params: &RatioPhaseParams, bins: usize) -> Result<Vec<f64>> {
    params.validate()?;
    if bins == 0 {
        return invalid("bin count must be positive");
    }
    phase_pdf(0.0, params)?;
    let w = 2.0 * PI / bins as f64;
    Ok((0..bins)
        .map(|i| {
            let a = -PI + i as f64 * w;
            integrate(|t| phase_pdf(t, params).unwrap_or(0.0), a, a + w, 1e-13)
        })
        .collect())
}

/// Counts of `samples` in `bins` equal cells tiling `[−π, π]`.
pub fn histogram(samples: &[f64], bins: usize) -> Vec<u64> {
    let mut counts = alloc::vec![0u64; bins];
    let w = 2.0 * PI / bins as f64;
    for &t in samples {
        let i = (((t + PI) / w).floor() as isize).clamp(0, bins as isize - 1) as usize;
        counts[i] += 1;
    }
    counts
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rho(m: f64, a: f64) -> RatioPhaseParams {
        RatioPhaseParams::unit(C64::from_polar(m, a)).unwrap()
    }

    #[test]
    fn uniform_when_uncorrelated() {
        let p = rho(0.0, 0.0);
        for i in 0..50 {
            let t = -PI + 0.1 + 0.12 * i as f64;
            assert!((phase_pdf(t, &p).unwrap() - 1.0 / (2.0 * PI)).abs() < 1e-15);
        }
    }

    #[test]
    fn closed_form_matches_original_expression() {
        for (m, a) in [(0.3, 0.2), (0.8, -1.0), (0.95, 2.5)] {
            let p = rho(m, a);
            for i in 0..40 {
                let t = -PI + 0.15 * i as f64 + 0.01;
                let eta = m * (a - t).cos();
                let direct = (1.0 - m * m) / (2.0 * PI * (1.0 - eta * eta))
                    * (eta / (1.0 - eta * eta).sqrt() * (-eta).acos() + 1.0);
                assert!((phase_pdf(t, &p).unwrap() - direct).abs() < 1e-12 * direct.max(1.0));
            }
        }
    }

    #[test]
    fn series_branch_is_continuous() {
        // η close to −1 happens opposite ∠ρ for |ρ| close to 1
        let p = rho(1.0 - 1e-9, 0.0);
        let at = phase_pdf(PI, &p).unwrap();
        let near = phase_pdf(PI - 1e-3, &p).unwrap();
        assert!(at.is_finite() && near.is_finite());
        assert!((at - near).abs() < 1e-6 * near.max(1e-300) + 1e-15);
    }

    #[test]
    fn rejects_invalid_params() {
        assert!(RatioPhaseParams::unit(C64::new(1.2, 0.0)).is_err());
        assert!(RatioPhaseParams::new(C64::new(0.1, 0.0), 0.0, 1.0).is_err());
        assert!(phase_pdf(0.0, &rho(1.0, 0.0)).is_err());
        assert!(sample_ratio_phase(&rho(0.5, 0.0), 0, 1).is_err());
    }

    #[test]
    fn normalized() {
        for m in [0.0, 0.2, 0.5, 0.8, 0.95] {
            let p = rho(m, 0.7);
            let total = integrate(|t| phase_pdf(t, &p).unwrap(), -PI, PI, 1e-13);
            assert!((total - 1.0).abs() < 1e-9, "|rho|={m}: {total}");
        }
    }

    #[test]
    fn quadrature_on_polynomial() {
        let v = integrate(|x| x * x * x - 2.0 * x, 0.0, 2.0, 1e-12);
        assert!((v - 0.0).abs() < 1e-12);
        let v = integrate(|x: f64| x.exp(), 0.0, 1.0, 1e-13);
        assert!((v - (1f64.exp() - 1.0)).abs() < 1e-12);
    }

    #[test]
    fn histogram_edges() {
        let h = histogram(&[-PI, PI, 0.0, -1e-12], 4);
        assert_eq!(h, alloc::vec![1, 1, 1, 1]);
    }

    #[test]
    fn sampling_is_deterministic() {
        let p = rho(0.6, 0.3);
        assert_eq!(sample_ratio_phase(&p, 100, 5).unwrap(), sample_ratio_phase(&p, 100, 5).unwrap());
        assert_ne!(sample_ratio_phase(&p, 100, 5).unwrap(), sample_ratio_phase(&p, 100, 6).unwrap());
    }

    #[test]
    fn circular_variance_limits() {
        assert!(circular_variance(&[0.3; 10]).abs() < 1e-15);
        assert!((circular_variance(&[0.0, PI / 2.0, PI, -PI / 2.0])).abs() - 1.0 < 1e-12);
    }
}
