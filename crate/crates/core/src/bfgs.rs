//! Dense BFGS with a strong-Wolfe line search.

use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BfgsOptions {
    pub max_iterations: usize,
    /// Converged when `‖g‖∞ ≤ tol · max(1, |f|)`.
    pub gradient_tolerance: f64,
    /// Sufficient-decrease constant.
    pub c1: f64,
    /// Curvature constant.
    pub c2: f64,
    pub max_line_search_steps: usize,
}

impl Default for BfgsOptions {
    fn default() -> Self {
        Self {
            max_iterations: 500,
            gradient_tolerance: 1e-8,
            c1: 1e-4,
            c2: 0.9,
            max_line_search_steps: 40,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    Converged,
    MaxIterations,
    LineSearchFailed,
    NonFinite,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BfgsResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub gradient: Vec<f64>,
    pub iterations: usize,
    pub evaluations: usize,
    pub termination: Termination,
}

impl BfgsResult {
    pub fn converged(&self) -> bool {
        self.termination == Termination::Converged
    }
}

const APPROXIMATE_WOLFE_TOLERANCE: f64 = 1e-12;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

fn finite(v: f64, g: &[f64]) -> bool {
    v.is_finite() && g.iter().all(|x| x.is_finite())
}

struct Probe {
    alpha: f64,
    value: f64,
    slope: f64,
    x: Vec<f64>,
    grad: Vec<f64>,
}

struct Counter<'a, F> {
    f: &'a mut F,
    evals: usize,
}

impl<F: FnMut(&[f64]) -> (f64, Vec<f64>)> Counter<'_, F> {
    fn eval(&mut self, x: &[f64]) -> (f64, Vec<f64>) {
        self.evals += 1;
        (self.f)(x)
    }

    fn probe(&mut self, x0: &[f64], d: &[f64], alpha: f64) -> Probe {
        let x: Vec<f64> = x0.iter().zip(d).map(|(a, b)| a + alpha * b).collect();
        let (value, grad) = self.eval(&x);
        let slope = dot(&grad, d);
        Probe { alpha, value, slope, x, grad }
    }
}

fn interpolate(lo: &Probe, hi: &Probe) -> f64 {
    // cubic through both endpoints, falling back to bisection
    let (a0, a1) = (lo.alpha, hi.alpha);
    let d1 = lo.slope + hi.slope - 3.0 * (lo.value - hi.value) / (a0 - a1);
    let disc = d1 * d1 - lo.slope * hi.slope;
    let mid = 0.5 * (a0 + a1);
    if !(disc >= 0.0) {
        return mid;
    }
    let d2 = (a1 - a0).signum() * disc.sqrt();
    let t = a1 - (a1 - a0) * (hi.slope + d2 - d1) / (hi.slope - lo.slope + 2.0 * d2);
    let (lo_b, hi_b) = if a0 < a1 { (a0, a1) } else { (a1, a0) };
    let margin = 0.1 * (hi_b - lo_b);
    if t.is_finite() && t > lo_b + margin && t < hi_b - margin {
        t
    } else {
        mid
    }
}

fn line_search<F>(
    ctx: &mut Counter<'_, F>,
    x0: &[f64],
    f0: f64,
    slope0: f64,
    d: &[f64],
    opts: &BfgsOptions,
) -> Option<Probe>
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    // Once value differences drop to rounding level, the sufficient-decrease
    // test is replaced by its derivative form (approximate Wolfe conditions).
    let noise = APPROXIMATE_WOLFE_TOLERANCE * f0.abs().max(1.0);
    let armijo = |p: &Probe| {
        p.value <= f0 + opts.c1 * p.alpha * slope0
            || (p.value <= f0 + noise && p.slope <= (2.0 * opts.c1 - 1.0) * slope0)
    };
    let curvature = |p: &Probe| p.slope.abs() <= -opts.c2 * slope0;
    let origin = Probe {
        alpha: 0.0,
        value: f0,
        slope: slope0,
        x: x0.to_vec(),
        grad: Vec::new(),
    };
    let mut prev = origin;
    let mut alpha = 1.0;
    let mut steps = 0;
    let (mut lo, mut hi) = loop {
        if steps >= opts.max_line_search_steps {
            return None;
        }
        steps += 1;
        let p = ctx.probe(x0, d, alpha);
        if !finite(p.value, &p.grad) {
            // shrink towards the last finite point
            alpha = 0.5 * (prev.alpha + alpha);
            continue;
        }
        if !armijo(&p) || (steps > 1 && p.value >= prev.value) {
            break (prev, p);
        }
        if curvature(&p) {
            return Some(p);
        }
        if p.slope >= 0.0 {
            break (p, prev);
        }
        alpha *= 2.0;
        prev = p;
    };
    while steps < opts.max_line_search_steps {
        steps += 1;
        let a = interpolate(&lo, &hi);
        if (a - lo.alpha).abs() <= f64::EPSILON * lo.alpha.abs().max(1.0) {
            break;
        }
        let p = ctx.probe(x0, d, a);
        if !finite(p.value, &p.grad) || !armijo(&p) || p.value >= lo.value {
            hi = p;
            continue;
        }
        if curvature(&p) {
            return Some(p);
        }
        if p.slope * (hi.alpha - lo.alpha) >= 0.0 {
            hi = lo;
        }
        lo = p;
    }
    // accept any strict decrease found by the zoom
    if lo.alpha > 0.0 && lo.value < f0 {
        Some(lo)
    } else {
        None
    }
}

/// Minimizes `f` from `x0`. `f` returns the value and the gradient.
pub fn minimize<F>(f: F, x0: &[f64], opts: &BfgsOptions) -> BfgsResult
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    minimize_with(f, x0, None, opts)
}

/// Like [`minimize`], starting from the row-major inverse Hessian guess `h0`
/// (symmetric positive definite, `n × n`). Resets return to `h0`.
pub fn minimize_with<F>(mut f: F, x0: &[f64], h0: Option<&[f64]>, opts: &BfgsOptions) -> BfgsResult
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    let n = x0.len();
    assert!(h0.is_none_or(|h| h.len() == n * n), "inverse Hessian guess has the wrong size");
    let mut ctx = Counter { f: &mut f, evals: 0 };
    let (mut fx, mut g) = ctx.eval(x0);
    let mut x = x0.to_vec();
    let done = |fx: f64, g: &[f64]| inf_norm(g) <= opts.gradient_tolerance * fx.abs().max(1.0);
    if !finite(fx, &g) {
        return BfgsResult {
            x,
            value: fx,
            gradient: g,
            iterations: 0,
            evaluations: ctx.evals,
            termination: Termination::NonFinite,
        };
    }
    let identity = |h: &mut Vec<f64>, scale: f64| {
        h.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..n {
            h[i * n + i] = scale;
        }
    };
    let reset = |h: &mut Vec<f64>| match h0 {
        Some(h0) => h.copy_from_slice(h0),
        None => identity(h, 1.0),
    };
    let mut h = vec![0.0; n * n];
    reset(&mut h);
    let mut fresh = true;
    let mut retried = false;
    let mut iterations = 0;
    let mut termination = Termination::MaxIterations;
    while iterations < opts.max_iterations {
        if done(fx, &g) {
            termination = Termination::Converged;
            break;
        }
        let mut d: Vec<f64> = (0..n).map(|i| -dot(&h[i * n..(i + 1) * n], &g)).collect();
        let mut slope = dot(&g, &d);
        if !(slope < 0.0) {
            reset(&mut h);
            fresh = true;
            d = (0..n).map(|i| -dot(&h[i * n..(i + 1) * n], &g)).collect();
            slope = dot(&g, &d);
        }
        if fresh && h0.is_none() {
            // unit steepest-descent steps are badly scaled; start at ‖step‖∞ ≤ 1
            let s = inf_norm(&d);
            if s > 1.0 {
                d.iter_mut().for_each(|v| *v /= s);
                slope /= s;
            }
        }
        let Some(p) = line_search(&mut ctx, &x, fx, slope, &d, opts) else {
            if fresh || retried {
                termination = Termination::LineSearchFailed;
                break;
            }
            reset(&mut h);
            fresh = true;
            retried = true;
            continue;
        };
        retried = false;
        iterations += 1;
        let s: Vec<f64> = p.x.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = p.grad.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        x = p.x;
        fx = p.value;
        g = p.grad;
        if sy > 1e-300 && sy > 1e-14 * dot(&y, &y).sqrt() * dot(&s, &s).sqrt() {
            if fresh && h0.is_none() {
                identity(&mut h, sy / dot(&y, &y));
            }
            fresh = false;
            update_inverse(&mut h, &s, &y, sy);
        }
    }
    if termination == Termination::MaxIterations && done(fx, &g) {
        termination = Termination::Converged;
    }
    BfgsResult {
        x,
        value: fx,
        gradient: g,
        iterations,
        evaluations: ctx.evals,
        termination,
    }
}

/// `H ← (I − ρ s yᵀ) H (I − ρ y sᵀ) + ρ s sᵀ`, `ρ = 1/(sᵀy)`.
fn update_inverse(h: &mut [f64], s: &[f64], y: &[f64], sy: f64) {
    let n = s.len();
    let rho = 1.0 / sy;
    let hy: Vec<f64> = (0..n).map(|i| dot(&h[i * n..(i + 1) * n], y)).collect();
    let yhy = dot(y, &hy);
    let coef = rho * rho * yhy + rho;
    for i in 0..n {
        for j in 0..n {
            h[i * n + j] += coef * s[i] * s[j] - rho * (hy[i] * s[j] + s[i] * hy[j]);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rosenbrock(x: &[f64]) -> (f64, Vec<f64>) {
        let (a, b) = (x[0], x[1]);
        let v = (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2);
        let g = vec![-2.0 * (1.0 - a) - 400.0 * a * (b - a * a), 200.0 * (b - a * a)];
        (v, g)
    }

    #[test]
    fn solves_rosenbrock() {
        let r = minimize(rosenbrock, &[-1.2, 1.0], &BfgsOptions::default());
        assert!(r.converged(), "{:?}", r.termination);
        assert!((r.x[0] - 1.0).abs() < 1e-6 && (r.x[1] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn quadratic_converges_quickly() {
        // f = ½ xᵀAx − bᵀx with a fixed SPD A
        let a = [[4.0, 1.0, 0.5], [1.0, 3.0, 0.2], [0.5, 0.2, 2.0]];
        let b = [1.0, -2.0, 0.5];
        let f = |x: &[f64]| {
            let ax: Vec<f64> = a.iter().map(|r| dot(r, x)).collect();
            (0.5 * dot(x, &ax) - dot(&b, x), ax.iter().zip(&b).map(|(p, q)| p - q).collect())
        };
        let r = minimize(f, &[10.0, -10.0, 3.0], &BfgsOptions::default());
        assert!(r.converged());
        assert!(r.iterations < 20);
        let (_, g) = f(&r.x);
        assert!(inf_norm(&g) < 1e-8);
    }

    #[test]
    fn starting_at_optimum_takes_no_steps() {
        let r = minimize(rosenbrock, &[1.0, 1.0], &BfgsOptions::default());
        assert_eq!(r.iterations, 0);
        assert!(r.converged());
    }

    #[test]
    fn non_finite_start_is_reported() {
        let r = minimize(|_| (f64::NAN, vec![0.0]), &[0.0], &BfgsOptions::default());
        assert_eq!(r.termination, Termination::NonFinite);
    }

    #[test]
    fn never_increases_value() {
        let f = |x: &[f64]| ((x[0] - 3.0).abs().powf(1.5), vec![1.5 * (x[0] - 3.0).abs().sqrt() * (x[0] - 3.0).signum()]);
        let r = minimize(f, &[-4.0], &BfgsOptions::default());
        assert!(r.value <= f(&[-4.0]).0);
        assert!((r.x[0] - 3.0).abs() < 1e-3);
    }
}
