//! Per-bin filter computation: closed-form MWF, BFGS for the penalized
//! variants, α sweeps and α calibration.

use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use crate::bfgs::{self, BfgsOptions, Termination};
use crate::costs::{self, BinFilters, CostSpec, FilterPair, Variant};
use crate::error::invalid;
use crate::linalg::{self, CMat};
use crate::metrics::{Evaluator, MetricsReport};
use crate::scene::Ear;
use crate::spatial::{BinStats, CoherenceSet, Selector};
use crate::stft::StftConfig;
use crate::{Error, Result};

/// Starting point of the penalized minimization.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Initialization {
    /// BFGS straight from the closed-form MWF.
    ClosedForm,
    /// Raise α geometrically from a negligible value, warm-starting every
    /// stage at the previous optimum, so the result stays on the branch of
    /// minima that starts at the MWF.
    Continuation,
}

impl Initialization {
    pub fn name(self) -> &'static str {
        match self {
            Self::ClosedForm => "closed-form",
            Self::Continuation => "continuation",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "closed-form" | "closed_form" | "mwf" => Some(Self::ClosedForm),
            "continuation" => Some(Self::Continuation),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SolverConfig {
    pub max_iterations: usize,
    /// On the infinity norm of the gradient, relative to `max(1, |J|)`. Both
    /// are taken on the bin cost divided by `trace(Φ_yy)/M`, which leaves the
    /// minimizer unchanged and makes the test independent of signal level.
    pub gradient_tolerance: f64,
    /// Diagonal loading, as a fraction of `trace(Φ_yy)/M`, used when
    /// `Φ_yy` is not numerically positive definite.
    pub diagonal_loading: f64,
    pub initialization: Initialization,
    /// Ratio between consecutive continuation weights.
    pub continuation_ratio: f64,
    /// First continuation weight, relative to `trace(Φ_yy)/M`.
    pub continuation_start: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_iterations: 500,
            gradient_tolerance: 1e-8,
            diagonal_loading: 1e-10,
            initialization: Initialization::Continuation,
            continuation_ratio: 10f64.sqrt(),
            continuation_start: 1e-3,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return invalid("max_iterations must be at least 1");
        }
        if !(self.gradient_tolerance > 0.0) || !(self.diagonal_loading > 0.0) {
            return invalid("solver tolerances must be positive");
        }
        if !(self.continuation_ratio > 1.0) || !self.continuation_ratio.is_finite() {
            return invalid("continuation ratio must exceed 1");
        }
        if !(self.continuation_start > 0.0) || !self.continuation_start.is_finite() {
            return invalid("continuation start must be positive");
        }
        Ok(())
    }

    fn bfgs(&self) -> BfgsOptions {
        BfgsOptions {
            max_iterations: self.max_iterations,
            gradient_tolerance: self.gradient_tolerance,
            ..BfgsOptions::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BinDiagnostics {
    pub initial_cost: f64,
    pub cost: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Closed form needed diagonal loading.
    pub loaded: bool,
    /// Singular `Φ_yy` or a non-finite cost; the initializer was kept.
    pub flagged: bool,
    /// `‖∇J‖∞` of the bin cost divided by `trace(Φ_yy)/M`, at the result.
    pub gradient_norm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveResult {
    pub filters: FilterPair,
    pub bins: Vec<BinDiagnostics>,
}

impl SolveResult {
    pub fn unconverged_fraction(&self) -> f64 {
        if self.bins.is_empty() {
            return 0.0;
        }
        self.bins.iter().filter(|d| !d.converged).count() as f64 / self.bins.len() as f64
    }

    pub fn total_iterations(&self) -> usize {
        self.bins.iter().map(|d| d.iterations).sum()
    }
}

/// `w_e = Φ_yy⁻¹ Φ_xx q_e` for one bin. Returns `None` when `Φ_yy` stays
/// singular after loading.
pub fn closed_form_bin(stats: &BinStats<'_>, sel: &Selector, loading: f64) -> Option<(BinFilters, bool)> {
    let m = sel.channels;
    let mut rhs = CMat::zeros(m, 2);
    rhs.set_column(0, &stats.phi_xx.column(sel.left));
    rhs.set_column(1, &stats.phi_xx.column(sel.right));
    let (sol, loaded) = linalg::solve_hpd(stats.phi_yy, &rhs, loading)?;
    Some((
        BinFilters {
            left: sol.column(0).into_owned(),
            right: sol.column(1).into_owned(),
        },
        loaded,
    ))
}

fn check_set(phi: &CoherenceSet, sel: &Selector, cfg: &StftConfig) -> Result<()> {
    if phi.bins() != cfg.bin_count() {
        return Err(Error::DimensionMismatch {
            expected: cfg.bin_count(),
            found: phi.bins(),
        });
    }
    if phi.channels() != sel.channels {
        return Err(Error::DimensionMismatch {
            expected: phi.channels(),
            found: sel.channels,
        });
    }
    Ok(())
}

fn closed_form_or_identity(stats: &BinStats<'_>, sel: &Selector, loading: f64) -> (BinFilters, bool, bool) {
    match closed_form_bin(stats, sel, loading) {
        Some((w, loaded)) if w.is_finite() => (w, loaded, false),
        _ => (BinFilters::identity(sel), false, true),
    }
}

/// Closed-form MWF for every bin. Bins whose `Φ_yy` is singular even after
/// loading get identity filters and are flagged.
pub fn mwf_closed_form(phi: &CoherenceSet, sel: &Selector, cfg: &SolverConfig) -> SolveResult {
    let mut filters = Vec::with_capacity(phi.bins());
    let mut bins = Vec::with_capacity(phi.bins());
    for k in 0..phi.bins() {
        let stats = phi.bin(k);
        let (w, loaded, flagged) = closed_form_or_identity(&stats, sel, cfg.diagonal_loading);
        let cost = costs::j_w(&w, &stats, sel).map(|e| e.value).unwrap_or(f64::NAN);
        bins.push(BinDiagnostics {
            initial_cost: cost,
            cost,
            iterations: 0,
            converged: !flagged,
            loaded,
            flagged,
            gradient_norm: 0.0,
        });
        filters.push(w);
    }
    SolveResult {
        filters: FilterPair { bins: filters },
        bins,
    }
}

/// Inverse of the real Hessian of `J_W / scale` in the parameter layout of
/// [`BinFilters::to_params`]: `(scale/2) [[Re B, −Im B], [Im B, Re B]]` per
/// ear with `B = Φ_yy⁻¹`.
fn inverse_hessian_guess(phi_yy: &CMat, loading: f64, scale: f64) -> Option<Vec<f64>> {
    let m = phi_yy.nrows();
    let (b, _) = linalg::solve_hpd(phi_yy, &CMat::identity(m, m), loading)?;
    let n = 4 * m;
    let mut h = alloc::vec![0.0; n * n];
    for ear in 0..2 {
        let o = 2 * m * ear;
        for i in 0..m {
            for j in 0..m {
                let v = b[(i, j)] * (0.5 * scale);
                h[(o + i) * n + o + j] = v.re;
                h[(o + i) * n + o + m + j] = -v.im;
                h[(o + m + i) * n + o + j] = v.im;
                h[(o + m + i) * n + o + m + j] = v.re;
            }
        }
    }
    h.iter().all(|v| v.is_finite()).then_some(h)
}

/// `trace(Φ_yy)/M`, the per-channel input power of a bin.
fn bin_scale(stats: &BinStats<'_>) -> f64 {
    linalg::trace_re(stats.phi_yy) / stats.phi_yy.nrows() as f64
}

/// Minimizes the combined cost of bin `k` with BFGS from `start`.
pub fn minimize_from(
    start: &BinFilters,
    stats: &BinStats<'_>,
    sel: &Selector,
    spec: &CostSpec,
    stft: &StftConfig,
    k: usize,
    cfg: &SolverConfig,
) -> Result<(BinFilters, BinDiagnostics)> {
    spec.validate()?;
    let initial = costs::combined(start, stats, sel, spec, stft, k)?;
    let scale = bin_scale(stats);
    if !(scale > 0.0) || !scale.is_finite() {
        return Ok((start.clone(), stalled(initial.value, true)));
    }
    let centered = match closed_form_bin(stats, sel, cfg.diagonal_loading) {
        Some((w, false)) if w.is_finite() => Some(costs::CenteredMwfCost::new(w, stats, sel)?),
        _ => None,
    };
    let eval = |w: &BinFilters| -> Result<(f64, Vec<f64>)> {
        let mut total = match &centered {
            Some(c) => c.eval(w)?,
            None => costs::j_w(w, stats, sel)?,
        };
        if let Some(p) = costs::penalty(w, stats, sel, spec, stft, k)? {
            total.add_scaled(&p, spec.alpha);
        }
        Ok((total.value / scale, total.gradient.iter().map(|g| g / scale).collect()))
    };
    let objective = |p: &[f64]| {
        let w = BinFilters::from_params(p).expect("parameter length is fixed");
        eval(&w).unwrap_or_else(|_| (f64::NAN, alloc::vec![f64::NAN; p.len()]))
    };
    let start_value = eval(start)?.0;
    let h0 = inverse_hessian_guess(stats.phi_yy, cfg.diagonal_loading, scale);
    let r = bfgs::minimize_with(objective, &start.to_params(), h0.as_deref(), &cfg.bfgs());
    let ok = r.value.is_finite() && r.value <= start_value;
    if !ok {
        return Ok((start.clone(), stalled(initial.value, true)));
    }
    let w = BinFilters::from_params(&r.x)?;
    let diag = BinDiagnostics {
        initial_cost: initial.value,
        cost: costs::combined(&w, stats, sel, spec, stft, k)?.value,
        iterations: r.iterations,
        converged: r.termination == Termination::Converged,
        loaded: false,
        flagged: false,
        gradient_norm: r.gradient.iter().fold(0.0, |m, g| m.max(g.abs())),
    };
    Ok((w, diag))
}

fn stalled(cost: f64, flagged: bool) -> BinDiagnostics {
    BinDiagnostics {
        initial_cost: cost,
        cost,
        iterations: 0,
        converged: false,
        loaded: false,
        flagged,
        gradient_norm: f64::NAN,
    }
}

/// Weights visited by continuation towards `alpha` in a bin of input power
/// `scale`: `start·scale·ratioʲ` below `alpha`, then `alpha` itself.
pub fn continuation_ladder(alpha: f64, scale: f64, cfg: &SolverConfig) -> Vec<f64> {
    let mut ladder = Vec::new();
    let mut a = cfg.continuation_start * scale;
    if a.is_finite() && a > 0.0 {
        while a < alpha / cfg.continuation_ratio.sqrt() {
            ladder.push(a);
            a *= cfg.continuation_ratio;
        }
    }
    ladder.push(alpha);
    ladder
}

/// Filters of one bin: the closed form for MWF or when the penalty is
/// inactive, BFGS from the closed form (or along a continuation in α)
/// otherwise.
pub fn solve_bin(
    phi: &CoherenceSet,
    sel: &Selector,
    spec: &CostSpec,
    stft: &StftConfig,
    k: usize,
    cfg: &SolverConfig,
) -> Result<(BinFilters, BinDiagnostics)> {
    let stats = phi.bin(k);
    let (w0, loaded, flagged) = closed_form_or_identity(&stats, sel, cfg.diagonal_loading);
    if flagged || !costs::penalty_active(spec, stats.phi_vv, sel, stft, k) {
        let cost = costs::j_w(&w0, &stats, sel)?.value;
        return Ok((
            w0,
            BinDiagnostics {
                initial_cost: cost,
                cost,
                iterations: 0,
                converged: !flagged,
                loaded,
                flagged,
                gradient_norm: 0.0,
            },
        ));
    }
    let ladder = match cfg.initialization {
        Initialization::ClosedForm => alloc::vec![spec.alpha],
        Initialization::Continuation => continuation_ladder(spec.alpha, bin_scale(&stats), cfg),
    };
    let initial_cost = costs::combined(&w0, &stats, sel, spec, stft, k)?.value;
    let mut w = w0.clone();
    let mut iterations = 0;
    let mut last = None;
    for a in ladder {
        let (next, d) = minimize_from(&w, &stats, sel, &spec.with_alpha(a), stft, k, cfg)?;
        iterations += d.iterations;
        w = next;
        last = Some(d);
    }
    let mut diag = last.expect("ladder ends at alpha");
    if !(diag.cost <= initial_cost) {
        // the tracked branch ended above the initializer; restart from it
        let (direct, d) = minimize_from(&w0, &stats, sel, spec, stft, k, cfg)?;
        iterations += d.iterations;
        w = direct;
        diag = d;
    }
    diag.initial_cost = initial_cost;
    diag.iterations = iterations;
    diag.loaded = loaded;
    Ok((w, diag))
}

pub fn solve_all(
    phi: &CoherenceSet,
    sel: &Selector,
    spec: &CostSpec,
    stft: &StftConfig,
    cfg: &SolverConfig,
) -> Result<SolveResult> {
    spec.validate()?;
    cfg.validate()?;
    check_set(phi, sel, stft)?;
    let mut filters = Vec::with_capacity(phi.bins());
    let mut bins = Vec::with_capacity(phi.bins());
    for k in 0..phi.bins() {
        let (w, d) = solve_bin(phi, sel, spec, stft, k, cfg)?;
        filters.push(w);
        bins.push(d);
    }
    Ok(SolveResult {
        filters: FilterPair { bins: filters },
        bins,
    })
}

/// Everything needed to solve and score one scene.
#[derive(Debug, Clone, Copy)]
pub struct Problem<'a> {
    pub phi: &'a CoherenceSet,
    pub sel: &'a Selector,
    pub stft: &'a StftConfig,
    pub solver: &'a SolverConfig,
    pub evaluator: &'a Evaluator,
    /// Ear nearest the noise source.
    pub worst_ear: Ear,
}

impl Problem<'_> {
    pub fn solve(&self, spec: &CostSpec) -> Result<SolveResult> {
        solve_all(self.phi, self.sel, spec, self.stft, self.solver)
    }

    pub fn worst_ear_snr(&self, filters: &FilterPair) -> Result<f64> {
        Ok(self.evaluator.snr(filters)?[self.worst_ear.index()])
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Calibration {
    pub alpha: f64,
    /// `1 − SNR(α)/SNR_MWF` at the worst ear, dB values.
    pub loss: f64,
    pub snr_mwf_db: f64,
    pub snr_db: f64,
    /// No grid point violated the constraint; `alpha` is the grid maximum.
    pub grid_exhausted: bool,
    pub solves: usize,
}

/// Lower edge of the accepted loss window below the target.
pub const CALIBRATION_WINDOW: f64 = 0.02;
pub const ALPHA_GRID: (f64, f64) = (1e-3, 1e5);
const GRID_POINTS_PER_DECADE: usize = 2;
const MAX_BISECTIONS: usize = 40;

/// Log-spaced calibration grid.
pub fn alpha_grid() -> Vec<f64> {
    let lo = libm::log10(ALPHA_GRID.0);
    let hi = libm::log10(ALPHA_GRID.1);
    let n = ((hi - lo) * GRID_POINTS_PER_DECADE as f64).round() as usize;
    (0..=n)
        .map(|i| libm::pow(10.0, lo + i as f64 / GRID_POINTS_PER_DECADE as f64))
        .collect()
}

/// Largest α whose worst-ear SNR loss relative to the MWF stays within
/// `loss_fraction`. A log grid brackets the boundary, then log-space
/// bisection narrows it until the loss lands in
/// `[loss_fraction − 0.02, loss_fraction]`.
pub fn calibrate_alpha(problem: &Problem<'_>, variant: Variant, loss_fraction: f64) -> Result<Calibration> {
    if !(0.0..1.0).contains(&loss_fraction) {
        return invalid("loss fraction must lie in [0, 1)");
    }
    let mwf = problem.solve(&CostSpec::mwf())?;
    let snr_mwf = problem.worst_ear_snr(&mwf.filters)?;
    if !(snr_mwf > 0.0) || !snr_mwf.is_finite() {
        return invalid("MWF worst-ear SNR must be positive and finite to calibrate against");
    }
    let mut solves = 1;
    let mut loss_at = |alpha: f64| -> Result<(f64, f64)> {
        solves += 1;
        let r = problem.solve(&CostSpec::new(variant, alpha))?;
        let snr = problem.worst_ear_snr(&r.filters)?;
        Ok((1.0 - snr / snr_mwf, snr))
    };
    let done = |alpha, loss, snr, exhausted, solves| Calibration {
        alpha,
        loss,
        snr_mwf_db: snr_mwf,
        snr_db: snr,
        grid_exhausted: exhausted,
        solves,
    };
    if variant == Variant::Mwf || loss_fraction == 0.0 {
        return Ok(done(0.0, 0.0, snr_mwf, false, 1));
    }
    let mut feasible = (0.0, 0.0, snr_mwf);
    let mut infeasible = None;
    for alpha in alpha_grid() {
        let (loss, snr) = loss_at(alpha)?;
        if loss <= loss_fraction {
            feasible = (alpha, loss, snr);
        } else {
            infeasible = Some(alpha);
            break;
        }
    }
    let Some(mut hi) = infeasible else {
        let (a, l, s) = feasible;
        return Ok(done(a, l, s, true, solves));
    };
    let target_lo = loss_fraction - CALIBRATION_WINDOW;
    let mut lo = if feasible.0 > 0.0 { feasible.0 } else { ALPHA_GRID.0 * 1e-3 };
    for _ in 0..MAX_BISECTIONS {
        if feasible.1 >= target_lo {
            break;
        }
        let mid = libm::sqrt(lo * hi);
        let (loss, snr) = loss_at(mid)?;
        if loss <= loss_fraction {
            lo = mid;
            feasible = (mid, loss, snr);
        } else {
            hi = mid;
        }
    }
    let (a, l, s) = feasible;
    Ok(done(a, l, s, false, solves))
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SweepRow {
    pub variant: Variant,
    pub alpha: f64,
    pub report: MetricsReport,
    pub unconverged_fraction: f64,
}

/// One solve and evaluation per α.
pub fn alpha_sweep(problem: &Problem<'_>, variant: Variant, alphas: &[f64]) -> Result<Vec<SweepRow>> {
    if alphas.is_empty() {
        return invalid("alpha list is empty");
    }
    alphas
        .iter()
        .map(|&alpha| {
            let r = problem.solve(&CostSpec::new(variant, alpha))?;
            Ok(SweepRow {
                variant,
                alpha,
                report: problem.evaluator.evaluate(&r.filters)?,
                unconverged_fraction: r.unconverged_fraction(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::CVec;
    use crate::C64;
    use alloc::vec;

    fn set(phi_xx: CMat, phi_vv: CMat, bins: usize) -> CoherenceSet {
        let phi_yy = &phi_xx + &phi_vv;
        CoherenceSet {
            phi_yy: vec![phi_yy; bins],
            phi_vv: vec![phi_vv; bins],
            phi_xx: vec![phi_xx; bins],
            speech_frames: 10,
            noise_frames: 10,
        }
    }

    fn scalar(v: f64) -> CMat {
        CMat::from_element(1, 1, C64::new(v, 0.0))
    }

    #[test]
    fn scalar_wiener_gain() {
        let phi = set(scalar(3.0), scalar(1.0), 129);
        let sel = Selector::new(0, 0, 1).unwrap();
        let r = mwf_closed_form(&phi, &sel, &SolverConfig::default());
        for b in &r.filters.bins {
            assert!((b.left[0] - C64::new(0.75, 0.0)).norm() < 1e-12);
            assert!((b.right[0] - C64::new(0.75, 0.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn no_speech_suppresses_and_no_noise_passes() {
        let h = CVec::from_vec(vec![C64::new(1.0, 0.0), C64::from_polar(0.7, 0.4)]);
        let sel = Selector::new(0, 1, 2).unwrap();
        let noise = linalg::outer(&h) + CMat::identity(2, 2).scale(0.1);
        let r = mwf_closed_form(&set(CMat::zeros(2, 2), noise.clone(), 4), &sel, &SolverConfig::default());
        assert!(r.filters.bins.iter().all(|b| b.left.norm() == 0.0 && b.right.norm() == 0.0));
        let r = mwf_closed_form(&set(noise, CMat::zeros(2, 2), 4), &sel, &SolverConfig::default());
        for b in &r.filters.bins {
            assert!((&b.left - sel.q_left()).norm() < 1e-9);
            assert!((&b.right - sel.q_right()).norm() < 1e-9);
        }
    }

    #[test]
    fn singular_bin_is_flagged() {
        let sel = Selector::new(0, 1, 2).unwrap();
        let r = mwf_closed_form(&set(CMat::zeros(2, 2), CMat::zeros(2, 2), 3), &sel, &SolverConfig::default());
        assert!(r.bins.iter().all(|d| d.flagged && !d.converged));
        assert_eq!(r.filters, FilterPair::identity(&sel, 3));
        assert_eq!(r.unconverged_fraction(), 1.0);
    }

    #[test]
    fn grid_spans_range() {
        let g = alpha_grid();
        assert_eq!(g.len(), 17);
        assert!((g[0] - 1e-3).abs() < 1e-15);
        assert!((g[16] - 1e5).abs() < 1e-6);
    }

    #[test]
    fn config_validation() {
        assert!(SolverConfig { max_iterations: 0, ..SolverConfig::default() }.validate().is_err());
        assert!(SolverConfig { gradient_tolerance: 0.0, ..SolverConfig::default() }.validate().is_err());
    }
}
