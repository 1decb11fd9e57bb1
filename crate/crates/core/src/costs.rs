//! Per-bin cost functions and their gradients.
//!
//! All gradients are taken with respect to the real parameter vector
//! `[Re w_L; Im w_L; Re w_R; Im w_R]` (length `4M`). For a real function
//! `f(w)` with Wirtinger derivative `g = ∂f/∂w*`, the real gradient is
//! `[2 Re g; 2 Im g]`.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

#[allow(unused_imports)]
use num_traits::Float;

use crate::error::invalid;
use crate::linalg::{self, CMat, CVec};
use crate::spatial::{wrap_angle, BinStats, Selector, POWER_EPS};
use crate::stft::StftConfig;
use crate::{Error, Result, C64};

/// Value returned by a penalty whose output noise power vanishes.
pub const DEGENERATE_PENALTY: f64 = 1e6;

/// Left and right coefficient vectors of one bin.
#[derive(Debug, Clone, PartialEq)]
pub struct BinFilters {
    pub left: CVec,
    pub right: CVec,
}

impl BinFilters {
    pub fn channels(&self) -> usize {
        self.left.len()
    }

    pub fn identity(sel: &Selector) -> Self {
        Self {
            left: sel.q_left(),
            right: sel.q_right(),
        }
    }

    pub fn zeros(channels: usize) -> Self {
        Self {
            left: CVec::zeros(channels),
            right: CVec::zeros(channels),
        }
    }

    /// Stacks `[Re w_L; Im w_L; Re w_R; Im w_R]`.
    pub fn to_params(&self) -> Vec<f64> {
        let mut p = Vec::with_capacity(4 * self.channels());
        p.extend(self.left.iter().map(|c| c.re));
        p.extend(self.left.iter().map(|c| c.im));
        p.extend(self.right.iter().map(|c| c.re));
        p.extend(self.right.iter().map(|c| c.im));
        p
    }

    pub fn from_params(p: &[f64]) -> Result<Self> {
        if p.is_empty() || p.len() % 4 != 0 {
            return invalid("parameter vector length must be a positive multiple of 4");
        }
        let m = p.len() / 4;
        let vec_at = |off: usize| CVec::from_iterator(m, (0..m).map(|i| C64::new(p[off + i], p[off + m + i])));
        Ok(Self {
            left: vec_at(0),
            right: vec_at(2 * m),
        })
    }

    pub fn is_finite(&self) -> bool {
        self.left
            .iter()
            .chain(self.right.iter())
            .all(|c| c.re.is_finite() && c.im.is_finite())
    }
}

/// Filters for every bin.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterPair {
    pub bins: Vec<BinFilters>,
}

impl FilterPair {
    pub fn identity(sel: &Selector, bins: usize) -> Self {
        Self {
            bins: vec![BinFilters::identity(sel); bins],
        }
    }

    pub fn channels(&self) -> usize {
        self.bins.first().map_or(0, BinFilters::channels)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Variant {
    Mwf,
    MwfItd,
    MwfIc,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Mwf, Variant::MwfItd, Variant::MwfIc];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Mwf => "MWF",
            Variant::MwfItd => "MWF-ITD",
            Variant::MwfIc => "MWF-IC",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "MWF" => Some(Variant::Mwf),
            "MWF-ITD" | "MWF_ITD" | "ITD" => Some(Variant::MwfItd),
            "MWF-IC" | "MWF_IC" | "IC" => Some(Variant::MwfIc),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CostSpec {
    pub variant: Variant,
    /// Frequency-constant weight of the penalty.
    pub alpha: f64,
    /// Hz; the penalty only applies to bins in `(0, cue_cutoff]`.
    pub cue_cutoff: f64,
}

impl CostSpec {
    pub fn new(variant: Variant, alpha: f64) -> Self {
        Self {
            variant,
            alpha,
            cue_cutoff: crate::CUE_CUTOFF_HZ,
        }
    }

    pub fn mwf() -> Self {
        Self::new(Variant::Mwf, 0.0)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0) || !self.alpha.is_finite() {
            return invalid("alpha must be finite and non-negative");
        }
        if !(self.cue_cutoff > 0.0) {
            return invalid("cue cutoff must be positive");
        }
        Ok(())
    }

    pub fn with_alpha(self, alpha: f64) -> Self {
        Self { alpha, ..self }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CostEval {
    pub value: f64,
    pub gradient: Vec<f64>,
    /// Set when a penalty hit the vanishing-output-power guard.
    pub degenerate: bool,
}

impl CostEval {
    pub fn add_scaled(&mut self, other: &CostEval, weight: f64) {
        self.value += weight * other.value;
        for (g, o) in self.gradient.iter_mut().zip(&other.gradient) {
            *g += weight * o;
        }
        self.degenerate |= other.degenerate;
    }
}

fn real_gradient(gl: &CVec, gr: &CVec) -> Vec<f64> {
    let mut g = Vec::with_capacity(4 * gl.len());
    g.extend(gl.iter().map(|c| 2.0 * c.re));
    g.extend(gl.iter().map(|c| 2.0 * c.im));
    g.extend(gr.iter().map(|c| 2.0 * c.re));
    g.extend(gr.iter().map(|c| 2.0 * c.im));
    g
}

fn check_dims(w: &BinFilters, phi: &CMat, sel: &Selector) -> Result<()> {
    let m = phi.nrows();
    for found in [w.left.len(), w.right.len(), phi.ncols(), sel.channels] {
        if found != m {
            return Err(Error::DimensionMismatch { expected: m, found });
        }
    }
    Ok(())
}

/// Binaural MWF cost in its expanded quadratic form:
/// `Σ_{e∈{L,R}} q_eᵀΦ_xx q_e − 2 Re(q_eᵀ Φ_xx w_e) + w_eᴴ Φ_yy w_e`.
pub fn j_w(w: &BinFilters, stats: &BinStats<'_>, sel: &Selector) -> Result<CostEval> {
    check_dims(w, stats.phi_yy, sel)?;
    check_dims(w, stats.phi_xx, sel)?;
    let (ql, qr) = (sel.q_left(), sel.q_right());
    let mut value = 0.0;
    let mut grads = [CVec::zeros(0), CVec::zeros(0)];
    for (i, (q, we)) in [(&ql, &w.left), (&qr, &w.right)].into_iter().enumerate() {
        let xq = stats.phi_xx * q;
        let yw = stats.phi_yy * we;
        value += q.dotc(&xq).re - 2.0 * xq.dotc(we).re + we.dotc(&yw).re;
        grads[i] = yw - xq;
    }
    Ok(CostEval {
        value,
        gradient: real_gradient(&grads[0], &grads[1]),
        degenerate: false,
    })
}

struct OutputTerms {
    phi_wl: CVec,
    phi_wr: CVec,
    cross: C64,
    power_left: f64,
    power_right: f64,
}

fn output_terms(w: &BinFilters, phi_vv: &CMat) -> OutputTerms {
    let phi_wl = phi_vv * &w.left;
    let phi_wr = phi_vv * &w.right;
    OutputTerms {
        cross: w.left.dotc(&phi_wr),
        power_left: w.left.dotc(&phi_wl).re,
        power_right: w.right.dotc(&phi_wr).re,
        phi_wl,
        phi_wr,
    }
}

fn degenerate(m: usize) -> CostEval {
    CostEval {
        value: DEGENERATE_PENALTY,
        gradient: vec![0.0; 4 * m],
        degenerate: true,
    }
}

fn input_reference(phi_vv: &CMat, sel: &Selector) -> Result<(C64, f64)> {
    let cross = phi_vv[(sel.left, sel.right)];
    let pl = phi_vv[(sel.left, sel.left)].re;
    let pr = phi_vv[(sel.right, sel.right)].re;
    let eps = POWER_EPS * linalg::trace_re(phi_vv);
    if !(pl > eps && pr > eps) || cross.norm() <= 1e-12 * (pl * pr).sqrt() {
        return invalid("input cue undefined: reference noise power or cross term vanishes");
    }
    Ok((cross, (pl * pr).sqrt()))
}

/// Squared wrapped difference between output and input noise IPD.
pub fn j_ipd(w: &BinFilters, phi_vv: &CMat, sel: &Selector) -> Result<CostEval> {
    check_dims(w, phi_vv, sel)?;
    let (cross_in, _) = input_reference(phi_vv, sel)?;
    let t = output_terms(w, phi_vv);
    let eps = POWER_EPS * linalg::trace_re(phi_vv);
    if !(t.power_left > eps && t.power_right > eps) || t.cross.norm() <= eps {
        return Ok(degenerate(phi_vv.nrows()));
    }
    let d = wrap_angle(t.cross.arg() - cross_in.arg());
    let c2 = t.cross.norm_sqr();
    // ∂∠c/∂w_L* = −j c* Φw_R / (2|c|²),  ∂∠c/∂w_R* = j c Φw_L / (2|c|²)
    let gl = t.phi_wr * (C64::new(0.0, -1.0) * t.cross.conj() / (2.0 * c2) * (2.0 * d));
    let gr = t.phi_wl * (C64::new(0.0, 1.0) * t.cross / (2.0 * c2) * (2.0 * d));
    Ok(CostEval {
        value: d * d,
        gradient: real_gradient(&gl, &gr),
        degenerate: false,
    })
}

/// Squared modulus of the difference between output and input noise IC.
pub fn j_ic(w: &BinFilters, phi_vv: &CMat, sel: &Selector) -> Result<CostEval> {
    check_dims(w, phi_vv, sel)?;
    let (cross_in, norm_in) = input_reference(phi_vv, sel)?;
    let ic_in = cross_in / norm_in;
    let t = output_terms(w, phi_vv);
    let eps = POWER_EPS * linalg::trace_re(phi_vv);
    if !(t.power_left > eps && t.power_right > eps) {
        return Ok(degenerate(phi_vv.nrows()));
    }
    let s = (t.power_left * t.power_right).sqrt();
    let ic_out = t.cross / s;
    let u = ic_out - ic_in;
    let re_uc = (u.conj() * t.cross).re;
    let gl = &t.phi_wr * (u.conj() / s) - &t.phi_wl * C64::new(re_uc / (s * t.power_left), 0.0);
    let gr = &t.phi_wl * (u / s) - &t.phi_wr * C64::new(re_uc / (s * t.power_right), 0.0);
    Ok(CostEval {
        value: u.norm_sqr(),
        gradient: real_gradient(&gl, &gr),
        degenerate: false,
    })
}

/// Whether the penalty of `spec` is active in bin `k`: the bin must lie in
/// the cue band and the input noise cue must be defined.
pub fn penalty_active(spec: &CostSpec, phi_vv: &CMat, sel: &Selector, cfg: &StftConfig, k: usize) -> bool {
    spec.variant != Variant::Mwf
        && spec.alpha > 0.0
        && crate::spatial::in_cue_band(cfg, k, spec.cue_cutoff)
        && input_reference(phi_vv, sel).is_ok()
}

/// Unweighted penalty of `spec.variant`, or `None` when it is gated off.
pub fn penalty(
    w: &BinFilters,
    stats: &BinStats<'_>,
    sel: &Selector,
    spec: &CostSpec,
    cfg: &StftConfig,
    k: usize,
) -> Result<Option<CostEval>> {
    if !penalty_active(spec, stats.phi_vv, sel, cfg, k) {
        return Ok(None);
    }
    match spec.variant {
        Variant::MwfItd => j_ipd(w, stats.phi_vv, sel).map(Some),
        Variant::MwfIc => j_ic(w, stats.phi_vv, sel).map(Some),
        Variant::Mwf => Ok(None),
    }
}

/// `J_W + α J_penalty`, with the penalty gated by [`penalty_active`].
pub fn combined(
    w: &BinFilters,
    stats: &BinStats<'_>,
    sel: &Selector,
    spec: &CostSpec,
    cfg: &StftConfig,
    k: usize,
) -> Result<CostEval> {
    spec.validate()?;
    let mut total = j_w(w, stats, sel)?;
    if let Some(p) = penalty(w, stats, sel, spec, cfg, k)? {
        total.add_scaled(&p, spec.alpha);
    }
    Ok(total)
}

/// `J_W` written around its minimizer `w*`:
/// `J_W(w) = J_W(w*) + Σ_e (w_e − w*_e)ᴴ Φ_yy (w_e − w*_e)`.
///
/// Algebraically equal to [`j_w`] but free of the cancellation between
/// its large constant, linear and quadratic terms, so values and gradients
/// stay accurate close to `w*`.
#[derive(Debug, Clone)]
pub struct CenteredMwfCost {
    phi_yy: CMat,
    center: BinFilters,
    floor: f64,
}

impl CenteredMwfCost {
    /// `center` must solve `Φ_yy w_e = Φ_xx q_e`.
    pub fn new(center: BinFilters, stats: &BinStats<'_>, sel: &Selector) -> Result<Self> {
        let floor = j_w(&center, stats, sel)?.value;
        Ok(Self {
            phi_yy: stats.phi_yy.clone(),
            center,
            floor,
        })
    }

    pub fn eval(&self, w: &BinFilters) -> Result<CostEval> {
        if w.channels() != self.center.channels() {
            return Err(crate::Error::DimensionMismatch {
                expected: self.center.channels(),
                found: w.channels(),
            });
        }
        let el = &w.left - &self.center.left;
        let er = &w.right - &self.center.right;
        let (yl, yr) = (&self.phi_yy * &el, &self.phi_yy * &er);
        Ok(CostEval {
            value: self.floor + el.dotc(&yl).re + er.dotc(&yr).re,
            gradient: real_gradient(&yl, &yr),
            degenerate: false,
        })
    }
}

/// ITD cost `(2π f)⁻² J_IPD`, i.e. the IPD cost before the frequency factor
/// is folded into the weight.
pub fn j_itd_seconds(w: &BinFilters, phi_vv: &CMat, sel: &Selector, freq: f64) -> Result<f64> {
    if !(freq > 0.0) {
        return invalid("ITD is undefined at DC");
    }
    Ok(j_ipd(w, phi_vv, sel)?.value / (2.0 * PI * freq).powi(2))
}
