//! Small dense complex linear-algebra helpers on top of `nalgebra`.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::C64;

pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;

pub fn zeros(m: usize) -> CMat {
    CMat::zeros(m, m)
}

/// `h hᴴ`.
pub fn outer(h: &CVec) -> CMat {
    h * h.adjoint()
}

/// `aᴴ A b`.
pub fn sesquilinear(a: &CVec, m: &CMat, b: &CVec) -> C64 {
    a.dotc(&(m * b))
}

/// `(A + Aᴴ) / 2`.
pub fn hermitian_part(m: &CMat) -> CMat {
    (m + m.adjoint()).scale(0.5)
}

pub fn trace_re(m: &CMat) -> f64 {
    m.diagonal().iter().map(|v| v.re).sum()
}

/// Largest deviation from Hermitian symmetry, `max |A - Aᴴ|`.
pub fn hermitian_defect(m: &CMat) -> f64 {
    (m - m.adjoint()).iter().map(|v| v.norm()).fold(0.0, f64::max)
}

/// Eigenvalues of the Hermitian part of `m`, sorted descending.
pub fn eigenvalues_desc(m: &CMat) -> Vec<f64> {
    let mut ev: Vec<f64> = hermitian_part(m).symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(|a, b| b.partial_cmp(a).unwrap_or(core::cmp::Ordering::Equal));
    ev
}

/// Projects onto the PSD cone: negative eigenvalues are clamped to zero.
pub fn psd_floor(m: &CMat) -> CMat {
    let eig = hermitian_part(m).symmetric_eigen();
    let vecs = &eig.eigenvectors;
    let n = m.nrows();
    let mut out = CMat::zeros(n, n);
    for (i, &lambda) in eig.eigenvalues.iter().enumerate() {
        if lambda > 0.0 {
            let v = vecs.column(i);
            out += (&v * v.adjoint()).scale(lambda);
        }
    }
    hermitian_part(&out)
}

/// Solves `A X = B` for Hermitian positive definite `A`.
///
/// Falls back to diagonal loading of `loading × trace(A) / M` when the
/// Cholesky factorization fails. Returns `None` if that fails as well.
pub fn solve_hpd(a: &CMat, b: &CMat, loading: f64) -> Option<(CMat, bool)> {
    let a = hermitian_part(a);
    if let Some(ch) = a.clone().cholesky() {
        let x = ch.solve(b);
        if x.iter().all(|v| v.re.is_finite() && v.im.is_finite()) {
            return Some((x, false));
        }
    }
    let n = a.nrows();
    let tr = trace_re(&a);
    if !(tr > 0.0) || !tr.is_finite() {
        return None;
    }
    let mut loaded = a;
    let delta = loading * tr / n as f64;
    for i in 0..n {
        loaded[(i, i)] += C64::new(delta, 0.0);
    }
    let x = loaded.cholesky()?.solve(b);
    if x.iter().all(|v| v.re.is_finite() && v.im.is_finite()) {
        Some((x, true))
    } else {
        None
    }
}
