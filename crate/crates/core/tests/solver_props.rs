mod common;

use common::*;
use cuemwf_core::bfgs::{self, BfgsOptions};
use cuemwf_core::costs::{self, BinFilters, CostSpec, FilterPair, Variant};
use cuemwf_core::linalg;
use cuemwf_core::solver::{closed_form_bin, mwf_closed_form, solve_all, solve_bin, SolverConfig};
use cuemwf_core::spatial::{output_cues, wrap_angle, BinStats, Selector};
use cuemwf_core::stft::StftConfig;
use cuemwf_core::CUE_CUTOFF_HZ;
use proptest::prelude::*;

const CUE_BIN: usize = 10;

fn rel_err(a: &BinFilters, b: &BinFilters) -> f64 {
    let pa = a.to_params();
    let pb = b.to_params();
    let num: f64 = pa.iter().zip(&pb).map(|(x, y)| (x - y).powi(2)).sum();
    let den: f64 = pb.iter().map(|y| y * y).sum();
    (num / den).sqrt()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(60))]

    #[test]
    fn bfgs_recovers_closed_form(seed in any::<u64>(), mics in 1usize..4) {
        let mut g = gen(seed);
        let m = 2 * mics;
        let sel = Selector::binaural(mics);
        let phi_xx = psd(&mut g, m, 0.0);
        let phi_vv = psd(&mut g, m, 0.2);
        let phi_yy = &phi_xx + &phi_vv;
        let stats = BinStats { phi_yy: &phi_yy, phi_xx: &phi_xx, phi_vv: &phi_vv };
        let (exact, _) = closed_form_bin(&stats, &sel, 0.0).unwrap();
        let start = filters(&mut g, m);
        let opts = BfgsOptions { gradient_tolerance: 1e-12, ..BfgsOptions::default() };
        let r = bfgs::minimize(
            |p: &[f64]| {
                let e = costs::j_w(&BinFilters::from_params(p).unwrap(), &stats, &sel).unwrap();
                (e.value, e.gradient)
            },
            &start.to_params(),
            &opts,
        );
        let w = BinFilters::from_params(&r.x).unwrap();
        prop_assert!(rel_err(&w, &exact) < 1e-6, "error {} after {:?}", rel_err(&w, &exact), r.termination);
    }

    #[test]
    fn penalized_solve_never_ascends(seed in any::<u64>(), log_alpha in -2.0f64..4.0, ic in any::<bool>()) {
        let mut g = gen(seed);
        let sel = Selector::binaural(2);
        let h = cvec(&mut g, 4);
        let set = coherence_set(rank_one(&h, 1.0), psd(&mut g, 4, 0.05), StftConfig::default().bin_count());
        let variant = if ic { Variant::MwfIc } else { Variant::MwfItd };
        let spec = CostSpec::new(variant, 10f64.powf(log_alpha));
        let (_, d) = solve_bin(&set, &sel, &spec, &StftConfig::default(), CUE_BIN, &SolverConfig::default()).unwrap();
        prop_assert!(d.cost <= d.initial_cost);
    }

    #[test]
    fn mwf_noise_inherits_speech_ipd(seed in any::<u64>()) {
        let mut g = gen(seed);
        let stft = StftConfig::default();
        let sel = Selector::binaural(2);
        let h = cvec(&mut g, 4);
        let set = coherence_set(rank_one(&h, 4.0), psd(&mut g, 4, 0.05), stft.bin_count());
        let r = mwf_closed_form(&set, &sel, &SolverConfig::default());
        let noise = output_cues(&set.phi_vv, &r.filters, &stft, CUE_CUTOFF_HZ);
        let speech_ipd = (h[sel.left] * h[sel.right].conj()).arg();
        for k in noise.valid_bins() {
            prop_assert!(wrap_angle(noise.ipd[k] - speech_ipd).abs() < 0.05);
        }
    }
}

#[test]
fn bfgs_quadratic_is_fast() {
    let mut g = gen(11);
    for _ in 0..20 {
        let n = 12;
        let a = psd(&mut g, n, 0.5);
        let b = signal(&mut g, n);
        let q = |x: &[f64]| {
            let mut grad = vec![0.0; n];
            let mut v = 0.0;
            for i in 0..n {
                let ax: f64 = (0..n).map(|j| a[(i, j)].re * x[j]).sum();
                grad[i] = ax - b[i];
                v += 0.5 * x[i] * ax - b[i] * x[i];
            }
            (v, grad)
        };
        let r = bfgs::minimize(q, &vec![0.0; n], &BfgsOptions::default());
        assert!(r.converged());
        assert!(r.iterations < 50, "{} iterations", r.iterations);
    }
}

#[test]
fn strong_penalty_preserves_rank_one_noise_cues() {
    let mut g = gen(5);
    let stft = StftConfig::default();
    let sel = Selector::binaural(2);
    let hx = cvec(&mut g, 4);
    let hv = cvec(&mut g, 4);
    let mut phi_vv = rank_one(&hv, 1.0);
    for i in 0..4 {
        phi_vv[(i, i)] += cuemwf_core::C64::new(1e-6, 0.0);
    }
    let set = coherence_set(rank_one(&hx, 1.0), phi_vv, stft.bin_count());
    let spec = CostSpec::new(Variant::MwfIc, 1e4);
    let r = solve_all(&set, &sel, &spec, &stft, &SolverConfig::default()).unwrap();
    let out = output_cues(&set.phi_vv, &r.filters, &stft, CUE_CUTOFF_HZ);
    let inp = output_cues(&set.phi_vv, &FilterPair::identity(&sel, stft.bin_count()), &stft, CUE_CUTOFF_HZ);
    let mut checked = 0;
    for k in inp.valid_bins() {
        assert!(wrap_angle(out.ipd[k] - inp.ipd[k]).abs() < 1e-3, "bin {k}");
        checked += 1;
    }
    assert!(checked > 0);
}

#[test]
fn solves_are_deterministic() {
    let mut g = gen(9);
    let stft = StftConfig::default();
    let sel = Selector::binaural(2);
    let set = coherence_set(rank_one(&cvec(&mut g, 4), 1.0), psd(&mut g, 4, 0.05), stft.bin_count());
    let spec = CostSpec::new(Variant::MwfItd, 3.0);
    let a = solve_all(&set, &sel, &spec, &stft, &SolverConfig::default()).unwrap();
    let b = solve_all(&set, &sel, &spec, &stft, &SolverConfig::default()).unwrap();
    assert_eq!(format!("{a:?}"), format!("{b:?}"));
}

#[test]
fn closed_form_is_stationary() {
    let mut g = gen(13);
    let sel = Selector::binaural(2);
    let phi_xx = rank_one(&cvec(&mut g, 4), 1.0);
    let phi_vv = psd(&mut g, 4, 0.1);
    let phi_yy = &phi_xx + &phi_vv;
    let stats = BinStats { phi_yy: &phi_yy, phi_xx: &phi_xx, phi_vv: &phi_vv };
    let (w, loaded) = closed_form_bin(&stats, &sel, 0.0).unwrap();
    assert!(!loaded);
    let e = costs::j_w(&w, &stats, &sel).unwrap();
    let scale = linalg::trace_re(&phi_yy);
    assert!(e.gradient.iter().all(|g| g.abs() < 1e-8 * scale));
}

#[test]
fn scalar_wiener_cost() {
    let (sx, sv) = (2.0, 0.5);
    let c = |v: f64| cuemwf_core::linalg::CMat::from_element(1, 1, cuemwf_core::C64::new(v, 0.0));
    let (phi_xx, phi_vv, phi_yy) = (c(sx), c(sv), c(sx + sv));
    let stats = BinStats { phi_yy: &phi_yy, phi_xx: &phi_xx, phi_vv: &phi_vv };
    let sel = Selector::new(0, 0, 1).unwrap();
    let (w, _) = closed_form_bin(&stats, &sel, 0.0).unwrap();
    assert!((w.left[0].re - sx / (sx + sv)).abs() < 1e-15);
    let v = costs::j_w(&w, &stats, &sel).unwrap().value;
    assert!((v - 2.0 * sx * sv / (sx + sv)).abs() < 1e-12);
}
