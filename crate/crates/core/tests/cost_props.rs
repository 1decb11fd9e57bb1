mod common;

use common::*;
use cuemwf_core::costs::{self, BinFilters, CenteredMwfCost, CostSpec, Variant};
use cuemwf_core::solver::closed_form_bin;
use cuemwf_core::spatial::{BinStats, Selector};
use cuemwf_core::stft::StftConfig;
use cuemwf_core::C64;
use proptest::prelude::*;

const CUE_BIN: usize = 10;

struct Instance {
    sel: Selector,
    phi_xx: cuemwf_core::linalg::CMat,
    phi_vv: cuemwf_core::linalg::CMat,
    phi_yy: cuemwf_core::linalg::CMat,
    w: BinFilters,
}

impl Instance {
    fn new(seed: u64, mics: usize) -> Self {
        let mut g = gen(seed);
        let m = 2 * mics;
        let h = cvec(&mut g, m);
        let phi_xx = rank_one(&h, uniform(&mut g, 0.1, 2.0));
        let phi_vv = psd(&mut g, m, 0.05);
        let phi_yy = &phi_xx + &phi_vv;
        Self {
            sel: Selector::binaural(mics),
            w: filters(&mut g, m),
            phi_xx,
            phi_vv,
            phi_yy,
        }
    }

    fn stats(&self) -> BinStats<'_> {
        BinStats {
            phi_yy: &self.phi_yy,
            phi_xx: &self.phi_xx,
            phi_vv: &self.phi_vv,
        }
    }
}

fn assert_gradient<F>(f: F, x: &[f64], analytic: &[f64]) -> Result<(), TestCaseError>
where
    F: Fn(&[f64]) -> f64,
{
    let fd = finite_difference(f, x);
    let floor = 1e-7 * fd.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    for (i, (a, n)) in analytic.iter().zip(&fd).enumerate() {
        let rel = (a - n).abs() / n.abs().max(floor);
        prop_assert!(rel < 1e-5, "component {i}: analytic {a}, numeric {n}");
    }
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(120))]

    #[test]
    fn j_w_gradient(seed in any::<u64>(), mics in 1usize..3) {
        let inst = Instance::new(seed, mics);
        let eval = costs::j_w(&inst.w, &inst.stats(), &inst.sel).unwrap();
        let f = |p: &[f64]| costs::j_w(&BinFilters::from_params(p).unwrap(), &inst.stats(), &inst.sel).unwrap().value;
        assert_gradient(f, &inst.w.to_params(), &eval.gradient)?;
    }

    #[test]
    fn j_ipd_gradient(seed in any::<u64>(), mics in 1usize..3) {
        let inst = Instance::new(seed, mics);
        let eval = costs::j_ipd(&inst.w, &inst.phi_vv, &inst.sel).unwrap();
        prop_assume!(!eval.degenerate);
        let f = |p: &[f64]| costs::j_ipd(&BinFilters::from_params(p).unwrap(), &inst.phi_vv, &inst.sel).unwrap().value;
        assert_gradient(f, &inst.w.to_params(), &eval.gradient)?;
    }

    #[test]
    fn j_ic_gradient(seed in any::<u64>(), mics in 1usize..3) {
        let inst = Instance::new(seed, mics);
        let eval = costs::j_ic(&inst.w, &inst.phi_vv, &inst.sel).unwrap();
        prop_assume!(!eval.degenerate);
        let f = |p: &[f64]| costs::j_ic(&BinFilters::from_params(p).unwrap(), &inst.phi_vv, &inst.sel).unwrap().value;
        assert_gradient(f, &inst.w.to_params(), &eval.gradient)?;
    }

    #[test]
    fn combined_gradient(seed in any::<u64>(), alpha in 0.0f64..5.0, ic in any::<bool>()) {
        let inst = Instance::new(seed, 2);
        let spec = CostSpec::new(if ic { Variant::MwfIc } else { Variant::MwfItd }, alpha);
        let cfg = StftConfig::default();
        let eval = costs::combined(&inst.w, &inst.stats(), &inst.sel, &spec, &cfg, CUE_BIN).unwrap();
        prop_assume!(!eval.degenerate);
        let f = |p: &[f64]| {
            costs::combined(&BinFilters::from_params(p).unwrap(), &inst.stats(), &inst.sel, &spec, &cfg, CUE_BIN)
                .unwrap()
                .value
        };
        assert_gradient(f, &inst.w.to_params(), &eval.gradient)?;
    }

    #[test]
    fn centered_cost_matches_expanded(seed in any::<u64>()) {
        let inst = Instance::new(seed, 2);
        let (center, _) = closed_form_bin(&inst.stats(), &inst.sel, 0.0).unwrap();
        let c = CenteredMwfCost::new(center, &inst.stats(), &inst.sel).unwrap();
        let a = c.eval(&inst.w).unwrap();
        let b = costs::j_w(&inst.w, &inst.stats(), &inst.sel).unwrap();
        prop_assert!((a.value - b.value).abs() <= 1e-9 * b.value.abs().max(1.0));
        let f = |p: &[f64]| c.eval(&BinFilters::from_params(p).unwrap()).unwrap().value;
        assert_gradient(f, &inst.w.to_params(), &a.gradient)?;
    }

    #[test]
    fn j_w_convex(seed in any::<u64>(), t in 0.0f64..=1.0) {
        let inst = Instance::new(seed, 2);
        let v = filters(&mut gen(seed ^ 1), 4);
        let mix = BinFilters {
            left: inst.w.left.scale(t) + v.left.scale(1.0 - t),
            right: inst.w.right.scale(t) + v.right.scale(1.0 - t),
        };
        let j = |w: &BinFilters| costs::j_w(w, &inst.stats(), &inst.sel).unwrap().value;
        prop_assert!(j(&mix) <= t * j(&inst.w) + (1.0 - t) * j(&v) + 1e-9);
    }

    #[test]
    fn costs_nonnegative(seed in any::<u64>(), alpha in 0.0f64..10.0) {
        let inst = Instance::new(seed, 2);
        let cfg = StftConfig::default();
        for variant in Variant::ALL {
            let spec = CostSpec::new(variant, alpha);
            let v = costs::combined(&inst.w, &inst.stats(), &inst.sel, &spec, &cfg, CUE_BIN).unwrap().value;
            prop_assert!(v >= 0.0);
        }
        prop_assert!(costs::j_ipd(&inst.w, &inst.phi_vv, &inst.sel).unwrap().value >= 0.0);
        prop_assert!(costs::j_ic(&inst.w, &inst.phi_vv, &inst.sel).unwrap().value >= 0.0);
    }

    #[test]
    fn penalties_ignore_positive_scaling(seed in any::<u64>(), c in 0.01f64..100.0) {
        let inst = Instance::new(seed, 2);
        let mut scaled = inst.w.clone();
        scaled.left = scaled.left.scale(c);
        for f in [costs::j_ipd, costs::j_ic] {
            let a = f(&inst.w, &inst.phi_vv, &inst.sel).unwrap().value;
            let b = f(&scaled, &inst.phi_vv, &inst.sel).unwrap().value;
            prop_assert!((a - b).abs() <= 1e-9 * a.max(1e-6));
        }
    }

    #[test]
    fn ic_matches_ipd_to_first_order(seed in any::<u64>(), delta in prop::sample::select(vec![0.01, 0.05, 0.1])) {
        let mut g = gen(seed);
        let sel = Selector::binaural(2);
        let phi_vv = rank_one(&cvec(&mut g, 4), 1.0);
        let mut w = filters(&mut g, 4);
        let identity = BinFilters::identity(&sel);
        // align the output IPD with the input before offsetting it
        let out = cuemwf_core::linalg::sesquilinear(&w.left, &phi_vv, &w.right).arg();
        let inp = cuemwf_core::linalg::sesquilinear(&identity.left, &phi_vv, &identity.right).arg();
        w.right = w.right.map(|z| z * C64::from_polar(1.0, inp - out - delta));
        let ipd = costs::j_ipd(&w, &phi_vv, &sel).unwrap().value;
        let ic = costs::j_ic(&w, &phi_vv, &sel).unwrap().value;
        prop_assert!((ipd - delta * delta).abs() < 1e-9);
        prop_assert!((ic - ipd).abs() / ipd < 0.05);
    }
}

#[test]
fn identity_filters_carry_no_penalty() {
    let inst = Instance::new(3, 2);
    let id = BinFilters::identity(&inst.sel);
    assert!(costs::j_ipd(&id, &inst.phi_vv, &inst.sel).unwrap().value.abs() < 1e-20);
    assert!(costs::j_ic(&id, &inst.phi_vv, &inst.sel).unwrap().value.abs() < 1e-20);
    let cfg = StftConfig::default();
    let spec = CostSpec::new(Variant::MwfIc, 0.8);
    let c = costs::combined(&id, &inst.stats(), &inst.sel, &spec, &cfg, CUE_BIN).unwrap().value;
    let w = costs::j_w(&id, &inst.stats(), &inst.sel).unwrap().value;
    assert!((c - w).abs() <= 1e-12 * w);
}

#[test]
fn penalty_gated_above_cue_band() {
    let inst = Instance::new(4, 2);
    let cfg = StftConfig::default();
    let spec = CostSpec::new(Variant::MwfItd, 1e3);
    let c = costs::combined(&inst.w, &inst.stats(), &inst.sel, &spec, &cfg, 100).unwrap().value;
    let w = costs::j_w(&inst.w, &inst.stats(), &inst.sel).unwrap().value;
    assert_eq!(c, w);
}

#[test]
fn incoherent_output_against_coherent_input() {
    use cuemwf_core::linalg::CVec;
    let sel = Selector::binaural(2);
    let c = |re: f64, im: f64| C64::new(re, im);
    let h = CVec::from_vec(vec![c(1.0, 0.0), c(0.0, 0.0), c(0.3, 0.8), c(0.5, 0.0)]);
    let mut phi_vv = rank_one(&h, 1.0);
    phi_vv[(1, 1)] += c(1.0, 0.0);
    phi_vv[(3, 3)] += c(1.0, 0.0);
    let unit = |i: usize| CVec::from_fn(4, |r, _| if r == i { c(1.0, 0.0) } else { c(0.0, 0.0) });
    let w = BinFilters { left: unit(1), right: unit(3) };
    let v = costs::j_ic(&w, &phi_vv, &sel).unwrap();
    assert!((v.value - 1.0).abs() < 1e-12);
}
