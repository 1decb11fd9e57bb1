mod common;

use common::*;
use cuemwf_core::costs::{BinFilters, FilterPair};
use cuemwf_core::linalg::{self, CMat};
use cuemwf_core::metrics::{delta_itd, delta_msc, Evaluator};
use cuemwf_core::scene::{self, ArrayGeometry, SceneSpec};
use cuemwf_core::spatial::{covariance, estimate_coherence, input_cues, output_cues, wrap_angle, BinCue, Selector};
use cuemwf_core::stft::{analyze, StftConfig};
use cuemwf_core::{C64, CUE_CUTOFF_HZ};
use proptest::prelude::*;

fn random_pair(g: &mut rand_chacha::ChaCha8Rng, bins: usize) -> FilterPair {
    FilterPair { bins: (0..bins).map(|_| filters(g, 4)).collect() }
}

fn rank_one_scene(seed: u64) -> scene::Scene {
    let cfg = StftConfig::default();
    let speech = scene::speech_like_signal(2.0, cfg.sample_rate, seed);
    let spec = SceneSpec { sensor_noise_db: None, seed, ..SceneSpec::default() };
    scene::synthesize_scene(&speech, &spec, &ArrayGeometry { mics_per_ear: 2, ..ArrayGeometry::default() }, &cfg).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn coherence_magnitude_bounded(seed in any::<u64>()) {
        let mut g = gen(seed);
        let cfg = StftConfig::default();
        let phi: Vec<CMat> = (0..cfg.bin_count()).map(|_| psd(&mut g, 4, 0.0)).collect();
        let pair = random_pair(&mut g, cfg.bin_count());
        let cues = output_cues(&phi, &pair, &cfg, CUE_CUTOFF_HZ);
        for k in cues.valid_bins() {
            prop_assert!(cues.ic[k].norm() <= 1.0 + 1e-9);
            prop_assert!(cues.ipd[k] > -std::f64::consts::PI && cues.ipd[k] <= std::f64::consts::PI);
        }
    }

    #[test]
    fn cues_scale_invariant(seed in any::<u64>(), c in 1e-6f64..1e6) {
        let mut g = gen(seed);
        let cfg = StftConfig::default();
        let sel = Selector::binaural(2);
        let phi: Vec<CMat> = (0..cfg.bin_count()).map(|_| psd(&mut g, 4, 0.01)).collect();
        let scaled: Vec<CMat> = phi.iter().map(|m| m.scale(c)).collect();
        let a = input_cues(&phi, &sel, &cfg, CUE_CUTOFF_HZ);
        let b = input_cues(&scaled, &sel, &cfg, CUE_CUTOFF_HZ);
        for k in a.valid_bins() {
            prop_assert!(wrap_angle(a.ipd[k] - b.ipd[k]).abs() < 1e-12);
            prop_assert!((a.ic[k] - b.ic[k]).norm() < 1e-12);
        }
    }

    #[test]
    fn right_rotation_shifts_ipd(seed in any::<u64>(), phi_rot in -3.0f64..3.0) {
        let mut g = gen(seed);
        let p = psd(&mut g, 4, 0.01);
        let w = filters(&mut g, 4);
        let rotated = w.right.map(|z| z * C64::from_polar(1.0, phi_rot));
        let a = BinCue::compute(&p, &w.left, &w.right);
        let b = BinCue::compute(&p, &w.left, &rotated);
        prop_assert!(wrap_angle(b.cross.arg() - a.cross.arg() - phi_rot).abs() < 1e-9);
        prop_assert!((a.ic().norm() - b.ic().norm()).abs() < 1e-12);
    }

    #[test]
    fn deltas_ignore_filter_scaling(seed in any::<u64>(), c in 0.01f64..100.0) {
        let mut g = gen(seed);
        let cfg = StftConfig::default();
        let phi: Vec<CMat> = (0..cfg.bin_count()).map(|_| psd(&mut g, 4, 0.01)).collect();
        let sel = Selector::binaural(2);
        let pair = random_pair(&mut g, cfg.bin_count());
        let mut scaled = pair.clone();
        for w in &mut scaled.bins {
            w.right = w.right.scale(c);
        }
        let inp = input_cues(&phi, &sel, &cfg, CUE_CUTOFF_HZ);
        let a = output_cues(&phi, &pair, &cfg, CUE_CUTOFF_HZ);
        let b = output_cues(&phi, &scaled, &cfg, CUE_CUTOFF_HZ);
        prop_assert!((delta_itd(&inp, &a).unwrap() - delta_itd(&inp, &b).unwrap()).abs() < 1e-12);
        prop_assert!((delta_msc(&inp, &a).unwrap() - delta_msc(&inp, &b).unwrap()).abs() < 1e-12);
    }
}

#[test]
fn identity_filters_reproduce_input_cues() {
    let mut g = gen(1);
    let cfg = StftConfig::default();
    let sel = Selector::binaural(2);
    let phi: Vec<CMat> = (0..cfg.bin_count()).map(|_| psd(&mut g, 4, 0.01)).collect();
    let a = input_cues(&phi, &sel, &cfg, CUE_CUTOFF_HZ);
    let b = output_cues(&phi, &FilterPair::identity(&sel, cfg.bin_count()), &cfg, CUE_CUTOFF_HZ);
    assert_eq!(a, b);
    let same = BinFilters { left: sel.q_left(), right: sel.q_left() };
    let c = BinCue::compute(&phi[3], &same.left, &same.right);
    assert!(c.cross.arg().abs() < 1e-15);
    assert!((c.ic().norm() - 1.0).abs() < 1e-12);
}

#[test]
fn white_channels_estimate_identity() {
    let cfg = StftConfig::default();
    let mut g = gen(2);
    let x: Vec<Vec<f64>> = (0..4).map(|_| signal(&mut g, 64 * 16000)).collect();
    let spec = analyze(&x, &cfg).unwrap();
    let phi = covariance(&spec, |_| true);
    for (k, p) in phi.iter().enumerate().skip(1).take(cfg.bin_count() - 2) {
        let mean = linalg::trace_re(p) / 4.0;
        let off = (p - CMat::identity(4, 4).map(|z| z * mean)).iter().fold(0.0f64, |m, z| m.max(z.norm())) / mean;
        assert!(off < 0.05, "bin {k}: {off}");
        assert!(linalg::hermitian_defect(p) <= 1e-12 * mean);
    }
}

#[test]
fn directional_noise_is_rank_one() {
    let sc = rank_one_scene(3);
    assert!(sc.vad.active_count() > 0 && sc.vad.inactive_count() > 0);
    let cfg = sc.v.config().clone();
    let sel = Selector::binaural(2);
    let phi = covariance(&sc.v, |_| true);
    assert!(sc.v.frames() >= 200);
    let cues = input_cues(&phi, &sel, &cfg, CUE_CUTOFF_HZ);
    let hv = scene::steering_vector(&ArrayGeometry { mics_per_ear: 2, ..ArrayGeometry::default() }, 30.0, 3.0, &cfg).unwrap();
    for k in cues.valid_bins() {
        let ev = linalg::eigenvalues_desc(&phi[k]);
        assert!(ev[1] / ev[0] < 1e-3, "bin {k}");
        let h = hv.at(k);
        let expect = (h[sel.left] * h[sel.right].conj()).arg();
        assert!(wrap_angle(cues.ipd[k] - expect).abs() < 1e-9, "bin {k}");
        assert!(cues.ic[k].norm() > 0.999);
    }
}

#[test]
fn scenes_are_deterministic() {
    let a = rank_one_scene(4);
    let b = rank_one_scene(4);
    assert_eq!(a.v.data(), b.v.data());
    assert_eq!(a.y.data(), b.y.data());
    let c = rank_one_scene(5);
    assert_ne!(a.v.data(), c.v.data());
}

#[test]
fn identity_filters_leave_cues_untouched() {
    let sc = rank_one_scene(6);
    let sel = Selector::binaural(2);
    let ev = Evaluator::new(&sc.x, &sc.v, &sc.vad, sel, CUE_CUTOFF_HZ).unwrap();
    let r = ev.evaluate(&FilterPair::identity(&sel, sc.x.bins())).unwrap();
    assert_eq!([r.ditd_s, r.ditd_n, r.dmsc_s, r.dmsc_n], [0.0; 4]);
    assert_eq!([r.disnr_l, r.disnr_r], [0.0; 2]);
    let set = estimate_coherence(&sc.y, &sc.vad).unwrap();
    assert_eq!(set.bins(), sc.y.bins());
}
