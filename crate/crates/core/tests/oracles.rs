//! Library results checked against independent brute-force computations.

mod common;

use std::f64::consts::PI;

use langdiar::backend::GpldaModel;
use langdiar::corpus::{synth_corpus, CorpusSpec, Manifest};
use langdiar::diarize::{ahc, smooth_contour, DistanceMatrix};
use langdiar::eval::{cpd_metrics, der, eer, jer, score};
use langdiar::Parallelism;
use proptest::prelude::*;
use rand::Rng;

use common::*;

#[test]
fn gplda_matches_sum_difference_form() {
    let mut r = rng(1);
    for dim in 1..=6 {
        let model = GpldaModel {
            sigma_w: random_spd(&mut r, dim, 1.0),
            sigma_b: random_spd(&mut r, dim, 1.5),
            mu: random_vector(&mut r, dim, 0.5),
        };
        let s = model.scorer().unwrap();
        for _ in 0..50 {
            let x = random_vector(&mut r, dim, 2.0);
            let y = random_vector(&mut r, dim, 2.0);
            let want = gplda_oracle(&model.sigma_w, &model.sigma_b, &model.mu, &x, &y);
            let got = s.distance(&x, &y).unwrap();
            assert!((got - want).abs() <= 1e-8 * (1.0 + want.abs()), "dim {dim}: {got} vs {want}");
        }
    }
}

/// Direct convolution with an explicitly mirrored copy of the input.
fn smooth_oracle(v: &[f64], h: usize) -> Vec<f64> {
    let n = v.len() as isize;
    let mirror = |i: isize| -> f64 {
        let i = if i < 0 { -i } else if i >= n { 2 * n - 2 - i } else { i };
        v[i as usize]
    };
    let w: Vec<f64> = (0..h)
        .map(|k| if h == 1 { 1.0 } else { 0.54 - 0.46 * (2.0 * PI * k as f64 / (h - 1) as f64).cos() })
        .collect();
    let total: f64 = w.iter().sum();
    let half = (h / 2) as isize;
    (0..n)
        .map(|i| (0..h).map(|k| w[k] * mirror(i - half + k as isize)).sum::<f64>() / total)
        .collect()
}

#[test]
fn smoothing_matches_direct_convolution() {
    let mut r = rng(2);
    for _ in 0..200 {
        let n: usize = r.random_range(1..80);
        let v: Vec<f64> = (0..n).map(|_| r.random_range(-5.0..5.0)).collect();
        let h = 2 * r.random_range(0..n.div_ceil(2)) + 1;
        let got = smooth_contour(&v, h).unwrap();
        for (a, b) in got.iter().zip(smooth_oracle(&v, h)) {
            assert!((a - b).abs() < 1e-12, "n {n} h {h}");
        }
    }
}

#[test]
fn ahc_matches_reference_on_arbitrary_matrices() {
    let mut r = rng(3);
    for _ in 0..300 {
        let n = r.random_range(2..=9);
        let d = DistanceMatrix::from_fn(n, |_, _| r.random_range(-1.0..4.0));
        for k in 1..=n {
            assert_eq!(ahc(&d, k).unwrap(), ahc_oracle(&d, k));
        }
    }
}

#[test]
fn metrics_match_grid_with_extra_classes() {
    for case in 0..60 {
        let mut r = rng(100 + case);
        let reference = random_layout(&mut r, &["A", "B", "C"], 12, 20_000);
        let hyp = random_layout(&mut r, &["p", "q", "s", "t"], 12, 20_000);
        let (od, oj) = der_jer_oracle(&reference, &hyp);
        assert!((der(&reference, &hyp).unwrap() - od).abs() < 1e-6, "case {case}");
        assert!((jer(&reference, &hyp).unwrap() - oj).abs() < 1e-6, "case {case}");
    }
}

#[test]
fn zero_collar_score_equals_plain_metrics() {
    let mut r = rng(4);
    for _ in 0..50 {
        let reference = random_layout(&mut r, &["A", "B"], 10, 30_000);
        let hyp = random_layout(&mut r, &["x", "y"], 10, 30_000);
        let s = score(&reference, &hyp, 0.0).unwrap();
        assert_eq!(s.der, der(&reference, &hyp).unwrap());
        assert_eq!(s.jer, jer(&reference, &hyp).unwrap());
    }
}

#[test]
fn mscs_corpus_is_imbalanced() {
    let corpus = synth_corpus(&CorpusSpec::mscs().with_seed(5), 200, Parallelism::default()).unwrap();
    let m = Manifest::build(&CorpusSpec::mscs(), &corpus);
    let ratio = m.time_ratio().unwrap();
    assert!((ratio - 4.0).abs() <= 1.0, "primary:secondary {ratio}");
    for u in &corpus {
        assert_eq!(u.reference.segments()[0].label, "P");
        assert_eq!(u.reference.segments().len(), 7);
    }
}

#[test]
fn ttsf_durations_have_requested_median() {
    let corpus = synth_corpus(&CorpusSpec::ttsf().with_seed(6), 150, Parallelism::default()).unwrap();
    let mut d: Vec<f64> = corpus
        .iter()
        .flat_map(|u| u.reference.segments().iter().map(|s| s.duration))
        .collect();
    d.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median = d[d.len() / 2];
    assert!((median - 3.0).abs() <= 0.45, "median {median}");
}

#[test]
fn corpus_class_means_follow_separation() {
    let spec = CorpusSpec::ttsf().with_seed(7).with_separation(4.0);
    let u = &synth_corpus(&spec, 1, Parallelism::Sequential).unwrap()[0];
    let s = 4.0 / 2f64.sqrt();
    for c in 0..2 {
        let rows: Vec<usize> = (0..u.frame_classes.len()).filter(|&i| u.frame_classes[i] == Some(c)).collect();
        for j in 0..2 {
            let m = rows.iter().map(|&i| u.features.features[(i, j)]).sum::<f64>() / rows.len() as f64;
            let want = if j == c { s } else { 0.0 };
            assert!((m - want).abs() < 0.15, "class {c} dim {j}: {m}");
        }
    }
}

proptest! {
    #[test]
    fn eer_matches_sweep(t in prop::collection::vec(-20i32..20, 1..40), n in prop::collection::vec(-20i32..20, 1..40)) {
        let t: Vec<f64> = t.into_iter().map(f64::from).collect();
        let n: Vec<f64> = n.into_iter().map(f64::from).collect();
        prop_assert!((eer(&t, &n).unwrap() - eer_oracle(&t, &n)).abs() < 1e-9);
    }

    #[test]
    fn cpd_percentages_sum_to_100(
        r in prop::collection::btree_set(1u32..999, 1..10),
        h in prop::collection::btree_set(1u32..999, 0..15),
    ) {
        let r: Vec<f64> = r.into_iter().map(|x| x as f64 / 100.0).collect();
        let h: Vec<f64> = h.into_iter().map(|x| x as f64 / 100.0).collect();
        let c = cpd_metrics(&r, &h, (0.0, 10.0)).unwrap();
        prop_assert_eq!(c.idr + c.mr + c.far, 100.0);
        prop_assert!(c.far >= 0.0 && c.mr >= 0.0 && c.idr >= 0.0);
    }

    #[test]
    fn der_is_invariant_to_hypothesis_renaming(seed in 0u64..500) {
        let mut r = rng(seed);
        let reference = random_layout(&mut r, &["A", "B"], 8, 20_000);
        let hyp = random_layout(&mut r, &["x", "y"], 8, 20_000);
        let renamed = langdiar::diarize::Diarization::new(
            "u",
            hyp.segments()
                .iter()
                .map(|s| langdiar::diarize::Segment::new(s.onset, s.duration, if s.label == "x" { "y" } else { "x" }).unwrap())
                .collect(),
        );
        prop_assert!((der(&reference, &hyp).unwrap() - der(&reference, &renamed).unwrap()).abs() < 1e-9);
    }
}
