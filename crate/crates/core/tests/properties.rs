use facekit::fusion::{fit_llr, fuse_llr, fuse_weighted_sum, WeightedSumModel};
use facekit::imaging::{decode_pgm, encode_pgm_unscaled, histogram_equalize};
use facekit::ingi::anisotropic_diffuse;
use facekit::scoring::{score, Metric};
use facekit::subspace::{fit_lda, scatter_matrices, DataMatrix, FeatureVector};
use facekit::Image;
use nalgebra::DVector;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn image(max_side: usize) -> impl Strategy<Value = Image> {
    (2..=max_side, 2..=max_side).prop_flat_map(|(w, h)| {
        prop::collection::vec(0.0f64..=1.0, w * h).prop_map(move |px| Image::new(w, h, px).unwrap())
    })
}

fn vector(len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-10.0f64..10.0, len)
}

proptest! {
    #[test]
    fn histogram_equalization_is_monotone(img in image(12), levels in 2usize..300) {
        let out = histogram_equalize(&img, levels).unwrap();
        let (a, b) = (img.pixels(), out.pixels());
        for i in 0..a.len() {
            for j in 0..a.len() {
                if a[i] <= a[j] {
                    prop_assert!(b[i] <= b[j]);
                }
            }
        }
        prop_assert!(b.iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn scores_are_symmetric((a, b) in (1usize..20).prop_flat_map(|n| (vector(n), vector(n)))) {
        let (fa, fb) = (FeatureVector::new(a), FeatureVector::new(b));
        for m in [Metric::Cosine, Metric::NegEuclidean] {
            match (score(&fa, &fb, m), score(&fb, &fa, m)) {
                (Ok(x), Ok(y)) => prop_assert_eq!(x, y),
                (x, y) => prop_assert_eq!(x.is_err(), y.is_err()),
            }
        }
    }

    #[test]
    fn cosine_ignores_positive_scale(
        (a, b) in (1usize..20).prop_flat_map(|n| (vector(n), vector(n))),
        c in 0.01f64..100.0,
    ) {
        prop_assume!(a.iter().any(|v| *v != 0.0) && b.iter().any(|v| *v != 0.0));
        let scaled: Vec<f64> = a.iter().map(|v| v * c).collect();
        let s0 = score(&FeatureVector::new(a), &FeatureVector::new(b.clone()), Metric::Cosine).unwrap();
        let s1 = score(&FeatureVector::new(scaled), &FeatureVector::new(b), Metric::Cosine).unwrap();
        prop_assert!((s0 - s1).abs() < 1e-12);
    }

    #[test]
    fn weighted_sum_preserves_rank_under_common_eer_scale(
        pairs in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 2..30),
        e0 in 0.01f64..0.25,
        e1 in 0.01f64..0.25,
        k in 0.2f64..2.0,
    ) {
        let base = WeightedSumModel::new(vec![e0, e1]).unwrap();
        let scaled = WeightedSumModel::new(vec![e0 * k, e1 * k]).unwrap();
        let f = |m: &WeightedSumModel| -> Vec<f64> {
            pairs.iter().map(|&(a, b)| fuse_weighted_sum(&[a, b], m).unwrap()).collect()
        };
        let (x, y) = (f(&base), f(&scaled));
        for i in 0..x.len() {
            for j in 0..x.len() {
                // Scaling every EER by k divides the fused score by k.
                if (x[i] - x[j]).abs() > 1e-9 {
                    prop_assert_eq!(x[i] < x[j], y[i] < y[j]);
                }
            }
        }
    }

    #[test]
    fn llr_is_invariant_to_affine_reparameterization(seed in 0u64..1000, a in 0.1f64..10.0, b in -5.0f64..5.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let same: Vec<f64> = (0..30).map(|_| 1.0 + rng.random::<f64>()).collect();
        let diff: Vec<f64> = (0..30).map(|_| rng.random::<f64>() * 1.5).collect();
        let test: Vec<f64> = (0..10).map(|_| rng.random::<f64>() * 2.0).collect();
        let t = |v: &[f64]| -> Vec<f64> { v.iter().map(|s| a * s + b).collect() };
        let m0 = fit_llr(std::slice::from_ref(&same), std::slice::from_ref(&diff)).unwrap();
        let m1 = fit_llr(&[t(&same)], &[t(&diff)]).unwrap();
        for s in test {
            let l0 = fuse_llr(&[s], &m0).unwrap();
            let l1 = fuse_llr(&[a * s + b], &m1).unwrap();
            prop_assert!((l0 - l1).abs() < 1e-8 * (1.0 + l0.abs()), "{} vs {}", l0, l1);
        }
    }

    #[test]
    fn diffusion_conserves_mean_and_contracts_range(
        img in image(10),
        iters in 0usize..8,
        kappa in 0.01f64..1.0,
        lambda in 0.01f64..=0.25,
    ) {
        let out = anisotropic_diffuse(&img, iters, kappa, lambda).unwrap();
        prop_assert!((out.mean() - img.mean()).abs() <= 1e-10 * (iters.max(1) as f64));
        prop_assert!(out.min() >= img.min() - 1e-12);
        prop_assert!(out.max() <= img.max() + 1e-12);
    }

    #[test]
    fn pgm_round_trip(img in image(16)) {
        let back = decode_pgm(&encode_pgm_unscaled(&img)).unwrap();
        prop_assert_eq!(back.dims(), img.dims());
        for (a, b) in back.pixels().iter().zip(img.pixels()) {
            prop_assert!((a - b).abs() <= 0.5 / 65535.0 + 1e-15);
        }
    }
}

#[test]
fn fisher_direction_beats_random_directions() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let dim = 4;
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for c in 0..3 {
        let centre: Vec<f64> = (0..dim).map(|_| rng.random::<f64>() * 3.0).collect();
        for _ in 0..15 {
            rows.push(centre.iter().map(|m| m + rng.random::<f64>() - 0.5).collect::<Vec<_>>());
            labels.push(c);
        }
    }
    let data = DataMatrix::from_rows(&rows).unwrap().with_labels(labels).unwrap();
    let s = scatter_matrices(&data).unwrap();
    let quotient = |w: &DVector<f64>| (w.transpose() * &s.between * w)[0] / (w.transpose() * &s.within * w)[0];
    let model = fit_lda(&data, 1).unwrap();
    let best = quotient(&model.basis().column(0).into_owned());
    for _ in 0..100 {
        let w = DVector::from_fn(dim, |_, _| rng.random::<f64>() - 0.5);
        assert!(quotient(&w) <= best * (1.0 + 1e-9));
    }
}
