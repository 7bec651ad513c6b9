use faer::Mat;
use proptest::prelude::*;

use rfpde::basis::{eval_derivative, FeatureBasis, FeatureBlock, FeatureMap, MultiIndex};
use rfpde::operators::{apply, LinearOperator};
use rfpde::rng::{Stream, StreamRng};

fn points(m: usize, d: usize, seed: u64) -> Mat<f64> {
    let mut rng = StreamRng::new(seed, Stream::Probe);
    let mut x = Mat::<f64>::zeros(m, d);
    for i in 0..m {
        for k in 0..d {
            x[(i, k)] = rng.uniform_in(-1.0, 1.0);
        }
    }
    x
}

fn max_abs(m: &Mat<f64>) -> f64 {
    let mut v: f64 = 0.0;
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            v = v.max(m[(i, j)].abs());
        }
    }
    v
}

fn rel_diff(a: &Mat<f64>, b: &Mat<f64>) -> f64 {
    let mut v: f64 = 0.0;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            v = v.max((a[(i, j)] - b[(i, j)]).abs());
        }
    }
    v / max_abs(b).max(f64::MIN_POSITIVE)
}

fn alpha_strategy(d: usize, max_order: u32) -> impl Strategy<Value = Vec<u32>> {
    prop::collection::vec(0..=max_order, d).prop_filter("total order", move |a| a.iter().sum::<u32>() <= max_order)
}

fn case() -> impl Strategy<Value = (usize, f64, u64)> {
    (1usize..=4, 0.5f64..8.0, any::<u64>())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn four_more_orders_wrap_the_cycle(((d, sigma, seed), k, alpha) in case().prop_flat_map(|c| (Just(c), 0..c.0, alpha_strategy(c.0, 3)))) {
        let basis = FeatureBasis::sample(d, &[24], &[sigma], seed).unwrap();
        let x = points(30, d, seed ^ 1);
        let a = MultiIndex::new(alpha).unwrap();
        let base = eval_derivative(&basis, x.as_ref(), &a, None).unwrap();
        let up = eval_derivative(&basis, x.as_ref(), &a.raised(k, 4), None).unwrap();
        let want = Mat::from_fn(base.nrows(), base.ncols(), |i, j| basis.weight(j)[k].powi(4) * base[(i, j)]);
        prop_assert!(rel_diff(&up, &want) <= 1e-12);
    }

    #[test]
    fn derivatives_match_richardson_differences(((d, sigma, seed), alpha) in case().prop_flat_map(|c| (Just(c), alpha_strategy(c.0, 4)))) {
        let Some(k) = alpha.iter().position(|&o| o > 0) else { return Ok(()); };
        let basis = FeatureBasis::sample(d, &[16], &[sigma], seed).unwrap();
        let x = points(20, d, seed ^ 2);
        let exact = eval_derivative(&basis, x.as_ref(), &MultiIndex::new(alpha.clone()).unwrap(), None).unwrap();
        let mut lower = alpha;
        lower[k] -= 1;
        let lower = MultiIndex::new(lower).unwrap();
        let g = |t: f64| {
            let mut xs = x.clone();
            for i in 0..xs.nrows() {
                xs[(i, k)] += t;
            }
            eval_derivative(&basis, xs.as_ref(), &lower, None).unwrap()
        };
        let cd = |h: f64| {
            let (p, m) = (g(h), g(-h));
            Mat::from_fn(p.nrows(), p.ncols(), |i, j| (p[(i, j)] - m[(i, j)]) / (2.0 * h))
        };
        let h = 0.05 / sigma;
        let (c1, c2, c3) = (cd(h), cd(h / 2.0), cd(h / 4.0));
        let r1 = Mat::from_fn(c1.nrows(), c1.ncols(), |i, j| (4.0 * c2[(i, j)] - c1[(i, j)]) / 3.0);
        let r2 = Mat::from_fn(c1.nrows(), c1.ncols(), |i, j| (4.0 * c3[(i, j)] - c2[(i, j)]) / 3.0);
        let rich = Mat::from_fn(c1.nrows(), c1.ncols(), |i, j| (16.0 * r2[(i, j)] - r1[(i, j)]) / 15.0);
        prop_assert!(rel_diff(&rich, &exact) <= 1e-6);
    }

    #[test]
    fn laplacian_is_minus_squared_norm((d, sigma, seed) in case()) {
        let basis = FeatureBasis::sample(d, &[24], &[sigma], seed).unwrap();
        let x = points(30, d, seed ^ 3);
        let h = eval_derivative(&basis, x.as_ref(), &MultiIndex::zeros(d), None).unwrap();
        let lap = apply(&LinearOperator::laplacian(d).unwrap(), &basis, x.as_ref(), None).unwrap();
        let want = Mat::from_fn(h.nrows(), h.ncols(), |i, j| {
            -basis.weight(j).iter().map(|w| w * w).sum::<f64>() * h[(i, j)]
        });
        prop_assert!(rel_diff(&lap, &want) <= 1e-12);
    }

    #[test]
    fn quarter_wave_shift_gives_cosine((d, sigma, seed) in case()) {
        let basis = FeatureBasis::sample(d, &[24], &[sigma], seed).unwrap();
        let block = &basis.blocks()[0];
        let shifted = FeatureBlock::new(
            block.weights().to_vec(),
            block.biases().iter().map(|b| b + std::f64::consts::FRAC_PI_2).collect(),
            sigma,
            d,
        )
        .unwrap();
        let shifted = FeatureBasis::from_blocks(d, vec![shifted], true).unwrap();
        let x = points(30, d, seed ^ 4);
        let got = eval_derivative(&shifted, x.as_ref(), &MultiIndex::zeros(d), None).unwrap();
        let cache = basis.build_cache(x.as_ref()).unwrap();
        let s = basis.scale();
        let want = Mat::from_fn(got.nrows(), got.ncols(), |i, j| s * cache.cos[(i, j)]);
        prop_assert!(rel_diff(&got, &want) <= 1e-12);
    }

    #[test]
    fn operator_application_is_linear((d, sigma, seed) in case(), c in -3.0f64..3.0, v in prop::collection::vec(-2.0f64..2.0, 4)) {
        let basis = FeatureBasis::sample(d, &[24], &[sigma], seed).unwrap();
        let x = points(30, d, seed ^ 5);
        let a = LinearOperator::laplacian(d).unwrap();
        let b = LinearOperator::advection(&v[..d]).unwrap().add(&LinearOperator::identity(d).unwrap()).unwrap();
        let ma = apply(&a, &basis, x.as_ref(), None).unwrap();
        let mb = apply(&b, &basis, x.as_ref(), None).unwrap();
        let sum = apply(&a.add(&b).unwrap(), &basis, x.as_ref(), None).unwrap();
        let want = Mat::from_fn(ma.nrows(), ma.ncols(), |i, j| ma[(i, j)] + mb[(i, j)]);
        prop_assert!(rel_diff(&sum, &want) <= 1e-13);
        let scaled = apply(&a.scale(c), &basis, x.as_ref(), None).unwrap();
        let want = Mat::from_fn(ma.nrows(), ma.ncols(), |i, j| c * ma[(i, j)]);
        prop_assert!(rel_diff(&scaled, &want) <= 1e-13 || max_abs(&want) == 0.0);
    }

    #[test]
    fn laplacian_symmetric_under_axis_swap(seed in any::<u64>(), sigma in 0.5f64..8.0) {
        let d = 3;
        let basis = FeatureBasis::sample(d, &[24], &[sigma], seed).unwrap();
        let block = &basis.blocks()[0];
        let swap = |w: &[f64]| -> Vec<f64> { w.chunks(d).flat_map(|r| [r[2], r[0], r[1]]).collect() };
        let permuted = FeatureBlock::new(swap(block.weights()), block.biases().to_vec(), sigma, d).unwrap();
        let permuted = FeatureBasis::from_blocks(d, vec![permuted], true).unwrap();
        let x = points(30, d, seed ^ 6);
        let xp = Mat::from_fn(x.nrows(), d, |i, k| x[(i, [2, 0, 1][k])]);
        let lap = LinearOperator::laplacian(d).unwrap();
        let a = apply(&lap, &basis, x.as_ref(), None).unwrap();
        let b = apply(&lap, &permuted, xp.as_ref(), None).unwrap();
        prop_assert!(rel_diff(&a, &b) <= 1e-14);
    }

    #[test]
    fn cubic_reduction_on_cached_phases((d, sigma, seed) in case()) {
        let basis = FeatureBasis::sample(d, &[24], &[sigma], seed).unwrap();
        let x = points(30, d, seed ^ 7);
        let cache = basis.build_cache(x.as_ref()).unwrap();
        for j in 0..cache.phases.ncols() {
            for i in 0..cache.phases.nrows() {
                let (z, s) = (cache.phases[(i, j)], cache.sin[(i, j)]);
                prop_assert!((s.powi(3) - (3.0 * s - (3.0 * z).sin()) / 4.0).abs() <= 1e-12);
            }
        }
    }
}
