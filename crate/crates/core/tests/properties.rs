use std::path::Path;

use diffdc_core::data::Tensor;
use diffdc_core::forward::MeasurementOp;
use diffdc_core::masks::{
    center_count, center_range, generate, MaskParams, MaskPattern, SamplingMask,
};
use diffdc_core::metrics::{evaluate_batch, ssim, DataRange, MetricConfig, SsimWindow};
use diffdc_core::numerics::{
    dft2_centered, gaussian_image, idft2_centered, ComplexImage, RandomSource, RealImage,
};
use diffdc_core::schedule::ScheduleParams;
use diffdc_core::KSpaceMeasurement;
use proptest::prelude::*;

fn complex(seed: u64, h: usize, w: usize) -> ComplexImage {
    let mut rng = RandomSource::new(seed);
    let re = gaussian_image(&mut rng, h, w);
    let im = gaussian_image(&mut rng, h, w);
    ComplexImage::from_parts(&re, &im).unwrap()
}

fn max_diff(a: &ComplexImage, b: &ComplexImage) -> f64 {
    a.data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}

fn bernoulli_mask(seed: u64, h: usize, w: usize) -> SamplingMask {
    let mut rng = RandomSource::new(seed);
    SamplingMask::from_keep(h, w, (0..h * w).map(|_| rng.uniform() < 0.4).collect()).unwrap()
}

fn pattern() -> impl Strategy<Value = MaskPattern> {
    prop::sample::select(MaskPattern::ALL.to_vec())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn dft_is_linear(h in 1usize..13, w in 1usize..13, seed: u64, a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let x = complex(seed, h, w);
        let y = complex(seed ^ 1, h, w);
        let combo = x.zip_map(&y, |p, q| a * p + b * q);
        let (fx, fy) = (dft2_centered(&x).unwrap(), dft2_centered(&y).unwrap());
        let want = fx.zip_map(&fy, |p, q| a * p + b * q);
        prop_assert!(max_diff(&dft2_centered(&combo).unwrap(), &want) < 1e-10);
    }

    #[test]
    fn dft_preserves_energy_and_inverts(h in 1usize..17, w in 1usize..17, seed: u64) {
        let x = complex(seed, h, w);
        let f = dft2_centered(&x).unwrap();
        prop_assert!((f.norm() - x.norm()).abs() < 1e-10 * x.norm().max(1.0));
        prop_assert!(max_diff(&idft2_centered(&f).unwrap(), &x) < 1e-10);
    }

    #[test]
    fn dc_update_is_affine(h in 2usize..12, w in 2usize..12, seed: u64, lambda in -2.0f64..2.0, step in 0.0f64..=1.0) {
        let op = MeasurementOp::new(bernoulli_mask(seed, h, w));
        let b = KSpaceMeasurement::new(complex(seed ^ 2, h, w), op.mask().clone(), 0.0).unwrap();
        let (y1, y2) = (complex(seed ^ 3, h, w), complex(seed ^ 4, h, w));
        let mix = |p: &ComplexImage, q: &ComplexImage| {
            p.zip_map(q, |u, v| lambda * u + (1.0 - lambda) * v)
        };
        let lhs = op.dc_update_complex(&mix(&y1, &y2), &b, step).unwrap();
        let rhs = mix(
            &op.dc_update_complex(&y1, &b, step).unwrap(),
            &op.dc_update_complex(&y2, &b, step).unwrap(),
        );
        prop_assert!(max_diff(&lhs, &rhs) < 1e-10);
    }

    #[test]
    fn masks_are_deterministic_and_keep_the_center(
        p in pattern(), h in 16usize..40, w in 16usize..40, accel in 2.0f64..6.0, seed: u64,
    ) {
        let params = MaskParams::default();
        let m = generate(p, h, w, accel, seed, &params).unwrap();
        prop_assert_eq!(&m, &generate(p, h, w, accel, seed, &params).unwrap());
        let cols = center_range(w, center_count(w, params.center_fraction));
        let rows = match p {
            MaskPattern::G1d | MaskPattern::Uniform1d => 0..h,
            _ => center_range(h, center_count(h, params.center_fraction)),
        };
        for r in rows {
            for c in cols.clone() {
                prop_assert!(m.is_kept(r, c));
            }
        }
    }

    #[test]
    fn g1d_keeps_the_nominal_column_count(h in 8usize..24, w in 16usize..96, accel in 1.5f64..8.0, seed: u64) {
        let params = MaskParams::default();
        let m = generate(MaskPattern::G1d, h, w, accel, seed, &params).unwrap();
        let want = ((w as f64 / accel).round() as usize).max(center_count(w, params.center_fraction));
        prop_assert_eq!(m.full_columns().len(), want);
        prop_assert_eq!(m.count(), want * h);
    }

    #[test]
    fn alpha_bar_decreases(timesteps in 2usize..400, start in 1e-5f64..1e-2, extra in 0.0f64..0.3) {
        let s = ScheduleParams { timesteps, beta_start: start, beta_end: start + extra }.build().unwrap();
        for t in 1..timesteps {
            prop_assert!(s.alpha_bar(t + 1) < s.alpha_bar(t));
        }
        prop_assert!(s.alpha_bar(timesteps) > 0.0 && s.alpha_bar(1) < 1.0);
    }

    #[test]
    fn ssim_is_symmetric_and_bounded(h in 7usize..20, w in 7usize..20, seed: u64, gaussian: bool) {
        let window = if gaussian { SsimWindow::Gaussian } else { SsimWindow::Uniform };
        prop_assume!(!gaussian || (h >= 11 && w >= 11));
        let mut rng = RandomSource::new(seed);
        let a = gaussian_image(&mut rng, h, w);
        let b = gaussian_image(&mut rng, h, w).zip_map(&a, |x, y| 0.5 * x + y);
        let ab = ssim(&a, &b, 4.0, window).unwrap();
        let ba = ssim(&b, &a, 4.0, window).unwrap();
        prop_assert!((ab - ba).abs() < 1e-12);
        prop_assert!((-1.0..=1.0).contains(&ab));
    }

    #[test]
    fn batch_metrics_ignore_order(n in 1usize..8, seed: u64, shift in 0usize..8) {
        let mut rng = RandomSource::new(seed);
        let pairs: Vec<(RealImage, RealImage)> = (0..n)
            .map(|_| {
                let t = gaussian_image(&mut rng, 9, 9).map(|v| 0.5 + 0.1 * v);
                let r = gaussian_image(&mut rng, 9, 9).zip_map(&t, |e, v| v + 0.05 * e);
                (t, r)
            })
            .collect();
        let mut rotated = pairs.clone();
        rotated.rotate_left(shift % n);
        let cfg = MetricConfig { data_range: DataRange::Fixed(1.0), window: SsimWindow::Uniform };
        let (a, b) = (evaluate_batch(&pairs, &cfg).unwrap(), evaluate_batch(&rotated, &cfg).unwrap());
        prop_assert!((a.psnr_mean - b.psnr_mean).abs() < 1e-9);
        prop_assert!((a.ssim_mean - b.ssim_mean).abs() < 1e-12);
        prop_assert!((a.psnr_std - b.psnr_std).abs() < 1e-9);
    }

    #[test]
    fn tensors_round_trip(h in 1usize..9, w in 1usize..9, seed: u64) {
        let x = complex(seed, h, w);
        let path = Path::new("memory");
        let t = Tensor::from_complex_image(&x);
        let (back, used) = Tensor::decode(&t.encode(), path).unwrap();
        prop_assert_eq!(used, t.encode().len());
        prop_assert_eq!(back.to_complex_image().unwrap(), x.clone());
        let real = Tensor::from_real_image(&x.real());
        prop_assert_eq!(Tensor::decode(&real.encode(), path).unwrap().0.to_real_image().unwrap(), x.real());
        let mask = bernoulli_mask(seed, h, w);
        prop_assert_eq!(Tensor::decode(&Tensor::from_mask(&mask).encode(), path).unwrap().0.to_mask().unwrap(), mask);
    }
}

#[test]
fn zero_step_leaves_state_untouched() {
    let op = MeasurementOp::new(bernoulli_mask(1, 6, 5));
    let b = KSpaceMeasurement::new(complex(2, 6, 5), op.mask().clone(), 0.0).unwrap();
    let y = complex(3, 6, 5);
    assert_eq!(op.dc_update_complex(&y, &b, 0.0).unwrap(), y);
}
