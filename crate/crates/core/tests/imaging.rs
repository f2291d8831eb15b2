use std::f64::consts::PI;

use myriadkit::distributions::wrap_angle;
use myriadkit::imaging::{
    add_student_t_noise, add_wrapped_cauchy_noise, circular_distance, encode_f64, encode_pgm, parse_f64, parse_pgm,
    psnr, read_f64, read_pgm, s1_mse, ssim, synthetic_piecewise_constant, synthetic_piecewise_constant_s1,
    write_f64, write_pgm, Raster,
};
use myriadkit::{Error, Image, S1Image};
use proptest::prelude::*;
use statrs::distribution::{ContinuousCDF, StudentsT};

fn ks_statistic(mut xs: Vec<f64>, cdf: impl Fn(f64) -> f64) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max((f - (i + 1) as f64 / n).abs())
        })
        .fold(0.0, f64::max)
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    0.5 * (xs[(n - 1) / 2] + xs[n / 2])
}

fn gradient_pair() -> (Image, Image) {
    let a = Image::from_fn(64, 64, |r, c| ((r * 3 + c * 5) % 256) as f64).unwrap();
    let b = Image::from_fn(64, 64, |r, c| {
        let v = ((r * 3 + c * 5) % 256) as f64 + ((r * 7 + c * 11) % 13) as f64 - 6.0;
        v.clamp(0.0, 255.0)
    })
    .unwrap();
    (a, b)
}

// Reference values computed with scikit-image `structural_similarity`
// (gaussian_weights, sigma 1.5, population covariance, data_range 255).
#[test]
fn ssim_matches_reference_implementation() {
    let (a, b) = gradient_pair();
    let got = ssim(&a, &b).unwrap();
    assert!((got - 0.9489767018415627).abs() < 1e-12, "{got}");

    let flat = Image::constant(64, 64, a.pixels().iter().sum::<f64>() / 4096.0).unwrap();
    let got = ssim(&a, &flat).unwrap();
    assert!(got > 0.0 && got < 1.0);
    assert!((got - 0.3134040265546903).abs() < 1e-12, "{got}");
}

#[test]
fn ssim_basic_properties() {
    let (a, b) = gradient_pair();
    assert_eq!(ssim(&a, &a).unwrap(), 1.0);
    assert!((ssim(&a, &b).unwrap() - ssim(&b, &a).unwrap()).abs() < 1e-15);
    let small = Image::constant(10, 10, 1.0).unwrap();
    assert!(matches!(ssim(&small, &small), Err(Error::TooSmall(10, 10))));
    let other = Image::constant(65, 64, 1.0).unwrap();
    assert!(matches!(ssim(&a, &other), Err(Error::ShapeMismatch(..))));
}

#[test]
fn psnr_of_constant_offset() {
    let u = synthetic_piecewise_constant(32, 32).unwrap();
    let shifted = |c: f64| u.with_pixels(u.pixels().iter().map(|v| v + c).collect()).unwrap();
    let p = psnr(&u, &shifted(10.0)).unwrap();
    assert!((p - 28.130803608679106).abs() < 1e-10, "{p}");
    assert!((p - 20.0 * 25.5f64.log10()).abs() < 1e-12);
    assert_eq!(psnr(&u, &shifted(-10.0)).unwrap(), p);
    let mut last = f64::INFINITY;
    for c in [0.5, 1.0, 2.0, 5.0, 10.0, 40.0] {
        let q = psnr(&u, &shifted(c)).unwrap();
        assert!(q < last);
        last = q;
    }
    assert_eq!(psnr(&u, &u).unwrap(), f64::INFINITY);
}

#[test]
fn cauchy_noise_is_centered() {
    let zero = Image::constant(1000, 1000, 0.0).unwrap();
    let f = add_student_t_noise(&zero, 1.0, 10.0, 7).unwrap();
    let m = median(f.pixels().to_vec());
    assert!(m.abs() <= 0.1, "{m}");
}

#[test]
fn near_gaussian_noise_has_the_right_scale() {
    let zero = Image::constant(1000, 1000, 0.0).unwrap();
    let f = add_student_t_noise(&zero, 1e6, 10.0, 8).unwrap();
    let n = f.pixels().len() as f64;
    let mean = f.pixels().iter().sum::<f64>() / n;
    let var = f.pixels().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    assert!((var.sqrt() - 10.0).abs() <= 0.1, "{}", var.sqrt());
}

#[test]
fn student_noise_passes_ks() {
    let zero = Image::constant(1000, 1000, 0.0).unwrap();
    for (nu, seed) in [(1.0, 1), (3.0, 2), (10.0, 3)] {
        let f = add_student_t_noise(&zero, nu, 10.0, seed).unwrap();
        let oracle = StudentsT::new(0.0, 10.0, nu).unwrap();
        let ks = ks_statistic(f.into_pixels(), |x| oracle.cdf(x));
        assert!(ks <= 0.01, "nu {nu}: {ks}");
    }
}

#[test]
fn wrapped_cauchy_noise_passes_ks() {
    let gamma: f64 = 0.1;
    let rho = (-gamma).exp();
    let k = (1.0 + rho) / (1.0 - rho);
    // WC(0, ρ) distribution function on [−π, π).
    let cdf = |t: f64| 0.5 + (k * (t / 2.0).tan()).atan() / PI;
    let zero = S1Image::new(1000, 1000, vec![0.0; 1_000_000]).unwrap();
    let f = add_wrapped_cauchy_noise(&zero, gamma, 4).unwrap();
    assert!(f.angles().iter().all(|&t| (-PI..PI).contains(&t)));
    let ks = ks_statistic(f.into_angles(), cdf);
    assert!(ks <= 0.01, "{ks}");

    // Non-zero clean values shift the distribution.
    let clean = S1Image::new(100, 100, vec![3.0; 10_000]).unwrap();
    let f = add_wrapped_cauchy_noise(&clean, gamma, 5).unwrap();
    let ks = ks_statistic(f.angles().iter().map(|&t| wrap_angle(t - 3.0)).collect(), cdf);
    assert!(ks <= 0.03, "{ks}");
}

#[test]
fn noise_is_reproducible_and_tiny_scale_is_identity() {
    let u = synthetic_piecewise_constant(40, 30).unwrap();
    let a = add_student_t_noise(&u, 2.0, 10.0, 99).unwrap();
    let b = add_student_t_noise(&u, 2.0, 10.0, 99).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, add_student_t_noise(&u, 2.0, 10.0, 100).unwrap());
    assert_eq!(add_student_t_noise(&u, 5.0, 1e-300, 1).unwrap(), u);

    let v = synthetic_piecewise_constant_s1(40, 30).unwrap();
    assert_eq!(add_wrapped_cauchy_noise(&v, 0.3, 4).unwrap(), add_wrapped_cauchy_noise(&v, 0.3, 4).unwrap());
}

#[test]
fn noise_rejects_bad_parameters() {
    let u = Image::constant(4, 4, 0.0).unwrap();
    assert!(matches!(add_student_t_noise(&u, 0.5, 1.0, 0), Err(Error::InvalidNu(_))));
    assert!(add_student_t_noise(&u, 2.0, 0.0, 0).is_err());
    let v = S1Image::new(4, 4, vec![0.0; 16]).unwrap();
    assert!(add_wrapped_cauchy_noise(&v, 0.0, 0).is_err());
}

#[test]
fn s1_mse_examples() {
    let a = S1Image::new(2, 1, vec![3.0, -3.0]).unwrap();
    let b = S1Image::new(2, 1, vec![-3.0, 0.0]).unwrap();
    let want = ((2.0 * PI - 6.0).powi(2) + 9.0) / 2.0;
    assert!((s1_mse(&a, &b).unwrap() - want).abs() < 1e-12);
}

#[test]
fn truncated_pgm_is_rejected() {
    let mut bytes = b"P5\n4 4\n255\n".to_vec();
    bytes.extend_from_slice(&[7; 15]);
    assert!(matches!(parse_pgm(&bytes), Err(Error::MalformedHeader(_))));
    bytes.push(7);
    assert_eq!(parse_pgm(&bytes).unwrap().pixels(), &[7.0; 16]);
}

#[test]
fn pgm_header_variants() {
    let bytes = b"P5 # comment\n2\t1 # more\n65535\n\x01\x02\xff\xff".to_vec();
    let img = parse_pgm(&bytes).unwrap();
    assert_eq!(img.pixels(), &[258.0, 65535.0]);
    assert_eq!(img.peak(), 65535.0);
    for bad in [&b"P2\n1 1\n255\n\x00"[..], b"P5\n0 1\n255\n", b"P5\n1 1\n0\n\x00", b"P5\n1 1\n70000\n\x00\x00", b"P5\n1 1\n255"] {
        assert!(matches!(parse_pgm(bad), Err(Error::MalformedHeader(_))), "{:?}", String::from_utf8_lossy(bad));
    }
}

#[test]
fn pgm_writer_clamps_and_counts() {
    let img = Image::new(3, 1, vec![-4.0, 2.5, 300.0]).unwrap();
    let (bytes, clamped) = encode_pgm(&img).unwrap();
    assert_eq!(clamped, 2);
    assert_eq!(parse_pgm(&bytes).unwrap().pixels(), &[0.0, 2.0, 255.0]);
    let odd = Image::constant(2, 2, 1.0).unwrap().with_peak(1.5).unwrap();
    assert!(encode_pgm(&odd).is_err());
}

#[test]
fn files_round_trip_on_disk() {
    let dir = tempfile::tempdir().unwrap();
    let u = synthetic_piecewise_constant(20, 12).unwrap();
    let p = dir.path().join("u.pgm");
    assert_eq!(write_pgm(&u, &p).unwrap(), 0);
    assert_eq!(read_pgm(&p).unwrap(), u);

    let v = Raster::Circular(synthetic_piecewise_constant_s1(9, 7).unwrap());
    let q = dir.path().join("v.f64");
    write_f64(&v, &q).unwrap();
    assert_eq!(read_f64(&q).unwrap(), v);
    assert!(matches!(read_f64(&q).unwrap().into_image(), Err(Error::KindMismatch { .. })));
    assert!(read_pgm(dir.path().join("missing.pgm")).is_err());
}

#[test]
fn myr1_rejects_bad_headers() {
    let v = Raster::Real(Image::constant(3, 2, 1.5).unwrap());
    let good = encode_f64(&v);
    assert_eq!(good.len(), 24 + 48);
    let mut bad_magic = good.clone();
    bad_magic[0] = b'X';
    let mut bad_kind = good.clone();
    bad_kind[12] = 2;
    for bad in [&good[..20], &good[..good.len() - 1], &bad_magic[..], &bad_kind[..]] {
        assert!(matches!(parse_f64(bad), Err(Error::MalformedHeader(_))));
    }
}

fn pgm_image() -> impl Strategy<Value = Image> {
    (1usize..12, 1usize..12, prop_oneof![1u32..256, 256u32..=65535]).prop_flat_map(|(w, h, maxval)| {
        proptest::collection::vec(0..=maxval, w * h).prop_map(move |px| {
            Image::new(w, h, px.into_iter().map(f64::from).collect())
                .unwrap()
                .with_peak(f64::from(maxval))
                .unwrap()
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn pgm_round_trip(img in pgm_image()) {
        let (bytes, clamped) = encode_pgm(&img).unwrap();
        prop_assert_eq!(clamped, 0);
        prop_assert_eq!(parse_pgm(&bytes).unwrap(), img);
    }

    #[test]
    fn myr1_round_trip(w in 1usize..10, h in 1usize..10, seed in any::<u64>(), circular in any::<bool>()) {
        let vals: Vec<f64> = (0..w * h)
            .map(|i| ((seed.wrapping_mul(6364136223846793005).wrapping_add(i as u64) >> 11) as f64 / (1u64 << 53) as f64 - 0.5) * 6.0)
            .collect();
        let raster = if circular {
            Raster::Circular(S1Image::new(w, h, vals).unwrap())
        } else {
            Raster::Real(Image::new(w, h, vals.iter().map(|v| v * 1e5).collect()).unwrap())
        };
        prop_assert_eq!(parse_f64(&encode_f64(&raster)).unwrap(), raster);
    }

    #[test]
    fn fuzzed_pgm_never_panics(tail in proptest::collection::vec(any::<u8>(), 0..64), prefix in 0usize..4) {
        let mut bytes = [&b""[..], b"P5", b"P5\n", b"P5 3 2 "][prefix].to_vec();
        bytes.extend(tail);
        if let Err(e) = parse_pgm(&bytes) {
            prop_assert!(matches!(e, Error::MalformedHeader(_) | Error::InvalidParameter(_)), "{e:?}");
        }
    }

    #[test]
    fn fuzzed_myr1_never_panics(tail in proptest::collection::vec(any::<u8>(), 0..80)) {
        let mut bytes = b"MYR1".to_vec();
        bytes.extend(tail);
        let _ = parse_f64(&bytes);
    }

    #[test]
    fn s1_mse_is_rotation_invariant(c in -10.0f64..10.0, seed in 0u64..1000) {
        let u = synthetic_piecewise_constant_s1(12, 10).unwrap();
        let v = add_wrapped_cauchy_noise(&u, 0.5, seed).unwrap();
        let a = s1_mse(&u, &v).unwrap();
        let b = s1_mse(&u.rotated(c), &v.rotated(c)).unwrap();
        prop_assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn circular_distance_is_a_metric(a in -PI..PI, b in -PI..PI, c in -PI..PI) {
        let d = circular_distance;
        prop_assert!(d(a, b) <= PI && d(a, b) >= 0.0);
        prop_assert!((d(a, b) - d(b, a)).abs() < 1e-15);
        prop_assert!(d(a, c) <= d(a, b) + d(b, c) + 1e-12);
    }
}
