use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::landmarks::default_mouth_indices;

fn random_frame(w: usize, h: usize, lo: f32, hi: f32, rng: &mut ChaCha8Rng) -> RgbFrame {
    let data = (0..w * h * 3).map(|_| rng.random_range(lo..hi)).collect();
    RgbFrame::new(w, h, data).unwrap()
}

fn checkerboard(size: usize) -> RgbFrame {
    let mut f = RgbFrame::filled(size, size, [0.0; 3]);
    for y in 0..size {
        for x in 0..size {
            if (x + y) % 2 == 0 {
                f.set_pixel(x, y, [1.0; 3]);
            }
        }
    }
    f
}

fn inverted(f: &RgbFrame) -> RgbFrame {
    RgbFrame::new(f.width, f.height, f.data.iter().map(|v| 1.0 - v).collect()).unwrap()
}

#[test]
fn psnr_identical_is_capped() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let a = random_frame(8, 8, 0.0, 1.0, &mut rng);
    assert_eq!(psnr(&a, &a).unwrap(), PSNR_CAP);
}

#[test]
fn psnr_half_gray_against_black() {
    let a = RgbFrame::filled(16, 16, [0.0; 3]);
    let b = RgbFrame::filled(16, 16, [0.5; 3]);
    let expect = 10.0 * 4f64.log10();
    assert!((psnr(&a, &b).unwrap() - expect).abs() < 1e-4);
    assert!((psnr(&a, &b).unwrap() - 6.0206).abs() < 1e-4);
}

#[test]
fn psnr_drops_as_noise_grows() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..100 {
        let a = random_frame(8, 8, 0.25, 0.75, &mut rng);
        let noise: Vec<f32> = (0..a.data.len()).map(|_| rng.random_range(-0.1..0.1)).collect();
        let noisy = |s: f32| {
            RgbFrame::new(8, 8, a.data.iter().zip(&noise).map(|(v, n)| v + s * n).collect()).unwrap()
        };
        assert!(psnr(&a, &noisy(1.0)).unwrap() > psnr(&a, &noisy(2.0)).unwrap());
    }
}

#[test]
fn psnr_rejects_shape_mismatch() {
    let a = RgbFrame::filled(8, 8, [0.0; 3]);
    let b = RgbFrame::filled(8, 9, [0.0; 3]);
    assert!(psnr(&a, &b).is_err());
    assert!(ssim(&a, &b).is_err());
}

#[test]
fn ssim_of_identical_frames_is_one() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let a = random_frame(20, 17, 0.0, 1.0, &mut rng);
    assert_eq!(ssim(&a, &a).unwrap(), 1.0);
}

#[test]
fn ssim_of_inverted_checkerboard_is_negative() {
    let a = checkerboard(16);
    let s = ssim(&a, &inverted(&a)).unwrap();
    assert!(s < 0.0, "{s}");
}

#[test]
fn ssim_is_symmetric() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..10 {
        let a = random_frame(16, 16, 0.0, 1.0, &mut rng);
        let b = random_frame(16, 16, 0.0, 1.0, &mut rng);
        assert!((ssim(&a, &b).unwrap() - ssim(&b, &a).unwrap()).abs() < 1e-12);
    }
}

#[test]
fn ssim_rejects_tiny_frames() {
    let a = RgbFrame::filled(6, 6, [0.5; 3]);
    assert!(ssim(&a, &a).is_err());
}

/// Direct 2-D weighted window statistics, one window at a time.
fn ssim_oracle(a: &RgbFrame, b: &RgbFrame) -> f64 {
    let (la, lb) = (a.luma(), b.luma());
    let r = 3i64;
    let g: Vec<f64> = (-r..=r).map(|i| (-(i * i) as f64 / (2.0 * 1.5 * 1.5)).exp()).collect();
    let total: f64 = g.iter().sum::<f64>().powi(2);
    let (w, h) = (a.width as i64, a.height as i64);
    let mut acc = 0.0;
    let mut count = 0;
    for cy in r..h - r {
        for cx in r..w - r {
            let (mut ma, mut mb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for dy in -r..=r {
                for dx in -r..=r {
                    let wt = g[(dy + r) as usize] * g[(dx + r) as usize] / total;
                    let i = ((cy + dy) * w + cx + dx) as usize;
                    ma += wt * la[i];
                    mb += wt * lb[i];
                    saa += wt * la[i] * la[i];
                    sbb += wt * lb[i] * lb[i];
                    sab += wt * la[i] * lb[i];
                }
            }
            let (c1, c2) = (1e-4, 9e-4);
            acc += ((2.0 * ma * mb + c1) * (2.0 * (sab - ma * mb) + c2))
                / ((ma * ma + mb * mb + c1) * (saa - ma * ma + sbb - mb * mb + c2));
            count += 1;
        }
    }
    acc / count as f64
}

#[test]
fn ssim_matches_direct_window_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let a = random_frame(13, 11, 0.0, 1.0, &mut rng);
    let b = random_frame(13, 11, 0.0, 1.0, &mut rng);
    assert!((ssim(&a, &b).unwrap() - ssim_oracle(&a, &b)).abs() < 1e-12);
}

fn face(frames: usize, rng: &mut ChaCha8Rng) -> LandmarkSequence {
    let coords = (0..frames * 68)
        .map(|_| [rng.random_range(0.2..0.8), rng.random_range(0.2..0.8)])
        .collect();
    LandmarkSequence::new(frames, 68, coords, default_mouth_indices()).unwrap()
}

fn shifted(seq: &LandmarkSequence, dx: f32, dy: f32) -> LandmarkSequence {
    let coords = seq.coords().iter().map(|c| [c[0] + dx, c[1] + dy]).collect();
    LandmarkSequence::new(seq.frames(), seq.points(), coords, seq.mouth().to_vec()).unwrap()
}

#[test]
fn lmd_shift_three_four_is_five() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let gt = face(30, &mut rng);
    assert_eq!(lmd(&gt, &gt, None, 128).unwrap(), 0.0);
    let pred = shifted(&gt, 3.0 / 127.0, 4.0 / 127.0);
    assert!((lmd(&pred, &gt, None, 128).unwrap() - 5.0).abs() < 1e-4);
    assert!((m_lmd(&pred, &gt, 128).unwrap() - 5.0).abs() < 1e-4);
}

#[test]
fn full_subset_mouth_distance_equals_face_distance() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let a = face(4, &mut rng);
    let b = face(4, &mut rng);
    let all: Vec<usize> = (0..68).collect();
    assert_eq!(lmd(&a, &b, None, 128).unwrap(), lmd(&a, &b, Some(&all), 128).unwrap());
}

#[test]
fn lmd_rejects_mismatched_sequences() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    assert!(lmd(&face(3, &mut rng), &face(4, &mut rng), None, 128).is_err());
}

proptest! {
    #[test]
    fn lmd_is_translation_covariant(seed in 0u64..1000, dx in -0.1f32..0.1, dy in -0.1f32..0.1) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = face(2, &mut rng);
        let b = face(2, &mut rng);
        let base = lmd(&a, &b, None, 128).unwrap();
        let moved = lmd(&shifted(&a, dx, dy), &shifted(&b, dx, dy), None, 128).unwrap();
        prop_assert!((base - moved).abs() < 1e-3);
    }

    #[test]
    fn fid_is_never_negative(seed in 0u64..1000, n in 3usize..20) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = DMatrix::from_fn(n, 4, |_, _| rng.random_range(-1.0..1.0));
        let b = DMatrix::from_fn(n, 4, |_, _| rng.random_range(-2.0..1.0));
        prop_assert!(fid(&a, &b).unwrap().value >= 0.0);
    }
}

#[test]
fn fid_of_identical_sets_is_zero() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let a = DMatrix::from_fn(200, 6, |_, _| rng.random_range(-1.0..1.0));
    let r = fid(&a, &a).unwrap();
    assert!(r.value.abs() < 1e-6, "{}", r.value);
    assert!(!r.degenerate);
}

#[test]
fn fid_of_unit_gaussians_one_apart_is_one() {
    let stats = |m: f64| FidStats {
        mean: DVector::from_element(1, m),
        cov: DMatrix::from_element(1, 1, 1.0),
        samples: usize::MAX,
    };
    let r = fid_from_stats(&stats(0.0), &stats(1.0)).unwrap();
    assert!((r.value - 1.0).abs() < 1e-4);
}

#[test]
fn fid_matches_diagonal_closed_form() {
    let (ma, mb) = (DVector::from_vec(vec![0.0, 1.0, -2.0]), DVector::from_vec(vec![0.5, 1.0, 0.0]));
    let (va, vb) = ([1.0, 4.0, 0.25], [2.0, 1.0, 0.25]);
    let a = FidStats {
        mean: ma.clone(),
        cov: DMatrix::from_diagonal(&DVector::from_row_slice(&va)),
        samples: 1000,
    };
    let b = FidStats {
        mean: mb.clone(),
        cov: DMatrix::from_diagonal(&DVector::from_row_slice(&vb)),
        samples: 1000,
    };
    let expect: f64 = (&ma - &mb).norm_squared()
        + va.iter().zip(&vb).map(|(x, y): (&f64, &f64)| (x.sqrt() - y.sqrt()).powi(2)).sum::<f64>();
    assert!((fid_from_stats(&a, &b).unwrap().value - expect).abs() < 1e-9);
}

#[test]
fn rank_deficient_covariance_is_flagged() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let a = DMatrix::from_fn(3, 8, |_, _| rng.random_range(-1.0..1.0));
    let b = DMatrix::from_fn(3, 8, |_, _| rng.random_range(-1.0..1.0));
    let r = fid(&a, &b).unwrap();
    assert!(r.degenerate);
    assert!(r.value.is_finite() && r.value >= 0.0);
}

#[test]
fn sequence_metrics_ignore_frame_order_and_executor() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let a: Vec<_> = (0..5).map(|_| random_frame(12, 12, 0.0, 1.0, &mut rng)).collect();
    let b: Vec<_> = (0..5).map(|_| random_frame(12, 12, 0.0, 1.0, &mut rng)).collect();
    let (mut ra, mut rb) = (a.clone(), b.clone());
    ra.reverse();
    rb.reverse();
    let p = psnr_sequence(&a, &b, Exec::Sequential).unwrap();
    assert!((p - psnr_sequence(&ra, &rb, Exec::Parallel).unwrap()).abs() < 1e-9);
    let s = ssim_sequence(&a, &b, Exec::Sequential).unwrap();
    assert!((s - ssim_sequence(&ra, &rb, Exec::Parallel).unwrap()).abs() < 1e-9);
}

#[test]
fn report_has_all_columns() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let a: Vec<_> = (0..4).map(|_| random_frame(16, 16, 0.0, 1.0, &mut rng)).collect();
    let lm = face(4, &mut rng);
    let ex = PooledPixels::default();
    let report = evaluate(
        &Evaluation {
            pred: &a,
            gt: &a,
            landmarks: Some((&lm, &lm)),
            extractor: Some(&ex),
        },
        Exec::default(),
    )
    .unwrap();
    assert_eq!(report.psnr, PSNR_CAP);
    assert_eq!(report.ssim, 1.0);
    assert_eq!(report.lmd, Some(0.0));
    assert!(report.fid_degenerate.unwrap(), "4 frames of 48 features cannot have full rank");
    let csv = report.to_csv();
    let lines: Vec<_> = csv.lines().collect();
    assert_eq!(lines[0].split(',').count(), lines[1].split(',').count());
    let json: MetricReport = serde_json::from_str(&serde_json::to_string(&report).unwrap()).unwrap();
    assert_eq!(json, report);
}

#[test]
fn pooled_pixels_of_flat_frame() {
    let f = RgbFrame::filled(10, 10, [0.1, 0.2, 0.3]);
    let v = PooledPixels { grid: 3 }.features(&f);
    assert_eq!(v.len(), 27);
    for (i, x) in v.iter().enumerate() {
        assert!((x - [0.1, 0.2, 0.3][i % 3]).abs() < 1e-6);
    }
}
