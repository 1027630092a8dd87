//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero when any criterion fails.

mod common;

use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use candle_core::{DType, Device, Tensor};
use candle_nn::VarMap;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use atl_diff::diffusion::{
    ddim_step, denoise_sequence, BetaSchedule, ConditioningBundle, Denoiser, DiffusionSchedule, Injection,
    Parameterization, UNet3d, UNetConfig, IDENTITY_DIM,
};
use atl_diff::frames::{frame_file_name, list_frame_files, RgbFrame};
use atl_diff::init::seeded_builder;
use atl_diff::kan::{bspline_basis, kan_gradient_check, GridConfig, KanLayer, SPLINE_DEGREE};
use atl_diff::landmarks::{default_mouth_indices, LandmarkSequence};
use atl_diff::metrics::{fid_from_stats, lmd, m_lmd, psnr, ssim, FidStats};
use atl_diff::noise_guide::{
    build_guidance, gaussian_blur, make_noise_field, rasterize_landmarks, BlurParams, Eta, Field, GuideConfig, GuideMask,
};
use atl_diff::pipeline::{
    ablate, infer, landmark_batch, load_frame_clip, load_landmark_clips, sample_id, teacher_forced_mae, train_diffusion_with,
    train_landmarks, DiffusionModel, FrameClip, InferRequest, RunConfig, Split, TimestepSampling, TimingRecord,
    TrainConfig,
};
use atl_diff::Exec;

type Check = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn fail<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

/// Runs one criterion, enforcing its wall-clock budget.
fn criterion(id: usize, name: &str, budget: Duration, body: impl FnOnce() -> Check) -> bool {
    let start = Instant::now();
    let outcome = body();
    let elapsed = start.elapsed();
    let outcome = outcome.and_then(|detail| {
        if elapsed <= budget {
            Ok(detail)
        } else {
            Err(format!("{detail}; took {elapsed:.1?}, budget {budget:.0?}"))
        }
    });
    let pass = outcome.is_ok();
    let detail = outcome.unwrap_or_else(|e| e);
    println!(
        "{} criterion {id} ({name}) [{elapsed:.1?}]: {detail}",
        if pass { "PASS" } else { "FAIL" }
    );
    pass
}

// ---------------------------------------------------------------------------
// 1. noise guide

/// Direct 2-D Gaussian convolution, renormalized over the stencil, zero outside.
fn brute_force_blur(src: &Field, k: usize, sigma: f64) -> Vec<f64> {
    let n = src.size as isize;
    let r = ((k - 1) / 2) as isize;
    let g = |i: isize, j: isize| (-((i * i + j * j) as f64) / (2.0 * sigma * sigma)).exp();
    let total: f64 = (-r..=r).flat_map(|i| (-r..=r).map(move |j| g(i, j))).sum();
    let mut out = vec![0.0; (n * n) as usize];
    for y in 0..n {
        for x in 0..n {
            let mut acc = 0.0;
            for dy in -r..=r {
                for dx in -r..=r {
                    let (sx, sy) = (x + dx, y + dy);
                    if (0..n).contains(&sx) && (0..n).contains(&sy) {
                        acc += src.data[(sy * n + sx) as usize] as f64 * g(dx, dy) / total;
                    }
                }
            }
            out[(y * n + x) as usize] = acc;
        }
    }
    out
}

fn random_face(frames: usize, points: usize, rng: &mut ChaCha8Rng) -> LandmarkSequence {
    let coords = (0..frames * points)
        .map(|_| [rng.random_range(0.2..0.8), rng.random_range(0.2..0.8)])
        .collect();
    LandmarkSequence::new(frames, points, coords, default_mouth_indices()).unwrap()
}

fn noise_guide_suite() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let cfg = GuideConfig::default();
    let r = cfg.blur().radius();
    let size = 128;
    let mut far_pixels = 0usize;
    for seed in 0..4u64 {
        let seq = random_face(30, 68, &mut rng);
        let fields = build_guidance(&seq, size, &cfg, seed, Exec::default()).map_err(fail)?;
        for (i, f) in fields.iter().enumerate() {
            ensure(f.field.min() >= cfg.floor, || format!("min Î {} below floor", f.field.min()))?;
            let raw = rasterize_landmarks(seq.frame(i), size).map_err(fail)?;
            let marks: Vec<(usize, usize)> = (0..size * size)
                .filter(|&p| raw.field.data[p] > 0.0)
                .map(|p| (p % size, p / size))
                .collect();
            for y in 0..size {
                for x in 0..size {
                    let near = marks.iter().any(|&(mx, my)| mx.abs_diff(x).max(my.abs_diff(y)) <= r);
                    if !near {
                        far_pixels += 1;
                        ensure(f.field.at(x, y) == f.floor, || format!("Î({x},{y}) = {} away from landmarks", f.field.at(x, y)))?;
                    }
                }
            }
        }
    }

    let pts = [[0.0, 0.0], [0.3, 0.7], [1.0, 0.5], [0.6, 0.6], [0.62, 0.6], [0.1, 0.95]];
    let mask = rasterize_landmarks(&pts, 16).map_err(fail)?;
    let mut blur_err: f64 = 0.0;
    for (k, sigma) in [(3, 0.7), (5, 1.0), (7, 2.5), (13, 2.0)] {
        let blurred = gaussian_blur(&mask, BlurParams { kernel_size: k, sigma }).map_err(fail)?;
        let oracle = brute_force_blur(&mask.field, k, sigma);
        for (a, e) in blurred.field.data.iter().zip(&oracle) {
            blur_err = blur_err.max((*a as f64 - e).abs());
        }
    }
    ensure(blur_err < 1e-6, || format!("blur differs from brute force by {blur_err:e}"))?;

    let ones = GuideMask {
        field: Field {
            size: 1000,
            data: vec![1.0; 1_000_000],
        },
        blur: None,
    };
    let eta = make_noise_field(&ones, cfg.floor, Eta::Uniform { seed: 2024, stream: 0 }).map_err(fail)?;
    let mean = eta.field.data.iter().map(|&v| (v - cfg.floor) as f64).sum::<f64>() / 1e6;
    ensure((mean - 0.5).abs() < 0.003, || format!("η mean {mean}"))?;
    Ok(format!(
        "{far_pixels} far pixels at floor, blur error {blur_err:.1e}, η mean {mean:.5}"
    ))
}

// ---------------------------------------------------------------------------
// 2. DDIM

/// Returns the exact noise that maps `x_t` back to a known clean sample.
struct Oracle {
    x0: Tensor,
    sched: DiffusionSchedule,
}

impl Denoiser for Oracle {
    fn predict_noise(&self, x_t: &Tensor, t: usize, _: &ConditioningBundle) -> atl_diff::Result<Tensor> {
        let ab = self.sched.alpha_bar(t);
        Ok(((x_t - (&self.x0 * ab.sqrt())?)? / (1.0 - ab).sqrt())?)
    }
}

fn max_abs(t: &Tensor) -> f64 {
    t.abs().unwrap().flatten_all().unwrap().max(0).unwrap().to_scalar::<f64>().unwrap()
}

fn ddim_suite() -> Check {
    let dev = Device::Cpu;
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let n = 2 * 8 * 8 * 3;
    let x0: Vec<f64> = (0..n).map(|_| rng.random_range(-0.95..0.95)).collect();
    let eps: Vec<f64> = (0..n).map(|_| rng.sample(rand_distr::StandardNormal)).collect();
    let x0 = Tensor::from_vec(x0, (2, 8, 8, 3), &dev).map_err(fail)?;
    let eps = Tensor::from_vec(eps, (2, 8, 8, 3), &dev).map_err(fail)?;
    let cond = ConditioningBundle::new(
        Tensor::zeros((2, 1), DType::F64, &dev).map_err(fail)?,
        Tensor::ones((2, IDENTITY_DIM), DType::F64, &dev).map_err(fail)?,
    );
    let mut errors = Vec::new();
    for steps in [1000, 8] {
        let sched = DiffusionSchedule::new(1000, steps, BetaSchedule::default()).map_err(fail)?;
        let t = sched.largest_inference_step();
        let ab = sched.alpha_bar(t);
        let x_t = ((&x0 * ab.sqrt()).map_err(fail)? + (&eps * (1.0 - ab).sqrt()).map_err(fail)?).map_err(fail)?;
        let oracle = Oracle { x0: x0.clone(), sched: sched.clone() };
        let unit = denoise_sequence(&x_t, &cond, &sched, &oracle).map_err(fail)?;
        let out = ((unit * 2.0).map_err(fail)? - 1.0).map_err(fail)?;
        let err = max_abs(&(out - &x0).map_err(fail)?);
        ensure(err < 1e-3, || format!("{steps}-step chain misses x0 by {err:e}"))?;
        errors.push(err);
    }

    let sched = DiffusionSchedule::new(1000, 8, BetaSchedule::default()).map_err(fail)?;
    // small enough that x / √ᾱ_t stays inside the clamp at every step
    let small = (&eps * 1e-3).map_err(fail)?;
    let mut rescale_err: f64 = 0.0;
    for (t, prev) in sched.inference_pairs() {
        let out = ddim_step(&small, &small.zeros_like().map_err(fail)?, t, prev, &sched).map_err(fail)?;
        let ratio = (sched.alpha_bar_or_clean(prev) / sched.alpha_bar(t)).sqrt();
        rescale_err = rescale_err.max(max_abs(&(out - (&small * ratio).map_err(fail)?).map_err(fail)?));
    }
    ensure(rescale_err < 1e-6, || format!("ε̂ = 0 rescale off by {rescale_err:e}"))?;
    Ok(format!(
        "full chain {:.1e}, 8-step {:.1e}, zero-noise rescale {rescale_err:.1e}",
        errors[0], errors[1]
    ))
}

// ---------------------------------------------------------------------------
// 3. KAN

/// Point evaluation of `Σ c_k B_k(x)` by de Boor's algorithm.
fn de_boor(x: f64, coeffs: &[f64], grid: &GridConfig) -> f64 {
    let t = grid.knots();
    let p = SPLINE_DEGREE;
    let n = coeffs.len();
    let x = x.clamp(grid.lo, grid.hi);
    let mut k = p;
    while k < n - 1 && x >= t[k + 1] {
        k += 1;
    }
    let mut d: Vec<f64> = (0..=p).map(|j| coeffs[j + k - p]).collect();
    for r in 1..=p {
        for j in (r..=p).rev() {
            let left = t[j + k - p];
            let alpha = (x - left) / (t[j + 1 + k - r] - left);
            d[j] = (1.0 - alpha) * d[j - 1] + alpha * d[j];
        }
    }
    d[p]
}

fn random_layer(in_dim: usize, out_dim: usize, grid: GridConfig, rng: &mut ChaCha8Rng) -> KanLayer {
    let k = grid.basis_len();
    let c: Vec<f64> = (0..out_dim * in_dim * k).map(|_| rng.random_range(-1.0..1.0)).collect();
    let b: Vec<f64> = (0..out_dim * in_dim).map(|_| rng.random_range(-1.0..1.0)).collect();
    KanLayer::from_parts(
        grid,
        Tensor::from_vec(c, (out_dim, in_dim, k), &Device::Cpu).unwrap(),
        Tensor::from_vec(b, (out_dim, in_dim), &Device::Cpu).unwrap(),
    )
    .unwrap()
}

fn kan_suite() -> Check {
    let dev = Device::Cpu;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let grids = [
        GridConfig::default(),
        GridConfig { intervals: 5, lo: -2.0, hi: 3.0 },
        GridConfig { intervals: 1, lo: 0.0, hi: 1.0 },
    ];

    let mut pou: f64 = 0.0;
    let mut boor: f64 = 0.0;
    for grid in grids {
        let mut xs: Vec<f64> = (0..500).map(|_| rng.random_range(grid.lo..=grid.hi)).collect();
        xs.extend(grid.knots().into_iter().filter(|k| (grid.lo..=grid.hi).contains(k)));
        xs.extend([grid.lo, grid.hi]);
        let col = Tensor::from_vec(xs.clone(), (xs.len(), 1), &dev).map_err(fail)?;
        let sums: Vec<f64> = bspline_basis(&col, &grid)
            .and_then(|b| Ok(b.sum(2)?.flatten_all()?.to_vec1()?))
            .map_err(fail)?;
        pou = sums.iter().fold(pou, |m, s| m.max((s - 1.0).abs()));

        let layer = random_layer(1, 1, grid, &mut rng);
        let coeffs: Vec<f64> = layer.coeffs().flatten_all().and_then(|c| c.to_vec1()).map_err(fail)?;
        let spline: Vec<f64> = layer
            .spline_term(&col)
            .and_then(|s| Ok(s.flatten_all()?.to_vec1()?))
            .map_err(fail)?;
        for (x, s) in xs.iter().zip(spline) {
            boor = boor.max((s - de_boor(*x, &coeffs, &grid)).abs());
        }
    }
    ensure(pou < 1e-10, || format!("partition of unity off by {pou:e}"))?;
    ensure(boor < 1e-10, || format!("spline differs from de Boor by {boor:e}"))?;

    let configs = [(1, 1), (2, 3), (3, 2), (4, 4), (1, 5), (5, 1), (2, 2), (3, 3), (6, 2), (2, 6)];
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for (i, &(in_dim, out_dim)) in configs.iter().enumerate() {
        let grid = grids[i % grids.len()];
        let layer = random_layer(in_dim, out_dim, grid, &mut rng);
        let span = grid.hi - grid.lo;
        let x: Vec<f64> = (0..4 * in_dim)
            .map(|_| rng.random_range(grid.lo + 0.05 * span..grid.hi - 0.05 * span))
            .collect();
        let probe: Vec<f64> = (0..4 * out_dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let x = Tensor::from_vec(x, (4, in_dim), &dev).map_err(fail)?;
        let probe = Tensor::from_vec(probe, (4, out_dim), &dev).map_err(fail)?;
        let report = kan_gradient_check(&layer, &x, &probe, 1e-6).map_err(fail)?;
        worst = worst.max(report.max_rel_error);
        checked += report.checked;
    }
    ensure(worst < 1e-4, || format!("gradient check max relative error {worst:e}"))?;
    Ok(format!(
        "partition {pou:.1e}, de Boor {boor:.1e}, gradcheck {worst:.1e} over {} configs / {checked} entries",
        configs.len()
    ))
}

// ---------------------------------------------------------------------------
// 4. conditioning no-ops

fn bits(t: &Tensor) -> Vec<u32> {
    t.flatten_all().unwrap().to_vec1::<f32>().unwrap().iter().map(|v| v.to_bits()).collect()
}

fn noop_suite() -> Check {
    let dev = Device::Cpu;
    let cfg = UNetConfig {
        channels: [4, 8, 8],
        norm_groups: 2,
        time_dim: 8,
        image_size: 16,
    };
    let vars = VarMap::new();
    let unet = UNet3d::new(&cfg, seeded_builder(&vars, 4, &dev)).map_err(fail)?;
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut gaussian = |shape: &[usize]| {
        let n: usize = shape.iter().product();
        let v: Vec<f32> = (0..n).map(|_| rng.sample(rand_distr::StandardNormal)).collect();
        Tensor::from_vec(v, shape, &dev).unwrap()
    };
    let x = gaussian(&[2, 4, 16, 16, 3]);
    let w_e = gaussian(&[2, 8]);
    let w_i = gaussian(&[2, IDENTITY_DIM]);
    let ones = Tensor::ones((2, IDENTITY_DIM), DType::F32, &dev).map_err(fail)?;
    let zeros = Tensor::zeros((2, 8), DType::F32, &dev).map_err(fail)?;
    let t = [875, 125];
    let run = |c: &ConditioningBundle, inject| unet.forward_with(&x, &t, c, inject).map(|y| bits(&y)).map_err(fail);

    let unit_identity = ConditioningBundle::new(w_e.clone(), ones);
    let id_on = run(&unit_identity, Injection { emotion: true, identity: true })?;
    let id_off = run(&unit_identity, Injection { emotion: true, identity: false })?;
    ensure(id_on == id_off, || "w_i ≡ 1 changed the output".into())?;

    let zero_emotion = ConditioningBundle::new(zeros, w_i);
    let em_on = run(&zero_emotion, Injection { emotion: true, identity: true })?;
    let em_off = run(&zero_emotion, Injection { emotion: false, identity: true })?;
    ensure(em_on == em_off, || "w_e = 0 changed the output".into())?;
    Ok(format!("{} output values bitwise equal in both cases", id_on.len()))
}

// ---------------------------------------------------------------------------
// 5. metrics

fn metrics_suite() -> Check {
    let black = RgbFrame::filled(16, 16, [0.0; 3]);
    let gray = RgbFrame::filled(16, 16, [0.5; 3]);
    let p = psnr(&black, &gray).map_err(fail)?;
    ensure((p - 6.0206).abs() < 1e-4, || format!("PSNR {p}"))?;

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let data: Vec<f32> = (0..32 * 32 * 3).map(|_| rng.random_range(0.0..1.0)).collect();
    let a = RgbFrame::new(32, 32, data).map_err(fail)?;
    let s = ssim(&a, &a).map_err(fail)?;
    ensure((s - 1.0).abs() < 1e-4, || format!("SSIM(a, a) {s}"))?;

    let gt = random_face(30, 68, &mut rng);
    let coords = gt.coords().iter().map(|c| [c[0] + 3.0 / 127.0, c[1] + 4.0 / 127.0]).collect();
    let pred = LandmarkSequence::new(30, 68, coords, default_mouth_indices()).map_err(fail)?;
    let l = lmd(&pred, &gt, None, 128).map_err(fail)?;
    let ml = m_lmd(&pred, &gt, 128).map_err(fail)?;
    ensure((l - 5.0).abs() < 1e-4 && (ml - 5.0).abs() < 1e-4, || format!("LMD {l}, M-LMD {ml}"))?;

    let stats = |m: f64| FidStats {
        mean: nalgebra::DVector::from_element(1, m),
        cov: nalgebra::DMatrix::from_element(1, 1, 1.0),
        samples: usize::MAX,
    };
    let f = fid_from_stats(&stats(0.0), &stats(1.0)).map_err(fail)?.value;
    ensure((f - 1.0).abs() < 1e-4, || format!("FID {f}"))?;
    Ok(format!("PSNR {p:.4} dB, SSIM {s:.6}, LMD {l:.5}, M-LMD {ml:.5}, FID {f:.6}"))
}

// ---------------------------------------------------------------------------
// 6. overfit and inference

const OVERFIT_SIZE: usize = 16;
const STAGE1_STEPS: usize = 500;
const STAGE2_STEPS: usize = 2000;
const STAGE2_EPOCH: usize = 50;

fn overfit_config() -> RunConfig {
    let mut cfg = common::tiny_config(1);
    cfg.data.image_size = OVERFIT_SIZE;
    cfg.diffusion.unet.image_size = OVERFIT_SIZE;
    cfg.diffusion.timestep_sampling = TimestepSampling::Inference;
    cfg.diffusion.parameterization = Parameterization::Velocity;
    cfg.train_landmarks = TrainConfig {
        lr_max: 3e-3,
        lr_min: 3e-3,
        epochs: STAGE1_STEPS / 100,
        batch_size: 2,
        steps_per_epoch: Some(100),
        keep_epoch_checkpoints: false,
    };
    cfg.train_diffusion = TrainConfig {
        lr_max: 1e-3,
        lr_min: 1e-3,
        epochs: STAGE2_STEPS / STAGE2_EPOCH,
        batch_size: 2,
        steps_per_epoch: Some(STAGE2_EPOCH),
        keep_epoch_checkpoints: false,
    };
    cfg
}

fn overfit_suite() -> Check {
    let tmp = tempfile::tempdir().map_err(fail)?;
    let cfg = overfit_config();
    let dev = Device::Cpu;
    let manifest = common::synthetic_manifest(tmp.path(), 2, 1, &cfg);

    let stage1 = train_landmarks(&manifest, &cfg, &tmp.path().join("landmarks")).map_err(fail)?;
    let clips = load_landmark_clips(&manifest, Split::Train, &cfg.landmarks).map_err(fail)?;
    let refs: Vec<_> = clips.iter().collect();
    let (x, v, target) = landmark_batch(&refs, &dev).map_err(fail)?;
    let mse = stage1
        .model
        .forward(&x, &v)
        .and_then(|y| Ok((y.coords - &target)?.sqr()?.mean_all()?.to_scalar::<f32>()?))
        .map_err(fail)?;
    ensure(stage1.report.steps <= STAGE1_STEPS && mse < 1e-3, || {
        format!("landmark MSE {mse:e} after {} steps", stage1.report.steps)
    })?;

    let frames: Vec<FrameClip> = manifest
        .entries
        .iter()
        .map(|e| load_frame_clip(&manifest, e, &cfg.landmarks, OVERFIT_SIZE))
        .collect::<atl_diff::Result<_>>()
        .map_err(fail)?;
    let w_e = stage1.model.emotion_embedding(&x).map_err(fail)?.detach();
    let sched = cfg.diffusion.schedule().map_err(fail)?;
    let mut mae = f64::INFINITY;
    let mut hook = |_: usize, model: &DiffusionModel| -> atl_diff::Result<bool> {
        mae = teacher_forced_mae(model, &sched, &cfg.guide, &frames, &w_e, cfg.seed, Exec::default(), &dev)?;
        Ok(mae >= 0.05)
    };
    let stage2 = train_diffusion_with(
        &manifest,
        &cfg,
        &stage1.report.checkpoint,
        &tmp.path().join("diffusion"),
        Exec::default(),
        &mut hook,
    )
    .map_err(fail)?;

    let raw = tmp.path().join("raw").join(sample_id(0));
    let id_landmarks = tmp.path().join("identity_landmarks.json");
    LandmarkSequence::load(raw.join("landmarks.json"))
        .and_then(|s| s.single_frame(0).save(&id_landmarks))
        .map_err(fail)?;
    let (dir, timing) = infer(
        &InferRequest {
            audio: &raw.join("audio.wav"),
            identity_image: &raw.join("frames").join(frame_file_name(0)),
            identity_landmarks: &id_landmarks,
            landmark_checkpoint: &stage1.report.checkpoint,
            diffusion_checkpoint: &stage2.report.checkpoint,
            out_dir: &tmp.path().join("infer"),
        },
        &cfg,
        Exec::default(),
    )
    .map_err(fail)?;
    let written = list_frame_files(&dir).map_err(fail)?.len();

    let detail = format!(
        "landmark MSE {mse:.2e} in {} steps; pixel MAE {mae:.4} in {} steps; infer wrote {written} frames for {} clip",
        stage1.report.steps, stage2.report.steps, timing.clips
    );
    ensure(stage2.report.steps <= STAGE2_STEPS && mae < 0.05, || format!("{detail} (MAE target 0.05)"))?;
    ensure(written == 30 && timing.clips == 1, || format!("{detail} (expected 30 frames)"))?;
    Ok(detail)
}

// ---------------------------------------------------------------------------
// 7. throughput

fn quick_models(dir: &Path, cfg: &RunConfig) -> Result<(std::path::PathBuf, std::path::PathBuf), String> {
    let manifest = common::synthetic_manifest(dir, 2, 2, cfg);
    let lm = train_landmarks(&manifest, cfg, &dir.join("landmarks")).map_err(fail)?;
    let mut hook = |_: usize, _: &DiffusionModel| -> atl_diff::Result<bool> { Ok(true) };
    let d = train_diffusion_with(
        &manifest,
        cfg,
        &lm.report.checkpoint,
        &dir.join("diffusion"),
        Exec::default(),
        &mut hook,
    )
    .map_err(fail)?;
    Ok((lm.report.checkpoint, d.report.checkpoint))
}

fn throughput_suite() -> Check {
    let tmp = tempfile::tempdir().map_err(fail)?;
    let cfg = common::tiny_config(7);
    let (lm, diff) = quick_models(tmp.path(), &cfg)?;
    let raw = tmp.path().join("raw").join(sample_id(1));
    let id_landmarks = tmp.path().join("identity_landmarks.json");
    LandmarkSequence::load(raw.join("landmarks.json"))
        .and_then(|s| s.single_frame(0).save(&id_landmarks))
        .map_err(fail)?;
    let (_, timing) = infer(
        &InferRequest {
            audio: &raw.join("audio.wav"),
            identity_image: &raw.join("frames").join(frame_file_name(0)),
            identity_landmarks: &id_landmarks,
            landmark_checkpoint: &lm,
            diffusion_checkpoint: &diff,
            out_dir: &tmp.path().join("infer"),
        },
        &cfg,
        Exec::default(),
    )
    .map_err(fail)?;
    println!("{}", TimingRecord::TABLE_HEADER);
    let row = timing.table_row();
    println!("{row}");
    ensure(row.starts_with("| Ours (step = 8) |") && timing.steps == 8, || format!("unexpected row {row}"))?;
    ensure(timing.seconds_per_clip > 0.0 && timing.fps > 0.0, || "empty timing".into())?;
    Ok(format!(
        "{} clips, {:.3} s/clip, {:.3} FPS (reported only)",
        timing.clips, timing.seconds_per_clip, timing.fps
    ))
}

// ---------------------------------------------------------------------------
// 8. ablation

fn ablation_suite() -> Check {
    let tmp = tempfile::tempdir().map_err(fail)?;
    let mut cfg = common::tiny_config(8);
    cfg.ablation.train = TrainConfig {
        epochs: 2,
        steps_per_epoch: Some(5),
        ..cfg.ablation.train.clone()
    };
    let manifest = common::synthetic_manifest(tmp.path(), 3, 1, &cfg);
    let table = ablate(&manifest, &cfg, &tmp.path().join("ablation")).map_err(fail)?;
    print!("{}", table.to_csv());
    ensure(table.rows.len() == 5, || format!("{} rows", table.rows.len()))?;
    ensure(table.rows.iter().all(|r| r.lmd.is_finite() && r.m_lmd.is_finite()), || "non-finite score".into())?;
    Ok(format!(
        "5 variants on {} clips; KAN ≤ MLP: {}",
        table.eval_clips,
        table.kan_le_mlp.map_or("n/a".to_string(), |b| b.to_string())
    ))
}

fn main() -> ExitCode {
    let secs = Duration::from_secs;
    let results = [
        criterion(1, "noise guide", secs(30), noise_guide_suite),
        criterion(2, "DDIM", secs(10), ddim_suite),
        criterion(3, "KAN", secs(60), kan_suite),
        criterion(4, "conditioning no-ops", secs(60), noop_suite),
        criterion(5, "metrics", secs(10), metrics_suite),
        criterion(6, "overfit", secs(3600), overfit_suite),
        criterion(7, "throughput", secs(600), throughput_suite),
        criterion(8, "ablation", secs(1200), ablation_suite),
    ];
    let passed = results.iter().filter(|&&p| p).count();
    println!("{passed}/{} criteria passed", results.len());
    if passed == results.len() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
