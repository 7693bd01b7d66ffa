//! End-to-end acceptance checks. Runs without the libtest harness so every
//! criterion prints exactly one PASS/FAIL line; exits non-zero on any FAIL.

mod common;

use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sketch2statue::datagen::{self, GenConfig, PlaceholderSpec};
use sketch2statue::geometry::{backproject, chamfer_distance, rasterize, shapes, OrthoCamera, PointCloud, TriangleMesh, Vec3};
use sketch2statue::net::{grl_backward, grl_forward, total_loss, LossWeights, Mode, NetConfig, Network, PredictionSet};
use sketch2statue::raster::Raster;
use sketch2statue::recon;
use sketch2statue::train::{
    evaluate_checkpoint, read_metrics_log, split_by_statue, train, DatasetIndex, LogEntry, SplitSpec, TrainConfig,
    DEFAULT_FRACTIONS,
};
use sketch2statue::Exec;

// Tolerances and budgets.
const SMOKE_BUDGET: Duration = Duration::from_secs(5 * 60);
const ROUNDTRIP_RES: usize = 128;
const HALF_EXTENT: f64 = 1.1;
const EQUIVARIANCE_RES: usize = 256;
const EQUIVARIANCE_MIN_AGREEMENT: f64 = 0.99;
const GRL_REL_TOL: f64 = 1e-5;
const GRAD_REL_TOL: f64 = 1e-3;
const GRAD_FD_STEP: f64 = 1e-3;
const GRAD_MIN_PARAMS: usize = 100;
const LOSS_IDENTITY_TOL: f64 = 1e-6;
const OVERFIT_MAX_STEPS: u64 = 2000;
const OVERFIT_STEPS: u64 = 800;
const OVERFIT_MIN_IOU: f64 = 0.90;
const OVERFIT_MIN_RGB_REDUCTION: f64 = 0.5;
const OVERFIT_BUDGET: Duration = Duration::from_secs(30 * 60);
const CHAMFER_TRIALS: usize = 20;
const CHAMFER_POINTS: usize = 100;

type Outcome = Result<String, String>;

fn check(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn work_dir() -> PathBuf {
    let dir = std::env::temp_dir().join(format!("sketch2statue-acceptance-{}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn c1_dataset_arithmetic(dir: &Path) -> Outcome {
    let full = GenConfig {
        output: dir.join("unused"),
        placeholders: Some(PlaceholderSpec { count: 110, seed: 0 }),
        views: 360,
        resolution: 64,
        ..Default::default()
    };
    let plan = datagen::plan(&full).map_err(|e| e.to_string())?;
    check(plan.samples == 39_600, format!("110 x 360 planned {} samples", plan.samples))?;
    let ids: Vec<u32> = plan.metadata.statues.iter().map(|s| s.id).collect();
    let split = split_by_statue(&ids, DEFAULT_FRACTIONS, 0).map_err(|e| e.to_string())?;
    let counts = (split.train_statues.len(), split.val_statues.len(), split.test_statues.len());
    check(counts == (91, 10, 9), format!("split {counts:?}"))?;
    let images = (counts.0 * 360, counts.1 * 360, counts.2 * 360);
    check(images == (32_760, 3_600, 3_240), format!("images {images:?}"))?;

    let mesh_dir = dir.join("meshes");
    fs::create_dir_all(&mesh_dir).unwrap();
    let meshes: Vec<PathBuf> = (0..4)
        .map(|i| {
            let p = mesh_dir.join(format!("statue{i}.obj"));
            common::write_obj(&shapes::placeholder_statue(100 + i), &p);
            p
        })
        .collect();
    let smoke = GenConfig {
        output: dir.join("smoke"),
        meshes,
        views: 8,
        resolution: 64,
        ..Default::default()
    };
    let t0 = Instant::now();
    let report = datagen::generate(&smoke, Exec::default()).map_err(|e| e.to_string())?;
    let elapsed = t0.elapsed();
    let index = DatasetIndex::open(&smoke.output).map_err(|e| e.to_string())?;
    check(index.records.len() == 32 && report.views_rendered == 32, format!("smoke produced {} samples", index.records.len()))?;
    let files = common::list_files(&smoke.output).iter().filter(|p| p.extension().is_some_and(|e| e == "png")).count();
    check(files == 32 * 5, format!("smoke wrote {files} images"))?;
    check(elapsed < SMOKE_BUDGET, format!("smoke took {elapsed:?}"))?;
    Ok(format!(
        "39600 planned; split 91/10/9 = 32760/3600/3240 images; smoke 4x8 = 32 samples in {:.2}s",
        elapsed.as_secs_f64()
    ))
}

fn c2_geometry_roundtrip() -> Outcome {
    let tol = 2.0 * HALF_EXTENT / ROUNDTRIP_RES as f64 + 1e-6;
    let mut worst = Vec::new();
    for (name, mesh) in [("sphere", shapes::icosphere(4)), ("cube", shapes::cube().normalize().unwrap())] {
        let mut max_d: f64 = 0.0;
        let mut max_analytic: f64 = 0.0;
        for (az, el) in [(0.0, 0.0), (33.0, 20.0)] {
            let cam = OrthoCamera::new(az, el, HALF_EXTENT, 2.0, ROUNDTRIP_RES).unwrap();
            let s = rasterize(&mesh, &cam);
            let cloud = backproject(&s.depth, &s.mask, &cam).unwrap();
            check(!cloud.is_empty(), format!("{name} rendered empty"))?;
            for p in &cloud.points {
                max_d = max_d.max(mesh.distance_to_surface(p));
                if name == "sphere" {
                    max_analytic = max_analytic.max((p.norm() - 1.0).abs());
                }
            }
        }
        check(max_d <= tol, format!("{name}: max distance to surface {max_d:.3e} > {tol:.3e}"))?;
        if name == "sphere" {
            check(max_analytic <= tol, format!("sphere: max distance to unit sphere {max_analytic:.3e}"))?;
        }
        worst.push(format!("{name} {max_d:.2e}"));
    }
    Ok(format!("max point-to-surface {} (tol {tol:.3e})", worst.join(", ")))
}

fn c3_rotation_equivariance() -> Outcome {
    let mesh = shapes::placeholder_statue(7);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst: f64 = 1.0;
    for _ in 0..8 {
        let theta = rng.random_range(0.0..360.0);
        let a = rasterize(&mesh.turned(theta), &OrthoCamera::new(0.0, 0.0, HALF_EXTENT, 2.0, EQUIVARIANCE_RES).unwrap());
        let b = rasterize(&mesh, &OrthoCamera::new(theta, 0.0, HALF_EXTENT, 2.0, EQUIVARIANCE_RES).unwrap());
        let same = a.mask.data().iter().zip(b.mask.data()).filter(|(x, y)| x == y).count();
        let frac = same as f64 / a.mask.data().len() as f64;
        worst = worst.min(frac);
        check(frac >= EQUIVARIANCE_MIN_AGREEMENT, format!("theta {theta:.2}: agreement {frac:.5}"))?;
    }
    Ok(format!("worst mask agreement {:.5} over 8 angles", worst))
}

fn micro_config() -> NetConfig {
    NetConfig {
        image_size: 8,
        latent_dim: 6,
        base_channels: 2,
        max_channels: 4,
        num_res_blocks_per_stage: 1,
        num_statue_classes: 3,
        dropout_p: 0.0,
        grl_lambda: 0.1,
    }
}

fn micro_sample(seed: u64) -> (Raster, sketch2statue::geometry::RenderSample) {
    let n = 8;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sketch = Raster::from_fn(n, n, 1, |_, _, _| rng.random_range(0.0..1.0));
    let mask = Raster::from_fn(n, n, 1, |x, y, _| if (2..6).contains(&x) && (1..7).contains(&y) { 1.0 } else { 0.0 });
    let mut normals = Raster::new(n, n, 3);
    for y in 0..n {
        for x in 0..n {
            if mask.get(x, y, 0) > 0.5 {
                let v = Vec3::new(rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5), 1.0).normalize();
                normals.pixel_mut(x, y).copy_from_slice(v.as_slice());
            }
        }
    }
    let target = sketch2statue::geometry::RenderSample {
        // L1 targets kept out of the reachable output range so |p - t| is smooth
        rgb: Raster::from_fn(n, n, 3, |x, y, c| if (x + y + c) % 2 == 0 { 0.0 } else { 1.0 }),
        depth: mask.map(|m| m * 9.0),
        normals,
        mask,
        camera: OrthoCamera::frontal(n).unwrap(),
        statue_id: 0,
    };
    (sketch, target)
}

fn rel_err(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

fn c4_gradient_reversal() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let x: Vec<f64> = (0..64).map(|_| rng.random_range(-2.0..2.0)).collect();
    check(grl_forward(&x) == x, "forward is not the identity")?;
    // scalar composite f(y) = sum sin(y) + y^3 / 3
    let f = |v: f64| v.sin() + v * v * v / 3.0;
    let fprime = |v: f64| v.cos() + v * v;
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for lambda in [0.0, 0.1, 1.0] {
        let upstream: Vec<f64> = grl_forward(&x).iter().map(|&y| fprime(y)).collect();
        let dx = grl_backward(&upstream, lambda);
        for (i, &xi) in x.iter().enumerate() {
            let fd = (f(xi + h) - f(xi - h)) / (2.0 * h);
            let expected = -lambda * fd;
            let e = rel_err(dx[i], expected);
            worst = worst.max(e);
            check(e <= GRL_REL_TOL, format!("lambda {lambda}: element {i} {} vs {expected}", dx[i]))?;
            check(dx[i] == -lambda * upstream[i], "backward is not -lambda * upstream")?;
        }
    }
    // through the network: encoder gradient of the CE term with reversal equals
    // -lambda times the plain gradient, which itself matches finite differences
    let net = Network::new(micro_config(), 21).unwrap();
    let (sketch, target) = micro_sample(22);
    let w = LossWeights { w_rgb: 0.0, w_depth: 0.0, w_normals: 0.0, w_mask: 0.0, w_adv: 1.0 };
    let enc = net.layout().ranges_with_prefix("encoder.");
    for lambda in [0.0, 0.1, 1.0] {
        let mut reversed = vec![0.0; net.num_params()];
        let mut plain = vec![0.0; net.num_params()];
        net.loss_and_grad(&sketch, &target, 2, &w, Mode::Eval, -lambda, &mut reversed).unwrap();
        net.loss_and_grad(&sketch, &target, 2, &w, Mode::Eval, 1.0, &mut plain).unwrap();
        for r in &enc {
            for i in r.clone() {
                let e = rel_err(reversed[i], -lambda * plain[i]);
                worst = worst.max(e);
                check(e <= GRL_REL_TOL, format!("network lambda {lambda}: param {i}"))?;
            }
        }
    }
    let mut plain = vec![0.0; net.num_params()];
    net.loss_and_grad(&sketch, &target, 2, &w, Mode::Eval, 1.0, &mut plain).unwrap();
    let hp = 1e-5;
    for r in enc.iter().take(4) {
        for i in r.clone().step_by(7) {
            let mut p = net.clone();
            p.params[i] += hp;
            let mut m = net.clone();
            m.params[i] -= hp;
            let fd = (p.loss(&sketch, &target, 2, &w, Mode::Eval).unwrap().0 - m.loss(&sketch, &target, 2, &w, Mode::Eval).unwrap().0) / (2.0 * hp);
            if fd.abs().max(plain[i].abs()) < 1e-9 {
                continue;
            }
            let e = rel_err(plain[i], fd);
            check(e <= GRL_REL_TOL * 10.0 || (plain[i] - fd).abs() < 1e-10, format!("plain CE gradient param {i}: {} vs fd {fd}", plain[i]))?;
        }
    }
    Ok(format!("identity forward; worst relative error {worst:.2e} for lambda in {{0, 0.1, 1}}"))
}

fn c5_full_loss_gradient() -> Outcome {
    let net = Network::new(micro_config(), 31).unwrap();
    let (sketch, target) = micro_sample(32);
    let label = 1;
    let w = LossWeights { w_rgb: 1.0, w_depth: 1.0, w_normals: 1.0, w_mask: 1.0, w_adv: 0.5 };
    // the loss value does not see the reversal, so compare with coefficient +1
    let mut g = vec![0.0; net.num_params()];
    net.loss_and_grad(&sketch, &target, label, &w, Mode::Eval, 1.0, &mut g).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    let mut idx: Vec<usize> = (0..net.num_params()).collect();
    rand::seq::SliceRandom::shuffle(idx.as_mut_slice(), &mut rng);
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for &i in idx.iter().take(150) {
        let mut p = net.clone();
        p.params[i] += GRAD_FD_STEP;
        let mut m = net.clone();
        m.params[i] -= GRAD_FD_STEP;
        let lp = p.loss(&sketch, &target, label, &w, Mode::Eval).unwrap().0;
        let lm = m.loss(&sketch, &target, label, &w, Mode::Eval).unwrap().0;
        let fd = (lp - lm) / (2.0 * GRAD_FD_STEP);
        let e = rel_err(g[i], fd);
        // both below round-off: nothing to compare
        if g[i].abs().max(fd.abs()) < 1e-10 {
            checked += 1;
            continue;
        }
        worst = worst.max(e);
        checked += 1;
        check(e <= GRAD_REL_TOL, format!("param {i}: analytic {} vs fd {fd} (rel {e:.2e})", g[i]))?;
    }
    check(checked >= GRAD_MIN_PARAMS, format!("only {checked} parameters checked"))?;
    Ok(format!("{checked} of {} parameters, worst relative error {worst:.2e}", net.num_params()))
}

fn c6_loss_identities() -> Outcome {
    let (_, t) = micro_sample(41);
    let mut pred = PredictionSet {
        rgb: t.rgb.clone(),
        depth: t.depth.clone(),
        normals: t.normals.clone(),
        mask: t.mask.clone(),
        class_logits: vec![-60.0, 60.0, -60.0],
    };
    let (_, b) = total_loss(&pred, &t, 1, &LossWeights::default()).map_err(|e| e.to_string())?;
    for (name, v) in [("rgb", b.rgb), ("depth", b.depth), ("normals", b.normals), ("mask", b.mask), ("adv", b.adv)] {
        check((0.0..=LOSS_IDENTITY_TOL).contains(&v), format!("perfect prediction: {name} = {v:e}"))?;
    }
    pred.mask = Raster::filled(8, 8, 1, 0.5);
    let (_, b) = total_loss(&pred, &t, 1, &LossWeights::default()).map_err(|e| e.to_string())?;
    check((b.mask - std::f64::consts::LN_2).abs() <= LOSS_IDENTITY_TOL, format!("uniform 0.5 mask BCE {}", b.mask))?;
    let bce = b.mask;
    pred.normals = t.normals.map(|v| -v);
    let (_, b) = total_loss(&pred, &t, 1, &LossWeights::default()).map_err(|e| e.to_string())?;
    check((b.normals - 2.0).abs() <= LOSS_IDENTITY_TOL, format!("antipodal normals term {}", b.normals))?;
    Ok(format!("perfect <= 1e-6; BCE(0.5) = {bce:.9}; antipodal cosine term = {:.9}", b.normals))
}

struct Overfit {
    index: DatasetIndex,
    split: SplitSpec,
    checkpoint: PathBuf,
    log: Vec<LogEntry>,
}

fn overfit_config() -> TrainConfig {
    TrainConfig {
        max_steps: OVERFIT_STEPS,
        checkpoint_every: 200,
        val_views_per_statue: 0,
        ..TrainConfig::desk(64)
    }
}

fn c7_overfit(dir: &Path, out: &mut Option<Overfit>) -> Outcome {
    check(OVERFIT_STEPS <= OVERFIT_MAX_STEPS, "step budget")?;
    let gen = GenConfig {
        output: dir.join("overfit_data"),
        placeholders: Some(PlaceholderSpec { count: 3, seed: 10 }),
        views: 16,
        resolution: 64,
        ..Default::default()
    };
    datagen::generate(&gen, Exec::default()).map_err(|e| e.to_string())?;
    let index = DatasetIndex::open(&gen.output).map_err(|e| e.to_string())?;
    let split = SplitSpec { train_statues: vec![0, 1], val_statues: vec![], test_statues: vec![2], seed: 0 };
    let t0 = Instant::now();
    let outcome = train(&index, &split, &overfit_config(), &dir.join("overfit_run"), None, Exec::default()).map_err(|e| e.to_string())?;
    let elapsed = t0.elapsed();
    let log = read_metrics_log(&outcome.metrics_log).map_err(|e| e.to_string())?;
    check(outcome.accessed_statues.iter().all(|s| split.train_statues.contains(s)), "loop touched a held-out statue")?;

    let steps: Vec<_> = log
        .iter()
        .filter_map(|e| match e {
            LogEntry::Step { step, phase, terms, nonrgb_head_grad_abs, .. } => Some((*step, *phase, terms.rgb, *nonrgb_head_grad_abs)),
            _ => None,
        })
        .collect();
    let warm = steps.iter().filter(|s| s.1 == 1).count();
    check(warm > 0, "no warm-up steps logged")?;
    check(steps.iter().filter(|s| s.1 == 1).all(|s| s.3 == 0.0), "non-RGB head gradient during warm-up")?;
    let first = steps.first().ok_or("empty log")?.2;
    let last = steps.last().unwrap().2;
    let reduction = 1.0 - last / first;

    let report = evaluate_checkpoint(&outcome.checkpoint, &index, &split.train_statues, None, true, Exec::default()).map_err(|e| e.to_string())?;
    let iou = report.aggregate.mask_iou;
    *out = Some(Overfit { index, split, checkpoint: outcome.checkpoint.clone(), log });
    check(iou >= OVERFIT_MIN_IOU, format!("training mask IoU {iou:.4}"))?;
    check(reduction >= OVERFIT_MIN_RGB_REDUCTION, format!("RGB L1 {first:.4} -> {last:.4}"))?;
    check(elapsed <= OVERFIT_BUDGET, format!("training took {elapsed:?}"))?;
    Ok(format!(
        "{OVERFIT_STEPS} steps in {:.0}s; train IoU {iou:.4}; RGB L1 {first:.4} -> {last:.4} ({:.0}% lower); {warm} warm-up steps with zero non-RGB head gradient",
        elapsed.as_secs_f64(),
        reduction * 100.0
    ))
}

fn c8_unseen_statue(dir: &Path, run: Option<&Overfit>) -> Outcome {
    let run = run.ok_or("overfit run unavailable")?;
    let held_out = run.split.test_statues[0];
    let report = evaluate_checkpoint(&run.checkpoint, &run.index, &[held_out], None, false, Exec::default()).map_err(|e| e.to_string())?;
    let m = &report.aggregate;
    check(m.all_finite() && m.chamfer.is_some(), format!("non-finite metrics {m:?}"))?;
    let ck = sketch2statue::net::Checkpoint::load(&run.checkpoint).map_err(|e| e.to_string())?;
    let record = run.index.records.iter().find(|r| r.statue_id == held_out && r.view_index == 0).unwrap();
    let sample = run.index.load(record).map_err(|e| e.to_string())?;
    let camera = recon::default_camera(&ck).map_err(|e| e.to_string())?;
    let rec = recon::reconstruct(&ck.network, &sample.sketch, recon::DEFAULT_MASK_THRESHOLD, &camera).map_err(|e| e.to_string())?;
    check(!rec.cloud.is_empty(), "empty reconstruction")?;
    let ply = dir.join("held_out.ply");
    recon::export_ply(&rec.cloud, &ply).map_err(|e| e.to_string())?;
    let back = sketch2statue::geometry::io::read_point_cloud_ply(&ply).map_err(|e| e.to_string())?;
    check(back.len() == rec.cloud.len(), "PLY point count")?;
    let entry = run.index.metadata.statues.iter().find(|s| s.id == held_out).unwrap();
    let mesh: TriangleMesh = datagen::statue_mesh(entry).map_err(|e| e.to_string())?;
    let reference = PointCloud::from_points(mesh.sample_surface(5000, 1).map_err(|e| e.to_string())?);
    let cd = chamfer_distance(&back, &reference).map_err(|e| e.to_string())?;
    check(cd.is_finite(), "chamfer not finite")?;
    Ok(format!(
        "held-out statue {held_out}: IoU {:.3}, depth RMSE {:.4}, normal error {:.1} deg, PSNR {:.1} dB, view chamfer {:.4}; PLY {} points, chamfer to mesh samples {cd:.4}",
        m.mask_iou,
        m.depth_rmse,
        m.normal_angle_deg,
        m.psnr_db,
        m.chamfer.unwrap(),
        back.len()
    ))
}

fn c9_determinism(dir: &Path, run: Option<&Overfit>) -> Outcome {
    let make = |name: &str| GenConfig {
        output: dir.join(name),
        placeholders: Some(PlaceholderSpec { count: 2, seed: 5 }),
        views: 6,
        resolution: 48,
        seed: 9,
        ..Default::default()
    };
    datagen::generate(&make("det_a"), Exec::Parallel).map_err(|e| e.to_string())?;
    datagen::generate(&make("det_b"), Exec::Sequential).map_err(|e| e.to_string())?;
    check(common::trees_identical(&dir.join("det_a"), &dir.join("det_b")), "gen-data outputs differ")?;

    let run = run.ok_or("overfit run unavailable")?;
    let cfg = TrainConfig { max_steps: 120, ..overfit_config() };
    let a = train(&run.index, &run.split, &cfg, &dir.join("det_run_a"), None, Exec::Parallel).map_err(|e| e.to_string())?;
    let b = train(&run.index, &run.split, &cfg, &dir.join("det_run_b"), None, Exec::Sequential).map_err(|e| e.to_string())?;
    let la = fs::read(&a.metrics_log).unwrap();
    let lb = fs::read(&b.metrics_log).unwrap();
    check(la == lb, "training logs differ")?;
    // the long run shares its first 120 steps with these
    let prefix: Vec<&LogEntry> = run.log.iter().filter(|e| e.step() <= 120).collect();
    let short = read_metrics_log(&a.metrics_log).map_err(|e| e.to_string())?;
    check(prefix.len() == short.len() && prefix.iter().zip(&short).all(|(x, y)| *x == y), "longer run diverges from the shorter")?;
    Ok(format!("gen-data trees byte-identical; two 120-step training logs identical ({} bytes)", la.len()))
}

fn c10_chamfer_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    for trial in 0..CHAMFER_TRIALS {
        let mut cloud = || -> Vec<Vec3> {
            (0..CHAMFER_POINTS)
                .map(|_| Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
                .collect()
        };
        let (a, b) = (cloud(), cloud());
        let fast = chamfer_distance(&PointCloud::from_points(a.clone()), &PointCloud::from_points(b.clone())).map_err(|e| e.to_string())?;
        let slow = common::brute_chamfer(&a, &b);
        check(fast == slow, format!("trial {trial}: grid {fast} vs brute force {slow}"))?;
    }
    Ok(format!("{CHAMFER_TRIALS} trials of {CHAMFER_POINTS}-point clouds bit-identical"))
}

fn run(name: &str, f: impl FnOnce() -> Outcome) -> bool {
    let t0 = Instant::now();
    let result = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        Err(p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panic".into()))
    });
    let secs = t0.elapsed().as_secs_f64();
    match &result {
        Ok(detail) => println!("PASS {name} [{secs:.1}s]: {detail}"),
        Err(why) => println!("FAIL {name} [{secs:.1}s]: {why}"),
    }
    result.is_ok()
}

fn main() {
    // `cargo test -- --list` and filters are accepted and ignored except for listing
    if std::env::args().any(|a| a == "--list") {
        println!("acceptance: test");
        return;
    }
    let dir = work_dir();
    let mut overfit = None;
    let results = [
        run("C1 dataset arithmetic", || c1_dataset_arithmetic(&dir)),
        run("C2 geometry round-trip", c2_geometry_roundtrip),
        run("C3 rotation equivariance", c3_rotation_equivariance),
        run("C4 gradient reversal", c4_gradient_reversal),
        run("C5 full-loss gradient check", c5_full_loss_gradient),
        run("C6 loss identities", c6_loss_identities),
        run("C7 overfit sanity", || c7_overfit(&dir, &mut overfit)),
        run("C8 unseen-statue smoke", || c8_unseen_statue(&dir, overfit.as_ref())),
        run("C9 determinism", || c9_determinism(&dir, overfit.as_ref())),
        run("C10 chamfer oracle", c10_chamfer_oracle),
    ];
    let passed = results.iter().filter(|&&r| r).count();
    println!("acceptance: {passed}/{} criteria passed", results.len());
    let _ = fs::remove_dir_all(&dir);
    if passed != results.len() {
        std::process::exit(1);
    }
}
