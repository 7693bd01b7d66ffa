//! Integration tests across dataset generation, training, evaluation and
//! reconstruction on tiny synthetic data.

mod common;

use std::fs;
use std::path::Path;

use sketch2statue::datagen::{self, GenConfig, PlaceholderSpec};
use sketch2statue::geometry::{backproject, fuse_views, rasterize, shapes, OrthoCamera, ViewInput};
use sketch2statue::net::{Checkpoint, CheckpointMeta, NetConfig, Network};
use sketch2statue::raster::Raster;
use sketch2statue::recon::{self, ReconStatus};
use sketch2statue::train::{
    evaluate, evaluate_checkpoint, prediction_from_target, read_metrics_log, train, DatasetIndex, GroundTruthPredictor, LogEntry, SplitSpec,
    TrainConfig,
};
use sketch2statue::{Error, Exec};

fn tiny_dataset(dir: &Path, statues: usize, views: usize, res: usize) -> DatasetIndex {
    let cfg = GenConfig {
        output: dir.to_path_buf(),
        placeholders: Some(PlaceholderSpec { count: statues, seed: 1 }),
        views,
        resolution: res,
        ..Default::default()
    };
    datagen::generate(&cfg, Exec::default()).unwrap();
    DatasetIndex::open(dir).unwrap()
}

fn tiny_config(steps: u64) -> TrainConfig {
    TrainConfig {
        batch_size: 2,
        warmup_samples: 4,
        max_steps: steps,
        checkpoint_every: 3,
        val_views_per_statue: 1,
        ..TrainConfig::desk(16)
    }
}

fn split3() -> SplitSpec {
    SplitSpec { train_statues: vec![0, 1], val_statues: vec![2], test_statues: vec![3], seed: 0 }
}

#[test]
fn resume_reproduces_uninterrupted_run() {
    let tmp = tempfile::tempdir().unwrap();
    let index = tiny_dataset(&tmp.path().join("data"), 4, 4, 16);
    let full = train(&index, &split3(), &tiny_config(7), &tmp.path().join("full"), None, Exec::Sequential).unwrap();

    let part = tmp.path().join("part");
    let first = train(&index, &split3(), &tiny_config(3), &part, None, Exec::Sequential).unwrap();
    assert_eq!(first.final_step, 3);
    let resumed = train(&index, &split3(), &tiny_config(7), &part, Some(&first.checkpoint), Exec::Parallel).unwrap();
    assert_eq!(resumed.final_step, 7);
    assert_eq!(fs::read(&full.metrics_log).unwrap(), fs::read(&resumed.metrics_log).unwrap());
    assert_eq!(fs::read(&full.checkpoint).unwrap(), fs::read(&resumed.checkpoint).unwrap());

    // a changed configuration is refused
    let other = TrainConfig { learning_rate: 0.5, ..tiny_config(7) };
    assert!(matches!(
        train(&index, &split3(), &other, &part, Some(&first.checkpoint), Exec::Sequential),
        Err(Error::InvalidInput(_))
    ));
}

#[test]
fn training_log_phases_and_access() {
    let tmp = tempfile::tempdir().unwrap();
    let index = tiny_dataset(&tmp.path().join("data"), 4, 4, 16);
    let out = train(&index, &split3(), &tiny_config(6), &tmp.path().join("run"), None, Exec::default()).unwrap();
    let log = read_metrics_log(&out.metrics_log).unwrap();
    let mut vals = 0;
    for e in &log {
        match e {
            LogEntry::Step { step, phase, loss, terms, nonrgb_head_grad_abs, .. } => {
                assert!(*loss >= 0.0 && loss.is_finite());
                // warm-up covers the first 4 samples, i.e. two steps of 2
                if *step <= 2 {
                    assert_eq!(*phase, 1);
                    assert_eq!(*nonrgb_head_grad_abs, 0.0);
                } else {
                    assert_eq!(*phase, 2);
                    assert!(*nonrgb_head_grad_abs > 0.0);
                    assert!(terms.depth > 0.0 && terms.mask > 0.0);
                }
            }
            LogEntry::Val { metrics, .. } => {
                vals += 1;
                assert!(metrics.all_finite());
            }
        }
    }
    // 8 training samples, batch 2: epochs end at steps 4 and 8
    assert_eq!(vals, 1);
    let accessed: Vec<u32> = serde_json::from_str(&fs::read_to_string(tmp.path().join("run/access.json")).unwrap()).unwrap();
    assert_eq!(accessed, vec![0, 1]);
    assert_eq!(out.accessed_statues.into_iter().collect::<Vec<_>>(), vec![0, 1]);
}

#[test]
fn zero_warmup_enables_all_terms_from_the_start() {
    let tmp = tempfile::tempdir().unwrap();
    let index = tiny_dataset(&tmp.path().join("data"), 4, 2, 16);
    let cfg = TrainConfig { warmup_samples: 0, ..tiny_config(2) };
    let out = train(&index, &split3(), &cfg, &tmp.path().join("run"), None, Exec::default()).unwrap();
    for e in read_metrics_log(&out.metrics_log).unwrap() {
        if let LogEntry::Step { phase, nonrgb_head_grad_abs, .. } = e {
            assert_eq!(phase, 2);
            assert!(nonrgb_head_grad_abs > 0.0);
        }
    }
}

#[test]
fn evaluation_of_ground_truth_is_perfect() {
    let tmp = tempfile::tempdir().unwrap();
    let index = tiny_dataset(&tmp.path().join("data"), 2, 3, 24);
    let report = evaluate(&GroundTruthPredictor { num_classes: 2 }, &index, &[1, 0], None, Exec::default()).unwrap();
    assert_eq!(report.per_statue.iter().map(|s| s.statue_id).collect::<Vec<_>>(), vec![0, 1]);
    let m = report.aggregate;
    assert_eq!(m.mask_iou, 1.0);
    assert_eq!(m.depth_rmse, 0.0);
    assert!(m.normal_angle_deg < 1e-4);
    assert_eq!(m.psnr_db, sketch2statue::train::PSNR_CAP_DB);
    assert_eq!(m.chamfer, Some(0.0));

    assert!(matches!(evaluate(&GroundTruthPredictor::default(), &index, &[], None, Exec::default()), Err(Error::InvalidInput(_))));
    assert!(matches!(evaluate(&GroundTruthPredictor::default(), &index, &[9], None, Exec::default()), Err(Error::InvalidInput(_))));
}

#[test]
fn checkpoint_evaluation_refuses_training_statues() {
    let tmp = tempfile::tempdir().unwrap();
    let index = tiny_dataset(&tmp.path().join("data"), 3, 2, 16);
    let net = Network::new(NetConfig::desk(16, 2), 4).unwrap();
    let path = tmp.path().join("net.ckpt");
    let meta = CheckpointMeta { train_statues: vec![0, 1], ..Default::default() };
    Checkpoint { network: net, meta, optimizer: None }.save(&path).unwrap();
    let refused = evaluate_checkpoint(&path, &index, &[2, 1], None, false, Exec::default());
    assert!(matches!(refused, Err(Error::InvalidInput(m)) if m.contains("statue 1")));
    assert!(evaluate_checkpoint(&path, &index, &[1], Some(1), true, Exec::default()).is_ok());
    let held_out = evaluate_checkpoint(&path, &index, &[2], None, false, Exec::default()).unwrap();
    assert!(held_out.aggregate.mask_iou.is_finite());
}

#[test]
fn generation_is_resumable_and_validated() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = GenConfig {
        output: tmp.path().join("data"),
        placeholders: Some(PlaceholderSpec { count: 2, seed: 3 }),
        views: 3,
        resolution: 16,
        ..Default::default()
    };
    let first = datagen::generate(&cfg, Exec::default()).unwrap();
    assert_eq!((first.samples, first.views_rendered), (6, 6));
    let before = common::list_files(&cfg.output);
    let again = datagen::generate(&cfg, Exec::default()).unwrap();
    assert_eq!((again.views_rendered, again.views_skipped, again.files_written), (0, 6, 0));
    assert_eq!(before, common::list_files(&cfg.output));

    // an interrupted view is re-rendered
    let victim = cfg.output.join("statue_0001/view_002/depth.png");
    fs::remove_file(&victim).unwrap();
    let repair = datagen::generate(&cfg, Exec::default()).unwrap();
    assert_eq!(repair.views_rendered, 1);
    assert!(victim.exists());

    // a different configuration for the same directory is refused
    let changed = GenConfig { resolution: 32, ..cfg.clone() };
    assert!(datagen::generate(&changed, Exec::default()).is_err());

    let missing = GenConfig {
        output: tmp.path().join("none"),
        meshes: vec![tmp.path().join("a.obj"), tmp.path().join("b.obj")],
        ..Default::default()
    };
    match datagen::plan(&missing) {
        Err(Error::MissingData(m)) => assert!(m.contains("a.obj") && m.contains("b.obj")),
        other => panic!("expected missing data, got {other:?}"),
    }
}

#[test]
fn cached_and_direct_loads_agree() {
    let tmp = tempfile::tempdir().unwrap();
    let index = tiny_dataset(&tmp.path().join("data"), 1, 2, 16);
    let direct: Vec<_> = index.records.iter().map(|r| index.decode(r).unwrap()).collect();
    let cache = tmp.path().join("cache");
    std::env::set_var(sketch2statue::CACHE_ENV, &cache);
    let first: Vec<_> = index.records.iter().map(|r| index.load(r).unwrap()).collect();
    let second: Vec<_> = index.records.iter().map(|r| index.load(r).unwrap()).collect();
    std::env::remove_var(sketch2statue::CACHE_ENV);
    assert!(cache.exists() && !common::list_files(&cache).is_empty());
    for ((a, b), c) in direct.iter().zip(&first).zip(&second) {
        assert_eq!(a.sketch, b.sketch);
        assert_eq!(a.target, b.target);
        assert_eq!(b.target, c.target);
    }
}

#[test]
fn inference_is_deterministic_and_pads_input() {
    let net = Network::new(NetConfig::desk(32, 2), 8).unwrap();
    let sketch = Raster::from_fn(100, 80, 1, |x, y, _| if (x + 2 * y) % 9 == 0 { 0.0 } else { 1.0 });
    let a = recon::infer(&net, &sketch).unwrap();
    let b = recon::infer(&net, &sketch).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.resolution(), 32);
    a.check_invariants().unwrap();
    let prepared = recon::prepare_sketch(&sketch, 32);
    assert_eq!(prepared.dims(), (32, 32, 1));
    // the padded rows above and below the content are white
    assert!((0..32).all(|x| prepared.get(x, 0, 0) == 1.0 && prepared.get(x, 31, 0) == 1.0));
}

#[test]
fn perfect_predictions_reconstruct_the_sphere() {
    let res = 64;
    let cam = OrthoCamera::new(0.0, 0.0, 1.1, 2.0, res).unwrap();
    let truth = rasterize(&shapes::icosphere(4), &cam);
    let pred = prediction_from_target(&truth, 1);
    let rec = recon::reconstruct_from_predictions(&pred, 0.5, &cam).unwrap();
    assert_eq!(rec.status, ReconStatus::Ok);
    let pixels = truth.mask.data().iter().filter(|&&m| m == 1.0).count();
    assert_eq!(rec.cloud.len(), pixels);
    let tol = 2.0 * 1.1 / res as f64;
    assert!(rec.cloud.points.iter().all(|p| (p.norm() - 1.0).abs() <= tol));

    // threshold 1.0 keeps exactly the pixels at 1.0
    let mut soft = pred.clone();
    soft.mask = truth.mask.map(|m| m * 0.999);
    soft.mask.set(32, 32, 0, 1.0);
    let one = recon::reconstruct_from_predictions(&soft, 1.0, &cam).unwrap();
    assert_eq!(one.cloud.len(), 1);
    soft.mask.set(32, 32, 0, 0.999);
    let none = recon::reconstruct_from_predictions(&soft, 1.0, &cam).unwrap();
    assert_eq!(none.status, ReconStatus::EmptyMask);
    assert!(none.cloud.is_empty());
    let tmp = tempfile::tempdir().unwrap();
    assert!(recon::export_ply(&none.cloud, &tmp.path().join("x.ply")).is_err());
    assert!(recon::reconstruct_from_predictions(&soft, f64::NAN, &cam).is_err());
}

#[test]
fn fusion_of_identical_views_doubles_points() {
    let cam = OrthoCamera::new(20.0, 5.0, 1.1, 2.0, 32).unwrap();
    let s = rasterize(&shapes::placeholder_statue(2), &cam);
    let v = ViewInput { depth: &s.depth, mask: &s.mask, camera: &cam };
    let single = backproject(&s.depth, &s.mask, &cam).unwrap();
    let fused = fuse_views(&[v, v], None).unwrap();
    assert_eq!(fused.len(), 2 * single.len());
    let dedup = fuse_views(&[v, v], Some(1e-6)).unwrap();
    assert_eq!(dedup.len(), single.len());
}

#[test]
fn front_and_back_views_cover_the_sphere() {
    let res = 64;
    let he = 1.1;
    let sphere = shapes::icosphere(4);
    let front = OrthoCamera::new(0.0, 0.0, he, 2.0, res).unwrap();
    let back = OrthoCamera::new(180.0, 0.0, he, 2.0, res).unwrap();
    let a = rasterize(&sphere, &front);
    let b = rasterize(&sphere, &back);
    let fused = fuse_views(
        &[
            ViewInput { depth: &a.depth, mask: &a.mask, camera: &front },
            ViewInput { depth: &b.depth, mask: &b.mask, camera: &back },
        ],
        None,
    )
    .unwrap();
    let pixel = 2.0 * he / res as f64;
    assert!(fused.points.iter().all(|p| (p.norm() - 1.0).abs() <= pixel));
    // surface samples away from the silhouette band are within four pixels of
    // the fused cloud; the grazing band is covered only sparsely by two views
    let grid = sketch2statue::geometry::PointGrid::build(&fused.points).unwrap();
    let samples = sphere.sample_surface(2000, 5).unwrap();
    let mut worst_interior: f64 = 0.0;
    let mut worst: f64 = 0.0;
    for s in &samples {
        let gap = grid.nearest(s).1.sqrt();
        worst = worst.max(gap);
        if s.z.abs() > 0.3 {
            worst_interior = worst_interior.max(gap);
        }
    }
    assert!(worst_interior < 4.0 * pixel, "interior gap {worst_interior}");
    assert!(worst.is_finite());
}
