mod common;

use common::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rfpgs::math::{quat_from_axis_angle, Vec3};
use rfpgs::projection::{Pose, Projection};
use rfpgs::rftrain::*;
use rfpgs::scene::SceneModel;
use rfpgs::sh::ShTable;
use rfpgs::spectrum::SpectrumGrid;
use rfpgs::splat::{render, RenderOptions};

const FLOOR: f64 = -160.0;
const LAMBDA: f64 = 0.125;

fn scene_at(tx: Vec3) -> SceneModel {
    let mut s = empty_scene();
    s.tx_position = tx;
    s.carrier_hz = 299_792_458.0 / LAMBDA;
    s.wavelength_m = LAMBDA;
    s
}

/// Opaque wall at `x = 6` facing −x whose blended gain equals `gain_db`
/// on the ray toward `+x` from `rx`.
fn wall(tx: Vec3, gain_db: f64, rx: &Pose) -> SceneModel {
    let mut s = scene_at(tx);
    s.gaussians.push(disk(Vec3::new(6.0, 0.0, 0.0), -Vec3::x(), 40.0, 40.0, 0.98));
    let out = render(&s, rx, &RenderOptions::default()).unwrap();
    let px = rx.direction_to_pixel(&Vec3::x()).map(|(c, r)| r * rx.width + c).unwrap();
    let w = out.pixel_hits(px)[0].weight;
    s.gaussians[0].sh = ShTable::constant(3, 1, gain_db / w);
    s
}

fn fspl(d: f64) -> f64 {
    20.0 * (LAMBDA / (4.0 * std::f64::consts::PI * d)).log10()
}

fn pinhole(pos: Vec3, yaw: f64, w: usize, h: usize) -> Pose {
    Pose::new(pos, quat_from_axis_angle(&Vec3::z(), yaw), Projection::Pinhole, 1.2, 0.9, w, h).unwrap()
}

fn value_toward(g: &SpectrumGrid, pose: &Pose, d: &Vec3) -> f64 {
    let (c, r) = pose.direction_to_pixel(d).unwrap();
    g.pathloss_values().unwrap()[r * pose.width + c]
}

#[test]
fn los_pixel_is_free_space() {
    let tx = Vec3::new(10.0, 0.0, 0.0);
    let pose = Pose::panorama(Vec3::zeros(), 0.3, 90, 45).unwrap();
    let g = predict_pathloss(&scene_at(tx), &pose, FLOOR, &RenderOptions::default()).unwrap();
    let v = value_toward(&g, &pose, &Vec3::x());
    assert!((v - -60.05).abs() < 0.01, "{v}");
    assert!((v - fspl(10.0)).abs() < 1e-12);
    // nothing else carries energy in free space
    assert_eq!(g.above_floor_count(), 1);
}

#[test]
fn reflection_assembles_gain_and_total_distance() {
    let rx = pinhole(Vec3::zeros(), 0.0, 31, 21);
    // d2 = 6 to (6,0,0), d1 = 4 from there to the Tx
    let tx = Vec3::new(6.0 - 2.4, 3.2, 0.0);
    let s = wall(tx, -3.0, &rx);
    let g = predict_pathloss(&s, &rx, FLOOR, &RenderOptions::default()).unwrap();
    let v = value_toward(&g, &rx, &Vec3::x());
    assert!((v - -63.05).abs() < 0.01, "{v}");
    assert!((v - (-3.0 + fspl(10.0))).abs() < 1e-9);
}

#[test]
fn collinear_receivers_differ_by_distance_ratio() {
    let tx = Vec3::new(6.0 - 2.4, 3.2, 0.0);
    let rx1 = pinhole(Vec3::zeros(), 0.0, 31, 21);
    let rx2 = pinhole(Vec3::new(-6.0, 0.0, 0.0), 0.0, 31, 21);
    let s = wall(tx, -3.0, &rx1);
    let a = predict_pathloss(&s, &rx1, FLOOR, &RenderOptions::default()).unwrap();
    let b = predict_pathloss(&s, &rx2, FLOOR, &RenderOptions::default()).unwrap();
    let ga = value_toward(&a, &rx1, &Vec3::x());
    let gb = value_toward(&b, &rx2, &Vec3::x());
    assert!((ga - gb - 20.0 * (16.0f64 / 10.0).log10()).abs() < 1e-9, "{}", ga - gb);
}

#[test]
fn uncovered_pixels_report_floor() {
    let rx = pinhole(Vec3::zeros(), std::f64::consts::PI, 16, 12);
    let s = wall(Vec3::new(3.0, 2.0, 0.0), -3.0, &pinhole(Vec3::zeros(), 0.0, 16, 12));
    let g = predict_pathloss(&s, &rx, FLOOR, &RenderOptions::default()).unwrap();
    assert!(g.pathloss_values().unwrap().iter().all(|&v| v == FLOOR));
}

#[test]
fn passive_gain_clips_at_zero_db() {
    let rx = pinhole(Vec3::zeros(), 0.0, 31, 21);
    let tx = Vec3::new(6.0 - 2.4, 3.2, 0.0);
    let s = wall(tx, 5.0, &rx);
    let g = predict_pathloss(&s, &rx, FLOOR, &RenderOptions::default()).unwrap();
    assert!((value_toward(&g, &rx, &Vec3::x()) - fspl(10.0)).abs() < 1e-9);
}

fn sample(pose: Pose, values: Vec<f64>) -> RfSample {
    let s = SpectrumGrid::pathloss(&pose, values, FLOOR).unwrap();
    RfSample::new(pose, s, Provenance::OracleClean).unwrap()
}

fn flat_sample(pose: Pose) -> RfSample {
    let n = pose.pixel_count();
    sample(pose, vec![FLOOR; n])
}

#[test]
fn sample_must_match_pose_raster() {
    let pose = pinhole(Vec3::zeros(), 0.0, 8, 6);
    let other = pinhole(Vec3::zeros(), 0.0, 6, 6);
    let s = SpectrumGrid::pathloss(&other, vec![FLOOR; 36], FLOOR).unwrap();
    assert!(RfSample::new(pose, s, Provenance::MeasuredMpc).is_err());
}

#[test]
fn neighbor_selection_matches_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let data: Vec<RfSample> = (0..10)
        .map(|_| {
            let p = Vec3::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0), 1.5);
            flat_sample(pinhole(p, rng.random_range(-1.0..1.0), 6, 4))
        })
        .collect();
    let c = NeighborCriteria::default();
    for (i, s) in data.iter().enumerate() {
        let got = select_neighbor_views(s, Some(i), &data, &c);
        let mut want = Vec::new();
        for (j, o) in data.iter().enumerate() {
            let f1 = s.pose.forward();
            let f2 = o.pose.forward();
            let ang = f1.dot(&f2).clamp(-1.0, 1.0).acos();
            let d = (s.pose.position - o.pose.position).norm();
            if j != i && ang <= 30f64.to_radians() + 1e-12 && d <= 2.0 {
                want.push(j);
            }
        }
        assert_eq!(got, want);
    }
    // duplicates qualify, views facing away do not
    let a = flat_sample(pinhole(Vec3::zeros(), 0.0, 6, 4));
    let dup = vec![a.clone(), a.clone(), flat_sample(pinhole(Vec3::zeros(), 3.0, 6, 4))];
    assert_eq!(select_neighbor_views(&a, Some(0), &dup, &c), vec![1]);
}

#[test]
fn projection_into_same_pose_is_identity() {
    let pose = Pose::panorama(Vec3::new(0.5, 0.2, 1.0), 0.4, 36, 18).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let vals: Vec<f64> = (0..pose.pixel_count()).map(|_| rng.random_range(-120.0..-40.0)).collect();
    let s = sample(pose.clone(), vals.clone());
    let dirs = pose.directions();
    let pts: Vec<Option<Vec3>> = dirs.iter().map(|d| Some(pose.position + d * 3.0)).collect();
    let got = project_patch(&pts, &s, None);
    for (g, v) in got.iter().zip(&vals) {
        assert_eq!(*g, Some(*v));
    }
}

#[test]
fn projection_behind_pinhole_is_invalid() {
    let s = flat_sample(pinhole(Vec3::zeros(), 0.0, 8, 6));
    let got = project_patch(&[Some(Vec3::new(-2.0, 0.0, 0.0)), Some(Vec3::new(2.0, 0.0, 0.0)), None], &s, None);
    assert_eq!(got, vec![None, Some(FLOOR), None]);
}

#[test]
fn wall_reprojection_within_a_pixel() {
    let a = pinhole(Vec3::zeros(), 0.0, 64, 48);
    let b = pinhole(Vec3::new(0.0, 0.5, 0.0), 0.0, 64, 48);
    let nb = flat_sample(b.clone());
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..200 {
        let (c, r) = (rng.random_range(0..64), rng.random_range(0..48));
        let d = a.pixel_to_direction(c, r).unwrap();
        let p = d * (4.0 / d.x);
        // analytic projection of the wall point into b
        let want = b.direction_to_coords(&(p - b.position).normalize());
        let got = b.direction_to_pixel(&(p - b.position).normalize());
        if let (Some((u, v)), Some((gc, gr))) = (want, got) {
            assert!((gc as f64 + 0.5 - u).abs() <= 1.0 && (gr as f64 + 0.5 - v).abs() <= 1.0);
            assert!(project_patch(&[Some(p)], &nb, None)[0].is_some());
        }
    }
}

#[test]
fn merge_cases() {
    let a = vec![Some(5.0), None, Some(1.0)];
    let b = vec![Some(3.0), Some(2.0), None];
    assert_eq!(merge_patches(&[a.clone()], MergeMode::MinMerge), Some(a.clone()));
    assert_eq!(merge_patches(&[a.clone(), b.clone()], MergeMode::MinMerge), Some(vec![Some(3.0), Some(2.0), Some(1.0)]));
    assert_eq!(merge_patches(&[a.clone(), b.clone()], MergeMode::MaxMerge), Some(vec![Some(5.0), Some(2.0), Some(1.0)]));
    assert_eq!(merge_patches(&[vec![None, None]], MergeMode::MaxMerge), None);
    assert_eq!(merge_patches(&[], MergeMode::MaxMerge), None);
}

fn patch_strategy() -> impl Strategy<Value = Vec<Option<f64>>> {
    prop::collection::vec(prop::option::weighted(0.8, -150.0f64..-20.0), 9)
}

proptest! {
    #[test]
    fn merge_is_associative(a in patch_strategy(), b in patch_strategy(), c in patch_strategy(), max in any::<bool>()) {
        let mode = if max { MergeMode::MaxMerge } else { MergeMode::MinMerge };
        let ab = merge_patches(&[a.clone(), b.clone()], mode).unwrap_or(vec![None; 9]);
        prop_assert_eq!(merge_patches(&[ab, c.clone()], mode), merge_patches(&[a, b, c], mode));
    }

    #[test]
    fn ncc_symmetric_and_bounded(a in patch_strategy(), b in patch_strategy()) {
        if let (Some(x), Some(y)) = (ncc_loss(&a, &b), ncc_loss(&b, &a)) {
            prop_assert!((x - y).abs() < 1e-12);
            prop_assert!((-1e-12..=2.0 + 1e-12).contains(&x));
        }
    }

    #[test]
    fn ncc_gradient_matches_finite_differences(a in prop::collection::vec(-100.0f64..-20.0, 9), b in prop::collection::vec(-100.0f64..-20.0, 9)) {
        let a: Vec<Option<f64>> = a.into_iter().map(Some).collect();
        let b: Vec<Option<f64>> = b.into_iter().map(Some).collect();
        if let Some((_, g)) = ncc_loss_grad(&a, &b) {
            for i in 0..9 {
                let h = 1e-5;
                let mut p = a.clone();
                let mut m = a.clone();
                p[i] = p[i].map(|v| v + h);
                m[i] = m[i].map(|v| v - h);
                let fd = (ncc_loss(&p, &b).unwrap() - ncc_loss(&m, &b).unwrap()) / (2.0 * h);
                prop_assert!((fd - g[i]).abs() < 1e-6 * (1.0 + g[i].abs()), "{} vs {}", fd, g[i]);
            }
        }
    }
}

#[test]
fn ncc_cases() {
    let a: Vec<Option<f64>> = [1.0, 4.0, 2.0, 8.0, 5.0].iter().map(|&v| Some(v)).collect();
    let affine: Vec<Option<f64>> = a.iter().map(|v| v.map(|v| 2.0 * v + 5.0)).collect();
    let neg: Vec<Option<f64>> = a.iter().map(|v| v.map(|v| -v)).collect();
    assert!(ncc_loss(&a, &a).unwrap().abs() < 1e-12);
    assert!(ncc_loss(&a, &affine).unwrap().abs() < 1e-12);
    assert!((ncc_loss(&a, &neg).unwrap() - 2.0).abs() < 1e-12);
    // too few shared entries or a constant side skip the pair
    assert!(ncc_loss(&a[..3], &a[..3]).is_none());
    assert!(ncc_loss(&a, &[Some(1.0); 5]).is_none());
}

#[test]
fn patch_size_rule() {
    assert_eq!(patch_size(2.0, 5, 9, 2.0), 5);
    assert_eq!(patch_size(0.5, 5, 9, 2.0), 9);
    assert_eq!(patch_size(100.0, 5, 9, 2.0), 3);
    let mut last = 99;
    for k in 1..60 {
        let s = patch_size(0.1 * k as f64, 5, 9, 2.0);
        assert!(s % 2 == 1 && (3..=9).contains(&s) && s <= last);
        last = s;
    }
}

/// A few Gaussians facing a panorama and targets rendered from a reference
/// gain table.
fn toy_dataset(n: usize) -> (SceneModel, Vec<RfSample>) {
    let (mut scene, _) = random_scene(9, 30);
    scene.tx_position = Vec3::new(0.5, 1.5, 1.0);
    let cfg = RfTrainConfig::default();
    let opts = cfg.render_options();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let data: Vec<RfSample> = (0..n)
        .map(|_| {
            let pos = Vec3::new(rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3), rng.random_range(-0.1..0.1));
            let pose = Pose::new(pos, quat_from_axis_angle(&Vec3::z(), rng.random_range(-0.2..0.2)), Projection::Equirectangular, 1.6, 0.9, 32, 18).unwrap();
            let pred = predict_pathloss(&scene, &pose, FLOOR, &opts).unwrap();
            RfSample::new(pose, pred, Provenance::OracleClean).unwrap()
        })
        .collect();
    (scene, data)
}

fn small_cfg(iterations: usize) -> RfTrainConfig {
    RfTrainConfig {
        iterations,
        checkpoint_interval: 0,
        ..RfTrainConfig::default()
    }
}

#[test]
fn training_freezes_geometry_and_fits() {
    let (truth, data) = toy_dataset(6);
    let (trained, log) = train_rf(truth.clone(), &data, &small_cfg(200)).unwrap();
    assert_eq!(trained.geometry_hash(), truth.geometry_hash());
    assert_eq!(log.len(), 200);
    let first: f64 = log[..20].iter().map(|r| r.l1).sum();
    let last: f64 = log[180..].iter().map(|r| r.l1).sum();
    assert!(last < 0.5 * first, "{first} -> {last}");
}

#[test]
fn zero_iterations_pass_through() {
    let (truth, data) = toy_dataset(3);
    let (out, log) = train_rf(truth.clone(), &data, &small_cfg(0)).unwrap();
    assert_eq!(out, truth);
    assert!(log.is_empty());
}

#[test]
fn empty_sets_rejected() {
    let (truth, _) = toy_dataset(1);
    assert!(train_rf(truth.clone(), &[], &small_cfg(5)).is_err());
    assert!(finetune(truth, &[], &small_cfg(5)).is_err());
    let bad = RfTrainConfig {
        patch_base: 4,
        ..RfTrainConfig::default()
    };
    assert!(bad.validate().is_err());
    let bad = RfTrainConfig {
        finetune_cap: 0,
        ..RfTrainConfig::default()
    };
    assert!(bad.validate().is_err());
}

#[test]
fn multiview_term_vanishes_on_consistent_views() {
    // the targets are the model's own predictions and every neighbor sees
    // the same pose, so reprojections reproduce the sample exactly
    let (truth, data) = toy_dataset(1);
    let twins = vec![data[0].clone(), data[0].clone(), data[0].clone()];
    let cfg = RfTrainConfig {
        init_gain_db: None,
        lambda_mv: 1.0,
        ..small_cfg(3)
    };
    let mut t = RfTrainer::new(&twins, cfg, truth).unwrap();
    assert_eq!(t.neighbors(0), &[1, 2]);
    for _ in 0..3 {
        let r = t.step().unwrap();
        assert!(r.mv_patches > 0);
        assert!(r.mv.abs() < 1e-9, "{}", r.mv);
        assert!(r.l1.abs() < 1e-9);
    }
}

#[test]
fn finetune_protocol() {
    let (truth, data) = toy_dataset(6);
    let cfg = RfTrainConfig {
        finetune_cap: 4,
        ..small_cfg(100)
    };
    let (out, log) = finetune(truth.clone(), &data, &cfg).unwrap();
    assert_eq!(log.len(), 4);
    assert!(log.iter().all(|r| r.mode == MergeMode::MaxMerge));
    assert_eq!(out.geometry_hash(), truth.geometry_hash());
    // one pass over the set when it is smaller than the cap
    let (_, log) = finetune(truth, &data, &RfTrainConfig { finetune_cap: 500, ..cfg }).unwrap();
    assert_eq!(log.len(), 6);
    let mut seen: Vec<usize> = log.iter().map(|r| r.sample).collect();
    seen.sort();
    assert_eq!(seen, (0..6).collect::<Vec<_>>());
}

#[test]
fn training_is_deterministic() {
    let (truth, data) = toy_dataset(4);
    let cfg = RfTrainConfig {
        lambda_mv: 0.5,
        ..small_cfg(30)
    };
    let a = train_rf(truth.clone(), &data, &cfg).unwrap();
    let b = train_rf(truth, &data, &cfg).unwrap();
    assert_eq!(a.0, b.0);
    assert_eq!(a.1, b.1);
}

#[test]
fn resume_matches_uninterrupted_run() {
    let (truth, data) = toy_dataset(4);
    let cfg = RfTrainConfig {
        lambda_mv: 0.5,
        ..small_cfg(20)
    };
    let mut full = RfTrainer::new(&data, cfg.clone(), truth.clone()).unwrap();
    full.run(|_| Ok(())).unwrap();
    let mut part = RfTrainer::new(&data, cfg.clone(), truth).unwrap();
    for _ in 0..7 {
        part.step().unwrap();
    }
    let state: RfTrainerState = serde_json::from_str(&serde_json::to_string(&part.state).unwrap()).unwrap();
    let mut rest = RfTrainer::resume(&data, cfg, state).unwrap();
    rest.run(|_| Ok(())).unwrap();
    for (a, b) in full.log.iter().zip(part.log.iter().chain(&rest.log)) {
        assert!((a.total - b.total).abs() <= 1e-6);
    }
    assert_eq!(full.log.len(), part.log.len() + rest.log.len());
}
