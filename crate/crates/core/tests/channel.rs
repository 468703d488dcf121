mod common;

use std::sync::OnceLock;

use common::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rfpgs::channel::*;
use rfpgs::geomtrain::{init_from_facets, InitConfig};
use rfpgs::math::{fspl_gain_db, Vec3, SPEED_OF_LIGHT};
use rfpgs::oracle::*;
use rfpgs::projection::Pose;
use rfpgs::rftrain::*;
use rfpgs::scene::{Aabb, SceneModel};
use rfpgs::sh::ShTable;
use rfpgs::spectrum::SpectrumGrid;
use rfpgs::splat::RenderOptions;

const FLOOR: f64 = -160.0;

fn opts() -> RenderOptions {
    RenderOptions::default()
}

fn free_space(tx: Vec3) -> SceneModel {
    let mut s = empty_scene();
    s.tx_position = tx;
    s
}

fn floor_oracle() -> OracleScene {
    OracleScene {
        facets: vec![rect_facet(Vec3::new(-3.0, -3.0, 0.0), Vec3::new(10.0, 0.0, 0.0), Vec3::new(0.0, 6.0, 0.0), -3.0, 0.6)],
        wedges: vec![],
        scatterers: vec![],
        bbox: Aabb {
            min: Vec3::new(-3.0, -3.0, -0.1),
            max: Vec3::new(7.0, 3.0, 2.5),
        },
    }
}

const FLOOR_TX: Vec3 = Vec3::new(0.0, 0.0, 1.0);
const FLOOR_RX: Vec3 = Vec3::new(4.0, 0.0, 1.0);

fn floor_sample(oracle: &OracleScene, pos: Vec3) -> RfSample {
    let pose = Pose::panorama(pos, 0.0, 120, 60).unwrap();
    let m = trace(oracle, &FLOOR_TX, &pos, &TraceOptions::default());
    let (s, _) = mpcs_to_spectrum(&m, &pose, FLOOR, None);
    RfSample::new(pose, s, Provenance::OracleClean).unwrap()
}

/// Floor-only model trained on oracle spectra around the reference Rx.
fn trained_floor() -> &'static SceneModel {
    static MODEL: OnceLock<SceneModel> = OnceLock::new();
    MODEL.get_or_init(|| {
        let oracle = floor_oracle();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let init = InitConfig {
            count: 4000,
            ..InitConfig::default()
        };
        let scene = init_from_facets(&oracle, FLOOR_TX, 2.4e9, 3, &init, &mut rng).unwrap();
        let mut prng = ChaCha8Rng::seed_from_u64(1);
        let mut data = vec![floor_sample(&oracle, FLOOR_RX)];
        while data.len() < 16 {
            let p = Vec3::new(prng.random_range(1.0..5.5), prng.random_range(-1.5..1.5), prng.random_range(0.6..1.6));
            data.push(floor_sample(&oracle, p));
        }
        let cfg = RfTrainConfig {
            iterations: 5000,
            floor_weight: 1.0,
            lambda_mv: 0.0,
            ..RfTrainConfig::default()
        };
        train_rf(scene, &data, &cfg).unwrap().0
    })
}

#[test]
fn free_space_tx_spectrum_is_one_pixel() {
    let tx = Vec3::new(0.0, 0.0, 1.0);
    let rx = Pose::panorama(Vec3::new(5.0, 1.0, 1.0), 0.7, 90, 45).unwrap();
    let tp = tx_pose(tx, 0.0, 90, 45).unwrap();
    let g = render_tx_spectrum(&free_space(tx), &tp, &rx, FLOOR, &opts()).unwrap();
    assert_eq!(g.above_floor_count(), 1);
    let d = (rx.position - tx).normalize();
    let (c, r) = tp.direction_to_pixel(&d).unwrap();
    let v = g.pathloss_values().unwrap()[r * tp.width + c];
    assert!((v - fspl_gain_db(0.299792458 / 2.4, (rx.position - tx).norm())).abs() < 1e-9);
}

#[test]
fn tx_spectrum_keeps_strongest_per_pixel() {
    let (mut scene, _) = random_scene(4, 25);
    scene.tx_position = Vec3::new(-1.0, 0.3, 0.2);
    let rx = Pose::panorama(Vec3::zeros(), 0.0, 60, 30).unwrap();
    // a coarse Tx raster forces many collisions
    let tp = tx_pose(scene.tx_position, 0.0, 6, 3).unwrap();
    let g = render_tx_spectrum(&scene, &tp, &rx, FLOOR, &opts()).unwrap();
    let cache = GainCache::build(&scene, &rx, FLOOR, &opts()).unwrap();
    let raw = cache.predict_raw(&scene);
    let mut want = vec![FLOOR; tp.pixel_count()];
    let mut rx_above = 0;
    for px in 0..raw.len() {
        let v = raw[px].min(0.0);
        if v <= FLOOR {
            continue;
        }
        rx_above += 1;
        let x = cache.intersection(px).unwrap_or(rx.position);
        if let Some((c, r)) = tp.direction_to_pixel(&(x - scene.tx_position).normalize()) {
            want[r * tp.width + c] = want[r * tp.width + c].max(v);
        }
    }
    assert_eq!(g.pathloss_values().unwrap(), &want[..]);
    assert!(g.above_floor_count() <= rx_above);
    assert!(g.above_floor_count() < rx_above, "expected collisions");
}

#[test]
fn single_plane_tx_direction_matches_oracle() {
    // one small disk at the specular point of the floor reflection
    let oracle = floor_oracle();
    let m = trace(&oracle, &FLOOR_TX, &FLOOR_RX, &TraceOptions::default());
    let refl = m.iter().find(|m| m.kind == MpcKind::Reflection).unwrap();
    let p = refl.retx_point.unwrap();
    assert!((p - Vec3::new(2.0, 0.0, 0.0)).norm() < 1e-12);
    let mut scene = free_space(FLOOR_TX);
    let mut g = disk(p, Vec3::z(), 0.05, 0.05, 0.9);
    g.sh = ShTable::constant(3, 1, -3.0);
    scene.gaussians.push(g);
    let rx = Pose::panorama(FLOOR_RX, 0.0, 180, 90).unwrap();
    let tp = tx_pose(FLOOR_TX, 0.0, 90, 45).unwrap();
    let pred = render_tx_spectrum(&scene, &tp, &rx, FLOOR, &opts()).unwrap();
    let (gt, _) = mpcs_to_tx_spectrum(&[refl.clone()], &tp, FLOOR, None);
    let gv = gt.pathloss_values().unwrap();
    let want = (0..gv.len()).find(|&i| gv[i] > FLOOR).unwrap();
    let los = tp.direction_to_pixel(&(FLOOR_RX - FLOOR_TX).normalize()).map(|(c, r)| r * tp.width + c).unwrap();
    let pv = pred.pathloss_values().unwrap();
    let got = (0..pv.len()).filter(|&i| i != los).max_by(|&a, &b| pv[a].total_cmp(&pv[b])).unwrap();
    assert!(pv[got] > FLOOR);
    let (wc, wr) = ((want % tp.width) as isize, (want / tp.width) as isize);
    let (gc, gr) = ((got % tp.width) as isize, (got / tp.width) as isize);
    assert!((wc - gc).abs() <= 1 && (wr - gr).abs() <= 1, "{want} vs {got}");
}

#[test]
fn free_space_csi_is_one_los_path() {
    let tx = Vec3::new(10.0, 0.0, 1.0);
    let rx = Pose::panorama(Vec3::new(0.0, 0.0, 1.0), 0.0, 90, 45).unwrap();
    let mpcs = extract_spatial_csi(&free_space(tx), &rx, FLOOR, &opts()).unwrap();
    assert_eq!(mpcs.len(), 1);
    assert_eq!(mpcs[0].kind, MpcKind::Los);
    assert!((mpcs[0].tof_ns - 33.36).abs() < 0.01);
    assert!((mpcs[0].tof_ns - 10.0 / SPEED_OF_LIGHT * 1e9).abs() < 1e-9);
}

#[test]
fn all_floor_csi_is_empty() {
    // a closed, absorbing shell around the Rx hides the Tx
    let mut scene = free_space(Vec3::new(3.0, 0.0, 0.0));
    for n in [Vec3::x(), -Vec3::x(), Vec3::y(), -Vec3::y(), Vec3::z(), -Vec3::z()] {
        let mut g = disk(n * 1.5, -n, 5.0, 5.0, 0.99);
        g.sh = ShTable::constant(3, 1, -400.0);
        scene.gaussians.push(g);
    }
    let rx = Pose::panorama(Vec3::zeros(), 0.0, 60, 30).unwrap();
    assert!(extract_spatial_csi(&scene, &rx, FLOOR, &opts()).unwrap().is_empty());
}

#[test]
fn trained_floor_recovers_reflection_tof() {
    let scene = trained_floor();
    let rx = Pose::panorama(FLOOR_RX, 0.0, 120, 60).unwrap();
    let mpcs = extract_spatial_csi(scene, &rx, FLOOR, &opts()).unwrap();
    let refl = mpcs
        .iter()
        .filter(|m| m.kind != MpcKind::Los)
        .max_by(|a, b| a.pathloss_db.total_cmp(&b.pathloss_db))
        .expect("a reflected path");
    assert!((refl.tof_ns - 14.92).abs() < 0.5, "{}", refl.tof_ns);
    assert!(mpcs.iter().any(|m| m.kind == MpcKind::Los));
}

#[test]
fn multibounce_flags_follow_specularity() {
    let scene = trained_floor();
    let rx = Pose::panorama(FLOOR_RX, 0.0, 120, 60).unwrap();
    let tau = SPECULAR_TOLERANCE_DEG.to_radians();
    let honest = flag_multibounce_candidates(scene, &rx, FLOOR, tau, &opts()).unwrap();
    let pred = predict_pathloss(scene, &rx, FLOOR, &opts()).unwrap();
    let above = pred.above_floor_count();
    let frac = honest.iter().filter(|&&f| f).count() as f64 / above as f64;
    assert!(frac < 0.05, "{frac} of {above}");
    let los = rx.direction_to_pixel(&(FLOOR_TX - FLOOR_RX).normalize()).map(|(c, r)| r * rx.width + c).unwrap();
    assert!(!honest[los]);
    let mut moved = scene.clone();
    moved.tx_position = Vec3::new(1.5, 1.5, 1.8);
    let displaced = flag_multibounce_candidates(&moved, &rx, FLOOR, tau, &opts()).unwrap();
    let dfrac = displaced.iter().filter(|&&f| f).count() as f64 / predict_pathloss(&moved, &rx, FLOOR, &opts()).unwrap().above_floor_count() as f64;
    assert!(dfrac > frac, "{dfrac} vs {frac}");
}

fn mpc(db: f64, tof: f64) -> Mpc {
    Mpc {
        pathloss_db: db,
        tof_ns: tof,
        aod_az: 0.0,
        aod_zen: 1.0,
        aoa_az: 0.5,
        aoa_zen: 1.2,
        n_interactions: 1,
        retx_point: None,
        kind: MpcKind::Reflection,
    }
}

#[test]
fn cir_cases() {
    let c = spectrum_to_cir(&[mpc(-60.0, 20.0)]);
    assert_eq!(c.taps.len(), 1);
    assert_eq!(c.taps[0].0, 20.0);
    assert!((c.taps[0].1 - 1e-3).abs() < 1e-15);
    assert_eq!(c.bandwidth_hint_hz, 0.0);
    let c = spectrum_to_cir(&[mpc(-60.0, 20.0), mpc(-60.0, 20.0)]);
    assert_eq!(c.taps.len(), 1);
    assert!((c.total_power() - 2e-6).abs() < 1e-18);
    let c = spectrum_to_cir(&[mpc(-50.0, 30.0), mpc(-60.0, 20.0)]);
    assert!(c.taps[0].0 < c.taps[1].0);
    assert!((c.bandwidth_hint_hz - 1e8).abs() < 1.0);
}

proptest! {
    #[test]
    fn cir_conserves_power(seed in 0u64..10_000, n in 1usize..40) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let list: Vec<Mpc> = (0..n).map(|_| mpc(rng.random_range(-140.0..-30.0), (rng.random_range(0..30) as f64) * 0.5)).collect();
        let want: f64 = list.iter().map(|m| m.linear_power()).sum();
        let c = spectrum_to_cir(&list);
        prop_assert!(((c.total_power() - want) / want).abs() < 1e-9);
        prop_assert!(c.taps.windows(2).all(|w| w[0].0 < w[1].0));
        prop_assert!(c.taps.iter().all(|t| t.0 >= 0.0));
    }

    #[test]
    fn psnr_decreases_with_noise(seed in 0u64..1000) {
        let pose = Pose::panorama(Vec3::zeros(), 0.0, 24, 12).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let base: Vec<f64> = (0..pose.pixel_count()).map(|_| rng.random_range(-150.0..-20.0)).collect();
        let noise: Vec<f64> = (0..pose.pixel_count()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let gt = SpectrumGrid::pathloss(&pose, base.clone(), FLOOR).unwrap();
        let mut last = f64::INFINITY;
        for k in [0.5, 1.0, 2.0, 4.0] {
            let v = base.iter().zip(&noise).map(|(b, n)| (b + k * n).clamp(FLOOR, 0.0)).collect();
            let p = psnr(&SpectrumGrid::pathloss(&pose, v, FLOOR).unwrap(), &gt).unwrap();
            prop_assert!(p < last);
            last = p;
        }
    }
}

#[test]
fn metric_examples() {
    let pose = Pose::panorama(Vec3::zeros(), 0.0, 30, 15).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let v: Vec<f64> = (0..pose.pixel_count()).map(|_| rng.random_range(-120.0..-40.0)).collect();
    let gt = SpectrumGrid::pathloss(&pose, v.clone(), FLOOR).unwrap();
    assert_eq!(psnr(&gt, &gt).unwrap(), PSNR_CAP_DB);
    assert!((ssim(&gt, &gt).unwrap() - 1.0).abs() < 1e-12);
    let off = SpectrumGrid::pathloss(&pose, v.iter().map(|x| x + 1.0).collect(), FLOOR).unwrap();
    assert!((psnr(&off, &gt).unwrap() - 20.0 * 160f64.log10()).abs() < 1e-9);
    assert!((psnr(&off, &gt).unwrap() - 44.08).abs() < 0.01);
    let flat = SpectrumGrid::pathloss(&pose, vec![FLOOR; pose.pixel_count()], FLOOR).unwrap();
    let mut mse = 0.0;
    for x in &v {
        mse += (x - FLOOR).powi(2);
    }
    mse /= v.len() as f64;
    assert!((psnr(&flat, &gt).unwrap() - 10.0 * (160.0f64 * 160.0 / mse).log10()).abs() < 1e-9);
    let other = Pose::panorama(Vec3::zeros(), 0.0, 20, 15).unwrap();
    let bad = SpectrumGrid::pathloss(&other, vec![FLOOR; 300], FLOOR).unwrap();
    assert!(psnr(&bad, &gt).is_err() && ssim(&bad, &gt).is_err());
}

fn single_path() -> (Vec<Mpc>, Pose, Pose) {
    let tx = Vec3::new(0.0, 0.0, 1.5);
    let rx = Vec3::new(4.0, 1.0, 1.2);
    let m = trace(
        &OracleScene {
            facets: vec![],
            wedges: vec![],
            scatterers: vec![],
            bbox: Aabb {
                min: Vec3::new(-1.0, -1.0, 0.0),
                max: Vec3::new(5.0, 2.0, 3.0),
            },
        },
        &tx,
        &rx,
        &TraceOptions::default(),
    );
    (m, tx_pose(tx, 0.0, 90, 45).unwrap(), Pose::panorama(rx, 2.0, 180, 90).unwrap())
}

#[test]
fn free_space_beamforming_is_near_capacity() {
    let (m, tp, rp) = single_path();
    let scene = free_space(tp.position);
    let txs = render_tx_spectrum(&scene, &tp, &rp, FLOOR, &opts()).unwrap();
    let rxs = predict_pathloss(&scene, &rp, FLOOR, &opts()).unwrap();
    let r = beamform_eval(&txs, &tp, &rxs, &rp, &m, 2.4e9, &ArrayConfig::default()).unwrap();
    assert!(r.ratio >= 0.99 && r.ratio <= 1.0 + 1e-9, "{r:?}");
    let want = tp.direction_to_pixel(&m[0].aod_dir()).unwrap();
    let got = tp.direction_to_pixel(&rfpgs::math::direction_from_angles(r.chosen_aod.0, r.chosen_aod.1)).unwrap();
    assert_eq!(want, got);
}

#[test]
fn off_axis_beams_lose_rate() {
    let (m, tp, rp) = single_path();
    // model spectra with their only peak 90° away from the true path
    let aod = m[0].aod_dir();
    let side = aod.cross(&Vec3::z()).normalize();
    let mut txv = vec![FLOOR; tp.pixel_count()];
    let (c, r) = tp.direction_to_pixel(&side).or_else(|| tp.direction_to_pixel(&-side)).unwrap();
    txv[r * tp.width + c] = -50.0;
    let mut rxv = vec![FLOOR; rp.pixel_count()];
    let (c, r) = rp.direction_to_pixel(&Vec3::z()).unwrap();
    rxv[r * rp.width + c] = -50.0;
    let txs = SpectrumGrid::pathloss(&tp, txv, FLOOR).unwrap();
    let rxs = SpectrumGrid::pathloss(&rp, rxv, FLOOR).unwrap();
    let r = beamform_eval(&txs, &tp, &rxs, &rp, &m, 2.4e9, &ArrayConfig::default()).unwrap();
    assert!(r.achieved_rate_bps_hz < r.oracle_capacity_bps_hz);
    assert!(r.ratio < 0.5, "{r:?}");
}

#[test]
fn beamforming_rejects_empty_inputs() {
    let (m, tp, rp) = single_path();
    let flat_tx = SpectrumGrid::pathloss(&tp, vec![FLOOR; tp.pixel_count()], FLOOR).unwrap();
    let flat_rx = SpectrumGrid::pathloss(&rp, vec![FLOOR; rp.pixel_count()], FLOOR).unwrap();
    assert!(beamform_eval(&flat_tx, &tp, &flat_rx, &rp, &m, 2.4e9, &ArrayConfig::default()).is_err());
    let scene = free_space(tp.position);
    let txs = render_tx_spectrum(&scene, &tp, &rp, FLOOR, &opts()).unwrap();
    let rxs = predict_pathloss(&scene, &rp, FLOOR, &opts()).unwrap();
    assert!(beamform_eval(&txs, &tp, &rxs, &rp, &[], 2.4e9, &ArrayConfig::default()).is_err());
}

#[test]
fn beamforming_at_true_directions_never_beats_reference() {
    let bs = generate_box_scene(&BoxSceneConfig::default()).unwrap();
    let tp = tx_pose(bs.tx_position, 0.0, 90, 45).unwrap();
    for p in bs.test.iter().take(4) {
        let rp = Pose::panorama(p.position, p.yaw, 180, 90).unwrap();
        let m = trace(&bs.scene, &bs.tx_position, &p.position, &TraceOptions::default());
        let (txs, _) = mpcs_to_tx_spectrum(&m, &tp, FLOOR, None);
        let (rxs, _) = mpcs_to_spectrum(&m, &rp, FLOOR, None);
        let r = beamform_eval(&txs, &tp, &rxs, &rp, &m, 2.4e9, &ArrayConfig::default()).unwrap();
        assert!(r.ratio <= 1.0 + 1e-9 && r.ratio > 0.5, "{r:?}");
    }
}

#[test]
fn reports_carry_requested_metrics() {
    let dir = std::env::temp_dir().join(format!("rfpgs-report-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let rows = vec![
        EvalRow {
            pose_id: 0,
            psnr: Some(30.0),
            ssim: Some(0.9),
            ratio: None,
        },
        EvalRow {
            pose_id: 1,
            psnr: Some(20.0),
            ssim: Some(0.7),
            ratio: None,
        },
    ];
    let csv_path = dir.join("eval.csv");
    write_eval_csv(&csv_path, &rows, &["psnr", "ssim"]).unwrap();
    let text = std::fs::read_to_string(&csv_path).unwrap();
    assert_eq!(text.lines().next().unwrap(), "pose_id,psnr,ssim");
    assert_eq!(text.lines().count(), 3);
    let s = summarize(&rows);
    assert_eq!(s["psnr"].min, 20.0);
    assert_eq!(s["psnr"].mean, 25.0);
    assert_eq!(s["ssim"].max, 0.9);
    assert!(!s.contains_key("ratio"));
    write_summary_json(&dir.join("summary.json"), &rows).unwrap();
    assert!(write_eval_csv(&csv_path, &rows, &["lpips"]).is_err());
    std::fs::remove_dir_all(&dir).unwrap();
}
