use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rfpgs::channel::{
    beamform_eval, psnr, render_tx_spectrum, ssim, tx_pose, write_eval_csv, write_summary_json, EvalRow,
};
use rfpgs::geomtrain::{init_from_facets, init_in_bbox, write_geom_log, GeomLossRecord, GeomTrainer, GeomTrainerState};
use rfpgs::io::{read_json, save_visual, write_json, write_panel_png, Dataset, Manifest, ManifestEntry, VisualEntry, MANIFEST_VERSION};
use rfpgs::oracle::{
    generate_box_scene, measure_mpcs, mpcs_to_spectrum, mpcs_to_tx_spectrum, render_visual, trace, write_mpc_csv,
    OracleScene, PoseSpec, Psf,
};
use rfpgs::projection::Pose;
use rfpgs::rftrain::{predict_pathloss, write_rf_log, Provenance, RfLossRecord, RfSample, RfTrainer, RfTrainerState};
use rfpgs::scene::SceneModel;
use serde::{Deserialize, Serialize};

use crate::config::{GeomInit, RunConfig};

fn create_dir(p: &Path) -> Result<()> {
    fs::create_dir_all(p).with_context(|| format!("creating {}", p.display()))
}

fn split_manifest(data: &Path, split: &str) -> PathBuf {
    data.join(split).join("manifest.json")
}

fn load_model(cfg: &RunConfig) -> Result<SceneModel> {
    let path = cfg.model.as_ref().context("this command needs `model` (a trained SceneModel JSON)")?;
    Ok(SceneModel::load(path)?)
}

fn check_pairing(scene: &SceneModel, ds: &Dataset) -> Result<()> {
    let m = &ds.manifest;
    if (scene.tx_position - m.tx_position).norm() > 1e-9 || (scene.carrier_hz - m.carrier_hz).abs() > 1e-6 {
        bail!(
            "model (Tx {:?}, {} Hz) does not match dataset {} (Tx {:?}, {} Hz)",
            scene.tx_position,
            scene.carrier_hz,
            ds.dir.display(),
            m.tx_position,
            m.carrier_hz
        );
    }
    Ok(())
}

pub fn gen(cfg: &RunConfig) -> Result<()> {
    let g = &cfg.gen;
    let bs = generate_box_scene(&g.scene)?;
    bs.scene.save(&cfg.out_dir.join("scene.json"))?;
    let carrier = g.trace.carrier_hz;
    let tp = tx_pose(bs.tx_position, 0.0, g.tx_size[0], g.tx_size[1])?;
    let psf = g.psf_beamwidth.map(|b| Psf {
        beamwidth: b.radians(),
        truncate_sigma: g.psf_truncate_sigma,
    });
    for (split, poses, salt) in [("train", &bs.train, 0u64), ("test", &bs.test, 1u64)] {
        let dir = cfg.out_dir.join(split);
        create_dir(&dir)?;
        let entries = poses
            .iter()
            .enumerate()
            .map(|(i, p)| gen_entry(cfg, &bs.scene, bs.tx_position, &tp, psf.as_ref(), &dir, i, p, salt))
            .collect::<Result<Vec<_>>>()?;
        Manifest {
            version: MANIFEST_VERSION,
            split: split.into(),
            tx_position: bs.tx_position,
            carrier_hz: carrier,
            floor_db: cfg.floor_db,
            tx_pose: Some(tp.clone()),
            entries,
        }
        .save(&dir.join("manifest.json"))?;
    }
    eprintln!("gen: {} train + {} test poses in {}", bs.train.len(), bs.test.len(), cfg.out_dir.display());
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn gen_entry(
    cfg: &RunConfig,
    scene: &OracleScene,
    tx: rfpgs::math::Vec3,
    tp: &Pose,
    psf: Option<&Psf>,
    dir: &Path,
    i: usize,
    p: &PoseSpec,
    salt: u64,
) -> Result<ManifestEntry> {
    let g = &cfg.gen;
    let pose = Pose::panorama(p.position, p.yaw, g.rx_size[0], g.rx_size[1])?;
    let mut mpcs = trace(scene, &tx, &p.position, &g.trace);
    let provenance = match &g.measurement {
        Some(model) => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ (salt << 32) ^ i as u64);
            mpcs = measure_mpcs(&mpcs, model, &mut rng);
            Provenance::MeasuredMpc
        }
        None => Provenance::OracleClean,
    };
    let name = |kind: &str| format!("{kind}_{i:03}");
    write_mpc_csv(&dir.join(format!("{}.csv", name("mpc"))), &mpcs)?;
    let (rx, _) = mpcs_to_spectrum(&mpcs, &pose, cfg.floor_db, None);
    rx.save(&dir.join(name("rx")))?;
    let spectrum_psf = match psf {
        Some(psf) => {
            let (b, _) = mpcs_to_spectrum(&mpcs, &pose, cfg.floor_db, Some(psf));
            b.save(&dir.join(name("rx_psf")))?;
            Some(name("rx_psf"))
        }
        None => None,
    };
    let (txs, _) = mpcs_to_tx_spectrum(&mpcs, tp, cfg.floor_db, None);
    txs.save(&dir.join(name("tx")))?;
    let vpose = Pose::panorama(p.position, p.yaw, g.visual_size[0], g.visual_size[1])?;
    let v = render_visual(scene, &vpose, g.light);
    save_visual(&dir.join(name("vis")), &vpose, &v.image, &v.depth)?;
    Ok(ManifestEntry {
        id: i,
        pose,
        spectrum: name("rx"),
        spectrum_psf,
        tx_spectrum: Some(name("tx")),
        mpcs: Some(format!("{}.csv", name("mpc"))),
        visual: Some(VisualEntry {
            pose: vpose,
            stem: name("vis"),
        }),
        provenance,
    })
}

#[derive(Serialize, Deserialize)]
struct GeomCheckpoint {
    state: GeomTrainerState,
    log: Vec<GeomLossRecord>,
}

#[derive(Serialize, Deserialize)]
struct RfCheckpoint {
    state: RfTrainerState,
    log: Vec<RfLossRecord>,
}

fn checkpoint_path(cfg: &RunConfig, stage: &str, it: usize) -> PathBuf {
    cfg.out_dir.join("checkpoints").join(format!("{stage}_{it:06}.json"))
}

pub fn train_geom(cfg: &RunConfig) -> Result<()> {
    let ds = Dataset::load(&split_manifest(&cfg.data, "train"))?;
    let mut views = ds.geom_views()?;
    if let Some(n) = cfg.train.samples {
        views.truncate(n);
    }
    let (mut t, mut log) = match &cfg.resume {
        Some(p) => {
            let ck: GeomCheckpoint = read_json(p)?;
            (GeomTrainer::resume(&views, cfg.geom.clone(), ck.state)?, ck.log)
        }
        None => {
            let oracle = OracleScene::load(&cfg.data.join("scene.json"))?;
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            let (tx, carrier, deg) = (ds.manifest.tx_position, ds.manifest.carrier_hz, cfg.train.sh_degree);
            let scene = match cfg.train.init {
                GeomInit::Facets => init_from_facets(&oracle, tx, carrier, deg, &cfg.geom.init, &mut rng)?,
                GeomInit::Bbox => init_in_bbox(&oracle.bbox, tx, carrier, deg, &cfg.geom.init, &mut rng)?,
            };
            (GeomTrainer::new(&views, cfg.geom.clone(), scene)?, Vec::new())
        }
    };
    create_dir(&cfg.out_dir.join("checkpoints"))?;
    let start = Instant::now();
    let prior = log.clone();
    t.run(|t| {
        let mut all = prior.clone();
        all.extend_from_slice(&t.log);
        let ck = GeomCheckpoint {
            state: t.state.clone(),
            log: all,
        };
        write_json(&checkpoint_path(cfg, "geom", t.state.iteration), &ck)?;
        Ok(())
    })?;
    log.extend(t.log);
    t.state.scene.save(&cfg.out_dir.join("model.json"))?;
    write_geom_log(&cfg.out_dir.join("geom_log.csv"), &log)?;
    if let Some(w) = &t.state.wedge_report {
        write_json(&cfg.out_dir.join("wedges.json"), w)?;
    }
    eprintln!(
        "train-geom: {} iterations, {} Gaussians, {:.1}s",
        t.state.iteration,
        t.state.scene.gaussians.len(),
        start.elapsed().as_secs_f64()
    );
    Ok(())
}

fn run_rf(cfg: &RunConfig, mut t: RfTrainer, mut log: Vec<RfLossRecord>, stage: &str) -> Result<()> {
    create_dir(&cfg.out_dir.join("checkpoints"))?;
    let start = Instant::now();
    let prior = log.clone();
    t.run(|t| {
        let mut all = prior.clone();
        all.extend_from_slice(&t.log);
        let ck = RfCheckpoint {
            state: t.state.clone(),
            log: all,
        };
        write_json(&checkpoint_path(cfg, stage, t.state.iteration), &ck)?;
        Ok(())
    })?;
    log.extend(std::mem::take(&mut t.log));
    t.state.scene.save(&cfg.out_dir.join("model.json"))?;
    write_rf_log(&cfg.out_dir.join(format!("{stage}_log.csv")), &log)?;
    eprintln!("{stage}: {} iterations, {:.1}s", t.state.iteration, start.elapsed().as_secs_f64());
    Ok(())
}

fn rf_inputs(cfg: &RunConfig, data: &Path, psf: bool, limit: Option<usize>) -> Result<(Dataset, Vec<RfSample>)> {
    let ds = Dataset::load(&split_manifest(data, "train"))?;
    let samples = ds.rf_samples(psf, limit)?;
    if samples.iter().any(|x| x.spectrum.floor_db != cfg.floor_db) {
        bail!("dataset floor differs from floor_db {}", cfg.floor_db);
    }
    Ok((ds, samples))
}

pub fn train_rf(cfg: &RunConfig) -> Result<()> {
    let (ds, samples) = rf_inputs(cfg, &cfg.data, cfg.train.psf, cfg.train.samples)?;
    let (t, log) = match &cfg.resume {
        Some(p) => {
            let ck: RfCheckpoint = read_json(p)?;
            (RfTrainer::resume(&samples, cfg.rf.clone(), ck.state)?, ck.log)
        }
        None => {
            let scene = load_model(cfg)?;
            check_pairing(&scene, &ds)?;
            (RfTrainer::new(&samples, cfg.rf.clone(), scene)?, Vec::new())
        }
    };
    run_rf(cfg, t, log, "rf")
}

pub fn finetune(cfg: &RunConfig) -> Result<()> {
    let data = cfg.finetune.data.clone().unwrap_or_else(|| cfg.data.clone());
    let (ds, samples) = rf_inputs(cfg, &data, false, cfg.finetune.samples)?;
    let (t, log) = match &cfg.resume {
        Some(p) => {
            let ck: RfCheckpoint = read_json(p)?;
            (RfTrainer::finetune_resume(&samples, &cfg.rf, ck.state)?, ck.log)
        }
        None => {
            let scene = load_model(cfg)?;
            check_pairing(&scene, &ds)?;
            (RfTrainer::finetune_new(&samples, &cfg.rf, scene)?, Vec::new())
        }
    };
    run_rf(cfg, t, log, "finetune")
}

fn split_inputs(cfg: &RunConfig, split: &str) -> Result<(SceneModel, Dataset)> {
    let scene = load_model(cfg)?;
    let ds = Dataset::load(&split_manifest(&cfg.data, split))?;
    check_pairing(&scene, &ds)?;
    Ok((scene, ds))
}

pub fn render(cfg: &RunConfig) -> Result<()> {
    let (scene, ds) = split_inputs(cfg, &cfg.render.split)?;
    let opts = cfg.rf.render_options();
    let dir = cfg.out_dir.join("render");
    create_dir(&dir)?;
    let start = Instant::now();
    for e in &ds.manifest.entries {
        let pred = predict_pathloss(&scene, &e.pose, cfg.floor_db, &opts)?;
        pred.save(&dir.join(format!("rx_{:03}", e.id)))?;
        if cfg.render.panels {
            let gt = rfpgs::spectrum::SpectrumGrid::load(&ds.path(&e.spectrum))?;
            write_panel_png(&dir.join(format!("rx_{:03}.png", e.id)), &[&gt, &pred])?;
        }
        if let (true, Some(tp)) = (cfg.render.tx, &ds.manifest.tx_pose) {
            let txs = render_tx_spectrum(&scene, tp, &e.pose, cfg.floor_db, &opts)?;
            txs.save(&dir.join(format!("tx_{:03}", e.id)))?;
            if cfg.render.panels && e.tx_spectrum.is_some() {
                let gt = ds.tx_spectrum(e)?;
                write_panel_png(&dir.join(format!("tx_{:03}.png", e.id)), &[&gt, &txs])?;
            }
        }
    }
    eprintln!("render: {} poses, {:.1}s", ds.manifest.entries.len(), start.elapsed().as_secs_f64());
    Ok(())
}

fn beam_report(
    cfg: &RunConfig,
    scene: &SceneModel,
    ds: &Dataset,
    e: &ManifestEntry,
    array: &rfpgs::channel::ArrayConfig,
) -> Result<rfpgs::channel::BeamformingReport> {
    let opts = cfg.rf.render_options();
    let tp = ds.manifest.tx_pose.as_ref().context("dataset manifest has no Tx pose")?;
    let txs = render_tx_spectrum(scene, tp, &e.pose, cfg.floor_db, &opts)?;
    let rxs = predict_pathloss(scene, &e.pose, cfg.floor_db, &opts)?;
    let mpcs = ds.mpcs(e)?;
    Ok(beamform_eval(&txs, tp, &rxs, &e.pose, &mpcs, scene.carrier_hz, array)?)
}

pub fn eval(cfg: &RunConfig) -> Result<()> {
    let (scene, ds) = split_inputs(cfg, &cfg.eval.split)?;
    let opts = cfg.rf.render_options();
    let want = |m: &str| cfg.eval.metric.iter().any(|x| x == m);
    if cfg.eval.panels {
        create_dir(&cfg.out_dir.join("panels"))?;
    }
    let mut rows = Vec::new();
    for e in &ds.manifest.entries {
        let stem = if cfg.eval.psf {
            e.spectrum_psf.as_ref().context("dataset has no blurred spectra")?
        } else {
            &e.spectrum
        };
        let gt = rfpgs::spectrum::SpectrumGrid::load(&ds.path(stem))?;
        let pred = predict_pathloss(&scene, &e.pose, cfg.floor_db, &opts)?;
        let ratio = if want("ratio") {
            Some(beam_report(cfg, &scene, &ds, e, &cfg.beamform.array)?.ratio)
        } else {
            None
        };
        if cfg.eval.panels {
            write_panel_png(&cfg.out_dir.join("panels").join(format!("rx_{:03}.png", e.id)), &[&gt, &pred])?;
        }
        rows.push(EvalRow {
            pose_id: e.id,
            psnr: if want("psnr") { Some(psnr(&pred, &gt)?) } else { None },
            ssim: if want("ssim") { Some(ssim(&pred, &gt)?) } else { None },
            ratio,
        });
    }
    let metrics: Vec<&str> = cfg.eval.metric.iter().map(String::as_str).collect();
    write_eval_csv(&cfg.out_dir.join("eval.csv"), &rows, &metrics)?;
    write_summary_json(&cfg.out_dir.join("summary.json"), &rows)?;
    Ok(())
}

#[derive(Serialize)]
struct BeamRow {
    pose_id: usize,
    aod_az: f64,
    aod_zen: f64,
    aoa_az: f64,
    aoa_zen: f64,
    achieved_rate_bps_hz: f64,
    oracle_capacity_bps_hz: f64,
    ratio: f64,
}

pub fn beamform(cfg: &RunConfig) -> Result<()> {
    let (scene, ds) = split_inputs(cfg, &cfg.beamform.split)?;
    let path = cfg.out_dir.join("beamform.csv");
    let mut w = csv_writer(&path)?;
    let mut rows = Vec::new();
    for e in &ds.manifest.entries {
        let r = beam_report(cfg, &scene, &ds, e, &cfg.beamform.array)?;
        w.serialize(BeamRow {
            pose_id: e.id,
            aod_az: r.chosen_aod.0,
            aod_zen: r.chosen_aod.1,
            aoa_az: r.chosen_aoa.0,
            aoa_zen: r.chosen_aoa.1,
            achieved_rate_bps_hz: r.achieved_rate_bps_hz,
            oracle_capacity_bps_hz: r.oracle_capacity_bps_hz,
            ratio: r.ratio,
        })?;
        rows.push(EvalRow {
            pose_id: e.id,
            psnr: None,
            ssim: None,
            ratio: Some(r.ratio),
        });
    }
    w.flush().with_context(|| format!("writing {}", path.display()))?;
    write_summary_json(&cfg.out_dir.join("summary.json"), &rows)?;
    Ok(())
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))
}
