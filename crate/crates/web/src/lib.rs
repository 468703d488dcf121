//! Browser demo: trains a small radio field of the box room in the page and
//! answers two queries at any receiver position, a side-by-side spectrum
//! image and the multipath components read off the model.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use wasm_bindgen::prelude::*;

use rfpgs::channel::{extract_spatial_csi, psnr};
use rfpgs::geomtrain::{init_from_facets, InitConfig};
use rfpgs::io::ramp_color;
use rfpgs::math::Vec3;
use rfpgs::oracle::{generate_box_scene, mpcs_to_spectrum, trace, BoxScene, BoxSceneConfig, Mpc, TraceOptions};
use rfpgs::projection::Pose;
use rfpgs::rftrain::{predict_pathloss, Provenance, RfSample, RfTrainConfig, RfTrainer};
use rfpgs::spectrum::SpectrumGrid;
use rfpgs::splat::RenderOptions;

const FLOOR: f64 = -160.0;
const WIDTH: usize = 90;
const HEIGHT: usize = 45;
const GUTTER: usize = 2;

fn js_err(e: rfpgs::Error) -> JsError {
    JsError::new(&e.to_string())
}

#[derive(Serialize)]
struct Path {
    kind: String,
    pathloss_db: f64,
    tof_ns: f64,
    aoa_az_deg: f64,
    aoa_zen_deg: f64,
}

impl Path {
    fn of(m: &Mpc) -> Path {
        Path {
            kind: m.kind.as_str().to_string(),
            pathloss_db: m.pathloss_db,
            tof_ns: m.tof_ns,
            aoa_az_deg: m.aoa_az.to_degrees(),
            aoa_zen_deg: m.aoa_zen.to_degrees(),
        }
    }
}

#[derive(Serialize)]
struct Csi {
    psnr_db: f64,
    predicted: Vec<Path>,
    oracle: Vec<Path>,
}

#[derive(Serialize)]
struct Room {
    size: [f64; 3],
    tx: [f64; 2],
    boxes: Vec<[f64; 4]>,
    train: Vec<[f64; 2]>,
}

#[wasm_bindgen]
pub struct Demo {
    room: BoxScene,
    config: BoxSceneConfig,
    // the sample set lives for the whole page; leaking it gives the trainer
    // a 'static borrow
    trainer: RfTrainer<'static>,
    opts: RenderOptions,
    last_loss: f64,
}

#[wasm_bindgen]
impl Demo {
    /// Box room with `gaussians` surface primitives sampled from its facets
    /// and `samples` clean training spectra.
    #[wasm_bindgen(constructor)]
    pub fn new(seed: u64, gaussians: usize, samples: usize) -> Result<Demo, JsError> {
        let config = BoxSceneConfig {
            seed,
            n_train: samples.max(1),
            ..BoxSceneConfig::default()
        };
        let room = generate_box_scene(&config).map_err(js_err)?;
        let init = InitConfig {
            count: gaussians,
            ..InitConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scene = init_from_facets(&room.scene, room.tx_position, 2.4e9, 3, &init, &mut rng).map_err(js_err)?;
        let mut set = Vec::with_capacity(room.train.len());
        for p in &room.train {
            let pose = Pose::panorama(p.position, p.yaw, WIDTH, HEIGHT).map_err(js_err)?;
            let (s, _) = truth(&room, &pose);
            set.push(RfSample::new(pose, s, Provenance::OracleClean).map_err(js_err)?);
        }
        let samples: &'static [RfSample] = Box::leak(set.into_boxed_slice());
        let cfg = RfTrainConfig {
            iterations: usize::MAX,
            seed,
            ..RfTrainConfig::default()
        };
        let opts = cfg.render_options();
        let trainer = RfTrainer::new(samples, cfg, scene).map_err(js_err)?;
        Ok(Demo {
            room,
            config,
            trainer,
            opts,
            last_loss: f64::NAN,
        })
    }

    /// Runs `steps` optimizer steps; returns the last L1 loss.
    pub fn train(&mut self, steps: usize) -> Result<f64, JsError> {
        for _ in 0..steps {
            self.last_loss = self.trainer.step().map_err(js_err)?.l1;
        }
        Ok(self.last_loss)
    }

    pub fn iteration(&self) -> usize {
        self.trainer.state.iteration
    }

    pub fn gaussian_count(&self) -> usize {
        self.trainer.state.scene.gaussians.len()
    }

    /// Room outline, Tx, box footprints and training positions as JSON.
    pub fn room(&self) -> String {
        let room = Room {
            size: self.config.room,
            tx: [self.room.tx_position.x, self.room.tx_position.y],
            boxes: self.room.boxes.iter().map(|b| [b.min.x, b.min.y, b.max.x, b.max.y]).collect(),
            train: self.room.train.iter().map(|p| [p.position.x, p.position.y]).collect(),
        };
        serde_json::to_string(&room).unwrap_or_default()
    }

    pub fn panel_width(&self) -> usize {
        2 * WIDTH + GUTTER
    }

    pub fn panel_height(&self) -> usize {
        HEIGHT
    }

    /// RGBA image of the oracle spectrum (left) and the model's prediction
    /// (right) at receiver `(x, y)`.
    pub fn render(&self, x: f64, y: f64) -> Result<Vec<u8>, JsError> {
        let pose = self.pose(x, y)?;
        let (gt, _) = truth(&self.room, &pose);
        let pred = predict_pathloss(&self.trainer.state.scene, &pose, FLOOR, &self.opts).map_err(js_err)?;
        let w = self.panel_width();
        let mut rgba = vec![255u8; w * HEIGHT * 4];
        for (k, grid) in [&gt, &pred].into_iter().enumerate() {
            let values = grid.pathloss_values().map_err(js_err)?;
            let x0 = k * (WIDTH + GUTTER);
            for r in 0..HEIGHT {
                for c in 0..WIDTH {
                    let o = (r * w + x0 + c) * 4;
                    rgba[o..o + 3].copy_from_slice(&ramp_color(values[r * WIDTH + c], FLOOR));
                }
            }
        }
        Ok(rgba)
    }

    /// Predicted and oracle paths at `(x, y)` plus the spectrum PSNR, as JSON.
    pub fn csi(&self, x: f64, y: f64) -> Result<String, JsError> {
        let pose = self.pose(x, y)?;
        let scene = &self.trainer.state.scene;
        let mut predicted = extract_spatial_csi(scene, &pose, FLOOR, &self.opts).map_err(js_err)?;
        let (gt, _) = truth(&self.room, &pose);
        let pred = predict_pathloss(scene, &pose, FLOOR, &self.opts).map_err(js_err)?;
        let mut oracle = trace(&self.room.scene, &self.room.tx_position, &pose.position, &TraceOptions::default());
        for list in [&mut predicted, &mut oracle] {
            list.sort_by(|a, b| b.pathloss_db.total_cmp(&a.pathloss_db));
        }
        let csi = Csi {
            psnr_db: psnr(&pred, &gt).map_err(js_err)?,
            predicted: predicted.iter().take(12).map(Path::of).collect(),
            oracle: oracle.iter().take(12).map(Path::of).collect(),
        };
        Ok(serde_json::to_string(&csi).unwrap_or_default())
    }
}

impl Demo {
    fn pose(&self, x: f64, y: f64) -> Result<Pose, JsError> {
        let [lx, ly, _] = self.config.room;
        if !(x > 0.0 && x < lx && y > 0.0 && y < ly) {
            return Err(JsError::new("receiver must lie inside the room"));
        }
        Pose::panorama(Vec3::new(x, y, self.config.pose_height), 0.0, WIDTH, HEIGHT).map_err(js_err)
    }
}

fn truth(room: &BoxScene, pose: &Pose) -> (SpectrumGrid, rfpgs::oracle::SpectrumStats) {
    let m = trace(&room.scene, &room.tx_position, &pose.position, &TraceOptions::default());
    mpcs_to_spectrum(&m, pose, FLOOR, None)
}
