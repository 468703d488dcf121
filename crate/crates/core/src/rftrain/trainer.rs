use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::multiview::{merge_patches, ncc_loss_grad, patch_size, project_patch, select_neighbor_views, MergeMode, NeighborCriteria};
use super::predict::GainCache;
use super::RfSample;
use crate::error::{Error, Result};
use crate::optim::{LearningRates, ParamMask, SceneAdam};
use crate::scene::SceneModel;
use crate::sh::ShTable;
use crate::splat::{render, render_backward, RenderOptions, RenderUpstream, SceneGrad, Transmittance};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RfTrainConfig {
    pub iterations: usize,
    pub lambda_mv: f64,
    pub mv_mode: MergeMode,
    pub neighbors: NeighborCriteria,
    /// Patch side at `patch_ref_depth`; odd, at least 3.
    pub patch_base: usize,
    pub patch_cap: usize,
    pub patch_ref_depth: f64,
    pub patches_per_step: usize,
    /// L1 weight of pixels whose target sits at the floor.
    pub floor_weight: f64,
    pub finetune_cap: usize,
    pub finetune_lr_scale: f64,
    /// SH learning rate (dB-space coefficients).
    pub lr_sh: f64,
    pub lr_opacity: f64,
    /// Learning rates decay exponentially to this fraction over the run.
    pub lr_final: f64,
    /// Also refine opacity (re-renders the sample every step).
    pub train_opacity: bool,
    /// Reset every gain table to this constant before training.
    pub init_gain_db: Option<f64>,
    pub transmittance: Transmittance,
    pub checkpoint_interval: usize,
    pub seed: u64,
}

impl Default for RfTrainConfig {
    fn default() -> Self {
        RfTrainConfig {
            iterations: 3000,
            lambda_mv: 0.1,
            mv_mode: MergeMode::MinMerge,
            neighbors: NeighborCriteria::default(),
            patch_base: 5,
            patch_cap: 9,
            patch_ref_depth: 2.0,
            patches_per_step: 32,
            floor_weight: 0.25,
            finetune_cap: 500,
            finetune_lr_scale: 0.1,
            lr_sh: 2.0,
            lr_opacity: 0.05,
            lr_final: 0.1,
            train_opacity: false,
            init_gain_db: Some(-140.0),
            transmittance: Transmittance::Product,
            checkpoint_interval: 1000,
            seed: 0,
        }
    }
}

impl RfTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.finetune_cap == 0 {
            return Err(Error::invalid("finetune_cap must be positive"));
        }
        if self.patch_base < 3 || self.patch_base % 2 == 0 || self.patch_cap < self.patch_base || self.patch_cap % 2 == 0 {
            return Err(Error::invalid("patch sizes must be odd, at least 3, with cap ≥ base"));
        }
        if !(self.lambda_mv >= 0.0 && self.floor_weight >= 0.0 && self.lr_sh > 0.0 && self.lr_final > 0.0) {
            return Err(Error::invalid("loss weights and learning rates must be non-negative"));
        }
        Ok(())
    }

    pub fn render_options(&self) -> RenderOptions {
        RenderOptions {
            transmittance: self.transmittance,
            ..RenderOptions::default()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RfLossRecord {
    pub iteration: usize,
    pub sample: usize,
    pub mode: MergeMode,
    pub l1: f64,
    pub mv: f64,
    pub mv_patches: usize,
    pub mv_skipped: usize,
    pub total: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RfTrainerState {
    pub iteration: usize,
    pub scene: SceneModel,
    pub adam: SceneAdam,
}

pub struct RfTrainer<'a> {
    pub cfg: RfTrainConfig,
    samples: &'a [RfSample],
    caches: Vec<GainCache>,
    neighbors: Vec<Vec<usize>>,
    opts: RenderOptions,
    /// Sample visited at each iteration; `None` draws at random.
    schedule: Option<Vec<usize>>,
    lr_scale: f64,
    pub state: RfTrainerState,
    pub log: Vec<RfLossRecord>,
}

fn iteration_rng(seed: u64, it: usize) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed ^ 0x5246_5354);
    r.set_stream(it as u64 + 1);
    r
}

/// Resets every gain table to a constant of the scene's SH degree.
pub(crate) fn reset_gains(scene: &mut SceneModel, gain_db: f64) {
    let deg = scene.sh_degree;
    for g in &mut scene.gaussians {
        g.sh = ShTable::constant(deg, 1, gain_db);
    }
}

impl<'a> RfTrainer<'a> {
    pub fn new(samples: &'a [RfSample], cfg: RfTrainConfig, mut scene: SceneModel) -> Result<Self> {
        // a zero-iteration run passes the scene through untouched
        if let (Some(g), true) = (cfg.init_gain_db, cfg.iterations > 0) {
            reset_gains(&mut scene, g);
        }
        let state = RfTrainerState {
            iteration: 0,
            adam: SceneAdam::new(&scene),
            scene,
        };
        Self::resume(samples, cfg, state)
    }

    pub fn resume(samples: &'a [RfSample], cfg: RfTrainConfig, state: RfTrainerState) -> Result<Self> {
        cfg.validate()?;
        if samples.is_empty() {
            return Err(Error::EmptyDataset("RF training needs at least one sample".into()));
        }
        if state.adam.states.len() != state.scene.gaussians.len() {
            return Err(Error::Schema {
                what: "RF trainer state".into(),
                detail: "optimizer state disagrees with the scene".into(),
            });
        }
        let opts = cfg.render_options();
        let caches = samples
            .iter()
            .map(|s| GainCache::build(&state.scene, &s.pose, s.spectrum.floor_db, &opts))
            .collect::<Result<Vec<_>>>()?;
        let neighbors = samples
            .iter()
            .enumerate()
            .map(|(i, s)| select_neighbor_views(s, Some(i), samples, &cfg.neighbors))
            .collect();
        Ok(RfTrainer {
            cfg,
            samples,
            caches,
            neighbors,
            opts,
            schedule: None,
            lr_scale: 1.0,
            state,
            log: Vec::new(),
        })
    }

    pub fn done(&self) -> bool {
        self.state.iteration >= self.cfg.iterations
    }

    pub fn neighbors(&self, sample: usize) -> &[usize] {
        &self.neighbors[sample]
    }

    pub fn step(&mut self) -> Result<RfLossRecord> {
        let it = self.state.iteration;
        let mut rng = iteration_rng(self.cfg.seed, it);
        let si = match &self.schedule {
            Some(s) => s[it % s.len()],
            None => rng.random_range(0..self.samples.len()),
        };
        if self.cfg.train_opacity {
            self.caches[si] = GainCache::build(&self.state.scene, &self.samples[si].pose, self.samples[si].spectrum.floor_db, &self.opts)?;
        }
        let cache = &self.caches[si];
        let target = self.samples[si].spectrum.pathloss_values()?;
        let floor = cache.floor_db;
        let n = cache.pixel_count();
        let inv_n = 1.0 / n as f64;
        let gains = cache.gains(&self.state.scene);
        let raw = cache.assemble(&gains);

        let mut l1 = 0.0;
        let mut g_pred = vec![0.0; n];
        for px in 0..n {
            if !cache.trainable(px) {
                continue;
            }
            let t = target[px].max(floor);
            if t > floor {
                let e = raw[px] - t;
                l1 += e.abs() * inv_n;
                g_pred[px] = crate::math::sign0(e) * inv_n;
            } else if raw[px] > floor {
                l1 += self.cfg.floor_weight * (raw[px] - floor) * inv_n;
                g_pred[px] = self.cfg.floor_weight * inv_n;
            }
        }

        let (mut mv, mut used, mut skipped) = (0.0, 0, 0);
        if self.cfg.lambda_mv > 0.0 && !self.neighbors[si].is_empty() {
            let mut centers: Vec<usize> = (0..n)
                .filter(|&px| cache.trainable(px) && (target[px] > floor || raw[px] > floor))
                .collect();
            centers.shuffle(&mut rng);
            centers.truncate(self.cfg.patches_per_step);
            let mut g_mv = vec![0.0; n];
            for &c in &centers {
                let side = patch_size(cache.depth[c], self.cfg.patch_base, self.cfg.patch_cap, self.cfg.patch_ref_depth);
                let pix = patch_pixels(cache, c, side);
                let points: Vec<_> = pix.iter().map(|&p| cache.intersection(p)).collect();
                let refs: Vec<Vec<Option<f64>>> = self.neighbors[si]
                    .iter()
                    .map(|&nb| {
                        let nc = &self.caches[nb];
                        project_patch(&points, &self.samples[nb], Some((&nc.depth, &nc.valid)))
                    })
                    .collect();
                let Some(reference) = merge_patches(&refs, self.cfg.mv_mode) else {
                    skipped += 1;
                    continue;
                };
                let a: Vec<Option<f64>> = pix
                    .iter()
                    .map(|&p| cache.trainable(p).then(|| raw[p].max(floor)))
                    .collect();
                let Some((l, ga)) = ncc_loss_grad(&a, &reference) else {
                    skipped += 1;
                    continue;
                };
                mv += l;
                used += 1;
                for (k, &p) in pix.iter().enumerate() {
                    if raw[p] > floor {
                        g_mv[p] += ga[k];
                    }
                }
            }
            if used > 0 {
                mv /= used as f64;
                let k = self.cfg.lambda_mv / used as f64;
                for (g, m) in g_pred.iter_mut().zip(&g_mv) {
                    *g += k * m;
                }
            }
        }

        // clipped gains pass gradients that lower them and block the rest
        for (g, &v) in g_pred.iter_mut().zip(&gains) {
            if v > 0.0 && *g < 0.0 {
                *g = 0.0;
            }
        }
        let grad = if self.cfg.train_opacity {
            let pose = &self.samples[si].pose;
            let out = render(&self.state.scene, pose, &self.opts)?;
            let up = RenderUpstream {
                gain: Some(g_pred),
                ..Default::default()
            };
            render_backward(&self.state.scene, pose, &out, &up, &self.opts)?
        } else {
            gain_gradient(&self.state.scene, cache, &g_pred)
        };
        let decay = self.cfg.lr_final.powf(it as f64 / self.cfg.iterations.max(1) as f64) * self.lr_scale;
        let lr = LearningRates {
            position: 0.0,
            scale: 0.0,
            rotation: 0.0,
            opacity: self.cfg.lr_opacity * decay,
            sh: self.cfg.lr_sh * decay,
            color: 0.0,
        };
        let mask = ParamMask {
            opacity: self.cfg.train_opacity,
            ..ParamMask::GAIN
        };
        self.state.adam.step(&mut self.state.scene, &grad, &lr, mask);
        self.state.iteration = it + 1;
        let rec = RfLossRecord {
            iteration: it,
            sample: si,
            mode: self.cfg.mv_mode,
            l1,
            mv,
            mv_patches: used,
            mv_skipped: skipped,
            total: l1 + self.cfg.lambda_mv * mv,
        };
        self.log.push(rec.clone());
        Ok(rec)
    }

    pub fn run(&mut self, mut checkpoint: impl FnMut(&RfTrainer) -> Result<()>) -> Result<()> {
        while !self.done() {
            self.step()?;
            let ci = self.cfg.checkpoint_interval;
            if ci > 0 && self.state.iteration % ci == 0 {
                checkpoint(self)?;
            }
        }
        Ok(())
    }
}

/// Pixels of the `side × side` window centered on `c`, clipped at the raster
/// border and wrapped in azimuth for panoramas.
fn patch_pixels(cache: &GainCache, c: usize, side: usize) -> Vec<usize> {
    let pose = &cache.pose;
    let (col, row) = (c % pose.width, c / pose.width);
    let h = (side / 2) as isize;
    let mut out = Vec::with_capacity(side * side);
    for dr in -h..=h {
        for dc in -h..=h {
            if let Some((cc, rr)) = pose.neighbor(col, row, dc, dr) {
                out.push(rr * pose.width + cc);
            }
        }
    }
    out
}

/// SH gradient of `Σ_px g_px · gain_px` using the cached blend weights.
fn gain_gradient(scene: &SceneModel, cache: &GainCache, g: &[f64]) -> SceneGrad {
    let mut grad = SceneGrad::zeros(scene);
    for (px, &gp) in g.iter().enumerate() {
        if gp == 0.0 {
            continue;
        }
        let y = &cache.basis[px];
        for k in cache.offsets[px]..cache.offsets[px + 1] {
            let gi = cache.gids[k] as usize;
            let w = cache.weights[k] * gp;
            let sh = &mut grad.gaussians[gi].sh;
            for (j, v) in sh.iter_mut().enumerate() {
                *v += w * y[j];
            }
        }
    }
    grad
}

/// Stage-2 training from a scene with trained geometry.
pub fn train_rf(scene: SceneModel, samples: &[RfSample], cfg: &RfTrainConfig) -> Result<(SceneModel, Vec<RfLossRecord>)> {
    let mut t = RfTrainer::new(samples, cfg.clone(), scene)?;
    t.run(|_| Ok(()))?;
    Ok((t.state.scene, t.log))
}

/// Fine-tunes gains on measured samples: one shuffled pass capped at
/// `finetune_cap` iterations, max-merge multi-view loss, learning rates
/// scaled by `finetune_lr_scale`, gains kept from `scene`.
pub fn finetune(scene: SceneModel, samples: &[RfSample], cfg: &RfTrainConfig) -> Result<(SceneModel, Vec<RfLossRecord>)> {
    let mut t = RfTrainer::finetune_new(samples, cfg, scene)?;
    t.run(|_| Ok(()))?;
    Ok((t.state.scene, t.log))
}

fn finetune_plan(samples: &[RfSample], cfg: &RfTrainConfig) -> Result<(RfTrainConfig, Vec<usize>)> {
    if samples.is_empty() {
        return Err(Error::EmptyDataset("fine-tuning needs at least one measured sample".into()));
    }
    let ft = RfTrainConfig {
        iterations: cfg.finetune_cap.min(samples.len()),
        mv_mode: MergeMode::MaxMerge,
        init_gain_db: None,
        ..cfg.clone()
    };
    let mut order: Vec<usize> = (0..samples.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(cfg.seed));
    Ok((ft, order))
}

impl<'a> RfTrainer<'a> {
    /// Trainer following the fine-tuning protocol of [`finetune`].
    pub fn finetune_new(samples: &'a [RfSample], cfg: &RfTrainConfig, scene: SceneModel) -> Result<Self> {
        let (ft, order) = finetune_plan(samples, cfg)?;
        let mut t = RfTrainer::new(samples, ft, scene)?;
        t.schedule = Some(order);
        t.lr_scale = cfg.finetune_lr_scale;
        Ok(t)
    }

    pub fn finetune_resume(samples: &'a [RfSample], cfg: &RfTrainConfig, state: RfTrainerState) -> Result<Self> {
        let (ft, order) = finetune_plan(samples, cfg)?;
        let mut t = RfTrainer::resume(samples, ft, state)?;
        t.schedule = Some(order);
        t.lr_scale = cfg.finetune_lr_scale;
        Ok(t)
    }
}

pub fn write_rf_log(path: &std::path::Path, log: &[RfLossRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in log {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}
