use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::curvature::curvature_from_render;
use super::init::{clamp_to, InitConfig};
use super::losses::{loss_min_scale, loss_normal_alignment};
use super::normals::local_normals;
use super::wedge::{enlarge_wedge_gaussians, WedgeParams, WedgeReport, WedgeView};
use crate::channel::metrics::ssim_values;
use crate::error::{Error, Result};
use crate::oracle::{render_visual, Light, OracleScene, SKY};
use crate::optim::{LearningRates, Moments, ParamMask, SceneAdam};
use crate::projection::Pose;
use crate::scene::{min_axis, SceneModel};
use crate::splat::{render, render_backward, RenderOptions, RenderOutput, RenderUpstream, Transmittance};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DensifyConfig {
    pub enabled: bool,
    pub start: usize,
    pub interval: usize,
    pub until: usize,
    /// Mean position-gradient norm above which a Gaussian is cloned or split.
    pub grad_threshold: f64,
    /// In-plane scale (m) above which densification splits instead of cloning.
    pub split_scale: f64,
    pub prune_alpha: f64,
    pub max_gaussians: usize,
}

impl Default for DensifyConfig {
    fn default() -> Self {
        DensifyConfig {
            enabled: true,
            start: 500,
            interval: 500,
            until: 15_000,
            grad_threshold: 2e-4,
            split_scale: 0.08,
            prune_alpha: 0.005,
            max_gaussians: 60_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeomTrainConfig {
    pub iterations: usize,
    pub refine_start: usize,
    pub lambda_scale: f64,
    /// Weight of the normal alignment term, applied to its per-pixel mean.
    pub lambda_normal: f64,
    pub lambda_depth: f64,
    /// Share of the structural term in the photometric loss.
    pub lambda_ssim: f64,
    /// Wedge thresholds in m/px at a 1° pixel pitch.
    pub tau_perp: f64,
    pub tau_depth: f64,
    pub wedge: WedgeParams,
    pub densify: DensifyConfig,
    pub lr: LearningRates,
    /// Position learning rate decays exponentially to this fraction of its
    /// initial value over the run.
    pub position_lr_final: f64,
    pub init: InitConfig,
    pub transmittance: Transmittance,
    pub checkpoint_interval: usize,
    pub seed: u64,
}

impl Default for GeomTrainConfig {
    fn default() -> Self {
        GeomTrainConfig {
            iterations: 30_000,
            refine_start: 27_000,
            lambda_scale: 0.01,
            lambda_normal: 0.05,
            lambda_depth: 0.05,
            lambda_ssim: 0.2,
            tau_perp: 0.05,
            tau_depth: 0.25,
            wedge: WedgeParams::default(),
            densify: DensifyConfig::default(),
            lr: LearningRates::default(),
            position_lr_final: 0.01,
            init: InitConfig::default(),
            transmittance: Transmittance::Product,
            checkpoint_interval: 5000,
            seed: 0,
        }
    }
}

impl GeomTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.refine_start >= self.iterations && self.iterations > 0 {
            return Err(Error::invalid("refine_start must be below iterations"));
        }
        if !(self.tau_perp > 0.0 && self.tau_depth > 0.0) {
            return Err(Error::invalid("wedge thresholds must be positive"));
        }
        if self.wedge.min_views == 0 || !(self.wedge.radius_boost >= 1.0) {
            return Err(Error::invalid("wedge min_views must be positive and radius_boost at least 1"));
        }
        if self.densify.enabled && self.densify.interval == 0 {
            return Err(Error::invalid("densify interval must be positive"));
        }
        Ok(())
    }

    pub fn render_options(&self) -> RenderOptions {
        RenderOptions {
            transmittance: self.transmittance,
            background_color: SKY,
            ..RenderOptions::default()
        }
    }
}

/// Visual supervision for one pose: grayscale image plus optional ray depth.
#[derive(Clone, Debug, PartialEq)]
pub struct GeomView {
    pub pose: Pose,
    pub image: Vec<f64>,
    pub depth: Option<Vec<Option<f64>>>,
}

/// Lambertian renders of the oracle at each pose, with ground-truth depth.
pub fn views_from_oracle(oracle: &OracleScene, poses: &[Pose], light: Light) -> Vec<GeomView> {
    poses
        .iter()
        .map(|p| {
            let v = render_visual(oracle, p, light);
            GeomView {
                pose: p.clone(),
                image: v.image,
                depth: Some(v.depth),
            }
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeomLossRecord {
    pub iteration: usize,
    pub view: usize,
    pub gaussians: usize,
    pub l1: f64,
    pub ssim: f64,
    pub depth: f64,
    pub scale: f64,
    pub normal: f64,
    pub total: f64,
}

/// Everything needed to continue a run bit-identically.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeomTrainerState {
    pub iteration: usize,
    pub scene: SceneModel,
    pub adam: SceneAdam,
    pub grad_accum: Vec<f64>,
    pub grad_count: Vec<u32>,
    pub wedge_report: Option<WedgeReport>,
}

pub struct GeomTrainer<'a> {
    pub cfg: GeomTrainConfig,
    views: &'a [GeomView],
    opts: RenderOptions,
    pub state: GeomTrainerState,
    pub log: Vec<GeomLossRecord>,
}

fn iteration_rng(seed: u64, it: usize) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(it as u64 + 1);
    r
}

impl<'a> GeomTrainer<'a> {
    pub fn new(views: &'a [GeomView], cfg: GeomTrainConfig, scene: SceneModel) -> Result<Self> {
        let n = scene.gaussians.len();
        let state = GeomTrainerState {
            iteration: 0,
            adam: SceneAdam::new(&scene),
            scene,
            grad_accum: vec![0.0; n],
            grad_count: vec![0; n],
            wedge_report: None,
        };
        Self::resume(views, cfg, state)
    }

    pub fn resume(views: &'a [GeomView], cfg: GeomTrainConfig, state: GeomTrainerState) -> Result<Self> {
        cfg.validate()?;
        if views.is_empty() {
            return Err(Error::EmptyDataset("geometry training needs at least one view".into()));
        }
        for v in views {
            let n = v.pose.pixel_count();
            if v.image.len() != n || v.depth.as_ref().is_some_and(|d| d.len() != n) {
                return Err(Error::DimensionMismatch("view image or depth does not match its pose".into()));
            }
        }
        let n = state.scene.gaussians.len();
        if state.adam.states.len() != n || state.grad_accum.len() != n || state.grad_count.len() != n {
            return Err(Error::Schema {
                what: "geometry trainer state".into(),
                detail: "per-Gaussian arrays disagree with the scene".into(),
            });
        }
        Ok(GeomTrainer {
            opts: cfg.render_options(),
            cfg,
            views,
            state,
            log: Vec::new(),
        })
    }

    pub fn done(&self) -> bool {
        self.state.iteration >= self.cfg.iterations
    }

    /// Detects wedges over all views and enlarges one Gaussian per
    /// confirmed cluster.
    pub fn detect_wedges(&mut self) -> Result<WedgeReport> {
        let mut renders = Vec::with_capacity(self.views.len());
        for v in self.views {
            let out = render(&self.state.scene, &v.pose, &self.opts)?;
            let curv = curvature_from_render(&out, &v.pose, self.cfg.tau_perp, self.cfg.tau_depth)?;
            renders.push((out, curv));
        }
        let wv: Vec<WedgeView> = renders
            .iter()
            .map(|(r, c)| WedgeView {
                render: r,
                curvature: c,
            })
            .collect();
        Ok(enlarge_wedge_gaussians(&mut self.state.scene, &wv, &self.cfg.wedge))
    }

    pub fn step(&mut self) -> Result<GeomLossRecord> {
        let it = self.state.iteration;
        let mut rng = iteration_rng(self.cfg.seed, it);
        let refine = it >= self.cfg.refine_start;
        if refine && self.state.wedge_report.is_none() {
            self.state.wedge_report = Some(self.detect_wedges()?);
        }
        let vi = rng.random_range(0..self.views.len());
        let view = &self.views[vi];
        let pose = &view.pose;
        let out = render(&self.state.scene, pose, &self.opts)?;
        let n = out.pixel_count();
        let inv_n = 1.0 / n as f64;

        let w_l1 = 1.0 - self.cfg.lambda_ssim;
        let mut l1 = 0.0;
        let mut g_color = vec![0.0; n];
        for i in 0..n {
            let d = out.color_map[i] - view.image[i];
            l1 += d.abs() * inv_n;
            g_color[i] = w_l1 * crate::math::sign0(d) * inv_n;
        }
        let mut ssim = 1.0;
        if self.cfg.lambda_ssim > 0.0 && pose.width >= 11 && pose.height >= 11 {
            let (s, gs) = ssim_values(&out.color_map, &view.image, pose.width, pose.height, 1.0, true)?;
            ssim = s;
            for i in 0..n {
                g_color[i] -= self.cfg.lambda_ssim * gs[i];
            }
        }

        let mut depth_loss = 0.0;
        let mut g_depth = None;
        if let (Some(gt), true) = (&view.depth, self.cfg.lambda_depth > 0.0) {
            let idx: Vec<usize> = (0..n).filter(|&i| gt[i].is_some() && out.is_valid(i)).collect();
            if !idx.is_empty() {
                let k = self.cfg.lambda_depth / idx.len() as f64;
                let mut g = vec![0.0; n];
                for &i in &idx {
                    let d = out.depth_map[i] - gt[i].unwrap_or(0.0);
                    depth_loss += d.abs() / idx.len() as f64;
                    g[i] = k * crate::math::sign0(d);
                }
                g_depth = Some(g);
            }
        }

        let mut normal_loss = 0.0;
        let mut g_normal = None;
        if refine && self.cfg.lambda_normal > 0.0 {
            let curv = curvature_from_render(&out, pose, self.cfg.tau_perp, self.cfg.tau_depth)?;
            let local = local_normals(&out, pose);
            let (l, mut g) = loss_normal_alignment(&out.normal_map, &local, &curv, self.cfg.lambda_normal)?;
            normal_loss = l * inv_n;
            g.iter_mut().for_each(|v| *v *= inv_n);
            g_normal = Some(g);
        }

        let up = RenderUpstream {
            color: Some(g_color),
            depth: g_depth,
            normal: g_normal,
            ..Default::default()
        };
        let mut grad = render_backward(&self.state.scene, pose, &out, &up, &self.opts)?;
        let (scale_sum, sgrad) = loss_min_scale(&self.state.scene);
        let scale_loss = self.cfg.lambda_scale * scale_sum;
        for (g, s) in grad.gaussians.iter_mut().zip(&sgrad) {
            g.s += s * self.cfg.lambda_scale;
        }
        self.accumulate_stats(&out, &grad);

        let decay = self.cfg.position_lr_final.powf(it as f64 / self.cfg.iterations.max(1) as f64);
        let lr = LearningRates {
            position: self.cfg.lr.position * self.state.scene.bbox.extent() * decay,
            ..self.cfg.lr.clone()
        };
        self.state.adam.step(&mut self.state.scene, &grad, &lr, ParamMask::GEOMETRY);
        let bounds = self.state.scene.bbox.inflated(0.09);
        for g in &mut self.state.scene.gaussians {
            g.x_g = clamp_to(&bounds, &g.x_g);
        }

        let d = &self.cfg.densify;
        let next = it + 1;
        if d.enabled && next >= d.start && next <= d.until && next % d.interval == 0 {
            self.densify_and_prune(&mut rng);
        }
        self.state.iteration = next;
        let rec = GeomLossRecord {
            iteration: it,
            view: vi,
            gaussians: self.state.scene.gaussians.len(),
            l1,
            ssim,
            depth: depth_loss,
            scale: scale_loss,
            normal: normal_loss,
            total: w_l1 * l1 + self.cfg.lambda_ssim * (1.0 - ssim) + self.cfg.lambda_depth * depth_loss + scale_loss + normal_loss,
        };
        self.log.push(rec.clone());
        Ok(rec)
    }

    fn accumulate_stats(&mut self, out: &RenderOutput, grad: &crate::splat::SceneGrad) {
        let mut seen = vec![false; self.state.scene.gaussians.len()];
        for h in &out.hits {
            seen[h.gid as usize] = true;
        }
        for (i, s) in seen.iter().enumerate() {
            if *s {
                self.state.grad_accum[i] += grad.gaussians[i].x.norm();
                self.state.grad_count[i] += 1;
            }
        }
    }

    /// Clones small and splits large Gaussians with high mean position
    /// gradient, then drops nearly transparent ones.
    fn densify_and_prune(&mut self, rng: &mut ChaCha8Rng) {
        let d = self.cfg.densify.clone();
        let st = &mut self.state;
        let old = std::mem::take(&mut st.scene.gaussians);
        let old_states = std::mem::take(&mut st.adam.states);
        let mut budget = d.max_gaussians.saturating_sub(old.len());
        for (i, (g, m)) in old.into_iter().zip(old_states).enumerate() {
            if g.alpha_g() < d.prune_alpha {
                continue;
            }
            let avg = st.grad_accum[i] / f64::from(st.grad_count[i].max(1));
            if st.grad_count[i] == 0 || avg <= d.grad_threshold || budget == 0 {
                st.scene.gaussians.push(g);
                st.adam.states.push(m);
                continue;
            }
            let f = g.frame();
            let fresh = || Moments::zeros(m.m.len());
            if f.sa.max(f.sb) > d.split_scale {
                for _ in 0..2 {
                    let mut c = g.clone();
                    let u: f64 = rng.sample(StandardNormal);
                    let v: f64 = rng.sample(StandardNormal);
                    c.x_g += f.a * (u * f.sa) + f.b * (v * f.sb);
                    let k = min_axis(&c.s_scale);
                    for ax in 0..3 {
                        if ax != k {
                            c.s_scale[ax] /= 1.6;
                        }
                    }
                    st.scene.gaussians.push(c);
                    st.adam.states.push(fresh());
                }
            } else {
                st.scene.gaussians.push(g.clone());
                st.adam.states.push(m.clone());
                st.scene.gaussians.push(g);
                st.adam.states.push(fresh());
            }
            budget -= 1;
        }
        let n = st.scene.gaussians.len();
        st.grad_accum = vec![0.0; n];
        st.grad_count = vec![0; n];
    }

    /// Steps until `iterations`, calling `checkpoint` after every
    /// `checkpoint_interval` iterations.
    pub fn run(&mut self, mut checkpoint: impl FnMut(&GeomTrainer) -> Result<()>) -> Result<()> {
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

#[derive(Clone, Debug)]
pub struct GeomTrainResult {
    pub scene: SceneModel,
    pub log: Vec<GeomLossRecord>,
    pub wedge_report: Option<WedgeReport>,
}

/// Runs stage-1 training from `scene` over `views`.
pub fn train_geometry(views: &[GeomView], cfg: &GeomTrainConfig, scene: SceneModel) -> Result<GeomTrainResult> {
    let mut t = GeomTrainer::new(views, cfg.clone(), scene)?;
    t.run(|_| Ok(()))?;
    Ok(GeomTrainResult {
        scene: t.state.scene,
        log: t.log,
        wedge_report: t.state.wedge_report,
    })
}

/// Writes the loss log as CSV.
pub fn write_geom_log(path: &std::path::Path, log: &[GeomLossRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in log {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}
