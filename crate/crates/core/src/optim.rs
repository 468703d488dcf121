//! Adam over planar-Gaussian parameters with per-group learning rates.
//!
//! Scales are optimized in log space and quaternions are renormalized after
//! every step.

use serde::{Deserialize, Serialize};

use crate::math::quat_normalize;
use crate::scene::SceneModel;
use crate::splat::SceneGrad;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LearningRates {
    pub position: f64,
    pub scale: f64,
    pub rotation: f64,
    pub opacity: f64,
    pub sh: f64,
    pub color: f64,
}

impl Default for LearningRates {
    fn default() -> Self {
        LearningRates {
            position: 1.6e-4,
            scale: 5e-3,
            rotation: 1e-3,
            opacity: 5e-2,
            sh: 2.5e-3,
            color: 2.5e-3,
        }
    }
}

impl LearningRates {
    pub fn scaled(&self, k: f64) -> Self {
        LearningRates {
            position: self.position * k,
            scale: self.scale * k,
            rotation: self.rotation * k,
            opacity: self.opacity * k,
            sh: self.sh * k,
            color: self.color * k,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub struct ParamMask {
    pub position: bool,
    pub scale: bool,
    pub rotation: bool,
    pub opacity: bool,
    pub sh: bool,
    pub color: bool,
}

impl ParamMask {
    pub const GEOMETRY: ParamMask = ParamMask {
        position: true,
        scale: true,
        rotation: true,
        opacity: true,
        sh: false,
        color: true,
    };
    pub const GAIN: ParamMask = ParamMask {
        position: false,
        scale: false,
        rotation: false,
        opacity: false,
        sh: true,
        color: false,
    };
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl Moments {
    pub(crate) fn zeros(n: usize) -> Self {
        Moments {
            m: vec![0.0; n],
            v: vec![0.0; n],
        }
    }
}

const BASE: usize = 11;

/// Adam state for every Gaussian of a scene; entries follow the Gaussian list
/// and must be kept in step when Gaussians are added or removed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneAdam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    pub states: Vec<Moments>,
}

impl SceneAdam {
    pub fn new(scene: &SceneModel) -> Self {
        SceneAdam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-15,
            step: 0,
            states: scene
                .gaussians
                .iter()
                .map(|g| Moments::zeros(BASE + g.sh.coeffs.len() + g.color.coeffs.len()))
                .collect(),
        }
    }

    /// Moments for a Gaussian appended to the scene.
    pub fn push_fresh(&mut self, scene: &SceneModel, index: usize) {
        let g = &scene.gaussians[index];
        self.states
            .push(Moments::zeros(BASE + g.sh.coeffs.len() + g.color.coeffs.len()));
    }

    /// Keeps the states whose flag is true, mirroring a prune of the scene.
    pub fn retain(&mut self, keep: &[bool]) {
        let mut i = 0;
        self.states.retain(|_| {
            let k = keep[i];
            i += 1;
            k
        });
    }

    pub fn step(&mut self, scene: &mut SceneModel, grad: &SceneGrad, lr: &LearningRates, mask: ParamMask) {
        self.step += 1;
        let (b1, b2, eps) = (self.beta1, self.beta2, self.eps);
        let c1 = 1.0 - b1.powi(self.step as i32);
        let c2 = 1.0 - b2.powi(self.step as i32);
        for ((g, gg), st) in scene
            .gaussians
            .iter_mut()
            .zip(&grad.gaussians)
            .zip(self.states.iter_mut())
        {
            let mut upd = |slot: usize, grad: f64, lr: f64| -> f64 {
                let m = &mut st.m[slot];
                let v = &mut st.v[slot];
                *m = b1 * *m + (1.0 - b1) * grad;
                *v = b2 * *v + (1.0 - b2) * grad * grad;
                lr * (*m / c1) / ((*v / c2).sqrt() + eps)
            };
            if mask.position {
                for k in 0..3 {
                    g.x_g[k] -= upd(k, gg.x[k], lr.position);
                }
            }
            if mask.scale {
                for k in 0..3 {
                    let ls = g.s_scale[k].ln() - upd(3 + k, gg.s[k] * g.s_scale[k], lr.scale);
                    g.s_scale[k] = ls.exp();
                }
            }
            if mask.rotation {
                for k in 0..4 {
                    g.q[k] -= upd(6 + k, gg.q[k], lr.rotation);
                }
                g.q = quat_normalize(&g.q);
            }
            if mask.opacity {
                g.alpha_logit -= upd(10, gg.alpha_logit, lr.opacity);
            }
            let nsh = g.sh.coeffs.len();
            if mask.sh {
                for k in 0..nsh {
                    g.sh.coeffs[k] -= upd(BASE + k, gg.sh[k], lr.sh);
                }
            }
            if mask.color {
                for k in 0..g.color.coeffs.len() {
                    g.color.coeffs[k] -= upd(BASE + nsh + k, gg.color[k], lr.color);
                }
            }
        }
    }
}
