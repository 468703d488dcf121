use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{Mpc, MpcKind};

/// Synthetic measurement imperfections applied to traced paths: per-path
/// gain jitter and random loss of weak paths. Stands in for estimated MPC
/// lists from a channel sounder.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MeasurementModel {
    /// Standard deviation of the per-path gain error (dB).
    pub gain_sigma_db: f64,
    /// Paths this far below the strongest one are weak (dB, positive).
    pub weak_below_db: f64,
    /// Probability that a weak path goes undetected.
    pub weak_dropout: f64,
}

impl Default for MeasurementModel {
    fn default() -> Self {
        MeasurementModel {
            gain_sigma_db: 1.0,
            weak_below_db: 20.0,
            weak_dropout: 0.3,
        }
    }
}

/// Applies `model` to one traced path list. LoS is always detected.
pub fn measure_mpcs<R: Rng + ?Sized>(mpcs: &[Mpc], model: &MeasurementModel, rng: &mut R) -> Vec<Mpc> {
    let strongest = mpcs.iter().map(|m| m.pathloss_db).fold(f64::NEG_INFINITY, f64::max);
    let mut out = Vec::with_capacity(mpcs.len());
    for m in mpcs {
        let noise: f64 = rng.sample(StandardNormal);
        let drop: f64 = rng.random();
        if m.kind != MpcKind::Los && m.pathloss_db < strongest - model.weak_below_db && drop < model.weak_dropout {
            continue;
        }
        let mut m = m.clone();
        if m.kind != MpcKind::Los {
            m.pathloss_db = (m.pathloss_db + model.gain_sigma_db * noise).min(0.0);
        }
        out.push(m);
    }
    out
}
