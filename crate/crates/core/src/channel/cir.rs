use serde::{Deserialize, Serialize};

use crate::math::linear_from_db;
use crate::oracle::Mpc;

/// Delays closer than this merge into one tap (ns).
pub const TAP_MERGE_NS: f64 = 1e-9;

/// Channel impulse response: taps of `(delay_ns, linear amplitude)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cir {
    pub taps: Vec<(f64, f64)>,
    /// Bandwidth needed to resolve the closest pair of taps (Hz); 0 when
    /// there is at most one tap.
    pub bandwidth_hint_hz: f64,
}

impl Cir {
    pub fn total_power(&self) -> f64 {
        self.taps.iter().map(|t| t.1 * t.1).sum()
    }
}

/// Taps at each MPC's time of flight with amplitude `sqrt(power)`; paths
/// sharing a delay merge with summed power.
pub fn spectrum_to_cir(mpcs: &[Mpc]) -> Cir {
    let mut paths: Vec<(f64, f64)> = mpcs
        .iter()
        .map(|m| (m.tof_ns.max(0.0), linear_from_db(m.pathloss_db)))
        .collect();
    paths.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut merged: Vec<(f64, f64)> = Vec::with_capacity(paths.len());
    for (t, p) in paths {
        match merged.last_mut() {
            Some(last) if t - last.0 <= TAP_MERGE_NS => last.1 += p,
            _ => merged.push((t, p)),
        }
    }
    let min_gap = merged.windows(2).map(|w| w[1].0 - w[0].0).fold(f64::INFINITY, f64::min);
    Cir {
        taps: merged.into_iter().map(|(t, p)| (t, p.sqrt())).collect(),
        bandwidth_hint_hz: if min_gap.is_finite() { 1e9 / min_gap } else { 0.0 },
    }
}
