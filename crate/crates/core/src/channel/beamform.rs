use std::f64::consts::TAU;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{direction_angles, linear_from_db, wavelength_from_carrier, Vec3};
use crate::oracle::Mpc;
use crate::projection::Pose;
use crate::spectrum::SpectrumGrid;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArrayConfig {
    /// Tx planar array `[columns, rows]`.
    pub tx: [usize; 2],
    pub rx: [usize; 2],
    /// Element spacing in wavelengths.
    pub spacing: f64,
    /// Per-antenna SNR of the strongest true path (dB).
    pub snr_db: f64,
}

impl Default for ArrayConfig {
    fn default() -> Self {
        ArrayConfig {
            tx: [8, 8],
            rx: [4, 4],
            spacing: 0.5,
            snr_db: 10.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BeamformingReport {
    /// World `(azimuth, zenith)` of the chosen departure beam.
    pub chosen_aod: (f64, f64),
    pub chosen_aoa: (f64, f64),
    pub achieved_rate_bps_hz: f64,
    pub oracle_capacity_bps_hz: f64,
    pub ratio: f64,
}

/// Planar array facing the pose's forward axis, elements centered on the
/// pose position. Offsets are in wavelengths.
struct PlanarArray {
    elements: Vec<Vec3>,
}

impl PlanarArray {
    fn new(pose: &Pose, dims: [usize; 2], spacing: f64) -> PlanarArray {
        let f = pose.forward();
        let mut right = f.cross(&Vec3::z());
        if right.norm() < 1e-9 {
            right = f.cross(&Vec3::x());
        }
        let right = right.normalize();
        let up = right.cross(&f).normalize();
        let (cx, cy) = ((dims[0] as f64 - 1.0) / 2.0, (dims[1] as f64 - 1.0) / 2.0);
        let mut elements = Vec::with_capacity(dims[0] * dims[1]);
        for j in 0..dims[1] {
            for i in 0..dims[0] {
                elements.push((right * (i as f64 - cx) + up * (j as f64 - cy)) * spacing);
            }
        }
        PlanarArray { elements }
    }

    fn steering(&self, d: &Vec3) -> Vec<Complex64> {
        self.elements.iter().map(|p| Complex64::from_polar(1.0, TAU * p.dot(d))).collect()
    }

    /// Unit-norm beam steered toward `d`.
    fn beam(&self, d: &Vec3) -> Vec<Complex64> {
        let k = 1.0 / (self.elements.len() as f64).sqrt();
        self.steering(d).into_iter().map(|a| a * k).collect()
    }

    /// `a(d)ᴴ w`.
    fn response(&self, d: &Vec3, w: &[Complex64]) -> Complex64 {
        self.steering(d).iter().zip(w).map(|(a, w)| a.conj() * w).sum()
    }
}

fn argmax_direction(spec: &SpectrumGrid, pose: &Pose) -> Result<Vec3> {
    if spec.width != pose.width || spec.height != pose.height {
        return Err(Error::DimensionMismatch(format!(
            "spectrum {}x{} vs pose {}x{}",
            spec.width, spec.height, pose.width, pose.height
        )));
    }
    let v = spec.pathloss_values()?;
    let (px, best) = v
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(&a.0)))
        .ok_or_else(|| Error::EmptyDataset("empty spectrum".into()))?;
    if *best <= spec.floor_db {
        return Err(Error::EmptyDataset("spectrum carries no energy above the floor".into()));
    }
    pose.pixel_to_direction(px % pose.width, px / pose.width)
}

/// Single-stream analog beamforming with beams steered at the strongest
/// pixels of the model's Tx and Rx spectra, scored against the true paths.
/// The reference steers at the strongest true path and combines every path
/// phase-coherently.
pub fn beamform_eval(
    tx_spectrum: &SpectrumGrid,
    tx_pose: &Pose,
    rx_spectrum: &SpectrumGrid,
    rx_pose: &Pose,
    true_mpcs: &[Mpc],
    carrier_hz: f64,
    cfg: &ArrayConfig,
) -> Result<BeamformingReport> {
    if true_mpcs.is_empty() {
        return Err(Error::EmptyDataset("no true multipath components".into()));
    }
    let aod = argmax_direction(tx_spectrum, tx_pose)?;
    let aoa = argmax_direction(rx_spectrum, rx_pose)?;
    let lambda = wavelength_from_carrier(carrier_hz);
    let txa = PlanarArray::new(tx_pose, cfg.tx, cfg.spacing);
    let rxa = PlanarArray::new(rx_pose, cfg.rx, cfg.spacing);
    let strongest = true_mpcs.iter().max_by(|a, b| a.pathloss_db.total_cmp(&b.pathloss_db)).expect("non-empty");
    let p_ref = linear_from_db(strongest.pathloss_db);
    let snr = linear_from_db(cfg.snr_db);
    let terms = |d_tx: &Vec3, d_rx: &Vec3| -> Vec<Complex64> {
        let (wt, wr) = (txa.beam(d_tx), rxa.beam(d_rx));
        true_mpcs
            .iter()
            .map(|m| {
                let amp = (linear_from_db(m.pathloss_db) / p_ref).sqrt();
                let phase = Complex64::from_polar(1.0, -TAU * m.path_length_m() / lambda);
                phase * amp * txa.response(&m.aod_dir(), &wt) * rxa.response(&m.aoa_dir(), &wr)
            })
            .collect()
    };
    let h: Complex64 = terms(&aod, &aoa).into_iter().sum();
    // coherent over paths inside both half-power main lobes; the rest keep
    // their phases so the reference never falls below the achieved channel
    // for the same beams
    let (sd_tx, sd_rx) = (strongest.aod_dir(), strongest.aoa_dir());
    let (wt, wr) = (txa.beam(&sd_tx), rxa.beam(&sd_rx));
    let (mut coherent, mut rest) = (0.0, Complex64::new(0.0, 0.0));
    for (m, t) in true_mpcs.iter().zip(terms(&sd_tx, &sd_rx)) {
        let in_lobe = txa.response(&m.aod_dir(), &wt).norm_sqr() >= 0.5 * txa.elements.len() as f64
            && rxa.response(&m.aoa_dir(), &wr).norm_sqr() >= 0.5 * rxa.elements.len() as f64;
        if in_lobe {
            coherent += t.norm();
        } else {
            rest += t;
        }
    }
    let h_ref = coherent + rest.norm();
    let achieved = (1.0 + snr * h.norm_sqr()).log2();
    let oracle = (1.0 + snr * h_ref * h_ref).log2();
    Ok(BeamformingReport {
        chosen_aod: direction_angles(&aod),
        chosen_aoa: direction_angles(&aoa),
        achieved_rate_bps_hz: achieved,
        oracle_capacity_bps_hz: oracle,
        ratio: achieved / oracle,
    })
}
