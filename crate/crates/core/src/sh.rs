//! Real spherical harmonics up to degree 3 and per-channel coefficient tables.
//!
//! Basis order within a degree is m = -l..l, with the usual graphics sign
//! convention (degree-1 terms are `-C1·y, C1·z, -C1·x`).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::Vec3;

pub const MAX_DEGREE: usize = 3;
pub const Y00: f64 = 0.282_094_791_773_878_1;
const C1: f64 = 0.488_602_511_902_919_9;
const C2: [f64; 5] = [
    1.092_548_430_592_079_2,
    -1.092_548_430_592_079_2,
    0.315_391_565_252_520_05,
    -1.092_548_430_592_079_2,
    0.546_274_215_296_039_6,
];
const C3: [f64; 7] = [
    -0.590_043_589_926_643_5,
    2.890_611_442_640_554,
    -0.457_045_799_464_465_8,
    0.373_176_332_590_115_4,
    -0.457_045_799_464_465_8,
    1.445_305_721_320_277,
    -0.590_043_589_926_643_5,
];

pub fn basis_count(degree: usize) -> usize {
    (degree + 1) * (degree + 1)
}

/// Basis values `Y_i(d)` for `i < basis_count(degree)`; remaining slots are 0.
/// `d` is assumed unit length.
pub fn basis(degree: usize, d: &Vec3) -> [f64; 16] {
    let mut y = [0.0; 16];
    y[0] = Y00;
    if degree == 0 {
        return y;
    }
    let (x, yy, z) = (d.x, d.y, d.z);
    y[1] = -C1 * yy;
    y[2] = C1 * z;
    y[3] = -C1 * x;
    if degree == 1 {
        return y;
    }
    let (xx, y2, zz) = (x * x, yy * yy, z * z);
    let (xy, yz, xz) = (x * yy, yy * z, x * z);
    y[4] = C2[0] * xy;
    y[5] = C2[1] * yz;
    y[6] = C2[2] * (2.0 * zz - xx - y2);
    y[7] = C2[3] * xz;
    y[8] = C2[4] * (xx - y2);
    if degree == 2 {
        return y;
    }
    y[9] = C3[0] * yy * (3.0 * xx - y2);
    y[10] = C3[1] * xy * z;
    y[11] = C3[2] * yy * (4.0 * zz - xx - y2);
    y[12] = C3[3] * z * (2.0 * zz - 3.0 * xx - 3.0 * y2);
    y[13] = C3[4] * x * (4.0 * zz - xx - y2);
    y[14] = C3[5] * z * (xx - y2);
    y[15] = C3[6] * x * (xx - 3.0 * y2);
    y
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShTable {
    pub degree: usize,
    pub channels: usize,
    /// `coeffs[ch * basis_count + i]`.
    pub coeffs: Vec<f64>,
}

impl ShTable {
    pub fn zeros(degree: usize, channels: usize) -> Self {
        let degree = degree.min(MAX_DEGREE);
        ShTable {
            degree,
            channels,
            coeffs: vec![0.0; channels * basis_count(degree)],
        }
    }

    /// Table whose every channel evaluates to `value` in all directions.
    pub fn constant(degree: usize, channels: usize, value: f64) -> Self {
        let mut t = ShTable::zeros(degree, channels);
        let nb = t.basis_len();
        for ch in 0..channels {
            t.coeffs[ch * nb] = value / Y00;
        }
        t
    }

    pub fn basis_len(&self) -> usize {
        basis_count(self.degree)
    }

    pub fn validate(&self) -> Result<()> {
        if self.degree > MAX_DEGREE {
            return Err(Error::invalid(format!("SH degree {} > {MAX_DEGREE}", self.degree)));
        }
        if self.coeffs.len() != self.channels * self.basis_len() {
            return Err(Error::DimensionMismatch(format!(
                "SH table holds {} coefficients, expected {}",
                self.coeffs.len(),
                self.channels * self.basis_len()
            )));
        }
        Ok(())
    }

    pub fn channel_coeffs(&self, ch: usize) -> &[f64] {
        let nb = self.basis_len();
        &self.coeffs[ch * nb..(ch + 1) * nb]
    }

    /// Per-channel values with a precomputed basis.
    pub fn eval_with_basis(&self, y: &[f64; 16], out: &mut [f64]) {
        let nb = self.basis_len();
        for (ch, o) in out.iter_mut().enumerate().take(self.channels) {
            let c = &self.coeffs[ch * nb..(ch + 1) * nb];
            *o = c.iter().zip(y.iter()).map(|(a, b)| a * b).sum();
        }
    }

    pub fn eval_channel_with_basis(&self, ch: usize, y: &[f64; 16]) -> f64 {
        self.channel_coeffs(ch)
            .iter()
            .zip(y.iter())
            .map(|(a, b)| a * b)
            .sum()
    }
}

fn check_unit(d: &Vec3) -> Result<()> {
    let n = d.norm();
    if !((n - 1.0).abs() <= 1e-6) {
        return Err(Error::invalid(format!("direction norm {n} is not unit")));
    }
    Ok(())
}

/// Per-channel `Σ_i coeff_i · Y_i(d)`.
pub fn eval_sh(table: &ShTable, d: &Vec3) -> Result<Vec<f64>> {
    check_unit(d)?;
    table.validate()?;
    let y = basis(table.degree, d);
    let mut out = vec![0.0; table.channels];
    table.eval_with_basis(&y, &mut out);
    Ok(out)
}

/// Gradient of `Σ_ch upstream[ch] · eval_sh(table, d)[ch]` with respect to every
/// coefficient, laid out like `table.coeffs`.
pub fn grad_sh_coeffs(table: &ShTable, d: &Vec3, upstream: &[f64]) -> Result<Vec<f64>> {
    check_unit(d)?;
    table.validate()?;
    if upstream.len() != table.channels {
        return Err(Error::DimensionMismatch(format!(
            "{} upstream values for {} channels",
            upstream.len(),
            table.channels
        )));
    }
    let y = basis(table.degree, d);
    let nb = table.basis_len();
    let mut g = vec![0.0; table.coeffs.len()];
    for (ch, &u) in upstream.iter().enumerate() {
        for i in 0..nb {
            g[ch * nb + i] = u * y[i];
        }
    }
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn random_dir(rng: &mut ChaCha8Rng) -> Vec3 {
        loop {
            let v = Vec3::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            );
            if v.norm() > 0.1 && v.norm() <= 1.0 {
                return v.normalize();
            }
        }
    }

    fn random_table(rng: &mut ChaCha8Rng, degree: usize, channels: usize) -> ShTable {
        let mut t = ShTable::zeros(degree, channels);
        for c in t.coeffs.iter_mut() {
            *c = rng.random_range(-2.0..2.0);
        }
        t
    }

    fn factorial(n: i64) -> f64 {
        (1..=n).map(|v| v as f64).product()
    }

    /// Associated Legendre polynomial with the Condon–Shortley phase, by the
    /// standard three-term recurrence.
    fn legendre(l: i64, m: i64, x: f64) -> f64 {
        let mut pmm = 1.0;
        if m > 0 {
            let s = ((1.0 - x) * (1.0 + x)).sqrt();
            let mut fact = 1.0;
            for _ in 0..m {
                pmm *= -fact * s;
                fact += 2.0;
            }
        }
        if l == m {
            return pmm;
        }
        let mut pmmp1 = x * (2 * m + 1) as f64 * pmm;
        if l == m + 1 {
            return pmmp1;
        }
        let mut pll = 0.0;
        for ll in (m + 2)..=l {
            pll = ((2 * ll - 1) as f64 * x * pmmp1 - (ll + m - 1) as f64 * pmm) / (ll - m) as f64;
            pmm = pmmp1;
            pmmp1 = pll;
        }
        pll
    }

    /// Real SH from the spherical-coordinate definition, with the
    /// Condon–Shortley phase kept in the Legendre factor.
    fn reference_y(l: i64, m: i64, d: &Vec3) -> f64 {
        let theta = d.z.clamp(-1.0, 1.0).acos();
        let phi = d.y.atan2(d.x);
        let am = m.abs();
        let k = (((2 * l + 1) as f64) / (4.0 * PI) * factorial(l - am) / factorial(l + am)).sqrt();
        let p = legendre(l, am, theta.cos());
        if m == 0 {
            k * p
        } else if m > 0 {
            2f64.sqrt() * k * (m as f64 * phi).cos() * p
        } else {
            2f64.sqrt() * k * (am as f64 * phi).sin() * p
        }
    }

    #[test]
    fn degree0_constant() {
        let t = ShTable {
            degree: 0,
            channels: 1,
            coeffs: vec![1.0],
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..10 {
            let d = random_dir(&mut rng);
            assert!((eval_sh(&t, &d).unwrap()[0] - 0.2820947918).abs() < 1e-10);
        }
    }

    #[test]
    fn degree1_parity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut t = random_table(&mut rng, 1, 2);
        t.coeffs[0] = 0.0;
        t.coeffs[4] = 0.0;
        for _ in 0..10 {
            let d = random_dir(&mut rng);
            let a = eval_sh(&t, &d).unwrap();
            let b = eval_sh(&t, &(-d)).unwrap();
            for (x, y) in a.iter().zip(b.iter()) {
                assert!((x + y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn matches_legendre_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let t = random_table(&mut rng, 3, 3);
        for _ in 0..100 {
            let d = random_dir(&mut rng);
            let got = eval_sh(&t, &d).unwrap();
            for ch in 0..3 {
                let mut expect = 0.0;
                let mut idx = 0;
                for l in 0..=3i64 {
                    for m in -l..=l {
                        expect += t.coeffs[ch * 16 + idx] * reference_y(l, m, &d);
                        idx += 1;
                    }
                }
                let rel = (got[ch] - expect).abs() / expect.abs().max(1e-12);
                assert!(rel < 1e-10 || (got[ch] - expect).abs() < 1e-12, "rel {rel}");
            }
        }
    }

    #[test]
    fn non_unit_rejected() {
        let t = ShTable::zeros(2, 1);
        assert!(eval_sh(&t, &Vec3::new(1.0, 1.0, 0.0)).is_err());
    }

    #[test]
    fn gradient_matches_fd() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let deg = rng.random_range(0..=3);
            let t = random_table(&mut rng, deg, 2);
            let d = random_dir(&mut rng);
            let up = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
            let g = grad_sh_coeffs(&t, &d, &up).unwrap();
            let f = |tt: &ShTable| {
                let v = eval_sh(tt, &d).unwrap();
                v[0] * up[0] + v[1] * up[1]
            };
            let h = 1e-4;
            for i in 0..t.coeffs.len() {
                let mut p = t.clone();
                p.coeffs[i] += h;
                let mut m = t.clone();
                m.coeffs[i] -= h;
                let fd = (f(&p) - f(&m)) / (2.0 * h);
                let rel = (fd - g[i]).abs() / g[i].abs().max(1e-8);
                assert!(rel < 1e-6 || (fd - g[i]).abs() < 1e-10, "coef {i}: {fd} vs {}", g[i]);
            }
        }
        let t = ShTable::zeros(0, 1);
        let g = grad_sh_coeffs(&t, &Vec3::x(), &[1.0]).unwrap();
        assert!((g[0] - 0.2820947918).abs() < 1e-10);
        let g = grad_sh_coeffs(&random_table(&mut rng, 3, 2), &Vec3::z(), &[0.0, 0.0]).unwrap();
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn linear_in_coefficients() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = random_table(&mut rng, 3, 2);
        let b = random_table(&mut rng, 3, 2);
        let (wa, wb) = (0.7, -1.3);
        let mut c = a.clone();
        for (i, v) in c.coeffs.iter_mut().enumerate() {
            *v = wa * a.coeffs[i] + wb * b.coeffs[i];
        }
        for _ in 0..20 {
            let d = random_dir(&mut rng);
            let (ea, eb, ec) = (
                eval_sh(&a, &d).unwrap(),
                eval_sh(&b, &d).unwrap(),
                eval_sh(&c, &d).unwrap(),
            );
            for ch in 0..2 {
                assert!((ec[ch] - wa * ea[ch] - wb * eb[ch]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn constant_table() {
        let t = ShTable::constant(3, 1, -7.5);
        assert!((eval_sh(&t, &Vec3::y()).unwrap()[0] + 7.5).abs() < 1e-12);
    }
}
