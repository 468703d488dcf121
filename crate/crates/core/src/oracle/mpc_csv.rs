use std::path::Path;

use super::{Mpc, MpcKind};
use crate::error::{Error, Result};
use crate::math::Vec3;

const HEADER: [&str; 10] = [
    "pathloss_db", "tof_ns", "aod_az", "aod_zen", "aoa_az", "aoa_zen", "kind", "retx_x", "retx_y", "retx_z",
];

pub fn write_mpc_csv(path: &Path, mpcs: &[Mpc]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::invalid(format!("{other:?}")),
    })?;
    w.write_record(HEADER)?;
    for m in mpcs {
        let (rx, ry, rz) = match m.retx_point {
            Some(p) => (p.x.to_string(), p.y.to_string(), p.z.to_string()),
            None => (String::new(), String::new(), String::new()),
        };
        w.write_record([
            m.pathloss_db.to_string(),
            m.tof_ns.to_string(),
            m.aod_az.to_string(),
            m.aod_zen.to_string(),
            m.aoa_az.to_string(),
            m.aoa_zen.to_string(),
            m.kind.as_str().to_string(),
            rx,
            ry,
            rz,
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Reads an MPC list; this is also the ingestion path for externally
/// estimated (measured) MPCs.
pub fn read_mpc_csv(path: &Path) -> Result<Vec<Mpc>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::invalid(format!("{other:?}")),
    })?;
    let header: Vec<String> = r.headers()?.iter().map(|s| s.trim().to_string()).collect();
    if header != HEADER {
        return Err(Error::Schema {
            what: path.display().to_string(),
            detail: format!("unexpected header {header:?}"),
        });
    }
    let mut out = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        let bad = |what: &str| Error::Schema {
            what: path.display().to_string(),
            detail: format!("row {}: bad {what}", line + 1),
        };
        let num = |i: usize| -> Result<f64> { rec[i].trim().parse::<f64>().map_err(|_| bad(HEADER[i])) };
        let kind = MpcKind::parse(rec[6].trim()).ok_or_else(|| bad("kind"))?;
        let retx = if rec[7].trim().is_empty() {
            None
        } else {
            Some(Vec3::new(num(7)?, num(8)?, num(9)?))
        };
        if kind == MpcKind::Los && retx.is_some() {
            return Err(bad("retx point on a LoS path"));
        }
        out.push(Mpc {
            pathloss_db: num(0)?,
            tof_ns: num(1)?,
            aod_az: num(2)?,
            aod_zen: num(3)?,
            aoa_az: num(4)?,
            aoa_zen: num(5)?,
            n_interactions: (kind != MpcKind::Los) as u8,
            retx_point: retx,
            kind,
        });
    }
    Ok(out)
}
