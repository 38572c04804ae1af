//! CSV emission with 17 significant digits so repeated runs are bit-identical.

use std::io::Write;
use std::path::Path;

use super::Trajectory;
use crate::Result;

fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

/// Columns: `t, x_1..x_n, u_1..u_m, y_1..y_m`.
pub fn write_trajectory_csv(path: &Path, traj: &Trajectory) -> Result<()> {
    let n = traj.states().first().map_or(0, |x| x.len());
    let m = traj.inputs().first().map_or(0, |u| u.len());
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    let mut header = vec!["t".to_string()];
    header.extend((1..=n).map(|i| format!("x_{i}")));
    header.extend((1..=m).map(|i| format!("u_{i}")));
    header.extend((1..=m).map(|i| format!("y_{i}")));
    writeln!(out, "{}", header.join(","))?;
    for k in 0..traj.len() {
        let mut row = vec![fmt(traj.times()[k])];
        row.extend(traj.states()[k].iter().map(|v| fmt(*v)));
        row.extend(traj.inputs()[k].iter().map(|v| fmt(*v)));
        row.extend(traj.outputs()[k].iter().map(|v| fmt(*v)));
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}

/// Columns: `t, horizontal, dissipation, supplied, total, fd_total, residual`.
pub fn write_ledger_csv(path: &Path, traj: &Trajectory) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "t,horizontal,dissipation,supplied,total,fd_total,residual")?;
    let fd = traj.fd_total();
    for ((t, p), fd_k) in traj.times().iter().zip(traj.ledger()).zip(&fd) {
        let residual = (fd_k - p.total).abs();
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            fmt(*t),
            fmt(p.horizontal),
            fmt(p.dissipation),
            fmt(p.supplied),
            fmt(p.total),
            fmt(*fd_k),
            fmt(residual),
        )?;
    }
    Ok(())
}
