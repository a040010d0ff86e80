//! Flat CSV view of Monte Carlo cells, one row per (cell, eval point).

use std::path::Path;

use super::mc::CellReport;
use crate::error::Result;
use crate::io::format_float;

fn opt(v: Option<f64>) -> String {
    v.map(format_float).unwrap_or_default()
}

pub fn cells_csv(cells: &[CellReport]) -> Result<String> {
    let d = cells.first().and_then(|c| c.points.first()).map_or(0, |p| p.u0.len());
    let p = cells
        .first()
        .and_then(|c| c.points.first())
        .map_or(0, |p| p.beta_true.len());
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<String> = ["estimator", "h", "n_total", "replicas", "point"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    header.extend((1..=d).map(|k| format!("u{k}")));
    header.extend((1..=p).map(|k| format!("bias{k}")));
    header.extend((1..=p).map(|k| format!("var{k}")));
    header.extend((1..=p).map(|k| format!("theory_bias{k}")));
    header.extend((1..=p).map(|k| format!("theory_var{k}")));
    header.extend(["mse", "status"].iter().map(|s| s.to_string()));
    w.write_record(&header)?;
    for cell in cells {
        for (j, pt) in cell.points.iter().enumerate() {
            let mut row = vec![
                cell.estimator.to_string(),
                format_float(cell.h),
                cell.n_total.to_string(),
                cell.replicas.to_string(),
                j.to_string(),
            ];
            row.extend(pt.u0.iter().map(|v| format_float(*v)));
            for k in 0..p {
                row.push(opt(pt.empirical_bias.as_ref().map(|b| b[k])));
            }
            for k in 0..p {
                row.push(opt(pt.empirical_variance.as_ref().map(|v| v[k][k])));
            }
            for k in 0..p {
                row.push(opt(pt.theoretical_bias.as_ref().map(|b| b[k])));
            }
            for k in 0..p {
                row.push(opt(pt.theoretical_variance.as_ref().map(|v| v[k][k])));
            }
            row.push(opt(pt.mse));
            row.push(match &pt.failure {
                None => "ok".to_string(),
                Some(msg) => format!("failed: {msg}"),
            });
            w.write_record(&row)?;
        }
    }
    let bytes = w.into_inner().map_err(|e| std::io::Error::other(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn write_csv_cells(path: &Path, cells: &[CellReport]) -> Result<()> {
    std::fs::write(path, cells_csv(cells)?)?;
    Ok(())
}
