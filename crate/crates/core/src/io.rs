//! CSV and JSON exchange formats.
//!
//! Dataset CSV: header `i1..iM, u1..ud, x1..xp, y`. An optional JSON sidecar
//! `{"intercept": bool, "lattice_sizes": [..]}` carries what the CSV cannot.

use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::SurfacePoint;
use crate::types::{Dataset, LatticeIndex, Observation, Record};

/// 17 significant digits; parses back to the same f64.
pub fn format_float(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        v.to_string()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    #[serde(default)]
    pub intercept: bool,
    #[serde(default)]
    pub lattice_sizes: Option<Vec<usize>>,
}

/// `<data>.json` next to `<data>` (the extension is replaced).
pub fn sidecar_path(data: &Path) -> PathBuf {
    data.with_extension("json")
}

pub fn read_meta(path: &Path) -> Result<DatasetMeta> {
    Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
}

/// Column layout parsed from a dataset header.
struct Layout {
    m: usize,
    d: usize,
    p: usize,
}

fn numbered(header: &csv::StringRecord, prefix: char) -> Result<usize> {
    let cols: Vec<&str> = header
        .iter()
        .filter(|h| h.starts_with(prefix) && h[1..].parse::<usize>().is_ok())
        .collect();
    for (k, name) in cols.iter().enumerate() {
        if *name != format!("{prefix}{}", k + 1) {
            return Err(Error::InvalidDataset(format!(
                "columns {prefix}1..{prefix}{} must appear in order, found {name}",
                cols.len()
            )));
        }
    }
    Ok(cols.len())
}

fn layout(header: &csv::StringRecord) -> Result<Layout> {
    let header_trimmed: csv::StringRecord = header.iter().map(str::trim).collect();
    let l = Layout {
        m: numbered(&header_trimmed, 'i')?,
        d: numbered(&header_trimmed, 'u')?,
        p: numbered(&header_trimmed, 'x')?,
    };
    let expected: Vec<String> = (1..=l.m)
        .map(|k| format!("i{k}"))
        .chain((1..=l.d).map(|k| format!("u{k}")))
        .chain((1..=l.p).map(|k| format!("x{k}")))
        .chain(std::iter::once("y".to_string()))
        .collect();
    let found: Vec<&str> = header_trimmed.iter().collect();
    if found != expected {
        return Err(Error::InvalidDataset(format!(
            "dataset header must be {}, found {}",
            expected.join(","),
            found.join(",")
        )));
    }
    if l.m == 0 || l.d == 0 || l.p == 0 {
        return Err(Error::InvalidDataset(
            "dataset needs at least one i, u and x column".into(),
        ));
    }
    Ok(l)
}

fn parse_f64(s: &str, line: usize, col: &str) -> Result<f64> {
    s.trim()
        .parse()
        .map_err(|_| Error::Parse(format!("line {line}, column {col}: {s:?} is not a number")))
}

/// Reads a dataset from CSV. Lattice sizes default to the largest index seen
/// along each axis.
pub fn read_dataset_from<R: Read>(reader: R, intercept: bool, lattice_sizes: Option<Vec<usize>>) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header = rdr.headers()?.clone();
    let l = layout(&header)?;
    let mut records = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = row + 2;
        let mut coords = Vec::with_capacity(l.m);
        for k in 0..l.m {
            let s = rec[k].trim();
            let v: usize = s.parse().map_err(|_| {
                Error::Parse(format!(
                    "line {line}, column i{}: {s:?} is not a positive integer",
                    k + 1
                ))
            })?;
            coords.push(v);
        }
        let field = |j: usize, name: String| parse_f64(&rec[j], line, &name);
        let u = (0..l.d)
            .map(|k| field(l.m + k, format!("u{}", k + 1)))
            .collect::<Result<Vec<_>>>()?;
        let x = (0..l.p)
            .map(|k| field(l.m + l.d + k, format!("x{}", k + 1)))
            .collect::<Result<Vec<_>>>()?;
        let y = field(l.m + l.d + l.p, "y".into())?;
        records.push(Record {
            index: LatticeIndex::new(coords),
            obs: Observation { x, u, y },
        });
    }
    let sizes = match lattice_sizes {
        Some(s) => s,
        None => (0..l.m)
            .map(|k| records.iter().map(|r| r.index.coords()[k]).max().unwrap_or(0))
            .collect(),
    };
    Dataset::new(sizes, l.p, l.d, intercept, records)
}

/// Reads `path`, taking intercept and lattice sizes from `meta`, else from
/// `<path>.json` when present. An explicit `lattice_sizes` wins over both.
pub fn read_dataset(path: &Path, meta: Option<&Path>, lattice_sizes: Option<Vec<usize>>) -> Result<Dataset> {
    let meta = match meta {
        Some(m) => read_meta(m)?,
        None => {
            let side = sidecar_path(path);
            if side.is_file() {
                read_meta(&side)?
            } else {
                DatasetMeta::default()
            }
        }
    };
    let file = std::fs::File::open(path)?;
    read_dataset_from(file, meta.intercept, lattice_sizes.or(meta.lattice_sizes))
}

pub fn write_dataset_to<W: Write>(dataset: &Dataset, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let header: Vec<String> = (1..=dataset.m_dims())
        .map(|k| format!("i{k}"))
        .chain((1..=dataset.d()).map(|k| format!("u{k}")))
        .chain((1..=dataset.p()).map(|k| format!("x{k}")))
        .chain(std::iter::once("y".to_string()))
        .collect();
    w.write_record(&header)?;
    for rec in dataset.records() {
        let row: Vec<String> = rec
            .index
            .coords()
            .iter()
            .map(|c| c.to_string())
            .chain(rec.obs.u.iter().map(|v| format_float(*v)))
            .chain(rec.obs.x.iter().map(|v| format_float(*v)))
            .chain(std::iter::once(format_float(rec.obs.y)))
            .collect();
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes the CSV and its sidecar `<path>.json`.
pub fn write_dataset(dataset: &Dataset, path: &Path) -> Result<()> {
    write_dataset_to(dataset, std::fs::File::create(path)?)?;
    let meta = DatasetMeta {
        intercept: dataset.intercept(),
        lattice_sizes: Some(dataset.lattice_sizes().to_vec()),
    };
    std::fs::write(sidecar_path(path), serde_json::to_string_pretty(&meta)? + "\n")?;
    Ok(())
}

/// Target locations from a CSV with columns `u1..ud` (other columns ignored).
pub fn read_targets_from<R: Read>(reader: R, d: usize) -> Result<Vec<Vec<f64>>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header = rdr.headers()?.clone();
    let cols = (1..=d)
        .map(|k| {
            let name = format!("u{k}");
            header
                .iter()
                .position(|h| h.trim() == name)
                .ok_or_else(|| Error::InvalidDataset(format!("targets file lacks column {name}")))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        out.push(
            cols.iter()
                .enumerate()
                .map(|(k, &c)| parse_f64(&rec[c], row + 2, &format!("u{}", k + 1)))
                .collect::<Result<Vec<_>>>()?,
        );
    }
    Ok(out)
}

pub fn read_targets(path: &Path, d: usize) -> Result<Vec<Vec<f64>>> {
    read_targets_from(std::fs::File::open(path)?, d)
}

/// Surface fits as CSV: `u1..ud, beta1..betap, grad_s_k, effective_n, flag`.
/// Failed targets keep their location, leave the numbers empty and carry
/// `error:<kind>` in the flag column.
pub fn write_fits_to<W: Write>(writer: W, targets: &[Vec<f64>], fits: &[SurfacePoint], p: usize) -> Result<()> {
    let d = targets.first().map_or(0, Vec::len);
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<String> = (1..=d).map(|k| format!("u{k}")).collect();
    header.extend((1..=p).map(|k| format!("beta{k}")));
    for s in 1..=d {
        header.extend((1..=p).map(|k| format!("grad_{s}_{k}")));
    }
    header.push("effective_n".into());
    header.push("flag".into());
    w.write_record(&header)?;
    for fit in fits {
        let mut row: Vec<String> = targets[fit.target].iter().map(|v| format_float(*v)).collect();
        match &fit.result {
            Ok(f) => {
                row.extend(f.beta_hat.iter().map(|v| format_float(*v)));
                row.extend(f.gradient_hat.iter().flatten().map(|v| format_float(*v)));
                row.push(format_float(f.effective_n));
                row.push(f.condition_flag.to_string());
            }
            Err(e) => {
                row.extend(std::iter::repeat_n(String::new(), p * (d + 1) + 1));
                row.push(format!("error:{}", e.kind()));
            }
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_format_round_trips() {
        for v in [0.1, 1.0 / 3.0, -2.5e-300, 123456789.12345679, 0.0] {
            let s = format_float(v);
            assert_eq!(s.parse::<f64>().unwrap(), v, "{s}");
        }
        assert_eq!(format_float(f64::NAN), "NaN");
    }

    #[test]
    fn header_must_be_ordered() {
        let bad = "i1,u1,x2,x1,y\n1,0.5,1,1,2\n";
        assert!(read_dataset_from(bad.as_bytes(), false, None).is_err());
        let bad = "i1,u1,x1\n1,0.5,1\n";
        assert!(read_dataset_from(bad.as_bytes(), false, None).is_err());
    }

    #[test]
    fn infers_lattice_sizes() {
        let text = "i1,i2,u1,x1,y\n1,1,0.1,1,2\n1,2,0.2,1,3\n2,1,0.3,1,4\n2,2,0.4,1,5\n3,1,0.5,1,6\n3,2,0.6,1,7\n";
        let ds = read_dataset_from(text.as_bytes(), true, None).unwrap();
        assert_eq!(ds.lattice_sizes(), &[3, 2]);
        assert_eq!((ds.p(), ds.d(), ds.len()), (1, 1, 6));
        assert!(ds.intercept());
    }

    #[test]
    fn reports_bad_numbers_with_line() {
        let text = "i1,u1,x1,y\n1,0.1,1,2\n2,zz,1,3\n";
        match read_dataset_from(text.as_bytes(), false, None) {
            Err(Error::Parse(msg)) => assert!(msg.contains("line 3"), "{msg}"),
            other => panic!("unexpected {other:?}"),
        }
    }
}
