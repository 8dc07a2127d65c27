//! Point-cloud CSV format: header `x0,...,x{d-1}[,w]`, one row per support
//! point, optional trailing weight column, UTF-8, LF line endings. Floats are
//! written with 17 significant digits so values round-trip exactly.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use ndarray::{Array1, Array2};

use super::{DiscreteMeasure, MeasureError};

/// 17 significant digits: enough for exact `f64` round-trip.
pub(crate) fn fmt_g17(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_measure_csv<W: Write>(w: &mut W, m: &DiscreteMeasure) -> std::io::Result<()> {
    let d = m.dim();
    for k in 0..d {
        write!(w, "x{k},")?;
    }
    writeln!(w, "w")?;
    for i in 0..m.len() {
        for x in m.point(i) {
            write!(w, "{},", fmt_g17(*x))?;
        }
        writeln!(w, "{}", fmt_g17(m.weights()[i]))?;
    }
    Ok(())
}

pub fn read_measure_csv<R: BufRead>(r: R) -> Result<DiscreteMeasure, MeasureError> {
    let mut lines = r.lines().enumerate();
    let (_, header) = lines.next().ok_or(MeasureError::Csv {
        line: 1,
        reason: "empty file".into(),
    })?;
    let header = header?;
    let cols: Vec<&str> = header.trim_end().split(',').collect();
    let has_weights = cols.last() == Some(&"w");
    let d = if has_weights {
        cols.len() - 1
    } else {
        cols.len()
    };
    if d == 0 {
        return Err(MeasureError::Csv {
            line: 1,
            reason: "no coordinate columns".into(),
        });
    }
    for (k, col) in cols.iter().take(d).enumerate() {
        if *col != format!("x{k}") {
            return Err(MeasureError::Csv {
                line: 1,
                reason: format!("expected column `x{k}`, found `{col}`"),
            });
        }
    }

    let mut coords: Vec<f64> = Vec::new();
    let mut weights: Vec<f64> = Vec::new();
    for (idx, line) in lines {
        let line = line?;
        let trimmed = line.trim_end();
        if trimmed.is_empty() {
            continue;
        }
        let fields: Vec<&str> = trimmed.split(',').collect();
        if fields.len() != cols.len() {
            return Err(MeasureError::Csv {
                line: idx + 1,
                reason: format!("expected {} fields, found {}", cols.len(), fields.len()),
            });
        }
        for field in fields.iter().take(d) {
            coords.push(parse_field(field, idx + 1)?);
        }
        if has_weights {
            weights.push(parse_field(fields[d], idx + 1)?);
        }
    }
    let n = coords.len() / d;
    let points = Array2::from_shape_vec((n, d), coords).map_err(|e| MeasureError::Csv {
        line: 0,
        reason: e.to_string(),
    })?;
    let weights = if has_weights {
        Some(Array1::from_vec(weights))
    } else {
        None
    };
    DiscreteMeasure::new(points, weights)
}

fn parse_field(field: &str, line: usize) -> Result<f64, MeasureError> {
    field.trim().parse::<f64>().map_err(|e| MeasureError::Csv {
        line,
        reason: format!("`{field}`: {e}"),
    })
}

pub fn save_measure_csv(path: &Path, m: &DiscreteMeasure) -> Result<(), MeasureError> {
    let mut w = BufWriter::new(File::create(path)?);
    write_measure_csv(&mut w, m)?;
    w.flush()?;
    Ok(())
}

pub fn load_measure_csv(path: &Path) -> Result<DiscreteMeasure, MeasureError> {
    read_measure_csv(BufReader::new(File::open(path)?))
}
