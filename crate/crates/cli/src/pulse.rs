//! Pulse CSV files: a `t` column of interval midpoints followed by one
//! column per control (`epsilon`, `epsilon2`, ...).

use std::path::Path;

use weylctl::types::{ControlField, TimeGrid};

use crate::error::CliError;

fn column_name(i: usize) -> String {
    if i == 0 {
        "epsilon".to_string()
    } else {
        format!("epsilon{}", i + 1)
    }
}

pub fn write_pulse(path: &Path, fields: &[ControlField]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["t".to_string()];
    header.extend((0..fields.len()).map(column_name));
    w.write_record(&header)?;
    let Some(first) = fields.first() else {
        return Ok(w.flush()?);
    };
    for (i, t) in first.grid().midpoints().into_iter().enumerate() {
        let mut row = vec![format!("{t:.16e}")];
        row.extend(fields.iter().map(|f| format!("{:.16e}", f.values()[i])));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads fields written by [`write_pulse`]; the times must be the midpoints of `grid`.
pub fn read_pulse(path: &Path, grid: TimeGrid) -> Result<Vec<ControlField>, CliError> {
    let mut r = csv::Reader::from_path(path)?;
    let header = r.headers()?.clone();
    let n_fields = header.len().saturating_sub(1);
    if header.get(0) != Some("t") || n_fields == 0 {
        return Err(CliError::Pulse(format!(
            "{}: expected header t,epsilon[,epsilon2...]",
            path.display()
        )));
    }
    for (i, name) in header.iter().skip(1).enumerate() {
        if name != column_name(i) {
            return Err(CliError::Pulse(format!("unexpected column '{name}'")));
        }
    }
    let mids = grid.midpoints();
    let tol = 1e-9 * grid.dt();
    let mut values = vec![Vec::with_capacity(mids.len()); n_fields];
    for (row, rec) in r.records().enumerate() {
        let rec = rec?;
        let parse = |j: usize| -> Result<f64, CliError> {
            rec.get(j)
                .and_then(|s| s.trim().parse::<f64>().ok())
                .ok_or_else(|| CliError::Pulse(format!("row {}, column {}: not a number", row + 1, j + 1)))
        };
        let t = parse(0)?;
        match mids.get(row) {
            Some(m) if (m - t).abs() <= tol => {}
            _ => {
                return Err(CliError::Pulse(format!(
                    "row {}: time {t} is not a midpoint of the configured grid",
                    row + 1
                )))
            }
        }
        for (j, col) in values.iter_mut().enumerate() {
            col.push(parse(j + 1)?);
        }
    }
    if values[0].len() != mids.len() {
        return Err(CliError::Pulse(format!(
            "{} rows for a grid with {} intervals",
            values[0].len(),
            mids.len()
        )));
    }
    values
        .into_iter()
        .map(|v| ControlField::new(grid, v).map_err(CliError::from))
        .collect()
}
