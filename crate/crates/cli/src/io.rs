//! Sample files and raster files.

use std::fs;
use std::path::Path;

use myriadkit::imaging::{encode_f64, encode_pgm, parse_f64, parse_pgm, Raster};
use myriadkit::{SampleSet, WeightVector};

use crate::CliError;

/// Headerless comma-separated numbers, one sample per row. The dimension is
/// taken from the first row; blank lines are skipped.
pub fn read_csv_rows(path: &Path) -> Result<Vec<Vec<f64>>, CliError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
        if record.iter().all(str::is_empty) {
            continue;
        }
        let row = record
            .iter()
            .map(|field| {
                field.parse::<f64>().map_err(|_| {
                    CliError::data(format!("{}: line {}: {field:?} is not a number", path.display(), line + 1))
                })
            })
            .collect::<Result<Vec<f64>, _>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(CliError::data(format!(
                    "{}: line {} has {} columns, expected {}",
                    path.display(),
                    line + 1,
                    row.len(),
                    first.len()
                )));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(CliError::data(format!("{}: no samples", path.display())));
    }
    Ok(rows)
}

pub fn read_samples(path: &Path) -> Result<SampleSet, CliError> {
    Ok(SampleSet::from_rows(&read_csv_rows(path)?)?)
}

/// All values of a single-column file.
pub fn read_column(path: &Path) -> Result<Vec<f64>, CliError> {
    let rows = read_csv_rows(path)?;
    if rows[0].len() != 1 {
        return Err(CliError::data(format!(
            "{}: expected one value per row, found {}",
            path.display(),
            rows[0].len()
        )));
    }
    Ok(rows.into_iter().map(|r| r[0]).collect())
}

/// Positive weights rescaled to sum to one; uniform when no file is given.
pub fn read_weights(path: Option<&Path>, n: usize) -> Result<WeightVector, CliError> {
    let Some(path) = path else {
        return Ok(WeightVector::uniform(n));
    };
    let raw: Vec<f64> = read_csv_rows(path)?.concat();
    if raw.len() != n {
        return Err(CliError::data(format!("{} weights for {n} samples", raw.len())));
    }
    Ok(WeightVector::normalized(&raw)?)
}

/// PGM (by its `P5` magic) or MYR1.
pub fn read_raster(path: &Path) -> Result<Raster, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
    let parsed = if bytes.starts_with(b"P5") {
        parse_pgm(&bytes).map(Raster::Real)
    } else {
        parse_f64(&bytes)
    };
    parsed.map_err(|e| CliError::data(format!("{}: {e}", path.display())))
}

fn is_pgm(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("pgm"))
}

/// Writes PGM for a `.pgm` path and MYR1 otherwise; returns the number of
/// pixels clamped by the PGM encoder.
pub fn write_raster(raster: &Raster, path: &Path) -> Result<usize, CliError> {
    let (bytes, clamped) = match raster {
        Raster::Real(img) if is_pgm(path) => encode_pgm(img)?,
        Raster::Circular(_) if is_pgm(path) => {
            return Err(CliError::data("circle-valued images can only be written as MYR1".into()));
        }
        _ => (encode_f64(raster), 0),
    };
    fs::write(path, bytes).map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
    Ok(clamped)
}
