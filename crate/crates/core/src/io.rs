//! CSV ingestion of distances, measures and fields, and atomic CSV/JSON emission.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::error::{LabError, Result};
use crate::lipschitz::{ScalarField, SlopeField};
use crate::metric::{DistanceMatrix, Measure};

fn reader(path: &Path) -> Result<csv::Reader<fs::File>> {
    Ok(csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_path(path)?)
}

/// Header-free numeric rows. Ragged rows are kept as-is so the caller can report them.
pub fn read_rows(path: &Path) -> Result<Vec<Vec<f64>>> {
    let mut rows = Vec::new();
    for (i, rec) in reader(path)?.records().enumerate() {
        let rec = rec?;
        let row = rec
            .iter()
            .enumerate()
            .map(|(j, cell)| {
                cell.parse::<f64>().map_err(|_| {
                    LabError::Malformed(format!(
                        "{}: row {}, column {}: {cell:?}",
                        path.display(),
                        i + 1,
                        j + 1
                    ))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    Ok(rows)
}

/// Single-column numeric CSV.
pub fn read_column(path: &Path) -> Result<Vec<f64>> {
    read_rows(path)?
        .into_iter()
        .enumerate()
        .map(|(i, row)| match row.as_slice() {
            [v] => Ok(*v),
            _ => Err(LabError::Malformed(format!(
                "{}: row {} has {} columns, expected 1",
                path.display(),
                i + 1,
                row.len()
            ))),
        })
        .collect()
}

pub fn read_distances(path: &Path) -> Result<DistanceMatrix> {
    DistanceMatrix::from_rows(&read_rows(path)?)
}

pub fn read_measure(path: &Path) -> Result<Measure> {
    Measure::new(read_column(path)?)
}

pub fn read_field(path: &Path) -> Result<ScalarField> {
    Ok(ScalarField::new(read_column(path)?))
}

/// Writes through a sibling temporary file and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let name = path
        .file_name()
        .ok_or_else(|| LabError::Parameter(format!("{} is not a file path", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp", name.to_string_lossy()));
    {
        let mut file = fs::File::create(&tmp)?;
        file.write_all(bytes)?;
        file.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn csv_bytes<T: Serialize>(rows: &[T]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.serialize(row)?;
    }
    w.into_inner().map_err(|e| LabError::Io(e.into_error()))
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    write_atomic(path, &csv_bytes(rows)?)
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

/// Single-column CSV aligned with point order.
pub fn write_column(path: &Path, values: &[f64]) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(Vec::new());
    for v in values {
        w.serialize([v])?;
    }
    let bytes = w.into_inner().map_err(|e| LabError::Io(e.into_error()))?;
    write_atomic(path, &bytes)
}

#[derive(Serialize)]
struct SlopeRow {
    point: usize,
    value: f64,
    scale: f64,
}

/// Columns `point, value, scale`.
pub fn write_slope(path: &Path, slope: &SlopeField) -> Result<()> {
    let rows: Vec<SlopeRow> = slope
        .values
        .iter()
        .enumerate()
        .map(|(point, &value)| SlopeRow {
            point,
            value,
            scale: slope.scale,
        })
        .collect();
    write_csv(path, &rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn distance_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.csv");
        fs::write(&p, "0, 1\n1, 0\n").unwrap();
        let d = read_distances(&p).unwrap();
        assert_eq!(d.get(0, 1), 1.0);
        fs::write(&p, "0,1\n1,x\n").unwrap();
        let err = read_distances(&p).unwrap_err().to_string();
        assert!(err.contains("row 2, column 2"), "{err}");
    }

    #[test]
    fn column_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        write_column(&p, &[0.5, 1.25, 3.0]).unwrap();
        assert_eq!(read_column(&p).unwrap(), vec![0.5, 1.25, 3.0]);
        fs::write(&p, "1,2\n").unwrap();
        assert!(read_measure(&p).is_err());
    }

    #[test]
    fn atomic_write_leaves_no_temp_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("sub").join("r.json");
        write_json(&p, &vec![1, 2]).unwrap();
        let names: Vec<_> = fs::read_dir(p.parent().unwrap())
            .unwrap()
            .map(|e| e.unwrap().file_name())
            .collect();
        assert_eq!(names, vec![std::ffi::OsString::from("r.json")]);
    }

    #[test]
    fn slope_csv_has_header() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.csv");
        let s = SlopeField {
            scale: 0.5,
            kind: crate::metric::BallKind::Open,
            values: vec![1.0, 0.0],
        };
        write_slope(&p, &s).unwrap();
        assert_eq!(
            fs::read_to_string(&p).unwrap(),
            "point,value,scale\n0,1.0,0.5\n1,0.0,0.5\n"
        );
    }
}
