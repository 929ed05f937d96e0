//! Matrix exchange files and number formatting.
//!
//! Matrices are stored either as dense row-major CSV (no header) or as JSON
//! `{"dim": n, "rows": [[...], ...]}`. Every number is written with 17
//! significant digits, which round-trips `f64` exactly.

use std::fs;
use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;
use serde::Deserialize;

use crate::error::{OslabError, Result};

/// `x` with 17 significant digits in scientific notation.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct MatrixFile {
    dim: usize,
    rows: Vec<Vec<f64>>,
}

pub fn matrix_to_json(a: &DMatrix<f64>) -> String {
    let rows: Vec<String> = a
        .row_iter()
        .map(|row| {
            let cells: Vec<String> = row.iter().map(|&x| fmt_f64(x)).collect();
            format!("[{}]", cells.join(", "))
        })
        .collect();
    format!("{{\"dim\": {}, \"rows\": [\n  {}\n]}}\n", a.nrows(), rows.join(",\n  "))
}

pub fn matrix_from_json(text: &str) -> Result<DMatrix<f64>> {
    let file: MatrixFile = serde_json::from_str(text)?;
    from_rows(file.rows, Some(file.dim))
}

pub fn matrix_to_csv(a: &DMatrix<f64>) -> String {
    let mut out = String::new();
    for row in a.row_iter() {
        let cells: Vec<String> = row.iter().map(|&x| fmt_f64(x)).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

pub fn matrix_from_csv(text: &str) -> Result<DMatrix<f64>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let row = record
            .iter()
            .map(|cell| {
                cell.parse::<f64>()
                    .map_err(|e| OslabError::Parse(format!("row {}: `{cell}`: {e}", i + 1)))
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    from_rows(rows, None)
}

fn from_rows(rows: Vec<Vec<f64>>, dim: Option<usize>) -> Result<DMatrix<f64>> {
    let n = rows.len();
    if n == 0 {
        return Err(OslabError::BadShape { rows: 0, cols: 0 });
    }
    if let Some(d) = dim {
        if d != n {
            return Err(OslabError::Parse(format!("declared dim {d} but found {n} rows")));
        }
    }
    if let Some(row) = rows.iter().find(|r| r.len() != n) {
        return Err(OslabError::BadShape {
            rows: n,
            cols: row.len(),
        });
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

/// Reads a matrix, choosing the format by extension (`.json` or CSV).
pub fn read_matrix(path: &Path) -> Result<DMatrix<f64>> {
    let text = fs::read_to_string(path)?;
    if is_json(path) {
        matrix_from_json(&text)
    } else {
        matrix_from_csv(&text)
    }
}

pub fn write_matrix(path: &Path, a: &DMatrix<f64>) -> Result<()> {
    let text = if is_json(path) {
        matrix_to_json(a)
    } else {
        matrix_to_csv(a)
    };
    let mut file = fs::File::create(path)?;
    file.write_all(text.as_bytes())?;
    Ok(())
}

fn is_json(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testing::random_symmetric;
    use proptest::prelude::*;

    fn same_bits(a: &DMatrix<f64>, b: &DMatrix<f64>) -> bool {
        a.shape() == b.shape() && a.iter().zip(b.iter()).all(|(x, y)| x.to_bits() == y.to_bits())
    }

    #[test]
    fn seventeen_digits() {
        assert_eq!(fmt_f64(0.1), "1.0000000000000001e-1");
        assert_eq!(fmt_f64(-2.0), "-2.0000000000000000e0");
    }

    #[test]
    fn json_and_csv_round_trip_bit_identically() {
        let a = random_symmetric(6, 42) * 1e-3;
        assert!(same_bits(&matrix_from_json(&matrix_to_json(&a)).unwrap(), &a));
        assert!(same_bits(&matrix_from_csv(&matrix_to_csv(&a)).unwrap(), &a));
    }

    #[test]
    fn files_pick_format_by_extension() {
        let dir = tempfile::tempdir().unwrap();
        let a = random_symmetric(3, 7);
        for name in ["m.json", "m.csv"] {
            let path = dir.path().join(name);
            write_matrix(&path, &a).unwrap();
            assert!(same_bits(&read_matrix(&path).unwrap(), &a));
        }
        let text = fs::read_to_string(dir.path().join("m.json")).unwrap();
        assert!(text.starts_with("{\"dim\": 3"));
    }

    #[test]
    fn rejects_ragged_and_mislabelled_input() {
        assert!(matrix_from_csv("1,2\n3\n").is_err());
        assert!(matrix_from_json(r#"{"dim": 3, "rows": [[1]]}"#).is_err());
        assert!(matrix_from_csv("1,x\n2,3\n").is_err());
    }

    proptest! {
        #[test]
        fn any_finite_value_round_trips(x in proptest::num::f64::NORMAL | proptest::num::f64::SUBNORMAL | proptest::num::f64::ZERO) {
            let a = DMatrix::from_element(1, 1, x);
            prop_assert!(same_bits(&matrix_from_csv(&matrix_to_csv(&a)).unwrap(), &a));
            prop_assert!(same_bits(&matrix_from_json(&matrix_to_json(&a)).unwrap(), &a));
        }
    }
}
