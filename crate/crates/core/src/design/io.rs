//! CSV loaders and the universe file format.

use std::fs;
use std::io::Read;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use super::model::ModelId;
use crate::error::{PosiError, Result};

fn parse_rows<R: Read>(reader: R, header: bool) -> Result<Vec<Vec<f64>>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(header).trim(csv::Trim::All).flexible(true).from_reader(reader);
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| PosiError::Parse(e.to_string()))?;
        if rec.iter().all(|f| f.is_empty()) {
            continue;
        }
        let row = rec
            .iter()
            .map(|f| f.parse::<f64>().map_err(|_| PosiError::Parse(format!("row {}: '{f}' is not a number", i + 1))))
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    Ok(rows)
}

/// Matrix from CSV text: rows are observations, columns regressors.
pub fn parse_matrix_csv(text: &str, header: bool) -> Result<DMatrix<f64>> {
    let rows = parse_rows(text.as_bytes(), header)?;
    if rows.is_empty() {
        return Err(PosiError::Parse("no data rows".into()));
    }
    let p = rows[0].len();
    if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != p) {
        return Err(PosiError::Parse(format!("row {} has {} fields, expected {p}", i + 1, r.len())));
    }
    Ok(DMatrix::from_fn(rows.len(), p, |i, j| rows[i][j]))
}

/// Vector from CSV text: a single row, or a single column.
pub fn parse_vector_csv(text: &str, header: bool) -> Result<DVector<f64>> {
    let m = parse_matrix_csv(text, header)?;
    if m.nrows() == 1 {
        Ok(DVector::from_iterator(m.ncols(), m.row(0).iter().copied()))
    } else if m.ncols() == 1 {
        Ok(m.column(0).into_owned())
    } else {
        Err(PosiError::Parse(format!("expected a single row or column, got {}x{}", m.nrows(), m.ncols())))
    }
}

pub fn read_matrix_csv(path: &Path, header: bool) -> Result<DMatrix<f64>> {
    parse_matrix_csv(&fs::read_to_string(path)?, header)
}

pub fn read_vector_csv(path: &Path, header: bool) -> Result<DVector<f64>> {
    parse_vector_csv(&fs::read_to_string(path)?, header)
}

pub fn matrix_to_csv(m: &DMatrix<f64>) -> String {
    let mut out = String::new();
    for i in 0..m.nrows() {
        let row: Vec<String> = m.row(i).iter().map(|v| format!("{v:?}")).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub fn vector_to_csv_row(v: &DVector<f64>) -> String {
    let row: Vec<String> = v.iter().map(|x| format!("{x:?}")).collect();
    format!("{}\n", row.join(","))
}

/// One model per line, comma-separated 1-based indices; a blank line is the
/// empty model.
pub fn parse_universe(text: &str, p: usize) -> Result<Vec<ModelId>> {
    text.lines().map(|l| ModelId::parse(l, p)).collect()
}

pub fn format_universe(models: &[ModelId]) -> String {
    models.iter().map(|m| format!("{}\n", m.to_line())).collect()
}

pub fn read_universe(path: &Path, p: usize) -> Result<Vec<ModelId>> {
    parse_universe(&fs::read_to_string(path)?, p)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matrix_with_and_without_header() {
        let m = parse_matrix_csv("1,2\n3,4\n5,6\n", false).unwrap();
        assert_eq!(m.shape(), (3, 2));
        assert_eq!(m[(2, 1)], 6.0);
        let h = parse_matrix_csv("a,b\n1,2\n", true).unwrap();
        assert_eq!(h.shape(), (1, 2));
        assert!(parse_matrix_csv("1,2\n3\n", false).is_err());
        assert!(parse_matrix_csv("1,x\n", false).is_err());
    }

    #[test]
    fn vector_row_or_column() {
        assert_eq!(parse_vector_csv("1, 2, 3\n", false).unwrap().len(), 3);
        assert_eq!(parse_vector_csv("1\n2\n", false).unwrap().len(), 2);
        assert!(parse_vector_csv("1,2\n3,4\n", false).is_err());
    }

    #[test]
    fn universe_file_round_trip() {
        let text = "\n1\n2\n1,2\n";
        let models = parse_universe(text, 2).unwrap();
        assert_eq!(models.len(), 4);
        assert!(models[0].is_empty());
        assert_eq!(format_universe(&models), text);
    }

    #[test]
    fn floats_round_trip_through_csv() {
        let m = DMatrix::from_row_slice(1, 2, &[0.1 + 0.2, -1e-300]);
        let back = parse_matrix_csv(&matrix_to_csv(&m), false).unwrap();
        assert_eq!(back, m);
    }
}
