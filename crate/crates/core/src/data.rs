//! In-memory datasets and the CSV exchange format.
//!
//! CSV files are comma separated UTF-8 with `.` as decimal separator. The
//! first line may be a header, and the last column is always the response.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub x: DenseMatrix,
    pub y: Vec<f64>,
    pub column_names: Option<Vec<String>>,
}

impl Dataset {
    pub fn new(x: DenseMatrix, y: Vec<f64>) -> Result<Self> {
        if x.rows() != y.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} covariate rows but {} responses",
                x.rows(),
                y.len()
            )));
        }
        if let Some(i) = y.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidParam(format!("non-finite response at row {i}")));
        }
        Ok(Self {
            x,
            y,
            column_names: None,
        })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn p(&self) -> usize {
        self.x.cols()
    }

    pub fn y_mean(&self) -> f64 {
        self.y.iter().sum::<f64>() / self.y.len() as f64
    }

    /// Rows in the given order; repeated indices are allowed.
    pub fn select_rows(&self, idx: &[usize]) -> Result<Self> {
        Ok(Self {
            x: self.x.select_rows(idx)?,
            y: idx.iter().map(|&i| self.y[i]).collect(),
            column_names: self.column_names.clone(),
        })
    }
}

fn parse_field(raw: &str) -> Option<f64> {
    let v: f64 = raw.trim().parse().ok()?;
    v.is_finite().then_some(v)
}

/// Read a dataset from CSV text. `origin` only labels error messages.
pub fn read_csv<R: Read>(reader: R, origin: &Path) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(reader);
    let parse_err = |line: usize, column: usize, message: String| Error::Parse {
        path: origin.to_path_buf(),
        line,
        column,
        message,
    };

    let mut names = None;
    let mut width = None;
    let mut values = Vec::new();
    let mut y = Vec::new();
    for (idx, record) in rdr.records().enumerate() {
        let record = record?;
        let line = record.position().map_or(idx as usize + 1, |p| p.line() as usize);
        if idx == 0 && record.iter().all(|f| f.trim().parse::<f64>().is_err()) {
            names = Some(record.iter().map(|s| s.trim().to_string()).collect::<Vec<_>>());
            width = Some(record.len());
            continue;
        }
        let w = *width.get_or_insert(record.len());
        if record.len() != w {
            return Err(parse_err(
                line,
                record.len().min(w) + 1,
                format!("expected {w} fields, found {}", record.len()),
            ));
        }
        if w < 2 {
            return Err(parse_err(line, 1, "need at least one covariate and a response".into()));
        }
        for (col, field) in record.iter().enumerate() {
            let v = parse_field(field).ok_or_else(|| {
                parse_err(line, col + 1, format!("cannot parse {field:?} as a finite number"))
            })?;
            if col + 1 == w {
                y.push(v);
            } else {
                values.push(v);
            }
        }
    }
    if y.is_empty() {
        return Err(Error::EmptyFile(origin.to_path_buf()));
    }
    let p = width.expect("at least one record") - 1;
    let x = DenseMatrix::new(y.len(), p, values)?;
    let mut ds = Dataset::new(x, y)?;
    ds.column_names = names;
    Ok(ds)
}

pub fn load_csv(path: &Path) -> Result<Dataset> {
    let file = File::open(path)?;
    read_csv(BufReader::new(file), path)
}

pub fn write_csv<W: Write>(ds: &Dataset, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let header: Vec<String> = match &ds.column_names {
        Some(names) if names.len() == ds.p() + 1 => names.clone(),
        _ => (1..=ds.p())
            .map(|j| format!("x{j}"))
            .chain(std::iter::once("y".to_string()))
            .collect(),
    };
    w.write_record(&header)?;
    for i in 0..ds.n() {
        let row = ds.x.row(i).iter().chain(std::iter::once(&ds.y[i]));
        w.write_record(row.map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_csv(ds: &Dataset, path: &Path) -> Result<()> {
    write_csv(ds, BufWriter::new(File::create(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn read(text: &str) -> Result<Dataset> {
        read_csv(text.as_bytes(), Path::new("mem.csv"))
    }

    #[test]
    fn two_rows_three_columns() {
        let ds = read("1,2,3\n4,5,6\n").unwrap();
        assert_eq!((ds.n(), ds.p()), (2, 2));
        assert_eq!(ds.y, vec![3.0, 6.0]);
        assert_eq!(ds.x.row(1), &[4.0, 5.0]);
        assert!(ds.column_names.is_none());
    }

    #[test]
    fn header_is_optional() {
        let ds = read("a,b,target\n1,2,3\n").unwrap();
        assert_eq!(
            ds.column_names.unwrap(),
            vec!["a".to_string(), "b".into(), "target".into()]
        );
        assert_eq!(ds.y, vec![3.0]);
    }

    #[test]
    fn header_only_is_empty() {
        assert!(matches!(read("a,b,y\n"), Err(Error::EmptyFile(_))));
        assert!(matches!(read(""), Err(Error::EmptyFile(_))));
    }

    #[test]
    fn bad_field_reports_location() {
        match read("x,y\n1,2\n3,abc\n") {
            Err(Error::Parse { line, column, .. }) => assert_eq!((line, column), (3, 2)),
            other => panic!("unexpected {other:?}"),
        }
        match read("1,abc,3\n") {
            Err(Error::Parse { line, column, .. }) => assert_eq!((line, column), (1, 2)),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_nan_inf_and_ragged() {
        assert!(matches!(read("1,NaN\n"), Err(Error::Parse { .. })));
        assert!(matches!(read("1,2\ninf,3\n"), Err(Error::Parse { .. })));
        assert!(matches!(read("1,2\n3,4,5\n"), Err(Error::Parse { .. })));
        assert!(matches!(read("1\n2\n"), Err(Error::Parse { .. })));
    }

    proptest! {
        #[test]
        fn write_then_read_roundtrips(vals in prop::collection::vec(-1e6..1e6f64, 12)) {
            let x = DenseMatrix::new(4, 2, vals[..8].to_vec()).unwrap();
            let ds = Dataset::new(x, vals[8..].to_vec()).unwrap();
            let mut buf = Vec::new();
            write_csv(&ds, &mut buf).unwrap();
            let back = read_csv(buf.as_slice(), Path::new("mem.csv")).unwrap();
            prop_assert_eq!(back.x, ds.x);
            prop_assert_eq!(back.y, ds.y);
        }
    }
}
