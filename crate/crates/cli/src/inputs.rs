//! Small file formats accepted by the subcommands.

use std::path::Path;

use ndarray::Array2;
use sqcsef::{Error, RawDataset, Result};

/// A square correlation matrix as CSV: a header of indicator names followed
/// by one numeric row per indicator.
pub fn parse_correlation_csv(text: &str) -> Result<(Vec<String>, Array2<f64>)> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let names: Vec<String> = rdr
        .headers()
        .map_err(|e| Error::Load {
            row: None,
            column: None,
            message: format!("correlation header: {e}"),
        })?
        .iter()
        .map(str::to_owned)
        .collect();
    let n = names.len();
    if n == 0 || names.iter().any(String::is_empty) {
        return Err(Error::Load {
            row: None,
            column: None,
            message: "correlation header must name every column".into(),
        });
    }
    let mut values = Vec::with_capacity(n * n);
    let mut rows = 0;
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::Load {
            row: Some(i + 1),
            column: None,
            message: e.to_string(),
        })?;
        if rec.len() != n {
            return Err(Error::Load {
                row: Some(i + 1),
                column: None,
                message: format!("{} fields, expected {n}", rec.len()),
            });
        }
        for (j, field) in rec.iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| Error::Load {
                row: Some(i + 1),
                column: Some(names[j].clone()),
                message: format!("'{field}' is not a number"),
            })?;
            if !v.is_finite() {
                return Err(Error::Load {
                    row: Some(i + 1),
                    column: Some(names[j].clone()),
                    message: "non-finite value".into(),
                });
            }
            values.push(v);
        }
        rows += 1;
    }
    if rows != n {
        return Err(Error::Load {
            row: None,
            column: None,
            message: format!("{rows} rows for {n} columns; the matrix must be square"),
        });
    }
    let m = Array2::from_shape_vec((n, n), values).expect("n * n values collected");
    Ok((names, m))
}

pub fn dataset_csv(d: &RawDataset) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(d.indicators().iter().map(|s| s.name.as_str()))
        .expect("in-memory write");
    for row in d.rows().rows() {
        w.write_record(row.iter().map(|x| x.to_string()))
            .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv output is UTF-8")
}

pub fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_owned(),
        source: e,
    })
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::Io {
            path: dir.to_owned(),
            source: e,
        })?;
    }
    std::fs::write(path, text).map_err(|e| Error::Io {
        path: path.to_owned(),
        source: e,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn correlation_csv() {
        let (names, m) = parse_correlation_csv("a, b\n1, 0.5\n0.5, 1\n").unwrap();
        assert_eq!(names, vec!["a", "b"]);
        assert_eq!(m[[0, 1]], 0.5);
        assert!(parse_correlation_csv("a,b\n1,0.5\n").is_err());
        assert!(parse_correlation_csv("a,b\n1,x\n0.5,1\n").is_err());
        assert!(parse_correlation_csv("a,b\n1,0.5,3\n0.5,1\n").is_err());
        assert!(parse_correlation_csv("").is_err());
    }
}
