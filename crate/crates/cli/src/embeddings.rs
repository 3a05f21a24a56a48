//! Embedding CSV files: header `index,label,z_0,...,z_{N-1}`.

use std::path::Path;

use crate::{CliError, CliResult, EXIT_FORMAT};

#[derive(Debug, Clone, PartialEq)]
pub struct Embeddings {
    pub index: Vec<usize>,
    pub labels: Vec<usize>,
    pub features: Vec<Vec<f64>>,
}

pub fn write(path: &Path, e: &Embeddings) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path)?;
    let dim = e.features.first().map_or(0, Vec::len);
    let mut header = vec!["index".to_string(), "label".to_string()];
    header.extend((0..dim).map(|i| format!("z_{i}")));
    w.write_record(&header)?;
    for ((i, l), f) in e.index.iter().zip(&e.labels).zip(&e.features) {
        let mut rec = vec![i.to_string(), l.to_string()];
        // `{:?}` prints the shortest representation that round-trips exactly.
        rec.extend(f.iter().map(|v| format!("{v:?}")));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read(path: &Path) -> CliResult<Embeddings> {
    let mut r = csv::Reader::from_path(path)?;
    let headers = r.headers()?.clone();
    if headers.len() < 3 || &headers[0] != "index" || &headers[1] != "label" {
        return Err(CliError::new(EXIT_FORMAT, format!("{}: expected header index,label,z_0,...", path.display())));
    }
    let bad = |row: usize| CliError::new(EXIT_FORMAT, format!("{}: bad value in row {row}", path.display()));
    let mut e = Embeddings { index: Vec::new(), labels: Vec::new(), features: Vec::new() };
    for (row, rec) in r.records().enumerate() {
        let rec = rec?;
        e.index.push(rec[0].parse().map_err(|_| bad(row))?);
        e.labels.push(rec[1].parse().map_err(|_| bad(row))?);
        e.features.push(rec.iter().skip(2).map(|v| v.parse::<f64>()).collect::<Result<_, _>>().map_err(|_| bad(row))?);
    }
    Ok(e)
}

/// Reads the `label` column of any CSV file.
pub fn read_labels(path: &Path) -> CliResult<Vec<usize>> {
    let mut r = csv::Reader::from_path(path)?;
    let col = r
        .headers()?
        .iter()
        .position(|h| h == "label")
        .ok_or_else(|| CliError::new(EXIT_FORMAT, format!("{}: no `label` column", path.display())))?;
    r.records()
        .map(|rec| {
            rec?.get(col)
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| CliError::new(EXIT_FORMAT, format!("{}: bad label", path.display())))
        })
        .collect()
}
