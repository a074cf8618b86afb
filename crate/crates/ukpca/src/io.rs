//! Sample sets and matrices as CSV.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use faer::MatRef;
use ukpca_core::kernels::{Provenance, SampleSet};

use crate::error::{CliError, Result};

/// Reads one point per row. A first row that does not parse as numbers is
/// taken as a header; every other row must have the same number of numeric
/// fields.
pub fn read_samples(path: &Path) -> Result<SampleSet> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    parse_samples(file, path)
}

pub fn parse_samples(reader: impl std::io::Read, path: &Path) -> Result<SampleSet> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .flexible(true)
        .from_reader(reader);
    let mut dim = None;
    let mut data = Vec::new();
    let mut first = true;
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            CliError::Parse { path: path.into(), line, msg: e.to_string() }
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.iter().all(|f| f.is_empty()) {
            continue;
        }
        let parsed: Vec<Option<f64>> = rec.iter().map(|f| f.parse::<f64>().ok()).collect();
        if std::mem::take(&mut first) && parsed.iter().any(Option::is_none) {
            continue;
        }
        let width = *dim.get_or_insert(parsed.len());
        if parsed.len() != width {
            return Err(CliError::Parse {
                path: path.into(),
                line,
                msg: format!("expected {width} fields, found {}", parsed.len()),
            });
        }
        for (col, (v, raw)) in parsed.iter().zip(rec.iter()).enumerate() {
            match v {
                Some(x) if x.is_finite() => data.push(*x),
                _ => {
                    return Err(CliError::Parse {
                        path: path.into(),
                        line,
                        msg: format!("column {}: '{raw}' is not a finite number", col + 1),
                    })
                }
            }
        }
    }
    let dim = dim.ok_or_else(|| CliError::Parse { path: path.into(), line: 0, msg: "no data rows".into() })?;
    Ok(SampleSet::new(dim, data, Provenance::File(path.display().to_string()))?)
}

/// Writes `a` with a header row.
pub fn write_matrix(path: &Path, header: &[String], a: MatRef<'_, f64>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for i in 0..a.nrows() {
        w.write_record((0..a.ncols()).map(|j| a[(i, j)].to_string()))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))?;
    Ok(())
}

pub(crate) fn create(path: &Path) -> Result<std::io::BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    File::create(path).map(std::io::BufWriter::new).map_err(|e| CliError::io(path, e))
}

pub(crate) fn write_all(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = create(path)?;
    f.write_all(bytes).and_then(|_| f.flush()).map_err(|e| CliError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: &str) -> Result<SampleSet> {
        parse_samples(s.as_bytes(), Path::new("mem.csv"))
    }

    #[test]
    fn header_is_detected() {
        let s = parse("x,y\n1,2\n3,4\n").unwrap();
        assert_eq!((s.len(), s.dim()), (2, 2));
        assert_eq!(s.point(1), &[3.0, 4.0]);
        let s = parse("1,2\n3,4\n").unwrap();
        assert_eq!(s.len(), 2);
    }

    #[test]
    fn errors_carry_line_numbers() {
        match parse("x\n1\nabc\n") {
            Err(CliError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        match parse("1,2\n3\n") {
            Err(CliError::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        assert!(parse("x,y\n").is_err());
        assert!(parse("1,nan\n").is_err());
    }
}
