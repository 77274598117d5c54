//! File formats: dataset and sweep CSVs, model files, and atomic writes.
//!
//! Every writer renders into memory first and lands the bytes with a
//! write-then-rename, so an interrupted run never leaves a truncated file.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::experiments::SweepResult;
use crate::gmm::{DatasetMatrix, Gmm, Provenance};

/// Writes `bytes` to a temporary sibling of `path`, syncs it, then renames
/// it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let name = path
        .file_name()
        .ok_or_else(|| Error::Format(format!("{}: not a file path", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if let Err(e) = result {
        let _ = fs::remove_file(&tmp);
        return Err(Error::io(path, e));
    }
    Ok(())
}

/// Shortest decimal text that parses back to the same `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Parse {
            path: path.to_path_buf(),
            line,
            message: format!("{other:?}"),
        },
    }
}

/// Renders a dataset as CSV with header `x0..x{d-1},component,provenance`.
/// The component column is empty when the rows carry no labels.
pub fn dataset_to_csv(data: &DatasetMatrix) -> Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new().from_writer(Vec::new());
    let mut header: Vec<String> = (0..data.dim()).map(|j| format!("x{j}")).collect();
    header.push("component".into());
    header.push("provenance".into());
    w.write_record(&header).map_err(|e| Error::Format(e.to_string()))?;
    let mut record = Vec::with_capacity(data.dim() + 2);
    for (i, row) in data.rows().enumerate() {
        record.clear();
        record.extend(row.iter().map(|&v| fmt_f64(v)));
        record.push(match &data.component_labels {
            Some(l) => l[i].to_string(),
            None => String::new(),
        });
        record.push(data.provenance.as_str().to_string());
        w.write_record(&record).map_err(|e| Error::Format(e.to_string()))?;
    }
    w.into_inner().map_err(|e| Error::Format(e.to_string()))
}

pub fn write_dataset(path: &Path, data: &DatasetMatrix) -> Result<()> {
    write_atomic(path, &dataset_to_csv(data)?)
}

/// Parses a dataset CSV. Errors name the offending line.
pub fn parse_dataset(path: &Path, text: &[u8]) -> Result<DatasetMatrix> {
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(text);
    let header = r.headers().map_err(|e| csv_error(path, e))?.clone();
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let n_cols = header.len();
    let expected_tail = ["component", "provenance"];
    let dim = n_cols.saturating_sub(2);
    let header_ok = n_cols >= 3
        && header.iter().take(dim).enumerate().all(|(j, h)| h == format!("x{j}"))
        && header.iter().skip(dim).eq(expected_tail.iter().copied());
    if !header_ok {
        return Err(parse_err(1, "expected header x0,..,x{d-1},component,provenance".into()));
    }

    let mut values = Vec::new();
    let mut labels: Vec<Option<usize>> = Vec::new();
    let mut provenance: Option<Provenance> = None;
    for record in r.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.len() != n_cols {
            return Err(parse_err(line, format!("expected {n_cols} fields, found {}", record.len())));
        }
        for (j, field) in record.iter().take(dim).enumerate() {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| parse_err(line, format!("column x{j}: '{field}' is not a number")))?;
            if !v.is_finite() {
                return Err(parse_err(line, format!("column x{j}: value is not finite")));
            }
            values.push(v);
        }
        let comp = record[dim].trim();
        labels.push(if comp.is_empty() {
            None
        } else {
            Some(comp.parse().map_err(|_| {
                parse_err(line, format!("component: '{comp}' is not a nonnegative integer"))
            })?)
        });
        let prov = Provenance::parse(record[dim + 1].trim())
            .ok_or_else(|| parse_err(line, format!("unknown provenance '{}'", &record[dim + 1])))?;
        match provenance {
            None => provenance = Some(prov),
            Some(p) if p != prov => {
                return Err(parse_err(line, "mixed provenance within one dataset".into()));
            }
            Some(_) => {}
        }
    }
    let provenance = provenance.ok_or_else(|| parse_err(2, "dataset has no rows".into()))?;
    let component_labels = if labels.iter().all(Option::is_some) {
        Some(labels.into_iter().flatten().collect())
    } else if labels.iter().all(Option::is_none) {
        None
    } else {
        return Err(parse_err(0, "component column must be filled on every row or none".into()));
    };
    DatasetMatrix::new(values, dim, provenance, 0, component_labels)
}

pub fn read_dataset(path: &Path) -> Result<DatasetMatrix> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_dataset(path, &bytes)
}

pub fn write_model(path: &Path, model: &Gmm) -> Result<()> {
    let mut text = model.to_json();
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

pub fn read_model(path: &Path) -> Result<Gmm> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Gmm::from_json(&text).map_err(|e| e.context(path.display().to_string()))
}

/// Per-round rows: `variable,value,round,kl_anchor,kl_gen,kl_gap,seed`.
pub fn sweep_raw_csv(result: &SweepResult) -> Vec<u8> {
    let mut out = String::from("variable,value,round,kl_anchor,kl_gen,kl_gap,seed\n");
    for v in &result.per_value {
        for r in &v.rounds {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                result.variable.as_str(),
                r.value,
                r.round,
                fmt_f64(r.kl_anchor),
                fmt_f64(r.kl_gen),
                fmt_f64(r.kl_gap),
                r.seed
            ));
        }
    }
    out.into_bytes()
}

/// Per-value rows: `variable,value,mean_gap,std_gap,n_rounds`.
pub fn sweep_aggregate_csv(result: &SweepResult) -> Vec<u8> {
    let mut out = String::from("variable,value,mean_gap,std_gap,n_rounds\n");
    for v in &result.per_value {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            result.variable.as_str(),
            v.value,
            fmt_f64(v.mean_gap),
            fmt_f64(v.std_gap),
            v.rounds.len()
        ));
    }
    out.into_bytes()
}

/// Fails unless `dir` exists and is a directory.
pub fn require_dir(dir: &Path) -> Result<PathBuf> {
    match fs::metadata(dir) {
        Ok(m) if m.is_dir() => Ok(dir.to_path_buf()),
        Ok(_) => Err(Error::InvalidParameter(format!(
            "output path {} is not a directory",
            dir.display()
        ))),
        Err(e) => Err(Error::io(dir, e).context("output directory")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip_through_text() {
        for v in [0.1, -1.0 / 3.0, 1e-300, 6.02214076e23, f64::MIN_POSITIVE, -0.0] {
            let back: f64 = fmt_f64(v).parse().unwrap();
            assert_eq!(back.to_bits(), v.to_bits());
        }
    }

    #[test]
    fn dataset_round_trip_is_exact() {
        let g = Gmm::standard_normal(3).unwrap();
        let mut d = g.sample(40, 5).unwrap();
        d.provenance = Provenance::Anchor;
        let bytes = dataset_to_csv(&d).unwrap();
        let text = std::str::from_utf8(&bytes).unwrap();
        assert!(text.starts_with("x0,x1,x2,component,provenance\n"));
        assert!(!text.contains('\r'));
        let back = parse_dataset(Path::new("mem.csv"), &bytes).unwrap();
        assert_eq!(back.as_slice(), d.as_slice());
        assert_eq!(back.component_labels, d.component_labels);
        assert_eq!(back.provenance, Provenance::Anchor);
    }

    #[test]
    fn malformed_row_names_its_line() {
        let text = b"x0,x1,component,provenance\n1,2,0,anchor\n3,oops,0,anchor\n";
        let err = parse_dataset(Path::new("bad.csv"), text).unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other}"),
        }
        assert!(err_text(text).contains("bad.csv:3"));
    }

    fn err_text(text: &[u8]) -> String {
        parse_dataset(Path::new("bad.csv"), text).unwrap_err().to_string()
    }

    #[test]
    fn ragged_row_and_bad_header_rejected() {
        assert!(err_text(b"x0,x1,component,provenance\n1,2,anchor\n").contains(":2:"));
        assert!(err_text(b"a,b,component,provenance\n1,2,,anchor\n").contains(":1:"));
        assert!(err_text(b"x0,component,provenance\n1,,alien\n").contains("provenance"));
    }

    #[test]
    fn atomic_write_leaves_no_temporaries() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.txt");
        write_atomic(&p, b"one").unwrap();
        write_atomic(&p, b"two").unwrap();
        assert_eq!(fs::read(&p).unwrap(), b"two");
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
        assert!(write_atomic(&dir.path().join("missing/a.txt"), b"x").is_err());
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
