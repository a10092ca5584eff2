//! Flat-file formats: headed numeric CSV tables, paired datasets with a named
//! target column, labeled streams (`idx,x1,...,xp,y`) and JSON-lines events.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use crate::data::{DataMatrix, PairedDataset};
use crate::drift::{DriftEvent, StreamSample};
use crate::error::{Error, Result};

/// A headed numeric table, column-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub names: Vec<String>,
    pub columns: Vec<Vec<f64>>,
}

impl Table {
    pub fn n_rows(&self) -> usize {
        self.columns.first().map_or(0, Vec::len)
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }
}

fn parse_err(path: &str, line: u64, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_string(),
        line,
        msg: msg.into(),
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Reads a CSV table with a header row; every cell must be a finite number.
/// `label` names the source in error messages.
pub fn read_table<R: Read>(reader: R, label: &str) -> Result<Table> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let names: Vec<String> = rdr
        .headers()
        .map_err(|e| parse_err(label, 1, e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    if names.is_empty() || names.iter().all(String::is_empty) {
        return Err(parse_err(label, 1, "missing header row"));
    }
    let mut columns = vec![Vec::new(); names.len()];
    for record in rdr.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(label, line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != names.len() {
            return Err(parse_err(
                label,
                line,
                format!("expected {} fields, found {}", names.len(), record.len()),
            ));
        }
        for ((cell, name), col) in record.iter().zip(&names).zip(columns.iter_mut()) {
            let v: f64 = cell
                .parse()
                .map_err(|_| parse_err(label, line, format!("column {name:?}: cannot parse {cell:?} as a number")))?;
            if !v.is_finite() {
                return Err(parse_err(label, line, format!("column {name:?}: non-finite value {cell:?}")));
            }
            col.push(v);
        }
    }
    if columns[0].len() < 2 {
        return Err(parse_err(label, 1, "at least two data rows are required"));
    }
    Ok(Table { names, columns })
}

pub fn read_table_file(path: &Path) -> Result<Table> {
    let file = File::open(path).map_err(io_err(path))?;
    read_table(file, &path.display().to_string())
}

/// Splits a table into features (all columns but `target`, in file order)
/// and the target.
pub fn paired_from_table(table: &Table, target: &str, label: &str) -> Result<(Vec<String>, PairedDataset)> {
    let t = table
        .column_index(target)
        .ok_or_else(|| parse_err(label, 1, format!("no target column {target:?} in header")))?;
    if table.names.len() < 2 {
        return Err(parse_err(label, 1, "need at least one feature column besides the target"));
    }
    let mut names = Vec::new();
    let mut cols = Vec::new();
    for (i, (n, c)) in table.names.iter().zip(&table.columns).enumerate() {
        if i != t {
            names.push(n.clone());
            cols.push(c.clone());
        }
    }
    let ds = PairedDataset::new(DataMatrix::from_columns(&cols)?, table.columns[t].clone())?;
    Ok((names, ds))
}

pub fn read_paired_file(path: &Path, target: &str) -> Result<(Vec<String>, PairedDataset)> {
    let table = read_table_file(path)?;
    paired_from_table(&table, target, &path.display().to_string())
}

/// Writes features then the target column `target_name`.
pub fn write_paired<W: Write>(writer: W, names: &[String], target_name: &str, ds: &PairedDataset) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<&str> = names.iter().map(String::as_str).collect();
    header.push(target_name);
    w.write_record(&header).map_err(csv_write_err)?;
    for i in 0..ds.n_samples() {
        let mut row: Vec<String> = ds.x().row(i).iter().map(|v| v.to_string()).collect();
        row.push(ds.y()[i].to_string());
        w.write_record(&row).map_err(csv_write_err)?;
    }
    w.flush().map_err(|e| Error::Io {
        path: "<output>".into(),
        source: e,
    })
}

fn csv_write_err(e: csv::Error) -> Error {
    Error::InvalidData(format!("csv write failed: {e}"))
}

/// Reads `idx,x1,...,xp,y`; indices must be non-negative integers.
pub fn read_stream<R: Read>(reader: R, label: &str) -> Result<Vec<StreamSample>> {
    let table = read_table(reader, label)?;
    let k = table.names.len();
    if k < 3 || table.names[0] != "idx" || table.names[k - 1] != "y" {
        return Err(parse_err(label, 1, "stream header must be idx,x1,...,xp,y"));
    }
    let mut out = Vec::with_capacity(table.n_rows());
    for r in 0..table.n_rows() {
        let idx = table.columns[0][r];
        if idx < 0.0 || idx.fract() != 0.0 {
            return Err(parse_err(label, r as u64 + 2, format!("column \"idx\": {idx} is not a non-negative integer")));
        }
        out.push(StreamSample {
            index: idx as usize,
            x: (1..k - 1).map(|j| table.columns[j][r]).collect(),
            y: table.columns[k - 1][r],
        });
    }
    Ok(out)
}

pub fn read_stream_file(path: &Path) -> Result<Vec<StreamSample>> {
    let file = File::open(path).map_err(io_err(path))?;
    read_stream(file, &path.display().to_string())
}

pub fn write_stream<W: Write>(writer: W, samples: &[StreamSample]) -> Result<()> {
    let p = samples.first().map_or(0, |s| s.x.len());
    let mut w = BufWriter::new(writer);
    let io = |e| Error::Io {
        path: "<output>".into(),
        source: e,
    };
    let header: Vec<String> = std::iter::once("idx".to_string())
        .chain((1..=p).map(|j| format!("x{j}")))
        .chain(std::iter::once("y".to_string()))
        .collect();
    writeln!(w, "{}", header.join(",")).map_err(io)?;
    for s in samples {
        let mut fields = vec![s.index.to_string()];
        fields.extend(s.x.iter().map(|v| v.to_string()));
        fields.push(s.y.to_string());
        writeln!(w, "{}", fields.join(",")).map_err(io)?;
    }
    w.flush().map_err(io)
}

/// One `{"detected_at": .., "p_value": ..}` object per line.
pub fn write_events<W: Write>(mut writer: W, events: &[DriftEvent]) -> Result<()> {
    for e in events {
        let line = serde_json::to_string(e).map_err(|e| Error::InvalidData(e.to_string()))?;
        writeln!(writer, "{line}").map_err(|e| Error::Io {
            path: "<output>".into(),
            source: e,
        })?;
    }
    Ok(())
}

/// Writes serializable rows as CSV with a header derived from field names.
pub fn write_csv_rows<W: Write, T: serde::Serialize>(writer: W, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in rows {
        w.serialize(r).map_err(csv_write_err)?;
    }
    w.flush().map_err(|e| Error::Io {
        path: "<output>".into(),
        source: e,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reads_table_and_paired() {
        let src = "a, b ,y\n1,2,3\n4,5,6\n7,8,9\n";
        let t = read_table(src.as_bytes(), "t.csv").unwrap();
        assert_eq!(t.names, vec!["a", "b", "y"]);
        assert_eq!(t.columns[1], vec![2.0, 5.0, 8.0]);
        let (names, ds) = paired_from_table(&t, "a", "t.csv").unwrap();
        assert_eq!(names, vec!["b", "y"]);
        assert_eq!(ds.y(), &[1.0, 4.0, 7.0]);
        assert!(paired_from_table(&t, "z", "t.csv").is_err());
    }

    #[test]
    fn errors_carry_line_and_column() {
        let e = read_table("a,y\n1,2\n3,oops\n".as_bytes(), "f.csv").unwrap_err();
        let msg = e.to_string();
        assert!(msg.contains("f.csv") && msg.contains("line 3") && msg.contains("\"y\""), "{msg}");
        let e = read_table("a,y\n1,2\n3\n".as_bytes(), "f.csv").unwrap_err();
        assert!(e.to_string().contains("line 3"), "{e}");
        assert!(read_table("a,y\n1,NaN\n2,3\n".as_bytes(), "f.csv").is_err());
        assert!(read_table("a,y\n1,2\n".as_bytes(), "f.csv").is_err());
    }

    #[test]
    fn stream_round_trip() {
        let s = vec![
            StreamSample { index: 0, x: vec![0.5, -1.0], y: 2.0 },
            StreamSample { index: 3, x: vec![1.25, 0.0], y: -0.1 },
        ];
        let mut buf = Vec::new();
        write_stream(&mut buf, &s).unwrap();
        assert!(buf.starts_with(b"idx,x1,x2,y\n"));
        assert_eq!(read_stream(buf.as_slice(), "s").unwrap(), s);
        assert!(read_stream("i,x1,y\n0,1,2\n1,1,2\n".as_bytes(), "s").is_err());
        assert!(read_stream("idx,x1,y\n0.5,1,2\n1,1,2\n".as_bytes(), "s").is_err());
    }

    #[test]
    fn events_are_json_lines() {
        let mut buf = Vec::new();
        write_events(&mut buf, &[DriftEvent { detected_at: 1099, p_value: 0.0099 }]).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "{\"detected_at\":1099,\"p_value\":0.0099}\n");
    }

    #[test]
    fn paired_round_trip() {
        let ds = PairedDataset::new(DataMatrix::from_rows(&[vec![1.0], vec![2.5]]).unwrap(), vec![0.0, -3.0]).unwrap();
        let mut buf = Vec::new();
        write_paired(&mut buf, &["x1".into()], "y", &ds).unwrap();
        let t = read_table(buf.as_slice(), "p").unwrap();
        assert_eq!(paired_from_table(&t, "y", "p").unwrap().1, ds);
    }
}
