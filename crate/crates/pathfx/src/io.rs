//! CSV input and output of datasets.
//!
//! The header names the columns: `c0_1 .. c0_k`, `e`, `c1_1 .. c1_l`, `m`,
//! `y`, in any order. Empty cells and `NA` are missing values. Columns
//! outside that scheme are an error unless `ignore_extra` is set.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use pathfx_core::data::{validate_dataset, DataError, Dataset, RawRecord};

#[derive(Debug, thiserror::Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Open { path: String, source: std::io::Error },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("header: {0}")]
    Header(String),
    #[error("line {line}, column {column}: cannot parse {value:?} as a number")]
    Parse { line: usize, column: String, value: String },
    #[error("{0}")]
    Data(#[from] DataError),
}

#[derive(Debug, Clone, Copy, Default)]
pub struct CsvOptions {
    pub ignore_extra: bool,
}

enum Slot {
    C0(usize),
    E,
    C1(usize),
    M,
    Y,
    Skip,
}

fn numbered(name: &str, prefix: &str) -> Option<usize> {
    name.strip_prefix(prefix)?.parse::<usize>().ok().filter(|&j| j >= 1)
}

/// Maps header names to slots and returns the block sizes.
fn layout(header: &csv::StringRecord, opts: CsvOptions) -> Result<(Vec<Slot>, usize, usize), IoError> {
    let mut slots = Vec::with_capacity(header.len());
    let (mut c0, mut c1) = (Vec::new(), Vec::new());
    let mut seen = std::collections::HashSet::new();
    for name in header.iter() {
        let name = name.trim();
        if !seen.insert(name.to_string()) {
            return Err(IoError::Header(format!("duplicate column {name}")));
        }
        let slot = match name {
            "e" => Slot::E,
            "m" => Slot::M,
            "y" => Slot::Y,
            _ => match (numbered(name, "c0_"), numbered(name, "c1_")) {
                (Some(j), _) => {
                    c0.push(j);
                    Slot::C0(j - 1)
                }
                (_, Some(j)) => {
                    c1.push(j);
                    Slot::C1(j - 1)
                }
                _ if opts.ignore_extra => Slot::Skip,
                _ => {
                    return Err(IoError::Header(format!(
                        "unexpected column {name:?} (use --ignore-extra to skip it)"
                    )))
                }
            },
        };
        slots.push(slot);
    }
    for required in ["e", "m", "y"] {
        if !seen.contains(required) {
            return Err(IoError::Header(format!("missing column {required}")));
        }
    }
    let contiguous = |mut v: Vec<usize>, block: &str| -> Result<usize, IoError> {
        v.sort_unstable();
        if v.iter().enumerate().any(|(i, &j)| j != i + 1) {
            return Err(IoError::Header(format!("{block} columns must be numbered 1..k without gaps")));
        }
        Ok(v.len())
    };
    let d0 = contiguous(c0, "c0")?;
    let d1 = contiguous(c1, "c1")?;
    if d0 == 0 {
        return Err(IoError::Header("at least one c0_ column is required".into()));
    }
    Ok((slots, d0, d1))
}

fn parse_cell(cell: &str, line: usize, column: &str) -> Result<Option<f64>, IoError> {
    let t = cell.trim();
    if t.is_empty() || t == "NA" {
        return Ok(None);
    }
    t.parse::<f64>()
        .map(Some)
        .map_err(|_| IoError::Parse { line, column: column.to_string(), value: t.to_string() })
}

pub fn read_dataset_from<R: Read>(reader: R, opts: CsvOptions) -> Result<Dataset, IoError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header = rdr.headers()?.clone();
    let (slots, d0, d1) = layout(&header, opts)?;
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        let mut raw = RawRecord { c0: vec![None; d0], c1: vec![None; d1], ..RawRecord::default() };
        for ((slot, cell), name) in slots.iter().zip(rec.iter()).zip(header.iter()) {
            if matches!(slot, Slot::Skip) {
                continue;
            }
            let v = parse_cell(cell, line, name)?;
            match *slot {
                Slot::C0(j) => raw.c0[j] = v,
                Slot::C1(j) => raw.c1[j] = v,
                Slot::E => raw.e = v,
                Slot::M => raw.m = v,
                Slot::Y => raw.y = v,
                Slot::Skip => {}
            }
        }
        rows.push(raw);
    }
    Ok(validate_dataset(&rows, d0, d1)?)
}

pub fn read_dataset(path: &Path, opts: CsvOptions) -> Result<Dataset, IoError> {
    let f = File::open(path).map_err(|source| IoError::Open { path: path.display().to_string(), source })?;
    read_dataset_from(f, opts)
}

/// Column names in output order.
pub fn header(d0: usize, d1: usize) -> Vec<String> {
    let mut h: Vec<String> = (1..=d0).map(|j| format!("c0_{j}")).collect();
    h.push("e".into());
    h.extend((1..=d1).map(|j| format!("c1_{j}")));
    h.push("m".into());
    h.push("y".into());
    h
}

/// Writes with shortest round-trip float formatting.
pub fn write_dataset_to<W: Write>(w: W, data: &Dataset) -> Result<(), IoError> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(header(data.d0(), data.d1()))?;
    for r in data.records() {
        let mut row: Vec<String> = r.c0.iter().map(f64::to_string).collect();
        row.push(r.e.to_string());
        row.extend(r.c1.iter().map(f64::to_string));
        row.push(r.m.to_string());
        row.push(r.y.to_string());
        wtr.write_record(&row)?;
    }
    wtr.flush().map_err(|e| IoError::Csv(e.into()))?;
    Ok(())
}

pub fn write_dataset(path: &Path, data: &Dataset) -> Result<(), IoError> {
    let f = File::create(path).map_err(|source| IoError::Open { path: path.display().to_string(), source })?;
    write_dataset_to(f, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let data = pathfx_core::simulation::draw_dataset(20, 3);
        let mut buf = Vec::new();
        write_dataset_to(&mut buf, &data).unwrap();
        let back = read_dataset_from(&buf[..], CsvOptions::default()).unwrap();
        assert_eq!(back, data);
    }

    #[test]
    fn column_order_is_free() {
        let text = "y,m,e,c0_1\n1.5,0.2,1,0.3\n2,0.1,0,0.4\n";
        let d = read_dataset_from(text.as_bytes(), CsvOptions::default()).unwrap();
        assert_eq!((d.d0(), d.d1()), (1, 0));
        assert_eq!(d.records()[0].y, 1.5);
    }

    #[test]
    fn strict_header() {
        let text = "c0_1,e,m,y,id\n0.3,1,0.2,1.5,a\n";
        assert!(matches!(read_dataset_from(text.as_bytes(), CsvOptions::default()), Err(IoError::Header(_))));
        let d = read_dataset_from(text.as_bytes(), CsvOptions { ignore_extra: true }).unwrap();
        assert_eq!(d.len(), 1);
        let gap = "c0_1,c0_3,e,m,y\n1,2,1,0,0\n";
        assert!(matches!(read_dataset_from(gap.as_bytes(), CsvOptions::default()), Err(IoError::Header(_))));
    }

    #[test]
    fn row_level_errors() {
        let text = "c0_1,e,m,y\n0.3,1,0.2,1.5\n0.3,1,,1.5\n";
        let err = read_dataset_from(text.as_bytes(), CsvOptions::default()).unwrap_err();
        assert_eq!(err.to_string(), "row 1: missing value in column m");
        let text = "c0_1,e,m,y\n0.3,1,x,1.5\n";
        let err = read_dataset_from(text.as_bytes(), CsvOptions::default()).unwrap_err();
        assert!(err.to_string().starts_with("line 2, column m"));
        let text = "c0_1,e,m,y\n0.3,1.5,0,1.5\n";
        assert!(read_dataset_from(text.as_bytes(), CsvOptions::default()).is_err());
    }
}
