//! File formats.
//!
//! * Matrix files: three header lines `K=..`, `p=..`, `q=..` followed by the
//!   matrix as row-major CSV.
//! * Measurement files: a `# K=..,N=..,phases=abc` line, a column-name row,
//!   then one row per sample: the timestamp followed by the components in
//!   canonical order.
//! * Admittance files: `K=..` and `N=..` header lines, then CSV rows
//!   `k,phase,row,col,re,im` for every nonzero entry.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{FcmError, Result};
use crate::harmonic::{Fcm, HarmonicConfig, PHASES};
use crate::network::{BusLayout, HarmonicAdmittance};

fn parse_key(line: &str, key: &str) -> Result<usize> {
    let line = line.trim();
    line.strip_prefix(key)
        .and_then(|s| s.strip_prefix('='))
        .and_then(|s| s.trim().parse().ok())
        .ok_or_else(|| FcmError::Parse(format!("expected `{key}=<integer>`, found `{line}`")))
}

fn next_line(lines: &mut impl BufRead) -> Result<String> {
    let mut s = String::new();
    if lines.read_line(&mut s)? == 0 {
        return Err(FcmError::Parse("unexpected end of file".into()));
    }
    Ok(s)
}

fn parse_f64(s: &str) -> Result<f64> {
    s.trim()
        .parse()
        .map_err(|_| FcmError::Parse(format!("not a number: `{s}`")))
}

/// Writes a real matrix with the `K/p/q` header.
pub fn write_matrix(w: impl Write, cfg: HarmonicConfig, m: &DMatrix<f64>) -> Result<()> {
    let mut w = BufWriter::new(w);
    writeln!(w, "K={}", cfg.max_order())?;
    writeln!(w, "p={}", m.nrows())?;
    writeln!(w, "q={}", m.ncols())?;
    let mut csv = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    for row in m.row_iter() {
        csv.write_record(row.iter().map(|v| format!("{v:e}")))?;
    }
    csv.flush()?;
    Ok(())
}

/// Reads a matrix file, checking the declared shape.
pub fn read_matrix(r: impl Read) -> Result<(HarmonicConfig, DMatrix<f64>)> {
    let mut r = BufReader::new(r);
    let k = parse_key(&next_line(&mut r)?, "K")?;
    let p = parse_key(&next_line(&mut r)?, "p")?;
    let q = parse_key(&next_line(&mut r)?, "q")?;
    let mut csv = csv::ReaderBuilder::new().has_headers(false).from_reader(r);
    let mut data = Vec::with_capacity(p * q);
    let mut rows = 0;
    for rec in csv.records() {
        let rec = rec?;
        if rec.len() != q {
            return Err(FcmError::DimensionMismatch {
                what: "matrix file columns",
                expected: q,
                found: rec.len(),
            });
        }
        for f in rec.iter() {
            data.push(parse_f64(f)?);
        }
        rows += 1;
    }
    if rows != p {
        return Err(FcmError::DimensionMismatch {
            what: "matrix file rows",
            expected: p,
            found: rows,
        });
    }
    Ok((HarmonicConfig::new(k), DMatrix::from_row_slice(p, q, &data)))
}

pub fn write_fcm_file(path: &Path, fcm: &Fcm) -> Result<()> {
    write_matrix(File::create(path)?, fcm.config(), fcm.matrix())
}

pub fn read_fcm_file(path: &Path) -> Result<Fcm> {
    let (cfg, m) = read_matrix(File::open(path)?)?;
    Fcm::new(cfg, m)
}

/// Column names of a real harmonic vector, with `dc` appended if requested.
pub fn real_column_names(cfg: HarmonicConfig, with_dc: bool) -> Vec<String> {
    let mut names = Vec::with_capacity(cfg.q());
    for ph in PHASES {
        for k in 0..=cfg.max_order() {
            names.push(format!("{ph}{k}_re"));
            names.push(format!("{ph}{k}_im"));
        }
    }
    if with_dc {
        names.push("dc".into());
    }
    names
}

/// Column names of a bus-ordered complex vector.
pub fn bus_column_names(layout: BusLayout) -> Vec<String> {
    let mut names = Vec::with_capacity(2 * layout.len());
    for k in 0..=layout.cfg.max_order() {
        for ph in PHASES {
            for n in 0..layout.nodes {
                names.push(format!("n{n}_{ph}{k}_re"));
                names.push(format!("n{n}_{ph}{k}_im"));
            }
        }
    }
    names
}

/// Samples as columns, with their timestamps and header metadata.
#[derive(Clone, Debug, PartialEq)]
pub struct MeasurementTable {
    pub cfg: HarmonicConfig,
    pub nodes: usize,
    pub timestamps: Vec<f64>,
    /// One column per sample.
    pub data: DMatrix<f64>,
    pub columns: Vec<String>,
}

pub fn write_measurements(w: impl Write, table: &MeasurementTable) -> Result<()> {
    if table.data.ncols() != table.timestamps.len() || table.data.nrows() != table.columns.len() {
        return Err(FcmError::DimensionMismatch {
            what: "measurement table",
            expected: table.data.ncols(),
            found: table.timestamps.len(),
        });
    }
    let mut w = BufWriter::new(w);
    writeln!(w, "# K={},N={},phases=abc", table.cfg.max_order(), table.nodes)?;
    let mut csv = csv::Writer::from_writer(w);
    csv.write_record(std::iter::once("t").chain(table.columns.iter().map(String::as_str)))?;
    for (j, t) in table.timestamps.iter().enumerate() {
        let col = table.data.column(j);
        let row = std::iter::once(format!("{t}")).chain(col.iter().map(|v| format!("{v:e}")));
        csv.write_record(row)?;
    }
    csv.flush()?;
    Ok(())
}

pub fn read_measurements(r: impl Read) -> Result<MeasurementTable> {
    let mut r = BufReader::new(r);
    let head = next_line(&mut r)?;
    let meta = head
        .trim()
        .strip_prefix('#')
        .ok_or_else(|| FcmError::Parse("measurement file must start with `# K=..,N=..`".into()))?;
    let mut k = None;
    let mut nodes = None;
    for part in meta.split(',') {
        let part = part.trim();
        if part.starts_with("K=") {
            k = Some(parse_key(part, "K")?);
        } else if part.starts_with("N=") {
            nodes = Some(parse_key(part, "N")?);
        } else if let Some(order) = part.strip_prefix("phases=") {
            if order != "abc" {
                return Err(FcmError::Parse(format!("unsupported phase order `{order}`")));
            }
        }
    }
    let cfg = HarmonicConfig::new(k.ok_or_else(|| FcmError::Parse("missing K".into()))?);
    let nodes = nodes.unwrap_or(1);
    let mut csv = csv::Reader::from_reader(r);
    let header = csv.headers()?.clone();
    if header.get(0) != Some("t") {
        return Err(FcmError::Parse("first column must be `t`".into()));
    }
    let columns: Vec<String> = header.iter().skip(1).map(String::from).collect();
    let mut timestamps = Vec::new();
    let mut values = Vec::new();
    for rec in csv.records() {
        let rec = rec?;
        if rec.len() != columns.len() + 1 {
            return Err(FcmError::DimensionMismatch {
                what: "measurement row",
                expected: columns.len() + 1,
                found: rec.len(),
            });
        }
        timestamps.push(parse_f64(&rec[0])?);
        for f in rec.iter().skip(1) {
            values.push(parse_f64(f)?);
        }
    }
    let data = DMatrix::from_column_slice(columns.len(), timestamps.len(), &values);
    Ok(MeasurementTable {
        cfg,
        nodes,
        timestamps,
        data,
        columns,
    })
}

pub fn read_measurement_file(path: &Path) -> Result<MeasurementTable> {
    read_measurements(File::open(path)?)
}

pub fn write_measurement_file(path: &Path, table: &MeasurementTable) -> Result<()> {
    write_measurements(File::create(path)?, table)
}

/// Interleaves a complex `u x T` matrix into real `2u x T` (Re, Im per entry).
pub fn complex_to_interleaved(m: &DMatrix<Complex64>) -> DMatrix<f64> {
    DMatrix::from_fn(2 * m.nrows(), m.ncols(), |i, j| {
        let z = m[(i / 2, j)];
        if i % 2 == 0 {
            z.re
        } else {
            z.im
        }
    })
}

pub fn interleaved_to_complex(m: &DMatrix<f64>) -> Result<DMatrix<Complex64>> {
    if m.nrows() % 2 != 0 {
        return Err(FcmError::Parse("interleaved complex data needs an even row count".into()));
    }
    Ok(DMatrix::from_fn(m.nrows() / 2, m.ncols(), |i, j| {
        Complex64::new(m[(2 * i, j)], m[(2 * i + 1, j)])
    }))
}

/// Table of bus-ordered complex samples.
pub fn bus_table(layout: BusLayout, samples: &DMatrix<Complex64>) -> MeasurementTable {
    MeasurementTable {
        cfg: layout.cfg,
        nodes: layout.nodes,
        timestamps: (0..samples.ncols()).map(|t| t as f64).collect(),
        data: complex_to_interleaved(samples),
        columns: bus_column_names(layout),
    }
}

pub fn write_admittance(w: impl Write, y: &HarmonicAdmittance) -> Result<()> {
    let layout = y.layout();
    let mut w = BufWriter::new(w);
    writeln!(w, "K={}", layout.cfg.max_order())?;
    writeln!(w, "N={}", layout.nodes)?;
    let mut csv = csv::Writer::from_writer(w);
    csv.write_record(["k", "phase", "row", "col", "re", "im"])?;
    for (b, blk) in y.blocks().iter().enumerate() {
        let (k, ph) = layout.block_key(b);
        for c in 0..layout.nodes {
            for r in 0..layout.nodes {
                let z = blk[(r, c)];
                if z.re != 0.0 || z.im != 0.0 {
                    csv.write_record([
                        k.to_string(),
                        PHASES[ph].to_string(),
                        r.to_string(),
                        c.to_string(),
                        format!("{:e}", z.re),
                        format!("{:e}", z.im),
                    ])?;
                }
            }
        }
    }
    csv.flush()?;
    Ok(())
}

pub fn read_admittance(r: impl Read) -> Result<HarmonicAdmittance> {
    let mut r = BufReader::new(r);
    let k = parse_key(&next_line(&mut r)?, "K")?;
    let n = parse_key(&next_line(&mut r)?, "N")?;
    let layout = BusLayout::new(HarmonicConfig::new(k), n);
    let mut y = HarmonicAdmittance::zeros(layout);
    let mut csv = csv::Reader::from_reader(r);
    for rec in csv.records() {
        let rec = rec?;
        let idx = |i: usize| -> Result<usize> {
            rec.get(i)
                .and_then(|s| s.trim().parse().ok())
                .ok_or_else(|| FcmError::Parse(format!("bad admittance row {rec:?}")))
        };
        let kk = idx(0)?;
        let ph = rec
            .get(1)
            .and_then(|s| PHASES.iter().position(|c| s.trim() == c.to_string()))
            .ok_or_else(|| FcmError::Parse(format!("bad phase in {rec:?}")))?;
        let (row, col) = (idx(2)?, idx(3)?);
        if kk > k || row >= n || col >= n {
            return Err(FcmError::Parse(format!("admittance entry out of range: {rec:?}")));
        }
        y.block_mut(kk, ph)[(row, col)] = Complex64::new(parse_f64(&rec[4])?, parse_f64(&rec[5])?);
    }
    Ok(y)
}

/// Reads a length-`n` vector stored one value per line (or as a 1-column CSV).
pub fn read_vector(r: impl Read) -> Result<DVector<f64>> {
    let mut values = Vec::new();
    for line in BufReader::new(r).lines() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        values.push(parse_f64(t)?);
    }
    Ok(DVector::from_vec(values))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matrix_round_trip() {
        let cfg = HarmonicConfig::new(1);
        let m = DMatrix::from_fn(cfg.p(), cfg.q(), |i, j| (i as f64 - j as f64) / 7.0);
        let mut buf = Vec::new();
        write_matrix(&mut buf, cfg, &m).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("K=1\np=12\nq=13\n"));
        let (c2, m2) = read_matrix(&buf[..]).unwrap();
        assert_eq!(c2, cfg);
        assert_eq!(m, m2);
    }

    #[test]
    fn matrix_shape_checked() {
        let text = "K=0\np=6\nq=7\n1,2,3\n";
        assert!(read_matrix(text.as_bytes()).is_err());
    }

    #[test]
    fn measurement_round_trip() {
        let cfg = HarmonicConfig::new(1);
        let table = MeasurementTable {
            cfg,
            nodes: 1,
            timestamps: vec![0.0, 1.0, 2.0],
            data: DMatrix::from_fn(cfg.q(), 3, |i, j| i as f64 * 0.5 - j as f64),
            columns: real_column_names(cfg, true),
        };
        let mut buf = Vec::new();
        write_measurements(&mut buf, &table).unwrap();
        let back = read_measurements(&buf[..]).unwrap();
        assert_eq!(back, table);
        assert_eq!(back.columns[0], "a0_re");
        assert_eq!(back.columns.last().unwrap(), "dc");
    }

    #[test]
    fn admittance_round_trip() {
        let layout = BusLayout::new(HarmonicConfig::new(1), 2);
        let mut y = HarmonicAdmittance::zeros(layout);
        y.block_mut(1, 2)[(0, 1)] = Complex64::new(1.5, -2.0);
        y.block_mut(0, 0)[(1, 1)] = Complex64::new(0.25, 0.0);
        let mut buf = Vec::new();
        write_admittance(&mut buf, &y).unwrap();
        assert_eq!(read_admittance(&buf[..]).unwrap(), y);
    }

    #[test]
    fn interleave_round_trip() {
        let m = DMatrix::from_fn(3, 2, |i, j| Complex64::new(i as f64, j as f64 - 1.0));
        assert_eq!(interleaved_to_complex(&complex_to_interleaved(&m)).unwrap(), m);
    }
}
