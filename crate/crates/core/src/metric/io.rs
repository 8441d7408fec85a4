//! Distance-matrix file formats.
//!
//! * text: first line `n`, then `n` rows of `n` numbers separated by commas
//!   and/or whitespace;
//! * binary: magic `DMAT1`, `n` as little-endian `u64`, then `n²`
//!   little-endian `f64` in row-major order;
//! * labels: one label per line.

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::FiniteMetricSpace;
use crate::error::{Error, Result};

pub const BINARY_MAGIC: &[u8; 5] = b"DMAT1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum MatrixFormat {
    #[default]
    Text,
    Binary,
}

impl MatrixFormat {
    /// `.dmat`/`.bin` files are binary, anything else text.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("dmat") | Some("bin") => MatrixFormat::Binary,
            _ => MatrixFormat::Text,
        }
    }
}

pub fn write_text<W: Write>(space: &FiniteMetricSpace, mut out: W) -> Result<()> {
    let n = space.len();
    writeln!(out, "{n}")?;
    let mut line = String::new();
    for i in 0..n {
        line.clear();
        for j in 0..n {
            if j > 0 {
                line.push(' ');
            }
            // `{:e}` prints the shortest digits that round-trip exactly.
            line.push_str(&format!("{:e}", space.dist(i, j)));
        }
        writeln!(out, "{line}")?;
    }
    Ok(())
}

pub fn read_text<R: Read>(input: R) -> Result<FiniteMetricSpace> {
    let mut lines = BufReader::new(input).lines().enumerate();
    let n = loop {
        let Some((idx, line)) = lines.next() else {
            return Err(Error::Parse {
                line: 1,
                message: "missing header".into(),
            });
        };
        let line = line?;
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        break t.parse::<usize>().map_err(|_| Error::Parse {
            line: idx + 1,
            message: format!("expected the point count, found {t:?}"),
        })?;
    };
    let mut table = Vec::with_capacity(n * n);
    let mut rows = 0;
    for (idx, line) in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        if rows == n {
            return Err(Error::Parse {
                line: idx + 1,
                message: format!("more than {n} rows"),
            });
        }
        let before = table.len();
        for tok in line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|t| !t.is_empty())
        {
            let v = tok.parse::<f64>().map_err(|_| Error::Parse {
                line: idx + 1,
                message: format!("not a number: {tok:?}"),
            })?;
            table.push(v);
        }
        if table.len() - before != n {
            return Err(Error::Parse {
                line: idx + 1,
                message: format!("row has {} entries, header says {n}", table.len() - before),
            });
        }
        rows += 1;
    }
    if rows != n {
        return Err(Error::Parse {
            line: 1,
            message: format!("header says {n} rows, found {rows}"),
        });
    }
    FiniteMetricSpace::from_table(n, &table)
}

pub fn write_binary<W: Write>(space: &FiniteMetricSpace, mut out: W) -> Result<()> {
    let n = space.len();
    out.write_all(BINARY_MAGIC)?;
    out.write_all(&(n as u64).to_le_bytes())?;
    let mut buf = Vec::with_capacity(8 * n);
    for i in 0..n {
        buf.clear();
        for j in 0..n {
            buf.extend_from_slice(&space.dist(i, j).to_le_bytes());
        }
        out.write_all(&buf)?;
    }
    Ok(())
}

pub fn read_binary<R: Read>(mut input: R) -> Result<FiniteMetricSpace> {
    let mut magic = [0u8; 5];
    input.read_exact(&mut magic).map_err(|_| Error::Binary {
        offset: 0,
        message: "truncated magic".into(),
    })?;
    if &magic != BINARY_MAGIC {
        return Err(Error::Binary {
            offset: 0,
            message: "bad magic, expected DMAT1".into(),
        });
    }
    let mut word = [0u8; 8];
    input.read_exact(&mut word).map_err(|_| Error::Binary {
        offset: 5,
        message: "truncated point count".into(),
    })?;
    let n = u64::from_le_bytes(word) as usize;
    let total = n.checked_mul(n).ok_or_else(|| Error::Binary {
        offset: 5,
        message: format!("point count {n} too large"),
    })?;
    let mut table = Vec::with_capacity(total);
    for k in 0..total {
        input.read_exact(&mut word).map_err(|_| Error::Binary {
            offset: 13 + 8 * k,
            message: format!("expected {total} entries, file ends after {k}"),
        })?;
        table.push(f64::from_le_bytes(word));
    }
    let mut rest = [0u8; 1];
    if input.read(&mut rest)? != 0 {
        return Err(Error::Binary {
            offset: 13 + 8 * total,
            message: "trailing bytes".into(),
        });
    }
    FiniteMetricSpace::from_table(n, &table)
}

pub fn save_space(space: &FiniteMetricSpace, path: &Path, format: MatrixFormat) -> Result<()> {
    let file = std::io::BufWriter::new(fs::File::create(path)?);
    match format {
        MatrixFormat::Text => write_text(space, file),
        MatrixFormat::Binary => write_binary(space, file),
    }
}

pub fn load_space(path: &Path, format: MatrixFormat) -> Result<FiniteMetricSpace> {
    let file = fs::File::open(path)?;
    match format {
        MatrixFormat::Text => read_text(file),
        MatrixFormat::Binary => read_binary(std::io::BufReader::new(file)),
    }
}

pub fn save_labels(labels: &[String], path: &Path) -> Result<()> {
    let mut out = std::io::BufWriter::new(fs::File::create(path)?);
    for l in labels {
        writeln!(out, "{l}")?;
    }
    Ok(())
}

/// Reads a label file and attaches it; the label count must equal the point count.
pub fn load_labels(space: FiniteMetricSpace, path: &Path) -> Result<FiniteMetricSpace> {
    let text = fs::read_to_string(path)?;
    let labels: Vec<String> = text.lines().map(str::to_owned).collect();
    space.with_labels(labels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators::circle;

    #[test]
    fn binary_round_trip_is_bit_exact() {
        let c = circle(17, 0.3).unwrap();
        let mut buf = Vec::new();
        write_binary(&c, &mut buf).unwrap();
        assert_eq!(&buf[..5], BINARY_MAGIC);
        assert_eq!(buf.len(), 5 + 8 + 8 * 17 * 17);
        let back = read_binary(&buf[..]).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn text_round_trip() {
        let c = circle(9, 1.7).unwrap();
        let mut buf = Vec::new();
        write_text(&c, &mut buf).unwrap();
        let back = read_text(&buf[..]).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn text_accepts_commas() {
        let s = read_text("2\n0, 1.5\n1.5,0\n".as_bytes()).unwrap();
        assert_eq!(s.dist(0, 1), 1.5);
    }

    #[test]
    fn header_mismatch_reports_line() {
        let err = read_text("3\n0 1\n1 0\n".as_bytes()).unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            e => panic!("unexpected {e}"),
        }
        let err = read_text("x\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
        let err = read_text("2\n0 1\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
    }

    #[test]
    fn truncated_binary() {
        let c = circle(4, 1.0).unwrap();
        let mut buf = Vec::new();
        write_binary(&c, &mut buf).unwrap();
        buf.truncate(buf.len() - 3);
        assert!(matches!(read_binary(&buf[..]), Err(Error::Binary { .. })));
        assert!(matches!(
            read_binary(&b"DMAT2"[..]),
            Err(Error::Binary { offset: 0, .. })
        ));
    }

    #[test]
    fn label_count_must_match() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("labels.txt");
        std::fs::write(&path, "a\nb\n").unwrap();
        let c = circle(3, 1.0).unwrap();
        let err = load_labels(c.clone(), &path).unwrap_err();
        assert!(matches!(
            err,
            Error::LabelCount {
                expected: 3,
                found: 2
            }
        ));
        std::fs::write(&path, "a\nb\nc\n").unwrap();
        let labelled = load_labels(c, &path).unwrap();
        assert_eq!(labelled.labels().unwrap()[2], "c");
    }
}
