//! File formats: CHSH count tables and delimiter-separated data tables with
//! a one-line metadata header.

use std::fmt;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use thiserror::Error;

use crate::analysis::CountTable;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    File { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("{0}")]
    Format(String),
    #[error("row {row}, column {column}: {message}")]
    Cell { row: usize, column: usize, message: String },
}

fn open(path: &Path) -> Result<std::fs::File, IoError> {
    std::fs::File::open(path).map_err(|source| IoError::File { path: path.to_path_buf(), source })
}

/// Reads a 5 × 5 count table: a header row of photon-B angles, then four
/// rows of a photon-A angle followed by four counts. Lines starting with
/// `#` are ignored. Rows and columns in errors are 1-based grid positions.
pub fn read_count_table(path: &Path) -> Result<CountTable, IoError> {
    parse_count_table(open(path)?)
}

pub fn parse_count_table<R: Read>(input: R) -> Result<CountTable, IoError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(input);
    let grid: Vec<csv::StringRecord> = reader.records().collect::<Result<_, _>>()?;
    let Some((header, rows)) = grid.split_first() else {
        return Err(IoError::Format("count table is empty".into()));
    };
    if rows.is_empty() {
        return Err(IoError::Format("missing data rows".into()));
    }
    if rows.len() != 4 {
        return Err(IoError::Format(format!("expected 4 data rows, found {}", rows.len())));
    }
    for (r, rec) in grid.iter().enumerate() {
        if rec.len() != 5 {
            return Err(IoError::Format(format!("row {} has {} cells, expected 5", r + 1, rec.len())));
        }
    }
    let cell = |row: usize, column: usize, message: String| IoError::Cell { row: row + 1, column: column + 1, message };
    let angle = |row: usize, column: usize, text: &str| -> Result<f64, IoError> {
        if text.is_empty() {
            return Err(cell(row, column, "blank angle".into()));
        }
        let v = f64::from_str(text).map_err(|_| cell(row, column, format!("malformed angle {text:?}")))?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(cell(row, column, format!("non-finite angle {text:?}")))
        }
    };
    let mut col_angles = [0.0; 4];
    for (j, a) in col_angles.iter_mut().enumerate() {
        *a = angle(0, j + 1, &header[j + 1])?;
    }
    let mut row_angles = [0.0; 4];
    let mut counts = [[0u64; 4]; 4];
    for (i, rec) in rows.iter().enumerate() {
        row_angles[i] = angle(i + 1, 0, &rec[0])?;
        for j in 0..4 {
            let text = &rec[j + 1];
            if text.is_empty() {
                return Err(cell(i + 1, j + 1, "blank cell".into()));
            }
            counts[i][j] = match i64::from_str(text) {
                Ok(v) if v < 0 => return Err(cell(i + 1, j + 1, format!("negative count {v}"))),
                Ok(v) => v as u64,
                Err(_) => return Err(cell(i + 1, j + 1, format!("malformed count {text:?}"))),
            };
        }
    }
    let table = CountTable::new(row_angles, col_angles, counts);
    for (axis, angles) in [("row", &table.row_angles), ("column", &table.col_angles)] {
        for a in 0..4 {
            if angles[a + 1..].iter().any(|b| (angles[a] - b).abs() < 1e-6) {
                return Err(IoError::Format(format!("duplicate {axis} angle {}", angles[a])));
            }
        }
    }
    Ok(table)
}

pub fn write_count_table<W: Write>(table: &CountTable, out: W) -> Result<(), IoError> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["A\\B".to_string()];
    header.extend(table.col_angles.iter().map(f64::to_string));
    w.write_record(&header)?;
    for (a, row) in table.row_angles.iter().zip(&table.counts) {
        let mut rec = vec![a.to_string()];
        rec.extend(row.iter().map(u64::to_string));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Provenance line written as the first line of every output table.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Metadata {
    pub tool_version: String,
    pub seed: u64,
    pub config_hash: String,
}

impl Metadata {
    pub fn new(seed: u64, config_hash: impl Into<String>) -> Self {
        Self { tool_version: env!("CARGO_PKG_VERSION").to_string(), seed, config_hash: config_hash.into() }
    }

    pub fn parse(line: &str) -> Result<Self, IoError> {
        let bad = || IoError::Format(format!("malformed metadata line {line:?}"));
        let body = line.strip_prefix('#').ok_or_else(bad)?;
        let (mut version, mut seed, mut hash) = (None, None, None);
        for field in body.split_whitespace() {
            match field.split_once('=') {
                Some(("version", v)) => version = Some(v.to_string()),
                Some(("seed", v)) => seed = Some(v.parse().map_err(|_| bad())?),
                Some(("config_sha256", v)) => hash = Some(v.to_string()),
                _ => {}
            }
        }
        Ok(Self { tool_version: version.ok_or_else(bad)?, seed: seed.ok_or_else(bad)?, config_hash: hash.ok_or_else(bad)? })
    }
}

impl fmt::Display for Metadata {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "# qsvlab version={} seed={} config_sha256={}", self.tool_version, self.seed, self.config_hash)
    }
}

/// Numeric table. Values are written in shortest round-trip form, so a
/// written table parses back bit-for-bit (missing values are NaN).
#[derive(Clone, Debug, Default)]
pub struct DataTable {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl PartialEq for DataTable {
    fn eq(&self, other: &Self) -> bool {
        self.columns == other.columns
            && self.rows.len() == other.rows.len()
            && self.rows.iter().zip(&other.rows).all(|(a, b)| {
                a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
            })
    }
}

impl DataTable {
    pub fn new<S: Into<String>>(columns: impl IntoIterator<Item = S>) -> Self {
        Self { columns: columns.into_iter().map(Into::into).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<f64>) -> Result<(), IoError> {
        if row.len() != self.columns.len() {
            return Err(IoError::Format(format!("row has {} values, table has {} columns", row.len(), self.columns.len())));
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[j]).collect())
    }

    pub fn write<W: Write>(&self, mut out: W, metadata: Option<&Metadata>) -> Result<(), IoError> {
        if let Some(m) = metadata {
            writeln!(out, "{m}")?;
        }
        let mut w = csv::Writer::from_writer(out);
        w.write_record(&self.columns)?;
        for row in &self.rows {
            w.write_record(row.iter().map(|v| format_value(*v)))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_file(&self, path: &Path, metadata: Option<&Metadata>) -> Result<(), IoError> {
        let file = std::fs::File::create(path).map_err(|source| IoError::File { path: path.to_path_buf(), source })?;
        self.write(std::io::BufWriter::new(file), metadata)
    }

    /// Reads a table and its metadata line, if present.
    pub fn read<R: Read>(input: R) -> Result<(Option<Metadata>, Self), IoError> {
        let mut input = BufReader::new(input);
        let mut first = String::new();
        input.read_line(&mut first)?;
        let (metadata, rest): (Option<Metadata>, Box<dyn Read + '_>) = if first.starts_with('#') {
            (Some(Metadata::parse(first.trim_end())?), Box::new(input))
        } else {
            (None, Box::new(std::io::Cursor::new(first.into_bytes()).chain(input)))
        };
        let mut reader = csv::Reader::from_reader(rest);
        let columns: Vec<String> = reader.headers()?.iter().map(String::from).collect();
        let mut table = Self::new(columns);
        for (i, rec) in reader.records().enumerate() {
            let rec = rec?;
            let row = rec
                .iter()
                .enumerate()
                .map(|(j, v)| parse_value(v).ok_or_else(|| IoError::Cell { row: i + 1, column: j + 1, message: format!("malformed value {v:?}") }))
                .collect::<Result<Vec<_>, _>>()?;
            table.push(row)?;
        }
        Ok((metadata, table))
    }

    pub fn read_file(path: &Path) -> Result<(Option<Metadata>, Self), IoError> {
        Self::read(open(path)?)
    }
}

fn format_value(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        // Display prints the shortest string that parses back to the same bits
        v.to_string()
    }
}

fn parse_value(s: &str) -> Option<f64> {
    if s.is_empty() {
        Some(f64::NAN)
    } else {
        f64::from_str(s).ok()
    }
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;
    use crate::analysis::chsh_s;

    const FIXTURE: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/chsh_counts.csv");

    #[test]
    fn reads_bundled_fixture() {
        let t = read_count_table(Path::new(FIXTURE)).unwrap();
        assert_eq!(t.count(0.0, 22.5).unwrap(), 21164);
        assert_eq!(t.count(135.0, 157.5).unwrap(), 113688);
        assert!((chsh_s(&t).unwrap().s - 2.8088).abs() < 5e-4);
    }

    #[test]
    fn header_only_rejected() {
        let e = parse_count_table("A\\B,22.5,67.5,112.5,157.5\n".as_bytes()).unwrap_err();
        assert_eq!(e.to_string(), "missing data rows");
    }

    #[test]
    fn blank_cell_named() {
        let text = std::fs::read_to_string(FIXTURE).unwrap().replace("20071", "");
        let e = parse_count_table(text.as_bytes()).unwrap_err();
        assert!(matches!(e, IoError::Cell { row: 3, column: 4, .. }), "{e}");
        assert!(e.to_string().contains("blank cell"));
    }

    #[test]
    fn bad_cells_rejected() {
        let text = std::fs::read_to_string(FIXTURE).unwrap();
        let e = parse_count_table(text.replace("20071", "-5").as_bytes()).unwrap_err();
        assert!(e.to_string().contains("negative count"));
        let e = parse_count_table(text.replace("20071", "12x").as_bytes()).unwrap_err();
        assert!(matches!(e, IoError::Cell { row: 3, column: 4, .. }));
        let e = parse_count_table(text.replace("\n135,", "\n13q,").as_bytes()).unwrap_err();
        assert!(matches!(e, IoError::Cell { row: 5, column: 1, .. }));
        assert!(parse_count_table(text.replace(",113688", "").as_bytes()).is_err());
        assert!(parse_count_table(text.replace("\n135,", "\n45,").as_bytes()).is_err());
    }

    #[test]
    fn angles_normalized() {
        let text = std::fs::read_to_string(FIXTURE).unwrap().replace("\n0,", "\n180,").replace("\n135,", "\n-45,");
        let t = parse_count_table(text.as_bytes()).unwrap();
        assert_eq!(t.row_angles, [0.0, 45.0, 90.0, 135.0]);
    }

    #[test]
    fn count_table_round_trip() {
        let t = read_count_table(Path::new(FIXTURE)).unwrap();
        let mut buf = Vec::new();
        write_count_table(&t, &mut buf).unwrap();
        assert_eq!(parse_count_table(buf.as_slice()).unwrap(), t);
    }

    #[test]
    fn metadata_line() {
        let m = Metadata::new(42, "abc123");
        let line = m.to_string();
        assert!(line.starts_with("# qsvlab version="));
        assert_eq!(Metadata::parse(&line).unwrap(), m);
        assert!(Metadata::parse("# seed=1").is_err());
    }

    #[test]
    fn table_without_metadata() {
        let (m, t) = DataTable::read("n,eps\n10,0.5\n".as_bytes()).unwrap();
        assert!(m.is_none());
        assert_eq!(t.column("eps").unwrap(), vec![0.5]);
        assert!(DataTable::read("n,eps\n10,x\n".as_bytes()).is_err());
        assert!(DataTable::new(["a"]).push(vec![1.0, 2.0]).is_err());
    }

    proptest! {
        #[test]
        fn data_table_round_trip(
            rows in prop::collection::vec(prop::collection::vec(prop::num::f64::ANY, 3), 0..20),
            seed in any::<u64>(),
        ) {
            let mut t = DataTable::new(["a", "b", "c"]);
            for r in rows {
                t.push(r).unwrap();
            }
            let m = Metadata::new(seed, "00ff");
            let mut buf = Vec::new();
            t.write(&mut buf, Some(&m)).unwrap();
            let (m2, t2) = DataTable::read(buf.as_slice()).unwrap();
            prop_assert_eq!(m2, Some(m));
            // NaN payloads are not preserved; every NaN reads back as the canonical one
            let canon = |t: &DataTable| t.rows.iter().flatten().map(|v| if v.is_nan() { f64::NAN.to_bits() } else { v.to_bits() }).collect::<Vec<_>>();
            prop_assert_eq!(canon(&t), canon(&t2));
            prop_assert_eq!(t.columns, t2.columns);
        }
    }
}
