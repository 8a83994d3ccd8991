//! Versioned CSV tables.
//!
//! Every file starts with `# amsqueeze-csv v1 kind=<kind>`, followed by a
//! header row and data rows. Readers reject other versions.

use std::io::{Read, Write};

use thiserror::Error;

pub const CSV_VERSION: u32 = 1;
const MAGIC: &str = "# amsqueeze-csv";

#[derive(Debug, Error)]
pub enum TableError {
    #[error("missing `{MAGIC} v{CSV_VERSION} kind=...` header line")]
    MissingHeader,
    #[error("unsupported CSV schema version `{0}` (expected v{CSV_VERSION})")]
    UnsupportedVersion(String),
    #[error("expected a `{expected}` table, found `{found}`")]
    WrongKind { expected: String, found: String },
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("row {row}, column `{column}`: cannot parse `{value}`")]
    Parse {
        row: usize,
        column: String,
        value: String,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl TableError {
    /// Whether the reader of our output went away (e.g. `| head`).
    pub fn is_broken_pipe(&self) -> bool {
        let io = match self {
            Self::Io(e) => Some(e),
            Self::Csv(e) => match e.kind() {
                csv::ErrorKind::Io(e) => Some(e),
                _ => None,
            },
            _ => None,
        };
        io.is_some_and(|e| e.kind() == std::io::ErrorKind::BrokenPipe)
    }
}

/// Shortest round-trip text, in exponent form for very small or large values.
pub fn format_f64(x: f64) -> String {
    let a = x.abs();
    if a == 0.0 || (1e-4..1e15).contains(&a) || !x.is_finite() {
        x.to_string()
    } else {
        format!("{x:e}")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub kind: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(kind: &str, columns: &[&str]) -> Self {
        Self {
            kind: kind.to_string(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    /// Appends a row of numbers using shortest round-trip formatting.
    pub fn push_f64(&mut self, row: &[f64]) {
        self.push(row.iter().map(|&x| format_f64(x)).collect());
    }

    pub fn expect_kind(&self, kind: &str) -> Result<(), TableError> {
        if self.kind != kind {
            return Err(TableError::WrongKind {
                expected: kind.into(),
                found: self.kind.clone(),
            });
        }
        Ok(())
    }

    pub fn column_index(&self, name: &str) -> Result<usize, TableError> {
        self.columns
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| TableError::MissingColumn(name.into()))
    }

    pub fn f64_column(&self, name: &str) -> Result<Vec<f64>, TableError> {
        let idx = self.column_index(name)?;
        self.rows
            .iter()
            .enumerate()
            .map(|(row, r)| {
                r[idx].trim().parse().map_err(|_| TableError::Parse {
                    row: row + 1,
                    column: name.into(),
                    value: r[idx].clone(),
                })
            })
            .collect()
    }

    pub fn write<W: Write>(&self, mut w: W) -> Result<(), TableError> {
        writeln!(w, "{MAGIC} v{CSV_VERSION} kind={}", self.kind)?;
        let mut out = csv::Writer::from_writer(w);
        out.write_record(&self.columns)?;
        for row in &self.rows {
            out.write_record(row)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write(&mut buf).expect("writing to memory");
        buf
    }

    pub fn read<R: Read>(mut r: R) -> Result<Self, TableError> {
        let mut text = String::new();
        r.read_to_string(&mut text)?;
        let (first, rest) = text.split_once('\n').unwrap_or((text.as_str(), ""));
        let tag = first
            .trim_end()
            .strip_prefix(MAGIC)
            .ok_or(TableError::MissingHeader)?;
        let mut parts = tag.split_whitespace();
        let version = parts.next().ok_or(TableError::MissingHeader)?;
        if version != format!("v{CSV_VERSION}") {
            return Err(TableError::UnsupportedVersion(version.into()));
        }
        let kind = parts
            .find_map(|p| p.strip_prefix("kind="))
            .ok_or(TableError::MissingHeader)?;
        let mut reader = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .from_reader(rest.as_bytes());
        let columns = reader.headers()?.iter().map(String::from).collect();
        let rows = reader
            .records()
            .map(|r| r.map(|rec| rec.iter().map(String::from).collect()))
            .collect::<Result<_, _>>()?;
        Ok(Self {
            kind: kind.into(),
            columns,
            rows,
        })
    }
}
