use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use num_complex::Complex64 as C64;

use crate::error::CliError;

/// Magic bytes opening every field dump.
pub const FIELD_MAGIC: &[u8; 8] = b"LSCFLD01";

pub struct OutputDir {
    pub root: PathBuf,
}

impl OutputDir {
    pub fn create(root: &Path) -> Result<Self, CliError> {
        let tables = root.join("tables");
        fs::create_dir_all(&tables).map_err(|e| CliError::io(tables.display(), e))?;
        Ok(Self { root: root.to_path_buf() })
    }

    pub fn table_path(&self, name: &str) -> PathBuf {
        self.root.join("tables").join(format!("{name}.csv"))
    }

    pub fn write_bytes(&self, path: &Path, bytes: &[u8]) -> Result<(), CliError> {
        fs::write(path, bytes).map_err(|e| CliError::io(path.display(), e))
    }

    pub fn write_table(&self, name: &str, table: &Table) -> Result<PathBuf, CliError> {
        let path = self.table_path(name);
        self.write_bytes(&path, table.render().as_bytes())?;
        Ok(path)
    }

    /// Header: magic, then four little-endian u64 dims (n1, n2, n_depth, 3), then the n_depth
    /// depth coordinates as f64. Body: (re, im) f64 pairs in (x1, x2, depth, component) order.
    pub fn write_field(&self, cell: [i32; 2], dims: [usize; 4], depths: &[f64], values: &[C64]) -> Result<PathBuf, CliError> {
        let path = self.root.join(format!("fields_cell_{}_{}.bin", cell[0], cell[1]));
        let file = fs::File::create(&path).map_err(|e| CliError::io(path.display(), e))?;
        let mut w = BufWriter::new(file);
        let io = |e| CliError::io(path.display(), e);
        w.write_all(FIELD_MAGIC).map_err(io)?;
        for d in dims {
            w.write_all(&(d as u64).to_le_bytes()).map_err(io)?;
        }
        for z in depths {
            w.write_all(&z.to_le_bytes()).map_err(io)?;
        }
        for v in values {
            w.write_all(&v.re.to_le_bytes()).map_err(io)?;
            w.write_all(&v.im.to_le_bytes()).map_err(io)?;
        }
        w.flush().map_err(io)?;
        Ok(path)
    }
}

/// CSV table with a fixed column order; floats use the shortest round-trip form.
pub struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

pub enum Cell {
    Float(f64),
    Int(i64),
    Text(String),
    Missing,
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Float(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<i32> for Cell {
    fn from(v: i32) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

impl From<Option<f64>> for Cell {
    fn from(v: Option<f64>) -> Self {
        v.map_or(Cell::Missing, Cell::Float)
    }
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Self { header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.header.len(), "row width mismatch");
        let row = row
            .into_iter()
            .map(|c| match c {
                Cell::Float(v) => format!("{v:e}"),
                Cell::Int(v) => v.to_string(),
                Cell::Text(s) => s,
                Cell::Missing => String::new(),
            })
            .collect();
        self.rows.push(row);
    }

    pub fn render(&self) -> String {
        let mut out = self.header.join(",");
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }
}
