//! Parameter loading and CSV emission.

use crate::CliError;
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::Path;
use synrecov_core::ModelParams;

/// Load and fully validate a parameter file. Unknown keys are rejected by
/// the schema; validation reports every violated invariant at once.
pub fn load_params(path: &Path) -> Result<ModelParams, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    let params: ModelParams = serde_json::from_str(&text)
        .map_err(|e| CliError::Config(format!("parse error in {}: {e}", path.display())))?;
    params
        .validate()
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    Ok(params)
}

/// One CSV cell. Floats are written in shortest round-trip form; undefined
/// values become empty fields.
pub enum Cell<'a> {
    F(f64),
    OptF(Option<f64>),
    U(u64),
    S(&'a str),
}

/// In-memory CSV assembly: header plus rows, LF line endings.
pub struct Csv {
    buf: String,
    columns: usize,
}

impl Csv {
    pub fn new(header: &[&str]) -> Csv {
        let mut buf = String::new();
        buf.push_str(&header.join(","));
        buf.push('\n');
        Csv {
            buf,
            columns: header.len(),
        }
    }

    pub fn row(&mut self, cells: &[Cell]) {
        assert_eq!(cells.len(), self.columns, "row width mismatch");
        for (i, cell) in cells.iter().enumerate() {
            if i > 0 {
                self.buf.push(',');
            }
            match cell {
                Cell::F(v) => {
                    let _ = write!(self.buf, "{v}");
                }
                Cell::OptF(Some(v)) => {
                    let _ = write!(self.buf, "{v}");
                }
                Cell::OptF(None) => {}
                Cell::U(v) => {
                    let _ = write!(self.buf, "{v}");
                }
                Cell::S(s) => self.buf.push_str(s),
            }
        }
        self.buf.push('\n');
    }

    pub fn into_string(self) -> String {
        self.buf
    }

    pub fn write_to(self, path: &Path) -> Result<(), CliError> {
        write_file(path, self.buf.as_bytes())
    }
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)
                .map_err(|e| CliError::Io(format!("cannot create {}: {e}", dir.display())))?;
        }
    }
    let mut f = fs::File::create(path)
        .map_err(|e| CliError::Io(format!("cannot create {}: {e}", path.display())))?;
    f.write_all(bytes)
        .map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))
}
