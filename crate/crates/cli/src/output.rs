//! File writers. All floats are printed with 17 significant digits so the
//! outputs round-trip losslessly; every file gets `#` header comments
//! carrying the schema tag.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use delaywave_core::field::GridField;

use crate::AppError;

pub const SCHEMA: &str = "delaywave-csv/1";

fn io_err(path: &Path, e: std::io::Error) -> AppError {
    AppError::Numerical(format!("cannot write {}: {e}", path.display()))
}

pub fn write_json(path: &Path, value: &serde_json::Value) -> Result<(), AppError> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| AppError::Numerical(format!("serialization: {e}")))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| io_err(path, e))
}

/// Long-format field dump: one `t,x,value` line per grid cell, time-major.
pub fn write_field_csv(path: &Path, field: &GridField) -> Result<(), AppError> {
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(file);
    let mut emit = || -> std::io::Result<()> {
        writeln!(w, "# {SCHEMA}")?;
        writeln!(w, "# quantity: {}", field.quantity.label())?;
        writeln!(w, "t,x,value")?;
        for (j, &t) in field.t_values.iter().enumerate() {
            for (i, &x) in field.x_values.iter().enumerate() {
                writeln!(w, "{t:.16e},{x:.16e},{:.16e}", field.values[j][i])?;
            }
        }
        w.flush()
    };
    emit().map_err(|e| io_err(path, e))
}

/// Kernel table: both fundamental solutions with first and one-sided second
/// derivatives on a uniform time grid.
pub struct KernelTable {
    pub t: Vec<f64>,
    /// Columns C, C', C''_left, C''_right, S, S', S''_left, S''_right.
    pub rows: Vec<[f64; 8]>,
}

pub fn write_kernel_csv(path: &Path, table: &KernelTable) -> Result<(), AppError> {
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(file);
    let mut emit = || -> std::io::Result<()> {
        writeln!(w, "# {SCHEMA}")?;
        writeln!(w, "# at t = 0 the left-limit columns repeat the right limit")?;
        writeln!(w, "t,C,C_d1,C_d2_left,C_d2_right,S,S_d1,S_d2_left,S_d2_right")?;
        for (t, row) in table.t.iter().zip(&table.rows) {
            write!(w, "{t:.16e}")?;
            for v in row {
                write!(w, ",{v:.16e}")?;
            }
            writeln!(w)?;
        }
        w.flush()
    };
    emit().map_err(|e| io_err(path, e))
}
