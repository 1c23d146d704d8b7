//! Matrix exports for plotting scripts.

use std::fmt::Display;
use std::io::{Read, Write};

use ndarray::Array2;

use crate::error::{Result, TmmsbError};

/// Writes a matrix as headerless CSV, one row per line.
pub fn write_matrix_csv<T: Display, W: Write>(m: &Array2<T>, mut w: W) -> Result<()> {
    for row in m.rows() {
        let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        writeln!(w, "{}", line.join(","))?;
    }
    Ok(())
}

pub fn matrix_csv<T: Display>(m: &Array2<T>) -> String {
    let mut buf = Vec::new();
    write_matrix_csv(m, &mut buf).expect("writing to memory");
    String::from_utf8(buf).expect("utf-8")
}

/// Rows of a matrix as nested vectors, for JSON output.
pub fn matrix_rows<T: Clone>(m: &Array2<T>) -> Vec<Vec<T>> {
    m.rows().into_iter().map(|r| r.to_vec()).collect()
}

/// Reads a headerless numeric CSV written by [`write_matrix_csv`].
pub fn read_matrix_csv<R: Read>(reader: R) -> Result<Array2<f64>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .from_reader(reader);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| TmmsbError::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        let row = record
            .iter()
            .map(|f| {
                f.trim().parse::<f64>().map_err(|e| TmmsbError::Parse {
                    line: i + 1,
                    message: format!("`{f}`: {e}"),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        if rows.first().is_some_and(|r| r.len() != row.len()) {
            return Err(TmmsbError::Parse {
                line: i + 1,
                message: format!("expected {} columns, found {}", rows[0].len(), row.len()),
            });
        }
        rows.push(row);
    }
    let cols = rows.first().map_or(0, Vec::len);
    Array2::from_shape_vec((rows.len(), cols), rows.concat())
        .map_err(|e| TmmsbError::Dimension(e.to_string()))
}
