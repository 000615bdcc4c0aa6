//! Plain-CSV matrix input/output.
//!
//! Values are written in scientific notation with 17 significant digits,
//! which round-trips every finite f64 bit-exactly.

use std::io::{BufRead, Write};

use thiserror::Error;

use crate::frame::OrthonormalFrame;
use crate::matrix::DenseMatrix;

#[derive(Debug, Error)]
pub enum CsvError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: expected {expected} fields, got {got}")]
    RaggedRow {
        line: usize,
        expected: usize,
        got: usize,
    },
    #[error("no data rows found")]
    Empty,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Read a numeric CSV (one matrix row per line, comma-separated). With
/// `skip_header` the first line is discarded.
pub fn read_matrix_csv<R: BufRead>(reader: R, skip_header: bool) -> Result<DenseMatrix, CsvError> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width = None;
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        if idx == 0 && skip_header {
            continue;
        }
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let row: Result<Vec<f64>, CsvError> = trimmed
            .split(',')
            .map(|field| {
                field.trim().parse::<f64>().map_err(|e| CsvError::Parse {
                    line: line_no,
                    message: format!("`{}`: {e}", field.trim()),
                })
            })
            .collect();
        let row = row?;
        if let Some(w) = width {
            if row.len() != w {
                return Err(CsvError::RaggedRow {
                    line: line_no,
                    expected: w,
                    got: row.len(),
                });
            }
        } else {
            width = Some(row.len());
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(CsvError::Empty);
    }
    DenseMatrix::from_rows(rows).map_err(|e| CsvError::Parse {
        line: 0,
        message: e.to_string(),
    })
}

pub fn read_matrix_csv_path(
    path: &std::path::Path,
    skip_header: bool,
) -> Result<DenseMatrix, CsvError> {
    let file = std::fs::File::open(path)?;
    read_matrix_csv(std::io::BufReader::new(file), skip_header)
}

/// 17-significant-digit scientific form; parses back to the same bits.
pub fn format_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn write_matrix_csv<W: Write>(writer: &mut W, m: &DenseMatrix) -> Result<(), CsvError> {
    for i in 0..m.rows() {
        let mut first = true;
        for &x in m.row(i) {
            if !first {
                write!(writer, ",")?;
            }
            write!(writer, "{}", format_f64(x))?;
            first = false;
        }
        writeln!(writer)?;
    }
    Ok(())
}

pub fn write_frame_csv<W: Write>(writer: &mut W, q: &OrthonormalFrame) -> Result<(), CsvError> {
    write_matrix_csv(writer, &q.to_matrix())
}

/// One value per line.
pub fn write_vector_csv<W: Write>(writer: &mut W, v: &[f64]) -> Result<(), CsvError> {
    for &x in v {
        writeln!(writer, "{}", format_f64(x))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    use crate::rng::StreamKey;

    #[test]
    fn round_trip_is_bit_exact() {
        let mut rng = StreamKey::new(1).rng();
        let mut data: Vec<f64> = (0..60)
            .map(|_| {
                let exp: i32 = rng.gen_range(-300..300);
                let mantissa: f64 = rng.gen_range(-1.0..1.0);
                mantissa * 10f64.powi(exp)
            })
            .collect();
        data[0] = 0.0;
        data[1] = -0.0;
        data[2] = f64::MIN_POSITIVE;
        data[3] = f64::MAX;
        let m = DenseMatrix::from_vec(6, 10, data).unwrap();
        let mut buf = Vec::new();
        write_matrix_csv(&mut buf, &m).unwrap();
        let back = read_matrix_csv(std::io::Cursor::new(&buf), false).unwrap();
        assert_eq!(m.rows(), back.rows());
        for (a, b) in m.as_slice().iter().zip(back.as_slice()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let text = "1.0,2.0\n3.0,oops\n";
        let err = read_matrix_csv(std::io::Cursor::new(text), false).unwrap_err();
        assert!(matches!(err, CsvError::Parse { line: 2, .. }));

        let ragged = "1.0,2.0\n3.0\n";
        let err = read_matrix_csv(std::io::Cursor::new(ragged), false).unwrap_err();
        assert!(matches!(
            err,
            CsvError::RaggedRow {
                line: 2,
                expected: 2,
                got: 1
            }
        ));
    }

    #[test]
    fn header_can_be_skipped() {
        let text = "a,b\n1.0,2.0\n";
        assert!(read_matrix_csv(std::io::Cursor::new(text), false).is_err());
        let m = read_matrix_csv(std::io::Cursor::new(text), true).unwrap();
        assert_eq!((m.rows(), m.cols()), (1, 2));
    }
}
