//! Plain-text persistence.
//!
//! `MAT1`: a header line `MAT1 <rows> <cols>` followed by one line per row of
//! space-separated numbers, each printed in the shortest form that parses
//! back to the same 64-bit value. Loading is bit-exact, negative zero
//! included; non-finite values are refused on save.
//!
//! `BVEC1`: a header line `BVEC1 <len>` followed by one line of `0`/`1`
//! characters, bit 0 first.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DMatrix;

use crate::binding::BinaryVector;
use crate::error::{Error, FormatError, Result};

pub fn matrix_to_string(m: &DMatrix<f64>) -> Result<String> {
    let mut out = format!("MAT1 {} {}\n", m.nrows(), m.ncols());
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            let v = m[(r, c)];
            if !v.is_finite() {
                return Err(FormatError::NonFinite { row: r, col: c }.into());
            }
            if c > 0 {
                out.push(' ');
            }
            // `{:?}` is the shortest round-trip rendering and keeps the sign of -0
            let _ = write!(out, "{v:?}");
        }
        out.push('\n');
    }
    Ok(out)
}

fn header(line: Option<&str>, magic: &str, fields: usize) -> Result<Vec<usize>> {
    let line = line.ok_or_else(|| FormatError::MalformedHeader("empty input".into()))?;
    let mut parts = line.split(' ');
    if parts.next() != Some(magic) {
        return Err(FormatError::MalformedHeader(format!("expected {magic:?}, got {line:?}")).into());
    }
    let dims: Vec<usize> = parts
        .map(|t| t.parse())
        .collect::<Result<_, _>>()
        .map_err(|_| FormatError::MalformedHeader(format!("bad size in {line:?}")))?;
    if dims.len() != fields {
        return Err(FormatError::MalformedHeader(format!("expected {fields} sizes in {line:?}")).into());
    }
    Ok(dims)
}

pub fn matrix_from_str(text: &str) -> Result<DMatrix<f64>> {
    let mut lines = text.split_terminator('\n');
    let dims = header(lines.next(), "MAT1", 2)?;
    let (rows, cols) = (dims[0], dims[1]);
    let expected = rows
        .checked_mul(cols)
        .ok_or_else(|| FormatError::MalformedHeader("size overflows".into()))?;
    let mut values = Vec::with_capacity(expected.min(1 << 24));
    let mut row_count = 0;
    for (k, line) in lines.enumerate() {
        row_count += 1;
        let before = values.len();
        for token in line.split(' ').filter(|t| !t.is_empty()) {
            let v: f64 = token.parse().map_err(|_| FormatError::BadToken {
                token: token.to_string(),
                line: k + 2,
            })?;
            if !v.is_finite() {
                return Err(FormatError::BadToken {
                    token: token.to_string(),
                    line: k + 2,
                }
                .into());
            }
            values.push(v);
        }
        if values.len() - before != cols {
            return Err(FormatError::CountMismatch {
                expected: cols,
                found: values.len() - before,
            }
            .into());
        }
    }
    if row_count != rows || values.len() != expected {
        return Err(FormatError::CountMismatch {
            expected,
            found: values.len(),
        }
        .into());
    }
    Ok(DMatrix::from_row_slice(rows, cols, &values))
}

pub fn save_matrix(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    let text = matrix_to_string(m)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn load_matrix(path: &Path) -> Result<DMatrix<f64>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    matrix_from_str(&text)
}

pub fn bits_to_string(v: &BinaryVector) -> String {
    format!("BVEC1 {}\n{v}\n", v.len())
}

pub fn bits_from_str(text: &str) -> Result<BinaryVector> {
    let mut lines = text.split_terminator('\n');
    let len = header(lines.next(), "BVEC1", 1)?[0];
    let body = lines.next().unwrap_or("");
    if let Some(extra) = lines.next() {
        return Err(FormatError::BadToken {
            token: extra.to_string(),
            line: 3,
        }
        .into());
    }
    let bits: Vec<bool> = body
        .chars()
        .map(|c| match c {
            '0' => Ok(false),
            '1' => Ok(true),
            other => Err(FormatError::BadToken {
                token: other.to_string(),
                line: 2,
            }),
        })
        .collect::<Result<_, _>>()?;
    if bits.len() != len {
        return Err(FormatError::CountMismatch {
            expected: len,
            found: bits.len(),
        }
        .into());
    }
    Ok(BinaryVector::from_bits(&bits))
}

pub fn save_bits(path: &Path, v: &BinaryVector) -> Result<()> {
    std::fs::write(path, bits_to_string(v)).map_err(|e| Error::io(path, e))
}

pub fn load_bits(path: &Path) -> Result<BinaryVector> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    bits_from_str(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_value_layout() {
        let m = DMatrix::from_element(1, 1, 0.1);
        assert_eq!(matrix_to_string(&m).unwrap(), "MAT1 1 1\n0.1\n");
    }

    #[test]
    fn negative_zero_survives() {
        let m = DMatrix::from_row_slice(1, 2, &[-0.0, 0.0]);
        let back = matrix_from_str(&matrix_to_string(&m).unwrap()).unwrap();
        assert!(back[(0, 0)].is_sign_negative() && back[(0, 1)].is_sign_positive());
    }

    #[test]
    fn rejects_ragged_rows() {
        let err = matrix_from_str("MAT1 2 2\n1 2\n3\n").unwrap_err();
        assert!(matches!(err, Error::Format(FormatError::CountMismatch { .. })));
    }

    #[test]
    fn bits_round_trip() {
        let v = BinaryVector::parse("10110").unwrap();
        assert_eq!(bits_to_string(&v), "BVEC1 5\n10110\n");
        assert_eq!(bits_from_str(&bits_to_string(&v)).unwrap(), v);
    }
}
