//! `DKM1` binary matrix container.
//!
//! ```text
//! magic    4 bytes  "DKM1"
//! rows     u32 LE
//! cols     u32 LE
//! times    u8       1 when a start-time column is present, else 0
//! [times]  rows x f64 LE
//! payload  rows x cols f32 LE, row-major
//! ```

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

pub const MATRIX_MAGIC: &[u8; 4] = b"DKM1";

#[derive(Debug, Clone, PartialEq)]
pub struct MatrixFile {
    pub data: DMatrix<f64>,
    pub times: Option<Vec<f64>>,
}

pub fn encode_matrix(file: &MatrixFile) -> Result<Vec<u8>> {
    let (rows, cols) = file.data.shape();
    let rows32 = u32::try_from(rows).map_err(|_| Error::Format("too many rows".into()))?;
    let cols32 = u32::try_from(cols).map_err(|_| Error::Format("too many columns".into()))?;
    let mut out = Vec::with_capacity(13 + rows * 8 + rows * cols * 4);
    out.extend_from_slice(MATRIX_MAGIC);
    out.extend_from_slice(&rows32.to_le_bytes());
    out.extend_from_slice(&cols32.to_le_bytes());
    match &file.times {
        Some(times) => {
            if times.len() != rows {
                return Err(Error::DimensionMismatch {
                    expected: rows,
                    found: times.len(),
                });
            }
            out.push(1);
            for t in times {
                if !t.is_finite() {
                    return Err(Error::Invalid(format!("non-finite time {t}")));
                }
                out.extend_from_slice(&t.to_le_bytes());
            }
        }
        None => out.push(0),
    }
    for r in 0..rows {
        for c in 0..cols {
            let v = file.data[(r, c)] as f32;
            if !v.is_finite() {
                return Err(Error::Invalid(format!(
                    "value {} at ({r}, {c}) is not finite as f32",
                    file.data[(r, c)]
                )));
            }
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode_matrix(bytes: &[u8]) -> Result<MatrixFile> {
    if bytes.len() < 13 {
        return Err(Error::Format(format!("truncated header: {} bytes", bytes.len())));
    }
    if &bytes[..4] != MATRIX_MAGIC {
        return Err(Error::Format(format!("bad magic {:?}", &bytes[..4])));
    }
    let rows = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let cols = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let has_times = match bytes[12] {
        0 => false,
        1 => true,
        f => return Err(Error::Format(format!("bad time flag {f}"))),
    };
    let expected = (if has_times { rows * 8 } else { 0 }) as u128 + rows as u128 * cols as u128 * 4;
    let body = &bytes[13..];
    if (body.len() as u128) < expected {
        return Err(Error::Format(format!(
            "truncated payload: header declares {rows}x{cols}, {} bytes present of {expected}",
            body.len()
        )));
    }
    if body.len() as u128 > expected {
        return Err(Error::Format(format!(
            "{} trailing bytes after payload",
            body.len() as u128 - expected
        )));
    }
    let mut off = 0;
    let times = if has_times {
        let t: Vec<f64> = body[..rows * 8]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        off = rows * 8;
        Some(t)
    } else {
        None
    };
    let values: Vec<f64> = body[off..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    Ok(MatrixFile {
        data: DMatrix::from_row_slice(rows, cols, &values),
        times,
    })
}

pub fn write_matrix(path: impl AsRef<Path>, file: &MatrixFile) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_matrix(file).map_err(|e| e.in_file(path))?;
    fs::write(path, bytes).map_err(|e| Error::from(e).in_file(path))
}

pub fn read_matrix(path: impl AsRef<Path>) -> Result<MatrixFile> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::from(e).in_file(path))?;
    decode_matrix(&bytes).map_err(|e| e.in_file(path))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn small_round_trip() {
        let f = MatrixFile {
            data: DMatrix::from_row_slice(2, 3, &[1.0, -2.5, 3.25, 0.0, 1e-3f32 as f64, 7.0]),
            times: None,
        };
        let bytes = encode_matrix(&f).unwrap();
        assert_eq!(bytes.len(), 13 + 24);
        assert_eq!(decode_matrix(&bytes).unwrap(), f);
        assert_eq!(encode_matrix(&decode_matrix(&bytes).unwrap()).unwrap(), bytes);
    }

    #[test]
    fn times_are_f64_exact() {
        let f = MatrixFile {
            data: DMatrix::zeros(2, 1),
            times: Some(vec![0.1, 0.30000000000000004]),
        };
        assert_eq!(decode_matrix(&encode_matrix(&f).unwrap()).unwrap().times, f.times);
    }

    #[test]
    fn truncation_and_trailing_bytes() {
        let f = MatrixFile {
            data: DMatrix::zeros(10, 2),
            times: None,
        };
        let bytes = encode_matrix(&f).unwrap();
        let short = &bytes[..bytes.len() - 8];
        assert!(matches!(decode_matrix(short), Err(Error::Format(m)) if m.contains("truncated")));
        let mut long = bytes.clone();
        long.push(0);
        assert!(matches!(decode_matrix(&long), Err(Error::Format(m)) if m.contains("trailing")));
    }

    #[test]
    fn bad_magic() {
        let mut bytes = encode_matrix(&MatrixFile {
            data: DMatrix::zeros(1, 1),
            times: None,
        })
        .unwrap();
        bytes[0] = b'X';
        assert!(decode_matrix(&bytes).is_err());
    }

    #[test]
    fn nan_rejected() {
        let f = MatrixFile {
            data: DMatrix::from_element(1, 1, f64::NAN),
            times: None,
        };
        assert!(encode_matrix(&f).is_err());
    }

    proptest! {
        #[test]
        fn arbitrary_bytes_never_panic(bytes in proptest::collection::vec(any::<u8>(), 0..64)) {
            let _ = decode_matrix(&bytes);
        }

        #[test]
        fn f32_values_round_trip_bitwise(
            rows in 0usize..6, cols in 0usize..6, seed in any::<u32>(), with_times in any::<bool>()
        ) {
            let data = DMatrix::from_fn(rows, cols, |r, c| {
                f32::from_bits(seed.wrapping_mul(2654435761).wrapping_add((r * 7 + c) as u32) & 0x7f7f_ffff) as f64
            });
            let times = with_times.then(|| (0..rows).map(|i| i as f64 * 0.01).collect());
            let f = MatrixFile { data, times };
            prop_assert_eq!(decode_matrix(&encode_matrix(&f).unwrap()).unwrap(), f);
        }
    }
}
