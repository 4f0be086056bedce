//! `DKB1` back-end model container.
//!
//! ```text
//! magic    4 bytes  "DKB1"
//! count    u32 LE   number of records
//! record   u16 LE name length, UTF-8 name,
//!          u32 LE rows, u32 LE cols, rows x cols f64 LE (row-major)
//! ```
//!
//! Every parameter is stored at full f64 precision, so a round trip is
//! exact.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::backend::{BackendModel, GpldaModel, ProjectionSet};
use crate::embedding::ExtractorKind;
use crate::error::{Error, Result};

pub const MODEL_MAGIC: &[u8; 4] = b"DKB1";

const EXTRACTORS: [ExtractorKind; 4] = [
    ExtractorKind::StatPool,
    ExtractorKind::MeanPool,
    ExtractorKind::ExternalFile,
    ExtractorKind::TestLinear,
];

/// Named matrices in write order.
pub fn encode_records(records: &[(&str, DMatrix<f64>)]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(MODEL_MAGIC);
    out.extend_from_slice(&u32::try_from(records.len()).map_err(|_| Error::Format("too many records".into()))?.to_le_bytes());
    for (name, m) in records {
        let len = u16::try_from(name.len()).map_err(|_| Error::Format(format!("record name too long: {name}")))?;
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::Format(format!("record `{name}` has non-finite values")));
        }
        out.extend_from_slice(&len.to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        let (r, c) = m.shape();
        for dim in [r, c] {
            let d = u32::try_from(dim).map_err(|_| Error::Format("record too large".into()))?;
            out.extend_from_slice(&d.to_le_bytes());
        }
        for i in 0..r {
            for j in 0..c {
                out.extend_from_slice(&m[(i, j)].to_le_bytes());
            }
        }
    }
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            Error::Format(format!("truncated model file while reading {what} at byte {}", self.pos))
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }
}

pub fn decode_records(bytes: &[u8]) -> Result<BTreeMap<String, DMatrix<f64>>> {
    let mut rd = Reader { bytes, pos: 0 };
    if rd.take(4, "magic")? != MODEL_MAGIC {
        return Err(Error::Format("bad magic: not a DKB1 model file".into()));
    }
    let count = rd.u32("record count")?;
    let mut out = BTreeMap::new();
    for _ in 0..count {
        let len = rd.u16("record name length")? as usize;
        let name = std::str::from_utf8(rd.take(len, "record name")?)
            .map_err(|_| Error::Format("record name is not UTF-8".into()))?
            .to_string();
        let r = rd.u32("rows")? as usize;
        let c = rd.u32("cols")? as usize;
        let n = r.checked_mul(c).and_then(|n| n.checked_mul(8)).ok_or_else(|| Error::Format("record size overflow".into()))?;
        let payload = rd.take(n, &name)?;
        let vals: Vec<f64> = payload.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().unwrap())).collect();
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(Error::Format(format!("record `{name}` has non-finite values")));
        }
        if out.insert(name.clone(), DMatrix::from_row_slice(r, c, &vals)).is_some() {
            return Err(Error::Format(format!("duplicate record `{name}`")));
        }
    }
    if rd.pos != bytes.len() {
        return Err(Error::Format(format!("{} trailing bytes after last record", bytes.len() - rd.pos)));
    }
    Ok(out)
}

fn column(v: &DVector<f64>) -> DMatrix<f64> {
    DMatrix::from_column_slice(v.len(), 1, v.as_slice())
}

fn scalar(v: f64) -> DMatrix<f64> {
    DMatrix::from_element(1, 1, v)
}

pub fn encode_model(m: &BackendModel) -> Result<Vec<u8>> {
    let p = &m.projection;
    let mut recs: Vec<(&str, DMatrix<f64>)> = vec![("mean", column(&p.mean))];
    if let Some(l) = &p.lda {
        recs.push(("lda", l.clone()));
    }
    if let Some(w) = &p.wccn {
        recs.push(("wccn", w.clone()));
    }
    if let Some(w) = &p.whitener {
        recs.push(("whitener", w.clone()));
    }
    recs.push(("length_norm", scalar(if p.apply_length_norm { 1.0 } else { 0.0 })));
    if let Some(g) = &m.gplda {
        recs.push(("gplda.sigma_w", g.sigma_w.clone()));
        recs.push(("gplda.sigma_b", g.sigma_b.clone()));
        recs.push(("gplda.mu", column(&g.mu)));
    }
    recs.push(("window_len", scalar(m.window_len as f64)));
    let code = EXTRACTORS.iter().position(|&k| k == m.extractor).expect("listed");
    recs.push(("extractor", scalar(code as f64)));
    encode_records(&recs)
}

pub fn decode_model(bytes: &[u8]) -> Result<BackendModel> {
    let mut recs = decode_records(bytes)?;
    let mut need = |name: &str| recs.remove(name).ok_or_else(|| Error::Format(format!("missing record `{name}`")));
    let as_vec = |m: DMatrix<f64>, name: &str| -> Result<DVector<f64>> {
        if m.ncols() != 1 {
            return Err(Error::Format(format!("record `{name}` must be a column")));
        }
        Ok(m.column(0).into_owned())
    };
    let as_scalar = |m: DMatrix<f64>, name: &str| -> Result<f64> {
        if m.shape() != (1, 1) {
            return Err(Error::Format(format!("record `{name}` must be a scalar")));
        }
        Ok(m[(0, 0)])
    };
    let mean = as_vec(need("mean")?, "mean")?;
    let length_norm = as_scalar(need("length_norm")?, "length_norm")? != 0.0;
    let window_len = as_scalar(need("window_len")?, "window_len")?;
    let code = as_scalar(need("extractor")?, "extractor")?;
    let extractor = *EXTRACTORS
        .get(code as usize)
        .filter(|_| code.fract() == 0.0 && code >= 0.0)
        .ok_or_else(|| Error::Format(format!("unknown extractor code {code}")))?;
    if !(window_len >= 1.0 && window_len.fract() == 0.0) {
        return Err(Error::Format(format!("invalid window length {window_len}")));
    }
    let lda = recs.remove("lda");
    let wccn = recs.remove("wccn");
    let whitener = recs.remove("whitener");
    let gplda = match (recs.remove("gplda.sigma_w"), recs.remove("gplda.sigma_b"), recs.remove("gplda.mu")) {
        (Some(w), Some(b), Some(mu)) => Some(GpldaModel {
            sigma_w: w,
            sigma_b: b,
            mu: as_vec(mu, "gplda.mu")?,
        }),
        (None, None, None) => None,
        _ => return Err(Error::Format("incomplete GPLDA records".into())),
    };
    if let Some(extra) = recs.keys().next() {
        return Err(Error::Format(format!("unknown record `{extra}`")));
    }
    let projection = ProjectionSet {
        mean,
        lda,
        wccn,
        whitener,
        apply_length_norm: length_norm,
    };
    check_shapes(&projection, gplda.as_ref())?;
    Ok(BackendModel {
        projection,
        gplda,
        window_len: window_len as usize,
        extractor,
    })
}

fn check_shapes(p: &ProjectionSet, g: Option<&GpldaModel>) -> Result<()> {
    let mut dim = p.mean.len();
    for (name, m) in [("lda", &p.lda), ("wccn", &p.wccn), ("whitener", &p.whitener)] {
        if let Some(m) = m {
            if m.ncols() != dim {
                return Err(Error::Format(format!(
                    "record `{name}` expects input dimension {}, chain provides {dim}",
                    m.ncols()
                )));
            }
            dim = m.nrows();
        }
    }
    if let Some(g) = g {
        if g.sigma_w.shape() != (dim, dim) || g.sigma_b.shape() != (dim, dim) || g.mu.len() != dim {
            return Err(Error::Format(format!("GPLDA records do not match projected dimension {dim}")));
        }
    }
    Ok(())
}

pub fn write_model(path: impl AsRef<Path>, m: &BackendModel) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_model(m).map_err(|e| e.in_file(path))?;
    fs::write(path, bytes).map_err(|e| Error::from(e).in_file(path))
}

pub fn read_model(path: impl AsRef<Path>) -> Result<BackendModel> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::from(e).in_file(path))?;
    decode_model(&bytes).map_err(|e| e.in_file(path))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model() -> BackendModel {
        BackendModel {
            projection: ProjectionSet {
                mean: DVector::from_row_slice(&[0.1, -0.2, 0.3]),
                lda: Some(DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, -1.0, 0.5, 1e-17])),
                wccn: None,
                whitener: Some(DMatrix::from_row_slice(2, 2, &[2.0, 0.1, 0.1, 3.0])),
                apply_length_norm: true,
            },
            gplda: Some(GpldaModel {
                sigma_w: DMatrix::identity(2, 2),
                sigma_b: DMatrix::from_row_slice(2, 2, &[0.5, 0.1, 0.1, std::f64::consts::PI]),
                mu: DVector::from_row_slice(&[1.0 / 3.0, 0.0]),
            }),
            window_len: 200,
            extractor: ExtractorKind::StatPool,
        }
    }

    #[test]
    fn exact_round_trip() {
        let m = model();
        let bytes = encode_model(&m).unwrap();
        assert_eq!(&bytes[..4], b"DKB1");
        assert_eq!(decode_model(&bytes).unwrap(), m);
    }

    #[test]
    fn rejects_corruption() {
        let bytes = encode_model(&model()).unwrap();
        assert!(decode_model(&bytes[..bytes.len() - 1]).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(decode_model(&extra).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(decode_model(&bad).is_err());
    }

    #[test]
    fn rejects_shape_mismatch() {
        let mut m = model();
        m.projection.whitener = Some(DMatrix::identity(3, 3));
        assert!(decode_model(&encode_model(&m).unwrap()).is_err());
    }
}
