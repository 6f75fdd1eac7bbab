//! Binary model container.
//!
//! Layout: 8-byte magic, `u32` format version, `u32` header length, a JSON
//! header, then each array as `u64 rows`, `u64 cols` and `rows * cols`
//! row-major `f64` values. All integers and floats are little-endian.

use std::fs;
use std::path::Path;

use faer::{Mat, MatRef};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{EaseModel, SvdAeModel};

pub const MAGIC: &[u8; 8] = b"SVDAEMDL";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub enum PersistedModel {
    SvdAe(SvdAeModel),
    Ease(EaseModel),
}

impl PersistedModel {
    pub fn kind(&self) -> &'static str {
        match self {
            PersistedModel::SvdAe(_) => "svd-ae",
            PersistedModel::Ease(_) => "ease",
        }
    }
}

#[derive(Serialize, Deserialize)]
struct Header {
    kind: String,
    num_users: Option<usize>,
    num_items: usize,
    rank: Option<usize>,
    gamma: Option<f64>,
    lambda: Option<f64>,
    seed: Option<u64>,
    arrays: Vec<String>,
}

fn put_array(buf: &mut Vec<u8>, m: MatRef<'_, f64>) {
    buf.extend_from_slice(&(m.nrows() as u64).to_le_bytes());
    buf.extend_from_slice(&(m.ncols() as u64).to_le_bytes());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            buf.extend_from_slice(&m[(i, j)].to_le_bytes());
        }
    }
}

pub fn encode_model(model: &PersistedModel) -> Vec<u8> {
    let (header, arrays): (Header, Vec<MatRef<'_, f64>>) = match model {
        PersistedModel::SvdAe(m) => (
            Header {
                kind: model.kind().into(),
                num_users: Some(m.user_factors().nrows()),
                num_items: m.item_projection().ncols(),
                rank: Some(m.rank()),
                gamma: m.gamma(),
                lambda: None,
                seed: m.seed(),
                arrays: vec!["user_factors".into(), "item_projection".into(), "sigma".into()],
            },
            vec![m.user_factors(), m.item_projection(), MatRef::from_row_major_slice(m.sigma(), 1, m.rank())],
        ),
        PersistedModel::Ease(m) => (
            Header {
                kind: model.kind().into(),
                num_users: None,
                num_items: m.num_items(),
                rank: None,
                gamma: None,
                lambda: Some(m.lambda()),
                seed: None,
                arrays: vec!["item_weights".into()],
            },
            vec![m.item_weights()],
        ),
    };
    let header = serde_json::to_vec(&header).expect("header serializes");
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(header.len() as u32).to_le_bytes());
    buf.extend_from_slice(&header);
    for a in arrays {
        put_array(&mut buf, a);
    }
    buf
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            Error::CorruptModel(format!("truncated while reading {what} at byte {}", self.pos))
        })?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn array(&mut self, name: &str) -> Result<Mat<f64>> {
        let rows = self.u64(name)? as usize;
        let cols = self.u64(name)? as usize;
        let len = rows
            .checked_mul(cols)
            .and_then(|n| n.checked_mul(8))
            .ok_or_else(|| Error::CorruptModel(format!("{name}: shape {rows}x{cols} overflows")))?;
        let raw = self.take(len, name)?;
        Ok(Mat::from_fn(rows, cols, |i, j| {
            let k = 8 * (i * cols + j);
            f64::from_le_bytes(raw[k..k + 8].try_into().unwrap())
        }))
    }
}

pub fn decode_model(bytes: &[u8]) -> Result<PersistedModel> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8, "magic")? != MAGIC {
        return Err(Error::CorruptModel("not a model file (bad magic)".into()));
    }
    let version = r.u32("version")?;
    if version != FORMAT_VERSION {
        return Err(Error::UnsupportedVersion { found: version, supported: FORMAT_VERSION });
    }
    let header_len = r.u32("header length")? as usize;
    let header: Header = serde_json::from_slice(r.take(header_len, "header")?)
        .map_err(|e| Error::CorruptModel(format!("header: {e}")))?;
    let model = match header.kind.as_str() {
        "svd-ae" => {
            let user_factors = r.array("user_factors")?;
            let item_projection = r.array("item_projection")?;
            let sigma = r.array("sigma")?;
            if sigma.nrows() != 1 {
                return Err(Error::CorruptModel("sigma must be a single row".into()));
            }
            let sigma: Vec<f64> = (0..sigma.ncols()).map(|j| sigma[(0, j)]).collect();
            let model = SvdAeModel::from_parts(user_factors, item_projection, sigma)
                .map_err(|e| Error::CorruptModel(e.to_string()))?
                .with_gamma(header.gamma)
                .with_seed(header.seed);
            if Some(model.rank()) != header.rank || model.item_projection().ncols() != header.num_items {
                return Err(Error::CorruptModel("array shapes disagree with header".into()));
            }
            PersistedModel::SvdAe(model)
        }
        "ease" => {
            let weights = r.array("item_weights")?;
            let lambda = header.lambda.ok_or_else(|| Error::CorruptModel("EASE header lacks lambda".into()))?;
            if weights.nrows() != header.num_items {
                return Err(Error::CorruptModel("array shapes disagree with header".into()));
            }
            PersistedModel::Ease(EaseModel::from_parts(weights, lambda).map_err(|e| Error::CorruptModel(e.to_string()))?)
        }
        other => return Err(Error::CorruptModel(format!("unknown model kind {other:?}"))),
    };
    if r.pos != bytes.len() {
        return Err(Error::CorruptModel(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    Ok(model)
}

pub fn save_model(path: impl AsRef<Path>, model: &PersistedModel) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_model(model)).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<PersistedModel> {
    let path = path.as_ref();
    decode_model(&fs::read(path).map_err(|e| Error::io(path, e))?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_svd() -> SvdAeModel {
        let uf = Mat::from_fn(3, 2, |i, j| (i as f64 + 1.0) / (j as f64 + 3.0));
        let ip = Mat::from_fn(2, 4, |i, j| (i * 4 + j) as f64 * 0.1 - 0.3);
        SvdAeModel::from_parts(uf, ip, vec![1.0, 0.5]).unwrap().with_gamma(Some(0.04)).with_seed(Some(7))
    }

    #[test]
    fn bad_magic_and_future_version() {
        let mut bytes = encode_model(&PersistedModel::SvdAe(small_svd()));
        bytes[8..12].copy_from_slice(&(FORMAT_VERSION + 1).to_le_bytes());
        let err = decode_model(&bytes).unwrap_err();
        assert!(err.to_string().contains(&(FORMAT_VERSION + 1).to_string()));
        bytes[0] = b'X';
        assert!(matches!(decode_model(&bytes), Err(Error::CorruptModel(_))));
    }

    #[test]
    fn trailing_bytes_rejected() {
        let mut bytes = encode_model(&PersistedModel::SvdAe(small_svd()));
        bytes.push(0);
        assert!(matches!(decode_model(&bytes), Err(Error::CorruptModel(_))));
    }
}
