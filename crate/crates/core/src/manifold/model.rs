//! Binary container for fitted manifold models.
//!
//! Layout (little endian): magic `M3DMODEL`, `u32` version, `u32` entry
//! count, then entries of `name (u32 length + UTF-8)`, `kind u8`
//! (0 = matrix, 1 = text) and payload. Matrices store `u64 rows, u64 cols`
//! followed by row-major `f64`. Text stores `u32 length + UTF-8`.

use std::collections::BTreeMap;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use faer::Mat;

use super::{GeodesicKernel, ManifoldModel, PcaModel, Reducer, TcaModel};
use crate::error::{Error, Result};
use crate::learner::kernel::Kernel;
use crate::linalg::Matrix;

const MAGIC: &[u8; 8] = b"M3DMODEL";
const VERSION: u32 = 1;

enum Entry {
    Matrix(Matrix),
    Text(String),
}

fn vector(v: &[f64]) -> Matrix {
    Mat::from_fn(1, v.len(), |_, j| v[j])
}

fn entries(model: &ManifoldModel, config_echo: &str) -> Vec<(&'static str, Entry)> {
    let mut out = vec![("config", Entry::Text(config_echo.to_string()))];
    match &model.reducer {
        Reducer::Tca(t) => {
            let kernel = serde_json::to_string(&t.kernel()).expect("kernel serializes");
            out.push(("reducer", Entry::Text("tca".into())));
            out.push(("tca.kernel", Entry::Text(kernel)));
            out.push(("tca.training", Entry::Matrix(t.training_features().to_owned())));
            out.push(("tca.projection", Entry::Matrix(t.projection().to_owned())));
            out.push(("tca.eigenvalues", Entry::Matrix(vector(t.eigenvalues()))));
        }
        Reducer::Pca(p) => {
            out.push(("reducer", Entry::Text("pca".into())));
            out.push(("pca.mean", Entry::Matrix(vector(p.mean()))));
            out.push(("pca.components", Entry::Matrix(p.components().to_owned())));
        }
    }
    let k = &model.kernel;
    out.push(("gfk.source_basis", Entry::Matrix(k.source_basis.clone())));
    out.push(("gfk.target_basis", Entry::Matrix(k.target_basis.clone())));
    out.push(("gfk.complement", Entry::Matrix(k.complement.clone())));
    out.push(("gfk.theta", Entry::Matrix(vector(&k.principal_angles))));
    out.push(("gfk.g", Entry::Matrix(k.g.clone())));
    out.push(("gfk.g_sqrt", Entry::Matrix(k.g_sqrt.clone())));
    out
}

fn put_str(buf: &mut Vec<u8>, s: &str) {
    buf.extend_from_slice(&(s.len() as u32).to_le_bytes());
    buf.extend_from_slice(s.as_bytes());
}

pub fn save_model(model: &ManifoldModel, config_echo: &str, path: &Path) -> Result<()> {
    let list = entries(model, config_echo);
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(list.len() as u32).to_le_bytes());
    for (name, entry) in &list {
        put_str(&mut buf, name);
        match entry {
            Entry::Text(t) => {
                buf.push(1);
                put_str(&mut buf, t);
            }
            Entry::Matrix(m) => {
                buf.push(0);
                buf.extend_from_slice(&(m.nrows() as u64).to_le_bytes());
                buf.extend_from_slice(&(m.ncols() as u64).to_le_bytes());
                for i in 0..m.nrows() {
                    for j in 0..m.ncols() {
                        buf.extend_from_slice(&m[(i, j)].to_le_bytes());
                    }
                }
            }
        }
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&buf).map_err(|e| Error::io(path, e))
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl Cursor<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::InvalidData(format!("{}: truncated model file", self.path.display())));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec())
            .map_err(|_| Error::InvalidData(format!("{}: invalid UTF-8 in model file", self.path.display())))
    }
}

/// Returns the model and its embedded config echo.
pub fn load_model(path: &Path) -> Result<(ManifoldModel, String)> {
    let mut bytes = Vec::new();
    fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    let mut c = Cursor { bytes: &bytes, pos: 0, path };
    if c.take(8)? != MAGIC {
        return Err(Error::InvalidData(format!("{}: not a model file", path.display())));
    }
    let version = c.u32()?;
    if version != VERSION {
        return Err(Error::InvalidData(format!(
            "{}: unsupported model version {version}",
            path.display()
        )));
    }
    let count = c.u32()?;
    let mut mats = BTreeMap::new();
    let mut texts = BTreeMap::new();
    for _ in 0..count {
        let name = c.string()?;
        match c.take(1)?[0] {
            0 => {
                let rows = c.u64()? as usize;
                let cols = c.u64()? as usize;
                let data = c.take(rows * cols * 8)?;
                let m = Mat::from_fn(rows, cols, |i, j| {
                    let o = (i * cols + j) * 8;
                    f64::from_le_bytes(data[o..o + 8].try_into().expect("8 bytes"))
                });
                mats.insert(name, m);
            }
            1 => {
                let t = c.string()?;
                texts.insert(name, t);
            }
            k => return Err(Error::InvalidData(format!("{}: unknown entry kind {k}", path.display()))),
        }
    }
    let missing = |name: &str| Error::InvalidData(format!("{}: model lacks entry `{name}`", path.display()));
    let mut mat = |name: &str| mats.remove(name).ok_or_else(|| missing(name));
    let row = |m: Matrix| (0..m.ncols()).map(|j| m[(0, j)]).collect::<Vec<f64>>();
    let reducer = match texts.get("reducer").map(String::as_str) {
        Some("tca") => {
            let kernel: Kernel = serde_json::from_str(texts.get("tca.kernel").ok_or_else(|| missing("tca.kernel"))?)
                .map_err(|e| Error::InvalidData(format!("{}: bad kernel entry: {e}", path.display())))?;
            Reducer::Tca(TcaModel::from_parts(
                kernel,
                mat("tca.training")?,
                mat("tca.projection")?,
                row(mat("tca.eigenvalues")?),
            ))
        }
        Some("pca") => Reducer::Pca(PcaModel::from_parts(row(mat("pca.mean")?), mat("pca.components")?)),
        _ => return Err(missing("reducer")),
    };
    let kernel = GeodesicKernel {
        source_basis: mat("gfk.source_basis")?,
        target_basis: mat("gfk.target_basis")?,
        complement: mat("gfk.complement")?,
        principal_angles: row(mat("gfk.theta")?),
        g: mat("gfk.g")?,
        g_sqrt: mat("gfk.g_sqrt")?,
    };
    let config = texts.remove("config").unwrap_or_default();
    Ok((ManifoldModel { reducer, kernel }, config))
}
