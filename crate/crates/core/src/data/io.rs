//! CSV and binary dataset formats.
//!
//! CSV: header row mandatory, columns `f0,...,f{D-1},label,subject,session`.
//! `label` of -1 marks an unlabeled sample. `subject` and `session` may be
//! omitted, in which case they default to 0. Feature column names are kept as
//! feature names when they differ from the positional `f{i}` default.
//!
//! Binary: `M3DFEAT\0`, u32 version, u64 samples, u64 features, u64 classes,
//! row-major f64 features, then i64 labels, subjects and sessions, then an
//! optional name table (u64 count, each name as u32 length + UTF-8). All
//! integers and floats little-endian.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use faer::Mat;

use super::FeatureDataset;
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"M3DFEAT\0";
const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FileFormat {
    Csv,
    Binary,
}

impl FileFormat {
    /// `.csv` is CSV; everything else is the binary format.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("csv") => FileFormat::Csv,
            _ => FileFormat::Binary,
        }
    }
}

pub fn load_dataset(path: &Path, format: FileFormat) -> Result<FeatureDataset> {
    match format {
        FileFormat::Csv => load_csv(path),
        FileFormat::Binary => load_binary(path),
    }
}

pub fn save_dataset(dataset: &FeatureDataset, path: &Path, format: FileFormat) -> Result<()> {
    match format {
        FileFormat::Csv => save_csv(dataset, path, None),
        FileFormat::Binary => save_binary(dataset, path),
    }
}

/// CSV output starts with a `# ...` comment line carrying `echo`, which the
/// loader skips. The binary format has no room for it and ignores `echo`.
pub fn save_dataset_with_echo(dataset: &FeatureDataset, path: &Path, format: FileFormat, echo: &str) -> Result<()> {
    match format {
        FileFormat::Csv => save_csv(dataset, path, Some(echo)),
        FileFormat::Binary => save_binary(dataset, path),
    }
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn load_csv(path: &Path) -> Result<FeatureDataset> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(BufReader::new(file));
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| parse_err(path, 1, format!("malformed header: {e}")))?
        .iter()
        .map(str::to_owned)
        .collect();

    let label_col = header
        .iter()
        .position(|h| h == "label")
        .ok_or_else(|| parse_err(path, 1, "header has no `label` column"))?;
    let trailing = &header[label_col..];
    let (has_subject, has_session) = match trailing.iter().map(String::as_str).collect::<Vec<_>>()[..] {
        ["label"] => (false, false),
        ["label", "subject"] => (true, false),
        ["label", "subject", "session"] => (true, true),
        _ => {
            return Err(parse_err(
                path,
                1,
                format!("expected trailing columns label[,subject[,session]], found {trailing:?}"),
            ))
        }
    };
    let num_features = label_col;
    if num_features == 0 {
        return Err(parse_err(path, 1, "header has no feature columns"));
    }

    let mut values = Vec::new();
    let mut labels = Vec::new();
    let mut subjects = Vec::new();
    let mut sessions = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let line = row + 2;
        let record = record.map_err(|e| parse_err(path, line, e.to_string()))?;
        if record.len() != header.len() {
            return Err(parse_err(
                path,
                line,
                format!("expected {} columns, found {}", header.len(), record.len()),
            ));
        }
        for (col, field) in record.iter().take(num_features).enumerate() {
            let v: f64 = field
                .parse()
                .map_err(|_| parse_err(path, line, format!("column {} (`{}`): not a number: {field:?}", col, header[col])))?;
            if !v.is_finite() {
                return Err(parse_err(
                    path,
                    line,
                    format!("column {} (`{}`): non-finite value {field}", col, header[col]),
                ));
            }
            values.push(v);
        }
        let int_at = |col: usize| -> Result<i64> {
            record[col]
                .parse::<i64>()
                .map_err(|_| parse_err(path, line, format!("column `{}`: not an integer: {:?}", header[col], &record[col])))
        };
        let label = int_at(label_col)?;
        labels.push(match label {
            -1 => None,
            l if l >= 0 => Some(l as usize),
            l => return Err(parse_err(path, line, format!("label {l} is negative (use -1 for unlabeled)"))),
        });
        subjects.push(if has_subject { int_at(label_col + 1)? } else { 0 });
        sessions.push(if has_session { int_at(label_col + 2)? } else { 0 });
    }
    let n = labels.len();
    if n == 0 {
        return Err(parse_err(path, 2, "no data rows"));
    }
    let features = Mat::from_fn(n, num_features, |i, j| values[i * num_features + j]);
    let class_count = labels.iter().flatten().max().map_or(2, |&m| (m + 1).max(2));
    let ds = FeatureDataset::new(features, labels, subjects, sessions, class_count)?;
    let positional = header[..num_features]
        .iter()
        .enumerate()
        .all(|(i, h)| *h == format!("f{i}"));
    if positional {
        Ok(ds)
    } else {
        ds.with_feature_names(header[..num_features].to_vec())
    }
}

fn save_csv(dataset: &FeatureDataset, path: &Path, echo: Option<&str>) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    if let Some(echo) = echo {
        writeln!(out, "{}{echo}", crate::export::ECHO_PREFIX).map_err(|e| Error::io(path, e))?;
    }
    let mut w = csv::Writer::from_writer(out);
    let to_err = |e: csv::Error| Error::InvalidData(format!("{}: {e}", path.display()));
    let d = dataset.num_features();
    let mut header: Vec<String> = match dataset.feature_names() {
        Some(names) => names.to_vec(),
        None => (0..d).map(|i| format!("f{i}")).collect(),
    };
    header.extend(["label", "subject", "session"].map(String::from));
    w.write_record(&header).map_err(to_err)?;
    let x = dataset.features();
    for i in 0..dataset.num_samples() {
        let mut rec: Vec<String> = (0..d).map(|j| format!("{}", x[(i, j)])).collect();
        rec.push(dataset.labels()[i].map_or(-1, |l| l as i64).to_string());
        rec.push(dataset.subjects()[i].to_string());
        rec.push(dataset.sessions()[i].to_string());
        w.write_record(&rec).map_err(to_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn save_binary(dataset: &FeatureDataset, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    w.write_all(MAGIC).map_err(io)?;
    w.write_all(&VERSION.to_le_bytes()).map_err(io)?;
    for v in [dataset.num_samples(), dataset.num_features(), dataset.class_count()] {
        w.write_all(&(v as u64).to_le_bytes()).map_err(io)?;
    }
    let x = dataset.features();
    for i in 0..dataset.num_samples() {
        for j in 0..dataset.num_features() {
            w.write_all(&x[(i, j)].to_le_bytes()).map_err(io)?;
        }
    }
    for l in dataset.labels() {
        w.write_all(&l.map_or(-1i64, |l| l as i64).to_le_bytes()).map_err(io)?;
    }
    for &s in dataset.subjects().iter().chain(dataset.sessions()) {
        w.write_all(&s.to_le_bytes()).map_err(io)?;
    }
    let names = dataset.feature_names().unwrap_or(&[]);
    w.write_all(&(names.len() as u64).to_le_bytes()).map_err(io)?;
    for name in names {
        w.write_all(&(name.len() as u32).to_le_bytes()).map_err(io)?;
        w.write_all(name.as_bytes()).map_err(io)?;
    }
    w.flush().map_err(io)
}

struct ByteCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl ByteCursor<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            Error::InvalidData(format!("{}: truncated at byte {}", self.path.display(), self.pos))
        })?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn i64(&mut self) -> Result<i64> {
        Ok(i64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

fn load_binary(path: &Path) -> Result<FeatureDataset> {
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    let mut c = ByteCursor { bytes: &bytes, pos: 0, path };
    if c.take(8)? != MAGIC {
        return Err(Error::InvalidData(format!("{}: not an m3d feature file (bad magic)", path.display())));
    }
    let version = c.u32()?;
    if version != VERSION {
        return Err(Error::InvalidData(format!("{}: unsupported format version {version}", path.display())));
    }
    let n = c.u64()? as usize;
    let d = c.u64()? as usize;
    let classes = c.u64()? as usize;
    let expected = n.checked_mul(d).and_then(|nd| nd.checked_mul(8));
    if expected.map_or(true, |e| e > bytes.len()) {
        return Err(Error::InvalidData(format!(
            "{}: header claims {n}x{d} features, file too short",
            path.display()
        )));
    }
    let mut values = Vec::with_capacity(n * d);
    for _ in 0..n * d {
        values.push(c.f64()?);
    }
    let features = Mat::from_fn(n, d, |i, j| values[i * d + j]);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        labels.push(match c.i64()? {
            -1 => None,
            l if l >= 0 => Some(l as usize),
            l => return Err(Error::InvalidData(format!("{}: negative label {l}", path.display()))),
        });
    }
    let mut subjects = Vec::with_capacity(n);
    for _ in 0..n {
        subjects.push(c.i64()?);
    }
    let mut sessions = Vec::with_capacity(n);
    for _ in 0..n {
        sessions.push(c.i64()?);
    }
    let name_count = c.u64()? as usize;
    let mut names = Vec::with_capacity(name_count.min(d));
    for _ in 0..name_count {
        let len = c.u32()? as usize;
        let raw = c.take(len)?;
        names.push(
            String::from_utf8(raw.to_vec())
                .map_err(|_| Error::InvalidData(format!("{}: feature name is not UTF-8", path.display())))?,
        );
    }
    let ds = FeatureDataset::new(features, labels, subjects, sessions, classes)?;
    if names.is_empty() {
        Ok(ds)
    } else {
        ds.with_feature_names(names)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;

    fn tmp(name: &str) -> std::path::PathBuf {
        let dir = std::env::temp_dir().join(format!("m3d-io-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        dir.join(name)
    }

    #[test]
    fn csv_four_by_three() {
        let p = tmp("four.csv");
        fs::write(
            &p,
            "f0,f1,f2,label\n1,2,3,0\n4,5,6,1\n7,8,9,-1\n0.5,0.25,1e-3,1\n",
        )
        .unwrap();
        let d = load_dataset(&p, FileFormat::Csv).unwrap();
        assert_eq!(d.num_samples(), 4);
        assert_eq!(d.num_features(), 3);
        assert_eq!(d.labels()[2], None);
        assert_eq!(d.features()[(3, 2)], 1e-3);
        assert_eq!(d.subjects(), &[0, 0, 0, 0]);
    }

    #[test]
    fn csv_nan_names_row_and_column() {
        let p = tmp("nan.csv");
        fs::write(&p, "f0,f1,label,subject,session\n1,2,0,1,1\n3,NaN,1,1,1\n").unwrap();
        let err = load_dataset(&p, FileFormat::Csv).unwrap_err().to_string();
        assert!(err.contains("line 3"), "{err}");
        assert!(err.contains("column 1"), "{err}");
    }

    #[test]
    fn csv_ragged_row_is_rejected() {
        let p = tmp("ragged.csv");
        fs::write(&p, "f0,f1,label\n1,2,0\n3,1\n").unwrap();
        assert!(load_dataset(&p, FileFormat::Csv).is_err());
    }

    #[test]
    fn csv_missing_label_header() {
        let p = tmp("nolabel.csv");
        fs::write(&p, "f0,f1\n1,2\n").unwrap();
        let err = load_dataset(&p, FileFormat::Csv).unwrap_err().to_string();
        assert!(err.contains("label"));
    }

    #[test]
    fn binary_rejects_bad_magic() {
        let p = tmp("bad.bin");
        fs::write(&p, b"NOTMAGIC0000").unwrap();
        assert!(load_dataset(&p, FileFormat::Binary).is_err());
    }

    #[test]
    fn named_features_survive_both_formats() {
        let x = Mat::from_fn(2, 2, |i, j| (i as f64) - 0.1 * j as f64);
        let d = FeatureDataset::new(x, vec![Some(1), None], vec![3, 4], vec![1, 2], 2)
            .unwrap()
            .with_feature_names(vec!["Fp1_delta".into(), "Fp1_theta".into()])
            .unwrap();
        for (name, fmt) in [("named.csv", FileFormat::Csv), ("named.bin", FileFormat::Binary)] {
            let p = tmp(name);
            save_dataset(&d, &p, fmt).unwrap();
            let back = load_dataset(&p, fmt).unwrap();
            assert_eq!(back, d);
        }
    }
}
