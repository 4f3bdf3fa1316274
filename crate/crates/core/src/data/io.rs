//! IDX and headered-CSV ingestion.

use std::fs;
use std::io::Write;
use std::path::Path;

use super::Dataset;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Raw unsigned-byte IDX array.
#[derive(Debug, Clone, PartialEq)]
pub struct IdxArray {
    pub dims: Vec<usize>,
    pub values: Vec<u8>,
}

/// Reads an unsigned-byte IDX file: two zero bytes, type `0x08`, rank byte,
/// big-endian `u32` dimensions, then the payload.
pub fn read_idx(path: impl AsRef<Path>) -> Result<IdxArray> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let bad = |reason: String| Error::MalformedHeader {
        path: path.to_path_buf(),
        reason,
    };
    if bytes.len() < 4 {
        return Err(bad("shorter than the 4-byte magic".into()));
    }
    if bytes[0] != 0 || bytes[1] != 0 {
        return Err(bad(format!(
            "magic must start with two zero bytes, got {:02x}{:02x}",
            bytes[0], bytes[1]
        )));
    }
    if bytes[2] != 0x08 {
        return Err(bad(format!(
            "only unsigned-byte payloads (0x08) are supported, got 0x{:02x}",
            bytes[2]
        )));
    }
    let rank = bytes[3] as usize;
    if rank == 0 {
        return Err(bad("rank 0".into()));
    }
    let header = 4 + 4 * rank;
    if bytes.len() < header {
        return Err(bad(format!(
            "dimension block needs {header} bytes, file has {}",
            bytes.len()
        )));
    }
    let dims: Vec<usize> = bytes[4..header]
        .chunks_exact(4)
        .map(|c| u32::from_be_bytes(c.try_into().unwrap()) as usize)
        .collect();
    if dims.contains(&0) {
        return Err(bad(format!("zero dimension in {dims:?}")));
    }
    let expected: usize = dims.iter().product();
    let payload = &bytes[header..];
    if payload.len() < expected {
        return Err(Error::TruncatedPayload {
            path: path.to_path_buf(),
            expected,
            found: payload.len(),
        });
    }
    Ok(IdxArray {
        dims,
        values: payload[..expected].to_vec(),
    })
}

/// Pairs a rank-3 image file `(N, H, W)` with a rank-1 label file. Pixel
/// values are scaled to `[0, 1]`.
pub fn load_idx(
    images: impl AsRef<Path>,
    labels: impl AsRef<Path>,
    num_classes: usize,
) -> Result<Dataset> {
    let img = read_idx(images.as_ref())?;
    if img.dims.len() != 3 {
        return Err(Error::MalformedHeader {
            path: images.as_ref().to_path_buf(),
            reason: format!(
                "expected rank-3 images (magic 0x00000803), got rank {}",
                img.dims.len()
            ),
        });
    }
    let lab = read_idx(labels.as_ref())?;
    if lab.dims.len() != 1 || lab.dims[0] != img.dims[0] {
        return Err(Error::MalformedHeader {
            path: labels.as_ref().to_path_buf(),
            reason: format!(
                "expected {} rank-1 labels, got dims {:?}",
                img.dims[0], lab.dims
            ),
        });
    }
    if let Some((line, &l)) = lab
        .values
        .iter()
        .enumerate()
        .find(|(_, &l)| l as usize >= num_classes)
    {
        return Err(Error::InvalidRecord {
            path: labels.as_ref().to_path_buf(),
            line,
            reason: format!("label {l} out of range for {num_classes} classes"),
        });
    }
    let inputs = Tensor::new(
        img.dims.clone(),
        img.values.iter().map(|&v| v as f64 / 255.0).collect(),
    )?;
    let labels = Tensor::new(
        vec![lab.dims[0]],
        lab.values.iter().map(|&v| v as f64).collect(),
    )?;
    let name = images
        .as_ref()
        .file_stem()
        .map_or_else(|| "idx".to_string(), |s| s.to_string_lossy().into_owned());
    Dataset::new(name, inputs, labels, num_classes)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CsvSchema {
    pub num_classes: usize,
    /// Required feature count; `None` accepts whatever the header declares.
    pub num_features: Option<usize>,
}

/// Reads `label,f1,…,fk` rows after a header line of that form.
pub fn load_csv(path: impl AsRef<Path>, schema: CsvSchema) -> Result<Dataset> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| Error::MalformedHeader {
        path: path.to_path_buf(),
        reason: "empty file".into(),
    })?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    let k = cols.len().saturating_sub(1);
    let header_ok = cols.first() == Some(&"label")
        && k > 0
        && cols[1..]
            .iter()
            .enumerate()
            .all(|(i, c)| *c == format!("f{}", i + 1));
    if !header_ok {
        return Err(Error::MalformedHeader {
            path: path.to_path_buf(),
            reason: format!("expected `label,f1..fk`, got `{header}`"),
        });
    }
    if let Some(want) = schema.num_features {
        if want != k {
            return Err(Error::MalformedHeader {
                path: path.to_path_buf(),
                reason: format!("schema wants {want} features, header declares {k}"),
            });
        }
    }
    let mut features = Vec::new();
    let mut labels = Vec::new();
    for (i, line) in lines.enumerate() {
        let line_no = i + 2;
        if line.trim().is_empty() {
            continue;
        }
        let record = |reason: String| Error::InvalidRecord {
            path: path.to_path_buf(),
            line: line_no,
            reason,
        };
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != k + 1 {
            return Err(record(format!(
                "expected {} fields, got {}",
                k + 1,
                fields.len()
            )));
        }
        let label: usize = fields[0]
            .parse()
            .map_err(|_| record(format!("label `{}` is not a class index", fields[0])))?;
        if label >= schema.num_classes {
            return Err(record(format!(
                "label {label} out of range for {} classes",
                schema.num_classes
            )));
        }
        labels.push(label as f64);
        for f in &fields[1..] {
            let v: f64 = f
                .parse()
                .map_err(|_| record(format!("feature `{f}` is not a number")))?;
            if !v.is_finite() {
                return Err(record(format!("feature `{f}` is not finite")));
            }
            features.push(v);
        }
    }
    if labels.is_empty() {
        return Err(Error::InvalidRecord {
            path: path.to_path_buf(),
            line: 2,
            reason: "no records".into(),
        });
    }
    let n = labels.len();
    let name = path
        .file_stem()
        .map_or_else(|| "csv".to_string(), |s| s.to_string_lossy().into_owned());
    Dataset::new(
        name,
        Tensor::new(vec![n, k], features)?,
        Tensor::new(vec![n], labels)?,
        schema.num_classes,
    )
}

/// Writes a flat-feature dataset in the format [`load_csv`] reads. Values use
/// shortest round-trip formatting.
pub fn write_csv(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let k: usize = dataset.feature_shape().iter().product();
    let mut out = String::from("label");
    for j in 1..=k {
        out.push_str(&format!(",f{j}"));
    }
    out.push('\n');
    for (row, label) in dataset
        .inputs()
        .data()
        .chunks(k)
        .zip(dataset.labels().data())
    {
        out.push_str(&format!("{}", *label as usize));
        for v in row {
            out.push_str(&format!(",{v}"));
        }
        out.push('\n');
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
}
