//! Binary file formats.
//!
//! `RKEB` holds a labelled embedding or feature set:
//!
//! ```text
//! "RKEB"  u32 version = 1  u32 N  u32 d  N·d × f32 (row-major)  N × u32 labels
//! ```
//!
//! `RKDP` holds an [`MlpSpec`] followed by its parameters:
//!
//! ```text
//! "RKDP"  u32 version = 1
//! u32 widths  widths × u32  u8 activation (0 = relu)  u8 l2-normalize
//! u8 has-classifier  u32 classes
//! per layer: weight (in × out) then bias (1 × out), f64 row-major
//! classifier weight and bias, if present
//! ```
//!
//! Every integer and real is little-endian. Embeddings are stored in 32-bit
//! precision and widened to `f64` on load; parameters round-trip bitwise.

use std::fs;
use std::path::Path;

use rkd_core::data::Dataset;
use rkd_core::model::{Activation, Dense, MlpSpec, Parameters};
use rkd_core::Matrix;

use crate::error::FormatError;

pub const EMBEDDING_MAGIC: &[u8; 4] = b"RKEB";
pub const PARAMS_MAGIC: &[u8; 4] = b"RKDP";
pub const VERSION: u32 = 1;

const EMBEDDING_HEADER: usize = 16;

pub fn encode_embeddings(data: &Dataset) -> Result<Vec<u8>, FormatError> {
    let (n, d) = data.features.shape();
    let n32 = u32::try_from(n).map_err(|_| FormatError::new(8, format!("{n} rows do not fit a u32")))?;
    let d32 = u32::try_from(d).map_err(|_| FormatError::new(12, format!("{d} columns do not fit a u32")))?;
    let mut out = Vec::with_capacity(EMBEDDING_HEADER + 4 * n * (d + 1));
    out.extend_from_slice(EMBEDDING_MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&n32.to_le_bytes());
    out.extend_from_slice(&d32.to_le_bytes());
    for &v in data.features.as_slice() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    for &l in &data.labels {
        out.extend_from_slice(&l.to_le_bytes());
    }
    Ok(out)
}

pub fn decode_embeddings(bytes: &[u8]) -> Result<Dataset, FormatError> {
    let mut r = Reader::new(bytes);
    r.magic(EMBEDDING_MAGIC)?;
    r.version()?;
    let n = r.u32()? as usize;
    let d = r.u32()? as usize;
    let expected = (n as u128) * (d as u128 + 1) * 4 + EMBEDDING_HEADER as u128;
    if expected != bytes.len() as u128 {
        return Err(FormatError::new(
            EMBEDDING_HEADER,
            format!("{n}×{d} embeddings need {expected} bytes, file has {}", bytes.len()),
        ));
    }
    let mut values = Vec::with_capacity(n * d);
    for _ in 0..n * d {
        values.push(f64::from(r.f32()?));
    }
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        labels.push(r.u32()?);
    }
    let features = Matrix::from_vec(n, d, values).map_err(|e| FormatError::new(EMBEDDING_HEADER, e.to_string()))?;
    Dataset::new(features, labels).map_err(|e| FormatError::new(EMBEDDING_HEADER, e.to_string()))
}

pub fn encode_params(spec: &MlpSpec, params: &Parameters) -> Result<Vec<u8>, FormatError> {
    params
        .check_spec(spec)
        .map_err(|e| FormatError::new(0, format!("parameters do not match their spec: {e}")))?;
    let mut out = Vec::new();
    out.extend_from_slice(PARAMS_MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(spec.layer_widths.len() as u32).to_le_bytes());
    for &w in &spec.layer_widths {
        out.extend_from_slice(&(w as u32).to_le_bytes());
    }
    out.push(match spec.activation {
        Activation::Relu => 0,
    });
    out.push(u8::from(spec.l2_normalize_output));
    out.push(u8::from(spec.classifier_classes.is_some()));
    out.extend_from_slice(&(spec.classifier_classes.unwrap_or(0) as u32).to_le_bytes());
    for t in params.tensors() {
        for &v in t.as_slice() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode_params(bytes: &[u8]) -> Result<(MlpSpec, Parameters), FormatError> {
    let mut r = Reader::new(bytes);
    r.magic(PARAMS_MAGIC)?;
    r.version()?;
    let at = r.pos;
    let count = r.u32()? as usize;
    if count < 2 || count > (bytes.len() - r.pos) / 4 {
        return Err(FormatError::new(at, format!("implausible layer-width count {count}")));
    }
    let mut widths = Vec::with_capacity(count);
    for _ in 0..count {
        let at = r.pos;
        let w = r.u32()? as usize;
        if w == 0 {
            return Err(FormatError::new(at, "layer width 0".into()));
        }
        widths.push(w);
    }
    let at = r.pos;
    let activation = match r.u8()? {
        0 => Activation::Relu,
        other => return Err(FormatError::new(at, format!("unknown activation code {other}"))),
    };
    let l2 = r.flag()?;
    let has_classifier = r.flag()?;
    let at = r.pos;
    let classes = r.u32()? as usize;
    if has_classifier && classes == 0 {
        return Err(FormatError::new(at, "classifier with 0 classes".into()));
    }
    let spec = MlpSpec {
        layer_widths: widths,
        activation,
        l2_normalize_output: l2,
        classifier_classes: has_classifier.then_some(classes),
    };

    let mut shapes: Vec<(usize, usize)> = spec.layer_widths.windows(2).flat_map(|w| [(w[0], w[1]), (1, w[1])]).collect();
    if let Some(c) = spec.classifier_classes {
        shapes.extend([(spec.embedding_dim(), c), (1, c)]);
    }
    let values: u128 = shapes.iter().map(|&(a, b)| a as u128 * b as u128).sum();
    let expected = r.pos as u128 + 8 * values;
    if expected != bytes.len() as u128 {
        return Err(FormatError::new(
            r.pos,
            format!("spec {:?} needs {expected} bytes, file has {}", spec.layer_widths, bytes.len()),
        ));
    }
    let mut tensors = Vec::with_capacity(shapes.len());
    for (rows, cols) in shapes {
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows * cols {
            data.push(r.f64()?);
        }
        tensors.push(Matrix::from_vec(rows, cols, data).expect("sized above"));
    }
    let mut it = tensors.into_iter();
    let mut dense = || Dense { weight: it.next().expect("counted"), bias: it.next().expect("counted") };
    let layers = (0..spec.layer_widths.len() - 1).map(|_| dense()).collect();
    let classifier = spec.classifier_classes.map(|_| dense());
    Ok((spec, Parameters { layers, classifier }))
}

pub fn write_embeddings(path: &Path, data: &Dataset) -> Result<(), crate::Error> {
    let bytes = encode_embeddings(data).map_err(|e| e.in_file(path))?;
    fs::write(path, bytes).map_err(|e| crate::Error::io(path, e))
}

pub fn read_embeddings(path: &Path) -> Result<Dataset, crate::Error> {
    let bytes = fs::read(path).map_err(|e| crate::Error::io(path, e))?;
    decode_embeddings(&bytes).map_err(|e| e.in_file(path))
}

pub fn save_params(path: &Path, spec: &MlpSpec, params: &Parameters) -> Result<(), crate::Error> {
    let bytes = encode_params(spec, params).map_err(|e| e.in_file(path))?;
    fs::write(path, bytes).map_err(|e| crate::Error::io(path, e))
}

pub fn load_params(path: &Path) -> Result<(MlpSpec, Parameters), crate::Error> {
    let bytes = fs::read(path).map_err(|e| crate::Error::io(path, e))?;
    decode_params(&bytes).map_err(|e| e.in_file(path))
}

/// Loads parameters and insists that the stored spec equals `expected`.
pub fn load_params_for(path: &Path, expected: &MlpSpec) -> Result<Parameters, crate::Error> {
    let (spec, params) = load_params(path)?;
    if &spec != expected {
        return Err(FormatError::new(8, format!("file holds spec {spec:?}, expected {expected:?}")).in_file(path));
    }
    Ok(params)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Reader { bytes, pos: 0 }
    }

    fn take<const N: usize>(&mut self) -> Result<[u8; N], FormatError> {
        let end = self.pos + N;
        let Some(chunk) = self.bytes.get(self.pos..end) else {
            return Err(FormatError::new(
                self.pos,
                format!("truncated: needed {N} more bytes, {} left", self.bytes.len() - self.pos),
            ));
        };
        self.pos = end;
        Ok(chunk.try_into().expect("length checked"))
    }

    fn magic(&mut self, want: &[u8; 4]) -> Result<(), FormatError> {
        let got = self.take::<4>()?;
        if &got != want {
            return Err(FormatError::new(
                0,
                format!("bad magic {:?}, expected {:?}", String::from_utf8_lossy(&got), String::from_utf8_lossy(want)),
            ));
        }
        Ok(())
    }

    fn version(&mut self) -> Result<(), FormatError> {
        let at = self.pos;
        let v = self.u32()?;
        if v != VERSION {
            return Err(FormatError::new(at, format!("unsupported version {v}, expected {VERSION}")));
        }
        Ok(())
    }

    fn u8(&mut self) -> Result<u8, FormatError> {
        Ok(self.take::<1>()?[0])
    }

    fn flag(&mut self) -> Result<bool, FormatError> {
        let at = self.pos;
        match self.u8()? {
            0 => Ok(false),
            1 => Ok(true),
            other => Err(FormatError::new(at, format!("flag byte must be 0 or 1, got {other}"))),
        }
    }

    fn u32(&mut self) -> Result<u32, FormatError> {
        self.take().map(u32::from_le_bytes)
    }

    fn f32(&mut self) -> Result<f32, FormatError> {
        self.take().map(f32::from_le_bytes)
    }

    fn f64(&mut self) -> Result<f64, FormatError> {
        self.take().map(f64::from_le_bytes)
    }
}
