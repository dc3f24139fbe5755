//! Binary file formats. All integers and floats are little-endian.
//!
//! Tensor file (`.ddt`):
//!
//! ```text
//! magic   "DDT1"             4 bytes
//! dtype   u8                 1 = f64 real, 2 = f64 complex (re, im interleaved)
//! rank    u8                 >= 1
//! dims    rank x u32
//! payload prod(dims) x (8 | 16) bytes
//! ```
//!
//! Checkpoint file (`.ddck`):
//!
//! ```text
//! magic    "DDCK"
//! version  u32 (= 1)
//! digest   32 bytes, SHA-256 of the config text below
//! cfg_len  u32, then cfg_len bytes of canonical `key=value` config text
//! step     u64    Adam step counter
//! lr, beta1, beta2, eps   4 x f64
//! count    u32    number of parameter tensors P
//! blocks   3P x (name_len u32, name bytes, block_len u64, DDT1 block)
//!          parameters, then first moments ("m/" prefix), then second
//!          moments ("v/" prefix), each in parameter traversal order
//! ```
//!
//! Readers validate headers completely before allocating payloads, and
//! every malformed input yields [`Error::Format`].

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use sha2::{Digest, Sha256};

use crate::cascade::{CascadeConfig, ModelParams};
use crate::error::{Error, Result};
use crate::layers::ParamSet;
use crate::tensor::{ComplexImage, RealTensor};
use crate::training::OptimState;

pub const TENSOR_MAGIC: &[u8; 4] = b"DDT1";
pub const CHECKPOINT_MAGIC: &[u8; 4] = b"DDCK";
pub const CHECKPOINT_VERSION: u32 = 1;

const DTYPE_REAL: u8 = 1;
const DTYPE_COMPLEX: u8 = 2;

/// Contents of a tensor file.
#[derive(Clone, Debug, PartialEq)]
pub enum StoredTensor {
    Real(RealTensor),
    Complex {
        dims: Vec<usize>,
        data: Vec<Complex64>,
    },
}

impl From<RealTensor> for StoredTensor {
    fn from(t: RealTensor) -> Self {
        StoredTensor::Real(t)
    }
}

impl From<&ComplexImage> for StoredTensor {
    fn from(x: &ComplexImage) -> Self {
        let (c, h, w) = x.dims();
        StoredTensor::Complex {
            dims: vec![c, h, w],
            data: x.data().to_vec(),
        }
    }
}

impl StoredTensor {
    pub fn dims(&self) -> &[usize] {
        match self {
            StoredTensor::Real(t) => t.shape(),
            StoredTensor::Complex { dims, .. } => dims,
        }
    }

    /// Complex rank-3 `(C, H, W)` or rank-2 `(H, W)` tensor as an image.
    pub fn into_complex_image(self) -> Result<ComplexImage> {
        match self {
            StoredTensor::Complex { dims, data } => match dims[..] {
                [c, h, w] => ComplexImage::from_vec(c, h, w, data),
                [h, w] => ComplexImage::from_vec(1, h, w, data),
                _ => Err(Error::Format(format!("complex tensor of rank {} is not an image", dims.len()))),
            },
            StoredTensor::Real(_) => Err(Error::Format("expected a complex tensor".into())),
        }
    }

    pub fn into_real(self) -> Result<RealTensor> {
        match self {
            StoredTensor::Real(t) => Ok(t),
            StoredTensor::Complex { .. } => Err(Error::Format("expected a real tensor".into())),
        }
    }
}

pub fn encode_tensor(t: &StoredTensor) -> Vec<u8> {
    let dims = t.dims();
    let mut out = Vec::with_capacity(6 + 4 * dims.len());
    out.extend_from_slice(TENSOR_MAGIC);
    out.push(match t {
        StoredTensor::Real(_) => DTYPE_REAL,
        StoredTensor::Complex { .. } => DTYPE_COMPLEX,
    });
    out.push(dims.len() as u8);
    for &d in dims {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    match t {
        StoredTensor::Real(r) => {
            for v in r.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        StoredTensor::Complex { data, .. } => {
            for z in data {
                out.extend_from_slice(&z.re.to_le_bytes());
                out.extend_from_slice(&z.im.to_le_bytes());
            }
        }
    }
    out
}

/// Byte cursor that reports truncation as a format error.
struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.remaining() < n {
            return Err(Error::Format(format!(
                "truncated {what}: need {n} bytes, {} left",
                self.remaining()
            )));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }
}

fn finite(v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Format(format!("non-finite value {v} in payload")))
    }
}

fn parse_tensor_from(r: &mut Reader<'_>) -> Result<StoredTensor> {
    if r.take(4, "tensor magic")? != TENSOR_MAGIC {
        return Err(Error::Format("bad tensor magic".into()));
    }
    let dtype = r.u8("dtype")?;
    let width = match dtype {
        DTYPE_REAL => 8usize,
        DTYPE_COMPLEX => 16,
        other => return Err(Error::Format(format!("unknown dtype code {other}"))),
    };
    let rank = r.u8("rank")? as usize;
    if rank == 0 {
        return Err(Error::Format("rank must be at least 1".into()));
    }
    let mut dims = Vec::with_capacity(rank);
    for _ in 0..rank {
        dims.push(r.u32("dims")? as usize);
    }
    let count = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| Error::Format("dimension overflow".into()))?;
    let bytes = count
        .checked_mul(width)
        .ok_or_else(|| Error::Format("dimension overflow".into()))?;
    if bytes > r.remaining() {
        return Err(Error::Format(format!(
            "truncated payload: header announces {bytes} bytes, {} present",
            r.remaining()
        )));
    }
    let payload = r.take(bytes, "payload")?;
    let mut vals = payload
        .chunks_exact(8)
        .map(|c| finite(f64::from_le_bytes(c.try_into().expect("8 bytes"))));
    if dtype == DTYPE_REAL {
        let data = vals.collect::<Result<Vec<_>>>()?;
        Ok(StoredTensor::Real(RealTensor::from_vec(&dims, data)?))
    } else {
        let mut data = Vec::with_capacity(count);
        while let Some(re) = vals.next() {
            let im = vals.next().expect("complex payload has even length")?;
            data.push(Complex64::new(re?, im));
        }
        Ok(StoredTensor::Complex { dims, data })
    }
}

/// Parse a complete tensor file; trailing bytes are an error.
pub fn decode_tensor(bytes: &[u8]) -> Result<StoredTensor> {
    let mut r = Reader::new(bytes);
    let t = parse_tensor_from(&mut r)?;
    if r.remaining() != 0 {
        return Err(Error::Format(format!("{} trailing bytes after tensor", r.remaining())));
    }
    Ok(t)
}

/// Write `bytes` to a sibling temporary file, then rename over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = temp_path(path);
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    Ok(result?)
}

fn temp_path(path: &Path) -> PathBuf {
    let mut name = path
        .file_name()
        .map(|n| n.to_os_string())
        .unwrap_or_default();
    name.push(format!(".tmp{}", std::process::id()));
    path.with_file_name(name)
}

pub fn write_tensor(path: impl AsRef<Path>, t: &StoredTensor) -> Result<()> {
    write_atomic(path.as_ref(), &encode_tensor(t))
}

pub fn read_tensor(path: impl AsRef<Path>) -> Result<StoredTensor> {
    decode_tensor(&fs::read(path)?)
}

pub fn write_image(path: impl AsRef<Path>, x: &ComplexImage) -> Result<()> {
    write_tensor(path, &StoredTensor::from(x))
}

pub fn read_image(path: impl AsRef<Path>) -> Result<ComplexImage> {
    read_tensor(path)?.into_complex_image()
}

/// Model, optimizer state and the configuration they were built for.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub config: CascadeConfig,
    pub params: ModelParams,
    pub optim: OptimState,
}

fn put_block(out: &mut Vec<u8>, name: &str, t: &RealTensor) {
    let block = encode_tensor(&StoredTensor::Real(t.clone()));
    out.extend_from_slice(&(name.len() as u32).to_le_bytes());
    out.extend_from_slice(name.as_bytes());
    out.extend_from_slice(&(block.len() as u64).to_le_bytes());
    out.extend_from_slice(&block);
}

pub fn encode_checkpoint(ck: &Checkpoint) -> Result<Vec<u8>> {
    let named = ck.params.named_tensors();
    if ck.optim.first_moment.len() != named.len() || ck.optim.second_moment.len() != named.len() {
        return Err(Error::Shape("optimizer moments do not match parameters".into()));
    }
    let text = ck.config.canonical_text();
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&ck.config.digest());
    out.extend_from_slice(&(text.len() as u32).to_le_bytes());
    out.extend_from_slice(text.as_bytes());
    out.extend_from_slice(&ck.optim.step.to_le_bytes());
    for v in [ck.optim.lr, ck.optim.beta1, ck.optim.beta2, ck.optim.eps] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(&(named.len() as u32).to_le_bytes());
    for (name, t) in &named {
        put_block(&mut out, name, t);
    }
    for ((name, _), m) in named.iter().zip(&ck.optim.first_moment) {
        put_block(&mut out, &format!("m/{name}"), m);
    }
    for ((name, _), v) in named.iter().zip(&ck.optim.second_moment) {
        put_block(&mut out, &format!("v/{name}"), v);
    }
    Ok(out)
}

fn read_block(r: &mut Reader<'_>, expected_name: &str, expected_shape: &[usize]) -> Result<RealTensor> {
    let name_len = r.u32("block name length")? as usize;
    let name = r.take(name_len, "block name")?;
    if name != expected_name.as_bytes() {
        return Err(Error::Format(format!(
            "expected block {expected_name:?}, found {:?}",
            String::from_utf8_lossy(name)
        )));
    }
    let block_len = r.u64("block length")?;
    if block_len > r.remaining() as u64 {
        return Err(Error::Format(format!("truncated block {expected_name}")));
    }
    let block = r.take(block_len as usize, "block")?;
    let t = decode_tensor(block)
        .map_err(|e| Error::Format(format!("block {expected_name}: {e}")))?
        .into_real()?;
    if t.shape() != expected_shape {
        return Err(Error::Format(format!(
            "block {expected_name} has shape {:?}, expected {:?}",
            t.shape(),
            expected_shape
        )));
    }
    Ok(t)
}

/// Parse a checkpoint. With `expected`, a config digest that differs from
/// `expected.digest()` is [`Error::ConfigMismatch`].
pub fn decode_checkpoint(bytes: &[u8], expected: Option<&CascadeConfig>) -> Result<Checkpoint> {
    let mut r = Reader::new(bytes);
    if r.take(4, "checkpoint magic")? != CHECKPOINT_MAGIC {
        return Err(Error::Format("bad checkpoint magic".into()));
    }
    let version = r.u32("version")?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Format(format!("unsupported checkpoint version {version}")));
    }
    let digest: [u8; 32] = r.take(32, "digest")?.try_into().expect("32 bytes");
    let text_len = r.u32("config length")? as usize;
    let text = r.take(text_len, "config text")?;
    let computed = Sha256::digest(text);
    if computed.as_slice() != digest {
        return Err(Error::Format("config digest does not match config text".into()));
    }
    let text = std::str::from_utf8(text).map_err(|_| Error::Format("config text is not UTF-8".into()))?;
    let config = CascadeConfig::from_canonical_text(text)?;
    if let Some(exp) = expected {
        if exp.digest() != digest {
            return Err(Error::ConfigMismatch(format!(
                "checkpoint was written for\n{text}but\n{}was requested",
                exp.canonical_text()
            )));
        }
    }
    let step = r.u64("step")?;
    let lr = finite(r.f64("lr")?)?;
    let beta1 = finite(r.f64("beta1")?)?;
    let beta2 = finite(r.f64("beta2")?)?;
    let eps = finite(r.f64("eps")?)?;

    let mut params = ModelParams::zeros(&config);
    let layout: Vec<(String, Vec<usize>)> = params
        .named_tensors()
        .into_iter()
        .map(|(n, t)| (n, t.shape().to_vec()))
        .collect();
    let count = r.u32("tensor count")? as usize;
    if count != layout.len() {
        return Err(Error::Format(format!(
            "checkpoint has {count} tensors, config implies {}",
            layout.len()
        )));
    }
    for (slot, (name, shape)) in params.tensors_mut().into_iter().zip(&layout) {
        *slot = read_block(&mut r, name, shape)?;
    }
    let mut first_moment = Vec::with_capacity(count);
    for (name, shape) in &layout {
        first_moment.push(read_block(&mut r, &format!("m/{name}"), shape)?);
    }
    let mut second_moment = Vec::with_capacity(count);
    for (name, shape) in &layout {
        second_moment.push(read_block(&mut r, &format!("v/{name}"), shape)?);
    }
    if r.remaining() != 0 {
        return Err(Error::Format(format!("{} trailing bytes after checkpoint", r.remaining())));
    }
    Ok(Checkpoint {
        config,
        params,
        optim: OptimState {
            lr,
            beta1,
            beta2,
            eps,
            step,
            first_moment,
            second_moment,
        },
    })
}

pub fn save_checkpoint(path: impl AsRef<Path>, ck: &Checkpoint) -> Result<()> {
    write_atomic(path.as_ref(), &encode_checkpoint(ck)?)
}

pub fn load_checkpoint(path: impl AsRef<Path>, expected: Option<&CascadeConfig>) -> Result<Checkpoint> {
    decode_checkpoint(&fs::read(path)?, expected)
}

/// 16-bit binary greymap of a 2D tensor, min-max scaled to `[0, 65535]`.
/// A constant image maps to all zeros.
pub fn encode_pgm(img: &RealTensor) -> Result<Vec<u8>> {
    let &[h, w] = img.shape() else {
        return Err(Error::Shape(format!("PGM export needs a 2D tensor, got {:?}", img.shape())));
    };
    let (lo, hi) = (img.min(), img.max());
    let span = hi - lo;
    let mut out = format!("P5\n{w} {h}\n65535\n").into_bytes();
    out.reserve(2 * h * w);
    for &v in img.data() {
        let q = if span > 0.0 {
            ((v - lo) / span * 65535.0).round().clamp(0.0, 65535.0) as u16
        } else {
            0
        };
        out.extend_from_slice(&q.to_be_bytes());
    }
    Ok(out)
}

pub fn export_pgm(img: &RealTensor, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path.as_ref(), &encode_pgm(img)?)
}
