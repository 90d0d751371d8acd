//! Binary checkpoint container.
//!
//! ```text
//! magic        8 bytes   "CFGTCKPT"
//! version      u32       1
//! arch         str       u32 length + UTF-8
//! num_classes  u32
//! seed         u64
//! input        3 x u32
//! layers       str       ';'-separated layer records
//! deleted      u32 count + u32 class ids
//! merged       i64       -1 when absent
//! metadata     u32 count + (str key, str value) pairs
//! params       u32 count + tensors
//! buffers      u32 count + tensors
//! digest       32 bytes  SHA-256 of everything above
//! ```
//!
//! A tensor is `str name, u32 rank, rank x u64 dims, f32 data`. All integers
//! and floats are little-endian.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{Cursor, Read};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use sha2::{Digest, Sha256};

use super::head::HeadLayout;
use super::network::{Layer, Network};
use super::params::ParamStore;
use crate::error::{Error, Result};
use crate::io_util;
use crate::tensor::Tensor;

const MAGIC: &[u8; 8] = b"CFGTCKPT";
const VERSION: u32 = 1;

pub fn save_checkpoint(net: &Network<f32>, path: &Path) -> Result<()> {
    io_util::write_atomic(path, &encode(net))
}

pub fn load_checkpoint(path: &Path) -> Result<Network<f32>> {
    let bytes = std::fs::read(path)
        .map_err(|e| Error::CheckpointFormat(format!("cannot read checkpoint {}: {e}", path.display())))?;
    decode(&bytes)
}

/// Loads a checkpoint and rejects it unless it was written for `arch`.
pub fn load_checkpoint_expecting(path: &Path, arch: &str) -> Result<Network<f32>> {
    let net = load_checkpoint(path)?;
    if net.arch() != arch {
        return Err(Error::CheckpointFormat(format!(
            "checkpoint holds architecture `{}`, expected `{arch}`",
            net.arch()
        )));
    }
    Ok(net)
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    out.write_u32::<LittleEndian>(s.len() as u32).unwrap();
    out.extend_from_slice(s.as_bytes());
}

fn put_tensors(out: &mut Vec<u8>, store: &ParamStore<f32>) {
    out.write_u32::<LittleEndian>(store.len() as u32).unwrap();
    for (name, t) in store.iter() {
        put_str(out, name);
        out.write_u32::<LittleEndian>(t.shape().len() as u32).unwrap();
        for &d in t.shape() {
            out.write_u64::<LittleEndian>(d as u64).unwrap();
        }
        for &v in t.data() {
            out.write_f32::<LittleEndian>(v).unwrap();
        }
    }
}

pub(crate) fn encode(net: &Network<f32>) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.write_u32::<LittleEndian>(VERSION).unwrap();
    put_str(&mut out, net.arch());
    out.write_u32::<LittleEndian>(net.num_classes() as u32).unwrap();
    out.write_u64::<LittleEndian>(net.seed).unwrap();
    for d in net.input_shape() {
        out.write_u32::<LittleEndian>(d as u32).unwrap();
    }
    put_str(&mut out, &encode_layers(net.layers()));
    out.write_u32::<LittleEndian>(net.head.deleted.len() as u32).unwrap();
    for &c in &net.head.deleted {
        out.write_u32::<LittleEndian>(c as u32).unwrap();
    }
    out.write_i64::<LittleEndian>(net.head.merged_slot.map_or(-1, |c| c as i64))
        .unwrap();
    out.write_u32::<LittleEndian>(net.meta.len() as u32).unwrap();
    for (k, v) in &net.meta {
        put_str(&mut out, k);
        put_str(&mut out, v);
    }
    put_tensors(&mut out, net.params());
    put_tensors(&mut out, net.buffers());
    let digest = Sha256::digest(&out);
    out.extend_from_slice(&digest);
    out
}

fn fmt_err(what: &str) -> impl Fn(std::io::Error) -> Error + '_ {
    move |e| Error::CheckpointFormat(format!("truncated while reading {what}: {e}"))
}

fn get_str(r: &mut Cursor<&[u8]>, what: &str) -> Result<String> {
    let len = r.read_u32::<LittleEndian>().map_err(fmt_err(what))? as usize;
    let remaining = r.get_ref().len() - r.position() as usize;
    if len > remaining {
        return Err(Error::CheckpointFormat(format!("{what} length {len} exceeds file")));
    }
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf).map_err(fmt_err(what))?;
    String::from_utf8(buf).map_err(|_| Error::CheckpointFormat(format!("{what} is not UTF-8")))
}

fn get_tensors(r: &mut Cursor<&[u8]>) -> Result<ParamStore<f32>> {
    let count = r.read_u32::<LittleEndian>().map_err(fmt_err("tensor count"))?;
    let mut store = ParamStore::new();
    for _ in 0..count {
        let name = get_str(r, "tensor name")?;
        let rank = r.read_u32::<LittleEndian>().map_err(fmt_err("tensor rank"))? as usize;
        if rank > 8 {
            return Err(Error::CheckpointFormat(format!("tensor `{name}` has rank {rank}")));
        }
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(r.read_u64::<LittleEndian>().map_err(fmt_err("tensor shape"))? as usize);
        }
        let len: usize = shape.iter().product();
        let remaining = r.get_ref().len() - r.position() as usize;
        if len.checked_mul(4).map_or(true, |b| b > remaining) {
            return Err(Error::CheckpointFormat(format!("tensor `{name}` exceeds file")));
        }
        let mut data = vec![0f32; len];
        r.read_f32_into::<LittleEndian>(&mut data).map_err(fmt_err("tensor data"))?;
        store
            .insert(name, Tensor::from_vec(&shape, data))
            .map_err(|e| Error::CheckpointFormat(e.to_string()))?;
    }
    Ok(store)
}

pub(crate) fn decode(bytes: &[u8]) -> Result<Network<f32>> {
    if bytes.len() < MAGIC.len() + 4 + 32 || &bytes[..8] != MAGIC {
        return Err(Error::CheckpointFormat("not a checkpoint file".into()));
    }
    let (body, digest) = bytes.split_at(bytes.len() - 32);
    if Sha256::digest(body).as_slice() != digest {
        return Err(Error::CheckpointFormat("checksum mismatch (file is corrupt)".into()));
    }
    let mut r = Cursor::new(body);
    r.set_position(8);
    let version = r.read_u32::<LittleEndian>().map_err(fmt_err("version"))?;
    if version != VERSION {
        return Err(Error::CheckpointFormat(format!("unsupported version {version}")));
    }
    let arch = get_str(&mut r, "architecture id")?;
    let num_classes = r.read_u32::<LittleEndian>().map_err(fmt_err("class count"))? as usize;
    let seed = r.read_u64::<LittleEndian>().map_err(fmt_err("seed"))?;
    let mut input = [0usize; 3];
    for d in &mut input {
        *d = r.read_u32::<LittleEndian>().map_err(fmt_err("input shape"))? as usize;
    }
    let layers = decode_layers(&get_str(&mut r, "layers")?)?;
    let n_deleted = r.read_u32::<LittleEndian>().map_err(fmt_err("head layout"))?;
    let mut deleted = BTreeSet::new();
    for _ in 0..n_deleted {
        deleted.insert(r.read_u32::<LittleEndian>().map_err(fmt_err("head layout"))? as usize);
    }
    let merged = r.read_i64::<LittleEndian>().map_err(fmt_err("head layout"))?;
    let head = HeadLayout {
        deleted,
        merged_slot: (merged >= 0).then_some(merged as usize),
    };
    let n_meta = r.read_u32::<LittleEndian>().map_err(fmt_err("metadata"))?;
    let mut meta = BTreeMap::new();
    for _ in 0..n_meta {
        let k = get_str(&mut r, "metadata key")?;
        let v = get_str(&mut r, "metadata value")?;
        meta.insert(k, v);
    }
    let params = get_tensors(&mut r)?;
    let buffers = get_tensors(&mut r)?;
    if r.position() as usize != body.len() {
        return Err(Error::CheckpointFormat("trailing bytes after tensors".into()));
    }
    Network::from_parts(arch, input, num_classes, layers, params, buffers, head, seed, meta)
}

fn encode_layers(layers: &[Layer]) -> String {
    layers
        .iter()
        .map(|l| match *l {
            Layer::Conv3x3 { weight, bias: Some(bias), cin, cout } => format!("conv {weight} {bias} {cin} {cout}"),
            Layer::Conv3x3 { weight, bias: None, cin, cout } => format!("conv {weight} {cin} {cout}"),
            Layer::BatchNorm {
                gamma,
                beta,
                mean,
                var,
                channels,
            } => format!("bn {gamma} {beta} {mean} {var} {channels}"),
            Layer::Relu => "relu".into(),
            Layer::MaxPool2 => "pool".into(),
            Layer::Flatten => "flatten".into(),
            Layer::GlobalAvgPool => "gap".into(),
            Layer::Linear { weight, bias, din, dout } => format!("linear {weight} {bias} {din} {dout}"),
        })
        .collect::<Vec<_>>()
        .join(";")
}

fn decode_layers(s: &str) -> Result<Vec<Layer>> {
    let bad = || Error::CheckpointFormat(format!("malformed layer list `{s}`"));
    s.split(';')
        .map(|rec| {
            let mut it = rec.split_whitespace();
            let kind = it.next().ok_or_else(bad)?;
            let nums: Vec<usize> = it
                .map(|t| t.parse().map_err(|_| bad()))
                .collect::<Result<_>>()?;
            let layer = match (kind, nums.as_slice()) {
                ("conv", &[weight, bias, cin, cout]) => Layer::Conv3x3 {
                    weight,
                    bias: Some(bias),
                    cin,
                    cout,
                },
                ("conv", &[weight, cin, cout]) => Layer::Conv3x3 {
                    weight,
                    bias: None,
                    cin,
                    cout,
                },
                ("bn", &[gamma, beta, mean, var, channels]) => Layer::BatchNorm {
                    gamma,
                    beta,
                    mean,
                    var,
                    channels,
                },
                ("relu", []) => Layer::Relu,
                ("pool", []) => Layer::MaxPool2,
                ("flatten", []) => Layer::Flatten,
                ("gap", []) => Layer::GlobalAvgPool,
                ("linear", &[weight, bias, din, dout]) => Layer::Linear { weight, bias, din, dout },
                _ => return Err(bad()),
            };
            Ok(layer)
        })
        .collect()
}
