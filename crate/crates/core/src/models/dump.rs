//! Binary model container.
//!
//! Layout, all little-endian:
//!
//! ```text
//! magic    4 bytes  "BSMD"
//! version  u32      1
//! kind     u32      1 = message_passing_2layer, 2 = feature_mlp
//! epochs   u64
//! lr       f64
//! decay    f64
//! seed     u64
//! graph    u64      fingerprint of the training graph
//! 4 tensors (W1, b1, W2, b2), each: rows u64, cols u64, rows*cols f64 row-major
//! ```
//!
//! Bias vectors are stored as `1 x len` tensors.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use ndarray::{Array1, Array2};

use super::{ClassifierSpec, ModelKind, TrainedModel};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"BSMD";
const VERSION: u32 = 1;

fn write_tensor<W: Write>(w: &mut W, rows: usize, cols: usize, data: impl Iterator<Item = f64>) -> std::io::Result<()> {
    w.write_u64::<LittleEndian>(rows as u64)?;
    w.write_u64::<LittleEndian>(cols as u64)?;
    for x in data {
        w.write_f64::<LittleEndian>(x)?;
    }
    Ok(())
}

fn read_tensor<R: Read>(r: &mut R) -> Result<Array2<f64>> {
    let rows = r.read_u64::<LittleEndian>().map_err(truncated)? as usize;
    let cols = r.read_u64::<LittleEndian>().map_err(truncated)? as usize;
    let len = rows
        .checked_mul(cols)
        .filter(|&l| l <= 1 << 32)
        .ok_or_else(|| Error::ModelFormat(format!("implausible tensor shape {rows}x{cols}")))?;
    let mut data = vec![0.0; len];
    r.read_f64_into::<LittleEndian>(&mut data).map_err(truncated)?;
    Array2::from_shape_vec((rows, cols), data).map_err(|e| Error::ModelFormat(e.to_string()))
}

fn truncated(e: std::io::Error) -> Error {
    Error::ModelFormat(format!("truncated file: {e}"))
}

pub fn write_model(model: &TrainedModel, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let body = (|| -> std::io::Result<()> {
        w.write_all(MAGIC)?;
        w.write_u32::<LittleEndian>(VERSION)?;
        w.write_u32::<LittleEndian>(match model.spec.kind {
            ModelKind::MessagePassing2Layer => 1,
            ModelKind::FeatureMlp => 2,
        })?;
        w.write_u64::<LittleEndian>(model.spec.epochs as u64)?;
        w.write_f64::<LittleEndian>(model.spec.learning_rate)?;
        w.write_f64::<LittleEndian>(model.spec.weight_decay)?;
        w.write_u64::<LittleEndian>(model.spec.seed)?;
        w.write_u64::<LittleEndian>(model.graph_fingerprint)?;
        write_tensor(&mut w, model.w1.nrows(), model.w1.ncols(), model.w1.iter().copied())?;
        write_tensor(&mut w, 1, model.b1.len(), model.b1.iter().copied())?;
        write_tensor(&mut w, model.w2.nrows(), model.w2.ncols(), model.w2.iter().copied())?;
        write_tensor(&mut w, 1, model.b2.len(), model.b2.iter().copied())?;
        w.flush()
    })();
    body.map_err(|e| Error::io(path, e))
}

pub fn read_model(path: &Path) -> Result<TrainedModel> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(truncated)?;
    if &magic != MAGIC {
        return Err(Error::ModelFormat("bad magic".into()));
    }
    let version = r.read_u32::<LittleEndian>().map_err(truncated)?;
    if version != VERSION {
        return Err(Error::ModelFormat(format!("unsupported version {version}")));
    }
    let kind = match r.read_u32::<LittleEndian>().map_err(truncated)? {
        1 => ModelKind::MessagePassing2Layer,
        2 => ModelKind::FeatureMlp,
        k => return Err(Error::ModelFormat(format!("unknown model kind {k}"))),
    };
    let epochs = r.read_u64::<LittleEndian>().map_err(truncated)? as usize;
    let learning_rate = r.read_f64::<LittleEndian>().map_err(truncated)?;
    let weight_decay = r.read_f64::<LittleEndian>().map_err(truncated)?;
    let seed = r.read_u64::<LittleEndian>().map_err(truncated)?;
    let graph_fingerprint = r.read_u64::<LittleEndian>().map_err(truncated)?;
    let w1 = read_tensor(&mut r)?;
    let b1 = read_tensor(&mut r)?;
    let w2 = read_tensor(&mut r)?;
    let b2 = read_tensor(&mut r)?;
    let hidden = w1.ncols();
    let classes = w2.ncols();
    if b1.dim() != (1, hidden) || w2.nrows() != hidden || b2.dim() != (1, classes) {
        return Err(Error::ModelFormat("inconsistent layer shapes".into()));
    }
    let spec = ClassifierSpec {
        kind,
        hidden_dim: hidden,
        epochs,
        learning_rate,
        weight_decay,
        seed,
    };
    Ok(TrainedModel {
        spec,
        num_classes: classes,
        w1,
        b1: Array1::from_vec(b1.into_raw_vec_and_offset().0),
        w2,
        b2: Array1::from_vec(b2.into_raw_vec_and_offset().0),
        graph_fingerprint,
    })
}
