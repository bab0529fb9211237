//! Versioned binary checkpoint for `Mlp` parameters.
//!
//! Layout (little-endian): magic `IPMANNET`, version u32, layer count u32,
//! then per layer: in_dim u32, out_dim u32, activation tag u8 (0 = LeakyReLU
//! followed by the slope as f64, 1 = Sigmoid, 2 = Identity, 3 = ScaledTanh
//! followed by the scale as f64), weights row-major f64, bias f64.
//! Round-trips bit-exactly.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::matrix::Matrix2;
use crate::nn::{Activation, Layer, Mlp};
use crate::scalar::Real;

const MAGIC: &[u8; 8] = b"IPMANNET";
const VERSION: u32 = 1;

fn write_u32(w: &mut impl Write, v: u32) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn write_f64(w: &mut impl Write, v: f64) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_f64(r: &mut impl Read) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

pub fn save_mlp<F: Real>(net: &Mlp<F>, w: &mut impl Write) -> Result<()> {
    w.write_all(MAGIC)?;
    write_u32(w, VERSION)?;
    write_u32(w, net.layers().len() as u32)?;
    for layer in net.layers() {
        write_u32(w, layer.in_dim() as u32)?;
        write_u32(w, layer.out_dim() as u32)?;
        match layer.activation {
            Activation::LeakyRelu { slope } => {
                w.write_all(&[0])?;
                write_f64(w, slope)?;
            }
            Activation::Sigmoid => w.write_all(&[1])?,
            Activation::Identity => w.write_all(&[2])?,
            Activation::ScaledTanh { scale } => {
                w.write_all(&[3])?;
                write_f64(w, scale)?;
            }
        }
        for &v in layer.weight.data() {
            write_f64(w, v.to_f64_c())?;
        }
        for &v in &layer.bias {
            write_f64(w, v.to_f64_c())?;
        }
    }
    Ok(())
}

pub fn load_mlp<F: Real>(r: &mut impl Read) -> Result<Mlp<F>> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Checkpoint("bad magic; not an ipman checkpoint".into()));
    }
    let version = read_u32(r)?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let n_layers = read_u32(r)? as usize;
    let mut layers = Vec::with_capacity(n_layers);
    for _ in 0..n_layers {
        let in_dim = read_u32(r)? as usize;
        let out_dim = read_u32(r)? as usize;
        let mut tag = [0u8; 1];
        r.read_exact(&mut tag)?;
        let activation = match tag[0] {
            0 => Activation::LeakyRelu { slope: read_f64(r)? },
            1 => Activation::Sigmoid,
            2 => Activation::Identity,
            3 => Activation::ScaledTanh { scale: read_f64(r)? },
            t => return Err(Error::Checkpoint(format!("unknown activation tag {t}"))),
        };
        let mut wdata = Vec::with_capacity(in_dim * out_dim);
        for _ in 0..in_dim * out_dim {
            wdata.push(F::from_f64_c(read_f64(r)?));
        }
        let mut bias = Vec::with_capacity(out_dim);
        for _ in 0..out_dim {
            bias.push(F::from_f64_c(read_f64(r)?));
        }
        let weight = Matrix2::from_vec(in_dim, out_dim, wdata)?;
        layers.push(Layer::from_parts(weight, bias, activation)?);
    }
    Mlp::new(layers)
}
