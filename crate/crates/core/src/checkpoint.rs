//! Versioned little-endian binary checkpoints.
//!
//! Layout: magic `ATMCKPT\0`, u32 version, u64 K/S/V/H, f64 leak, u64 seed,
//! u64 generator iteration, then every tensor as a u64 length followed by raw
//! f64 values (generator first, BatchNorm running stats included).

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use ndarray::{Array1, Array2};

use crate::error::{AtmError, Result};
use crate::network::{DiscriminatorParams, GeneratorParams, NetworkDims};

const MAGIC: &[u8; 8] = b"ATMCKPT\0";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub dims: NetworkDims,
    pub leak: f64,
    pub seed: u64,
    pub iteration: u64,
    pub generator: GeneratorParams,
    pub discriminator: DiscriminatorParams,
}

impl Checkpoint {
    pub fn new(
        generator: GeneratorParams,
        discriminator: DiscriminatorParams,
        seed: u64,
        iteration: u64,
    ) -> Result<Self> {
        let dims = NetworkDims {
            topics: generator.topics(),
            embed: generator.embed_size(),
            vocab: generator.vocab_size(),
            hidden: discriminator.hidden_size(),
        };
        generator.validate(dims)?;
        discriminator.validate(dims)?;
        if generator.leak != discriminator.leak {
            return Err(AtmError::Checkpoint(
                "generator and critic use different leak values".into(),
            ));
        }
        Ok(Self {
            dims,
            leak: generator.leak,
            seed,
            iteration,
            generator,
            discriminator,
        })
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        w.write_all(MAGIC)?;
        w.write_u32::<LittleEndian>(VERSION)?;
        let d = self.dims;
        for n in [d.topics, d.embed, d.vocab, d.hidden] {
            w.write_u64::<LittleEndian>(n as u64)?;
        }
        w.write_f64::<LittleEndian>(self.leak)?;
        w.write_u64::<LittleEndian>(self.seed)?;
        w.write_u64::<LittleEndian>(self.iteration)?;

        let g = &self.generator;
        let c = &self.discriminator;
        let b3 = [c.b3];
        let tensors: [&[f64]; 14] = [
            g.w_s.as_slice().expect("standard layout"),
            g.b_s.as_slice().expect("standard layout"),
            g.bn_gamma.as_slice().expect("standard layout"),
            g.bn_beta.as_slice().expect("standard layout"),
            g.bn_running_mean.as_slice().expect("standard layout"),
            g.bn_running_var.as_slice().expect("standard layout"),
            g.w_w.as_slice().expect("standard layout"),
            g.b_w.as_slice().expect("standard layout"),
            c.w1.as_slice().expect("standard layout"),
            c.b1.as_slice().expect("standard layout"),
            c.w2.as_slice().expect("standard layout"),
            c.b2.as_slice().expect("standard layout"),
            c.w3.as_slice().expect("standard layout"),
            &b3,
        ];
        for t in tensors {
            w.write_u64::<LittleEndian>(t.len() as u64)?;
            for &x in t {
                w.write_f64::<LittleEndian>(x)?;
            }
        }
        w.flush()
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let bad = |msg: &str| AtmError::Checkpoint(msg.to_string());
        let io = |e: std::io::Error| AtmError::Checkpoint(format!("truncated or unreadable: {e}"));

        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(io)?;
        if &magic != MAGIC {
            return Err(bad("not an ATM checkpoint"));
        }
        let version = r.read_u32::<LittleEndian>().map_err(io)?;
        if version != VERSION {
            return Err(AtmError::Checkpoint(format!(
                "unsupported version {version}"
            )));
        }
        let mut dims = [0usize; 4];
        for d in dims.iter_mut() {
            *d = r.read_u64::<LittleEndian>().map_err(io)? as usize;
        }
        let [k, s, v, h] = dims;
        let dims = NetworkDims {
            topics: k,
            embed: s,
            vocab: v,
            hidden: h,
        };
        dims.validate()?;
        let leak = r.read_f64::<LittleEndian>().map_err(io)?;
        let seed = r.read_u64::<LittleEndian>().map_err(io)?;
        let iteration = r.read_u64::<LittleEndian>().map_err(io)?;

        let mut read_vec = |expect: usize| -> Result<Vec<f64>> {
            let len = r.read_u64::<LittleEndian>().map_err(io)? as usize;
            if len != expect {
                return Err(AtmError::Checkpoint(format!(
                    "tensor length {len}, expected {expect}"
                )));
            }
            let mut out = vec![0.0; len];
            r.read_f64_into::<LittleEndian>(&mut out).map_err(io)?;
            Ok(out)
        };
        let mat =
            |rows, cols, data| Array2::from_shape_vec((rows, cols), data).expect("length checked");

        let generator = GeneratorParams {
            w_s: mat(s, k, read_vec(s * k)?),
            b_s: Array1::from(read_vec(s)?),
            bn_gamma: Array1::from(read_vec(s)?),
            bn_beta: Array1::from(read_vec(s)?),
            bn_running_mean: Array1::from(read_vec(s)?),
            bn_running_var: Array1::from(read_vec(s)?),
            w_w: mat(v, s, read_vec(v * s)?),
            b_w: Array1::from(read_vec(v)?),
            leak,
        };
        let discriminator = DiscriminatorParams {
            w1: mat(h, v, read_vec(h * v)?),
            b1: Array1::from(read_vec(h)?),
            w2: mat(h, h, read_vec(h * h)?),
            b2: Array1::from(read_vec(h)?),
            w3: Array1::from(read_vec(h)?),
            b3: read_vec(1)?[0],
            leak,
        };
        let mut rest = Vec::new();
        r.read_to_end(&mut rest).map_err(io)?;
        if !rest.is_empty() {
            return Err(bad("trailing bytes after last tensor"));
        }
        generator.validate(dims)?;
        discriminator.validate(dims)?;
        Ok(Self {
            dims,
            leak,
            seed,
            iteration,
            generator,
            discriminator,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| AtmError::io(path, e))?;
        self.write_to(BufWriter::new(file))
            .map_err(|e| AtmError::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| AtmError::io(path, e))?;
        Self::read_from(BufReader::new(file))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::init_params;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sample() -> Checkpoint {
        let dims = NetworkDims {
            topics: 3,
            embed: 4,
            vocab: 7,
            hidden: 5,
        };
        let (mut g, d) = init_params(dims, 0.2, &mut ChaCha8Rng::seed_from_u64(8)).unwrap();
        g.bn_running_mean.fill(0.1 + 1e-17);
        g.bn_running_var.mapv_inplace(|v| v / 3.0);
        Checkpoint::new(g, d, 42, 17).unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let ck = sample();
        let mut buf = Vec::new();
        ck.write_to(&mut buf).unwrap();
        let back = Checkpoint::read_from(buf.as_slice()).unwrap();
        assert_eq!(back, ck);
        let mut again = Vec::new();
        back.write_to(&mut again).unwrap();
        assert_eq!(buf, again);
    }

    #[test]
    fn rejects_corruption() {
        let ck = sample();
        let mut buf = Vec::new();
        ck.write_to(&mut buf).unwrap();
        assert!(Checkpoint::read_from(&buf[..buf.len() - 3]).is_err());
        let mut wrong = buf.clone();
        wrong[0] = b'X';
        assert!(Checkpoint::read_from(wrong.as_slice()).is_err());
        let mut longer = buf;
        longer.push(0);
        assert!(Checkpoint::read_from(longer.as_slice()).is_err());
    }
}
