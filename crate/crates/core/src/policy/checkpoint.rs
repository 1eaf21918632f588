//! Binary model checkpoints.
//!
//! All integers and floats are little-endian.
//!
//! ```text
//! magic        8 bytes   b"RIFRLCKP"
//! version      u32       1
//! config_hash  u64       digest of the run configuration
//! episode      u64       episode index the model was taken at
//! n_layers     u32
//! per layer:
//!   inputs     u32
//!   outputs    u32
//!   activation u8        0 identity, 1 relu, 2 leaky relu, 3 tanh
//!   slope      f64       leaky-ReLU slope, 0 otherwise
//!   weights    f64 x outputs*inputs, row-major
//!   bias       f64 x outputs
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::mlp::{Activation, DenseLayer, MlpParams};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"RIFRLCKP";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub config_hash: u64,
    pub episode: u64,
    pub params: MlpParams,
}

fn activation_code(a: Activation) -> (u8, f64) {
    match a {
        Activation::Identity => (0, 0.0),
        Activation::Relu => (1, 0.0),
        Activation::LeakyRelu { slope } => (2, slope),
        Activation::Tanh => (3, 0.0),
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::Checkpoint("truncated file".into()))?;
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let bytes = self.take(n.checked_mul(8).ok_or_else(|| Error::Checkpoint("size overflow".into()))?)?;
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(32 + self.params.n_params() * 8);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&self.config_hash.to_le_bytes());
        out.extend_from_slice(&self.episode.to_le_bytes());
        out.extend_from_slice(&(self.params.layers.len() as u32).to_le_bytes());
        for layer in &self.params.layers {
            let (code, slope) = activation_code(layer.activation);
            out.extend_from_slice(&(layer.inputs as u32).to_le_bytes());
            out.extend_from_slice(&(layer.outputs as u32).to_le_bytes());
            out.push(code);
            out.extend_from_slice(&slope.to_le_bytes());
            for v in layer.weights.iter().chain(&layer.bias) {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self> {
        let mut r = Reader { buf, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(Error::Checkpoint("bad magic".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        let config_hash = r.u64()?;
        let episode = r.u64()?;
        let n_layers = r.u32()? as usize;
        let mut layers = Vec::with_capacity(n_layers.min(1024));
        for _ in 0..n_layers {
            let inputs = r.u32()? as usize;
            let outputs = r.u32()? as usize;
            let code = r.u8()?;
            let slope = f64::from_le_bytes(r.take(8)?.try_into().unwrap());
            let activation = match code {
                0 => Activation::Identity,
                1 => Activation::Relu,
                2 => Activation::LeakyRelu { slope },
                3 => Activation::Tanh,
                c => return Err(Error::Checkpoint(format!("unknown activation code {c}"))),
            };
            let weights = r.f64s(inputs * outputs)?;
            let bias = r.f64s(outputs)?;
            layers.push(DenseLayer {
                inputs,
                outputs,
                weights,
                bias,
                activation,
            });
        }
        if r.pos != buf.len() {
            return Err(Error::Checkpoint("trailing bytes".into()));
        }
        let params = MlpParams { layers };
        params
            .validate()
            .map_err(|e| Error::Checkpoint(e.to_string()))?;
        Ok(Self {
            config_hash,
            episode,
            params,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_layout() {
        let params = MlpParams::init(&[2, 3, 1], Activation::Relu, 0).unwrap();
        let ck = Checkpoint {
            config_hash: 0xDEAD_BEEF,
            episode: 42,
            params,
        };
        let bytes = ck.to_bytes();
        assert_eq!(&bytes[..8], b"RIFRLCKP");
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 1);
        assert_eq!(u64::from_le_bytes(bytes[12..20].try_into().unwrap()), 0xDEAD_BEEF);
        assert_eq!(u64::from_le_bytes(bytes[20..28].try_into().unwrap()), 42);
        assert_eq!(u32::from_le_bytes(bytes[28..32].try_into().unwrap()), 2);
        // header + 2 layer headers + (6 + 3 + 3 + 1) floats
        assert_eq!(bytes.len(), 32 + 2 * 17 + 13 * 8);
    }

    #[test]
    fn rejects_corruption() {
        let params = MlpParams::init(&[2, 3, 1], Activation::Relu, 0).unwrap();
        let bytes = Checkpoint {
            config_hash: 1,
            episode: 0,
            params,
        }
        .to_bytes();
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(Checkpoint::from_bytes(&bad).is_err());
        let mut extra = bytes;
        extra.push(0);
        assert!(Checkpoint::from_bytes(&extra).is_err());
    }

    proptest! {
        #[test]
        fn round_trip(sizes in prop::collection::vec(1usize..6, 2..5), seed in any::<u64>(),
                      slope in 0.0f64..0.5, episode in any::<u64>(), hash in any::<u64>()) {
            let params = MlpParams::init(&sizes, Activation::LeakyRelu { slope }, seed).unwrap();
            let ck = Checkpoint { config_hash: hash, episode, params };
            let back = Checkpoint::from_bytes(&ck.to_bytes()).unwrap();
            prop_assert_eq!(&back, &ck);
            let json: Checkpoint = serde_json::from_str(&ck.to_json().unwrap()).unwrap();
            prop_assert_eq!(json, ck);
        }
    }
}
