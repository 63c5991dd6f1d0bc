//! Binary checkpoints.
//!
//! Layout, all integers and floats little-endian:
//!
//! ```text
//! magic   8 bytes  "MAAPNNCK"
//! version u32      1
//! hidden  u8       0 = tanh, 1 = identity
//! output  u8       0 = exp_negative, 1 = identity
//! layers  u32, then one u64 per layer width
//! step    u64
//! rng     32-byte ChaCha seed, u64 stream, u128 word position
//! theta   u64 length, f64 values
//! m, v    Adam moments, same encoding as theta
//! best    f64 loss, then parameters encoded as theta
//! ```
//!
//! Floats are stored by bit pattern, so a save/load cycle is exact.

use std::fs;
use std::path::Path;

use super::mlp::{HiddenActivation, NetworkSpec, OutputActivation, ParameterVector};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"MAAPNNCK";
const VERSION: u32 = 1;

/// State of a ChaCha generator: seed, stream and word position.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct RngState {
    pub seed: [u8; 32],
    pub stream: u64,
    pub word_pos: u128,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub spec: NetworkSpec,
    pub theta: ParameterVector,
    pub step: u64,
    pub rng: RngState,
    pub adam_m: Vec<f64>,
    pub adam_v: Vec<f64>,
    pub best_loss: f64,
    pub best_theta: ParameterVector,
}

fn put_floats(out: &mut Vec<u8>, v: &[f64]) {
    out.extend_from_slice(&(v.len() as u64).to_le_bytes());
    for x in v {
        out.extend_from_slice(&x.to_bits().to_le_bytes());
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::Checkpoint(format!("truncated at byte {}", self.pos)));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.array()?))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.array()?))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_bits(self.u64()?))
    }

    fn floats(&mut self) -> Result<Vec<f64>> {
        let n = self.u64()? as usize;
        if n > (self.buf.len() - self.pos) / 8 {
            return Err(Error::Checkpoint(format!("vector length {n} exceeds file size")));
        }
        (0..n).map(|_| self.f64()).collect()
    }
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(64 + 32 * self.theta.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.push(match self.spec.hidden_activation {
            HiddenActivation::Tanh => 0,
            HiddenActivation::Identity => 1,
        });
        out.push(match self.spec.output_activation {
            OutputActivation::ExpNegative => 0,
            OutputActivation::Identity => 1,
        });
        out.extend_from_slice(&(self.spec.layer_widths.len() as u32).to_le_bytes());
        for &w in &self.spec.layer_widths {
            out.extend_from_slice(&(w as u64).to_le_bytes());
        }
        out.extend_from_slice(&self.step.to_le_bytes());
        out.extend_from_slice(&self.rng.seed);
        out.extend_from_slice(&self.rng.stream.to_le_bytes());
        out.extend_from_slice(&self.rng.word_pos.to_le_bytes());
        put_floats(&mut out, self.theta.as_slice());
        put_floats(&mut out, &self.adam_m);
        put_floats(&mut out, &self.adam_v);
        out.extend_from_slice(&self.best_loss.to_bits().to_le_bytes());
        put_floats(&mut out, self.best_theta.as_slice());
        out
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self> {
        let mut r = Reader { buf, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(Error::Checkpoint("not a checkpoint file (bad magic)".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        let hidden = match r.u8()? {
            0 => HiddenActivation::Tanh,
            1 => HiddenActivation::Identity,
            b => return Err(Error::Checkpoint(format!("unknown hidden activation code {b}"))),
        };
        let output = match r.u8()? {
            0 => OutputActivation::ExpNegative,
            1 => OutputActivation::Identity,
            b => return Err(Error::Checkpoint(format!("unknown output activation code {b}"))),
        };
        let layers = r.u32()? as usize;
        if layers > 1024 {
            return Err(Error::Checkpoint(format!("implausible layer count {layers}")));
        }
        let widths = (0..layers).map(|_| r.u64().map(|w| w as usize)).collect::<Result<Vec<_>>>()?;
        let mut spec = NetworkSpec::new(widths, output).map_err(|e| Error::Checkpoint(e.to_string()))?;
        spec.hidden_activation = hidden;
        let step = r.u64()?;
        let rng = RngState {
            seed: r.array()?,
            stream: r.u64()?,
            word_pos: u128::from_le_bytes(r.array()?),
        };
        let theta = ParameterVector::from_flat(&spec, r.floats()?).map_err(|e| Error::Checkpoint(e.to_string()))?;
        let adam_m = r.floats()?;
        let adam_v = r.floats()?;
        if adam_m.len() != theta.len() || adam_v.len() != theta.len() {
            return Err(Error::Checkpoint("moment vectors do not match the parameters".into()));
        }
        let best_loss = r.f64()?;
        let best_theta =
            ParameterVector::from_flat(&spec, r.floats()?).map_err(|e| Error::Checkpoint(e.to_string()))?;
        if r.pos != buf.len() {
            return Err(Error::Checkpoint(format!("{} trailing bytes", buf.len() - r.pos)));
        }
        Ok(Checkpoint {
            spec,
            theta,
            step,
            rng,
            adam_m,
            adam_v,
            best_loss,
            best_theta,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::init_network;

    fn sample() -> Checkpoint {
        let spec = NetworkSpec::new(vec![3, 4, 1], OutputActivation::ExpNegative).unwrap();
        let theta = init_network(&spec, 5).unwrap();
        let n = theta.len();
        Checkpoint {
            spec,
            best_theta: theta.clone(),
            theta,
            step: 42,
            rng: RngState {
                seed: [7; 32],
                stream: 3,
                word_pos: 1 << 70,
            },
            adam_m: (0..n).map(|i| i as f64 * 1e-3).collect(),
            adam_v: vec![f64::MIN_POSITIVE; n],
            best_loss: 0.125,
        }
    }

    #[test]
    fn round_trip_is_exact() {
        let c = sample();
        let back = Checkpoint::from_bytes(&c.to_bytes()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.to_bytes(), c.to_bytes());
    }

    #[test]
    fn corrupt_input_is_rejected() {
        let bytes = sample().to_bytes();
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 3]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(Checkpoint::from_bytes(&bad).is_err());
        let mut extra = bytes;
        extra.push(0);
        assert!(Checkpoint::from_bytes(&extra).is_err());
    }
}
