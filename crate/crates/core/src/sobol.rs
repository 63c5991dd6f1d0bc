//! Unscrambled Sobol low-discrepancy sequence.
//!
//! Direction numbers come from the embedded table in `assets/`. Point `n`
//! (n ≥ 1; index 0 is the origin) is `⊕_j [bit j of gray(n)] V_j`, which
//! reproduces the usual Gray-code enumeration order.

use std::sync::OnceLock;

use crate::error::{Error, Result};

const BITS: usize = 32;
const TABLE: &str = include_str!("../assets/sobol_directions.txt");

/// Largest supported dimension.
pub const MAX_DIM: usize = 32;

fn directions() -> &'static Vec<[u32; BITS]> {
    static DIRS: OnceLock<Vec<[u32; BITS]>> = OnceLock::new();
    DIRS.get_or_init(|| {
        let mut out = Vec::new();
        for line in TABLE.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let nums: Vec<u32> = line
                .split_whitespace()
                .map(|t| t.parse().expect("direction table holds integers"))
                .collect();
            let (s, a) = (nums[1] as usize, nums[2]);
            let mut v = [0u32; BITS];
            if s == 0 {
                for (i, vi) in v.iter_mut().enumerate() {
                    *vi = 1 << (BITS - 1 - i);
                }
            } else {
                for i in 0..s.min(BITS) {
                    v[i] = nums[3 + i] << (BITS - 1 - i);
                }
                for i in s..BITS {
                    let mut x = v[i - s] ^ (v[i - s] >> s);
                    for k in 1..s {
                        if (a >> (s - 1 - k)) & 1 == 1 {
                            x ^= v[i - k];
                        }
                    }
                    v[i] = x;
                }
            }
            out.push(v);
        }
        out
    })
}

/// Generator for one dimension count.
#[derive(Clone, Debug)]
pub struct Sobol {
    dim: usize,
}

impl Sobol {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 || dim > MAX_DIM.min(directions().len()) {
            return Err(Error::UnsupportedDimension(dim));
        }
        Ok(Sobol { dim })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Writes point `index` into `out` (length `dim`).
    pub fn point(&self, index: u64, out: &mut [f64]) {
        let g = (index ^ (index >> 1)) as u32;
        let dirs = directions();
        for (d, o) in out.iter_mut().enumerate().take(self.dim) {
            let mut x = 0u32;
            let mut bits = g;
            let mut j = 0;
            while bits != 0 {
                if bits & 1 == 1 {
                    x ^= dirs[d][j];
                }
                bits >>= 1;
                j += 1;
            }
            *o = x as f64 / 4294967296.0;
        }
    }
}

/// `count` points of dimension `dim`, starting at index `skip + 1`.
pub fn sobol_points(dim: usize, count: usize, skip: u64) -> Result<Vec<Vec<f64>>> {
    let gen = Sobol::new(dim)?;
    if skip + count as u64 >= 1 << BITS {
        return Err(Error::Data(format!(
            "Sobol index range exceeds 2^{BITS} ({skip} + {count})"
        )));
    }
    Ok((0..count as u64)
        .map(|i| {
            let mut p = vec![0.0; dim];
            gen.point(skip + 1 + i, &mut p);
            p
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_covers_all_dimensions() {
        assert_eq!(directions().len(), MAX_DIM);
        assert!(Sobol::new(0).is_err());
        assert!(Sobol::new(33).is_err());
    }

    #[test]
    fn first_dimension_is_van_der_corput_in_gray_order() {
        let p: Vec<f64> = sobol_points(1, 4, 0).unwrap().into_iter().map(|v| v[0]).collect();
        assert_eq!(p, vec![0.5, 0.75, 0.25, 0.375]);
    }
}
