//! Low-frequency 2-D DCT basis for the smooth background layer.
//!
//! A block of `N x N` pixels is vectorized row-major: pixel `(x, y)` with
//! `x` the row and `y` the column lands at index `x * N + y`. Every other
//! module (difference operators, segmenter) uses the same order.
//!
//! Basis functions use orthonormal DCT-II scaling,
//!
//! ```text
//! P_uv(x, y) = b(u) b(v) cos((2x + 1) pi u / 2N) cos((2y + 1) pi v / 2N)
//! b(0) = sqrt(1/N),  b(u > 0) = sqrt(2/N)
//! ```
//!
//! so the columns of the assembled matrix are orthonormal.

use std::f64::consts::PI;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Block size and number of retained bases.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BasisSpec {
    block_size: usize,
    num_bases: usize,
}

impl BasisSpec {
    pub const DEFAULT_BLOCK_SIZE: usize = 64;
    pub const DEFAULT_NUM_BASES: usize = 20;

    pub fn new(block_size: usize, num_bases: usize) -> Result<Self> {
        if block_size == 0 {
            return Err(Error::Config("block size must be positive".into()));
        }
        if num_bases == 0 || num_bases > block_size * block_size {
            return Err(Error::Config(format!(
                "number of bases must be in 1..={} for block size {block_size}, got {num_bases}",
                block_size * block_size
            )));
        }
        Ok(Self {
            block_size,
            num_bases,
        })
    }

    pub fn block_size(&self) -> usize {
        self.block_size
    }

    pub fn num_bases(&self) -> usize {
        self.num_bases
    }

    /// Pixels per block, `N^2`.
    pub fn block_len(&self) -> usize {
        self.block_size * self.block_size
    }
}

impl Default for BasisSpec {
    fn default() -> Self {
        Self {
            block_size: Self::DEFAULT_BLOCK_SIZE,
            num_bases: Self::DEFAULT_NUM_BASES,
        }
    }
}

/// First `count` frequency pairs `(u, v)` of the JPEG zig-zag scan over an
/// `N x N` frequency grid.
///
/// The scan starts `(0,0) -> (0,1) -> (1,0) -> (2,0)` and alternates direction
/// on each anti-diagonal.
pub fn zigzag_frequencies(block_size: usize, count: usize) -> Result<Vec<(usize, usize)>> {
    BasisSpec::new(block_size, count)?;
    let n = block_size;
    let mut out = Vec::with_capacity(count);
    'diagonals: for d in 0..(2 * n - 1) {
        let u_lo = d.saturating_sub(n - 1);
        let u_hi = d.min(n - 1);
        // odd diagonals walk u upwards, even ones downwards
        let us: Box<dyn Iterator<Item = usize>> = if d % 2 == 1 {
            Box::new(u_lo..=u_hi)
        } else {
            Box::new((u_lo..=u_hi).rev())
        };
        for u in us {
            out.push((u, d - u));
            if out.len() == count {
                break 'diagonals;
            }
        }
    }
    Ok(out)
}

/// `b(u) cos((2x + 1) pi u / 2N)` for one frequency, sampled at `x = 0..N`.
pub(crate) fn dct_profile(block_size: usize, u: usize) -> Vec<f64> {
    let n = block_size as f64;
    let beta = if u == 0 { (1.0 / n).sqrt() } else { (2.0 / n).sqrt() };
    (0..block_size)
        .map(|x| beta * ((2 * x + 1) as f64 * PI * u as f64 / (2.0 * n)).cos())
        .collect()
}

/// The `N^2 x K` matrix whose columns are vectorized DCT basis functions.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisMatrix {
    spec: BasisSpec,
    frequencies: Vec<(usize, usize)>,
    entries: DMatrix<f64>,
}

impl BasisMatrix {
    pub fn spec(&self) -> BasisSpec {
        self.spec
    }

    pub fn block_size(&self) -> usize {
        self.spec.block_size
    }

    pub fn num_bases(&self) -> usize {
        self.spec.num_bases
    }

    /// Frequency pair of each column, in column order.
    pub fn frequencies(&self) -> &[(usize, usize)] {
        &self.frequencies
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.entries
    }
}

/// Samples the first `K` zig-zag DCT basis functions into a dense matrix.
pub fn build_basis(spec: BasisSpec) -> BasisMatrix {
    let n = spec.block_size;
    let frequencies =
        zigzag_frequencies(n, spec.num_bases).expect("BasisSpec is validated on construction");
    let mut entries = DMatrix::zeros(n * n, spec.num_bases);
    for (k, &(u, v)) in frequencies.iter().enumerate() {
        let rows = dct_profile(n, u);
        let cols = dct_profile(n, v);
        let mut column = entries.column_mut(k);
        for (x, &cu) in rows.iter().enumerate() {
            for (y, &cv) in cols.iter().enumerate() {
                column[x * n + y] = cu * cv;
            }
        }
    }
    BasisMatrix {
        spec,
        frequencies,
        entries,
    }
}
