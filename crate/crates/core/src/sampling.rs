//! Block-average degradation, its adjoint and Gram operator, and the
//! Catmull-Rom bicubic upsampler.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::msi::Grid;

/// Averages non-overlapping `L x L` blocks of a full-resolution raster.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockAverageOp {
    factor: usize,
    hr_rows: usize,
    hr_cols: usize,
}

impl BlockAverageOp {
    pub fn new(factor: usize, hr_rows: usize, hr_cols: usize) -> Result<Self> {
        if factor == 0 {
            return Err(Error::invalid("downsampling factor must be positive"));
        }
        if hr_rows % factor != 0 || hr_cols % factor != 0 {
            return Err(Error::dim(format!(
                "dims {hr_rows}x{hr_cols} not divisible by L={factor}"
            )));
        }
        Ok(BlockAverageOp {
            factor,
            hr_rows,
            hr_cols,
        })
    }

    pub fn factor(&self) -> usize {
        self.factor
    }

    pub fn lr_shape(&self) -> (usize, usize) {
        (self.hr_rows / self.factor, self.hr_cols / self.factor)
    }

    pub fn hr_shape(&self) -> (usize, usize) {
        (self.hr_rows, self.hr_cols)
    }

    /// Sum of each block, accumulated in row-major order within the block.
    fn block_sums(&self, x: &Grid) -> Grid {
        let l = self.factor;
        let (lr_rows, lr_cols) = self.lr_shape();
        let mut out = Grid::zeros(lr_rows, lr_cols);
        out.as_mut_slice()
            .par_chunks_mut(lr_cols.max(1))
            .enumerate()
            .for_each(|(br, row)| {
                for (bc, slot) in row.iter_mut().enumerate() {
                    let mut s = 0.0;
                    for r in br * l..(br + 1) * l {
                        for c in bc * l..(bc + 1) * l {
                            s += x.get(r, c);
                        }
                    }
                    *slot = s;
                }
            });
        out
    }

    fn replicate(&self, y: &Grid, scale: f64) -> Grid {
        let l = self.factor;
        let mut out = Grid::zeros(self.hr_rows, self.hr_cols);
        out.as_mut_slice()
            .par_chunks_mut(self.hr_cols.max(1))
            .enumerate()
            .for_each(|(r, row)| {
                for (c, slot) in row.iter_mut().enumerate() {
                    *slot = y.get(r / l, c / l) / scale;
                }
            });
        out
    }

    /// `A x`: each output pixel is the mean of its source block.
    pub fn apply(&self, x: &Grid) -> Result<Grid> {
        x.ensure_shape(self.hr_rows, self.hr_cols)?;
        if self.factor == 1 {
            return Ok(x.clone());
        }
        let area = (self.factor * self.factor) as f64;
        Ok(self.block_sums(x).map(|s| s / area))
    }

    /// `A^T y`: each low-resolution value spread over its block, divided by `L^2`.
    pub fn adjoint(&self, y: &Grid) -> Result<Grid> {
        let (lr_rows, lr_cols) = self.lr_shape();
        y.ensure_shape(lr_rows, lr_cols)?;
        if self.factor == 1 {
            return Ok(y.clone());
        }
        Ok(self.replicate(y, (self.factor * self.factor) as f64))
    }

    /// `A^T A x` in one pass: block mean divided by `L^2`, broadcast back.
    pub fn gram(&self, x: &Grid) -> Result<Grid> {
        x.ensure_shape(self.hr_rows, self.hr_cols)?;
        if self.factor == 1 {
            return Ok(x.clone());
        }
        let area = (self.factor * self.factor) as f64;
        let means = self.block_sums(x).map(|s| s / area);
        Ok(self.replicate(&means, area))
    }
}

/// Catmull-Rom bicubic upsampling by an integer factor with pixel-area
/// alignment and mirror boundaries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BicubicUpsampleOp {
    factor: usize,
    lr_rows: usize,
    lr_cols: usize,
}

const CATMULL_ROM_A: f64 = -0.5;

pub(crate) fn cubic_weight(x: f64) -> f64 {
    let a = CATMULL_ROM_A;
    let x = x.abs();
    if x <= 1.0 {
        ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0
    } else if x < 2.0 {
        ((a * x - 5.0 * a) * x + 8.0 * a) * x - 4.0 * a
    } else {
        0.0
    }
}

/// Mirror reflection without repeating the edge sample: `-1 -> 1`, `n -> n-2`.
pub(crate) fn reflect_index(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let m = i.rem_euclid(period);
    if m >= n as isize {
        (period - m) as usize
    } else {
        m as usize
    }
}

/// Four source indices and weights for every output sample along one axis.
fn axis_taps(n_in: usize, factor: usize) -> Vec<([usize; 4], [f64; 4])> {
    let n_out = n_in * factor;
    (0..n_out)
        .map(|i| {
            let s = (i as f64 + 0.5) / factor as f64 - 0.5;
            let base = s.floor();
            let t = s - base;
            let base = base as isize;
            let idx = [
                reflect_index(base - 1, n_in),
                reflect_index(base, n_in),
                reflect_index(base + 1, n_in),
                reflect_index(base + 2, n_in),
            ];
            let w = [
                cubic_weight(t + 1.0),
                cubic_weight(t),
                cubic_weight(1.0 - t),
                cubic_weight(2.0 - t),
            ];
            (idx, w)
        })
        .collect()
}

impl BicubicUpsampleOp {
    pub fn new(factor: usize, lr_rows: usize, lr_cols: usize) -> Result<Self> {
        if factor == 0 {
            return Err(Error::invalid("upsampling factor must be positive"));
        }
        Ok(BicubicUpsampleOp {
            factor,
            lr_rows,
            lr_cols,
        })
    }

    pub fn factor(&self) -> usize {
        self.factor
    }

    pub fn apply(&self, y: &Grid) -> Result<Grid> {
        y.ensure_shape(self.lr_rows, self.lr_cols)?;
        if self.factor == 1 {
            return Ok(y.clone());
        }
        let hr_rows = self.lr_rows * self.factor;
        let hr_cols = self.lr_cols * self.factor;
        let col_taps = axis_taps(self.lr_cols, self.factor);
        let row_taps = axis_taps(self.lr_rows, self.factor);

        // horizontal pass: lr_rows x hr_cols
        let mut tmp = Grid::zeros(self.lr_rows, hr_cols);
        tmp.as_mut_slice()
            .par_chunks_mut(hr_cols)
            .enumerate()
            .for_each(|(r, row)| {
                for (slot, (idx, w)) in row.iter_mut().zip(&col_taps) {
                    *slot = w[0] * y.get(r, idx[0])
                        + w[1] * y.get(r, idx[1])
                        + w[2] * y.get(r, idx[2])
                        + w[3] * y.get(r, idx[3]);
                }
            });

        let mut out = Grid::zeros(hr_rows, hr_cols);
        out.as_mut_slice()
            .par_chunks_mut(hr_cols)
            .zip(row_taps.par_iter())
            .for_each(|(row, (idx, w))| {
                for (c, slot) in row.iter_mut().enumerate() {
                    *slot = w[0] * tmp.get(idx[0], c)
                        + w[1] * tmp.get(idx[1], c)
                        + w[2] * tmp.get(idx[2], c)
                        + w[3] * tmp.get(idx[3], c);
                }
            });
        Ok(out)
    }
}

/// `B A x`, the low-pass used by residual correction.
pub fn lowpass(x: &Grid, factor: usize) -> Result<Grid> {
    let down = BlockAverageOp::new(factor, x.rows(), x.cols())?;
    let (lr_rows, lr_cols) = down.lr_shape();
    let up = BicubicUpsampleOp::new(factor, lr_rows, lr_cols)?;
    up.apply(&down.apply(x)?)
}

/// Convenience: downsample a full-resolution raster by `factor`.
pub fn block_average(x: &Grid, factor: usize) -> Result<Grid> {
    BlockAverageOp::new(factor, x.rows(), x.cols())?.apply(x)
}

/// Convenience: bicubic upsample a raster by `factor`.
pub fn bicubic_upsample(y: &Grid, factor: usize) -> Result<Grid> {
    BicubicUpsampleOp::new(factor, y.rows(), y.cols())?.apply(y)
}
