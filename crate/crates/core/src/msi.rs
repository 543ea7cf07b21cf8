//! Multiband image model on a common finest grid, plus the percentile
//! normalization applied at pipeline entry and undone at exit.
//!
//! Rasters are stored row-major. A band with downsampling factor `L` has
//! `finest_rows / L` rows and `finest_cols / L` columns.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A row-major 2-D raster of real samples.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Grid {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows * cols != data.len() {
            return Err(Error::dim(format!(
                "grid {rows}x{cols} needs {} samples, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Grid { rows, cols, data })
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Grid {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::filled(rows, cols, 0.0)
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Grid { rows, cols, data }
    }

    /// Builds a grid from nested rows; panics on ragged input (test helper).
    pub fn from_rows(rows: &[&[f64]]) -> Self {
        let cols = rows.first().map_or(0, |r| r.len());
        assert!(rows.iter().all(|r| r.len() == cols), "ragged rows");
        Grid {
            rows: rows.len(),
            cols,
            data: rows.iter().flat_map(|r| r.iter().copied()).collect(),
        }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Grid {
        Grid {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Grid, f: impl Fn(f64, f64) -> f64) -> Result<Grid> {
        self.ensure_same_shape(other)?;
        Ok(Grid {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn ensure_shape(&self, rows: usize, cols: usize) -> Result<()> {
        if self.rows != rows || self.cols != cols {
            return Err(Error::dim(format!(
                "expected {rows}x{cols} raster, got {}x{}",
                self.rows, self.cols
            )));
        }
        Ok(())
    }

    pub fn ensure_same_shape(&self, other: &Grid) -> Result<()> {
        self.ensure_shape(other.rows, other.cols)
    }

    pub fn dot(&self, other: &Grid) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.data
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }
}

/// One spectral band with its downsampling factor relative to the finest grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Band {
    pub grid: Grid,
    pub factor: usize,
}

impl Band {
    pub fn new(grid: Grid, factor: usize) -> Self {
        Band { grid, factor }
    }

    pub fn rows(&self) -> usize {
        self.grid.rows()
    }

    pub fn cols(&self) -> usize {
        self.grid.cols()
    }
}

/// An ordered stack of co-registered bands.
#[derive(Debug, Clone, PartialEq)]
pub struct MultispectralImage {
    pub finest_rows: usize,
    pub finest_cols: usize,
    pub bands: Vec<Band>,
    pub band_names: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<String>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn into_result(self) -> Result<()> {
        if self.is_ok() {
            Ok(())
        } else {
            Err(Error::Validation(self.violations))
        }
    }
}

impl MultispectralImage {
    pub fn new(
        finest_rows: usize,
        finest_cols: usize,
        bands: Vec<Band>,
        band_names: Vec<String>,
    ) -> Self {
        MultispectralImage {
            finest_rows,
            finest_cols,
            bands,
            band_names,
        }
    }

    /// Names bands `B0`, `B1`, ...
    pub fn with_default_names(finest_rows: usize, finest_cols: usize, bands: Vec<Band>) -> Self {
        let names = (0..bands.len()).map(|i| format!("B{i}")).collect();
        Self::new(finest_rows, finest_cols, bands, names)
    }

    pub fn num_bands(&self) -> usize {
        self.bands.len()
    }

    pub fn num_pixels(&self) -> usize {
        self.finest_rows * self.finest_cols
    }

    pub fn factors(&self) -> Vec<usize> {
        self.bands.iter().map(|b| b.factor).collect()
    }

    /// Distinct downsampling factors in ascending order.
    pub fn distinct_factors(&self) -> Vec<usize> {
        let mut f = self.factors();
        f.sort_unstable();
        f.dedup();
        f
    }

    pub fn band_index(&self, name: &str) -> Option<usize> {
        self.band_names.iter().position(|n| n == name)
    }

    pub fn validate(&self) -> ValidationReport {
        let mut violations = Vec::new();
        if self.band_names.len() != self.bands.len() {
            violations.push(format!(
                "{} band names for {} bands",
                self.band_names.len(),
                self.bands.len()
            ));
        }
        if self.bands.len() < 2 {
            violations.push(format!("need at least 2 bands, got {}", self.bands.len()));
        }
        if self.finest_rows == 0 || self.finest_cols == 0 {
            violations.push("empty finest grid".to_string());
        }
        if !self.bands.is_empty() && !self.bands.iter().any(|b| b.factor == 1) {
            violations.push("no full-resolution band (L=1)".to_string());
        }
        for (i, band) in self.bands.iter().enumerate() {
            let name = self.band_names.get(i).map_or("?", |s| s.as_str());
            let l = band.factor;
            if l == 0 {
                violations.push(format!("band {name}: factor L must be positive"));
                continue;
            }
            if band.grid.is_empty() {
                violations.push(format!("band {name}: empty band"));
            }
            if self.finest_rows % l != 0 || self.finest_cols % l != 0 {
                violations.push(format!(
                    "dims {}x{} not divisible by L={l} (band {name})",
                    self.finest_rows, self.finest_cols
                ));
            } else if band.rows() != self.finest_rows / l || band.cols() != self.finest_cols / l {
                violations.push(format!(
                    "band {name}: {}x{} does not match {}x{} at L={l}",
                    band.rows(),
                    band.cols(),
                    self.finest_rows / l,
                    self.finest_cols / l
                ));
            }
            if let Some(pos) = band.grid.as_slice().iter().position(|v| !v.is_finite()) {
                violations.push(format!("band {name}: non-finite value at index {pos}"));
            }
        }
        ValidationReport { violations }
    }

    pub fn ensure_valid(&self) -> Result<()> {
        self.validate().into_result()
    }

    /// N_p x N_b matrix whose column `i` is band `i` rasterized row-major.
    /// Requires every band to be at full resolution.
    pub fn to_stack(&self) -> Result<DMatrix<f64>> {
        let np = self.num_pixels();
        let mut stack = DMatrix::zeros(np, self.num_bands());
        for (i, band) in self.bands.iter().enumerate() {
            band.grid.ensure_shape(self.finest_rows, self.finest_cols)?;
            stack.column_mut(i).copy_from_slice(band.grid.as_slice());
        }
        Ok(stack)
    }

    /// Inverse of [`to_stack`](Self::to_stack); every band gets `L = 1`.
    pub fn from_stack(
        stack: &DMatrix<f64>,
        rows: usize,
        cols: usize,
        band_names: Vec<String>,
    ) -> Result<Self> {
        if stack.nrows() != rows * cols || stack.ncols() != band_names.len() {
            return Err(Error::dim(format!(
                "stack {}x{} does not match {rows}x{cols} grid with {} bands",
                stack.nrows(),
                stack.ncols(),
                band_names.len()
            )));
        }
        let bands = (0..stack.ncols())
            .map(|i| Band::new(Grid::new(rows, cols, stack.column(i).as_slice().to_vec()).unwrap(), 1))
            .collect();
        Ok(Self::new(rows, cols, bands, band_names))
    }
}

/// 2nd and 98th percentile of one measured band.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormParams {
    pub p2: f64,
    pub p98: f64,
}

impl NormParams {
    /// Affine scale; 1 when the percentile range collapses.
    pub fn scale(&self) -> f64 {
        let s = self.p98 - self.p2;
        if s > 0.0 {
            s
        } else {
            1.0
        }
    }
}

/// Linear-interpolation percentile at rank `p/100 * (n-1)` of the sorted sample.
pub fn percentile(values: &[f64], p: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::invalid("empty sample"));
    }
    if !(0.0..=100.0).contains(&p) {
        return Err(Error::invalid(format!("percentile {p} outside [0, 100]")));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("non-finite sample"));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(percentile_sorted(&sorted, p))
}

fn percentile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    let rank = p / 100.0 * (n - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    let frac = rank - lo as f64;
    if frac == 0.0 {
        sorted[lo]
    } else {
        sorted[lo] + frac * (sorted[hi] - sorted[lo])
    }
}

pub fn norm_params(grid: &Grid) -> Result<NormParams> {
    let mut sorted = grid.as_slice().to_vec();
    if sorted.is_empty() {
        return Err(Error::invalid("empty sample"));
    }
    sorted.sort_by(f64::total_cmp);
    Ok(NormParams {
        p2: percentile_sorted(&sorted, 2.0),
        p98: percentile_sorted(&sorted, 98.0),
    })
}

/// `(band - p2) / (p98 - p2)` with no clipping; a collapsed range uses scale 1.
pub fn normalize_band(band: &Band) -> Result<(Band, NormParams)> {
    let params = norm_params(&band.grid)?;
    Ok((apply_normalization(band, params), params))
}

pub fn apply_normalization(band: &Band, params: NormParams) -> Band {
    let scale = params.scale();
    Band::new(band.grid.map(|v| (v - params.p2) / scale), band.factor)
}

pub fn denormalize_band(band: &Band, params: NormParams) -> Band {
    let scale = params.scale();
    Band::new(band.grid.map(|v| scale * v + params.p2), band.factor)
}

/// Normalizes every band with its own percentiles.
pub fn normalize_image(msi: &MultispectralImage) -> Result<(MultispectralImage, Vec<NormParams>)> {
    let mut bands = Vec::with_capacity(msi.num_bands());
    let mut params = Vec::with_capacity(msi.num_bands());
    for band in &msi.bands {
        let (b, p) = normalize_band(band)?;
        bands.push(b);
        params.push(p);
    }
    Ok((
        MultispectralImage::new(msi.finest_rows, msi.finest_cols, bands, msi.band_names.clone()),
        params,
    ))
}
