//! On-disk image bundles: a `manifest.json` next to one raw little-endian
//! float32 file per band, plus 8-bit PNG export for viewing.

use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::msi::{percentile, Band, Grid, MultispectralImage};

pub const MANIFEST: &str = "manifest.json";
pub const BUNDLE_VERSION: u32 = 1;
pub const DTYPE: &str = "float32-le";
pub const LAYOUT: &str = "row-major";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BandEntry {
    pub name: String,
    #[serde(rename = "L")]
    pub factor: usize,
    pub rows: usize,
    pub cols: usize,
    pub file: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BundleManifest {
    pub version: u32,
    pub finest_rows: usize,
    pub finest_cols: usize,
    pub dtype: String,
    pub layout: String,
    pub bands: Vec<BandEntry>,
}

impl BundleManifest {
    /// Structural checks that do not touch the band files.
    pub fn validate(&self) -> Result<()> {
        let mut v = Vec::new();
        if self.version != BUNDLE_VERSION {
            v.push(format!("unsupported version {} (expected {BUNDLE_VERSION})", self.version));
        }
        if self.dtype != DTYPE {
            v.push(format!("unknown dtype '{}' (expected {DTYPE})", self.dtype));
        }
        if self.layout != LAYOUT {
            v.push(format!("unknown layout '{}' (expected {LAYOUT})", self.layout));
        }
        for b in &self.bands {
            if b.factor == 0 {
                v.push(format!("band {}: L must be positive", b.name));
                continue;
            }
            if b.rows * b.factor != self.finest_rows || b.cols * b.factor != self.finest_cols {
                v.push(format!(
                    "band {}: {}x{} at L={} does not cover the finest grid {}x{}",
                    b.name, b.rows, b.cols, b.factor, self.finest_rows, self.finest_cols
                ));
            }
            if b.file.is_empty() || b.file.contains(['/', '\\']) || b.file == ".." {
                v.push(format!("band {}: file '{}' must be a plain file name", b.name, b.file));
            }
        }
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(v))
        }
    }
}

fn band_file_name(index: usize, name: &str) -> String {
    let clean: String = name
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect();
    format!("{index:02}_{clean}.f32")
}

/// Writes the manifest and band files; identical images give identical bytes.
pub fn write_bundle(msi: &MultispectralImage, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    msi.ensure_valid()?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut entries = Vec::with_capacity(msi.num_bands());
    for (i, band) in msi.bands.iter().enumerate() {
        let file = band_file_name(i, &msi.band_names[i]);
        let bytes: Vec<u8> = band
            .grid
            .as_slice()
            .iter()
            .flat_map(|&v| (v as f32).to_le_bytes())
            .collect();
        let path = dir.join(&file);
        fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        entries.push(BandEntry {
            name: msi.band_names[i].clone(),
            factor: band.factor,
            rows: band.rows(),
            cols: band.cols(),
            file,
        });
    }
    let manifest = BundleManifest {
        version: BUNDLE_VERSION,
        finest_rows: msi.finest_rows,
        finest_cols: msi.finest_cols,
        dtype: DTYPE.to_string(),
        layout: LAYOUT.to_string(),
        bands: entries,
    };
    let path = dir.join(MANIFEST);
    let mut text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Format {
        path: path.clone(),
        message: e.to_string(),
    })?;
    text.push('\n');
    fs::write(&path, text).map_err(|e| Error::io(&path, e))
}

pub fn read_manifest(dir: impl AsRef<Path>) -> Result<BundleManifest> {
    let path = dir.as_ref().join(MANIFEST);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Format {
        path,
        message: e.to_string(),
    })
}

/// Loads and validates a bundle, widening samples to double precision.
pub fn read_bundle(dir: impl AsRef<Path>) -> Result<MultispectralImage> {
    let dir = dir.as_ref();
    let manifest = read_manifest(dir)?;
    manifest.validate()?;
    let mut bands = Vec::with_capacity(manifest.bands.len());
    for entry in &manifest.bands {
        let path = dir.join(&entry.file);
        let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        let expected = entry.rows * entry.cols * 4;
        if bytes.len() != expected {
            return Err(Error::Format {
                path,
                message: format!(
                    "band {}: expected {expected} bytes, found {}",
                    entry.name,
                    bytes.len()
                ),
            });
        }
        let data = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect();
        bands.push(Band::new(Grid::new(entry.rows, entry.cols, data)?, entry.factor));
    }
    let names = manifest.bands.iter().map(|b| b.name.clone()).collect();
    let msi = MultispectralImage::new(manifest.finest_rows, manifest.finest_cols, bands, names);
    msi.ensure_valid()?;
    Ok(msi)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Stretch {
    /// 2nd percentile to 0, 98th to 255.
    #[default]
    #[serde(rename = "p2p98")]
    P2P98,
    #[serde(rename = "minmax")]
    MinMax,
}

impl FromStr for Stretch {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "p2p98" => Ok(Stretch::P2P98),
            "minmax" => Ok(Stretch::MinMax),
            other => Err(Error::invalid(format!("unknown stretch '{other}' (p2p98|minmax)"))),
        }
    }
}

/// Affine map of the band to 0..=255 with clipping; a collapsed range maps to 0.
pub fn stretch_to_u8(grid: &Grid, stretch: Stretch) -> Result<Vec<u8>> {
    if grid.as_slice().iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("cannot export a band with non-finite values"));
    }
    let (lo, hi) = match stretch {
        Stretch::MinMax => grid.min_max(),
        Stretch::P2P98 => (percentile(grid.as_slice(), 2.0)?, percentile(grid.as_slice(), 98.0)?),
    };
    let span = hi - lo;
    Ok(grid
        .as_slice()
        .iter()
        .map(|&v| {
            if span > 0.0 {
                ((v - lo) / span * 255.0).round().clamp(0.0, 255.0) as u8
            } else {
                0
            }
        })
        .collect())
}

/// Writes an 8-bit grayscale PNG.
pub fn export_png(grid: &Grid, path: impl AsRef<Path>, stretch: Stretch) -> Result<()> {
    let path = path.as_ref();
    let pixels = stretch_to_u8(grid, stretch)?;
    let img = image::GrayImage::from_raw(grid.cols() as u32, grid.rows() as u32, pixels)
        .ok_or_else(|| Error::dim("raster size does not match its buffer"))?;
    img.save_with_format(path, image::ImageFormat::Png).map_err(|e| match e {
        image::ImageError::IoError(io) => Error::io(path, io),
        other => Error::Format {
            path: path.to_path_buf(),
            message: other.to_string(),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> MultispectralImage {
        let bands = vec![
            Band::new(Grid::from_fn(4, 6, |r, c| (r * 6 + c) as f64 * 0.1), 1),
            Band::new(Grid::from_fn(2, 3, |r, c| 1.0 / (1 + r + c) as f64), 2),
        ];
        MultispectralImage::new(4, 6, bands, vec!["B02".into(), "B/05 nir".into()])
    }

    #[test]
    fn round_trip_is_float32_exact() {
        let dir = tempfile::tempdir().unwrap();
        let msi = sample();
        write_bundle(&msi, dir.path()).unwrap();
        let back = read_bundle(dir.path()).unwrap();
        assert_eq!(back.band_names, msi.band_names);
        assert_eq!(back.factors(), msi.factors());
        for (a, b) in back.bands.iter().zip(&msi.bands) {
            for (x, y) in a.grid.as_slice().iter().zip(b.grid.as_slice()) {
                assert_eq!(*x, *y as f32 as f64);
            }
        }
        let m = read_manifest(dir.path()).unwrap();
        assert_eq!(m.bands[1].file, "01_B_05_nir.f32");
        assert_eq!(m.dtype, "float32-le");
    }

    #[test]
    fn writes_are_deterministic() {
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        write_bundle(&sample(), a.path()).unwrap();
        write_bundle(&sample(), b.path()).unwrap();
        for name in ["manifest.json", "00_B02.f32", "01_B_05_nir.f32"] {
            assert_eq!(
                fs::read(a.path().join(name)).unwrap(),
                fs::read(b.path().join(name)).unwrap()
            );
        }
    }

    #[test]
    fn truncated_band_file_names_the_band() {
        let dir = tempfile::tempdir().unwrap();
        write_bundle(&sample(), dir.path()).unwrap();
        let path = dir.path().join("01_B_05_nir.f32");
        let bytes = fs::read(&path).unwrap();
        fs::write(&path, &bytes[..bytes.len() - 4]).unwrap();
        let err = read_bundle(dir.path()).unwrap_err();
        assert!(err.to_string().contains("B/05 nir"), "{err}");
        assert_eq!(err.exit_code(), 4);
    }

    #[test]
    fn inconsistent_manifest_is_a_validation_error() {
        let dir = tempfile::tempdir().unwrap();
        write_bundle(&sample(), dir.path()).unwrap();
        let mut m = read_manifest(dir.path()).unwrap();
        m.bands[1].rows = 3;
        fs::write(dir.path().join(MANIFEST), serde_json::to_string(&m).unwrap()).unwrap();
        let err = read_bundle(dir.path()).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("does not cover"), "{err}");

        m.bands[1].rows = 2;
        m.dtype = "float64".into();
        fs::write(dir.path().join(MANIFEST), serde_json::to_string(&m).unwrap()).unwrap();
        assert!(read_bundle(dir.path()).unwrap_err().to_string().contains("dtype"));

        assert_eq!(read_bundle(dir.path().join("missing")).unwrap_err().exit_code(), 4);
        fs::write(dir.path().join(MANIFEST), "{").unwrap();
        assert_eq!(read_bundle(dir.path()).unwrap_err().exit_code(), 4);
    }

    #[test]
    fn stretch_rules() {
        let flat = Grid::filled(3, 3, 0.4);
        assert!(stretch_to_u8(&flat, Stretch::MinMax).unwrap().iter().all(|&v| v == 0));
        let ramp = Grid::from_fn(1, 101, |_, c| c as f64);
        let px = stretch_to_u8(&ramp, Stretch::P2P98).unwrap();
        assert_eq!(px[2], 0);
        assert_eq!(px[98], 255);
        assert_eq!(px[0], 0);
        assert_eq!(px[100], 255);
        let mm = stretch_to_u8(&ramp, Stretch::MinMax).unwrap();
        assert_eq!((mm[0], mm[100]), (0, 255));
    }

    #[test]
    fn png_export_writes_a_readable_image() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("b.png");
        let g = Grid::from_fn(5, 7, |r, c| (r + c) as f64);
        export_png(&g, &path, Stretch::MinMax).unwrap();
        let img = image::open(&path).unwrap().to_luma8();
        assert_eq!(img.dimensions(), (7, 5));
        assert_eq!(img.get_pixel(0, 0).0[0], 0);
        assert_eq!(img.get_pixel(6, 4).0[0], 255);
    }
}
