//! Metric depth maps and their 16-bit millimeter PNG encoding.

use std::path::Path;

use image::{ImageBuffer, Luma};

use crate::{Error, Grid, Result};

/// Per-pixel depth in meters; `None` marks a hole.
#[derive(Clone, Debug, PartialEq)]
pub struct DepthMap {
    values: Grid<Option<f64>>,
}

impl DepthMap {
    pub fn empty(width: usize, height: usize) -> DepthMap {
        DepthMap {
            values: Grid::new(width, height, None),
        }
    }

    pub fn from_grid(values: Grid<Option<f64>>) -> DepthMap {
        DepthMap { values }
    }

    pub fn grid(&self) -> &Grid<Option<f64>> {
        &self.values
    }

    pub fn grid_mut(&mut self) -> &mut Grid<Option<f64>> {
        &mut self.values
    }

    pub fn into_grid(self) -> Grid<Option<f64>> {
        self.values
    }

    pub fn width(&self) -> usize {
        self.values.width()
    }

    pub fn height(&self) -> usize {
        self.values.height()
    }

    pub fn dims(&self) -> (usize, usize) {
        self.values.dims()
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> Option<f64> {
        *self.values.get(x, y)
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, z: Option<f64>) {
        self.values.set(x, y, z);
    }

    pub fn valid_count(&self) -> usize {
        self.values.data().iter().filter(|v| v.is_some()).count()
    }

    pub fn iter_valid(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        let w = self.width();
        self.values
            .data()
            .iter()
            .enumerate()
            .filter_map(move |(i, v)| v.map(|z| (i % w, i / w, z)))
    }

    /// Millimeter encoding, 0 = invalid. Depths beyond 65.535 m saturate.
    pub fn to_millimeters(&self) -> Grid<u16> {
        self.values.map(|v| match v {
            Some(z) if *z > 0.0 => (z * 1000.0).round().clamp(1.0, 65535.0) as u16,
            _ => 0,
        })
    }

    pub fn from_millimeters(mm: &Grid<u16>) -> DepthMap {
        DepthMap {
            values: mm.map(|&v| (v != 0).then(|| v as f64 / 1000.0)),
        }
    }

    pub fn write_png(&self, path: &Path) -> Result<()> {
        write_png16(&self.to_millimeters(), path)
    }

    pub fn read_png(path: &Path) -> Result<DepthMap> {
        if !path.exists() {
            return Err(Error::MissingAsset(path.to_path_buf()));
        }
        let img = image::open(path).map_err(|e| Error::Image {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        let gray = img.to_luma16();
        let (w, h) = gray.dimensions();
        Ok(DepthMap::from_millimeters(&Grid::from_vec(
            w as usize,
            h as usize,
            gray.into_raw(),
        )))
    }
}

pub(crate) fn write_png16(grid: &Grid<u16>, path: &Path) -> Result<()> {
    let buf: ImageBuffer<Luma<u16>, Vec<u16>> =
        ImageBuffer::from_raw(grid.width() as u32, grid.height() as u32, grid.data().to_vec())
            .expect("buffer size matches dimensions");
    buf.save(path).map_err(|e| Error::Image {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// Writes an intensity image in [0, 1] as 8- or 16-bit grayscale PNG.
pub fn write_intensity_png(grid: &Grid<f32>, path: &Path, sixteen_bit: bool) -> Result<()> {
    if sixteen_bit {
        write_png16(&grid.map(|&v| (v.clamp(0.0, 1.0) * 65535.0).round() as u16), path)
    } else {
        let buf: ImageBuffer<Luma<u8>, Vec<u8>> = ImageBuffer::from_raw(
            grid.width() as u32,
            grid.height() as u32,
            grid.data().iter().map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8).collect(),
        )
        .expect("buffer size matches dimensions");
        buf.save(path).map_err(|e| Error::Image {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn millimeter_png_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.png");
        let mut d = DepthMap::empty(7, 5);
        d.set(1, 1, Some(1.2345));
        d.set(3, 4, Some(65.0));
        d.set(6, 0, Some(0.4));
        d.write_png(&path).unwrap();
        let back = DepthMap::read_png(&path).unwrap();
        assert_eq!(back.dims(), (7, 5));
        assert_eq!(back.get(1, 1), Some(1.235));
        assert_eq!(back.get(3, 4), Some(65.0));
        assert_eq!(back.get(6, 0), Some(0.4));
        assert_eq!(back.get(0, 0), None);
        assert_eq!(back.valid_count(), 3);
        assert_eq!(back.to_millimeters(), d.to_millimeters());
    }

    #[test]
    fn missing_file_names_path() {
        let err = DepthMap::read_png(Path::new("/nonexistent/bg.png")).unwrap_err();
        assert!(err.to_string().contains("/nonexistent/bg.png"));
    }
}
