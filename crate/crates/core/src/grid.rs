//! Dense row-major 2D container used for every image-like buffer.

use rayon::prelude::*;

#[derive(Clone, Debug, PartialEq)]
pub struct Grid<T> {
    width: usize,
    height: usize,
    data: Vec<T>,
}

impl<T: Clone> Grid<T> {
    pub fn new(width: usize, height: usize, fill: T) -> Self {
        Grid {
            width,
            height,
            data: vec![fill; width * height],
        }
    }
}

impl<T> Grid<T> {
    /// Wraps a row-major buffer. Panics if the length does not match.
    pub fn from_vec(width: usize, height: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), width * height, "grid buffer length mismatch");
        Grid {
            width,
            height,
            data,
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Grid {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> &T {
        &self.data[y * self.width + x]
    }

    #[inline]
    pub fn get_mut(&mut self, x: usize, y: usize) -> &mut T {
        &mut self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: T) {
        self.data[y * self.width + x] = value;
    }

    pub fn row(&self, y: usize) -> &[T] {
        &self.data[y * self.width..(y + 1) * self.width]
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn map<U>(&self, f: impl FnMut(&T) -> U) -> Grid<U> {
        Grid {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(f).collect(),
        }
    }
}

impl<T: Copy> Grid<T> {
    #[inline]
    pub fn at(&self, x: usize, y: usize) -> T {
        self.data[y * self.width + x]
    }

    pub fn transpose(&self) -> Grid<T> {
        let mut data = Vec::with_capacity(self.data.len());
        for x in 0..self.width {
            for y in 0..self.height {
                data.push(self.data[y * self.width + x]);
            }
        }
        Grid {
            width: self.height,
            height: self.width,
            data,
        }
    }

    /// Mirror left-right.
    pub fn flip_horizontal(&self) -> Grid<T> {
        Grid::from_fn(self.width, self.height, |x, y| {
            self.at(self.width - 1 - x, y)
        })
    }
}

impl<T: Send + Sync> Grid<T> {
    /// Builds a grid row by row in parallel.
    pub fn par_from_rows(
        width: usize,
        height: usize,
        f: impl Fn(usize, &mut [T]) + Sync + Send,
    ) -> Self
    where
        T: Default + Clone,
    {
        let mut data = vec![T::default(); width * height];
        if width > 0 {
            data.par_chunks_mut(width)
                .enumerate()
                .for_each(|(y, row)| f(y, row));
        }
        Grid {
            width,
            height,
            data,
        }
    }
}

impl Grid<f32> {
    /// Bilinear sample with pixel centers at integer coordinates; samples
    /// outside the grid read as zero.
    pub fn sample_bilinear(&self, x: f64, y: f64) -> f32 {
        if !(x.is_finite() && y.is_finite()) {
            return 0.0;
        }
        let x0 = x.floor();
        let y0 = y.floor();
        let fx = (x - x0) as f32;
        let fy = (y - y0) as f32;
        let xi = x0 as i64;
        let yi = y0 as i64;
        let w = self.width as i64;
        let h = self.height as i64;
        if xi < -1 || yi < -1 || xi >= w || yi >= h {
            return 0.0;
        }
        let fetch = |px: i64, py: i64| -> f32 {
            if px < 0 || py < 0 || px >= w || py >= h {
                0.0
            } else {
                self.data[py as usize * self.width + px as usize]
            }
        };
        let a = fetch(xi, yi);
        let b = fetch(xi + 1, yi);
        let c = fetch(xi, yi + 1);
        let d = fetch(xi + 1, yi + 1);
        let top = a + (b - a) * fx;
        let bottom = c + (d - c) * fx;
        top + (bottom - top) * fy
    }

    pub fn mean(&self) -> f64 {
        if self.data.is_empty() {
            return 0.0;
        }
        self.data.iter().map(|&v| v as f64).sum::<f64>() / self.data.len() as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bilinear_hits_pixel_centers_and_midpoints() {
        let g = Grid::from_vec(2, 2, vec![0.0f32, 1.0, 2.0, 3.0]);
        assert_eq!(g.sample_bilinear(0.0, 0.0), 0.0);
        assert_eq!(g.sample_bilinear(1.0, 1.0), 3.0);
        assert!((g.sample_bilinear(0.5, 0.5) - 1.5).abs() < 1e-6);
        assert_eq!(g.sample_bilinear(-5.0, 0.0), 0.0);
        // half a pixel outside fades towards zero
        assert!((g.sample_bilinear(-0.5, 0.0) - 0.0).abs() < 1e-6);
        assert!((g.sample_bilinear(1.5, 0.0) - 0.5).abs() < 1e-6);
    }

    #[test]
    fn transpose_roundtrip() {
        let g = Grid::from_fn(3, 2, |x, y| x + 10 * y);
        let t = g.transpose();
        assert_eq!(t.dims(), (2, 3));
        assert_eq!(t.at(1, 2), g.at(2, 1));
        assert_eq!(t.transpose(), g);
    }
}
