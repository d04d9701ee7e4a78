//! Binary shape rasters and the pixel-to-normalized coordinate frame.
//!
//! All model evaluation happens in a normalized frame where the longest
//! image side maps to `[0, 1]`. This keeps sigmoid slopes, disc radii,
//! grid spacings and step sizes independent of the raster resolution.

use crate::error::{Error, Result};

/// Affine map between pixel indices and normalized coordinates.
///
/// A pixel `(row, col)` has its center at `((col + 0.5) / scale,
/// (row + 0.5) / scale)` where `scale` is the longest image side in
/// pixels. The y axis points down, matching raster row order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoordFrame {
    width: u32,
    height: u32,
    scale: f64,
}

impl CoordFrame {
    pub fn new(width: u32, height: u32) -> Self {
        CoordFrame {
            width,
            height,
            scale: f64::from(width.max(height)),
        }
    }

    /// Longest side in pixels; the normalization divisor.
    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// Area of one pixel in normalized units.
    pub fn pixel_area(&self) -> f64 {
        1.0 / (self.scale * self.scale)
    }

    /// Normalized coordinates of a pixel center.
    pub fn point_of(&self, row: u32, col: u32) -> [f64; 2] {
        [
            (f64::from(col) + 0.5) / self.scale,
            (f64::from(row) + 0.5) / self.scale,
        ]
    }

    /// Pixel containing a normalized point, if inside the image.
    pub fn pixel_of(&self, point: [f64; 2]) -> Option<(u32, u32)> {
        let col = (point[0] * self.scale).floor();
        let row = (point[1] * self.scale).floor();
        if col < 0.0 || row < 0.0 || col >= f64::from(self.width) || row >= f64::from(self.height) {
            None
        } else {
            Some((row as u32, col as u32))
        }
    }
}

/// A binary image: foreground pixels are the shape, background is empty.
#[derive(Debug, Clone, PartialEq)]
pub struct ShapeRaster {
    width: u32,
    height: u32,
    values: Vec<bool>,
    frame: CoordFrame,
}

impl ShapeRaster {
    /// Builds a raster from a predicate over `(row, col)`.
    ///
    /// Errors with [`Error::EmptyForeground`] when no pixel is set.
    pub fn from_fn(width: u32, height: u32, mut fg: impl FnMut(u32, u32) -> bool) -> Result<Self> {
        assert!(width > 0 && height > 0, "raster dimensions must be positive");
        let mut values = Vec::with_capacity((width * height) as usize);
        for row in 0..height {
            for col in 0..width {
                values.push(fg(row, col));
            }
        }
        if !values.iter().any(|&v| v) {
            return Err(Error::EmptyForeground);
        }
        Ok(ShapeRaster {
            width,
            height,
            values,
            frame: CoordFrame::new(width, height),
        })
    }

    /// Builds a raster from a row-major boolean grid.
    pub fn from_bits(width: u32, height: u32, values: Vec<bool>) -> Result<Self> {
        assert_eq!(values.len(), (width * height) as usize, "grid size mismatch");
        if !values.iter().any(|&v| v) {
            return Err(Error::EmptyForeground);
        }
        Ok(ShapeRaster {
            width,
            height,
            values,
            frame: CoordFrame::new(width, height),
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn frame(&self) -> &CoordFrame {
        &self.frame
    }

    #[inline]
    pub fn is_foreground(&self, row: u32, col: u32) -> bool {
        self.values[(row * self.width + col) as usize]
    }

    /// Row-major pixel values; `true` is foreground.
    pub fn bits(&self) -> &[bool] {
        &self.values
    }

    pub fn foreground_count(&self) -> usize {
        self.values.iter().filter(|&&v| v).count()
    }

    /// Iterator over `(row, col, foreground)` in row-major order.
    pub fn pixels(&self) -> impl Iterator<Item = (u32, u32, bool)> + '_ {
        let width = self.width;
        self.values
            .iter()
            .enumerate()
            .map(move |(idx, &v)| (idx as u32 / width, idx as u32 % width, v))
    }

    /// Foreground bounding box as `(min_row, min_col, max_row, max_col)`, inclusive.
    pub fn bounding_box(&self) -> (u32, u32, u32, u32) {
        let mut min_row = self.height;
        let mut min_col = self.width;
        let mut max_row = 0;
        let mut max_col = 0;
        for (row, col, fg) in self.pixels() {
            if fg {
                min_row = min_row.min(row);
                min_col = min_col.min(col);
                max_row = max_row.max(row);
                max_col = max_col.max(col);
            }
        }
        (min_row, min_col, max_row, max_col)
    }

    /// True when a foreground pixel touches background or the image border
    /// through any of its 4 edges.
    pub fn is_boundary(&self, row: u32, col: u32) -> bool {
        if !self.is_foreground(row, col) {
            return false;
        }
        row == 0
            || col == 0
            || row + 1 == self.height
            || col + 1 == self.width
            || !self.is_foreground(row - 1, col)
            || !self.is_foreground(row + 1, col)
            || !self.is_foreground(row, col - 1)
            || !self.is_foreground(row, col + 1)
    }
}
