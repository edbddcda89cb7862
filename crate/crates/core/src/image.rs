//! Pixel grids and spot image containers.
//!
//! Pixel `i` of a grid sits at integer coordinates `(i % width, i / width)`,
//! with the first pixel's center at the origin.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest region of interest a single fit accepts.
pub const MAX_PIXELS: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PixelGrid {
    width: usize,
    height: usize,
}

impl PixelGrid {
    pub fn new(width: usize, height: usize) -> Result<Self> {
        let len = width.checked_mul(height).unwrap_or(usize::MAX);
        if width == 0 || height == 0 || len > MAX_PIXELS {
            return Err(Error::InvalidGrid { width, height });
        }
        Ok(Self { width, height })
    }

    pub fn square(size: usize) -> Result<Self> {
        Self::new(size, size)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Number of pixels.
    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// The larger of width and height.
    pub fn extent(&self) -> usize {
        self.width.max(self.height)
    }

    #[inline]
    pub fn coords(&self, index: usize) -> (f32, f32) {
        ((index % self.width) as f32, (index / self.width) as f32)
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize) -> usize {
        y * self.width + x
    }
}

/// Borrowed view of one spot image.
#[derive(Debug, Clone, Copy)]
pub struct SpotView<'a> {
    grid: PixelGrid,
    values: &'a [f32],
}

impl<'a> SpotView<'a> {
    pub fn new(grid: PixelGrid, values: &'a [f32]) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::LengthMismatch {
                expected: grid.len(),
                got: values.len(),
            });
        }
        Ok(Self { grid, values })
    }

    pub fn grid(&self) -> PixelGrid {
        self.grid
    }

    pub fn values(&self) -> &'a [f32] {
        self.values
    }

    pub fn check_finite(&self) -> Result<()> {
        match self.values.iter().position(|v| !v.is_finite()) {
            Some(index) => Err(Error::NonFinitePixel { index }),
            None => Ok(()),
        }
    }

    pub fn to_owned(&self) -> SpotImage {
        SpotImage {
            grid: self.grid,
            values: self.values.to_vec(),
        }
    }
}

/// One region of interest with row-major intensities.
#[derive(Debug, Clone, PartialEq)]
pub struct SpotImage {
    grid: PixelGrid,
    values: Vec<f32>,
}

impl SpotImage {
    /// Checks the buffer length and that every value is finite.
    pub fn new(grid: PixelGrid, values: Vec<f32>) -> Result<Self> {
        SpotView::new(grid, &values)?.check_finite()?;
        Ok(Self { grid, values })
    }

    pub(crate) fn from_parts_unchecked(grid: PixelGrid, values: Vec<f32>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        Self { grid, values }
    }

    pub fn filled(grid: PixelGrid, value: f32) -> Self {
        Self {
            grid,
            values: vec![value; grid.len()],
        }
    }

    pub fn grid(&self) -> PixelGrid {
        self.grid
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.values[self.grid.index(x, y)]
    }

    pub fn view(&self) -> SpotView<'_> {
        SpotView {
            grid: self.grid,
            values: &self.values,
        }
    }

    pub fn into_values(self) -> Vec<f32> {
        self.values
    }
}

/// A batch of equally sized images stored back to back.
#[derive(Debug, Clone, PartialEq)]
pub struct SpotBatch {
    grid: PixelGrid,
    pixels: Vec<f32>,
}

impl SpotBatch {
    pub fn new(grid: PixelGrid, pixels: Vec<f32>) -> Result<Self> {
        if pixels.len() % grid.len() != 0 {
            return Err(Error::LengthMismatch {
                expected: (pixels.len() / grid.len() + 1) * grid.len(),
                got: pixels.len(),
            });
        }
        Ok(Self { grid, pixels })
    }

    pub fn empty(grid: PixelGrid) -> Self {
        Self {
            grid,
            pixels: Vec::new(),
        }
    }

    /// Concatenates images that must all share `grid`.
    pub fn from_images<'a, I>(grid: PixelGrid, images: I) -> Result<Self>
    where
        I: IntoIterator<Item = &'a SpotImage>,
    {
        let mut pixels = Vec::new();
        for image in images {
            if image.grid() != grid {
                return Err(Error::InvalidConfig(format!(
                    "image grid {}x{} differs from batch grid {}x{}",
                    image.grid().width(),
                    image.grid().height(),
                    grid.width(),
                    grid.height()
                )));
            }
            pixels.extend_from_slice(image.values());
        }
        Ok(Self { grid, pixels })
    }

    pub fn grid(&self) -> PixelGrid {
        self.grid
    }

    pub fn len(&self) -> usize {
        self.pixels.len() / self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    pub fn pixels(&self) -> &[f32] {
        &self.pixels
    }

    pub fn get(&self, index: usize) -> SpotView<'_> {
        let n = self.grid.len();
        SpotView {
            grid: self.grid,
            values: &self.pixels[index * n..(index + 1) * n],
        }
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = SpotView<'_>> + '_ {
        self.pixels.chunks_exact(self.grid.len()).map(move |values| SpotView {
            grid: self.grid,
            values,
        })
    }
}
