use crate::error::{Error, Result};
use crate::geometry::GridPoint;

/// Spatial extent of a grid in cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridDims {
    pub height: usize,
    pub width: usize,
}

impl GridDims {
    pub fn new(height: usize, width: usize) -> Self {
        GridDims { height, width }
    }

    pub fn contains(&self, p: GridPoint) -> bool {
        p.row < self.height && p.col < self.width
    }
}

/// Dense `height x width x channels` array, row-major with the channel index
/// varying fastest. Heatmaps, size maps, offset maps and displacement maps
/// all use this layout.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    height: usize,
    width: usize,
    channels: usize,
    values: Vec<f64>,
}

impl Grid {
    pub fn zeros(height: usize, width: usize, channels: usize) -> Self {
        Grid {
            height,
            width,
            channels,
            values: vec![0.0; height * width * channels],
        }
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: f64) -> Self {
        Grid {
            height,
            width,
            channels,
            values: vec![value; height * width * channels],
        }
    }

    pub fn from_values(
        height: usize,
        width: usize,
        channels: usize,
        values: Vec<f64>,
    ) -> Result<Self> {
        if height == 0 || width == 0 || channels == 0 {
            return Err(Error::invalid(format!(
                "grid dimensions must be positive, got {height}x{width}x{channels}"
            )));
        }
        if values.len() != height * width * channels {
            return Err(Error::dims(format!(
                "{height}x{width}x{channels} grid needs {} values, got {}",
                height * width * channels,
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!(
                "non-finite grid value at index {i}"
            )));
        }
        Ok(Grid {
            height,
            width,
            channels,
            values,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn dims(&self) -> GridDims {
        GridDims::new(self.height, self.width)
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }

    #[inline]
    pub fn index(&self, row: usize, col: usize, ch: usize) -> usize {
        debug_assert!(row < self.height && col < self.width && ch < self.channels);
        (row * self.width + col) * self.channels + ch
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize, ch: usize) -> f64 {
        self.values[self.index(row, col, ch)]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, ch: usize, v: f64) {
        let i = self.index(row, col, ch);
        self.values[i] = v;
    }

    /// Both channels of a two-channel map at `cell`.
    pub fn pair_at(&self, cell: GridPoint) -> (f64, f64) {
        (
            self.get(cell.row, cell.col, 0),
            self.get(cell.row, cell.col, 1),
        )
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Replaces the payload, keeping the shape.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        Grid::from_values(self.height, self.width, self.channels, values)
    }

    pub fn ensure_same_shape(&self, other: &Grid, what: &str) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::dims(format!(
                "{what}: {:?} vs {:?}",
                self.shape(),
                other.shape()
            )));
        }
        Ok(())
    }

    pub fn max_value(&self) -> f64 {
        self.values
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }
}
