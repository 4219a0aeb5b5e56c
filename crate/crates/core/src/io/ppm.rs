//! Binary PPM (P6) rasters with axis-aligned box outlines.

use std::path::Path;

use crate::geometry::BBox;

pub type Rgb = [u8; 3];

pub const WHITE: Rgb = [255, 255, 255];
pub const GREEN: Rgb = [0, 160, 0];
pub const RED: Rgb = [220, 0, 0];

#[derive(Debug, Clone, PartialEq)]
pub struct Canvas {
    width: usize,
    height: usize,
    pixels: Vec<Rgb>,
}

impl Canvas {
    pub fn new(width: usize, height: usize, fill: Rgb) -> Self {
        Canvas {
            width,
            height,
            pixels: vec![fill; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixel(&self, x: usize, y: usize) -> Rgb {
        self.pixels[y * self.width + x]
    }

    fn put(&mut self, x: i64, y: i64, c: Rgb) {
        if x >= 0 && y >= 0 && (x as usize) < self.width && (y as usize) < self.height {
            self.pixels[y as usize * self.width + x as usize] = c;
        }
    }

    /// One-pixel outline; parts outside the canvas are clipped.
    pub fn draw_box(&mut self, b: &BBox, c: Rgb) {
        let (x0, y0) = (b.x1.round() as i64, b.y1.round() as i64);
        let (x1, y1) = (b.x2().round() as i64 - 1, b.y2().round() as i64 - 1);
        for x in x0..=x1.max(x0) {
            self.put(x, y0, c);
            self.put(x, y1.max(y0), c);
        }
        for y in y0..=y1.max(y0) {
            self.put(x0, y, c);
            self.put(x1.max(x0), y, c);
        }
    }

    pub fn to_ppm(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.reserve(self.pixels.len() * 3);
        for p in &self.pixels {
            out.extend_from_slice(p);
        }
        out
    }

    pub fn write(&self, path: &Path) -> crate::Result<()> {
        super::write_bytes(path, &self.to_ppm())
    }
}
