//! Dense 2-d grids (masks, depth maps, images) and their file formats.
//!
//! # Float grid format
//!
//! Depth maps and flow fields share one binary layout, all little-endian:
//!
//! | offset | size | content                                   |
//! |--------|------|-------------------------------------------|
//! | 0      | 4    | magic `b"FGRD"`                           |
//! | 4      | 4    | width, `u32`                              |
//! | 8      | 4    | height, `u32`                             |
//! | 12     | 4    | channels per cell, `u32`                  |
//! | 16     | 4·w·h·c | `f32` values, row-major, channels interleaved |
//!
//! Background depth is stored as `+inf`.

use std::fs;
use std::path::Path;

use image::{GrayImage, Luma, Rgb, RgbImage as PngRgb};

use crate::error::{Error, Result};

pub const FLOAT_GRID_MAGIC: [u8; 4] = *b"FGRD";

/// Reserved depth value for pixels not covered by any face.
pub const BACKGROUND_DEPTH: f64 = f64::INFINITY;

#[derive(Debug, Clone, PartialEq)]
pub struct Grid<T> {
    pub width: usize,
    pub height: usize,
    pub data: Vec<T>,
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
    pub fn from_vec(width: usize, height: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::Alignment(format!(
                "{} values for a {width}x{height} grid",
                data.len()
            )));
        }
        Ok(Grid {
            width,
            height,
            data,
        })
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

    #[inline]
    pub fn index(&self, x: usize, y: usize) -> usize {
        y * self.width + x
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> &T {
        &self.data[y * self.width + x]
    }

    #[inline]
    pub fn get_mut(&mut self, x: usize, y: usize) -> &mut T {
        let w = self.width;
        &mut self.data[y * w + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: T) {
        let w = self.width;
        self.data[y * w + x] = v;
    }

    /// Cell at signed coordinates, `None` outside the grid.
    #[inline]
    pub fn checked(&self, x: i64, y: i64) -> Option<&T> {
        if x < 0 || y < 0 || x >= self.width as i64 || y >= self.height as i64 {
            None
        } else {
            Some(&self.data[y as usize * self.width + x as usize])
        }
    }

    pub fn size(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn same_size<U>(&self, other: &Grid<U>) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub fn map<U>(&self, f: impl FnMut(&T) -> U) -> Grid<U> {
        Grid {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(f).collect(),
        }
    }
}

pub type BinaryMask = Grid<bool>;
pub type DepthMap = Grid<f64>;
pub type LumaImage = Grid<f64>;
pub type RgbImage = Grid<[f64; 3]>;

impl BinaryMask {
    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }
}

pub fn require_same_size<A, B>(a: &Grid<A>, b: &Grid<B>, what: &str) -> Result<()> {
    if a.same_size(b) {
        Ok(())
    } else {
        Err(Error::Alignment(format!(
            "{what}: {}x{} vs {}x{}",
            a.width, a.height, b.width, b.height
        )))
    }
}

#[inline]
pub fn is_foreground_depth(d: f64) -> bool {
    d.is_finite()
}

pub fn depth_foreground(depth: &DepthMap) -> BinaryMask {
    depth.map(|&d| is_foreground_depth(d))
}

/// Rec. 601 luma of an RGB image.
pub fn luminance(image: &RgbImage) -> LumaImage {
    image.map(|c| 0.299 * c[0] + 0.587 * c[1] + 0.114 * c[2])
}

fn to_u8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

fn image_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Image {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

/// 8-bit grayscale PNG: 0 background, 255 foreground.
pub fn save_mask_png(mask: &BinaryMask, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let img = GrayImage::from_fn(mask.width as u32, mask.height as u32, |x, y| {
        Luma([if *mask.get(x as usize, y as usize) { 255 } else { 0 }])
    });
    img.save(path).map_err(|e| image_err(path, e))
}

/// Loads a mask PNG; any pixel with luma >= 128 is foreground.
pub fn load_mask_png(path: impl AsRef<Path>) -> Result<BinaryMask> {
    let path = path.as_ref();
    let img = image::open(path).map_err(|e| image_err(path, e))?.to_luma8();
    let (w, h) = img.dimensions();
    Ok(Grid::from_fn(w as usize, h as usize, |x, y| {
        img.get_pixel(x as u32, y as u32).0[0] >= 128
    }))
}

pub fn save_rgb_png(image: &RgbImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let img = PngRgb::from_fn(image.width as u32, image.height as u32, |x, y| {
        let c = image.get(x as usize, y as usize);
        Rgb([to_u8(c[0]), to_u8(c[1]), to_u8(c[2])])
    });
    img.save(path).map_err(|e| image_err(path, e))
}

pub fn load_rgb_png(path: impl AsRef<Path>) -> Result<RgbImage> {
    let path = path.as_ref();
    let img = image::open(path).map_err(|e| image_err(path, e))?.to_rgb8();
    let (w, h) = img.dimensions();
    Ok(Grid::from_fn(w as usize, h as usize, |x, y| {
        let p = img.get_pixel(x as u32, y as u32).0;
        [p[0] as f64 / 255.0, p[1] as f64 / 255.0, p[2] as f64 / 255.0]
    }))
}

/// Depth rendered as 8-bit gray for inspection: nearest foreground white,
/// farthest dark gray, background black. `depth_sign` selects which z is near.
pub fn save_depth_png(depth: &DepthMap, depth_sign: f64, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let fg = depth.data.iter().copied().filter(|d| d.is_finite());
    let (lo, hi) = fg.fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), d| {
        (l.min(d * depth_sign), h.max(d * depth_sign))
    });
    let span = (hi - lo).max(1e-12);
    let img = GrayImage::from_fn(depth.width as u32, depth.height as u32, |x, y| {
        let d = *depth.get(x as usize, y as usize);
        if d.is_finite() {
            Luma([(55.0 + 200.0 * (d * depth_sign - lo) / span).round() as u8])
        } else {
            Luma([0])
        }
    });
    img.save(path).map_err(|e| image_err(path, e))
}

pub fn encode_float_grid(width: usize, height: usize, channels: usize, values: &[f32]) -> Vec<u8> {
    assert_eq!(values.len(), width * height * channels);
    let mut out = Vec::with_capacity(16 + values.len() * 4);
    out.extend_from_slice(&FLOAT_GRID_MAGIC);
    out.extend_from_slice(&(width as u32).to_le_bytes());
    out.extend_from_slice(&(height as u32).to_le_bytes());
    out.extend_from_slice(&(channels as u32).to_le_bytes());
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Decoded float grid: `(width, height, channels, values)`.
pub type FloatGrid = (usize, usize, usize, Vec<f32>);

pub fn decode_float_grid(bytes: &[u8], origin: &Path) -> Result<FloatGrid> {
    let fail = |message: &str| Error::Format {
        path: origin.to_path_buf(),
        line: 0,
        message: message.to_string(),
    };
    if bytes.len() < 16 {
        return Err(fail("float grid shorter than its 16-byte header"));
    }
    if bytes[0..4] != FLOAT_GRID_MAGIC {
        return Err(fail("bad float grid magic"));
    }
    let word = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().expect("4 bytes")) as usize;
    let (w, h, c) = (word(4), word(8), word(12));
    let expected = w
        .checked_mul(h)
        .and_then(|n| n.checked_mul(c))
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| fail("float grid dimensions overflow"))?;
    if bytes.len() != 16 + expected {
        return Err(fail("float grid payload size does not match header"));
    }
    let values = bytes[16..]
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")))
        .collect();
    Ok((w, h, c, values))
}

pub fn save_depth(depth: &DepthMap, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let values: Vec<f32> = depth.data.iter().map(|&d| d as f32).collect();
    fs::write(path, encode_float_grid(depth.width, depth.height, 1, &values))
        .map_err(|e| Error::io(path, e))
}

pub fn load_depth(path: impl AsRef<Path>) -> Result<DepthMap> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let (w, h, c, values) = decode_float_grid(&bytes, path)?;
    if c != 1 {
        return Err(Error::Format {
            path: path.to_path_buf(),
            line: 0,
            message: format!("depth map must have 1 channel, found {c}"),
        });
    }
    Grid::from_vec(
        w,
        h,
        values
            .into_iter()
            .map(|v| if v.is_finite() { v as f64 } else { BACKGROUND_DEPTH })
            .collect(),
    )
}
