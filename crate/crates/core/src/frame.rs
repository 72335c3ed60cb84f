//! Planar RGB frames with values in `[0, 1]` and their PNG storage.

use std::path::Path;

use crate::error::{Error, IoContext, Result};

/// An RGB image stored channel-planar (`3 x height x width`), values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    height: usize,
    width: usize,
    data: Vec<f32>,
}

impl Frame {
    pub fn new(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            data: vec![0.0; 3 * height * width],
        }
    }

    pub fn filled(height: usize, width: usize, rgb: [f32; 3]) -> Self {
        Self::from_fn(height, width, |_, _| rgb)
    }

    pub fn from_fn(height: usize, width: usize, f: impl Fn(usize, usize) -> [f32; 3]) -> Self {
        let mut frame = Self::new(height, width);
        for y in 0..height {
            for x in 0..width {
                frame.set(y, x, f(y, x));
            }
        }
        frame
    }

    /// Panics if `data.len() != 3 * height * width`.
    pub fn from_planar(height: usize, width: usize, data: Vec<f32>) -> Self {
        assert_eq!(data.len(), 3 * height * width, "planar data size mismatch");
        Self {
            height,
            width,
            data,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn planar(&self) -> &[f32] {
        &self.data
    }

    pub fn planar_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_planar(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> [f32; 3] {
        let plane = self.height * self.width;
        let i = y * self.width + x;
        [self.data[i], self.data[plane + i], self.data[2 * plane + i]]
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, rgb: [f32; 3]) {
        let plane = self.height * self.width;
        let i = y * self.width + x;
        self.data[i] = rgb[0];
        self.data[plane + i] = rgb[1];
        self.data[2 * plane + i] = rgb[2];
    }

    #[inline]
    pub fn channel(&self, c: usize) -> &[f32] {
        let plane = self.height * self.width;
        &self.data[c * plane..(c + 1) * plane]
    }

    /// Mean absolute difference over all pixels and channels.
    pub fn mean_abs_diff(&self, other: &Frame) -> f64 {
        assert_eq!((self.height, self.width), (other.height, other.width));
        let sum: f64 = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs() as f64)
            .sum();
        sum / self.data.len() as f64
    }

    /// Round to the 8-bit grid a PNG round trip would produce.
    pub fn quantized(&self) -> Frame {
        Frame {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|&v| quantize(v) as f32 / 255.0).collect(),
        }
    }

    pub fn to_rgb8(&self) -> image::RgbImage {
        image::RgbImage::from_fn(self.width as u32, self.height as u32, |x, y| {
            let [r, g, b] = self.get(y as usize, x as usize);
            image::Rgb([quantize(r), quantize(g), quantize(b)])
        })
    }

    pub fn from_rgb8(img: &image::RgbImage) -> Frame {
        let (w, h) = (img.width() as usize, img.height() as usize);
        Frame::from_fn(h, w, |y, x| {
            let p = img.get_pixel(x as u32, y as u32).0;
            [
                p[0] as f32 / 255.0,
                p[1] as f32 / 255.0,
                p[2] as f32 / 255.0,
            ]
        })
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).at(dir)?;
        }
        self.to_rgb8()
            .save_with_format(path, image::ImageFormat::Png)
            .map_err(|source| Error::Image {
                path: path.to_path_buf(),
                source,
            })
    }

    pub fn load(path: &Path) -> Result<Frame> {
        let img = image::open(path).map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })?;
        Ok(Frame::from_rgb8(&img.to_rgb8()))
    }
}

#[inline]
pub fn quantize(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}
