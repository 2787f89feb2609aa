use std::path::Path;

use super::homography::{GeometryError, Homography, Point2};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ImageError {
    #[error("buffer holds {got} bytes, expected {expected}")]
    BadLength { got: usize, expected: usize },
    #[error("unsupported channel count {0}")]
    BadChannels(usize),
    #[error("image codec: {0}")]
    Codec(String),
}

/// Row-major interleaved 8-bit image with 1 or 3 channels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageBuffer {
    width: usize,
    height: usize,
    channels: usize,
    pixels: Vec<u8>,
}

impl ImageBuffer {
    pub fn new(
        width: usize,
        height: usize,
        channels: usize,
        pixels: Vec<u8>,
    ) -> Result<Self, ImageError> {
        if channels != 1 && channels != 3 {
            return Err(ImageError::BadChannels(channels));
        }
        let expected = width * height * channels;
        if pixels.len() != expected {
            return Err(ImageError::BadLength {
                got: pixels.len(),
                expected,
            });
        }
        Ok(ImageBuffer {
            width,
            height,
            channels,
            pixels,
        })
    }

    pub fn zeros(width: usize, height: usize, channels: usize) -> Self {
        ImageBuffer {
            width,
            height,
            channels,
            pixels: vec![0; width * height * channels],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn get(&self, x: usize, y: usize, c: usize) -> u8 {
        self.pixels[(y * self.width + x) * self.channels + c]
    }

    pub fn set(&mut self, x: usize, y: usize, c: usize, v: u8) {
        self.pixels[(y * self.width + x) * self.channels + c] = v;
    }

    /// Replicates a grayscale image into three channels.
    pub fn to_rgb(&self) -> ImageBuffer {
        if self.channels == 3 {
            return self.clone();
        }
        let pixels = self.pixels.iter().flat_map(|&v| [v, v, v]).collect();
        ImageBuffer {
            width: self.width,
            height: self.height,
            channels: 3,
            pixels,
        }
    }

    pub fn load(path: &Path) -> Result<Self, ImageError> {
        let img = image::open(path).map_err(|e| ImageError::Codec(e.to_string()))?;
        match img {
            image::DynamicImage::ImageLuma8(g) => {
                let (w, h) = g.dimensions();
                ImageBuffer::new(w as usize, h as usize, 1, g.into_raw())
            }
            other => {
                let rgb = other.to_rgb8();
                let (w, h) = rgb.dimensions();
                ImageBuffer::new(w as usize, h as usize, 3, rgb.into_raw())
            }
        }
    }

    pub fn save_png(&self, path: &Path) -> Result<(), ImageError> {
        let color = if self.channels == 3 {
            image::ExtendedColorType::Rgb8
        } else {
            image::ExtendedColorType::L8
        };
        image::save_buffer_with_format(
            path,
            &self.pixels,
            self.width as u32,
            self.height as u32,
            color,
            image::ImageFormat::Png,
        )
        .map_err(|e| ImageError::Codec(e.to_string()))
    }
}

/// Bilinear sample at a real-valued position; `None` outside the image.
fn sample_bilinear(img: &ImageBuffer, x: f64, y: f64, out: &mut [u8]) -> bool {
    let max_x = (img.width - 1) as f64;
    let max_y = (img.height - 1) as f64;
    const EPS: f64 = 1e-9;
    if !(x >= -EPS && y >= -EPS && x <= max_x + EPS && y <= max_y + EPS) {
        return false;
    }
    let x = x.clamp(0.0, max_x);
    let y = y.clamp(0.0, max_y);
    let x0 = x.floor() as usize;
    let y0 = y.floor() as usize;
    let fx = x - x0 as f64;
    let fy = y - y0 as f64;
    let x1 = (x0 + 1).min(img.width - 1);
    let y1 = (y0 + 1).min(img.height - 1);
    for (c, o) in out.iter_mut().enumerate() {
        let p00 = img.get(x0, y0, c) as f64;
        let p10 = img.get(x1, y0, c) as f64;
        let p01 = img.get(x0, y1, c) as f64;
        let p11 = img.get(x1, y1, c) as f64;
        let top = p00 + fx * (p10 - p00);
        let bottom = p01 + fx * (p11 - p01);
        *o = (top + fy * (bottom - top)).round().clamp(0.0, 255.0) as u8;
    }
    true
}

/// Resamples `img` into an `out_width x out_height` canvas where output pixel
/// `(u, v)` shows source location `H^-1 (u, v, 1)`. Pixels that map outside the
/// source are zero.
pub fn warp_image(
    img: &ImageBuffer,
    h: &Homography,
    out_width: usize,
    out_height: usize,
) -> Result<ImageBuffer, GeometryError> {
    let inv = h.inverse()?;
    let mut out = ImageBuffer::zeros(out_width, out_height, img.channels);
    if img.width == 0 || img.height == 0 {
        return Ok(out);
    }
    let ch = img.channels;
    let mut px = [0u8; 3];
    for v in 0..out_height {
        for u in 0..out_width {
            let p = inv.apply(Point2::new(u as f64, v as f64));
            if sample_bilinear(img, p.x, p.y, &mut px[..ch]) {
                let base = (v * out_width + u) * ch;
                out.pixels[base..base + ch].copy_from_slice(&px[..ch]);
            }
        }
    }
    Ok(out)
}

/// Per output index, the source indices and their coverage weights for a
/// box filter of width `src / dst`.
fn area_weights(src: usize, dst: usize) -> Vec<Vec<(usize, f64)>> {
    let scale = src as f64 / dst as f64;
    (0..dst)
        .map(|o| {
            let lo = o as f64 * scale;
            let hi = lo + scale;
            let mut taps = Vec::new();
            let mut i = lo.floor() as usize;
            while (i as f64) < hi && i < src {
                let cover = (hi.min(i as f64 + 1.0) - lo.max(i as f64)).max(0.0);
                if cover > 0.0 {
                    taps.push((i, cover / scale));
                }
                i += 1;
            }
            taps
        })
        .collect()
}

/// Area averaging when both axes shrink (or stay), bilinear otherwise.
pub fn resize_image(img: &ImageBuffer, out_width: usize, out_height: usize) -> ImageBuffer {
    if out_width == img.width && out_height == img.height {
        return img.clone();
    }
    let mut out = ImageBuffer::zeros(out_width, out_height, img.channels);
    if img.width == 0 || img.height == 0 || out_width == 0 || out_height == 0 {
        return out;
    }
    let ch = img.channels;
    if out_width <= img.width && out_height <= img.height {
        let wx = area_weights(img.width, out_width);
        let wy = area_weights(img.height, out_height);
        let mut acc = vec![0.0f64; ch];
        for (v, ys) in wy.iter().enumerate() {
            for (u, xs) in wx.iter().enumerate() {
                acc.iter_mut().for_each(|a| *a = 0.0);
                for &(y, wyv) in ys {
                    for &(x, wxv) in xs {
                        let w = wxv * wyv;
                        let base = (y * img.width + x) * ch;
                        for (a, &p) in acc.iter_mut().zip(&img.pixels[base..base + ch]) {
                            *a += w * p as f64;
                        }
                    }
                }
                let base = (v * out_width + u) * ch;
                for (o, a) in out.pixels[base..base + ch].iter_mut().zip(&acc) {
                    *o = a.round().clamp(0.0, 255.0) as u8;
                }
            }
        }
    } else {
        let sx = img.width as f64 / out_width as f64;
        let sy = img.height as f64 / out_height as f64;
        let mut px = [0u8; 3];
        for v in 0..out_height {
            let y = ((v as f64 + 0.5) * sy - 0.5).clamp(0.0, (img.height - 1) as f64);
            for u in 0..out_width {
                let x = ((u as f64 + 0.5) * sx - 0.5).clamp(0.0, (img.width - 1) as f64);
                sample_bilinear(img, x, y, &mut px[..ch]);
                let base = (v * out_width + u) * ch;
                out.pixels[base..base + ch].copy_from_slice(&px[..ch]);
            }
        }
    }
    out
}
