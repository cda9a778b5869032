//! Raster images, Netpbm decoding and the small set of filters the detector
//! and descriptor stages need.

use thiserror::Error;

use crate::geometry::{Homography, Point2};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ImageError {
    #[error("unsupported image format: {0}")]
    UnsupportedFormat(String),
    #[error("truncated image data: expected {expected} samples, found {found}")]
    TruncatedData { expected: usize, found: usize },
    #[error("malformed image header: {0}")]
    BadHeader(String),
    #[error("image too small: {width}x{height}")]
    TooSmall { width: usize, height: usize },
    #[error("patch window exceeds image bounds")]
    OutOfBounds,
    #[error("invalid image: {0}")]
    Invalid(String),
}

/// Row-major raster with intensities in `[0, 1]`; colour images are
/// channel-interleaved.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f64>,
}

impl Image {
    pub fn new(
        width: usize,
        height: usize,
        channels: usize,
        data: Vec<f64>,
    ) -> Result<Self, ImageError> {
        if channels != 1 && channels != 3 {
            return Err(ImageError::Invalid(format!("{channels} channels")));
        }
        if data.len() != width * height * channels {
            return Err(ImageError::Invalid(format!(
                "data length {} != {width}x{height}x{channels}",
                data.len()
            )));
        }
        if let Some(v) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(ImageError::Invalid(format!("intensity {v} outside [0,1]")));
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: f64) -> Self {
        Self::new(
            width,
            height,
            channels,
            vec![value; width * height * channels],
        )
        .expect("valid fill")
    }

    /// Builds a grayscale image from a function of pixel coordinates; values
    /// are clamped into `[0, 1]`.
    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y).clamp(0.0, 1.0));
            }
        }
        Self {
            width,
            height,
            channels: 1,
            data,
        }
    }

    pub(crate) fn from_raw(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), width * height * channels);
        Self {
            width,
            height,
            channels,
            data,
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

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, x: usize, y: usize, c: usize) -> f64 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    /// Bilinear sample at a real position; coordinates are clamped to the
    /// pixel grid.
    pub fn sample(&self, x: f64, y: f64, c: usize) -> f64 {
        let xm = (self.width - 1) as f64;
        let ym = (self.height - 1) as f64;
        let x = x.clamp(0.0, xm);
        let y = y.clamp(0.0, ym);
        let x0 = x.floor() as usize;
        let y0 = y.floor() as usize;
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let fx = x - x0 as f64;
        let fy = y - y0 as f64;
        let top = self.get(x0, y0, c) * (1.0 - fx) + self.get(x1, y0, c) * fx;
        let bottom = self.get(x0, y1, c) * (1.0 - fx) + self.get(x1, y1, c) * fx;
        top * (1.0 - fy) + bottom * fy
    }
}

/// Square sample window taken around a keypoint.
#[derive(Debug, Clone, PartialEq)]
pub struct Patch {
    pub side: usize,
    pub channels: usize,
    pub data: Vec<f64>,
}

impl Patch {
    pub fn to_grayscale(&self) -> Vec<f64> {
        if self.channels == 1 {
            return self.data.clone();
        }
        self.data
            .chunks_exact(3)
            .map(|p| luma(p[0], p[1], p[2]))
            .collect()
    }
}

fn luma(r: f64, g: f64, b: f64) -> f64 {
    (0.299 * r + 0.587 * g + 0.114 * b).clamp(0.0, 1.0)
}

struct HeaderReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> HeaderReader<'a> {
    fn skip_space_and_comments(&mut self) {
        while self.pos < self.bytes.len() {
            let b = self.bytes[self.pos];
            if b == b'#' {
                while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                    self.pos += 1;
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn token(&mut self) -> Option<&'a [u8]> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len()
            && !self.bytes[self.pos].is_ascii_whitespace()
            && self.bytes[self.pos] != b'#'
        {
            self.pos += 1;
        }
        (self.pos > start).then(|| &self.bytes[start..self.pos])
    }

    fn number(&mut self, what: &str) -> Result<usize, ImageError> {
        let tok = self
            .token()
            .ok_or_else(|| ImageError::BadHeader(format!("missing {what}")))?;
        std::str::from_utf8(tok)
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| ImageError::BadHeader(format!("bad {what}")))
    }
}

/// Decodes PGM (`P2`/`P5`) and PPM (`P3`/`P6`) data into an [`Image`].
pub fn load_image(bytes: &[u8]) -> Result<Image, ImageError> {
    if bytes.len() < 2 || bytes[0] != b'P' {
        return Err(ImageError::UnsupportedFormat("missing netpbm magic".into()));
    }
    let (channels, binary) = match bytes[1] {
        b'2' => (1, false),
        b'5' => (1, true),
        b'3' => (3, false),
        b'6' => (3, true),
        other => {
            return Err(ImageError::UnsupportedFormat(format!(
                "magic P{}",
                other as char
            )))
        }
    };
    let mut rd = HeaderReader { bytes, pos: 2 };
    let width = rd.number("width")?;
    let height = rd.number("height")?;
    let maxval = rd.number("maxval")?;
    if maxval == 0 || maxval > 65535 {
        return Err(ImageError::BadHeader(format!("maxval {maxval}")));
    }
    if width == 0 || height == 0 {
        return Err(ImageError::BadHeader("zero dimension".into()));
    }
    let expected = width * height * channels;
    let maxval_f = maxval as f64;
    let mut data = Vec::with_capacity(expected);

    if binary {
        // Exactly one whitespace byte separates maxval from the raster.
        let start = rd.pos + 1;
        let wide = maxval > 255;
        let payload = bytes.get(start..).unwrap_or(&[]);
        let found = if wide {
            payload.len() / 2
        } else {
            payload.len()
        };
        if found < expected {
            return Err(ImageError::TruncatedData { expected, found });
        }
        for i in 0..expected {
            let v = if wide {
                u16::from_be_bytes([payload[2 * i], payload[2 * i + 1]]) as usize
            } else {
                payload[i] as usize
            };
            if v > maxval {
                return Err(ImageError::Invalid(format!(
                    "sample {v} exceeds maxval {maxval}"
                )));
            }
            data.push(v as f64 / maxval_f);
        }
    } else {
        while data.len() < expected {
            let Some(tok) = rd.token() else {
                return Err(ImageError::TruncatedData {
                    expected,
                    found: data.len(),
                });
            };
            let v: usize = std::str::from_utf8(tok)
                .ok()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| ImageError::Invalid("non-numeric sample".into()))?;
            if v > maxval {
                return Err(ImageError::Invalid(format!(
                    "sample {v} exceeds maxval {maxval}"
                )));
            }
            data.push(v as f64 / maxval_f);
        }
    }
    Ok(Image::from_raw(width, height, channels, data))
}

/// Netpbm encoding used for debug dumps. `binary` selects P5/P6 over P2/P3;
/// samples are quantized to `maxval`.
pub fn encode_pnm(img: &Image, maxval: u16, binary: bool) -> Vec<u8> {
    let magic = match (img.channels, binary) {
        (1, false) => "P2",
        (1, true) => "P5",
        (_, false) => "P3",
        (_, true) => "P6",
    };
    let mut out = format!("{magic}\n{} {}\n{maxval}\n", img.width, img.height).into_bytes();
    let q = |v: f64| (v * maxval as f64).round() as u16;
    if binary {
        for &v in &img.data {
            if maxval > 255 {
                out.extend_from_slice(&q(v).to_be_bytes());
            } else {
                out.push(q(v) as u8);
            }
        }
    } else {
        let row = img.width * img.channels;
        for line in img.data.chunks(row) {
            let text: Vec<String> = line.iter().map(|&v| q(v).to_string()).collect();
            out.extend_from_slice(text.join(" ").as_bytes());
            out.push(b'\n');
        }
    }
    out
}

pub fn to_grayscale(img: &Image) -> Image {
    if img.channels == 1 {
        return img.clone();
    }
    let data = img
        .data
        .chunks_exact(3)
        .map(|p| luma(p[0], p[1], p[2]))
        .collect();
    Image::from_raw(img.width, img.height, 1, data)
}

/// Normalized discrete Gaussian with radius `ceil(3 sigma)`.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as i64;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= sum);
    k
}

/// Separable Gaussian smoothing with replicate-clamped borders.
pub fn gaussian_blur(img: &Image, sigma: f64) -> Image {
    if !(sigma > 0.0) {
        return img.clone();
    }
    let kernel = gaussian_kernel(sigma);
    let r = (kernel.len() / 2) as i64;
    let (w, h, ch) = (img.width, img.height, img.channels);
    let clamp = |v: i64, hi: usize| v.clamp(0, hi as i64 - 1) as usize;

    let mut tmp = vec![0.0; img.data.len()];
    for y in 0..h {
        for x in 0..w {
            for c in 0..ch {
                let mut acc = 0.0;
                for (k, wgt) in kernel.iter().enumerate() {
                    let sx = clamp(x as i64 + k as i64 - r, w);
                    acc += wgt * img.data[(y * w + sx) * ch + c];
                }
                tmp[(y * w + x) * ch + c] = acc;
            }
        }
    }
    let mut out = vec![0.0; img.data.len()];
    for y in 0..h {
        for x in 0..w {
            for c in 0..ch {
                let mut acc = 0.0;
                for (k, wgt) in kernel.iter().enumerate() {
                    let sy = clamp(y as i64 + k as i64 - r, h);
                    acc += wgt * tmp[(sy * w + x) * ch + c];
                }
                out[(y * w + x) * ch + c] = acc.clamp(0.0, 1.0);
            }
        }
    }
    Image::from_raw(w, h, ch, out)
}

/// Point-sampled 2x decimation: output `(i, j)` is input `(2i, 2j)`.
pub fn downsample_half(img: &Image) -> Result<Image, ImageError> {
    if img.width < 2 || img.height < 2 {
        return Err(ImageError::TooSmall {
            width: img.width,
            height: img.height,
        });
    }
    let (w, h, ch) = (img.width / 2, img.height / 2, img.channels);
    let mut data = Vec::with_capacity(w * h * ch);
    for y in 0..h {
        for x in 0..w {
            let base = (2 * y * img.width + 2 * x) * ch;
            data.extend_from_slice(&img.data[base..base + ch]);
        }
    }
    Ok(Image::from_raw(w, h, ch, data))
}

/// Bilinear resize of a square, channel-interleaved buffer using
/// pixel-centre alignment (an equal-size resize is the identity).
pub fn resize_square(data: &[f64], side: usize, channels: usize, out_side: usize) -> Vec<f64> {
    if side == out_side {
        return data.to_vec();
    }
    let src = Image::from_raw(side, side, channels, data.to_vec());
    let ratio = side as f64 / out_side as f64;
    let mut out = Vec::with_capacity(out_side * out_side * channels);
    for j in 0..out_side {
        let sy = (j as f64 + 0.5) * ratio - 0.5;
        for i in 0..out_side {
            let sx = (i as f64 + 0.5) * ratio - 0.5;
            for c in 0..channels {
                out.push(src.sample(sx, sy, c));
            }
        }
    }
    out
}

/// Samples a `window`x`window` grid at unit spacing centred on `center`
/// (bilinear), then resizes it to `out_side`x`out_side`.
///
/// Fails with [`ImageError::OutOfBounds`] when any sample position falls
/// outside the pixel grid.
pub fn extract_patch(
    img: &Image,
    center: Point2,
    window: usize,
    out_side: usize,
) -> Result<Patch, ImageError> {
    if window == 0 || out_side == 0 {
        return Err(ImageError::Invalid(
            "window and output side must be positive".into(),
        ));
    }
    let half = (window as f64 - 1.0) / 2.0;
    let x0 = center.x - half;
    let y0 = center.y - half;
    let x1 = center.x + half;
    let y1 = center.y + half;
    if !center.is_finite()
        || x0 < 0.0
        || y0 < 0.0
        || x1 > (img.width - 1) as f64
        || y1 > (img.height - 1) as f64
    {
        return Err(ImageError::OutOfBounds);
    }
    let ch = img.channels;
    let mut grid = Vec::with_capacity(window * window * ch);
    for j in 0..window {
        for i in 0..window {
            for c in 0..ch {
                grid.push(img.sample(x0 + i as f64, y0 + j as f64, c));
            }
        }
    }
    Ok(Patch {
        side: out_side,
        channels: ch,
        data: resize_square(&grid, window, ch, out_side),
    })
}

/// Renders `img` as seen through `h` (destination = `h` applied to source):
/// each output pixel samples the source at `h^-1(p)`; samples falling outside
/// the source are filled with `fill`.
pub fn warp_perspective(
    img: &Image,
    h: &Homography,
    width: usize,
    height: usize,
    fill: f64,
) -> Image {
    let inv = h.inverse().expect("homography is invertible");
    let ch = img.channels;
    let mut data = Vec::with_capacity(width * height * ch);
    for y in 0..height {
        for x in 0..width {
            let src = inv.apply(Point2::new(x as f64, y as f64)).ok().filter(|p| {
                p.x >= 0.0
                    && p.y >= 0.0
                    && p.x <= (img.width - 1) as f64
                    && p.y <= (img.height - 1) as f64
            });
            for c in 0..ch {
                data.push(match src {
                    Some(p) => img.sample(p.x, p.y, c),
                    None => fill,
                });
            }
        }
    }
    Image::from_raw(width, height, ch, data)
}
