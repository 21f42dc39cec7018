use std::path::Path;

use crate::error::{Error, Result};

/// An RGB raster with accumulated opacity. Row 0 is the top of the image.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderedImage {
    width: usize,
    height: usize,
    rgb: Vec<[f64; 3]>,
    alpha: Vec<f64>,
}

impl RenderedImage {
    pub(crate) fn from_parts(width: usize, height: usize, rgb: Vec<[f64; 3]>, alpha: Vec<f64>) -> Self {
        debug_assert_eq!(rgb.len(), width * height);
        debug_assert_eq!(alpha.len(), width * height);
        Self {
            width,
            height,
            rgb,
            alpha,
        }
    }

    /// Builds an image from external pixel data, checking value ranges.
    pub fn new(width: usize, height: usize, rgb: Vec<[f64; 3]>, alpha: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 || rgb.len() != width * height || alpha.len() != width * height {
            return Err(Error::invalid(format!(
                "image buffers do not match {width}×{height}"
            )));
        }
        let in_range = |x: &f64| (0.0..=1.0).contains(x);
        if !rgb.iter().flatten().all(in_range) || !alpha.iter().all(in_range) {
            return Err(Error::ValueOutOfRange("image value outside [0, 1]".into()));
        }
        Ok(Self::from_parts(width, height, rgb, alpha))
    }

    /// Image from color alone; alpha is 1 wherever any channel is nonzero.
    pub fn from_rgb(width: usize, height: usize, rgb: Vec<[f64; 3]>) -> Result<Self> {
        let alpha = rgb
            .iter()
            .map(|p| if p.iter().any(|&c| c > 0.0) { 1.0 } else { 0.0 })
            .collect();
        Self::new(width, height, rgb, alpha)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn rgb(&self) -> &[[f64; 3]] {
        &self.rgb
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn pixel(&self, row: usize, col: usize) -> [f64; 3] {
        self.rgb[row * self.width + col]
    }

    pub fn alpha_at(&self, row: usize, col: usize) -> f64 {
        self.alpha[row * self.width + col]
    }

    pub fn same_shape(&self, other: &RenderedImage) -> bool {
        self.width == other.width && self.height == other.height
    }

    /// Mean squared error over all pixels and the three color channels.
    pub fn mse(&self, other: &RenderedImage) -> Result<f64> {
        if !self.same_shape(other) {
            return Err(Error::invalid(format!(
                "image size {}×{} does not match {}×{}",
                self.width, self.height, other.width, other.height
            )));
        }
        let sum: f64 = self
            .rgb
            .iter()
            .zip(&other.rgb)
            .map(|(a, b)| (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2))
            .sum();
        Ok(sum / (3 * self.rgb.len()) as f64)
    }

    /// Mean absolute difference over the color channels.
    pub fn mean_abs_diff(&self, other: &RenderedImage) -> Result<f64> {
        if !self.same_shape(other) {
            return Err(Error::invalid("image sizes differ"));
        }
        let sum: f64 = self
            .rgb
            .iter()
            .zip(&other.rgb)
            .map(|(a, b)| (a[0] - b[0]).abs() + (a[1] - b[1]).abs() + (a[2] - b[2]).abs())
            .sum();
        Ok(sum / (3 * self.rgb.len()) as f64)
    }

    /// Binary PPM (P6, maxval 255), values rounded half-to-even.
    pub fn to_ppm(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend(self.rgb.iter().flatten().map(|&v| quantize(v)));
        out
    }

    /// Binary PGM (P5, maxval 255) of the alpha channel.
    pub fn alpha_to_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend(self.alpha.iter().map(|&v| quantize(v)));
        out
    }

    /// Parses a binary PPM (P6, maxval ≤ 255). Alpha is derived as in
    /// [`RenderedImage::from_rgb`].
    pub fn from_ppm(bytes: &[u8]) -> Result<Self> {
        let (width, height, maxval, data) = parse_pnm_header(bytes, b"P6")?;
        let need = width * height * 3;
        if data.len() < need {
            return Err(Error::parse("ppm", format!("expected {need} data bytes, found {}", data.len())));
        }
        let rgb = data[..need]
            .chunks_exact(3)
            .map(|p| [p[0] as f64 / maxval, p[1] as f64 / maxval, p[2] as f64 / maxval])
            .collect();
        Self::from_rgb(width, height, rgb)
    }

    pub fn write_ppm(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_ppm()).map_err(|e| Error::io(path, e))
    }

    pub fn write_alpha_pgm(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.alpha_to_pgm()).map_err(|e| Error::io(path, e))
    }

    /// Replaces alpha with a binary PGM (P5) of matching size.
    pub fn with_alpha_pgm(self, bytes: &[u8]) -> Result<Self> {
        let (width, height, maxval, data) = parse_pnm_header(bytes, b"P5")?;
        if (width, height) != (self.width, self.height) {
            return Err(Error::parse(
                "pgm",
                format!("alpha is {width}×{height} but color is {}×{}", self.width, self.height),
            ));
        }
        if data.len() < width * height {
            return Err(Error::parse("pgm", format!("expected {} data bytes, found {}", width * height, data.len())));
        }
        let alpha = data[..width * height].iter().map(|&b| b as f64 / maxval).collect();
        Self::new(width, height, self.rgb, alpha)
    }

    /// Reads a color PPM and its alpha PGM.
    pub fn read_with_alpha(ppm: &Path, pgm: &Path) -> Result<Self> {
        let bytes = std::fs::read(pgm).map_err(|e| Error::io(pgm, e))?;
        Self::read_ppm(ppm)?.with_alpha_pgm(&bytes).map_err(|e| match e {
            Error::Parse { message, .. } => Error::parse(pgm.display().to_string(), message),
            other => other,
        })
    }

    pub fn read_ppm(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_ppm(&bytes).map_err(|e| match e {
            Error::Parse { message, .. } => Error::parse(path.display().to_string(), message),
            other => other,
        })
    }
}

fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round_ties_even() as u8
}

fn parse_pnm_header<'a>(bytes: &'a [u8], magic: &[u8]) -> Result<(usize, usize, f64, &'a [u8])> {
    if !bytes.starts_with(magic) {
        return Err(Error::parse("pnm", format!("missing {} magic", String::from_utf8_lossy(magic))));
    }
    let mut pos = magic.len();
    let mut fields = [0usize; 3];
    for field in &mut fields {
        // Skip whitespace and comments.
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                _ => break,
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::parse("ppm", "malformed header"))?;
    }
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(Error::parse("ppm", "malformed header"));
    }
    let [width, height, maxval] = fields;
    if width == 0 || height == 0 || maxval == 0 || maxval > 255 {
        return Err(Error::parse("ppm", format!("unsupported dimensions {width}×{height}, maxval {maxval}")));
    }
    Ok((width, height, maxval as f64, &bytes[pos + 1..]))
}
