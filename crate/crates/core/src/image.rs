//! Linear RGB render targets.

use std::fs;
use std::path::Path;

use crate::color::{luminance, Rgb};
use crate::error::{Error, Result};
use crate::io::{self, Format, Raster};

#[derive(Debug, Clone, PartialEq)]
pub struct LinearImage {
    width: usize,
    height: usize,
    data: Vec<Rgb>,
    mask: Option<Vec<bool>>,
}

impl LinearImage {
    pub fn new(width: usize, height: usize, data: Vec<Rgb>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::DimensionMismatch(format!(
                "{} pixels for a {width}x{height} image",
                data.len()
            )));
        }
        if let Some(bad) = data.iter().flatten().find(|c| !c.is_finite() || **c < 0.0) {
            return Err(Error::invalid(format!(
                "pixel values must be finite and >= 0, found {bad}"
            )));
        }
        Ok(Self {
            width,
            height,
            data,
            mask: None,
        })
    }

    pub fn black(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![[0.0; 3]; width * height],
            mask: None,
        }
    }

    pub fn filled(width: usize, height: usize, value: Rgb) -> Self {
        Self {
            data: vec![value; width * height],
            ..Self::black(width, height)
        }
    }

    pub fn with_mask(mut self, mask: Vec<bool>) -> Result<Self> {
        if mask.len() != self.data.len() {
            return Err(Error::DimensionMismatch(format!(
                "mask has {} entries for {} pixels",
                mask.len(),
                self.data.len()
            )));
        }
        self.mask = Some(mask);
        Ok(self)
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

    pub fn pixels(&self) -> &[Rgb] {
        &self.data
    }

    pub fn pixel(&self, x: usize, y: usize) -> Rgb {
        self.data[y * self.width + x]
    }

    pub fn mask(&self) -> Option<&[bool]> {
        self.mask.as_deref()
    }

    pub fn luminance(&self) -> Vec<f64> {
        self.data.iter().map(|p| luminance(*p)).collect()
    }

    pub fn max_value(&self) -> f32 {
        self.data.iter().flatten().copied().fold(0.0, f32::max)
    }

    pub fn scaled(&self, k: f64) -> Self {
        Self {
            data: self
                .data
                .iter()
                .map(|p| p.map(|c| (c as f64 * k) as f32))
                .collect(),
            ..self.clone()
        }
    }

    pub(crate) fn check_same_dims(&self, other: &Self) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} vs {}x{}",
                self.width, self.height, other.width, other.height
            )));
        }
        Ok(())
    }

    pub(crate) fn from_parts(width: usize, height: usize, data: Vec<Rgb>, mask: Option<Vec<bool>>) -> Self {
        Self {
            width,
            height,
            data,
            mask,
        }
    }

    pub fn to_raster(&self) -> Raster {
        Raster {
            width: self.width,
            height: self.height,
            pixels: self.data.clone(),
        }
    }

    /// `.pfm` keeps exact floats; `.png` is tonemapped at exposure 1.
    pub fn save(&self, path: &Path) -> Result<()> {
        io::write_raster(&self.to_raster(), path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let r = io::read_raster(path)?;
        Self::new(r.width, r.height, r.pixels)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let r = io::decode(bytes, Format::sniff(bytes)?)?;
        Self::new(r.width, r.height, r.pixels)
    }

    /// 8-bit sRGB, row-major RGB triples.
    pub fn tonemap(&self, exposure: f64) -> Result<Vec<u8>> {
        tonemap(self, exposure)
    }

    pub fn to_png(&self, exposure: f64) -> Result<Vec<u8>> {
        io::encode_png_srgb8(self.width, self.height, &self.tonemap(exposure)?)
    }

    pub fn save_mask(&self, path: &Path) -> Result<()> {
        let mask = self
            .mask
            .as_ref()
            .ok_or_else(|| Error::invalid("image has no mask"))?;
        let values: Vec<f32> = mask.iter().map(|&m| if m { 1.0 } else { 0.0 }).collect();
        let bytes = io::encode_pfm_gray(self.width, self.height, &values);
        fs::write(path, bytes).map_err(|e| Error::io(path, e))
    }
}

/// Loads a mask raster: a pixel is selected when its first channel exceeds 0.5.
pub fn load_mask(path: &Path) -> Result<(usize, usize, Vec<bool>)> {
    let r = io::read_raster(path)?;
    Ok((r.width, r.height, r.pixels.iter().map(|p| p[0] > 0.5).collect()))
}

/// `clamp(exposure * linear, 0, 1)` then sRGB-encode to 8 bits.
pub fn tonemap(img: &LinearImage, exposure: f64) -> Result<Vec<u8>> {
    if !(exposure > 0.0 && exposure.is_finite()) {
        return Err(Error::invalid(format!("exposure must be > 0, got {exposure}")));
    }
    Ok(io::to_srgb8(&img.data, exposure))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::color::srgb_decode_u8;

    #[test]
    fn tonemap_rules() {
        let black = LinearImage::black(2, 2);
        assert!(tonemap(&black, 1.0).unwrap().iter().all(|&b| b == 0));
        let exposure = 4.0;
        let img = LinearImage::filled(1, 1, [0.25; 3]);
        assert_eq!(tonemap(&img, exposure).unwrap(), vec![255; 3]);
        assert!(tonemap(&img, 0.0).is_err());
        assert!(tonemap(&img, -1.0).is_err());
    }

    #[test]
    fn tonemap_decode_error_is_below_one_code() {
        let data: Vec<Rgb> = (0..=1000).map(|k| [k as f32 / 1000.0; 3]).collect();
        let img = LinearImage::new(data.len(), 1, data.clone()).unwrap();
        let codes = tonemap(&img, 1.0).unwrap();
        for (k, p) in data.iter().enumerate() {
            let back = srgb_decode_u8(codes[3 * k]);
            // compare in the encoded domain: at most half a code away
            let enc = crate::color::srgb_encode(p[0] as f64);
            let enc_back = crate::color::srgb_encode(back);
            assert!((enc - enc_back).abs() < 1.0 / 255.0);
        }
    }

    #[test]
    fn rejects_negative_and_mismatched() {
        assert!(LinearImage::new(1, 1, vec![[-0.1, 0.0, 0.0]]).is_err());
        assert!(LinearImage::new(2, 1, vec![[0.0; 3]]).is_err());
        assert!(LinearImage::black(2, 2).with_mask(vec![true; 3]).is_err());
    }

    #[test]
    fn pfm_save_load() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.pfm");
        let img = LinearImage::new(3, 2, (0..6).map(|k| [k as f32, 0.5, 2.0]).collect()).unwrap();
        img.save(&p).unwrap();
        assert_eq!(LinearImage::load(&p).unwrap(), img);
    }
}
