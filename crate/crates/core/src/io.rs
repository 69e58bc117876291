//! Raster containers: PFM, Radiance RGBE and 8-bit sRGB PNG.
//!
//! Everything here works on top-to-bottom, row-major linear RGB buffers.
//! Orientation conversions (PFM stores bottom row first) happen inside the
//! codecs.

use std::fs;
use std::io::Cursor;
use std::path::Path;

use image::codecs::hdr::{HdrDecoder, HdrEncoder};
use image::{ImageDecoder, ImageEncoder};

use crate::color::{srgb_decode_u8, srgb_encode_u8, Rgb};
use crate::error::{Error, Result};

/// A decoded linear RGB raster.
#[derive(Debug, Clone, PartialEq)]
pub struct Raster {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<Rgb>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Pfm,
    Hdr,
    Png,
}

impl Format {
    pub fn from_path(path: &Path) -> Result<Self> {
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .map(|e| e.to_ascii_lowercase());
        match ext.as_deref() {
            Some("pfm") => Ok(Format::Pfm),
            Some("hdr") => Ok(Format::Hdr),
            Some("png") => Ok(Format::Png),
            _ => Err(Error::UnsupportedFormat(path.display().to_string())),
        }
    }

    /// Sniff the container from its leading bytes.
    pub fn sniff(bytes: &[u8]) -> Result<Self> {
        if bytes.starts_with(b"PF") || bytes.starts_with(b"Pf") {
            Ok(Format::Pfm)
        } else if bytes.starts_with(b"#?") {
            Ok(Format::Hdr)
        } else if bytes.starts_with(&[0x89, b'P', b'N', b'G']) {
            Ok(Format::Png)
        } else {
            Err(Error::UnsupportedFormat("unrecognized image signature".into()))
        }
    }
}

pub fn read_raster(path: &Path) -> Result<Raster> {
    let format = Format::from_path(path)?;
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes, format)
}

pub fn write_raster(raster: &Raster, path: &Path) -> Result<()> {
    let format = Format::from_path(path)?;
    let bytes = encode(raster, format)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn decode(bytes: &[u8], format: Format) -> Result<Raster> {
    match format {
        Format::Pfm => decode_pfm(bytes),
        Format::Hdr => decode_hdr(bytes),
        Format::Png => decode_png(bytes),
    }
}

pub fn encode(raster: &Raster, format: Format) -> Result<Vec<u8>> {
    match format {
        Format::Pfm => Ok(encode_pfm(raster)),
        Format::Hdr => encode_hdr(raster),
        Format::Png => encode_png(raster, 1.0),
    }
}

/// Color PFM, little-endian (scale -1.0).
pub fn encode_pfm(raster: &Raster) -> Vec<u8> {
    let header = format!("PF\n{} {}\n-1.0\n", raster.width, raster.height);
    let mut out = Vec::with_capacity(header.len() + raster.pixels.len() * 12);
    out.extend_from_slice(header.as_bytes());
    for row in raster.pixels.chunks(raster.width.max(1)).rev() {
        for px in row {
            for c in px {
                out.extend_from_slice(&c.to_le_bytes());
            }
        }
    }
    out
}

/// Single-channel PFM ("Pf"), little-endian.
pub fn encode_pfm_gray(width: usize, height: usize, values: &[f32]) -> Vec<u8> {
    let header = format!("Pf\n{} {}\n-1.0\n", width, height);
    let mut out = Vec::with_capacity(header.len() + values.len() * 4);
    out.extend_from_slice(header.as_bytes());
    for row in values.chunks(width.max(1)).rev() {
        for v in row {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

/// Decodes color or grayscale PFM. Grayscale is replicated into RGB.
pub fn decode_pfm(bytes: &[u8]) -> Result<Raster> {
    let mut pos = 0usize;
    let mut token = || -> Result<String> {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::Decode("truncated PFM header".into()));
        }
        Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
    };
    let magic = token()?;
    let channels = match magic.as_str() {
        "PF" => 3,
        "Pf" => 1,
        other => return Err(Error::Decode(format!("bad PFM magic {other:?}"))),
    };
    let parse_dim = |s: String| -> Result<usize> {
        s.parse()
            .map_err(|_| Error::Decode(format!("bad PFM dimension {s:?}")))
    };
    let width = parse_dim(token()?)?;
    let height = parse_dim(token()?)?;
    let scale_str = token()?;
    let scale: f32 = scale_str
        .parse()
        .map_err(|_| Error::Decode(format!("bad PFM scale {scale_str:?}")))?;
    // exactly one whitespace byte separates the header from the payload
    let data = &bytes[(pos + 1).min(bytes.len())..];
    let expected = width * height * channels * 4;
    if data.len() < expected {
        return Err(Error::Decode(format!(
            "PFM payload too short: {} < {}",
            data.len(),
            expected
        )));
    }
    let little = scale < 0.0;
    let read = |i: usize| -> f32 {
        let b = [data[4 * i], data[4 * i + 1], data[4 * i + 2], data[4 * i + 3]];
        if little {
            f32::from_le_bytes(b)
        } else {
            f32::from_be_bytes(b)
        }
    };
    let mut pixels = vec![[0.0f32; 3]; width * height];
    for file_row in 0..height {
        let row = height - 1 - file_row;
        for x in 0..width {
            let base = (file_row * width + x) * channels;
            pixels[row * width + x] = if channels == 3 {
                [read(base), read(base + 1), read(base + 2)]
            } else {
                let v = read(base);
                [v, v, v]
            };
        }
    }
    Ok(Raster {
        width,
        height,
        pixels,
    })
}

fn decode_hdr(bytes: &[u8]) -> Result<Raster> {
    let decoder =
        HdrDecoder::new(Cursor::new(bytes)).map_err(|e| Error::Decode(e.to_string()))?;
    let (width, height) = decoder.dimensions();
    let mut buf = vec![0u8; decoder.total_bytes() as usize];
    decoder
        .read_image(&mut buf)
        .map_err(|e| Error::Decode(e.to_string()))?;
    let pixels = buf
        .chunks_exact(12)
        .map(|c| {
            let f = |k: usize| f32::from_ne_bytes([c[k], c[k + 1], c[k + 2], c[k + 3]]);
            [f(0), f(4), f(8)]
        })
        .collect();
    Ok(Raster {
        width: width as usize,
        height: height as usize,
        pixels,
    })
}

fn encode_hdr(raster: &Raster) -> Result<Vec<u8>> {
    let data: Vec<image::Rgb<f32>> = raster.pixels.iter().map(|p| image::Rgb(*p)).collect();
    let mut out = Vec::new();
    HdrEncoder::new(&mut out)
        .encode(&data, raster.width, raster.height)
        .map_err(|e| Error::Decode(e.to_string()))?;
    Ok(out)
}

fn decode_png(bytes: &[u8]) -> Result<Raster> {
    let img = image::load_from_memory_with_format(bytes, image::ImageFormat::Png)
        .map_err(|e| Error::Decode(e.to_string()))?;
    let rgb = img.to_rgb8();
    let (width, height) = rgb.dimensions();
    let pixels = rgb
        .pixels()
        .map(|p| {
            [
                srgb_decode_u8(p[0]) as f32,
                srgb_decode_u8(p[1]) as f32,
                srgb_decode_u8(p[2]) as f32,
            ]
        })
        .collect();
    Ok(Raster {
        width: width as usize,
        height: height as usize,
        pixels,
    })
}

/// Linear values times `exposure`, clipped to [0, 1], sRGB-encoded to 8 bits.
pub fn to_srgb8(pixels: &[Rgb], exposure: f64) -> Vec<u8> {
    pixels
        .iter()
        .flat_map(|p| p.map(|c| srgb_encode_u8(c as f64 * exposure)))
        .collect()
}

pub fn encode_png(raster: &Raster, exposure: f64) -> Result<Vec<u8>> {
    encode_png_srgb8(raster.width, raster.height, &to_srgb8(&raster.pixels, exposure))
}

pub fn encode_png_srgb8(width: usize, height: usize, rgb8: &[u8]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    image::codecs::png::PngEncoder::new(&mut out)
        .write_image(
            rgb8,
            width as u32,
            height as u32,
            image::ExtendedColorType::Rgb8,
        )
        .map_err(|e| Error::Decode(e.to_string()))?;
    Ok(out)
}
