//! Transfer curves and luminance.

/// Rec.709 luminance weights.
pub const LUMA_709: [f64; 3] = [0.2126, 0.7152, 0.0722];

pub type Rgb = [f32; 3];

#[inline]
pub fn luminance(rgb: Rgb) -> f64 {
    LUMA_709[0] * rgb[0] as f64 + LUMA_709[1] * rgb[1] as f64 + LUMA_709[2] * rgb[2] as f64
}

/// Linear to sRGB-encoded, input clamped to [0, 1].
pub fn srgb_encode(linear: f64) -> f64 {
    let x = linear.clamp(0.0, 1.0);
    if x <= 0.003_130_8 {
        12.92 * x
    } else {
        1.055 * x.powf(1.0 / 2.4) - 0.055
    }
}

pub fn srgb_decode(encoded: f64) -> f64 {
    let x = encoded.clamp(0.0, 1.0);
    if x <= 0.040_45 {
        x / 12.92
    } else {
        ((x + 0.055) / 1.055).powf(2.4)
    }
}

pub fn srgb_encode_u8(linear: f64) -> u8 {
    (srgb_encode(linear) * 255.0).round() as u8
}

pub fn srgb_decode_u8(code: u8) -> f64 {
    srgb_decode(code as f64 / 255.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn endpoints() {
        assert_eq!(srgb_encode_u8(0.0), 0);
        assert_eq!(srgb_encode_u8(1.0), 255);
        assert_eq!(srgb_encode_u8(5.0), 255);
        assert_eq!(srgb_decode_u8(255), 1.0);
    }

    #[test]
    fn curve_is_continuous_at_knee() {
        let lo = srgb_encode(0.003_130_8);
        let hi = srgb_encode(0.003_130_8 + 1e-12);
        assert!((lo - hi).abs() < 1e-6);
    }

    #[test]
    fn code_round_trip_is_identity() {
        for c in 0..=255u8 {
            assert_eq!(srgb_encode_u8(srgb_decode_u8(c)), c);
        }
    }

    #[test]
    fn luma_weights_sum_to_one() {
        assert!((LUMA_709.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!((luminance([1.0, 1.0, 1.0]) - 1.0).abs() < 1e-6);
    }
}
