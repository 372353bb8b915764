//! Binary PGM/PPM writers for feature maps and reconstructions.

/// 8-bit grayscale PGM of one `h x w` map, min-max normalised. A constant
/// map is written as all zeros.
pub fn pgm(map: &[f32], h: usize, w: usize) -> Vec<u8> {
    assert_eq!(map.len(), h * w);
    let lo = map.iter().copied().fold(f32::INFINITY, f32::min);
    let hi = map.iter().copied().fold(f32::NEG_INFINITY, f32::max);
    let span = hi - lo;
    let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
    out.extend(map.iter().map(|&v| {
        if span > 0.0 && span.is_finite() {
            ((v - lo) / span * 255.0).round() as u8
        } else {
            0
        }
    }));
    out
}

/// 8-bit RGB PPM of a channel-planar `[3, h, w]` image with values on the
/// `[0, 1]` scale; values outside are clipped.
pub fn ppm(image: &[f32], h: usize, w: usize) -> Vec<u8> {
    assert_eq!(image.len(), 3 * h * w);
    let plane = h * w;
    let mut out = format!("P6\n{w} {h}\n255\n").into_bytes();
    for p in 0..plane {
        for c in 0..3 {
            out.push((image[c * plane + p].clamp(0.0, 1.0) * 255.0).round() as u8);
        }
    }
    out
}
