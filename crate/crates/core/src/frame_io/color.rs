/// Relative-luminance weights for `(r, g, b)`.
pub const LUMA_WEIGHTS: [f64; 3] = [0.2126, 0.7152, 0.0722];

#[inline]
pub(crate) fn luma(r: f32, g: f32, b: f32) -> f32 {
    let y = LUMA_WEIGHTS[0] * r as f64 + LUMA_WEIGHTS[1] * g as f64 + LUMA_WEIGHTS[2] * b as f64;
    y.clamp(0.0, 1.0) as f32
}

/// Hexcone RGB to HSV. Hue is in `[0, 1)`; achromatic pixels get hue 0.
pub fn rgb_to_hsv(r: f64, g: f64, b: f64) -> (f64, f64, f64) {
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let chroma = max - min;
    let s = if max > 0.0 { chroma / max } else { 0.0 };
    if chroma <= 0.0 {
        return (0.0, s, max);
    }
    let sector = if max == r {
        ((g - b) / chroma).rem_euclid(6.0)
    } else if max == g {
        (b - r) / chroma + 2.0
    } else {
        (r - g) / chroma + 4.0
    };
    let mut h = sector / 6.0;
    if h >= 1.0 {
        h -= 1.0;
    }
    (h, s, max)
}

pub fn hsv_to_rgb(h: f64, s: f64, v: f64) -> (f64, f64, f64) {
    let chroma = v * s;
    let sector = h.rem_euclid(1.0) * 6.0;
    let x = chroma * (1.0 - ((sector % 2.0) - 1.0).abs());
    let (r, g, b) = match sector as u32 {
        0 => (chroma, x, 0.0),
        1 => (x, chroma, 0.0),
        2 => (0.0, chroma, x),
        3 => (0.0, x, chroma),
        4 => (x, 0.0, chroma),
        _ => (chroma, 0.0, x),
    };
    let m = v - chroma;
    (r + m, g + m, b + m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn hsv_round_trip_on_random_pixels() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut worst = 0.0f64;
        for _ in 0..1000 {
            let (r, g, b): (f64, f64, f64) = (rng.random(), rng.random(), rng.random());
            let (h, s, v) = rgb_to_hsv(r, g, b);
            assert!((0.0..1.0).contains(&h));
            let (r2, g2, b2) = hsv_to_rgb(h, s, v);
            worst = worst.max((r - r2).abs()).max((g - g2).abs()).max((b - b2).abs());
        }
        assert!(worst <= 1e-6, "worst round-trip error {worst}");
    }

    #[test]
    fn blue_and_magenta_hues() {
        let (h, _, _) = rgb_to_hsv(0.0, 0.0, 1.0);
        assert!((h - 2.0 / 3.0).abs() < 1e-12);
        let (h, _, _) = rgb_to_hsv(1.0, 0.0, 1.0);
        assert!((h - 5.0 / 6.0).abs() < 1e-12);
    }
}
