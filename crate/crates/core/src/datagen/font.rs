//! A 5x7 bitmap digit font and helpers for stamping glyphs onto a canvas.

/// Rows of each digit, most significant of the low 5 bits is the left column.
const DIGITS: [[u8; 7]; 10] = [
    [0x0E, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0E],
    [0x04, 0x0C, 0x04, 0x04, 0x04, 0x04, 0x0E],
    [0x0E, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1F],
    [0x1F, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0E],
    [0x02, 0x06, 0x0A, 0x12, 0x1F, 0x02, 0x02],
    [0x1F, 0x10, 0x1E, 0x01, 0x01, 0x11, 0x0E],
    [0x06, 0x08, 0x10, 0x1E, 0x11, 0x11, 0x0E],
    [0x1F, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08],
    [0x0E, 0x11, 0x11, 0x0E, 0x11, 0x11, 0x0E],
    [0x0E, 0x11, 0x11, 0x0F, 0x01, 0x02, 0x0C],
];

pub const GLYPH_W: usize = 5;
pub const GLYPH_H: usize = 7;

/// Whether pixel `(x, y)` of digit `d` is set.
pub fn digit_pixel(d: u8, x: usize, y: usize) -> bool {
    DIGITS[d as usize][y] >> (GLYPH_W - 1 - x) & 1 == 1
}

/// A grayscale image in row-major order.
#[derive(Clone, Debug, PartialEq)]
pub struct Canvas {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<f64>,
}

impl Canvas {
    pub fn new(width: usize, height: usize) -> Self {
        Canvas {
            width,
            height,
            pixels: vec![0.0; width * height],
        }
    }

    /// Raises pixel `(x, y)` to at least `v`; out-of-range writes are dropped.
    pub fn paint(&mut self, x: usize, y: usize, v: f64) {
        if x < self.width && y < self.height {
            let p = &mut self.pixels[y * self.width + x];
            *p = p.max(v);
        }
    }

    /// Stamps a source bitmap scaled by nearest neighbour into the
    /// `w x h` rectangle at `(x0, y0)`.
    pub fn stamp<F: Fn(usize, usize) -> f64>(&mut self, x0: usize, y0: usize, w: usize, h: usize, src_w: usize, src_h: usize, src: F) {
        for dy in 0..h {
            for dx in 0..w {
                let v = src(dx * src_w / w, dy * src_h / h);
                if v > 0.0 {
                    self.paint(x0 + dx, y0 + dy, v);
                }
            }
        }
    }

    pub fn stamp_digit(&mut self, d: u8, x0: usize, y0: usize, scale: usize) {
        self.stamp(x0, y0, GLYPH_W * scale, GLYPH_H * scale, GLYPH_W, GLYPH_H, |x, y| {
            if digit_pixel(d, x, y) {
                1.0
            } else {
                0.0
            }
        });
    }

    /// Adds `noise()` to every pixel and clips to `[0, 1]`.
    pub fn add_noise<F: FnMut() -> f64>(&mut self, mut noise: F) {
        for p in &mut self.pixels {
            *p = (*p + noise()).clamp(0.0, 1.0);
        }
    }

    /// Pixel values rounded to three decimals, which keeps JSONL files small.
    pub fn into_quantized(self) -> Vec<f64> {
        self.pixels.into_iter().map(|v| (v * 1000.0).round() / 1000.0).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn glyphs_are_distinct() {
        for a in 0..10u8 {
            for b in (a + 1)..10 {
                let differs = (0..GLYPH_H).any(|y| (0..GLYPH_W).any(|x| digit_pixel(a, x, y) != digit_pixel(b, x, y)));
                assert!(differs, "{a} and {b}");
            }
        }
    }

    #[test]
    fn one_has_a_stem() {
        assert!((0..GLYPH_H).all(|y| digit_pixel(1, 2, y)));
    }

    #[test]
    fn stamp_scales() {
        let mut c = Canvas::new(20, 20);
        c.stamp_digit(8, 1, 1, 2);
        // top row of 8 is 01110: canvas columns 3..=8 at scale 2
        assert_eq!(c.pixels[20 + 2], 0.0);
        assert_eq!(c.pixels[20 + 3], 1.0);
        assert_eq!(c.pixels[2 * 20 + 8], 1.0);
        assert_eq!(c.pixels[20 + 9], 0.0);
    }
}
