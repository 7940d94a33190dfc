//! Minimal raster primitives for overlay images.

use image::{Rgb, RgbImage};

pub fn put(img: &mut RgbImage, x: i64, y: i64, c: Rgb<u8>) {
    if x >= 0 && y >= 0 && (x as u32) < img.width() && (y as u32) < img.height() {
        img.put_pixel(x as u32, y as u32, c);
    }
}

pub fn fill_rect(img: &mut RgbImage, x0: i64, y0: i64, w: i64, h: i64, c: Rgb<u8>) {
    for y in y0..y0 + h {
        for x in x0..x0 + w {
            put(img, x, y, c);
        }
    }
}

/// Outline with the given stroke width, drawn inward.
pub fn rect(img: &mut RgbImage, x0: i64, y0: i64, x1: i64, y1: i64, stroke: i64, c: Rgb<u8>) {
    for k in 0..stroke {
        for x in x0..=x1 {
            put(img, x, y0 + k, c);
            put(img, x, y1 - k, c);
        }
        for y in y0..=y1 {
            put(img, x0 + k, y, c);
            put(img, x1 - k, y, c);
        }
    }
}

/// Bresenham segment.
pub fn line(img: &mut RgbImage, (x0, y0): (i64, i64), (x1, y1): (i64, i64), c: Rgb<u8>) {
    let (dx, dy) = ((x1 - x0).abs(), -(y1 - y0).abs());
    let (sx, sy) = (if x0 < x1 { 1 } else { -1 }, if y0 < y1 { 1 } else { -1 });
    let (mut x, mut y, mut err) = (x0, y0, dx + dy);
    loop {
        put(img, x, y, c);
        if x == x1 && y == y1 {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x += sx;
        }
        if e2 <= dx {
            err += dx;
            y += sy;
        }
    }
}

pub fn disc(img: &mut RgbImage, (cx, cy): (i64, i64), r: i64, c: Rgb<u8>) {
    for y in -r..=r {
        for x in -r..=r {
            if x * x + y * y <= r * r {
                put(img, cx + x, cy + y, c);
            }
        }
    }
}

pub fn cross(img: &mut RgbImage, (cx, cy): (i64, i64), r: i64, c: Rgb<u8>) {
    for k in -r..=r {
        put(img, cx + k, cy + k, c);
        put(img, cx + k, cy - k, c);
    }
}

// 3x5 glyphs, rows top to bottom, 3 bits per row.
fn glyph(ch: char) -> Option<[u8; 5]> {
    Some(match ch {
        '0' => [7, 5, 5, 5, 7],
        '1' => [2, 6, 2, 2, 7],
        '2' => [7, 1, 7, 4, 7],
        '3' => [7, 1, 7, 1, 7],
        '4' => [5, 5, 7, 1, 1],
        '5' => [7, 4, 7, 1, 7],
        '6' => [7, 4, 7, 5, 7],
        '7' => [7, 1, 1, 1, 1],
        '8' => [7, 5, 7, 5, 7],
        '9' => [7, 5, 7, 1, 7],
        'A' => [2, 5, 7, 5, 5],
        'E' => [7, 4, 7, 4, 7],
        'L' => [4, 4, 4, 4, 7],
        ',' => [0, 0, 0, 2, 4],
        ' ' => [0, 0, 0, 0, 0],
        _ => return None,
    })
}

pub const GLYPH_W: i64 = 4;
pub const GLYPH_H: i64 = 6;

/// Width in pixels of `text` at `scale`.
pub fn text_width(text: &str, scale: i64) -> i64 {
    text.chars().count() as i64 * GLYPH_W * scale
}

/// Draws `text` with its top-left corner at `(x, y)`; unknown characters
/// render as a filled block.
pub fn text(img: &mut RgbImage, x: i64, y: i64, text: &str, scale: i64, c: Rgb<u8>) {
    for (i, ch) in text.chars().enumerate() {
        let ox = x + i as i64 * GLYPH_W * scale;
        let rows = glyph(ch).unwrap_or([7; 5]);
        for (r, bits) in rows.iter().enumerate() {
            for col in 0..3 {
                if bits & (4 >> col) != 0 {
                    fill_rect(img, ox + col * scale, y + r as i64 * scale, scale, scale, c);
                }
            }
        }
    }
}
