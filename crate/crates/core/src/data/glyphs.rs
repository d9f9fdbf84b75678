//! Fixed glyph masks and background palette for the colored-glyph images.

pub const GLYPH_SIDE: usize = 16;
pub const PALETTE_SIZE: usize = 10;

// 5×7 digit font, one string per row, '#' = ink.
const FONT: [[&str; 7]; PALETTE_SIZE] = [
    [
        ".###.", "#...#", "#..##", "#.#.#", "##..#", "#...#", ".###.",
    ],
    [
        "..#..", ".##..", "..#..", "..#..", "..#..", "..#..", ".###.",
    ],
    [
        ".###.", "#...#", "....#", "...#.", "..#..", ".#...", "#####",
    ],
    [
        "#####", "...#.", "..#..", "...#.", "....#", "#...#", ".###.",
    ],
    [
        "...#.", "..##.", ".#.#.", "#..#.", "#####", "...#.", "...#.",
    ],
    [
        "#####", "#....", "####.", "....#", "....#", "#...#", ".###.",
    ],
    [
        "..##.", ".#...", "#....", "####.", "#...#", "#...#", ".###.",
    ],
    [
        "#####", "....#", "...#.", "..#..", ".#...", ".#...", ".#...",
    ],
    [
        ".###.", "#...#", "#...#", ".###.", "#...#", "#...#", ".###.",
    ],
    [
        ".###.", "#...#", "#...#", ".####", "....#", "...#.", ".##..",
    ],
];

/// 16×16 binary mask for class `c` (row-major, `true` = glyph pixel): the
/// 5×7 digit scaled by two and placed at row 1, column 3.
pub fn glyph_mask(c: usize) -> [[bool; GLYPH_SIDE]; GLYPH_SIDE] {
    let mut m = [[false; GLYPH_SIDE]; GLYPH_SIDE];
    for (r, row) in FONT[c].iter().enumerate() {
        for (col, ch) in row.bytes().enumerate() {
            if ch == b'#' {
                for dr in 0..2 {
                    for dc in 0..2 {
                        m[1 + 2 * r + dr][3 + 2 * col + dc] = true;
                    }
                }
            }
        }
    }
    m
}

/// Ten hue-equispaced, fully saturated RGB colors (hue = 36°·c).
pub fn palette() -> [[f64; 3]; PALETTE_SIZE] {
    let mut p = [[0.0; 3]; PALETTE_SIZE];
    for (c, rgb) in p.iter_mut().enumerate() {
        *rgb = hsv_to_rgb(36.0 * c as f64, 1.0, 1.0);
    }
    p
}

fn hsv_to_rgb(h: f64, s: f64, v: f64) -> [f64; 3] {
    let c = v * s;
    let hp = h / 60.0;
    let x = c * (1.0 - ((hp % 2.0) - 1.0).abs());
    let (r, g, b) = match hp as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    [r + m, g + m, b + m]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn masks_are_distinct_and_leave_background() {
        let masks: Vec<_> = (0..PALETTE_SIZE).map(glyph_mask).collect();
        for (i, a) in masks.iter().enumerate() {
            let ink = a.iter().flatten().filter(|&&p| p).count();
            assert!(ink > 20 && ink < 128, "class {i} ink {ink}");
            for b in &masks[i + 1..] {
                assert_ne!(a, b);
            }
        }
    }

    #[test]
    fn palette_colors_are_separated() {
        let p = palette();
        assert_eq!(p[0], [1.0, 0.0, 0.0]);
        for i in 0..PALETTE_SIZE {
            for j in i + 1..PALETTE_SIZE {
                let d: f64 = (0..3)
                    .map(|k| (p[i][k] - p[j][k]).powi(2))
                    .sum::<f64>()
                    .sqrt();
                assert!(d > 0.3, "{i} vs {j}: {d}");
            }
        }
    }
}
