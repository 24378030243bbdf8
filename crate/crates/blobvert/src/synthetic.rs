//! Procedural test images: cartoon faces for targets and saturated color
//! patterns for the color tolerance harness.

use blobvert_core::canvas::{GrayCanvas, RgbCanvas};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn ellipse(c: &mut [f64], w: usize, cx: f64, cy: f64, rx: f64, ry: f64, v: f64) {
    let h = c.len() / w;
    for y in 0..h {
        for x in 0..w {
            let dx = (x as f64 - cx) / rx;
            let dy = (y as f64 - cy) / ry;
            if dx * dx + dy * dy <= 1.0 {
                c[y * w + x] = v;
            }
        }
    }
}

/// A cartoon face: hair, head, brows, eyes with pupils, cheeks, nose with
/// nostrils and a mouth over a flat background. Everything but the cheeks
/// is mirrored about the vertical axis. Feature positions, sizes and tones
/// vary with `seed`; geometry is laid out for 112 px and scales with
/// `width`.
pub fn face(seed: u64, width: usize, height: usize) -> GrayCanvas {
    assert!(width > 0 && height > 0, "face canvas must be non-empty");
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let s = width as f64 / 112.0;
    let cx = (width as f64 - 1.0) / 2.0;
    let mut c = vec![r.random_range(0.3..0.5); width * height];
    let w = width;

    let hy = 58.0 * s + r.random_range(-3.0..3.0) * s;
    let (hair_rx, hair_ry, hair_v) = (
        r.random_range(34.0..40.0) * s,
        r.random_range(36.0..44.0) * s,
        r.random_range(0.05..0.25),
    );
    ellipse(&mut c, w, cx, hy - 12.0 * s, hair_rx, hair_ry, hair_v);
    let (head_rx, head_ry, head_v) = (
        r.random_range(28.0..34.0) * s,
        r.random_range(38.0..46.0) * s,
        r.random_range(0.5..0.7),
    );
    ellipse(&mut c, w, cx, hy, head_rx, head_ry, head_v);

    let ey = hy - r.random_range(6.0..12.0) * s;
    let ex = r.random_range(11.0..17.0) * s;
    let er = r.random_range(3.0..5.0) * s;
    let by = ey - r.random_range(7.0..10.0) * s;
    let bv = r.random_range(0.1..0.3);
    for sgn in [-1.0, 1.0] {
        ellipse(&mut c, w, cx + sgn * ex, by, er * 2.0, 1.5 * s, bv);
        ellipse(&mut c, w, cx + sgn * ex, ey, er * 1.6, er, 0.9);
        ellipse(&mut c, w, cx + sgn * ex, ey, er * 0.7, er * 0.7, 0.05);
        let cheek_x = r.random_range(30.0..35.0) * s;
        let cheek_v = r.random_range(0.4..0.6);
        ellipse(
            &mut c,
            w,
            cx + sgn * cheek_x,
            ey + 6.0 * s,
            4.0 * s,
            8.0 * s,
            cheek_v,
        );
    }

    let ny = ey + r.random_range(14.0..20.0) * s;
    let nose_v = r.random_range(0.7..0.85);
    ellipse(&mut c, w, cx, ny - 6.0 * s, 2.5 * s, 9.0 * s, nose_v);
    for sgn in [-1.0, 1.0] {
        ellipse(&mut c, w, cx + sgn * 4.0 * s, ny, 2.0 * s, 1.5 * s, 0.2);
    }
    let my = ny + r.random_range(10.0..14.0) * s;
    let (mouth_rx, mouth_ry, mouth_v) = (
        r.random_range(8.0..13.0) * s,
        r.random_range(2.0..4.0) * s,
        r.random_range(0.1..0.3),
    );
    ellipse(&mut c, w, cx, my, mouth_rx, mouth_ry, mouth_v);
    GrayCanvas::from_pixels(width, height, c).expect("valid face canvas")
}

/// Rectangles of fully saturated primary and secondary colors on a random
/// saturated background.
pub fn saturated_color(seed: u64, width: usize, height: usize) -> RgbCanvas {
    assert!(width > 0 && height > 0, "color canvas must be non-empty");
    const PALETTE: [[f64; 3]; 6] = [
        [1.0, 0.0, 0.0],
        [0.0, 1.0, 0.0],
        [0.0, 0.0, 1.0],
        [1.0, 1.0, 0.0],
        [0.0, 1.0, 1.0],
        [1.0, 0.0, 1.0],
    ];
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let mut px = vec![PALETTE[r.random_range(0..PALETTE.len())]; width * height];
    for _ in 0..8 {
        let color = PALETTE[r.random_range(0..PALETTE.len())];
        let x0 = r.random_range(0..width);
        let y0 = r.random_range(0..height);
        let x1 = r.random_range(x0..width) + 1;
        let y1 = r.random_range(y0..height) + 1;
        for y in y0..y1 {
            px[y * width + x0..y * width + x1].fill(color);
        }
    }
    RgbCanvas::from_pixels(width, height, px).expect("valid color canvas")
}
