//! Baseline JPEG quantization round trip (no entropy coding) and a
//! straight-through training surrogate.

use std::f64::consts::PI;
use std::sync::OnceLock;

use crate::image::{quantize_u8, Image};

const LUMA: [u16; 64] = [
    16, 11, 10, 16, 24, 40, 51, 61, 12, 12, 14, 19, 26, 58, 60, 55, 14, 13, 16, 24, 40, 57, 69, 56, 14, 17, 22, 29, 51, 87, 80, 62, 18, 22, 37, 56, 68,
    109, 103, 77, 24, 35, 55, 64, 81, 104, 113, 92, 49, 64, 78, 87, 103, 121, 120, 101, 72, 92, 95, 98, 112, 100, 103, 99,
];

const CHROMA: [u16; 64] = [
    17, 18, 24, 47, 99, 99, 99, 99, 18, 21, 26, 66, 99, 99, 99, 99, 24, 26, 56, 99, 99, 99, 99, 99, 47, 66, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99,
    99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99,
];

/// Annex-K table scaled by quality with the IJG convention.
pub fn scaled_table(base: &[u16; 64], quality: u8) -> [f64; 64] {
    let q = quality.clamp(1, 100) as f64;
    let scale = if q < 50.0 { 5000.0 / q } else { 200.0 - 2.0 * q };
    std::array::from_fn(|i| ((base[i] as f64 * scale + 50.0) / 100.0).floor().clamp(1.0, 255.0))
}

fn dct_matrix() -> &'static [[f64; 8]; 8] {
    static M: OnceLock<[[f64; 8]; 8]> = OnceLock::new();
    M.get_or_init(|| {
        std::array::from_fn(|u| {
            let a = if u == 0 { (1.0f64 / 8.0).sqrt() } else { (2.0f64 / 8.0).sqrt() };
            std::array::from_fn(|x| a * ((2 * x + 1) as f64 * u as f64 * PI / 16.0).cos())
        })
    })
}

fn dct8x8(block: &[f64; 64]) -> [f64; 64] {
    let m = dct_matrix();
    let mut tmp = [0.0; 64];
    for u in 0..8 {
        for y in 0..8 {
            tmp[u * 8 + y] = (0..8).map(|x| m[u][x] * block[y * 8 + x]).sum();
        }
    }
    let mut out = [0.0; 64];
    for v in 0..8 {
        for u in 0..8 {
            out[v * 8 + u] = (0..8).map(|y| m[v][y] * tmp[u * 8 + y]).sum();
        }
    }
    out
}

fn idct8x8(coef: &[f64; 64]) -> [f64; 64] {
    let m = dct_matrix();
    let mut tmp = [0.0; 64];
    for u in 0..8 {
        for y in 0..8 {
            tmp[u * 8 + y] = (0..8).map(|v| m[v][y] * coef[v * 8 + u]).sum();
        }
    }
    let mut out = [0.0; 64];
    for y in 0..8 {
        for x in 0..8 {
            out[y * 8 + x] = (0..8).map(|u| m[u][x] * tmp[u * 8 + y]).sum();
        }
    }
    out
}

fn rgb_to_ycc(r: f64, g: f64, b: f64) -> [f64; 3] {
    [
        0.299 * r + 0.587 * g + 0.114 * b,
        -0.168_736 * r - 0.331_264 * g + 0.5 * b + 128.0,
        0.5 * r - 0.418_688 * g - 0.081_312 * b + 128.0,
    ]
}

fn ycc_to_rgb(y: f64, cb: f64, cr: f64) -> [f64; 3] {
    let (cb, cr) = (cb - 128.0, cr - 128.0);
    [y + 1.402 * cr, y - 0.344_136 * cb - 0.714_136 * cr, y + 1.772 * cb]
}

/// Quantize–dequantize every 8×8 block of a plane (0..255 scale) in place.
fn quantize_plane(p: &mut [f64], w: usize, h: usize, table: &[f64; 64]) {
    for by in (0..h).step_by(8) {
        for bx in (0..w).step_by(8) {
            let block: [f64; 64] = std::array::from_fn(|i| p[(by + i / 8) * w + bx + i % 8] - 128.0);
            let mut c = dct8x8(&block);
            for (v, q) in c.iter_mut().zip(table) {
                *v = (*v / q).round() * q;
            }
            let r = idct8x8(&c);
            for i in 0..64 {
                p[(by + i / 8) * w + bx + i % 8] = r[i] + 128.0;
            }
        }
    }
}

/// Planes in 0..255 YCbCr, replicate-padded to multiples of `align`.
fn to_ycc_planes(img: &Image, align: usize, round_input: bool) -> (Vec<Vec<f64>>, usize, usize) {
    let pw = img.width.div_ceil(align) * align;
    let ph = img.height.div_ceil(align) * align;
    let mut planes = vec![vec![0.0; pw * ph]; 3];
    for y in 0..ph {
        for x in 0..pw {
            let (sx, sy) = (x.min(img.width - 1), y.min(img.height - 1));
            let px = |c| {
                let v = img.get(sx, sy, c);
                if round_input {
                    quantize_u8(v) as f64
                } else {
                    v * 255.0
                }
            };
            let ycc = rgb_to_ycc(px(0), px(1), px(2));
            for c in 0..3 {
                planes[c][y * pw + x] = ycc[c];
            }
        }
    }
    (planes, pw, ph)
}

fn from_ycc_planes(planes: &[Vec<f64>], pw: usize, w: usize, h: usize, round_output: bool) -> Image {
    Image::from_fn(w, h, |x, y, c| {
        let i = y * pw + x;
        let v = ycc_to_rgb(planes[0][i], planes[1][i], planes[2][i])[c];
        if round_output {
            v.round().clamp(0.0, 255.0) / 255.0
        } else {
            v.clamp(0.0, 255.0) / 255.0
        }
    })
}

/// Baseline codec round trip: 8-bit input, YCbCr 4:2:0, scaled Annex-K
/// quantization, 8-bit output.
pub fn jpeg_roundtrip(img: &Image, quality: u8) -> Image {
    if img.width == 0 || img.height == 0 {
        return img.clone();
    }
    let (mut planes, pw, ph) = to_ycc_planes(img, 16, true);
    quantize_plane(&mut planes[0], pw, ph, &scaled_table(&LUMA, quality));
    let (cw, chh) = (pw / 2, ph / 2);
    let ctable = scaled_table(&CHROMA, quality);
    for plane in planes.iter_mut().skip(1) {
        let mut sub: Vec<f64> = (0..cw * chh)
            .map(|i| {
                let (x, y) = (i % cw, i / cw);
                0.25 * (plane[2 * y * pw + 2 * x] + plane[2 * y * pw + 2 * x + 1] + plane[(2 * y + 1) * pw + 2 * x] + plane[(2 * y + 1) * pw + 2 * x + 1])
            })
            .collect();
        quantize_plane(&mut sub, cw, chh, &ctable);
        for y in 0..ph {
            for x in 0..pw {
                plane[y * pw + x] = sub[(y / 2) * cw + x / 2];
            }
        }
    }
    from_ycc_planes(&planes, pw, img.width, img.height, true)
}

/// Training surrogate: full-resolution YCbCr block DCT quantization whose
/// rounding is treated as the identity when differentiating. The returned
/// mask marks samples where the final clip to [0, 1] was inactive.
pub fn jpeg_surrogate(img: &Image, quality: u8) -> (Image, Vec<bool>) {
    if img.width == 0 || img.height == 0 {
        return (img.clone(), Vec::new());
    }
    let (mut planes, pw, ph) = to_ycc_planes(img, 8, false);
    quantize_plane(&mut planes[0], pw, ph, &scaled_table(&LUMA, quality));
    let ctable = scaled_table(&CHROMA, quality);
    quantize_plane(&mut planes[1], pw, ph, &ctable);
    quantize_plane(&mut planes[2], pw, ph, &ctable);
    let mut mask = Vec::with_capacity(img.data.len());
    for y in 0..img.height {
        for x in 0..img.width {
            let i = y * pw + x;
            let rgb = ycc_to_rgb(planes[0][i], planes[1][i], planes[2][i]);
            mask.extend(rgb.iter().map(|v| (0.0..=255.0).contains(v)));
        }
    }
    (from_ycc_planes(&planes, pw, img.width, img.height, false), mask)
}
