//! Linear per-channel image operators stored as sparse row gathers, so both
//! the operator and its adjoint are available.

use crate::image::{Image, CHANNELS};

#[derive(Debug, Clone, PartialEq)]
pub struct SparseOp {
    pub in_width: usize,
    pub in_height: usize,
    pub out_width: usize,
    pub out_height: usize,
    offsets: Vec<usize>,
    entries: Vec<(u32, f64)>,
}

impl SparseOp {
    fn from_rows(in_width: usize, in_height: usize, out_width: usize, out_height: usize, mut row: impl FnMut(usize, usize, &mut Vec<(u32, f64)>)) -> Self {
        let mut offsets = Vec::with_capacity(out_width * out_height + 1);
        let mut entries = Vec::new();
        offsets.push(0);
        for y in 0..out_height {
            for x in 0..out_width {
                row(x, y, &mut entries);
                offsets.push(entries.len());
            }
        }
        Self {
            in_width,
            in_height,
            out_width,
            out_height,
            offsets,
            entries,
        }
    }

    pub fn identity(w: usize, h: usize) -> Self {
        Self::from_rows(w, h, w, h, |x, y, e| e.push(((y * w + x) as u32, 1.0)))
    }

    pub fn apply(&self, img: &Image) -> Image {
        assert_eq!((img.width, img.height), (self.in_width, self.in_height));
        let mut out = Image::zeros(self.out_width, self.out_height);
        for p in 0..self.out_width * self.out_height {
            let mut acc = [0.0; CHANNELS];
            for &(src, w) in &self.entries[self.offsets[p]..self.offsets[p + 1]] {
                let s = src as usize * CHANNELS;
                for c in 0..CHANNELS {
                    acc[c] += w * img.data[s + c];
                }
            }
            out.data[p * CHANNELS..(p + 1) * CHANNELS].copy_from_slice(&acc);
        }
        out
    }

    pub fn apply_adjoint(&self, grad: &Image) -> Image {
        assert_eq!((grad.width, grad.height), (self.out_width, self.out_height));
        let mut out = Image::zeros(self.in_width, self.in_height);
        for p in 0..self.out_width * self.out_height {
            for &(src, w) in &self.entries[self.offsets[p]..self.offsets[p + 1]] {
                let s = src as usize * CHANNELS;
                for c in 0..CHANNELS {
                    out.data[s + c] += w * grad.data[p * CHANNELS + c];
                }
            }
        }
        out
    }
}

/// Bilinear taps at continuous source coordinate `(sx, sy)`; samples outside
/// the image contribute zero.
fn bilinear_zero(w: usize, h: usize, sx: f64, sy: f64, e: &mut Vec<(u32, f64)>) {
    let x0 = sx.floor();
    let y0 = sy.floor();
    let fx = sx - x0;
    let fy = sy - y0;
    for (dx, dy, wt) in [(0, 0, (1.0 - fx) * (1.0 - fy)), (1, 0, fx * (1.0 - fy)), (0, 1, (1.0 - fx) * fy), (1, 1, fx * fy)] {
        if wt == 0.0 {
            continue;
        }
        let (xi, yi) = (x0 as i64 + dx, y0 as i64 + dy);
        if xi >= 0 && yi >= 0 && (xi as usize) < w && (yi as usize) < h {
            e.push(((yi as usize * w + xi as usize) as u32, wt));
        }
    }
}

/// Rotation by `angle` radians about the image center, zero fill.
pub fn rotation(w: usize, h: usize, angle: f64) -> SparseOp {
    let (cx, cy) = ((w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0);
    let (s, c) = angle.sin_cos();
    SparseOp::from_rows(w, h, w, h, |x, y, e| {
        let (dx, dy) = (x as f64 - cx, y as f64 - cy);
        // inverse map: rotate the output coordinate by −angle
        let sx = c * dx + s * dy + cx;
        let sy = -s * dx + c * dy + cy;
        bilinear_zero(w, h, sx, sy, e);
    })
}

/// Bilinear resize with half-pixel alignment and edge clamping.
pub fn resize(w: usize, h: usize, out_w: usize, out_h: usize) -> SparseOp {
    if (w, h) == (out_w, out_h) {
        return SparseOp::identity(w, h);
    }
    let (rx, ry) = (w as f64 / out_w as f64, h as f64 / out_h as f64);
    SparseOp::from_rows(w, h, out_w, out_h, |x, y, e| {
        let sx = ((x as f64 + 0.5) * rx - 0.5).clamp(0.0, (w - 1) as f64);
        let sy = ((y as f64 + 0.5) * ry - 0.5).clamp(0.0, (h - 1) as f64);
        bilinear_zero(w, h, sx, sy, e);
    })
}

pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let r = (3.0 * sigma).ceil().max(0.0) as i64;
    let mut k: Vec<f64> = (-r..=r).map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp()).collect();
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    k
}

/// One separable pass of a normalized kernel with edge clamping.
pub fn convolve_1d(w: usize, h: usize, kernel: &[f64], horizontal: bool) -> SparseOp {
    let r = (kernel.len() / 2) as i64;
    SparseOp::from_rows(w, h, w, h, |x, y, e| {
        let start = e.len();
        for (t, kv) in kernel.iter().enumerate() {
            let off = t as i64 - r;
            let (xi, yi) = if horizontal {
                ((x as i64 + off).clamp(0, w as i64 - 1) as usize, y)
            } else {
                (x, (y as i64 + off).clamp(0, h as i64 - 1) as usize)
            };
            let idx = (yi * w + xi) as u32;
            if let Some(slot) = e[start..].iter_mut().find(|(i, _)| *i == idx) {
                slot.1 += kv;
            } else {
                e.push((idx, *kv));
            }
        }
    })
}

/// Keep a centered window covering `keep_fraction` of the area, zero elsewhere.
pub fn crop_window(w: usize, h: usize, keep_fraction: f64) -> SparseOp {
    let side = keep_fraction.clamp(0.0, 1.0).sqrt();
    let (cw, ch) = ((w as f64 * side).round() as usize, (h as f64 * side).round() as usize);
    let (x0, y0) = ((w - cw) / 2, (h - ch) / 2);
    SparseOp::from_rows(w, h, w, h, |x, y, e| {
        if x >= x0 && x < x0 + cw && y >= y0 && y < y0 + ch {
            e.push(((y * w + x) as u32, 1.0));
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn test_image(w: usize, h: usize) -> Image {
        Image::from_fn(w, h, |x, y, c| (((x * 13 + y * 7 + c * 3) % 17) as f64) / 17.0)
    }

    fn adjoint_gap(op: &SparseOp) -> f64 {
        let x = test_image(op.in_width, op.in_height);
        let g = Image::from_fn(op.out_width, op.out_height, |x, y, c| ((x + 2 * y + c) as f64 * 0.37).sin());
        let lhs: f64 = op.apply(&x).data.iter().zip(&g.data).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.data.iter().zip(&op.apply_adjoint(&g).data).map(|(a, b)| a * b).sum();
        (lhs - rhs).abs()
    }

    #[test]
    fn zero_rotation_is_identity() {
        let img = test_image(12, 9);
        let out = rotation(12, 9, 0.0).apply(&img);
        for (a, b) in out.data.iter().zip(&img.data) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn adjoints_match() {
        assert!(adjoint_gap(&rotation(10, 8, 0.4)) < 1e-10);
        assert!(adjoint_gap(&resize(10, 8, 7, 6)) < 1e-10);
        assert!(adjoint_gap(&convolve_1d(10, 8, &gaussian_kernel(1.2), true)) < 1e-10);
        assert!(adjoint_gap(&crop_window(10, 8, 0.4)) < 1e-10);
    }

    #[test]
    fn resize_preserves_constants() {
        let img = Image::filled(16, 16, 0.4);
        let out = resize(12, 12, 16, 16).apply(&resize(16, 16, 12, 12).apply(&img));
        assert!(out.data.iter().all(|v| (v - 0.4).abs() < 1e-12));
    }

    #[test]
    fn crop_keeps_centered_area() {
        let op = crop_window(10, 10, 0.36);
        let out = op.apply(&Image::filled(10, 10, 1.0));
        assert!((out.data.iter().sum::<f64>() / 3.0 - 36.0).abs() < 1e-12);
        assert_eq!(out.get(5, 5, 0), 1.0);
        assert_eq!(out.get(0, 0, 0), 0.0);
    }
}
