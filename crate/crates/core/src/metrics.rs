//! PSNR, SSIM and MS-SSIM, with image gradients for the SSIM family.

use crate::error::{Error, Result};
use crate::image::{Image, CHANNELS};

pub const PSNR_CAP: f64 = 99.0;
pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
const C1: f64 = 0.01 * 0.01;
const C2: f64 = 0.03 * 0.03;
/// Standard five-scale MS-SSIM exponents; truncated and renormalized when
/// the image supports fewer scales.
pub const MS_SSIM_WEIGHTS: [f64; 5] = [0.0448, 0.2856, 0.3001, 0.2363, 0.1333];

pub fn mse(a: &Image, b: &Image) -> Result<f64> {
    a.check_shape(b, "mse")?;
    if a.data.is_empty() {
        return Ok(0.0);
    }
    Ok(a.data.iter().zip(&b.data).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.data.len() as f64)
}

pub fn psnr(a: &Image, b: &Image) -> Result<f64> {
    let m = mse(a, b)?;
    if m == 0.0 {
        return Ok(PSNR_CAP);
    }
    Ok((10.0 * (1.0 / m).log10()).min(PSNR_CAP))
}

fn window() -> [f64; SSIM_WINDOW] {
    let r = (SSIM_WINDOW / 2) as f64;
    let mut w: [f64; SSIM_WINDOW] = std::array::from_fn(|i| (-((i as f64 - r).powi(2)) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp());
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= s);
    w
}

/// Separable valid-mode filtering of a `w × h` plane.
fn filter_valid(p: &[f64], w: usize, h: usize, k: &[f64]) -> Vec<f64> {
    let n = k.len();
    let (ow, oh) = (w - n + 1, h - n + 1);
    let mut tmp = vec![0.0; ow * h];
    for y in 0..h {
        for x in 0..ow {
            tmp[y * ow + x] = (0..n).map(|t| k[t] * p[y * w + x + t]).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = (0..n).map(|t| k[t] * tmp[(y + t) * ow + x]).sum();
        }
    }
    out
}

/// Adjoint of [`filter_valid`]: scatter a valid-size map back to `w × h`.
fn filter_valid_adjoint(g: &[f64], w: usize, h: usize, k: &[f64]) -> Vec<f64> {
    let n = k.len();
    let (ow, oh) = (w - n + 1, h - n + 1);
    let mut tmp = vec![0.0; ow * h];
    for y in 0..oh {
        for x in 0..ow {
            let v = g[y * ow + x];
            for t in 0..n {
                tmp[(y + t) * ow + x] += k[t] * v;
            }
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..ow {
            let v = tmp[y * ow + x];
            for t in 0..n {
                out[y * w + x + t] += k[t] * v;
            }
        }
    }
    out
}

/// Local statistics of one channel pair.
struct Moments {
    mx: Vec<f64>,
    my: Vec<f64>,
    vx: Vec<f64>,
    vy: Vec<f64>,
    cxy: Vec<f64>,
}

fn moments(x: &[f64], y: &[f64], w: usize, h: usize, k: &[f64]) -> Moments {
    let f = |p: &[f64]| filter_valid(p, w, h, k);
    let mx = f(x);
    let my = f(y);
    let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
    let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
    let xy: Vec<f64> = x.iter().zip(y).map(|(a, b)| a * b).collect();
    let vx = f(&xx).iter().zip(&mx).map(|(s, m)| s - m * m).collect();
    let vy = f(&yy).iter().zip(&my).map(|(s, m)| s - m * m).collect();
    let cxy = f(&xy).iter().zip(mx.iter().zip(&my)).map(|(s, (a, b))| s - a * b).collect();
    Moments { mx, my, vx, vy, cxy }
}

/// Mean SSIM (or mean contrast-structure term when `cs_only`) of one channel
/// and, optionally, its gradient with respect to `x`.
fn channel_stat(x: &[f64], y: &[f64], w: usize, h: usize, cs_only: bool, want_grad: bool) -> (f64, Option<Vec<f64>>) {
    let k = window();
    let m = moments(x, y, w, h, &k);
    let n = m.mx.len();
    let inv = 1.0 / n as f64;
    let mut total = 0.0;
    // per-position partials with respect to mx, vx, cxy
    let (mut a, mut b, mut c) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    for i in 0..n {
        let (mx, my, vx, vy, cxy) = (m.mx[i], m.my[i], m.vx[i], m.vy[i], m.cxy[i]);
        let cs_num = 2.0 * cxy + C2;
        let cs_den = vx + vy + C2;
        let cs = cs_num / cs_den;
        let (l, dl_dmx) = if cs_only {
            (1.0, 0.0)
        } else {
            let ln = 2.0 * mx * my + C1;
            let ld = mx * mx + my * my + C1;
            (ln / ld, (2.0 * my * ld - 2.0 * mx * ln) / (ld * ld))
        };
        total += l * cs;
        if want_grad {
            a[i] = inv * dl_dmx * cs;
            b[i] = -inv * l * cs / cs_den;
            c[i] = inv * l * 2.0 / cs_den;
        }
    }
    if !want_grad {
        return (total * inv, None);
    }
    // d vx / dx = 2x·G − 2mx·G, d cxy / dx = y·G − my·G
    let lin: Vec<f64> = (0..n).map(|i| a[i] - 2.0 * m.mx[i] * b[i] - m.my[i] * c[i]).collect();
    let g_lin = filter_valid_adjoint(&lin, w, h, &k);
    let g_b = filter_valid_adjoint(&b, w, h, &k);
    let g_c = filter_valid_adjoint(&c, w, h, &k);
    let grad = (0..w * h).map(|p| g_lin[p] + 2.0 * x[p] * g_b[p] + y[p] * g_c[p]).collect();
    (total * inv, Some(grad))
}

fn check_window(a: &Image, b: &Image) -> Result<()> {
    a.check_shape(b, "ssim")?;
    if a.width < SSIM_WINDOW || a.height < SSIM_WINDOW {
        return Err(Error::Contract(format!("{}x{} image is smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} window", a.width, a.height)));
    }
    Ok(())
}

fn channel_mean_stat(a: &Image, b: &Image, cs_only: bool, want_grad: bool) -> (f64, Option<Image>) {
    let mut total = 0.0;
    let mut planes = Vec::new();
    for ch in 0..CHANNELS {
        let (v, g) = channel_stat(&a.channel(ch), &b.channel(ch), a.width, a.height, cs_only, want_grad);
        total += v / CHANNELS as f64;
        if let Some(g) = g {
            planes.push(g.into_iter().map(|v| v / CHANNELS as f64).collect());
        }
    }
    let grad = want_grad.then(|| Image::from_channels(a.width, a.height, &planes));
    (total, grad)
}

/// Mean local SSIM over valid 11×11 Gaussian windows, averaged over channels.
pub fn ssim(a: &Image, b: &Image) -> Result<f64> {
    check_window(a, b)?;
    Ok(channel_mean_stat(a, b, false, false).0)
}

/// SSIM and its gradient with respect to `a`.
pub fn ssim_grad(a: &Image, b: &Image) -> Result<(f64, Image)> {
    check_window(a, b)?;
    let (v, g) = channel_mean_stat(a, b, false, true);
    Ok((v, g.expect("gradient requested")))
}

fn downsample(img: &Image) -> Image {
    Image::from_fn(img.width / 2, img.height / 2, |x, y, c| {
        0.25 * (img.get(2 * x, 2 * y, c) + img.get(2 * x + 1, 2 * y, c) + img.get(2 * x, 2 * y + 1, c) + img.get(2 * x + 1, 2 * y + 1, c))
    })
}

fn downsample_adjoint(g: &Image, width: usize, height: usize) -> Image {
    let mut out = Image::zeros(width, height);
    for y in 0..g.height {
        for x in 0..g.width {
            for c in 0..CHANNELS {
                let v = 0.25 * g.get(x, y, c);
                for (dx, dy) in [(0, 0), (1, 0), (0, 1), (1, 1)] {
                    let i = out.idx(2 * x + dx, 2 * y + dy, c);
                    out.data[i] += v;
                }
            }
        }
    }
    out
}

pub fn ms_ssim_scales(width: usize, height: usize) -> usize {
    let mut s = 0;
    let (mut w, mut h) = (width, height);
    while s < MS_SSIM_WEIGHTS.len() && w >= SSIM_WINDOW && h >= SSIM_WINDOW {
        s += 1;
        w /= 2;
        h /= 2;
    }
    s
}

/// Floor applied to each per-scale term before the weighted geometric mean.
const MS_FLOOR: f64 = 1e-6;

/// MS-SSIM over as many scales as the image supports, with the gradient
/// with respect to `a`.
pub fn ms_ssim_grad(a: &Image, b: &Image) -> Result<(f64, Image)> {
    check_window(a, b)?;
    let scales = ms_ssim_scales(a.width, a.height);
    let wsum: f64 = MS_SSIM_WEIGHTS[..scales].iter().sum();
    let weights: Vec<f64> = MS_SSIM_WEIGHTS[..scales].iter().map(|w| w / wsum).collect();
    let mut xs = vec![a.clone()];
    let mut ys = vec![b.clone()];
    for _ in 1..scales {
        let nx = downsample(xs.last().unwrap());
        let ny = downsample(ys.last().unwrap());
        xs.push(nx);
        ys.push(ny);
    }
    let mut log_ms = 0.0;
    let mut terms = Vec::with_capacity(scales);
    for s in 0..scales {
        let last = s + 1 == scales;
        let (v, g) = channel_mean_stat(&xs[s], &ys[s], !last, true);
        let clamped = v < MS_FLOOR;
        let v = v.max(MS_FLOOR);
        log_ms += weights[s] * v.ln();
        terms.push((v, clamped, g.expect("gradient requested")));
    }
    let ms = log_ms.exp();
    // walk from coarse to fine, pushing gradients up through the pooling
    let mut acc: Option<Image> = None;
    for s in (0..scales).rev() {
        let (v, clamped, ref g) = terms[s];
        let mut cur = if clamped { Image::zeros(g.width, g.height) } else { g.map(|d| d * ms * weights[s] / v) };
        if let Some(coarse) = acc.take() {
            let up = downsample_adjoint(&coarse, xs[s].width, xs[s].height);
            cur.data.iter_mut().zip(&up.data).for_each(|(c, u)| *c += u);
        }
        acc = Some(cur);
    }
    Ok((ms, acc.expect("at least one scale")))
}

pub fn ms_ssim(a: &Image, b: &Image) -> Result<f64> {
    ms_ssim_grad(a, b).map(|r| r.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pattern(w: usize, h: usize, phase: f64) -> Image {
        Image::from_fn(w, h, |x, y, c| 0.5 + 0.3 * ((x as f64 * 0.9 + y as f64 * 0.4 + c as f64 + phase).sin()))
    }

    #[test]
    fn psnr_conventions() {
        let a = pattern(8, 8, 0.0);
        assert_eq!(psnr(&a, &a).unwrap(), PSNR_CAP);
        let b = Image::filled(4, 4, 0.2);
        let c = Image::filled(4, 4, 0.3);
        assert!((psnr(&b, &c).unwrap() - 20.0).abs() < 1e-9);
    }

    #[test]
    fn ssim_identity_and_negative() {
        let a = pattern(24, 20, 0.0);
        assert!((ssim(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        let neg = a.map(|v| 1.0 - v);
        assert!(ssim(&a, &neg).unwrap() < 0.0);
        assert!(matches!(ssim(&pattern(10, 30, 0.0), &pattern(10, 30, 0.0)), Err(Error::Contract(_))));
    }

    #[test]
    fn ssim_gradient_matches_fd() {
        let a = pattern(14, 13, 0.0);
        let b = pattern(14, 13, 0.7);
        let (_, g) = ssim_grad(&a, &b).unwrap();
        let h = 1e-6;
        for &i in &[0usize, 17, 100, 301, 545] {
            let mut p = a.clone();
            p.data[i] += h;
            let mut m = a.clone();
            m.data[i] -= h;
            let fd = (ssim(&p, &b).unwrap() - ssim(&m, &b).unwrap()) / (2.0 * h);
            assert!((fd - g.data[i]).abs() <= 1e-6 + 1e-4 * fd.abs(), "{i}: {fd} vs {}", g.data[i]);
        }
    }

    #[test]
    fn ms_ssim_gradient_matches_fd() {
        let a = pattern(46, 44, 0.0);
        let b = pattern(46, 44, 0.3);
        assert_eq!(ms_ssim_scales(46, 44), 3);
        let (_, g) = ms_ssim_grad(&a, &b).unwrap();
        let h = 1e-6;
        for &i in &[0usize, 33, 1000, 3001, 6071] {
            let mut p = a.clone();
            p.data[i] += h;
            let mut m = a.clone();
            m.data[i] -= h;
            let fd = (ms_ssim(&p, &b).unwrap() - ms_ssim(&m, &b).unwrap()) / (2.0 * h);
            assert!((fd - g.data[i]).abs() <= 1e-7 + 1e-4 * fd.abs(), "{i}: {fd} vs {}", g.data[i]);
        }
        assert!((ms_ssim(&a, &a).unwrap() - 1.0).abs() < 1e-12);
    }
}
