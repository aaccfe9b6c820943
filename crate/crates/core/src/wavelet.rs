//! Multi-level orthonormal 2D Haar transform and subband L1 losses.
//!
//! Odd dimensions are padded by replicating the last row/column before each
//! level and cropped again on reconstruction. The analysis operator is
//! therefore not orthogonal on odd sizes, so loss gradients go through the
//! explicit adjoint [`dwt2_adjoint`] rather than the inverse.

use crate::error::{Error, Result};
use crate::image::{Image, CHANNELS};

/// Row-major scalar plane.
#[derive(Debug, Clone, PartialEq)]
pub struct Plane {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl Plane {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0.0; width * height],
        }
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    pub fn energy(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Wavelet {
    Haar,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Level {
    /// Size of this level's input before padding.
    pub in_width: usize,
    pub in_height: usize,
    /// Low-pass along x, high-pass along y.
    pub lh: Plane,
    /// High-pass along x, low-pass along y.
    pub hl: Plane,
    pub hh: Plane,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubbandPyramid {
    pub family: Wavelet,
    pub levels: Vec<Level>,
    pub ll: Plane,
}

impl SubbandPyramid {
    pub fn energy(&self) -> f64 {
        self.ll.energy() + self.levels.iter().map(|l| l.lh.energy() + l.hl.energy() + l.hh.energy()).sum::<f64>()
    }

    pub fn high_coeff_count(&self) -> usize {
        self.levels.iter().map(|l| 3 * l.lh.data.len()).sum()
    }

    pub fn scaled(&self, s: f64) -> Self {
        let sc = |p: &Plane| Plane {
            data: p.data.iter().map(|v| v * s).collect(),
            ..*p
        };
        Self {
            family: self.family,
            levels: self
                .levels
                .iter()
                .map(|l| Level {
                    in_width: l.in_width,
                    in_height: l.in_height,
                    lh: sc(&l.lh),
                    hl: sc(&l.hl),
                    hh: sc(&l.hh),
                })
                .collect(),
            ll: sc(&self.ll),
        }
    }
}

/// Largest level count supported by a `w × h` input.
pub fn max_levels(mut w: usize, mut h: usize) -> usize {
    let mut l = 0;
    while w >= 2 && h >= 2 {
        w = w.div_ceil(2);
        h = h.div_ceil(2);
        l += 1;
    }
    l
}

fn analyze_level(x: &Plane) -> (Plane, Level) {
    let (w, h) = (x.width, x.height);
    let (hw, hh) = (w.div_ceil(2), h.div_ceil(2));
    let px = |i: usize| i.min(w - 1);
    let py = |j: usize| j.min(h - 1);
    let mut ll = Plane::zeros(hw, hh);
    let mut lh = Plane::zeros(hw, hh);
    let mut hl = Plane::zeros(hw, hh);
    let mut hhp = Plane::zeros(hw, hh);
    for j in 0..hh {
        for i in 0..hw {
            let a = x.at(px(2 * i), py(2 * j));
            let b = x.at(px(2 * i + 1), py(2 * j));
            let c = x.at(px(2 * i), py(2 * j + 1));
            let d = x.at(px(2 * i + 1), py(2 * j + 1));
            let k = j * hw + i;
            // pairwise sums keep constant inputs exact
            let (top, bot, dtop, dbot) = (a + b, c + d, a - b, c - d);
            ll.data[k] = 0.5 * (top + bot);
            lh.data[k] = 0.5 * (top - bot);
            hl.data[k] = 0.5 * (dtop + dbot);
            hhp.data[k] = 0.5 * (dtop - dbot);
        }
    }
    (
        ll,
        Level {
            in_width: w,
            in_height: h,
            lh,
            hl,
            hh: hhp,
        },
    )
}

/// Inverse of one level onto the padded grid (`2·hw × 2·hh`).
fn synthesize_padded(ll: &Plane, lev: &Level) -> Plane {
    let (hw, hh) = (ll.width, ll.height);
    let mut out = Plane::zeros(2 * hw, 2 * hh);
    let w2 = 2 * hw;
    for j in 0..hh {
        for i in 0..hw {
            let k = j * hw + i;
            let (s, v, hz, dg) = (ll.data[k], lev.lh.data[k], lev.hl.data[k], lev.hh.data[k]);
            out.data[(2 * j) * w2 + 2 * i] = 0.5 * (s + v + hz + dg);
            out.data[(2 * j) * w2 + 2 * i + 1] = 0.5 * (s + v - hz - dg);
            out.data[(2 * j + 1) * w2 + 2 * i] = 0.5 * (s - v + hz - dg);
            out.data[(2 * j + 1) * w2 + 2 * i + 1] = 0.5 * (s - v - hz + dg);
        }
    }
    out
}

fn crop(p: &Plane, w: usize, h: usize) -> Plane {
    let mut out = Plane::zeros(w, h);
    for y in 0..h {
        out.data[y * w..(y + 1) * w].copy_from_slice(&p.data[y * p.width..y * p.width + w]);
    }
    out
}

/// Transpose of replicate padding: padded samples fold back onto the edge.
fn fold(p: &Plane, w: usize, h: usize) -> Plane {
    let mut out = Plane::zeros(w, h);
    for y in 0..p.height {
        for x in 0..p.width {
            out.data[y.min(h - 1) * w + x.min(w - 1)] += p.at(x, y);
        }
    }
    out
}

pub fn dwt2_plane(x: &Plane, levels: usize) -> Result<SubbandPyramid> {
    if levels == 0 {
        return Err(Error::Contract("dwt needs at least one level".into()));
    }
    if levels > max_levels(x.width, x.height) {
        return Err(Error::Contract(format!("{levels} levels is too deep for a {}x{} input", x.width, x.height)));
    }
    if x.data.iter().any(|v| !v.is_finite()) {
        return Err(Error::Contract("dwt input is not finite".into()));
    }
    let mut cur = x.clone();
    let mut out = Vec::with_capacity(levels);
    for _ in 0..levels {
        let (ll, lev) = analyze_level(&cur);
        out.push(lev);
        cur = ll;
    }
    Ok(SubbandPyramid {
        family: Wavelet::Haar,
        levels: out,
        ll: cur,
    })
}

fn check_pyramid(p: &SubbandPyramid) -> Result<()> {
    let mut expect = (p.ll.width, p.ll.height);
    for lev in p.levels.iter().rev() {
        for band in [&lev.lh, &lev.hl, &lev.hh] {
            if (band.width, band.height) != expect || band.data.len() != expect.0 * expect.1 {
                return Err(Error::Contract("inconsistent pyramid dimensions".into()));
            }
        }
        if lev.in_width.div_ceil(2) != expect.0 || lev.in_height.div_ceil(2) != expect.1 {
            return Err(Error::Contract("inconsistent pyramid dimensions".into()));
        }
        expect = (lev.in_width, lev.in_height);
    }
    Ok(())
}

pub fn idwt2_plane(p: &SubbandPyramid) -> Result<Plane> {
    check_pyramid(p)?;
    let mut cur = p.ll.clone();
    for lev in p.levels.iter().rev() {
        cur = crop(&synthesize_padded(&cur, lev), lev.in_width, lev.in_height);
    }
    Ok(cur)
}

/// Adjoint of [`dwt2_plane`]; equals the inverse when no padding occurs.
pub fn dwt2_adjoint_plane(p: &SubbandPyramid) -> Result<Plane> {
    check_pyramid(p)?;
    let mut cur = p.ll.clone();
    for lev in p.levels.iter().rev() {
        cur = fold(&synthesize_padded(&cur, lev), lev.in_width, lev.in_height);
    }
    Ok(cur)
}

fn planes(img: &Image) -> Vec<Plane> {
    (0..CHANNELS)
        .map(|c| Plane {
            width: img.width,
            height: img.height,
            data: img.channel(c),
        })
        .collect()
}

/// Per-channel pyramids of an RGB image.
pub fn dwt2(img: &Image, levels: usize) -> Result<Vec<SubbandPyramid>> {
    planes(img).iter().map(|p| dwt2_plane(p, levels)).collect()
}

pub fn idwt2(pyr: &[SubbandPyramid]) -> Result<Image> {
    let ps: Vec<Plane> = pyr.iter().map(idwt2_plane).collect::<Result<_>>()?;
    let (w, h) = (ps[0].width, ps[0].height);
    Ok(Image::from_channels(w, h, &ps.into_iter().map(|p| p.data).collect::<Vec<_>>()))
}

pub fn dwt2_adjoint(pyr: &[SubbandPyramid]) -> Result<Image> {
    let ps: Vec<Plane> = pyr.iter().map(dwt2_adjoint_plane).collect::<Result<_>>()?;
    let (w, h) = (ps[0].width, ps[0].height);
    Ok(Image::from_channels(w, h, &ps.into_iter().map(|p| p.data).collect::<Vec<_>>()))
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn map_planes(p: &Plane, f: impl Fn(f64) -> f64) -> Plane {
    Plane {
        data: p.data.iter().map(|v| f(*v)).collect(),
        ..*p
    }
}

/// Mean L1 over every LH/HL/HH coefficient of every level and channel, with
/// its (sub)gradient with respect to `img`.
pub fn highfreq_loss_grad(img: &Image, reference: &Image, levels: usize) -> Result<(f64, Image)> {
    img.check_shape(reference, "highfreq_loss")?;
    let diff = Image {
        data: img.data.iter().zip(&reference.data).map(|(a, b)| a - b).collect(),
        ..img.clone()
    };
    let pyr = dwt2(&diff, levels)?;
    let count: usize = pyr.iter().map(|p| p.high_coeff_count()).sum();
    let mut total = 0.0;
    let mut grads = Vec::with_capacity(pyr.len());
    for p in &pyr {
        for l in &p.levels {
            total += [&l.lh, &l.hl, &l.hh].iter().flat_map(|b| b.data.iter()).map(|v| v.abs()).sum::<f64>();
        }
        let s = 1.0 / count as f64;
        grads.push(SubbandPyramid {
            family: p.family,
            levels: p
                .levels
                .iter()
                .map(|l| Level {
                    in_width: l.in_width,
                    in_height: l.in_height,
                    lh: map_planes(&l.lh, |v| sign(v) * s),
                    hl: map_planes(&l.hl, |v| sign(v) * s),
                    hh: map_planes(&l.hh, |v| sign(v) * s),
                })
                .collect(),
            ll: Plane::zeros(p.ll.width, p.ll.height),
        });
    }
    Ok((total / count as f64, dwt2_adjoint(&grads)?))
}

/// Mean L1 over the top-level LL coefficients of every channel, with gradient.
pub fn lowfreq_loss_grad(img: &Image, reference: &Image, levels: usize) -> Result<(f64, Image)> {
    img.check_shape(reference, "lowfreq_loss")?;
    let diff = Image {
        data: img.data.iter().zip(&reference.data).map(|(a, b)| a - b).collect(),
        ..img.clone()
    };
    let pyr = dwt2(&diff, levels)?;
    let count: usize = pyr.iter().map(|p| p.ll.data.len()).sum();
    let total: f64 = pyr.iter().flat_map(|p| p.ll.data.iter()).map(|v| v.abs()).sum();
    let s = 1.0 / count as f64;
    let grads: Vec<SubbandPyramid> = pyr
        .iter()
        .map(|p| {
            let mut g = p.scaled(0.0);
            g.ll = map_planes(&p.ll, |v| sign(v) * s);
            g
        })
        .collect();
    Ok((total / count as f64, dwt2_adjoint(&grads)?))
}

pub fn highfreq_loss(img: &Image, reference: &Image, levels: usize) -> Result<f64> {
    highfreq_loss_grad(img, reference, levels).map(|r| r.0)
}

pub fn lowfreq_loss(img: &Image, reference: &Image, levels: usize) -> Result<f64> {
    lowfreq_loss_grad(img, reference, levels).map(|r| r.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn plane(w: usize, h: usize, f: impl Fn(usize, usize) -> f64) -> Plane {
        let mut p = Plane::zeros(w, h);
        for y in 0..h {
            for x in 0..w {
                p.data[y * w + x] = f(x, y);
            }
        }
        p
    }

    #[test]
    fn constant_one_level() {
        let p = dwt2_plane(&plane(6, 4, |_, _| 0.3), 1).unwrap();
        assert!(p.ll.data.iter().all(|v| *v == 0.6));
        let l = &p.levels[0];
        assert!(l.lh.data.iter().chain(&l.hl.data).chain(&l.hh.data).all(|v| *v == 0.0));
    }

    #[test]
    fn impulse_reconstructs() {
        let x = plane(7, 5, |x, y| if (x, y) == (3, 2) { 1.0 } else { 0.0 });
        let r = idwt2_plane(&dwt2_plane(&x, 2).unwrap()).unwrap();
        for (a, b) in r.data.iter().zip(&x.data) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_and_ll_only_pyramids() {
        let p = dwt2_plane(&plane(8, 8, |_, _| 0.7), 2).unwrap();
        let z = idwt2_plane(&p.scaled(0.0)).unwrap();
        assert!(z.data.iter().all(|v| *v == 0.0));
        let c = idwt2_plane(&p).unwrap();
        assert!(c.data.iter().all(|v| (v - 0.7).abs() < 1e-15));
    }

    #[test]
    fn too_deep_is_contract_error() {
        assert!(dwt2_plane(&plane(4, 4, |_, _| 0.0), 3).is_err());
        assert!(dwt2_plane(&plane(4, 4, |_, _| 0.0), 2).is_ok());
        assert!(dwt2_plane(&plane(4, 4, |_, _| 0.0), 0).is_err());
    }

    #[test]
    fn adjoint_identity_on_odd_sizes() {
        let x = plane(9, 7, |x, y| ((x * 7 + y * 3) % 5) as f64 - 2.0);
        let p = dwt2_plane(&x, 2).unwrap();
        let y = {
            let mut q = p.clone();
            for (k, v) in q.ll.data.iter_mut().enumerate() {
                *v = (k as f64 * 0.37).sin();
            }
            for l in &mut q.levels {
                for (k, v) in l.hh.data.iter_mut().enumerate() {
                    *v = (k as f64 * 0.11).cos();
                }
            }
            q
        };
        let lhs = {
            let mut s = p.ll.data.iter().zip(&y.ll.data).map(|(a, b)| a * b).sum::<f64>();
            for (a, b) in p.levels.iter().zip(&y.levels) {
                for (pa, pb) in [(&a.lh, &b.lh), (&a.hl, &b.hl), (&a.hh, &b.hh)] {
                    s += pa.data.iter().zip(&pb.data).map(|(u, v)| u * v).sum::<f64>();
                }
            }
            s
        };
        let adj = dwt2_adjoint_plane(&y).unwrap();
        let rhs: f64 = x.data.iter().zip(&adj.data).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-10);
    }

    #[test]
    fn two_by_two_by_hand() {
        let img = Image::from_fn(2, 2, |x, y, _| [1.0, 2.0, 3.0, 5.0][y * 2 + x]);
        let reference = Image::zeros(2, 2);
        // LH = (1+2-3-5)/2, HL = (1-2+3-5)/2, HH = (1-2-3+5)/2
        let expect = (2.5 + 1.5 + 0.5) / 3.0;
        assert!((highfreq_loss(&img, &reference, 1).unwrap() - expect).abs() < 1e-15);
        assert!((lowfreq_loss(&img, &reference, 1).unwrap() - 5.5).abs() < 1e-15);
    }

    #[test]
    fn offset_lives_in_ll() {
        let a = Image::from_fn(8, 8, |x, y, c| ((x + 2 * y + c) % 4) as f64 * 0.1);
        let b = a.map(|v| v + 0.25);
        assert!(highfreq_loss(&b, &a, 2).unwrap().abs() < 1e-15);
        assert!((lowfreq_loss(&b, &a, 1).unwrap() - 0.5).abs() < 1e-14);
        assert!((lowfreq_loss(&b, &a, 2).unwrap() - 1.0).abs() < 1e-14);
    }
}
