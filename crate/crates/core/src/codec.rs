//! Messages, the frozen random-projection decoder, and watermark losses.

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::image::{Image, CHANNELS};
use crate::resample::resize;
use crate::wavelet::{dwt2, dwt2_adjoint, max_levels, Plane};

pub const SUPPORTED_BITS: [usize; 3] = [32, 48, 64];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub bits: Vec<u8>,
}

impl Message {
    pub fn new(bits: Vec<u8>) -> Result<Self> {
        if !SUPPORTED_BITS.contains(&bits.len()) {
            return Err(Error::Config(format!("message length {} not in {SUPPORTED_BITS:?}", bits.len())));
        }
        if bits.iter().any(|&b| b > 1) {
            return Err(Error::Config("message bits must be 0 or 1".into()));
        }
        Ok(Self { bits })
    }

    /// Hex digits, most significant bit first; the bit count is `4 × digits`.
    pub fn from_hex(s: &str) -> Result<Self> {
        let s = s.trim().trim_start_matches("0x");
        let mut bits = Vec::with_capacity(s.len() * 4);
        for c in s.chars() {
            let v = c.to_digit(16).ok_or_else(|| Error::Config(format!("invalid hex digit `{c}` in message")))?;
            bits.extend((0..4).rev().map(|k| ((v >> k) & 1) as u8));
        }
        Self::new(bits)
    }

    pub fn to_hex(&self) -> String {
        self.bits.chunks(4).map(|c| format!("{:x}", c.iter().fold(0u8, |a, &b| (a << 1) | b))).collect()
    }

    pub fn random(seed: u64, m: usize) -> Result<Self> {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::new((0..m).map(|_| rng.random_range(0..=1u8)).collect())
    }

    /// Hard decision: bit 1 where the logit is positive.
    pub fn from_logits(z: &[f64]) -> Result<Self> {
        Self::new(z.iter().map(|&v| (v > 0.0) as u8).collect())
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }
}

impl fmt::Display for Message {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl FromStr for Message {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::from_hex(s)
    }
}

/// Linear decoder `z = P · LL(resize(x)) + bias`.
///
/// Rows of `P` are drawn from a seeded normal, centered within each color
/// channel block (so a uniform per-channel brightness shift decodes to
/// nothing), then orthonormalized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decoder {
    pub seed: u64,
    pub bits: usize,
    pub resolution: usize,
    pub levels: usize,
    /// Side of the coarse grid each row is drawn on before bilinear
    /// upsampling to the LL grid; `None` draws every LL coefficient.
    #[serde(default)]
    pub row_grid: Option<usize>,
    /// Fixed logit scale; signs, and so decoded bits, do not depend on it.
    #[serde(default = "unit_gain")]
    pub gain: f64,
    /// Row-major `bits × k`.
    pub projection: Vec<f64>,
    pub bias: Vec<f64>,
}

fn unit_gain() -> f64 {
    1.0
}

fn orthonormalize(rows: &mut [Vec<f64>]) -> Result<()> {
    for i in 0..rows.len() {
        // two passes of modified Gram-Schmidt keep the residual at round-off
        for _ in 0..2 {
            for j in 0..i {
                let (done, rest) = rows.split_at_mut(i);
                let d: f64 = done[j].iter().zip(&rest[0]).map(|(a, b)| a * b).sum();
                for (v, u) in rest[0].iter_mut().zip(&done[j]) {
                    *v -= d * u;
                }
            }
        }
        let n = rows[i].iter().map(|v| v * v).sum::<f64>().sqrt();
        if n < 1e-8 {
            return Err(Error::Contract("decoder projection is rank deficient".into()));
        }
        rows[i].iter_mut().for_each(|v| *v /= n);
    }
    Ok(())
}

pub fn build_decoder(seed: u64, bits: usize, resolution: usize, levels: usize) -> Result<Decoder> {
    build_decoder_with_grid(seed, bits, resolution, levels, None)
}

/// Like [`build_decoder`], but rows are drawn on a `grid × grid` lattice per
/// channel and bilinearly upsampled, which makes them spatially smooth.
pub fn build_decoder_with_grid(seed: u64, bits: usize, resolution: usize, levels: usize, row_grid: Option<usize>) -> Result<Decoder> {
    if !SUPPORTED_BITS.contains(&bits) {
        return Err(Error::Config(format!("decoder bits {bits} not in {SUPPORTED_BITS:?}")));
    }
    if levels == 0 || levels > max_levels(resolution, resolution) {
        return Err(Error::Config(format!("decoder levels {levels} invalid for resolution {resolution}")));
    }
    let side = ll_side(resolution, levels);
    let per = side * side;
    let k = CHANNELS * per;
    if bits + CHANNELS > k {
        return Err(Error::Config(format!("{bits} bits exceed the {k}-dim LL subband")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows: Vec<Vec<f64>> = match row_grid {
        None => (0..bits).map(|_| (0..k).map(|_| StandardNormal.sample(&mut rng)).collect()).collect(),
        Some(g) => {
            if g == 0 || g > side || CHANNELS * g * g < bits + CHANNELS {
                return Err(Error::Config(format!("row grid {g} cannot carry {bits} bits on a {side}x{side} LL grid")));
            }
            let up = resize(g, g, side, side);
            (0..bits)
                .map(|_| {
                    let coarse = Image::from_fn(g, g, |_, _, _| StandardNormal.sample(&mut rng));
                    let fine = up.apply(&coarse);
                    (0..CHANNELS).flat_map(|c| fine.channel(c)).collect()
                })
                .collect()
        }
    };
    for r in rows.iter_mut() {
        for block in r.chunks_mut(per) {
            let m = block.iter().sum::<f64>() / per as f64;
            block.iter_mut().for_each(|v| *v -= m);
        }
    }
    orthonormalize(&mut rows)?;
    Ok(Decoder {
        seed,
        bits,
        resolution,
        levels,
        row_grid,
        gain: 1.0,
        projection: rows.concat(),
        bias: vec![0.0; bits],
    })
}

fn ll_side(resolution: usize, levels: usize) -> usize {
    (0..levels).fold(resolution, |s, _| s.div_ceil(2))
}

impl Decoder {
    pub fn k(&self) -> usize {
        self.projection.len() / self.bits
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let k = self.k();
        &self.projection[i * k..(i + 1) * k]
    }

    fn features(&self, img: &Image) -> Result<Vec<f64>> {
        let r = self.resolution;
        let x = resize(img.width, img.height, r, r).apply(img);
        let pyr = dwt2(&x, self.levels)?;
        Ok(pyr.into_iter().flat_map(|p| p.ll.data).collect())
    }

    pub fn decode_unbiased(&self, img: &Image) -> Result<Vec<f64>> {
        let f = self.features(img)?;
        Ok((0..self.bits).map(|i| self.gain * self.row(i).iter().zip(&f).map(|(a, b)| a * b).sum::<f64>()).collect())
    }

    pub fn decode(&self, img: &Image) -> Result<Vec<f64>> {
        let mut z = self.decode_unbiased(img)?;
        z.iter_mut().zip(&self.bias).for_each(|(v, b)| *v += b);
        Ok(z)
    }

    /// Vector-Jacobian product: gradient of `dz · z(img)` with respect to the image.
    pub fn decode_backward(&self, width: usize, height: usize, dz: &[f64]) -> Result<Image> {
        let k = self.k();
        let mut df = vec![0.0; k];
        for (i, d) in dz.iter().enumerate() {
            if *d != 0.0 {
                df.iter_mut().zip(self.row(i)).for_each(|(f, p)| *f += self.gain * d * p);
            }
        }
        let r = self.resolution;
        // the pyramid layout only depends on the size, so a zero transform supplies it
        let template = dwt2(&Image::zeros(r, r), self.levels)?;
        let per = df.len() / CHANNELS;
        let pyr: Vec<_> = template
            .into_iter()
            .enumerate()
            .map(|(c, mut p)| {
                p.ll = Plane {
                    data: df[c * per..(c + 1) * per].to_vec(),
                    ..p.ll
                };
                p
            })
            .collect();
        let g = dwt2_adjoint(&pyr)?;
        Ok(resize(width, height, r, r).apply_adjoint(&g))
    }

    /// Set the bias so the given reference renders decode to zero logits on
    /// average. Must happen before training; the decoder is frozen afterwards.
    pub fn calibrate_bias(&mut self, references: &[Image]) -> Result<()> {
        if references.is_empty() {
            return Err(Error::Contract("calibrate_bias needs at least one image".into()));
        }
        let mut acc = vec![0.0; self.bits];
        for img in references {
            for (a, z) in acc.iter_mut().zip(self.decode_unbiased(img)?) {
                *a += z;
            }
        }
        self.bias = acc.iter().map(|a| -a / references.len() as f64).collect();
        Ok(())
    }

    /// Remove from every row the directions along which the given host renders
    /// vary, so view-dependent content stops leaking into the logits, then
    /// re-orthonormalize. The per-channel constant directions stay excluded.
    /// Call [`Decoder::calibrate_bias`] afterwards.
    pub fn null_host_variation(&mut self, references: &[Image]) -> Result<()> {
        if references.is_empty() {
            return Err(Error::Contract("null_host_variation needs at least one image".into()));
        }
        let k = self.k();
        let feats: Vec<Vec<f64>> = references.iter().map(|r| self.features(r)).collect::<Result<_>>()?;
        let mean: Vec<f64> = (0..k).map(|j| feats.iter().map(|f| f[j]).sum::<f64>() / feats.len() as f64).collect();
        let per = k / CHANNELS;
        let mut basis: Vec<Vec<f64>> = Vec::new();
        let candidates = (0..CHANNELS)
            .map(|c| (0..k).map(|j| if j / per == c { 1.0 } else { 0.0 }).collect::<Vec<f64>>())
            .chain(feats.iter().map(|f| f.iter().zip(&mean).map(|(a, b)| a - b).collect()));
        for mut v in candidates {
            let scale = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            for _ in 0..2 {
                for u in &basis {
                    let d: f64 = u.iter().zip(&v).map(|(a, b)| a * b).sum();
                    v.iter_mut().zip(u).for_each(|(x, y)| *x -= d * y);
                }
            }
            let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if n > 1e-9 * scale.max(1e-300) && n > 0.0 {
                v.iter_mut().for_each(|x| *x /= n);
                basis.push(v);
            }
        }
        if basis.len() + self.bits > k {
            return Err(Error::Config(format!("{} host directions leave no room for {} bits in the {k}-dim LL subband", basis.len(), self.bits)));
        }
        let mut rows: Vec<Vec<f64>> = (0..self.bits).map(|i| self.row(i).to_vec()).collect();
        for r in rows.iter_mut() {
            for _ in 0..2 {
                for u in &basis {
                    let d: f64 = u.iter().zip(r.iter()).map(|(a, b)| a * b).sum();
                    r.iter_mut().zip(u).for_each(|(x, y)| *x -= d * y);
                }
            }
        }
        orthonormalize(&mut rows)?;
        self.projection = rows.concat();
        Ok(())
    }

    pub fn state_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.seed.to_le_bytes());
        for v in [self.bits, self.resolution, self.levels, self.row_grid.unwrap_or(0)] {
            h.update((v as u64).to_le_bytes());
        }
        for v in [self.gain].iter().chain(&self.projection).chain(&self.bias) {
            h.update(v.to_le_bytes());
        }
        hex::encode(h.finalize())
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string(self)?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let d: Self = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        if !d.projection.len().is_multiple_of(d.bits.max(1)) || d.bias.len() != d.bits {
            return Err(Error::Data("decoder file has inconsistent dimensions".into()));
        }
        Ok(d)
    }
}

pub fn aggregate_logits(logits: &[Vec<f64>]) -> Result<Vec<f64>> {
    let first = logits.first().ok_or_else(|| Error::Contract("aggregate_logits over zero views".into()))?;
    let mut out = vec![0.0; first.len()];
    for z in logits {
        if z.len() != out.len() {
            return Err(Error::Contract("logit vectors differ in length".into()));
        }
        out.iter_mut().zip(z).for_each(|(o, v)| *o += v);
    }
    let n = logits.len() as f64;
    out.iter_mut().for_each(|o| *o /= n);
    Ok(out)
}

/// Mean binary cross-entropy of `sigmoid(z)` against `bits`, in the
/// overflow-free form, with its gradient with respect to `z`.
pub fn bce_with_logits(z: &[f64], message: &Message) -> (f64, Vec<f64>) {
    let m = z.len() as f64;
    let mut loss = 0.0;
    let grad = z
        .iter()
        .zip(&message.bits)
        .map(|(&z, &b)| {
            let b = b as f64;
            loss += z.max(0.0) - z * b + (-z.abs()).exp().ln_1p();
            (crate::gaussian::sigmoid(z) - b) / m
        })
        .collect();
    (loss / m, grad)
}

pub fn bit_accuracy(logits: &[f64], message: &Message) -> f64 {
    assert_eq!(logits.len(), message.len(), "logit count must match the message");
    let ok = logits.iter().zip(&message.bits).filter(|(z, b)| (**z > 0.0) == (**b == 1)).count();
    ok as f64 / message.len() as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct WmLosses {
    pub clean: f64,
    pub eot: f64,
    /// Per clean view image gradient of `clean`.
    pub clean_grads: Vec<Image>,
    /// Per transform, per view image gradient of `eot`.
    pub eot_grads: Vec<Vec<Image>>,
}

fn view_loss(decoder: &Decoder, views: &[Image], message: &Message) -> Result<(f64, Vec<Image>)> {
    let z: Vec<Vec<f64>> = views.iter().map(|v| decoder.decode(v)).collect::<Result<_>>()?;
    let zbar = aggregate_logits(&z)?;
    let (loss, dz) = bce_with_logits(&zbar, message);
    let dz: Vec<f64> = dz.iter().map(|d| d / views.len() as f64).collect();
    let grads = views.iter().map(|v| decoder.decode_backward(v.width, v.height, &dz)).collect::<Result<_>>()?;
    Ok((loss, grads))
}

/// Clean and EOT watermark losses. `distorted[t]` holds the views rendered
/// under the t-th sampled transform; an empty list gives `eot = 0`.
pub fn wm_losses(decoder: &Decoder, clean: &[Image], distorted: &[Vec<Image>], message: &Message) -> Result<WmLosses> {
    if message.len() != decoder.bits {
        return Err(Error::Contract(format!("message has {} bits, decoder {}", message.len(), decoder.bits)));
    }
    let (lc, clean_grads) = view_loss(decoder, clean, message)?;
    let mut eot = 0.0;
    let mut eot_grads = Vec::with_capacity(distorted.len());
    let t = distorted.len() as f64;
    for views in distorted {
        let (l, mut g) = view_loss(decoder, views, message)?;
        eot += l / t;
        for img in g.iter_mut() {
            img.data.iter_mut().for_each(|v| *v /= t);
        }
        eot_grads.push(g);
    }
    Ok(WmLosses {
        clean: lc,
        eot,
        clean_grads,
        eot_grads,
    })
}

pub fn total_wm_loss(l_clean: f64, l_eot: f64, l_low: f64, lambda_clean: f64, lambda_eot: f64, lambda_low: f64) -> f64 {
    lambda_clean * l_clean + lambda_eot * l_eot + lambda_low * l_low
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hex_round_trip() {
        let m = Message::from_hex("deadbeef").unwrap();
        assert_eq!(m.len(), 32);
        assert_eq!(&m.bits[..4], &[1, 1, 0, 1]);
        assert_eq!(m.to_hex(), "deadbeef");
        assert!(matches!(Message::from_hex("abc"), Err(Error::Config(_))));
        assert!(matches!(Message::from_hex("zz000000"), Err(Error::Config(_))));
    }

    #[test]
    fn projection_is_orthonormal_and_seeded() {
        let d = build_decoder(7, 32, 32, 2).unwrap();
        for i in 0..32 {
            for j in 0..32 {
                let dot: f64 = d.row(i).iter().zip(d.row(j)).map(|(a, b)| a * b).sum();
                assert!((dot - if i == j { 1.0 } else { 0.0 }).abs() < 1e-9);
            }
        }
        assert_eq!(d, build_decoder(7, 32, 32, 2).unwrap());
        let e = build_decoder(8, 32, 32, 2).unwrap();
        assert!(d.projection.iter().zip(&e.projection).any(|(a, b)| a != b));
    }

    #[test]
    fn zero_image_decodes_to_bit_zero() {
        let d = build_decoder(1, 32, 16, 1).unwrap();
        let z = d.decode(&Image::zeros(16, 16)).unwrap();
        assert!(z.iter().all(|v| *v == 0.0));
        let zeros = Message::new(vec![0; 32]).unwrap();
        assert_eq!(bit_accuracy(&z, &zeros), 1.0);
    }

    #[test]
    fn uniform_shift_is_invisible() {
        let d = build_decoder(3, 32, 16, 2).unwrap();
        let z = d.decode(&Image::filled(16, 16, 0.7)).unwrap();
        assert!(z.iter().all(|v| v.abs() < 1e-9));
    }

    #[test]
    fn bce_closed_forms() {
        let m = Message::from_hex("0f0f0f0f").unwrap();
        let (l, _) = bce_with_logits(&[0.0; 32], &m);
        assert!((l - std::f64::consts::LN_2).abs() < 1e-12);
        let sat: Vec<f64> = m.bits.iter().map(|&b| if b == 1 { 800.0 } else { -800.0 }).collect();
        assert!(bce_with_logits(&sat, &m).0 < 1e-300);
    }

    #[test]
    fn aggregate_rules() {
        assert!(aggregate_logits(&[]).is_err());
        let z = vec![1.0, -2.0];
        assert_eq!(aggregate_logits(std::slice::from_ref(&z)).unwrap(), z);
        assert_eq!(aggregate_logits(&[z.clone(), vec![-1.0, 2.0]]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn calibration_zeroes_reference() {
        let mut d = build_decoder(5, 32, 16, 2).unwrap();
        let img = Image::from_fn(16, 16, |x, y, c| ((x * y + c) % 7) as f64 / 7.0);
        d.calibrate_bias(std::slice::from_ref(&img)).unwrap();
        assert!(d.decode(&img).unwrap().iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn gain_scales_logits_only() {
        let img = Image::from_fn(16, 16, |x, y, c| ((x + 3 * y + c) % 5) as f64 / 5.0);
        let a = build_decoder(2, 32, 16, 2).unwrap();
        let mut b = a.clone();
        b.gain = 4.0;
        for (za, zb) in a.decode(&img).unwrap().iter().zip(b.decode(&img).unwrap()) {
            assert!((4.0 * za - zb).abs() < 1e-12);
        }
        let dz: Vec<f64> = (0..32).map(|i| (i as f64 - 16.0) / 10.0).collect();
        let ga = a.decode_backward(16, 16, &dz).unwrap();
        let gb = b.decode_backward(16, 16, &dz).unwrap();
        assert!(ga.data.iter().zip(&gb.data).all(|(x, y)| (4.0 * x - y).abs() < 1e-12));
    }

    #[test]
    fn nulled_rows_ignore_host_variation() {
        let hosts: Vec<Image> = (0..4).map(|k| Image::from_fn(16, 16, |x, y, c| ((x * (k + 1) + y + c * k) % 9) as f64 / 9.0)).collect();
        let mut d = build_decoder(8, 32, 16, 2).unwrap();
        d.null_host_variation(&hosts).unwrap();
        d.calibrate_bias(&hosts).unwrap();
        for h in &hosts {
            assert!(d.decode(h).unwrap().iter().all(|v| v.abs() < 1e-9));
        }
        // still orthonormal and blind to per-channel shifts
        let k = d.k();
        for i in 0..32 {
            for j in 0..32 {
                let dot: f64 = d.row(i).iter().zip(d.row(j)).map(|(a, b)| a * b).sum();
                assert!((dot - if i == j { 1.0 } else { 0.0 }).abs() < 1e-10);
            }
            for c in 0..3 {
                assert!(d.row(i)[c * k / 3..(c + 1) * k / 3].iter().sum::<f64>().abs() < 1e-10);
            }
        }
    }
}
