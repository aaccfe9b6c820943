//! Image-space distortion family used for EOT training and attack evaluation.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::jpeg::{jpeg_roundtrip, jpeg_surrogate};
use crate::resample::{convolve_1d, crop_window, gaussian_kernel, resize, rotation, SparseOp};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Distortion {
    Noise { sigma: f64 },
    /// Angle drawn uniformly from `[-max_angle, max_angle]` radians.
    Rotation { max_angle: f64 },
    Scaling { factor: f64 },
    Blur { sigma: f64 },
    Crop { keep: f64 },
    Jpeg { quality: u8 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    #[default]
    TrainSurrogate,
    EvalExact,
}

impl Distortion {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Noise { .. } => "noise",
            Self::Rotation { .. } => "rotation",
            Self::Scaling { .. } => "scaling",
            Self::Blur { .. } => "blur",
            Self::Crop { .. } => "crop",
            Self::Jpeg { .. } => "jpeg",
        }
    }

    pub fn param(&self) -> f64 {
        match *self {
            Self::Noise { sigma } | Self::Blur { sigma } => sigma,
            Self::Rotation { max_angle } => max_angle,
            Self::Scaling { factor } => factor,
            Self::Crop { keep } => keep,
            Self::Jpeg { quality } => quality as f64,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            Self::Noise { sigma } => sigma.is_finite() && sigma >= 0.0,
            Self::Rotation { max_angle } => max_angle.is_finite() && (0.0..=std::f64::consts::PI).contains(&max_angle),
            Self::Scaling { factor } => factor.is_finite() && factor > 0.0 && factor <= 4.0,
            Self::Blur { sigma } => sigma.is_finite() && (0.0..=20.0).contains(&sigma),
            Self::Crop { keep } => keep.is_finite() && keep > 0.0 && keep <= 1.0,
            Self::Jpeg { quality } => (1..=100).contains(&quality),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid {} parameter {}", self.name(), self.param())))
        }
    }

    /// The standard evaluation set: noise 0.1, rotation ±π/6, scaling 75%,
    /// blur 0.1, crop 40%, JPEG 50.
    pub fn standard_set() -> Vec<Distortion> {
        vec![
            Self::Noise { sigma: 0.1 },
            Self::Rotation {
                max_angle: std::f64::consts::FRAC_PI_6,
            },
            Self::Scaling { factor: 0.75 },
            Self::Blur { sigma: 0.1 },
            Self::Crop { keep: 0.4 },
            Self::Jpeg { quality: 50 },
        ]
    }

    pub fn combined() -> Vec<Distortion> {
        vec![Self::Noise { sigma: 0.1 }, Self::Crop { keep: 0.4 }, Self::Jpeg { quality: 50 }]
    }
}

impl fmt::Display for Distortion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.name(), self.param())
    }
}

impl FromStr for Distortion {
    type Err = Error;

    /// `kind:param`, e.g. `noise:0.1`, `rotation:0.5236`, `jpeg:50`.
    fn from_str(s: &str) -> Result<Self> {
        let (kind, p) = s.split_once(':').ok_or_else(|| Error::Config(format!("distortion `{s}` must be kind:param")))?;
        let v: f64 = p.trim().parse().map_err(|_| Error::Config(format!("bad distortion parameter `{p}`")))?;
        let d = match kind.trim() {
            "noise" => Self::Noise { sigma: v },
            "rotation" => Self::Rotation { max_angle: v },
            "scaling" => Self::Scaling { factor: v },
            "blur" => Self::Blur { sigma: v },
            "crop" => Self::Crop { keep: v },
            "jpeg" => {
                if v.fract() != 0.0 || !(1.0..=100.0).contains(&v) {
                    return Err(Error::Config(format!("jpeg quality `{p}` must be an integer in 1..=100")));
                }
                Self::Jpeg { quality: v as u8 }
            }
            other => return Err(Error::Config(format!("unknown distortion kind `{other}`"))),
        };
        d.validate()?;
        Ok(d)
    }
}

#[derive(Debug, Clone)]
enum Step {
    Linear(SparseOp),
    /// Pass-through where the flag is set, zero elsewhere.
    Gate(Vec<bool>),
}

/// Recorded backward path of one sampled distortion chain.
#[derive(Debug, Clone, Default)]
pub struct Tape {
    steps: Vec<Step>,
}

impl Tape {
    pub fn backward(&self, grad: &Image) -> Image {
        let mut g = grad.clone();
        for step in self.steps.iter().rev() {
            g = match step {
                Step::Linear(op) => op.apply_adjoint(&g),
                Step::Gate(mask) => {
                    for (v, &keep) in g.data.iter_mut().zip(mask) {
                        if !keep {
                            *v = 0.0;
                        }
                    }
                    g
                }
            };
        }
        g
    }
}

fn linear(img: &Image, op: SparseOp, tape: &mut Tape) -> Image {
    let out = op.apply(img);
    tape.steps.push(Step::Linear(op));
    out
}

fn apply_one<R: Rng + ?Sized>(img: &Image, d: &Distortion, mode: Mode, rng: &mut R, tape: &mut Tape) -> Image {
    let (w, h) = (img.width, img.height);
    match *d {
        Distortion::Noise { sigma } => {
            let mut out = img.clone();
            let mut mask = vec![true; out.data.len()];
            if sigma > 0.0 {
                for (v, m) in out.data.iter_mut().zip(mask.iter_mut()) {
                    let n: f64 = StandardNormal.sample(rng);
                    let x = *v + sigma * n;
                    *m = (0.0..=1.0).contains(&x);
                    *v = x.clamp(0.0, 1.0);
                }
            }
            tape.steps.push(Step::Gate(mask));
            out
        }
        Distortion::Rotation { max_angle } => {
            let a = if max_angle > 0.0 { rng.random_range(-max_angle..=max_angle) } else { 0.0 };
            linear(img, rotation(w, h, a), tape)
        }
        Distortion::Scaling { factor } => {
            let sw = ((w as f64 * factor).round() as usize).max(1);
            let sh = ((h as f64 * factor).round() as usize).max(1);
            let small = linear(img, resize(w, h, sw, sh), tape);
            linear(&small, resize(sw, sh, w, h), tape)
        }
        Distortion::Blur { sigma } => {
            if sigma == 0.0 {
                return img.clone();
            }
            let k = gaussian_kernel(sigma);
            let tmp = linear(img, convolve_1d(w, h, &k, true), tape);
            linear(&tmp, convolve_1d(w, h, &k, false), tape)
        }
        Distortion::Crop { keep } => linear(img, crop_window(w, h, keep), tape),
        Distortion::Jpeg { quality } => match mode {
            Mode::EvalExact => {
                tape.steps.push(Step::Gate(vec![true; img.data.len()]));
                jpeg_roundtrip(img, quality)
            }
            Mode::TrainSurrogate => {
                let (out, mask) = jpeg_surrogate(img, quality);
                tape.steps.push(Step::Gate(mask));
                out
            }
        },
    }
}

/// Apply a chain of distortions in order, recording the backward path.
pub fn apply_chain<R: Rng + ?Sized>(img: &Image, chain: &[Distortion], mode: Mode, rng: &mut R) -> Result<(Image, Tape)> {
    let mut tape = Tape::default();
    let mut cur = img.clone();
    for d in chain {
        d.validate()?;
        cur = apply_one(&cur, d, mode, rng, &mut tape);
    }
    Ok((cur, tape))
}

pub fn apply_distortion<R: Rng + ?Sized>(img: &Image, d: &Distortion, mode: Mode, rng: &mut R) -> Result<Image> {
    Ok(apply_chain(img, std::slice::from_ref(d), mode, rng)?.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn img(w: usize, h: usize) -> Image {
        Image::from_fn(w, h, |x, y, c| 0.5 + 0.4 * ((x as f64 * 0.7 + y as f64 * 0.3 + c as f64).sin()))
    }

    #[test]
    fn parse_and_validate() {
        assert_eq!("noise:0.1".parse::<Distortion>().unwrap(), Distortion::Noise { sigma: 0.1 });
        assert_eq!("jpeg:50".parse::<Distortion>().unwrap(), Distortion::Jpeg { quality: 50 });
        for bad in ["noise:-1", "crop:0", "jpeg:0", "jpeg:50.5", "warp:1", "noise"] {
            assert!(matches!(bad.parse::<Distortion>(), Err(Error::Config(_))), "{bad}");
        }
    }

    #[test]
    fn identities() {
        let x = img(16, 12);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for d in [Distortion::Noise { sigma: 0.0 }, Distortion::Rotation { max_angle: 0.0 }, Distortion::Crop { keep: 1.0 }] {
            let y = apply_distortion(&x, &d, Mode::EvalExact, &mut rng).unwrap();
            for (a, b) in x.data.iter().zip(&y.data) {
                assert!((a - b).abs() < 1e-6, "{d}");
            }
        }
    }

    #[test]
    fn jpeg_q100_surrogate_is_close() {
        let x = img(16, 16);
        let y = apply_distortion(&x, &Distortion::Jpeg { quality: 100 }, Mode::TrainSurrogate, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let dev = x.data.iter().zip(&y.data).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(dev < 2.0 / 255.0, "{dev}");
    }

    #[test]
    fn outputs_stay_in_unit_range() {
        let x = img(20, 15);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for mode in [Mode::TrainSurrogate, Mode::EvalExact] {
            for d in Distortion::standard_set() {
                let y = apply_distortion(&x, &d, mode, &mut rng).unwrap();
                assert!(y.data.iter().all(|v| (0.0..=1.0).contains(v)), "{d}");
            }
        }
    }

    #[test]
    fn tape_is_adjoint_of_linear_chain() {
        let x = img(14, 10);
        let chain = [Distortion::Rotation { max_angle: 0.4 }, Distortion::Scaling { factor: 0.75 }, Distortion::Blur { sigma: 1.0 }];
        let (y, tape) = apply_chain(&x, &chain, Mode::TrainSurrogate, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let g = Image::from_fn(14, 10, |x, y, c| ((x * 3 + y + c) as f64).cos());
        let lhs: f64 = y.data.iter().zip(&g.data).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.data.iter().zip(&tape.backward(&g).data).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-9);
    }
}
