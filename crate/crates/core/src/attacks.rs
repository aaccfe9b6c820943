//! Image-space and model-space attacks, and the attack matrix report.

use std::fmt;
use std::path::Path;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::camera::Camera;
use crate::codec::{Decoder, Message};
use crate::config::AttackConfig;
use crate::distort::{apply_chain, Distortion, Mode};
use crate::error::{Error, Result};
use crate::gaussian::{Gaussian, GaussianModel};
use crate::image::Image;
use crate::pipeline::{render_views, score_images};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelAttack {
    /// Delete this fraction of Gaussians, chosen uniformly.
    Remove { amount: f64 },
    /// Append copies of this fraction of Gaussians; copies keep their role.
    Clone { amount: f64 },
    /// Add N(0, sigma) to every pre-activation parameter.
    ParamNoise { sigma: f64 },
}

impl ModelAttack {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Remove { .. } => "remove",
            Self::Clone { .. } => "clone",
            Self::ParamNoise { .. } => "param_noise",
        }
    }

    pub fn param(&self) -> f64 {
        match *self {
            Self::Remove { amount } | Self::Clone { amount } => amount,
            Self::ParamNoise { sigma } => sigma,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            Self::Remove { amount } | Self::Clone { amount } => (0.0..=1.0).contains(&amount),
            Self::ParamNoise { sigma } => sigma >= 0.0 && sigma.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid model attack {}:{}", self.name(), self.param())))
        }
    }
}

fn count(amount: f64, n: usize) -> usize {
    ((amount * n as f64).round() as usize).min(n)
}

pub fn model_attack<R: Rng + ?Sized>(model: &GaussianModel, attack: &ModelAttack, rng: &mut R) -> Result<GaussianModel> {
    attack.validate()?;
    let n = model.len();
    match *attack {
        ModelAttack::Remove { amount } => {
            let k = count(amount, n);
            if k == n && n > 0 {
                log::warn!("remove attack deletes every Gaussian");
            }
            let mut keep = vec![true; n];
            for i in sample(rng, n, k) {
                keep[i] = false;
            }
            Ok(model.retain_indices(&keep))
        }
        ModelAttack::Clone { amount } => {
            let mut picked = sample(rng, n, count(amount, n)).into_vec();
            picked.sort_unstable();
            let mut out = model.clone();
            for i in picked {
                out.gaussians.push(model.gaussians[i].clone());
                out.roles.push(model.roles[i]);
            }
            Ok(out)
        }
        ModelAttack::ParamNoise { sigma } => {
            if sigma == 0.0 {
                return Ok(model.clone());
            }
            let noise = Normal::new(0.0, sigma).map_err(|e| Error::Config(e.to_string()))?;
            let mut out = model.clone();
            for g in out.gaussians.iter_mut() {
                let mut raw = g.to_raw();
                for v in raw
                    .position
                    .iter_mut()
                    .chain(raw.log_scale.iter_mut())
                    .chain(raw.rotation.iter_mut())
                    .chain(std::iter::once(&mut raw.opacity_logit))
                    .chain(raw.sh_dc.iter_mut())
                    .chain(raw.sh_rest.iter_mut())
                {
                    *v += noise.sample(rng);
                }
                *g = Gaussian::from_raw(&raw)?;
            }
            out.validate()?;
            Ok(out)
        }
    }
}

/// One row of the attack matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Attack {
    None,
    Image(Distortion),
    /// Distortions applied in order to the same render.
    Combined(Vec<Distortion>),
    Model(ModelAttack),
}

impl Attack {
    pub fn name(&self) -> &'static str {
        match self {
            Self::None => "none",
            Self::Image(d) => d.name(),
            Self::Combined(_) => "combined",
            Self::Model(m) => m.name(),
        }
    }

    pub fn param_label(&self) -> String {
        match self {
            Self::None => String::new(),
            Self::Image(d) => format!("{}", d.param()),
            Self::Combined(chain) => chain.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("+"),
            Self::Model(m) => format!("{}", m.param()),
        }
    }
}

impl fmt::Display for Attack {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::None => f.write_str("none"),
            _ => write!(f, "{}:{}", self.name(), self.param_label()),
        }
    }
}

/// Image attacks, the combined chain, then remove, clone and parameter noise.
pub fn attacks_from_config(cfg: &AttackConfig) -> Vec<Attack> {
    let mut out: Vec<Attack> = cfg.image.iter().copied().map(Attack::Image).collect();
    if !cfg.combined.is_empty() {
        out.push(Attack::Combined(cfg.combined.clone()));
    }
    out.push(Attack::Model(ModelAttack::Remove { amount: cfg.remove }));
    out.push(Attack::Model(ModelAttack::Clone { amount: cfg.clone }));
    out.push(Attack::Model(ModelAttack::ParamNoise { sigma: cfg.param_noise }));
    out
}

/// Seed for a row's private rng stream.
pub fn row_seed(seed: u64, label: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(label.as_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("sha256 has 32 bytes"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackRow {
    pub attack: String,
    pub param: String,
    pub bit_acc: f64,
    pub psnr: f64,
    pub ssim: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct AttackReport {
    pub rows: Vec<AttackRow>,
}

pub const CSV_HEADER: [&str; 5] = ["attack", "param", "bit_acc", "psnr", "ssim"];

impl AttackReport {
    pub fn row(&self, attack: &str) -> Option<&AttackRow> {
        self.rows.iter().find(|r| r.attack == attack)
    }

    /// Means over the attacked rows (the no-distortion row excluded); `None`
    /// when there are no attacked rows.
    pub fn means(&self) -> Option<(f64, f64, f64)> {
        let attacked: Vec<&AttackRow> = self.rows.iter().filter(|r| r.attack != "none").collect();
        if attacked.is_empty() {
            return None;
        }
        let n = attacked.len() as f64;
        Some((
            attacked.iter().map(|r| r.bit_acc).sum::<f64>() / n,
            attacked.iter().map(|r| r.psnr).sum::<f64>() / n,
            attacked.iter().map(|r| r.ssim).sum::<f64>() / n,
        ))
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(CSV_HEADER).map_err(|e| Error::Data(e.to_string()))?;
        for r in &self.rows {
            w.write_record([r.attack.clone(), r.param.clone(), format!("{:.6}", r.bit_acc), format!("{:.4}", r.psnr), format!("{:.6}", r.ssim)])
                .map_err(|e| Error::Data(e.to_string()))?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Data(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::Data(e.to_string()))
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut r = csv::Reader::from_reader(text.as_bytes());
        let header = r.headers().map_err(|e| Error::Parse(e.to_string()))?;
        if header.iter().ne(CSV_HEADER) {
            return Err(Error::Parse(format!("unexpected report header `{}`", header.iter().collect::<Vec<_>>().join(","))));
        }
        let mut rows = Vec::new();
        for rec in r.records() {
            let rec = rec.map_err(|e| Error::Parse(e.to_string()))?;
            let num = |i: usize| -> Result<f64> { rec[i].trim().parse().map_err(|_| Error::Parse(format!("bad number `{}`", &rec[i]))) };
            rows.push(AttackRow {
                attack: rec[0].to_string(),
                param: rec[1].to_string(),
                bit_acc: num(2)?,
                psnr: num(3)?,
                ssim: num(4)?,
            });
        }
        Ok(Self { rows })
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_csv()?)?;
        Ok(())
    }

    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_csv(&std::fs::read_to_string(path)?)
    }

    /// Fixed-width table with a trailing mean line.
    pub fn summary(&self) -> String {
        let mut s = format!("{:<12} {:<28} {:>8} {:>8} {:>7}\n", "attack", "param", "bit_acc", "psnr", "ssim");
        for r in &self.rows {
            s += &format!("{:<12} {:<28} {:>8.4} {:>8.2} {:>7.4}\n", r.attack, r.param, r.bit_acc, r.psnr, r.ssim);
        }
        if let Some((b, p, q)) = self.means() {
            s += &format!("{:<12} {:<28} {:>8.4} {:>8.2} {:>7.4}\n", "mean", "(attacked rows)", b, p, q);
        }
        s
    }
}

/// Score `model` under each attack on the given views. The no-distortion row
/// always comes first. Image attacks run in eval-exact mode; every row draws
/// from its own stream seeded by `(seed, row label)`, so rows are
/// independent and run in parallel.
pub fn run_attack_matrix(
    model: &GaussianModel,
    cameras: &[Camera],
    references: &[Image],
    decoder: &Decoder,
    message: &Message,
    attacks: &[Attack],
    seed: u64,
) -> Result<AttackReport> {
    if cameras.is_empty() || cameras.len() != references.len() {
        return Err(Error::Contract("attack matrix needs one reference per camera".into()));
    }
    let clean = render_views(model, cameras);
    let mut all = vec![Attack::None];
    all.extend(attacks.iter().filter(|a| !matches!(a, Attack::None)).cloned());
    let rows = all
        .par_iter()
        .map(|attack| {
            let label = attack.to_string();
            let mut rng = ChaCha8Rng::seed_from_u64(row_seed(seed, &label));
            let images = match attack {
                Attack::None => clean.clone(),
                Attack::Image(d) => clean.iter().map(|c| Ok(apply_chain(c, std::slice::from_ref(d), Mode::EvalExact, &mut rng)?.0)).collect::<Result<_>>()?,
                Attack::Combined(chain) => clean.iter().map(|c| Ok(apply_chain(c, chain, Mode::EvalExact, &mut rng)?.0)).collect::<Result<_>>()?,
                Attack::Model(m) => render_views(&model_attack(model, m, &mut rng)?, cameras),
            };
            let s = score_images(&images, references, decoder, message)?;
            Ok(AttackRow {
                attack: attack.name().to_string(),
                param: attack.param_label(),
                bit_acc: s.bit_acc,
                psnr: s.psnr,
                ssim: s.ssim,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(AttackReport { rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{Vector3, Vector4};

    use crate::gaussian::Role;

    fn model(n: usize) -> GaussianModel {
        let g = (0..n)
            .map(|i| Gaussian::new(Vector3::new(i as f64 * 0.01, 0.0, 0.0), Vector3::repeat(0.1), Vector4::new(1.0, 0.0, 0.0, 0.0), 0.5, Vector3::repeat(0.2)))
            .collect();
        let mut m = GaussianModel::new(g, 3);
        for i in 0..n {
            m.roles[i] = if i % 3 == 0 { Role::Wm } else { Role::Vis };
        }
        m
    }

    #[test]
    fn identities() {
        let m = model(50);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(model_attack(&m, &ModelAttack::Remove { amount: 0.0 }, &mut rng).unwrap(), m);
        assert_eq!(model_attack(&m, &ModelAttack::ParamNoise { sigma: 0.0 }, &mut rng).unwrap(), m);
        assert_eq!(model_attack(&m, &ModelAttack::Clone { amount: 0.0 }, &mut rng).unwrap(), m);
    }

    #[test]
    fn clone_keeps_originals_and_roles() {
        let m = model(100);
        let out = model_attack(&m, &ModelAttack::Clone { amount: 0.2 }, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        assert_eq!(out.len(), 120);
        assert_eq!(&out.roles[..100], &m.roles[..]);
        for i in 100..120 {
            let src = m.gaussians.iter().position(|g| *g == out.gaussians[i]).unwrap();
            assert_eq!(out.roles[i], m.roles[src]);
        }
    }

    #[test]
    fn removal_composes() {
        let m = model(200);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = model_attack(&m, &ModelAttack::Remove { amount: 0.2 }, &mut rng).unwrap();
        let b = model_attack(&a, &ModelAttack::Remove { amount: 0.3 }, &mut rng).unwrap();
        assert!((b.len() as f64 - 0.8 * 0.7 * 200.0).abs() <= 1.0);
        let all = model_attack(&m, &ModelAttack::Remove { amount: 1.0 }, &mut rng).unwrap();
        assert!(all.is_empty());
    }

    #[test]
    fn bad_amounts_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(model_attack(&model(4), &ModelAttack::Remove { amount: 1.5 }, &mut rng), Err(Error::Config(_))));
        assert!(matches!(model_attack(&model(4), &ModelAttack::ParamNoise { sigma: -1.0 }, &mut rng), Err(Error::Config(_))));
    }

    #[test]
    fn csv_round_trip() {
        let rep = AttackReport {
            rows: vec![
                AttackRow { attack: "none".into(), param: "".into(), bit_acc: 1.0, psnr: 99.0, ssim: 1.0 },
                AttackRow { attack: "combined".into(), param: "noise:0.1+crop:0.4+jpeg:50".into(), bit_acc: 0.75, psnr: 20.5, ssim: 0.5 },
            ],
        };
        let text = rep.to_csv().unwrap();
        assert!(text.starts_with("attack,param,bit_acc,psnr,ssim\n"));
        assert_eq!(AttackReport::from_csv(&text).unwrap(), rep);
        assert_eq!(rep.means().unwrap().0, 0.75);
        assert!(AttackReport::from_csv("a,b\n1,2\n").is_err());
    }

    #[test]
    fn row_seeds_differ_by_label() {
        assert_ne!(row_seed(0, "noise:0.1"), row_seed(0, "blur:0.1"));
        assert_eq!(row_seed(5, "x"), row_seed(5, "x"));
    }
}
