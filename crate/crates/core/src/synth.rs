//! Deterministic synthetic scenes for desk-scale experiments.

use nalgebra::{Vector3, Vector4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::camera::Camera;
use crate::error::{Error, Result};
use crate::gaussian::{Gaussian, GaussianModel, SH_REST_LEN};
use crate::image::Image;
use crate::render::render;
use crate::sh::C0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n_gaussians: usize,
    pub n_views: usize,
    pub resolution: usize,
    pub clusters: usize,
    /// Median per-axis standard deviation of a Gaussian.
    pub scale: f64,
    pub cluster_spread: f64,
    pub radius: f64,
    pub elevation_deg: f64,
    /// Horizontal arc covered by the cameras; 360 gives a full ring.
    pub arc_degrees: f64,
    pub fov_deg: f64,
    pub sh_degree: usize,
    /// Fraction of views held out for evaluation (taken from the end of the arc).
    pub eval_fraction: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_gaussians: 3000,
            n_views: 10,
            resolution: 128,
            clusters: 12,
            scale: 0.04,
            cluster_spread: 0.25,
            radius: 4.0,
            elevation_deg: 20.0,
            arc_degrees: 10.0,
            fov_deg: 40.0,
            sh_degree: 3,
            eval_fraction: 0.2,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticScene {
    pub model: GaussianModel,
    pub cameras: Vec<Camera>,
    pub references: Vec<Image>,
    pub train_views: Vec<usize>,
    pub eval_views: Vec<usize>,
}

impl SyntheticScene {
    pub fn train_cameras(&self) -> Vec<Camera> {
        self.train_views.iter().map(|&i| self.cameras[i].clone()).collect()
    }

    pub fn eval_cameras(&self) -> Vec<Camera> {
        self.eval_views.iter().map(|&i| self.cameras[i].clone()).collect()
    }

    /// SHA-256 over every parameter and camera.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for g in &self.model.gaussians {
            let r = g.to_raw();
            for v in r.position.iter().chain(&r.log_scale).chain(&r.rotation).chain([&r.opacity_logit]).chain(&r.sh_dc).chain(&r.sh_rest) {
                h.update(v.to_le_bytes());
            }
        }
        for c in &self.cameras {
            for v in c.world_to_camera.iter().chain([&c.fx, &c.fy, &c.cx, &c.cy]) {
                h.update(v.to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    }
}

/// Split `n` views into train and held-out eval views (the last fraction).
pub fn split_views(n: usize, eval_fraction: f64) -> (Vec<usize>, Vec<usize>) {
    let n_eval = if n <= 1 { 0 } else { ((n as f64 * eval_fraction).round() as usize).clamp(1, n - 1) };
    ((0..n - n_eval).collect(), (n - n_eval..n).collect())
}

/// Cameras on a horizontal arc around the origin, all looking at it.
pub fn camera_arc(cfg: &SynthConfig) -> Result<Vec<Camera>> {
    let f = cfg.resolution as f64 / 2.0 / (cfg.fov_deg.to_radians() / 2.0).tan();
    let elev = cfg.elevation_deg.to_radians();
    let full = cfg.arc_degrees >= 360.0;
    (0..cfg.n_views)
        .map(|i| {
            let t = if cfg.n_views == 1 {
                0.0
            } else if full {
                i as f64 / cfg.n_views as f64 - 0.5
            } else {
                i as f64 / (cfg.n_views - 1) as f64 - 0.5
            };
            let az = (t * cfg.arc_degrees.min(360.0)).to_radians();
            let eye = Vector3::new(cfg.radius * elev.cos() * az.sin(), -cfg.radius * elev.sin(), -cfg.radius * elev.cos() * az.cos());
            Camera::look_at(eye, Vector3::zeros(), Vector3::new(0.0, -1.0, 0.0), f, f, cfg.resolution, cfg.resolution)
        })
        .collect()
}

fn random_unit_quat(rng: &mut ChaCha8Rng) -> Vector4<f64> {
    loop {
        let q = Vector4::from_fn(|_, _| StandardNormal.sample(rng));
        let n: f64 = q.norm();
        if n > 1e-3 {
            return q / n;
        }
    }
}

pub fn make_synthetic_scene(seed: u64, cfg: &SynthConfig) -> Result<SyntheticScene> {
    if cfg.n_gaussians < 10 {
        return Err(Error::Config(format!("synthetic scenes need at least 10 Gaussians, got {}", cfg.n_gaussians)));
    }
    if cfg.n_views == 0 || cfg.resolution < 8 || cfg.clusters == 0 || cfg.sh_degree > 3 {
        return Err(Error::Config("synthetic scene needs views, clusters, resolution >= 8 and sh_degree <= 3".into()));
    }
    if !(cfg.scale > 0.0 && cfg.radius > 0.0 && cfg.fov_deg > 0.0 && cfg.fov_deg < 180.0) {
        return Err(Error::Config("synthetic scene scale, radius and fov must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers: Vec<(Vector3<f64>, [f64; 3])> = (0..cfg.clusters)
        .map(|_| {
            let c = loop {
                let p = Vector3::from_fn(|_, _| rng.random_range(-1.0..1.0));
                if p.norm() <= 1.0 {
                    break p * 0.9;
                }
            };
            (c, std::array::from_fn(|_| rng.random_range(0.1..0.9)))
        })
        .collect();
    let jitter = Normal::new(0.0, cfg.cluster_spread).map_err(|e| Error::Config(e.to_string()))?;
    let rest_noise = Normal::new(0.0, 0.03).map_err(|e| Error::Config(e.to_string()))?;
    let rest_len = (cfg.sh_degree + 1).pow(2) - 1;
    let gaussians = (0..cfg.n_gaussians)
        .map(|i| {
            let (center, color) = centers[i % cfg.clusters];
            let pos = center + Vector3::from_fn(|_, _| jitter.sample(&mut rng));
            let z: f64 = StandardNormal.sample(&mut rng);
            let base = cfg.scale * (0.25 * z).exp();
            let scale = Vector3::from_fn(|_, _| base * rng.random_range(0.6..1.4));
            let rot = random_unit_quat(&mut rng);
            let opacity = rng.random_range(0.3..0.9);
            let dc = Vector3::from_fn(|c, _| (color[c] + rng.random_range(-0.08..0.08) - 0.5) / C0);
            let mut g = Gaussian::new(pos, scale, rot, opacity, dc);
            let mut rest = [0.0; SH_REST_LEN];
            for ch in 0..3 {
                for k in 0..rest_len {
                    rest[ch * 15 + k] = rest_noise.sample(&mut rng);
                }
            }
            g.sh_rest = rest;
            g
        })
        .collect();
    let model = GaussianModel::new(gaussians, cfg.sh_degree);
    let cameras = camera_arc(cfg)?;
    let references = cameras.iter().map(|c| render(&model, c).image).collect();
    let (train_views, eval_views) = split_views(cfg.n_views, cfg.eval_fraction);
    Ok(SyntheticScene {
        model,
        cameras,
        references,
        train_views,
        eval_views,
    })
}
