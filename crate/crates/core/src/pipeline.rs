//! End-to-end orchestration: selection, masks, decoder setup, finetuning and
//! evaluation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::camera::Camera;
use crate::codec::{aggregate_logits, bit_accuracy, build_decoder_with_grid, Decoder, Message};
use crate::config::{Config, DecoderConfig, MaskConfig};
use crate::error::{Error, Result};
use crate::experts::{run_experts, ExpertConfig, FeatureVector};
use crate::finetune::{train, RunManifest, TrainConfig, TrainData};
use crate::gaussian::GaussianModel;
use crate::image::Image;
use crate::mask::{build_masks, build_point_masks, channel_weights, GroupMask, WeightInputs};
use crate::metrics::{psnr, ssim};
use crate::render::{render, visibility_stats};
use crate::sbag::{proxy_scores, select_carriers, CarrierPlan, SbagConfig};

/// Output of the selection stage: the split model with roles and its masks.
#[derive(Debug, Clone)]
pub struct Selection {
    pub model: GaussianModel,
    pub plan: CarrierPlan,
    pub mask: GroupMask,
    pub features: FeatureVector,
}

pub fn weight_inputs(features: &FeatureVector, r: &[Vec<f64>; 3]) -> WeightInputs {
    WeightInputs {
        r1: r[0].clone(),
        r2: r[1].clone(),
        rho_hf: features.terms.rho_hf.clone(),
        opacity_gate: features.terms.opacity_gate.clone(),
        iso: features.terms.iso.clone(),
    }
}

/// Experts, visibility, carrier selection and masks in one call.
pub fn select(model: &GaussianModel, cameras: &[Camera], bits: usize, experts: &ExpertConfig, sbag: &SbagConfig, mask_cfg: &MaskConfig) -> Result<Selection> {
    let (_, features, evidence) = run_experts(model, experts)?;
    let vis = visibility_stats(model, cameras)?;
    let (split, plan) = select_carriers(model, &features, &evidence, &vis, bits, sbag, experts.q_lo, experts.q_hi)?;
    let prox = proxy_scores(&evidence, sbag.beta);
    let inputs = weight_inputs(&features, &prox.r).gather(&plan.origin);
    let w = channel_weights(&inputs);
    let mask = if mask_cfg.per_point {
        build_point_masks(&w, &split.roles, mask_cfg.cap, mask_cfg.floor)?
    } else {
        build_masks(&w, &split.roles, mask_cfg.cap, mask_cfg.floor)?
    };
    Ok(Selection {
        model: split,
        plan,
        mask,
        features,
    })
}

/// Orbit-jittered copies of each camera about the median depth of the
/// Gaussians in front of it.
pub fn jitter_poses(model: &GaussianModel, cameras: &[Camera], per_camera: usize, max_deg: f64, seed: u64) -> Vec<Camera> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let max = max_deg.to_radians();
    let mut out = Vec::with_capacity(cameras.len() * per_camera);
    for cam in cameras {
        let mut depths: Vec<f64> = model.gaussians.iter().map(|g| cam.to_camera(&g.position).z).filter(|z| *z > 0.0).collect();
        if depths.is_empty() {
            continue;
        }
        depths.sort_by(f64::total_cmp);
        let depth = depths[depths.len() / 2];
        for _ in 0..per_camera {
            let (yaw, pitch) = if max > 0.0 { (rng.random_range(-max..=max), rng.random_range(-max..=max)) } else { (0.0, 0.0) };
            out.push(cam.orbit(depth, yaw, pitch));
        }
    }
    out
}

/// Build the decoder for a host model: project the rows off the host's
/// render variation over the training cameras and jittered copies of them,
/// then zero the mean logits of the training renders.
pub fn prepare_decoder(cfg: &DecoderConfig, model: &GaussianModel, cameras: &[Camera], references: &[Image]) -> Result<Decoder> {
    let mut d = build_decoder_with_grid(cfg.seed, cfg.bits, cfg.resolution, cfg.levels, cfg.row_grid)?;
    d.gain = cfg.gain;
    if cfg.null_host {
        let extra = render_views(model, &jitter_poses(model, cameras, cfg.host_jitter_views, cfg.host_jitter_deg, cfg.seed));
        let host: Vec<Image> = references.iter().chain(&extra).cloned().collect();
        d.null_host_variation(&host)?;
    }
    if cfg.calibrate || cfg.null_host {
        d.calibrate_bias(references)?;
    }
    Ok(d)
}

pub fn message_for(cfg: &Config, seed: u64) -> Result<Message> {
    let m = match &cfg.message {
        Some(hex) => Message::from_hex(hex)?,
        None => Message::random(seed, cfg.decoder.bits)?,
    };
    if m.len() != cfg.decoder.bits {
        return Err(Error::Config(format!("message has {} bits but decoder.bits = {}", m.len(), cfg.decoder.bits)));
    }
    Ok(m)
}

#[derive(Debug, Clone)]
pub struct Embedding {
    pub model: GaussianModel,
    pub plan: CarrierPlan,
    pub mask: GroupMask,
    pub decoder: Decoder,
    pub message: Message,
    pub manifest: RunManifest,
}

/// Select carriers on `model`, then finetune against its own renders on the
/// training cameras.
pub fn embed(model: &GaussianModel, train_cameras: &[Camera], cfg: &Config, message: &Message, train_cfg: &TrainConfig) -> Result<Embedding> {
    if message.len() != cfg.decoder.bits {
        return Err(Error::Config(format!("message has {} bits but decoder.bits = {}", message.len(), cfg.decoder.bits)));
    }
    let sel = select(model, train_cameras, message.len(), &cfg.experts, &cfg.sbag, &cfg.mask)?;
    let references = render_views(model, train_cameras);
    let decoder = prepare_decoder(&cfg.decoder, model, train_cameras, &references)?;
    let aug_cameras = jitter_poses(model, train_cameras, train_cfg.wm_jitter_views, train_cfg.wm_jitter_deg, train_cfg.seed ^ 0x6a17);
    let aug_references = render_views(model, &aug_cameras);
    let data = TrainData {
        aug_cameras: &aug_cameras,
        aug_references: &aug_references,
        ..TrainData::new(train_cameras, &references)
    };
    let (trained, manifest) = train(&sel.model, data, &sel.plan.digest(), &sel.mask, &decoder, message, train_cfg)?;
    Ok(Embedding {
        model: trained,
        plan: sel.plan,
        mask: sel.mask,
        decoder,
        message: message.clone(),
        manifest,
    })
}

pub fn render_views(model: &GaussianModel, cameras: &[Camera]) -> Vec<Image> {
    cameras.par_iter().map(|c| render(model, c).image).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub bit_acc: f64,
    pub psnr: f64,
    pub ssim: f64,
}

/// Decode with logits averaged over `images` and compare against references.
pub fn score_images(images: &[Image], references: &[Image], decoder: &Decoder, message: &Message) -> Result<EvalSummary> {
    if images.is_empty() || images.len() != references.len() {
        return Err(Error::Contract("evaluation needs one reference per image".into()));
    }
    let logits: Vec<Vec<f64>> = images.iter().map(|i| decoder.decode(i)).collect::<Result<_>>()?;
    let z = aggregate_logits(&logits)?;
    let n = images.len() as f64;
    let mut p = 0.0;
    let mut s = 0.0;
    for (a, b) in images.iter().zip(references) {
        p += psnr(a, b)? / n;
        s += ssim(a, b)? / n;
    }
    Ok(EvalSummary {
        bit_acc: bit_accuracy(&z, message),
        psnr: p,
        ssim: s,
    })
}

pub fn evaluate(model: &GaussianModel, cameras: &[Camera], references: &[Image], decoder: &Decoder, message: &Message) -> Result<EvalSummary> {
    score_images(&render_views(model, cameras), references, decoder, message)
}
