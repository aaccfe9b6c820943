//! Decoupled two-pass finetuning: the visual loss updates compensators, the
//! watermark loss updates carriers, each through its group mask and its own
//! Adam partition.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::camera::Camera;
use crate::codec::{aggregate_logits, bit_accuracy, total_wm_loss, wm_losses, Decoder, Message};
use crate::distort::{apply_chain, Distortion, Mode};
use crate::error::{Error, Result};
use crate::gaussian::{sigmoid, GaussianModel, Role};
use crate::image::Image;
use crate::mask::{route_gradients, GroupMask};
use crate::metrics::{ms_ssim_grad, psnr};
use crate::render::{backward_raster, render_raster, Channel, ChannelSet, GaussianGrad, GradientSet, Raster, RenderSettings};
use crate::wavelet::{highfreq_loss_grad, lowfreq_loss_grad};

pub const DOMAIN_GUARD: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Steps per epoch; `None` means one step per training view.
    pub steps_per_epoch: Option<usize>,
    /// Learning rates in `Channel::ALL` order (dc, rest, opacity, rotation, scale).
    pub lr: [f64; 5],
    pub lambda_rec: f64,
    pub lambda_msssim: f64,
    pub lambda_wav_high: f64,
    pub wav_levels: usize,
    pub lambda_clean: f64,
    pub lambda_eot: f64,
    pub lambda_low: f64,
    pub seed: u64,
    pub eot: bool,
    pub eot_per_step: usize,
    pub eot_family: Vec<Distortion>,
    /// Views whose logits are averaged in the watermark pass of each step.
    pub wm_views: usize,
    /// Orbit-jittered poses per training camera added to the watermark pass.
    pub wm_jitter_views: usize,
    /// Maximum yaw and pitch of those poses, in degrees.
    pub wm_jitter_deg: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Global gradient norm cap per role partition.
    pub clip_norm: f64,
    pub log_every: usize,
    pub divergence_threshold: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 40,
            steps_per_epoch: None,
            lr: [5e-3, 2e-4, 1e-3, 1e-3, 1e-3],
            lambda_rec: 1.0,
            lambda_msssim: 0.2,
            lambda_wav_high: 0.1,
            wav_levels: 2,
            lambda_clean: 1.0,
            lambda_eot: 1.0,
            lambda_low: 0.1,
            seed: 0,
            eot: true,
            eot_per_step: 2,
            eot_family: Distortion::standard_set(),
            wm_views: 4,
            wm_jitter_views: 4,
            wm_jitter_deg: 5.0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            clip_norm: 1.0,
            log_every: 1,
            divergence_threshold: 1e6,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lr.iter().any(|l| !(*l > 0.0)) {
            return Err(Error::Config("learning rates must be > 0".into()));
        }
        let lambdas = [self.lambda_rec, self.lambda_msssim, self.lambda_wav_high, self.lambda_clean, self.lambda_eot, self.lambda_low];
        if lambdas.iter().any(|l| !(*l >= 0.0)) {
            return Err(Error::Config("loss weights must be >= 0".into()));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !(self.eps > 0.0) {
            return Err(Error::Config("adam betas must be in [0, 1) and eps > 0".into()));
        }
        if !(self.clip_norm > 0.0) || self.wav_levels == 0 || self.log_every == 0 {
            return Err(Error::Config("clip_norm, wav_levels and log_every must be positive".into()));
        }
        if self.wm_views == 0 || !(0.0..90.0).contains(&self.wm_jitter_deg) {
            return Err(Error::Config("wm_views must be positive and wm_jitter_deg in [0, 90)".into()));
        }
        if self.eot && (self.eot_family.is_empty() || self.eot_per_step == 0) {
            return Err(Error::Config("EOT needs a nonempty family and at least one draw per step".into()));
        }
        for d in &self.eot_family {
            d.validate()?;
        }
        Ok(())
    }
}

const OFFSETS: [usize; 6] = [0, 3, 48, 49, 53, 56];
const PARAMS: usize = 56;

/// Adam moments per Gaussian, with a separate step counter for each role
/// partition.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub m: Vec<[f64; PARAMS]>,
    pub v: Vec<[f64; PARAMS]>,
    pub t_wm: u64,
    pub t_vis: u64,
    pub step: u64,
}

impl OptimizerState {
    pub fn new(n: usize) -> Self {
        Self {
            m: vec![[0.0; PARAMS]; n],
            v: vec![[0.0; PARAMS]; n],
            t_wm: 0,
            t_vis: 0,
            step: 0,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.m.iter().chain(&self.v).all(|a| a.iter().all(|v| v.is_finite()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepMetrics {
    pub step: u64,
    pub l_vis: f64,
    pub l_wm: f64,
    pub l_clean: f64,
    pub l_eot: f64,
    pub psnr: f64,
    pub bit_acc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config: TrainConfig,
    pub plan_digest: String,
    pub mask: GroupMask,
    pub decoder_seed: u64,
    pub decoder_hash: String,
    pub message: String,
    metrics: Vec<StepMetrics>,
    pub aborted: Option<String>,
}

impl RunManifest {
    pub fn new(config: &TrainConfig, plan_digest: &str, mask: &GroupMask, decoder: &Decoder, message: &Message) -> Self {
        Self {
            config: config.clone(),
            plan_digest: plan_digest.to_string(),
            mask: mask.clone(),
            decoder_seed: decoder.seed,
            decoder_hash: decoder.state_hash(),
            message: message.to_hex(),
            metrics: Vec::new(),
            aborted: None,
        }
    }

    pub fn push(&mut self, m: StepMetrics) {
        self.metrics.push(m);
    }

    pub fn metrics(&self) -> &[StepMetrics] {
        &self.metrics
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

/// Visual objective: `λ_rec·L1 + λ_ms·(1 − MS-SSIM) + λ_high·L_wav_high`,
/// with its gradient with respect to the render.
pub fn vis_loss(render: &Image, reference: &Image, cfg: &TrainConfig) -> Result<(f64, Image)> {
    render.check_shape(reference, "vis_loss")?;
    let n = render.data.len().max(1) as f64;
    let mut grad = Image::zeros(render.width, render.height);
    let mut total = 0.0;
    if cfg.lambda_rec > 0.0 {
        for ((g, a), b) in grad.data.iter_mut().zip(&render.data).zip(&reference.data) {
            let d = a - b;
            total += cfg.lambda_rec * d.abs() / n;
            *g += cfg.lambda_rec * if d > 0.0 { 1.0 } else if d < 0.0 { -1.0 } else { 0.0 } / n;
        }
    }
    if cfg.lambda_msssim > 0.0 {
        let (ms, g) = ms_ssim_grad(render, reference)?;
        total += cfg.lambda_msssim * (1.0 - ms);
        grad.data.iter_mut().zip(&g.data).for_each(|(o, v)| *o -= cfg.lambda_msssim * v);
    }
    if cfg.lambda_wav_high > 0.0 {
        let (l, g) = highfreq_loss_grad(render, reference, cfg.wav_levels)?;
        total += cfg.lambda_wav_high * l;
        grad.data.iter_mut().zip(&g.data).for_each(|(o, v)| *o += cfg.lambda_wav_high * v);
    }
    Ok((total, grad))
}

/// Which loss sides feed the step. Both are on in normal training; the
/// decoupling checks switch one off.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Sides {
    pub wm: bool,
    pub vis: bool,
}

impl Sides {
    pub const BOTH: Sides = Sides { wm: true, vis: true };
}

/// Training views with their pre-watermark reference renders. The optional
/// augmentation views join the watermark pass only.
#[derive(Debug, Clone, Copy)]
pub struct TrainData<'a> {
    pub cameras: &'a [Camera],
    pub references: &'a [Image],
    pub aug_cameras: &'a [Camera],
    pub aug_references: &'a [Image],
}

impl<'a> TrainData<'a> {
    pub fn new(cameras: &'a [Camera], references: &'a [Image]) -> Self {
        Self {
            cameras,
            references,
            aug_cameras: &[],
            aug_references: &[],
        }
    }

    fn check(&self) -> Result<()> {
        if self.cameras.is_empty() || self.cameras.len() != self.references.len() || self.aug_cameras.len() != self.aug_references.len() {
            return Err(Error::Contract("training needs one reference per camera and at least one camera".into()));
        }
        Ok(())
    }

    fn wm_pool(&self) -> usize {
        self.cameras.len() + self.aug_cameras.len()
    }

    fn wm_view(&self, i: usize) -> (&'a Camera, &'a Image) {
        match i.checked_sub(self.cameras.len()) {
            None => (&self.cameras[i], &self.references[i]),
            Some(j) => (&self.aug_cameras[j], &self.aug_references[j]),
        }
    }
}

fn partition_norm(g: &GradientSet, roles: &[Role], role: Role) -> f64 {
    g.grads
        .iter()
        .zip(roles)
        .filter(|(_, r)| **r == role)
        .map(|(gg, _)| Channel::ALL.iter().map(|&c| gg.channel(c).iter().map(|v| v * v).sum::<f64>()).sum::<f64>())
        .sum::<f64>()
        .sqrt()
}

fn raw_channel(g: &crate::gaussian::Gaussian, ch: Channel) -> Vec<f64> {
    match ch {
        Channel::Dc => g.sh_dc.iter().copied().collect(),
        Channel::Rest => g.sh_rest.to_vec(),
        Channel::Opacity => vec![crate::gaussian::logit(g.opacity)],
        Channel::Rotation => g.rotation.iter().copied().collect(),
        Channel::Scale => g.scale.iter().map(|s| s.ln()).collect(),
    }
}

fn write_channel(g: &mut crate::gaussian::Gaussian, ch: Channel, raw: &[f64]) {
    match ch {
        Channel::Dc => g.sh_dc.iter_mut().zip(raw).for_each(|(d, v)| *d = *v),
        Channel::Rest => g.sh_rest.copy_from_slice(raw),
        Channel::Opacity => g.opacity = sigmoid(raw[0]).clamp(DOMAIN_GUARD, 1.0 - DOMAIN_GUARD),
        Channel::Rotation => {
            let q = nalgebra::Vector4::new(raw[0], raw[1], raw[2], raw[3]);
            let n = q.norm();
            if n > 1e-12 {
                g.rotation = q / n;
            }
        }
        Channel::Scale => g.scale.iter_mut().zip(raw).for_each(|(s, v)| *s = v.exp().max(DOMAIN_GUARD)),
    }
}

fn adam_apply(model: &mut GaussianModel, grads: &GradientSet, mask: &GroupMask, state: &mut OptimizerState, cfg: &TrainConfig, role: Role) {
    let t = match role {
        Role::Wm => {
            state.t_wm += 1;
            state.t_wm
        }
        _ => {
            state.t_vis += 1;
            state.t_vis
        }
    } as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    for i in 0..model.len() {
        if model.roles[i] != role {
            continue;
        }
        for ch in Channel::ALL {
            let mult = mask.multiplier(i, role, ch);
            let grad = grads.grads[i].channel(ch);
            let off = OFFSETS[ch.index()];
            let mut raw = raw_channel(&model.gaussians[i], ch);
            let mut changed = false;
            for (k, r) in raw.iter_mut().enumerate() {
                let (m, v) = (&mut state.m[i][off + k], &mut state.v[i][off + k]);
                *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * grad[k];
                *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * grad[k] * grad[k];
                let step = cfg.lr[ch.index()] * mult * (*m / bc1) / ((*v / bc2).sqrt() + cfg.eps);
                if step != 0.0 {
                    *r -= step;
                    changed = true;
                }
            }
            if changed {
                write_channel(&mut model.gaussians[i], ch, &raw);
            }
        }
    }
}

fn roles_present(model: &GaussianModel, role: Role) -> bool {
    model.roles.contains(&role)
}

/// One decoupled step. The model and state are only modified when the step
/// succeeds.
#[allow(clippy::too_many_arguments)]
pub fn train_step_with(
    model: &mut GaussianModel,
    data: TrainData<'_>,
    mask: &GroupMask,
    decoder: &Decoder,
    message: &Message,
    cfg: &TrainConfig,
    state: &mut OptimizerState,
    sides: Sides,
) -> Result<StepMetrics> {
    data.check()?;
    if state.m.len() != model.len() {
        return Err(Error::Contract("optimizer state does not match the model".into()));
    }
    let n_views = data.cameras.len();
    let step = state.step;
    let vis_view = step as usize % n_views;
    let pool = data.wm_pool();
    let wm_views: Vec<usize> = (0..cfg.wm_views.clamp(1, pool)).map(|j| (step as usize * cfg.wm_views + 1 + j) % pool).collect();
    let settings = RenderSettings::default();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(step);

    // pass 1: visual loss, compensators only
    let raster_v = Raster::build(model, &data.cameras[vis_view], &settings);
    let out_v = render_raster(&raster_v, model.len());
    let (l_vis, dvis) = vis_loss(&out_v.image, &data.references[vis_view], cfg)?;
    let step_psnr = psnr(&out_v.image, &data.references[vis_view])?;
    let grads_vis = if sides.vis && roles_present(model, Role::Vis) {
        backward_raster(&raster_v, model, &dvis, &ChannelSet::all(), &[Role::Vis])?
    } else {
        GradientSet::zeros(model.len())
    };

    // pass 2: watermark loss on clean views and EOT-distorted copies, carriers only
    let rasters: Vec<Raster> = wm_views.iter().map(|&v| Raster::build(model, data.wm_view(v).0, &settings)).collect();
    let clean: Vec<Image> = rasters.iter().map(|r| render_raster(r, model.len()).image).collect();
    let mut distorted = Vec::new();
    let mut tapes = Vec::new();
    if cfg.eot {
        for _ in 0..cfg.eot_per_step {
            let d = cfg.eot_family[rng.random_range(0..cfg.eot_family.len())];
            let mut imgs = Vec::with_capacity(clean.len());
            let mut ts = Vec::with_capacity(clean.len());
            for c in &clean {
                let (img, tape) = apply_chain(c, &[d], Mode::TrainSurrogate, &mut rng)?;
                imgs.push(img);
                ts.push(tape);
            }
            distorted.push(imgs);
            tapes.push(ts);
        }
    }
    let wl = wm_losses(decoder, &clean, &distorted, message)?;
    let l_eot = if cfg.eot { wl.eot } else { 0.0 };
    let mut l_low = 0.0;
    let mut dwm = Vec::with_capacity(clean.len());
    for (j, c) in clean.iter().enumerate() {
        let (l, g_low) = lowfreq_loss_grad(c, data.wm_view(wm_views[j]).1, cfg.wav_levels)?;
        l_low += l / clean.len() as f64;
        let mut d = Image::zeros(c.width, c.height);
        for (o, (cg, lg)) in d.data.iter_mut().zip(wl.clean_grads[j].data.iter().zip(&g_low.data)) {
            *o = cfg.lambda_clean * cg + cfg.lambda_low * lg / clean.len() as f64;
        }
        for (ts, g) in tapes.iter().zip(&wl.eot_grads) {
            let back = ts[j].backward(&g[j]);
            d.data.iter_mut().zip(&back.data).for_each(|(o, b)| *o += cfg.lambda_eot * b);
        }
        dwm.push(d);
    }
    let l_wm = total_wm_loss(wl.clean, l_eot, l_low, cfg.lambda_clean, cfg.lambda_eot, cfg.lambda_low);
    let logits: Vec<Vec<f64>> = clean.iter().map(|c| decoder.decode(c)).collect::<Result<_>>()?;
    let bit_acc = bit_accuracy(&aggregate_logits(&logits)?, message);

    if !l_vis.is_finite() || !l_wm.is_finite() {
        return Err(Error::NonFinite(format!("step {step}: L_vis = {l_vis}, L_wm = {l_wm}")));
    }
    let mut grads_wm = GradientSet::zeros(model.len());
    if sides.wm && roles_present(model, Role::Wm) {
        for (r, d) in rasters.iter().zip(&dwm) {
            grads_wm.add_assign(&backward_raster(r, model, d, &ChannelSet::all(), &[Role::Wm])?);
        }
    }
    let mut routed = route_gradients(&grads_wm, &grads_vis, &model.roles, mask)?;
    if !routed.is_finite() {
        return Err(Error::NonFinite(format!("step {step}: non-finite gradient")));
    }
    for role in [Role::Wm, Role::Vis] {
        let norm = partition_norm(&routed, &model.roles, role);
        if norm > cfg.clip_norm {
            let s = cfg.clip_norm / norm;
            for (g, r) in routed.grads.iter_mut().zip(&model.roles) {
                if *r == role {
                    scale_grad(g, s);
                }
            }
        }
    }
    if sides.wm {
        adam_apply(model, &routed, mask, state, cfg, Role::Wm);
    }
    if sides.vis {
        adam_apply(model, &routed, mask, state, cfg, Role::Vis);
    }
    state.step += 1;
    Ok(StepMetrics {
        step,
        l_vis,
        l_wm,
        l_clean: wl.clean,
        l_eot,
        psnr: step_psnr,
        bit_acc,
    })
}

fn scale_grad(g: &mut GaussianGrad, s: f64) {
    for ch in Channel::ALL {
        g.channel_mut(ch).iter_mut().for_each(|v| *v *= s);
    }
}

pub fn train_step(
    model: &mut GaussianModel,
    data: TrainData<'_>,
    mask: &GroupMask,
    decoder: &Decoder,
    message: &Message,
    cfg: &TrainConfig,
    state: &mut OptimizerState,
) -> Result<StepMetrics> {
    train_step_with(model, data, mask, decoder, message, cfg, state, Sides::BOTH)
}

pub fn total_steps(cfg: &TrainConfig, n_views: usize) -> usize {
    cfg.epochs * cfg.steps_per_epoch.unwrap_or(n_views)
}

/// Run the full schedule. Divergence stops early and is recorded in the
/// manifest; routing and data errors propagate.
pub fn train(
    model: &GaussianModel,
    data: TrainData<'_>,
    plan_digest: &str,
    mask: &GroupMask,
    decoder: &Decoder,
    message: &Message,
    cfg: &TrainConfig,
) -> Result<(GaussianModel, RunManifest)> {
    cfg.validate()?;
    data.check()?;
    let mut manifest = RunManifest::new(cfg, plan_digest, mask, decoder, message);
    let mut current = model.clone();
    let mut state = OptimizerState::new(model.len());
    let steps = total_steps(cfg, data.cameras.len());
    for s in 0..steps {
        let mut trial = current.clone();
        let metrics = match train_step(&mut trial, data, mask, decoder, message, cfg, &mut state) {
            Ok(m) => m,
            Err(Error::NonFinite(msg)) => {
                log::error!("aborting: {msg}");
                manifest.aborted = Some(msg);
                break;
            }
            Err(e) => return Err(e),
        };
        let diverged = metrics.l_vis > cfg.divergence_threshold || metrics.l_wm > cfg.divergence_threshold;
        if s % cfg.log_every == 0 || s + 1 == steps || diverged {
            log::info!(
                "step {:>5}  L_vis {:.5}  L_wm {:.5}  psnr {:.2}  bit_acc {:.3}",
                metrics.step,
                metrics.l_vis,
                metrics.l_wm,
                metrics.psnr,
                metrics.bit_acc
            );
            manifest.push(metrics.clone());
        }
        if diverged {
            manifest.aborted = Some(format!("loss diverged at step {}", metrics.step));
            break;
        }
        current = trial;
    }
    Ok((current, manifest))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vis_loss_closed_forms() {
        let r = Image::from_fn(16, 16, |x, y, c| ((x * 3 + y * 5 + c) % 11) as f64 / 11.0);
        let (l, g) = vis_loss(&r, &r, &TrainConfig::default()).unwrap();
        assert_eq!(l, 0.0);
        assert!(g.data.iter().all(|v| v.abs() < 1e-12));
        let cfg = TrainConfig {
            lambda_msssim: 0.0,
            lambda_wav_high: 0.0,
            ..TrainConfig::default()
        };
        let shifted = r.map(|v| v + 0.05);
        assert!((vis_loss(&shifted, &r, &cfg).unwrap().0 - 0.05).abs() < 1e-12);
    }

    #[test]
    fn config_validation() {
        let mut c = TrainConfig::default();
        c.validate().unwrap();
        c.lr[2] = 0.0;
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        let c = TrainConfig {
            lambda_eot: -1.0,
            ..TrainConfig::default()
        };
        assert!(c.validate().is_err());
    }
}
