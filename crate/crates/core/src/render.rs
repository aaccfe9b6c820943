//! Tile-based CPU rasterizer with an analytic backward pass.
//!
//! Pixel `(x, y)` is sampled at image coordinate `(x, y)`. Splats are sorted
//! globally by `(depth, index)` and composited front to back; each 16×16 tile
//! is processed sequentially and tile results are merged in tile order, so the
//! output is bitwise identical for any thread count.
//!
//! The per-pixel footprint is the Gaussian minus its tangent line at the 3σ
//! ellipse, `f(p) = eᵖ − G₃(1 + p + 4.5)` for power `p ≥ −4.5` with
//! `G₃ = exp(−4.5)`, normalized so the peak is 1. Value and slope both vanish
//! at the cutoff, so the image is a C¹ function of every parameter.

use std::fmt;
use std::str::FromStr;

use nalgebra::{Matrix2, Matrix2x3, Matrix3, Vector2, Vector4};
use rayon::prelude::*;

use crate::camera::Camera;
use crate::error::{Error, Result};
use crate::gaussian::{rotation_matrix, rotation_matrix_jacobian, Gaussian, GaussianModel, Role, SH_REST_LEN, SH_REST_PER_CHANNEL};
use crate::image::{Image, CHANNELS};
use crate::sh;

pub const TILE: usize = 16;
const CUTOFF_POWER: f64 = -4.5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RenderSettings {
    pub near: f64,
    /// Compositing stops before the transmittance would fall below this.
    pub t_min: f64,
    pub dilation: f64,
    pub alpha_max: f64,
    /// Evaluate the view-dependent SH terms; false renders DC color only.
    pub use_sh_rest: bool,
}

impl Default for RenderSettings {
    fn default() -> Self {
        Self {
            near: 0.01,
            t_min: 1e-4,
            dilation: 0.3,
            alpha_max: 0.99,
            use_sh_rest: true,
        }
    }
}

impl RenderSettings {
    pub fn dc_only() -> Self {
        Self {
            use_sh_rest: false,
            ..Self::default()
        }
    }
}

/// The five optimizable parameter groups. Position has no gradient.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Channel {
    Dc,
    Rest,
    Opacity,
    Rotation,
    Scale,
}

impl Channel {
    pub const ALL: [Channel; 5] = [Channel::Dc, Channel::Rest, Channel::Opacity, Channel::Rotation, Channel::Scale];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Channel::Dc => "dc",
            Channel::Rest => "rest",
            Channel::Opacity => "opacity",
            Channel::Rotation => "rotation",
            Channel::Scale => "scale",
        }
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Channel {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Channel::ALL
            .into_iter()
            .find(|c| c.name() == s.trim())
            .ok_or_else(|| Error::Parse(format!("unknown channel `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChannelSet(pub [bool; 5]);

impl ChannelSet {
    pub fn all() -> Self {
        Self([true; 5])
    }

    pub fn none() -> Self {
        Self([false; 5])
    }

    pub fn only(ch: Channel) -> Self {
        let mut s = Self::none();
        s.0[ch.index()] = true;
        s
    }

    pub fn contains(&self, ch: Channel) -> bool {
        self.0[ch.index()]
    }
}

/// Gradient of one Gaussian with respect to its raw parameters: SH
/// coefficients, opacity logit, unnormalized quaternion and log-scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianGrad {
    pub dc: [f64; 3],
    pub rest: [f64; SH_REST_LEN],
    pub opacity: f64,
    pub rotation: [f64; 4],
    pub scale: [f64; 3],
}

impl Default for GaussianGrad {
    fn default() -> Self {
        Self {
            dc: [0.0; 3],
            rest: [0.0; SH_REST_LEN],
            opacity: 0.0,
            rotation: [0.0; 4],
            scale: [0.0; 3],
        }
    }
}

impl GaussianGrad {
    pub fn channel(&self, ch: Channel) -> &[f64] {
        match ch {
            Channel::Dc => &self.dc,
            Channel::Rest => &self.rest,
            Channel::Opacity => std::slice::from_ref(&self.opacity),
            Channel::Rotation => &self.rotation,
            Channel::Scale => &self.scale,
        }
    }

    pub fn channel_mut(&mut self, ch: Channel) -> &mut [f64] {
        match ch {
            Channel::Dc => &mut self.dc,
            Channel::Rest => &mut self.rest,
            Channel::Opacity => std::slice::from_mut(&mut self.opacity),
            Channel::Rotation => &mut self.rotation,
            Channel::Scale => &mut self.scale,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct GradientSet {
    pub grads: Vec<GaussianGrad>,
}

impl GradientSet {
    pub fn zeros(n: usize) -> Self {
        Self {
            grads: vec![GaussianGrad::default(); n],
        }
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }

    pub fn add_assign(&mut self, other: &GradientSet) {
        assert_eq!(self.len(), other.len());
        for (a, b) in self.grads.iter_mut().zip(&other.grads) {
            for ch in Channel::ALL {
                for (x, y) in a.channel_mut(ch).iter_mut().zip(b.channel(ch)) {
                    *x += y;
                }
            }
        }
    }

    pub fn scale(&mut self, s: f64) {
        for g in &mut self.grads {
            for ch in Channel::ALL {
                g.channel_mut(ch).iter_mut().for_each(|x| *x *= s);
            }
        }
    }

    pub fn norm_sq(&self) -> f64 {
        self.grads
            .iter()
            .flat_map(|g| Channel::ALL.into_iter().flat_map(move |ch| g.channel(ch).iter()))
            .map(|x| x * x)
            .sum()
    }

    pub fn is_finite(&self) -> bool {
        self.grads
            .iter()
            .all(|g| Channel::ALL.iter().all(|&ch| g.channel(ch).iter().all(|x| x.is_finite())))
    }

    pub fn is_zero(&self) -> bool {
        self.grads
            .iter()
            .all(|g| Channel::ALL.iter().all(|&ch| g.channel(ch).iter().all(|x| *x == 0.0)))
    }
}

/// A Gaussian projected into one view.
#[derive(Debug, Clone, PartialEq)]
pub struct Splat2D {
    pub index: usize,
    pub mean2d: Vector2<f64>,
    pub cov2d: Matrix2<f64>,
    pub conic: Matrix2<f64>,
    pub depth: f64,
    pub color: [f64; 3],
    /// False where the color was clamped at zero.
    pub color_live: [bool; 3],
    pub alpha_base: f64,
    pub radius: f64,
    /// `T = J·W`: maps camera-frame covariance rows to pixel space.
    pub t_mat: Matrix2x3<f64>,
    pub sh_basis: [f64; 16],
}

fn footprint_floor() -> f64 {
    CUTOFF_POWER.exp()
}

fn footprint_peak() -> f64 {
    1.0 - footprint_floor() * (1.0 - CUTOFF_POWER)
}

/// Project one Gaussian; `None` when culled.
pub fn project(g: &Gaussian, index: usize, camera: &Camera, sh_degree: usize, settings: &RenderSettings) -> Option<Splat2D> {
    let pc = camera.to_camera(&g.position);
    if !(pc.z > settings.near) {
        return None;
    }
    let (w, h) = (camera.width as f64, camera.height as f64);
    let lim_x = 1.3 * 0.5 * w / camera.fx;
    let lim_y = 1.3 * 0.5 * h / camera.fy;
    let z = pc.z;
    let tx = (pc.x / z).clamp(-lim_x, lim_x) * z;
    let ty = (pc.y / z).clamp(-lim_y, lim_y) * z;
    let j = Matrix2x3::new(camera.fx / z, 0.0, -camera.fx * tx / (z * z), 0.0, camera.fy / z, -camera.fy * ty / (z * z));
    let t_mat = j * camera.rotation();

    let q = g.rotation / g.rotation.norm();
    let m = rotation_matrix(&q) * Matrix3::from_diagonal(&g.scale);
    let cov3 = m * m.transpose();
    let cov2d = t_mat * cov3 * t_mat.transpose() + Matrix2::identity() * settings.dilation;
    let det = cov2d.determinant();
    if !(det > 0.0) || !det.is_finite() {
        return None;
    }
    let conic = Matrix2::new(cov2d[(1, 1)], -cov2d[(0, 1)], -cov2d[(1, 0)], cov2d[(0, 0)]) / det;
    let mid = 0.5 * (cov2d[(0, 0)] + cov2d[(1, 1)]);
    let lambda_max = mid + (mid * mid - det).max(0.0).sqrt();
    let radius = (3.0 * lambda_max.sqrt()).ceil();
    let mean2d = Vector2::new(camera.fx * pc.x / z + camera.cx, camera.fy * pc.y / z + camera.cy);
    if mean2d.x + radius < 0.0 || mean2d.x - radius > w - 1.0 || mean2d.y + radius < 0.0 || mean2d.y - radius > h - 1.0 {
        return None;
    }

    let dir = (g.position - camera.center()).normalize();
    let degree = if settings.use_sh_rest { sh_degree } else { 0 };
    let sh_basis = sh::basis(&dir, degree);
    let mut color = [0.0; 3];
    let mut color_live = [false; 3];
    for ch in 0..3 {
        let v = sh::raw_channel(g, ch, &sh_basis, degree > 0) + 0.5;
        color_live[ch] = v > 0.0;
        color[ch] = v.max(0.0);
    }
    Some(Splat2D {
        index,
        mean2d,
        cov2d,
        conic,
        depth: z,
        color,
        color_live,
        alpha_base: g.opacity,
        radius,
        t_mat,
        sh_basis,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenderOutput {
    pub image: Image,
    /// Per Gaussian (model order): Σ_p α·T over the view.
    pub weight_sum: Vec<f64>,
    /// Per pixel: Σ_i α·T.
    pub pixel_weight_sum: Vec<f64>,
    /// Per pixel: min(1, Σ_i α·T).
    pub pixel_weight_sat: Vec<f64>,
}

/// Projected, sorted and binned splats for one view.
#[derive(Debug, Clone)]
pub struct Raster {
    pub splats: Vec<Splat2D>,
    tiles: Vec<Vec<u32>>,
    tiles_x: usize,
    width: usize,
    height: usize,
    settings: RenderSettings,
}

impl Raster {
    pub fn build(model: &GaussianModel, camera: &Camera, settings: &RenderSettings) -> Self {
        let mut splats: Vec<Splat2D> = model
            .gaussians
            .par_iter()
            .enumerate()
            .filter_map(|(i, g)| project(g, i, camera, model.sh_degree, settings))
            .collect();
        splats.sort_by(|a, b| a.depth.total_cmp(&b.depth).then(a.index.cmp(&b.index)));

        let tiles_x = camera.width.div_ceil(TILE);
        let tiles_y = camera.height.div_ceil(TILE);
        let mut tiles = vec![Vec::new(); tiles_x * tiles_y];
        for (k, s) in splats.iter().enumerate() {
            let x0 = (s.mean2d.x - s.radius).max(0.0).floor() as usize;
            let y0 = (s.mean2d.y - s.radius).max(0.0).floor() as usize;
            let x1 = ((s.mean2d.x + s.radius).min((camera.width - 1) as f64)).ceil() as usize;
            let y1 = ((s.mean2d.y + s.radius).min((camera.height - 1) as f64)).ceil() as usize;
            for ty in y0 / TILE..=y1 / TILE {
                for tx in x0 / TILE..=x1 / TILE {
                    tiles[ty * tiles_x + tx].push(k as u32);
                }
            }
        }
        Self {
            splats,
            tiles,
            tiles_x,
            width: camera.width,
            height: camera.height,
            settings: *settings,
        }
    }

    fn tile_pixels(&self, t: usize) -> impl Iterator<Item = (usize, usize)> + '_ {
        let (tx, ty) = (t % self.tiles_x, t / self.tiles_x);
        let xs = tx * TILE..((tx + 1) * TILE).min(self.width);
        let ys = ty * TILE..((ty + 1) * TILE).min(self.height);
        ys.flat_map(move |y| xs.clone().map(move |x| (x, y)))
    }

    /// Compositing trace of pixel `(x, y)`: `(alpha, T before it)` for each
    /// contributing splat in order, then the transmittance left after the
    /// last one.
    pub fn pixel_trace(&self, x: usize, y: usize) -> (Vec<(f64, f64)>, f64) {
        assert!(x < self.width && y < self.height, "pixel outside the raster");
        let list = &self.tiles[(y / TILE) * self.tiles_x + x / TILE];
        let mut tr = 1.0;
        let mut steps = Vec::new();
        for &k in list {
            let Some(h) = hit(&self.splats[k as usize], x, y, self.settings.alpha_max) else { continue };
            let next_t = tr * (1.0 - h.alpha);
            if next_t < self.settings.t_min {
                break;
            }
            steps.push((h.alpha, tr));
            tr = next_t;
        }
        (steps, tr)
    }
}

/// Per-pixel footprint evaluation shared by forward and backward.
struct Hit {
    alpha: f64,
    g: f64,
    /// dg/dpower
    dg: f64,
    d: Vector2<f64>,
    clamped: bool,
}

#[inline]
fn hit(s: &Splat2D, x: usize, y: usize, alpha_max: f64) -> Option<Hit> {
    let d = Vector2::new(x as f64 - s.mean2d.x, y as f64 - s.mean2d.y);
    let power = -0.5 * (s.conic[(0, 0)] * d.x * d.x + 2.0 * s.conic[(0, 1)] * d.x * d.y + s.conic[(1, 1)] * d.y * d.y);
    if power < CUTOFF_POWER {
        return None;
    }
    let gc = footprint_floor();
    let big_g = power.exp();
    let peak = footprint_peak();
    let g = (big_g - gc * (1.0 + power - CUTOFF_POWER)) / peak;
    let raw = s.alpha_base * g;
    if raw <= 0.0 {
        return None;
    }
    let clamped = raw > alpha_max;
    Some(Hit {
        alpha: if clamped { alpha_max } else { raw },
        g,
        dg: (big_g - gc) / peak,
        d,
        clamped,
    })
}

struct TileForward {
    color: Vec<[f64; 3]>,
    pixel_w: Vec<f64>,
    local_w: Vec<f64>,
}

fn forward_tile(r: &Raster, t: usize) -> TileForward {
    let list = &r.tiles[t];
    let mut out = TileForward {
        color: Vec::with_capacity(TILE * TILE),
        pixel_w: Vec::with_capacity(TILE * TILE),
        local_w: vec![0.0; list.len()],
    };
    for (x, y) in r.tile_pixels(t) {
        let mut tr = 1.0;
        let mut c = [0.0; 3];
        let mut wsum = 0.0;
        for (li, &k) in list.iter().enumerate() {
            let s = &r.splats[k as usize];
            let Some(h) = hit(s, x, y, r.settings.alpha_max) else { continue };
            let next_t = tr * (1.0 - h.alpha);
            if next_t < r.settings.t_min {
                break;
            }
            let w = h.alpha * tr;
            for ch in 0..3 {
                c[ch] += s.color[ch] * w;
            }
            wsum += w;
            out.local_w[li] += w;
            tr = next_t;
        }
        out.color.push(c);
        out.pixel_w.push(wsum);
    }
    out
}

pub fn render_raster(raster: &Raster, n_gaussians: usize) -> RenderOutput {
    let (w, h) = (raster.width, raster.height);
    let tiles: Vec<TileForward> = (0..raster.tiles.len()).into_par_iter().map(|t| forward_tile(raster, t)).collect();
    let mut image = Image::zeros(w, h);
    let mut pixel_weight_sum = vec![0.0; w * h];
    let mut weight_sum = vec![0.0; n_gaussians];
    for (t, tf) in tiles.iter().enumerate() {
        for (p, (x, y)) in raster.tile_pixels(t).enumerate() {
            let base = (y * w + x) * CHANNELS;
            image.data[base..base + 3].copy_from_slice(&tf.color[p]);
            pixel_weight_sum[y * w + x] = tf.pixel_w[p];
        }
        for (li, &k) in raster.tiles[t].iter().enumerate() {
            weight_sum[raster.splats[k as usize].index] += tf.local_w[li];
        }
    }
    let pixel_weight_sat = pixel_weight_sum.iter().map(|v| v.min(1.0)).collect();
    RenderOutput {
        image,
        weight_sum,
        pixel_weight_sum,
        pixel_weight_sat,
    }
}

pub fn render_with(model: &GaussianModel, camera: &Camera, settings: &RenderSettings) -> RenderOutput {
    render_raster(&Raster::build(model, camera, settings), model.len())
}

pub fn render(model: &GaussianModel, camera: &Camera) -> RenderOutput {
    render_with(model, camera, &RenderSettings::default())
}

/// Image-space gradients accumulated per splat before the parameter chain.
#[derive(Debug, Clone, Copy, Default)]
struct SplatAcc {
    color: [f64; 3],
    opacity: f64,
    conic: [f64; 3],
}

impl SplatAcc {
    fn add(&mut self, o: &SplatAcc) {
        for i in 0..3 {
            self.color[i] += o.color[i];
            self.conic[i] += o.conic[i];
        }
        self.opacity += o.opacity;
    }
}

struct Contribution {
    local: usize,
    alpha: f64,
    t: f64,
    hit: Hit,
}

fn backward_tile(r: &Raster, t: usize, grad: &Image) -> Vec<SplatAcc> {
    let list = &r.tiles[t];
    let mut acc = vec![SplatAcc::default(); list.len()];
    let mut contribs: Vec<Contribution> = Vec::new();
    for (x, y) in r.tile_pixels(t) {
        let base = (y * r.width + x) * CHANNELS;
        let dl = [grad.data[base], grad.data[base + 1], grad.data[base + 2]];
        if dl == [0.0; 3] {
            continue;
        }
        contribs.clear();
        let mut tr = 1.0;
        for (li, &k) in list.iter().enumerate() {
            let s = &r.splats[k as usize];
            let Some(h) = hit(s, x, y, r.settings.alpha_max) else { continue };
            let next_t = tr * (1.0 - h.alpha);
            if next_t < r.settings.t_min {
                break;
            }
            contribs.push(Contribution {
                local: li,
                alpha: h.alpha,
                t: tr,
                hit: h,
            });
            tr = next_t;
        }
        // dL/dT of the transmittance after the last contributor (black background)
        let mut g_t_next = 0.0;
        for c in contribs.iter().rev() {
            let s = &r.splats[list[c.local] as usize];
            let dot = dl[0] * s.color[0] + dl[1] * s.color[1] + dl[2] * s.color[2];
            let d_alpha = dot * c.t - g_t_next * c.t;
            g_t_next = dot * c.alpha + g_t_next * (1.0 - c.alpha);
            let a = &mut acc[c.local];
            let w = c.alpha * c.t;
            for ch in 0..3 {
                a.color[ch] += dl[ch] * w;
            }
            if !c.hit.clamped {
                a.opacity += d_alpha * c.hit.g;
                let d_power = d_alpha * s.alpha_base * c.hit.dg;
                let d = c.hit.d;
                a.conic[0] += -0.5 * d_power * d.x * d.x;
                a.conic[1] += -0.5 * d_power * d.x * d.y;
                a.conic[2] += -0.5 * d_power * d.y * d.y;
            }
        }
    }
    acc
}

/// Chain image-space splat gradients to the raw parameters of one Gaussian.
fn chain_to_params(g: &Gaussian, s: &Splat2D, a: &SplatAcc, sh_degree: usize, use_rest: bool, channels: &ChannelSet) -> GaussianGrad {
    let mut out = GaussianGrad::default();
    let gcol: [f64; 3] = std::array::from_fn(|ch| if s.color_live[ch] { a.color[ch] } else { 0.0 });
    if channels.contains(Channel::Dc) {
        for ch in 0..3 {
            out.dc[ch] = gcol[ch] * s.sh_basis[0];
        }
    }
    if channels.contains(Channel::Rest) && use_rest && sh_degree > 0 {
        let n = (sh_degree + 1) * (sh_degree + 1) - 1;
        for ch in 0..3 {
            for k in 0..n {
                out.rest[ch * SH_REST_PER_CHANNEL + k] = gcol[ch] * s.sh_basis[k + 1];
            }
        }
    }
    if channels.contains(Channel::Opacity) {
        out.opacity = a.opacity * g.opacity * (1.0 - g.opacity);
    }
    if channels.contains(Channel::Rotation) || channels.contains(Channel::Scale) {
        let g_q = Matrix2::new(a.conic[0], a.conic[1], a.conic[1], a.conic[2]);
        let g_cov2 = -(s.conic * g_q * s.conic);
        let g_cov3 = s.t_mat.transpose() * g_cov2 * s.t_mat;
        let qn_norm = g.rotation.norm();
        let qn = g.rotation / qn_norm;
        let rot = rotation_matrix(&qn);
        let m = rot * Matrix3::from_diagonal(&g.scale);
        let g_m = 2.0 * g_cov3 * m;
        if channels.contains(Channel::Scale) {
            for k in 0..3 {
                let ds: f64 = (0..3).map(|i| g_m[(i, k)] * rot[(i, k)]).sum();
                out.scale[k] = ds * g.scale[k];
            }
        }
        if channels.contains(Channel::Rotation) {
            let g_r = g_m * Matrix3::from_diagonal(&g.scale);
            let jac = rotation_matrix_jacobian(&qn);
            let dqn = Vector4::from_fn(|j, _| g_r.component_mul(&jac[j]).sum());
            let dq = (dqn - qn * qn.dot(&dqn)) / qn_norm;
            out.rotation = dq.into();
        }
    }
    out
}

/// Backward pass over a prepared raster. Gradients are produced only for
/// Gaussians whose role is in `role_filter` and only for `channels`.
pub fn backward_raster(
    raster: &Raster,
    model: &GaussianModel,
    dl_dimage: &Image,
    channels: &ChannelSet,
    role_filter: &[Role],
) -> Result<GradientSet> {
    if dl_dimage.width != raster.width || dl_dimage.height != raster.height {
        return Err(Error::Contract(format!(
            "gradient image {}x{} does not match render {}x{}",
            dl_dimage.width, dl_dimage.height, raster.width, raster.height
        )));
    }
    let tiles: Vec<Vec<SplatAcc>> = (0..raster.tiles.len()).into_par_iter().map(|t| backward_tile(raster, t, dl_dimage)).collect();
    let mut per_splat = vec![SplatAcc::default(); raster.splats.len()];
    for (t, accs) in tiles.iter().enumerate() {
        for (li, &k) in raster.tiles[t].iter().enumerate() {
            per_splat[k as usize].add(&accs[li]);
        }
    }
    let mut out = GradientSet::zeros(model.len());
    for (s, a) in raster.splats.iter().zip(&per_splat) {
        if !role_filter.contains(&model.roles[s.index]) {
            continue;
        }
        out.grads[s.index] = chain_to_params(&model.gaussians[s.index], s, a, model.sh_degree, raster.settings.use_sh_rest, channels);
    }
    Ok(out)
}

pub fn render_backward_with(
    model: &GaussianModel,
    camera: &Camera,
    settings: &RenderSettings,
    dl_dimage: &Image,
    channels: &ChannelSet,
    role_filter: &[Role],
) -> Result<GradientSet> {
    backward_raster(&Raster::build(model, camera, settings), model, dl_dimage, channels, role_filter)
}

pub fn render_backward(model: &GaussianModel, camera: &Camera, dl_dimage: &Image, channels: &ChannelSet, role_filter: &[Role]) -> Result<GradientSet> {
    render_backward_with(model, camera, &RenderSettings::default(), dl_dimage, channels, role_filter)
}

/// Crowding factor from per-view, per-pixel weight sums.
pub fn crowding_factor(pixel_weight_sums: &[Vec<f64>]) -> f64 {
    const EPS: f64 = 1e-8;
    if pixel_weight_sums.is_empty() {
        return 1.0;
    }
    let total: f64 = pixel_weight_sums
        .iter()
        .map(|view| {
            let sat: f64 = view.iter().map(|w| w.min(1.0)).sum();
            let raw: f64 = view.iter().sum();
            sat / (raw + EPS)
        })
        .sum();
    total / pixel_weight_sums.len() as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct VisibilityStats {
    pub v: Vec<f64>,
    pub eta: f64,
    pub v_bar: f64,
    /// Per view, per Gaussian accumulated weight.
    pub per_view_weight: Vec<Vec<f64>>,
}

/// Visibility, crowding and mean visibility from DC+opacity renders.
pub fn visibility_stats(model: &GaussianModel, cameras: &[Camera]) -> Result<VisibilityStats> {
    if cameras.is_empty() {
        return Err(Error::Contract("visibility_stats needs at least one camera".into()));
    }
    let settings = RenderSettings::dc_only();
    let mut acc = vec![0.0; model.len()];
    let mut pixel_sums = Vec::with_capacity(cameras.len());
    let mut per_view_weight = Vec::with_capacity(cameras.len());
    for cam in cameras {
        let out = render_with(model, cam, &settings);
        for (a, w) in acc.iter_mut().zip(&out.weight_sum) {
            *a += w;
        }
        pixel_sums.push(out.pixel_weight_sum);
        per_view_weight.push(out.weight_sum);
    }
    let max = acc.iter().cloned().fold(0.0, f64::max);
    if max <= 0.0 {
        log::warn!("visibility_stats: no Gaussian contributes to any view");
        return Ok(VisibilityStats {
            v: vec![0.0; model.len()],
            eta: 1.0,
            v_bar: 0.0,
            per_view_weight,
        });
    }
    let v: Vec<f64> = acc.iter().map(|a| a / max).collect();
    let v_bar = v.iter().sum::<f64>() / v.len() as f64;
    Ok(VisibilityStats {
        eta: crowding_factor(&pixel_sums),
        v,
        v_bar,
        per_view_weight,
    })
}
