#![allow(dead_code)]

use nalgebra::{Vector3, Vector4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use splatmark::camera::Camera;
use splatmark::gaussian::{logit, sigmoid, Gaussian, GaussianModel, Role};
use splatmark::image::Image;
use splatmark::render::{render, render_backward, Channel, ChannelSet};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_unit_quat(r: &mut impl Rng) -> Vector4<f64> {
    loop {
        let q = Vector4::new(r.random_range(-1.0..1.0), r.random_range(-1.0..1.0), r.random_range(-1.0..1.0), r.random_range(-1.0..1.0));
        let n = q.norm();
        if n > 0.2 && n <= 1.0 {
            return q / n;
        }
    }
}

/// Small scene in front of an axis-aligned camera at the origin.
pub fn small_scene(seed: u64, n: usize, size: usize, sh_degree: usize) -> (GaussianModel, Camera) {
    let mut r = rng(seed);
    let cam = Camera::look_at(Vector3::new(0.0, 0.0, -4.0), Vector3::zeros(), Vector3::new(0.0, -1.0, 0.0), size as f64 * 1.2, size as f64 * 1.2, size, size).unwrap();
    let mut gs = Vec::new();
    for _ in 0..n {
        let pos = Vector3::new(r.random_range(-0.8..0.8), r.random_range(-0.8..0.8), r.random_range(-0.8..0.8));
        let scale = Vector3::new(r.random_range(0.12..0.4), r.random_range(0.12..0.4), r.random_range(0.12..0.4));
        let mut g = Gaussian::new(pos, scale, random_unit_quat(&mut r), r.random_range(0.05..0.55), Vector3::zeros());
        for c in 0..3 {
            g.sh_dc[c] = r.random_range(-1.2..1.2);
        }
        let n_rest = (sh_degree + 1) * (sh_degree + 1) - 1;
        for c in 0..3 {
            for k in 0..n_rest {
                g.sh_rest[c * 15 + k] = r.random_range(-0.1..0.1);
            }
        }
        gs.push(g);
    }
    (GaussianModel::new(gs, sh_degree), cam)
}

pub fn random_image(seed: u64, w: usize, h: usize) -> Image {
    let mut r = rng(seed);
    Image::from_fn(w, h, |_, _, _| r.random_range(-1.0..1.0))
}

pub fn assign_random_roles(model: &mut GaussianModel, seed: u64) {
    let mut r = rng(seed);
    for role in model.roles.iter_mut() {
        *role = match r.random_range(0..3) {
            0 => Role::Wm,
            1 => Role::Vis,
            _ => Role::Neutral,
        };
    }
}

pub fn param_count(ch: Channel) -> usize {
    match ch {
        Channel::Dc => 3,
        Channel::Rest => 45,
        Channel::Opacity => 1,
        Channel::Rotation => 4,
        Channel::Scale => 3,
    }
}

/// Shift one raw parameter of Gaussian `g` by `h`.
pub fn perturb(g: &mut Gaussian, ch: Channel, k: usize, h: f64) {
    match ch {
        Channel::Dc => g.sh_dc[k] += h,
        Channel::Rest => g.sh_rest[k] += h,
        Channel::Opacity => g.opacity = sigmoid(logit(g.opacity) + h),
        Channel::Rotation => g.rotation[k] += h,
        Channel::Scale => g.scale[k] = (g.scale[k].ln() + h).exp(),
    }
}

pub fn dot(a: &Image, b: &Image) -> f64 {
    a.data.iter().zip(&b.data).map(|(x, y)| x * y).sum()
}

/// Relative L2 error per channel group between the analytic backward and
/// central differences with step `h`, for the loss `<render, U>` with a
/// random upstream image `U`.
pub fn fd_relative_errors(seed: u64, size: usize, h: f64) -> [f64; 5] {
    let (model, cam) = small_scene(seed, 2 + (seed % 9) as usize, size, 3);
    let up = random_image(seed ^ 0xabc, size, size);
    let grads = render_backward(&model, &cam, &up, &ChannelSet::all(), &[Role::Neutral]).unwrap();
    let mut out = [0.0; 5];
    for ch in Channel::ALL {
        let (mut num, mut den) = (0.0, 0.0);
        for i in 0..model.len() {
            for k in 0..param_count(ch) {
                let mut p = model.clone();
                perturb(&mut p.gaussians[i], ch, k, h);
                let lp = dot(&render(&p, &cam).image, &up);
                let mut m = model.clone();
                perturb(&mut m.gaussians[i], ch, k, -h);
                let lm = dot(&render(&m, &cam).image, &up);
                let fd = (lp - lm) / (2.0 * h);
                let a = grads.grads[i].channel(ch)[k];
                num += (a - fd) * (a - fd);
                den += fd * fd;
            }
        }
        out[ch.index()] = if den > 1e-20 { (num / den).sqrt() } else { num.sqrt() };
    }
    out
}
