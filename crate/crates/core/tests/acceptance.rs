//! Acceptance criteria 1 to 10, one PASS/FAIL line each.
//!
//! `cargo test --release -p splatmark --test acceptance` runs all of them;
//! append criterion numbers after `--` to run a subset. The process exits
//! nonzero when any selected criterion fails.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::OnceLock;
use std::time::Instant;

use rand::Rng;
use splatmark::attacks::{run_attack_matrix, Attack, ModelAttack};
use splatmark::camera::Camera;
use splatmark::codec::{build_decoder, Message};
use splatmark::config::Config;
use splatmark::distort::Distortion;
use splatmark::experts::EvidencePackage;
use splatmark::finetune::{train, train_step_with, OptimizerState, Sides, TrainConfig, TrainData};
use splatmark::gaussian::{GaussianModel, Role};
use splatmark::image::Image;
use splatmark::mask::GroupMask;
use splatmark::metrics::psnr;
use splatmark::pipeline::{embed, evaluate, message_for, render_views, select, Embedding};
use splatmark::prune::prune_by_contribution;
use splatmark::render::{render, render_backward, Channel, ChannelSet, Raster, RenderSettings};
use splatmark::sbag::{adaptive_budget, feasible_set, proxy_scores, select_seeds, BudgetMode, VisScope};
use splatmark::stats::quantile;
use splatmark::synth::{make_synthetic_scene, SynthConfig};
use splatmark::wavelet::{dwt2_plane, idwt2_plane, max_levels, Plane, SubbandPyramid};

use common::*;

type Outcome = splatmark::Result<(bool, String)>;

fn c1_gradients() -> Outcome {
    let t = Instant::now();
    let mut worst = [0.0f64; 5];
    for seed in 0..20 {
        let e = fd_relative_errors(seed, 16, 1e-4);
        for k in 0..5 {
            worst[k] = worst[k].max(e[k]);
        }
    }
    let secs = t.elapsed().as_secs_f64();
    let max = worst.iter().cloned().fold(0.0, f64::max);
    let per: Vec<String> = Channel::ALL.iter().map(|c| format!("{c} {:.1e}", worst[c.index()])).collect();
    Ok((max < 1e-3 && secs < 60.0, format!("20 scenes at 16x16, max rel err {max:.2e} ({}), {secs:.1} s", per.join(", "))))
}

fn c2_render_invariants() -> Outcome {
    let settings = RenderSettings::default();
    let mut pixels = 0usize;
    let mut worst_sum = 0.0f64;
    let mut worst_identity = 0.0f64;
    for seed in 0..100 {
        let mut r = rng(seed);
        let n = r.random_range(1..=40);
        let (model, cam) = small_scene(seed, n, 32, 3);
        let raster = Raster::build(&model, &cam, &settings);
        let out = render(&model, &cam);
        for y in 0..32 {
            for x in 0..32 {
                let (steps, t_end) = raster.pixel_trace(x, y);
                let mut prev = 1.0;
                let mut sum = 0.0;
                for &(alpha, t) in &steps {
                    if !(t <= prev && t > 0.0 && alpha > 0.0 && alpha <= settings.alpha_max) {
                        return Ok((false, format!("scene {seed} pixel ({x},{y}): T {t} after {prev}, alpha {alpha}")));
                    }
                    prev = t;
                    sum += alpha * t;
                }
                if !(t_end <= prev && t_end >= settings.t_min) {
                    return Ok((false, format!("scene {seed} pixel ({x},{y}): final T {t_end}")));
                }
                let w = out.pixel_weight_sum[y * 32 + x];
                worst_sum = worst_sum.max(w);
                // sum of alpha*T telescopes to 1 - T_end
                worst_identity = worst_identity.max((w - (1.0 - t_end)).abs()).max((w - sum).abs());
                pixels += 1;
            }
        }
    }
    let bound_ok = worst_sum <= 1.0 && worst_identity < 1e-12;

    let scene = make_synthetic_scene(0, &SynthConfig::default())?;
    let cam = &scene.cameras[0];
    let up = random_image(5, cam.width, cam.height);
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().expect("thread pool");
        pool.install(|| {
            let img = render(&scene.model, cam).image;
            let g = render_backward(&scene.model, cam, &up, &ChannelSet::all(), &[Role::Neutral]).expect("backward");
            let bits: Vec<u64> = img.data.iter().chain(g.grads.iter().flat_map(|gg| Channel::ALL.into_iter().flat_map(move |c| gg.channel(c).iter()))).map(|v| v.to_bits()).collect();
            bits
        })
    };
    let one = run(1);
    let det = [4, 8].iter().all(|&t| run(t) == one);
    Ok((
        bound_ok && det,
        format!("{pixels} pixels over 100 scenes: T non-increasing, max weight sum {worst_sum:.6}, |sum - (1 - T_end)| <= {worst_identity:.1e}; renders and gradients bitwise equal at 1/4/8 threads: {det}"),
    ))
}

fn plane_from(img: &Image, c: usize) -> Plane {
    let mut p = Plane::zeros(img.width, img.height);
    for y in 0..img.height {
        for x in 0..img.width {
            p.data[y * img.width + x] = img.get(x, y, c);
        }
    }
    p
}

fn replicate_pad_energy(p: &Plane) -> f64 {
    let (w2, h2) = (p.width.div_ceil(2) * 2, p.height.div_ceil(2) * 2);
    let mut e = 0.0;
    for y in 0..h2 {
        for x in 0..w2 {
            let v = p.at(x.min(p.width - 1), y.min(p.height - 1));
            e += v * v;
        }
    }
    e
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn c3_wavelet() -> Outcome {
    let sizes = [(64, 64), (128, 96), (40, 24), (37, 23), (16, 9), (5, 7), (33, 64), (1, 1)];
    let mut pr = 0.0f64;
    let mut parseval = 0.0f64;
    let mut checked = 0;
    for (s, &(w, h)) in sizes.iter().enumerate() {
        let img = random_image(300 + s as u64, w, h);
        for c in 0..3 {
            let x = plane_from(&img, c);
            let ex = x.energy();
            for levels in 1..=max_levels(w, h) {
                let pyr = dwt2_plane(&x, levels)?;
                let back = idwt2_plane(&pyr)?;
                pr = pr.max(max_abs_diff(&back.data, &x.data));
                // one level at a time: coefficient energy equals the energy of
                // the replicate-padded level input, which is the input itself
                // on even sizes
                let mut cur = x.clone();
                for lev in &pyr.levels {
                    let one = dwt2_plane(&cur, 1)?;
                    let e_in = replicate_pad_energy(&cur);
                    parseval = parseval.max((one.energy() - e_in).abs() / e_in.max(1e-300));
                    if max_abs_diff(&one.levels[0].hh.data, &lev.hh.data) != 0.0 {
                        return Ok((false, format!("{w}x{h}: multi-level HH differs from chained single levels")));
                    }
                    cur = one.ll;
                }
                if w % (1 << levels) == 0 && h % (1 << levels) == 0 {
                    parseval = parseval.max((pyr.energy() - ex).abs() / ex);
                }
                checked += 1;
            }
        }
    }
    let mut consts_ok = true;
    for (i, &cval) in [0.3, -1.25, 0.1, 7.0, 1e-3, std::f64::consts::FRAC_1_SQRT_2].iter().enumerate() {
        let (w, h) = [(6, 4), (7, 5), (64, 64), (3, 9), (2, 2), (15, 16)][i];
        let mut x = Plane::zeros(w, h);
        x.data.iter_mut().for_each(|v| *v = cval);
        let p: SubbandPyramid = dwt2_plane(&x, 1)?;
        let l = &p.levels[0];
        consts_ok &= p.ll.data.iter().all(|v| *v == 2.0 * cval);
        consts_ok &= l.lh.data.iter().chain(&l.hl.data).chain(&l.hh.data).all(|v| *v == 0.0);
        let mut ll_only = p.clone();
        ll_only.levels[0].lh.data.iter_mut().for_each(|v| *v = 0.0);
        consts_ok &= idwt2_plane(&ll_only)?.data.iter().all(|v| *v == cval);
        consts_ok &= idwt2_plane(&p.scaled(0.0))?.data.iter().all(|v| *v == 0.0);
    }
    Ok((
        pr <= 1e-9 && parseval <= 1e-9 && consts_ok,
        format!("{checked} transforms (odd sizes included): reconstruction err {pr:.1e}, Parseval rel err {parseval:.1e}; constant closed forms exact: {consts_ok}"),
    ))
}

fn random_evidence(r: &mut impl Rng, n: usize) -> EvidencePackage {
    let col = |r: &mut dyn FnMut() -> f64| (0..n).map(|_| r()).collect::<Vec<f64>>();
    let mut draw = || r.random_range(0.0..1.0);
    EvidencePackage {
        u: [col(&mut draw), col(&mut draw), col(&mut draw)],
        s: [col(&mut draw), col(&mut draw), col(&mut draw)],
    }
}

fn plan_fingerprint(model: &GaussianModel, cameras: &[Camera], cfg: &Config) -> splatmark::Result<(String, Vec<u64>)> {
    let sel = select(model, cameras, cfg.decoder.bits, &cfg.experts, &cfg.sbag, &cfg.mask)?;
    let bits = sel.model.gaussians.iter().flat_map(|g| g.to_raw().sh_dc.into_iter().chain([g.to_raw().opacity_logit])).map(f64::to_bits).collect();
    Ok((sel.plan.to_json()?, bits))
}

fn c4_sbag() -> Outcome {
    let (_, b) = adaptive_budget(32, 2.0, 0.5, 0.8, 1_000_000)?;

    let cfg = Config::default();
    let scene = make_synthetic_scene(0, &cfg.synth)?;
    let model = prune_by_contribution(&scene.model, &scene.cameras, cfg.prune.tau)?;
    let train_cams = scene.train_cameras();
    let first = plan_fingerprint(&model, &train_cams, &cfg)?;
    let deterministic = (0..2).map(|_| plan_fingerprint(&model, &train_cams, &cfg)).collect::<splatmark::Result<Vec<_>>>()?.iter().all(|p| *p == first);

    let mut r = rng(44);
    let (mut vetoed, mut degenerate, mut argmax_ok) = (0usize, 0usize, true);
    let mut veto_ok = true;
    for _ in 0..1000 {
        let n = r.random_range(20..200);
        let e = random_evidence(&mut r, n);
        let beta = r.random_range(0.0..0.4);
        let p = proxy_scores(&e, beta);
        let v: Vec<f64> = (0..n).map(|_| r.random_range(0.0..1.0)).collect();
        let q = 0.3;
        let budget = r.random_range(1..=n);
        let f = feasible_set(&p.r, &v, q);
        let seeds = select_seeds(&f, &p.u, budget);
        if (0..3).all(|k| quantile(&p.r[k], q) > 0.0) {
            veto_ok &= seeds.iter().all(|&i| (0..3).all(|k| p.r[k][i] > 0.0));
            vetoed += (0..n).filter(|&i| (0..3).any(|k| p.r[k][i] == 0.0)).count();
        } else {
            degenerate += 1;
        }
        let c = r.random_range(-5.0f64..5.0).exp();
        let scaled: Vec<f64> = p.u.iter().map(|u| u * c).collect();
        argmax_ok &= select_seeds(&f, &scaled, budget) == seeds;
    }

    let split = select(&model, &train_cams, cfg.decoder.bits, &cfg.experts, &cfg.sbag, &cfg.mask)?;
    let before = render_views(&model, &scene.cameras);
    let after = render_views(&split.model, &scene.cameras);
    let ps: Vec<f64> = before.iter().zip(&after).map(|(a, b)| psnr(b, a)).collect::<splatmark::Result<_>>()?;
    let mean = ps.iter().sum::<f64>() / ps.len() as f64;
    let min = ps.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok((
        b == 40 && deterministic && veto_ok && argmax_ok && mean >= 45.0,
        format!(
            "B = {b}; plan bitwise equal over 3 runs: {deterministic}; veto over 1000 draws: {veto_ok} ({vetoed} vetoed candidates, {degenerate} degenerate draws skipped); argmax invariance: {argmax_ok}; split PSNR mean {mean:.2} dB (min {min:.2}) over {} views, {} parents",
            ps.len(),
            split.plan.parents.len()
        ),
    ))
}

fn wm_vis_bits(model: &GaussianModel, role: Role) -> Vec<u64> {
    model
        .gaussians
        .iter()
        .zip(&model.roles)
        .filter(|(_, r)| **r == role)
        .flat_map(|(g, _)| {
            let raw = g.to_raw();
            raw.sh_dc.into_iter().chain(raw.sh_rest).chain([raw.opacity_logit]).chain(raw.rotation).chain(raw.log_scale).chain(raw.position).collect::<Vec<_>>()
        })
        .map(f64::to_bits)
        .collect()
}

fn positions(model: &GaussianModel) -> Vec<u64> {
    model.gaussians.iter().flat_map(|g| g.position.iter().map(|v| v.to_bits()).collect::<Vec<_>>()).collect()
}

fn c5_decoupling() -> Outcome {
    let mut cfg = Config {
        synth: SynthConfig {
            n_gaussians: 400,
            n_views: 5,
            resolution: 32,
            ..SynthConfig::default()
        },
        ..Config::default()
    };
    cfg.sbag.vis_scope = VisScope::CompensatorsOnly;
    let scene = make_synthetic_scene(3, &cfg.synth)?;
    let cams = scene.cameras.clone();
    let sel = select(&scene.model, &cams, 32, &cfg.experts, &cfg.sbag, &cfg.mask)?;
    let decoder = build_decoder(1, 32, 32, 2)?;
    let message = Message::random(2, 32)?;
    let tcfg = TrainConfig {
        wm_views: 2,
        eot_per_step: 1,
        lr: [1e-2, 1e-3, 1e-2, 1e-2, 1e-2],
        log_every: 1000,
        ..TrainConfig::default()
    };
    let data = TrainData::new(&cams, &scene.references);
    let neutral = sel.model.count_role(Role::Neutral);
    let mut zero_wm = sel.mask.clone();
    zero_wm.m_wm = [0.0; 5];

    let mut model = sel.model.clone();
    let mut state = OptimizerState::new(model.len());
    let mut failures = Vec::new();
    for step in 0..6 {
        let run = |m: &GroupMask, sides: Sides| -> splatmark::Result<GaussianModel> {
            let mut mm = model.clone();
            let mut st = state.clone();
            train_step_with(&mut mm, data, m, &decoder, &message, &tcfg, &mut st, sides)?;
            Ok(mm)
        };
        let both = run(&sel.mask, Sides::BOTH)?;
        let no_wm = run(&sel.mask, Sides { wm: false, vis: true })?;
        let no_vis = run(&sel.mask, Sides { wm: true, vis: false })?;
        let masked = run(&zero_wm, Sides::BOTH)?;
        let (wm0, vis0) = (wm_vis_bits(&model, Role::Wm), wm_vis_bits(&model, Role::Vis));
        let checks = [
            ("zero L_wm leaves WM unchanged", wm_vis_bits(&no_wm, Role::Wm) == wm0),
            ("zero L_wm leaves VIS as in the full step", wm_vis_bits(&no_wm, Role::Vis) == wm_vis_bits(&both, Role::Vis)),
            ("zero L_vis leaves VIS unchanged", wm_vis_bits(&no_vis, Role::Vis) == vis0),
            ("zero L_vis leaves WM as in the full step", wm_vis_bits(&no_vis, Role::Wm) == wm_vis_bits(&both, Role::Wm)),
            ("zero WM mask freezes WM", wm_vis_bits(&masked, Role::Wm) == wm0),
            ("nonzero WM mask moves WM", wm_vis_bits(&both, Role::Wm) != wm0),
            ("full step moves VIS", wm_vis_bits(&both, Role::Vis) != vis0),
        ];
        for (name, ok) in checks {
            if !ok {
                failures.push(format!("step {step}: {name}"));
            }
        }
        train_step_with(&mut model, data, &sel.mask, &decoder, &message, &tcfg, &mut state, Sides::BOTH)?;
    }

    let long = TrainConfig {
        epochs: 40,
        steps_per_epoch: Some(5),
        ..tcfg.clone()
    };
    let (trained, manifest) = train(&sel.model, data, &sel.plan.digest(), &sel.mask, &decoder, &message, &long)?;
    let frozen_neutral = wm_vis_bits(&trained, Role::Neutral) == wm_vis_bits(&sel.model, Role::Neutral);
    let frozen_pos = positions(&trained) == positions(&sel.model);
    let steps = manifest.metrics().last().map_or(0, |m| m.step + 1);
    if manifest.aborted.is_some() || steps != 200 {
        failures.push(format!("200-step run stopped at step {steps}"));
    }
    if neutral == 0 {
        failures.push("no Neutral Gaussians to check".into());
    }
    Ok((
        failures.is_empty() && frozen_neutral && frozen_pos,
        format!(
            "7 bitwise cross-effect checks x 6 steps: {}; over {steps} steps {neutral} Neutral Gaussians frozen: {frozen_neutral}, positions frozen: {frozen_pos}",
            if failures.is_empty() { "all hold".to_string() } else { failures.join("; ") }
        ),
    ))
}

struct Run {
    embedding: Embedding,
    eval_cameras: Vec<Camera>,
    eval_refs: Vec<Image>,
    secs: f64,
}

impl Run {
    fn clean(&self) -> splatmark::Result<splatmark::pipeline::EvalSummary> {
        evaluate(&self.embedding.model, &self.eval_cameras, &self.eval_refs, &self.embedding.decoder, &self.embedding.message)
    }

    fn attacks(&self, attacks: &[Attack], seed: u64) -> splatmark::Result<splatmark::attacks::AttackReport> {
        let e = &self.embedding;
        run_attack_matrix(&e.model, &self.eval_cameras, &self.eval_refs, &e.decoder, &e.message, attacks, seed)
    }
}

/// Synthesize the scene for `cfg.train.seed`, embed on its training views and
/// keep pre-watermark renders of the held-out views.
fn embed_run(cfg: &Config) -> splatmark::Result<Run> {
    let t = Instant::now();
    let seed = cfg.train.seed;
    let scene = make_synthetic_scene(seed, &cfg.synth)?;
    let model = prune_by_contribution(&scene.model, &scene.cameras, cfg.prune.tau)?;
    let message = message_for(cfg, seed)?;
    let embedding = embed(&model, &scene.train_cameras(), cfg, &message, &cfg.train)?;
    let eval_cameras = scene.eval_cameras();
    let eval_refs = render_views(&model, &eval_cameras);
    Ok(Run {
        embedding,
        eval_cameras,
        eval_refs,
        secs: t.elapsed().as_secs_f64(),
    })
}

/// Reduced scene for the multi-run comparisons: 1500 Gaussians at 64x64,
/// a two-level decoder at 64 px and 20 epochs.
fn small_config(seed: u64) -> Config {
    let mut cfg = Config::default();
    cfg.synth.n_gaussians = 1500;
    cfg.synth.resolution = 64;
    cfg.decoder.resolution = 64;
    cfg.decoder.levels = 2;
    cfg.train.epochs = 20;
    cfg.train.seed = seed;
    cfg.train.log_every = 1000;
    cfg
}

fn default_run() -> &'static splatmark::Result<Run> {
    static RUN: OnceLock<splatmark::Result<Run>> = OnceLock::new();
    RUN.get_or_init(|| {
        let mut cfg = Config::default();
        cfg.train.log_every = 1000;
        embed_run(&cfg)
    })
}

fn shared_run() -> splatmark::Result<&'static Run> {
    default_run().as_ref().map_err(|e| splatmark::Error::Data(format!("default embed failed: {e}")))
}

fn c6_end_to_end() -> Outcome {
    let run = shared_run()?;
    let s = run.clean()?;
    let n = run.embedding.model.len();
    let ok = n <= 5000 + run.embedding.plan.parents.len() && s.bit_acc == 1.0 && s.psnr >= 35.0 && s.ssim >= 0.97 && run.secs <= 600.0;
    Ok((
        ok,
        format!(
            "held-out views: bit_acc {:.4} ({}/{} bits), PSNR {:.2} dB, SSIM {:.4}; {} carriers, embed {:.0} s",
            s.bit_acc,
            (s.bit_acc * run.embedding.message.len() as f64).round(),
            run.embedding.message.len(),
            s.psnr,
            s.ssim,
            run.embedding.plan.wm_children.len(),
            run.secs
        ),
    ))
}

fn c7_eot_ordering() -> Outcome {
    let attacks: Vec<Attack> = Distortion::standard_set().into_iter().map(Attack::Image).collect();
    let mut wins = vec![0usize; attacks.len()];
    let mut lines = Vec::new();
    for seed in 0..3 {
        let mut accs = Vec::new();
        for eot in [true, false] {
            let mut cfg = small_config(seed);
            cfg.train.eot = eot;
            let run = embed_run(&cfg)?;
            accs.push(run.attacks(&attacks, seed)?);
        }
        let mut cells = Vec::new();
        for (k, a) in attacks.iter().enumerate() {
            // row 0 is the no-distortion row
            let (with, without) = (accs[0].rows[k + 1].bit_acc, accs[1].rows[k + 1].bit_acc);
            if with >= without {
                wins[k] += 1;
            }
            cells.push(format!("{} {with:.2}/{without:.2}", a.name()));
        }
        lines.push(format!("seed {seed}: {}", cells.join(" ")));
    }
    let ok = wins.iter().all(|w| *w >= 2);
    let tally: Vec<String> = attacks.iter().zip(&wins).map(|(a, w)| format!("{} {w}/3", a.name())).collect();
    Ok((ok, format!("EOT >= no-EOT by attack: {}; [{}]", tally.join(", "), lines.join(" | "))))
}

fn c8_model_attacks() -> Outcome {
    let run = shared_run()?;
    let attacks = [Attack::Model(ModelAttack::Remove { amount: 0.2 }), Attack::Model(ModelAttack::Clone { amount: 0.2 })];
    let report = run.attacks(&attacks, 8)?;
    let base = report.rows[0].bit_acc;
    let mut ok = true;
    let mut cells = vec![format!("none {base:.4}")];
    for row in &report.rows[1..] {
        let drop = (base - row.bit_acc) * 100.0;
        ok &= drop < 10.0;
        cells.push(format!("{} {:.4} (drop {drop:.1} pp)", row.attack, row.bit_acc));
    }
    Ok((ok, format!("held-out views: {}", cells.join(", "))))
}

fn c9_budget_ablation() -> Outcome {
    let mut wins = 0;
    let mut cells = Vec::new();
    for seed in 0..3 {
        let mut ps = Vec::new();
        for budget in [BudgetMode::Adaptive, BudgetMode::FixedFraction(0.1)] {
            let mut cfg = small_config(seed);
            cfg.sbag.budget = budget;
            let run = embed_run(&cfg)?;
            ps.push((run.clean()?.psnr, run.embedding.plan.budget_b));
        }
        if ps[0].0 >= ps[1].0 {
            wins += 1;
        }
        cells.push(format!("seed {seed}: adaptive {:.2} dB (B={}) vs 10% {:.2} dB (B={})", ps[0].0, ps[0].1, ps[1].0, ps[1].1));
    }
    Ok((wins >= 2, format!("adaptive >= fixed in {wins}/3 seeds; {}", cells.join("; "))))
}

fn c10_capacity() -> Outcome {
    let ms = [32usize, 48, 64];
    let mut acc = [0.0; 3];
    for seed in 0..3 {
        for (k, &m) in ms.iter().enumerate() {
            let mut cfg = small_config(seed);
            cfg.decoder.bits = m;
            acc[k] += embed_run(&cfg)?.clean()?.bit_acc / 3.0;
        }
    }
    let ok = acc[2] <= acc[1] + 0.01 && acc[1] <= acc[0] + 0.01;
    Ok((ok, format!("mean held-out bit_acc over 3 seeds: M=32 {:.4}, M=48 {:.4}, M=64 {:.4}", acc[0], acc[1], acc[2])))
}

fn main() {
    let criteria: [(usize, &str, fn() -> Outcome); 10] = [
        (1, "gradient suite", c1_gradients),
        (2, "rendering invariants", c2_render_invariants),
        (3, "wavelet suite", c3_wavelet),
        (4, "carrier selection suite", c4_sbag),
        (5, "decoupling suite", c5_decoupling),
        (6, "end-to-end embed/extract", c6_end_to_end),
        (7, "robustness ordering (EOT)", c7_eot_ordering),
        (8, "model-space robustness", c8_model_attacks),
        (9, "budget ablation", c9_budget_ablation),
        (10, "capacity trend", c10_capacity),
    ];
    let wanted: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = Vec::new();
    let mut ran = 0;
    for (id, name, f) in criteria {
        if !wanted.is_empty() && !wanted.contains(&id) {
            continue;
        }
        ran += 1;
        let t = Instant::now();
        let (pass, detail) = match catch_unwind(AssertUnwindSafe(f)) {
            Ok(Ok(r)) => r,
            Ok(Err(e)) => (false, format!("error: {e}")),
            Err(_) => (false, "panicked".to_string()),
        };
        println!("criterion {id:>2} {} {name}: {detail} [{:.1} s]", if pass { "PASS" } else { "FAIL" }, t.elapsed().as_secs_f64());
        if !pass {
            failed.push(id);
        }
    }
    println!("acceptance: {}/{ran} passed{}", ran - failed.len(), if failed.is_empty() { String::new() } else { format!(", failed {failed:?}") });
    if !failed.is_empty() {
        std::process::exit(1);
    }
}
