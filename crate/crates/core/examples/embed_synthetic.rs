//! Watermark a synthetic scene end to end and report clean-view metrics.

use std::time::Instant;

use splatmark::config::Config;
use splatmark::pipeline::{embed, evaluate, message_for, render_views};
use splatmark::prune::prune_by_contribution;
use splatmark::synth::make_synthetic_scene;

fn main() -> splatmark::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let mut cfg = Config::default();
    if let Some(path) = std::env::args().nth(1) {
        cfg = Config::load(path)?;
    }
    cfg.train.log_every = 20;
    let t = Instant::now();
    let scene = make_synthetic_scene(cfg.train.seed, &cfg.synth)?;
    let train_cams = scene.train_cameras();
    let eval_cams = scene.eval_cameras();
    let model = prune_by_contribution(&scene.model, &scene.cameras, cfg.prune.tau)?;
    let message = message_for(&cfg, cfg.train.seed)?;
    let out = embed(&model, &train_cams, &cfg, &message, &cfg.train)?;
    println!(
        "carriers {} (budget {}), model {} -> {}",
        out.plan.wm_children.len(),
        out.plan.budget_b,
        model.len(),
        out.model.len()
    );
    println!("mask wm {:?} vis {:?}", out.mask.m_wm, out.mask.m_vis);
    let refs_eval = render_views(&model, &eval_cams);
    let refs_train = render_views(&model, &train_cams);
    let e = evaluate(&out.model, &eval_cams, &refs_eval, &out.decoder, &message)?;
    let tr = evaluate(&out.model, &train_cams, &refs_train, &out.decoder, &message)?;
    println!("eval : bit_acc {:.4} psnr {:.2} ssim {:.4}", e.bit_acc, e.psnr, e.ssim);
    println!("train: bit_acc {:.4} psnr {:.2} ssim {:.4}", tr.bit_acc, tr.psnr, tr.ssim);
    for (name, cams, refs) in [("eval", &eval_cams, &refs_eval), ("train", &train_cams, &refs_train)] {
        for (cam, r) in cams.iter().zip(refs.iter()) {
            let z = out.decoder.decode(&splatmark::render::render(&out.model, cam).image)?;
            let z0 = out.decoder.decode(r)?;
            let acc = splatmark::codec::bit_accuracy(&z, &message);
            let margin = z.iter().zip(&message.bits).map(|(z, b)| if *b == 1 { *z } else { -z }).fold(f64::INFINITY, f64::min);
            let sig = z.iter().zip(&z0).zip(&message.bits).map(|((a, b), m)| if *m == 1 { a - b } else { b - a }).sum::<f64>() / z.len() as f64;
            let off = (z0.iter().map(|v| v * v).sum::<f64>() / z0.len() as f64).sqrt();
            println!("  {name} acc {acc:.3} min margin {margin:.4} mean signal {sig:.4} offset rms {off:.4}");
        }
    }
    println!("total {:.1?}", t.elapsed());
    Ok(())
}
