//! Watermark a small synthetic scene and run the full attack matrix on the
//! held-out views.

use splatmark::attacks::{attacks_from_config, run_attack_matrix};
use splatmark::config::Config;
use splatmark::pipeline::{embed, message_for, render_views};
use splatmark::synth::make_synthetic_scene;

fn main() -> splatmark::Result<()> {
    let mut cfg = Config::default();
    cfg.synth.n_gaussians = 1500;
    cfg.train.epochs = 15;
    cfg.train.log_every = 1000;
    let scene = make_synthetic_scene(cfg.train.seed, &cfg.synth)?;
    let msg = message_for(&cfg, 1)?;
    let e = embed(&scene.model, &scene.train_cameras(), &cfg, &msg, &cfg.train)?;
    let eval = scene.eval_cameras();
    let refs = render_views(&scene.model, &eval);
    let report = run_attack_matrix(&e.model, &eval, &refs, &e.decoder, &msg, &attacks_from_config(&cfg.attack), 0)?;
    print!("{}", report.summary());
    let path = std::env::temp_dir().join("splatmark_attacks.csv");
    report.save_csv(&path)?;
    println!("wrote {}", path.display());
    Ok(())
}
