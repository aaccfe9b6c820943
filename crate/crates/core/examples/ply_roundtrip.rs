//! Write a model to binary PLY with its role sidecar and read it back.

use splatmark::gaussian::Role;
use splatmark::ply::{load_model, save_ply};
use splatmark::synth::{make_synthetic_scene, SynthConfig};

fn main() -> splatmark::Result<()> {
    let cfg = SynthConfig {
        n_gaussians: 500,
        n_views: 2,
        ..SynthConfig::default()
    };
    let mut model = make_synthetic_scene(3, &cfg)?.model;
    for i in (0..model.len()).step_by(10) {
        model.roles[i] = Role::Wm;
    }
    let dir = std::env::temp_dir().join("splatmark_ply");
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("model.ply");
    save_ply(&model, &path)?;
    let back = load_model(&path)?;
    let worst = model
        .gaussians
        .iter()
        .zip(&back.gaussians)
        .map(|(a, b)| (a.position - b.position).abs().max().max((a.opacity - b.opacity).abs()))
        .fold(0.0, f64::max);
    println!("{} gaussians, {} bytes", back.len(), std::fs::metadata(&path)?.len());
    println!("carriers after reload: {}", back.count_role(Role::Wm));
    println!("largest position/opacity change: {worst:e}");
    Ok(())
}
