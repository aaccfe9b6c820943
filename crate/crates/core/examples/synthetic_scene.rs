//! Generate a synthetic scene, render every view and save them as PNGs.

use std::time::Instant;

use splatmark::render::{render, render_backward, ChannelSet};
use splatmark::gaussian::Role;
use splatmark::image::Image;
use splatmark::synth::{make_synthetic_scene, SynthConfig};

fn main() -> splatmark::Result<()> {
    let cfg = SynthConfig::default();
    let t = Instant::now();
    let scene = make_synthetic_scene(7, &cfg)?;
    println!("{} Gaussians, {} views in {:.2?}", scene.model.len(), scene.cameras.len(), t.elapsed());
    let out = std::env::temp_dir().join("splatmark_synth");
    std::fs::create_dir_all(&out)?;
    for (i, img) in scene.references.iter().enumerate() {
        img.save_png(out.join(format!("view_{i:02}.png")))?;
        println!("view {i}: mean {:.3} var {:.4}", img.mean(), img.variance());
    }
    let t = Instant::now();
    let r = render(&scene.model, &scene.cameras[0]);
    println!("render {:.2?}", t.elapsed());
    let t = Instant::now();
    let g = Image::filled(r.image.width, r.image.height, 1e-3);
    render_backward(&scene.model, &scene.cameras[0], &g, &ChannelSet::all(), &[Role::Neutral, Role::Wm, Role::Vis])?;
    println!("backward {:.2?}", t.elapsed());
    println!("wrote {}", out.display());
    Ok(())
}
