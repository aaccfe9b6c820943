//! Apply every attack distortion to a render in both modes and save the
//! results as PNGs.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use splatmark::distort::{apply_chain, Distortion, Mode};
use splatmark::metrics::{psnr, ssim};
use splatmark::render::render;
use splatmark::synth::{make_synthetic_scene, SynthConfig};

fn main() -> splatmark::Result<()> {
    let scene = make_synthetic_scene(6, &SynthConfig::default())?;
    let img = render(&scene.model, &scene.cameras[0]).image;
    let out = std::env::temp_dir().join("splatmark_distort");
    std::fs::create_dir_all(&out)?;
    let mut chains: Vec<(String, Vec<Distortion>)> = Distortion::standard_set().into_iter().map(|d| (d.name().to_string(), vec![d])).collect();
    chains.push(("combined".into(), Distortion::combined()));
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    println!("{:<10} {:>9} {:>7} {:>9}", "attack", "psnr", "ssim", "surrogate");
    for (name, chain) in &chains {
        let (exact, _) = apply_chain(&img, chain, Mode::EvalExact, &mut rng)?;
        let (surr, _) = apply_chain(&img, chain, Mode::TrainSurrogate, &mut rng)?;
        exact.save_png(out.join(format!("{name}.png")))?;
        println!("{name:<10} {:>9.2} {:>7.4} {:>9.2}", psnr(&exact, &img)?, ssim(&exact, &img)?, psnr(&surr, &img)?);
    }
    println!("wrote {}", out.display());
    Ok(())
}
