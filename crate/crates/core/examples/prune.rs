//! Contribution-based pruning: Gaussians that never reach a pixel are dropped.

use nalgebra::{Vector3, Vector4};
use splatmark::gaussian::Gaussian;
use splatmark::prune::{contribution_scores, prune_by_contribution};
use splatmark::synth::{make_synthetic_scene, SynthConfig};

fn main() -> splatmark::Result<()> {
    let cfg = SynthConfig {
        n_gaussians: 1500,
        ..SynthConfig::default()
    };
    let scene = make_synthetic_scene(11, &cfg)?;
    let mut model = scene.model.clone();
    // a few Gaussians far behind every camera
    for k in 0..20 {
        model.gaussians.push(Gaussian::new(
            Vector3::new(k as f64 * 0.1, 0.0, 40.0),
            Vector3::repeat(0.05),
            Vector4::new(1.0, 0.0, 0.0, 0.0),
            0.8,
            Vector3::zeros(),
        ));
        model.roles.push(Default::default());
    }
    let scores = contribution_scores(&model, &scene.cameras)?;
    let zero = scores.iter().filter(|s| **s == 0.0).count();
    println!("{} gaussians, {zero} with zero contribution", model.len());
    for tau in [0.0, 1e-8, 1e-3, 1e-1] {
        let pruned = prune_by_contribution(&model, &scene.cameras, tau)?;
        println!("tau {tau:e}: kept {}", pruned.len());
    }
    Ok(())
}
