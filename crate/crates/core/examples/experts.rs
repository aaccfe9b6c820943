//! Score every Gaussian with the geometry, appearance and redundancy experts
//! and summarize the evidence.

use splatmark::experts::{run_experts, ExpertConfig};
use splatmark::stats::quantile;
use splatmark::synth::{make_synthetic_scene, SynthConfig};

fn main() -> splatmark::Result<()> {
    let scene = make_synthetic_scene(5, &SynthConfig::default())?;
    let (nbrs, f, e) = run_experts(&scene.model, &ExpertConfig::default())?;
    println!("{} gaussians, k = {}", scene.model.len(), nbrs.indices_of(0).len());
    for (k, name) in ["geometry", "appearance", "redundancy"].iter().enumerate() {
        let z = f.z(k);
        println!(
            "{name:<11} z: p10 {:.3} median {:.3} p90 {:.3} | mean U {:.3} mean S {:.3}",
            quantile(z, 0.1),
            quantile(z, 0.5),
            quantile(z, 0.9),
            e.u[k].iter().sum::<f64>() / e.len() as f64,
            e.s[k].iter().sum::<f64>() / e.len() as f64,
        );
    }
    Ok(())
}
