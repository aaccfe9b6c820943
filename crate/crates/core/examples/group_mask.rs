//! Channel-group masks and gradient routing: what each role may update.

use splatmark::config::MaskConfig;
use splatmark::experts::ExpertConfig;
use splatmark::gaussian::Role;
use splatmark::mask::route_gradients;
use splatmark::pipeline::select;
use splatmark::render::{render_backward, Channel, ChannelSet};
use splatmark::sbag::SbagConfig;
use splatmark::synth::{make_synthetic_scene, SynthConfig};

fn main() -> splatmark::Result<()> {
    let cfg = SynthConfig {
        n_gaussians: 1000,
        ..SynthConfig::default()
    };
    let scene = make_synthetic_scene(8, &cfg)?;
    let cams = scene.train_cameras();
    let sel = select(&scene.model, &cams, 32, &ExpertConfig::default(), &SbagConfig::default(), &MaskConfig::default())?;
    println!("{:<9} {:>7} {:>7} {:>7} {:>7}", "channel", "m_wm", "m_vis", "cap", "floor");
    for ch in Channel::ALL {
        let i = ch.index();
        println!("{:<9} {:>7.3} {:>7.3} {:>7.3} {:>7.3}", ch.name(), sel.mask.m_wm[i], sel.mask.m_vis[i], sel.mask.cap[i], sel.mask.floor[i]);
    }
    // a pixel-wise pull on the first view, split by which loss produced it
    let r = splatmark::render::render(&sel.model, &cams[0]).image;
    let d = r.map(|v| v - 0.5);
    let g_wm = render_backward(&sel.model, &cams[0], &d, &ChannelSet::all(), &[Role::Wm])?;
    let g_vis = render_backward(&sel.model, &cams[0], &d, &ChannelSet::all(), &[Role::Vis])?;
    let routed = route_gradients(&g_wm, &g_vis, &sel.model.roles, &sel.mask)?;
    println!("gradient norm: wm pass {:.4}, vis pass {:.4}, routed {:.4}", g_wm.norm_sq().sqrt(), g_vis.norm_sq().sqrt(), routed.norm_sq().sqrt());
    Ok(())
}
