//! Budgeted carrier selection and densify-split on a synthetic scene, with
//! the render fidelity of the split.

use splatmark::config::MaskConfig;
use splatmark::experts::ExpertConfig;
use splatmark::gaussian::Role;
use splatmark::metrics::psnr;
use splatmark::pipeline::{render_views, select};
use splatmark::sbag::{adaptive_budget, BudgetMode, SbagConfig};
use splatmark::synth::{make_synthetic_scene, SynthConfig};

fn main() -> splatmark::Result<()> {
    let (_, b) = adaptive_budget(32, 2.0, 0.5, 0.8, 10_000)?;
    println!("budget for M=32, kappa0=2, v_bar=0.5, eta=0.8: {b}");

    let scene = make_synthetic_scene(2, &SynthConfig::default())?;
    let cams = scene.train_cameras();
    for budget in [BudgetMode::Adaptive, BudgetMode::FixedFraction(0.1)] {
        let sbag = SbagConfig {
            budget,
            ..SbagConfig::default()
        };
        let sel = select(&scene.model, &cams, 32, &ExpertConfig::default(), &sbag, &MaskConfig::default())?;
        let before = render_views(&scene.model, &cams);
        let after = render_views(&sel.model, &cams);
        let worst = before.iter().zip(&after).map(|(a, b)| psnr(a, b)).collect::<splatmark::Result<Vec<_>>>()?.into_iter().fold(f64::INFINITY, f64::min);
        let p = &sel.plan;
        println!("{budget:?}");
        println!("  eta {:.3} v_bar {:.3} budget {} feasible {} (q {})", p.eta, p.v_bar, p.budget_b, p.feasible_size, p.feasible_q);
        println!("  seeds {} prototype extras {} carriers {} compensators {}", p.seeds.len(), p.prox.len(), sel.model.count_role(Role::Wm), sel.model.count_role(Role::Vis));
        println!("  split fidelity: worst view {worst:.2} dB");
        println!("  mask wm {:.3?}\n       vis {:.3?}", sel.mask.m_wm, sel.mask.m_vis);
    }
    Ok(())
}
