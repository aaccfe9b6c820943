//! Contribution-based pruning.
//!
//! The contribution of a Gaussian in a view is its accumulated compositing
//! weight Σ_p α·T, which is the magnitude of the L1 gradient with respect to a
//! temporary per-Gaussian color. The score is the maximum over views.

use crate::camera::Camera;
use crate::error::{Error, Result};
use crate::gaussian::GaussianModel;
use crate::render::{render_with, RenderSettings};

pub fn contribution_scores(model: &GaussianModel, cameras: &[Camera]) -> Result<Vec<f64>> {
    if cameras.is_empty() {
        return Err(Error::Contract("pruning needs at least one camera".into()));
    }
    let settings = RenderSettings::default();
    let mut score = vec![0.0f64; model.len()];
    for cam in cameras {
        let out = render_with(model, cam, &settings);
        for (s, w) in score.iter_mut().zip(&out.weight_sum) {
            *s = s.max(*w);
        }
    }
    Ok(score)
}

/// Remove Gaussians whose max-over-views contribution is below `tau`.
pub fn prune_by_contribution(model: &GaussianModel, cameras: &[Camera], tau: f64) -> Result<GaussianModel> {
    if !(tau >= 0.0) {
        return Err(Error::Config(format!("prune threshold must be >= 0, got {tau}")));
    }
    if model.is_empty() {
        return Ok(model.clone());
    }
    let scores = contribution_scores(model, cameras)?;
    let keep: Vec<bool> = scores.iter().map(|s| *s >= tau).collect();
    let out = model.retain_indices(&keep);
    if out.is_empty() {
        log::warn!("pruning removed all {} Gaussians", model.len());
    }
    Ok(out)
}
