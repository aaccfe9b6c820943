//! Channel-wise group masks and disjoint gradient routing.

use serde::{Deserialize, Serialize};

use crate::error::{Error, LossSide, Result};
use crate::gaussian::Role;
use crate::render::{Channel, GaussianGrad, GradientSet};
use crate::stats::{lower_median, mean};

pub const DEFAULT_CAP: [f64; 5] = [1.0, 0.5, 0.8, 0.3, 0.3];
pub const DEFAULT_FLOOR: [f64; 5] = [0.05, 0.0, 0.02, 0.0, 0.0];

/// Per-Gaussian inputs to the channel weights, aligned with the model.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct WeightInputs {
    pub r1: Vec<f64>,
    pub r2: Vec<f64>,
    pub rho_hf: Vec<f64>,
    pub opacity_gate: Vec<f64>,
    pub iso: Vec<f64>,
}

impl WeightInputs {
    /// Re-index pre-split inputs through a split origin map.
    pub fn gather(&self, origin: &[usize]) -> Self {
        let g = |v: &[f64]| origin.iter().map(|&o| v[o]).collect();
        Self {
            r1: g(&self.r1),
            r2: g(&self.r2),
            rho_hf: g(&self.rho_hf),
            opacity_gate: g(&self.opacity_gate),
            iso: g(&self.iso),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelWeights {
    /// `w_wm[g][i]`, rows in [`Channel::ALL`] order.
    pub w_wm: [Vec<f64>; 5],
    pub w_vis: [Vec<f64>; 5],
}

pub fn wm_weight(ch: Channel, x: &WeightInputs, i: usize) -> f64 {
    match ch {
        Channel::Dc => x.r2[i],
        Channel::Rest => x.r2[i] * (1.0 - x.rho_hf[i]),
        Channel::Opacity => x.opacity_gate[i],
        Channel::Rotation => x.r1[i],
        Channel::Scale => x.r1[i] * x.iso[i],
    }
}

pub fn channel_weights(x: &WeightInputs) -> ChannelWeights {
    let n = x.r1.len();
    let w_wm: [Vec<f64>; 5] = std::array::from_fn(|g| (0..n).map(|i| wm_weight(Channel::ALL[g], x, i).clamp(0.0, 1.0)).collect());
    let w_vis = std::array::from_fn(|g| w_wm[g].iter().map(|w| 1.0 - w).collect());
    ChannelWeights { w_wm, w_vis }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupMask {
    pub m_wm: [f64; 5],
    pub m_vis: [f64; 5],
    pub cap: [f64; 5],
    pub floor: [f64; 5],
    /// Optional per-Gaussian multipliers replacing the scene-level scalars.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_point: Option<Vec<[f64; 5]>>,
}

impl GroupMask {
    pub fn zeros() -> Self {
        Self {
            m_wm: [0.0; 5],
            m_vis: [0.0; 5],
            cap: DEFAULT_CAP,
            floor: [0.0; 5],
            per_point: None,
        }
    }

    pub fn multiplier(&self, i: usize, role: Role, ch: Channel) -> f64 {
        if let Some(pp) = &self.per_point {
            return match role {
                Role::Neutral => 0.0,
                _ => pp[i][ch.index()],
            };
        }
        match role {
            Role::Wm => self.m_wm[ch.index()],
            Role::Vis => self.m_vis[ch.index()],
            Role::Neutral => 0.0,
        }
    }
}

fn check_bounds(cap: &[f64; 5], floor: &[f64; 5]) -> Result<()> {
    for g in 0..5 {
        if !(cap[g] >= floor[g]) || cap[g] < 0.0 || floor[g] < 0.0 {
            return Err(Error::Config(format!("mask bounds for {}: cap {} < floor {}", Channel::ALL[g], cap[g], floor[g])));
        }
    }
    Ok(())
}

/// Scene-level masks: mean over compensators, lower median over carriers.
pub fn build_masks(w: &ChannelWeights, roles: &[Role], cap: [f64; 5], floor: [f64; 5]) -> Result<GroupMask> {
    check_bounds(&cap, &floor)?;
    let vis: Vec<usize> = (0..roles.len()).filter(|&i| roles[i] == Role::Vis).collect();
    let wm: Vec<usize> = (0..roles.len()).filter(|&i| roles[i] == Role::Wm).collect();
    if wm.is_empty() {
        log::warn!("no watermark carriers; watermark mask is zero");
    }
    if vis.is_empty() {
        log::warn!("no compensators; visual mask falls back to its floor");
    }
    let mut m = GroupMask {
        m_wm: [0.0; 5],
        m_vis: floor,
        cap,
        floor,
        per_point: None,
    };
    for g in 0..5 {
        if !vis.is_empty() {
            let vals: Vec<f64> = vis.iter().map(|&i| w.w_vis[g][i]).collect();
            m.m_vis[g] = mean(&vals).clamp(0.0, cap[g]).max(floor[g]);
        }
        if !wm.is_empty() {
            let vals: Vec<f64> = wm.iter().map(|&i| w.w_wm[g][i]).collect();
            m.m_wm[g] = lower_median(&vals).clamp(0.0, cap[g]);
        }
    }
    Ok(m)
}

/// Per-Gaussian variant: each Gaussian's own weight under the same caps and floors.
pub fn build_point_masks(w: &ChannelWeights, roles: &[Role], cap: [f64; 5], floor: [f64; 5]) -> Result<GroupMask> {
    let mut m = build_masks(w, roles, cap, floor)?;
    let pp = (0..roles.len())
        .map(|i| {
            std::array::from_fn(|g| match roles[i] {
                Role::Wm => w.w_wm[g][i].clamp(0.0, cap[g]),
                Role::Vis => w.w_vis[g][i].clamp(0.0, cap[g]).max(floor[g]),
                Role::Neutral => 0.0,
            })
        })
        .collect();
    m.per_point = Some(pp);
    Ok(m)
}

fn first_nonzero(g: &GaussianGrad) -> Option<Channel> {
    Channel::ALL.into_iter().find(|&ch| g.channel(ch).iter().any(|v| *v != 0.0))
}

/// Route role-filtered gradients through the masks. Each Gaussian receives
/// exactly one masked source; a nonzero entry from the other loss is an
/// integrity error.
pub fn route_gradients(grads_wm: &GradientSet, grads_vis: &GradientSet, roles: &[Role], mask: &GroupMask) -> Result<GradientSet> {
    if grads_wm.len() != roles.len() || grads_vis.len() != roles.len() {
        return Err(Error::Contract("gradient sets must match the role table".into()));
    }
    let mut out = GradientSet::zeros(roles.len());
    for (i, role) in roles.iter().enumerate() {
        let (src, other, other_side) = match role {
            Role::Wm => (Some(&grads_wm.grads[i]), &grads_vis.grads[i], LossSide::Visual),
            Role::Vis => (Some(&grads_vis.grads[i]), &grads_wm.grads[i], LossSide::Watermark),
            Role::Neutral => {
                if let Some(channel) = first_nonzero(&grads_wm.grads[i]) {
                    return Err(Error::Routing {
                        index: i,
                        channel,
                        source_loss: LossSide::Watermark,
                    });
                }
                (None, &grads_vis.grads[i], LossSide::Visual)
            }
        };
        if let Some(channel) = first_nonzero(other) {
            return Err(Error::Routing {
                index: i,
                channel,
                source_loss: other_side,
            });
        }
        if let Some(src) = src {
            for ch in Channel::ALL {
                let m = mask.multiplier(i, *role, ch);
                for (o, s) in out.grads[i].channel_mut(ch).iter_mut().zip(src.channel(ch)) {
                    *o = m * s;
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn weights(w_wm: f64, w_vis: f64, n: usize) -> ChannelWeights {
        ChannelWeights {
            w_wm: std::array::from_fn(|_| vec![w_wm; n]),
            w_vis: std::array::from_fn(|_| vec![w_vis; n]),
        }
    }

    #[test]
    fn floor_and_cap_activate() {
        let roles = vec![Role::Vis, Role::Wm, Role::Vis];
        let m = build_masks(&weights(1.0, 0.0, 3), &roles, [0.8; 5], [0.05; 5]).unwrap();
        assert_eq!(m.m_vis, [0.05; 5]);
        assert_eq!(m.m_wm, [0.8; 5]);
    }

    #[test]
    fn odd_median() {
        let mut w = weights(0.0, 0.0, 3);
        w.w_wm[0] = vec![0.1, 0.9, 0.4];
        let m = build_masks(&w, &[Role::Wm; 3], [1.0; 5], [0.0; 5]).unwrap();
        assert_eq!(m.m_wm[0], 0.4);
    }

    #[test]
    fn cap_below_floor_is_config_error() {
        let r = build_masks(&weights(0.5, 0.5, 1), &[Role::Wm], [0.1; 5], [0.2; 5]);
        assert!(matches!(r, Err(Error::Config(_))));
    }

    #[test]
    fn no_carriers_gives_zero_wm_mask() {
        let m = build_masks(&weights(0.5, 0.5, 2), &[Role::Vis; 2], DEFAULT_CAP, DEFAULT_FLOOR).unwrap();
        assert_eq!(m.m_wm, [0.0; 5]);
    }

    #[test]
    fn cross_source_gradient_is_rejected() {
        let roles = vec![Role::Vis, Role::Wm];
        let mut wm = GradientSet::zeros(2);
        let vis = GradientSet::zeros(2);
        wm.grads[0].opacity = 1.0;
        match route_gradients(&wm, &vis, &roles, &GroupMask::zeros()) {
            Err(Error::Routing { index, channel, source_loss }) => {
                assert_eq!((index, channel, source_loss), (0, Channel::Opacity, LossSide::Watermark));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn zero_wm_mask_blocks_carriers() {
        let roles = vec![Role::Wm];
        let mut wm = GradientSet::zeros(1);
        wm.grads[0].dc = [1.0, 2.0, 3.0];
        let mut m = GroupMask::zeros();
        m.m_vis = [1.0; 5];
        assert!(route_gradients(&wm, &GradientSet::zeros(1), &roles, &m).unwrap().is_zero());
    }
}
