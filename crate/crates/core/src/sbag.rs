//! Budgeted carrier selection: proxy scores, adaptive budget, quantile
//! feasibility, water-level seeds, prototype extension and densify-split.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experts::{EvidencePackage, FeatureVector};
use crate::gaussian::{GaussianModel, Role};
use crate::render::VisibilityStats;
use crate::stats::{quantile, quantile_minmax};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BudgetMode {
    Adaptive,
    FixedFraction(f64),
}

/// Which Gaussians become visual compensators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VisScope {
    /// Every Gaussian that is not a watermark carrier.
    Complement,
    /// Only the non-carrier children of split parents; the rest stay Neutral.
    CompensatorsOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SbagConfig {
    pub beta: f64,
    pub q: f64,
    pub kappa0: f64,
    pub n_split: usize,
    pub sim_threshold: f64,
    /// Defaults to ⌈0.25·B⌉.
    pub max_extra: Option<usize>,
    pub budget: BudgetMode,
    pub vis_scope: VisScope,
    /// Share of the parent's optical depth given to the carrier child.
    pub wm_opacity_share: f64,
}

impl Default for SbagConfig {
    fn default() -> Self {
        Self {
            beta: 0.5,
            q: 0.3,
            kappa0: 2.0,
            n_split: 2,
            sim_threshold: 0.9,
            max_extra: None,
            budget: BudgetMode::Adaptive,
            vis_scope: VisScope::Complement,
            wm_opacity_share: 0.5,
        }
    }
}

impl SbagConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta >= 0.0) {
            return Err(Error::Config("sbag.beta must be >= 0".into()));
        }
        if !(0.0..1.0).contains(&self.q) {
            return Err(Error::Config("sbag.q must be in [0, 1)".into()));
        }
        if !(self.kappa0 > 0.0) {
            return Err(Error::Config("sbag.kappa0 must be > 0".into()));
        }
        if self.n_split < 2 {
            return Err(Error::Config("sbag.n_split must be >= 2".into()));
        }
        if !(self.wm_opacity_share > 0.0 && self.wm_opacity_share < 1.0) {
            return Err(Error::Config("sbag.wm_opacity_share must be in (0, 1)".into()));
        }
        if let BudgetMode::FixedFraction(p) = self.budget {
            if !(p > 0.0 && p <= 1.0) {
                return Err(Error::Config("fixed budget fraction must be in (0, 1]".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProxyScores {
    pub r: [Vec<f64>; 3],
    pub u: Vec<f64>,
}

pub fn proxy_scores(e: &EvidencePackage, beta: f64) -> ProxyScores {
    let r: [Vec<f64>; 3] = std::array::from_fn(|k| e.s[k].iter().zip(&e.u[k]).map(|(s, u)| (s - beta * u).clamp(0.0, 1.0)).collect());
    let u = (0..e.len()).map(|i| (r[0][i] * r[1][i] * r[2][i]).cbrt()).collect();
    ProxyScores { r, u }
}

/// `κ_eff = κ₀·v̄·η` and `B = ⌈M/κ_eff⌉` clamped to `[1, n]`.
pub fn adaptive_budget(m_bits: usize, kappa0: f64, v_bar: f64, eta: f64, n: usize) -> Result<(f64, usize)> {
    let kappa_eff = kappa0 * v_bar * eta;
    if !(kappa_eff > 0.0) || !kappa_eff.is_finite() {
        return Err(Error::Config(format!("effective bits per carrier is {kappa_eff}; need > 0")));
    }
    let b = (m_bits as f64 / kappa_eff).ceil();
    let b = if b.is_finite() { b as usize } else { usize::MAX };
    Ok((kappa_eff, b.clamp(1, n.max(1))))
}

pub fn fixed_budget(p: f64, n: usize) -> usize {
    ((p * n as f64).ceil() as usize).clamp(1, n.max(1))
}

pub fn feasible_set(r: &[Vec<f64>; 3], v: &[f64], q: f64) -> Vec<usize> {
    let th = [quantile(&r[0], q), quantile(&r[1], q), quantile(&r[2], q), quantile(v, q)];
    (0..v.len())
        .filter(|&i| r[0][i] >= th[0] && r[1][i] >= th[1] && r[2][i] >= th[2] && v[i] >= th[3])
        .collect()
}

/// Feasible set with the empty-set fallback: halve `q` until at least `b`
/// indices pass or `q` drops below 0.01, then use every index. Returns the
/// set and the quantile actually used.
pub fn feasible_set_with_fallback(r: &[Vec<f64>; 3], v: &[f64], q: f64, b: usize) -> (Vec<usize>, f64) {
    let f = feasible_set(r, v, q);
    if !f.is_empty() {
        return (f, q);
    }
    log::warn!("feasible set is empty at q={q}; relaxing");
    let mut q = q / 2.0;
    while q >= 0.01 {
        let f = feasible_set(r, v, q);
        if f.len() >= b {
            return (f, q);
        }
        q /= 2.0;
    }
    ((0..v.len()).collect(), 0.0)
}

/// The `b` largest utilities within `f`, ties toward lower index.
pub fn select_seeds(f: &[usize], u: &[f64], b: usize) -> Vec<usize> {
    let mut order = f.to_vec();
    order.sort_by(|&a, &c| u[c].total_cmp(&u[a]).then(a.cmp(&c)));
    order.truncate(b);
    order.sort_unstable();
    order
}

/// Per-column normalized `(R1, R2, R3, v, ρ_hf, ‖h⁰‖)` rows.
pub fn evidence_vectors(p: &ProxyScores, v: &[f64], rho_hf: &[f64], dc_strength: &[f64], q_lo: f64, q_hi: f64) -> Vec<[f64; 6]> {
    let cols = [&p.r[0][..], &p.r[1][..], &p.r[2][..], v, rho_hf, dc_strength].map(|c| quantile_minmax(c, q_lo, q_hi));
    (0..v.len()).map(|i| std::array::from_fn(|c| cols[c][i])).collect()
}

fn cosine(a: &[f64; 6], b: &[f64; 6]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// Mean evidence over the seeds and the recruited non-seeds, best first.
pub fn prototype_extend(seeds: &[usize], e: &[[f64; 6]], sim_threshold: f64, max_extra: usize) -> Result<([f64; 6], Vec<usize>)> {
    if seeds.is_empty() {
        return Err(Error::Contract("prototype extension needs at least one seed".into()));
    }
    let mut mu = [0.0; 6];
    for &i in seeds {
        for c in 0..6 {
            mu[c] += e[i][c];
        }
    }
    mu.iter_mut().for_each(|m| *m /= seeds.len() as f64);
    if mu.iter().all(|m| *m == 0.0) {
        log::warn!("zero prototype vector; no proximity extension");
        return Ok((mu, Vec::new()));
    }
    let mut is_seed = vec![false; e.len()];
    seeds.iter().for_each(|&i| is_seed[i] = true);
    let mut cands: Vec<(f64, usize)> = (0..e.len())
        .filter(|&i| !is_seed[i])
        .map(|i| (cosine(&e[i], &mu), i))
        .filter(|(s, _)| *s >= sim_threshold)
        .collect();
    cands.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    cands.truncate(max_extra);
    Ok((mu, cands.into_iter().map(|(_, i)| i).collect()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitResult {
    pub model: GaussianModel,
    /// Source index in the input model for every output Gaussian.
    pub origin: Vec<usize>,
    pub wm_children: Vec<usize>,
    pub vis_children: Vec<usize>,
}

/// Opacities of `n_split` coincident children that together match `alpha`:
/// the parent's optical depth `−ln(1−α)` is divided with `wm_share` going to
/// the first child and the rest split evenly.
pub fn split_opacities(alpha: f64, n_split: usize, wm_share: f64) -> Vec<f64> {
    let tau = -(1.0 - alpha).ln();
    let rest = (1.0 - wm_share) * tau / (n_split - 1) as f64;
    let mut out = vec![-(-wm_share * tau).exp_m1()];
    out.extend(std::iter::repeat_n(-(-rest).exp_m1(), n_split - 1));
    out
}

/// Replace every parent by `n_split` coincident children. The first child is
/// the watermark carrier; the rest are compensators. Other Gaussians keep
/// their position in the order.
pub fn densify_split(model: &GaussianModel, parents: &[usize], n_split: usize, wm_share: f64) -> Result<SplitResult> {
    if n_split < 2 {
        return Err(Error::Contract(format!("n_split must be >= 2, got {n_split}")));
    }
    let mut is_parent = vec![false; model.len()];
    for &p in parents {
        if p >= model.len() {
            return Err(Error::Contract(format!("parent index {p} out of range")));
        }
        is_parent[p] = true;
    }
    let mut out = GaussianModel {
        gaussians: Vec::with_capacity(model.len() + parents.len() * (n_split - 1)),
        roles: Vec::new(),
        sh_degree: model.sh_degree,
    };
    let mut origin = Vec::new();
    let mut wm_children = Vec::new();
    let mut vis_children = Vec::new();
    for (i, g) in model.gaussians.iter().enumerate() {
        if !is_parent[i] {
            out.gaussians.push(g.clone());
            out.roles.push(model.roles[i]);
            origin.push(i);
            continue;
        }
        for (c, op) in split_opacities(g.opacity, n_split, wm_share).into_iter().enumerate() {
            let mut child = g.clone();
            child.opacity = op.clamp(1e-6, 1.0 - 1e-6);
            if c == 0 {
                wm_children.push(out.gaussians.len());
                out.roles.push(Role::Wm);
            } else {
                vis_children.push(out.gaussians.len());
                out.roles.push(Role::Vis);
            }
            out.gaussians.push(child);
            origin.push(i);
        }
    }
    Ok(SplitResult {
        model: out,
        origin,
        wm_children,
        vis_children,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CarrierPlan {
    pub message_bits: usize,
    pub budget_b: usize,
    pub feasible_q: f64,
    pub feasible_size: usize,
    /// Indices into the pre-split model.
    pub seeds: Vec<usize>,
    pub prox: Vec<usize>,
    pub parents: Vec<usize>,
    /// Indices into the post-split model.
    pub wm_children: Vec<usize>,
    pub vis_children: Vec<usize>,
    pub n_split: usize,
    pub prototype: [f64; 6],
    pub eta: f64,
    pub v_bar: f64,
    pub kappa_eff: f64,
    /// Pre-split source index of every post-split Gaussian.
    pub origin: Vec<usize>,
}

impl CarrierPlan {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// SHA-256 of the canonical JSON encoding.
    pub fn digest(&self) -> String {
        use sha2::{Digest, Sha256};
        let json = serde_json::to_string(self).unwrap_or_default();
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}

/// Run the full gate on a scored model and return the split model with
/// roles assigned.
#[allow(clippy::too_many_arguments)]
pub fn select_carriers(
    model: &GaussianModel,
    features: &FeatureVector,
    evidence: &EvidencePackage,
    vis: &VisibilityStats,
    message_bits: usize,
    cfg: &SbagConfig,
    q_lo: f64,
    q_hi: f64,
) -> Result<(GaussianModel, CarrierPlan)> {
    cfg.validate()?;
    let n = model.len();
    if n == 0 {
        return Err(Error::Data("cannot select carriers in an empty model".into()));
    }
    if evidence.len() != n || vis.v.len() != n {
        return Err(Error::Contract("evidence and visibility must match the model length".into()));
    }
    let prox_scores = proxy_scores(evidence, cfg.beta);
    let (kappa_eff, budget_b) = match cfg.budget {
        BudgetMode::Adaptive => adaptive_budget(message_bits, cfg.kappa0, vis.v_bar, vis.eta, n)?,
        BudgetMode::FixedFraction(p) => (cfg.kappa0 * vis.v_bar * vis.eta, fixed_budget(p, n)),
    };
    let (f, feasible_q) = feasible_set_with_fallback(&prox_scores.r, &vis.v, cfg.q, budget_b);
    let seeds = select_seeds(&f, &prox_scores.u, budget_b);
    let e = evidence_vectors(&prox_scores, &vis.v, &features.terms.rho_hf, &features.terms.dc_strength, q_lo, q_hi);
    let max_extra = cfg.max_extra.unwrap_or((budget_b as f64 * 0.25).ceil() as usize);
    let (prototype, prox) = prototype_extend(&seeds, &e, cfg.sim_threshold, max_extra)?;
    let mut parents: Vec<usize> = seeds.iter().chain(&prox).copied().collect();
    parents.sort_unstable();

    let split = densify_split(model, &parents, cfg.n_split, cfg.wm_opacity_share)?;
    let mut out = split.model;
    for r in out.roles.iter_mut() {
        if *r == Role::Vis {
            *r = Role::Neutral;
        }
    }
    for &i in &split.wm_children {
        out.roles[i] = Role::Wm;
    }
    let vis_children = match cfg.vis_scope {
        VisScope::Complement => {
            for r in out.roles.iter_mut() {
                if *r != Role::Wm {
                    *r = Role::Vis;
                }
            }
            out.indices_with_role(Role::Vis)
        }
        VisScope::CompensatorsOnly => {
            for &i in &split.vis_children {
                out.roles[i] = Role::Vis;
            }
            split.vis_children.clone()
        }
    };
    let plan = CarrierPlan {
        message_bits,
        budget_b,
        feasible_q,
        feasible_size: f.len(),
        seeds,
        prox,
        parents,
        wm_children: split.wm_children,
        vis_children,
        n_split: cfg.n_split,
        prototype,
        eta: vis.eta,
        v_bar: vis.v_bar,
        kappa_eff,
        origin: split.origin,
    };
    Ok((out, plan))
}
