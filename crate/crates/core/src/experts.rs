//! Geometry, appearance and redundancy experts computed from native Gaussian
//! parameters, and their packaging into uncertainty/quality evidence.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::{Gaussian, GaussianModel};
use crate::knn::{knn, Neighborhood};
use crate::stats::{quantile, quantile_minmax, std_dev};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExpertConfig {
    pub k: usize,
    pub alpha0: f64,
    pub sigma_alpha: f64,
    pub sigma_o: f64,
    pub eps: f64,
    pub q_lo: f64,
    pub q_hi: f64,
    /// Band-pass center on DC strength; the scene median when unset.
    pub m_c: Option<f64>,
    /// Band-pass width; scene IQR / 1.349 when unset.
    pub sigma_c: Option<f64>,
}

impl Default for ExpertConfig {
    fn default() -> Self {
        Self {
            k: 16,
            alpha0: 0.6,
            sigma_alpha: 0.25,
            sigma_o: 1.0,
            eps: 1e-8,
            q_lo: 0.02,
            q_hi: 0.98,
            m_c: None,
            sigma_c: None,
        }
    }
}

impl ExpertConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || !(self.sigma_alpha > 0.0) || !(self.sigma_o > 0.0) || !(self.eps > 0.0) {
            return Err(Error::Config("experts: k, sigma_alpha, sigma_o and eps must be positive".into()));
        }
        if !(0.0 <= self.q_lo && self.q_lo < self.q_hi && self.q_hi <= 1.0) {
            return Err(Error::Config("experts: need 0 <= q_lo < q_hi <= 1".into()));
        }
        Ok(())
    }

    fn norm(&self, v: &[f64]) -> Vec<f64> {
        quantile_minmax(v, self.q_lo, self.q_hi)
    }
}

/// Raw per-Gaussian terms feeding the three experts.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RawTerms {
    pub iso: Vec<f64>,
    pub rot_cons: Vec<f64>,
    pub footprint: Vec<f64>,
    pub rho_hf: Vec<f64>,
    pub opacity_gate: Vec<f64>,
    pub dc_band: Vec<f64>,
    pub dc_strength: Vec<f64>,
    pub redundancy: Vec<f64>,
    pub coverage: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FeatureVector {
    pub z1: Vec<f64>,
    pub z2: Vec<f64>,
    pub z3: Vec<f64>,
    pub terms: RawTerms,
}

impl FeatureVector {
    pub fn z(&self, k: usize) -> &[f64] {
        match k {
            0 => &self.z1,
            1 => &self.z2,
            _ => &self.z3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EvidencePackage {
    /// `u[k][i]`: uncertainty of expert k for Gaussian i.
    pub u: [Vec<f64>; 3],
    /// `s[k][i]`: quality of expert k for Gaussian i.
    pub s: [Vec<f64>; 3],
}

impl EvidencePackage {
    pub fn len(&self) -> usize {
        self.u[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.u[0].is_empty()
    }
}

fn unit_quat(g: &Gaussian) -> nalgebra::Vector4<f64> {
    g.rotation / g.rotation.norm()
}

pub fn isotropy(g: &Gaussian) -> f64 {
    g.scale.min() / g.scale.max()
}

pub fn high_freq_ratio(g: &Gaussian, eps: f64) -> f64 {
    let dc2 = g.sh_dc.norm_squared();
    let rest2: f64 = g.sh_rest.iter().map(|v| v * v).sum();
    rest2 / (dc2 + rest2 + eps)
}

pub fn opacity_gate(alpha: f64, alpha0: f64, sigma_alpha: f64) -> f64 {
    (-(alpha - alpha0).powi(2) / (2.0 * sigma_alpha * sigma_alpha)).exp()
}

/// Overlap weight between two Gaussians at distance `d`.
pub fn overlap_weight(d: f64, fp_i: f64, fp_j: f64, sigma_o: f64) -> f64 {
    (-d * d / (sigma_o * sigma_o * (fp_i * fp_i + fp_j * fp_j))).exp()
}

/// Combined DC-color and shape similarity in [0, 1].
pub fn pair_similarity(a: &Gaussian, b: &Gaussian) -> f64 {
    let (na, nb) = (a.sh_dc.norm(), b.sh_dc.norm());
    let cos = if na < 1e-12 && nb < 1e-12 {
        1.0
    } else if na < 1e-12 || nb < 1e-12 {
        0.0
    } else {
        (a.sh_dc.dot(&b.sh_dc) / (na * nb)).clamp(0.0, 1.0)
    };
    let (fa, fb) = (a.footprint(), b.footprint());
    let shape = fa.min(fb) / fa.max(fb) * unit_quat(a).dot(&unit_quat(b)).abs().min(1.0);
    0.5 * (cos + shape)
}

fn mean3(a: &[f64], b: &[f64], c: &[f64]) -> Vec<f64> {
    a.iter().zip(b).zip(c).map(|((x, y), z)| (x + y + z) / 3.0).collect()
}

pub fn geometry_features(model: &GaussianModel, nbrs: &Neighborhood, cfg: &ExpertConfig) -> (Vec<f64>, RawTerms) {
    let g = &model.gaussians;
    let iso: Vec<f64> = g.iter().map(isotropy).collect();
    let rot_cons: Vec<f64> = (0..g.len())
        .map(|i| {
            let qi = unit_quat(&g[i]);
            let js = nbrs.indices_of(i);
            js.iter().map(|&j| qi.dot(&unit_quat(&g[j])).abs().min(1.0)).sum::<f64>() / js.len() as f64
        })
        .collect();
    let footprint: Vec<f64> = g.iter().map(Gaussian::footprint).collect();
    let inv_fp: Vec<f64> = footprint.iter().map(|f| 1.0 - f).collect();
    let z1 = mean3(&cfg.norm(&iso), &cfg.norm(&rot_cons), &cfg.norm(&inv_fp));
    let terms = RawTerms {
        iso,
        rot_cons,
        footprint,
        ..Default::default()
    };
    (z1, terms)
}

/// Band-pass center and width from the scene's DC strengths.
pub fn dc_band_params(dc_strength: &[f64], cfg: &ExpertConfig) -> (f64, f64) {
    let m_c = cfg.m_c.unwrap_or_else(|| quantile(dc_strength, 0.5));
    let sigma_c = cfg
        .sigma_c
        .unwrap_or_else(|| (quantile(dc_strength, 0.75) - quantile(dc_strength, 0.25)) / 1.349)
        .max(1e-8);
    (m_c, sigma_c)
}

pub fn appearance_features(model: &GaussianModel, cfg: &ExpertConfig) -> (Vec<f64>, RawTerms) {
    let g = &model.gaussians;
    let rho_hf: Vec<f64> = g.iter().map(|x| high_freq_ratio(x, cfg.eps)).collect();
    let opacity_gate: Vec<f64> = g.iter().map(|x| opacity_gate(x.opacity, cfg.alpha0, cfg.sigma_alpha)).collect();
    let dc_strength: Vec<f64> = g.iter().map(|x| x.sh_dc.norm()).collect();
    let (m_c, sigma_c) = dc_band_params(&dc_strength, cfg);
    let dc_band: Vec<f64> = dc_strength.iter().map(|c| (-(c - m_c).powi(2) / (2.0 * sigma_c * sigma_c)).exp()).collect();
    let low: Vec<f64> = rho_hf.iter().map(|r| 1.0 - r).collect();
    let z2 = mean3(&cfg.norm(&low), &cfg.norm(&opacity_gate), &cfg.norm(&dc_band));
    let terms = RawTerms {
        rho_hf,
        opacity_gate,
        dc_band,
        dc_strength,
        ..Default::default()
    };
    (z2, terms)
}

pub fn redundancy_features(model: &GaussianModel, nbrs: &Neighborhood, cfg: &ExpertConfig) -> (Vec<f64>, RawTerms) {
    let g = &model.gaussians;
    let fp: Vec<f64> = g.iter().map(Gaussian::footprint).collect();
    let rows: Vec<(f64, f64)> = (0..g.len())
        .into_par_iter()
        .map(|i| {
            let js = nbrs.indices_of(i);
            let ds = nbrs.distances_of(i);
            let mut score = 0.0;
            let mut covered = 0usize;
            for (&j, &d) in js.iter().zip(ds) {
                let w = overlap_weight(d, fp[i], fp[j], cfg.sigma_o);
                score += w * pair_similarity(&g[i], &g[j]);
                if w > 0.1 {
                    covered += 1;
                }
            }
            (score / js.len() as f64, covered as f64 / js.len() as f64)
        })
        .collect();
    let redundancy: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let coverage: Vec<f64> = rows.iter().map(|r| r.1).collect();
    let z3 = cfg.norm(&redundancy);
    let terms = RawTerms {
        redundancy,
        coverage,
        ..Default::default()
    };
    (z3, terms)
}

pub fn features(model: &GaussianModel, nbrs: &Neighborhood, cfg: &ExpertConfig) -> FeatureVector {
    let (z1, t1) = geometry_features(model, nbrs, cfg);
    let (z2, t2) = appearance_features(model, cfg);
    let (z3, t3) = redundancy_features(model, nbrs, cfg);
    FeatureVector {
        z1,
        z2,
        z3,
        terms: RawTerms {
            iso: t1.iso,
            rot_cons: t1.rot_cons,
            footprint: t1.footprint,
            rho_hf: t2.rho_hf,
            opacity_gate: t2.opacity_gate,
            dc_band: t2.dc_band,
            dc_strength: t2.dc_strength,
            redundancy: t3.redundancy,
            coverage: t3.coverage,
        },
    }
}

/// Expert-specific penalty added to the neighborhood dispersion.
pub fn penalty(k: usize, terms: &RawTerms, i: usize) -> f64 {
    match k {
        0 => {
            if terms.iso[i] < 0.1 {
                0.5
            } else {
                0.0
            }
        }
        1 => 0.5 * terms.rho_hf[i],
        _ => 0.5 * (1.0 - terms.coverage[i]),
    }
}

pub fn evidence(z: &FeatureVector, nbrs: &Neighborhood, cfg: &ExpertConfig) -> EvidencePackage {
    let n = z.z1.len();
    let mut out = EvidencePackage::default();
    for k in 0..3 {
        let zk = z.z(k);
        let raw_u: Vec<f64> = (0..n)
            .map(|i| {
                let mut vals: Vec<f64> = nbrs.indices_of(i).iter().map(|&j| zk[j]).collect();
                vals.push(zk[i]);
                std_dev(&vals) + penalty(k, &z.terms, i)
            })
            .collect();
        out.u[k] = cfg.norm(&raw_u);
        out.s[k] = cfg.norm(zk);
    }
    out
}

/// Neighborhoods plus features plus evidence in one call.
pub fn run_experts(model: &GaussianModel, cfg: &ExpertConfig) -> Result<(Neighborhood, FeatureVector, EvidencePackage)> {
    cfg.validate()?;
    let positions: Vec<_> = model.gaussians.iter().map(|g| g.position).collect();
    let nbrs = knn(&positions, cfg.k)?;
    let f = features(model, &nbrs, cfg);
    let e = evidence(&f, &nbrs, cfg);
    Ok((nbrs, f, e))
}

pub fn write_evidence_csv(f: &FeatureVector, e: &EvidencePackage, w: impl Write) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["index", "z1", "z2", "z3", "U1", "U2", "U3", "S1", "S2", "S3"])?;
    for i in 0..f.z1.len() {
        let mut row = vec![i.to_string()];
        for v in [f.z1[i], f.z2[i], f.z3[i], e.u[0][i], e.u[1][i], e.u[2][i], e.s[0][i], e.s[1][i], e.s[2][i]] {
            row.push(format!("{v}"));
        }
        wr.write_record(&row)?;
    }
    wr.flush()?;
    Ok(())
}

/// Read back an evidence CSV written by [`write_evidence_csv`].
pub fn read_evidence_csv(r: impl std::io::Read) -> Result<(Vec<[f64; 3]>, EvidencePackage)> {
    let mut rd = csv::Reader::from_reader(r);
    let mut z = Vec::new();
    let mut e = EvidencePackage::default();
    for (row_no, rec) in rd.records().enumerate() {
        let rec = rec?;
        let vals: Vec<f64> = rec
            .iter()
            .skip(1)
            .map(|s| s.parse::<f64>().map_err(|_| Error::Parse(format!("evidence row {row_no}: bad number `{s}`"))))
            .collect::<Result<_>>()?;
        if vals.len() != 9 {
            return Err(Error::Parse(format!("evidence row {row_no}: expected 10 columns")));
        }
        z.push([vals[0], vals[1], vals[2]]);
        for k in 0..3 {
            e.u[k].push(vals[3 + k]);
            e.s[k].push(vals[6 + k]);
        }
    }
    Ok((z, e))
}
