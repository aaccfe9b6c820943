//! Gaussian primitives, role labels and covariance assembly.
//!
//! Parameters are held in activated form (positive scale, unit quaternion,
//! opacity in (0,1)). [`RawGaussian`] is the pre-activation form used by files
//! and by the optimizer.

use std::fmt;
use std::str::FromStr;

use nalgebra::{Matrix3, Vector3, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of AC spherical-harmonic coefficients per color channel (degree 3).
pub const SH_REST_PER_CHANNEL: usize = 15;
/// Flattened AC coefficient count, channel-major (`c * 15 + k`).
pub const SH_REST_LEN: usize = 3 * SH_REST_PER_CHANNEL;

pub const QUAT_UNIT_TOL: f64 = 1e-6;
pub const QUAT_DEGENERATE: f64 = 1e-8;

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Number of AC coefficients per channel used by an SH degree.
pub fn rest_coeffs_for_degree(degree: usize) -> usize {
    (degree + 1) * (degree + 1) - 1
}

/// Role of a Gaussian during watermark finetuning.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
pub enum Role {
    #[default]
    Neutral,
    Wm,
    Vis,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::Neutral => "neutral",
            Role::Wm => "wm",
            Role::Vis => "vis",
        })
    }
}

impl FromStr for Role {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "neutral" => Ok(Role::Neutral),
            "wm" => Ok(Role::Wm),
            "vis" => Ok(Role::Vis),
            other => Err(Error::Parse(format!("unknown role `{other}`"))),
        }
    }
}

/// One activated Gaussian primitive.
#[derive(Debug, Clone, PartialEq)]
pub struct Gaussian {
    pub position: Vector3<f64>,
    pub scale: Vector3<f64>,
    /// Unit quaternion stored as (w, x, y, z).
    pub rotation: Vector4<f64>,
    pub opacity: f64,
    pub sh_dc: Vector3<f64>,
    pub sh_rest: [f64; SH_REST_LEN],
}

/// Pre-activation parameters: log-scale, raw quaternion, opacity logit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RawGaussian {
    pub position: [f64; 3],
    pub log_scale: [f64; 3],
    pub rotation: [f64; 4],
    pub opacity_logit: f64,
    pub sh_dc: [f64; 3],
    pub sh_rest: [f64; SH_REST_LEN],
}

impl Gaussian {
    pub fn new(position: Vector3<f64>, scale: Vector3<f64>, rotation: Vector4<f64>, opacity: f64, sh_dc: Vector3<f64>) -> Self {
        Self {
            position,
            scale,
            rotation,
            opacity,
            sh_dc,
            sh_rest: [0.0; SH_REST_LEN],
        }
    }

    /// Activate raw parameters. Quaternions already unit within tolerance are
    /// kept bit-exact; degenerate quaternions are rejected.
    pub fn from_raw(raw: &RawGaussian) -> Result<Self> {
        let q = Vector4::from(raw.rotation);
        let n = q.norm();
        if !n.is_finite() || n < QUAT_DEGENERATE {
            return Err(Error::Data(format!("degenerate quaternion (norm {n:e})")));
        }
        let rotation = if (n - 1.0).abs() <= QUAT_UNIT_TOL { q } else { q / n };
        Ok(Self {
            position: Vector3::from(raw.position),
            scale: Vector3::from(raw.log_scale).map(f64::exp),
            rotation,
            opacity: sigmoid(raw.opacity_logit),
            sh_dc: Vector3::from(raw.sh_dc),
            sh_rest: raw.sh_rest,
        })
    }

    pub fn to_raw(&self) -> RawGaussian {
        RawGaussian {
            position: self.position.into(),
            log_scale: self.scale.map(f64::ln).into(),
            rotation: self.rotation.into(),
            opacity_logit: logit(self.opacity),
            sh_dc: self.sh_dc.into(),
            sh_rest: self.sh_rest,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.position.iter().all(|v| v.is_finite())
            && self.scale.iter().all(|v| v.is_finite())
            && self.rotation.iter().all(|v| v.is_finite())
            && self.opacity.is_finite()
            && self.sh_dc.iter().all(|v| v.is_finite())
            && self.sh_rest.iter().all(|v| v.is_finite())
    }

    /// Geometric-mean footprint `exp(mean(log s))`.
    pub fn footprint(&self) -> f64 {
        (self.scale.iter().map(|s| s.ln()).sum::<f64>() / 3.0).exp()
    }

    pub fn check_invariants(&self) -> Result<()> {
        if !self.is_finite() {
            return Err(Error::Data("non-finite gaussian parameter".into()));
        }
        if self.scale.iter().any(|&s| s <= 0.0) {
            return Err(Error::Data("non-positive scale".into()));
        }
        if !(self.opacity > 0.0 && self.opacity < 1.0) {
            return Err(Error::Data(format!("opacity {} outside (0,1)", self.opacity)));
        }
        if (self.rotation.norm() - 1.0).abs() > QUAT_UNIT_TOL {
            return Err(Error::Data("rotation is not a unit quaternion".into()));
        }
        Ok(())
    }
}

/// Ordered Gaussians with per-index roles.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct GaussianModel {
    pub gaussians: Vec<Gaussian>,
    pub roles: Vec<Role>,
    pub sh_degree: usize,
}

impl GaussianModel {
    pub fn new(gaussians: Vec<Gaussian>, sh_degree: usize) -> Self {
        let roles = vec![Role::Neutral; gaussians.len()];
        Self {
            gaussians,
            roles,
            sh_degree,
        }
    }

    pub fn len(&self) -> usize {
        self.gaussians.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gaussians.is_empty()
    }

    pub fn indices_with_role(&self, role: Role) -> Vec<usize> {
        self.roles
            .iter()
            .enumerate()
            .filter(|(_, r)| **r == role)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn count_role(&self, role: Role) -> usize {
        self.roles.iter().filter(|r| **r == role).count()
    }

    /// Keep the Gaussians for which `keep` is true, preserving order.
    pub fn retain_indices(&self, keep: &[bool]) -> GaussianModel {
        assert_eq!(keep.len(), self.len());
        let mut out = GaussianModel {
            gaussians: Vec::new(),
            roles: Vec::new(),
            sh_degree: self.sh_degree,
        };
        for (i, k) in keep.iter().enumerate() {
            if *k {
                out.gaussians.push(self.gaussians[i].clone());
                out.roles.push(self.roles[i]);
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        if self.roles.len() != self.gaussians.len() {
            return Err(Error::Contract(format!(
                "{} roles for {} gaussians",
                self.roles.len(),
                self.gaussians.len()
            )));
        }
        if self.sh_degree > 3 {
            return Err(Error::Contract(format!("sh degree {} > 3", self.sh_degree)));
        }
        for (i, g) in self.gaussians.iter().enumerate() {
            g.check_invariants()
                .map_err(|e| Error::Data(format!("gaussian {i}: {e}")))?;
        }
        Ok(())
    }
}

/// Rotation matrix of a unit quaternion (w, x, y, z).
pub fn rotation_matrix(q: &Vector4<f64>) -> Matrix3<f64> {
    let (w, x, y, z) = (q[0], q[1], q[2], q[3]);
    Matrix3::new(
        1.0 - 2.0 * (y * y + z * z),
        2.0 * (x * y - w * z),
        2.0 * (x * z + w * y),
        2.0 * (x * y + w * z),
        1.0 - 2.0 * (x * x + z * z),
        2.0 * (y * z - w * x),
        2.0 * (x * z - w * y),
        2.0 * (y * z + w * x),
        1.0 - 2.0 * (x * x + y * y),
    )
}

/// Partial derivatives of [`rotation_matrix`] with respect to (w, x, y, z).
pub fn rotation_matrix_jacobian(q: &Vector4<f64>) -> [Matrix3<f64>; 4] {
    let (w, x, y, z) = (q[0], q[1], q[2], q[3]);
    [
        Matrix3::new(0.0, -z, y, z, 0.0, -x, -y, x, 0.0) * 2.0,
        Matrix3::new(0.0, y, z, y, -2.0 * x, -w, z, w, -2.0 * x) * 2.0,
        Matrix3::new(-2.0 * y, x, w, x, 0.0, z, -w, z, -2.0 * y) * 2.0,
        Matrix3::new(-2.0 * z, -w, x, w, -2.0 * z, y, x, y, 0.0) * 2.0,
    ]
}

/// `Σ = R diag(s)² Rᵀ` for a unit quaternion.
pub fn covariance(scale: &Vector3<f64>, rotation: &Vector4<f64>) -> Result<Matrix3<f64>> {
    let n = rotation.norm();
    if (n - 1.0).abs() > QUAT_UNIT_TOL {
        return Err(Error::Contract(format!("quaternion norm {n} is not unit")));
    }
    if scale.iter().any(|&s| s <= 0.0) {
        return Err(Error::Contract("scale must be positive".into()));
    }
    Ok(covariance_normalized(scale, &(rotation / n)))
}

pub(crate) fn covariance_normalized(scale: &Vector3<f64>, unit_q: &Vector4<f64>) -> Matrix3<f64> {
    let m = rotation_matrix(unit_q) * Matrix3::from_diagonal(scale);
    m * m.transpose()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_quat(rng: &mut impl Rng) -> Vector4<f64> {
        let q = Vector4::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        q / q.norm()
    }

    #[test]
    fn identity_covariance() {
        let c = covariance(&Vector3::new(1.0, 1.0, 1.0), &Vector4::new(1.0, 0.0, 0.0, 0.0)).unwrap();
        assert_eq!(c, Matrix3::identity());
        let c = covariance(&Vector3::new(2.0, 1.0, 1.0), &Vector4::new(1.0, 0.0, 0.0, 0.0)).unwrap();
        assert_eq!(c, Matrix3::from_diagonal(&Vector3::new(4.0, 1.0, 1.0)));
    }

    #[test]
    fn covariance_eigenvalues_are_squared_scales() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let s = Vector3::new(rng.random_range(0.05..3.0), rng.random_range(0.05..3.0), rng.random_range(0.05..3.0));
            let q = random_quat(&mut rng);
            let c = covariance(&s, &q).unwrap();
            assert!((c - c.transpose()).abs().max() < 1e-12);
            let mut ev: Vec<f64> = c.symmetric_eigenvalues().iter().copied().collect();
            ev.sort_by(f64::total_cmp);
            let mut s2: Vec<f64> = s.iter().map(|v| v * v).collect();
            s2.sort_by(f64::total_cmp);
            for (a, b) in ev.iter().zip(&s2) {
                assert_relative_eq!(a, b, max_relative = 1e-9, epsilon = 1e-12);
            }
            assert!(c.cholesky().is_some());
        }
    }

    #[test]
    fn non_unit_quaternion_rejected() {
        let r = covariance(&Vector3::new(1.0, 1.0, 1.0), &Vector4::new(2.0, 0.0, 0.0, 0.0));
        assert!(matches!(r, Err(Error::Contract(_))));
    }

    #[test]
    fn rotation_jacobian_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let q = random_quat(&mut rng);
        let jac = rotation_matrix_jacobian(&q);
        for k in 0..4 {
            let h = 1e-6;
            let mut qp = q;
            qp[k] += h;
            let mut qm = q;
            qm[k] -= h;
            let fd = (rotation_matrix(&qp) - rotation_matrix(&qm)) / (2.0 * h);
            assert!((fd - jac[k]).abs().max() < 1e-8);
        }
    }

    #[test]
    fn activation_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..500 {
            let v: f64 = rng.random_range(-8.0..8.0);
            assert_relative_eq!(logit(sigmoid(v)), v, epsilon = 1e-9);
            assert_relative_eq!(v.exp().ln(), v, epsilon = 1e-9);
        }
        assert_eq!(sigmoid(0.0), 0.5);
    }

    #[test]
    fn degenerate_quaternion_is_rejected() {
        let raw = RawGaussian {
            position: [0.0; 3],
            log_scale: [0.0; 3],
            rotation: [0.0, 0.0, 0.0, 1e-9],
            opacity_logit: 0.0,
            sh_dc: [0.0; 3],
            sh_rest: [0.0; SH_REST_LEN],
        };
        assert!(Gaussian::from_raw(&raw).is_err());
    }
}
