//! Pinhole cameras and the transforms-style cameras file.
//!
//! Internally cameras use the computer-vision convention (x right, y down,
//! z forward). Files follow the Blender-synthetic convention, where
//! `transform_matrix` is camera-to-world with OpenGL axes (y up, z backward).

use std::path::Path;

use nalgebra::{Matrix3, Matrix4, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Camera {
    pub world_to_camera: Matrix4<f64>,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl Camera {
    pub fn new(world_to_camera: Matrix4<f64>, fx: f64, fy: f64, cx: f64, cy: f64, width: usize, height: usize) -> Result<Self> {
        let cam = Self {
            world_to_camera,
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        };
        cam.validate()?;
        Ok(cam)
    }

    /// Camera at `eye` looking at `target`; `up` is the approximate world up.
    pub fn look_at(eye: Vector3<f64>, target: Vector3<f64>, up: Vector3<f64>, fx: f64, fy: f64, width: usize, height: usize) -> Result<Self> {
        let forward = (target - eye).normalize();
        let right = forward.cross(&up);
        if right.norm() < 1e-9 {
            return Err(Error::Contract("look_at: up is parallel to the view direction".into()));
        }
        let right = right.normalize();
        let down = forward.cross(&right);
        let rot = Matrix3::from_rows(&[right.transpose(), down.transpose(), forward.transpose()]);
        let t = -(rot * eye);
        let mut w2c = Matrix4::identity();
        w2c.fixed_view_mut::<3, 3>(0, 0).copy_from(&rot);
        w2c.fixed_view_mut::<3, 1>(0, 3).copy_from(&t);
        Self::new(w2c, fx, fy, width as f64 / 2.0, height as f64 / 2.0, width, height)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(Error::Contract("focal lengths must be positive".into()));
        }
        if !(self.cx > 0.0 && self.cx < self.width as f64 && self.cy > 0.0 && self.cy < self.height as f64) {
            return Err(Error::Contract("principal point outside the image".into()));
        }
        if self.world_to_camera.iter().any(|v| !v.is_finite()) {
            return Err(Error::Contract("non-finite camera transform".into()));
        }
        Ok(())
    }

    pub fn rotation(&self) -> Matrix3<f64> {
        self.world_to_camera.fixed_view::<3, 3>(0, 0).into_owned()
    }

    pub fn translation(&self) -> Vector3<f64> {
        self.world_to_camera.fixed_view::<3, 1>(0, 3).into_owned()
    }

    /// Camera center in world coordinates.
    pub fn center(&self) -> Vector3<f64> {
        -(self.rotation().transpose() * self.translation())
    }

    pub fn to_camera(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation() * p + self.translation()
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    /// Orbit the camera about the point `depth` ahead on its optical axis:
    /// `yaw` turns about the camera's y axis, `pitch` about its x axis
    /// (radians). Intrinsics are kept.
    pub fn orbit(&self, depth: f64, yaw: f64, pitch: f64) -> Camera {
        let r = (nalgebra::Rotation3::from_axis_angle(&Vector3::x_axis(), pitch) * nalgebra::Rotation3::from_axis_angle(&Vector3::y_axis(), yaw)).into_inner();
        let pivot = Vector3::new(0.0, 0.0, depth);
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&r);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&(pivot - r * pivot));
        Camera {
            world_to_camera: m * self.world_to_camera,
            ..self.clone()
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct FrameRecord {
    transform_matrix: [[f64; 4]; 4],
    #[serde(skip_serializing_if = "Option::is_none")]
    fl_x: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    fl_y: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    cx: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    cy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    w: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    h: Option<usize>,
}

#[derive(Debug, Serialize, Deserialize, Default)]
struct TransformsFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    fl_x: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    fl_y: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    cx: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    cy: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    w: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    h: Option<usize>,
    frames: Vec<FrameRecord>,
}

fn gl_flip() -> Matrix4<f64> {
    Matrix4::from_diagonal(&nalgebra::Vector4::new(1.0, -1.0, -1.0, 1.0))
}

pub fn cameras_from_json(text: &str) -> Result<Vec<Camera>> {
    let file: TransformsFile = serde_json::from_str(text)?;
    let mut out = Vec::with_capacity(file.frames.len());
    for (i, fr) in file.frames.iter().enumerate() {
        let pick = |a: Option<f64>, b: Option<f64>, name: &str| {
            a.or(b).ok_or_else(|| Error::Parse(format!("frame {i}: missing `{name}`")))
        };
        let fx = pick(fr.fl_x, file.fl_x, "fl_x")?;
        let fy = pick(fr.fl_y, file.fl_y, "fl_y")?;
        let cx = pick(fr.cx, file.cx, "cx")?;
        let cy = pick(fr.cy, file.cy, "cy")?;
        let w = fr.w.or(file.w).ok_or_else(|| Error::Parse(format!("frame {i}: missing `w`")))?;
        let h = fr.h.or(file.h).ok_or_else(|| Error::Parse(format!("frame {i}: missing `h`")))?;
        let rows = fr.transform_matrix;
        let c2w_gl = Matrix4::from_fn(|r, c| rows[r][c]);
        let c2w = c2w_gl * gl_flip();
        let w2c = c2w
            .try_inverse()
            .ok_or_else(|| Error::Data(format!("frame {i}: singular transform")))?;
        out.push(Camera::new(w2c, fx, fy, cx, cy, w, h).map_err(|e| Error::Data(format!("frame {i}: {e}")))?);
    }
    Ok(out)
}

pub fn cameras_to_json(cameras: &[Camera]) -> Result<String> {
    let mut file = TransformsFile::default();
    for cam in cameras {
        let c2w = cam
            .world_to_camera
            .try_inverse()
            .ok_or_else(|| Error::Data("singular camera transform".into()))?;
        let gl = c2w * gl_flip();
        let mut rows = [[0.0; 4]; 4];
        for (r, row) in rows.iter_mut().enumerate() {
            for (c, v) in row.iter_mut().enumerate() {
                *v = gl[(r, c)];
            }
        }
        file.frames.push(FrameRecord {
            transform_matrix: rows,
            fl_x: Some(cam.fx),
            fl_y: Some(cam.fy),
            cx: Some(cam.cx),
            cy: Some(cam.cy),
            w: Some(cam.width),
            h: Some(cam.height),
        });
    }
    Ok(serde_json::to_string_pretty(&file)?)
}

pub fn load_cameras(path: impl AsRef<Path>) -> Result<Vec<Camera>> {
    cameras_from_json(&std::fs::read_to_string(path)?)
}

pub fn save_cameras(cameras: &[Camera], path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, cameras_to_json(cameras)?)?;
    Ok(())
}
