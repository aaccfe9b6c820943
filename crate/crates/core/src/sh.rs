//! Real spherical harmonics up to degree 3, in the ordering used by 3DGS.

use nalgebra::Vector3;

use crate::gaussian::{Gaussian, SH_REST_PER_CHANNEL};

pub const C0: f64 = 0.282_094_791_773_878_14;
pub const C1: f64 = 0.488_602_511_902_919_9;
pub const C2: [f64; 5] = [
    1.092_548_430_592_079_2,
    -1.092_548_430_592_079_2,
    0.315_391_565_252_520_05,
    -1.092_548_430_592_079_2,
    0.546_274_215_296_039_6,
];
pub const C3: [f64; 7] = [
    -0.590_043_589_926_643_6,
    2.890_611_442_640_554,
    -0.457_045_799_712_259_8,
    0.373_176_332_590_115_4,
    -0.457_045_799_712_259_8,
    1.445_305_721_320_277,
    -0.590_043_589_926_643_6,
];

/// Basis values for a unit direction. Index 0 is the DC term, 1..16 the
/// rest coefficients in storage order. Entries above `degree` are zero.
pub fn basis(dir: &Vector3<f64>, degree: usize) -> [f64; 16] {
    let mut b = [0.0; 16];
    b[0] = C0;
    if degree == 0 {
        return b;
    }
    let (x, y, z) = (dir.x, dir.y, dir.z);
    b[1] = -C1 * y;
    b[2] = C1 * z;
    b[3] = -C1 * x;
    if degree == 1 {
        return b;
    }
    let (xx, yy, zz) = (x * x, y * y, z * z);
    let (xy, yz, xz) = (x * y, y * z, x * z);
    b[4] = C2[0] * xy;
    b[5] = C2[1] * yz;
    b[6] = C2[2] * (2.0 * zz - xx - yy);
    b[7] = C2[3] * xz;
    b[8] = C2[4] * (xx - yy);
    if degree == 2 {
        return b;
    }
    b[9] = C3[0] * y * (3.0 * xx - yy);
    b[10] = C3[1] * xy * z;
    b[11] = C3[2] * y * (4.0 * zz - xx - yy);
    b[12] = C3[3] * z * (2.0 * zz - 3.0 * xx - 3.0 * yy);
    b[13] = C3[4] * x * (4.0 * zz - xx - yy);
    b[14] = C3[5] * z * (xx - yy);
    b[15] = C3[6] * x * (xx - 3.0 * yy);
    b
}

/// Raw (pre-offset, pre-clamp) color for one channel.
pub fn raw_channel(g: &Gaussian, channel: usize, basis: &[f64; 16], include_rest: bool) -> f64 {
    let mut v = g.sh_dc[channel] * basis[0];
    if include_rest {
        let rest = &g.sh_rest[channel * SH_REST_PER_CHANNEL..(channel + 1) * SH_REST_PER_CHANNEL];
        for (k, r) in rest.iter().enumerate() {
            v += r * basis[k + 1];
        }
    }
    v
}

/// View-dependent RGB: SH evaluation plus 0.5, clamped below at zero.
/// The returned mask is true where the clamp was inactive.
pub fn eval_color(g: &Gaussian, dir: &Vector3<f64>, degree: usize, include_rest: bool) -> ([f64; 3], [bool; 3]) {
    let b = basis(dir, degree);
    let mut c = [0.0; 3];
    let mut live = [false; 3];
    for ch in 0..3 {
        let v = raw_channel(g, ch, &b, include_rest) + 0.5;
        live[ch] = v > 0.0;
        c[ch] = v.max(0.0);
    }
    (c, live)
}
