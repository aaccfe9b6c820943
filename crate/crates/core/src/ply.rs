//! Binary little-endian PLY in the 3DGS property layout, plus the role sidecar.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::gaussian::{Gaussian, GaussianModel, RawGaussian, Role, SH_REST_LEN, SH_REST_PER_CHANNEL};

#[derive(Debug, Clone, Copy, PartialEq)]
enum Scalar {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl Scalar {
    fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "char" | "int8" => Scalar::I8,
            "uchar" | "uint8" => Scalar::U8,
            "short" | "int16" => Scalar::I16,
            "ushort" | "uint16" => Scalar::U16,
            "int" | "int32" => Scalar::I32,
            "uint" | "uint32" => Scalar::U32,
            "float" | "float32" => Scalar::F32,
            "double" | "float64" => Scalar::F64,
            other => return Err(Error::Parse(format!("unsupported property type `{other}`"))),
        })
    }

    fn size(self) -> usize {
        match self {
            Scalar::I8 | Scalar::U8 => 1,
            Scalar::I16 | Scalar::U16 => 2,
            Scalar::I32 | Scalar::U32 | Scalar::F32 => 4,
            Scalar::F64 => 8,
        }
    }

    fn read(self, b: &[u8]) -> f64 {
        match self {
            Scalar::I8 => b[0] as i8 as f64,
            Scalar::U8 => b[0] as f64,
            Scalar::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::I32 => i32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::U32 => u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::F32 => f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::F64 => f64::from_le_bytes(b[..8].try_into().unwrap()),
        }
    }
}

struct Header {
    count: usize,
    props: Vec<(String, Scalar)>,
}

fn read_header(r: &mut impl BufRead) -> Result<Header> {
    let mut line = String::new();
    let mut next = |line: &mut String| -> Result<()> {
        line.clear();
        if r.read_line(line)? == 0 {
            return Err(Error::Parse("unexpected end of PLY header".into()));
        }
        Ok(())
    };
    next(&mut line)?;
    if line.trim() != "ply" {
        return Err(Error::Parse("missing `ply` magic".into()));
    }
    let mut count = None;
    let mut props = Vec::new();
    let mut in_vertex = false;
    let mut format_ok = false;
    loop {
        next(&mut line)?;
        let toks: Vec<&str> = line.split_whitespace().collect();
        match toks.as_slice() {
            ["end_header"] => break,
            ["format", fmt, _] => {
                if *fmt != "binary_little_endian" {
                    return Err(Error::Parse(format!("unsupported PLY format `{fmt}`")));
                }
                format_ok = true;
            }
            ["comment", ..] | ["obj_info", ..] | [] => {}
            ["element", name, n] => {
                in_vertex = *name == "vertex";
                if in_vertex {
                    count = Some(n.parse::<usize>().map_err(|_| Error::Parse(format!("bad vertex count `{n}`")))?);
                } else if count.is_none() {
                    return Err(Error::Parse(format!("element `{name}` before vertex is not supported")));
                }
            }
            ["property", "list", ..] => {
                if in_vertex {
                    return Err(Error::Parse("list properties on vertex are not supported".into()));
                }
            }
            ["property", ty, name] => {
                if in_vertex {
                    props.push((name.to_string(), Scalar::parse(ty)?));
                }
            }
            _ => return Err(Error::Parse(format!("unrecognized header line `{}`", line.trim()))),
        }
    }
    if !format_ok {
        return Err(Error::Parse("missing format line".into()));
    }
    let count = count.ok_or_else(|| Error::Parse("missing vertex element".into()))?;
    Ok(Header { count, props })
}

fn degree_from_rest(n: usize) -> Result<usize> {
    match n {
        0 => Ok(0),
        9 => Ok(1),
        24 => Ok(2),
        45 => Ok(3),
        _ => Err(Error::Parse(format!("{n} f_rest properties do not match any SH degree"))),
    }
}

fn rest_per_channel(degree: usize) -> usize {
    (degree + 1) * (degree + 1) - 1
}

/// Raw (pre-activation) records as stored in the file.
pub fn read_ply_raw(mut r: impl BufRead) -> Result<(Vec<RawGaussian>, usize)> {
    let header = read_header(&mut r)?;
    let find = |name: &str| header.props.iter().position(|(n, _)| n == name);
    let need = |name: &str| find(name).ok_or_else(|| Error::Parse(format!("missing property `{name}`")));

    let pos = [need("x")?, need("y")?, need("z")?];
    let dc = [need("f_dc_0")?, need("f_dc_1")?, need("f_dc_2")?];
    let opa = need("opacity")?;
    let sca = [need("scale_0")?, need("scale_1")?, need("scale_2")?];
    let rot = [need("rot_0")?, need("rot_1")?, need("rot_2")?, need("rot_3")?];
    let n_rest = header.props.iter().filter(|(n, _)| n.starts_with("f_rest_")).count();
    let degree = degree_from_rest(n_rest)?;
    let per = rest_per_channel(degree);
    let rest: Vec<usize> = (0..n_rest).map(|k| need(&format!("f_rest_{k}"))).collect::<Result<_>>()?;

    let mut offsets = Vec::with_capacity(header.props.len());
    let mut stride = 0;
    for (_, t) in &header.props {
        offsets.push(stride);
        stride += t.size();
    }
    let field = |rec: &[u8], p: usize| header.props[p].1.read(&rec[offsets[p]..]);

    let mut out = Vec::with_capacity(header.count);
    let mut rec = vec![0u8; stride];
    for i in 0..header.count {
        r.read_exact(&mut rec)
            .map_err(|_| Error::Parse(format!("truncated vertex data at record {i}")))?;
        let mut g = RawGaussian {
            position: pos.map(|p| field(&rec, p)),
            log_scale: sca.map(|p| field(&rec, p)),
            rotation: rot.map(|p| field(&rec, p)),
            opacity_logit: field(&rec, opa),
            sh_dc: dc.map(|p| field(&rec, p)),
            sh_rest: [0.0; SH_REST_LEN],
        };
        for c in 0..3 {
            for k in 0..per {
                g.sh_rest[c * SH_REST_PER_CHANNEL + k] = field(&rec, rest[c * per + k]);
            }
        }
        let finite = g.position.iter().chain(&g.log_scale).chain(&g.rotation).chain(&g.sh_dc).chain(&g.sh_rest).all(|v| v.is_finite())
            && g.opacity_logit.is_finite();
        if !finite {
            return Err(Error::Data(format!("non-finite field in gaussian {i}")));
        }
        out.push(g);
    }
    Ok((out, degree))
}

pub fn read_ply(r: impl BufRead) -> Result<GaussianModel> {
    let (raws, degree) = read_ply_raw(r)?;
    let gaussians = raws
        .iter()
        .enumerate()
        .map(|(i, raw)| Gaussian::from_raw(raw).map_err(|e| Error::Data(format!("gaussian {i}: {e}"))))
        .collect::<Result<Vec<_>>>()?;
    Ok(GaussianModel::new(gaussians, degree))
}

/// Load a model; roles are all Neutral (see [`load_model`] for the sidecar).
pub fn load_ply(path: impl AsRef<Path>) -> Result<GaussianModel> {
    let f = File::open(path.as_ref())?;
    read_ply(BufReader::new(f))
}

pub fn write_ply(model: &GaussianModel, mut w: impl Write) -> Result<()> {
    let per = rest_per_channel(model.sh_degree);
    let mut header = String::from("ply\nformat binary_little_endian 1.0\n");
    header.push_str(&format!("element vertex {}\n", model.len()));
    let mut names: Vec<String> = ["x", "y", "z", "nx", "ny", "nz", "f_dc_0", "f_dc_1", "f_dc_2"].iter().map(|s| s.to_string()).collect();
    names.extend((0..3 * per).map(|k| format!("f_rest_{k}")));
    names.push("opacity".into());
    names.extend((0..3).map(|k| format!("scale_{k}")));
    names.extend((0..4).map(|k| format!("rot_{k}")));
    for n in &names {
        header.push_str(&format!("property float {n}\n"));
    }
    header.push_str("end_header\n");
    w.write_all(header.as_bytes())?;

    let mut rec: Vec<f32> = Vec::with_capacity(names.len());
    for g in &model.gaussians {
        let raw = g.to_raw();
        rec.clear();
        rec.extend(raw.position.iter().map(|&v| v as f32));
        rec.extend([0.0f32; 3]);
        rec.extend(raw.sh_dc.iter().map(|&v| v as f32));
        for c in 0..3 {
            for k in 0..per {
                rec.push(raw.sh_rest[c * SH_REST_PER_CHANNEL + k] as f32);
            }
        }
        rec.push(raw.opacity_logit as f32);
        rec.extend(raw.log_scale.iter().map(|&v| v as f32));
        rec.extend(raw.rotation.iter().map(|&v| v as f32));
        for v in &rec {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

/// Save the PLY and the role sidecar next to it.
pub fn save_ply(model: &GaussianModel, path: impl AsRef<Path>) -> Result<()> {
    model.validate()?;
    let path = path.as_ref();
    let mut w = BufWriter::new(File::create(path)?);
    write_ply(model, &mut w)?;
    w.flush()?;
    save_roles(&model.roles, roles_path(path))
}

/// `<dir>/<stem>.roles.txt` for a model path `<dir>/<stem>.ply`.
pub fn roles_path(model_path: impl AsRef<Path>) -> PathBuf {
    let p = model_path.as_ref();
    let stem = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    p.with_file_name(format!("{stem}.roles.txt"))
}

pub fn save_roles(roles: &[Role], path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for (i, r) in roles.iter().enumerate() {
        writeln!(w, "{i}:{r}")?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_roles(path: impl AsRef<Path>, n: usize) -> Result<Vec<Role>> {
    let text = std::fs::read_to_string(path)?;
    let mut roles = vec![Role::Neutral; n];
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let (idx, role) = line
            .split_once(':')
            .ok_or_else(|| Error::Parse(format!("roles line {}: expected `index:role`", lineno + 1)))?;
        let idx: usize = idx
            .trim()
            .parse()
            .map_err(|_| Error::Parse(format!("roles line {}: bad index", lineno + 1)))?;
        if idx >= n {
            return Err(Error::Data(format!("roles line {}: index {idx} out of range for {n} gaussians", lineno + 1)));
        }
        roles[idx] = role.parse()?;
    }
    Ok(roles)
}

/// Load a model and, when present, its role sidecar.
pub fn load_model(path: impl AsRef<Path>) -> Result<GaussianModel> {
    let mut model = load_ply(path.as_ref())?;
    let rp = roles_path(path.as_ref());
    if rp.exists() {
        model.roles = load_roles(rp, model.len())?;
    }
    Ok(model)
}
