//! Binary field/material dumps with a small text header, plus CSV line probes.
//!
//! Layout: a UTF-8 header terminated by a line containing only `---`,
//! followed by flat little-endian arrays in x-fastest order
//! (index = i + nx*(j + ny*k)).

use crate::grid::Grid3D;
use crate::material::{CellClass, MaterialMap};
use crate::solver::{FieldData, FieldSolution};
use crate::vec3::Vec3;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DumpError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed dump header: {0}")]
    BadHeader(String),
    #[error("dump payload truncated")]
    Truncated,
    #[error("malformed line spec '{0}': expected x0,y0,z0:x1,y1,z1:n")]
    BadLineSpec(String),
}

const FIELD_MAGIC: &str = "trapsim-field-dump v1";
const MATERIAL_MAGIC: &str = "trapsim-material-dump v1";

fn write_header(w: &mut impl Write, magic: &str, grid: &Grid3D, fields: &str) -> Result<(), DumpError> {
    writeln!(w, "{magic}")?;
    writeln!(w, "dims: {} {} {}", grid.dims[0], grid.dims[1], grid.dims[2])?;
    writeln!(w, "spacing: {:e}", grid.h)?;
    let o = grid.origin();
    writeln!(w, "origin: {:e} {:e} {:e}", o.x, o.y, o.z)?;
    writeln!(w, "layout: x-fastest")?;
    writeln!(w, "fields: {fields}")?;
    writeln!(w, "---")?;
    Ok(())
}

/// Write the electric field (three f64 arrays; complex solutions dump
/// component magnitudes).
pub fn write_field_dump(path: &Path, sol: &FieldSolution) -> Result<(), DumpError> {
    let file = std::fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    write_header(&mut w, FIELD_MAGIC, &sol.grid, "ex ey ez (f64)")?;
    for axis in 0..3 {
        match &sol.e[axis] {
            FieldData::Real(v) => {
                for &x in v {
                    w.write_all(&x.to_le_bytes())?;
                }
            }
            FieldData::Complex(v) => {
                for x in v {
                    w.write_all(&x.norm().to_le_bytes())?;
                }
            }
        }
    }
    Ok(())
}

/// Write per-cell material classes (u8: 0 vacuum, 1 dielectric, 2 conductor).
pub fn write_material_dump(path: &Path, map: &MaterialMap) -> Result<(), DumpError> {
    let file = std::fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    write_header(&mut w, MATERIAL_MAGIC, map.grid(), "material_class (u8)")?;
    let bytes: Vec<u8> = (0..map.grid().ncells())
        .map(|c| match map.class(c) {
            CellClass::Vacuum => 0u8,
            CellClass::Dielectric => 1,
            CellClass::Conductor => 2,
        })
        .collect();
    w.write_all(&bytes)?;
    Ok(())
}

/// A field dump loaded back into memory.
pub struct FieldDump {
    pub grid: Grid3D,
    pub e: [Vec<f64>; 3],
}

pub fn read_field_dump(path: &Path) -> Result<FieldDump, DumpError> {
    let file = std::fs::File::open(path)?;
    let mut r = BufReader::new(file);
    let mut header = Vec::new();
    loop {
        let mut line = String::new();
        if r.read_line(&mut line)? == 0 {
            return Err(DumpError::Truncated);
        }
        let t = line.trim_end().to_string();
        if t == "---" {
            break;
        }
        header.push(t);
    }
    if header.first().map(String::as_str) != Some(FIELD_MAGIC) {
        return Err(DumpError::BadHeader("missing magic".into()));
    }
    let get = |key: &str| -> Result<String, DumpError> {
        header
            .iter()
            .find_map(|l| l.strip_prefix(&format!("{key}: ")).map(str::to_string))
            .ok_or_else(|| DumpError::BadHeader(format!("missing '{key}'")))
    };
    let dims_s = get("dims")?;
    let mut dims = [0usize; 3];
    for (slot, tok) in dims.iter_mut().zip(dims_s.split_whitespace()) {
        *slot = tok.parse().map_err(|_| DumpError::BadHeader("bad dims".into()))?;
    }
    let h: f64 = get("spacing")?.parse().map_err(|_| DumpError::BadHeader("bad spacing".into()))?;
    let origin_s = get("origin")?;
    let mut o = [0f64; 3];
    for (slot, tok) in o.iter_mut().zip(origin_s.split_whitespace()) {
        *slot = tok.parse().map_err(|_| DumpError::BadHeader("bad origin".into()))?;
    }
    let grid = Grid3D::new(Vec3::new(o[0], o[1], o[2]), h, dims);
    let n = grid.ncells();
    let mut payload = Vec::new();
    r.read_to_end(&mut payload)?;
    if payload.len() < 3 * n * 8 {
        return Err(DumpError::Truncated);
    }
    let mut e = [vec![0.0; n], vec![0.0; n], vec![0.0; n]];
    for (axis, field) in e.iter_mut().enumerate() {
        let base = axis * n * 8;
        for (c, v) in field.iter_mut().enumerate() {
            let mut b = [0u8; 8];
            b.copy_from_slice(&payload[base + c * 8..base + c * 8 + 8]);
            *v = f64::from_le_bytes(b);
        }
    }
    Ok(FieldDump { grid, e })
}

/// Parse "x0,y0,z0:x1,y1,z1:n" (meters) into n probe points.
pub fn parse_line_spec(spec: &str) -> Result<Vec<Vec3>, DumpError> {
    let parts: Vec<&str> = spec.split(':').collect();
    if parts.len() != 3 {
        return Err(DumpError::BadLineSpec(spec.into()));
    }
    let parse_point = |s: &str| -> Result<Vec3, DumpError> {
        let c: Vec<f64> = s
            .split(',')
            .map(|t| t.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|_| DumpError::BadLineSpec(spec.into()))?;
        if c.len() != 3 {
            return Err(DumpError::BadLineSpec(spec.into()));
        }
        Ok(Vec3::new(c[0], c[1], c[2]))
    };
    let a = parse_point(parts[0])?;
    let b = parse_point(parts[1])?;
    let n: usize = parts[2].trim().parse().map_err(|_| DumpError::BadLineSpec(spec.into()))?;
    if n < 2 {
        return Err(DumpError::BadLineSpec(spec.into()));
    }
    Ok((0..n)
        .map(|i| a + (b - a) * (i as f64 / (n - 1) as f64))
        .collect())
}

/// CSV probe along a line through a loaded dump:
/// `x,y,z,ex,ey,ez,e_mag` per sample point inside the domain.
pub fn probe_to_csv(dump: &FieldDump, points: &[Vec3]) -> String {
    let mut out = String::from("x_m,y_m,z_m,ex_v_per_m,ey_v_per_m,ez_v_per_m,e_mag_v_per_m\n");
    for &p in points {
        let ex = dump.grid.trilinear(&dump.e[0], p);
        let ey = dump.grid.trilinear(&dump.e[1], p);
        let ez = dump.grid.trilinear(&dump.e[2], p);
        if let (Some(ex), Some(ey), Some(ez)) = (ex, ey, ez) {
            let mag = (ex * ex + ey * ey + ez * ez).sqrt();
            out.push_str(&format!("{},{},{},{},{},{},{}\n", p.x, p.y, p.z, ex, ey, ez, mag));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_spec_parsing() {
        let pts = parse_line_spec("0,0,0:1e-3,0,0:11").unwrap();
        assert_eq!(pts.len(), 11);
        assert!((pts[10].x - 1e-3).abs() < 1e-15);
        assert!((pts[5].x - 0.5e-3).abs() < 1e-15);
        assert!(parse_line_spec("junk").is_err());
        assert!(parse_line_spec("0,0:1,1:5").is_err());
    }
}
