//! Result files: raw `f64` dumps with JSON sidecars and CSV tables.
//!
//! A dump `name.f64` holds little-endian 64-bit floats; `name.json`
//! describes its shape. Nodal fields have shape
//! `[components, node types, dims...]` and quadrature fields
//! `[components, points per pixel, dims...]`, first axis slowest.

use std::fs;
use std::io;
use std::path::Path;

use fehomog_core::mandel::mandel_pairs;
use fehomog_core::{Discretization, Physics};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub name: String,
    pub dtype: String,
    pub byte_order: String,
    pub shape: Vec<usize>,
    pub axes: Vec<String>,
    pub components: Vec<String>,
    pub units: String,
}

/// Kind of field being dumped.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FieldKind {
    Fluctuation,
    Gradient,
    Flux,
}

impl Sidecar {
    pub fn for_field(disc: &Discretization, name: &str, kind: FieldKind) -> Self {
        let l = disc.layout();
        let dim = disc.dim();
        let (components, per_pixel, inner_axis) = match kind {
            FieldKind::Fluctuation => (axis_labels(dim, disc.field_components()), l.nodes_per_pixel(), "node_type"),
            _ => (gradient_labels(disc), l.quad_per_pixel(), "quad_point"),
        };
        let units = match (disc.physics(), kind) {
            (Physics::Thermal, FieldKind::Fluctuation) => "temperature",
            (Physics::Thermal, FieldKind::Gradient) => "temperature / length",
            (Physics::Thermal, FieldKind::Flux) => "conductivity × temperature / length",
            (Physics::Elasticity, FieldKind::Fluctuation) => "length",
            (Physics::Elasticity, FieldKind::Gradient) => "1 (Mandel, shear entries scaled by √2)",
            (Physics::Elasticity, FieldKind::Flux) => "modulus (Mandel, shear entries scaled by √2)",
        };
        let mut shape = vec![components.len(), per_pixel];
        shape.extend_from_slice(l.cell().dims());
        let mut axes = vec!["component".to_string(), inner_axis.to_string()];
        axes.extend((0..dim).map(|a| format!("x{}", a + 1)));
        Self {
            name: name.to_string(),
            dtype: "f64".into(),
            byte_order: "little-endian".into(),
            shape,
            axes,
            components,
            units: units.into(),
        }
    }

    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn axis_labels(dim: usize, count: usize) -> Vec<String> {
    if count == 1 {
        return vec!["u".into()];
    }
    (1..=dim).map(|a| format!("u{a}")).collect()
}

/// Component names of gradient-like fields: `1, 2[, 3]` or Mandel pairs.
pub fn gradient_labels(disc: &Discretization) -> Vec<String> {
    match disc.physics() {
        Physics::Thermal => (1..=disc.dim()).map(|a| a.to_string()).collect(),
        Physics::Elasticity => mandel_pairs(disc.dim())
            .iter()
            .map(|(a, b)| format!("{}{}", a + 1, b + 1))
            .collect(),
    }
}

pub fn write_dump(dir: &Path, sidecar: &Sidecar, values: &[f64]) -> io::Result<()> {
    assert_eq!(sidecar.len(), values.len(), "dump shape");
    let mut bytes = Vec::with_capacity(values.len() * 8);
    for v in values {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(dir.join(format!("{}.f64", sidecar.name)), bytes)?;
    let json = serde_json::to_string_pretty(sidecar).map_err(io::Error::other)?;
    fs::write(dir.join(format!("{}.json", sidecar.name)), json + "\n")
}

pub fn read_dump(dir: &Path, name: &str) -> io::Result<(Sidecar, Vec<f64>)> {
    let sidecar: Sidecar =
        serde_json::from_slice(&fs::read(dir.join(format!("{name}.json")))?).map_err(io::Error::other)?;
    let bytes = fs::read(dir.join(format!("{name}.f64")))?;
    if bytes.len() != sidecar.len() * 8 {
        return Err(io::Error::new(
            io::ErrorKind::InvalidData,
            format!("{name}.f64 has {} bytes, sidecar expects {}", bytes.len(), sidecar.len() * 8),
        ));
    }
    let values = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    Ok((sidecar, values))
}

/// Shortest representation that parses back to the same `f64`, in
/// exponent form outside `[1e-4, 1e15)`.
pub fn fmt_f64(v: f64) -> String {
    let a = v.abs();
    if a == 0.0 || (1e-4..1e15).contains(&a) || !v.is_finite() {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

/// Writes rows with a header.
pub fn write_csv(path: &Path, header: &[String], rows: &[Vec<String>]) -> io::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush()
}

pub fn read_csv(path: &Path) -> io::Result<(Vec<String>, Vec<Vec<String>>)> {
    let mut r = csv::Reader::from_path(path)?;
    let header = r.headers()?.iter().map(String::from).collect();
    let rows = r
        .records()
        .map(|rec| rec.map(|rec| rec.iter().map(String::from).collect()))
        .collect::<Result<_, _>>()?;
    Ok((header, rows))
}
