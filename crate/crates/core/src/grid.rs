//! Periodic cell geometry, discretisation stencils and periodic indexing.
//!
//! A grid is a periodic repetition of one stencil per pixel (voxel). Each
//! stencil carries `Nn` node types and a fixed set of quadrature points; a
//! quadrature point lists the nodes whose basis functions touch it, as
//! `(pixel offset, node type, ∂φ/∂x)` triples. Offsets are `0` or `1` per axis
//! and wrap around the cell.
//!
//! Indexing conventions used throughout the crate:
//! - pixels are flattened in C order (last axis fastest);
//! - node `I = t · N_p + pixel` for node type `t`;
//! - quadrature point `Q = q · N_p + pixel` for local point `q`;
//! - field components are stored component-major (`value[c · N + i]`).

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::error::{Error, Result};
use crate::math::sqrt;

/// Maximum spatial dimension.
pub const MAX_DIM: usize = 3;

/// Periodic rectangular cell with a regular pixel grid.
#[derive(Clone, Debug, PartialEq)]
pub struct CellSpec {
    dims: Vec<usize>,
    lengths: Vec<f64>,
}

impl CellSpec {
    pub fn new(dims: &[usize], lengths: &[f64]) -> Result<Self> {
        if !(2..=MAX_DIM).contains(&dims.len()) {
            return Err(Error::InvalidCell(format!(
                "expected 2 or 3 axes, got {}",
                dims.len()
            )));
        }
        if lengths.len() != dims.len() {
            return Err(Error::InvalidCell(format!(
                "{} pixel counts but {} lengths",
                dims.len(),
                lengths.len()
            )));
        }
        if let Some(n) = dims.iter().find(|&&n| n < 2) {
            return Err(Error::InvalidCell(format!(
                "pixel count {n} below the minimum of 2"
            )));
        }
        if let Some(l) = lengths.iter().find(|&&l| !(l > 0.0 && l.is_finite())) {
            return Err(Error::InvalidCell(format!("cell length {l} must be positive")));
        }
        Ok(Self {
            dims: dims.to_vec(),
            lengths: lengths.to_vec(),
        })
    }

    /// Unit-length cell.
    pub fn unit(dims: &[usize]) -> Result<Self> {
        Self::new(dims, &vec![1.0; dims.len()])
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dims.len()
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn lengths(&self) -> &[f64] {
        &self.lengths
    }

    pub fn pixel_count(&self) -> usize {
        self.dims.iter().product()
    }

    /// Pixel edge length along `axis`.
    pub fn spacing(&self, axis: usize) -> f64 {
        self.lengths[axis] / self.dims[axis] as f64
    }

    pub fn pixel_volume(&self) -> f64 {
        (0..self.dim()).map(|a| self.spacing(a)).product()
    }

    pub fn volume(&self) -> f64 {
        self.lengths.iter().product()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum StencilKind {
    /// One node per pixel, one bilinear element with 2×2 Gauss points.
    BilinearQuad,
    /// One node per pixel, two linear triangles with centroid points.
    TwoTriangles,
    /// Corner and centre nodes, four linear triangles with centroid points.
    FourTrianglesTwoNode,
    /// One node per voxel, one trilinear hexahedron with 2×2×2 Gauss points.
    TrilinearHex,
}

impl StencilKind {
    pub const ALL: [StencilKind; 4] = [
        StencilKind::BilinearQuad,
        StencilKind::TwoTriangles,
        StencilKind::FourTrianglesTwoNode,
        StencilKind::TrilinearHex,
    ];

    pub fn dim(self) -> usize {
        match self {
            StencilKind::TrilinearHex => 3,
            _ => 2,
        }
    }

    pub fn nodes_per_pixel(self) -> usize {
        match self {
            StencilKind::FourTrianglesTwoNode => 2,
            _ => 1,
        }
    }

    pub fn quad_per_pixel(self) -> usize {
        match self {
            StencilKind::BilinearQuad | StencilKind::FourTrianglesTwoNode => 4,
            StencilKind::TwoTriangles => 2,
            StencilKind::TrilinearHex => 8,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            StencilKind::BilinearQuad => "bilinear-quad",
            StencilKind::TwoTriangles => "two-triangles",
            StencilKind::FourTrianglesTwoNode => "four-triangles-two-node",
            StencilKind::TrilinearHex => "trilinear-hex",
        }
    }
}

impl fmt::Display for StencilKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for StencilKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        StencilKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidCell(format!("unknown stencil `{s}`")))
    }
}

/// A node touching a quadrature point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NodeRef {
    /// Pixel offset relative to the pixel owning the quadrature point.
    pub offset: [usize; MAX_DIM],
    pub node_type: usize,
    /// Basis-function gradient at the quadrature point (1/length).
    pub grad: [f64; MAX_DIM],
}

#[derive(Clone, Debug, PartialEq)]
pub struct QuadPoint {
    /// Position inside the pixel as fractions of the pixel edges.
    pub local: [f64; MAX_DIM],
    /// Quadrature weight (volume units).
    pub weight: f64,
    pub nodes: Vec<NodeRef>,
}

/// Per-pixel discretisation pattern, precomputed for a given pixel shape.
#[derive(Clone, Debug, PartialEq)]
pub struct Stencil {
    kind: StencilKind,
    /// Local positions of the node types (fractions of the pixel edges).
    node_local: Vec<[f64; MAX_DIM]>,
    quad: Vec<QuadPoint>,
}

impl Stencil {
    fn build(kind: StencilKind, h: [f64; MAX_DIM], pixel_volume: f64) -> Self {
        match kind {
            StencilKind::BilinearQuad => tensor_product(kind, 2, h, pixel_volume),
            StencilKind::TrilinearHex => tensor_product(kind, 3, h, pixel_volume),
            StencilKind::TwoTriangles => {
                let c = |o0, o1| ([o0, o1, 0], 0usize);
                let tris = [
                    [c(0, 0), c(1, 0), c(0, 1)],
                    [c(1, 1), c(0, 1), c(1, 0)],
                ];
                let node_local = vec![[0.0; MAX_DIM]];
                let quad = tris
                    .iter()
                    .map(|t| triangle_point(t, &node_local, h, pixel_volume / 2.0))
                    .collect();
                Self {
                    kind,
                    node_local,
                    quad,
                }
            }
            StencilKind::FourTrianglesTwoNode => {
                let c = |o0, o1| ([o0, o1, 0], 0usize);
                let centre = ([0, 0, 0], 1usize);
                let tris = [
                    [c(0, 0), c(1, 0), centre],
                    [c(1, 0), c(1, 1), centre],
                    [c(1, 1), c(0, 1), centre],
                    [c(0, 1), c(0, 0), centre],
                ];
                let node_local = vec![[0.0; MAX_DIM], [0.5, 0.5, 0.0]];
                let quad = tris
                    .iter()
                    .map(|t| triangle_point(t, &node_local, h, pixel_volume / 4.0))
                    .collect();
                Self {
                    kind,
                    node_local,
                    quad,
                }
            }
        }
    }

    pub fn kind(&self) -> StencilKind {
        self.kind
    }

    pub fn nodes_per_pixel(&self) -> usize {
        self.node_local.len()
    }

    pub fn node_local(&self) -> &[[f64; MAX_DIM]] {
        &self.node_local
    }

    pub fn quad_points(&self) -> &[QuadPoint] {
        &self.quad
    }
}

fn tensor_product(kind: StencilKind, dim: usize, h: [f64; MAX_DIM], pixel_volume: f64) -> Stencil {
    let g = 0.5 / sqrt(3.0);
    let gauss = [0.5 - g, 0.5 + g];
    let n_points = 1 << dim;
    let n_nodes = 1 << dim;
    let bit = |code: usize, axis: usize| (code >> (dim - 1 - axis)) & 1;
    let mut quad = Vec::with_capacity(n_points);
    for qc in 0..n_points {
        let mut local = [0.0; MAX_DIM];
        for (a, l) in local.iter_mut().enumerate().take(dim) {
            *l = gauss[bit(qc, a)];
        }
        let mut nodes = Vec::with_capacity(n_nodes);
        for nc in 0..n_nodes {
            let mut offset = [0usize; MAX_DIM];
            for (a, o) in offset.iter_mut().enumerate().take(dim) {
                *o = bit(nc, a);
            }
            // φ = Π_a L_{o_a}(ξ_a), L_0 = 1 - ξ, L_1 = ξ.
            let shape = |a: usize| if offset[a] == 1 { local[a] } else { 1.0 - local[a] };
            let slope = |a: usize| if offset[a] == 1 { 1.0 / h[a] } else { -1.0 / h[a] };
            let mut grad = [0.0; MAX_DIM];
            for (b, gb) in grad.iter_mut().enumerate().take(dim) {
                *gb = (0..dim)
                    .map(|a| if a == b { slope(a) } else { shape(a) })
                    .product();
            }
            nodes.push(NodeRef {
                offset,
                node_type: 0,
                grad,
            });
        }
        quad.push(QuadPoint {
            local,
            weight: pixel_volume / n_points as f64,
            nodes,
        });
    }
    Stencil {
        kind,
        node_local: vec![[0.0; MAX_DIM]],
        quad,
    }
}

/// Centroid quadrature point of a linear triangle given by three
/// `(offset, node type)` vertices.
fn triangle_point(
    verts: &[([usize; MAX_DIM], usize); 3],
    node_local: &[[f64; MAX_DIM]],
    h: [f64; MAX_DIM],
    weight: f64,
) -> QuadPoint {
    let pos = |v: &([usize; MAX_DIM], usize)| {
        let l = node_local[v.1];
        [(v.0[0] as f64 + l[0]), (v.0[1] as f64 + l[1])]
    };
    let p: [[f64; 2]; 3] = [pos(&verts[0]), pos(&verts[1]), pos(&verts[2])];
    // Physical edge vectors; J = [p1 - p0, p2 - p0] as columns.
    let j00 = (p[1][0] - p[0][0]) * h[0];
    let j10 = (p[1][1] - p[0][1]) * h[1];
    let j01 = (p[2][0] - p[0][0]) * h[0];
    let j11 = (p[2][1] - p[0][1]) * h[1];
    let det = j00 * j11 - j01 * j10;
    // Rows of J⁻¹ are the gradients of barycentric λ1 and λ2.
    let g1 = [j11 / det, -j01 / det];
    let g2 = [-j10 / det, j00 / det];
    let g0 = [-g1[0] - g2[0], -g1[1] - g2[1]];
    let grads = [g0, g1, g2];
    let local = [
        (p[0][0] + p[1][0] + p[2][0]) / 3.0,
        (p[0][1] + p[1][1] + p[2][1]) / 3.0,
        0.0,
    ];
    let nodes = verts
        .iter()
        .zip(grads)
        .map(|(v, g)| NodeRef {
            offset: v.0,
            node_type: v.1,
            grad: [g[0], g[1], 0.0],
        })
        .collect();
    QuadPoint {
        local,
        weight,
        nodes,
    }
}

/// Cell, stencil, and all periodic index maps of a regular grid.
#[derive(Clone, Debug, PartialEq)]
pub struct GridLayout {
    cell: CellSpec,
    stencil: Stencil,
    /// Pixel counts padded to three axes with ones.
    dims3: [usize; MAX_DIM],
}

impl GridLayout {
    /// Builds the layout for `kind` repeated over every pixel of `cell`.
    pub fn new(cell: CellSpec, kind: StencilKind) -> Result<Self> {
        if kind.dim() != cell.dim() {
            return Err(Error::DimensionMismatch {
                stencil: kind.name(),
                expected: kind.dim(),
                found: cell.dim(),
            });
        }
        let mut h = [1.0; MAX_DIM];
        let mut dims3 = [1; MAX_DIM];
        for a in 0..cell.dim() {
            h[a] = cell.spacing(a);
            dims3[a] = cell.dims()[a];
        }
        let stencil = Stencil::build(kind, h, cell.pixel_volume());
        Ok(Self {
            cell,
            stencil,
            dims3,
        })
    }

    pub fn cell(&self) -> &CellSpec {
        &self.cell
    }

    pub fn stencil(&self) -> &Stencil {
        &self.stencil
    }

    pub fn kind(&self) -> StencilKind {
        self.stencil.kind
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.cell.dim()
    }

    #[inline]
    pub fn dims3(&self) -> [usize; MAX_DIM] {
        self.dims3
    }

    #[inline]
    pub fn n_pixels(&self) -> usize {
        self.dims3.iter().product()
    }

    #[inline]
    pub fn nodes_per_pixel(&self) -> usize {
        self.stencil.nodes_per_pixel()
    }

    #[inline]
    pub fn quad_per_pixel(&self) -> usize {
        self.stencil.quad.len()
    }

    #[inline]
    pub fn n_nodes(&self) -> usize {
        self.n_pixels() * self.nodes_per_pixel()
    }

    #[inline]
    pub fn n_quad(&self) -> usize {
        self.n_pixels() * self.quad_per_pixel()
    }

    /// Flat index of in-range pixel coordinates.
    #[inline]
    pub fn pixel_index(&self, c: [usize; MAX_DIM]) -> usize {
        (c[0] * self.dims3[1] + c[1]) * self.dims3[2] + c[2]
    }

    #[inline]
    pub fn pixel_coords(&self, p: usize) -> [usize; MAX_DIM] {
        let c2 = p % self.dims3[2];
        let rest = p / self.dims3[2];
        [rest / self.dims3[1], rest % self.dims3[1], c2]
    }

    /// Flat pixel index of `coords + offset`, reduced modulo the grid.
    /// Missing trailing axes are treated as zero.
    pub fn wrap_index(&self, coords: &[i64], offset: &[i64]) -> usize {
        let mut c = [0usize; MAX_DIM];
        for (a, ca) in c.iter_mut().enumerate() {
            let n = self.dims3[a] as i64;
            let v = coords.get(a).copied().unwrap_or(0) + offset.get(a).copied().unwrap_or(0);
            *ca = v.rem_euclid(n) as usize;
        }
        self.pixel_index(c)
    }

    /// Pixel reached from `c` by a stencil offset (entries 0 or 1).
    #[inline]
    pub fn neighbor(&self, c: [usize; MAX_DIM], offset: [usize; MAX_DIM]) -> usize {
        let mut w = [0usize; MAX_DIM];
        for a in 0..MAX_DIM {
            let v = c[a] + offset[a];
            w[a] = if v >= self.dims3[a] { v - self.dims3[a] } else { v };
        }
        self.pixel_index(w)
    }

    #[inline]
    pub fn node_index(&self, pixel: usize, node_type: usize) -> usize {
        node_type * self.n_pixels() + pixel
    }

    /// Inverse of [`node_index`](Self::node_index): `(pixel, node type)`.
    #[inline]
    pub fn node_parts(&self, node: usize) -> (usize, usize) {
        (node % self.n_pixels(), node / self.n_pixels())
    }

    #[inline]
    pub fn quad_index(&self, pixel: usize, q: usize) -> usize {
        q * self.n_pixels() + pixel
    }

    #[inline]
    pub fn quad_parts(&self, quad: usize) -> (usize, usize) {
        (quad % self.n_pixels(), quad / self.n_pixels())
    }

    /// Physical position of a node; the cell spans `[-l/2, l/2]` per axis.
    pub fn node_position(&self, node: usize) -> [f64; MAX_DIM] {
        let (pixel, t) = self.node_parts(node);
        self.local_position(pixel, self.stencil.node_local[t])
    }

    pub fn quad_position(&self, quad: usize) -> [f64; MAX_DIM] {
        let (pixel, q) = self.quad_parts(quad);
        self.local_position(pixel, self.stencil.quad[q].local)
    }

    /// Position of a point given in pixel-local fractions.
    pub fn local_position(&self, pixel: usize, local: [f64; MAX_DIM]) -> [f64; MAX_DIM] {
        let c = self.pixel_coords(pixel);
        let mut x = [0.0; MAX_DIM];
        for a in 0..self.dim() {
            x[a] = -0.5 * self.cell.lengths()[a] + (c[a] as f64 + local[a]) * self.cell.spacing(a);
        }
        x
    }

    /// Quadrature weights of the local points.
    pub fn local_weights(&self) -> Vec<f64> {
        self.stencil.quad.iter().map(|q| q.weight).collect()
    }

    /// Weight of global quadrature point `Q`.
    #[inline]
    pub fn weight(&self, quad: usize) -> f64 {
        self.stencil.quad[quad / self.n_pixels()].weight
    }

    /// Whether every quadrature point carries the same weight.
    pub fn has_equal_weights(&self) -> bool {
        let w0 = self.stencil.quad[0].weight;
        self.stencil
            .quad
            .iter()
            .all(|q| (q.weight - w0).abs() <= 1e-14 * w0.abs())
    }
}
