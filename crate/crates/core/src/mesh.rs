//! Structured triangulations of rectangles.
//!
//! A [`TriMesh`] is a Friedrichs–Keller triangulation: the rectangle is cut
//! into an `nx × ny` grid of square cells and every cell is split along its
//! lower-left to upper-right diagonal. Vertices are numbered row-major from
//! the lower-left corner, so vertex `(i, j)` has index `i + j * (nx + 1)`.
//!
//! The boundary curve is kept as a closed, counterclockwise polyline
//! (`boundary_loop`) which the surface finite elements live on.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeshError {
    #[error("rectangle has non-positive extent: ({x0}, {y0}) to ({x1}, {y1})")]
    EmptyRect { x0: f64, y0: f64, x1: f64, y1: f64 },
    #[error("grid resolution must be positive, got nx = {nx}, ny = {ny}")]
    ZeroCells { nx: usize, ny: usize },
    #[error("spacing is not uniform: hx = {hx}, hy = {hy}")]
    Anisotropic { hx: f64, hy: f64 },
}

/// Axis-aligned rectangle `[x0, x1] × [y0, y1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl Rect {
    pub fn new(x0: f64, y0: f64, x1: f64, y1: f64) -> Result<Self, MeshError> {
        let rect = Rect { x0, y0, x1, y1 };
        rect.validate()?;
        Ok(rect)
    }

    pub fn unit_square() -> Self {
        Rect { x0: 0.0, y0: 0.0, x1: 1.0, y1: 1.0 }
    }

    pub fn validate(&self) -> Result<(), MeshError> {
        let finite = [self.x0, self.y0, self.x1, self.y1].iter().all(|v| v.is_finite());
        if !finite || self.x1 <= self.x0 || self.y1 <= self.y0 {
            return Err(MeshError::EmptyRect { x0: self.x0, y0: self.y0, x1: self.x1, y1: self.y1 });
        }
        Ok(())
    }

    pub fn width(&self) -> f64 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> f64 {
        self.y1 - self.y0
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn perimeter(&self) -> f64 {
        2.0 * (self.width() + self.height())
    }
}

#[derive(Debug, Clone)]
pub struct TriMesh {
    pub vertices: Vec<[f64; 2]>,
    /// Counterclockwise vertex triples.
    pub triangles: Vec<[usize; 3]>,
    /// Boundary vertices in counterclockwise order starting at the lower-left
    /// corner. The loop closes implicitly: the last vertex connects back to
    /// the first.
    pub boundary_loop: Vec<usize>,
    /// `(loop[k], loop[k + 1 mod n])` for every `k`.
    pub boundary_edges: Vec<[usize; 2]>,
    pub h: f64,
    pub nx: usize,
    pub ny: usize,
    pub domain: Rect,
    boundary_slot: Vec<Option<usize>>,
}

/// Friedrichs–Keller triangulation of `domain` with `nx × ny` square cells.
pub fn build_friedrichs_keller(domain: Rect, nx: usize, ny: usize) -> Result<TriMesh, MeshError> {
    domain.validate()?;
    if nx == 0 || ny == 0 {
        return Err(MeshError::ZeroCells { nx, ny });
    }
    let hx = domain.width() / nx as f64;
    let hy = domain.height() / ny as f64;
    if (hx - hy).abs() > 1e-12 * hx.max(hy) {
        return Err(MeshError::Anisotropic { hx, hy });
    }

    let stride = nx + 1;
    let id = |i: usize, j: usize| i + j * stride;

    let mut vertices = Vec::with_capacity(stride * (ny + 1));
    for j in 0..=ny {
        // Pin the last row/column exactly to the rectangle edge.
        let y = if j == ny { domain.y1 } else { domain.y0 + j as f64 * hy };
        for i in 0..=nx {
            let x = if i == nx { domain.x1 } else { domain.x0 + i as f64 * hx };
            vertices.push([x, y]);
        }
    }

    let mut triangles = Vec::with_capacity(2 * nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let (v00, v10, v01, v11) = (id(i, j), id(i + 1, j), id(i, j + 1), id(i + 1, j + 1));
            triangles.push([v00, v10, v11]);
            triangles.push([v00, v11, v01]);
        }
    }

    let mut boundary_loop = Vec::with_capacity(2 * (nx + ny));
    boundary_loop.extend((0..nx).map(|i| id(i, 0)));
    boundary_loop.extend((0..ny).map(|j| id(nx, j)));
    boundary_loop.extend((1..=nx).rev().map(|i| id(i, ny)));
    boundary_loop.extend((1..=ny).rev().map(|j| id(0, j)));

    let nb = boundary_loop.len();
    let boundary_edges = (0..nb).map(|k| [boundary_loop[k], boundary_loop[(k + 1) % nb]]).collect();

    let mut boundary_slot = vec![None; vertices.len()];
    for (k, &v) in boundary_loop.iter().enumerate() {
        boundary_slot[v] = Some(k);
    }

    Ok(TriMesh { vertices, triangles, boundary_loop, boundary_edges, h: hx, nx, ny, domain, boundary_slot })
}

/// Length of every boundary edge, in loop order.
pub fn boundary_arc_lengths(mesh: &TriMesh) -> Vec<f64> {
    mesh.boundary_edges
        .iter()
        .map(|&[a, b]| {
            let (pa, pb) = (mesh.vertices[a], mesh.vertices[b]);
            (pb[0] - pa[0]).hypot(pb[1] - pa[1])
        })
        .collect()
}

impl TriMesh {
    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_boundary(&self) -> usize {
        self.boundary_loop.len()
    }

    /// Position of vertex `v` in the boundary loop, if it lies on the boundary.
    pub fn boundary_slot(&self, v: usize) -> Option<usize> {
        self.boundary_slot[v]
    }

    pub fn is_boundary(&self, v: usize) -> bool {
        self.boundary_slot[v].is_some()
    }

    /// Vertices that do not lie on the boundary, in index order.
    pub fn interior_vertices(&self) -> Vec<usize> {
        (0..self.num_vertices()).filter(|&v| !self.is_boundary(v)).collect()
    }

    pub fn signed_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangles[t];
        let (pa, pb, pc) = (self.vertices[a], self.vertices[b], self.vertices[c]);
        0.5 * ((pb[0] - pa[0]) * (pc[1] - pa[1]) - (pc[0] - pa[0]) * (pb[1] - pa[1]))
    }

    /// Restriction of a vertex field to the boundary loop.
    pub fn trace(&self, field: &[f64]) -> Vec<f64> {
        self.boundary_loop.iter().map(|&v| field[v]).collect()
    }
}
