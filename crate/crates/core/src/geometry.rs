//! Uniform 2-D grids with a node mask, the 5-point stencil, node quadrature
//! and sampling of grid fields on circles.
//!
//! Fields are plain `[f64]` slices of length `nx * ny`, stored row-major
//! (`index = j * nx + i`, `x = origin.0 + i * h`, `y = origin.1 + j * h`).
//! Values at exterior nodes are ignored by every operation here.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NodeKind {
    Interior,
    Boundary,
    Exterior,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Domain {
    pub nx: usize,
    pub ny: usize,
    pub h: f64,
    pub origin: (f64, f64),
    kinds: Vec<NodeKind>,
    interior: Vec<usize>,
    boundary: Vec<usize>,
    edges: Vec<(usize, usize)>,
}

impl Domain {
    fn from_kinds(nx: usize, ny: usize, h: f64, kinds: Vec<NodeKind>) -> Self {
        let mut interior = Vec::new();
        let mut boundary = Vec::new();
        for (p, kind) in kinds.iter().enumerate() {
            match kind {
                NodeKind::Interior => interior.push(p),
                NodeKind::Boundary => boundary.push(p),
                NodeKind::Exterior => {}
            }
        }
        let active = |p: usize| kinds[p] != NodeKind::Exterior;
        let mut edges = Vec::new();
        for j in 0..ny {
            for i in 0..nx {
                let p = j * nx + i;
                if !active(p) {
                    continue;
                }
                if i + 1 < nx && active(p + 1) {
                    edges.push((p, p + 1));
                }
                if j + 1 < ny && active(p + nx) {
                    edges.push((p, p + nx));
                }
            }
        }
        Domain {
            nx,
            ny,
            h,
            origin: (0.0, 0.0),
            kinds,
            interior,
            boundary,
            edges,
        }
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn kind(&self, p: usize) -> NodeKind {
        self.kinds[p]
    }

    pub fn kinds(&self) -> &[NodeKind] {
        &self.kinds
    }

    pub fn is_interior(&self, p: usize) -> bool {
        self.kinds[p] == NodeKind::Interior
    }

    pub fn is_active(&self, p: usize) -> bool {
        self.kinds[p] != NodeKind::Exterior
    }

    /// Interior node indices in row-major order.
    pub fn interior_nodes(&self) -> &[usize] {
        &self.interior
    }

    /// Boundary node indices in row-major order.
    pub fn boundary_nodes(&self) -> &[usize] {
        &self.boundary
    }

    /// Grid edges `(p, q)` with both endpoints active, `q` east or north of `p`.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    pub fn ij(&self, p: usize) -> (usize, usize) {
        (p % self.nx, p / self.nx)
    }

    pub fn coords(&self, p: usize) -> (f64, f64) {
        let (i, j) = self.ij(p);
        (self.origin.0 + i as f64 * self.h, self.origin.1 + j as f64 * self.h)
    }

    /// Physical bounding box `(xmin, ymin, xmax, ymax)` of the node grid.
    pub fn extent(&self) -> (f64, f64, f64, f64) {
        (
            self.origin.0,
            self.origin.1,
            self.origin.0 + (self.nx - 1) as f64 * self.h,
            self.origin.1 + (self.ny - 1) as f64 * self.h,
        )
    }

    pub fn center(&self) -> (f64, f64) {
        let (x0, y0, x1, y1) = self.extent();
        (0.5 * (x0 + x1), 0.5 * (y0 + y1))
    }

    /// The four stencil neighbours of an interior node (E, W, N, S).
    pub fn neighbours(&self, p: usize) -> [usize; 4] {
        [p + 1, p - 1, p + self.nx, p - self.nx]
    }

    /// Sample a closure at every node (exterior nodes included).
    pub fn sample<F: Fn(f64, f64) -> f64>(&self, f: F) -> Vec<f64> {
        (0..self.len())
            .map(|p| {
                let (x, y) = self.coords(p);
                f(x, y)
            })
            .collect()
    }

    /// Boundary nodes ordered counter-clockwise by angle about the grid
    /// center, paired with the cumulative chain length along that order.
    pub fn boundary_loop(&self) -> Vec<(usize, f64)> {
        let (cx, cy) = self.center();
        let mut nodes: Vec<(f64, f64, usize)> = self
            .boundary
            .iter()
            .map(|&p| {
                let (x, y) = self.coords(p);
                let mut theta = (y - cy).atan2(x - cx);
                if theta < 0.0 {
                    theta += std::f64::consts::TAU;
                }
                let r2 = (x - cx).powi(2) + (y - cy).powi(2);
                (theta, r2, p)
            })
            .collect();
        nodes.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)).then(a.2.cmp(&b.2)));
        let mut out = Vec::with_capacity(nodes.len());
        let mut s = 0.0;
        let mut prev: Option<(f64, f64)> = None;
        for &(_, _, p) in &nodes {
            let c = self.coords(p);
            if let Some(q) = prev {
                s += ((c.0 - q.0).powi(2) + (c.1 - q.1).powi(2)).sqrt();
            }
            out.push((p, s));
            prev = Some(c);
        }
        out
    }

    /// Total length of the closed boundary loop.
    pub fn boundary_perimeter(&self) -> f64 {
        let lp = self.boundary_loop();
        match (lp.first(), lp.last()) {
            (Some(&(first, _)), Some(&(last, s))) => {
                let a = self.coords(first);
                let b = self.coords(last);
                s + ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt()
            }
            _ => 0.0,
        }
    }

    /// Bilinear interpolation at a physical point. `None` when any corner of
    /// the containing cell is exterior or the point is off the grid.
    pub fn interpolate(&self, field: &[f64], x: f64, y: f64) -> Option<f64> {
        let fx = (x - self.origin.0) / self.h;
        let fy = (y - self.origin.1) / self.h;
        if fx < 0.0 || fy < 0.0 {
            return None;
        }
        let mut i = fx.floor() as usize;
        let mut j = fy.floor() as usize;
        if i + 1 >= self.nx {
            if i + 1 == self.nx && fx == i as f64 {
                i -= 1;
            } else {
                return None;
            }
        }
        if j + 1 >= self.ny {
            if j + 1 == self.ny && fy == j as f64 {
                j -= 1;
            } else {
                return None;
            }
        }
        let tx = fx - i as f64;
        let ty = fy - j as f64;
        let p00 = self.index(i, j);
        let corners = [p00, p00 + 1, p00 + self.nx, p00 + self.nx + 1];
        if corners.iter().any(|&p| !self.is_active(p)) {
            return None;
        }
        Some(
            (1.0 - tx) * (1.0 - ty) * field[corners[0]]
                + tx * (1.0 - ty) * field[corners[1]]
                + (1.0 - tx) * ty * field[corners[2]]
                + tx * ty * field[corners[3]],
        )
    }
}

/// Full rectangle: the outermost ring is boundary, everything else interior.
pub fn build_rectangle(nx: usize, ny: usize, h: f64) -> Result<Domain> {
    if nx < 3 || ny < 3 {
        return Err(Error::InvalidGrid(format!(
            "rectangle needs nx, ny >= 3, got {nx} x {ny}"
        )));
    }
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::InvalidGrid(format!("spacing must be positive, got {h}")));
    }
    let kinds = (0..nx * ny)
        .map(|p| {
            let (i, j) = (p % nx, p / nx);
            if i == 0 || j == 0 || i == nx - 1 || j == ny - 1 {
                NodeKind::Boundary
            } else {
                NodeKind::Interior
            }
        })
        .collect();
    Ok(Domain::from_kinds(nx, ny, h, kinds))
}

/// Masked disk on an `n x n` grid: nodes with `|x - c| < R`, `R = (n - 3) h / 2`,
/// are interior, their exterior 4-neighbours form the boundary ring.
pub fn build_disk(n: usize, h: f64) -> Result<Domain> {
    if n < 5 {
        return Err(Error::InvalidGrid(format!("disk needs n >= 5, got {n}")));
    }
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::InvalidGrid(format!("spacing must be positive, got {h}")));
    }
    // Work in index units so the mask is exactly symmetric under the
    // dihedral group of the grid.
    let c = (n - 1) as f64 / 2.0;
    let radius = (n - 3) as f64 / 2.0;
    let mut kinds = vec![NodeKind::Exterior; n * n];
    for j in 0..n {
        for i in 0..n {
            let d2 = (i as f64 - c).powi(2) + (j as f64 - c).powi(2);
            if d2 < radius * radius {
                kinds[j * n + i] = NodeKind::Interior;
            }
        }
    }
    for j in 0..n {
        for i in 0..n {
            let p = j * n + i;
            if kinds[p] != NodeKind::Exterior {
                continue;
            }
            let touches = [(1i64, 0i64), (-1, 0), (0, 1), (0, -1)].iter().any(|&(di, dj)| {
                let (a, b) = (i as i64 + di, j as i64 + dj);
                a >= 0
                    && b >= 0
                    && (a as usize) < n
                    && (b as usize) < n
                    && kinds[b as usize * n + a as usize] == NodeKind::Interior
            });
            if touches {
                kinds[p] = NodeKind::Boundary;
            }
        }
    }
    Ok(Domain::from_kinds(n, n, h, kinds))
}

/// 5-point Laplacian at interior nodes; zero elsewhere.
pub fn laplacian(dom: &Domain, field: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; dom.len()];
    let inv_h2 = 1.0 / (dom.h * dom.h);
    for &p in dom.interior_nodes() {
        let [e, w, n, s] = dom.neighbours(p);
        out[p] = (field[e] + field[w] + field[n] + field[s] - 4.0 * field[p]) * inv_h2;
    }
    out
}

/// Node quadrature: weight `h^2` on interior nodes, `h^2 / 2` on boundary
/// nodes, summed in row-major order.
pub fn integrate(dom: &Domain, field: &[f64]) -> f64 {
    let h2 = dom.h * dom.h;
    let mut sum = 0.0;
    for (p, kind) in dom.kinds.iter().enumerate() {
        match kind {
            NodeKind::Interior => sum += h2 * field[p],
            NodeKind::Boundary => sum += 0.5 * h2 * field[p],
            NodeKind::Exterior => {}
        }
    }
    sum
}

/// Quadrature weight of node `p` used by [`integrate`].
pub fn node_weight(dom: &Domain, p: usize) -> f64 {
    match dom.kinds[p] {
        NodeKind::Interior => dom.h * dom.h,
        NodeKind::Boundary => 0.5 * dom.h * dom.h,
        NodeKind::Exterior => 0.0,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BallSpec {
    pub center: (f64, f64),
    pub radius: f64,
}

impl BallSpec {
    pub fn new(center: (f64, f64), radius: f64) -> Self {
        BallSpec { center, radius }
    }

    /// Every node within `radius + 2h` of the center is interior.
    pub fn check_inside(&self, dom: &Domain) -> Result<()> {
        let err = Error::BallOutOfDomain {
            cx: self.center.0,
            cy: self.center.1,
            r: self.radius,
        };
        if !(self.radius > 0.0) {
            return Err(err);
        }
        let reach = self.radius + 2.0 * dom.h;
        let (x0, y0, x1, y1) = dom.extent();
        if self.center.0 - reach < x0
            || self.center.0 + reach > x1
            || self.center.1 - reach < y0
            || self.center.1 + reach > y1
        {
            return Err(err);
        }
        for p in 0..dom.len() {
            let (x, y) = dom.coords(p);
            let d = ((x - self.center.0).powi(2) + (y - self.center.1).powi(2)).sqrt();
            if d <= reach && !dom.is_interior(p) {
                return Err(err);
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SphereSample {
    pub angle: f64,
    pub value: f64,
    /// Outward radial derivative.
    pub normal_derivative: f64,
    /// Derivative along the counter-clockwise tangent.
    pub tangential_derivative: f64,
}

/// Samples a field on the circle `S_r(x0)` at `m = ceil(2 pi r / h)`
/// equispaced angles. Values come from bilinear interpolation, derivatives
/// from centered differences of interpolated values with step `h`.
pub fn sphere_trace(dom: &Domain, ball: &BallSpec, field: &[f64]) -> Result<Vec<SphereSample>> {
    ball.check_inside(dom)?;
    let h = dom.h;
    let r = ball.radius;
    let m = sphere_sample_count(r, h);
    let (cx, cy) = ball.center;
    let at = |x: f64, y: f64| dom.interpolate(field, x, y).ok_or(Error::BallOutOfDomain { cx, cy, r });
    let mut out = Vec::with_capacity(m);
    for j in 0..m {
        let angle = std::f64::consts::TAU * j as f64 / m as f64;
        let (c, s) = (angle.cos(), angle.sin());
        let (px, py) = (cx + r * c, cy + r * s);
        let value = at(px, py)?;
        let outer = at(px + h * c, py + h * s)?;
        let inner = at(px - h * c, py - h * s)?;
        let ahead = at(px - h * s, py + h * c)?;
        let behind = at(px + h * s, py - h * c)?;
        out.push(SphereSample {
            angle,
            value,
            normal_derivative: (outer - inner) / (2.0 * h),
            tangential_derivative: (ahead - behind) / (2.0 * h),
        });
    }
    Ok(out)
}

pub fn sphere_sample_count(r: f64, h: f64) -> usize {
    ((std::f64::consts::TAU * r / h).ceil() as usize).max(8)
}
