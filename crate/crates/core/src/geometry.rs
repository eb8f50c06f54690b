//! Grids, the inversion subdomain, phantoms and the master contrast.
//!
//! Grid coordinates are kept in `f64`; field and contrast values are generic.
//! Cells are indexed row-major, `index = iy * nx + ix`, and `origin` is the
//! center of cell `(0, 0)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{Cplx, Real, EPS0};

/// Uniform cell-centered grid with a PML frame of `pml_cells` on every side.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cartesian2DGrid {
    pub nx: usize,
    pub ny: usize,
    pub dx: f64,
    pub dy: f64,
    pub origin: (f64, f64),
    pub pml_cells: usize,
}

impl Cartesian2DGrid {
    pub fn new(
        nx: usize,
        ny: usize,
        dx: f64,
        dy: f64,
        origin: (f64, f64),
        pml_cells: usize,
    ) -> Result<Self> {
        if !(dx > 0.0 && dy > 0.0 && dx.is_finite() && dy.is_finite()) {
            return Err(Error::Config(format!("cell size must be positive, got {dx} x {dy}")));
        }
        if nx < 8 || ny < 8 {
            return Err(Error::Config(format!("grid must be at least 8x8 cells, got {nx}x{ny}")));
        }
        if 2 * pml_cells >= nx.min(ny) {
            return Err(Error::Config(format!(
                "PML of {pml_cells} cells leaves no interior in a {nx}x{ny} grid"
            )));
        }
        Ok(Self { nx, ny, dx, dy, origin, pml_cells })
    }

    /// Square grid centered on the origin whose non-PML interior spans at
    /// least `[-half_width, half_width]²`.
    ///
    /// The interior cell count is even, so no cell center sits on an axis and
    /// the grid is symmetric under 90° rotations.
    pub fn centered(half_width: f64, cell: f64, pml_cells: usize) -> Result<Self> {
        if !(half_width > 0.0 && cell > 0.0) {
            return Err(Error::Config(format!(
                "half width and cell size must be positive, got {half_width}, {cell}"
            )));
        }
        let half_cells = (half_width / cell - 1e-9).ceil().max(1.0) as usize;
        let n = 2 * half_cells + 2 * pml_cells;
        let x0 = -((n - 1) as f64) * 0.5 * cell;
        Self::new(n, n, cell, cell, (x0, x0), pml_cells)
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, ix: usize, iy: usize) -> usize {
        iy * self.nx + ix
    }

    #[inline]
    pub fn coords(&self, index: usize) -> (usize, usize) {
        (index % self.nx, index / self.nx)
    }

    #[inline]
    pub fn x(&self, ix: usize) -> f64 {
        self.origin.0 + ix as f64 * self.dx
    }

    #[inline]
    pub fn y(&self, iy: usize) -> f64 {
        self.origin.1 + iy as f64 * self.dy
    }

    pub fn cell_center(&self, index: usize) -> (f64, f64) {
        let (ix, iy) = self.coords(index);
        (self.x(ix), self.y(iy))
    }

    pub fn is_pml(&self, ix: usize, iy: usize) -> bool {
        let p = self.pml_cells;
        ix < p || iy < p || ix >= self.nx - p || iy >= self.ny - p
    }

    /// Extent `(xmin, xmax, ymin, ymax)` spanned by the non-PML cells.
    pub fn interior_extent(&self) -> (f64, f64, f64, f64) {
        let p = self.pml_cells;
        (
            self.x(p) - 0.5 * self.dx,
            self.x(self.nx - 1 - p) + 0.5 * self.dx,
            self.y(p) - 0.5 * self.dy,
            self.y(self.ny - 1 - p) + 0.5 * self.dy,
        )
    }

    /// Bilinear interpolation stencil over cell centers around `(x, y)`.
    ///
    /// Returns `None` when any of the four cells falls outside the grid.
    /// Weights are non-negative and sum to one.
    pub fn bilinear(&self, x: f64, y: f64) -> Option<[(usize, f64); 4]> {
        let fx = (x - self.origin.0) / self.dx;
        let fy = (y - self.origin.1) / self.dy;
        if !(fx.is_finite() && fy.is_finite()) || fx < 0.0 || fy < 0.0 {
            return None;
        }
        let ix = (fx.floor() as usize).min(self.nx.saturating_sub(2));
        let iy = (fy.floor() as usize).min(self.ny.saturating_sub(2));
        let tx = fx - ix as f64;
        let ty = fy - iy as f64;
        if ix + 1 >= self.nx || iy + 1 >= self.ny || tx > 1.0 || ty > 1.0 {
            return None;
        }
        Some([
            (self.index(ix, iy), (1.0 - tx) * (1.0 - ty)),
            (self.index(ix + 1, iy), tx * (1.0 - ty)),
            (self.index(ix, iy + 1), (1.0 - tx) * ty),
            (self.index(ix + 1, iy + 1), tx * ty),
        ])
    }

    /// Index of the cell whose center is nearest to `(x, y)`.
    pub fn nearest(&self, x: f64, y: f64) -> Option<usize> {
        let fx = ((x - self.origin.0) / self.dx).round();
        let fy = ((y - self.origin.1) / self.dy).round();
        if fx < 0.0 || fy < 0.0 || fx >= self.nx as f64 || fy >= self.ny as f64 {
            return None;
        }
        Some(self.index(fx as usize, fy as usize))
    }
}

/// Ordered set of grid cells forming the inversion domain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubdomainIndexSet {
    indices: Vec<usize>,
    grid_len: usize,
    /// Bounding box of the set in cells: `(ix0, iy0, width, height)`.
    bbox: (usize, usize, usize, usize),
}

impl SubdomainIndexSet {
    pub fn from_indices(grid: &Cartesian2DGrid, indices: Vec<usize>) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::Config("inversion domain is empty".into()));
        }
        let mut seen = vec![false; grid.len()];
        let (mut x0, mut y0, mut x1, mut y1) = (usize::MAX, usize::MAX, 0, 0);
        for &k in &indices {
            if k >= grid.len() {
                return Err(Error::Config(format!("domain cell {k} out of range")));
            }
            if std::mem::replace(&mut seen[k], true) {
                return Err(Error::Config(format!("domain cell {k} listed twice")));
            }
            let (ix, iy) = grid.coords(k);
            if grid.is_pml(ix, iy) {
                return Err(Error::Config(format!("domain cell ({ix}, {iy}) lies in the PML")));
            }
            x0 = x0.min(ix);
            y0 = y0.min(iy);
            x1 = x1.max(ix);
            y1 = y1.max(iy);
        }
        Ok(Self {
            indices,
            grid_len: grid.len(),
            bbox: (x0, y0, x1 - x0 + 1, y1 - y0 + 1),
        })
    }

    /// Cells whose centers fall inside the closed box, in row-major order.
    pub fn from_box(grid: &Cartesian2DGrid, xmin: f64, xmax: f64, ymin: f64, ymax: f64) -> Result<Self> {
        let tol = 1e-9 * grid.dx.max(grid.dy);
        let indices: Vec<usize> = (0..grid.len())
            .filter(|&k| {
                let (x, y) = grid.cell_center(k);
                x >= xmin - tol && x <= xmax + tol && y >= ymin - tol && y <= ymax + tol
            })
            .collect();
        Self::from_indices(grid, indices)
            .map_err(|e| e.context(format!("box [{xmin}, {xmax}] x [{ymin}, {ymax}]")))
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn grid_len(&self) -> usize {
        self.grid_len
    }

    pub fn bbox(&self) -> (usize, usize, usize, usize) {
        self.bbox
    }

    /// Zero-extends a domain vector to the full grid.
    pub fn extend<T: Real>(&self, v: &[Cplx<T>]) -> Vec<Cplx<T>> {
        assert_eq!(v.len(), self.len(), "domain vector length");
        let mut out = vec![Cplx::new(T::zero(), T::zero()); self.grid_len];
        for (&k, &x) in self.indices.iter().zip(v) {
            out[k] = x;
        }
        out
    }

    /// Restricts a full-grid vector to the domain.
    pub fn restrict<T: Real>(&self, full: &[Cplx<T>]) -> Vec<Cplx<T>> {
        assert_eq!(full.len(), self.grid_len, "grid vector length");
        self.indices.iter().map(|&k| full[k]).collect()
    }
}

/// Master contrast: relative-permittivity contrast and conductivity contrast
/// (S/m) per domain cell.
///
/// Every per-frequency complex contrast is derived from this pair, so the
/// real parts agree across frequencies and `ω·Im χ(ω)` is frequency
/// independent by construction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContrastMap<T> {
    pub delta_eps: Vec<T>,
    pub delta_sigma: Vec<T>,
}

impl<T: Real> ContrastMap<T> {
    pub fn zeros(n: usize) -> Self {
        Self { delta_eps: vec![T::zero(); n], delta_sigma: vec![T::zero(); n] }
    }

    pub fn new(delta_eps: Vec<T>, delta_sigma: Vec<T>) -> Result<Self> {
        if delta_eps.len() != delta_sigma.len() {
            return Err(Error::Argument(format!(
                "contrast arrays differ in length: {} vs {}",
                delta_eps.len(),
                delta_sigma.len()
            )));
        }
        Ok(Self { delta_eps, delta_sigma })
    }

    pub fn len(&self) -> usize {
        self.delta_eps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.delta_eps.is_empty()
    }

    pub fn is_zero(&self) -> bool {
        self.delta_eps.iter().chain(&self.delta_sigma).all(|v| *v == T::zero())
    }

    /// Clamps both components at zero (passive, free-space background).
    pub fn project_nonnegative(&mut self) {
        for v in self.delta_eps.iter_mut().chain(self.delta_sigma.iter_mut()) {
            if !(*v >= T::zero()) {
                *v = T::zero();
            }
        }
    }

    pub fn scaled(&self, s: T) -> Self {
        Self {
            delta_eps: self.delta_eps.iter().map(|&v| v * s).collect(),
            delta_sigma: self.delta_sigma.iter().map(|&v| v * s).collect(),
        }
    }
}

/// Complex contrast `Δε − iΔσ/(ωε₀)` at angular frequency `omega`.
///
/// `Δσ` is a conductivity in S/m; dividing by `ωε₀` turns it into the
/// dimensionless imaginary part of the relative permittivity.
pub fn chi_at_frequency<T: Real>(c: &ContrastMap<T>, omega: T) -> Result<Vec<Cplx<T>>> {
    if !(omega > T::zero()) {
        return Err(Error::Argument(format!("angular frequency must be positive, got {omega}")));
    }
    let scale = T::one() / (omega * T::of(EPS0));
    Ok(c.delta_eps
        .iter()
        .zip(&c.delta_sigma)
        .map(|(&e, &s)| Cplx::new(e, -s * scale))
        .collect())
}

/// Inverse of [`chi_at_frequency`] at `omega1`: rebuilds the master pair from
/// the real and imaginary parts of `χ(ω₁)`.
pub fn master_from_parts<T: Real>(re: &[T], im_at_omega1: &[T], omega1: T) -> Result<ContrastMap<T>> {
    if re.len() != im_at_omega1.len() {
        return Err(Error::Argument(format!(
            "real/imaginary arrays differ in length: {} vs {}",
            re.len(),
            im_at_omega1.len()
        )));
    }
    let scale = omega1 * T::of(EPS0);
    Ok(ContrastMap {
        delta_eps: re.to_vec(),
        delta_sigma: im_at_omega1.iter().map(|&v| -v * scale).collect(),
    })
}

/// Primitive shapes a phantom is built from; lengths in meters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Shape {
    Disk { center: (f64, f64), radius: f64 },
    Annulus { center: (f64, f64), inner: f64, outer: f64 },
}

impl Shape {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        match *self {
            Shape::Disk { center, radius } => {
                let r2 = (x - center.0).powi(2) + (y - center.1).powi(2);
                r2 <= radius * radius
            }
            Shape::Annulus { center, inner, outer } => {
                let r2 = (x - center.0).powi(2) + (y - center.1).powi(2);
                r2 <= outer * outer && r2 >= inner * inner
            }
        }
    }

    pub fn area(&self) -> f64 {
        match *self {
            Shape::Disk { radius, .. } => std::f64::consts::PI * radius * radius,
            Shape::Annulus { inner, outer, .. } => std::f64::consts::PI * (outer * outer - inner * inner),
        }
    }

    fn bounds(&self) -> (f64, f64, f64, f64) {
        let (c, r) = match *self {
            Shape::Disk { center, radius } => (center, radius),
            Shape::Annulus { center, outer, .. } => (center, outer),
        };
        (c.0 - r, c.0 + r, c.1 - r, c.1 + r)
    }

    fn rotated(&self, angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        let rot = |p: (f64, f64)| (c * p.0 - s * p.1, s * p.0 + c * p.1);
        match *self {
            Shape::Disk { center, radius } => Shape::Disk { center: rot(center), radius },
            Shape::Annulus { center, inner, outer } => Shape::Annulus { center: rot(center), inner, outer },
        }
    }
}

/// Homogeneous piecewise-constant phantom.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Phantom {
    pub shapes: Vec<Shape>,
    pub d_eps: f64,
    pub d_sigma: f64,
}

impl Phantom {
    /// Two disks and a ring.
    pub fn austria(d_eps: f64, d_sigma: f64) -> Self {
        Self {
            shapes: vec![
                Shape::Disk { center: (-0.3, 0.6), radius: 0.2 },
                Shape::Disk { center: (0.3, 0.6), radius: 0.2 },
                Shape::Annulus { center: (0.0, -0.2), inner: 0.3, outer: 0.6 },
            ],
            d_eps,
            d_sigma,
        }
    }

    /// Single centered circular cylinder.
    pub fn cylinder(radius: f64, d_eps: f64, d_sigma: f64) -> Self {
        Self { shapes: vec![Shape::Disk { center: (0.0, 0.0), radius }], d_eps, d_sigma }
    }

    pub fn empty() -> Self {
        Self { shapes: Vec::new(), d_eps: 0.0, d_sigma: 0.0 }
    }

    /// Phantom rotated counter-clockwise about the origin.
    pub fn rotated(&self, angle_rad: f64) -> Self {
        Self {
            shapes: self.shapes.iter().map(|s| s.rotated(angle_rad)).collect(),
            ..self.clone()
        }
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        self.shapes.iter().any(|s| s.contains(x, y))
    }

    /// Cell-center rasterization onto `domain`.
    ///
    /// Fails when some grid cell inside a shape is not part of the domain, or
    /// when the shapes reach beyond the grid interior.
    pub fn rasterize<T: Real>(&self, grid: &Cartesian2DGrid, domain: &SubdomainIndexSet) -> Result<ContrastMap<T>> {
        let (gx0, gx1, gy0, gy1) = grid.interior_extent();
        for s in &self.shapes {
            let (x0, x1, y0, y1) = s.bounds();
            if x0 < gx0 || x1 > gx1 || y0 < gy0 || y1 > gy1 {
                return Err(Error::Config(format!(
                    "phantom shape spanning [{x0}, {x1}] x [{y0}, {y1}] m does not fit the grid interior"
                )));
            }
        }
        let mut in_domain = vec![false; grid.len()];
        for &k in domain.indices() {
            in_domain[k] = true;
        }
        for k in 0..grid.len() {
            let (x, y) = grid.cell_center(k);
            if !in_domain[k] && self.contains(x, y) {
                return Err(Error::Config(format!(
                    "phantom covers cell at ({x:.4}, {y:.4}) m outside the inversion domain"
                )));
            }
        }
        let mut map = ContrastMap::zeros(domain.len());
        for (n, &k) in domain.indices().iter().enumerate() {
            let (x, y) = grid.cell_center(k);
            if self.contains(x, y) {
                map.delta_eps[n] = T::of(self.d_eps);
                map.delta_sigma[n] = T::of(self.d_sigma);
            }
        }
        Ok(map)
    }

    /// Fraction of each grid cell covered by the phantom, estimated on a
    /// `SUPERSAMPLE × SUPERSAMPLE` lattice of sub-cell points.
    pub fn fill_fraction(&self, grid: &Cartesian2DGrid) -> Vec<f64> {
        const SUPERSAMPLE: usize = 8;
        let inv = 1.0 / (SUPERSAMPLE * SUPERSAMPLE) as f64;
        let reach = 0.5 * grid.dx.hypot(grid.dy);
        let bounds: Vec<_> = self.shapes.iter().map(|s| s.bounds()).collect();
        (0..grid.len())
            .map(|k| {
                let (x, y) = grid.cell_center(k);
                let near = bounds
                    .iter()
                    .any(|&(x0, x1, y0, y1)| x + reach >= x0 && x - reach <= x1 && y + reach >= y0 && y - reach <= y1);
                if !near {
                    return 0.0;
                }
                let mut hits = 0;
                for i in 0..SUPERSAMPLE {
                    for j in 0..SUPERSAMPLE {
                        let px = x + ((i as f64 + 0.5) / SUPERSAMPLE as f64 - 0.5) * grid.dx;
                        let py = y + ((j as f64 + 0.5) / SUPERSAMPLE as f64 - 0.5) * grid.dy;
                        if self.contains(px, py) {
                            hits += 1;
                        }
                    }
                }
                hits as f64 * inv
            })
            .collect()
    }

    /// Full-grid complex contrast at `omega`, weighted by cell coverage.
    ///
    /// Area weighting is used for forward synthesis only; inversion-domain
    /// maps use the cell-center rule of [`Phantom::rasterize`].
    pub fn chi_on_grid<T: Real>(&self, grid: &Cartesian2DGrid, omega: f64) -> Result<Vec<Cplx<T>>> {
        if !(omega > 0.0) {
            return Err(Error::Argument(format!("angular frequency must be positive, got {omega}")));
        }
        let (re, im) = (self.d_eps, -self.d_sigma / (omega * EPS0));
        Ok(self
            .fill_fraction(grid)
            .into_iter()
            .map(|f| Cplx::new(T::of(f * re), T::of(f * im)))
            .collect())
    }
}

/// Austria phantom rasterized on `domain`.
pub fn make_austria_phantom<T: Real>(
    grid: &Cartesian2DGrid,
    domain: &SubdomainIndexSet,
    d_eps: T,
    d_sigma: T,
) -> Result<ContrastMap<T>> {
    let (x0, x1, y0, y1) = grid.interior_extent();
    if x0 > -1.2 || x1 < 1.2 || y0 > -1.2 || y1 < 1.2 {
        return Err(Error::Config(format!(
            "grid interior [{x0}, {x1}] x [{y0}, {y1}] m does not cover [-1.2, 1.2]^2"
        )));
    }
    Phantom::austria(d_eps.to_f64_lossy(), d_sigma.to_f64_lossy()).rasterize(grid, domain)
}

/// The two benchmark material cases: `(Δε_r, Δσ [S/m])`.
pub fn austria_case(case: u8) -> Option<(f64, f64)> {
    match case {
        1 => Some((2.0, 5e-3)),
        2 => Some((9.0, 10e-3)),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn austria_grid(cell: f64) -> (Cartesian2DGrid, SubdomainIndexSet) {
        let grid = Cartesian2DGrid::centered(1.2, cell, 0).unwrap();
        let dom = SubdomainIndexSet::from_box(&grid, -1.2, 1.2, -1.2, 1.2).unwrap();
        (grid, dom)
    }

    fn value_at(grid: &Cartesian2DGrid, dom: &SubdomainIndexSet, map: &ContrastMap<f64>, x: f64, y: f64) -> (f64, f64) {
        let k = grid.nearest(x, y).unwrap();
        let n = dom.indices().iter().position(|&c| c == k).unwrap();
        (map.delta_eps[n], map.delta_sigma[n])
    }

    #[test]
    fn grid_invariants_enforced() {
        assert!(Cartesian2DGrid::new(7, 10, 0.1, 0.1, (0.0, 0.0), 0).is_err());
        assert!(Cartesian2DGrid::new(10, 10, 0.0, 0.1, (0.0, 0.0), 0).is_err());
        assert!(Cartesian2DGrid::new(10, 10, 0.1, 0.1, (0.0, 0.0), 5).is_err());
        assert!(Cartesian2DGrid::new(10, 10, 0.1, 0.1, (0.0, 0.0), 4).is_ok());
    }

    #[test]
    fn centered_grid_is_symmetric() {
        let g = Cartesian2DGrid::centered(1.2, 0.06, 10).unwrap();
        assert_eq!(g.nx, 60);
        assert!((g.x(0) + g.x(g.nx - 1)).abs() < 1e-12);
        assert!((g.x(30) - 0.03).abs() < 1e-12);
        let (x0, x1, _, _) = g.interior_extent();
        assert!((x0 + 1.2).abs() < 1e-9 && (x1 - 1.2).abs() < 1e-9);
    }

    #[test]
    fn domain_rejects_pml_and_duplicates() {
        let g = Cartesian2DGrid::centered(1.0, 0.1, 3).unwrap();
        assert!(SubdomainIndexSet::from_indices(&g, vec![0]).is_err());
        let k = g.index(5, 5);
        assert!(SubdomainIndexSet::from_indices(&g, vec![k, k]).is_err());
        assert!(SubdomainIndexSet::from_indices(&g, vec![g.len()]).is_err());
        let d = SubdomainIndexSet::from_indices(&g, vec![k]).unwrap();
        let full = d.extend(&[Cplx::new(1.0, 2.0)]);
        assert_eq!(full[k], Cplx::new(1.0, 2.0));
        assert_eq!(d.restrict(&full), vec![Cplx::new(1.0, 2.0)]);
    }

    #[test]
    fn bilinear_weights_sum_to_one() {
        let g = Cartesian2DGrid::centered(1.0, 0.1, 2).unwrap();
        let st = g.bilinear(0.123, -0.377).unwrap();
        let s: f64 = st.iter().map(|w| w.1).sum();
        assert!((s - 1.0).abs() < 1e-14);
        assert!(st.iter().all(|w| w.1 >= 0.0));
        assert!(g.bilinear(10.0, 0.0).is_none());
    }

    #[test]
    fn austria_landmarks() {
        let (grid, dom) = austria_grid(0.03);
        let map = make_austria_phantom(&grid, &dom, 2.0, 0.005).unwrap();
        // (0.3, 0.6) lies exactly between cell centers at 0.03 spacing; probe the disk center region.
        assert_eq!(value_at(&grid, &dom, &map, 0.285, 0.615), (2.0, 0.005));
        assert_eq!(value_at(&grid, &dom, &map, -0.285, 0.585), (2.0, 0.005));
        assert_eq!(value_at(&grid, &dom, &map, 0.015, -0.185), (0.0, 0.0));
        assert_eq!(value_at(&grid, &dom, &map, 0.015, -0.635), (2.0, 0.005));
        assert_eq!(value_at(&grid, &dom, &map, 1.0, 1.0), (0.0, 0.0));
    }

    #[test]
    fn austria_disk_center_cell() {
        // Grid whose cell centers include (0.3, 0.6).
        let grid = Cartesian2DGrid::new(81, 81, 0.03, 0.03, (-1.2, -1.2), 0).unwrap();
        let dom = SubdomainIndexSet::from_box(&grid, -1.2, 1.2, -1.2, 1.2).unwrap();
        let map = make_austria_phantom(&grid, &dom, 2.0, 0.005).unwrap();
        assert_eq!(value_at(&grid, &dom, &map, 0.3, 0.6), (2.0, 0.005));
        assert_eq!(value_at(&grid, &dom, &map, 0.0, -0.2), (0.0, 0.0));
    }

    #[test]
    fn ring_area_matches_annulus() {
        let (grid, _) = austria_grid(0.03);
        let ring = Shape::Annulus { center: (0.0, -0.2), inner: 0.3, outer: 0.6 };
        let count = (0..grid.len())
            .filter(|&k| {
                let (x, y) = grid.cell_center(k);
                ring.contains(x, y)
            })
            .count();
        let area = count as f64 * 0.03 * 0.03;
        let exact = std::f64::consts::PI * (0.36 - 0.09);
        assert!((exact - 0.8482).abs() < 1e-4);
        assert!((area - exact).abs() / exact < 0.02, "area {area} vs {exact}");
    }

    #[test]
    fn fill_fraction_integrates_to_shape_area() {
        let phantom = Phantom::austria(2.0, 0.005);
        let grid = Cartesian2DGrid::centered(1.3, 0.06, 0).unwrap();
        let fill = phantom.fill_fraction(&grid);
        assert!(fill.iter().all(|&f| (0.0..=1.0).contains(&f)));
        let area: f64 = fill.iter().sum::<f64>() * 0.06 * 0.06;
        let exact: f64 = phantom.shapes.iter().map(Shape::area).sum();
        assert!((area - exact).abs() / exact < 0.005, "{area} vs {exact}");
        let omega = 2.0 * std::f64::consts::PI * 3e8;
        let chi: Vec<Cplx<f64>> = phantom.chi_on_grid(&grid, omega).unwrap();
        let k = grid.nearest(0.3, 0.6).unwrap();
        assert_eq!(chi[k], Cplx::new(2.0, -0.005 / (omega * EPS0)));
    }

    #[test]
    fn raster_area_converges_under_refinement() {
        let phantom = Phantom::austria(1.0, 0.0);
        for shape in &phantom.shapes {
            let count_area = |cell: f64| {
                let grid = Cartesian2DGrid::centered(1.2, cell, 0).unwrap();
                let n = (0..grid.len())
                    .filter(|&k| {
                        let (x, y) = grid.cell_center(k);
                        shape.contains(x, y)
                    })
                    .count();
                n as f64 * cell * cell
            };
            let coarse = count_area(0.01);
            let fine = count_area(0.005);
            assert!((coarse - fine).abs() / fine < 0.01, "{shape:?}: {coarse} vs {fine}");
        }
    }

    #[test]
    fn phantom_outside_domain_is_rejected() {
        let grid = Cartesian2DGrid::centered(1.2, 0.06, 0).unwrap();
        let dom = SubdomainIndexSet::from_box(&grid, -0.5, 0.5, -0.5, 0.5).unwrap();
        assert!(matches!(
            make_austria_phantom(&grid, &dom, 2.0, 0.005),
            Err(Error::Config(_))
        ));
        let small = Cartesian2DGrid::centered(0.5, 0.05, 0).unwrap();
        let dom = SubdomainIndexSet::from_box(&small, -0.5, 0.5, -0.5, 0.5).unwrap();
        assert!(make_austria_phantom(&small, &dom, 2.0, 0.005).is_err());
    }

    #[test]
    fn chi_examples() {
        let c = ContrastMap::new(vec![2.0, 2.0], vec![0.0, 0.005]).unwrap();
        let w = 2.0 * std::f64::consts::PI * 3e8;
        let chi = chi_at_frequency(&c, w).unwrap();
        assert_eq!(chi[0], Cplx::new(2.0, 0.0));
        // Δσ/(ωε₀) = 0.005 / (2π·3e8·ε₀)
        assert!((chi[1].im + 0.299_586).abs() < 1e-5, "{}", chi[1].im);
        assert!(chi_at_frequency(&c, 0.0).is_err());
        assert!(chi_at_frequency(&c, -1.0).is_err());
    }

    #[test]
    fn master_examples() {
        let m = master_from_parts(&[1.0], &[0.0], 1e9).unwrap();
        assert_eq!((m.delta_eps[0], m.delta_sigma[0]), (1.0, 0.0));
        // Δσ = −ω₁ε₀·Im χ₁
        let m = master_from_parts(&[0.0], &[-1e-9], 1e9).unwrap();
        assert!((m.delta_sigma[0] - EPS0).abs() < 1e-24);
        assert!(master_from_parts(&[0.0, 1.0], &[0.0], 1e9).is_err());
    }

    #[test]
    fn projection_clamps_and_is_idempotent() {
        let mut c = ContrastMap::new(vec![-1.0, 0.5], vec![-0.1, 0.2]).unwrap();
        c.project_nonnegative();
        assert_eq!(c.delta_eps, vec![0.0, 0.5]);
        assert_eq!(c.delta_sigma, vec![0.0, 0.2]);
        let once = c.clone();
        c.project_nonnegative();
        assert_eq!(c, once);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn master_round_trip(re in -5.0f64..5.0, im in -1.0f64..1.0, w in 1e8f64..5e9) {
                let m = master_from_parts(&[re], &[im], w).unwrap();
                let chi = chi_at_frequency(&m, w).unwrap();
                prop_assert!((chi[0].re - re).abs() <= 1e-15 * re.abs().max(1.0));
                prop_assert!((chi[0].im - im).abs() <= 1e-14 * im.abs().max(1e-300));
            }

            #[test]
            fn omega_times_imag_is_invariant(de in 0.0f64..10.0, ds in 0.0f64..0.1, w1 in 1e8f64..1e10, w2 in 1e8f64..1e10) {
                let c = ContrastMap::new(vec![de], vec![ds]).unwrap();
                let a = chi_at_frequency(&c, w1).unwrap()[0];
                let b = chi_at_frequency(&c, w2).unwrap()[0];
                prop_assert_eq!(a.re, b.re);
                prop_assert!((a.im * w1 - b.im * w2).abs() <= 1e-12 * (a.im * w1).abs().max(1e-300));
            }

            #[test]
            fn chi_is_linear(a in -3.0f64..3.0, b in -3.0f64..3.0, w in 1e8f64..1e10) {
                let c1 = ContrastMap::new(vec![1.5, 0.2], vec![0.01, 0.0]).unwrap();
                let c2 = ContrastMap::new(vec![-0.5, 2.0], vec![0.0, 0.03]).unwrap();
                let combo = ContrastMap::new(
                    vec![a * 1.5 + b * -0.5, a * 0.2 + b * 2.0],
                    vec![a * 0.01, b * 0.03],
                ).unwrap();
                let x1 = chi_at_frequency(&c1, w).unwrap();
                let x2 = chi_at_frequency(&c2, w).unwrap();
                let xc = chi_at_frequency(&combo, w).unwrap();
                for k in 0..2 {
                    let lin = x1[k] * a + x2[k] * b;
                    prop_assert!((lin - xc[k]).norm() < 1e-12 * (1.0 + lin.norm()));
                }
            }
        }
    }
}
