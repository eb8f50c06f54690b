//! TM (scalar `E_z`) finite-difference frequency-domain forward model.
//!
//! The operator is the 5-point discretization of
//!
//! ```text
//! A·E = −[∂x(s_y/s_x ∂x E) + ∂y(s_x/s_y ∂y E) + k̃² s_x s_y (1 + χ) E] / k̃²
//! ```
//!
//! with complex coordinate stretching `s = 1 − iσ(u)/ω` in the PML frame and
//! Dirichlet walls behind it. Multiplying through by `s_x s_y` keeps the
//! matrix complex symmetric; outside the PML `s_x = s_y = 1`, so on the
//! inversion domain `A` is the plain Helmholtz operator divided by `k̃²`
//! (the `ω²` factor is absorbed). A scattered field then obeys `A·E_s = χ·E`
//! and a unit line source obeys `A·E = δ/k̃²`.
//!
//! `k̃` is the free-space wavenumber adjusted for the angle-averaged
//! dispersion of the 5-point stencil (see [`grid_wavenumber_sqr`]), which
//! removes most of the phase drift over paths of many wavelengths.

mod ldl;
pub mod ordering;

pub use ldl::{LdlFactor, SymmetricCsr};

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::geometry::{Cartesian2DGrid, SubdomainIndexSet};
use crate::scalar::{wavenumber, Cplx, Real};
use crate::special::{bessel_j_seq, hankel2_0};

/// Complex `E_z` sample per grid cell (row-major).
pub type FieldVector<T> = Vec<Cplx<T>>;

/// Theoretical normal-incidence PML reflection used to size the profile.
pub const DEFAULT_PML_REFLECTION: f64 = 1e-6;
/// PML thickness in cells used by the default grids.
pub const DEFAULT_PML_CELLS: usize = 10;

/// Quadratic-profile stretching factors along one axis.
struct Stretch {
    n: usize,
    pml: usize,
    /// `σ_max/ω`, dimensionless.
    strength: f64,
}

impl Stretch {
    fn new(n: usize, pml: usize, cell: f64, k0: f64, reflection: f64) -> Self {
        let thickness = pml as f64 * cell;
        let strength = if pml == 0 { 0.0 } else { 3.0 * (1.0 / reflection).ln() / (2.0 * k0 * thickness) };
        Self { n, pml, strength }
    }

    /// Stretch factor at fractional cell coordinate `u` (cell centers at integers).
    fn at(&self, u: f64) -> Complex64 {
        if self.pml == 0 {
            return Complex64::new(1.0, 0.0);
        }
        let left = self.pml as f64 - 0.5;
        let right = (self.n - self.pml) as f64 - 0.5;
        let depth = (left - u).max(u - right).max(0.0) / self.pml as f64;
        Complex64::new(1.0, -self.strength * depth * depth)
    }
}

/// Assembled and factorized FDFD system for one angular frequency.
///
/// Immutable after construction; solves allocate their own workspace, so one
/// operator can serve concurrent solves from several threads.
#[derive(Clone, Debug)]
pub struct FrequencyOperator<T> {
    omega: T,
    grid: Cartesian2DGrid,
    matrix: SymmetricCsr<T>,
    factor: LdlFactor<T>,
}

/// Free-space operator at `omega` (rad/s).
pub fn assemble_tm<T: Real>(grid: &Cartesian2DGrid, omega: T) -> Result<FrequencyOperator<T>> {
    FrequencyOperator::assemble(grid, omega, None)
}

impl<T: Real> FrequencyOperator<T> {
    /// Assembles and factors the operator; `chi` is an optional full-grid
    /// contrast embedded in the medium (used to synthesize total fields).
    pub fn assemble(grid: &Cartesian2DGrid, omega: T, chi: Option<&[Cplx<T>]>) -> Result<Self> {
        Self::assemble_with(grid, omega, chi, DEFAULT_PML_REFLECTION)
    }

    pub fn assemble_with(
        grid: &Cartesian2DGrid,
        omega: T,
        chi: Option<&[Cplx<T>]>,
        reflection: f64,
    ) -> Result<Self> {
        let w = omega.to_f64_lossy();
        if !(w > 0.0 && w.is_finite()) {
            return Err(Error::Argument(format!("angular frequency must be positive, got {w}")));
        }
        if let Some(c) = chi {
            if c.len() != grid.len() {
                return Err(Error::Argument(format!("contrast length {} != grid size {}", c.len(), grid.len())));
            }
        }
        let matrix = build_matrix(grid, w, chi, reflection);
        let order = ordering::nested_dissection(grid.nx, grid.ny);
        let factor = LdlFactor::factor(&matrix, &order).map_err(|e| {
            e.context(format!(
                "factorizing {}x{} grid (dx = {} m) at {:.6e} Hz",
                grid.nx,
                grid.ny,
                grid.dx,
                w / (2.0 * std::f64::consts::PI)
            ))
        })?;
        Ok(Self { omega, grid: grid.clone(), matrix, factor })
    }

    pub fn omega(&self) -> T {
        self.omega
    }

    pub fn grid(&self) -> &Cartesian2DGrid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.matrix.n
    }

    pub fn factor_nnz(&self) -> usize {
        self.factor.nnz()
    }

    /// `A·x`.
    pub fn apply(&self, x: &[Cplx<T>]) -> FieldVector<T> {
        assert_eq!(x.len(), self.dim(), "field length");
        self.matrix.matvec(x)
    }

    /// `Aᴴ·x`; `A` is symmetric, so this is `conj(A·conj(x))`.
    pub fn apply_adjoint(&self, x: &[Cplx<T>]) -> FieldVector<T> {
        let xc: Vec<_> = x.iter().map(|v| v.conj()).collect();
        self.apply(&xc).into_iter().map(|v| v.conj()).collect()
    }

    fn check_source(&self, s: &[Cplx<T>]) -> Result<()> {
        if s.len() != self.dim() {
            return Err(Error::Argument(format!("source length {} != grid size {}", s.len(), self.dim())));
        }
        if let Some(k) = s.iter().position(|v| !(v.re.is_finite() && v.im.is_finite())) {
            return Err(Error::Argument(format!("non-finite source entry at cell {k}")));
        }
        Ok(())
    }

    /// Solves `A·x = source`.
    pub fn solve(&self, source: &[Cplx<T>]) -> Result<FieldVector<T>> {
        self.check_source(source)?;
        Ok(self.factor.solve(source))
    }

    /// Solves `Aᴴ·x = v`.
    pub fn solve_adjoint(&self, v: &[Cplx<T>]) -> Result<FieldVector<T>> {
        self.check_source(v)?;
        let vc: Vec<_> = v.iter().map(|z| z.conj()).collect();
        Ok(self.factor.solve(&vc).into_iter().map(|z| z.conj()).collect())
    }

    /// Solves `Aᵀ·x = v` (identical to [`Self::solve`] for this symmetric form).
    pub fn solve_transpose(&self, v: &[Cplx<T>]) -> Result<FieldVector<T>> {
        self.solve(v)
    }
}

fn build_matrix<T: Real>(grid: &Cartesian2DGrid, omega: f64, chi: Option<&[Cplx<T>]>, reflection: f64) -> SymmetricCsr<T> {
    let (nx, ny) = (grid.nx, grid.ny);
    let k0 = wavenumber(omega);
    let k2 = grid_wavenumber_sqr(k0, grid.dx, grid.dy);
    let sx = Stretch::new(nx, grid.pml_cells, grid.dx, k0, reflection);
    let sy = Stretch::new(ny, grid.pml_cells, grid.dy, k0, reflection);
    let (idx2, idy2) = (1.0 / (grid.dx * grid.dx), 1.0 / (grid.dy * grid.dy));

    // Coupling between (ix, iy) and (ix+1, iy): a = s_y(y)/s_x(x+½).
    let ax = |ix: f64, iy: usize| sy.at(iy as f64) / sx.at(ix + 0.5);
    let by = |ix: usize, iy: f64| sx.at(ix as f64) / sy.at(iy + 0.5);

    let n = grid.len();
    let mut row_ptr = Vec::with_capacity(n + 1);
    let mut cols = Vec::with_capacity(5 * n);
    let mut vals = Vec::with_capacity(5 * n);
    row_ptr.push(0);
    let cvt = |z: Complex64| Cplx::new(T::of(z.re), T::of(z.im));
    for iy in 0..ny {
        for ix in 0..nx {
            let k = iy * nx + ix;
            let a_e = ax(ix as f64, iy);
            let a_w = ax(ix as f64 - 1.0, iy);
            let b_n = by(ix, iy as f64);
            let b_s = by(ix, iy as f64 - 1.0);
            let s = sx.at(ix as f64) * sy.at(iy as f64);
            let mut medium = Complex64::new(1.0, 0.0);
            if let Some(c) = chi {
                medium += Complex64::new(c[k].re.to_f64_lossy(), c[k].im.to_f64_lossy());
            }
            let diag = ((a_e + a_w) * idx2 + (b_n + b_s) * idy2 - s * medium * k2) / k2;
            if iy > 0 {
                cols.push(k - nx);
                vals.push(cvt(-b_s * idy2 / k2));
            }
            if ix > 0 {
                cols.push(k - 1);
                vals.push(cvt(-a_w * idx2 / k2));
            }
            cols.push(k);
            vals.push(cvt(diag));
            if ix + 1 < nx {
                cols.push(k + 1);
                vals.push(cvt(-a_e * idx2 / k2));
            }
            if iy + 1 < ny {
                cols.push(k + nx);
                vals.push(cvt(-b_n * idy2 / k2));
            }
            row_ptr.push(cols.len());
        }
    }
    SymmetricCsr { n, row_ptr, cols, vals }
}

/// Squared wavenumber `k̃²` for which a plane wave of true wavenumber `k0`
/// satisfies the discrete Helmholtz equation on average over propagation
/// angles: `(2/dx²)(1 − J₀(k0·dx)) + (2/dy²)(1 − J₀(k0·dy))`.
///
/// Equals `k0²(1 − (k0·h)²/16 + …)` on a square grid.
pub fn grid_wavenumber_sqr(k0: f64, dx: f64, dy: f64) -> f64 {
    let term = |h: f64| {
        let x = k0 * h;
        if x < 1e-4 {
            // 1 − J₀(x) loses all digits to cancellation here
            k0 * k0 * (0.5 - x * x / 32.0)
        } else {
            (1.0 - bessel_j_seq(0, x)[0]) * 2.0 / (h * h)
        }
    };
    term(dx) + term(dy)
}

/// Discrete unit line source at `pos`: `δ/k̃²` spread bilinearly over the
/// four surrounding cells with density `1/(dx·dy)`.
///
/// `solve(op, point_source(..))` approximates [`line_source_green`].
pub fn point_source<T: Real>(grid: &Cartesian2DGrid, pos: (f64, f64), omega: f64) -> Result<FieldVector<T>> {
    let stencil = grid
        .bilinear(pos.0, pos.1)
        .ok_or_else(|| Error::Config(format!("source at ({}, {}) m lies outside the grid", pos.0, pos.1)))?;
    let k2 = grid_wavenumber_sqr(wavenumber(omega), grid.dx, grid.dy);
    let scale = 1.0 / (grid.dx * grid.dy * k2);
    let mut s = vec![Cplx::new(T::zero(), T::zero()); grid.len()];
    for (k, w) in stencil {
        s[k] += Cplx::new(T::of(w * scale), T::zero());
    }
    Ok(s)
}

/// Outgoing 2-D Green's function `(−i/4)·H₀⁽²⁾(k₀r)`, i.e. the field of a unit
/// line source solving `−(∇² + k₀²)E = δ` under `exp(+iωt)`.
pub fn line_source_green(k0: f64, r: f64) -> Complex64 {
    Complex64::new(0.0, -0.25) * hankel2_0(k0 * r)
}

/// Analytic line-source field at every cell center.
///
/// A cell whose center is closer than half a cell to the source is evaluated
/// at a half-cell standoff, which keeps the singular point finite.
pub fn incident_field_line_source<T: Real>(
    grid: &Cartesian2DGrid,
    src: (f64, f64),
    omega: f64,
) -> Result<FieldVector<T>> {
    if !(omega > 0.0) {
        return Err(Error::Argument(format!("angular frequency must be positive, got {omega}")));
    }
    let k0 = wavenumber(omega);
    let standoff = 0.5 * grid.dx.min(grid.dy);
    Ok((0..grid.len())
        .map(|k| {
            let (x, y) = grid.cell_center(k);
            let r = ((x - src.0).powi(2) + (y - src.1).powi(2)).sqrt().max(standoff);
            let g = line_source_green(k0, r);
            Cplx::new(T::of(g.re), T::of(g.im))
        })
        .collect())
}

/// Analytic line-source field at arbitrary points.
pub fn line_source_at<T: Real>(points: &[(f64, f64)], src: (f64, f64), omega: f64) -> Vec<Cplx<T>> {
    let k0 = wavenumber(omega);
    points
        .iter()
        .map(|&(x, y)| {
            let g = line_source_green(k0, ((x - src.0).powi(2) + (y - src.1).powi(2)).sqrt());
            Cplx::new(T::of(g.re), T::of(g.im))
        })
        .collect()
}

/// Bilinear sampling of grid fields at receiver positions (`ℳ_𝒮`).
#[derive(Clone, Debug)]
pub struct ReceiverOperator<T> {
    positions: Vec<(f64, f64)>,
    stencils: Vec<[(usize, T); 4]>,
    grid_len: usize,
}

impl<T: Real> ReceiverOperator<T> {
    /// Fails when a receiver's interpolation stencil touches the PML or
    /// leaves the grid.
    pub fn new(grid: &Cartesian2DGrid, positions: &[(f64, f64)]) -> Result<Self> {
        let mut stencils = Vec::with_capacity(positions.len());
        for (q, &(x, y)) in positions.iter().enumerate() {
            let st = grid
                .bilinear(x, y)
                .ok_or_else(|| Error::Config(format!("receiver {q} at ({x:.4}, {y:.4}) m is outside the grid")))?;
            for &(k, _) in &st {
                let (ix, iy) = grid.coords(k);
                if grid.is_pml(ix, iy) {
                    return Err(Error::Config(format!(
                        "receiver {q} at ({x:.4}, {y:.4}) m samples the PML"
                    )));
                }
            }
            stencils.push(st.map(|(k, w)| (k, T::of(w))));
        }
        Ok(Self { positions: positions.to_vec(), stencils, grid_len: grid.len() })
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn positions(&self) -> &[(f64, f64)] {
        &self.positions
    }

    pub fn stencil(&self, q: usize) -> &[(usize, T); 4] {
        &self.stencils[q]
    }

    /// `ℳ_𝒮·field`.
    pub fn sample(&self, field: &[Cplx<T>]) -> Vec<Cplx<T>> {
        assert_eq!(field.len(), self.grid_len, "field length");
        self.stencils
            .iter()
            .map(|st| st.iter().fold(Cplx::new(T::zero(), T::zero()), |acc, &(k, w)| acc + field[k] * w))
            .collect()
    }

    /// `ℳ_𝒮ᴴ·y` (weights are real).
    pub fn spread(&self, y: &[Cplx<T>]) -> FieldVector<T> {
        assert_eq!(y.len(), self.len(), "receiver data length");
        let mut out = vec![Cplx::new(T::zero(), T::zero()); self.grid_len];
        for (st, &v) in self.stencils.iter().zip(y) {
            for &(k, w) in st {
                out[k] += v * w;
            }
        }
        out
    }
}

/// `Φ·j = ℳ_𝒮 A⁻¹ (j zero-extended from 𝒟)`.
pub fn measure<T: Real>(
    rx: &ReceiverOperator<T>,
    op: &FrequencyOperator<T>,
    domain: &SubdomainIndexSet,
    j: &[Cplx<T>],
) -> Result<Vec<Cplx<T>>> {
    if j.len() != domain.len() {
        return Err(Error::Argument(format!("contrast source length {} != domain size {}", j.len(), domain.len())));
    }
    let field = op.solve(&domain.extend(j))?;
    Ok(rx.sample(&field))
}

/// `Φᴴ·y`, restricted to 𝒟.
pub fn measure_adjoint<T: Real>(
    rx: &ReceiverOperator<T>,
    op: &FrequencyOperator<T>,
    domain: &SubdomainIndexSet,
    y: &[Cplx<T>],
) -> Result<Vec<Cplx<T>>> {
    if y.len() != rx.len() {
        return Err(Error::Argument(format!("data length {} != receiver count {}", y.len(), rx.len())));
    }
    let field = op.solve_adjoint(&rx.spread(y))?;
    Ok(domain.restrict(&field))
}

/// Positions on a circle of radius `r` at the given azimuths (degrees).
pub fn circle_points(radius: f64, angles_deg: impl IntoIterator<Item = f64>) -> Vec<(f64, f64)> {
    angles_deg
        .into_iter()
        .map(|a| {
            let (s, c) = a.to_radians().sin_cos();
            (radius * c, radius * s)
        })
        .collect()
}
