//! Discrete operators used by the inversion: `G_D = ℳ_𝒟 A⁻¹ ℳ_𝒟ᵀ` and the
//! data operators `Φ_p`, per frequency.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fdfd::{FrequencyOperator, ReceiverOperator};
use crate::geometry::{Cartesian2DGrid, SubdomainIndexSet};
use crate::scalar::{Cplx, Real};
use crate::scenario::MeasurementConfig;

/// Factorized operators for every frequency plus dense receiver rows.
///
/// Receivers are deduplicated across sources; `Φ_p` row `q` is the
/// restriction to 𝒟 of `A⁻¹·ℳᵀe_u` for the unique position `u` that
/// receiver `q` occupies while source `p` transmits (`A` is symmetric).
#[derive(Clone, Debug)]
pub struct ForwardModel<T> {
    grid: Cartesian2DGrid,
    domain: SubdomainIndexSet,
    omegas: Vec<f64>,
    operators: Vec<FrequencyOperator<T>>,
    rx_map: Vec<Vec<usize>>,
    /// `[i][u]` → row over 𝒟.
    rows: Vec<Vec<Vec<Cplx<T>>>>,
}

impl<T: Real> ForwardModel<T> {
    /// `receivers[p]` lists the receiver positions used with source `p`.
    pub fn new(
        grid: &Cartesian2DGrid,
        domain: &SubdomainIndexSet,
        omegas: &[f64],
        receivers: &[Vec<(f64, f64)>],
    ) -> Result<Self> {
        if omegas.is_empty() || receivers.is_empty() {
            return Err(Error::Config("inversion needs at least one frequency and one source".into()));
        }
        if omegas.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config("frequencies must be strictly increasing".into()));
        }
        if domain.grid_len() != grid.len() {
            return Err(Error::Config("inversion domain belongs to a different grid".into()));
        }
        let mut unique: Vec<(f64, f64)> = Vec::new();
        let rx_map: Vec<Vec<usize>> = receivers
            .iter()
            .map(|list| {
                list.iter()
                    .map(|&(x, y)| {
                        let hit = unique.iter().position(|&(ux, uy)| (ux - x).abs() < 1e-9 && (uy - y).abs() < 1e-9);
                        hit.unwrap_or_else(|| {
                            unique.push((x, y));
                            unique.len() - 1
                        })
                    })
                    .collect()
            })
            .collect();
        let sampler = ReceiverOperator::<T>::new(grid, &unique)?;
        let built: Vec<(FrequencyOperator<T>, Vec<Vec<Cplx<T>>>)> = omegas
            .par_iter()
            .map(|&w| {
                let op = FrequencyOperator::assemble(grid, T::of(w), None)?;
                let rows = (0..unique.len())
                    .into_par_iter()
                    .map(|u| {
                        let mut e = vec![Cplx::new(T::zero(), T::zero()); unique.len()];
                        e[u] = Cplx::new(T::one(), T::zero());
                        Ok(domain.restrict(&op.solve(&sampler.spread(&e))?))
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok((op, rows))
            })
            .collect::<Result<_>>()?;
        let (operators, rows) = built.into_iter().unzip();
        Ok(Self { grid: grid.clone(), domain: domain.clone(), omegas: omegas.to_vec(), operators, rx_map, rows })
    }

    /// Model for a circular measurement setup.
    pub fn for_config(grid: &Cartesian2DGrid, domain: &SubdomainIndexSet, config: &MeasurementConfig) -> Result<Self> {
        config.validate()?;
        let receivers: Vec<_> = (0..config.n_sources()).map(|p| config.receiver_positions(p)).collect();
        Self::new(grid, domain, &config.omegas(), &receivers)
    }

    pub fn grid(&self) -> &Cartesian2DGrid {
        &self.grid
    }

    pub fn domain(&self) -> &SubdomainIndexSet {
        &self.domain
    }

    pub fn omegas(&self) -> &[f64] {
        &self.omegas
    }

    pub fn operator(&self, i: usize) -> &FrequencyOperator<T> {
        &self.operators[i]
    }

    pub fn n_sources(&self) -> usize {
        self.rx_map.len()
    }

    pub fn n_frequencies(&self) -> usize {
        self.omegas.len()
    }

    pub fn n_receivers(&self, p: usize) -> usize {
        self.rx_map[p].len()
    }

    pub fn n_cells(&self) -> usize {
        self.domain.len()
    }

    /// `Φ_{p,i}·x`.
    pub fn phi(&self, p: usize, i: usize, x: &[Cplx<T>]) -> Vec<Cplx<T>> {
        debug_assert_eq!(x.len(), self.n_cells());
        self.rx_map[p]
            .iter()
            .map(|&u| {
                self.rows[i][u]
                    .iter()
                    .zip(x)
                    .fold(Cplx::new(T::zero(), T::zero()), |acc, (r, v)| acc + r * v)
            })
            .collect()
    }

    /// `Φ_{p,i}ᴴ·y`.
    pub fn phi_adjoint(&self, p: usize, i: usize, y: &[Cplx<T>]) -> Vec<Cplx<T>> {
        debug_assert_eq!(y.len(), self.n_receivers(p));
        let mut out = vec![Cplx::new(T::zero(), T::zero()); self.n_cells()];
        for (&u, &yq) in self.rx_map[p].iter().zip(y) {
            for (o, r) in out.iter_mut().zip(&self.rows[i][u]) {
                *o += r.conj() * yq;
            }
        }
        out
    }

    /// `G_D·x = ℳ_𝒟 A_i⁻¹ ℳ_𝒟ᵀ x`.
    pub fn green(&self, i: usize, x: &[Cplx<T>]) -> Result<Vec<Cplx<T>>> {
        Ok(self.domain.restrict(&self.operators[i].solve(&self.domain.extend(x))?))
    }

    /// `G_Dᴴ·x`.
    pub fn green_adjoint(&self, i: usize, x: &[Cplx<T>]) -> Result<Vec<Cplx<T>>> {
        Ok(self.domain.restrict(&self.operators[i].solve_adjoint(&self.domain.extend(x))?))
    }

    /// Total fields on 𝒟 for the contrast `chi` (on 𝒟) at frequency `i`:
    /// `e_inc + ℳ_𝒟 E_s` with `(A − χ)·E_s = χ·e_inc` on the full grid.
    pub fn total_fields(&self, i: usize, chi: &[Cplx<T>], e_inc: &[Vec<Cplx<T>>]) -> Result<Vec<Vec<Cplx<T>>>> {
        if chi.len() != self.n_cells() {
            return Err(Error::Argument(format!("contrast length {} != domain size {}", chi.len(), self.n_cells())));
        }
        let op = FrequencyOperator::assemble(&self.grid, T::of(self.omegas[i]), Some(&self.domain.extend(chi)))?;
        e_inc
            .par_iter()
            .map(|e| {
                let w: Vec<Cplx<T>> = chi.iter().zip(e).map(|(c, v)| c * v).collect();
                let es = self.domain.restrict(&op.solve(&self.domain.extend(&w))?);
                Ok(e.iter().zip(&es).map(|(a, b)| a + b).collect())
            })
            .collect()
    }
}
