//! Multi-frequency contrast source inversion with the cross-correlated
//! error term (variant [`Variant::Cc`]) and the plain baseline
//! ([`Variant::Plain`], no `ξ` terms).
//!
//! Per iteration every contrast source `j_{p,i}` takes one Polak–Ribière
//! step with an exact line search, then the master contrast takes one
//! preconditioned conjugate-gradient step whose length is found by Brent's
//! method.

pub mod brent;
mod model;

pub use model::ForwardModel;

use std::path::Path;

use log::{debug, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{chi_at_frequency, Cartesian2DGrid, ContrastMap, SubdomainIndexSet};
use crate::scenario::{calibrate_incident, calibrated_incident_fields, MeasurementConfig, MeasurementSet};
use crate::scalar::{dot, norm_sqr, zeros, Cplx, Real, EPS0};

/// Which cost functional is minimized.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// Data, state and cross-correlated terms.
    Cc,
    /// Data and state terms only.
    Plain,
}

impl Variant {
    fn cc(self) -> bool {
        self == Variant::Cc
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cc" => Ok(Variant::Cc),
            "plain" => Ok(Variant::Plain),
            other => Err(Error::Config(format!("unknown variant {other:?} (expected cc or plain)"))),
        }
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Variant::Cc => "cc",
            Variant::Plain => "plain",
        })
    }
}

/// Measured scattered data and incident fields on 𝒟.
#[derive(Clone, Debug)]
pub struct InversionInput<T> {
    /// `y[p][i][q]`.
    pub data: Vec<Vec<Vec<Cplx<T>>>>,
    /// `e_inc[p][i]` on 𝒟.
    pub e_inc: Vec<Vec<Vec<Cplx<T>>>>,
}

impl<T: Real> InversionInput<T> {
    pub fn check(&self, model: &ForwardModel<T>) -> Result<()> {
        let (np, ni, n) = (model.n_sources(), model.n_frequencies(), model.n_cells());
        let ok_data = self.data.len() == np
            && self.data.iter().enumerate().all(|(p, s)| s.len() == ni && s.iter().all(|y| y.len() == model.n_receivers(p)));
        let ok_inc = self.e_inc.len() == np && self.e_inc.iter().all(|s| s.len() == ni && s.iter().all(|e| e.len() == n));
        if !ok_data || !ok_inc {
            return Err(Error::Argument(format!(
                "inversion input does not match the model ({np} sources, {ni} frequencies, {n} cells)"
            )));
        }
        Ok(())
    }

    /// Scattered data of `ms` with incident fields from the analytic line
    /// source, calibrated against the measured incident field at the
    /// receiver opposite each source. Without incident measurements the
    /// calibration factors are 1.
    pub fn from_measurements(
        config: &MeasurementConfig,
        ms: &MeasurementSet<T>,
        grid: &Cartesian2DGrid,
        domain: &SubdomainIndexSet,
    ) -> Result<Self> {
        ms.check_against(config)?;
        let factors = match &ms.incident {
            Some(inc) => calibrate_incident(config, inc)?,
            None => {
                warn!("no incident-field measurements; using the uncalibrated line source");
                vec![vec![Cplx::new(T::one(), T::zero()); config.n_frequencies()]; config.n_sources()]
            }
        };
        let e_inc = calibrated_incident_fields(config, &factors, grid, domain)?;
        Ok(Self { data: ms.scattered.clone(), e_inc })
    }
}

/// Working variables of one (source, frequency) pair.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SourceSlot<T> {
    pub j: Vec<Cplx<T>>,
    pub e_tot: Vec<Cplx<T>>,
    pub rho: Vec<Cplx<T>>,
    pub gamma: Vec<Cplx<T>>,
    pub xi: Vec<Cplx<T>>,
    pub g_prev: Vec<Cplx<T>>,
    pub nu_prev: Vec<Cplx<T>>,
}

/// Full iterate. Slots are stored source-major: `slots[p·I + i]`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct InversionState<T> {
    pub n_sources: usize,
    pub n_frequencies: usize,
    pub variant: Variant,
    pub slots: Vec<SourceSlot<T>>,
    pub master: ContrastMap<T>,
    /// `χᵢ` on 𝒟, regenerated from `master` after every contrast update.
    pub chi: Vec<Vec<Cplx<T>>>,
    pub eta_s: Vec<T>,
    pub eta_d: Vec<T>,
    pub g_chi_prev: Vec<Cplx<T>>,
    pub nu_chi_prev: Vec<Cplx<T>>,
    pub iteration: usize,
}

impl<T: Real> InversionState<T> {
    pub fn slot(&self, p: usize, i: usize) -> &SourceSlot<T> {
        &self.slots[p * self.n_frequencies + i]
    }

    pub fn slot_mut(&mut self, p: usize, i: usize) -> &mut SourceSlot<T> {
        &mut self.slots[p * self.n_frequencies + i]
    }

    /// Contribution of one slot to [`cost_half`].
    pub fn slot_cost_half(&self, p: usize, i: usize) -> T {
        let s = self.slot(p, i);
        let mut c = self.eta_s[i] * norm_sqr(&s.rho) + self.eta_d[i] * norm_sqr(&s.gamma);
        if self.variant.cc() {
            c += self.eta_s[i] * norm_sqr(&s.xi);
        }
        c
    }

    pub fn write_json(&self, path: &Path) -> Result<()>
    where
        T: Serialize,
    {
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        serde_json::to_writer(std::io::BufWriter::new(f), self).map_err(|e| Error::parse(path, e.to_string()))
    }

    pub fn read_json(path: &Path) -> Result<Self>
    where
        T: for<'de> Deserialize<'de>,
    {
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_reader(std::io::BufReader::new(f)).map_err(|e| Error::parse(path, e.to_string()))
    }
}

fn cell_mul<T: Real>(a: &[Cplx<T>], b: &[Cplx<T>]) -> Vec<Cplx<T>> {
    a.iter().zip(b).map(|(x, y)| x * y).collect()
}

fn sub<T: Real>(a: &[Cplx<T>], b: &[Cplx<T>]) -> Vec<Cplx<T>> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

fn ratio<T: Real>(omegas: &[f64], i: usize) -> T {
    T::of(omegas[0] / omegas[i])
}

/// `(η^𝒮ᵢ, η^𝒟ᵢ) = (1/Σ_p‖y‖², 1/Σ_p‖χᵢ e_inc‖²)`.
pub fn compute_eta<T: Real>(input: &InversionInput<T>, chi: &[Vec<Cplx<T>>]) -> Result<(Vec<T>, Vec<T>)> {
    let ni = chi.len();
    let mut eta_s = Vec::with_capacity(ni);
    let mut eta_d = Vec::with_capacity(ni);
    for (i, chi_i) in chi.iter().enumerate() {
        let ys: T = input.data.iter().map(|s| norm_sqr(&s[i])).fold(T::zero(), |a, b| a + b);
        let ds: T = input.e_inc.iter().map(|s| norm_sqr(&cell_mul(chi_i, &s[i]))).fold(T::zero(), |a, b| a + b);
        if !(ys > T::zero()) {
            return Err(Error::Degenerate(format!("no scattered data at frequency index {i}")));
        }
        if !(ds > T::zero()) {
            return Err(Error::Degenerate(format!("contrast vanishes at frequency index {i}")));
        }
        eta_s.push(T::one() / ys);
        eta_d.push(T::one() / ds);
    }
    Ok((eta_s, eta_d))
}

/// `(ρ, γ, ξ)` for one slot given `j`, `e_tot` and `χᵢ`.
pub fn residuals<T: Real>(
    model: &ForwardModel<T>,
    y: &[Cplx<T>],
    chi: &[Cplx<T>],
    p: usize,
    i: usize,
    j: &[Cplx<T>],
    e_tot: &[Cplx<T>],
) -> (Vec<Cplx<T>>, Vec<Cplx<T>>, Vec<Cplx<T>>) {
    let w = cell_mul(chi, e_tot);
    let rho = sub(y, &model.phi(p, i, j));
    let xi = sub(y, &model.phi(p, i, &w));
    let gamma = sub(&w, j);
    (rho, gamma, xi)
}

/// Regenerates every `χᵢ` from `state.master` and refreshes the residuals
/// at fixed `j` and `e_tot`. The normalizations are left unchanged.
pub fn refresh_contrast<T: Real>(model: &ForwardModel<T>, input: &InversionInput<T>, state: &mut InversionState<T>) -> Result<()> {
    state.chi = model
        .omegas()
        .iter()
        .map(|&w| chi_at_frequency(&state.master, T::of(w)))
        .collect::<Result<_>>()?;
    let ni = state.n_frequencies;
    let chi = &state.chi;
    state.slots.par_iter_mut().enumerate().for_each(|(k, s)| {
        let (p, i) = (k / ni, k % ni);
        let (rho, gamma, xi) = residuals(model, &input.data[p][i], &chi[i], p, i, &s.j, &s.e_tot);
        s.rho = rho;
        s.gamma = gamma;
        s.xi = xi;
    });
    Ok(())
}

/// `Σᵢ η^𝒮Σ_p‖ρ‖² + η^𝒟Σ_p‖γ‖² (+ η^𝒮Σ_p‖ξ‖²)`.
pub fn cost_half<T: Real>(state: &InversionState<T>) -> T {
    let mut c = T::zero();
    for p in 0..state.n_sources {
        for i in 0..state.n_frequencies {
            c += state.slot_cost_half(p, i);
        }
    }
    c
}

/// `Σᵢ η^𝒟Σ_p‖γ‖² (+ η^𝒮Σ_p‖ξ‖²)`.
pub fn cost_full<T: Real>(state: &InversionState<T>) -> T {
    let mut c = T::zero();
    for p in 0..state.n_sources {
        for i in 0..state.n_frequencies {
            let s = state.slot(p, i);
            c += state.eta_d[i] * norm_sqr(&s.gamma);
            if state.variant.cc() {
                c += state.eta_s[i] * norm_sqr(&s.xi);
            }
        }
    }
    c
}

/// Gradient of [`cost_half`] with respect to `j_{p,i}`:
/// `−2η^𝒮Φᴴρ + G_Dᴴ(2η^𝒟χ̄γ − 2η^𝒮χ̄Φᴴξ) − 2η^𝒟γ`.
pub fn grad_j<T: Real>(model: &ForwardModel<T>, state: &InversionState<T>, p: usize, i: usize) -> Result<Vec<Cplx<T>>> {
    let s = state.slot(p, i);
    let two = T::of(2.0);
    let (es, ed) = (state.eta_s[i], state.eta_d[i]);
    let chi = &state.chi[i];
    let mut t: Vec<Cplx<T>> = chi.iter().zip(&s.gamma).map(|(c, g)| c.conj() * g * (two * ed)).collect();
    if state.variant.cc() {
        let bx = model.phi_adjoint(p, i, &s.xi);
        for ((tn, c), b) in t.iter_mut().zip(chi).zip(&bx) {
            *tn -= c.conj() * b * (two * es);
        }
    }
    let back = model.green_adjoint(i, &t)?;
    let br = model.phi_adjoint(p, i, &s.rho);
    Ok(back
        .iter()
        .zip(&br)
        .zip(&s.gamma)
        .map(|((b, r), g)| b - r * (two * es) - g * (two * ed))
        .collect())
}

/// Polak–Ribière momentum `Re Σ⟨g, g − g_prev⟩ / Σ‖g_prev‖²` over a group of
/// vectors; 0 (steepest-descent restart) when `Σ‖g_prev‖² < 1e-30`.
pub fn pr_coefficient<T: Real>(g_now: &[&[Cplx<T>]], g_prev: &[&[Cplx<T>]]) -> T {
    let mut num = T::zero();
    let mut den = T::zero();
    for (g, gp) in g_now.iter().zip(g_prev) {
        num += dot(g, &sub(g, gp)).re;
        den += norm_sqr(gp);
    }
    if den < T::of(1e-30) {
        T::zero()
    } else {
        num / den
    }
}

/// Conjugate directions for a group sharing one momentum coefficient;
/// all zero at iteration 0.
pub fn pr_direction<T: Real>(
    g_now: &[&[Cplx<T>]],
    g_prev: &[&[Cplx<T>]],
    nu_prev: &[&[Cplx<T>]],
    iteration: usize,
) -> Vec<Vec<Cplx<T>>> {
    if iteration == 0 {
        return g_now.iter().map(|g| zeros(g.len())).collect();
    }
    let c = pr_coefficient(g_now, g_prev);
    g_now
        .iter()
        .zip(nu_prev)
        .map(|(g, nu)| g.iter().zip(nu.iter()).map(|(a, b)| a + b * c).collect())
        .collect()
}

/// Exact minimizer of [`cost_half`] along `ν` for slot `(p, i)`, with the
/// field increment `u = G_D ν` it needed.
pub fn step_alpha<T: Real>(
    model: &ForwardModel<T>,
    state: &InversionState<T>,
    p: usize,
    i: usize,
    g: &[Cplx<T>],
    nu: &[Cplx<T>],
) -> Result<(T, Vec<Cplx<T>>)> {
    let u = model.green(i, nu)?;
    let chi_u = cell_mul(&state.chi[i], &u);
    let (es, ed) = (state.eta_s[i], state.eta_d[i]);
    let a2 = es * norm_sqr(&model.phi(p, i, nu));
    let b2 = ed * norm_sqr(&sub(nu, &chi_u));
    let c2 = if state.variant.cc() { es * norm_sqr(&model.phi(p, i, &chi_u)) } else { T::zero() };
    let den = T::of(2.0) * (a2 + b2 + c2);
    if !(den > T::zero()) {
        warn!("zero step denominator for source {p}, frequency index {i}; step skipped");
        return Ok((T::zero(), u));
    }
    Ok((-dot(g, nu).re / den, u))
}

/// `j += αν`, `e_tot += αu` and fresh residuals.
pub fn update_sources_and_fields<T: Real>(
    model: &ForwardModel<T>,
    input: &InversionInput<T>,
    chi: &[Cplx<T>],
    slot: &mut SourceSlot<T>,
    p: usize,
    i: usize,
    alpha: T,
    nu: &[Cplx<T>],
    u: &[Cplx<T>],
) {
    let a = Cplx::new(alpha, T::zero());
    for (j, v) in slot.j.iter_mut().zip(nu) {
        *j += v * a;
    }
    for (e, v) in slot.e_tot.iter_mut().zip(u) {
        *e += v * a;
    }
    let (rho, gamma, xi) = residuals(model, &input.data[p][i], chi, p, i, &slot.j, &slot.e_tot);
    slot.rho = rho;
    slot.gamma = gamma;
    slot.xi = xi;
}

/// Per-frequency contrast gradients `g^χᵢ = η^𝒟Σ_p ē·γ − η^𝒮Σ_p ē·Φᴴξ`.
fn grad_chi_terms<T: Real>(model: &ForwardModel<T>, state: &InversionState<T>) -> Vec<Vec<Cplx<T>>> {
    let n = model.n_cells();
    (0..state.n_frequencies)
        .map(|i| {
            let mut g = zeros::<T>(n);
            for p in 0..state.n_sources {
                let s = state.slot(p, i);
                let bx = if state.variant.cc() { Some(model.phi_adjoint(p, i, &s.xi)) } else { None };
                for k in 0..n {
                    let mut v = s.gamma[k] * state.eta_d[i];
                    if let Some(b) = &bx {
                        v -= b[k] * state.eta_s[i];
                    }
                    g[k] += s.e_tot[k].conj() * v;
                }
            }
            g
        })
        .collect()
}

/// Derivatives of [`cost_full`] (at fixed `η`, `j`, `e_tot`) with respect
/// to the master parameters `(Δε, Δσ)` per cell.
pub fn grad_chi_unpreconditioned<T: Real>(model: &ForwardModel<T>, state: &InversionState<T>) -> (Vec<T>, Vec<T>) {
    let terms = grad_chi_terms(model, state);
    let omegas = model.omegas();
    let two = T::of(2.0);
    let d_sigma_per_im = -T::one() / T::of(omegas[0] * EPS0);
    let n = model.n_cells();
    let mut d_eps = vec![T::zero(); n];
    let mut d_sig = vec![T::zero(); n];
    for (i, g) in terms.iter().enumerate() {
        let r: T = ratio(omegas, i);
        for k in 0..n {
            d_eps[k] += two * g[k].re;
            d_sig[k] += two * r * g[k].im * d_sigma_per_im;
        }
    }
    (d_eps, d_sig)
}

/// Preconditioned contrast gradient in `χ₁` coordinates and the number of
/// cells whose field-energy denominator vanished (set to 0).
pub fn grad_chi<T: Real>(model: &ForwardModel<T>, state: &InversionState<T>) -> (Vec<Cplx<T>>, usize) {
    let terms = grad_chi_terms(model, state);
    let omegas = model.omegas();
    let n = model.n_cells();
    let two = T::of(2.0);
    let mut out = zeros::<T>(n);
    let mut zero_cells = 0;
    for k in 0..n {
        let (mut sum_g, mut sum_rg) = (Cplx::new(T::zero(), T::zero()), Cplx::new(T::zero(), T::zero()));
        let (mut w, mut wr) = (T::zero(), T::zero());
        for i in 0..state.n_frequencies {
            let r: T = ratio(omegas, i);
            let e2 = (0..state.n_sources).fold(T::zero(), |a, p| a + state.slot(p, i).e_tot[k].norm_sqr());
            sum_g += terms[i][k];
            sum_rg += terms[i][k] * r;
            w += e2;
            wr += r * r * e2;
        }
        if w > T::zero() && wr > T::zero() {
            out[k] = Cplx::new(two * sum_g.re / w, two * sum_rg.im / wr);
        } else {
            zero_cells += 1;
        }
    }
    (out, zero_cells)
}

/// `χᵢ`-image of a master direction: `Re ν + i(ω₁/ωᵢ)·Im ν`.
pub fn direction_at<T: Real>(nu: &[Cplx<T>], omegas: &[f64], i: usize) -> Vec<Cplx<T>> {
    let r: T = ratio(omegas, i);
    nu.iter().map(|v| Cplx::new(v.re, v.im * r)).collect()
}

/// The contrast line-search objective as rational/quadratic pieces:
/// `f(β) = Σᵢ (n₀+n₁β+n₂β²)/(d₀+d₁β+d₂β²) + Σᵢ (s₀+s₁β+s₂β²)`.
#[derive(Clone, Debug, PartialEq)]
pub struct BetaObjective {
    /// `[n0, n1, n2, d0, d1, d2, s0, s1, s2]` per frequency.
    pub terms: Vec<[f64; 9]>,
}

impl BetaObjective {
    pub fn new<T: Real>(model: &ForwardModel<T>, input: &InversionInput<T>, state: &InversionState<T>, nu_chi: &[Cplx<T>]) -> Self {
        let omegas = model.omegas();
        let terms = (0..state.n_frequencies)
            .map(|i| {
                let nu = direction_at(nu_chi, omegas, i);
                let mut t = [0.0; 9];
                for p in 0..state.n_sources {
                    let s = state.slot(p, i);
                    let ve = cell_mul(&nu, &s.e_tot);
                    let ce = cell_mul(&state.chi[i], &input.e_inc[p][i]);
                    let vi = cell_mul(&nu, &input.e_inc[p][i]);
                    t[0] += norm_sqr(&s.gamma).to_f64_lossy();
                    t[1] += 2.0 * dot(&s.gamma, &ve).re.to_f64_lossy();
                    t[2] += norm_sqr(&ve).to_f64_lossy();
                    t[3] += norm_sqr(&ce).to_f64_lossy();
                    t[4] += 2.0 * dot(&ce, &vi).re.to_f64_lossy();
                    t[5] += norm_sqr(&vi).to_f64_lossy();
                    if state.variant.cc() {
                        let es = state.eta_s[i].to_f64_lossy();
                        let pv = model.phi(p, i, &ve);
                        t[6] += es * norm_sqr(&s.xi).to_f64_lossy();
                        t[7] -= 2.0 * es * dot(&s.xi, &pv).re.to_f64_lossy();
                        t[8] += es * norm_sqr(&pv).to_f64_lossy();
                    }
                }
                t
            })
            .collect();
        Self { terms }
    }

    pub fn eval(&self, beta: f64) -> f64 {
        let b2 = beta * beta;
        self.terms
            .iter()
            .map(|t| (t[0] + t[1] * beta + t[2] * b2) / (t[3] + t[4] * beta + t[5] * b2) + t[6] + t[7] * beta + t[8] * b2)
            .sum()
    }
}

/// Relative tolerance of the contrast line search.
pub const BETA_TOLERANCE: f64 = 1e-8;

/// Minimizer of the contrast line-search objective; 0 (with a warning) when
/// no bracket is found or the search does not improve on `β = 0`.
pub fn step_beta(objective: &BetaObjective) -> f64 {
    let f0 = objective.eval(0.0);
    match brent::minimize(|b| objective.eval(b), BETA_TOLERANCE) {
        Some(m) if m.fx <= f0 => m.x,
        Some(_) => 0.0,
        None => {
            warn!("contrast line search found no bracket within 40 doublings; beta = 0");
            0.0
        }
    }
}

/// `master += β·ν^χ` in `χ₁` coordinates, positivity projection, fresh
/// `χᵢ`, `η^𝒟` and `(γ, ξ)`.
pub fn update_contrast<T: Real>(
    model: &ForwardModel<T>,
    input: &InversionInput<T>,
    state: &mut InversionState<T>,
    beta: T,
    nu_chi: &[Cplx<T>],
) -> Result<()> {
    let w1 = T::of(model.omegas()[0] * EPS0);
    for (k, v) in nu_chi.iter().enumerate() {
        state.master.delta_eps[k] += beta * v.re;
        state.master.delta_sigma[k] -= w1 * beta * v.im;
    }
    state.master.project_nonnegative();
    state.chi = model
        .omegas()
        .iter()
        .map(|&w| chi_at_frequency(&state.master, T::of(w)))
        .collect::<Result<_>>()?;
    let (_, eta_d) = compute_eta(input, &state.chi)?;
    state.eta_d = eta_d;
    let ni = state.n_frequencies;
    let chi = &state.chi;
    state.slots.par_iter_mut().enumerate().for_each(|(k, s)| {
        let (p, i) = (k / ni, k % ni);
        let (rho, gamma, xi) = residuals(model, &input.data[p][i], &chi[i], p, i, &s.j, &s.e_tot);
        s.rho = rho;
        s.gamma = gamma;
        s.xi = xi;
    });
    Ok(())
}

/// Back-propagated starting sources `j₀ = (‖Φᴴy‖²/‖ΦΦᴴy‖²)·Φᴴy`, `[p][i]`.
pub fn init_backpropagation<T: Real>(model: &ForwardModel<T>, input: &InversionInput<T>) -> Vec<Vec<Vec<Cplx<T>>>> {
    (0..model.n_sources())
        .map(|p| {
            (0..model.n_frequencies())
                .map(|i| {
                    let b = model.phi_adjoint(p, i, &input.data[p][i]);
                    let nb = norm_sqr(&b);
                    if nb == T::zero() {
                        return b;
                    }
                    let s = nb / norm_sqr(&model.phi(p, i, &b));
                    b.into_iter().map(|v| v * s).collect()
                })
                .collect()
        })
        .collect()
}

/// Starting fields `e_inc + G_D j₀` and the cell-wise least-squares
/// contrast fitted to `j₀ ≈ χᵢ e_tot` across all `(p, i)`, projected.
pub fn init_fields_and_contrast<T: Real>(
    model: &ForwardModel<T>,
    input: &InversionInput<T>,
    j0: &[Vec<Vec<Cplx<T>>>],
) -> Result<(Vec<Vec<Vec<Cplx<T>>>>, ContrastMap<T>)> {
    let ni = model.n_frequencies();
    let e_tot: Vec<Vec<Vec<Cplx<T>>>> = (0..model.n_sources())
        .into_par_iter()
        .map(|p| {
            (0..ni)
                .map(|i| {
                    let g = model.green(i, &j0[p][i])?;
                    Ok(input.e_inc[p][i].iter().zip(&g).map(|(a, b)| a + b).collect())
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    let master = fit_contrast(model.omegas(), j0, &e_tot);
    Ok((e_tot, master))
}

/// Cell-wise `(Re χ₁, Im χ₁)` minimizing `Σ_{p,i}|j − (a + i(ω₁/ωᵢ)b)e|²`,
/// converted to a projected master map.
fn fit_contrast<T: Real>(omegas: &[f64], j: &[Vec<Vec<Cplx<T>>>], e: &[Vec<Vec<Cplx<T>>>]) -> ContrastMap<T> {
    let n = j.first().and_then(|s| s.first()).map_or(0, |v| v.len());
    let mut re = vec![T::zero(); n];
    let mut im = vec![T::zero(); n];
    for k in 0..n {
        let (mut num_re, mut den_re, mut num_im, mut den_im) = (T::zero(), T::zero(), T::zero(), T::zero());
        for (jp, ep) in j.iter().zip(e) {
            for (i, (ji, ei)) in jp.iter().zip(ep).enumerate() {
                let r: T = ratio(omegas, i);
                let c = ji[k] * ei[k].conj();
                let e2 = ei[k].norm_sqr();
                num_re += c.re;
                den_re += e2;
                num_im += r * c.im;
                den_im += r * r * e2;
            }
        }
        if den_re > T::zero() {
            re[k] = num_re / den_re;
        }
        if den_im > T::zero() {
            im[k] = num_im / den_im;
        }
    }
    let w1 = T::of(omegas[0] * EPS0);
    let mut master = ContrastMap { delta_eps: re, delta_sigma: im.into_iter().map(|v| -w1 * v).collect() };
    master.project_nonnegative();
    master
}

/// `‖χ̂ − χ‖/‖χ‖` with both maps evaluated at `omega_max`.
pub fn reconstruction_error<T: Real>(estimate: &ContrastMap<T>, truth: &ContrastMap<T>, omega_max: f64) -> Result<f64> {
    if estimate.len() != truth.len() {
        return Err(Error::Argument(format!("contrast lengths differ: {} vs {}", estimate.len(), truth.len())));
    }
    let a = chi_at_frequency(estimate, T::of(omega_max))?;
    let b = chi_at_frequency(truth, T::of(omega_max))?;
    let nb = norm_sqr(&b).to_f64_lossy();
    if !(nb > 0.0) {
        return Err(Error::Degenerate("reconstruction error undefined for a zero true contrast".into()));
    }
    Ok((norm_sqr(&sub(&a, &b)).to_f64_lossy() / nb).sqrt())
}

/// One row of the iteration log.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    /// `cost_half` before the source updates of this iteration.
    pub cost_half_before: f64,
    /// `cost_half` after the source updates.
    pub cost_half: f64,
    /// `cost_full` after the contrast update.
    pub cost_full: f64,
    /// Reconstruction error, NaN without a reference contrast.
    pub err: f64,
    pub alpha_mean: f64,
    pub beta: f64,
}

/// Summary of one round of contrast-source updates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SourcePhaseReport {
    pub alpha_mean: f64,
    /// Largest per-slot increase of its `cost_half` term relative to the
    /// term before the update (non-positive for exact line searches).
    pub max_relative_increase: f64,
}

/// Inversion driver exposing the two half-steps of each iteration.
pub struct Inversion<'a, T> {
    model: &'a ForwardModel<T>,
    input: &'a InversionInput<T>,
    pub state: InversionState<T>,
}

impl<'a, T: Real> Inversion<'a, T> {
    /// Initialization: back-propagation, fields, contrast, projection, `η`.
    ///
    /// Fails with [`Error::Degenerate`] when the data or the initial
    /// contrast vanish.
    pub fn start(model: &'a ForwardModel<T>, input: &'a InversionInput<T>, variant: Variant) -> Result<Self> {
        input.check(model)?;
        let j0 = init_backpropagation(model, input);
        let (e0, master) = init_fields_and_contrast(model, input, &j0)?;
        let chi: Vec<Vec<Cplx<T>>> = model
            .omegas()
            .iter()
            .map(|&w| chi_at_frequency(&master, T::of(w)))
            .collect::<Result<_>>()?;
        let (eta_s, eta_d) = compute_eta(input, &chi)?;
        let (np, ni, n) = (model.n_sources(), model.n_frequencies(), model.n_cells());
        let mut slots = Vec::with_capacity(np * ni);
        for p in 0..np {
            for i in 0..ni {
                let (rho, gamma, xi) = residuals(model, &input.data[p][i], &chi[i], p, i, &j0[p][i], &e0[p][i]);
                slots.push(SourceSlot {
                    j: j0[p][i].clone(),
                    e_tot: e0[p][i].clone(),
                    rho,
                    gamma,
                    xi,
                    g_prev: zeros(n),
                    nu_prev: zeros(n),
                });
            }
        }
        let state = InversionState {
            n_sources: np,
            n_frequencies: ni,
            variant,
            slots,
            master,
            chi,
            eta_s,
            eta_d,
            g_chi_prev: zeros(n),
            nu_chi_prev: zeros(n),
            iteration: 0,
        };
        Ok(Self { model, input, state })
    }

    pub fn model(&self) -> &ForwardModel<T> {
        self.model
    }

    pub fn input(&self) -> &InversionInput<T> {
        self.input
    }

    /// One PR-CG step with exact line search for every `j_{p,i}`.
    pub fn source_phase(&mut self) -> Result<SourcePhaseReport> {
        let model = self.model;
        let input = self.input;
        let state = &self.state;
        let ni = state.n_frequencies;
        let iteration = state.iteration + 1;
        let grads: Vec<Vec<Cplx<T>>> = (0..state.slots.len())
            .into_par_iter()
            .map(|k| grad_j(model, state, k / ni, k % ni))
            .collect::<Result<_>>()
            .map_err(|e| e.context(format!("iteration {iteration}, source gradients")))?;
        let mut nus: Vec<Vec<Cplx<T>>> = vec![Vec::new(); grads.len()];
        for i in 0..ni {
            let ks: Vec<usize> = (0..state.n_sources).map(|p| p * ni + i).collect();
            let g_now: Vec<&[Cplx<T>]> = ks.iter().map(|&k| grads[k].as_slice()).collect();
            let g_prev: Vec<&[Cplx<T>]> = ks.iter().map(|&k| state.slots[k].g_prev.as_slice()).collect();
            let nu_prev: Vec<&[Cplx<T>]> = ks.iter().map(|&k| state.slots[k].nu_prev.as_slice()).collect();
            for (k, nu) in ks.iter().zip(pr_direction(&g_now, &g_prev, &nu_prev, iteration)) {
                nus[*k] = nu;
            }
        }
        let before: Vec<T> = (0..state.slots.len()).map(|k| state.slot_cost_half(k / ni, k % ni)).collect();
        let steps: Vec<(T, Vec<Cplx<T>>)> = (0..state.slots.len())
            .into_par_iter()
            .map(|k| step_alpha(model, state, k / ni, k % ni, &grads[k], &nus[k]))
            .collect::<Result<_>>()
            .map_err(|e| e.context(format!("iteration {iteration}, source steps")))?;
        let chi = &self.state.chi;
        self.state
            .slots
            .par_iter_mut()
            .zip(grads.into_par_iter().zip(nus.into_par_iter()).zip(steps.par_iter()))
            .enumerate()
            .for_each(|(k, (slot, ((g, nu), (alpha, u))))| {
                let (p, i) = (k / ni, k % ni);
                update_sources_and_fields(model, input, &chi[i], slot, p, i, *alpha, &nu, u);
                slot.g_prev = g;
                slot.nu_prev = nu;
            });
        let mut max_inc = f64::NEG_INFINITY;
        for (k, b) in before.iter().enumerate() {
            let after = self.state.slot_cost_half(k / ni, k % ni).to_f64_lossy();
            let b = b.to_f64_lossy();
            let rel = if b > 0.0 { (after - b) / b } else { after };
            max_inc = max_inc.max(rel);
        }
        let alpha_mean = steps.iter().map(|(a, _)| a.to_f64_lossy()).sum::<f64>() / steps.len() as f64;
        Ok(SourcePhaseReport { alpha_mean, max_relative_increase: max_inc })
    }

    /// One preconditioned PR-CG contrast step; returns `β`.
    pub fn contrast_phase(&mut self) -> Result<f64> {
        let model = self.model;
        let iteration = self.state.iteration + 1;
        let (g, zero_cells) = grad_chi(model, &self.state);
        if zero_cells > 0 {
            debug!("iteration {iteration}: {zero_cells} cells without field energy in the contrast gradient");
        }
        let nu = pr_direction(&[&g], &[&self.state.g_chi_prev], &[&self.state.nu_chi_prev], iteration)
            .pop()
            .expect("one direction");
        let objective = BetaObjective::new(model, self.input, &self.state, &nu);
        let beta = step_beta(&objective);
        update_contrast(model, self.input, &mut self.state, T::of(beta), &nu)
            .map_err(|e| e.context(format!("iteration {iteration}, contrast update")))?;
        self.state.g_chi_prev = g;
        self.state.nu_chi_prev = nu;
        Ok(beta)
    }

    /// Source phase, contrast phase, then bump the iteration counter.
    pub fn step(&mut self, truth: Option<(&ContrastMap<T>, f64)>) -> Result<IterationRecord> {
        let cost_half_before = cost_half(&self.state).to_f64_lossy();
        let report = self.source_phase()?;
        let ch = cost_half(&self.state).to_f64_lossy();
        let beta = self.contrast_phase()?;
        self.state.iteration += 1;
        Ok(IterationRecord {
            iteration: self.state.iteration,
            cost_half_before,
            cost_half: ch,
            cost_full: cost_full(&self.state).to_f64_lossy(),
            err: self.error_against(truth),
            alpha_mean: report.alpha_mean,
            beta,
        })
    }

    fn error_against(&self, truth: Option<(&ContrastMap<T>, f64)>) -> f64 {
        truth
            .and_then(|(t, w)| reconstruction_error(&self.state.master, t, w).ok())
            .unwrap_or(f64::NAN)
    }

    /// Log row describing the state right after initialization.
    pub fn initial_record(&self, truth: Option<(&ContrastMap<T>, f64)>) -> IterationRecord {
        let c = cost_half(&self.state).to_f64_lossy();
        IterationRecord {
            iteration: 0,
            cost_half_before: c,
            cost_half: c,
            cost_full: cost_full(&self.state).to_f64_lossy(),
            err: self.error_against(truth),
            alpha_mean: 0.0,
            beta: 0.0,
        }
    }
}

/// Result of [`run`].
#[derive(Clone, Debug)]
pub struct RunOutcome<T> {
    pub master: ContrastMap<T>,
    /// Row 0 describes the initial state.
    pub log: Vec<IterationRecord>,
    /// `None` when the run stopped on degenerate data or contrast.
    pub state: Option<InversionState<T>>,
}

/// Runs `max_iterations` iterations. `truth` (contrast and `ω` at which the
/// error is measured) only feeds the log.
///
/// Vanishing data or a contrast that projects to zero stop the run early
/// with a warning; the contrast returned is then zero.
pub fn run<T: Real>(
    model: &ForwardModel<T>,
    input: &InversionInput<T>,
    variant: Variant,
    max_iterations: usize,
    truth: Option<(&ContrastMap<T>, f64)>,
) -> Result<RunOutcome<T>> {
    run_with(model, input, variant, max_iterations, truth, |_, _| {})
}

/// [`run`] with a callback after every iteration.
pub fn run_with<T: Real>(
    model: &ForwardModel<T>,
    input: &InversionInput<T>,
    variant: Variant,
    max_iterations: usize,
    truth: Option<(&ContrastMap<T>, f64)>,
    mut observe: impl FnMut(&Inversion<'_, T>, &IterationRecord),
) -> Result<RunOutcome<T>> {
    let zero = ContrastMap::zeros(model.n_cells());
    let mut inv = match Inversion::start(model, input, variant) {
        Ok(inv) => inv,
        Err(Error::Degenerate(msg)) => {
            warn!("inversion stopped at initialization: {msg}");
            return Ok(RunOutcome { master: zero, log: Vec::new(), state: None });
        }
        Err(e) => return Err(e),
    };
    let mut log = vec![inv.initial_record(truth)];
    observe(&inv, &log[0]);
    for _ in 0..max_iterations {
        match inv.step(truth) {
            Ok(rec) => {
                debug!(
                    "iteration {}: cost_half {:.6e} cost_full {:.6e} err {:.4}",
                    rec.iteration, rec.cost_half, rec.cost_full, rec.err
                );
                observe(&inv, &rec);
                log.push(rec);
            }
            Err(Error::Degenerate(msg)) => {
                warn!("inversion stopped after {} iterations: {msg}", inv.state.iteration);
                return Ok(RunOutcome { master: zero, log, state: None });
            }
            Err(e) => return Err(e),
        }
    }
    Ok(RunOutcome { master: inv.state.master.clone(), log, state: Some(inv.state) })
}
