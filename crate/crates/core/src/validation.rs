//! Self-checks of the solver stack against independent references: the
//! Mie series, adjoint pairings and finite-difference gradients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::csi::{
    refresh_contrast, cost_full, grad_chi_unpreconditioned, grad_j, residuals, ForwardModel, Inversion,
    InversionInput, InversionState, Variant,
};
use crate::error::Result;
use crate::fdfd::{self, circle_points};
use crate::geometry::{chi_at_frequency, ContrastMap, Phantom, Shape, SubdomainIndexSet};
use crate::mie::MieCylinder;
use crate::scalar::{dot, norm_sqr, Cplx, C0};
use crate::scenario::{synthesize_on, MeasurementConfig};

type C = Cplx<f64>;

/// One measured quantity and the bound it must stay below.
#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub limit: f64,
}

impl Check {
    pub fn passed(&self) -> bool {
        self.value.is_finite() && self.value < self.limit
    }
}

impl std::fmt::Display for Check {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let verdict = if self.passed() { "PASS" } else { "FAIL" };
        write!(f, "{verdict} {}: {:.3e} (limit {:.1e})", self.name, self.value, self.limit)
    }
}

/// Relative RMS misfit of the simulated scattered field of a homogeneous
/// cylinder (εr = 3, radius 0.2 m, 0.3 GHz, receivers on a 3 m circle)
/// against the Mie series, on cells of λ/30 in the cylinder.
pub fn mie_check() -> Result<Check> {
    let f = 3e8;
    let config = MeasurementConfig { frequencies_hz: vec![f], ..MeasurementConfig::default() };
    let cell = C0 / f / 3f64.sqrt() / 30.0;
    let grid = config.enclosing_grid(cell, 10)?;
    let ms = synthesize_on::<f64>(&config, &Phantom::cylinder(0.2, 2.0, 0.0), &grid)?;
    let cyl = MieCylinder { radius: 0.2, eps_r: 3.0 };
    let (mut err, mut norm) = (0.0, 0.0);
    for p in 0..config.n_sources() {
        let rx = circle_points(config.radius_m, config.receiver_relative_angles_deg.iter().map(|a| a + config.source_angles_deg[p]));
        let mie = cyl.scattered_field(f, config.source_position(p), &rx);
        for (a, b) in ms.scattered[p][0].iter().zip(&mie) {
            err += (a - b).norm_sqr();
            norm += b.norm_sqr();
        }
    }
    Ok(Check { name: "scattered field vs Mie series".into(), value: (err / norm).sqrt(), limit: 0.02 })
}

/// Small two-frequency problem with model-consistent data.
struct Instance {
    model: ForwardModel<f64>,
    input: InversionInput<f64>,
}

fn instance() -> Result<Instance> {
    let config = MeasurementConfig {
        source_angles_deg: (0..6).map(|k| 60.0 * k as f64).collect(),
        receiver_relative_angles_deg: (0..11).map(|k| 90.0 + 18.0 * k as f64).collect(),
        radius_m: 1.0,
        frequencies_hz: vec![2e8, 4e8],
    };
    let grid = config.enclosing_grid(0.05, 10)?;
    let domain = SubdomainIndexSet::from_box(&grid, -0.4, 0.4, -0.4, 0.4)?;
    let model = ForwardModel::for_config(&grid, &domain, &config)?;
    let truth: ContrastMap<f64> =
        Phantom { shapes: vec![Shape::Disk { center: (0.05, -0.02), radius: 0.24 }], d_eps: 1.0, d_sigma: 0.01 }
            .rasterize(&grid, &domain)?;
    let mut e_inc = vec![Vec::new(); config.n_sources()];
    let mut data = vec![Vec::new(); config.n_sources()];
    for (i, &w) in config.omegas().iter().enumerate() {
        let incs: Vec<Vec<C>> = (0..config.n_sources())
            .map(|p| Ok(domain.restrict(&fdfd::incident_field_line_source(&grid, config.source_position(p), w)?)))
            .collect::<Result<_>>()?;
        let chi = chi_at_frequency(&truth, w)?;
        let tot = model.total_fields(i, &chi, &incs)?;
        for (p, inc) in incs.into_iter().enumerate() {
            let j: Vec<C> = chi.iter().zip(&tot[p]).map(|(a, b)| a * b).collect();
            data[p].push(model.phi(p, i, &j));
            e_inc[p].push(inc);
        }
    }
    Ok(Instance { model, input: InversionInput { data, e_inc } })
}

fn probe(rng: &mut ChaCha8Rng, n: usize) -> Vec<C> {
    (0..n).map(|_| C::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect()
}

/// Largest relative mismatch of `⟨Φx, y⟩ = ⟨x, Φᴴy⟩` and
/// `⟨A⁻¹s, v⟩ = ⟨s, A⁻ᴴv⟩` over `probes` random pairs.
pub fn adjoint_checks(probes: usize, seed: u64) -> Result<Vec<Check>> {
    let inst = instance()?;
    let m = &inst.model;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut phi_err, mut green_err) = (0.0f64, 0.0f64);
    for k in 0..probes {
        let (p, i) = (k % m.n_sources(), k % m.n_frequencies());
        let x = probe(&mut rng, m.n_cells());
        let y = probe(&mut rng, m.n_receivers(p));
        let (a, b) = (dot(&y, &m.phi(p, i, &x)), dot(&m.phi_adjoint(p, i, &y), &x));
        phi_err = phi_err.max((a - b).norm() / a.norm().max(b.norm()));
        let s = probe(&mut rng, m.n_cells());
        let v = probe(&mut rng, m.n_cells());
        let (a, b) = (dot(&v, &m.green(i, &s)?), dot(&m.green_adjoint(i, &v)?, &s));
        green_err = green_err.max((a - b).norm() / a.norm().max(b.norm()));
    }
    Ok(vec![
        Check { name: format!("measurement adjoint ({probes} probes)"), value: phi_err, limit: 1e-10 },
        Check { name: format!("inverse operator adjoint ({probes} probes)"), value: green_err, limit: 1e-10 },
    ])
}

fn with_sources(inst: &Instance, state: &mut InversionState<f64>, p: usize, i: usize, j: Vec<C>) -> Result<()> {
    let g = inst.model.green(i, &j)?;
    let e: Vec<C> = inst.input.e_inc[p][i].iter().zip(&g).map(|(a, b)| a + b).collect();
    let (rho, gamma, xi) = residuals(&inst.model, &inst.input.data[p][i], &state.chi[i], p, i, &j, &e);
    let s = state.slot_mut(p, i);
    s.j = j;
    s.e_tot = e;
    s.rho = rho;
    s.gamma = gamma;
    s.xi = xi;
    Ok(())
}

/// Central finite differences, step `10⁻⁶·‖x‖`, of the source and contrast
/// costs against their analytic gradients along `directions` random
/// directions.
pub fn gradient_checks(directions: usize, seed: u64) -> Result<Vec<Check>> {
    let inst = instance()?;
    let mut out = Vec::new();
    for variant in [Variant::Cc, Variant::Plain] {
        let mut inv = Inversion::start(&inst.model, &inst.input, variant)?;
        for _ in 0..2 {
            inv.step(None)?;
        }
        let state = inv.state.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (p, i) = (1, 1);
        let g = grad_j(&inst.model, &state, p, i)?;
        let j = state.slot(p, i).j.clone();
        let h = 1e-6 * norm_sqr(&j).sqrt();
        let mut worst_j = 0.0f64;
        for _ in 0..directions {
            let mut d = probe(&mut rng, j.len());
            let nd = norm_sqr(&d).sqrt();
            d.iter_mut().for_each(|v| *v /= nd);
            let at = |sign: f64| -> Result<f64> {
                let mut st = state.clone();
                with_sources(&inst, &mut st, p, i, j.iter().zip(&d).map(|(a, b)| a + b * (sign * h)).collect())?;
                Ok(st.slot_cost_half(p, i))
            };
            let fd = (at(1.0)? - at(-1.0)?) / (2.0 * h);
            let an = dot(&g, &d).re;
            worst_j = worst_j.max((fd - an).abs() / an.abs());
        }
        out.push(Check { name: format!("{variant}: contrast-source gradient"), value: worst_j, limit: 1e-5 });

        let (ge, gs) = grad_chi_unpreconditioned(&inst.model, &state);
        let m = &state.master;
        let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let mut worst_chi = 0.0f64;
        for _ in 0..directions {
            let de: Vec<f64> = (0..m.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let ds: Vec<f64> = (0..m.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let he = 1e-6 * norm(&m.delta_eps) / norm(&de);
            let hs = 1e-6 * norm(&m.delta_sigma).max(1e-6) / norm(&ds);
            let at = |sign: f64| -> Result<f64> {
                let mut st = state.clone();
                st.master = ContrastMap {
                    delta_eps: m.delta_eps.iter().zip(&de).map(|(a, b)| a + sign * he * b).collect(),
                    delta_sigma: m.delta_sigma.iter().zip(&ds).map(|(a, b)| a + sign * hs * b).collect(),
                };
                refresh_contrast(&inst.model, &inst.input, &mut st)?;
                Ok(cost_full(&st))
            };
            let fd = at(1.0)? - at(-1.0)?;
            let an = 2.0
                * (he * ge.iter().zip(&de).map(|(a, b)| a * b).sum::<f64>()
                    + hs * gs.iter().zip(&ds).map(|(a, b)| a * b).sum::<f64>());
            worst_chi = worst_chi.max((fd - an).abs() / an.abs());
        }
        out.push(Check { name: format!("{variant}: contrast gradient"), value: worst_chi, limit: 1e-5 });
    }
    Ok(out)
}

/// Every check, Mie first.
pub fn run_all(seed: u64) -> Result<Vec<Check>> {
    let mut out = vec![mie_check()?];
    out.extend(adjoint_checks(50, seed)?);
    out.extend(gradient_checks(10, seed)?);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_instance_checks_pass() {
        for c in adjoint_checks(6, 1).unwrap().into_iter().chain(gradient_checks(3, 2).unwrap()) {
            assert!(c.passed(), "{c}");
        }
    }

    #[test]
    fn verdict_lines() {
        let c = Check { name: "x".into(), value: 0.5, limit: 1.0 };
        assert!(c.to_string().starts_with("PASS x"));
        assert!(!Check { value: f64::NAN, ..c.clone() }.passed());
        assert!(!Check { value: 1.0, ..c }.passed());
    }
}
