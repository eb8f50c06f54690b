//! Cost-landscape sampling between reconstructions and file exports for
//! iteration logs, contrast maps and landscapes.
//!
//! A solution point is the set of per-frequency contrasts and total fields.
//! Along the two-parameter family
//! `x(β₁, β₂) = β₂[(β₁+1)x_cc − β₁x_act] − (β₂−1)β₁x_mr`
//! the cost is evaluated with contrast sources `j = χ·e_tot` and state fields
//! `e_inc + A⁻¹j`.

use std::io::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::csi::{compute_eta, residuals, ForwardModel, InversionInput, InversionState, IterationRecord};
use crate::error::{Error, Result};
use crate::geometry::{chi_at_frequency, Cartesian2DGrid, ContrastMap, SubdomainIndexSet};
use crate::scalar::{norm_sqr, Cplx, Real};

/// Per-frequency contrasts `chi[i]` and total fields `e_tot[p][i]` on the
/// inversion domain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolutionPoint<T> {
    pub chi: Vec<Vec<Cplx<T>>>,
    pub e_tot: Vec<Vec<Vec<Cplx<T>>>>,
}

impl<T: Real> SolutionPoint<T> {
    pub fn from_state(state: &InversionState<T>) -> Self {
        let e_tot = (0..state.n_sources)
            .map(|p| (0..state.n_frequencies).map(|i| state.slot(p, i).e_tot.clone()).collect())
            .collect();
        Self { chi: state.chi.clone(), e_tot }
    }

    /// The point of a known contrast: its total fields come from forward
    /// solves on the inversion grid.
    pub fn actual(model: &ForwardModel<T>, input: &InversionInput<T>, truth: &ContrastMap<T>) -> Result<Self> {
        input.check(model)?;
        let ni = model.n_frequencies();
        let np = model.n_sources();
        let mut chi = Vec::with_capacity(ni);
        let mut e_tot = vec![Vec::with_capacity(ni); np];
        for (i, &w) in model.omegas().iter().enumerate() {
            let c = chi_at_frequency(truth, T::of(w))?;
            let incs: Vec<Vec<Cplx<T>>> = (0..np).map(|p| input.e_inc[p][i].clone()).collect();
            for (p, e) in model.total_fields(i, &c, &incs)?.into_iter().enumerate() {
                e_tot[p].push(e);
            }
            chi.push(c);
        }
        Ok(Self { chi, e_tot })
    }

    pub fn n_frequencies(&self) -> usize {
        self.chi.len()
    }

    pub fn n_sources(&self) -> usize {
        self.e_tot.len()
    }

    fn shape(&self) -> (Vec<usize>, Vec<Vec<usize>>) {
        (
            self.chi.iter().map(Vec::len).collect(),
            self.e_tot.iter().map(|s| s.iter().map(Vec::len).collect()).collect(),
        )
    }

    /// Checks the point against a forward model.
    pub fn check(&self, model: &ForwardModel<T>) -> Result<()> {
        let n = model.n_cells();
        if self.n_frequencies() != model.n_frequencies() || self.n_sources() != model.n_sources() {
            return Err(Error::Argument(format!(
                "solution point has {} sources x {} frequencies, model has {} x {}",
                self.n_sources(),
                self.n_frequencies(),
                model.n_sources(),
                model.n_frequencies()
            )));
        }
        let ok = self.chi.iter().all(|c| c.len() == n)
            && self.e_tot.iter().all(|s| s.len() == self.n_frequencies() && s.iter().all(|e| e.len() == n));
        if ok {
            Ok(())
        } else {
            Err(Error::Argument(format!("solution point arrays do not match {n} domain cells")))
        }
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

/// Mixing weights `(c_cc, c_act, c_mr)` of the sampled point.
fn weights(beta1: f64, beta2: f64) -> [f64; 3] {
    [beta2 * (beta1 + 1.0), -beta2 * beta1, -(beta2 - 1.0) * beta1]
}

/// `β₂[(β₁+1)x_cc − β₁x_act] − (β₂−1)β₁x_mr`, component-wise.
pub fn sample_solution_space<T: Real>(
    x_cc: &SolutionPoint<T>,
    x_mr: &SolutionPoint<T>,
    x_act: &SolutionPoint<T>,
    beta1: f64,
    beta2: f64,
) -> Result<SolutionPoint<T>> {
    if x_cc.shape() != x_mr.shape() || x_cc.shape() != x_act.shape() {
        return Err(Error::Argument("solution points differ in shape".into()));
    }
    let (b1, b2) = (T::of(beta1), T::of(beta2));
    let one = T::one();
    let mix = |a: &Cplx<T>, act: &Cplx<T>, mr: &Cplx<T>| (a * (b1 + one) - act * b1) * b2 - mr * ((b2 - one) * b1);
    let mix_vec = |a: &[Cplx<T>], act: &[Cplx<T>], mr: &[Cplx<T>]| -> Vec<Cplx<T>> {
        a.iter().zip(act).zip(mr).map(|((a, c), m)| mix(a, c, m)).collect()
    };
    let chi = (0..x_cc.chi.len()).map(|i| mix_vec(&x_cc.chi[i], &x_act.chi[i], &x_mr.chi[i])).collect();
    let e_tot = (0..x_cc.e_tot.len())
        .map(|p| {
            (0..x_cc.e_tot[p].len())
                .map(|i| mix_vec(&x_cc.e_tot[p][i], &x_act.e_tot[p][i], &x_mr.e_tot[p][i]))
                .collect()
        })
        .collect();
    Ok(SolutionPoint { chi, e_tot })
}

/// Cost with all three terms at a solution point, by direct forward solves.
pub fn solution_cost<T: Real>(model: &ForwardModel<T>, input: &InversionInput<T>, x: &SolutionPoint<T>) -> Result<f64> {
    x.check(model)?;
    let (eta_s, eta_d) = compute_eta(input, &x.chi)?;
    let mut total = 0.0;
    for i in 0..model.n_frequencies() {
        let (mut data, mut state) = (0.0, 0.0);
        for p in 0..model.n_sources() {
            let j: Vec<Cplx<T>> = x.chi[i].iter().zip(&x.e_tot[p][i]).map(|(a, b)| a * b).collect();
            let g = model.green(i, &j)?;
            let e: Vec<Cplx<T>> = input.e_inc[p][i].iter().zip(&g).map(|(a, b)| a + b).collect();
            let (rho, gamma, xi) = residuals(model, &input.data[p][i], &x.chi[i], p, i, &j, &e);
            data += (norm_sqr(&rho) + norm_sqr(&xi)).to_f64_lossy();
            state += norm_sqr(&gamma).to_f64_lossy();
        }
        total += eta_s[i].to_f64_lossy() * data + eta_d[i].to_f64_lossy() * state;
    }
    Ok(total)
}

/// `log₁₀` cost sampled on `beta1 × beta2`, row-major by `β₁`.
#[derive(Clone, Debug, PartialEq)]
pub struct Landscape {
    pub beta1: Vec<f64>,
    pub beta2: Vec<f64>,
    pub log10_cost: Vec<f64>,
}

impl Landscape {
    pub fn value(&self, r: usize, c: usize) -> f64 {
        self.log10_cost[r * self.beta2.len() + c]
    }

    /// Position of the smallest finite value.
    pub fn argmin(&self) -> Option<(usize, usize)> {
        let nc = self.beta2.len();
        self.log10_cost
            .iter()
            .enumerate()
            .filter(|(_, v)| v.is_finite())
            .min_by(|a, b| a.1.total_cmp(b.1))
            .map(|(k, _)| (k / nc, k % nc))
    }

    /// Sample cell closest to `(β₁, β₂)`.
    pub fn nearest(&self, beta1: f64, beta2: f64) -> (usize, usize) {
        let near = |axis: &[f64], v: f64| {
            (0..axis.len()).min_by(|&a, &b| (axis[a] - v).abs().total_cmp(&(axis[b] - v).abs())).unwrap_or(0)
        };
        (near(&self.beta1, beta1), near(&self.beta2, beta2))
    }

    /// CSV with `β₂` values along the first line and `β₁` leading each row.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
        let mut head = vec!["beta1\\beta2".to_string()];
        head.extend(self.beta2.iter().map(|b| b.to_string()));
        w.write_record(&head).map_err(|e| csv_error(path, e))?;
        for (r, b1) in self.beta1.iter().enumerate() {
            let mut row = vec![b1.to_string()];
            row.extend((0..self.beta2.len()).map(|c| self.value(r, c).to_string()));
            w.write_record(&row).map_err(|e| csv_error(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new().has_headers(false).from_path(path).map_err(|e| csv_error(path, e))?;
        let mut rows = r.records();
        let head = rows
            .next()
            .ok_or_else(|| Error::parse(path, "empty landscape file"))?
            .map_err(|e| csv_error(path, e))?;
        let beta2 = head.iter().skip(1).map(|s| parse_f64(path, s)).collect::<Result<Vec<_>>>()?;
        let (mut beta1, mut values) = (Vec::new(), Vec::new());
        for row in rows {
            let row = row.map_err(|e| csv_error(path, e))?;
            if row.len() != beta2.len() + 1 {
                return Err(Error::parse(path, format!("row {} has {} fields", beta1.len() + 2, row.len())));
            }
            beta1.push(parse_f64(path, &row[0])?);
            for s in row.iter().skip(1) {
                values.push(parse_f64(path, s)?);
            }
        }
        Ok(Self { beta1, beta2, log10_cost: values })
    }
}

/// `n` evenly spaced samples of `[-1.5, 1.5]`.
pub fn default_axis(n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![0.0],
        _ => (0..n).map(|k| -1.5 + 3.0 * k as f64 / (n - 1) as f64).collect(),
    }
}

/// Landscape from an arbitrary cost; failed or non-positive evaluations
/// become NaN cells.
pub fn landscape<T: Real>(
    costfn: impl Fn(&SolutionPoint<T>) -> Result<f64> + Sync,
    x_cc: &SolutionPoint<T>,
    x_mr: &SolutionPoint<T>,
    x_act: &SolutionPoint<T>,
    beta1: &[f64],
    beta2: &[f64],
) -> Result<Landscape> {
    sample_solution_space(x_cc, x_mr, x_act, 0.0, 0.0)?;
    let log10_cost = cells(beta1, beta2)
        .into_par_iter()
        .map(|(b1, b2)| {
            sample_solution_space(x_cc, x_mr, x_act, b1, b2)
                .and_then(|x| costfn(&x))
                .map_or(f64::NAN, log10_or_nan)
        })
        .collect();
    Ok(Landscape { beta1: beta1.to_vec(), beta2: beta2.to_vec(), log10_cost })
}

fn cells(beta1: &[f64], beta2: &[f64]) -> Vec<(f64, f64)> {
    beta1.iter().flat_map(|&a| beta2.iter().map(move |&b| (a, b))).collect()
}

fn log10_or_nan(v: f64) -> f64 {
    if v > 0.0 {
        v.log10()
    } else {
        f64::NAN
    }
}

/// Exponents `(cc, act, mr)` of every monomial of degree ≤ 3.
fn monomials() -> Vec<[u8; 3]> {
    let mut out = Vec::new();
    for d in 0..=3u8 {
        for a in (0..=d).rev() {
            for b in (0..=d - a).rev() {
                out.push([a, b, d - a - b]);
            }
        }
    }
    out
}

/// Vector-valued polynomial in the three mixing weights.
#[derive(Clone)]
struct PolyVec<T> {
    terms: Vec<(usize, Vec<Cplx<T>>)>,
}

impl<T: Real> PolyVec<T> {
    fn new() -> Self {
        Self { terms: Vec::new() }
    }

    fn add(&mut self, mono: usize, v: &[Cplx<T>], sign: T) {
        if let Some((_, acc)) = self.terms.iter_mut().find(|(m, _)| *m == mono) {
            acc.iter_mut().zip(v).for_each(|(a, b)| *a += b * sign);
        } else {
            self.terms.push((mono, v.iter().map(|b| b * sign).collect()));
        }
    }

    fn map(&self, mut f: impl FnMut(&[Cplx<T>]) -> Result<Vec<Cplx<T>>>) -> Result<Self> {
        let terms = self.terms.iter().map(|(m, v)| Ok((*m, f(v)?))).collect::<Result<_>>()?;
        Ok(Self { terms })
    }

    fn norm_sqr_at(&self, pows: &[T]) -> f64 {
        let n = self.terms.first().map_or(0, |t| t.1.len());
        let zero = Cplx::new(T::zero(), T::zero());
        let mut acc = vec![zero; n];
        for (m, v) in &self.terms {
            let w = pows[*m];
            if w != T::zero() {
                acc.iter_mut().zip(v).for_each(|(a, b)| *a += b * w);
            }
        }
        norm_sqr(&acc).to_f64_lossy()
    }
}

struct SlotPolys<T> {
    rho: PolyVec<T>,
    gamma: PolyVec<T>,
    xi: PolyVec<T>,
    contrast_inc: PolyVec<T>,
}

/// Landscape evaluator that precomputes, per source and frequency, the
/// residuals as polynomials in the mixing weights.
///
/// Only `j`'s contribution to the state field needs forward solves, so the
/// setup costs six solves per source and frequency and each landscape cell
/// is then solve-free.
pub struct LandscapeEvaluator<T> {
    monos: Vec<[u8; 3]>,
    eta_s: Vec<f64>,
    slots: Vec<Vec<SlotPolys<T>>>,
}

impl<T: Real> LandscapeEvaluator<T> {
    pub fn new(
        model: &ForwardModel<T>,
        input: &InversionInput<T>,
        x_cc: &SolutionPoint<T>,
        x_mr: &SolutionPoint<T>,
        x_act: &SolutionPoint<T>,
    ) -> Result<Self> {
        input.check(model)?;
        for x in [x_cc, x_mr, x_act] {
            x.check(model)?;
        }
        let monos = monomials();
        let index = |e: [u8; 3]| monos.iter().position(|m| *m == e).expect("degree ≤ 3");
        let unit = |a: usize| {
            let mut e = [0u8; 3];
            e[a] = 1;
            e
        };
        let plus = |m: usize, a: usize| {
            let mut e = monos[m];
            e[a] += 1;
            index(e)
        };
        let pts = [x_cc, x_act, x_mr];
        let ni = model.n_frequencies();
        let mut eta_s = Vec::with_capacity(ni);
        for i in 0..ni {
            let ys: f64 = input.data.iter().map(|s| norm_sqr(&s[i]).to_f64_lossy()).sum();
            if !(ys > 0.0) {
                return Err(Error::Degenerate(format!("no scattered data at frequency index {i}")));
            }
            eta_s.push(1.0 / ys);
        }
        let one = T::one();
        let jobs: Vec<(usize, usize)> = (0..model.n_sources()).flat_map(|p| (0..ni).map(move |i| (p, i))).collect();
        let built = jobs
            .par_iter()
            .map(|&(p, i)| -> Result<SlotPolys<T>> {
                let y = &input.data[p][i];
                let e_inc = &input.e_inc[p][i];
                let had = |a: &[Cplx<T>], b: &[Cplx<T>]| -> Vec<Cplx<T>> { a.iter().zip(b).map(|(x, y)| x * y).collect() };
                let mut j = PolyVec::new();
                for a in 0..3 {
                    for b in 0..3 {
                        j.add(plus(index(unit(a)), b), &had(&pts[a].chi[i], &pts[b].e_tot[p][i]), one);
                    }
                }
                let mut field = j.map(|v| model.green(i, v))?;
                field.add(0, e_inc, one);
                let mut w = PolyVec::new();
                for (m, v) in &field.terms {
                    for (a, x) in pts.iter().enumerate() {
                        w.add(plus(*m, a), &had(&x.chi[i], v), one);
                    }
                }
                let mut rho = j.map(|v| Ok(model.phi(p, i, v)))?;
                rho.terms.iter_mut().for_each(|(_, v)| v.iter_mut().for_each(|z| *z = -*z));
                rho.add(0, y, one);
                let mut xi = w.map(|v| Ok(model.phi(p, i, v)))?;
                xi.terms.iter_mut().for_each(|(_, v)| v.iter_mut().for_each(|z| *z = -*z));
                xi.add(0, y, one);
                let mut gamma = w;
                for (m, v) in &j.terms {
                    gamma.add(*m, v, -one);
                }
                let mut contrast_inc = PolyVec::new();
                for (a, x) in pts.iter().enumerate() {
                    contrast_inc.add(index(unit(a)), &had(&x.chi[i], e_inc), one);
                }
                Ok(SlotPolys { rho, gamma, xi, contrast_inc })
            })
            .collect::<Result<Vec<_>>>()?;
        let mut slots: Vec<Vec<SlotPolys<T>>> = (0..ni).map(|_| Vec::new()).collect();
        for ((_, i), s) in jobs.iter().zip(built) {
            slots[*i].push(s);
        }
        Ok(Self { monos, eta_s, slots })
    }

    /// Cost at `x(β₁, β₂)`.
    pub fn cost(&self, beta1: f64, beta2: f64) -> Result<f64> {
        let c = weights(beta1, beta2).map(T::of);
        let pows: Vec<T> = self
            .monos
            .iter()
            .map(|e| (0..3).fold(T::one(), |acc, a| acc * c[a].powi(e[a] as i32)))
            .collect();
        let mut total = 0.0;
        for (i, slots) in self.slots.iter().enumerate() {
            let d: f64 = slots.iter().map(|s| s.contrast_inc.norm_sqr_at(&pows)).sum();
            if !(d > 0.0) {
                return Err(Error::Degenerate(format!("contrast vanishes at frequency index {i}")));
            }
            let data: f64 = slots.iter().map(|s| s.rho.norm_sqr_at(&pows) + s.xi.norm_sqr_at(&pows)).sum();
            let state: f64 = slots.iter().map(|s| s.gamma.norm_sqr_at(&pows)).sum();
            total += self.eta_s[i] * data + state / d;
        }
        Ok(total)
    }

    pub fn landscape(&self, beta1: &[f64], beta2: &[f64]) -> Landscape {
        let log10_cost = cells(beta1, beta2)
            .into_par_iter()
            .map(|(b1, b2)| self.cost(b1, b2).map_or(f64::NAN, log10_or_nan))
            .collect();
        Landscape { beta1: beta1.to_vec(), beta2: beta2.to_vec(), log10_cost }
    }
}

const LOG_HEADER: [&str; 6] = ["iteration", "cost_half", "cost_full", "err", "alpha_mean", "beta"];

/// Iteration log as CSV; an empty log gives the header alone.
pub fn export_curves(log: &[IterationRecord], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    w.write_record(LOG_HEADER).map_err(|e| csv_error(path, e))?;
    for r in log {
        w.write_record([
            r.iteration.to_string(),
            r.cost_half.to_string(),
            r.cost_full.to_string(),
            r.err.to_string(),
            r.alpha_mean.to_string(),
            r.beta.to_string(),
        ])
        .map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads a log written by [`export_curves`]. `cost_half_before` is not
/// stored and comes back as NaN.
pub fn read_curves(path: &Path) -> Result<Vec<IterationRecord>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let head = r.headers().map_err(|e| csv_error(path, e))?;
    if head.iter().ne(LOG_HEADER) {
        return Err(Error::parse(path, format!("unexpected header {:?}", head.iter().collect::<Vec<_>>())));
    }
    let mut out = Vec::new();
    for row in r.records() {
        let row = row.map_err(|e| csv_error(path, e))?;
        let f = |k: usize| parse_f64(path, &row[k]);
        out.push(IterationRecord {
            iteration: row[0].parse().map_err(|_| Error::parse(path, format!("bad iteration {:?}", &row[0])))?,
            cost_half_before: f64::NAN,
            cost_half: f(1)?,
            cost_full: f(2)?,
            err: f(3)?,
            alpha_mean: f(4)?,
            beta: f(5)?,
        });
    }
    Ok(out)
}

/// Placement of a domain's bounding box in the plane.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MapHeader {
    pub nx: usize,
    pub ny: usize,
    pub dx: f64,
    pub dy: f64,
    /// Center of the lower-left cell.
    pub x0: f64,
    pub y0: f64,
}

impl MapHeader {
    pub fn of(grid: &Cartesian2DGrid, domain: &SubdomainIndexSet) -> Self {
        let (ix0, iy0, nx, ny) = domain.bbox();
        Self { nx, ny, dx: grid.dx, dy: grid.dy, x0: grid.x(ix0), y0: grid.y(iy0) }
    }
}

/// Per-cell real fields as read back from a map CSV.
#[derive(Clone, Debug, PartialEq)]
pub struct MapData {
    pub header: MapHeader,
    pub names: Vec<String>,
    /// `(ix, iy)` relative to the lower-left cell.
    pub cells: Vec<(usize, usize)>,
    /// `values[f][k]` for field `f` at cell `k`.
    pub values: Vec<Vec<f64>>,
}

/// Writes `<stem>.csv` with every field and one 16-bit `<stem>_<name>.pgm`
/// per field, each with a `.pgm.txt` sidecar holding the mapped range.
pub fn export_map(
    stem: &Path,
    grid: &Cartesian2DGrid,
    domain: &SubdomainIndexSet,
    fields: &[(&str, Vec<f64>)],
) -> Result<()> {
    for (name, v) in fields {
        if v.len() != domain.len() {
            return Err(Error::Argument(format!("field {name} has {} values for {} cells", v.len(), domain.len())));
        }
    }
    let header = MapHeader::of(grid, domain);
    let (ix0, iy0, _, _) = domain.bbox();
    let local: Vec<(usize, usize)> = domain
        .indices()
        .iter()
        .map(|&k| {
            let (ix, iy) = grid.coords(k);
            (ix - ix0, iy - iy0)
        })
        .collect();
    let path = stem.with_extension("csv");
    let mut w = csv::WriterBuilder::new().flexible(true).from_path(&path).map_err(|e| csv_error(&path, e))?;
    let io = |e| csv_error(&path, e);
    w.write_record(["nx", "ny", "dx", "dy", "x0", "y0"]).map_err(io)?;
    w.write_record([
        header.nx.to_string(),
        header.ny.to_string(),
        header.dx.to_string(),
        header.dy.to_string(),
        header.x0.to_string(),
        header.y0.to_string(),
    ])
    .map_err(io)?;
    let mut names = vec!["ix".to_string(), "iy".into(), "x".into(), "y".into()];
    names.extend(fields.iter().map(|(n, _)| n.to_string()));
    w.write_record(&names).map_err(io)?;
    for (k, &(ix, iy)) in local.iter().enumerate() {
        let mut row = vec![
            ix.to_string(),
            iy.to_string(),
            (header.x0 + ix as f64 * header.dx).to_string(),
            (header.y0 + iy as f64 * header.dy).to_string(),
        ];
        row.extend(fields.iter().map(|(_, v)| v[k].to_string()));
        w.write_record(&row).map_err(io)?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    let base = stem.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    for (name, v) in fields {
        let pgm = stem.with_file_name(format!("{base}_{name}.pgm"));
        write_pgm(&pgm, header.nx, header.ny, &local, v)?;
    }
    Ok(())
}

/// Δε and Δσ maps.
pub fn export_contrast<T: Real>(
    stem: &Path,
    grid: &Cartesian2DGrid,
    domain: &SubdomainIndexSet,
    contrast: &ContrastMap<T>,
) -> Result<()> {
    let f = |v: &[T]| v.iter().map(|x| x.to_f64_lossy()).collect::<Vec<_>>();
    export_map(stem, grid, domain, &[("delta_eps", f(&contrast.delta_eps)), ("delta_sigma", f(&contrast.delta_sigma))])
}

/// Real part, imaginary part and magnitude of a complex cell field.
pub fn export_field<T: Real>(stem: &Path, grid: &Cartesian2DGrid, domain: &SubdomainIndexSet, field: &[Cplx<T>]) -> Result<()> {
    let part = |g: fn(&Cplx<T>) -> T| field.iter().map(|z| g(z).to_f64_lossy()).collect::<Vec<_>>();
    export_map(stem, grid, domain, &[("re", part(|z| z.re)), ("im", part(|z| z.im)), ("abs", part(|z| z.norm()))])
}

pub fn read_map_csv(path: &Path) -> Result<MapData> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let rows: Vec<csv::StringRecord> = r.records().collect::<std::result::Result<_, _>>().map_err(|e| csv_error(path, e))?;
    if rows.len() < 3 || rows[1].len() != 6 || rows[2].len() < 4 {
        return Err(Error::parse(path, "map file needs a geometry header, its values and a column header"));
    }
    let g = |k: usize| parse_f64(path, &rows[1][k]);
    let u = |k: usize| rows[1][k].parse::<usize>().map_err(|_| Error::parse(path, format!("bad size {:?}", &rows[1][k])));
    let header = MapHeader { nx: u(0)?, ny: u(1)?, dx: g(2)?, dy: g(3)?, x0: g(4)?, y0: g(5)? };
    let names: Vec<String> = rows[2].iter().skip(4).map(str::to_string).collect();
    let mut cells = Vec::new();
    let mut values = vec![Vec::new(); names.len()];
    for row in &rows[3..] {
        if row.len() != names.len() + 4 {
            return Err(Error::parse(path, format!("cell row has {} fields", row.len())));
        }
        let idx = |k: usize| row[k].parse::<usize>().map_err(|_| Error::parse(path, format!("bad index {:?}", &row[k])));
        cells.push((idx(0)?, idx(1)?));
        for (f, vals) in values.iter_mut().enumerate() {
            vals.push(parse_f64(path, &row[4 + f])?);
        }
    }
    Ok(MapData { header, names, cells, values })
}

/// Range of the finite values, `(0, 0)` when there are none.
pub fn finite_range(v: &[f64]) -> (f64, f64) {
    let mut it = v.iter().copied().filter(|x| x.is_finite());
    match it.next() {
        None => (0.0, 0.0),
        Some(first) => it.fold((first, first), |(lo, hi), x| (lo.min(x), hi.max(x))),
    }
}

fn write_pgm(path: &Path, nx: usize, ny: usize, cells: &[(usize, usize)], v: &[f64]) -> Result<()> {
    let (lo, hi) = finite_range(v);
    let mut img = vec![0u16; nx * ny];
    for (&(ix, iy), &x) in cells.iter().zip(v) {
        if x.is_finite() && hi > lo {
            // first image row is the top of the domain
            img[(ny - 1 - iy) * nx + ix] = ((x - lo) / (hi - lo) * 65535.0).round() as u16;
        }
    }
    let mut bytes = format!("P5\n{nx} {ny}\n65535\n").into_bytes();
    bytes.extend(img.iter().flat_map(|p| p.to_be_bytes()));
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))?;
    let side = path.with_extension("pgm.txt");
    let mut f = std::fs::File::create(&side).map_err(|e| Error::io(&side, e))?;
    writeln!(f, "min {lo}\nmax {hi}").map_err(|e| Error::io(&side, e))
}

/// Reads a 16-bit PGM written by [`export_map`]: `(width, height, pixels)`.
pub fn read_pgm(path: &Path) -> Result<(usize, usize, Vec<u16>)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut fields = Vec::new();
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::parse(path, "truncated PGM header"));
        }
        fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    pos += 1;
    let num = |k: usize| fields[k].parse::<usize>().map_err(|_| Error::parse(path, "bad PGM header"));
    if fields[0] != "P5" || num(3)? != 65535 {
        return Err(Error::parse(path, "not a 16-bit binary PGM"));
    }
    let (w, h) = (num(1)?, num(2)?);
    let data = bytes.get(pos..pos + 2 * w * h).ok_or_else(|| Error::parse(path, "truncated PGM data"))?;
    Ok((w, h, data.chunks(2).map(|c| u16::from_be_bytes([c[0], c[1]])).collect()))
}

/// `(min, max)` from a `.pgm.txt` sidecar.
pub fn read_pgm_range(path: &Path) -> Result<(f64, f64)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let get = |key: &str| {
        text.lines()
            .find_map(|l| l.strip_prefix(key).map(str::trim))
            .ok_or_else(|| Error::parse(path, format!("missing {key}")))
            .and_then(|s| parse_f64(path, s))
    };
    Ok((get("min ")?, get("max ")?))
}

fn parse_f64(path: &Path, s: &str) -> Result<f64> {
    s.trim().parse().map_err(|_| Error::parse(path, format!("bad number {s:?}")))
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    if e.is_io_error() {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => Error::parse(path, format!("{other:?}")),
        }
    } else {
        Error::parse(path, e.to_string())
    }
}

#[cfg(test)]
mod tests;
