//! Measurement setup, synthetic data generation, noise and incident-field
//! calibration.

use std::path::Path;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fdfd::{self, FrequencyOperator, ReceiverOperator};
use crate::geometry::{Cartesian2DGrid, Phantom, SubdomainIndexSet};
use crate::scalar::{Cplx, Real, C0};

/// Transmitter/receiver layout on a circle and the frequency list.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasurementConfig {
    pub source_angles_deg: Vec<f64>,
    /// Receiver azimuths relative to the active source.
    pub receiver_relative_angles_deg: Vec<f64>,
    pub radius_m: f64,
    pub frequencies_hz: Vec<f64>,
}

/// 12 sources every 30°, 49 receivers from 60° to 300° every 5°, 3 m radius,
/// 0.1–0.5 GHz.
pub fn default_config() -> MeasurementConfig {
    MeasurementConfig {
        source_angles_deg: (0..12).map(|k| 30.0 * k as f64).collect(),
        receiver_relative_angles_deg: (0..49).map(|k| 60.0 + 5.0 * k as f64).collect(),
        radius_m: 3.0,
        frequencies_hz: vec![1e8, 2e8, 3e8, 4e8, 5e8],
    }
}

impl Default for MeasurementConfig {
    fn default() -> Self {
        default_config()
    }
}

impl MeasurementConfig {
    /// Checks every invariant and reports all violations at once.
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if !(self.radius_m > 0.0 && self.radius_m.is_finite()) {
            problems.push(format!("radius_m must be positive, got {}", self.radius_m));
        }
        if self.source_angles_deg.is_empty() {
            problems.push("source_angles_deg is empty".to_string());
        }
        if self.receiver_relative_angles_deg.is_empty() {
            problems.push("receiver_relative_angles_deg is empty".to_string());
        }
        if self.frequencies_hz.is_empty() {
            problems.push("frequencies_hz is empty".to_string());
        }
        if self.frequencies_hz.iter().any(|f| !(*f > 0.0 && f.is_finite())) {
            problems.push("frequencies_hz must be positive and finite".to_string());
        }
        if self.frequencies_hz.windows(2).any(|w| w[1] <= w[0]) {
            problems.push("frequencies_hz must be strictly increasing".to_string());
        }
        let angles = self.source_angles_deg.iter().chain(&self.receiver_relative_angles_deg);
        if angles.clone().any(|a| !a.is_finite()) {
            problems.push("angles must be finite".to_string());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems.join("; ")))
        }
    }

    pub fn n_sources(&self) -> usize {
        self.source_angles_deg.len()
    }

    pub fn n_receivers(&self) -> usize {
        self.receiver_relative_angles_deg.len()
    }

    pub fn n_frequencies(&self) -> usize {
        self.frequencies_hz.len()
    }

    pub fn omegas(&self) -> Vec<f64> {
        self.frequencies_hz.iter().map(|f| 2.0 * std::f64::consts::PI * f).collect()
    }

    pub fn source_position(&self, p: usize) -> (f64, f64) {
        fdfd::circle_points(self.radius_m, [self.source_angles_deg[p]])[0]
    }

    pub fn source_positions(&self) -> Vec<(f64, f64)> {
        fdfd::circle_points(self.radius_m, self.source_angles_deg.iter().copied())
    }

    /// Absolute receiver positions while source `p` transmits.
    pub fn receiver_positions(&self, p: usize) -> Vec<(f64, f64)> {
        let a = self.source_angles_deg[p];
        fdfd::circle_points(self.radius_m, self.receiver_relative_angles_deg.iter().map(|r| a + r))
    }

    /// Index of the receiver diametrically opposite the source.
    pub fn opposite_receiver(&self) -> Option<usize> {
        self.receiver_relative_angles_deg
            .iter()
            .position(|a| (a.rem_euclid(360.0) - 180.0).abs() < 1e-9)
    }

    /// Square grid whose interior holds every antenna with a margin of a
    /// few cells.
    pub fn enclosing_grid(&self, cell: f64, pml_cells: usize) -> Result<Cartesian2DGrid> {
        Cartesian2DGrid::centered(self.radius_m + 4.0 * cell, cell, pml_cells)
    }
}

/// Cell size of the fine synthesis rule `λ_min / (45·√εr_max)`.
pub fn fine_grid_cell(f_max_hz: f64, eps_r_max: f64) -> f64 {
    C0 / f_max_hz / (45.0 * eps_r_max.max(1.0).sqrt())
}

/// Complex samples indexed `[p][i][q]`.
pub type DataCube<T> = Vec<Vec<Vec<Cplx<T>>>>;

/// Where a measurement set came from.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub seed: Option<u64>,
    pub snr_db: Option<f64>,
    pub synthesis_grid: Option<Cartesian2DGrid>,
    pub inversion_grid: Option<Cartesian2DGrid>,
}

/// Scattered, incident and total receiver data for every source and
/// frequency.
#[derive(Clone, Debug, PartialEq)]
pub struct MeasurementSet<T> {
    pub frequencies_hz: Vec<f64>,
    pub scattered: DataCube<T>,
    pub incident: Option<DataCube<T>>,
    pub total: Option<DataCube<T>>,
    pub provenance: Provenance,
}

const CSV_HEADER: [&str; 9] = [
    "freq_hz",
    "src_index",
    "rx_index",
    "re_scattered",
    "im_scattered",
    "re_incident",
    "im_incident",
    "re_total",
    "im_total",
];

impl<T: Real> MeasurementSet<T> {
    pub fn n_sources(&self) -> usize {
        self.scattered.len()
    }

    pub fn n_frequencies(&self) -> usize {
        self.frequencies_hz.len()
    }

    pub fn n_receivers(&self) -> usize {
        self.scattered.first().and_then(|s| s.first()).map_or(0, |q| q.len())
    }

    /// Checks the array shapes against `config`.
    pub fn check_against(&self, config: &MeasurementConfig) -> Result<()> {
        let (np, ni, nq) = (config.n_sources(), config.n_frequencies(), config.n_receivers());
        let cube_ok = |c: &DataCube<T>| c.len() == np && c.iter().all(|s| s.len() == ni && s.iter().all(|q| q.len() == nq));
        let freqs_ok = self.frequencies_hz.len() == ni
            && self.frequencies_hz.iter().zip(&config.frequencies_hz).all(|(a, b)| (a - b).abs() <= 1e-9 * b);
        if !freqs_ok || !cube_ok(&self.scattered) || !self.incident.as_ref().map_or(true, cube_ok) || !self.total.as_ref().map_or(true, cube_ok) {
            return Err(Error::Config(format!(
                "measurement set does not match the configuration ({np} sources, {ni} frequencies, {nq} receivers)"
            )));
        }
        Ok(())
    }

    /// Writes the set as CSV, one row per (frequency, source, receiver).
    /// Absent incident/total arrays leave their columns empty.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
        w.write_record(CSV_HEADER).map_err(|e| csv_error(path, e))?;
        let fmt = |v: Option<Cplx<T>>| match v {
            Some(c) => [c.re.to_f64_lossy().to_string(), c.im.to_f64_lossy().to_string()],
            None => [String::new(), String::new()],
        };
        for (i, f) in self.frequencies_hz.iter().enumerate() {
            for p in 0..self.n_sources() {
                for q in 0..self.scattered[p][i].len() {
                    let [sr, si] = fmt(Some(self.scattered[p][i][q]));
                    let [ir, ii] = fmt(self.incident.as_ref().map(|c| c[p][i][q]));
                    let [tr, ti] = fmt(self.total.as_ref().map(|c| c[p][i][q]));
                    w.write_record([f.to_string(), p.to_string(), q.to_string(), sr, si, ir, ii, tr, ti])
                        .map_err(|e| csv_error(path, e))?;
                }
            }
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    /// Reads a set written by [`Self::write_csv`]; every (f, p, q) triple
    /// must be present exactly once.
    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
        let header = r.headers().map_err(|e| csv_error(path, e))?.clone();
        if header.iter().ne(CSV_HEADER.iter().copied()) {
            return Err(Error::parse(path, format!("unexpected header, expected {}", CSV_HEADER.join(","))));
        }
        struct Row {
            f: f64,
            p: usize,
            q: usize,
            vals: [Option<Complex64>; 3],
        }
        let mut rows = Vec::new();
        for (line, rec) in r.records().enumerate() {
            let rec = rec.map_err(|e| csv_error(path, e))?;
            let at = |msg: String| Error::parse(path, format!("record {}: {msg}", line + 1));
            let num = |k: usize| -> Result<Option<f64>> {
                let s = rec.get(k).unwrap_or("").trim();
                if s.is_empty() {
                    return Ok(None);
                }
                s.parse::<f64>().map(Some).map_err(|e| at(format!("column {}: {e}", CSV_HEADER[k])))
            };
            let idx = |k: usize| -> Result<usize> {
                rec.get(k)
                    .unwrap_or("")
                    .trim()
                    .parse::<usize>()
                    .map_err(|e| at(format!("column {}: {e}", CSV_HEADER[k])))
            };
            let f = num(0)?.ok_or_else(|| at("missing frequency".into()))?;
            let mut vals = [None; 3];
            for (c, v) in vals.iter_mut().enumerate() {
                *v = match (num(3 + 2 * c)?, num(4 + 2 * c)?) {
                    (Some(re), Some(im)) => Some(Complex64::new(re, im)),
                    (None, None) => None,
                    _ => return Err(at(format!("half-empty complex value in {}", CSV_HEADER[3 + 2 * c]))),
                };
            }
            if vals[0].is_none() {
                return Err(at("missing scattered value".into()));
            }
            rows.push(Row { f, p: idx(1)?, q: idx(2)?, vals });
        }
        if rows.is_empty() {
            return Err(Error::parse(path, "no data rows"));
        }
        let mut freqs: Vec<f64> = Vec::new();
        for row in &rows {
            if !freqs.contains(&row.f) {
                freqs.push(row.f);
            }
        }
        freqs.sort_by(|a, b| a.total_cmp(b));
        let np = rows.iter().map(|r| r.p).max().unwrap_or(0) + 1;
        let nq = rows.iter().map(|r| r.q).max().unwrap_or(0) + 1;
        let ni = freqs.len();
        if rows.len() != np * ni * nq {
            return Err(Error::parse(
                path,
                format!("{} rows do not fill {np} sources x {ni} frequencies x {nq} receivers", rows.len()),
            ));
        }
        let has = [true, rows.iter().all(|r| r.vals[1].is_some()), rows.iter().all(|r| r.vals[2].is_some())];
        let zero = Cplx::new(T::zero(), T::zero());
        let mut cubes = [vec![vec![vec![zero; nq]; ni]; np], vec![vec![vec![zero; nq]; ni]; np], vec![vec![vec![zero; nq]; ni]; np]];
        let mut seen = vec![false; np * ni * nq];
        for row in &rows {
            let i = freqs.iter().position(|f| *f == row.f).expect("frequency collected above");
            let slot = (row.p * ni + i) * nq + row.q;
            if std::mem::replace(&mut seen[slot], true) {
                return Err(Error::parse(path, format!("duplicate row for f={} p={} q={}", row.f, row.p, row.q)));
            }
            for c in 0..3 {
                if let Some(v) = row.vals[c] {
                    cubes[c][row.p][i][row.q] = Cplx::new(T::of(v.re), T::of(v.im));
                }
            }
        }
        let [s, inc, tot] = cubes;
        Ok(Self {
            frequencies_hz: freqs,
            scattered: s,
            incident: has[1].then_some(inc),
            total: has[2].then_some(tot),
            provenance: Provenance::default(),
        })
    }
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

/// Simulates the experiment without and with `phantom` on `synthesis_grid`.
///
/// `synthesis_grid` must be strictly finer than `inversion_grid` so that
/// the data do not share the inversion discretization. The contrast is
/// area-weighted on the synthesis grid.
pub fn synthesize<T: Real>(
    config: &MeasurementConfig,
    phantom: &Phantom,
    synthesis_grid: &Cartesian2DGrid,
    inversion_grid: &Cartesian2DGrid,
) -> Result<MeasurementSet<T>> {
    config.validate()?;
    if !(synthesis_grid.dx < inversion_grid.dx && synthesis_grid.dy < inversion_grid.dy) {
        return Err(Error::Config(format!(
            "synthesis cells ({} x {} m) must be strictly smaller than inversion cells ({} x {} m)",
            synthesis_grid.dx, synthesis_grid.dy, inversion_grid.dx, inversion_grid.dy
        )));
    }
    synthesize_on(config, phantom, synthesis_grid)
}

/// [`synthesize`] without the inverse-crime guard.
pub fn synthesize_on<T: Real>(
    config: &MeasurementConfig,
    phantom: &Phantom,
    grid: &Cartesian2DGrid,
) -> Result<MeasurementSet<T>> {
    config.validate()?;
    let receivers: Vec<ReceiverOperator<T>> = (0..config.n_sources())
        .map(|p| ReceiverOperator::new(grid, &config.receiver_positions(p)))
        .collect::<Result<_>>()?;
    for p in 0..config.n_sources() {
        if grid.bilinear(config.source_position(p).0, config.source_position(p).1).is_none() {
            return Err(Error::Config(format!("source {p} lies outside the synthesis grid")));
        }
    }
    let omegas = config.omegas();
    // per frequency: [p] -> (incident, total)
    let per_freq: Vec<Vec<(Vec<Cplx<T>>, Vec<Cplx<T>>)>> = omegas
        .par_iter()
        .enumerate()
        .map(|(i, &w)| {
            let ctx = |e: Error| e.context(format!("frequency index {i} ({:.6e} Hz)", config.frequencies_hz[i]));
            let chi = phantom.chi_on_grid::<T>(grid, w).map_err(ctx)?;
            let background = FrequencyOperator::<T>::assemble(grid, T::of(w), None).map_err(ctx)?;
            let object = FrequencyOperator::<T>::assemble(grid, T::of(w), Some(&chi)).map_err(ctx)?;
            (0..config.n_sources())
                .into_par_iter()
                .map(|p| {
                    let at = |e: Error| e.context(format!("source {p}, frequency index {i}"));
                    let s = fdfd::point_source::<T>(grid, config.source_position(p), w).map_err(at)?;
                    let inc = receivers[p].sample(&background.solve(&s).map_err(at)?);
                    let tot = receivers[p].sample(&object.solve(&s).map_err(at)?);
                    Ok((inc, tot))
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    let np = config.n_sources();
    let ni = omegas.len();
    let mut incident = vec![Vec::with_capacity(ni); np];
    let mut total = vec![Vec::with_capacity(ni); np];
    let mut scattered = vec![Vec::with_capacity(ni); np];
    for freq in per_freq {
        for (p, (inc, tot)) in freq.into_iter().enumerate() {
            scattered[p].push(tot.iter().zip(&inc).map(|(t, e)| t - e).collect());
            incident[p].push(inc);
            total[p].push(tot);
        }
    }
    Ok(MeasurementSet {
        frequencies_hz: config.frequencies_hz.clone(),
        scattered,
        incident: Some(incident),
        total: Some(total),
        provenance: Provenance { synthesis_grid: Some(grid.clone()), ..Provenance::default() },
    })
}

/// Adds circular complex Gaussian noise `n` to the scattered data and
/// splits it as `total + n/2`, `incident − n/2`; the noisy scattered data
/// are stored as `total′ − incident′`.
///
/// Per frequency, the noise is scaled so that
/// `Σ_p‖scattered‖² / Σ_p‖n‖² = 10^(snr_db/10)` holds exactly for the
/// realization drawn. `snr_db = +∞` returns the input unchanged.
pub fn add_noise<T: Real>(ms: &MeasurementSet<T>, snr_db: f64, seed: u64) -> Result<MeasurementSet<T>> {
    let (Some(incident), Some(total)) = (&ms.incident, &ms.total) else {
        return Err(Error::Argument("noise requires incident and total arrays".into()));
    };
    if snr_db.is_nan() {
        return Err(Error::Argument("snr_db is NaN".into()));
    }
    let mut out = ms.clone();
    out.provenance.seed = Some(seed);
    out.provenance.snr_db = Some(snr_db);
    if snr_db == f64::INFINITY {
        return Ok(out);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let np = ms.n_sources();
    let (out_inc, out_tot) = (out.incident.as_mut().expect("checked"), out.total.as_mut().expect("checked"));
    for i in 0..ms.n_frequencies() {
        let mut noise: Vec<Vec<Complex64>> = Vec::with_capacity(np);
        for p in 0..np {
            noise.push(
                (0..ms.scattered[p][i].len())
                    .map(|_| {
                        let re: f64 = StandardNormal.sample(&mut rng);
                        let im: f64 = StandardNormal.sample(&mut rng);
                        Complex64::new(re, im)
                    })
                    .collect(),
            );
        }
        let signal: f64 = (0..np).map(|p| power(&ms.scattered[p][i])).sum();
        let drawn: f64 = noise.iter().flatten().map(|n| n.norm_sqr()).sum();
        let scale = if drawn > 0.0 { (signal / 10f64.powf(snr_db / 10.0) / drawn).sqrt() } else { 0.0 };
        for p in 0..np {
            for (q, n) in noise[p].iter().enumerate() {
                let n = Cplx::new(T::of(n.re * scale), T::of(n.im * scale));
                let half = n * T::of(0.5);
                out_tot[p][i][q] = total[p][i][q] + half;
                out_inc[p][i][q] = incident[p][i][q] - half;
                // equals scattered + n up to rounding, and keeps the
                // difference identity exact
                out.scattered[p][i][q] = out_tot[p][i][q] - out_inc[p][i][q];
            }
        }
    }
    Ok(out)
}

fn power<T: Real>(v: &[Cplx<T>]) -> f64 {
    v.iter().map(|c| c.norm_sqr().to_f64_lossy()).sum()
}

/// Realized per-frequency SNR (dB) of `noisy` relative to `clean` scattered data.
pub fn empirical_snr_db<T: Real>(clean: &MeasurementSet<T>, noisy: &MeasurementSet<T>) -> Vec<f64> {
    (0..clean.n_frequencies())
        .map(|i| {
            let mut s = 0.0;
            let mut n = 0.0;
            for p in 0..clean.n_sources() {
                for (a, b) in clean.scattered[p][i].iter().zip(&noisy.scattered[p][i]) {
                    s += a.norm_sqr().to_f64_lossy();
                    n += (b - a).norm_sqr().to_f64_lossy();
                }
            }
            10.0 * (s / n).log10()
        })
        .collect()
}

/// One complex factor per `[p][i]`: measured incident field at the receiver
/// opposite the source divided by the analytic line-source field there.
pub fn calibrate_incident<T: Real>(config: &MeasurementConfig, measured_incident: &DataCube<T>) -> Result<Vec<Vec<Cplx<T>>>> {
    let q = config
        .opposite_receiver()
        .ok_or_else(|| Error::Config("calibration needs a receiver at relative angle 180 degrees".into()))?;
    let omegas = config.omegas();
    (0..config.n_sources())
        .map(|p| {
            let rx = config.receiver_positions(p)[q];
            let src = config.source_position(p);
            omegas
                .iter()
                .enumerate()
                .map(|(i, &w)| {
                    let g: Cplx<T> = fdfd::line_source_at(&[rx], src, w)[0];
                    if g.norm_sqr() == T::zero() {
                        return Err(Error::Numerical(format!("analytic incident field vanishes for source {p}, frequency {i}")));
                    }
                    let m = measured_incident
                        .get(p)
                        .and_then(|s| s.get(i))
                        .and_then(|v| v.get(q))
                        .ok_or_else(|| Error::Argument(format!("no incident sample for source {p}, frequency {i}")))?;
                    Ok(*m / g)
                })
                .collect()
        })
        .collect()
}

/// Calibrated incident fields on `domain`, indexed `[p][i]`.
pub fn calibrated_incident_fields<T: Real>(
    config: &MeasurementConfig,
    factors: &[Vec<Cplx<T>>],
    grid: &Cartesian2DGrid,
    domain: &SubdomainIndexSet,
) -> Result<Vec<Vec<Vec<Cplx<T>>>>> {
    let omegas = config.omegas();
    (0..config.n_sources())
        .map(|p| {
            omegas
                .iter()
                .enumerate()
                .map(|(i, &w)| {
                    let full = fdfd::incident_field_line_source::<T>(grid, config.source_position(p), w)?;
                    let c = factors[p][i];
                    Ok(domain.restrict(&full).into_iter().map(|v| v * c).collect())
                })
                .collect()
        })
        .collect()
}

#[cfg(test)]
mod tests;
