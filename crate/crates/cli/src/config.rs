//! Run configuration: JSON with unit-suffixed keys, every key optional.
//! Problems are collected and reported together.

use std::path::{Path, PathBuf};

use ccsi::csi::Variant;
use ccsi::geometry::{austria_case, Cartesian2DGrid, Phantom, SubdomainIndexSet};
use ccsi::scenario::MeasurementConfig;
use serde_json::{json, Map, Value};

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub measurement: MeasurementConfig,
    pub inversion_cell_m: f64,
    pub synthesis_cell_m: f64,
    pub pml_cells: usize,
    pub domain_half_width_m: f64,
    pub phantom_case: Option<u8>,
    pub delta_eps: f64,
    pub delta_sigma_s_per_m: f64,
    pub variant: Variant,
    /// `None` for noise-free data.
    pub snr_db: Option<f64>,
    pub seed: u64,
    pub max_iterations: usize,
    pub output_dir: PathBuf,
    pub landscape_samples: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            measurement: MeasurementConfig::default(),
            inversion_cell_m: 0.03,
            synthesis_cell_m: 0.015,
            pml_cells: 10,
            domain_half_width_m: 1.2,
            phantom_case: Some(1),
            delta_eps: 2.0,
            delta_sigma_s_per_m: 5e-3,
            variant: Variant::Cc,
            snr_db: Some(30.0),
            seed: 0,
            max_iterations: 2048,
            output_dir: PathBuf::from("out"),
            landscape_samples: 61,
        }
    }
}

const KEYS: [&str; 18] = [
    "source_angles_deg",
    "receiver_relative_angles_deg",
    "radius_m",
    "frequencies_hz",
    "inversion_cell_m",
    "synthesis_cell_m",
    "pml_cells",
    "domain_half_width_m",
    "phantom_case",
    "delta_eps",
    "delta_sigma_s_per_m",
    "variant",
    "snr_db",
    "seed",
    "max_iterations",
    "output_dir",
    "landscape_samples",
    "comment",
];

struct Reader<'a> {
    obj: &'a Map<String, Value>,
    problems: Vec<String>,
}

impl Reader<'_> {
    fn get<T>(&mut self, key: &str, what: &str, conv: impl Fn(&Value) -> Option<T>) -> Option<T> {
        let v = self.obj.get(key)?;
        let out = conv(v);
        if out.is_none() {
            self.problems.push(format!("{key}: expected {what}, got {v}"));
        }
        out
    }

    fn number(&mut self, key: &str) -> Option<f64> {
        self.get(key, "a number", Value::as_f64)
    }

    fn count(&mut self, key: &str) -> Option<usize> {
        self.get(key, "a non-negative integer", |v| v.as_u64().map(|u| u as usize))
    }

    fn numbers(&mut self, key: &str) -> Option<Vec<f64>> {
        self.get(key, "an array of numbers", |v| v.as_array()?.iter().map(Value::as_f64).collect())
    }
}

impl RunConfig {
    /// Parses a JSON document; missing keys take their defaults.
    pub fn from_json(text: &str) -> Result<Self, Vec<String>> {
        let value: Value = serde_json::from_str(text).map_err(|e| vec![format!("invalid JSON: {e}")])?;
        let obj = value.as_object().ok_or_else(|| vec!["top level must be a JSON object".to_string()])?;
        let mut r = Reader { obj, problems: Vec::new() };
        for k in obj.keys() {
            if !KEYS.contains(&k.as_str()) {
                r.problems.push(format!("{k}: unknown key"));
            }
        }
        let mut c = Self::default();
        if let Some(v) = r.numbers("source_angles_deg") {
            c.measurement.source_angles_deg = v;
        }
        if let Some(v) = r.numbers("receiver_relative_angles_deg") {
            c.measurement.receiver_relative_angles_deg = v;
        }
        if let Some(v) = r.number("radius_m") {
            c.measurement.radius_m = v;
        }
        if let Some(v) = r.numbers("frequencies_hz") {
            c.measurement.frequencies_hz = v;
        }
        if let Some(v) = r.number("inversion_cell_m") {
            c.inversion_cell_m = v;
        }
        c.synthesis_cell_m = c.inversion_cell_m / 2.0;
        if let Some(v) = r.number("synthesis_cell_m") {
            c.synthesis_cell_m = v;
        }
        if let Some(v) = r.count("pml_cells") {
            c.pml_cells = v;
        }
        if let Some(v) = r.number("domain_half_width_m") {
            c.domain_half_width_m = v;
        }
        let explicit = obj.contains_key("delta_eps") || obj.contains_key("delta_sigma_s_per_m");
        match obj.get("phantom_case") {
            None if explicit => c.phantom_case = None,
            None => {}
            Some(Value::Null) => c.phantom_case = None,
            Some(_) => match r.get("phantom_case", "1, 2 or null", |v| v.as_u64().and_then(|u| u8::try_from(u).ok())) {
                Some(k) => match austria_case(k) {
                    Some((e, s)) => {
                        let agrees = obj.get("delta_eps").map_or(true, |v| v.as_f64() == Some(e))
                            && obj.get("delta_sigma_s_per_m").map_or(true, |v| v.as_f64() == Some(s));
                        if agrees {
                            c.phantom_case = Some(k);
                            c.delta_eps = e;
                            c.delta_sigma_s_per_m = s;
                        } else {
                            r.problems.push(format!("phantom_case {k} conflicts with delta_eps/delta_sigma_s_per_m"));
                        }
                    }
                    None => r.problems.push(format!("phantom_case: unknown case {k}")),
                },
                None => {}
            },
        }
        if explicit && c.phantom_case.is_none() {
            c.delta_eps = r.number("delta_eps").unwrap_or(0.0);
            c.delta_sigma_s_per_m = r.number("delta_sigma_s_per_m").unwrap_or(0.0);
        }
        if let Some(v) = r.get("variant", "\"cc\" or \"plain\"", |v| v.as_str()?.parse().ok()) {
            c.variant = v;
        }
        match obj.get("snr_db") {
            Some(Value::Null) => c.snr_db = None,
            Some(_) => c.snr_db = r.number("snr_db"),
            None => {}
        }
        if let Some(v) = r.get("seed", "a non-negative integer", Value::as_u64) {
            c.seed = v;
        }
        if let Some(v) = r.count("max_iterations") {
            c.max_iterations = v;
        }
        if let Some(v) = r.get("output_dir", "a path string", |v| v.as_str().map(PathBuf::from)) {
            c.output_dir = v;
        }
        if let Some(v) = r.count("landscape_samples") {
            c.landscape_samples = v;
        }
        let mut problems = r.problems;
        problems.extend(c.problems());
        if problems.is_empty() {
            Ok(c)
        } else {
            Err(problems)
        }
    }

    pub fn load(path: &Path) -> Result<Self, Vec<String>> {
        let text = std::fs::read_to_string(path).map_err(|e| vec![format!("cannot read {}: {e}", path.display())])?;
        Self::from_json(&text)
    }

    /// Semantic checks on an assembled configuration.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if let Err(e) = self.measurement.validate() {
            out.extend(e.to_string().trim_start_matches("configuration error: ").split("; ").map(str::to_string));
        }
        let positive = |v: f64| v > 0.0 && v.is_finite();
        if !positive(self.inversion_cell_m) {
            out.push(format!("inversion_cell_m must be positive, got {}", self.inversion_cell_m));
        }
        if !positive(self.synthesis_cell_m) {
            out.push(format!("synthesis_cell_m must be positive, got {}", self.synthesis_cell_m));
        } else if self.synthesis_cell_m >= self.inversion_cell_m {
            out.push(format!(
                "synthesis_cell_m ({}) must be smaller than inversion_cell_m ({})",
                self.synthesis_cell_m, self.inversion_cell_m
            ));
        }
        if self.pml_cells < 4 {
            out.push(format!("pml_cells must be at least 4, got {}", self.pml_cells));
        }
        if !positive(self.domain_half_width_m) {
            out.push(format!("domain_half_width_m must be positive, got {}", self.domain_half_width_m));
        } else if positive(self.measurement.radius_m) && self.domain_half_width_m * 2f64.sqrt() >= self.measurement.radius_m {
            out.push("the inversion domain must lie inside the measurement circle".into());
        }
        if !(self.delta_eps >= 0.0 && self.delta_eps.is_finite()) {
            out.push(format!("delta_eps must be non-negative, got {}", self.delta_eps));
        }
        if !(self.delta_sigma_s_per_m >= 0.0 && self.delta_sigma_s_per_m.is_finite()) {
            out.push(format!("delta_sigma_s_per_m must be non-negative, got {}", self.delta_sigma_s_per_m));
        }
        if let Some(s) = self.snr_db {
            if !s.is_finite() {
                out.push("snr_db must be finite; use null for noise-free data".into());
            }
        }
        if self.landscape_samples < 2 {
            out.push(format!("landscape_samples must be at least 2, got {}", self.landscape_samples));
        }
        out
    }

    /// Every setting with defaults filled in.
    pub fn to_json(&self) -> String {
        let v = json!({
            "source_angles_deg": self.measurement.source_angles_deg,
            "receiver_relative_angles_deg": self.measurement.receiver_relative_angles_deg,
            "radius_m": self.measurement.radius_m,
            "frequencies_hz": self.measurement.frequencies_hz,
            "inversion_cell_m": self.inversion_cell_m,
            "synthesis_cell_m": self.synthesis_cell_m,
            "pml_cells": self.pml_cells,
            "domain_half_width_m": self.domain_half_width_m,
            "phantom_case": self.phantom_case,
            "delta_eps": self.delta_eps,
            "delta_sigma_s_per_m": self.delta_sigma_s_per_m,
            "variant": self.variant,
            "snr_db": self.snr_db,
            "seed": self.seed,
            "max_iterations": self.max_iterations,
            "output_dir": self.output_dir,
            "landscape_samples": self.landscape_samples,
        });
        let mut s = serde_json::to_string_pretty(&v).expect("plain JSON values");
        s.push('\n');
        s
    }

    pub fn phantom(&self) -> Phantom {
        Phantom::austria(self.delta_eps, self.delta_sigma_s_per_m)
    }

    pub fn inversion_grid(&self) -> ccsi::Result<Cartesian2DGrid> {
        self.measurement.enclosing_grid(self.inversion_cell_m, self.pml_cells)
    }

    pub fn synthesis_grid(&self) -> ccsi::Result<Cartesian2DGrid> {
        self.measurement.enclosing_grid(self.synthesis_cell_m, self.pml_cells)
    }

    pub fn domain(&self, grid: &Cartesian2DGrid) -> ccsi::Result<SubdomainIndexSet> {
        let h = self.domain_half_width_m;
        SubdomainIndexSet::from_box(grid, -h, h, -h, h)
    }
}
