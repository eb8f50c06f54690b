use super::*;
use crate::mie::MieCylinder;
use proptest::prelude::*;

fn small_config(freqs: Vec<f64>) -> MeasurementConfig {
    MeasurementConfig {
        source_angles_deg: (0..12).map(|k| 30.0 * k as f64).collect(),
        receiver_relative_angles_deg: (0..9).map(|k| 140.0 + 10.0 * k as f64).collect(),
        radius_m: 1.5,
        frequencies_hz: freqs,
    }
}

fn rel_rms(a: &[Cplx<f64>], b: &[Complex64]) -> f64 {
    let e: f64 = a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum();
    let n: f64 = b.iter().map(|y| y.norm_sqr()).sum();
    (e / n).sqrt()
}

#[test]
fn default_config_counts() {
    let c = default_config();
    c.validate().unwrap();
    assert_eq!(c.n_sources() * c.n_receivers(), 588);
    assert_eq!(c.n_frequencies(), 5);
    for p in 0..c.n_sources() {
        for (x, y) in c.receiver_positions(p) {
            assert!((x.hypot(y) - 3.0).abs() < 1e-12);
        }
    }
    assert_eq!(c.opposite_receiver(), Some(24));
}

#[test]
fn validation_lists_every_problem() {
    let c = MeasurementConfig {
        source_angles_deg: vec![],
        receiver_relative_angles_deg: vec![180.0],
        radius_m: -1.0,
        frequencies_hz: vec![2e8, 1e8],
    };
    let msg = c.validate().unwrap_err().to_string();
    assert!(msg.contains("radius_m"), "{msg}");
    assert!(msg.contains("source_angles_deg"), "{msg}");
    assert!(msg.contains("increasing"), "{msg}");
}

#[test]
fn zero_contrast_gives_zero_scattering() {
    let c = small_config(vec![1e8, 2e8]);
    let grid = c.enclosing_grid(0.05, 10).unwrap();
    let coarse = c.enclosing_grid(0.1, 10).unwrap();
    let ms: MeasurementSet<f64> = synthesize(&c, &Phantom::empty(), &grid, &coarse).unwrap();
    let inc = ms.incident.as_ref().unwrap();
    for p in 0..c.n_sources() {
        for i in 0..2 {
            let scale = inc[p][i].iter().map(|v| v.norm()).fold(0.0, f64::max);
            assert!(ms.scattered[p][i].iter().all(|v| v.norm() <= 1e-10 * scale));
        }
    }
}

#[test]
fn inverse_crime_guard() {
    let c = small_config(vec![1e8]);
    let grid = c.enclosing_grid(0.05, 10).unwrap();
    let err = synthesize::<f64>(&c, &Phantom::empty(), &grid, &grid).unwrap_err();
    assert!(matches!(err, Error::Config(_)));
}

#[test]
fn cylinder_data_match_series_solution() {
    let mut c = default_config();
    c.frequencies_hz = vec![3e8];
    c.source_angles_deg = vec![0.0, 130.0];
    let cell = C0 / 3e8 / 3f64.sqrt() / 30.0;
    let grid = c.enclosing_grid(cell, 10).unwrap();
    let ms: MeasurementSet<f64> = synthesize_on(&c, &Phantom::cylinder(0.2, 2.0, 0.0), &grid).unwrap();
    let mie = MieCylinder { radius: 0.2, eps_r: 3.0 };
    for p in 0..2 {
        let exact = mie.scattered_field(3e8, c.source_position(p), &c.receiver_positions(p));
        let err = rel_rms(&ms.scattered[p][0], &exact);
        assert!(err < 0.02, "source {p}: {err}");
    }
}

#[test]
fn quarter_turn_permutes_sources() {
    let c = small_config(vec![1e8]);
    let grid = c.enclosing_grid(0.06, 10).unwrap();
    let phantom = Phantom::austria(2.0, 5e-3);
    let a: MeasurementSet<f64> = synthesize_on(&c, &phantom, &grid).unwrap();
    let b: MeasurementSet<f64> = synthesize_on(&c, &phantom.rotated(std::f64::consts::FRAC_PI_2), &grid).unwrap();
    let scale = a.scattered.iter().flatten().flatten().map(|v| v.norm()).fold(0.0, f64::max);
    for p in 0..12 {
        for (x, y) in b.scattered[(p + 3) % 12][0].iter().zip(&a.scattered[p][0]) {
            assert!((x - y).norm() < 1e-9 * scale, "{x} vs {y}");
        }
    }
}

fn toy_set(seed: u64) -> MeasurementSet<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cube = |np: usize, ni: usize, nq: usize| -> DataCube<f64> {
        (0..np)
            .map(|_| {
                (0..ni)
                    .map(|_| {
                        (0..nq)
                            .map(|_| {
                                let re: f64 = StandardNormal.sample(&mut rng);
                                let im: f64 = StandardNormal.sample(&mut rng);
                                Cplx::new(re, im)
                            })
                            .collect()
                    })
                    .collect()
            })
            .collect()
    };
    let inc = cube(12, 2, 49);
    let tot = cube(12, 2, 49);
    let sc = tot.iter().zip(&inc).map(|(t, i)| t.iter().zip(i).map(|(a, b)| a.iter().zip(b).map(|(x, y)| x - y).collect()).collect()).collect();
    MeasurementSet { frequencies_hz: vec![1e8, 2e8], scattered: sc, incident: Some(inc), total: Some(tot), provenance: Provenance::default() }
}

#[test]
fn infinite_snr_leaves_data_unchanged() {
    let ms = toy_set(1);
    let out = add_noise(&ms, f64::INFINITY, 3).unwrap();
    assert_eq!(out.scattered, ms.scattered);
    assert_eq!(out.incident, ms.incident);
    assert_eq!(out.total, ms.total);
}

#[test]
fn noise_hits_requested_snr() {
    let ms = toy_set(2);
    for snr in [0.0, 10.0, 30.0] {
        let out = add_noise(&ms, snr, 11).unwrap();
        for s in empirical_snr_db(&ms, &out) {
            assert!((s - snr).abs() < 0.5, "{s} vs {snr}");
        }
    }
}

#[test]
fn noise_is_seeded() {
    let ms = toy_set(3);
    let a = add_noise(&ms, 20.0, 7).unwrap();
    let b = add_noise(&ms, 20.0, 7).unwrap();
    assert_eq!(a, b);
    let c = add_noise(&ms, 20.0, 8).unwrap();
    // correlation of the two noise realizations over 588 samples per frequency
    for i in 0..2 {
        let na: Vec<_> = (0..12).flat_map(|p| (0..49).map(move |q| (p, q))).map(|(p, q)| a.scattered[p][i][q] - ms.scattered[p][i][q]).collect();
        let nc: Vec<_> = (0..12).flat_map(|p| (0..49).map(move |q| (p, q))).map(|(p, q)| c.scattered[p][i][q] - ms.scattered[p][i][q]).collect();
        let corr = crate::scalar::dot(&na, &nc).norm() / (crate::scalar::norm_sqr(&na) * crate::scalar::norm_sqr(&nc)).sqrt();
        assert!(corr < 0.1, "corr {corr}");
    }
}

#[test]
fn noise_requires_all_arrays() {
    let mut ms = toy_set(4);
    ms.total = None;
    assert!(matches!(add_noise(&ms, 10.0, 1), Err(Error::Argument(_))));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]
    #[test]
    fn noisy_difference_identity_is_exact(snr in -10.0f64..60.0, seed in 0u64..1000) {
        let ms = toy_set(seed);
        let out = add_noise(&ms, snr, seed).unwrap();
        let (inc, tot) = (out.incident.as_ref().unwrap(), out.total.as_ref().unwrap());
        for p in 0..12 {
            for i in 0..2 {
                for q in 0..49 {
                    prop_assert_eq!(tot[p][i][q] - inc[p][i][q], out.scattered[p][i][q]);
                }
            }
        }
    }
}

fn analytic_incident(c: &MeasurementConfig) -> DataCube<f64> {
    let omegas = c.omegas();
    (0..c.n_sources())
        .map(|p| omegas.iter().map(|&w| fdfd::line_source_at(&c.receiver_positions(p), c.source_position(p), w)).collect())
        .collect()
}

#[test]
fn calibration_of_analytic_field_is_unity() {
    let c = default_config();
    let f = calibrate_incident(&c, &analytic_incident(&c)).unwrap();
    assert_eq!(f.len() * f[0].len(), 60);
    for v in f.iter().flatten() {
        assert!((v - Cplx::new(1.0, 0.0)).norm() < 1e-14);
    }
}

#[test]
fn calibration_is_homogeneous() {
    let c = default_config();
    let scale = Cplx::new(0.3, -1.7);
    let mut m = analytic_incident(&c);
    m.iter_mut().flatten().flatten().for_each(|v| *v *= scale);
    let f = calibrate_incident(&c, &m).unwrap();
    for v in f.iter().flatten() {
        assert!((v - scale).norm() < 1e-14);
    }
}

#[test]
fn calibration_needs_opposite_receiver() {
    let mut c = default_config();
    c.receiver_relative_angles_deg.retain(|a| *a != 180.0);
    assert!(matches!(calibrate_incident(&c, &analytic_incident(&c)), Err(Error::Config(_))));
}

#[test]
fn synthesized_incident_calibrates_close_to_unity() {
    let c = small_config(vec![1e8, 2e8]);
    let grid = c.enclosing_grid(0.05, 10).unwrap();
    let ms: MeasurementSet<f64> = synthesize_on(&c, &Phantom::empty(), &grid).unwrap();
    let f = calibrate_incident(&c, ms.incident.as_ref().unwrap()).unwrap();
    for v in f.iter().flatten() {
        assert!((v - Cplx::new(1.0, 0.0)).norm() < 0.03, "{v}");
    }
}

#[test]
fn csv_round_trip_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("data.csv");
    let ms = toy_set(5);
    ms.write_csv(&path).unwrap();
    let back = MeasurementSet::<f64>::read_csv(&path).unwrap();
    assert_eq!(back, ms);

    let mut partial = ms.clone();
    partial.incident = None;
    partial.total = None;
    partial.write_csv(&path).unwrap();
    assert_eq!(MeasurementSet::<f64>::read_csv(&path).unwrap(), partial);
}

#[test]
fn csv_reader_rejects_bad_input() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.csv");
    std::fs::write(&path, "a,b\n1,2\n").unwrap();
    assert!(matches!(MeasurementSet::<f64>::read_csv(&path), Err(Error::Parse { .. })));
    let missing = dir.path().join("none.csv");
    assert!(matches!(MeasurementSet::<f64>::read_csv(&missing), Err(Error::Io { .. })));
}
