use super::*;
use crate::csi::{run, Variant};
use crate::fdfd;
use crate::geometry::{Phantom, Shape};
use crate::scenario::MeasurementConfig;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type C = Cplx<f64>;

struct Fixture {
    model: ForwardModel<f64>,
    input: InversionInput<f64>,
    truth: ContrastMap<f64>,
}

/// Model-consistent, noise-free data for a small disk on a 10 × 10 domain.
fn fixture() -> Fixture {
    let c = MeasurementConfig {
        source_angles_deg: (0..6).map(|k| 60.0 * k as f64).collect(),
        receiver_relative_angles_deg: (0..11).map(|k| 90.0 + 18.0 * k as f64).collect(),
        radius_m: 1.0,
        frequencies_hz: vec![2e8, 4e8],
    };
    let grid = c.enclosing_grid(0.05, 10).unwrap();
    let domain = SubdomainIndexSet::from_box(&grid, -0.25, 0.25, -0.25, 0.25).unwrap();
    let model = ForwardModel::for_config(&grid, &domain, &c).unwrap();
    let phantom = Phantom { shapes: vec![Shape::Disk { center: (0.04, 0.0), radius: 0.15 }], d_eps: 1.0, d_sigma: 0.01 };
    let truth: ContrastMap<f64> = phantom.rasterize(&grid, &domain).unwrap();
    let e_inc: Vec<Vec<Vec<C>>> = (0..c.n_sources())
        .map(|p| {
            c.omegas()
                .iter()
                .map(|&w| domain.restrict(&fdfd::incident_field_line_source(&grid, c.source_position(p), w).unwrap()))
                .collect()
        })
        .collect();
    let mut data = vec![Vec::new(); c.n_sources()];
    for (i, &w) in c.omegas().iter().enumerate() {
        let chi = chi_at_frequency(&truth, w).unwrap();
        let incs: Vec<Vec<C>> = (0..c.n_sources()).map(|p| e_inc[p][i].clone()).collect();
        let tot = model.total_fields(i, &chi, &incs).unwrap();
        for p in 0..c.n_sources() {
            let j: Vec<C> = chi.iter().zip(&tot[p]).map(|(a, b)| a * b).collect();
            data[p].push(model.phi(p, i, &j));
        }
    }
    Fixture { model, input: InversionInput { data, e_inc }, truth }
}

fn random_point(rng: &mut ChaCha8Rng, np: usize, ni: usize, n: usize) -> SolutionPoint<f64> {
    let mut v = |_| C::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
    let chi = (0..ni).map(|_| (0..n).map(&mut v).collect()).collect();
    let e_tot = (0..np).map(|_| (0..ni).map(|_| (0..n).map(&mut v).collect()).collect()).collect();
    SolutionPoint { chi, e_tot }
}

fn max_rel_diff(a: &SolutionPoint<f64>, b: &SolutionPoint<f64>) -> f64 {
    let flat = |x: &SolutionPoint<f64>| -> Vec<C> {
        x.chi.iter().flatten().chain(x.e_tot.iter().flatten().flatten()).copied().collect()
    };
    let (fa, fb) = (flat(a), flat(b));
    let scale = fb.iter().map(|z| z.norm()).fold(0.0, f64::max);
    fa.iter().zip(&fb).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max) / scale
}

#[test]
fn landmarks_are_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (cc, mr, act) = (random_point(&mut rng, 3, 2, 7), random_point(&mut rng, 3, 2, 7), random_point(&mut rng, 3, 2, 7));
    assert_eq!(sample_solution_space(&cc, &mr, &act, -1.0, 1.0).unwrap(), act);
    assert_eq!(sample_solution_space(&cc, &mr, &act, 0.0, 1.0).unwrap(), cc);
    assert_eq!(sample_solution_space(&cc, &mr, &act, 1.0, 0.0).unwrap(), mr);
}

#[test]
fn mismatched_points_are_rejected() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let a = random_point(&mut rng, 3, 2, 7);
    let b = random_point(&mut rng, 3, 2, 6);
    assert!(matches!(sample_solution_space(&a, &a, &b, 0.3, 0.2), Err(Error::Argument(_))));
}

proptest! {
    #[test]
    fn sampling_is_affine_in_each_parameter(seed in 0u64..1000, b1 in -1.5f64..1.5, b2 in -1.5f64..1.5, h in 0.01f64..1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (cc, mr, act) = (random_point(&mut rng, 2, 2, 5), random_point(&mut rng, 2, 2, 5), random_point(&mut rng, 2, 2, 5));
        let at = |a: f64, b: f64| sample_solution_space(&cc, &mr, &act, a, b).unwrap();
        let mid = |x: SolutionPoint<f64>, y: SolutionPoint<f64>| sample_solution_space(&x, &x, &y, -0.5, 1.0).unwrap();
        // x_act weight at (−½, 1) is ½ and x_cc weight is ½
        let m1 = mid(at(b1 - h, b2), at(b1 + h, b2));
        prop_assert!(max_rel_diff(&m1, &at(b1, b2)) < 1e-12);
        let m2 = mid(at(b1, b2 - h), at(b1, b2 + h));
        prop_assert!(max_rel_diff(&m2, &at(b1, b2)) < 1e-12);
    }
}

/// `x_cc` and `x_mr` from short runs of the two variants.
fn reconstructions(f: &Fixture) -> (SolutionPoint<f64>, SolutionPoint<f64>, SolutionPoint<f64>) {
    let cc = run(&f.model, &f.input, Variant::Cc, 6, None).unwrap().state.unwrap();
    let mr = run(&f.model, &f.input, Variant::Plain, 3, None).unwrap().state.unwrap();
    let act = SolutionPoint::actual(&f.model, &f.input, &f.truth).unwrap();
    (SolutionPoint::from_state(&cc), SolutionPoint::from_state(&mr), act)
}

#[test]
fn fast_costs_match_direct_evaluation() {
    let f = fixture();
    let (cc, mr, act) = reconstructions(&f);
    let fast = LandscapeEvaluator::new(&f.model, &f.input, &cc, &mr, &act).unwrap();
    for (b1, b2) in [(0.0, 1.0), (1.0, 0.0), (0.3, -0.7), (-1.5, 1.5), (1.2, 0.45), (-0.6, -1.1)] {
        let x = sample_solution_space(&cc, &mr, &act, b1, b2).unwrap();
        let direct = solution_cost(&f.model, &f.input, &x).unwrap();
        let quick = fast.cost(b1, b2).unwrap();
        assert!((direct - quick).abs() < 1e-10 * direct, "({b1}, {b2}): {direct} vs {quick}");
    }
    // all-zero contrast at the origin
    assert!(matches!(fast.cost(0.0, 0.0), Err(Error::Degenerate(_))));
}

#[test]
fn generic_and_fast_landscapes_agree() {
    let f = fixture();
    let (cc, mr, act) = reconstructions(&f);
    let axis = default_axis(3);
    let slow = landscape(|x| solution_cost(&f.model, &f.input, x), &cc, &mr, &act, &axis, &axis).unwrap();
    let fast = LandscapeEvaluator::new(&f.model, &f.input, &cc, &mr, &act).unwrap().landscape(&axis, &axis);
    assert_eq!(slow.log10_cost.len(), 9);
    for (a, b) in slow.log10_cost.iter().zip(&fast.log10_cost) {
        assert!(a.is_nan() && b.is_nan() || (a - b).abs() < 1e-10, "{a} vs {b}");
    }
    assert!(slow.value(1, 1).is_nan());
}

#[test]
fn noise_free_landscape_bottoms_out_at_the_actual_solution() {
    let f = fixture();
    let (cc, mr, act) = reconstructions(&f);
    let ev = LandscapeEvaluator::new(&f.model, &f.input, &cc, &mr, &act).unwrap();
    let axis = default_axis(61);
    let l = ev.landscape(&axis, &axis);
    assert_eq!((l.beta1.len(), l.beta2.len(), l.log10_cost.len()), (61, 61, 3721));
    let target = l.nearest(-1.0, 1.0);
    assert_eq!(target, (10, 50));
    assert_eq!(l.argmin(), Some(target));
    // data consistent with the inversion grid: only round-off remains
    assert!(l.value(10, 50) < -10.0, "{}", l.value(10, 50));
}

#[test]
fn actual_point_satisfies_the_field_equation() {
    let f = fixture();
    let act = SolutionPoint::actual(&f.model, &f.input, &f.truth).unwrap();
    assert!(solution_cost(&f.model, &f.input, &act).unwrap() < 1e-20);
}

#[test]
fn empty_log_is_header_only() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("log.csv");
    export_curves(&[], &path).unwrap();
    assert_eq!(std::fs::read_to_string(&path).unwrap(), "iteration,cost_half,cost_full,err,alpha_mean,beta\n");
    assert!(read_curves(&path).unwrap().is_empty());
}

#[test]
fn log_round_trip_is_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let log: Vec<IterationRecord> = (0..20)
        .map(|k| IterationRecord {
            iteration: k,
            cost_half_before: f64::NAN,
            cost_half: rng.gen::<f64>() * 10f64.powi(-(k as i32)),
            cost_full: rng.gen(),
            err: if k == 0 { f64::NAN } else { rng.gen() },
            alpha_mean: -rng.gen::<f64>() * 1e-300,
            beta: rng.gen::<f64>() * 1e12,
        })
        .collect();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("log.csv");
    export_curves(&log, &path).unwrap();
    let back = read_curves(&path).unwrap();
    for (a, b) in log.iter().zip(&back) {
        assert_eq!(a.iteration, b.iteration);
        for (x, y) in [(a.cost_half, b.cost_half), (a.cost_full, b.cost_full), (a.err, b.err), (a.alpha_mean, b.alpha_mean), (a.beta, b.beta)] {
            assert!(x.to_bits() == y.to_bits() || x.is_nan() && y.is_nan());
        }
    }
    let first = std::fs::read(&path).unwrap();
    export_curves(&log, &path).unwrap();
    assert_eq!(std::fs::read(&path).unwrap(), first);
}

#[test]
fn map_export_round_trip_and_pgm_range() {
    let f = fixture();
    let grid = f.model.grid();
    let domain = f.model.domain();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let field: Vec<C> = (0..domain.len()).map(|_| C::new(rng.gen_range(-3.0..2.0), rng.gen_range(0.0..1e-3))).collect();
    let dir = tempfile::tempdir().unwrap();
    let stem = dir.path().join("field");
    export_field(&stem, grid, domain, &field).unwrap();
    let back = read_map_csv(&dir.path().join("field.csv")).unwrap();
    assert_eq!(back.names, ["re", "im", "abs"]);
    assert_eq!((back.header.nx, back.header.ny), (10, 10));
    assert_eq!(back.header.dx, grid.dx);
    for (k, z) in field.iter().enumerate() {
        assert_eq!(back.values[0][k].to_bits(), z.re.to_bits());
        assert_eq!(back.values[1][k].to_bits(), z.im.to_bits());
    }
    let (x0, y0) = grid.cell_center(domain.indices()[0]);
    assert_eq!((back.header.x0, back.header.y0), (x0, y0));

    let re: Vec<f64> = field.iter().map(|z| z.re).collect();
    let lo = re.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = re.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    assert_eq!(read_pgm_range(&dir.path().join("field_re.pgm.txt")).unwrap(), (lo, hi));
    let (w, h, px) = read_pgm(&dir.path().join("field_re.pgm")).unwrap();
    assert_eq!((w, h), (10, 10));
    assert_eq!(px.iter().min(), Some(&0));
    assert_eq!(px.iter().max(), Some(&65535));
    // top image row holds the highest cell row
    let k = re.iter().position(|&v| v == hi).unwrap();
    let (ix, iy) = back.cells[k];
    assert_eq!(px[(9 - iy) * 10 + ix], 65535);
}

#[test]
fn contrast_export_is_byte_stable() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let stem = dir.path().join("truth");
    export_contrast(&stem, f.model.grid(), f.model.domain(), &f.truth).unwrap();
    let files = ["truth.csv", "truth_delta_eps.pgm", "truth_delta_eps.pgm.txt", "truth_delta_sigma.pgm"];
    let first: Vec<Vec<u8>> = files.iter().map(|n| std::fs::read(dir.path().join(n)).unwrap()).collect();
    export_contrast(&stem, f.model.grid(), f.model.domain(), &f.truth).unwrap();
    for (n, a) in files.iter().zip(&first) {
        assert_eq!(&std::fs::read(dir.path().join(n)).unwrap(), a, "{n}");
    }
    let back = read_map_csv(&dir.path().join("truth.csv")).unwrap();
    assert_eq!(back.values[0], f.truth.delta_eps);
}

#[test]
fn landscape_csv_round_trip() {
    let l = Landscape {
        beta1: default_axis(4),
        beta2: default_axis(3),
        log10_cost: (0..12).map(|k| if k == 5 { f64::NAN } else { -1.0 / (k as f64 + 0.3) }).collect(),
    };
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("landscape.csv");
    l.write_csv(&path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert!(text.starts_with("beta1\\beta2,-1.5,0,1.5\n-1.5,"));
    let back = Landscape::read_csv(&path).unwrap();
    assert_eq!(back.beta1, l.beta1);
    assert_eq!(back.beta2, l.beta2);
    for (a, b) in l.log10_cost.iter().zip(&back.log10_cost) {
        assert!(a.to_bits() == b.to_bits() || a.is_nan() && b.is_nan());
    }
    assert_eq!(back.argmin(), Some((0, 0)));
}

#[test]
fn solution_point_json_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let x = random_point(&mut rng, 2, 3, 4);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("x.json");
    x.write_json(&path).unwrap();
    assert_eq!(SolutionPoint::<f64>::read_json(&path).unwrap(), x);
}
