use super::*;
use crate::devices::{CdParams, DeviceModel};
use crate::lti::{discretize, first_order_discretize, linearize};
use crate::trajectory::{build_data_matrices, simulate_dt, TrajectoryRecord};
use approx::assert_relative_eq;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn m1(v: f64) -> DMatrix<f64> {
    DMatrix::from_element(1, 1, v)
}

fn scalar_ct(a: f64, b: f64) -> CtLtiModel {
    CtLtiModel::new(m1(-a), m1(b), m1(1.0)).unwrap()
}

fn opts() -> OdpOptions {
    OdpOptions::default()
}

fn ct_feasible(model: &CtLtiModel, sigma: &DMatrix<f64>) -> bool {
    solve_feasibility(&build_ct_lmi(model, Some(sigma)).unwrap(), &opts()).unwrap().feasible
}

fn dt_feasible(model: &DtLtiModel, sigma: &DMatrix<f64>) -> bool {
    solve_feasibility(&build_dt_lmi(model, Some(sigma)).unwrap(), &opts()).unwrap().feasible
}

fn random_record(model: &DtLtiModel, samples: usize, seed: u64) -> TrajectoryRecord {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let u = DMatrix::from_fn(model.m(), samples, |_, _| rng.random_range(-1.0..1.0));
    let x0 = DVector::from_fn(model.n(), |_, _| rng.random_range(-1.0..1.0));
    simulate_dt(model, &x0, &u, false).unwrap()
}

use nalgebra::DVector;

#[test]
fn scalar_boundary_is_one() {
    let model = scalar_ct(1.0, 1.0);
    assert!(ct_feasible(&model, &m1(0.99)));
    assert!(ct_feasible(&model, &m1(-2.0)));
    assert!(!ct_feasible(&model, &m1(1.01)));
    let star = bisect_boundary(|s| Ok(ct_feasible(&model, &m1(s))), 0.0, 2.0, 2e-5).unwrap().unwrap();
    assert!((star - 1.0).abs() < 1e-4, "σ* = {star}");
}

#[test]
fn scalar_boundary_is_time_constant_over_gain() {
    // ẋ = −ax + bu, y = x has its boundary at a/b
    let model = scalar_ct(2.0, 0.5);
    let star = bisect_boundary(|s| Ok(ct_feasible(&model, &m1(s))), 0.0, 10.0, 1e-5).unwrap().unwrap();
    assert!((star - 4.0).abs() < 1e-4, "σ* = {star}");
}

#[test]
fn zero_sigma_drops_state_feedback_term() {
    let model = CtLtiModel::new(
        DMatrix::from_row_slice(2, 2, &[-1.0, 0.4, 0.1, -3.0]),
        DMatrix::from_row_slice(2, 1, &[1.0, 2.0]),
        DMatrix::from_row_slice(1, 2, &[0.5, 1.0]),
    )
    .unwrap();
    let lmi = build_ct_lmi(&model, Some(&m1(0.0))).unwrap();
    let p = DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]);
    let l = lmi.evaluate(&p, &m1(0.0));
    // with Σ = 0 only −½(CĀ, CB̄) enters the bottom row
    let (a, b, c) = (&model.a_bar, &model.b_bar, &model.c);
    let mut oracle = DMatrix::zeros(3, 3);
    oracle.view_mut((0, 0), (2, 2)).copy_from(&(a.transpose() * &p + &p * a));
    oracle.view_mut((0, 2), (2, 1)).copy_from(&(&p * b - (c * a).transpose() * 0.5));
    oracle.view_mut((2, 0), (1, 2)).copy_from(&(b.transpose() * &p - (c * a) * 0.5));
    oracle[(2, 2)] = -(c * b)[(0, 0)];
    assert_relative_eq!(l, oracle, epsilon = 1e-13);
}

#[test]
fn cd_inverter_continuous_boundary() {
    let dev = DeviceModel::Cd(CdParams::reference());
    let model = linearize(&dev, &dev.equilibrium(), None).unwrap();
    let s = |v: f64| DMatrix::identity(2, 2) * v;
    assert!(ct_feasible(&model, &s(3.0)));
    assert!(!ct_feasible(&model, &s(3.5)));
}

#[test]
fn static_system_is_feasible_for_all_sigma_and_unbounded() {
    let model = DtLtiModel::new(DMatrix::identity(2, 2), DMatrix::zeros(2, 1), DMatrix::from_row_slice(1, 2, &[1.0, 1.0]), 0.1)
        .unwrap();
    for s in [-100.0, 0.0, 5.0, 1e4] {
        assert!(dt_feasible(&model, &m1(s)));
    }
    let cert = maximize_odp(&build_dt_lmi(&model, None).unwrap(), &opts()).unwrap();
    assert_eq!(cert.solver_stats.termination, "unbounded");
}

#[test]
fn static_data_are_unbounded() {
    let data = build_data_matrices(
        &TrajectoryRecord::new(
            DMatrix::from_row_slice(1, 4, &[1.0, -0.5, 0.3, 0.9]),
            DMatrix::from_row_slice(2, 5, &[1.0, 1.0, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0]),
            None,
            0.1,
            0.0,
        )
        .unwrap(),
    )
    .unwrap();
    let c = DMatrix::from_row_slice(1, 2, &[1.0, 1.0]);
    let o = OdpOptions { allow_uninformative: true, compress: false, ..opts() };
    let problem = build_data_driven_lmi(&data, OutputMap::Matrix(&c), None, &o).unwrap();
    let sol = solve_lmi(&problem, Sense::Maximize(Objective::Trace), &o).unwrap();
    assert_eq!(sol.status, Status::Unbounded);
}

#[test]
fn discrete_boundary_approaches_continuous() {
    let ct = scalar_ct(1.0, 1.0);
    let dt = discretize(&ct, 1e-3).unwrap();
    let star = bisect_boundary(|s| Ok(dt_feasible(&dt, &m1(s))), 0.0, 2.0, 1e-5).unwrap().unwrap();
    assert!((star - 1.0).abs() < 1e-2, "σ*(h) = {star}");
}

#[test]
fn first_order_residual_gap_is_quadratic() {
    let ct = CtLtiModel::new(
        DMatrix::from_row_slice(2, 2, &[-1.0, 0.5, 0.2, -2.0]),
        DMatrix::from_row_slice(2, 1, &[1.0, 0.5]),
        DMatrix::from_row_slice(1, 2, &[1.0, 0.3]),
    )
    .unwrap();
    let p = DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.2, 0.7]);
    let s = m1(0.8);
    let hs = [0.05, 0.025, 0.0125, 0.00625];
    let gaps: Vec<f64> = hs
        .iter()
        .map(|&h| {
            let exact = build_dt_lmi(&discretize(&ct, h).unwrap(), Some(&s)).unwrap().evaluate(&p, &s);
            let euler = build_dt_lmi(&first_order_discretize(&ct, h).unwrap(), Some(&s)).unwrap().evaluate(&p, &s);
            spectral_norm(&(exact - euler))
        })
        .collect();
    let slope = crate::linalg::loglog_slope(&hs, &gaps);
    assert!(slope > 1.9, "slope {slope}");
}

#[test]
fn steady_state_directions_null_the_quadratic_form() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..10 {
        let dt = random_dt_system(&mut rng);
        let (n, m) = (dt.n(), dt.m());
        let p = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        let p = &p * p.transpose();
        let s = sym(&DMatrix::from_fn(m, m, |_, _| rng.random_range(-2.0..2.0)));
        let lmi = build_dt_lmi(&dt, None).unwrap();
        let l = lmi.evaluate(&p, &s);
        // fixed points x = Ax + Bu, written as u free and x = (I − A)⁻¹Bu
        let ima = DMatrix::identity(n, n) - &dt.a;
        for j in 0..m {
            let u = DVector::from_fn(m, |i, _| if i == j { 1.0 } else { 0.0 });
            let x = ima.clone().lu().solve(&(&dt.b * &u)).unwrap();
            let z = DVector::from_iterator(n + m, x.iter().chain(u.iter()).copied());
            assert!((z.transpose() * &l * &z)[(0, 0)].abs() < 1e-9 * l.amax().max(1.0));
        }
        assert_eq!(lmi.face.ncols(), m);
    }
}

#[test]
fn identity_ports_pin_the_storage() {
    // ẋ = Āx + u, y = x: feasible iff Ā is symmetric and Σ ⪯ −Ā − 2ε_P I,
    // where P = −½(Ā + Σ) and L = −[Ā I]ᵀ[Ā I]
    let a = DMatrix::from_row_slice(2, 2, &[-2.0, 0.3, 0.3, -1.0]);
    let model = CtLtiModel::new(a.clone(), DMatrix::identity(2, 2), DMatrix::identity(2, 2)).unwrap();
    let boundary = min_eig(&(-&a));
    let star = bisect_boundary(|s| Ok(ct_feasible(&model, &(DMatrix::identity(2, 2) * s))), -5.0, 5.0, 1e-7)
        .unwrap()
        .unwrap();
    assert!((star - boundary).abs() < 1e-5, "{star} vs {boundary}");
    let best = maximize_odp(&build_ct_lmi(&model, None).unwrap(), &opts()).unwrap();
    assert!((best.sigma_matrix.trace() + a.trace()).abs() < 1e-6, "{}", best.sigma_matrix);
    assert_relative_eq!(best.storage_matrix, -(&a + &best.sigma_matrix) * 0.5, epsilon = 1e-7);

    let skew = DMatrix::from_row_slice(2, 2, &[-2.0, 0.3, -0.3, -1.0]);
    let model = CtLtiModel::new(skew, DMatrix::identity(2, 2), DMatrix::identity(2, 2)).unwrap();
    assert!(!ct_feasible(&model, &(DMatrix::identity(2, 2) * -100.0)));
}

#[test]
fn trivial_problems() {
    let zero = LmiProblem {
        kind: LmiKind::Discrete,
        n: 1,
        m: 1,
        constant: DMatrix::zeros(2, 2),
        p_coeffs: vec![DMatrix::zeros(2, 2)],
        sigma_coeffs: vec![],
        sigma_fixed: Some(m1(0.0)),
        scale: 1.0,
        compressed: false,
        face: DMatrix::zeros(2, 0),
        sigma_units: DVector::from_element(1, 1.0),
    };
    let cert = solve_feasibility(&zero, &opts()).unwrap();
    assert!(cert.feasible);
    assert!(cert.storage_matrix[(0, 0)] >= EPS_P);

    let mut bad = zero.clone();
    bad.constant[(0, 0)] = 1.0;
    assert!(!solve_feasibility(&bad, &opts()).unwrap().feasible);
}

#[test]
fn feasible_points_pass_independent_residual() {
    let model = discretize(&scalar_ct(1.0, 1.0), 0.1).unwrap();
    let problem = build_dt_lmi(&model, Some(&m1(0.5))).unwrap();
    let cert = solve_feasibility(&problem, &opts()).unwrap();
    assert!(cert.feasible);
    // direct formula, not the affine coefficients
    let (a, b, p, s) = (model.a[(0, 0)], model.b[(0, 0)], cert.storage_matrix[(0, 0)], 0.5);
    let l = DMatrix::from_row_slice(
        2,
        2,
        &[
            a * p * a - p + s * (a - 1.0),
            a * p * b + 0.5 * s * b - 0.5 * (a - 1.0),
            a * p * b + 0.5 * s * b - 0.5 * (a - 1.0),
            b * p * b - b,
        ],
    );
    assert!(max_eig(&l) <= TOL_FEAS * problem.scale);
    assert_relative_eq!(cert.slack, max_eig(&l) / problem.scale, epsilon = 1e-12);
}

#[test]
fn scalar_index_examples() {
    assert_eq!(extract_scalar_index(&DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 5.0]))).unwrap(), 2.0);
    assert_eq!(extract_scalar_index(&DMatrix::zeros(2, 2)).unwrap(), 0.0);
    let skew = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 1e-6, 1.0]);
    assert!(matches!(extract_scalar_index(&skew), Err(Error::InvalidArgument(_))));
    let tiny = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 1e-12, 3.0]);
    assert_relative_eq!(extract_scalar_index(&tiny).unwrap(), 1.0, epsilon = 1e-12);
}

#[test]
fn sampling_report_scales_quadratically() {
    let model = scalar_ct(1.0, 1.0);
    let (p, s) = (m1(0.25), m1(0.5));
    let r1 = sampling_error_report(&model, 1e-3, &p, &s).unwrap();
    let r2 = sampling_error_report(&model, 1e-2, &p, &s).unwrap();
    assert_relative_eq!(r2.ratio / r1.ratio, 100.0, max_relative = 1e-12);
    assert!(r1.adequate);
    let h = (0.5 * r1.lmi_norm).sqrt();
    let bad = sampling_error_report(&model, h, &p, &s).unwrap();
    assert_relative_eq!(bad.ratio, 0.5, max_relative = 1e-12);
    assert!(!bad.adequate);
}

#[test]
fn measured_output_variant_matches_known_c() {
    let ct = CtLtiModel::new(
        DMatrix::from_row_slice(2, 2, &[-1.0, 0.5, 0.2, -2.0]),
        DMatrix::from_row_slice(2, 1, &[1.0, 0.5]),
        DMatrix::from_row_slice(1, 2, &[1.0, 0.3]),
    )
    .unwrap();
    let dt = discretize(&ct, 0.1).unwrap();
    let mut rec = random_record(&dt, 40, 7);
    let with_c = build_data_driven_lmi(&build_data_matrices(&rec).unwrap(), OutputMap::Matrix(&dt.c), None, &opts()).unwrap();
    rec.outputs = Some(&dt.c * &rec.states);
    let measured = build_data_driven_lmi(&build_data_matrices(&rec).unwrap(), OutputMap::Measured, None, &opts()).unwrap();
    assert!((&with_c.constant - &measured.constant).amax() <= 1e-14);
    for (a, b) in with_c.p_coeffs.iter().zip(&measured.p_coeffs).chain(with_c.sigma_coeffs.iter().zip(&measured.sigma_coeffs)) {
        assert!((a - b).amax() <= 1e-14);
    }
    assert_eq!(with_c.scale, measured.scale);
}

#[test]
fn uninformative_data_are_refused() {
    let dt = discretize(&scalar_ct(1.0, 1.0), 0.1).unwrap();
    let rec = simulate_dt(&dt, &DVector::zeros(1), &DMatrix::zeros(1, 10), false).unwrap();
    let data = build_data_matrices(&rec).unwrap();
    assert!(matches!(
        build_data_driven_lmi(&data, OutputMap::Matrix(&dt.c), None, &opts()),
        Err(Error::NotInformative { rank: 0, required: 2, .. })
    ));
}

#[test]
fn uncompressed_size_limit() {
    let dt = discretize(&scalar_ct(1.0, 1.0), 0.1).unwrap();
    let data = build_data_matrices(&random_record(&dt, 50, 1)).unwrap();
    let o = OdpOptions { compress: false, max_constraint_size: 40, ..opts() };
    assert!(matches!(
        build_data_driven_lmi(&data, OutputMap::Matrix(&dt.c), None, &o),
        Err(Error::ProblemTooLarge { size: 50, limit: 40 })
    ));
    let compressed = build_data_driven_lmi(&data, OutputMap::Matrix(&dt.c), None, &opts()).unwrap();
    assert_eq!(compressed.size(), 2);
    assert!(compressed.compressed);
}

#[test]
fn compression_preserves_the_optimum() {
    let dt = discretize(&scalar_ct(1.0, 1.0), 0.2).unwrap();
    let data = build_data_matrices(&random_record(&dt, 12, 3)).unwrap();
    let full = OdpOptions { compress: false, ..opts() };
    let a = maximize_odp(&build_data_driven_lmi(&data, OutputMap::Matrix(&dt.c), None, &full).unwrap(), &full).unwrap();
    let b = maximize_odp(&build_data_driven_lmi(&data, OutputMap::Matrix(&dt.c), None, &opts()).unwrap(), &opts()).unwrap();
    assert_relative_eq!(a.sigma_scalar(), b.sigma_scalar(), max_relative = 1e-5);
}

/// Largest σ for which the scalar dt LMI `[[p(a²−1) + σ(a−1), ℓ], [ℓ, b(pb−1)]] ⪯ 0`,
/// `ℓ = apb + ½σb − ½(a−1)`, has a solution p > 0: for fixed p the
/// determinant is a concave quadratic in σ, so its larger root is the bound,
/// then a golden-section search maximizes over p ∈ (0, 1/b].
fn scalar_dt_boundary(a: f64, b: f64) -> f64 {
    let best_at = |p: f64| {
        let al = -b * b / 4.0;
        let be = (a - 1.0) * b * (p * b - 1.0) - b * (a * p * b - 0.5 * (a - 1.0));
        let ga = p * (a * a - 1.0) * b * (p * b - 1.0) - (a * p * b - 0.5 * (a - 1.0)).powi(2);
        let disc = be * be - 4.0 * al * ga;
        // the optimum sits where the discriminant touches zero; absorb rounding
        if disc < -1e-9 * be * be {
            return f64::NEG_INFINITY;
        }
        let s = (-be - disc.max(0.0).sqrt()) / (2.0 * al);
        if p * (a * a - 1.0) + s * (a - 1.0) > 0.0 {
            f64::NEG_INFINITY
        } else {
            s
        }
    };
    let (mut lo, mut hi) = (1e-12, 1.0 / b);
    let g = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..200 {
        let (x1, x2) = (hi - g * (hi - lo), lo + g * (hi - lo));
        if best_at(x1) < best_at(x2) {
            lo = x1;
        } else {
            hi = x2;
        }
    }
    best_at(0.5 * (lo + hi))
}

#[test]
fn scalar_dt_oracle_matches_continuous_limit() {
    let dt = discretize(&scalar_ct(2.0, 0.5), 1e-4).unwrap();
    assert!((scalar_dt_boundary(dt.a[(0, 0)], dt.b[(0, 0)]) - 4.0).abs() < 1e-2);
}

fn random_dt_system(rng: &mut ChaCha8Rng) -> DtLtiModel {
    let n = rng.random_range(1..=3);
    let m = rng.random_range(1..=2usize).min(n);
    let mut a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-0.5..0.5));
    for i in 0..n {
        a[(i, i)] -= rng.random_range(0.5..2.5);
    }
    let b = DMatrix::from_fn(n, m, |i, j| if i == j { 1.0 } else { rng.random_range(-0.3..0.3) });
    let c = DMatrix::from_fn(m, n, |i, j| if i == j { 1.0 } else { rng.random_range(-0.3..0.3) });
    discretize(&CtLtiModel::new(a, b, c).unwrap(), rng.random_range(0.05..0.3)).unwrap()
}

#[test]
fn data_matches_model_on_random_sigma() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut compared = 0;
    for sys in 0..4 {
        let dt = random_dt_system(&mut rng);
        let m = dt.m();
        let data = build_data_matrices(&random_record(&dt, 6 * (dt.n() + m), 100 + sys)).unwrap();
        for _ in 0..20 {
            let s = DMatrix::from_fn(m, m, |_, _| rng.random_range(-0.5..0.5));
            let s = sym(&s) + DMatrix::identity(m, m) * rng.random_range(-1.0..4.0);
            let shifted = |d: f64| &s + DMatrix::identity(m, m) * d;
            let model = dt_feasible(&dt, &s);
            // skip draws too close to the boundary to be classified robustly
            if dt_feasible(&dt, &shifted(0.02)) != model || dt_feasible(&dt, &shifted(-0.02)) != model {
                continue;
            }
            let lmi = build_data_driven_lmi(&data, OutputMap::Matrix(&dt.c), Some(&s), &opts()).unwrap();
            assert_eq!(solve_feasibility(&lmi, &opts()).unwrap().feasible, model, "system {sys}, Σ = {s}");
            compared += 1;
        }
    }
    assert!(compared >= 60, "only {compared} robust draws");
}

#[test]
fn trace_optimum_recovers_decoupled_boundaries() {
    let ct = CtLtiModel::new(
        DMatrix::from_diagonal(&DVector::from_vec(vec![-1.0, -0.5])),
        DMatrix::from_diagonal(&DVector::from_vec(vec![0.5, 1.0])),
        DMatrix::identity(2, 2),
    )
    .unwrap();
    let dt = discretize(&ct, 0.1).unwrap();
    let data = build_data_matrices(&random_record(&dt, 30, 5)).unwrap();
    let cert = maximize_odp(&build_data_driven_lmi(&data, OutputMap::Matrix(&dt.c), None, &opts()).unwrap(), &opts()).unwrap();
    assert!(cert.feasible);
    for i in 0..2 {
        let star = scalar_dt_boundary(dt.a[(i, i)], dt.b[(i, i)]);
        assert!((cert.sigma_matrix[(i, i)] - star).abs() < 1e-3, "channel {i}: {} vs {star}", cert.sigma_matrix[(i, i)]);
    }
}

#[test]
fn record_pipeline_matches_model_optimum_in_physical_units() {
    let ct = CtLtiModel::new(
        DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, -0.1]),
        DMatrix::from_row_slice(2, 2, &[3.0, 0.0, 0.0, 0.01]),
        DMatrix::identity(2, 2),
    )
    .unwrap();
    let dt = discretize(&ct, 0.4).unwrap();
    let mut rec = random_record(&dt, 40, 9);
    rec.inputs *= 0.02;
    let rec = simulate_dt(&dt, &(rec.states.column(0) * 0.05), &rec.inputs, false).unwrap();
    let out = certify_record(&rec, Some(&dt.c), None, &opts()).unwrap();
    assert!(out.certificate.feasible);
    let model = maximize_odp(&build_dt_lmi(&dt, None).unwrap(), &opts()).unwrap();
    assert_relative_eq!(out.certificate.sigma_matrix.trace(), model.sigma_matrix.trace(), max_relative = 1e-4);
    let check = self_check(&rec, Some(&dt.c), &out.certificate, &opts()).unwrap();
    assert!(check.passed, "{check:?}");

    // the min-eigenvalue objective acts on the physical Σ, whatever the channel scaling
    let min_eig_opts = OdpOptions { objective: Objective::MinEig, ..opts() };
    let data_min = certify_record(&rec, Some(&dt.c), None, &min_eig_opts).unwrap();
    let model_min = maximize_odp(&build_dt_lmi(&dt, None).unwrap(), &min_eig_opts).unwrap();
    assert_relative_eq!(data_min.certificate.sigma_scalar(), model_min.sigma_scalar(), max_relative = 1e-4);

    let mut tampered = out.certificate.clone();
    tampered.sigma_matrix[(0, 0)] *= 1.01;
    assert!(!self_check(&rec, Some(&dt.c), &tampered, &opts()).unwrap().passed);
}

#[test]
fn fixed_sigma_record_feasibility() {
    let dt = discretize(&scalar_ct(1.0, 1.0), 0.1).unwrap();
    let rec = random_record(&dt, 20, 2);
    let star = bisect_boundary(|s| Ok(dt_feasible(&dt, &m1(s))), 0.0, 2.0, 1e-6).unwrap().unwrap();
    let below = certify_record(&rec, Some(&dt.c), Some(&m1(star - 0.01)), &opts()).unwrap();
    let above = certify_record(&rec, Some(&dt.c), Some(&m1(star + 0.01)), &opts()).unwrap();
    assert!(below.certificate.feasible);
    assert!(!above.certificate.feasible);
    assert_eq!(below.certificate.sigma_matrix[(0, 0)], star - 0.01);
}

#[test]
fn discrete_sigma_decrease_adds_quadratic_term() {
    // Σ → Σ − D with P → P + ½CᵀDC changes the dt LMI by ½GᵀDG, G = [C(A−I), CB]
    let ct = CtLtiModel::new(
        DMatrix::from_row_slice(2, 2, &[-1.0, 0.5, 0.2, -2.0]),
        DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.3, 1.0]),
        DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.0, 1.0]),
    )
    .unwrap();
    let dt = discretize(&ct, 0.2).unwrap();
    let lmi = build_dt_lmi(&dt, None).unwrap();
    let p = DMatrix::from_row_slice(2, 2, &[2.0, 0.1, 0.1, 1.0]);
    let s = DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.2, 0.5]);
    let d = DMatrix::from_row_slice(2, 2, &[0.3, 0.1, 0.1, 0.2]);
    let p2 = &p + dt.c.transpose() * &d * &dt.c * 0.5;
    let diff = lmi.evaluate(&p2, &(&s - &d)) - lmi.evaluate(&p, &s);
    let mut g = DMatrix::zeros(2, 4);
    g.columns_mut(0, 2).copy_from(&(&dt.c * (&dt.a - DMatrix::identity(2, 2))));
    g.columns_mut(2, 2).copy_from(&(&dt.c * &dt.b));
    assert_relative_eq!(diff, g.transpose() * &d * &g * 0.5, epsilon = 1e-12);
}

mod props {
    use super::*;
    use proptest::prelude::*;

    // with B̄ = C = I the LMI pins P = −½(Ā + Σ), so Ā has to be symmetric
    // for any Σ to be feasible
    fn ct_system() -> impl Strategy<Value = CtLtiModel> {
        (proptest::collection::vec(-0.5f64..0.5, 3), 0.5f64..2.0, 0.5f64..2.0).prop_map(|(v, d1, d2)| {
            let mut a = DMatrix::from_row_slice(2, 2, &[v[0], v[1], v[1], v[2]]);
            a[(0, 0)] -= d1;
            a[(1, 1)] -= d2;
            CtLtiModel::new(a, DMatrix::identity(2, 2), DMatrix::identity(2, 2)).unwrap()
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn continuous_feasibility_is_monotone(
            model in ct_system(),
            shift in 0.05f64..0.5,
            dv in proptest::collection::vec(-1.0f64..1.0, 4),
        ) {
            let best = maximize_odp(&build_ct_lmi(&model, None).unwrap(), &opts()).unwrap();
            prop_assume!(best.feasible);
            let sigma = &best.sigma_matrix - DMatrix::identity(2, 2) * shift;
            prop_assert!(ct_feasible(&model, &sigma));
            let f = DMatrix::from_row_slice(2, 2, &dv);
            let lower = &sigma - &f * f.transpose();
            prop_assert!(ct_feasible(&model, &lower));
        }

        #[test]
        fn scalar_index_of_scaled_identity(s in -1e3f64..1e3, k in 1usize..5) {
            let v = extract_scalar_index(&(DMatrix::identity(k, k) * s)).unwrap();
            prop_assert!((v - s).abs() <= 1e-12 * s.abs().max(1.0));
        }
    }
}
