use super::*;
use approx::assert_abs_diff_eq;

fn heavy() -> NetworkModel {
    NetworkModel::from_spec(&heavy_load_3bus()).unwrap()
}

fn two_bus(r: f64, p2: f64) -> NetworkSpec {
    let mut spec = heavy_load_3bus();
    spec.buses.truncate(2);
    spec.buses[1].role = BusRole::Pq;
    spec.buses[1].p = p2;
    spec.buses[1].q = 0.0;
    spec.lines = vec![Line { from: 1, to: 2, r, x: 0.2 }];
    spec
}

/// Hand-derived Jacobian of `[P₁, Q₁/V₁, P₂, Q₂/V₂]` for a lossless line of
/// reactance `x` over `(θ₁, V₁, θ₂, V₂)`.
fn two_bus_oracle(x: f64, th1: f64, v1: f64, th2: f64, v2: f64) -> DMatrix<f64> {
    let d = th1 - th2;
    let (s, c) = d.sin_cos();
    let k = 1.0 / x;
    DMatrix::from_row_slice(4, 4, &[
        k * v1 * v2 * c, k * v2 * s, -k * v1 * v2 * c, k * v1 * s,
        k * v2 * s, k, -k * v2 * s, -k * c,
        -k * v1 * v2 * c, -k * v2 * s, k * v1 * v2 * c, -k * v1 * s,
        k * v1 * s, -k * c, -k * v1 * s, k,
    ])
}

#[test]
fn two_bus_lossless_matches_hand_jacobian() {
    for p2 in [0.0, 0.8, -1.5] {
        let net = NetworkModel::from_spec(&two_bus(0.0, p2)).unwrap();
        let e = &net.equilibrium;
        let (hb, jphi) = net.coupling_jacobians().unwrap();
        let oracle = two_bus_oracle(0.2, e.theta[0], e.v[0], e.theta[1], e.v[1]);
        assert!((&hb - &oracle).amax() < 1e-7, "p2 = {p2}\n{hb}\n{oracle}");
        assert_eq!(jphi.amax(), 0.0);
    }
}

#[test]
fn flat_two_bus_threshold_is_not_positive() {
    let net = NetworkModel::from_spec(&two_bus(0.0, 0.0)).unwrap();
    assert_abs_diff_eq!(net.equilibrium.theta[1], 0.0, epsilon = 1e-12);
    let s = compute_sigma_net(&net).unwrap();
    // the hand Jacobian at flat start is (1/x)·[[1,-1],[-1,1]] ⊗ I, which is PSD with a null direction
    assert!(s <= 1e-8 && s > -1e-6, "{s}");
}

#[test]
fn heavy_load_operating_point() {
    let net = heavy();
    let e = &net.equilibrium;
    assert_abs_diff_eq!(e.p[1], 2.0, epsilon = 1e-9);
    assert_abs_diff_eq!(e.p[2], -3.0, epsilon = 1e-9);
    assert_abs_diff_eq!(e.q[2], -0.2, epsilon = 1e-9);
    assert_abs_diff_eq!(e.v[1], 1.0, epsilon = 1e-12);
    // losses are the surplus the slack bus supplies
    let loss: f64 = e.p.iter().sum();
    assert!(loss > 0.0 && loss < 0.1, "{loss}");
    for (i, d) in net.devices.iter().enumerate() {
        let y = d.equilibrium().y_star;
        assert_abs_diff_eq!(y[0], e.theta[i], epsilon = 1e-15);
        assert_abs_diff_eq!(y[1], e.v[i], epsilon = 1e-15);
    }
}

#[test]
fn heavy_load_threshold_regression() {
    let net = heavy();
    let s = compute_sigma_net(&net).unwrap();
    assert_abs_diff_eq!(s, 0.614_72, epsilon = 5e-5);
    // dropping the loss term at the same operating point
    let (hb, _) = net.coupling_jacobians().unwrap();
    assert_abs_diff_eq!(-min_eig(&sym(&hb)), 0.596_73, epsilon = 5e-5);
    // re-solving the flow with lossless lines moves the operating point too
    let lossless = NetworkModel::from_spec(&NetworkModel::lossless_spec(&heavy_load_3bus())).unwrap();
    assert_abs_diff_eq!(compute_sigma_net(&lossless).unwrap(), 0.589_54, epsilon = 5e-5);
}

#[test]
fn lossless_lines_drop_the_loss_term() {
    let net = NetworkModel::from_spec(&NetworkModel::lossless_spec(&heavy_load_3bus())).unwrap();
    let (hb, jphi) = net.coupling_jacobians().unwrap();
    assert_eq!(jphi.amax(), 0.0);
    assert_abs_diff_eq!(compute_sigma_net(&net).unwrap(), -min_eig(&sym(&hb)), epsilon = 1e-15);
}

#[test]
fn bus_order_does_not_change_threshold() {
    let base = compute_sigma_net(&heavy()).unwrap();
    for perm in [[2, 0, 1], [1, 2, 0], [2, 1, 0]] {
        let mut spec = heavy_load_3bus();
        spec.buses = perm.iter().map(|&k| spec.buses[k].clone()).collect();
        spec.lines.reverse();
        let s = compute_sigma_net(&NetworkModel::from_spec(&spec).unwrap()).unwrap();
        assert!((s - base).abs() <= 1e-10, "{perm:?}: {s} vs {base}");
    }
}

#[test]
fn malformed_networks_rejected() {
    let mut spec = heavy_load_3bus();
    spec.lines = vec![Line { from: 1, to: 2, r: 0.01, x: 0.12 }];
    assert!(matches!(NetworkModel::from_spec(&spec), Err(Error::InvalidNetwork(_))));
    let mut spec = heavy_load_3bus();
    spec.lines[0].x = 0.0;
    assert!(matches!(NetworkModel::from_spec(&spec), Err(Error::InvalidNetwork(_))));
    let mut spec = heavy_load_3bus();
    spec.lines[1].to = 9;
    assert!(matches!(NetworkModel::from_spec(&spec), Err(Error::InvalidNetwork(_))));
    let mut spec = heavy_load_3bus();
    spec.buses[1].role = BusRole::Slack;
    assert!(matches!(NetworkModel::from_spec(&spec), Err(Error::InvalidNetwork(_))));
    let mut spec = heavy_load_3bus();
    spec.buses[2].p = -60.0;
    assert!(matches!(NetworkModel::from_spec(&spec), Err(Error::NoEquilibrium(_))));
}

#[test]
fn json_round_trip() {
    let spec = heavy_load_3bus();
    let text = serde_json::to_string(&spec).unwrap();
    let net = NetworkModel::from_json(&text).unwrap();
    assert_eq!(net, heavy());
}

fn tuned(sigma: f64) -> NetworkModel {
    heavy().map_devices(|d| d.with_indices(sigma, sigma + 0.1)).unwrap()
}

#[test]
fn retuning_keeps_the_operating_point() {
    let net = tuned(0.9);
    assert_eq!(net.equilibrium, heavy().equilibrium);
    for d in &net.devices {
        assert_abs_diff_eq!(d.theoretical_index(), 0.9, epsilon = 1e-12);
    }
}

#[test]
fn verdict_follows_the_threshold() {
    let net = heavy();
    let sn = compute_sigma_net(&net).unwrap();
    let high = tuned(sn + 0.3);
    let v = distributed_verdict(&high, &[Some(sn + 0.3); 3]).unwrap();
    assert!(v.certified_stable);
    assert_eq!(v.region, Region::Stable);
    assert!(v.eigen_max_real < 0.0);
    assert_abs_diff_eq!(v.min_margin, 0.3, epsilon = 1e-12);

    let low = tuned(sn - 0.2);
    let v = distributed_verdict(&low, &[Some(sn - 0.2); 3]).unwrap();
    assert_eq!(v.region, Region::Unstable);
    assert!(v.eigen_max_real > 0.0);

    let v = distributed_verdict(&high, &[Some(sn + 0.3), None, Some(sn + 0.3)]).unwrap();
    assert!(!v.certified_stable);
    assert_eq!(v.region, Region::Conservative);

    assert!(matches!(distributed_verdict(&high, &[Some(1.0)]), Err(Error::IncompleteInput(_))));
}

#[test]
fn default_grid_has_21_rows() {
    let g = SweepSettings::default().grid(0.6);
    assert_eq!(g.len(), 21);
    assert_abs_diff_eq!(g[0], 0.9, epsilon = 1e-12);
    assert_abs_diff_eq!(g[20], 0.4, epsilon = 1e-12);
}

#[test]
fn coarse_sweep_is_sound_and_ordered() {
    let net = heavy();
    let settings = SweepSettings { step: 0.1, ..SweepSettings::default() };
    let rows = sigma_sweep(&net, &settings, 7, &OdpOptions::default()).unwrap();
    assert_eq!(rows.len(), 6);
    let rank = |r: Region| match r {
        Region::Stable => 0,
        Region::Conservative => 1,
        Region::Unstable => 2,
    };
    for w in rows.windows(2) {
        assert!(rank(w[0].region) <= rank(w[1].region), "{:?} then {:?}", w[0].region, w[1].region);
    }
    assert_eq!(rows[0].region, Region::Stable);
    assert_eq!(rows[5].region, Region::Unstable);
    for r in &rows {
        if r.certified_stable {
            assert!(r.eig_max_real < 0.0, "{r:?}");
        }
        if r.region == Region::Stable {
            for (s, t) in r.sigma_bus.iter().zip(&r.sigma_theory) {
                assert!((s.unwrap() - t).abs() <= 0.05, "{r:?}");
            }
        }
    }
}
