//! Interconnected buses: power flow, the network coupling threshold, the
//! distributed stability verdict and the σ sweep.
//!
//! Bus signals follow the device convention `u = [-P, -Q/V]`, `y = [θ, V]`,
//! stacked bus by bus as `(θ₁, V₁, θ₂, V₂, …)`.

use std::collections::{BTreeMap, VecDeque};

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::devices::DeviceModel;
use crate::error::{Error, Result};
use crate::linalg::{block_diag, min_eig, sym};
use crate::lti::{eigenvalues, linearize, max_real_part, Dynamics};
use crate::odp::{certify_record, OdpOptions};
use crate::trajectory::{simulate, ExcitationSignal, SimulationOptions};

/// Power-flow residual accepted for a network equilibrium.
pub const FLOW_TOL: f64 = 1e-8;
const FD_STEP: f64 = 1e-6;
const SYMMETRY_TOL: f64 = 1e-6;
const JACOBIAN_CHECK_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BusRole {
    /// Fixed `(θ, V)`.
    Slack,
    /// Fixed `(P, V)`.
    Pv,
    /// Fixed `(P, Q)`.
    Pq,
}

/// Bus entry of a network file. Only the quantities fixed by `role` are
/// read; the device setpoints are overwritten by the solved operating point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BusSpec {
    pub id: usize,
    pub role: BusRole,
    #[serde(default)]
    pub p: f64,
    #[serde(default)]
    pub q: f64,
    #[serde(default = "one")]
    pub v: f64,
    #[serde(default)]
    pub theta: f64,
    pub device: DeviceModel,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Line {
    pub from: usize,
    pub to: usize,
    pub r: f64,
    pub x: f64,
}

/// Contents of a network JSON file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    #[serde(default = "one")]
    pub base_power: f64,
    pub buses: Vec<BusSpec>,
    pub lines: Vec<Line>,
}

/// Solved operating point, per bus in the order of `NetworkModel::buses`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkEquilibrium {
    pub theta: Vec<f64>,
    pub v: Vec<f64>,
    pub p: Vec<f64>,
    pub q: Vec<f64>,
}

impl NetworkEquilibrium {
    /// `y* = (θ₁, V₁, θ₂, V₂, …)`.
    pub fn y_star(&self) -> DVector<f64> {
        DVector::from_iterator(2 * self.v.len(), self.theta.iter().zip(&self.v).flat_map(|(t, v)| [*t, *v]))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkModel {
    pub ids: Vec<usize>,
    pub devices: Vec<DeviceModel>,
    pub lines: Vec<Line>,
    pub equilibrium: NetworkEquilibrium,
    g: DMatrix<f64>,
    b: DMatrix<f64>,
}

/// Nodal conductance and susceptance matrices.
fn admittance(n: usize, lines: &[(usize, usize, f64, f64)]) -> (DMatrix<f64>, DMatrix<f64>) {
    let mut g = DMatrix::zeros(n, n);
    let mut b = DMatrix::zeros(n, n);
    for &(i, j, r, x) in lines {
        let d = r * r + x * x;
        let (gl, bl) = (r / d, -x / d);
        g[(i, i)] += gl;
        g[(j, j)] += gl;
        g[(i, j)] -= gl;
        g[(j, i)] -= gl;
        b[(i, i)] += bl;
        b[(j, j)] += bl;
        b[(i, j)] -= bl;
        b[(j, i)] -= bl;
    }
    (g, b)
}

/// Injected `(P, Q)` at every bus.
fn power(g: &DMatrix<f64>, b: &DMatrix<f64>, theta: &[f64], v: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = v.len();
    let mut p = vec![0.0; n];
    let mut q = vec![0.0; n];
    for i in 0..n {
        for j in 0..n {
            let (s, c) = (theta[i] - theta[j]).sin_cos();
            let vv = v[i] * v[j];
            p[i] += vv * (g[(i, j)] * c + b[(i, j)] * s);
            q[i] += vv * (g[(i, j)] * s - b[(i, j)] * c);
        }
    }
    (p, q)
}

/// `[P_i, Q_i/V_i]` stacked bus by bus at `y = (θ₁, V₁, …)`.
fn injection_map(g: &DMatrix<f64>, b: &DMatrix<f64>, y: &DVector<f64>) -> DVector<f64> {
    let n = y.len() / 2;
    let theta: Vec<f64> = (0..n).map(|i| y[2 * i]).collect();
    let v: Vec<f64> = (0..n).map(|i| y[2 * i + 1]).collect();
    let (p, q) = power(g, b, &theta, &v);
    DVector::from_iterator(2 * n, (0..n).flat_map(|i| [p[i], q[i] / v[i]]))
}

/// Analytic Jacobian of [`injection_map`] over `y = (θ₁, V₁, …)`.
fn injection_jacobian(g: &DMatrix<f64>, b: &DMatrix<f64>, y: &DVector<f64>) -> DMatrix<f64> {
    let n = y.len() / 2;
    let (th, v) = (|i: usize| y[2 * i], |i: usize| y[2 * i + 1]);
    let mut jac = DMatrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        let (pi, ri) = (2 * i, 2 * i + 1);
        for j in 0..n {
            if j == i {
                continue;
            }
            let (s, c) = (th(i) - th(j)).sin_cos();
            let (gij, bij) = (g[(i, j)], b[(i, j)]);
            let (tj, vj) = (2 * j, 2 * j + 1);
            // P_i = Σ V_iV_j(G c + B s), Q_i/V_i = Σ V_j(G s - B c)
            jac[(pi, tj)] = v(i) * v(j) * (gij * s - bij * c);
            jac[(pi, 2 * i)] -= v(i) * v(j) * (gij * s - bij * c);
            jac[(pi, vj)] = v(i) * (gij * c + bij * s);
            jac[(pi, ri)] += v(j) * (gij * c + bij * s);
            jac[(ri, tj)] = -v(j) * (gij * c + bij * s);
            jac[(ri, 2 * i)] += v(j) * (gij * c + bij * s);
            jac[(ri, vj)] = gij * s - bij * c;
        }
        jac[(pi, ri)] += 2.0 * v(i) * g[(i, i)];
        jac[(ri, ri)] = -b[(i, i)];
    }
    jac
}

/// Analytic Jacobian after a central-difference cross-check.
fn checked_jacobian(g: &DMatrix<f64>, b: &DMatrix<f64>, y: &DVector<f64>) -> Result<DMatrix<f64>> {
    let exact = injection_jacobian(g, b, y);
    let fd = central_jacobian(|y| injection_map(g, b, y), y, FD_STEP);
    let err = (&exact - &fd).amax();
    if err > JACOBIAN_CHECK_TOL * exact.amax().max(1.0) {
        return Err(Error::ModelInconsistency(format!("injection Jacobian disagrees with finite differences by {err:.3e}")));
    }
    Ok(exact)
}

fn central_jacobian(f: impl Fn(&DVector<f64>) -> DVector<f64>, y: &DVector<f64>, step: f64) -> DMatrix<f64> {
    let k = y.len();
    let mut jac = DMatrix::zeros(f(y).len(), k);
    for j in 0..k {
        let mut yp = y.clone();
        let mut ym = y.clone();
        yp[j] += step;
        ym[j] -= step;
        jac.set_column(j, &((f(&yp) - f(&ym)) / (2.0 * step)));
    }
    jac
}

fn connected(n: usize, lines: &[(usize, usize, f64, f64)]) -> bool {
    let mut adj = vec![Vec::new(); n];
    for &(i, j, _, _) in lines {
        adj[i].push(j);
        adj[j].push(i);
    }
    let mut seen = vec![false; n];
    let mut queue = VecDeque::from([0]);
    seen[0] = true;
    while let Some(i) = queue.pop_front() {
        for &j in &adj[i] {
            if !seen[j] {
                seen[j] = true;
                queue.push_back(j);
            }
        }
    }
    seen.into_iter().all(|s| s)
}

/// Damped Newton on the mismatch equations of the non-fixed quantities.
fn solve_power_flow(buses: &[BusSpec], g: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<NetworkEquilibrium> {
    let n = buses.len();
    let mut theta: Vec<f64> = buses.iter().map(|s| if s.role == BusRole::Slack { s.theta } else { 0.0 }).collect();
    let mut v: Vec<f64> = buses.iter().map(|s| if s.role == BusRole::Pq { 1.0 } else { s.v }).collect();
    // unknowns: θ at non-slack buses, V at PQ buses
    let th_idx: Vec<usize> = (0..n).filter(|&i| buses[i].role != BusRole::Slack).collect();
    let v_idx: Vec<usize> = (0..n).filter(|&i| buses[i].role == BusRole::Pq).collect();
    let k = th_idx.len() + v_idx.len();
    let mismatch = |theta: &[f64], v: &[f64]| -> DVector<f64> {
        let (p, q) = power(g, b, theta, v);
        DVector::from_iterator(
            k,
            th_idx.iter().map(|&i| p[i] - buses[i].p).chain(v_idx.iter().map(|&i| q[i] - buses[i].q)),
        )
    };
    let apply = |theta: &mut [f64], v: &mut [f64], dz: &DVector<f64>, t: f64| {
        for (a, &i) in th_idx.iter().enumerate() {
            theta[i] += t * dz[a];
        }
        for (a, &i) in v_idx.iter().enumerate() {
            v[i] += t * dz[th_idx.len() + a];
        }
    };
    let mut r = mismatch(&theta, &v);
    for _ in 0..100 {
        if r.amax() <= 1e-12 {
            break;
        }
        let mut jac = DMatrix::zeros(k, k);
        for c in 0..k {
            let mut e = DVector::zeros(k);
            e[c] = FD_STEP;
            let (mut tp, mut vp) = (theta.clone(), v.clone());
            let (mut tm, mut vm) = (theta.clone(), v.clone());
            apply(&mut tp, &mut vp, &e, 1.0);
            apply(&mut tm, &mut vm, &e, -1.0);
            jac.set_column(c, &((mismatch(&tp, &vp) - mismatch(&tm, &vm)) / (2.0 * FD_STEP)));
        }
        let dz = jac
            .lu()
            .solve(&(-&r))
            .ok_or_else(|| Error::NoEquilibrium("singular power-flow Jacobian".into()))?;
        let mut t = 1.0;
        loop {
            let (mut tt, mut vt) = (theta.clone(), v.clone());
            apply(&mut tt, &mut vt, &dz, t);
            if vt.iter().all(|&x| x > 0.0) {
                let rt = mismatch(&tt, &vt);
                if rt.norm() < r.norm() || t < 1e-4 {
                    (theta, v, r) = (tt, vt, rt);
                    break;
                }
            }
            t *= 0.5;
            if t < 1e-4 {
                return Err(Error::NoEquilibrium("power-flow line search failed".into()));
            }
        }
    }
    if !(r.amax() <= FLOW_TOL) {
        return Err(Error::NoEquilibrium(format!("power flow did not converge (residual {:.3e})", r.amax())));
    }
    let (p, q) = power(g, b, &theta, &v);
    Ok(NetworkEquilibrium { theta, v, p, q })
}

/// Moves the device setpoints onto the bus operating point, which keeps the
/// gains and makes the point an equilibrium of the device.
fn anchor(device: &DeviceModel, theta: f64, v: f64, p: f64, q: f64) -> DeviceModel {
    match *device {
        DeviceModel::Cd(mut c) => {
            (c.theta_star, c.v_star, c.p_star, c.q_star) = (theta, v, p, q);
            DeviceModel::Cd(c)
        }
        DeviceModel::Qd(mut c) => {
            (c.theta_star, c.v_star, c.p_star, c.q_star) = (theta, v, p, q);
            DeviceModel::Qd(c)
        }
        DeviceModel::Sg(mut s) => {
            (s.delta_star, s.e_star, s.p_star, s.q_star) = (theta, v, p, q);
            DeviceModel::Sg(s)
        }
    }
}

impl NetworkModel {
    pub fn from_spec(spec: &NetworkSpec) -> Result<Self> {
        let n = spec.buses.len();
        if n == 0 {
            return Err(Error::InvalidNetwork("no buses".into()));
        }
        let mut index = BTreeMap::new();
        for (k, bus) in spec.buses.iter().enumerate() {
            if index.insert(bus.id, k).is_some() {
                return Err(Error::InvalidNetwork(format!("duplicate bus id {}", bus.id)));
            }
            bus.device.validate()?;
            if !(bus.v > 0.0) && bus.role != BusRole::Pq {
                return Err(Error::InvalidNetwork(format!("bus {} voltage must be positive", bus.id)));
            }
        }
        if spec.buses.iter().filter(|b| b.role == BusRole::Slack).count() != 1 {
            return Err(Error::InvalidNetwork("exactly one slack bus required".into()));
        }
        if !(spec.base_power > 0.0) {
            return Err(Error::InvalidNetwork("base power must be positive".into()));
        }
        let mut lines = Vec::with_capacity(spec.lines.len());
        for l in &spec.lines {
            let (Some(&i), Some(&j)) = (index.get(&l.from), index.get(&l.to)) else {
                return Err(Error::InvalidNetwork(format!("line {}-{} references an unknown bus", l.from, l.to)));
            };
            if i == j {
                return Err(Error::InvalidNetwork(format!("line {}-{} is a self loop", l.from, l.to)));
            }
            if !(l.x > 0.0 && l.r >= 0.0 && l.x.is_finite() && l.r.is_finite()) {
                return Err(Error::InvalidNetwork(format!("line {}-{} needs x > 0 and r ≥ 0", l.from, l.to)));
            }
            lines.push((i, j, l.r, l.x));
        }
        if !connected(n, &lines) {
            return Err(Error::InvalidNetwork("network is not connected".into()));
        }
        let (g, b) = admittance(n, &lines);
        let equilibrium = solve_power_flow(&spec.buses, &g, &b)?;
        let devices = spec
            .buses
            .iter()
            .enumerate()
            .map(|(i, bus)| {
                anchor(&bus.device, equilibrium.theta[i], equilibrium.v[i], equilibrium.p[i], equilibrium.q[i])
            })
            .collect();
        let model = Self {
            ids: spec.buses.iter().map(|b| b.id).collect(),
            devices,
            lines: spec.lines.clone(),
            equilibrium,
            g,
            b,
        };
        model.check_equilibrium()?;
        Ok(model)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_spec(&serde_json::from_str(text)?)
    }

    pub fn len(&self) -> usize {
        self.devices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.devices.is_empty()
    }

    fn check_equilibrium(&self) -> Result<()> {
        let e = &self.equilibrium;
        let (p, q) = power(&self.g, &self.b, &e.theta, &e.v);
        let flow = p.iter().zip(&e.p).chain(q.iter().zip(&e.q)).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        if !(flow <= FLOW_TOL) {
            return Err(Error::NoEquilibrium(format!("power-flow residual {flow:.3e}")));
        }
        for (i, d) in self.devices.iter().enumerate() {
            let eq = d.equilibrium();
            let r = d.vector_field(&eq.x_star, &eq.u_star)?.amax();
            if !(r <= FLOW_TOL) {
                return Err(Error::NoEquilibrium(format!("device at bus {} off equilibrium by {r:.3e}", self.ids[i])));
            }
        }
        Ok(())
    }

    /// Same network with every device replaced by `f(device)`; the
    /// operating point must be preserved.
    pub fn map_devices(&self, f: impl Fn(&DeviceModel) -> Result<DeviceModel>) -> Result<Self> {
        let devices = self.devices.iter().map(f).collect::<Result<Vec<_>>>()?;
        let out = Self { devices, ..self.clone() };
        out.check_equilibrium()?;
        Ok(out)
    }

    /// Same network with all line resistances set to zero, re-solved.
    pub fn lossless_spec(spec: &NetworkSpec) -> NetworkSpec {
        let mut s = spec.clone();
        for l in &mut s.lines {
            l.r = 0.0;
        }
        s
    }

    /// Jacobians at `y*` of the susceptance-only and conductance-only parts
    /// of the injection map `y ↦ [P_i, Q_i/V_i]`.
    pub fn coupling_jacobians(&self) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        let y = self.equilibrium.y_star();
        let zero = DMatrix::zeros(self.len(), self.len());
        Ok((checked_jacobian(&zero, &self.b, &y)?, checked_jacobian(&self.g, &zero, &y)?))
    }

    /// `∇²W_B + ½(∇φ + ∇φᵀ)`, whose negated smallest eigenvalue is σ_net.
    pub fn coupling_matrix(&self) -> Result<DMatrix<f64>> {
        let (hb, jphi) = self.coupling_jacobians()?;
        let asym = (&hb - hb.transpose()).amax();
        if asym > SYMMETRY_TOL * hb.amax().max(1.0) {
            return Err(Error::ModelInconsistency(format!("lossless coupling Hessian asymmetric by {asym:.3e}")));
        }
        Ok(sym(&hb) + sym(&jphi))
    }

    /// Linearization of every device at its operating point.
    pub fn device_models(&self) -> Result<Vec<crate::lti::CtLtiModel>> {
        self.devices.iter().map(|d| linearize(d, &d.equilibrium(), None)).collect()
    }

    /// Closed-loop state matrix `blkdiag(Ā) - blkdiag(B̄)·J·blkdiag(C)` with
    /// `J` the full injection Jacobian, since `u = -[P, Q/V]`.
    pub fn closed_loop(&self) -> Result<DMatrix<f64>> {
        let models = self.device_models()?;
        let a = block_diag(&models.iter().map(|m| m.a_bar.clone()).collect::<Vec<_>>());
        let b = block_diag(&models.iter().map(|m| m.b_bar.clone()).collect::<Vec<_>>());
        let c = block_diag(&models.iter().map(|m| m.c.clone()).collect::<Vec<_>>());
        let y = self.equilibrium.y_star();
        let jac = checked_jacobian(&self.g, &self.b, &y)?;
        Ok(a - b * jac * c)
    }

    /// Largest real part over the closed-loop spectrum.
    pub fn eigen_max_real(&self) -> Result<f64> {
        Ok(max_real_part(&eigenvalues(&self.closed_loop()?)?))
    }
}

/// `σ_net = -λ_min(∇²W_B(y*) + ½(∇φ(y*) + ∇φ(y*)ᵀ))`.
pub fn compute_sigma_net(network: &NetworkModel) -> Result<f64> {
    Ok(-min_eig(&network.coupling_matrix()?))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Region {
    Stable,
    Conservative,
    Unstable,
}

impl Region {
    pub fn as_str(&self) -> &'static str {
        match self {
            Region::Stable => "stable",
            Region::Conservative => "conservative",
            Region::Unstable => "unstable",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityVerdict {
    pub sigma_net: f64,
    /// Certified index per bus; `None` where certification failed.
    pub sigma: Vec<Option<f64>>,
    pub min_margin: f64,
    pub certified_stable: bool,
    pub eigen_max_real: f64,
    pub region: Region,
}

/// Distributed criterion `min σ_i > σ_net` against the closed-loop spectrum.
/// `sigma[i]` is the certified index of bus `i`, `None` without a certificate.
pub fn distributed_verdict(network: &NetworkModel, sigma: &[Option<f64>]) -> Result<StabilityVerdict> {
    if sigma.len() != network.len() {
        return Err(Error::IncompleteInput(format!(
            "{} certificates for {} buses",
            sigma.len(),
            network.len()
        )));
    }
    let sigma_net = compute_sigma_net(network)?;
    let min_sigma = sigma.iter().map(|s| s.unwrap_or(f64::NEG_INFINITY)).fold(f64::INFINITY, f64::min);
    let min_margin = min_sigma - sigma_net;
    let certified_stable = min_margin > 0.0;
    let eigen_max_real = network.eigen_max_real()?;
    let region = match (certified_stable, eigen_max_real < 0.0) {
        (true, _) => Region::Stable,
        (false, true) => Region::Conservative,
        (false, false) => Region::Unstable,
    };
    Ok(StabilityVerdict { sigma_net, sigma: sigma.to_vec(), min_margin, certified_stable, eigen_max_real, region })
}

/// Data collection for the sweep: every device is measured in isolation at
/// its operating point under a small multi-sine.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepSettings {
    pub h: f64,
    pub duration: f64,
    pub amplitude: f64,
    pub noise: f64,
    /// Voltage channels are tuned to `σ + voltage_margin`.
    pub voltage_margin: f64,
    pub step: f64,
    pub above: f64,
    pub below: f64,
}

impl Default for SweepSettings {
    fn default() -> Self {
        Self { h: 1e-3, duration: 20.0, amplitude: 1e-4, noise: 0.0, voltage_margin: 0.1, step: 0.025, above: 0.3, below: 0.2 }
    }
}

impl SweepSettings {
    pub fn validate(&self) -> Result<()> {
        let ok = self.h > 0.0
            && self.duration >= self.h
            && self.amplitude > 0.0
            && self.noise >= 0.0
            && self.step > 0.0
            && self.above >= 0.0
            && self.below >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid sweep settings {self:?}")))
        }
    }

    /// Targets from `σ_net + above` down to `σ_net - below`.
    pub fn grid(&self, sigma_net: f64) -> Vec<f64> {
        let count = ((self.above + self.below) / self.step + 1e-9).floor() as usize + 1;
        (0..count).map(|k| sigma_net + self.above - k as f64 * self.step).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub sigma_target: f64,
    pub sigma_net: f64,
    pub sigma_bus: Vec<Option<f64>>,
    /// Model-based index of each retuned device.
    pub sigma_theory: Vec<f64>,
    pub eig_max_real: f64,
    pub region: Region,
    pub certified_stable: bool,
    /// Per-bus diagnostics of failed or flagged certifications.
    pub flags: Vec<String>,
}

/// Certifies one device from isolated measurements at its operating point.
pub fn measure_device(device: &DeviceModel, settings: &SweepSettings, seed: u64, opts: &OdpOptions) -> Result<f64> {
    let (lo, hi) = device.time_scales();
    let excitation = ExcitationSignal::default_for(device.n_states(), device.n_io(), lo, hi, settings.amplitude);
    let record = simulate(
        device,
        &device.equilibrium(),
        &excitation,
        settings.h,
        settings.duration,
        settings.noise,
        seed,
        SimulationOptions::default(),
    )?;
    let cert = certify_record(&record, device.output_matrix().as_ref(), None, opts)?;
    if cert.status.has_point() {
        Ok(cert.certificate.sigma_scalar())
    } else {
        Err(Error::Solver(format!("certification {}", cert.status.as_str())))
    }
}

fn sweep_row(network: &NetworkModel, target: f64, sigma_net: f64, settings: &SweepSettings, seed: u64, opts: &OdpOptions) -> Result<SweepRow> {
    let tuned = network.map_devices(|d| d.with_indices(target, target + settings.voltage_margin))?;
    let mut sigma_bus = Vec::with_capacity(tuned.len());
    let mut flags = Vec::new();
    for (i, d) in tuned.devices.iter().enumerate() {
        match measure_device(d, settings, seed.wrapping_add(i as u64), opts) {
            Ok(s) => sigma_bus.push(Some(s)),
            Err(e) => {
                flags.push(format!("bus{}: {e}", tuned.ids[i]));
                sigma_bus.push(None);
            }
        }
    }
    let verdict = distributed_verdict(&tuned, &sigma_bus)?;
    Ok(SweepRow {
        sigma_target: target,
        sigma_net,
        sigma_theory: tuned.devices.iter().map(|d| d.theoretical_index()).collect(),
        sigma_bus,
        eig_max_real: verdict.eigen_max_real,
        region: verdict.region,
        certified_stable: verdict.certified_stable,
        flags,
    })
}

/// Retunes every device to each target index, measures and certifies it,
/// and classifies the closed loop. Rows come back in grid order.
pub fn sigma_sweep(network: &NetworkModel, settings: &SweepSettings, seed: u64, opts: &OdpOptions) -> Result<Vec<SweepRow>> {
    settings.validate()?;
    let sigma_net = compute_sigma_net(network)?;
    settings
        .grid(sigma_net)
        .par_iter()
        .map(|&t| sweep_row(network, t, sigma_net, settings, seed, opts))
        .collect()
}

/// Stressed three-bus microgrid: generator at bus 1 (slack), quadratic
/// droop inverter at bus 2 exporting 2.0, droop-controlled load at bus 3
/// drawing 3.0 and 0.2 reactive, on a triangle of identical lines.
pub fn heavy_load_3bus() -> NetworkSpec {
    use crate::devices::{CdParams, QdParams, SgParams};
    let line = |from, to| Line { from, to, r: 0.01, x: 0.12 };
    let sg = SgParams {
        m: 0.16,
        d: 0.076,
        t_d0: 6.56,
        x_d: 0.295,
        x_dp: 0.17,
        k_theta: 1.0,
        k_q: 0.5,
        p_star: 0.0,
        q_star: 0.0,
        e_star: 1.0,
        delta_star: 0.0,
    };
    let qd = QdParams { tau1: 0.3, tau2: 8.0, d1: 1.0, d2: 1.0, p_star: 0.0, q_star: 0.0, v_star: 1.0, theta_star: 0.0 };
    let cd = CdParams { tau1: 1.0, tau2: 10.0, ..CdParams::reference() };
    NetworkSpec {
        base_power: 1.0,
        buses: vec![
            BusSpec { id: 1, role: BusRole::Slack, p: 0.0, q: 0.0, v: 1.0, theta: 0.0, device: DeviceModel::Sg(sg) },
            BusSpec { id: 2, role: BusRole::Pv, p: 2.0, q: 0.0, v: 1.0, theta: 0.0, device: DeviceModel::Qd(qd) },
            BusSpec { id: 3, role: BusRole::Pq, p: -3.0, q: -0.2, v: 1.0, theta: 0.0, device: DeviceModel::Cd(cd) },
        ],
        lines: vec![line(1, 2), line(2, 3), line(1, 3)],
    }
}

#[cfg(test)]
mod tests;
