//! Bus device models: conventional droop (CD) inverter, quadratic droop (QD)
//! inverter and a one-axis synchronous generator (SG).
//!
//! Every device uses the bus interface `u = [-P, -Q/V]`, `y = [θ, V]`, with
//! `(P, Q)` the power injected into the network. The QD and SG equations
//! below are standard textbook forms chosen for this toolkit; their
//! regression constants come from our own derivations.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lti::{Dynamics, EquilibriumTriplet};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CdParams {
    pub tau1: f64,
    pub tau2: f64,
    pub d1: f64,
    pub d2: f64,
    pub p_star: f64,
    pub q_star: f64,
    pub v_star: f64,
    pub theta_star: f64,
}

impl CdParams {
    /// Single-inverter offline benchmark values.
    pub fn reference() -> Self {
        Self { tau1: 1.0, tau2: 10.0, d1: 0.3, d2: 0.1, p_star: 0.5, q_star: 0.0, v_star: 1.0, theta_star: 0.0 }
    }
}

/// Quadratic droop: `τ₁θ̇ = -(θ-θ*) - D₁(P-P*)`,
/// `τ₂V̇ = -V(V-V*) - D₂(Q-Q*)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QdParams {
    pub tau1: f64,
    pub tau2: f64,
    pub d1: f64,
    pub d2: f64,
    pub p_star: f64,
    pub q_star: f64,
    pub v_star: f64,
    pub theta_star: f64,
}

/// One-axis generator with the internal EMF node taken as the bus:
///
/// ```text
/// δ̇ = ω
/// Mω̇ = P_m - P - Dω - K_θ(δ - δ*)
/// T'd Ė' = E_fd - E' - (x_d - x'_d) Q/E' - K_Q (Q - Q*)
/// ```
///
/// `K_θ` is a secondary frequency (angle) feedback and `K_Q` an excitation
/// reactive droop; both default to values that keep the swing channel's
/// passivity index positive. `P_m` and `E_fd` are fixed by the setpoints.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SgParams {
    pub m: f64,
    pub d: f64,
    pub t_d0: f64,
    pub x_d: f64,
    pub x_dp: f64,
    pub k_theta: f64,
    pub k_q: f64,
    pub p_star: f64,
    pub q_star: f64,
    pub e_star: f64,
    pub delta_star: f64,
}

impl SgParams {
    pub fn p_m(&self) -> f64 {
        self.p_star
    }

    pub fn e_fd(&self) -> f64 {
        self.e_star + (self.x_d - self.x_dp) * self.q_star / self.e_star
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DeviceKind {
    Cd,
    Qd,
    Sg,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum DeviceModel {
    Cd(CdParams),
    Qd(QdParams),
    Sg(SgParams),
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("{name} must be positive, got {v}")))
    }
}

fn injections(u: &DVector<f64>, v: f64) -> Result<(f64, f64)> {
    if !(v > 0.0) {
        return Err(Error::Domain(format!("voltage {v} is not positive")));
    }
    Ok((-u[0], -u[1] * v))
}

pub fn cd_dynamics(x: &DVector<f64>, u: &DVector<f64>, p: &CdParams) -> Result<DVector<f64>> {
    let (theta, v) = (x[0], x[1]);
    let (pw, q) = injections(u, v)?;
    Ok(DVector::from_vec(vec![
        (-(theta - p.theta_star) - p.d1 * (pw - p.p_star)) / p.tau1,
        (-(v - p.v_star) - p.d2 * (q - p.q_star)) / p.tau2,
    ]))
}

pub fn qd_dynamics(x: &DVector<f64>, u: &DVector<f64>, p: &QdParams) -> Result<DVector<f64>> {
    let (theta, v) = (x[0], x[1]);
    let (pw, q) = injections(u, v)?;
    Ok(DVector::from_vec(vec![
        (-(theta - p.theta_star) - p.d1 * (pw - p.p_star)) / p.tau1,
        (-v * (v - p.v_star) - p.d2 * (q - p.q_star)) / p.tau2,
    ]))
}

pub fn sg_dynamics(x: &DVector<f64>, u: &DVector<f64>, p: &SgParams) -> Result<DVector<f64>> {
    let (delta, omega, e) = (x[0], x[1], x[2]);
    let (pw, q) = injections(u, e)?;
    Ok(DVector::from_vec(vec![
        omega,
        (p.p_m() - pw - p.d * omega - p.k_theta * (delta - p.delta_star)) / p.m,
        (p.e_fd() - e - (p.x_d - p.x_dp) * q / e - p.k_q * (q - p.q_star)) / p.t_d0,
    ]))
}

/// `σ_th = min{1/D₁, (V*/D₂ + Q*)/V*²}`.
pub fn cd_theoretical_bound(p: &CdParams) -> Result<f64> {
    positive("d1", p.d1)?;
    positive("d2", p.d2)?;
    positive("v_star", p.v_star)?;
    Ok((1.0 / p.d1).min((p.v_star / p.d2 + p.q_star) / (p.v_star * p.v_star)))
}

impl DeviceModel {
    pub fn kind(&self) -> DeviceKind {
        match self {
            DeviceModel::Cd(_) => DeviceKind::Cd,
            DeviceModel::Qd(_) => DeviceKind::Qd,
            DeviceModel::Sg(_) => DeviceKind::Sg,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            DeviceModel::Cd(p) => {
                positive("tau1", p.tau1)?;
                positive("tau2", p.tau2)?;
                positive("v_star", p.v_star)
            }
            DeviceModel::Qd(p) => {
                positive("tau1", p.tau1)?;
                positive("tau2", p.tau2)?;
                positive("v_star", p.v_star)
            }
            DeviceModel::Sg(p) => {
                positive("m", p.m)?;
                positive("d", p.d)?;
                positive("t_d0", p.t_d0)?;
                positive("x_d", p.x_d)?;
                positive("x_dp", p.x_dp)?;
                positive("e_star", p.e_star)
            }
        }
    }

    /// Operating point implied by the setpoints.
    pub fn equilibrium(&self) -> EquilibriumTriplet {
        let (x, p, q, v, th) = match self {
            DeviceModel::Cd(c) => (vec![c.theta_star, c.v_star], c.p_star, c.q_star, c.v_star, c.theta_star),
            DeviceModel::Qd(c) => (vec![c.theta_star, c.v_star], c.p_star, c.q_star, c.v_star, c.theta_star),
            DeviceModel::Sg(s) => (vec![s.delta_star, 0.0, s.e_star], s.p_star, s.q_star, s.e_star, s.delta_star),
        };
        EquilibriumTriplet {
            u_star: DVector::from_vec(vec![-p, -q / v]),
            x_star: DVector::from_vec(x),
            y_star: DVector::from_vec(vec![th, v]),
        }
    }

    /// Model-based passivity index of the linearization at the setpoints,
    /// the minimum of the two decoupled channel bounds.
    pub fn theoretical_index(&self) -> f64 {
        self.channel_indices().0.min(self.channel_indices().1)
    }

    /// Angle- and voltage-channel bounds `(σ_θ, σ_V)`.
    pub fn channel_indices(&self) -> (f64, f64) {
        match self {
            DeviceModel::Cd(p) => (1.0 / p.d1, (p.v_star / p.d2 + p.q_star) / (p.v_star * p.v_star)),
            DeviceModel::Qd(p) => (1.0 / p.d1, 1.0 / p.d2 + p.q_star / (p.v_star * p.v_star)),
            DeviceModel::Sg(p) => (
                p.k_theta,
                (1.0 + p.k_q * p.q_star / p.e_star) / (p.k_q * p.e_star + p.x_d - p.x_dp),
            ),
        }
    }

    /// Retunes control gains so the channel indices equal `(σ_θ, σ_V)`
    /// while the setpoints, and hence the equilibrium, stay fixed.
    pub fn with_indices(&self, sigma_theta: f64, sigma_v: f64) -> Result<Self> {
        let bad = |what: &str, val: f64| {
            Error::InvalidArgument(format!("index {what} = {val} not reachable by gain retuning"))
        };
        let out = match *self {
            DeviceModel::Cd(mut p) => {
                let den = sigma_v * p.v_star * p.v_star - p.q_star;
                if !(sigma_theta > 0.0) || !(den > 0.0) {
                    return Err(bad("sigma", sigma_theta.min(sigma_v)));
                }
                p.d1 = 1.0 / sigma_theta;
                p.d2 = p.v_star / den;
                DeviceModel::Cd(p)
            }
            DeviceModel::Qd(mut p) => {
                let den = sigma_v - p.q_star / (p.v_star * p.v_star);
                if !(sigma_theta > 0.0) || !(den > 0.0) {
                    return Err(bad("sigma", sigma_theta.min(sigma_v)));
                }
                p.d1 = 1.0 / sigma_theta;
                p.d2 = 1.0 / den;
                DeviceModel::Qd(p)
            }
            DeviceModel::Sg(mut p) => {
                let den = sigma_v * p.e_star - p.q_star / p.e_star;
                let kq = (1.0 - sigma_v * (p.x_d - p.x_dp)) / den;
                if !(den > 0.0) || !(kq >= 0.0) {
                    return Err(bad("sigma_v", sigma_v));
                }
                p.k_theta = sigma_theta;
                p.k_q = kq;
                DeviceModel::Sg(p)
            }
        };
        Ok(out)
    }

    /// Characteristic time scales `(τ_min, τ_max)` used for excitation design.
    pub fn time_scales(&self) -> (f64, f64) {
        match self {
            DeviceModel::Cd(p) => (p.tau1.min(p.tau2), p.tau1.max(p.tau2)),
            DeviceModel::Qd(p) => (p.tau1.min(p.tau2), p.tau1.max(p.tau2)),
            DeviceModel::Sg(p) => {
                let mech = (p.m / p.k_theta.max(1e-3)).sqrt();
                (mech.min(p.m / p.d), p.t_d0.max(p.m / p.d))
            }
        }
    }
}

impl Dynamics for DeviceModel {
    fn n_states(&self) -> usize {
        match self {
            DeviceModel::Sg(_) => 3,
            _ => 2,
        }
    }

    fn n_io(&self) -> usize {
        2
    }

    fn vector_field(&self, x: &DVector<f64>, u: &DVector<f64>) -> Result<DVector<f64>> {
        match self {
            DeviceModel::Cd(p) => cd_dynamics(x, u, p),
            DeviceModel::Qd(p) => qd_dynamics(x, u, p),
            DeviceModel::Sg(p) => sg_dynamics(x, u, p),
        }
    }

    fn output(&self, x: &DVector<f64>) -> DVector<f64> {
        match self {
            DeviceModel::Sg(_) => DVector::from_vec(vec![x[0], x[2]]),
            _ => DVector::from_vec(vec![x[0], x[1]]),
        }
    }

    fn output_matrix(&self) -> Option<DMatrix<f64>> {
        Some(match self {
            DeviceModel::Sg(_) => DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 0.0, 0.0, 0.0, 1.0]),
            _ => DMatrix::identity(2, 2),
        })
    }
}

/// Steady state of `device` under fixed injections `(P, Q)`, by damped
/// Newton iteration started from the setpoints.
pub fn solve_equilibrium(device: &DeviceModel, p_inj: f64, q_inj: f64) -> Result<EquilibriumTriplet> {
    let n = device.n_states();
    let volt = |x: &DVector<f64>| device.output(x)[1];
    let residual = |x: &DVector<f64>| -> Result<DVector<f64>> {
        let v = volt(x);
        if !(v > 0.0) {
            return Err(Error::Domain(format!("voltage {v} is not positive")));
        }
        device.vector_field(x, &DVector::from_vec(vec![-p_inj, -q_inj / v]))
    };
    let mut x = device.equilibrium().x_star;
    let mut r = residual(&x)?;
    for _ in 0..100 {
        if r.norm() <= 1e-10 {
            let v = volt(&x);
            return Ok(EquilibriumTriplet {
                u_star: DVector::from_vec(vec![-p_inj, -q_inj / v]),
                y_star: device.output(&x),
                x_star: x,
            });
        }
        let step = 1e-7;
        let mut jac = DMatrix::zeros(n, n);
        for j in 0..n {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[j] += step;
            xm[j] -= step;
            let col = match (residual(&xp), residual(&xm)) {
                (Ok(a), Ok(b)) => (a - b) / (2.0 * step),
                _ => return Err(Error::NoEquilibrium("Jacobian left the voltage domain".into())),
            };
            jac.set_column(j, &col);
        }
        let dx = jac
            .lu()
            .solve(&(-&r))
            .ok_or_else(|| Error::NoEquilibrium("singular steady-state Jacobian".into()))?;
        let mut alpha = 1.0;
        loop {
            let xn = &x + &dx * alpha;
            if let Ok(rn) = residual(&xn) {
                if rn.norm() < (1.0 - 1e-4 * alpha) * r.norm() {
                    x = xn;
                    r = rn;
                    break;
                }
            }
            alpha *= 0.5;
            if alpha < 1e-10 {
                return Err(Error::NoEquilibrium(format!(
                    "Newton stalled with residual {:.3e}",
                    r.norm()
                )));
            }
        }
    }
    Err(Error::NoEquilibrium(format!("no convergence in 100 iterations (residual {:.3e})", r.norm())))
}
