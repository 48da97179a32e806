//! Continuous- and discrete-time LTI models, step-invariant discretization,
//! finite-difference linearization of nonlinear devices and dense
//! eigenvalue analysis.

use nalgebra::{Complex, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::is_finite;

/// Default equilibrium residual tolerance for [`linearize`].
pub const EQUILIBRIUM_TOL: f64 = 1e-8;

/// Nonlinear input-affine or general device `ẋ = f(x, u)`, `y = g(x)`.
pub trait Dynamics: Send + Sync {
    fn n_states(&self) -> usize;
    fn n_io(&self) -> usize;
    fn vector_field(&self, x: &DVector<f64>, u: &DVector<f64>) -> Result<DVector<f64>>;
    fn output(&self, x: &DVector<f64>) -> DVector<f64>;
    /// Exact output matrix when the output map is linear.
    fn output_matrix(&self) -> Option<DMatrix<f64>> {
        None
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CtLtiModel {
    pub a_bar: DMatrix<f64>,
    pub b_bar: DMatrix<f64>,
    pub c: DMatrix<f64>,
}

impl CtLtiModel {
    pub fn new(a_bar: DMatrix<f64>, b_bar: DMatrix<f64>, c: DMatrix<f64>) -> Result<Self> {
        check_dims(&a_bar, &b_bar, &c)?;
        Ok(Self { a_bar, b_bar, c })
    }

    pub fn n(&self) -> usize {
        self.a_bar.nrows()
    }

    pub fn m(&self) -> usize {
        self.b_bar.ncols()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DtLtiModel {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub h: f64,
}

impl DtLtiModel {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, c: DMatrix<f64>, h: f64) -> Result<Self> {
        check_dims(&a, &b, &c)?;
        check_step(h)?;
        Ok(Self { a, b, c, h })
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn m(&self) -> usize {
        self.b.ncols()
    }

    pub fn step(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        &self.a * x + &self.b * u
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumTriplet {
    pub u_star: DVector<f64>,
    pub x_star: DVector<f64>,
    pub y_star: DVector<f64>,
}

fn check_dims(a: &DMatrix<f64>, b: &DMatrix<f64>, c: &DMatrix<f64>) -> Result<()> {
    let n = a.nrows();
    let m = b.ncols();
    if n == 0 || m == 0 {
        return Err(Error::InvalidArgument("empty state or input dimension".into()));
    }
    if a.ncols() != n || b.nrows() != n || c.nrows() != m || c.ncols() != n {
        return Err(Error::InvalidArgument(format!(
            "inconsistent dimensions: A {}x{}, B {}x{}, C {}x{}",
            a.nrows(),
            a.ncols(),
            b.nrows(),
            b.ncols(),
            c.nrows(),
            c.ncols()
        )));
    }
    if !(is_finite(a) && is_finite(b) && is_finite(c)) {
        return Err(Error::NumericInput("model matrices contain non-finite entries".into()));
    }
    Ok(())
}

fn check_step(h: f64) -> Result<()> {
    if !h.is_finite() {
        return Err(Error::NumericInput(format!("sampling interval {h}")));
    }
    if h <= 0.0 {
        return Err(Error::InvalidArgument(format!("sampling interval must be positive, got {h}")));
    }
    Ok(())
}

/// Zero-order-hold discretization from `exp([[Ā, B̄], [0, 0]] h)`.
///
/// The exponential is nalgebra's Padé scaling-and-squaring routine, which
/// keeps the relative truncation error near machine precision.
pub fn discretize(model: &CtLtiModel, h: f64) -> Result<DtLtiModel> {
    check_step(h)?;
    let (n, m) = (model.n(), model.m());
    let mut aug = DMatrix::zeros(n + m, n + m);
    aug.view_mut((0, 0), (n, n)).copy_from(&(&model.a_bar * h));
    aug.view_mut((0, n), (n, m)).copy_from(&(&model.b_bar * h));
    let e = aug.exp();
    if !is_finite(&e) {
        return Err(Error::Numeric("matrix exponential overflowed".into()));
    }
    DtLtiModel::new(
        e.view((0, 0), (n, n)).into_owned(),
        e.view((0, n), (n, m)).into_owned(),
        model.c.clone(),
        h,
    )
}

/// Euler sampling `A = I + hĀ`, `B = hB̄`. Only for sampling-error studies.
pub fn first_order_discretize(model: &CtLtiModel, h: f64) -> Result<DtLtiModel> {
    check_step(h)?;
    let n = model.n();
    DtLtiModel::new(
        DMatrix::identity(n, n) + &model.a_bar * h,
        &model.b_bar * h,
        model.c.clone(),
        h,
    )
}

/// Central-difference linearization at an equilibrium with the default
/// residual tolerance. `step` defaults to `1e-6 · max(1, ‖x*‖∞)`.
pub fn linearize<D: Dynamics + ?Sized>(
    device: &D,
    eq: &EquilibriumTriplet,
    step: Option<f64>,
) -> Result<CtLtiModel> {
    linearize_with_tolerance(device, eq, step, EQUILIBRIUM_TOL)
}

pub fn linearize_with_tolerance<D: Dynamics + ?Sized>(
    device: &D,
    eq: &EquilibriumTriplet,
    step: Option<f64>,
    residual_tol: f64,
) -> Result<CtLtiModel> {
    let n = device.n_states();
    let m = device.n_io();
    if eq.x_star.len() != n || eq.u_star.len() != m || eq.y_star.len() != m {
        return Err(Error::InvalidArgument("equilibrium dimensions do not match device".into()));
    }
    let step = step.unwrap_or_else(|| 1e-6 * eq.x_star.amax().max(1.0));
    if !(step > 0.0) {
        return Err(Error::InvalidArgument(format!("step must be positive, got {step}")));
    }
    let f0 = device.vector_field(&eq.x_star, &eq.u_star)?;
    let residual = f0.norm();
    if !(residual <= residual_tol) {
        return Err(Error::NotAnEquilibrium { residual, tol: residual_tol });
    }
    let y = device.output(&eq.x_star);
    let ydev = (&y - &eq.y_star).amax();
    if ydev > residual_tol.max(1e-12) * y.amax().max(1.0) {
        return Err(Error::ModelInconsistency(format!(
            "y* differs from output map at x* by {ydev:.3e}"
        )));
    }

    let mut a = DMatrix::zeros(n, n);
    for j in 0..n {
        let mut xp = eq.x_star.clone();
        let mut xm = eq.x_star.clone();
        xp[j] += step;
        xm[j] -= step;
        let col = (device.vector_field(&xp, &eq.u_star)? - device.vector_field(&xm, &eq.u_star)?)
            / (2.0 * step);
        a.set_column(j, &col);
    }
    let ustep = 1e-6 * eq.u_star.amax().max(1.0);
    let mut b = DMatrix::zeros(n, m);
    for j in 0..m {
        let mut up = eq.u_star.clone();
        let mut um = eq.u_star.clone();
        up[j] += ustep;
        um[j] -= ustep;
        let col = (device.vector_field(&eq.x_star, &up)? - device.vector_field(&eq.x_star, &um)?)
            / (2.0 * ustep);
        b.set_column(j, &col);
    }
    let c = match device.output_matrix() {
        Some(c) => c,
        None => {
            let mut c = DMatrix::zeros(m, n);
            for j in 0..n {
                let mut xp = eq.x_star.clone();
                let mut xm = eq.x_star.clone();
                xp[j] += step;
                xm[j] -= step;
                c.set_column(j, &((device.output(&xp) - device.output(&xm)) / (2.0 * step)));
            }
            c
        }
    };
    if !(is_finite(&a) && is_finite(&b) && is_finite(&c)) {
        return Err(Error::Numeric("finite differences produced non-finite values".into()));
    }
    CtLtiModel::new(a, b, c)
}

pub fn eigenvalues(m: &DMatrix<f64>) -> Result<Vec<Complex<f64>>> {
    if m.nrows() != m.ncols() {
        return Err(Error::InvalidArgument(format!("matrix is {}x{}, not square", m.nrows(), m.ncols())));
    }
    if !is_finite(m) {
        return Err(Error::NumericInput("matrix contains non-finite entries".into()));
    }
    Ok(m.complex_eigenvalues().iter().copied().collect())
}

pub fn max_real_part(eigs: &[Complex<f64>]) -> f64 {
    eigs.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max)
}
