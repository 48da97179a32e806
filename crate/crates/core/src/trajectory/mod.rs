//! Simulation, sampling, averaging, normalization and data-matrix assembly
//! for measured device trajectories, plus persistent-excitation and
//! informativity rank checks.

mod excitation;
pub mod io;

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

pub use excitation::{ExcitationSignal, SineComponent};

use crate::error::{Error, Result};
use crate::linalg::rank_and_cond;
use crate::lti::{DtLtiModel, Dynamics, EquilibriumTriplet};

/// Condition number of `[X; U]` above which a warning is raised.
pub const COND_WARN: f64 = 1e8;
/// Condition number of `[X; U]` above which certification is refused.
pub const COND_REJECT: f64 = 1e12;

/// Sampled incremental trajectory: `inputs` has N columns, `states` and
/// `outputs` have N + 1.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    pub times: Vec<f64>,
    pub inputs: DMatrix<f64>,
    pub states: DMatrix<f64>,
    pub outputs: Option<DMatrix<f64>>,
    pub h: f64,
    pub meta: BTreeMap<String, String>,
}

impl TrajectoryRecord {
    pub fn new(
        inputs: DMatrix<f64>,
        states: DMatrix<f64>,
        outputs: Option<DMatrix<f64>>,
        h: f64,
        t0: f64,
    ) -> Result<Self> {
        if !(h > 0.0) {
            return Err(Error::InvalidArgument(format!("sampling interval must be positive, got {h}")));
        }
        if states.ncols() != inputs.ncols() + 1 {
            return Err(Error::InvalidArgument(format!(
                "states have {} columns, inputs {}; expected exactly one more state sample",
                states.ncols(),
                inputs.ncols()
            )));
        }
        if let Some(y) = &outputs {
            if y.ncols() != states.ncols() {
                return Err(Error::InvalidArgument("outputs and states differ in length".into()));
            }
        }
        let times = (0..states.ncols()).map(|k| t0 + k as f64 * h).collect();
        Ok(Self { times, inputs, states, outputs, h, meta: BTreeMap::new() })
    }

    pub fn n(&self) -> usize {
        self.states.nrows()
    }

    pub fn m(&self) -> usize {
        self.inputs.nrows()
    }

    /// Number of input samples N.
    pub fn len(&self) -> usize {
        self.inputs.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.ncols() == 0
    }

    /// Keeps the first `samples` input samples (and `samples + 1` states).
    pub fn truncate(&self, samples: usize) -> Result<Self> {
        if samples == 0 || samples > self.len() {
            return Err(Error::InvalidArgument(format!(
                "window of {samples} samples outside 1..={}",
                self.len()
            )));
        }
        let mut out = Self::new(
            self.inputs.columns(0, samples).into_owned(),
            self.states.columns(0, samples + 1).into_owned(),
            self.outputs.as_ref().map(|y| y.columns(0, samples + 1).into_owned()),
            self.h,
            self.times[0],
        )?;
        out.meta = self.meta.clone();
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimulationOptions {
    /// RK4 substeps per sampling interval (at least 20).
    pub substeps: usize,
    /// State norm treated as divergence.
    pub divergence_bound: f64,
}

impl Default for SimulationOptions {
    fn default() -> Self {
        Self { substeps: 20, divergence_bound: 1e6 }
    }
}

/// Integrates `device` from its equilibrium under `u* + excitation`, with the
/// excitation held constant over each sampling interval, and records
/// incremental signals. Gaussian noise with standard deviation
/// `noise_std_fraction × peak |channel|` is added to states and outputs;
/// inputs are the known probing signal and stay clean.
#[allow(clippy::too_many_arguments)]
pub fn simulate<D: Dynamics + ?Sized>(
    device: &D,
    eq: &EquilibriumTriplet,
    excitation: &ExcitationSignal,
    h: f64,
    duration: f64,
    noise_std_fraction: f64,
    seed: u64,
    options: SimulationOptions,
) -> Result<TrajectoryRecord> {
    if !(h > 0.0) {
        return Err(Error::InvalidArgument(format!("sampling interval must be positive, got {h}")));
    }
    if !(duration >= h) {
        return Err(Error::InvalidArgument(format!("duration {duration} shorter than h = {h}")));
    }
    if !(noise_std_fraction >= 0.0) {
        return Err(Error::InvalidArgument("noise fraction must be nonnegative".into()));
    }
    excitation.validate()?;
    let (n, m) = (device.n_states(), device.n_io());
    if excitation.channels() != m {
        return Err(Error::InvalidArgument(format!(
            "excitation has {} channels, device has {m} inputs",
            excitation.channels()
        )));
    }
    let steps = (duration / h).round() as usize;
    let sub = options.substeps.max(20);
    let dt = h / sub as f64;

    let mut x = eq.x_star.clone();
    let mut states = DMatrix::zeros(n, steps + 1);
    let mut outputs = DMatrix::zeros(m, steps + 1);
    let mut inputs = DMatrix::zeros(m, steps);
    outputs.set_column(0, &(device.output(&x) - &eq.y_star));
    for k in 0..steps {
        let du = excitation.value(k as f64 * h);
        let u = &eq.u_star + &du;
        inputs.set_column(k, &du);
        for s in 0..sub {
            x = rk4_step(device, &x, &u, dt)?;
            let norm = x.norm();
            if !(norm <= options.divergence_bound) {
                return Err(Error::SimulationDiverged { time: k as f64 * h + (s + 1) as f64 * dt, norm });
            }
        }
        states.set_column(k + 1, &(&x - &eq.x_star));
        outputs.set_column(k + 1, &(device.output(&x) - &eq.y_star));
    }

    if noise_std_fraction > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        add_noise(&mut states, noise_std_fraction, &mut rng);
        add_noise(&mut outputs, noise_std_fraction, &mut rng);
    }
    let mut rec = TrajectoryRecord::new(inputs, states, Some(outputs), h, 0.0)?;
    rec.meta.insert("excitation".into(), excitation.describe());
    rec.meta.insert("noise_std_fraction".into(), noise_std_fraction.to_string());
    rec.meta.insert("seed".into(), seed.to_string());
    Ok(rec)
}

fn add_noise(m: &mut DMatrix<f64>, frac: f64, rng: &mut ChaCha8Rng) {
    let peaks: Vec<f64> = (0..m.nrows()).map(|i| m.row(i).amax()).collect();
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            let z: f64 = StandardNormal.sample(rng);
            m[(i, j)] += frac * peaks[i] * z;
        }
    }
}

/// Runs a discrete-time model from `x0` under the given input sequence.
/// Outputs `Cx` are recorded when `with_outputs` is set.
pub fn simulate_dt(
    model: &DtLtiModel,
    x0: &DVector<f64>,
    inputs: &DMatrix<f64>,
    with_outputs: bool,
) -> Result<TrajectoryRecord> {
    if x0.len() != model.n() || inputs.nrows() != model.m() {
        return Err(Error::InvalidArgument("initial state or input dimension mismatch".into()));
    }
    let big_n = inputs.ncols();
    let mut states = DMatrix::zeros(model.n(), big_n + 1);
    states.set_column(0, x0);
    for k in 0..big_n {
        let next = model.step(&states.column(k).into_owned(), &inputs.column(k).into_owned());
        states.set_column(k + 1, &next);
    }
    let outputs = with_outputs.then(|| &model.c * &states);
    TrajectoryRecord::new(inputs.clone(), states, outputs, model.h, 0.0)
}

pub fn rk4_step<D: Dynamics + ?Sized>(
    device: &D,
    x: &DVector<f64>,
    u: &DVector<f64>,
    dt: f64,
) -> Result<DVector<f64>> {
    let k1 = device.vector_field(x, u)?;
    let k2 = device.vector_field(&(x + &k1 * (dt / 2.0)), u)?;
    let k3 = device.vector_field(&(x + &k2 * (dt / 2.0)), u)?;
    let k4 = device.vector_field(&(x + &k3 * dt), u)?;
    Ok(x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0))
}

/// Mean over all complete periods: sample k of the result averages sample
/// `k + jp` over periods j, with `p = period / h`.
pub fn period_average(record: &TrajectoryRecord, period: f64) -> Result<TrajectoryRecord> {
    let ratio = period / record.h;
    let p = ratio.round() as usize;
    if p == 0 || (ratio - p as f64).abs() > 1e-9 * ratio.max(1.0) {
        return Err(Error::InvalidArgument(format!(
            "period {period} is not an integer multiple of h = {}",
            record.h
        )));
    }
    let periods = record.len() / p;
    if periods < 2 {
        return Err(Error::InsufficientData(format!(
            "{periods} complete period(s) of {p} samples; at least 2 needed"
        )));
    }
    let avg = |m: &DMatrix<f64>, width: usize| {
        let mut out = DMatrix::zeros(m.nrows(), width);
        for j in 0..periods {
            out += m.columns(j * p, width);
        }
        out / periods as f64
    };
    let mut out = TrajectoryRecord::new(
        avg(&record.inputs, p),
        avg(&record.states, p + 1),
        record.outputs.as_ref().map(|y| avg(y, p + 1)),
        record.h,
        record.times[0],
    )?;
    out.meta = record.meta.clone();
    out.meta.insert("periods_averaged".into(), periods.to_string());
    Ok(out)
}

/// Per-row peak factors: the normalized value is `raw / factor`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaling {
    pub states: Vec<f64>,
    pub inputs: Vec<f64>,
    pub outputs: Option<Vec<f64>>,
}

fn peak_factors(m: &DMatrix<f64>, prefix: &str) -> Result<Vec<f64>> {
    (0..m.nrows())
        .map(|i| {
            let p = m.row(i).amax();
            if p > 0.0 && p.is_finite() {
                Ok(p)
            } else {
                Err(Error::DegenerateChannel(format!("{prefix}{}", i + 1)))
            }
        })
        .collect()
}

fn scale_rows(m: &DMatrix<f64>, f: &[f64], inverse: bool) -> DMatrix<f64> {
    let mut out = m.clone();
    for (i, &s) in f.iter().enumerate() {
        let mut row = out.row_mut(i);
        if inverse {
            row *= s;
        } else {
            row /= s;
        }
    }
    out
}

/// Scales every state, input and output channel to unit peak magnitude.
pub fn normalize(record: &TrajectoryRecord) -> Result<(TrajectoryRecord, Scaling)> {
    let scaling = Scaling {
        states: peak_factors(&record.states, "x")?,
        inputs: peak_factors(&record.inputs, "u")?,
        outputs: record.outputs.as_ref().map(|y| peak_factors(y, "y")).transpose()?,
    };
    Ok((apply_scaling(record, &scaling, false), scaling))
}

pub fn denormalize(record: &TrajectoryRecord, scaling: &Scaling) -> TrajectoryRecord {
    apply_scaling(record, scaling, true)
}

fn apply_scaling(record: &TrajectoryRecord, s: &Scaling, inverse: bool) -> TrajectoryRecord {
    let mut out = record.clone();
    out.states = scale_rows(&record.states, &s.states, inverse);
    out.inputs = scale_rows(&record.inputs, &s.inputs, inverse);
    if let (Some(y), Some(f)) = (&record.outputs, &s.outputs) {
        out.outputs = Some(scale_rows(y, f, inverse));
    }
    out
}

/// Supply-preserving scaling: states and outputs go to unit peak and the
/// inputs are scaled by `κ / f_y`, so `u_nᵀΔy_n = uᵀΔy / κ`. A certified
/// normalized pair `(Σ_n, P_n)` maps back as `Σ = κ F_y⁻¹ Σ_n F_y⁻¹`,
/// `P = κ F_x⁻¹ P_n F_x⁻¹`. With `c` given the outputs are `y = Cx`,
/// otherwise the recorded outputs.
pub fn normalize_paired(
    record: &TrajectoryRecord,
    c: Option<&DMatrix<f64>>,
) -> Result<(TrajectoryRecord, Scaling)> {
    let y = match (c, &record.outputs) {
        (Some(c), _) => c * &record.states,
        (None, Some(y)) => y.clone(),
        (None, None) => {
            return Err(Error::InvalidArgument("paired normalization needs outputs or C".into()))
        }
    };
    if y.nrows() != record.m() {
        return Err(Error::InvalidArgument("output and input dimensions differ".into()));
    }
    let fx = peak_factors(&record.states, "x")?;
    let fy = peak_factors(&y, "y")?;
    let kappa = (0..record.m())
        .map(|i| record.inputs.row(i).amax() * fy[i])
        .fold(0.0, f64::max);
    if !(kappa > 0.0) {
        return Err(Error::DegenerateChannel("u (all input channels)".into()));
    }
    let scaling = Scaling {
        states: fx,
        inputs: fy.iter().map(|f| kappa / f).collect(),
        outputs: Some(fy),
    };
    let mut out = apply_scaling(record, &scaling, false);
    if record.outputs.is_none() {
        out.outputs = None;
    }
    Ok((out, scaling))
}

impl Scaling {
    /// Common factor `κ = f_u,i · f_y,i` of a paired scaling.
    pub fn supply_factor(&self) -> Option<f64> {
        let fy = self.outputs.as_ref()?;
        let k = self.inputs[0] * fy[0];
        let paired = self
            .inputs
            .iter()
            .zip(fy)
            .all(|(u, y)| ((u * y) - k).abs() <= 1e-12 * k.abs());
        paired.then_some(k)
    }
}

/// Data blocks `X`, `X₊`, `U` (and optionally `Y`, `Y₊`).
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrices {
    pub x: DMatrix<f64>,
    pub x_plus: DMatrix<f64>,
    pub u: DMatrix<f64>,
    pub y: Option<DMatrix<f64>>,
    pub y_plus: Option<DMatrix<f64>>,
    pub rank_xu: usize,
    pub cond_xu: f64,
    pub scaling: Option<Scaling>,
}

impl DataMatrices {
    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn m(&self) -> usize {
        self.u.nrows()
    }

    pub fn samples(&self) -> usize {
        self.u.ncols()
    }

    /// `[X; U]`.
    pub fn stacked(&self) -> DMatrix<f64> {
        stack(&self.x, &self.u)
    }
}

pub fn stack(top: &DMatrix<f64>, bottom: &DMatrix<f64>) -> DMatrix<f64> {
    let mut z = DMatrix::zeros(top.nrows() + bottom.nrows(), top.ncols());
    z.rows_mut(0, top.nrows()).copy_from(top);
    z.rows_mut(top.nrows(), bottom.nrows()).copy_from(bottom);
    z
}

pub fn build_data_matrices(record: &TrajectoryRecord) -> Result<DataMatrices> {
    let (n, m, big_n) = (record.n(), record.m(), record.len());
    if big_n < n + m {
        return Err(Error::InsufficientData(format!("{big_n} samples, need at least n + m = {}", n + m)));
    }
    let x = record.states.columns(0, big_n).into_owned();
    let x_plus = record.states.columns(1, big_n).into_owned();
    let u = record.inputs.clone();
    let (rank_xu, cond_xu, _) = rank_and_cond(&stack(&x, &u));
    Ok(DataMatrices {
        y: record.outputs.as_ref().map(|y| y.columns(0, big_n).into_owned()),
        y_plus: record.outputs.as_ref().map(|y| y.columns(1, big_n).into_owned()),
        x,
        x_plus,
        u,
        rank_xu,
        cond_xu,
        scaling: None,
    })
}

/// Depth-`l` block Hankel matrix; block row i holds `u_i, …, u_{N-L+i}`.
pub fn hankel(inputs: &DMatrix<f64>, l: usize) -> Result<DMatrix<f64>> {
    let (m, big_n) = (inputs.nrows(), inputs.ncols());
    if l == 0 || l > big_n {
        return Err(Error::InvalidArgument(format!("depth {l} outside 1..={big_n}")));
    }
    let cols = big_n - l + 1;
    let mut h = DMatrix::zeros(m * l, cols);
    for i in 0..l {
        h.view_mut((i * m, 0), (m, cols)).copy_from(&inputs.columns(i, cols));
    }
    Ok(h)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PeReport {
    pub exciting: bool,
    pub order: usize,
    pub rank: usize,
    pub required: usize,
    /// Ratio of the last singular value that must be nonzero to the rank threshold.
    pub gap: f64,
    pub singular_values: Vec<f64>,
}

pub fn is_persistently_exciting(inputs: &DMatrix<f64>, l: usize) -> Result<PeReport> {
    let h = hankel(inputs, l)?;
    let required = inputs.nrows() * l;
    let (rank, _, s) = rank_and_cond(&h);
    let smax = s.get(0).copied().unwrap_or(0.0);
    let thresh = h.nrows().max(h.ncols()) as f64 * f64::EPSILON * smax;
    let critical = if required <= s.len() { s[required - 1] } else { 0.0 };
    let gap = if thresh > 0.0 { critical / thresh } else { 0.0 };
    Ok(PeReport {
        exciting: rank == required,
        order: l,
        rank,
        required,
        gap,
        singular_values: s.iter().copied().collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InformativityReport {
    pub informative: bool,
    pub rank: usize,
    pub required: usize,
    pub cond: f64,
    pub ill_conditioned_warning: bool,
    pub reject: bool,
}

pub fn check_informativity(data: &DataMatrices, n: usize, m: usize) -> InformativityReport {
    let required = n + m;
    InformativityReport {
        informative: data.rank_xu == required,
        rank: data.rank_xu,
        required,
        cond: data.cond_xu,
        ill_conditioned_warning: data.cond_xu > COND_WARN,
        reject: data.cond_xu > COND_REJECT,
    }
}
