//! Output differential passivity (ODP) certification.
//!
//! Every problem is an affine matrix inequality `L(P, Σ) ⪯ tol·s·I` with
//! `P ⪰ ε_P I`, where `s` is a reference magnitude of the supply term so
//! that the tolerance is scale free:
//!
//! * continuous model: `L = M̄₁ − ½(M̄₂ + M̄₂ᵀ)`, `s = ‖C[Ā B̄]‖`
//! * discrete model: `L = M₁ − ½(M₂ + M₂ᵀ)`, `s = ‖C[A−I B]‖`
//! * data: `L = X₊ᵀPX₊ − XᵀPX − ½(M₃ + M₃ᵀ)`, `M₃ = (U − ΣCX)ᵀ(CX₊ − CX)`,
//!   `s = ‖U‖‖CX₊ − CX‖`
//!
//! `Σ` is either fixed (feasibility) or a free symmetric variable
//! (maximization of `tr Σ` or of `λ_min(Σ)`).

mod certificate;
mod data;

use std::str::FromStr;

use lmi_sdp::{ClarabelBackend, LmiBlock, SdpBackend, SdpProblem, Status};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

pub use certificate::{Conditioning, OdpCertificate, SolverStats};
pub use data::{
    build_data_driven_lmi, certify_record, self_check, DataCertification, OutputMap,
};

use crate::error::{Error, Result};
use crate::linalg::{max_eig, min_eig, null_space, spectral_norm, sym, sym_basis, sym_from_coords};
use crate::lti::{CtLtiModel, DtLtiModel};

pub const TOL_FEAS: f64 = 1e-7;
pub const EPS_P: f64 = 1e-8;
pub const SOLVE_TOL: f64 = 1e-10;
/// Relative singular value below which a direction counts as a face direction.
const FACE_RANK_TOL: f64 = 1e-10;
/// Relative size of `zᵀFz` accepted as zero when a face is validated.
const FACE_CHECK_TOL: f64 = 1e-10;
/// Largest tightening of the reduced block, in normalized units, before a
/// mismatch on the face is treated as infeasibility.
const FACE_MISMATCH_CAP: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Objective {
    #[serde(rename = "trace")]
    Trace,
    #[serde(rename = "minEig")]
    MinEig,
}

impl Objective {
    pub fn as_str(&self) -> &'static str {
        match self {
            Objective::Trace => "trace",
            Objective::MinEig => "minEig",
        }
    }
}

impl FromStr for Objective {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "trace" => Ok(Objective::Trace),
            "minEig" => Ok(Objective::MinEig),
            other => Err(Error::Config(format!("unknown objective '{other}' (trace|minEig)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OdpOptions {
    pub tol_feas: f64,
    pub eps_p: f64,
    pub objective: Objective,
    /// Project data-driven constraints onto the row space of `[X; U]` when N > n + m.
    pub compress: bool,
    pub max_constraint_size: usize,
    pub cond_reject: f64,
    /// Skip the rank check on data (explicit acknowledgment).
    pub allow_uninformative: bool,
    /// Residual bound imposed while solving, tighter than `tol_feas` so the
    /// returned point passes re-verification with room to spare.
    pub solve_tol: f64,
}

impl Default for OdpOptions {
    fn default() -> Self {
        Self {
            tol_feas: TOL_FEAS,
            eps_p: EPS_P,
            objective: Objective::Trace,
            compress: true,
            max_constraint_size: 400,
            cond_reject: crate::trajectory::COND_REJECT,
            allow_uninformative: false,
            solve_tol: SOLVE_TOL,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum LmiKind {
    Continuous,
    Discrete,
    DataDriven,
}

/// Affine map `L(P, Σ) = L₀ + Σ pᵢ Lᵢ + Σ sⱼ Sⱼ` in the coordinates of
/// [`sym_basis`], with `Σ` either fixed (folded into `L₀`) or free.
#[derive(Debug, Clone, PartialEq)]
pub struct LmiProblem {
    pub kind: LmiKind,
    pub n: usize,
    pub m: usize,
    pub constant: DMatrix<f64>,
    pub p_coeffs: Vec<DMatrix<f64>>,
    pub sigma_coeffs: Vec<DMatrix<f64>>,
    pub sigma_fixed: Option<DMatrix<f64>>,
    pub scale: f64,
    pub compressed: bool,
    /// Orthonormal directions `z` with `zᵀL(P, Σ)z = 0` for every `(P, Σ)`.
    /// `L ⪯ 0` then forces `Lz = 0`, so the feasible set has no interior
    /// and is solved on that face.
    pub face: DMatrix<f64>,
    /// `d` with `Σ = D⁻¹ Σ_c D⁻¹`, `D = diag(d)`, relating the solver
    /// coordinates `Σ_c` to the units in which the objective is taken.
    pub sigma_units: DVector<f64>,
}

impl LmiProblem {
    fn assemble<F>(
        kind: LmiKind,
        n: usize,
        m: usize,
        sigma: Option<&DMatrix<f64>>,
        scale: f64,
        lmat: F,
    ) -> Result<Self>
    where
        F: Fn(&DMatrix<f64>, &DMatrix<f64>) -> DMatrix<f64>,
    {
        if let Some(s) = sigma {
            check_sigma(s, m)?;
        }
        let zp = DMatrix::zeros(n, n);
        let base = sigma.map_or_else(|| DMatrix::zeros(m, m), |s| sym(s));
        let raw = lmat(&zp, &base);
        let asym = (&raw - raw.transpose()).amax();
        if asym > 1e-12 * raw.amax().max(1.0) {
            return Err(Error::ModelInconsistency(format!("constant block asymmetric by {asym:.3e}")));
        }
        let constant = sym(&raw);
        let p_coeffs = sym_basis(n).iter().map(|e| sym(&lmat(e, &base)) - &constant).collect();
        let sigma_coeffs = if sigma.is_none() {
            sym_basis(m).iter().map(|e| sym(&lmat(&zp, e)) - &constant).collect()
        } else {
            Vec::new()
        };
        let scale = if scale > 0.0 && scale.is_finite() { scale } else { 1.0 };
        Ok(Self {
            kind,
            n,
            m,
            constant,
            p_coeffs,
            sigma_coeffs,
            sigma_fixed: sigma.map(sym),
            scale,
            compressed: false,
            face: DMatrix::zeros(raw.nrows(), 0),
            sigma_units: DVector::from_element(m, 1.0),
        })
    }

    /// Records the null space of `g` as the face of the problem after
    /// checking that every coefficient of the map vanishes on it. `L` built
    /// as `HG + GᵀHᵀ + GᵀPG` has this property for the kernel of `G`.
    fn with_face(mut self, g: &DMatrix<f64>) -> Self {
        let z = null_space(g, FACE_RANK_TOL);
        let size = self.size();
        if z.ncols() == 0 || z.nrows() != size {
            return self;
        }
        let all = || std::iter::once(&self.constant).chain(&self.p_coeffs).chain(&self.sigma_coeffs);
        let magnitude = all().map(|f| f.amax()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
        let worst = all().map(|f| (z.transpose() * f * &z).amax()).fold(0.0, f64::max);
        if worst <= FACE_CHECK_TOL * magnitude {
            self.face = z;
        }
        self
    }

    pub fn size(&self) -> usize {
        self.constant.nrows()
    }

    /// The same problem with a free Σ fixed to `sigma`.
    pub fn with_sigma(&self, sigma: &DMatrix<f64>) -> Result<Self> {
        if !self.sigma_is_free() {
            return Err(Error::InvalidArgument("Σ is already fixed".into()));
        }
        check_sigma(sigma, self.m)?;
        let mut constant = self.constant.clone();
        for (c, v) in self.sigma_coeffs.iter().zip(crate::linalg::sym_to_coords(sigma)) {
            constant += c * v;
        }
        Ok(Self {
            constant,
            sigma_coeffs: Vec::new(),
            sigma_fixed: Some(sym(sigma)),
            p_coeffs: self.p_coeffs.clone(),
            face: self.face.clone(),
            sigma_units: self.sigma_units.clone(),
            ..*self
        })
    }

    pub fn sigma_is_free(&self) -> bool {
        self.sigma_fixed.is_none()
    }

    /// `L(P, Σ)`; `sigma` is ignored when the problem fixes Σ.
    pub fn evaluate(&self, p: &DMatrix<f64>, sigma: &DMatrix<f64>) -> DMatrix<f64> {
        let mut l = self.constant.clone();
        for (c, v) in self.p_coeffs.iter().zip(crate::linalg::sym_to_coords(p)) {
            l += c * v;
        }
        if self.sigma_fixed.is_none() {
            for (c, v) in self.sigma_coeffs.iter().zip(crate::linalg::sym_to_coords(sigma)) {
                l += c * v;
            }
        }
        l
    }

    /// `λ_max(L(P, Σ)) / s`.
    pub fn normalized_slack(&self, p: &DMatrix<f64>, sigma: &DMatrix<f64>) -> f64 {
        max_eig(&self.evaluate(p, sigma)) / self.scale
    }
}

fn check_sigma(s: &DMatrix<f64>, m: usize) -> Result<()> {
    if s.nrows() != m || s.ncols() != m {
        return Err(Error::InvalidArgument(format!("Σ is {}x{}, expected {m}x{m}", s.nrows(), s.ncols())));
    }
    let asym = (s - s.transpose()).amax();
    if asym > 1e-10 {
        return Err(Error::InvalidArgument(format!("Σ asymmetric by {asym:.3e}")));
    }
    Ok(())
}

fn hstack(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(a.nrows(), a.ncols() + b.ncols());
    out.columns_mut(0, a.ncols()).copy_from(a);
    out.columns_mut(a.ncols(), b.ncols()).copy_from(b);
    out
}

fn blocks2(tl: DMatrix<f64>, tr: DMatrix<f64>, bl: DMatrix<f64>, br: DMatrix<f64>) -> DMatrix<f64> {
    let (n, m) = (tl.nrows(), br.nrows());
    let mut out = DMatrix::zeros(n + m, n + m);
    out.view_mut((0, 0), (n, n)).copy_from(&tl);
    out.view_mut((0, n), (n, m)).copy_from(&tr);
    out.view_mut((n, 0), (m, n)).copy_from(&bl);
    out.view_mut((n, n), (m, m)).copy_from(&br);
    out
}

/// Continuous-time model LMI `M̄₁ − ½(M̄₂ + M̄₂ᵀ) ⪯ 0` with
/// `M̄₁ = [[ĀᵀP + PĀ, PB̄], [B̄ᵀP, 0]]`, `M̄₂ = [[−CᵀΣCĀ, −CᵀΣCB̄], [CĀ, CB̄]]`.
/// `sigma = None` leaves Σ free.
pub fn build_ct_lmi(model: &CtLtiModel, sigma: Option<&DMatrix<f64>>) -> Result<LmiProblem> {
    let (a, b, c) = (&model.a_bar, &model.b_bar, &model.c);
    let (n, m) = (model.n(), model.m());
    let scale = spectral_norm(&(c * hstack(a, b)));
    let problem = LmiProblem::assemble(LmiKind::Continuous, n, m, sigma, scale, |p, s| {
        let m1 = blocks2(a.transpose() * p + p * a, p * b, b.transpose() * p, DMatrix::zeros(m, m));
        let csc = c.transpose() * s * c;
        let m2 = blocks2(-&csc * a, -&csc * b, c * a, c * b);
        m1 - (&m2 + m2.transpose()) * 0.5
    })?;
    Ok(problem.with_face(&hstack(a, b)))
}

/// Discrete-time model LMI with `M₁ = [[AᵀPA − P, AᵀPB], [BᵀPA, BᵀPB]]`,
/// `M₂ = [[−CᵀΣC(A−I), −CᵀΣCB], [C(A−I), CB]]`.
pub fn build_dt_lmi(model: &DtLtiModel, sigma: Option<&DMatrix<f64>>) -> Result<LmiProblem> {
    let (a, b, c) = (&model.a, &model.b, &model.c);
    let (n, m) = (model.n(), model.m());
    let ami = a - DMatrix::identity(n, n);
    let scale = spectral_norm(&(c * hstack(&ami, b)));
    let problem = LmiProblem::assemble(LmiKind::Discrete, n, m, sigma, scale, |p, s| {
        let m1 = blocks2(
            a.transpose() * p * a - p,
            a.transpose() * p * b,
            b.transpose() * p * a,
            b.transpose() * p * b,
        );
        let csc = c.transpose() * s * c;
        let m2 = blocks2(-&csc * &ami, -&csc * b, c * &ami, c * b);
        m1 - (&m2 + m2.transpose()) * 0.5
    })?;
    Ok(problem.with_face(&hstack(&ami, b)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Feasibility,
    Maximize(Objective),
}

#[derive(Debug, Clone, PartialEq)]
pub struct LmiSolution {
    pub status: Status,
    pub p: DMatrix<f64>,
    pub sigma: DMatrix<f64>,
    pub slack: f64,
    pub stats: SolverStats,
}

impl LmiSolution {
    pub fn feasible(&self) -> bool {
        self.status.has_point()
    }
}


/// Solves `problem` with the default backend. Feasible results are checked
/// against the residual `λ_max(L) ≤ tol·s` and `λ_min(P) ≥ ε_P` recomputed
/// from the affine map; a violation is reported as a solver error.
pub fn solve_lmi(problem: &LmiProblem, sense: Sense, opts: &OdpOptions) -> Result<LmiSolution> {
    solve_lmi_with(&ClarabelBackend::default(), problem, sense, opts)
}

fn sdp_err(e: lmi_sdp::SdpError) -> Error {
    Error::Solver(e.to_string())
}

fn numerical_failure(sol: &lmi_sdp::Solution) -> Error {
    Error::Solver(format!(
        "numerical failure after {} iterations (backend status {}, gap {:.3e})",
        sol.iterations, sol.backend_status, sol.gap
    ))
}

/// The problem restricted to its face: `L z = 0` for the face directions
/// is a set of linear equalities in `(P, Σ)`, eliminated as `v = v₀ + N w`,
/// and the remaining constraint is `RᵀLR ⪯ 0` with `R` spanning the
/// complement of the face.
struct FaceReduction {
    v0: DVector<f64>,
    basis: DMatrix<f64>,
    complement: DMatrix<f64>,
    /// `RᵀL(v₀)Z/s`. Zero for exact data; with noise the equalities hold only
    /// in the least-squares sense and this block is fixed on the whole slice.
    mismatch: DMatrix<f64>,
}

impl FaceReduction {
    /// Since `ZᵀLZ ≡ 0`, the full condition `L/s ⪯ τI` on the slice
    /// `v₀ + Nw` is `RᵀLR/s ⪯ τI − EEᵀ/τ` with `E` the fixed mismatch, an
    /// exact Schur complement. `None` when that tightening exceeds
    /// `FACE_MISMATCH_CAP`.
    fn new(problem: &LmiProblem, face_tol: f64) -> Option<Self> {
        let nv = problem.p_coeffs.len() + problem.sigma_coeffs.len();
        let size = problem.size();
        let z = &problem.face;
        if z.ncols() == 0 {
            return Some(Self {
                v0: DVector::zeros(nv),
                basis: DMatrix::identity(nv, nv),
                complement: DMatrix::identity(size, size),
                mismatch: DMatrix::zeros(size, 0),
            });
        }
        let complement = null_space(&z.transpose(), FACE_RANK_TOL);
        let inv = 1.0 / problem.scale;
        let rows = complement.ncols() * z.ncols();
        let block = |f: &DMatrix<f64>| complement.transpose() * f * z * inv;
        if rows == 0 {
            return Some(Self {
                v0: DVector::zeros(nv),
                basis: DMatrix::identity(nv, nv),
                mismatch: DMatrix::zeros(complement.ncols(), z.ncols()),
                complement,
            });
        }
        let mut e = DMatrix::zeros(rows, nv);
        for (i, f) in problem.p_coeffs.iter().chain(&problem.sigma_coeffs).enumerate() {
            e.set_column(i, &DVector::from_column_slice(block(f).as_slice()));
        }
        let rhs = -DVector::from_column_slice(block(&problem.constant).as_slice());
        let svd = e.clone().svd(true, true);
        let cutoff = FACE_RANK_TOL * svd.singular_values.max();
        let v0 = svd.solve(&rhs, cutoff).ok()?;
        let residual = &e * &v0 - &rhs;
        let mismatch = DMatrix::from_column_slice(complement.ncols(), z.ncols(), residual.as_slice());
        if (&mismatch * mismatch.transpose()).amax() / face_tol > FACE_MISMATCH_CAP {
            return None;
        }
        Some(Self { v0, basis: null_space(&e, FACE_RANK_TOL), complement, mismatch })
    }

    fn dim(&self) -> usize {
        self.basis.ncols()
    }

    /// Original coordinates of a reduced point.
    fn lift(&self, w: &[f64]) -> DVector<f64> {
        &self.v0 + &self.basis * DVector::from_column_slice(&w[..self.dim()])
    }

    /// `F₀ + Σ v₀ᵢFᵢ` and the coefficients `Σᵢ NᵢⱼFᵢ` of an affine map
    /// given by `constant` and `coeffs` over the original coordinates.
    fn map(&self, constant: &DMatrix<f64>, coeffs: &[DMatrix<f64>]) -> (DMatrix<f64>, Vec<DMatrix<f64>>) {
        let mut c0 = constant.clone();
        for (f, v) in coeffs.iter().zip(self.v0.iter()) {
            c0 += f * *v;
        }
        let cs = (0..self.dim())
            .map(|j| {
                let mut acc = DMatrix::zeros(constant.nrows(), constant.ncols());
                for (i, f) in coeffs.iter().enumerate() {
                    let nij = self.basis[(i, j)];
                    if nij != 0.0 {
                        acc += f * nij;
                    }
                }
                acc
            })
            .collect();
        (c0, cs)
    }
}

/// Backend problem for `RᵀLR/s ⪯ tol·I − EEᵀ/face_tol`, `P ⪰ eps·I` over the reduced
/// coordinates followed by `extra` variables that enter neither block.
fn base_sdp(problem: &LmiProblem, red: &FaceReduction, tol: f64, face_tol: f64, eps: f64, extra: usize) -> Result<SdpProblem> {
    let n = problem.n;
    let dim = red.dim() + extra;
    let r = &red.complement;
    let inv = 1.0 / problem.scale;
    let size = r.ncols();

    let all: Vec<DMatrix<f64>> = problem.p_coeffs.iter().chain(&problem.sigma_coeffs).cloned().collect();
    let (l0, lc) = red.map(&problem.constant, &all);
    // the residual block is divided by its scale so the backend sees O(1) data
    let mut coeffs: Vec<DMatrix<f64>> = lc.iter().map(|f| r.transpose() * f * r * -inv).collect();
    coeffs.resize(dim, DMatrix::zeros(size, size));
    let tightening = &red.mismatch * red.mismatch.transpose() / face_tol;
    let f0 = DMatrix::identity(size, size) * tol - tightening - r.transpose() * l0 * r * inv;
    let mut sdp = SdpProblem::new(dim);
    if size > 0 {
        sdp.add_block(LmiBlock::new(f0, coeffs).map_err(sdp_err)?).map_err(sdp_err)?;
    }

    let mut p_basis = sym_basis(n);
    p_basis.extend(problem.sigma_coeffs.iter().map(|_| DMatrix::zeros(n, n)));
    let (p0, mut pc) = red.map(&DMatrix::zeros(n, n), &p_basis);
    pc.resize(dim, DMatrix::zeros(n, n));
    sdp.add_block(LmiBlock::new(p0 - DMatrix::identity(n, n) * eps, pc).map_err(sdp_err)?).map_err(sdp_err)?;
    Ok(sdp)
}

fn split_point(problem: &LmiProblem, v: &DVector<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let dp = problem.p_coeffs.len();
    let p = sym_from_coords(problem.n, &v.as_slice()[..dp]);
    let sigma = match &problem.sigma_fixed {
        Some(s) => s.clone(),
        None => sym_from_coords(problem.m, &v.as_slice()[dp..dp + problem.sigma_coeffs.len()]),
    };
    (p, sigma)
}

fn infeasible_on_face(problem: &LmiProblem, objective: &str) -> (Status, DMatrix<f64>, DMatrix<f64>, SolverStats) {
    let sigma = problem.sigma_fixed.clone().unwrap_or_else(|| DMatrix::zeros(problem.m, problem.m));
    let stats = SolverStats {
        termination: Status::Infeasible.as_str().to_string(),
        objective: objective.to_string(),
        iterations: 0,
        duality_gap: None,
        phase1_margin: None,
        backend_status: "face mismatch beyond cap".to_string(),
    };
    (Status::Infeasible, DMatrix::zeros(problem.n, problem.n), sigma, stats)
}

pub fn solve_lmi_with<B: SdpBackend>(
    backend: &B,
    problem: &LmiProblem,
    sense: Sense,
    opts: &OdpOptions,
) -> Result<LmiSolution> {
    let (status, p, sigma, mut stats) = match sense {
        Sense::Feasibility => feasibility(backend, problem, opts)?,
        Sense::Maximize(objective) => maximize(backend, problem, objective, opts)?,
    };
    let slack = problem.normalized_slack(&p, &sigma);
    stats.termination = status.as_str().to_string();
    if status.has_point() && (slack > opts.tol_feas || min_eig(&p) < opts.eps_p) {
        return Err(Error::Solver(format!(
            "returned point fails verification: slack {slack:.3e}, λ_min(P) {:.3e}",
            min_eig(&p)
        )));
    }
    Ok(LmiSolution { status, p, sigma, slack, stats })
}

fn stats_from(sol: &lmi_sdp::Solution, objective: &str) -> SolverStats {
    SolverStats {
        termination: sol.status.as_str().to_string(),
        objective: objective.to_string(),
        iterations: sol.iterations,
        duality_gap: sol.gap.is_finite().then_some(sol.gap),
        phase1_margin: sol.phase1_margin.is_finite().then_some(sol.phase1_margin),
        backend_status: sol.backend_status.clone(),
    }
}

type Outcome = (Status, DMatrix<f64>, DMatrix<f64>, SolverStats);

fn feasibility<B: SdpBackend>(backend: &B, problem: &LmiProblem, opts: &OdpOptions) -> Result<Outcome> {
    let face_tol = 0.95 * opts.tol_feas;
    let Some(red) = FaceReduction::new(problem, face_tol) else {
        return Ok(infeasible_on_face(problem, "feasibility"));
    };
    let tol = opts.solve_tol.min(opts.tol_feas);
    let sdp = base_sdp(problem, &red, tol, face_tol, opts.eps_p * 1.01, 0)?;
    let sol = backend.find_feasible(&sdp);
    if sol.status == Status::NumericalFailure {
        return Err(numerical_failure(&sol));
    }
    let (p, sigma) = split_point(problem, &red.lift(sol.x.as_slice()));
    Ok((sol.status, p, sigma, stats_from(&sol, "feasibility")))
}

fn maximize<B: SdpBackend>(
    backend: &B,
    problem: &LmiProblem,
    objective: Objective,
    opts: &OdpOptions,
) -> Result<Outcome> {
    if !problem.sigma_is_free() {
        return Err(Error::InvalidArgument("maximization needs Σ free".into()));
    }
    let face_tol = 0.95 * opts.tol_feas;
    let Some(red) = FaceReduction::new(problem, face_tol) else {
        return Ok(infeasible_on_face(problem, objective.as_str()));
    };
    let (dp, m) = (problem.p_coeffs.len(), problem.m);
    let tol = opts.solve_tol.min(opts.tol_feas);
    let min_eig_obj = objective == Objective::MinEig;
    let mut sdp = base_sdp(problem, &red, tol, face_tol, opts.eps_p * 1.01, usize::from(min_eig_obj))?;
    let dim = sdp.dim();
    let q = red.dim();
    // objective over the original coordinates, then pulled back through N
    let mut c_orig = DVector::zeros(red.v0.len());
    match objective {
        Objective::Trace => {
            // tr(D⁻¹ Σ_c D⁻¹)
            let mut k = dp;
            for i in 0..m {
                c_orig[k] = problem.sigma_units[i].powi(-2);
                k += m - i;
            }
        }
        Objective::MinEig => {
            // D⁻¹ Σ_c D⁻¹ − tI ⪰ 0, i.e. Σ_c − tD² ⪰ 0, with t maximized
            let mut s_basis: Vec<DMatrix<f64>> = vec![DMatrix::zeros(m, m); dp];
            s_basis.extend(sym_basis(m));
            let (s0, mut sc) = red.map(&DMatrix::zeros(m, m), &s_basis);
            sc.push(-DMatrix::from_diagonal(&problem.sigma_units.map(|d| d * d)));
            sdp.add_block(LmiBlock::new(s0, sc).map_err(sdp_err)?).map_err(sdp_err)?;
        }
    }
    let mut c = DVector::zeros(dim);
    c.rows_mut(0, q).copy_from(&(red.basis.transpose() * c_orig));
    if min_eig_obj {
        c[q] = 1.0;
    }
    sdp.set_objective(c).map_err(sdp_err)?;
    let sol = backend.maximize(&sdp);
    if sol.status == Status::NumericalFailure {
        return Err(numerical_failure(&sol));
    }
    let (p, sigma) = split_point(problem, &red.lift(sol.x.as_slice()));
    Ok((sol.status, p, sigma, stats_from(&sol, objective.as_str())))
}

/// Feasibility of a problem with fixed Σ, as a certificate.
pub fn solve_feasibility(problem: &LmiProblem, opts: &OdpOptions) -> Result<OdpCertificate> {
    let sol = solve_lmi(problem, Sense::Feasibility, opts)?;
    Ok(model_certificate(problem, sol))
}

/// Maximizes `tr Σ` (or `λ_min Σ`) over the free-Σ problem.
pub fn maximize_odp(problem: &LmiProblem, opts: &OdpOptions) -> Result<OdpCertificate> {
    let sol = solve_lmi(problem, Sense::Maximize(opts.objective), opts)?;
    Ok(model_certificate(problem, sol))
}

fn model_certificate(problem: &LmiProblem, sol: LmiSolution) -> OdpCertificate {
    let feasible = sol.feasible();
    OdpCertificate {
        sigma_matrix: sol.sigma,
        storage_matrix: sol.p,
        feasible,
        slack: sol.slack,
        solver_stats: sol.stats,
        conditioning: Conditioning {
            cond_xu: None,
            rank_xu: None,
            constraint_size: problem.size(),
            tolerance_scale: problem.scale,
            compressed: problem.compressed,
            ill_conditioned_warning: false,
        },
    }
}

/// `σ = λ_min(Σ)`; Σ is symmetrized when its asymmetry is at most 1e-10.
pub fn extract_scalar_index(sigma: &DMatrix<f64>) -> Result<f64> {
    if sigma.nrows() != sigma.ncols() || sigma.is_empty() {
        return Err(Error::InvalidArgument("Σ must be square and nonempty".into()));
    }
    let asym = (sigma - sigma.transpose()).amax();
    if asym > 1e-10 {
        return Err(Error::InvalidArgument(format!("Σ asymmetric by {asym:.3e}")));
    }
    Ok(min_eig(sigma))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SamplingReport {
    pub h: f64,
    pub lmi_norm: f64,
    pub ratio: f64,
    pub adequate: bool,
}

/// Compares `h²` with `‖M̄₁ − ½(M̄₂ + M̄₂ᵀ)‖` evaluated at a reference
/// `(P, Σ)`; `h` is flagged inadequate when the ratio exceeds 0.01.
pub fn sampling_error_report(
    model: &CtLtiModel,
    h: f64,
    p_ref: &DMatrix<f64>,
    sigma_ref: &DMatrix<f64>,
) -> Result<SamplingReport> {
    if !(h > 0.0) {
        return Err(Error::InvalidArgument(format!("h must be positive, got {h}")));
    }
    let problem = build_ct_lmi(model, Some(sigma_ref))?;
    let l = problem.evaluate(p_ref, sigma_ref);
    let lmi_norm = spectral_norm(&l);
    let ratio = h * h / lmi_norm;
    Ok(SamplingReport { h, lmi_norm, ratio, adequate: ratio <= 0.01 })
}

/// Largest `σ` in `[lo, hi]` with `feasible(σ)`, assuming a single
/// feasible-to-infeasible transition; `None` if `lo` is infeasible.
pub fn bisect_boundary<F: FnMut(f64) -> Result<bool>>(
    mut feasible: F,
    mut lo: f64,
    mut hi: f64,
    tol: f64,
) -> Result<Option<f64>> {
    if !feasible(lo)? {
        return Ok(None);
    }
    if feasible(hi)? {
        return Ok(Some(hi));
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if feasible(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(Some(lo))
}

#[cfg(test)]
mod tests;
