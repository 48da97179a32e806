//! Small semidefinite programs in the form
//!
//! ```text
//! maximize    cᵀv
//! subject to  F_j(v) = F_j0 + Σ_i v_i F_ji ⪰ 0,   j = 1..k
//! ```
//!
//! handed to a conic interior-point backend. Feasibility is decided by the
//! phase-one problem `min s` subject to `F_j(v) + sI ⪰ 0`, `s ≥ −1`, and
//! the returned point is re-checked here: a problem counts as feasible only
//! when every block evaluated at that point is positive definite.

mod clarabel_backend;

pub use clarabel_backend::{ClarabelBackend, ClarabelOptions};

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SdpError {
    #[error("block {block}: coefficient {index} is {rows}x{cols}, expected {size}x{size}")]
    Dimension {
        block: usize,
        index: usize,
        rows: usize,
        cols: usize,
        size: usize,
    },
    #[error("block {block}: matrix {index} not symmetric (asymmetry {asym:.3e})")]
    NotSymmetric { block: usize, index: usize, asym: f64 },
    #[error("block {block} has {got} coefficient matrices, problem has {dim} variables")]
    VariableCount { block: usize, got: usize, dim: usize },
    #[error("objective has length {got}, problem has {dim} variables")]
    ObjectiveLength { got: usize, dim: usize },
    #[error("non-finite entry in problem data")]
    NonFinite,
}

/// One affine matrix inequality `F0 + Σ v_i F_i ⪰ 0`.
#[derive(Debug, Clone)]
pub struct LmiBlock {
    constant: DMatrix<f64>,
    coeffs: Vec<DMatrix<f64>>,
    active: Vec<usize>,
}

impl LmiBlock {
    /// Builds a block; all matrices must be square, of equal size and
    /// symmetric to a relative tolerance of 1e-12.
    pub fn new(constant: DMatrix<f64>, coeffs: Vec<DMatrix<f64>>) -> Result<Self, SdpError> {
        let size = constant.nrows();
        let check = |index: usize, m: &DMatrix<f64>| -> Result<(), SdpError> {
            if m.nrows() != size || m.ncols() != size {
                return Err(SdpError::Dimension {
                    block: 0,
                    index,
                    rows: m.nrows(),
                    cols: m.ncols(),
                    size,
                });
            }
            if m.iter().any(|x| !x.is_finite()) {
                return Err(SdpError::NonFinite);
            }
            let asym = (m - m.transpose()).amax();
            if asym > 1e-12 * m.amax().max(1.0) {
                return Err(SdpError::NotSymmetric { block: 0, index, asym });
            }
            Ok(())
        };
        check(0, &constant)?;
        for (i, f) in coeffs.iter().enumerate() {
            check(i + 1, f)?;
        }
        let active = coeffs
            .iter()
            .enumerate()
            .filter(|(_, f)| f.amax() > 0.0)
            .map(|(i, _)| i)
            .collect();
        Ok(Self { constant, coeffs, active })
    }

    pub fn size(&self) -> usize {
        self.constant.nrows()
    }

    pub fn num_vars(&self) -> usize {
        self.coeffs.len()
    }

    pub fn constant(&self) -> &DMatrix<f64> {
        &self.constant
    }

    pub fn coeffs(&self) -> &[DMatrix<f64>] {
        &self.coeffs
    }

    /// Evaluates `F0 + Σ v_i F_i`.
    pub fn eval(&self, v: &DVector<f64>) -> DMatrix<f64> {
        let mut s = self.constant.clone();
        for &i in &self.active {
            s += &self.coeffs[i] * v[i];
        }
        s
    }
}

/// `maximize cᵀv` subject to every block being positive semidefinite.
#[derive(Debug, Clone)]
pub struct SdpProblem {
    dim: usize,
    objective: DVector<f64>,
    blocks: Vec<LmiBlock>,
}

impl SdpProblem {
    pub fn new(dim: usize) -> Self {
        Self { dim, objective: DVector::zeros(dim), blocks: Vec::new() }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn blocks(&self) -> &[LmiBlock] {
        &self.blocks
    }

    pub fn objective(&self) -> &DVector<f64> {
        &self.objective
    }

    pub fn set_objective(&mut self, c: DVector<f64>) -> Result<(), SdpError> {
        if c.len() != self.dim {
            return Err(SdpError::ObjectiveLength { got: c.len(), dim: self.dim });
        }
        if c.iter().any(|x| !x.is_finite()) {
            return Err(SdpError::NonFinite);
        }
        self.objective = c;
        Ok(())
    }

    pub fn add_block(&mut self, block: LmiBlock) -> Result<(), SdpError> {
        let idx = self.blocks.len();
        if block.num_vars() != self.dim {
            return Err(SdpError::VariableCount { block: idx, got: block.num_vars(), dim: self.dim });
        }
        self.blocks.push(block);
        Ok(())
    }

    /// Smallest eigenvalue over all blocks at `v`.
    pub fn min_eigenvalue(&self, v: &DVector<f64>) -> f64 {
        self.blocks
            .iter()
            .map(|b| min_eig(&b.eval(v)))
            .fold(f64::INFINITY, f64::min)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    /// Optimum reached to the backend tolerances.
    Optimal,
    /// Strictly feasible point found (feasibility problems).
    Feasible,
    Infeasible,
    Unbounded,
    NumericalFailure,
}

impl Status {
    pub fn as_str(&self) -> &'static str {
        match self {
            Status::Optimal => "optimal",
            Status::Feasible => "feasible",
            Status::Infeasible => "infeasible",
            Status::Unbounded => "unbounded",
            Status::NumericalFailure => "numerical_failure",
        }
    }

    pub fn has_point(&self) -> bool {
        matches!(self, Status::Optimal | Status::Feasible)
    }
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub status: Status,
    pub x: DVector<f64>,
    pub objective: f64,
    pub iterations: usize,
    /// Absolute primal-dual objective gap reported by the backend.
    pub gap: f64,
    /// Optimal phase-one shift; negative means the problem has an interior
    /// of at least that depth. NaN when phase one did not run.
    pub phase1_margin: f64,
    /// Backend termination code, for diagnostics.
    pub backend_status: String,
}

pub trait SdpBackend {
    /// Finds a strictly feasible point or reports infeasibility.
    fn find_feasible(&self, problem: &SdpProblem) -> Solution;
    /// Maximizes the objective.
    fn maximize(&self, problem: &SdpProblem) -> Solution;
}

pub fn min_eig(s: &DMatrix<f64>) -> f64 {
    if s.nrows() == 1 {
        return s[(0, 0)];
    }
    s.clone().symmetric_eigenvalues().min()
}

pub fn max_eig(s: &DMatrix<f64>) -> f64 {
    if s.nrows() == 1 {
        return s[(0, 0)];
    }
    s.clone().symmetric_eigenvalues().max()
}
