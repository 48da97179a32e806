use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{from_rows, min_eig, to_rows};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverStats {
    /// Solver termination: optimal, feasible, infeasible, unbounded.
    pub termination: String,
    pub objective: String,
    pub iterations: usize,
    /// `None` when no solve ran or the backend reported a non-finite value.
    pub duality_gap: Option<f64>,
    /// Phase-one shift; negative means strictly feasible with that margin.
    /// `None` when no phase-one problem was solved.
    pub phase1_margin: Option<f64>,
    pub backend_status: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Conditioning {
    pub cond_xu: Option<f64>,
    pub rank_xu: Option<usize>,
    pub constraint_size: usize,
    /// Reference magnitude the feasibility tolerance is relative to.
    pub tolerance_scale: f64,
    pub compressed: bool,
    pub ill_conditioned_warning: bool,
}

/// Outcome of a certification: `Σ`, `P` in physical units plus diagnostics.
/// The scalar index is always recomputed as `λ_min(Σ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct OdpCertificate {
    pub sigma_matrix: DMatrix<f64>,
    pub storage_matrix: DMatrix<f64>,
    pub feasible: bool,
    /// Largest eigenvalue of the certified LMI residual over its tolerance scale.
    pub slack: f64,
    pub solver_stats: SolverStats,
    pub conditioning: Conditioning,
}

#[derive(Serialize, Deserialize)]
struct CertificateJson {
    sigma_matrix: Vec<Vec<f64>>,
    p_matrix: Vec<Vec<f64>>,
    sigma_scalar: Option<f64>,
    feasible: bool,
    slack: f64,
    solver_stats: SolverStats,
    conditioning: Conditioning,
}

impl OdpCertificate {
    pub fn sigma_scalar(&self) -> f64 {
        if self.sigma_matrix.is_empty() || self.sigma_matrix.iter().any(|x| !x.is_finite()) {
            return f64::NAN;
        }
        min_eig(&self.sigma_matrix)
    }

    pub fn to_json(&self) -> Result<String> {
        let s = self.sigma_scalar();
        let j = CertificateJson {
            sigma_matrix: to_rows(&self.sigma_matrix),
            p_matrix: to_rows(&self.storage_matrix),
            sigma_scalar: s.is_finite().then_some(s),
            feasible: self.feasible,
            slack: self.slack,
            solver_stats: self.solver_stats.clone(),
            conditioning: self.conditioning.clone(),
        };
        Ok(serde_json::to_string_pretty(&j)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let j: CertificateJson = serde_json::from_str(text)?;
        let bad = |what: &str| Error::Parse { line: 0, msg: format!("{what} is not rectangular") };
        Ok(Self {
            sigma_matrix: from_rows(&j.sigma_matrix).ok_or_else(|| bad("sigma_matrix"))?,
            storage_matrix: from_rows(&j.p_matrix).ok_or_else(|| bad("p_matrix"))?,
            feasible: j.feasible,
            slack: j.slack,
            solver_stats: j.solver_stats,
            conditioning: j.conditioning,
        })
    }
}
