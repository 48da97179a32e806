use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettings, DefaultSolver, IPSolver, NonnegativeConeT, PSDTriangleConeT, SolverStatus, SupportedConeT,
};
use nalgebra::{DMatrix, DVector};

use crate::{LmiBlock, SdpBackend, SdpProblem, Solution, Status};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClarabelOptions {
    /// Gap and feasibility tolerance passed to the backend.
    pub tol: f64,
    pub max_iter: u32,
    /// Lower bound on the phase-one shift, which keeps phase one bounded.
    pub phase1_floor: f64,
}

impl Default for ClarabelOptions {
    fn default() -> Self {
        Self { tol: 1e-10, max_iter: 200, phase1_floor: 1.0 }
    }
}

/// Interior-point backend built on the Clarabel conic solver.
#[derive(Debug, Clone, Default)]
pub struct ClarabelBackend {
    pub options: ClarabelOptions,
}

impl ClarabelBackend {
    pub fn new(options: ClarabelOptions) -> Self {
        Self { options }
    }

    fn settings(&self) -> DefaultSettings<f64> {
        let o = &self.options;
        DefaultSettings {
            verbose: false,
            max_iter: o.max_iter,
            tol_gap_abs: o.tol,
            tol_gap_rel: o.tol,
            tol_feas: o.tol,
            tol_infeas_abs: o.tol,
            tol_infeas_rel: o.tol,
            ..DefaultSettings::default()
        }
    }
}

/// Column-major upper triangle with off-diagonal entries scaled by √2, the
/// vectorization of Clarabel's PSD triangle cone.
fn svec(m: &DMatrix<f64>) -> Vec<f64> {
    let k = m.nrows();
    let mut out = Vec::with_capacity(k * (k + 1) / 2);
    for c in 0..k {
        for r in 0..=c {
            let v = 0.5 * (m[(r, c)] + m[(c, r)]);
            out.push(if r == c { v } else { v * std::f64::consts::SQRT_2 });
        }
    }
    out
}

/// Conic data `s = b − Av ∈ K` for the problem blocks; `extra` appends one
/// variable whose coefficient in every block is the identity.
struct ConicData {
    columns: Vec<Vec<(usize, f64)>>,
    b: Vec<f64>,
    cones: Vec<SupportedConeT<f64>>,
}

impl ConicData {
    fn new(blocks: &[LmiBlock], nvars: usize, extra: bool) -> Self {
        let total = nvars + usize::from(extra);
        let mut columns = vec![Vec::new(); total];
        let mut b = Vec::new();
        let mut cones = Vec::new();
        for block in blocks {
            let k = block.size();
            let offset = b.len();
            b.extend(svec(block.constant()));
            for (i, f) in block.coeffs().iter().enumerate() {
                for (r, v) in svec(f).into_iter().enumerate() {
                    if v != 0.0 {
                        columns[i].push((offset + r, -v));
                    }
                }
            }
            if extra {
                for (r, v) in svec(&DMatrix::identity(k, k)).into_iter().enumerate() {
                    if v != 0.0 {
                        columns[nvars].push((offset + r, -v));
                    }
                }
            }
            cones.push(if k == 1 { NonnegativeConeT(1) } else { PSDTriangleConeT(k) });
        }
        Self { columns, b, cones }
    }

    /// Adds the scalar constraint `b0 + a·v_var ≥ 0`.
    fn push_scalar(&mut self, var: usize, a: f64, b0: f64) {
        let row = self.b.len();
        self.b.push(b0);
        self.columns[var].push((row, -a));
        self.cones.push(NonnegativeConeT(1));
    }

    fn matrix(&self) -> CscMatrix<f64> {
        let mut colptr = vec![0];
        let mut rowval = Vec::new();
        let mut nzval = Vec::new();
        for col in &self.columns {
            let mut col = col.clone();
            col.sort_by_key(|&(r, _)| r);
            for (r, v) in col {
                rowval.push(r);
                nzval.push(v);
            }
            colptr.push(rowval.len());
        }
        CscMatrix::new(self.b.len(), self.columns.len(), colptr, rowval, nzval)
    }
}

struct RawSolution {
    status: SolverStatus,
    x: Vec<f64>,
    iterations: usize,
    gap: f64,
}

fn run(data: &ConicData, q: Vec<f64>, settings: DefaultSettings<f64>) -> RawSolution {
    let n = q.len();
    let p = CscMatrix::zeros((n, n));
    let a = data.matrix();
    match DefaultSolver::new(&p, &q, &a, &data.b, &data.cones, settings) {
        Ok(mut solver) => {
            solver.solve();
            let sol = &solver.solution;
            RawSolution {
                status: sol.status,
                x: sol.x.clone(),
                iterations: sol.iterations as usize,
                gap: (sol.obj_val - sol.obj_val_dual).abs(),
            }
        }
        Err(_) => RawSolution { status: SolverStatus::NumericalError, x: vec![f64::NAN; n], iterations: 0, gap: f64::NAN },
    }
}

fn has_point(status: SolverStatus) -> bool {
    matches!(status, SolverStatus::Solved | SolverStatus::AlmostSolved)
}

impl SdpBackend for ClarabelBackend {
    fn find_feasible(&self, problem: &SdpProblem) -> Solution {
        let d = problem.dim();
        if problem.blocks().is_empty() {
            return Solution {
                status: Status::Feasible,
                x: DVector::zeros(d),
                objective: 0.0,
                iterations: 0,
                gap: 0.0,
                phase1_margin: f64::NEG_INFINITY,
                backend_status: "trivial".into(),
            };
        }
        let mut data = ConicData::new(problem.blocks(), d, true);
        data.push_scalar(d, 1.0, self.options.phase1_floor);
        let mut q = vec![0.0; d + 1];
        q[d] = 1.0;
        let raw = run(&data, q, self.settings());
        let backend_status = format!("{:?}", raw.status);
        let x = DVector::from_iterator(d, raw.x.iter().take(d).copied());
        let margin = raw.x.get(d).copied().unwrap_or(f64::NAN);
        // a strictly feasible point is a certificate whatever the backend reports
        let status = if x.iter().any(|v| !v.is_finite()) {
            Status::NumericalFailure
        } else if problem.min_eigenvalue(&x) > 0.0 {
            Status::Feasible
        } else if has_point(raw.status) {
            Status::Infeasible
        } else {
            Status::NumericalFailure
        };
        Solution {
            status,
            objective: problem.objective().dot(&x),
            x,
            iterations: raw.iterations,
            gap: raw.gap,
            phase1_margin: margin,
            backend_status,
        }
    }

    fn maximize(&self, problem: &SdpProblem) -> Solution {
        let d = problem.dim();
        let data = ConicData::new(problem.blocks(), d, false);
        let q: Vec<f64> = problem.objective().iter().map(|c| -c).collect();
        let raw = run(&data, q, self.settings());
        let backend_status = format!("{:?}", raw.status);
        let status = match raw.status {
            SolverStatus::Solved | SolverStatus::AlmostSolved => Status::Optimal,
            SolverStatus::DualInfeasible | SolverStatus::AlmostDualInfeasible => Status::Unbounded,
            SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => Status::Infeasible,
            _ => Status::NumericalFailure,
        };
        let x = DVector::from_vec(raw.x);
        Solution {
            status,
            objective: problem.objective().dot(&x),
            x,
            iterations: raw.iterations,
            gap: raw.gap,
            phase1_margin: f64::NAN,
            backend_status,
        }
    }
}
