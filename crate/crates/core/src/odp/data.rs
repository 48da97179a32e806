//! Data-driven certification from sampled trajectories.

use lmi_sdp::Status;
use nalgebra::{DMatrix, DVector};

use super::{
    certificate::{Conditioning, OdpCertificate},
    solve_lmi, LmiKind, LmiProblem, OdpOptions, Sense,
};
use crate::error::{Error, Result};
use crate::linalg::{max_eig, min_eig, spectral_norm, sym};
use crate::trajectory::{
    build_data_matrices, check_informativity, normalize_paired, DataMatrices, InformativityReport,
    Scaling, TrajectoryRecord,
};

/// Where the output samples in the supply rate come from.
#[derive(Debug, Clone, Copy)]
pub enum OutputMap<'a> {
    /// `y = Cx` with a known output matrix.
    Matrix(&'a DMatrix<f64>),
    /// Recorded `Y`, `Y₊` stored in the data.
    Measured,
}

fn output_blocks(data: &DataMatrices, outputs: OutputMap<'_>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    match outputs {
        OutputMap::Matrix(c) => {
            if c.nrows() != data.m() || c.ncols() != data.n() {
                return Err(Error::InvalidArgument(format!(
                    "C is {}x{}, expected {}x{}",
                    c.nrows(),
                    c.ncols(),
                    data.m(),
                    data.n()
                )));
            }
            Ok((c * &data.x, c * &data.x_plus))
        }
        OutputMap::Measured => match (&data.y, &data.y_plus) {
            (Some(y), Some(yp)) => Ok((y.clone(), yp.clone())),
            _ => Err(Error::InvalidArgument("measured-output variant needs Y and Y₊".into())),
        },
    }
}

/// Orthonormal basis (N×r) of the row space of `[X; U]`.
fn row_space_basis(z: &DMatrix<f64>, rank: usize) -> DMatrix<f64> {
    let svd = z.clone().svd(false, true);
    let vt = svd.v_t.expect("v_t requested");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let mut q = DMatrix::zeros(z.ncols(), rank);
    for (k, &i) in order.iter().take(rank).enumerate() {
        q.column_mut(k).copy_from(&vt.row(i).transpose());
    }
    q
}

/// The data LMI `X₊ᵀPX₊ − XᵀPX − ½(M₃ + M₃ᵀ)`, `M₃ = (U − ΣW)ᵀ(W₊ − W)`,
/// with `W = CX` or the measured `Y`. With `opts.compress` and N > n + m
/// every block is right-multiplied by an orthonormal basis of the row space
/// of `[X; U]`, which shrinks the constraint from N×N to rank×rank.
pub fn build_data_driven_lmi(
    data: &DataMatrices,
    outputs: OutputMap<'_>,
    sigma: Option<&DMatrix<f64>>,
    opts: &OdpOptions,
) -> Result<LmiProblem> {
    let (n, m) = (data.n(), data.m());
    if data.u.iter().chain(data.x.iter()).chain(data.x_plus.iter()).any(|v| !v.is_finite()) {
        return Err(Error::NumericInput("non-finite data".into()));
    }
    let info = check_informativity(data, n, m);
    if !info.informative && !opts.allow_uninformative {
        return Err(Error::NotInformative { rank: info.rank, required: info.required, cond: info.cond });
    }
    let (w, w_plus) = output_blocks(data, outputs)?;
    let scale = spectral_norm(&data.u) * spectral_norm(&(&w_plus - &w));

    let big_n = data.samples();
    let compress = opts.compress && big_n > n + m && data.rank_xu > 0;
    let (x, xp, u, w, wp) = if compress {
        let q = row_space_basis(&data.stacked(), data.rank_xu);
        (&data.x * &q, &data.x_plus * &q, &data.u * &q, &w * &q, &w_plus * &q)
    } else {
        (data.x.clone(), data.x_plus.clone(), data.u.clone(), w, w_plus)
    };
    let size = x.ncols();
    if size > opts.max_constraint_size {
        return Err(Error::ProblemTooLarge { size, limit: opts.max_constraint_size });
    }
    let dw = &wp - &w;
    let mut problem = LmiProblem::assemble(LmiKind::DataDriven, n, m, sigma, scale, |p, s| {
        let m3 = (&u - s * &w).transpose() * &dw;
        xp.transpose() * p * &xp - x.transpose() * p * &x - (&m3 + m3.transpose()) * 0.5
    })?;
    problem.compressed = compress;
    Ok(problem.with_face(&crate::trajectory::stack(&(&xp - &x), &dw)))
}

/// Result of the record-level pipeline, in physical units.
#[derive(Debug, Clone, PartialEq)]
pub struct DataCertification {
    pub certificate: OdpCertificate,
    pub status: Status,
    pub informativity: InformativityReport,
    pub scaling: Scaling,
    /// `κ`: the normalized supply equals the physical supply divided by `κ`.
    pub supply_factor: f64,
}

fn output_matrix_normalized(c: &DMatrix<f64>, scaling: &Scaling) -> DMatrix<f64> {
    let fy = scaling.outputs.as_ref().expect("paired scaling has outputs");
    DMatrix::from_fn(c.nrows(), c.ncols(), |i, j| c[(i, j)] * scaling.states[j] / fy[i])
}

/// Normalizes with the supply-preserving pairing, checks informativity and
/// conditioning, solves, and maps `Σ`, `P` back to physical units. With
/// `sigma = Some(Σ)` (physical units) a feasibility problem is solved,
/// otherwise `opts.objective` is maximized. A given `c` defines the outputs
/// as `y = Cx`; without it the record's measured outputs are used.
pub fn certify_record(
    record: &TrajectoryRecord,
    c: Option<&DMatrix<f64>>,
    sigma: Option<&DMatrix<f64>>,
    opts: &OdpOptions,
) -> Result<DataCertification> {
    let (norm, scaling) = normalize_paired(record, c)?;
    let kappa = scaling.supply_factor().ok_or_else(|| Error::Numeric("scaling is not supply preserving".into()))?;
    let data = build_data_matrices(&norm)?;
    let info = check_informativity(&data, record.n(), record.m());
    if !info.informative && !opts.allow_uninformative {
        return Err(Error::NotInformative { rank: info.rank, required: info.required, cond: info.cond });
    }
    if info.cond > opts.cond_reject {
        return Err(Error::RejectedIllConditioned { cond: info.cond, limit: opts.cond_reject });
    }
    let fy = scaling.outputs.clone().expect("paired scaling has outputs");
    let c_norm = c.map(|c| output_matrix_normalized(c, &scaling));
    let outputs = match (&c_norm, &record.outputs) {
        (Some(cn), _) => OutputMap::Matrix(cn),
        (None, Some(_)) => OutputMap::Measured,
        (None, None) => unreachable!("normalize_paired rejects this case"),
    };
    // Σ_n = Fy Σ Fy / κ
    let sigma_norm = sigma.map(|s| DMatrix::from_fn(s.nrows(), s.ncols(), |i, j| s[(i, j)] * fy[i] * fy[j] / kappa));
    let mut problem = build_data_driven_lmi(&data, outputs, sigma_norm.as_ref(), opts)?;
    // objectives act on the physical Σ = κ F_y⁻¹ Σ_n F_y⁻¹
    problem.sigma_units = DVector::from_iterator(fy.len(), fy.iter().map(|f| f / kappa.sqrt()));
    let sense = if sigma.is_some() { Sense::Feasibility } else { Sense::Maximize(opts.objective) };
    let sol = solve_lmi(&problem, sense, opts)?;

    let sigma_phys = match sigma {
        Some(s) => s.clone(),
        None => DMatrix::from_fn(record.m(), record.m(), |i, j| kappa * sol.sigma[(i, j)] / (fy[i] * fy[j])),
    };
    let fx = &scaling.states;
    let p_phys = DMatrix::from_fn(record.n(), record.n(), |i, j| kappa * sol.p[(i, j)] / (fx[i] * fx[j]));
    let certificate = OdpCertificate {
        sigma_matrix: sym(&sigma_phys),
        storage_matrix: sym(&p_phys),
        feasible: sol.status.has_point(),
        slack: sol.slack,
        solver_stats: sol.stats,
        conditioning: Conditioning {
            cond_xu: Some(info.cond),
            rank_xu: Some(info.rank),
            constraint_size: problem.size(),
            tolerance_scale: problem.scale,
            compressed: problem.compressed,
            ill_conditioned_warning: info.ill_conditioned_warning,
        },
    };
    if certificate.feasible {
        let check = self_check(record, c, &certificate, opts)?;
        if !check.passed {
            return Err(Error::Solver(format!(
                "certificate fails self-check: residual {:.3e}, λ_min(P) {:.3e}",
                check.residual, check.min_eig_p
            )));
        }
    }
    Ok(DataCertification { certificate, status: sol.status, informativity: info, scaling, supply_factor: kappa })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelfCheck {
    pub passed: bool,
    /// `λ_max` of the recomputed residual over its tolerance scale.
    pub residual: f64,
    pub min_eig_p: f64,
}

/// Recomputes the data LMI residual for a physical-unit certificate directly
/// from the raw record, without the affine map used by the solver.
///
/// The record is rescaled with the same paired normalization, `(Σ, P)` are
/// taken to normalized units, and the residual is recomputed over the raw
/// samples, or its compression onto the row space of `[X; U]` when the
/// certificate was compressed. Passes when the residual is at most `tol_feas` times the
/// tolerance scale and `λ_min(P_n) ≥ ε_P`.
pub fn self_check(
    record: &TrajectoryRecord,
    c: Option<&DMatrix<f64>>,
    cert: &OdpCertificate,
    opts: &OdpOptions,
) -> Result<SelfCheck> {
    let (n, m) = (record.n(), record.m());
    if cert.sigma_matrix.shape() != (m, m) || cert.storage_matrix.shape() != (n, n) {
        return Err(Error::InvalidArgument("certificate dimensions do not match the record".into()));
    }
    let (_, scaling) = normalize_paired(record, c)?;
    let kappa = scaling.supply_factor().ok_or_else(|| Error::Numeric("scaling is not supply preserving".into()))?;
    let fy = scaling.outputs.as_ref().expect("paired scaling has outputs");
    let fx = &scaling.states;

    let big_n = record.len();
    let x = record.states.columns(0, big_n).into_owned();
    let xp = record.states.columns(1, big_n).into_owned();
    let u = record.inputs.clone();
    let (w, wp) = match (c, &record.outputs) {
        (Some(c), _) => (c * &x, c * &xp),
        (None, Some(y)) => (y.columns(0, big_n).into_owned(), y.columns(1, big_n).into_owned()),
        (None, None) => return Err(Error::InvalidArgument("self-check needs outputs or C".into())),
    };
    let dw = &wp - &w;
    let u_n = DMatrix::from_fn(m, big_n, |i, k| u[(i, k)] * fy[i] / kappa);
    // Physical residual over the raw samples or, for a compressed
    // certificate, over an orthonormal basis of the row space of [X; U]
    // (the N×N residual right- and left-multiplied by that basis).
    let basis = if cert.conditioning.compressed {
        // row scaling leaves the row space unchanged; the normalized stack
        // only gives a better-conditioned rank decision
        let x_n = DMatrix::from_fn(n, big_n, |i, k| x[(i, k)] / fx[i]);
        let z = crate::trajectory::stack(&x_n, &u_n);
        let (rank, _, _) = crate::linalg::rank_and_cond(&z);
        Some(row_space_basis(&z, rank))
    } else {
        None
    };
    let project = |a: &DMatrix<f64>| match &basis {
        Some(q) => a * q,
        None => a.clone(),
    };
    let (xq, xpq, uq, wq, dwq) = (project(&x), project(&xp), project(&u), project(&w), project(&dw));
    let m3 = (&uq - &cert.sigma_matrix * &wq).transpose() * &dwq;
    let p = &cert.storage_matrix;
    // the normalized residual is the physical one divided by κ
    let l = (xpq.transpose() * p * &xpq - xq.transpose() * p * &xq - (&m3 + m3.transpose()) * 0.5) / kappa;
    let dw_n = DMatrix::from_fn(m, big_n, |i, k| dw[(i, k)] / fy[i]);
    let scale = spectral_norm(&u_n) * spectral_norm(&dw_n);
    let scale = if scale > 0.0 && scale.is_finite() { scale } else { 1.0 };
    let residual = max_eig(&sym(&l)) / scale;
    let p_n = DMatrix::from_fn(n, n, |i, j| p[(i, j)] * fx[i] * fx[j] / kappa);
    let min_eig_p = min_eig(&p_n);
    Ok(SelfCheck { passed: residual <= opts.tol_feas && min_eig_p >= opts.eps_p, residual, min_eig_p })
}
