//! Scenario runner behind the `odp-cert` binary: configuration, the five
//! commands, report files and exit codes.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::devices::{cd_theoretical_bound, CdParams, DeviceModel};
use crate::error::{Error, Result};
use crate::linalg::from_rows;
use crate::lti::Dynamics;
use crate::network::{compute_sigma_net, heavy_load_3bus, sigma_sweep, NetworkModel, NetworkSpec, Region, SweepRow, SweepSettings};
use crate::odp::{certify_record, self_check, DataCertification, OdpCertificate, OdpOptions};
use crate::pipeline::{collect, Protocol};
use crate::trajectory::io::{read_csv, write_csv};
use crate::trajectory::{is_persistently_exciting, PeReport, TrajectoryRecord};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INFEASIBLE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

/// Measured per-device index further than this from the model value counts
/// as an anomalous solve in the sweep summary.
pub const ANOMALY_TOL: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    #[default]
    OfflineDevice,
    NetworkSweep,
    CertifyFromCsv,
}

/// Scenario description read from JSON. Relative paths resolve against the
/// directory of the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub kind: ScenarioKind,
    /// Inline device; defaults to the reference CD inverter.
    pub device: Option<DeviceModel>,
    pub device_file: Option<PathBuf>,
    /// Network JSON; defaults to the built-in heavy-load three-bus system.
    pub network_file: Option<PathBuf>,
    pub trajectory_file: Option<PathBuf>,
    /// Output matrix for CSV certification, row-major. Without it the
    /// measured outputs in the CSV are used.
    pub output_matrix: Option<Vec<Vec<f64>>>,
    pub protocol: Protocol,
    pub sweep: SweepSettings,
    pub solver: OdpOptions,
    /// Persistent-excitation order for `check-pe`; defaults to `n + 1`.
    pub pe_order: Option<usize>,
    pub out_dir: Option<PathBuf>,
    pub seed: Option<u64>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            kind: ScenarioKind::OfflineDevice,
            device: None,
            device_file: None,
            network_file: None,
            trajectory_file: None,
            output_matrix: None,
            protocol: Protocol::offline_benchmark(),
            sweep: SweepSettings::default(),
            solver: OdpOptions::default(),
            pe_order: None,
            out_dir: None,
            seed: None,
        }
    }
}

impl ScenarioConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let mut cfg: Self = serde_json::from_str(&text)
            .map_err(|e| Error::Parse { line: e.line(), msg: format!("{}: {e}", path.display()) })?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut cfg.device_file, &mut cfg.network_file, &mut cfg.trajectory_file, &mut cfg.out_dir]
            .into_iter()
            .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.protocol.validate()?;
        self.sweep.validate()?;
        if self.device.is_some() && self.device_file.is_some() {
            return Err(Error::Config("give either device or device_file, not both".into()));
        }
        if !(self.solver.tol_feas > 0.0 && self.solver.eps_p > 0.0 && self.solver.solve_tol > 0.0) {
            return Err(Error::Config("solver tolerances must be positive".into()));
        }
        if self.pe_order == Some(0) {
            return Err(Error::Config("pe_order must be at least 1".into()));
        }
        Ok(())
    }

    pub fn seed(&self) -> Result<u64> {
        self.seed.ok_or_else(|| Error::Config("seed missing: set \"seed\" in the config or pass --seed".into()))
    }

    pub fn device_model(&self) -> Result<DeviceModel> {
        let d = match (&self.device, &self.device_file) {
            (Some(d), _) => *d,
            (None, Some(p)) => {
                let text = fs::read_to_string(p).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
                serde_json::from_str(&text).map_err(|e| Error::Parse { line: e.line(), msg: format!("{}: {e}", p.display()) })?
            }
            (None, None) => DeviceModel::Cd(CdParams::reference()),
        };
        d.validate()?;
        Ok(d)
    }

    pub fn network_spec(&self) -> Result<NetworkSpec> {
        match &self.network_file {
            Some(p) => {
                let text = fs::read_to_string(p).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
                serde_json::from_str(&text).map_err(|e| Error::Parse { line: e.line(), msg: format!("{}: {e}", p.display()) })
            }
            None => Ok(heavy_load_3bus()),
        }
    }

    fn c_matrix(&self) -> Result<Option<DMatrix<f64>>> {
        match &self.output_matrix {
            Some(rows) => from_rows(rows)
                .map(Some)
                .ok_or_else(|| Error::Config("output_matrix is not rectangular".into())),
            None => Ok(None),
        }
    }
}

/// Pipeline stage attached to an error for reporting.
#[derive(Debug)]
pub struct StageError {
    pub stage: &'static str,
    pub error: Error,
}

impl std::fmt::Display for StageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} stage: {}", self.stage, self.error)
    }
}

trait AtStage<T> {
    fn at(self, stage: &'static str) -> std::result::Result<T, StageError>;
}

impl<T> AtStage<T> for Result<T> {
    fn at(self, stage: &'static str) -> std::result::Result<T, StageError> {
        self.map_err(|error| StageError { stage, error })
    }
}

pub type StageResult<T> = std::result::Result<T, StageError>;

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_)
        | Error::Parse { .. }
        | Error::Json(_)
        | Error::Io(_)
        | Error::InvalidArgument(_)
        | Error::InvalidNetwork(_)
        | Error::IncompleteInput(_) => EXIT_CONFIG,
        _ => EXIT_NUMERIC,
    }
}

/// Files written and text printed by one command.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub exit_code: i32,
    pub summary: String,
    pub files: Vec<PathBuf>,
}

fn write_file(out: &Path, name: &str, contents: &str, files: &mut Vec<PathBuf>) -> Result<()> {
    fs::create_dir_all(out)?;
    let p = out.join(name);
    fs::write(&p, contents)?;
    files.push(p);
    Ok(())
}

fn json<T: Serialize>(v: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(v)?;
    s.push('\n');
    Ok(s)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CertificationReport {
    pub device: Option<DeviceModel>,
    pub seed: Option<u64>,
    pub samples: usize,
    pub feasible: bool,
    pub sigma: Option<f64>,
    pub theoretical: Option<f64>,
    pub deviation_percent: Option<f64>,
    pub informative: bool,
    pub rank_xu: usize,
    pub cond_xu: f64,
    pub ill_conditioned_warning: bool,
    pub self_check_residual: Option<f64>,
}

fn report_for(
    cert: &DataCertification,
    record: &TrajectoryRecord,
    device: Option<DeviceModel>,
    seed: Option<u64>,
    recheck: Option<f64>,
) -> Result<CertificationReport> {
    let sigma = cert.certificate.feasible.then(|| cert.certificate.sigma_scalar());
    let theoretical = match device {
        Some(DeviceModel::Cd(p)) => Some(cd_theoretical_bound(&p)?),
        _ => None,
    };
    let deviation_percent = match (sigma, theoretical) {
        (Some(s), Some(t)) => Some(100.0 * (s - t) / t),
        _ => None,
    };
    Ok(CertificationReport {
        device,
        seed,
        samples: record.len(),
        feasible: cert.certificate.feasible,
        sigma,
        theoretical,
        deviation_percent,
        informative: cert.informativity.informative,
        rank_xu: cert.informativity.rank,
        cond_xu: cert.informativity.cond,
        ill_conditioned_warning: cert.informativity.ill_conditioned_warning,
        self_check_residual: recheck,
    })
}

fn summary_text(r: &CertificationReport) -> String {
    let mut s = String::new();
    match r.sigma {
        Some(v) => s.push_str(&format!("certified sigma = {v:.6}\n")),
        None => s.push_str("certification infeasible\n"),
    }
    if let Some(t) = r.theoretical {
        s.push_str(&format!("theoretical bound = {t:.6}\n"));
    }
    if let Some(d) = r.deviation_percent {
        s.push_str(&format!("deviation = {d:+.2}%\n"));
    }
    s.push_str(&format!("samples = {}, rank[X;U] = {}, cond = {:.3e}\n", r.samples, r.rank_xu, r.cond_xu));
    if r.ill_conditioned_warning {
        s.push_str("warning: data matrix is ill-conditioned\n");
    }
    s
}

/// Re-reads the written trajectory and certificate and recomputes the LMI
/// residual from them.
fn recheck(traj: &Path, cert: &Path, c: Option<&DMatrix<f64>>, opts: &OdpOptions) -> Result<f64> {
    let record = read_csv(traj)?;
    let cert = OdpCertificate::from_json(&fs::read_to_string(cert)?)?;
    let check = self_check(&record, c, &cert, opts)?;
    if !check.passed {
        return Err(Error::Solver(format!("reloaded certificate fails self-check: residual {:.3e}", check.residual)));
    }
    Ok(check.residual)
}

fn finish_certification(
    cert: &DataCertification,
    record: &TrajectoryRecord,
    c: Option<&DMatrix<f64>>,
    device: Option<DeviceModel>,
    seed: Option<u64>,
    out: &Path,
    opts: &OdpOptions,
    write_trajectory: bool,
) -> StageResult<Outcome> {
    let mut files = Vec::new();
    let cert_path = out.join("certificate.json");
    write_file(out, "certificate.json", &(cert.certificate.to_json().at("report")? + "\n"), &mut files).at("report")?;
    let traj = out.join("trajectory.csv");
    if write_trajectory {
        fs::create_dir_all(out).map_err(Error::from).at("report")?;
        write_csv(record, &traj).at("report")?;
        files.push(traj.clone());
        files.push(crate::trajectory::io::sidecar_path(&traj));
    }
    let residual = if cert.certificate.feasible && write_trajectory {
        Some(recheck(&traj, &cert_path, c, opts).at("self-check")?)
    } else {
        None
    };
    let report = report_for(cert, record, device, seed, residual).at("report")?;
    write_file(out, "report.json", &json(&report).at("report")?, &mut files).at("report")?;
    Ok(Outcome {
        exit_code: if report.feasible { EXIT_OK } else { EXIT_INFEASIBLE },
        summary: summary_text(&report),
        files,
    })
}

fn out_dir(cfg: &ScenarioConfig) -> PathBuf {
    cfg.out_dir.clone().unwrap_or_else(|| PathBuf::from("out"))
}

/// Simulates the configured device, averages, certifies and writes
/// `certificate.json`, `report.json` and the certified `trajectory.csv`.
pub fn run_offline_device(cfg: &ScenarioConfig) -> StageResult<Outcome> {
    cfg.validate().at("config")?;
    let seed = cfg.seed().at("config")?;
    let device = cfg.device_model().at("config")?;
    let record = collect(&device, &cfg.protocol, seed).at("simulate")?;
    let c = device.output_matrix();
    let cert = certify_record(&record, c.as_ref(), None, &cfg.solver).at("certify")?;
    finish_certification(&cert, &record, c.as_ref(), Some(device), Some(seed), &out_dir(cfg), &cfg.solver, true)
}

/// Certifies a recorded trajectory without simulation.
pub fn certify_from_csv(cfg: &ScenarioConfig) -> StageResult<Outcome> {
    cfg.validate().at("config")?;
    let path = cfg.trajectory_file.as_ref().ok_or_else(|| Error::Config("trajectory_file missing".into())).at("config")?;
    let record = read_csv(path).at("parse")?;
    let c = cfg.c_matrix().at("config")?;
    let device = match (&cfg.device, &cfg.device_file) {
        (None, None) => None,
        _ => Some(cfg.device_model().at("config")?),
    };
    let c = c.or_else(|| device.and_then(|d| d.output_matrix()));
    let cert = certify_record(&record, c.as_ref(), None, &cfg.solver).at("certify")?;
    let out = out_dir(cfg);
    let mut outcome = finish_certification(&cert, &record, c.as_ref(), device, None, &out, &cfg.solver, false)?;
    if cert.certificate.feasible {
        recheck(path, &out.join("certificate.json"), c.as_ref(), &cfg.solver).at("self-check")?;
    }
    outcome.summary.insert_str(0, &format!("trajectory {}\n", path.display()));
    Ok(outcome)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PeSummary {
    pub source: String,
    pub n: usize,
    pub m: usize,
    pub samples: usize,
    pub report: PeReport,
}

/// Persistent-excitation check of a CSV trajectory, or of the configured
/// device's simulated record when no trajectory file is given.
pub fn check_pe(cfg: &ScenarioConfig) -> StageResult<Outcome> {
    cfg.validate().at("config")?;
    let (record, source) = match &cfg.trajectory_file {
        Some(p) => (read_csv(p).at("parse")?, p.display().to_string()),
        None => {
            let seed = cfg.seed().at("config")?;
            let device = cfg.device_model().at("config")?;
            (collect(&device, &cfg.protocol, seed).at("simulate")?, format!("simulated seed {seed}"))
        }
    };
    let order = cfg.pe_order.unwrap_or(record.n() + 1);
    let report = is_persistently_exciting(&record.inputs, order).at("check-pe")?;
    let s = PeSummary { source, n: record.n(), m: record.m(), samples: record.len(), report };
    let mut files = Vec::new();
    write_file(&out_dir(cfg), "pe.json", &json(&s).at("report")?, &mut files).at("report")?;
    let summary = format!(
        "PE of order {}: {} (rank {} of {})\n",
        s.report.order,
        if s.report.exciting { "yes" } else { "no" },
        s.report.rank,
        s.report.required
    );
    Ok(Outcome { exit_code: if s.report.exciting { EXIT_OK } else { EXIT_INFEASIBLE }, summary, files })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SigmaNetSummary {
    pub sigma_net: f64,
    pub bus_ids: Vec<usize>,
    pub theta: Vec<f64>,
    pub v: Vec<f64>,
}

pub fn run_sigma_net(cfg: &ScenarioConfig) -> StageResult<Outcome> {
    cfg.validate().at("config")?;
    let spec = cfg.network_spec().at("config")?;
    let net = NetworkModel::from_spec(&spec).at("network")?;
    let s = SigmaNetSummary {
        sigma_net: compute_sigma_net(&net).at("network")?,
        bus_ids: net.ids.clone(),
        theta: net.equilibrium.theta.clone(),
        v: net.equilibrium.v.clone(),
    };
    let mut files = Vec::new();
    write_file(&out_dir(cfg), "sigma_net.json", &json(&s).at("report")?, &mut files).at("report")?;
    Ok(Outcome { exit_code: EXIT_OK, summary: format!("sigma_net = {:.6}\n", s.sigma_net), files })
}

/// Region boundaries and solve statistics of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepSummary {
    pub sigma_net: f64,
    pub rows: usize,
    /// Lowest target still certified stable.
    pub certified_stable_edge: Option<f64>,
    /// Highest target with an unstable closed loop.
    pub instability_edge: Option<f64>,
    pub conservative_rows: usize,
    /// Span of targets classified conservative.
    pub conservative_width: Option<f64>,
    pub monotone: bool,
    pub solves: usize,
    /// Failed solves or measured indices off the model value by more than
    /// the anomaly tolerance.
    pub anomalous_solves: usize,
    pub anomaly_rate: f64,
    pub ill_conditioned_rejections: usize,
    pub unsound_rows: usize,
}

pub fn summarize_sweep(rows: &[SweepRow]) -> SweepSummary {
    let targets = |r: Region| rows.iter().filter(move |x| x.region == r).map(|x| x.sigma_target);
    let rank = |r: Region| match r {
        Region::Stable => 0,
        Region::Conservative => 1,
        Region::Unstable => 2,
    };
    let cons: Vec<f64> = targets(Region::Conservative).collect();
    let solves = rows.iter().map(|r| r.sigma_bus.len()).sum();
    let anomalous_solves = rows
        .iter()
        .flat_map(|r| r.sigma_bus.iter().zip(&r.sigma_theory))
        .filter(|(s, t)| s.is_none_or(|s| (s - *t).abs() > ANOMALY_TOL))
        .count();
    SweepSummary {
        sigma_net: rows.first().map_or(f64::NAN, |r| r.sigma_net),
        rows: rows.len(),
        certified_stable_edge: targets(Region::Stable).reduce(f64::min),
        instability_edge: targets(Region::Unstable).reduce(f64::max),
        conservative_rows: cons.len(),
        conservative_width: (!cons.is_empty()).then(|| {
            cons.iter().copied().fold(f64::NEG_INFINITY, f64::max) - cons.iter().copied().fold(f64::INFINITY, f64::min)
        }),
        monotone: rows.windows(2).all(|w| rank(w[0].region) <= rank(w[1].region)),
        solves,
        anomalous_solves,
        anomaly_rate: if solves > 0 { anomalous_solves as f64 / solves as f64 } else { 0.0 },
        ill_conditioned_rejections: rows.iter().flat_map(|r| &r.flags).filter(|f| f.contains("rejected")).count(),
        unsound_rows: rows.iter().filter(|r| r.certified_stable && r.eig_max_real >= 0.0).count(),
    }
}

/// CSV with header `sigma_target,sigma_net,sigma_bus_<id>..,eig_max_real,region,flags`.
/// Failed certifications leave an empty cell; flags are `;`-joined.
pub fn sweep_csv(rows: &[SweepRow], bus_ids: &[usize]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["sigma_target".to_string(), "sigma_net".to_string()];
    header.extend(bus_ids.iter().map(|i| format!("sigma_bus_{i}")));
    header.extend(["eig_max_real", "region", "flags"].map(String::from));
    w.write_record(&header).map_err(csv_io)?;
    for r in rows {
        let mut rec = vec![r.sigma_target.to_string(), r.sigma_net.to_string()];
        rec.extend(r.sigma_bus.iter().map(|s| s.map_or(String::new(), |v| v.to_string())));
        rec.push(r.eig_max_real.to_string());
        rec.push(r.region.as_str().to_string());
        rec.push(r.flags.join(";"));
        w.write_record(&rec).map_err(csv_io)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    String::from_utf8(bytes).map_err(|e| Error::Numeric(e.to_string()))
}

fn csv_io(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

fn sweep_summary_text(s: &SweepSummary) -> String {
    let opt = |v: Option<f64>| v.map_or("none".to_string(), |x| format!("{x:.4}"));
    format!(
        "sigma_net = {:.6}\nrows = {}\ncertified-stable edge = {}\nphysical-instability edge = {}\n\
         conservative rows = {} (width {})\nmonotone regions = {}\nanomalous solves = {}/{} ({:.1}%), ill-conditioned rejections = {}\n\
         unsound rows = {}\n",
        s.sigma_net,
        s.rows,
        opt(s.certified_stable_edge),
        opt(s.instability_edge),
        s.conservative_rows,
        opt(s.conservative_width),
        s.monotone,
        s.anomalous_solves,
        s.solves,
        100.0 * s.anomaly_rate,
        s.ill_conditioned_rejections,
        s.unsound_rows
    )
}

/// Runs the σ-sweep and writes `sweep.csv`, `sweep.json` (rows) and
/// `verdict.json` (summary).
pub fn run_network_sweep(cfg: &ScenarioConfig) -> StageResult<Outcome> {
    cfg.validate().at("config")?;
    let seed = cfg.seed().at("config")?;
    let spec = cfg.network_spec().at("config")?;
    let net = NetworkModel::from_spec(&spec).at("network")?;
    let rows = sigma_sweep(&net, &cfg.sweep, seed, &cfg.solver).at("sweep")?;
    let summary = summarize_sweep(&rows);
    let out = out_dir(cfg);
    let mut files = Vec::new();
    write_file(&out, "sweep.csv", &sweep_csv(&rows, &net.ids).at("report")?, &mut files).at("report")?;
    write_file(&out, "sweep.json", &json(&rows).at("report")?, &mut files).at("report")?;
    write_file(&out, "verdict.json", &json(&summary).at("report")?, &mut files).at("report")?;
    Ok(Outcome { exit_code: EXIT_OK, summary: sweep_summary_text(&summary), files })
}
