//! End-to-end certification of a single device from simulated measurements.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::devices::{cd_theoretical_bound, DeviceModel};
use crate::error::{Error, Result};
use crate::lti::Dynamics;
use crate::odp::{certify_record, DataCertification, OdpOptions};
use crate::trajectory::{period_average, simulate, ExcitationSignal, SimulationOptions, TrajectoryRecord};

/// Data-collection settings for one device.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Protocol {
    pub h: f64,
    pub duration: f64,
    /// Noise standard deviation as a fraction of each channel's peak.
    pub noise: f64,
    /// Averaging period; `None` keeps the raw record.
    pub averaging_period: Option<f64>,
    /// Keep only the first samples of the (averaged) record.
    pub truncation: Option<usize>,
    /// `None` selects the period-locked design when averaging, otherwise a
    /// multi-sine derived from the device time scales.
    pub excitation: Option<ExcitationSignal>,
    /// Excitation amplitude in input units.
    pub amplitude: f64,
}

impl Default for Protocol {
    fn default() -> Self {
        Self::offline_benchmark()
    }
}

impl Protocol {
    /// The offline inverter benchmark: 0.4 s sampling over 200 s with 1%
    /// measurement noise, averaged over a 1.6 s excitation period.
    pub fn offline_benchmark() -> Self {
        Self {
            h: 0.4,
            duration: 200.0,
            noise: 0.01,
            averaging_period: Some(1.6),
            truncation: None,
            excitation: None,
            amplitude: 0.1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.h > 0.0 && self.h.is_finite()) {
            return Err(Error::Config(format!("h must be positive, got {}", self.h)));
        }
        if !(self.duration >= self.h) {
            return Err(Error::Config(format!("duration {} shorter than h = {}", self.duration, self.h)));
        }
        if !(self.noise >= 0.0) {
            return Err(Error::Config(format!("noise fraction must be nonnegative, got {}", self.noise)));
        }
        if let Some(p) = self.averaging_period {
            if !(p >= self.h && p <= self.duration) {
                return Err(Error::Config(format!("averaging period {p} must lie in [h, duration]")));
            }
        }
        if let Some(k) = self.truncation {
            let window = k as f64 * self.averaging_period.unwrap_or(self.h);
            if k == 0 || window > self.duration + 1e-9 * self.duration {
                return Err(Error::Config(format!("truncation window of {k} samples exceeds the duration")));
            }
        }
        if !(self.amplitude > 0.0) {
            return Err(Error::Config(format!("excitation amplitude must be positive, got {}", self.amplitude)));
        }
        Ok(())
    }

    pub fn excitation_for(&self, device: &DeviceModel) -> ExcitationSignal {
        if let Some(e) = &self.excitation {
            return e.clone();
        }
        match self.averaging_period {
            Some(period) => ExcitationSignal::four_sample_design(period, self.amplitude),
            None => {
                let (lo, hi) = device.time_scales();
                ExcitationSignal::default_for(device.n_states(), device.n_io(), lo, hi, self.amplitude)
            }
        }
    }
}

/// Simulated and preprocessed record, ready for certification.
pub fn collect(device: &DeviceModel, protocol: &Protocol, seed: u64) -> Result<TrajectoryRecord> {
    protocol.validate()?;
    device.validate()?;
    let excitation = protocol.excitation_for(device);
    let raw = simulate(
        device,
        &device.equilibrium(),
        &excitation,
        protocol.h,
        protocol.duration,
        protocol.noise,
        seed,
        SimulationOptions::default(),
    )?;
    let averaged = match protocol.averaging_period {
        Some(p) => period_average(&raw, p)?,
        None => raw,
    };
    match protocol.truncation {
        Some(k) if k < averaged.len() => averaged.truncate(k),
        _ => Ok(averaged),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeviceReport {
    pub certification: DataCertification,
    pub sigma: f64,
    /// Closed-form bound for CD devices.
    pub theoretical: Option<f64>,
    pub record: TrajectoryRecord,
}

impl DeviceReport {
    /// Signed deviation from the theoretical bound in percent.
    pub fn deviation_percent(&self) -> Option<f64> {
        self.theoretical.map(|t| 100.0 * (self.sigma - t) / t)
    }
}

/// Collects data and certifies the device with its known output matrix.
pub fn certify_device(device: &DeviceModel, protocol: &Protocol, seed: u64, opts: &OdpOptions) -> Result<DeviceReport> {
    let record = collect(device, protocol, seed)?;
    let c: Option<DMatrix<f64>> = device.output_matrix();
    let certification = certify_record(&record, c.as_ref(), None, opts)?;
    let sigma = certification.certificate.sigma_scalar();
    let theoretical = match device {
        DeviceModel::Cd(p) => Some(cd_theoretical_bound(p)?),
        _ => None,
    };
    Ok(DeviceReport { certification, sigma, theoretical, record })
}
