use serde::{Deserialize, Serialize};

use super::{AnalysisError, RooflinePoint};
use crate::Scalar;

/// An additional roof drawn on the plot. Classification only uses the
/// model's main peak and bandwidth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged, bound = "T: Scalar")]
pub enum Ceiling<T = f64> {
    Compute { label: String, gflops: T },
    Bandwidth { label: String, gbs: T },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct MachineModel<T = f64> {
    pub name: String,
    pub frequency_ghz: T,
    pub peak_gflops: T,
    pub mem_bandwidth_gbs: T,
    #[serde(default)]
    pub extra_ceilings: Vec<Ceiling<T>>,
}

/// Field list printed when a model file is missing or malformed.
pub const MACHINE_MODEL_SCHEMA: &str = r#"{
  "name": "<string>",
  "frequency_ghz": <positive number>,
  "peak_gflops": <positive number>,
  "mem_bandwidth_gbs": <positive number>,
  "extra_ceilings": [ {"label": "<string>", "gflops": <number>} | {"label": "<string>", "gbs": <number>} ]   (optional)
}"#;

impl<T: Scalar> MachineModel<T> {
    pub fn new(name: impl Into<String>, frequency_ghz: T, peak_gflops: T, mem_bandwidth_gbs: T) -> Self {
        Self {
            name: name.into(),
            frequency_ghz,
            peak_gflops,
            mem_bandwidth_gbs,
            extra_ceilings: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<(), AnalysisError> {
        let bad = |what: String| Err(AnalysisError::InvalidModel(what));
        for (field, v) in [
            ("frequency_ghz", self.frequency_ghz),
            ("peak_gflops", self.peak_gflops),
            ("mem_bandwidth_gbs", self.mem_bandwidth_gbs),
        ] {
            if !(v.is_finite() && v > T::zero()) {
                return bad(format!("{field} must be a positive number, got {v}"));
            }
        }
        for c in &self.extra_ceilings {
            let (label, v) = match c {
                Ceiling::Compute { label, gflops } => (label, *gflops),
                Ceiling::Bandwidth { label, gbs } => (label, *gbs),
            };
            if !(v.is_finite() && v > T::zero()) {
                return bad(format!("ceiling `{label}` must be positive, got {v}"));
            }
            if matches!(c, Ceiling::Compute { .. }) && v > self.peak_gflops {
                return bad(format!(
                    "compute ceiling `{label}` ({v}) exceeds peak_gflops ({})",
                    self.peak_gflops
                ));
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self, AnalysisError> {
        let model: Self = serde_json::from_str(text).map_err(|e| AnalysisError::InvalidModel(e.to_string()))?;
        model.validate()?;
        Ok(model)
    }

    /// Arithmetic intensity at which the bandwidth roof meets the compute roof.
    pub fn knee(&self) -> T {
        self.peak_gflops / self.mem_bandwidth_gbs
    }

    pub fn attainable_gflops(&self, ai: T) -> T {
        (ai * self.mem_bandwidth_gbs).min(self.peak_gflops)
    }
}

/// Peak GFLOP/s from sustained IPC, FLOPs per instruction and clock.
pub fn theoretical_compute_peak<T: Scalar>(ipc: T, flops_per_instruction: T, frequency_ghz: T) -> T {
    ipc * flops_per_instruction * frequency_ghz
}

pub fn bandwidth_from_bytes_per_cycle<T: Scalar>(bytes_per_cycle: T, frequency_ghz: T) -> T {
    bytes_per_cycle * frequency_ghz
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Bound {
    MemoryBound,
    ComputeBound,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct BoundClass<T = f64> {
    pub class: Bound,
    pub attainable_gflops: T,
    /// Measured over attainable throughput; zero when nothing is attainable.
    pub efficiency: T,
}

/// A point is memory bound when its intensity lies strictly left of the
/// knee. A point exactly on the knee is compute bound.
///
/// The comparison is made against `peak / bw` rather than `ai * bw < peak`
/// so that a point placed at the computed knee classifies the same way
/// regardless of rounding in the product.
pub fn classify<T: Scalar>(point: &RooflinePoint<T>, model: &MachineModel<T>) -> BoundClass<T> {
    let ai = point.arithmetic_intensity_fp;
    let (class, attainable) = if ai < model.knee() {
        (Bound::MemoryBound, ai * model.mem_bandwidth_gbs)
    } else {
        (Bound::ComputeBound, model.peak_gflops)
    };
    let efficiency = if attainable > T::zero() {
        point.gflops / attainable
    } else {
        T::zero()
    };
    BoundClass {
        class,
        attainable_gflops: attainable,
        efficiency,
    }
}
