//! Abstract-unit cost model: setup, host transfer and compute.
//!
//! * setup: `setup_constant`, charged the first time an artifact runs in a
//!   session.
//! * xfer, per buffer sync: `sync_latency + KiB · transfer_units_per_kib /
//!   columns` plus `KiB · conversion_units_per_kib` of host bytes when the
//!   buffer is converted. `columns` is the number of interface columns the
//!   buffer is striped over.
//! * compute: the slowest core. Scalar ops cost `scalar_op_cost`; kernel
//!   calls cost `kernel_call_overhead` plus `vector_op_cost` per vector op,
//!   multiplied by `emulation_penalty` when the vector unit works on int32 or
//!   float32.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::ir::DType;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CostParams {
    pub setup_constant: f64,
    pub sync_latency: f64,
    pub transfer_units_per_kib: f64,
    pub conversion_units_per_kib: f64,
    pub vector_op_cost: f64,
    pub scalar_op_cost: f64,
    pub kernel_call_overhead: f64,
    pub emulation_penalty: f64,
}

impl Default for CostParams {
    fn default() -> Self {
        CostParams {
            setup_constant: 3000.0,
            sync_latency: 700.0,
            transfer_units_per_kib: 0.3,
            conversion_units_per_kib: 0.5,
            vector_op_cost: 0.25,
            scalar_op_cost: 0.01,
            kernel_call_overhead: 1.0,
            emulation_penalty: 1.5,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CostConfigError {
    #[error("cannot read cost config {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("bad cost config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("bad cost config: {0}")]
    Invalid(String),
}

impl CostParams {
    /// Parse TOML `key = value` overrides; missing keys keep their defaults.
    pub fn from_toml(text: &str) -> Result<Self, CostConfigError> {
        let p: CostParams = toml::from_str(text)?;
        p.check()?;
        Ok(p)
    }

    pub fn load(path: &Path) -> Result<Self, CostConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| CostConfigError::Io { path: path.display().to_string(), source })?;
        Self::from_toml(&text)
    }

    fn check(&self) -> Result<(), CostConfigError> {
        let fields = [
            ("setup_constant", self.setup_constant),
            ("sync_latency", self.sync_latency),
            ("transfer_units_per_kib", self.transfer_units_per_kib),
            ("conversion_units_per_kib", self.conversion_units_per_kib),
            ("vector_op_cost", self.vector_op_cost),
            ("scalar_op_cost", self.scalar_op_cost),
            ("kernel_call_overhead", self.kernel_call_overhead),
        ];
        for (name, v) in fields {
            if !(v.is_finite() && v >= 0.0) {
                return Err(CostConfigError::Invalid(format!("{name} must be a non-negative number")));
            }
        }
        if !(self.emulation_penalty.is_finite() && self.emulation_penalty > 1.0) {
            return Err(CostConfigError::Invalid("emulation_penalty must be greater than 1".into()));
        }
        if self.transfer_units_per_kib <= 0.0 {
            return Err(CostConfigError::Invalid("transfer_units_per_kib must be positive".into()));
        }
        Ok(())
    }

    /// Whether the vector unit handles `dtype` without emulation.
    pub fn is_native(dtype: DType) -> bool {
        matches!(dtype, DType::Int16 | DType::BFloat16)
    }

    /// Cost of `vector_ops` vector instructions on `dtype`.
    pub fn vector_cost(&self, vector_ops: usize, dtype: DType) -> f64 {
        let base = vector_ops as f64 * self.vector_op_cost;
        if Self::is_native(dtype) {
            base
        } else {
            base * self.emulation_penalty
        }
    }

    /// Cost of one host buffer sync of `device_bytes` striped over `columns`
    /// interface columns, converting `converted_host_bytes` on the way.
    pub fn sync_cost(&self, device_bytes: usize, columns: usize, converted_host_bytes: usize) -> f64 {
        let kib = device_bytes as f64 / 1024.0;
        let conv = converted_host_bytes as f64 / 1024.0 * self.conversion_units_per_kib;
        self.sync_latency + kib * self.transfer_units_per_kib / columns.max(1) as f64 + conv
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CostReport {
    pub setup: f64,
    pub xfer: f64,
    pub compute: f64,
}

impl CostReport {
    pub fn total(&self) -> f64 {
        self.setup + self.xfer + self.compute
    }
}
