//! Deployability checks for streaming inference on a microcontroller NPU.

use super::footprint::{estimate_footprint, Precision};
use crate::engine::{ops_per_frame, SeModel};
use crate::Error;

/// Target end-to-end audio latency in milliseconds. Advisory only.
pub const AUDIO_LATENCY_BUDGET_MS: f64 = 30.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HwProfile {
    /// Parallel MACs per clock cycle (8 at 8 bits, 4 at 16 bits).
    pub macs_per_cycle: u32,
    pub clock_hz: u64,
    pub sram_bytes: usize,
}

impl HwProfile {
    /// 8 MACs per cycle at 100 MHz with 640 KiB of SRAM.
    pub const REFERENCE: HwProfile = HwProfile {
        macs_per_cycle: 8,
        clock_hz: 100_000_000,
        sram_bytes: 640 * 1024,
    };

    pub fn validate(&self) -> Result<(), Error> {
        if self.macs_per_cycle == 0 || self.clock_hz == 0 || self.sram_bytes == 0 {
            return Err(Error::InvalidConfig("hardware profile values must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstraintReport {
    pub causal: bool,
    pub quantized: bool,
    pub ops_per_frame: usize,
    pub compute_latency_s: f64,
    /// Time until the next frame arrives: `hop / sample_rate`.
    pub deadline_s: f64,
    pub compute_pass: bool,
    pub footprint_bytes: usize,
    pub sram_bytes: usize,
    pub footprint_pass: bool,
    /// Frame plus hop duration.
    pub audio_latency_ms: f64,
    pub audio_latency_pass: bool,
}

impl ConstraintReport {
    /// Causal, quantized, within the compute deadline and within SRAM.
    /// Audio latency is a target, not a hard requirement, and is reported
    /// separately.
    pub fn pass(&self) -> bool {
        self.causal && self.quantized && self.compute_pass && self.footprint_pass
    }
}

pub fn validate_constraints(model: &SeModel, hw: &HwProfile) -> Result<ConstraintReport, Error> {
    hw.validate()?;
    let ops = ops_per_frame(model).total();
    let compute_latency_s = ops as f64 / (hw.macs_per_cycle as f64 * hw.clock_hz as f64);
    let deadline_s = model.dsp.hop_seconds();
    let footprint_bytes = estimate_footprint(model, Precision::Stored).total();
    let audio_latency_ms =
        ((model.dsp.frame_size + model.dsp.hop_size) * 1000) as f64 / model.dsp.sample_rate as f64;
    Ok(ConstraintReport {
        causal: model.is_causal(),
        quantized: model.is_quantized(),
        ops_per_frame: ops,
        compute_latency_s,
        deadline_s,
        compute_pass: compute_latency_s <= deadline_s,
        footprint_bytes,
        sram_bytes: hw.sram_bytes,
        footprint_pass: footprint_bytes <= hw.sram_bytes,
        audio_latency_ms,
        audio_latency_pass: audio_latency_ms <= AUDIO_LATENCY_BUDGET_MS,
    })
}
