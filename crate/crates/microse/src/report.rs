//! JSON report schema.
//!
//! Field names and order are stable; every report is plain data that can be
//! diffed between runs. Per-layer values are arrays in layer order
//! `lstm1, lstm2, dense1, dense2`, listed in each report's `layers` field.

use serde::{Deserialize, Serialize};

use microse_core::analysis::{
    estimate_footprint, validate_constraints, ConstraintReport, Footprint, HwProfile, Precision, SpeedupModel,
    AUDIO_LATENCY_BUDGET_MS,
};
use microse_core::compression::{PlanEvaluation, SearchReport, SparsityPlan};
use microse_core::engine::{ops_per_frame, LayerId, SeModel};

use crate::hash::weight_hash;

pub fn layer_names() -> Vec<String> {
    LayerId::ALL.iter().map(|l| l.name().to_string()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FootprintJson {
    pub weight_bytes: usize,
    pub index_bytes: usize,
    pub working_bytes: usize,
    pub total_bytes: usize,
    /// Weights plus working memory, without sparse index metadata.
    pub without_indices_bytes: usize,
}

impl From<Footprint> for FootprintJson {
    fn from(f: Footprint) -> Self {
        FootprintJson {
            weight_bytes: f.weight_bytes,
            index_bytes: f.index_bytes,
            working_bytes: f.working_bytes,
            total_bytes: f.total(),
            without_indices_bytes: f.without_indices(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HwJson {
    pub macs_per_cycle: u32,
    pub clock_hz: u64,
    pub sram_bytes: usize,
}

impl From<HwJson> for HwProfile {
    fn from(h: HwJson) -> Self {
        HwProfile {
            macs_per_cycle: h.macs_per_cycle,
            clock_hz: h.clock_hz,
            sram_bytes: h.sram_bytes,
        }
    }
}

impl From<HwProfile> for HwJson {
    fn from(h: HwProfile) -> Self {
        HwJson {
            macs_per_cycle: h.macs_per_cycle,
            clock_hz: h.clock_hz,
            sram_bytes: h.sram_bytes,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintJson {
    pub causal: bool,
    pub quantized: bool,
    pub ops_per_frame: usize,
    pub compute_latency_s: f64,
    pub deadline_s: f64,
    pub compute_pass: bool,
    pub footprint_bytes: usize,
    pub sram_bytes: usize,
    pub footprint_pass: bool,
    pub audio_latency_ms: f64,
    pub audio_latency_budget_ms: f64,
    /// Advisory; not part of `pass`.
    pub audio_latency_pass: bool,
    pub pass: bool,
}

impl From<ConstraintReport> for ConstraintJson {
    fn from(c: ConstraintReport) -> Self {
        ConstraintJson {
            causal: c.causal,
            quantized: c.quantized,
            ops_per_frame: c.ops_per_frame,
            compute_latency_s: c.compute_latency_s,
            deadline_s: c.deadline_s,
            compute_pass: c.compute_pass,
            footprint_bytes: c.footprint_bytes,
            sram_bytes: c.sram_bytes,
            footprint_pass: c.footprint_pass,
            audio_latency_ms: c.audio_latency_ms,
            audio_latency_budget_ms: AUDIO_LATENCY_BUDGET_MS,
            audio_latency_pass: c.audio_latency_pass,
            pass: c.pass(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerJson {
    pub name: String,
    pub params: usize,
    pub pruned: usize,
    pub sparsity: f64,
    /// `dense`, `weight`, `block` or `unit`.
    pub encoding: String,
    pub format_bits: u32,
    pub macs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelReport {
    pub weight_hash: String,
    pub params: usize,
    pub sparsity: f64,
    pub structure: Option<String>,
    pub layers: Vec<LayerJson>,
    pub footprint: FootprintJson,
    pub footprint_fp32_bytes: usize,
    pub ops_per_frame: usize,
    pub speedup: f64,
    pub hardware: HwJson,
    pub constraints: ConstraintJson,
}

pub fn model_report(model: &SeModel, hw: &HwProfile, speedup: &SpeedupModel) -> Result<ModelReport, microse_core::Error> {
    let layers = LayerId::ALL
        .iter()
        .map(|&l| {
            let params = model.layer_param_count(l);
            let pruned = model.layer_pruned_count(l);
            let matrices = model.layer_matrices(l);
            LayerJson {
                name: l.name().to_string(),
                params,
                pruned,
                sparsity: pruned as f64 / params as f64,
                encoding: matrices[0].structure().map_or("dense", |s| s.name()).to_string(),
                format_bits: model.layer_format(l).bits(),
                macs: matrices.iter().map(|m| m.macs()).sum(),
            }
        })
        .collect();
    let structure = model.structure();
    Ok(ModelReport {
        weight_hash: weight_hash(model),
        params: model.param_count(),
        sparsity: model.sparsity(),
        structure: structure.map(|s| s.name().to_string()),
        layers,
        footprint: estimate_footprint(model, Precision::Stored).into(),
        footprint_fp32_bytes: estimate_footprint(model, Precision::Float32).total(),
        ops_per_frame: ops_per_frame(model).total(),
        speedup: structure.map_or(1.0, |s| speedup.estimate(s, model.sparsity())),
        hardware: (*hw).into(),
        constraints: validate_constraints(model, hw)?.into(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanJson {
    pub levels: Vec<f64>,
    pub overall: f64,
}

impl From<&SparsityPlan> for PlanJson {
    fn from(p: &SparsityPlan) -> Self {
        PlanJson {
            levels: p.fractions(),
            overall: p.overall,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationJson {
    pub levels: Vec<f64>,
    pub overall: f64,
    pub stoi: Option<f64>,
    pub pesq: Option<f64>,
    pub si_sdr: f64,
    pub q: f64,
    pub footprint_bytes: usize,
    pub speedup: f64,
}

impl From<&PlanEvaluation> for EvaluationJson {
    fn from(e: &PlanEvaluation) -> Self {
        EvaluationJson {
            levels: e.plan.fractions(),
            overall: e.plan.overall,
            stoi: e.metrics.stoi,
            pesq: e.metrics.pesq,
            si_sdr: e.metrics.si_sdr,
            q: e.q,
            footprint_bytes: e.footprint.total(),
            speedup: e.speedup,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchReportJson {
    pub structure: String,
    pub target: f64,
    pub layers: Vec<String>,
    /// `full` or `si-sdr-only`.
    pub q_mode: String,
    pub plans: Vec<EvaluationJson>,
    pub winner_index: usize,
    pub winner: EvaluationJson,
    pub model: ModelReport,
}

pub fn search_report(r: &SearchReport, pruned: &SeModel, hw: &HwProfile, speedup: &SpeedupModel) -> Result<SearchReportJson, microse_core::Error> {
    Ok(SearchReportJson {
        structure: r.structure.name().to_string(),
        target: r.target,
        layers: layer_names(),
        q_mode: r.mode.name().to_string(),
        plans: r.evaluations.iter().map(EvaluationJson::from).collect(),
        winner_index: r.winner,
        winner: r.best().into(),
        model: model_report(pruned, hw, speedup)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PruneReportJson {
    pub structure: String,
    pub target: Option<f64>,
    pub layers: Vec<String>,
    /// Every plan meeting the target; empty for an explicit plan.
    pub candidates: Vec<PlanJson>,
    pub chosen: PlanJson,
    pub model: ModelReport,
}
