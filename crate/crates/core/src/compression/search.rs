//! Combination search: prune per plan, evaluate, score and pick a winner.
//!
//! Each plan evaluation is a pure function of the immutable base model, so
//! callers may run [`evaluate_plan`] in parallel and hand the results to
//! [`assemble_report`]; [`search`] is the sequential driver.

use alloc::vec::Vec;
use core::cmp::Ordering;

use super::plan::{enumerate_plans, PlanSpace, SparsityPlan};
use super::prune::prune_model;
use crate::analysis::{estimate_footprint, Footprint, Metrics, Precision, QMode, SpeedupModel};
use crate::engine::SeModel;
use crate::sparse::SparsityStructure;
use crate::Error;

/// One pruned and evaluated plan.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanEvaluation {
    /// The plan with its measured overall sparsity.
    pub plan: SparsityPlan,
    pub metrics: Metrics,
    /// Score under the report's [`QMode`].
    pub q: f64,
    pub footprint: Footprint,
    pub speedup: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchReport {
    pub structure: SparsityStructure,
    pub target: f64,
    /// `SiSdrOnly` when any evaluation lacks STOI or PESQ; every Q in the
    /// report then uses the SI-SDR term alone.
    pub mode: QMode,
    /// All evaluations in plan order.
    pub evaluations: Vec<PlanEvaluation>,
    /// Index of the winner in `evaluations`.
    pub winner: usize,
}

impl SearchReport {
    pub fn best(&self) -> &PlanEvaluation {
        &self.evaluations[self.winner]
    }
}

/// Prune `model` per `plan` and evaluate the result.
pub fn evaluate_plan<F>(
    model: &SeModel,
    plan: &SparsityPlan,
    speedup: &SpeedupModel,
    evaluate: &F,
) -> Result<PlanEvaluation, Error>
where
    F: Fn(&SparsityPlan, &SeModel) -> Result<Metrics, Error> + ?Sized,
{
    let (pruned, plan) = prune_model(model, plan)?;
    let metrics = evaluate(&plan, &pruned)?;
    Ok(PlanEvaluation {
        q: metrics.q(),
        metrics,
        footprint: estimate_footprint(&pruned, Precision::Stored),
        speedup: speedup.estimate(plan.structure, plan.overall),
        plan,
    })
}

/// Higher Q first, then smaller footprint, then lexicographic levels.
fn rank(a: &PlanEvaluation, b: &PlanEvaluation) -> Ordering {
    b.q.total_cmp(&a.q)
        .then(a.footprint.total().cmp(&b.footprint.total()))
        .then(a.plan.levels.cmp(&b.plan.levels))
}

/// Rescore under a common Q mode and pick the winner.
pub fn assemble_report(
    structure: SparsityStructure,
    target: f64,
    mut evaluations: Vec<PlanEvaluation>,
) -> Result<SearchReport, Error> {
    if evaluations.is_empty() {
        return Err(Error::Infeasible);
    }
    let mode = if evaluations.iter().all(|e| e.metrics.mode() == QMode::Full) {
        QMode::Full
    } else {
        QMode::SiSdrOnly
    };
    for e in evaluations.iter_mut() {
        e.q = match mode {
            QMode::Full => e.metrics.q(),
            QMode::SiSdrOnly => Metrics::si_sdr_only(e.metrics.si_sdr).q(),
        };
    }
    let winner = (0..evaluations.len())
        .min_by(|&a, &b| rank(&evaluations[a], &evaluations[b]))
        .expect("nonempty");
    Ok(SearchReport {
        structure,
        target,
        mode,
        evaluations,
        winner,
    })
}

/// Enumerate every plan meeting `target`, evaluate each and select the
/// best by Q.
pub fn search<F>(
    model: &SeModel,
    target: f64,
    structure: SparsityStructure,
    speedup: &SpeedupModel,
    evaluate: &F,
) -> Result<SearchReport, Error>
where
    F: Fn(&SparsityPlan, &SeModel) -> Result<Metrics, Error> + ?Sized,
{
    let space = PlanSpace::for_model(model, structure)?;
    let plans = enumerate_plans(&space, target)?;
    let evaluations = plans
        .iter()
        .map(|p| evaluate_plan(model, p, speedup, evaluate))
        .collect::<Result<Vec<_>, _>>()?;
    assemble_report(structure, target, evaluations)
}
