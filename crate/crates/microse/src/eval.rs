//! Evaluation sets, the external metric sidecar and the parallel search.
//!
//! An evaluation directory holds `clean/` and `noisy/` subdirectories with
//! identically named mono WAV files; the file stem is the utterance id.
//!
//! The metric sidecar is a CSV file with a header row and the columns
//! `utterance,stoi,pesq` plus an optional `plan` column. A row without a
//! plan applies to every plan; a row whose plan is the per-layer fractions
//! joined by `:` (for example `0.5:0.6:0.3:0`) applies to that plan only and
//! takes precedence. STOI and PESQ enter Q only when every utterance has a
//! value for the plan being scored.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Deserialize;

use microse_core::analysis::{si_sdr, Metrics, SpeedupModel};
use microse_core::compression::{assemble_report, enumerate_plans, evaluate_plan, PlanSpace, SearchReport, SparsityPlan};
use microse_core::engine::{enhance, SeModel};
use microse_core::{Error, SparsityStructure};

use crate::wav;

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("evaluation set: {0}")]
    Set(String),
    #[error(transparent)]
    Wav(#[from] wav::WavError),
    #[error("metric sidecar: {0}")]
    Csv(#[from] csv::Error),
    #[error("metric sidecar: {0}")]
    Sidecar(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Utterance {
    pub id: String,
    pub clean: Vec<f64>,
    pub noisy: Vec<f64>,
    pub sample_rate: u32,
}

pub fn load_eval_dir(dir: &Path) -> Result<Vec<Utterance>, EvalError> {
    let clean_dir = dir.join("clean");
    let noisy_dir = dir.join("noisy");
    let mut ids: Vec<PathBuf> = std::fs::read_dir(&noisy_dir)
        .map_err(|e| EvalError::Set(format!("{}: {e}", noisy_dir.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("wav")))
        .collect();
    ids.sort();
    let mut out = Vec::new();
    for noisy_path in ids {
        let name = noisy_path.file_name().expect("file").to_owned();
        let id = noisy_path.file_stem().expect("stem").to_string_lossy().into_owned();
        let clean_path = clean_dir.join(&name);
        let noisy = wav::read(&noisy_path)?;
        let clean = wav::read(&clean_path).map_err(|e| EvalError::Set(format!("{}: {e}", clean_path.display())))?;
        if clean.sample_rate != noisy.sample_rate || clean.samples.len() != noisy.samples.len() {
            return Err(EvalError::Set(format!("{id}: clean and noisy files differ in rate or length")));
        }
        out.push(Utterance {
            id,
            clean: clean.samples,
            noisy: noisy.samples,
            sample_rate: noisy.sample_rate,
        });
    }
    if out.is_empty() {
        return Err(EvalError::Set(format!("no WAV files in {}", noisy_dir.display())));
    }
    Ok(out)
}

#[derive(Debug, Deserialize)]
struct Row {
    utterance: String,
    stoi: f64,
    pesq: f64,
    #[serde(default)]
    plan: Option<String>,
}

/// Externally computed STOI and PESQ values.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricTable {
    /// `(utterance, plan levels or None)` to `(stoi, pesq)`.
    rows: BTreeMap<(String, Option<Vec<u16>>), (f64, f64)>,
}

/// Parse `0.5:0.6:0.3:0` into permille levels.
pub fn parse_plan_key(s: &str) -> Option<Vec<u16>> {
    s.split(':')
        .map(|f| {
            let v: f64 = f.trim().parse().ok()?;
            let p = (v * 1000.0).round();
            ((0.0..1000.0).contains(&p) && (p - v * 1000.0).abs() < 1e-6).then_some(p as u16)
        })
        .collect()
}

impl MetricTable {
    pub fn from_csv(text: &str) -> Result<Self, EvalError> {
        let mut rd = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
        let mut rows = BTreeMap::new();
        for r in rd.deserialize::<Row>() {
            let r = r?;
            let plan = match r.plan.as_deref() {
                None | Some("") => None,
                Some(p) => Some(parse_plan_key(p).ok_or_else(|| EvalError::Sidecar(format!("bad plan key {p:?}")))?),
            };
            if rows.insert((r.utterance.clone(), plan), (r.stoi, r.pesq)).is_some() {
                return Err(EvalError::Sidecar(format!("duplicate row for {}", r.utterance)));
            }
        }
        Ok(MetricTable { rows })
    }

    pub fn lookup(&self, utterance: &str, levels: &[u16]) -> Option<(f64, f64)> {
        self.rows
            .get(&(utterance.to_string(), Some(levels.to_vec())))
            .or_else(|| self.rows.get(&(utterance.to_string(), None)))
            .copied()
    }

    /// Mean STOI and PESQ over `utterances`, if every one has values.
    pub fn mean(&self, utterances: &[Utterance], levels: &[u16]) -> Option<(f64, f64)> {
        let mut sum = (0.0, 0.0);
        for u in utterances {
            let (s, p) = self.lookup(&u.id, levels)?;
            sum.0 += s;
            sum.1 += p;
        }
        let n = utterances.len() as f64;
        Some((sum.0 / n, sum.1 / n))
    }
}

/// Mean SI-SDR of the enhanced utterances plus sidecar STOI/PESQ.
pub fn evaluate_model(model: &SeModel, plan: &SparsityPlan, set: &[Utterance], table: Option<&MetricTable>) -> Result<Metrics, Error> {
    if set.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut total = 0.0;
    for u in set {
        let out = enhance(model, &u.noisy, u.sample_rate)?;
        total += si_sdr(&u.clean, &out)?;
    }
    let (stoi, pesq) = match table.and_then(|t| t.mean(set, &plan.levels)) {
        Some((s, p)) => (Some(s), Some(p)),
        None => (None, None),
    };
    Ok(Metrics {
        stoi,
        pesq,
        si_sdr: total / set.len() as f64,
    })
}

/// Thread count from `MICROSE_THREADS`, if set to a positive integer.
pub fn threads_from_env() -> Option<usize> {
    std::env::var("MICROSE_THREADS")
        .ok()
        .and_then(|v| v.trim().parse().ok())
        .filter(|&n: &usize| n > 0)
}

/// [`microse_core::compression::search`] with plan evaluations spread over
/// a thread pool. The result is identical for any thread count.
pub fn parallel_search<F>(
    model: &SeModel,
    target: f64,
    structure: SparsityStructure,
    speedup: &SpeedupModel,
    evaluate: &F,
    threads: Option<usize>,
) -> Result<SearchReport, Error>
where
    F: Fn(&SparsityPlan, &SeModel) -> Result<Metrics, Error> + Sync,
{
    let space = PlanSpace::for_model(model, structure)?;
    let plans = enumerate_plans(&space, target)?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|_| Error::InvalidConfig("cannot start worker threads"))?;
    let evaluations = pool.install(|| {
        plans
            .par_iter()
            .map(|p| evaluate_plan(model, p, speedup, evaluate))
            .collect::<Result<Vec<_>, _>>()
    })?;
    assemble_report(structure, target, evaluations)
}
