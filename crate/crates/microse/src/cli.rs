//! The `microse` command line.
//!
//! Exit codes: 0 success, 1 usage or I/O error, 2 data mismatch (sample
//! rate, dimensions, malformed inputs), 3 no feasible sparsity plan,
//! 4 corrupt or unsupported model container.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use microse_core::analysis::{HwProfile, SpeedupModel};
use microse_core::compression::{enumerate_plans, prune_model, PlanSpace, SparsityPlan};
use microse_core::dsp::DspConfig;
use microse_core::engine::{enhance, LayerId, ModelDims, SeModel};
use microse_core::{Error, SparsityStructure};

use crate::container::{self, ContainerError};
use crate::eval::{self, EvalError, MetricTable};
use crate::report::{self, HwJson, PlanJson, PruneReportJson};
use crate::{golden, hash, render, wav};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_MISMATCH: i32 = 2;
pub const EXIT_INFEASIBLE: i32 = 3;
pub const EXIT_CORRUPT: i32 = 4;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Mismatch(String),
    #[error("{0}")]
    Infeasible(String),
    #[error("{0}")]
    Corrupt(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Mismatch(_) => EXIT_MISMATCH,
            CliError::Infeasible(_) => EXIT_INFEASIBLE,
            CliError::Corrupt(_) => EXIT_CORRUPT,
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let msg = e.to_string();
        match e {
            Error::Infeasible => CliError::Infeasible(msg),
            Error::InvalidSparsity(_)
            | Error::InvalidPlan(_)
            | Error::FinalLayerUnitPruning
            | Error::InvalidStructure(_)
            | Error::InvalidConfig(_)
            | Error::AnchorParse { .. } => CliError::Usage(msg),
            _ => CliError::Mismatch(msg),
        }
    }
}

impl From<ContainerError> for CliError {
    fn from(e: ContainerError) -> Self {
        match e {
            ContainerError::Io(_) => CliError::Usage(e.to_string()),
            _ => CliError::Corrupt(e.to_string()),
        }
    }
}

impl From<wav::WavError> for CliError {
    fn from(e: wav::WavError) -> Self {
        match &e {
            wav::WavError::Hound(hound::Error::IoError(_)) => CliError::Usage(e.to_string()),
            _ => CliError::Mismatch(e.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Wav(w) => w.into(),
            other => CliError::Mismatch(other.to_string()),
        }
    }
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Usage(format!("{}: {e}", path.display()))
}

#[derive(Debug, Parser)]
#[command(name = "microse", version, about = "Sparse quantized LSTM speech enhancement")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StructureArg {
    Weight,
    Block,
    Unit,
}

impl From<StructureArg> for SparsityStructure {
    fn from(s: StructureArg) -> Self {
        match s {
            StructureArg::Weight => SparsityStructure::Weight,
            StructureArg::Block => SparsityStructure::block(),
            StructureArg::Unit => SparsityStructure::Unit,
        }
    }
}

#[derive(Debug, Args)]
pub struct AnalysisArgs {
    /// TOML hardware profile with `macs_per_cycle`, `clock_hz`, `sram_bytes`.
    #[arg(long)]
    pub hw: Option<PathBuf>,
    /// Speedup anchor overrides, one `structure sparsity factor` per line.
    #[arg(long)]
    pub anchors: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Enhance a mono WAV file.
    Enhance {
        #[arg(short, long)]
        model: PathBuf,
        #[arg(short, long)]
        input: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Prune a model to a target sparsity or an explicit per-layer plan.
    Prune {
        #[arg(short, long)]
        model: PathBuf,
        #[arg(long, value_enum)]
        structure: StructureArg,
        /// Overall sparsity target in [0, 1).
        #[arg(long, required_unless_present = "plan", conflicts_with = "plan")]
        target: Option<f64>,
        /// Per-layer sparsities, e.g. `0.5,0.6,0.3,0`.
        #[arg(long, value_delimiter = ',')]
        plan: Option<Vec<f64>>,
        #[arg(short, long)]
        output: PathBuf,
        #[arg(long)]
        report: Option<PathBuf>,
        #[command(flatten)]
        analysis: AnalysisArgs,
    },
    /// Search per-layer sparsity plans on an evaluation set.
    Search {
        #[arg(short, long)]
        model: PathBuf,
        #[arg(long, value_enum)]
        structure: StructureArg,
        #[arg(long)]
        target: f64,
        /// Directory with `clean/` and `noisy/` WAV subdirectories.
        #[arg(long)]
        eval_dir: PathBuf,
        /// CSV with externally computed STOI and PESQ.
        #[arg(long)]
        metrics: Option<PathBuf>,
        /// Write the winning pruned model here.
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// Write the JSON search report here instead of stdout.
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long, env = "MICROSE_THREADS")]
        threads: Option<usize>,
        #[command(flatten)]
        analysis: AnalysisArgs,
    },
    /// Footprint, speedup and constraint report for a model.
    Report {
        #[arg(short, long)]
        model: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
        #[command(flatten)]
        analysis: AnalysisArgs,
    },
    /// Write a layer's sparsity pattern as a PGM image.
    Render {
        #[arg(short, long)]
        model: PathBuf,
        /// `lstm1`, `lstm2`, `dense1` or `dense2`.
        #[arg(long)]
        layer: String,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Write a reproducible random model.
    Toy {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// `mel,lstm1,lstm2,dense1` sizes.
        #[arg(long, value_delimiter = ',', conflicts_with = "full")]
        dims: Option<Vec<usize>>,
        /// Use the full-size 128-256-256-128 architecture.
        #[arg(long)]
        full: bool,
        /// A fixed band-pass mask model `low_hz,high_hz` instead of random weights.
        #[arg(long, value_delimiter = ',')]
        band_pass: Option<Vec<f64>>,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Print the weight hash, optionally writing or checking the sidecar.
    Hash {
        #[arg(short, long)]
        model: PathBuf,
        #[arg(long, conflicts_with = "check")]
        write_sidecar: bool,
        /// Compare against the `.sha256` sidecar; exit 2 on mismatch.
        #[arg(long)]
        check: bool,
    },
    /// Write the quantization golden vectors.
    Golden {
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match execute(cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn read_text(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| io_err(path, e))
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    std::fs::write(path, bytes).map_err(|e| io_err(path, e))
}

fn print_stdout(text: &str) -> Result<(), CliError> {
    use std::io::Write;
    match std::io::stdout().lock().write_all(text.as_bytes()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(CliError::Usage(format!("stdout: {e}"))),
        _ => Ok(()),
    }
}

fn emit_json<T: serde::Serialize>(value: &T, path: Option<&Path>) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).expect("report serializes");
    text.push('\n');
    match path {
        Some(p) => write_bytes(p, text.as_bytes()),
        None => {
            print_stdout(&text)
        }
    }
}

fn load_analysis(a: &AnalysisArgs) -> Result<(HwProfile, SpeedupModel), CliError> {
    let hw = match &a.hw {
        Some(p) => {
            let h: HwJson = toml::from_str(&read_text(p)?).map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?;
            let h: HwProfile = h.into();
            h.validate()?;
            h
        }
        None => HwProfile::REFERENCE,
    };
    let speedup = match &a.anchors {
        Some(p) => SpeedupModel::default().with_overrides(&read_text(p)?)?,
        None => SpeedupModel::default(),
    };
    Ok((hw, speedup))
}

fn permille(f: f64) -> Result<u16, CliError> {
    let p = (f * 1000.0).round();
    if !(0.0..1000.0).contains(&p) || (p - f * 1000.0).abs() > 1e-6 {
        return Err(CliError::Usage(format!("plan sparsity {f} must be a multiple of 0.001 in [0, 1)")));
    }
    Ok(p as u16)
}

/// The feasible plan closest to uniform: smallest largest deviation of a
/// prunable layer from the target, then lexicographically smallest.
pub fn most_uniform(plans: &[SparsityPlan], target: f64) -> Option<&SparsityPlan> {
    let t = (target * 1000.0).round() as i32;
    let dev = |p: &SparsityPlan| {
        let n = if p.structure == SparsityStructure::Unit { p.levels.len() - 1 } else { p.levels.len() };
        p.levels[..n].iter().map(|&l| (l as i32 - t).abs()).max().unwrap_or(0)
    };
    plans.iter().min_by(|a, b| dev(a).cmp(&dev(b)).then_with(|| a.levels.cmp(&b.levels)))
}

fn execute(cmd: Command) -> Result<(), CliError> {
    match cmd {
        Command::Enhance { model, input, output } => {
            let m = container::load(&model)?;
            let audio = wav::read(&input)?;
            let out = enhance(&m, &audio.samples, audio.sample_rate)?;
            wav::write(
                &output,
                &wav::Audio {
                    sample_rate: audio.sample_rate,
                    samples: out,
                },
            )?;
            Ok(())
        }
        Command::Prune {
            model,
            structure,
            target,
            plan,
            output,
            report: report_path,
            analysis,
        } => {
            let (hw, speedup) = load_analysis(&analysis)?;
            let m = container::load(&model)?;
            let structure: SparsityStructure = structure.into();
            let (chosen, candidates) = match (target, plan) {
                (_, Some(levels)) => {
                    if levels.len() != LayerId::ALL.len() {
                        return Err(CliError::Usage(format!("a plan needs {} sparsities", LayerId::ALL.len())));
                    }
                    let levels = levels.into_iter().map(permille).collect::<Result<Vec<_>, _>>()?;
                    (SparsityPlan::new(structure, levels), Vec::new())
                }
                (Some(t), None) => {
                    let space = PlanSpace::for_model(&m, structure)?;
                    let plans = enumerate_plans(&space, t)?;
                    let best = most_uniform(&plans, t).ok_or(Error::Infeasible)?.clone();
                    (best, plans)
                }
                (None, None) => return Err(CliError::Usage("either --target or --plan is required".into())),
            };
            let (pruned, applied) = prune_model(&m, &chosen)?;
            container::save(&pruned, &output)?;
            let rep = PruneReportJson {
                structure: structure.name().to_string(),
                target,
                layers: report::layer_names(),
                candidates: candidates.iter().map(PlanJson::from).collect(),
                chosen: (&applied).into(),
                model: report::model_report(&pruned, &hw, &speedup)?,
            };
            emit_json(&rep, report_path.as_deref())
        }
        Command::Search {
            model,
            structure,
            target,
            eval_dir,
            metrics,
            output,
            report: report_path,
            threads,
            analysis,
        } => {
            let (hw, speedup) = load_analysis(&analysis)?;
            let m = container::load(&model)?;
            let set = eval::load_eval_dir(&eval_dir)?;
            if let Some(u) = set.iter().find(|u| u.sample_rate != m.dsp.sample_rate) {
                return Err(Error::SampleRateMismatch {
                    model: m.dsp.sample_rate,
                    input: u.sample_rate,
                }
                .into());
            }
            let table = match &metrics {
                Some(p) => Some(MetricTable::from_csv(&read_text(p)?).map_err(CliError::from)?),
                None => None,
            };
            let evaluate = |p: &SparsityPlan, pm: &SeModel| eval::evaluate_model(pm, p, &set, table.as_ref());
            let threads = threads.filter(|&n| n > 0);
            let rep = eval::parallel_search(&m, target, structure.into(), &speedup, &evaluate, threads)?;
            let (pruned, _) = prune_model(&m, &rep.best().plan)?;
            if let Some(o) = &output {
                container::save(&pruned, o)?;
            }
            emit_json(&report::search_report(&rep, &pruned, &hw, &speedup)?, report_path.as_deref())
        }
        Command::Report { model, output, analysis } => {
            let (hw, speedup) = load_analysis(&analysis)?;
            let m = container::load(&model)?;
            emit_json(&report::model_report(&m, &hw, &speedup)?, output.as_deref())
        }
        Command::Render { model, layer, output } => {
            let id = LayerId::parse(&layer).ok_or_else(|| CliError::Usage(format!("unknown layer {layer:?}")))?;
            let m = container::load(&model)?;
            write_bytes(&output, &render::render_layer(&m, id))
        }
        Command::Toy {
            seed,
            dims,
            full,
            band_pass,
            output,
        } => {
            let dims = match (dims, full) {
                (_, true) => ModelDims::FULL,
                (Some(d), false) => match d[..] {
                    [mel_bins, a, b, dense_hidden] => ModelDims {
                        mel_bins,
                        lstm_hidden: [a, b],
                        dense_hidden,
                    },
                    _ => return Err(CliError::Usage("--dims needs four sizes".into())),
                },
                (None, false) => microse_core::toy::TOY_DIMS,
            };
            let dsp = DspConfig {
                mel_bins: dims.mel_bins,
                ..DspConfig::default()
            };
            let m = match band_pass {
                Some(b) => match b[..] {
                    [lo, hi] => microse_core::toy::band_pass_model(dims, dsp, lo, hi)?,
                    _ => return Err(CliError::Usage("--band-pass needs low,high".into())),
                },
                None => microse_core::toy::random_model(&mut ChaCha8Rng::seed_from_u64(seed), dims, dsp)?,
            };
            container::save(&m, &output)?;
            Ok(())
        }
        Command::Hash {
            model,
            write_sidecar,
            check,
        } => {
            let m = container::load(&model)?;
            let h = hash::weight_hash(&m);
            let side = hash::sidecar_path(&model);
            if write_sidecar {
                write_bytes(&side, hash::sidecar_line(&h, &model).as_bytes())?;
            }
            if check {
                let stored = hash::parse_sidecar(&read_text(&side)?)
                    .ok_or_else(|| CliError::Mismatch(format!("{}: no digest", side.display())))?;
                if stored != h {
                    return Err(CliError::Mismatch(format!("weight hash {h} does not match sidecar {stored}")));
                }
            }
            print_stdout(&format!("{h}\n"))
        }
        Command::Golden { output } => {
            let text = golden::render();
            match output {
                Some(p) => write_bytes(&p, text.as_bytes()),
                None => {
                    print_stdout(&text)
                }
            }
        }
    }
}
