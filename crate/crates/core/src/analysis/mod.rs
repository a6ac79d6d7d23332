//! Quality metrics, the speedup and footprint estimators and the
//! deployability checks.

pub mod constraints;
pub mod footprint;
pub mod metrics;
pub mod speedup;

pub use constraints::{validate_constraints, ConstraintReport, HwProfile, AUDIO_LATENCY_BUDGET_MS};
pub use footprint::{estimate_footprint, Footprint, Precision, KIB, MIB};
pub use metrics::{psa_loss, q_score, sdr, si_sdr, Metrics, QMode, SI_SDR_CAP_DB};
pub use speedup::{estimate_speedup, SpeedupModel};
