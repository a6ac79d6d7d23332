//! Offline magnitude pruning and the per-layer sparsity search.

pub mod groups;
pub mod plan;
pub mod prune;
pub mod search;

pub use groups::{group_weights, layer_groups, GroupCoord, GroupScore, ParamRef};
pub use plan::{enumerate_plans, layer_cap, PlanSpace, SparsityPlan, LEVELS, STEP};
pub use prune::{group_count, plan_masks, prune_layer, prune_layer_count, prune_model, LayerMask};
pub use search::{assemble_report, evaluate_plan, search, PlanEvaluation, SearchReport};
