//! Per-layer sparsity plans and their enumeration.
//!
//! Levels are integers in permille. The search grid is `0, 100, ..., 900`
//! plus `950` when the per-layer cap allows it. A plan meets a target `t`
//! when its overall sparsity lies in `[t, t + 0.1)`. Each layer may exceed
//! the target by at most 0.2, and by no more than 0.95 in total when
//! `t >= 0.8`. The window test uses exact integer arithmetic.
//!
//! Overall sparsity is the fraction of all parameters that are not stored.
//! For a concrete model the counts come from actually pruning each layer at
//! each level, so they include weights that were zero to begin with and,
//! under `Unit`, the input columns removed by the upstream layer.

use alloc::vec;
use alloc::vec::Vec;

use super::prune::{apply_layer_mask, group_count, prune_layer_count, LayerMask};
use crate::engine::{LayerId, SeModel};
use crate::sparse::SparsityStructure;
use crate::Error;

/// Candidate per-layer levels, in permille.
pub const LEVELS: [u16; 11] = [0, 100, 200, 300, 400, 500, 600, 700, 800, 900, 950];

/// Search step in permille.
pub const STEP: u16 = 100;

/// Per-layer sparsity levels for one structure.
#[derive(Debug, Clone, PartialEq)]
pub struct SparsityPlan {
    pub structure: SparsityStructure,
    /// Permille per layer, in layer order.
    pub levels: Vec<u16>,
    /// Measured fraction of pruned parameters; `NaN` until known.
    pub overall: f64,
}

impl SparsityPlan {
    pub fn new(structure: SparsityStructure, levels: Vec<u16>) -> Self {
        SparsityPlan {
            structure,
            levels,
            overall: f64::NAN,
        }
    }

    pub fn fractions(&self) -> Vec<f64> {
        self.levels.iter().map(|&l| l as f64 / 1000.0).collect()
    }

    pub fn validate(&self) -> Result<(), Error> {
        self.structure.validate()?;
        if self.levels.iter().any(|&l| l >= 1000) {
            return Err(Error::InvalidPlan("layer sparsity must be below 1"));
        }
        if self.structure == SparsityStructure::Unit && self.levels.last().is_some_and(|&l| l != 0) {
            return Err(Error::FinalLayerUnitPruning);
        }
        Ok(())
    }
}

/// Largest per-layer level allowed for target `t` (permille).
pub fn layer_cap(target: u16) -> u16 {
    let cap = target + 200;
    if target >= 800 {
        cap.min(950)
    } else {
        cap
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Counts {
    /// Pruned parameters are exactly `level * params / 1000`.
    Proportional(Vec<u64>),
    /// Pruned count per layer and level index.
    Independent(Vec<[u64; LEVELS.len()]>),
    /// Pruned count per layer, upstream level index and level index.
    Chained(Vec<Vec<[u64; LEVELS.len()]>>),
}

/// How many parameters each combination of levels prunes.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanSpace {
    pub structure: SparsityStructure,
    /// Parameters per layer.
    pub params: Vec<u64>,
    counts: Counts,
}

fn level_index(level: u16) -> Option<usize> {
    LEVELS.iter().position(|&l| l == level)
}

impl PlanSpace {
    /// Idealised space where a layer at level `s` prunes exactly the `s`
    /// fraction of its parameters.
    pub fn proportional(params: &[usize], structure: SparsityStructure) -> Self {
        let params: Vec<u64> = params.iter().map(|&p| p as u64).collect();
        PlanSpace {
            structure,
            counts: Counts::Proportional(params.clone()),
            params,
        }
    }

    /// Exact counts for `model`, obtained by pruning every layer at every
    /// grid level.
    pub fn for_model(model: &SeModel, structure: SparsityStructure) -> Result<Self, Error> {
        structure.validate()?;
        model.validate()?;
        let params = LayerId::ALL
            .iter()
            .map(|&l| model.layer_param_count(l) as u64)
            .collect();
        let mut scratch = model.clone();
        let mut count = |layer: LayerId, level: u16, upstream: Option<&[bool]>| -> Result<(u64, LayerMask), Error> {
            if structure == SparsityStructure::Unit && layer.is_final() && level > 0 {
                return Ok((u64::MAX, LayerMask { matrices: Vec::new(), units: None }));
            }
            let n = group_count(model, layer, structure) * level as usize / 1000;
            let mut mask = prune_layer_count(model, layer, structure, n)?;
            let plain = mask.clone();
            if let Some(up) = upstream {
                mask.drop_inputs(layer, up);
            }
            apply_layer_mask(model, layer, structure, &mask, &mut scratch)?;
            Ok((scratch.layer_pruned_count(layer) as u64, plain))
        };
        let counts = if structure == SparsityStructure::Unit {
            let mut chained = Vec::new();
            let mut upstream_units: Vec<Option<Vec<bool>>> = vec![None];
            for layer in LayerId::ALL {
                let mut table = Vec::new();
                let mut own_units = Vec::new();
                for up in &upstream_units {
                    let mut row = [u64::MAX; LEVELS.len()];
                    for (j, &level) in LEVELS.iter().enumerate() {
                        let (c, mask) = count(layer, level, up.as_deref())?;
                        row[j] = c;
                        if own_units.len() < LEVELS.len() {
                            own_units.push(mask.units);
                        }
                    }
                    table.push(row);
                }
                chained.push(table);
                upstream_units = own_units;
            }
            Counts::Chained(chained)
        } else {
            let mut tables = Vec::new();
            for layer in LayerId::ALL {
                let mut row = [0u64; LEVELS.len()];
                for (j, &level) in LEVELS.iter().enumerate() {
                    row[j] = count(layer, level, None)?.0;
                }
                tables.push(row);
            }
            Counts::Independent(tables)
        };
        Ok(PlanSpace {
            structure,
            params,
            counts,
        })
    }

    pub fn layers(&self) -> usize {
        self.params.len()
    }

    pub fn total(&self) -> u64 {
        self.params.iter().sum()
    }

    /// Pruned parameters times 1000, or `None` for levels off the grid or
    /// forbidden by the structure.
    pub fn pruned_millis(&self, levels: &[u16]) -> Option<u128> {
        if levels.len() != self.layers() {
            return None;
        }
        match &self.counts {
            Counts::Proportional(p) => {
                if self.structure == SparsityStructure::Unit && *levels.last()? != 0 {
                    return None;
                }
                Some(levels.iter().zip(p).map(|(&l, &n)| l as u128 * n as u128).sum())
            }
            Counts::Independent(t) => levels
                .iter()
                .zip(t)
                .map(|(&l, row)| level_index(l).map(|j| row[j] as u128 * 1000))
                .sum(),
            Counts::Chained(t) => {
                let mut sum = 0u128;
                let mut up = 0;
                for (&l, table) in levels.iter().zip(t) {
                    let j = level_index(l)?;
                    let c = table[up.min(table.len() - 1)][j];
                    if c == u64::MAX {
                        return None;
                    }
                    sum += c as u128 * 1000;
                    up = j;
                }
                Some(sum)
            }
        }
    }

    /// Overall sparsity of `levels`.
    pub fn overall(&self, levels: &[u16]) -> Option<f64> {
        let total = self.total();
        if total == 0 {
            return None;
        }
        self.pruned_millis(levels)
            .map(|m| m as f64 / (1000.0 * total as f64))
    }

    /// Whether `levels` lies in the `[target, target + step)` window.
    pub fn in_window(&self, levels: &[u16], target: u16) -> bool {
        let total = self.total() as u128;
        match self.pruned_millis(levels) {
            Some(m) => m >= target as u128 * total && m < (target + STEP) as u128 * total,
            None => false,
        }
    }
}

/// Convert a target fraction to permille.
pub fn target_permille(target: f64) -> Result<u16, Error> {
    if !(0.0..1.0).contains(&target) {
        return Err(Error::InvalidSparsity(target));
    }
    let t = libm::round(target * 1000.0);
    if libm::fabs(t - target * 1000.0) > 1e-6 {
        return Err(Error::InvalidSparsity(target));
    }
    Ok(t as u16)
}

/// All grid plans meeting `target`, in lexicographic level order. A
/// target of zero yields only the unpruned plan. The list is empty when no
/// combination satisfies the caps and the window.
pub fn enumerate_plans(space: &PlanSpace, target: f64) -> Result<Vec<SparsityPlan>, Error> {
    let t = target_permille(target)?;
    let n = space.layers();
    let mk = |levels: Vec<u16>| {
        let overall = space.overall(&levels).unwrap_or(f64::NAN);
        SparsityPlan {
            structure: space.structure,
            levels,
            overall,
        }
    };
    if t == 0 {
        return Ok(vec![mk(vec![0; n])]);
    }
    let cap = layer_cap(t);
    let allowed: Vec<u16> = LEVELS.iter().copied().filter(|&l| l <= cap).collect();
    let mut out = Vec::new();
    let mut idx = vec![0usize; n];
    if n == 0 {
        return Ok(out);
    }
    loop {
        let levels: Vec<u16> = idx.iter().map(|&i| allowed[i]).collect();
        let final_ok = space.structure != SparsityStructure::Unit || levels[n - 1] == 0;
        if final_ok && space.in_window(&levels, t) {
            out.push(mk(levels));
        }
        let mut k = n;
        loop {
            if k == 0 {
                return Ok(out);
            }
            k -= 1;
            idx[k] += 1;
            if idx[k] < allowed.len() {
                break;
            }
            idx[k] = 0;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::DspConfig;
    use crate::engine::ModelDims;
    use crate::toy::random_model;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn levels(plans: &[SparsityPlan]) -> Vec<Vec<u16>> {
        plans.iter().map(|p| p.levels.clone()).collect()
    }

    #[test]
    fn two_equal_layers_at_half() {
        let space = PlanSpace::proportional(&[1000, 1000], SparsityStructure::Weight);
        let got = levels(&enumerate_plans(&space, 0.5).unwrap());
        for want in [[500, 500], [400, 600], [600, 400], [400, 700], [700, 400], [500, 600]] {
            assert!(got.contains(&want.to_vec()), "{want:?}");
        }
        assert!(!got.contains(&vec![300, 600]));
        // Independent oracle: every pair of grid levels up to the cap.
        let mut oracle = Vec::new();
        for a in (0..=700).step_by(100) {
            for b in (0..=700).step_by(100) {
                let overall = (a + b) as f64 / 2000.0;
                if (0.5..0.6 - 1e-12).contains(&overall) {
                    oracle.push(vec![a as u16, b as u16]);
                }
            }
        }
        assert_eq!(got, oracle);
    }

    #[test]
    fn high_targets_cap_at_ninety_five() {
        let space = PlanSpace::proportional(&[300, 500, 100, 100], SparsityStructure::block());
        let plans = enumerate_plans(&space, 0.9).unwrap();
        assert!(!plans.is_empty());
        assert!(plans.iter().all(|p| p.levels.iter().all(|&l| l <= 950)));
        assert!(plans.iter().any(|p| p.levels.contains(&950)));
        assert_eq!(layer_cap(700), 900);
        assert_eq!(layer_cap(800), 950);
    }

    #[test]
    fn single_layer() {
        let space = PlanSpace::proportional(&[777], SparsityStructure::Weight);
        assert_eq!(levels(&enumerate_plans(&space, 0.3).unwrap()), vec![vec![300]]);
    }

    #[test]
    fn zero_target_is_the_unpruned_plan() {
        let space = PlanSpace::proportional(&[5, 5, 5, 5], SparsityStructure::Unit);
        assert_eq!(levels(&enumerate_plans(&space, 0.0).unwrap()), vec![vec![0; 4]]);
        assert!(enumerate_plans(&space, 1.0).is_err());
        assert!(enumerate_plans(&space, 0.1234).is_err());
    }

    #[test]
    fn unit_plans_never_touch_the_final_layer() {
        let space = PlanSpace::proportional(&[100, 100, 100, 100], SparsityStructure::Unit);
        let plans = enumerate_plans(&space, 0.5).unwrap();
        assert!(!plans.is_empty());
        assert!(plans.iter().all(|p| p.levels[3] == 0));
    }

    #[test]
    fn infeasible_targets_give_no_plans() {
        // With one tiny unprunable final layer and caps, 0.9 cannot be met
        // by three layers capped at 0.95 when the final layer dominates.
        let space = PlanSpace::proportional(&[10, 10, 10, 1000], SparsityStructure::Unit);
        assert!(enumerate_plans(&space, 0.9).unwrap().is_empty());
    }

    #[test]
    fn model_counts_match_measured_sparsity() {
        let dsp = DspConfig {
            frame_size: 64,
            hop_size: 32,
            ..DspConfig::default()
        };
        let dims = ModelDims {
            mel_bins: 8,
            lstm_hidden: [16, 8],
            dense_hidden: 16,
        };
        let model = random_model(&mut ChaCha8Rng::seed_from_u64(11), dims, dsp).unwrap();
        for s in [SparsityStructure::Weight, SparsityStructure::block(), SparsityStructure::Unit] {
            let space = PlanSpace::for_model(&model, s).unwrap();
            for target in [0.3, 0.5, 0.8] {
                let plans = enumerate_plans(&space, target).unwrap();
                assert!(!plans.is_empty(), "{s:?} {target}");
                for plan in plans.iter().step_by(7) {
                    let (pruned, recorded) = super::super::prune::prune_model(&model, plan).unwrap();
                    let pruned_params: usize = LayerId::ALL.iter().map(|&l| pruned.layer_pruned_count(l)).sum();
                    assert_eq!(pruned_params as u128 * 1000, space.pruned_millis(&plan.levels).unwrap());
                    assert_eq!(recorded.overall, plan.overall);
                    assert!(recorded.overall >= target && recorded.overall < target + 0.1);
                }
            }
        }
    }
}
