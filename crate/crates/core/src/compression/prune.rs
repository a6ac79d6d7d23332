//! Offline magnitude pruning of a quantized model.
//!
//! Within a layer the `n` lowest-L1 groups are removed, ties going to the
//! lower group coordinate. Masks are applied to the quantized weights and
//! every matrix is re-encoded in the sparse format of the structure.
//!
//! Under `Unit`, removing unit `k` of a layer also removes everything that
//! only ever reads its output: column `k` of the recurrent matrices of the
//! same LSTM layer and column `k` of the next layer's input matrices. The
//! bias entries of a removed unit are zeroed, so its output is exactly zero
//! and the removed columns never contributed.

use alloc::vec;
use alloc::vec::Vec;

use super::groups::{layer_groups, GroupCoord};
use super::plan::SparsityPlan;
use crate::engine::{LayerId, SeModel};
use crate::sparse::{LayerMatrix, PruneMask, SparseMatrix, SparsityStructure};
use crate::Error;

/// Keep masks for one layer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerMask {
    /// One mask per matrix, in [`SeModel::layer_matrices`] order.
    pub matrices: Vec<PruneMask>,
    /// Surviving output units, for `Unit` only.
    pub units: Option<Vec<bool>>,
}

impl LayerMask {
    fn full(model: &SeModel, layer: LayerId) -> Self {
        LayerMask {
            matrices: model
                .layer_matrices(layer)
                .iter()
                .map(|m| PruneMask::all(m.rows(), m.cols(), true))
                .collect(),
            units: None,
        }
    }

    /// Prune the input columns whose upstream unit was removed.
    pub(crate) fn drop_inputs(&mut self, layer: LayerId, upstream: &[bool]) {
        let inputs = match layer {
            LayerId::Lstm1 | LayerId::Lstm2 => &mut self.matrices[..4],
            LayerId::Dense1 | LayerId::Dense2 => &mut self.matrices[..],
        };
        for m in inputs {
            for (c, _) in upstream.iter().enumerate().filter(|(_, &k)| !k) {
                m.prune_col(c);
            }
        }
    }
}

/// Number of groups of `layer` under `structure`.
pub fn group_count(model: &SeModel, layer: LayerId, structure: SparsityStructure) -> usize {
    match structure {
        SparsityStructure::Unit => model.layer_matrices(layer)[0].rows(),
        SparsityStructure::Weight => model.layer_matrices(layer).iter().map(|m| m.len()).sum(),
        SparsityStructure::Block { width } => model
            .layer_matrices(layer)
            .iter()
            .map(|m| m.rows() * m.cols().div_ceil(width))
            .sum(),
    }
}

/// Groups removed at `sparsity`: `floor(sparsity * groups)`.
pub fn groups_to_prune(groups: usize, sparsity: f64) -> Result<usize, Error> {
    if !(0.0..1.0).contains(&sparsity) {
        return Err(Error::InvalidSparsity(sparsity));
    }
    Ok(libm::floor(sparsity * groups as f64 + 1e-9) as usize)
}

/// Mask removing the `sparsity` fraction of lowest-L1 groups of `layer`.
pub fn prune_layer(
    model: &SeModel,
    layer: LayerId,
    structure: SparsityStructure,
    sparsity: f64,
) -> Result<LayerMask, Error> {
    structure.validate()?;
    let count = groups_to_prune(group_count(model, layer, structure), sparsity)?;
    prune_layer_count(model, layer, structure, count)
}

/// Mask removing exactly `count` lowest-L1 groups of `layer`.
pub fn prune_layer_count(
    model: &SeModel,
    layer: LayerId,
    structure: SparsityStructure,
    count: usize,
) -> Result<LayerMask, Error> {
    structure.validate()?;
    if structure == SparsityStructure::Unit && layer.is_final() && count > 0 {
        return Err(Error::FinalLayerUnitPruning);
    }
    let mut groups = layer_groups(model, layer, structure);
    if count > groups.len() {
        return Err(Error::InvalidPlan("more groups than the layer has"));
    }
    groups.sort_by(|a, b| a.l1.total_cmp(&b.l1).then(a.coord.cmp(&b.coord)));
    let mut mask = LayerMask::full(model, layer);
    if structure == SparsityStructure::Unit {
        mask.units = Some(vec![true; groups.len()]);
    }
    for g in &groups[..count] {
        match g.coord {
            GroupCoord::Weight { matrix, row, col } => {
                mask.matrices[matrix as usize].set(row as usize, col as usize, false);
            }
            GroupCoord::Block { matrix, row, block } => {
                let m = &mut mask.matrices[matrix as usize];
                let width = structure.block_w(m.cols());
                let start = block as usize * width;
                for c in start..(start + width).min(m.cols()) {
                    m.set(row as usize, c, false);
                }
            }
            GroupCoord::Unit { unit } => {
                let k = unit as usize;
                for m in mask.matrices.iter_mut() {
                    m.prune_row(k);
                }
                if matches!(layer, LayerId::Lstm1 | LayerId::Lstm2) {
                    for m in &mut mask.matrices[4..] {
                        m.prune_col(k);
                    }
                }
                if let Some(units) = mask.units.as_mut() {
                    units[k] = false;
                }
            }
        }
    }
    Ok(mask)
}

/// Masks for every layer of a plan, with unit removals propagated to the
/// downstream input columns.
pub fn plan_masks(model: &SeModel, plan: &SparsityPlan) -> Result<Vec<LayerMask>, Error> {
    plan.validate()?;
    let mut masks: Vec<LayerMask> = Vec::with_capacity(LayerId::ALL.len());
    for (i, layer) in LayerId::ALL.into_iter().enumerate() {
        let n = group_count(model, layer, plan.structure);
        let count = n * plan.levels[i] as usize / 1000;
        let mut mask = prune_layer_count(model, layer, plan.structure, count)?;
        if let Some(up) = i.checked_sub(1).and_then(|j| masks[j].units.clone()) {
            mask.drop_inputs(layer, &up);
        }
        masks.push(mask);
    }
    Ok(masks)
}

/// Replace the matrices of `layer` in `out` with encodings of the weights
/// of `model` under `mask`, zeroing biases of removed units.
pub(crate) fn apply_layer_mask(
    model: &SeModel,
    layer: LayerId,
    structure: SparsityStructure,
    mask: &LayerMask,
    out: &mut SeModel,
) -> Result<(), Error> {
    let encoded = model
        .layer_matrices(layer)
        .iter()
        .zip(&mask.matrices)
        .map(|(m, k)| SparseMatrix::encode(&m.to_dense_tensor(), k, structure).map(LayerMatrix::Sparse))
        .collect::<Result<Vec<_>, _>>()?;
    let mut biases: Vec<Vec<i16>> = model.layer_biases(layer).iter().map(|b| b.to_vec()).collect();
    if let Some(units) = &mask.units {
        for b in biases.iter_mut() {
            for (v, _) in b.iter_mut().zip(units).filter(|(_, &k)| !k) {
                *v = 0;
            }
        }
    }
    let mut encoded = encoded.into_iter();
    let mut biases = biases.into_iter();
    match layer {
        LayerId::Lstm1 | LayerId::Lstm2 => {
            let l = &mut out.lstm[layer.index()];
            for slot in l.w_x.iter_mut().chain(l.w_h.iter_mut()) {
                *slot = encoded.next().expect("eight matrices");
            }
            for slot in l.bias.iter_mut() {
                *slot = biases.next().expect("four biases");
            }
        }
        LayerId::Dense1 | LayerId::Dense2 => {
            let d = &mut out.dense[layer.index() - 2];
            d.weights = encoded.next().expect("one matrix");
            d.bias = biases.next().expect("one bias");
        }
    }
    Ok(())
}

/// Prune every layer per `plan` and re-encode the whole model. The
/// returned plan carries the measured overall sparsity.
pub fn prune_model(model: &SeModel, plan: &SparsityPlan) -> Result<(SeModel, SparsityPlan), Error> {
    model.validate()?;
    let masks = plan_masks(model, plan)?;
    let mut out = model.clone();
    for (layer, mask) in LayerId::ALL.into_iter().zip(&masks) {
        apply_layer_mask(model, layer, plan.structure, mask, &mut out)?;
    }
    out.validate()?;
    let recorded = SparsityPlan {
        overall: out.sparsity(),
        ..plan.clone()
    };
    Ok((out, recorded))
}
