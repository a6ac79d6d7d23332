//! Weight grouping and L1 group scores.
//!
//! * `Weight`: one group per matrix entry.
//! * `Block`: one group per `1 x width` run of a matrix row.
//! * `Unit`: one group per output neuron. For dense layers that is a row of
//!   the weight matrix plus its bias. For LSTM layers unit `k` owns row `k`
//!   of all eight gate matrices and the four bias entries at `k`; its score
//!   also includes column `k` of the four recurrent matrices, because those
//!   weights only ever multiply `h[k]` and become dead once the unit is
//!   removed.
//!
//! Weight and block groups partition the weight matrices; biases are not
//! grouped and never pruned under those structures. Unit groups partition
//! every parameter of the layer.

use alloc::vec::Vec;

use crate::engine::{LayerId, SeModel};
use crate::quant::dequantize;
use crate::sparse::SparsityStructure;

/// Position of a group inside its layer. The derived order is the
/// deterministic tie-break when scores are equal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum GroupCoord {
    Weight { matrix: u8, row: u16, col: u16 },
    Block { matrix: u8, row: u16, block: u16 },
    Unit { unit: u16 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroupScore {
    pub layer: LayerId,
    pub coord: GroupCoord,
    /// Sum of absolute dequantized values.
    pub l1: f64,
}

/// One parameter of a layer: a matrix entry (`matrix` in `0..8` for LSTMs,
/// `0` for dense layers) or a bias entry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ParamRef {
    Weight { matrix: u8, row: u16, col: u16 },
    Bias { vector: u8, index: u16 },
}

/// Number of gate matrices sharing the unit rows of a layer.
fn row_matrices(layer: LayerId) -> usize {
    match layer {
        LayerId::Lstm1 | LayerId::Lstm2 => 8,
        LayerId::Dense1 | LayerId::Dense2 => 1,
    }
}

/// Groups of one layer, in coordinate order.
pub fn layer_groups(model: &SeModel, layer: LayerId, structure: SparsityStructure) -> Vec<GroupScore> {
    let matrices = model.layer_matrices(layer);
    let fmt = model.layer_format(layer);
    let dense: Vec<Vec<i16>> = matrices.iter().map(|m| m.decode()).collect();
    let abs = |v: i16| libm::fabs(dequantize(v as i32, fmt));
    let mut out = Vec::new();
    match structure {
        SparsityStructure::Weight => {
            for (mi, (m, data)) in matrices.iter().zip(&dense).enumerate() {
                for r in 0..m.rows() {
                    for c in 0..m.cols() {
                        out.push(GroupScore {
                            layer,
                            coord: GroupCoord::Weight {
                                matrix: mi as u8,
                                row: r as u16,
                                col: c as u16,
                            },
                            l1: abs(data[r * m.cols() + c]),
                        });
                    }
                }
            }
        }
        SparsityStructure::Block { width } => {
            for (mi, (m, data)) in matrices.iter().zip(&dense).enumerate() {
                let cols = m.cols();
                for r in 0..m.rows() {
                    for (b, start) in (0..cols).step_by(width).enumerate() {
                        let end = (start + width).min(cols);
                        out.push(GroupScore {
                            layer,
                            coord: GroupCoord::Block {
                                matrix: mi as u8,
                                row: r as u16,
                                block: b as u16,
                            },
                            l1: data[r * cols + start..r * cols + end].iter().map(|&v| abs(v)).sum(),
                        });
                    }
                }
            }
        }
        SparsityStructure::Unit => {
            let biases = model.layer_biases(layer);
            let units = matrices[0].rows();
            let is_lstm = row_matrices(layer) == 8;
            for k in 0..units {
                let mut l1 = 0.0;
                for (m, data) in matrices.iter().zip(&dense) {
                    let cols = m.cols();
                    l1 += data[k * cols..(k + 1) * cols].iter().map(|&v| abs(v)).sum::<f64>();
                }
                if is_lstm {
                    for data in &dense[4..] {
                        l1 += (0..units)
                            .filter(|&r| r != k)
                            .map(|r| abs(data[r * units + k]))
                            .sum::<f64>();
                    }
                }
                l1 += biases.iter().map(|b| abs(b[k])).sum::<f64>();
                out.push(GroupScore {
                    layer,
                    coord: GroupCoord::Unit { unit: k as u16 },
                    l1,
                });
            }
        }
    }
    out
}

/// Groups for every layer, indexed by [`LayerId::index`].
pub fn group_weights(model: &SeModel, structure: SparsityStructure) -> Vec<Vec<GroupScore>> {
    LayerId::ALL
        .iter()
        .map(|&l| layer_groups(model, l, structure))
        .collect()
}

/// Parameters owned by one group.
pub fn group_members(model: &SeModel, layer: LayerId, coord: GroupCoord) -> Vec<ParamRef> {
    let matrices = model.layer_matrices(layer);
    match coord {
        GroupCoord::Weight { matrix, row, col } => {
            alloc::vec![ParamRef::Weight { matrix, row, col }]
        }
        GroupCoord::Block { matrix, row, block } => {
            let m = matrices[matrix as usize];
            let width = match model.layer_matrices(layer)[matrix as usize].structure() {
                Some(SparsityStructure::Block { width }) => width,
                _ => crate::sparse::DEFAULT_BLOCK_WIDTH,
            };
            block_members(matrix, row, block, width, m.cols())
        }
        GroupCoord::Unit { unit } => {
            let mut out = Vec::new();
            for (mi, m) in matrices.iter().enumerate() {
                for c in 0..m.cols() {
                    out.push(ParamRef::Weight {
                        matrix: mi as u8,
                        row: unit,
                        col: c as u16,
                    });
                }
            }
            for v in 0..model.layer_biases(layer).len() {
                out.push(ParamRef::Bias {
                    vector: v as u8,
                    index: unit,
                });
            }
            out
        }
    }
}

/// Members of a block group for an explicit block width.
pub fn block_members(matrix: u8, row: u16, block: u16, width: usize, cols: usize) -> Vec<ParamRef> {
    let start = block as usize * width;
    (start..(start + width).min(cols))
        .map(|c| ParamRef::Weight {
            matrix,
            row,
            col: c as u16,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::DspConfig;
    use crate::engine::ModelDims;
    use crate::toy::random_model;
    use alloc::collections::BTreeMap;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small_dsp() -> DspConfig {
        DspConfig {
            frame_size: 64,
            hop_size: 32,
            ..DspConfig::default()
        }
    }

    fn model(dims: ModelDims) -> SeModel {
        random_model(&mut ChaCha8Rng::seed_from_u64(3), dims, small_dsp()).unwrap()
    }

    #[test]
    fn group_counts() {
        let dims = ModelDims {
            mel_bins: 2,
            lstm_hidden: [4, 16],
            dense_hidden: 2,
        };
        let m = model(dims);
        // dense2 is 2 x 2.
        assert_eq!(layer_groups(&m, LayerId::Dense2, SparsityStructure::Weight).len(), 4);
        // lstm2 has 16 x 4 input matrices (one partial block per row) and
        // 16 x 16 recurrent matrices (two blocks per row).
        let blocks = layer_groups(&m, LayerId::Lstm2, SparsityStructure::block());
        assert_eq!(blocks.len(), 4 * 16 + 4 * 16 * 2);
    }

    #[test]
    fn four_by_sixteen_matrix_has_eight_blocks_of_eight() {
        let dims = ModelDims {
            mel_bins: 4,
            lstm_hidden: [4, 4],
            dense_hidden: 16,
        };
        let m = model(dims);
        // dense2 is mel x dense_hidden = 4 x 16.
        let groups = layer_groups(&m, LayerId::Dense2, SparsityStructure::block());
        assert_eq!(groups.len(), 8);
        for g in groups {
            assert_eq!(group_members(&m, LayerId::Dense2, g.coord).len(), 8);
        }
    }

    #[test]
    fn full_size_lstm_has_256_unit_groups_covering_each_parameter_once() {
        let m = SeModel::zeros(DspConfig::default(), ModelDims::FULL).unwrap();
        let groups = layer_groups(&m, LayerId::Lstm2, SparsityStructure::Unit);
        assert_eq!(groups.len(), 256);
        let mut seen = alloc::vec![0u8; m.layer_param_count(LayerId::Lstm2)];
        for g in &groups {
            for p in group_members(&m, LayerId::Lstm2, g.coord) {
                let idx = match p {
                    ParamRef::Weight { matrix, row, col } => {
                        matrix as usize * 256 * 256 + row as usize * 256 + col as usize
                    }
                    ParamRef::Bias { vector, index } => 8 * 256 * 256 + vector as usize * 256 + index as usize,
                };
                seen[idx] += 1;
            }
        }
        assert!(seen.iter().all(|&s| s == 1));
    }

    #[test]
    fn groups_partition_each_layer() {
        let m = model(ModelDims {
            mel_bins: 6,
            lstm_hidden: [5, 7],
            dense_hidden: 11,
        });
        for s in [SparsityStructure::Weight, SparsityStructure::block(), SparsityStructure::Unit] {
            for layer in LayerId::ALL {
                let mut seen: BTreeMap<ParamRef, usize> = BTreeMap::new();
                for g in layer_groups(&m, layer, s) {
                    for p in group_members(&m, layer, g.coord) {
                        *seen.entry(p).or_default() += 1;
                    }
                }
                assert!(seen.values().all(|&n| n == 1));
                let weights: usize = m.layer_matrices(layer).iter().map(|x| x.len()).sum();
                let expected = if s == SparsityStructure::Unit {
                    m.layer_param_count(layer)
                } else {
                    weights
                };
                assert_eq!(seen.len(), expected, "{s:?} {layer:?}");
            }
        }
    }

    #[test]
    fn unit_score_includes_recurrent_column() {
        let mut m = SeModel::zeros(small_dsp(), ModelDims {
            mel_bins: 3,
            lstm_hidden: [3, 3],
            dense_hidden: 3,
        })
        .unwrap();
        // W_hf[0][2] = 0.5 feeds from unit 2 into unit 0.
        let mut data = alloc::vec![0i16; 9];
        data[2] = 64;
        m.lstm[0].w_h[1] = crate::sparse::LayerMatrix::Dense(
            crate::sparse::DenseMatrix::new(3, 3, crate::Q8, data).unwrap(),
        );
        let g = layer_groups(&m, LayerId::Lstm1, SparsityStructure::Unit);
        assert_eq!(g[0].l1, 0.5);
        assert_eq!(g[1].l1, 0.0);
        assert_eq!(g[2].l1, 0.5);
    }
}
