//! Sparsity pictures as binary PGM images.
//!
//! One pixel per weight: white where a value is stored, black where it was
//! pruned. An LSTM layer is drawn as a `4H x (input + H)` image whose gate
//! bands follow the order i, f, o, c, each row being `[W_x | W_h]`. A dense
//! layer is drawn as its `outputs x inputs` matrix.

use microse_core::engine::{LayerId, SeModel};
use microse_core::PruneMask;

/// Keep/prune bitmap of a layer: `(rows, cols, pixels)`, row-major.
pub fn layer_bitmap(model: &SeModel, layer: LayerId) -> (usize, usize, Vec<bool>) {
    match layer {
        LayerId::Lstm1 | LayerId::Lstm2 => {
            let l = &model.lstm[layer.index()];
            let (h, i) = (l.hidden_size, l.input_size);
            let cols = i + h;
            let mut px = Vec::with_capacity(4 * h * cols);
            for g in 0..4 {
                let (x, r) = (l.w_x[g].stored_mask(), l.w_h[g].stored_mask());
                for row in 0..h {
                    px.extend((0..i).map(|c| x.get(row, c)));
                    px.extend((0..h).map(|c| r.get(row, c)));
                }
            }
            (4 * h, cols, px)
        }
        LayerId::Dense1 | LayerId::Dense2 => {
            let m: PruneMask = model.dense[layer.index() - 2].weights.stored_mask();
            (m.rows(), m.cols(), m.bits().to_vec())
        }
    }
}

/// Binary (P5) PGM with maxval 255.
pub fn to_pgm(rows: usize, cols: usize, pixels: &[bool]) -> Vec<u8> {
    let mut out = format!("P5\n{cols} {rows}\n255\n").into_bytes();
    out.extend(pixels.iter().map(|&k| if k { 255u8 } else { 0 }));
    out
}

pub fn render_layer(model: &SeModel, layer: LayerId) -> Vec<u8> {
    let (r, c, px) = layer_bitmap(model, layer);
    to_pgm(r, c, &px)
}
