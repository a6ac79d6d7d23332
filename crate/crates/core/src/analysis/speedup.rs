//! Sparsity-to-speedup estimator driven by per-structure anchor tables.
//!
//! Anchor tables can be replaced from plain text, one anchor per line:
//!
//! ```text
//! # structure sparsity factor
//! block 0.402 1.7
//! unit  0.660 3.3
//! ```
//!
//! Blank lines and `#` comments are ignored. A structure named in the text
//! has its whole table replaced by the listed anchors; the `(0, 1.0)`
//! anchor is added when missing. Structures not named keep their tables.

use alloc::vec;
use alloc::vec::Vec;

use crate::sparse::SparsityStructure;
use crate::Error;

#[derive(Debug, Clone, PartialEq)]
pub struct SpeedupModel {
    pub weight: Vec<(f64, f64)>,
    pub block: Vec<(f64, f64)>,
    pub unit: Vec<(f64, f64)>,
}

impl Default for SpeedupModel {
    fn default() -> Self {
        SpeedupModel {
            weight: vec![(0.0, 1.0), (0.485, 0.6), (0.701, 0.6), (0.907, 1.84)],
            block: vec![(0.0, 1.0), (0.402, 1.7), (0.742, 2.7), (0.907, 6.7)],
            unit: vec![(0.0, 1.0), (0.371, 2.2), (0.660, 3.3)],
        }
    }
}

fn check_table(table: &[(f64, f64)]) -> Result<(), &'static str> {
    if table.is_empty() {
        return Err("empty anchor table");
    }
    for &(s, f) in table {
        if !(0.0..1.0).contains(&s) {
            return Err("sparsity outside [0, 1)");
        }
        if !(f > 0.0 && f.is_finite()) {
            return Err("factor must be positive");
        }
    }
    if table.windows(2).any(|w| w[0].0 >= w[1].0) {
        return Err("duplicate sparsity");
    }
    Ok(())
}

fn interpolate(table: &[(f64, f64)], s: f64) -> f64 {
    let first = table[0];
    let last = table[table.len() - 1];
    if s <= first.0 {
        return first.1;
    }
    if s >= last.0 {
        return last.1;
    }
    let i = table.partition_point(|a| a.0 <= s);
    let (lo, hi) = (table[i - 1], table[i]);
    if s == lo.0 {
        return lo.1;
    }
    lo.1 + (hi.1 - lo.1) * (s - lo.0) / (hi.0 - lo.0)
}

impl SpeedupModel {
    pub fn table(&self, structure: SparsityStructure) -> &[(f64, f64)] {
        match structure {
            SparsityStructure::Weight => &self.weight,
            SparsityStructure::Block { .. } => &self.block,
            SparsityStructure::Unit => &self.unit,
        }
    }

    fn table_mut(&mut self, structure: SparsityStructure) -> &mut Vec<(f64, f64)> {
        match structure {
            SparsityStructure::Weight => &mut self.weight,
            SparsityStructure::Block { .. } => &mut self.block,
            SparsityStructure::Unit => &mut self.unit,
        }
    }

    /// Piecewise-linear speedup factor, clamped to the end anchors.
    pub fn estimate(&self, structure: SparsityStructure, sparsity: f64) -> f64 {
        interpolate(self.table(structure), sparsity)
    }

    /// Apply an anchor-table override on top of `self`.
    pub fn with_overrides(&self, text: &str) -> Result<Self, Error> {
        let mut replaced: Vec<(SparsityStructure, Vec<(f64, f64)>)> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |reason| Error::AnchorParse {
                line: line_no,
                reason,
            };
            let mut fields = line.split_whitespace();
            let structure = match fields.next() {
                Some("weight") => SparsityStructure::Weight,
                Some("block") => SparsityStructure::block(),
                Some("unit") => SparsityStructure::Unit,
                _ => return Err(err("unknown structure")),
            };
            let mut number = || -> Result<f64, Error> {
                fields
                    .next()
                    .and_then(|f| f.parse::<f64>().ok())
                    .ok_or(err("expected a number"))
            };
            let s = number()?;
            let f = number()?;
            if fields.next().is_some() {
                return Err(err("expected three fields"));
            }
            if !(0.0..1.0).contains(&s) {
                return Err(err("sparsity outside [0, 1)"));
            }
            if !(f > 0.0 && f.is_finite()) {
                return Err(err("factor must be positive"));
            }
            match replaced.iter_mut().find(|(k, _)| k.name() == structure.name()) {
                Some((_, t)) => t.push((s, f)),
                None => replaced.push((structure, vec![(s, f)])),
            }
        }
        let mut out = self.clone();
        for (structure, mut table) in replaced {
            if !table.iter().any(|a| a.0 == 0.0) {
                table.push((0.0, 1.0));
            }
            table.sort_by(|a, b| a.0.total_cmp(&b.0));
            check_table(&table).map_err(|reason| Error::AnchorParse { line: 0, reason })?;
            *out.table_mut(structure) = table;
        }
        Ok(out)
    }

    /// Render the tables in the override format.
    pub fn to_text(&self) -> alloc::string::String {
        use core::fmt::Write;
        let mut s = alloc::string::String::from("# structure sparsity factor\n");
        for structure in [
            SparsityStructure::Weight,
            SparsityStructure::block(),
            SparsityStructure::Unit,
        ] {
            for &(sp, f) in self.table(structure) {
                let _ = writeln!(s, "{} {} {}", structure.name(), sp, f);
            }
        }
        s
    }
}

/// Speedup from the default anchor tables.
pub fn estimate_speedup(structure: SparsityStructure, sparsity: f64) -> f64 {
    SpeedupModel::default().estimate(structure, sparsity)
}
