//! Discretization of (T60, DRR) space into classes.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// (t60_bin, drr_bin).
pub type Cell = (usize, usize);

/// Uniform grid over (T60, DRR). Bins are half-open `[low, high)` except the
/// top bin on each axis, which is closed; values outside the grid clamp to the
/// nearest edge bin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassGrid {
    pub t60_min: f64,
    pub t60_max: f64,
    pub t60_step: f64,
    pub drr_min: f64,
    pub drr_max: f64,
    pub drr_step: f64,
}

impl Default for ClassGrid {
    fn default() -> Self {
        Self {
            t60_min: 0.1,
            t60_max: 0.9,
            t60_step: 0.1,
            drr_min: -6.0,
            drr_max: 15.0,
            drr_step: 1.0,
        }
    }
}

fn bin_count(min: f64, max: f64, step: f64) -> usize {
    ((max - min) / step).round() as usize
}

fn bin_of(x: f64, min: f64, step: f64, n: usize) -> usize {
    // A small slack keeps values like 0.3 (= 0.1 + 2·0.1 in decimal) in the intended bin.
    let pos = (x - min) / step + 1e-9;
    if pos <= 0.0 {
        0
    } else {
        (pos.floor() as usize).min(n - 1)
    }
}

impl ClassGrid {
    pub fn validate(&self) -> Result<()> {
        let axes = [
            ("t60", self.t60_min, self.t60_max, self.t60_step),
            ("drr", self.drr_min, self.drr_max, self.drr_step),
        ];
        for (name, min, max, step) in axes {
            if !(min.is_finite() && max.is_finite() && step.is_finite()) {
                return Err(Error::NonFinite("grid parameter"));
            }
            if !(step > 0.0 && min < max) || bin_count(min, max, step) == 0 {
                return Err(Error::InvalidParameter(format!(
                    "{name} grid needs step > 0, min < max and at least one bin"
                )));
            }
        }
        Ok(())
    }

    pub fn t60_bins(&self) -> usize {
        bin_count(self.t60_min, self.t60_max, self.t60_step)
    }

    pub fn drr_bins(&self) -> usize {
        bin_count(self.drr_min, self.drr_max, self.drr_step)
    }

    pub fn n_cells(&self) -> usize {
        self.t60_bins() * self.drr_bins()
    }

    pub fn cell_of(&self, t60: f64, drr: f64) -> Result<Cell> {
        if !t60.is_finite() || !drr.is_finite() {
            return Err(Error::NonFinite("t60/drr"));
        }
        if t60 <= 0.0 {
            return Err(Error::InvalidParameter(format!("t60 must be positive, got {t60}")));
        }
        Ok((
            bin_of(t60, self.t60_min, self.t60_step, self.t60_bins()),
            bin_of(drr, self.drr_min, self.drr_step, self.drr_bins()),
        ))
    }

    /// Representative (t60 seconds, drr dB) of a cell: its center.
    pub fn center_of(&self, cell: Cell) -> Result<(f64, f64)> {
        let (ti, di) = cell;
        if ti >= self.t60_bins() || di >= self.drr_bins() {
            return Err(Error::InvalidParameter(format!(
                "cell ({ti}, {di}) outside {}×{} grid",
                self.t60_bins(),
                self.drr_bins()
            )));
        }
        Ok((
            self.t60_min + (ti as f64 + 0.5) * self.t60_step,
            self.drr_min + (di as f64 + 0.5) * self.drr_step,
        ))
    }
}

/// Occupied cells in (t60_bin, drr_bin) order; index = MLP output neuron.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<Cell>", into = "Vec<Cell>")]
pub struct ClassVocabulary {
    classes: Vec<Cell>,
    #[serde(skip)]
    index: HashMap<Cell, usize>,
}

impl From<Vec<Cell>> for ClassVocabulary {
    fn from(cells: Vec<Cell>) -> Self {
        let set: BTreeSet<Cell> = cells.into_iter().collect();
        let classes: Vec<Cell> = set.into_iter().collect();
        let index = classes.iter().enumerate().map(|(i, c)| (*c, i)).collect();
        Self { classes, index }
    }
}

impl From<ClassVocabulary> for Vec<Cell> {
    fn from(v: ClassVocabulary) -> Self {
        v.classes
    }
}

impl ClassVocabulary {
    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn cells(&self) -> &[Cell] {
        &self.classes
    }

    pub fn cell(&self, class_id: usize) -> Option<Cell> {
        self.classes.get(class_id).copied()
    }

    pub fn class_of(&self, cell: Cell) -> Option<usize> {
        self.index.get(&cell).copied()
    }
}

pub fn build_vocabulary(grid: &ClassGrid, pairs: &[(f64, f64)]) -> Result<ClassVocabulary> {
    if pairs.is_empty() {
        return Err(Error::Empty("(t60, drr) pairs"));
    }
    let cells = pairs
        .iter()
        .map(|&(t, d)| grid.cell_of(t, d))
        .collect::<Result<Vec<_>>>()?;
    Ok(ClassVocabulary::from(cells))
}
