//! Sampled space-time fields and comparison reports, shared between the
//! spectral assembler, the finite-difference oracle, and the CLI writers.

use crate::kernels::Side;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Quantity {
    #[serde(rename = "u")]
    U,
    #[serde(rename = "v")]
    V,
    #[serde(rename = "v_x")]
    Vx,
    #[serde(rename = "v_xx")]
    Vxx,
    #[serde(rename = "v_t")]
    Vt,
    #[serde(rename = "v_tx")]
    Vtx,
    #[serde(rename = "v_tt")]
    Vtt,
}

impl Quantity {
    pub fn label(self) -> &'static str {
        match self {
            Quantity::U => "u",
            Quantity::V => "v",
            Quantity::Vx => "v_x",
            Quantity::Vxx => "v_xx",
            Quantity::Vt => "v_t",
            Quantity::Vtx => "v_tx",
            Quantity::Vtt => "v_tt",
        }
    }
}

/// One sampled quantity on a rectangular (t, x) grid. Rows index time.
///
/// For `Vtt` a knot time appears as two consecutive rows holding the left and
/// right one-sided limits; `tt_sides` marks those rows and is `None`
/// everywhere else (and for every other quantity).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridField {
    pub quantity: Quantity,
    pub t_values: Vec<f64>,
    pub x_values: Vec<f64>,
    pub values: Vec<Vec<f64>>,
    /// Multiples of the delay present in `t_values`.
    pub knot_times: Vec<f64>,
    pub tt_sides: Vec<Option<Side>>,
}

impl GridField {
    /// Structural consistency: axis lengths match the matrix and every value
    /// is finite.
    pub fn check(&self) -> Result<(), String> {
        if self.values.len() != self.t_values.len() {
            return Err(format!(
                "{} rows vs {} time samples",
                self.values.len(),
                self.t_values.len()
            ));
        }
        if self.tt_sides.len() != self.t_values.len() {
            return Err("tt_sides length mismatch".into());
        }
        for (i, row) in self.values.iter().enumerate() {
            if row.len() != self.x_values.len() {
                return Err(format!("row {i} has {} columns", row.len()));
            }
            for (j, v) in row.iter().enumerate() {
                if !v.is_finite() {
                    return Err(format!("non-finite value at row {i}, col {j}"));
                }
            }
        }
        Ok(())
    }
}

/// Sub-domain a comparison runs over.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Region {
    Full,
    /// Excludes x within `fraction * L` of either boundary and t within one
    /// grid step of a delay knot.
    Interior(f64),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CompareReport {
    /// Absolute sup-norm of the difference over the region.
    pub sup_err: f64,
    /// Discrete L2 norm of the difference, relative to the reference field.
    pub l2_err: f64,
    /// (t, x) where the absolute difference peaks.
    pub worst_point: (f64, f64),
    pub region: Region,
}
