use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mjls::MarkovGenerator;

/// Diagonal change of variables `F̂_k = F_k + Δ_k` and the matching shift
/// `δ` with nonnegative diagonal matrices `P_i = (π_ii + δ)I − ⊕Δ_k`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShiftSpec {
    /// Per node, the diagonal of `Δ_k`.
    pub deltas: Vec<Vec<f64>>,
    pub delta_scalar: f64,
    /// Per mode, the diagonal of `P_i` over the stacked state.
    pub p: Vec<Vec<f64>>,
}

impl ShiftSpec {
    /// `Δ` entries stacked over all nodes.
    pub fn stacked(&self) -> Vec<f64> {
        self.deltas.iter().flatten().copied().collect()
    }
}

pub fn build_shift(gen: &MarkovGenerator, deltas: Vec<Vec<f64>>) -> Result<ShiftSpec> {
    let stacked: Vec<f64> = deltas.iter().flatten().copied().collect();
    if stacked.iter().any(|d| !d.is_finite()) {
        return Err(Error::InvalidDesign("non-finite shift entry".into()));
    }
    let max_rate = (0..gen.modes()).map(|i| -gen.rate(i, i)).fold(f64::NEG_INFINITY, f64::max);
    let max_delta = stacked.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let delta_scalar = max_rate + if stacked.is_empty() { 0.0 } else { max_delta };
    let mut p = Vec::with_capacity(gen.modes());
    for i in 0..gen.modes() {
        let slack = gen.rate(i, i) + max_rate;
        let row: Vec<f64> = stacked.iter().map(|d| slack + (max_delta - d)).collect();
        if let Some((c, v)) = row.iter().enumerate().find(|(_, v)| **v < 0.0) {
            return Err(Error::InvalidDesign(format!("P_{} has negative entry {v} at {c}", i + 1)));
        }
        p.push(row);
    }
    Ok(ShiftSpec { deltas, delta_scalar, p })
}
