//! Tile-based adaptive stationary (TAS) selection.
//!
//! The input matrix is `M×N` and the weight matrix `N×K`, so
//! `MN − NK = N(M − K)`: the sign of `M − K` alone decides which operand is
//! smaller to keep stationary. Negative picks IS-OS, zero or positive picks
//! WS-OS.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::gemm::{GemmShape, Scheme, TileConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct PolicyDecision {
    pub shape: GemmShape,
    /// `M·N − N·K`.
    pub decision_value: i64,
    pub chosen: Scheme,
    /// Size of the matrix loaded exactly once under `chosen`.
    pub reused_matrix_elems: u64,
}

impl PolicyDecision {
    /// `"IS"` or `"WS"`, the family of the chosen hybrid.
    pub fn family(&self) -> &'static str {
        match self.chosen {
            Scheme::InputStationaryOs => "IS",
            _ => "WS",
        }
    }
}

pub fn choose_scheme(shape: &GemmShape) -> PolicyDecision {
    let decision_value = shape.n as i64 * (shape.m as i64 - shape.k as i64);
    let (chosen, reused_matrix_elems) = if decision_value < 0 {
        (Scheme::InputStationaryOs, shape.input_elems())
    } else {
        (Scheme::WeightStationaryOs, shape.weight_elems())
    };
    PolicyDecision {
        shape: *shape,
        decision_value,
        chosen,
        reused_matrix_elems,
    }
}

/// One independent decision per GEMM, in order.
pub fn plan_workload(gemms: &[GemmShape]) -> Result<Vec<PolicyDecision>> {
    if gemms.is_empty() {
        return Err(Error::EmptyWorkload);
    }
    Ok(gemms.iter().map(choose_scheme).collect())
}

/// Resolves `Tas` for `shape`; other schemes pass through.
pub fn resolve(scheme: Scheme, shape: &GemmShape) -> Scheme {
    match scheme {
        Scheme::Tas => choose_scheme(shape).chosen,
        other => other,
    }
}

/// Fills the psum window of `scheme` with the largest size that fits
/// `psum_capacity` elements: `k′` for IS-OS (an `m×k′` window), `m′` for
/// WS-OS (`m′×k`). The window is a tile multiple no larger than the matrix
/// extent and, in strict mode, a divisor of it. Returns the tiles unchanged
/// for other schemes or when a window is already set, and `None` when not
/// even a single tile fits.
pub fn fit_psum_window(
    shape: &GemmShape,
    tiles: &TileConfig,
    scheme: Scheme,
    psum_capacity: u64,
    strict: bool,
) -> Option<TileConfig> {
    let largest = |tile: u64, extent: u64, other_side: u64| -> Option<u64> {
        let budget = psum_capacity / other_side.max(1);
        if budget >= extent {
            return Some(extent);
        }
        let mut w = (budget / tile) * tile;
        while w >= tile {
            if !strict || extent.is_multiple_of(w) {
                return Some(w);
            }
            w -= tile;
        }
        None
    };
    match scheme {
        Scheme::InputStationaryOs if tiles.k_prime.is_none() => {
            largest(tiles.k, shape.k, tiles.m).map(|w| tiles.with_k_prime(w))
        }
        Scheme::WeightStationaryOs if tiles.m_prime.is_none() => {
            largest(tiles.m, shape.m, tiles.k).map(|w| tiles.with_m_prime(w))
        }
        _ => Some(*tiles),
    }
}
