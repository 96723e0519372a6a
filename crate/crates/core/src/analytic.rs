//! Closed-form external memory access per scheme.
//!
//! With `Tm = ceil(M/m)`, `Tn = ceil(N/n)`, `Tk = ceil(K/k)`, `Wk = ceil(K/k′)`
//! and `Wm = ceil(M/m′)`:
//!
//! | scheme | input    | weight   | output  |
//! |--------|----------|----------|---------|
//! | naive  | K·MN     | M·NK     | N·MK    |
//! | IS     | MN       | Tm·NK    | Tn·MK   |
//! | WS     | Tk·MN    | NK       | Tn·MK   |
//! | OS     | Tk·MN    | Tm·NK    | MK      |
//! | IS-OS  | Wk·MN    | Tm·NK    | MK      |
//! | WS-OS  | Tk·MN    | Wm·NK    | MK      |
//!
//! The output column counts transfer rounds: a spilled partial sum is charged
//! once (its write); the matching reload is reported by the simulator only.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::gemm::{EmaBreakdown, GemmShape, Scheme, ValidatedProblem};

/// Whether a closed-form result is the standard tile-count form or the extended
/// form (psum windows narrower than the matrix, or ceiling tile counts).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum FormulaMode {
    Standard,
    Generalized,
}

impl FormulaMode {
    pub fn name(&self) -> &'static str {
        match self {
            FormulaMode::Standard => "standard",
            FormulaMode::Generalized => "generalized",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct SchemeEma {
    pub scheme: Scheme,
    pub breakdown: EmaBreakdown,
    pub formula_mode: FormulaMode,
}

/// Closed-form EMA of `scheme` on `problem`. `Tas` must be resolved first.
pub fn ema_closed_form(problem: &ValidatedProblem, scheme: Scheme) -> Result<SchemeEma> {
    let shape = problem.shape();
    let (mn, nk, mk) = (
        shape.input_elems(),
        shape.weight_elems(),
        shape.output_elems(),
    );
    let (tm, tn, tk) = (problem.tm(), problem.tn(), problem.tk());

    let breakdown = match scheme {
        Scheme::Tas => return Err(Error::SchemeUnresolved("tas")),
        Scheme::Naive => EmaBreakdown::new(shape.k * mn, shape.m * nk, shape.n * mk),
        Scheme::InputStationary => EmaBreakdown::new(mn, tm * nk, tn * mk),
        Scheme::WeightStationary => EmaBreakdown::new(tk * mn, nk, tn * mk),
        Scheme::OutputStationaryRow | Scheme::OutputStationaryCol => {
            EmaBreakdown::new(tk * mn, tm * nk, mk)
        }
        Scheme::InputStationaryOs => EmaBreakdown::new(problem.wk() * mn, tm * nk, mk),
        Scheme::WeightStationaryOs => EmaBreakdown::new(tk * mn, problem.wm() * nk, mk),
    };

    let full_window = match scheme {
        Scheme::InputStationaryOs => problem.k_prime() == shape.k,
        Scheme::WeightStationaryOs => problem.m_prime() == shape.m,
        _ => true,
    };
    let formula_mode = if problem.is_divisible() && full_window {
        FormulaMode::Standard
    } else {
        FormulaMode::Generalized
    };

    Ok(SchemeEma {
        scheme,
        breakdown,
        formula_mode,
    })
}

/// EMA of the matrix held stationary (loaded exactly once): `MN` for the
/// input-stationary family, `NK` for the weight-stationary family.
pub fn reused_matrix_ema(shape: &GemmShape, scheme: Scheme) -> Result<u64> {
    match scheme {
        Scheme::InputStationary | Scheme::InputStationaryOs => Ok(shape.input_elems()),
        Scheme::WeightStationary | Scheme::WeightStationaryOs => Ok(shape.weight_elems()),
        other => Err(Error::SchemeUnresolved(other.name())),
    }
}

/// `(baseline − candidate) / baseline` on totals. Negative when the candidate
/// moves more data.
pub fn reduction_ratio(baseline: &EmaBreakdown, candidate: &EmaBreakdown) -> Result<f64> {
    let base = baseline.total();
    if base == 0 {
        return Err(Error::DivisionByZero);
    }
    Ok((base as f64 - candidate.total() as f64) / base as f64)
}
