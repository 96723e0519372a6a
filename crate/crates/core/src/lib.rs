//! External memory access (EMA) cost model for tiled GEMM.
//!
//! Closed-form traffic for the naive, input-, weight- and output-stationary
//! dataflows and the IS-OS / WS-OS hybrids, an executable tile-schedule
//! simulator that measures the same traffic, and the tile-based adaptive
//! stationary (TAS) policy that picks a hybrid per GEMM.

pub mod analytic;
pub mod energy;
pub mod error;
pub mod gemm;
pub mod policy;
pub mod schedule;
pub mod sim;
pub mod workload;

pub use analytic::{ema_closed_form, reduction_ratio, reused_matrix_ema, FormulaMode, SchemeEma};
pub use energy::{compare, energy, EnergyComparison, EnergyParams, PolicyCost};
pub use error::{Error, Result};
pub use gemm::{validate, EmaBreakdown, GemmShape, Scheme, TileConfig, ValidatedProblem};
pub use policy::{choose_scheme, plan_workload, PolicyDecision};
pub use schedule::{generate, TileCoord, TileSchedule, TileStep, Traversal};
pub use sim::{reference_gemm, simulate, verify_functional, BufferModel, Matrix, SimReport, Verdict};
pub use workload::{expand, preset, workload_ema, EvalOptions, ModelConfig, WorkloadEma};
