//! GEMM problem description shared by every other module.
//!
//! The product is `output[M×K] = input[M×N] · weight[N×K]`. `N` is the shared
//! (reduction) dimension. Tiles are `m×n` on the input, `n×k` on the weight and
//! `m×k` on the output.

use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dimensions of one GEMM.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GemmShape {
    /// Input rows, also output rows.
    pub m: u64,
    /// Shared dimension: input columns and weight rows.
    pub n: u64,
    /// Weight columns, also output columns.
    pub k: u64,
}

impl GemmShape {
    pub const fn new(m: u64, n: u64, k: u64) -> Self {
        Self { m, n, k }
    }

    pub fn macs(&self) -> u64 {
        self.m * self.n * self.k
    }

    pub fn input_elems(&self) -> u64 {
        self.m * self.n
    }

    pub fn weight_elems(&self) -> u64 {
        self.n * self.k
    }

    pub fn output_elems(&self) -> u64 {
        self.m * self.k
    }
}

impl fmt::Display for GemmShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "M={} N={} K={}", self.m, self.n, self.k)
    }
}

/// Tile extents and psum-window sizes.
///
/// `k_prime` is the number of output columns whose partial sums stay on chip
/// in the IS-OS schedule, `m_prime` the number of output rows for WS-OS.
/// `None` means "the whole matrix extent".
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TileConfig {
    pub m: u64,
    pub n: u64,
    pub k: u64,
    pub k_prime: Option<u64>,
    pub m_prime: Option<u64>,
}

impl TileConfig {
    pub const fn new(m: u64, n: u64, k: u64) -> Self {
        Self {
            m,
            n,
            k,
            k_prime: None,
            m_prime: None,
        }
    }

    /// Square tiles, `m = n = k = size`.
    pub const fn square(size: u64) -> Self {
        Self::new(size, size, size)
    }

    pub fn with_k_prime(mut self, k_prime: u64) -> Self {
        self.k_prime = Some(k_prime);
        self
    }

    pub fn with_m_prime(mut self, m_prime: u64) -> Self {
        self.m_prime = Some(m_prime);
        self
    }

    /// Shrinks every tile extent (and explicit window) that is larger than the
    /// matching matrix extent. Workloads use this so one tile setting can be
    /// applied to GEMMs of very different sizes; `validate` itself never clamps.
    pub fn fitted_to(&self, shape: &GemmShape) -> Self {
        let m = self.m.min(shape.m);
        let k = self.k.min(shape.k);
        Self {
            m,
            n: self.n.min(shape.n),
            k,
            k_prime: self.k_prime.map(|w| w.min(shape.k).max(k)),
            m_prime: self.m_prime.map(|w| w.min(shape.m).max(m)),
        }
    }
}

/// Dataflow schemes. `Tas` is a policy and has to be resolved to one of the
/// two hybrids before a schedule or closed form can be produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    Naive,
    InputStationary,
    WeightStationary,
    OutputStationaryRow,
    OutputStationaryCol,
    InputStationaryOs,
    WeightStationaryOs,
    Tas,
}

impl Scheme {
    pub const ALL: [Scheme; 8] = [
        Scheme::Naive,
        Scheme::InputStationary,
        Scheme::WeightStationary,
        Scheme::OutputStationaryRow,
        Scheme::OutputStationaryCol,
        Scheme::InputStationaryOs,
        Scheme::WeightStationaryOs,
        Scheme::Tas,
    ];

    /// Schemes that have an executable tile schedule.
    pub const SCHEDULED: [Scheme; 6] = [
        Scheme::InputStationary,
        Scheme::WeightStationary,
        Scheme::OutputStationaryRow,
        Scheme::OutputStationaryCol,
        Scheme::InputStationaryOs,
        Scheme::WeightStationaryOs,
    ];

    /// Short command-line name.
    pub fn name(&self) -> &'static str {
        match self {
            Scheme::Naive => "naive",
            Scheme::InputStationary => "is",
            Scheme::WeightStationary => "ws",
            Scheme::OutputStationaryRow => "os-row",
            Scheme::OutputStationaryCol => "os-col",
            Scheme::InputStationaryOs => "is-os",
            Scheme::WeightStationaryOs => "ws-os",
            Scheme::Tas => "tas",
        }
    }

    pub fn is_output_stationary_family(&self) -> bool {
        matches!(
            self,
            Scheme::OutputStationaryRow
                | Scheme::OutputStationaryCol
                | Scheme::InputStationaryOs
                | Scheme::WeightStationaryOs
        )
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "naive" => Ok(Scheme::Naive),
            "is" => Ok(Scheme::InputStationary),
            "ws" => Ok(Scheme::WeightStationary),
            "os" | "os-row" => Ok(Scheme::OutputStationaryRow),
            "os-col" => Ok(Scheme::OutputStationaryCol),
            "is-os" => Ok(Scheme::InputStationaryOs),
            "ws-os" => Ok(Scheme::WeightStationaryOs),
            "tas" => Ok(Scheme::Tas),
            other => Err(format!(
                "unknown scheme '{other}' (expected naive, is, ws, os, os-row, os-col, is-os, ws-os or tas)"
            )),
        }
    }
}

/// Elements moved across the external-memory boundary, per operand.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EmaBreakdown {
    pub input_elems: u64,
    pub weight_elems: u64,
    pub output_elems: u64,
}

impl EmaBreakdown {
    pub const fn new(input_elems: u64, weight_elems: u64, output_elems: u64) -> Self {
        Self {
            input_elems,
            weight_elems,
            output_elems,
        }
    }

    pub fn total(&self) -> u64 {
        self.input_elems + self.weight_elems + self.output_elems
    }
}

impl Add for EmaBreakdown {
    type Output = EmaBreakdown;

    fn add(self, rhs: Self) -> Self {
        Self {
            input_elems: self.input_elems + rhs.input_elems,
            weight_elems: self.weight_elems + rhs.weight_elems,
            output_elems: self.output_elems + rhs.output_elems,
        }
    }
}

impl AddAssign for EmaBreakdown {
    fn add_assign(&mut self, rhs: Self) {
        *self = *self + rhs;
    }
}

impl Sum for EmaBreakdown {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(Self::default(), Add::add)
    }
}

/// A shape and tile configuration that passed [`validate`]. Psum windows are
/// resolved to concrete element counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct ValidatedProblem {
    shape: GemmShape,
    tiles: TileConfig,
    strict_divisible: bool,
}

impl ValidatedProblem {
    pub fn shape(&self) -> GemmShape {
        self.shape
    }

    /// Tiles with `k_prime` and `m_prime` always `Some`.
    pub fn tiles(&self) -> TileConfig {
        self.tiles
    }

    /// Whether the problem was validated in strict mode.
    pub fn strict(&self) -> bool {
        self.strict_divisible
    }

    /// True when every tile and window divides its extent, whether or not
    /// strict mode was requested.
    pub fn is_divisible(&self) -> bool {
        let (s, t) = (self.shape, self.tiles);
        s.m % t.m == 0
            && s.n % t.n == 0
            && s.k % t.k == 0
            && s.k % self.k_prime() == 0
            && s.m % self.m_prime() == 0
    }

    pub fn k_prime(&self) -> u64 {
        self.tiles.k_prime.unwrap_or(self.shape.k)
    }

    pub fn m_prime(&self) -> u64 {
        self.tiles.m_prime.unwrap_or(self.shape.m)
    }

    /// Row-tile count `ceil(M/m)`.
    pub fn tm(&self) -> u64 {
        self.shape.m.div_ceil(self.tiles.m)
    }

    /// Shared-dimension tile count `ceil(N/n)`.
    pub fn tn(&self) -> u64 {
        self.shape.n.div_ceil(self.tiles.n)
    }

    /// Column-tile count `ceil(K/k)`.
    pub fn tk(&self) -> u64 {
        self.shape.k.div_ceil(self.tiles.k)
    }

    /// Number of k′-wide column windows, `ceil(K/k′)`.
    pub fn wk(&self) -> u64 {
        self.shape.k.div_ceil(self.k_prime())
    }

    /// Number of m′-tall row windows, `ceil(M/m′)`.
    pub fn wm(&self) -> u64 {
        self.shape.m.div_ceil(self.m_prime())
    }

    /// Column tiles per k′ window.
    pub fn k_window_tiles(&self) -> u64 {
        self.k_prime().div_ceil(self.tiles.k)
    }

    /// Row tiles per m′ window.
    pub fn m_window_tiles(&self) -> u64 {
        self.m_prime().div_ceil(self.tiles.m)
    }

    /// Real height of row tile `i` (edge tiles are clipped).
    pub fn rows_in(&self, i: u64) -> u64 {
        clipped(self.shape.m, self.tiles.m, i)
    }

    /// Real depth of shared-dimension tile `t`.
    pub fn shared_in(&self, t: u64) -> u64 {
        clipped(self.shape.n, self.tiles.n, t)
    }

    /// Real width of column tile `j`.
    pub fn cols_in(&self, j: u64) -> u64 {
        clipped(self.shape.k, self.tiles.k, j)
    }

    /// Total tile-pair steps, `Tm·Tn·Tk`.
    pub fn step_count(&self) -> u64 {
        self.tm() * self.tn() * self.tk()
    }
}

fn clipped(extent: u64, tile: u64, index: u64) -> u64 {
    tile.min(extent.saturating_sub(index * tile))
}

/// Checks a shape and tile configuration and resolves the psum windows.
///
/// In strict mode every tile and window must divide its extent; in relaxed
/// mode edge tiles are allowed and tile counts use ceiling division.
pub fn validate(shape: GemmShape, tiles: TileConfig, strict: bool) -> Result<ValidatedProblem> {
    for (name, value) in [
        ("M", shape.m),
        ("N", shape.n),
        ("K", shape.k),
        ("m", tiles.m),
        ("n", tiles.n),
        ("k", tiles.k),
    ] {
        if value == 0 {
            return Err(Error::ZeroDimension(name));
        }
    }
    if tiles.k_prime == Some(0) {
        return Err(Error::ZeroDimension("k'"));
    }
    if tiles.m_prime == Some(0) {
        return Err(Error::ZeroDimension("m'"));
    }

    for (name, tile, extent_name, extent) in [
        ("m", tiles.m, "M", shape.m),
        ("n", tiles.n, "N", shape.n),
        ("k", tiles.k, "K", shape.k),
    ] {
        if tile > extent {
            return Err(Error::TileExceedsMatrix {
                name,
                tile,
                extent_name,
                extent,
            });
        }
    }

    let k_prime = tiles.k_prime.unwrap_or(shape.k);
    let m_prime = tiles.m_prime.unwrap_or(shape.m);
    check_window("k'", k_prime, "k", tiles.k, "K", shape.k)?;
    check_window("m'", m_prime, "m", tiles.m, "M", shape.m)?;

    if strict {
        for (name, tile, extent_name, extent) in [
            ("m", tiles.m, "M", shape.m),
            ("n", tiles.n, "N", shape.n),
            ("k", tiles.k, "K", shape.k),
            ("k'", k_prime, "K", shape.k),
            ("m'", m_prime, "M", shape.m),
        ] {
            if extent % tile != 0 {
                return Err(Error::NotDivisible {
                    name,
                    tile,
                    extent_name,
                    extent,
                });
            }
        }
    }

    Ok(ValidatedProblem {
        shape,
        tiles: TileConfig {
            k_prime: Some(k_prime),
            m_prime: Some(m_prime),
            ..tiles
        },
        strict_divisible: strict,
    })
}

/// A window must lie in `[tile, extent]` and be a multiple of the tile. A
/// window equal to the full extent is always accepted so the default stays
/// valid when the extent itself is not a tile multiple.
fn check_window(
    name: &str,
    window: u64,
    tile_name: &str,
    tile: u64,
    extent_name: &str,
    extent: u64,
) -> Result<()> {
    if window > extent {
        return Err(Error::PsumWindowInvalid(format!(
            "{name}={window} exceeds {extent_name}={extent}"
        )));
    }
    if window < tile {
        return Err(Error::PsumWindowInvalid(format!(
            "{name}={window} is smaller than {tile_name}={tile}"
        )));
    }
    if window != extent && !window.is_multiple_of(tile) {
        return Err(Error::PsumWindowInvalid(format!(
            "{name}={window} is not a multiple of {tile_name}={tile}"
        )));
    }
    Ok(())
}
