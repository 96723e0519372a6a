use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use tas_ema::{GemmShape, Scheme, TileConfig, Traversal};

use crate::config::FileConfig;

pub const DEFAULT_TILE: u64 = 16;

#[derive(Debug, Parser)]
#[command(name = "tas-ema", version, about = "External memory access model for tiled GEMM dataflows")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct OutputArgs {
    /// Output format; `sweep` defaults to csv, everything else to table
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    /// Write the report to this file instead of standard output
    #[arg(long, short, global = true)]
    pub output: Option<PathBuf>,
    /// Stamp reports with the generation time
    #[arg(long, global = true)]
    pub timestamps: bool,
    /// Configuration file (defaults to $TAS_EMA_CONFIG)
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
    Table,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Closed-form EMA of one GEMM
    Analyze(AnalyzeArgs),
    /// Trace a tile schedule and cross-check it against the closed form
    Simulate(SimulateArgs),
    /// Execute schedules on random integer matrices and compare with a reference GEMM
    Verify(VerifyArgs),
    /// Evaluate a grid of sequence lengths and tile sizes
    Sweep(SweepArgs),
    /// Per-layer EMA and energy of a transformer model under each policy
    ModelReport(ModelReportArgs),
    /// List known models
    Presets,
}

#[derive(Debug, Args)]
pub struct ShapeArgs {
    /// Rows of the input matrix
    #[arg(long = "M")]
    pub m: u64,
    /// Shared dimension
    #[arg(long = "N")]
    pub n: u64,
    /// Columns of the weight matrix
    #[arg(long = "K")]
    pub k: u64,
}

impl ShapeArgs {
    pub fn shape(&self) -> GemmShape {
        GemmShape::new(self.m, self.n, self.k)
    }
}

#[derive(Debug, Args)]
pub struct TileArgs {
    /// Square tile size, m = n = k
    #[arg(long)]
    pub tile: Option<u64>,
    #[arg(long)]
    pub tile_m: Option<u64>,
    #[arg(long)]
    pub tile_n: Option<u64>,
    #[arg(long)]
    pub tile_k: Option<u64>,
    /// IS-OS psum window width (output columns held on chip)
    #[arg(long)]
    pub k_prime: Option<u64>,
    /// WS-OS psum window height (output rows held on chip)
    #[arg(long)]
    pub m_prime: Option<u64>,
    /// Require every tile and window to divide its matrix extent
    #[arg(long)]
    pub strict: bool,
    /// Size the hybrid psum window to fit this many elements
    #[arg(long)]
    pub psum_capacity: Option<u64>,
}

impl TileArgs {
    fn explicit(&self) -> bool {
        self.tile.is_some() || self.tile_m.is_some() || self.tile_n.is_some() || self.tile_k.is_some()
    }

    /// Tiles for `shape`. Without any tile flag the default size is shrunk to
    /// fit small shapes; explicit tiles are taken as given.
    pub fn tiles_for(&self, shape: &GemmShape, config: &FileConfig) -> TileConfig {
        let explicit = self.explicit();
        let mut tiles = self.with_size(self.tile.or(config.tile).unwrap_or(DEFAULT_TILE));
        if !explicit {
            tiles = tiles.fitted_to(shape);
        }
        tiles
    }

    /// Tiles with `size` as the square default, per-axis flags overriding.
    pub fn with_size(&self, size: u64) -> TileConfig {
        let mut tiles = TileConfig::new(
            self.tile_m.unwrap_or(size),
            self.tile_n.unwrap_or(size),
            self.tile_k.unwrap_or(size),
        );
        tiles.k_prime = self.k_prime;
        tiles.m_prime = self.m_prime;
        tiles
    }

    pub fn strict(&self, config: &FileConfig) -> bool {
        self.strict || config.strict.unwrap_or(false)
    }

    pub fn psum_capacity(&self, config: &FileConfig) -> Option<u64> {
        self.psum_capacity.or(config.psum_capacity)
    }
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[command(flatten)]
    pub shape: ShapeArgs,
    #[command(flatten)]
    pub tiles: TileArgs,
    #[arg(long, default_value = "tas")]
    pub scheme: Scheme,
    /// Also report the cheaper hybrid by closed-form total
    #[arg(long)]
    pub oracle_argmin: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
pub enum TraversalArg {
    #[default]
    Figure,
    RowMajor,
}

impl From<TraversalArg> for Traversal {
    fn from(t: TraversalArg) -> Self {
        match t {
            TraversalArg::Figure => Traversal::Figure,
            TraversalArg::RowMajor => Traversal::RowMajor,
        }
    }
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub shape: ShapeArgs,
    #[command(flatten)]
    pub tiles: TileArgs,
    #[arg(long, default_value = "tas")]
    pub scheme: Scheme,
    #[arg(long, default_value_t = 1)]
    pub input_slots: u32,
    #[arg(long, default_value_t = 1)]
    pub weight_slots: u32,
    #[arg(long, value_enum, default_value_t = TraversalArg::Figure)]
    pub traversal: TraversalArg,
    /// Also run the schedule on random integer matrices
    #[arg(long)]
    pub verify: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Write the step trace as CSV to this file
    #[arg(long)]
    pub trace: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub shape: ShapeArgs,
    #[command(flatten)]
    pub tiles: TileArgs,
    /// Scheme to check; all scheduled schemes when omitted
    #[arg(long)]
    pub scheme: Option<Scheme>,
    #[arg(long, value_enum, default_value_t = TraversalArg::Figure)]
    pub traversal: TraversalArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Take N and K from this model's projection
    #[arg(long, conflicts_with_all = ["n", "k"])]
    pub model: Option<String>,
    /// Projection of `--model` to sweep
    #[arg(long, value_enum, default_value_t = GemmArg::Query, requires = "model")]
    pub gemm: GemmArg,
    /// Sequence lengths (the M axis), comma separated
    #[arg(long, value_delimiter = ',', conflicts_with = "m")]
    pub seq_lens: Option<Vec<u64>>,
    /// Fixed M when no sequence axis is given
    #[arg(long = "M")]
    pub m: Option<u64>,
    #[arg(long = "N")]
    pub n: Option<u64>,
    #[arg(long = "K")]
    pub k: Option<u64>,
    /// Square tile sizes, comma separated
    #[arg(long, value_delimiter = ',', conflicts_with = "tile")]
    pub tiles: Option<Vec<u64>>,
    #[command(flatten)]
    pub tile: TileArgs,
    #[arg(long, default_value = "tas")]
    pub scheme: Scheme,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GemmArg {
    Query,
    Key,
    Value,
    AttnOut,
    FfnUp,
    FfnDown,
}

#[derive(Debug, Args)]
pub struct EnergyArgs {
    /// Energy of moving one element across the external-memory boundary
    #[arg(long, conflicts_with = "energy_ratio")]
    pub ext_cost: Option<f64>,
    /// Energy of one multiply-accumulate
    #[arg(long, conflicts_with = "energy_ratio")]
    pub int_cost: Option<f64>,
    /// External cost per element relative to a unit MAC cost
    #[arg(long)]
    pub energy_ratio: Option<f64>,
    /// Bytes per element; scales the external cost
    #[arg(long)]
    pub bytes_per_elem: Option<f64>,
}

#[derive(Debug, Args)]
pub struct ModelReportArgs {
    #[arg(long)]
    pub model: String,
    /// Sequence length (defaults to the model's)
    #[arg(long)]
    pub seq_len: Option<u64>,
    #[command(flatten)]
    pub tiles: TileArgs,
    #[command(flatten)]
    pub energy: EnergyArgs,
    /// Include the attention score and context GEMMs
    #[arg(long)]
    pub attention: bool,
    /// Include the pooler GEMM as an extra layer
    #[arg(long)]
    pub pooler: bool,
    /// Write per-GEMM rows for every policy as CSV to this file
    #[arg(long)]
    pub gemm_csv: Option<PathBuf>,
}
