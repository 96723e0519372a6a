use rayon::prelude::*;
use serde::Serialize;
use tas_ema::workload::{evaluate_gemm, expand, GemmLabel};
use tas_ema::{choose_scheme, EmaBreakdown, EvalOptions, GemmShape, Scheme, TileConfig};

use crate::args::{GemmArg, SweepArgs, DEFAULT_TILE};
use crate::config::FileConfig;
use crate::report::Report;
use crate::{Failure, Outcome};

impl From<GemmArg> for GemmLabel {
    fn from(g: GemmArg) -> Self {
        match g {
            GemmArg::Query => GemmLabel::Query,
            GemmArg::Key => GemmLabel::Key,
            GemmArg::Value => GemmLabel::Value,
            GemmArg::AttnOut => GemmLabel::AttnOut,
            GemmArg::FfnUp => GemmLabel::FfnUp,
            GemmArg::FfnDown => GemmLabel::FfnDown,
        }
    }
}

#[derive(Serialize)]
struct Point {
    shape: GemmShape,
    tiles: TileConfig,
    scheme: Scheme,
    decision_value: i64,
    decision: &'static str,
    reused_matrix_elems: u64,
    ema: EmaBreakdown,
    total: u64,
}

#[derive(Serialize)]
struct Sweep {
    model: Option<String>,
    gemm: Option<&'static str>,
    requested: Scheme,
    strict: bool,
    points: Vec<Point>,
}

pub fn run(args: &SweepArgs, config: &FileConfig) -> Result<Outcome, Failure> {
    let registry = config.registry()?;
    let model = args.model.as_deref().map(|m| registry.get(m)).transpose()?;

    let (n, k, default_m) = match model {
        Some(cfg) => {
            let label = GemmLabel::from(args.gemm);
            let g = expand(cfg, 1)[0]
                .gemms
                .iter()
                .find(|g| g.label == label)
                .map(|g| g.shape)
                .ok_or_else(|| Failure::internal(format!("{} has no {} GEMM", cfg.name, label.name())))?;
            (g.n, g.k, Some(cfg.default_seq_len))
        }
        None => match (args.n, args.k) {
            (Some(n), Some(k)) => (n, k, None),
            _ => return Err(Failure::user("--N and --K are required without --model")),
        },
    };

    let ms: Vec<u64> = match (&args.seq_lens, args.m.or(default_m)) {
        (Some(list), _) => list.clone(),
        (None, Some(m)) => vec![m],
        (None, None) => return Err(Failure::user("nothing to sweep: give --seq-lens or --M")),
    };
    let sizes: Vec<u64> = match &args.tiles {
        Some(list) => list.clone(),
        None => vec![args.tile.tile.or(config.tile).unwrap_or(DEFAULT_TILE)],
    };
    if ms.is_empty() {
        return Err(Failure::user("empty sweep axis: --seq-lens"));
    }
    if sizes.is_empty() {
        return Err(Failure::user("empty sweep axis: --tiles"));
    }

    let opts = EvalOptions {
        strict: args.tile.strict(config),
        psum_capacity: args.tile.psum_capacity(config),
        ..EvalOptions::default()
    };
    let grid: Vec<(u64, u64)> = ms
        .iter()
        .flat_map(|&m| sizes.iter().map(move |&s| (m, s)))
        .collect();
    let points = grid
        .par_iter()
        .map(|&(m, size)| {
            let shape = GemmShape::new(m, n, k);
            let e = evaluate_gemm(&shape, &args.tile.with_size(size), args.scheme, &opts)?;
            let d = choose_scheme(&shape);
            Ok(Point {
                shape,
                tiles: e.tiles,
                scheme: e.result.scheme,
                decision_value: d.decision_value,
                decision: d.family(),
                reused_matrix_elems: d.reused_matrix_elems,
                ema: e.result.breakdown,
                total: e.result.breakdown.total(),
            })
        })
        .collect::<Result<Vec<_>, tas_ema::Error>>()?;

    let rows = points
        .iter()
        .map(|p| {
            let t = p.tiles;
            [
                p.shape.m,
                p.shape.n,
                p.shape.k,
                t.m,
                t.n,
                t.k,
                t.k_prime.unwrap_or(p.shape.k),
                t.m_prime.unwrap_or(p.shape.m),
            ]
            .iter()
            .map(u64::to_string)
            .chain([
                p.scheme.to_string(),
                p.decision_value.to_string(),
                p.decision.to_string(),
                p.reused_matrix_elems.to_string(),
                p.ema.input_elems.to_string(),
                p.ema.weight_elems.to_string(),
                p.ema.output_elems.to_string(),
                p.total.to_string(),
            ])
            .collect()
        })
        .collect();

    let mut report = Report::new(
        "sweep",
        Sweep {
            model: model.map(|m| m.name.clone()),
            gemm: model.map(|_| GemmLabel::from(args.gemm).name()),
            requested: args.scheme,
            strict: opts.strict,
            points,
        },
    )?;
    report.header = vec![
        "M", "N", "K", "tile_m", "tile_n", "tile_k", "k_prime", "m_prime", "scheme",
        "decision_value", "decision", "reused_matrix_elems", "input_ema", "weight_ema",
        "output_ema", "total",
    ];
    report.rows = rows;
    Ok(Outcome::ok(report))
}
