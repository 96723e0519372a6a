use std::fmt::Write as _;

use serde::Serialize;
use tas_ema::policy::{fit_psum_window, resolve};
use tas_ema::{
    choose_scheme, ema_closed_form, validate, EmaBreakdown, Error, GemmShape, PolicyDecision,
    Scheme, TileConfig, ValidatedProblem,
};

use crate::args::AnalyzeArgs;
use crate::config::FileConfig;
use crate::report::Report;
use crate::{Failure, Outcome};

/// Validates `tiles`, sizes the psum window of `scheme` to `capacity` if
/// given, and validates the result.
pub fn problem_for(
    shape: GemmShape,
    tiles: TileConfig,
    scheme: Scheme,
    capacity: Option<u64>,
    strict: bool,
) -> Result<ValidatedProblem, Failure> {
    let problem = validate(shape, tiles, strict)?;
    let Some(capacity) = capacity else {
        return Ok(problem);
    };
    let fitted = fit_psum_window(&shape, &tiles, scheme, capacity, strict).ok_or(
        Error::InsufficientPsumCapacity {
            required: tiles.m * tiles.k,
            available: capacity,
        },
    )?;
    Ok(validate(shape, fitted, strict)?)
}

pub fn tiles_line(t: &TileConfig) -> String {
    format!(
        "m={} n={} k={} k'={} m'={}",
        t.m,
        t.n,
        t.k,
        t.k_prime.unwrap_or(0),
        t.m_prime.unwrap_or(0)
    )
}

#[derive(Serialize)]
struct Argmin {
    is_os_total: u64,
    ws_os_total: u64,
    argmin: &'static str,
    sign_rule_agrees: bool,
}

#[derive(Serialize)]
struct Analysis {
    shape: GemmShape,
    tiles: TileConfig,
    strict: bool,
    requested: Scheme,
    scheme: Scheme,
    formula_mode: &'static str,
    ema: EmaBreakdown,
    total: u64,
    macs: u64,
    decision: Option<PolicyDecision>,
    #[serde(skip_serializing_if = "Option::is_none")]
    oracle_argmin: Option<Argmin>,
}

pub fn run(args: &AnalyzeArgs, config: &FileConfig) -> Result<Outcome, Failure> {
    let shape = args.shape.shape();
    let strict = args.tiles.strict(config);
    let capacity = args.tiles.psum_capacity(config);
    let tiles = args.tiles.tiles_for(&shape, config);
    let scheme = resolve(args.scheme, &shape);
    let problem = problem_for(shape, tiles, scheme, capacity, strict)?;
    let result = ema_closed_form(&problem, scheme)?;
    let decision = (args.scheme == Scheme::Tas).then(|| choose_scheme(&shape));

    let oracle_argmin = if args.oracle_argmin {
        let total = |s| -> Result<u64, Failure> {
            let p = problem_for(shape, tiles, s, capacity, strict)?;
            Ok(ema_closed_form(&p, s)?.breakdown.total())
        };
        let (is_os, ws_os) = (total(Scheme::InputStationaryOs)?, total(Scheme::WeightStationaryOs)?);
        let argmin = match is_os.cmp(&ws_os) {
            std::cmp::Ordering::Less => "is-os",
            std::cmp::Ordering::Greater => "ws-os",
            std::cmp::Ordering::Equal => "tie",
        };
        let rule = choose_scheme(&shape).chosen.name();
        Some(Argmin {
            is_os_total: is_os,
            ws_os_total: ws_os,
            argmin,
            sign_rule_agrees: argmin == "tie" || argmin == rule,
        })
    } else {
        None
    };

    let b = result.breakdown;
    let t = problem.tiles();
    let mut text = String::new();
    let _ = writeln!(text, "shape: {shape}");
    let _ = writeln!(text, "tiles: {}", tiles_line(&t));
    let _ = writeln!(text, "scheme: {scheme}");
    let _ = writeln!(text, "formula: {}", result.formula_mode.name());
    let _ = writeln!(text, "input_ema: {}", b.input_elems);
    let _ = writeln!(text, "weight_ema: {}", b.weight_elems);
    let _ = writeln!(text, "output_ema: {}", b.output_elems);
    let _ = writeln!(text, "total: {}", b.total());
    if let Some(d) = &decision {
        let _ = writeln!(text, "decision_value: {}", d.decision_value);
        let _ = writeln!(text, "chosen: {} ({})", d.chosen, d.family());
        let _ = writeln!(text, "reused_matrix_elems: {}", d.reused_matrix_elems);
    }
    if let Some(a) = &oracle_argmin {
        let _ = writeln!(
            text,
            "argmin: {} (is-os {}, ws-os {})",
            a.argmin, a.is_os_total, a.ws_os_total
        );
        let _ = writeln!(text, "sign rule agrees: {}", if a.sign_rule_agrees { "yes" } else { "no" });
    }

    let mut report = Report::new(
        "analyze",
        Analysis {
            shape,
            tiles: t,
            strict,
            requested: args.scheme,
            scheme,
            formula_mode: result.formula_mode.name(),
            ema: b,
            total: b.total(),
            macs: shape.macs(),
            decision,
            oracle_argmin,
        },
    )?;
    report.header = vec![
        "scheme", "M", "N", "K", "tile_m", "tile_n", "tile_k", "k_prime", "m_prime", "formula",
        "input_ema", "weight_ema", "output_ema", "total", "decision_value",
    ];
    report.rows = vec![vec![
        scheme.to_string(),
        shape.m.to_string(),
        shape.n.to_string(),
        shape.k.to_string(),
        t.m.to_string(),
        t.n.to_string(),
        t.k.to_string(),
        t.k_prime.unwrap_or(shape.k).to_string(),
        t.m_prime.unwrap_or(shape.m).to_string(),
        result.formula_mode.name().to_string(),
        b.input_elems.to_string(),
        b.weight_elems.to_string(),
        b.output_elems.to_string(),
        b.total().to_string(),
        choose_scheme(&shape).decision_value.to_string(),
    ]];
    report.text = Some(text);
    Ok(Outcome::ok(report))
}
