use std::fmt::Write as _;
use std::fs::File;
use std::io::BufWriter;

use serde::Serialize;
use tas_ema::policy::resolve;
use tas_ema::sim::MAX_SIM_STEPS;
use tas_ema::{
    ema_closed_form, simulate, verify_functional, BufferModel, EmaBreakdown, GemmShape, Scheme,
    SimReport, TileConfig, TileSchedule, ValidatedProblem, Verdict,
};

use crate::analyze::{problem_for, tiles_line};
use crate::args::{SimulateArgs, VerifyArgs};
use crate::config::FileConfig;
use crate::report::Report;
use crate::{Failure, Outcome};

fn check_size(problem: &ValidatedProblem) -> Result<(), Failure> {
    let steps = problem.step_count();
    if steps > MAX_SIM_STEPS {
        return Err(Failure::user(format!(
            "schedule has {steps} steps, above the trace limit of {MAX_SIM_STEPS}; use `tas-ema analyze` for the closed form"
        )));
    }
    Ok(())
}

fn verdict_text(v: &Verdict) -> String {
    match v {
        Verdict::Pass => "PASS".to_string(),
        Verdict::Fail(reason) => format!("FAIL ({reason})"),
    }
}

#[derive(Serialize)]
struct Simulation {
    shape: GemmShape,
    tiles: TileConfig,
    scheme: Scheme,
    buffers: BufferModel,
    report: SimReport,
    analytic: EmaBreakdown,
    analytic_matches: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    functional: Option<String>,
}

pub fn run_simulate(args: &SimulateArgs, config: &FileConfig) -> Result<Outcome, Failure> {
    let shape = args.shape.shape();
    let strict = args.tiles.strict(config);
    let capacity = args.tiles.psum_capacity(config);
    let scheme = resolve(args.scheme, &shape);
    let problem = problem_for(shape, args.tiles.tiles_for(&shape, config), scheme, capacity, strict)?;
    check_size(&problem)?;

    let schedule = TileSchedule::generate(&problem, scheme, args.traversal.into())?;
    let buffers = BufferModel {
        input_tile_slots: args.input_slots,
        weight_tile_slots: args.weight_slots,
        psum_capacity_elems: capacity.unwrap_or_else(|| schedule.psum_requirement()),
    };
    let sim = simulate(&schedule, &buffers)?;
    let analytic = ema_closed_form(&problem, scheme)?.breakdown;
    let matches = analytic == sim.ema;

    if let Some(path) = &args.trace {
        let file = File::create(path)
            .map_err(|e| Failure::user(format!("cannot write {}: {e}", path.display())))?;
        schedule
            .write_csv(BufWriter::new(file))
            .map_err(|e| Failure::user(format!("cannot write {}: {e}", path.display())))?;
    }
    let verdict = if args.verify {
        Some(verify_functional(&schedule, args.seed)?)
    } else {
        None
    };

    let b = sim.ema;
    let mut text = String::new();
    let _ = writeln!(text, "shape: {shape}");
    let _ = writeln!(text, "tiles: {}", tiles_line(&problem.tiles()));
    let _ = writeln!(text, "scheme: {scheme}");
    let fields = [
        ("steps", sim.steps_executed),
        ("input_ema", b.input_elems),
        ("weight_ema", b.weight_elems),
        ("output_ema", b.output_elems),
        ("total", b.total()),
        ("spill_writes", sim.spill_writes),
        ("spill_reloads", sim.spill_reloads),
        ("spill_reload_elems", sim.spill_reload_elems),
        ("concurrent_rw_steps", sim.concurrent_rw_steps),
        ("posted_write_overlaps", sim.posted_write_overlaps),
        ("peak_psum_elems", sim.peak_psum_elems),
    ];
    for (name, v) in fields {
        let _ = writeln!(text, "{name}: {v}");
    }
    let _ = writeln!(text, "analytic==simulated: {}", if matches { "yes" } else { "no" });
    if let Some(v) = &verdict {
        let _ = writeln!(text, "functional: {}", verdict_text(v));
    }

    let mut report = Report::new(
        "simulate",
        Simulation {
            shape,
            tiles: problem.tiles(),
            scheme,
            buffers,
            report: sim,
            analytic,
            analytic_matches: matches,
            functional: verdict.as_ref().map(verdict_text),
        },
    )?;
    report.header = vec!["scheme"];
    report.header.extend(fields.iter().map(|f| f.0));
    report.header.extend(["analytic_total", "analytic_matches", "functional"]);
    let mut row = vec![scheme.to_string()];
    row.extend(fields.iter().map(|f| f.1.to_string()));
    row.push(analytic.total().to_string());
    row.push(matches.to_string());
    row.push(verdict.as_ref().map(verdict_text).unwrap_or_default());
    report.rows = vec![row];
    report.text = Some(text);

    let failure = if !matches {
        Some(Failure::internal(format!(
            "simulated EMA {} differs from the closed form {}",
            b.total(),
            analytic.total()
        )))
    } else if let Some(Verdict::Fail(reason)) = verdict {
        Some(Failure::internal(format!("functional check failed: {reason}")))
    } else {
        None
    };
    Ok(Outcome { report, failure })
}

#[derive(Serialize)]
struct Check {
    scheme: Scheme,
    verdict: String,
}

pub fn run_verify(args: &VerifyArgs, config: &FileConfig) -> Result<Outcome, Failure> {
    let shape = args.shape.shape();
    let strict = args.tiles.strict(config);
    let capacity = args.tiles.psum_capacity(config);
    let tiles = args.tiles.tiles_for(&shape, config);
    let schemes: Vec<Scheme> = match args.scheme {
        Some(s) => vec![resolve(s, &shape)],
        None => Scheme::SCHEDULED.to_vec(),
    };

    let mut checks = Vec::new();
    let mut failed = None;
    for scheme in schemes {
        let problem = problem_for(shape, tiles, scheme, capacity, strict)?;
        check_size(&problem)?;
        let schedule = TileSchedule::generate(&problem, scheme, args.traversal.into())?;
        let verdict = verify_functional(&schedule, args.seed)?;
        if let Verdict::Fail(reason) = &verdict {
            failed.get_or_insert_with(|| Failure::internal(format!("{scheme}: functional check failed: {reason}")));
        }
        checks.push(Check {
            scheme,
            verdict: verdict_text(&verdict),
        });
    }

    let mut text = String::new();
    if let [only] = checks.as_slice() {
        let _ = writeln!(text, "scheme: {}", only.scheme);
        let _ = writeln!(text, "functional: {}", only.verdict);
    } else {
        for c in &checks {
            let _ = writeln!(text, "{}: functional: {}", c.scheme, c.verdict);
        }
    }

    #[derive(Serialize)]
    struct Verification {
        shape: GemmShape,
        seed: u64,
        checks: Vec<Check>,
    }
    let rows = checks
        .iter()
        .map(|c| vec![c.scheme.to_string(), c.verdict.clone()])
        .collect();
    let mut report = Report::new(
        "verify",
        Verification {
            shape,
            seed: args.seed,
            checks,
        },
    )?;
    report.header = vec!["scheme", "functional"];
    report.rows = rows;
    report.text = Some(text);
    Ok(Outcome {
        report,
        failure: failed,
    })
}
