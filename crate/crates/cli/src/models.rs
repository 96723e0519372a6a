use std::fs::File;

use serde::Serialize;
use tas_ema::energy::RankedPolicy;
use tas_ema::workload::{ExpandOptions, FieldSource, ModelProvenance};
use tas_ema::{
    compare, energy, reduction_ratio, workload_ema, EmaBreakdown, EnergyParams, EvalOptions,
    PolicyCost, Scheme, TileConfig, WorkloadEma,
};

use crate::args::{EnergyArgs, ModelReportArgs, DEFAULT_TILE};
use crate::config::FileConfig;
use crate::report::{pct, Report};
use crate::{Failure, Outcome};

const POLICIES: [(&str, Scheme); 4] = [
    ("naive", Scheme::Naive),
    ("fixed-is-os", Scheme::InputStationaryOs),
    ("fixed-ws-os", Scheme::WeightStationaryOs),
    ("tas", Scheme::Tas),
];

#[derive(Debug, Clone, Copy, Serialize)]
struct EnergySettings {
    ext_cost_per_elem: f64,
    int_cost_per_mac: f64,
    bytes_per_elem: f64,
}

impl EnergySettings {
    fn resolve(args: &EnergyArgs, config: &FileConfig) -> Result<(Self, EnergyParams), Failure> {
        let (ext, int) = match args.energy_ratio {
            Some(r) => (r, 1.0),
            None => (
                args.ext_cost.or(config.energy.ext_cost_per_elem).unwrap_or(64.0),
                args.int_cost.or(config.energy.int_cost_per_mac).unwrap_or(1.0),
            ),
        };
        let bytes = args.bytes_per_elem.or(config.energy.bytes_per_elem).unwrap_or(1.0);
        if !(bytes.is_finite() && bytes > 0.0) {
            return Err(Failure::user(format!("bytes per element must be positive, got {bytes}")));
        }
        let params = EnergyParams::new(ext * bytes, int)?;
        let settings = Self {
            ext_cost_per_elem: ext,
            int_cost_per_mac: int,
            bytes_per_elem: bytes,
        };
        Ok((settings, params))
    }
}

#[derive(Serialize)]
struct PolicyRow {
    policy: &'static str,
    ema: EmaBreakdown,
    total: u64,
    energy: f64,
}

#[derive(Serialize)]
struct Reductions {
    tas_vs_naive_ema: f64,
    tas_vs_naive_energy: f64,
    tas_vs_fixed_is_os_ema: f64,
    tas_vs_fixed_ws_os_ema: f64,
}

#[derive(Serialize)]
struct LayerRow {
    layer_id: Option<u64>,
    macs: u64,
    policies: Vec<PolicyRow>,
    reductions: Reductions,
}

#[derive(Serialize)]
struct ModelReport {
    model: String,
    seq_len: u64,
    tiles: TileConfig,
    strict: bool,
    energy: EnergySettings,
    provenance: ModelProvenance,
    layers: Vec<LayerRow>,
    total: LayerRow,
    ranking: Vec<RankedPolicy>,
}

fn layer_row(
    layer_id: Option<u64>,
    emas: [EmaBreakdown; 4],
    macs: u64,
    params: &EnergyParams,
) -> Result<LayerRow, Failure> {
    let e = |b: &EmaBreakdown| energy(b, macs, params);
    let energy_red = (e(&emas[0]) - e(&emas[3])) / e(&emas[0]);
    Ok(LayerRow {
        layer_id,
        macs,
        policies: POLICIES
            .iter()
            .zip(emas)
            .map(|(&(policy, _), ema)| PolicyRow {
                policy,
                ema,
                total: ema.total(),
                energy: e(&ema),
            })
            .collect(),
        reductions: Reductions {
            tas_vs_naive_ema: reduction_ratio(&emas[0], &emas[3])?,
            tas_vs_naive_energy: energy_red,
            tas_vs_fixed_is_os_ema: reduction_ratio(&emas[1], &emas[3])?,
            tas_vs_fixed_ws_os_ema: reduction_ratio(&emas[2], &emas[3])?,
        },
    })
}

fn csv_row(row: &LayerRow) -> Vec<String> {
    let mut out = vec![row.layer_id.map_or("total".to_string(), |l| l.to_string())];
    out.extend(row.policies.iter().map(|p| p.total.to_string()));
    out.push(row.macs.to_string());
    out.extend(row.policies.iter().map(|p| format!("{:.6e}", p.energy)));
    let r = &row.reductions;
    out.extend(
        [r.tas_vs_naive_ema, r.tas_vs_naive_energy, r.tas_vs_fixed_is_os_ema, r.tas_vs_fixed_ws_os_ema]
            .map(pct),
    );
    out
}

fn write_gemm_csv(path: &std::path::Path, runs: &[WorkloadEma]) -> Result<(), Failure> {
    let fail = |e: &dyn std::fmt::Display| Failure::user(format!("cannot write {}: {e}", path.display()));
    let file = File::create(path).map_err(|e| fail(&e))?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record([
        "layer_id", "gemm", "policy", "scheme", "decision_value", "input_ema", "weight_ema",
        "output_ema", "total",
    ])
    .map_err(|e| fail(&e))?;
    for (run, (policy, _)) in runs.iter().zip(POLICIES) {
        for layer in &run.layers {
            for g in &layer.gemms {
                let b = g.result.breakdown;
                w.write_record([
                    layer.layer_id.to_string(),
                    g.label.map_or("gemm", |l| l.name()).to_string(),
                    policy.to_string(),
                    g.result.scheme.to_string(),
                    g.decision_value().to_string(),
                    b.input_elems.to_string(),
                    b.weight_elems.to_string(),
                    b.output_elems.to_string(),
                    b.total().to_string(),
                ])
                .map_err(|e| fail(&e))?;
            }
        }
    }
    w.flush().map_err(|e| fail(&e))
}

pub fn run_report(args: &ModelReportArgs, config: &FileConfig) -> Result<Outcome, Failure> {
    let registry = config.registry()?;
    let model = registry.get(&args.model)?;
    let seq_len = args.seq_len.unwrap_or(model.default_seq_len);
    let tiles = args
        .tiles
        .with_size(args.tiles.tile.or(config.tile).unwrap_or(DEFAULT_TILE));
    let (settings, params) = EnergySettings::resolve(&args.energy, config)?;
    let opts = EvalOptions {
        strict: args.tiles.strict(config),
        psum_capacity: args.tiles.psum_capacity(config),
        expand: ExpandOptions {
            include_attention: args.attention,
            include_pooler: args.pooler,
        },
    };

    let runs = POLICIES
        .iter()
        .map(|&(_, scheme)| workload_ema(model, seq_len, &tiles, scheme, &opts))
        .collect::<Result<Vec<_>, _>>()?;
    if let Some(path) = &args.gemm_csv {
        write_gemm_csv(path, &runs)?;
    }

    let layers = (0..runs[0].layers.len())
        .map(|i| {
            let l = &runs[0].layers[i];
            let emas = [0, 1, 2, 3].map(|p| runs[p].layers[i].total);
            layer_row(Some(l.layer_id), emas, l.macs, &params)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let total = layer_row(None, [0, 1, 2, 3].map(|p| runs[p].total), runs[0].macs, &params)?;
    let costs: Vec<PolicyCost> = POLICIES
        .iter()
        .zip(&runs)
        .map(|(&(label, _), run)| PolicyCost::new(label, run.total, run.macs))
        .collect();
    let ranking = compare(&costs, &params)?.policies;

    let header = vec![
        "layer_id",
        "naive_ema",
        "fixed_is_os_ema",
        "fixed_ws_os_ema",
        "tas_ema",
        "macs",
        "naive_energy",
        "fixed_is_os_energy",
        "fixed_ws_os_energy",
        "tas_energy",
        "tas_vs_naive_ema_pct",
        "tas_vs_naive_energy_pct",
        "tas_vs_fixed_is_os_ema_pct",
        "tas_vs_fixed_ws_os_ema_pct",
    ];
    let mut rows: Vec<Vec<String>> = layers.iter().map(csv_row).collect();
    rows.push(csv_row(&total));

    let mut report = Report::new(
        "model-report",
        ModelReport {
            model: model.name.clone(),
            seq_len,
            tiles,
            strict: opts.strict,
            energy: settings,
            provenance: model.provenance,
            layers,
            total,
            ranking,
        },
    )?;
    report.header = header;
    report.rows = rows;
    Ok(Outcome::ok(report))
}

fn source(s: FieldSource) -> String {
    serde_json::to_value(s)
        .ok()
        .and_then(|v| v.as_str().map(str::to_string))
        .unwrap_or_default()
}

pub fn run_presets(config: &FileConfig) -> Result<Outcome, Failure> {
    let registry = config.registry()?;
    let models: Vec<_> = registry.iter().cloned().collect();
    let rows = models
        .iter()
        .map(|m| {
            let p = m.provenance;
            vec![
                m.name.clone(),
                m.hidden_dim.to_string(),
                m.ffn_dim.to_string(),
                m.num_layers.to_string(),
                m.default_seq_len.to_string(),
                source(p.hidden_dim),
                source(p.ffn_dim),
                source(p.num_layers),
                source(p.default_seq_len),
            ]
        })
        .collect();

    #[derive(Serialize)]
    struct Presets {
        models: Vec<tas_ema::ModelConfig>,
    }
    let mut report = Report::new("presets", Presets { models })?;
    report.header = vec![
        "name",
        "hidden_dim",
        "ffn_dim",
        "num_layers",
        "default_seq_len",
        "hidden_source",
        "ffn_source",
        "layers_source",
        "seq_len_source",
    ];
    report.rows = rows;
    Ok(Outcome::ok(report))
}
