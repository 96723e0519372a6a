use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tas-ema"))
        .args(args)
        .env_remove("TAS_EMA_CONFIG")
        .output()
        .expect("binary runs")
}

fn stdout(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn field(text: &str, name: &str) -> String {
    text.lines()
        .find_map(|l| l.strip_prefix(&format!("{name}: ")))
        .unwrap_or_else(|| panic!("no {name} in\n{text}"))
        .to_string()
}

fn csv_column(text: &str, name: &str) -> Vec<String> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let idx = r.headers().unwrap().iter().position(|h| h == name).unwrap();
    r.records().map(|rec| rec.unwrap()[idx].to_string()).collect()
}

#[test]
fn analyze_is_on_a_small_shape() {
    let out = stdout(&["analyze", "--M", "4", "--N", "4", "--K", "4", "--tile", "2", "--scheme", "is"]);
    assert_eq!(field(&out, "total"), "80");
    assert_eq!(field(&out, "formula"), "standard");
}

#[test]
fn analyze_tas_picks_is_os_for_short_sequences() {
    let out = stdout(&["analyze", "--M", "115", "--N", "1024", "--K", "1024", "--scheme", "tas"]);
    assert_eq!(field(&out, "chosen"), "is-os (IS)");
    assert_eq!(field(&out, "reused_matrix_elems"), "117760");
}

#[test]
fn oracle_argmin_reports_a_disagreement() {
    let out = stdout(&[
        "analyze", "--M", "15000", "--N", "4096", "--K", "16384", "--tile", "16", "--oracle-argmin",
    ]);
    assert_eq!(field(&out, "chosen"), "is-os (IS)");
    assert!(field(&out, "argmin").starts_with("ws-os"));
    assert_eq!(field(&out, "sign rule agrees"), "no");
}

#[test]
fn user_errors_exit_2_with_one_line() {
    for args in [
        &["analyze", "--M", "0", "--N", "4", "--K", "4"][..],
        &["analyze", "--M", "4"],
        &["analyze", "--M", "8", "--N", "8", "--K", "8", "--tile", "16"],
        &["analyze", "--M", "10", "--N", "8", "--K", "8", "--tile", "4", "--strict"],
        &["analyze", "--M", "8", "--N", "8", "--K", "8", "--scheme", "xs"],
        &["simulate", "--M", "8", "--N", "8", "--K", "8", "--scheme", "naive"],
        &["simulate", "--M", "100000", "--N", "100000", "--K", "100000", "--tile", "1"],
        &["sweep", "--model", "bert-base", "--seq-lens", ""],
        &["model-report", "--model", "no-such-model"],
        &["model-report", "--model", "bert-base", "--energy-ratio", "-1"],
    ] {
        let out = run(args);
        assert_eq!(out.status.code(), Some(2), "{args:?}");
        let err = String::from_utf8(out.stderr).unwrap();
        assert_eq!(err.lines().count(), 1, "{args:?}: {err}");
        assert!(out.stdout.is_empty());
    }
    let err = String::from_utf8(run(&["analyze", "--M", "0", "--N", "4", "--K", "4"]).stderr).unwrap();
    assert!(err.contains("zero dimension"));
    let err = String::from_utf8(run(&["model-report", "--model", "no-such-model"]).stderr).unwrap();
    assert!(err.contains("unknown model"));
}

#[test]
fn simulate_ws_os_has_no_concurrent_rw_steps() {
    let out = stdout(&["simulate", "--M", "8", "--N", "8", "--K", "8", "--tile", "2", "--scheme", "ws-os"]);
    assert_eq!(field(&out, "concurrent_rw_steps"), "0");
    assert_eq!(field(&out, "analytic==simulated"), "yes");
}

#[test]
fn simulate_is_reports_spills() {
    let out = stdout(&[
        "simulate", "--M", "8", "--N", "8", "--K", "8", "--tile", "4", "--tile-n", "2", "--scheme", "is",
    ]);
    assert!(field(&out, "spill_writes").parse::<u64>().unwrap() > 0);
    assert!(field(&out, "concurrent_rw_steps").parse::<u64>().unwrap() > 0);
}

#[test]
fn simulate_verify_passes() {
    let out = stdout(&[
        "simulate", "--verify", "--seed", "7", "--M", "9", "--N", "7", "--K", "10", "--tile", "3",
        "--scheme", "is-os", "--k-prime", "6",
    ]);
    assert_eq!(field(&out, "functional"), "PASS");
    assert_eq!(field(&out, "analytic==simulated"), "yes");
}

#[test]
fn verify_checks_every_scheme() {
    let out = stdout(&["verify", "--M", "12", "--N", "5", "--K", "7", "--tile", "3", "--seed", "1"]);
    assert_eq!(out.matches("functional: PASS").count(), 6);
}

#[test]
fn simulate_writes_a_trace() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("trace.csv");
    stdout(&[
        "simulate", "--M", "4", "--N", "4", "--K", "4", "--tile", "2", "--scheme", "os",
        "--trace", path.to_str().unwrap(),
    ]);
    let trace = std::fs::read_to_string(path).unwrap();
    assert!(trace.starts_with("step,i_row,i_col,w_row,w_col,o_row,o_col,il,wl,sp,fw\n"));
    assert_eq!(trace.lines().count(), 1 + 8);
}

#[test]
fn sequence_sweep_flips_from_is_to_ws() {
    let out = stdout(&["sweep", "--model", "wav2vec2-large", "--seq-lens", "115,384,1565,15000"]);
    assert_eq!(csv_column(&out, "decision"), ["IS", "IS", "WS", "WS"]);
    assert_eq!(csv_column(&out, "M"), ["115", "384", "1565", "15000"]);
    assert_eq!(csv_column(&out, "reused_matrix_elems")[..2], ["117760", "393216"]);
}

#[test]
fn tile_sweep_totals_fall_as_tiles_grow() {
    let out = stdout(&["sweep", "--M", "256", "--N", "128", "--K", "512", "--tiles", "8,16,32"]);
    let totals: Vec<u64> = csv_column(&out, "total").iter().map(|t| t.parse().unwrap()).collect();
    assert_eq!(totals.len(), 3);
    assert!(totals.windows(2).all(|w| w[1] < w[0]), "{totals:?}");
}

#[test]
fn single_point_sweep_has_one_row() {
    let out = stdout(&["sweep", "--N", "1024", "--K", "1024", "--seq-lens", "115"]);
    assert_eq!(out.lines().count(), 2);
}

#[test]
fn sweep_rows_follow_axis_order() {
    let out = stdout(&[
        "sweep", "--N", "64", "--K", "64", "--seq-lens", "300,20,150", "--tiles", "32,8",
    ]);
    assert_eq!(csv_column(&out, "M"), ["300", "300", "20", "20", "150", "150"]);
    assert_eq!(csv_column(&out, "tile_n"), ["32", "8", "32", "8", "32", "8"]);
}

#[test]
fn bert_report_reduces_every_layer_by_97_percent() {
    let out = stdout(&[
        "model-report", "--model", "bert-base", "--seq-len", "512", "--tile", "16", "--format", "csv",
    ]);
    let reductions = csv_column(&out, "tas_vs_naive_ema_pct");
    assert_eq!(reductions.len(), 13);
    for r in reductions {
        assert!(r.parse::<f64>().unwrap() >= 97.0, "{r}");
    }
}

#[test]
fn gpt3_report_has_every_layer() {
    let dir = tempfile::tempdir().unwrap();
    let gemms = dir.path().join("gemms.csv");
    let out = stdout(&[
        "model-report", "--model", "gpt3", "--seq-len", "2048", "--tile", "16", "--format", "csv",
        "--gemm-csv", gemms.to_str().unwrap(),
    ]);
    assert_eq!(csv_column(&out, "layer_id").len(), 97);
    let gemms = std::fs::read_to_string(gemms).unwrap();
    assert!(gemms.starts_with(
        "layer_id,gemm,policy,scheme,decision_value,input_ema,weight_ema,output_ema,total\n"
    ));
    assert_eq!(gemms.lines().count(), 1 + 96 * 6 * 4);
}

#[test]
fn json_output_is_versioned_and_stable() {
    let args = ["model-report", "--model", "wav2vec2-large", "--format", "json"];
    let a = stdout(&args);
    assert_eq!(a, stdout(&args));
    let doc: serde_json::Value = serde_json::from_str(&a).unwrap();
    assert_eq!(doc["schema_version"], 1);
    assert_eq!(doc["command"], "model-report");
    assert_eq!(doc["layers"].as_array().unwrap().len(), 24);
    assert_eq!(doc["ranking"].as_array().unwrap().len(), 4);

    let sim = ["simulate", "--M", "6", "--N", "6", "--K", "6", "--tile", "2", "--verify", "--format", "json"];
    assert_eq!(stdout(&sim), stdout(&sim));
    let doc: serde_json::Value = serde_json::from_str(&stdout(&sim)).unwrap();
    assert_eq!(doc["analytic_matches"], true);
    assert_eq!(doc["functional"], "PASS");
}

#[test]
fn timestamps_only_when_asked() {
    let args = ["analyze", "--M", "4", "--N", "4", "--K", "4", "--format", "json"];
    assert!(!stdout(&args).contains("generated_at"));
    let mut stamped = args.to_vec();
    stamped.push("--timestamps");
    assert!(stdout(&stamped).contains("generated_at_unix"));
}

#[test]
fn output_flag_writes_a_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("presets.csv");
    let out = stdout(&["presets", "--format", "csv", "--output", path.to_str().unwrap()]);
    assert!(out.is_empty());
    let text = std::fs::read_to_string(path).unwrap();
    assert_eq!(text.lines().count(), 6);
    assert!(text.contains("vit-g14,4096,16384,48,518,published,assumed,public-model,published"));
}

#[test]
fn config_file_adds_models_and_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("tas.toml");
    std::fs::write(
        &path,
        "tile = 8\n\n[[model]]\nname = \"tiny\"\nhidden_dim = 64\nffn_dim = 256\nnum_layers = 2\ndefault_seq_len = 32\n",
    )
    .unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_tas-ema"))
        .args(["model-report", "--model", "tiny", "--format", "json"])
        .env("TAS_EMA_CONFIG", &path)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let doc: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(doc["tiles"]["m"], 8);
    assert_eq!(doc["seq_len"], 32);
    assert_eq!(doc["provenance"]["hidden_dim"], "config");

    std::fs::write(&path, "tile = \"big\"\n").unwrap();
    let out = run(&["presets", "--config", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}
