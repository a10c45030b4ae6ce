use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use imc_forge::dse::report::COLUMNS;

fn data(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/data").join(rel)
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_imc-forge"))
        .args(args)
        .env_remove("IMC_FORGE_LOG")
        .output()
        .expect("spawn imc-forge")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn first_line(s: &str) -> &str {
    s.lines().next().unwrap_or("")
}

fn write_arch(dir: &Path, body: &str) -> PathBuf {
    let p = dir.join("arch.toml");
    fs::write(&p, body).unwrap();
    p
}

const SMALL_AIMC: &str = r#"
name = "small"
node = 28.0
paradigm = "AIMC"
R = 64
C = 32
B_w = 4
B_i = 4
ADC_res = 6
DAC_res = 4
V = 0.8
f_clk = 200e6
"#;

#[test]
fn eval_peak_matches_golden() {
    let arch = data("arch/aimc_1152x256.toml");
    let o = run(&["eval-peak", "--arch", arch.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let golden = include_str!("golden/eval_peak_aimc_1152x256.txt");
    assert_eq!(String::from_utf8(o.stdout).unwrap(), golden);
}

#[test]
fn eval_peak_json_is_parseable() {
    let arch = data("arch/dimc_48x4.toml");
    let o = run(&["eval-peak", "--arch", arch.to_str().unwrap(), "--format", "json"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let row = &v[0];
    assert_eq!(row["arch"], "dimc_48x4");
    assert!(row["topsw"].as_f64().unwrap() > 0.0);
    assert_eq!(row["e_adc_fj"].as_f64().unwrap(), 0.0);
}

#[test]
fn zero_voltage_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let arch = write_arch(dir.path(), &SMALL_AIMC.replace("V = 0.8", "V = 0.0"));
    let o = run(&["eval-peak", "--arch", arch.to_str().unwrap()]);
    assert!(!o.status.success());
    let err = stderr(&o);
    assert!(first_line(&err).starts_with("error: "), "{err}");
    assert!(err.contains('V'), "{err}");
}

#[test]
fn dimc_with_adc_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let body = SMALL_AIMC.replace("\"AIMC\"", "\"DIMC\"").replace("ADC_res = 6", "ADC_res = 8");
    let arch = write_arch(dir.path(), &body);
    let o = run(&["eval-peak", "--arch", arch.to_str().unwrap()]);
    assert!(!o.status.success());
    let err = stderr(&o);
    assert!(first_line(&err).starts_with("error: "), "{err}");
    assert!(err.contains("ADC"), "{err}");
}

#[test]
fn malformed_arch_reports_location() {
    let dir = tempfile::tempdir().unwrap();
    let arch = write_arch(dir.path(), "R = = 4\n");
    let o = run(&["eval-peak", "--arch", arch.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("arch.toml:1:"), "{}", stderr(&o));
}

#[test]
fn missing_workload_exits_2_and_names_path() {
    let dir = tempfile::tempdir().unwrap();
    let arch = write_arch(dir.path(), SMALL_AIMC);
    let missing = dir.path().join("no_such_net.json");
    let o = run(&[
        "map",
        "--arch",
        arch.to_str().unwrap(),
        "--workload",
        missing.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(first_line(&err).starts_with("error: "));
    assert!(first_line(&err).contains("no_such_net.json"), "{err}");
}

#[test]
fn bad_arguments_exit_2() {
    let o = run(&["map", "--threads", "many"]);
    assert_eq!(o.status.code(), Some(2));
}

fn map_csv(dir: &Path, extra: &[&str]) -> String {
    let arch = data("arch/aimc_64x32.toml");
    let net = data("networks/ds_cnn.json");
    let mut args = vec![
        "map",
        "--arch",
        arch.to_str().unwrap(),
        "--workload",
        net.to_str().unwrap(),
        "--out",
        dir.to_str().unwrap(),
        "--format",
        "csv",
    ];
    args.extend_from_slice(extra);
    let o = run(&args);
    assert!(o.status.success(), "{}", stderr(&o));
    fs::read_to_string(dir.join("report.csv")).unwrap()
}

#[test]
fn csv_header_follows_column_order() {
    let dir = tempfile::tempdir().unwrap();
    let csv = map_csv(dir.path(), &[]);
    let header: Vec<&str> = first_line(&csv).split(',').collect();
    assert_eq!(header, COLUMNS);
    let last = csv.lines().last().unwrap();
    assert!(last.starts_with("ds_cnn,aimc_64x32,TOTAL,"), "{last}");
}

#[test]
fn reports_identical_across_thread_counts() {
    let runs: Vec<String> = [&["--single-thread"][..], &["--threads", "1"], &["--threads", "2"], &["--threads", "4"]]
        .iter()
        .map(|extra| {
            let dir = tempfile::tempdir().unwrap();
            map_csv(dir.path(), extra)
        })
        .collect();
    for r in &runs[1..] {
        assert!(r == &runs[0], "report differs between thread counts");
    }
}

#[test]
fn dump_mappings_writes_candidate_json() {
    let dir = tempfile::tempdir().unwrap();
    map_csv(dir.path(), &["--dump-mappings"]);
    let src = fs::read_to_string(dir.path().join("mappings.json")).unwrap();
    let v: serde_json::Value = serde_json::from_str(&src).unwrap();
    let layers = v.as_array().unwrap();
    assert_eq!(layers.len(), 10);
    for l in layers {
        assert_eq!(l["arch"], "aimc_64x32");
        let cands = l["candidates"].as_array().unwrap();
        assert!(!cands.is_empty());
        assert!(cands.iter().any(|c| c["energy_total_with_memory"].is_number()));
    }
}

#[test]
fn report_rerenders_saved_json_as_same_csv() {
    let dir = tempfile::tempdir().unwrap();
    let csv = map_csv(dir.path(), &[]);
    let arch = data("arch/aimc_64x32.toml");
    let net = data("networks/ds_cnn.json");
    let o = run(&[
        "map",
        "--arch",
        arch.to_str().unwrap(),
        "--workload",
        net.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let json = dir.path().join("report.json");
    let o = run(&["report", json.to_str().unwrap(), "--format", "csv"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(String::from_utf8(o.stdout).unwrap(), csv);
}

#[test]
fn fit_tech_output_feeds_validate() {
    let dir = tempfile::tempdir().unwrap();
    let tech = dir.path().join("tech.toml");
    let dp = data("datapoints.json");
    let o = run(&["fit-tech", "--datapoints", dp.to_str().unwrap(), "--out", tech.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(String::from_utf8_lossy(&o.stdout).contains("k3 = "));
    let o = run(&[
        "validate",
        "--datapoints",
        dp.to_str().unwrap(),
        "--tech",
        tech.to_str().unwrap(),
        "--format",
        "json",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["rows"].as_array().unwrap().len(), 3);
}
