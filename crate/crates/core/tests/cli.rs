use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use nonlocal_core::grid::nltf;
use nonlocal_core::linsolve::{solve_nonlocal_linear, SchemeConfig};
use nonlocal_core::grid::build_grid;
use nonlocal_core::systems::make_preset;

fn nonlocal(dir: &Path, args: &[&str], config: &str) -> Output {
    let cfg = dir.join("run.toml");
    fs::write(&cfg, config).unwrap();
    let out_dir = dir.join("out");
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_nonlocal"));
    cmd.args(args)
        .arg("--config")
        .arg(&cfg)
        .arg("--set")
        .arg(format!("output.dir={:?}", out_dir.to_str().unwrap()))
        .arg("--threads")
        .arg("1");
    cmd.output().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const HEAT: &str = r#"
[problem]
preset = "nonlocal_heat_linear"

[grid]
T = 0.125
n_tau = 8
n_y = 16

[output]
formats = ["nltf", "json", "csv"]
"#;

#[test]
fn solve_linear_writes_field_sidecar_and_report() {
    let tmp = tempfile::tempdir().unwrap();
    let o = nonlocal(tmp.path(), &["solve-linear"], HEAT);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = tmp.path().join("out");
    for f in ["field.nltf", "field.meta.json", "report.json"] {
        assert!(out.join(f).is_file(), "missing {f}");
    }
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["command"], "solve-linear");
    assert_eq!(report["grid"]["n_tau"], 8);

    // the stored field is bitwise the library solve
    let (field, meta) = nltf::load(&out.join("field.nltf")).unwrap();
    let g = build_grid(0.125, 8, 2.0 * std::f64::consts::PI, 16, 1, 1, 1).unwrap();
    let spec = make_preset("nonlocal_heat_linear").unwrap().into_linear().unwrap();
    let (direct, _) = solve_nonlocal_linear(&spec, &g, &SchemeConfig::explicit()).unwrap();
    assert_eq!(meta.problem, "nonlocal_heat_linear");
    assert_eq!(field.grid(), direct.grid());
    assert!(field.values().zip(direct.values()).all(|(a, b)| a.to_bits() == b.to_bits()));

    // CSV slices: 17 significant digits, \n endings, values parse back exactly
    let csv = fs::read_to_string(out.join("slices").join("t_8.csv")).unwrap();
    assert!(!csv.contains('\r'));
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("s,y1,u0"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 9 * 16);
    let last = rows[rows.len() - 1];
    let cells: Vec<&str> = last.split(',').collect();
    let mantissa = cells[2].split('e').next().unwrap().trim_start_matches('-');
    assert_eq!(mantissa.chars().filter(|c| c.is_ascii_digit()).count(), 17);
    assert_eq!(cells[2].parse::<f64>().unwrap().to_bits(), direct.slice(8, 8)[15].to_bits());
}

#[test]
fn unknown_key_is_a_config_error_naming_the_key() {
    let tmp = tempfile::tempdir().unwrap();
    let o = nonlocal(tmp.path(), &["solve-linear"], &format!("{HEAT}\n[schme]\nkind = \"imex\"\n"));
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.starts_with("ERROR "), "{err}");
    assert!(err.contains("schme"), "{err}");
}

#[test]
fn cfl_violation_exits_two() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = HEAT.replace("T = 0.125", "T = 1.0");
    let o = nonlocal(tmp.path(), &["solve-linear"], &cfg);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stderr(&o).contains("CflViolation") || stderr(&o).contains("Cfl"), "{}", stderr(&o));
}

#[test]
fn wrong_forcing_fails_the_mms_gate() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = r#"
[problem]
kind = "linear"
name = "wrong"
[problem.expressions]
"A.q11" = "1"
"B.q11" = "1"
f = "(1+t)*sin(y1)"
g = "2*(1+t)*sin(y1)"

[grid]
T = 0.25
n_tau = 16
n_y = 16

[mms]
exact = "sine_product"
force = false
"#;
    let o = nonlocal(tmp.path(), &["verify-mms"], cfg);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("out/report.json")).unwrap()).unwrap();
    let failing = report["gates"].as_array().unwrap().iter().any(|g| g["passed"] == false);
    assert!(failing, "{report}");
}

#[test]
fn negative_ellipticity_exits_three_with_witness() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = r#"
[problem]
preset = "nonlocal_negative"

[grid]
T = 0.25
n_tau = 8
n_y = 8
"#;
    let o = nonlocal(tmp.path(), &["check-ellipticity"], cfg);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    let text = fs::read_to_string(tmp.path().join("out/report.json")).unwrap();
    assert!(text.contains("worst_case") && !text.contains("\"worst_case\": null"), "{text}");
}

#[test]
fn set_overrides_and_usage_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let o = nonlocal(tmp.path(), &["solve-linear", "--set", "grid.n_y=8"], HEAT);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let (field, _) = nltf::load(&tmp.path().join("out/field.nltf")).unwrap();
    assert_eq!(field.grid().n_y(), 8);

    let o = Command::new(env!("CARGO_BIN_EXE_nonlocal")).arg("no-such-command").output().unwrap();
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).starts_with("ERROR UsageError"));
}
