//! Runs the command line on every configuration in `examples/configs` and
//! reports the exit codes. Outputs go to a scratch directory.

use std::path::Path;

use nonlocal_core::cli;

fn main() {
    let configs = Path::new(env!("CARGO_MANIFEST_DIR")).join("examples/configs");
    let scratch = std::env::temp_dir().join("nonlocal-cli-examples");
    let field = scratch.join("solve_linear/field.nltf");
    let runs: &[(&str, &str, &[&str])] = &[
        ("solve-linear", "solve_linear.toml", &[]),
        ("solve-linear", "imex.toml", &[]),
        ("solve-quasilinear", "inline_quasilinear.toml", &[]),
        ("solve-fullnl", "fullnl_exp.toml", &["--variant", "spatial"]),
        ("solve-fullnl", "fullnl_exp.toml", &["--variant", "temporal"]),
        ("quasilinearize", "fullnl_exp.toml", &[]),
        ("verify-mms", "verify_mms.toml", &[]),
        ("check-ellipticity", "ellipticity_negative.toml", &[]),
        ("norms", "norms.toml", &["--field", field.to_str().unwrap()]),
        ("convergence", "convergence.toml", &[]),
        ("check-equivalence", "equivalence.toml", &[]),
    ];
    for (cmd, file, extra) in runs {
        let name = file.trim_end_matches(".toml");
        let dir = scratch.join(name);
        let mut argv = vec!["nonlocal".to_string(), cmd.to_string()];
        argv.extend(extra.iter().map(|s| s.to_string()));
        argv.extend([
            "--config".into(),
            configs.join(file).display().to_string(),
            "--set".into(),
            format!("output.dir={:?}", dir.display().to_string()),
        ]);
        let code = cli::run(argv);
        println!("{cmd:18} {file:26} exit {code}  -> {}", dir.join("report.json").display());
    }
}
