use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};
use tempfile::TempDir;

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_tailforge"));
    cmd.env_remove("TAILFORGE_SEED");
    cmd
}

fn write_config(dir: &TempDir, name: &str, value: &Value) -> PathBuf {
    let path = dir.path().join(name);
    std::fs::write(&path, serde_json::to_string_pretty(value).unwrap()).unwrap();
    path
}

fn run(sub: &str, config: &Path, extra: &[&str]) -> Output {
    bin().arg(sub).arg("--config").arg(config).args(extra).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

#[test]
fn conjugate_of_half_square_reads_four_and_a_half_at_three() {
    let dir = TempDir::new().unwrap();
    std::fs::write(dir.path().join("g.json"), r#"{"kind":"quadratic","a":0.5}"#).unwrap();
    let cfg = write_config(
        &dir,
        "c.json",
        &json!({"generator": "g.json", "lambda_max": 3.0, "lambda_nodes": 4, "t_nodes": 4097}),
    );
    let out = run("conjugate", &cfg, &[]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    assert!(text.starts_with("lambda,g_star,argmax_t\n"));
    assert!(text.contains("\n3,4.5,3\n"), "{text}");
}

#[test]
fn conjugate_json_includes_biconjugate() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        &dir,
        "c.json",
        &json!({"generator": {"kind": "quadratic", "a": 0.5}, "biconjugate_grid": [0.5, 1.0, 2.0]}),
    );
    let out = run("conjugate", &cfg, &["--format", "json"]);
    assert_eq!(code(&out), 0);
    let v: Value = serde_json::from_str(&stdout(&out)).unwrap();
    let gg = v["biconjugate"]["g_star_star"].as_array().unwrap();
    assert!((gg[2].as_f64().unwrap() - 2.0).abs() < 1e-2);
}

#[test]
fn non_convex_generator_exits_two_with_violations() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        &dir,
        "c.json",
        &json!({"generator": {"kind": "tabulated", "grid": [0.0, 1.0, 2.0, 3.0], "values": [0.0, 2.0, 3.0, 9.0]}}),
    );
    let out = run("conjugate", &cfg, &[]);
    assert_eq!(code(&out), 2);
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("convex"), "{err}");
}

#[test]
fn lambda_beyond_domain_slopes_exits_three() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        &dir,
        "c.json",
        &json!({"generator": {"kind": "tabulated", "grid": [0.0, 1.0, 2.0], "values": [0.0, 0.5, 2.0]}, "lambda_grid": [0.0, 1.0, 5.0]}),
    );
    assert_eq!(code(&run("conjugate", &cfg, &[])), 3);
}

#[test]
fn gaussian_fixed_point_bound_is_constant_in_n() {
    let dir = TempDir::new().unwrap();
    let mut columns = Vec::new();
    for n in [1, 4, 16, 256] {
        let cfg = write_config(
            &dir,
            "b.json",
            &json!({"generator": {"kind": "quadratic", "a": 0.5}, "constant": 1.0, "n": n, "t_grid": [1.0, 2.0, 3.0]}),
        );
        let out = run("bound", &cfg, &[]);
        assert_eq!(code(&out), 0);
        columns.push(stdout(&out));
    }
    assert!(columns.windows(2).all(|w| w[0] == w[1]));
    assert!(columns[0].contains("2,-2,0.270670566,quadratic"), "{}", columns[0]);
}

#[test]
fn bilateral_bound_clamps_at_small_t() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        &dir,
        "b.json",
        &json!({"generator": {"kind": "quadratic", "a": 0.5}, "constant": 1.0, "n": 4, "t_grid": [1e-3]}),
    );
    let out = run("bound", &cfg, &["--format", "json"]);
    assert_eq!(code(&out), 0);
    let v: Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(v["curve"][0]["bound"], 1.0);
    assert_eq!(v["curve"][0]["regime"], "saturated_at_one");
}

#[test]
fn missing_constant_exits_two() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        &dir,
        "b.json",
        &json!({"generator": {"kind": "quadratic", "a": 0.5}, "n": 4, "t_grid": [1.0]}),
    );
    let out = run("bound", &cfg, &[]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing constant"));
}

#[test]
fn unknown_config_key_exits_two() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        &dir,
        "b.json",
        &json!({"generator": {"kind": "quadratic", "a": 0.5}, "constant": 1.0, "n": 4, "t_grid": [1.0], "colour": 1}),
    );
    assert_eq!(code(&run("bound", &cfg, &[])), 2);
}

#[test]
fn calibration_feeds_bound_through_a_file() {
    let dir = TempDir::new().unwrap();
    let cal = write_config(
        &dir,
        "cal.json",
        &json!({"generator": {"kind": "quadratic", "a": 0.5}, "law": {"name": "gaussian", "sigma": 1.0}, "lambda_range": 8.0}),
    );
    let out = run("calibrate", &cal, &["--output", dir.path().join("C.json").to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    let v: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("C.json")).unwrap()).unwrap();
    let c = v["constant"].as_f64().unwrap();
    assert!((0.999..=1.001).contains(&c), "{c}");

    let b = write_config(
        &dir,
        "b.json",
        &json!({"generator": {"kind": "quadratic", "a": 0.5}, "calibration_file": "C.json", "n": 4, "t_grid": [2.0]}),
    );
    let out = run("bound", &b, &["--format", "json"]);
    assert_eq!(code(&out), 0);
    let v: Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(v["constant"].as_f64().unwrap(), c);
    assert_eq!(v["calibration"]["mgf_source"], "gaussian(sigma=1)");
}

#[test]
fn point_mass_calibration_warns_and_succeeds() {
    let dir = TempDir::new().unwrap();
    let cal = write_config(
        &dir,
        "cal.json",
        &json!({"generator": {"kind": "quadratic", "a": 0.5}, "law": {"name": "point_mass"}, "lambda_range": 4.0}),
    );
    let out = run("calibrate", &cal, &[]);
    assert_eq!(code(&out), 0);
    assert!(String::from_utf8_lossy(&out.stderr).contains("degenerate"));
    let v: Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(v["degenerate"], true);
}

#[test]
fn unsatisfiable_calibration_exits_four() {
    let dir = TempDir::new().unwrap();
    // g*(z) = z²/(4a) needs C ≥ σ·√(2a) ≈ 4472 here, beyond the default cap of 1000
    let cal = write_config(
        &dir,
        "cal.json",
        &json!({
            "generator": {"kind": "quadratic", "a": 1e5},
            "law": {"name": "gaussian", "sigma": 10.0},
            "lambda_range": 2.0
        }),
    );
    let out = run("calibrate", &cal, &[]);
    assert_eq!(code(&out), 4, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn invert_round_trips_through_bound() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        &dir,
        "i.json",
        &json!({"generator": {"kind": "regularized_power", "m": 3.0, "t0": 1.0}, "constant": 1.5, "n": 10, "alpha": [0.05, 1e-6]}),
    );
    let out = run("invert", &cfg, &["--format", "json"]);
    assert_eq!(code(&out), 0);
    let rows: Value = serde_json::from_str(&stdout(&out)).unwrap();
    let t = rows[1]["t"].as_f64().unwrap();
    let b = write_config(
        &dir,
        "b.json",
        &json!({"generator": {"kind": "regularized_power", "m": 3.0, "t0": 1.0}, "constant": 1.5, "n": 10, "t_grid": [t]}),
    );
    let v: Value = serde_json::from_str(&stdout(&run("bound", &b, &["--format", "json"]))).unwrap();
    let bound = v["curve"][0]["bound"].as_f64().unwrap();
    assert!((bound - 1e-6).abs() < 1e-15, "{bound}");
}

fn verify_config(constant: f64) -> Value {
    json!({
        "sampler": {"name": "gaussian", "sigma": 1.0},
        "seed": 17,
        "n": 16,
        "replicates": 20000,
        "generator": {"kind": "quadratic", "a": 0.5},
        "constant": constant,
        "t_grid": [0.5, 1.0, 1.5, 2.0, 2.5, 3.0]
    })
}

#[test]
fn verify_passes_and_sabotage_exits_five() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "v.json", &verify_config(1.0));
    let out = run("verify", &cfg, &[]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    assert!(text.contains("# seed=17\n"));
    assert!(text.contains("t,empirical,dkw_epsilon,bound,dominance\n"));

    let out = run("verify", &cfg, &["--set", "constant=0.5"]);
    assert_eq!(code(&out), 5);
    assert!(String::from_utf8_lossy(&out.stderr).contains("dominance violated"));
}

#[test]
fn verify_seed_precedence() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "v.json", &verify_config(1.0));
    let json_of = |cmd: &mut Command| -> Value { serde_json::from_slice(&cmd.output().unwrap().stdout).unwrap() };
    let base = || {
        let mut c = bin();
        c.args(["verify", "--format", "json", "--config"]).arg(&cfg);
        c
    };
    assert_eq!(json_of(&mut base())["seed"], 17);
    assert_eq!(json_of(base().env("TAILFORGE_SEED", "5"))["seed"], 5);
    assert_eq!(json_of(base().env("TAILFORGE_SEED", "5").args(["--seed", "9"]))["seed"], 9);
    // same seed, same report
    let a = json_of(base().args(["--seed", "9", "--threads", "1"]));
    let b = json_of(base().args(["--seed", "9", "--threads", "2"]));
    assert_eq!(a, b);
}

#[test]
fn verify_malformed_config_exits_two() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("v.json");
    std::fs::write(&path, "{ not json").unwrap();
    assert_eq!(code(&run("verify", &path, &[])), 2);
    let mut cfg = verify_config(1.0);
    cfg["replicates"] = json!(10);
    let path = write_config(&dir, "w.json", &cfg);
    assert_eq!(code(&run("verify", &path, &[])), 2);
}

#[test]
fn verify_ustat_statistic() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        &dir,
        "v.json",
        &json!({
            "statistic": "ustat",
            "sampler": {"name": "rademacher"},
            "n": 6,
            "replicates": 10000,
            "generator": {"kind": "quadratic", "a": 0.5},
            "constant": 1.0,
            "kernel": {"name": "product"},
            "degree": 2,
            "t_grid": [0.5, 1.0, 2.0]
        }),
    );
    let out = run("verify", &cfg, &["--format", "json"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let v: Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(v["statistic"], "ustat");
    assert_eq!(v["degree"], 2);
}

#[test]
fn ustat_product_pairs() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "u.json", &json!({"kernel": {"name": "product"}, "degree": 2, "data": [1.0, -1.0, 2.0]}));
    let out = run("ustat", &cfg, &[]);
    assert_eq!(code(&out), 0);
    assert_eq!(stdout(&out), "value,n,combinations,k\n-0.333333333,3,3,1\n");
    let out = run("ustat", &cfg, &["--format", "json"]);
    let v: Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(v["value"].as_f64().unwrap(), -1.0 / 3.0);
}

#[test]
fn ustat_reads_data_file() {
    let dir = TempDir::new().unwrap();
    std::fs::write(dir.path().join("x.txt"), "1.0, -1.0\n2.0\n").unwrap();
    let cfg = write_config(&dir, "u.json", &json!({"kernel": {"name": "product"}, "degree": 2, "data_file": "x.txt"}));
    let out = run("ustat", &cfg, &[]);
    assert_eq!(code(&out), 0);
    assert!(stdout(&out).contains("-0.333333333"));
}

#[test]
fn ustat_errors_map_to_exit_codes() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "u.json", &json!({"kernel": {"name": "product"}, "degree": 4, "data": [1.0, 2.0]}));
    assert_eq!(code(&run("ustat", &cfg, &[])), 2);
    let data: Vec<f64> = (0..200).map(|i| i as f64).collect();
    let cfg = write_config(
        &dir,
        "v.json",
        &json!({"kernel": {"name": "product"}, "degree": 5, "data": data}),
    );
    assert_eq!(code(&run("ustat", &cfg, &[])), 6);
}

#[test]
fn shipped_schema_lists_every_command() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../schema/config.schema.json");
    let schema: Value = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    let defs = schema["$defs"].as_object().unwrap();
    for key in ["conjugate", "bound", "invert", "calibrate", "verify", "ustat"] {
        let def = &defs[key];
        assert_eq!(def["additionalProperties"], false, "{key}");
    }
}
