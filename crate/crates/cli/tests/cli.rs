use std::path::PathBuf;
use std::process::{Command, Output};

use serde_json::Value;

fn data(name: &str) -> String {
    let p: PathBuf = [env!("CARGO_MANIFEST_DIR"), "tests", "data", name].iter().collect();
    p.to_string_lossy().into_owned()
}

fn specind(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_specind"))
        .args(args)
        .env_remove("SPECIND_MAX_STATES")
        .env_remove("SPECIND_MAX_PINNINGS")
        .env_remove("SPECIND_MAX_BASES")
        .env("COLUMNS", "100")
        .output()
        .expect("binary runs")
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| {
        panic!("stdout is not JSON ({e}): {}", String::from_utf8_lossy(&out.stdout))
    })
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn help_matches_golden_files() {
    for sub in ["", "analyze", "verify", "sample", "reliability", "sweep"] {
        let file = if sub.is_empty() { "help.txt".to_string() } else { format!("help_{sub}.txt") };
        let path: PathBuf = [env!("CARGO_MANIFEST_DIR"), "tests", "golden", &file].iter().collect();
        let args: Vec<&str> = [sub, "--help"].into_iter().filter(|s| !s.is_empty()).collect();
        let got = String::from_utf8(specind(&args).stdout).unwrap();
        if std::env::var_os("UPDATE_GOLDEN").is_some() {
            std::fs::write(&path, &got).unwrap();
        }
        let want = std::fs::read_to_string(&path).unwrap();
        assert_eq!(got, want, "{file} differs; rerun with UPDATE_GOLDEN=1 if the change is intended");
        // every option that takes a value documents its default, except the optional paths
        let lines: Vec<&str> = got.lines().collect();
        for (i, line) in lines.iter().enumerate() {
            let opt = line.trim_start();
            if !opt.starts_with("--") || !opt.contains('<') {
                continue;
            }
            let block: String = std::iter::once(*line)
                .chain(lines[i + 1..].iter().copied().take_while(|l| !l.trim_start().starts_with('-')))
                .collect();
            let optional = ["--out", "--spin", "--matroid", "--hardcore"].iter().any(|f| opt.starts_with(f));
            assert!(optional || block.contains("[default:"), "{file}: no default in {line:?}");
        }
    }
}

#[test]
fn analyze_triangle_reports_finite_fields() {
    let out = specind(&["analyze", &data("triangle.json"), "--lambda", "1", "--eps", "0.25", "--eps", "0.125", "--alpha", "0.5"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let v = json(&out);
    for key in ["eta", "b"] {
        assert!(v[key].as_f64().unwrap().is_finite());
    }
    assert!((v["eta"].as_f64().unwrap() - 0.5).abs() < 1e-9);
    for lg in v["level_gaps"].as_array().unwrap() {
        assert!(lg["gamma"].as_f64().unwrap().is_finite());
    }
    assert!(v["glauber"]["gamma"].as_f64().unwrap() > 0.0);
    assert_eq!(v["block"].as_array().unwrap().len(), 3);
    assert_eq!(v["mixing"]["t_mix"].as_array().unwrap().len(), 2);
    assert_eq!(v["shattering"]["violations"], 0);
}

#[test]
fn malformed_json_is_an_input_error() {
    let out = specind(&["analyze", &data("malformed.json")]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("line"), "{}", stderr(&out));
    let out = specind(&["analyze", &data("triangle.json"), "--eps", "2"]);
    assert_eq!(out.status.code(), Some(2));
    let out = specind(&["analyze", &data("no_such_file.json")]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn cap_exceeded_exits_three() {
    let out = specind(&["analyze", &data("triangle.json"), "--max-states", "4"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr(&out).contains("cap is 4"), "{}", stderr(&out));
    let out = Command::new(env!("CARGO_BIN_EXE_specind"))
        .args(["verify", "--spin", &data("path3.json")])
        .env("SPECIND_MAX_STATES", "2")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn verify_passes_on_path_and_k4() {
    let out = specind(&["verify", "--spin", &data("path3.json"), "--lambda", "1"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let v = json(&out);
    assert_eq!(v["pass"], true);
    assert_eq!(v["schema_version"], 1);
    let out = specind(&["verify", "--matroid", &data("graphic_k4.json")]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert_eq!(json(&out)["pass"], true);
}

#[test]
fn verify_reports_axiom_witness_for_unequal_bases() {
    let out = specind(&["verify", "--matroid", &data("explicit_bad.json")]);
    assert_eq!(out.status.code(), Some(1));
    let v = json(&out);
    assert_eq!(v["pass"], false);
    let axioms = v["checks"].as_array().unwrap().iter().find(|c| c["name"] == "matroid.axioms").unwrap();
    assert_eq!(axioms["pass"], false);
    assert!(stderr(&out).contains("different sizes"), "{}", stderr(&out));
}

#[test]
fn reliability_of_triangle() {
    let out = specind(&["reliability", "--matroid", &data("graphic_triangle.json"), "--p", "0.5"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert_eq!(v["dual_formula"].as_f64(), Some(0.5));
    assert_eq!(v["direct_enumeration"].as_f64(), Some(0.5));
    assert_eq!(v["match"], true);
    for (p, want) in [("1", 1.0), ("0", 0.0)] {
        let v = json(&specind(&["reliability", "--matroid", &data("graphic_triangle.json"), "--p", p]));
        assert_eq!(v["dual_formula"].as_f64(), Some(want));
        assert_eq!(v["direct_enumeration"].as_f64(), Some(want));
    }
    let out = specind(&["reliability", "--matroid", &data("graphic_triangle.json"), "--p", "3/2"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn reliability_path_over_cap_is_null() {
    let out = specind(&["reliability", "--matroid", &data("graphic_k4.json"), "--max-states", "8"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let v = json(&out);
    assert!(v["dual_formula"].is_null() || v["direct_enumeration"].is_null());
    assert!(v.get("match").is_none());
}

#[test]
fn sample_zero_steps_echoes_initial_basis() {
    let v = json(&specind(&["sample", "--matroid", &data("graphic_triangle.json"), "--steps", "0"]));
    assert_eq!(v["initial"], v["final"]);
    assert_eq!(v["steps"], 0);
}

#[test]
fn sample_frequencies_match_exact_laws() {
    let out = specind(&["sample", "--matroid", &data("graphic_triangle.json"), "--steps", "100000", "--seed", "5", "--tolerance", "0.02"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert!(json(&out)["tv_to_uniform"].as_f64().unwrap() < 0.02);
    let out = specind(&["sample", "--hardcore", &data("cycle5.json"), "--lambda", "1", "--steps", "1000000", "--seed", "5", "--tolerance", "0.01"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert!(json(&out)["tv_to_exact"].as_f64().unwrap() < 0.01);
    // too few steps to get close
    let out = specind(&["sample", "--hardcore", &data("cycle5.json"), "--steps", "3", "--tolerance", "0.01"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn sample_is_deterministic_and_csv_is_tabular() {
    let args = ["sample", "--hardcore", &data("path3.json"), "--steps", "50", "--seed", "9", "--csv"];
    let a = specind(&args);
    let b = specind(&args);
    assert_eq!(a.stdout, b.stdout);
    let text = String::from_utf8(a.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "t,state");
    assert_eq!(lines.len(), 52);
    assert_eq!(lines[1], "0,000");
    let other = specind(&["sample", "--hardcore", &data("path3.json"), "--steps", "50", "--seed", "10", "--csv"]);
    assert_ne!(text.as_bytes(), other.stdout.as_slice());
}

#[test]
fn sweep_runs_and_is_independent_of_threads() {
    let one = specind(&["sweep", &data("sweep_small.json")]);
    assert_eq!(one.status.code(), Some(0), "{}", stderr(&one));
    let v = json(&one);
    assert_eq!(v["instances"], 7);
    assert_eq!(v["failed"], 0);
    let four = specind(&["sweep", &data("sweep_small.json"), "--threads", "4"]);
    assert_eq!(one.stdout, four.stdout);
}

#[test]
fn out_flag_writes_a_file() {
    let dir = std::env::temp_dir().join(format!("specind-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("rel.json");
    let out = specind(&["reliability", "--matroid", &data("graphic_triangle.json"), "--out", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    assert!(out.stdout.is_empty());
    let v: Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(v["match"], true);
    std::fs::remove_dir_all(&dir).ok();
}
