use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fracvar"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn json(path: impl AsRef<Path>) -> Value {
    serde_json::from_slice(&std::fs::read(path).unwrap()).unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

#[test]
fn default_solve_then_verify_and_ladder() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let out = run(d, &["solve-eigen", "--out", "o"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let pair = json(d.join("o/eigenpair.json"));
    assert!((pair["seminorm"].as_f64().unwrap() - 1.0).abs() <= 1e-6);
    assert!(pair["residual"].as_f64().unwrap() <= 1e-8);
    assert_eq!(pair["seed"], 0);
    assert_eq!(pair["config"]["grid"]["h"], 0.125);

    let csv = std::fs::read_to_string(d.join("o/solution.csv")).unwrap();
    let header = csv.lines().find(|l| !l.starts_with('#')).unwrap();
    assert_eq!(header, "node_index,x1,value");
    assert!(csv.starts_with("# seed: 0\n# config: {"));
    let plot = std::fs::read_to_string(d.join("o/plot.csv")).unwrap();
    assert!(plot.lines().any(|l| l == "x1,u"));

    assert_eq!(code(&run(d, &["verify", "--out", "o"])), 0);
    let report = json(d.join("o/verify_report.json"));
    assert_eq!(report["passed"], true);

    assert_eq!(code(&run(d, &["moser", "--out", "o", "--n-steps", "12"])), 0);
    let ladder = std::fs::read_to_string(d.join("o/ladder.csv")).unwrap();
    assert!(ladder.lines().any(|l| l == "n,k_n,exponent,norm,ratio,fitted_c"));
    let m = json(d.join("o/moser.json"));
    let lad = &m["ladder"];
    assert!(lad["c_change"].as_f64().unwrap() < 0.1);
    // 12 steps only reach exponent ~20 at 2*/r = 8/7; the 1% gap needs exponent >= 200
    assert!(lad["last_exponent"].as_f64().unwrap() < 20.0);
    assert!(lad["sup_gap"].as_f64().unwrap() > 0.01);
    assert_eq!(code(&run(d, &["moser", "--out", "o", "--n-steps", "30"])), 0);
    let lad = &json(d.join("o/moser.json"))["ladder"];
    assert!(lad["last_exponent"].as_f64().unwrap() >= 200.0);
    assert!(lad["sup_gap"].as_f64().unwrap() <= 0.01);
    assert!(lad["chain"].as_array().unwrap().iter().all(|c| c["holds"] == true));
}

fn rewrite_values(src: &Path, dst: &Path, f: impl Fn(usize, f64) -> f64) {
    let text = std::fs::read_to_string(src).unwrap();
    let mut out = String::new();
    for line in text.lines() {
        if line.starts_with('#') || line.starts_with("node_index") {
            out.push_str(line);
        } else {
            let mut cols: Vec<String> = line.split(',').map(str::to_string).collect();
            let i: usize = cols[0].parse().unwrap();
            let last = cols.len() - 1;
            cols[last] = f(i, cols[last].parse().unwrap()).to_string();
            out.push_str(&cols.join(","));
        }
        out.push('\n');
    }
    std::fs::write(dst, out).unwrap();
}

#[test]
fn verify_rejects_perturbed_and_zero_solutions() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(code(&run(d, &["solve-eigen", "--out", "o"])), 0);
    let sol = d.join("o/solution.csv");

    rewrite_values(&sol, &d.join("noisy.csv"), |i, v| v + 0.1 * ((i * 7919 % 13) as f64 / 6.0 - 1.0));
    let out = run(d, &["verify", "--out", "o", "--solution", "noisy.csv"]);
    assert_eq!(code(&out), 3);
    let report = json(d.join("o/verify_report.json"));
    assert!(report["failed"].as_array().unwrap().contains(&"residual".into()));
    let err: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"]["kind"], "verification-failure");

    rewrite_values(&sol, &d.join("zero.csv"), |_, _| 0.0);
    assert_eq!(code(&run(d, &["verify", "--out", "o", "--solution", "zero.csv"])), 3);
    let report = json(d.join("o/verify_report.json"));
    assert!(report["failed"].as_array().unwrap().contains(&"nontrivial".into()));

    let out = run(d, &["moser", "--out", "o", "--solution", "zero.csv"]);
    assert_eq!(code(&out), 0);
    assert!(String::from_utf8_lossy(&out.stderr).contains("warning"));
    let lad = &json(d.join("o/moser.json"))["ladder"];
    assert_eq!(lad["sup_actual"], 0.0);
    assert!(lad["fitted_c"].is_null());

    // a solution from a different grid is an input error
    std::fs::write(d.join("small.toml"), "[grid]\nR = 2.0\nh = 0.5\n").unwrap();
    let out = run(d, &["verify", "--config", "small.toml", "--out", "o"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn config_validation_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("bad.toml"), "[problem]\nq = 4.5\n").unwrap();
    let out = run(d, &["solve-eigen", "--config", "bad.toml", "--out", "o"]);
    assert_eq!(code(&out), 2);
    let err: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"]["kind"], "config-validation");
    assert_eq!(err["error"]["field"], "problem.q");
    assert!(d.join("o/error.json").exists());

    std::fs::write(d.join("typo.toml"), "[grid]\nradius = 3.0\n").unwrap();
    assert_eq!(code(&run(d, &["theta", "--config", "typo.toml", "--out", "o"])), 2);
    assert_eq!(code(&run(d, &["theta", "--config", "missing.toml", "--out", "o"])), 2);
    assert_eq!(code(&run(d, &["solve-eigen", "--tol", "-1", "--out", "o"])), 2);
}

#[test]
fn non_convergence_exits_four() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("short.toml"), "[solver]\nmax_iter = 1\n").unwrap();
    let out = run(d, &["solve-eigen", "--config", "short.toml", "--out", "o"]);
    assert_eq!(code(&out), 4);
    let err = json(d.join("o/error.json"));
    assert_eq!(err["error"]["kind"], "non-convergence");
    assert_eq!(err["seed"], 0);
}

#[test]
fn multi_reports_pair_collapse_and_persistence() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("m.toml"), "[grid]\nR = 4.0\nh = 0.125\n").unwrap();
    assert_eq!(code(&run(d, &["theta", "--config", "m.toml", "--out", "o"])), 0);
    let theta = json(d.join("o/theta.json"))["theta"].as_f64().unwrap();
    assert!(theta > 0.0);

    assert_eq!(code(&run(d, &["multi", "--config", "m.toml", "--out", "o"])), 0);
    let m = json(d.join("o/multi.json"));
    assert_eq!(m["theta"].as_f64().unwrap(), theta);
    assert!(m["nonzero_count"].as_u64().unwrap() >= 2);
    assert_eq!(m["regime"], "theorem-regime");
    for p in m["points"].as_array().unwrap() {
        assert!(p["grad_norm"].as_f64().unwrap() <= 1e-6);
    }
    let flags: Vec<bool> = m["persistence"].as_array().unwrap().iter().map(|r| r["persists"].as_bool().unwrap()).collect();
    assert!(flags[0]);
    assert_eq!(flags.windows(2).filter(|w| w[0] != w[1]).count(), 1, "{flags:?}");
    assert!(std::fs::read_to_string(d.join("o/persistence.csv")).unwrap().contains("mu,persists"));

    std::fs::write(
        d.join("weak.toml"),
        format!("[problem]\nlambda = {}\nmu_sweep_points = 0\n\n[grid]\nR = 4.0\nh = 0.125\n", theta / 2.0),
    )
    .unwrap();
    assert_eq!(code(&run(d, &["multi", "--config", "weak.toml", "--out", "w"])), 0);
    let m = json(d.join("w/multi.json"));
    assert_eq!(m["points"].as_array().unwrap().len(), 1);
    assert_eq!(m["nonzero_count"], 0);
    assert_eq!(m["regime"], "below-threshold");

    std::fs::write(
        d.join("strong_mu.toml"),
        "[problem]\nmu = 5.0\nmu_sweep_points = 3\n\n[grid]\nR = 4.0\nh = 0.125\n",
    )
    .unwrap();
    let out = run(d, &["multi", "--config", "strong_mu.toml", "--out", "s"]);
    if code(&out) == 0 {
        assert_eq!(json(d.join("s/multi.json"))["regime"], "outside-theorem-regime");
    } else {
        assert_eq!(code(&out), 4);
    }
}

#[test]
fn csv_weight_matches_builtin_gaussian() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("g.toml"), "[grid]\nR = 3.0\nh = 0.25\n").unwrap();
    assert_eq!(code(&run(d, &["solve-eigen", "--config", "g.toml", "--out", "a"])), 0);
    rewrite_values(&d.join("a/solution.csv"), &d.join("w.csv"), |_, _| 0.0);
    // overwrite values with exp(-x^2)
    let text = std::fs::read_to_string(d.join("w.csv")).unwrap();
    let rows: Vec<String> = text
        .lines()
        .map(|l| {
            if l.starts_with('#') || l.starts_with("node_index") {
                l.to_string()
            } else {
                let c: Vec<&str> = l.split(',').collect();
                let x: f64 = c[1].parse().unwrap();
                format!("{},{},{}", c[0], c[1], (-x * x).exp())
            }
        })
        .collect();
    std::fs::write(d.join("w.csv"), rows.join("\n")).unwrap();
    std::fs::write(
        d.join("c.toml"),
        "[problem]\nweight = \"csv\"\nweight_csv = \"w.csv\"\ncoefficient_csv = \"w.csv\"\n\n[grid]\nR = 3.0\nh = 0.25\n",
    )
    .unwrap();
    assert_eq!(code(&run(d, &["solve-eigen", "--config", "c.toml", "--out", "b"])), 0);
    let (a, b) = (json(d.join("a/eigenpair.json")), json(d.join("b/eigenpair.json")));
    let (la, lb) = (a["lambda"].as_f64().unwrap(), b["lambda"].as_f64().unwrap());
    assert!((la - lb).abs() <= 1e-12 * la);

    assert_eq!(code(&run(d, &["theta", "--config", "g.toml", "--out", "a"])), 0);
    assert_eq!(code(&run(d, &["theta", "--config", "c.toml", "--out", "b"])), 0);
    let (ta, tb) = (json(d.join("a/theta.json"))["theta"].as_f64().unwrap(), json(d.join("b/theta.json"))["theta"].as_f64().unwrap());
    assert!((ta - tb).abs() <= 1e-12 * ta);
}

#[test]
fn lemma_fuzz_writes_json_lines() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(code(&run(d, &["lemma-fuzz", "--draws", "200", "--seed", "3", "--out", "o"])), 0);
    let text = std::fs::read_to_string(d.join("o/lemma_fuzz.jsonl")).unwrap();
    let lines: Vec<Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 401);
    assert_eq!(lines[0]["seed"], 3);
    assert!(lines[1..].iter().all(|r| r["holds"] == true && r.get("margin").is_some()));
    assert_eq!(json(d.join("o/lemma_fuzz.json"))["violations"], 0);
}
