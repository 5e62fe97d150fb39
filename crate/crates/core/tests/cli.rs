use std::path::Path;
use std::process::{Command, Output};

fn rmsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rmsim"))
        .args(args)
        .env_remove("SPHERICAL_WORKERS")
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

const SMALL: [&str; 8] = ["--reps", "40", "--n", "12,16", "--m", "3,4", "--seed", "3"];

#[test]
fn gen_then_analyze_text_and_json() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.csv");
    let o = rmsim(&[
        "gen",
        "--n",
        "20",
        "--m",
        "4",
        "--condition",
        "nonsphericity",
        "--seed",
        "11",
        "--out",
        p(&data),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = std::fs::read_to_string(&data).unwrap();
    assert_eq!(text.lines().count(), 21);
    assert!(text.starts_with("subject,t1,t2,t3,t4\n"));

    let o = rmsim(&["analyze", "--input", p(&data)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    for label in ["rANOVA ", "rANOVA-GG", "rANOVA-HF", "MLM-CS", "MLM-UN"] {
        assert!(out.contains(label), "{label} missing from\n{out}");
    }

    let o = rmsim(&[
        "analyze",
        "--input",
        p(&data),
        "--json",
        "--ddf",
        "between-within",
    ]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let results = v["results"].as_array().unwrap();
    assert_eq!(results.len(), 5);
    let un = results.iter().find(|r| r["method"] == "MLM-UN").unwrap();
    assert_eq!(un["df_den"].as_f64().unwrap(), 57.0);
    let anova = results.iter().find(|r| r["method"] == "rANOVA").unwrap();
    let cs = results.iter().find(|r| r["method"] == "MLM-CS").unwrap();
    assert!((anova["p_value"].as_f64().unwrap() - cs["p_value"].as_f64().unwrap()).abs() < 1e-10);
}

#[test]
fn gen_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    for f in [&a, &b] {
        let o = rmsim(&[
            "gen",
            "--n",
            "8",
            "--m",
            "3",
            "--condition",
            "sphericity",
            "--seed",
            "5",
            "--out",
            p(f),
        ]);
        assert!(o.status.success());
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn analyze_reports_failing_methods_without_aborting() {
    let dir = tempfile::tempdir().unwrap();
    // n = m: the unstructured model cannot be estimated
    let data = dir.path().join("square.csv");
    std::fs::write(&data, "subject,t1,t2,t3\n1,1,2,4\n2,2,2,3\n3,0,5,1\n").unwrap();
    let o = rmsim(&["analyze", "--input", p(&data), "--json"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let results = v["results"].as_array().unwrap();
    let un = results.iter().find(|r| r["method"] == "MLM-UN").unwrap();
    assert_eq!(un["error"]["kind"], "SingularCovariance");
    let anova = results.iter().find(|r| r["method"] == "rANOVA").unwrap();
    assert!(anova["p_value"].is_number());
}

#[test]
fn analyze_accepts_long_format() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("long.csv");
    std::fs::write(
        &data,
        "subject,occasion,value\n1,1,1\n1,2,2\n1,3,3\n2,1,2\n2,2,4\n2,3,3\n3,1,3\n3,2,3\n3,3,6\n",
    )
    .unwrap();
    let o = rmsim(&[
        "analyze",
        "--input",
        p(&data),
        "--format",
        "long",
        "--methods",
        "ranova",
        "--json",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let r = &v["results"][0];
    // SS_occasion = 6, SS_error = 4: F = 3 on (2, 4) df, p = (1 + 2*3/4)^-2
    assert!((r["statistic"].as_f64().unwrap() - 3.0).abs() < 1e-12);
    assert!((r["p_value"].as_f64().unwrap() - 0.16).abs() < 1e-12);
}

#[test]
fn simulate_then_plot() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.csv");
    let mut args = vec!["simulate"];
    args.extend(SMALL);
    args.extend(["--out", p(&out)]);
    let o = rmsim(&args);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("ddf=satterthwaite"));
    let figs = dir.path().join("figs");
    let o = rmsim(&["plot", "--input", p(&out), "--outdir", p(&figs)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let mut names: Vec<String> = std::fs::read_dir(&figs)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    assert_eq!(
        names,
        [
            "typeI_nonsphericity_m3.svg",
            "typeI_nonsphericity_m4.svg",
            "typeI_sphericity_m3.svg",
            "typeI_sphericity_m4.svg"
        ]
    );
}

#[test]
fn config_file_and_flag_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.conf");
    std::fs::write(
        &cfg,
        "reps = 30\nn = 12,16\nm = 3\nseed = 8\nmethods = ranova,mlm-cs\n",
    )
    .unwrap();
    let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    let o = rmsim(&["simulate", "--config", p(&cfg), "--out", p(&a)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let o = rmsim(&[
        "simulate",
        "--config",
        p(&cfg),
        "--reps",
        "20",
        "--out",
        p(&b),
    ]);
    assert!(o.status.success());
    let ta = std::fs::read_to_string(&a).unwrap();
    let tb = std::fs::read_to_string(&b).unwrap();
    assert!(ta.lines().nth(1).unwrap().contains(",30,"));
    assert!(tb.lines().nth(1).unwrap().contains(",20,"));
    assert_eq!(ta.lines().count(), 1 + 2 * 2 * 2);
}

#[test]
fn configuration_errors_exit_2_with_one_line() {
    let cases: [(&[&str], &str); 6] = [
        (&["simulate", "--reps", "10"], "--seed"),
        (&["simulate", "--seed", "1", "--reps", "0"], "--reps"),
        (&["simulate", "--seed", "1", "--alpha", "2"], "--alpha"),
        (&["simulate", "--seed", "1", "--ddf", "kenward"], "--ddf"),
        (&["simulate", "--seed", "1", "--n", "5", "--m", "6"], "--n"),
        (
            &["simulate", "--seed", "1", "--conditions", "sphere"],
            "--conditions",
        ),
    ];
    for (args, flag) in cases {
        let o = rmsim(args);
        assert_eq!(o.status.code(), Some(2), "{args:?}");
        let err = stderr(&o);
        assert_eq!(err.trim_end().lines().count(), 1, "{err}");
        assert!(err.contains(flag), "{args:?}: {err}");
    }
    let o = rmsim(&["simulate", "--bogus"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn invalid_workers_env_is_a_configuration_error() {
    let o = Command::new(env!("CARGO_BIN_EXE_rmsim"))
        .args(["simulate", "--seed", "1", "--reps", "5"])
        .env("SPHERICAL_WORKERS", "zero")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("--workers"));
}

#[test]
fn io_errors_exit_1_and_leave_no_output() {
    let dir = tempfile::tempdir().unwrap();
    let o = rmsim(&["analyze", "--input", p(&dir.path().join("nope.csv"))]);
    assert_eq!(o.status.code(), Some(1));

    let out = dir.path().join("missing_dir").join("r.csv");
    let mut args = vec!["simulate"];
    args.extend(SMALL);
    args.extend(["--out", p(&out)]);
    let o = rmsim(&args);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    assert!(!out.exists());
}

#[test]
fn bad_input_data_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("bad.csv");
    std::fs::write(&data, "subject,t1,t2\n1,1,x\n2,1,2\n").unwrap();
    let o = rmsim(&["analyze", "--input", p(&data)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("row 2"));

    let results = dir.path().join("results.csv");
    std::fs::write(&results, "condition,m\nsphericity,3\n").unwrap();
    let o = rmsim(&[
        "plot",
        "--input",
        p(&results),
        "--outdir",
        p(&dir.path().join("f")),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!dir.path().join("f").exists());
}

#[test]
fn help_exits_0() {
    let o = rmsim(&["--help"]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("simulate"));
}
