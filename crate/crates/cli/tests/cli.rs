use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

use serde_json::Value;
use tempfile::TempDir;

fn triage() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_triage"));
    c.env_remove("TRIAGE_OUT_DIR");
    c
}

fn run(args: &[&str]) -> Output {
    triage().args(args).output().unwrap()
}

fn run_stdin(args: &[&str], input: &[u8]) -> Output {
    let mut child = triage()
        .args(args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    child.stdin.take().unwrap().write_all(input).unwrap();
    child.wait_with_output().unwrap()
}

fn json(out: &Output) -> Value {
    assert!(
        out.status.success(),
        "status {:?}\nstderr: {}",
        out.status,
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Small deterministic cohort with grades, covariates and two products.
fn graded_cohort(dir: &Path) -> PathBuf {
    let grades = ["HS", "PT", "AN", "N"];
    let sources = ["community", "dots", "walkin", "private"];
    let mut text =
        String::from("id,bac_label,age,gender,prior_tb,source,grade,score:alpha,score:beta\n");
    let mut state: u64 = 0x9e3779b97f4a7c15;
    let mut next = || {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        (state >> 11) as f64 / (1u64 << 53) as f64
    };
    for i in 0..240 {
        let pos = i % 4 == 0;
        let g = if pos {
            (next() * 2.0) as usize
        } else {
            1 + (next() * 3.0) as usize
        };
        let a = if pos {
            0.35 + 0.65 * next()
        } else {
            0.7 * next()
        };
        let b = next();
        let prior = ["0", "1", ""][i % 3];
        let age = 8 + (next() * 75.0) as u32;
        let gender = if next() < 0.5 { "F" } else { "M" };
        text += &format!(
            "s{i:03},{},{age},{gender},{prior},{},{},{a:.4},{b:.4}\n",
            pos as u8,
            sources[(i / 4) % 4],
            grades[g.min(3)]
        );
    }
    let path = dir.join("cohort.csv");
    fs::write(&path, text).unwrap();
    path
}

fn synth_file(dir: &Path, n: usize, seed: u64) -> PathBuf {
    let path = dir.join(format!("synth_{n}_{seed}.csv"));
    let (n, seed) = (n.to_string(), seed.to_string());
    json(&run(&[
        "synth",
        "--mu",
        "1",
        "--n",
        &n,
        "--seed",
        &seed,
        "--output",
        p(&path),
    ]));
    path
}

fn read_dir(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (
                e.file_name().to_string_lossy().into_owned(),
                fs::read(e.path()).unwrap(),
            )
        })
        .collect();
    v.sort();
    v
}

fn schema_errors(instance: &Value) -> Vec<String> {
    let schema: Value =
        serde_json::from_str(include_str!("../schema/summary.schema.json")).unwrap();
    let validator = jsonschema::validator_for(&schema).unwrap();
    validator
        .iter_errors(instance)
        .map(|e| format!("{} at {}", e, e.instance_path()))
        .collect()
}

#[test]
fn evaluate_writes_report() {
    let tmp = TempDir::new().unwrap();
    let input = synth_file(tmp.path(), 2000, 11);
    let out = tmp.path().join("report");
    let stdout = json(&run(&[
        "evaluate",
        "--input",
        p(&input),
        "--out",
        p(&out),
        "--level",
        "0.95",
    ]));
    let names: Vec<String> = read_dir(&out).into_iter().map(|(n, _)| n).collect();
    assert_eq!(
        names,
        [
            "auc.csv",
            "framework_synthetic.csv",
            "summary.json",
            "tpp.csv"
        ]
    );
    let summary: Value =
        serde_json::from_slice(&fs::read(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary, stdout);
    assert_eq!(schema_errors(&summary), Vec::<String>::new());
    assert!(summary["human_comparison"].is_null());
    let auc = fs::read_to_string(out.join("auc.csv")).unwrap();
    assert!(auc.starts_with(
        "product,n_pos,n_neg,auc,auc_lo,auc_hi,prauc,prauc_baseline\nsynthetic,306,1694,"
    ));
}

#[test]
fn evaluate_with_grades_validates() {
    let tmp = TempDir::new().unwrap();
    let input = graded_cohort(tmp.path());
    let out = tmp.path().join("r");
    let summary = json(&run(&[
        "evaluate",
        "--input",
        p(&input),
        "--out",
        p(&out),
        "--grid-size",
        "101",
    ]));
    assert_eq!(schema_errors(&summary), Vec::<String>::new());
    assert_eq!(summary["human_comparison"].as_array().unwrap().len(), 6);
    assert_eq!(summary["pairwise"].as_array().unwrap().len(), 1);
    assert_eq!(summary["grid"], "uniform:101");
    let sweep = fs::read_to_string(out.join("framework_alpha.csv")).unwrap();
    assert_eq!(sweep.lines().count(), 102);
    for f in ["compare.csv", "human_comparison.csv"] {
        assert!(out.join(f).exists(), "{f}");
    }
}

#[test]
fn schema_rejects_malformed_summary() {
    let tmp = TempDir::new().unwrap();
    let input = synth_file(tmp.path(), 200, 3);
    let mut summary = json(&run(&[
        "evaluate",
        "--input",
        p(&input),
        "--out",
        p(tmp.path()),
    ]));
    summary["products"][0]["auc"]["estimate"] = Value::String("high".into());
    assert!(!schema_errors(&summary).is_empty());
    summary["products"] = Value::Array(vec![]);
    assert!(!schema_errors(&summary).is_empty());
}

#[test]
fn synth_pipe_evaluate_recovers_auc() {
    let tmp = TempDir::new().unwrap();
    let cohort = run(&[
        "synth",
        "--mu",
        "1.812",
        "--prevalence",
        "0.153",
        "--n",
        "20000",
        "--seed",
        "7",
    ]);
    assert!(cohort.status.success());
    let out = tmp.path().join("r");
    let summary = json(&run_stdin(
        &["evaluate", "--input", "-", "--out", p(&out)],
        &cohort.stdout,
    ));
    let auc = summary["products"][0]["auc"]["estimate"].as_f64().unwrap();
    assert!((auc - 0.90).abs() < 0.01, "auc {auc}");
    assert_eq!(summary["cohort"]["n_positive"], 3060);
}

#[test]
fn compare_needs_two_products() {
    let tmp = TempDir::new().unwrap();
    let input = synth_file(tmp.path(), 100, 1);
    let out = run(&["compare", "--input", p(&input), "--out", p(tmp.path())]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!tmp.path().join("compare.csv").exists());

    let input = graded_cohort(tmp.path());
    let v = json(&run(&[
        "compare",
        "--input",
        p(&input),
        "--out",
        p(tmp.path()),
    ]));
    let m = &v["p_values"];
    assert_eq!(m[0][0], 1.0);
    assert_eq!(m[0][1], m[1][0]);
    let out = run(&[
        "compare",
        "--input",
        p(&input),
        "--product",
        "alpha",
        "--out",
        p(tmp.path()),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn usage_errors_exit_2() {
    let tmp = TempDir::new().unwrap();
    let input = graded_cohort(tmp.path());
    let i = p(&input);
    for args in [
        vec!["subgroups", "--input", i],
        vec!["evaluate", "--input", i, "--level", "1.5"],
        vec!["synth", "--n", "100", "--seed", "1"],
        vec!["synth", "--mu", "1", "--auc", "0.8", "--seed", "1"],
        vec!["frobnicate"],
    ] {
        let out = run(&args);
        assert_eq!(out.status.code(), Some(2), "{args:?}");
    }
}

#[test]
fn data_errors_exit_1_with_json() {
    let tmp = TempDir::new().unwrap();
    let bad = tmp.path().join("bad.csv");
    fs::write(&bad, "id,bac_label,score:x\na,1,0.5\nb,maybe,0.2\n").unwrap();
    let out = run(&["evaluate", "--input", p(&bad), "--out", p(tmp.path())]);
    assert_eq!(out.status.code(), Some(1));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["error"]["kind"], "BadValue");
    assert!(v["error"]["message"].as_str().unwrap().contains("maybe"));
    assert_eq!(read_dir(tmp.path()).len(), 1);

    let pct = tmp.path().join("pct.csv");
    fs::write(
        &pct,
        "id,bac_label,score:x\na,1,55\nb,0,20\nc,1,70\nd,0,10\n",
    )
    .unwrap();
    let out = run(&["roc", "--input", p(&pct), "--out", p(tmp.path())]);
    assert_eq!(out.status.code(), Some(1));
    let ok = run(&[
        "roc",
        "--input",
        p(&pct),
        "--scale",
        "percent",
        "--out",
        p(tmp.path()),
    ]);
    assert_eq!(json(&ok)["products"][0]["auc"]["estimate"], 1.0);
    let ok = run(&[
        "roc",
        "--input",
        p(&pct),
        "--product-scale",
        "x=percent",
        "--out",
        p(tmp.path()),
    ]);
    assert!(ok.status.success());

    let input = graded_cohort(tmp.path());
    let out = run(&[
        "tpp",
        "--input",
        p(&input),
        "--product",
        "gamma",
        "--out",
        p(tmp.path()),
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn artifacts_are_deterministic() {
    let tmp = TempDir::new().unwrap();
    let input = graded_cohort(tmp.path());
    let i = p(&input);
    let mut runs = Vec::new();
    for (k, workers) in ["1", "4"].iter().enumerate() {
        let out = tmp.path().join(format!("run{k}"));
        let o = p(&out);
        json(&run(&["evaluate", "--input", i, "--out", o]));
        json(&run(&[
            "subgroups",
            "--input",
            i,
            "--out",
            o,
            "--seed",
            "5",
            "--replicates",
            "200",
            "--workers",
            workers,
        ]));
        json(&run(&[
            "density",
            "--input",
            i,
            "--out",
            o,
            "--kde-points",
            "11",
        ]));
        runs.push(read_dir(&out));
    }
    assert!(runs[0].len() > 10);
    assert_eq!(runs[0], runs[1]);

    let a = run(&["synth", "--auc", "0.85", "--n", "500", "--seed", "9"]);
    let b = run(&["synth", "--auc", "0.85", "--n", "500", "--seed", "9"]);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn per_analysis_subcommands() {
    let tmp = TempDir::new().unwrap();
    let input = graded_cohort(tmp.path());
    let i = p(&input);
    let o = p(tmp.path());

    let v = json(&run(&["roc", "--input", i, "--out", o]));
    assert_eq!(v["products"].as_array().unwrap().len(), 2);
    assert!(fs::read_to_string(tmp.path().join("roc_alpha.csv"))
        .unwrap()
        .starts_with("kind,x,y,threshold\n"));

    let v = json(&run(&[
        "prc",
        "--input",
        i,
        "--out",
        o,
        "--product",
        "beta",
    ]));
    assert_eq!(v["products"][0]["baseline"], 0.25);
    assert!(tmp.path().join("pr_beta.csv").exists());

    let v = json(&run(&[
        "match-human",
        "--input",
        i,
        "--out",
        o,
        "--classification",
        "b",
    ]));
    assert_eq!(v["rows"].as_array().unwrap().len(), 2);
    assert_eq!(v["rows"][0]["classification"], "B");

    let v = json(&run(&["tpp", "--input", i, "--out", o]));
    assert!(v["products"][0]["verdict"]["met"].is_boolean());

    let v = json(&run(&[
        "framework",
        "--input",
        i,
        "--out",
        o,
        "--sens-floor",
        "0.8",
    ]));
    let sens = v["products"][0]["savings_at_floor"]["sensitivity"]["estimate"]
        .as_f64()
        .unwrap();
    assert!(sens >= 0.8);
    assert!(tmp.path().join("tradeoff_alpha.csv").exists());

    let v = json(&run(&[
        "subgroups",
        "--input",
        i,
        "--out",
        o,
        "--seed",
        "1",
        "--replicates",
        "100",
        "--covariate",
        "prior_tb",
    ]));
    let r = &v["reports"][0];
    assert_eq!(r["excluded_unknown"], 80);
    assert_eq!(r["strata"].as_array().unwrap().len(), 2);
    let pv = fs::read_to_string(tmp.path().join("pvalues_prior_tb_alpha.csv")).unwrap();
    assert!(pv.starts_with("stratum,prior_tb,new\n"));

    let v = json(&run(&["density", "--input", i, "--out", o, "--bins", "10"]));
    assert_eq!(v["products"][0]["excluded_unknown"], 80);
    let d = fs::read_to_string(tmp.path().join("density_alpha.csv")).unwrap();
    assert_eq!(d.lines().count(), 1 + 4 * 10);
}

#[test]
fn out_dir_from_environment() {
    let tmp = TempDir::new().unwrap();
    let input = synth_file(tmp.path(), 100, 2);
    let out = tmp.path().join("env_out");
    let o = triage()
        .args(["tpp", "--input", p(&input)])
        .env("TRIAGE_OUT_DIR", &out)
        .output()
        .unwrap();
    json(&o);
    assert!(out.join("tpp.csv").exists());
}

#[test]
fn anonymize_directory() {
    use triage_dicom::codec::{Encoding, FileBuilder};
    use triage_dicom::{sha256_hex, Tag};

    let tmp = TempDir::new().unwrap();
    let (input, output) = (tmp.path().join("in"), tmp.path().join("out"));
    fs::create_dir_all(&input).unwrap();
    fs::create_dir_all(&output).unwrap();
    let file = |desc: &str| {
        FileBuilder::new(Encoding::ExplicitLe)
            .text(Tag::ACCESSION_NUMBER, b"SH", "ACC9")
            .text(Tag::STUDY_DESCRIPTION, b"LO", desc)
            .bytes(Tag::PIXEL_DATA, b"OW", &[1, 2])
            .build()
    };
    fs::write(input.join("a.dcm"), file("CHEST")).unwrap();
    fs::write(input.join("b.dcm"), file("SPINE LAT")).unwrap();
    let rules = tmp.path().join("rules.csv");
    fs::write(
        &rules,
        "DicomTags,Hashing,Anonymisation Required\n\"(0008,0050)\",Yes,No\n",
    )
    .unwrap();

    let args = [
        "anonymize",
        "--input",
        p(&input),
        "--output",
        p(&output),
        "--rules",
        p(&rules),
    ];
    let v = json(&run(&args));
    assert_eq!(v["report"]["accepted"], 1);
    assert_eq!(
        v["report"]["rejected"][0]["error"],
        "ExcludedStudyDescription"
    );
    let hashes = fs::read_to_string(output.join("Hashes.csv")).unwrap();
    assert!(hashes.ends_with(&format!("a.dcm,ACC9,{}\n", sha256_hex("ACC9"))));

    let faithful = tmp.path().join("out2");
    fs::create_dir_all(&faithful).unwrap();
    let v = json(&run(&[
        "anonymize",
        "--input",
        p(&input),
        "--output",
        p(&faithful),
        "--rules",
        p(&rules),
        "--faithful-annex5",
    ]));
    assert_eq!(v["report"]["accepted"], 2);

    let out = run(&[
        "anonymize",
        "--input",
        p(&tmp.path().join("nope")),
        "--output",
        p(&output),
        "--rules",
        p(&rules),
    ]);
    assert_eq!(out.status.code(), Some(1));
}
