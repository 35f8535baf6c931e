use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use flarecheck::network::toy_network;
use tempfile::TempDir;

struct Workspace {
    dir: TempDir,
}

impl Workspace {
    fn new() -> Self {
        let ws = Workspace {
            dir: tempfile::tempdir().unwrap(),
        };
        ws.write("toy.json", &toy_network().to_json_string());
        ws
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn write(&self, name: &str, text: &str) -> PathBuf {
        let p = self.path(name);
        std::fs::write(&p, text).unwrap();
        p
    }

    fn tensor(&self, name: &str, data: &[f64]) -> PathBuf {
        self.write(name, &format!(r#"{{"shape":[{}],"data":{:?}}}"#, data.len(), data))
    }

    fn run(&self, args: &[&str]) -> Output {
        Command::new(env!("CARGO_BIN_EXE_flarecheck"))
            .args(args)
            .current_dir(self.dir.path())
            .output()
            .unwrap()
    }
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&out.stdout)))
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn eval_reports_logit_and_label() {
    let ws = Workspace::new();
    ws.tensor("a.json", &[1.0, 3.0]);
    let out = ws.run(&["eval", "--model", "toy.json", "--input", "a.json"]);
    assert_eq!(code(&out), 0);
    assert_eq!(json(&out)["logit"], 65.0);

    ws.tensor("b.json", &[1.0, 0.0]);
    let out = ws.run(&["eval", "--model", "toy.json", "--input", "b.json", "--delta", "25"]);
    assert_eq!(code(&out), 0);
    let v = json(&out);
    assert_eq!(v["logit"], 20.0);
    assert_eq!(v["label"], "nofire");
}

#[test]
fn input_errors_exit_2() {
    let ws = Workspace::new();
    ws.tensor("a.json", &[1.0, 3.0]);
    let out = ws.run(&["eval", "--model", "missing.json", "--input", "a.json"]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing.json"));

    ws.write("bad.vq", "pre: x[*] in [0,1]\npost: y =< 3\n");
    let out = ws.run(&["verify", "--model", "toy.json", "--query", "bad.vq"]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2, column 9"));

    let out = ws.run(&["verify", "--model", "toy.json", "--query", "bad.vq", "--max-splits", "0"]);
    assert_eq!(code(&out), 2);

    let out = ws.run(&["eval", "--model", "toy.json"]);
    assert_eq!(code(&out), 2, "missing flag is a usage error");
}

#[test]
fn verify_exit_codes() {
    let ws = Workspace::new();
    ws.write("sat.vq", "# the logit can reach 25 or less\npre: x[*] in [0,2]\npost: y <= 25\n");
    let out = ws.run(&["verify", "--model", "toy.json", "--query", "sat.vq"]);
    assert_eq!(code(&out), 1);
    let v = json(&out);
    assert_eq!(v["status"], "sat");
    assert!(v["output"].as_f64().unwrap() <= 25.0);
    assert!(String::from_utf8_lossy(&out.stderr).contains("SAT means the property is violated"));

    ws.write("unsat.vq", "pre: x[*] in [0,1]\npost: y <= 10\n");
    let out = ws.run(&["verify", "--model", "toy.json", "--query", "unsat.vq"]);
    assert_eq!(code(&out), 0);
    assert_eq!(json(&out)["status"], "unsat");

    ws.write("hard.vq", "pre: x[*] in [0,1]\npost: y > 35\n");
    let out = ws.run(&["verify", "--model", "toy.json", "--query", "hard.vq", "--max-splits", "1"]);
    assert_eq!(code(&out), 3);
    let v = json(&out);
    assert_eq!(v["status"], "unknown");
    assert_eq!(v["splits_used"], 1);
}

#[test]
fn consistency_exit_codes() {
    let ws = Workspace::new();
    ws.tensor("up.json", &[1.0, 1.0]);
    ws.tensor("down.json", &[-1.0, 0.0]);
    ws.tensor("zero.json", &[0.0, 0.0]);
    ws.tensor("three.json", &[0.0, 0.0, 0.0]);
    let base = ["consistency", "--model", "toy.json", "--background", "zero.json", "--eps-min", "0", "--eps-max", "2"];

    let out = ws.run(&[&base[..], &["--signal", "up.json"]].concat());
    assert_eq!(code(&out), 0);
    assert_eq!(json(&out)["status"], "consistent");

    let out = ws.run(&[&base[..], &["--signal", "down.json"]].concat());
    assert_eq!(code(&out), 1);
    let v = json(&out);
    assert_eq!((v["eps1"].as_f64(), v["eps2"].as_f64(), v["margin"].as_f64()), (Some(2.0), Some(0.0), Some(13.0)));

    let out = ws.run(&[&base[..], &["--signal", "three.json"]].concat());
    assert_eq!(code(&out), 2);
}

#[test]
fn global_point_boxes_match_consistency() {
    let ws = Workspace::new();
    ws.tensor("up.json", &[1.0, 1.0]);
    ws.tensor("down.json", &[-1.0, 0.0]);
    ws.tensor("zero.json", &[0.0, 0.0]);
    for (signal, expected) in [("up.json", 0), ("down.json", 1)] {
        let eps = ["--eps-min", "0", "--eps-max", "2"];
        let local = ws.run(&[&["consistency", "--model", "toy.json", "--signal", signal, "--background", "zero.json"][..], &eps].concat());
        let global = ws.run(&[&["global", "--model", "toy.json", "--signal", signal, "--background", "zero.json"][..], &eps].concat());
        assert_eq!(code(&local), expected);
        assert_eq!(code(&global), expected);
    }

    ws.write("sig.json", r#"{"shape":[2],"lo":[0.5,0.5],"hi":[1,1]}"#);
    ws.write("bg.json", r#"{"shape":[2],"lo":[0,0],"hi":[0.1,0.1]}"#);
    let out = ws.run(&["global", "--model", "toy.json", "--signal", "sig.json", "--background", "bg.json", "--eps-max", "2"]);
    assert_eq!(code(&out), 0);
    assert_eq!(json(&out)["status"], "holds");

    let out = ws.run(&["global", "--model", "toy.json", "--signal", "sig.json"]);
    assert_eq!(code(&out), 2);
}

fn toy_scenes(ws: &Workspace) -> PathBuf {
    ws.write(
        "scenes.json",
        r#"{"signals":[{"shape":[2],"data":[1,1]},{"shape":[2],"data":[-1,0]}],
            "backgrounds":[{"shape":[2],"data":[0,0]}],
            "eps_range":[0,2]}"#,
    )
}

#[test]
fn scan_writes_csv_and_json() {
    let ws = Workspace::new();
    let scenes = toy_scenes(&ws);
    let out = ws.run(&["scan", "--model", "toy.json", "--scenes", p(&scenes), "--format", "csv"]);
    assert_eq!(code(&out), 1);
    let csv = String::from_utf8(out.stdout).unwrap();
    assert_eq!(csv.lines().count(), 3);
    assert!(csv.starts_with("signal_idx,background_idx,status,eps1,eps2,margin,segments\n"));

    let out = ws.run(&["scan", "--model", "toy.json", "--scenes", p(&scenes), "--out", "report.json"]);
    assert_eq!(code(&out), 1);
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(ws.path("report.json")).unwrap()).unwrap();
    assert_eq!(v["consistent_fraction"], 0.5);
    assert_eq!(v["pairs"].as_array().unwrap().len(), 2);

    let out = ws.run(&["global", "--model", "toy.json", "--scenes", p(&scenes)]);
    assert_eq!(code(&out), 1, "the hull contains the inconsistent scene");
}

#[test]
fn scan_rejects_mismatched_shapes() {
    let ws = Workspace::new();
    ws.write(
        "bad.json",
        r#"{"signals":[{"shape":[2],"data":[1,1]}],"backgrounds":[{"shape":[3],"data":[0,0,0]}],"eps_range":[0,1]}"#,
    );
    let out = ws.run(&["scan", "--model", "toy.json", "--scenes", "bad.json"]);
    assert_eq!(code(&out), 2);
    ws.write(
        "empty.json",
        r#"{"signals":[],"backgrounds":[{"shape":[2],"data":[0,0]}],"eps_range":[0,1]}"#,
    );
    let out = ws.run(&["scan", "--model", "toy.json", "--scenes", "empty.json"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn simulate_is_deterministic_and_scannable() {
    let ws = Workspace::new();
    let args = |out: &str| {
        vec![
            "simulate", "--seed", "7", "--shape", "1,1,2", "--signals", "3", "--backgrounds", "2", "--eps-min", "0.25",
            "--eps-max", "1.5", "--out", out,
        ]
        .into_iter()
        .map(String::from)
        .collect::<Vec<_>>()
    };
    let a = args("a.json");
    let b = args("b.json");
    assert_eq!(code(&ws.run(&a.iter().map(String::as_str).collect::<Vec<_>>())), 0);
    assert_eq!(code(&ws.run(&b.iter().map(String::as_str).collect::<Vec<_>>())), 0);
    let first = std::fs::read(ws.path("a.json")).unwrap();
    assert_eq!(first, std::fs::read(ws.path("b.json")).unwrap());
    let v: serde_json::Value = serde_json::from_slice(&first).unwrap();
    assert_eq!(v["eps_range"], serde_json::json!([0.25, 1.5]));

    // shape [1, 1, 2] matches the toy network's two inputs only after a
    // reshape, so scan a model over that shape instead
    let mut model: serde_json::Value = serde_json::from_str(&toy_network().to_json_string()).unwrap();
    model["input_shape"] = serde_json::json!([1, 1, 2]);
    ws.write("toy3.json", &model.to_string());
    let out = ws.run(&["scan", "--model", "toy3.json", "--scenes", "a.json", "--format", "csv"]);
    assert!(matches!(code(&out), 0 | 1), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(String::from_utf8(out.stdout).unwrap().lines().count(), 7);
}
