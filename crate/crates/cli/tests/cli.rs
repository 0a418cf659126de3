use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use nalgebra::{DMatrix, DVector};
use serde_json::Value;
use statrs::distribution::{ContinuousCDF, StudentsT};

fn posi(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_posi")).args(args).output().unwrap()
}

fn json(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

struct Data {
    _dir: tempfile::TempDir,
    root: PathBuf,
    x: DMatrix<f64>,
    x0: DVector<f64>,
    y: DVector<f64>,
}

impl Data {
    fn path(&self, name: &str) -> String {
        self.root.join(name).to_string_lossy().into_owned()
    }
}

fn write_csv(path: &Path, rows: &[Vec<f64>]) {
    let text: Vec<String> =
        rows.iter().map(|r| r.iter().map(|v| format!("{v:?}")).collect::<Vec<_>>().join(",")).collect();
    std::fs::write(path, text.join("\n") + "\n").unwrap();
}

/// A small fixed design with an intercept.
fn data() -> Data {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().to_path_buf();
    let n = 15;
    let x = DMatrix::from_fn(n, 3, |i, j| match j {
        0 => 1.0,
        1 => (i as f64 * 0.7).sin() * 2.0,
        _ => ((i * i) % 7) as f64 / 3.0 - 1.0,
    });
    let y = DVector::from_fn(n, |i, _| 1.0 + 0.5 * x[(i, 1)] + ((i * 5) % 11) as f64 / 5.0 - 1.0);
    let x0 = DVector::from_vec(vec![1.0, 0.4, -0.3]);
    write_csv(&root.join("X.csv"), &x.row_iter().map(|r| r.iter().copied().collect()).collect::<Vec<_>>());
    write_csv(&root.join("y.csv"), &y.iter().map(|v| vec![*v]).collect::<Vec<_>>());
    write_csv(&root.join("x0.csv"), &[x0.iter().copied().collect()]);
    write_csv(&root.join("x0_2.csv"), &[vec![0.6, -1.1]]);
    write_csv(
        &root.join("X_2.csv"),
        &x.columns(0, 2).row_iter().map(|r| r.iter().copied().collect()).collect::<Vec<_>>(),
    );
    Data { _dir: dir, root, x, x0, y }
}

fn design_args<'a>(d: &'a [String; 2]) -> Vec<&'a str> {
    vec!["--design", &d[0], "--x0", &d[1]]
}

#[test]
fn usage_errors_exit_two() {
    let d = data();
    let files = [d.path("X.csv"), d.path("x0.csv")];
    let base = design_args(&files);
    let cases: Vec<Vec<&str>> = vec![
        vec!["constant"],
        vec!["no-such-command"],
        [vec!["constant"], base.clone(), vec!["--dof", "12", "--constant", "k1"]].concat(),
        [vec!["constant"], base.clone(), vec!["--dof", "12", "--known-variance", "--constant", "naive"]].concat(),
        [vec!["constant"], base.clone(), vec!["--dof", "12", "--constant", "k3", "--seed", "1"]].concat(),
        [vec!["constant"], base.clone(), vec!["--dof", "12", "--constant", "k7"]].concat(),
        [vec!["constant"], base.clone(), vec!["--dof", "12", "--constant", "naive", "--alpha", "1.5"]].concat(),
        [vec!["coverage"], base.clone(), vec!["--target", "independent", "--seed", "1"]].concat(),
        vec!["constant", "--design", "/nonexistent.csv", "--x0", &files[1], "--dof", "3", "--constant", "naive"],
    ];
    for args in cases {
        let out = posi(&args);
        assert_eq!(out.status.code(), Some(2), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
        assert!(!out.stderr.is_empty());
    }
    assert_eq!(posi(&["--help"]).status.code(), Some(0));
    assert_eq!(posi(&["--version"]).status.code(), Some(0));
}

#[test]
fn naive_constant_is_the_t_quantile() {
    let d = data();
    let files = [d.path("X.csv"), d.path("x0.csv")];
    let v =
        json(&posi(&[vec!["constant"], design_args(&files), vec!["--known-variance", "--constant", "naive"]].concat()));
    assert!((v["value"].as_f64().unwrap() - 1.959964).abs() < 1e-6);
    let v = json(&posi(&[vec!["constant"], design_args(&files), vec!["--dof", "12", "--constant", "naive"]].concat()));
    let t = StudentsT::new(0.0, 1.0, 12.0).unwrap().inverse_cdf(0.975);
    assert!((v["value"].as_f64().unwrap() - t).abs() < 1e-9);
}

#[test]
fn scheffe_constant_in_two_dimensions() {
    let d = data();
    let files = [d.path("X_2.csv"), d.path("x0_2.csv")];
    let v =
        json(&posi(&[vec!["constant"], design_args(&files), vec!["--known-variance", "--constant", "k5"]].concat()));
    // chi-square with 2 degrees of freedom has quantile -2 ln(alpha)
    let exact = (-2.0 * 0.05f64.ln()).sqrt();
    assert!((v["value"].as_f64().unwrap() - exact).abs() < 1e-8);
    let k6 =
        json(&posi(&[vec!["constant"], design_args(&files), vec!["--known-variance", "--constant", "k6"]].concat()));
    assert!((k6["value"].as_f64().unwrap() - 0.866 * exact).abs() < 1e-8);
}

#[test]
fn k3_of_the_empty_model_is_k4() {
    let d = data();
    let files = [d.path("X.csv"), d.path("x0.csv")];
    let base = design_args(&files);
    let k3 = json(&posi(
        &[vec!["constant"], base.clone(), vec!["--dof", "12", "--constant", "k3:0", "--seed", "4"]].concat(),
    ));
    let k4 = json(&posi(&[vec!["constant"], base, vec!["--dof", "12", "--constant", "k4"]].concat()));
    assert!((k3["value"].as_f64().unwrap() - k4["value"].as_f64().unwrap()).abs() < 1e-9);
}

#[test]
fn empty_model_interval_is_a_point() {
    let d = data();
    let files = [d.path("X.csv"), d.path("x0.csv")];
    let y = d.path("y.csv");
    let v = json(&posi(
        &[vec!["interval"], design_args(&files), vec!["--y", &y, "--selector", "fixed:0", "--constant", "naive"]]
            .concat(),
    ));
    assert_eq!(v["center"].as_f64().unwrap(), 0.0);
    assert_eq!(v["half_width"].as_f64().unwrap(), 0.0);
}

#[test]
fn full_model_naive_interval_matches_the_textbook_t_interval() {
    let d = data();
    let files = [d.path("X.csv"), d.path("x0.csv")];
    let y = d.path("y.csv");
    let v = json(&posi(
        &[vec!["interval"], design_args(&files), vec!["--y", &y, "--selector", "fixed:full", "--constant", "naive"]]
            .concat(),
    ));
    let (n, p) = d.x.shape();
    let gram_inv = (d.x.transpose() * &d.x).try_inverse().unwrap();
    let beta = &gram_inv * d.x.transpose() * &d.y;
    let resid = &d.y - &d.x * &beta;
    let s2 = resid.norm_squared() / (n - p) as f64;
    let se = (s2 * (d.x0.transpose() * &gram_inv * &d.x0)[0]).sqrt();
    let t = StudentsT::new(0.0, 1.0, (n - p) as f64).unwrap().inverse_cdf(0.975);
    assert!((v["center"].as_f64().unwrap() - d.x0.dot(&beta)).abs() < 1e-9);
    assert!((v["half_width"].as_f64().unwrap() - t * se).abs() < 1e-8);
}

#[test]
fn scheffe_interval_is_wider_than_k1() {
    let d = data();
    let files = [d.path("X.csv"), d.path("x0.csv")];
    let y = d.path("y.csv");
    let half = |k: &str| {
        let v = json(&posi(
            &[vec!["interval"], design_args(&files), vec!["--y", &y, "--constant", k, "--seed", "2", "--mc", "20000"]]
                .concat(),
        ));
        v["half_width"].as_f64().unwrap()
    };
    assert!(half("k5") >= half("k1"));
}

#[test]
fn gen_data_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let read = |sub: &str| {
        let out = dir.path().join(sub).to_string_lossy().into_owned();
        let o =
            posi(&["gen-data", "--family", "equicorrelated", "--p", "5", "--n", "30", "--seed", "11", "--out", &out]);
        assert!(o.status.success());
        ["X.csv", "x0.csv", "sigma.csv"].map(|f| std::fs::read(dir.path().join(sub).join(f)).unwrap())
    };
    assert_eq!(read("a"), read("b"));
}

#[test]
fn lengths_grow_along_the_chain() {
    let d = data();
    let files = [d.path("X.csv"), d.path("x0.csv")];
    let v = json(&posi(
        &[vec!["lengths"], design_args(&files), vec!["--dof", "12", "--constants", "naive,k4,k5"]].concat(),
    ));
    let rows = v["lengths"].as_array().unwrap();
    for kind in ["NAIVE", "K4", "K5"] {
        let lens: Vec<f64> =
            rows.iter().filter(|r| r["constant"] == kind).map(|r| r["length"].as_f64().unwrap()).collect();
        assert_eq!(lens.len(), 4);
        assert_eq!(lens[0], 0.0);
        assert!(lens.windows(2).all(|w| w[0] <= w[1] + 1e-12), "{kind}: {lens:?}");
    }
}

#[test]
fn config_file_supplies_flags() {
    let d = data();
    let cfg = d.root.join("run.json");
    std::fs::write(
        &cfg,
        serde_json::json!({"design": d.path("X.csv"), "x0": d.path("x0.csv"), "known_variance": true}).to_string(),
    )
    .unwrap();
    let cfg = cfg.to_string_lossy().into_owned();
    let v = json(&posi(&["constant", "--config", &cfg, "--constant", "naive"]));
    assert!((v["value"].as_f64().unwrap() - 1.959964).abs() < 1e-6);
}

#[test]
fn help_documents_every_subcommand() {
    let expected: [(&str, &[&str]); 5] = [
        (
            "constant",
            &[
                "--design",
                "--x0",
                "--dof",
                "--known-variance",
                "--constant",
                "--seed",
                "--mc",
                "--grid",
                "--variant",
                "--universe",
            ],
        ),
        ("interval", &["--y", "--selector", "--protected", "--constant", "--sigma", "--folds"]),
        (
            "coverage",
            &[
                "--sigma-star",
                "--selector",
                "--constants",
                "--target",
                "--m1",
                "--m2",
                "--I1",
                "--I2",
                "--I3",
                "--paper-scale",
                "--B",
                "--out",
            ],
        ),
        ("lengths", &["--chain", "--constants", "--out"]),
        ("gen-data", &["--family", "--a", "--c", "--p", "--n", "--seed", "--out"]),
    ];
    for (cmd, flags) in expected {
        let out = posi(&[cmd, "--help"]);
        assert!(out.status.success());
        let text = String::from_utf8(out.stdout).unwrap();
        for f in flags {
            assert!(text.contains(f), "{cmd} --help lacks {f}");
        }
    }
}
