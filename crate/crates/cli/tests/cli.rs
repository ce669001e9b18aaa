use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ipdfp_cli::error::{EXIT_INPUT, EXIT_IO, EXIT_OK, EXIT_VALIDATION};
use ipdfp_cli::output::TRACE_HEADER;
use ipdfp_cli::pgm::read_pgm;
use ipdfp_core::oracle::fista_logreg;
use ipdfp_core::problems::LogRegDataset;
use tempfile::TempDir;

fn ipdfp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ipdfp"))
        .args(args)
        .output()
        .expect("spawn ipdfp")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn summary_value(text: &str, key: &str) -> Option<String> {
    text.lines()
        .find_map(|l| l.strip_prefix(key)?.strip_prefix('=').map(str::to_owned))
}

fn arg(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// 16×16 blocks with salt-and-pepper impulses, as a plain PGM.
fn write_noisy_image(dir: &Path) -> PathBuf {
    let n = 16;
    let mut px = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            px.push(if (4..12).contains(&i) && (4..12).contains(&j) {
                180
            } else if j >= 13 {
                120
            } else {
                60
            });
        }
    }
    for (k, p) in px.iter_mut().enumerate() {
        match (k * 37 + 11) % 101 {
            r if r < 6 => *p = 0,
            r if r < 12 => *p = 255,
            _ => {}
        }
    }
    let mut text = format!("P2\n# test scene\n{n} {n}\n255\n");
    for row in px.chunks(n) {
        let row: Vec<String> = row.iter().map(|v: &i32| v.to_string()).collect();
        text.push_str(&row.join(" "));
        text.push('\n');
    }
    let path = dir.join("noisy.pgm");
    fs::write(&path, text).unwrap();
    path
}

const TOY: &str = "# four points\n+1 1:1 2:2\n1 1:2 2:0.5\n0 1:-1 2:-1.5\n-1 1:-2 2:-0.3\n";

fn write_toy(dir: &Path) -> PathBuf {
    let path = dir.join("toy.svm");
    fs::write(&path, TOY).unwrap();
    path
}

struct Trace {
    iters: Vec<usize>,
    residuals: Vec<String>,
    objectives: Vec<f64>,
}

fn read_trace(path: &Path) -> Trace {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some(TRACE_HEADER));
    let mut t = Trace {
        iters: Vec::new(),
        residuals: Vec::new(),
        objectives: Vec::new(),
    };
    for line in lines {
        let cols: Vec<&str> = line.split(',').collect();
        assert_eq!(cols.len(), 5, "{line}");
        for c in &cols[1..] {
            let digits = c
                .split(['e', 'E'])
                .next()
                .unwrap()
                .chars()
                .filter(char::is_ascii_digit)
                .collect::<String>();
            assert!(digits.trim_start_matches('0').len() <= 12, "{c}");
            c.parse::<f64>().unwrap();
        }
        t.iters.push(cols[0].parse().unwrap());
        t.objectives.push(cols[1].parse().unwrap());
        t.residuals.push(cols[2].to_owned());
    }
    t
}

#[test]
fn validate_rejects_unit_steps_and_reports_bound() {
    let o = ipdfp(&["validate", "--set", "norms=1", "--set", "sigma=1", "--set", "gamma=1", "--set", "tau=1"]);
    assert_eq!(code(&o), EXIT_VALIDATION, "{}", stderr(&o));
    let out = stdout(&o);
    assert_eq!(summary_value(&out, "status").as_deref(), Some("rejected"));
    let bound: f64 = summary_value(&out, "s_bound").unwrap().parse().unwrap();
    assert!((bound - 0.5f64.sqrt()).abs() < 1e-12, "{bound}");
}

#[test]
fn validate_accepts_half_steps() {
    let o = ipdfp(&["validate", "--set", "norms=1", "--set", "sigma=0.5", "--set", "gamma=0.5", "--set", "tau=0.5"]);
    assert_eq!(code(&o), EXIT_OK);
    assert_eq!(summary_value(&stdout(&o), "margin").as_deref(), Some("0.5"));
}

#[test]
fn validate_checks_the_relaxation_parameter() {
    let o = ipdfp(&["validate", "--set", "norms=1", "--alpha", "0.1", "--set", "delta_hat=0.05", "--rho", "0.7"]);
    assert_eq!(code(&o), EXIT_VALIDATION);
    let o = ipdfp(&["validate", "--set", "norms=1", "--alpha", "0.1", "--set", "delta_hat=0.05", "--rho", "0.6"]);
    assert_eq!(code(&o), EXIT_OK, "{}", stdout(&o));
    assert_eq!(summary_value(&stdout(&o), "rho_bound").as_deref(), Some("0.666666666667"));
}

#[test]
fn validate_diagonal_metric_on_an_image() {
    let dir = TempDir::new().unwrap();
    let img = write_noisy_image(dir.path());
    let o = ipdfp(&["validate", "--input", arg(&img), "--metric", "diagonal", "--s", "1"]);
    assert_eq!(code(&o), EXIT_OK, "{}{}", stdout(&o), stderr(&o));
    let value: f64 = summary_value(&stdout(&o), "value").unwrap().parse().unwrap();
    assert!(value < 1.0);
}

#[test]
fn logreg_matches_the_oracle() {
    let dir = TempDir::new().unwrap();
    let data = write_toy(dir.path());
    let out = dir.path().join("run");
    let o = ipdfp(&[
        "logreg", "--input", arg(&data), "--out", arg(&out), "--set", "lambda_l1=0.01", "--max-iter", "100000",
    ]);
    assert_eq!(code(&o), EXIT_OK, "{}", stderr(&o));
    let summary = fs::read_to_string(out.join("summary.txt")).unwrap();
    assert_eq!(summary, stdout(&o));
    assert_eq!(summary_value(&summary, "termination").as_deref(), Some("converged"));
    let objective: f64 = summary_value(&summary, "final_objective").unwrap().parse().unwrap();

    let toy = LogRegDataset::from_rows(
        &[vec![1.0, 2.0], vec![2.0, 0.5], vec![-1.0, -1.5], vec![-2.0, -0.3]],
        vec![1.0, 1.0, -1.0, -1.0],
    )
    .unwrap();
    let (_, oracle) = fista_logreg(&toy, 0.01, 200_000).unwrap();
    assert!((objective - oracle).abs() <= 1e-6, "{objective} vs {oracle}");

    let weights: Vec<f64> = fs::read_to_string(out.join("weights.txt"))
        .unwrap()
        .lines()
        .map(|l| l.parse().unwrap())
        .collect();
    assert_eq!(weights.len(), 2);
}

#[test]
fn logreg_in_batches_agrees_with_one_batch() {
    let dir = TempDir::new().unwrap();
    let data = write_toy(dir.path());
    let mut objectives = Vec::new();
    for batches in ["1", "2", "4"] {
        let out = dir.path().join(batches);
        let o = ipdfp(&[
            "logreg", "--input", arg(&data), "--out", arg(&out), "--set", &format!("batches={batches}"),
            "--set", "lambda_l1=0.05", "--max-iter", "200000",
        ]);
        assert_eq!(code(&o), EXIT_OK, "{}", stderr(&o));
        let v: f64 = summary_value(&stdout(&o), "final_objective").unwrap().parse().unwrap();
        objectives.push(v);
    }
    for v in &objectives {
        assert!((v - objectives[0]).abs() < 1e-8, "{objectives:?}");
    }
}

#[test]
fn denoise_improves_objective_and_writes_consistent_outputs() {
    let dir = TempDir::new().unwrap();
    let img = write_noisy_image(dir.path());
    let out = dir.path().join("run");
    let o = ipdfp(&["denoise", "--input", arg(&img), "--out", arg(&out), "--max-iter", "20000"]);
    assert_eq!(code(&o), EXIT_OK, "{}", stderr(&o));
    let summary = fs::read_to_string(out.join("summary.txt")).unwrap();
    let get = |k: &str| summary_value(&summary, k).unwrap_or_else(|| panic!("missing {k}"));
    for key in ["sigma", "gamma", "tau", "alpha", "rho", "rule", "metric", "tol", "max_iter", "iterations"] {
        get(key);
    }
    let s: f64 = get("sigma").parse().unwrap();
    let norms: Vec<f64> = get("operator_norms").split(',').map(|v| v.parse().unwrap()).collect();
    let value = s * s * (1.0 + norms.iter().map(|n| n * n).sum::<f64>());
    assert!((value - 0.95).abs() < 1e-9, "{value}");

    let objective: f64 = get("final_objective").parse().unwrap();
    let input: f64 = get("input_objective").parse().unwrap();
    assert!(objective <= input, "{objective} > {input}");

    let trace = read_trace(&out.join("trace.csv"));
    assert!(trace.iters.windows(2).all(|w| w[0] < w[1]));
    assert_eq!(trace.iters.last().unwrap().to_string(), get("iterations"));
    assert_eq!(trace.residuals.last().unwrap(), &get("final_residual"));
    assert_eq!(*trace.objectives.last().unwrap(), objective);

    let denoised = read_pgm(&out.join("denoised.pgm")).unwrap();
    assert_eq!((denoised.width, denoised.height, denoised.maxval), (16, 16, 255));
    assert!(fs::read(out.join("denoised.pgm")).unwrap().starts_with(b"P5"));
}

#[test]
fn denoise_with_diagonal_metric_and_inertia() {
    let dir = TempDir::new().unwrap();
    let img = write_noisy_image(dir.path());
    let out = dir.path().join("run");
    let o = ipdfp(&[
        "denoise", "--input", arg(&img), "--out", arg(&out), "--metric", "diagonal", "--s", "1", "--alpha",
        "0.05", "--max-iter", "30000", "--tol", "1e-9",
    ]);
    assert_eq!(code(&o), EXIT_OK, "{}", stderr(&o));
    let text = stdout(&o);
    assert_eq!(summary_value(&text, "termination").as_deref(), Some("converged"));
    let rho: f64 = summary_value(&text, "rho").unwrap().parse().unwrap();
    assert!(rho > 0.0 && rho < 1.0);
    let objective: f64 = summary_value(&text, "final_objective").unwrap().parse().unwrap();
    assert!((objective - 8100.0).abs() < 1e-4, "{objective}");
}

#[test]
fn rerunning_a_config_reproduces_the_trace() {
    let dir = TempDir::new().unwrap();
    let img = write_noisy_image(dir.path());
    let config = dir.path().join("run.conf");
    fs::write(
        &config,
        "task = denoise\ninput = noisy.pgm\nlambda_tv = 2\nalpha = 0.1\nmax_iter = 300\nrecord_every = 7\n",
    )
    .unwrap();
    assert!(img.exists());
    let mut traces = Vec::new();
    for name in ["a", "b"] {
        let out = dir.path().join(name);
        let o = ipdfp(&["denoise", "--config", arg(&config), "--out", arg(&out)]);
        assert_eq!(code(&o), EXIT_OK, "{}", stderr(&o));
        traces.push(fs::read(out.join("trace.csv")).unwrap());
    }
    assert_eq!(traces[0], traces[1]);
    let t = read_trace(&dir.path().join("a/trace.csv"));
    assert_eq!(t.iters.last(), Some(&300));
    assert!(t.iters[..t.iters.len() - 1].iter().all(|i| i % 7 == 0));
}

#[test]
fn flags_override_the_config_file() {
    let dir = TempDir::new().unwrap();
    write_toy(dir.path());
    let config = dir.path().join("run.conf");
    fs::write(&config, "input = toy.svm\nout = cfg_out\nalpha = 0.2\nrule = as_written\nmax_iter = 50\n").unwrap();
    let out = dir.path().join("flag_out");
    let o = ipdfp(&[
        "logreg", "--config", arg(&config), "--out", arg(&out), "--alpha", "0", "--rule", "condat", "--max-iter", "10",
    ]);
    assert_eq!(code(&o), EXIT_OK, "{}", stderr(&o));
    let text = stdout(&o);
    assert_eq!(summary_value(&text, "alpha").as_deref(), Some("0"));
    assert_eq!(summary_value(&text, "rule").as_deref(), Some("condat"));
    assert_eq!(summary_value(&text, "iterations").as_deref(), Some("10"));
    assert!(out.join("summary.txt").exists());
    assert!(!dir.path().join("cfg_out").exists());
}

#[test]
fn validation_and_io_failures_have_distinct_codes() {
    assert_ne!(EXIT_VALIDATION, EXIT_IO);
    let dir = TempDir::new().unwrap();
    let data = write_toy(dir.path());
    let out = dir.path().join("o");

    let o = ipdfp(&["logreg", "--input", arg(&data), "--out", arg(&out), "--set", "sigma=1", "--set", "tau=1"]);
    assert_eq!(code(&o), EXIT_VALIDATION, "{}", stderr(&o));
    assert!(!out.exists());

    let o = ipdfp(&["logreg", "--input", arg(&data), "--out", arg(&out), "--set", "lambda_l1=-1"]);
    assert_eq!(code(&o), EXIT_VALIDATION);

    let o = ipdfp(&["logreg", "--input", arg(&data), "--out", arg(&out), "--rule", "sideways"]);
    assert_eq!(code(&o), EXIT_VALIDATION);

    let missing = dir.path().join("missing.svm");
    let o = ipdfp(&["logreg", "--input", arg(&missing), "--out", arg(&out)]);
    assert_eq!(code(&o), EXIT_IO, "{}", stderr(&o));

    let o = ipdfp(&["logreg", "--config", arg(&dir.path().join("none.conf"))]);
    assert_eq!(code(&o), EXIT_IO);

    let blocker = dir.path().join("file");
    fs::write(&blocker, "x").unwrap();
    let o = ipdfp(&["logreg", "--input", arg(&data), "--out", arg(&blocker.join("sub")), "--max-iter", "5"]);
    assert_eq!(code(&o), EXIT_IO, "{}", stderr(&o));

    let o = ipdfp(&["logreg", "--bogus"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn malformed_inputs_name_the_line() {
    let dir = TempDir::new().unwrap();
    let bad = dir.path().join("bad.svm");
    fs::write(&bad, "1 1:1\n1 2:abc\n").unwrap();
    let o = ipdfp(&["logreg", "--input", arg(&bad), "--out", arg(&dir.path().join("o"))]);
    assert_eq!(code(&o), EXIT_INPUT);
    assert!(stderr(&o).contains("bad.svm:2:"), "{}", stderr(&o));

    let wide = dir.path().join("wide.pgm");
    fs::write(&wide, "P2\n1 1\n65535\n700\n").unwrap();
    let o = ipdfp(&["denoise", "--input", arg(&wide), "--out", arg(&dir.path().join("o"))]);
    assert_eq!(code(&o), EXIT_INPUT);
    assert!(stderr(&o).contains("maxval"), "{}", stderr(&o));
}

#[test]
fn plain_output_format_and_box_bounds() {
    let dir = TempDir::new().unwrap();
    let img = write_noisy_image(dir.path());
    let out = dir.path().join("run");
    let o = ipdfp(&[
        "denoise", "--input", arg(&img), "--out", arg(&out), "--set", "pgm_format=p2", "--set", "box_lo=50",
        "--set", "box_hi=200", "--max-iter", "3000",
    ]);
    assert_eq!(code(&o), EXIT_OK, "{}", stderr(&o));
    let bytes = fs::read(out.join("denoised.pgm")).unwrap();
    assert!(bytes.starts_with(b"P2"));
    let image = read_pgm(&out.join("denoised.pgm")).unwrap();
    assert!(image.pixels.iter().all(|&p| (50.0..=200.0).contains(&p)));
}
