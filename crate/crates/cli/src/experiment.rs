//! Run one configured task end to end.

use std::path::Path;

use ipdfp_core::linop::{safe_norm, LinearMap, StackedMap};
use ipdfp_core::precond::{build_diagonal_for_with, equal_step_bound, validate_split, StepMetric, ZeroRows};
use ipdfp_core::problems::{build_l1tv, build_logreg, CompositeProblem, PixelRange};
use ipdfp_core::solver::{
    metric_operators, rho_upper_bound, run, suggest_schedule, validate_for, InertialSchedule, SolveOptions,
    SolveResult, Termination,
};

use crate::config::{MetricKind, RunConfig, Task};
use crate::error::{CliError, Result, EXIT_OK, EXIT_SOLVER, EXIT_VALIDATION};
use crate::libsvm::read_libsvm;
use crate::output::{sig12, summary_text, trace_csv, write_atomic};
use crate::pgm::{read_pgm, write_pgm, GrayImage};

/// Margin kept below the definiteness boundary when step sizes are filled in.
pub const AUTO_STEP_TARGET: f64 = 0.95;

pub const TRACE_FILE: &str = "trace.csv";
pub const SUMMARY_FILE: &str = "summary.txt";
pub const IMAGE_FILE: &str = "denoised.pgm";
pub const WEIGHTS_FILE: &str = "weights.txt";

#[derive(Debug, Clone)]
pub struct Outcome {
    /// Resolved parameters and results, in output order.
    pub summary: Vec<(String, String)>,
    pub exit_code: i32,
}

impl Outcome {
    pub fn get(&self, key: &str) -> Option<&str> {
        self.summary.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn text(&self) -> String {
        summary_text(&self.summary)
    }
}

struct Summary(Vec<(String, String)>);

impl Summary {
    fn put(&mut self, key: &str, value: impl ToString) {
        self.0.push((key.to_owned(), value.to_string()));
    }
}

pub fn run_task(config: &RunConfig) -> Result<Outcome> {
    config.check()?;
    match config.task {
        Task::Validate => validate_task(config),
        Task::Denoise | Task::Logreg => solve_task(config),
    }
}

enum Loaded {
    Image(GrayImage),
    Data,
}

fn load_problem(config: &RunConfig, summary: &mut Summary) -> Result<(CompositeProblem, Loaded)> {
    let input = config
        .input
        .as_deref()
        .ok_or_else(|| CliError::Config("no input file".into()))?;
    summary.put("input", input.display());
    let denoise = match config.task {
        Task::Denoise => true,
        Task::Logreg => false,
        Task::Validate => is_pgm(input),
    };
    if denoise {
        let image = read_pgm(input)?;
        let range = PixelRange {
            lo: config.box_lo.unwrap_or(0.0),
            hi: config.box_hi.unwrap_or(image.maxval as f64),
        };
        summary.put("problem", "l1tv");
        summary.put("width", image.width);
        summary.put("height", image.height);
        summary.put("lambda_tv", sig12(config.lambda_tv));
        summary.put("isotropic", config.isotropic);
        summary.put("box_lo", sig12(range.lo));
        summary.put("box_hi", sig12(range.hi));
        let problem = build_l1tv(
            &image.pixels,
            image.height,
            image.width,
            config.lambda_tv,
            config.isotropic,
            range,
        )?;
        Ok((problem, Loaded::Image(image)))
    } else {
        let data = read_libsvm(input, config.features)?;
        summary.put("problem", "logreg");
        summary.put("samples", data.len());
        summary.put("features", data.dim());
        summary.put("lambda_l1", sig12(config.lambda_l1));
        summary.put("batches", config.batches);
        Ok((build_logreg(&data, config.lambda_l1, config.batches)?, Loaded::Data))
    }
}

fn is_pgm(path: &Path) -> bool {
    path.extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("pgm") || e.eq_ignore_ascii_case("pnm"))
}

fn operator_norms(problem: &CompositeProblem, config: &RunConfig) -> Result<Vec<f64>> {
    Ok(metric_operators(problem, config.algorithm)?
        .iter()
        .map(|op| safe_norm(op.as_ref()))
        .collect::<ipdfp_core::Result<_>>()?)
}

fn build_metric(
    problem: &CompositeProblem,
    config: &RunConfig,
    image: bool,
    summary: &mut Summary,
) -> Result<StepMetric> {
    match config.metric {
        MetricKind::Scalar => {
            let norms = operator_norms(problem, config)?;
            let auto = equal_step_bound(&norms, AUTO_STEP_TARGET);
            let sigma = config.sigma.unwrap_or(auto);
            let gamma = config.gamma.unwrap_or(auto);
            let tau = config.tau.unwrap_or(auto);
            summary.put("operator_norms", list(&norms));
            summary.put("sigma", sig12(sigma));
            summary.put("gamma", sig12(gamma));
            summary.put("tau", sig12(tau));
            Ok(StepMetric::scalar(sigma, gamma, tau))
        }
        MetricKind::Diagonal => {
            let ops = metric_operators(problem, config.algorithm)?;
            let stacked = StackedMap::new(ops)?;
            // Difference operators have structurally empty rows at the border.
            let zero_rows = if image { ZeroRows::UnitStep } else { ZeroRows::Reject };
            let metric = build_diagonal_for_with(&stacked as &dyn LinearMap, config.s, zero_rows)?;
            summary.put("s", sig12(config.s));
            if let StepMetric::Diagonal { sigma, gamma, tau } = &metric {
                for (name, step) in [("sigma", sigma), ("gamma", gamma), ("tau", tau)] {
                    let (lo, hi) = step_range(step);
                    summary.put(&format!("{name}_min"), sig12(lo));
                    summary.put(&format!("{name}_max"), sig12(hi));
                }
            }
            Ok(metric)
        }
    }
}

fn step_range(v: &[f64]) -> (f64, f64) {
    v.iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)))
}

fn list(v: &[f64]) -> String {
    v.iter().map(|x| sig12(*x)).collect::<Vec<_>>().join(",")
}

fn build_schedule(config: &RunConfig) -> Result<InertialSchedule> {
    let suggested = suggest_schedule(config.alpha, config.theta)?;
    let delta_hat = config.delta_hat.unwrap_or(suggested.delta_hat());
    let rho = match config.rho {
        Some(r) => r,
        None if config.delta_hat.is_some() => {
            0.99 * rho_upper_bound(config.alpha, config.theta, delta_hat)?
        }
        None => suggested.rho(),
    };
    Ok(InertialSchedule::new(config.alpha, config.theta, delta_hat, rho)?)
}

fn solve_task(config: &RunConfig) -> Result<Outcome> {
    let out_dir = config
        .out
        .as_deref()
        .ok_or_else(|| CliError::Config("no output directory".into()))?;
    let mut s = Summary(Vec::new());
    s.put("task", config.task);
    let (problem, loaded) = load_problem(config, &mut s)?;
    s.put("algorithm", config.algorithm);
    s.put("metric", config.metric);
    s.put("rule", config.rule);
    let metric = build_metric(&problem, config, matches!(loaded, Loaded::Image(_)), &mut s)?;
    let metric = validate_for(&problem, config.algorithm, metric)?;
    s.put("validation_value", sig12(metric.report().value));
    s.put("validation_margin", sig12(metric.report().margin));
    let schedule = build_schedule(config)?;
    s.put("alpha", sig12(schedule.alpha()));
    s.put("theta", sig12(schedule.theta()));
    s.put("delta_hat", sig12(schedule.delta_hat()));
    s.put("rho", sig12(schedule.rho()));
    s.put("max_iter", config.max_iter);
    s.put("tol", sig12(config.tol));
    s.put("record_every", config.record_every);
    s.put("timing", config.timing);
    let options = SolveOptions {
        max_iter: config.max_iter,
        tol: config.tol,
        rule: config.rule,
        record_every: config.record_every,
        timing: config.timing,
    };
    let result = run(&problem, config.algorithm, &metric, &schedule, &options)?;

    std::fs::create_dir_all(out_dir).map_err(|e| CliError::io(out_dir, e))?;
    match &loaded {
        Loaded::Image(image) => {
            s.put("input_objective", sig12(problem.objective(&image.pixels)?));
            let denoised = GrayImage {
                pixels: result.x.clone(),
                ..image.clone()
            };
            write_pgm(&out_dir.join(IMAGE_FILE), &denoised, config.pgm_format)?;
            s.put("pgm_format", format!("{:?}", config.pgm_format).to_lowercase());
        }
        Loaded::Data => {
            let text: String = result.x.iter().map(|w| format!("{w:e}\n")).collect();
            write_atomic(&out_dir.join(WEIGHTS_FILE), text.as_bytes())?;
        }
    }
    put_result(&mut s, &result);
    write_atomic(&out_dir.join(TRACE_FILE), trace_csv(&result.records).as_bytes())?;
    let outcome = Outcome {
        summary: s.0,
        exit_code: if result.termination == Termination::Diverged {
            EXIT_SOLVER
        } else {
            EXIT_OK
        },
    };
    write_atomic(&out_dir.join(SUMMARY_FILE), outcome.text().as_bytes())?;
    Ok(outcome)
}

fn put_result(s: &mut Summary, r: &SolveResult) {
    s.put("iterations", r.iterations);
    s.put("termination", r.termination);
    s.put("final_objective", sig12(r.final_objective));
    s.put("final_residual", sig12(r.final_residual));
}

fn validate_task(config: &RunConfig) -> Result<Outcome> {
    let mut s = Summary(Vec::new());
    s.put("task", config.task);
    let (norms, problem) = match (&config.norms, &config.input) {
        (Some(norms), _) => {
            if norms.is_empty() || norms.iter().any(|n| *n < 0.0) {
                return Err(CliError::Config("norms must be non-negative".into()));
            }
            (norms.clone(), None)
        }
        (None, Some(_)) => {
            let (problem, loaded) = load_problem(config, &mut s)?;
            s.put("algorithm", config.algorithm);
            (operator_norms(&problem, config)?, Some((problem, loaded)))
        }
        (None, None) => return Err(CliError::Config("validate needs `norms` or an input file".into())),
    };
    s.put("operator_norms", list(&norms));
    s.put("s_bound", sig12(equal_step_bound(&norms, 1.0)));
    s.put("s_auto", sig12(equal_step_bound(&norms, AUTO_STEP_TARGET)));

    let accepted = match config.metric {
        MetricKind::Scalar => {
            let auto = equal_step_bound(&norms, AUTO_STEP_TARGET);
            let (sigma, gamma, tau) = (
                config.sigma.unwrap_or(auto),
                config.gamma.unwrap_or(auto),
                config.tau.unwrap_or(auto),
            );
            s.put("metric", "scalar");
            s.put("sigma", sig12(sigma));
            s.put("gamma", sig12(gamma));
            s.put("tau", sig12(tau));
            let report = validate_split(sigma, gamma, tau, &norms);
            s.put("value", sig12(report.value));
            s.put("margin", sig12(report.margin));
            if let Some(reason) = &report.reason {
                s.put("reason", reason);
            }
            report.accepted
        }
        MetricKind::Diagonal => {
            let (problem, loaded) = problem
                .as_ref()
                .ok_or_else(|| CliError::Config("the diagonal metric needs an input problem".into()))?;
            s.put("metric", "diagonal");
            let metric = build_metric(problem, config, matches!(loaded, Loaded::Image(_)), &mut s)?;
            match validate_for(problem, config.algorithm, metric) {
                Ok(v) => {
                    s.put("value", sig12(v.report().value));
                    s.put("margin", sig12(v.report().margin));
                    if let Some(d) = &v.report().diagonal {
                        s.put("primal_term", sig12(d.primal));
                        s.put("coupling_term", sig12(d.coupling));
                    }
                    true
                }
                Err(ipdfp_core::Error::MetricRejected(reason)) => {
                    s.put("reason", reason);
                    false
                }
                Err(e) => return Err(e.into()),
            }
        }
    };
    match suggest_schedule(config.alpha, config.theta) {
        Ok(sched) => {
            let delta_hat = config.delta_hat.unwrap_or(sched.delta_hat());
            s.put("alpha", sig12(config.alpha));
            s.put("delta_hat", sig12(delta_hat));
            s.put("rho_bound", sig12(rho_upper_bound(config.alpha, config.theta, delta_hat)?));
        }
        Err(e) => s.put("schedule_error", e),
    }
    let accepted = accepted && build_schedule(config).is_ok();
    s.0.insert(1, ("status".into(), if accepted { "accepted" } else { "rejected" }.into()));
    let outcome = Outcome {
        summary: s.0,
        exit_code: if accepted { EXIT_OK } else { EXIT_VALIDATION },
    };
    if let Some(out) = &config.out {
        std::fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
        write_atomic(&out.join(SUMMARY_FILE), outcome.text().as_bytes())?;
    }
    Ok(outcome)
}
