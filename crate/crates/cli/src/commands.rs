use std::fs;
use std::path::Path;

use anyhow::{bail, ensure, Context, Result};
use serde::Serialize;
use serde_json::Value;

use jgl_core::io::{
    edge_records, load_ground_truth, read_json, read_matrix_csv, read_precision_set, read_sym_csv,
    save_ground_truth, write_edges_csv, write_json, write_precision_set, write_table, EdgeKind,
};
use jgl_core::metrics::log_gap_trace;
use jgl_core::select::{grid_product, log_spaced};
use jgl_core::{
    cross_validate, fit_gista, generate, mse, roc_counts, Algorithm,
    BoundDiagnostics, ClassDataset, CovarianceSet, CvPlan, JglError, PenaltyKind, PenaltySpec,
    SolverOptions, SolverReport, StepInit, StopRule, SyntheticSpec,
};

use crate::{
    AlgorithmArg, CvArgs, EvalArgs, FitArgs, InputArgs, PenaltyArg, SimulateArgs, SolverArgs,
    StepInitArg, StopRuleArg,
};

pub const REPORT_FILE: &str = "report.json";
pub const EDGES_FILE: &str = "edges.csv";
pub const CV_SCORES_FILE: &str = "cv_scores.csv";
pub const CV_BEST_FILE: &str = "cv_best.json";

fn solver_options(a: &SolverArgs) -> Result<SolverOptions> {
    let opts = SolverOptions {
        tolerance: a.eps,
        max_iterations: a.max_iter,
        backtrack_c: a.backtrack_c,
        initial_step: a.eta0,
        stop_rule: match a.stop_rule {
            StopRuleArg::RelativeError => StopRule::RelativeError,
            StopRuleArg::ObjectiveError => StopRule::ObjectiveError,
        },
        step_init: match a.step_init {
            StepInitArg::BarzilaiBorwein => StepInit::BarzilaiBorwein,
            StepInitArg::Safe => StepInit::Safe,
            StepInitArg::Fixed => StepInit::Fixed,
        },
        reference_objective: a.reference_objective,
        ..SolverOptions::default()
    };
    opts.validate()?;
    Ok(opts)
}

fn penalty_kind(p: PenaltyArg) -> PenaltyKind {
    match p {
        PenaltyArg::Fused => PenaltyKind::Fused,
        PenaltyArg::Group => PenaltyKind::Group,
    }
}

fn read_samples(paths: &[std::path::PathBuf]) -> Result<ClassDataset> {
    let classes = paths
        .iter()
        .map(|p| read_matrix_csv(p))
        .collect::<jgl_core::Result<Vec<_>>>()?;
    Ok(ClassDataset::new(classes)?)
}

fn load_input(a: &InputArgs) -> Result<CovarianceSet> {
    if !a.samples.is_empty() {
        return Ok(read_samples(&a.samples)?.covariance_set(a.center)?);
    }
    if a.cov.is_empty() {
        bail!("supply --samples or --cov for every class");
    }
    ensure!(
        a.n.len() == a.cov.len(),
        "{} --cov files but {} --n counts",
        a.cov.len(),
        a.n.len()
    );
    let covs = a
        .cov
        .iter()
        .map(|p| read_sym_csv(p))
        .collect::<jgl_core::Result<Vec<_>>>()?;
    Ok(CovarianceSet::new(covs, a.n.clone())?)
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))
}

#[derive(Serialize)]
struct EdgeSummary {
    total: usize,
    common: usize,
    specific: usize,
}

#[derive(Serialize)]
struct FitReport<'a> {
    algorithm: &'static str,
    penalty: Option<PenaltyKind>,
    lambda1: f64,
    lambda2: Option<f64>,
    /// Weight actually passed to G-ISTA, `lambda1 / n`.
    gista_lambda: Option<f64>,
    classes: usize,
    p: usize,
    counts: &'a [usize],
    options: &'a SolverOptions,
    status: jgl_core::Status,
    iterations: usize,
    final_objective: f64,
    edges: EdgeSummary,
    bounds: &'a BoundDiagnostics,
    solver: &'a SolverReport,
}

pub fn fit(a: FitArgs) -> Result<()> {
    let cov = load_input(&a.input)?;
    let opts = solver_options(&a.solver)?;
    let kind = penalty_kind(a.penalty);
    let (result, algorithm, gista_lambda) = match a.algorithm {
        AlgorithmArg::Gista => {
            if a.lambda2.is_some() {
                bail!("--lambda2 does not apply to --algorithm gista");
            }
            ensure!(
                cov.classes() == 1,
                "gista fits a single class, got {} classes",
                cov.classes()
            );
            ensure!(a.lambda1 > 0.0, "--lambda1 must be positive, got {}", a.lambda1);
            // same scale as ista with one class: f is weighted by n
            let lambda = a.lambda1 / cov.counts()[0] as f64;
            let r = fit_gista(&cov.covariances()[0], lambda, &opts, None)?;
            (r, "gista", Some(lambda))
        }
        AlgorithmArg::Ista | AlgorithmArg::Mista => {
            let lambda2 = a
                .lambda2
                .context("--lambda2 is required for ista and mista")?;
            let spec = PenaltySpec::new(a.lambda1, lambda2, kind)?;
            let (alg, name) = if a.algorithm == AlgorithmArg::Ista {
                (Algorithm::Ista, "ista")
            } else {
                (Algorithm::Mista, "mista")
            };
            (jgl_core::fit(alg, &cov, &spec, &opts, None)?, name, None)
        }
    };

    create_dir(&a.out_dir)?;
    write_precision_set(&a.out_dir, &result.estimate)?;
    let edges = edge_records(&result.estimate, a.edge_threshold);
    write_edges_csv(&a.out_dir.join(EDGES_FILE), &edges)?;
    let common = edges.iter().filter(|e| e.kind == EdgeKind::Common).count();
    let report = FitReport {
        algorithm,
        penalty: gista_lambda.is_none().then_some(kind),
        lambda1: a.lambda1,
        lambda2: a.lambda2,
        gista_lambda,
        classes: cov.classes(),
        p: cov.dim(),
        counts: cov.counts(),
        options: &opts,
        status: result.report.status,
        iterations: result.report.iterations,
        final_objective: result.report.final_objective(),
        edges: EdgeSummary {
            total: edges.len(),
            common,
            specific: edges.len() - common,
        },
        bounds: &result.bounds,
        solver: &result.report,
    };
    write_json(&a.out_dir.join(REPORT_FILE), &report)?;
    Ok(())
}

/// A comma list of values, or `log:COUNT:MIN:MAX`.
pub fn parse_grid(text: &str) -> Result<Vec<f64>> {
    if let Some(rest) = text.strip_prefix("log:") {
        let parts: Vec<&str> = rest.split(':').collect();
        ensure!(parts.len() == 3, "log grid must be log:COUNT:MIN:MAX, got '{text}'");
        let count: usize = parts[0].parse().with_context(|| format!("bad count in '{text}'"))?;
        let min: f64 = parts[1].parse().with_context(|| format!("bad minimum in '{text}'"))?;
        let max: f64 = parts[2].parse().with_context(|| format!("bad maximum in '{text}'"))?;
        return Ok(log_spaced(count, min, max)?);
    }
    let values = text
        .split(',')
        .map(|v| {
            v.trim()
                .parse::<f64>()
                .with_context(|| format!("'{v}' in grid '{text}' is not a number"))
        })
        .collect::<Result<Vec<_>>>()?;
    ensure!(!values.is_empty(), "empty grid");
    Ok(values)
}

#[derive(Serialize)]
struct CvBest<'a> {
    lambda1: f64,
    lambda2: f64,
    score: f64,
    folds: usize,
    seed: u64,
    penalty: PenaltyKind,
    algorithm: Algorithm,
    /// `fold_assignments[k][s]`: 0-based test fold of sample `s` in class `k`.
    fold_assignments: &'a [Vec<usize>],
}

pub fn cv(a: CvArgs) -> Result<()> {
    let data = read_samples(&a.samples)?;
    let opts = solver_options(&a.solver)?;
    let algorithm = match a.algorithm {
        AlgorithmArg::Ista => Algorithm::Ista,
        AlgorithmArg::Mista => Algorithm::Mista,
        AlgorithmArg::Gista => bail!("cross-validation supports --algorithm ista or mista"),
    };
    let grid = grid_product(&parse_grid(&a.grid_l1)?, &parse_grid(&a.grid_l2)?);
    let plan = CvPlan {
        folds: a.folds,
        grid,
        seed: a.seed,
        kind: penalty_kind(a.penalty),
        algorithm,
        center: a.center,
    };
    let result = cross_validate(&data, &plan, &opts)?;

    create_dir(&a.out_dir)?;
    let mut header = vec!["lambda1".to_string(), "lambda2".into(), "score".into()];
    header.extend((1..=a.folds).map(|d| format!("fold_{d}")));
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let rows = result.scores.iter().map(|s| {
        let mut row = vec![s.lambda1.to_string(), s.lambda2.to_string(), s.score.to_string()];
        row.extend(s.fold_scores.iter().map(f64::to_string));
        row
    });
    write_table(&a.out_dir.join(CV_SCORES_FILE), &header, rows)?;
    let best = &result.scores[result.best_index];
    write_json(
        &a.out_dir.join(CV_BEST_FILE),
        &CvBest {
            lambda1: best.lambda1,
            lambda2: best.lambda2,
            score: best.score,
            folds: a.folds,
            seed: a.seed,
            penalty: plan.kind,
            algorithm,
            fold_assignments: &result.fold_assignments,
        },
    )?;
    Ok(())
}

pub fn simulate(a: SimulateArgs) -> Result<()> {
    let shares = if a.shares.is_empty() {
        vec![1.0; a.classes]
    } else {
        a.shares.clone()
    };
    let spec = SyntheticSpec {
        p: a.p,
        classes: a.classes,
        n_total: a.n_total,
        class_shares: shares,
        edge_density: a.density,
        common_fraction: a.common_fraction,
        signal_range: (a.signal_lo, a.signal_hi),
        diagonal_margin: a.diag_margin,
        seed: a.seed,
    };
    let truth = generate(&spec).map_err(|e| match e {
        JglError::Infeasible(_) => anyhow::Error::new(e).context("cannot simulate this specification"),
        other => other.into(),
    })?;
    create_dir(&a.out_dir)?;
    save_ground_truth(&a.out_dir, &truth)?;
    Ok(())
}

fn number(v: &Value, key: &str) -> Option<f64> {
    v.get(key).and_then(Value::as_f64)
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn eval(a: EvalArgs) -> Result<()> {
    let truth = load_ground_truth(&a.truth)?;
    let mut roc_rows = Vec::new();
    let mut mse_rows = Vec::new();
    let mut trace_rows = Vec::new();
    for (idx, dir) in a.fits.iter().enumerate() {
        let id = (idx + 1).to_string();
        let report: Value = read_json(&dir.join(REPORT_FILE))?;
        let classes = report
            .get("classes")
            .and_then(Value::as_u64)
            .with_context(|| format!("{} lacks a class count", dir.join(REPORT_FILE).display()))?
            as usize;
        ensure!(
            classes == truth.theta.classes(),
            "{} has {classes} classes, the truth has {}",
            dir.display(),
            truth.theta.classes()
        );
        let estimate = read_precision_set(dir, classes)?;
        ensure!(
            estimate.dim() == truth.theta.dim(),
            "{} has p = {}, the truth has p = {}",
            dir.display(),
            estimate.dim(),
            truth.theta.dim()
        );
        let (l1, l2) = (number(&report, "lambda1"), number(&report, "lambda2"));
        let c = roc_counts(&truth.theta, &estimate, a.threshold)?;
        roc_rows.push(vec![
            id.clone(),
            cell(l1),
            cell(l2),
            c.selected().to_string(),
            c.tp.to_string(),
            c.fp.to_string(),
            c.fn_.to_string(),
            c.tn.to_string(),
        ]);
        mse_rows.push(vec![id.clone(), cell(l1), cell(l2), mse(&truth.theta, &estimate)?.to_string()]);

        let solver = report.get("solver");
        let objectives: Vec<f64> = solver
            .and_then(|s| s.get("objective_trace"))
            .and_then(|t| serde_json::from_value(t.clone()).ok())
            .with_context(|| format!("{} lacks an objective trace", dir.display()))?;
        let fstar = a
            .fstar
            .or_else(|| solver.and_then(|s| number(s, "reference_objective")))
            .or_else(|| objectives.last().copied())
            .context("empty objective trace")?;
        for (t, gap) in log_gap_trace(&objectives, fstar) {
            trace_rows.push(vec![
                id.clone(),
                t.to_string(),
                objectives[t].to_string(),
                fstar.to_string(),
                gap.to_string(),
            ]);
        }
    }
    create_dir(&a.out_dir)?;
    write_table(
        &a.out_dir.join("roc.csv"),
        &["fit", "lambda1", "lambda2", "selected", "tp", "fp", "fn", "tn"],
        roc_rows,
    )?;
    write_table(&a.out_dir.join("mse.csv"), &["fit", "lambda1", "lambda2", "mse"], mse_rows)?;
    write_table(
        &a.out_dir.join("trace.csv"),
        &["fit", "iteration", "objective", "fstar", "log10_gap"],
        trace_rows,
    )?;
    Ok(())
}
