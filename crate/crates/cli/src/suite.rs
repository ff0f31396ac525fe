//! The checks and exports behind each subcommand. Everything here produces
//! bytes in memory; writing and hashing happen in [`crate::run`].

use rayon::prelude::*;
use regime_lab::io::{ctmc_paths_csv, discrete_paths_csv, limit_samples_csv, matrix_csv, reports_csv};
use regime_lab::markov::{discrete_transition_matrix, transition_matrix, MatrixVariant};
use regime_lab::{
    cf_convergence, cf_rate_check, discrete_cf, discrete_cf_exact, fdd_compare, jump_count_mgf_check, jump_law_convergence, limit_cf,
    limit_cf_exact, price_convergence, rate_asymptotics_check, sample_ctmc_path, sample_limit_fdd, tightness_diagnostics,
    verify_conditions, CfEstimate, CfEstimator, CfSpec, ConvergenceReport, DiscreteScheme, MonteCarlo, ReportRow, ReturnFamily, SeedSpec,
};
use serde::Serialize;

use crate::config::ModelConfig;
use crate::error::CliError;

const KERNEL_TOL: f64 = 1e-10;
const RATE_GRID: [u64; 4] = [10, 100, 1_000, 10_000];
const CONDITIONS_GRID: [u64; 4] = [64, 256, 1024, 4096];
const JUMP_LAW_TOLERANCE: f64 = 0.02;
const FDD_FLOOR: f64 = 0.01;
const CF_TOLERANCE: f64 = 0.03;
const CF_RATE_BAND: f64 = 4.0;
const PRICE_TOLERANCE: f64 = 0.15;
const TIGHTNESS_EPS: f64 = 0.5;

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub seed: u64,
    pub trials: u64,
    pub n_grid: Vec<u64>,
    pub variant: MatrixVariant,
}

impl RunOptions {
    fn mc(&self, label: &str) -> MonteCarlo {
        MonteCarlo::new(self.trials, SeedSpec::new(self.seed)).derive(label)
    }
}

/// One row of the summary table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckOutcome {
    pub check: String,
    pub pass: bool,
    pub decay_order: Option<f64>,
    pub criterion: String,
    pub error: Option<String>,
}

#[derive(Debug, Default)]
pub struct Outputs {
    /// Relative path and contents, in write order.
    pub files: Vec<(String, Vec<u8>)>,
    pub checks: Vec<CheckOutcome>,
    reports: Vec<ConvergenceReport>,
}

impl Outputs {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    fn add(&mut self, name: impl Into<String>, bytes: impl Into<Vec<u8>>) {
        self.files.push((name.into(), bytes.into()));
    }

    /// Records a check; a library error becomes a failed row rather than an abort.
    fn record(&mut self, check: &str, result: regime_lab::Result<ConvergenceReport>) {
        match result {
            Ok(mut report) => {
                report.name = check.to_string();
                self.add(format!("reports/{check}.json"), report.to_json());
                self.checks.push(CheckOutcome {
                    check: check.into(),
                    pass: report.pass,
                    decay_order: report.decay_order,
                    criterion: report.criterion.clone(),
                    error: None,
                });
                self.reports.push(report);
            }
            Err(e) => self.checks.push(CheckOutcome {
                check: check.into(),
                pass: false,
                decay_order: None,
                criterion: String::new(),
                error: Some(e.to_string()),
            }),
        }
    }

    /// Appends `reports.csv` and `summary.csv` built from everything recorded so far.
    pub fn finish(&mut self) {
        if !self.reports.is_empty() {
            let refs: Vec<&ConvergenceReport> = self.reports.iter().collect();
            let csv = reports_csv(&refs);
            self.add("reports.csv", csv);
        }
        if !self.checks.is_empty() {
            let mut csv = String::from("check,pass,decay_order\n");
            for c in &self.checks {
                let order = c.decay_order.map(|d| d.to_string()).unwrap_or_default();
                csv.push_str(&format!("{},{},{order}\n", c.check, c.pass));
            }
            self.add("summary.csv", csv);
            let json = serde_json::to_string_pretty(&self.checks).expect("summary serializes");
            self.add("summary.json", json);
        }
    }
}

/// Semigroup and stochasticity of `P(t)`; the closed form when the model is
/// two-state symmetric.
fn kernel_check(model: &ModelConfig) -> regime_lab::Result<ConvergenceReport> {
    let g = &model.generator;
    let tol = model.tolerance.min(1e-12);
    let mut report = ConvergenceReport::new("kernel", "semigroup", vec![]);
    let mut pass = true;
    let symmetric = g.dim() == 2 && g.rate(0, 1) == g.rate(1, 0);
    for t in [0.1, 0.5, 1.0, 10.0] {
        let p = transition_matrix(g, t, tol)?;
        let row_err = p.row_sums().iter().map(|s| (s - 1.0).abs()).fold(0.0, f64::max);
        let ok = row_err <= KERNEL_TOL;
        pass &= ok;
        report.push(ReportRow::new(format!("row_sum[t={t}]"), row_err).bound(KERNEL_TOL).pass(ok));
        if symmetric {
            let lam = g.rate(0, 1);
            let stay = 0.5 * (1.0 + (-2.0 * lam * t).exp());
            let ok = (p[(0, 0)] - stay).abs() <= KERNEL_TOL && (p[(0, 1)] - (1.0 - stay)).abs() <= KERNEL_TOL;
            pass &= ok;
            report.push(ReportRow::new(format!("closed_form[t={t}]"), p[(0, 0)]).oracle(stay).pass(ok));
        }
    }
    for (s, t) in [(0.1, 0.4), (0.5, 0.5), (0.3, 1.2), (2.0, 3.0)] {
        let lhs = &transition_matrix(g, s, tol)? * &transition_matrix(g, t, tol)?;
        let err = lhs.max_abs_diff(&transition_matrix(g, s + t, tol)?);
        let ok = err <= KERNEL_TOL;
        pass &= ok;
        report.push(ReportRow::new(format!("semigroup[s={s},t={t}]"), err).bound(KERNEL_TOL).pass(ok));
    }
    report.pass = pass;
    report.criterion = format!("rows sum to 1, P(s)P(t) = P(s+t) within {KERNEL_TOL:e}");
    Ok(report)
}

fn spec_single(horizon: f64) -> regime_lab::Result<CfSpec> {
    CfSpec::new(vec![1.0], vec![horizon])
}

fn spec_two_block(horizon: f64) -> regime_lab::Result<CfSpec> {
    CfSpec::new(vec![1.0, -1.0], vec![0.5 * horizon, horizon])
}

/// The convergence checks, each with its own derived seed.
pub fn converge(model: &ModelConfig, opts: &RunOptions, out: &mut Outputs) {
    let (g, params, t) = (&model.generator, &model.params, model.horizon());
    let (kind, conv, tol) = (model.family, model.convention, model.tolerance);
    let grid = &opts.n_grid;

    out.record("kernel", kernel_check(model));
    out.record("rate_asymptotics", rate_asymptotics_check(g, t, &RATE_GRID, tol));
    out.record("jump_count_mgf", jump_count_mgf_check(g, t, &[0.1, 0.5, 1.0], &opts.mc("mgf")));
    out.record("jump_law", jump_law_convergence(g, t, &[0.4 * t], grid, &opts.mc("jump_law"), tol, JUMP_LAW_TOLERANCE));
    let fdd_times = [0.25 * t, 0.75 * t];
    out.record("fdd", fdd_compare(g, t, &fdd_times, &[0, 1], grid, &opts.mc("fdd"), tol, FDD_FLOOR));
    let cf = |spec: regime_lab::Result<CfSpec>, label: &str| {
        cf_convergence(g, params, kind, &spec?, t, grid, &opts.mc(label), conv, tol, CF_TOLERANCE)
    };
    out.record("cf_single", cf(spec_single(t), "cf_single"));
    out.record("cf_two_block", cf(spec_two_block(t), "cf_two_block"));
    out.record("conditions", verify_conditions(kind, params, t, &CONDITIONS_GRID, &[0.3 * t, 0.7 * t]));
    out.record("cf_rate", cf_rate_check(params, kind, t, 0.0, t, &[1.0], grid, CF_RATE_BAND));

    let deltas = [t / 64.0, t / 16.0, t / 4.0, t];
    let tight =
        tightness_diagnostics(g, params, kind, t, grid, &[0.1, 0.2, 0.5, 1.0], &deltas, TIGHTNESS_EPS, &opts.mc("tightness"), conv, tol);
    if let Ok(report) = &tight {
        out.add("tightness_cells.json", serde_json::to_string_pretty(report).expect("tightness serializes"));
    }
    out.record("tightness", tight.map(|r| r.to_report()));

    if let Err(e) = cf_estimates(model, opts, out) {
        out.record("cf_estimates", Err(e));
    }
}

#[derive(Serialize)]
struct CfEstimates {
    discrete: CfEstimate,
    discrete_exact: CfEstimate,
    limit: CfEstimate,
    limit_exact: CfEstimate,
}

/// Single-block CF at the model's own `N`: both Monte Carlo estimates and both exact values.
fn cf_estimates(model: &ModelConfig, opts: &RunOptions, out: &mut Outputs) -> regime_lab::Result<()> {
    let (g, params, t) = (&model.generator, &model.params, model.horizon());
    let spec = spec_single(t)?;
    let family = ReturnFamily::new(model.family, params, &model.grid)?;
    let scheme = DiscreteScheme::new(g, family, model.convention, model.tolerance)?;
    let est = CfEstimates {
        discrete: discrete_cf(&scheme, &spec, &opts.mc("cf_discrete"), CfEstimator::Sampled)?,
        discrete_exact: CfEstimate::exact(discrete_cf_exact(&scheme, &spec)?),
        limit: limit_cf(g, params, &spec, t, &opts.mc("cf_limit"))?,
        limit_exact: CfEstimate::exact(limit_cf_exact(g, params, &spec, t)?),
    };
    out.add("cf_estimates.json", serde_json::to_string_pretty(&est).expect("estimates serialize"));
    Ok(())
}

pub fn price(model: &ModelConfig, opts: &RunOptions, out: &mut Outputs) {
    let report = price_convergence(
        &model.generator,
        &model.params,
        model.family,
        model.strike,
        model.horizon(),
        &opts.n_grid,
        &opts.mc("price"),
        model.convention,
        model.tolerance,
        PRICE_TOLERANCE,
    );
    out.record("price", report);
}

/// Generator, one-step matrix and `paths` sample paths of the chain, the
/// discrete market and the limit process (on the model's grid times).
pub fn simulate(model: &ModelConfig, opts: &RunOptions, paths: u64, out: &mut Outputs) -> Result<(), CliError> {
    let (g, params, t) = (&model.generator, &model.params, model.horizon());
    out.add("generator.csv", matrix_csv(&g.generator()));
    let dt = discrete_transition_matrix(g, &model.grid, opts.variant, model.tolerance)?;
    out.add("transition_matrix.csv", matrix_csv(&dt.matrix));

    let root = SeedSpec::new(opts.seed).derive("simulate");
    let family = ReturnFamily::new(model.family, params, &model.grid)?;
    let scheme = DiscreteScheme::new(g, family, model.convention, model.tolerance)?;
    let times: Vec<f64> = (0..=model.grid.steps()).map(|k| model.grid.time_of(k)).collect();

    let ctmc = (0..paths)
        .into_par_iter()
        .map(|i| sample_ctmc_path(g, t, 0, root.derive_index("ctmc", i)))
        .collect::<regime_lab::Result<Vec<_>>>()?;
    let limit = ctmc
        .par_iter()
        .enumerate()
        .map(|(i, p)| sample_limit_fdd(p, params, &times, root.derive_index("limit", i as u64)))
        .collect::<regime_lab::Result<Vec<_>>>()?;
    let discrete: Vec<_> = (0..paths).into_par_iter().map(|i| scheme.sample_path(root.derive_index("discrete", i))).collect();

    out.add("ctmc_paths.csv", ctmc_paths_csv(&ctmc));
    out.add("discrete_paths.csv", discrete_paths_csv(&discrete));
    out.add("limit_paths.csv", limit_samples_csv(&limit));
    Ok(())
}

pub fn variant_name(v: MatrixVariant) -> &'static str {
    match v {
        MatrixVariant::PaperDiagonal => "paper",
        MatrixVariant::RowStochastic => "stochastic",
    }
}
