//! Discrete-scheme statistics against continuous-model oracles over a grid
//! of step counts.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::ctmc::{check_trials, jump_law_compare, sample_path_with, CtmcPath};
use crate::discrete::{
    conditional_cf, discrete_cf_exact, spec_cuts, DiscreteChain, DiscreteScheme, FamilyKind, ReturnFamily, Run, StateConvention,
};
use crate::error::{LabError, Result};
use crate::limit::{limit_cf_exact, log_h, price_european_call, CfSpec};
use crate::markov::{transition_matrix, GeneratorMatrix, RegimeParams, TimeGrid};
use crate::par::{fold_trials, Accumulator, ComplexMoments, Moments, MonteCarlo};
use crate::report::{weakly_decreasing, ConvergenceReport, ReportRow};
use crate::rng::TrialStreams;

fn check_grid(n_grid: &[u64]) -> Result<()> {
    if n_grid.is_empty() || n_grid.windows(2).any(|w| w[0] >= w[1]) || n_grid[0] == 0 {
        return Err(LabError::invalid("n_grid", "must be non-empty, positive and strictly increasing"));
    }
    Ok(())
}

fn strictly_decreasing(xs: &[f64]) -> bool {
    xs.windows(2).all(|w| w[1] < w[0])
}

/// `P(Y_{t_1} = x_1, ..., Y_{t_n} = x_n)` from state 0 by chained transition
/// matrices.
pub fn fdd_oracle(g: &GeneratorMatrix, times: &[f64], states: &[usize], tol: f64) -> Result<f64> {
    let mut prob = 1.0;
    let (mut t0, mut x0) = (0.0, 0);
    for (&t, &x) in times.iter().zip(states) {
        g.check_state(x)?;
        let p = transition_matrix(g, t - t0, tol)?;
        prob *= p[(x0, x)];
        (t0, x0) = (t, x);
    }
    Ok(prob)
}

fn state_at(runs: &[Run], k: u64) -> usize {
    runs.iter().find(|r| r.start <= k && k < r.end).map(|r| r.state).expect("runs cover 0..=N")
}

/// Joint probabilities of the discrete chain at `t^{(N)}_i` against the
/// continuous chain at `t_i`. A row passes when its error is within
/// `max(3 SE, floor)`.
#[allow(clippy::too_many_arguments)]
pub fn fdd_compare(
    g: &GeneratorMatrix,
    horizon: f64,
    times: &[f64],
    states: &[usize],
    n_grid: &[u64],
    mc: &MonteCarlo,
    tol: f64,
    floor: f64,
) -> Result<ConvergenceReport> {
    check_grid(n_grid)?;
    if times.is_empty() || times.len() != states.len() || times.windows(2).any(|w| w[1] < w[0]) {
        return Err(LabError::invalid("times", "need sorted times with one state each"));
    }
    if let Some(&t) = times.iter().find(|&&t| !(0.0..=horizon).contains(&t)) {
        return Err(LabError::OutOfHorizon { t, horizon });
    }
    let oracle = fdd_oracle(g, times, states, tol)?;
    let mut report = ConvergenceReport::new("fdd", "joint_probability", n_grid.to_vec());
    let mut pass = true;
    for &n in n_grid {
        let grid = TimeGrid::new(horizon, n)?;
        let chain = DiscreteChain::new(g, &grid, tol)?;
        let cells: Vec<u64> = times.iter().map(|&t| grid.index(t)).collect();
        let streams = TrialStreams::new(mc.derive_index("fdd", n).seed);
        let acc: Moments = fold_trials(mc.trials, mc.execution, |i, acc: &mut Moments| {
            let runs = chain.runs(&mut streams.trial(i));
            let hit = cells.iter().zip(states).all(|(&k, &x)| state_at(&runs, k) == x);
            acc.push(if hit { 1.0 } else { 0.0 });
        });
        let se = acc.std_error();
        let ok = (acc.mean - oracle).abs() <= (3.0 * se).max(floor);
        pass &= ok;
        report.push(ReportRow::new("joint_probability", acc.mean).at(n).se(se).oracle(oracle).pass(ok));
    }
    report.fit_decay();
    report.pass = pass;
    report.criterion = format!("|estimate - Chapman-Kolmogorov oracle| <= max(3 SE, {floor}) at every N");
    Ok(report)
}

/// [`jump_law_compare`] over a grid of step counts. Passes when the
/// conditional estimate at the largest `N` is within `tolerance + 3 SE` of
/// `g_m`, its error decreases over the grid, and the `(N/T)^{m+1}` scaling
/// grows at least half as fast as `N`.
pub fn jump_law_convergence(
    g: &GeneratorMatrix,
    horizon: f64,
    t_points: &[f64],
    n_grid: &[u64],
    mc: &MonteCarlo,
    tol: f64,
    tolerance: f64,
) -> Result<ConvergenceReport> {
    check_grid(n_grid)?;
    let mut report = ConvergenceReport::new("jump_law", "scaled_conditional", n_grid.to_vec());
    for &n in n_grid {
        let grid = TimeGrid::new(horizon, n)?;
        let r = jump_law_compare(g, &grid, t_points, &mc.derive_index("jump_law", n), tol)?;
        report.rows.extend(r.rows);
        if report.notes.is_empty() {
            report.notes.extend(r.notes);
        }
    }
    report.fit_decay();
    let primary = report.primary_rows();
    let last = primary.last().unwrap();
    let close = last.error.unwrap() <= tolerance + 3.0 * last.std_error;
    let errors: Vec<f64> = primary.iter().map(|r| r.error.unwrap()).collect();
    let decreasing = weakly_decreasing(&primary) && (primary.iter().any(|r| r.std_error > 0.0) || strictly_decreasing(&errors));

    let up: Vec<f64> = report.rows_for("scaled_m_plus_1").iter().map(|r| r.estimate).collect();
    let growth = up.last().unwrap() / up[0];
    let n_ratio = *n_grid.last().unwrap() as f64 / n_grid[0] as f64;
    let diverges = up.windows(2).all(|w| w[1] > w[0]) && (n_grid.len() == 1 || growth >= 0.5 * n_ratio);
    report.push(ReportRow::new("m_plus_1_growth", growth).bound(n_ratio).pass(diverges));
    report.note(format!("(N/T)^m scaling converges to g_m; (N/T)^(m+1) scaling grew by {growth:.3} while N grew by {n_ratio}"));
    report.pass = close && decreasing && diverges;
    report.criterion = format!(
        "conditional (N/T)^m p_N within {tolerance} + 3 SE of g_m at the largest N, error decreasing in N, (N/T)^(m+1) p_N increasing"
    );
    Ok(report)
}

/// Grid skeleton of a continuous path: `Y^{(N)}_k = Y_{kT/N}`.
pub(crate) fn skeleton_runs(path: &CtmcPath, grid: &TimeGrid) -> Vec<Run> {
    let n = grid.steps();
    let scale = n as f64 / grid.horizon();
    let segs: Vec<(usize, f64, f64)> = path.segments().collect();
    let mut runs = Vec::with_capacity(segs.len());
    for (idx, &(state, a, b)) in segs.iter().enumerate() {
        let start = (a * scale).ceil() as u64;
        let end = if idx + 1 == segs.len() { n + 1 } else { ((b * scale).ceil() as u64).min(n + 1) };
        if end > start {
            runs.push(Run { state, start, end });
        }
    }
    runs
}

#[derive(Default)]
struct Paired {
    discrete: ComplexMoments,
    limit: ComplexMoments,
    diff: ComplexMoments,
}

impl Accumulator for Paired {
    fn merge(&mut self, other: Self) {
        self.discrete.merge(other.discrete);
        self.limit.merge(other.limit);
        self.diff.merge(other.diff);
    }
}

/// Distance between the discrete and limit characteristic functions.
///
/// Both are estimated on the same chain paths: the discrete chain is the grid
/// skeleton of the sampled continuous path (which has exactly the law of the
/// row-stochastic discrete chain), the discrete CF uses its conditional value
/// `prod psi_j(alpha_k)^{n_kj}` and the limit CF uses `h(Y)`. The distance is
/// the modulus of the mean paired difference. Rows `distance_exact` give the
/// same distance from the two deterministic routes.
#[allow(clippy::too_many_arguments)]
pub fn cf_convergence(
    g: &GeneratorMatrix,
    params: &RegimeParams,
    kind: FamilyKind,
    spec: &CfSpec,
    horizon: f64,
    n_grid: &[u64],
    mc: &MonteCarlo,
    convention: StateConvention,
    tol: f64,
    tolerance: f64,
) -> Result<ConvergenceReport> {
    check_grid(n_grid)?;
    check_trials(mc.trials)?;
    params.check_dim(g.dim())?;
    spec.check_horizon(horizon)?;
    let limit_exact = limit_cf_exact(g, params, spec, horizon)?;
    let exponents: Vec<Vec<Complex64>> = spec
        .alphas()
        .iter()
        .map(|&a| (0..params.dim()).map(|j| Complex64::new(-0.5 * a * a * params.sigma(j).powi(2), a * params.log_drift(j))).collect())
        .collect();
    let zero = spec.alphas().iter().all(|&a| a == 0.0);
    let mut report = ConvergenceReport::new("cf", "distance", n_grid.to_vec());
    for &n in n_grid {
        let grid = TimeGrid::new(horizon, n)?;
        let family = ReturnFamily::new(kind, params, &grid)?;
        let scheme = DiscreteScheme::new(g, family, convention, tol)?;
        let cuts = spec_cuts(spec, &grid)?;
        let exact = discrete_cf_exact(&scheme, spec)?;
        if zero {
            report.push(ReportRow::new("distance", 0.0).at(n).oracle(0.0));
            report.push(ReportRow::new("distance_exact", (exact - limit_exact).norm()).at(n));
            continue;
        }
        let streams = TrialStreams::new(mc.derive_index("cf", n).seed);
        let acc: Paired = fold_trials(mc.trials, mc.execution, |i, acc: &mut Paired| {
            let path = sample_path_with(g, horizon, 0, &mut streams.trial(i));
            let runs = skeleton_runs(&path, &grid);
            let d = conditional_cf(scheme.family(), spec, &scheme.block_counts(&runs, &cuts));
            let l = log_h(&path, spec, &exponents).exp();
            acc.discrete.push(d);
            acc.limit.push(l);
            acc.diff.push(d - l);
        });
        let dist = acc.diff.mean().norm();
        report.push(ReportRow::new("distance", dist).at(n).se(acc.diff.std_error()).oracle(0.0));
        report.push(ReportRow::new("distance_exact", (exact - limit_exact).norm()).at(n));
        report.push(
            ReportRow::new("discrete_cf_error", (acc.discrete.mean() - exact).norm())
                .at(n)
                .se(acc.discrete.std_error())
                .pass((acc.discrete.mean() - exact).norm() <= 4.0 * acc.discrete.std_error()),
        );
        report.push(
            ReportRow::new("limit_cf_error", (acc.limit.mean() - limit_exact).norm())
                .at(n)
                .se(acc.limit.std_error())
                .pass((acc.limit.mean() - limit_exact).norm() <= 4.0 * acc.limit.std_error()),
        );
    }
    report.fit_decay();
    let primary = report.primary_rows();
    let last = primary.last().unwrap();
    let close = last.estimate < tolerance + 3.0 * last.std_error;
    let dists: Vec<f64> = primary.iter().map(|r| r.estimate).collect();
    let decreasing = zero || strictly_decreasing(&dists);
    report.pass = close && decreasing;
    report.note(format!("limit CF (closed form) = {} {:+}i", limit_exact.re, limit_exact.im));
    report.criterion = format!("distance at the largest N < {tolerance} + 3 SE and strictly decreasing over the grid");
    Ok(report)
}

/// `Delta^{(N)}_j = |psi_j(alpha)^n - phi_{j,s,t}(alpha)|` with `n` the number
/// of steps between `s^{(N)}` and `t^{(N)}`, where the law of the sum of `n`
/// log-returns is known exactly. Reports `sup_j Delta / gamma_N` per `N`,
/// the fitted constant (its maximum) and the band (max / min).
#[allow(clippy::too_many_arguments)]
pub fn cf_rate_check(
    params: &RegimeParams,
    kind: FamilyKind,
    horizon: f64,
    s: f64,
    t: f64,
    alphas: &[f64],
    n_grid: &[u64],
    band_limit: f64,
) -> Result<ConvergenceReport> {
    check_grid(n_grid)?;
    if !(0.0 <= s && s < t && t <= horizon) {
        return Err(LabError::invalid("s, t", "need 0 <= s < t <= T"));
    }
    if alphas.is_empty() {
        return Err(LabError::invalid("alphas", "need at least one alpha"));
    }
    let mut report = ConvergenceReport::new("cf_rate", "sup_delta", n_grid.to_vec());
    let mut ratios = Vec::new();
    for &n in n_grid {
        let grid = TimeGrid::new(horizon, n)?;
        let family = ReturnFamily::new(kind, params, &grid)?;
        let steps = grid.index(t) - grid.index(s);
        let mut sup: f64 = 0.0;
        for j in 0..params.dim() {
            for &a in alphas {
                let phi = Complex64::new(-0.5 * a * a * params.sigma(j).powi(2), a * params.log_drift(j)) * (t - s);
                let delta = (family.psi(j, a).powu(steps as u32) - phi.exp()).norm();
                sup = sup.max(delta);
            }
        }
        let ratio = sup / family.gamma();
        ratios.push(ratio);
        report.push(ReportRow::new("sup_delta", sup).at(n).oracle(0.0));
        report.push(ReportRow::new("delta_over_gamma", ratio).at(n));
    }
    report.fit_decay();
    let c = ratios.iter().copied().fold(0.0, f64::max);
    let lo = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    let band = if c == 0.0 { 1.0 } else { c / lo };
    let ok = band < band_limit;
    report.push(ReportRow::new("fitted_constant", c));
    report.push(ReportRow::new("band", band).bound(band_limit).pass(ok));
    report.pass = ok;
    report.criterion = format!("max / min of sup_j Delta / gamma_N over the grid < {band_limit}");
    Ok(report)
}

/// Tail estimates for one grid size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TightnessCell {
    #[serde(rename = "N")]
    pub n: u64,
    pub gamma: f64,
    /// `(c, P(sup_t |U_t - log x0| >= c))`, `c` ascending.
    pub c_tail: Vec<(f64, f64)>,
    /// `(delta, P(omega_delta(U) >= epsilon))`, `delta` ascending.
    pub modulus_tail: Vec<(f64, f64)>,
    /// `N log(1 + gamma_N)` and the fraction of paths whose sup reaches it.
    pub growth_threshold: f64,
    pub growth_threshold_tail: f64,
    /// `-N log(1 - gamma_N)`: no path can exceed it.
    pub path_bound: f64,
    pub max_sup: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TightnessReport {
    pub epsilon: f64,
    pub cells: Vec<TightnessCell>,
    pub monotone_in_c: bool,
    pub monotone_in_delta: bool,
    pub hard_bound_holds: bool,
    pub pass: bool,
}

impl TightnessReport {
    /// Flattened rows for CSV export.
    pub fn to_report(&self) -> ConvergenceReport {
        let mut r = ConvergenceReport::new("tightness", "c_tail", self.cells.iter().map(|c| c.n).collect());
        for cell in &self.cells {
            for &(c, p) in &cell.c_tail {
                r.push(ReportRow::new(format!("c_tail[c={c}]"), p).at(cell.n));
            }
            for &(d, p) in &cell.modulus_tail {
                r.push(ReportRow::new(format!("modulus_tail[delta={d}]"), p).at(cell.n));
            }
            r.push(ReportRow::new("growth_threshold_tail", cell.growth_threshold_tail).at(cell.n).oracle(0.0));
            r.push(ReportRow::new("max_sup", cell.max_sup).at(cell.n).bound(cell.path_bound).pass(cell.max_sup <= cell.path_bound));
        }
        r.pass = self.pass;
        r.criterion = "tails monotone in c and delta on shared samples; no path reaches N log(1 + gamma_N)".into();
        r
    }
}

#[derive(Default)]
struct TightAcc {
    trials: u64,
    c_hits: Vec<u64>,
    m_hits: Vec<u64>,
    growth_hits: u64,
    max_sup: f64,
}

impl Accumulator for TightAcc {
    fn merge(&mut self, other: Self) {
        self.trials += other.trials;
        for (mine, theirs) in [(&mut self.c_hits, other.c_hits), (&mut self.m_hits, other.m_hits)] {
            if mine.len() < theirs.len() {
                mine.resize(theirs.len(), 0);
            }
            mine.iter_mut().zip(theirs).for_each(|(a, b)| *a += b);
        }
        self.growth_hits += other.growth_hits;
        self.max_sup = self.max_sup.max(other.max_sup);
    }
}

/// Largest `max - min` of `u` over windows of `lag + 1` consecutive indices.
pub(crate) fn window_range(u: &[f64], lag: usize) -> f64 {
    use std::collections::VecDeque;
    if lag + 1 >= u.len() {
        let hi = u.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lo = u.iter().copied().fold(f64::INFINITY, f64::min);
        return hi - lo;
    }
    let mut maxq: VecDeque<usize> = VecDeque::new();
    let mut minq: VecDeque<usize> = VecDeque::new();
    let mut best: f64 = 0.0;
    for (i, &x) in u.iter().enumerate() {
        while maxq.back().is_some_and(|&j| u[j] <= x) {
            maxq.pop_back();
        }
        maxq.push_back(i);
        while minq.back().is_some_and(|&j| u[j] >= x) {
            minq.pop_back();
        }
        minq.push_back(i);
        if maxq[0] + lag < i {
            maxq.pop_front();
        }
        if minq[0] + lag < i {
            minq.pop_front();
        }
        if i >= lag {
            best = best.max(u[maxq[0]] - u[minq[0]]);
        }
    }
    best
}

/// Index lag reachable by `|t - s| < delta` for the piecewise-constant path.
fn modulus_lag(delta: f64, grid: &TimeGrid) -> usize {
    let x = delta / grid.step();
    let r = x.round();
    let cells = if (x - r).abs() <= 1e-9 * r.max(1.0) { r } else { x.ceil() };
    cells.min(grid.steps() as f64) as usize
}

/// Sup and modulus-of-continuity tails of `U^{(N)}` on full sampled paths.
#[allow(clippy::too_many_arguments)]
pub fn tightness_diagnostics(
    g: &GeneratorMatrix,
    params: &RegimeParams,
    kind: FamilyKind,
    horizon: f64,
    n_grid: &[u64],
    c_grid: &[f64],
    delta_grid: &[f64],
    epsilon: f64,
    mc: &MonteCarlo,
    convention: StateConvention,
    tol: f64,
) -> Result<TightnessReport> {
    check_grid(n_grid)?;
    if c_grid.is_empty() || delta_grid.is_empty() {
        return Err(LabError::invalid("grids", "c and delta grids must be non-empty"));
    }
    if mc.trials == 0 {
        return Err(LabError::invalid("trials", "must be positive"));
    }
    let mut cs = c_grid.to_vec();
    cs.sort_by(f64::total_cmp);
    let mut deltas = delta_grid.to_vec();
    deltas.sort_by(f64::total_cmp);

    let mut cells = Vec::new();
    let (mut mono_c, mut mono_d, mut hard) = (true, true, true);
    for &n in n_grid {
        let grid = TimeGrid::new(horizon, n)?;
        let family = ReturnFamily::new(kind, params, &grid)?;
        let gamma = family.gamma();
        let growth_threshold = n as f64 * gamma.ln_1p();
        let path_bound = -(n as f64) * (-gamma).ln_1p();
        let scheme = DiscreteScheme::new(g, family, convention, tol)?;
        let lags: Vec<usize> = deltas.iter().map(|&d| modulus_lag(d, &grid)).collect();
        let streams = TrialStreams::new(mc.derive_index("tightness", n).seed);
        let acc: TightAcc = fold_trials(mc.trials, mc.execution, |i, acc: &mut TightAcc| {
            if acc.c_hits.is_empty() {
                acc.c_hits = vec![0; cs.len()];
                acc.m_hits = vec![0; lags.len()];
            }
            let path = scheme.path_with(&mut streams.trial(i));
            let u0 = path.u_values[0];
            let sup = path.u_values.iter().map(|u| (u - u0).abs()).fold(0.0, f64::max);
            acc.trials += 1;
            acc.max_sup = acc.max_sup.max(sup);
            for (h, &c) in acc.c_hits.iter_mut().zip(&cs) {
                *h += u64::from(sup >= c);
            }
            for (h, &lag) in acc.m_hits.iter_mut().zip(&lags) {
                *h += u64::from(window_range(&path.u_values, lag) >= epsilon);
            }
            acc.growth_hits += u64::from(sup >= growth_threshold);
        });
        let total = acc.trials as f64;
        let c_tail: Vec<(f64, f64)> = cs.iter().zip(&acc.c_hits).map(|(&c, &h)| (c, h as f64 / total)).collect();
        let modulus_tail: Vec<(f64, f64)> = deltas.iter().zip(&acc.m_hits).map(|(&d, &h)| (d, h as f64 / total)).collect();
        mono_c &= c_tail.windows(2).all(|w| w[1].1 <= w[0].1);
        mono_d &= modulus_tail.windows(2).all(|w| w[1].1 >= w[0].1);
        hard &= acc.growth_hits == 0 && acc.max_sup <= path_bound;
        cells.push(TightnessCell {
            n,
            gamma,
            c_tail,
            modulus_tail,
            growth_threshold,
            growth_threshold_tail: acc.growth_hits as f64 / total,
            path_bound,
            max_sup: acc.max_sup,
        });
    }
    Ok(TightnessReport {
        epsilon,
        cells,
        monotone_in_c: mono_c,
        monotone_in_delta: mono_d,
        hard_bound_holds: hard,
        pass: mono_c && mono_d && hard,
    })
}

/// Discrete call prices `E (X^{(N)}_N - K)^+` against the limit price.
#[allow(clippy::too_many_arguments)]
pub fn price_convergence(
    g: &GeneratorMatrix,
    params: &RegimeParams,
    kind: FamilyKind,
    strike: f64,
    horizon: f64,
    n_grid: &[u64],
    mc: &MonteCarlo,
    convention: StateConvention,
    tol: f64,
    tolerance: f64,
) -> Result<ConvergenceReport> {
    check_grid(n_grid)?;
    let limit = price_european_call(g, params, strike, horizon, &mc.derive("price_limit"))?;
    let mut report = ConvergenceReport::new("price", "price", n_grid.to_vec());
    report.push(ReportRow::new("limit_price", limit.price).se(limit.std_error));
    let x0 = params.x0();
    for &n in n_grid {
        let grid = TimeGrid::new(horizon, n)?;
        let family = ReturnFamily::new(kind, params, &grid)?;
        let scheme = DiscreteScheme::new(g, family, convention, tol)?;
        let streams = TrialStreams::new(mc.derive_index("price", n).seed);
        let acc: Moments = fold_trials(mc.trials, mc.execution, |i, acc: &mut Moments| {
            let u = scheme.terminal_log_return(&mut streams.trial(i));
            acc.push((x0 * u.exp() - strike).max(0.0));
        });
        let se = acc.std_error().hypot(limit.std_error);
        report.push(ReportRow::new("price", acc.mean).at(n).se(se).oracle(limit.price));
    }
    report.fit_decay();
    let last = *report.primary_rows().last().unwrap();
    report.pass = last.error.unwrap() <= tolerance + 3.0 * last.std_error;
    report.criterion = format!("|discrete - limit| at the largest N <= {tolerance} + 3 SE");
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeedSpec;

    fn two_state() -> GeneratorMatrix {
        GeneratorMatrix::symmetric(2, 1.0).unwrap()
    }

    #[test]
    fn fdd_oracles() {
        let g = two_state();
        let p = fdd_oracle(&g, &[0.5], &[0], 1e-12).unwrap();
        assert!((p - (1.0 + (-1.0f64).exp()) / 2.0).abs() < 1e-12);
        assert!((p - 0.68394).abs() < 1e-5);
        let p = fdd_oracle(&g, &[0.25, 0.75], &[0, 1], 1e-12).unwrap();
        let expected = (1.0 + (-0.5f64).exp()) / 2.0 * (1.0 - (-1.0f64).exp()) / 2.0;
        assert!((p - expected).abs() < 1e-12);
        assert_eq!(fdd_oracle(&g, &[0.0], &[0], 1e-12).unwrap(), 1.0);
    }

    #[test]
    fn fdd_at_time_zero_is_certain() {
        let r = fdd_compare(&two_state(), 1.0, &[0.0], &[0], &[16, 32], &MonteCarlo::new(2000, SeedSpec::new(1)), 1e-12, 0.01).unwrap();
        assert!(r.rows.iter().all(|row| row.estimate == 1.0 && row.error == Some(0.0)));
    }

    #[test]
    fn skeleton_matches_path() {
        let path = CtmcPath::new(vec![0.0, 0.33, 0.71], vec![0, 1, 0], 1.0).unwrap();
        let grid = TimeGrid::new(1.0, 10).unwrap();
        let runs = skeleton_runs(&path, &grid);
        assert_eq!(runs, vec![Run { state: 0, start: 0, end: 4 }, Run { state: 1, start: 4, end: 8 }, Run { state: 0, start: 8, end: 11 }]);
        for k in 0..=10u64 {
            let t = k as f64 / 10.0;
            assert_eq!(state_at(&runs, k), crate::ctmc::evaluate_path(&path, t).unwrap());
        }
    }

    #[test]
    fn window_range_brute_force() {
        let u: Vec<f64> = (0..40).map(|i| ((i * 37 % 11) as f64 - 5.0) * 0.1).collect();
        for lag in 0..45 {
            let mut best: f64 = 0.0;
            for i in 0..u.len() {
                for j in i..u.len().min(i + lag + 1) {
                    best = best.max((u[i] - u[j]).abs());
                }
            }
            assert!((window_range(&u, lag) - best).abs() < 1e-15, "lag {lag}");
        }
    }

    #[test]
    fn modulus_lag_snaps() {
        let grid = TimeGrid::new(1.0, 1024).unwrap();
        assert_eq!(modulus_lag(1.0 / 64.0, &grid), 16);
        assert_eq!(modulus_lag(0.0151, &grid), 16);
        assert_eq!(modulus_lag(2.0, &grid), 1024);
    }

    #[test]
    fn cf_distance_zero_alpha_is_exact() {
        let params = RegimeParams::new(vec![0.0, 0.05], vec![0.1, 0.3], 100.0).unwrap();
        let spec = CfSpec::new(vec![0.0], vec![1.0]).unwrap();
        let mc = MonteCarlo::new(10_000, SeedSpec::new(1));
        let r = cf_convergence(
            &two_state(),
            &params,
            FamilyKind::Binomial,
            &spec,
            1.0,
            &[16, 32],
            &mc,
            StateConvention::EndOfStep,
            1e-12,
            0.03,
        )
        .unwrap();
        assert!(r.primary_rows().iter().all(|row| row.estimate == 0.0));
        assert!(r.rows_for("distance_exact").iter().all(|row| row.estimate < 1e-10));
    }

    #[test]
    fn rate_check_degenerate_closed_form() {
        let params = RegimeParams::degenerate(vec![0.05, 0.05], vec![0.0, 0.0], 1.0).unwrap();
        let r = cf_rate_check(&params, FamilyKind::Binomial, 1.0, 0.0, 1.0, &[1.0], &[64, 256, 1024], 4.0).unwrap();
        for row in r.primary_rows() {
            let n = row.n.unwrap() as f64;
            let expected = (Complex64::new(0.0, n * (0.05 / n).ln_1p()).exp() - Complex64::new(0.0, 0.05).exp()).norm();
            assert!((row.estimate - expected).abs() < 1e-15);
        }
        let zero = cf_rate_check(&params, FamilyKind::Binomial, 1.0, 0.0, 1.0, &[0.0], &[64, 256], 4.0).unwrap();
        assert!(zero.primary_rows().iter().all(|row| row.estimate == 0.0));
        assert!(zero.pass);
    }

    #[test]
    fn degenerate_price_gap() {
        let params = RegimeParams::degenerate(vec![0.05, 0.05], vec![0.0, 0.0], 100.0).unwrap();
        let mc = MonteCarlo::new(1000, SeedSpec::new(2));
        let r = price_convergence(
            &two_state(),
            &params,
            FamilyKind::Binomial,
            90.0,
            1.0,
            &[64, 256, 1024],
            &mc,
            StateConvention::EndOfStep,
            1e-12,
            0.01,
        )
        .unwrap();
        for row in r.primary_rows() {
            let n = row.n.unwrap() as f64;
            let expected = 100.0 * (n * (0.05 / n).ln_1p()).exp() - 90.0;
            assert!((row.estimate - expected).abs() < 1e-10);
            let gap = 100.0 * 0.05f64.powi(2) / (2.0 * n) * 0.05f64.exp();
            assert!((row.error.unwrap() - gap).abs() < 0.01 * gap);
        }
        assert!((r.decay_order.unwrap() - 1.0).abs() < 0.02);
    }
}
