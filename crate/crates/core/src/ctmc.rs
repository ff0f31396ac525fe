//! Exact simulation of the continuous-time switching chain, its jump-count
//! moment generating function, and the law of its first jump times.

use rand::Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use crate::discrete::DiscreteChain;
use crate::error::{LabError, Result};
use crate::markov::{discrete_transition_matrix, GeneratorMatrix, MatrixVariant, TimeGrid};
use crate::par::{fold_trials, Moments, MonteCarlo};
use crate::report::{ConvergenceReport, ReportRow};
use crate::rng::{LabRng, SeedSpec, TrialStreams};

pub const MIN_TRIALS: u64 = 10_000;

/// One trajectory of the chain on `[0, T]`: jump times `tau_0 = 0 < tau_1 < ...`
/// and the states entered at those times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CtmcPath {
    jump_times: Vec<f64>,
    states: Vec<usize>,
    horizon: f64,
}

impl CtmcPath {
    /// Builds a path from explicit jump times (starting at 0) and states.
    pub fn new(jump_times: Vec<f64>, states: Vec<usize>, horizon: f64) -> Result<Self> {
        if jump_times.is_empty() || jump_times.len() != states.len() {
            return Err(LabError::invalid("path", "need one state per jump time, starting at time 0"));
        }
        if jump_times[0] != 0.0 {
            return Err(LabError::invalid("path", "first jump time must be 0"));
        }
        if jump_times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(LabError::invalid("path", "jump times must be strictly increasing"));
        }
        if *jump_times.last().unwrap() > horizon {
            return Err(LabError::OutOfHorizon { t: *jump_times.last().unwrap(), horizon });
        }
        if states.windows(2).any(|w| w[0] == w[1]) {
            return Err(LabError::invalid("path", "consecutive states must differ"));
        }
        Ok(Self { jump_times, states, horizon })
    }

    pub fn jump_times(&self) -> &[f64] {
        &self.jump_times
    }

    pub fn states(&self) -> &[usize] {
        &self.states
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// `N_T`.
    pub fn jump_count(&self) -> usize {
        self.jump_times.len() - 1
    }

    /// `theta_k = tau_k - tau_{k-1}` for `k = 1..=N_T`.
    pub fn occupation_times(&self) -> Vec<f64> {
        self.jump_times.windows(2).map(|w| w[1] - w[0]).collect()
    }

    /// `(state, start, end)` pieces covering `[0, T]`; the last ends at `T`.
    pub fn segments(&self) -> impl Iterator<Item = (usize, f64, f64)> + '_ {
        let n = self.states.len();
        (0..n).map(move |k| {
            let end = if k + 1 < n { self.jump_times[k + 1] } else { self.horizon };
            (self.states[k], self.jump_times[k], end)
        })
    }

    /// Time spent in each of `d` states over `[0, T]`.
    pub fn occupation_by_state(&self, d: usize) -> Vec<f64> {
        let mut occ = vec![0.0; d];
        for (s, a, b) in self.segments() {
            occ[s] += b - a;
        }
        occ
    }
}

/// `Y_t`: the state of the right-continuous path at time `t`.
pub fn evaluate_path(path: &CtmcPath, t: f64) -> Result<usize> {
    if !(0.0..=path.horizon).contains(&t) {
        return Err(LabError::OutOfHorizon { t, horizon: path.horizon });
    }
    let k = path.jump_times.partition_point(|&tau| tau <= t);
    Ok(path.states[k - 1])
}

pub(crate) fn sample_path_with(g: &GeneratorMatrix, horizon: f64, y0: usize, rng: &mut LabRng) -> CtmcPath {
    let mut jump_times = vec![0.0];
    let mut states = vec![y0];
    let mut t = 0.0;
    let mut state = y0;
    loop {
        let hold: f64 = rng.sample::<f64, _>(Exp1) / g.exit_rate(state);
        t += hold;
        if t >= horizon {
            break;
        }
        state = g.jump_target(state, rng.random());
        jump_times.push(t);
        states.push(state);
    }
    CtmcPath { jump_times, states, horizon }
}

/// Jump count `N_T` without storing the path.
pub(crate) fn count_jumps_with(g: &GeneratorMatrix, horizon: f64, y0: usize, rng: &mut LabRng) -> u64 {
    let mut t = 0.0;
    let mut state = y0;
    let mut n = 0;
    loop {
        t += rng.sample::<f64, _>(Exp1) / g.exit_rate(state);
        if t >= horizon {
            return n;
        }
        state = g.jump_target(state, rng.random());
        n += 1;
    }
}

/// Exponential holding times, embedded-chain destinations, cut at `horizon`.
pub fn sample_ctmc_path(g: &GeneratorMatrix, horizon: f64, y0: usize, seed: SeedSpec) -> Result<CtmcPath> {
    g.check_state(y0)?;
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(LabError::invalid("T", "horizon must be positive"));
    }
    Ok(sample_path_with(g, horizon, y0, &mut seed.rng()))
}

pub(crate) fn check_trials(trials: u64) -> Result<()> {
    if trials < MIN_TRIALS {
        return Err(LabError::invalid("trials", format!("at least {MIN_TRIALS} trials are required, got {trials}")));
    }
    Ok(())
}

/// `e^{-lambda_* T} + Lambda exp(alpha + e^alpha lambda^* T)`.
pub fn jump_count_mgf_bound(g: &GeneratorMatrix, horizon: f64, alpha: f64) -> f64 {
    (-g.lambda_min() * horizon).exp() + g.rate_ratio() * (alpha + alpha.exp() * g.lambda_max() * horizon).exp()
}

/// Monte Carlo `E exp(alpha N_T)` from state 0 against the bound above.
/// When every exit rate equals `lambda`, `N_T` is Poisson(`lambda T`) and the
/// rows also carry the oracle `exp(lambda T (e^alpha - 1))`.
pub fn jump_count_mgf_check(g: &GeneratorMatrix, horizon: f64, alphas: &[f64], mc: &MonteCarlo) -> Result<ConvergenceReport> {
    check_trials(mc.trials)?;
    if alphas.is_empty() || alphas.iter().any(|&a| !(a > 0.0 && a.is_finite())) {
        return Err(LabError::invalid("alphas", "need at least one positive alpha"));
    }
    let streams = TrialStreams::new(mc.seed);
    let acc: Vec<Moments> = fold_trials(mc.trials, mc.execution, |i, acc: &mut Vec<Moments>| {
        if acc.is_empty() {
            acc.resize(alphas.len(), Moments::default());
        }
        let n = count_jumps_with(g, horizon, 0, &mut streams.trial(i)) as f64;
        for (m, &a) in acc.iter_mut().zip(alphas) {
            m.push((a * n).exp());
        }
    });

    let constant = g.lambda_min() == g.lambda_max();
    let mut report = ConvergenceReport::new("jump_count_mgf", "mgf", Vec::new());
    let mut pass = true;
    for (m, &a) in acc.iter().zip(alphas) {
        let bound = jump_count_mgf_bound(g, horizon, a);
        let below = m.mean - 3.0 * m.std_error() <= bound;
        let mut row = ReportRow::new(format!("mgf[alpha={a}]"), m.mean).se(m.std_error()).bound(bound);
        let mut ok = below;
        if constant {
            let oracle = (g.lambda_max() * horizon * a.exp_m1()).exp();
            row = row.oracle(oracle);
            ok &= (m.mean - oracle).abs() <= 3.0 * m.std_error();
        }
        pass &= ok;
        report.push(row.pass(ok));
    }
    report.pass = pass;
    report.criterion = if constant {
        "estimate - 3 SE <= bound, and |estimate - Poisson oracle| <= 3 SE".into()
    } else {
        "estimate - 3 SE <= bound".into()
    };
    Ok(report)
}

/// `g_m(t_1, ..., t_m)`: density of the first `m` jump times on the event of
/// exactly `m` jumps in `[0, T]`, from state 0, summed over state sequences.
pub fn jump_density(g: &GeneratorMatrix, horizon: f64, t_points: &[f64]) -> Result<f64> {
    let m = t_points.len();
    if !(1..=2).contains(&m) {
        return Err(LabError::UnsupportedOrder(m));
    }
    let mut bounds = vec![0.0];
    bounds.extend_from_slice(t_points);
    bounds.push(horizon);
    if bounds.windows(2).any(|w| w[1] <= w[0]) {
        return Err(LabError::BadTimePoint { t: t_points[0] });
    }
    let d = g.dim();
    let mut total = 0.0;
    let mut seq = vec![0usize; m + 1];
    for code in 0..d.pow(m as u32) {
        let mut c = code;
        for s in seq.iter_mut().skip(1) {
            *s = c % d;
            c /= d;
        }
        let mut weight = 1.0;
        let mut exponent = 0.0;
        for i in 0..=m {
            if i < m {
                weight *= g.rate(seq[i], seq[i + 1]);
            }
            exponent += g.exit_rate(seq[i]) * (bounds[i + 1] - bounds[i]);
        }
        total += weight * (-exponent).exp();
    }
    Ok(total)
}

/// Grid indices `k_{t_i,N}` for the jump-law comparison. Each must be an
/// interior cell (not the first or last) and strictly increasing.
pub fn jump_law_cells(grid: &TimeGrid, t_points: &[f64]) -> Result<Vec<u64>> {
    let m = t_points.len();
    if !(1..=2).contains(&m) {
        return Err(LabError::UnsupportedOrder(m));
    }
    let n = grid.steps();
    let mut prev = 0;
    let mut cells = Vec::with_capacity(m);
    for &t in t_points {
        let k = grid.index(t);
        if t.is_nan() || t <= 0.0 || k == 0 || k + 1 >= n || k <= prev {
            return Err(LabError::BadTimePoint { t });
        }
        prev = k;
        cells.push(k);
    }
    Ok(cells)
}

/// Exact `p_N(k_1, ..., k_m)` for a discrete chain with one-step matrix
/// `p`, started in state 0: sum over destination sequences of
/// `prod s_j^{gap-1} p_{j_i j_{i+1}}` times `s_{j_m}^{N - k_m}`.
pub fn discrete_jump_law_exact(p: &crate::linalg::Matrix, steps: u64, cells: &[u64]) -> f64 {
    let d = p.dim();
    let m = cells.len();
    let mut seq = vec![0usize; m + 1];
    let mut total = 0.0;
    for code in 0..d.pow(m as u32) {
        let mut c = code;
        for s in seq.iter_mut().skip(1) {
            *s = c % d;
            c /= d;
        }
        if seq.windows(2).any(|w| w[0] == w[1]) {
            continue;
        }
        let mut w = 1.0;
        let mut last = 0;
        for i in 0..m {
            let stay = p[(seq[i], seq[i])];
            w *= stay.powi((cells[i] - last - 1) as i32) * p[(seq[i], seq[i + 1])];
            last = cells[i];
        }
        w *= p[(seq[m], seq[m])].powi((steps - last) as i32);
        total += w;
    }
    total
}

/// Scaled first-jump law of the discrete chain at one grid size against the
/// density `g_m`. Rows (all at `N`):
///
/// * `scaled_conditional`: `(N/T)^m p_N` estimated by drawing the jump
///   destinations of the discrete chain and averaging the conditional
///   probability of the jump epochs given those destinations;
/// * `scaled_indicator`: the same quantity from the plain event indicator;
/// * `scaled_exact`, `scaled_exact_paper_diagonal`: deterministic sums with
///   the row-stochastic and the `exp(-lambda_i T/N)`-diagonal matrices;
/// * `scaled_m_plus_1`: `(N/T)^{m+1} p_N` (exact), which grows like `N`.
pub fn jump_law_compare(g: &GeneratorMatrix, grid: &TimeGrid, t_points: &[f64], mc: &MonteCarlo, tol: f64) -> Result<ConvergenceReport> {
    check_trials(mc.trials)?;
    let cells = jump_law_cells(grid, t_points)?;
    let m = cells.len();
    let n = grid.steps();
    let oracle = jump_density(g, grid.horizon(), t_points)?;
    let chain = DiscreteChain::new(g, grid, tol)?;
    let paper = discrete_transition_matrix(g, grid, MatrixVariant::PaperDiagonal, tol)?;
    let scale = (n as f64 / grid.horizon()).powi(m as i32);

    let streams = TrialStreams::new(mc.seed);
    let (cond, ind): (Moments, Moments) = fold_trials(mc.trials, mc.execution, |i, acc: &mut (Moments, Moments)| {
        let mut rng = streams.trial(i);
        // Destinations of the first m jumps; the epochs are integrated out.
        let mut state = 0;
        let mut last = 0;
        let mut w = 1.0;
        for &k in &cells {
            let next = chain.jump_target(state, rng.random());
            w *= chain.stay(state).powi((k - last - 1) as i32) * chain.leave(state);
            state = next;
            last = k;
        }
        w *= chain.stay(state).powi((n - last) as i32);
        acc.0.push(w);

        let runs = chain.runs(&mut rng);
        let hit = runs.len() == m + 1 && runs.iter().skip(1).zip(&cells).all(|(r, &k)| r.start == k);
        acc.1.push(if hit { 1.0 } else { 0.0 });
    });

    let exact = discrete_jump_law_exact(chain.matrix(), n, &cells);
    let exact_paper = discrete_jump_law_exact(&paper.matrix, n, &cells);
    let mut report = ConvergenceReport::new("jump_law", "scaled_conditional", vec![n]);
    report.push(ReportRow::new("scaled_conditional", scale * cond.mean).at(n).se(scale * cond.std_error()).oracle(oracle));
    report.push(ReportRow::new("scaled_indicator", scale * ind.mean).at(n).se(scale * ind.std_error()).oracle(oracle));
    report.push(ReportRow::new("scaled_exact", scale * exact).at(n).oracle(oracle));
    report.push(ReportRow::new("scaled_exact_paper_diagonal", scale * exact_paper).at(n).oracle(oracle));
    report.push(ReportRow::new("scaled_m_plus_1", scale * exact * n as f64 / grid.horizon()).at(n).oracle(oracle));
    report.note(format!("g_{m} oracle = {oracle}"));
    Ok(report)
}
