//! The N-step market: the switching chain on the grid, net-profit-rate
//! families, and the discrete log price.
//!
//! Chains are sampled run by run: a stay of `L` further steps in state `i`
//! has `P(L >= l) = p_ii^l`, so one geometric draw replaces `L` Bernoulli
//! trials. Sums of returns over a run are drawn from their multinomial atom
//! counts, which is exact in law and costs a few binomial draws per run.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::ctmc::check_trials;
use crate::error::{LabError, Result};
use crate::limit::{CfEstimate, CfSpec};
use crate::linalg::Matrix;
use crate::markov::{discrete_transition_matrix, pick_off_diagonal, GeneratorMatrix, MatrixVariant, RegimeParams, TimeGrid, DEFAULT_TOL};
use crate::par::{fold_trials, ComplexMoments, MonteCarlo};
use crate::report::{decay_order, ConvergenceReport, ReportRow};
use crate::rng::{LabRng, SeedSpec, TrialStreams};

/// Skeleton chain `Y^{(N)}` on the grid, always started in state 0.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteChain {
    matrix: Matrix,
    leave: Vec<f64>,
    log_stay: Vec<f64>,
    steps: u64,
}

/// Maximal stretch `[start, end)` of chain indices spent in one state.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Run {
    pub state: usize,
    pub start: u64,
    pub end: u64,
}

impl DiscreteChain {
    /// Uses the row-stochastic one-step matrix.
    pub fn new(g: &GeneratorMatrix, grid: &TimeGrid, tol: f64) -> Result<Self> {
        let dt = discrete_transition_matrix(g, grid, MatrixVariant::RowStochastic, tol)?;
        Ok(Self::from_matrix(dt.matrix, grid.steps()))
    }

    pub fn from_matrix(matrix: Matrix, steps: u64) -> Self {
        let d = matrix.dim();
        let leave: Vec<f64> = (0..d).map(|i| (0..d).filter(|&j| j != i).map(|j| matrix[(i, j)]).sum()).collect();
        let log_stay = leave.iter().map(|&q| (-q).ln_1p()).collect();
        Self { matrix, leave, log_stay, steps }
    }

    pub fn matrix(&self) -> &Matrix {
        &self.matrix
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn dim(&self) -> usize {
        self.leave.len()
    }

    pub fn stay(&self, i: usize) -> f64 {
        self.matrix[(i, i)]
    }

    /// Probability of leaving `i` in one step.
    pub fn leave(&self, i: usize) -> f64 {
        self.leave[i]
    }

    /// Destination of a switch out of `i`, drawn proportionally to `P_ij`.
    pub(crate) fn jump_target(&self, i: usize, u: f64) -> usize {
        pick_off_diagonal(self.matrix.row(i), i, u * self.leave[i])
    }

    /// Further steps spent in `i` before the next switch (possibly beyond `N`).
    fn extra_stay(&self, i: usize, rng: &mut LabRng) -> u64 {
        if self.leave[i] <= 0.0 {
            return u64::MAX;
        }
        let u = 1.0 - rng.random::<f64>();
        let l = (u.ln() / self.log_stay[i]).floor();
        if l >= self.steps as f64 {
            u64::MAX
        } else {
            l as u64
        }
    }

    /// Runs covering indices `0..=N`.
    pub(crate) fn runs(&self, rng: &mut LabRng) -> Vec<Run> {
        let mut runs = Vec::with_capacity(4);
        let mut state = 0;
        let mut start = 0u64;
        let last = self.steps;
        loop {
            let extra = self.extra_stay(state, rng);
            let next_jump = start.saturating_add(extra).saturating_add(1);
            if next_jump > last {
                runs.push(Run { state, start, end: last + 1 });
                return runs;
            }
            runs.push(Run { state, start, end: next_jump });
            state = self.jump_target(state, rng.random());
            start = next_jump;
        }
    }
}

/// `Y^{(N)}_0..Y^{(N)}_N` with `Y^{(N)}_0 = 0`.
pub fn sample_discrete_chain(g: &GeneratorMatrix, grid: &TimeGrid, seed: SeedSpec) -> Result<Vec<usize>> {
    let chain = DiscreteChain::new(g, grid, DEFAULT_TOL)?;
    Ok(expand_runs(&chain.runs(&mut seed.rng())))
}

fn expand_runs(runs: &[Run]) -> Vec<usize> {
    runs.iter().flat_map(|r| std::iter::repeat_n(r.state, (r.end - r.start) as usize)).collect()
}

/// Which chain state prices step `k`: `Y_k` (end of the step) or `Y_{k-1}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum StateConvention {
    #[default]
    EndOfStep,
    StartOfStep,
}

/// Steps `[a, b)` (within `1..=N`) priced by the state of `run`.
pub(crate) fn run_steps(run: &Run, steps: u64, convention: StateConvention) -> (u64, u64) {
    match convention {
        StateConvention::EndOfStep => (run.start.max(1), run.end),
        StateConvention::StartOfStep => (run.start + 1, (run.end + 1).min(steps + 1)),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FamilyKind {
    /// `R = mu_j T/N + sigma_j sqrt(T/N) e`, `e = +-1` equiprobable.
    Binomial,
    /// `R = mu_j T/N + sigma_j sqrt(3T/(2N)) e`, `e` uniform on `{-1, 0, 1}`.
    Trinomial,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Atom {
    prob: f64,
    rate: f64,
    log_growth: f64,
}

/// Net-profit rates `R^{(N)}_{k,j}` for one grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnFamily {
    kind: FamilyKind,
    params: RegimeParams,
    grid: TimeGrid,
    gamma: f64,
    atoms: Vec<Vec<Atom>>,
}

impl ReturnFamily {
    pub fn new(kind: FamilyKind, params: &RegimeParams, grid: &TimeGrid) -> Result<Self> {
        let h = grid.step();
        let (spread, shocks): (f64, &[f64]) = match kind {
            FamilyKind::Binomial => (h.sqrt(), &[-1.0, 1.0]),
            FamilyKind::Trinomial => ((1.5 * h).sqrt(), &[-1.0, 0.0, 1.0]),
        };
        let gamma = params.mu_bound() * h + params.sigma_bound() * spread;
        if gamma >= 1.0 {
            return Err(LabError::GammaTooLarge { gamma });
        }
        let prob = 1.0 / shocks.len() as f64;
        let atoms = (0..params.dim())
            .map(|j| {
                shocks
                    .iter()
                    .map(|&e| {
                        let rate = params.mu(j) * h + params.sigma(j) * spread * e;
                        Atom { prob, rate, log_growth: rate.ln_1p() }
                    })
                    .collect()
            })
            .collect();
        Ok(Self { kind, params: params.clone(), grid: *grid, gamma, atoms })
    }

    pub fn kind(&self) -> FamilyKind {
        self.kind
    }

    pub fn params(&self) -> &RegimeParams {
        &self.params
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    /// `gamma_N = mu T/N + sigma * spread`, a bound on `|R|`.
    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// Support of `R^{(N)}_{., j}`.
    pub fn support(&self, j: usize) -> Vec<f64> {
        self.atoms[j].iter().map(|a| a.rate).collect()
    }

    pub fn mean(&self, j: usize) -> f64 {
        self.atoms[j].iter().map(|a| a.prob * a.rate).sum()
    }

    pub fn variance(&self, j: usize) -> f64 {
        let m = self.mean(j);
        self.atoms[j].iter().map(|a| a.prob * (a.rate - m).powi(2)).sum()
    }

    /// `E exp(i alpha log(1 + R_j))`, the one-step characteristic function.
    pub fn psi(&self, j: usize, alpha: f64) -> Complex64 {
        if alpha == 0.0 {
            return Complex64::new(1.0, 0.0);
        }
        self.atoms[j].iter().map(|a| Complex64::from_polar(a.prob, alpha * a.log_growth)).sum()
    }

    fn pick(&self, j: usize, u: f64) -> &Atom {
        let atoms = &self.atoms[j];
        let mut acc = 0.0;
        for a in atoms {
            acc += a.prob;
            if u < acc {
                return a;
            }
        }
        atoms.last().unwrap()
    }

    pub(crate) fn draw(&self, j: usize, rng: &mut LabRng) -> f64 {
        self.pick(j, rng.random()).rate
    }

    fn draw_log_growth(&self, j: usize, rng: &mut LabRng) -> f64 {
        self.pick(j, rng.random()).log_growth
    }

    /// `sum log(1 + R)` over `n` independent steps in state `j`, from the
    /// multinomial counts of the atoms.
    pub(crate) fn draw_log_sum(&self, j: usize, n: u64, rng: &mut LabRng) -> f64 {
        let atoms = &self.atoms[j];
        let mut left = n;
        let mut mass = 1.0;
        let mut sum = 0.0;
        for (idx, a) in atoms.iter().enumerate() {
            if left == 0 {
                break;
            }
            let c = if idx + 1 == atoms.len() {
                left
            } else {
                let p = (a.prob / mass).min(1.0);
                Binomial::new(left, p).expect("valid binomial").sample(rng)
            };
            sum += c as f64 * a.log_growth;
            left -= c;
            mass -= a.prob;
        }
        sum
    }
}

/// One draw of `R^{(N)}_{k,j}`. Each `(k, j)` has its own stream, so draws
/// are independent across steps, states, and the chain.
pub fn sample_returns(family: &ReturnFamily, j: usize, k: u64, seed: SeedSpec) -> f64 {
    let job = seed.derive_index("return", k);
    family.draw(j, &mut job.with_stream(j as u64).rng())
}

/// Gaps of the conditions on the returns over a grid of step counts:
/// `gamma_N`, the compounding gap `max_j |(1 + mu_j T/N)^N - e^{mu_j T}|`,
/// and for each checkpoint `t` the variance gap
/// `max_j |sum_{i <= k_{t,N}} Var R - sigma_j^2 t|` with its exact value
/// `sigma_j^2 (t - k_{t,N} T/N)`.
pub fn verify_conditions(
    kind: FamilyKind,
    params: &RegimeParams,
    horizon: f64,
    n_grid: &[u64],
    checkpoints: &[f64],
) -> Result<ConvergenceReport> {
    let mut report = ConvergenceReport::new(format!("conditions_{kind:?}").to_lowercase(), "compounding_gap", n_grid.to_vec());
    let mut gammas = Vec::new();
    let mut gaps = Vec::new();
    let mut variance_ok = true;
    for &n in n_grid {
        let grid = TimeGrid::new(horizon, n)?;
        let fam = ReturnFamily::new(kind, params, &grid)?;
        let h = grid.step();
        report.push(ReportRow::new("gamma", fam.gamma()).at(n).oracle(0.0));
        gammas.push((n as f64, fam.gamma()));

        let gap = (0..params.dim())
            .map(|j| {
                let mu = params.mu(j);
                ((mu * horizon).exp() * (n as f64 * (mu * h).ln_1p() - mu * horizon).exp_m1()).abs()
            })
            .fold(0.0, f64::max);
        report.push(ReportRow::new("compounding_gap", gap).at(n).oracle(0.0));
        gaps.push((n as f64, gap));

        for &t in checkpoints {
            let k = grid.index(t);
            let mut computed: f64 = 0.0;
            let mut analytic: f64 = 0.0;
            for j in 0..params.dim() {
                let s2 = params.sigma(j).powi(2);
                computed = computed.max((k as f64 * fam.variance(j) - s2 * t).abs());
                analytic = analytic.max(s2 * (t - grid.time_of(k)));
            }
            let bound = params.sigma_bound().powi(2) * h;
            let ok = (computed - analytic).abs() <= 1e-14 && analytic <= bound * (1.0 + 1e-12);
            variance_ok &= ok;
            report.push(ReportRow::new(format!("variance_gap[t={t}]"), computed).at(n).oracle(analytic).bound(bound).pass(ok));
        }
    }
    let gamma_order = decay_order(&gammas);
    let nonzero: Vec<(f64, f64)> = gaps.iter().copied().filter(|p| p.1 > 0.0).collect();
    let gap_order = decay_order(&nonzero);
    let gamma_ok = gammas.windows(2).all(|w| w[1].1 < w[0].1) && gamma_order.is_none_or(|o| (o - 0.5).abs() <= 0.1);
    let gap_ok = if nonzero.is_empty() {
        true
    } else {
        gaps.windows(2).all(|w| w[1].1 < w[0].1) && gap_order.is_none_or(|o| (o - 1.0).abs() <= 0.2)
    };
    if let Some(o) = gamma_order {
        report.push(ReportRow::new("gamma_order", o).oracle(0.5).pass(gamma_ok));
    }
    if let Some(o) = gap_order {
        report.push(ReportRow::new("compounding_order", o).oracle(1.0).pass(gap_ok));
    }
    report.decay_order = gap_order;
    report.pass = gamma_ok && gap_ok && variance_ok;
    report.criterion = "gamma_N strictly decreasing with order 0.5 +- 0.1; compounding gap decreasing with order 1 +- 0.2; \
                        variance gaps equal their floor-remainder values to 1e-14"
        .into();
    Ok(report)
}

/// Chain, returns and pricing convention of one discrete market.
#[derive(Debug, Clone)]
pub struct DiscreteScheme {
    chain: DiscreteChain,
    family: ReturnFamily,
    convention: StateConvention,
}

/// One realization of the discrete market.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscretePath {
    pub chain_states: Vec<usize>,
    pub u_values: Vec<f64>,
    pub grid: TimeGrid,
}

impl DiscretePath {
    /// `tau^{(N)}_n`: steps at which the chain switches.
    pub fn jump_times(&self) -> Vec<u64> {
        (1..self.chain_states.len()).filter(|&k| self.chain_states[k] != self.chain_states[k - 1]).map(|k| k as u64).collect()
    }

    /// `theta^{(N)}_k = tau^{(N)}_k - tau^{(N)}_{k-1}` with `tau^{(N)}_0 = 0`.
    pub fn occupation_times(&self) -> Vec<u64> {
        let mut prev = 0;
        self.jump_times()
            .into_iter()
            .map(|k| {
                let d = k - prev;
                prev = k;
                d
            })
            .collect()
    }

    /// `U^{(N)}_t = U^{(N)}_{k_{t,N}}`.
    pub fn value_at(&self, t: f64) -> Result<f64> {
        if !(0.0..=self.grid.horizon()).contains(&t) {
            return Err(LabError::OutOfHorizon { t, horizon: self.grid.horizon() });
        }
        Ok(self.u_values[self.grid.index(t) as usize])
    }
}

impl DiscreteScheme {
    pub fn new(g: &GeneratorMatrix, family: ReturnFamily, convention: StateConvention, tol: f64) -> Result<Self> {
        family.params().check_dim(g.dim())?;
        let chain = DiscreteChain::new(g, family.grid(), tol)?;
        Ok(Self { chain, family, convention })
    }

    pub fn chain(&self) -> &DiscreteChain {
        &self.chain
    }

    pub fn family(&self) -> &ReturnFamily {
        &self.family
    }

    pub fn grid(&self) -> &TimeGrid {
        self.family.grid()
    }

    pub fn convention(&self) -> StateConvention {
        self.convention
    }

    fn steps(&self) -> u64 {
        self.chain.steps
    }

    pub fn sample_path(&self, seed: SeedSpec) -> DiscretePath {
        self.path_with(&mut seed.rng())
    }

    /// Full path, one return per step.
    pub(crate) fn path_with(&self, rng: &mut LabRng) -> DiscretePath {
        let runs = self.chain.runs(rng);
        let n = self.steps();
        let mut u = vec![0.0; n as usize + 1];
        u[0] = self.family.params().x0().ln();
        let mut regime = vec![0usize; n as usize + 1];
        for r in &runs {
            let (a, b) = run_steps(r, n, self.convention);
            for k in a..b {
                regime[k as usize] = r.state;
            }
        }
        for k in 1..=n as usize {
            u[k] = u[k - 1] + self.family.draw_log_growth(regime[k], rng);
        }
        DiscretePath { chain_states: expand_runs(&runs), u_values: u, grid: *self.grid() }
    }

    /// `U^{(N)}_N - U^{(N)}_0`.
    pub(crate) fn terminal_log_return(&self, rng: &mut LabRng) -> f64 {
        let runs = self.chain.runs(rng);
        let n = self.steps();
        let mut sum = 0.0;
        for r in &runs {
            let (a, b) = run_steps(r, n, self.convention);
            if b > a {
                sum += self.family.draw_log_sum(r.state, b - a, rng);
            }
        }
        sum
    }

    /// Number of steps in each CF block priced by each state, for one chain.
    pub(crate) fn block_counts(&self, runs: &[Run], cuts: &[u64]) -> Vec<Vec<u64>> {
        let d = self.chain.dim();
        let n = self.steps();
        let mut counts = vec![vec![0u64; d]; cuts.len()];
        for r in runs {
            let (a, b) = run_steps(r, n, self.convention);
            let mut lo = 1u64;
            for (blk, &cut) in cuts.iter().enumerate() {
                let s = a.max(lo);
                let e = b.min(cut + 1);
                if e > s {
                    counts[blk][r.state] += e - s;
                }
                lo = cut + 1;
            }
        }
        counts
    }
}

/// Path of the discrete market with the end-of-step pricing state.
pub fn sample_discrete_path(g: &GeneratorMatrix, family: &ReturnFamily, seed: SeedSpec) -> Result<DiscretePath> {
    let scheme = DiscreteScheme::new(g, family.clone(), StateConvention::EndOfStep, DEFAULT_TOL)?;
    Ok(scheme.path_with(&mut seed.rng()))
}

/// How the discrete characteristic function is estimated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum CfEstimator {
    /// Average of `exp(i sum alpha_k (U_{t_k} - U_{t_{k-1}}))` over sampled paths.
    #[default]
    Sampled,
    /// Average over sampled chains of the conditional CF given the chain,
    /// `prod psi_j(alpha_k)^{n_kj}`.
    Conditional,
}

/// Grid indices `k_{t_k,N}` closing each block of the spec.
pub(crate) fn spec_cuts(spec: &CfSpec, grid: &TimeGrid) -> Result<Vec<u64>> {
    spec.check_horizon(grid.horizon())?;
    Ok(spec.times().iter().map(|&t| grid.index(t)).collect())
}

pub(crate) fn conditional_cf(family: &ReturnFamily, spec: &CfSpec, counts: &[Vec<u64>]) -> Complex64 {
    let mut z = Complex64::new(1.0, 0.0);
    for (blk, row) in counts.iter().enumerate() {
        let alpha = spec.alphas()[blk];
        if alpha == 0.0 {
            continue;
        }
        for (j, &c) in row.iter().enumerate() {
            if c > 0 {
                z *= family.psi(j, alpha).powu(c as u32);
            }
        }
    }
    z
}

/// Empirical characteristic function of the increments of `U^{(N)}` over the
/// spec's blocks (times mapped to the grid).
pub fn discrete_cf(scheme: &DiscreteScheme, spec: &CfSpec, mc: &MonteCarlo, estimator: CfEstimator) -> Result<CfEstimate> {
    check_trials(mc.trials)?;
    let cuts = spec_cuts(spec, scheme.grid())?;
    if spec.alphas().iter().all(|&a| a == 0.0) {
        return Ok(CfEstimate::exact(Complex64::new(1.0, 0.0)));
    }
    let streams = TrialStreams::new(mc.seed);
    let n = scheme.steps();
    let acc: ComplexMoments = fold_trials(mc.trials, mc.execution, |i, acc: &mut ComplexMoments| {
        let mut rng = streams.trial(i);
        let runs = scheme.chain.runs(&mut rng);
        let z = match estimator {
            CfEstimator::Conditional => conditional_cf(&scheme.family, spec, &scheme.block_counts(&runs, &cuts)),
            CfEstimator::Sampled => {
                let mut phase = 0.0;
                for r in &runs {
                    let (a, b) = run_steps(r, n, scheme.convention);
                    let mut lo = 1u64;
                    for (blk, &cut) in cuts.iter().enumerate() {
                        let s = a.max(lo);
                        let e = b.min(cut + 1);
                        let alpha = spec.alphas()[blk];
                        if e > s && alpha != 0.0 {
                            phase += alpha * scheme.family.draw_log_sum(r.state, e - s, &mut rng);
                        }
                        lo = cut + 1;
                    }
                }
                Complex64::from_polar(1.0, phase)
            }
        };
        acc.push(z);
    });
    Ok(CfEstimate::from_moments(&acc))
}

/// Exact discrete characteristic function by the forward recursion
/// `v <- (v P) diag(psi(alpha_k))` (end of step) or `v <- (v diag(psi)) P`.
pub fn discrete_cf_exact(scheme: &DiscreteScheme, spec: &CfSpec) -> Result<Complex64> {
    let cuts = spec_cuts(spec, scheme.grid())?;
    let d = scheme.chain.dim();
    let p = scheme.chain.matrix().to_complex();
    let mut v = vec![Complex64::new(0.0, 0.0); d];
    v[0] = Complex64::new(1.0, 0.0);
    let mut blk = 0;
    for step in 1..=scheme.steps() {
        while blk < cuts.len() && step > cuts[blk] {
            blk += 1;
        }
        let alpha = spec.alphas().get(blk).copied().unwrap_or(0.0);
        let psi: Vec<Complex64> = (0..d).map(|j| scheme.family.psi(j, alpha)).collect();
        match scheme.convention {
            StateConvention::EndOfStep => {
                v = p.left_mul(&v);
                v.iter_mut().zip(&psi).for_each(|(x, s)| *x *= s);
            }
            StateConvention::StartOfStep => {
                v.iter_mut().zip(&psi).for_each(|(x, s)| *x *= s);
                v = p.left_mul(&v);
            }
        }
    }
    Ok(v.iter().sum())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_state() -> GeneratorMatrix {
        GeneratorMatrix::symmetric(2, 1.0).unwrap()
    }

    #[test]
    fn binomial_support_and_gamma() {
        let params = RegimeParams::uniform(2, 0.05, 0.2, 100.0).unwrap();
        let grid = TimeGrid::new(1.0, 100).unwrap();
        let fam = ReturnFamily::new(FamilyKind::Binomial, &params, &grid).unwrap();
        let s = fam.support(0);
        assert!((s[0] + 0.0195).abs() < 1e-15 && (s[1] - 0.0205).abs() < 1e-15);
        assert!((fam.gamma() - 0.0205).abs() < 1e-15);
        assert!((fam.variance(0) - 0.0004).abs() < 1e-17);
        let tri = ReturnFamily::new(FamilyKind::Trinomial, &params, &grid).unwrap();
        assert!((tri.variance(0) - 0.0004).abs() < 1e-17);
        assert!((tri.mean(0) - 0.0005).abs() < 1e-17);
    }

    #[test]
    fn gamma_too_large() {
        let params = RegimeParams::uniform(2, 0.0, 2.0, 1.0).unwrap();
        let grid = TimeGrid::new(1.0, 2).unwrap();
        assert!(matches!(ReturnFamily::new(FamilyKind::Binomial, &params, &grid), Err(LabError::GammaTooLarge { .. })));
    }

    #[test]
    fn degenerate_returns_are_deterministic() {
        let params = RegimeParams::degenerate(vec![0.05, 0.05], vec![0.0, 0.0], 1.0).unwrap();
        let grid = TimeGrid::new(1.0, 100).unwrap();
        let fam = ReturnFamily::new(FamilyKind::Binomial, &params, &grid).unwrap();
        for k in 0..20 {
            assert_eq!(sample_returns(&fam, 0, k, SeedSpec::new(5)), 0.05 / 100.0);
        }
    }

    #[test]
    fn returns_respect_gamma() {
        let params = RegimeParams::new(vec![0.0, 0.05], vec![0.1, 0.3], 100.0).unwrap();
        let grid = TimeGrid::new(1.0, 64).unwrap();
        for kind in [FamilyKind::Binomial, FamilyKind::Trinomial] {
            let fam = ReturnFamily::new(kind, &params, &grid).unwrap();
            for k in 0..500 {
                for j in 0..2 {
                    assert!(sample_returns(&fam, j, k, SeedSpec::new(1)).abs() <= fam.gamma());
                }
            }
        }
    }

    #[test]
    fn tiny_rate_chain_is_constant() {
        let g = GeneratorMatrix::symmetric(2, 1e-9).unwrap();
        let grid = TimeGrid::new(1.0, 256).unwrap();
        let y = sample_discrete_chain(&g, &grid, SeedSpec::new(0)).unwrap();
        assert_eq!(y.len(), 257);
        assert!(y.iter().all(|&s| s == 0));
    }

    #[test]
    fn runs_partition_the_grid() {
        let g = GeneratorMatrix::from_flat(3, &[0.0, 20.0, 10.0, 10.0, 0.0, 10.0, 10.0, 30.0, 0.0], 1e-12, Default::default()).unwrap();
        let grid = TimeGrid::new(1.0, 50).unwrap();
        let chain = DiscreteChain::new(&g, &grid, 1e-12).unwrap();
        for s in 0..200 {
            let runs = chain.runs(&mut SeedSpec::new(8).with_stream(s).rng());
            assert_eq!(runs[0].start, 0);
            assert_eq!(runs.last().unwrap().end, 51);
            for w in runs.windows(2) {
                assert_eq!(w[0].end, w[1].start);
                assert_ne!(w[0].state, w[1].state);
                assert!(w[0].end > w[0].start);
            }
        }
    }

    #[test]
    fn geometric_runs_match_stepwise_marginal() {
        // P(Y_N = 0) for the 2-state chain is (1 + e^{-2})/2 at N = 256.
        let g = two_state();
        let grid = TimeGrid::new(1.0, 256).unwrap();
        let chain = DiscreteChain::new(&g, &grid, 1e-12).unwrap();
        let trials = 40_000u64;
        let hits = (0..trials).filter(|&s| chain.runs(&mut SeedSpec::new(3).with_stream(s).rng()).last().unwrap().state == 0).count();
        let p = hits as f64 / trials as f64;
        let oracle = (1.0 + (-2.0f64).exp()) / 2.0;
        let se = (oracle * (1.0 - oracle) / trials as f64).sqrt();
        assert!((p - oracle).abs() < 3.5 * se, "{p} vs {oracle}");
    }

    #[test]
    fn run_steps_conventions() {
        let r = Run { state: 1, start: 0, end: 4 };
        assert_eq!(run_steps(&r, 10, StateConvention::EndOfStep), (1, 4));
        assert_eq!(run_steps(&r, 10, StateConvention::StartOfStep), (1, 5));
        let r = Run { state: 1, start: 7, end: 11 };
        assert_eq!(run_steps(&r, 10, StateConvention::EndOfStep), (7, 11));
        assert_eq!(run_steps(&r, 10, StateConvention::StartOfStep), (8, 11));
    }

    #[test]
    fn path_accessor_and_zero_returns() {
        let params = RegimeParams::degenerate(vec![0.0, 0.0], vec![0.0, 0.0], 50.0).unwrap();
        let grid = TimeGrid::new(1.0, 10).unwrap();
        let fam = ReturnFamily::new(FamilyKind::Binomial, &params, &grid).unwrap();
        let p = sample_discrete_path(&two_state(), &fam, SeedSpec::new(2)).unwrap();
        assert!(p.u_values.iter().all(|&u| u == 50f64.ln()));

        let params = RegimeParams::new(vec![0.0, 0.05], vec![0.1, 0.3], 100.0).unwrap();
        let fam = ReturnFamily::new(FamilyKind::Binomial, &params, &grid).unwrap();
        let p = sample_discrete_path(&two_state(), &fam, SeedSpec::new(2)).unwrap();
        assert_eq!(p.value_at(0.35).unwrap(), p.u_values[3]);
        assert_eq!(p.value_at(1.0).unwrap(), p.u_values[10]);
        assert_eq!(p.chain_states.len(), 11);
        assert_eq!(p.occupation_times().iter().sum::<u64>(), p.jump_times().last().copied().unwrap_or(0));
        // Increments follow the end-of-step state.
        for k in 1..=10 {
            let r = (p.u_values[k] - p.u_values[k - 1]).exp_m1();
            assert!(fam.support(p.chain_states[k]).iter().any(|&x| (x - r).abs() < 1e-12));
        }
    }

    #[test]
    fn conditions_report() {
        let params = RegimeParams::new(vec![0.05, 0.05], vec![0.2, 0.2], 1.0).unwrap();
        for kind in [FamilyKind::Binomial, FamilyKind::Trinomial] {
            let r = verify_conditions(kind, &params, 1.0, &[64, 256, 1024, 4096], &[0.5, 1.0, 0.3]).unwrap();
            assert!(r.pass, "{}", r.to_json());
            let gap = verify_conditions(kind, &params, 1.0, &[100, 200, 400], &[1.0]).unwrap();
            let row = gap.rows_for("compounding_gap")[0];
            // e^{0.05} - 1.0005^100 to 30 digits.
            assert!((row.estimate - 1.31364279749312e-5).abs() < 1e-15);
            assert!(gap.rows_for("variance_gap[t=1]").iter().all(|r| r.estimate.abs() < 1e-16));
        }
        let r = verify_conditions(FamilyKind::Binomial, &params, 1.0, &[101, 202, 404], &[0.5]).unwrap();
        let row = r.rows_for("variance_gap[t=0.5]")[0];
        assert!((row.estimate - 0.04 * (0.5 - 50.0 / 101.0)).abs() < 1e-14);
    }

    #[test]
    fn exact_cf_single_regime() {
        let params = RegimeParams::uniform(2, 0.0, 1.0, 1.0).unwrap();
        let grid = TimeGrid::new(1.0, 1024).unwrap();
        let fam = ReturnFamily::new(FamilyKind::Binomial, &params, &grid).unwrap();
        let scheme = DiscreteScheme::new(&two_state(), fam.clone(), StateConvention::EndOfStep, 1e-12).unwrap();
        let spec = CfSpec::new(vec![1.0], vec![1.0]).unwrap();
        let z = discrete_cf_exact(&scheme, &spec).unwrap();
        assert!((z - fam.psi(0, 1.0).powu(1024)).norm() < 1e-10);
        assert!((z.norm() - (-0.5f64).exp()).abs() < 0.02);
    }

    #[test]
    fn estimators_agree_with_recursion() {
        let params = RegimeParams::new(vec![0.0, 0.05], vec![0.1, 0.3], 100.0).unwrap();
        let grid = TimeGrid::new(1.0, 64).unwrap();
        let spec = CfSpec::new(vec![3.0, -2.0], vec![0.5, 1.0]).unwrap();
        for convention in [StateConvention::EndOfStep, StateConvention::StartOfStep] {
            let fam = ReturnFamily::new(FamilyKind::Trinomial, &params, &grid).unwrap();
            let scheme = DiscreteScheme::new(&two_state(), fam, convention, 1e-12).unwrap();
            let exact = discrete_cf_exact(&scheme, &spec).unwrap();
            let mc = MonteCarlo::new(20_000, SeedSpec::new(6));
            for est in [CfEstimator::Sampled, CfEstimator::Conditional] {
                let z = discrete_cf(&scheme, &spec, &mc, est).unwrap();
                assert!((z.value - exact).norm() < 4.0 * z.std_error(), "{est:?} {convention:?}: {} vs {exact}", z.value);
            }
        }
    }

    #[test]
    fn cf_symmetry_and_zero() {
        let params = RegimeParams::new(vec![0.0, 0.05], vec![0.1, 0.3], 100.0).unwrap();
        let grid = TimeGrid::new(1.0, 64).unwrap();
        let fam = ReturnFamily::new(FamilyKind::Binomial, &params, &grid).unwrap();
        let scheme = DiscreteScheme::new(&two_state(), fam, StateConvention::EndOfStep, 1e-12).unwrap();
        let mc = MonteCarlo::new(10_000, SeedSpec::new(1));
        let zero = discrete_cf(&scheme, &CfSpec::new(vec![0.0], vec![1.0]).unwrap(), &mc, CfEstimator::Sampled).unwrap();
        assert_eq!(zero.value, Complex64::new(1.0, 0.0));
        let plus = discrete_cf(&scheme, &CfSpec::new(vec![2.0], vec![1.0]).unwrap(), &mc, CfEstimator::Sampled).unwrap();
        let minus = discrete_cf(&scheme, &CfSpec::new(vec![-2.0], vec![1.0]).unwrap(), &mc, CfEstimator::Sampled).unwrap();
        // Same seed, same atom draws: the phases are exact negatives.
        assert!((plus.value.conj() - minus.value).norm() < 1e-12);
    }
}
