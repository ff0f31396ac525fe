//! Generator, regime parameters, time grid, and transition probabilities of
//! the switching chain, both continuous-time and on the N-step grid.
//!
//! States are 0-based in code. Errors, configuration and exported CSV number
//! them from 1.

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::linalg::Matrix;
use crate::report::{ConvergenceReport, ReportRow};

pub const DEFAULT_TOL: f64 = 1e-12;

/// Whether zero off-diagonal rates are admissible.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum RatePolicy {
    /// Every off-diagonal rate must be strictly positive.
    #[default]
    Strict,
    /// Structural zeros are allowed; exit rates must still be positive.
    AllowZero,
}

/// Finite infinitesimal matrix of the switching chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorMatrix {
    rates: Matrix,
    exit_rates: Vec<f64>,
    lambda_min: f64,
    lambda_max: f64,
    policy: RatePolicy,
}

/// Checks a raw rate matrix and builds the generator. Diagonal entries may be
/// zero (unspecified) or `-lambda_i`; exit rates are always recomputed from
/// the off-diagonal row sums.
pub fn validate_generator(raw: &[Vec<f64>], tolerance: f64, policy: RatePolicy) -> Result<GeneratorMatrix> {
    let d = raw.len();
    for (row, r) in raw.iter().enumerate() {
        if r.len() != d {
            return Err(LabError::NonSquare { rows: d, row: row + 1, cols: r.len() });
        }
    }
    if d < 2 {
        return Err(LabError::TooFewStates(d));
    }
    if raw.iter().flatten().any(|x| !x.is_finite()) {
        return Err(LabError::invalid("rates", "entries must be finite"));
    }
    for (i, r) in raw.iter().enumerate() {
        for (j, &x) in r.iter().enumerate() {
            if i != j && x < 0.0 {
                return Err(LabError::NegativeRate(i + 1, j + 1));
            }
        }
    }
    let rates = Matrix::from_fn(d, |i, j| if i == j { 0.0 } else { raw[i][j] });
    let exit_rates = rates.row_sums();
    for (i, &l) in exit_rates.iter().enumerate() {
        if l <= 0.0 {
            return Err(LabError::ZeroExitRate(i + 1));
        }
        let diag = raw[i][i];
        if diag != 0.0 && (diag + l).abs() > tolerance {
            return Err(LabError::RowMismatch { row: i + 1, diagonal: diag, exit_rate: l });
        }
    }
    if policy == RatePolicy::Strict {
        for i in 0..d {
            for j in 0..d {
                if i != j && rates[(i, j)] == 0.0 {
                    return Err(LabError::ZeroRate(i + 1, j + 1));
                }
            }
        }
    }
    let lambda_min = exit_rates.iter().copied().fold(f64::INFINITY, f64::min);
    let lambda_max = exit_rates.iter().copied().fold(0.0, f64::max);
    Ok(GeneratorMatrix { rates, exit_rates, lambda_min, lambda_max, policy })
}

impl GeneratorMatrix {
    /// Builds from a flat row-major list of `d * d` entries.
    pub fn from_flat(d: usize, rates: &[f64], tolerance: f64, policy: RatePolicy) -> Result<Self> {
        if rates.len() != d * d {
            return Err(LabError::invalid("rates", format!("expected {} entries, got {}", d * d, rates.len())));
        }
        let raw: Vec<Vec<f64>> = rates.chunks(d.max(1)).map(<[f64]>::to_vec).collect();
        validate_generator(&raw, tolerance, policy)
    }

    /// Symmetric chain on `d` states, every off-diagonal rate `rate`.
    pub fn symmetric(d: usize, rate: f64) -> Result<Self> {
        let raw: Vec<Vec<f64>> = (0..d).map(|i| (0..d).map(|j| if i == j { 0.0 } else { rate }).collect()).collect();
        validate_generator(&raw, DEFAULT_TOL, RatePolicy::Strict)
    }

    pub fn dim(&self) -> usize {
        self.exit_rates.len()
    }

    /// Off-diagonal rate `lambda_ij` (0 on the diagonal).
    pub fn rate(&self, i: usize, j: usize) -> f64 {
        self.rates[(i, j)]
    }

    pub fn rates(&self) -> &Matrix {
        &self.rates
    }

    pub fn exit_rates(&self) -> &[f64] {
        &self.exit_rates
    }

    pub fn exit_rate(&self, i: usize) -> f64 {
        self.exit_rates[i]
    }

    /// `lambda_*`, the smallest exit rate.
    pub fn lambda_min(&self) -> f64 {
        self.lambda_min
    }

    /// `lambda^*`, the largest exit rate.
    pub fn lambda_max(&self) -> f64 {
        self.lambda_max
    }

    /// `lambda^* / lambda_*`.
    pub fn rate_ratio(&self) -> f64 {
        self.lambda_max / self.lambda_min
    }

    pub fn policy(&self) -> RatePolicy {
        self.policy
    }

    /// Full generator with `-lambda_i` on the diagonal.
    pub fn generator(&self) -> Matrix {
        let d = self.dim();
        Matrix::from_fn(d, |i, j| if i == j { -self.exit_rates[i] } else { self.rates[(i, j)] })
    }

    /// Destination of a jump out of `i` for a uniform draw `u` in `[0, 1)`,
    /// drawn from the embedded kernel `lambda_ij / lambda_i`.
    pub(crate) fn jump_target(&self, i: usize, u: f64) -> usize {
        pick_off_diagonal(self.rates.row(i), i, u * self.exit_rates[i])
    }

    pub(crate) fn check_state(&self, s: usize) -> Result<()> {
        if s < self.dim() {
            Ok(())
        } else {
            Err(LabError::BadState(s + 1))
        }
    }
}

/// Per-state drifts and volatilities plus the initial price.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeParams {
    mu: Vec<f64>,
    sigma: Vec<f64>,
    x0: f64,
    mu_bound: f64,
    sigma_bound: f64,
    degenerate: bool,
}

impl RegimeParams {
    /// Conforming parameters: every `sigma_k > 0`.
    pub fn new(mu: Vec<f64>, sigma: Vec<f64>, x0: f64) -> Result<Self> {
        if sigma.iter().any(|&s| s <= 0.0 || !s.is_finite()) {
            return Err(LabError::invalid("sigma", "volatilities must be positive"));
        }
        Self::build(mu, sigma, x0, false)
    }

    /// Test fixtures only: allows `sigma_k = 0`. Such parameters fall outside
    /// the model's assumptions and are flagged by [`RegimeParams::is_degenerate`].
    pub fn degenerate(mu: Vec<f64>, sigma: Vec<f64>, x0: f64) -> Result<Self> {
        if sigma.iter().any(|&s| s < 0.0 || !s.is_finite()) {
            return Err(LabError::invalid("sigma", "volatilities must be non-negative"));
        }
        Self::build(mu, sigma, x0, true)
    }

    fn build(mu: Vec<f64>, sigma: Vec<f64>, x0: f64, degenerate: bool) -> Result<Self> {
        if mu.len() != sigma.len() || mu.is_empty() {
            return Err(LabError::invalid("mu", "mu and sigma must be non-empty and of equal length"));
        }
        if mu.iter().any(|m| !m.is_finite()) {
            return Err(LabError::invalid("mu", "drifts must be finite"));
        }
        if !(x0 > 0.0 && x0.is_finite()) {
            return Err(LabError::invalid("x0", "initial price must be positive"));
        }
        let mu_bound = mu.iter().map(|m| m.abs()).fold(0.0, f64::max);
        let sigma_bound = sigma.iter().copied().fold(0.0, f64::max);
        Ok(Self { mu, sigma, x0, mu_bound, sigma_bound, degenerate })
    }

    /// Single regime repeated over `d` states.
    pub fn uniform(d: usize, mu: f64, sigma: f64, x0: f64) -> Result<Self> {
        Self::new(vec![mu; d], vec![sigma; d], x0)
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    pub fn mu(&self, k: usize) -> f64 {
        self.mu[k]
    }

    pub fn sigma(&self, k: usize) -> f64 {
        self.sigma[k]
    }

    pub fn mus(&self) -> &[f64] {
        &self.mu
    }

    pub fn sigmas(&self) -> &[f64] {
        &self.sigma
    }

    pub fn x0(&self) -> f64 {
        self.x0
    }

    /// `max_k |mu_k|`.
    pub fn mu_bound(&self) -> f64 {
        self.mu_bound
    }

    /// `max_k sigma_k`.
    pub fn sigma_bound(&self) -> f64 {
        self.sigma_bound
    }

    pub fn is_degenerate(&self) -> bool {
        self.degenerate
    }

    /// Log-price drift `mu_k - sigma_k^2 / 2`.
    pub fn log_drift(&self, k: usize) -> f64 {
        self.mu[k] - 0.5 * self.sigma[k] * self.sigma[k]
    }

    pub fn check_dim(&self, d: usize) -> Result<()> {
        if self.dim() == d {
            Ok(())
        } else {
            Err(LabError::invalid("mu", format!("{} regimes given for {} states", self.dim(), d)))
        }
    }
}

/// Uniform partition of `[0, T]` into `N` steps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    horizon: f64,
    steps: u64,
}

impl TimeGrid {
    pub fn new(horizon: f64, steps: u64) -> Result<Self> {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(LabError::invalid("T", "horizon must be positive"));
        }
        if steps == 0 {
            return Err(LabError::invalid("N", "number of steps must be positive"));
        }
        Ok(Self { horizon, steps })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// `T / N`.
    pub fn step(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    /// `k_{t,N}`: the index of the cell `[kT/N, (k+1)T/N)` containing `t`,
    /// with `k_{T,N} = N`. Values within 1e-9 (relative) of a grid point
    /// snap to it, so decimal inputs like 0.29 with N = 100 land on 29.
    pub fn index(&self, t: f64) -> u64 {
        if t <= 0.0 {
            return 0;
        }
        if t >= self.horizon {
            return self.steps;
        }
        let x = t * self.steps as f64 / self.horizon;
        let r = x.round();
        let k = if (x - r).abs() <= 1e-9 * r.max(1.0) { r } else { x.floor() };
        (k as u64).min(self.steps)
    }

    /// `t^{(N)} = k_{t,N} T / N`.
    pub fn snap(&self, t: f64) -> f64 {
        self.time_of(self.index(t))
    }

    pub fn time_of(&self, k: u64) -> f64 {
        k as f64 * self.horizon / self.steps as f64
    }
}

/// First `j != i` whose cumulative weight exceeds `target`; falls back to the
/// last positive entry so rounding at the top of the range never selects `i`.
pub(crate) fn pick_off_diagonal(row: &[f64], i: usize, target: f64) -> usize {
    let mut acc = 0.0;
    let mut last = i;
    for (j, &w) in row.iter().enumerate() {
        if j == i || w <= 0.0 {
            continue;
        }
        acc += w;
        last = j;
        if target < acc {
            return j;
        }
    }
    last
}

fn default_max_terms(g: &GeneratorMatrix, t: f64) -> usize {
    (10.0 * (g.lambda_max() * t * g.dim() as f64 + 50.0)).ceil() as usize
}

/// `P(t) = exp(tA)` by uniformization, truncated once the remaining Poisson
/// mass drops below `tol`.
pub fn transition_matrix(g: &GeneratorMatrix, t: f64, tol: f64) -> Result<Matrix> {
    transition_matrix_with_limit(g, t, tol, default_max_terms(g, t))
}

/// As [`transition_matrix`] with an explicit cap on series terms per
/// uniformization pass.
pub fn transition_matrix_with_limit(g: &GeneratorMatrix, t: f64, tol: f64, max_terms: usize) -> Result<Matrix> {
    if !(t >= 0.0 && t.is_finite()) {
        return Err(LabError::invalid("t", "time must be non-negative"));
    }
    let d = g.dim();
    if t == 0.0 {
        return Ok(Matrix::identity(d));
    }
    // Poisson weights e^{-qt}(qt)^n/n! overflow in their partial products for
    // large qt; uniformize over t / 2^k and square back up.
    let q = g.lambda_max();
    let mut squarings = 0u32;
    let mut tau = t;
    while q * tau > 32.0 {
        tau *= 0.5;
        squarings += 1;
    }
    let kernel = Matrix::from_fn(d, |i, j| if i == j { 1.0 - g.exit_rate(i) / q } else { g.rate(i, j) / q });
    let qt = q * tau;
    let mut weight = (-qt).exp();
    let mut mass = weight;
    let mut power = Matrix::identity(d);
    let mut acc = Matrix::from_fn(d, |i, j| if i == j { weight } else { 0.0 });
    let mut n = 0usize;
    while 1.0 - mass >= tol {
        n += 1;
        if n > max_terms {
            return Err(LabError::ToleranceNotReached { tol, max_terms });
        }
        power = &power * &kernel;
        weight *= qt / n as f64;
        mass += weight;
        for i in 0..d {
            for j in 0..d {
                acc[(i, j)] += weight * power[(i, j)];
            }
        }
    }
    for _ in 0..squarings {
        acc = &acc * &acc;
    }
    Ok(acc)
}

/// Diagonal convention for the one-step matrix of the discrete chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum MatrixVariant {
    /// Diagonal `exp(-lambda_i T/N)`: the probability of no jump in one step.
    /// Rows fall short of 1 by the deficit `p_ii(T/N) - exp(-lambda_i T/N)`.
    PaperDiagonal,
    /// Diagonal `p_ii(T/N)`: the exact grid skeleton of the chain. Used for simulation.
    #[default]
    RowStochastic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteTransition {
    pub variant: MatrixVariant,
    pub matrix: Matrix,
    /// Per-row `p_ii(T/N) - exp(-lambda_i T/N)` under `PaperDiagonal`, zeros otherwise.
    pub deficit: Vec<f64>,
}

pub fn discrete_transition_matrix(g: &GeneratorMatrix, grid: &TimeGrid, variant: MatrixVariant, tol: f64) -> Result<DiscreteTransition> {
    let h = grid.step();
    let mut matrix = transition_matrix(g, h, tol)?;
    let d = g.dim();
    let mut deficit = vec![0.0; d];
    if variant == MatrixVariant::PaperDiagonal {
        for (i, def) in deficit.iter_mut().enumerate() {
            let no_jump = (-g.exit_rate(i) * h).exp();
            *def = matrix[(i, i)] - no_jump;
            matrix[(i, i)] = no_jump;
        }
    }
    Ok(DiscreteTransition { variant, matrix, deficit })
}

/// Checks `(N/T) p_ij(T/N) -> lambda_ij` and the majorization
/// `p_ij(T/N) <= lambda_i T/N` over a grid of step counts.
pub fn rate_asymptotics_check(g: &GeneratorMatrix, horizon: f64, n_grid: &[u64], tol: f64) -> Result<ConvergenceReport> {
    if n_grid.len() < 2 || n_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(LabError::invalid("n_grid", "need at least two strictly increasing values"));
    }
    let mut report = ConvergenceReport::new("rate_asymptotics", "rate_error", n_grid.to_vec());
    let d = g.dim();
    let mut majorized = true;
    for &n in n_grid {
        let grid = TimeGrid::new(horizon, n)?;
        let h = grid.step();
        let p = transition_matrix(g, h, tol)?;
        let mut err: f64 = 0.0;
        let mut slack = f64::INFINITY;
        for i in 0..d {
            for j in (0..d).filter(|&j| j != i) {
                err = err.max((p[(i, j)] / h - g.rate(i, j)).abs());
                slack = slack.min(g.exit_rate(i) * h - p[(i, j)]);
            }
        }
        let ok = slack >= 0.0;
        majorized &= ok;
        report.push(ReportRow::new("rate_error", err).at(n).oracle(0.0));
        report.push(ReportRow::new("majorization_slack", slack).at(n).bound(0.0).pass(ok));
    }
    report.fit_decay();
    let errors: Vec<f64> = report.primary_rows().iter().map(|r| r.estimate).collect();
    let decreasing = errors.windows(2).all(|w| w[1] < w[0]);
    report.pass = majorized && decreasing;
    report.criterion = "p_ij(T/N) <= lambda_i T/N for all i != j and N; max |(N/T)p_ij - lambda_ij| strictly decreasing in N".into();
    Ok(report)
}
