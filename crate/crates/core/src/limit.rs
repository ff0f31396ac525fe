//! The continuous-time limit: log price simulated exactly given the chain
//! path, its finite-dimensional characteristic function, and call prices.

use num_complex::Complex64;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::ctmc::{check_trials, sample_path_with, CtmcPath};
use crate::error::{LabError, Result};
use crate::linalg::ComplexMatrix;
use crate::markov::{GeneratorMatrix, RegimeParams};
use crate::par::{fold_trials, ComplexMoments, Moments, MonteCarlo};
use crate::rng::{SeedSpec, TrialStreams};

/// Frequencies `alpha_1..alpha_n` for the increments over
/// `[t_0, t_1], ..., [t_{n-1}, t_n]`, with `t_0 = 0` implicit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CfSpec {
    alphas: Vec<f64>,
    times: Vec<f64>,
}

impl CfSpec {
    pub fn new(alphas: Vec<f64>, times: Vec<f64>) -> Result<Self> {
        if alphas.is_empty() || alphas.len() != times.len() {
            return Err(LabError::invalid("spec", "need one time per alpha and at least one of each"));
        }
        if alphas.iter().chain(&times).any(|x| !x.is_finite()) {
            return Err(LabError::invalid("spec", "alphas and times must be finite"));
        }
        if times[0] < 0.0 || times.windows(2).any(|w| w[1] < w[0]) {
            return Err(LabError::invalid("spec", "times must be non-negative and non-decreasing"));
        }
        Ok(Self { alphas, times })
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alphas
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn check_horizon(&self, horizon: f64) -> Result<()> {
        let last = *self.times.last().unwrap();
        if last > horizon {
            return Err(LabError::OutOfHorizon { t: last, horizon });
        }
        Ok(())
    }

    /// Per block, per state: `-alpha^2 sigma_j^2 / 2 + i alpha (mu_j - sigma_j^2 / 2)`.
    fn exponents(&self, params: &RegimeParams) -> Vec<Vec<Complex64>> {
        self.alphas
            .iter()
            .map(|&a| {
                (0..params.dim())
                    .map(|j| {
                        let s2 = params.sigma(j).powi(2);
                        Complex64::new(-0.5 * a * a * s2, a * params.log_drift(j))
                    })
                    .collect()
            })
            .collect()
    }
}

/// A complex Monte Carlo estimate with componentwise standard errors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CfEstimate {
    #[serde(with = "complex_parts")]
    pub value: Complex64,
    pub se_re: f64,
    pub se_im: f64,
}

mod complex_parts {
    use num_complex::Complex64;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    struct Parts {
        re: f64,
        im: f64,
    }

    pub fn serialize<S: Serializer>(z: &Complex64, s: S) -> Result<S::Ok, S::Error> {
        Parts { re: z.re, im: z.im }.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Complex64, D::Error> {
        let p = Parts::deserialize(d)?;
        Ok(Complex64::new(p.re, p.im))
    }
}

impl CfEstimate {
    pub fn exact(value: Complex64) -> Self {
        Self { value, se_re: 0.0, se_im: 0.0 }
    }

    pub(crate) fn from_moments(m: &ComplexMoments) -> Self {
        Self { value: m.mean(), se_re: m.re.std_error(), se_im: m.im.std_error() }
    }

    /// `sqrt(se_re^2 + se_im^2)`.
    pub fn std_error(&self) -> f64 {
        self.se_re.hypot(self.se_im)
    }

    /// Flat JSON object `{"re", "im", "se_re", "se_im"}`.
    pub fn to_json(&self) -> String {
        serde_json::json!({ "re": self.value.re, "im": self.value.im, "se_re": self.se_re, "se_im": self.se_im }).to_string()
    }
}

/// `U` and `X = exp(U)` at the requested times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitSample {
    pub times: Vec<f64>,
    pub u_values: Vec<f64>,
    pub x_values: Vec<f64>,
}

/// `U_t = log x0 + int (mu - sigma^2/2)(Y) ds + int sigma(Y) dW` at `times`,
/// drawn exactly given the chain path: each piece between consecutive jump or
/// evaluation times gets its drift plus an independent `N(0, sigma^2 dt)`.
/// Zero-length pieces draw nothing, so repeating a time repeats its value.
pub fn sample_limit_fdd(path: &CtmcPath, params: &RegimeParams, times: &[f64], seed: SeedSpec) -> Result<LimitSample> {
    if times.windows(2).any(|w| w[1] < w[0]) {
        return Err(LabError::invalid("times", "evaluation times must be sorted"));
    }
    for &t in times {
        if !(0.0..=path.horizon()).contains(&t) {
            return Err(LabError::OutOfHorizon { t, horizon: path.horizon() });
        }
    }
    if let Some(&s) = path.states().iter().find(|&&s| s >= params.dim()) {
        return Err(LabError::BadState(s + 1));
    }
    let mut rng = seed.rng();
    let mut u = params.x0().ln();
    let mut now = 0.0;
    let mut out = Vec::with_capacity(times.len());
    let mut segments = path.segments().peekable();
    for &t in times {
        while now < t {
            let &(state, _, end) = segments.peek().expect("segments cover [0, T]");
            let stop = end.min(t);
            let dt = stop - now;
            if dt > 0.0 {
                let z: f64 = StandardNormal.sample(&mut rng);
                u += params.log_drift(state) * dt + params.sigma(state) * dt.sqrt() * z;
            }
            now = stop;
            if stop >= end {
                segments.next();
            }
        }
        out.push(u);
    }
    let x_values = out.iter().map(|u| u.exp()).collect();
    Ok(LimitSample { times: times.to_vec(), u_values: out, x_values })
}

/// `log h(Y)` for one path: the exponent integrated over the path's pieces
/// intersected with the spec's blocks.
pub(crate) fn log_h(path: &CtmcPath, spec: &CfSpec, exponents: &[Vec<Complex64>]) -> Complex64 {
    let mut acc = Complex64::new(0.0, 0.0);
    for (state, a, b) in path.segments() {
        let mut lo = 0.0;
        for (blk, &hi) in spec.times().iter().enumerate() {
            let overlap = b.min(hi) - a.max(lo);
            if overlap > 0.0 {
                acc += exponents[blk][state] * overlap;
            }
            lo = hi;
        }
    }
    acc
}

/// Monte Carlo of `E h(Y)` over chain paths from state 0: the limit
/// finite-dimensional characteristic function with the Brownian part
/// integrated out analytically per path.
pub fn limit_cf(g: &GeneratorMatrix, params: &RegimeParams, spec: &CfSpec, horizon: f64, mc: &MonteCarlo) -> Result<CfEstimate> {
    check_trials(mc.trials)?;
    params.check_dim(g.dim())?;
    spec.check_horizon(horizon)?;
    if spec.alphas().iter().all(|&a| a == 0.0) {
        return Ok(CfEstimate::exact(Complex64::new(1.0, 0.0)));
    }
    let exponents = spec.exponents(params);
    let streams = TrialStreams::new(mc.seed);
    let acc: ComplexMoments = fold_trials(mc.trials, mc.execution, |i, acc: &mut ComplexMoments| {
        let path = sample_path_with(g, horizon, 0, &mut streams.trial(i));
        acc.push(log_h(&path, spec, &exponents).exp());
    });
    Ok(CfEstimate::from_moments(&acc))
}

/// `E h(Y)` in closed form: `e_0^T prod_k exp((A + diag(c_k)) dt_k) 1`.
pub fn limit_cf_exact(g: &GeneratorMatrix, params: &RegimeParams, spec: &CfSpec, horizon: f64) -> Result<Complex64> {
    params.check_dim(g.dim())?;
    spec.check_horizon(horizon)?;
    let d = g.dim();
    let a = g.generator().to_complex();
    let mut v = vec![Complex64::new(0.0, 0.0); d];
    v[0] = Complex64::new(1.0, 0.0);
    let mut lo = 0.0;
    for (c, &hi) in spec.exponents(params).iter().zip(spec.times()) {
        let dt = hi - lo;
        lo = hi;
        if dt == 0.0 {
            continue;
        }
        let m = ComplexMatrix::from_fn(d, |i, j| (a[(i, j)] + if i == j { c[i] } else { Complex64::new(0.0, 0.0) }) * dt);
        v = m.expm().left_mul(&v);
    }
    Ok(v.iter().sum())
}

/// `E (X - K)^+` for `X = x0 exp(m + s Z)`, `Z` standard normal.
pub fn lognormal_call(x0: f64, strike: f64, m: f64, variance: f64) -> f64 {
    let forward = x0 * (m + 0.5 * variance).exp();
    if strike <= 0.0 {
        return forward - strike;
    }
    if variance <= 0.0 {
        return (x0 * m.exp() - strike).max(0.0);
    }
    let s = variance.sqrt();
    let d1 = ((forward / strike).ln() + 0.5 * variance) / s;
    let phi = Normal::standard();
    forward * phi.cdf(d1) - strike * phi.cdf(d1 - s)
}

/// Black-Scholes call with zero rate.
pub fn black_scholes_call(x0: f64, strike: f64, sigma: f64, horizon: f64) -> f64 {
    let v = sigma * sigma * horizon;
    lognormal_call(x0, strike, -0.5 * v, v)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriceEstimate {
    pub price: f64,
    pub std_error: f64,
}

/// `E (X_T - K)^+` under the limit model (chain from state 0, no
/// discounting). Each sampled chain path contributes the conditional
/// expectation given the path, which is a lognormal call in closed form.
pub fn price_european_call(
    g: &GeneratorMatrix,
    params: &RegimeParams,
    strike: f64,
    horizon: f64,
    mc: &MonteCarlo,
) -> Result<PriceEstimate> {
    params.check_dim(g.dim())?;
    if !(strike >= 0.0 && strike.is_finite()) {
        return Err(LabError::invalid("strike", "must be non-negative"));
    }
    if mc.trials == 0 {
        return Err(LabError::invalid("trials", "must be positive"));
    }
    let streams = TrialStreams::new(mc.seed);
    let d = g.dim();
    let acc: Moments = fold_trials(mc.trials, mc.execution, |i, acc: &mut Moments| {
        let path = sample_path_with(g, horizon, 0, &mut streams.trial(i));
        let occ = path.occupation_by_state(d);
        let m: f64 = (0..d).map(|j| params.log_drift(j) * occ[j]).sum();
        let v: f64 = (0..d).map(|j| params.sigma(j).powi(2) * occ[j]).sum();
        acc.push(lognormal_call(params.x0(), strike, m, v));
    });
    Ok(PriceEstimate { price: acc.mean, std_error: acc.std_error() })
}
