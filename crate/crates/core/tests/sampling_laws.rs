//! Distributional checks of the samplers against closed forms for the
//! symmetric two-state chain with rate 1.

use regime_lab::{
    sample_ctmc_path, sample_discrete_chain, sample_limit_fdd, sample_returns, FamilyKind, GeneratorMatrix, RegimeParams, ReturnFamily,
    SeedSpec, TimeGrid,
};
use statrs::distribution::{ChiSquared, ContinuousCDF, Discrete, Poisson};

const TRIALS: u64 = 20_000;

fn lam1() -> GeneratorMatrix {
    GeneratorMatrix::symmetric(2, 1.0).unwrap()
}

fn seed(label: &str, i: u64) -> SeedSpec {
    SeedSpec::new(99).derive_index(label, i)
}

fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

#[test]
fn jump_counts_are_poisson() {
    // Constant exit rate 1 on [0, 1]: N_T ~ Poisson(1).
    let g = lam1();
    let mut counts = [0u64; 7];
    for i in 0..TRIALS {
        let n = sample_ctmc_path(&g, 1.0, 0, seed("count", i)).unwrap().jump_count();
        counts[n.min(6)] += 1;
    }
    let pois = Poisson::new(1.0).unwrap();
    let total = TRIALS as f64;
    let mut chi2 = 0.0;
    for (k, &c) in counts.iter().enumerate() {
        let p = if k < 6 { pois.pmf(k as u64) } else { 1.0 - (0..6).map(|j| pois.pmf(j)).sum::<f64>() };
        chi2 += (c as f64 - total * p).powi(2) / (total * p);
    }
    let p_value = 1.0 - ChiSquared::new(6.0).unwrap().cdf(chi2);
    assert!(p_value > 1e-3, "chi2 = {chi2}, p = {p_value}");
}

#[test]
fn mean_occupation_of_start_state() {
    // E int_0^1 1{Y_s = 1} ds = 1/2 + (1 - e^{-2}) / 4.
    let g = lam1();
    let occ: Vec<f64> = (0..TRIALS).map(|i| sample_ctmc_path(&g, 1.0, 0, seed("occ", i)).unwrap().occupation_by_state(2)[0]).collect();
    let (m, se) = mean_se(&occ);
    let oracle = 0.5 + (1.0 - (-2.0f64).exp()) / 4.0;
    assert!((m - oracle).abs() <= 4.0 * se, "{m} vs {oracle} (se {se})");
}

#[test]
fn discrete_chain_marginal_and_switch_count() {
    let g = lam1();
    let grid = TimeGrid::new(1.0, 64).unwrap();
    let q = 0.5 * (1.0 - (-2.0 / 64.0f64).exp());
    let (mut at_half, mut switches) = (Vec::new(), Vec::new());
    for i in 0..TRIALS {
        let y = sample_discrete_chain(&g, &grid, seed("chain", i)).unwrap();
        assert_eq!(y.len(), 65);
        at_half.push(f64::from(y[32] == 0));
        switches.push(y.windows(2).filter(|w| w[0] != w[1]).count() as f64);
    }
    let (m, se) = mean_se(&at_half);
    let stay = 0.5 * (1.0 + (-1.0f64).exp());
    assert!((m - stay).abs() <= 4.0 * se, "P(Y_32 = 1) = {m} vs {stay}");
    let (m, se) = mean_se(&switches);
    assert!((m - 64.0 * q).abs() <= 4.0 * se, "E switches = {m} vs {}", 64.0 * q);
}

#[test]
fn return_moments_and_independence() {
    let params = RegimeParams::new(vec![0.0, 0.05], vec![0.1, 0.3], 1.0).unwrap();
    let grid = TimeGrid::new(1.0, 100).unwrap();
    for kind in [FamilyKind::Binomial, FamilyKind::Trinomial] {
        let family = ReturnFamily::new(kind, &params, &grid).unwrap();
        let h = grid.step();
        let (mut first, mut second) = (Vec::new(), Vec::new());
        for i in 0..TRIALS {
            let s = SeedSpec::new(i);
            first.push(sample_returns(&family, 1, 3, s));
            second.push(sample_returns(&family, 1, 4, s));
        }
        let (m, se) = mean_se(&first);
        assert!((m - 0.05 * h).abs() <= 4.0 * se, "{kind:?} mean");
        let var = first.iter().map(|r| (r - 0.05 * h).powi(2)).sum::<f64>() / TRIALS as f64;
        assert!((var - 0.09 * h).abs() <= 0.05 * 0.09 * h, "{kind:?} variance {var}");
        assert!((family.variance(1) - 0.09 * h).abs() < 1e-15);
        let corr = first.iter().zip(&second).map(|(a, b)| (a - m) * (b - m)).sum::<f64>() / TRIALS as f64 / var;
        assert!(corr.abs() < 4.0 / (TRIALS as f64).sqrt(), "{kind:?} lag correlation {corr}");
    }
}

#[test]
fn limit_log_price_mean_and_variance() {
    let g = lam1();
    let single = RegimeParams::uniform(2, 0.1, 0.2, 50.0).unwrap();
    let u: Vec<f64> = (0..TRIALS)
        .map(|i| {
            let path = sample_ctmc_path(&g, 1.0, 0, seed("lpath", i)).unwrap();
            sample_limit_fdd(&path, &single, &[0.5, 1.0], seed("lfdd", i)).unwrap().u_values[1]
        })
        .collect();
    let (m, se) = mean_se(&u);
    let oracle = 50.0f64.ln() + 0.1 - 0.02;
    assert!((m - oracle).abs() <= 4.0 * se, "mean {m} vs {oracle}");
    let var = u.iter().map(|x| (x - oracle).powi(2)).sum::<f64>() / TRIALS as f64;
    let var_se = 0.04 * (2.0 / TRIALS as f64).sqrt();
    assert!((var - 0.04).abs() <= 4.0 * var_se, "variance {var}");

    // Switching: the drift integrates over the occupation times.
    let fixture = RegimeParams::new(vec![0.0, 0.05], vec![0.1, 0.3], 1.0).unwrap();
    let u: Vec<f64> = (0..TRIALS)
        .map(|i| {
            let path = sample_ctmc_path(&g, 1.0, 0, seed("spath", i)).unwrap();
            sample_limit_fdd(&path, &fixture, &[1.0], seed("sfdd", i)).unwrap().u_values[0]
        })
        .collect();
    let (m, se) = mean_se(&u);
    let occ0 = 0.5 + (1.0 - (-2.0f64).exp()) / 4.0;
    let oracle = -0.005 * occ0 + (0.05 - 0.045) * (1.0 - occ0);
    assert!((m - oracle).abs() <= 4.0 * se, "switching mean {m} vs {oracle}");
}
