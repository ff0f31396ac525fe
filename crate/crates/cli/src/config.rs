use std::ops::Range;

use regime_lab::{FamilyKind, GeneratorMatrix, RatePolicy, RegimeParams, StateConvention, TimeGrid, DEFAULT_TOL};
use serde::Deserialize;
use toml::Spanned;

use crate::error::CliError;

/// The two-state symmetric fixture that `report-all` uses when no config is given.
pub const DEFAULT_FIXTURE: &str = include_str!("../fixtures/two_state.toml");

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModel {
    states: Spanned<usize>,
    rates: Spanned<Vec<f64>>,
    mu: Spanned<Vec<f64>>,
    sigma: Spanned<Vec<f64>>,
    x0: Spanned<f64>,
    #[serde(rename = "T")]
    horizon: Spanned<f64>,
    #[serde(rename = "N")]
    steps: Spanned<u64>,
    #[serde(default)]
    family: Option<Spanned<String>>,
    #[serde(default)]
    tolerance: Option<Spanned<f64>>,
    #[serde(default)]
    policy: Option<Spanned<String>>,
    #[serde(default)]
    convention: Option<Spanned<String>>,
    #[serde(default)]
    strike: Option<Spanned<f64>>,
}

/// A validated model file.
#[derive(Debug, Clone)]
pub struct ModelConfig {
    pub generator: GeneratorMatrix,
    pub params: RegimeParams,
    pub grid: TimeGrid,
    pub family: FamilyKind,
    pub convention: StateConvention,
    pub tolerance: f64,
    pub strike: f64,
}

impl ModelConfig {
    pub fn horizon(&self) -> f64 {
        self.grid.horizon()
    }
}

fn line_of(text: &str, span: Range<usize>) -> usize {
    text[..span.start.min(text.len())].matches('\n').count() + 1
}

struct Ctx<'a> {
    text: &'a str,
}

impl Ctx<'_> {
    fn err<T>(&self, key: &str, span: Range<usize>, message: impl Into<String>) -> Result<T, CliError> {
        Err(CliError::ConfigParse { line: line_of(self.text, span), key: key.into(), message: message.into() })
    }
}

/// Key named in a toml error message such as "missing field `mu`".
fn key_from_message(msg: &str) -> Option<String> {
    let start = msg.find('`')? + 1;
    let len = msg[start..].find('`')?;
    Some(msg[start..start + len].to_string())
}

pub fn parse_model(text: &str) -> Result<ModelConfig, CliError> {
    let raw: RawModel = toml::from_str(text).map_err(|e| {
        let line = e.span().map_or(0, |s| line_of(text, s));
        let message = e.message().to_string();
        let key = key_from_message(&message).unwrap_or_default();
        CliError::ConfigParse { line, key, message }
    })?;
    let cx = Ctx { text };

    let d = *raw.states.get_ref();
    if d < 2 {
        return cx.err("states", raw.states.span(), format!("need at least 2 states, got {d}"));
    }
    if raw.rates.get_ref().len() != d * d {
        let n = raw.rates.get_ref().len();
        return cx.err("rates", raw.rates.span(), format!("expected {} entries (states squared, row-major), got {n}", d * d));
    }
    for (key, v) in [("mu", &raw.mu), ("sigma", &raw.sigma)] {
        if v.get_ref().len() != d {
            return cx.err(key, v.span(), format!("expected {d} entries, got {}", v.get_ref().len()));
        }
    }

    let tolerance = match &raw.tolerance {
        Some(t) if t.get_ref().is_nan() || *t.get_ref() <= 0.0 => return cx.err("tolerance", t.span(), "must be positive"),
        Some(t) => *t.get_ref(),
        None => DEFAULT_TOL,
    };
    let policy = match raw.policy.as_ref().map(|p| (p.get_ref().as_str(), p.span())) {
        None | Some(("strict", _)) => RatePolicy::Strict,
        Some(("allow_zero", _)) => RatePolicy::AllowZero,
        Some((other, span)) => return cx.err("policy", span, format!("unknown policy `{other}` (strict | allow_zero)")),
    };
    let family = match raw.family.as_ref().map(|f| (f.get_ref().as_str(), f.span())) {
        None | Some(("binomial", _)) => FamilyKind::Binomial,
        Some(("trinomial", _)) => FamilyKind::Trinomial,
        Some((other, span)) => return cx.err("family", span, format!("unknown family `{other}` (binomial | trinomial)")),
    };
    let convention = match raw.convention.as_ref().map(|c| (c.get_ref().as_str(), c.span())) {
        None | Some(("end_of_step", _)) => StateConvention::EndOfStep,
        Some(("start_of_step", _)) => StateConvention::StartOfStep,
        Some((other, span)) => return cx.err("convention", span, format!("unknown convention `{other}` (end_of_step | start_of_step)")),
    };

    let generator = GeneratorMatrix::from_flat(d, raw.rates.get_ref(), tolerance, policy)?;
    let params = RegimeParams::new(raw.mu.into_inner(), raw.sigma.into_inner(), *raw.x0.get_ref())?;
    let grid = TimeGrid::new(*raw.horizon.get_ref(), *raw.steps.get_ref())?;
    let strike = match &raw.strike {
        Some(k) if k.get_ref().is_nan() || *k.get_ref() < 0.0 => return cx.err("strike", k.span(), "must be non-negative"),
        Some(k) => *k.get_ref(),
        None => params.x0(),
    };
    Ok(ModelConfig { generator, params, grid, family, convention, tolerance, strike })
}
