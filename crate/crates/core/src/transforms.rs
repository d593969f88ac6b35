//! Priors on derived scales.
//!
//! Control-response and treatment-effect priors are combined by Monte Carlo
//! into a marginal prior for the active-arm response, and progression
//! proportions at a fixed horizon are mapped to hazard ratios assuming
//! exponential event times. Control and effect are drawn independently from
//! separate seeded streams.

use std::fmt::Write as _;

use serde::{Deserialize, Deserializer, Serialize};

use crate::dist::{Distribution, Family};
use crate::error::{Error, Result};
use crate::fit::{fit_best, RankedFits};
use crate::judgement::CdfTarget;
use crate::prior::Prior;
use crate::rng::stream_rng;

pub const MIN_TRANSFORM_DRAWS: usize = 1000;
/// Largest fraction of clamped proportion draws accepted without opt-in.
pub const MAX_CLAMPED_FRACTION: f64 = 0.05;
/// Proportions are kept this far inside (0, 1) before taking logs.
pub const PROPORTION_EPS: f64 = 1e-9;

pub const SUMMARY_LEVELS: [f64; 5] = [0.025, 0.25, 0.5, 0.75, 0.975];
pub const REFIT_LEVELS: [f64; 5] = [0.05, 0.25, 0.5, 0.75, 0.95];

/// How a relative difference `r` acts on the control response `c`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RelativeConvention {
    /// active = c · (1 − r); no effect at r = 0.
    #[default]
    RiskReduction,
    /// active = c · r; no effect at r = 1.
    Ratio,
}

impl RelativeConvention {
    pub fn apply(self, control: f64, r: f64) -> f64 {
        match self {
            RelativeConvention::RiskReduction => control * (1.0 - r),
            RelativeConvention::Ratio => control * r,
        }
    }

    pub fn no_effect(self) -> f64 {
        match self {
            RelativeConvention::RiskReduction => 0.0,
            RelativeConvention::Ratio => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EffectScale {
    AbsoluteDifference,
    RelativeDifference {
        #[serde(default)]
        convention: RelativeConvention,
    },
}

impl EffectScale {
    pub fn relative() -> Self {
        EffectScale::RelativeDifference { convention: RelativeConvention::RiskReduction }
    }

    pub fn apply(self, control: f64, effect: f64) -> f64 {
        match self {
            EffectScale::AbsoluteDifference => control + effect,
            EffectScale::RelativeDifference { convention } => convention.apply(control, effect),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantilePoint {
    pub p: f64,
    pub x: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSummary {
    pub n: usize,
    pub mean: f64,
    pub sd: f64,
    pub quantiles: Vec<QuantilePoint>,
}

/// Empirical prior carried as draws, with a summary recomputed from them.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SampleDistribution {
    pub seed: u64,
    pub clamped_fraction: f64,
    pub summary: SampleSummary,
    pub samples: Vec<f64>,
    #[serde(skip)]
    sorted: Vec<f64>,
}

/// Type-7 (linear interpolation) quantile of sorted data.
pub fn sorted_quantile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

impl SampleDistribution {
    pub fn new(samples: Vec<f64>, seed: u64, clamped_fraction: f64) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Domain("sample distribution needs at least one draw".into()));
        }
        if samples.iter().any(|x| !x.is_finite()) {
            return Err(Error::Domain("samples must be finite".into()));
        }
        if !(0.0..=1.0).contains(&clamped_fraction) {
            return Err(Error::Domain("clamped fraction must be in [0,1]".into()));
        }
        let mut sorted = samples.clone();
        sorted.sort_by(f64::total_cmp);
        let n = samples.len();
        let mean = samples.iter().sum::<f64>() / n as f64;
        let sd =
            if n > 1 { (samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt() } else { 0.0 };
        let quantiles = SUMMARY_LEVELS.iter().map(|&p| QuantilePoint { p, x: sorted_quantile(&sorted, p) }).collect();
        Ok(SampleDistribution {
            seed,
            clamped_fraction,
            summary: SampleSummary { n, mean, sd, quantiles },
            samples,
            sorted,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.samples.is_empty() {
            return Err(Error::Domain("sample distribution is empty".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn quantile(&self, p: f64) -> f64 {
        sorted_quantile(&self.sorted, p)
    }

    pub fn ecdf(&self, x: f64) -> f64 {
        self.sorted.partition_point(|&s| s <= x) as f64 / self.sorted.len() as f64
    }

    /// One sample per line.
    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(self.samples.len() * 20);
        out.push_str("sample\n");
        for x in &self.samples {
            let _ = writeln!(out, "{x}");
        }
        out
    }

    /// Summary without the draws.
    pub fn summary_json(&self) -> serde_json::Value {
        serde_json::json!({
            "seed": self.seed,
            "clamped_fraction": self.clamped_fraction,
            "summary": self.summary,
        })
    }
}

impl<'de> Deserialize<'de> for SampleDistribution {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Wire {
            #[serde(default)]
            seed: u64,
            #[serde(default)]
            clamped_fraction: f64,
            samples: Vec<f64>,
        }
        let w = Wire::deserialize(d)?;
        SampleDistribution::new(w.samples, w.seed, w.clamped_fraction).map_err(serde::de::Error::custom)
    }
}

fn check_draws(n: usize) -> Result<()> {
    if n < MIN_TRANSFORM_DRAWS {
        return Err(Error::Domain(format!("at least {MIN_TRANSFORM_DRAWS} draws are required, got {n}")));
    }
    Ok(())
}

fn clamp_check(clamped: usize, n: usize, allow_clamp: bool) -> Result<f64> {
    let fraction = clamped as f64 / n as f64;
    if fraction > MAX_CLAMPED_FRACTION && !allow_clamp {
        return Err(Error::Transform(format!(
            "{:.2}% of draws fell outside (0,1) and were clamped (limit {:.0}%); pass allow_clamp to accept",
            100.0 * fraction,
            100.0 * MAX_CLAMPED_FRACTION
        )));
    }
    Ok(fraction)
}

/// Marginal prior for the active response from independent control and
/// effect priors.
///
/// When the control prior lives in [0, 1] the result is a proportion and
/// draws outside [0, 1] are clamped; more than 5% clamped is an error unless
/// `allow_clamp` is set.
pub fn combine_control_and_effect(
    control_prior: &Distribution,
    effect_prior: &Prior,
    scale: EffectScale,
    n: usize,
    seed: u64,
    allow_clamp: bool,
) -> Result<SampleDistribution> {
    check_draws(n)?;
    control_prior.validate()?;
    effect_prior.validate()?;
    let proportion = Prior::Dist(*control_prior).within(0.0, 1.0);
    let mut control_rng = stream_rng(seed, 0);
    let mut effect_rng = stream_rng(seed, 1);
    let mut clamped = 0usize;
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let c = control_prior.draw(&mut control_rng);
        let e = effect_prior.draw(&mut effect_rng);
        let mut a = scale.apply(c, e);
        if proportion && !(0.0..=1.0).contains(&a) {
            clamped += 1;
            a = a.clamp(0.0, 1.0);
        }
        out.push(a);
    }
    let fraction = clamp_check(clamped, n, allow_clamp)?;
    SampleDistribution::new(out, seed, fraction)
}

/// Hazard ratio implied by progression proportions at a common horizon under
/// exponential event times: `ln(1 − p_active) / ln(1 − p_control)`.
///
/// The horizon cancels, so it is not an argument.
pub fn hazard_ratio_point(p_control: f64, p_active: f64) -> Result<f64> {
    for (name, p) in [("p_control", p_control), ("p_active", p_active)] {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::Domain(format!("{name} must lie strictly inside (0,1), got {p}")));
        }
    }
    Ok((-p_active).ln_1p() / (-p_control).ln_1p())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivalElicitation {
    /// Time at which progression proportions were elicited. Informational.
    pub horizon: f64,
    pub p_control_prior: Distribution,
    pub rel_diff_prior: Prior,
    #[serde(default)]
    pub convention: RelativeConvention,
}

impl SurvivalElicitation {
    pub fn validate(&self) -> Result<()> {
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return Err(Error::Parameter(format!("horizon must be positive, got {}", self.horizon)));
        }
        self.p_control_prior.validate()?;
        self.rel_diff_prior.validate()?;
        if !Prior::Dist(self.p_control_prior).within(0.0, 1.0) {
            return Err(Error::Parameter("control progression prior must be supported within (0,1)".into()));
        }
        Ok(())
    }
}

/// Implicit hazard-ratio prior from a control-progression prior and a
/// relative-difference prior.
pub fn hazard_ratio_prior(
    s: &SurvivalElicitation,
    n: usize,
    seed: u64,
    allow_clamp: bool,
) -> Result<SampleDistribution> {
    check_draws(n)?;
    s.validate()?;
    let mut control_rng = stream_rng(seed, 0);
    let mut effect_rng = stream_rng(seed, 1);
    let lo = PROPORTION_EPS;
    let hi = 1.0 - PROPORTION_EPS;
    let mut clamped = 0usize;
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let pc = s.p_control_prior.draw(&mut control_rng).clamp(lo, hi);
        let r = s.rel_diff_prior.draw(&mut effect_rng);
        let raw = s.convention.apply(pc, r);
        if !(raw > 0.0 && raw < 1.0) {
            clamped += 1;
        }
        let pa = raw.clamp(lo, hi);
        out.push(hazard_ratio_point(pc, pa)?);
    }
    let fraction = clamp_check(clamped, n, allow_clamp)?;
    SampleDistribution::new(out, seed, fraction)
}

/// Fit parametric families to an empirical prior at its 5/25/50/75/95%
/// quantiles.
pub fn refit(sd: &SampleDistribution, families: &[Family]) -> Result<RankedFits> {
    check_draws(sd.len())?;
    let targets: Vec<CdfTarget> = REFIT_LEVELS.iter().map(|&p| CdfTarget { x: sd.quantile(p), p }).collect();
    fit_best(&targets, families, None)
}
