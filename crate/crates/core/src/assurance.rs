//! Power, assurance and decision-rule operating characteristics.
//!
//! Every endpoint is reduced to a normal approximation for the estimate of
//! the treatment effect on its analysis scale (difference, risk difference
//! or log hazard ratio), oriented so that larger values are favourable.
//! A trial succeeds when the one-sided test in the favourable direction is
//! significant and, optionally, the estimate clears the MCID.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dist::{normal_cdf, normal_quantile, Distribution, SCHEMA_VERSION};
use crate::error::{Error, Result};
use crate::prior::Prior;
use crate::rng::stream_rng;

/// Number of Simpson intervals for quadrature.
pub const QUADRATURE_INTERVALS: usize = 2000;
/// Prior mass excluded from each tail of the quadrature range.
pub const QUADRATURE_TAIL: f64 = 1e-8;
pub const MIN_OC_SIMS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Endpoint {
    NormalDifference {
        sd: f64,
        n_per_arm: u64,
    },
    BinaryDifference {
        n_per_arm: u64,
        /// Control response rate for priors on the risk difference.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        control_rate: Option<f64>,
    },
    TimeToEvent {
        events: u64,
        #[serde(default = "unit_ratio")]
        allocation_ratio: f64,
    },
}

fn unit_ratio() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sided {
    One,
    Two,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Positive,
    Negative,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Futility {
    pub information_fraction: f64,
    /// Stop when the interim z (favourable orientation) falls below this.
    /// `None` never stops.
    pub z_threshold: Option<f64>,
}

fn schema_version() -> u32 {
    SCHEMA_VERSION
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialDesign {
    #[serde(default = "schema_version")]
    pub version: u32,
    pub endpoint: Endpoint,
    pub alpha: f64,
    pub sided: Sided,
    /// Defaults to positive for differences and negative for hazard ratios.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub favorable: Option<Direction>,
    /// Estimate threshold on the effect's natural scale (HR for time to event).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mcid: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub futility: Option<Futility>,
}

impl TrialDesign {
    pub fn new(endpoint: Endpoint, alpha: f64, sided: Sided) -> Self {
        TrialDesign { version: SCHEMA_VERSION, endpoint, alpha, sided, favorable: None, mcid: None, futility: None }
    }

    pub fn favorable(&self) -> Direction {
        self.favorable.unwrap_or(match self.endpoint {
            Endpoint::TimeToEvent { .. } => Direction::Negative,
            _ => Direction::Positive,
        })
    }

    fn sign(&self) -> f64 {
        match self.favorable() {
            Direction::Positive => 1.0,
            Direction::Negative => -1.0,
        }
    }

    pub fn z_crit(&self) -> f64 {
        match self.sided {
            Sided::One => normal_quantile(1.0 - self.alpha),
            Sided::Two => normal_quantile(1.0 - self.alpha / 2.0),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != SCHEMA_VERSION {
            return Err(Error::Schema(format!("design schema version {} (expected {SCHEMA_VERSION})", self.version)));
        }
        if !(self.alpha > 0.0 && self.alpha < 0.5) {
            return Err(Error::Design(format!("alpha must lie in (0, 0.5), got {}", self.alpha)));
        }
        match self.endpoint {
            Endpoint::NormalDifference { sd, n_per_arm } => {
                if !(sd.is_finite() && sd > 0.0) {
                    return Err(Error::Design(format!("sd must be > 0, got {sd}")));
                }
                if n_per_arm < 2 {
                    return Err(Error::Design("n_per_arm must be at least 2".into()));
                }
            }
            Endpoint::BinaryDifference { n_per_arm, control_rate } => {
                if n_per_arm < 2 {
                    return Err(Error::Design("n_per_arm must be at least 2".into()));
                }
                if let Some(p) = control_rate {
                    if !(p > 0.0 && p < 1.0) {
                        return Err(Error::Design(format!("control rate must lie in (0,1), got {p}")));
                    }
                }
            }
            Endpoint::TimeToEvent { events, allocation_ratio } => {
                if events < 2 {
                    return Err(Error::Design("events must be at least 2".into()));
                }
                if !(allocation_ratio.is_finite() && allocation_ratio > 0.0) {
                    return Err(Error::Design("allocation ratio must be > 0".into()));
                }
            }
        }
        if let Some(m) = self.mcid {
            let ok = match self.endpoint {
                Endpoint::TimeToEvent { .. } => m.is_finite() && m > 0.0,
                _ => m.is_finite(),
            };
            if !ok {
                return Err(Error::Design(format!("invalid MCID {m}")));
            }
        }
        if let Some(f) = self.futility {
            if !(f.information_fraction > 0.0 && f.information_fraction < 1.0) {
                return Err(Error::Design("information fraction must lie in (0,1)".into()));
            }
            if f.z_threshold.is_some_and(|z| z.is_nan()) {
                return Err(Error::Design("futility threshold is NaN".into()));
            }
        }
        Ok(())
    }

    /// Same design with a different sample size (patients per arm or events).
    pub fn with_size(&self, size: u64) -> TrialDesign {
        let mut d = self.clone();
        d.endpoint = match d.endpoint {
            Endpoint::NormalDifference { sd, .. } => Endpoint::NormalDifference { sd, n_per_arm: size },
            Endpoint::BinaryDifference { control_rate, .. } => {
                Endpoint::BinaryDifference { n_per_arm: size, control_rate }
            }
            Endpoint::TimeToEvent { allocation_ratio, .. } => Endpoint::TimeToEvent { events: size, allocation_ratio },
        };
        d
    }

    /// MCID in the oriented analysis scale.
    fn oriented_mcid(&self) -> Option<f64> {
        self.mcid.map(|m| match self.endpoint {
            Endpoint::TimeToEvent { .. } => self.sign() * m.ln(),
            _ => self.sign() * m,
        })
    }
}

/// What the prior describes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EffectMeasure {
    /// Difference in means, or risk difference with a fixed control rate.
    Difference,
    HazardRatio,
    /// Prior on the active-arm response rate, with an independent prior for
    /// the control rate.
    ActiveProportion {
        control: Distribution,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorSpec {
    #[serde(default = "schema_version")]
    pub version: u32,
    pub measure: EffectMeasure,
    pub prior: Prior,
}

impl PriorSpec {
    pub fn new(measure: EffectMeasure, prior: impl Into<Prior>) -> Self {
        PriorSpec { version: SCHEMA_VERSION, measure, prior: prior.into() }
    }

    fn check_compatible(&self, design: &TrialDesign) -> Result<()> {
        if self.version != SCHEMA_VERSION {
            return Err(Error::Schema(format!("prior schema version {} (expected {SCHEMA_VERSION})", self.version)));
        }
        self.prior.validate()?;
        let ok = matches!(
            (&self.measure, design.endpoint),
            (EffectMeasure::Difference, Endpoint::NormalDifference { .. })
                | (EffectMeasure::Difference, Endpoint::BinaryDifference { control_rate: Some(_), .. })
                | (EffectMeasure::HazardRatio, Endpoint::TimeToEvent { .. })
                | (EffectMeasure::ActiveProportion { .. }, Endpoint::BinaryDifference { .. })
        );
        if !ok {
            return Err(Error::Design(format!(
                "prior on {} is incompatible with the {} endpoint",
                measure_name(&self.measure),
                endpoint_name(&design.endpoint)
            )));
        }
        Ok(())
    }
}

fn measure_name(m: &EffectMeasure) -> &'static str {
    match m {
        EffectMeasure::Difference => "a difference",
        EffectMeasure::HazardRatio => "a hazard ratio",
        EffectMeasure::ActiveProportion { .. } => "the active response rate",
    }
}

fn endpoint_name(e: &Endpoint) -> &'static str {
    match e {
        Endpoint::NormalDifference { .. } => "normal-difference",
        Endpoint::BinaryDifference { control_rate: None, .. } => "binary (no control rate)",
        Endpoint::BinaryDifference { .. } => "binary",
        Endpoint::TimeToEvent { .. } => "time-to-event",
    }
}

/// Oriented true effect on the analysis scale and the standard error of its
/// estimate.
fn analysis_scale(design: &TrialDesign, effect: f64, control: Option<f64>) -> Result<(f64, f64)> {
    if !effect.is_finite() {
        return Err(Error::Design(format!("effect must be finite, got {effect}")));
    }
    let s = design.sign();
    match design.endpoint {
        Endpoint::NormalDifference { sd, n_per_arm } => Ok((s * effect, sd * (2.0 / n_per_arm as f64).sqrt())),
        Endpoint::BinaryDifference { n_per_arm, control_rate } => {
            // With a control draw the effect is the active rate itself.
            let (pc, pa) = match control {
                Some(pc) => (pc, effect),
                None => {
                    let pc =
                        control_rate.ok_or_else(|| Error::Design("binary endpoint needs a control rate".into()))?;
                    (pc, pc + effect)
                }
            };
            if !((0.0..=1.0).contains(&pa) && (0.0..=1.0).contains(&pc)) {
                return Err(Error::Design(format!("effect implies response rates ({pc}, {pa}) outside [0,1]")));
            }
            let n = n_per_arm as f64;
            let se = (pc * (1.0 - pc) / n + pa * (1.0 - pa) / n).sqrt();
            if se == 0.0 {
                return Err(Error::Design("response rates at 0 or 1 give a zero standard error".into()));
            }
            Ok((s * (pa - pc), se))
        }
        Endpoint::TimeToEvent { events, allocation_ratio: r } => {
            if effect <= 0.0 {
                return Err(Error::Design(format!("hazard ratio must be > 0, got {effect}")));
            }
            Ok((s * effect.ln(), (1.0 + r) / (r * events as f64).sqrt()))
        }
    }
}

fn success_probability(design: &TrialDesign, oriented: f64, se: f64) -> f64 {
    let mut bar = design.z_crit() * se;
    if let Some(m) = design.oriented_mcid() {
        bar = bar.max(m);
    }
    normal_cdf((oriented - bar) / se)
}

/// Probability of success at a fixed true effect (difference, risk
/// difference given the design's control rate, or hazard ratio).
pub fn power(design: &TrialDesign, effect: f64) -> Result<f64> {
    design.validate()?;
    let (theta, se) = analysis_scale(design, effect, None)?;
    Ok(success_probability(design, theta, se))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AssuranceMethod {
    Quadrature,
    MonteCarlo,
}

impl std::str::FromStr for AssuranceMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "quadrature" => Ok(AssuranceMethod::Quadrature),
            "mc" | "monte_carlo" | "montecarlo" => Ok(AssuranceMethod::MonteCarlo),
            other => Err(Error::Design(format!("unknown assurance method '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssuranceResult {
    pub estimate: f64,
    pub mc_se: f64,
    pub method: AssuranceMethod,
    /// Simpson intervals for quadrature, prior draws for Monte Carlo.
    pub n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

fn simpson<F: Fn(f64) -> Result<f64>>(f: F, a: f64, b: f64, intervals: usize) -> Result<f64> {
    let h = (b - a) / intervals as f64;
    let mut s = f(a)? + f(b)?;
    for i in 1..intervals {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + i as f64 * h)?;
    }
    Ok(s * h / 3.0)
}

fn quadrature_dist(design: &TrialDesign, d: &Distribution) -> Result<f64> {
    if let Distribution::Point { value } = d {
        return power(design, *value);
    }
    let a = d.quantile(QUADRATURE_TAIL)?;
    let b = d.quantile(1.0 - QUADRATURE_TAIL)?;
    simpson(|x| Ok(d.pdf(x) * power(design, x)?), a, b, QUADRATURE_INTERVALS)
}

fn quadrature(prior: &Prior, design: &TrialDesign) -> Result<f64> {
    match prior {
        Prior::Dist(d) => quadrature_dist(design, d),
        Prior::Mixture(m) => m
            .components()
            .iter()
            .filter(|c| c.weight > 0.0)
            .map(|c| Ok(c.weight * quadrature_dist(design, &c.distribution)?))
            .sum(),
        Prior::Spike(s) => {
            let w = s.weight();
            let spike = if w > 0.0 { w * power(design, s.location())? } else { 0.0 };
            let smear = if w < 1.0 { (1.0 - w) * quadrature_dist(design, &s.conditional)? } else { 0.0 };
            Ok(spike + smear)
        }
        Prior::Samples(_) => {
            Err(Error::Design("quadrature needs a parametric prior; use Monte Carlo for samples".into()))
        }
    }
}

/// Draws the true effect and, for active-rate priors, the control rate.
struct EffectSampler<'a> {
    spec: &'a PriorSpec,
    effect_rng: rand_chacha::ChaCha8Rng,
    control_rng: rand_chacha::ChaCha8Rng,
}

impl<'a> EffectSampler<'a> {
    fn new(spec: &'a PriorSpec, seed: u64) -> Self {
        EffectSampler { spec, effect_rng: stream_rng(seed, 0), control_rng: stream_rng(seed, 1) }
    }

    fn next(&mut self, design: &TrialDesign) -> Result<(f64, f64)> {
        let effect = self.spec.prior.draw(&mut self.effect_rng);
        let control = match &self.spec.measure {
            EffectMeasure::ActiveProportion { control } => Some(control.draw(&mut self.control_rng)),
            _ => None,
        };
        analysis_scale(design, effect, control)
    }
}

/// Probability of trial success averaged over the prior.
pub fn assurance(
    prior: &PriorSpec,
    design: &TrialDesign,
    method: AssuranceMethod,
    n: usize,
    seed: u64,
) -> Result<AssuranceResult> {
    design.validate()?;
    prior.check_compatible(design)?;
    match method {
        AssuranceMethod::Quadrature => {
            if matches!(prior.measure, EffectMeasure::ActiveProportion { .. }) {
                return Err(Error::Design("quadrature is one-dimensional; active-rate priors need Monte Carlo".into()));
            }
            let estimate = quadrature(&prior.prior, design)?.clamp(0.0, 1.0);
            Ok(AssuranceResult { estimate, mc_se: 0.0, method, n: QUADRATURE_INTERVALS, seed: None })
        }
        AssuranceMethod::MonteCarlo => {
            if n < 2 {
                return Err(Error::Design("Monte Carlo assurance needs at least 2 draws".into()));
            }
            let mut sampler = EffectSampler::new(prior, seed);
            // Sums of deviations from the first draw: a constant integrand
            // (point-mass prior) averages to exactly its value.
            let mut shift = None;
            let (mut sum, mut sum_sq) = (0.0, 0.0);
            for _ in 0..n {
                let (theta, se) = sampler.next(design)?;
                let p = success_probability(design, theta, se);
                let d = p - *shift.get_or_insert(p);
                sum += d;
                sum_sq += d * d;
            }
            let nf = n as f64;
            let mean = shift.unwrap_or(0.0) + sum / nf;
            let var = ((sum_sq - sum * sum / nf) / (nf - 1.0)).max(0.0);
            Ok(AssuranceResult { estimate: mean, mc_se: (var / nf).sqrt(), method, n, seed: Some(seed) })
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssuranceCurvePoint {
    pub size: u64,
    pub estimate: f64,
    pub mc_se: f64,
}

/// Assurance across sample sizes; Monte Carlo uses the same seed (common
/// random numbers) at every size.
pub fn assurance_curve(
    prior: &PriorSpec,
    design: &TrialDesign,
    sizes: &[u64],
    method: AssuranceMethod,
    n: usize,
    seed: u64,
) -> Result<Vec<AssuranceCurvePoint>> {
    if sizes.is_empty() {
        return Err(Error::Design("no sample sizes given".into()));
    }
    sizes
        .iter()
        .map(|&size| {
            let r = assurance(prior, &design.with_size(size), method, n, seed)?;
            Ok(AssuranceCurvePoint { size, estimate: r.estimate, mc_se: r.mc_se })
        })
        .collect()
}

pub fn curve_to_csv(points: &[AssuranceCurvePoint]) -> String {
    let mut s = String::from("size,estimate,mc_se\n");
    for p in points {
        s.push_str(&format!("{},{},{}\n", p.size, p.estimate, p.mc_se));
    }
    s
}

/// Interim and final z statistics for one simulated trial with standardized
/// drift `drift` (expected final z) and interim information fraction `f`.
pub fn simulate_trial_z<R: Rng + ?Sized>(drift: f64, f: f64, rng: &mut R) -> (f64, f64) {
    let z1: f64 = rng.sample(StandardNormal);
    let z2: f64 = rng.sample(StandardNormal);
    let interim = drift * f.sqrt() + z1;
    let final_z = drift + f.sqrt() * z1 + (1.0 - f).sqrt() * z2;
    (interim, final_z)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Proportion {
    pub estimate: Option<f64>,
    pub mc_se: Option<f64>,
    /// Simulated trials in the conditioning set.
    pub n: usize,
}

impl Proportion {
    fn from_counts(hits: usize, n: usize) -> Self {
        if n == 0 {
            return Proportion { estimate: None, mc_se: None, n };
        }
        let p = hits as f64 / n as f64;
        Proportion { estimate: Some(p), mc_se: Some((p * (1.0 - p) / n as f64).sqrt()), n }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatingCharacteristics {
    pub sims: usize,
    pub seed: u64,
    pub p_go: Proportion,
    pub p_stop_interim: Proportion,
    /// P(go | true effect at least the MCID, or favourable when no MCID).
    pub p_correct_go: Proportion,
    /// P(no go | true effect below that threshold).
    pub p_correct_no_go: Proportion,
}

impl OperatingCharacteristics {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("quantity,estimate,mc_se,n\n");
        for (name, p) in [
            ("p_go", self.p_go),
            ("p_stop_interim", self.p_stop_interim),
            ("p_correct_go", self.p_correct_go),
            ("p_correct_no_go", self.p_correct_no_go),
        ] {
            let fmt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
            s.push_str(&format!("{name},{},{},{}\n", fmt(p.estimate), fmt(p.mc_se), p.n));
        }
        s
    }
}

/// Per-trial outcome of the decision rules.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrialOutcome {
    pub stopped: bool,
    pub go: bool,
    pub relevant: bool,
}

/// Simulate effect ~ prior, then interim and final statistics, and apply the
/// futility and success rules. Returns per-trial outcomes in order.
pub fn simulate_decisions(
    prior: &PriorSpec,
    design: &TrialDesign,
    sims: usize,
    seed: u64,
) -> Result<Vec<TrialOutcome>> {
    design.validate()?;
    prior.check_compatible(design)?;
    if design.futility.is_none() && design.mcid.is_none() {
        return Err(Error::Design(
            "operating characteristics need a futility rule or an MCID success threshold".into(),
        ));
    }
    if sims < MIN_OC_SIMS {
        return Err(Error::Design(format!("at least {MIN_OC_SIMS} simulations are required, got {sims}")));
    }
    let mut sampler = EffectSampler::new(prior, seed);
    let mut trial_rng = stream_rng(seed, 2);
    let z_crit = design.z_crit();
    let mcid = design.oriented_mcid();
    let f = design.futility.map_or(0.5, |f| f.information_fraction);
    let mut out = Vec::with_capacity(sims);
    for _ in 0..sims {
        let (theta, se) = sampler.next(design)?;
        let (z_interim, z_final) = simulate_trial_z(theta / se, f, &mut trial_rng);
        let stopped = design.futility.and_then(|fu| fu.z_threshold).is_some_and(|thr| z_interim < thr);
        let estimate = z_final * se;
        let go = !stopped && z_final >= z_crit && mcid.is_none_or(|m| estimate >= m);
        let relevant = match mcid {
            Some(m) => theta >= m,
            None => theta > 0.0,
        };
        out.push(TrialOutcome { stopped, go, relevant });
    }
    Ok(out)
}

pub fn operating_characteristics(
    prior: &PriorSpec,
    design: &TrialDesign,
    sims: usize,
    seed: u64,
) -> Result<OperatingCharacteristics> {
    let trials = simulate_decisions(prior, design, sims, seed)?;
    let count = |f: &dyn Fn(&TrialOutcome) -> bool| trials.iter().filter(|t| f(t)).count();
    let n_rel = count(&|t| t.relevant);
    Ok(OperatingCharacteristics {
        sims,
        seed,
        p_go: Proportion::from_counts(count(&|t| t.go), sims),
        p_stop_interim: Proportion::from_counts(count(&|t| t.stopped), sims),
        p_correct_go: Proportion::from_counts(count(&|t| t.relevant && t.go), n_rel),
        p_correct_no_go: Proportion::from_counts(count(&|t| !t.relevant && !t.go), sims - n_rel),
    })
}
