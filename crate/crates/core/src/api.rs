//! Request and response types for the stateless compute operations.
//!
//! The CLI and the HTTP service both build one of these requests and call
//! [`Compute::run`], so both front ends return identical results for
//! identical inputs.

use serde::{Deserialize, Serialize};

use crate::assurance::{
    assurance, assurance_curve, curve_to_csv, operating_characteristics, AssuranceCurvePoint, AssuranceMethod,
    AssuranceResult, OperatingCharacteristics, PriorSpec, TrialDesign,
};
use crate::dist::{Distribution, Family, Interval};
use crate::doseresponse::{
    bands, ensemble_summary, fit_ensemble, CurveBands, CurveEnsemble, DoseElicitation, EnsembleSummaryRow, ModelKind,
};
use crate::error::{Error, Result};
use crate::fit::{fit_judgement, RankedFits};
use crate::judgement::Judgement;
use crate::pooling::{active_response_mixture, linear_pool, plot_series, spike_and_smear, PlotSeries};
use crate::prior::Prior;
use crate::transforms::{
    combine_control_and_effect, hazard_ratio_point, hazard_ratio_prior, refit, EffectScale, SampleDistribution,
    SurvivalElicitation,
};

/// Parse a comma-separated list of numbers such as `10,20,30`.
pub fn parse_f64_list(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|t| {
            let t = t.trim();
            t.parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| Error::Parameter(format!("'{t}' is not a finite number")))
        })
        .collect()
}

pub trait Compute {
    type Output: Serialize;
    fn run(&self) -> Result<Self::Output>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitRequest {
    pub judgement: Judgement,
    /// Defaults to every fittable family.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub families: Option<Vec<Family>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub support: Option<Interval>,
}

impl Compute for FitRequest {
    type Output = RankedFits;

    fn run(&self) -> Result<RankedFits> {
        let families = self.families.clone().unwrap_or_else(|| Family::FITTABLE.to_vec());
        fit_judgement(&self.judgement, &families, self.support)
    }
}

pub fn fits_to_csv(r: &RankedFits) -> String {
    let mut s = String::from("rank,family,params,sse\n");
    for (i, f) in r.fits.iter().enumerate() {
        let params: Vec<String> = f.distribution.params().iter().map(|p| p.to_string()).collect();
        s.push_str(&format!("{},{},{},{}\n", i + 1, f.distribution.family().name(), params.join(";"), f.sse));
    }
    s
}

/// Ways of building a combined prior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PoolRequest {
    Linear {
        distributions: Vec<Distribution>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        weights: Option<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        grid: Option<Vec<f64>>,
    },
    SpikeAndSmear {
        conditional: Distribution,
        weight: f64,
        #[serde(default)]
        location: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        grid: Option<Vec<f64>>,
    },
    /// Control response with probability `w_no_benefit`, otherwise the
    /// conditional active response.
    ActiveResponse {
        control: Distribution,
        conditional_active: Distribution,
        w_no_benefit: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        grid: Option<Vec<f64>>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolResponse {
    pub prior: Prior,
    pub mean: f64,
    pub variance: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plot: Option<PlotSeries>,
}

impl PoolResponse {
    pub fn plot_csv(&self) -> Option<String> {
        self.plot.as_ref().map(|p| {
            let mut s = String::from("kind,x,y\n");
            for c in &p.curve {
                s.push_str(&format!("curve,{},{}\n", c.x, c.y));
            }
            for sp in &p.spikes {
                s.push_str(&format!("spike,{},{}\n", sp.location, sp.height));
            }
            s
        })
    }
}

impl Compute for PoolRequest {
    type Output = PoolResponse;

    fn run(&self) -> Result<PoolResponse> {
        let (prior, grid): (Prior, _) = match self {
            PoolRequest::Linear { distributions, weights, grid } => {
                (linear_pool(distributions, weights.as_deref())?.into(), grid)
            }
            PoolRequest::SpikeAndSmear { conditional, weight, location, grid } => {
                (spike_and_smear(*conditional, *weight, *location)?.into(), grid)
            }
            PoolRequest::ActiveResponse { control, conditional_active, w_no_benefit, grid } => {
                (active_response_mixture(*control, *conditional_active, *w_no_benefit)?.into(), grid)
            }
        };
        let plot = grid.as_ref().map(|g| plot_series(&prior, g)).transpose()?;
        Ok(PoolResponse { mean: prior.mean(), variance: prior.variance(), prior, plot })
    }
}

/// Sampling transforms onto other scales.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TransformRequest {
    ControlEffect {
        control: Distribution,
        effect: Prior,
        scale: EffectScale,
        n: usize,
        seed: u64,
        #[serde(default)]
        allow_clamp: bool,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        refit_families: Option<Vec<Family>>,
    },
    HazardRatio {
        elicitation: SurvivalElicitation,
        n: usize,
        seed: u64,
        #[serde(default)]
        allow_clamp: bool,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        refit_families: Option<Vec<Family>>,
    },
    HazardRatioPoint {
        p_control: f64,
        p_active: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TransformResponse {
    Samples {
        samples: SampleDistribution,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        refit: Option<RankedFits>,
    },
    HazardRatio {
        hazard_ratio: f64,
    },
}

impl TransformResponse {
    pub fn to_csv(&self) -> String {
        match self {
            TransformResponse::Samples { samples, .. } => samples.to_csv(),
            TransformResponse::HazardRatio { hazard_ratio } => format!("hazard_ratio\n{hazard_ratio}\n"),
        }
    }
}

impl Compute for TransformRequest {
    type Output = TransformResponse;

    fn run(&self) -> Result<TransformResponse> {
        let (samples, families) = match self {
            TransformRequest::ControlEffect { control, effect, scale, n, seed, allow_clamp, refit_families } => {
                (combine_control_and_effect(control, effect, *scale, *n, *seed, *allow_clamp)?, refit_families)
            }
            TransformRequest::HazardRatio { elicitation, n, seed, allow_clamp, refit_families } => {
                (hazard_ratio_prior(elicitation, *n, *seed, *allow_clamp)?, refit_families)
            }
            TransformRequest::HazardRatioPoint { p_control, p_active } => {
                return Ok(TransformResponse::HazardRatio { hazard_ratio: hazard_ratio_point(*p_control, *p_active)? });
            }
        };
        let refit = families.as_ref().map(|f| refit(&samples, f)).transpose()?;
        Ok(TransformResponse::Samples { samples, refit })
    }
}

fn default_levels() -> (f64, f64) {
    (0.05, 0.95)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DoseRequest {
    pub elicitation: DoseElicitation,
    pub models: Vec<ModelKind>,
    pub draws: usize,
    pub seed: u64,
    /// Dose grid for uncertainty bands; omitted means no bands.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<Vec<f64>>,
    #[serde(default = "default_levels")]
    pub levels: (f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DoseResponse {
    pub summary: Vec<EnsembleSummaryRow>,
    pub ensembles: Vec<CurveEnsemble>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub bands: Vec<CurveBands>,
}

impl DoseResponse {
    pub fn to_csv(&self) -> String {
        if self.bands.is_empty() {
            self.ensembles.iter().map(|e| e.to_csv()).collect::<Vec<_>>().join("\n")
        } else {
            let mut s = String::from("model,dose,lower,median,upper\n");
            for b in &self.bands {
                for line in b.to_csv().lines().skip(1) {
                    s.push_str(&format!("{},{line}\n", b.kind.name()));
                }
            }
            s
        }
    }
}

impl Compute for DoseRequest {
    type Output = DoseResponse;

    fn run(&self) -> Result<DoseResponse> {
        if self.models.is_empty() {
            return Err(Error::Model("no dose-response models requested".into()));
        }
        let ensembles = self
            .models
            .iter()
            .map(|&k| fit_ensemble(&self.elicitation, k, self.draws, self.seed))
            .collect::<Result<Vec<_>>>()?;
        let summary = ensemble_summary(&ensembles)?;
        let bands = match &self.grid {
            Some(g) => ensembles.iter().map(|e| bands(e, g, self.levels)).collect::<Result<Vec<_>>>()?,
            None => Vec::new(),
        };
        Ok(DoseResponse { summary, ensembles, bands })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssuranceRequest {
    pub prior: PriorSpec,
    pub design: TrialDesign,
    pub method: AssuranceMethod,
    /// Prior draws for Monte Carlo.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Also compute assurance at each of these sample sizes.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sizes: Option<Vec<u64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssuranceResponse {
    #[serde(flatten)]
    pub result: AssuranceResult,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub curve: Option<Vec<AssuranceCurvePoint>>,
}

impl AssuranceResponse {
    pub fn to_csv(&self) -> String {
        match &self.curve {
            Some(c) => curve_to_csv(c),
            None => format!("estimate,mc_se\n{},{}\n", self.result.estimate, self.result.mc_se),
        }
    }
}

impl Compute for AssuranceRequest {
    type Output = AssuranceResponse;

    fn run(&self) -> Result<AssuranceResponse> {
        let (n, seed) = match self.method {
            AssuranceMethod::Quadrature => (0, 0),
            AssuranceMethod::MonteCarlo => (
                self.n.ok_or_else(|| Error::Design("Monte Carlo assurance needs n".into()))?,
                self.seed.ok_or_else(|| Error::Design("Monte Carlo assurance needs a seed".into()))?,
            ),
        };
        let result = assurance(&self.prior, &self.design, self.method, n, seed)?;
        let curve = self
            .sizes
            .as_ref()
            .map(|s| assurance_curve(&self.prior, &self.design, s, self.method, n, seed))
            .transpose()?;
        Ok(AssuranceResponse { result, curve })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OcRequest {
    pub prior: PriorSpec,
    pub design: TrialDesign,
    pub sims: usize,
    pub seed: u64,
}

impl Compute for OcRequest {
    type Output = OperatingCharacteristics;

    fn run(&self) -> Result<OperatingCharacteristics> {
        operating_characteristics(&self.prior, &self.design, self.sims, self.seed)
    }
}

/// Serialize a response the way both front ends emit it.
pub fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("response serializes")
}
