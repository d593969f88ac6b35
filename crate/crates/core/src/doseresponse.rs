//! Dose-response curve ensembles from per-dose elicited priors.
//!
//! Each ensemble draw samples one response per elicited dose, independently
//! across doses, and refits the model by least squares. Models that are
//! linear in their parameters are solved directly; Exponential and Emax3 are
//! solved by profiling the single nonlinear parameter (a log-spaced scan
//! followed by golden-section refinement) with the linear parameters solved
//! exactly at each trial value.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dist::Distribution;
use crate::error::{Error, Result};
use crate::optim::golden_section;
use crate::rng::stream_rng;
use crate::transforms::sorted_quantile;

pub const MIN_DRAWS: usize = 100;
/// Ensembles with more failed draws than this fraction are rejected.
pub const MAX_FAILURE_FRACTION: f64 = 0.10;

/// Search range for ED50 / delta, as multiples of the largest dose.
const ED50_RANGE: (f64, f64) = (1e-3, 10.0);
const DELTA_RANGE: (f64, f64) = (0.05, 20.0);
const PROFILE_SCAN: usize = 400;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Linear,
    LogLinear,
    Quadratic,
    Exponential,
    Emax3,
}

impl ModelKind {
    pub const ALL: [ModelKind; 5] =
        [ModelKind::Linear, ModelKind::LogLinear, ModelKind::Quadratic, ModelKind::Exponential, ModelKind::Emax3];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Linear => "linear",
            ModelKind::LogLinear => "log_linear",
            ModelKind::Quadratic => "quadratic",
            ModelKind::Exponential => "exponential",
            ModelKind::Emax3 => "emax3",
        }
    }

    /// Parameters estimated per draw (the log-linear offset is fixed).
    pub fn n_free(self) -> usize {
        match self {
            ModelKind::Linear | ModelKind::LogLinear => 2,
            ModelKind::Quadratic | ModelKind::Exponential | ModelKind::Emax3 => 3,
        }
    }

    pub fn param_names(self) -> &'static [&'static str] {
        match self {
            ModelKind::Linear => &["e0", "slope"],
            ModelKind::LogLinear => &["e0", "slope", "offset"],
            ModelKind::Quadratic => &["e0", "b1", "b2"],
            ModelKind::Exponential => &["e0", "e1", "delta"],
            ModelKind::Emax3 => &["e0", "emax", "ed50"],
        }
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(ModelKind::Linear),
            "log_linear" | "loglinear" => Ok(ModelKind::LogLinear),
            "quadratic" => Ok(ModelKind::Quadratic),
            "exponential" => Ok(ModelKind::Exponential),
            "emax3" | "emax" => Ok(ModelKind::Emax3),
            other => Err(Error::Model(format!("unknown dose-response model '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DoseResponseModel {
    Linear { e0: f64, slope: f64 },
    LogLinear { e0: f64, slope: f64, offset: f64 },
    Quadratic { e0: f64, b1: f64, b2: f64 },
    Exponential { e0: f64, e1: f64, delta: f64 },
    Emax3 { e0: f64, emax: f64, ed50: f64 },
}

impl DoseResponseModel {
    pub fn kind(&self) -> ModelKind {
        match self {
            DoseResponseModel::Linear { .. } => ModelKind::Linear,
            DoseResponseModel::LogLinear { .. } => ModelKind::LogLinear,
            DoseResponseModel::Quadratic { .. } => ModelKind::Quadratic,
            DoseResponseModel::Exponential { .. } => ModelKind::Exponential,
            DoseResponseModel::Emax3 { .. } => ModelKind::Emax3,
        }
    }

    pub fn params(&self) -> Vec<f64> {
        match *self {
            DoseResponseModel::Linear { e0, slope } => vec![e0, slope],
            DoseResponseModel::LogLinear { e0, slope, offset } => vec![e0, slope, offset],
            DoseResponseModel::Quadratic { e0, b1, b2 } => vec![e0, b1, b2],
            DoseResponseModel::Exponential { e0, e1, delta } => vec![e0, e1, delta],
            DoseResponseModel::Emax3 { e0, emax, ed50 } => vec![e0, emax, ed50],
        }
    }

    pub fn from_params(kind: ModelKind, p: &[f64]) -> Result<Self> {
        if p.len() != kind.param_names().len() {
            return Err(Error::Parameter(format!("{} takes {} parameters", kind.name(), kind.param_names().len())));
        }
        let m = match kind {
            ModelKind::Linear => DoseResponseModel::Linear { e0: p[0], slope: p[1] },
            ModelKind::LogLinear => DoseResponseModel::LogLinear { e0: p[0], slope: p[1], offset: p[2] },
            ModelKind::Quadratic => DoseResponseModel::Quadratic { e0: p[0], b1: p[1], b2: p[2] },
            ModelKind::Exponential => DoseResponseModel::Exponential { e0: p[0], e1: p[1], delta: p[2] },
            ModelKind::Emax3 => DoseResponseModel::Emax3 { e0: p[0], emax: p[1], ed50: p[2] },
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if self.params().iter().any(|v| !v.is_finite()) {
            return Err(Error::Parameter("model parameters must be finite".into()));
        }
        match *self {
            DoseResponseModel::LogLinear { offset, .. } if offset <= 0.0 => {
                Err(Error::Parameter(format!("log-linear offset must be > 0, got {offset}")))
            }
            DoseResponseModel::Exponential { delta, .. } if delta <= 0.0 => {
                Err(Error::Parameter(format!("exponential delta must be > 0, got {delta}")))
            }
            DoseResponseModel::Emax3 { ed50, .. } if ed50 <= 0.0 => {
                Err(Error::Parameter(format!("ED50 must be > 0, got {ed50}")))
            }
            _ => Ok(()),
        }
    }

    fn value(&self, d: f64) -> f64 {
        match *self {
            DoseResponseModel::Linear { e0, slope } => e0 + slope * d,
            DoseResponseModel::LogLinear { e0, slope, offset } => e0 + slope * (d + offset).ln(),
            DoseResponseModel::Quadratic { e0, b1, b2 } => e0 + b1 * d + b2 * d * d,
            DoseResponseModel::Exponential { e0, e1, delta } => e0 + e1 * (d / delta).exp_m1(),
            DoseResponseModel::Emax3 { e0, emax, ed50 } => e0 + emax * d / (ed50 + d),
        }
    }
}

pub fn eval_model(m: &DoseResponseModel, dose: f64) -> Result<f64> {
    m.validate()?;
    if !(dose.is_finite() && dose >= 0.0) {
        return Err(Error::Domain(format!("dose must be finite and >= 0, got {dose}")));
    }
    Ok(m.value(dose))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DoseElicitation {
    pub doses: Vec<f64>,
    pub per_dose_priors: Vec<Distribution>,
}

impl DoseElicitation {
    pub fn validate(&self) -> Result<()> {
        if self.doses.len() != self.per_dose_priors.len() {
            return Err(Error::Parameter("one prior per dose is required".into()));
        }
        if self.doses.is_empty() {
            return Err(Error::Parameter("no doses given".into()));
        }
        if self.doses.iter().any(|d| !(d.is_finite() && *d >= 0.0)) || !self.doses.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::Parameter("doses must be nonnegative and strictly increasing".into()));
        }
        for p in &self.per_dose_priors {
            p.validate()?;
        }
        Ok(())
    }

    /// Default log-linear offset: smallest nonzero dose divided by ten.
    pub fn default_offset(&self) -> Option<f64> {
        self.doses.iter().copied().find(|&d| d > 0.0).map(|d| d / 10.0)
    }
}

/// Least squares for `y ≈ X b` with at most a handful of columns.
fn least_squares(cols: &[Vec<f64>], y: &[f64]) -> Option<(Vec<f64>, f64)> {
    let k = cols.len();
    let mut a = vec![vec![0.0; k + 1]; k];
    for i in 0..k {
        for j in 0..k {
            a[i][j] = cols[i].iter().zip(&cols[j]).map(|(u, v)| u * v).sum();
        }
        a[i][k] = cols[i].iter().zip(y).map(|(u, v)| u * v).sum();
    }
    for c in 0..k {
        let piv = (c..k).max_by(|&r, &s| a[r][c].abs().total_cmp(&a[s][c].abs()))?;
        if a[piv][c].abs() < 1e-300 {
            return None;
        }
        a.swap(c, piv);
        let pivot = a[c].clone();
        for (r, row) in a.iter_mut().enumerate() {
            if r != c {
                let f = row[c] / pivot[c];
                for (x, p) in row[c..].iter_mut().zip(&pivot[c..]) {
                    *x -= f * p;
                }
            }
        }
    }
    let b: Vec<f64> = (0..k).map(|i| a[i][k] / a[i][i]).collect();
    if b.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let sse = y
        .iter()
        .enumerate()
        .map(|(r, &yr)| {
            let fit: f64 = (0..k).map(|i| b[i] * cols[i][r]).sum();
            (yr - fit).powi(2)
        })
        .sum();
    Some((b, sse))
}

#[derive(Debug)]
enum DrawFailure {
    Singular,
    Boundary,
}

fn fit_draw(
    kind: ModelKind,
    doses: &[f64],
    y: &[f64],
    offset: f64,
) -> std::result::Result<(Vec<f64>, f64), DrawFailure> {
    let ones = vec![1.0; doses.len()];
    let linear = |cols: Vec<Vec<f64>>| least_squares(&cols, y).ok_or(DrawFailure::Singular);
    match kind {
        ModelKind::Linear => linear(vec![ones, doses.to_vec()]),
        ModelKind::LogLinear => {
            let (b, sse) = linear(vec![ones, doses.iter().map(|d| (d + offset).ln()).collect()])?;
            Ok((vec![b[0], b[1], offset], sse))
        }
        ModelKind::Quadratic => linear(vec![ones, doses.to_vec(), doses.iter().map(|d| d * d).collect()]),
        ModelKind::Exponential | ModelKind::Emax3 => {
            let dmax = doses.iter().copied().fold(0.0, f64::max);
            let (lo_mult, hi_mult) = if kind == ModelKind::Emax3 { ED50_RANGE } else { DELTA_RANGE };
            let (lo, hi) = ((lo_mult * dmax).ln(), (hi_mult * dmax).ln());
            let basis = |theta: f64| -> Vec<f64> {
                doses
                    .iter()
                    .map(|&d| if kind == ModelKind::Emax3 { d / (theta + d) } else { (d / theta).exp_m1() })
                    .collect()
            };
            let profile = |log_theta: f64| -> f64 {
                least_squares(&[ones.clone(), basis(log_theta.exp())], y).map_or(f64::INFINITY, |r| r.1)
            };
            let step = (hi - lo) / (PROFILE_SCAN - 1) as f64;
            let (best_i, _) = (0..PROFILE_SCAN)
                .map(|i| (i, profile(lo + i as f64 * step)))
                .fold((0, f64::INFINITY), |acc, (i, v)| if v < acc.1 { (i, v) } else { acc });
            let a = lo + best_i.saturating_sub(1) as f64 * step;
            let b = lo + (best_i + 1).min(PROFILE_SCAN - 1) as f64 * step;
            let (log_theta, _) = golden_section(profile, a, b, 1e-13);
            let span = hi - lo;
            if (log_theta - lo) < 1e-6 * span || (hi - log_theta) < 1e-6 * span {
                return Err(DrawFailure::Boundary);
            }
            let theta = log_theta.exp();
            let (lin, sse) = linear(vec![ones.clone(), basis(theta)])?;
            Ok((vec![lin[0], lin[1], theta], sse))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveEnsemble {
    pub kind: ModelKind,
    pub seed: u64,
    pub draws_requested: usize,
    pub doses: Vec<f64>,
    /// Fixed log-linear offset, when the model uses one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub offset: Option<f64>,
    /// One row per successful draw, columns in `kind.param_names()` order.
    pub params: Vec<Vec<f64>>,
    pub sse: Vec<f64>,
    pub failed_singular: usize,
    pub failed_boundary: usize,
}

impl CurveEnsemble {
    pub fn failures(&self) -> usize {
        self.failed_singular + self.failed_boundary
    }

    pub fn models(&self) -> impl Iterator<Item = DoseResponseModel> + '_ {
        self.params
            .iter()
            .map(|p| DoseResponseModel::from_params(self.kind, p).expect("ensemble draws satisfy constraints"))
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("draw");
        for n in self.kind.param_names() {
            out.push(',');
            out.push_str(n);
        }
        out.push_str(",sse\n");
        for (i, (p, s)) in self.params.iter().zip(&self.sse).enumerate() {
            let _ = write!(out, "{i}");
            for v in p {
                let _ = write!(out, ",{v}");
            }
            let _ = writeln!(out, ",{s}");
        }
        out
    }
}

/// Sample-then-refit ensemble for one model kind.
pub fn fit_ensemble(e: &DoseElicitation, kind: ModelKind, draws: usize, seed: u64) -> Result<CurveEnsemble> {
    e.validate()?;
    if e.doses.len() < kind.n_free() {
        return Err(Error::Model(format!(
            "{} needs at least {} doses, got {}",
            kind.name(),
            kind.n_free(),
            e.doses.len()
        )));
    }
    if draws < MIN_DRAWS {
        return Err(Error::Domain(format!("at least {MIN_DRAWS} draws are required, got {draws}")));
    }
    let offset = match kind {
        ModelKind::LogLinear => {
            Some(e.default_offset().ok_or_else(|| Error::Model("log-linear model needs a nonzero dose".into()))?)
        }
        _ => None,
    };
    let results: Vec<std::result::Result<(Vec<f64>, f64), DrawFailure>> = (0..draws)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream_rng(seed, i as u64);
            let y: Vec<f64> = e.per_dose_priors.iter().map(|p| p.draw(&mut rng)).collect();
            fit_draw(kind, &e.doses, &y, offset.unwrap_or(1.0))
        })
        .collect();
    let mut ens = CurveEnsemble {
        kind,
        seed,
        draws_requested: draws,
        doses: e.doses.clone(),
        offset,
        params: Vec::with_capacity(draws),
        sse: Vec::with_capacity(draws),
        failed_singular: 0,
        failed_boundary: 0,
    };
    for r in results {
        match r {
            Ok((p, s)) => {
                ens.params.push(p);
                ens.sse.push(s);
            }
            Err(DrawFailure::Singular) => ens.failed_singular += 1,
            Err(DrawFailure::Boundary) => ens.failed_boundary += 1,
        }
    }
    let frac = ens.failures() as f64 / draws as f64;
    if frac > MAX_FAILURE_FRACTION {
        return Err(Error::Fit(format!(
            "{:.1}% of {} draws failed ({} singular, {} at a parameter bound)",
            100.0 * frac,
            kind.name(),
            ens.failed_singular,
            ens.failed_boundary
        )));
    }
    Ok(ens)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveBands {
    pub kind: ModelKind,
    pub levels: (f64, f64),
    pub doses: Vec<f64>,
    pub lower: Vec<f64>,
    pub median: Vec<f64>,
    pub upper: Vec<f64>,
}

impl CurveBands {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("dose,lower,median,upper\n");
        for i in 0..self.doses.len() {
            let _ = writeln!(out, "{},{},{},{}", self.doses[i], self.lower[i], self.median[i], self.upper[i]);
        }
        out
    }
}

/// Pointwise quantile bands of the ensemble's curves over a dose grid.
pub fn bands(ens: &CurveEnsemble, grid: &[f64], levels: (f64, f64)) -> Result<CurveBands> {
    if ens.params.is_empty() {
        return Err(Error::Domain("ensemble has no successful draws".into()));
    }
    if grid.is_empty() || grid.iter().any(|d| !(d.is_finite() && *d >= 0.0)) {
        return Err(Error::Domain("dose grid must be non-empty with finite nonnegative doses".into()));
    }
    let (lo, hi) = levels;
    if !(lo > 0.0 && lo < hi && hi < 1.0) {
        return Err(Error::Domain(format!("band levels must satisfy 0 < lower < upper < 1, got {levels:?}")));
    }
    let models: Vec<DoseResponseModel> = ens.models().collect();
    let mut out = CurveBands {
        kind: ens.kind,
        levels,
        doses: grid.to_vec(),
        lower: Vec::with_capacity(grid.len()),
        median: Vec::with_capacity(grid.len()),
        upper: Vec::with_capacity(grid.len()),
    };
    for &d in grid {
        let mut ys: Vec<f64> = models.iter().map(|m| m.value(d)).collect();
        ys.sort_by(f64::total_cmp);
        out.lower.push(sorted_quantile(&ys, lo));
        out.median.push(sorted_quantile(&ys, 0.5));
        out.upper.push(sorted_quantile(&ys, hi));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamMedian {
    pub name: String,
    pub median: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSummaryRow {
    pub kind: ModelKind,
    pub draws_used: usize,
    pub failures: usize,
    pub mean_sse: f64,
    pub param_medians: Vec<ParamMedian>,
}

/// Side-by-side summary of ensembles. No model is singled out; choosing one
/// is left to the experts.
pub fn ensemble_summary(ensembles: &[CurveEnsemble]) -> Result<Vec<EnsembleSummaryRow>> {
    if ensembles.is_empty() {
        return Err(Error::Domain("no ensembles to summarise".into()));
    }
    Ok(ensembles
        .iter()
        .map(|e| {
            let n = e.params.len();
            let mean_sse = if n == 0 { f64::NAN } else { e.sse.iter().sum::<f64>() / n as f64 };
            let param_medians = e
                .kind
                .param_names()
                .iter()
                .enumerate()
                .map(|(j, name)| {
                    let mut col: Vec<f64> = e.params.iter().map(|p| p[j]).collect();
                    col.sort_by(f64::total_cmp);
                    ParamMedian {
                        name: name.to_string(),
                        median: if n == 0 { f64::NAN } else { sorted_quantile(&col, 0.5) },
                    }
                })
                .collect();
            EnsembleSummaryRow { kind: e.kind, draws_used: n, failures: e.failures(), mean_sse, param_medians }
        })
        .collect())
}
