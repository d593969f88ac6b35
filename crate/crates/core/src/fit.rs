//! Least-squares fitting of distribution families to CDF targets.
//!
//! The objective is `Σ (F(xᵢ) − pᵢ)²` over the targets. Positive parameters
//! are optimised on the log scale so the search is unconstrained, and the
//! simplex starts from a normal-scores regression of the target points.

use serde::{Deserialize, Serialize};

use crate::dist::{normal_quantile, Distribution, Family, Interval};
use crate::error::{Error, Result};
use crate::judgement::{CdfTarget, Judgement, ROULETTE_FINAL_CAP};
use crate::optim::{nelder_mead, NelderMeadOptions};

/// StudentT degrees of freedom never fall below this during fitting.
pub const STUDENT_T_MIN_DF: f64 = 3.0;

/// Two SSE values closer than this are ranked as a tie.
pub const SSE_TIE_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub distribution: Distribution,
    pub sse: f64,
    pub targets_used: Vec<CdfTarget>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejectedFamily {
    pub family: Family,
    pub code: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedFits {
    /// Ascending by SSE.
    pub fits: Vec<FitResult>,
    #[serde(default)]
    pub rejected: Vec<RejectedFamily>,
}

impl RankedFits {
    pub fn best(&self) -> &FitResult {
        &self.fits[0]
    }
}

pub fn sse(dist: &Distribution, targets: &[CdfTarget]) -> f64 {
    targets.iter().map(|t| (dist.cdf(t.x) - t.p).powi(2)).sum()
}

fn check_targets(targets: &[CdfTarget]) -> Result<()> {
    if targets.len() < 2 {
        return Err(Error::Fit(format!("at least two targets are required, got {}", targets.len())));
    }
    if targets.iter().any(|t| !t.x.is_finite() || !(t.p > 0.0 && t.p < 1.0)) {
        return Err(Error::Fit("targets need finite x and p in (0,1)".into()));
    }
    if !targets.windows(2).all(|w| w[0].x < w[1].x && w[0].p < w[1].p) {
        return Err(Error::Fit("targets must be strictly increasing in both x and p (degenerate spread)".into()));
    }
    Ok(())
}

/// Normal-scores regression of x on Φ⁻¹(p): returns (location, scale).
fn scores_regression(xs: &[f64], ps: &[f64]) -> (f64, f64) {
    let zs: Vec<f64> = ps.iter().map(|&p| normal_quantile(p)).collect();
    let n = xs.len() as f64;
    let zbar = zs.iter().sum::<f64>() / n;
    let xbar = xs.iter().sum::<f64>() / n;
    let szz: f64 = zs.iter().map(|z| (z - zbar).powi(2)).sum();
    let szx: f64 = zs.iter().zip(xs).map(|(z, x)| (z - zbar) * (x - xbar)).sum();
    let slope = (szx / szz).max(1e-12);
    (xbar - slope * zbar, slope)
}

struct Problem {
    family: Family,
    /// Fixed shift (LogNormal/Gamma) or bounds (ScaledBeta).
    lower: f64,
    upper: f64,
    starts: Vec<Vec<f64>>,
    step: Vec<f64>,
}

impl Problem {
    fn decode(&self, th: &[f64]) -> Option<Distribution> {
        let d = match self.family {
            Family::Normal => Distribution::Normal { mean: th[0], sd: th[1].exp() },
            Family::StudentT => {
                Distribution::StudentT { location: th[0], scale: th[1].exp(), df: STUDENT_T_MIN_DF + th[2].exp() }
            }
            Family::LogNormal => Distribution::LogNormal { meanlog: th[0], sdlog: th[1].exp(), shift: self.lower },
            Family::Gamma => Distribution::Gamma { shape: th[0].exp(), rate: th[1].exp(), shift: self.lower },
            Family::Beta => Distribution::Beta { a: th[0].exp(), b: th[1].exp() },
            Family::ScaledBeta => {
                Distribution::ScaledBeta { a: th[0].exp(), b: th[1].exp(), lower: self.lower, upper: self.upper }
            }
            Family::Point => return None,
        };
        d.validate().ok().map(|_| d)
    }
}

fn unit_beta_start(ys: &[f64], ps: &[f64]) -> Vec<f64> {
    let (m, s) = scores_regression(ys, ps);
    let m = m.clamp(0.02, 0.98);
    let v = (s * s).min(0.9 * m * (1.0 - m)).max(1e-8);
    let k = m * (1.0 - m) / v - 1.0;
    let (a, b) = ((m * k).max(1e-3), ((1.0 - m) * k).max(1e-3));
    vec![a.ln(), b.ln()]
}

fn problem(targets: &[CdfTarget], family: Family, support: Option<Interval>) -> Result<Problem> {
    let xs: Vec<f64> = targets.iter().map(|t| t.x).collect();
    let ps: Vec<f64> = targets.iter().map(|t| t.p).collect();
    let (loc, scale) = scores_regression(&xs, &ps);
    let outside = |lo: f64, hi: f64| xs.iter().any(|&x| !(x > lo && x < hi));
    match family {
        Family::Normal => Ok(Problem {
            family,
            lower: f64::NEG_INFINITY,
            upper: f64::INFINITY,
            starts: vec![vec![loc, scale.ln()]],
            step: vec![0.5 * scale, 0.5],
        }),
        Family::StudentT => Ok(Problem {
            family,
            lower: f64::NEG_INFINITY,
            upper: f64::INFINITY,
            starts: vec![
                vec![loc, scale.ln(), (30.0f64 - STUDENT_T_MIN_DF).ln()],
                vec![loc, (0.8 * scale).ln(), (5.0f64 - STUDENT_T_MIN_DF).ln()],
            ],
            step: vec![0.5 * scale, 0.5, 1.0],
        }),
        Family::LogNormal | Family::Gamma => {
            let shift = support.map(|s| s.lower).filter(|l| l.is_finite()).unwrap_or(0.0);
            if outside(shift, f64::INFINITY) {
                return Err(Error::Support(format!(
                    "{family} support is ({shift}, inf) but targets include x <= {shift}"
                )));
            }
            let ys: Vec<f64> = xs.iter().map(|x| x - shift).collect();
            let start = if family == Family::LogNormal {
                let lys: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
                let (m, s) = scores_regression(&lys, &ps);
                vec![m, s.ln()]
            } else {
                let (m, s) = scores_regression(&ys, &ps);
                let m = m.max(ys[0].min(ys[ys.len() - 1]) * 0.5).max(1e-8);
                let shape = (m / s).powi(2).clamp(1e-3, 1e6);
                vec![shape.ln(), (shape / m).ln()]
            };
            Ok(Problem { family, lower: shift, upper: f64::INFINITY, starts: vec![start], step: vec![0.5, 0.5] })
        }
        Family::Beta => {
            if outside(0.0, 1.0) {
                return Err(Error::Support("beta support is (0, 1) but targets fall outside it".into()));
            }
            Ok(Problem {
                family,
                lower: 0.0,
                upper: 1.0,
                starts: vec![unit_beta_start(&xs, &ps)],
                step: vec![0.5, 0.5],
            })
        }
        Family::ScaledBeta => {
            let sup = support.filter(Interval::is_bounded).ok_or_else(|| {
                Error::Support("scaled beta needs a bounded support (plausible lower and upper limits)".into())
            })?;
            if outside(sup.lower, sup.upper) {
                return Err(Error::Support(format!(
                    "scaled beta support is ({}, {}) but targets fall outside it",
                    sup.lower, sup.upper
                )));
            }
            let ys: Vec<f64> = xs.iter().map(|x| (x - sup.lower) / (sup.upper - sup.lower)).collect();
            Ok(Problem {
                family,
                lower: sup.lower,
                upper: sup.upper,
                starts: vec![unit_beta_start(&ys, &ps)],
                step: vec![0.5, 0.5],
            })
        }
        Family::Point => Err(Error::Fit("point masses are not fitted".into())),
    }
}

/// Fit one family to the targets by least squares on CDF probabilities.
pub fn fit(targets: &[CdfTarget], family: Family, support: Option<Interval>) -> Result<FitResult> {
    check_targets(targets)?;
    let prob = problem(targets, family, support)?;
    let objective = |th: &[f64]| match prob.decode(th) {
        Some(d) => sse(&d, targets),
        None => f64::INFINITY,
    };
    let mut best: Option<crate::optim::Minimum> = None;
    for start in &prob.starts {
        let m = nelder_mead(objective, start, &prob.step, NelderMeadOptions::default());
        if best.as_ref().is_none_or(|b| m.value < b.value) {
            best = Some(m);
        }
    }
    let best = best.expect("at least one start");
    if !best.value.is_finite() || !best.converged {
        return Err(Error::Fit(format!("{family} fit did not converge (objective {})", best.value)));
    }
    let distribution =
        prob.decode(&best.x).ok_or_else(|| Error::Fit(format!("{family} fit ended at invalid parameters")))?;
    let mut notes = Vec::new();
    if let Distribution::StudentT { df, .. } = distribution {
        if df - STUDENT_T_MIN_DF < 1e-6 {
            notes.push(format!("degrees of freedom held at the floor of {STUDENT_T_MIN_DF}"));
        }
    }
    Ok(FitResult { sse: sse(&distribution, targets), distribution, targets_used: targets.to_vec(), notes })
}

fn rank_key(a: &FitResult, b: &FitResult) -> std::cmp::Ordering {
    let (fa, fb) = (a.distribution.family(), b.distribution.family());
    if (a.sse - b.sse).abs() <= SSE_TIE_TOLERANCE {
        fa.n_params().cmp(&fb.n_params()).then(fa.order().cmp(&fb.order()))
    } else {
        a.sse.total_cmp(&b.sse)
    }
}

/// Fit every requested family and rank the feasible ones by SSE.
pub fn fit_best(targets: &[CdfTarget], families: &[Family], support: Option<Interval>) -> Result<RankedFits> {
    check_targets(targets)?;
    let mut fams: Vec<Family> = families.to_vec();
    fams.sort_by_key(|f| f.order());
    fams.dedup();
    let mut fits = Vec::new();
    let mut rejected = Vec::new();
    for fam in fams {
        match fit(targets, fam, support) {
            Ok(r) => fits.push(r),
            Err(e) => rejected.push(RejectedFamily { family: fam, code: e.code().into(), reason: e.message().into() }),
        }
    }
    if fits.is_empty() {
        let why: Vec<String> = rejected.iter().map(|r| format!("{}: {}", r.family, r.reason)).collect();
        return Err(Error::Fit(format!("no feasible family ({})", why.join("; "))));
    }
    // Insertion sort keeps the comparator's tie rule stable and total.
    let mut ranked: Vec<FitResult> = Vec::with_capacity(fits.len());
    for f in fits {
        let pos = ranked.iter().position(|r| rank_key(&f, r) == std::cmp::Ordering::Less).unwrap_or(ranked.len());
        ranked.insert(pos, f);
    }
    Ok(RankedFits { fits: ranked, rejected })
}

/// Convert a judgement to targets, then rank the families. Roulette caps and
/// quartile plausible limits are recorded on every returned fit.
pub fn fit_judgement(judgement: &Judgement, families: &[Family], support: Option<Interval>) -> Result<RankedFits> {
    let targets = judgement.to_targets()?;
    let support = support.or_else(|| judgement.implied_support());
    let mut ranked = fit_best(&targets, families, support)?;
    let capped =
        matches!(judgement, Judgement::Roulette(_)) && targets.last().is_some_and(|t| t.p == ROULETTE_FINAL_CAP);
    for f in &mut ranked.fits {
        if capped {
            f.notes.push(format!("final cumulative roulette probability 1 fitted as {ROULETTE_FINAL_CAP}"));
        }
        if let Some(s) = support {
            f.notes.push(format!("support constraint ({}, {})", s.lower, s.upper));
        }
    }
    Ok(ranked)
}
