//! Raw expert judgements and their conversion to CDF fitting targets.

use serde::{Deserialize, Serialize};

use crate::dist::Interval;
use crate::error::{Error, Result};

/// Cumulative probability assigned to the last roulette bin edge when fitting.
/// Families with unbounded support never reach a CDF of exactly one.
pub const ROULETTE_FINAL_CAP: f64 = 0.999;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CdfTarget {
    pub x: f64,
    pub p: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuartileJudgement {
    pub q25: f64,
    pub q50: f64,
    pub q75: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plausible_lower: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plausible_upper: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RouletteGrid {
    pub bin_edges: Vec<f64>,
    pub chips: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbabilityJudgement {
    pub thresholds: Vec<f64>,
    pub probs: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Quartile,
    Roulette,
    Probability,
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "quartile" => Ok(Method::Quartile),
            "roulette" => Ok(Method::Roulette),
            "probability" => Ok(Method::Probability),
            other => Err(Error::Judgement(format!("unknown elicitation method '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum Judgement {
    Quartile(QuartileJudgement),
    Roulette(RouletteGrid),
    Probability(ProbabilityJudgement),
}

fn all_finite(xs: &[f64]) -> bool {
    xs.iter().all(|x| x.is_finite())
}

fn strictly_increasing(xs: &[f64]) -> bool {
    xs.windows(2).all(|w| w[0] < w[1])
}

impl QuartileJudgement {
    pub fn new(q25: f64, q50: f64, q75: f64) -> Self {
        QuartileJudgement { q25, q50, q75, plausible_lower: None, plausible_upper: None }
    }

    pub fn validate(&self) -> Result<()> {
        let mut chain = vec![];
        chain.extend(self.plausible_lower);
        chain.extend([self.q25, self.q50, self.q75]);
        chain.extend(self.plausible_upper);
        if !all_finite(&chain) {
            return Err(Error::Judgement("quartile values must be finite".into()));
        }
        if !strictly_increasing(&chain) {
            return Err(Error::Judgement(format!(
                "quartiles must satisfy lower < q25 < q50 < q75 < upper, got {chain:?}"
            )));
        }
        Ok(())
    }

    /// Plausible range as a fitting support, when both ends were given.
    pub fn plausible_support(&self) -> Option<Interval> {
        match (self.plausible_lower, self.plausible_upper) {
            (None, None) => None,
            (lo, hi) => Some(Interval { lower: lo.unwrap_or(f64::NEG_INFINITY), upper: hi.unwrap_or(f64::INFINITY) }),
        }
    }

    pub fn to_targets(&self) -> Result<Vec<CdfTarget>> {
        self.validate()?;
        Ok(vec![
            CdfTarget { x: self.q25, p: 0.25 },
            CdfTarget { x: self.q50, p: 0.5 },
            CdfTarget { x: self.q75, p: 0.75 },
        ])
    }
}

impl RouletteGrid {
    pub fn validate(&self) -> Result<()> {
        if self.bin_edges.len() < 2 {
            return Err(Error::Judgement("roulette grid needs at least one bin".into()));
        }
        if self.chips.len() + 1 != self.bin_edges.len() {
            return Err(Error::Judgement(format!(
                "{} bin edges need {} chip counts, got {}",
                self.bin_edges.len(),
                self.bin_edges.len() - 1,
                self.chips.len()
            )));
        }
        if !all_finite(&self.bin_edges) || !strictly_increasing(&self.bin_edges) {
            return Err(Error::Judgement("bin edges must be finite and strictly increasing".into()));
        }
        if self.total_chips() == 0 {
            return Err(Error::Judgement("insufficient spread: no chips placed".into()));
        }
        if self.chips.iter().filter(|&&c| c > 0).count() < 2 {
            return Err(Error::Judgement("insufficient spread: at least two bins must hold chips".into()));
        }
        Ok(())
    }

    pub fn total_chips(&self) -> u64 {
        self.chips.iter().map(|&c| c as u64).sum()
    }

    pub fn to_targets(&self) -> Result<Vec<CdfTarget>> {
        self.validate()?;
        let total = self.total_chips() as f64;
        let mut cum = 0u64;
        let mut out = Vec::new();
        for (k, &c) in self.chips.iter().enumerate() {
            cum += c as u64;
            if cum == 0 {
                continue;
            }
            let p = cum as f64 / total;
            let edge = self.bin_edges[k + 1];
            if p >= 1.0 {
                out.push(CdfTarget { x: edge, p: ROULETTE_FINAL_CAP });
                break;
            }
            // Empty bins repeat the cumulative probability; keep targets strictly increasing in p.
            if out.last().is_some_and(|t: &CdfTarget| t.p == p) {
                continue;
            }
            out.push(CdfTarget { x: edge, p });
        }
        Ok(out)
    }
}

impl ProbabilityJudgement {
    pub fn validate(&self) -> Result<()> {
        if self.thresholds.len() != self.probs.len() {
            return Err(Error::Judgement("thresholds and probabilities differ in length".into()));
        }
        if self.thresholds.len() < 2 {
            return Err(Error::Judgement("at least two thresholds are required".into()));
        }
        if !all_finite(&self.thresholds) || !strictly_increasing(&self.thresholds) {
            return Err(Error::Judgement("thresholds must be strictly increasing".into()));
        }
        if !self.probs.iter().all(|&p| p > 0.0 && p < 1.0) {
            return Err(Error::Judgement("probabilities must lie in (0,1)".into()));
        }
        if !strictly_increasing(&self.probs) {
            return Err(Error::Judgement("probabilities must be strictly increasing".into()));
        }
        Ok(())
    }

    pub fn to_targets(&self) -> Result<Vec<CdfTarget>> {
        self.validate()?;
        Ok(self.thresholds.iter().zip(&self.probs).map(|(&x, &p)| CdfTarget { x, p }).collect())
    }
}

impl Judgement {
    pub fn method(&self) -> Method {
        match self {
            Judgement::Quartile(_) => Method::Quartile,
            Judgement::Roulette(_) => Method::Roulette,
            Judgement::Probability(_) => Method::Probability,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Judgement::Quartile(j) => j.validate(),
            Judgement::Roulette(g) => g.validate(),
            Judgement::Probability(j) => j.validate(),
        }
    }

    pub fn to_targets(&self) -> Result<Vec<CdfTarget>> {
        match self {
            Judgement::Quartile(j) => j.to_targets(),
            Judgement::Roulette(g) => g.to_targets(),
            Judgement::Probability(j) => j.to_targets(),
        }
    }

    /// Support implied by the judgement itself (quartile plausible range or
    /// the outer roulette edges are not imposed; only explicit bounds are).
    pub fn implied_support(&self) -> Option<Interval> {
        match self {
            Judgement::Quartile(j) => j.plausible_support(),
            _ => None,
        }
    }
}

pub fn quartiles_to_targets(j: &QuartileJudgement) -> Result<Vec<CdfTarget>> {
    j.to_targets()
}

pub fn roulette_to_targets(g: &RouletteGrid) -> Result<Vec<CdfTarget>> {
    g.to_targets()
}

pub fn probabilities_to_targets(j: &ProbabilityJudgement) -> Result<Vec<CdfTarget>> {
    j.to_targets()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn xp(ts: &[CdfTarget]) -> Vec<(f64, f64)> {
        ts.iter().map(|t| (t.x, t.p)).collect()
    }

    #[test]
    fn quartile_mapping() {
        let t = quartiles_to_targets(&QuartileJudgement::new(10.0, 20.0, 30.0)).unwrap();
        assert_eq!(xp(&t), vec![(10.0, 0.25), (20.0, 0.5), (30.0, 0.75)]);
    }

    #[test]
    fn quartile_bounds_are_not_targets() {
        let j = QuartileJudgement {
            plausible_lower: Some(0.0),
            plausible_upper: Some(50.0),
            ..QuartileJudgement::new(10.0, 20.0, 30.0)
        };
        assert_eq!(j.to_targets().unwrap().len(), 3);
        assert_eq!(j.plausible_support(), Some(Interval { lower: 0.0, upper: 50.0 }));
    }

    #[test]
    fn quartile_monotonicity_violation() {
        assert!(matches!(quartiles_to_targets(&QuartileJudgement::new(1.0, 1.0, 2.0)), Err(Error::Judgement(_))));
        let j = QuartileJudgement { plausible_lower: Some(15.0), ..QuartileJudgement::new(10.0, 20.0, 30.0) };
        assert!(matches!(j.to_targets(), Err(Error::Judgement(_))));
    }

    #[test]
    fn roulette_mapping_caps_final_point() {
        let g = RouletteGrid { bin_edges: vec![0.0, 1.0, 2.0, 3.0, 4.0], chips: vec![1, 3, 4, 2] };
        let t = roulette_to_targets(&g).unwrap();
        assert_eq!(xp(&t), vec![(1.0, 0.1), (2.0, 0.4), (3.0, 0.8), (4.0, 0.999)]);
    }

    #[test]
    fn roulette_skips_leading_and_trailing_empty_bins() {
        let g = RouletteGrid { bin_edges: vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0], chips: vec![0, 2, 0, 2, 0] };
        let t = roulette_to_targets(&g).unwrap();
        assert_eq!(xp(&t), vec![(2.0, 0.5), (4.0, 0.999)]);
    }

    #[test]
    fn roulette_insufficient_spread() {
        let one = RouletteGrid { bin_edges: vec![0.0, 1.0, 2.0, 3.0, 4.0], chips: vec![10, 0, 0, 0] };
        assert!(matches!(roulette_to_targets(&one), Err(Error::Judgement(m)) if m.contains("insufficient spread")));
        let none = RouletteGrid { bin_edges: vec![0.0, 1.0, 2.0, 3.0, 4.0], chips: vec![0, 0, 0, 0] };
        assert!(matches!(roulette_to_targets(&none), Err(Error::Judgement(_))));
    }

    #[test]
    fn roulette_shape_errors() {
        let g = RouletteGrid { bin_edges: vec![0.0, 1.0, 1.0], chips: vec![1, 1] };
        assert!(g.to_targets().is_err());
        let g = RouletteGrid { bin_edges: vec![0.0, 1.0, 2.0], chips: vec![1, 1, 1] };
        assert!(g.to_targets().is_err());
    }

    #[test]
    fn probability_mapping_and_errors() {
        let j = ProbabilityJudgement { thresholds: vec![0.0, 5.0, 10.0], probs: vec![0.1, 0.5, 0.9] };
        assert_eq!(xp(&probabilities_to_targets(&j).unwrap()), vec![(0.0, 0.1), (5.0, 0.5), (10.0, 0.9)]);
        let j = ProbabilityJudgement { thresholds: vec![0.0, 5.0], probs: vec![0.5, 0.4] };
        assert!(matches!(j.to_targets(), Err(Error::Judgement(_))));
        let j = ProbabilityJudgement { thresholds: vec![3.0, 3.0, 5.0], probs: vec![0.1, 0.5, 0.9] };
        assert!(matches!(j.to_targets(), Err(Error::Judgement(_))));
    }

    #[test]
    fn judgement_json_is_tagged_by_method() {
        let j: Judgement = serde_json::from_str(r#"{"method":"roulette","bin_edges":[0,1,2],"chips":[1,1]}"#).unwrap();
        assert_eq!(j.method(), Method::Roulette);
    }

    proptest! {
        #[test]
        fn roulette_targets_strictly_increasing(chips in proptest::collection::vec(0u32..20, 2..12)) {
            let edges: Vec<f64> = (0..=chips.len()).map(|i| i as f64).collect();
            let g = RouletteGrid { bin_edges: edges, chips };
            if let Ok(ts) = g.to_targets() {
                prop_assert!(ts.len() >= 2);
                for w in ts.windows(2) {
                    prop_assert!(w[0].x < w[1].x && w[0].p < w[1].p);
                }
                prop_assert!(ts.iter().all(|t| t.p > 0.0 && t.p < 1.0));
            }
        }
    }
}
