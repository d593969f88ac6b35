//! Mathematical pooling of individual priors and bi-modal spike-and-smear
//! priors.
//!
//! The spike of a [`SpikeAndSmear`] is an exact atom: `P(X = location) = w`.
//! When plotted, the atom is drawn with height equal to its mass and the
//! continuous part is rescaled so its maximum equals its total mass `1 − w`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dist::{Distribution, Family};
use crate::error::{Error, Result};
use crate::prior::Prior;

/// Allowed deviation of mixture weights from summing to one.
pub const WEIGHT_SUM_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedComponent {
    pub weight: f64,
    pub distribution: Distribution,
}

/// Finite mixture of distributions with weights summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct Mixture {
    components: Vec<WeightedComponent>,
    // Canonical evaluation order so that sums do not depend on input order.
    order: Vec<usize>,
}

fn check_probability(name: &str, w: f64) -> Result<()> {
    if (0.0..=1.0).contains(&w) {
        Ok(())
    } else {
        Err(Error::Weight(format!("{name} must lie in [0, 1], got {w}")))
    }
}

fn canonical_order(components: &[WeightedComponent]) -> Vec<usize> {
    let key = |c: &WeightedComponent| {
        let mut k = vec![c.weight.to_bits(), c.distribution.family() as u64];
        k.extend(c.distribution.params().iter().map(|p| p.to_bits()));
        k
    };
    let mut order: Vec<usize> = (0..components.len()).collect();
    order.sort_by_key(|&i| key(&components[i]));
    order
}

impl Mixture {
    pub fn new(components: Vec<WeightedComponent>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::Weight("a mixture needs at least one component".into()));
        }
        for c in &components {
            check_probability("component weight", c.weight)?;
            c.distribution.validate()?;
        }
        let total: f64 = components.iter().map(|c| c.weight).sum();
        if (total - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
            return Err(Error::Weight(format!("weights sum to {total}, expected 1")));
        }
        let order = canonical_order(&components);
        Ok(Mixture { components, order })
    }

    pub fn components(&self) -> &[WeightedComponent] {
        &self.components
    }

    fn ordered(&self) -> impl Iterator<Item = &WeightedComponent> {
        self.order.iter().map(move |&i| &self.components[i])
    }

    pub fn pdf(&self, x: f64) -> f64 {
        self.ordered().map(|c| c.weight * c.distribution.pdf(x)).sum()
    }

    pub fn cdf(&self, x: f64) -> f64 {
        self.ordered().map(|c| c.weight * c.distribution.cdf(x)).sum::<f64>().clamp(0.0, 1.0)
    }

    pub fn mean(&self) -> f64 {
        self.ordered().map(|c| c.weight * c.distribution.mean()).sum()
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        let second: f64 =
            self.ordered().map(|c| c.weight * (c.distribution.variance() + c.distribution.mean().powi(2))).sum();
        (second - m * m).max(0.0)
    }

    /// Point-mass components as (location, mass).
    pub fn atoms(&self) -> Vec<(f64, f64)> {
        self.ordered()
            .filter_map(|c| match c.distribution {
                Distribution::Point { value } if c.weight > 0.0 => Some((value, c.weight)),
                _ => None,
            })
            .collect()
    }

    pub fn quantile(&self, p: f64) -> Result<f64> {
        let qs = self
            .ordered()
            .filter(|c| c.weight > 0.0)
            .map(|c| c.distribution.quantile(p))
            .collect::<Result<Vec<_>>>()?;
        let lo = qs.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = qs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Ok(generalized_inverse(|x| self.cdf(x), p, lo, hi))
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut chosen = &self.components[self.order[self.order.len() - 1]];
        for c in self.ordered() {
            acc += c.weight;
            if u < acc {
                chosen = c;
                break;
            }
        }
        chosen.distribution.draw(rng)
    }
}

/// Smallest x in `[lo, hi]` with `cdf(x) >= p`, by bisection.
pub(crate) fn generalized_inverse<F: Fn(f64) -> f64>(cdf: F, p: f64, mut lo: f64, mut hi: f64) -> f64 {
    if cdf(lo) >= p {
        return lo;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if cdf(mid) >= p {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Spike {
    pub location: f64,
    pub weight: f64,
}

/// Atom of mass `w` at the no-effect value mixed with a continuous prior for
/// the effect given that the treatment works.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpikeAndSmear {
    pub spike: Spike,
    pub conditional: Distribution,
}

impl SpikeAndSmear {
    pub fn weight(&self) -> f64 {
        self.spike.weight
    }

    pub fn location(&self) -> f64 {
        self.spike.location
    }

    pub fn validate(&self) -> Result<()> {
        check_probability("spike weight", self.spike.weight)?;
        if !self.spike.location.is_finite() {
            return Err(Error::Parameter("spike location must be finite".into()));
        }
        self.conditional.validate()
    }

    pub fn cdf(&self, t: f64) -> f64 {
        let w = self.spike.weight;
        let atom = if t >= self.spike.location { w } else { 0.0 };
        atom + (1.0 - w) * self.conditional.cdf(t)
    }

    /// Continuous part only, already multiplied by `1 − w`.
    pub fn continuous_pdf(&self, x: f64) -> f64 {
        (1.0 - self.spike.weight) * self.conditional.pdf(x)
    }

    pub fn mean(&self) -> f64 {
        let w = self.spike.weight;
        w * self.spike.location + (1.0 - w) * self.conditional.mean()
    }

    pub fn variance(&self) -> f64 {
        let w = self.spike.weight;
        let m = self.mean();
        let second = w * self.spike.location.powi(2)
            + (1.0 - w) * (self.conditional.variance() + self.conditional.mean().powi(2));
        (second - m * m).max(0.0)
    }

    pub fn quantile(&self, p: f64) -> Result<f64> {
        if self.spike.weight == 0.0 {
            return self.conditional.quantile(p);
        }
        if self.spike.weight == 1.0 {
            return Ok(self.spike.location);
        }
        let q = self.conditional.quantile(p)?;
        let loc = self.spike.location;
        Ok(generalized_inverse(|x| self.cdf(x), p, q.min(loc) - 1e-12, q.max(loc) + 1e-12))
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        if u < self.spike.weight {
            self.spike.location
        } else {
            self.conditional.draw(rng)
        }
    }
}

/// Weighted average of densities; equal weights when `weights` is `None`.
pub fn linear_pool(dists: &[Distribution], weights: Option<&[f64]>) -> Result<Mixture> {
    if dists.is_empty() {
        return Err(Error::Weight("pooling needs at least one distribution".into()));
    }
    let ws: Vec<f64> = match weights {
        Some(w) if w.len() != dists.len() => {
            return Err(Error::Weight(format!("{} weights given for {} distributions", w.len(), dists.len())))
        }
        Some(w) => w.to_vec(),
        None => vec![1.0 / dists.len() as f64; dists.len()],
    };
    Mixture::new(dists.iter().zip(ws).map(|(d, weight)| WeightedComponent { weight, distribution: *d }).collect())
}

pub fn spike_and_smear(conditional: Distribution, w: f64, spike_location: f64) -> Result<SpikeAndSmear> {
    let s = SpikeAndSmear { spike: Spike { location: spike_location, weight: w }, conditional };
    s.validate()?;
    Ok(s)
}

/// Prior for the response on active treatment: the control-response prior
/// with weight `w_no_benefit` and the conditional active-response prior with
/// weight `1 − w_no_benefit`. Components are returned in that order.
pub fn active_response_mixture(
    control_prior: Distribution,
    conditional_active: Distribution,
    w_no_benefit: f64,
) -> Result<Mixture> {
    check_probability("no-benefit weight", w_no_benefit)?;
    Mixture::new(vec![
        WeightedComponent { weight: w_no_benefit, distribution: control_prior },
        WeightedComponent { weight: 1.0 - w_no_benefit, distribution: conditional_active },
    ])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpikeSegment {
    pub location: f64,
    pub height: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotSeries {
    pub curve: Vec<CurvePoint>,
    #[serde(default)]
    pub spikes: Vec<SpikeSegment>,
}

impl PlotSeries {
    pub fn curve_max(&self) -> f64 {
        self.curve.iter().map(|p| p.y).fold(0.0, f64::max)
    }
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.len() < 2 {
        return Err(Error::Domain("plot grid needs at least two points".into()));
    }
    if !grid.iter().all(|x| x.is_finite()) || !grid.windows(2).all(|w| w[0] < w[1]) {
        return Err(Error::Domain("plot grid must be finite and strictly increasing".into()));
    }
    Ok(())
}

fn rescaled_curve(grid: &[f64], density: impl Fn(f64) -> f64, mass: f64) -> Vec<CurvePoint> {
    let ys: Vec<f64> = grid.iter().map(|&x| density(x)).collect();
    let peak = ys.iter().copied().filter(|y| y.is_finite()).fold(0.0, f64::max);
    let scale = if peak > 0.0 { mass / peak } else { 0.0 };
    grid.iter().zip(ys).map(|(&x, y)| CurvePoint { x, y: if y.is_finite() { y * scale } else { mass } }).collect()
}

/// Plot data for a prior.
///
/// Atoms are drawn as spikes whose height is their probability mass; in that
/// case the continuous part is rescaled so its maximum over the grid equals
/// its total mass. Priors without atoms are drawn as their plain density.
pub fn plot_series(prior: &Prior, grid: &[f64]) -> Result<PlotSeries> {
    check_grid(grid)?;
    prior.validate()?;
    let atoms = prior.atoms();
    let continuous_mass = 1.0 - atoms.iter().map(|a| a.1).sum::<f64>();
    let spikes: Vec<SpikeSegment> = atoms.iter().map(|&(location, height)| SpikeSegment { location, height }).collect();
    let curve = match prior {
        Prior::Spike(s) if s.weight() > 0.0 => rescaled_curve(grid, |x| s.conditional.pdf(x), continuous_mass),
        Prior::Mixture(m) if !atoms.is_empty() => {
            let density = |x: f64| {
                m.components()
                    .iter()
                    .filter(|c| c.distribution.family() != Family::Point)
                    .map(|c| c.weight * c.distribution.pdf(x))
                    .sum::<f64>()
            };
            rescaled_curve(grid, density, continuous_mass)
        }
        _ => grid.iter().map(|&x| CurvePoint { x, y: prior.pdf(x) }).collect(),
    };
    Ok(PlotSeries { curve, spikes })
}

#[derive(Serialize, Deserialize)]
struct MixtureWire {
    components: Vec<WeightedComponent>,
}

impl Serialize for Mixture {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        MixtureWire { components: self.components.clone() }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Mixture {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let w = MixtureWire::deserialize(d)?;
        Mixture::new(w.components).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn n(m: f64, s: f64) -> Distribution {
        Distribution::normal(m, s).unwrap()
    }

    #[test]
    fn single_component_pool_is_identity() {
        let d = n(0.0, 1.0);
        let m = linear_pool(&[d], None).unwrap();
        for x in [-3.0, -0.5, 0.0, 1.2, 4.0] {
            assert_eq!(m.pdf(x), d.pdf(x));
            assert_eq!(m.cdf(x), d.cdf(x));
        }
    }

    #[test]
    fn equal_pool_mean_and_symmetric_density() {
        let m = linear_pool(&[n(0.0, 1.0), n(2.0, 1.0)], None).unwrap();
        assert!((m.mean() - 1.0).abs() < 1e-15);
        // At x = 1 both components are one sd from their mean.
        assert!((m.pdf(1.0) - n(0.0, 1.0).pdf(1.0)).abs() < 1e-15);
    }

    #[test]
    fn weight_errors() {
        assert!(matches!(linear_pool(&[n(0.0, 1.0), n(1.0, 1.0)], Some(&[0.5, 0.6])), Err(Error::Weight(_))));
        assert!(matches!(linear_pool(&[n(0.0, 1.0)], Some(&[0.5, 0.5])), Err(Error::Weight(_))));
        assert!(matches!(linear_pool(&[], None), Err(Error::Weight(_))));
        assert!(matches!(spike_and_smear(n(0.0, 1.0), 1.2, 0.0), Err(Error::Weight(_))));
        assert!(matches!(active_response_mixture(n(0.0, 1.0), n(1.0, 1.0), -0.1), Err(Error::Weight(_))));
    }

    #[test]
    fn spike_and_smear_moments_and_cdf() {
        let s = spike_and_smear(n(0.6, 0.2), 0.4, 0.0).unwrap();
        assert!((s.mean() - 0.36).abs() < 1e-15);
        // 0.4 + 0.6 Φ(−3), Φ(−3) = 0.0013498980316301.
        assert!((s.cdf(0.0) - (0.4 + 0.6 * 0.001_349_898_031_630_1)).abs() < 1e-12);
        assert!((s.cdf(0.0) - 0.40081).abs() < 1e-5);
        assert!(s.cdf(-1e-9) < 0.01);
    }

    #[test]
    fn zero_weight_spike_is_conditional() {
        let c = n(0.6, 0.2);
        let s = spike_and_smear(c, 0.0, 0.0).unwrap();
        for x in [-0.5, 0.0, 0.3, 0.6, 1.0] {
            assert!((s.cdf(x) - c.cdf(x)).abs() <= 1e-12);
        }
        assert_eq!(s.mean(), c.mean());
    }

    #[test]
    fn active_response_weights() {
        let control = Distribution::beta(3.0, 7.0).unwrap();
        let active = Distribution::beta(6.0, 4.0).unwrap();
        let m = active_response_mixture(control, active, 0.4).unwrap();
        let w: Vec<f64> = m.components().iter().map(|c| c.weight).collect();
        assert_eq!(w, vec![0.4, 0.6]);
        let m = active_response_mixture(control, active, 0.2).unwrap();
        assert_eq!(m.components()[0].weight, 0.2);
        assert_eq!(m.components()[1].weight, 0.8);
        let all_control = active_response_mixture(control, active, 1.0).unwrap();
        let none = active_response_mixture(control, active, 0.0).unwrap();
        for x in [0.1, 0.3, 0.5, 0.9] {
            assert!((all_control.cdf(x) - control.cdf(x)).abs() <= 1e-12);
            assert!((none.cdf(x) - active.cdf(x)).abs() <= 1e-12);
        }
    }

    #[test]
    fn spike_plot_convention() {
        let s = spike_and_smear(n(0.6, 0.2), 0.4, 0.0).unwrap();
        let grid: Vec<f64> = (0..=400).map(|i| -0.5 + i as f64 * 0.005).collect();
        let ps = plot_series(&Prior::Spike(s), &grid).unwrap();
        assert_eq!(ps.spikes, vec![SpikeSegment { location: 0.0, height: 0.4 }]);
        assert!((ps.curve_max() - 0.6).abs() <= 1e-9);
    }

    #[test]
    fn plot_without_spike() {
        let s = spike_and_smear(n(0.6, 0.2), 0.0, 0.0).unwrap();
        let grid: Vec<f64> = (0..=100).map(|i| i as f64 * 0.01).collect();
        let ps = plot_series(&Prior::Spike(s), &grid).unwrap();
        assert!(ps.spikes.is_empty());
        let grid: Vec<f64> = (0..=800).map(|i| -4.0 + i as f64 * 0.01).collect();
        let ps = plot_series(&Prior::Dist(n(0.0, 1.0)), &grid).unwrap();
        assert!((ps.curve_max() - 1.0 / (2.0 * std::f64::consts::PI).sqrt()).abs() < 1e-6);
        assert!(matches!(plot_series(&Prior::Dist(n(0.0, 1.0)), &[]), Err(Error::Domain(_))));
        assert!(matches!(plot_series(&Prior::Dist(n(0.0, 1.0)), &[1.0, 0.0]), Err(Error::Domain(_))));
    }

    #[test]
    fn mixture_quantile_inverts_cdf() {
        let m = linear_pool(&[n(0.0, 1.0), n(4.0, 0.5)], Some(&[0.3, 0.7])).unwrap();
        for p in [0.05, 0.3, 0.5, 0.9] {
            let q = m.quantile(p).unwrap();
            assert!((m.cdf(q) - p).abs() < 1e-10);
        }
    }

    #[test]
    fn mixture_json_round_trip() {
        let m = linear_pool(&[n(0.0, 1.0), Distribution::gamma(2.0, 1.0, 0.0).unwrap()], Some(&[0.25, 0.75])).unwrap();
        let s = serde_json::to_string(&m).unwrap();
        let back: Mixture = serde_json::from_str(&s).unwrap();
        assert_eq!(back, m);
    }

    fn arb_components() -> impl Strategy<Value = (Vec<Distribution>, Vec<f64>)> {
        proptest::collection::vec((-5.0..5.0f64, 0.2..3.0f64, 0.05..1.0f64), 1..6).prop_map(|v| {
            let total: f64 = v.iter().map(|c| c.2).sum();
            let dists = v.iter().map(|c| n(c.0, c.1)).collect();
            let mut ws: Vec<f64> = v.iter().map(|c| c.2 / total).collect();
            let head: f64 = ws[..ws.len() - 1].iter().sum();
            *ws.last_mut().unwrap() = 1.0 - head;
            (dists, ws)
        })
    }

    proptest! {
        #[test]
        fn pool_cdf_is_weighted_average((dists, ws) in arb_components(), x in -8.0..8.0f64) {
            let m = linear_pool(&dists, Some(&ws)).unwrap();
            let direct: f64 = dists.iter().zip(&ws).map(|(d, w)| w * d.cdf(x)).sum();
            prop_assert!((m.cdf(x) - direct).abs() < 1e-12);
        }

        #[test]
        fn pool_is_permutation_invariant((dists, ws) in arb_components(), x in -8.0..8.0f64, rot in 0usize..6) {
            let m = linear_pool(&dists, Some(&ws)).unwrap();
            let k = rot % dists.len();
            let mut d2 = dists.clone();
            let mut w2 = ws.clone();
            d2.rotate_left(k);
            w2.rotate_left(k);
            let m2 = linear_pool(&d2, Some(&w2)).unwrap();
            prop_assert_eq!(m.pdf(x).to_bits(), m2.pdf(x).to_bits());
            prop_assert_eq!(m.cdf(x).to_bits(), m2.cdf(x).to_bits());
            prop_assert_eq!(m.mean().to_bits(), m2.mean().to_bits());
        }

        #[test]
        fn mixture_density_integrates_to_one((dists, ws) in arb_components()) {
            let m = linear_pool(&dists, Some(&ws)).unwrap();
            let lo = dists.iter().map(|d| d.mean() - 10.0 * d.sd()).fold(f64::INFINITY, f64::min);
            let hi = dists.iter().map(|d| d.mean() + 10.0 * d.sd()).fold(f64::NEG_INFINITY, f64::max);
            let steps = 20_000;
            let h = (hi - lo) / steps as f64;
            let mut s = m.pdf(lo) + m.pdf(hi);
            for i in 1..steps {
                s += if i % 2 == 1 { 4.0 } else { 2.0 } * m.pdf(lo + i as f64 * h);
            }
            let integral = s * h / 3.0;
            prop_assert!((1.0 - 1e-4..=1.0 + 1e-9).contains(&integral), "{}", integral);
        }
    }
}
