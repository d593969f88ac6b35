//! A prior on a single quantity in any of the supported representations.

use rand::Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::{json, Value};

use crate::dist::{Distribution, SCHEMA_VERSION};
use crate::error::{Error, Result};
use crate::pooling::{Mixture, SpikeAndSmear};
use crate::rng::stream_rng;
use crate::transforms::SampleDistribution;

#[derive(Debug, Clone, PartialEq)]
pub enum Prior {
    Dist(Distribution),
    Mixture(Mixture),
    Spike(SpikeAndSmear),
    Samples(SampleDistribution),
}

impl From<Distribution> for Prior {
    fn from(d: Distribution) -> Self {
        Prior::Dist(d)
    }
}

impl From<Mixture> for Prior {
    fn from(m: Mixture) -> Self {
        Prior::Mixture(m)
    }
}

impl From<SpikeAndSmear> for Prior {
    fn from(s: SpikeAndSmear) -> Self {
        Prior::Spike(s)
    }
}

impl From<SampleDistribution> for Prior {
    fn from(s: SampleDistribution) -> Self {
        Prior::Samples(s)
    }
}

impl Prior {
    pub fn kind(&self) -> &'static str {
        match self {
            Prior::Dist(_) => "distribution",
            Prior::Mixture(_) => "mixture",
            Prior::Spike(_) => "spike_and_smear",
            Prior::Samples(_) => "samples",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Prior::Dist(d) => d.validate(),
            Prior::Mixture(_) => Ok(()),
            Prior::Spike(s) => s.validate(),
            Prior::Samples(s) => s.validate(),
        }
    }

    /// Density of the continuous part (atoms excluded, weights applied).
    pub fn pdf(&self, x: f64) -> f64 {
        match self {
            Prior::Dist(d) => d.pdf(x),
            Prior::Mixture(m) => m.pdf(x),
            Prior::Spike(s) => s.continuous_pdf(x),
            Prior::Samples(_) => 0.0,
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        match self {
            Prior::Dist(d) => d.cdf(x),
            Prior::Mixture(m) => m.cdf(x),
            Prior::Spike(s) => s.cdf(x),
            Prior::Samples(s) => s.ecdf(x),
        }
    }

    pub fn mean(&self) -> f64 {
        match self {
            Prior::Dist(d) => d.mean(),
            Prior::Mixture(m) => m.mean(),
            Prior::Spike(s) => s.mean(),
            Prior::Samples(s) => s.summary.mean,
        }
    }

    pub fn variance(&self) -> f64 {
        match self {
            Prior::Dist(d) => d.variance(),
            Prior::Mixture(m) => m.variance(),
            Prior::Spike(s) => s.variance(),
            Prior::Samples(s) => s.summary.sd.powi(2),
        }
    }

    pub fn quantile(&self, p: f64) -> Result<f64> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::Domain(format!("quantile probability must be in (0,1), got {p}")));
        }
        match self {
            Prior::Dist(d) => d.quantile(p),
            Prior::Mixture(m) => m.quantile(p),
            Prior::Spike(s) => s.quantile(p),
            Prior::Samples(s) => Ok(s.quantile(p)),
        }
    }

    /// Probability atoms as (location, mass).
    pub fn atoms(&self) -> Vec<(f64, f64)> {
        match self {
            Prior::Dist(Distribution::Point { value }) => vec![(*value, 1.0)],
            Prior::Dist(_) | Prior::Samples(_) => vec![],
            Prior::Mixture(m) => m.atoms(),
            Prior::Spike(s) => {
                let mut a = Vec::new();
                if s.weight() > 0.0 {
                    a.push((s.location(), s.weight()));
                }
                if let Distribution::Point { value } = s.conditional {
                    if s.weight() < 1.0 {
                        a.push((value, 1.0 - s.weight()));
                    }
                }
                a
            }
        }
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            Prior::Dist(d) => d.draw(rng),
            Prior::Mixture(m) => m.draw(rng),
            Prior::Spike(s) => s.draw(rng),
            Prior::Samples(s) => s.samples[rng.random_range(0..s.samples.len())],
        }
    }

    pub fn sample(&self, n: usize, seed: u64) -> Result<Vec<f64>> {
        self.validate()?;
        if n == 0 {
            return Err(Error::Domain("sample size must be at least 1".into()));
        }
        let mut rng = stream_rng(seed, 0);
        Ok((0..n).map(|_| self.draw(&mut rng)).collect())
    }

    /// True when every draw lies inside `[lo, hi]`.
    pub fn within(&self, lo: f64, hi: f64) -> bool {
        match self {
            Prior::Dist(d) => {
                let s = d.support();
                s.lower >= lo && s.upper <= hi
            }
            Prior::Mixture(m) => m.components().iter().all(|c| Prior::Dist(c.distribution).within(lo, hi)),
            Prior::Spike(s) => {
                (s.weight() == 0.0 || (s.location() >= lo && s.location() <= hi))
                    && (s.weight() == 1.0 || Prior::Dist(s.conditional).within(lo, hi))
            }
            Prior::Samples(s) => s.samples.iter().all(|&x| x >= lo && x <= hi),
        }
    }
}

impl Serialize for Prior {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::Error as _;
        let v = match self {
            Prior::Dist(d) => serde_json::to_value(d).map_err(S::Error::custom)?,
            Prior::Mixture(m) => json!({
                "version": SCHEMA_VERSION,
                "family": "mixture",
                "components": m.components(),
            }),
            Prior::Spike(sp) => json!({
                "version": SCHEMA_VERSION,
                "family": "spike_and_smear",
                "spike": sp.spike,
                "conditional": sp.conditional,
            }),
            Prior::Samples(sd) => json!({
                "version": SCHEMA_VERSION,
                "family": "samples",
                "seed": sd.seed,
                "clamped_fraction": sd.clamped_fraction,
                "samples": sd.samples,
            }),
        };
        v.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Prior {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let mut v = Value::deserialize(d)?;
        let obj = v.as_object_mut().ok_or_else(|| D::Error::custom("prior must be a JSON object"))?;
        let family = obj
            .get("family")
            .and_then(Value::as_str)
            .ok_or_else(|| D::Error::custom("prior is missing 'family'"))?
            .to_string();
        let version = match obj.get("version") {
            None => SCHEMA_VERSION as u64,
            Some(x) => x.as_u64().ok_or_else(|| D::Error::custom("version must be an integer"))?,
        };
        if version != SCHEMA_VERSION as u64 {
            return Err(D::Error::custom(format!(
                "prior schema version {version} is not supported (expected {SCHEMA_VERSION})"
            )));
        }
        let take = |obj: &mut serde_json::Map<String, Value>, key: &str| {
            obj.remove(key).ok_or_else(|| D::Error::custom(format!("{family} prior is missing '{key}'")))
        };
        match family.as_str() {
            "mixture" => {
                let components = take(obj, "components")?;
                let m: Mixture =
                    serde_json::from_value(json!({ "components": components })).map_err(D::Error::custom)?;
                Ok(Prior::Mixture(m))
            }
            "spike_and_smear" => {
                let spike = serde_json::from_value(take(obj, "spike")?).map_err(D::Error::custom)?;
                let conditional = serde_json::from_value(take(obj, "conditional")?).map_err(D::Error::custom)?;
                let s = SpikeAndSmear { spike, conditional };
                s.validate().map_err(D::Error::custom)?;
                Ok(Prior::Spike(s))
            }
            "samples" => {
                let samples: Vec<f64> = serde_json::from_value(take(obj, "samples")?).map_err(D::Error::custom)?;
                let seed = obj.get("seed").and_then(Value::as_u64).unwrap_or(0);
                let clamped = obj.get("clamped_fraction").and_then(Value::as_f64).unwrap_or(0.0);
                SampleDistribution::new(samples, seed, clamped).map(Prior::Samples).map_err(D::Error::custom)
            }
            _ => serde_json::from_value::<Distribution>(v).map(Prior::Dist).map_err(D::Error::custom),
        }
    }
}
