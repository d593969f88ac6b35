//! Parametric distribution families used for elicited priors.
//!
//! A [`Distribution`] is a fully validated family + parameter set. Densities
//! and CDFs are evaluated in closed form (regularized incomplete gamma/beta
//! functions where needed); quantiles are closed form for the normal and
//! log-normal families and otherwise solved by a bracketed Newton iteration
//! on the CDF.

use std::collections::BTreeMap;
use std::f64::consts::{PI, SQRT_2};
use std::fmt;

use rand::Rng;
use rand_distr::Distribution as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use statrs::function::{beta as sbeta, erf, gamma as sgamma};

use crate::error::{Error, Result};
use crate::rng::stream_rng;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Family {
    #[serde(rename = "normal")]
    Normal,
    #[serde(rename = "student_t")]
    StudentT,
    #[serde(rename = "lognormal")]
    LogNormal,
    #[serde(rename = "gamma")]
    Gamma,
    #[serde(rename = "beta")]
    Beta,
    #[serde(rename = "scaled_beta")]
    ScaledBeta,
    /// Degenerate point mass. Usable as a prior but never fitted.
    #[serde(rename = "point")]
    Point,
}

impl Family {
    /// Families offered for fitting, in tie-break order.
    pub const FITTABLE: [Family; 6] =
        [Family::Normal, Family::StudentT, Family::LogNormal, Family::Gamma, Family::Beta, Family::ScaledBeta];

    pub fn name(self) -> &'static str {
        match self {
            Family::Normal => "normal",
            Family::StudentT => "student_t",
            Family::LogNormal => "lognormal",
            Family::Gamma => "gamma",
            Family::Beta => "beta",
            Family::ScaledBeta => "scaled_beta",
            Family::Point => "point",
        }
    }

    /// Nominal parameter count (bounds of a scaled beta included).
    pub fn n_params(self) -> usize {
        match self {
            Family::Point => 1,
            Family::Normal | Family::LogNormal | Family::Gamma | Family::Beta => 2,
            Family::StudentT => 3,
            Family::ScaledBeta => 4,
        }
    }

    pub fn param_names(self) -> &'static [&'static str] {
        match self {
            Family::Normal => &["mean", "sd"],
            Family::StudentT => &["location", "scale", "df"],
            Family::LogNormal => &["meanlog", "sdlog", "shift"],
            Family::Gamma => &["shape", "rate", "shift"],
            Family::Beta => &["a", "b"],
            Family::ScaledBeta => &["a", "b", "lower", "upper"],
            Family::Point => &["value"],
        }
    }

    pub(crate) fn order(self) -> usize {
        match self {
            Family::Normal => 0,
            Family::StudentT => 1,
            Family::LogNormal => 2,
            Family::Gamma => 3,
            Family::Beta => 4,
            Family::ScaledBeta => 5,
            Family::Point => 6,
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "normal" => Ok(Family::Normal),
            "student_t" | "studentt" | "t" => Ok(Family::StudentT),
            "lognormal" | "log_normal" => Ok(Family::LogNormal),
            "gamma" => Ok(Family::Gamma),
            "beta" => Ok(Family::Beta),
            "scaled_beta" | "scaledbeta" => Ok(Family::ScaledBeta),
            "point" => Ok(Family::Point),
            other => Err(Error::Parameter(format!("unknown family '{other}'"))),
        }
    }
}

/// Closed or open interval; infinite ends mean unbounded.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lower: f64,
    pub upper: f64,
}

impl Interval {
    pub const REAL_LINE: Interval = Interval { lower: f64::NEG_INFINITY, upper: f64::INFINITY };

    pub fn new(lower: f64, upper: f64) -> Result<Self> {
        if lower.is_nan() || upper.is_nan() || lower >= upper {
            return Err(Error::Parameter(format!("interval requires lower < upper, got ({lower}, {upper})")));
        }
        Ok(Interval { lower, upper })
    }

    pub fn is_bounded(&self) -> bool {
        self.lower.is_finite() && self.upper.is_finite()
    }

    pub fn contains_open(&self, x: f64) -> bool {
        x > self.lower && x < self.upper
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.lower && x <= self.upper
    }
}

#[derive(Serialize, Deserialize)]
struct IntervalWire {
    lower: Option<f64>,
    upper: Option<f64>,
}

impl From<Interval> for IntervalWire {
    fn from(i: Interval) -> Self {
        IntervalWire { lower: i.lower.is_finite().then_some(i.lower), upper: i.upper.is_finite().then_some(i.upper) }
    }
}

impl IntervalWire {
    fn bounds(&self) -> (f64, f64) {
        (self.lower.unwrap_or(f64::NEG_INFINITY), self.upper.unwrap_or(f64::INFINITY))
    }
}

impl Serialize for Interval {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        IntervalWire::from(*self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for Interval {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let (lower, upper) = IntervalWire::deserialize(d)?.bounds();
        Interval::new(lower, upper).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalKind {
    Pdf,
    Cdf,
    Quantile,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Distribution {
    Normal { mean: f64, sd: f64 },
    StudentT { location: f64, scale: f64, df: f64 },
    LogNormal { meanlog: f64, sdlog: f64, shift: f64 },
    Gamma { shape: f64, rate: f64, shift: f64 },
    Beta { a: f64, b: f64 },
    ScaledBeta { a: f64, b: f64, lower: f64, upper: f64 },
    Point { value: f64 },
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::Parameter(format!("{name} must be finite and > 0, got {v}")))
    }
}

fn finite(name: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::Parameter(format!("{name} must be finite, got {v}")))
    }
}

fn std_normal_cdf(z: f64) -> f64 {
    0.5 * erf::erfc(-z / SQRT_2)
}

fn std_normal_quantile(p: f64) -> f64 {
    let z = -SQRT_2 * erf::erfc_inv(2.0 * p);
    // erfc_inv is good to ~1e-11; one Newton step on the CDF polishes it.
    let d = std_normal_pdf(z);
    if z.is_finite() && d > 1e-300 {
        z - (std_normal_cdf(z) - p) / d
    } else {
        z
    }
}

fn std_normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * PI).sqrt()
}

/// Standard normal quantile, exposed for design calculations.
pub fn normal_quantile(p: f64) -> f64 {
    std_normal_quantile(p)
}

/// Standard normal CDF.
pub fn normal_cdf(z: f64) -> f64 {
    std_normal_cdf(z)
}

fn beta_cdf(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else if x >= 1.0 {
        1.0
    } else {
        sbeta::beta_reg(a, b, x)
    }
}

fn beta_pdf(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 || x >= 1.0 {
        return 0.0;
    }
    ((a - 1.0) * x.ln() + (b - 1.0) * (-x).ln_1p() - sbeta::ln_beta(a, b)).exp()
}

impl Distribution {
    pub fn normal(mean: f64, sd: f64) -> Result<Self> {
        Distribution::Normal { mean, sd }.validated()
    }

    pub fn student_t(location: f64, scale: f64, df: f64) -> Result<Self> {
        Distribution::StudentT { location, scale, df }.validated()
    }

    pub fn lognormal(meanlog: f64, sdlog: f64, shift: f64) -> Result<Self> {
        Distribution::LogNormal { meanlog, sdlog, shift }.validated()
    }

    pub fn gamma(shape: f64, rate: f64, shift: f64) -> Result<Self> {
        Distribution::Gamma { shape, rate, shift }.validated()
    }

    pub fn beta(a: f64, b: f64) -> Result<Self> {
        Distribution::Beta { a, b }.validated()
    }

    pub fn scaled_beta(a: f64, b: f64, lower: f64, upper: f64) -> Result<Self> {
        Distribution::ScaledBeta { a, b, lower, upper }.validated()
    }

    pub fn point(value: f64) -> Result<Self> {
        Distribution::Point { value }.validated()
    }

    pub fn validated(self) -> Result<Self> {
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Distribution::Normal { mean, sd } => {
                finite("mean", mean)?;
                positive("sd", sd)
            }
            Distribution::StudentT { location, scale, df } => {
                finite("location", location)?;
                positive("scale", scale)?;
                positive("df", df)
            }
            Distribution::LogNormal { meanlog, sdlog, shift } => {
                finite("meanlog", meanlog)?;
                positive("sdlog", sdlog)?;
                finite("shift", shift)
            }
            Distribution::Gamma { shape, rate, shift } => {
                positive("shape", shape)?;
                positive("rate", rate)?;
                finite("shift", shift)
            }
            Distribution::Beta { a, b } => {
                positive("a", a)?;
                positive("b", b)
            }
            Distribution::ScaledBeta { a, b, lower, upper } => {
                positive("a", a)?;
                positive("b", b)?;
                finite("lower", lower)?;
                finite("upper", upper)?;
                if lower >= upper {
                    return Err(Error::Parameter(format!("scaled beta needs lower < upper, got ({lower}, {upper})")));
                }
                Ok(())
            }
            Distribution::Point { value } => finite("value", value),
        }
    }

    pub fn family(&self) -> Family {
        match self {
            Distribution::Normal { .. } => Family::Normal,
            Distribution::StudentT { .. } => Family::StudentT,
            Distribution::LogNormal { .. } => Family::LogNormal,
            Distribution::Gamma { .. } => Family::Gamma,
            Distribution::Beta { .. } => Family::Beta,
            Distribution::ScaledBeta { .. } => Family::ScaledBeta,
            Distribution::Point { .. } => Family::Point,
        }
    }

    /// Parameter values in [`Family::param_names`] order.
    pub fn params(&self) -> Vec<f64> {
        match *self {
            Distribution::Normal { mean, sd } => vec![mean, sd],
            Distribution::StudentT { location, scale, df } => vec![location, scale, df],
            Distribution::LogNormal { meanlog, sdlog, shift } => vec![meanlog, sdlog, shift],
            Distribution::Gamma { shape, rate, shift } => vec![shape, rate, shift],
            Distribution::Beta { a, b } => vec![a, b],
            Distribution::ScaledBeta { a, b, lower, upper } => vec![a, b, lower, upper],
            Distribution::Point { value } => vec![value],
        }
    }

    pub fn from_params(family: Family, p: &[f64]) -> Result<Self> {
        let want = family.param_names().len();
        if p.len() != want {
            return Err(Error::Parameter(format!("{family} takes {want} parameters, got {}", p.len())));
        }
        match family {
            Family::Normal => Distribution::normal(p[0], p[1]),
            Family::StudentT => Distribution::student_t(p[0], p[1], p[2]),
            Family::LogNormal => Distribution::lognormal(p[0], p[1], p[2]),
            Family::Gamma => Distribution::gamma(p[0], p[1], p[2]),
            Family::Beta => Distribution::beta(p[0], p[1]),
            Family::ScaledBeta => Distribution::scaled_beta(p[0], p[1], p[2], p[3]),
            Family::Point => Distribution::point(p[0]),
        }
    }

    pub fn support(&self) -> Interval {
        match *self {
            Distribution::Normal { .. } | Distribution::StudentT { .. } => Interval::REAL_LINE,
            Distribution::LogNormal { shift, .. } | Distribution::Gamma { shift, .. } => {
                Interval { lower: shift, upper: f64::INFINITY }
            }
            Distribution::Beta { .. } => Interval { lower: 0.0, upper: 1.0 },
            Distribution::ScaledBeta { lower, upper, .. } => Interval { lower, upper },
            Distribution::Point { value } => Interval { lower: value, upper: value },
        }
    }

    pub fn pdf(&self, x: f64) -> f64 {
        match *self {
            Distribution::Normal { mean, sd } => std_normal_pdf((x - mean) / sd) / sd,
            Distribution::StudentT { location, scale, df } => {
                let t = (x - location) / scale;
                let ln_norm = sgamma::ln_gamma(0.5 * (df + 1.0)) - sgamma::ln_gamma(0.5 * df) - 0.5 * (df * PI).ln();
                (ln_norm - 0.5 * (df + 1.0) * (t * t / df).ln_1p()).exp() / scale
            }
            Distribution::LogNormal { meanlog, sdlog, shift } => {
                let y = x - shift;
                if y <= 0.0 {
                    0.0
                } else {
                    std_normal_pdf((y.ln() - meanlog) / sdlog) / (sdlog * y)
                }
            }
            Distribution::Gamma { shape, rate, shift } => {
                let y = x - shift;
                if y < 0.0 || (y == 0.0 && shape > 1.0) {
                    0.0
                } else if y == 0.0 {
                    if shape == 1.0 {
                        rate
                    } else {
                        f64::INFINITY
                    }
                } else {
                    (shape * rate.ln() + (shape - 1.0) * y.ln() - rate * y - sgamma::ln_gamma(shape)).exp()
                }
            }
            Distribution::Beta { a, b } => beta_pdf(a, b, x),
            Distribution::ScaledBeta { a, b, lower, upper } => {
                let w = upper - lower;
                beta_pdf(a, b, (x - lower) / w) / w
            }
            Distribution::Point { .. } => 0.0,
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x.is_nan() {
            return f64::NAN;
        }
        match *self {
            Distribution::Normal { mean, sd } => std_normal_cdf((x - mean) / sd),
            Distribution::StudentT { location, scale, df } => {
                let t = (x - location) / scale;
                if t.is_infinite() {
                    return if t > 0.0 { 1.0 } else { 0.0 };
                }
                let tail = 0.5 * sbeta::beta_reg(0.5 * df, 0.5, df / (df + t * t));
                if t > 0.0 {
                    1.0 - tail
                } else {
                    tail
                }
            }
            Distribution::LogNormal { meanlog, sdlog, shift } => {
                let y = x - shift;
                if y <= 0.0 {
                    0.0
                } else {
                    std_normal_cdf((y.ln() - meanlog) / sdlog)
                }
            }
            Distribution::Gamma { shape, rate, shift } => {
                let y = x - shift;
                if y <= 0.0 {
                    0.0
                } else if y.is_infinite() {
                    1.0
                } else {
                    sgamma::gamma_lr(shape, rate * y)
                }
            }
            Distribution::Beta { a, b } => beta_cdf(a, b, x),
            Distribution::ScaledBeta { a, b, lower, upper } => beta_cdf(a, b, (x - lower) / (upper - lower)),
            Distribution::Point { value } => {
                if x >= value {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// Inverse CDF. `p` must lie strictly inside (0, 1).
    pub fn quantile(&self, p: f64) -> Result<f64> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::Domain(format!("quantile probability must be in (0,1), got {p}")));
        }
        Ok(match *self {
            Distribution::Normal { mean, sd } => mean + sd * std_normal_quantile(p),
            Distribution::LogNormal { meanlog, sdlog, shift } => {
                shift + (meanlog + sdlog * std_normal_quantile(p)).exp()
            }
            Distribution::Point { value } => value,
            _ => self.solve_quantile(p),
        })
    }

    fn solve_quantile(&self, p: f64) -> f64 {
        let support = self.support();
        let centre = self.mean();
        let spread = self.variance().sqrt().max(1e-12);
        let (mut lo, mut hi) = (support.lower, support.upper);
        if !lo.is_finite() {
            let mut step = spread;
            lo = centre - step;
            while self.cdf(lo) > p {
                step *= 2.0;
                lo = centre - step;
            }
        }
        if !hi.is_finite() {
            let mut step = spread;
            hi = centre + step;
            while self.cdf(hi) < p {
                step *= 2.0;
                hi = centre + step;
            }
        }
        // Safeguarded Newton: fall back to bisection whenever the step leaves
        // the bracket or the density vanishes.
        let mut x = 0.5 * (lo + hi);
        for _ in 0..200 {
            let f = self.cdf(x) - p;
            if f == 0.0 {
                return x;
            }
            if f < 0.0 {
                lo = x;
            } else {
                hi = x;
            }
            let d = self.pdf(x);
            let newton = x - f / d;
            let next = if d > 0.0 && d.is_finite() && newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
            if (next - x).abs() <= 1e-15 * (1.0 + x.abs()) || hi - lo <= 1e-15 * (1.0 + x.abs()) {
                return next;
            }
            x = next;
        }
        x
    }

    pub fn mean(&self) -> f64 {
        match *self {
            Distribution::Normal { mean, .. } => mean,
            Distribution::StudentT { location, df, .. } => {
                if df > 1.0 {
                    location
                } else {
                    f64::NAN
                }
            }
            Distribution::LogNormal { meanlog, sdlog, shift } => shift + (meanlog + 0.5 * sdlog * sdlog).exp(),
            Distribution::Gamma { shape, rate, shift } => shift + shape / rate,
            Distribution::Beta { a, b } => a / (a + b),
            Distribution::ScaledBeta { a, b, lower, upper } => lower + (upper - lower) * a / (a + b),
            Distribution::Point { value } => value,
        }
    }

    pub fn variance(&self) -> f64 {
        match *self {
            Distribution::Normal { sd, .. } => sd * sd,
            Distribution::StudentT { scale, df, .. } => {
                if df > 2.0 {
                    scale * scale * df / (df - 2.0)
                } else {
                    f64::INFINITY
                }
            }
            Distribution::LogNormal { meanlog, sdlog, .. } => {
                let s2 = sdlog * sdlog;
                s2.exp_m1() * (2.0 * meanlog + s2).exp()
            }
            Distribution::Gamma { shape, rate, .. } => shape / (rate * rate),
            Distribution::Beta { a, b } => a * b / ((a + b).powi(2) * (a + b + 1.0)),
            Distribution::ScaledBeta { a, b, lower, upper } => {
                (upper - lower).powi(2) * a * b / ((a + b).powi(2) * (a + b + 1.0))
            }
            Distribution::Point { .. } => 0.0,
        }
    }

    pub fn sd(&self) -> f64 {
        self.variance().sqrt()
    }

    pub fn evaluate(&self, kind: EvalKind, arg: f64) -> Result<f64> {
        self.validate()?;
        match kind {
            EvalKind::Pdf => Ok(self.pdf(arg)),
            EvalKind::Cdf => Ok(self.cdf(arg)),
            EvalKind::Quantile => self.quantile(arg),
        }
    }

    /// One draw from an external generator.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            Distribution::Normal { mean, sd } => mean + sd * rng.sample::<f64, _>(rand_distr::StandardNormal),
            Distribution::StudentT { location, scale, df } => {
                let t = rand_distr::StudentT::new(df).expect("validated df");
                location + scale * t.sample(rng)
            }
            Distribution::LogNormal { meanlog, sdlog, shift } => {
                shift + (meanlog + sdlog * rng.sample::<f64, _>(rand_distr::StandardNormal)).exp()
            }
            Distribution::Gamma { shape, rate, shift } => {
                let g = rand_distr::Gamma::new(shape, 1.0 / rate).expect("validated gamma");
                shift + g.sample(rng)
            }
            Distribution::Beta { a, b } => rand_distr::Beta::new(a, b).expect("validated beta").sample(rng),
            Distribution::ScaledBeta { a, b, lower, upper } => {
                let u: f64 = rand_distr::Beta::new(a, b).expect("validated beta").sample(rng);
                lower + (upper - lower) * u
            }
            Distribution::Point { value } => value,
        }
    }

    /// `n` seeded draws; identical `(self, n, seed)` gives identical output.
    pub fn sample(&self, n: usize, seed: u64) -> Result<Vec<f64>> {
        self.validate()?;
        if n == 0 {
            return Err(Error::Domain("sample size must be at least 1".into()));
        }
        let mut rng = stream_rng(seed, 0);
        Ok((0..n).map(|_| self.draw(&mut rng)).collect())
    }
}

impl fmt::Display for Distribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let fam = self.family();
        write!(f, "{fam}{{")?;
        for (i, (name, v)) in fam.param_names().iter().zip(self.params()).enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{name}={v}")?;
        }
        f.write_str("}")
    }
}

#[derive(Serialize, Deserialize)]
struct DistributionWire {
    #[serde(default = "default_version")]
    version: u32,
    family: Family,
    params: BTreeMap<String, f64>,
    /// Point masses have a degenerate support, which `Interval` rejects.
    #[serde(default)]
    support: Option<IntervalWire>,
}

fn default_version() -> u32 {
    SCHEMA_VERSION
}

impl Serialize for Distribution {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let fam = self.family();
        let params = fam.param_names().iter().map(|n| n.to_string()).zip(self.params()).collect();
        DistributionWire { version: SCHEMA_VERSION, family: fam, params, support: Some(self.support().into()) }
            .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Distribution {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let w = DistributionWire::deserialize(d)?;
        if w.version != SCHEMA_VERSION {
            return Err(D::Error::custom(format!(
                "distribution schema version {} is not supported (expected {SCHEMA_VERSION})",
                w.version
            )));
        }
        let names = w.family.param_names();
        let mut params = w.params;
        // Optional defaults for shift-able families.
        if matches!(w.family, Family::LogNormal | Family::Gamma) && !params.contains_key("shift") {
            params.insert("shift".into(), 0.0);
        }
        if let Some(extra) = params.keys().find(|k| !names.contains(&k.as_str())) {
            return Err(D::Error::custom(format!("unknown parameter '{extra}' for family {}", w.family)));
        }
        let values = names
            .iter()
            .map(|n| params.get(*n).copied().ok_or_else(|| D::Error::custom(format!("missing parameter '{n}'"))))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        let dist = Distribution::from_params(w.family, &values).map_err(D::Error::custom)?;
        if let Some(sup) = w.support {
            let (lower, upper) = sup.bounds();
            let own = dist.support();
            if lower != own.lower || upper != own.upper {
                return Err(D::Error::custom(format!(
                    "support ({lower}, {upper}) inconsistent with family {}",
                    w.family
                )));
            }
        }
        Ok(dist)
    }
}
