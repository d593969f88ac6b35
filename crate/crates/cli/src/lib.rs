//! `elicit` command line.
//!
//! Every compute subcommand builds the same request the HTTP service
//! accepts (or reads one whole with `--request`) and prints the response as
//! JSON. Exit codes: 0 success, 1 error (an `ApiError` JSON object on
//! stderr), 2 usage error.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use elicit_core::api::{
    fits_to_csv, parse_f64_list, to_json, AssuranceRequest, Compute, DoseRequest, FitRequest, OcRequest, PoolRequest,
    PoolResponse, TransformRequest,
};
use elicit_core::assurance::{AssuranceMethod, EffectMeasure, Endpoint, PriorSpec, TrialDesign};
use elicit_core::doseresponse::{DoseElicitation, ModelKind};
use elicit_core::judgement::{Judgement, ProbabilityJudgement, QuartileJudgement, RouletteGrid};
use elicit_core::session::{RecordFormat, Session};
use elicit_core::transforms::{EffectScale, RelativeConvention, SurvivalElicitation};
use elicit_core::{ApiError, Distribution, Error, Family, Interval, Prior, Result};
use serde_json::Value;

#[derive(Parser, Debug)]
#[command(name = "elicit", version, about = "Prior elicitation, pooling, dose-response ensembles and assurance")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fit parametric families to a quartile, roulette or probability judgement.
    Fit(FitArgs),
    /// Equal- or custom-weight linear pool of distributions.
    Pool(PoolArgs),
    /// Spike-and-smear prior, or control/active response mixture with --control.
    Spike(SpikeArgs),
    /// Active-arm response prior from control and effect priors by sampling.
    Transform(TransformArgs),
    /// Hazard ratio from progression proportions, as a point value or a sampled prior.
    Hr(HrArgs),
    /// Dose-response curve ensembles from per-dose priors.
    DoseFit(DoseArgs),
    /// Assurance (probability of success averaged over a prior).
    Assurance(AssuranceArgs),
    /// Operating characteristics of futility and success rules by simulation.
    Oc(OcArgs),
    /// Written record of a saved session.
    Record(RecordArgs),
    /// Run the HTTP service.
    Serve(ServeArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum Format {
    Json,
    Csv,
}

#[derive(Args, Debug)]
struct OutputArgs {
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
    /// Write to this file instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum JudgementMethod {
    Quartile,
    Roulette,
    Probability,
}

#[derive(Args, Debug)]
struct FitArgs {
    /// Complete fit request as JSON; replaces the other input flags.
    #[arg(long, conflicts_with_all = ["judgement", "method", "q", "plausible", "edges", "chips", "thresholds", "probs", "family", "support"])]
    request: Option<PathBuf>,
    /// Judgement as JSON.
    #[arg(long, conflicts_with = "method")]
    judgement: Option<PathBuf>,
    #[arg(long, value_enum, required_unless_present_any = ["request", "judgement"])]
    method: Option<JudgementMethod>,
    /// Quartiles q25,q50,q75.
    #[arg(long, allow_hyphen_values = true)]
    q: Option<String>,
    /// Plausible lower and upper limits for quartile judgements.
    #[arg(long, allow_hyphen_values = true)]
    plausible: Option<String>,
    /// Roulette bin edges.
    #[arg(long, allow_hyphen_values = true)]
    edges: Option<String>,
    /// Roulette chips per bin.
    #[arg(long)]
    chips: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    thresholds: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    probs: Option<String>,
    /// Families to try (comma separated); default all.
    #[arg(long)]
    family: Option<String>,
    /// Support constraint lower,upper.
    #[arg(long, allow_hyphen_values = true)]
    support: Option<String>,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args, Debug)]
struct PoolArgs {
    #[arg(long, conflicts_with_all = ["dists", "weights", "grid"])]
    request: Option<PathBuf>,
    /// JSON array of distributions.
    #[arg(long, required_unless_present = "request")]
    dists: Option<PathBuf>,
    #[arg(long, allow_hyphen_values = true)]
    weights: Option<String>,
    /// Plot grid as a list or lo:hi:n.
    #[arg(long, allow_hyphen_values = true)]
    grid: Option<String>,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args, Debug)]
struct SpikeArgs {
    #[arg(long, conflicts_with_all = ["conditional", "weight", "location", "control", "grid"])]
    request: Option<PathBuf>,
    /// Distribution JSON for the continuous part (or the active response with --control).
    #[arg(long, required_unless_present = "request")]
    conditional: Option<PathBuf>,
    /// Spike mass, or probability of no benefit with --control.
    #[arg(long, required_unless_present = "request")]
    weight: Option<f64>,
    #[arg(long, default_value_t = 0.0, conflicts_with = "control")]
    location: f64,
    /// Control response distribution JSON.
    #[arg(long)]
    control: Option<PathBuf>,
    #[arg(long, allow_hyphen_values = true)]
    grid: Option<String>,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum ScaleArg {
    Absolute,
    Relative,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum ConventionArg {
    RiskReduction,
    Ratio,
}

impl From<ConventionArg> for RelativeConvention {
    fn from(c: ConventionArg) -> Self {
        match c {
            ConventionArg::RiskReduction => RelativeConvention::RiskReduction,
            ConventionArg::Ratio => RelativeConvention::Ratio,
        }
    }
}

#[derive(Args, Debug)]
struct TransformArgs {
    #[arg(long, conflicts_with_all = ["control", "effect", "scale", "convention", "n", "seed", "allow_clamp", "refit"])]
    request: Option<PathBuf>,
    /// Control response distribution JSON.
    #[arg(long, required_unless_present = "request")]
    control: Option<PathBuf>,
    /// Effect prior JSON.
    #[arg(long, required_unless_present = "request")]
    effect: Option<PathBuf>,
    #[arg(long, value_enum, required_unless_present = "request")]
    scale: Option<ScaleArg>,
    #[arg(long, value_enum, default_value = "risk-reduction")]
    convention: ConventionArg,
    #[arg(long, required_unless_present = "request")]
    n: Option<usize>,
    #[arg(long, required_unless_present = "request")]
    seed: Option<u64>,
    #[arg(long)]
    allow_clamp: bool,
    /// Refit these families to the sampled prior.
    #[arg(long)]
    refit: Option<String>,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args, Debug)]
struct HrArgs {
    #[arg(long, conflicts_with_all = ["pc", "pa", "control_prior", "rel_diff", "horizon", "convention", "n", "seed", "allow_clamp", "refit"])]
    request: Option<PathBuf>,
    /// Control progression proportion at the horizon.
    #[arg(long, requires = "pa", conflicts_with = "control_prior")]
    pc: Option<f64>,
    /// Active progression proportion at the horizon.
    #[arg(long, requires = "pc")]
    pa: Option<f64>,
    /// Control progression prior (distribution JSON).
    #[arg(long, requires_all = ["rel_diff", "horizon", "n", "seed"], required_unless_present_any = ["request", "pc"])]
    control_prior: Option<PathBuf>,
    /// Relative difference prior JSON.
    #[arg(long)]
    rel_diff: Option<PathBuf>,
    #[arg(long)]
    horizon: Option<f64>,
    #[arg(long, value_enum, default_value = "risk-reduction")]
    convention: ConventionArg,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    allow_clamp: bool,
    #[arg(long)]
    refit: Option<String>,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args, Debug)]
struct DoseArgs {
    #[arg(long, conflicts_with_all = ["elicitation", "models", "draws", "seed", "grid", "levels"])]
    request: Option<PathBuf>,
    /// Dose elicitation JSON: doses and per-dose priors.
    #[arg(long, required_unless_present = "request")]
    elicitation: Option<PathBuf>,
    /// Models (comma separated): linear, log_linear, quadratic, exponential, emax3.
    #[arg(long, required_unless_present = "request")]
    models: Option<String>,
    #[arg(long, required_unless_present = "request")]
    draws: Option<usize>,
    #[arg(long, required_unless_present = "request")]
    seed: Option<u64>,
    /// Dose grid for uncertainty bands.
    #[arg(long, allow_hyphen_values = true)]
    grid: Option<String>,
    /// Band levels lower,upper.
    #[arg(long, allow_hyphen_values = true)]
    levels: Option<String>,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum MethodArg {
    Quadrature,
    Mc,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum MeasureArg {
    Difference,
    HazardRatio,
}

#[derive(Args, Debug)]
struct PriorSource {
    /// Prior JSON: either a prior with a "measure", or a bare prior.
    #[arg(long, conflicts_with = "session")]
    prior: Option<PathBuf>,
    /// Take a consensus prior from a saved session.
    #[arg(long, requires = "quantity")]
    session: Option<PathBuf>,
    #[arg(long)]
    quantity: Option<String>,
    /// Consensus label, when a quantity has several.
    #[arg(long)]
    label: Option<String>,
    /// Scale of a bare prior; default from the design's endpoint.
    #[arg(long, value_enum)]
    measure: Option<MeasureArg>,
}

#[derive(Args, Debug)]
struct AssuranceArgs {
    #[arg(long, conflicts_with_all = ["prior", "session", "quantity", "label", "measure", "design", "method", "n", "seed", "sizes"])]
    request: Option<PathBuf>,
    #[command(flatten)]
    source: PriorSource,
    #[arg(long, required_unless_present = "request")]
    design: Option<PathBuf>,
    #[arg(long, value_enum, required_unless_present = "request")]
    method: Option<MethodArg>,
    /// Prior draws for Monte Carlo.
    #[arg(long, required_if_eq("method", "mc"))]
    n: Option<usize>,
    #[arg(long, required_if_eq("method", "mc"))]
    seed: Option<u64>,
    /// Sample sizes for an assurance curve.
    #[arg(long)]
    sizes: Option<String>,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args, Debug)]
struct OcArgs {
    #[arg(long, conflicts_with_all = ["prior", "session", "quantity", "label", "measure", "design", "sims", "seed"])]
    request: Option<PathBuf>,
    #[command(flatten)]
    source: PriorSource,
    #[arg(long, required_unless_present = "request")]
    design: Option<PathBuf>,
    #[arg(long, required_unless_present = "request")]
    sims: Option<usize>,
    #[arg(long, required_unless_present = "request")]
    seed: Option<u64>,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum RecordFormatArg {
    Markdown,
    Html,
    Json,
}

#[derive(Args, Debug)]
struct RecordArgs {
    #[arg(long)]
    session: PathBuf,
    #[arg(long, value_enum, default_value = "markdown")]
    format: RecordFormatArg,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1:8080")]
    bind: std::net::SocketAddr,
    /// Session store directory.
    #[arg(long)]
    store: PathBuf,
    /// Directory of built front-end assets.
    #[arg(long = "static")]
    static_dir: Option<PathBuf>,
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::Schema(format!("{}: {e}", path.display())))
}

fn list(s: &Option<String>) -> Result<Option<Vec<f64>>> {
    s.as_deref().map(parse_f64_list).transpose()
}

fn required_list(s: &Option<String>, flag: &str) -> Result<Vec<f64>> {
    list(s)?.ok_or_else(|| Error::Judgement(format!("--{flag} is required for this method")))
}

fn pair(s: &Option<String>, what: &str) -> Result<Option<(f64, f64)>> {
    match list(s)? {
        None => Ok(None),
        Some(v) if v.len() == 2 => Ok(Some((v[0], v[1]))),
        Some(_) => Err(Error::Parameter(format!("{what} needs exactly two numbers"))),
    }
}

pub const MAX_GRID_POINTS: usize = 100_000;

/// A list of points or `lo:hi:n` for n evenly spaced points.
pub fn parse_grid(s: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() == 3 {
        let lo: f64 = parts[0].trim().parse().map_err(|_| Error::Domain(format!("bad grid '{s}'")))?;
        let hi: f64 = parts[1].trim().parse().map_err(|_| Error::Domain(format!("bad grid '{s}'")))?;
        let n: usize = parts[2].trim().parse().map_err(|_| Error::Domain(format!("bad grid '{s}'")))?;
        if !(2..=MAX_GRID_POINTS).contains(&n) || !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::Domain(format!("grid '{s}' needs lo < hi and 2 <= n <= {MAX_GRID_POINTS}")));
        }
        return Ok((0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect());
    }
    parse_f64_list(s)
}

fn grid(s: &Option<String>) -> Result<Option<Vec<f64>>> {
    s.as_deref().map(parse_grid).transpose()
}

fn families(s: &Option<String>) -> Result<Option<Vec<Family>>> {
    s.as_deref().map(|s| s.split(',').map(|f| f.parse()).collect()).transpose()
}

fn u32_list(s: &Option<String>, flag: &str) -> Result<Vec<u32>> {
    let s = s.as_deref().ok_or_else(|| Error::Judgement(format!("--{flag} is required for this method")))?;
    s.split(',')
        .map(|t| t.trim().parse::<u32>().map_err(|_| Error::Judgement(format!("'{t}' is not a chip count"))))
        .collect()
}

fn fit_request(a: &FitArgs) -> Result<FitRequest> {
    if let Some(p) = &a.request {
        return read_json(p);
    }
    let judgement = match (&a.judgement, a.method) {
        (Some(p), _) => read_json(p)?,
        (None, Some(JudgementMethod::Quartile)) => {
            let q = required_list(&a.q, "q")?;
            if q.len() != 3 {
                return Err(Error::Judgement("--q needs three quartiles".into()));
            }
            let mut j = QuartileJudgement::new(q[0], q[1], q[2]);
            if let Some((lo, hi)) = pair(&a.plausible, "--plausible")? {
                j.plausible_lower = Some(lo);
                j.plausible_upper = Some(hi);
            }
            Judgement::Quartile(j)
        }
        (None, Some(JudgementMethod::Roulette)) => Judgement::Roulette(RouletteGrid {
            bin_edges: required_list(&a.edges, "edges")?,
            chips: u32_list(&a.chips, "chips")?,
        }),
        (None, Some(JudgementMethod::Probability)) => Judgement::Probability(ProbabilityJudgement {
            thresholds: required_list(&a.thresholds, "thresholds")?,
            probs: required_list(&a.probs, "probs")?,
        }),
        (None, None) => return Err(Error::Judgement("no judgement given".into())),
    };
    let support = pair(&a.support, "--support")?.map(|(lo, hi)| Interval::new(lo, hi)).transpose()?;
    Ok(FitRequest { judgement, families: families(&a.family)?, support })
}

fn pool_request(a: &PoolArgs) -> Result<PoolRequest> {
    if let Some(p) = &a.request {
        return read_json(p);
    }
    let distributions: Vec<Distribution> = read_json(a.dists.as_ref().expect("required by clap"))?;
    Ok(PoolRequest::Linear { distributions, weights: list(&a.weights)?, grid: grid(&a.grid)? })
}

fn spike_request(a: &SpikeArgs) -> Result<PoolRequest> {
    if let Some(p) = &a.request {
        return read_json(p);
    }
    let conditional: Distribution = read_json(a.conditional.as_ref().expect("required by clap"))?;
    let weight = a.weight.expect("required by clap");
    Ok(match &a.control {
        Some(c) => PoolRequest::ActiveResponse {
            control: read_json(c)?,
            conditional_active: conditional,
            w_no_benefit: weight,
            grid: grid(&a.grid)?,
        },
        None => PoolRequest::SpikeAndSmear { conditional, weight, location: a.location, grid: grid(&a.grid)? },
    })
}

fn transform_request(a: &TransformArgs) -> Result<TransformRequest> {
    if let Some(p) = &a.request {
        return read_json(p);
    }
    let scale = match a.scale.expect("required by clap") {
        ScaleArg::Absolute => EffectScale::AbsoluteDifference,
        ScaleArg::Relative => EffectScale::RelativeDifference { convention: a.convention.into() },
    };
    Ok(TransformRequest::ControlEffect {
        control: read_json(a.control.as_ref().expect("required by clap"))?,
        effect: read_json(a.effect.as_ref().expect("required by clap"))?,
        scale,
        n: a.n.expect("required by clap"),
        seed: a.seed.expect("required by clap"),
        allow_clamp: a.allow_clamp,
        refit_families: families(&a.refit)?,
    })
}

fn hr_request(a: &HrArgs) -> Result<TransformRequest> {
    if let Some(p) = &a.request {
        return read_json(p);
    }
    if let (Some(pc), Some(pa)) = (a.pc, a.pa) {
        return Ok(TransformRequest::HazardRatioPoint { p_control: pc, p_active: pa });
    }
    let rel: Prior = read_json(a.rel_diff.as_ref().expect("required by clap"))?;
    Ok(TransformRequest::HazardRatio {
        elicitation: SurvivalElicitation {
            horizon: a.horizon.expect("required by clap"),
            p_control_prior: read_json(a.control_prior.as_ref().expect("required by clap"))?,
            rel_diff_prior: rel,
            convention: a.convention.into(),
        },
        n: a.n.expect("required by clap"),
        seed: a.seed.expect("required by clap"),
        allow_clamp: a.allow_clamp,
        refit_families: families(&a.refit)?,
    })
}

fn dose_request(a: &DoseArgs) -> Result<DoseRequest> {
    if let Some(p) = &a.request {
        return read_json(p);
    }
    let elicitation: DoseElicitation = read_json(a.elicitation.as_ref().expect("required by clap"))?;
    let models = a
        .models
        .as_deref()
        .expect("required by clap")
        .split(',')
        .map(|m| m.trim().parse::<ModelKind>())
        .collect::<Result<Vec<_>>>()?;
    Ok(DoseRequest {
        elicitation,
        models,
        draws: a.draws.expect("required by clap"),
        seed: a.seed.expect("required by clap"),
        grid: grid(&a.grid)?,
        levels: pair(&a.levels, "--levels")?.unwrap_or((0.05, 0.95)),
    })
}

fn default_measure(design: &TrialDesign) -> EffectMeasure {
    match design.endpoint {
        Endpoint::TimeToEvent { .. } => EffectMeasure::HazardRatio,
        _ => EffectMeasure::Difference,
    }
}

fn prior_spec(src: &PriorSource, design: &TrialDesign) -> Result<PriorSpec> {
    let measure = |m: Option<MeasureArg>| match m {
        Some(MeasureArg::Difference) => EffectMeasure::Difference,
        Some(MeasureArg::HazardRatio) => EffectMeasure::HazardRatio,
        None => default_measure(design),
    };
    if let Some(path) = &src.session {
        let session = Session::load(path)?;
        let quantity = src.quantity.as_deref().expect("required by clap");
        let entry = session.consensus_prior(quantity, src.label.as_deref())?;
        return Ok(PriorSpec::new(measure(src.measure), entry.prior.clone()));
    }
    let path = src.prior.as_ref().ok_or_else(|| Error::Design("give --prior or --session".into()))?;
    let v: Value = read_json(path)?;
    if v.get("measure").is_some() {
        serde_json::from_value(v).map_err(|e| Error::Schema(format!("{}: {e}", path.display())))
    } else {
        let prior: Prior = serde_json::from_value(v).map_err(|e| Error::Schema(format!("{}: {e}", path.display())))?;
        Ok(PriorSpec::new(measure(src.measure), prior))
    }
}

fn assurance_request(a: &AssuranceArgs) -> Result<AssuranceRequest> {
    if let Some(p) = &a.request {
        return read_json(p);
    }
    let design: TrialDesign = read_json(a.design.as_ref().expect("required by clap"))?;
    let sizes = match &a.sizes {
        None => None,
        Some(s) => Some(
            s.split(',')
                .map(|t| t.trim().parse::<u64>().map_err(|_| Error::Design(format!("'{t}' is not a sample size"))))
                .collect::<Result<Vec<_>>>()?,
        ),
    };
    Ok(AssuranceRequest {
        prior: prior_spec(&a.source, &design)?,
        design,
        method: match a.method.expect("required by clap") {
            MethodArg::Quadrature => AssuranceMethod::Quadrature,
            MethodArg::Mc => AssuranceMethod::MonteCarlo,
        },
        n: a.n,
        seed: a.seed,
        sizes,
    })
}

fn oc_request(a: &OcArgs) -> Result<OcRequest> {
    if let Some(p) = &a.request {
        return read_json(p);
    }
    let design: TrialDesign = read_json(a.design.as_ref().expect("required by clap"))?;
    Ok(OcRequest {
        prior: prior_spec(&a.source, &design)?,
        design,
        sims: a.sims.expect("required by clap"),
        seed: a.seed.expect("required by clap"),
    })
}

fn emit(text: &str, out_path: &Option<PathBuf>, stdout: &mut dyn Write) -> Result<()> {
    match out_path {
        Some(p) => std::fs::write(p, text).map_err(|e| Error::Io(format!("{}: {e}", p.display()))),
        None => stdout.write_all(text.as_bytes()).map_err(Error::from),
    }
}

fn json_line<T: serde::Serialize>(v: &T) -> String {
    let mut s = to_json(v);
    s.push('\n');
    s
}

fn render<T: serde::Serialize>(
    v: &T,
    o: &OutputArgs,
    csv: impl FnOnce(&T) -> String,
    stdout: &mut dyn Write,
) -> Result<()> {
    let text = match o.format {
        Format::Json => json_line(v),
        Format::Csv => csv(v),
    };
    emit(&text, &o.out, stdout)
}

fn pool_csv(r: &PoolResponse) -> String {
    r.plot_csv().unwrap_or_else(|| format!("mean,variance\n{},{}\n", r.mean, r.variance))
}

fn execute(cmd: Command, stdout: &mut dyn Write) -> std::result::Result<(), ApiError> {
    match cmd {
        Command::Serve(a) => serve(a),
        other => compute(other, stdout).map_err(ApiError::from),
    }
}

fn compute(cmd: Command, stdout: &mut dyn Write) -> Result<()> {
    match cmd {
        Command::Fit(a) => {
            let out = fit_request(&a)?.run()?;
            render(&out, &a.output, fits_to_csv, stdout)
        }
        Command::Pool(a) => {
            let out = pool_request(&a)?.run()?;
            render(&out, &a.output, pool_csv, stdout)
        }
        Command::Spike(a) => {
            let out = spike_request(&a)?.run()?;
            render(&out, &a.output, pool_csv, stdout)
        }
        Command::Transform(a) => {
            let out = transform_request(&a)?.run()?;
            render(&out, &a.output, |r| r.to_csv(), stdout)
        }
        Command::Hr(a) => {
            let out = hr_request(&a)?.run()?;
            render(&out, &a.output, |r| r.to_csv(), stdout)
        }
        Command::DoseFit(a) => {
            let out = dose_request(&a)?.run()?;
            render(&out, &a.output, |r| r.to_csv(), stdout)
        }
        Command::Assurance(a) => {
            let out = assurance_request(&a)?.run()?;
            render(&out, &a.output, |r| r.to_csv(), stdout)
        }
        Command::Oc(a) => {
            let out = oc_request(&a)?.run()?;
            render(&out, &a.output, |r| r.to_csv(), stdout)
        }
        Command::Record(a) => {
            let session = Session::load(&a.session)?;
            let format = match a.format {
                RecordFormatArg::Markdown => RecordFormat::Markdown,
                RecordFormatArg::Html => RecordFormat::Html,
                RecordFormatArg::Json => RecordFormat::Json,
            };
            emit(&session.export_record(format)?, &a.out, stdout)
        }
        Command::Serve(_) => unreachable!("handled by execute"),
    }
}

fn serve(a: ServeArgs) -> std::result::Result<(), ApiError> {
    let config = elicit_service::ServiceConfig { bind: a.bind, store: a.store, static_dir: a.static_dir };
    let rt = tokio::runtime::Runtime::new().map_err(|e| ApiError::from(Error::from(e)))?;
    rt.block_on(async {
        let running = elicit_service::start(config).await?;
        eprintln!("listening on http://{}", running.addr);
        let _ = tokio::signal::ctrl_c().await;
        running.shutdown().await
    })
    .map_err(|e| e.to_api_error())
}

/// Run with explicit arguments (including the program name) and output
/// streams; returns the process exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let text = e.render().to_string();
            return if e.use_stderr() {
                let _ = stderr.write_all(text.as_bytes());
                2
            } else {
                let _ = stdout.write_all(text.as_bytes());
                0
            };
        }
    };
    match execute(cli.command, stdout) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(stderr, "{}", serde_json::to_string(&e).expect("error serializes"));
            1
        }
    }
}
