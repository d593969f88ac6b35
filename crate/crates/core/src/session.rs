//! Facilitated elicitation sessions: experts, evidence dossier, masked
//! individual judgements, reveal and discussion, consensus and the written
//! record.
//!
//! Operations mutate a [`Session`] in place and either succeed completely or
//! leave it untouched.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::dist::{Family, Interval};
use crate::error::{Error, Result};
use crate::fit::{fit_judgement, RankedFits};
use crate::judgement::{Judgement, Method};
use crate::pooling::{linear_pool, plot_series, PlotSeries};
use crate::prior::Prior;
use crate::transforms::RelativeConvention;

pub const SESSION_SCHEMA_VERSION: u32 = 1;

/// Points in each plot series written to the record.
pub const RECORD_PLOT_POINTS: usize = 41;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Setup,
    Training,
    IndividualElicitation,
    Discussion,
    Consensus,
    Documented,
}

impl Stage {
    pub const ALL: [Stage; 6] = [
        Stage::Setup,
        Stage::Training,
        Stage::IndividualElicitation,
        Stage::Discussion,
        Stage::Consensus,
        Stage::Documented,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Setup => "setup",
            Stage::Training => "training",
            Stage::IndividualElicitation => "individual_elicitation",
            Stage::Discussion => "discussion",
            Stage::Consensus => "consensus",
            Stage::Documented => "documented",
        }
    }

    pub fn next(self) -> Option<Stage> {
        Stage::ALL.iter().position(|&s| s == self).and_then(|i| Stage::ALL.get(i + 1).copied())
    }
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Stage::ALL.iter().copied().find(|st| st.name() == s).ok_or_else(|| Error::Stage(format!("unknown stage '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Expert {
    pub id: String,
    pub name: String,
    #[serde(default)]
    pub affiliation: String,
    /// Declared conflicts of interest.
    #[serde(default)]
    pub conflicts: String,
    #[serde(default)]
    pub trained: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuantityScale {
    Effect,
    Response,
}

fn default_families() -> Vec<Family> {
    Family::FITTABLE.to_vec()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantityDefinition {
    pub name: String,
    #[serde(default)]
    pub units: String,
    pub scale: QuantityScale,
    pub definition: String,
    pub method: Method,
    /// Bin edges fixed by the facilitator for roulette elicitation.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub roulette_edges: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub support: Option<Interval>,
    #[serde(default = "default_families")]
    pub families: Vec<Family>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relative_convention: Option<RelativeConvention>,
}

impl QuantityDefinition {
    fn validate(&self) -> Result<()> {
        if self.name.trim().is_empty() {
            return Err(Error::Config("quantity name is empty".into()));
        }
        if self.definition.trim().is_empty() {
            return Err(Error::Config(format!("quantity '{}' has no definition text", self.name)));
        }
        if self.families.is_empty() || self.families.iter().any(|f| !Family::FITTABLE.contains(f)) {
            return Err(Error::Config(format!("quantity '{}' needs one or more fittable families", self.name)));
        }
        if let Some(e) = &self.roulette_edges {
            if self.method != Method::Roulette {
                return Err(Error::Config(format!(
                    "quantity '{}' has bin edges but is not a roulette quantity",
                    self.name
                )));
            }
            if e.len() < 3 || !e.iter().all(|x| x.is_finite()) || !e.windows(2).all(|w| w[0] < w[1]) {
                return Err(Error::Config(format!("quantity '{}' bin edges must be finite and increasing", self.name)));
            }
        }
        Ok(())
    }

    fn check_judgement(&self, j: &Judgement) -> Result<()> {
        if j.method() != self.method {
            return Err(Error::Judgement(format!(
                "quantity '{}' is elicited with the {} method",
                self.name,
                method_name(self.method)
            )));
        }
        if let (Judgement::Roulette(g), Some(edges)) = (j, &self.roulette_edges) {
            if &g.bin_edges != edges {
                return Err(Error::Judgement(format!("roulette bins differ from those set for '{}'", self.name)));
            }
        }
        j.validate()
    }
}

fn method_name(m: Method) -> &'static str {
    match m {
        Method::Quartile => "quartile",
        Method::Roulette => "roulette",
        Method::Probability => "probability",
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DossierItem {
    pub title: String,
    #[serde(default)]
    pub source: String,
    #[serde(default)]
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgementEntry {
    pub expert: String,
    pub quantity: String,
    pub round: u32,
    /// 1 for the first submission in a round, incremented on resubmission.
    pub revision: u32,
    pub superseded: bool,
    pub judgement: Judgement,
    pub fits: RankedFits,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConsensusMethod {
    /// Re-elicited from the group as a rational independent observer.
    Rio,
    /// Equal-weight linear pool of the round's individual fits.
    Pooled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsensusEntry {
    pub quantity: String,
    pub label: String,
    pub method: ConsensusMethod,
    pub round: u32,
    pub prior: Prior,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub judgement: Option<Judgement>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fits: Option<RankedFits>,
    /// Experts whose fits were pooled, in pool order.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub pooled_experts: Vec<String>,
    pub rationale: String,
}

/// Consensus input: a group judgement or a request to pool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum ConsensusInput {
    Rio { judgement: Judgement },
    Pooled,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Note {
    /// Unix time in milliseconds, supplied by the caller.
    pub at_ms: u64,
    pub author: String,
    pub stage: Stage,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transition {
    pub from: Stage,
    pub to: Stage,
    pub round: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    #[serde(default)]
    pub title: String,
    pub experts: Vec<Expert>,
    pub quantities: Vec<QuantityDefinition>,
    #[serde(default)]
    pub dossier: Vec<DossierItem>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub schema_version: u32,
    pub id: String,
    pub title: String,
    pub stage: Stage,
    pub round: u32,
    pub experts: Vec<Expert>,
    pub dossier: Vec<DossierItem>,
    pub quantities: Vec<QuantityDefinition>,
    /// Append-only; resubmissions mark the earlier entry superseded.
    pub judgements: Vec<JudgementEntry>,
    pub consensus: Vec<ConsensusEntry>,
    pub notes: Vec<Note>,
    pub transitions: Vec<Transition>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Requester {
    Facilitator,
    Expert(String),
}

impl Requester {
    fn label(&self) -> String {
        match self {
            Requester::Facilitator => "facilitator".into(),
            Requester::Expert(id) => format!("expert:{id}"),
        }
    }
}

/// What one participant may see.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionView {
    pub id: String,
    pub title: String,
    pub requester: String,
    pub stage: Stage,
    pub round: u32,
    pub revealed: bool,
    pub experts: Vec<Expert>,
    pub dossier: Vec<DossierItem>,
    pub quantities: Vec<QuantityDefinition>,
    pub judgements: Vec<JudgementEntry>,
    pub consensus: Vec<ConsensusEntry>,
    pub notes: Vec<Note>,
    pub transitions: Vec<Transition>,
}

pub fn create_session(config: SessionConfig) -> Result<Session> {
    if config.experts.is_empty() {
        return Err(Error::Config("a session needs at least one expert".into()));
    }
    if config.quantities.is_empty() {
        return Err(Error::Config("a session needs at least one quantity".into()));
    }
    let mut ids = BTreeSet::new();
    for e in &config.experts {
        if e.id.trim().is_empty() {
            return Err(Error::Config("expert id is empty".into()));
        }
        if !ids.insert(e.id.as_str()) {
            return Err(Error::Config(format!("duplicate expert id '{}'", e.id)));
        }
    }
    let mut names = BTreeSet::new();
    for q in &config.quantities {
        q.validate()?;
        if !names.insert(q.name.as_str()) {
            return Err(Error::Config(format!("duplicate quantity '{}'", q.name)));
        }
    }
    let id = match config.id {
        Some(id) if id.trim().is_empty() => return Err(Error::Config("session id is empty".into())),
        Some(id) => id,
        None => uuid::Uuid::new_v4().to_string(),
    };
    Ok(Session {
        schema_version: SESSION_SCHEMA_VERSION,
        id,
        title: config.title,
        stage: Stage::Setup,
        round: 1,
        experts: config.experts,
        dossier: config.dossier,
        quantities: config.quantities,
        judgements: Vec::new(),
        consensus: Vec::new(),
        notes: Vec::new(),
        transitions: Vec::new(),
    })
}

impl Session {
    pub fn expert(&self, id: &str) -> Option<&Expert> {
        self.experts.iter().find(|e| e.id == id)
    }

    pub fn quantity(&self, name: &str) -> Result<&QuantityDefinition> {
        self.quantities
            .iter()
            .find(|q| q.name == name)
            .ok_or_else(|| Error::NotFound(format!("no quantity named '{name}'")))
    }

    fn require_stage(&self, stage: Stage, what: &str) -> Result<()> {
        if self.stage != stage {
            return Err(Error::Stage(format!("{what} requires stage {stage}, session is in {}", self.stage)));
        }
        Ok(())
    }

    pub fn revealed(&self) -> bool {
        self.stage >= Stage::Discussion
    }

    pub fn advance(&mut self, to: Stage) -> Result<()> {
        let from = self.stage;
        let reelicit = from == Stage::Discussion && to == Stage::IndividualElicitation;
        if !reelicit && from.next() != Some(to) {
            return Err(Error::Stage(format!("cannot move from {from} to {to}")));
        }
        if to == Stage::IndividualElicitation && !reelicit {
            let untrained: Vec<&str> = self.experts.iter().filter(|e| !e.trained).map(|e| e.id.as_str()).collect();
            if !untrained.is_empty() {
                return Err(Error::Stage(format!("experts not yet trained: {}", untrained.join(", "))));
            }
        }
        if reelicit {
            self.round += 1;
        }
        self.stage = to;
        self.transitions.push(Transition { from, to, round: self.round });
        Ok(())
    }

    pub fn mark_trained(&mut self, expert: &str) -> Result<()> {
        if self.stage > Stage::Training {
            return Err(Error::Stage(format!("training is recorded before elicitation, session is in {}", self.stage)));
        }
        let e = self
            .experts
            .iter_mut()
            .find(|e| e.id == expert)
            .ok_or_else(|| Error::NotFound(format!("no expert with id '{expert}'")))?;
        e.trained = true;
        Ok(())
    }

    pub fn add_dossier_item(&mut self, item: DossierItem) -> Result<()> {
        if self.stage > Stage::Training {
            return Err(Error::Stage("the dossier is closed once elicitation starts".into()));
        }
        if item.title.trim().is_empty() {
            return Err(Error::Config("dossier item needs a title".into()));
        }
        self.dossier.push(item);
        Ok(())
    }

    pub fn add_note(&mut self, author: &str, text: &str, at_ms: u64) -> Result<()> {
        if text.trim().is_empty() {
            return Err(Error::Record("note text is empty".into()));
        }
        self.notes.push(Note { at_ms, author: author.to_string(), stage: self.stage, text: text.to_string() });
        Ok(())
    }

    /// Store a judgement for the current round and attach its ranked fits.
    pub fn submit_judgement(&mut self, expert: &str, quantity: &str, judgement: Judgement) -> Result<&JudgementEntry> {
        self.require_stage(Stage::IndividualElicitation, "submitting a judgement")?;
        if self.expert(expert).is_none() {
            return Err(Error::NotFound(format!("no expert with id '{expert}'")));
        }
        let q = self.quantity(quantity)?;
        q.check_judgement(&judgement)?;
        let fits = fit_judgement(&judgement, &q.families, q.support)?;
        let round = self.round;
        let mut revision = 1;
        for e in self.judgements.iter_mut() {
            if e.expert == expert && e.quantity == quantity && e.round == round && !e.superseded {
                e.superseded = true;
                revision = e.revision + 1;
            }
        }
        self.judgements.push(JudgementEntry {
            expert: expert.to_string(),
            quantity: quantity.to_string(),
            round,
            revision,
            superseded: false,
            judgement,
            fits,
        });
        Ok(self.judgements.last().expect("just pushed"))
    }

    /// Current (non-superseded) entries for a quantity in a round, in expert order.
    pub fn current_entries(&self, quantity: &str, round: u32) -> Vec<&JudgementEntry> {
        self.experts
            .iter()
            .filter_map(|ex| {
                self.judgements
                    .iter()
                    .find(|j| j.expert == ex.id && j.quantity == quantity && j.round == round && !j.superseded)
            })
            .collect()
    }

    pub fn visible_state(&self, requester: &Requester) -> Result<SessionView> {
        if let Requester::Expert(id) = requester {
            if self.expert(id).is_none() {
                return Err(Error::Auth(format!("unknown expert '{id}'")));
            }
        }
        let revealed = self.revealed();
        let sees = |owner: &str| match requester {
            Requester::Facilitator => true,
            Requester::Expert(id) => revealed || owner == id,
        };
        let notes = match requester {
            Requester::Expert(_) if !revealed => Vec::new(),
            _ => self.notes.clone(),
        };
        Ok(SessionView {
            id: self.id.clone(),
            title: self.title.clone(),
            requester: requester.label(),
            stage: self.stage,
            round: self.round,
            revealed,
            experts: self.experts.clone(),
            dossier: self.dossier.clone(),
            quantities: self.quantities.clone(),
            judgements: self.judgements.iter().filter(|j| sees(&j.expert)).cloned().collect(),
            consensus: self.consensus.clone(),
            notes,
            transitions: self.transitions.clone(),
        })
    }

    pub fn set_consensus(
        &mut self,
        quantity: &str,
        label: &str,
        input: ConsensusInput,
        rationale: &str,
    ) -> Result<&ConsensusEntry> {
        self.require_stage(Stage::Consensus, "recording a consensus prior")?;
        if rationale.trim().is_empty() {
            return Err(Error::Record("a consensus prior needs a rationale".into()));
        }
        if label.trim().is_empty() {
            return Err(Error::Record("a consensus prior needs a label".into()));
        }
        let q = self.quantity(quantity)?;
        if self.consensus.iter().any(|c| c.quantity == quantity && c.label == label) {
            return Err(Error::Record(format!("consensus '{label}' already exists for '{quantity}'")));
        }
        let entry = match input {
            ConsensusInput::Rio { judgement } => {
                judgement.validate()?;
                let fits = fit_judgement(&judgement, &q.families, q.support)?;
                ConsensusEntry {
                    quantity: quantity.to_string(),
                    label: label.to_string(),
                    method: ConsensusMethod::Rio,
                    round: self.round,
                    prior: Prior::Dist(fits.best().distribution),
                    judgement: Some(judgement),
                    fits: Some(fits),
                    pooled_experts: Vec::new(),
                    rationale: rationale.to_string(),
                }
            }
            ConsensusInput::Pooled => {
                let entries = self.current_entries(quantity, self.round);
                if entries.is_empty() {
                    return Err(Error::Record(format!(
                        "no individual fits to pool for '{quantity}' in round {}",
                        self.round
                    )));
                }
                let dists: Vec<_> = entries.iter().map(|e| e.fits.best().distribution).collect();
                let pool = linear_pool(&dists, None)?;
                ConsensusEntry {
                    quantity: quantity.to_string(),
                    label: label.to_string(),
                    method: ConsensusMethod::Pooled,
                    round: self.round,
                    prior: Prior::Mixture(pool),
                    judgement: None,
                    fits: None,
                    pooled_experts: entries.iter().map(|e| e.expert.clone()).collect(),
                    rationale: rationale.to_string(),
                }
            }
        };
        self.consensus.push(entry);
        Ok(self.consensus.last().expect("just pushed"))
    }

    /// Consensus prior for a quantity; the label may be omitted when only one exists.
    pub fn consensus_prior(&self, quantity: &str, label: Option<&str>) -> Result<&ConsensusEntry> {
        let matching: Vec<&ConsensusEntry> =
            self.consensus.iter().filter(|c| c.quantity == quantity && label.is_none_or(|l| c.label == l)).collect();
        match (matching.len(), label) {
            (0, _) => Err(Error::NotFound(format!(
                "no consensus prior for '{quantity}'{}",
                label.map(|l| format!(" labelled '{l}'")).unwrap_or_default()
            ))),
            (1, _) => Ok(matching[0]),
            (_, _) => Err(Error::Record(format!(
                "several consensus priors for '{quantity}'; choose a label: {}",
                matching.iter().map(|c| c.label.as_str()).collect::<Vec<_>>().join(", ")
            ))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SESSION_SCHEMA_VERSION {
            return Err(schema_mismatch(self.schema_version as u64));
        }
        let mut ids = BTreeSet::new();
        for e in &self.experts {
            if !ids.insert(e.id.as_str()) {
                return Err(Error::Schema(format!("duplicate expert id '{}' in session file", e.id)));
            }
        }
        if self.round == 0 {
            return Err(Error::Schema("round must be at least 1".into()));
        }
        for q in &self.quantities {
            q.validate().map_err(|e| Error::Schema(e.message().to_string()))?;
        }
        for j in &self.judgements {
            if !ids.contains(j.expert.as_str()) || self.quantity(&j.quantity).is_err() || j.round > self.round {
                return Err(Error::Schema("judgement refers to an unknown expert, quantity or round".into()));
            }
            if j.fits.fits.is_empty() {
                return Err(Error::Schema("judgement entry without fits".into()));
            }
        }
        for c in &self.consensus {
            if self.quantity(&c.quantity).is_err() || c.rationale.trim().is_empty() {
                return Err(Error::Schema("consensus entry refers to an unknown quantity or lacks a rationale".into()));
            }
            c.prior.validate().map_err(|e| Error::Schema(e.message().to_string()))?;
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("session serializes")
    }

    pub fn from_json(text: &str) -> Result<Session> {
        let v: Value = serde_json::from_str(text).map_err(|e| Error::Schema(format!("corrupted session file: {e}")))?;
        let version = v
            .get("schema_version")
            .and_then(Value::as_u64)
            .ok_or_else(|| Error::Schema("session file has no schema_version".into()))?;
        if version != SESSION_SCHEMA_VERSION as u64 {
            return Err(schema_mismatch(version));
        }
        let s: Session =
            serde_json::from_value(v).map_err(|e| Error::Schema(format!("corrupted session file: {e}")))?;
        s.validate()?;
        Ok(s)
    }

    /// Write atomically: a temporary file in the same directory is renamed over the target.
    pub fn save(&self, path: &Path) -> Result<()> {
        let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
        let file_name = path
            .file_name()
            .ok_or_else(|| Error::Io(format!("not a file path: {}", path.display())))?
            .to_string_lossy();
        let tmp = dir.join(format!(".{file_name}.{}.tmp", std::process::id()));
        std::fs::write(&tmp, self.to_json())?;
        std::fs::rename(&tmp, path).inspect_err(|_| {
            let _ = std::fs::remove_file(&tmp);
        })?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Session> {
        let text = std::fs::read_to_string(path)?;
        Session::from_json(&text)
    }

    pub fn export_record(&self, format: RecordFormat) -> Result<String> {
        if self.stage < Stage::Discussion {
            return Err(Error::Stage(format!(
                "the record is available from the discussion stage, session is in {}",
                self.stage
            )));
        }
        let record = ElicitationRecord::build(self)?;
        Ok(match format {
            RecordFormat::Json => serde_json::to_string_pretty(&record).expect("record serializes"),
            RecordFormat::Markdown => record.to_markdown(),
            RecordFormat::Html => record.to_html(),
        })
    }
}

fn schema_mismatch(found: u64) -> Error {
    Error::Schema(format!(
        "session schema version {found} is not supported (this build reads version {SESSION_SCHEMA_VERSION}); \
         re-export the session with a matching build or migrate the file to version {SESSION_SCHEMA_VERSION}"
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordFormat {
    Markdown,
    Html,
    Json,
}

impl std::str::FromStr for RecordFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "markdown" | "md" => Ok(RecordFormat::Markdown),
            "html" => Ok(RecordFormat::Html),
            "json" => Ok(RecordFormat::Json),
            other => Err(Error::Config(format!("unknown record format '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedBlock {
    pub expert: String,
    /// None when the expert made no submission for this quantity in the round.
    pub current: Option<JudgementEntry>,
    pub earlier_revisions: Vec<JudgementEntry>,
    pub plot: Option<PlotSeries>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantityRound {
    pub round: u32,
    pub quantity: String,
    pub blocks: Vec<FittedBlock>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsensusBlock {
    pub entry: ConsensusEntry,
    pub plot: PlotSeries,
}

/// Written record of a session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElicitationRecord {
    pub schema_version: u32,
    pub session_id: String,
    pub title: String,
    pub stage: Stage,
    pub rounds: u32,
    pub experts: Vec<Expert>,
    pub dossier: Vec<DossierItem>,
    pub quantities: Vec<QuantityDefinition>,
    pub individual: Vec<QuantityRound>,
    pub notes: Vec<Note>,
    pub consensus: Vec<ConsensusBlock>,
    pub transitions: Vec<Transition>,
}

fn plot_grid(prior: &Prior) -> Result<Vec<f64>> {
    let lo = prior.quantile(0.005)?;
    let hi = prior.quantile(0.995)?;
    let (lo, hi) = if hi > lo { (lo, hi) } else { (lo - 1.0, lo + 1.0) };
    let n = RECORD_PLOT_POINTS - 1;
    Ok((0..=n).map(|i| lo + (hi - lo) * i as f64 / n as f64).collect())
}

fn plot_for(prior: &Prior) -> Result<PlotSeries> {
    plot_series(prior, &plot_grid(prior)?)
}

impl ElicitationRecord {
    pub fn build(s: &Session) -> Result<ElicitationRecord> {
        let mut individual = Vec::new();
        for round in 1..=s.round {
            for q in &s.quantities {
                let mut blocks = Vec::new();
                for ex in &s.experts {
                    let mine =
                        s.judgements.iter().filter(|j| j.expert == ex.id && j.quantity == q.name && j.round == round);
                    let (current, earlier): (Vec<&JudgementEntry>, Vec<&JudgementEntry>) =
                        mine.partition(|j| !j.superseded);
                    let current = current.into_iter().next().cloned();
                    let plot = match &current {
                        Some(e) => Some(plot_for(&Prior::Dist(e.fits.best().distribution))?),
                        None => None,
                    };
                    blocks.push(FittedBlock {
                        expert: ex.id.clone(),
                        current,
                        earlier_revisions: earlier.into_iter().cloned().collect(),
                        plot,
                    });
                }
                individual.push(QuantityRound { round, quantity: q.name.clone(), blocks });
            }
        }
        let consensus = s
            .consensus
            .iter()
            .map(|c| Ok(ConsensusBlock { entry: c.clone(), plot: plot_for(&c.prior)? }))
            .collect::<Result<Vec<_>>>()?;
        Ok(ElicitationRecord {
            schema_version: s.schema_version,
            session_id: s.id.clone(),
            title: s.title.clone(),
            stage: s.stage,
            rounds: s.round,
            experts: s.experts.clone(),
            dossier: s.dossier.clone(),
            quantities: s.quantities.clone(),
            individual,
            notes: s.notes.clone(),
            consensus,
            transitions: s.transitions.clone(),
        })
    }

    fn document(&self) -> Vec<Block> {
        let mut d = Vec::new();
        let title = if self.title.is_empty() {
            "Elicitation record".to_string()
        } else {
            format!("Elicitation record: {}", self.title)
        };
        d.push(Block::Heading(1, title));
        d.push(Block::List(vec![
            format!("Session: {}", self.session_id),
            format!("Stage: {}", self.stage),
            format!("Rounds: {}", self.rounds),
        ]));

        d.push(Block::Heading(2, "Experts".into()));
        d.push(Block::Table(
            vec!["id", "name", "affiliation", "trained", "declared conflicts"],
            self.experts
                .iter()
                .map(|e| {
                    vec![e.id.clone(), e.name.clone(), e.affiliation.clone(), yes_no(e.trained), e.conflicts.clone()]
                })
                .collect(),
        ));

        d.push(Block::Heading(2, "Evidence dossier".into()));
        if self.dossier.is_empty() {
            d.push(Block::Para("No evidence items.".into()));
        } else {
            d.push(Block::Table(
                vec!["title", "source", "summary"],
                self.dossier.iter().map(|i| vec![i.title.clone(), i.source.clone(), i.text.clone()]).collect(),
            ));
        }

        d.push(Block::Heading(2, "Quantities".into()));
        for q in &self.quantities {
            d.push(Block::Heading(3, q.name.clone()));
            let mut items = vec![
                format!("Method: {}", method_name(q.method)),
                format!("Scale: {}", if q.scale == QuantityScale::Effect { "effect" } else { "response" }),
            ];
            if !q.units.is_empty() {
                items.push(format!("Units: {}", q.units));
            }
            if let Some(e) = &q.roulette_edges {
                items.push(format!("Roulette bins: {}", join_num(e)));
            }
            if let Some(s) = q.support {
                items.push(format!("Support: ({}, {})", s.lower, s.upper));
            }
            if let Some(c) = q.relative_convention {
                items.push(format!(
                    "Relative difference convention: {}",
                    serde_json::to_value(c).expect("enum").as_str().unwrap_or("")
                ));
            }
            items.push(format!("Families: {}", q.families.iter().map(|f| f.name()).collect::<Vec<_>>().join(", ")));
            d.push(Block::List(items));
            d.push(Block::Para(q.definition.clone()));
        }

        d.push(Block::Heading(2, "Individual judgements".into()));
        for qr in &self.individual {
            d.push(Block::Heading(3, format!("Round {}: {}", qr.round, qr.quantity)));
            for b in &qr.blocks {
                d.push(Block::Heading(4, format!("Expert {}", b.expert)));
                match &b.current {
                    None => d.push(Block::Para("No judgement submitted.".into())),
                    Some(e) => {
                        d.push(Block::List(entry_lines(e)));
                        d.push(fits_table(&e.fits));
                        if let Some(p) = &b.plot {
                            d.push(plot_table(p));
                        }
                    }
                }
                for e in &b.earlier_revisions {
                    d.push(Block::Para(format!(
                        "Revision {} (superseded): {}; best fit {}",
                        e.revision,
                        judgement_text(&e.judgement),
                        e.fits.best().distribution
                    )));
                }
            }
        }

        d.push(Block::Heading(2, "Discussion notes".into()));
        if self.notes.is_empty() {
            d.push(Block::Para("No notes recorded.".into()));
        } else {
            d.push(Block::Table(
                vec!["time (unix ms)", "stage", "author", "note"],
                self.notes
                    .iter()
                    .map(|n| vec![n.at_ms.to_string(), n.stage.to_string(), n.author.clone(), n.text.clone()])
                    .collect(),
            ));
        }

        d.push(Block::Heading(2, "Consensus".into()));
        if self.consensus.is_empty() {
            d.push(Block::Para("No consensus prior recorded.".into()));
        }
        for c in &self.consensus {
            let e = &c.entry;
            d.push(Block::Heading(3, format!("{}: {}", e.quantity, e.label)));
            let mut items = vec![
                format!(
                    "Method: {}",
                    if e.method == ConsensusMethod::Rio { "re-elicited (RIO)" } else { "equal-weight linear pool" }
                ),
                format!("Round: {}", e.round),
                format!("Prior: {}", prior_text(&e.prior)),
            ];
            if let Some(j) = &e.judgement {
                items.push(format!("Group judgement: {}", judgement_text(j)));
            }
            if !e.pooled_experts.is_empty() {
                items.push(format!("Pooled experts: {}", e.pooled_experts.join(", ")));
            }
            items.push(format!("Rationale: {}", e.rationale));
            d.push(Block::List(items));
            if let Some(f) = &e.fits {
                d.push(fits_table(f));
            }
            d.push(plot_table(&c.plot));
        }

        d.push(Block::Heading(2, "Stage transitions".into()));
        d.push(Block::Table(
            vec!["from", "to", "round"],
            self.transitions.iter().map(|t| vec![t.from.to_string(), t.to.to_string(), t.round.to_string()]).collect(),
        ));
        d
    }

    pub fn to_markdown(&self) -> String {
        let mut out = String::new();
        for b in self.document() {
            match b {
                Block::Heading(level, text) => {
                    let _ = writeln!(out, "{} {}\n", "#".repeat(level), md_inline(&text));
                }
                Block::Para(text) => {
                    let _ = writeln!(out, "{}\n", md_inline(&text));
                }
                Block::List(items) => {
                    for i in items {
                        let _ = writeln!(out, "- {}", md_inline(&i));
                    }
                    out.push('\n');
                }
                Block::Table(head, rows) => {
                    let _ = writeln!(out, "| {} |", head.join(" | "));
                    let _ = writeln!(out, "|{}", " --- |".repeat(head.len()));
                    for r in rows {
                        let cells: Vec<String> = r.iter().map(|c| md_cell(c)).collect();
                        let _ = writeln!(out, "| {} |", cells.join(" | "));
                    }
                    out.push('\n');
                }
            }
        }
        out
    }

    pub fn to_html(&self) -> String {
        let mut out = String::from("<!DOCTYPE html>\n<html>\n<head>\n<meta charset=\"utf-8\">\n");
        let _ = writeln!(out, "<title>{}</title>\n</head>\n<body>", html_escape(&self.title));
        for b in self.document() {
            match b {
                Block::Heading(level, text) => {
                    let _ = writeln!(out, "<h{level}>{}</h{level}>", html_escape(&text));
                }
                Block::Para(text) => {
                    let _ = writeln!(out, "<p>{}</p>", html_escape(&text));
                }
                Block::List(items) => {
                    out.push_str("<ul>\n");
                    for i in items {
                        let _ = writeln!(out, "<li>{}</li>", html_escape(&i));
                    }
                    out.push_str("</ul>\n");
                }
                Block::Table(head, rows) => {
                    out.push_str("<table>\n<tr>");
                    for h in head {
                        let _ = write!(out, "<th>{}</th>", html_escape(h));
                    }
                    out.push_str("</tr>\n");
                    for r in rows {
                        out.push_str("<tr>");
                        for c in r {
                            let _ = write!(out, "<td>{}</td>", html_escape(&c));
                        }
                        out.push_str("</tr>\n");
                    }
                    out.push_str("</table>\n");
                }
            }
        }
        out.push_str("</body>\n</html>\n");
        out
    }
}

enum Block {
    Heading(usize, String),
    Para(String),
    List(Vec<String>),
    Table(Vec<&'static str>, Vec<Vec<String>>),
}

fn yes_no(b: bool) -> String {
    if b { "yes" } else { "no" }.into()
}

fn join_num(xs: &[f64]) -> String {
    xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ")
}

fn judgement_text(j: &Judgement) -> String {
    match j {
        Judgement::Quartile(q) => {
            let mut s = format!("quartiles {}, {}, {}", q.q25, q.q50, q.q75);
            if let (Some(l), Some(u)) = (q.plausible_lower, q.plausible_upper) {
                let _ = write!(s, "; plausible range [{l}, {u}]");
            }
            s
        }
        Judgement::Roulette(g) => format!(
            "roulette bins [{}], chips [{}]",
            join_num(&g.bin_edges),
            g.chips.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(", ")
        ),
        Judgement::Probability(p) => {
            let pairs: Vec<String> =
                p.thresholds.iter().zip(&p.probs).map(|(t, q)| format!("P(X <= {t}) = {q}")).collect();
            pairs.join(", ")
        }
    }
}

fn prior_text(p: &Prior) -> String {
    match p {
        Prior::Dist(d) => d.to_string(),
        Prior::Mixture(m) => {
            m.components().iter().map(|c| format!("{} x {}", c.weight, c.distribution)).collect::<Vec<_>>().join(" + ")
        }
        Prior::Spike(s) => format!("spike at {} with mass {}, otherwise {}", s.location(), s.weight(), s.conditional),
        Prior::Samples(s) => format!("{} samples, mean {}, sd {}", s.len(), s.summary.mean, s.summary.sd),
    }
}

fn entry_lines(e: &JudgementEntry) -> Vec<String> {
    vec![
        format!("Judgement: {}", judgement_text(&e.judgement)),
        format!("Revision: {}", e.revision),
        format!("Best fit: {}", e.fits.best().distribution),
    ]
}

fn fits_table(f: &RankedFits) -> Block {
    let mut rows: Vec<Vec<String>> = f
        .fits
        .iter()
        .map(|r| {
            vec![
                r.distribution.family().name().to_string(),
                r.distribution.to_string(),
                r.sse.to_string(),
                r.notes.join("; "),
            ]
        })
        .collect();
    rows.extend(f.rejected.iter().map(|r| {
        vec![r.family.name().to_string(), "not fitted".into(), String::new(), format!("{}: {}", r.code, r.reason)]
    }));
    Block::Table(vec!["family", "fitted distribution", "sse", "notes"], rows)
}

fn plot_table(p: &PlotSeries) -> Block {
    let mut rows: Vec<Vec<String>> =
        p.curve.iter().map(|c| vec![c.x.to_string(), c.y.to_string(), String::new()]).collect();
    rows.extend(p.spikes.iter().map(|s| vec![s.location.to_string(), String::new(), s.height.to_string()]));
    Block::Table(vec!["x", "curve", "spike height"], rows)
}

fn md_inline(s: &str) -> String {
    s.replace('\n', " ")
}

fn md_cell(s: &str) -> String {
    s.replace('|', "\\|").replace('\n', " ")
}

fn html_escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&#39;"),
            _ => out.push(c),
        }
    }
    out
}
