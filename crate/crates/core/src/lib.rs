//! Expert prior elicitation and assurance.
//!
//! Judgements captured with the quartile, roulette or probability methods are
//! turned into CDF targets ([`judgement`]), fitted to parametric families
//! ([`fit`]), pooled or combined into spike-and-smear mixtures ([`pooling`]),
//! moved onto other scales ([`transforms`]), turned into dose-response curve
//! ensembles ([`doseresponse`]) and finally integrated against trial designs
//! to give assurance and operating characteristics ([`assurance`]). The
//! [`session`] module keeps the facilitated workflow and its written record.

pub mod api;
pub mod assurance;
pub mod dist;
pub mod doseresponse;
pub mod error;
pub mod fit;
pub mod judgement;
pub mod optim;
pub mod pooling;
pub mod prior;
pub mod rng;
pub mod session;
pub mod transforms;

pub use assurance::{assurance, power, AssuranceMethod, EffectMeasure, Endpoint, PriorSpec, TrialDesign};
pub use dist::{Distribution, EvalKind, Family, Interval};
pub use error::{ApiError, Error, Result};
pub use fit::{fit, fit_best, FitResult, RankedFits};
pub use judgement::{CdfTarget, Judgement, ProbabilityJudgement, QuartileJudgement, RouletteGrid};
pub use pooling::{Mixture, SpikeAndSmear};
pub use prior::Prior;
pub use session::{create_session, Requester, Session, SessionConfig, Stage};
pub use transforms::{EffectScale, SampleDistribution};
