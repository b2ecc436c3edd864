//! Bayesian time-to-event pharmacokinetic model for phase I trials that vary
//! both dose and schedule.
//!
//! The hazard of a dose-limiting toxicity (DLT) is proportional to a latent,
//! normalized drug exposure `E(t)` obtained from a one-compartment model with
//! an effect compartment. A single scalar `log β` is estimated from
//! time-to-first-DLT data and drives escalation with overdose control (EWOC)
//! over a grid of dose-schedule combinations.
//!
//! The crate is `no_std` (it needs `alloc`). IO, file formats, the command
//! line and the HTTP service live in the `titepk` companion crate.
//!
//! Module map:
//! - [`pk`]: effect-compartment concentration, exposure and its running AUC
//! - [`inference`]: prior, likelihood and grid posterior over `log β`
//! - [`escalation`]: EWOC decision tables, assignment and stopping rules
//! - [`sim`]: DLT generators, single-trial engine and operating characteristics
//! - [`scenarios`]: Vidaza constants, published scenarios and reference results

#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;
#[cfg(test)]
extern crate std;

mod error;
pub mod escalation;
pub mod inference;
pub mod pk;
pub mod scenarios;
pub mod sim;

pub use error::{Error, Result};
pub use escalation::{
    check_completion, evaluate_grid, next_patient_assignment, Combination, CombinationGrid,
    Completion, DecisionRow, DecisionTable, Enrollment, EscalationConfig, Rationale, Recommendation,
    Schedule,
    SelectionStrategy, TrialState,
};
pub use inference::{
    default_prior, fit_posterior, interval_probabilities, log_likelihood, prob_dlt_cycle1, prob_dlt_from_auc,
    BetaPrior, DltProbability, IntervalProbabilities,
    LikelihoodSummary, Outcome, PatientRecord, Posterior, DEFAULT_GRID_SIZE,
};
pub use pk::{
    auc_ceff, concentration_eff, fit_keff_from_quantiles, make_exposure, ExposureProfile,
    LogNormal, PkParams, Regimen,
};
pub use sim::{
    run_trial, sample_dlt, trial_rng, DltDraw, DltGenerator, OperatingCharacteristics,
    PatientLog, Scenario, StopReason, StudyAccumulator, ToxicityClass, TrialOutcome, TrialResult,
    TrialSummary,
};
