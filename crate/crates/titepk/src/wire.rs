//! JSON shapes shared by the CLI and the HTTP service. Probabilities are
//! named fields, never positional arrays; times are in hours.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use titepk_core::{
    check_completion, make_exposure, next_patient_assignment, Combination, Completion, DecisionTable,
    OperatingCharacteristics, PatientRecord, PkParams, Regimen, StopReason, ToxicityClass, TrialOutcome,
    TrialState, TrialSummary,
};

use crate::settings::{FieldError, Model};

pub const TIME_UNIT: &str = "hours";

/// One patient's cycle-1 observation. The combination is given either by
/// grid label (`"B-24"`) or by dose and dosing interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecordDto {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub combination: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dose: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub interval_hours: Option<f64>,
    /// `true` if the DLT occurred at `time_hours`; otherwise the patient is
    /// censored there.
    pub dlt: bool,
    pub time_hours: f64,
}

impl RecordDto {
    pub fn labelled(combination: &str, dlt: bool, time_hours: f64) -> Self {
        RecordDto {
            combination: Some(combination.to_string()),
            dose: None,
            interval_hours: None,
            dlt,
            time_hours,
        }
    }

    /// Locate the combination on the grid and validate the time against
    /// `t*`. `field` prefixes error paths, e.g. `records[3]`.
    pub fn resolve(&self, model: &Model, field: &str) -> Result<(Combination, PatientRecord), FieldError> {
        let grid = &model.grid;
        let c = match (&self.combination, self.dose, self.interval_hours) {
            (Some(label), None, None) => grid
                .find_label(label)
                .ok_or_else(|| FieldError::new(format!("{field}.combination"), format!("unknown combination {label:?}")))?,
            (None, Some(dose), Some(interval)) => {
                if !(interval.is_finite() && interval > 0.0) {
                    return Err(FieldError::new(format!("{field}.interval_hours"), "must be finite and > 0"));
                }
                grid.find(dose, 1.0 / interval).ok_or_else(|| {
                    FieldError::new(
                        format!("{field}.dose"),
                        format!("no grid combination with dose {dose} every {interval} h"),
                    )
                })?
            }
            _ => {
                return Err(FieldError::new(
                    format!("{field}.combination"),
                    "give either combination or both dose and interval_hours",
                ))
            }
        };
        let t_star = model.params.t_star();
        let t = self.time_hours;
        if !(t.is_finite() && t >= 0.0) {
            return Err(FieldError::new(format!("{field}.time_hours"), "must be finite and >= 0"));
        }
        if t > t_star {
            return Err(FieldError::new(
                format!("{field}.time_hours"),
                format!("exceeds the cycle length t* = {t_star} h"),
            ));
        }
        let regimen = grid.regimen(c).clone();
        let record = if self.dlt {
            PatientRecord::dlt(regimen, t)
        } else {
            PatientRecord::censored(regimen, t)
        };
        Ok((c, record))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionRowDto {
    pub combination: String,
    pub schedule: String,
    pub dose: f64,
    pub interval_hours: f64,
    /// `AUC_E(t*)`, relative to the reference combination.
    pub cycle_auc: f64,
    pub p_underdose: f64,
    pub p_target: f64,
    pub p_overdose: f64,
    pub ewoc_ok: bool,
    pub n_treated: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "kebab-case")]
pub enum CompletionDto {
    Continue,
    DeclareMtc { combination: String },
    StopNoMtc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionDto {
    pub feasibility_bound: f64,
    pub selection_strategy: String,
    pub no_skip: bool,
    pub n_records: usize,
    pub rows: Vec<DecisionRowDto>,
    /// Next combination to assign, or `null` when every combination fails
    /// the overdose criterion.
    pub recommendation: Option<String>,
    pub rationale: String,
    pub completion: CompletionDto,
    pub posterior_mean_log_beta: f64,
    pub posterior_sd_log_beta: f64,
    pub time_unit: String,
}

/// Fit the posterior to `records` and tabulate the next decision. Random
/// tie-breaking uses a fixed seed so the answer is reproducible.
pub fn decide(model: &Model, records: &[(Combination, PatientRecord)]) -> titepk_core::Result<DecisionDto> {
    let mut state = TrialState::new(model.grid.clone(), model.params, model.prior, model.config.grid_size)?;
    for (c, r) in records {
        state.enroll(*c, r.clone())?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let table = next_patient_assignment(&state, &model.config, &mut rng);
    let completion = check_completion(&state, &table, &model.config);
    Ok(decision_dto(model, &state, &table, completion))
}

fn decision_dto(model: &Model, state: &TrialState, table: &DecisionTable, completion: Completion) -> DecisionDto {
    let grid = &model.grid;
    let rows = table
        .rows
        .iter()
        .map(|r| {
            let s = &grid.schedules()[r.combination.schedule];
            DecisionRowDto {
                combination: grid.label(r.combination),
                schedule: s.label.clone(),
                dose: grid.doses()[r.combination.dose],
                interval_hours: s.interval_hours(),
                cycle_auc: r.cycle_auc,
                p_underdose: r.p_underdose,
                p_target: r.p_target,
                p_overdose: r.p_overdose,
                ewoc_ok: r.ewoc_ok,
                n_treated: state.treated_at(r.combination),
            }
        })
        .collect();
    let cfg = &model.config;
    DecisionDto {
        feasibility_bound: cfg.feasibility_bound,
        selection_strategy: cfg.selection_strategy.name().to_string(),
        no_skip: cfg.no_skip,
        n_records: state.total(),
        rows,
        recommendation: table.recommendation.combination().map(|c| grid.label(c)),
        rationale: table.rationale.code().to_string(),
        completion: match completion {
            Completion::Continue => CompletionDto::Continue,
            Completion::DeclareMtc(c) => CompletionDto::DeclareMtc {
                combination: grid.label(c),
            },
            Completion::StopNoMtc => CompletionDto::StopNoMtc,
        },
        posterior_mean_log_beta: state.posterior().mean(),
        posterior_sd_log_beta: state.posterior().sd(),
        time_unit: TIME_UNIT.to_string(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExposureSampleDto {
    pub t_hours: f64,
    pub exposure: f64,
    pub auc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExposureDto {
    pub dose: f64,
    pub interval_hours: f64,
    pub horizon_hours: f64,
    pub step_hours: f64,
    pub n_administrations: usize,
    pub time_unit: String,
    pub samples: Vec<ExposureSampleDto>,
}

/// `E(t)` and `AUC_E(t)` of the cycle-1 regimen `dose` every
/// `interval_hours`, sampled on `0, step, 2·step, …` and at `horizon`.
pub fn exposure_samples(
    params: &PkParams,
    dose: f64,
    interval_hours: f64,
    horizon_hours: f64,
    step_hours: f64,
) -> Result<ExposureDto, FieldError> {
    let pos = |v: f64| v.is_finite() && v > 0.0;
    if !pos(dose) {
        return Err(FieldError::new("dose", "must be finite and > 0"));
    }
    if !pos(interval_hours) {
        return Err(FieldError::new("interval_hours", "must be finite and > 0"));
    }
    if !(horizon_hours.is_finite() && horizon_hours >= 0.0) {
        return Err(FieldError::new("horizon_hours", "must be finite and >= 0"));
    }
    if !pos(step_hours) {
        return Err(FieldError::new("step_hours", "must be finite and > 0"));
    }
    let n = (horizon_hours / step_hours).floor() as usize;
    if n > 1_000_000 {
        return Err(FieldError::new("step_hours", "too many samples; increase the step"));
    }
    let regimen = Regimen::regular(dose, 1.0 / interval_hours, params.t_star())
        .map_err(|e| FieldError::new("interval_hours", e.to_string()))?;
    let n_administrations = regimen.dose_times().len();
    let profile = make_exposure(regimen, *params);
    let mut times: Vec<f64> = (0..=n).map(|i| i as f64 * step_hours).collect();
    if times.last().is_some_and(|t| *t < horizon_hours) {
        times.push(horizon_hours);
    }
    let samples = times
        .into_iter()
        .map(|t| ExposureSampleDto {
            t_hours: t,
            exposure: profile.exposure(t),
            auc: profile.auc(t),
        })
        .collect();
    Ok(ExposureDto {
        dose,
        interval_hours,
        horizon_hours,
        step_hours,
        n_administrations,
        time_unit: TIME_UNIT.to_string(),
        samples,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleShareDto {
    pub schedule: String,
    pub probability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CharacteristicsDto {
    pub n_trials: usize,
    pub p_select_tt: f64,
    pub p_select_od: f64,
    pub p_select_ud: f64,
    pub p_select_none: f64,
    pub mean_patients_od: f64,
    pub mean_patients_total: f64,
    pub mean_dlts: f64,
    pub schedule_selection: Vec<ScheduleShareDto>,
}

impl CharacteristicsDto {
    pub fn new(oc: &OperatingCharacteristics, schedule_labels: &[String]) -> Self {
        CharacteristicsDto {
            n_trials: oc.n_trials,
            p_select_tt: oc.p_select_tt,
            p_select_od: oc.p_select_od,
            p_select_ud: oc.p_select_ud,
            p_select_none: oc.p_select_none,
            mean_patients_od: oc.mean_patients_od,
            mean_patients_total: oc.mean_patients_total,
            mean_dlts: oc.mean_dlts,
            schedule_selection: schedule_labels
                .iter()
                .zip(&oc.schedule_selection)
                .map(|(s, p)| ScheduleShareDto {
                    schedule: s.clone(),
                    probability: *p,
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialSummaryDto {
    pub trial: usize,
    /// Declared MTC label, or `null`.
    pub mtc: Option<String>,
    /// `"underdosing"`, `"target"`, `"overdosing"` or `"none"`.
    pub mtc_class: String,
    /// Why no MTC was declared, if none was.
    pub stop_reason: Option<String>,
    pub n_patients: usize,
    pub n_dlts: usize,
    pub n_patients_od: usize,
}

pub fn class_name(c: Option<ToxicityClass>) -> &'static str {
    match c {
        Some(ToxicityClass::Underdosing) => "underdosing",
        Some(ToxicityClass::Target) => "target",
        Some(ToxicityClass::Overdosing) => "overdosing",
        None => "none",
    }
}

impl TrialSummaryDto {
    pub fn new(trial: usize, s: &TrialSummary, grid: &titepk_core::CombinationGrid) -> Self {
        let (mtc, stop_reason) = match s.outcome {
            TrialOutcome::Mtc(c) => (Some(grid.label(c)), None),
            TrialOutcome::NoMtc(StopReason::AllOverdosing) => (None, Some("all-overdosing".to_string())),
            TrialOutcome::NoMtc(StopReason::MaxPatients) => (None, Some("max-patients".to_string())),
        };
        TrialSummaryDto {
            trial,
            mtc,
            mtc_class: class_name(s.mtc_class).to_string(),
            stop_reason,
            n_patients: s.n_patients,
            n_dlts: s.n_dlts,
            n_patients_od: s.n_patients_od,
        }
    }
}

/// Everything `simulate` writes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    pub scenario: String,
    pub feasibility_bound: f64,
    pub selection_strategy: String,
    pub no_skip: bool,
    pub generator: String,
    pub seed: u64,
    pub characteristics: CharacteristicsDto,
    pub trials: Vec<TrialSummaryDto>,
}
