//! Model configuration as it appears in TOML files and JSON bodies.
//!
//! Every field is optional and defaults to the Vidaza set-up. Validation
//! collects all problems at once and reports them by dotted field path.

use serde::{Deserialize, Serialize};
use titepk_core::inference::cloglog;
use titepk_core::scenarios::VidazaDefaults;
use titepk_core::{
    BetaPrior, CombinationGrid, EscalationConfig, PkParams, Schedule, SelectionStrategy,
};

/// One invalid field.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldError {
    pub field: String,
    pub message: String,
}

impl FieldError {
    pub fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        FieldError {
            field: field.into(),
            message: message.into(),
        }
    }
}

impl std::fmt::Display for FieldError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PkSettings {
    /// Elimination rate, per hour.
    pub k_e: f64,
    pub log_k_eff: f64,
    pub t_star_hours: f64,
    pub reference_dose: f64,
    pub reference_interval_hours: f64,
}

impl Default for PkSettings {
    fn default() -> Self {
        PkSettings {
            k_e: VidazaDefaults::K_E,
            log_k_eff: VidazaDefaults::LOG_K_EFF,
            t_star_hours: VidazaDefaults::T_STAR,
            reference_dose: VidazaDefaults::REF_DOSE,
            reference_interval_hours: 1.0 / VidazaDefaults::REF_FREQ,
        }
    }
}

/// Normal prior on `log β`, specified by the reference combination's prior
/// median DLT probability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriorSettings {
    pub p_ref: f64,
    pub sigma: f64,
}

impl Default for PriorSettings {
    fn default() -> Self {
        PriorSettings {
            p_ref: VidazaDefaults::PRIOR_P_REF,
            sigma: VidazaDefaults::PRIOR_SD,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleSettings {
    pub label: String,
    pub interval_hours: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EscalationSettings {
    pub feasibility_bound: f64,
    pub selection_strategy: String,
    pub no_skip: bool,
    pub target_confidence: f64,
    pub min_patients_at_mtc: usize,
    pub min_patients_total_fallback: usize,
    pub max_patients: usize,
    pub cohort_size: usize,
    pub grid_size: usize,
}

impl Default for EscalationSettings {
    fn default() -> Self {
        let d = EscalationConfig::default();
        EscalationSettings {
            feasibility_bound: d.feasibility_bound,
            selection_strategy: d.selection_strategy.name().to_string(),
            no_skip: d.no_skip,
            target_confidence: d.target_confidence,
            min_patients_at_mtc: d.min_patients_at_mtc,
            min_patients_total_fallback: d.min_patients_total_fallback,
            max_patients: d.max_patients,
            cohort_size: d.cohort_size,
            grid_size: d.grid_size,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSettings {
    pub pk: PkSettings,
    pub prior: PriorSettings,
    pub doses: Vec<f64>,
    pub schedules: Vec<ScheduleSettings>,
    pub escalation: EscalationSettings,
}

impl Default for ModelSettings {
    fn default() -> Self {
        ModelSettings {
            pk: PkSettings::default(),
            prior: PriorSettings::default(),
            doses: VidazaDefaults::DOSES.to_vec(),
            schedules: VidazaDefaults::SCHEDULE_LABELS
                .iter()
                .zip(VidazaDefaults::SCHEDULE_INTERVALS)
                .map(|(l, h)| ScheduleSettings {
                    label: l.to_string(),
                    interval_hours: h,
                })
                .collect(),
            escalation: EscalationSettings::default(),
        }
    }
}

/// Validated model ready for inference and escalation.
#[derive(Debug, Clone)]
pub struct Model {
    pub params: PkParams,
    pub grid: CombinationGrid,
    pub prior: BetaPrior,
    pub config: EscalationConfig,
}

fn check(errors: &mut Vec<FieldError>, ok: bool, field: &str, message: &str) {
    if !ok {
        errors.push(FieldError::new(field, message));
    }
}

fn positive(v: f64) -> bool {
    v.is_finite() && v > 0.0
}

fn unit(v: f64) -> bool {
    v > 0.0 && v < 1.0
}

impl ModelSettings {
    pub fn build(&self) -> Result<Model, Vec<FieldError>> {
        let mut e = Vec::new();
        let pk = &self.pk;
        check(&mut e, positive(pk.k_e), "pk.k_e", "must be finite and > 0");
        check(&mut e, pk.log_k_eff.is_finite(), "pk.log_k_eff", "must be finite");
        check(&mut e, positive(pk.t_star_hours), "pk.t_star_hours", "must be finite and > 0");
        check(&mut e, positive(pk.reference_dose), "pk.reference_dose", "must be finite and > 0");
        check(
            &mut e,
            positive(pk.reference_interval_hours),
            "pk.reference_interval_hours",
            "must be finite and > 0",
        );
        check(&mut e, unit(self.prior.p_ref), "prior.p_ref", "must lie in (0, 1)");
        check(&mut e, positive(self.prior.sigma), "prior.sigma", "must be finite and > 0");
        check(&mut e, !self.doses.is_empty(), "doses", "at least one dose is required");
        for (i, d) in self.doses.iter().enumerate() {
            check(&mut e, positive(*d), &format!("doses[{i}]"), "must be finite and > 0");
        }
        check(&mut e, !self.schedules.is_empty(), "schedules", "at least one schedule is required");
        for (i, s) in self.schedules.iter().enumerate() {
            check(&mut e, !s.label.is_empty(), &format!("schedules[{i}].label"), "must not be empty");
            check(
                &mut e,
                positive(s.interval_hours),
                &format!("schedules[{i}].interval_hours"),
                "must be finite and > 0",
            );
            let dup = self.schedules[..i].iter().any(|o| o.label == s.label);
            check(&mut e, !dup, &format!("schedules[{i}].label"), "duplicate label");
        }
        let esc = &self.escalation;
        let strategy = SelectionStrategy::from_name(&esc.selection_strategy);
        check(
            &mut e,
            strategy.is_some(),
            "escalation.selection_strategy",
            "expected one of highest-eligible, lowest-eligible, max-target",
        );
        let config = EscalationConfig {
            feasibility_bound: esc.feasibility_bound,
            target_confidence: esc.target_confidence,
            min_patients_at_mtc: esc.min_patients_at_mtc,
            min_patients_total_fallback: esc.min_patients_total_fallback,
            max_patients: esc.max_patients,
            cohort_size: esc.cohort_size,
            selection_strategy: strategy.unwrap_or_default(),
            no_skip: esc.no_skip,
            grid_size: esc.grid_size,
            ..EscalationConfig::default()
        };
        if let Err(titepk_core::Error::InvalidArgument { name, reason }) = config.validate() {
            e.push(FieldError::new(format!("escalation.{name}"), reason));
        }
        if !e.is_empty() {
            return Err(e);
        }

        let core_err = |field: &str, err: titepk_core::Error| vec![FieldError::new(field, err.to_string())];
        let params = PkParams::new(
            pk.k_e,
            pk.log_k_eff.exp(),
            pk.t_star_hours,
            pk.reference_dose,
            1.0 / pk.reference_interval_hours,
        )
        .map_err(|err| core_err("pk", err))?;
        let schedules = self
            .schedules
            .iter()
            .map(|s| Schedule::new(s.label.clone(), 1.0 / s.interval_hours))
            .collect();
        let grid = CombinationGrid::new(self.doses.clone(), schedules, &params)
            .map_err(|err| core_err("schedules", err))?;
        let prior = BetaPrior::new(cloglog(self.prior.p_ref), self.prior.sigma)
            .map_err(|err| core_err("prior", err))?;
        Ok(Model {
            params,
            grid,
            prior,
            config,
        })
    }
}
