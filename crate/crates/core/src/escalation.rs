//! Escalation with overdose control over a dose × schedule grid.
//!
//! Every combination gets the posterior probabilities that its cycle-1 DLT
//! probability falls in the underdosing (`< 0.20`), targeted (`[0.20, 0.40]`)
//! or overdosing (`> 0.40`) interval. A combination is admissible when
//! `P(overdosing) < a`. Because risk is monotone in `AUC_E(t*)`, the
//! admissible set is always a lower set in exposure order.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;

use crate::error::{Error, Result};
use crate::inference::{
    interval_probabilities, BetaPrior, LikelihoodSummary, PatientRecord, Posterior, TARGET_HIGH,
    TARGET_LOW,
};
use crate::pk::{make_exposure, PkParams, Regimen};

/// Relative tolerance under which two `AUC_E(t*)` values form one exposure
/// level.
const LEVEL_TOL: f64 = 1e-9;

fn same_level(a: f64, b: f64) -> bool {
    (a - b).abs() <= LEVEL_TOL * a.abs().max(b.abs())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    pub label: String,
    /// Administrations per hour.
    pub freq: f64,
}

impl Schedule {
    pub fn new(label: impl Into<String>, freq: f64) -> Self {
        Schedule {
            label: label.into(),
            freq,
        }
    }

    /// Hours between administrations.
    pub fn interval_hours(&self) -> f64 {
        1.0 / self.freq
    }
}

/// Position of a combination in a [`CombinationGrid`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Combination {
    pub schedule: usize,
    pub dose: usize,
}

/// Candidate doses × schedules, each given as a regular regimen over one
/// cycle.
#[derive(Debug, Clone, PartialEq)]
pub struct CombinationGrid {
    doses: Vec<f64>,
    schedules: Vec<Schedule>,
    regimens: Vec<Regimen>,
    cycle_auc: Vec<f64>,
    /// Distinct `AUC_E(t*)` values, ascending.
    levels: Vec<f64>,
}

impl CombinationGrid {
    pub fn new(doses: Vec<f64>, schedules: Vec<Schedule>, params: &PkParams) -> Result<Self> {
        if doses.is_empty() || schedules.is_empty() {
            return Err(Error::arg("grid", "needs at least one dose and one schedule"));
        }
        let mut regimens = Vec::with_capacity(doses.len() * schedules.len());
        let mut cycle_auc = Vec::with_capacity(regimens.capacity());
        for s in &schedules {
            for &d in &doses {
                let regimen = Regimen::regular(d, s.freq, params.t_star())?;
                let auc = make_exposure(regimen.clone(), *params).cycle_auc();
                if !(auc.is_finite() && auc > 0.0) {
                    return Err(Error::arg(
                        "grid",
                        format!("combination {}-{} has no cycle-1 exposure", s.label, d),
                    ));
                }
                regimens.push(regimen);
                cycle_auc.push(auc);
            }
        }
        let mut sorted = cycle_auc.clone();
        sorted.sort_by(f64::total_cmp);
        let mut levels: Vec<f64> = Vec::new();
        for a in sorted {
            if levels.last().is_none_or(|l| !same_level(*l, a)) {
                levels.push(a);
            }
        }
        Ok(CombinationGrid {
            doses,
            schedules,
            regimens,
            cycle_auc,
            levels,
        })
    }

    pub fn doses(&self) -> &[f64] {
        &self.doses
    }

    pub fn schedules(&self) -> &[Schedule] {
        &self.schedules
    }

    pub fn len(&self) -> usize {
        self.cycle_auc.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cycle_auc.is_empty()
    }

    pub fn index(&self, c: Combination) -> usize {
        c.schedule * self.doses.len() + c.dose
    }

    pub fn combination(&self, index: usize) -> Combination {
        Combination {
            schedule: index / self.doses.len(),
            dose: index % self.doses.len(),
        }
    }

    pub fn combinations(&self) -> impl Iterator<Item = Combination> + '_ {
        (0..self.len()).map(|i| self.combination(i))
    }

    pub fn contains(&self, c: Combination) -> bool {
        c.schedule < self.schedules.len() && c.dose < self.doses.len()
    }

    pub fn regimen(&self, c: Combination) -> &Regimen {
        &self.regimens[self.index(c)]
    }

    pub fn cycle_auc(&self, c: Combination) -> f64 {
        self.cycle_auc[self.index(c)]
    }

    /// `"<schedule>-<dose>"`, e.g. `"B-24"`.
    pub fn label(&self, c: Combination) -> String {
        format!("{}-{}", self.schedules[c.schedule].label, self.doses[c.dose])
    }

    pub fn find_label(&self, label: &str) -> Option<Combination> {
        self.combinations().find(|c| self.label(*c) == label)
    }

    /// Combination with this dose and frequency (relative tolerance 1e-9).
    pub fn find(&self, dose: f64, freq: f64) -> Option<Combination> {
        let schedule = self.schedules.iter().position(|s| same_level(s.freq, freq))?;
        let dose = self.doses.iter().position(|d| same_level(*d, dose))?;
        Some(Combination { schedule, dose })
    }

    /// Distinct exposure levels, ascending.
    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    /// Combination(s) with the lowest `AUC_E(t*)`.
    pub fn lowest_exposure(&self) -> Vec<Combination> {
        let lowest = self.levels[0];
        self.combinations()
            .filter(|c| same_level(self.cycle_auc(*c), lowest))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum SelectionStrategy {
    /// Admissible combination with the largest `AUC_E(t*)`.
    #[default]
    HighestEligibleExposure,
    /// Admissible combination with the smallest `AUC_E(t*)`.
    LowestEligibleExposure,
    /// Admissible combination with the largest `P(targeted toxicity)`.
    MaxTargetProbability,
}

impl SelectionStrategy {
    pub const ALL: [SelectionStrategy; 3] = [
        SelectionStrategy::HighestEligibleExposure,
        SelectionStrategy::LowestEligibleExposure,
        SelectionStrategy::MaxTargetProbability,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            SelectionStrategy::HighestEligibleExposure => "highest-eligible",
            SelectionStrategy::LowestEligibleExposure => "lowest-eligible",
            SelectionStrategy::MaxTargetProbability => "max-target",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|s| s.name() == name)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EscalationConfig {
    /// EWOC feasibility bound `a`.
    pub feasibility_bound: f64,
    pub target_low: f64,
    pub target_high: f64,
    /// Required `P(targeted toxicity)` at the MTC unless the total-enrolment
    /// fallback applies.
    pub target_confidence: f64,
    pub min_patients_at_mtc: usize,
    pub min_patients_total_fallback: usize,
    pub max_patients: usize,
    pub cohort_size: usize,
    pub selection_strategy: SelectionStrategy,
    pub no_skip: bool,
    pub grid_size: usize,
}

impl Default for EscalationConfig {
    fn default() -> Self {
        EscalationConfig {
            feasibility_bound: 0.25,
            target_low: TARGET_LOW,
            target_high: TARGET_HIGH,
            target_confidence: 0.50,
            min_patients_at_mtc: 9,
            min_patients_total_fallback: 21,
            max_patients: 60,
            cohort_size: 1,
            selection_strategy: SelectionStrategy::HighestEligibleExposure,
            no_skip: true,
            grid_size: crate::inference::DEFAULT_GRID_SIZE,
        }
    }
}

impl EscalationConfig {
    pub fn with_bound(feasibility_bound: f64) -> Self {
        EscalationConfig {
            feasibility_bound,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let open_unit = |name, v: f64| {
            if v > 0.0 && v < 1.0 {
                Ok(())
            } else {
                Err(Error::arg(name, "must lie in (0, 1)"))
            }
        };
        open_unit("feasibility_bound", self.feasibility_bound)?;
        open_unit("target_confidence", self.target_confidence)?;
        // The probability summaries are computed for the fixed interval.
        if self.target_low != TARGET_LOW || self.target_high != TARGET_HIGH {
            return Err(Error::arg("target_interval", "only (0.20, 0.40) is supported"));
        }
        let positive = |name, v: usize| {
            if v > 0 {
                Ok(())
            } else {
                Err(Error::arg(name, "must be > 0"))
            }
        };
        positive("min_patients_at_mtc", self.min_patients_at_mtc)?;
        positive("min_patients_total_fallback", self.min_patients_total_fallback)?;
        positive("max_patients", self.max_patients)?;
        positive("cohort_size", self.cohort_size)?;
        if self.grid_size < crate::inference::MIN_GRID_SIZE {
            return Err(Error::arg("grid_size", "must be >= 201"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecisionRow {
    pub combination: Combination,
    pub cycle_auc: f64,
    pub p_underdose: f64,
    pub p_target: f64,
    pub p_overdose: f64,
    pub ewoc_ok: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Recommendation {
    Combination(Combination),
    Stop,
}

impl Recommendation {
    pub fn combination(&self) -> Option<Combination> {
        match self {
            Recommendation::Combination(c) => Some(*c),
            Recommendation::Stop => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rationale {
    /// Chosen by the selection strategy among admissible combinations.
    Selected,
    /// Chosen by the strategy after capping at the next untried level.
    SkipCapped,
    /// No combination satisfies EWOC.
    AllOverdosing,
}

impl Rationale {
    pub fn code(&self) -> &'static str {
        match self {
            Rationale::Selected => "selected",
            Rationale::SkipCapped => "skip-capped",
            Rationale::AllOverdosing => "all-overdosing",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecisionTable {
    pub rows: Vec<DecisionRow>,
    pub recommendation: Recommendation,
    pub rationale: Rationale,
}

impl DecisionTable {
    pub fn row(&self, c: Combination) -> Option<&DecisionRow> {
        self.rows.iter().find(|r| r.combination == c)
    }

    pub fn eligible(&self) -> impl Iterator<Item = &DecisionRow> {
        self.rows.iter().filter(|r| r.ewoc_ok)
    }
}

fn evaluate_rows(posterior: &Posterior, grid: &CombinationGrid, cfg: &EscalationConfig) -> Vec<DecisionRow> {
    grid.combinations()
        .map(|c| {
            let cycle_auc = grid.cycle_auc(c);
            let p = interval_probabilities(posterior, cycle_auc);
            DecisionRow {
                combination: c,
                cycle_auc,
                p_underdose: p.underdose,
                p_target: p.target,
                p_overdose: p.overdose,
                ewoc_ok: p.overdose < cfg.feasibility_bound,
            }
        })
        .collect()
}

/// Pick among `candidates` (indices into `rows`) per strategy, breaking
/// exact ties uniformly at random.
fn select<R: Rng + ?Sized>(
    rows: &[DecisionRow],
    candidates: &[usize],
    strategy: SelectionStrategy,
    rng: &mut R,
) -> Option<Combination> {
    let score = |i: usize| -> f64 {
        match strategy {
            SelectionStrategy::HighestEligibleExposure => rows[i].cycle_auc,
            SelectionStrategy::LowestEligibleExposure => -rows[i].cycle_auc,
            SelectionStrategy::MaxTargetProbability => rows[i].p_target,
        }
    };
    let best = candidates.iter().map(|&i| score(i)).fold(f64::NEG_INFINITY, f64::max);
    let tied: Vec<usize> = candidates
        .iter()
        .copied()
        .filter(|&i| match strategy {
            SelectionStrategy::MaxTargetProbability => score(i) == best,
            _ => same_level(score(i), best),
        })
        .collect();
    match tied.len() {
        0 => None,
        1 => Some(rows[tied[0]].combination),
        n => Some(rows[tied[rng.random_range(0..n)]].combination),
    }
}

fn table_from_rows<R: Rng + ?Sized>(
    rows: Vec<DecisionRow>,
    ceiling: Option<f64>,
    strategy: SelectionStrategy,
    rng: &mut R,
) -> DecisionTable {
    let eligible: Vec<usize> = (0..rows.len()).filter(|&i| rows[i].ewoc_ok).collect();
    let admissible: Vec<usize> = match ceiling {
        Some(cap) => eligible
            .iter()
            .copied()
            .filter(|&i| rows[i].cycle_auc <= cap || same_level(rows[i].cycle_auc, cap))
            .collect(),
        None => eligible.clone(),
    };
    let (recommendation, rationale) = match select(&rows, &admissible, strategy, rng) {
        None => (Recommendation::Stop, Rationale::AllOverdosing),
        Some(c) => {
            let rationale = if admissible.len() < eligible.len() {
                Rationale::SkipCapped
            } else {
                Rationale::Selected
            };
            (Recommendation::Combination(c), rationale)
        }
    };
    DecisionTable {
        rows,
        recommendation,
        rationale,
    }
}

/// Decision table for `posterior` over the whole grid, without any
/// escalation-history constraint.
pub fn evaluate_grid<R: Rng + ?Sized>(
    posterior: &Posterior,
    grid: &CombinationGrid,
    cfg: &EscalationConfig,
    rng: &mut R,
) -> Result<DecisionTable> {
    if grid.is_empty() {
        return Err(Error::arg("grid", "empty combination grid"));
    }
    let rows = evaluate_rows(posterior, grid, cfg);
    Ok(table_from_rows(rows, None, cfg.selection_strategy, rng))
}

/// One enrolled patient.
#[derive(Debug, Clone, PartialEq)]
pub struct Enrollment {
    pub combination: Combination,
    pub record: PatientRecord,
}

/// Enrolment history of one trial plus the posterior it implies.
#[derive(Debug, Clone)]
pub struct TrialState {
    grid: CombinationGrid,
    params: PkParams,
    prior: BetaPrior,
    grid_size: usize,
    enrolled: Vec<Enrollment>,
    summary: LikelihoodSummary,
    posterior: Posterior,
}

impl TrialState {
    pub fn new(grid: CombinationGrid, params: PkParams, prior: BetaPrior, grid_size: usize) -> Result<Self> {
        let summary = LikelihoodSummary::default();
        let posterior = Posterior::from_summary(&summary, &prior, grid_size)?;
        Ok(TrialState {
            grid,
            params,
            prior,
            grid_size,
            enrolled: Vec::new(),
            summary,
            posterior,
        })
    }

    /// Add a patient's completed (or partial) follow-up and refit.
    pub fn enroll(&mut self, combination: Combination, record: PatientRecord) -> Result<()> {
        if !self.grid.contains(combination) {
            return Err(Error::arg("combination", "not on the grid"));
        }
        record.validate(self.enrolled.len(), self.params.t_star())?;
        let summary = self.summary.merge(&LikelihoodSummary::single(&record, &self.params));
        let posterior = Posterior::from_summary(&summary, &self.prior, self.grid_size)?;
        self.summary = summary;
        self.posterior = posterior;
        self.enrolled.push(Enrollment { combination, record });
        Ok(())
    }

    pub fn grid(&self) -> &CombinationGrid {
        &self.grid
    }

    pub fn params(&self) -> &PkParams {
        &self.params
    }

    pub fn posterior(&self) -> &Posterior {
        &self.posterior
    }

    pub fn enrolled(&self) -> &[Enrollment] {
        &self.enrolled
    }

    pub fn total(&self) -> usize {
        self.enrolled.len()
    }

    pub fn treated_at(&self, c: Combination) -> usize {
        self.enrolled.iter().filter(|e| e.combination == c).count()
    }

    /// Highest exposure level any patient has received.
    pub fn highest_tried(&self) -> Option<f64> {
        self.enrolled
            .iter()
            .map(|e| self.grid.cycle_auc(e.combination))
            .fold(None, |m, a| Some(m.map_or(a, |m: f64| m.max(a))))
    }

    /// Exposure cap under the no-skip rule: the lowest level above every
    /// tried level, or the top level once it has been tried.
    pub fn exposure_ceiling(&self) -> f64 {
        let levels = self.grid.levels();
        match self.highest_tried() {
            None => levels[0],
            Some(top) => levels
                .iter()
                .copied()
                .find(|l| *l > top && !same_level(*l, top))
                .unwrap_or(levels[levels.len() - 1]),
        }
    }
}

/// Decision table for the next assignment, honouring `no_skip`.
pub fn next_patient_assignment<R: Rng + ?Sized>(
    state: &TrialState,
    cfg: &EscalationConfig,
    rng: &mut R,
) -> DecisionTable {
    let rows = evaluate_rows(&state.posterior, &state.grid, cfg);
    let ceiling = cfg.no_skip.then(|| state.exposure_ceiling());
    table_from_rows(rows, ceiling, cfg.selection_strategy, rng)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Completion {
    Continue,
    DeclareMtc(Combination),
    StopNoMtc,
}

/// Stopping rules evaluated against the current recommendation.
pub fn check_completion(state: &TrialState, table: &DecisionTable, cfg: &EscalationConfig) -> Completion {
    let Recommendation::Combination(c) = table.recommendation else {
        return Completion::StopNoMtc;
    };
    let at_c = state.treated_at(c);
    let p_target = table.row(c).map_or(0.0, |r| r.p_target);
    let total = state.total();
    if at_c >= cfg.min_patients_at_mtc
        && (p_target >= cfg.target_confidence || total >= cfg.min_patients_total_fallback)
    {
        return Completion::DeclareMtc(c);
    }
    if total >= cfg.max_patients {
        return if at_c >= cfg.min_patients_at_mtc {
            Completion::DeclareMtc(c)
        } else {
            Completion::StopNoMtc
        };
    }
    Completion::Continue
}
