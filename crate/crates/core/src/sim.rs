//! Virtual patients, single-trial simulation and operating characteristics.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::escalation::{
    check_completion, next_patient_assignment, Combination, CombinationGrid, Completion,
    DecisionTable, EscalationConfig, Recommendation, TrialState,
};
use crate::inference::{BetaPrior, Outcome, PatientRecord, Posterior, TARGET_HIGH, TARGET_LOW};
use crate::pk::{make_exposure, ExposureProfile, PkParams, Regimen};

/// Bisection tolerance (hours) for event times under the exposure-driven
/// process.
const EVENT_TIME_TOL: f64 = 1e-6;

/// A toxicity scenario: true cycle-1 DLT probability of every combination.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    label: String,
    grid: CombinationGrid,
    true_p: Vec<f64>,
}

impl Scenario {
    /// `true_p` is indexed like the grid (schedule-major).
    pub fn new(label: impl Into<String>, grid: CombinationGrid, true_p: Vec<f64>) -> Result<Self> {
        if true_p.len() != grid.len() {
            return Err(Error::arg("true_p", "matrix does not match the grid"));
        }
        if true_p.iter().any(|p| !(*p > 0.0 && *p < 1.0)) {
            return Err(Error::arg("true_p", "probabilities must lie in (0, 1)"));
        }
        Ok(Scenario {
            label: label.into(),
            grid,
            true_p,
        })
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn grid(&self) -> &CombinationGrid {
        &self.grid
    }

    pub fn true_p(&self, c: Combination) -> f64 {
        self.true_p[self.grid.index(c)]
    }

    pub fn true_probabilities(&self) -> &[f64] {
        &self.true_p
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum ToxicityClass {
    Underdosing,
    Target,
    Overdosing,
}

/// Interval of a true probability; the bounds 0.20 and 0.40 are targeted.
pub fn classify(p: f64) -> ToxicityClass {
    if p < TARGET_LOW {
        ToxicityClass::Underdosing
    } else if p <= TARGET_HIGH {
        ToxicityClass::Target
    } else {
        ToxicityClass::Overdosing
    }
}

/// Mechanism generating the time to first DLT. All variants have the same
/// probability of an event by the end of cycle 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DltGenerator {
    /// Non-homogeneous Poisson process with hazard proportional to `E(t)`.
    TitePkProcess,
    /// Bernoulli event, time uniform over the cycle.
    UniformTime,
    /// Constant hazard `λ = −log(1 − p) / t*`.
    ExponentialTime,
    /// Bernoulli event; time in the first fifth with probability 0.4, the
    /// last fifth with 0.4, otherwise in between.
    EarlyLateTime,
}

impl DltGenerator {
    pub const ALL: [DltGenerator; 4] = [
        DltGenerator::TitePkProcess,
        DltGenerator::UniformTime,
        DltGenerator::ExponentialTime,
        DltGenerator::EarlyLateTime,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            DltGenerator::TitePkProcess => "tite-pk",
            DltGenerator::UniformTime => "uniform",
            DltGenerator::ExponentialTime => "exponential",
            DltGenerator::EarlyLateTime => "early-late",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|g| g.name() == name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DltDraw {
    NoEvent,
    /// Event at this time, in `(0, t*]`.
    Event(f64),
}

/// Uniform on `(0, 1]`.
fn open_unit<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    1.0 - rng.random::<f64>()
}

/// Draw one patient's cycle-1 outcome.
pub fn sample_dlt<R: Rng + ?Sized>(
    generator: DltGenerator,
    true_p: f64,
    regimen: &Regimen,
    params: &PkParams,
    rng: &mut R,
) -> Result<DltDraw> {
    let profile = make_exposure(regimen.clone(), *params);
    sample_with_profile(generator, true_p, &profile, rng)
}

pub(crate) fn sample_with_profile<R: Rng + ?Sized>(
    generator: DltGenerator,
    true_p: f64,
    profile: &ExposureProfile,
    rng: &mut R,
) -> Result<DltDraw> {
    if !(true_p > 0.0 && true_p < 1.0) {
        return Err(Error::arg("true_p", "must lie in (0, 1)"));
    }
    let t_star = profile.params().t_star();
    let draw = match generator {
        DltGenerator::TitePkProcess => {
            let cycle_auc = profile.cycle_auc();
            if !(cycle_auc > 0.0) {
                return Err(Error::arg("regimen", "no exposure within the cycle"));
            }
            let beta = -libm::log1p(-true_p) / cycle_auc;
            let u: f64 = rng.random();
            if u < true_p {
                let target = -libm::log1p(-u) / beta;
                let t = profile
                    .time_to_auc(target, t_star, EVENT_TIME_TOL)
                    .unwrap_or(t_star);
                DltDraw::Event(t.clamp(f64::MIN_POSITIVE, t_star))
            } else {
                DltDraw::NoEvent
            }
        }
        DltGenerator::ExponentialTime => {
            let rate = -libm::log1p(-true_p) / t_star;
            let t = -libm::log(open_unit(rng)) / rate;
            if t <= t_star {
                DltDraw::Event(t.max(f64::MIN_POSITIVE))
            } else {
                DltDraw::NoEvent
            }
        }
        DltGenerator::UniformTime => {
            if rng.random::<f64>() < true_p {
                DltDraw::Event(t_star * open_unit(rng))
            } else {
                DltDraw::NoEvent
            }
        }
        DltGenerator::EarlyLateTime => {
            if rng.random::<f64>() < true_p {
                let band: f64 = rng.random();
                let (lo, hi) = if band < 0.4 {
                    (0.0, t_star / 5.0)
                } else if band < 0.8 {
                    (4.0 * t_star / 5.0, t_star)
                } else {
                    (t_star / 5.0, 4.0 * t_star / 5.0)
                };
                // (lo, hi]
                DltDraw::Event(hi - (hi - lo) * rng.random::<f64>())
            } else {
                DltDraw::NoEvent
            }
        }
    };
    Ok(draw)
}

/// Independent stream `index` of the study seeded with `seed`.
pub fn trial_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    /// No combination satisfied EWOC.
    AllOverdosing,
    /// Patient limit reached without a declarable MTC.
    MaxPatients,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrialOutcome {
    Mtc(Combination),
    NoMtc(StopReason),
}

impl TrialOutcome {
    pub fn mtc(&self) -> Option<Combination> {
        match self {
            TrialOutcome::Mtc(c) => Some(*c),
            TrialOutcome::NoMtc(_) => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PatientLog {
    pub combination: Combination,
    pub true_p: f64,
    pub outcome: Outcome,
    /// Index into [`TrialResult::decisions`] of the table that assigned
    /// this patient.
    pub decision: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialResult {
    pub outcome: TrialOutcome,
    pub patients: Vec<PatientLog>,
    pub decisions: Vec<DecisionTable>,
    pub final_posterior: Posterior,
}

impl TrialResult {
    pub fn summary(&self, scenario: &Scenario) -> TrialSummary {
        TrialSummary {
            outcome: self.outcome,
            mtc_class: self.outcome.mtc().map(|c| classify(scenario.true_p(c))),
            n_patients: self.patients.len(),
            n_dlts: self.patients.iter().filter(|p| p.outcome.is_dlt()).count(),
            n_patients_od: self.patients.iter().filter(|p| p.true_p > TARGET_HIGH).count(),
        }
    }
}

/// Per-trial figures that feed the operating characteristics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialSummary {
    pub outcome: TrialOutcome,
    pub mtc_class: Option<ToxicityClass>,
    pub n_patients: usize,
    pub n_dlts: usize,
    /// Patients treated at combinations whose true probability exceeds 0.40.
    pub n_patients_od: usize,
}

/// Run one trial: patients are assigned cohort by cohort and followed for
/// the full cycle before the next decision.
pub fn run_trial<R: Rng + ?Sized>(
    scenario: &Scenario,
    cfg: &EscalationConfig,
    generator: DltGenerator,
    prior: &BetaPrior,
    params: &PkParams,
    rng: &mut R,
) -> Result<TrialResult> {
    cfg.validate()?;
    let grid = CombinationGrid::new(
        scenario.grid.doses().to_vec(),
        scenario.grid.schedules().to_vec(),
        params,
    )?;
    let profiles: Vec<ExposureProfile> = grid
        .combinations()
        .map(|c| make_exposure(grid.regimen(c).clone(), *params))
        .collect();
    let mut state = TrialState::new(grid, *params, *prior, cfg.grid_size)?;
    let mut patients = Vec::new();
    let mut decisions = Vec::new();

    let outcome = loop {
        let table = next_patient_assignment(&state, cfg, rng);
        let completion = check_completion(&state, &table, cfg);
        let stop_reason = match table.recommendation {
            Recommendation::Stop => StopReason::AllOverdosing,
            Recommendation::Combination(_) => StopReason::MaxPatients,
        };
        let assigned = table.recommendation.combination();
        decisions.push(table);
        match completion {
            Completion::DeclareMtc(c) => break TrialOutcome::Mtc(c),
            Completion::StopNoMtc => break TrialOutcome::NoMtc(stop_reason),
            Completion::Continue => {}
        }
        let Some(c) = assigned else {
            break TrialOutcome::NoMtc(stop_reason);
        };
        let index = state.grid().index(c);
        let true_p = scenario.true_p[index];
        let cohort = cfg.cohort_size.min(cfg.max_patients - state.total());
        let mut draws = vec![DltDraw::NoEvent; cohort];
        for d in draws.iter_mut() {
            *d = sample_with_profile(generator, true_p, &profiles[index], rng)?;
        }
        for d in draws {
            let outcome = match d {
                DltDraw::Event(time) => Outcome::Dlt { time },
                DltDraw::NoEvent => Outcome::Censored {
                    time: params.t_star(),
                },
            };
            state.enroll(
                c,
                PatientRecord {
                    regimen: state.grid().regimen(c).clone(),
                    outcome,
                },
            )?;
            patients.push(PatientLog {
                combination: c,
                true_p,
                outcome,
                decision: decisions.len() - 1,
            });
        }
    };

    Ok(TrialResult {
        outcome,
        patients,
        decisions,
        final_posterior: state.posterior().clone(),
    })
}

/// Monte-Carlo summaries of a design over many simulated trials.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatingCharacteristics {
    pub n_trials: usize,
    pub n_select_tt: usize,
    pub n_select_od: usize,
    pub n_select_ud: usize,
    pub n_select_none: usize,
    pub p_select_tt: f64,
    pub p_select_od: f64,
    pub p_select_ud: f64,
    pub p_select_none: f64,
    pub mean_patients_od: f64,
    pub mean_patients_total: f64,
    pub mean_dlts: f64,
    /// Probability that the MTC uses each schedule, in grid order.
    pub schedule_selection: Vec<f64>,
}

/// Order-sensitive reduction of [`TrialSummary`] values into
/// [`OperatingCharacteristics`].
#[derive(Debug, Clone, PartialEq)]
pub struct StudyAccumulator {
    n: usize,
    class_counts: [usize; 3],
    none: usize,
    patients_od: usize,
    patients: usize,
    dlts: usize,
    schedule_counts: Vec<usize>,
}

impl StudyAccumulator {
    pub fn new(n_schedules: usize) -> Self {
        StudyAccumulator {
            n: 0,
            class_counts: [0; 3],
            none: 0,
            patients_od: 0,
            patients: 0,
            dlts: 0,
            schedule_counts: vec![0; n_schedules],
        }
    }

    pub fn add(&mut self, s: &TrialSummary) {
        self.n += 1;
        match s.mtc_class {
            Some(ToxicityClass::Underdosing) => self.class_counts[0] += 1,
            Some(ToxicityClass::Target) => self.class_counts[1] += 1,
            Some(ToxicityClass::Overdosing) => self.class_counts[2] += 1,
            None => self.none += 1,
        }
        if let Some(c) = s.outcome.mtc() {
            self.schedule_counts[c.schedule] += 1;
        }
        self.patients_od += s.n_patients_od;
        self.patients += s.n_patients;
        self.dlts += s.n_dlts;
    }

    pub fn finish(&self) -> OperatingCharacteristics {
        let n = self.n.max(1) as f64;
        let frac = |k: usize| k as f64 / n;
        OperatingCharacteristics {
            n_trials: self.n,
            n_select_ud: self.class_counts[0],
            n_select_tt: self.class_counts[1],
            n_select_od: self.class_counts[2],
            n_select_none: self.none,
            p_select_ud: frac(self.class_counts[0]),
            p_select_tt: frac(self.class_counts[1]),
            p_select_od: frac(self.class_counts[2]),
            p_select_none: frac(self.none),
            mean_patients_od: frac(self.patients_od),
            mean_patients_total: frac(self.patients),
            mean_dlts: frac(self.dlts),
            schedule_selection: self.schedule_counts.iter().map(|k| frac(*k)).collect(),
        }
    }
}
