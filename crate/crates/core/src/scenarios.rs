//! Vidaza constants, the ten published toxicity scenarios and the published
//! operating characteristics used as regression targets.

use alloc::format;
use alloc::string::ToString;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::escalation::{CombinationGrid, Schedule};
use crate::inference::{default_prior, BetaPrior};
use crate::pk::PkParams;
use crate::sim::{DltGenerator, Scenario};

/// Fixed Vidaza design constants (hours, mg/m²).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VidazaDefaults;

impl VidazaDefaults {
    /// Half-life of 4 h.
    pub const K_E: f64 = core::f64::consts::LN_2 / 4.0;
    pub const LOG_K_EFF: f64 = -0.15;
    /// 28-day cycle.
    pub const T_STAR: f64 = 672.0;
    pub const DOSES: [f64; 3] = [8.0, 16.0, 24.0];
    pub const SCHEDULE_LABELS: [&'static str; 4] = ["A", "B", "C", "D"];
    /// Hours between administrations for schedules A–D.
    pub const SCHEDULE_INTERVALS: [f64; 4] = [192.0, 96.0, 48.0, 24.0];
    pub const REF_DOSE: f64 = 24.0;
    /// Schedule B.
    pub const REF_FREQ: f64 = 1.0 / 96.0;
    pub const PRIOR_P_REF: f64 = 0.3;
    pub const PRIOR_SD: f64 = 1.75;
}

pub fn vidaza_params() -> PkParams {
    PkParams::new(
        VidazaDefaults::K_E,
        libm::exp(VidazaDefaults::LOG_K_EFF),
        VidazaDefaults::T_STAR,
        VidazaDefaults::REF_DOSE,
        VidazaDefaults::REF_FREQ,
    )
    .expect("Vidaza constants are valid")
}

pub fn vidaza_schedules() -> Vec<Schedule> {
    VidazaDefaults::SCHEDULE_LABELS
        .iter()
        .zip(VidazaDefaults::SCHEDULE_INTERVALS)
        .map(|(l, h)| Schedule::new(*l, 1.0 / h))
        .collect()
}

pub fn vidaza_grid(params: &PkParams) -> CombinationGrid {
    CombinationGrid::new(VidazaDefaults::DOSES.to_vec(), vidaza_schedules(), params)
        .expect("Vidaza grid is valid")
}

pub fn vidaza_prior(params: &PkParams) -> BetaPrior {
    default_prior(params, VidazaDefaults::PRIOR_P_REF).expect("Vidaza prior is valid")
}

type Matrix = [[f64; 3]; 4];

/// True end-of-cycle-1 DLT probabilities, rows = schedules A–D, columns =
/// doses 8, 16, 24.
const SCENARIOS: [Matrix; 10] = [
    // S1
    [[0.05, 0.07, 0.11], [0.09, 0.12, 0.18], [0.16, 0.18, 0.23], [0.22, 0.26, 0.30]],
    // S2
    [[0.50, 0.54, 0.58], [0.53, 0.60, 0.65], [0.55, 0.65, 0.75], [0.57, 0.73, 0.78]],
    // S3
    [[0.03, 0.14, 0.28], [0.09, 0.21, 0.40], [0.18, 0.32, 0.54], [0.31, 0.45, 0.62]],
    // S4
    [[0.03, 0.15, 0.30], [0.12, 0.30, 0.50], [0.30, 0.50, 0.60], [0.50, 0.60, 0.75]],
    // S5
    [[0.01, 0.10, 0.50], [0.03, 0.30, 0.55], [0.05, 0.50, 0.60], [0.10, 0.60, 0.70]],
    // S6
    [[0.05, 0.07, 0.11], [0.16, 0.18, 0.23], [0.09, 0.12, 0.18], [0.22, 0.26, 0.30]],
    // S7
    [[0.10, 0.26, 0.35], [0.45, 0.50, 0.62], [0.30, 0.32, 0.50], [0.55, 0.62, 0.72]],
    // S8
    [[0.10, 0.26, 0.35], [0.30, 0.32, 0.50], [0.45, 0.50, 0.62], [0.55, 0.62, 0.72]],
    // S9
    [[0.10, 0.28, 0.45], [0.12, 0.30, 0.48], [0.14, 0.32, 0.55], [0.30, 0.48, 0.70]],
    // S10
    [[0.01, 0.10, 0.50], [0.05, 0.50, 0.60], [0.03, 0.30, 0.55], [0.10, 0.60, 0.70]],
];

pub const SCENARIO_IDS: [&str; 10] = ["S1", "S2", "S3", "S4", "S5", "S6", "S7", "S8", "S9", "S10"];

fn scenario_number(id: &str) -> Result<usize> {
    SCENARIO_IDS
        .iter()
        .position(|s| *s == id)
        .map(|i| i + 1)
        .ok_or_else(|| Error::UnknownScenario(id.to_string()))
}

/// Published true-probability matrix for `"S1"`..`"S10"`.
pub fn scenario_matrix(id: &str) -> Result<[[f64; 3]; 4]> {
    Ok(SCENARIOS[scenario_number(id)? - 1])
}

/// Scenario on the Vidaza grid.
pub fn load_scenario(id: &str) -> Result<Scenario> {
    let matrix = scenario_matrix(id)?;
    let params = vidaza_params();
    let true_p = matrix.iter().flatten().copied().collect();
    Scenario::new(id, vidaza_grid(&params), true_p)
}

/// Methods whose operating characteristics are published.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    PocrmComplete,
    PocrmPartial,
    /// TITE-PK with feasibility bound 0.25.
    TitePk25,
    /// TITE-PK with feasibility bound 0.50.
    TitePk50,
    /// TITE-PK (a = 0.50) under an alternative time-to-DLT generator.
    Robustness(DltGenerator),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Metric {
    PSelectTt,
    PSelectOd,
    PSelectNone,
    MeanPatientsOd,
    MeanPatientsTotal,
    MeanDlts,
    /// Probability that the MTC uses schedule `0..4` (A–D).
    ScheduleSelection(usize),
}

const NA: f64 = f64::NAN;

/// `(method, metric, first scenario number, values)`; NaN marks n/a.
const REFERENCE: &[(Method, Metric, usize, &[f64])] = {
    use DltGenerator::*;
    use Method::*;
    use Metric::*;
    &[
        // Scenarios 1–7, both designs.
        (PocrmComplete, PSelectTt, 1, &[0.62, NA, 0.74, 0.65, 0.42, 0.57, 0.52]),
        (PocrmPartial, PSelectTt, 1, &[0.65, NA, 0.74, 0.63, 0.44, 0.66, 0.57]),
        (TitePk25, PSelectTt, 1, &[0.42, NA, 0.56, 0.36, 0.22, 0.36, 0.28]),
        (TitePk50, PSelectTt, 1, &[0.72, NA, 0.79, 0.55, 0.42, 0.74, 0.57]),
        (PocrmComplete, PSelectOd, 1, &[0.00, 0.49, 0.08, 0.20, 0.36, 0.00, 0.26]),
        (PocrmPartial, PSelectOd, 1, &[0.00, 0.50, 0.10, 0.21, 0.36, 0.00, 0.26]),
        (TitePk25, PSelectOd, 1, &[0.00, 0.06, 0.01, 0.03, 0.04, 0.00, 0.05]),
        (TitePk50, PSelectOd, 1, &[0.00, 0.28, 0.08, 0.16, 0.16, 0.00, 0.19]),
        (PocrmComplete, PSelectNone, 1, &[0.05, 0.51, 0.03, 0.03, 0.01, 0.06, 0.09]),
        (PocrmPartial, PSelectNone, 1, &[0.05, 0.50, 0.03, 0.03, 0.01, 0.02, 0.10]),
        (TitePk25, PSelectNone, 1, &[0.10, 0.94, 0.14, 0.16, 0.08, 0.13, 0.39]),
        (TitePk50, PSelectNone, 1, &[0.03, 0.72, 0.02, 0.03, 0.02, 0.04, 0.10]),
        (PocrmComplete, MeanPatientsOd, 1, &[0.0, 17.0, 2.5, 6.1, 9.3, 0.0, 8.1]),
        (PocrmPartial, MeanPatientsOd, 1, &[0.0, 17.6, 3.2, 7.0, 10.1, 0.0, 8.2]),
        (TitePk25, MeanPatientsOd, 1, &[0.0, 1.0, 2.7, 3.6, 4.8, 0.0, 4.0]),
        (TitePk50, MeanPatientsOd, 1, &[0.0, 4.6, 7.3, 8.5, 9.4, 0.0, 7.6]),
        (PocrmComplete, MeanPatientsTotal, 1, &[25.6, 17.0, 24.5, 24.2, 24.6, 25.2, 22.2]),
        (PocrmPartial, MeanPatientsTotal, 1, &[25.9, 17.6, 25.7, 25.3, 25.8, 25.9, 23.6]),
        (TitePk25, MeanPatientsTotal, 1, &[21.4, 3.6, 18.7, 18.2, 18.8, 20.9, 13.7]),
        (TitePk50, MeanPatientsTotal, 1, &[18.7, 8.5, 20.6, 21.1, 21.0, 18.6, 19.7]),
        (PocrmComplete, MeanDlts, 1, &[4.6, 8.9, 6.6, 7.2, 7.1, 4.5, 7.6]),
        (PocrmPartial, MeanDlts, 1, &[4.7, 9.3, 6.9, 7.8, 7.7, 4.7, 8.3]),
        (TitePk25, MeanDlts, 1, &[4.0, 4.5, 1.9, 4.6, 4.7, 3.8, 4.1]),
        (TitePk50, MeanDlts, 1, &[4.3, 6.7, 4.8, 7.3, 7.4, 4.1, 7.5]),
        // Schedule chosen as part of the MTC.
        (TitePk50, ScheduleSelection(0), 1, &[0.00, 0.25, 0.12, 0.33, 0.46, 0.01, 0.55]),
        (PocrmPartial, ScheduleSelection(0), 1, &[0.02, 0.45, 0.17, 0.28, 0.16, 0.02, 0.36]),
        (TitePk50, ScheduleSelection(1), 1, &[0.08, 0.02, 0.47, 0.56, 0.46, 0.08, 0.15]),
        (PocrmPartial, ScheduleSelection(1), 1, &[0.19, 0.04, 0.30, 0.34, 0.45, 0.27, 0.20]),
        (TitePk50, ScheduleSelection(2), 1, &[0.25, 0.02, 0.34, 0.08, 0.06, 0.16, 0.19]),
        (PocrmPartial, ScheduleSelection(2), 1, &[0.23, 0.01, 0.29, 0.29, 0.27, 0.15, 0.33]),
        (TitePk50, ScheduleSelection(3), 1, &[0.63, 0.00, 0.05, 0.00, 0.01, 0.72, 0.01]),
        (PocrmPartial, ScheduleSelection(3), 1, &[0.51, 0.00, 0.20, 0.06, 0.10, 0.50, 0.02]),
        // Time-to-DLT robustness, a = 0.50.
        (Robustness(TitePkProcess), PSelectTt, 1, &[0.72, 0.00, 0.79, 0.55, 0.42, 0.74, 0.57]),
        (Robustness(UniformTime), PSelectTt, 1, &[0.76, 0.00, 0.79, 0.58, 0.42, 0.76, 0.54]),
        (Robustness(ExponentialTime), PSelectTt, 1, &[0.75, 0.00, 0.80, 0.56, 0.46, 0.74, 0.54]),
        (Robustness(EarlyLateTime), PSelectTt, 1, &[0.76, 0.00, 0.80, 0.57, 0.42, 0.76, 0.54]),
        (Robustness(TitePkProcess), MeanPatientsOd, 1, &[0.0, 8.5, 4.6, 7.3, 9.4, 0.0, 7.6]),
        (Robustness(UniformTime), MeanPatientsOd, 1, &[0.0, 9.9, 5.1, 8.6, 10.4, 0.0, 8.7]),
        (Robustness(ExponentialTime), MeanPatientsOd, 1, &[0.0, 9.6, 4.7, 8.0, 10.1, 0.0, 8.4]),
        (Robustness(EarlyLateTime), MeanPatientsOd, 1, &[0.0, 9.6, 4.8, 8.2, 10.0, 0.0, 8.9]),
        (Robustness(TitePkProcess), MeanPatientsTotal, 1, &[18.7, 8.5, 20.6, 21.1, 21.0, 18.6, 19.7]),
        (Robustness(UniformTime), MeanPatientsTotal, 1, &[18.4, 9.9, 20.4, 21.0, 21.1, 18.2, 19.8]),
        (Robustness(ExponentialTime), MeanPatientsTotal, 1, &[18.9, 9.6, 20.4, 21.4, 21.5, 18.6, 19.5]),
        (Robustness(EarlyLateTime), MeanPatientsTotal, 1, &[19.0, 9.6, 20.0, 20.8, 21.0, 18.7, 19.8]),
        // Scenarios 8–10. The no-MTC row is labelled a = 0.25 in the source.
        (PocrmPartial, PSelectTt, 8, &[0.62, 0.63, 0.44]),
        (TitePk50, PSelectTt, 8, &[0.68, 0.75, 0.21]),
        (PocrmPartial, PSelectOd, 8, &[0.22, 0.17, 0.33]),
        (TitePk50, PSelectOd, 8, &[0.11, 0.12, 0.30]),
        (PocrmPartial, PSelectNone, 8, &[0.10, 0.10, 0.01]),
        (TitePk25, PSelectNone, 8, &[0.11, 0.08, 0.01]),
        (PocrmPartial, MeanPatientsOd, 8, &[7.9, 5.7, 10.0]),
        (TitePk50, MeanPatientsOd, 8, &[6.1, 6.8, 11.3]),
        (PocrmPartial, MeanPatientsTotal, 8, &[24.0, 24.8, 25.7]),
        (TitePk50, MeanPatientsTotal, 8, &[19.1, 19.3, 21.6]),
        (PocrmPartial, MeanDlts, 8, &[8.4, 7.4, 7.7]),
        (TitePk50, MeanDlts, 8, &[7.0, 7.0, 7.9]),
    ]
};

/// Published value of `metric` for `method` in scenario `id`.
pub fn reference_results(id: &str, method: Method, metric: Metric) -> Result<f64> {
    let n = scenario_number(id)?;
    REFERENCE
        .iter()
        .filter(|(m, k, _, _)| *m == method && *k == metric)
        .find_map(|(_, _, first, values)| {
            n.checked_sub(*first).and_then(|i| values.get(i)).copied()
        })
        .filter(|v| !v.is_nan())
        .ok_or_else(|| Error::MissingReference(format!("{id} / {method:?} / {metric:?}")))
}
