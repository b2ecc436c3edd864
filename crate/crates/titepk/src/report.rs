//! Rendering of study results: JSON, flat CSV and a text block laid out like
//! the published operating-characteristic tables.

use std::fmt::Write as _;
use std::io;
use std::path::{Path, PathBuf};

use crate::formats::StudyPlan;
use crate::study::Study;
use crate::wire::{CharacteristicsDto, DecisionDto, StudyReport, TrialSummaryDto};

pub fn study_report(plan: &StudyPlan, study: &Study) -> StudyReport {
    let grid = &plan.model.grid;
    let labels: Vec<String> = grid.schedules().iter().map(|s| s.label.clone()).collect();
    let cfg = &plan.model.config;
    StudyReport {
        scenario: plan.label.clone(),
        feasibility_bound: cfg.feasibility_bound,
        selection_strategy: cfg.selection_strategy.name().to_string(),
        no_skip: cfg.no_skip,
        generator: plan.generator.name().to_string(),
        seed: plan.seed,
        characteristics: CharacteristicsDto::new(&study.characteristics, &labels),
        trials: study
            .trials
            .iter()
            .enumerate()
            .map(|(i, t)| TrialSummaryDto::new(i, t, grid))
            .collect(),
    }
}

/// One header row and one value row; schedule shares become
/// `schedule_<label>` columns.
pub fn characteristics_csv(report: &StudyReport) -> String {
    let c = &report.characteristics;
    let mut header = String::from(
        "scenario,feasibility_bound,selection_strategy,no_skip,generator,seed,n_trials,\
         p_select_tt,p_select_od,p_select_ud,p_select_none,mean_patients_od,mean_patients_total,mean_dlts",
    );
    let mut row = format!(
        "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
        report.scenario,
        report.feasibility_bound,
        report.selection_strategy,
        report.no_skip,
        report.generator,
        report.seed,
        c.n_trials,
        c.p_select_tt,
        c.p_select_od,
        c.p_select_ud,
        c.p_select_none,
        c.mean_patients_od,
        c.mean_patients_total,
        c.mean_dlts
    );
    for s in &c.schedule_selection {
        let _ = write!(header, ",schedule_{}", s.schedule);
        let _ = write!(row, ",{}", s.probability);
    }
    format!("{header}\n{row}\n")
}

pub fn trials_csv(report: &StudyReport) -> String {
    let mut out = String::from("trial,mtc,mtc_class,stop_reason,n_patients,n_dlts,n_patients_od\n");
    for t in &report.trials {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            t.trial,
            t.mtc.as_deref().unwrap_or(""),
            t.mtc_class,
            t.stop_reason.as_deref().unwrap_or(""),
            t.n_patients,
            t.n_dlts,
            t.n_patients_od
        );
    }
    out
}

/// Text block in the layout of the published results tables.
pub fn table_block(report: &StudyReport) -> String {
    let c = &report.characteristics;
    let mut out = String::new();
    let _ = writeln!(
        out,
        "Scenario {}  a={}  strategy={}  no_skip={}  generator={}  trials={}  seed={}",
        report.scenario,
        report.feasibility_bound,
        report.selection_strategy,
        report.no_skip,
        report.generator,
        c.n_trials,
        report.seed
    );
    let lines = [
        ("P(select MTC in targeted toxicity interval)", c.p_select_tt, 2),
        ("P(select MTC in overdosing interval)", c.p_select_od, 2),
        ("P(select MTC in underdosing interval)", c.p_select_ud, 2),
        ("P(no MTC selected)", c.p_select_none, 2),
        ("Mean patients in overdosing interval", c.mean_patients_od, 1),
        ("Mean patients in total", c.mean_patients_total, 1),
        ("Mean DLTs", c.mean_dlts, 1),
    ];
    for (name, v, digits) in lines {
        let _ = writeln!(out, "  {name:<46} {v:>6.digits$}");
    }
    let shares: Vec<String> = c
        .schedule_selection
        .iter()
        .map(|s| format!("{} {:.2}", s.schedule, s.probability))
        .collect();
    let _ = writeln!(out, "  {:<46} {}", "Schedule of selected MTC", shares.join("  "));
    out
}

pub fn decision_text(d: &DecisionDto) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<8} {:>9} {:>8} {:>8} {:>8} {:>6} {:>8}",
        "combo", "AUC_E(t*)", "P(UD)", "P(TT)", "P(OD)", "EWOC", "treated"
    );
    for r in &d.rows {
        let _ = writeln!(
            out,
            "{:<8} {:>9.4} {:>8.4} {:>8.4} {:>8.4} {:>6} {:>8}",
            r.combination,
            r.cycle_auc,
            r.p_underdose,
            r.p_target,
            r.p_overdose,
            if r.ewoc_ok { "ok" } else { "no" },
            r.n_treated
        );
    }
    let _ = writeln!(
        out,
        "records: {}  a={}  strategy={}  no_skip={}",
        d.n_records, d.feasibility_bound, d.selection_strategy, d.no_skip
    );
    let _ = writeln!(
        out,
        "recommendation: {} ({})",
        d.recommendation.as_deref().unwrap_or("stop: no admissible combination"),
        d.rationale
    );
    out
}

/// Which artifacts `simulate` writes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Artifacts {
    Json,
    Csv,
    Both,
}

/// Write `<stem>.json`, `<stem>.csv` and `<stem>-trials.csv` under `dir`.
pub fn write_study(dir: &Path, stem: &str, report: &StudyReport, which: Artifacts) -> io::Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    if which != Artifacts::Csv {
        let path = dir.join(format!("{stem}.json"));
        let mut json = serde_json::to_string_pretty(report).map_err(io::Error::other)?;
        json.push('\n');
        std::fs::write(&path, json)?;
        written.push(path);
    }
    if which != Artifacts::Json {
        let path = dir.join(format!("{stem}.csv"));
        std::fs::write(&path, characteristics_csv(report))?;
        written.push(path);
        let path = dir.join(format!("{stem}-trials.csv"));
        std::fs::write(&path, trials_csv(report))?;
        written.push(path);
    }
    Ok(written)
}
