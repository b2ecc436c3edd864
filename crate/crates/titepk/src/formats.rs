//! Plain-text input files: scenario matrices, patient records and study
//! configurations.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use titepk_core::scenarios::{scenario_matrix, VidazaDefaults, SCENARIO_IDS};
use titepk_core::{DltGenerator, Scenario, SelectionStrategy};

use crate::settings::{FieldError, Model, ModelSettings, PkSettings, PriorSettings, ScheduleSettings};
use crate::wire::RecordDto;

/// Where an input problem is, and what it is.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum InputError {
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("line {line}: {field}: {message}")]
    Line { line: u64, field: String, message: String },
    #[error("{0}")]
    Field(FieldError),
    #[error("{}", .0.iter().map(|e| e.to_string()).collect::<Vec<_>>().join("; "))]
    Fields(Vec<FieldError>),
}

impl InputError {
    fn line(line: u64, field: impl Into<String>, message: impl Into<String>) -> Self {
        InputError::Line {
            line,
            field: field.into(),
            message: message.into(),
        }
    }
}

impl From<FieldError> for InputError {
    fn from(e: FieldError) -> Self {
        InputError::Field(e)
    }
}

fn read(path: &Path) -> Result<String, InputError> {
    std::fs::read_to_string(path).map_err(|e| InputError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

/// True DLT probabilities laid out like the published tables: one row per
/// schedule, one column per dose.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioTable {
    pub doses: Vec<f64>,
    pub schedules: Vec<ScheduleSettings>,
    /// `true_p[schedule][dose]`
    pub true_p: Vec<Vec<f64>>,
}

const SCENARIO_HEADER: [&str; 2] = ["schedule", "interval_hours"];

impl ScenarioTable {
    /// Catalogue scenario on the Vidaza grid.
    pub fn catalog(id: &str) -> Result<Self, InputError> {
        let m = scenario_matrix(id).map_err(|_| {
            InputError::Field(FieldError::new(
                "scenario",
                format!("unknown scenario {id:?}; expected one of {}", SCENARIO_IDS.join(", ")),
            ))
        })?;
        Ok(ScenarioTable {
            doses: VidazaDefaults::DOSES.to_vec(),
            schedules: ModelSettings::default().schedules,
            true_p: m.iter().map(|r| r.to_vec()).collect(),
        })
    }

    /// Parse the tab-separated layout:
    ///
    /// ```text
    /// # comment
    /// schedule  interval_hours  8     16    24
    /// A         192             0.05  0.07  0.11
    /// ```
    pub fn parse(text: &str) -> Result<Self, InputError> {
        let mut reader = csv::ReaderBuilder::new()
            .delimiter(b'\t')
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let headers = reader
            .headers()
            .map_err(|e| InputError::line(1, "header", e.to_string()))?
            .clone();
        let header_line = headers.position().map_or(1, |p| p.line());
        if headers.len() < 3 || headers.iter().take(2).ne(SCENARIO_HEADER) {
            return Err(InputError::line(
                header_line,
                "header",
                "expected schedule, interval_hours, then one column per dose",
            ));
        }
        let doses = headers
            .iter()
            .skip(2)
            .map(|h| match h.parse::<f64>() {
                Ok(d) if d.is_finite() && d > 0.0 => Ok(d),
                _ => Err(InputError::line(header_line, "dose", format!("bad dose {h:?}"))),
            })
            .collect::<Result<Vec<_>, _>>()?;
        let mut schedules = Vec::new();
        let mut true_p = Vec::new();
        for row in reader.records() {
            let row = row.map_err(|e| {
                let line = e.position().map_or(0, |p| p.line());
                InputError::line(line, "row", e.to_string())
            })?;
            let line = row.position().map_or(0, |p| p.line());
            let interval: f64 = row[1]
                .parse()
                .ok()
                .filter(|v: &f64| v.is_finite() && *v > 0.0)
                .ok_or_else(|| InputError::line(line, "interval_hours", format!("bad interval {:?}", &row[1])))?;
            let probs = row
                .iter()
                .skip(2)
                .zip(&doses)
                .map(|(v, d)| match v.parse::<f64>() {
                    Ok(p) if p > 0.0 && p < 1.0 => Ok(p),
                    _ => Err(InputError::line(line, format!("p[{d}]"), format!("{v:?} is not a probability in (0, 1)"))),
                })
                .collect::<Result<Vec<_>, _>>()?;
            schedules.push(ScheduleSettings {
                label: row[0].to_string(),
                interval_hours: interval,
            });
            true_p.push(probs);
        }
        if schedules.is_empty() {
            return Err(InputError::line(header_line, "row", "no schedule rows"));
        }
        Ok(ScenarioTable {
            doses,
            schedules,
            true_p,
        })
    }

    pub fn load(path: &Path) -> Result<Self, InputError> {
        Self::parse(&read(path)?)
    }

    pub fn render(&self, title: &str) -> String {
        let mut out = format!("# {title}\nschedule\tinterval_hours");
        for d in &self.doses {
            out += &format!("\t{d}");
        }
        out.push('\n');
        for (s, row) in self.schedules.iter().zip(&self.true_p) {
            out += &format!("{}\t{}", s.label, s.interval_hours);
            for p in row {
                out += &format!("\t{p:.2}");
            }
            out.push('\n');
        }
        out
    }

    /// Settings whose grid matches this table.
    pub fn apply_grid(&self, settings: &mut ModelSettings) {
        settings.doses = self.doses.clone();
        settings.schedules = self.schedules.clone();
    }

    pub fn scenario(&self, label: &str, model: &Model) -> Result<Scenario, InputError> {
        let flat = self.true_p.iter().flatten().copied().collect();
        Scenario::new(label, model.grid.clone(), flat)
            .map_err(|e| InputError::Field(FieldError::new("scenario", e.to_string())))
    }
}

/// Read a patient record file. A header row is required, naming either
/// `combination,dlt,time_hours` or `dose,interval_hours,dlt,time_hours`.
/// `dlt` accepts `1`/`0`, `true`/`false`, `yes`/`no`.
pub fn parse_records(text: &str) -> Result<Vec<RecordDto>, InputError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| InputError::line(1, "header", e.to_string()))?
        .clone();
    if headers.iter().all(str::is_empty) {
        // an empty file has no records
        return Ok(Vec::new());
    }
    let col = |name: &str| headers.iter().position(|h| h == name);
    let header_err = |msg: &str| InputError::line(1, "header", msg.to_string());
    let dlt = col("dlt").ok_or_else(|| header_err("missing column dlt"))?;
    let time = col("time_hours").ok_or_else(|| header_err("missing column time_hours"))?;
    let by_label = col("combination");
    let by_dose = col("dose").zip(col("interval_hours"));
    if by_label.is_some() == by_dose.is_some() {
        return Err(header_err("need either a combination column or dose and interval_hours columns"));
    }
    let number = |line: u64, field: &str, v: &str| -> Result<f64, InputError> {
        v.parse::<f64>()
            .ok()
            .filter(|x| x.is_finite())
            .ok_or_else(|| InputError::line(line, field, format!("{v:?} is not a number")))
    };
    let mut out = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            InputError::line(line, "row", e.to_string())
        })?;
        let line = row.position().map_or(0, |p| p.line());
        let flag = match row[dlt].to_ascii_lowercase().as_str() {
            "1" | "true" | "yes" => true,
            "0" | "false" | "no" => false,
            other => return Err(InputError::line(line, "dlt", format!("{other:?} is not a DLT flag"))),
        };
        let time_hours = number(line, "time_hours", &row[time])?;
        let (combination, dose, interval_hours) = match (by_label, by_dose) {
            (Some(i), _) => (Some(row[i].to_string()), None, None),
            (None, Some((d, f))) => (None, Some(number(line, "dose", &row[d])?), Some(number(line, "interval_hours", &row[f])?)),
            (None, None) => unreachable!(),
        };
        out.push(RecordDto {
            combination,
            dose,
            interval_hours,
            dlt: flag,
            time_hours,
        });
    }
    Ok(out)
}

/// [`parse_records`] on a file.
pub fn load_records(path: &Path) -> Result<Vec<RecordDto>, InputError> {
    parse_records(&read(path)?)
}

pub fn render_records(records: &[RecordDto]) -> String {
    let mut out = String::from("combination,dlt,time_hours\n");
    for r in records {
        out += &format!(
            "{},{},{}\n",
            r.combination.as_deref().unwrap_or(""),
            u8::from(r.dlt),
            r.time_hours
        );
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InlineSchedule {
    pub label: String,
    pub interval_hours: f64,
    pub true_p: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InlineScenario {
    pub doses: Vec<f64>,
    pub schedules: Vec<InlineSchedule>,
}

/// Study configuration file (TOML). Exactly one of `scenario`,
/// `scenario_file` or `[inline]` selects the true probabilities.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyConfigFile {
    pub scenario: Option<String>,
    pub scenario_file: Option<PathBuf>,
    pub inline: Option<InlineScenario>,
    pub feasibility_bound: Option<f64>,
    pub selection_strategy: Option<String>,
    pub no_skip: Option<bool>,
    pub generator: Option<String>,
    pub n_trials: Option<usize>,
    pub seed: Option<u64>,
    #[serde(default)]
    pub pk: PkSettings,
    #[serde(default)]
    pub prior: PriorSettings,
}

pub const DEFAULT_TRIALS: usize = 1000;
pub const DEFAULT_SEED: u64 = 42;

/// A fully resolved simulation request.
#[derive(Debug, Clone)]
pub struct StudyPlan {
    pub label: String,
    pub scenario: Scenario,
    pub table: ScenarioTable,
    pub model: Model,
    pub generator: DltGenerator,
    pub n_trials: usize,
    pub seed: u64,
}

impl StudyConfigFile {
    pub fn parse(text: &str) -> Result<Self, InputError> {
        toml::from_str(text).map_err(|e| {
            let line = e
                .span()
                .map_or(0, |s| text[..s.start.min(text.len())].matches('\n').count() as u64 + 1);
            InputError::line(line, "config", e.message().to_string())
        })
    }

    /// Relative `scenario_file` paths resolve against the config's directory.
    pub fn load(path: &Path) -> Result<Self, InputError> {
        let mut cfg = Self::parse(&read(path)?)?;
        if let (Some(f), Some(dir)) = (&cfg.scenario_file, path.parent()) {
            if f.is_relative() {
                cfg.scenario_file = Some(dir.join(f));
            }
        }
        Ok(cfg)
    }

    pub fn resolve(&self) -> Result<StudyPlan, InputError> {
        let sources = [self.scenario.is_some(), self.scenario_file.is_some(), self.inline.is_some()];
        let (label, table) = match sources.iter().filter(|s| **s).count() {
            0 => {
                return Err(FieldError::new(
                    "scenario",
                    "missing; set scenario (S1..S10), scenario_file or [inline]",
                )
                .into())
            }
            1 => {
                if let Some(id) = &self.scenario {
                    (id.clone(), ScenarioTable::catalog(id)?)
                } else if let Some(f) = &self.scenario_file {
                    let name = f.file_stem().map_or("file".into(), |s| s.to_string_lossy().into_owned());
                    (name, ScenarioTable::load(f)?)
                } else {
                    let inline = self.inline.as_ref().expect("counted above");
                    (String::from("inline"), inline_table(inline)?)
                }
            }
            _ => {
                return Err(FieldError::new("scenario", "give only one of scenario, scenario_file or [inline]").into())
            }
        };

        let mut settings = ModelSettings {
            pk: self.pk.clone(),
            prior: self.prior.clone(),
            ..ModelSettings::default()
        };
        table.apply_grid(&mut settings);
        if let Some(a) = self.feasibility_bound {
            settings.escalation.feasibility_bound = a;
        }
        if let Some(s) = &self.selection_strategy {
            settings.escalation.selection_strategy = s.clone();
        }
        if let Some(b) = self.no_skip {
            settings.escalation.no_skip = b;
        }
        let model = settings.build().map_err(InputError::Fields)?;

        let generator_name = self.generator.as_deref().unwrap_or("tite-pk");
        let generator = DltGenerator::from_name(generator_name).ok_or_else(|| {
            FieldError::new(
                "generator",
                format!("unknown generator {generator_name:?}; expected tite-pk, uniform, exponential or early-late"),
            )
        })?;
        let n_trials = self.n_trials.unwrap_or(DEFAULT_TRIALS);
        if n_trials == 0 {
            return Err(FieldError::new("n_trials", "must be >= 1").into());
        }
        let scenario = table.scenario(&label, &model)?;
        Ok(StudyPlan {
            label,
            scenario,
            table,
            model,
            generator,
            n_trials,
            seed: self.seed.unwrap_or(DEFAULT_SEED),
        })
    }
}

fn inline_table(inline: &InlineScenario) -> Result<ScenarioTable, InputError> {
    for (i, s) in inline.schedules.iter().enumerate() {
        if s.true_p.len() != inline.doses.len() {
            return Err(FieldError::new(
                format!("inline.schedules[{i}].true_p"),
                format!("expected {} values, one per dose", inline.doses.len()),
            )
            .into());
        }
        if let Some(j) = s.true_p.iter().position(|p| !(*p > 0.0 && *p < 1.0)) {
            return Err(FieldError::new(format!("inline.schedules[{i}].true_p[{j}]"), "must lie in (0, 1)").into());
        }
    }
    Ok(ScenarioTable {
        doses: inline.doses.clone(),
        schedules: inline
            .schedules
            .iter()
            .map(|s| ScheduleSettings {
                label: s.label.clone(),
                interval_hours: s.interval_hours,
            })
            .collect(),
        true_p: inline.schedules.iter().map(|s| s.true_p.clone()).collect(),
    })
}

/// Parse a selection strategy name into the core type, naming the field on
/// failure.
pub fn strategy(name: &str) -> Result<SelectionStrategy, FieldError> {
    SelectionStrategy::from_name(name).ok_or_else(|| {
        FieldError::new(
            "selection_strategy",
            format!("unknown strategy {name:?}; expected highest-eligible, lowest-eligible or max-target"),
        )
    })
}
