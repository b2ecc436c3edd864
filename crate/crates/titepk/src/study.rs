//! Parallel simulation studies.

use rayon::prelude::*;
use titepk_core::{
    run_trial, trial_rng, BetaPrior, DltGenerator, EscalationConfig, OperatingCharacteristics,
    PkParams, Scenario, StudyAccumulator, TrialSummary,
};

/// Operating characteristics plus the per-trial summaries they came from.
#[derive(Debug, Clone, PartialEq)]
pub struct Study {
    pub characteristics: OperatingCharacteristics,
    pub trials: Vec<TrialSummary>,
}

/// Run `n_trials` independent trials. Trial `i` draws from stream `i` of
/// `seed`, so results do not depend on the thread count.
pub fn run_study(
    scenario: &Scenario,
    cfg: &EscalationConfig,
    generator: DltGenerator,
    prior: &BetaPrior,
    params: &PkParams,
    n_trials: usize,
    seed: u64,
) -> titepk_core::Result<Study> {
    if n_trials == 0 {
        return Err(titepk_core::Error::InvalidArgument {
            name: "n_trials",
            reason: "must be >= 1".into(),
        });
    }
    cfg.validate()?;
    let trials = (0..n_trials)
        .into_par_iter()
        .map(|i| {
            let mut rng = trial_rng(seed, i as u64);
            run_trial(scenario, cfg, generator, prior, params, &mut rng).map(|r| r.summary(scenario))
        })
        .collect::<titepk_core::Result<Vec<_>>>()?;
    let mut acc = StudyAccumulator::new(scenario.grid().schedules().len());
    for t in &trials {
        acc.add(t);
    }
    Ok(Study {
        characteristics: acc.finish(),
        trials,
    })
}

/// Run the study described by a resolved configuration.
pub fn run_plan(plan: &crate::formats::StudyPlan) -> titepk_core::Result<Study> {
    run_study(
        &plan.scenario,
        &plan.model.config,
        plan.generator,
        &plan.model.prior,
        &plan.model.params,
        plan.n_trials,
        plan.seed,
    )
}
