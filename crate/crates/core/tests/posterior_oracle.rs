use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use titepk_core::scenarios::{vidaza_grid, vidaza_params, vidaza_prior};
use titepk_core::{
    fit_posterior, interval_probabilities, log_likelihood, make_exposure, sample_dlt, BetaPrior,
    DltDraw, DltGenerator, LikelihoodSummary, PatientRecord, PkParams, Regimen, DEFAULT_GRID_SIZE,
};
use titepk_oracles::{autocorrelation_time, batch_mean, central_difference, metropolis, proportion_se};

fn cloglog(p: f64) -> f64 {
    (-(-p).ln_1p()).ln()
}

/// Up to 30 patients on random Vidaza combinations with a random true β.
fn random_dataset(rng: &mut ChaCha8Rng, params: &PkParams) -> Vec<PatientRecord> {
    let grid = vidaza_grid(params);
    let log_beta: f64 = rng.random_range(-3.5..0.5);
    let n = rng.random_range(1..=30);
    (0..n)
        .map(|_| {
            let c = grid.combination(rng.random_range(0..grid.len()));
            let regimen = grid.regimen(c).clone();
            let p = 1.0 - (-log_beta.exp() * grid.cycle_auc(c)).exp();
            let follow_up = if rng.random_bool(0.8) { 672.0 } else { rng.random_range(1.0..672.0) };
            match sample_dlt(DltGenerator::TitePkProcess, p, &regimen, params, rng).unwrap() {
                DltDraw::Event(t) if t <= follow_up => PatientRecord::dlt(regimen, t),
                _ => PatientRecord::censored(regimen, follow_up),
            }
        })
        .collect()
}

/// Unnormalized log posterior built directly from the event density
/// `β E(t) exp(−β AUC_E(t))`.
fn oracle_log_posterior(records: &[PatientRecord], prior: BetaPrior, params: &PkParams) -> impl Fn(f64) -> f64 {
    let mut events = 0.0;
    let mut log_e = 0.0;
    let mut area = 0.0;
    for r in records {
        let profile = make_exposure(r.regimen.clone(), *params);
        let t = r.outcome.time();
        area += profile.auc(t);
        if r.outcome.is_dlt() {
            events += 1.0;
            log_e += profile.exposure(t).ln();
        }
    }
    move |b: f64| {
        let z = (b - prior.mu) / prior.sigma;
        -0.5 * z * z + events * b + log_e - b.exp() * area
    }
}

#[test]
fn quadrature_agrees_with_metropolis() {
    let start = std::time::Instant::now();
    let params = vidaza_params();
    let prior = vidaza_prior(&params);
    let grid = vidaza_grid(&params);
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut compared = 0;
    let mut failures = Vec::new();
    for dataset in 0..20 {
        let records = random_dataset(&mut rng, &params);
        let posterior = fit_posterior(&records, &prior, &params, DEFAULT_GRID_SIZE).unwrap();
        let chain = metropolis(
            oracle_log_posterior(&records, prior, &params),
            prior.mu,
            prior.sigma,
            50_000,
            5_000,
            &mut rng,
        );
        let tau = autocorrelation_time(&chain.draws, 50);
        for c in grid.combinations() {
            let auc = grid.cycle_auc(c);
            let lo = cloglog(0.2) - auc.ln();
            let hi = cloglog(0.4) - auc.ln();
            let quad = interval_probabilities(&posterior, auc);
            let checks = [
                (quad.underdose, batch_mean(&chain.draws, |b| f64::from(u8::from(b < lo)), 50)),
                (quad.target, batch_mean(&chain.draws, |b| f64::from(u8::from(b >= lo && b <= hi)), 50)),
                (quad.overdose, batch_mean(&chain.draws, |b| f64::from(u8::from(b > hi)), 50)),
            ];
            for (q, (mc, se)) in checks {
                compared += 1;
                // Batch means underestimate the error of rare indicators (a
                // tail hit by no draw has zero batch variance), so the error
                // is also taken under the hypothesis that `q` is the truth.
                let se = se.max(proportion_se(q, chain.draws.len(), tau));
                if (q - mc).abs() > 3.0 * se {
                    failures.push(format!("dataset {dataset} {}: quad {q:.5} mc {mc:.5} se {se:.5}", grid.label(c)));
                }
            }
        }
        let (m, se) = batch_mean(&chain.draws, |b| b, 50);
        assert!((posterior.mean() - m).abs() < 3.0 * se, "dataset {dataset} mean");
    }
    println!("{compared} interval probabilities compared, {} outside 3 SE", failures.len());
    assert!(failures.is_empty(), "{failures:#?}");
    assert!(start.elapsed().as_secs() < 120);
}

#[test]
fn log_likelihood_matches_finite_difference_density() {
    let params = vidaza_params();
    let grid = vidaza_grid(&params);
    for c in grid.combinations() {
        let regimen = grid.regimen(c).clone();
        let profile = make_exposure(regimen.clone(), params);
        for b in [-3.0f64, -1.0, 0.5] {
            // f(t) = −S'(t) = H'(t)·exp(−H(t)); differencing the cumulative
            // hazard H avoids cancellation in S ≈ 1. Times stay within a few
            // half-lives of a dose so that H actually moves at step 1e-3.
            let hazard = |t: f64| b.exp() * profile.auc(t);
            for t in [5.0, 30.0, 100.0, 200.0] {
                let log_density = central_difference(hazard, t, 1e-3).ln() - hazard(t);
                let ll = log_likelihood(&[PatientRecord::dlt(regimen.clone(), t)], b, &params);
                assert!((ll - log_density).abs() < 1e-4, "{} b={b} t={t}: {ll} vs {log_density}", grid.label(c));
                let cens = log_likelihood(&[PatientRecord::censored(regimen.clone(), t)], b, &params);
                assert!((cens + hazard(t)).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn likelihood_factorizes_over_patients() {
    let params = vidaza_params();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..10 {
        let records = random_dataset(&mut rng, &params);
        let merged = records
            .iter()
            .map(|r| LikelihoodSummary::single(r, &params))
            .fold(LikelihoodSummary::default(), |a, s| a.merge(&s));
        for b in [-4.0, -1.2, 0.3] {
            let joint = log_likelihood(&records, b, &params);
            let parts: f64 = records.iter().map(|r| log_likelihood(std::slice::from_ref(r), b, &params)).sum();
            assert!((joint - parts).abs() < 1e-9 * (1.0 + joint.abs()));
            assert!((merged.log_likelihood(b) - joint).abs() < 1e-9 * (1.0 + joint.abs()));
        }
    }
}

#[test]
fn posterior_concentrates_with_more_patients() {
    let params = vidaza_params();
    let prior = vidaza_prior(&params);
    let reference = params.reference_regimen();
    let block = [
        PatientRecord::dlt(reference.clone(), 200.0),
        PatientRecord::censored(reference.clone(), 672.0),
        PatientRecord::censored(reference.clone(), 672.0),
    ];
    let mut records = Vec::new();
    let mut last = prior.sigma;
    for _ in 0..8 {
        records.extend(block.iter().cloned());
        let sd = fit_posterior(&records, &prior, &params, DEFAULT_GRID_SIZE).unwrap().sd();
        assert!(sd < last, "{sd} !< {last}");
        last = sd;
    }
}

#[test]
fn grid_refinement_changes_interval_probabilities_by_less_than_1e_6() {
    let params = vidaza_params();
    let prior = vidaza_prior(&params);
    let grid = vidaza_grid(&params);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..10 {
        let records = random_dataset(&mut rng, &params);
        let coarse = fit_posterior(&records, &prior, &params, 2001).unwrap();
        let fine = fit_posterior(&records, &prior, &params, 4001).unwrap();
        for c in grid.combinations() {
            let a = interval_probabilities(&coarse, grid.cycle_auc(c));
            let b = interval_probabilities(&fine, grid.cycle_auc(c));
            for (x, y) in [(a.underdose, b.underdose), (a.target, b.target), (a.overdose, b.overdose)] {
                assert!((x - y).abs() < 1e-6, "{x} {y}");
            }
        }
    }
}

#[test]
fn no_records_returns_the_prior() {
    let params = vidaza_params();
    let prior = vidaza_prior(&params);
    let post = fit_posterior(&[], &prior, &params, DEFAULT_GRID_SIZE).unwrap();
    assert!((post.mean() - prior.mu).abs() < 1e-9);
    assert!((post.sd() - prior.sigma).abs() < 1e-6);
}

#[test]
fn invalid_records_are_rejected() {
    let params = vidaza_params();
    let prior = vidaza_prior(&params);
    let r = params.reference_regimen();
    assert!(fit_posterior(&[PatientRecord::dlt(r.clone(), 700.0)], &prior, &params, 2001).is_err());
    assert!(fit_posterior(&[PatientRecord::censored(r.clone(), -1.0)], &prior, &params, 2001).is_err());
    // a DLT before the first administration has zero density
    let late = Regimen::new(24.0, vec![100.0]).unwrap();
    assert!(fit_posterior(&[PatientRecord::dlt(late, 50.0)], &prior, &params, 2001).is_err());
    assert!(fit_posterior(&[], &prior, &params, 100).is_err());
}
