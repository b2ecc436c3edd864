//! Prior, likelihood and posterior for `log β`.
//!
//! The hazard is `h(t) = β·E(t)` and the cumulative hazard
//! `H(t) = β·AUC_E(t)`. A patient with a DLT at `T` contributes the density
//! `h(T)·exp(−H(T))`; a patient censored at `C` contributes `exp(−H(C))`.
//! On the log scale the whole likelihood collapses to three sufficient
//! statistics:
//!
//! ```text
//! log L(b) = D·b + Σ_events log E(T_j) − exp(b) · Σ_j AUC_E(time_j)
//! ```
//!
//! With a single scalar parameter, the posterior is represented on a fixed
//! uniform grid over `prior mean ± 7 prior sd` and integrated with a
//! fourth-order cell rule, which makes all downstream quantities
//! deterministic.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::pk::{make_exposure, PkParams, Regimen};

/// Grid size used by the escalation and simulation code.
pub const DEFAULT_GRID_SIZE: usize = 2001;

/// Smallest admissible posterior grid.
pub const MIN_GRID_SIZE: usize = 201;

/// Half-width of the posterior grid in prior standard deviations.
const GRID_HALF_WIDTH_SDS: f64 = 7.0;

/// Standard deviation of the weakly informative prior on `log β`.
pub const DEFAULT_PRIOR_SD: f64 = 1.75;

/// Lower and upper bounds of the targeted-toxicity interval.
pub const TARGET_LOW: f64 = 0.20;
pub const TARGET_HIGH: f64 = 0.40;

/// `log(−log(1 − p))`.
pub fn cloglog(p: f64) -> f64 {
    libm::log(-libm::log1p(-p))
}

/// `1 − exp(−exp(x))`.
pub fn inv_cloglog(x: f64) -> f64 {
    -libm::expm1(-libm::exp(x))
}

/// Cycle-1 follow-up outcome of one patient.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Outcome {
    /// First DLT observed at this time (hours).
    Dlt { time: f64 },
    /// DLT-free up to this time (hours), then censored.
    Censored { time: f64 },
}

impl Outcome {
    pub fn time(&self) -> f64 {
        match *self {
            Outcome::Dlt { time } | Outcome::Censored { time } => time,
        }
    }

    pub fn is_dlt(&self) -> bool {
        matches!(self, Outcome::Dlt { .. })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PatientRecord {
    pub regimen: Regimen,
    pub outcome: Outcome,
}

impl PatientRecord {
    pub fn dlt(regimen: Regimen, time: f64) -> Self {
        PatientRecord {
            regimen,
            outcome: Outcome::Dlt { time },
        }
    }

    pub fn censored(regimen: Regimen, time: f64) -> Self {
        PatientRecord {
            regimen,
            outcome: Outcome::Censored { time },
        }
    }

    /// Checks `0 < time <= t_star`. `index` is only used in the error.
    pub fn validate(&self, index: usize, t_star: f64) -> Result<()> {
        let time = self.outcome.time();
        let what = if self.outcome.is_dlt() { "event" } else { "censoring" };
        if !time.is_finite() || time <= 0.0 {
            return Err(Error::InvalidRecord {
                index,
                reason: format!("{what} time {time} must be > 0"),
            });
        }
        if time > t_star {
            return Err(Error::InvalidRecord {
                index,
                reason: format!("{what} time {time} exceeds cycle length {t_star}"),
            });
        }
        Ok(())
    }
}

/// Normal prior on `log β`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BetaPrior {
    pub mu: f64,
    pub sigma: f64,
}

impl BetaPrior {
    pub fn new(mu: f64, sigma: f64) -> Result<Self> {
        if !mu.is_finite() {
            return Err(Error::arg("mu", "must be finite"));
        }
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(Error::arg("sigma", "must be finite and > 0"));
        }
        Ok(BetaPrior { mu, sigma })
    }

    fn log_density(&self, log_beta: f64) -> f64 {
        let z = (log_beta - self.mu) / self.sigma;
        -0.5 * z * z
    }
}

/// Prior whose mean puts the reference combination's cycle-1 DLT
/// probability at `p_ref`: since `AUC_E(t*) = 1` at the reference,
/// `cloglog(p_ref) = log β`.
pub fn default_prior(_params: &PkParams, p_ref: f64) -> Result<BetaPrior> {
    if !(p_ref > 0.0 && p_ref < 1.0) {
        return Err(Error::arg("p_ref", "must lie in (0, 1)"));
    }
    BetaPrior::new(cloglog(p_ref), DEFAULT_PRIOR_SD)
}

/// Sufficient statistics of the log-likelihood.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LikelihoodSummary {
    /// Number of DLTs.
    pub events: u32,
    /// `Σ log E(T_j)` over DLTs; `−∞` if any DLT falls where `E = 0`.
    pub log_exposure_sum: f64,
    /// `Σ AUC_E(time_j)` over all patients.
    pub cumulative_exposure: f64,
}

impl LikelihoodSummary {
    pub fn from_records(records: &[PatientRecord], params: &PkParams) -> Self {
        records.iter().fold(Self::default(), |acc, r| {
            acc.merge(&Self::single(r, params))
        })
    }

    pub fn single(record: &PatientRecord, params: &PkParams) -> Self {
        let profile = make_exposure(record.regimen.clone(), *params);
        let time = record.outcome.time();
        let cumulative_exposure = profile.auc(time);
        match record.outcome {
            Outcome::Dlt { .. } => {
                let e = profile.exposure(time);
                LikelihoodSummary {
                    events: 1,
                    log_exposure_sum: if e > 0.0 { libm::log(e) } else { f64::NEG_INFINITY },
                    cumulative_exposure,
                }
            }
            Outcome::Censored { .. } => LikelihoodSummary {
                events: 0,
                log_exposure_sum: 0.0,
                cumulative_exposure,
            },
        }
    }

    pub fn merge(&self, other: &Self) -> Self {
        LikelihoodSummary {
            events: self.events + other.events,
            log_exposure_sum: self.log_exposure_sum + other.log_exposure_sum,
            cumulative_exposure: self.cumulative_exposure + other.cumulative_exposure,
        }
    }

    pub fn log_likelihood(&self, log_beta: f64) -> f64 {
        if self.log_exposure_sum == f64::NEG_INFINITY {
            return f64::NEG_INFINITY;
        }
        let mut ll = self.log_exposure_sum - libm::exp(log_beta) * self.cumulative_exposure;
        if self.events > 0 {
            ll += f64::from(self.events) * log_beta;
        }
        ll
    }
}

/// Log-likelihood of `records` at `log β`, each patient evaluated on their
/// own exposure profile.
pub fn log_likelihood(records: &[PatientRecord], log_beta: f64, params: &PkParams) -> f64 {
    LikelihoodSummary::from_records(records, params).log_likelihood(log_beta)
}

#[derive(Debug, Clone, PartialEq)]
enum Support {
    Grid {
        lo: f64,
        step: f64,
        /// Unnormalized log posterior at each node.
        log_density: Vec<f64>,
        /// Density at each node, scaled so that the grid integral is 1.
        density: Vec<f64>,
        /// CDF at each node.
        cdf: Vec<f64>,
        /// Node weights summing to 1, for expectations.
        weights: Vec<f64>,
    },
    Point(f64),
}

/// Posterior distribution of `log β`.
#[derive(Debug, Clone, PartialEq)]
pub struct Posterior {
    support: Support,
}

/// Fit the posterior of `log β` on a uniform grid of `grid_size` nodes over
/// `prior.mu ± 7·prior.sigma`.
pub fn fit_posterior(
    records: &[PatientRecord],
    prior: &BetaPrior,
    params: &PkParams,
    grid_size: usize,
) -> Result<Posterior> {
    for (i, r) in records.iter().enumerate() {
        r.validate(i, params.t_star())?;
    }
    Posterior::from_summary(&LikelihoodSummary::from_records(records, params), prior, grid_size)
}

impl Posterior {
    /// Posterior from precomputed likelihood statistics; records are not
    /// re-validated.
    pub fn from_summary(
        summary: &LikelihoodSummary,
        prior: &BetaPrior,
        grid_size: usize,
    ) -> Result<Self> {
        if grid_size < MIN_GRID_SIZE {
            return Err(Error::arg("grid_size", format!("must be >= {MIN_GRID_SIZE}")));
        }
        let half = GRID_HALF_WIDTH_SDS * prior.sigma;
        let lo = prior.mu - half;
        let step = 2.0 * half / (grid_size - 1) as f64;
        let log_density: Vec<f64> = (0..grid_size)
            .map(|i| {
                let b = lo + step * i as f64;
                prior.log_density(b) + summary.log_likelihood(b)
            })
            .collect();
        let max = log_density.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !max.is_finite() {
            return Err(Error::DataInconsistent);
        }
        let raw: Vec<f64> = log_density.iter().map(|l| libm::exp(l - max)).collect();

        let n = grid_size;
        let mut cdf = Vec::with_capacity(n);
        cdf.push(0.0);
        let mut acc = 0.0;
        for cell in 0..n - 1 {
            acc += cell_integral(&raw, step, cell, 1.0);
            cdf.push(acc);
        }
        let total = acc;
        if !(total.is_finite() && total > 0.0) {
            return Err(Error::DataInconsistent);
        }
        for c in cdf.iter_mut() {
            *c /= total;
        }
        let density: Vec<f64> = raw.iter().map(|p| p / total).collect();
        // The cell rule's node weights are `step` in the interior and
        // trapezoidal at the ends.
        let mut weights: Vec<f64> = density.iter().map(|p| p * step).collect();
        weights[0] *= 0.5;
        weights[n - 1] *= 0.5;
        let wsum: f64 = weights.iter().sum();
        for w in weights.iter_mut() {
            *w /= wsum;
        }
        Ok(Posterior {
            support: Support::Grid {
                lo,
                step,
                log_density,
                density,
                cdf,
                weights,
            },
        })
    }

    /// Degenerate posterior concentrated at one value of `log β`.
    pub fn point_mass(log_beta: f64) -> Self {
        Posterior {
            support: Support::Point(log_beta),
        }
    }

    /// `(abscissa, normalized weight)` pairs. A point mass yields one pair.
    pub fn nodes(&self) -> Vec<(f64, f64)> {
        match &self.support {
            Support::Grid {
                lo, step, weights, ..
            } => weights
                .iter()
                .enumerate()
                .map(|(i, w)| (lo + step * i as f64, *w))
                .collect(),
            Support::Point(b) => alloc::vec![(*b, 1.0)],
        }
    }

    /// Unnormalized log posterior at the grid nodes (empty for a point mass).
    pub fn log_weights(&self) -> &[f64] {
        match &self.support {
            Support::Grid { log_density, .. } => log_density,
            Support::Point(_) => &[],
        }
    }

    /// Normalized density at the grid nodes (empty for a point mass).
    pub fn densities(&self) -> &[f64] {
        match &self.support {
            Support::Grid { density, .. } => density,
            Support::Point(_) => &[],
        }
    }

    /// Grid range `(lo, hi)`; a point mass returns `(b, b)`.
    pub fn span(&self) -> (f64, f64) {
        match &self.support {
            Support::Grid {
                lo, step, density, ..
            } => (*lo, lo + step * (density.len() - 1) as f64),
            Support::Point(b) => (*b, *b),
        }
    }

    /// `P(log β ≤ x)`.
    pub fn cdf(&self, x: f64) -> f64 {
        match &self.support {
            Support::Point(b) => {
                if *b <= x {
                    1.0
                } else {
                    0.0
                }
            }
            Support::Grid { .. } => self.grid_cdf(x),
        }
    }

    /// `P(log β < x)`; differs from [`Posterior::cdf`] only for a point mass.
    pub fn prob_below(&self, x: f64) -> f64 {
        match &self.support {
            Support::Point(b) => {
                if *b < x {
                    1.0
                } else {
                    0.0
                }
            }
            Support::Grid { .. } => self.grid_cdf(x),
        }
    }

    fn grid_cdf(&self, x: f64) -> f64 {
        let Support::Grid {
            lo,
            step,
            density,
            cdf,
            ..
        } = &self.support
        else {
            unreachable!()
        };
        let n = density.len();
        let pos = (x - lo) / step;
        // NaN falls through to the lower branch.
        if !(pos > 0.0) {
            return 0.0;
        }
        if pos >= (n - 1) as f64 {
            return 1.0;
        }
        let cell = (pos as usize).min(n - 2);
        let frac = pos - cell as f64;
        let full = cdf[cell + 1] - cdf[cell];
        let part = cell_integral(density, *step, cell, frac).clamp(0.0, full);
        (cdf[cell] + part).min(1.0)
    }

    /// `E[g(log β)]`.
    pub fn expect(&self, g: impl Fn(f64) -> f64) -> f64 {
        match &self.support {
            Support::Point(b) => g(*b),
            Support::Grid { lo, step, weights, .. } => weights
                .iter()
                .enumerate()
                .map(|(i, w)| w * g(lo + step * i as f64))
                .sum(),
        }
    }

    pub fn mean(&self) -> f64 {
        self.expect(|b| b)
    }

    pub fn sd(&self) -> f64 {
        let m = self.mean();
        libm::sqrt(self.expect(|b| (b - m) * (b - m)).max(0.0))
    }

    /// Quantile of `log β` at probability `p ∈ [0, 1]`.
    pub fn quantile(&self, p: f64) -> f64 {
        match &self.support {
            Support::Point(b) => *b,
            Support::Grid {
                lo,
                step,
                density,
                cdf,
                ..
            } => {
                let n = density.len();
                if p <= 0.0 {
                    return *lo;
                }
                if p >= 1.0 {
                    return lo + step * (n - 1) as f64;
                }
                // first node with cdf >= p
                let k = cdf.partition_point(|c| *c < p).clamp(1, n - 1);
                let cell = k - 1;
                let (mut a, mut b) = (0.0, 1.0);
                for _ in 0..60 {
                    let mid = 0.5 * (a + b);
                    let x = lo + step * (cell as f64 + mid);
                    if self.grid_cdf(x) < p {
                        a = mid;
                    } else {
                        b = mid;
                    }
                }
                lo + step * (cell as f64 + 0.5 * (a + b))
            }
        }
    }
}

/// `∫` over the first `frac` of grid cell `cell` (between nodes `cell` and
/// `cell + 1`). Interior cells integrate the cubic through the four
/// surrounding nodes; the two end cells are linear.
fn cell_integral(values: &[f64], step: f64, cell: usize, frac: f64) -> f64 {
    let n = values.len();
    let s = frac;
    if cell == 0 || cell + 2 >= n {
        let (a, b) = (values[cell], values[cell + 1]);
        return step * (a * s + 0.5 * (b - a) * s * s);
    }
    let (s2, s3, s4) = (s * s, s * s * s, s * s * s * s);
    let w_m1 = -(0.25 * s4 - s3 + s2) / 6.0;
    let w_0 = (0.25 * s4 - 2.0 * s3 / 3.0 - 0.5 * s2 + 2.0 * s) / 2.0;
    let w_1 = -(0.25 * s4 - s3 / 3.0 - s2) / 2.0;
    let w_2 = (0.25 * s4 - 0.5 * s2) / 6.0;
    let v = step
        * (w_m1 * values[cell - 1]
            + w_0 * values[cell]
            + w_1 * values[cell + 1]
            + w_2 * values[cell + 2]);
    v.max(0.0)
}

/// Posterior summary of a combination's cycle-1 DLT probability
/// `P(T ≤ t*) = 1 − exp(−β·AUC_E(t*))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DltProbability {
    pub cycle_auc: f64,
    pub mean: f64,
    pub median: f64,
    pub q025: f64,
    pub q975: f64,
    /// `P(P(T ≤ t*) < 0.20)`
    pub p_underdose: f64,
    /// `P(0.20 ≤ P(T ≤ t*) ≤ 0.40)`
    pub p_target: f64,
    /// `P(P(T ≤ t*) > 0.40)`
    pub p_overdose: f64,
}

/// `log β` at which a combination with cycle area `cycle_auc` reaches
/// cycle-1 DLT probability `p`.
pub fn log_beta_threshold(p: f64, cycle_auc: f64) -> f64 {
    cloglog(p) - libm::log(cycle_auc)
}

/// Posterior mass of the underdosing, targeted and overdosing intervals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntervalProbabilities {
    pub underdose: f64,
    pub target: f64,
    pub overdose: f64,
}

/// Interval probabilities for a combination with cycle area `cycle_auc`,
/// read off the posterior CDF at the mapped `log β` thresholds.
pub fn interval_probabilities(posterior: &Posterior, cycle_auc: f64) -> IntervalProbabilities {
    let lo = log_beta_threshold(TARGET_LOW, cycle_auc);
    let hi = log_beta_threshold(TARGET_HIGH, cycle_auc);
    let underdose = posterior.prob_below(lo);
    let at_or_below_hi = posterior.cdf(hi);
    IntervalProbabilities {
        underdose,
        target: (at_or_below_hi - underdose).max(0.0),
        overdose: 1.0 - at_or_below_hi,
    }
}

/// Push the posterior through `P(T ≤ t*) = 1 − exp(−β·AUC_E(t*))`.
pub fn prob_dlt_cycle1(posterior: &Posterior, combination: &Regimen, params: &PkParams) -> DltProbability {
    let cycle_auc = make_exposure(combination.clone(), *params).cycle_auc();
    prob_dlt_from_auc(posterior, cycle_auc)
}

/// As [`prob_dlt_cycle1`] for a combination whose `AUC_E(t*)` is known.
pub fn prob_dlt_from_auc(posterior: &Posterior, cycle_auc: f64) -> DltProbability {
    let log_auc = libm::log(cycle_auc);
    let to_p = |b: f64| inv_cloglog(b + log_auc);
    let p = interval_probabilities(posterior, cycle_auc);
    DltProbability {
        cycle_auc,
        mean: posterior.expect(to_p),
        median: to_p(posterior.quantile(0.5)),
        q025: to_p(posterior.quantile(0.025)),
        q975: to_p(posterior.quantile(0.975)),
        p_underdose: p.underdose,
        p_target: p.target,
        p_overdose: p.overdose,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenarios::vidaza_params;
    use approx::assert_relative_eq;

    fn prior() -> BetaPrior {
        default_prior(&vidaza_params(), 0.3).unwrap()
    }

    #[test]
    fn default_prior_values() {
        let p = vidaza_params();
        let unit = default_prior(&p, 1.0 - libm::exp(-1.0)).unwrap();
        assert!(unit.mu.abs() < 1e-15);
        let pr = default_prior(&p, 0.3).unwrap();
        assert_relative_eq!(pr.mu, -1.030_930_433_158_722_8, max_relative = 1e-14);
        assert_eq!(pr.sigma, 1.75);
        assert_eq!(default_prior(&p, 0.9).unwrap().sigma, 1.75);
        assert!(default_prior(&p, 0.0).is_err());
        assert!(default_prior(&p, 1.0).is_err());
    }

    #[test]
    fn empty_likelihood_is_zero() {
        assert_eq!(log_likelihood(&[], 0.7, &vidaza_params()), 0.0);
    }

    #[test]
    fn censored_reference_patient() {
        let p = vidaza_params();
        let rec = PatientRecord::censored(p.reference_regimen(), p.t_star());
        for b in [-2.0, 0.0, 1.3] {
            assert_relative_eq!(
                log_likelihood(&[rec.clone()], b, &p),
                -libm::exp(b),
                max_relative = 1e-12
            );
        }
    }

    #[test]
    fn event_where_exposure_is_zero_is_impossible() {
        let p = vidaza_params();
        let late_start = Regimen::new(24.0, alloc::vec![100.0]).unwrap();
        let rec = PatientRecord::dlt(late_start, 50.0);
        assert_eq!(log_likelihood(&[rec.clone()], 0.0, &p), f64::NEG_INFINITY);
        assert_eq!(
            fit_posterior(&[rec], &prior(), &p, 401),
            Err(Error::DataInconsistent)
        );
    }

    #[test]
    fn record_validation() {
        let p = vidaza_params();
        let r = p.reference_regimen();
        assert!(PatientRecord::dlt(r.clone(), 700.0).validate(3, 672.0).is_err());
        assert!(PatientRecord::censored(r.clone(), 0.0).validate(0, 672.0).is_err());
        assert!(PatientRecord::censored(r.clone(), 672.0).validate(0, 672.0).is_ok());
        let err = fit_posterior(&[PatientRecord::dlt(r, 673.0)], &prior(), &p, 401).unwrap_err();
        assert!(matches!(err, Error::InvalidRecord { index: 0, .. }));
    }

    #[test]
    fn grid_size_floor() {
        assert!(fit_posterior(&[], &prior(), &vidaza_params(), 200).is_err());
        assert!(fit_posterior(&[], &prior(), &vidaza_params(), 201).is_ok());
    }

    #[test]
    fn no_data_returns_prior() {
        let pr = prior();
        let post = fit_posterior(&[], &pr, &vidaza_params(), DEFAULT_GRID_SIZE).unwrap();
        assert!((post.mean() - pr.mu).abs() < 1e-3);
        assert!((post.sd() - pr.sigma).abs() < 1e-3);
        let (lo, hi) = post.span();
        assert_relative_eq!(lo, pr.mu - 7.0 * pr.sigma, max_relative = 1e-12);
        assert_relative_eq!(hi, pr.mu + 7.0 * pr.sigma, max_relative = 1e-12);
        // standard normal CDF at +1 sd
        assert!((post.cdf(pr.mu + pr.sigma) - 0.841_344_746_068_542_9).abs() < 1e-9);
        assert!((post.quantile(0.5) - pr.mu).abs() < 1e-9);
    }

    #[test]
    fn cdf_is_monotone_and_bounded() {
        let p = vidaza_params();
        let recs = alloc::vec![
            PatientRecord::dlt(p.reference_regimen(), 30.0),
            PatientRecord::censored(p.reference_regimen(), 672.0),
        ];
        let post = fit_posterior(&recs, &prior(), &p, 401).unwrap();
        let (lo, hi) = post.span();
        let mut last = 0.0;
        for i in 0..=4000 {
            let x = lo - 1.0 + (hi - lo + 2.0) * i as f64 / 4000.0;
            let c = post.cdf(x);
            assert!((0.0..=1.0).contains(&c));
            assert!(c >= last);
            last = c;
        }
        assert_eq!(post.cdf(hi + 1.0), 1.0);
        let wsum: f64 = post.nodes().iter().map(|(_, w)| w).sum();
        assert!((wsum - 1.0).abs() < 1e-12);
    }

    #[test]
    fn point_mass_at_reference() {
        let p = vidaza_params();
        let post = Posterior::point_mass(cloglog(0.3));
        let d = prob_dlt_cycle1(&post, &p.reference_regimen(), &p);
        assert!((d.mean - 0.3).abs() < 1e-15);
        assert_eq!(d.p_target, 1.0);
        assert_eq!(d.p_overdose, 0.0);
    }

    #[test]
    fn point_mass_on_interval_boundaries_counts_as_target() {
        let post = Posterior::point_mass(log_beta_threshold(TARGET_LOW, 2.0));
        let d = prob_dlt_from_auc(&post, 2.0);
        assert_eq!((d.p_underdose, d.p_target, d.p_overdose), (0.0, 1.0, 0.0));
        let post = Posterior::point_mass(log_beta_threshold(TARGET_HIGH, 2.0));
        let d = prob_dlt_from_auc(&post, 2.0);
        assert_eq!((d.p_underdose, d.p_target, d.p_overdose), (0.0, 1.0, 0.0));
    }

    #[test]
    fn thresholds_map_through_cloglog() {
        let auc = 1.7;
        assert_relative_eq!(
            libm::exp(log_beta_threshold(0.2, auc)),
            -libm::log(0.8) / auc,
            max_relative = 1e-14
        );
    }
}
