//! Pseudo-pharmacokinetics.
//!
//! Drug is dosed as a bolus into a central compartment with first-order
//! elimination (`k_e`) and equilibrates with an effect compartment at rate
//! `k_eff`. The system is linear, so the effect-compartment concentration of
//! an arbitrary dosing history is the superposition of single-dose responses:
//!
//! ```text
//! C_eff(t) = Σ_{t_i ≤ t} d · k_eff / (k_eff − k_e) · (exp(−k_e (t − t_i)) − exp(−k_eff (t − t_i)))
//! ```
//!
//! The exposure `E(t)` divides `C_eff` by the cycle-1 area of a reference
//! regimen, so that the reference regimen has `AUC_E(t*) = 1`. All times are
//! in hours.

use alloc::vec::Vec;

use crate::error::{Error, Result};

/// 0.975 quantile of the standard normal distribution, as used for the
/// quantile-matched prior on `k_eff`.
pub const Z_975: f64 = 1.959964;

/// Relative gap between `k_eff` and `k_e` below which the equal-rates limit
/// of the single-dose response is used.
const EQUAL_RATES_TOL: f64 = 1e-8;

/// Fixed kinetic constants plus the reference combination that normalizes
/// exposure.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PkParams {
    k_e: f64,
    k_eff: f64,
    t_star: f64,
    ref_dose: f64,
    ref_freq: f64,
    /// `∫₀^{t*} C_eff(t | d*, f*) dt`, computed once at construction.
    norm: f64,
}

impl PkParams {
    pub fn new(k_e: f64, k_eff: f64, t_star: f64, ref_dose: f64, ref_freq: f64) -> Result<Self> {
        positive("k_e", k_e)?;
        positive("k_eff", k_eff)?;
        positive("t_star", t_star)?;
        positive("ref_dose", ref_dose)?;
        positive("ref_freq", ref_freq)?;
        let mut params = PkParams {
            k_e,
            k_eff,
            t_star,
            ref_dose,
            ref_freq,
            norm: 1.0,
        };
        let reference = params.reference_regimen();
        let norm = auc_raw(&reference, &params, t_star);
        if !(norm.is_finite() && norm > 0.0) {
            return Err(Error::arg(
                "ref_dose",
                "reference regimen has no finite positive cycle-1 area",
            ));
        }
        params.norm = norm;
        Ok(params)
    }

    pub fn k_e(&self) -> f64 {
        self.k_e
    }

    pub fn k_eff(&self) -> f64 {
        self.k_eff
    }

    /// Cycle-1 length in hours.
    pub fn t_star(&self) -> f64 {
        self.t_star
    }

    pub fn ref_dose(&self) -> f64 {
        self.ref_dose
    }

    pub fn ref_freq(&self) -> f64 {
        self.ref_freq
    }

    /// Cycle-1 area of the reference regimen's effect-compartment curve.
    pub fn normalization(&self) -> f64 {
        self.norm
    }

    /// Regular schedule with the reference dose and frequency over one cycle.
    pub fn reference_regimen(&self) -> Regimen {
        Regimen::regular_unchecked(self.ref_dose, self.ref_freq, self.t_star)
    }

    /// Copy of these parameters with a different cycle length. The
    /// normalization is recomputed.
    pub fn with_t_star(&self, t_star: f64) -> Result<Self> {
        PkParams::new(self.k_e, self.k_eff, t_star, self.ref_dose, self.ref_freq)
    }
}

fn positive(name: &'static str, value: f64) -> Result<()> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(Error::arg(name, "must be finite and > 0"))
    }
}

/// A dosing history: one dose amount administered at a set of times.
#[derive(Debug, Clone, PartialEq)]
pub struct Regimen {
    dose: f64,
    dose_times: Vec<f64>,
}

impl Regimen {
    /// Explicit dosing history. Times must be finite, non-negative and
    /// strictly increasing.
    pub fn new(dose: f64, dose_times: Vec<f64>) -> Result<Self> {
        positive("dose", dose)?;
        if dose_times.iter().any(|t| !t.is_finite() || *t < 0.0) {
            return Err(Error::arg("dose_times", "times must be finite and >= 0"));
        }
        if dose_times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::arg("dose_times", "times must be strictly increasing"));
        }
        Ok(Regimen { dose, dose_times })
    }

    /// Regular schedule: doses at `0, 1/freq, 2/freq, ...` strictly before
    /// `horizon`.
    pub fn regular(dose: f64, freq: f64, horizon: f64) -> Result<Self> {
        positive("dose", dose)?;
        positive("freq", freq)?;
        if !(horizon.is_finite() && horizon >= 0.0) {
            return Err(Error::arg("horizon", "must be finite and >= 0"));
        }
        Ok(Self::regular_unchecked(dose, freq, horizon))
    }

    fn regular_unchecked(dose: f64, freq: f64, horizon: f64) -> Self {
        let dose_times = (0u32..)
            .map(|i| f64::from(i) / freq)
            .take_while(|t| *t < horizon)
            .collect();
        Regimen { dose, dose_times }
    }

    pub fn dose(&self) -> f64 {
        self.dose
    }

    pub fn dose_times(&self) -> &[f64] {
        &self.dose_times
    }

    /// Same administration times with a different amount.
    pub fn with_dose(&self, dose: f64) -> Result<Self> {
        positive("dose", dose)?;
        Ok(Regimen {
            dose,
            dose_times: self.dose_times.clone(),
        })
    }

    /// Administrations at or before `t`.
    fn given_by(&self, t: f64) -> impl Iterator<Item = f64> + '_ {
        self.dose_times.iter().copied().take_while(move |ti| *ti <= t)
    }
}

/// Effect-compartment response at elapsed time `tau` to a unit bolus.
fn unit_response(k_e: f64, k_eff: f64, tau: f64) -> f64 {
    if (k_eff - k_e).abs() < EQUAL_RATES_TOL * k_e {
        k_e * tau * libm::exp(-k_e * tau)
    } else {
        k_eff / (k_eff - k_e) * (libm::exp(-k_e * tau) - libm::exp(-k_eff * tau))
    }
}

/// `∫₀^tau` of [`unit_response`].
fn unit_area(k_e: f64, k_eff: f64, tau: f64) -> f64 {
    if (k_eff - k_e).abs() < EQUAL_RATES_TOL * k_e {
        let k = k_e;
        (-libm::expm1(-k * tau) - k * tau * libm::exp(-k * tau)) / k
    } else {
        let central = -libm::expm1(-k_e * tau) / k_e;
        let effect = -libm::expm1(-k_eff * tau) / k_eff;
        k_eff / (k_eff - k_e) * (central - effect)
    }
}

fn conc_raw(regimen: &Regimen, params: &PkParams, t: f64) -> f64 {
    let sum: f64 = regimen
        .given_by(t)
        .map(|ti| unit_response(params.k_e, params.k_eff, t - ti))
        .sum();
    // Rounding in the difference of exponentials can dip just below zero.
    (regimen.dose * sum).max(0.0)
}

fn auc_raw(regimen: &Regimen, params: &PkParams, t: f64) -> f64 {
    let sum: f64 = regimen
        .given_by(t)
        .map(|ti| unit_area(params.k_e, params.k_eff, t - ti))
        .sum();
    (regimen.dose * sum).max(0.0)
}

fn non_negative_time(t: f64) -> Result<()> {
    if t.is_finite() && t >= 0.0 {
        Ok(())
    } else {
        Err(Error::arg("t", "time must be finite and >= 0"))
    }
}

/// Effect-compartment concentration at time `t` (hours). Doses after `t`
/// contribute nothing.
pub fn concentration_eff(regimen: &Regimen, params: &PkParams, t: f64) -> Result<f64> {
    non_negative_time(t)?;
    Ok(conc_raw(regimen, params, t))
}

/// Closed-form `∫₀ᵗ C_eff(s) ds`.
pub fn auc_ceff(regimen: &Regimen, params: &PkParams, t: f64) -> Result<f64> {
    non_negative_time(t)?;
    Ok(auc_raw(regimen, params, t))
}

/// Normalized exposure `E(t)` and its running area `AUC_E(t)` for one
/// regimen.
#[derive(Debug, Clone, PartialEq)]
pub struct ExposureProfile {
    regimen: Regimen,
    params: PkParams,
}

pub fn make_exposure(regimen: Regimen, params: PkParams) -> ExposureProfile {
    ExposureProfile { regimen, params }
}

impl ExposureProfile {
    pub fn regimen(&self) -> &Regimen {
        &self.regimen
    }

    pub fn params(&self) -> &PkParams {
        &self.params
    }

    /// `E(t)`; zero before the first administration, including `t < 0`.
    pub fn exposure(&self, t: f64) -> f64 {
        if t < 0.0 {
            return 0.0;
        }
        conc_raw(&self.regimen, &self.params, t) / self.params.norm
    }

    /// `AUC_E(t) = ∫₀ᵗ E(s) ds`; zero for `t <= 0`.
    pub fn auc(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        auc_raw(&self.regimen, &self.params, t) / self.params.norm
    }

    /// `AUC_E(t*)`, the quantity that orders combinations by risk.
    pub fn cycle_auc(&self) -> f64 {
        self.auc(self.params.t_star)
    }

    /// Smallest `t` in `[0, upper]` with `AUC_E(t) >= target`, by bisection
    /// to `tol` hours. Returns `None` when the target is not reached by
    /// `upper`.
    pub fn time_to_auc(&self, target: f64, upper: f64, tol: f64) -> Option<f64> {
        if target <= 0.0 {
            return Some(0.0);
        }
        if self.auc(upper) < target {
            return None;
        }
        let (mut lo, mut hi) = (0.0, upper);
        while hi - lo > tol {
            let mid = 0.5 * (lo + hi);
            if self.auc(mid) < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Some(0.5 * (lo + hi))
    }
}

/// Log-normal distribution parameterized by the mean and standard deviation
/// of the underlying normal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogNormal {
    pub mu: f64,
    pub sigma: f64,
}

impl LogNormal {
    /// Quantile at standard-normal score `z`: `exp(mu + sigma·z)`.
    pub fn quantile_at_z(&self, z: f64) -> f64 {
        libm::exp(self.mu + self.sigma * z)
    }

    pub fn median(&self) -> f64 {
        libm::exp(self.mu)
    }

    pub fn mean(&self) -> f64 {
        libm::exp(self.mu + 0.5 * self.sigma * self.sigma)
    }
}

/// Log-normal whose 0.025 and 0.975 quantiles are `q_low` and `q_high`.
pub fn fit_keff_from_quantiles(q_low: f64, q_high: f64) -> Result<LogNormal> {
    positive("q_low", q_low)?;
    positive("q_high", q_high)?;
    if q_low >= q_high {
        return Err(Error::arg("q_low", "must be strictly below q_high"));
    }
    let (lo, hi) = (libm::log(q_low), libm::log(q_high));
    Ok(LogNormal {
        mu: 0.5 * (lo + hi),
        sigma: (hi - lo) / (2.0 * Z_975),
    })
}
