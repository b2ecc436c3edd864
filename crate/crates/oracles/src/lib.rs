//! Independent numerical references for the test suites.
//!
//! Nothing here calls into `titepk-core`: the ODE integrator works from the
//! differential equations, the sampler from an arbitrary log density.

use rand::Rng;

/// State of the two-compartment pseudo-PK system.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PkState {
    pub central: f64,
    pub effect: f64,
}

fn derivative(k_e: f64, k_eff: f64, s: PkState) -> PkState {
    PkState {
        central: -k_e * s.central,
        effect: k_eff * (s.central - s.effect),
    }
}

fn rk4_step(k_e: f64, k_eff: f64, s: PkState, h: f64) -> PkState {
    let add = |a: PkState, b: PkState, f: f64| PkState {
        central: a.central + f * b.central,
        effect: a.effect + f * b.effect,
    };
    let k1 = derivative(k_e, k_eff, s);
    let k2 = derivative(k_e, k_eff, add(s, k1, h / 2.0));
    let k3 = derivative(k_e, k_eff, add(s, k2, h / 2.0));
    let k4 = derivative(k_e, k_eff, add(s, k3, h));
    PkState {
        central: s.central + h / 6.0 * (k1.central + 2.0 * k2.central + 2.0 * k3.central + k4.central),
        effect: s.effect + h / 6.0 * (k1.effect + 2.0 * k2.effect + 2.0 * k3.effect + k4.effect),
    }
}

/// Integrate `dC/dt = −k_e C`, `dC_eff/dt = k_eff (C − C_eff)` with bolus
/// doses of `dose` added to `C` at `dose_times`, by classical RK4 with steps
/// no longer than `max_step`. Returns `C_eff` at each of `times` (ascending).
pub fn effect_concentration_rk4(
    k_e: f64,
    k_eff: f64,
    dose: f64,
    dose_times: &[f64],
    times: &[f64],
    max_step: f64,
) -> Vec<f64> {
    let mut events: Vec<(f64, bool)> = dose_times.iter().map(|t| (*t, true)).collect();
    events.extend(times.iter().map(|t| (*t, false)));
    // Doses at an output time are applied after the output is recorded: the
    // effect compartment is continuous, so the order does not matter for C_eff.
    events.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

    let mut state = PkState { central: 0.0, effect: 0.0 };
    let mut now = 0.0;
    let mut out = Vec::with_capacity(times.len());
    for (t, is_dose) in events {
        let span = t - now;
        if span > 0.0 {
            let n = (span / max_step).ceil().max(1.0) as usize;
            let h = span / n as f64;
            for _ in 0..n {
                state = rk4_step(k_e, k_eff, state, h);
            }
            now = t;
        }
        if is_dose {
            state.central += dose;
        } else {
            out.push(state.effect);
        }
    }
    out
}

/// Composite trapezoid rule with `n` panels.
pub fn trapezoid(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let inner: f64 = (1..n).map(|i| f(a + h * i as f64)).sum();
    h * (0.5 * f(a) + inner + 0.5 * f(b))
}

/// Composite trapezoid with panel boundaries forced onto `breaks` (kinks of
/// the integrand), each sub-interval using steps no longer than `max_step`.
pub fn trapezoid_with_breaks(f: impl Fn(f64) -> f64, a: f64, b: f64, breaks: &[f64], max_step: f64) -> f64 {
    let mut knots: Vec<f64> = breaks.iter().copied().filter(|t| *t > a && *t < b).collect();
    knots.push(a);
    knots.push(b);
    knots.sort_by(f64::total_cmp);
    knots.dedup();
    knots
        .windows(2)
        .map(|w| {
            let n = ((w[1] - w[0]) / max_step).ceil().max(1.0) as usize;
            trapezoid(&f, w[0], w[1], n)
        })
        .sum()
}

/// Central finite-difference derivative.
pub fn central_difference(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
    (f(x + h) - f(x - h)) / (2.0 * h)
}

/// Output of [`metropolis`].
#[derive(Debug, Clone)]
pub struct Chain {
    pub draws: Vec<f64>,
    pub acceptance_rate: f64,
    pub step: f64,
}

/// Random-walk Metropolis on a scalar. The proposal scale adapts during
/// burn-in toward a 0.44 acceptance rate and is frozen afterwards.
pub fn metropolis<R: Rng>(
    log_density: impl Fn(f64) -> f64,
    init: f64,
    init_step: f64,
    n_draws: usize,
    burn_in: usize,
    rng: &mut R,
) -> Chain {
    let mut x = init;
    let mut lx = log_density(x);
    let mut step = init_step;
    let mut accepted_window = 0usize;
    let mut accepted = 0usize;
    let mut draws = Vec::with_capacity(n_draws);
    for i in 0..burn_in + n_draws {
        let z: f64 = rng.sample(rand_distr_normal());
        let y = x + step * z;
        let ly = log_density(y);
        let accept = ly.is_finite() && (ly >= lx || rng.random::<f64>().ln() < ly - lx);
        if accept {
            x = y;
            lx = ly;
        }
        if i < burn_in {
            accepted_window += usize::from(accept);
            if (i + 1) % 100 == 0 {
                let rate = accepted_window as f64 / 100.0;
                step *= ((rate - 0.44) * 2.0).exp();
                accepted_window = 0;
            }
        } else {
            accepted += usize::from(accept);
            draws.push(x);
        }
    }
    Chain {
        draws,
        acceptance_rate: accepted as f64 / n_draws.max(1) as f64,
        step,
    }
}

/// Standard normal via Box–Muller, kept local so the oracle does not share
/// sampling code with anything under test.
fn rand_distr_normal() -> impl rand::distr::Distribution<f64> {
    struct BoxMuller;
    impl rand::distr::Distribution<f64> for BoxMuller {
        fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
            let u1 = 1.0 - rng.random::<f64>();
            let u2: f64 = rng.random();
            (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
        }
    }
    BoxMuller
}

/// Mean of `g` over the draws and its batch-means standard error.
pub fn batch_mean(draws: &[f64], g: impl Fn(f64) -> f64, n_batches: usize) -> (f64, f64) {
    let values: Vec<f64> = draws.iter().map(|x| g(*x)).collect();
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let size = n / n_batches;
    let batch_means: Vec<f64> = (0..n_batches)
        .map(|b| values[b * size..(b + 1) * size].iter().sum::<f64>() / size as f64)
        .collect();
    let var = batch_means.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / (n_batches - 1) as f64;
    (mean, (var / n_batches as f64).sqrt())
}

/// Integrated autocorrelation time of the draws, from the inflation of the
/// batch-means variance over the i.i.d. variance.
pub fn autocorrelation_time(draws: &[f64], n_batches: usize) -> f64 {
    let n = draws.len() as f64;
    let mean = draws.iter().sum::<f64>() / n;
    let var = draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let (_, se) = batch_mean(draws, |x| x, n_batches);
    (se * se * n / var).max(1.0)
}

/// Standard error of a Monte-Carlo proportion if its true value were `p`,
/// for a chain of `n` draws with autocorrelation time `tau`.
pub fn proportion_se(p: f64, n: usize, tau: f64) -> f64 {
    (p * (1.0 - p) * tau / n as f64).sqrt()
}

/// Two-sided Kolmogorov–Smirnov statistic of `samples` against `cdf`.
pub fn ks_statistic(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, x)| {
            let f = cdf(*x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

/// Binomial standard deviation of a proportion.
pub fn binomial_sd(p: f64, n: usize) -> f64 {
    (p * (1.0 - p) / n as f64).sqrt()
}
